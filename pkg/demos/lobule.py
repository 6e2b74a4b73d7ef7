"""Hexagonal lobule: inflow at the portal corners, drainage into the central vein.

Usage: python demos/lobule.py [output_dir]
"""

import sys
from pathlib import Path

from hepatic_lsfem.config import parse_config
from hepatic_lsfem.scenario import run_scenario

HERE = Path(__file__).parent


def main(out="results/lobule"):
    res = run_scenario(parse_config(HERE / "configs" / "lobule.ini"), out)
    for lv in res.summary["levels"]:
        print(f"level {lv['level']}: {lv['triangles']} triangles, F = {lv['functional']:.4e}, "
              f"inflow {lv['inflow']:.3e}, outflow {lv['outflow']:.3e} m^2/s")
    print(f"open {res.output_dir}/level_*.vtk in ParaView")


if __name__ == "__main__":
    main(*sys.argv[1:])
