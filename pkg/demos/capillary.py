"""Adaptive run of the capillary scenario with VTK output for every level.

Usage: python demos/capillary.py [output_dir]
"""

import sys
from pathlib import Path

from hepatic_lsfem.config import parse_config
from hepatic_lsfem.scenario import run_scenario

HERE = Path(__file__).parent


def main(out="results/capillary"):
    cfg = parse_config(HERE / "configs" / "capillary.ini")
    res = run_scenario(cfg, out)
    print(f"{'level':>5} {'triangles':>9} {'F':>11} {'marked@interface':>16}")
    for lv in res.summary["levels"]:
        print(f"{lv['level']:>5} {lv['triangles']:>9} {lv['functional']:>11.4e} {lv['marked_interface_share']:>16.3f}")
    fin = res.summary["finest"]
    print(f"inflow {fin['inflow']:.3e} m^2/s, outflow {fin['outflow']:.3e} m^2/s")
    print(f"interface flux: fluid side {fin['interface_fluid']:.3e}, porous side {fin['interface_porous']:.3e}")
    print(f"p_F range [{fin['pF_min']:.1f}, {fin['pF_max']:.1f}] Pa; files in {res.output_dir}")


if __name__ == "__main__":
    main(*sys.argv[1:])
