"""Uniform refinement on the manufactured cases.

The smooth Darcy case converges with sqrt(F) = O(h); the polynomial Stokes
and uniform coupled cases lie in the discrete space and give F at round-off.
"""

import numpy as np

from hepatic_lsfem.adaptivity import adaptive_solve
from hepatic_lsfem.config import parse_config
from hepatic_lsfem.scenario import build_problem, eoc


def run(case, levels, subdivisions=2):
    text = f"[scenario]\nkind = manufactured\ncase = {case}\nsubdivisions = {subdivisions}\n"
    return adaptive_solve(build_problem(parse_config(text=text)).problem, levels=levels, uniform=True)


def main():
    hist = run("darcy_trig", 5, subdivisions=4)
    F, dofs = hist.column("functional"), hist.column("n_dofs")
    print("darcy_trig")
    print(f"{'dofs':>8} {'sqrt(F)':>11} {'rate in h':>9}")
    for d, f, r in zip(dofs, F, eoc(F, dofs)):
        # eoc() measures F against h ~ dofs^(-1/2); sqrt(F) has half that rate
        print(f"{d:>8} {np.sqrt(f):>11.4e} {'' if r is None else format(r / 2, '.3f'):>9}")
    for case in ("stokes_polynomial", "coupled_uniform"):
        F = run(case, 3).column("functional")
        print(f"{case}: F per level " + " ".join(f"{f:.1e}" for f in F))


if __name__ == "__main__":
    main()
