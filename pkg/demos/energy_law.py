"""Refine the time step and watch the discrete energy-law residual shrink.

    python demos/energy_law.py --resolution 32

Prints the residual for each dt and the refinement ratios for both schemes,
then repeats the study with the 2/3 filter switched off.
"""

import argparse

from vesicleflow import experiments as ex


def show(rep):
    print(rep.summary_line())
    for scheme in ("imex_euler", "imex_bdf2"):
        res = [rep.metrics[f"{scheme}_max_residual_dt{i}"] for i in range(3)]
        ratios = [rep.metrics.get(f"{scheme}_ratio{i}", float("nan")) for i in range(2)]
        print(f"  {scheme:11s} residuals " + "  ".join(f"{r:.3e}" for r in res)
              + "   ratios " + "  ".join(f"{r:.2f}" for r in ratios))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--resolution", type=int, default=32)
    args = ap.parse_args()
    show(ex.exp_energy_law(resolution=args.resolution))
    show(ex.exp_energy_law(resolution=args.resolution, dealias=False))


if __name__ == "__main__":
    main()
