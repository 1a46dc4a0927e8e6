"""Compare the higher-order functional for a thick and a thin fluid.

    python demos/viscosity_contrast.py --resolution 64

Both runs start from the same elongated ellipse at rest; only mu differs.
"""

import argparse

from vesicleflow import experiments as ex
from vesicleflow.energy import ModelParams


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--t-end", type=float, default=0.02)
    args = ap.parse_args()
    rep = ex.exp_large_viscosity(ModelParams(mu=0.5), ModelParams(mu=100.0), t_end=args.t_end,
                                 resolution=args.resolution)
    print(rep.summary_line())
    print(f"  sup A(t): mu=100 {rep.metrics['sup_large']:.4g}, mu=0.5 {rep.metrics['sup_small']:.4g}")
    late = ex.exp_eventual_regularity(ModelParams(mu=0.5), t_end=0.1, resolution=args.resolution)
    print(late.summary_line())
    print(f"  A settles after T0 = {late.metrics.get('T0', float('nan')):.4g}; "
          f"final A = {late.metrics.get('final', float('nan')):.3g}")


if __name__ == "__main__":
    main()
