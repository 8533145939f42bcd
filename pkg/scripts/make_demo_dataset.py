#!/usr/bin/env python3
"""Write a synthetic dataset CSV for exercising the command line tools.

Markers are independent standard normals; an optional block of leading
markers carries a common effect. The file loads with
``lasso-gate test --data ...`` directly.
"""

import argparse

import numpy as np

from lasso_gate.data import Dataset, save_dataset_csv


def build(n, p, active, effect, noise_sd, seed):
    gen = np.random.default_rng(seed)
    x = gen.standard_normal((n, p))
    y = noise_sd * gen.standard_normal(n)
    if active:
        y = y + effect * x[:, :active].sum(axis=1)
    return Dataset.from_arrays(y, x)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=40, help="sample size")
    ap.add_argument("--p", type=int, default=200, help="marker count")
    ap.add_argument("--active", type=int, default=0,
                    help="leading markers carrying signal (0 = global null)")
    ap.add_argument("--effect", type=float, default=0.5)
    ap.add_argument("--noise-sd", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="demo_dataset.csv")
    args = ap.parse_args()
    if not 0 <= args.active <= args.p:
        ap.error("--active must lie in [0, p]")
    data = build(args.n, args.p, args.active, args.effect, args.noise_sd, args.seed)
    save_dataset_csv(data, args.out)
    print(f"wrote {args.out}: n={data.n} p={data.p} active={args.active} seed={args.seed}")


if __name__ == "__main__":
    main()
