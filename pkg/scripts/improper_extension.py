#!/usr/bin/env python3
"""Over-parameterization demo on the contrived hard teacher.

The teacher's characteristic polynomial fails the cone membership check at its
own order, yet multiplying in the degree-3 helper makes the product a member
at a shifted radius; training with three extra states recovers the transfer
function. The script prints the membership diagnosis and the transfer error
for the proper and over-parameterized student.

    python scripts/improper_extension.py --order 12 --alpha 0.5
"""

import argparse

import numpy as np

from ldsid.acq import build_polytope, is_acquiescent
from ldsid.gen import GenSpec, artificial_construction, stream_trajectories
from ldsid.lds import SystemParams, to_transfer
from ldsid.learn import SgdConfig, improper_train
from ldsid.poly import coeffs_to_a
from ldsid.risk import transfer_grid_error


def train(teacher, spec, order, alpha, eta, seed):
    config = SgdConfig(
        learning_rate=eta, projection=build_polytope(order, alpha), seed=seed
    )
    stream = stream_trajectories(teacher, spec)
    result = improper_train(stream, config, n_states=order)
    return transfer_grid_error(result.params, teacher)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--order", type=int, default=12)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--extension", type=int, default=3)
    parser.add_argument("--sigma", type=float, default=0.05)
    parser.add_argument("--samples", type=int, default=3000)
    parser.add_argument("--eta", type=float, default=0.02)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    n, alpha = args.order, args.alpha
    p, u = artificial_construction(n, alpha)
    a_true = coeffs_to_a(p)
    radius = (alpha + 1.0) / 2.0
    print(f"teacher order {n}: member at radius 1?     {bool(is_acquiescent(a_true, 1.0))}")
    print(
        f"extended order {n + 3}: member at radius {radius}? "
        f"{bool(is_acquiescent(coeffs_to_a(p * u), radius))}"
    )

    rng = np.random.default_rng(args.seed)
    C = rng.standard_normal((1, n))
    teacher = SystemParams(a_true, C, np.zeros((1, 1)))
    teacher = SystemParams(a_true, C / to_transfer(teacher).h2_norm(), np.zeros((1, 1)))
    spec = GenSpec(
        n=n, alpha=alpha, sigma=args.sigma, T=64, N=args.samples, seed=args.seed + 1
    )

    m = n + args.extension
    err_over = train(teacher, spec, m, radius, args.eta, args.seed)
    print(f"order-{m} student transfer error: {err_over:.4f}")


if __name__ == "__main__":
    main()
