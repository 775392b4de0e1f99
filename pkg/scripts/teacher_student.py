#!/usr/bin/env python3
"""Teacher-student benchmark: projected SGD on a random cone-member teacher.

Trains from fresh noisy trajectories, records closed-form excess risk per
iteration, and writes the history CSV next to a console summary.

    python scripts/teacher_student.py --samples 4000 --out history.csv
"""

import argparse

import numpy as np

from ldsid.acq import build_polytope
from ldsid.gen import GenSpec, random_acquiescent, stream_trajectories
from ldsid.lds import SystemParams
from ldsid.learn import SgdConfig, history_to_csv, sgd_train
from ldsid.risk import population_risk_closed


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--order", type=int, default=2)
    parser.add_argument("--alpha", type=float, default=0.9)
    parser.add_argument("--sigma", type=float, default=0.1)
    parser.add_argument("--length", type=int, default=128)
    parser.add_argument("--samples", type=int, default=4000)
    parser.add_argument("--eta", type=float, default=0.02)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="history CSV path")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    teacher = random_acquiescent(args.order, args.alpha, rng=rng)
    spec = GenSpec(
        n=args.order, alpha=args.alpha, sigma=args.sigma,
        T=args.length, N=args.samples, seed=args.seed + 1,
    )
    stream = stream_trajectories(teacher, spec, h0_policy=("gaussian", 1.0))
    config = SgdConfig(
        learning_rate=args.eta,
        projection=build_polytope(args.order, args.alpha),
        seed=args.seed,
    )
    init = SystemParams(
        np.zeros(args.order), np.zeros((1, args.order)), np.zeros((1, 1))
    )
    result = sgd_train(stream, config, init, teacher=teacher, sigma=args.sigma)

    floor = args.sigma**2
    initial = population_risk_closed(init, teacher, args.length, args.sigma) - floor
    final = result.history.pop_risk[-1] - floor
    print(f"teacher a = {teacher.a}")
    print(f"initial excess risk  {initial:.6f}")
    print(f"final excess risk    {final:.3e}  ({final / initial:.2e} of initial)")
    print(f"projection active on {int(result.history.projected.sum())} steps")
    if args.out:
        history_to_csv(result.history, args.out)
        print(f"history written to {args.out}")


if __name__ == "__main__":
    main()
