#!/usr/bin/env python3
"""Gradient sanity sweep: check the training loss gradient of small random
flows against central finite differences (float64) and print the worst
relative error per configuration."""

import argparse

import numpy as np

from flow2d import Tensor4
from flow2d.autodiff import grad_check
from flow2d.flow import flow_forward_vars, init_flow, nll_loss_vars


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--eps", type=float, default=1e-5)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    for channels, depth, schedule in [(2, 2, "3-3"), (4, 2, "3-1"), (4, 4, "3-3"),
                                      (6, 3, "3-1")]:
        model = init_flow(channels, depth, schedule=schedule,
                          seed=int(rng.integers(2**31)), dtype=np.float64)
        for p in model.parameters():
            p.array[...] = rng.uniform(-0.3, 0.3, size=p.array.shape)
        x = Tensor4(rng.standard_normal((1, channels, 3, 3)))

        def loss_fn(tape):
            z, logdet = flow_forward_vars(model, tape, tape.input(x))
            return nll_loss_vars(tape, z, logdet)

        err = grad_check(loss_fn, model.parameters(), eps=args.eps)
        print(f"c={channels} K={depth} {schedule}: {model.num_params()} params, "
              f"worst rel err {err:.2e}")


if __name__ == "__main__":
    main()
