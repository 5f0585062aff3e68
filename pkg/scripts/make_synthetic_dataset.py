#!/usr/bin/env python3
"""Write a synthetic texture dataset to disk in the inspection layout
(train/good, test/good, test/defect, ground_truth/defect) for use with the
`flow2d` CLI's toy path."""

import argparse

from flow2d.synthetic import SyntheticConfig, write_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="dataset root to create")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--image-size", type=int, default=64)
    parser.add_argument("--train-count", type=int, default=200)
    parser.add_argument("--test-normal", type=int, default=50)
    parser.add_argument("--test-defect", type=int, default=50)
    args = parser.parse_args()
    write_dataset(args.out, SyntheticConfig(
        image_size=args.image_size,
        train_count=args.train_count,
        test_normal=args.test_normal,
        test_defect=args.test_defect,
        seed=args.seed,
    ))
    print(f"wrote dataset under {args.out}")


if __name__ == "__main__":
    main()
