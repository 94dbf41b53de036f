#!/usr/bin/env python3
"""Run the 12-ion nearest-neighbor chain scenario and save the result."""

import argparse

import numpy as np

from tweezer_ising import YB171, untweezed_baseline
from tweezer_ising.iofmt import save_result
from tweezer_ising.scenarios import MHZ, nn_chain_12, run_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/nn_chain_12")
    parser.add_argument("--fast", action="store_true")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    scenario = nn_chain_12(fast=args.fast)
    result = run_scenario(scenario, threads=args.threads)
    save_result(result, args.out)
    baseline_eps, baseline_mu, _ = untweezed_baseline(
        scenario.target,
        scenario.trap,
        YB171,
        scenario.space.mu,
        drive_axis=scenario.drive_axis,
        pin_axes=scenario.space.pin_axes,
    )
    print(f"pinned epsilon   {result.epsilon:.4f} at mu/2pi = {result.mu / MHZ:.4f} MHz")
    print(f"tweezer-free     {baseline_eps:.4f} at mu/2pi = {baseline_mu / MHZ:.4f} MHz")
    print(f"improvement      {baseline_eps / result.epsilon:.1f}x")
    print(f"pinning / 2pi MHz: {np.round(result.pin_frequencies / MHZ, 4)}")
    print(f"files in {args.out}")


if __name__ == "__main__":
    main()
