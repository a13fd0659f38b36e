"""Does a calibrated 90% interval cover 90% of the time? Count model check.

Calibrates the loss exponent once on a pilot dataset, then simulates many
fresh datasets at the same truth and counts how often the calibrated
profile set contains it, across several confidence levels. Desk-scale
defaults keep this to a few minutes; the acceptance tests run the full
version.
"""

import argparse

import numpy as np

from glprofile.calibrate import CalibrationConfig, calibrate_delta, validate_coverage
from glprofile.core import fit_mgle
from glprofile.models.cmp import make_cmp_model
from glprofile.space import InterestPartition, ProfileGrid
from glprofile.stats import RngStream

TRUTH = np.array([4.0, 2.0])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=1000, help="counts per dataset")
    parser.add_argument("--K", type=int, default=60, help="calibration bootstrap size")
    parser.add_argument("--B", type=int, default=100, help="coverage replicates")
    args = parser.parse_args()

    model = make_cmp_model(n=args.n)
    data = model.simulate(TRUTH, args.n, RngStream(1))
    mgle = fit_mgle(model, data)
    print(f"pilot dataset: n={args.n}, fit {mgle.point.round(4).tolist()}")

    part = InterestPartition((0,), (1,))
    grid = ProfileGrid.regular(1.0, 20.0, 100)
    cal = calibrate_delta(
        model, data, part, grid,
        CalibrationConfig(K=args.K, alpha=0.05, delta_step=0.01, seed=0),
        mgle=mgle,
    )
    print(f"calibrated delta* = {cal.delta_star:.2f} "
          f"(bootstrap coverage {cal.achieved_coverage:.3f} at 95%)")

    alphas = (0.05, 0.1, 0.2, 0.32, 0.5)
    report = validate_coverage(model, TRUTH, part, cal.delta_star, alphas, args.B, seed=5)
    print(f"\ncoverage of the lambda interval over {report.b_effective} fresh datasets:")
    print("alpha   nominal   observed")
    for alpha, observed in zip(report.alphas, report.observed):
        print(f"{alpha:5.2f}   {1 - alpha:7.2f}   {observed:8.3f}")
    worst = float(np.max(np.abs(report.observed - (1.0 - np.asarray(alphas)))))
    print(f"\nlargest deviation from nominal: {worst:.3f}")
    print(f"(binomial noise alone gives about {2 * 0.5 / np.sqrt(args.B):.3f} at B={args.B})")


if __name__ == "__main__":
    main()
