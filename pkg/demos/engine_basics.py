"""Tour of the core machinery on a model whose answers are known exactly.

A two-parameter quadratic loss stands in for a real simulator: its minimum,
profiles and confidence sets all have closed forms, so every number printed
here can be checked by hand.
"""

import numpy as np

from glprofile.calibrate import confidence_set, wilks_threshold
from glprofile.core import LossModel, evaluate_profile, fit_mgle, generalised_log_likelihood
from glprofile.space import InterestPartition, ParameterSpace, ProfileGrid
from glprofile.stats import RngStream


def make_bowl_model():
    # loss (t0 - 2)^2 + 3 (t1 + 1)^2: minimum 0 at (2, -1)
    space = ParameterSpace(np.array([-10.0, -10.0]), np.array([10.0, 10.0]), names=("t0", "t1"))
    return LossModel(
        space=space,
        loss=lambda data, theta: float((theta[0] - 2.0) ** 2 + 3.0 * (theta[1] + 1.0) ** 2),
        simulate=lambda theta, size, stream: None,
        size_of=lambda data: 0,
        name="bowl",
    )


def main():
    model = make_bowl_model()

    print("= generalised log likelihood =")
    print("log G(loss=1.5, delta=2) =", generalised_log_likelihood(1.5, 2.0))
    print("scaling is exact:", generalised_log_likelihood(1.5, 2.0) == 2.0 * generalised_log_likelihood(1.5, 1.0))

    print()
    print("= point estimate =")
    mgle = fit_mgle(model, None)
    print(f"minimiser {mgle.point.round(6)} loss {mgle.value:.2e} ({mgle.evals} evaluations)")

    print()
    print("= profile of t0 =")
    grid = ProfileGrid.regular(0.0, 4.0, 9)
    part = InterestPartition(interest=(0,), nuisance=(1,))
    curve = evaluate_profile(model, None, part, grid, mgle=mgle)
    print("phi    profile   exact (phi-2)^2")
    for phi, value in zip(curve.phi_grid, curve.profile_loss):
        print(f"{phi:4.1f}  {value:8.5f}  {(phi - 2.0) ** 2:8.5f}")

    print()
    print("= confidence interval =")
    # with delta = 1 the 95% cut is the classic half-chi-square drop
    tau = wilks_threshold(0.05, 1)
    fine = evaluate_profile(model, None, part, ProfileGrid.regular(0.0, 4.0, 401), mgle=mgle)
    cs = confidence_set(fine, delta_star=1.0, tau_alpha=tau)
    print(f"tau = {tau:.4f}")
    print(f"interval ({cs.interval[0]:.4f}, {cs.interval[1]:.4f}), exact 2 +/- sqrt(tau) = ({2 - np.sqrt(tau):.4f}, {2 + np.sqrt(tau):.4f})")

    print()
    print("= reproducible streams =")
    a = RngStream(42).generator().random(3)
    b = RngStream(42).generator().random(3)
    child = RngStream(42).split(7).generator().random(3)
    print("same seed, same draws:   ", np.array_equal(a, b))
    print("split children differ:   ", not np.array_equal(a, child))


if __name__ == "__main__":
    main()
