"""Advection-diffusion boundary value problem on [0, 1].

Solves (L - 2I) u = f with L u = (1/2) u'' + 2 u' and homogeneous Neumann
conditions, where the manufactured solution is u(x) = cos(2 pi x).  The
generator is discretized from a drift-shifted exponential kernel on 1000
equispaced nodes; the zeroth-order shift -2 makes the system strictly
diagonally dominant, so a sparse direct solve applies.

The pointwise operator estimate is accurate in the interior but degrades
to O(1) in a narrow layer at the two boundary nodes; the solution error is
three orders of magnitude smaller than that boundary spike.
"""

import numpy as np

from lokpde import (
    KernelConfig,
    LinearProblem,
    analytic_pair,
    build_operator,
    problem_coefficients,
    sample_points,
    solve_direct,
)


def main():
    problem = analytic_pair("bvp1d")
    cloud = sample_points(problem.manifold, 1000, "uniform_grid")
    coeffs = problem_coefficients(problem, cloud)
    config = KernelConfig(epsilon=2e-6, tilde_epsilon=2e-6, k_neighbors=100)
    generator = build_operator(cloud, coeffs, config, debias=False)

    x = cloud.intrinsic
    u, f, a = problem.u(x), problem.f(x), problem.shift(x)

    operator_error = np.abs(generator.apply(u) + a * u - f)
    print("operator estimate (a + L)u vs f:")
    print(f"  interior max error : {operator_error[50:-50].max():.2e}")
    print(f"  boundary max error : {operator_error.max():.4f}  (node {np.argmax(operator_error)})")

    report = solve_direct(LinearProblem(generator, a, f)).with_errors(u)
    print("direct solve of (a + L) u = f:")
    print(f"  uniform error      : {report.error_inf:.6f}")
    print(f"  rms error          : {report.error_l2:.2e}")
    print(f"  uniform residual   : {report.residual_inf:.2e}")


if __name__ == "__main__":
    main()
