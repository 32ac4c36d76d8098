"""Compare freezing modes on example 1 (eps=1e-6): errors of u_hb and of its coarse part u_h.

Shows how the per-element freezing test holds xi near half of xi(u_h), and
how the bubble part dominates the H1 error in either mode.
"""

import numpy as np

from ddfem.analysis import compute_errors, example1
from ddfem.dd import SolverConfig, fixed_point_solve
from ddfem.mesh import generate_uniform_mesh


def main():
    problem = example1(1e-6, 1.0)
    for mode in ("element", "off"):
        config = SolverConfig(freeze=mode, max_iter=30 if mode == "element" else 400)
        print(f"freeze={mode}")
        for n in (16, 32, 64):
            mesh = generate_uniform_mesh(n)
            u, report = fixed_point_solve(problem, mesh, config)
            full = compute_errors(problem, mesh, u, report.coefficients.xi)
            coarse = compute_errors(problem, mesh, u.coarse(), report.coefficients.xi)
            active = report.coefficients.xi > 0
            ratio = np.median(report.xi[active] / report.coefficients.xi[active])
            print(
                f"  n={n:3d} iters={report.iterations:3d} xi_used/xi(u)={ratio:.3f} "
                f"u_hb: l2={full.l2:.4f} h1={full.h1_semi:.4f} star={full.star:.4f} | "
                f"u_h: l2={coarse.l2:.4f} h1={coarse.h1_semi:.4f}"
            )


if __name__ == "__main__":
    main()
