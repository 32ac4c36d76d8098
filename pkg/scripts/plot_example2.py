"""SVG plots of the coarse-scale solution of example 2 (eps=1e-6, sigma=1) on 8x8 and 16x16 meshes."""

import argparse
from pathlib import Path

from ddfem.analysis import get_case
from ddfem.cli import render_svg
from ddfem.dd import fixed_point_solve
from ddfem.mesh import generate_uniform_mesh


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", type=Path, default=Path("."))
    parser.add_argument("--epsilon", type=float, default=1e-6)
    args = parser.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)
    problem = get_case("example2").problem(args.epsilon, 1.0)
    for n in (8, 16):
        mesh = generate_uniform_mesh(n)
        u, report = fixed_point_solve(problem, mesh)
        path = args.outdir / f"example2_n{n}.svg"
        path.write_text(render_svg(mesh, u.nodal, f"example2  eps={args.epsilon:g}  {n}x{n}"))
        under = max(0.0, -u.nodal.min())
        print(f"{path}: {report.iterations} iterations, min {u.nodal.min():.3e}, max {u.nodal.max():.4f}, "
              f"undershoot {under:.2e}")


if __name__ == "__main__":
    main()
