"""Run every benchmark study and print it next to the published reference values.

    python scripts/reproduce_tables.py [--levels 2,4,8,16,32,64] [--outdir results]
"""

import argparse
from pathlib import Path

from ddfem import reference
from ddfem.analysis import run_study
from ddfem.dd import SolverConfig

COLUMNS = ("l2", "h1", "star")


def comparison(table, case, eps, sigma) -> str:
    ref = reference.table(case, eps, sigma)
    lines = ["| mesh | " + " | ".join(f"{c} ours | {c} ref | ratio" for c in COLUMNS) + " |"]
    lines.append("|" + "---|" * (1 + 3 * len(COLUMNS)))
    for row in table.rows:
        cells = [f"{row.n}x{row.n}"]
        for col, got in zip(COLUMNS, row.errors):
            want = ref[col][reference.LEVELS.index(row.n)]
            cells += [f"{got:.4g}" if got is not None else "--", f"{want:.4g}",
                      f"{got / want:.3f}" if got is not None else "--"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--levels", default="2,4,8,16,32,64")
    parser.add_argument("--outdir", type=Path)
    parser.add_argument("--freeze", default="element", choices=["element", "global", "off"])
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    levels = [int(s) for s in args.levels.split(",")]
    config = SolverConfig(freeze=args.freeze)
    if args.outdir:
        args.outdir.mkdir(parents=True, exist_ok=True)
    for case, eps, sigma in reference.TABLES:
        table = run_study(case, eps, sigma, levels, config, workers=args.workers)
        text = table.to_markdown() + "\n" + comparison(table, case, eps, sigma)
        print(text)
        if args.outdir:
            stem = f"{case}_eps{eps:g}_sigma{sigma:g}"
            (args.outdir / f"{stem}.csv").write_text(table.to_csv())
            (args.outdir / f"{stem}.md").write_text(text)


if __name__ == "__main__":
    main()
