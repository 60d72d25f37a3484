"""Render accuracy-versus-privacy figures from a summary CSV.

The only input is the aggregated summary file with columns
``method,M,inv_epsilon,n,mean_accuracy,sd_accuracy``; raw datasets and
experiment internals are never touched.  The figure has one panel per
party count M.  Privacy-sweep methods are drawn as mean curves over
1/epsilon with a +-1 s.d. band; the noise-free baselines appear as
horizontal reference lines (solid for the pooled-data model, dashed for
the mean local model), mirroring the usual figure convention.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

EXPECTED_COLUMNS = ["method", "M", "inv_epsilon", "n",
                    "mean_accuracy", "sd_accuracy"]
REFERENCE_METHODS = ("batch", "indiv")


class SummaryError(Exception):
    """Raised for schema mismatches or empty selections."""


@dataclass(frozen=True)
class SummaryRow:
    method: str
    M: int
    inv_epsilon: float
    n: int
    mean_accuracy: float
    sd_accuracy: float


@dataclass(frozen=True)
class FigureSpec:
    input: str
    output: str
    methods: tuple[str, ...] = ()  # empty means every method present
    M: tuple[int, ...] = ()  # empty means one panel per M present
    y_range: tuple[float, float] | None = None
    title: str = ""


def read_summary(path: str | Path) -> list[SummaryRow]:
    path = Path(path)
    if not path.exists():
        raise SummaryError(f"no such summary file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != EXPECTED_COLUMNS:
        raise SummaryError(
            f"unexpected summary header {rows[0] if rows else '(empty file)'}; "
            f"expected {EXPECTED_COLUMNS}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(EXPECTED_COLUMNS):
            raise SummaryError(f"row {i}: expected {len(EXPECTED_COLUMNS)} fields")
        try:
            out.append(SummaryRow(method=row[0], M=int(row[1]),
                                  inv_epsilon=float(row[2]), n=int(row[3]),
                                  mean_accuracy=float(row[4]),
                                  sd_accuracy=float(row[5])))
        except ValueError as e:
            raise SummaryError(f"row {i}: {e}") from None
    if not out:
        raise SummaryError(f"{path}: no data rows")
    return out


def _series(rows: list[SummaryRow], method: str, M: int):
    pts = sorted((r.inv_epsilon, r.mean_accuracy, r.sd_accuracy)
                 for r in rows if r.method == method and r.M == M)
    return (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]),
            np.array([p[2] for p in pts]))


def render(spec: FigureSpec) -> Path:
    """Draw the figure and write it to spec.output; returns the path."""
    rows = read_summary(spec.input)
    present = sorted({r.method for r in rows})
    wanted = spec.methods or tuple(present)
    missing = [m for m in wanted if m not in present]
    if missing:
        raise SummaryError(f"methods {missing} not present in summary "
                           f"(available: {present})")
    panels = spec.M or tuple(sorted({r.M for r in rows}))
    missing_m = [m for m in panels if m not in {r.M for r in rows}]
    if missing_m:
        raise SummaryError(f"party counts {missing_m} not present in summary")

    sweep = [m for m in wanted if m not in REFERENCE_METHODS]
    fig, axes = plt.subplots(1, len(panels),
                             figsize=(4.2 * len(panels), 3.4),
                             sharey=True, squeeze=False)
    for ax, M in zip(axes[0], panels):
        drew = 0
        for method in sweep:
            x, mean, sd = _series(rows, method, M)
            if x.size == 0:
                continue
            ax.plot(x, mean, marker="o", markersize=3, label=method)
            ax.fill_between(x, mean - sd, mean + sd, alpha=0.2)
            drew += 1
        for method, style in zip(REFERENCE_METHODS, ("-", "--")):
            if method not in wanted:
                continue
            _, mean, _ = _series(rows, method, M)
            if mean.size == 0:
                continue
            ax.axhline(float(mean.mean()), linestyle=style, color="gray",
                       linewidth=1.2, label=method)
            drew += 1
        if drew == 0:
            raise SummaryError(f"nothing to draw for M={M} with methods {wanted}")
        ax.set_title(f"M = {M}")
        ax.set_xlabel(r"$1/\epsilon$")
        if spec.y_range is not None:
            ax.set_ylim(*spec.y_range)
    axes[0][0].set_ylabel("test accuracy")
    axes[0][-1].legend(loc="best", fontsize=8)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    out = Path(spec.output)
    fig.savefig(out, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpens-plot",
        description="Render accuracy-vs-privacy panels from a summary CSV")
    parser.add_argument("input", help="summary CSV path")
    parser.add_argument("output", help="output image path (png, pdf, svg)")
    parser.add_argument("--methods", nargs="+", default=[],
                        help="subset of methods to draw (default: all)")
    parser.add_argument("--M", nargs="+", type=int, default=[],
                        help="subset of party counts to panel (default: all)")
    parser.add_argument("--y-range", nargs=2, type=float, default=None,
                        metavar=("LO", "HI"))
    parser.add_argument("--title", default="")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(input=args.input, output=args.output,
                      methods=tuple(args.methods), M=tuple(args.M),
                      y_range=tuple(args.y_range) if args.y_range else None,
                      title=args.title)
    try:
        out = render(spec)
    except SummaryError as e:
        print(f"summary error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
