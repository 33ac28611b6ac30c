"""Green-bundle convergence ladder: G_t and G_{-t} entries vs t with limits."""

from __future__ import annotations

import argparse
import math
import sys

import matplotlib.pyplot as plt

from . import GUIDE_COLOR, MINUS_COLOR, PLUS_COLOR
from .io import SchemaError, inputs_checksum, read_ladder


def plot_ladder(csv_path, out_path=None):
    """Two panels: matrix entries of both families vs t with limit asymptotes,
    and the consecutive-gap residuals on a log scale.  Returns the Figure."""
    data = read_ladder(csv_path)
    n = data["n"]
    ts = data["t"]
    single = len(ts) == 1
    fig, (ax, ax_res) = plt.subplots(
        2, 1, figsize=(7, 6), sharex=True, height_ratios=[2, 1]
    )
    style = dict(marker="o", linestyle="none" if single else "-")
    style_m = dict(marker="s", linestyle="none" if single else "--")
    for idx in range(n * n):
        i, j = divmod(idx, n)
        suffix = "" if n == 1 else f"[{i}{j}]"
        ax.plot(ts, [row[idx] for row in data["gt"]], color=PLUS_COLOR,
                label=f"G_t{suffix}", **style)
        ax.plot(ts, [row[idx] for row in data["gmt"]], color=MINUS_COLOR,
                label=f"G_-t{suffix}", **style_m)
        ax.axhline(data["gt"][-1][idx], color=PLUS_COLOR, linestyle=":", linewidth=0.8)
        ax.axhline(data["gmt"][-1][idx], color=MINUS_COLOR, linestyle=":", linewidth=0.8)
    ax.set_ylabel("matrix entries")
    ax.legend(loc="center right", fontsize=8)
    ax.set_title("pre-Green families and their limits")
    res_t = ts[1:]
    res_p = [r for r in data["residual_plus"][1:]]
    res_m = [r for r in data["residual_minus"][1:]]
    if res_t and any(not math.isnan(r) for r in res_p):
        ax_res.semilogy(res_t, res_p, marker="o", color=PLUS_COLOR, label="gap G_t")
        ax_res.semilogy(res_t, res_m, marker="s", color=MINUS_COLOR, label="gap G_-t")
        ax_res.legend(fontsize=8)
    else:
        ax_res.text(0.5, 0.5, "single rung: no residuals", ha="center", va="center",
                    transform=ax_res.transAxes, color=GUIDE_COLOR)
    ax_res.set_xlabel("t")
    ax_res.set_ylabel("consecutive gap")
    fig.tight_layout()
    if out_path is not None:
        digest = inputs_checksum(csv_path)
        fig.savefig(out_path, metadata={"Description": f"greencone-input-sha256:{digest}"})
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="plot a Green-bundle ladder CSV")
    parser.add_argument("ladder_csv")
    parser.add_argument("out_image")
    args = parser.parse_args(argv)
    try:
        plot_ladder(args.ladder_csv, args.out_image)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
