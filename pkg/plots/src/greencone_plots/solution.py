"""Weak-KAM solution figures: u and w with the gap shaded and argmin marks."""

from __future__ import annotations

import argparse
import math
import sys

import matplotlib.pyplot as plt
import numpy as np

from . import FAIL_COLOR, MINUS_COLOR, PLUS_COLOR, SHADE_COLOR
from .io import SchemaError, inputs_checksum, read_solution


def _plot_circle(data):
    xs = np.array([row[0] for row in data["x"]])
    u = np.array(data["u"])
    w = np.array(data["w"])
    in_i = np.array(data["in_I"], dtype=bool)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, u, color=PLUS_COLOR, label="u (backward)")
    ax.plot(xs, w, color=MINUS_COLOR, label="w (forward)")
    ax.fill_between(xs, w, u, color=SHADE_COLOR, alpha=0.6, label="gap u - w")
    ax.scatter(xs[in_i], u[in_i], color=FAIL_COLOR, zorder=3, s=18,
               label="argmin set")
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.legend(fontsize=8)
    ax.set_title("weak KAM conjugate pair")
    return fig


def _plot_torus(data):
    m = len(data["u"])
    res = int(round(math.sqrt(m)))
    if res * res != m:
        raise SchemaError("two-torus solution rows do not form a square grid")
    u = np.array(data["u"]).reshape(res, res)
    gap = np.array(data["gap"]).reshape(res, res)
    in_i = np.array(data["in_I"], dtype=bool)
    xs = np.array(data["x"])
    fig, (ax_u, ax_g) = plt.subplots(1, 2, figsize=(9, 4))
    im_u = ax_u.imshow(u.T, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
    fig.colorbar(im_u, ax=ax_u, shrink=0.8)
    ax_u.set_title("u")
    im_g = ax_g.imshow(gap.T, origin="lower", extent=(0, 1, 0, 1), cmap="magma")
    fig.colorbar(im_g, ax=ax_g, shrink=0.8)
    ax_g.scatter(xs[in_i, 0], xs[in_i, 1], color=PLUS_COLOR, s=10, label="argmin set")
    ax_g.set_title("gap u - w with argmin set")
    ax_g.legend(fontsize=8, loc="upper right")
    for ax in (ax_u, ax_g):
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    fig.tight_layout()
    return fig


def plot_solution(csv_path, out_path=None):
    """Solution graph over the circle, or the heatmap variant on the 2-torus."""
    data = read_solution(csv_path)
    fig = _plot_circle(data) if data["n"] == 1 else _plot_torus(data)
    if out_path is not None:
        digest = inputs_checksum(csv_path)
        fig.savefig(out_path, metadata={"Description": f"greencone-input-sha256:{digest}"})
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="plot a weak-KAM solution CSV")
    parser.add_argument("solution_csv")
    parser.add_argument("out_image")
    args = parser.parse_args(argv)
    try:
        plot_solution(args.solution_csv, args.out_image)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
