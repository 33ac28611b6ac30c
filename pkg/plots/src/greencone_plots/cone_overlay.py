"""Phase-plane cone wedge with sampled paratingent directions (circle case)."""

from __future__ import annotations

import argparse
import sys

import matplotlib.pyplot as plt
import numpy as np

from . import FAIL_COLOR, GUIDE_COLOR, PASS_COLOR, SHADE_COLOR
from .io import SchemaError, inputs_checksum, read_ladder, read_verify_report


def plot_cone_overlay(report_path, ladder_path, out_path=None):
    """Wedge between slopes G_- - eps and G_+ + eps at the base point, with
    the report's unit directions colored by their pass flag.  Circle case
    only; two-torus reports are rejected with an explicit message."""
    verify = read_verify_report(report_path)
    if len(verify["base_x"]) != 1:
        raise SchemaError("cone overlay supports the circle case only (n = 1 reports)")
    ladder = read_ladder(ladder_path)
    if ladder["n"] != 1:
        raise SchemaError("ladder is not one dimensional")
    eps = float(verify["epsilon"])
    g_plus = ladder["gt"][-1][0]
    g_minus = ladder["gmt"][-1][0]
    lo = g_minus - eps
    hi = g_plus + eps
    lo_mod = 2 * g_minus - g_plus - eps
    hi_mod = 2 * g_plus - g_minus + eps
    fig, ax = plt.subplots(figsize=(6, 6))
    h = np.linspace(-1.1, 1.1, 201)
    ax.fill_between(h, lo * h, hi * h, color=SHADE_COLOR, alpha=0.55,
                    label=f"cone [{lo:.3f}, {hi:.3f}]")
    ax.plot(h, lo * h, color=GUIDE_COLOR, linewidth=1.0)
    ax.plot(h, hi * h, color=GUIDE_COLOR, linewidth=1.0)
    ax.plot(h, lo_mod * h, color=GUIDE_COLOR, linewidth=0.8, linestyle="--",
            label="modified-Green cone")
    ax.plot(h, hi_mod * h, color=GUIDE_COLOR, linewidth=0.8, linestyle="--")
    theta = np.linspace(0, 2 * np.pi, 181)
    ax.plot(np.cos(theta), np.sin(theta), color=GUIDE_COLOR, linewidth=0.6,
            linestyle=":")
    for rec in verify["directions"]:
        color = PASS_COLOR if rec["pass"] else FAIL_COLOR
        ax.plot([0.0, rec["h"][0]], [0.0, rec["k"][0]], color=color, linewidth=1.4)
    if not verify["directions"]:
        ax.text(0.5, 0.95, "no paratingent directions in the scale window",
                ha="center", va="top", transform=ax.transAxes, color=GUIDE_COLOR)
    ax.set_xlim(-1.2, 1.2)
    ax.set_ylim(-1.2, 1.2)
    ax.set_aspect("equal")
    ax.set_xlabel("h (base direction)")
    ax.set_ylabel("k (fiber direction)")
    base = verify["base_x"][0]
    ax.set_title(f"paratingent directions vs Green cone at x = {base:.4f}")
    ax.legend(fontsize=8, loc="lower right")
    if out_path is not None:
        digest = inputs_checksum(report_path, ladder_path)
        fig.savefig(out_path, metadata={"Description": f"greencone-input-sha256:{digest}"})
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="overlay verification directions on the Green-bundle cone"
    )
    parser.add_argument("report_json")
    parser.add_argument("ladder_csv")
    parser.add_argument("out_image")
    args = parser.parse_args(argv)
    try:
        plot_cone_overlay(args.report_json, args.ladder_csv, args.out_image)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
