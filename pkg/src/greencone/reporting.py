"""Report and series emission: JSON reports with stable key order, CSV series.

Floats are written with shortest round-trip repr so identical runs produce
byte-identical files; the JSON timing field is the only run-varying entry.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import numpy as np


def inputs_digest(*parts) -> str:
    """Short stable digest of check inputs for the report records."""
    canon = "|".join(repr(p) for p in parts)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _versions() -> dict:
    import scipy

    from . import __version__

    return {
        "greencone": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": ".".join(map(str, sys.version_info[:3])),
    }


def make_report(command: str, config_echo: dict, checks: list[dict],
                extra: dict | None = None, timing: float | None = None) -> dict:
    report = {
        "command": command,
        "config": config_echo,
        "checks": checks,
        "pass": all(c.get("pass", False) for c in checks) if checks else True,
        "timing": {"seconds": timing},
        "versions": _versions(),
    }
    if extra:
        report.update(extra)
    return report


def write_report(report: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def ladder_csv_rows(green_result):
    """Rows (t, G_t entries, G_{-t} entries, residuals) for the ladder CSV."""
    n = green_result.G_plus.n
    header = ["t"]
    header += [f"g_t_{i}{j}" for i in range(n) for j in range(n)]
    header += [f"g_mt_{i}{j}" for i in range(n) for j in range(n)]
    header += ["residual_plus", "residual_minus"]
    rows = []
    for idx, (t, gt, gmt) in enumerate(green_result.ladder):
        res_p = green_result.residual_plus[idx - 1] if idx > 0 else float("nan")
        res_m = green_result.residual_minus[idx - 1] if idx > 0 else float("nan")
        rows.append([t, *gt.a.ravel(), *gmt.a.ravel(), res_p, res_m])
    return header, rows


def solution_csv_rows(pairdata):
    """Rows (coords, u, w, gap, p or blank, in_I) for the solution CSV."""
    from .weak_kam import grid_gradient

    u = pairdata.solution.u
    nodes = u.nodes()
    grads = grid_gradient(u)
    in_i = np.zeros(u.n_nodes, dtype=int)
    in_i[pairdata.I_indices] = 1
    header = [f"x{d+1}" for d in range(u.n)] + ["u", "w", "gap"]
    header += [f"p{d+1}" for d in range(u.n)] + ["in_I"]
    rows = []
    uf, wf, gf = u.flat(), pairdata.w.flat(), pairdata.gap.flat()
    for i in range(u.n_nodes):
        prow = ["" if np.isnan(grads[i, d]) else repr(float(grads[i, d])) for d in range(u.n)]
        rows.append([*nodes[i], uf[i], wf[i], gf[i], *prow, in_i[i]])
    return header, rows


def orbit_csv_rows(rows_array, n):
    header = ["t"] + [f"x{d+1}" for d in range(n)] + [f"p{d+1}" for d in range(n)] + ["H"]
    return header, [list(r) for r in rows_array]


def verify_report_extra(rep) -> dict:
    """JSON-ready payload of a theorem-verification report."""
    return {
        "verify": {
            "base_x": [float(v) for v in rep.base.x],
            "base_p": [float(v) for v in rep.base.p],
            "epsilon": rep.epsilon,
            "window": list(rep.window),
            "n_samples": rep.n_samples,
            "n_directions": rep.n_directions,
            "worst_margin": rep.worst_margin,
            "worst_margin_modified": rep.worst_margin_modified,
            "all_pass": rep.all_pass,
            "all_pass_modified": rep.all_pass_modified,
            "vacuous": rep.vacuous,
            "note": rep.note,
            "adversarial": rep.adversarial,
            "green_T_max": rep.green_T_max,
            "green_converged_at": rep.green_converged_at,
            "directions": [
                {
                    "i": r.i,
                    "j": r.j,
                    "h": r.h,
                    "k": r.k,
                    "margin": r.margin,
                    "pass": r.passed,
                    "margin_modified": r.margin_modified,
                    "pass_modified": r.passed_modified,
                }
                for r in rep.directions
            ],
        }
    }
