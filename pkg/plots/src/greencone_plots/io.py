"""Readers for the documented greencone output formats, with schema errors."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path


class SchemaError(ValueError):
    """Input file does not match the documented CSV/JSON schema."""


def inputs_checksum(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _float(cell: str) -> float:
    return math.nan if cell == "" else float(cell)


def read_ladder(path):
    """Ladder CSV: t, g_t_ij entries, g_mt_ij entries, residual columns."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        gt_cols = [c for c in header if c.startswith("g_t_")]
        gmt_cols = [c for c in header if c.startswith("g_mt_")]
        required = ["t", "residual_plus", "residual_minus"]
        if any(c not in header for c in required) or not gt_cols or not gmt_cols:
            raise SchemaError(f"{path}: missing ladder columns (have {header})")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: ladder has no rows")
    n = int(round(math.sqrt(len(gt_cols))))
    if n * n != len(gt_cols) or len(gmt_cols) != len(gt_cols):
        raise SchemaError(f"{path}: matrix entry columns are not square")
    return {
        "t": [float(r["t"]) for r in rows],
        "gt": [[_float(r[c]) for c in gt_cols] for r in rows],
        "gmt": [[_float(r[c]) for c in gmt_cols] for r in rows],
        "residual_plus": [_float(r["residual_plus"]) for r in rows],
        "residual_minus": [_float(r["residual_minus"]) for r in rows],
        "n": n,
    }


def read_solution(path):
    """Solution CSV: x coords, u, w, gap, p coords (blank at kinks), in_I."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        xcols = [c for c in header if c.startswith("x")]
        pcols = [c for c in header if c.startswith("p")]
        for c in ("u", "w", "gap", "in_I"):
            if c not in header:
                raise SchemaError(f"{path}: missing column {c}")
        if not xcols or len(pcols) != len(xcols):
            raise SchemaError(f"{path}: coordinate columns malformed")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: solution has no rows")
    return {
        "x": [[float(r[c]) for c in xcols] for r in rows],
        "u": [float(r["u"]) for r in rows],
        "w": [float(r["w"]) for r in rows],
        "gap": [float(r["gap"]) for r in rows],
        "p": [[_float(r[c]) for c in pcols] for r in rows],
        "in_I": [int(r["in_I"]) for r in rows],
        "n": len(xcols),
    }


def read_verify_report(path):
    """Verification report JSON: the 'verify' payload with directions."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "verify" not in doc:
        raise SchemaError(f"{path}: no 'verify' section")
    verify = doc["verify"]
    for key in ("base_x", "base_p", "epsilon", "directions"):
        if key not in verify:
            raise SchemaError(f"{path}: verify section missing {key}")
    for rec in verify["directions"]:
        for key in ("h", "k", "margin", "pass"):
            if key not in rec:
                raise SchemaError(f"{path}: direction record missing {key}")
    return verify
