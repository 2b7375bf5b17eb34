"""Deterministic rendering primitives shared by every writer."""

from __future__ import annotations

import json
from typing import Any


def format_decimal(x: float) -> str:
    """Render a number with at most 4 fractional digits, no exponent.

    Rounding is round-half-even (IEEE formatting); trailing zeros and a bare
    trailing dot are stripped, so 100.0 -> "100" and 0.87 -> "0.87". Values
    already on the 1e-4 grid round-trip exactly through float().
    """
    s = f"{x:.4f}"
    s = s.rstrip("0").rstrip(".")
    if s in ("-0", ""):
        return "0"
    return s


def canonical_json(obj: Any) -> bytes:
    """Canonical JSON: sorted keys, compact separators, newline-terminated."""
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")
