"""Difficult-sample selection and consistency between selections."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import MissingError, MMismatch, MTooLarge, UniverseMismatch

DEFAULT_TOP_M = 150

KEYS = {"mirror_error": "e_m", "alignment_error": "e_a", "em": "e_m", "ea": "e_a"}

MODES = {
    "em_vs_ea": ("mirror_error", "alignment_error"),
    "em_vs_em": ("mirror_error", "mirror_error"),
    "ea_vs_ea": ("alignment_error", "alignment_error"),
}


@dataclass(frozen=True)
class SelectionSet:
    method_id: str
    key: str
    sample_ids: tuple  # ordered by decreasing key value

    @property
    def M(self) -> int:
        return len(self.sample_ids)

    def as_set(self) -> frozenset:
        return frozenset(self.sample_ids)


def _key_values(records, key: str) -> list[tuple[str, float]]:
    if isinstance(records, Mapping):
        return [(str(k), float(v)) for k, v in records.items()]
    attr = KEYS[key]
    out = []
    for r in records:
        value = getattr(r, attr) if not isinstance(r, Mapping) else r.get(attr)
        sid = r.sample_id if not isinstance(r, Mapping) else r["sample_id"]
        if value is None:
            raise MissingError(f"sample {sid!r} has no {attr}")
        out.append((str(sid), float(value)))
    return out


def _sample_ids(records) -> frozenset:
    if isinstance(records, Mapping):
        return frozenset(str(k) for k in records)
    return frozenset(str(r["sample_id"] if isinstance(r, Mapping) else r.sample_id) for r in records)


def select_top_m(records, key: str, M: int, method_id: str = "") -> SelectionSet:
    """Pick the ``M`` samples with the largest error.

    ``records`` is a sequence of evaluated records (or dicts with
    ``sample_id``/``e_m``/``e_a``), or a plain ``{sample_id: value}`` mapping.
    Ties at the cut are resolved by ascending sample id.
    """
    if key not in KEYS:
        raise ValueError(f"unknown selection key {key!r}")
    values = _key_values(records, key)
    if M < 0 or M > len(values):
        raise MTooLarge(f"cannot select {M} of {len(values)} samples")
    ordered = sorted(values, key=lambda kv: (-kv[1], kv[0]))
    return SelectionSet(method_id, key, tuple(sid for sid, _ in ordered[:M]))


def consistency(s1: SelectionSet, s2: SelectionSet) -> float:
    """Fraction of shared samples between two equal-size selections."""
    if s1.M != s2.M:
        raise MMismatch(f"selection sizes differ: {s1.M} vs {s2.M}")
    if s1.M == 0:
        raise MMismatch("consistency is undefined for empty selections")
    return len(s1.as_set() & s2.as_set()) / s1.M


def consistency_matrix(methods: Sequence[tuple[str, Sequence]], mode: str, M: int = DEFAULT_TOP_M) -> np.ndarray:
    """Pairwise consistency between per-method selections.

    Entry ``(i, j)`` compares the row key selection of method ``i`` with the
    column key selection of method ``j`` (``em_vs_ea``: mirror error rows
    against alignment error columns).
    """
    if mode not in MODES:
        raise ValueError(f"unknown consistency mode {mode!r}")
    row_key, col_key = MODES[mode]
    universes = [_sample_ids(recs) for _, recs in methods]
    if universes and any(u != universes[0] for u in universes[1:]):
        raise UniverseMismatch("methods were evaluated on different sample sets")
    rows = [select_top_m(recs, row_key, M, mid) for mid, recs in methods]
    cols = rows if col_key == row_key else [select_top_m(recs, col_key, M, mid) for mid, recs in methods]
    n = len(methods)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = consistency(rows[i], cols[j])
    return out
