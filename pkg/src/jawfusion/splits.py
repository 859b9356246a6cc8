"""Segment-level fold assignment shared by the generator and the trainer."""

from __future__ import annotations

import numpy as np


def assign_folds(segment_ids: list[str], activities: dict[str, str], k: int,
                 seed: int) -> dict[str, int]:
    """Assign training segments to k folds.

    Every fold receives exactly one rumination segment (one each, plus
    round-robin extras if more than k exist); fold sizes differ by at most
    one. Raises if fewer rumination segments than folds are available.
    """
    rum = [s for s in segment_ids if activities[s] == "rumination"]
    grz = [s for s in segment_ids if activities[s] != "rumination"]
    if len(rum) < k:
        raise ValueError(f"need at least {k} rumination segments, got {len(rum)}")
    rng = np.random.default_rng(seed)
    rum = [rum[i] for i in rng.permutation(len(rum))]
    grz = [grz[i] for i in rng.permutation(len(grz))]

    fold_of = {}
    sizes = [0] * k
    for i, seg in enumerate(rum):
        fold_of[seg] = i % k
        sizes[i % k] += 1
    total = len(segment_ids)
    cap = -(-total // k)          # ceil
    fold = 0
    for seg in grz:
        while sizes[fold] >= cap:
            fold = (fold + 1) % k
        fold_of[seg] = fold
        sizes[fold] += 1
        fold = (fold + 1) % k
    return fold_of
