"""Scoring recovered candidates against ground truth.

Matching is an optimal assignment under squared Euclidean distance, so scores
never depend on the order candidates came out in. PSNR uses a fixed sentinel
(300 dB) for exact-zero error; identification accuracy asks whether each
candidate's nearest neighbor in truth-plus-distractors is its matched row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import assignment

PSNR_EXACT_SENTINEL = 300.0
EXACT_REL_TOL = 1e-4


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


def match(candidates: np.ndarray, truth: np.ndarray) -> list[tuple[int, int]]:
    """Pair each candidate with a distinct truth row, minimizing total squared
    distance. Needs len(candidates) <= len(truth)."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if candidates.shape[1] != truth.shape[1]:
        raise ValueError(f"dimension mismatch: {candidates.shape[1]} vs {truth.shape[1]}")
    if candidates.shape[0] == 0:
        return []
    cols = assignment(_pairwise_sq(candidates, truth))
    return [(i, int(cols[i])) for i in range(candidates.shape[0])]


def psnr(a: np.ndarray, b: np.ndarray, *, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; exact match maps to the sentinel."""
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_EXACT_SENTINEL
    return 10.0 * np.log10(peak * peak / mse)


def exact_flags(candidates, truth, matches, *, rel_tol: float = EXACT_REL_TOL) -> list[bool]:
    """Whether each matched candidate reproduces its truth row to rel_tol
    (relative l2)."""
    flags = []
    for ci, ti in matches:
        c = np.asarray(candidates[ci], dtype=np.float64)
        t = np.asarray(truth[ti], dtype=np.float64)
        denom = float(np.linalg.norm(t))
        err = float(np.linalg.norm(c - t))
        flags.append(err <= rel_tol * denom if denom > 0 else err == 0.0)
    return flags


def iip_pixel(candidates, truth, matches, *, pool=None) -> float:
    """Image identification precision: fraction of candidates whose nearest
    neighbor among truth rows plus an optional distractor pool is exactly the
    truth row they were matched to. Unmatched candidates count as misses."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if candidates.shape[0] == 0:
        return 0.0
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    gallery = truth if pool is None else np.vstack([truth, np.atleast_2d(pool)])
    dists = _pairwise_sq(candidates, gallery)
    nearest = np.argmin(dists, axis=1)
    hits = sum(1 for ci, ti in matches if nearest[ci] == ti)
    return hits / candidates.shape[0]


def exact_count(candidates, truth, matches, *, rel_tol: float = EXACT_REL_TOL) -> int:
    return int(sum(exact_flags(candidates, truth, matches, rel_tol=rel_tol)))


@dataclass
class ScoreReport:
    n_candidates: int
    n_truth: int
    exact_count: int
    exact_fraction: float
    mean_psnr: float
    iip: float
    matching: list = field(default_factory=list)    # (candidate, truth) index pairs
    per_sample: list = field(default_factory=list)  # dicts: candidate/truth/psnr/exact

    def as_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates, "n_truth": self.n_truth,
            "exact_count": self.exact_count, "exact_fraction": self.exact_fraction,
            "mean_psnr": self.mean_psnr, "iip": self.iip,
            "matching": [list(p) for p in self.matching],
            "per_sample": self.per_sample,
        }


def score(candidates, truth, *, pool=None, peak: float = 1.0,
          rel_tol: float = EXACT_REL_TOL, psnr_transform=None) -> ScoreReport:
    """One-stop scoring: match, exactness, PSNR over matched pairs, IIP.

    psnr_transform optionally maps vectors into the space PSNR is quoted in
    (e.g. [0,1] scaling); matching, exactness, and IIP always use the raw
    vectors.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    matches = match(candidates, truth)
    flags = exact_flags(candidates, truth, matches, rel_tol=rel_tol)
    tf = psnr_transform if psnr_transform is not None else (lambda v: v)
    psnrs = [psnr(tf(candidates[ci]), tf(truth[ti]), peak=peak) for ci, ti in matches]
    per_sample = [
        {"candidate": int(ci), "truth": int(ti), "psnr": float(p), "exact": bool(fl)}
        for (ci, ti), p, fl in zip(matches, psnrs, flags)
    ]
    return ScoreReport(
        n_candidates=int(candidates.shape[0]),
        n_truth=int(truth.shape[0]),
        exact_count=int(sum(flags)),
        exact_fraction=float(sum(flags)) / max(1, candidates.shape[0]),
        mean_psnr=float(np.mean(psnrs)) if psnrs else float("nan"),
        iip=iip_pixel(candidates, truth, matches, pool=pool),
        matching=list(matches),
        per_sample=per_sample,
    )
