"""Malicious imprint layers: weight/bias construction and bin bookkeeping.

An imprint layer sorts a batch into k equal-mass bins of a measurement value.
Every genuine row carries the same measurement direction; the biases place the
activation thresholds at distribution quantiles. The layer keeps the metadata
a malicious server would keep (which physical row serves which bin, which rows
are decoys) so recovery can undo the row permutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measurement import Measurement
from .numerics import DEFAULT_DTYPE, RngStream

VARIANTS = ("relu", "hard_threshold")
DEFAULT_P_MIN = 1e-6


@dataclass(frozen=True, eq=False)
class BinLayout:
    """k bin boundaries at quantiles of an assumed scalar distribution.

    probs[i] = max(i/k, p_min); boundaries[i] = quantile(probs[i]). Bin i is
    the interval (boundaries[i], boundaries[i+1]); the top bin is open-ended.
    Mass below boundaries[0] (p_min at most) is never recoverable.
    """

    boundaries: np.ndarray  # float64, shape (k,), strictly increasing
    probs: np.ndarray       # float64, shape (k,)
    distribution: object
    p_min: float

    @property
    def k(self) -> int:
        return self.boundaries.shape[0]

    def bin_of(self, values: np.ndarray) -> np.ndarray:
        """Bin index for each measurement value; -1 for the uncovered bottom tail."""
        v = np.asarray(values, dtype=np.float64)
        return np.searchsorted(self.boundaries, v, side="right") - 1


def make_layout(distribution, k: int, *, p_min: float = DEFAULT_P_MIN) -> BinLayout:
    if k < 2:
        raise ValueError(f"need at least 2 bins, got {k}")
    if not (0.0 < p_min < 1.0 / k):
        raise ValueError(f"p_min must lie in (0, 1/k), got {p_min}")
    probs = np.maximum(np.arange(k, dtype=np.float64) / k, p_min)
    boundaries = np.array([distribution.quantile(float(p)) for p in probs])
    if not np.all(np.diff(boundaries) > 0):
        raise ValueError("bin boundaries are not strictly increasing; distribution too degenerate")
    return BinLayout(boundaries=boundaries, probs=probs, distribution=distribution, p_min=p_min)


@dataclass(frozen=True, eq=False)
class ImprintModule:
    """Constructed imprint parameters plus the server-side metadata.

    weight/bias are the initial layer parameters (physical row order, i.e.
    after permutation). row_of_bin[i] is the physical row that serves logical
    bin i, in ascending boundary order. deltas is None for the relu variant.
    """

    variant: str
    weight: np.ndarray       # (K, m)
    bias: np.ndarray         # (K,)
    layout: BinLayout
    measurement: Measurement
    row_of_bin: np.ndarray   # int64, (k,)
    decoy_rows: np.ndarray   # int64, (K - k,)
    deltas: np.ndarray | None = None
    fused_mass: float | None = None  # set by fuse_one_shot

    @property
    def k(self) -> int:
        return self.layout.k

    @property
    def n_rows(self) -> int:
        return self.weight.shape[0]

    @property
    def m(self) -> int:
        return self.weight.shape[1]


def _permute(k: int, decoys: int, perm_stream: RngStream | None) -> np.ndarray:
    total = k + decoys
    if perm_stream is None:
        return np.arange(total)
    return perm_stream.permutation(total)


def build_relu(layout: BinLayout, measurement: Measurement, *, decoys: int = 0,
               perm_stream: RngStream | None = None, decoy_stream: RngStream | None = None,
               dtype=DEFAULT_DTYPE) -> ImprintModule:
    """ReLU imprint: k identical measurement rows, biases at -boundary.

    Row i activates iff h(x) > boundaries[i], so adjacent-row differences
    isolate the examples falling in bin i. Decoy rows (random direction,
    bias drawn inside the boundary range) hide the block from inspection.
    """
    if decoys < 0:
        raise ValueError(f"decoys must be >= 0, got {decoys}")
    if (decoys > 0) and (decoy_stream is None):
        raise ValueError("decoys requested but no decoy_stream given")
    k, m = layout.k, measurement.m
    perm = _permute(k, decoys, perm_stream)
    weight = np.empty((k + decoys, m), dtype=dtype)
    bias = np.empty(k + decoys, dtype=dtype)
    row = measurement.row()
    for i in range(k):
        weight[perm[i]] = row
        bias[perm[i]] = -layout.boundaries[i]
    if decoys:
        lo, hi = layout.boundaries[0], layout.boundaries[-1]
        weight_rows = decoy_stream.derive(0).normal((decoys, m), sd=m ** -0.25)
        bias_vals = decoy_stream.derive(1).uniform(decoys, low=lo, high=hi)
        for j in range(decoys):
            weight[perm[k + j]] = weight_rows[j]
            bias[perm[k + j]] = -bias_vals[j]
    return ImprintModule(
        variant="relu", weight=weight, bias=bias, layout=layout, measurement=measurement,
        row_of_bin=np.asarray(perm[:k], dtype=np.int64),
        decoy_rows=np.asarray(np.sort(perm[k:]), dtype=np.int64),
    )


def build_hard_threshold(layout: BinLayout, measurement: Measurement, *,
                         perm_stream: RngStream | None = None,
                         dtype=DEFAULT_DTYPE) -> ImprintModule:
    """Hard-threshold imprint: g(t) = clamp(t, 0, 1) with per-row scaling.

    Row i is the measurement divided by the bin width delta_i and biased so
    its pre-activation crosses [0, 1] exactly across bin i. One example in
    bin i drives only row i into the linear region, so each row is read out
    on its own (no differencing) -- and the 1/delta_i scaling stiffens the
    row against parameter drift during multi-step local training.
    """
    k, m = layout.k, measurement.m
    bounds = layout.boundaries
    deltas = np.empty(k, dtype=np.float64)
    deltas[:-1] = np.diff(bounds)
    deltas[-1] = deltas[-2]  # top bin is open; reuse the last interior width
    perm = _permute(k, 0, perm_stream)
    weight = np.empty((k, m), dtype=dtype)
    bias = np.empty(k, dtype=dtype)
    row = measurement.row()
    for i in range(k):
        weight[perm[i]] = row / deltas[i]
        bias[perm[i]] = -bounds[i] / deltas[i]
    return ImprintModule(
        variant="hard_threshold", weight=weight, bias=bias, layout=layout,
        measurement=measurement, row_of_bin=np.asarray(perm, dtype=np.int64),
        decoy_rows=np.zeros(0, dtype=np.int64), deltas=deltas,
    )


def fuse_one_shot(distribution, measurement: Measurement, target_mass: float, *,
                  placement: float | None = None, dtype=DEFAULT_DTYPE) -> ImprintModule:
    """Two-row trap for single-shot capture: one interval of mass target_mass.

    The interval is centered in probability by default (placement = lower
    tail mass, defaulting to (1 - target_mass)/2). Recovery succeeds exactly
    when one example of the batch lands in the interval alone.
    """
    p = float(target_mass)
    if not (0.0 < p < 1.0):
        raise ValueError(f"target_mass must lie in (0, 1), got {p}")
    q = (1.0 - p) / 2.0 if placement is None else float(placement)
    if not (0.0 < q and q + p < 1.0):
        raise ValueError(f"placement {q} with mass {p} leaves the interval outside (0, 1)")
    bounds = np.array([distribution.quantile(q), distribution.quantile(q + p)])
    layout = BinLayout(boundaries=bounds, probs=np.array([q, q + p]),
                       distribution=distribution, p_min=q)
    weight = np.empty((2, measurement.m), dtype=dtype)
    bias = np.empty(2, dtype=dtype)
    row = measurement.row()
    weight[0] = row
    weight[1] = row
    bias[0] = -bounds[0]
    bias[1] = -bounds[1]
    return ImprintModule(
        variant="relu", weight=weight, bias=bias, layout=layout, measurement=measurement,
        row_of_bin=np.array([0, 1], dtype=np.int64), decoy_rows=np.zeros(0, dtype=np.int64),
        fused_mass=p,
    )
