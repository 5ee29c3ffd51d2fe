"""Federated update simulation: single-step gradients, multi-step local
training (parameter deltas), and unweighted secure aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelGraph


@dataclass(eq=False)
class UpdatePayload:
    """What one user ships to the server.

    kind "gradient": tensors are mean gradients over the local batch.
    kind "param_delta": tensors are final minus initial parameters after
    `steps` local SGD steps at rate `lr`.
    """

    kind: str
    tensors: dict
    batch_size: int
    steps: int = 1
    lr: float | None = None

    def scaled(self, factor: float) -> "UpdatePayload":
        return UpdatePayload(kind=self.kind,
                             tensors={k: v * v.dtype.type(factor) for k, v in self.tensors.items()},
                             batch_size=self.batch_size, steps=self.steps, lr=self.lr)


def fed_sgd(model: ModelGraph, x: np.ndarray, labels: np.ndarray) -> tuple[float, UpdatePayload]:
    """One full-batch gradient; the payload is exactly the mean gradient."""
    loss, grads = model.loss_and_grads(x, labels)
    payload = UpdatePayload(kind="gradient", tensors=grads, batch_size=len(labels))
    return loss, payload


def fed_avg(model: ModelGraph, x: np.ndarray, labels: np.ndarray, *, steps: int,
            lr: float, record: bool = False):
    """Sequential local SGD over an equal split of the batch; returns the
    parameter delta. The caller's model is untouched.

    With record=True also returns a per-step log (loss and imprint gradient
    magnitudes) used to bound parameter drift.
    """
    n = len(labels)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if n % steps != 0:
        raise ValueError(f"steps {steps} must divide the batch size {n}")
    if not (lr > 0):
        raise ValueError(f"lr must be positive, got {lr}")
    local = model.copy()
    start = {k: v.copy() for k, v in local.params.items()}
    chunk = n // steps
    log = []
    for s in range(steps):
        sl = slice(s * chunk, (s + 1) * chunk)
        stats = {} if record else None
        loss, grads = local.loss_and_grads(x[sl], labels[sl], stats=stats)
        for key, g in grads.items():
            local.params[key] -= g.dtype.type(lr) * g
        if record:
            entry = {"step": s, "loss": loss}
            if "imprint.weight" in grads:
                entry["imprint_weight_grad_max"] = float(np.abs(grads["imprint.weight"]).max())
                entry["imprint_bias_grad_max"] = float(np.abs(grads["imprint.bias"]).max())
            entry.update(stats)
            log.append(entry)
    delta = {k: local.params[k] - start[k] for k in start}
    payload = UpdatePayload(kind="param_delta", tensors=delta, batch_size=n,
                            steps=steps, lr=lr)
    return (payload, log) if record else payload


def to_gradient_form(payload: UpdatePayload) -> UpdatePayload:
    """Express a payload as an effective mean gradient.

    A parameter delta after `steps` SGD steps equals -lr * (sum of step
    gradients), so delta / (-lr * steps) is the average step gradient -- the
    proxy recovery works from.
    """
    if payload.kind == "gradient":
        return payload
    if payload.lr is None:
        raise ValueError("param_delta payload without lr cannot be converted")
    factor = -1.0 / (payload.lr * payload.steps)
    out = payload.scaled(factor)
    out.kind = "gradient"
    return out


@dataclass(eq=False)
class AggregateResult:
    tensors: dict
    users: int
    total_examples: int
    kind: str
    steps: int
    lr: float | None

    def mean_payload(self) -> UpdatePayload:
        """Per-user average of the aggregate, as a payload."""
        inv = 1.0 / self.users
        return UpdatePayload(kind=self.kind,
                             tensors={k: v * v.dtype.type(inv) for k, v in self.tensors.items()},
                             batch_size=self.total_examples // self.users,
                             steps=self.steps, lr=self.lr)


def secure_aggregate(payloads) -> AggregateResult:
    """Unweighted sum across users, plus the count metadata the server keeps."""
    payloads = list(payloads)
    if not payloads:
        raise ValueError("nothing to aggregate")
    first = payloads[0]
    keys = set(first.tensors)
    for p in payloads[1:]:
        if p.kind != first.kind:
            raise ValueError(f"mixed payload kinds: {first.kind!r} vs {p.kind!r}")
        if set(p.tensors) != keys:
            raise ValueError("payloads carry different parameter sets")
        if (p.steps, p.lr) != (first.steps, first.lr):
            raise ValueError("payloads disagree on steps/lr")
        for k in keys:
            if p.tensors[k].shape != first.tensors[k].shape:
                raise ValueError(f"shape mismatch on {k!r}")
    summed = {k: np.sum([p.tensors[k] for p in payloads], axis=0) for k in keys}
    return AggregateResult(tensors=summed, users=len(payloads),
                           total_examples=sum(p.batch_size for p in payloads),
                           kind=first.kind, steps=first.steps, lr=first.lr)
