import numpy as np
import pytest

from imprintlab.distributions import Normal
from imprintlab.federation import (UpdatePayload, fed_avg, fed_sgd,
                                   secure_aggregate, to_gradient_form)
from imprintlab.imprint import build_relu, make_layout
from imprintlab.measurement import build_measurement
from imprintlab.model import make_imprint_model
from imprintlab.numerics import RngStream


def _model(m=8, k=4, classes=3, dtype=np.float64):
    lay = make_layout(Normal(), k)
    h = build_measurement("mean", m, c0="auto")
    imp = build_relu(lay, h, dtype=dtype)
    return make_imprint_model(imp, label_classes=classes, dtype=dtype)


def test_fed_sgd_payload_is_the_mean_gradient():
    model = _model()
    x = RngStream(20, 0).normal((1, 8))
    labels = np.array([1])
    loss, payload = fed_sgd(model, x, labels)
    ref_loss, grads = model.loss_and_grads(x, labels)
    assert loss == ref_loss
    assert payload.kind == "gradient"
    assert payload.batch_size == 1
    for key, g in grads.items():
        assert np.array_equal(payload.tensors[key], g)


def test_two_users_average_to_the_joint_batch():
    model = _model()
    x = RngStream(20, 1).normal((4, 8))
    labels = np.array([0, 2, 1, 1])
    _, full = fed_sgd(model, x, labels)
    parts = [fed_sgd(model, x[i:i + 2], labels[i:i + 2])[1] for i in (0, 2)]
    mean = secure_aggregate(parts).mean_payload()
    assert mean.batch_size == 2
    for key in full.tensors:
        assert np.allclose(mean.tensors[key], full.tensors[key], rtol=1e-12, atol=1e-15)


def test_sharding_is_invisible_after_aggregation():
    # 10 users x 100 examples vs one user holding all 1000: the averaged
    # aggregate matches the joint gradient up to f32 summation order.
    model = _model(m=16, k=6, classes=4, dtype=np.float32)
    x = RngStream(21, 0).normal((1000, 16), dtype=np.float32)
    labels = RngStream(21, 1).integers(1000, low=0, high=4)
    _, full = fed_sgd(model, x, labels)
    shards = [fed_sgd(model, x[u * 100:(u + 1) * 100], labels[u * 100:(u + 1) * 100])[1]
              for u in range(10)]
    agg = secure_aggregate(shards)
    assert agg.users == 10
    assert agg.total_examples == 1000
    mean = agg.mean_payload()
    for key in full.tensors:
        scale = max(float(np.abs(full.tensors[key]).max()), 1e-12)
        gap = float(np.abs(mean.tensors[key] - full.tensors[key]).max())
        assert gap < 1e-5 * scale


def test_single_local_step_is_a_scaled_gradient():
    # delta = -lr * g holds exactly in real arithmetic; in float64 the
    # parameter subtraction leaves rounding at the params' own ulp scale.
    model = _model()
    x = RngStream(22, 0).normal((6, 8))
    labels = np.array([0, 1, 2, 0, 1, 2])
    lr = 1e-4
    payload = fed_avg(model, x, labels, steps=1, lr=lr)
    assert payload.kind == "param_delta"
    assert payload.steps == 1 and payload.lr == lr
    _, grads = model.loss_and_grads(x, labels)
    for key, g in grads.items():
        ref = -lr * g
        err = float(np.abs(payload.tensors[key] - ref).max())
        assert err <= 1e-10 * max(float(np.abs(ref).max()), 1e-30)


def test_gradient_form_error_shrinks_with_lr():
    # Multi-step deltas converge to the average start-point gradient as lr
    # drops; halving-style comparison: lr=1e-7 must sit ~10x closer than 1e-6.
    model = _model()
    x = RngStream(22, 1).normal((8, 8))
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    chunks = [model.loss_and_grads(x[i:i + 4], labels[i:i + 4])[1] for i in (0, 4)]
    ref = {k: 0.5 * (chunks[0][k] + chunks[1][k]) for k in chunks[0]}

    def err(lr):
        eff = to_gradient_form(fed_avg(model, x, labels, steps=2, lr=lr))
        worst = 0.0
        for key in ref:
            scale = max(float(np.abs(ref[key]).max()), 1e-12)
            worst = max(worst, float(np.abs(eff.tensors[key] - ref[key]).max()) / scale)
        return worst

    coarse, fine = err(1e-6), err(1e-7)
    assert coarse < 1e-3
    assert fine < coarse


def test_recorded_log_bounds_imprint_drift():
    model = _model(m=8, k=4, classes=3)
    x = RngStream(23, 0).normal((8, 8))
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    lr = 0.05
    payload, log = fed_avg(model, x, labels, steps=4, lr=lr, record=True)
    assert len(log) == 4
    assert [e["step"] for e in log] == [0, 1, 2, 3]
    dw = payload.tensors["imprint.weight"]
    db = payload.tensors["imprint.bias"]
    row_drift = float(np.sqrt((dw ** 2).sum(axis=1)).max())
    # each step moves row r by at most lr * sum_i |da_ir| * ||x_i||
    weight_bound = lr * sum(e["da_abs_sum_max"] * e["x_norm_max"] for e in log)
    bias_bound = lr * sum(e["da_abs_sum_max"] for e in log)
    assert row_drift <= weight_bound * (1 + 1e-12)
    assert float(np.abs(db).max()) <= bias_bound * (1 + 1e-12)
    assert all(e["imprint_weight_grad_max"] >= 0 for e in log)
    assert all(np.isfinite(e["loss"]) for e in log)


def test_fed_avg_is_deterministic():
    model = _model()
    x = RngStream(23, 1).normal((4, 8))
    labels = np.array([2, 0, 1, 1])
    a = fed_avg(model, x, labels, steps=2, lr=1e-3)
    b = fed_avg(model, x, labels, steps=2, lr=1e-3)
    for key in a.tensors:
        assert np.array_equal(a.tensors[key], b.tensors[key])


def test_fed_avg_leaves_caller_model_untouched():
    model = _model()
    before = {k: v.copy() for k, v in model.params.items()}
    x = RngStream(23, 2).normal((4, 8))
    fed_avg(model, x, np.array([0, 1, 2, 0]), steps=2, lr=0.1)
    for key, v in model.params.items():
        assert np.array_equal(v, before[key])


def test_fed_avg_validation():
    model = _model()
    x = RngStream(23, 3).normal((4, 8))
    labels = np.array([0, 1, 2, 0])
    with pytest.raises(ValueError, match="steps"):
        fed_avg(model, x, labels, steps=0, lr=0.1)
    with pytest.raises(ValueError, match="divide"):
        fed_avg(model, x, labels, steps=3, lr=0.1)
    with pytest.raises(ValueError, match="lr"):
        fed_avg(model, x, labels, steps=2, lr=0.0)


def test_to_gradient_form_inverts_the_step_scaling():
    model = _model()
    x = RngStream(24, 0).normal((4, 8))
    labels = np.array([1, 1, 0, 2])
    payload = fed_avg(model, x, labels, steps=1, lr=1e-3)
    eff = to_gradient_form(payload)
    assert eff.kind == "gradient"
    _, grads = model.loss_and_grads(x, labels)
    for key, g in grads.items():
        assert np.allclose(eff.tensors[key], g, rtol=1e-9, atol=1e-14)
    # gradient payloads pass through unchanged
    _, direct = fed_sgd(model, x, labels)
    assert to_gradient_form(direct) is direct
    bare = UpdatePayload(kind="param_delta", tensors={}, batch_size=1)
    with pytest.raises(ValueError, match="lr"):
        to_gradient_form(bare)


def test_secure_aggregate_sum_and_cancellation():
    stream = RngStream(25, 0)
    payloads = []
    for u in range(3):
        tensors = {"a": stream.derive(u).normal((2, 3)),
                   "b": stream.derive(u + 8).normal((4,))}
        payloads.append(UpdatePayload(kind="gradient", tensors=tensors, batch_size=5))
    agg = secure_aggregate(payloads)
    for key in ("a", "b"):
        oracle = payloads[0].tensors[key] + payloads[1].tensors[key] + payloads[2].tensors[key]
        assert np.allclose(agg.tensors[key], oracle, rtol=1e-15, atol=1e-15)
    assert agg.total_examples == 15
    solo = secure_aggregate([payloads[0]])
    for key in ("a", "b"):
        assert np.array_equal(solo.tensors[key], payloads[0].tensors[key])
    anti = secure_aggregate([payloads[0], payloads[0].scaled(-1.0)])
    for key in ("a", "b"):
        assert np.all(anti.tensors[key] == 0.0)


def test_secure_aggregate_validation():
    g = UpdatePayload(kind="gradient", tensors={"a": np.ones(3)}, batch_size=1)
    d = UpdatePayload(kind="param_delta", tensors={"a": np.ones(3)}, batch_size=1,
                      steps=2, lr=0.1)
    with pytest.raises(ValueError, match="nothing"):
        secure_aggregate([])
    with pytest.raises(ValueError, match="mixed"):
        secure_aggregate([g, d])
    other = UpdatePayload(kind="gradient", tensors={"b": np.ones(3)}, batch_size=1)
    with pytest.raises(ValueError, match="parameter sets"):
        secure_aggregate([g, other])
    wide = UpdatePayload(kind="gradient", tensors={"a": np.ones(4)}, batch_size=1)
    with pytest.raises(ValueError, match="shape"):
        secure_aggregate([g, wide])
    d2 = UpdatePayload(kind="param_delta", tensors={"a": np.ones(3)}, batch_size=1,
                       steps=3, lr=0.1)
    with pytest.raises(ValueError, match="steps/lr"):
        secure_aggregate([d, d2])
