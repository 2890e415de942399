import csv
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polaramc.cnn import CnnConfig, build_model, generate_frames
from polaramc.features import GridConfig
from polaramc.modem import POOL, ChannelParams, ComplexFrame, ModulationType, apply_channel, generate_frame
from polaramc.nn import LayerSpec, Network, TrainConfig, cross_entropy_loss
from polaramc.nnce import (CE_OFFLINE, IDENTITY, BUDGET_COLUMNS, CeModel, Compensation, EndToEndObjective,
                           Mechanism, compensate, compensate_grad, estimate, extract_features, overhead_report,
                           retrain_ce_end_to_end, retrain_ce_golden, retrain_cnn_no_ce, stack_samples,
                           train_ce_offline, write_budget_csv)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def test_constant_modulus_features():
    y = 0.7 * np.exp(1j * np.linspace(0, 6, 50))
    m, s = extract_features(y)
    assert m == pytest.approx(0.7) and s == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), seeds)
def test_features_homogeneous(c, seed):
    f = apply_channel(generate_frame(ModulationType.QAM16, 64, seed), ChannelParams(snr_db=5.0), seed)
    m, s = extract_features(f)
    mc, sc = extract_features(f.samples * c)
    assert mc == pytest.approx(c * m, rel=1e-12) and sc == pytest.approx(c * s, rel=1e-9, abs=1e-12)


def test_qam16_mean_amplitude_oracle():
    raw = [complex(i, q) for i in (-3, -1, 1, 3) for q in (-3, -1, 1, 3)]
    scale = math.sqrt(sum(abs(p) ** 2 for p in raw) / 16)
    expected = sum(abs(p) / scale for p in raw) / 16
    m, _ = extract_features(generate_frame(ModulationType.QAM16, 100_000, 1))
    assert abs(m - expected) <= 0.01 * expected


def test_features_empty_frame():
    with pytest.raises(ValueError):
        extract_features(np.zeros(0, complex))


# ---------------------------------------------------------------------------
# compensation
# ---------------------------------------------------------------------------

def test_compensate_identity():
    f = generate_frame(ModulationType.PSK8, 40, 0)
    out = compensate(f, IDENTITY)
    assert isinstance(out, ComplexFrame)
    assert np.array_equal(out.samples, f.samples)


def test_compensate_quarter_turn_example():
    out = compensate(np.array([1 + 0j]), Compensation(2.0, math.pi / 2))
    assert out[0].real == pytest.approx(0.0, abs=1e-15) and out[0].imag == pytest.approx(-2.0)


def test_compensate_matrix_form():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    dr, dt = 1.3, 0.4
    mat = np.array([[dr * math.cos(dt), -dr * math.sin(dt)], [dr * math.sin(dt), dr * math.cos(dt)]])
    iq = np.stack([y.real, y.imag], axis=1) @ mat
    out = compensate(y, Compensation(dr, dt))
    assert np.allclose(out.real, iq[:, 0], atol=1e-14) and np.allclose(out.imag, iq[:, 1], atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(-10.0, 10.0), seeds)
def test_compensate_is_similarity(dr, dt, seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    out = compensate(y, Compensation(dr, dt))
    assert np.allclose(np.abs(out), dr * np.abs(y), rtol=1e-12)
    ang = np.angle(out[0] * np.conj(out[1]))
    assert math.isclose(math.cos(ang), math.cos(np.angle(y[0] * np.conj(y[1]))), abs_tol=1e-9)
    assert math.isclose(math.sin(ang), math.sin(np.angle(y[0] * np.conj(y[1]))), abs_tol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(POOL), st.floats(0.2, 1.0), st.floats(0.0, 2 * math.pi), seeds)
def test_channel_inversion(mod, a, theta, seed):
    s = generate_frame(mod, 100, seed)
    y = apply_channel(s, ChannelParams(a=a, theta=theta))
    back = compensate(y, Compensation(1 / a, theta))
    assert np.max(np.abs(back.samples - s.samples)) <= 1e-10


def test_compensate_grad_fd():
    y = np.array([0.3 - 1.2j, 2.0 + 0.5j, -0.7 + 0.1j])
    comp = Compensation(1.4, 0.8)
    d_r, d_t = compensate_grad(y, comp)
    h = 1e-6
    num_r = (compensate(y, Compensation(1.4 + h, 0.8)) - compensate(y, Compensation(1.4 - h, 0.8))) / (2 * h)
    num_t = (compensate(y, Compensation(1.4, 0.8 + h)) - compensate(y, Compensation(1.4, 0.8 - h))) / (2 * h)
    assert np.allclose(d_r, num_r, rtol=1e-8) and np.allclose(d_t, num_t, rtol=1e-8)


# ---------------------------------------------------------------------------
# the estimator
# ---------------------------------------------------------------------------

def test_ce_parameter_count():
    assert CeModel().param_count() == 2 * 8 + 8 + 8 * 2 + 2 == 42


def test_untrained_model_is_identity():
    f = generate_frame(ModulationType.QPSK, 50, 1)
    assert estimate(CeModel(seed=3), f) == Compensation(1.0, 0.0)


def test_zero_weight_model_outputs_bias():
    m = CeModel()
    state = {k: np.zeros_like(v) for k, v in m.get_state().items()}
    state["2.dense.bias"] = np.array([0.25, -0.4])
    m.set_state(state)
    comp = estimate(m, generate_frame(ModulationType.QAM64, 30, 2))
    assert comp.delta_r == pytest.approx(1.25) and comp.delta_theta == pytest.approx(-0.4)


def test_same_features_same_compensation():
    m = CeModel(seed=1)
    m.set_state({k: np.random.default_rng(0).standard_normal(v.shape) for k, v in m.get_state().items()})
    f = generate_frame(ModulationType.PSK8, 64, 0)
    # conjugation leaves every modulus bit-identical
    assert estimate(m, f) == estimate(m, np.conj(f.samples))
    a, b = estimate(m, f), estimate(m, f.samples * np.exp(0.7j))
    assert a.delta_r == pytest.approx(b.delta_r, rel=1e-12) and a.delta_theta == pytest.approx(b.delta_theta)


def test_offline_identity_channel():
    tx, rx, _ = generate_frames(POOL, 5, n=200, seed=1)
    m = CeModel(seed=0)
    hist = train_ce_offline(m, rx, tx, TrainConfig(batch_size=10, max_epochs=5))
    assert hist.best_loss <= 1e-3
    comp = estimate(m, rx[0])
    assert comp.delta_r == pytest.approx(1.0, abs=1e-3) and comp.delta_theta == pytest.approx(0.0, abs=1e-3)


@pytest.fixture(scope="module")
def fixed_channel_fit():
    ch = ChannelParams(a=0.5, theta=1.0)
    tx, rx, _ = generate_frames(POOL, 10, channel=ch, n=500, seed=3)
    m = CeModel(seed=2)
    x, y = stack_samples(rx), stack_samples(tx)
    pre = float(np.mean(np.abs(x - y)))
    hist = train_ce_offline(m, rx, tx, CE_OFFLINE)
    return m, pre, hist, rx


def test_offline_fixed_channel(fixed_channel_fit):
    m, pre, hist, rx = fixed_channel_fit
    assert hist.best_loss <= 0.1 * pre
    comp = estimate(m, rx[0])
    assert abs(comp.delta_r - 2.0) <= 0.2
    assert abs(comp.delta_theta - 1.0) <= 0.1


def test_offline_deterministic():
    tx, rx, _ = generate_frames(POOL, 3, channel=ChannelParams(a=0.8, theta=0.3), n=100, seed=4)
    cfg = TrainConfig(batch_size=4, max_epochs=10, rng_seed=5)
    a, b = CeModel(seed=1), CeModel(seed=1)
    train_ce_offline(a, rx, tx, cfg)
    train_ce_offline(b, rx, tx, cfg)
    for k, v in a.get_state().items():
        assert v.tobytes() == b.get_state()[k].tobytes()


def test_offline_errors():
    with pytest.raises(ValueError):
        train_ce_offline(CeModel(), [], [])
    f = generate_frame(ModulationType.QPSK, 10, 0)
    with pytest.raises(ValueError):
        train_ce_offline(CeModel(), [f, f], [f])


# ---------------------------------------------------------------------------
# end-to-end chain
# ---------------------------------------------------------------------------

def tiny_cnn(seed=0):
    specs = [LayerSpec("conv2d", {"filters": 3, "kernel_size": 3}), LayerSpec("batchnorm"), LayerSpec("relu"),
             LayerSpec("global_avg_pool"), LayerSpec("dense", {"units": 4}), LayerSpec("softmax")]
    net = Network(specs, (1, 8, 8), seed=seed)
    # settle the batchnorm statistics away from their initial values
    net.forward(np.random.default_rng(seed).random((16, 1, 8, 8)), "train")
    return net


def test_end_to_end_gradient_fd():
    grid = GridConfig(p_r=8, p_theta=8)
    cnn = tiny_cnn(1)
    m = CeModel(seed=4)
    rng = np.random.default_rng(7)
    m.set_state({k: 0.3 * rng.standard_normal(v.shape) for k, v in m.get_state().items()})
    tx, rx, labels = generate_frames(POOL, 1, 10.0, "fading", seed=2, n=16)
    x = stack_samples(rx)
    y = np.eye(4)[labels]
    obj = EndToEndObjective(m, cnn, grid)
    obj.loss_and_grad(x, y, rng)
    analytic = {k: v.copy() for k, v in m.grads.items()}

    def loss():
        return cross_entropy_loss(y, obj.forward(x)[-1])

    h, worst = 1e-5, 0.0
    for name, arr in m.params.items():
        flat = arr.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = loss()
            flat[i] = old - h
            lm = loss()
            flat[i] = old
            num = (lp - lm) / (2 * h)
            ana = analytic[name].reshape(-1)[i]
            if max(abs(num), abs(ana)) > 1e-8:
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana)))
    assert worst <= 1e-3


def test_end_to_end_freezes_cnn():
    grid = GridConfig(p_r=8, p_theta=8)
    cnn = tiny_cnn(2)
    before = {k: v.copy() for k, v in cnn.get_state().items()}
    _, rx, labels = generate_frames(POOL, 2, 10.0, "fading", seed=5, n=32)
    m = CeModel(seed=1)
    ce_before = {k: v.copy() for k, v in m.get_state().items()}
    retrain_ce_end_to_end(m, cnn, rx, labels, grid=grid, train_cfg=TrainConfig(batch_size=4, max_epochs=3))
    for k, v in cnn.get_state().items():
        assert v.tobytes() == before[k].tobytes()
    assert any(v.tobytes() != ce_before[k].tobytes() for k, v in m.get_state().items())


def test_end_to_end_requires_soft_projection():
    _, rx, labels = generate_frames(POOL, 1, 10.0, seed=0, n=32)
    with pytest.raises(ValueError):
        retrain_ce_end_to_end(CeModel(), tiny_cnn(), rx, labels, feature="accumulated_polar")
    with pytest.raises(ValueError):
        retrain_ce_end_to_end(CeModel(), tiny_cnn(), [], np.zeros(0, int))


def test_golden_retrain_leaves_cnn_alone():
    cnn = build_model(CnnConfig(t=0), seed=0)
    before = {k: v.copy() for k, v in cnn.get_state().items()}
    tx, rx, _ = generate_frames(POOL, 1, 10.0, "fading", seed=1, n=100)
    m = CeModel()
    retrain_ce_golden(m, rx, tx, TrainConfig(batch_size=10, max_epochs=3, validation_ratio=0.0))
    for k, v in cnn.get_state().items():
        assert v.tobytes() == before[k].tobytes()


def test_cnn_no_ce_zero_frames_unchanged():
    cnn = build_model(CnnConfig(t=0), seed=0)
    before = {k: v.copy() for k, v in cnn.get_state().items()}
    assert retrain_cnn_no_ce(cnn, [], np.zeros(0, int)) is None
    for k, v in cnn.get_state().items():
        assert v.tobytes() == before[k].tobytes()


def test_cnn_no_ce_slower_than_golden_at_table_sizes():
    cnn = build_model(CnnConfig(t=2), seed=0)
    _, rx, labels = generate_frames(POOL, 100, 20.0, "fading", seed=1)
    t0 = time.perf_counter()
    retrain_cnn_no_ce(cnn, rx, labels, train_cfg=TrainConfig(batch_size=10, max_epochs=5, patience=5))
    cnn_seconds = time.perf_counter() - t0
    tx, rx1, _ = generate_frames(POOL, 1, 20.0, "fading", seed=2)
    t0 = time.perf_counter()
    retrain_ce_golden(CeModel(), rx1, tx)
    golden_seconds = time.perf_counter() - t0
    assert cnn_seconds > golden_seconds


# ---------------------------------------------------------------------------
# overhead accounting
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("mech,frames,bits", [("cnn_no_ce", 400, 800), ("ce_golden", 4, 8000),
                                              ("ce_end_to_end", 40, 80)])
def test_overhead_bits(mech, frames, bits):
    b = overhead_report(mech, frames, n_classes=4, n=1000)
    assert b.transmission_overhead_bits == bits
    assert isinstance(b.transmission_overhead_bits, int)


def test_overhead_errors_and_csv(tmp_path):
    with pytest.raises(ValueError):
        overhead_report("fine_tune_all", 4)
    assert Mechanism.parse("CE_GOLDEN") is Mechanism.CE_GOLDEN
    rows = [overhead_report(m, f, retraining_seconds=0.5) for m, f in (("cnn_no_ce", 400), ("ce_golden", 4))]
    write_budget_csv(tmp_path / "b.csv", rows)
    got = list(csv.DictReader((tmp_path / "b.csv").open()))
    assert list(got[0].keys()) == BUDGET_COLUMNS
    assert got[1]["transmission_overhead_bits"] == "8000" and got[0]["frames_per_class"] == "100"
