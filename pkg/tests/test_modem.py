import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polaramc.modem import (NOISELESS, POOL, ChannelParams, ComplexFrame, ModulationType, alphabet, apply_channel,
                            canonical_pool, evolve_channel, generate_frame, read_iq, sample_channel,
                            snr_to_noise_power, write_iq)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
mods = st.sampled_from(POOL)


# ---------------------------------------------------------------------------
# alphabets
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("mod,size", [(ModulationType.QPSK, 4), (ModulationType.PSK8, 8),
                                      (ModulationType.QAM16, 16), (ModulationType.QAM64, 64)])
def test_alphabet_size_and_unit_power(mod, size):
    a = alphabet(mod)
    assert a.size == size
    assert abs(np.mean(np.abs(a) ** 2) - 1.0) < 1e-12


def test_qpsk_points():
    a = alphabet("qpsk")
    expected = {complex(i, q) / math.sqrt(2) for i in (-1, 1) for q in (-1, 1)}
    for p in a:
        assert min(abs(p - e) for e in expected) < 1e-12
    assert np.allclose(np.abs(a), 1.0)


def test_psk_on_unit_circle():
    assert np.allclose(np.abs(alphabet(ModulationType.PSK8)), 1.0, atol=1e-15)


def test_qam16_grid_oracle():
    # mean power of {+-1, +-3}^2 by direct summation is 10
    raw = [complex(i, q) for i in (-3, -1, 1, 3) for q in (-3, -1, 1, 3)]
    power = sum(abs(p) ** 2 for p in raw) / len(raw)
    assert power == 10.0
    expected = sorted((p / math.sqrt(power) for p in raw), key=lambda z: (z.real, z.imag))
    got = sorted(alphabet(ModulationType.QAM16), key=lambda z: (z.real, z.imag))
    assert np.allclose(got, expected, atol=1e-15)


def test_alphabet_is_a_copy():
    a = alphabet(ModulationType.QPSK)
    a[0] = 99
    assert alphabet(ModulationType.QPSK)[0] != 99


def test_parse_and_pool_order():
    assert ModulationType.parse("QPSK") is ModulationType.QPSK
    assert ModulationType.parse("psk8") is ModulationType.PSK8
    assert canonical_pool(["64qam", "qpsk", "qpsk"]) == (ModulationType.QPSK, ModulationType.QAM64)
    with pytest.raises(ValueError):
        ModulationType.parse("bpsk")
    with pytest.raises(ValueError):
        canonical_pool([])


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

def test_empty_frame():
    f = generate_frame(ModulationType.QPSK, 0, 1)
    assert len(f) == 0


def test_negative_length_rejected():
    with pytest.raises(ValueError):
        generate_frame(ModulationType.QPSK, -1, 0)


@settings(max_examples=25, deadline=None)
@given(mods, st.integers(min_value=0, max_value=500), seeds)
def test_generate_frame_deterministic(mod, n, seed):
    a = generate_frame(mod, n, seed).samples
    b = generate_frame(mod, n, seed).samples
    assert a.tobytes() == b.tobytes()
    if n:
        pts = alphabet(mod)
        assert np.min(np.abs(a[:, None] - pts[None, :]), axis=1).max() < 1e-12


def test_qpsk_symbol_frequencies():
    s = generate_frame(ModulationType.QPSK, 100_000, 3).samples
    pts = alphabet(ModulationType.QPSK)
    idx = np.argmin(np.abs(s[:, None] - pts[None, :]), axis=1)
    freq = np.bincount(idx, minlength=4) / s.size
    assert np.all(np.abs(freq - 0.25) <= 0.01)


def test_frames_are_immutable():
    f = generate_frame(ModulationType.QPSK, 4, 0)
    with pytest.raises(ValueError):
        f.samples[0] = 0


# ---------------------------------------------------------------------------
# SNR and channel
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("snr,n0", [(0.0, 1.0), (10.0, 0.1), (-10 * math.log10(2), 2.0)])
def test_snr_to_noise_power(snr, n0):
    assert snr_to_noise_power(snr) == pytest.approx(n0, rel=1e-12)


def test_noiseless_sentinel():
    assert snr_to_noise_power(NOISELESS) == 0.0


@settings(max_examples=25, deadline=None)
@given(mods, seeds)
def test_identity_channel(mod, seed):
    f = generate_frame(mod, 64, seed)
    out = apply_channel(f, ChannelParams(), seed)
    assert np.array_equal(out.samples, f.samples)


def test_channel_direct_evaluation():
    out = apply_channel(ComplexFrame(np.ones(5)), ChannelParams(a=2.0, theta=math.pi))
    assert np.allclose(out.samples, -2.0 + 0j, atol=1e-12)


def test_frequency_offset():
    ch = ChannelParams(f0=0.25)
    out = apply_channel(ComplexFrame(np.ones(4)), ch).samples
    assert np.allclose(out, [1, 1j, -1, -1j], atol=1e-12)


@pytest.mark.parametrize("snr", [0.0, 7.0, -3.0])
def test_noise_power_monte_carlo(snr):
    n = 100_000
    out = apply_channel(ComplexFrame(np.zeros(n)), ChannelParams(snr_db=snr), 11).samples
    n0 = snr_to_noise_power(snr)
    assert abs(np.mean(np.abs(out) ** 2) - n0) <= 0.02 * n0
    # split equally between I and Q
    assert np.var(out.real) == pytest.approx(n0 / 2, rel=0.03)
    assert np.var(out.imag) == pytest.approx(n0 / 2, rel=0.03)


def test_noise_of_signal_frame():
    f = generate_frame(ModulationType.QAM16, 100_000, 2)
    ch = ChannelParams(a=0.7, theta=0.3, snr_db=5.0)
    noisy = apply_channel(f, ch, 9).samples
    clean = apply_channel(f, ChannelParams(a=0.7, theta=0.3)).samples
    assert np.mean(np.abs(noisy - clean) ** 2) == pytest.approx(snr_to_noise_power(5.0), rel=0.02)


def test_channel_deterministic_per_seed():
    f = generate_frame(ModulationType.PSK8, 100, 0)
    ch = ChannelParams(snr_db=3.0)
    assert np.array_equal(apply_channel(f, ch, 5).samples, apply_channel(f, ch, 5).samples)
    assert not np.array_equal(apply_channel(f, ch, 5).samples, apply_channel(f, ch, 6).samples)


def test_channel_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(a=0.0)
    with pytest.raises(ValueError):
        ChannelParams(delta=-0.1)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_sample_channel_ranges(seed):
    ch = sample_channel(seed, 4.0)
    assert 0.2 <= ch.a <= 1.0
    assert 0.0 <= ch.theta < 2 * math.pi
    assert ch.f0 == 0.0 and ch.snr_db == 4.0


# ---------------------------------------------------------------------------
# time variation
# ---------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(-10.0, 10.0), seeds)
def test_evolve_zero_delta_is_identity(a, theta, seed):
    ch = ChannelParams(a=a, theta=theta, f0=0.01, snr_db=3.0, delta=0.0)
    assert evolve_channel(ch, seed) == ch


def test_evolve_examples():
    outs = {round(evolve_channel(ChannelParams(a=0.5, delta=0.3), s).a, 12) for s in range(40)}
    assert outs == {0.35, 0.65}
    thetas = {round(evolve_channel(ChannelParams(theta=math.pi, delta=0.5), s).theta, 12) for s in range(40)}
    assert thetas == {round(math.pi / 2, 12), round(3 * math.pi / 2, 12)}


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(-7.0, 7.0), st.floats(0.0, 0.99), seeds)
def test_evolve_properties(a, theta, delta, seed):
    ch = ChannelParams(a=a, theta=theta, f0=0.02, snr_db=1.5, delta=delta)
    new = evolve_channel(ch, seed)
    assert new.a > 0
    assert math.isclose(new.a, a * (1 + delta)) or math.isclose(new.a, a * (1 - delta))
    assert math.isclose(new.theta, theta * (1 + delta), abs_tol=1e-12) or \
        math.isclose(new.theta, theta * (1 - delta), abs_tol=1e-12)
    assert new.f0 == ch.f0 and new.snr_db == ch.snr_db and new.delta == ch.delta


def test_evolve_signs_independent():
    combos = set()
    for s in range(64):
        new = evolve_channel(ChannelParams(a=1.0, theta=1.0, delta=0.5), s)
        combos.add((new.a > 1, new.theta > 1))
    assert len(combos) == 4


# ---------------------------------------------------------------------------
# IQ interchange file
# ---------------------------------------------------------------------------

def test_iq_round_trip(tmp_path):
    f = apply_channel(generate_frame(ModulationType.QAM64, 257, 4), ChannelParams(snr_db=8.0), 1)
    path = tmp_path / "x.iqb"
    write_iq(path, f)
    back = read_iq(path)
    assert back.label is ModulationType.QAM64
    assert back.channel.snr_db == 8.0
    expected = f.samples.real.astype("<f4").astype(float) + 1j * f.samples.imag.astype("<f4").astype(float)
    assert np.array_equal(back.samples, expected)
    # second write of the read-back frame is byte-identical
    path2 = tmp_path / "y.iqb"
    write_iq(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_iq_header_layout(tmp_path):
    path = tmp_path / "h.iqb"
    write_iq(path, np.array([1 + 2j, -0.5j]), label="qpsk", snr_db=None)
    raw = path.read_bytes()
    header, body = raw.split(b"\n", 1)
    assert header == b'{"version": 1, "n": 2, "label": "qpsk", "snr_db": null}'
    assert np.array_equal(np.frombuffer(body, "<f4"), np.array([1, 2, 0, -0.5], dtype="<f4"))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3, width=32), st.floats(-1e3, 1e3, width=32)), max_size=50))
def test_iq_round_trip_bit_exact(tmp_path_factory, pairs):
    s = np.array([complex(i, q) for i, q in pairs], dtype=complex)
    path = tmp_path_factory.mktemp("iq") / "p.iqb"
    write_iq(path, s)
    assert np.array_equal(read_iq(path).samples, s)


def test_iq_rejects_truncated(tmp_path):
    path = tmp_path / "bad.iqb"
    write_iq(path, np.ones(4))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ValueError):
        read_iq(path)


def test_iq_foreign_label_kept_unlabeled(tmp_path):
    path = tmp_path / "f.iqb"
    write_iq(path, np.ones(2), label="bpsk")
    assert read_iq(path).label is None
