from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudlead import tcn
from cloudlead.blend import (NwpSourceConfig, blend_evaluate, blend_predict, blend_tcn_config, blend_train,
                             default_suite, linear_blend_baseline, make_windows, synth_nwp, to_power)
from cloudlead.cloudsim import SimConfig, clear_sky_profile, simulate
from cloudlead.core import ConfigError, DataError, hourly_values


def _truth(n_days=40, seed=0):
    ds, _ = simulate(SimConfig(n_days=n_days, step_minutes=15, seed=seed))
    h = hourly_values(ds)[5].reshape(-1)
    day = np.tile(clear_sky_profile(96).reshape(24, -1).mean(axis=1) > 0, n_days)
    return h, day


def test_synth_examples():
    h = np.linspace(0.0, 0.95, 48)
    assert np.array_equal(synth_nwp(h, NwpSourceConfig("id")), h)
    shifted = synth_nwp(h, NwpSourceConfig("b", bias=0.1))
    assert np.allclose(shifted, np.clip(h + 0.1, 0, 1))
    coarse = synth_nwp(h, NwpSourceConfig("c", granularity_h=3))
    assert np.allclose(coarse[::3], h[::3])
    # a linear ramp survives linear up-sampling except past the last coarse point
    assert np.allclose(coarse[:46], h[:46])
    with pytest.raises(DataError):
        synth_nwp(np.array([0.5, 1.5]), NwpSourceConfig("x"))
    with pytest.raises(ConfigError):
        NwpSourceConfig("x", granularity_h=5)


def test_noise_source_rmse():
    rng = np.random.default_rng(0)
    h = rng.uniform(0.2, 0.8, 30 * 24)
    s = synth_nwp(h, NwpSourceConfig("n", noise_sd=0.1, seed=3))
    rmse = blend_evaluate(s, h)["rmse"]
    assert 0.08 <= rmse <= 0.12


def test_synth_is_seeded():
    h = np.full(48, 0.5)
    a = synth_nwp(h, NwpSourceConfig("n", noise_sd=0.1, seed=1))
    assert np.array_equal(a, synth_nwp(h, NwpSourceConfig("n", noise_sd=0.1, seed=1)))
    assert not np.array_equal(a, synth_nwp(h, NwpSourceConfig("n", noise_sd=0.1, seed=2)))


def test_default_suite_is_distinct():
    suite = default_suite(0)
    assert len(suite) == 5 and len({s.name for s in suite}) == 5
    assert {s.granularity_h for s in suite} == {1, 3}
    assert NwpSourceConfig.from_json(suite[2].to_json()) == suite[2]


def test_evaluate_examples():
    t = np.array([0.2, 0.4, 0.6, 0.8])
    assert blend_evaluate(t, t) == {"rmse": 0.0, "bias": 0.0}
    r = blend_evaluate(t + 0.1, t)
    assert r["rmse"] == pytest.approx(0.1) and r["bias"] == pytest.approx(0.1)
    r = blend_evaluate(t + np.array([0.1, -0.1, 0.1, -0.1]), t)
    assert r["rmse"] == pytest.approx(0.1) and r["bias"] == pytest.approx(0.0, abs=1e-15)
    r = blend_evaluate(t + np.array([0.1, 0.0, 0.0, 0.0]), t, mask=[True, False, False, False])
    assert r["rmse"] == pytest.approx(0.1)
    with pytest.raises(DataError):
        blend_evaluate(t, t[:3])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=50))
@settings(max_examples=50)
def test_evaluate_matches_hand_rolled(pairs):
    p = [a for a, _ in pairs]
    t = [b for _, b in pairs]
    n = len(pairs)
    bias = sum(a - b for a, b in pairs) / n
    rmse = (sum((a - b) ** 2 for a, b in pairs) / n) ** 0.5
    r = blend_evaluate(p, t)
    assert r["bias"] == pytest.approx(bias, abs=1e-12)
    assert r["rmse"] == pytest.approx(rmse, abs=1e-12)
    assert r["rmse"] >= abs(r["bias"]) - 1e-12


def test_linear_baseline_examples():
    rng = np.random.default_rng(1)
    h = rng.uniform(0, 1, 2000)
    good = h + rng.normal(0, 0.05, h.size)
    junk = rng.uniform(0, 1, h.size)
    lin = linear_blend_baseline(np.stack([good, junk]), h)
    assert abs(lin.weights[1]) < 0.1
    perfect = linear_blend_baseline(np.stack([h, junk]), h)
    assert blend_evaluate(perfect.predict(np.stack([h, junk])), h)["rmse"] < 0.02
    dup = linear_blend_baseline(np.stack([good, good]), h)
    assert dup.weights[0] == pytest.approx(dup.weights[1], rel=1e-9)
    with pytest.raises(DataError):
        linear_blend_baseline(np.stack([good, good]), h[:10])


def test_make_windows_shapes():
    S = np.arange(2 * 100, dtype=float).reshape(2, 100)
    X, Y = make_windows(S, S[0], length=48, stride=4)
    assert X.shape == (14, 48, 2) and Y.shape == (14, 48, 1)
    assert np.array_equal(X[1, :, 1], S[1, 4:52])
    with pytest.raises(DataError):
        make_windows(S[:, :10])


def test_to_power_scales():
    assert np.allclose(to_power([0.0, 0.5, 1.0], 200.0), [0.0, 100.0, 200.0])


def _fit(sources, h, split, epochs=10):
    cfg = blend_tcn_config(sources.shape[0], seed=0, n_filters=16)
    res = blend_train(sources[:, :split], h[:split], cfg,
                      tcn.TrainConfig(epochs=epochs, learning_rate=3e-3), stride=4)
    return blend_predict(res.model, sources[:, split:])


def test_single_perfect_source_is_learned():
    h, day = _truth()
    split = 30 * 24
    pred = _fit(h[None, :], h, split)
    assert blend_evaluate(pred, h[split:], day[split:])["rmse"] < 0.02


def test_opposite_biases_are_averaged():
    h, day = _truth(seed=1)
    S = np.stack([np.clip(h + 0.1, 0, 1), np.clip(h - 0.1, 0, 1)])
    split = 30 * 24
    pred = _fit(S, h, split)
    m = day[split:]
    blend_rmse = blend_evaluate(pred, h[split:], m)["rmse"]
    single = min(blend_evaluate(s, h[split:], m)["rmse"] for s in S[:, split:])
    assert blend_rmse < single


def test_blend_train_channel_mismatch():
    h, _ = _truth(n_days=3)
    with pytest.raises(ConfigError):
        blend_train(np.stack([h, h]), h, blend_tcn_config(3), tcn.TrainConfig(epochs=1))
