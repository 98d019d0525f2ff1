from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudlead.cloudsim import SimConfig, grid_sites, simulate
from cloudlead.core import ConfigError, DataError
from cloudlead.detector import (CorrelationTables, DetectorNetwork, PairDayRecord, brute_force_select,
                                build_tables, classify_array, classify_pair_day, detection_rate,
                                network_day_scenario, network_phi, network_scenarios, select_detectors)


def _label(det_cloudy, tgt_cloudy, lag, t_thre):
    # written out case by case as an independent reference
    if not tgt_cloudy:
        return 2 if det_cloudy else 1
    if not det_cloudy:
        return 3
    if lag <= 0:
        return 4
    if lag <= t_thre:
        return 5
    return 6


def random_tables(rng, n_days, n_cand, t_thre=12):
    ids = tuple(f"c{j}" for j in range(n_cand))
    cloudy = rng.random((n_days, n_cand + 1)) < 0.6
    lags = rng.integers(-2 * t_thre, 2 * t_thre + 1, size=(n_days, n_cand))
    pccs = rng.random((n_days, n_cand))
    return CorrelationTables("t", ids, ("t",) + ids, lags, pccs, np.ones_like(cloudy[:, 1:]), cloudy,
                             2 * t_thre)


def test_classify_examples():
    assert classify_pair_day(False, False, 0, 12) == 1
    assert classify_pair_day(True, False, 5, 12) == 2
    assert classify_pair_day(False, True, 5, 12) == 3
    assert classify_pair_day(True, True, 0, 12) == 4
    assert classify_pair_day(True, True, -3, 12) == 4
    assert classify_pair_day(True, True, 1, 12) == 5
    assert classify_pair_day(True, True, 12, 12) == 5
    assert classify_pair_day(True, True, 13, 12) == 6
    with pytest.raises(ConfigError):
        classify_pair_day(True, True, 1, 0)


@given(st.booleans(), st.booleans(), st.integers(-30, 30), st.integers(1, 20))
def test_classify_matches_reference(dc, tc, lag, t_thre):
    assert classify_pair_day(dc, tc, lag, t_thre) == _label(dc, tc, lag, t_thre)
    assert classify_array(dc, tc, np.array(lag), t_thre) == _label(dc, tc, lag, t_thre)


def test_detection_rate_examples():
    assert detection_rate([5, 5, 4, 1, 1]) == pytest.approx(2 / 3)
    assert detection_rate([1, 2, 3, 5]) == pytest.approx(1 / 3)
    with pytest.raises(DataError):
        detection_rate([1, 1])


@given(st.lists(st.integers(1, 6), min_size=1, max_size=80))
def test_detection_rate_recount(labels):
    fives = sum(1 for s in labels if s == 5)
    evaluable = sum(1 for s in labels if s != 1)
    if evaluable == 0:
        with pytest.raises(DataError):
            detection_rate(labels)
    else:
        assert detection_rate(labels) == fives / evaluable
        assert detection_rate(np.array(labels)) == fives / evaluable


def _rec(scenario, lag):
    return PairDayRecord(0, scenario, lag, 0.5, True)


def test_network_day_scenario_rules():
    # member clear everywhere
    assert network_day_scenario([_rec(1, 0), _rec(2, 3)], False) == 2
    assert network_day_scenario([_rec(1, 0), _rec(1, 0)], False) == 1
    assert network_day_scenario([_rec(3, 0)], True) == 3
    # the largest lead represents the network
    recs = [_rec(5, 4), _rec(6, 20), _rec(3, 0)]
    assert network_day_scenario(recs, True) == 6
    assert network_day_scenario(recs, True, rule="precedence") == 5
    assert network_day_scenario([_rec(4, -2), _rec(5, 3)], True) == 5
    with pytest.raises(ConfigError):
        network_day_scenario([], True)
    with pytest.raises(DataError):
        network_day_scenario([_rec(1, 0)], True)


def test_network_scenarios_match_per_day_records():
    rng = np.random.default_rng(7)
    for _ in range(20):
        tb = random_tables(rng, 30, 5)
        members = list(rng.choice(5, size=int(rng.integers(1, 6)), replace=False))
        for rule in ("max_lag", "precedence"):
            vec = network_scenarios(tb, members, 12, rule)
            recs = [tb.records(tb.candidate_ids[m], 12) for m in members]
            for d in range(30):
                day = [r[d] for r in recs]
                assert vec[d] == network_day_scenario(day, bool(tb.target_cloudy[d]), 12, rule)


def _phi_reference(tb, members, t_thre):
    labels = []
    for d in range(tb.lags.shape[0]):
        dc = [bool(tb.candidate_cloudy[d, m]) for m in members]
        if not tb.target_cloudy[d]:
            labels.append(2 if any(dc) else 1)
        elif not any(dc):
            labels.append(3)
        else:
            lag = max(tb.lags[d, m] for m, c in zip(members, dc) if c)
            labels.append(_label(True, True, lag, t_thre))
    den = sum(1 for s in labels if s != 1)
    return sum(1 for s in labels if s == 5) / den if den else 0.0


def test_brute_force_select_matches_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(10):
        tb = random_tables(rng, 25, 5)
        ids, phi = brute_force_select(tb)
        best = max(_phi_reference(tb, list(s), 12)
                   for k in range(1, 6) for s in itertools.combinations(range(5), k))
        assert phi == pytest.approx(best)
        assert network_phi(tb, ids) == pytest.approx(best)


def test_greedy_never_beats_optimum():
    rng = np.random.default_rng(3)
    ratios = []
    for _ in range(25):
        tb = random_tables(rng, 40, int(rng.integers(2, 9)))
        net = select_detectors(tb)
        _, opt = brute_force_select(tb)
        assert net.phi <= opt + 1e-12
        assert net.phi == pytest.approx(network_phi(tb, net.member_ids))
        ratios.append(net.phi / opt if opt > 0 else 1.0)
    assert np.median(ratios) >= 0.95


def test_select_detectors_structure():
    tb = random_tables(np.random.default_rng(5), 40, 6)
    net = select_detectors(tb)
    assert len(net.phi_curve) == 6
    assert sorted(net.curve_ids) == sorted(tb.candidate_ids)
    assert set(net.member_ids) <= set(tb.candidate_ids)
    back = DetectorNetwork.from_json(net.to_json())
    assert back == net


def test_build_tables_on_simulated_data():
    ds, _ = simulate(SimConfig(sites=grid_sites(2, 3), n_days=8, step_minutes=5, cloudy_day_prob=1.0,
                               noise_sd=0.0, coverage_sd=0.0, coverage=0.4, seed=2))
    tb = build_tables(ds, "S01")
    assert tb.lags.shape == (8, 5)
    assert tb.candidate_ids == ("S00", "S02", "S10", "S11", "S12")
    assert np.all(np.abs(tb.lags) <= tb.t_shift)
    # the west neighbour leads the target on most cloudy days
    j = tb.candidate_ids.index("S00")
    both = tb.candidate_cloudy[:, j] & tb.target_cloudy
    assert np.mean(tb.lags[both, j] > 0) > 0.7
    with pytest.raises(ConfigError):
        build_tables(ds, "nope")
