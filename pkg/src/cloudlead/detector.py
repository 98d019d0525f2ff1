"""Scenario classification, successful detection rate and detector-network selection.

Day labels for a detector/target pair:

1. both clear
2. only the detector cloudy
3. only the target cloudy
4. both cloudy, detector does not lead (lag <= 0)
5. both cloudy, detector leads by 1..t_thre steps (a successful detection)
6. both cloudy, detector leads by more than t_thre steps

The detection rate is the share of label-5 days among days not labelled 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import ConfigError, Dataset, DataError
from .events import DEFAULT_DX, LagCorrResult, event_values, lagged_correlation_many

DEFAULT_T_THRE = 12
SCENARIOS = (1, 2, 3, 4, 5, 6)
EVALUABLE = (2, 3, 4, 5, 6)
RULES = ("max_lag", "precedence")
# "precedence" rule: target clear -> 2 beats 1; target cloudy -> 5 > 6 > 4 > 3
_RANK = {1: 0, 3: 0, 2: 1, 4: 1, 6: 2, 5: 3}


def default_t_shift(t_thre: int) -> int:
    return 2 * t_thre


@dataclass(frozen=True)
class PairDayRecord:
    day: int
    scenario: int
    delta_t_max: int
    pcc_max: float
    defined: bool


@dataclass(frozen=True)
class CorrelationTables:
    """Per-day best lags and correlations of every candidate against one target.

    ``lags``, ``pccs`` and ``defined`` are (D, N-1) in ``candidate_ids`` order;
    ``cloudy`` is (D, N) in ``site_ids`` order.
    """

    target_id: str
    candidate_ids: tuple[str, ...]
    site_ids: tuple[str, ...]
    lags: np.ndarray
    pccs: np.ndarray
    defined: np.ndarray
    cloudy: np.ndarray
    t_shift: int
    dx: float = DEFAULT_DX

    def __post_init__(self):
        D, J = self.lags.shape
        if self.pccs.shape != (D, J) or self.defined.shape != (D, J):
            raise DataError("lag/pcc/defined tables must share one shape")
        if len(self.candidate_ids) != J or self.cloudy.shape != (D, len(self.site_ids)):
            raise DataError("table dimensions disagree with the id lists")
        if self.target_id not in self.site_ids or self.target_id in self.candidate_ids:
            raise DataError("target must be a site and not a candidate")

    @property
    def target_cloudy(self) -> np.ndarray:
        return self.cloudy[:, self.site_ids.index(self.target_id)]

    @property
    def candidate_cloudy(self) -> np.ndarray:
        idx = [self.site_ids.index(c) for c in self.candidate_ids]
        return self.cloudy[:, idx]

    def scenarios(self, t_thre: int) -> np.ndarray:
        """(D, N-1) day labels (1..6) for every candidate and day."""
        return classify_array(self.candidate_cloudy, self.target_cloudy[:, None], self.lags, t_thre)

    def records(self, candidate: str, t_thre: int) -> list[PairDayRecord]:
        j = self.candidate_ids.index(candidate)
        s = self.scenarios(t_thre)[:, j]
        return [PairDayRecord(d, int(s[d]), int(self.lags[d, j]), float(self.pccs[d, j]),
                              bool(self.defined[d, j])) for d in range(self.lags.shape[0])]


@dataclass
class DetectorNetwork:
    target_id: str
    member_ids: list[str]
    phi: float
    # first greedy pass over all candidates: ids in ranking order and phi after each addition
    curve_ids: list[str] = field(default_factory=list)
    phi_curve: list[float] = field(default_factory=list)
    iterations: int = 0

    def to_json(self) -> dict:
        return {"target_id": self.target_id, "member_ids": list(self.member_ids), "phi": self.phi,
                "phi_curve": list(self.phi_curve), "curve_ids": list(self.curve_ids),
                "iterations": self.iterations}

    @classmethod
    def from_json(cls, obj: dict) -> "DetectorNetwork":
        return cls(obj["target_id"], list(obj["member_ids"]), float(obj["phi"]),
                   list(obj.get("curve_ids", [])), [float(v) for v in obj.get("phi_curve", [])],
                   int(obj.get("iterations", 0)))


def classify_pair_day(detector_cloudy: bool, target_cloudy: bool, lag, t_thre: int) -> int:
    """Day label (1..6) for one detector/target pair; see the module docstring for the cases."""
    if t_thre < 1:
        raise ConfigError("t_thre must be >= 1")
    if not detector_cloudy and not target_cloudy:
        return 1
    if detector_cloudy and not target_cloudy:
        return 2
    if not detector_cloudy:
        return 3
    dt = lag.delta_t_max if isinstance(lag, LagCorrResult) else int(lag)
    if dt <= 0:
        return 4
    return 5 if dt <= t_thre else 6


def classify_array(det_cloudy, tgt_cloudy, lags, t_thre: int) -> np.ndarray:
    """Broadcast version of :func:`classify_pair_day`."""
    if t_thre < 1:
        raise ConfigError("t_thre must be >= 1")
    det_cloudy, tgt_cloudy, lags = np.broadcast_arrays(det_cloudy, tgt_cloudy, lags)
    both = np.where(lags <= 0, 4, np.where(lags <= t_thre, 5, 6))
    return np.where(tgt_cloudy, np.where(det_cloudy, both, 3),
                    np.where(det_cloudy, 2, 1)).astype(np.int8)


def detection_rate(scenarios: Iterable[int]) -> float:
    """Share of scenario-5 days among all days that are not scenario 1."""
    s = np.asarray(list(scenarios) if not isinstance(scenarios, np.ndarray) else scenarios)
    den = int(np.count_nonzero(s != 1))
    if den == 0:
        raise DataError("no evaluable days")
    return int(np.count_nonzero(s == 5)) / den


def network_day_scenario(member_records: Sequence[PairDayRecord], target_cloudy: bool,
                         t_thre: int = DEFAULT_T_THRE, rule: str = "max_lag") -> int:
    """Day label (1..6) of a whole detector network.

    Target clear: 2 if any member is cloudy, else 1. Target cloudy and every
    member clear: 3. Otherwise, with ``rule="max_lag"`` the cloudy member with
    the largest lead represents the network and its lead is classified
    (<= 0 -> 4, <= t_thre -> 5, else 6). ``rule="precedence"`` instead takes
    5 over 6 over 4 across members.
    """
    if not member_records:
        raise ConfigError("a detector network needs at least one member")
    labels = [r.scenario for r in member_records]
    if any((s in (1, 2)) == bool(target_cloudy) for s in labels):
        raise DataError("member scenarios disagree with the target's cloudiness")
    if not target_cloudy:
        return 2 if 2 in labels else 1
    cloudy = [r for r in member_records if r.scenario in (4, 5, 6)]
    if not cloudy:
        return 3
    if rule == "precedence":
        return max(labels, key=lambda s: _RANK[s])
    if rule != "max_lag":
        raise ConfigError(f"unknown combination rule {rule!r}")
    rep = max(cloudy, key=lambda r: r.delta_t_max)
    return classify_pair_day(True, True, rep.delta_t_max, t_thre)


def representative(member_records: Sequence[PairDayRecord]) -> PairDayRecord | None:
    """The cloudy member with the largest lead, if any member is cloudy."""
    cloudy = [r for r in member_records if r.scenario in (4, 5, 6)]
    return max(cloudy, key=lambda r: r.delta_t_max) if cloudy else None


# stands in for "member clear" in effective-lag tables
_CLEAR = np.iinfo(np.int32).min


def _check_rule(rule: str) -> None:
    if rule not in RULES:
        raise ConfigError(f"unknown combination rule {rule!r}; expected one of {RULES}")


def _member_scores(tables: CorrelationTables, t_thre: int, rule: str) -> np.ndarray:
    """(D, J) per-member score; the day's network label is a function of the max over members.

    ``max_lag``: the lead itself. ``precedence``: 4 -> 0, 6 -> 1, 5 -> 2.
    Clear members score ``_CLEAR``.
    """
    _check_rule(rule)
    cc = tables.candidate_cloudy
    if rule == "max_lag":
        score = tables.lags.astype(np.int64)
    else:
        lab = classify_array(True, True, tables.lags, t_thre)
        score = np.where(lab == 5, 2, np.where(lab == 6, 1, 0)).astype(np.int64)
    return np.where(cc, score, _CLEAR)


def _labels_from_score(target_cloudy: np.ndarray, m: np.ndarray, t_thre: int, rule: str) -> np.ndarray:
    anyc = m > _CLEAR
    if rule == "max_lag":
        both = np.where(m <= 0, 4, np.where(m <= t_thre, 5, 6))
    else:
        both = np.where(m == 2, 5, np.where(m == 1, 6, 4))
    return np.where(target_cloudy, np.where(anyc, both, 3), np.where(anyc, 2, 1)).astype(np.int8)


def network_scenarios(tables: CorrelationTables, members: Sequence[int], t_thre: int = DEFAULT_T_THRE,
                      rule: str = "max_lag") -> np.ndarray:
    """(D,) network labels for the candidate column indices ``members``."""
    if len(members) == 0:
        raise ConfigError("a detector network needs at least one member")
    score = _member_scores(tables, t_thre, rule)[:, list(members)].max(axis=1)
    return _labels_from_score(tables.target_cloudy, score, t_thre, rule)


def network_phi(tables: CorrelationTables, member_ids: Sequence[str], t_thre: int = DEFAULT_T_THRE,
                rule: str = "max_lag") -> float:
    """Successful detection rate of a network given by candidate ids."""
    idx = [tables.candidate_ids.index(m) for m in member_ids]
    return detection_rate(network_scenarios(tables, idx, t_thre, rule))


def build_tables(dataset: Dataset, target_id: str, dx: float = DEFAULT_DX,
                 t_shift: int | None = None, t_thre: int = DEFAULT_T_THRE) -> CorrelationTables:
    """Best lag and correlation for every (day, candidate) against ``target_id``."""
    ti = dataset.index(target_id)
    if t_shift is None:
        t_shift = default_t_shift(t_thre)
    ev = event_values(dataset.values, dx)  # (N, D, M-1)
    cloudy = np.any(ev != 0, axis=2).T  # (D, N)
    cand = [j for j in range(dataset.N) if j != ti]
    D, J = dataset.D, len(cand)
    lags = np.zeros((D, J), dtype=int)
    pccs = np.zeros((D, J))
    defined = np.zeros((D, J), dtype=bool)
    for d in range(D):
        lags[d], pccs[d], defined[d] = lagged_correlation_many(ev[ti, d], ev[cand, d], t_shift)
    ids = dataset.ids
    return CorrelationTables(target_id, tuple(ids[j] for j in cand), tuple(ids), lags, pccs, defined,
                             cloudy, t_shift, dx)


def ranking(tables: CorrelationTables) -> list[int]:
    """Candidate indices by descending mean peak correlation over days where both sites are cloudy.

    Candidates never cloudy together with the target go last; ties keep dataset order.
    """
    both = tables.candidate_cloudy & tables.target_cloudy[:, None]
    n = both.sum(axis=0)
    s = np.where(both, tables.pccs, 0.0).sum(axis=0)
    mean = np.where(n > 0, s / np.maximum(n, 1), -np.inf)
    return sorted(range(len(tables.candidate_ids)), key=lambda j: -mean[j])


def _rate(score: np.ndarray, tc: np.ndarray, members: Sequence[int], t_thre: int, rule: str) -> float:
    labels = _labels_from_score(tc, score[:, list(members)].max(axis=1), t_thre, rule)
    den = np.count_nonzero(labels != 1)
    return np.count_nonzero(labels == 5) / den if den else 0.0


def select_detectors(tables: CorrelationTables, t_thre: int = DEFAULT_T_THRE,
                     max_iterations: int = 20, rule: str = "max_lag") -> DetectorNetwork:
    """Greedy prefix selection along the correlation ranking, refined by dropping harmful members.

    Each iteration rebuilds the greedy curve over the candidates not yet
    excluded and keeps the earliest prefix with the highest phi. Members are
    then tried for removal in selection order; the first one whose removal
    raises phi is excluded for good and the loop repeats.
    """
    score = _member_scores(tables, t_thre, rule)
    tc = tables.target_cloudy
    if not (tc.any() or (score > _CLEAR).any()):
        raise DataError(f"no evaluable days for target {tables.target_id!r}")
    order_all = ranking(tables)
    excluded: set[int] = set()
    curve: list[float] = []
    best: list[int] = []
    it = 0
    while it < max_iterations and len(excluded) < len(order_all):
        it += 1
        order = [j for j in order_all if j not in excluded]
        phi_max, k_best, phis = -1.0, 0, []
        for k in range(1, len(order) + 1):
            phi = _rate(score, tc, order[:k], t_thre, rule)
            phis.append(phi)
            if phi > phi_max:
                phi_max, k_best = phi, k
        if it == 1:
            curve = phis
        best = order[:k_best]
        removed = None
        if len(best) > 1:
            for m in best:
                if _rate(score, tc, [j for j in best if j != m], t_thre, rule) > phi_max:
                    removed = m
                    break
        if removed is None:
            break
        excluded.add(removed)
    ids = tables.candidate_ids
    phi = detection_rate(network_scenarios(tables, best, t_thre, rule))
    return DetectorNetwork(tables.target_id, [ids[j] for j in best], phi,
                           [ids[j] for j in order_all], curve, it)


def brute_force_select(tables: CorrelationTables, t_thre: int = DEFAULT_T_THRE,
                       max_candidates: int = 16, rule: str = "max_lag") -> tuple[list[str], float]:
    """Exhaustive best non-empty subset.

    Ties go to the smaller subset, then the lexicographically smaller sorted id list.
    """
    J = len(tables.candidate_ids)
    if J > max_candidates:
        raise ConfigError(f"{J} candidates exceeds max_candidates={max_candidates}")
    score = _member_scores(tables, t_thre, rule)
    tc = tables.target_cloudy
    if not (tc.any() or (score > _CLEAR).any()):
        raise DataError(f"no evaluable days for target {tables.target_id!r}")
    n = 1 << J
    net = np.full((n, score.shape[0]), _CLEAR, dtype=np.int64)
    for mask in range(1, n):
        low = (mask & -mask).bit_length() - 1
        net[mask] = np.maximum(net[mask & (mask - 1)], score[:, low])
    labels = _labels_from_score(tc[None, :], net, t_thre, rule)
    num = np.count_nonzero(labels == 5, axis=1)
    den = np.count_nonzero(labels != 1, axis=1)
    phi = np.where(den > 0, num / np.maximum(den, 1), 0.0)
    phi[0] = -1.0
    top = phi.max()
    ids = tables.candidate_ids
    subsets = [sorted(ids[j] for j in range(J) if m >> j & 1) for m in np.flatnonzero(phi == top)]
    subsets.sort(key=lambda s: (len(s), s))
    return subsets[0], float(top)
