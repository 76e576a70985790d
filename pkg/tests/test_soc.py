from __future__ import annotations

import itertools
from fractions import Fraction
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from govkernel.evidence import AssetRecord
from govkernel.soc.agents import ACTIONS, SocAgents, aggregate_metrics, playbook, timeline_entries
from govkernel.soc.clustering import OnlineClusterer, cluster_alerts, criticality, qualifies
from govkernel.soc.scoring import (
    Bands,
    RiskInputs,
    RiskWeights,
    above_threshold,
    normalized,
    ranking,
    risk_exact,
    risk_score,
)
from support import alert

ASSETS = {
    "laptop": AssetRecord("laptop", "Laptop", 0.3, False),
    "db": AssetRecord("db", "DB", 0.95, True, ("SystemOwner.DB",)),
    "wiki": AssetRecord("wiki", "Wiki", 0.6, False),
}
KINDS = ["login_failure", "geo_anomaly", "token_misuse", "malware"]


# --- scoring


def test_risk_examples():
    assert risk_score(RiskInputs(0.8, 0.0, 0.0), RiskWeights(1, 0, 0)) == 0.8
    assert risk_score(RiskInputs(0.8, 0.9, 1.0), RiskWeights(0.5, 0.3, 0.2)) == pytest.approx(0.87, abs=1e-12)
    assert risk_exact(RiskInputs(0.5, 0.5, 0.5), RiskWeights(Fraction(1, 3), Fraction(1, 3), Fraction(1, 3))) \
        == Fraction(1, 2)


@pytest.mark.parametrize("bad", [(-0.1, 0, 0), (0, 1.01, 0), (0, 0, 2)])
def test_risk_inputs_must_be_unit(bad):
    with pytest.raises(ValueError):
        RiskInputs(*bad)


def test_weights_validation():
    with pytest.raises(ValueError):
        RiskWeights(-1, 1, 1)
    with pytest.raises(ValueError):
        RiskWeights(0, 0, 0)
    with pytest.raises(ValueError):
        RiskWeights().scaled(0)


def test_threshold_is_strict():
    s = risk_exact(RiskInputs(0.6, 0.6, 0.6), RiskWeights(Fraction(1), Fraction(0), Fraction(0)))
    assert not above_threshold(s, Fraction(3, 5))
    assert above_threshold(s, Fraction(59, 100))


UNIT = st.integers(0, 100).map(lambda n: n / 100)


@given(UNIT, UNIT, UNIT, st.integers(0, 100))
def test_threshold_sweep_matches_rational_oracle(sev, conf, crit, t):
    w = RiskWeights()
    exact = (Fraction(2, 5) * Fraction(sev) + Fraction(3, 10) * Fraction(conf) + Fraction(3, 10) * Fraction(crit))
    thr = t / 100
    assert above_threshold(risk_exact(RiskInputs(sev, conf, crit), RiskWeights(Fraction(2, 5), Fraction(3, 10),
                                                                                  Fraction(3, 10))), thr) \
        == (exact > Fraction(thr))
    # the float score never disagrees with the exact form by more than one ulp-scale error
    assert abs(risk_score(RiskInputs(sev, conf, crit), w) - float(risk_exact(RiskInputs(sev, conf, crit), w))) < 1e-15


@given(UNIT, UNIT, UNIT, st.integers(0, 100), st.fractions(min_value=Fraction(1, 100), max_value=100))
def test_scaling_weights_and_threshold_never_flips(sev, conf, crit, t, c):
    w = RiskWeights(Fraction(2, 5), Fraction(3, 10), Fraction(3, 10))
    x = RiskInputs(sev, conf, crit)
    thr = Fraction(t, 100)
    assert above_threshold(risk_exact(x, w), thr) == above_threshold(risk_exact(x, w.scaled(c)), thr * c)
    assert Bands().band(normalized(risk_exact(x, w), w)) == Bands().band(normalized(risk_exact(x, w.scaled(c)),
                                                                                  w.scaled(c)))


@pytest.mark.parametrize("score, band", [(0.0, "low"), (0.3999, "low"), (0.4, "medium"), (0.6999, "medium"),
                                         (0.7, "high"), (1.0, "high")])
def test_band_boundaries(score, band):
    assert Bands(0.4, 0.7).band(score) == band


def test_bands_validation_and_ranking():
    with pytest.raises(ValueError):
        Bands(0.8, 0.5)
    assert ranking([0.2, 0.9, 0.2, 0.5]) == [1, 3, 0, 2]


# --- clustering


def test_criticality_and_qualifies():
    assert criticality(["laptop", "db"], ASSETS) == 0.95
    assert criticality(["ghost"], ASSETS) == 1.0
    assert criticality([], ASSETS) == 0.0
    one = [alert("a", "login_failure", "u", "laptop", 0.1, 0.1, 0)]
    assert not qualifies(one, 5)
    assert qualifies(one * 5, 5)
    assert qualifies(one + [alert("b", "malware", "u", "laptop", 0.1, 0.1, 0)], 5)


def test_no_alerts_no_clusters():
    assert cluster_alerts([], 300_000, 5, ASSETS) == []


def test_login_burst_with_geo_anomaly():
    alerts = [alert(f"a{i}", "login_failure", "u1", "wiki", 0.5, 0.6, i * 10_000) for i in range(6)]
    alerts.append(alert("g", "geo_anomaly", "u1", "db", 0.9, 0.9, 120_000))
    (c,) = cluster_alerts(alerts, 300_000, 5, ASSETS)
    assert c.features()["alert_types"] == ["geo_anomaly", "login_failure"]
    assert c.features()["size"] == 7
    assert (c.window_start, c.window_end) == (0, 300_000)
    assert c.severity == 0.9 and c.asset_criticality == 0.95
    assert c.confidence == pytest.approx((6 * 0.6 + 0.9) / 7)
    assert c.assets == ["db", "wiki"]


def test_window_end_is_inclusive():
    a = [alert("a", "login_failure", "u", "laptop", 0.5, 0.5, 0), alert("b", "malware", "u", "laptop", 0.5, 0.5, 100)]
    assert len(cluster_alerts(a, 100, 5, ASSETS)) == 1
    assert cluster_alerts(a, 99, 5, ASSETS) == []


def _oracle(alerts, window, burst):
    # reference: walk each identity in time order and start a new anchor past the window
    groups: dict[tuple[str, int], list[dict]] = {}
    for ident in {a["identity_id"] for a in alerts}:
        anchor = None
        for a in sorted((a for a in alerts if a["identity_id"] == ident), key=lambda a: (a["observed_at"], a["alert_id"])):
            if anchor is None or a["observed_at"] - anchor > window:
                anchor = a["observed_at"]
            groups.setdefault((ident, anchor), []).append(a)
    out = []
    for (ident, anchor), g in groups.items():
        if len(g) >= burst or len({a["alert_type"] for a in g}) > 1:
            out.append((anchor, ident, [a["alert_id"] for a in g]))
    return sorted(out)


alert_streams = st.lists(
    st.tuples(st.sampled_from(["u1", "u2", "u3"]), st.sampled_from(KINDS), st.sampled_from(["laptop", "db", "x"]),
              st.integers(0, 2_000)),
    max_size=40,
)


def _build(spec):
    return [alert(f"a{n:03d}", k, u, asset, 0.5, 0.5, t) for n, (u, k, asset, t) in enumerate(spec)]


@settings(max_examples=200, deadline=None)
@given(alert_streams, st.integers(0, 600), st.integers(1, 6))
def test_cluster_alerts_matches_oracle(spec, window, burst):
    alerts = _build(spec)
    got = [(c.window_start, c.identity_id, c.alert_ids) for c in cluster_alerts(alerts, window, burst, ASSETS)]
    assert sorted(got) == _oracle(alerts, window, burst)
    # every alert lands in at most one cluster
    ids = [i for _s, _u, g in got for i in g]
    assert len(ids) == len(set(ids))


@settings(max_examples=200, deadline=None)
@given(alert_streams, st.integers(0, 600), st.integers(1, 6))
def test_online_equals_batch(spec, window, burst):
    alerts = sorted(_build(spec), key=lambda a: (a["observed_at"], a["alert_id"]))
    closed: list = []
    oc = OnlineClusterer(window, burst, ASSETS, RiskWeights(), closed.append)
    for a in alerts:
        oc.add(a)
    oc.flush()
    batch = cluster_alerts(alerts, window, burst, ASSETS)
    key = lambda c: (c.window_start, c.identity_id)  # noqa: E731
    assert sorted(closed, key=key) == sorted(batch, key=key)


def test_online_close_due_respects_window():
    closed: list = []
    oc = OnlineClusterer(100, 1, ASSETS, RiskWeights(), closed.append)
    assert oc.add(alert("a", "malware", "u", "laptop", 0.5, 0.5, 10)) == 110
    oc.close_due("u", 110)
    assert closed == []
    oc.close_due("u", 111)
    assert [c.alert_ids for c in closed] == [["a"]]


# --- triage and playbook


@pytest.mark.parametrize("band, crown", list(itertools.product(["low", "medium", "high"], [False, True])))
def test_playbook_table(band, crown):
    step = playbook(band, crown)
    if band == "low":
        assert step.actions == () and step.ticket and not step.cosign
    else:
        assert step.actions == ACTIONS and step.cosign == crown and not step.ticket


def _triager(threshold=0.6):
    return SocAgents(SimpleNamespace(assets=ASSETS), threshold=threshold, explain=False)


def _cluster(sev, conf, crit, assets):
    return {"severity": sev, "confidence": conf, "asset_criticality": crit, "assets": assets}


def test_triage():
    g1 = _triager()
    assert g1.triage(_cluster(0.1, 0.1, 0.3, ["laptop"]), ASSETS) is None
    v = g1.triage(_cluster(0.9, 0.9, 0.95, ["db", "laptop"]), ASSETS)
    assert v == {"band": "high", "crown": True, "owner_roles": ["SystemOwner.DB"]}
    v = g1.triage(_cluster(0.9, 0.9, 1.0, ["ghost"]), ASSETS)
    assert v["crown"] and v["owner_roles"] == ["SystemOwner.ghost"]
    # exactly at the threshold opens nothing
    assert _triager(0.6).triage(_cluster(0.6, 0.6, 0.6, ["laptop"]), ASSETS) is None


# --- metrics and timeline


def _summary(band, assets, c2i):
    return {"severity_band": band, "assets": assets, "cluster_to_incident_ms": c2i}


def test_metrics_zero_incidents():
    m = aggregate_metrics([], ASSETS, "m1", (0, 10))
    assert m["incidents"] == 0 and m["by_band"] == {"low": 0, "medium": 0, "high": 0}
    assert m["by_asset"] == {} and m["repeat_offenders"] == [] and m["mean_cluster_to_incident_ms"] is None


def test_metrics_counts():
    sums = [_summary("high", ["db"], 100), _summary("medium", ["db", "wiki"], 300), _summary("low", ["ghost"], 200),
            _summary("high", ["ghost", "wiki"], 400)]
    m = aggregate_metrics(sums, ASSETS, "m1", (0, 10))
    assert m["incidents"] == 4
    assert m["by_band"] == {"low": 1, "medium": 1, "high": 2}
    assert m["by_asset"] == {"db": 2, "ghost": 2, "wiki": 2}
    assert m["repeat_offenders"] == [{"asset": "db", "count": 2, "crown_jewel": True},
                                     {"asset": "ghost", "count": 2, "crown_jewel": True},
                                     {"asset": "wiki", "count": 2, "crown_jewel": False}]
    assert m["mean_cluster_to_incident_ms"] == 250


@given(st.lists(st.tuples(st.sampled_from(["low", "medium", "high"]),
                          st.lists(st.sampled_from(["db", "wiki", "laptop"]), unique=True, max_size=3),
                          st.integers(0, 1000)), max_size=20))
def test_metrics_oracle(items):
    m = aggregate_metrics([_summary(*x) for x in items], ASSETS, "m", (0, 1))
    assert sum(m["by_band"].values()) == m["incidents"] == len(items)
    for a in ("db", "wiki", "laptop"):
        assert m["by_asset"].get(a, 0) == sum(a in x[1] for x in items)


def _ev(oc_type, t, trace, **payload):
    return SimpleNamespace(oc_type=oc_type, emitted_at=t, trace_id=trace, payload=payload)


def test_timeline_entries_filter_and_order():
    evs = [
        _ev("RawAlert", 50, "t3", identity_id="u1", asset_id="laptop", alert_type="malware"),
        _ev("RawAlert", 10, "t1", identity_id="u2", asset_id="db", alert_type="geo_anomaly"),
        _ev("RawAlert", 10, "t0", identity_id="u1", asset_id="x", alert_type="login_failure"),
        _ev("RawAlert", 5, "t9", identity_id="u1", asset_id="x", alert_type="login_failure"),
        _ev("RawAlert", 20, "t4", identity_id="u3", asset_id="wiki", alert_type="malware"),
        _ev("SCIMMutation", 60, "t5", employee_id="u1"),
        _ev("RawAlert", 101, "t6", identity_id="u1", asset_id="x", alert_type="malware"),
    ]
    out = timeline_entries(evs, "u1", ["db"], 10, 100, lambda e: f"uri://{e.trace_id}")
    assert [e["event_ref"] for e in out] == ["uri://t0", "uri://t1", "uri://t3"]
    assert out[0] == {"ts": 10, "event_ref": "uri://t0", "oc_type": "RawAlert", "description": "RawAlert login_failure"}
