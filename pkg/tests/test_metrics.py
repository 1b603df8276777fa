import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from genmetrics.embed_io import EmbeddingError
from genmetrics.metrics import (
    FAMILIES,
    MetricConfig,
    MetricReport,
    compute_report,
    coverage,
    density,
    evaluate,
    f1,
    improved_precision,
    improved_recall,
    p_precision,
    p_recall,
    scoring_gap,
)
from genmetrics.nn import ChunkPlan

LINE = np.array([[0.0], [1.0], [3.0]])
ALL_SIX = {
    "ip": improved_precision,
    "ir": improved_recall,
    "density": density,
    "coverage": coverage,
    "pp": p_precision,
    "pr": p_recall,
}


def test_defaults():
    assert MetricConfig("ipr").k == 3
    assert MetricConfig("dc").k == 5
    cfg = MetricConfig("pppr")
    assert (cfg.k, cfg.a) == (4, 1.2)


def test_config_rejects():
    with pytest.raises(ValueError):
        MetricConfig("fid")
    with pytest.raises(ValueError):
        MetricConfig("ipr", k=0)
    with pytest.raises(ValueError):
        MetricConfig("pppr", a=0)


# --- hand examples -----------------------------------------------------------

def test_improved_precision_hand():
    y = [[0.5], [10.0]]
    assert oracle.mean(oracle.bsr(y, LINE, 1)) == 0.5
    assert improved_precision(LINE, y, MetricConfig("ipr", k=1)) == 0.5


def test_improved_recall_role_swap():
    assert improved_recall([[0.5], [10.0]], LINE, MetricConfig("ipr", k=1)) == 0.5


def test_density_hand():
    assert density(LINE, [[0.5]], MetricConfig("dc", k=1)) == 2.0
    assert density(LINE, [[50.0]], MetricConfig("dc", k=1)) == 0.0


def test_coverage_hand():
    assert coverage(LINE, [[2.5]], MetricConfig("dc", k=1)) == pytest.approx(1 / 3, rel=1e-15)


def test_p_precision_hand():
    # R = 2 * mean NND_1 of {0, 1} = 2; PSR(0.5) = 1 - 0.25 * 0.25
    assert p_precision([[0.0], [1.0]], [[0.5]], MetricConfig("pppr", k=1, a=2.0)) == 0.9375


def test_p_recall_role_swap():
    assert p_recall([[0.5]], [[0.0], [1.0]], MetricConfig("pppr", k=1, a=2.0)) == 0.9375


def test_dimension_mismatch():
    with pytest.raises(EmbeddingError, match="D=2.*D=3"):
        p_precision(np.zeros((5, 2)), np.zeros((5, 3)))


# --- F1 --------------------------------------------------------------------

def test_f1_rounded_inputs():
    assert f1(0.681, 0.688) == pytest.approx(0.684, abs=1e-3)


@pytest.mark.parametrize("x", [0.0, 0.3, 1.0, 2.5])
def test_f1_idempotent(x):
    assert f1(x, x) == pytest.approx(x, rel=1e-15)


def test_f1_zero():
    assert f1(0.0, 0.7) == 0.0
    assert f1(0.0, 0.0) == 0.0


def test_f1_negative():
    with pytest.raises(ValueError):
        f1(-0.1, 0.5)


def test_f1_above_one_for_density():
    # density above 1 is allowed; F1 is still the harmonic mean
    assert f1(1.52, 0.876) == pytest.approx(1.112, abs=1e-3)


# --- invariants ------------------------------------------------------------

@pytest.fixture(scope="module")
def gauss_pair():
    rng = np.random.default_rng(123)
    return rng.standard_normal((150, 8)), rng.standard_normal((130, 8)) + 0.3


def test_identity_all_metrics():
    x = np.random.default_rng(0).standard_normal((300, 16))
    for name in ("ip", "ir", "coverage", "pp", "pr"):
        assert ALL_SIX[name](x, x) == 1.0, name


def test_symmetry_pairing(gauss_pair):
    x, y = gauss_pair
    assert improved_recall(x, y) == improved_precision(y, x)
    assert p_recall(x, y) == p_precision(y, x)


def test_rigid_motion_invariance(gauss_pair):
    x, y = gauss_pair
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    shift = rng.standard_normal(8) * 10
    xt, yt = x @ q + shift, y @ q + shift
    for name, fn in ALL_SIX.items():
        assert fn(xt, yt) == pytest.approx(fn(x, y), abs=1e-9), name


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((40, 4))
    y = rng.standard_normal((35, 4)) + 0.2
    px, py = x[rng.permutation(40)], y[rng.permutation(35)]
    for name, fn in ALL_SIX.items():
        assert fn(px, py) == pytest.approx(fn(x, y), abs=1e-12), name


def test_ranges(gauss_pair):
    x, y = gauss_pair
    for name in ("ip", "ir", "coverage", "pp", "pr"):
        assert 0.0 <= ALL_SIX[name](x, y) <= 1.0
    assert 0.0 <= density(x, y) <= len(x) / 5


@pytest.mark.parametrize("seed", range(8))
def test_oracle_equivalence_small(seed):
    rng = np.random.default_rng(1000 + seed)
    n, m, d = rng.integers(10, 60), rng.integers(10, 60), rng.integers(1, 8)
    x = rng.standard_normal((n, d))
    y = rng.standard_normal((m, d)) * rng.uniform(0.5, 1.5) + rng.uniform(0, 1)
    expected = oracle.metrics(x, y)
    for name, fn in ALL_SIX.items():
        assert fn(x, y) == pytest.approx(expected[name], rel=1e-10, abs=1e-300), name


# --- fused evaluator -----------------------------------------------------------

@pytest.mark.parametrize("plan", [ChunkPlan(), ChunkPlan(7)])
def test_evaluate_matches_individual(gauss_pair, plan):
    x, y = gauss_pair
    configs = [MetricConfig(f) for f in FAMILIES] + [MetricConfig("pppr", k=2), MetricConfig("dc", k=8)]
    got = evaluate(x, y, configs, plan=plan, threads=3)
    pairs = {"ipr": (improved_precision, improved_recall), "dc": (density, coverage),
             "pppr": (p_precision, p_recall)}
    for cfg, (fid, div) in zip(configs, got):
        f_fn, d_fn = pairs[cfg.family]
        assert fid == pytest.approx(f_fn(x, y, cfg), rel=1e-12, abs=1e-15)
        assert div == pytest.approx(d_fn(x, y, cfg), rel=1e-12, abs=1e-15)


def test_evaluate_identity_exact():
    x = np.random.default_rng(1).standard_normal((200, 10))
    res = evaluate(x, x, [MetricConfig(f) for f in FAMILIES])
    assert res[0] == (1.0, 1.0)
    assert res[1][1] == 1.0
    assert res[2] == (1.0, 1.0)


# --- reports -----------------------------------------------------------------

@pytest.mark.parametrize("family", FAMILIES)
def test_report_identity(family):
    x = np.random.default_rng(2).standard_normal((100, 6))
    rep = compute_report(x, x, family)
    if family == "dc":
        assert rep.diversity == 1.0
    else:
        assert (rep.fidelity, rep.diversity, rep.f1) == (1.0, 1.0, 1.0)


def test_report_json_schema():
    x = np.random.default_rng(2).standard_normal((50, 4))
    rep = compute_report(x, x + 0.1, "pppr")
    text = rep.to_json()
    payload = json.loads(text)
    assert list(payload) == ["family", "fidelity", "diversity", "f1", "k", "a", "n_real", "n_fake", "seconds"]
    assert payload["k"] == 4 and payload["a"] == 1.2
    assert payload["fidelity"] == rep.fidelity  # 17 significant digits round-trip
    assert f"{rep.fidelity:.17g}" in text


def test_report_json_ipr_has_null_a():
    x = np.random.default_rng(2).standard_normal((50, 4))
    assert json.loads(compute_report(x, x, "ipr").to_json())["a"] is None


def test_report_csv_row():
    rep = MetricReport("dc", 1.5, 0.5, f1(1.5, 0.5), MetricConfig("dc"), 10, 12, 0.0)
    assert rep.to_csv_row() == "dc,1.5,0.5,0.75,5,,10,12,0"


# --- scoring gap -------------------------------------------------------------

def test_gap_identity_nonnegative():
    x = np.random.default_rng(3).standard_normal((120, 5))
    res = scoring_gap(x, x)
    assert (res.psr == 1.0).all()
    assert (res.gap >= 0).all()


def test_gap_disjoint_is_zero():
    x = np.random.default_rng(3).standard_normal((50, 3))
    res = scoring_gap(x, x + 1000.0)
    assert (res.gap == 0).all()
    assert res.order.tolist() == list(range(50))


def test_gap_hand_instance():
    # PSR with k=1, a=1.2 over {0, 1, 3}: R = 1.6
    #   y=0.5: 1 - (0.5/1.6)(0.5/1.6)(1) = 0.90234375
    #   y=2.5: 1 - 1 * (1.5/1.6) * (0.5/1.6) = 0.70703125
    #   y=9  : 0
    # DSR with k=1 (radii 1, 1, 2): 0.5 -> 2, 2.5 -> 1, 9 -> 0; max 2
    y = [[0.5], [2.5], [9.0]]
    psr_expected = oracle.psr(y, LINE, 1.2 * oracle.mean_radius(LINE, 1))
    assert psr_expected == pytest.approx([0.90234375, 0.70703125, 0.0], rel=1e-15)
    res = scoring_gap(LINE, y, MetricConfig("pppr", k=1, a=1.2), MetricConfig("dc", k=1))
    np.testing.assert_allclose(res.psr, psr_expected, rtol=1e-14)
    np.testing.assert_array_equal(res.dsr_norm, [1.0, 0.5, 0.0])
    np.testing.assert_allclose(res.gap, [-0.09765625, 0.20703125, 0.0], rtol=1e-13)
    assert res.order.tolist() == [1, 2, 0]
