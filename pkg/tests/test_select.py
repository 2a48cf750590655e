import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from penselect import select
from penselect.errors import ConditionViolated, KNotGreaterThanOne, ModeFamilyMismatch
from penselect.linspace import Subspace, project
from penselect.models import ModelCollection, ModelSpec, Partition, histogram_space
from penselect.noise import NoiseSpec


_DYADIC = {}


def dyadic(n, min_block):
    if (n, min_block) not in _DYADIC:
        _DYADIC[n, min_block] = ModelCollection.dyadic(n, min_block)
    return _DYADIC[n, min_block]


def step(n, at=None):
    at = n // 2 if at is None else at
    return np.r_[np.zeros(at), np.ones(n - at)]


def test_penalty_general_c0_example():
    specs = [ModelSpec(0, "histogram", Partition((2, 4, 6)), 3.0)]
    coll = ModelCollection.from_specs(6, specs)
    spec = select.PenaltySpec("general", 2.0, 1.0, 0.0)
    assert select.penalty(spec, 0, coll) == pytest.approx(3888.0)
    assert select.penalty(spec, specs[0], coll) == pytest.approx(3888.0)


def test_penalty_general_uses_u():
    coll = ModelCollection.dyadic(64, 8)
    spec = select.PenaltySpec("general", 2.0, 1.0, 0.5, z=1.0)
    u = (0.5 + 1.0) * coll.lambda_bar_inf * coll.lambda2_Sn * (2 * math.log(64) + 1.0)
    k = 3
    want = 2 * 324 * (1 + 0.5 * u / 9) * (coll.dims[k] + coll.delta[k])
    assert select.penalty(spec, k, coll) == pytest.approx(want, rel=1e-12)


def test_empty_trig_model_penalty_zero():
    coll = ModelCollection.trig(64, 2, include_empty=True)
    spec = select.PenaltySpec("general", 2.0, 1.0, 1.0)
    assert select.penalty(spec, 0, coll) == 0.0


def test_proposition_penalties():
    n = 256
    a = 1 / math.log(n)
    h = dyadic(n, 8)
    s, c, b = 1.0, 0.5, 1.0
    sp = select.PenaltySpec("histogram", 2.0, s, c, a=a, b=b)
    want = 2 * 324 * (s * s + 2 * c * (s + c) * (b + 2) / (a * 18))
    assert select.variance_factor(sp, h) == pytest.approx(want / 2)
    p = ModelCollection.dyadic(n, 8, family="piecewise_poly", d=1)
    pp = select.PenaltySpec("piecewise", 2.0, s, c, a=1.5 * a, b=b, d=1)
    want = 324 * (s * s + c * 4 * math.sqrt(2) * (s + c) * 2 * (b + 2) / (1.5 * a * 18))
    assert select.variance_factor(pp, p) == pytest.approx(want)
    t = ModelCollection.trig(n, 2)
    tp = select.PenaltySpec("trig", 2.0, s, c, a=0.5, b=b)
    assert select.variance_factor(tp, t) == pytest.approx(324 * (1 + 4 * c * (c + s) * (b + 2) / 0.5))


def test_mode_family_mismatch_and_conditions():
    h = ModelCollection.dyadic(64, 8)
    with pytest.raises(ModeFamilyMismatch):
        select.penalties(select.PenaltySpec("trig", 2.0, 1, 1, a=1, b=1), h)
    p = ModelCollection.dyadic(64, 8, family="piecewise_poly", d=1)
    with pytest.raises(ModeFamilyMismatch):
        select.penalties(select.PenaltySpec("piecewise", 2.0, 1, 1, a=0.1, b=1, d=2), p)
    with pytest.raises(ConditionViolated):
        select.penalties(select.PenaltySpec("histogram", 2.0, 1, 1, a=1.0, b=1), h)
    with pytest.raises(KNotGreaterThanOne):
        select.PenaltySpec("general", 1.0, 1, 0)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 5), st.floats(0, 3), st.floats(0.1, 2), st.floats(0.1, 3))
def test_histogram_mode_dominates_general(seed, s, c, a_scale, b):
    # With Lambda_bar_inf = 1 and Lambda_2(S_n) <= 1/(a log n), z = b log n,
    # the general penalty is at most the histogram one.
    n = 256
    coll = dyadic(n, 8)
    a = 0.999 * math.sqrt(8) / math.log(n) * min(a_scale, 1.0)
    hp = select.PenaltySpec("histogram", 2.0, s, c, a=a, b=b)
    gp = select.PenaltySpec("general", 2.0, s, c, z=b * math.log(n))
    k = np.random.default_rng(seed).integers(len(coll))
    assert select.penalty(gp, int(k), coll) <= select.penalty(hp, int(k), coll) * (1 + 1e-12)


def test_crit_examples():
    Y = np.array([1.0, 3.0, 5.0])
    m = ModelSpec(0, "histogram", Partition.from_blocks([(1, 2), (3, 3)], 3), 0.0)
    assert select.crit(m, Y, pen=7.0) == pytest.approx(9.0)
    full = ModelSpec(1, "histogram", Partition((1, 2, 3)), 0.0)
    assert select.crit(full, Y, pen=0.0) == pytest.approx(0.0, abs=1e-24)
    coll = ModelCollection.trig(16, 2, include_empty=True)
    y = np.arange(16.0)
    assert select.crit(0, y, coll=coll, pen=1.5) == pytest.approx(y @ y + 1.5)


def test_select_noiseless_exact_fit():
    coll = ModelCollection.dyadic(64, 8)
    f = step(64)
    spec = select.PenaltySpec("general", 2.0, 0.001, 0.0)
    res = select.select_model(f, coll, spec)
    assert res.residual_sq[res.chosen_index] == pytest.approx(0, abs=1e-20)
    zero = np.flatnonzero(res.residual_sq <= 1e-20)
    assert res.pen[res.chosen_index] == res.pen[zero].min()
    assert coll.partition(res.chosen_index).ends == (32, 64)


def test_duplicate_models_tie():
    m = Partition((4, 8))
    specs = [ModelSpec("x", "histogram", Partition((8,)), 1.0), ModelSpec("a", "histogram", m, 1.0),
             ModelSpec("b", "histogram", m, 1.0)]
    coll = ModelCollection.from_specs(8, specs)
    res = select.select_model(np.r_[np.zeros(4), np.ones(4)], coll, select.PenaltySpec("general", 2, 1e-3, 0))
    assert res.chosen_id == "a" and res.ties == ["a", "b"]


def test_tie_break_prefers_smaller_dimension():
    specs = [ModelSpec("big", "histogram", Partition((2, 4)), 0.0), ModelSpec("small", "histogram", Partition((4,)), 0.0)]
    coll = ModelCollection.from_specs(4, specs)
    Y = np.ones(4)
    res = select.select_model(Y, coll, None, pen=np.array([1.0, 1.0]))
    assert res.ties == ["big", "small"] and res.chosen_id == "small"


def test_step_high_snr_selection():
    n = 256
    coll = dyadic(n, 8)
    noise = NoiseSpec.make("gaussian", sd=0.01)
    spec = select.PenaltySpec.from_noise("general", 2.0, noise)
    pen = select.penalties(spec, coll)
    from penselect.noise import sample_trials
    Y = step(n)[:, None] + sample_trials(noise, n, 99, 0, 1000).T
    chosen = select.select_batch(Y, coll, pen)
    hits = sum(coll.partition(int(k)).ends == (128, 256) for k in chosen)
    assert hits >= 990


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100))
def test_selection_properties(seed, gamma):
    rng = np.random.default_rng(seed)
    coll = ModelCollection.dyadic(32, 4)
    Y = rng.standard_normal(32) * 2 + step(32)
    spec = select.PenaltySpec("general", 2.0, 0.5, 0.0)
    res = select.select_model(Y, coll, spec)
    crit = np.array(list(res.crit_values.values()))
    assert np.all(crit >= 0)
    assert res.crit_values[res.chosen_id] == crit.min()
    r = Y - res.fitted
    assert r @ r <= res.crit_values[res.chosen_id] * (1 + 1e-12) + 1e-12
    again = select.select_model(Y, coll, spec)
    assert again.to_json() == res.to_json()
    # Scaling data energy and penalties alike keeps the argmin.
    scaled = select.select_model(math.sqrt(gamma) * Y, coll, spec, pen=gamma * res.pen)
    assert scaled.chosen_id == res.chosen_id


def test_selection_json_shape():
    coll = ModelCollection.dyadic(16, 4)
    res = select.select_model(np.arange(16.0), coll, select.PenaltySpec("general", 2, 1, 0))
    doc = res.to_json()
    assert set(doc) == {"chosen_id", "crit", "per_model", "ties"}
    assert set(doc["per_model"][0]) == {"id", "residual_sq", "pen", "crit"}


def test_exact_risk():
    n = 10
    S = Subspace(np.eye(n)[:, :5])
    noise = NoiseSpec.make("gaussian", sd=1.0)
    f = np.zeros(n); f[7] = math.sqrt(2)
    assert select.exact_risk(f, S, noise) == pytest.approx(7.0)
    g = np.r_[np.ones(5), np.zeros(5)]
    assert select.exact_risk(g, S, noise) == pytest.approx(5.0)
    assert select.exact_risk(g, None, noise) == pytest.approx(5.0)


def test_model_risks_against_exact_risk():
    coll = ModelCollection.dyadic(32, 4)
    noise = NoiseSpec.make("centered_poisson", mu=2.0)
    f = np.sin(np.arange(32) / 5.0)
    r = select.model_risks(coll, f, noise)
    for k in range(0, len(coll), 7):
        assert r[k] == pytest.approx(select.exact_risk(f, coll.space(k), noise), rel=1e-10)


def test_oracle_terms_variants():
    coll = ModelCollection.from_specs(8, [ModelSpec(0, "histogram", Partition((8,)), 1.0)])
    noise = NoiseSpec.make("gaussian", sd=1.0)
    spec = select.PenaltySpec.from_noise("general", 2.0, noise)
    t = select.oracle_terms(coll, spec, np.zeros(8), noise)
    pen = 2 * 324 * 2
    assert t["inf_term"] == pytest.approx(1 + pen)
    Sigma = math.exp(-1)
    assert t["R_corollary"] == pytest.approx(8 * 324 * Sigma)
    assert t["rhs"] == pytest.approx(10 * (1 + pen) + 8 * 324 * Sigma)
    assert t["rhs_c0_limit"] == pytest.approx(10 * (1 + pen + 324 * Sigma))
    assert t["rhs"] >= 1.0


def test_oracle_terms_histogram_mode_R():
    n = 256
    coll = dyadic(n, 8)
    a, b, s, c = 1 / math.log(n), 1.0, 1.0, 0.5
    spec = select.PenaltySpec("histogram", 2.0, s, c, a=a, b=b)
    t = select.oracle_terms(coll, spec, step(n), NoiseSpec.make("centered_exponential", rate=2.0, sigma=s, c=c))
    want = 324 * (s * s + 2 * c * (c + s) * (b + 2) / (a * 18)) * coll.sigma_weights \
        + 2 * (c + s) ** 2 * (b + 2) ** 2 / (a * a * n ** b)
    assert t["R"] == pytest.approx(want, rel=1e-12)
    assert t["rhs"] == pytest.approx(10 * (t["inf_term"] + want))
