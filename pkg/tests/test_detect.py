import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simdetect.baseline_hc import hc_statistic
from simdetect.detect import (
    Anova,
    CalibratedThresholds,
    SparseMode,
    TestOutcome,
    TestStatistics,
    anova_statistic,
    calibrate,
    compute_statistics,
    decide,
    empirical_quantile,
    quantile_index,
    resolve_mode,
    run_test,
    trace_term,
)
from simdetect.errors import ThresholdMismatch
from simdetect.models import CovarianceSpec, Dataset, ModelSpec, generate
from simdetect.sir import slice_dataset, top_eigenvalue
from simdetect.sparse_eig import SdpSettings


def thresholds(**kw):
    base = dict(tau_n=1.0, tau_n_prime=1.0, tau_n_dprime=1.0, c_hc=1.0, n=100, p=10, H=10, ks=2, sparse_mode="exact")
    base.update(kw)
    return CalibratedThresholds(**base)


def stats(lam=0.0, sparse=0.0, anova=0.0, trace=0.0):
    return TestStatistics(lambda_max=lam, sparse_eig=sparse, sparse_mode="exact", anova_t=anova, trace_term=trace)


@pytest.mark.parametrize("level, n, k", [(0.05, 100, 95), (0.05, 20, 19), (0.05, 400, 380), (0.1, 25, 23), (0.5, 1, 1)])
def test_quantile_index(level, n, k):
    assert quantile_index(level, n) == k


def test_empirical_quantile_order_statistic():
    values = np.random.default_rng(0).permutation(np.arange(1.0, 101.0))
    assert empirical_quantile(values, 0.05) == 95.0
    assert empirical_quantile(np.arange(1.0, 21.0), 0.05) == 19.0
    with pytest.raises(ValueError):
        quantile_index(1.0, 10)


def test_decisions_all_below():
    p1, p2, p3 = decide(stats(0.5, 0.5, 0.5), thresholds())
    out = TestOutcome(stats(), thresholds(), p1, p2, p3)
    assert not any([out.reject_psi1, out.reject_psi2, out.reject_psi3, out.reject_sss, out.reject_sssa])


def test_decisions_combinations():
    out = TestOutcome(stats(), thresholds(), False, True, False)
    assert out.reject_sss and out.reject_sssa
    out = TestOutcome(stats(), thresholds(), False, False, True)
    assert not out.reject_sss and out.reject_sssa
    # equality does not reject
    assert decide(stats(1.0, 1.0, 1.0), thresholds()) == (False, False, False)
    assert decide(stats(1.1, 0.0, 0.0), thresholds()) == (True, False, False)


def test_theory_mode_subtracts_trace():
    th = thresholds(theory=True)
    assert decide(stats(lam=1.5, trace=0.6), th)[0] is False
    assert decide(stats(lam=1.5, trace=0.4), th)[0] is True


def test_decided_overrides_sparse_value():
    assert decide(stats(sparse=0.0), thresholds(), decided=True)[1] is True
    assert decide(stats(sparse=5.0), thresholds(), decided=False)[1] is False


def test_resolve_mode():
    assert resolve_mode("auto", 10, 3) is SparseMode.EXACT
    assert resolve_mode("auto", 100, 7) is SparseMode.SDP
    assert resolve_mode("sdp", 10, 3) is SparseMode.SDP


def test_exact_vs_sdp_on_toy():
    rng = np.random.default_rng(1)
    ds = generate(ModelSpec("III", s=3), CovarianceSpec(p=10), 300, rng)
    tight = SdpSettings(gap_tolerance=1e-8, max_iterations=20000)
    ex = compute_statistics(ds, 10, 3, mode="exact")
    sd = compute_statistics(ds, 10, 3, tight, mode="sdp")
    assert sd.sparse_eig >= ex.sparse_eig - 1e-6
    assert ex.sparse_eig <= ex.lambda_max + 1e-6
    assert sd.sparse_eig <= sd.lambda_max + 1e-6
    assert ex.lambda_max == sd.lambda_max and ex.sparse_mode == "exact" and sd.sparse_mode == "sdp"


def test_compute_statistics_ks_range():
    ds = generate(ModelSpec("null"), CovarianceSpec(p=5), 100, np.random.default_rng(0))
    with pytest.raises(ValueError):
        compute_statistics(ds, 10, 5)


def test_anova_null_spread():
    rng = np.random.default_rng(2)
    bound = 4 * np.sqrt(2 / 1000)
    inside = [abs(anova_statistic(rng.standard_normal(1000))) <= bound for _ in range(300)]
    assert np.mean(inside) >= 0.99


@given(a=st.floats(0.01, 100).flatmap(lambda v: st.sampled_from([v, -v])), b=st.floats(-100, 100))
@settings(max_examples=50, deadline=None)
def test_standardized_anova_affine_invariance(a, b):
    y = np.random.default_rng(3).standard_normal(200) ** 2
    base = anova_statistic(y, Anova.STANDARDIZED)
    assert anova_statistic(a * y + b, Anova.STANDARDIZED) == pytest.approx(base, abs=1e-9)


def test_raw_anova():
    assert anova_statistic(np.array([1.0, -1.0, 3.0])) == pytest.approx((0 + 0 + 8) / 3)
    assert anova_statistic(2 * np.ones(4)) == 3.0


def test_trace_term():
    x = np.random.default_rng(4).standard_normal((50, 6))
    assert trace_term(x) == pytest.approx(np.trace(np.cov(x.T, bias=True)) / 50)


def test_calibrate_uses_order_statistic():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((200, 8))
    th = calibrate(x, 10, 2, level=0.05, n_null=40, seed=123, sparse_mode="exact")
    # replay the null draws independently
    lam, hc = [], []
    for ss in np.random.SeedSequence(123).spawn(40):
        z = np.random.default_rng(ss).standard_normal(200)
        lam.append(top_eigenvalue(slice_dataset(x, z, 10)))
        hc.append(hc_statistic(Dataset(x, z)).hc_score)
    assert th.tau_n == np.sort(lam)[37]
    assert th.c_hc == np.sort(hc)[37]
    assert (th.n, th.p, th.H, th.ks, th.n_null, th.seed) == (200, 8, 10, 2, 40, 123)


def test_calibrate_validation():
    x = np.zeros((100, 5))
    with pytest.raises(ValueError):
        calibrate(x, 10, 2, n_null=19)
    with pytest.raises(ValueError):
        calibrate(x, 10, 2, level=1.5)
    with pytest.raises(ValueError):
        thresholds(n_null=5)
    with pytest.raises(ValueError):
        thresholds(tau_n=np.inf)


def test_bonferroni_raises_spectral_thresholds():
    x = np.random.default_rng(6).standard_normal((200, 8))
    plain = calibrate(x, 10, 2, n_null=40, seed=1, sparse_mode="exact")
    bonf = calibrate(x, 10, 2, n_null=40, seed=1, sparse_mode="exact", bonferroni=True)
    assert bonf.tau_n >= plain.tau_n and bonf.tau_n_prime >= plain.tau_n_prime
    assert bonf.tau_n_dprime == plain.tau_n_dprime


def test_pooled_calibration():
    rng = np.random.default_rng(7)
    xs = [rng.standard_normal((100, 6)) for _ in range(25)]
    th = calibrate(xs, 10, 2, n_null=0, mode="pooled", seed=np.random.SeedSequence(9), sparse_mode="exact")
    assert th.n_null == 25 and th.mode.value == "pooled" and th.seed is None
    with pytest.raises(ValueError):
        calibrate(xs + [rng.standard_normal((100, 7))], 10, 2, mode="pooled")


def test_threshold_mismatch():
    ds = generate(ModelSpec("null"), CovarianceSpec(p=10), 100, np.random.default_rng(8))
    with pytest.raises(ThresholdMismatch):
        run_test(ds, thresholds(n=200))
    with pytest.raises(ThresholdMismatch):
        run_test(ds, thresholds(), ks=3)
    with pytest.raises(ThresholdMismatch):
        run_test(ds, thresholds(), mode="sdp")


def test_threshold_json_round_trip():
    th = thresholds(c_hc=-np.inf, seed=4, mode="pooled")
    d = json.loads(th.to_json())
    assert d["c_hc"] is None and d["mode"] == "pooled"
    assert CalibratedThresholds.from_dict(d) == th
    th2 = thresholds(c_hc=2.5)
    assert CalibratedThresholds.from_dict(json.loads(th2.to_json())) == th2


@pytest.mark.parametrize("mode", ["exact", "sdp"])
def test_monotone_transform_keeps_spectral_decisions(mode):
    rng = np.random.default_rng(9)
    ds = generate(ModelSpec("III", s=3), CovarianceSpec(p=12), 300, rng)
    th = calibrate(ds.x, 10, 3, n_null=20, seed=2, sparse_mode=mode)
    shifted = Dataset(ds.x, ds.y**3 + 2 * ds.y + 5)
    a, b = run_test(ds, th), run_test(shifted, th)
    assert (a.reject_psi1, a.reject_psi2) == (b.reject_psi1, b.reject_psi2)
    assert a.statistics.lambda_max == b.statistics.lambda_max


def test_run_test_deterministic():
    def once():
        ds = generate(ModelSpec("I", s=3), CovarianceSpec("toeplitz", p=30, rho=0.3), 300, np.random.default_rng(10))
        th = calibrate(ds.x, 10, 3, n_null=20, seed=3, sparse_mode="sdp")
        return run_test(ds, th).to_json()

    assert once() == once()


def test_early_stop_matches_full_solve():
    rng = np.random.default_rng(11)
    ds = generate(ModelSpec("III", s=3), CovarianceSpec(p=30), 400, rng)
    th = calibrate(ds.x, 10, 3, n_null=20, seed=4, sparse_mode="sdp")
    fast = run_test(ds, th)
    full = run_test(ds, th, early_stop=False)
    assert fast.reject_psi2 == full.reject_psi2
    assert fast.statistics.sparse_eig <= fast.statistics.sparse_upper + 1e-12


def test_strong_signal_rejected():
    rng = np.random.default_rng(12)
    cov = CovarianceSpec(p=20)
    th = calibrate(rng.standard_normal((1000, 20)), 10, 3, n_null=40, seed=5, sparse_mode="exact")
    outs = [run_test(generate(ModelSpec("III", s=3), cov, 1000, rng), th) for _ in range(10)]
    assert sum(o.reject_sss for o in outs) >= 9
    out = outs[0]
    d = json.loads(out.to_json())
    assert d["reject_sss"] == out.reject_sss and d["statistics"]["sparse_mode"] == "exact"
