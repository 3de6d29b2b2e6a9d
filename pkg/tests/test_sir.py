import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from simdetect.errors import TiesUnbrokenWarning, TooFewObservations, ZeroBeta
from simdetect.models import CovarianceSpec, build_covariance
from simdetect.sir import gsnr_linear, slice_dataset, slice_sizes, top_eigenvalue


def test_hand_example():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([4.0, 3.0, 2.0, 1.0])
    summary = slice_dataset(x, y, 2, center=False)
    np.testing.assert_allclose(summary.slice_means[:, 0], [3.5, 1.5])
    assert summary.lambda_hat[0, 0] == pytest.approx(7.25)
    assert top_eigenvalue(summary) == pytest.approx(7.25)


def test_hand_example_centered():
    # centering removes the grand mean 2.5: slice means become +-1
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    summary = slice_dataset(x, np.array([4.0, 3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(summary.slice_means[:, 0], [1.0, -1.0])


@pytest.mark.parametrize("n, H, expected", [(23, 5, [4, 4, 5, 5, 5]), (20, 4, [5, 5, 5, 5]), (21, 10, [2] * 9 + [3])])
def test_slice_sizes(n, H, expected):
    assert slice_sizes(n, H).tolist() == expected


def test_rank_one_summary():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(6)
    means = np.zeros((6, 4))
    means[:, 2] = v
    from simdetect.sir import SlicedSummary

    summary = SlicedSummary(means=means, sizes=np.full(4, 5))
    assert top_eigenvalue(summary) == pytest.approx(v @ v / 4)


def test_gram_route_matches_full_matrix():
    rng = np.random.default_rng(8)
    summary = slice_dataset(rng.standard_normal((40, 8)), rng.standard_normal(40), 4)
    full = np.linalg.eigvalsh(summary.lambda_hat)[-1]
    gram = np.linalg.eigvalsh(summary.gram)[-1]
    assert abs(full - gram) < 1e-10
    big = slice_dataset(rng.standard_normal((60, 30)), rng.standard_normal(60), 4)
    assert top_eigenvalue(big) == pytest.approx(np.linalg.eigvalsh(big.lambda_hat)[-1], abs=1e-10)


def test_monotone_transform_invariance():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200, 15))
    y = x[:, 0] + rng.standard_normal(200)
    a = slice_dataset(x, y, 10)
    b = slice_dataset(x, np.exp(y), 10)
    assert a.lambda_hat.tobytes() == b.lambda_hat.tobytes()


def test_row_permutation_invariance():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((150, 12))
    y = rng.standard_normal(150)
    perm = rng.permutation(150)
    a = slice_dataset(x, y, 10)
    b = slice_dataset(x[perm], y[perm], 10)
    np.testing.assert_allclose(a.means, b.means, rtol=0, atol=1e-14)
    np.testing.assert_array_equal(a.sizes, b.sizes)


def test_too_few_observations():
    with pytest.raises(TooFewObservations):
        slice_dataset(np.zeros((19, 2)), np.arange(19.0), 10)


@pytest.mark.parametrize("H", [1, 65])
def test_slice_count_range(H):
    with pytest.raises(ValueError):
        slice_dataset(np.zeros((200, 2)), np.arange(200.0), H)


def test_constant_response_warns():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((500, 20))
    with pytest.warns(TiesUnbrokenWarning):
        summary = slice_dataset(x, np.ones(500), 10)
    # stable tie-break keeps row order, so slices are blocks of rows
    np.testing.assert_allclose(summary.means[0], x[:, 0].reshape(10, 50).mean(1) - x[:, 0].mean())
    assert top_eigenvalue(summary) < 3 * 20 / 500


def test_no_warning_without_ties():
    rng = np.random.default_rng(4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        slice_dataset(rng.standard_normal((100, 3)), rng.standard_normal(100), 10)


@given(
    x=arrays(np.float64, (30, 4), elements=st.floats(-100, 100)),
    y=arrays(np.float64, 30, elements=st.floats(-100, 100)),
    H=st.integers(2, 15),
)
@settings(max_examples=60, deadline=None)
def test_summary_invariants(x, y, H):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TiesUnbrokenWarning)
        summary = slice_dataset(x, y, H)
    assert summary.sizes.sum() == 30
    assert summary.sizes.max() - summary.sizes.min() <= 1
    lam = summary.lambda_hat
    assert np.array_equal(lam, lam.T)
    ev = np.linalg.eigvalsh(lam)
    scale = max(1.0, np.abs(lam).max())
    assert ev[0] >= -1e-9 * scale
    assert np.sum(ev > 1e-9 * scale) <= H
    assert top_eigenvalue(summary) >= 0.0
    assert top_eigenvalue(summary) == pytest.approx(max(ev[-1], 0.0), abs=1e-9 * scale)


def test_dump_csv(tmp_path):
    rng = np.random.default_rng(5)
    summary = slice_dataset(rng.standard_normal((40, 3)), rng.standard_normal(40), 4)
    summary.to_csv(tmp_path / "s.csv")
    table = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(table[:, 1], summary.sizes)
    np.testing.assert_array_equal(table[:, 2:], summary.slice_means)


def test_gsnr_examples():
    assert gsnr_linear(np.eye(3)[0], np.eye(3), 1.0).value == pytest.approx(0.5)
    assert gsnr_linear(2 * np.eye(3)[0], np.eye(3), 1.0).value == pytest.approx(0.8)
    sigma = build_covariance(CovarianceSpec("toeplitz", p=3, rho=0.5))
    # e1' Sigma Sigma e1 = 1 + .25 + .0625 = 1.3125; denominator 1 + 1
    assert gsnr_linear(np.eye(3)[0], sigma, 1.0).value == pytest.approx(0.65625)


def test_gsnr_zero_beta():
    with pytest.raises(ZeroBeta):
        gsnr_linear(np.zeros(3), np.eye(3))


def test_lower_bound_step():
    # eta' Lambda eta >= (1 - 1/(2 nu)) lambda with nu = 2 in most replications
    rng = np.random.default_rng(9)
    beta = np.array([1.0, 0.5, 0, 0, 0])
    eta = beta / np.linalg.norm(beta)
    lam = gsnr_linear(beta, np.eye(5)).value
    hits = 0
    for _ in range(200):
        x = rng.standard_normal((5000, 5))
        y = x @ beta + rng.standard_normal(5000)
        hits += eta @ slice_dataset(x, y, 10).lambda_hat @ eta >= 0.75 * lam
    assert hits >= 190
