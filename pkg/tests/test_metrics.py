import numpy as np
import pytest

from arco_bci import metrics
from arco_bci.core import dag_from_edges
from arco_bci.errors import TooFewSamplesError, WeightMismatchError


def test_weighted_sample_set_validation():
    with pytest.raises(WeightMismatchError):
        metrics.WeightedSampleSet(np.zeros((3, 1)), np.array([0.5, 0.5]))
    with pytest.raises(WeightMismatchError):
        metrics.WeightedSampleSet(np.zeros((2, 1)), np.array([0.7, 0.7]))
    with pytest.raises(WeightMismatchError):
        metrics.WeightedSampleSet(np.zeros((2, 1)), np.array([1.5, -0.5]))


def test_structure_metrics_perfect_predictor():
    ref = dag_from_edges(4, [(0, 1), (1, 2), (0, 3)])
    bundle = metrics.structure_metrics(ref.adjacency(), ref)
    assert bundle.auroc == 1.0
    assert bundle.auprc == 1.0
    assert bundle.tpr == 1.0
    assert bundle.tnr == 1.0
    assert bundle.shd_thresholded == 0.0
    assert bundle.expected_edges == 3.0


def test_structure_metrics_flat_marginals():
    ref = dag_from_edges(3, [(0, 1)])
    bundle = metrics.structure_metrics(np.full((3, 3), 0.3), ref)
    assert bundle.tpr == 0.0
    assert bundle.tnr == 1.0
    assert bundle.shd_thresholded == 1.0


def test_structure_metrics_null_distribution():
    # random marginals vs random graphs: mean AUROC concentrates near 1/2
    rng = np.random.default_rng(0)
    aurocs = []
    for _ in range(200):
        marg = rng.uniform(size=(10, 10))
        np.fill_diagonal(marg, 0.0)
        edges = [(i, j) for i in range(10) for j in range(i + 1, 10) if rng.random() < 0.2]
        ref = dag_from_edges(10, edges)
        if not edges:
            continue
        bundle = metrics.structure_metrics(marg, ref)
        aurocs.append(bundle.auroc)
    assert abs(np.mean(aurocs) - 0.5) < 0.03


def test_structure_metrics_degenerate_reference():
    ref = dag_from_edges(3, [])
    bundle = metrics.structure_metrics(np.zeros((3, 3)), ref)
    assert bundle.auroc is None and bundle.auprc is None
    assert bundle.tnr == 1.0


def test_auroc_invariant_under_monotone_transform():
    rng = np.random.default_rng(1)
    marg = rng.uniform(size=(6, 6))
    np.fill_diagonal(marg, 0.0)
    ref = dag_from_edges(6, [(0, 1), (2, 3), (1, 4)])
    a = metrics.structure_metrics(marg, ref).auroc
    b = metrics.structure_metrics(np.sqrt(marg), ref).auroc
    assert a == pytest.approx(b, abs=1e-12)


def test_gaussian_kernel_diagonal_is_scale():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 3))
    gram = metrics.gaussian_kernel_gram(x, x, metrics.MmdKernelConfig())
    np.testing.assert_allclose(np.diag(gram), np.full(5, 1000.0))


def test_mmd_two_point_masses_analytic():
    kernel = metrics.MmdKernelConfig(scale=1.0, lengthscale=0.2)
    left = metrics.WeightedSampleSet.uniform(np.zeros((10, 1)))
    right = np.full((15, 1), 10.0)
    expected = 2.0 * (1.0 - np.exp(-250.0))
    assert metrics.mmd_squared(left, right, kernel) == pytest.approx(expected, abs=1e-6)
    assert metrics.mmd(left, right, kernel) == pytest.approx(np.sqrt(expected), abs=1e-6)


def test_mmd_matches_double_loop_reference():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(12, 2))
    w = rng.uniform(0.5, 1.5, size=12)
    w /= w.sum()
    y = rng.normal(size=(9, 2))
    kernel = metrics.MmdKernelConfig(scale=3.0, lengthscale=0.7)

    def k(a, b):
        return kernel.scale * np.exp(-((a - b) ** 2).sum() / (2 * kernel.lengthscale))

    term1 = sum(
        w[i] * w[j] / (w.sum() - w[i]) * k(x[i], x[j])
        for i in range(12)
        for j in range(12)
        if j != i
    )
    term2 = -2.0 / 9 * sum(w[i] * k(x[i], y[j]) for i in range(12) for j in range(9))
    term3 = sum(k(y[i], y[j]) for i in range(9) for j in range(9) if i != j) / (9 * 8)
    reference = term1 + term2 + term3
    ours = metrics.mmd_squared(metrics.WeightedSampleSet(x, w), y, kernel)
    assert ours == pytest.approx(reference, abs=1e-12)


def test_mmd_self_comparison_unbiased():
    # identical distributions: the squared-discrepancy estimator centers on 0
    rng = np.random.default_rng(4)
    kernel = metrics.MmdKernelConfig(scale=1.0, lengthscale=0.5)
    values = []
    for _ in range(10):
        x = rng.normal(size=(500, 2))
        y = rng.normal(size=(500, 2))
        values.append(metrics.mmd_squared(metrics.WeightedSampleSet.uniform(x), y, kernel))
    values = np.array(values)
    se = values.std(ddof=1) / np.sqrt(len(values))
    assert abs(values.mean()) < 3 * se


def test_mmd_symmetric_for_uniform_weights():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(40, 1))
    y = rng.normal(loc=0.5, size=(40, 1))
    kernel = metrics.MmdKernelConfig(scale=2.0, lengthscale=0.3)
    a = metrics.mmd_squared(metrics.WeightedSampleSet.uniform(x), y, kernel)
    b = metrics.mmd_squared(metrics.WeightedSampleSet.uniform(y), x, kernel)
    assert a == pytest.approx(b, rel=1e-9)


def test_mmd_too_few_samples():
    left = metrics.WeightedSampleSet.uniform(np.zeros((5, 1)))
    with pytest.raises(TooFewSamplesError):
        metrics.mmd(left, np.zeros((1, 1)))


def test_mean_distance_cases():
    left = metrics.WeightedSampleSet.uniform(np.array([[3.0, 4.0], [3.0, 4.0]]))
    right = np.zeros((5, 2))
    assert metrics.mean_distance(left, right, 1) == pytest.approx(7.0)
    assert metrics.mean_distance(left, right, 2) == pytest.approx(5.0)
    assert metrics.mean_distance(left, left.samples, 2) == pytest.approx(0.0)


def test_mean_distance_concentrated_weights():
    samples = np.array([[1.0], [100.0]])
    left = metrics.WeightedSampleSet(samples, np.array([1.0, 0.0]))
    assert metrics.mean_distance(left, np.array([[1.0]]), 2) == pytest.approx(0.0)


def test_kde_single_sample_is_normal_pdf():
    from scipy import stats

    left = metrics.WeightedSampleSet(np.array([[0.0]]), np.array([1.0]))
    grid = np.linspace(-3, 3, 101)
    dens = metrics.kde(left, 0.5, grid)
    np.testing.assert_allclose(dens, stats.norm.pdf(grid, scale=0.5), atol=1e-12)


def test_kde_two_component_mixture():
    from scipy import stats

    left = metrics.WeightedSampleSet(np.array([[-1.0], [1.0]]), np.array([0.5, 0.5]))
    grid = np.linspace(-4, 4, 201)
    dens = metrics.kde(left, 0.2, grid)
    expected = 0.5 * stats.norm.pdf(grid, -1, 0.2) + 0.5 * stats.norm.pdf(grid, 1, 0.2)
    np.testing.assert_allclose(dens, expected, atol=1e-12)


def test_kde_mass_integrates_to_one():
    rng = np.random.default_rng(6)
    samples = rng.normal(size=(200, 1))
    w = rng.uniform(size=200)
    w /= w.sum()
    left = metrics.WeightedSampleSet(samples, w)
    h = 0.2
    grid = np.linspace(samples.min() - 8 * h, samples.max() + 8 * h, 4001)
    dens = metrics.kde(left, h, grid)
    assert (dens >= 0).all()
    mass = np.trapezoid(dens, grid)
    assert abs(mass - 1.0) < 1e-3
