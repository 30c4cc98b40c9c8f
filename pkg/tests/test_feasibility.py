import numpy as np
import pytest

from avoidlab import feasibility as fz
from avoidlab.errors import ContractViolation

BOUNDS_1D = np.array([[0.0, 1.0]])
BOUNDS_2D = np.array([[0.0, 1.0], [0.0, 1.0]])


class StubClassifier:
    def __init__(self, fn):
        self.fn = fn

    def predict(self, thetas):
        thetas = np.atleast_2d(thetas)
        return np.array([self.fn(t) for t in thetas], dtype=float)


def test_record_feasible_empty_then_duplicate():
    fs = fz.FeasibleSet(BOUNDS_2D, resolution=256)
    theta = np.array([0.5, 0.5])
    assert fz.record_feasible(fs, theta) is True
    assert fz.record_feasible(fs, theta + fs.delta / 2) is False
    assert len(fs) == 1


def test_record_feasible_counts_grid_cells():
    fs = fz.FeasibleSet(BOUNDS_1D, resolution=16)
    rng = np.random.default_rng(0)
    cells = rng.integers(0, 16, size=1000)
    thetas = (cells + 0.5) / 16.0  # cell centers: duplicates iff same cell
    for t in thetas:
        fz.record_feasible(fs, np.array([t]))
    assert len(fs) == len(np.unique(cells))


def test_feasible_set_dedup_is_idempotent_and_append_only():
    fs = fz.FeasibleSet(BOUNDS_1D)
    rng = np.random.default_rng(1)
    sizes = []
    for _ in range(200):
        fz.record_feasible(fs, rng.uniform(0, 1, size=1))
        sizes.append(len(fs))
    assert all(b >= a for a, b in zip(sizes, sizes[1:]))
    theta = fs.thetas[0].copy()
    assert fz.record_feasible(fs, theta) is False


def test_feasible_set_snapshot_roundtrip(tmp_path):
    fs = fz.FeasibleSet(BOUNDS_2D)
    rng = np.random.default_rng(2)
    for _ in range(50):
        fs.add(rng.uniform(0, 1, size=2))
    path = tmp_path / "df.npz"
    fs.save(path)
    loaded = fz.FeasibleSet.load(path)
    assert np.array_equal(loaded.thetas, fs.thetas)


def test_draw_pmix_degenerate_mixtures():
    fs = fz.FeasibleSet(BOUNDS_1D)
    fs.add(np.array([0.25]))
    episodes = [(np.array([0.7]), False), (np.array([0.4]), True)]
    rng = np.random.default_rng(3)
    all_pos = fz.draw_pmix(fs, episodes, alpha=1.0, n=50, rng=rng)
    assert all(s.label == 1 and s.source == fz.MEASURED_FEASIBLE for s in all_pos)
    all_rollout = fz.draw_pmix(fs, episodes, alpha=0.0, n=50, rng=rng)
    assert all(s.source == fz.ON_POLICY for s in all_rollout)


def test_draw_pmix_source_proportions():
    fs = fz.FeasibleSet(BOUNDS_1D)
    fs.add(np.array([0.25]))
    episodes = [(np.array([0.7]), False)]
    rng = np.random.default_rng(4)
    n = 10_000
    samples = fz.draw_pmix(fs, episodes, alpha=0.5, n=n, rng=rng)
    frac = np.mean([s.source == fz.MEASURED_FEASIBLE for s in samples])
    se = np.sqrt(0.25 / n)
    assert abs(frac - 0.5) <= 3 * se


def test_draw_pmix_empty_set_falls_back():
    fs = fz.FeasibleSet(BOUNDS_1D)
    episodes = [(np.array([0.7]), False)]
    stats = {}
    samples = fz.draw_pmix(fs, episodes, alpha=0.9, n=20, rng=np.random.default_rng(5), stats=stats)
    assert stats["pmix_fallback"] is True
    assert all(s.source == fz.ON_POLICY for s in samples)


def test_labeled_sample_invariant():
    with pytest.raises(ContractViolation):
        fz.LabeledParamSample(np.array([0.1]), 0, fz.MEASURED_FEASIBLE)


def test_mixture_config_open_interval():
    fz.MixtureConfig(alpha=0.5, beta=0.5)
    with pytest.raises(ContractViolation):
        fz.MixtureConfig(alpha=1.0, beta=0.5)
    with pytest.raises(ContractViolation):
        fz.MixtureConfig(alpha=0.5, beta=0.0)


def test_train_classifier_all_positive():
    rng = np.random.default_rng(6)
    clf = fz.FeasibilityClassifier(BOUNDS_1D, hidden=(16, 16), lr=1e-2, rng=rng)
    thetas = rng.uniform(0.2, 0.8, size=(128, 1))
    samples = [fz.LabeledParamSample(t, 1, fz.MEASURED_FEASIBLE) for t in thetas]
    fz.train_classifier(clf, samples, epochs=150, rng=rng)
    assert np.all(clf.predict(thetas) >= 0.9)


def test_train_classifier_separable_clusters():
    rng = np.random.default_rng(7)
    clf = fz.FeasibilityClassifier(BOUNDS_1D, hidden=(16, 16), lr=1e-2, rng=rng)
    pos = rng.uniform(0.05, 0.35, size=(200, 1))
    neg = rng.uniform(0.65, 0.95, size=(200, 1))
    thetas = np.vstack([pos, neg])
    labels = np.concatenate([np.ones(200), np.zeros(200)])
    clf.train_on(thetas, labels, epochs=200, rng=rng)
    held_pos = rng.uniform(0.05, 0.35, size=(100, 1))
    held_neg = rng.uniform(0.65, 0.95, size=(100, 1))
    preds = np.concatenate([clf.predict(held_pos) >= 0.5, clf.predict(held_neg) < 0.5])
    assert np.mean(preds) >= 0.99


def test_train_classifier_fifty_fifty_labels():
    rng = np.random.default_rng(8)
    clf = fz.FeasibilityClassifier(BOUNDS_1D, hidden=(16, 16), lr=1e-2, rng=rng)
    theta = np.tile(np.array([[0.5]]), (100, 1))
    labels = np.array([1.0, 0.0] * 50)
    clf.train_on(theta, labels, epochs=100, rng=rng)
    assert abs(clf.predict(np.array([[0.5]]))[0] - 0.5) <= 0.05


def test_train_classifier_rejects_empty():
    clf = fz.FeasibilityClassifier(BOUNDS_1D, rng=np.random.default_rng(9))
    with pytest.raises(ContractViolation):
        fz.train_classifier(clf, [], epochs=1, rng=np.random.default_rng(9))


def test_classify_threshold_semantics():
    clf = StubClassifier(lambda t: 0.5)
    assert fz.classify(clf, np.array([0.1]), beta=0.5) is True  # >= convention
    assert fz.classify(StubClassifier(lambda t: 0.0), np.array([0.1]), beta=0.5) is False


def test_classify_monotone_in_beta():
    rng = np.random.default_rng(10)
    clf = StubClassifier(lambda t: float(t[0]))
    for _ in range(100):
        theta = rng.uniform(0, 1, size=1)
        b1, b2 = sorted(rng.uniform(0.01, 0.99, size=2))
        if fz.classify(clf, theta, b2):
            assert fz.classify(clf, theta, b1)  # raising beta never flips false->true


def base_sampler_uniform(rng, n):
    return rng.uniform(0.0, 1.0, size=(n, 2))


def test_sample_infeasible_trivial_paths():
    rng = np.random.default_rng(11)
    always_infeasible = StubClassifier(lambda t: 0.0)
    theta, exhausted = fz.sample_infeasible(always_infeasible, base_sampler_uniform, 0.5, 10, rng)
    assert not exhausted
    always_feasible = StubClassifier(lambda t: 1.0)
    theta, exhausted = fz.sample_infeasible(always_feasible, base_sampler_uniform, 0.5, 10, rng)
    assert exhausted


def test_sample_infeasible_first_rejected_draw():
    # with a fresh identically-seeded rng, the accepted draw must be the
    # first rejected candidate in base-sampler order
    clf = StubClassifier(lambda t: 1.0 if t[0] < 0.6 else 0.0)
    theta, exhausted = fz.sample_infeasible(clf, base_sampler_uniform, 0.5, 64, np.random.default_rng(12))
    cand = base_sampler_uniform(np.random.default_rng(12), 64)
    first = cand[np.nonzero(cand[:, 0] >= 0.6)[0][0]]
    assert not exhausted and np.array_equal(theta, first)


def test_sample_infeasible_half_space_geometry():
    clf = StubClassifier(lambda t: 1.0 if t[0] < 0.5 else 0.0)  # right half rejected
    rng = np.random.default_rng(13)
    for _ in range(1000):
        theta, exhausted = fz.sample_infeasible(clf, base_sampler_uniform, 0.5, 64, rng)
        assert not exhausted and theta[0] >= 0.5


def test_exact_mixture_conditional_values():
    assert fz.exact_mixture_conditional(0.3, 0.7, 1.2, 0.0, 0.0) == 0.0
    assert np.isclose(fz.exact_mixture_conditional(0.5, 1.0, 1.0, 1.0, 0.6), 0.8)
    assert np.isclose(fz.exact_mixture_conditional(0.27, 0.4, 2.1, 1.0, 1.0), 1.0)
    with pytest.raises(ContractViolation):
        fz.exact_mixture_conditional(0.5, 0.0, 0.0, 1.0, 1.0)


def test_theorem1_threshold_values():
    # attenuation ratio of one: alpha p_df = (1-alpha) rho
    assert np.isclose(fz.theorem1_threshold(0.5, 0.5, 1.0, 1.0), 0.0)
    assert fz.theorem1_threshold(0.5, 0.5, 0.0, 1.0) == -np.inf
    assert fz.theorem1_threshold(0.999999, 0.5, 1.0, 1.0) < -1e5


def test_theorem1_threshold_consistency_with_conditional():
    rng = np.random.default_rng(14)
    for _ in range(2000):
        alpha = rng.uniform(0.05, 0.95)
        beta = rng.uniform(0.05, 0.95)
        rho = rng.uniform(0.01, 3.0)
        p_df = rng.uniform(0.01, 3.0)
        p_pi = rng.uniform(0.0, 1.0)
        thr = fz.theorem1_threshold(alpha, beta, rho, p_df)
        cond = fz.exact_mixture_conditional(alpha, p_df, rho, 1.0, p_pi)
        if p_pi >= thr + 1e-9:
            assert cond >= beta - 1e-9
        if p_pi <= thr - 1e-9:
            assert cond <= beta + 1e-9


def test_fixed_point_single_atom():
    fp = fz.fixed_point_error(0.5, np.array([1.0]), np.array([1.0]), np.array([0.4]))
    assert np.isclose(fp.q_cond[0], 0.2)
    assert np.isclose(fp.q_marginal, 0.2)
    it = fz.fixed_point_iterate(0.5, np.array([1.0]), np.array([1.0]), np.array([0.4]))
    assert np.allclose(it.q_cond, fp.q_cond)


def test_fixed_point_zero_is_absorbing():
    fp = fz.fixed_point_error(0.3, np.array([0.5, 0.5]), np.array([0.5, 0.5]), np.zeros(2))
    assert np.all(fp.q_cond == 0.0) and fp.q_marginal == 0.0
    it = fz.fixed_point_iterate(0.3, np.array([0.5, 0.5]), np.array([0.5, 0.5]), np.zeros(2))
    assert np.all(it.q_cond == 0.0)


def test_fixed_point_worst_case_policy_bound():
    # p_pi(f=0|theta) = 1 with alpha >= (1-eps) p / p_df forces error <= eps
    rng = np.random.default_rng(15)
    for eps in (0.1, 0.01):
        for _ in range(200):
            m = rng.integers(1, 6)
            p = rng.dirichlet(np.ones(m))
            p = np.maximum(p, 1e-3)
            p /= p.sum()
            p_df = rng.dirichlet(np.ones(m))
            p_df = np.maximum(p_df, 1e-3)
            p_df /= p_df.sum()
            alpha_needed = np.max((1.0 - eps) * p / p_df)
            alpha = min(alpha_needed, 0.999999)
            if alpha_needed > 1.0:
                continue  # the bound's premise cannot be met for this instance
            fp = fz.fixed_point_error(alpha, p_df, p, np.ones(m))
            assert np.all(fp.q_cond <= eps + 1e-12)


def test_fixed_point_iteration_matches_closed_form_unclamped():
    rng = np.random.default_rng(16)
    done = 0
    while done < 200:
        m = rng.integers(1, 10)
        alpha = rng.uniform(0.05, 0.95)
        p = np.maximum(rng.dirichlet(np.ones(m)), 1e-3)
        p /= p.sum()
        p_df = np.maximum(rng.dirichlet(np.ones(m)), 1e-3)
        p_df /= p_df.sum()
        a = rng.uniform(0.05, 1.0, size=m)
        raw = a - alpha * p_df * np.sum(a * p) / p
        if np.min(raw) < 0.05:  # stay clear of the clamped regime
            continue
        done += 1
        fp = fz.fixed_point_error(alpha, p_df, p, a)
        it = fz.fixed_point_iterate(alpha, p_df, p, a, iters=500)
        assert np.max(np.abs(fp.q_cond - it.q_cond)) <= 1e-6


def test_fixed_point_rejects_zero_base_density():
    with pytest.raises(ContractViolation):
        fz.fixed_point_error(0.5, np.array([1.0]), np.array([0.0]), np.array([0.4]))


def test_train_policy_classifier_bernoulli_means():
    rng = np.random.default_rng(17)
    clf = fz.FeasibilityClassifier(BOUNDS_1D, hidden=(16, 16), lr=3e-3, rng=rng)
    # safety probability rises linearly in theta
    thetas = rng.uniform(0, 1, size=(8000, 1))
    labels = (rng.random(8000) < thetas[:, 0]).astype(float)
    episodes = [(t, bool(l)) for t, l in zip(thetas, labels)]
    fz.train_policy_classifier(clf, episodes, epochs=80, rng=rng, minibatch=512)
    grid = np.linspace(0.1, 0.9, 9)[:, None]
    assert np.max(np.abs(clf.predict(grid) - grid[:, 0])) <= 0.05


def test_export_classifier_grid(tmp_path):
    clf = fz.FeasibilityClassifier(BOUNDS_2D, hidden=(8,), rng=np.random.default_rng(18))
    path = tmp_path / "grid.csv"
    grid, probs = fz.export_classifier_grid(clf, BOUNDS_2D, 8, path)
    assert grid.shape == (64, 2) and probs.shape == (64,)
    text = path.read_text().splitlines()
    assert text[0] == "theta0,theta1,prob"
    assert len(text) == 65
