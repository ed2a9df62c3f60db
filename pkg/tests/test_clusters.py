import math

import numpy as np
import pytest
from scipy.stats import norm

from gcl import (
    ClusterLaw,
    ClusterVector,
    Ball,
    DiagnosticsReport,
    FixedSize,
    GibbsRunParams,
    GroundConfiguration,
    MarkedConfiguration,
    MarkedPoint,
    PoissonSize,
    ReferenceMeasure,
    Window,
    ZeroPotential,
    diagnose,
    droplet_theta_measure,
    lift,
    project_px,
    project_q,
    sample_cluster,
    sample_cluster_process,
    sample_marked_ensemble,
)

UNIT = Window([0.0, 0.0], [1.0, 1.0])
LAW2 = ClusterLaw(PoissonSize(2.0), offset_std=0.1)


class TestSizeLaws:
    def test_fixed_pmf_and_moments(self):
        f = FixedSize(3)
        assert f.pmf(3) == 1.0
        assert f.pmf(2) == 0.0
        assert f.mean == 3.0
        assert f.second_moment == 9.0
        with pytest.raises(ValueError):
            FixedSize(-1)

    def test_poisson_pmf_and_moments(self):
        p = PoissonSize(2.0)
        assert p.pmf(0) == pytest.approx(math.exp(-2.0))
        assert p.pmf(2) == pytest.approx(2.0 * math.exp(-2.0))
        assert p.pmf(-1) == 0.0
        assert sum(p.pmf(k) for k in range(60)) == pytest.approx(1.0)
        assert p.mean == 2.0
        assert p.second_moment == 6.0
        with pytest.raises(ValueError):
            PoissonSize(0.0)

    def test_law_validation(self):
        with pytest.raises(ValueError):
            ClusterLaw(FixedSize(1), offset_std=0.0)


class TestClusterDensity:
    def test_log_h_zero_probability_size(self):
        law = ClusterLaw(FixedSize(2), offset_std=0.5)
        wrong = ClusterVector(np.array([[0.1, 0.0]]))
        assert law.log_h(wrong) == -math.inf

    def test_log_h_empty_cluster(self):
        law = ClusterLaw(PoissonSize(2.0), offset_std=0.5)
        empty = ClusterVector(np.empty((0, 2)))
        assert law.log_h(empty) == pytest.approx(math.log(math.exp(-2.0)))

    def test_log_offset_density_matches_gaussian(self):
        law = ClusterLaw(FixedSize(2), offset_std=0.3)
        offs = np.array([[0.1, -0.2], [0.05, 0.4]])
        expected = norm.logpdf(offs.ravel(), scale=0.3).sum()
        assert law.log_offset_density(offs) == pytest.approx(expected, rel=1e-12)

    def test_offset_score(self):
        law = ClusterLaw(FixedSize(1), offset_std=0.2)
        y = np.array([[0.1, -0.3]])
        assert np.allclose(law.offset_score(y), -y / 0.04)

    def test_score_is_gradient_of_log_density(self):
        law = ClusterLaw(FixedSize(1), offset_std=0.25)
        y = np.array([[0.07, -0.12]])
        h = 1e-6
        for j in range(2):
            e = np.zeros((1, 2))
            e[0, j] = h
            fd = (law.log_offset_density(y + e) - law.log_offset_density(y - e)) / (2 * h)
            assert law.offset_score(y)[0, j] == pytest.approx(fd, abs=1e-6)


class TestSampleCluster:
    def test_fixed_zero(self):
        c = sample_cluster(ClusterLaw(FixedSize(0), 0.1), np.random.default_rng(0))
        assert c.size == 0

    def test_fixed_three_moments(self):
        law = ClusterLaw(FixedSize(3), offset_std=0.2)
        rng = np.random.default_rng(1)
        draws = [sample_cluster(law, rng) for _ in range(2000)]
        assert all(c.size == 3 for c in draws)
        offs = np.concatenate([c.offsets for c in draws])
        n = offs.shape[0] * 2
        assert abs(offs.mean()) < 4 * 0.2 / math.sqrt(n)
        assert abs(offs.var() - 0.04) < 5 * 0.04 * math.sqrt(2.0 / n)

    def test_poisson_sizes(self):
        rng = np.random.default_rng(2)
        sizes = np.array([sample_cluster(LAW2, rng).size for _ in range(3000)])
        se = sizes.std(ddof=1) / math.sqrt(len(sizes))
        assert abs(sizes.mean() - 2.0) < 4 * se

    def test_dimension_argument(self):
        c = sample_cluster(ClusterLaw(FixedSize(2), 0.1), np.random.default_rng(3), dimension=3)
        assert c.offsets.shape == (2, 3)


class TestLiftAndProjections:
    def test_lift_preserves_centers(self):
        centers = GroundConfiguration(np.array([[0.2, 0.3], [0.7, 0.8]]), UNIT)
        marked = lift(centers, LAW2, np.random.default_rng(4))
        assert project_px(marked) == centers

    def test_px_after_lift_is_identity(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0.0, 1.0, (15, 2))
        centers = GroundConfiguration(pts, UNIT)
        for seed in range(5):
            marked = lift(centers, LAW2, np.random.default_rng(seed))
            assert project_px(marked) == centers

    def test_project_q_translates_clusters(self):
        x = np.array([0.5, 0.5])
        u = np.array([0.1, 0.0])
        v = np.array([0.0, -0.2])
        marked = MarkedConfiguration(
            [MarkedPoint(x, ClusterVector(np.array([u, v])))], UNIT
        )
        proj = project_q(marked)
        expected = GroundConfiguration(np.array([x + u, x + v]), proj.window)
        assert proj == expected

    def test_projection_count_is_total_offspring(self):
        rng = np.random.default_rng(6)
        centers = GroundConfiguration(rng.uniform(0.0, 1.0, (12, 2)), UNIT)
        marked = lift(centers, LAW2, rng)
        proj = project_q(marked, margin=0.6)
        assert len(proj) == marked.total_offspring

    def test_projection_window_margin_and_hull(self):
        marked = MarkedConfiguration(
            [MarkedPoint(np.array([0.5, 0.5]), ClusterVector(np.array([[0.9, 0.0]])))],
            UNIT,
        )
        proj = project_q(marked, margin=0.2)
        assert (proj.window.lower <= -0.2 + 1e-12).all()
        assert proj.window.contains(proj.points).all()
        assert proj.window.upper[0] >= 1.4

    def test_empty_clusters_give_empty_projection(self):
        centers = GroundConfiguration(np.array([[0.2, 0.2], [0.8, 0.8]]), UNIT)
        marked = lift(centers, ClusterLaw(FixedSize(0), 0.1), np.random.default_rng(7))
        proj = project_q(marked)
        assert len(proj) == 0
        assert marked.total_offspring == 0

    def test_exact_projected_coincidence_raises(self):
        # Dyadic coordinates make the two projections bit-identical.
        mp1 = MarkedPoint(np.array([0.25, 0.25]), ClusterVector(np.array([[0.25, 0.25]])))
        mp2 = MarkedPoint(np.array([0.75, 0.75]), ClusterVector(np.array([[-0.25, -0.25]])))
        marked = MarkedConfiguration([mp1, mp2], UNIT)
        with pytest.raises(ValueError):
            project_q(marked)


class TestClusterProcess:
    def gibbs(self, seed=0, n_samples=1):
        theta = ReferenceMeasure(20.0, UNIT)
        return GibbsRunParams(
            ZeroPotential(), theta, n_samples=n_samples, seed=seed, burn_in=500, thinning=10
        )

    def test_tiny_spread_projection_hugs_centers(self):
        law = ClusterLaw(FixedSize(1), offset_std=1e-6)
        centers, marked, proj = sample_cluster_process(
            self.gibbs(seed=8), law, np.random.default_rng(8)
        )
        assert len(proj) == len(centers)
        # One point per center: match each projected point to its center.
        d = np.linalg.norm(
            centers.points[:, None, :] - proj.points[None, :, :], axis=-1
        )
        assert d.min(axis=1).max() < 1e-4

    def test_centers_deterministic_in_seed(self):
        law = ClusterLaw(FixedSize(1), offset_std=0.05)
        c1, m1, _ = sample_cluster_process(self.gibbs(seed=9), law, np.random.default_rng(1))
        c2, m2, _ = sample_cluster_process(self.gibbs(seed=9), law, np.random.default_rng(2))
        assert c1 == c2
        assert m1 != m2

    def test_marked_ensemble_shapes(self):
        law = ClusterLaw(PoissonSize(1.5), offset_std=0.05)
        centers, marked = sample_marked_ensemble(
            self.gibbs(seed=10, n_samples=30), law, np.random.default_rng(10)
        )
        assert len(centers) == len(marked) == 30
        for c, m in zip(centers, marked):
            assert project_px(m) == c

    def test_projected_intensity_against_convolution_quadrature(self):
        """Mean projected count in a box from the smoothed-intensity formula.

        For interaction-free centers the projected process has intensity
        (intensity * mean size) times the Gaussian-smoothed window indicator,
        so E[count in B] factorizes into per-axis Gaussian-CDF integrals.
        """
        s = 0.1
        law = ClusterLaw(FixedSize(2), offset_std=s)
        intensity = 20.0
        b = Window([0.3, 0.3], [0.7, 0.7])

        nodes, weights = np.polynomial.legendre.leggauss(200)
        t = 0.5 * (nodes + 1.0)
        axis_integral = 0.5 * np.sum(
            weights * (norm.cdf((0.7 - t) / s) - norm.cdf((0.3 - t) / s))
        )
        expected = intensity * 2.0 * axis_integral ** 2

        theta = ReferenceMeasure(intensity, UNIT)
        params = GibbsRunParams(ZeroPotential(), theta, n_samples=2500, seed=11)
        rng = np.random.default_rng(11)
        _, marked = sample_marked_ensemble(params, law, rng)
        counts = np.array(
            [
                float(np.count_nonzero(b.contains(project_q(m, 0.6).points)))
                if m.total_offspring
                else 0.0
                for m in marked
            ]
        )
        se = counts.std(ddof=1) / math.sqrt(len(counts))
        assert abs(counts.mean() - expected) < 4 * se


def union_length_1d(region: Window, offsets: np.ndarray) -> float:
    intervals = sorted(
        (float(region.lower[0] - y), float(region.upper[0] - y)) for y in offsets[:, 0]
    )
    total = 0.0
    cur_lo, cur_hi = intervals[0]
    for lo, hi in intervals[1:]:
        if lo > cur_hi:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    return total + (cur_hi - cur_lo)


class TestDropletMeasure:
    SEG = Window([0.0], [1.0])
    THETA1 = ReferenceMeasure(1.0, Window([0.0], [1.0]))

    def test_empty_cluster(self):
        v, e = droplet_theta_measure(self.SEG, ClusterVector(np.empty((0, 1))), self.THETA1)
        assert v == 0.0 and e == 0.0

    def test_single_offset(self):
        v, e = droplet_theta_measure(
            self.SEG, ClusterVector(np.array([[7.3]])), self.THETA1
        )
        assert v == pytest.approx(1.0)
        assert e == 0.0

    def test_two_overlapping_translates(self):
        ybar = ClusterVector(np.array([[0.0], [0.5]]))
        v, e = droplet_theta_measure(self.SEG, ybar, self.THETA1)
        assert v == pytest.approx(1.5)
        assert e == 0.0

    def test_ball_region_single_translate(self):
        # a single translate of a ball keeps the ball's volume
        ball = Ball([0.5, 0.5], 0.1)
        theta = ReferenceMeasure(20.0, UNIT)
        v, e = droplet_theta_measure(ball, ClusterVector(np.array([[0.4, -0.3]])), theta)
        assert e > 0.0
        assert v == pytest.approx(20.0 * math.pi * 0.01, rel=0.02)

    def test_ball_region_disjoint_translates_add(self):
        ball = Ball([0.5, 0.5], 0.1)
        theta = ReferenceMeasure(20.0, UNIT)
        ybar = ClusterVector(np.array([[0.0, 0.0], [0.5, 0.5]]))
        v, e = droplet_theta_measure(ball, ybar, theta)
        assert v == pytest.approx(2.0 * 20.0 * math.pi * 0.01, rel=0.05)

    def test_far_translates_add(self):
        theta = ReferenceMeasure(3.0, Window([0.0, 0.0], [1.0, 1.0]))
        region = Window([0.0, 0.0], [0.5, 0.5])
        ybar = ClusterVector(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]))
        v, e = droplet_theta_measure(region, ybar, theta)
        assert v == pytest.approx(3 * 3.0 * 0.25)
        assert e == 0.0

    def test_exact_path_matches_interval_union(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = rng.integers(2, 5)
            offs = rng.normal(0.0, 0.7, (n, 1))
            v, e = droplet_theta_measure(self.SEG, ClusterVector(offs), self.THETA1)
            assert e == 0.0
            assert v == pytest.approx(union_length_1d(self.SEG, offs), rel=1e-12)

    def test_qmc_path_matches_interval_union(self):
        rng = np.random.default_rng(13)
        offs = rng.normal(0.0, 0.7, (5, 1))
        v, e = droplet_theta_measure(
            self.SEG, ClusterVector(offs), self.THETA1, n_qmc=4096, n_replicates=8,
            rng=np.random.default_rng(99),
        )
        assert e > 0.0
        oracle = union_length_1d(self.SEG, offs)
        assert abs(v - oracle) < max(5 * e, 1e-3)

    def test_qmc_disjoint_translates(self):
        region = Window([0.0, 0.0], [0.3, 0.3])
        offs = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0], [6.0, 0.0], [8.0, 0.0]])
        theta = ReferenceMeasure(2.0, UNIT)
        v, e = droplet_theta_measure(
            region, ClusterVector(offs), theta, rng=np.random.default_rng(14)
        )
        assert abs(v - 5 * 2.0 * 0.09) < max(5 * e, 1e-3)

    def test_offset_order_invariance(self):
        offs = np.array([[0.1], [-0.4], [0.3]])
        v1, _ = droplet_theta_measure(self.SEG, ClusterVector(offs), self.THETA1)
        v2, _ = droplet_theta_measure(self.SEG, ClusterVector(offs[::-1]), self.THETA1)
        assert v1 == pytest.approx(v2, rel=1e-14)


class TestDiagnose:
    THETA = ReferenceMeasure(2.0, UNIT)
    REGION = Window([0.2, 0.2], [0.8, 0.8])

    def test_fixed_one_is_exact(self):
        law = ClusterLaw(FixedSize(1), offset_std=0.3)
        report = diagnose(law, self.THETA, self.REGION, n_mc=1000)
        assert report.sigma_zb == pytest.approx(2.0 * 0.36)
        assert report.sigma_zb_se == pytest.approx(0.0, abs=1e-12)
        assert report.mean_cluster_size == 1.0
        assert report.passed()

    def test_fixed_zero(self):
        law = ClusterLaw(FixedSize(0), offset_std=0.3)
        report = diagnose(law, self.THETA, self.REGION, n_mc=1000)
        assert report.sigma_zb == 0.0
        assert report.passed()

    def test_poisson_respects_subadditive_bound(self):
        report = diagnose(LAW2, self.THETA, self.REGION, n_mc=1200, rng=np.random.default_rng(15))
        bound = report.extras["subadditive_bound"]
        assert bound == pytest.approx(2.0 * 2.0 * 0.36)
        assert report.sigma_zb <= bound + 4 * report.sigma_zb_se
        assert report.passed()
        assert abs(report.extras["z_mean_size"]) < 4

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            diagnose(LAW2, self.THETA, self.REGION, n_mc=100)

    def test_passed_logic(self):
        report = DiagnosticsReport(
            mean_cluster_size=1.0,
            second_moment=1.0,
            sigma_zb=0.1,
            sigma_zb_se=0.0,
            flag_a_i="pass",
            flag_a_ii="fail",
            flag_b_i="pass",
            flag_b_ii="pass",
            extras={},
        )
        assert not report.passed()
