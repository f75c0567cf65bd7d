"""Step equivalence, consensus-error recursion, trajectories, Monte Carlo."""

import numpy as np
import pytest

from subgradnet import (CommNoiseModel, CustomObjective, DeterministicCycle,
                        DivergenceDetected, IndependentEdges, InitialStates,
                        QuadraticObjective, StepSchedule, apply_step,
                        consensus_projection, default_record_ks,
                        delta_recursion_check, draw_channel_noise, laplacian,
                        monte_carlo, run_trajectory, stacked_noise_matrices,
                        step_compact, step_per_node)
from subgradnet.engine import replication_stream


def zero_objective(n_nodes, dim):
    return CustomObjective(
        cost_fns=tuple([lambda x: 0.0] * n_nodes),
        subgradient_fns=tuple([lambda x: np.zeros_like(x)] * n_nodes),
        dim=dim, sigma_d_values=[0.0] * n_nodes, c_d_values=[0.0] * n_nodes)


def schedule_with(c0=None, alpha1=1.0):
    if c0 is None:
        return StepSchedule(alpha1=alpha1)
    alpha2 = c0 * (3.0 ** 0.75) * np.log(3.0)
    return StepSchedule(alpha1=alpha1, alpha2=alpha2)


def random_adjacency(rng, n, allow_negative=True, density=0.7):
    a = rng.normal(size=(n, n)) if allow_negative else rng.random((n, n))
    a = a * (rng.random((n, n)) < density)
    np.fill_diagonal(a, 0.0)
    return a


class TestConsensusProjection:
    def test_consensus_state_maps_to_zero(self):
        x = np.tile([2.0, -3.0], 4)
        assert np.allclose(consensus_projection(x, 4, 2), 0.0)

    def test_two_node_scalar(self):
        out = consensus_projection(np.array([5.0, 1.0]), 2, 1)
        assert np.allclose(out, [2.0, -2.0])

    def test_norm_bounded_by_state_and_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            x = rng.normal(size=12)
            delta = consensus_projection(x, 4, 3)
            assert np.linalg.norm(delta) <= np.linalg.norm(x) + 1e-12
            assert np.allclose(consensus_projection(delta, 4, 3), delta, atol=1e-12)
            assert abs(delta.reshape(4, 3).sum(axis=0)).max() <= 1e-12


class TestStepEquivalence:
    def test_no_coupling_no_descent_leaves_state(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 2))
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=2)
        out = step_per_node(x, np.zeros((3, 3)), StepSchedule(), model,
                            zero_objective(3, 2), rng, k=0)
        assert np.array_equal(out, x)

    def test_exact_averaging_step(self):
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=1)
        sched = schedule_with(c0=0.5)
        x = np.array([[4.0], [-2.0]])
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = step_per_node(x, a, sched, model, zero_objective(2, 1),
                            np.random.default_rng(0), k=0)
        assert np.allclose(out, [[1.0], [1.0]], atol=1e-12)

    def test_per_node_matches_compact_over_thousand_random_steps(self):
        rng = np.random.default_rng(2024)
        sched = StepSchedule()
        worst = 0.0
        for trial in range(1000):
            n = int(rng.integers(2, 6))
            dim = int(rng.integers(1, 4))
            model = CommNoiseModel(sigma=float(rng.random()), b=float(rng.random()),
                                   noise_dim=dim)
            objective = QuadraticObjective(rng.normal(size=(n, dim)))
            x = rng.normal(size=(n, dim)) * 3.0
            a = random_adjacency(rng, n)
            k = int(rng.integers(0, 1000))
            seed = int(rng.integers(2 ** 32))
            via_node = step_per_node(x, a, sched, model, objective,
                                     np.random.default_rng(seed), k)
            rng2 = np.random.default_rng(seed)
            xi = draw_channel_noise(model, a, rng2)
            d_mat, psi_big, xi_stacked = stacked_noise_matrices(model, x, a, rng2, xi=xi)
            zeta = np.zeros((n, dim))
            via_compact = step_compact(x, a, sched, objective, k,
                                       d_mat, psi_big, xi_stacked, zeta)
            worst = max(worst, float(np.max(np.abs(via_node - via_compact))))
        assert worst < 1e-10

    def test_apply_step_matches_per_node_given_same_draws(self):
        rng = np.random.default_rng(7)
        sched = StepSchedule()
        for _ in range(200):
            n, dim = 4, 2
            model = CommNoiseModel(sigma=0.4, b=0.2, noise_dim=dim)
            objective = QuadraticObjective(rng.normal(size=(n, dim)))
            x = rng.normal(size=(n, dim))
            a = random_adjacency(rng, n)
            seed = int(rng.integers(2 ** 32))
            k = int(rng.integers(0, 50))
            via_node = step_per_node(x, a, sched, model, objective,
                                     np.random.default_rng(seed), k)
            xi = draw_channel_noise(model, a, np.random.default_rng(seed))
            d = objective.subgradient_stack(x)
            via_apply = apply_step(x, a, sched.alpha(k), sched.c(k), model, xi, d)
            assert np.max(np.abs(via_node - via_apply)) < 1e-12

    def test_noise_free_reduction_is_linear_consensus_map(self):
        rng = np.random.default_rng(9)
        sched = StepSchedule()
        n, dim = 4, 3
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=dim)
        x = rng.normal(size=(n, dim))
        a = random_adjacency(rng, n)
        k = 5
        out = apply_step(x, a, sched.alpha(k), sched.c(k), model,
                         np.zeros((n, n, dim)), np.zeros((n, dim)))
        lin = (np.eye(n) - sched.c(k) * laplacian(a)) @ x
        assert np.max(np.abs(out - lin)) < 1e-12

    def test_balanced_graph_preserves_average(self):
        rng = np.random.default_rng(10)
        sched = StepSchedule()
        n, dim = 5, 2
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=dim)
        a = rng.random((n, n))
        a = a + a.T  # symmetric, hence balanced
        np.fill_diagonal(a, 0.0)
        x = rng.normal(size=(n, dim))
        for k in range(20):
            x_next = apply_step(x, a, 0.0, sched.c(k), model,
                                np.zeros((n, n, dim)), np.zeros((n, dim)))
            assert np.max(np.abs(x_next.mean(axis=0) - x.mean(axis=0))) < 1e-12
            x = x_next


class TestDeltaRecursion:
    def test_noise_and_gradient_free_identity(self):
        rng = np.random.default_rng(11)
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=2)
        sched = StepSchedule()
        x = rng.normal(size=(4, 2))
        a = random_adjacency(rng, 4)
        disc = delta_recursion_check(x, a, sched, model, zero_objective(4, 2),
                                     3, np.zeros((4, 4, 2)), np.zeros((4, 2)))
        assert disc < 1e-12

    def test_full_noise_random_instances(self):
        rng = np.random.default_rng(12)
        sched = StepSchedule()
        worst = 0.0
        for _ in range(300):
            n = int(rng.integers(2, 6))
            dim = int(rng.integers(1, 4))
            model = CommNoiseModel(sigma=float(rng.random()), b=float(rng.random()),
                                   noise_dim=dim)
            objective = QuadraticObjective(rng.normal(size=(n, dim)))
            x = rng.normal(size=(n, dim)) * 2.0
            a = random_adjacency(rng, n)
            xi = draw_channel_noise(model, a, rng)
            zeta = rng.normal(size=(n, dim))
            disc = delta_recursion_check(x, a, sched, model, objective,
                                         int(rng.integers(0, 100)), xi, zeta)
            worst = max(worst, disc)
        assert worst < 1e-10

    def test_consensus_start_leaves_only_noise_term(self):
        rng = np.random.default_rng(13)
        model = CommNoiseModel(sigma=0.3, b=0.1, noise_dim=2)
        sched = StepSchedule()
        x = np.tile(rng.normal(size=2), (4, 1))
        a = random_adjacency(rng, 4, allow_negative=False)
        xi = draw_channel_noise(model, a, rng)
        disc = delta_recursion_check(x, a, sched, model, zero_objective(4, 2),
                                     0, xi, np.zeros((4, 2)))
        assert disc < 1e-12


class TestRunTrajectory:
    def test_zero_horizon_single_record_of_initial_state(self):
        obj = QuadraticObjective(np.zeros((3, 2)))
        proc = DeterministicCycle([np.ones((3, 3)) - np.eye(3)])
        model = CommNoiseModel(sigma=0.1, b=0.1, noise_dim=2)
        recs = run_trajectory(obj, proc, model, StepSchedule(), 0, 7,
                              x_star=np.zeros(2), f_star=0.0)
        assert len(recs) == 1
        assert recs[0].k == 0

    def test_same_seed_bit_identical_records(self):
        obj = QuadraticObjective(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        proc = IndependentEdges(base=np.ones((3, 3)) - np.eye(3), prob=0.7)
        model = CommNoiseModel(sigma=0.2, b=0.1, noise_dim=2)
        x_star, f_star = obj.optimum()
        args = (obj, proc, model, StepSchedule(), 500, 99)
        recs1 = run_trajectory(*args, x_star=x_star, f_star=f_star)
        recs2 = run_trajectory(*args, x_star=x_star, f_star=f_star)
        for r1, r2 in zip(recs1, recs2):
            assert r1.k == r2.k
            assert r1.lyapunov == r2.lyapunov
            assert r1.opt_gap == r2.opt_gap
            assert r1.dist_to_opt == r2.dist_to_opt
            assert np.array_equal(r1.mean_state, r2.mean_state)

    def test_noise_free_quadratic_reaches_optimum(self):
        # identical targets remove gradient heterogeneity; alpha1 = 5 gives
        # enough total descent by 1e4 steps
        target = np.array([1.5, -0.5])
        obj = QuadraticObjective(np.tile(target, (3, 1)))
        path = np.array([[0.0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        proc = DeterministicCycle([path])
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=2)
        x_star, f_star = obj.optimum()
        recs = run_trajectory(obj, proc, model, schedule_with(alpha1=5.0), 10_000,
                              42, x_star=x_star, f_star=f_star,
                              init=InitialStates.uniform(-5.0, 5.0))
        assert recs[-1].k == 10_000
        assert recs[-1].dist_to_opt < 1e-2
        assert recs[-1].opt_gap >= -1e-9

    def test_average_invariance_on_balanced_graph_without_noise(self):
        a = np.array([[0.0, 1, 0], [0, 0, 1], [1, 0, 0]])  # directed cycle
        proc = DeterministicCycle([a])
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=2)
        obj = zero_objective(3, 2)
        recs = run_trajectory(obj, proc, model, StepSchedule(), 200, 5,
                              x_star=np.zeros(2), f_star=0.0,
                              record_ks=np.arange(201))
        first = recs[0].mean_state
        for rec in recs:
            assert np.max(np.abs(rec.mean_state - first)) < 1e-12

    def test_lyapunov_below_state_norm(self):
        obj = QuadraticObjective(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        proc = IndependentEdges(base=np.ones((3, 3)) - np.eye(3), prob=0.8)
        model = CommNoiseModel(sigma=0.2, b=0.1, noise_dim=2)
        x_star, f_star = obj.optimum()
        recs = run_trajectory(obj, proc, model, StepSchedule(), 300, 11,
                              x_star=x_star, f_star=f_star)
        for rec in recs:
            assert rec.lyapunov <= rec.state_sq_norm + 1e-12

    def test_divergence_detected_with_runaway_gain(self):
        obj = QuadraticObjective(np.zeros((2, 1)))
        proc = DeterministicCycle([np.array([[0.0, 1.0], [1.0, 0.0]])])
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=1)
        sched = StepSchedule(alpha1=1e9)
        with pytest.raises(DivergenceDetected) as info:
            run_trajectory(obj, proc, model, sched, 200, 3,
                           x_star=np.zeros(1), f_star=0.0,
                           init=InitialStates.explicit([[1.0], [2.0]]))
        assert info.value.step is not None
        assert info.value.replication == 0

    def test_engine_first_step_matches_apply_step_reconstruction(self):
        n, dim = 4, 2
        obj = QuadraticObjective(np.arange(8.0).reshape(n, dim))
        a = np.ones((n, n)) - np.eye(n)
        proc = DeterministicCycle([a])
        model = CommNoiseModel(sigma=0.3, b=0.2, noise_dim=dim)
        sched = StepSchedule()
        x_star, f_star = obj.optimum()
        seed, rep = 1234, 0
        recs = run_trajectory(obj, proc, model, sched, 1, seed,
                              x_star=x_star, f_star=f_star,
                              record_ks=np.array([0, 1]), rep_index=rep)
        init_ss, _, comm_ss, _ = replication_stream(seed, rep).spawn(4)
        x0 = InitialStates().draw(np.random.default_rng(init_ss), n, dim)
        xi = np.random.default_rng(comm_ss).standard_normal(
            (1, n, n, dim))[0] / np.sqrt(dim)
        d = obj.subgradient_stack(x0)
        x1 = apply_step(x0, a, sched.alpha(0), sched.c(0), model, xi, d)
        assert np.max(np.abs(recs[1].mean_state - x1.mean(axis=0))) < 1e-12
        assert recs[1].state_sq_norm == pytest.approx(float((x1 ** 2).sum()), rel=1e-12)
        centered = x1 - x1.mean(axis=0)
        assert recs[1].lyapunov == pytest.approx(float((centered ** 2).sum()), rel=1e-12)


class TestMonteCarlo:
    def _setup(self):
        obj = QuadraticObjective(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        proc = IndependentEdges(base=np.ones((3, 3)) - np.eye(3), prob=0.8)
        model = CommNoiseModel(sigma=0.1, b=0.1, noise_dim=2)
        x_star, f_star = obj.optimum()
        return obj, proc, model, x_star, f_star

    def test_single_rep_equals_trajectory(self):
        obj, proc, model, x_star, f_star = self._setup()
        sched = StepSchedule()
        mc = monte_carlo(obj, proc, model, sched, 400, 17, 1, x_star, f_star)
        recs = run_trajectory(obj, proc, model, sched, 400, 17,
                              x_star=x_star, f_star=f_star)
        assert np.array_equal(mc.mean_v, [r.lyapunov for r in recs])
        assert np.array_equal(mc.mean_dist_to_opt, [r.dist_to_opt for r in recs])
        assert np.all(mc.std_v == 0.0)

    def test_deterministic_noise_free_runs_have_zero_variance(self):
        obj = QuadraticObjective(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        proc = DeterministicCycle([np.ones((3, 3)) - np.eye(3)])
        model = CommNoiseModel(sigma=0.0, b=0.0, noise_dim=2)
        x_star, f_star = obj.optimum()
        init = InitialStates.explicit([[2.0, 0.0], [0.0, 2.0], [-1.0, 1.0]])
        mc = monte_carlo(obj, proc, model, StepSchedule(), 200, 23, 5,
                         x_star, f_star, init=init)
        for row in mc.per_rep["V"]:
            assert np.array_equal(row, mc.per_rep["V"][0])
        assert np.max(mc.std_v) <= 1e-15

    def test_monitors_and_c1_envelope(self):
        obj, proc, model, x_star, f_star = self._setup()
        mc = monte_carlo(obj, proc, model, StepSchedule(), 2000, 31, 4,
                         x_star, f_star, check_stride=100, C0=5.0)
        assert mc.psi_violation_max <= 1e-9
        assert mc.d_violation_max <= 1e-9
        assert mc.recursion_max < 1e-10
        assert mc.c1_hat is not None and np.isfinite(mc.c1_hat)
        assert mc.c1_hat_at <= 1000
        assert mc.beta_log.shape == mc.record_ks.shape

    def test_worker_pool_matches_single_worker(self):
        obj, proc, model, x_star, f_star = self._setup()
        sched = StepSchedule()
        kw = dict(init=InitialStates.uniform(-2.0, 2.0), C0=3.0)
        one = monte_carlo(obj, proc, model, sched, 300, 41, 6, x_star, f_star,
                          workers=1, **kw)
        four = monte_carlo(obj, proc, model, sched, 300, 41, 6, x_star, f_star,
                           workers=4, **kw)
        for name in ("mean_v", "std_v", "mean_opt_gap", "mean_dist_to_opt",
                     "mean_state_sq", "final_dists"):
            a, b = getattr(one, name), getattr(four, name)
            assert np.max(np.abs(a - b)) <= 1e-12

    def test_record_stride_bookkeeping(self):
        ks = default_record_ks(10, dense_until=1000, stride=100)
        assert ks.tolist() == list(range(11))
        ks = default_record_ks(10 ** 5)
        assert 100 in ks.tolist() and 10 ** 5 in ks.tolist()
        assert len(ks) == 1001 + 990


class TestCappedIntensity:
    def test_capped_model_keeps_bound_monitors(self):
        obj = QuadraticObjective(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        proc = IndependentEdges(base=np.ones((3, 3)) - np.eye(3), prob=0.8)
        model = CommNoiseModel(sigma=0.3, b=0.2, noise_dim=2, cap=0.25)
        x_star, f_star = obj.optimum()
        mc = monte_carlo(obj, proc, model, StepSchedule(), 1000, 13, 3,
                         x_star, f_star, check_stride=100)
        assert mc.psi_violation_max <= 1e-9
        assert mc.recursion_max < 1e-10

    def test_cap_limits_intensity(self):
        model = CommNoiseModel(sigma=1.0, b=0.5, noise_dim=2, cap=0.75)
        assert model.psi(np.array([100.0, 0.0])) == 0.75
        assert model.psi(np.zeros(2)) == 0.5
