"""Core iteration of the distributed noisy subgradient algorithm.

One step updates every node by a consensus term built from noisy neighbour
measurements plus a noisy subgradient step:

    x_i(k+1) = x_i(k) + c(k) * sum_j a_ij(k) (y_ji(k) - x_i(k))
                       - alpha(k) * (d_i(x_i(k)) + zeta_i(k))

with y_ji = x_j + psi(x_j - x_i) xi_ji.  The same update is implemented three
ways: a per-node reference (``step_per_node``), a stacked matrix form
(``step_compact``) used as an algebraic cross-check, and a broadcasting fast
path (``apply_step``) that drives whole replication batches at once.  All
three consume identical noise draws and agree to floating-point accuracy.

Randomness is organized as one stream per replication, split into disjoint
sub-streams for initial states, graph draws, channel noise and gradient noise,
so the noises are independent of the graph realization by construction and
every replication is reproducible in isolation, regardless of batching or
worker count.
"""

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceDetected
from .graphs import laplacian
from .noise import draw_channel_noise

# Steps per internal draw block; fixed, part of the determinism contract.
_CHUNK = 1024

_DIVERGENCE_NORM_SQ = 1e24


def consensus_projection(stacked, n_nodes, dim):
    """Deviation-from-average part of a stacked state vector.

    Applying it twice equals applying it once, and the node blocks of the
    result sum to zero.
    """
    x = np.asarray(stacked, dtype=float).reshape(n_nodes, dim)
    return (x - x.mean(axis=0)).reshape(n_nodes * dim)


def _center(states):
    return states - states.mean(axis=-2, keepdims=True)


def apply_step(states, adjacency, alpha_k, c_k, model, xi, d_plus_zeta):
    """One update from pre-drawn noises; broadcasts over leading batch axes.

    ``xi[..., j, i, :]`` is the channel noise on (j -> i); inactive channels
    are multiplied by zero weights, so their entries never matter.
    """
    x = np.asarray(states, dtype=float)
    a = np.asarray(adjacency, dtype=float)
    row_sums = a.sum(axis=-1)
    lap_x = row_sums[..., None] * x - (a[..., None] * x[..., None, :, :]).sum(axis=-2)
    diff = x[..., :, None, :] - x[..., None, :, :]
    psi = model.psi_values(np.sqrt((diff * diff).sum(axis=-1)))
    contrib = (a[..., None] * np.swapaxes(psi, -1, -2)[..., None]
               * np.swapaxes(xi, -3, -2)).sum(axis=-2)
    return x + c_k * (contrib - lap_x) - alpha_k * d_plus_zeta


def step_per_node(states, adjacency, schedule, model, objective, rng, k):
    """Reference per-node update drawing its own noises from ``rng``.

    Draw order is fixed: channel noises in lexicographic (j, i) order over
    active channels, then gradient noises node by node, so any consumer
    seeding an identical generator reproduces the same randomness.
    """
    x = np.asarray(states, dtype=float)
    n_nodes, dim = x.shape
    xi = draw_channel_noise(model, adjacency, rng)
    alpha_k = schedule.alpha(k)
    c_k = schedule.c(k)
    new = np.empty_like(x)
    for i in range(n_nodes):
        coupling = np.zeros(dim)
        for j in range(n_nodes):
            a_ij = adjacency[i, j]
            if a_ij != 0.0:
                y_ji = x[j] + model.psi(x[j] - x[i]) * xi[j, i]
                coupling += a_ij * (y_ji - x[i])
        new[i] = x[i] + c_k * coupling
    for i in range(n_nodes):
        d_tilde, _ = objective.noisy_subgradient(i, x[i], rng)
        new[i] -= alpha_k * d_tilde
    if not np.all(np.isfinite(new)):
        raise DivergenceDetected("non-finite state after per-node step", step=k)
    return new


def step_compact(states, adjacency, schedule, objective, k,
                 d_mat, psi_big, xi_stacked, zeta):
    """Stacked-form update from explicit compact factors.

    X(k+1) = ((I - c L) (x) I) X + c D Psi xi - alpha (d + zeta), with the
    noise factors produced by :func:`subgradnet.noise.stacked_noise_matrices`
    and ``zeta`` the stacked gradient noise (one row per node).  This is the
    independent algebraic route checked against ``step_per_node``.
    """
    x = np.asarray(states, dtype=float)
    n_nodes, dim = x.shape
    lap = laplacian(adjacency)
    alpha_k = schedule.alpha(k)
    c_k = schedule.c(k)
    lin = np.kron(np.eye(n_nodes) - c_k * lap, np.eye(dim)) @ x.reshape(-1)
    noise_term = c_k * (d_mat @ (psi_big @ xi_stacked))
    d_stack = np.stack([objective.subgradient(i, x[i]) for i in range(n_nodes)])
    grad_term = alpha_k * (d_stack + np.asarray(zeta, dtype=float)).reshape(-1)
    new = lin + noise_term - grad_term
    if not np.all(np.isfinite(new)):
        raise DivergenceDetected("non-finite state after compact step", step=k)
    return new.reshape(n_nodes, dim)


def delta_recursion_check(states, adjacency, schedule, model, objective, k,
                          xi, zeta):
    """Discrepancy between the direct and recursive consensus-error updates.

    Computes the next consensus error once by projecting the stepped state and
    once through the error recursion

        delta(k+1) = ((I - c P L) (x) I) delta(k)
                     + (P (x) I)(c D Psi xi - alpha zeta)
                     - alpha (P (x) I) d(k)

    and returns the norm of the difference.  Both sides share the given
    draws; the discrepancy is pure floating-point error.
    """
    x = np.asarray(states, dtype=float)
    a = np.asarray(adjacency, dtype=float)
    alpha_k = schedule.alpha(k)
    c_k = schedule.c(k)
    d_stack = np.stack([objective.subgradient(i, x[i]) for i in range(x.shape[0])])
    zeta = np.asarray(zeta, dtype=float)

    new = apply_step(x, a, alpha_k, c_k, model, xi, d_stack + zeta)
    delta_direct = _center(new)

    delta = _center(x)
    row_sums = a.sum(axis=-1)
    lap_delta = row_sums[:, None] * delta - (a[..., None] * delta[None, :, :]).sum(axis=1)
    psi = model.psi_values(np.sqrt(
        ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1)))
    contrib = (a[..., None] * np.swapaxes(psi, -1, -2)[..., None]
               * np.swapaxes(xi, 0, 1)).sum(axis=1)
    delta_rec = (delta - c_k * _center(lap_delta)
                 + _center(c_k * contrib - alpha_k * zeta)
                 - alpha_k * _center(d_stack))
    return float(np.linalg.norm(delta_rec - delta_direct))


@dataclass(frozen=True)
class StepRecord:
    """Metrics of one recorded step of a single replication."""

    k: int
    lyapunov: float
    mean_state: np.ndarray
    opt_gap: float
    state_sq_norm: float
    dist_to_opt: float
    stack_sq_dist: float


@dataclass(frozen=True)
class InitialStates:
    """Initial-state specification: i.i.d. uniform box or explicit values."""

    kind: str = "uniform"
    low: np.ndarray = None
    high: np.ndarray = None
    states: np.ndarray = None

    @staticmethod
    def uniform(low, high):
        return InitialStates(kind="uniform", low=np.asarray(low, dtype=float),
                             high=np.asarray(high, dtype=float))

    @staticmethod
    def explicit(states):
        return InitialStates(kind="explicit",
                             states=np.asarray(states, dtype=float))

    def draw(self, rng, n_nodes, dim):
        if self.kind == "explicit":
            states = np.asarray(self.states, dtype=float)
            if states.shape != (n_nodes, dim):
                raise ValueError(f"explicit initial states must be ({n_nodes}, {dim})")
            return states.copy()
        low = np.broadcast_to(self.low if self.low is not None else -5.0, (dim,))
        high = np.broadcast_to(self.high if self.high is not None else 5.0, (dim,))
        return low + (high - low) * rng.random((n_nodes, dim))


def default_record_ks(horizon, dense_until=1000, stride=100):
    """Recorded step indices: every step early on, strided afterwards."""
    ks = set(range(0, min(int(dense_until), horizon) + 1))
    if stride:
        ks.update(range(0, horizon + 1, int(stride)))
    ks.add(horizon)
    return np.array(sorted(ks), dtype=np.int64)


def replication_stream(seed, rep_index):
    """Root stream of one replication; independent across indices."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(int(rep_index),))


def _run_batch(objective, process, model, schedule, horizon, seed, rep_indices,
               x_star, f_star, init, record_ks, check_stride):
    """Simulate a batch of replications; per-replication results do not
    depend on how replications are grouped into batches."""
    n_nodes, dim = objective.n_nodes, objective.dim
    if process.n_nodes != n_nodes:
        raise ValueError("objective and graph process disagree on node count")
    reps = len(rep_indices)
    record_ks = np.asarray(record_ks, dtype=np.int64)
    if record_ks.size and (record_ks.min() < 0 or record_ks.max() > horizon):
        raise ValueError("record_ks must lie within [0, horizon]")
    n_rec = record_ks.shape[0]
    record_mask = np.zeros(horizon + 1, dtype=bool)
    record_mask[record_ks] = True
    rec_slot = np.cumsum(record_mask) - 1

    graph_ss, comm_gen, grad_gen, states = [], [], [], []
    for rep in rep_indices:
        init_ss, g_ss, c_ss, z_ss = replication_stream(seed, rep).spawn(4)
        graph_ss.append(g_ss)
        comm_gen.append(np.random.default_rng(c_ss))
        grad_gen.append(np.random.default_rng(z_ss))
        states.append(init.draw(np.random.default_rng(init_ss), n_nodes, dim))
    x = np.stack(states)
    graph_state = [None] * reps

    out = {
        "ks": record_ks,
        "V": np.empty((reps, n_rec)),
        "opt_gap": np.empty((reps, n_rec)),
        "state_sq": np.empty((reps, n_rec)),
        "dist": np.empty((reps, n_rec)),
        "stack_dsq": np.empty((reps, n_rec)),
        "mean_state": np.empty((reps, n_rec, dim)),
        "psi_violation": np.full(reps, -np.inf),
        "d_violation": np.full(reps, -np.inf),
        "recursion_max": np.zeros(reps),
    }

    sigma_sq = model.sigma ** 2
    b_sq = model.b ** 2
    sd_sq = float(np.max(objective.sigma_d)) ** 2
    cd_sq = float(np.max(objective.c_d)) ** 2
    inv_sqrt_dim = 1.0 / np.sqrt(dim)
    has_zeta = objective.has_gradient_noise
    x_star = np.asarray(x_star, dtype=float)

    def record(k, x_now, v_now, s_sq_now):
        slot = rec_slot[k]
        xbar = x_now.mean(axis=1)
        out["V"][:, slot] = v_now
        out["state_sq"][:, slot] = s_sq_now
        out["mean_state"][:, slot] = xbar
        out["opt_gap"][:, slot] = objective.total_cost(xbar) - f_star
        dev = x_now - x_star
        dist_sq = (dev * dev).sum(axis=2)
        out["dist"][:, slot] = np.sqrt(dist_sq.max(axis=1))
        out["stack_dsq"][:, slot] = dist_sq.sum(axis=1)

    k = 0
    while k < horizon:
        span = min(_CHUNK, horizon - k)
        graphs = np.empty((reps, span, n_nodes, n_nodes))
        for r in range(reps):
            graphs[r], graph_state[r] = process.sample_block(
                graph_ss[r], k, span, state=graph_state[r])
        xi_chunk = np.stack([g.standard_normal((span, n_nodes, n_nodes, dim))
                             for g in comm_gen]) * inv_sqrt_dim
        if has_zeta:
            z_chunk = np.stack([g.standard_normal((span, n_nodes, dim))
                                for g in grad_gen])
            v_chunk = np.stack([g.standard_normal((span, n_nodes))
                                for g in grad_gen])
        for t in range(span):
            a = graphs[:, t]
            xi = xi_chunk[:, t]
            alpha_k = schedule.alpha(k)
            c_k = schedule.c(k)

            xc = x - x.mean(axis=1, keepdims=True)
            v_now = (xc * xc).sum(axis=(1, 2))
            s_sq = (x * x).sum(axis=(1, 2))
            if not np.max(s_sq) < _DIVERGENCE_NORM_SQ:
                bad = int(np.nanargmax(s_sq))
                raise DivergenceDetected(
                    f"state norm blew up at step {k}",
                    replication=int(rep_indices[bad]), step=k)
            if record_mask[k]:
                record(k, x, v_now, s_sq)

            row_sums = a.sum(axis=2)
            lap_x = row_sums[:, :, None] * x - (a[..., None] * x[:, None, :, :]).sum(axis=2)
            diff = x[:, :, None, :] - x[:, None, :, :]
            psi = model.psi_values(np.sqrt((diff * diff).sum(axis=3)))
            contrib = (a[..., None] * np.swapaxes(psi, 1, 2)[..., None]
                       * np.swapaxes(xi, 1, 2)).sum(axis=2)
            d_stack = objective.subgradient_stack(x)

            psi_max_sq = psi.max(axis=(1, 2)) ** 2
            np.maximum(out["psi_violation"],
                       psi_max_sq - (4.0 * sigma_sq * v_now + 2.0 * b_sq),
                       out=out["psi_violation"])
            d_sq = (d_stack * d_stack).sum(axis=(1, 2))
            np.maximum(out["d_violation"],
                       d_sq - (2.0 * sd_sq * s_sq + 2.0 * n_nodes * cd_sq),
                       out=out["d_violation"])

            if has_zeta:
                zeta = objective.zeta_from_draws(x, z_chunk[:, t], v_chunk[:, t])
                step_src = d_stack + zeta
            else:
                zeta = None
                step_src = d_stack
            x_new = x + c_k * (contrib - lap_x) - alpha_k * step_src

            if check_stride and k % check_stride == 0:
                delta = xc
                lap_delta = (row_sums[:, :, None] * delta
                             - (a[..., None] * delta[:, None, :, :]).sum(axis=2))
                noise_in = c_k * contrib
                if zeta is not None:
                    noise_in = noise_in - alpha_k * zeta
                delta_rec = (delta - c_k * _center(lap_delta) + _center(noise_in)
                             - alpha_k * _center(d_stack))
                gap = delta_rec - _center(x_new)
                disc = np.sqrt((gap * gap).sum(axis=(1, 2)))
                np.maximum(out["recursion_max"], disc, out=out["recursion_max"])

            x = x_new
            k += 1

    xc = x - x.mean(axis=1, keepdims=True)
    v_now = (xc * xc).sum(axis=(1, 2))
    s_sq = (x * x).sum(axis=(1, 2))
    if not np.max(s_sq) < _DIVERGENCE_NORM_SQ:
        bad = int(np.nanargmax(s_sq))
        raise DivergenceDetected(f"state norm blew up at step {horizon}",
                                 replication=int(rep_indices[bad]), step=horizon)
    if record_mask[horizon]:
        record(horizon, x, v_now, s_sq)
    return out


def run_trajectory(objective, process, model, schedule, horizon, seed,
                   x_star, f_star, init=None, record_ks=None, check_stride=0,
                   rep_index=0):
    """Simulate one replication and return its recorded step metrics.

    Deterministic per (seed, rep_index); the optimum pair (x_star, f_star)
    must come from the objective's oracle, never from a simulation.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if init is None:
        init = InitialStates()
    if record_ks is None:
        record_ks = default_record_ks(horizon)
    res = _run_batch(objective, process, model, schedule, horizon, seed,
                     [rep_index], x_star, f_star, init, record_ks, check_stride)
    records = []
    for slot, k in enumerate(res["ks"]):
        records.append(StepRecord(
            k=int(k),
            lyapunov=float(res["V"][0, slot]),
            mean_state=res["mean_state"][0, slot].copy(),
            opt_gap=float(res["opt_gap"][0, slot]),
            state_sq_norm=float(res["state_sq"][0, slot]),
            dist_to_opt=float(res["dist"][0, slot]),
            stack_sq_dist=float(res["stack_dsq"][0, slot]),
        ))
    return records


@dataclass(frozen=True)
class MonteCarloResult:
    """Across-replication aggregates of the recorded per-step metrics."""

    record_ks: np.ndarray
    reps: int
    mean_v: np.ndarray
    std_v: np.ndarray
    mean_opt_gap: np.ndarray
    mean_dist_to_opt: np.ndarray
    mean_state_sq: np.ndarray
    mean_stack_dsq: np.ndarray
    final_dists: np.ndarray
    psi_violation_max: float
    d_violation_max: float
    recursion_max: float
    beta_log: np.ndarray = None
    c1_hat: float = None
    c1_hat_at: int = None
    per_rep: dict = field(default=None, repr=False)


def _mc_worker(args):
    return _run_batch(*args)


def monte_carlo(objective, process, model, schedule, horizon, seed, reps,
                x_star, f_star, init=None, record_ks=None, check_stride=0,
                workers=1, C0=None, keep_per_rep=True):
    """Aggregate recorded metrics over independent replications.

    Replications are deterministic per (seed, index) and may be fanned out to
    a process pool; per-replication trajectories are identical for any worker
    count, and the reduction runs over the replication axis in index order, so
    aggregates match across worker counts.  With ``C0`` given, also reports
    the supremum of mean squared state norm over the growth envelope
    exp(C0 * sum alpha) in log space.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if init is None:
        init = InitialStates()
    if record_ks is None:
        record_ks = default_record_ks(horizon)
    record_ks = np.asarray(record_ks, dtype=np.int64)

    rep_indices = list(range(reps))
    if workers <= 1 or reps == 1:
        parts = [_run_batch(objective, process, model, schedule, horizon, seed,
                            rep_indices, x_star, f_star, init, record_ks,
                            check_stride)]
    else:
        n_parts = min(workers, reps)
        splits = np.array_split(np.asarray(rep_indices), n_parts)
        jobs = [(objective, process, model, schedule, horizon, seed,
                 list(part), x_star, f_star, init, record_ks, check_stride)
                for part in splits if len(part)]
        ctx = multiprocessing.get_context()
        with ctx.Pool(processes=len(jobs)) as pool:
            parts = pool.map(_mc_worker, jobs)

    per_rep = {key: np.concatenate([p[key] for p in parts], axis=0)
               for key in ("V", "opt_gap", "state_sq", "dist", "stack_dsq",
                           "psi_violation", "d_violation", "recursion_max")}

    std_v = (per_rep["V"].std(axis=0, ddof=1) if reps > 1
             else np.zeros(record_ks.shape[0]))
    mean_state_sq = per_rep["state_sq"].mean(axis=0)

    beta_log = c1_hat = c1_at = None
    if C0 is not None:
        beta_log = np.asarray(schedule.log_beta(record_ks, C0), dtype=float)
        log_ratio = np.log(np.maximum(mean_state_sq, 1e-300)) - beta_log
        best = int(np.argmax(log_ratio))
        c1_hat = float(np.exp(log_ratio[best]))
        c1_at = int(record_ks[best])

    return MonteCarloResult(
        record_ks=record_ks,
        reps=reps,
        mean_v=per_rep["V"].mean(axis=0),
        std_v=std_v,
        mean_opt_gap=per_rep["opt_gap"].mean(axis=0),
        mean_dist_to_opt=per_rep["dist"].mean(axis=0),
        mean_state_sq=mean_state_sq,
        mean_stack_dsq=per_rep["stack_dsq"].mean(axis=0),
        final_dists=per_rep["dist"][:, -1].copy(),
        psi_violation_max=float(per_rep["psi_violation"].max()),
        d_violation_max=float(per_rep["d_violation"].max()),
        recursion_max=float(per_rep["recursion_max"].max()),
        beta_log=beta_log,
        c1_hat=c1_hat,
        c1_hat_at=c1_at,
        per_rep=per_rep if keep_per_rep else None,
    )
