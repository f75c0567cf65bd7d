"""Random digraph sequences and their spectral/connectivity diagnostics.

Adjacency matrices follow the receiver-row convention: entry ``A[i, j]`` is
the weight a node ``i`` places on what it hears from node ``j`` (the channel
``j -> i``).  Weights may be negative; diagonals are always zero.  Three
process variants generate adjacency sequences: a deterministic cycle, an
independent per-step edge-activation model, and a finite-state Markov
switching model.

Sampling is counter-addressed: the matrix drawn at step ``k`` depends only on
the process, the stream seed and ``k``, so blocks can be regenerated from any
starting index and replications can run concurrently.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NonSymmetricError, NoStationaryDistributionError

# Steps per counter-addressed draw block.  Each block of step indices maps to
# one Philox counter value, so step k's draw is independent of how sampling
# calls are batched.
CHUNK = 1024

_BALANCE_TOL = 1e-9


def validate_adjacency(weights):
    """Validate and return a generalized weighted adjacency matrix.

    Requires a square matrix with at least two nodes, finite entries and an
    exactly zero diagonal.  Negative off-diagonal weights are allowed.
    """
    a = np.asarray(weights, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got shape {a.shape}")
    if a.shape[0] < 2:
        raise ValueError("adjacency matrix needs at least 2 nodes")
    if not np.all(np.isfinite(a)):
        raise ValueError("adjacency matrix entries must be finite")
    if np.any(np.diag(a) != 0.0):
        raise ValueError("adjacency diagonal entries must be exactly zero")
    return a


def laplacian(adjacency):
    """Generalized Laplacian: off-diagonal -a_ij, diagonal sum_{j!=i} a_ij.

    Every row sums to zero, so L @ 1 = 0 regardless of weight signs.
    """
    a = np.asarray(adjacency, dtype=float)
    lap = -a.copy()
    idx = np.arange(a.shape[0])
    lap[idx, idx] = a.sum(axis=1) - np.diag(a)
    return lap


def symmetrized_laplacian(lap):
    """Symmetric part (L + L^T) / 2; exact fixed point on symmetric input."""
    lap = np.asarray(lap, dtype=float)
    return (lap + lap.T) / 2.0


def lambda2(matrix, tol=1e-10):
    """Second smallest eigenvalue of a real symmetric matrix.

    Asymmetry up to ``tol`` (max absolute entry of M - M^T) is repaired by
    symmetrizing; anything larger raises :class:`NonSymmetricError`.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise ValueError(f"lambda2 needs a square matrix with N >= 2, got {m.shape}")
    asym = float(np.max(np.abs(m - m.T)))
    if asym > tol:
        raise NonSymmetricError(f"asymmetry {asym:.3e} exceeds tolerance {tol:.3e}")
    eigvals = np.linalg.eigvalsh((m + m.T) / 2.0)
    return float(eigvals[1])


def spectral_norm(matrix):
    """2-norm (largest singular value) of a possibly asymmetric matrix."""
    return float(np.linalg.norm(np.asarray(matrix, dtype=float), 2))


def is_balanced(adjacency, tol=_BALANCE_TOL):
    """True when every node's in-weight sum matches its out-weight sum.

    Balance makes the node average invariant under the consensus map
    (the all-ones row vector annihilates the Laplacian).
    """
    if tol <= 0:
        raise ValueError("balance tolerance must be positive")
    a = np.asarray(adjacency, dtype=float)
    gap = np.abs(a.sum(axis=1) - a.sum(axis=0))
    return bool(np.max(gap) <= tol)


def _as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _philox_block(key, block_index):
    """Generator for one counter-addressed block of a keyed Philox stream."""
    bg = np.random.Philox(counter=[0, 0, int(block_index), 0], key=key)
    return np.random.Generator(bg)


def _stream_key(stream):
    return _as_seed_sequence(stream).generate_state(2, np.uint64)


class DeterministicCycle:
    """Adjacency sequence that cycles through a fixed list of matrices."""

    def __init__(self, matrices):
        mats = [validate_adjacency(m) for m in matrices]
        if not mats:
            raise ValueError("need at least one matrix")
        n = mats[0].shape[0]
        if any(m.shape[0] != n for m in mats):
            raise ValueError("all matrices must have the same node count")
        self.matrices = np.stack(mats)
        self.n_nodes = n

    def sample_block(self, stream, k_start, count, state=None):
        idx = (np.arange(k_start, k_start + count)) % len(self.matrices)
        return self.matrices[idx].copy(), None

    def expected_active_channels(self):
        offdiag = ~np.eye(self.n_nodes, dtype=bool)
        return float(max((m != 0)[offdiag].sum() for m in self.matrices))


class IndependentEdges:
    """Independent per-step graph: Bernoulli edge activation on a base matrix.

    Each step, channel (j -> i) is active with probability ``prob[i, j]`` and
    carries weight ``base[i, j]`` plus an optional zero-mean uniform
    perturbation of half-width ``perturb[i, j]``.  The per-step mean adjacency
    is ``prob * base`` exactly, so a nonnegative balanced base with symmetric
    activation probabilities keeps the conditional mean graph balanced.
    Perturbation half-widths larger than the base weight produce occasional
    negative realized weights while leaving the mean untouched.
    """

    def __init__(self, base, prob, perturb=0.0):
        self.base = validate_adjacency(base)
        n = self.base.shape[0]
        self.n_nodes = n
        self.prob = np.broadcast_to(np.asarray(prob, dtype=float), (n, n)).copy()
        np.fill_diagonal(self.prob, 0.0)
        if np.any(self.prob < 0) or np.any(self.prob > 1):
            raise ValueError("activation probabilities must lie in [0, 1]")
        self.perturb = np.broadcast_to(np.asarray(perturb, dtype=float), (n, n)).copy()
        np.fill_diagonal(self.perturb, 0.0)
        if np.any(self.perturb < 0):
            raise ValueError("perturbation half-widths must be nonnegative")
        self._has_perturb = bool(np.any(self.perturb > 0))

    def sample_block(self, stream, k_start, count, state=None):
        key = _stream_key(stream)
        n = self.n_nodes
        out = np.empty((count, n, n))
        pos = 0
        k = k_start
        while pos < count:
            block = k // CHUNK
            lo = k - block * CHUNK
            take = min(CHUNK - lo, count - pos)
            gen = _philox_block(key, block)
            u = gen.random((CHUNK, n, n))
            active = u[lo:lo + take] < self.prob
            w = np.where(active, self.base, 0.0)
            if self._has_perturb:
                v = gen.random((CHUNK, n, n))
                w = w + np.where(active, (2.0 * v[lo:lo + take] - 1.0) * self.perturb, 0.0)
            out[pos:pos + take] = w
            pos += take
            k += take
        idx = np.arange(self.n_nodes)
        out[:, idx, idx] = 0.0
        return out, None

    def mean_adjacency(self):
        return self.prob * self.base

    def expected_active_channels(self):
        can_fire = (self.base != 0) | (self.perturb > 0)
        return float(self.prob[can_fire].sum())


class MarkovSwitching:
    """Finite-state Markov chain over a list of adjacency matrices.

    The state path is counter-addressed: uniform draw 0 selects the initial
    state and draw k (k >= 1) drives the transition into step k, so the path
    is a pure function of (seed, step index).
    """

    def __init__(self, states, transition, initial=None):
        mats = [validate_adjacency(m) for m in states]
        if not mats:
            raise ValueError("need at least one state")
        n = mats[0].shape[0]
        if any(m.shape[0] != n for m in mats):
            raise ValueError("all Markov states must have the same node count")
        self.states = np.stack(mats)
        self.n_nodes = n
        t = np.asarray(transition, dtype=float)
        m = len(mats)
        if t.shape != (m, m):
            raise ValueError(f"transition matrix must be {m}x{m}, got {t.shape}")
        if np.any(t < 0) or np.max(np.abs(t.sum(axis=1) - 1.0)) > _BALANCE_TOL:
            raise ValueError("transition matrix rows must be nonnegative and sum to 1")
        self.transition = t
        if initial is None:
            initial = np.full(m, 1.0 / m)
        self.initial = np.asarray(initial, dtype=float)
        if self.initial.shape != (m,) or np.any(self.initial < 0) or \
                abs(self.initial.sum() - 1.0) > _BALANCE_TOL:
            raise ValueError("initial distribution must be a probability vector")
        self._cum_rows = np.cumsum(t, axis=1)
        self._cum_init = np.cumsum(self.initial)

    def _uniforms(self, key, k_lo, k_hi):
        """Chain uniforms for draw indices [k_lo, k_hi)."""
        out = np.empty(k_hi - k_lo)
        pos = 0
        k = k_lo
        while k < k_hi:
            block = k // CHUNK
            lo = k - block * CHUNK
            take = min(CHUNK - lo, k_hi - k)
            u = _philox_block(key, block).random(CHUNK)
            out[pos:pos + take] = u[lo:lo + take]
            pos += take
            k += take
        return out

    def sample_state_path(self, stream, count, k_start=0, state=None):
        """State indices for steps [k_start, k_start + count).

        ``state`` is the chain state at step ``k_start - 1``; when omitted the
        path is replayed from step 0 (drawing the initial state first).
        """
        key = _stream_key(stream)
        if state is None:
            u = self._uniforms(key, 0, k_start + count)
            s = int(np.searchsorted(self._cum_init, u[0], side="right"))
            path = np.empty(k_start + count, dtype=np.int64)
            path[0] = s
            for k in range(1, k_start + count):
                s = int(np.searchsorted(self._cum_rows[s], u[k], side="right"))
                path[k] = s
            return path[k_start:]
        if k_start < 1:
            raise ValueError("an explicit chain state requires k_start >= 1")
        u = self._uniforms(key, k_start, k_start + count)
        s = int(state)
        path = np.empty(count, dtype=np.int64)
        for k in range(count):
            s = int(np.searchsorted(self._cum_rows[s], u[k], side="right"))
            path[k] = s
        return path

    def sample_block(self, stream, k_start, count, state=None):
        path = self.sample_state_path(stream, count, k_start=k_start, state=state)
        return self.states[path].copy(), int(path[-1])

    def advance_from(self, rng, state, count):
        """Continue the chain for ``count`` steps with fresh draws from ``rng``.

        Used for conditional (frozen-anchor) window resampling; not part of
        the counter-addressed path.
        """
        u = rng.random(count)
        s = int(state)
        path = np.empty(count, dtype=np.int64)
        for k in range(count):
            s = int(np.searchsorted(self._cum_rows[s], u[k], side="right"))
            path[k] = s
        return path

    def draw_initial(self, rng):
        return int(np.searchsorted(self._cum_init, rng.random(), side="right"))

    def stationary_distribution(self, tol=1e-9):
        """Solve pi T = pi, sum pi = 1; requires a unique solution.

        Raises :class:`NoStationaryDistributionError` when T^T - I has more
        than one vanishing singular value (reducible chain) relative to tol.
        """
        m = self.transition.shape[0]
        a = self.transition.T - np.eye(m)
        svals = np.linalg.svd(a, compute_uv=False)
        scale = max(svals[0], 1.0)
        if m > 1 and svals[-2] <= tol * scale:
            raise NoStationaryDistributionError(
                "stationary distribution is not unique (chain is reducible)")
        sys = np.vstack([a, np.ones((1, m))])
        rhs = np.zeros(m + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(sys, rhs, rcond=None)
        residual = float(np.max(np.abs(a @ pi)))
        if residual > max(tol, 1e-10):
            raise NoStationaryDistributionError(
                f"stationary solve residual {residual:.3e} exceeds tolerance")
        return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()

    def mean_adjacency(self):
        pi = self.stationary_distribution()
        return np.tensordot(pi, self.states, axes=1)

    def conditional_mean_adjacency(self, state):
        """Mean of the next adjacency matrix given the current chain state."""
        return np.tensordot(self.transition[int(state)], self.states, axes=1)

    def expected_active_channels(self):
        offdiag = ~np.eye(self.n_nodes, dtype=bool)
        counts = np.array([(m != 0)[offdiag].sum() for m in self.states], dtype=float)
        return float(np.max(self.transition @ counts))


def sample_sequence(process, stream, k_start, count, state=None):
    """Sample ``count`` adjacency matrices for steps starting at ``k_start``.

    Deterministic given (process, stream seed, k_start); for the Markov
    variant the returned pair carries the advanced chain state.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    matrices, new_state = process.sample_block(stream, k_start, count, state=state)
    return matrices, new_state


@dataclass(frozen=True)
class LaplacianStats:
    """Windowed joint-connectivity estimates for a graph process.

    ``lambda2_per_window`` holds the algebraic connectivity of each window's
    estimated mean symmetrized-Laplacian sum; ``rho0_hat`` and ``rho1_hat``
    are Monte Carlo moment estimates, not almost-sure certificates.
    """

    h: int
    lambda2_per_window: list
    moment_estimate: float
    rho0_hat: float
    rho1_hat: float
    windows: int = field(default=0)
    reps: int = field(default=0)

    @property
    def theta_hat(self):
        return float(min(self.lambda2_per_window))


def _window_samples(process, stream, h, windows, reps):
    """Yield per-window lists of sampled Laplacian stacks, shape (reps, h, N, N)."""
    ss = _as_seed_sequence(stream)
    if isinstance(process, DeterministicCycle):
        for m in range(windows):
            mats, _ = process.sample_block(None, m * h, h)
            yield np.stack([mats])
        return
    if isinstance(process, IndependentEdges):
        children = ss.spawn(windows * reps)
        for m in range(windows):
            block = [process.sample_block(children[m * reps + r], m * h, h)[0]
                     for r in range(reps)]
            yield np.stack(block)
        return
    if isinstance(process, MarkovSwitching):
        anchor_ss, *children = ss.spawn(windows * reps + 1)
        base_path = process.sample_state_path(anchor_ss, windows * h)
        for m in range(windows):
            anchor = None if m == 0 else int(base_path[m * h - 1])
            block = []
            for r in range(reps):
                rng = np.random.default_rng(children[m * reps + r])
                if anchor is None:
                    s0 = process.draw_initial(rng)
                    rest = process.advance_from(rng, s0, h - 1) if h > 1 else []
                    path = np.concatenate([[s0], rest]).astype(np.int64)
                else:
                    path = process.advance_from(rng, anchor, h)
                block.append(process.states[path])
            yield np.stack(block)
        return
    raise TypeError(f"unsupported graph process type {type(process)!r}")


def joint_connectivity_report(process, h, windows, reps, stream):
    """Estimate the windowed joint-connectivity level and Laplacian moments.

    For each window of ``h`` consecutive steps the mean of the summed
    symmetrized Laplacians is estimated by averaging ``reps`` replicated
    window samples (conditioning on the realized chain state at the window
    start for Markov processes), and its second smallest eigenvalue is
    recorded.  Also estimates the conditional Laplacian norm moment of order
    2*max(h, 2) and the edge-count-weighted squared-weight moment.
    """
    if h < 1 or windows < 1 or reps < 1:
        raise ValueError("h, windows and reps must all be at least 1")
    q = 2 * max(h, 2)
    lam2 = []
    norm_moment = 0.0
    edge_moment = 0.0
    for block in _window_samples(process, stream, h, windows, reps):
        n_reps = block.shape[0]
        lap_sum = np.zeros((process.n_nodes, process.n_nodes))
        for i in range(h):
            norms = np.empty(n_reps)
            edges = np.empty(n_reps)
            for r in range(n_reps):
                lap = laplacian(block[r, i])
                norms[r] = np.linalg.norm(lap, 2) ** q
                a = block[r, i]
                n_edges = int(np.count_nonzero(a) - np.count_nonzero(np.diag(a)))
                edges[r] = n_edges * float(np.max(a * a))
                lap_sum += symmetrized_laplacian(lap)
            norm_moment = max(norm_moment, float(norms.mean()))
            edge_moment = max(edge_moment, float(edges.mean()))
        lam2.append(lambda2(lap_sum / n_reps, tol=1e-8))
    return LaplacianStats(
        h=h,
        lambda2_per_window=lam2,
        moment_estimate=norm_moment,
        rho0_hat=norm_moment ** (1.0 / q),
        rho1_hat=edge_moment,
        windows=windows,
        reps=reps,
    )


def mean_graph_spanning_check(process, tol=1e-12):
    """True when the mean digraph lets some node reach every other node.

    Uses the exact stationary distribution for Markov processes and the
    exact per-step mean matrix for independent processes; edges count when
    their mean weight is positive.
    """
    if isinstance(process, MarkovSwitching):
        mean_adj = process.mean_adjacency()
    elif isinstance(process, IndependentEdges):
        mean_adj = process.mean_adjacency()
    else:
        raise TypeError("spanning check needs a Markov or Independent process")
    n = process.n_nodes
    # successors[j] = nodes that hear j: mean_adj[i, j] > tol
    succ = [np.nonzero(mean_adj[:, j] > tol)[0] for j in range(n)]
    for root in range(n):
        seen = np.zeros(n, dtype=bool)
        seen[root] = True
        frontier = [root]
        while frontier:
            nxt = []
            for j in frontier:
                for i in succ[j]:
                    if not seen[i]:
                        seen[i] = True
                        nxt.append(int(i))
            frontier = nxt
        if seen.all():
            return True
    return False
