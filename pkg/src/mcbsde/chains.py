"""Continuous-time Markov chains with two-time-scale structure.

Generator validation, exact event-driven path simulation, quasi-stationary
distributions of weakly irreducible generators, composition and verification
of fast/slow decompositions, state aggregation, and the occupation-measure
deviation diagnostic that quantifies how fast the aggregated dynamics take
over as the scale separation grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm

from .errors import (
    DimensionMismatch,
    NegativeRate,
    NotWeaklyIrreducible,
    RowSumViolation,
    UnknownState,
)
from .randomness import stream

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class GeneratorMatrix:
    """Transition-rate matrix of a continuous-time Markov chain.

    Off-diagonal entries are nonnegative rates (1/time); each row sums to
    zero.  Construct through :func:`validate_generator` so the invariants
    are checked and the diagonal is recomputed from the off-diagonals.
    """

    rates: np.ndarray
    state_labels: tuple[str, ...] | None = None

    @property
    def m(self) -> int:
        return self.rates.shape[0]

    def exit_rate(self, i: int) -> float:
        return -float(self.rates[i, i])


@dataclass(frozen=True)
class StatePartition:
    """Ordered list of disjoint index blocks covering {0..m-1}."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        for block in self.blocks:
            if len(block) == 0:
                raise DimensionMismatch("partition blocks must be nonempty")
            overlap = seen.intersection(block)
            if overlap:
                raise DimensionMismatch(f"partition blocks overlap at states {sorted(overlap)}")
            seen.update(block)
        m = len(seen)
        if seen != set(range(m)):
            raise DimensionMismatch("partition blocks must cover 0..m-1 exactly")

    @property
    def l(self) -> int:  # noqa: E743 - matches block-count naming used throughout
        return len(self.blocks)

    @property
    def m(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def block_of(self) -> np.ndarray:
        """Map state index -> block index as an int array of length m."""
        out = np.empty(self.m, dtype=np.int64)
        for k, block in enumerate(self.blocks):
            for s in block:
                out[s] = k
        return out


@dataclass(frozen=True)
class QuasiStationaryDistribution:
    """Unique nonnegative solution of nu Q = 0, sum(nu) = 1."""

    nu: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        if np.any(nu < 0):
            raise NotWeaklyIrreducible("quasi-stationary weights must be nonnegative")
        if abs(float(nu.sum()) - 1.0) > 1e-12:
            raise NotWeaklyIrreducible("quasi-stationary weights must sum to 1")
        object.__setattr__(self, "nu", nu)


@dataclass(frozen=True)
class TwoScaleGenerator:
    """Fast/slow decomposition Q(eps) = fast/eps + slow.

    ``fast`` must be block-diagonal with respect to ``partition`` and each
    diagonal block must be a weakly irreducible generator; ``slow`` couples
    the blocks.
    """

    fast: GeneratorMatrix
    slow: GeneratorMatrix
    epsilon: float
    partition: StatePartition

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        m = self.fast.m
        if self.slow.m != m or self.partition.m != m:
            raise DimensionMismatch("fast, slow and partition sizes disagree")
        block_of = self.partition.block_of()
        off_block = block_of[:, None] != block_of[None, :]
        leak = np.abs(self.fast.rates[off_block])
        if leak.size and leak.max() > DEFAULT_TOL:
            raise DimensionMismatch("fast generator has entries outside the partition blocks")
        for k, block in enumerate(self.partition.blocks):
            idx = np.asarray(block)
            sub = validate_generator(self.fast.rates[np.ix_(idx, idx)])
            # raises NotWeaklyIrreducible if the block is degenerate
            quasi_stationary(sub)

    def with_epsilon(self, epsilon: float) -> "TwoScaleGenerator":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class ChainPath:
    """Piecewise-constant right-continuous trajectory on [t0, T].

    ``jump_times`` is strictly increasing inside (t0, T]; ``post_jump_states``
    holds the state entered at each jump.
    """

    t0: float
    T: float
    initial_state: int
    jump_times: np.ndarray
    post_jump_states: np.ndarray

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        st = np.asarray(self.post_jump_states, dtype=np.int64)
        if jt.shape != st.shape:
            raise DimensionMismatch("jump_times and post_jump_states differ in length")
        if jt.size:
            if jt[0] <= self.t0 or jt[-1] > self.T or np.any(np.diff(jt) <= 0):
                raise ValueError("jump_times must be strictly increasing inside (t0, T]")
            states = np.concatenate(([self.initial_state], st))
            if np.any(states[:-1] == states[1:]):
                raise ValueError("consecutive states must differ")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "post_jump_states", st)

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def states_at(self, times) -> np.ndarray:
        """Right-continuous state at each query time (vectorized)."""
        times = np.asarray(times, dtype=float)
        states = np.concatenate(([self.initial_state], self.post_jump_states))
        idx = np.searchsorted(self.jump_times, times, side="right")
        return states[idx]

    def state_at(self, t: float) -> int:
        return int(self.states_at(np.asarray([t]))[0])

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """(edges, states) with edges = [t0, jumps..., T]; states per segment."""
        edges = np.concatenate(([self.t0], self.jump_times, [self.T]))
        states = np.concatenate(([self.initial_state], self.post_jump_states))
        return edges, states

    def occupation_times(self, m: int) -> np.ndarray:
        """Total time spent in each of the m states over [t0, T]."""
        edges, states = self.segments()
        durations = np.diff(edges)
        out = np.zeros(m)
        np.add.at(out, states, durations)
        return out


# ---------------------------------------------------------------------------
# operations


def validate_generator(matrix, tol: float = DEFAULT_TOL,
                       state_labels=None) -> GeneratorMatrix:
    """Check generator invariants and return a normalized GeneratorMatrix.

    Off-diagonal entries must be >= -tol and each row must sum to zero
    within tol.  The diagonal is recomputed from the off-diagonals so rows
    of the returned matrix sum to zero exactly; tiny negative off-diagonal
    entries are clamped to zero.
    """
    q = np.array(matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise DimensionMismatch(f"generator must be square, got shape {q.shape}")
    m = q.shape[0]
    if m < 1:
        raise DimensionMismatch("generator must have at least one state")
    off = q.copy()
    np.fill_diagonal(off, 0.0)
    if off.min(initial=0.0) < -tol:
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise NegativeRate(f"negative rate q[{i},{j}] = {q[i, j]:.3g}")
    row_sums = q.sum(axis=1)
    worst = int(np.argmax(np.abs(row_sums)))
    if abs(row_sums[worst]) > tol:
        raise RowSumViolation(f"row {worst} sums to {row_sums[worst]:.3g} (tol {tol:.1g})")
    off = np.clip(off, 0.0, None)
    np.fill_diagonal(off, -off.sum(axis=1))
    labels = tuple(state_labels) if state_labels is not None else None
    if labels is not None and len(labels) != m:
        raise DimensionMismatch("state_labels length must equal m")
    return GeneratorMatrix(rates=off, state_labels=labels)


def quasi_stationary(Q: GeneratorMatrix) -> QuasiStationaryDistribution:
    """Solve nu Q = 0, sum(nu) = 1 by stacked least squares.

    The stacked system [Q'; 1'] nu = [0; 1] is solved with lstsq, which is
    robust for nearly reducible generators.  Weak irreducibility is checked
    through the numerical rank of Q' (must be m - 1) and through the
    residual/nonnegativity of the solution.
    """
    q = Q.rates
    m = Q.m
    if m == 1:
        return QuasiStationaryDistribution(nu=np.array([1.0]))
    scale = max(np.abs(q).max(), 1.0)
    svals = np.linalg.svd(q.T, compute_uv=False)
    rank = int(np.sum(svals > 1e-10 * max(svals.max(), scale)))
    if rank != m - 1:
        raise NotWeaklyIrreducible(f"rank of Q' is {rank}, need {m - 1}")
    A = np.vstack([q.T, np.ones((1, m))])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    nu, *_ = np.linalg.lstsq(A, b, rcond=None)
    residual = np.linalg.norm(nu @ q)
    if residual > 1e-8 * scale:
        raise NotWeaklyIrreducible(f"stationarity residual {residual:.3g} too large")
    if nu.min() < -1e-10:
        raise NotWeaklyIrreducible(f"stationary solution has negative weight {nu.min():.3g}")
    nu = np.clip(nu, 0.0, None)
    nu /= nu.sum()
    return QuasiStationaryDistribution(nu=nu)


def compose(ts: TwoScaleGenerator) -> GeneratorMatrix:
    """Entrywise fast/eps + slow, validated as a generator."""
    return validate_generator(ts.fast.rates / ts.epsilon + ts.slow.rates,
                              state_labels=ts.fast.state_labels)


@dataclass(frozen=True)
class DecompositionReport:
    passed: bool
    max_residual: float
    message: str = ""


def verify_decomposition(Q: GeneratorMatrix, ts: TwoScaleGenerator,
                         tol: float = 1e-9) -> DecompositionReport:
    """Check |Q - compose(ts)| <= tol entrywise.

    TwoScaleGenerator invariants are enforced at construction; this adds the
    entrywise reconstruction check against a target generator.
    """
    if Q.m != ts.fast.m:
        raise DimensionMismatch("generator and decomposition sizes disagree")
    residual = float(np.abs(Q.rates - compose(ts).rates).max())
    passed = residual <= tol
    msg = "" if passed else f"max residual {residual:.3g} exceeds tol {tol:.1g}"
    return DecompositionReport(passed=passed, max_residual=residual, message=msg)


def aggregate_generator(slow: GeneratorMatrix, partition: StatePartition,
                        nus: list[QuasiStationaryDistribution]) -> GeneratorMatrix:
    """Aggregated l x l generator: entry (k, j) = nu^k . slow[block_k, block_j] . 1."""
    if partition.m != slow.m:
        raise DimensionMismatch("partition does not cover the slow generator")
    if len(nus) != partition.l:
        raise DimensionMismatch("need one quasi-stationary distribution per block")
    l = partition.l
    out = np.zeros((l, l))
    for k, block_k in enumerate(partition.blocks):
        nu = nus[k].nu
        if nu.size != len(block_k):
            raise DimensionMismatch(f"nu for block {k} has wrong length")
        rows = slow.rates[np.asarray(block_k), :]
        for j, block_j in enumerate(partition.blocks):
            out[k, j] = nu @ rows[:, np.asarray(block_j)].sum(axis=1)
    return validate_generator(out, tol=1e-7)


def simulate_chain(Q: GeneratorMatrix, initial_state: int, t0: float, T: float,
                   rng: np.random.Generator) -> ChainPath:
    """Exact event-driven sample of the chain on [t0, T].

    Holding time in state i is Exponential(-q_ii); the next state is j with
    probability q_ij / (-q_ii).  States with zero exit rate are absorbing.
    """
    if T <= t0:
        raise ValueError("need T > t0")
    m = Q.m
    if not 0 <= initial_state < m:
        raise UnknownState(f"initial state {initial_state} outside 0..{m - 1}")
    rates = Q.rates
    exit_rates = -np.diag(rates)
    # per-state cumulative jump distribution, rows with zero exit left unused
    cum_probs = []
    for i in range(m):
        row = rates[i].copy()
        row[i] = 0.0
        total = row.sum()
        cum_probs.append(np.cumsum(row) / total if total > 0 else None)
    jump_times: list[float] = []
    states: list[int] = []
    t = t0
    state = int(initial_state)
    while True:
        lam = exit_rates[state]
        if lam <= 0.0:
            break
        t = t + rng.exponential(1.0 / lam)
        if t >= T:
            break
        state = int(np.searchsorted(cum_probs[state], rng.random(), side="right"))
        jump_times.append(t)
        states.append(state)
    return ChainPath(t0=t0, T=T, initial_state=int(initial_state),
                     jump_times=np.asarray(jump_times), post_jump_states=np.asarray(states, dtype=np.int64))


def simulate_chain_ensemble(Q: GeneratorMatrix, initial_state: int, t0: float, T: float,
                            n_paths: int, seed: int, label: str = "chain") -> list[ChainPath]:
    """n_paths independent chain samples with per-path streams (seed, label, p)."""
    return [simulate_chain(Q, initial_state, t0, T, stream(seed, label, p))
            for p in range(n_paths)]


def aggregate_path(path: ChainPath, partition: StatePartition) -> ChainPath:
    """Project a path onto block indices, erasing within-block jumps."""
    block_of = partition.block_of()
    all_states = np.concatenate(([path.initial_state], path.post_jump_states))
    if all_states.size and (all_states.min() < 0 or all_states.max() >= partition.m):
        bad = all_states[(all_states < 0) | (all_states >= partition.m)][0]
        raise UnknownState(f"state {bad} not covered by the partition")
    blocks = block_of[all_states]
    keep = blocks[1:] != blocks[:-1]
    return ChainPath(t0=path.t0, T=path.T, initial_state=int(blocks[0]),
                     jump_times=path.jump_times[keep],
                     post_jump_states=blocks[1:][keep])


@dataclass(frozen=True)
class OccupationDeviation:
    """Monte Carlo estimates of the squared occupation deviation per (block, member)."""

    epsilon: float
    estimates: np.ndarray  # (l, max m_k), NaN where block has fewer members
    standard_errors: np.ndarray
    n_paths: int

    def entry(self, k: int, j: int) -> tuple[float, float]:
        return float(self.estimates[k, j]), float(self.standard_errors[k, j])


def occupation_deviation(ts: TwoScaleGenerator, beta, T: float, n_paths: int,
                         seed: int, initial_state: int = 0,
                         t0: float = 0.0) -> OccupationDeviation:
    """Estimate E(int (1{a_t = s_kj} - nu_j^k 1{abar_t = k}) beta(t) dt)^2.

    One estimate per (block k, member j), with standard errors.  The time
    integral is exact between jumps: beta is integrated by adaptive
    quadrature over each constant-state segment, then weighted by the
    segment's indicator deviation.
    """
    if n_paths < 100:
        raise ValueError("need n_paths >= 100 for stable estimates")
    q_eps = compose(ts)
    nus = [quasi_stationary(validate_generator(
        ts.fast.rates[np.ix_(b, b)])) for b in (np.asarray(blk) for blk in ts.partition.blocks)]
    block_of = ts.partition.block_of()
    l = ts.partition.l
    widest = max(ts.partition.block_sizes)
    sums = np.zeros((l, widest))
    sums_sq = np.zeros((l, widest))
    beta_cache: dict[tuple[float, float], float] = {}

    def beta_integral(a: float, b: float) -> float:
        key = (a, b)
        if key not in beta_cache:
            beta_cache[key] = quad(beta, a, b, limit=200)[0]
        return beta_cache[key]

    for p in range(n_paths):
        path = simulate_chain(q_eps, initial_state, t0, T, stream(seed, "occupation", p))
        edges, states = path.segments()
        seg_beta = np.array([beta_integral(edges[i], edges[i + 1])
                             for i in range(states.size)])
        seg_blocks = block_of[states]
        for k in range(l):
            block = ts.partition.blocks[k]
            in_block = (seg_blocks == k).astype(float)
            for j, s_kj in enumerate(block):
                coeff = (states == s_kj).astype(float) - nus[k].nu[j] * in_block
                val = float(coeff @ seg_beta) ** 2
                sums[k, j] += val
                sums_sq[k, j] += val * val
    est = sums / n_paths
    var = np.maximum(sums_sq / n_paths - est**2, 0.0)
    se = np.sqrt(var / n_paths)
    for k in range(l):
        est[k, len(ts.partition.blocks[k]):] = np.nan
        se[k, len(ts.partition.blocks[k]):] = np.nan
    return OccupationDeviation(epsilon=ts.epsilon, estimates=est,
                               standard_errors=se, n_paths=n_paths)


def transition_matrix(Q: GeneratorMatrix, t: float) -> np.ndarray:
    """exp(Q t); row-stochastic for t >= 0."""
    if t < 0:
        raise ValueError("need t >= 0")
    if t == 0.0:
        return np.eye(Q.m)
    return expm(Q.rates * t)


def chain_paths_to_rows(paths: list[ChainPath]):
    """Rows (path_id, jump_time, new_state) for CSV dumps.

    The first row of each path carries the initial state at t0.
    """
    for pid, path in enumerate(paths):
        yield (pid, path.t0, int(path.initial_state))
        for t, s in zip(path.jump_times, path.post_jump_states):
            yield (pid, float(t), int(s))
