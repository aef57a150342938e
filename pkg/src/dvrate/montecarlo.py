"""Gillespie simulation, empirical measure/flow pairs, rare-event estimators.

RNG discipline (documented so seeds are portable): the bit generator is
numpy's counter-based Philox (identifier "numpy-philox4x64"), seeded through
SeedSequence. A trajectory consumes uniforms in a fixed order: one for each
exponential holding time via inverse CDF -log1p(-u)/r(x), then one for the
jump target via searchsorted on the cumulative rate row; the final censored
holding time consumes its uniform but no target. Batch estimators derive the
sample's seed as SeedSequence((master_seed, horizon_index, sample_index)),
so every sample is a pure function of its derived seed and merges are
order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chain import (
    ChainSpec,
    Flow,
    ProbabilityMeasure,
    VertexFunction,
    _require_same_chain,
)
from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import OverflowGuardError, ValidationError

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


RNG_ALGORITHM = "numpy-philox4x64"


@njit(cache=True)
def _gillespie_kernel(
    row_offsets, cum_rates, edge_dst, exit_rates, x0, horizon, u,
    record, times, dests, edges, occ, counts,
):
    """Consume uniforms u; returns (n_jumps, uniforms_used, completed)."""
    t = 0.0
    x = x0
    nj = 0
    i = 0
    n_u = u.shape[0]
    while True:
        r = exit_rates[x]
        if i >= n_u:
            return nj, i, False
        dt = -math.log1p(-u[i]) / r
        i += 1
        if t + dt >= horizon:
            occ[x] += horizon - t
            return nj, i, True
        occ[x] += dt
        t += dt
        if i >= n_u:
            return nj, i, False
        lo = row_offsets[x]
        hi = row_offsets[x + 1]
        e = lo + np.searchsorted(cum_rates[lo:hi], u[i] * r, side="right")
        i += 1
        if e >= hi:  # guard the rounding tie at the row total
            e = hi - 1
        counts[e] += 1
        x = edge_dst[e]
        if record:
            times[nj] = t
            dests[nj] = x
            edges[nj] = e
        nj += 1


def _sim_arrays(chain: ChainSpec):
    cached = getattr(chain, "_sim_arrays_cache", None)
    if cached is None:
        cum = np.empty(chain.n_edges)
        for s in range(chain.n_states):
            lo, hi = chain.row_offsets[s], chain.row_offsets[s + 1]
            cum[lo:hi] = np.cumsum(chain.edge_rates[lo:hi])
        cached = (
            np.ascontiguousarray(chain.row_offsets, dtype=np.int64),
            cum,
            np.ascontiguousarray(chain.edge_dst, dtype=np.int64),
            np.ascontiguousarray(chain.exit_rates, dtype=np.float64),
        )
        chain._sim_arrays_cache = cached
    return cached


def _run(chain: ChainSpec, x0_ix: int, horizon: float, seedseq, record: bool):
    """One trajectory, pure in seedseq; retries with a larger uniform buffer
    regenerate the same stream so the path is unchanged."""
    row_offsets, cum, edge_dst, exit_rates = _sim_arrays(chain)
    guess = horizon * float(exit_rates.max())
    n_u = int(2.0 * guess + 20.0 * math.sqrt(guess + 1.0) + 64.0)
    while True:
        rng = np.random.Generator(np.random.Philox(seedseq))
        u = rng.random(n_u)
        cap = n_u // 2 + 2 if record else 0
        times = np.empty(cap)
        dests = np.empty(cap, dtype=np.int64)
        edges = np.empty(cap, dtype=np.int64)
        occ = np.zeros(chain.n_states)
        counts = np.zeros(chain.n_edges, dtype=np.int64)
        nj, _, completed = _gillespie_kernel(
            row_offsets, cum, edge_dst, exit_rates,
            np.int64(x0_ix), float(horizon), u,
            record, times, dests, edges, occ, counts,
        )
        if completed:
            return (
                times[:nj].copy(),
                dests[:nj].copy(),
                edges[:nj].copy(),
                occ,
                counts,
            )
        n_u *= 2


@dataclass(frozen=True)
class Trajectory:
    """Jump times (strictly increasing in (0, horizon)), destinations and
    edge ids in chain order, plus the RNG provenance."""

    chain: ChainSpec
    x0_index: int
    horizon: float
    times: np.ndarray
    dests: np.ndarray
    edge_ids: np.ndarray
    rng: dict

    def __post_init__(self):
        t = self.times
        if len(t) and not (
            np.all(np.diff(t) > 0) and t[0] > 0 and t[-1] < self.horizon
        ):
            raise ValidationError("jump times must be strictly increasing in (0, T)")

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    @property
    def x0(self):
        return self.chain.states[self.x0_index]

    @property
    def final_index(self) -> int:
        return int(self.dests[-1]) if len(self.dests) else self.x0_index

    def occupation_times(self) -> np.ndarray:
        seq = np.concatenate([[self.x0_index], self.dests]).astype(np.int64)
        bounds = np.concatenate([[0.0], self.times, [self.horizon]])
        return np.bincount(
            seq, weights=np.diff(bounds), minlength=self.chain.n_states
        )


def simulate(chain: ChainSpec, x0, horizon: float, seed: int) -> Trajectory:
    """Gillespie path started at x0, bit-for-bit reproducible from the seed."""
    if not (math.isfinite(horizon) and horizon > 0):
        raise ValidationError(f"horizon must be positive and finite, got {horizon}")
    x0_ix = chain.state_index(x0)
    times, dests, edges, _, _ = _run(
        chain, x0_ix, float(horizon), np.random.SeedSequence(seed), record=True
    )
    return Trajectory(
        chain, x0_ix, float(horizon), times, dests, edges,
        {"algorithm": RNG_ALGORITHM, "seed": seed},
    )


@dataclass(frozen=True)
class EmpiricalPair:
    """Occupation fractions and jump flow of one trajectory. counts are the
    raw integer jump counts; flow = counts / horizon."""

    measure: ProbabilityMeasure
    flow: Flow
    counts: np.ndarray
    horizon: float
    x0_index: int
    final_index: int


def empirical_pair(traj: Trajectory) -> EmpiricalPair:
    """mu_T and Q_T. T * div(Q_T) telescopes to delta_{X_0} - delta_{X_T},
    exactly at the integer-count level."""
    chain = traj.chain
    occ = traj.occupation_times()
    counts = np.bincount(traj.edge_ids, minlength=chain.n_edges).astype(np.int64)
    return EmpiricalPair(
        ProbabilityMeasure(chain, occ / occ.sum()),
        Flow(chain, counts / traj.horizon),
        counts,
        traj.horizon,
        traj.x0_index,
        traj.final_index,
    )


def closed_empirical_pair(traj: Trajectory) -> EmpiricalPair:
    """Empirical pair of the path truncated at its last visit to X_0, so the
    flow is an exact circulation and feeds joint_rate directly. Falls back to
    (point mass, zero flow) if the path never returns."""
    chain = traj.chain
    returns = np.nonzero(traj.dests == traj.x0_index)[0]
    if len(returns) == 0:
        return EmpiricalPair(
            ProbabilityMeasure.point_mass(chain, traj.x0),
            Flow.zero(chain),
            np.zeros(chain.n_edges, dtype=np.int64),
            traj.horizon,
            traj.x0_index,
            traj.x0_index,
        )
    j = int(returns[-1])
    t_close = float(traj.times[j])
    seq = np.concatenate([[traj.x0_index], traj.dests[: j + 1]]).astype(np.int64)
    bounds = np.concatenate([[0.0], traj.times[: j + 1]])
    occ = np.bincount(seq[:-1], weights=np.diff(bounds), minlength=chain.n_states)
    counts = np.bincount(
        traj.edge_ids[: j + 1], minlength=chain.n_edges
    ).astype(np.int64)
    return EmpiricalPair(
        ProbabilityMeasure(chain, occ / occ.sum()),
        Flow(chain, counts / t_close),
        counts,
        t_close,
        traj.x0_index,
        traj.x0_index,
    )


def tilted_chain(
    chain: ChainSpec,
    g: VertexFunction,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ChainSpec:
    """Rates r(y,z) e^{g(z)-g(y)}: same edges, same states, tilted weights."""
    _require_same_chain(chain, g, "vertex function")
    dg = g.values[chain.edge_dst] - g.values[chain.edge_src]
    if np.any(np.abs(dg) > tolerances.exp_guard):
        raise OverflowGuardError("tilting exponent exceeds the overflow guard")
    mat = np.zeros((chain.n_states, chain.n_states))
    mat[chain.edge_src, chain.edge_dst] = chain.edge_rates * np.exp(dg)
    return ChainSpec.from_matrix(chain.states, mat, tolerances)


@dataclass(frozen=True)
class TiltedRun:
    """A path sampled under the tilted rates plus its importance log-weight
    log dP/dP~ back to the original chain."""

    trajectory: Trajectory
    log_weight: float
    tilted: ChainSpec


def tilted_simulate(
    chain: ChainSpec,
    g: VertexFunction,
    x0,
    horizon: float,
    seed: int,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> TiltedRun:
    tc = tilted_chain(chain, g, tolerances)
    traj = simulate(tc, x0, horizon, seed)
    counts = np.bincount(traj.edge_ids, minlength=chain.n_edges)
    jump_term = float(
        counts @ (g.values[chain.edge_src] - g.values[chain.edge_dst])
    )
    occ = traj.occupation_times()
    integral_term = float(occ @ (tc.exit_rates - chain.exit_rates))
    return TiltedRun(traj, jump_term + integral_term, tc)


@dataclass(frozen=True)
class HalfSpaceEvent:
    """Intersection of half-spaces sum_x c(x) mu(x) >= theta on measures."""

    chain: ChainSpec
    conditions: tuple  # ((coefficients array, theta), ...)

    @classmethod
    def occupancy_at_least(cls, chain: ChainSpec, state, theta: float):
        c = np.zeros(chain.n_states)
        c[chain.state_index(state)] = 1.0
        return cls(chain, ((c, float(theta)),))

    @classmethod
    def from_terms(cls, chain: ChainSpec, terms: Sequence, theta: float):
        """terms: (state, coefficient) pairs for one half-space."""
        c = np.zeros(chain.n_states)
        for state, coef in terms:
            c[chain.state_index(state)] += float(coef)
        return cls(chain, ((c, float(theta)),))

    def intersect(self, other: "HalfSpaceEvent") -> "HalfSpaceEvent":
        return HalfSpaceEvent(self.chain, self.conditions + other.conditions)

    def satisfied(self, measure_values: np.ndarray) -> bool:
        return all(
            float(c @ measure_values) >= theta for c, theta in self.conditions
        )

    def describe(self) -> list:
        out = []
        for c, theta in self.conditions:
            terms = [
                f"{w:g}*{self.chain.states[i]}"
                for i, w in enumerate(c)
                if w != 0.0
            ]
            out.append(" + ".join(terms) + f" >= {theta:g}")
        return out


@dataclass(frozen=True)
class EventEstimate:
    p_hat: float
    stderr: float
    samples: int
    hits: int
    horizon: float


def estimate_event_probability(
    chain: ChainSpec,
    event: HalfSpaceEvent,
    horizon: float,
    samples: int,
    seed: int,
    x0=None,
    tilt: VertexFunction | None = None,
    stream: int = 0,
) -> EventEstimate:
    """P(mu_T in event) by direct simulation, or importance sampling when a
    tilting potential is given (weights e^{log dP/dP~} under the tilted chain)."""
    if samples < 1:
        raise ValidationError("need at least one sample")
    x0_ix = chain.state_index(x0 if x0 is not None else chain.states[0])
    sim_chain = chain if tilt is None else tilted_chain(chain, tilt)
    dg_neg = None
    if tilt is not None:
        dg_neg = tilt.values[chain.edge_src] - tilt.values[chain.edge_dst]
        exit_gap = sim_chain.exit_rates - chain.exit_rates

    total = 0.0
    total_sq = 0.0
    hits = 0
    for i in range(samples):
        ss = np.random.SeedSequence((seed, stream, i))
        _, _, _, occ, counts = _run(sim_chain, x0_ix, horizon, ss, record=False)
        inside = event.satisfied(occ / occ.sum())
        if not inside:
            continue
        hits += 1
        if tilt is None:
            w = 1.0
        else:
            w = math.exp(float(counts @ dg_neg) + float(occ @ exit_gap))
        total += w
        total_sq += w * w
    p_hat = total / samples
    # sample standard error of the mean; reduces to binomial for unit weights
    var = max(total_sq / samples - p_hat * p_hat, 0.0)
    stderr = math.sqrt(var / samples)
    return EventEstimate(p_hat, stderr, samples, hits, horizon)


@dataclass(frozen=True)
class SlopeEstimate:
    """Per-horizon decay estimates and the 1/T-extrapolated LDP slope."""

    horizons: tuple
    probabilities: tuple
    stderrs: tuple
    per_horizon_slopes: tuple  # None where no hits were observed
    slope: float | None
    slope_stderr: float | None
    intercept_over_t: float | None
    lower_bounds: dict  # horizon -> slope lower bound for zero-hit horizons
    samples: int
    rng: dict


def estimate_ldp_slope(
    chain: ChainSpec,
    event: HalfSpaceEvent,
    horizons: Sequence[float],
    samples: int,
    seed: int,
    x0=None,
) -> SlopeEstimate:
    """-log P(mu_T in event)/T per horizon, extrapolated linearly in 1/T.

    Weighted least squares with delta-method binomial errors; horizons with
    zero hits are excluded from the fit and reported as one-sided bounds
    (95% rule of three)."""
    horizons = tuple(float(T) for T in horizons)
    if len(horizons) == 0:
        raise ValidationError("need at least one horizon")
    probs, errs, slopes = [], [], []
    bounds = {}
    for t_idx, T in enumerate(horizons):
        est = estimate_event_probability(
            chain, event, T, samples, seed, x0=x0, stream=t_idx
        )
        probs.append(est.p_hat)
        errs.append(est.stderr)
        if est.p_hat > 0.0:
            slopes.append(-math.log(est.p_hat) / T)
        else:
            slopes.append(None)
            bounds[T] = -math.log(3.0 / samples) / T

    usable = [
        (T, s, e / (T * p))
        for T, s, p, e in zip(horizons, slopes, probs, errs)
        if s is not None
    ]
    slope = slope_se = intercept = None
    if len(usable) >= 2:
        X = np.array([[1.0, 1.0 / T] for T, _, _ in usable])
        y = np.array([s for _, s, _ in usable])
        w = np.array([1.0 / max(se, 1e-12) ** 2 for _, _, se in usable])
        XtW = X.T * w
        cov = np.linalg.inv(XtW @ X)
        beta = cov @ (XtW @ y)
        slope = float(beta[0])
        intercept = float(beta[1])
        slope_se = float(math.sqrt(cov[0, 0]))
    return SlopeEstimate(
        horizons,
        tuple(probs),
        tuple(errs),
        tuple(slopes),
        slope,
        slope_se,
        intercept,
        bounds,
        samples,
        {"algorithm": RNG_ALGORITHM, "seed": seed},
    )
