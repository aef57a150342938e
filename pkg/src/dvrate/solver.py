"""Rate function of a measure: inf over circulations = sup over potentials.

The two sides are solved together. Per mutual-reachability class, the
concave dual sum p_e (1 - e^{g(dst)-g(src)}) is maximized by damped Newton;
its Hessian is minus a weighted graph Laplacian and its stationarity
condition is exactly "the recovered flow Q(y,z) = p(y,z) e^{g(z)-g(y)} is
divergence-free", so one solve yields the optimal flow, the potential, and
both rate values. Cross-class support edges contribute their typical flux
linearly and make the supremum unattained; it is then certified along the
staircase sequence g^(n) built from the condensation levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import graphs
from .chain import (
    ChainSpec,
    Flow,
    ProbabilityMeasure,
    VertexFunction,
    _require_same_chain,
    divergence,
    mu_flow,
    stationary_distribution,
)
from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import (
    ConvergenceError,
    PathDependenceError,
    ValidationError,
)
from .functionals import dv_objective, phi_edge_sum
from .graphs import ClassPartition, CondensationGraph, fundamental_cycle_basis

APPROX_LEVELS = (10, 20, 40)  # n values certifying an unattained supremum


@dataclass(frozen=True)
class ApproximatingSequence:
    """Descriptor for g^(n): truncated class potentials plus h(class)*n offsets."""

    class_potentials: tuple
    condensation: CondensationGraph

    def build(self, n: int) -> VertexFunction:
        return build_approximating_sequence(
            self.class_potentials, self.condensation, n
        )


@dataclass(frozen=True)
class ContractionResult:
    mu: ProbabilityMeasure
    rate_inf: float
    rate_sup: float
    duality_gap: float
    optimal_flow: Flow
    class_potentials: tuple  # one VertexFunction per class, zero off-class
    partition: ClassPartition
    condensation: CondensationGraph
    attained: bool
    approximating: ApproximatingSequence | None
    iterations: int
    method: str
    residuals: dict


@dataclass(frozen=True)
class DvSupResult:
    value: float
    attained: bool
    maximizer: VertexFunction | None
    sequence: ApproximatingSequence | None
    certificate: tuple  # (n, objective value) pairs for the unattained case
    iterations: int
    residuals: dict


def _newton_class(p, src, dst, k, tol_abs, max_iter):
    """Maximize sum p_e(1 - e^{g[dst]-g[src]}) over g with g[0] = 0.

    Returns (g, q, iterations, gradient_residual); q is the recovered flow.
    """

    def flow_at(gv):
        e = gv[dst] - gv[src]
        if e.max(initial=-np.inf) > 700.0:
            return None  # would overflow; line search backs off
        return p * np.exp(e)

    def dual_value(qv):
        return float(np.sum(p - qv))

    def grad_of(qv):
        return (
            np.bincount(src, weights=qv, minlength=k)
            - np.bincount(dst, weights=qv, minlength=k)
        )

    def newton_step(qv, gradient):
        A = np.zeros((k, k))
        np.add.at(A, (src, dst), qv)
        A = A + A.T
        L = np.diag(A.sum(axis=1)) - A
        try:
            delta_red = np.linalg.solve(L[1:, 1:], gradient[1:])
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                "Newton system singular", residual=float(np.abs(gradient).max())
            ) from exc
        return np.concatenate([[0.0], delta_red])

    g = np.zeros(k)
    q = flow_at(g)
    iterations = 0
    while True:
        grad = grad_of(q)
        res = float(np.abs(grad).max())
        if res <= tol_abs:
            break
        if iterations >= max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} Newton iterations", residual=res
            )
        delta = newton_step(q, grad)
        slope = float(grad @ delta)
        if slope <= 0.0:
            raise ConvergenceError("Newton direction not ascending", residual=res)
        f0 = dual_value(q)
        alpha = 1.0
        while alpha >= 1e-14:
            g_try = g + alpha * delta
            q_try = flow_at(g_try)
            if q_try is not None and dual_value(q_try) >= f0 + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("line search stalled", residual=res)
        g, q = g_try, q_try
        iterations += 1

    # one undamped polish step drives the divergence residual to machine level
    grad = grad_of(q)
    res = float(np.abs(grad).max())
    if res > 0.0:
        try:
            delta = newton_step(q, grad)
            g_try = g + delta
            q_try = flow_at(g_try)
            if q_try is not None:
                res_try = float(np.abs(grad_of(q_try)).max())
                if res_try < res:
                    g, q, res = g_try, q_try, res_try
        except ConvergenceError:
            pass
    return g, q, iterations, res


def _cycles_class(chain, verts, eids, p, tol_first_order=1e-11, max_sweeps=5000):
    """Minimize the class primal over fundamental-cycle coefficients.

    Starts from the class-stationary flow (strictly positive circulation) and
    does cyclic exact coordinate descent: each 1-d problem is convex on its
    feasibility interval with derivative sum_e sign_e log((q_e + sign_e t)/p_e),
    solved by bisection. Stops when every basis cycle's first-order residual
    is below tol_first_order.
    """
    sub_states = [int(v) for v in verts]
    rates = {
        (int(chain.edge_src[e]), int(chain.edge_dst[e])): float(chain.edge_rates[e])
        for e in map(int, eids)
    }
    sub = ChainSpec(sub_states, rates)
    # sub-chain states are the sorted class vertices, so its edge order matches eids
    pi_sub = stationary_distribution(sub).values
    q = pi_sub[sub.edge_src] * sub.edge_rates

    pos = {int(e): i for i, e in enumerate(eids)}
    basis = [
        (np.array([pos[int(e)] for e in ids]), signs.astype(float))
        for ids, signs in fundamental_cycle_basis(chain, verts, eids)
    ]
    logp = np.log(p)

    def line_min(idxs, signs):
        qa = q[idxs]

        def deriv(t):
            vals = qa + signs * t
            if np.any(vals <= 0.0):
                return None
            return float(signs @ (np.log(vals) - logp[idxs]))

        lo = float(-qa[signs > 0].min())
        hi_edges = qa[signs < 0]
        hi = float(hi_edges.min()) if hi_edges.size else np.inf
        b = 1.0 if not np.isfinite(hi) else 0.5 * (hi + max(lo, 0.0))
        if np.isfinite(hi):
            a, b = lo, hi
        else:
            a = lo
            while True:
                d = deriv(b)
                if d is not None and d > 0.0:
                    break
                a = b
                b = 2.0 * b + 1.0
        for _ in range(200):
            mid = 0.5 * (a + b)
            d = deriv(mid)
            if d is None:
                # infeasible midpoint can only happen at the brackets' edges
                if mid > 0:
                    b = mid
                else:
                    a = mid
            elif d < 0.0:
                a = mid
            else:
                b = mid
            if b - a <= 1e-17 * max(1.0, abs(a), abs(b)):
                break
        t = 0.5 * (a + b)
        vals = qa + signs * t
        if np.any(vals <= 0.0):
            return 0.0
        q[idxs] = vals
        return t

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        worst = 0.0
        for idxs, signs in basis:
            resid = abs(float(signs @ (np.log(q[idxs]) - logp[idxs])))
            worst = max(worst, resid)
            if resid > 1e-16:
                line_min(idxs, signs)
        if worst <= tol_first_order:
            return q, sweeps
    raise ConvergenceError(
        f"cycle-basis descent did not reach first-order tolerance in "
        f"{max_sweeps} sweeps"
    )


def _class_potential_from_flow(chain, q_vals, p_vals, verts, eids, tol):
    """Potential with g(reference) = 0 from edge log-ratios, plus the
    path-independence check that certifies the flow is the per-class optimum."""
    if np.any(q_vals <= 0.0):
        raise ValidationError(
            "optimal flow must be strictly positive on class edges"
        )
    ratio = np.log(q_vals) - np.log(p_vals)
    out: dict[int, list] = {int(v): [] for v in verts}
    for i, e in enumerate(map(int, eids)):
        out[int(chain.edge_src[e])].append((int(chain.edge_dst[e]), i))

    ref = int(min(map(int, verts)))
    g = {ref: 0.0}
    queue = [ref]
    while queue:
        y = queue.pop(0)
        for z, i in out[y]:
            if z not in g:
                g[z] = g[y] + float(ratio[i])
                queue.append(z)
    if len(g) != len(verts):
        raise ValidationError("class is not strongly connected")  # impossible

    worst, worst_e = 0.0, None
    for i, e in enumerate(map(int, eids)):
        y, z = int(chain.edge_src[e]), int(chain.edge_dst[e])
        gap = abs(float(ratio[i]) - (g[z] - g[y]))
        if gap > worst:
            worst, worst_e = gap, (y, z)
    if worst > tol:
        y, z = worst_e
        raise PathDependenceError(
            f"edge log-ratios are path-dependent (residual {worst:.3e} on edge "
            f"({chain.states[y]!r}, {chain.states[z]!r})); the flow is not the "
            "per-class optimum"
        )
    full = np.zeros(chain.n_states)
    for v, val in g.items():
        full[v] = val
    return VertexFunction(chain, full)


def construct_class_potential(
    chain: ChainSpec,
    mu: ProbabilityMeasure,
    q_star: Flow,
    vertices: Sequence[int],
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> VertexFunction:
    """g on one class from log(Q*/Q^mu) summed along oriented paths.

    Zero at the smallest vertex of the class, zero off the class. Rejects
    flows whose log-ratios fail the cycle (path-independence) condition.
    """
    _require_same_chain(chain, mu, "measure")
    _require_same_chain(chain, q_star, "flow")
    verts = np.array(sorted(int(v) for v in vertices))
    vset = set(map(int, verts))
    sg = graphs.support_graph(chain, mu)
    eids = np.array(
        [
            int(e)
            for e in sg.edge_ids
            if int(chain.edge_src[e]) in vset and int(chain.edge_dst[e]) in vset
        ],
        dtype=np.int64,
    )
    if len(eids) == 0:
        return VertexFunction(chain, np.zeros(chain.n_states))
    p_vals = mu_flow(chain, mu).values[eids]
    return _class_potential_from_flow(
        chain, q_star.values[eids], p_vals, verts, eids,
        tolerances.path_independence,
    )


def build_approximating_sequence(
    class_potentials: Sequence[VertexFunction],
    cond: CondensationGraph,
    n: int,
) -> VertexFunction:
    """g^(n): class potentials truncated at n/3, lifted by h(class)*n, zero
    outside the support vertices. dv_objective(g^(n)) climbs to the rate."""
    if not (isinstance(n, (int, np.integer)) and n > 0):
        raise ValidationError("approximation level n must be a positive integer")
    cp = cond.partition
    chain = cp.support.chain
    g = np.zeros(chain.n_states)
    cap = n / 3.0
    for k, verts in enumerate(cp.classes):
        gl = class_potentials[k].values[verts]
        g[verts] = np.clip(gl, -cap, cap) + float(cond.h[k] * n)
    return VertexFunction(chain, g)


def minimize_flow(
    chain: ChainSpec,
    mu: ProbabilityMeasure,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    method: str = "auto",
) -> ContractionResult:
    """Solve inf over circulations of the joint rate at fixed mu.

    method: "newton" (damped Newton on the dual, default path), "cycles"
    (coordinate descent over fundamental-cycle coefficients), or "auto"
    (newton with cycles as fallback when it stalls).
    """
    if method not in ("auto", "newton", "cycles"):
        raise ValidationError(f"unknown method {method!r}")
    _require_same_chain(chain, mu, "measure")
    sg = graphs.support_graph(chain, mu)
    cp = graphs.mutual_reachability_classes(sg)
    cond = graphs.condensation(cp)
    p_full = mu_flow(chain, mu).values
    scale = max(1.0, float(p_full.sum()))
    tol_abs = tolerances.solver_gradient * scale

    q_vals = np.zeros(chain.n_edges)
    potentials = []
    primal = 0.0
    total_iters = 0
    grad_res = 0.0
    methods_used = set()

    for k, (verts, eids) in enumerate(zip(cp.classes, cp.internal_edges)):
        if len(eids) == 0:
            potentials.append(VertexFunction(chain, np.zeros(chain.n_states)))
            continue
        loc = {int(v): i for i, v in enumerate(verts)}
        src = np.array([loc[int(chain.edge_src[e])] for e in eids])
        dst = np.array([loc[int(chain.edge_dst[e])] for e in eids])
        p = p_full[eids]

        g_local = None
        if method in ("auto", "newton"):
            try:
                g_local, q_edge, iters, res = _newton_class(
                    p, src, dst, len(verts), tol_abs, tolerances.solver_max_iter
                )
                methods_used.add("newton")
            except ConvergenceError:
                if method == "newton":
                    raise
        if g_local is None:
            q_edge, iters = _cycles_class(chain, verts, eids, p)
            res = float(
                np.abs(
                    np.bincount(src, weights=q_edge, minlength=len(verts))
                    - np.bincount(dst, weights=q_edge, minlength=len(verts))
                ).max()
            )
            g_pot = _class_potential_from_flow(
                chain, q_edge, p, verts, eids, tolerances.path_independence
            )
            methods_used.add("cycles")
        else:
            full = np.zeros(chain.n_states)
            full[verts] = g_local - g_local[0]  # reference = smallest vertex
            g_pot = VertexFunction(chain, full)

        q_vals[eids] = q_edge
        primal += phi_edge_sum(q_edge, p)
        potentials.append(g_pot)
        total_iters += iters
        grad_res = max(grad_res, res)

    residual_cross = float(p_full[cp.cross_edges].sum())
    rate_inf = primal + residual_cross
    optimal_flow = Flow(chain, q_vals)
    attained = len(cp.cross_edges) == 0

    if attained:
        g_star = VertexFunction(
            chain, np.sum([g.values for g in potentials], axis=0)
            if potentials else np.zeros(chain.n_states),
        )
        rate_sup = dv_objective(chain, mu, g_star, tolerances)
        approximating = None
    else:
        approximating = ApproximatingSequence(tuple(potentials), cond)
        rate_sup = max(
            dv_objective(chain, mu, approximating.build(n), tolerances)
            for n in APPROX_LEVELS
        )

    div_res = float(np.abs(divergence(chain, optimal_flow).values).max(initial=0.0))
    return ContractionResult(
        mu=mu,
        rate_inf=rate_inf,
        rate_sup=rate_sup,
        duality_gap=abs(rate_inf - rate_sup),
        optimal_flow=optimal_flow,
        class_potentials=tuple(potentials),
        partition=cp,
        condensation=cond,
        attained=attained,
        approximating=approximating,
        iterations=total_iters,
        method="+".join(sorted(methods_used)) if methods_used else "closed-form",
        residuals={
            "gradient_max": grad_res,
            "divergence_max": div_res,
            "primal_dual_gap": abs(rate_inf - rate_sup),
        },
    )


def dv_sup(
    chain: ChainSpec,
    mu: ProbabilityMeasure,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    method: str = "auto",
) -> DvSupResult:
    """sup over potentials of the Donsker-Varadhan objective.

    Full-support mu: returns the gauge-fixed maximizer. Degenerate support:
    the sup equals rate_inf but is not attained; returns the approximating
    sequence and the objective values certifying it at the standard levels.
    """
    res = minimize_flow(chain, mu, tolerances, method)
    if res.attained:
        g_star = VertexFunction(
            res.optimal_flow.chain,
            np.sum([g.values for g in res.class_potentials], axis=0),
        )
        return DvSupResult(
            value=res.rate_sup,
            attained=True,
            maximizer=g_star,
            sequence=None,
            certificate=(),
            iterations=res.iterations,
            residuals=res.residuals,
        )
    cert = tuple(
        (n, dv_objective(chain, mu, res.approximating.build(n), tolerances))
        for n in APPROX_LEVELS
    )
    return DvSupResult(
        value=res.rate_inf,
        attained=False,
        maximizer=None,
        sequence=res.approximating,
        certificate=cert,
        iterations=res.iterations,
        residuals=res.residuals,
    )


def mixed_measure_rate(
    chain: ChainSpec,
    mu: ProbabilityMeasure,
    c: float,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Rate of c*mu + (1-c)*pi, the full-support mixture used to sandwich
    degenerate measures. Requires 0 < c < 1."""
    if not (0.0 < c < 1.0):
        raise ValidationError(f"mixing weight must be in (0,1), got {c}")
    _require_same_chain(chain, mu, "measure")
    pi = stationary_distribution(chain, tolerances)
    mixed = ProbabilityMeasure(
        chain, c * mu.values + (1.0 - c) * pi.values, tolerances
    )
    return minimize_flow(chain, mixed, tolerances).rate_inf
