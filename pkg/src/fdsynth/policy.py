"""Policy iteration over timeout values: explicit and root-guided improvement."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .embedded import (
    DiscretizationParams,
    EmbeddedKernel,
    KernelRow,
    build_kernel,
    kernel_off_state,
    kernel_row_at,
    kernel_set_state,
    objective_values,
)
from .errors import NumericError
from .model import DelayFunction, FdCtmc, RateModel, prepare
from .polynomial import build_objective_poly, derivative_poly, isolate_roots

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
PIVOT_MIN = 1e-12
DIVERGENCE_CAP = 1e15
DENSE_LIMIT = 4000
GS_TOL = 1e-10
MAX_ITERATIONS = 1_000_000
CHUNK = 4096

Mode = Literal["explicit", "symbolic"]


@dataclass(frozen=True)
class CandidateSet:
    ks: tuple  # grid indices, tau = k * delta
    provenance: tuple  # "interval-bound" | "near-root" | "current" | "full-grid"


@dataclass
class Improvement:
    chosen: int
    argmin: np.ndarray  # grid indices attaining the minimum (within TIE_TOL)
    evaluations: int = 0
    candidates: CandidateSet | None = None
    degree: int = -1
    roots: tuple = ()
    zero_poly: bool = False


@dataclass
class IterationStats:
    value: float
    max_degree: int = -1
    num_roots: int = 0
    candidates: int = 0
    millis: float = 0.0


@dataclass
class SynthesisReport:
    delays: DelayFunction
    grid: dict  # S_set state -> grid index
    value_at_initial: float
    values: dict  # embedded state -> expected cost to target
    iterations: int
    per_iteration: list = field(default_factory=list)
    mode: str = "symbolic"
    params: DiscretizationParams | None = None
    trunc_index: int = 0
    kernel_evaluations: int = 0
    initial_in_target: bool = False


# -------------------------------------------------------------- evaluation


def _rows(k: EmbeddedKernel, c: FdCtmc, d: DelayFunction) -> tuple[sp.csr_array, np.ndarray]:
    n = c.n
    T = sp.lil_array((n, n))
    cost = np.zeros(n)
    tgt = c.target_mask
    for s in c.states:
        i = c.index[s]
        if not k.mdp_mask[i] or tgt[i]:
            continue
        row = _row_for(k, c, s, d)
        nz = np.flatnonzero(row.dist)
        T[i, nz] = row.dist[nz]
        cost[i] = row.cost
    return sp.csr_array(T), cost


def _row_for(k: EmbeddedKernel, c: FdCtmc, s: str, d: DelayFunction) -> KernelRow:
    if s in k.classification.s_off:
        return kernel_off_state(k, c, s)
    tau = d[s]
    g = tau / k.params.delta
    if abs(g - round(g)) < 1e-9 and round(g) >= 1:
        return kernel_row_at(k, s, int(round(g)))
    return kernel_set_state(k, s, tau)


def _reaches_target(T: sp.csr_array, transient: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    """Backward reachability of targets in the support graph of T."""
    ok = tgt.copy()
    back = sp.csr_array((T > 0).T)
    frontier = list(np.flatnonzero(tgt))
    while frontier:
        j = frontier.pop()
        for i in back.indices[back.indptr[j] : back.indptr[j + 1]]:
            if not ok[i]:
                ok[i] = True
                frontier.append(i)
    return ok | ~transient


def _gauss_seidel(A: sp.csr_array, b: np.ndarray, tol=GS_TOL, maxit=100_000) -> np.ndarray:
    lower = sp.csr_array(sp.tril(A, format="csr"))
    upper = sp.csr_array(sp.triu(A, k=1, format="csr"))
    x = np.zeros_like(b)
    for _ in range(maxit):
        x_new = spla.spsolve_triangular(lower, b - upper @ x, lower=True)
        if np.max(np.abs(x_new - x)) <= tol * max(1.0, np.max(np.abs(x_new))):
            return x_new
        if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new)) > DIVERGENCE_CAP:
            break
        x = x_new
    raise NumericError(
        "infinite expected cost under current policy (iterative solve diverged)",
        code="infinite_cost",
    )


def policy_evaluate(k: EmbeddedKernel, c: FdCtmc, d: DelayFunction) -> np.ndarray:
    """Expected total cost to reach the targets, indexed like ``c.states``.

    Entries outside the embedded state space and at targets are zero.
    """
    T, cost = _rows(k, c, d)
    tgt = c.target_mask
    transient = k.mdp_mask & ~tgt
    reach = _reaches_target(T, transient, tgt)
    if not reach.all():
        bad = [c.states[i] for i in np.flatnonzero(~reach)]
        raise NumericError(
            f"infinite expected cost under current policy: targets unreachable from {bad[:5]}",
            code="infinite_cost",
        )
    idx = np.flatnonzero(transient)
    x = np.zeros(c.n)
    if idx.size == 0:
        return x
    A = sp.identity(idx.size, format="csr") - T[idx][:, idx]
    b = cost[idx]
    if idx.size <= DENSE_LIMIT:
        Ad = A.toarray()
        lu, piv = sla.lu_factor(Ad, check_finite=False)
        if np.min(np.abs(np.diag(lu))) < PIVOT_MIN:
            raise NumericError(
                "infinite expected cost under current policy (singular system)",
                code="infinite_cost",
            )
        sol = sla.lu_solve((lu, piv), b)
        resid = np.max(np.abs(Ad @ sol - b))
        if resid > 1e-9 * (1 + np.max(np.abs(sol))):
            log.warning("policy evaluation residual %.3g", resid)
    else:
        sol = _gauss_seidel(sp.csr_array(A), b)
    if not np.all(np.isfinite(sol)) or np.max(sol) > DIVERGENCE_CAP or np.min(sol) < -1e-9:
        raise NumericError(
            "infinite expected cost under current policy (divergent values)",
            code="infinite_cost",
        )
    x[idx] = np.maximum(sol, 0.0)
    return x


def initial_value(k: EmbeddedKernel, c: FdCtmc, d: DelayFunction, x: np.ndarray) -> float:
    """Value at the initial state; unrolls one step when the initial state is a target."""
    s = c.initial
    if s not in c.targets:
        return float(x[c.index[s]])
    row = _row_for(k, c, s, d)
    return float(row.cost + row.dist @ x)


# ------------------------------------------------------------- improvement


def _tie_choice(ks: np.ndarray, vals: np.ndarray, current: int):
    m = float(vals.min())
    L = ks[vals <= m + TIE_TOL * max(1.0, abs(m))]
    chosen = current if current in L else int(L.min())
    return chosen, L


def improve_state_explicit(k: EmbeddedKernel, s: str, x: np.ndarray, current: int) -> Improvement:
    """Enumerate the whole grid."""
    kmax = k.params.k_max
    ks = np.arange(1, kmax + 1)
    vals = np.empty(kmax)
    for lo in range(0, kmax, CHUNK):
        vals[lo : lo + CHUNK] = objective_values(k, s, x, k.params.tau(ks[lo : lo + CHUNK]))
    chosen, L = _tie_choice(ks, vals, current)
    cands = CandidateSet(tuple(ks.tolist()), ("full-grid",) * kmax)
    return Improvement(chosen, L, evaluations=kmax, candidates=cands)


def candidate_set(k: EmbeddedKernel, roots, current: int | None) -> CandidateSet:
    delta, kmax = k.params.delta, k.params.k_max
    out: dict[int, str] = {1: "interval-bound", kmax: "interval-bound"}
    for r in roots:
        lo = max(1, math.ceil((r - 1.5 * delta) / delta - 1e-9))
        hi = min(kmax, math.floor((r + 1.5 * delta) / delta + 1e-9))
        for g in range(lo, hi + 1):
            out.setdefault(g, f"near-root({r:.9g})")
    if current is not None and 1 <= current <= kmax:
        out.setdefault(current, "current")
    ks = sorted(out)
    return CandidateSet(tuple(ks), tuple(out[g] for g in ks))


def improve_state_symbolic(
    k: EmbeddedKernel, s: str, x: np.ndarray, current: int
) -> Improvement:
    """Evaluate only the interval bounds and grid points near stationary points."""
    p = build_objective_poly(k, s, x)
    q = derivative_poly(p)
    params = k.params
    if q.is_zero:
        chosen = current if 1 <= current <= params.k_max else 1
        return Improvement(
            chosen, np.arange(1, params.k_max + 1), degree=p.degree, zero_poly=True
        )
    rs = isolate_roots(q, (params.alpha, params.beta), params.delta / 2)
    cands = candidate_set(k, rs.roots, current)
    ks = np.array(cands.ks)
    vals = objective_values(k, s, x, params.tau(ks))
    chosen, L = _tie_choice(ks, vals, current)
    return Improvement(
        chosen,
        L,
        evaluations=len(ks),
        candidates=cands,
        degree=p.degree,
        roots=rs.roots,
    )


# ------------------------------------------------------------------ driver


def delay_function(c: FdCtmc, k: EmbeddedKernel, grid: dict) -> DelayFunction:
    out = {s: math.inf for s in k.classification.s_off}
    out.update({s: k.params.tau(g) for s, g in grid.items()})
    return DelayFunction({s: out[s] for s in c.states if s in out})


def synthesize(
    model: FdCtmc | RateModel,
    params: DiscretizationParams,
    mode: Mode = "symbolic",
    kernel: EmbeddedKernel | None = None,
    check_monotone: bool = True,
) -> SynthesisReport:
    if isinstance(model, RateModel) or kernel is None:
        c, cls = prepare(model)
    else:
        c, cls = model, kernel.classification
    k = build_kernel(c, params, cls) if kernel is None else kernel
    improve = improve_state_symbolic if mode == "symbolic" else improve_state_explicit
    grid = {s: 1 for s in cls.s_set}
    stats: list[IterationStats] = []
    x_prev = None
    evals = 0
    it = 0
    while True:
        t0 = time.perf_counter()
        d = delay_function(c, k, grid)
        x = policy_evaluate(k, c, d)
        if check_monotone and x_prev is not None:
            worst = float(np.max(x - x_prev))
            if worst > 1e-10 * max(1.0, float(np.max(np.abs(x_prev)))):
                log.warning("value increased by %.3g in iteration %d", worst, it)
        x_prev = x
        st = IterationStats(value=initial_value(k, c, d, x))
        if not cls.s_set or it >= MAX_ITERATIONS:
            if it >= MAX_ITERATIONS:
                raise NumericError("policy iteration did not terminate", code="no_termination")
            stats.append(st)
            break
        new = {}
        for s in cls.s_set:
            imp = improve(k, s, x, grid[s])
            new[s] = imp.chosen
            evals += imp.evaluations
            st.candidates += imp.evaluations
            st.num_roots += len(imp.roots)
            st.max_degree = max(st.max_degree, imp.degree)
        st.millis = (time.perf_counter() - t0) * 1e3
        stats.append(st)
        it += 1
        if new == grid:
            break
        grid = new
    d = delay_function(c, k, grid)
    return SynthesisReport(
        delays=d,
        grid=dict(grid),
        value_at_initial=stats[-1].value,
        values={s: float(x[c.index[s]]) for s in c.states if k.mdp_mask[c.index[s]]},
        iterations=it,
        per_iteration=stats,
        mode=mode,
        params=params,
        trunc_index=k.trunc_index,
        kernel_evaluations=evals,
        initial_in_target=c.initial in c.targets,
    )
