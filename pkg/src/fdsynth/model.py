"""Fixed-delay CTMC data model: validation, uniformization, classification, pruning.

Matrices are stored as ``scipy.sparse.csr_array`` indexed by dense state
indices; state ids are strings kept in input order.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ModelError

STOCH_TOL = 1e-12
ROUNDING_NOISE = 1e-14


def _csr(m, n) -> sp.csr_array:
    if m is None:
        return sp.csr_array((n, n), dtype=float)
    if sp.issparse(m):
        out = sp.csr_array(m, dtype=float)
    else:
        out = sp.csr_array(np.asarray(m, dtype=float))
    if out.shape != (n, n):
        raise ModelError(f"matrix has shape {out.shape}, expected {(n, n)}")
    out.sum_duplicates()
    out.eliminate_zeros()
    return out


def _check_nonneg(m: sp.csr_array, name: str, states) -> None:
    if m.nnz and (not np.all(np.isfinite(m.data)) or m.data.min() < 0):
        coo = m.tocoo()
        bad = np.flatnonzero(~(coo.data >= 0))[0]
        raise ModelError(
            f"{name} has a negative or non-finite entry at "
            f"({states[coo.row[bad]]}, {states[coo.col[bad]]})",
            location=f"/{name}",
        )


def _stochastic(m: sp.csr_array, name: str, states) -> sp.csr_array:
    """Validate row sums; rows off by more than rounding noise but less than STOCH_TOL are renormalized."""
    sums = np.asarray(m.sum(axis=1)).ravel()
    dev = np.abs(sums - 1.0)
    if np.any(dev > STOCH_TOL):
        i = int(np.argmax(dev))
        raise ModelError(
            f"row {states[i]!r} of {name} sums to {sums[i]:.12g}, expected 1",
            code="not_stochastic",
            location=f"/{name}/{states[i]}",
        )
    # rows within rounding noise are left alone so that parsing is idempotent
    fix = dev > ROUNDING_NOISE
    if np.any(fix):
        m = sp.csr_array(sp.diags_array(np.where(fix, 1.0 / sums, 1.0)) @ m)
    return m


@dataclass(frozen=True)
class CostStructure:
    """Rate costs ``R`` (per second) and impulse costs on exp / fixed-delay edges."""

    R: np.ndarray
    I_P: sp.csr_array
    I_F: sp.csr_array

    @classmethod
    def build(cls, n: int, R, I_P=None, I_F=None) -> "CostStructure":
        R = np.array(R, dtype=float).reshape(-1)
        if R.shape != (n,):
            raise ModelError(f"R has {R.size} entries, expected {n}")
        R.setflags(write=False)
        return cls(R, _csr(I_P, n), _csr(I_F, n))

    def scaled(self, factor: float) -> "CostStructure":
        R = self.R * factor
        R.setflags(write=False)
        return CostStructure(R, self.I_P * factor, self.I_F * factor)

    def restrict(self, keep: np.ndarray) -> "CostStructure":
        R = self.R[keep].copy()
        R.setflags(write=False)
        return CostStructure(R, self.I_P[keep][:, keep], self.I_F[keep][:, keep])


def _validate_common(states, fd_states, F, costs, initial, targets):
    states = tuple(states)
    if len(set(states)) != len(states):
        raise ModelError("duplicate state ids", code="duplicate_state")
    if not states:
        raise ModelError("model has no states")
    known = set(states)
    for s in list(fd_states) + [initial] + list(targets):
        if s not in known:
            raise ModelError(f"undeclared state {s!r}", code="dangling_state")
    if not targets:
        raise ModelError("target set is empty", code="no_targets")
    n = len(states)
    idx = {s: i for i, s in enumerate(states)}
    fd_mask = np.zeros(n, dtype=bool)
    fd_mask[[idx[s] for s in fd_states]] = True
    F = _csr(F, n)
    _check_nonneg(F, "F", states)
    # non-fd rows of F are identity by definition
    if np.any(~fd_mask):
        Fl = F.tolil()
        for i in np.flatnonzero(~fd_mask):
            row = Fl.rows[i]
            vals = Fl.data[i]
            if row and not (row == [i] and abs(vals[0] - 1.0) <= STOCH_TOL):
                raise ModelError(
                    f"state {states[i]!r} is not fixed-delay but has F edges",
                    location=f"/F/{states[i]}",
                )
            Fl.rows[i] = [i]
            Fl.data[i] = [1.0]
        F = sp.csr_array(Fl)
    F = _stochastic(F, "F", states)
    _check_nonneg(costs.I_P, "I_P", states)
    _check_nonneg(costs.I_F, "I_F", states)
    R = costs.R
    tmask = np.zeros(n, dtype=bool)
    tmask[[idx[t] for t in targets]] = True
    if not np.all(np.isfinite(R)) or np.any(R < 0) or np.any((R <= 0) & ~tmask):
        i = int(np.flatnonzero(~((R > 0) | (tmask & (R == 0))))[0])
        raise ModelError(
            f"rate cost of {states[i]!r} must be positive", location=f"/costs/R/{states[i]}"
        )
    ordered_fd = tuple(s for s in states if s in set(fd_states))
    ordered_targets = tuple(s for s in states if s in set(targets))
    return states, ordered_fd, F, ordered_targets


@dataclass(frozen=True)
class RateModel:
    """fdCTMC given by a matrix of exponential rates instead of (lambda, P)."""

    states: tuple
    rates: sp.csr_array
    fd_states: tuple
    F: sp.csr_array
    costs: CostStructure
    initial: str
    targets: tuple

    def __post_init__(self):
        states, fd, F, targets = _validate_common(
            self.states, self.fd_states, self.F, self.costs, self.initial, self.targets
        )
        n = len(states)
        rates = _csr(self.rates, n)
        _check_nonneg(rates, "rates", states)
        if np.any(rates.diagonal() != 0):
            i = int(np.flatnonzero(rates.diagonal())[0])
            raise ModelError(
                f"rate matrix has a self-loop at {states[i]!r}", location=f"/rates/{states[i]}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "fd_states", fd)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "rates", rates)

    def exit_rates(self) -> np.ndarray:
        return np.asarray(self.rates.sum(axis=1)).ravel()


@dataclass(frozen=True)
class FdCtmc:
    """A uniformized fdCTMC ``(S, lambda, P, S_fd, F)`` with costs, initial state and targets."""

    states: tuple
    lam: float
    P: sp.csr_array
    fd_states: tuple
    F: sp.csr_array
    costs: CostStructure
    initial: str
    targets: tuple
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        states, fd, F, targets = _validate_common(
            self.states, self.fd_states, self.F, self.costs, self.initial, self.targets
        )
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ModelError(f"exit rate lambda must be positive, got {self.lam}")
        P = _csr(self.P, len(states))
        _check_nonneg(P, "P", states)
        P = _stochastic(P, "P", states)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "fd_states", fd)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "index", {s: i for i, s in enumerate(states)})

    @property
    def n(self) -> int:
        return len(self.states)

    def mask(self, names) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[[self.index[s] for s in names]] = True
        return m

    @property
    def fd_mask(self) -> np.ndarray:
        return self.mask(self.fd_states)

    @property
    def target_mask(self) -> np.ndarray:
        return self.mask(self.targets)

    def with_costs(self, costs: CostStructure) -> "FdCtmc":
        return FdCtmc(
            self.states, self.lam, self.P, self.fd_states, self.F, costs, self.initial, self.targets
        )


@dataclass(frozen=True)
class StateClassification:
    """``s_off``: states with the clock off; ``s_set``: states where a timeout is (re)set."""

    s_off: tuple
    s_set: tuple

    @property
    def mdp_states(self) -> frozenset:
        return frozenset(self.s_off) | frozenset(self.s_set)


@dataclass(frozen=True)
class DelayFunction:
    """Timeouts in seconds. States with the clock off map to ``inf``."""

    delays: Mapping[str, float]

    def __getitem__(self, s: str) -> float:
        return self.delays[s]

    def get(self, s, default=None):
        return self.delays.get(s, default)

    def finite(self) -> dict:
        return {s: t for s, t in self.delays.items() if math.isfinite(t)}

    @classmethod
    def from_mapping(cls, c: FdCtmc, cls_: StateClassification, delays: Mapping[str, float]):
        """Complete a user mapping: S_off -> inf; every fd state needs a positive delay."""
        out = {}
        for s in c.states:
            if s in cls_.s_off:
                out[s] = math.inf
            elif s in delays:
                t = float(delays[s])
                if not t > 0:
                    raise ModelError(f"delay for {s!r} must be positive, got {t}")
                out[s] = t
            elif s in cls_.s_set:
                raise ModelError(f"no delay given for state {s!r}", code="missing_delay")
        return cls(out)


def uniformize(m: RateModel) -> FdCtmc:
    """Common exit rate = max row sum; missing mass becomes a zero-cost self-loop."""
    exits = m.exit_rates()
    lam = float(exits.max()) if exits.size else 0.0
    if not lam > 0:
        raise ModelError("all exit rates are zero", code="degenerate_model")
    P = sp.csr_array(m.rates / lam) + sp.diags_array(1.0 - exits / lam)
    P = sp.csr_array(P)
    P.eliminate_zeros()
    # self-loops carry no impulse cost
    I_P = m.costs.I_P.tolil()
    I_P.setdiag(0.0)
    costs = CostStructure(m.costs.R, sp.csr_array(I_P), m.costs.I_F)
    return FdCtmc(m.states, lam, P, m.fd_states, m.F, costs, m.initial, m.targets)


def classify(c: FdCtmc) -> StateClassification:
    fd = c.fd_mask
    off = ~fd
    # incoming exp edge from an off state, or any incoming fixed-delay edge
    from_off = np.asarray(c.P[off].sum(axis=0)).ravel() > 0 if off.any() else np.zeros(c.n, bool)
    from_fd = np.asarray(c.F[fd].sum(axis=0)).ravel() > 0 if fd.any() else np.zeros(c.n, bool)
    in_set = fd & (from_off | from_fd)
    init = c.index[c.initial]
    if fd[init]:
        in_set[init] = True
    s_off = tuple(s for s, f in zip(c.states, off) if f)
    s_set = tuple(s for s, f in zip(c.states, in_set) if f)
    for t in c.targets:
        if not (off[c.index[t]] or in_set[c.index[t]]):
            raise ModelError(
                f"target {t!r} is a fixed-delay state where no timeout is set",
                code="target_not_mdp_state",
            )
    return StateClassification(s_off, s_set)


def reachable(c: FdCtmc, start: Sequence[int] | None = None) -> np.ndarray:
    """States reachable from ``start`` (default: the initial state) along P or F edges."""
    adj = sp.csr_array((c.P + c.F) > 0)
    seen = np.zeros(c.n, dtype=bool)
    queue = deque([c.index[c.initial]] if start is None else start)
    for s in queue:
        seen[s] = True
    while queue:
        s = queue.popleft()
        for t in adj.indices[adj.indptr[s] : adj.indptr[s + 1]]:
            if not seen[t]:
                seen[t] = True
                queue.append(t)
    return seen


def prune_unreachable(c: FdCtmc, cls: StateClassification | None = None) -> FdCtmc:
    """Drop every state not reachable from the initial state.

    Reachability in the P/F edge graph coincides with reachability in the
    embedded decision process, since every reachable S_set state is entered
    through an edge of one of the two matrices. Intermediate fixed-delay
    states used inside a timeout segment are therefore kept as well.
    """
    keep = reachable(c)
    if keep.all():
        return c
    targets = tuple(t for t in c.targets if keep[c.index[t]])
    if not targets:
        raise ModelError("no target state is reachable from the initial state", code="target_unreachable")
    states = tuple(s for s, k in zip(c.states, keep) if k)
    fd = tuple(s for s in c.fd_states if keep[c.index[s]])
    return FdCtmc(
        states,
        c.lam,
        c.P[keep][:, keep],
        fd,
        c.F[keep][:, keep],
        c.costs.restrict(keep),
        c.initial,
        targets,
    )


def prepare(model: RateModel | FdCtmc) -> tuple[FdCtmc, StateClassification]:
    """uniformize (if needed) -> prune -> classify."""
    c = uniformize(model) if isinstance(model, RateModel) else model
    c = prune_unreachable(c)
    return c, classify(c)
