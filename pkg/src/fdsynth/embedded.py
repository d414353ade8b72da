"""Embedded discrete-time kernel: next reset-point distribution and segment cost.

For a state ``s`` where the timeout is set to ``tau``, the segment until the
clock rings (or is switched off) is summarised by Poisson-weighted matrix
powers of ``p_bar`` (``P`` with clock-off states made absorbing):

    dist(tau) = sum_i w_i(tau) * (e_s p_bar^i) F
    cost(tau) = sum_i w_i(tau) * [ tau/(i+1) * sum_{j<=i} v_j.r_bar
                                   + sum_{j<i} v_j.j_p + v_i.j_f ]

with ``w_i(tau) = exp(-lam tau) (lam tau)^i / i!`` and ``v_j = e_s p_bar^j``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammainc, gammaln

from .errors import ModelError, NumericError
from .model import FdCtmc, StateClassification, classify

TRUNCATION_CAP = 100_000
# exp(-u) stays a normal double up to u ~ 708
SCALED_MODE_THRESHOLD = 700.0


@dataclass(frozen=True)
class DiscretizationParams:
    """Timeout grid ``{k*delta : 1 <= k, k*delta <= tau_max}`` plus accuracies."""

    delta: float
    tau_max: float
    kappa: float
    epsilon: float

    def __post_init__(self):
        for name in ("delta", "tau_max", "kappa", "epsilon"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"{name} must be positive and finite, got {v}", code="bad_params")
        if self.delta > self.tau_max:
            raise ModelError("delta must not exceed tau_max", code="bad_params")

    @classmethod
    def from_epsilon(cls, epsilon, delta, tau_max, kappa=None):
        return cls(delta, tau_max, epsilon / 100 if kappa is None else kappa, epsilon)

    @property
    def k_max(self) -> int:
        return int(math.floor(self.tau_max / self.delta * (1 + 1e-12)))

    def tau(self, k):
        return k * self.delta

    def grid(self) -> np.ndarray:
        return np.arange(1, self.k_max + 1) * self.delta

    @property
    def alpha(self) -> float:
        return self.delta

    @property
    def beta(self) -> float:
        return self.k_max * self.delta


def suggest_kappa(c: FdCtmc, epsilon: float, value_scale: float = 1.0) -> float:
    """Heuristic kernel accuracy ``eps / (8 |S| scale)``. Not a certified bound."""
    return epsilon / (8 * c.n * max(value_scale, 1.0))


def poisson_tail(mu: float, I: int) -> float:
    """P(N >= I) for N ~ Poisson(mu)."""
    if I <= 0:
        return 1.0
    if mu == 0:
        return 0.0
    return float(gammainc(I, mu))


def truncation_index(lam, tau_max, kappa, cost_bound, cap=TRUNCATION_CAP) -> int:
    """Smallest I >= 1 with ``poisson_tail(lam*tau_max, I) * cost_bound <= kappa``."""
    if not (lam >= 0 and tau_max >= 0 and kappa > 0 and cost_bound > 0):
        raise ModelError("truncation_index needs positive arguments", code="bad_params")
    mu = lam * tau_max

    def ok(I):
        return poisson_tail(mu, I) * cost_bound <= kappa

    if ok(1):
        return 1
    if not ok(cap):
        raise NumericError(
            f"truncation index exceeds cap {cap} (lam*tau_max={mu:.6g}, kappa={kappa:.3g})",
            code="truncation_overflow",
        )
    lo, hi = 1, max(2, int(mu) + 1)
    while not ok(hi):
        lo, hi = hi, min(cap, 2 * hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def poisson_weights(u, I: int) -> np.ndarray:
    """Matrix ``W[m, i] = exp(-u_m) u_m^i / i!`` for ``i < I``.

    Every entry depends only on its own ``u_m``, so results are bitwise
    independent of how evaluation points are batched.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    W = np.empty((u.size, I))
    small = u <= SCALED_MODE_THRESHOLD
    if small.any():
        us = u[small]
        col = np.exp(-us)
        W[small, 0] = col
        for i in range(1, I):
            col = col * us / i
            W[small, i] = col
    if (~small).any():
        ub = u[~small]
        i = np.arange(I)
        logw = -ub[:, None] + i[None, :] * np.log(ub)[:, None] - gammaln(i + 1)[None, :]
        W[~small] = np.exp(logw)
    return W


@dataclass(frozen=True)
class KernelRow:
    dist: np.ndarray
    cost: float


@dataclass
class _Series:
    V: np.ndarray  # (I, n) rows e_s p_bar^j
    VF: np.ndarray  # (I, n)
    r_cum: np.ndarray  # sum_{j<=i} v_j . r_bar
    jp_cum: np.ndarray  # sum_{j<i} v_j . j_p
    jf: np.ndarray  # v_i . j_f


@dataclass(frozen=True)
class EmbeddedKernel:
    p_bar: sp.csr_array
    r_bar: np.ndarray
    j_p: np.ndarray
    j_f: np.ndarray
    trunc_index: int
    lam: float
    F: sp.csr_array
    params: DiscretizationParams
    classification: StateClassification
    index: dict
    mdp_mask: np.ndarray
    cost_bound: float
    _series: dict = field(default_factory=dict, repr=False, compare=False)
    _rows: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.p_bar.shape[0]


def build_kernel(c: FdCtmc, params: DiscretizationParams, cls: StateClassification | None = None):
    cls = classify(c) if cls is None else cls
    fd = c.fd_mask
    off = ~fd
    lil = c.P.tolil()
    for i in np.flatnonzero(off):
        lil.rows[i] = [i]
        lil.data[i] = [1.0]
    p_bar = sp.csr_array(lil)
    r_bar = np.where(fd, c.costs.R, 0.0)
    j_p = np.where(fd, np.asarray(c.P.multiply(c.costs.I_P).sum(axis=1)).ravel(), 0.0)
    j_f = np.where(fd, np.asarray(c.F.multiply(c.costs.I_F).sum(axis=1)).ravel(), 0.0)
    if any(c.index[t] in np.flatnonzero(fd) for t in c.targets):
        warnings.warn(
            "a target is a fixed-delay state; visits to it inside a timeout segment "
            "do not stop cost accumulation in the embedded chain",
            stacklevel=2,
        )
    cost_bound = params.tau_max * float(r_bar.max(initial=0.0)) + max(
        float(j_p.max(initial=0.0)), float(j_f.max(initial=0.0)), 1.0
    )
    I = truncation_index(c.lam, params.tau_max, params.kappa, cost_bound)
    mdp = c.mask(cls.s_off) | c.mask(cls.s_set)
    for a in (r_bar, j_p, j_f, mdp):
        a.setflags(write=False)
    return EmbeddedKernel(
        p_bar, r_bar, j_p, j_f, I, c.lam, c.F, params, cls, dict(c.index), mdp, cost_bound
    )


def precompute_powers(k: EmbeddedKernel, s: str) -> np.ndarray:
    """Rows ``v_j = e_s p_bar^j`` for ``j < I``."""
    return _series(k, s).V


def _series(k: EmbeddedKernel, s: str) -> _Series:
    hit = k._series.get(s)
    if hit is not None:
        return hit
    I, n = k.trunc_index, k.n
    V = np.zeros((I, n))
    V[0, k.index[s]] = 1.0
    pT = sp.csr_array(k.p_bar.T)
    for j in range(1, I):
        V[j] = pT @ V[j - 1]
    VF = np.asarray((sp.csr_array(k.F.T) @ V.T).T)
    r = V @ k.r_bar
    jp = V @ k.j_p
    out = _Series(
        V=V,
        VF=VF,
        r_cum=np.cumsum(r),
        jp_cum=np.concatenate(([0.0], np.cumsum(jp)[:-1])),
        jf=V @ k.j_f,
    )
    k._series[s] = out
    return out


def kernel_off_state(k: EmbeddedKernel, c: FdCtmc, s: str) -> KernelRow:
    i = c.index[s]
    if s not in k.classification.s_off:
        raise ModelError(f"{s!r} is not a clock-off state")
    dist = c.P[[i]].toarray().ravel()
    if np.any(dist[~k.mdp_mask] > 0):
        raise ModelError(
            f"successors of {s!r} leave the embedded state space", code="model_shape_violation"
        )
    ip = c.P[[i]].multiply(c.costs.I_P[[i]]).sum()
    return KernelRow(dist, float(c.costs.R[i] / c.lam + ip))


def _check_weights(W: np.ndarray, k: EmbeddedKernel) -> None:
    total = W.sum(axis=1)
    if np.any(total < 1 - k.params.kappa - 1e-12):
        raise NumericError(
            "Poisson weights underflowed; kernel mass below 1 - kappa",
            code="precision_exhausted",
        )


def kernel_rows(k: EmbeddedKernel, s: str, taus) -> tuple[np.ndarray, np.ndarray]:
    """Batched ``kernel_set_state``: (dists[m, n], costs[m])."""
    ser = _series(k, s)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    W = poisson_weights(k.lam * taus, k.trunc_index)
    _check_weights(W, k)
    dists = W @ ser.VF
    inv = 1.0 / np.arange(1, k.trunc_index + 1)
    costs = W @ (ser.jp_cum + ser.jf) + taus * (W @ (ser.r_cum * inv))
    return dists, costs


def kernel_set_state(k: EmbeddedKernel, s: str, tau: float) -> KernelRow:
    if s not in k.classification.s_set:
        raise ModelError(f"{s!r} is not a state where a timeout is set")
    if not 0 < tau:
        raise ModelError(f"timeout must be positive, got {tau}")
    dists, costs = kernel_rows(k, s, [tau])
    return KernelRow(dists[0], float(costs[0]))


def kernel_row_at(k: EmbeddedKernel, s: str, grid_k: int) -> KernelRow:
    """Cached kernel row for timeout ``grid_k * delta``."""
    key = (s, grid_k)
    row = k._rows.get(key)
    if row is None:
        row = kernel_set_state(k, s, k.params.tau(grid_k))
        k._rows[key] = row
    return row


def objective_values(k: EmbeddedKernel, s: str, x: np.ndarray, taus) -> np.ndarray:
    """``T_s(tau) . x + c_s(tau)`` for each tau.

    Accumulated column by column so a given tau yields the same bits no
    matter which other points are evaluated alongside it; explicit and
    symbolic improvement both rely on this.
    """
    ser = _series(k, s)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    W = poisson_weights(k.lam * taus, k.trunc_index)
    _check_weights(W, k)
    y = ser.VF @ x
    h = y + ser.jp_cum + ser.jf
    e = ser.r_cum / np.arange(1, k.trunc_index + 1)
    acc = np.zeros(taus.size)
    for i in range(k.trunc_index):
        acc += W[:, i] * (h[i] + taus * e[i])
    return acc
