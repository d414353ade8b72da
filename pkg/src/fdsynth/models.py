"""Generators for the two benchmark families: a multi-party connection protocol
and a disk-drive power manager.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ModelError
from .model import CostStructure, RateModel

BASE = ("A", "B", "C", "F")


@dataclass(frozen=True)
class ProtocolParams:
    n_bobs: int = 1
    p: float = 0.9  # message delivery probability
    q: float = 0.9  # probability an established link stays up per exp step
    lam: float = 1.0
    rate_cost: float = 1.0
    fd_impulse: float = 1.0

    def __post_init__(self):
        if self.n_bobs < 1:
            raise ModelError("n_bobs must be >= 1")
        if not (0 < self.p <= 1 and 0 < self.q <= 1):
            raise ModelError("p and q must lie in (0, 1]")
        if not (self.lam > 0 and self.rate_cost > 0 and self.fd_impulse >= 0):
            raise ModelError("rates and costs must be positive")


def _component(p: float, q: float):
    """Per-Bob exp-step and timeout distributions."""
    P = {
        "A": {"B": p, "F": 1 - p},
        "B": {"C": p, "F": 1 - p},
        "C": {"C": q, "A": 1 - q},
        "F": {"F": 1.0},
    }
    F = {"A": "A", "B": "A", "F": "A", "C": "C"}
    return P, F


def state_name(parts) -> str:
    return ",".join(parts)


def unestablished(state: str) -> frozenset:
    """Indices of Bobs whose link is not established in a composed protocol state."""
    return frozenset(i for i, c in enumerate(state.split(",")) if c != "C")


def gen_protocol(params: ProtocolParams = ProtocolParams()) -> RateModel:
    """Interleaving product of ``n_bobs`` copies; one shared timeout resets every open link.

    An exp step moves one uniformly chosen component (total exit rate
    ``n * lam`` after uniformization); the timeout moves all components
    through their fixed-delay edges at once.
    """
    n = params.n_bobs
    P1, F1 = _component(params.p, params.q)
    tuples = list(itertools.product(BASE, repeat=n))
    names = [state_name(t) for t in tuples]
    idx = {t: i for i, t in enumerate(tuples)}
    N = len(tuples)
    rows, cols, vals = [], [], []
    frows, fcols = [], []
    fd = []
    for t in tuples:
        i = idx[t]
        for comp, cur in enumerate(t):
            for nxt, pr in P1[cur].items():
                if nxt == cur or pr == 0:
                    continue
                u = t[:comp] + (nxt,) + t[comp + 1 :]
                rows.append(i)
                cols.append(idx[u])
                vals.append(params.lam * pr)
        if any(c != "C" for c in t):
            fd.append(names[i])
            frows.append(i)
            fcols.append(idx[tuple(F1[c] for c in t)])
    rates = sp.csr_array((vals, (rows, cols)), shape=(N, N))
    F = sp.csr_array((np.ones(len(frows)), (frows, fcols)), shape=(N, N))
    I_F = sp.csr_array((np.full(len(frows), params.fd_impulse), (frows, fcols)), shape=(N, N))
    costs = CostStructure.build(N, np.full(N, params.rate_cost), None, I_F)
    return RateModel(
        tuple(names),
        rates,
        tuple(fd),
        F,
        costs,
        state_name(("A",) * n),
        (state_name(("C",) * n),),
    )


@dataclass(frozen=True)
class DpmParams:
    n: int = 2  # buffer bound
    arrival_rate: float = 1.39
    service_rate: float = 12.5
    # energy per second in each mode; not given numerically in the source model
    energy_rates: dict = field(
        default_factory=lambda: {"busy": 2.15, "idle": 0.90, "sleep": 0.13, "acc": 0.0}
    )
    sleep_impulse: float = 1.0  # idle -> sleep switch
    wake_impulse: float = 2.0  # sleep -> busy/idle switch

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("buffer bound n must be >= 1")
        if not (self.arrival_rate > 0 and self.service_rate > 0):
            raise ModelError("rates must be positive")
        for mode in ("busy", "idle", "sleep"):
            if not self.energy_rates.get(mode, 0) > 0:
                raise ModelError(f"energy rate for {mode!r} must be positive")


def dpm_state(mode: str, k: int) -> str:
    return "acc" if mode == "acc" else f"{mode},{k}"


def gen_dpm(params: DpmParams = DpmParams()) -> RateModel:
    """Idle/busy/sleep disk with a bounded request buffer and two timeouts.

    ``idle,0`` sleeps after its timeout; the timeout set on entering
    ``sleep,0`` keeps running while requests queue up in ``sleep,k`` and
    wakes the disk into ``busy,k`` (or ``idle,0`` with an empty buffer).
    """
    n = params.n
    names = (
        ["acc", dpm_state("idle", 0)]
        + [dpm_state("busy", k) for k in range(1, n + 1)]
        + [dpm_state("sleep", k) for k in range(0, n + 1)]
    )
    idx = {s: i for i, s in enumerate(names)}
    N = len(names)
    lam_a, mu = params.arrival_rate, params.service_rate
    edges = [("idle,0", "busy,1", lam_a)]
    for k in range(1, n + 1):
        if k < n:
            edges.append((f"busy,{k}", f"busy,{k + 1}", lam_a))
        edges.append((f"busy,{k}", "acc" if k == 1 else f"busy,{k - 1}", mu))
    for k in range(0, n):
        edges.append((f"sleep,{k}", f"sleep,{k + 1}", lam_a))
    r, c, v = zip(*((idx[a], idx[b], w) for a, b, w in edges))
    rates = sp.csr_array((v, (r, c)), shape=(N, N))

    fd_edges = [("idle,0", "sleep,0", params.sleep_impulse), ("sleep,0", "idle,0", params.wake_impulse)]
    fd_edges += [(f"sleep,{k}", f"busy,{k}", params.wake_impulse) for k in range(1, n + 1)]
    fr, fc, fi = zip(*((idx[a], idx[b], w) for a, b, w in fd_edges))
    F = sp.csr_array((np.ones(len(fr)), (fr, fc)), shape=(N, N))
    I_F = sp.csr_array((fi, (fr, fc)), shape=(N, N))

    e = params.energy_rates
    R = np.array([e.get(s.split(",")[0], 0.0) for s in names])
    costs = CostStructure.build(N, R, None, I_F)
    fd = ["idle,0"] + [f"sleep,{k}" for k in range(0, n + 1)]
    return RateModel(tuple(names), rates, tuple(fd), F, costs, "idle,0", ("acc",))
