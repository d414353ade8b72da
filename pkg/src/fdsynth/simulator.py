"""Monte Carlo estimation of the expected cost before reaching a target.

Runs are simulated in lockstep batches with numpy. Each batch draws from
its own Philox stream spawned from the seed, so results depend only on
(model, delays, seed, batch size).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ModelError, NumericError
from .model import DelayFunction, FdCtmc, StateClassification, classify

BATCH = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    runs: int = 100_000
    seed: int = 0
    step_cap: int = 10_000_000
    cost_cap: float = 1e12
    batch: int = BATCH

    def __post_init__(self):
        if self.runs < 1 or self.step_cap < 1 or not self.cost_cap > 0 or self.batch < 1:
            raise ModelError("simulation runs and caps must be positive")


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    std_error: float  # nan when fewer than two runs completed
    runs: int
    truncated_runs: int = 0


class _Sampler:
    """Row-wise categorical sampling from a CSR stochastic matrix."""

    def __init__(self, M: sp.csr_array, costs: sp.csr_array):
        M = sp.csr_array(M)
        M.sort_indices()
        rows = np.repeat(np.arange(M.shape[0]), np.diff(M.indptr))
        self.indices = M.indices
        self.impulse = np.asarray(sp.csr_array(costs)[rows, M.indices], dtype=float).ravel()
        cum = np.empty(M.nnz)
        for r in range(M.shape[0]):
            a, b = M.indptr[r], M.indptr[r + 1]
            if a == b:
                continue
            cs = np.cumsum(M.data[a:b])
            cs[-1] = 1.0
            cum[a:b] = r + cs
        self.cum = cum

    def draw(self, s: np.ndarray, u: np.ndarray):
        pos = np.searchsorted(self.cum, s + u, side="right")
        pos = np.minimum(pos, self.cum.size - 1)
        return self.indices[pos], self.impulse[pos]


def _delay_vector(c: FdCtmc, cls: StateClassification, d: DelayFunction) -> np.ndarray:
    out = np.full(c.n, np.inf)
    for s in c.fd_states:
        v = d.get(s)
        if v is None:
            if s in cls.s_set:
                raise ModelError(f"no delay for state {s!r}", code="missing_delay")
            v = np.nan  # never used for a fresh clock
        out[c.index[s]] = v
    return out


class Simulator:
    def __init__(self, c: FdCtmc, d: DelayFunction, cls: StateClassification | None = None):
        self.c = c
        self.cls = classify(c) if cls is None else cls
        self.delay = _delay_vector(c, self.cls, d)
        self.fd = c.fd_mask
        self.target = c.target_mask
        self.R = np.asarray(c.costs.R, dtype=float)
        self.expP = _Sampler(c.P, c.costs.I_P)
        self.fixF = _Sampler(c.F, c.costs.I_F)

    def run_batch(self, size: int, rng: np.random.Generator, step_cap: int, cost_cap: float):
        """Returns (costs, truncated) arrays of length ``size``."""
        c = self.c
        s = np.full(size, c.index[c.initial])
        clock = np.full(size, self.delay[s[0]])
        cost = np.zeros(size)
        trunc = np.zeros(size, dtype=bool)
        active = np.arange(size)
        steps = 0
        while active.size:
            st = s[active]
            ck = clock[active]
            t_exp = rng.exponential(1.0 / c.lam, active.size)
            u = rng.random(active.size)
            is_exp = t_exp < ck
            t = np.where(is_exp, t_exp, ck)
            nxt = np.empty_like(st)
            imp = np.empty(active.size)
            nxt[is_exp], imp[is_exp] = self.expP.draw(st[is_exp], u[is_exp])
            fx = ~is_exp
            nxt[fx], imp[fx] = self.fixF.draw(st[fx], u[fx])
            # clock keeps running only on an exp step between fixed-delay states
            keep = is_exp & self.fd[st] & self.fd[nxt]
            new_clock = np.where(keep, ck - t_exp, self.delay[nxt])
            fresh = ~keep & self.fd[nxt]
            if np.any(np.isnan(new_clock[fresh])):
                raise AssertionError("clock freshly set in a state where no timeout is set")
            cost[active] += t * self.R[st] + imp
            s[active] = nxt
            clock[active] = new_clock
            steps += 1
            hit = self.target[nxt]
            over = ~hit & ((cost[active] >= cost_cap) | (steps >= step_cap))
            trunc[active[over]] = True
            active = active[~hit & ~over]
        return cost, trunc


def sample_run(c: FdCtmc, d: DelayFunction, rng: np.random.Generator, step_cap=10_000_000, cost_cap=1e12) -> float:
    """Cost of one run until the first target visit after time 0 (``nan`` if capped)."""
    cost, trunc = Simulator(c, d).run_batch(1, rng, step_cap, cost_cap)
    return math.nan if trunc[0] else float(cost[0])


def estimate(c: FdCtmc, d: DelayFunction, cfg: SimConfig = SimConfig()) -> SimEstimate:
    sim = Simulator(c, d)
    sizes = [cfg.batch] * (cfg.runs // cfg.batch)
    if cfg.runs % cfg.batch:
        sizes.append(cfg.runs % cfg.batch)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    n_ok, mean, m2, n_trunc = 0, 0.0, 0.0, 0
    for size, ss in zip(sizes, seqs):
        rng = np.random.Generator(np.random.Philox(ss))
        cost, trunc = sim.run_batch(size, rng, cfg.step_cap, cfg.cost_cap)
        ok = cost[~trunc]
        n_trunc += int(trunc.sum())
        if ok.size == 0:
            continue
        # Chan et al. pairwise merge of (count, mean, M2)
        b_mean = float(ok.mean())
        b_m2 = float(((ok - b_mean) ** 2).sum())
        tot = n_ok + ok.size
        delta = b_mean - mean
        mean += delta * ok.size / tot
        m2 += b_m2 + delta**2 * n_ok * ok.size / tot
        n_ok = tot
    if n_ok == 0:
        raise NumericError("every simulated run hit a cap", code="estimator_starved")
    if n_trunc:
        warnings.warn(f"{n_trunc} of {cfg.runs} runs truncated by caps", stacklevel=2)
    se = math.sqrt(m2 / (n_ok - 1) / n_ok) if n_ok > 1 else math.nan
    return SimEstimate(mean, se, n_ok, n_trunc)
