"""Independent ground-truth engines for cross-checking the synthesizer.

Uniformization gives certified-accuracy transient probabilities for a fixed
decision vector (the problem restricted to a CTMC); exhaustive enumeration
bounds what stationary policies can achieve; Monte-Carlo simulation executes
a piecewise-constant policy path by path.  None of these share code with the
matrix-exponential evaluation path they are used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import poisson

from .errors import TooManyVectorsError
from .model import Ctmdp, DecisionVector, GeneratorMatrix, generator_for
from .synthesis import PiecewisePolicy


@dataclass(frozen=True)
class SimConfig:
    paths: int
    seed: int
    bound: Fraction

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("need at least one path")


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float  # 3-sigma binomial half width
    paths: int

    def to_json(self) -> dict:
        return {"mean": self.mean, "half_width": self.half_width, "paths": self.paths}


def uniformize(gen: GeneratorMatrix, good: int, bound, tol: float = 1e-12) -> np.ndarray:
    """Reach-by-bound probabilities of the CTMC via Poisson-weighted jumps.

    Truncates the uniformized power series once the Poisson tail mass drops
    below tol, which bounds the absolute error by tol per state.
    """
    bound_f = float(bound)
    n = gen.size
    v = np.zeros(n)
    v[good - 1] = 1.0
    if bound_f == 0.0:
        return v
    q = max(float(-gen.entry(s, s)) for s in range(1, n + 1))
    if q == 0.0:
        return v
    arr = gen.as_array()
    p = np.eye(n) + arr / q
    lam = q * bound_f
    kmax = int(poisson.ppf(1.0 - tol, lam)) + 1
    weights = poisson.pmf(np.arange(kmax + 1), lam)
    acc = np.zeros(n)
    term = v.copy()
    for k in range(kmax + 1):
        acc += weights[k] * term
        term = p @ term
    return acc


def best_stationary(model: Ctmdp, bound, tol: float = 1e-12,
                    guard: int = 10**6) -> tuple[DecisionVector, np.ndarray]:
    """Component-wise best value over all stationary policies.

    Returns the max value vector together with the lexicographically first
    decision vector attaining it everywhere; if the maxima of different
    states are attained by different vectors only, the first vector with the
    largest value sum is returned instead.
    """
    if model.num_decision_vectors() > guard:
        raise TooManyVectorsError(
            f"{model.num_decision_vectors()} stationary policies exceed the "
            f"enumeration guard {guard}"
        )
    best = None
    for d in model.decision_vectors():
        v = uniformize(generator_for(model, d), model.good, bound, tol)
        best = v if best is None else np.maximum(best, v)
    attainer = None
    fallback = None
    fallback_sum = -1.0
    for d in model.decision_vectors():
        v = uniformize(generator_for(model, d), model.good, bound, tol)
        if attainer is None and bool(np.all(v >= best - 1e-12)):
            attainer = d
        s = float(v.sum())
        if s > fallback_sum + 1e-15:
            fallback, fallback_sum = d, s
    return (attainer if attainer is not None else fallback), best


def _forward_segments(model: Ctmdp, policy: PiecewisePolicy):
    """Per forward-time segment: (end time, exit rates, cumulative jumps)."""
    bound_f = float(policy.bound)
    n = model.num_states
    out = []
    for lo, hi, d in reversed(policy.segments()):
        arr = generator_for(model, d).as_array()
        rates = -np.diag(arr).copy()
        jump = np.where(rates[:, None] > 0.0, arr / np.maximum(rates[:, None], 1e-300), 0.0)
        np.fill_diagonal(jump, 0.0)
        cum = np.cumsum(jump, axis=1)
        norm = cum[:, -1].copy()
        norm[norm == 0.0] = 1.0
        cum /= norm[:, None]
        out.append((bound_f - float(lo), rates, cum))
    return out


def simulate(model: Ctmdp, policy: PiecewisePolicy, start: int, cfg: SimConfig) -> Estimate:
    """Monte-Carlo estimate of reaching the target from ``start`` by the bound.

    Paths are advanced in vectorized rounds; sojourns are exponential with
    the exit rate of the decision vector active at the current forward time,
    and a policy switch mid-sojourn re-samples the remainder (memoryless).
    The counter-based Philox generator keyed by the seed makes runs bit
    reproducible for a fixed (seed, paths) pair.
    """
    if start == model.good:
        return Estimate(1.0, 0.0, cfg.paths)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg.seed)))
    n = model.num_states
    state = np.full(cfg.paths, start - 1, dtype=np.int64)
    t = np.zeros(cfg.paths)
    for t_end, rates, cum in _forward_segments(model, policy):
        while True:
            r = rates[state]
            active = np.flatnonzero((t < t_end) & (r > 0.0))
            if active.size == 0:
                break
            dt = rng.exponential(1.0, size=active.size) / r[active]
            tn = t[active] + dt
            jumped = tn < t_end
            t[active] = np.minimum(tn, t_end)
            ja = active[jumped]
            if ja.size:
                u = rng.random(ja.size)
                rowcum = cum[state[ja]]
                nxt = (u[:, None] >= rowcum).sum(axis=1)
                state[ja] = np.minimum(nxt, n - 1)
        t[:] = t_end
    hits = int(np.count_nonzero(state == model.good - 1))
    mean = hits / cfg.paths
    half = 3.0 * math.sqrt(max(mean * (1.0 - mean), 0.0) / cfg.paths)
    return Estimate(mean=mean, half_width=half, paths=cfg.paths)
