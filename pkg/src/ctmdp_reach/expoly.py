"""Observables of linear ODE systems and certified zero isolation.

A :class:`LinearObservable` is the scalar function z(t) = c . e^{At} . x0.
Every such function is an exponential polynomial: real analytic, finitely
many zeros on a bounded interval, and each zero has a finite contact order
k0 (the first derivative order that does not vanish there).  Zeros with odd
contact order flip the sign of z (non-tangential); zeros with even contact
order preserve it (tangential).

Zero isolation works on closed sub-intervals by exclusion.  A piece
[m-h, m+h] provably contains no common zero of the derivatives z^(j),
j in some order set, if for at least one j the Taylor envelope

    |z^(j)(m)|  -  sum_{i=1..K} |z^(j+i)(m)| h^i / i!  -  tail(h)  -  noise

is positive, where tail(h) bounds the truncated Taylor remainder through
submultiplicative norm bounds on c, A, x0, and noise covers double-precision
evaluation error.  Pieces that cannot be certified are bisected down to a
width floor; the surviving "gaps" are the only places zeros can live.  When
the observable carries exact rational data, two strengthenings kick in:

 * at t = 0 the derivative values c A^k x0 are exact rationals, so zeros of
   known finite order sitting exactly at an interval endpoint are excluded
   by a factored envelope instead of endless subdivision;
 * pieces whose values sit below the double-precision noise floor are
   re-evaluated in arbitrary precision (mpmath), which certifies observables
   that decay far below 1e-16 without giving up.

All interval endpoints are exact rationals (dyadic subdivision), so returned
brackets are exact and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import (
    BudgetExceededError,
    IdenticallyZeroError,
    IllConditionedError,
    OrderCapExceededError,
)
from .rationals import QMatrix, QVector, qmat, qvec, to_float_matrix, to_float_vector

# Tolerance and budget knobs.  EVAL_EPS bounds the error of one
# double-precision evaluation c . e^{At} . x0 relative to ||c|| * ||e^{At}x0||
# (matrix exponential plus dot product); calibrated against
# arbitrary-precision references, which sit near 1e-17 for generator
# semigroups and 1e-15 for general dense systems of this size.  Values within
# NOISE_FACTOR * EVAL_EPS of zero are treated as unresolvable in doubles and,
# when exact data exists, re-checked in mpmath.
EVAL_EPS = 5e-14
NOISE_FACTOR = 20.0
TAYLOR_TERMS = 12
DELTA_FACTOR = Fraction(1, 10**8)
DEPTH_CAP = 64
PIECE_BUDGET = 60_000
MP_BUDGET = 800
MP_DPS = 40
MP_EPS = 1e-30

_FACT = [math.factorial(i) for i in range(64)]


class ZeroKind(Enum):
    NONTANGENTIAL = "non-tangential"
    TANGENTIAL = "tangential"


@dataclass(frozen=True)
class ZeroBracket:
    """Certified interval (lo, hi) holding exactly one zero of an observable."""

    lo: Fraction
    hi: Fraction
    contact_order: int
    kind: ZeroKind

    @property
    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def to_json(self) -> dict:
        return {
            "lo": {"num": self.lo.numerator, "den": self.lo.denominator},
            "hi": {"num": self.hi.numerator, "den": self.hi.denominator},
            "contact_order": self.contact_order,
            "kind": self.kind.value,
        }


class LinearObservable:
    """z(t) = c . e^{At} . x0 with optional exact rational source data."""

    def __init__(self, a, x0, c, exact: tuple[QMatrix, QVector, QVector] | None = None):
        self.a = np.asarray(a, dtype=np.float64)
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.c = np.asarray(c, dtype=np.float64)
        m = self.a.shape[0]
        if self.a.shape != (m, m) or self.x0.shape != (m,) or self.c.shape != (m,):
            raise ValueError("inconsistent observable dimensions")
        self.exact = exact
        self._calc: _Calc | None = None

    @classmethod
    def from_rational(cls, a_rows, x0, c) -> "LinearObservable":
        ea, ex, ec = qmat(a_rows), qvec(x0), qvec(c)
        return cls(to_float_matrix(ea), to_float_vector(ex), to_float_vector(ec),
                   exact=(ea, ex, ec))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def calc(self) -> "_Calc":
        if self._calc is None:
            self._calc = _Calc(self)
        return self._calc

    def __repr__(self) -> str:
        return f"LinearObservable(dim={self.dim}, exact={self.exact is not None})"


def evaluate(obs: LinearObservable, t) -> float:
    """Value of the observable at time t (dense matrix exponential)."""
    tf = float(t)
    if tf == 0.0:
        return float(obs.c @ obs.x0)
    return float(obs.c @ (expm(obs.a * tf) @ obs.x0))


def derivative(obs: LinearObservable, k: int) -> LinearObservable:
    """k-th derivative as an observable of the same system: (A, x0, c A^k)."""
    if k < 0:
        raise ValueError("derivative order must be >= 0")
    if k == 0:
        return obs
    c = obs.c.copy()
    for _ in range(k):
        c = c @ obs.a
    exact = None
    if obs.exact is not None:
        ea, ex, ec = obs.exact
        row = ec
        for _ in range(k):
            row = tuple(
                sum((row[i] * ea[i][j] for i in range(len(row))), Fraction(0))
                for j in range(len(row))
            )
        exact = (ea, ex, row)
    return LinearObservable(obs.a, obs.x0, c, exact=exact)


def is_identically_zero(obs: LinearObservable) -> bool:
    """True iff c A^k x0 = 0 for k = 0..dim-1 (Cayley-Hamilton closure).

    Exact rational arithmetic when the observable carries exact data,
    otherwise a scale-relative tolerance of 1e-12.
    """
    m = obs.dim
    if obs.exact is not None:
        ea, ex, ec = obs.exact
        row = ec
        for _ in range(m):
            if sum((row[i] * ex[i] for i in range(m)), Fraction(0)) != 0:
                return False
            row = tuple(
                sum((row[i] * ea[i][j] for i in range(m)), Fraction(0))
                for j in range(m)
            )
        return True
    xnorm = float(np.linalg.norm(obs.x0))
    row = obs.c.copy()
    for _ in range(m):
        scale = float(np.linalg.norm(row)) * xnorm
        if abs(float(row @ obs.x0)) > 1e-12 * max(scale, 1e-300):
            return False
        row = row @ obs.a
    return True


# ---------------------------------------------------------------------------
# Numeric engine
# ---------------------------------------------------------------------------


class _Calc:
    """Derivative rows, cached semigroup states, and exact/mp escalation."""

    def __init__(self, obs: LinearObservable):
        self.obs = obs
        self.anorm = float(np.linalg.norm(obs.a, 2))
        self._rows: list[np.ndarray] = [obs.c.astype(np.float64)]
        self._row_norms: list[float] = [float(np.linalg.norm(obs.c))]
        self._states: dict[Fraction, tuple[np.ndarray, float]] = {}
        self._exact_moments: list[Fraction] | None = None
        self._mp = None  # lazy (ctx, A, x0, rows, states)

    @property
    def has_exact(self) -> bool:
        return self.obs.exact is not None

    def _ensure_rows(self, jmax: int) -> None:
        while len(self._rows) <= jmax:
            r = self._rows[-1] @ self.obs.a
            self._rows.append(r)
            self._row_norms.append(float(np.linalg.norm(r)))

    def row_norm(self, j: int) -> float:
        self._ensure_rows(j)
        return self._row_norms[j]

    def state(self, t: Fraction) -> tuple[np.ndarray, float]:
        hit = self._states.get(t)
        if hit is None:
            tf = float(t)
            x = self.obs.x0 if tf == 0.0 else expm(self.obs.a * tf) @ self.obs.x0
            hit = (x, float(np.linalg.norm(x)))
            self._states[t] = hit
        return hit

    def values(self, t: Fraction, jmax: int) -> tuple[np.ndarray, float]:
        """Derivative values z^(j)(t) for j = 0..jmax, plus ||e^{At}x0||."""
        self._ensure_rows(jmax)
        x, xn = self.state(t)
        vals = np.array([float(self._rows[j] @ x) for j in range(jmax + 1)])
        return vals, xn

    # -- exact moments at t = 0 ---------------------------------------------

    def exact_moment(self, i: int) -> Fraction:
        """c A^i x0 as an exact rational (requires exact data)."""
        ea, ex, ec = self.obs.exact  # type: ignore[misc]
        if self._exact_moments is None:
            self._exact_moments = []
            self._exact_row = ec
        while len(self._exact_moments) <= i:
            row = self._exact_row
            self._exact_moments.append(
                sum((row[k] * ex[k] for k in range(len(ex))), Fraction(0))
            )
            self._exact_row = tuple(
                sum((row[k] * ea[k][j] for k in range(len(row))), Fraction(0))
                for j in range(len(row))
            )
        return self._exact_moments[i]

    # -- arbitrary-precision escalation --------------------------------------

    def _mp_setup(self):
        if self._mp is None:
            import mpmath

            ctx = mpmath.mp.clone()
            ctx.dps = MP_DPS
            ea, ex, ec = self.obs.exact  # type: ignore[misc]
            m = len(ex)

            def f(q: Fraction):
                return ctx.mpf(q.numerator) / ctx.mpf(q.denominator)

            A = ctx.matrix([[f(ea[i][j]) for j in range(m)] for i in range(m)])
            x0 = ctx.matrix([f(ex[i]) for i in range(m)])
            rows = [[f(ec[i]) for i in range(m)]]
            self._mp = {"ctx": ctx, "A": A, "x0": x0, "rows": rows, "states": {}}
        return self._mp

    def _mp_rows(self, jmax: int):
        mp = self._mp_setup()
        ctx, A, rows = mp["ctx"], mp["A"], mp["rows"]
        m = A.rows
        while len(rows) <= jmax:
            r = rows[-1]
            rows.append([sum(r[i] * A[i, j] for i in range(m)) for j in range(m)])
        return rows

    def _mp_state(self, t: Fraction):
        """e^{At} x0 by Taylor hops from the nearest cached earlier state."""
        mp = self._mp_setup()
        states = mp["states"]
        hit = states.get(t)
        if hit is not None:
            return hit
        ctx, A, x0 = mp["ctx"], mp["A"], mp["x0"]
        base_t = Fraction(0)
        base_x = x0
        for tk in states:
            if Fraction(0) <= tk <= t and tk > base_t:
                base_t, base_x = tk, states[tk]
        step_max = Fraction(2) / Fraction(max(self.anorm, 1.0)).limit_denominator(10**6)
        cur_t, cur_x = base_t, base_x
        while cur_t < t:
            nxt = min(t, cur_t + step_max)
            dt = ctx.mpf((nxt - cur_t).numerator) / ctx.mpf((nxt - cur_t).denominator)
            acc = cur_x.copy()
            w = cur_x.copy()
            tol = ctx.mpf(10) ** (-(MP_DPS + 8))
            for k in range(1, 400):
                w = (A * w) * (dt / k)
                acc = acc + w
                if ctx.norm(w) <= tol * (ctx.norm(acc) + tol):
                    break
            cur_t, cur_x = nxt, acc
            states[cur_t] = cur_x
        return cur_x

    def mp_values(self, t: Fraction, jmax: int):
        mp = self._mp_setup()
        rows = self._mp_rows(jmax)
        x = self._mp_state(t)
        m = mp["A"].rows
        vals = [sum(rows[j][i] * x[i] for i in range(m)) for j in range(jmax + 1)]
        xn = float(mp["ctx"].norm(x))
        return vals, xn


class _ScanBudget:
    def __init__(self, pieces: int = PIECE_BUDGET, mp: int = MP_BUDGET):
        self.pieces = pieces
        self.mp = mp

    def spend_piece(self, lo: Fraction, hi: Fraction):
        self.pieces -= 1
        if self.pieces < 0:
            raise BudgetExceededError(
                f"subdivision budget exhausted on [{float(lo):g}, {float(hi):g}]"
            )

    def spend_mp(self) -> bool:
        self.mp -= 1
        return self.mp >= 0


def _envelope_ok(d0: float, rest: float, tail: float, allow: float) -> bool:
    return d0 - rest - tail - 2.0 * allow > 0.0


def _certify_piece(calc: _Calc, orders: Sequence[int], m: Fraction, h: float,
                   budget: _ScanBudget) -> bool:
    """Certify that no common zero of the given derivative orders lies in
    [m-h, m+h].  Double precision first, mpmath when noise-limited."""
    K = TAYLOR_TERMS
    jmax = max(orders) + K + 1
    vals, xn = calc.values(m, jmax)
    hp = [h**i / _FACT[i] for i in range(K + 2)]
    growth = math.exp(min(calc.anorm * h, 700.0))
    noise_limited = False
    for j in orders:
        allow = EVAL_EPS * calc.row_norm(j) * xn
        d0 = abs(vals[j])
        rest = sum(abs(vals[j + i]) * hp[i] for i in range(1, K + 1))
        tail = calc.row_norm(j + K + 1) * xn * hp[K + 1] * growth
        if _envelope_ok(d0, rest, tail, allow):
            return True
        if d0 <= NOISE_FACTOR * allow:
            noise_limited = True
    if noise_limited and calc.has_exact and budget.spend_mp():
        mvals, mxn = calc.mp_values(m, jmax)
        for j in orders:
            allow = MP_EPS * calc.row_norm(j) * mxn
            d0 = abs(float(mvals[j]))
            rest = sum(abs(float(mvals[j + i])) * hp[i] for i in range(1, K + 1))
            tail = calc.row_norm(j + K + 1) * mxn * hp[K + 1] * growth
            if _envelope_ok(d0, rest, tail, allow):
                return True
    return False


def _endpoint_clearance(calc: _Calc, orders: Sequence[int], e: Fraction,
                        direction: int, span: Fraction) -> Fraction | None:
    """Certified radius eps such that no common zero of the given derivative
    orders lies strictly between e and e + direction*eps.

    At e = 0 with exact data the derivative values are exact rational moments
    c A^i x0, so a zero of finite order sitting exactly at the endpoint is
    excluded rigorously by factoring out its leading power.  Elsewhere the
    same factoring runs on double values with a noise guard.
    """
    K = TAYLOR_TERMS
    exact_anchor = calc.has_exact and e == 0 and direction > 0
    depth = max(orders) + 2 * K + 4

    if exact_anchor:
        mom = [float(calc.exact_moment(i)) for i in range(depth + 1)]
        zero = [calc.exact_moment(i) == 0 for i in range(depth + 1)]
        xn = calc.state(e)[1]
    else:
        vals, xn = calc.values(e, depth)
        mom = [float(v) for v in vals]
        zero = [
            abs(mom[i]) <= NOISE_FACTOR * EVAL_EPS * calc.row_norm(i) * xn
            for i in range(depth + 1)
        ]

    # Pick the order whose derivative vanishes to the lowest order at e.
    best: tuple[int, int] | None = None  # (q, j)
    for j in orders:
        for i in range(0, depth - j - K):
            if not zero[j + i]:
                if best is None or i < best[0]:
                    best = (i, j)
                break
    if best is None:
        return None
    q, j = best
    lead = abs(mom[j + q]) / _FACT[q]

    # Residual guard for inexact anchors: sub-leading values are noise but not
    # exactly zero, so certification only holds outside a tiny hole.
    hole = Fraction(0)
    if not exact_anchor and q > 0:
        for i in range(q):
            di = abs(mom[j + i])
            if di == 0.0:
                continue
            need = (4.0 * q * di / _FACT[i] / max(lead, 1e-300)) ** (1.0 / (q - i))
            hole = max(hole, Fraction(need).limit_denominator(10**15))
        if hole > span * Fraction(1, 10**12):
            return None
        lead *= 0.75

    h = span
    for _ in range(220):
        hf = float(h)
        rest = sum(
            abs(mom[j + i]) * hf ** (i - q) / _FACT[i] for i in range(q + 1, q + K + 1)
        )
        tail = (
            calc.row_norm(j + q + K + 1)
            * xn
            * hf ** (K + 1)
            / _FACT[K + 1]
            * math.exp(min(calc.anorm * hf, 700.0))
        )
        if lead - rest - tail > 0.0 and h > hole:
            return h
        h = h / 2
    return None


def _scan_gaps(calc: _Calc, orders: Sequence[int], lo: Fraction, hi: Fraction,
               floor: Fraction, budget: _ScanBudget) -> list[tuple[Fraction, Fraction]]:
    """Uncertified sub-intervals of [lo, hi] for the common-zero test.

    Everything outside the returned gaps is certified free of common zeros of
    the given derivative orders.  Gaps of width <= floor are the only places
    a zero can hide; adjacent uncertified pieces are merged.
    """
    if lo >= hi:
        return []
    span = hi - lo
    floor = max(floor, span / (2**DEPTH_CAP))
    jmax = max(orders)

    # Endpoint clearance when the observable is unresolvably small there.
    work_lo, work_hi = lo, hi
    for at, direction in ((lo, +1), (hi, -1)):
        vals, xn = calc.values(at, jmax)
        tiny = all(
            abs(vals[j]) <= NOISE_FACTOR * EVAL_EPS * calc.row_norm(j) * xn
            for j in orders
        )
        if tiny and calc.has_exact and budget.spend_mp():
            # Double precision cannot tell a flat-but-nonzero endpoint from a
            # true endpoint zero; arbitrary precision usually can.
            mvals, mxn = calc.mp_values(at, jmax)
            tiny = all(
                abs(float(mvals[j])) <= NOISE_FACTOR * MP_EPS * calc.row_norm(j) * mxn
                for j in orders
            )
        if tiny:
            eps = _endpoint_clearance(calc, orders, at, direction, span)
            if eps is None:
                raise BudgetExceededError(
                    f"cannot certify an endpoint neighborhood at t={at}"
                )
            if direction > 0:
                work_lo = min(lo + eps, hi)
            else:
                work_hi = max(hi - eps, lo)
    if work_lo >= work_hi:
        return []

    gaps: list[tuple[Fraction, Fraction]] = []
    stack = [(work_lo, work_hi)]
    while stack:
        u, v = stack.pop()
        budget.spend_piece(lo, hi)
        m = (u + v) / 2
        h = float(v - u) / 2.0
        if _certify_piece(calc, orders, m, h, budget):
            continue
        if v - u <= floor:
            if gaps and gaps[-1][1] == u:
                gaps[-1] = (gaps[-1][0], v)
            else:
                gaps.append((u, v))
            continue
        # Left half processed first so gaps come out ordered.
        stack.append((m, v))
        stack.append((u, m))
    return gaps


def _sign_at(calc: _Calc, t: Fraction) -> int:
    vals, xn = calc.values(t, 0)
    allow = NOISE_FACTOR * EVAL_EPS * calc.row_norm(0) * xn
    if abs(vals[0]) > allow:
        return 1 if vals[0] > 0 else -1
    if calc.has_exact:
        mvals, mxn = calc.mp_values(t, 0)
        v = float(mvals[0])
        if abs(v) > NOISE_FACTOR * MP_EPS * calc.row_norm(0) * mxn:
            return 1 if v > 0 else -1
    return 0


def _contact_order(calc: _Calc, lo: Fraction, hi: Fraction, cap: int,
                   floor: Fraction, budget: _ScanBudget) -> int:
    """Smallest k such that derivatives 0..k have no common zero in [lo, hi]."""
    for k in range(cap + 1):
        if not _scan_gaps(calc, range(k + 1), lo, hi, floor, budget):
            return k
    raise OrderCapExceededError(
        f"no derivative order up to {cap} separates the zero in "
        f"[{float(lo):g}, {float(hi):g}]"
    )


def classify_zero(obs: LinearObservable, lo, hi) -> tuple[int, ZeroKind]:
    """Contact order and kind of the unique zero of obs in (lo, hi).

    Returns the smallest k0 such that the derivatives 0..k0 have no common
    zero on the bracket (equivalently, the sum of squared derivatives up to
    order k0 is zero-free there); the zero is non-tangential iff k0 is odd.
    """
    lo, hi = Fraction(lo), Fraction(hi)
    if is_identically_zero(obs):
        raise IdenticallyZeroError("observable is identically zero")
    calc = obs.calc()
    budget = _ScanBudget()
    cap = obs.dim + 2
    floor = (hi - lo) / 4096
    k0 = _contact_order(calc, lo, hi, cap, floor, budget)
    if k0 == 0:
        raise ValueError("bracket contains no zero of the observable")
    kind = ZeroKind.NONTANGENTIAL if k0 % 2 == 1 else ZeroKind.TANGENTIAL
    return k0, kind


def isolate_zeros(obs: LinearObservable, lo, hi, delta=None) -> list[ZeroBracket]:
    """All zeros of obs on the open interval (lo, hi) as certified brackets.

    Each returned bracket has width <= delta, contains exactly one zero, and
    carries the zero's contact order and tangential/non-tangential kind.
    Zeros exactly at lo or hi are excluded (open-interval semantics).
    """
    lo, hi = Fraction(lo), Fraction(hi)
    if lo >= hi:
        raise ValueError("need lo < hi")
    if is_identically_zero(obs):
        raise IdenticallyZeroError("observable is identically zero")
    delta = (hi - lo) * DELTA_FACTOR if delta is None else Fraction(delta)
    calc = obs.calc()
    budget = _ScanBudget()
    cap = obs.dim + 2

    gaps = _scan_gaps(calc, (0,), lo, hi, delta / 8, budget)
    brackets: list[ZeroBracket] = []
    for idx, (glo, ghi) in enumerate(gaps):
        margin = delta / 8
        blo = max(glo - margin, lo + (glo - lo) / 2)
        bhi = min(ghi + margin, hi - (hi - ghi) / 2)
        if idx > 0:
            blo = max(blo, (gaps[idx - 1][1] + glo) / 2)
        if idx + 1 < len(gaps):
            bhi = min(bhi, (ghi + gaps[idx + 1][0]) / 2)
        if bhi - blo > delta:
            # Flat contact region wider than requested: refine this gap.
            sub = _scan_gaps(calc, (0,), blo, bhi, delta / 64, budget)
            if len(sub) != 1 or sub[0][1] - sub[0][0] > delta * Fraction(3, 4):
                raise BudgetExceededError(
                    f"cannot refine zero near t={float((glo + ghi) / 2):g} "
                    f"to width {float(delta):g}"
                )
            blo = max(blo, sub[0][0] - delta / 8)
            bhi = min(bhi, sub[0][1] + delta / 8)

        try:
            k0 = _contact_order(calc, blo, bhi, cap, (bhi - blo) / 4096, budget)
        except OrderCapExceededError as exc:
            raise BudgetExceededError(str(exc)) from exc
        if k0 == 0:
            continue  # refinement revealed the gap was spurious
        # The k0-th derivative must be sign-constant across the bracket.
        if _scan_gaps(calc, (k0,), blo, bhi, (bhi - blo) / 4096, budget):
            raise BudgetExceededError(
                f"order-{k0} derivative is not sign-constant near "
                f"t={float((blo + bhi) / 2):g}"
            )
        kind = ZeroKind.NONTANGENTIAL if k0 % 2 == 1 else ZeroKind.TANGENTIAL
        s_lo, s_hi = _sign_at(calc, blo), _sign_at(calc, bhi)
        if s_lo == 0 or s_hi == 0:
            raise BudgetExceededError(
                f"cannot resolve the sign of the observable at a bracket "
                f"endpoint near t={float((blo + bhi) / 2):g}"
            )
        if kind is ZeroKind.NONTANGENTIAL and s_lo * s_hi >= 0:
            raise BudgetExceededError(
                f"sign pattern contradicts odd contact order near "
                f"t={float((blo + bhi) / 2):g}"
            )
        if kind is ZeroKind.TANGENTIAL and s_lo * s_hi <= 0:
            raise BudgetExceededError(
                f"sign pattern contradicts even contact order near "
                f"t={float((blo + bhi) / 2):g}"
            )
        brackets.append(ZeroBracket(blo, bhi, k0, kind))
    return brackets


# ---------------------------------------------------------------------------
# Closed form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosedFormTerm:
    """e^{a t} * sum_l coeff[l] * t^l * cos(b t + phase[l])."""

    a: float
    b: float
    coefficients: tuple[tuple[float, float], ...]  # (amplitude, phase) per power

    def evaluate(self, t: float) -> float:
        out = 0.0
        for l, (amp, phase) in enumerate(self.coefficients):
            out += amp * t**l * math.cos(self.b * t + phase)
        return out * math.exp(self.a * t)

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "coefficients": [
                {"power": l, "amplitude": amp, "phase": phase}
                for l, (amp, phase) in enumerate(self.coefficients)
            ],
        }


@dataclass(frozen=True)
class ExpPolyClosedForm:
    terms: tuple[ClosedFormTerm, ...]

    def evaluate(self, t: float) -> float:
        return sum(term.evaluate(t) for term in self.terms)

    def to_json(self) -> dict:
        return {"terms": [term.to_json() for term in self.terms]}


def closed_form(obs: LinearObservable, t_max: float = 10.0, samples: int = 400,
                rel_tol: float = 1e-9) -> ExpPolyClosedForm:
    """Real exponential-polynomial form of the observable.

    Eigenvalues of A are clustered into conjugate pairs a +/- i b with
    multiplicities; amplitudes and phases are fitted by least squares against
    matrix-exponential samples on [0, t_max] and the reconstruction is
    required to match within rel_tol (relative to the sample scale).
    Advisory representation: certified decisions always use (A, x0, c).
    """
    m = obs.dim
    eigs = np.linalg.eigvals(obs.a)
    scale = max(1.0, float(np.max(np.abs(eigs))) if m else 1.0)
    tol = 1e-6 * scale

    # Cluster eigenvalues with b >= 0 by proximity; conjugates map onto the
    # same representative, and each pair contributes once.
    clusters: list[list[complex]] = []
    for lam in eigs:
        if lam.imag < -tol:
            continue
        b = 0.0 if abs(lam.imag) <= tol else lam.imag
        z = complex(lam.real, b)
        for cl in clusters:
            if abs(cl[0] - z) <= 2 * tol:
                cl.append(z)
                break
        else:
            clusters.append([z])

    grid = np.linspace(0.0, t_max, samples)
    step = expm(obs.a * (grid[1] - grid[0]))
    x = obs.x0.copy()
    target = np.empty(samples)
    for i in range(samples):
        target[i] = float(obs.c @ x)
        x = step @ x

    columns = []
    meta = []  # (cluster index, power l, "cos"|"sin"|"real")
    for ci, cl in enumerate(clusters):
        a = float(np.mean([z.real for z in cl]))
        b = float(np.mean([z.imag for z in cl]))
        mult = len(cl)
        decay = np.exp(np.clip(a * grid, -700, 700))
        for l in range(mult):
            tl = grid**l * decay
            if b <= tol:
                columns.append(tl)
                meta.append((ci, l, "real"))
            else:
                columns.append(tl * np.cos(b * grid))
                meta.append((ci, l, "cos"))
                columns.append(tl * np.sin(b * grid))
                meta.append((ci, l, "sin"))

    design = np.column_stack(columns) if columns else np.zeros((samples, 0))
    col_scale = np.maximum(np.max(np.abs(design), axis=0), 1e-300)
    coeffs, *_ = np.linalg.lstsq(design / col_scale, target, rcond=None)
    coeffs = coeffs / col_scale

    fit = design @ coeffs
    denom = max(float(np.max(np.abs(target))), 1e-300)
    err = float(np.max(np.abs(fit - target))) / denom
    if err > rel_tol:
        raise IllConditionedError(
            f"closed-form reconstruction error {err:.3e} exceeds {rel_tol:.1e}"
        )

    terms = []
    for ci, cl in enumerate(clusters):
        a = float(np.mean([z.real for z in cl]))
        b = float(np.mean([z.imag for z in cl]))
        mult = len(cl)
        pairs = []
        for l in range(mult):
            p = q = 0.0
            for k, (cj, cl_l, kind) in enumerate(meta):
                if cj != ci or cl_l != l:
                    continue
                if kind in ("real", "cos"):
                    p = float(coeffs[k])
                else:
                    q = float(coeffs[k])
            if b <= tol:
                pairs.append((p, 0.0))
            else:
                pairs.append((math.hypot(p, q), math.atan2(-q, p)))
        terms.append(ClosedFormTerm(a=a, b=0.0 if b <= tol else b,
                                    coefficients=tuple(pairs)))
    return ExpPolyClosedForm(terms=tuple(terms))
