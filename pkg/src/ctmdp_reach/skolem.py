"""Embedding bounded zero detection for linear ODEs into CTMDP stationarity.

A bounded continuous Skolem instance asks whether the solution z of a linear
ODE with rational data has a sign-changing (non-tangential) zero in (0, B).
This module rewrites z as a companion-form observable and embeds it, through
a chain of exact rational transformations, into a CTMDP with two actions at
state 1 whose optimal policy switches if and only if such a zero exists:

  1. lift to y = t * z, which shares its zeros on (0, B) and starts at 0;
  2. shift the companion matrix diagonal to force a negative (1,1) entry;
  3. split signs: every entry a becomes the 2x2 block [[a+, a-], [a-, a+]],
     producing a non-negative matrix with the same observable values;
  4. subtract a row-dominant multiple of the identity and append an
     absorbing column, yielding a sub-stochastic matrix P;
  5. pad with a slack column and two absorbing states (sink and target) to
     obtain a true generator Q^a, and perturb the rate from state 1 to
     state 2 by r to obtain Q^b.

The sign of r is matched to the first nonzero moment of the embedded
observable so that action a is optimal at horizon zero.  All constructions
are exact rationals end to end; floating point enters only in verification
and downstream synthesis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    AllMomentsZeroError,
    DegenerateGammaError,
    TrivialInstanceError,
)
from .expoly import MP_DPS, LinearObservable
from .model import Ctmdp, RateKey
from .rationals import (
    QMatrix,
    QVector,
    mat_vec,
    parse_rational,
    qmat,
    qvec,
    rational_to_json,
)


@dataclass(frozen=True)
class SkolemInstance:
    """ODE z^(n) + a_{n-1} z^(n-1) + ... + a_0 z = 0 with initial data and bound.

    ``coefficients`` stores [a_{n-1}, ..., a_0]; ``initial`` stores
    z(0), z'(0), ..., z^(n-1)(0).
    """

    coefficients: QVector
    initial: QVector
    bound: Fraction

    def __post_init__(self):
        if len(self.coefficients) != len(self.initial):
            raise ValueError("need as many initial conditions as coefficients")
        if not self.coefficients:
            raise ValueError("order must be at least one")
        if self.bound <= 0:
            raise ValueError("bound must be positive")

    @property
    def order(self) -> int:
        return len(self.coefficients)

    def to_json(self) -> dict:
        return {
            "coefficients": [rational_to_json(a) for a in self.coefficients],
            "initial": [rational_to_json(z) for z in self.initial],
            "bound": rational_to_json(self.bound),
        }


def instance_from_json(doc: dict) -> SkolemInstance:
    return SkolemInstance(
        coefficients=qvec(parse_rational(a) for a in doc["coefficients"]),
        initial=qvec(parse_rational(z) for z in doc["initial"]),
        bound=parse_rational(doc["bound"]),
    )


def load_instance(path: str) -> SkolemInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_json(json.load(fh))


def companion_matrix(inst: SkolemInstance) -> QMatrix:
    n = inst.order
    rows = []
    for i in range(n - 1):
        rows.append(tuple(Fraction(1 if j == i + 1 else 0) for j in range(n)))
    # coefficients are stored highest first; the companion row wants a_0 first
    ascending = tuple(reversed(inst.coefficients))
    rows.append(tuple(-a for a in ascending))
    return tuple(rows)


def companion_form(inst: SkolemInstance) -> LinearObservable:
    """z as the observable c e^{At} x0 of the companion-form system."""
    n = inst.order
    c = tuple(Fraction(1 if j == 0 else 0) for j in range(n))
    return LinearObservable.from_rational(companion_matrix(inst), inst.initial, c)


def normalize_initial(inst: SkolemInstance) -> SkolemInstance:
    """Equivalent instance of doubled order whose solution is y = t * z.

    y vanishes at 0 and has the same zeros as z on (0, B) with the same
    sign-change character (the extra factor t is positive there).  The new
    characteristic polynomial is the square of the old one; the new initial
    derivatives are y^(k)(0) = k * z^(k-1)(0), with z's derivatives beyond
    order n-1 extended through the ODE recurrence.
    """
    n = inst.order
    # Square the monic characteristic polynomial (descending coefficients).
    poly = [Fraction(1), *inst.coefficients]
    sq = [Fraction(0)] * (2 * n + 1)
    for i, pi in enumerate(poly):
        for j, pj in enumerate(poly):
            sq[i + j] += pi * pj
    new_coeffs = tuple(sq[1:])  # drop the leading 1; stays highest-first

    # Extend z's derivatives at 0 through z^(n+k) = -sum a_i z^(i+k).
    ascending = tuple(reversed(inst.coefficients))  # a_0 .. a_{n-1}
    z0 = list(inst.initial)
    for k in range(1, n):
        z0.append(-sum((ascending[i] * z0[i + k - 1] for i in range(n)), Fraction(0)))

    y0 = [Fraction(0)]
    for k in range(1, 2 * n):
        y0.append(k * z0[k - 1])
    return SkolemInstance(
        coefficients=new_coeffs, initial=tuple(y0), bound=inst.bound
    )


def shift_diagonal(a_rows: QMatrix) -> tuple[QMatrix, Fraction]:
    """(A - lam0 I, lam0) with lam0 = max(0, A_11 + 1), forcing A_11 < 0."""
    lam0 = max(Fraction(0), a_rows[0][0] + 1)
    if lam0 == 0:
        return a_rows, lam0
    n = len(a_rows)
    shifted = tuple(
        tuple(a_rows[i][j] - (lam0 if i == j else 0) for j in range(n))
        for i in range(n)
    )
    return shifted, lam0


def sign_split_matrix(a_rows: QMatrix) -> QMatrix:
    """Replace each entry a by [[a+, a-], [a-, a+]]; the result is entrywise
    non-negative and reproduces observable values on sign-split vectors."""
    n = len(a_rows)
    out = [[Fraction(0)] * (2 * n) for _ in range(2 * n)]
    for i in range(n):
        for j in range(n):
            a = a_rows[i][j]
            pos = a if a > 0 else Fraction(0)
            neg = -a if a < 0 else Fraction(0)
            out[2 * i][2 * j] = pos
            out[2 * i][2 * j + 1] = neg
            out[2 * i + 1][2 * j] = neg
            out[2 * i + 1][2 * j + 1] = pos
    return tuple(tuple(row) for row in out)


def sign_split_vector(x: QVector) -> QVector:
    out = []
    for v in x:
        out.extend((v, Fraction(0)))
    return tuple(out)


def build_substochastic(a_rows: QMatrix, x0: QVector) -> tuple[QMatrix, Fraction, Fraction]:
    """Sub-stochastic matrix P with C' e^{Pt} Y0 = C e^{At} x0 / (gamma e^{lam t}).

    Requires x0[0] = 0 and A_11 < 0.  Returns (P, gamma, lam) where P is
    (2m+1) x (2m+1), its last column absorbs the scaled image of the initial
    vector, and every row sum is certified <= 0 in exact arithmetic.
    """
    m = len(a_rows)
    if x0[0] != 0:
        raise ValueError("first initial condition must be zero (normalize first)")
    if a_rows[0][0] >= 0:
        raise ValueError("entry (1,1) must be negative (shift first)")
    lam = max(sum(abs(x) for x in row) for row in a_rows) + 1
    split = sign_split_matrix(a_rows)
    p2 = tuple(
        tuple(split[i][j] - (lam if i == j else 0) for j in range(2 * m))
        for i in range(2 * m)
    )
    y2 = sign_split_vector(x0)
    py = mat_vec(p2, y2)
    beta = [Fraction(0)] * (2 * m)
    for i in range(m):
        b = max(Fraction(0), -py[2 * i], -py[2 * i + 1])
        beta[2 * i] = beta[2 * i + 1] = b
    slack = [py[i] + beta[i] for i in range(2 * m)]
    gamma = max(slack)
    if gamma == 0:
        raise DegenerateGammaError(
            "embedded observable is identically zero (gamma = 0)"
        )
    last_col = [s / gamma for s in slack]
    rows = []
    for i in range(2 * m):
        rows.append(tuple(p2[i]) + (last_col[i],))
    rows.append(tuple(Fraction(0) for _ in range(2 * m + 1)))
    p = tuple(rows)
    for i, row in enumerate(p):
        if sum(row, Fraction(0)) > 0:
            raise AssertionError(f"row {i + 1} of P is not sub-stochastic")
    return p, gamma, lam


def _moment_sign(qa: QMatrix) -> int:
    """Sign of the first nonzero element of Cbar [Q^a]^k Ybar0, k = 0, 1, ...

    The scan is capped at the matrix dimension: beyond it the iterates are
    linear combinations of earlier ones, so a fresh nonzero cannot appear.
    """
    size = len(qa)
    v = [Fraction(0)] * size
    v[-1] = Fraction(1)  # target indicator
    for _ in range(size + 1):
        moment = v[0] - v[1]
        if moment != 0:
            return 1 if moment > 0 else -1
        v = list(mat_vec(qa, v))
    raise AllMomentsZeroError("every moment of the embedded observable is zero")


def build_generators(p: QMatrix) -> tuple[QMatrix, QMatrix, Fraction]:
    """Generators (Q^a, Q^b) and the perturbation r from the sub-stochastic P.

    A slack column into a fresh absorbing sink turns each row sum exactly
    zero; the final absorbing state is the target.  Q^b differs from Q^a
    only in the (1,1) and (1,2) entries, by -r and +r; the sign of r equals
    the sign of the first nonzero moment, which makes action a optimal at
    horizon zero, and its magnitude keeps the perturbed rate non-negative.
    """
    inner = len(p) - 1  # p is (2m+1) square with a zero last row
    size = inner + 2
    rows = []
    for i in range(inner):
        slack = -sum(p[i], Fraction(0))
        if slack < 0:
            raise AssertionError(f"negative slack in row {i + 1}")
        rows.append(tuple(p[i][:inner]) + (slack, p[i][inner]))
    rows.append(tuple(Fraction(0) for _ in range(size)))
    rows.append(tuple(Fraction(0) for _ in range(size)))
    qa = tuple(rows)

    sign = _moment_sign(qa)
    base = qa[0][1]
    if base <= 0:
        raise AssertionError("rate from state 1 to state 2 must be positive")
    r = min(Fraction(1), base) if sign > 0 else -base / 2

    qb_rows = [list(row) for row in qa]
    qb_rows[0][0] -= r
    qb_rows[0][1] += r
    qb = tuple(tuple(row) for row in qb_rows)
    return qa, qb, r


@dataclass(frozen=True)
class ReductionOutput:
    """CTMDP embedding of one instance, with full provenance for audit."""

    model: Ctmdp
    gamma: Fraction
    lam: Fraction
    lam0: Fraction
    r_perturb: Fraction
    normalized: SkolemInstance
    companion: QMatrix
    shifted: QMatrix
    p: QMatrix
    qa: QMatrix
    qb: QMatrix

    @property
    def total_shift(self) -> Fraction:
        return self.lam + self.lam0

    def cbar(self) -> QVector:
        n = len(self.qa)
        return tuple(Fraction(1 if i == 0 else (-1 if i == 1 else 0)) for i in range(n))

    def ybar0(self) -> QVector:
        n = len(self.qa)
        return tuple(Fraction(1 if i == n - 1 else 0) for i in range(n))

    def embedded_observable(self) -> LinearObservable:
        return LinearObservable.from_rational(self.qa, self.ybar0(), self.cbar())

    def to_json(self) -> dict:
        from .model import model_to_json

        def mat(mx: QMatrix):
            return [[rational_to_json(x) for x in row] for row in mx]

        return {
            "model": model_to_json(self.model),
            "gamma": rational_to_json(self.gamma),
            "lambda": rational_to_json(self.lam),
            "lambda0": rational_to_json(self.lam0),
            "r_perturb": rational_to_json(self.r_perturb),
            "normalized_instance": self.normalized.to_json(),
            "companion": mat(self.companion),
            "shifted": mat(self.shifted),
            "p": mat(self.p),
            "qa": mat(self.qa),
            "qb": mat(self.qb),
        }


def _model_from_generators(qa: QMatrix, qb: QMatrix) -> Ctmdp:
    size = len(qa)
    actions = tuple(
        ("a", "b") if s == 1 else ("a",) for s in range(1, size + 1)
    )
    rates: dict[RateKey, Fraction] = {}
    for s in range(1, size + 1):
        for t in range(1, size + 1):
            if s == t:
                continue
            q = qa[s - 1][t - 1]
            if q != 0:
                rates[(s, 0, t)] = q
            if s == 1:
                qbv = qb[0][t - 1]
                if qbv != 0:
                    rates[(1, 1, t)] = qbv
    return Ctmdp(actions=actions, rates=rates, good=size, bad=size - 1)


def reduce(inst: SkolemInstance) -> ReductionOutput:
    """Full pipeline from an instance to its CTMDP embedding.

    Raises TrivialInstanceError when the solution is identically zero, in
    which case there is nothing to embed.
    """
    normalized = normalize_initial(inst)
    companion = companion_matrix(normalized)
    shifted, lam0 = shift_diagonal(companion)
    try:
        p, gamma, lam = build_substochastic(shifted, normalized.initial)
        qa, qb, r = build_generators(p)
    except (DegenerateGammaError, AllMomentsZeroError) as exc:
        raise TrivialInstanceError(str(exc)) from exc
    model = _model_from_generators(qa, qb)
    return ReductionOutput(
        model=model,
        gamma=gamma,
        lam=lam,
        lam0=lam0,
        r_perturb=r,
        normalized=normalized,
        companion=companion,
        shifted=shifted,
        p=p,
        qa=qa,
        qb=qb,
    )


def verify_identity(inst: SkolemInstance, out: ReductionOutput,
                    samples: int = 100) -> float:
    """Max relative deviation between the lifted observable and its embedding.

    Checks c e^{At} x0 = gamma e^{(lam+lam0) t} Cbar e^{Q^a t} Ybar0 at
    equally spaced sample times in [0, B].  Both sides are evaluated in
    arbitrary precision from the exact rational data, so the reported error
    measures the construction itself rather than double-precision roundoff;
    relative deviations are floored at 1e-14 absolute scale.
    """
    import mpmath

    ctx = mpmath.mp.clone()
    ctx.dps = MP_DPS

    n = out.normalized.order
    c = tuple(Fraction(1 if j == 0 else 0) for j in range(n))
    lhs_obs = LinearObservable.from_rational(out.companion, out.normalized.initial, c)
    rhs_obs = out.embedded_observable()
    lhs_calc = lhs_obs.calc()
    rhs_calc = rhs_obs.calc()

    gamma = ctx.mpf(out.gamma.numerator) / ctx.mpf(out.gamma.denominator)
    shift = out.total_shift
    shift_mp = ctx.mpf(shift.numerator) / ctx.mpf(shift.denominator)

    worst = 0.0
    for i in range(samples):
        t = out.normalized.bound * Fraction(i, max(samples - 1, 1))
        lhs = lhs_calc.mp_values(t, 0)[0][0]
        raw = rhs_calc.mp_values(t, 0)[0][0]
        t_mp = ctx.mpf(t.numerator) / ctx.mpf(t.denominator)
        rhs = gamma * ctx.exp(shift_mp * t_mp) * raw
        denom = max(abs(lhs), abs(rhs), ctx.mpf("1e-14"))
        worst = max(worst, float(abs(lhs - rhs) / denom))
    return worst
