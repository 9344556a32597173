"""Optimal piecewise-constant policy synthesis for time-bounded reachability.

The value vector W_t (probability of hitting the target within remaining
horizon t) satisfies dW/dt = Q^{d_t} W_t where d_t, the decision vector
played at forward time B - t, must maximize the nested argmax chain
F_1 >= F_2 >= ... over powers [Q^d]^j W_t.  The policy is synthesized
forward in backward time: hold the current decision vector until some
alternative action overtakes it, which happens exactly at a non-tangential
zero of a switch observable

    y(t) = u_s^T (Q^{d} - Q^{d[s->b]}) e^{Q^{d} (t - t_origin)} W_origin,

an exponential polynomial handled by the certified zero isolator.  Switch
times are carried as exact rational brackets; downstream values propagate
the bracket widths into explicit error bounds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import (
    AmbiguousSimultaneityError,
    BudgetExceededError,
    MaxSwitchesExceededError,
    OrderCapExceededError,
)
from .expoly import (
    DELTA_FACTOR,
    EVAL_EPS,
    NOISE_FACTOR,
    LinearObservable,
    ZeroBracket,
    ZeroKind,
    is_identically_zero,
    isolate_zeros,
)
from .model import Ctmdp, DecisionVector, GeneratorMatrix, ReachSpec, generator_for
from .rationals import QVector, rational_to_json, to_float_vector

FLOAT_EVAL_EPS = 1e-13  # per-factor error allowance of one propagator product


# ---------------------------------------------------------------------------
# Argmax chain over decision vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecisionSet:
    """Product set of decision vectors given by per-state admissible actions.

    Every nested argmax set in the chain factorizes this way: all members
    share the same image vector [Q^d]^j W, so maximizing the next power again
    decomposes state by state.
    """

    per_state: tuple[tuple[int, ...], ...]

    def __contains__(self, d: DecisionVector) -> bool:
        return all(a in opts for a, opts in zip(d.choice, self.per_state))

    @property
    def size(self) -> int:
        out = 1
        for opts in self.per_state:
            out *= len(opts)
        return out

    def lexicographic_min(self) -> DecisionVector:
        return DecisionVector(tuple(min(opts) for opts in self.per_state))

    def vectors(self) -> Iterator[DecisionVector]:
        for combo in itertools.product(*self.per_state):
            yield DecisionVector(combo)


def _rate_rows(model: Ctmdp):
    """Exact generator rows rows[s-1][a] including the derived diagonal."""
    n = model.num_states
    rows = []
    for s in range(1, n + 1):
        per_action = []
        for a in range(len(model.actions[s - 1])):
            row = [model.rate(s, a, t) if t != s else Fraction(0)
                   for t in range(1, n + 1)]
            row[s - 1] = -sum(row, Fraction(0))
            per_action.append(tuple(row))
        rows.append(tuple(per_action))
    return tuple(rows)


def argmax_chain(model: Ctmdp, w, depth: int | None = None) -> list[DecisionSet]:
    """Nested argmax sets F_1 .. F_depth of [Q^d]^j w, element-wise.

    Exact rational comparisons when w is rational; otherwise a relative
    tolerance of 1e-12.  The chain is decreasing and stabilizes no later
    than the number of states plus two, which is the default depth.
    """
    n = model.num_states
    if depth is None:
        depth = n + 2
    rows = _rate_rows(model)
    exact = not isinstance(w, np.ndarray) and all(
        isinstance(x, (int, Fraction)) for x in w
    )
    if exact:
        value = tuple(Fraction(x) for x in w)
    else:
        value = np.asarray(w, dtype=np.float64)

    admissible = [tuple(range(len(model.actions[s - 1]))) for s in range(1, n + 1)]
    chain: list[DecisionSet] = []
    for _ in range(depth):
        next_adm = []
        next_value = []
        for s in range(1, n + 1):
            scored = []
            for a in admissible[s - 1]:
                row = rows[s - 1][a]
                if exact:
                    val = sum((row[j] * value[j] for j in range(n)), Fraction(0))
                else:
                    val = float(np.dot([float(x) for x in row], value))
                scored.append((a, val))
            best = max(v for _, v in scored)
            if exact:
                keep = tuple(a for a, v in scored if v == best)
            else:
                tol = 1e-12 * max(1.0, abs(best))
                keep = tuple(a for a, v in scored if v >= best - tol)
            next_adm.append(keep)
            next_value.append(best)
        admissible = next_adm
        value = tuple(next_value) if exact else np.asarray(next_value)
        chain.append(DecisionSet(tuple(admissible)))
    return chain


def initial_decision(model: Ctmdp) -> DecisionVector:
    """Lexicographically smallest member of the stabilized argmax chain at
    the target-indicator vector (the optimal decision at horizon zero)."""
    chain = argmax_chain(model, model.good_indicator())
    return chain[-1].lexicographic_min()


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyPrefix:
    """Decisions d^1..d^k with k-1 certified switch brackets, backward time."""

    decisions: tuple[DecisionVector, ...]
    switch_brackets: tuple[tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        if len(self.switch_brackets) != len(self.decisions) - 1:
            raise ValueError("need exactly one bracket between consecutive decisions")
        for d1, d2 in zip(self.decisions, self.decisions[1:]):
            if d1 == d2:
                raise ValueError("consecutive decisions must differ")
        prev_hi = Fraction(0)
        for lo, hi in self.switch_brackets:
            if not (prev_hi <= lo < hi):
                raise ValueError("brackets must be increasing and disjoint")
            prev_hi = hi

    @property
    def switch_times(self) -> tuple[Fraction, ...]:
        return tuple((lo + hi) / 2 for lo, hi in self.switch_brackets)


@dataclass(frozen=True)
class PiecewisePolicy:
    """Piecewise-constant policy on [0, B] in backward-time coordinates."""

    prefix: PolicyPrefix
    bound: Fraction
    value: tuple[float, ...]
    error_bound: float

    @property
    def terminal(self) -> DecisionVector:
        return self.prefix.decisions[-1]

    @property
    def num_switches(self) -> int:
        return len(self.prefix.switch_brackets)

    def segments(self) -> list[tuple[Fraction, Fraction, DecisionVector]]:
        """(t_lo, t_hi, decision) in backward time, switch times at midpoints."""
        times = list(self.prefix.switch_times) + [self.bound]
        out = []
        lo = Fraction(0)
        for d, hi in zip(self.prefix.decisions, times):
            out.append((lo, hi, d))
            lo = hi
        return out

    def decision_at_backward(self, t: Fraction) -> DecisionVector:
        for lo, hi, d in self.segments():
            if lo <= t <= hi:
                return d
        return self.terminal

    def to_json(self, model: Ctmdp) -> dict:
        return {
            "bound": rational_to_json(self.bound),
            "decisions": [
                [model.actions[s][d.choice[s]] for s in range(model.num_states)]
                for d in self.prefix.decisions
            ],
            "switch_brackets": [
                {"lo": rational_to_json(lo), "hi": rational_to_json(hi)}
                for lo, hi in self.prefix.switch_brackets
            ],
            "value": list(self.value),
            "error_bound": self.error_bound,
        }


def stationary_policy(model: Ctmdp, d: DecisionVector, bound: Fraction) -> PiecewisePolicy:
    values, err = _propagate_value(model, (d,), (), bound)
    return PiecewisePolicy(
        prefix=PolicyPrefix((d,), ()), bound=bound,
        value=tuple(values), error_bound=err,
    )


def policy_from_json(doc: dict, model: Ctmdp) -> PiecewisePolicy:
    from .rationals import parse_rational

    bound = parse_rational(doc["bound"])
    decisions = []
    for names in doc["decisions"]:
        choice = []
        for s, name in enumerate(names, start=1):
            choice.append(model.actions[s - 1].index(name))
        decisions.append(DecisionVector(tuple(choice)))
    brackets = tuple(
        (parse_rational(b["lo"]), parse_rational(b["hi"]))
        for b in doc.get("switch_brackets", [])
    )
    values, err = _propagate_value(model, tuple(decisions), brackets, bound)
    return PiecewisePolicy(
        prefix=PolicyPrefix(tuple(decisions), brackets), bound=bound,
        value=tuple(values), error_bound=err,
    )


@dataclass(frozen=True)
class SwitchRecord:
    """One certified switch: bracket, old and new decision, changed states."""

    bracket: tuple[Fraction, Fraction]
    old: DecisionVector
    new: DecisionVector
    changed_states: frozenset[int]
    contact_order: Mapping[int, int]

    def to_json(self) -> dict:
        return {
            "bracket": {
                "lo": rational_to_json(self.bracket[0]),
                "hi": rational_to_json(self.bracket[1]),
            },
            "changed_states": sorted(self.changed_states),
            "contact_order": {str(s): k for s, k in sorted(self.contact_order.items())},
        }


# ---------------------------------------------------------------------------
# Switch detection
# ---------------------------------------------------------------------------


def _segment_matrices(model: Ctmdp, decisions, brackets):
    mats = [generator_for(model, d) for d in decisions]
    times = [(lo + hi) / 2 for lo, hi in brackets]
    return mats, times


def _w_at_origin(model: Ctmdp, decisions, brackets):
    """Value vector at the last switch time (bracket midpoints), plus the
    exact rational data when no switch has happened yet."""
    u = to_float_vector(model.good_indicator())
    mats, times = _segment_matrices(model, decisions, brackets)
    w = u
    prev = Fraction(0)
    for gen, t in zip(mats, times):
        w = expm(gen.as_array() * float(t - prev)) @ w
        prev = t
    exact = model.good_indicator() if not brackets else None
    return w, exact, prev


def switch_observable(model: Ctmdp, prefix: PolicyPrefix, s: int, b: int) -> LinearObservable:
    """Observable whose non-tangential zero marks action b overtaking the
    current action at state s, in local time after the last switch."""
    d = prefix.decisions[-1]
    if b == d.action(s):
        raise ValueError(f"action {b} is already played at state {s}")
    if not (0 <= b < len(model.actions[s - 1])):
        raise ValueError(f"state {s} has no action index {b}")
    rows = _rate_rows(model)
    c_exact = tuple(
        rows[s - 1][d.action(s)][j] - rows[s - 1][b][j]
        for j in range(model.num_states)
    )
    gen = generator_for(model, d)
    w, w_exact, _ = _w_at_origin(model, prefix.decisions, prefix.switch_brackets)
    if w_exact is not None:
        return LinearObservable.from_rational(gen.rows, w_exact, c_exact)
    return LinearObservable(gen.as_array(), w, to_float_vector(c_exact))


# A candidate whose observable just crossed zero at the previous switch is
# numerically unresolvable right after the segment start.  Zeros within this
# fraction of the remaining horizon of the previous bracket are attributed to
# that switch; larger bands abort with a budget error instead of guessing.
BAND_LIMIT = Fraction(1, 64)


def _resolvable_from(obs: LinearObservable, lo: Fraction, hi: Fraction) -> Fraction | None:
    """Smallest dyadic offset after lo at which the observable value rises
    clear of the double-precision noise floor."""
    calc = obs.calc()
    span = hi - lo
    band = span / 2**40
    while band <= span * BAND_LIMIT:
        vals, xn = calc.values(lo + band, 0)
        if abs(vals[0]) > 2 * NOISE_FACTOR * EVAL_EPS * calc.row_norm(0) * xn:
            return lo + band
        band *= 2
    return None


def _earliest_nontangential(obs: LinearObservable, lo: Fraction, hi: Fraction,
                            delta: Fraction, after_switch: bool) -> ZeroBracket | None:
    if is_identically_zero(obs):
        return None
    try:
        brackets = isolate_zeros(obs, lo, hi, delta)
    except BudgetExceededError as exc:
        if not after_switch or "endpoint neighborhood" not in str(exc):
            raise
        start = _resolvable_from(obs, lo, hi)
        if start is None:
            raise
        brackets = isolate_zeros(obs, start, hi, delta)
    for bracket in brackets:
        if bracket.kind is ZeroKind.NONTANGENTIAL:
            return bracket
    return None


def _overlap(a: ZeroBracket, b: ZeroBracket) -> bool:
    return a.lo <= b.hi and b.lo <= a.hi


def _cluster_earliest(found: dict, delta: Fraction) -> list:
    """Candidates simultaneous with the earliest non-tangential zero.

    Brackets overlapping the earliest bracket are merged into one switch;
    chain overlaps (a candidate overlapping the cluster but not the earliest
    bracket, or vice versa) cannot be ordered at this width and raise.
    """
    items = sorted(found.items(), key=lambda kv: (kv[1].lo, kv[0]))
    first_key, first = items[0]
    cluster = [(k, br) for k, br in items if _overlap(first, br)]
    hi = max(br.hi for _, br in cluster)
    for k, br in items:
        in_cluster = any(k == ck for ck, _ in cluster)
        if in_cluster:
            if not _overlap(first, br):
                raise AmbiguousSimultaneityError(
                    f"switch brackets chain-overlap at width {float(delta):g}"
                )
        elif br.lo <= hi:
            raise AmbiguousSimultaneityError(
                f"candidate {k} overlaps the switch cluster but not its "
                f"earliest bracket (width {float(delta):g})"
            )
    return cluster


def find_next_switch(model: Ctmdp, prefix: PolicyPrefix, from_: Fraction,
                     bound: Fraction, delta: Fraction | None = None) -> SwitchRecord | None:
    """First mandatory switch strictly after ``from_`` and before ``bound``.

    Returns None when no candidate observable has a non-tangential zero in
    the remaining horizon (the current decision vector stays optimal).
    """
    from_ = Fraction(from_)
    bound = Fraction(bound)
    if from_ >= bound:
        return None
    if delta is None:
        delta = bound * DELTA_FACTOR
    d = prefix.decisions[-1]
    origin = prefix.switch_times[-1] if prefix.switch_brackets else Fraction(0)
    lo = from_ - origin
    hi = bound - origin

    candidates: dict[tuple[int, int], LinearObservable] = {}
    for s in range(1, model.num_states + 1):
        for b in range(len(model.actions[s - 1])):
            if b == d.action(s):
                continue
            candidates[(s, b)] = switch_observable(model, prefix, s, b)

    after_switch = bool(prefix.switch_brackets)
    found: dict[tuple[int, int], ZeroBracket] = {}
    for key, obs in candidates.items():
        br = _earliest_nontangential(obs, lo, hi, delta, after_switch)
        if br is not None:
            found[key] = br
    if not found:
        return None

    cluster = _cluster_earliest(found, delta)
    if len(cluster) > 1:
        # Distinct states may genuinely switch together; delta-close distinct
        # zeros must separate under refinement before being merged.
        refined: dict = {}
        for key, br in cluster:
            sub = _earliest_nontangential(
                candidates[key], max(lo, br.lo - delta), min(hi, br.hi + delta),
                delta / 64, after_switch=False,
            )
            if sub is None:
                raise AmbiguousSimultaneityError(
                    f"candidate {key} lost its zero under refinement"
                )
            refined[key] = sub
        cluster = _cluster_earliest(refined, delta / 64)

    new = d
    orders: dict[int, int] = {}
    chosen: dict[int, int] = {}
    for (s, b), br in cluster:
        if s in chosen and chosen[s] != b:
            # Two alternative actions at one state tie at the same instant;
            # take the lexicographically smallest.
            chosen[s] = min(chosen[s], b)
        else:
            chosen[s] = b
        orders[s] = br.contact_order
    for s, b in chosen.items():
        new = new.replace(s, b)
    c_lo = min(br.lo for _, br in cluster)
    c_hi = max(br.hi for _, br in cluster)
    return SwitchRecord(
        bracket=(origin + c_lo, origin + c_hi),
        old=d,
        new=new,
        changed_states=frozenset(chosen),
        contact_order=dict(orders),
    )


# ---------------------------------------------------------------------------
# Synthesis and decisions
# ---------------------------------------------------------------------------


def _propagate_value(model: Ctmdp, decisions, brackets, bound: Fraction):
    """Reach probability at horizon ``bound`` plus a propagated error bound.

    Propagators of generator matrices have infinity-norm one, so replacing a
    switch time by its bracket midpoint perturbs the value by at most half
    the bracket width times the adjacent generator norms.
    """
    mats, times = _segment_matrices(model, decisions, brackets)
    w = to_float_vector(model.good_indicator())
    prev = Fraction(0)
    for gen, t in zip(mats, times + [bound]):
        w = expm(gen.as_array() * float(t - prev)) @ w
        prev = t
    err = FLOAT_EVAL_EPS * (len(mats) + 1)
    norms = [float(max(abs(x) for row in gen.rows for x in row)) for gen in mats]
    for i, (blo, bhi) in enumerate(brackets):
        err += float(bhi - blo) / 2 * (norms[i] + norms[i + 1]) * 2
    return w, err


def reach_probability(model: Ctmdp, policy: PiecewisePolicy,
                      interval_aware: bool = True) -> tuple[tuple[float, ...], float]:
    """Per-state reach probability of the policy with its error bound."""
    values, err = _propagate_value(
        model, policy.prefix.decisions, policy.prefix.switch_brackets, policy.bound
    )
    if not interval_aware:
        err = FLOAT_EVAL_EPS * (len(policy.prefix.decisions))
    return tuple(float(v) for v in values), err


def value_trajectory(model: Ctmdp, policy: PiecewisePolicy,
                     ts: Sequence[float]) -> np.ndarray:
    """Backward value vectors W_t at the requested times (for diagnostics)."""
    segs = policy.segments()
    out = np.empty((len(ts), model.num_states))
    for i, t in enumerate(ts):
        w = to_float_vector(model.good_indicator())
        remaining = float(t)
        for lo, hi, d in segs:
            if remaining <= float(lo):
                break
            upto = min(remaining, float(hi))
            gen = generator_for(model, d).as_array()
            w = expm(gen * (upto - float(lo))) @ w
            if upto >= remaining:
                break
        out[i] = w
    return out


def synthesize(model: Ctmdp, bound, max_switches: int = 64,
               delta: Fraction | None = None) -> PiecewisePolicy:
    """Optimal piecewise-constant policy by iterated switch detection."""
    bound = Fraction(bound)
    if bound <= 0:
        raise ValueError("bound must be positive")
    if delta is None:
        delta = bound * DELTA_FACTOR
    decisions = [initial_decision(model)]
    brackets: list[tuple[Fraction, Fraction]] = []
    from_ = Fraction(0)
    while True:
        prefix = PolicyPrefix(tuple(decisions), tuple(brackets))
        rec = find_next_switch(model, prefix, from_, bound, delta)
        if rec is None:
            break
        if len(brackets) + 1 > max_switches:
            raise MaxSwitchesExceededError(
                f"more than {max_switches} switches on [0, {float(bound):g}]"
            )
        decisions.append(rec.new)
        brackets.append(rec.bracket)
        from_ = rec.bracket[1]
    values, err = _propagate_value(model, decisions, brackets, bound)
    return PiecewisePolicy(
        prefix=PolicyPrefix(tuple(decisions), tuple(brackets)),
        bound=bound,
        value=tuple(float(v) for v in values),
        error_bound=err,
    )


@dataclass(frozen=True)
class ReachabilityDecision:
    verdict: str  # "yes" | "no" | "inconclusive"
    margin: float
    policy: PiecewisePolicy | None
    diagnostics: str = ""

    def to_json(self, model: Ctmdp | None = None) -> dict:
        doc = {
            "verdict": self.verdict,
            "margin": self.margin,
            "diagnostics": self.diagnostics,
        }
        if self.policy is not None and model is not None:
            doc["policy"] = self.policy.to_json(model)
        return doc


def decide_reachability(model: Ctmdp, spec: ReachSpec, tol=Fraction(1, 10**9),
                        max_switches: int = 64) -> ReachabilityDecision:
    """Threshold decision for the synthesized optimal policy.

    Yes requires every ordinary state to clear its threshold by more than
    the propagated error bound plus ``tol``; No requires some state to fall
    short by the same margin; anything tighter is Inconclusive, since exact
    equality of a reachability value with a rational threshold cannot be
    resolved numerically.
    """
    policy = synthesize(model, spec.bound, max_switches=max_switches)
    eb = policy.error_bound + float(tol)
    margins = []
    for s, r in zip(model.ordinary_states, spec.thresholds):
        margins.append(policy.value[s - 1] - float(r))
    if all(m > eb for m in margins):
        return ReachabilityDecision("yes", min(margins), policy)
    if any(m < -eb for m in margins):
        return ReachabilityDecision("no", min(margins), policy)
    gap = min(abs(m) for m in margins)
    return ReachabilityDecision(
        "inconclusive", gap, policy,
        diagnostics=f"margin {gap:.3e} within tolerance {eb:.3e}",
    )


@dataclass(frozen=True)
class StationarityDecision:
    verdict: str  # "stationary" | "not-stationary" | "inconclusive"
    first_switch: SwitchRecord | None = None
    diagnostics: str = ""

    def to_json(self) -> dict:
        doc = {"verdict": self.verdict, "diagnostics": self.diagnostics}
        if self.first_switch is not None:
            doc["first_switch"] = self.first_switch.to_json()
        return doc


def decide_stationary(model: Ctmdp, bound, delta: Fraction | None = None) -> StationarityDecision:
    """Is some stationary policy optimal for horizon ``bound``?

    The initial optimal decision vector stays optimal until its first
    mandatory switch; a certified switch therefore rules out stationary
    optimality, and a certified absence of switches confirms it.
    """
    bound = Fraction(bound)
    prefix = PolicyPrefix((initial_decision(model),), ())
    try:
        rec = find_next_switch(model, prefix, Fraction(0), bound, delta)
    except (AmbiguousSimultaneityError, BudgetExceededError, OrderCapExceededError) as exc:
        return StationarityDecision("inconclusive", None, diagnostics=str(exc))
    if rec is None:
        return StationarityDecision("stationary")
    return StationarityDecision("not-stationary", first_switch=rec)


def bellman_residual(model: Ctmdp, policy: PiecewisePolicy, t: Fraction) -> float:
    """Residual of the elementwise maximization at backward time t.

    Zero (up to tolerance) means the active decision vector attains the
    maximum of Q^d W_t in every component among all single-state deviations.
    """
    w = value_trajectory(model, policy, [float(t)])[0]
    d = policy.decision_at_backward(Fraction(t))
    rows = _rate_rows(model)
    worst = 0.0
    for s in range(1, model.num_states + 1):
        active = float(np.dot([float(x) for x in rows[s - 1][d.action(s)]], w))
        best = max(
            float(np.dot([float(x) for x in rows[s - 1][a]], w))
            for a in range(len(model.actions[s - 1]))
        )
        worst = max(worst, best - active)
    return worst
