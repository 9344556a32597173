"""Finite CTMDP models with exact rational transition rates.

States are numbered 1..N.  By convention the distinguished absorbing target
state is stored last (index N) and the optional absorbing sink just before it
(index N-1); the remaining states are "ordinary" and carry the reachability
thresholds.  Rates are exact rationals keyed by (state, action index, target);
absent keys mean rate zero.  Diagonals of generator matrices are always
derived, never stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import AbsorbingSourceError
from .rationals import (
    QMatrix,
    QVector,
    parse_rational,
    rational_to_json,
    to_float_matrix,
)

RateKey = tuple[int, int, int]  # (state, action index, target state)


@dataclass(frozen=True)
class DecisionVector:
    """One action index per state (singleton actions included)."""

    choice: tuple[int, ...]

    def action(self, s: int) -> int:
        return self.choice[s - 1]

    def replace(self, s: int, a: int) -> "DecisionVector":
        items = list(self.choice)
        items[s - 1] = a
        return DecisionVector(tuple(items))

    def __lt__(self, other: "DecisionVector") -> bool:
        return self.choice < other.choice


@dataclass(frozen=True)
class GeneratorMatrix:
    """Square rational matrix with zero row sums and non-negative off-diagonals."""

    rows: QMatrix

    @property
    def size(self) -> int:
        return len(self.rows)

    def row(self, s: int) -> QVector:
        return self.rows[s - 1]

    def entry(self, s: int, t: int) -> Fraction:
        return self.rows[s - 1][t - 1]

    def as_array(self) -> np.ndarray:
        return to_float_matrix(self.rows)

    def check(self) -> None:
        n = self.size
        for i, row in enumerate(self.rows):
            if len(row) != n:
                raise ValueError("generator matrix must be square")
            if sum(row, Fraction(0)) != 0:
                raise ValueError(f"row {i + 1} does not sum to zero")
            for j, x in enumerate(row):
                if i != j and x < 0:
                    raise ValueError(f"negative off-diagonal at ({i + 1},{j + 1})")


@dataclass(frozen=True)
class Violation:
    code: str
    state: int | None = None
    action: str | None = None
    target: int | None = None
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "state": self.state,
            "action": self.action,
            "target": self.target,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_json() for v in self.violations]}


@dataclass(frozen=True)
class Ctmdp:
    """CTMDP over states 1..num_states with per-state action lists.

    ``actions[s-1]`` lists the action names available at state s; ``rates``
    maps (s, action index, s') to the exact transition rate.  ``good`` is the
    absorbing target; ``bad``, when present, is an absorbing sink.
    """

    actions: tuple[tuple[str, ...], ...]
    rates: Mapping[RateKey, Fraction]
    good: int
    bad: int | None = None

    @property
    def num_states(self) -> int:
        return len(self.actions)

    @property
    def absorbing_targets(self) -> frozenset[int]:
        return frozenset({self.good} | ({self.bad} if self.bad is not None else set()))

    @property
    def ordinary_states(self) -> tuple[int, ...]:
        skip = self.absorbing_targets
        return tuple(s for s in range(1, self.num_states + 1) if s not in skip)

    @property
    def num_ordinary(self) -> int:
        return len(self.ordinary_states)

    def action_names(self, s: int) -> tuple[str, ...]:
        return self.actions[s - 1]

    def rate(self, s: int, a: int, t: int) -> Fraction:
        return self.rates.get((s, a, t), Fraction(0))

    def decision_vectors(self):
        """Iterate all decision vectors in lexicographic order of action indices."""
        sizes = [len(a) for a in self.actions]
        idx = [0] * len(sizes)
        while True:
            yield DecisionVector(tuple(idx))
            for pos in reversed(range(len(sizes))):
                idx[pos] += 1
                if idx[pos] < sizes[pos]:
                    break
                idx[pos] = 0
            else:
                return

    def num_decision_vectors(self) -> int:
        out = 1
        for a in self.actions:
            out *= len(a)
        return out

    def good_indicator(self) -> QVector:
        return tuple(
            Fraction(1 if s == self.good else 0) for s in range(1, self.num_states + 1)
        )


def validate(model: Ctmdp) -> ValidationReport:
    """Check model invariants; the report lists every violation found."""
    violations: list[Violation] = []
    n = model.num_states

    if not (1 <= model.good <= n):
        violations.append(
            Violation("BadStateIndex", state=model.good, detail="good out of range")
        )
    if model.bad is not None and not (1 <= model.bad <= n):
        violations.append(
            Violation("BadStateIndex", state=model.bad, detail="bad out of range")
        )

    for s in range(1, n + 1):
        if len(model.actions[s - 1]) == 0:
            violations.append(Violation("EmptyActionSet", state=s))

    for (s, a, t), q in model.rates.items():
        name = None
        if 1 <= s <= n and 0 <= a < len(model.actions[s - 1]):
            name = model.actions[s - 1][a]
        if not (1 <= s <= n) or not (1 <= t <= n):
            violations.append(
                Violation("BadStateIndex", state=s, action=name, target=t)
            )
            continue
        if a < 0 or a >= len(model.actions[s - 1]):
            # Rate keyed on an action the source state does not have.
            violations.append(
                Violation(
                    "CrossStateDependence",
                    state=s,
                    action=str(a),
                    target=t,
                    detail="rate keyed on an action not available at its source state",
                )
            )
            continue
        if s == t:
            violations.append(
                Violation(
                    "SelfRate",
                    state=s,
                    action=name,
                    target=t,
                    detail="self rates are derived, not stored",
                )
            )
        if q < 0:
            violations.append(Violation("NegativeRate", state=s, action=name, target=t))
        if s == model.good and q != 0:
            violations.append(Violation("NonAbsorbingGood", state=s, action=name, target=t))
        if model.bad is not None and s == model.bad and q != 0:
            violations.append(Violation("NonAbsorbingBad", state=s, action=name, target=t))

    return ValidationReport(ok=not violations, violations=tuple(violations))


def generator_for(model: Ctmdp, d: DecisionVector) -> GeneratorMatrix:
    """Generator matrix of the CTMC obtained by fixing the decision vector.

    Row s is the rate row of action d(s); the diagonal entry is the negated
    off-diagonal row sum, so rows sum to zero exactly.
    """
    n = model.num_states
    rows = []
    for s in range(1, n + 1):
        a = d.action(s)
        row = [model.rate(s, a, t) if t != s else Fraction(0) for t in range(1, n + 1)]
        row[s - 1] = -sum(row, Fraction(0))
        rows.append(tuple(row))
    return GeneratorMatrix(tuple(rows))


def exit_rate(model: Ctmdp, d: DecisionVector, s: int) -> Fraction:
    """Total outgoing rate from s under d; zero exactly for absorbing states."""
    a = d.action(s)
    return sum(
        (model.rate(s, a, t) for t in range(1, model.num_states + 1) if t != s),
        Fraction(0),
    )


def jump_probability(model: Ctmdp, d: DecisionVector, s: int, t: int) -> Fraction:
    """Probability that the first jump out of s goes to t, under d."""
    total = exit_rate(model, d, s)
    if total == 0:
        raise AbsorbingSourceError(f"state {s} has exit rate zero")
    return model.rate(s, d.action(s), t) / total


# ---------------------------------------------------------------------------
# JSON model format
# ---------------------------------------------------------------------------
#
# {
#   "states": <number of ordinary states>,
#   "good": <state index>,
#   "bad": <state index or null>,
#   "actions": {"1": ["a", "b"], ...},        # keys cover all states
#   "rates": [{"from": 1, "action": "a", "to": 2, "num": 1, "den": 2}, ...]
# }
#
# Rates may also carry {"rate": <rational>} instead of num/den.


def model_to_json(model: Ctmdp) -> dict:
    rates = []
    for (s, a, t) in sorted(model.rates):
        q = model.rates[(s, a, t)]
        rates.append(
            {
                "from": s,
                "action": model.actions[s - 1][a],
                "to": t,
                "num": q.numerator,
                "den": q.denominator,
            }
        )
    return {
        "states": model.num_ordinary,
        "good": model.good,
        "bad": model.bad,
        "actions": {str(s): list(model.actions[s - 1]) for s in range(1, model.num_states + 1)},
        "rates": rates,
    }


def model_from_json(doc: dict) -> Ctmdp:
    try:
        good = int(doc["good"])
        bad = doc.get("bad")
        bad = None if bad is None else int(bad)
        actions_doc = doc["actions"]
        num_states = len(actions_doc)
        actions = tuple(
            tuple(str(name) for name in actions_doc[str(s)])
            for s in range(1, num_states + 1)
        )
    except KeyError as exc:
        raise ValueError(f"missing model field: {exc}") from exc

    rates: dict[RateKey, Fraction] = {}
    for entry in doc.get("rates", []):
        s = int(entry["from"])
        t = int(entry["to"])
        name = str(entry["action"])
        if "rate" in entry:
            q = parse_rational(entry["rate"])
        else:
            q = parse_rational({"num": entry["num"], "den": entry.get("den", 1)})
        if not (1 <= s <= num_states):
            raise ValueError(f"rate source {s} out of range")
        try:
            a = actions[s - 1].index(name)
        except ValueError:
            # Keep the entry so validate() can report it as a violation.
            a = -1
        if q == 0:
            continue
        key = (s, a, t)
        rates[key] = rates.get(key, Fraction(0)) + q

    return Ctmdp(actions=actions, rates=rates, good=good, bad=bad)


def load_model(path: str) -> Ctmdp:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))


def save_model(model: Ctmdp, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class ReachSpec:
    """Time bound plus one probability threshold per ordinary state."""

    bound: Fraction
    thresholds: QVector

    def __post_init__(self):
        if self.bound <= 0:
            raise ValueError("bound must be positive")
        for r in self.thresholds:
            if not (0 <= r <= 1):
                raise ValueError("thresholds must lie in [0, 1]")

    def to_json(self) -> dict:
        return {
            "bound": rational_to_json(self.bound),
            "thresholds": [rational_to_json(r) for r in self.thresholds],
        }
