"""Time-bounded reachability for continuous-time Markov decision processes.

The package synthesizes optimal piecewise-constant policies by locating
policy switch points as certified non-tangential zeros of exponential
polynomials, decides threshold and stationary-optimality queries with
explicit error bounds, and embeds bounded zero-detection problems for
linear ODEs into equivalent CTMDP stationarity questions.
"""

from .errors import (
    AbsorbingSourceError,
    AllMomentsZeroError,
    AmbiguousSimultaneityError,
    BudgetExceededError,
    CtmdpReachError,
    DegenerateGammaError,
    IdenticallyZeroError,
    IllConditionedError,
    MaxSwitchesExceededError,
    OrderCapExceededError,
    TooManyVectorsError,
    TrivialInstanceError,
)
from .expoly import (
    ExpPolyClosedForm,
    LinearObservable,
    ZeroBracket,
    ZeroKind,
    classify_zero,
    closed_form,
    derivative,
    evaluate,
    is_identically_zero,
    isolate_zeros,
)
from .model import (
    Ctmdp,
    DecisionVector,
    GeneratorMatrix,
    ReachSpec,
    ValidationReport,
    exit_rate,
    generator_for,
    jump_probability,
    load_model,
    model_from_json,
    model_to_json,
    save_model,
    validate,
)
from .oracles import Estimate, SimConfig, best_stationary, simulate, uniformize
from .skolem import (
    ReductionOutput,
    SkolemInstance,
    build_generators,
    build_substochastic,
    companion_form,
    instance_from_json,
    load_instance,
    normalize_initial,
    reduce,
    shift_diagonal,
    sign_split_matrix,
    sign_split_vector,
    verify_identity,
)
from .synthesis import (
    DecisionSet,
    PiecewisePolicy,
    PolicyPrefix,
    ReachabilityDecision,
    StationarityDecision,
    SwitchRecord,
    argmax_chain,
    bellman_residual,
    decide_reachability,
    decide_stationary,
    find_next_switch,
    initial_decision,
    reach_probability,
    stationary_policy,
    switch_observable,
    synthesize,
    value_trajectory,
)

__version__ = "0.1.0"
