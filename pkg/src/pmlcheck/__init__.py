"""pmlcheck: verify, refine and validate models written in a PROMELA subset."""

from .diagnostics import (
    ConfigError,
    Diagnostic,
    EvalError,
    ParseFailure,
    PmlError,
    PmlSyntaxError,
    ResolutionError,
    StateLimitExceeded,
    SubsetError,
)
from .frontend import parse, try_parse
from .checker import (
    CheckResult,
    CounterExample,
    Property,
    check_deadlock,
    check_invariant,
    check_response,
    explore,
)
from .semantics import (
    GlobalState,
    ProcessAutomaton,
    Transition,
    build_automaton,
    compile_model,
    initial_state,
    successors,
)

__version__ = "0.1.0"
