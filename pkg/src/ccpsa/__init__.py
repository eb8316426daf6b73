"""Discrete-time process-calculus workbench for cyber-physical systems
and physics-based attacks.

The package models a CPS as logical processes running against a physical
environment with bounded uncertainty, executed slot by slot.  On top of
the exact transition semantics it provides bounded trace-preorder
checking, attack classification and synthesis, impact and tolerance
estimation, and statistical model checking of timed properties.
"""

from .core import (
    AttackClass, CpsModel, ModelError, SlotSet, StateSpaceBlowup,
    widen_uncertainty, with_process,
)
from .lang import (
    AttackerSpec, ParseError, parse_attacker, parse_model, render,
    render_attacker,
)
from .semantics import (
    Grid, RunResult, Sampler, SlotSnapshot, Stepper, child_seed, run,
)
from .analysis import (
    Bracket, BudgetExhausted, CounterTrace, HoldsToBound, Mismatch,
    NoMismatchAtSlot, NoUpperBound, Sound, Tolerant, Vulnerable, attach,
    bounded_soundness, classify_attack, impact_definitive, impact_pointwise,
    observable_traces, trace_inclusion, xi_tolerance,
)
from .attacks import (
    BuiltAttack, ClassResult, actuator_dos, class_of, is_honest,
    sensor_freeze, sensor_offset, top_attacker, weaker,
)
from .smc import (
    Always, Eventually, SmcConfig, SmcResult, estimate, estimate_many,
    parse_formula, render_formula, required_runs, sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AttackClass", "CpsModel", "ModelError", "SlotSet", "StateSpaceBlowup",
    "widen_uncertainty", "with_process",
    "AttackerSpec", "ParseError", "parse_attacker", "parse_model", "render",
    "render_attacker",
    "Grid", "RunResult", "Sampler", "SlotSnapshot", "Stepper", "child_seed",
    "run",
    "Bracket", "BudgetExhausted", "CounterTrace", "HoldsToBound", "Mismatch",
    "NoMismatchAtSlot", "NoUpperBound", "Sound", "Tolerant", "Vulnerable",
    "attach", "bounded_soundness", "classify_attack", "impact_definitive",
    "impact_pointwise", "observable_traces", "trace_inclusion",
    "xi_tolerance",
    "BuiltAttack", "ClassResult", "actuator_dos", "class_of", "is_honest",
    "sensor_freeze", "sensor_offset", "top_attacker", "weaker",
    "Always", "Eventually", "SmcConfig", "SmcResult", "estimate",
    "estimate_many", "parse_formula", "render_formula", "required_runs",
    "sweep",
    "__version__",
]
