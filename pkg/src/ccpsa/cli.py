"""Command-line workbench: model checking, simulation, attack analysis,
statistical estimation, and parameter sweeps.

Exit codes: 0 when the command succeeds and any checked property holds;
1 when a checked property fails (mismatch, vulnerable, no bracket);
2 when a search was cut short by a node or oracle budget (inconclusive);
3 on usage, parse, or model validation errors.

Set ``CCPSA_LOG`` (``debug``/``info``/``warning``) for diagnostics on
stderr.  All outputs end with a trailing newline; CSV uses ``,`` with a
``.`` decimal point regardless of locale.
"""

from __future__ import annotations

import json
import logging
import os
import re
import sys
from typing import Mapping, Optional

import click

from .analysis import (
    DEFAULT_BUDGET, MAX_ORACLE_CALLS, Bracket, BudgetExhausted,
    NoMismatchAtSlot, NoUpperBound, attach, bounded_soundness,
    classify_attack, impact_definitive, impact_pointwise, trace_inclusion,
    xi_tolerance,
)
from .attacks import (
    BuiltAttack, actuator_dos, class_of, sensor_freeze, sensor_offset,
    top_attacker,
)
from .core import (
    AttackClass, CpsModel, ModelError, SlotSet, StateSpaceBlowup,
    widen_uncertainty,
)
from .lang import parse_attacker, parse_model, render_attacker
from .semantics import run
from .smc import FormulaError, SmcConfig, estimate_many, parse_formula, sweep

EXIT_OK = 0
EXIT_FAILS = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 3

log = logging.getLogger("ccpsa")


# ---------------------------------------------------------------------------
# plumbing


def _setup_logging():
    level = os.environ.get("CCPSA_LOG", "").strip().lower()
    if level:
        logging.basicConfig(
            stream=sys.stderr, format="ccpsa: %(levelname)s: %(message)s",
            level={"debug": logging.DEBUG, "info": logging.INFO,
                   "warning": logging.WARNING}.get(level, logging.WARNING))


def _fail(message: str, code: int):
    click.echo(f"ccpsa: error: {message}", err=True)
    sys.exit(code)


def _load_model(path: str) -> CpsModel:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        _fail(str(exc), EXIT_USAGE)
    try:
        return parse_model(text, filename=path)
    except ModelError as exc:
        _fail(str(exc), EXIT_USAGE)


_BUILTIN_ATTACKS = {
    "actuator_dos": (actuator_dos, "m", "cool"),
    "sensor_freeze": (sensor_freeze, "m", "st"),
    "sensor_offset": (sensor_offset, "n", "st"),
}


def _parse_params(pairs) -> dict:
    out = {}
    for pair in pairs:
        name, eq, value = pair.partition("=")
        if not eq or not name:
            _fail(f"--param expects name=value, got {pair!r}", EXIT_USAGE)
        try:
            out[name] = float(value)
        except ValueError:
            _fail(f"--param {name} expects a number, got {value!r}",
                  EXIT_USAGE)
    return out


def _load_attack(spec: str, params: Mapping[str, float],
                 target: Optional[str]):
    """Resolve ``builtin:<name>`` or a ``.ccpsa-atk`` file path."""
    if spec.startswith("builtin:"):
        name = spec[len("builtin:"):]
        if name not in _BUILTIN_ATTACKS:
            _fail(f"unknown builtin attack {name!r}; have "
                  f"{', '.join(sorted(_BUILTIN_ATTACKS))}", EXIT_USAGE)
        builder, pname, default_target = _BUILTIN_ATTACKS[name]
        extra = set(params) - {pname}
        if extra:
            _fail(f"builtin:{name} only takes --param {pname}=<slot>; "
                  f"got {', '.join(sorted(extra))}", EXIT_USAGE)
        if pname not in params:
            _fail(f"builtin:{name} needs --param {pname}=<slot>", EXIT_USAGE)
        value = params[pname]
        if value != int(value) or value < 1:
            _fail(f"--param {pname} must be a positive integer slot, "
                  f"got {value}", EXIT_USAGE)
        return builder(target or default_target, int(value))
    try:
        with open(spec, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        _fail(str(exc), EXIT_USAGE)
    try:
        return parse_attacker(text, params=dict(params), filename=spec)
    except ModelError as exc:
        _fail(str(exc), EXIT_USAGE)


def _parse_direction(pairs) -> Optional[dict]:
    if not pairs:
        return None
    out = {}
    for pair in pairs:
        name, eq, value = pair.partition("=")
        try:
            out[name] = float(value) if eq else 1.0
        except ValueError:
            _fail(f"--direction expects var or var=weight, got {pair!r}",
                  EXIT_USAGE)
    return out


_ACTIVITY = re.compile(r"^([A-Za-z_]\w*)([?!])(.+)$")


def _parse_activity(spec: str):
    """``dev?ITEMS`` / ``dev!ITEMS`` with ITEMS a comma list of ``n``,
    ``n..m``, or ``n..`` (infinite tail)."""
    m = _ACTIVITY.match(spec.strip())
    if not m:
        _fail(f"--activity expects e.g. 'st?1..9' or 'cool!3,5..', "
              f"got {spec!r}", EXIT_USAGE)
    dev, direction, items = m.groups()
    fin: set = set()
    tail: Optional[int] = None
    for item in items.split(","):
        item = item.strip()
        mm = re.match(r"^(\d+)\.\.(\d+)?$", item)
        if mm:
            lo = int(mm.group(1))
            if mm.group(2) is None:
                tail = lo if tail is None else min(tail, lo)
            else:
                fin.update(range(lo, int(mm.group(2)) + 1))
        elif item.isdigit():
            fin.add(int(item))
        else:
            _fail(f"bad slot item {item!r} in --activity {spec!r}",
                  EXIT_USAGE)
    if not fin and tail is None:
        _fail(f"--activity {spec!r} selects no slots", EXIT_USAGE)
    if (tail is not None and tail < 1) or any(k < 1 for k in fin):
        _fail("slots are numbered from 1", EXIT_USAGE)
    return (dev, direction), SlotSet(frozenset(fin), tail)


def _slotset_json(s: SlotSet) -> dict:
    return {"fin": sorted(s.fin), "tail": s.tail}


def _emit(report, fmt: str, out: Optional[str]):
    """Write one report with a trailing newline."""
    if fmt == "json":
        text = json.dumps(report, indent=2, sort_keys=False) + "\n"
    elif fmt == "csv":
        rows = report if isinstance(report, list) else [report]
        keys = list(rows[0]) if rows else []
        lines = [",".join(keys)]
        for r in rows:
            lines.append(",".join(_csv_cell(r.get(k)) for k in keys))
        text = "\n".join(lines) + "\n"
    else:  # text
        rows = report if isinstance(report, list) else [report]
        lines = []
        for r in rows:
            for k, v in r.items():
                lines.append(f"{k}: {_text_cell(v)}")
            lines.append("")
        text = "\n".join(lines[:-1]) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    if isinstance(v, (dict, list)):
        return json.dumps(v).replace(",", ";")
    return str(v)


def _text_cell(v) -> str:
    if isinstance(v, (dict, list)):
        return json.dumps(v)
    return str(v)


def _guard(fn, *args, **kwargs):
    """Run an analysis, mapping budget blowups to exit 2 and model errors
    to exit 3."""
    try:
        return fn(*args, **kwargs)
    except StateSpaceBlowup as exc:
        _fail(f"inconclusive: {exc}", EXIT_INCONCLUSIVE)
    except FormulaError as exc:
        _fail(str(exc), EXIT_USAGE)
    except (ModelError, ValueError) as exc:
        _fail(str(exc), EXIT_USAGE)


def _fmt_option(fn):
    fn = click.option("--format", "fmt",
                      type=click.Choice(["json", "csv", "text"]),
                      default="json", show_default=True,
                      help="Report format.")(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None,
                      help="Write the report to a file instead of stdout.")(fn)
    return fn


def _attack_options(fn):
    fn = click.option("--target", default=None,
                      help="Sensor/actuator the builtin attack taps "
                           "(defaults per builtin).")(fn)
    fn = click.option("--param", "params", multiple=True,
                      help="Attack parameter name=value (repeatable).")(fn)
    fn = click.option("--attack", "attack_spec", default=None,
                      help="builtin:<name> or a .ccpsa-atk file.")(fn)
    return fn


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(package_name="ccpsa", prog_name="ccpsa")
def cli():
    """Workbench for hybrid process-calculus models of cyber-physical
    systems and physics-based attacks."""
    _setup_logging()


@cli.command()
@click.argument("model_path", metavar="MODEL")
@click.option("--soundness", is_flag=True,
              help="Also explore the bounded state space for deadlocks "
                   "and safety violations.")
@click.option("--horizon", type=int, default=20, show_default=True)
@click.option("--grid", type=int, default=3, show_default=True)
@click.option("--budget-nodes", type=int, default=DEFAULT_BUDGET,
              show_default=True)
@_fmt_option
def check(model_path, soundness, horizon, grid, budget_nodes, fmt, out):
    """Parse and validate MODEL; optionally check bounded soundness."""
    model = _load_model(model_path)
    report = {
        "model": model.name,
        "variables": [v.name for v in model.env.variables],
        "sensors": [s.name for s in model.env.sensors],
        "actuators": [a.name for a in model.env.actuators],
        "alarms": sorted(model.alarm_channels),
        "well_formed": True,
    }
    code = EXIT_OK
    if soundness:
        verdict = _guard(bounded_soundness, model, horizon, grid,
                         budget=budget_nodes)
        report["soundness"] = verdict.to_json()
        if verdict.to_json()["verdict"] != "sound":
            code = EXIT_FAILS
    _emit(report, fmt, out)
    sys.exit(code)


@cli.command()
@click.argument("model_path", metavar="MODEL")
@_attack_options
@click.option("--horizon", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trace-out", type=click.Path(dir_okay=False), default=None,
              help="Write the per-step trace as JSON lines.")
@_fmt_option
def simulate(model_path, attack_spec, params, target, horizon, seed,
             trace_out, fmt, out):
    """Execute one sampled run and print its per-slot table."""
    model = _load_model(model_path)
    if attack_spec:
        attack = _load_attack(attack_spec, _parse_params(params), target)
        model = _guard(attach, model, attack)
    rr = _guard(run, model, horizon, seed=seed)
    if trace_out:
        with open(trace_out, "w", encoding="utf-8") as fh:
            for rec in rr.records:
                fh.write(json.dumps(rec) + "\n")
    rows = []
    for i, snap in enumerate(rr.snapshots):
        row = {"clock": i, "slot": snap.slot}
        row.update({k: round(v, 9) for k, v in snap.state.items()})
        row["unsafe"] = snap.unsafe
        row["deadlocked"] = snap.deadlocked
        row["fired"] = ";".join(sorted(snap.fired))
        row["wrote"] = ";".join(f"{a}={v}" for a, v in
                                sorted(snap.wrote.items()))
        rows.append(row)
    if fmt == "json":
        _emit({"model": model.name, "seed": seed, "horizon": horizon,
               "deadlocked": rr.deadlocked, "timelocked": rr.timelocked,
               "unsafe_seen": rr.unsafe_seen, "fired": sorted(rr.fired),
               "slots": rows}, fmt, out)
    else:
        _emit(rows, fmt, out)
    sys.exit(EXIT_OK)


@cli.command()
@click.argument("left_path", metavar="LEFT")
@click.argument("right_path", metavar="RIGHT")
@_attack_options
@click.option("--widen", type=float, default=None,
              help="Enlarge RIGHT's uncertainty by this amount first.")
@click.option("--direction", "direction_pairs", multiple=True,
              help="Widening direction var=weight (repeatable).")
@click.option("--horizon", type=int, default=40, show_default=True)
@click.option("--grid", type=int, default=3, show_default=True)
@click.option("--budget-nodes", type=int, default=DEFAULT_BUDGET,
              show_default=True)
@click.option("--recovery/--no-recovery", default=True, show_default=True,
              help="Also locate the last divergent slot on a mismatch.")
@_fmt_option
def preorder(left_path, right_path, attack_spec, params, target, widen,
             direction_pairs, horizon, grid, budget_nodes, recovery, fmt,
             out):
    """Check LEFT's observable traces are included in RIGHT's, up to the
    horizon.  --attack composes an attacker with LEFT; --widen enlarges
    RIGHT's uncertainty."""
    left = _load_model(left_path)
    right = _load_model(right_path)
    if attack_spec:
        attack = _load_attack(attack_spec, _parse_params(params), target)
        left = _guard(attach, left, attack)
    if widen is not None:
        right = _guard(widen_uncertainty, right, widen,
                       _parse_direction(direction_pairs))
    verdict = _guard(trace_inclusion, left, right, horizon, grid,
                     budget=budget_nodes, recovery=recovery)
    _emit(verdict.to_json(), fmt, out)
    sys.exit(EXIT_OK if verdict.holds else EXIT_FAILS)


@cli.command()
@click.argument("model_path", metavar="MODEL")
@_attack_options
@click.option("--horizon", type=int, default=40, show_default=True)
@click.option("--grid", type=int, default=3, show_default=True)
@click.option("--budget-nodes", type=int, default=DEFAULT_BUDGET,
              show_default=True)
@_fmt_option
def classify(model_path, attack_spec, params, target, horizon, grid,
             budget_nodes, fmt, out):
    """Classify MODEL under --attack as tolerant or vulnerable, with the
    mismatch window, lethality, and stealthiness."""
    if not attack_spec:
        _fail("classify needs --attack", EXIT_USAGE)
    model = _load_model(model_path)
    attack = _load_attack(attack_spec, _parse_params(params), target)
    result = _guard(classify_attack, model, attack, horizon, grid,
                    budget=budget_nodes)
    _emit(result.to_json(), fmt, out)
    sys.exit(EXIT_FAILS if result.vulnerable else EXIT_OK)


@cli.command()
@click.argument("model_path", metavar="MODEL")
@_attack_options
@click.option("--at-slot", type=int, default=None,
              help="Estimate the enlargement at which the first mismatch "
                   "escapes past this slot (pointwise mode).")
@click.option("--resolution", type=float, default=0.05, show_default=True)
@click.option("--eta-max", type=float, default=12.8, show_default=True)
@click.option("--max-calls", type=int, default=MAX_ORACLE_CALLS,
              show_default=True, help="Oracle-call budget.")
@click.option("--direction", "direction_pairs", multiple=True,
              help="Widening direction var=weight (repeatable).")
@click.option("--horizon", type=int, default=40, show_default=True)
@click.option("--grid", type=int, default=3, show_default=True)
@click.option("--budget-nodes", type=int, default=DEFAULT_BUDGET,
              show_default=True)
@_fmt_option
def impact(model_path, attack_spec, params, target, at_slot, resolution,
           eta_max, max_calls, direction_pairs, horizon, grid, budget_nodes,
           fmt, out):
    """Bracket the uncertainty enlargement that absorbs --attack's effect
    (definitive), or the one at which the first mismatch escapes past
    --at-slot (pointwise)."""
    if not attack_spec:
        _fail("impact needs --attack", EXIT_USAGE)
    model = _load_model(model_path)
    attack = _load_attack(attack_spec, _parse_params(params), target)
    direction = _parse_direction(direction_pairs)
    if at_slot is None:
        result = _guard(impact_definitive, model, attack, direction,
                        resolution, horizon, grid, eta_max=eta_max,
                        budget=budget_nodes, max_calls=max_calls)
    else:
        result = _guard(impact_pointwise, model, attack, at_slot, direction,
                        resolution, horizon, grid, eta_max=eta_max,
                        budget=budget_nodes, max_calls=max_calls)
    _emit(_bracket_json(result), fmt, out)
    sys.exit(_bracket_code(result))


@cli.command()
@click.argument("model_path", metavar="MODEL")
@click.option("--resolution", type=float, default=0.01, show_default=True)
@click.option("--eta-max", type=float, default=0.64, show_default=True)
@click.option("--max-calls", type=int, default=MAX_ORACLE_CALLS,
              show_default=True, help="Oracle-call budget.")
@click.option("--direction", "direction_pairs", multiple=True,
              help="Widening direction var=weight (repeatable).")
@click.option("--horizon", type=int, default=40, show_default=True)
@click.option("--grid", type=int, default=3, show_default=True)
@click.option("--budget-nodes", type=int, default=DEFAULT_BUDGET,
              show_default=True)
@_fmt_option
def tolerance(model_path, resolution, eta_max, max_calls, direction_pairs,
              horizon, grid, budget_nodes, fmt, out):
    """Bracket the largest uncertainty enlargement MODEL tolerates while
    staying included in its own nominal behaviour."""
    model = _load_model(model_path)
    result = _guard(xi_tolerance, model, _parse_direction(direction_pairs),
                    resolution, horizon, grid, eta_max=eta_max,
                    budget=budget_nodes, max_calls=max_calls)
    _emit(_bracket_json(result), fmt, out)
    sys.exit(_bracket_code(result))


def _bracket_json(result) -> dict:
    return result.to_json()


def _bracket_code(result) -> int:
    if isinstance(result, Bracket):
        return EXIT_OK
    if isinstance(result, BudgetExhausted):
        return EXIT_INCONCLUSIVE
    return EXIT_FAILS  # NoUpperBound / NoMismatchAtSlot


@cli.command()
@click.argument("model_path", metavar="MODEL")
@_attack_options
@click.option("--formula", "formulas", multiple=True, required=True,
              help="always[t1,t2] <prop> or eventually[0,t2] <prop> "
                   "(repeatable; repeats share one run batch).")
@click.option("--alpha", type=float, default=0.01, show_default=True,
              help="Confidence parameter.")
@click.option("--eps", "epsilon", type=float, default=0.01,
              show_default=True, help="Interval half-width.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--horizon", type=int, default=None,
              help="Run length override (defaults to the widest window).")
@click.option("--threshold", type=float, default=None,
              help="Exit 1 unless every p_hat reaches this value.")
@_fmt_option
def smc(model_path, attack_spec, params, target, formulas, alpha, epsilon,
        seed, workers, horizon, threshold, fmt, out):
    """Estimate satisfaction probabilities of timed formulas by
    statistical model checking."""
    model = _load_model(model_path)
    attacker = None
    if attack_spec:
        attacker = _load_attack(attack_spec, _parse_params(params), target)
    parsed = [_guard(parse_formula, f) for f in formulas]
    cfg = _guard(SmcConfig, alpha=alpha, epsilon=epsilon, seed=seed,
                 workers=workers, horizon=horizon)
    results = _guard(estimate_many, model, parsed, cfg, attacker=attacker)
    report = [r.to_json() for r in results]
    _emit(report if len(report) > 1 else report[0], fmt, out)
    if threshold is not None and any(r.p_hat < threshold for r in results):
        sys.exit(EXIT_FAILS)
    sys.exit(EXIT_OK)


@cli.command(name="sweep")
@click.argument("model_path", metavar="MODEL")
@click.option("--attack", "attack_spec", default=None,
              help="builtin:<name> (parameterised by the sweep variable) "
                   "or none for the nominal system.")
@click.option("--target", default=None,
              help="Sensor/actuator the builtin attack taps.")
@click.option("--formula", "formula_template", required=True,
              help="Formula template; {m} (or the --param-name) is "
                   "replaced by each sweep value.")
@click.option("--param-name", default="m", show_default=True)
@click.option("--param-range", default="9..60", show_default=True,
              help="Inclusive integer range lo..hi.")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--eps", "epsilon", type=float, default=0.05,
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV file (default: stdout).")
def sweep_cmd(model_path, attack_spec, target, formula_template, param_name,
              param_range, alpha, epsilon, seed, workers, out):
    """Sweep an integer parameter, estimating one formula per value;
    emits CSV rows incrementally."""
    model = _load_model(model_path)
    mm = re.match(r"^(\d+)\.\.(\d+)$", param_range.strip())
    if not mm:
        _fail(f"--param-range expects lo..hi, got {param_range!r}",
              EXIT_USAGE)
    lo, hi = int(mm.group(1)), int(mm.group(2))
    if lo > hi:
        _fail(f"--param-range is empty backwards ({param_range})",
              EXIT_USAGE)

    attacker_for = None
    if attack_spec and attack_spec != "none":
        if not attack_spec.startswith("builtin:"):
            _fail("sweep --attack must be builtin:<name> (the sweep value "
                  "is its parameter) or none", EXIT_USAGE)
        name = attack_spec[len("builtin:"):]
        if name not in _BUILTIN_ATTACKS:
            _fail(f"unknown builtin attack {name!r}", EXIT_USAGE)
        builder, _, default_target = _BUILTIN_ATTACKS[name]
        attacker_for = lambda v: builder(target or default_target, v)

    def formula_for(v):
        return parse_formula(formula_template.format(**{param_name: v}))

    try:
        formula_for(lo)
    except (KeyError, IndexError) as exc:
        _fail(f"formula template references unknown placeholder: {exc}",
              EXIT_USAGE)
    except (ModelError, ValueError) as exc:
        _fail(str(exc), EXIT_USAGE)

    cfg = _guard(SmcConfig, alpha=alpha, epsilon=epsilon, seed=seed,
                 workers=workers)
    rows = sweep(model, attacker_for, formula_for, range(lo, hi + 1), cfg,
                 out=out if out else sys.stdout)
    failures = [r for r in rows if r.error is not None]
    for r in failures:
        log.warning("sweep %s=%s failed: %s", param_name, r.param, r.error)
    sys.exit(EXIT_FAILS if failures else EXIT_OK)


@cli.command()
@click.argument("model_path", metavar="MODEL")
@click.option("--activity", "activities", multiple=True, required=True,
              help="Activity slots, e.g. 'st?1..9' (sniff/drop sensor st "
                   "in slots 1-9) or 'st!5..' (forge from slot 5 on); "
                   "repeatable.")
@click.option("--name", default="top", show_default=True,
              help="Name of the synthesized attacker.")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Attacker file to write (.ccpsa-atk).")
def topgen(model_path, activities, name, out):
    """Synthesize the most general attacker of the given class and write
    it as an attacker file."""
    model = _load_model(model_path)
    slots: dict = {}
    for spec in activities:
        act, sset = _parse_activity(spec)
        if act in slots:
            _fail(f"--activity repeats {act[0]}{act[1]}; merge the slot "
                  f"lists into one spec", EXIT_USAGE)
        slots[act] = sset
    cls = AttackClass(slots)
    built = _guard(top_attacker, model, cls, name)
    text = render_attacker(built.to_spec())
    try:
        parse_attacker(text, filename=out)
    except ModelError as exc:  # render/parse round-trip is a shipping gate
        _fail(f"internal error: generated attacker does not re-parse: {exc}",
              EXIT_USAGE)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")
    _emit({"written": out, "attacker": built.name,
           "class": {f"{d}{dd}": _slotset_json(s)
                     for (d, dd), s in sorted(cls.slots.items())}},
          "json", None)
    sys.exit(EXIT_OK)


@cli.command(name="class-of")
@click.argument("attacker_path", metavar="ATTACKER")
@click.option("--param", "params", multiple=True,
              help="Attacker parameter name=value (repeatable).")
@click.option("--horizon", type=int, default=64, show_default=True,
              help="Slots to explore before truncating the class.")
@_fmt_option
def class_of_cmd(attacker_path, params, horizon, fmt, out):
    """Infer the attack class (which devices are tapped in which slots)
    of an attacker file."""
    spec = _load_attack(attacker_path, _parse_params(params), None)
    result = _guard(class_of, spec, horizon=horizon)
    _emit({"class": {f"{d}{dd}": _slotset_json(s)
                     for (d, dd), s in sorted(result.cls.slots.items())},
           "complete": result.complete, "horizon": result.horizon},
          fmt, out)
    sys.exit(EXIT_OK)


def main(argv=None) -> int:
    try:
        return cli.main(args=argv, standalone_mode=False) or EXIT_OK
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
