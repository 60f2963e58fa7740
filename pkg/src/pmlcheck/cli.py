"""Command-line entry point.

Exit codes are the machine contract: 0 all checks passed, 1 a property
failed (counterexample written), 2 usage or subset errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import pacemaker as pm
from .checker import (
    DEFAULT_STATE_LIMIT,
    Property,
    check_deadlock,
    check_invariant,
    check_response,
    render_trace,
)
from .conformance import Scheduler, conform, validate_replacement
from .diagnostics import ConfigError, ParseFailure, PmlError
from .frontend import parse, parse_expr, try_parse
from .refine import generate_program, refined_automaton, rule_coverage_report

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_USAGE = 2


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _outdir(args) -> str:
    out = getattr(args, "output", None) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load_model(path: str):
    return parse(_read(path), filename=path)


def cmd_parse(args) -> int:
    status = EXIT_OK
    for path in args.files:
        model, diagnostics = try_parse(_read(path), filename=path)
        for d in diagnostics:
            print(d.render(), file=sys.stderr)
        if model is None:
            status = EXIT_USAGE
        else:
            print(f"{path}: ok ({len(model.proctypes)} proctypes)")
    return status


def _selected_properties(args) -> list[Property]:
    props: list[Property] = []
    if getattr(args, "prop_deadlock", False):
        props.append(Property.deadlock())
    for i, text in enumerate(args.invariant or []):
        props.append(Property.invariant(f"invariant_{i}", parse_expr(text)))
    for i, (p, q) in enumerate(args.cond or []):
        props.append(Property.conditional(f"cond_{i}", parse_expr(p), parse_expr(q)))
    for i, (p, q) in enumerate(args.response or []):
        props.append(Property.response(f"response_{i}", parse_expr(p), parse_expr(q)))
    if not props:
        props.append(Property.deadlock())
    return props


def _run_property(model, prop: Property, limit: int):
    if prop.pattern == "deadlock":
        return check_deadlock(model, limit)
    if prop.pattern == "response":
        return check_response(model, prop, limit)
    return check_invariant(model, prop, limit)


def cmd_check(args) -> int:
    model = _load_model(args.file)
    out = _outdir(args)
    status = EXIT_OK
    for prop in _selected_properties(args):
        result = _run_property(model, prop, args.limit)
        line = (
            f"{prop.name}: {result.verdict} "
            f"(states={result.stats.states} transitions={result.stats.transitions} "
            f"depth={result.stats.max_depth})"
        )
        print(line)
        with open(os.path.join(out, f"{prop.name}.result"), "w") as fh:
            fh.write(line + "\n")
        if result.verdict == "fail":
            status = EXIT_PROPERTY
            trace_path = os.path.join(out, f"{prop.name}.trace")
            with open(trace_path, "w") as fh:
                fh.write(render_trace(model, result.counterexample) + "\n")
            print(f"counterexample written to {trace_path}")
    return status


def cmd_refine(args) -> int:
    model = _load_model(args.file)
    out = _outdir(args)
    name = args.name or os.path.splitext(os.path.basename(args.file))[0]
    unit = generate_program(model, name=name, strict=args.strict, trace=args.trace)
    for fname, text in unit.files.items():
        path = os.path.join(out, fname)
        with open(path, "w") as fh:
            fh.write(text)
        print(f"wrote {path}")
    report = rule_coverage_report(unit)
    cov_path = os.path.join(out, f"{name}_coverage.txt")
    with open(cov_path, "w") as fh:
        fh.write(report + "\n")
    print(f"wrote {cov_path}")
    return EXIT_OK


def cmd_conform(args) -> int:
    model = _load_model(args.file)
    out = _outdir(args)
    sched = Scheduler(args.policy, args.quantum)
    props = _selected_properties(args)
    if args.replace:
        dprime = refined_automaton(model.proctype(args.replace), model)
        report = validate_replacement(model, args.replace, dprime, props, args.limit)
    else:
        report = conform(model, props, sched, args.limit, args.subset_cap)
    text = report.render()
    print(text)
    with open(os.path.join(out, "conformance.txt"), "w") as fh:
        fh.write(text + "\n")
    return EXIT_OK if report.ok else EXIT_PROPERTY


def _config_from_args(args) -> pm.PacemakerConfig:
    params = pm.load_params(args.params) if args.params else pm.default_params()
    mode = pm.Mode.parse(args.mode)
    heart = (
        pm.HeartBehavior(args.heart) if args.heart else pm.indicated_heart(mode)
    )
    return pm.PacemakerConfig(mode, params, heart)


def cmd_pacemaker(args) -> int:
    out = _outdir(args)
    if args.pm_command == "verify":
        config = _config_from_args(args)
        results = pm.verify(config, args.limit)
        status = EXIT_OK
        lines = [f"mode={config.mode.code} heart={config.heart.kind}"]
        for name, result in results.items():
            lines.append(f"{name}: {result.verdict}")
            if result.verdict == "fail":
                status = EXIT_PROPERTY
                model = pm.build_model(config)
                trace_path = os.path.join(out, f"{config.mode.code}_{name}.trace")
                with open(trace_path, "w") as fh:
                    fh.write(render_trace(model, result.counterexample) + "\n")
                lines.append(f"counterexample written to {trace_path}")
        text = "\n".join(lines)
        print(text)
        with open(os.path.join(out, f"verify_{config.mode.code}.txt"), "w") as fh:
            fh.write(text + "\n")
        return status
    if args.pm_command == "matrix":
        params = pm.load_params(args.params) if args.params else pm.default_params()
        matrix = pm.verification_matrix(params, limit=args.limit)
        text = pm.render_matrix(matrix)
        print(text)
        with open(os.path.join(out, "matrix.txt"), "w") as fh:
            fh.write(text + "\n")
        failed = any(v == "fail" for rows in matrix.values() for v in rows.values())
        return EXIT_PROPERTY if failed else EXIT_OK
    if args.pm_command == "derive":
        params = pm.load_params(args.params) if args.params else pm.default_params()
        if args.nondet:
            modes = pm.derive_modes_nondet(args.condition, params, args.limit)
        else:
            modes = pm.derive_modes(args.condition, params=params, limit=args.limit)
        codes = sorted((m.code for m in modes), key=pm.BASE_MODES.index)
        print(" ".join(codes))
        return EXIT_OK
    if args.pm_command == "emit":
        config = _config_from_args(args)
        sys.stdout.write(pm.build_source(config))
        return EXIT_OK
    raise AssertionError(args.pm_command)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pmlcheck",
        description="verify, refine and validate models in a PROMELA subset",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and validate model files")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("check", help="model-check properties")
    p.add_argument("file")
    p.add_argument("--prop", choices=["deadlock"], dest="prop_name", default=None)
    p.add_argument("--invariant", action="append", metavar="EXPR")
    p.add_argument("--cond", action="append", nargs=2, metavar=("P", "Q"))
    p.add_argument("--response", action="append", nargs=2, metavar=("P", "Q"))
    p.add_argument("--limit", type=int, default=DEFAULT_STATE_LIMIT)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("refine", help="generate the C translation unit")
    p.add_argument("file")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--name", default=None)
    p.add_argument("--strict", action="store_true",
                   help="blocked if-chains retry instead of falling through")
    p.add_argument("--trace", action="store_true",
                   help="instrument statements with runtime step reporting")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("conform", help="check refinement preservation")
    p.add_argument("file")
    p.add_argument("--policy", choices=["fifo", "round_robin"], default="fifo")
    p.add_argument("--quantum", type=int, default=1)
    p.add_argument("--replace", metavar="PROCTYPE", default=None,
                   help="validate one refined process against the others")
    p.add_argument("--invariant", action="append", metavar="EXPR")
    p.add_argument("--cond", action="append", nargs=2, metavar=("P", "Q"))
    p.add_argument("--response", action="append", nargs=2, metavar=("P", "Q"))
    p.add_argument("--limit", type=int, default=DEFAULT_STATE_LIMIT)
    p.add_argument("--subset-cap", type=int, default=200_000)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_conform)

    p = sub.add_parser("pacemaker", help="pacemaker case study commands")
    pms = p.add_subparsers(dest="pm_command", required=True)
    for name in ("verify", "matrix", "derive", "emit"):
        q = pms.add_parser(name)
        q.add_argument("--params", default=None, help="key=value parameter file")
        q.add_argument("--limit", type=int, default=DEFAULT_STATE_LIMIT)
        q.add_argument("-o", "--output", default=None)
        if name in ("verify", "emit"):
            q.add_argument("--mode", required=True, help="e.g. VVI or DDDR")
            q.add_argument("--heart", choices=list(pm.HEART_KINDS), default=None)
        if name == "derive":
            q.add_argument("--condition", required=True, choices=list(pm.CONDITIONS))
            q.add_argument("--nondet", action="store_true",
                           help="use the nondeterministic-mode encoding")
        q.set_defaults(func=cmd_pacemaker)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    # normalize the check-subcommand deadlock flag
    if getattr(args, "prop_name", None) == "deadlock":
        args.prop_deadlock = True
    elif args.command == "check":
        args.prop_deadlock = False
    try:
        return args.func(args)
    except ParseFailure as e:
        print(e.render(), file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, PmlError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
