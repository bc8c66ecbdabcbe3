"""Command-line front end: simulate, train, estimate, evaluate, inspect.

Exit codes: 0 success, 1 numerical or internal failure, 2 bad usage or input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .behaviors import BEHAVIORS, ParameterError, default_parameter_set, load_parameters, save_parameters
from .engine import trajectory, write_trace
from .evaluation import (
    EvaluationError,
    compare_methods,
    evaluate,
    export_histogram,
    export_violin_data,
    format_table,
    write_report,
)
from .synthgen import ScenarioConfig, SynthesisError, corpus_stats, generate, load_scenario, write_corpus
from .timeline import SessionError, load_corpus, load_session, session_from_dict
from .trainer import TrainConfig, TrainingError, split_dataset, train

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="random seed (split, restarts, simulation)")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="hri-engagement", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--scenario", type=Path, help="scenario JSON (defaults apply to missing keys)")
    p.add_argument("--sessions", type=int, help="override the number of sessions")
    p.add_argument("--jitter", type=float, nargs=2, metavar=("LOW", "HIGH"), help="duration jitter range")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("train", parents=[common], help="fit slope distributions")
    p.add_argument("data", type=Path, help="corpus directory")
    p.add_argument("--init", type=Path, help="initial parameter file (default: uniform start)")
    p.add_argument("--dependence", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--train-fraction", type=float, default=0.79)
    p.add_argument("--alpha", type=float, help="override the likelihood constant")
    p.add_argument("--max-iterations", type=int, default=TrainConfig.max_iterations)
    p.add_argument("--restarts", type=int, default=TrainConfig.restarts)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("estimate", parents=[common], help="estimate one user's duration")
    p.add_argument("session", type=Path)
    p.add_argument("user")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--dependence", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--trace", type=Path, help="write the breakpoint trace CSV here")

    p = sub.add_parser("evaluate", parents=[common], help="score duration estimates")
    p.add_argument("data", type=Path, help="corpus directory")
    p.add_argument("--params", type=Path, required=True, help="parameters (method 1 when --params2 is given)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--params2", type=Path, help="method 2 parameters; compares both methods")
    g.add_argument("--dependence", type=_on_off, default=None, metavar="on|off")
    p.add_argument("--split", type=Path, help="split.json written by train")
    p.add_argument("--subset", choices=("train", "validation", "all"), default=None)
    p.add_argument("--alpha", type=float, help="override the likelihood constant")
    p.add_argument("--out", type=Path, required=True, help="report directory")

    p = sub.add_parser("inspect", parents=[common], help="pretty-print a session or parameter file")
    p.add_argument("path", type=Path)
    return parser


def _say(args, *lines) -> None:
    if not args.quiet:
        for line in lines:
            print(line)


def parameter_table(params, occurrences=None) -> str:
    lines = [f"{'behavior':<13}{'mean':>14}{'variance':>14}{'frequency':>11}  dependent"]
    for b in BEHAVIORS:
        g = params[b]
        freq = "" if occurrences is None else str(occurrences[b])
        lines.append(f"{b.value:<13}{g.mean:>14.4e}{g.variance:>14.4e}{freq:>11}  {'yes' if b.dependent else '-'}")
    lines.append(f"alpha {params.alpha:g}  t_max {params.t_max:g} s")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    if args.scenario is not None:
        if not args.scenario.exists():
            raise UsageError(f"scenario not found: {args.scenario}")
        config = load_scenario(args.scenario)
    else:
        config = ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.sessions is not None:
        changes["n_sessions"] = args.sessions
    if args.jitter is not None:
        changes["jitter"] = tuple(args.jitter)
    if changes:
        config = config.replace(**changes)
    sessions = generate(config)
    write_corpus(sessions, args.out, config)
    _say(args, f"wrote {len(sessions)} sessions to {args.out / 'sessions'}", corpus_stats(sessions).format())
    return EXIT_OK


def cmd_train(args) -> int:
    sessions = load_corpus(args.data)
    if not sessions:
        raise UsageError(f"no sessions in {args.data}")
    seed = 0 if args.seed is None else args.seed
    init = load_parameters(args.init) if args.init else default_parameter_set()
    if args.alpha is not None:
        init = init.replace(alpha=args.alpha)
    split = split_dataset(sessions, args.train_fraction, seed)
    n_train_users = sum(len(s.users) for s in split.train)
    n_val_users = sum(len(s.users) for s in split.validation)
    _say(
        args,
        f"split: {len(split.train)} train sessions ({n_train_users} users), "
        f"{len(split.validation)} validation sessions ({n_val_users} users); "
        f"train user fraction {split.train_user_fraction:.3f}",
    )
    config = TrainConfig(
        max_iterations=args.max_iterations,
        dependence_enabled=args.dependence,
        restarts=args.restarts,
        seed=seed,
    )

    def progress(rec):
        _say(
            args,
            f"restart {rec.restart} iter {rec.iteration:4d} objective {rec.objective:.6f} "
            f"|grad| {rec.gradient_norm:.4e} step {rec.step_size:.4e}",
        )

    report = train(split.train, init, config, callback=progress)
    args.out.mkdir(parents=True, exist_ok=True)
    save_parameters(report.params, args.out / "params.json")
    (args.out / "train_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    split_doc = {
        "seed": seed,
        "train_fraction": args.train_fraction,
        "train_user_fraction": split.train_user_fraction,
        "train": [s.session_id for s in split.train],
        "validation": [s.session_id for s in split.validation],
    }
    (args.out / "split.json").write_text(json.dumps(split_doc, indent=2) + "\n")
    _say(
        args,
        f"final objective {report.objective_trajectory[-1]:.6f} ({report.message})",
        parameter_table(report.params, report.occurrences),
    )
    return EXIT_OK


def cmd_estimate(args) -> int:
    session = load_session(args.session)
    params = load_parameters(args.params)
    if args.user not in session.user_ids:
        raise UsageError(f"unknown user {args.user!r}; session has {', '.join(session.user_ids)}")
    tr = trajectory(session, args.user, params, dependence=args.dependence)
    if args.trace:
        write_trace(tr, args.trace)
    suffix = " (capped)" if tr.capped else ""
    print(f"{tr.estimated_duration:.6g} s{suffix}")
    return EXIT_OK


def _select(sessions, args):
    if args.split is None:
        if args.subset not in (None, "all"):
            raise UsageError("--subset needs --split")
        return sessions
    doc = json.loads(args.split.read_text())
    subset = args.subset or "validation"
    if subset == "all":
        return sessions
    wanted = set(doc[subset])
    return [s for s in sessions if s.session_id in wanted]


def cmd_evaluate(args) -> int:
    sessions = _select(load_corpus(args.data), args)
    if not sessions:
        raise UsageError("no sessions selected")
    p1 = load_parameters(args.params)
    if args.alpha is not None:
        p1 = p1.replace(alpha=args.alpha)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.params2 is not None:
        p2 = load_parameters(args.params2)
        cmp = compare_methods(sessions, p1, p2)
        metrics = [cmp.method1, cmp.method2]
        write_report(cmp, args.out / "report.json")
        text = cmp.table()
    else:
        dep = True if args.dependence is None else args.dependence
        metrics = [evaluate(sessions, p1, dependence_enabled=dep)]
        write_report(metrics, args.out / "report.json")
        text = format_table(metrics)
    for m in metrics:
        tag = m.label.replace(" ", "")
        export_histogram(m, args.out / f"histogram_{tag}.csv")
        export_violin_data(m, args.out / f"violin_{tag}.csv")
    _say(args, text)
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = args.path
    if not path.exists():
        raise UsageError(f"not found: {path}")
    if path.suffix.lower() == ".tsv":
        doc = None
        session = load_session(path)
    else:
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"not a JSON document: {exc}") from None
        session = None
    if doc is not None and "behaviors" in doc:
        from .behaviors import ParameterSet

        print(parameter_table(ParameterSet.from_dict(doc)))
        return EXIT_OK
    if session is None:
        session = session_from_dict(doc)
    print(f"session {session.session_id}: {len(session.users)} users")
    for u in session.users:
        print(f"  {u.user_id}: arrival {u.arrival:.2f} s, observed {u.observed_duration:.2f} s")
        for iv in u.intervals:
            print(f"    {iv.start:9.2f} - {iv.end:9.2f}  {iv.behavior.value}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "inspect": cmd_inspect,
}

INPUT_ERRORS = (UsageError, SessionError, ParameterError, SynthesisError, EvaluationError, FileNotFoundError, KeyError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
