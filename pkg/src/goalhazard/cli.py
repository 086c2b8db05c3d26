"""``goalhazard`` command-line front end.

Exit status: 0 success, 2 input parse failure, 3 non-convergence,
4 contract violation (bad arguments or data the models cannot use).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, baseline, coxfit, diagnostics, provenance, simulate, svg
from .ingest import Dataset, ParseError, format_dataset, format_matches, read_dataset, read_matches
from .model import (
    PRESET_NAMES, TERMS, TIES, TRANSFORMS, ContractError, ModelSpec, MonotoneLikelihoodError,
    expand_preset,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NONCONVERGENCE = 3
EXIT_CONTRACT = 4


class CLIError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONTRACT):
        super().__init__(message)
        self.code = code


def _write(path: str | Path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load_fit(path: str):
    try:
        return coxfit.from_json(Path(path).read_text())
    except (KeyError, ValueError) as exc:
        raise CLIError(f"{path}: not a fit file ({exc})", EXIT_PARSE) from None


# ---------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    matches = read_matches(args.matches)
    dataset = Dataset.from_matches(matches)
    if args.out:
        _write(args.out, format_dataset(dataset, provenance.describe([args.matches])))
    print(dataset.summary.as_table())
    return EXIT_OK


def spec_from_args(args) -> ModelSpec:
    if args.model and args.terms:
        raise CLIError("give either --model or --terms, not both")
    if args.model:
        spec = expand_preset(args.model, ties_method=args.ties or "efron")
        changes = {}
        if args.transform:
            changes["time_transform"] = args.transform
        if args.stratify:
            changes["stratify_by_goal"] = True
        if args.frailty:
            changes["frailty"] = True
        return spec.with_(**changes) if changes else spec
    if args.terms is None:
        raise CLIError("one of --model or --terms is required")
    terms = tuple(t.strip() for t in args.terms.split(",") if t.strip())
    unknown = [t for t in terms if t not in TERMS]
    if unknown:
        raise CLIError(f"unknown term(s) {', '.join(unknown)}; known: {', '.join(TERMS)}")
    return ModelSpec(terms=terms, time_transform=args.transform or "identity",
                     stratify_by_goal=bool(args.stratify), frailty=bool(args.frailty),
                     ties_method=args.ties or "efron")


def cmd_fit(args) -> int:
    dataset = read_dataset(args.dataset)
    spec = spec_from_args(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = coxfit.fit(dataset, spec)
        except MonotoneLikelihoodError as exc:
            raise CLIError(str(exc), EXIT_NONCONVERGENCE) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.out:
        _write(args.out, coxfit.to_json(result, provenance.describe([args.dataset])))
    title = f"Model {spec.name}" if spec.name else "Model (" + ", ".join(spec.terms) + ")"
    print(title)
    print(coxfit.format_table(result))
    if not result.converged:
        print("warning: fit did not converge; estimates are the last iterate", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_lrt(args) -> int:
    nested, full = _load_fit(args.nested), _load_fit(args.full)
    df = args.df
    stat, p = coxfit.lrt(nested, full, df)
    if df is None:
        df = len(full.terms) - len(nested.terms) + int(full.spec.frailty and not nested.spec.frailty)
    print(f"chi-square {stat:.4f} on {df} df, p = {p:.3f}")
    return EXIT_OK


def parse_profile(text: str) -> baseline.SurvivalProfile:
    """``pw=0.5,season=1[,tfg=25[,fgt=1]]``."""
    keys = {"pw": "prob_win", "season": "season", "tfg": "time_of_first_goal",
            "fgt": "first_goal_team"}
    values = {}
    for part in text.split(","):
        if not part.strip():
            continue
        k, sep, v = part.partition("=")
        k = k.strip()
        if not sep or k not in keys:
            raise CLIError(f"bad profile item {part!r}; expected pw=,season=,tfg=,fgt=")
        try:
            values[keys[k]] = float(v)
        except ValueError:
            raise CLIError(f"bad profile value {part!r}") from None
    if "prob_win" not in values:
        raise CLIError(f"profile {text!r} needs pw=")
    tfg = values.get("time_of_first_goal")
    fgt = values.get("first_goal_team")
    return baseline.SurvivalProfile(
        prob_win=values["prob_win"], season=int(values.get("season", 0)),
        time_of_first_goal=tfg,
        first_goal_team=None if tfg is None else bool(fgt) if fgt is not None else False)


def cmd_curves(args) -> int:
    if not args.profile:
        raise CLIError("at least one --profile is required")
    profiles = [parse_profile(p) for p in args.profile]
    fit = _load_fit(args.fit)
    dataset = read_dataset(args.dataset)
    if dataset.summary.n_rows != fit.n_rows:
        raise CLIError("dataset does not match the fit (row counts differ)")
    bases = baseline.breslow_baseline(dataset, fit.spec, fit)
    curves = [baseline.survival_curve(fit, bases, p) for p in profiles]
    header = provenance.describe([args.fit, args.dataset])
    text = baseline.curves_csv(curves, header)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.baseline_out:
        _write(args.baseline_out, baseline.baselines_csv(bases, header))
    if args.svg:
        chart = svg.step_chart([(c.profile.label(), c.times, c.survival) for c in curves],
                               title="Survival curves", ylabel="S(t)",
                               bands=[(c.lower, c.upper) for c in curves])
        _write(args.svg, chart)
        if args.baseline_out:
            hz = svg.step_chart([(k, b.times, b.cumulative_hazard) for k, b in bases.items()],
                                title="Cumulative baseline hazard", ylabel="H0(t)")
            _write(Path(args.svg).with_name(Path(args.svg).stem + "_baseline.svg"), hz)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.params:
        try:
            doc = json.loads(Path(args.params).read_text())
        except ValueError as exc:
            raise CLIError(f"{args.params}: invalid JSON ({exc})", EXIT_PARSE) from None
        try:
            params = simulate.SimParams.from_dict(doc)
        except KeyError as exc:
            raise CLIError(f"simulation parameters lack {exc}") from None
        inputs = [args.params]
    else:
        params = simulate.default_params()
        inputs = []
    matches = simulate.simulate_league(args.n, params, seed=args.seed)
    text = format_matches(matches, provenance.describe(inputs, f"seed={args.seed} n={args.n}"))
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_residuals(args) -> int:
    fit = _load_fit(args.fit)
    dataset = read_dataset(args.dataset)
    res = diagnostics.residuals(dataset, fit.spec, fit)
    header = provenance.describe([args.fit, args.dataset])
    if args.out:
        _write(args.out, diagnostics.residuals_csv(res, header))
    if args.scatter:
        _write(args.scatter, diagnostics.scatter_csv(res, header))
    print(f"sum of martingale residuals: {res.martingale.sum():.3e}")
    print(f"rows: {res.martingale.size}  deviance range: "
          f"[{res.deviance.min():.3f}, {res.deviance.max():.3f}]")
    return EXIT_OK


def _markdown_table(fit) -> str:
    lines = ["| term | coef | exp(coef) | se(coef) | z | p |", "|---|---|---|---|---|---|"]
    for r in coxfit.coefficient_rows(fit):
        lines.append(f"| {r['label']} | {r['coef']:.3f} | {r['exp_coef']:.3f} | {r['se']:.3f} "
                     f"| {r['z']:.3f} | {coxfit.format_p(r['p'])} |")
    return "\n".join(lines)


def _nests(a, b) -> bool:
    if a is b or a.n_rows != b.n_rows or a.spec.stratify_by_goal != b.spec.stratify_by_goal:
        return False
    if not set(a.terms) <= set(b.terms):
        return False
    if a.spec.frailty and not b.spec.frailty:
        return False
    if b.spec.frailty and not a.spec.frailty and set(a.terms) != set(b.terms):
        # frailty logliks sit on the Breslow scale; only the theta test is like-for-like
        return False
    extra = len(b.terms) - len(a.terms) + int(b.spec.frailty and not a.spec.frailty)
    return extra > 0 and (a.spec.time_transform == b.spec.time_transform
                          or not (a.spec.has_time_dependent and b.spec.has_time_dependent))


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    if not run.is_dir():
        raise CLIError(f"{run} is not a directory")
    fits = []
    for path in sorted(run.glob("*.json")):
        try:
            doc = json.loads(path.read_text())
        except ValueError:
            continue
        if "spec" in doc and "terms" in doc:
            fits.append((path, coxfit.from_dict(doc)))
    if not fits:
        raise CLIError(f"no fit files in {run}")
    out = [f"# Goal-timing analysis: {run.resolve().name}", "",
           f"Generated by goalhazard {__version__}.", "", "## Fitted models", ""]
    for path, fit in fits:
        name = f"Model {fit.spec.name}" if fit.spec.name else path.stem
        out += [f"### {name} (`{path.name}`)", "", _markdown_table(fit), "",
                f"Log-likelihood {fit.loglik_final:.4f} (null {fit.loglik_null:.4f}); "
                f"{fit.n_rows} rows, {fit.n_events} events; converged: {fit.converged}.", ""]
        if fit.frailty:
            f = fit.frailty
            out += [f"Frailty variance {f['theta']:.4g}; LRT against no frailty "
                    f"{f['lrt_statistic']:.4f} on 1 df, p = {f['p_value']:.3f}.", ""]
    tests = []
    for pa, a in fits:
        for pb, b in fits:
            if _nests(a, b):
                try:
                    stat, p = coxfit.lrt(a, b)
                except ContractError:
                    continue
                df = len(b.terms) - len(a.terms) + int(b.spec.frailty and not a.spec.frailty)
                tests.append(f"| {pa.stem} | {pb.stem} | {stat:.3f} | {df} | {p:.3f} |")
    if tests:
        out += ["## Likelihood-ratio tests", "",
                "| nested | full | chi-square | df | p |", "|---|---|---|---|---|", *tests, ""]
    csvs = sorted(p.name for p in run.glob("*.csv"))
    svgs = sorted(p.name for p in run.glob("*.svg"))
    if csvs or svgs:
        out += ["## Curves, residuals and other outputs", ""]
        out += [f"- [{name}]({name})" for name in csvs + svgs] + [""]
    text = "\n".join(out)
    target = args.out or run / "report.md"
    _write(target, text)
    print(f"wrote {target} ({len(fits)} models, {len(tests)} tests)")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goalhazard", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"goalhazard {__version__}")
    parser.add_argument("--config", help="key = value file standing in for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="match file -> dataset file and summary")
    p.add_argument("matches", nargs="?")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest, positionals=("matches",))

    p = sub.add_parser("fit", help="fit one model")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--model", choices=PRESET_NAMES)
    p.add_argument("--terms", help="comma-separated term names")
    p.add_argument("--transform", choices=TRANSFORMS)
    p.add_argument("--stratify", action="store_true")
    p.add_argument("--frailty", action="store_true")
    p.add_argument("--ties", choices=TIES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit, positionals=("dataset",))

    p = sub.add_parser("lrt", help="likelihood-ratio test of two fits")
    p.add_argument("nested", nargs="?")
    p.add_argument("full", nargs="?")
    p.add_argument("--df", type=int)
    p.set_defaults(func=cmd_lrt, positionals=("nested", "full"))

    p = sub.add_parser("curves", help="survival curves for covariate profiles")
    p.add_argument("fit", nargs="?")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--profile", action="append", help="pw=0.5,season=1[,tfg=25,fgt=1]")
    p.add_argument("--out")
    p.add_argument("--baseline-out")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_curves, positionals=("fit", "dataset"))

    p = sub.add_parser("simulate", help="synthetic match file")
    p.add_argument("--n", type=int, default=760)
    p.add_argument("--params", help="JSON with model, coefficients, baseline_rate, ...")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate, positionals=())

    p = sub.add_parser("residuals", help="martingale and deviance residuals")
    p.add_argument("fit", nargs="?")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--out")
    p.add_argument("--scatter")
    p.set_defaults(func=cmd_residuals, positionals=("fit", "dataset"))

    p = sub.add_parser("report", help="markdown report over a run directory")
    p.add_argument("run_dir", nargs="?")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report, positionals=("run_dir",))
    return parser


def read_config(path: str) -> dict[str, str]:
    out = {}
    problems = []
    for no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            problems.append((no, "expected key = value"))
            continue
        out[key.strip().replace("-", "_")] = value.strip()
    if problems:
        raise ParseError(path, problems)
    return out


def _config_tokens(parser: argparse.ArgumentParser, command: str, config: dict) -> list[str]:
    """Turn config entries into flag tokens for ``command``; positionals are kept aside."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    cmd_parser = sub.choices[command]
    by_dest = {a.dest: a for a in cmd_parser._actions if a.option_strings}
    known = {a.dest for p in sub.choices.values() for a in p._actions}
    unknown = sorted(set(config) - known - {"config"})
    if unknown:
        raise CLIError(f"unknown config key(s): {', '.join(unknown)}")
    tokens = []
    for key, value in config.items():
        action = by_dest.get(key)
        if action is None:
            continue
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(flag)
        elif isinstance(action, argparse._AppendAction):
            for item in value.split(";"):
                tokens += [flag, item.strip()]
        else:
            tokens += [flag, value]
    return tokens


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            config = read_config(args.config)
            tokens = _config_tokens(parser, args.command, config)
            explicit = parser.parse_args(argv)
            # flags on the command line win; append-style flags replace config wholesale
            idx = argv.index(args.command)
            merged = argv[:idx + 1] + tokens + argv[idx + 1:]
            args = parser.parse_args(merged)
            for dest in ("profile",):
                if getattr(explicit, dest, None):
                    setattr(args, dest, getattr(explicit, dest))
            for name in args.positionals:
                if getattr(args, name) is None and name in config:
                    setattr(args, name, config[name])
        missing = [n for n in args.positionals if getattr(args, n) is None]
        if missing:
            raise CLIError(f"missing argument(s): {', '.join(missing)}")
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ContractError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
