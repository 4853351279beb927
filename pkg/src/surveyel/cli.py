"""Command-line front end wiring the library modules together.

Subcommands
-----------
``estimate``
    Fit the conditional-likelihood estimator on one realized sample and
    report ``theta_hat``, ``kappa``, standard errors, confidence
    intervals, and the attained log-likelihood as JSON.
``simulate``
    Run a replicated design study described by a flat key-value config
    file and emit the aggregate report as JSON (optionally a histogram
    CSV).
``sample``
    Draw one sample under a named scheme and save it as a JSON draw file
    consumable by ``estimate --scheme-file``.
``inclusion``
    Estimate empirical first-order inclusion frequencies by repeated
    draws and tabulate them against the target probabilities as CSV.
``synth``
    Generate a synthetic population CSV with controlled outcome
    proportion, size law, and size-outcome dependence.

Conventions
-----------
* Exit codes: 0 success, 2 invalid input, 3 solver failure.
* Machine-readable output goes to stdout unless ``--out FILE`` is given;
  diagnostic text goes to stderr.
* All randomness flows from ``--seed``; when the flag is absent a seed
  is drawn from system entropy and echoed on stderr as ``seed: N`` so
  the run can be replayed.
* ``--format`` selects ``json`` (default for estimate/simulate/sample)
  or ``csv`` (default for inclusion); ``synth`` always writes CSV rows.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np
from scipy.special import ndtri

from .design import SchemeSpec, draw_scheme, pps_first_order, scheme_first_order
from .el import maximize_ce
from .errors import SchemaError, SolverError, ValidationError
from .mc import MCStudyConfig, run_study
from .model import BUILTIN_MODELS, make_model
from .population import (
    Population,
    SampleDraw,
    load_population,
    sample_data,
    synth_population,
)
from .variance import sandwich_vce
from .visibility import passthrough_visibility, smoothed_visibility

_SCHEME_CHOICES = ("tille", "midzuno", "systematic", "poisson")
_CONFIG_KEYS = (
    "schemes", "n", "reps", "nominal", "estimators", "variance_methods",
    "seed", "model",
)
_CI_LEVEL = 0.95


# ------------------------------------------------------------------ plumbing


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _resolve_seed(explicit: int | None) -> int:
    """Use the given seed, or draw one from system entropy and echo it."""
    if explicit is not None:
        return explicit
    seed = int(np.random.SeedSequence().entropy % (2**63))
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _num(x: float) -> str:
    return f"{x:.12g}"


def _load_pop(args) -> Population:
    return load_population(
        args.pop, col_y=args.col_y, col_size=args.col_size, col_aux=args.col_aux
    )


def _load_draw(path: str) -> SampleDraw:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    for key in ("indices", "pi"):
        if key not in obj:
            raise SchemaError(f"{path}: draw file lacks required key '{key}'")
    joint = obj.get("joint_pi")
    return SampleDraw(
        indices=np.asarray(obj["indices"], dtype=np.int64),
        pi=np.asarray(obj["pi"], dtype=float),
        scheme=str(obj.get("scheme", "file")),
        joint_pi=None if joint is None else np.asarray(joint, dtype=float),
    )


def _draw_to_dict(draw: SampleDraw, N: int, seed: int) -> dict:
    return {
        "scheme": draw.scheme,
        "n": int(draw.n),
        "N": int(N),
        "seed": seed,
        "indices": [int(i) for i in draw.indices],
        "pi": [float(p) for p in draw.pi],
        "joint_pi": None if draw.joint_pi is None
        else [[float(v) for v in row] for row in draw.joint_pi],
    }


def _fresh_draw(pop: Population, kind: str, n: int, seed: int) -> SampleDraw:
    target = pps_first_order(pop.c, n)
    return draw_scheme(target, SchemeSpec(kind=kind, n=n, seed=seed))


def _compile_basis(spec: str, columns: dict):
    """Turn comma-separated expressions into basis-column callables.

    Expressions see the observed sample columns by name (``y`` plus any
    declared auxiliary columns) and ``np`` for numpy functions; a bare
    number becomes a constant column.
    """
    exprs = [e.strip() for e in spec.split(",") if e.strip()]
    if not exprs:
        raise ValidationError("--smooth-basis needs at least one expression")

    def make(expr):
        code = compile(expr, "<smooth-basis>", "eval")

        def column(v_obs):
            n = v_obs.shape[0]
            env = {"np": np}
            env.update({name: v_obs[:, j] for j, name in enumerate(columns)})
            try:
                val = eval(code, {"__builtins__": {}}, env)  # noqa: S307
            except Exception as exc:
                raise ValidationError(
                    f"--smooth-basis expression {expr!r} failed: {exc}"
                ) from None
            return np.broadcast_to(np.asarray(val, dtype=float), (n,))

        return column

    return [make(e) for e in exprs]


# ------------------------------------------------------------------ estimate


def _cmd_estimate(args) -> int:
    pop = _load_pop(args)
    aux_names = list(args.col_aux or [])
    if args.model in ("linear", "logistic") and not aux_names:
        raise ValidationError(
            f"model '{args.model}' needs at least one --col-aux column"
        )
    model = make_model(args.model, p_a=max(len(aux_names), 1))

    seed = None
    if args.scheme_file:
        draw = _load_draw(args.scheme_file)
        if int(draw.indices.max()) >= pop.N:
            raise ValidationError(
                "draw file indexes beyond the population frame "
                f"(max index {int(draw.indices.max())}, N={pop.N})"
            )
    elif args.scheme:
        if args.n is None:
            raise ValidationError("--scheme needs --n to draw a fresh sample")
        seed = _resolve_seed(args.seed)
        draw = _fresh_draw(pop, args.scheme, args.n, seed)
    else:
        raise ValidationError("estimate needs either --scheme-file or --scheme/--n")

    data = sample_data(pop, draw)
    if args.visibility == "passthrough":
        vis = passthrough_visibility(draw)
    else:
        if not args.smooth_basis:
            raise ValidationError("--visibility smooth needs --smooth-basis")
        columns = ["y", *aux_names]
        v_obs = data.y[:, None] if data.a is None else np.column_stack([data.y, data.a])
        vis = smoothed_visibility(draw, v_obs, _compile_basis(args.smooth_basis, columns))

    sol = maximize_ce(model, data, nu=vis, path=args.path)
    vce = sandwich_vce(sol, data, model)
    se = np.sqrt(np.clip(np.diag(vce.value), 0.0, None))
    z = float(ndtri(0.5 + _CI_LEVEL / 2.0))
    ci = [[float(t - z * s), float(t + z * s)] for t, s in zip(sol.theta_hat, se)]

    if args.dump_weights:
        with open(args.dump_weights, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "weight"])
            for i, w in zip(draw.indices, sol.weights):
                writer.writerow([int(i), repr(float(w))])

    report = {
        "model": args.model,
        "n": int(data.n),
        "path": sol.path,
        "converged": bool(sol.converged),
        "boundary": bool(sol.boundary),
        "theta_hat": [float(t) for t in sol.theta_hat],
        "kappa": [float(k) for k in sol.kappa_hat],
        "se": [float(s) for s in se],
        "ci": ci,
        "ci_level": _CI_LEVEL,
        "loglik": float(sol.loglik),
        "upsilon_hat": float(sol.upsilon_hat),
        "visibility": vis.kind,
        "scheme": draw.scheme,
        "seed": seed,
    }
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["component", "theta_hat", "se", "ci_lo", "ci_hi"])
        for j, (t, s, (lo, hi)) in enumerate(zip(sol.theta_hat, se, ci)):
            writer.writerow([j, _num(t), _num(s), _num(lo), _num(hi)])
        _emit(buf.getvalue(), args.out)
    else:
        _emit(_json_text(report), args.out)
    return 0


# ------------------------------------------------------------------ simulate


def _parse_study_config(path: str) -> dict:
    """Read a flat ``key = value`` (or ``key: value``) study description."""
    try:
        text = open(path).read()
    except OSError as exc:
        raise ValidationError(f"cannot read config file: {exc}") from None
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, val = line.partition(sep)
                break
        else:
            raise SchemaError(
                f"{path}: line {lineno}: expected 'key = value', got {line!r}",
                row=lineno,
            )
        key = key.strip().lower().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise SchemaError(
                f"{path}: line {lineno}: unknown config key '{key}' "
                f"(known: {', '.join(_CONFIG_KEYS)})",
                row=lineno, column=key,
            )
        if key in raw:
            raise SchemaError(f"{path}: line {lineno}: duplicate key '{key}'", row=lineno)
        raw[key] = val.strip()
    for key in ("schemes", "n", "reps"):
        if key not in raw:
            raise SchemaError(f"{path}: missing required config key '{key}'", column=key)
    return raw


def _config_int(raw: dict, key: str) -> int:
    try:
        return int(raw[key])
    except ValueError:
        raise SchemaError(f"config key '{key}' must be an integer, "
                          f"got {raw[key]!r}", column=key) from None


def _cmd_simulate(args) -> int:
    raw = _parse_study_config(args.config)
    pop = _load_pop(args)

    n = _config_int(raw, "n")
    reps = _config_int(raw, "reps")
    if args.seed is not None:
        seed = args.seed
    elif "seed" in raw:
        seed = _config_int(raw, "seed")
    else:
        seed = _resolve_seed(None)
    schemes = tuple(
        SchemeSpec(kind=k.strip(), n=n)
        for k in raw["schemes"].split(",") if k.strip()
    )
    kwargs = {"schemes": schemes, "n": n, "reps": reps, "seed": seed}
    if "nominal" in raw:
        try:
            kwargs["nominal"] = float(raw["nominal"])
        except ValueError:
            raise SchemaError(f"config key 'nominal' must be a number, "
                              f"got {raw['nominal']!r}", column="nominal") from None
    for key in ("estimators", "variance_methods"):
        if key in raw:
            kwargs[key] = tuple(v.strip() for v in raw[key].split(",") if v.strip())
    cfg = MCStudyConfig(**kwargs)
    model = make_model(raw.get("model", "proportion"))

    n_jobs = args.threads if args.threads else (os.cpu_count() or 1)
    report = run_study(cfg, pop, model, n_jobs=n_jobs)
    rep_dict = report.to_dict()

    if args.hist_out:
        with open(args.hist_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scheme", "estimator", "bin_lo", "bin_hi", "count"])
            for scheme, per_est in rep_dict["cells"].items():
                for name, cell in per_est.items():
                    edges = cell["hist_edges"]
                    for lo, hi, k in zip(edges[:-1], edges[1:], cell["hist_counts"]):
                        writer.writerow([scheme, name, _num(lo), _num(hi), k])

    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["scheme", "estimator", "mean_estimate", "observed_rmse",
                         "n_failed", "method", "mean_se", "coverage", "na_count", "na"])
        for scheme, per_est in rep_dict["cells"].items():
            for name, cell in per_est.items():
                for method, v in cell["variance"].items():
                    writer.writerow([
                        scheme, name,
                        "" if cell["mean_estimate"] is None else _num(cell["mean_estimate"]),
                        "" if cell["observed_rmse"] is None else _num(cell["observed_rmse"]),
                        cell["n_failed"], method,
                        "" if v["mean_se"] is None else _num(v["mean_se"]),
                        "" if v["coverage"] is None else _num(v["coverage"]),
                        v["na_count"], v["na"],
                    ])
        _emit(buf.getvalue(), args.out)
    else:
        _emit(_json_text(rep_dict), args.out)
    return 0


# -------------------------------------------------------------------- sample


def _cmd_sample(args) -> int:
    pop = _load_pop(args)
    seed = _resolve_seed(args.seed)
    draw = _fresh_draw(pop, args.scheme, args.n, seed)
    obj = _draw_to_dict(draw, pop.N, seed)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["index", "pi"])
        for i, p in zip(draw.indices, draw.pi):
            writer.writerow([int(i), repr(float(p))])
        _emit(buf.getvalue(), args.out)
    else:
        _emit(_json_text(obj), args.out)
    return 0


# ----------------------------------------------------------------- inclusion


def _cmd_inclusion(args) -> int:
    pop = _load_pop(args)
    seed = _resolve_seed(args.seed)
    if args.reps < 1:
        raise ValidationError("--reps must be at least 1")
    target = pps_first_order(pop.c, args.n)
    attained = scheme_first_order(target, args.scheme)
    spec = SchemeSpec(kind=args.scheme, n=args.n)
    rng = np.random.default_rng(seed)
    counts = np.zeros(pop.N)
    for _ in range(args.reps):
        counts[draw_scheme(target, spec, rng).indices] += 1
    emp = counts / args.reps
    dev = np.abs(emp - attained)
    max_dev = float(dev.max())

    if args.format == "json":
        rows = [
            {"unit": int(i), "target_pi": float(attained[i]),
             "empirical_pi": float(emp[i]), "abs_deviation": float(dev[i])}
            for i in range(pop.N)
        ]
        _emit(_json_text({"scheme": args.scheme, "n": args.n, "reps": args.reps,
                          "seed": seed, "max_abs_deviation": max_dev,
                          "units": rows}), args.out)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["unit", "target_pi", "empirical_pi",
                         "abs_deviation", "max_abs_deviation"])
        for i in range(pop.N):
            writer.writerow([i, _num(attained[i]), _num(emp[i]),
                             _num(dev[i]), _num(max_dev)])
        _emit(buf.getvalue(), args.out)
    return 0


# --------------------------------------------------------------------- synth


def _parse_size_law(spec: str) -> tuple:
    """Parse ``lognormal:MU,SIGMA`` / ``pareto:ALPHA,XMIN`` (or ``name(a,b)``)."""
    text = spec.strip().rstrip(")").replace("(", ":")
    name, sep, rest = text.partition(":")
    if not sep:
        raise ValidationError(
            f"size law {spec!r} must look like 'lognormal:MU,SIGMA' or 'pareto:ALPHA,XMIN'"
        )
    parts = [p.strip() for p in rest.split(",")]
    if len(parts) != 2:
        raise ValidationError(f"size law {spec!r} needs exactly two parameters")
    try:
        a, b = (float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"size law {spec!r} has non-numeric parameters") from None
    return (name.strip().lower(), a, b)


def _cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    pop = synth_population(
        args.n_units, args.prop, _parse_size_law(args.size_law),
        size_outcome_corr=args.corr, seed=seed,
    )
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([args.col_y, args.col_size])
    for i in range(pop.N):
        writer.writerow([repr(float(pop.y[i])), repr(float(pop.c[i]))])
    _emit(buf.getvalue(), args.out)
    return 0


# -------------------------------------------------------------------- parser


def _add_pop_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pop", required=True, help="population CSV with a header row")
    p.add_argument("--col-y", default="y", help="outcome column name (default: y)")
    p.add_argument("--col-size", default="c", help="size column name (default: c)")
    p.add_argument("--col-aux", "--aux", action="append", default=None,
                   metavar="COL", help="auxiliary column (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surveyel",
        description="Design-aware estimation from informatively sampled surveys.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="RNG seed; omitted -> system entropy, echoed on stderr")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for replicated studies (default: all cores)")
    common.add_argument("--out", default=None, metavar="FILE",
                        help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="output format (default depends on the subcommand)")

    sub = parser.add_subparsers(dest="cmd", required=True, metavar="SUBCOMMAND")

    p_est = sub.add_parser("estimate", parents=[common],
                           help="fit the constrained-likelihood estimator on one sample")
    _add_pop_flags(p_est)
    p_est.add_argument("--model", required=True, choices=sorted(BUILTIN_MODELS))
    p_est.add_argument("--scheme-file", default=None, metavar="FILE",
                       help="JSON draw file produced by the sample subcommand")
    p_est.add_argument("--scheme", choices=_SCHEME_CHOICES, default=None,
                       help="draw a fresh sample under this scheme instead")
    p_est.add_argument("--n", type=int, default=None, help="fresh-draw sample size")
    p_est.add_argument("--visibility", choices=("passthrough", "smooth"),
                       default="passthrough")
    p_est.add_argument("--smooth-basis", default=None, metavar="EXPRS",
                       help="comma-separated column expressions, e.g. '1,y,np.log(x)'")
    p_est.add_argument("--path", choices=("auto", "profile", "score"), default="auto")
    p_est.add_argument("--dump-weights", default=None, metavar="FILE",
                       help="also write the fitted analysis weights as CSV")

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="run a replicated design study from a config file")
    _add_pop_flags(p_sim)
    p_sim.add_argument("--config", required=True, metavar="FILE",
                       help="flat key-value study description")
    p_sim.add_argument("--hist-out", default=None, metavar="FILE.csv",
                       help="write estimate histograms as CSV")

    p_samp = sub.add_parser("sample", parents=[common],
                            help="draw one sample and save it as a JSON draw file")
    _add_pop_flags(p_samp)
    p_samp.add_argument("--scheme", required=True, choices=_SCHEME_CHOICES)
    p_samp.add_argument("--n", type=int, required=True)

    p_inc = sub.add_parser("inclusion", parents=[common],
                           help="tabulate empirical vs target inclusion probabilities")
    _add_pop_flags(p_inc)
    p_inc.add_argument("--scheme", required=True, choices=_SCHEME_CHOICES)
    p_inc.add_argument("--n", type=int, required=True)
    p_inc.add_argument("--reps", type=int, required=True)

    p_syn = sub.add_parser("synth", parents=[common],
                           help="generate a synthetic population CSV")
    p_syn.add_argument("--n-units", type=int, required=True)
    p_syn.add_argument("--prop", type=float, required=True,
                       help="target outcome proportion in [0, 1]")
    p_syn.add_argument("--size-law", default="lognormal:10,1",
                       help="'lognormal:MU,SIGMA' or 'pareto:ALPHA,XMIN'")
    p_syn.add_argument("--corr", type=float, default=0.0,
                       help="size-outcome copula correlation in (-1, 1)")
    p_syn.add_argument("--col-y", default="y")
    p_syn.add_argument("--col-size", default="c")
    return parser


_DISPATCH = {
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "sample": _cmd_sample,
    "inclusion": _cmd_inclusion,
    "synth": _cmd_synth,
}

_DEFAULT_FORMAT = {
    "estimate": "json", "simulate": "json", "sample": "json",
    "inclusion": "csv", "synth": "csv",
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return int(exc.code or 0)
    if args.format is None:
        args.format = _DEFAULT_FORMAT[args.cmd]
    try:
        return _DISPATCH[args.cmd](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
