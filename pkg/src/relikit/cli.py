"""Command-line front end.

Subcommands: ``fit``, ``kappa``, ``loo``, ``simulate``, ``study``,
``report`` and ``print-config``. Exit codes are 0 on success, 1 for usage
and input errors, 2 for numerical or sampler failures. Every command that
writes an output directory also writes ``manifest.json`` there with the
full configuration, seed, version, wall time and input file digests.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .agreement import METHODS, interrater_kappa, intrarater_kappa
from .data import load_csv, validate, write_csv
from .diagnostics import diagnostics
from .errors import DegenerateAgreement, InputError, NumericalError, RelikitError
from .loo import psis_loo, pointwise_loglik, select_model
from .model import KINDS, LINKS, STRUCTURES, Hyperparameters, ModelSpec, PriorConfig
from .posterior import posterior_predictive_kappa, summarize, table1_layout
from .sampler import SamplerConfig, attach_model, read_draws_csv, resolve_seed, sample, write_draws_csv
from .sim import REFERENCES, ScenarioConfig, run_study, simulate_dataset, table1_hyper, true_kappa

log = logging.getLogger("relikit")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2
MODEL_NAMES = {"bin": "IN", "in": "IN", "bpn": "PN", "pn": "PN", "bfn": "FN", "fn": "FN"}
DISPLAY = {"IN": "BIN", "PN": "BPN", "FN": "BFN"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


class UsageError(InputError):
    pass


def _model_kind(text):
    try:
        return MODEL_NAMES[text.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown model {text!r}; choose bin, bpn or bfn") from None


# -- JSON / files -------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _dump(obj, path=None):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out, command, config, seed, inputs=(), start=None):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "wall_time_seconds": None if start is None else round(time.perf_counter() - start, 3),
        "inputs": {str(p): _digest(p) for p in inputs},
    }
    _dump(manifest, Path(out) / "manifest.json")
    return manifest


def _render(headers, rows):
    cells = [[str(h) for h in headers]] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[c]) for r in cells) for c in range(len(headers))]
    lines = ["  ".join(v.rjust(w) if i else v.ljust(w) for i, (v, w) in enumerate(zip(r, widths))) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(v):
    if v is None:
        return "--"
    if isinstance(v, float):
        return "--" if not math.isfinite(v) else f"{v:.3f}"
    return str(v)


# -- shared flags ---------------------------------------------------------------


def _threads(args):
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("RELIKIT_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise UsageError(f"RELIKIT_THREADS must be an integer, got {env!r}") from None


def _add_common(p):
    p.add_argument("--seed", type=int, help="master seed (drawn from entropy and recorded if omitted)")
    p.add_argument("--threads", type=int, help="worker processes (default: $RELIKIT_THREADS or 1)")


def _add_spec_flags(p, require_model=True):
    pr = PriorConfig()
    g = p.add_argument_group("model")
    g.add_argument("--model", type=_model_kind, required=require_model, help="bin, bpn or bfn")
    g.add_argument("--link", choices=LINKS, default="logit")
    g.add_argument("--cov-R", dest="cov_R_str", choices=STRUCTURES, default="common",
                   help="rater covariance structure (FN)")
    g.add_argument("--cov-T", dest="cov_T_str", choices=STRUCTURES, default="common",
                   help="time covariance structure (PN, FN)")
    g.add_argument("--fixed-eff-intercept", action=argparse.BooleanOptionalAction, default=True)
    g.add_argument("--time-coding", choices=("none", "reference"),
                   help="time indicators in the design (default: reference for bpn, none otherwise)")
    g.add_argument("--gamma-a", type=float, default=pr.gamma_a, help="inverse-gamma shape for variances")
    g.add_argument("--gamma-b", type=float, default=pr.gamma_b, help="inverse-gamma scale for variances")
    g.add_argument("--beta-mean", type=float, default=pr.beta_mean)
    g.add_argument("--beta-sigma", type=float, default=pr.beta_sigma, help="prior sd of fixed effects")
    g.add_argument("--rho-prior", choices=("lkj", "beta"), default=pr.rho_prior)
    g.add_argument("--rho-R-eta", type=float, default=pr.rho_R_eta)
    g.add_argument("--rho-T-eta", type=float, default=pr.rho_T_eta)
    g.add_argument("--beta-a", type=float, default=pr.beta_a, help="Beta prior shape a for (rho + 1) / 2")
    g.add_argument("--beta-b", type=float, default=pr.beta_b, help="Beta prior shape b for (rho + 1) / 2")


def _add_sampler_flags(p):
    d = SamplerConfig()
    g = p.add_argument_group("sampler")
    g.add_argument("--niters", type=int, default=d.niters, help="post-warmup draws per chain")
    g.add_argument("--nwarmup", type=int, default=d.nwarmup)
    g.add_argument("--nchains", type=int, default=d.nchains)
    g.add_argument("--target-accept", type=float, default=d.target_accept)
    g.add_argument("--max-tree-depth", type=int, default=d.max_tree_depth)


def _spec(args):
    cfg = {
        "model": args.model or "IN",
        "link": args.link,
        "cov_R_str": args.cov_R_str,
        "cov_T_str": args.cov_T_str,
        "fixed_eff_intercept": args.fixed_eff_intercept,
        "time_coding": args.time_coding,
    }
    cfg.update({f.name: getattr(args, f.name) for f in fields(PriorConfig)})
    try:
        return ModelSpec.from_config(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sampler(args, seed):
    try:
        return SamplerConfig(
            niters=args.niters,
            nwarmup=args.nwarmup,
            nchains=args.nchains,
            seed=seed,
            target_accept=args.target_accept,
            max_tree_depth=args.max_tree_depth,
            threads=_threads(args),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sampler_dict(sc):
    d = asdict(sc)
    d.pop("threads")
    return d


def _warn_short_warmup(n):
    if n < 500:
        log.warning("nwarmup=%d is short; adaptation may be unreliable (consider >= 500)", n)


# -- fit ------------------------------------------------------------------------


def _frequentist(table):
    out = {}
    for mode, fn, ok in (("interrater", interrater_kappa, table.J >= 2), ("intrarater", intrarater_kappa, table.K >= 2)):
        if not ok:
            continue
        try:
            out[mode] = fn(table, "conger").to_dict()
        except DegenerateAgreement as exc:
            out[mode] = {"kappa": None, "error": str(exc)}
    return out


def cmd_fit(args):
    start = time.perf_counter()
    spec = _spec(args)
    seed = resolve_seed(args.seed)
    sc = _sampler(args, seed)
    config = {"model": spec.to_config(), "sampler": _sampler_dict(sc), "ppk_draws": args.ppk_draws,
              "keep_draws": args.keep_draws}
    if args.print_config:
        _dump(config)
        return EXIT_OK
    if args.data is None:
        raise UsageError("fit needs a data file")
    if args.out is None:
        raise UsageError("fit needs an output directory (-o)")
    _warn_short_warmup(sc.nwarmup)
    table = load_csv(args.data)
    draws = sample(spec, table, sc)
    out = _outdir(args.out)
    write_draws_csv(draws, out / "draws.csv")

    diag = diagnostics(draws).to_dict()
    diag.update(
        seed=seed,
        stepsize=draws.stepsize,
        divergences_per_chain=draws.divergence_count,
        mean_tree_depth=float(draws.tree_depth.mean()),
        mean_leapfrog_steps=float(draws.n_leapfrog.mean()),
    )
    _dump(diag, out / "diagnostics.json")

    loo = None
    if draws.ndraws >= 100:
        loo = psis_loo(pointwise_loglik(spec, draws, table))
        _dump(loo.to_dict(pointwise=True), out / "loo.json")
    else:
        log.warning("fewer than 100 draws; LOO skipped")

    summary = summarize(draws)
    summary.write_csv(out / "summary.csv")
    summary.write_json(out / "summary.json")
    t1 = table1_layout(summary, loo)
    with open(out / "table1.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", DISPLAY[spec.kind]])
        for label, value in t1:
            w.writerow([label, repr(value)])

    pp = posterior_predictive_kappa(spec, draws, seed=seed, max_draws=args.ppk_draws)
    kappa = {"model": DISPLAY[spec.kind], "posterior_predictive": pp.to_dict(keep_draws=args.keep_draws),
             "frequentist": _frequentist(table)}
    _dump(kappa, out / "kappa.json")
    write_manifest(out, "fit", config, seed, [args.data], start)

    print(_render(["parameter", DISPLAY[spec.kind]], t1))
    print(_render(["kappa", "mean", "2.5%", "97.5%"], [
        (mode, d["mean"], d["lower"], d["upper"])
        for mode, d in (("inter", pp.to_dict()["interrater"]), ("intra", pp.to_dict()["intrarater"]))
    ]))
    if diag["n_divergent"]:
        print(f"{diag['n_divergent']} divergent transitions after warmup", file=sys.stderr)
    return EXIT_OK


# -- kappa ----------------------------------------------------------------------


def cmd_kappa(args):
    start = time.perf_counter()
    table = load_csv(args.data)
    modes = ["interrater", "intrarater"] if args.mode == "both" else [args.mode]
    results = []
    for mode in modes:
        fn = interrater_kappa if mode == "interrater" else intrarater_kappa
        results.append(fn(table, args.method).to_dict())
    for r in results:
        print(json.dumps(_jsonable(r), sort_keys=True))
    if args.out:
        out = _outdir(args.out)
        _dump(results, out / "kappa.json")
        write_manifest(out, "kappa", {"mode": args.mode, "method": args.method}, args.seed, [args.data], start)
    return EXIT_OK


# -- loo ------------------------------------------------------------------------


def _parse_looic(items):
    fits = []
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--looic expects MODEL=VALUE, got {item!r}")
        try:
            fits.append((_model_kind(name), float(value)))
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None
    return fits


def cmd_loo(args):
    start = time.perf_counter()
    fits = _parse_looic(args.looic)
    result = {}
    inputs = []
    if args.draws is not None:
        if args.data is None or args.model is None:
            raise UsageError("loo on a draws file needs DATA and --model")
        spec = _spec(args)
        table = load_csv(args.data)
        draws = attach_model(read_draws_csv(args.draws), spec, table)
        loo = psis_loo(pointwise_loglik(spec, draws, table))
        result["loo"] = loo.to_dict()
        fits.append((spec.kind, loo.looic))
        inputs = [args.draws, args.data]
    elif not fits:
        raise UsageError("give a draws file and data, or --looic MODEL=VALUE pairs")
    if len(fits) >= 2:
        result["looic"] = {DISPLAY[k]: v for k, v in fits}
        result["selected"] = DISPLAY[select_model(fits)]
    _dump(result)
    if args.out:
        out = _outdir(args.out)
        _dump(result, out / "loo.json")
        config = {"model": _spec(args).to_config() if args.model else None, "looic": args.looic or []}
        write_manifest(out, "loo", config, args.seed, inputs, start)
    return EXIT_OK


# -- simulate -------------------------------------------------------------------


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _hyper_from_args(args, kind, reference):
    base = table1_hyper(reference, kind) if reference in REFERENCES else None
    vals = {}
    for name in ("sigma_u", "sigma_v", "sigma_w", "rho_R", "rho_T"):
        given = getattr(args, name, None)
        if given is not None:
            vals[name] = given
        elif base is not None and getattr(base, name) is not None:
            vals[name] = getattr(base, name)
    if "sigma_u" not in vals or "sigma_v" not in vals:
        raise UsageError("custom scenarios need --sigma-u and --sigma-v")
    return Hyperparameters(**vals)


def cmd_simulate(args):
    start = time.perf_counter()
    seed = resolve_seed(args.seed)
    if args.config:
        cfg = ScenarioConfig.from_dict({**_load_json(args.config), "seed": seed})
    else:
        kind = args.model or "IN"
        reference = args.reference
        dims = tuple(args.dims) if args.dims else None
        if reference == "custom" and dims is None:
            raise UsageError("--reference custom needs --dims I J K")
        cfg = ScenarioConfig(reference=reference, sim_kind=kind, hyper=_hyper_from_args(args, kind, reference),
                             dims=dims, seed=seed, link=args.link, intercept=args.intercept,
                             true_kappa_reps=max(args.true_kappa_reps, 1))
    out = _outdir(args.out)
    table = simulate_dataset(cfg.sim_kind, cfg.hyper, cfg.dims, cfg.resolved_intercept, seed, cfg.link)
    write_csv(table, out / "data.csv")
    truth = {"scenario": cfg.to_dict(), "intercept": cfg.resolved_intercept, "design": asdict(validate(table))}
    if args.true_kappa_reps > 0:
        inter, intra = true_kappa(cfg.sim_kind, cfg.hyper, cfg.dims, args.true_kappa_reps, cfg.true_kappa_seed(),
                                  cfg.resolved_intercept, cfg.link)
        truth["true_kappa"] = {"inter": inter, "intra": intra, "reps": args.true_kappa_reps}
    truth["design"].pop("missing_cells")
    _dump(truth, out / "truth.json")
    write_manifest(out, "simulate", {**cfg.to_dict(), "true_kappa_reps": args.true_kappa_reps}, seed, [], start)
    print(out / "data.csv")
    return EXIT_OK


# -- study ----------------------------------------------------------------------


def _study_configs(args, seed):
    overrides = {}
    if args.paper_scale:
        overrides.update(n_replicates=148, true_kappa_reps=10000)
    else:
        if args.n_replicates is not None:
            overrides["n_replicates"] = args.n_replicates
        if args.true_kappa_reps is not None:
            overrides["true_kappa_reps"] = args.true_kappa_reps
    if args.ppk_draws is not None:
        overrides["ppk_draws"] = args.ppk_draws if args.ppk_draws > 0 else None
    if args.config:
        raw = _load_json(args.config)
        items = raw["scenarios"] if isinstance(raw, dict) else raw
        return [ScenarioConfig.from_dict({**item, "seed": seed, **overrides}) for item in items]
    return [ScenarioConfig(reference=ref, sim_kind=kind, seed=seed, **overrides)
            for ref in args.reference for kind in args.sim_kind]


def _selection_csv(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["reference", "sim_model", "BIN", "BPN", "BFN", "n_ok", "n_failed"])
        for s in result.scenarios.values():
            p = s.selection_proportions
            w.writerow([s.reference, s.sim_kind, *(repr(p[k]) for k in KINDS), s.n_ok, s.n_failed])


def _kappa_csv(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["reference", "sim_model", "kappa", "true", "estimator", "mean", "rmse", "n"])
        for ref, kind, mode, true, est, mean, rmse, n in result.kappa_rows():
            est = DISPLAY.get(est, est)
            w.writerow([ref, kind, mode, repr(true), est, "" if mean is None else repr(mean),
                        "" if rmse is None else repr(rmse), n])


def cmd_study(args):
    start = time.perf_counter()
    out = _outdir(args.out)
    manifest_path = out / "manifest.json"
    previous = _load_json(manifest_path) if manifest_path.exists() else None
    seed = args.seed
    if seed is None and previous is not None:
        seed = previous["seed"]
    seed = resolve_seed(seed)
    configs = _study_configs(args, seed)
    sc = _sampler(args, seed)
    config = {"scenarios": [c.to_dict() for c in configs], "sampler": _sampler_dict(sc)}
    if args.print_config:
        _dump(config)
        return EXIT_OK
    _warn_short_warmup(sc.nwarmup)
    if previous is not None and _jsonable(previous.get("config")) != _jsonable(config):
        raise UsageError(f"{out} holds a study with a different configuration; use a new output directory")
    write_manifest(out, "study", config, seed)

    def progress(rec):
        msg = rec.get("selected") if rec["status"] == "ok" else rec.get("error")
        print(f"{rec['scenario']} replicate {rec['replicate']}: {msg}", file=sys.stderr, flush=True)

    result = run_study(configs, sc, checkpoint=out / "replicates.jsonl", threads=_threads(args), progress=progress)
    _dump(result.to_dict(), out / "study.json")
    _selection_csv(result, out / "selection.csv")
    _kappa_csv(result, out / "kappa.csv")
    write_manifest(out, "study", config, seed, [], start)
    print(render_study(result.to_dict()))
    return EXIT_OK


# -- report ---------------------------------------------------------------------


def render_study(study):
    sel = [(s["reference"], s["sim_kind"], *(s["selection_proportions"][k] for k in KINDS), s["n_ok"], s["n_failed"])
           for s in study.values()]
    text = ["Selection proportions (LOOIC)", _render(["reference", "sim", "BIN", "BPN", "BFN", "ok", "failed"], sel), ""]
    rows = []
    for s in study.values():
        for mode in ("inter", "intra"):
            cells = []
            for est in ("freq", "IN", "PN", "FN", "LOO"):
                e = s["kappa"][est][mode]
                cells.append("--" if e["mean"] is None else f"{e['mean']:.3f} ({e['rmse']:.3f})")
            rows.append((s["reference"], s["sim_kind"], mode, s["true_kappa"][mode], *cells))
    text += ["Kappa mean (RMSE)", _render(["reference", "sim", "kappa", "true", "Freq", "BIN", "BPN", "BFN", "LOO"], rows)]
    return "\n".join(text)


def cmd_report(args):
    table1, table2, blocks = {}, [], []
    for d in map(Path, args.dirs):
        if not d.is_dir():
            raise InputError(f"{d} is not a directory")
        if (d / "table1.csv").exists():
            with open(d / "table1.csv", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
            col = f"{rows[0][1]} ({d.name})"
            table1[col] = {label: float(v) for label, v in rows[1:]}
        if (d / "kappa.json").exists():
            k = _load_json(d / "kappa.json")
            if isinstance(k, dict) and "posterior_predictive" in k:
                pp, fq = k["posterior_predictive"], k["frequentist"]
                table2.append((d.name, "Freq", fq.get("interrater", {}).get("kappa"), fq.get("intrarater", {}).get("kappa")))
                table2.append((d.name, k["model"], pp["interrater"]["mean"], pp["intrarater"]["mean"]))
        if (d / "study.json").exists():
            blocks.append(render_study(_load_json(d / "study.json")))
    if not (table1 or table2 or blocks):
        raise InputError("no fit or study outputs found")
    if table1:
        labels = []
        for col in table1.values():
            labels += [lab for lab in col if lab not in labels]
        print("Posterior means, p_LOO and LOOIC")
        print(_render(["parameter", *table1], [(lab, *(c.get(lab) for c in table1.values())) for lab in labels]))
        print()
    if table2:
        print("Conger kappa")
        print(_render(["run", "estimator", "inter", "intra"], table2))
        print()
    for b in blocks:
        print(b)
        print()
    return EXIT_OK


# -- print-config -----------------------------------------------------------------


def cmd_print_config(args):
    if args.command_name == "study":
        _dump({"scenarios": [ScenarioConfig(reference=r, sim_kind=k).to_dict() for r in REFERENCES for k in KINDS],
               "sampler": _sampler_dict(SamplerConfig())})
    elif args.command_name == "simulate":
        _dump(ScenarioConfig().to_dict())
    else:
        _dump({"model": ModelSpec(kind=args.model or "IN").to_config(), "sampler": _sampler_dict(SamplerConfig())})
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="relikit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"relikit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a Bayesian model to a ratings CSV")
    p.add_argument("data", nargs="?", help="long-format CSV (subject, rater, time, y)")
    p.add_argument("-o", "--out", help="output directory")
    _add_spec_flags(p)
    _add_sampler_flags(p)
    _add_common(p)
    p.add_argument("--ppk-draws", type=int, default=None, help="thin posterior-predictive kappa to this many draws")
    p.add_argument("--keep-draws", action="store_true", help="store per-draw kappa values")
    p.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("kappa", help="frequentist agreement coefficients")
    p.add_argument("data")
    p.add_argument("--mode", choices=("interrater", "intrarater", "both"), default="both")
    p.add_argument("--method", choices=METHODS, default="conger")
    p.add_argument("-o", "--out")
    _add_common(p)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("loo", help="PSIS-LOO for a draws file and model comparison")
    p.add_argument("draws", nargs="?", help="draws CSV written by 'fit'")
    p.add_argument("data", nargs="?")
    _add_spec_flags(p, require_model=False)
    p.add_argument("--looic", action="append", metavar="MODEL=VALUE", help="add a fit to compare (repeatable)")
    p.add_argument("-o", "--out")
    _add_common(p)
    p.set_defaults(func=cmd_loo)

    p = sub.add_parser("simulate", help="simulate one dataset")
    p.add_argument("--config", help="scenario JSON")
    p.add_argument("--model", type=_model_kind, help="generating model (default bin)")
    p.add_argument("--reference", choices=(*REFERENCES, "custom"), default="gait")
    p.add_argument("--dims", type=int, nargs=3, metavar=("I", "J", "K"))
    p.add_argument("--sigma-u", type=float)
    p.add_argument("--sigma-v", type=float, nargs="+")
    p.add_argument("--sigma-w", type=float, nargs="+")
    p.add_argument("--rho-R", type=float)
    p.add_argument("--rho-T", type=float)
    p.add_argument("--intercept", type=float, help="default: marginal success probability 0.5")
    p.add_argument("--link", choices=LINKS, default="logit")
    p.add_argument("--true-kappa-reps", type=int, default=0, help="also estimate the true kappa")
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="simulation study of model selection and kappa estimation")
    p.add_argument("--config", help="JSON list of scenarios (or {'scenarios': [...]})")
    p.add_argument("--reference", nargs="+", choices=tuple(REFERENCES), default=list(REFERENCES))
    p.add_argument("--sim-kind", nargs="+", type=_model_kind, default=list(KINDS))
    p.add_argument("--n-replicates", type=int)
    p.add_argument("--true-kappa-reps", type=int)
    p.add_argument("--ppk-draws", type=int, help="posterior draws per posterior-predictive kappa (0 = all)")
    p.add_argument("--paper-scale", action="store_true", help="148 replicates and 10000 true-kappa datasets")
    p.add_argument("--print-config", action="store_true")
    p.add_argument("-o", "--out", required=True)
    _add_sampler_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("report", help="render Table-shaped text from output directories")
    p.add_argument("dirs", nargs="+")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("print-config", help="print default configurations")
    p.add_argument("command_name", nargs="?", choices=("fit", "simulate", "study"), default="fit")
    p.add_argument("--model", type=_model_kind)
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="relikit: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"relikit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, DegenerateAgreement) as exc:
        print(f"relikit: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RelikitError, OSError, ValueError) as exc:
        print(f"relikit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
