"""Command-line surface: generate, fit, boot, cluster, classify, split,
density-grid, and replay of recorded run manifests.

Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.  Every
command writes a manifest next to its primary output; ``replay`` reruns a
manifest and reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, seeding
from .data import Dataset, extract_class_column, load_csv, save_csv, split
from .errors import MixtureError, ParseError
from .estimator import EstimatorConfig, FitResult, fit
from .inference import (
    NONPARAMETRIC,
    PARAMETRIC,
    bootstrap,
    classify,
    merge_clusters,
)
from .model import (
    GeneratorSpec,
    MixtureModel,
    generate_random_model,
    mixture_logpdf,
    model_from_dict,
    model_to_dict,
    posterior_tau,
    sample,
)
from .preprocess import HISTOGRAM, KNN, PARZEN, PREPROCESSING_MODES

_NA = "NA"  # marker for undefined metrics; never rendered as zero


# ---------------------------------------------------------------------------
# small I/O helpers
# ---------------------------------------------------------------------------

def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return _NA
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _manifest_path(primary_output: str) -> str:
    return primary_output + ".manifest.json"


def _write_manifest(command: str, args_dict: dict, primary_output: str, started: float) -> None:
    config = {k: v for k, v in args_dict.items() if k not in ("func", "command")}
    doc = {
        "command": command,
        "config": config,
        "version": __version__,
        "duration_s": round(time.time() - started, 3),
    }
    _write_json(_manifest_path(primary_output), doc)


def _fit_config(args) -> EstimatorConfig:
    grid = "auto"
    if args.K != "auto":
        grid = [int(x) for x in args.K.split(",")]
    return EstimatorConfig(
        preprocessing=args.preprocessing,
        cmax=args.cmax,
        criterion=args.criterion,
        k_grid=grid,
        y0=_parse_vector(args.y0),
        ymin=_parse_vector(args.ymin),
        ymax=_parse_vector(args.ymax),
        ar=args.ar,
        restraints=args.restraints,
    )


def _parse_vector(text):
    if text is None:
        return None
    return [float(x) for x in text.split(",")]


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preprocessing", default=HISTOGRAM, choices=PREPROCESSING_MODES)
    p.add_argument("--criterion", default="BIC")
    p.add_argument("--cmax", type=int, default=15)
    p.add_argument("--K", default="auto", help="comma-separated ints or 'auto'")
    p.add_argument("--y0", default=None, help="comma-separated origins")
    p.add_argument("--ymin", default=None, help="comma-separated minima")
    p.add_argument("--ymax", default=None, help="comma-separated maxima")
    p.add_argument("--ar", type=float, default=0.1)
    p.add_argument("--restraints", default="loose", choices=("rigid", "loose"))
    p.add_argument("--threads", type=int, default=None,
                   help="parallel workers; default MIXCRAFT_THREADS or all cores")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    started = time.time()
    spec = GeneratorSpec(
        d=args.d, c=args.c, n=args.n,
        mu_range=(args.mu[0], args.mu[1]),
        lambda_range=(args.Lambda[0], args.Lambda[1]),
        seed=args.seed,
    )
    rng = seeding.substream(args.seed, seeding.GENERATE)
    model, n_per = generate_random_model(spec, rng)
    labelled = sample(model, n_per, rng, name=os.path.splitext(os.path.basename(args.out))[0])
    save_csv(args.out, labelled.data.values)
    save_csv(args.labels, labelled.labels.reshape(-1, 1))
    _write_json(args.model_out, model_to_dict(model))
    _write_manifest("generate", vars(args), args.out, started)
    vals = labelled.data.values
    print("w:", " ".join(f"{x:.4f}" for x in model.weights))
    print("ymin:", " ".join(f"{x:.4f}" for x in vals.min(axis=0)))
    print("ymax:", " ".join(f"{x:.4f}" for x in vals.max(axis=0)))
    print(f"rows: {labelled.data.n}")
    return 0


def cmd_fit(args) -> int:
    started = time.time()
    data = load_csv(args.data, has_header=args.header)
    config = _fit_config(args)
    result = fit(data, config, threads=args.threads)
    _write_json(args.out, model_to_dict(result.model))
    s = result.summary
    with open(args.summary, "w", newline="") as fh:
        fh.write("Dataset,Preprocessing,Criterion,c,v/k,IC,logL,M\n")
        fh.write(
            f"{s['dataset']},{s['preprocessing']},{s['criterion']},{s['c']},"
            f"{s['v_or_k']},{_fmt(s['IC'])},{_fmt(s['logL'])},{s['M']}\n"
        )
    prefix = os.path.splitext(args.summary)[0]
    with open(prefix + "_opt.csv", "w", newline="") as fh:
        fh.write("c,IC,logL,D\n")
        for c, ic, logl, dd in zip(result.opt_c, result.opt_ic, result.opt_logl, result.opt_d):
            fh.write(f"{c},{_fmt(ic)},{_fmt(logl)},{_fmt(dd)}\n")
    with open(prefix + "_all.csv", "w", newline="") as fh:
        fh.write("K,IC\n")
        for k, ic in zip(result.all_k, result.all_ic):
            fh.write(f"{k},{_fmt(ic)}\n")
    _write_manifest("fit", vars(args), args.out, started)
    print(
        f"{s['dataset']}  {s['preprocessing']}  {s['criterion']}  c={s['c']}  "
        f"v/k={s['v_or_k']}  IC={s['IC']:.1f}  logL={s['logL']:.1f}  M={s['M']}"
    )
    return 0


def _fit_result_from_model(model: MixtureModel) -> FitResult:
    # boot accepts a stored model document; only .model is consulted
    return FitResult(
        model=model, summary={}, stats=None,
        opt_c=[], opt_ic=[], opt_logl=[], opt_d=[], all_k=[], all_ic=[],
    )


def cmd_boot(args) -> int:
    started = time.time()
    data = load_csv(args.data, has_header=args.header)
    model = model_from_dict(_read_json(args.model))
    config = _fit_config(args)
    rng = seeding.substream(args.seed, seeding.BOOT)
    result = bootstrap(
        _fit_result_from_model(model), data, args.mode, args.B, rng, config,
        threads=args.threads,
    )
    doc = {
        "B": result.B,
        "mode": result.mode,
        "c": result.c_all,
        "c.mode": result.c_mode,
        "c.prob": result.c_prob,
        "c.se": result.c_se,
        "c.cv": result.c_cv,
        "w.se": result.w_se.tolist(),
        "w.cv": result.w_cv.tolist(),
        "theta1.se": result.mu_se.tolist(),
        "theta1.cv": result.mu_cv.tolist(),
        "theta2.se": result.sigma_se.tolist(),
        "theta2.cv": result.sigma_cv.tolist(),
    }
    _write_json(args.out, doc)
    _write_manifest("boot", vars(args), args.out, started)
    c_aligned = " ".join(str(c) for c in result.c_all)
    print(f"c: {c_aligned}")
    print("w.cv: " + " ".join(_fmt(round(x, 4)) for x in result.w_cv))
    for l in range(result.c_mode):
        print(f"theta1.{l + 1}.cv: " + " ".join(_fmt(round(x, 4)) for x in result.mu_cv[l]))
    for l in range(result.c_mode):
        flat = result.sigma_cv[l].reshape(-1)
        print(f"theta2.{l + 1}.cv: " + " ".join(_fmt(round(x, 4)) for x in flat))
    print(f"Mode probability = {result.c_prob:g} at c = {result.c_mode} components.")
    return 0


def cmd_cluster(args) -> int:
    started = time.time()
    data = load_csv(args.data, has_header=args.header)
    model = model_from_dict(_read_json(args.model))
    truth = None
    if args.truth:
        truth = load_csv(args.truth).values[:, 0].astype(int)
    result = merge_clusters(model, data, truth=truth)
    levels = result.levels
    with open(args.out, "w", newline="") as fh:
        fh.write(",".join(f"Zp_{lev}" for lev in levels) + "\n")
        stacked = np.stack(result.zp, axis=1)
        for row in stacked:
            fh.write(",".join(str(int(x)) for x in row) + "\n")
    merge_by_level = {lev: (src, dst, ed) for lev, src, dst, ed in result.merges}
    with open(args.tree, "w", newline="") as fh:
        header = "level,from,to,EN,ED"
        if result.prob is not None:
            header += ",prob"
        fh.write(header + "\n")
        for i, lev in enumerate(levels):
            src, dst, ed = merge_by_level.get(lev, ("", "", ""))
            line = f"{lev},{src},{dst},{_fmt(result.entropy[i])},{_fmt(ed) if ed != '' else ''}"
            if result.prob is not None:
                line += f",{_fmt(result.prob[i])}"
            fh.write(line + "\n")
    _write_manifest("cluster", vars(args), args.out, started)
    if result.prob is not None:
        best = int(np.argmax(result.prob))
        print(f"copt = {levels[best]}")
        print(f"prob[copt] = {result.prob[best]:.4f}")
    else:
        print(f"levels: {levels[0]}..1")
    return 0


def cmd_classify(args) -> int:
    started = time.time()
    train_raw = load_csv(args.train, has_header=args.header)
    labelled = extract_class_column(train_raw, args.class_col)
    test = load_csv(args.test, has_header=args.header)
    truth = None
    if args.truth:
        truth = load_csv(args.truth).values[:, 0].astype(int)
    config = _fit_config(args)
    models, priors = [], []
    for label in range(1, labelled.s + 1):
        rows = labelled.data.values[labelled.labels == label]
        class_data = Dataset(rows, name=f"{labelled.data.name}_class{label}")
        models.append(fit(class_data, config, threads=args.threads).model)
        priors.append(rows.shape[0] / labelled.data.n)
    result = classify(models, priors, test, truth=truth)
    header = ["row", "Zp"] + (["Zt"] if truth is not None else [])
    with open(args.out, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i, p in enumerate(result.zp):
            cells = [str(i), str(int(p))]
            if truth is not None:
                cells.append(str(int(truth[i])))
            fh.write(",".join(cells) + "\n")
    if result.cm is not None:
        with open(args.cm, "w", newline="") as fh:
            fh.write("Test,Predictive,Frequency\n")
            s = result.s
            for pred in range(1, s + 1):
                for true in range(1, s + 1):
                    fh.write(f"{true},{pred},{result.cm[true - 1, pred - 1]}\n")
    _write_manifest("classify", vars(args), args.out, started)
    if result.error is not None:
        print(f"Error = {result.error:.4g}.")
    else:
        print(f"predicted {result.zp.size} rows over {result.s} classes")
    return 0


def cmd_split(args) -> int:
    started = time.time()
    raw = load_csv(args.data, has_header=args.header)
    labelled = extract_class_column(raw, args.class_col)
    rng = seeding.substream(args.seed, seeding.SPLIT)
    result = split(labelled, args.p, rng)
    train = result.train[0]
    save_csv(
        args.out_train,
        np.column_stack([train.labels, train.data.values]),
    )
    save_csv(
        args.out_test,
        np.column_stack([result.test_labels, result.test.values]),
    )
    _write_manifest("split", vars(args), args.out_train, started)
    print(f"train rows: {train.data.n}")
    print(f"test rows: {result.test.n}")
    return 0


def cmd_density_grid(args) -> int:
    started = time.time()
    model = model_from_dict(_read_json(args.model))
    bounds = _parse_vector(args.bounds)
    if len(bounds) == 2:
        bounds = bounds * model.d
    if len(bounds) != 2 * model.d:
        raise MixtureError(
            f"need 2 or {2 * model.d} bounds for a {model.d}-dimensional model"
        )
    res = args.resolution
    axes = []
    for i in range(model.d):
        lo, hi = bounds[2 * i], bounds[2 * i + 1]
        if res == 1:
            axes.append(np.array([(lo + hi) / 2.0]))
        else:
            axes.append(np.linspace(lo, hi, res))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    dens = np.exp(np.atleast_1d(mixture_logpdf(model, pts)))
    tau = np.atleast_2d(posterior_tau(model, pts))
    comp = np.argmax(tau, axis=1) + 1
    with open(args.out, "w", newline="") as fh:
        fh.write(",".join(f"y{i + 1}" for i in range(model.d)) + ",density,component\n")
        for row, f, l in zip(pts, dens, comp):
            fh.write(",".join(repr(float(x)) for x in row) + f",{repr(float(f))},{int(l)}\n")
    _write_manifest("density-grid", vars(args), args.out, started)
    print(f"grid points: {pts.shape[0]}")
    return 0


def cmd_replay(args) -> int:
    doc = _read_json(args.manifest)
    command = doc["command"]
    config = dict(doc["config"])
    argv = [command]
    for key, value in config.items():
        if key in ("func",):
            continue
        flag = "--" + key.replace("_", "-")
        if key == "Lambda":
            flag = "--lambda"
        if key == "K":
            flag = "--K"
        if key == "B":
            flag = "-B"
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        elif isinstance(value, list):
            argv.append(flag)
            argv.extend(str(v) for v in value)
        else:
            argv.extend([flag, str(value)])
    return main(argv)


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixcraft",
        description="Finite mixtures of multivariate normals: generation, "
        "estimation, bootstrap, clustering and classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a random mixture dataset")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mu", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    p.add_argument("--lambda", dest="Lambda", type=float, nargs=2, required=True,
                   metavar=("LO", "HI"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="estimate a mixture from a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    _add_fit_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("boot", help="bootstrap a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--mode", choices=(PARAMETRIC, NONPARAMETRIC), required=True)
    p.add_argument("-B", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_fit_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_boot)

    p = sub.add_parser("cluster", help="entropy-merge the components of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--truth", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--tree", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("classify", help="per-class fits on train data, Bayes rule on test")
    p.add_argument("--train", required=True)
    p.add_argument("--class-col", type=int, default=0)
    p.add_argument("--test", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--header", action="store_true")
    _add_fit_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--cm", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("split", help="stratified train/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--class-col", type=int, default=0)
    p.add_argument("--header", action="store_true")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("density-grid", help="tabulate mixture density over a regular grid")
    p.add_argument("--model", required=True)
    p.add_argument("--bounds", required=True,
                   help="lo,hi shared by all dimensions or lo1,hi1,lo2,hi2,...")
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_density_grid)

    p = sub.add_parser("replay", help="rerun a recorded manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MixtureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
