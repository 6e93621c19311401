"""Command-line pipeline: synth, learn, encode, train, eval."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .core import TEST, TRAIN
from .cost import compute_moments
from .encoding import SCHEMES, PcaModel
from .formats import (read_corpus, read_delimited, read_json, read_part_model, write_corpus,
                      write_delimited, write_json, write_part_model, write_solver_report)
from .initialization import InitOptions
from .metrics import AP_CONVENTION, TIE_CONVENTION, accuracy, mean_ap
from .pipeline import encode_split, labelled, learn_category, mean_descriptor_features
from .solvers import SOLVERS, GfbOptions, IsaSchedule
from .svm import SvmModel, predict, train_svm, unit_rows
from .synth import GroundTruth, SyntheticSpec, recovery_score, synth_generate

WORKERS_ENV = "PARTQAP_WORKERS"
METRICS = ("map", "acc")


def _nan_to_none(x):
    return None if x != x else x


# synth

def cmd_synth(a) -> int:
    fields = read_json(a.spec) if a.spec else {}
    for key in ("seed", "categories", "parts", "d", "n_pos", "n_test", "n_regions", "noise",
                "n_background"):
        val = getattr(a, key)
        if val is not None:
            fields[key] = val
    spec = SyntheticSpec(**fields)
    corpus, truth = synth_generate(spec)
    out = Path(a.out)
    manifest = write_corpus(corpus, out)
    write_json(out / "truth.json", truth.to_dict())
    write_json(out / "synth_spec.json", spec.to_dict())
    print(f"wrote {len(corpus.images)} images to {manifest}")
    return 0


# learn

def _isa_schedule(a) -> IsaSchedule:
    kw = {k: getattr(a, k) for k in ("beta0", "beta0_scale", "beta_rate", "inner_tol",
                                       "inner_max", "outer_max", "hard_tol", "sinkhorn_tol",
                                       "sinkhorn_max_iter") if getattr(a, k) is not None}
    if a.early_stop_outer is not None:
        kw["early_stop_outer"] = None if a.early_stop_outer < 0 else a.early_stop_outer
    return IsaSchedule(**kw)


def _gfb_options(a):
    if a.solver not in ("gfb", "gfb-rho"):
        return None
    kw = {}
    if a.rho is not None:
        kw.update(rho=a.rho)
    elif a.rho_scale is not None:
        kw.update(rho=None, rho_scale=a.rho_scale)
    if a.step_L is not None:
        kw["L"] = a.step_L
    if a.gfb_max_iter is not None:
        kw["max_iter"] = a.gfb_max_iter
    if a.residual_tol is not None:
        kw["residual_tol"] = a.residual_tol
    if a.literal_columns:
        kw["nonneg_columns"] = False
    base = GfbOptions.preset(a.solver)
    fields = {f: getattr(base, f) for f in base.__dataclass_fields__}
    fields.update(kw)
    return GfbOptions(**fields)


def _learn_job(job):
    corpus, moments, name, a, truth = job
    init = InitOptions(K=a.clusters, tau=a.tau, kmeans_restarts=a.kmeans_restarts,
                       seed=a.seed, softmax_axis=a.softmax_axis)
    res = learn_category(corpus, name, a.parts, a.solver, moments=moments, init=init,
                         isa=_isa_schedule(a), gfb=_gfb_options(a),
                         ipfp_max_iter=a.ipfp_max_iter, parts_from=a.parts_from,
                         uniform_init=a.uniform_init)
    c = corpus.category_index(name)
    ids = [im.image_id for im in corpus.positives(c)]
    summary = {"iterations": res.report.iterations, "stop_reason": res.report.stop_reason,
               "final_objective": res.report.objective_trace[-1]
               if res.report.objective_trace else None}
    if truth is not None:
        summary["recovery"] = recovery_score(res.hard, truth.for_images(ids))
    return name, ids, res, summary


def _write_category(out: Path, name, ids, res, a, summary) -> None:
    from .plotting import plot_trace
    out.mkdir(parents=True, exist_ok=True)
    write_part_model(out / "parts.json", res.parts, name,
                     {"solver": a.solver, "seed": a.seed, "parts_from": a.parts_from})
    write_solver_report(out / "report.json", res.report, timing=not a.no_timing)
    if res.init_report is not None:
        write_json(out / "init.json", res.init_report)
    rep = res.report.to_dict(timing=False)
    write_delimited(out / "trace.csv", ["iteration", "objective", "constraint_residual"],
                    [[k + 1, o, r] for k, (o, r) in enumerate(zip(rep["objective_trace"],
                                                               rep["constraint_residuals"]))])
    R = res.hard.block
    rows = []
    for i, image_id in enumerate(ids):
        block = res.hard.values[:, i * R:(i + 1) * R]
        for p in range(block.shape[0]):
            rows.append([image_id, p, int(np.argmax(block[p]))])
    write_delimited(out / "assignments.csv", ["image_id", "part", "region"], rows)
    plot_trace(rep, out / "trace.png", f"{name}: {a.solver}")
    write_json(out / "summary.json", summary)


def _workers(a) -> int:
    if a.workers is not None:
        return max(1, a.workers)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def cmd_learn(a) -> int:
    corpus = read_corpus(a.corpus)
    names = a.category or list(corpus.categories)
    moments = compute_moments(corpus, lam=a.ridge, normalization=a.normalization)
    truth = GroundTruth.from_dict(read_json(a.truth)) if a.truth else None
    jobs = [(corpus, moments, n, a, truth) for n in names]
    workers = min(_workers(a), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_learn_job, jobs))
    else:
        results = [_learn_job(j) for j in jobs]
    out = Path(a.out)
    summaries = {}
    for name, ids, res, summary in results:
        _write_category(out / name, name, ids, res, a, summary)
        summaries[name] = summary
        line = f"{name}: {summary['stop_reason']} after {summary['iterations']} iterations"
        if "recovery" in summary:
            line += f", recovery {summary['recovery']:.4f}"
        print(line)
    write_json(out / "learn.json", {"solver": a.solver, "parts": a.parts, "seed": a.seed,
                                    "ridge": moments.lam, "normalization": a.normalization,
                                    "categories": summaries})
    return 0


# encode

def cmd_encode(a) -> int:
    corpus = read_corpus(a.corpus)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"scheme": a.scheme, "categories": list(corpus.categories), "pca": None}
    if a.scheme == "mean":
        train, test = labelled(corpus.split(TRAIN)), labelled(corpus.split(TEST))
        Xtr, Xte = mean_descriptor_features(train), mean_descriptor_features(test)
    else:
        if a.model is None:
            parser().error("encode: --model is required for part-based schemes")
        model_dir = Path(a.model)
        models = [read_part_model(model_dir / name / "parts.json") for name in corpus.categories]
        pca = PcaModel.from_dict(read_json(a.pca)) if a.pca else None
        train, Xtr, test, Xte, pca = encode_split(corpus, models, a.scheme, a.pca_dim, pca)
        if pca is not None:
            write_json(out / "pca.json", pca.to_dict())
            meta["pca"] = "pca.json"
    meta["dimension"] = int(Xtr.shape[1])
    for split, ims, X in (("train", train, Xtr), ("test", test, Xte)):
        header = ["image_id", "label"] + [f"f{j}" for j in range(X.shape[1])]
        rows = [[im.image_id, corpus.categories[im.label], *map(float, x)]
                for im, x in zip(ims, X)]
        write_delimited(out / f"{split}.csv", header, rows)
        meta[f"n_{split}"] = len(ims)
    write_json(out / "encoding.json", meta)
    print(f"{a.scheme}: {meta['n_train']} train / {meta['n_test']} test signatures"
          f" of dimension {meta['dimension']}")
    return 0


def _read_signatures(path):
    _, rows = read_delimited(path)
    ids = [r[0] for r in rows]
    labels = np.array([r[1] for r in rows])
    X = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), -1)
    return ids, labels, X


# train

def cmd_train(a) -> int:
    enc = Path(a.encodings)
    _, labels, X = _read_signatures(enc / "train.csv")
    if not a.no_normalize:
        X = unit_rows(X)
    model = train_svm(X, labels, C=a.c, tol=a.tol, seed=a.seed)
    obj = model.to_dict()
    obj.update(normalize=not a.no_normalize, tol=a.tol,
               scheme=read_json(enc / "encoding.json")["scheme"])
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, obj)
    print(f"trained {len(model.classes)} one-vs-rest classifiers on {X.shape[0]} signatures")
    return 0


# eval

def cmd_eval(a) -> int:
    from .plotting import plot_ap, plot_confusion, plot_traces
    metrics = [m.strip() for m in a.metrics.split(",") if m.strip()]
    bad = sorted(set(metrics) - set(METRICS))
    if bad:
        parser().error(f"eval: unknown metrics {bad}; choose from {list(METRICS)}")
    enc = Path(a.encodings)
    ids, labels, X = _read_signatures(enc / "test.csv")
    obj = read_json(a.svm)
    model = SvmModel.from_dict(obj)
    if obj.get("normalize", True):
        X = unit_rows(X)
    scores = predict(model, X)
    classes = [str(c) for c in model.classes]
    pred = model.classes[np.argmax(scores, axis=1)]
    report = {"scheme": obj.get("scheme"), "n_test": len(ids), "classes": classes,
              "svm": {"C": model.C, "normalize": obj.get("normalize", True)},
              "conventions": {"average_precision": AP_CONVENTION, "ties": TIE_CONVENTION,
                              "prediction": "argmax of one-vs-rest decision values,"
                                            " first class on ties"},
              "metrics": {}}
    if "acc" in metrics:
        report["metrics"]["acc"] = accuracy(pred, labels)
    if "map" in metrics:
        m, aps = mean_ap(scores, labels, model.classes)
        report["metrics"]["map"] = m
        report["per_class_ap"] = {c: _nan_to_none(ap) for c, ap in zip(classes, aps)}
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if a.model:
        traces = {}
        for c in classes:
            p = Path(a.model) / c / "report.json"
            if p.exists():
                rep = read_json(p)
                rep.pop("wall_time", None)
                traces[c] = rep
        report["solver_traces"] = traces
        if traces:
            plot_traces(traces, out / "traces.png")
    write_json(out / "report.json", report)
    write_delimited(out / "predictions.csv",
                    ["image_id", "label", "predicted"] + [f"score_{c}" for c in classes],
                    [[i, l, p, *map(float, s)] for i, l, p, s in zip(ids, labels, pred, scores)])
    if "map" in metrics:
        plot_ap(classes, [report["per_class_ap"][c] or float("nan") for c in classes],
                out / "ap.png")
    conf = np.zeros((len(classes), len(classes)), dtype=int)
    index = {c: k for k, c in enumerate(classes)}
    for l, p in zip(labels, pred):
        if l in index:
            conf[index[l], index[str(p)]] += 1
    plot_confusion(conf, classes, out / "confusion.png")
    print(" ".join(f"{k}={v:.4f}" for k, v in report["metrics"].items()))
    return 0


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partqap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a planted-parts corpus")
    s.add_argument("--spec", help="JSON file of SyntheticSpec fields")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--categories", type=int)
    s.add_argument("--parts", type=int)
    s.add_argument("--d", type=int)
    s.add_argument("--n-pos", dest="n_pos", type=int)
    s.add_argument("--n-test", dest="n_test", type=int)
    s.add_argument("--n-regions", dest="n_regions", type=int)
    s.add_argument("--n-background", dest="n_background", type=int)
    s.add_argument("--noise", type=float)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("learn", help="learn part models, one directory per category")
    s.add_argument("--corpus", required=True, help="manifest.json")
    s.add_argument("--category", action="append", help="repeatable; default all")
    s.add_argument("--parts", type=int, required=True)
    s.add_argument("--solver", choices=SOLVERS, default="isa")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="truth.json from synth, adds recovery scores")
    s.add_argument("--workers", type=int, help=f"default ${WORKERS_ENV} or 1")
    s.add_argument("--no-timing", action="store_true", help="omit wall_time from reports")
    s.add_argument("--ridge", type=float, help="covariance ridge (default data-scaled)")
    s.add_argument("--normalization", choices=("regions", "images"), default="regions")
    s.add_argument("--parts-from", choices=("solver", "hard"), default="solver")
    g = s.add_argument_group("initialization")
    g.add_argument("--clusters", type=int, help="k-means K (default 5 P)")
    g.add_argument("--tau", type=float, default=1.0)
    g.add_argument("--kmeans-restarts", type=int, default=3)
    g.add_argument("--softmax-axis", choices=("regions", "parts"), default="regions")
    g.add_argument("--uniform-init", action="store_true")
    g = s.add_argument_group("ipfp")
    g.add_argument("--ipfp-max-iter", type=int, default=100)
    g = s.add_argument_group("isa")
    g.add_argument("--beta0", type=float)
    g.add_argument("--beta0-scale", type=float)
    g.add_argument("--beta-rate", type=float)
    g.add_argument("--inner-tol", type=float)
    g.add_argument("--inner-max", type=int)
    g.add_argument("--outer-max", type=int)
    g.add_argument("--early-stop-outer", type=int, help="negative disables")
    g.add_argument("--hard-tol", type=float)
    g.add_argument("--sinkhorn-tol", type=float)
    g.add_argument("--sinkhorn-max-iter", type=int)
    g = s.add_argument_group("gfb")
    g.add_argument("--rho", type=float, help="absolute rho")
    g.add_argument("--rho-scale", type=float, help="rho as a multiple of ||A||")
    g.add_argument("--step-L", dest="step_L", type=float, help="step 1/L (default ||A||/10)")
    g.add_argument("--gfb-max-iter", type=int)
    g.add_argument("--residual-tol", type=float)
    g.add_argument("--literal-columns", action="store_true",
                   help="column projection onto {sum <= 1} without the sign bound")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("encode", help="image signatures of the labelled train/test images")
    s.add_argument("--corpus", required=True)
    s.add_argument("--model", help="directory written by learn")
    s.add_argument("--scheme", choices=SCHEMES + ("mean",), default="bop")
    s.add_argument("--pca-dim", type=int, default=256)
    s.add_argument("--pca", help="reuse a fitted pca.json")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("train", help="one-vs-rest linear SVM")
    s.add_argument("--encodings", required=True)
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-normalize", action="store_true")
    s.add_argument("--out", required=True, help="svm.json")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="metrics, predictions and figures on the test split")
    s.add_argument("--encodings", required=True)
    s.add_argument("--svm", required=True)
    s.add_argument("--metrics", default="map,acc")
    s.add_argument("--model", help="learn directory; embeds solver traces")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"partqap {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
