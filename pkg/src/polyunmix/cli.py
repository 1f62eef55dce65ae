"""Command-line front end.

Exit codes: 0 success, 1 runtime failure in a pipeline stage, 2 usage or
validation error.
"""
import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io, metrics, synth
from .cluster import ClassificationMap
from .config import ConfigError, RunConfig
from .errors import BundleError, UnmixingError
from .pipeline import cluster, preprocess, run

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class StageFailure(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"{stage} failed: {exc}")
        self.stage = stage


def _fail(msg, code):
    print(f"polyunmix: {msg}", file=sys.stderr)
    return code


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


AUTO = "auto"


def _auto_float(text):
    return AUTO if text == AUTO else float(text)


def _add_run_flags(p):
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("-m", "--materials", type=int, dest="num_materials")
    p.add_argument("--sphere", action=argparse.BooleanOptionalAction, default=None,
                   dest="sphere_normalize", help="unit-sphere luminance normalization (default on)")
    p.add_argument("--reduce", action=argparse.BooleanOptionalAction, default=None,
                   help="uncentered PCA reduction (default on)")
    p.add_argument("--pca-dim", type=int, help="reduced dimension (default: m)")
    p.add_argument("--method", choices=["gmm", "kmeans", "external"], dest="cluster_method")
    p.add_argument("--labels", help="external label map (.csv or .npy); implies --method external")
    p.add_argument("--cluster-fraction", type=float)
    p.add_argument("--cluster-seed", type=int)
    p.add_argument("--svm-c", type=float)
    p.add_argument("--svm-fraction", type=float)
    p.add_argument("--svm-seed", type=int)
    p.add_argument("--saturation", type=_auto_float, help="positive number or 'auto'")
    p.add_argument("--lambda", type=_auto_float, dest="lam", help="nonnegative number or 'auto'")
    p.add_argument("--tikhonov-fallback", action="store_true", default=None)
    p.add_argument("--simplex-abundances", action="store_true", default=None)


def _resolve_config(args):
    base = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    keys = ("num_materials", "sphere_normalize", "reduce", "pca_dim", "cluster_method", "labels",
            "cluster_fraction", "cluster_seed", "svm_c", "svm_fraction", "svm_seed",
            "saturation", "lam", "tikhonov_fallback", "simplex_abundances")
    overrides = {k: getattr(args, k, None) for k in keys}
    # an explicit "auto" flag clears a numeric value coming from the file
    for key in ("saturation", "lam"):
        if overrides[key] == AUTO:
            setattr(base, key, None)
            overrides[key] = None
    if overrides["labels"] and not overrides["cluster_method"]:
        overrides["cluster_method"] = "external"
    overrides["input"] = getattr(args, "bundle", None)
    overrides["output"] = getattr(args, "out", None)
    return base.updated(**overrides).validate()


def _load_input(path):
    if not Path(path).is_dir():
        raise ConfigError(f"input directory not found: {path}")
    return io.load_bundle(path)


def _resolve_m(config, bundle_dir, gt, labels_path):
    if config.num_materials:
        return config.num_materials
    header = json.loads((Path(bundle_dir) / "header.json").read_text())
    if header.get("num_materials"):
        return int(header["num_materials"])
    if gt is not None:
        return gt.m
    if labels_path:
        return len(np.unique(io.load_labels(labels_path).labels))
    raise ConfigError("number of materials unknown: pass -m or set num_materials")


def _segmentation(config, dataset, m):
    if config.cluster_method == "external":
        labels = io.load_labels(config.labels, m)
        if len(labels) != dataset.n:
            raise ConfigError(f"label map has {len(labels)} pixels, dataset has {dataset.n}")
        return labels
    return None


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (ConfigError, BundleError):
        raise
    except (UnmixingError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageFailure(name, exc) from exc


def _write_pngs(abundances, height, width, out_dir):
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(exist_ok=True)
    for k, row in enumerate(abundances):
        img = np.round(np.clip(row, 0.0, 1.0) * 255).astype(np.uint8).reshape(height, width)
        Image.fromarray(img, mode="L").save(out_dir / f"abundance_{k}.png")


def _format_avg(avg_sad, avg_rmse):
    return f"Avg. SAD: {100 * avg_sad:.2f}  Avg. RMSE: {100 * avg_rmse:.2f}  (x1e-2)"


def _unmix_once(dataset, gt, m, config, labels):
    out = _stage("unmixing", run, dataset, m, config, labels)
    bundle = out.bundle(config.to_dict())
    if gt is not None:
        acc = None
        if gt.labels is not None:
            acc = metrics.segmentation_accuracy(out.segmentation, ClassificationMap(gt.labels, m))
        report = metrics.match_and_score(out.result, gt, accuracy=acc)
        bundle.metrics = report.to_dict(bundle.config)
    return out, bundle


def cmd_unmix(args):
    config = _resolve_config(args)
    dataset, gt = _load_input(args.bundle)
    m = _resolve_m(config, args.bundle, gt, config.labels)
    config = config.updated(num_materials=m)
    labels = _stage("segmentation", _segmentation, config, dataset, m)
    if gt is None or not args.evaluate:
        gt = None
    summary = []
    for k in range(args.repeats):
        cfg = config.updated(svm_seed=config.svm_seed + k)
        out, bundle = _unmix_once(dataset, gt, m, cfg, labels)
        target = Path(args.out) if args.repeats == 1 else Path(args.out) / f"repeat_{k:02d}"
        _stage("save", io.save_bundle, bundle, target, overwrite=args.overwrite)
        if args.png_maps:
            _write_pngs(bundle.abundances, dataset.height, dataset.width, target / "maps")
        t = out.timings
        print(f"segmentation: {t['segmentation']:.2f}s, unmixing: {t['unmixing']:.2f}s")
        if bundle.metrics:
            summary.append(bundle.metrics)
            print(f"  {_format_avg(bundle.metrics['avg_sad'], bundle.metrics['avg_rmse'])}")
    if args.repeats > 1 and summary:
        sads = [s["avg_sad"] for s in summary]
        rmses = [s["avg_rmse"] for s in summary]
        agg = {"repeats": args.repeats,
               "avg_sad_mean": float(np.mean(sads)), "avg_sad_std": float(np.std(sads)),
               "avg_rmse_mean": float(np.mean(rmses)), "avg_rmse_std": float(np.std(rmses))}
        io.write_metrics(agg, Path(args.out) / "summary.json")
        print(f"over {args.repeats} runs: Avg. SAD {100 * agg['avg_sad_mean']:.2f} ± "
              f"{100 * agg['avg_sad_std']:.2f}, Avg. RMSE {100 * agg['avg_rmse_mean']:.2f} ± "
              f"{100 * agg['avg_rmse_std']:.2f} (x1e-2)")
    return EXIT_OK


def cmd_segment(args):
    config = _resolve_config(args)
    if config.cluster_method == "external":
        raise ConfigError("segment needs a built-in method (gmm or kmeans)")
    dataset, gt = _load_input(args.bundle)
    m = _resolve_m(config, args.bundle, gt, None)
    X = _stage("preprocess", preprocess, dataset.data, m, config)
    labels = _stage("segmentation", cluster, X, m, config)
    io.save_labels_csv(labels.labels, dataset.height, dataset.width, args.out)
    if gt is not None and gt.labels is not None:
        acc = metrics.segmentation_accuracy(labels, ClassificationMap(gt.labels, m))
        print(f"accuracy vs ground truth: {100 * acc:.2f}%")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    result = io.load_result(args.result)
    _, gt = _load_input(args.gt)
    if gt is None:
        raise ConfigError(f"{args.gt} carries no ground truth")
    acc = None
    if gt.labels is not None and result.labels.shape == gt.labels.shape:
        acc = metrics.segmentation_accuracy(ClassificationMap(result.labels, gt.m),
                                            ClassificationMap(gt.labels, gt.m))
    try:
        report = metrics.match_and_score(result, gt, accuracy=acc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out) if args.out else Path(args.result) / "metrics.json"
    io.write_metrics(report.to_dict(result.config), out)
    for k in range(gt.m):
        print(f"material {k}: SAD {100 * report.per_material_sad[k]:.2f}  "
              f"RMSE {100 * report.per_material_rmse[k]:.2f}")
    print(_format_avg(report.avg_sad, report.avg_rmse))
    return EXIT_OK


def noise_sweep(dataset, gt, m, config, fractions, seeds):
    """Rows of (p, avg_sad_mean, avg_sad_std, avg_rmse_mean, avg_rmse_std)."""
    rows = []
    for p in fractions:
        sads, rmses = [], []
        for seed in seeds:
            noisy = metrics.inject_label_noise(gt.labels, p, m, seed=seed)
            out = run(dataset, m, config.updated(svm_seed=seed), labels=noisy)
            rep = metrics.match_and_score(out.result, gt)
            sads.append(rep.avg_sad)
            rmses.append(rep.avg_rmse)
        rows.append((p, float(np.mean(sads)), float(np.std(sads)),
                     float(np.mean(rmses)), float(np.std(rmses))))
    return rows


SWEEP_COLUMNS = ("p", "avg_sad_mean", "avg_sad_std", "avg_rmse_mean", "avg_rmse_std")


def cmd_noise_sweep(args):
    config = _resolve_config(args)
    dataset, gt = _load_input(args.bundle)
    if gt is None or gt.labels is None:
        raise ConfigError(f"{args.bundle} has no ground-truth labels to corrupt")
    m = gt.m
    config = config.updated(num_materials=m)
    rows = _stage("unmixing", noise_sweep, dataset, gt, m, config, args.fractions, args.seeds)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        w.writerows(rows)
    for p, sm, ss, rm, rs in rows:
        print(f"p={p:.2f}  SAD {100 * sm:.2f} ± {100 * ss:.2f}  RMSE {100 * rm:.2f} ± {100 * rs:.2f}  (x1e-2)")
    return EXIT_OK


def cmd_synth(args):
    cfg = synth.SynthConfig(d=args.bands, m=args.materials, n=args.pixels,
                            noise_sigma=args.sigma, dirichlet_alpha=args.alpha,
                            seed=args.seed, height=args.height)
    dataset, gt = synth.generate(cfg)
    io.save_dataset_bundle(dataset, args.out, gt, overwrite=args.overwrite)
    print(f"wrote {args.out}: {dataset.height}x{dataset.width} pixels, {dataset.d} bands, m={gt.m}")
    return EXIT_OK


def cmd_theorem_check(args):
    rng = np.random.default_rng(args.seed)
    if args.bundle:
        _, gt = _load_input(args.bundle)
        if gt is None:
            raise ConfigError(f"{args.bundle} carries no ground-truth endmembers")
        instances = [gt.endmembers]
    else:
        instances = [synth.random_instance(rng) for _ in range(args.instances)]
    failures = 0
    totals = np.zeros(4, dtype=np.int64)
    for k, M in enumerate(instances):
        rep = synth.verify_theorem(M, trials=args.trials, seed=int(rng.integers(2**63)))
        totals += [rep.convexity_checked, rep.convexity_violations,
                   rep.homogeneity_checked, rep.homogeneity_violations]
        if not rep.passed:
            failures += 1
            print(f"instance {k} (d={M.shape[0]}, m={M.shape[1]}): counterexample "
                  f"{json.dumps(rep.witnesses[:1])}")
    print(f"{len(instances)} instances, {args.trials} trials each: "
          f"{totals[1]} convexity and {totals[3]} homogeneity counterexamples "
          f"({totals[0]} / {totals[2]} checks)")
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def build_parser():
    parser = argparse.ArgumentParser(prog="polyunmix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("unmix", help="segmentation-to-unmixing pipeline")
    p.add_argument("bundle")
    p.add_argument("-o", "--out", required=True)
    _add_run_flags(p)
    p.add_argument("--repeats", type=int, default=1, help="runs with consecutive SVM seeds")
    p.add_argument("--evaluate", action=argparse.BooleanOptionalAction, default=True,
                   help="score against ground truth when the bundle has one")
    p.add_argument("--png-maps", action="store_true")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("segment", help="built-in clustering to a CSV label map")
    p.add_argument("bundle")
    p.add_argument("-o", "--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score a result bundle against ground truth")
    p.add_argument("result")
    p.add_argument("gt")
    p.add_argument("-o", "--out", help="metrics.json path (default: inside the result)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("noise-sweep", help="unmix under uniform label noise on the ground truth")
    p.add_argument("bundle")
    p.add_argument("-o", "--out", required=True, help="CSV table")
    _add_run_flags(p)
    p.add_argument("--fractions", type=_float_list, default=[0.01, 0.05, 0.10, 0.25, 0.50, 0.80])
    p.add_argument("--seeds", type=_int_list, default=list(range(10)))
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("synth", help="generate a synthetic linear-mixing bundle")
    p.add_argument("out")
    p.add_argument("--bands", "-d", type=int, default=16)
    p.add_argument("--materials", "-m", type=int, default=3)
    p.add_argument("--pixels", "-n", type=int, default=2500)
    p.add_argument("--height", type=int)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("theorem-check", help="Monte-Carlo check of the cone-partition geometry")
    p.add_argument("--bundle", help="use this bundle's ground-truth endmembers")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theorem_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "repeats", 1) < 1:
        parser.error("--repeats must be >= 1")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except StageFailure as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    except (ConfigError, BundleError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    except UnmixingError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
