"""Command line entry point: ``brainage <subcommand> ...``.

Stage subcommands take either an experiment config (``brainage train
exp.json``), which runs that stage of the cached pipeline, or explicit
paths (``brainage train --features f.csv --family all --seed 1 --out
models/``), which run the stage once on the given artifacts.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from . import signal as sig
from . import synth
from ._utils import read_json
from .explain import METHODS as EXPLAIN_METHODS
from .features import FeatureMatrix
from .models import FAMILY_NAMES, CVResult, TrainedModel
from .report import KINDS as FIGURE_KINDS
from .report import PALETTES, RenderSpec, render_to_file

log = logging.getLogger("brainage")


class UsageError(ValueError):
    pass


def _need(args, *names):
    missing = ["--" + n.replace("_", "-").replace("inp", "in") for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"give an experiment config or {', '.join(missing)}")


def _cmd_synth(args) -> int:
    cfg = synth.SynthConfig.from_dict(read_json(args.config)) if args.config else synth.SynthConfig()
    over = {k: v for k, v in (("n_subjects", args.n_subjects), ("seed", args.seed), ("n_channels", args.n_channels),
                              ("age_min", args.age_min), ("age_max", args.age_max)) if v is not None}
    if args.null:
        over["effects"] = []
    if over:
        cfg = synth.SynthConfig.from_dict({**cfg.to_dict(), **over})
    synth.generate_dataset(cfg, args.out)
    print(f"wrote {cfg.n_subjects} subjects to {args.out}")
    return 0


def _run_stage(args) -> int:
    cfg = pl.load_config(args.config)
    if args.n_jobs is not None:
        cfg.n_jobs = args.n_jobs
    stages = pl.STAGES if args.command == "run" else (args.command,)
    manifest = pl.run_pipeline(cfg, force=args.force, stages=stages)
    for name, info in manifest["stages"].items():
        state = "skipped (unchanged)" if info.get("skipped") else f"done in {info.get('duration_s', 0):.1f}s"
        print(f"{name}: {state}")
    return 0


def _montage(args):
    return sig.Montage.load(args.montage) if args.montage else sig.default_montage()


def _regions(args):
    return sig.RegionMap.load(args.regions) if args.regions else sig.default_region_map()


def _cmd_preprocess(args) -> int:
    if args.config:
        return _run_stage(args)
    _need(args, "inp", "out", "seed")
    settings = pl.PreprocessSettings(ransac=not args.no_ransac, max_rejected=args.max_rejected)
    report = pl.preprocess_corpus(args.inp, args.out, _montage(args), settings, args.seed)
    print(f"{report['n_recordings']} recordings, {len(report['excluded'])} excluded, "
          f"{len(report['global_drop'])} channels dropped corpus-wide")
    return 0


def _cmd_extract(args) -> int:
    if args.config:
        return _run_stage(args)
    _need(args, "inp", "out")
    fm = pl.extract_features(args.inp, args.variant, _regions(args), args.n_jobs or 1)
    fm.to_csv(args.out)
    print(f"{len(fm.subject_ids)} subjects x {len(fm.columns)} features -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    if args.config:
        return _run_stage(args)
    _need(args, "features", "out", "seed")
    fm = FeatureMatrix.from_csv(args.features)
    families = list(FAMILY_NAMES) if args.family == "all" else args.family.split(",")
    for f in families:
        _, cv = pl.train_family(f, fm, args.budget, args.folds, args.seed, args.out, args.n_jobs or 1, args.variant)
        print(f"{f}: CV MAE {cv.mean:.3f} ± {cv.std:.3f}")
    pl.summarize([args.out], Path(args.out) / "summary.csv")
    return 0


def _cmd_explain(args) -> int:
    if args.config:
        return _run_stage(args)
    _need(args, "model", "features", "out")
    model = TrainedModel.load(args.model)
    cv = None
    if args.fold_test:
        cv_path = Path(args.model).with_suffix(".cv.json")
        if not cv_path.exists():
            raise UsageError(f"--fold-test needs {cv_path}")
        cv = CVResult.from_dict(read_json(cv_path)["best"])
    settings = pl.ExplainSettings(args.background, args.n_coalitions, args.max_samples, args.method,
                                  args.n_permutations)
    seed = model.seed if args.seed is None else args.seed
    shap = pl.explain_family(model, cv, FeatureMatrix.from_csv(args.features), settings, seed)
    out = Path(args.out) / f"{model.family}.csv"
    shap.to_csv(out)
    print(f"{len(shap.sample_ids)} samples x {len(shap.columns)} features -> {out}")
    return 0


def _cmd_agree(args) -> int:
    if args.config:
        return _run_stage(args)
    _need(args, "shap_dir", "features", "out")
    fm = FeatureMatrix.from_csv(args.features)
    rmap = _regions(args)
    regional = all(d.channel in set(rmap.names) for d in fm.descriptors)
    res = pl.agree(args.shap_dir, fm, args.hypotheses, args.out, None if regional else rmap.region_of())
    rm = res["replication"]
    for m in rm.models:
        n = sum(rm.outcome(h, m) == "replicated" for h in rm.hypotheses)
        print(f"{m}: {n} hypotheses replicated")
    return 0


def _cmd_report(args) -> int:
    if args.config:
        return _run_stage(args)
    _need(args, "kind", "inp", "out")
    opts = dict(kv.split("=", 1) for kv in args.option)
    spec = RenderSpec(args.kind, args.inp, args.vmin, args.vmax, args.palette, args.title, opts)
    print(render_to_file(spec, args.out))
    return 0


def _cmd_summarize(args) -> int:
    rows = pl.summarize(args.experiments, args.out)
    for row in rows:
        cells = [f"{k}={v}" for k, v in row.items() if k != "family" and not k.endswith(("_mean", "_std", "_best"))]
        print(row["family"], *cells, sep="\t")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brainage", description="EEG brain-age study pipeline")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    p.add_argument("--n-jobs", type=int, default=None, help="worker count (overrides the config)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus with planted age effects")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--config", type=Path, help="SynthConfig JSON")
    s.add_argument("--n", "--n-subjects", dest="n_subjects", type=int)
    s.add_argument("--age-min", type=float)
    s.add_argument("--age-max", type=float)
    s.add_argument("--n-channels", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--null", action="store_true", help="plant no effects")
    s.set_defaults(func=_cmd_synth)

    def stage(name, text, func):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config", nargs="?", type=Path, help="experiment config JSON")
        sp.add_argument("--force", action="store_true", help="rerun even if inputs are unchanged")
        sp.set_defaults(func=func)
        return sp

    sp = stage("preprocess", "filter, resample and repair channels", _cmd_preprocess)
    sp.add_argument("--in", dest="inp", type=Path)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--montage", type=Path)
    sp.add_argument("--regions", type=Path)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--no-ransac", action="store_true")
    sp.add_argument("--max-rejected", type=int, default=30)

    sp = stage("extract", "build the feature matrix", _cmd_extract)
    sp.add_argument("--in", dest="inp", type=Path)
    sp.add_argument("--variant", default="12-All", choices=pl.VARIANTS)
    sp.add_argument("--regions", type=Path)
    sp.add_argument("--out", type=Path)

    sp = stage("train", "hyperparameter search and refit per family", _cmd_train)
    sp.add_argument("--features", type=Path)
    sp.add_argument("--family", default="all", help="'all', a family name or a comma-separated list")
    sp.add_argument("--budget", type=int, default=50)
    sp.add_argument("--folds", type=int, default=3)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--variant", help="label recorded for summaries")
    sp.add_argument("--out", type=Path)

    sp = stage("explain", "SHAP values for one model", _cmd_explain)
    sp.add_argument("--model", type=Path)
    sp.add_argument("--features", type=Path)
    sp.add_argument("--fold-test", action="store_true",
                    help="explain the best fold's held-out rows with a model refitted on its training rows")
    sp.add_argument("--background", type=int, default=100)
    sp.add_argument("--n-coalitions", type=int)
    sp.add_argument("--max-samples", type=int)
    sp.add_argument("--n-permutations", type=int, default=2, help="orderings per sample (even)")
    sp.add_argument("--method", default="auto", choices=EXPLAIN_METHODS)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", type=Path)

    sp = stage("agree", "agreement matrices and hypothesis replication", _cmd_agree)
    sp.add_argument("--shap-dir", type=Path)
    sp.add_argument("--features", type=Path)
    sp.add_argument("--hypotheses", type=Path, help="defaults to the bundled hypothesis file")
    sp.add_argument("--regions", type=Path, help="region map for electrode-level features")
    sp.add_argument("--out", type=Path)

    sp = stage("report", "render SVG figures", _cmd_report)
    sp.add_argument("--kind", choices=FIGURE_KINDS)
    sp.add_argument("--in", dest="inp", type=Path)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--vmin", type=float)
    sp.add_argument("--vmax", type=float)
    sp.add_argument("--palette", choices=sorted(PALETTES))
    sp.add_argument("--title")
    sp.add_argument("--option", action="append", default=[], metavar="KEY=VALUE",
                    help="column=, montage=, regions=, features=, feature=, max_rows=")

    sp = sub.add_parser("run", help="all stages in order")
    sp.add_argument("config", type=Path)
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=_run_stage)

    m = sub.add_parser("summarize", help="family x variant MAE table from experiment outputs")
    m.add_argument("experiments", nargs="+", type=Path, help="experiment or model directories")
    m.add_argument("--out", type=Path)
    m.set_defaults(func=_cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except pl.StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 2
    except pl.ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
