"""Experiment configuration and the staged study pipeline.

Stages run in order: preprocess, extract, train, explain, agree, report.
Each stage declares its inputs; a stage whose cache key (a hash of its
settings and input files) matches the previous run and whose outputs are
unchanged on disk is skipped unless forced. ``manifest.json`` in the output
root records keys, output hashes, seeds and durations.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import signal as sig
from ._utils import derive_seed, read_json, sha256_file, sha256_tree, write_json
from .agreement import (
    agreement_matrices,
    evaluate_hypotheses,
    evidence_for,
    load_hypotheses,
    write_agreement,
)
from .explain import KINDS as GROUP_KINDS
from .explain import METHODS as EXPLAIN_METHODS
from .explain import RidgeDampingWarning, ShapMatrix, best_fold_split, explain_model, sample_background
from .features import BAND_NAMES, VARIANTS, DatasetError, FeatureMatrix, build_training_set, variant_spec
from .models import FAMILY_NAMES, CVResult, TrainedModel, fit_model, get_family, random_search
from .report import RenderSpec, render_to_file, write_table

log = logging.getLogger(__name__)

STAGES = ("preprocess", "extract", "train", "explain", "agree", "report")
OUTPUT_ENV = "BRAINAGE_OUTPUT"
# column order of the summary table: regional sets first, then all channels
SUMMARY_ORDER = ("12-All", "12-EC", "12-EO", "128-All", "128-EC", "128-EO")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# configuration

@dataclass
class PreprocessSettings:
    target_rate_hz: float = 250.0
    lo_hz: float = 0.5
    hi_hz: float = 50.0
    ransac: bool = True
    max_rejected: int = 30
    corr_threshold: float = 0.75
    unbroken_fraction: float = 0.4
    n_resample: int = 50
    global_drop_fraction: float = 0.125

    def params(self, drop: Sequence[str] = ()) -> sig.PreprocessParams:
        rp = sig.RansacParams(n_resample=self.n_resample, corr_threshold=self.corr_threshold,
                              unbroken_fraction=self.unbroken_fraction)
        return sig.PreprocessParams(self.target_rate_hz, self.lo_hz, self.hi_hz, self.ransac, self.max_rejected,
                                    tuple(drop), rp)


@dataclass
class ExplainSettings:
    background: int = 100
    n_coalitions: int | None = None
    max_samples: int | None = None
    method: str = "auto"
    n_permutations: int = 2


@dataclass
class ReportSettings:
    scatter_features: list[str] = field(default_factory=lambda: [
        "theta_pow_freq_bands", "alpha_pow_freq_bands", "omega_spect_slope.slope"])
    max_rows: int = 12


@dataclass
class ExperimentConfig:
    """Everything one study needs; see ``load_config`` for the JSON form."""

    corpus: Path
    seed: int
    output: Path
    variant: str = "12-All"
    montage: Path | None = None
    regions: Path | None = None
    hypotheses: Path | None = None
    families: list[str] = field(default_factory=lambda: list(FAMILY_NAMES))
    budget: int = 50
    folds: int = 3
    n_jobs: int = 1
    preprocess: PreprocessSettings = field(default_factory=PreprocessSettings)
    explain: ExplainSettings = field(default_factory=ExplainSettings)
    report: ReportSettings = field(default_factory=ReportSettings)

    # -- derived paths
    def path(self, *parts: str) -> Path:
        return Path(self.output).joinpath(*parts)

    def montage_obj(self) -> sig.Montage:
        return sig.Montage.load(self.montage) if self.montage else sig.default_montage()

    def region_map(self) -> sig.RegionMap:
        return sig.RegionMap.load(self.regions) if self.regions else sig.default_region_map()

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("corpus", "output", "montage", "regions", "hypotheses"):
            d[k] = None if d[k] is None else str(d[k])
        return d


_SECTIONS = {"preprocess": PreprocessSettings, "explain": ExplainSettings, "report": ReportSettings}
_TOP_KEYS = set(ExperimentConfig.__dataclass_fields__)


def _section(name: str, raw, errors: list[str]):
    cls = _SECTIONS[name]
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        errors.append(f"{name} must be an object")
        return cls()
    unknown = set(raw) - set(cls.__dataclass_fields__)
    if unknown:
        errors.append(f"{name}: unknown keys {sorted(unknown)}")
        raw = {k: v for k, v in raw.items() if k not in unknown}
    return cls(**raw)


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    """Validate everything up front and collect every problem in one error."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        errors.append(f"unknown keys {sorted(unknown)}")
    base = Path(base_dir)

    def p(key, required=False):
        v = raw.get(key)
        if v is None:
            if required:
                errors.append(f"missing required key {key!r}")
            return None
        path = Path(os.path.expandvars(str(v)))
        return path if path.is_absolute() else base / path

    corpus = p("corpus", True)
    output = Path(os.environ[OUTPUT_ENV]) if os.environ.get(OUTPUT_ENV) else p("output", True)
    seed = raw.get("seed")
    if seed is None:
        errors.append("missing required key 'seed'")
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append("seed must be a non-negative integer")
    variant = raw.get("variant", "12-All")
    if variant not in VARIANTS:
        errors.append(f"variant must be one of {VARIANTS}")
    montage, regions, hyp = p("montage"), p("regions"), p("hypotheses")
    for name, path in (("montage", montage), ("regions", regions), ("hypotheses", hyp)):
        if path is not None and not path.is_file():
            errors.append(f"{name} file {path} does not exist")
    if corpus is not None and (not corpus.is_dir() or not sig.iter_bundles(corpus)):
        errors.append(f"corpus {corpus} is not a directory of recording bundles")
    families = raw.get("families", list(FAMILY_NAMES))
    if not isinstance(families, list) or not families:
        errors.append("families must be a non-empty list")
        families = []
    for f in families:
        if f not in FAMILY_NAMES:
            errors.append(f"unknown model family {f!r}")
    if len(set(families)) != len(families):
        errors.append("families must not repeat")
    for key, lo in (("budget", 1), ("folds", 2), ("n_jobs", 1)):
        v = raw.get(key, ExperimentConfig.__dataclass_fields__[key].default)
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            errors.append(f"{key} must be an integer >= {lo}")
    try:
        sections = {k: _section(k, raw.get(k), errors) for k in _SECTIONS}
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    ex = sections["explain"]
    if ex.method not in EXPLAIN_METHODS:
        errors.append(f"explain.method must be one of {', '.join(EXPLAIN_METHODS)}")
    if not (isinstance(ex.n_permutations, int) and ex.n_permutations >= 2 and ex.n_permutations % 2 == 0):
        errors.append("explain.n_permutations must be an even integer >= 2")
    if ex.background < 1:
        errors.append("explain.background must be >= 1")
    if ex.max_samples is not None and ex.max_samples < 3:
        errors.append("explain.max_samples must be >= 3 (trends need three samples)")
    if ex.method in ("tree", "tree_path") and any(not get_family(f).tree for f in families if f in FAMILY_NAMES):
        errors.append(f"explain.method {ex.method!r} only applies to tree families")
    pre = sections["preprocess"]
    if not 0 < pre.lo_hz < pre.hi_hz:
        errors.append("preprocess needs 0 < lo_hz < hi_hz")
    if errors:
        raise ConfigError("; ".join(errors))
    if montage is None and regions is not None:
        raise ConfigError("a custom region map needs its montage")
    cfg = ExperimentConfig(corpus, seed, output, variant, montage, regions, hyp, list(families),
                           raw.get("budget", 50), raw.get("folds", 3), raw.get("n_jobs", 1), **sections)
    try:
        cfg.region_map().validate(cfg.montage_obj())
        if hyp is not None:
            load_hypotheses(hyp)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, path.parent)


# ---------------------------------------------------------------------------
# stages

def preprocess_corpus(corpus: str | Path, out_dir: str | Path, montage: sig.Montage, settings: PreprocessSettings,
                      seed: int) -> dict:
    """Preprocess every bundle below ``corpus``; returns the rejection report.

    Channels rejected in more than ``global_drop_fraction`` of recordings are
    interpolated everywhere, in one pass together with each recording's own
    rejections.
    """
    out_dir = Path(out_dir)
    bundles = sig.iter_bundles(corpus)
    rejected: dict[str, list[str]] = {}
    excluded: list[str] = []
    kept: list[str] = []
    for b in bundles:
        rec = sig.read_bundle(b)
        name = sig.bundle_name(rec)
        res = sig.preprocess_recording(rec, montage, settings.params(), derive_seed(seed, "ransac", name))
        rejected[name] = sorted(res.rejected)
        if res.excluded:
            excluded.append(name)
            continue
        sig.write_bundle(res.recording, out_dir / name)
        kept.append(name)
    counts = Counter(ch for chans in rejected.values() for ch in chans)
    dropped = sorted(sig.global_drop(dict(counts), len(bundles), settings.global_drop_fraction))
    if dropped:
        for name in kept:
            extra = set(dropped) - set(rejected[name])
            if extra:
                rec = sig.read_bundle(out_dir / name)
                rec = sig.interpolate_channels(rec, montage, set(dropped) | set(rejected[name]))
                sig.write_bundle(rec, out_dir / name)
    report = {"rejected": rejected, "excluded": excluded, "global_drop": dropped, "n_recordings": len(bundles)}
    write_json(out_dir / "report.json", report)
    return report


def extract_features(pre_dir: str | Path, variant: str, region_map: sig.RegionMap | None, n_jobs: int = 1) -> FeatureMatrix:
    """Build the training set one subject at a time to bound memory."""
    by_subject: dict[str, list[Path]] = {}
    for b in sig.iter_bundles(pre_dir):
        meta = read_json(b / "meta.json")
        by_subject.setdefault(meta["subject_id"], []).append(b)
    regional, _ = variant_spec(variant)
    parts = []
    for sid in sorted(by_subject):
        recs = [sig.read_bundle(b) for b in by_subject[sid]]
        try:
            parts.append(build_training_set(recs, variant, region_map if regional else None, n_jobs))
        except DatasetError as exc:
            log.warning("skipping %s: %s", sid, exc)
    if not parts:
        raise DatasetError(f"no subject provides the states variant {variant} needs")
    cols = parts[0].descriptors
    for p in parts:
        if p.descriptors != cols:
            raise DatasetError("subjects disagree on the channel layout")
    return FeatureMatrix(cols, np.vstack([p.X for p in parts]), [s for p in parts for s in p.subject_ids],
                         np.concatenate([p.ages for p in parts]), {"variant": variant})


def train_family(family: str, fm: FeatureMatrix, budget: int, folds: int, seed: int, out_dir: str | Path,
                 n_jobs: int = 1, variant: str | None = None) -> tuple[TrainedModel, CVResult]:
    """Random search, refit on all rows, save ``<family>.json`` and ``<family>.cv.json``."""
    variant = variant or fm.metadata.get("variant")
    s = derive_seed(seed, "train", family)
    res = random_search(family, fm.X, fm.ages, budget=budget, seed=s, k=folds, n_jobs=n_jobs)
    model = fit_model(family, res.best_hyper, fm.X, fm.ages, fm.columns, seed=s)
    model.metadata.update({"variant": variant, "cv_mae_mean": res.best_cv.mean,
                           "cv_mae_std": res.best_cv.std, "n_train": int(len(fm.ages))})
    out_dir = Path(out_dir)
    model.save(out_dir / f"{family}.json")
    write_json(out_dir / f"{family}.cv.json", {
        "best": res.best_cv.to_dict(), "trials": [t.to_dict() for t in res.trials],
        "variant": variant, "subject_ids": list(fm.subject_ids),
        "baseline_mae": baseline_mae(fm.ages, np.asarray(res.best_cv.folds)),
    })
    return model, res.best_cv


def baseline_mae(ages: np.ndarray, folds: np.ndarray) -> float:
    """CV MAE of predicting each fold's training-mean age."""
    ages = np.asarray(ages, dtype=float)
    maes = [np.mean(np.abs(ages[folds == f] - ages[folds != f].mean())) for f in range(int(folds.max()) + 1)]
    return float(np.mean(maes))


def explain_family(model: TrainedModel, cv: CVResult | None, fm: FeatureMatrix, settings: ExplainSettings,
                   seed: int) -> ShapMatrix:
    """SHAP values for held-out rows of the best CV fold (all rows when
    ``cv`` is None), explained with the model fitted on that fold's
    training rows."""
    fam = model.family
    if cv is not None:
        if cv.folds and len(cv.folds) != len(fm.ages):
            raise DatasetError("CV record does not match the feature matrix")
        tr, te, fold = best_fold_split(cv.folds, cv.fold_mae)
        model = fit_model(fam, cv.hyper, fm.X[tr], fm.ages[tr], fm.columns, seed=derive_seed(cv.seed, "fold", fold))
    else:
        tr = te = np.arange(len(fm.ages))
    if settings.max_samples is not None and len(te) > settings.max_samples:
        te = np.sort(np.random.default_rng(derive_seed(seed, "explain-rows", fam)).choice(te, settings.max_samples,
                                                                                          replace=False))
    bg = sample_background(fm.X[tr], settings.background, derive_seed(seed, "background", fam))
    with warnings.catch_warnings():
        # paired sampled coalitions make the design rank-deficient by construction
        warnings.simplefilter("ignore", RidgeDampingWarning)
        shap = explain_model(model, fm.X[te], bg, [fm.subject_ids[i] for i in te], fm.ages[te], settings.method,
                             settings.n_coalitions, derive_seed(seed, "explain", fam),
                             settings.n_permutations)
    shap.metadata.update({"fold": None if cv is None else int(fold), "n_train": int(len(tr))})
    return shap


def agree(shap_dir: str | Path, fm: FeatureMatrix, hypotheses_path: str | Path | None, out_dir: str | Path,
          region_of: dict | None = None, families: Sequence[str] | None = None) -> dict:
    """Agreement matrices, importance tables and the replication matrix."""
    shap_dir, out_dir = Path(shap_dir), Path(out_dir)
    names = list(families) if families else sorted(p.stem for p in shap_dir.glob("*.csv"))
    if not names:
        raise DatasetError(f"no SHAP matrices in {shap_dir}")
    evidence = {n: evidence_for(ShapMatrix.from_csv(shap_dir / f"{n}.csv"), fm, region_of) for n in names}
    mats = agreement_matrices(evidence)
    importances = {k: {m: ev.group_importance(k) for m, ev in evidence.items()} for k in GROUP_KINDS}
    write_agreement(out_dir, mats, importances)
    for k in GROUP_KINDS:
        groups = importances[k][names[0]].groups
        write_table(out_dir / f"importance_{k}.csv", groups, names,
                    np.column_stack([importances[k][m].scores for m in names]))
    for m, ev in evidence.items():
        per_band = {}
        for b in BAND_NAMES:
            gi = ev.group_importance("region", {"band": b})
            per_band[b] = dict(zip(gi.groups, gi.scores))
        regions = importances["region"][m].groups
        write_table(out_dir / "region_by_band" / f"{m}.csv", regions, list(BAND_NAMES),
                    np.array([[per_band[b].get(r, 0.0) for b in BAND_NAMES] for r in regions]))
    rm = evaluate_hypotheses(load_hypotheses(hypotheses_path), evidence)
    rm.to_csv(out_dir / "replication.csv")
    return {"matrices": mats, "importances": importances, "replication": rm}


def render_reports(cfg: ExperimentConfig) -> list[Path]:
    agree_dir, out = cfg.path("agreement"), cfg.path("report")
    written = []
    for k in GROUP_KINDS:
        written.append(render_to_file(RenderSpec("heatmap", agree_dir / f"agreement_{k}.csv"), out / f"heatmap_{k}.svg"))
        for f in cfg.families:
            written.append(render_to_file(RenderSpec("ranked_bars", agree_dir / f"importance_{k}.csv",
                                                     title=f"{f}: {k} importance", options={"column": f}),
                                          out / f"bars_{k}_{f}.svg"))
    opts = {"montage": str(cfg.montage) if cfg.montage else None, "regions": str(cfg.regions) if cfg.regions else None}
    regional, _ = variant_spec(cfg.variant)
    for f in cfg.families:
        if regional:
            written.append(render_to_file(RenderSpec("topo_map", agree_dir / "region_by_band" / f"{f}.csv",
                                                     title=f"{f}: regional importance by band", options=opts),
                                          out / f"topo_{f}.svg"))
        for feat in cfg.report.scatter_features:
            spec = RenderSpec("shap_scatter", cfg.path("shap", f"{f}.csv"), title=f"{f}: {feat}",
                              options={"features": str(cfg.path("features.csv")), "feature": feat,
                                       "max_rows": cfg.report.max_rows})
            written.append(render_to_file(spec, out / f"scatter_{f}_{feat.replace('.', '-')}.svg"))
    return written


# ---------------------------------------------------------------------------
# orchestration

def _key(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=str).encode())
        h.update(b"\x1e")
    return h.hexdigest()


def _hash_outputs(paths: Sequence[Path], root: Path) -> dict[str, str]:
    # keyed relative to the experiment directory so a moved output tree still matches
    return {str(p.relative_to(root)): sha256_tree(p) for p in paths if p.exists()}


class Runner:
    def __init__(self, cfg: ExperimentConfig, force: bool = False):
        self.cfg = cfg
        self.force = force
        self.manifest_path = cfg.path("manifest.json")
        old = read_json(self.manifest_path) if self.manifest_path.exists() else {}
        self.previous = old.get("stages", {})
        self.manifest = {"config": cfg.to_dict(), "seed": cfg.seed, "stages": {}}

    def stage(self, name: str, key: str, outputs: Sequence[Path], fn: Callable[[], None]) -> None:
        prev = self.previous.get(name)
        if (not self.force and prev and prev.get("key") == key
                and prev.get("outputs") == _hash_outputs(outputs, self.cfg.path()) and all(p.exists() for p in outputs)):
            log.info("stage %s unchanged, skipping", name)
            self.manifest["stages"][name] = dict(prev, skipped=True)
            return
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - re-raised tagged with the stage
            self.manifest["stages"][name] = {"key": key, "failed": str(exc)}
            write_json(self.manifest_path, self.manifest)
            raise StageError(name, exc) from exc
        self.manifest["stages"][name] = {"key": key, "outputs": _hash_outputs(outputs, self.cfg.path()), "skipped": False,
                                         "duration_s": round(time.perf_counter() - t0, 3), "seed": self.cfg.seed}
        write_json(self.manifest_path, self.manifest)

    def input_hash(self, *paths: Path | None) -> list[str | None]:
        return [None if p is None else sha256_tree(p) for p in paths]


def run_pipeline(cfg: ExperimentConfig, force: bool = False, stages: Sequence[str] = STAGES) -> dict:
    """Run (or resume) the study; returns the manifest."""
    cfg.path().mkdir(parents=True, exist_ok=True)
    r = Runner(cfg, force)
    montage = cfg.montage_obj()
    rmap = cfg.region_map()
    region_of = None if variant_spec(cfg.variant)[0] else rmap.region_of()
    pre_dir, feats = cfg.path("preprocessed"), cfg.path("features.csv")
    models, shap_dir, agree_dir, report_dir = cfg.path("models"), cfg.path("shap"), cfg.path("agreement"), cfg.path("report")

    if "preprocess" in stages:
        key = _key("preprocess", asdict(cfg.preprocess), cfg.seed, r.input_hash(cfg.corpus, cfg.montage))
        r.stage("preprocess", key, [pre_dir],
                lambda: preprocess_corpus(cfg.corpus, pre_dir, montage, cfg.preprocess, cfg.seed))
    if "extract" in stages:
        key = _key("extract", cfg.variant, r.input_hash(pre_dir, cfg.regions))
        r.stage("extract", key, [feats],
                lambda: extract_features(pre_dir, cfg.variant, rmap, cfg.n_jobs).to_csv(feats))
    if "train" in stages:
        key = _key("train", cfg.families, cfg.budget, cfg.folds, cfg.seed, r.input_hash(feats))

        def train():
            fm = FeatureMatrix.from_csv(feats)
            for f in cfg.families:
                train_family(f, fm, cfg.budget, cfg.folds, cfg.seed, models, cfg.n_jobs, cfg.variant)
        r.stage("train", key, [models], train)
    if "explain" in stages:
        key = _key("explain", asdict(cfg.explain), cfg.seed, r.input_hash(feats, models))

        def explain():
            fm = FeatureMatrix.from_csv(feats)
            for f in cfg.families:
                model = TrainedModel.load(models / f"{f}.json")
                cv = CVResult.from_dict(read_json(models / f"{f}.cv.json")["best"])
                explain_family(model, cv, fm, cfg.explain, cfg.seed).to_csv(shap_dir / f"{f}.csv")
        r.stage("explain", key, [shap_dir], explain)
    if "agree" in stages:
        key = _key("agree", cfg.families, r.input_hash(feats, shap_dir, cfg.hypotheses, cfg.regions))
        r.stage("agree", key, [agree_dir],
                lambda: agree(shap_dir, FeatureMatrix.from_csv(feats), cfg.hypotheses, agree_dir, region_of, cfg.families))
    if "report" in stages:
        key = _key("report", asdict(cfg.report), cfg.families, r.input_hash(agree_dir, shap_dir, feats))
        r.stage("report", key, [report_dir], lambda: render_reports(cfg))
    return r.manifest


# ---------------------------------------------------------------------------
# Table V-style summary

def summarize(experiment_dirs: Sequence[str | Path], out: str | Path | None = None) -> list[dict]:
    """Family x variant table of best CV MAE (mean and std over folds).

    For each family the variant with its lowest mean MAE is flagged, the
    cell a reader would bold in the published table.
    """
    results: dict[str, dict[str, CVResult]] = {}
    for d in experiment_dirs:
        d = Path(d)
        cv_files = sorted((d / "models").glob("*.cv.json")) or sorted(d.glob("*.cv.json"))
        if not cv_files:
            raise DatasetError(f"no CV results under {d}")
        for path in cv_files:
            obj = read_json(path)
            cv = CVResult.from_dict(obj["best"])
            variant = obj.get("variant") or "unknown"
            results.setdefault(variant, {})[cv.family] = cv
    variants = sorted(results, key=lambda v: (SUMMARY_ORDER.index(v) if v in SUMMARY_ORDER else len(SUMMARY_ORDER), v))
    families = [f for f in FAMILY_NAMES if any(f in results[v] for v in variants)]
    best = {f: min((v for v in variants if f in results[v]), key=lambda v: results[v][f].mean) for f in families}
    rows = []
    for f in families:
        row = {"family": f}
        for v in variants:
            cv = results[v].get(f)
            row[v] = "" if cv is None else f"{cv.mean:.2f} ± {cv.std:.2f}"
            row[f"{v}_mean"] = "" if cv is None else repr(cv.mean)
            row[f"{v}_std"] = "" if cv is None else repr(cv.std)
            row[f"{v}_best"] = int(best[f] == v)
        rows.append(row)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        header = ["family"] + [c for v in variants for c in (v, f"{v}_mean", f"{v}_std", f"{v}_best")]
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return rows
