"""Experiment recipes: wiring preprocessing, folds, training, and evaluation
into run directories with delimited tables, JSON summaries, and figures.

Recipes:
  single        one (view, architecture, ehr-set, horizon) with k-fold CV
  view-sweep    the single recipe repeated per view, ranked table
  horizon-sweep the single recipe repeated per follow-up horizon
  modality-grid the 3x3 tabular/video input grid on a frozen holdout
  learning-curve AUC against nested training-set sizes on a frozen holdout

Every artifact writer is deterministic; a run directory contains its exact
config replay file.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import report
from .ehr import (
    EXCLUDED, complete_table, derive_label, horizon_days, read_ehr_csv, schema,
)
from .errors import ConfigError, DataError
from .models import FULL_EHR_WIDTH, ModelSpec, build_model
from .nn.checkpoint import save_checkpoint
from .stats import roc_auc, roc_curve, summarize_folds
from .training import (
    ArrayDataset, Fold, TrainConfig, crossval, fold_seed,
    learning_curve as lc_engine, make_folds, train_fold,
)
from .video import normalize_view_tag, read_evid, read_manifest

EHR_SETS = ("none", "limited10", "full158")
EXPERIMENTS = ("single", "view-sweep", "horizon-sweep", "modality-grid", "learning-curve")


@dataclass
class RunConfig:
    """Resolved experiment configuration; serialized verbatim for replay."""

    experiment: str = "single"
    data_dir: str = "."
    out_dir: str = "run"
    seed: int = 0
    horizon: str = "12m"
    view: str = "pl deep"
    architecture: str = "cnn3d"
    ehr_set: str = "none"
    factor: int = 1
    frames: int = 60
    flow: bool = False
    folds: int = 5
    batch_size: int = 16
    max_epochs: int = 1000
    patience: int = 10
    optimizer: str = "auto"
    learning_rate: float | None = None
    holdout_per_class: int = 0
    curve_sizes: tuple = ()
    single_thread: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.ehr_set not in EHR_SETS:
            raise ConfigError(f"ehr set must be one of {EHR_SETS}")
        base = self.architecture.split(":")[0]
        if self.ehr_set == "none" and (base in ("ehr_mlp", "fused")):
            raise ConfigError(f"--ehr-set none forbids architecture {self.architecture}")
        if self.ehr_set != "none" and base not in ("ehr_mlp", "fused"):
            raise ConfigError(
                f"architecture {self.architecture} ignores ehr; use fused:<arch> or ehr_mlp")
        if self.experiment in ("modality-grid", "learning-curve") and self.holdout_per_class < 1:
            raise ConfigError(f"{self.experiment} needs --holdout-per-class >= 1")

    def train_config(self) -> TrainConfig:
        return TrainConfig(optimizer=self.optimizer, batch_size=self.batch_size,
                           max_epochs=self.max_epochs, patience=self.patience,
                           seed=self.seed, learning_rate=self.learning_rate)


# ---------------------------------------------------------------------------
# corpus loading and assembly

@dataclass
class Corpus:
    records: list                 # manifest studies
    ehr: object | None            # completed EhrTable, aligned by study_id
    data_dir: Path

    def ehr_row(self, study_id: str) -> int:
        return self.ehr.study_ids.index(study_id)


def load_corpus(data_dir, need_ehr: bool) -> Corpus:
    data_dir = Path(data_dir)
    manifest = data_dir / "studies.jsonl"
    if not manifest.exists():
        raise DataError(f"{manifest} not found")
    records = read_manifest(manifest)
    ehr = None
    if need_ehr:
        ehr_csv = data_dir / "ehr.csv"
        if not ehr_csv.exists():
            raise DataError(f"{ehr_csv} not found (required for ehr-set runs)")
        ehr = complete_table(read_ehr_csv(ehr_csv))
    return Corpus(records=records, ehr=ehr, data_dir=data_dir)


def canonical_view(view: str) -> str:
    """Accept either a raw acquisition tag or a canonical view-group name."""
    from .video.views import VIEW_GROUPS, UnmappedViewTagError
    try:
        return normalize_view_tag(view)
    except UnmappedViewTagError:
        name = " ".join(view.split()).upper()
        if name in VIEW_GROUPS:
            return name
        raise


def _flow_magnitude_video(video):
    """Replace frames with per-pair flow magnitude, scaled to uint8."""
    from .video.evid import RawVideo
    from .video.flow import farneback_flow

    field = farneback_flow(video)
    mag = field.magnitude
    p99 = np.percentile(mag, 99.0)
    scaled = np.clip(mag / p99 * 255.0, 0, 255) if p99 > 0 else mag
    return RawVideo(frames=np.rint(scaled).astype(np.uint8), fps=video.fps,
                    view_tag=video.view_tag, acquisition_id=video.acquisition_id,
                    provenance=video.provenance + ("flow:magnitude",))


def clip_stack(corpus: Corpus, records, view: str, factor: int, frames: int,
               flow: bool = False):
    """Preprocess every matching video into one (n, T, H, W, 1) array.

    With flow=True the clip carries dense-flow magnitude instead of pixels;
    both variants produce identically shaped single-channel clips, so they
    are interchangeable as network input.
    """
    from .video.pipeline import crop_pad, modal_dims, reduce_resolution, resample_fps, to_clip

    want = canonical_view(view)
    chosen = []
    for rec in records:
        for v in rec.videos:
            if normalize_view_tag(v["view_tag"]) == want:
                chosen.append((rec, v["path"]))
                break
    if not chosen:
        raise DataError(f"no videos with view {view!r} in the manifest")
    videos = [read_evid(corpus.data_dir / path) for _, path in chosen]
    th, tw = modal_dims(videos)
    stack = []
    for v in videos:
        prepped = reduce_resolution(crop_pad(resample_fps(v), th, tw), factor)
        if flow:
            prepped = _flow_magnitude_video(prepped)
        stack.append(to_clip(prepped, frames=frames).tensor)
    return [rec for rec, _ in chosen], np.stack(stack)


def _labels_for(records, horizon: str):
    h_days = horizon_days(horizon)
    return np.array([
        derive_label(r.study_date, r.death_date, r.last_encounter_date, h_days)
        for r in records])


def _one_per_patient(records, labels, seed: int):
    rng = np.random.default_rng([seed, 0x5EED])
    by_patient: dict = {}
    for i, rec in enumerate(records):
        if labels[i] == EXCLUDED:
            continue
        by_patient.setdefault(rec.patient_id, []).append(i)
    keep = [studies[int(rng.integers(len(studies)))]
            for _, studies in sorted(by_patient.items())]
    return np.array(sorted(keep), dtype=np.int64)


def _standardize(matrix: np.ndarray) -> np.ndarray:
    mu = matrix.mean(axis=0)
    sd = matrix.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return ((matrix - mu) / sd).astype(np.float32)


def assemble(corpus: Corpus, config: RunConfig, view: str | None = None,
             horizon: str | None = None):
    """Labeled ArrayDataset for one experiment cell."""
    view = view or config.view
    horizon = horizon or config.horizon
    uses_video = config.ehr_set == "none" or config.architecture.startswith("fused")
    if config.experiment == "modality-grid":
        uses_video = True  # grid assembles its own cells
    if uses_video:
        records, clips = clip_stack(corpus, corpus.records, view, config.factor,
                                    config.frames, flow=config.flow)
    else:
        records, clips = list(corpus.records), None
    labels = _labels_for(records, horizon)
    keep = _one_per_patient(records, labels, config.seed)
    records = [records[i] for i in keep]
    labels = labels[keep]
    if clips is not None:
        clips = clips[keep]
    ehr_matrix = None
    if config.ehr_set != "none":
        rows = [corpus.ehr_row(r.study_id) for r in records]
        full = corpus.ehr.matrix[rows]
        if config.ehr_set == "limited10":
            cols = [corpus.ehr.names.index(n) for n in schema.LIMITED_SET]
            ehr_matrix = _standardize(full[:, cols])
        else:
            ehr_matrix = _standardize(full)
    ids = [r.study_id for r in records]
    return ArrayDataset(labels=labels, video=clips, ehr=ehr_matrix, ids=ids), records


# ---------------------------------------------------------------------------
# run-directory plumbing

def _write_fold_artifacts(run_dir: Path, results, models=True) -> dict:
    folds_dir = run_dir / "folds"
    folds_dir.mkdir(parents=True, exist_ok=True)
    aucs = []
    for res in results:
        fdir = folds_dir / f"fold_{res.fold_index}"
        fdir.mkdir(exist_ok=True)
        h = res.history
        report.write_csv(fdir / "history.csv", ["epoch", "train_loss", "val_loss"],
                         [(e + 1, h.train_loss[e], h.val_loss[e])
                          for e in range(len(h.val_loss))])
        report.write_csv(fdir / "test_scores.csv", ["score", "label"],
                         list(zip(res.test_scores.tolist(), res.test_labels.tolist())))
        if models and res.model is not None:
            save_checkpoint(res.model, fdir / "best.ckpt")
        aucs.append(res.test_auc)
    mean, sd = summarize_folds(aucs)
    return {"per_fold_auc": aucs, "mean_auc": mean, "sd_auc": sd,
            "stop_epochs": [r.history.stop_epoch for r in results],
            "best_epochs": [r.history.best_epoch for r in results]}


def _pooled_roc(results):
    scores = np.concatenate([r.test_scores for r in results])
    labels = np.concatenate([r.test_labels for r in results])
    return roc_curve(scores, labels)


def _model_builder(config: RunConfig, dataset: ArrayDataset):
    video_dims = None
    if dataset.video is not None:
        video_dims = tuple(dataset.video.shape[1:])
    ehr_width = None if dataset.ehr is None else dataset.ehr.shape[1]
    spec = ModelSpec(
        architecture=config.architecture,
        video_dims=video_dims if video_dims else (1, 27, 27, 1),
        ehr_width=ehr_width if ehr_width else FULL_EHR_WIDTH)
    return lambda seed: build_model(spec, seed=seed)


# ---------------------------------------------------------------------------
# recipes

def run_single(config: RunConfig, corpus: Corpus, run_dir: Path,
               view=None, horizon=None, subdir=None, log=None) -> dict:
    dataset, _ = assemble(corpus, config, view=view, horizon=horizon)
    folds = make_folds(dataset.labels, k=config.folds, seed=config.seed)
    results = crossval(_model_builder(config, dataset), dataset, folds,
                       config.train_config(), log=log)
    out = run_dir if subdir is None else run_dir / subdir
    out.mkdir(parents=True, exist_ok=True)
    summary = _write_fold_artifacts(out, results)
    roc = _pooled_roc(results)
    report.write_csv(out / "roc.csv", ["fpr", "tpr", "threshold"],
                     list(zip(roc.fpr.tolist(), roc.tpr.tolist(), roc.thresholds.tolist())))
    summary["pooled_auc"] = roc.auc
    report.write_json(out / "summary.json", summary)
    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    report.fig_fold_history([r.history for r in results], figdir / "history.png")
    report.fig_roc(roc.fpr, roc.tpr, roc.auc, figdir / "roc.png")
    return summary


def run_view_sweep(config: RunConfig, corpus: Corpus, run_dir: Path, log=None) -> dict:
    views = sorted({normalize_view_tag(v["view_tag"])
                    for rec in corpus.records for v in rec.videos})
    rows = []
    for view in views:
        summary = run_single(config, corpus, run_dir, view=view,
                             subdir=f"views/{view.replace(' ', '_').lower()}", log=log)
        rows.append((view, summary["mean_auc"], summary["sd_auc"]))
    rows.sort(key=lambda r: -r[1])
    report.write_csv(run_dir / "views.csv", ["view", "mean_auc", "sd_auc"], rows)
    out = {"views": [{"view": v, "mean_auc": m, "sd_auc": s} for v, m, s in rows]}
    report.write_json(run_dir / "views.json", out)
    figdir = run_dir / "figures"
    figdir.mkdir(exist_ok=True)
    report.fig_ranked_bars(rows, figdir / "view_ranking.png")
    return out


def run_horizon_sweep(config: RunConfig, corpus: Corpus, run_dir: Path, log=None) -> dict:
    rows = []
    for horizon in ("3m", "6m", "9m", "12m"):
        summary = run_single(config, corpus, run_dir, horizon=horizon,
                             subdir=f"horizons/{horizon}", log=log)
        rows.append((horizon, summary["mean_auc"], summary["sd_auc"]))
    report.write_csv(run_dir / "horizons.csv", ["horizon", "mean_auc", "sd_auc"], rows)
    out = {"horizons": [{"horizon": h, "mean_auc": m, "sd_auc": s} for h, m, s in rows]}
    report.write_json(run_dir / "horizons.json", out)
    figdir = run_dir / "figures"
    figdir.mkdir(exist_ok=True)
    report.fig_horizons(rows, figdir / "horizons.png")
    return out


def _train_once_holdout(builder, dataset: ArrayDataset, work_idx, holdout_idx,
                        config: RunConfig, tag: int, log=None):
    """Single training on the working set, scored on the frozen holdout."""
    labels = dataset.labels[work_idx]
    per_class = max(1, int(round(0.10 * work_idx.size)) // 2)
    pos = work_idx[labels == 1]
    neg = work_idx[labels == 0]
    if per_class >= min(pos.size, neg.size):
        raise DataError("working set too small to balance a validation split")
    rng = np.random.default_rng([config.seed, tag])
    val = np.sort(np.concatenate([rng.permutation(pos)[:per_class],
                                  rng.permutation(neg)[:per_class]]))
    train = np.setdiff1d(work_idx, val)
    fold = Fold(train=train, val=val, test=holdout_idx)
    model = builder(fold_seed(config.seed, 7000 + tag))
    return train_fold(model, dataset, fold, config.train_config(), fold_index=tag, log=log)


def _holdout_split(labels, per_class: int, seed: int):
    rng = np.random.default_rng([seed, 0xA0])
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if min(pos.size, neg.size) <= per_class:
        raise DataError(f"not enough samples for a {per_class}-per-class holdout")
    hold = np.sort(np.concatenate([rng.permutation(pos)[:per_class],
                                   rng.permutation(neg)[:per_class]]))
    work = np.setdiff1d(np.arange(labels.size), hold)
    return work, hold


def run_modality_grid(config: RunConfig, corpus: Corpus, run_dir: Path, log=None) -> dict:
    """The 3x3 tabular/video grid; the no-input cell is 0.5 by definition."""
    views = sorted({normalize_view_tag(v["view_tag"])
                    for rec in corpus.records for v in rec.videos})
    single_view = canonical_view(config.view)
    base_video_arch = config.architecture.split(":", 1)[-1] \
        if config.architecture.startswith("fused") else config.architecture
    if base_video_arch in ("ehr_mlp",):
        base_video_arch = "cnn3d"

    # assemble one master table per view plus the tabular rows, all labeled
    labels_all = _labels_for(corpus.records, config.horizon)
    keep = _one_per_patient(corpus.records, labels_all, config.seed)
    records = [corpus.records[i] for i in keep]
    labels = labels_all[keep]
    ids = [r.study_id for r in records]
    rows = [corpus.ehr_row(r.study_id) for r in records]
    full = corpus.ehr.matrix[rows]
    lim_cols = [corpus.ehr.names.index(n) for n in schema.LIMITED_SET]
    ehr_by_set = {"limited10": _standardize(full[:, lim_cols]),
                  "full158": _standardize(full)}
    work, hold = _holdout_split(labels, config.holdout_per_class, config.seed)

    view_clips = {}
    for view in views:
        recs, clips = clip_stack(corpus, records, view, config.factor,
                                 config.frames, flow=config.flow)
        idx = {r.study_id: i for i, r in enumerate(recs)}
        view_clips[view] = (idx, clips)

    def cell_single(ehr_set: str, tag: int) -> float:
        idx, clips = view_clips[single_view]
        present = np.array([i for i, sid in enumerate(ids) if sid in idx])
        clip_rows = np.array([idx[ids[i]] for i in present])
        ds = ArrayDataset(labels=labels[present], video=clips[clip_rows],
                          ehr=None if ehr_set == "none" else ehr_by_set[ehr_set][present])
        p_map = {int(g): k for k, g in enumerate(present)}
        w = np.array([p_map[i] for i in work if i in p_map])
        h = np.array([p_map[i] for i in hold if i in p_map])
        arch = base_video_arch if ehr_set == "none" else f"fused:{base_video_arch}"
        cfg = _cell_config(config, arch, ehr_set)
        res = _train_once_holdout(_model_builder(cfg, ds), ds, w, h, cfg, tag, log=log)
        return res.test_auc

    def cell_tabular(ehr_set: str, tag: int) -> float:
        ds = ArrayDataset(labels=labels, video=None, ehr=ehr_by_set[ehr_set])
        cfg = _cell_config(config, "ehr_mlp", ehr_set)
        res = _train_once_holdout(_model_builder(cfg, ds), ds, work, hold, cfg, tag, log=log)
        return res.test_auc

    def cell_all_views(ehr_set: str, tag: int) -> float:
        # late fusion: average the per-view model scores on the holdout
        score_sum = np.zeros(labels.size)
        score_cnt = np.zeros(labels.size)
        for vi, view in enumerate(views):
            idx, clips = view_clips[view]
            present = np.array([i for i, sid in enumerate(ids) if sid in idx])
            clip_rows = np.array([idx[ids[i]] for i in present])
            ds = ArrayDataset(labels=labels[present], video=clips[clip_rows],
                              ehr=None if ehr_set == "none" else ehr_by_set[ehr_set][present])
            p_map = {int(g): k for k, g in enumerate(present)}
            w = np.array([p_map[i] for i in work if i in p_map])
            h = np.array([p_map[i] for i in hold if i in p_map])
            arch = base_video_arch if ehr_set == "none" else f"fused:{base_video_arch}"
            cfg = _cell_config(config, arch, ehr_set)
            res = _train_once_holdout(_model_builder(cfg, ds), ds, w, h, cfg,
                                      tag * 37 + vi, log=log)
            hold_global = present[h]
            score_sum[hold_global] += res.test_scores
            score_cnt[hold_global] += 1
        covered = score_cnt > 0
        fused = score_sum[covered] / score_cnt[covered]
        return roc_auc(fused, labels[covered])

    grid = {}
    grid[("none", "no_video")] = 0.5
    grid[("none", "single_video")] = cell_single("none", 1)
    grid[("none", "all_videos")] = cell_all_views("none", 2)
    for si, ehr_set in enumerate(("limited10", "full158")):
        grid[(ehr_set, "no_video")] = cell_tabular(ehr_set, 10 + si)
        grid[(ehr_set, "single_video")] = cell_single(ehr_set, 20 + si)
        grid[(ehr_set, "all_videos")] = cell_all_views(ehr_set, 30 + si)

    header = ["ehr_set", "no_video", "single_video", "all_videos"]
    rows_out = [(es, grid[(es, "no_video")], grid[(es, "single_video")],
                 grid[(es, "all_videos")])
                for es in ("none", "limited10", "full158")]
    report.write_csv(run_dir / "modality_grid.csv", header, rows_out)
    out = {"grid": {f"{es}/{vc}": auc for (es, vc), auc in sorted(grid.items())},
           "holdout_per_class": config.holdout_per_class}
    report.write_json(run_dir / "modality_grid.json", out)
    return out


def _cell_config(config: RunConfig, architecture: str, ehr_set: str) -> RunConfig:
    d = asdict(config)
    d["architecture"] = architecture
    d["ehr_set"] = ehr_set
    d["experiment"] = "single"
    d["curve_sizes"] = tuple(d["curve_sizes"])
    return RunConfig(**d)


def run_learning_curve(config: RunConfig, corpus: Corpus, run_dir: Path, log=None) -> dict:
    dataset, _ = assemble(corpus, config)
    work, hold = _holdout_split(dataset.labels, config.holdout_per_class, config.seed)
    sizes = list(config.curve_sizes) or [10, 20, 40, 80]
    sizes = [s for s in sizes if s <= work.size]
    pairs = lc_engine(_model_builder(config, dataset), dataset, sizes, hold,
                      config.train_config(), log=log)
    report.write_csv(run_dir / "learning_curve.csv", ["size", "auc"], pairs)
    out = {"sizes": [{"size": s, "auc": a} for s, a in pairs]}
    report.write_json(run_dir / "learning_curve.json", out)
    figdir = run_dir / "figures"
    figdir.mkdir(exist_ok=True)
    report.fig_learning_curve({config.architecture: pairs}, figdir / "learning_curve.png")
    return out


def run_experiment(config: RunConfig, log=None) -> Path:
    """Execute one experiment recipe; returns the run directory."""
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    replay = asdict(config)
    replay["curve_sizes"] = list(replay["curve_sizes"])
    report.write_json(run_dir / "config.json", replay)
    need_ehr = config.ehr_set != "none" or config.experiment == "modality-grid"
    corpus = load_corpus(config.data_dir, need_ehr=need_ehr)
    if config.experiment == "single":
        run_single(config, corpus, run_dir, log=log)
    elif config.experiment == "view-sweep":
        run_view_sweep(config, corpus, run_dir, log=log)
    elif config.experiment == "horizon-sweep":
        run_horizon_sweep(config, corpus, run_dir, log=log)
    elif config.experiment == "modality-grid":
        run_modality_grid(config, corpus, run_dir, log=log)
    else:
        run_learning_curve(config, corpus, run_dir, log=log)
    return run_dir
