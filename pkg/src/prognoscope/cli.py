"""Command-line entry point.

Subcommands: synth, preprocess-video, preprocess-ehr, flow, train, evaluate,
learning-curve, compare, serve. Exit codes: 0 success, 2 configuration
error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import report
from .errors import ConfigError, DataError, NumericError, PrognoscopeError
from .ehr import complete_table, derive_label, horizon_days, read_ehr_csv, write_ehr_csv, write_sidecar
from .ehr.pipeline import EXCLUDED
from .experiments import RunConfig, run_experiment
from .stats import confusion_at, roc_auc, roc_curve, cochran_q, pairwise_posthoc
from .synth import SynthConfig, build_corpus
from .video import (
    farneback_flow, flow_to_color, modal_dims, normalize_view_tag,
    preprocess_video, read_evid, read_manifest, write_evid,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file of defaults; command-line flags win")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--single-thread", action="store_true",
                   help="pin BLAS to one thread for bitwise-reproducible runs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prognoscope")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom corpus")
    _add_common(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--height", type=int, default=54)
    p.add_argument("--width", type=int, default=74)
    p.add_argument("--duration", type=float, default=1.5)
    p.add_argument("--noise", type=float, default=0.08)
    p.add_argument("--contraction-jitter", type=float, default=0.05,
                   help="beat-to-beat readout noise in the rendered videos")
    p.add_argument("--views", default="pl deep", help="comma-separated raw view tags")
    p.add_argument("--censor-frac", type=float, default=0.0)
    p.add_argument("--multi-study-frac", type=float, default=0.0)

    p = sub.add_parser("preprocess-video", help="manifest videos to network-ready clips")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--view", required=True)
    p.add_argument("--factor", type=int, default=1)
    p.add_argument("--frames", type=int, default=60)

    p = sub.add_parser("preprocess-ehr", help="clean, interpolate, impute, label")
    _add_common(p)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--horizon", default="12m")

    p = sub.add_parser("flow", help="dense optical flow of one video")
    _add_common(p)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--mode", choices=("color", "magnitude"), default="color")

    p = sub.add_parser("train", help="run an experiment recipe")
    _add_common(p)
    p.add_argument("--data", type=Path, help="corpus directory (synth output layout)")
    p.add_argument("--experiment", default="single",
                   choices=("single", "view-sweep", "horizon-sweep", "modality-grid"))
    p.add_argument("--arch", default="cnn3d")
    p.add_argument("--view", default="pl deep")
    p.add_argument("--horizon", default="12m")
    p.add_argument("--ehr-set", default="none", choices=("none", "limited10", "full158"))
    p.add_argument("--factor", type=int, default=1)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--flow", action="store_true",
                   help="train on dense-flow magnitude clips instead of raw pixels")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--optimizer", default="auto")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--holdout-per-class", type=int, default=0)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("evaluate", help="metrics, ROC table and figure from scores")
    _add_common(p)
    p.add_argument("--scores", type=Path, required=True,
                   help="CSV with score,label columns")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("learning-curve", help="AUC against training-set size")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--arch", default="cnn3d")
    p.add_argument("--view", default="pl deep")
    p.add_argument("--horizon", default="12m")
    p.add_argument("--ehr-set", default="none", choices=("none", "limited10", "full158"))
    p.add_argument("--factor", type=int, default=1)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--sizes", default="10,20,40,80", help="comma-separated ascending sizes")
    p.add_argument("--holdout-per-class", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--optimizer", default="auto")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("compare", help="machine-vs-reader report from stored responses")
    _add_common(p)
    p.add_argument("--responses", type=Path, required=True)
    p.add_argument("--scores", type=Path, required=True,
                   help="CSV with case_id,score,label columns")

    p = sub.add_parser("serve", help="run the reader-study service")
    _add_common(p)
    p.add_argument("--cases", type=Path, required=True)
    p.add_argument("--tokens", type=Path, required=True)
    p.add_argument("--store", type=Path, default=None)
    p.add_argument("--static", type=Path, default=None)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--allow-unbalanced", action="store_true")

    return ap


# run-config field -> command-line dest, where the two differ
_CONFIG_ALIASES = {"data_dir": "data", "out_dir": "out", "architecture": "arch"}


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser,
                       argv: list[str]) -> argparse.Namespace:
    """Values from --config JSON fill anything not given on the command line."""
    if args.config is None:
        return args
    with open(args.config, encoding="utf-8") as fh:
        stored = json.load(fh)
    given = {a.split("=")[0].lstrip("-").replace("-", "_")
             for a in argv if a.startswith("--")}
    for key, value in stored.items():
        attr = _CONFIG_ALIASES.get(key, key.replace("-", "_"))
        if attr in ("command", "config"):
            continue
        if attr == "curve_sizes" and hasattr(args, "sizes"):
            if "sizes" not in given:
                args.sizes = ",".join(str(v) for v in value)
            continue
        if hasattr(args, attr) and attr not in given:
            current = getattr(args, attr)
            if isinstance(current, bool) or value is None or current is None:
                setattr(args, attr, value)
            else:
                setattr(args, attr, type(current)(value))
    return args


# ---------------------------------------------------------------------------
# subcommand bodies

def cmd_synth(args) -> int:
    cfg = SynthConfig(n=args.n, seed=args.seed, height=args.height, width=args.width,
                      duration=args.duration, noise=args.noise,
                      contraction_jitter=args.contraction_jitter,
                      views=tuple(v.strip() for v in args.views.split(",") if v.strip()),
                      censor_frac=args.censor_frac,
                      multi_study_frac=args.multi_study_frac)
    out = build_corpus(args.out, cfg)
    print(f"corpus written to {out}")
    return EXIT_OK


def cmd_preprocess_video(args) -> int:
    records = read_manifest(args.manifest)
    want = normalize_view_tag(args.view)
    base = args.manifest.parent
    chosen = []
    for rec in records:
        for v in rec.videos:
            if normalize_view_tag(v["view_tag"]) == want:
                chosen.append((rec, v["path"]))
                break
    if not chosen:
        raise DataError(f"no videos tagged as {args.view!r} in {args.manifest}")
    videos = [read_evid(base / path) for _, path in chosen]
    th, tw = modal_dims(videos)
    out_dir = Path(args.out)
    (out_dir / "clips").mkdir(parents=True, exist_ok=True)
    index = []
    for (rec, _), video in zip(chosen, videos):
        clip = preprocess_video(video, th, tw, factor=args.factor, frames=args.frames)
        u8 = np.rint(clip.tensor[..., 0] * 255.0).astype(np.uint8)
        rel = f"clips/{rec.study_id}.evid"
        from .video.evid import RawVideo
        write_evid(out_dir / rel, RawVideo(frames=u8, fps=30.0, view_tag=want,
                                           acquisition_id=rec.study_id))
        index.append({"study_id": rec.study_id, "patient_id": rec.patient_id,
                      "path": rel, "frames": int(clip.shape[0]),
                      "height": int(clip.shape[1]), "width": int(clip.shape[2]),
                      "provenance": list(clip.provenance)})
    with open(out_dir / "clips.jsonl", "w", encoding="utf-8") as fh:
        for row in index:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"{len(index)} clips ({th}x{tw} -> factor {args.factor}) in {out_dir}")
    return EXIT_OK


def cmd_preprocess_ehr(args) -> int:
    table = read_ehr_csv(args.input)
    completed = complete_table(table)
    records = read_manifest(args.manifest)
    by_study = {r.study_id: r for r in records}
    h_days = horizon_days(args.horizon)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ehr_csv(out_dir / "completed.csv", completed)
    write_sidecar(out_dir / "completed.stats.json", completed)
    rows = []
    for i, sid in enumerate(completed.study_ids):
        rec = by_study.get(sid)
        if rec is None:
            raise DataError(f"study {sid} present in EHR table but not the manifest")
        label = derive_label(rec.study_date, rec.death_date,
                             rec.last_encounter_date, h_days)
        rows.append((sid, rec.patient_id,
                     "" if label == EXCLUDED else label))
    report.write_csv(out_dir / "labels.csv", ["study_id", "patient_id", "label"], rows)
    n_excluded = sum(1 for r in rows if r[2] == "")
    print(f"completed table + labels ({n_excluded} excluded at {args.horizon}) in {out_dir}")
    return EXIT_OK


def cmd_flow(args) -> int:
    video = read_evid(args.input)
    field = farneback_flow(video)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.mode == "color":
        colored = flow_to_color(field)
        out_path = out_dir / f"{args.input.stem}.flow.evid"
        write_evid(out_path, colored)
    else:
        mag = field.magnitude
        p99 = np.percentile(mag, 99.0)
        u8 = np.clip(np.rint(mag / p99 * 255.0) if p99 > 0 else mag, 0, 255).astype(np.uint8)
        from .video.evid import RawVideo
        out_path = out_dir / f"{args.input.stem}.flowmag.evid"
        write_evid(out_path, RawVideo(frames=u8, fps=video.fps))
    print(f"flow written to {out_path}")
    return EXIT_OK


def _log_epoch(quiet):
    if quiet:
        return None

    def log(fold, epoch, train_loss, val_loss):
        print(f"  fold {fold} epoch {epoch}: train {train_loss:.4f} val {val_loss:.4f}",
              flush=True)
    return log


def cmd_train(args) -> int:
    config = RunConfig(
        experiment=args.experiment, data_dir=str(args.data), out_dir=str(args.out),
        seed=args.seed, horizon=args.horizon, view=args.view, architecture=args.arch,
        ehr_set=args.ehr_set, factor=args.factor, frames=args.frames, flow=args.flow,
        folds=args.folds, batch_size=args.batch_size, max_epochs=args.max_epochs,
        patience=args.patience, optimizer=args.optimizer,
        learning_rate=args.learning_rate, holdout_per_class=args.holdout_per_class,
        single_thread=args.single_thread)
    run_dir = run_experiment(config, log=_log_epoch(args.quiet))
    print(f"run complete: {run_dir}")
    return EXIT_OK


def cmd_learning_curve(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(",") if s.strip())
    config = RunConfig(
        experiment="learning-curve", data_dir=str(args.data), out_dir=str(args.out),
        seed=args.seed, horizon=args.horizon, view=args.view, architecture=args.arch,
        ehr_set=args.ehr_set, factor=args.factor, frames=args.frames,
        batch_size=args.batch_size, max_epochs=args.max_epochs, patience=args.patience,
        optimizer=args.optimizer, holdout_per_class=args.holdout_per_class,
        curve_sizes=sizes, single_thread=args.single_thread)
    run_dir = run_experiment(config, log=_log_epoch(args.quiet))
    print(f"learning curve in {run_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scores, labels = [], []
    with open(args.scores, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scores.append(float(row["score"]))
            labels.append(int(row["label"]))
    scores = np.array(scores)
    labels = np.array(labels)
    out_dir = Path(args.out)
    (out_dir / "figures").mkdir(parents=True, exist_ok=True)
    curve = roc_curve(scores, labels)
    metrics = confusion_at(scores, labels, args.threshold)
    payload = {"auc": roc_auc(scores, labels), "n": int(labels.size), **metrics}
    report.write_json(out_dir / "metrics.json", payload)
    report.write_csv(out_dir / "roc.csv", ["fpr", "tpr", "threshold"],
                     list(zip(curve.fpr.tolist(), curve.tpr.tolist(),
                              curve.thresholds.tolist())))
    report.fig_roc(curve.fpr, curve.tpr, curve.auc, out_dir / "figures" / "roc.png")
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    case_ids, truth, scores = [], {}, {}
    with open(args.scores, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cid = row["case_id"]
            case_ids.append(cid)
            truth[cid] = int(row["label"])
            scores[cid] = float(row["score"])
    responses: dict[str, dict[str, str]] = {}
    with open(args.responses, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            responses.setdefault(rec["reviewer_id"], {})[rec["case_id"]] = rec["choice"]
    if not responses:
        raise DataError(f"{args.responses}: no responses")
    case_ids = sorted(set(case_ids))
    y = np.array([truth[c] for c in case_ids])
    s = np.array([scores[c] for c in case_ids])
    reviewer_ids = sorted(responses)
    columns, responders = [], []
    for rid in reviewer_ids:
        missing = [c for c in case_ids if c not in responses[rid]]
        if missing:
            raise DataError(f"reviewer {rid} missing {len(missing)} responses")
        pred = np.array([1 if responses[rid][c] == "Dead" else 0 for c in case_ids])
        columns.append((pred == y).astype(int))
        pos = y == 1
        responders.append({"id": rid, "kind": "reviewer",
                           "accuracy": float((pred == y).mean()),
                           "sensitivity": float((pred[pos] == 1).mean()),
                           "specificity": float((pred[~pos] == 0).mean())})
    mpred = (s >= 0.5).astype(int)
    columns.append((mpred == y).astype(int))
    mm = confusion_at(s, y, 0.5)
    responders.append({"id": "machine", "kind": "machine",
                       "accuracy": mm["accuracy"], "sensitivity": mm["sensitivity"],
                       "specificity": mm["specificity"]})
    matrix = np.stack(columns, axis=1)
    names = reviewer_ids + ["machine"]
    q, p = cochran_q(matrix)
    pairwise = [{"pair": [names[r["pair"][0]], names[r["pair"][1]]],
                 "q": r["q"], "raw_p": r["raw_p"], "adjusted_p": r["adjusted_p"]}
                for r in pairwise_posthoc(matrix)]
    curve = roc_curve(s, y)
    payload = {
        "n_cases": len(case_ids),
        "responders": responders,
        "cochran_q": {"q": q, "p": p},
        "pairwise": pairwise,
        "machine_roc": {"fpr": curve.fpr.tolist(), "tpr": curve.tpr.tolist(),
                        "auc": curve.auc},
        "machine_operating_point": {"fpr": 1.0 - mm["specificity"],
                                    "tpr": mm["sensitivity"]},
    }
    out_dir = Path(args.out)
    (out_dir / "figures").mkdir(parents=True, exist_ok=True)
    report.write_json(out_dir / "report.json", payload)
    report.write_csv(out_dir / "roc.csv", ["fpr", "tpr", "threshold"],
                     list(zip(curve.fpr.tolist(), curve.tpr.tolist(),
                              curve.thresholds.tolist())))
    report.fig_reader_comparison(payload, out_dir / "figures" / "reader_comparison.png")
    print(f"report in {out_dir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .study.service import create_app

    store = args.store or (args.cases.parent / "responses.jsonl")
    app = create_app(args.cases, args.tokens, store, static_dir=args.static,
                     allow_unbalanced=args.allow_unbalanced)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "preprocess-video": cmd_preprocess_video,
    "preprocess-ehr": cmd_preprocess_ehr,
    "flow": cmd_flow,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "learning-curve": cmd_learning_curve,
    "compare": cmd_compare,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args, parser, argv)
        if getattr(args, "single_thread", False):
            import threadpoolctl
            threadpoolctl.threadpool_limits(limits=1)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PrognoscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
