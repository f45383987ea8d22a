"""Batch CLI: ``foldwise split|ensemble|evaluate|xai --config run.json``.

Pipeline shape: split the index and plan folds, train models elsewhere (any
producer of prediction files and tensor exports), then build ensembles,
evaluate everything, and render the XAI artifacts.

Commands are idempotent: outputs are staged in a temporary directory inside
the output directory and published by rename only on success, and a lockfile
gives one running command exclusive ownership of the output directory.

Exit codes: 0 success; 1 input/schema problem; 2 argument/config problem;
3 degenerate data. ``FOLDWISE_LOG`` sets the diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import plots
from .config import RunConfig, load_config
from .dataset import (
    DatasetIndex,
    SET_NAMES,
    load_index,
    stratified_holdout_split,
    stratified_kfold,
)
from .ensemble import build_ensemble_features, rf_predict, rf_train, save_model, soft_majority_vote
from .errors import (
    AlignmentError,
    ArgumentError,
    DegenerateDataError,
    FoldwiseError,
    FormatError,
    ProtocolError,
    SchemaError,
    ValidationError,
)
from .metrics import (
    auc,
    classification_report,
    confusion_matrix,
    mean_roc,
    roc_curve,
    roc_to_csv_rows,
)
from .predictions import load_predictions, hard_labels, save_predictions
from .xai.heatmaps import average_heatmaps, grad_cam, overlay, upsample_bilinear
from .xai.images import load_png, save_png
from .xai.lime import CommandPredictor, StubPredictor, lime_explain, lime_render, segment_grid
from .xai.tensorfile import Tensor32, read_tensor, write_tensor

log = logging.getLogger("foldwise")

_LOCK_NAME = ".foldwise.lock"


class _OutputStage:
    """Write files into a staging directory; publish them only on success."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        self._stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out_dir))

    def path(self, name: str) -> Path:
        return self._stage / name

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text, encoding="utf-8")

    def write_rows(self, name: str, rows) -> None:
        with self.path(name).open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)

    def publish(self) -> list[str]:
        published = []
        for item in sorted(self._stage.iterdir()):
            os.replace(item, self.out_dir / item.name)
            published.append(item.name)
        return published

    def discard(self) -> None:
        shutil.rmtree(self._stage, ignore_errors=True)


class _Lock:
    def __init__(self, out_dir: Path):
        out_dir.mkdir(parents=True, exist_ok=True)
        self.path = out_dir / _LOCK_NAME
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ArgumentError(
                f"output directory {out_dir} is locked by another run ({self.path} exists)"
            ) from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)

    def release(self) -> None:
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def _load_required_index(config: RunConfig) -> DatasetIndex:
    if config.index_path is None:
        raise ArgumentError("config does not name an 'index' file")
    return load_index(config.index_path, config.vocab)


def _truth_ids(index: DatasetIndex, sample_ids, vocab) -> np.ndarray:
    labels = index.labels_by_id()
    missing = [sid for sid in sample_ids if sid not in labels]
    if missing:
        raise AlignmentError(f"prediction ids absent from the index: {missing[:5]!r}")
    return np.array([vocab.index_of(labels[sid]) for sid in sample_ids], dtype=np.int64)


def cmd_split(config: RunConfig) -> int:
    """Write split.csv and folds.csv; print per-set and per-fold class counts."""
    index = _load_required_index(config)
    split = stratified_holdout_split(index, config.fractions, config.seed)
    labels_by_id = index.labels_by_id()
    train_ids = [rec.sample_id for rec in index.records if split.assignment[rec.sample_id] == "train"]
    plan = stratified_kfold({sid: labels_by_id[sid] for sid in train_ids}, config.k, config.seed)
    fold_of = plan.validation_fold_of()

    stage = _OutputStage(config.out_dir)
    try:
        stage.write_rows(
            "split.csv",
            [["sample_id", "set"]] + [[rec.sample_id, split.assignment[rec.sample_id]] for rec in index.records],
        )
        stage.write_rows(
            "folds.csv",
            [["sample_id", "fold"]] + [[sid, str(fold_of[sid] + 1)] for sid in train_ids],
        )
        published = stage.publish()
    finally:
        stage.discard()

    for set_name in SET_NAMES:
        ids = [sid for sid in index.sample_ids if split.assignment[sid] == set_name]
        counts = {name: 0 for name in config.vocab.names}
        for sid in ids:
            counts[labels_by_id[sid]] += 1
        pretty = " ".join(f"{name}={n}" for name, n in counts.items())
        print(f"{set_name}: total={len(ids)} {pretty}")
    for f, (fold_train, fold_val) in enumerate(plan.folds, start=1):
        counts = {name: 0 for name in config.vocab.names}
        for sid in fold_val:
            counts[labels_by_id[sid]] += 1
        pretty = " ".join(f"{name}={n}" for name, n in counts.items())
        print(f"fold{f}: train={len(fold_train)} validation={len(fold_val)} {pretty}")
    log.info("wrote %s to %s", ", ".join(published), config.out_dir)
    return 0


def _evaluation_sources(config: RunConfig) -> list[tuple[str, Path, bool]]:
    """(name, path, is_fold) for every prediction file to score."""
    sources = []
    fold_paths = config.fold_predictions.get("test_models", ())
    for i, path in enumerate(fold_paths, start=1):
        sources.append((f"fold{i}", path, True))
    for name, path in sorted(config.ensemble_predictions.items()):
        sources.append((name, path, False))
    return sources


def cmd_evaluate(config: RunConfig) -> int:
    """Score every fold and ensemble prediction file; emit reports and plots."""
    index = _load_required_index(config)
    vocab = config.vocab
    pos = config.positive_class_id
    sources = _evaluation_sources(config)
    if not sources:
        raise ArgumentError("nothing to evaluate: no fold_predictions['test_models'] or ensemble_predictions")

    stage = _OutputStage(config.out_dir)
    ok = False
    try:
        summary = []
        counts_rows = [["name", "tp", "tn", "fp", "fn"]]
        fold_curves = []
        for name, path, is_fold in sources:
            matrix = load_predictions(path, vocab)
            truth = _truth_ids(index, matrix.sample_ids, vocab)
            predicted = hard_labels(matrix)
            cm = confusion_matrix(truth, predicted, vocab)
            report = classification_report(cm)
            stage.write_text(f"report_{name}.json", report.to_json() + "\n")
            tp, tn, fp, fn = cm.binary_counts(pos)
            counts_rows.append([name, str(tp), str(tn), str(fp), str(fn)])
            curve = roc_curve(matrix.rows[:, pos], truth == pos, pos)
            stage.write_rows(f"roc_{name}.csv", roc_to_csv_rows(curve))
            stage.write_text(
                f"roc_{name}.svg",
                plots.roc_svg([(f"{name} (auc={auc(curve):.4f})", curve)], f"ROC {name}"),
            )
            if is_fold:
                fold_curves.append((name, curve))
            summary.append((name, report.macro_avg.f1))
            print(f"{name}: macro_f1={report.macro_avg.f1:.4f} auc={auc(curve):.4f}")

        stage.write_rows("confusion_counts.csv", counts_rows)
        stage.write_rows(
            "macro_f1_summary.csv",
            [["name", "macro_f1"]] + [[name, f"{f1:.9g}"] for name, f1 in summary],
        )
        stage.write_text(
            "macro_f1_summary.svg",
            plots.bar_svg([n for n, _ in summary], [f for _, f in summary], "macro f1 by source"),
        )
        if fold_curves:
            mean = mean_roc([c for _, c in fold_curves])
            stage.write_rows("mean_roc.csv", roc_to_csv_rows(mean))
            stage.write_text(
                "mean_roc.svg",
                plots.roc_svg(
                    [*fold_curves, (f"mean (auc={auc(mean):.4f})", mean)], "ROC folds + mean"
                ),
            )
        stage.publish()
        ok = True
    finally:
        stage.discard()
        if not ok:
            log.error("evaluation failed; no outputs were published")
    return 0


def cmd_ensemble(config: RunConfig) -> int:
    """Train/score the random forest and compute the soft majority vote."""
    index = _load_required_index(config)
    vocab = config.vocab
    tm_paths = config.fold_predictions.get("test_models")
    if not tm_paths:
        raise ArgumentError("ensemble needs fold_predictions['test_models']")
    te_paths = config.fold_predictions.get("test_ensemble")

    tm_matrices = [load_predictions(p, vocab) for p in tm_paths]
    stage = _OutputStage(config.out_dir)
    ok = False
    try:
        smv_tm, _ = soft_majority_vote(tm_matrices)
        save_predictions(smv_tm, stage.path("predictions_smv_test_models.csv"))

        if te_paths:
            te_matrices = [load_predictions(p, vocab) for p in te_paths]
            smv_te, _ = soft_majority_vote(te_matrices)
            save_predictions(smv_te, stage.path("predictions_smv_test_ensemble.csv"))

            labels = _truth_ids(index, tm_matrices[0].sample_ids, vocab)
            features_tm = build_ensemble_features(tm_matrices, labels)
            model = rf_train(features_tm, config.rf, config.seed)
            save_model(model, stage.path("rf_model.json"))
            features_te = build_ensemble_features(te_matrices)
            _, votes = rf_predict(model, features_te)
            save_predictions(votes, stage.path("predictions_rf_test_ensemble.csv"))
        else:
            log.warning(
                "no fold_predictions['test_ensemble'] configured: skipping the random forest, "
                "writing only the soft majority vote"
            )
        published = stage.publish()
        ok = True
    finally:
        stage.discard()
        if not ok:
            log.error("ensemble failed; no outputs were published")
    print("wrote " + ", ".join(published))
    return 0


def _predictor_handle(config: RunConfig, fold: int):
    command = config.predictor_command
    if command is None:
        return None
    if command == ("stub",):
        return StubPredictor(config.vocab, hot_class=config.positive_class_id)
    substituted = [arg.replace("{fold}", str(fold)) for arg in command]
    return CommandPredictor(substituted, config.vocab)


def cmd_xai(config: RunConfig) -> int:
    """Grad-CAM per fold + cross-fold mean, overlays, and LIME renderings."""
    index = _load_required_index(config)
    if config.tensor_dir is None:
        raise ArgumentError("config does not name a 'tensor_dir'")
    if not config.xai_images:
        log.warning("no xai images configured; nothing to do")
        return 0
    folds = config.xai_folds if config.xai_folds is not None else tuple(range(1, config.k + 1))
    records = {rec.sample_id: rec for rec in index.records}

    stage = _OutputStage(config.out_dir)
    succeeded = 0
    ok = False
    try:
        for image_id in config.xai_images:
            try:
                rec = records.get(image_id)
                if rec is None:
                    raise SchemaError(f"image id {image_id!r} is not in the index")
                if not rec.image_path:
                    raise SchemaError(f"image id {image_id!r} has no image path in the index")
                image = load_png(config.image_root / rec.image_path)

                heatmaps = []
                for f in folds:
                    act = read_tensor(config.tensor_dir / f"{image_id}_fold{f}.act.tnsr")
                    grad = read_tensor(config.tensor_dir / f"{image_id}_fold{f}.grad.tnsr")
                    heatmaps.append(grad_cam(act, grad))
                mean_map = average_heatmaps(heatmaps)

                for f, hm in zip(folds, heatmaps):
                    up = upsample_bilinear(hm, image.width, image.height)
                    save_png(overlay(image, up, config.xai_alpha), stage.path(f"{image_id}.fold{f}.gradcam.png"))
                    if config.xai_dump_heatmaps:
                        write_tensor(Tensor32(hm.values.astype(np.float32)), stage.path(f"{image_id}.fold{f}.gradcam.tnsr"))
                up = upsample_bilinear(mean_map, image.width, image.height)
                save_png(overlay(image, up, config.xai_alpha), stage.path(f"{image_id}.mean.gradcam.png"))
                if config.xai_dump_heatmaps:
                    write_tensor(Tensor32(mean_map.values.astype(np.float32)), stage.path(f"{image_id}.mean.gradcam.tnsr"))

                for f in config.xai_lime_folds:
                    predictor = _predictor_handle(config, f)
                    if predictor is None:
                        log.warning("lime folds configured but no predictor_command; skipping LIME")
                        break
                    segmap = segment_grid(image, config.lime.grid_size)
                    expl = lime_explain(
                        image, segmap, predictor, config.positive_class_id, config.lime, config.seed
                    )
                    save_png(lime_render(image, segmap, expl), stage.path(f"{image_id}.fold{f}.lime.png"))
                succeeded += 1
            except (FileNotFoundError, FoldwiseError) as exc:
                log.warning("skipping image %r: %s", image_id, exc)
        stage.publish()
        ok = True
    finally:
        stage.discard()
        if not ok:
            log.error("xai failed; no outputs were published")
    if succeeded == 0:
        log.error("no image produced any output")
        return 1
    print(f"processed {succeeded} of {len(config.xai_images)} images")
    return 0


_COMMANDS = {
    "split": cmd_split,
    "evaluate": cmd_evaluate,
    "ensemble": cmd_ensemble,
    "xai": cmd_xai,
}


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, ArgumentError):
        return 2
    if isinstance(exc, DegenerateDataError):
        return 3
    if isinstance(exc, (SchemaError, ValidationError, AlignmentError, FormatError, ProtocolError)):
        return 1
    if isinstance(exc, FileNotFoundError):
        return 1
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="foldwise",
        description="Fold-ensemble evaluation and explainability pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--out", default=None, help="override the configured output directory")
    args = parser.parse_args(argv)

    level = os.environ.get("FOLDWISE_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )

    lock = None
    try:
        config = load_config(args.config, seed=args.seed, out_dir=args.out)
        lock = _Lock(config.out_dir)
        return _COMMANDS[args.command](config)
    except (FoldwiseError, FileNotFoundError) as exc:
        log.error("%s", exc)
        print(f"foldwise {args.command}: error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    finally:
        if lock is not None:
            lock.release()


if __name__ == "__main__":
    sys.exit(main())
