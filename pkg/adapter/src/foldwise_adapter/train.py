"""adapter-train: fit one model per cross-validation fold and emit the
per-fold prediction files for both held-out sets."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import AdapterConfig, load_adapter_config
from .dataio import load_batch, read_folds, read_index, read_split, write_predictions
from .model import build_model, train_fold

log = logging.getLogger("foldwise_adapter")


def _one_hot(labels, classes):
    index = {name: i for i, name in enumerate(classes)}
    y = np.zeros((len(labels), len(classes)), dtype=np.float32)
    for row, label in enumerate(labels):
        y[row, index[label]] = 1.0
    return y


def _image_paths(records, config: AdapterConfig) -> dict[str, Path]:
    paths = {}
    for rec in records:
        if not rec["image_path"]:
            raise FileNotFoundError(f"sample {rec['sample_id']!r} has no image path")
        paths[rec["sample_id"]] = config.image_root / rec["image_path"]
    return paths


def train_all_folds(config: AdapterConfig, folds: list[int] | None = None) -> list[Path]:
    import tensorflow as tf

    tf.keras.utils.set_random_seed(config.seed)

    records = read_index(config.index_path)
    split = read_split(config.split_path)
    fold_of = read_folds(config.folds_path)
    label_of = {rec["sample_id"]: rec["label"] for rec in records}
    paths = _image_paths(records, config)

    train_ids = [r["sample_id"] for r in records if split.get(r["sample_id"]) == "train"]
    eval_sets = {
        name: [r["sample_id"] for r in records if split.get(r["sample_id"]) == name]
        for name in ("test_models", "test_ensemble")
    }
    fold_numbers = folds if folds is not None else sorted(set(fold_of.values()))

    written = []
    for fold in fold_numbers:
        val_ids = [sid for sid in train_ids if fold_of[sid] == fold]
        fit_ids = [sid for sid in train_ids if fold_of[sid] != fold]
        if not val_ids or not fit_ids:
            raise ValueError(f"fold {fold} has an empty train or validation side")
        log.info("fold %d: %d train / %d validation images", fold, len(fit_ids), len(val_ids))

        train_x = load_batch([paths[sid] for sid in fit_ids], config.image_size)
        train_y = _one_hot([label_of[sid] for sid in fit_ids], config.classes)
        val_x = load_batch([paths[sid] for sid in val_ids], config.image_size)
        val_y = _one_hot([label_of[sid] for sid in val_ids], config.classes)

        model = build_model(config.backbone, config.image_size, len(config.classes))
        train_fold(
            model,
            train_x,
            train_y,
            val_x,
            val_y,
            epochs=config.epochs,
            patience=config.patience,
            unfreeze_epoch=config.unfreeze_epoch,
            batch_size=config.batch_size,
            checkpoint_path=config.checkpoint_path(fold),
        )

        for set_name, ids in eval_sets.items():
            if not ids:
                continue
            x = load_batch([paths[sid] for sid in ids], config.image_size)
            probs = model.predict(x, batch_size=config.batch_size, verbose=0)
            out = config.out_dir / f"predictions_fold{fold}_{set_name}.csv"
            write_predictions(out, ids, probs, config.classes)
            written.append(out)
            log.info("wrote %s", out)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adapter-train", description=__doc__)
    parser.add_argument("--config", required=True)
    parser.add_argument("--folds", default=None, help="comma-separated fold numbers (default: all)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    config = load_adapter_config(args.config)
    folds = [int(f) for f in args.folds.split(",")] if args.folds else None
    try:
        written = train_all_folds(config, folds)
    except (FileNotFoundError, ValueError) as exc:
        print(f"adapter-train: {exc}", file=sys.stderr)
        return 1
    print("\n".join(str(p) for p in written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
