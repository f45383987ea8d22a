"""adapter-predict: the file-based predictor protocol.

Invoked as ``adapter-predict --manifest <csv> --out <csv>``. The manifest
lists ``row_id,image_path`` rows; the reply is a prediction file whose
sample ids are the row ids. The checkpoint is configured by environment:

    ADAPTER_CHECKPOINT   path to a trained .keras model (required)
    ADAPTER_CLASSES      comma-separated class names (required)
    ADAPTER_IMAGE_SIZE   input edge length (default 224)

An empty manifest yields a header-only prediction file and exit 0. Any
unreadable image aborts with a nonzero exit and no output file.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .dataio import load_batch, read_manifest, write_predictions


def serve(manifest_path: str, out_path: str) -> int:
    checkpoint = os.environ.get("ADAPTER_CHECKPOINT")
    classes_env = os.environ.get("ADAPTER_CLASSES")
    if not checkpoint or not classes_env:
        print(
            "adapter-predict: ADAPTER_CHECKPOINT and ADAPTER_CLASSES must be set",
            file=sys.stderr,
        )
        return 2
    classes = tuple(classes_env.split(","))
    size = int(os.environ.get("ADAPTER_IMAGE_SIZE", "224"))

    try:
        rows = read_manifest(manifest_path)
    except (OSError, ValueError) as exc:
        print(f"adapter-predict: bad manifest: {exc}", file=sys.stderr)
        return 1

    if not rows:
        write_predictions(out_path, [], [], classes)
        return 0

    manifest_dir = Path(manifest_path).parent
    paths = []
    for row_id, image_path in rows:
        p = Path(image_path)
        paths.append(p if p.is_absolute() else manifest_dir / p)
    try:
        x = load_batch(paths, size)
    except OSError as exc:
        print(f"adapter-predict: unreadable image: {exc}", file=sys.stderr)
        return 1

    import tensorflow as tf

    model = tf.keras.models.load_model(checkpoint)
    probs = model.predict(x, verbose=0)
    if probs.shape[1] != len(classes):
        print(
            f"adapter-predict: model emits {probs.shape[1]} classes, "
            f"ADAPTER_CLASSES names {len(classes)}",
            file=sys.stderr,
        )
        return 2
    write_predictions(out_path, [row_id for row_id, _ in rows], probs, classes)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adapter-predict", description=__doc__)
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    return serve(args.manifest, args.out)


if __name__ == "__main__":
    sys.exit(main())
