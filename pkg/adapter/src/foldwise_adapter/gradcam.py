"""adapter-export-gradcam: export activation/gradient tensor pairs.

For each requested image the fold checkpoint is evaluated, the feature maps
of the export layer are captured, and the gradient of the predicted class's
probability with respect to those maps is taken. Both tensors are written
as TNSR files with shape [channels, height, width]; a sidecar manifest
records the export layer name.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .config import AdapterConfig, load_adapter_config
from .dataio import load_image, read_index, write_tnsr
from .model import last_conv_layer_name

log = logging.getLogger("foldwise_adapter")


def export_pairs(config: AdapterConfig, image_ids: list[str], fold: int) -> list[str]:
    import tensorflow as tf

    checkpoint = config.checkpoint_path(fold)
    if not checkpoint.exists():
        raise FileNotFoundError(f"no trained checkpoint for fold {fold}: {checkpoint}")
    model = tf.keras.models.load_model(checkpoint)
    layer_name = config.export_layer or last_conv_layer_name(model)
    grad_model = tf.keras.Model(
        model.inputs, [model.get_layer(layer_name).output, model.output]
    )

    records = {rec["sample_id"]: rec for rec in read_index(config.index_path)}
    unknown = [i for i in image_ids if i not in records]
    if unknown:
        known = ", ".join(sorted(records)[:10])
        raise KeyError(f"unknown image ids {unknown}; known ids start with: {known}")

    written = []
    for image_id in image_ids:
        rec = records[image_id]
        x = load_image(config.image_root / rec["image_path"], config.image_size)[None]
        with tf.GradientTape() as tape:
            feature_maps, probs = grad_model(tf.constant(x))
            tape.watch(feature_maps)
            predicted = tf.argmax(probs[0])
            class_score = probs[:, predicted]
        grads = tape.gradient(class_score, feature_maps)

        act = np.transpose(feature_maps.numpy()[0], (2, 0, 1))  # HWC -> KHW
        grad = np.transpose(grads.numpy()[0], (2, 0, 1))
        if act.shape != grad.shape:
            raise RuntimeError(f"internal error: pair shapes differ {act.shape} vs {grad.shape}")
        act_path = config.out_dir / "tensors" / f"{image_id}_fold{fold}.act.tnsr"
        grad_path = config.out_dir / "tensors" / f"{image_id}_fold{fold}.grad.tnsr"
        write_tnsr(act_path, act)
        write_tnsr(grad_path, grad)
        written.extend([str(act_path), str(grad_path)])
        log.info("exported %s [%s]", image_id, "x".join(map(str, act.shape)))

    sidecar = config.out_dir / "tensors" / f"export_manifest_fold{fold}.json"
    sidecar.parent.mkdir(parents=True, exist_ok=True)
    sidecar.write_text(
        json.dumps({"fold": fold, "layer": layer_name, "images": image_ids}, indent=2),
        encoding="utf-8",
    )
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adapter-export-gradcam", description=__doc__)
    parser.add_argument("--config", required=True)
    parser.add_argument("--fold", type=int, required=True)
    parser.add_argument("--images", required=True, help="comma-separated image ids")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    config = load_adapter_config(args.config)
    try:
        written = export_pairs(config, args.images.split(","), args.fold)
    except (FileNotFoundError, KeyError) as exc:
        print(f"adapter-export-gradcam: {exc}", file=sys.stderr)
        return 1
    print("\n".join(written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
