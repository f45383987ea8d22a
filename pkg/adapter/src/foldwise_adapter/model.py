"""Model construction and the two-phase transfer-learning loop.

The network is a pretrained-or-fresh convolutional backbone with a softmax
classification head. Phase 1 trains the head with the backbone frozen;
after the configured epoch the backbone is unfrozen and training continues.
EarlyStopping (patience on validation loss) and ModelCheckpoint (best
validation loss) guard both phases, and the best checkpoint is what gets
used for prediction and export.
"""

from __future__ import annotations

import logging
import warnings
from pathlib import Path

import numpy as np

log = logging.getLogger("foldwise_adapter")

_HEAD_TAG = "head"


def _tf():
    import tensorflow as tf

    return tf


def build_model(backbone: str, image_size: int, n_classes: int):
    """Functional model ending in a softmax head; head layers carry a name tag."""
    tf = _tf()
    layers = tf.keras.layers
    inputs = tf.keras.Input(shape=(image_size, image_size, 3), name="image")
    if backbone == "tiny":
        x = layers.Conv2D(8, 3, padding="same", activation="relu", name="conv_a")(inputs)
        x = layers.MaxPooling2D(2, name="pool_a")(x)
        x = layers.Conv2D(16, 3, padding="same", activation="relu", name="conv_b")(x)
        x = layers.MaxPooling2D(2, name="pool_b")(x)
        x = layers.Conv2D(32, 3, padding="same", activation="relu", name="conv_c")(x)
    elif backbone == "mobilenet_v2":
        try:
            base = tf.keras.applications.MobileNetV2(
                include_top=False, weights="imagenet", input_tensor=inputs
            )
        except Exception as exc:  # pretrained weights unavailable offline
            warnings.warn(f"falling back to untrained MobileNetV2 weights: {exc}")
            base = tf.keras.applications.MobileNetV2(
                include_top=False, weights=None, input_tensor=inputs
            )
        x = base.output
    else:
        raise ValueError(f"unknown backbone {backbone!r} (expected 'mobilenet_v2' or 'tiny')")
    pooled = tf.keras.layers.GlobalAveragePooling2D(name=f"{_HEAD_TAG}_pool")(x)
    outputs = tf.keras.layers.Dense(n_classes, activation="softmax", name=f"{_HEAD_TAG}_dense")(pooled)
    return tf.keras.Model(inputs, outputs)


def last_conv_layer_name(model) -> str:
    names = [l.name for l in model.layers if l.__class__.__name__ in ("Conv2D", "DepthwiseConv2D")]
    if not names:
        raise ValueError("model has no convolutional layer to export")
    return names[-1]


def set_backbone_trainable(model, trainable: bool) -> None:
    for layer in model.layers:
        if not layer.name.startswith(_HEAD_TAG):
            layer.trainable = trainable


def _compile(model):
    tf = _tf()
    model.compile(
        optimizer=tf.keras.optimizers.Adam(1e-3),
        loss="categorical_crossentropy",
        metrics=["categorical_accuracy"],
    )


def train_fold(
    model,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    epochs: int,
    patience: int,
    unfreeze_epoch: int,
    batch_size: int,
    checkpoint_path: Path,
):
    """Two-phase fit; afterwards the model carries the best checkpoint weights."""
    tf = _tf()
    checkpoint_path.parent.mkdir(parents=True, exist_ok=True)

    def callbacks(best_so_far=None):
        return [
            tf.keras.callbacks.ModelCheckpoint(
                str(checkpoint_path),
                monitor="val_loss",
                save_best_only=True,
                initial_value_threshold=best_so_far,
            ),
            tf.keras.callbacks.EarlyStopping(monitor="val_loss", patience=patience),
        ]

    set_backbone_trainable(model, False)
    _compile(model)
    phase1 = min(unfreeze_epoch, epochs)
    history = model.fit(
        train_x,
        train_y,
        validation_data=(val_x, val_y),
        epochs=phase1,
        batch_size=batch_size,
        callbacks=callbacks(),
        verbose=0,
    )
    best = min(history.history["val_loss"])

    if epochs > phase1:
        set_backbone_trainable(model, True)
        _compile(model)  # recompile so the unfrozen weights join the optimizer
        history = model.fit(
            train_x,
            train_y,
            validation_data=(val_x, val_y),
            epochs=epochs - phase1,
            batch_size=batch_size,
            callbacks=callbacks(best),
            verbose=0,
        )
        best = min(best, min(history.history["val_loss"]))

    model.load_weights(str(checkpoint_path))
    log.info("best validation loss %.4f (checkpoint %s)", best, checkpoint_path)
    return model
