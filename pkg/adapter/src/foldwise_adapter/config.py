"""Adapter run configuration (JSON file, paths relative to the file)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class AdapterConfig:
    index_path: Path
    split_path: Path
    folds_path: Path
    classes: tuple[str, ...]
    image_root: Path
    out_dir: Path
    backbone: str = "mobilenet_v2"
    image_size: int = 224
    batch_size: int = 16
    epochs: int = 20
    patience: int = 5
    unfreeze_epoch: int = 5
    export_layer: str | None = None  # None: last convolutional layer
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.unfreeze_epoch < 1:
            raise ValueError("unfreeze_epoch must be >= 1")
        if len(self.classes) < 2:
            raise ValueError("need at least 2 classes")

    def checkpoint_path(self, fold: int) -> Path:
        return self.out_dir / "checkpoints" / f"fold{fold}.keras"


def load_adapter_config(path: str | Path) -> AdapterConfig:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    return AdapterConfig(
        index_path=resolve(doc["index"]),
        split_path=resolve(doc["split"]),
        folds_path=resolve(doc["folds"]),
        classes=tuple(doc["classes"]),
        image_root=resolve(doc.get("image_root", ".")),
        out_dir=resolve(doc.get("out_dir", "adapter_out")),
        backbone=doc.get("backbone", "mobilenet_v2"),
        image_size=int(doc.get("image_size", 224)),
        batch_size=int(doc.get("batch_size", 16)),
        epochs=int(doc.get("epochs", 20)),
        patience=int(doc.get("patience", 5)),
        unfreeze_epoch=int(doc.get("unfreeze_epoch", 5)),
        export_layer=doc.get("export_layer"),
        seed=int(doc.get("seed", 0)),
    )
