"""Run configuration: one JSON document driving every CLI subcommand.

Relative paths inside the file resolve against the directory containing the
config file. Command-line flags (``--seed``, ``--out``) override file values.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import ClassVocabulary, SET_NAMES
from .ensemble import RfParams
from .errors import ArgumentError
from .xai.lime import LimeParams

_KNOWN_KEYS = {
    "index",
    "classes",
    "fractions",
    "k",
    "seed",
    "out_dir",
    "positive_class",
    "fold_predictions",
    "ensemble_predictions",
    "rf",
    "lime",
    "predictor_command",
    "tensor_dir",
    "image_root",
    "xai",
}
_KNOWN_XAI_KEYS = {"images", "folds", "alpha", "lime_folds", "dump_heatmaps"}


@dataclass(frozen=True)
class RunConfig:
    classes: tuple[str, ...]
    index_path: Path | None = None
    fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    k: int = 3
    seed: int = 0
    out_dir: Path = Path("out")
    positive_class: str | None = None
    fold_predictions: dict[str, tuple[Path, ...]] = field(default_factory=dict)
    ensemble_predictions: dict[str, Path] = field(default_factory=dict)
    rf: RfParams = field(default_factory=RfParams)
    lime: LimeParams = field(default_factory=LimeParams)
    predictor_command: tuple[str, ...] | None = None  # ("stub",) selects the built-in
    tensor_dir: Path | None = None
    image_root: Path = Path(".")
    xai_images: tuple[str, ...] = ()
    xai_folds: tuple[int, ...] | None = None
    xai_alpha: float = 0.5
    xai_lime_folds: tuple[int, ...] = ()
    xai_dump_heatmaps: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ArgumentError(f"k must be >= 2, got {self.k}")
        if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ArgumentError("fractions must be 3 values summing to 1")
        if not 0.0 <= self.xai_alpha <= 1.0:
            raise ArgumentError("xai alpha must lie in [0, 1]")

    @property
    def vocab(self) -> ClassVocabulary:
        return ClassVocabulary(tuple(self.classes))

    @property
    def positive_class_id(self) -> int:
        name = self.positive_class if self.positive_class is not None else self.classes[-1]
        return self.vocab.index_of(name)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ArgumentError(message)


def load_config(
    path: str | Path, seed: int | None = None, out_dir: str | None = None
) -> RunConfig:
    """Parse a JSON run configuration; flag overrides win over file values."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArgumentError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ArgumentError(f"{path}: config must be a JSON object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        warnings.warn(f"{path}: ignoring unknown config keys {sorted(unknown)}", UserWarning)
    base = path.parent

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    classes = doc.get("classes")
    _require(isinstance(classes, list) and len(classes) >= 2, "config needs a 'classes' list (>= 2 names)")

    fold_predictions: dict[str, tuple[Path, ...]] = {}
    for set_name, paths in (doc.get("fold_predictions") or {}).items():
        _require(set_name in SET_NAMES, f"unknown evaluation set {set_name!r} in fold_predictions")
        _require(isinstance(paths, list) and paths, f"fold_predictions[{set_name!r}] must be a non-empty list")
        fold_predictions[set_name] = tuple(resolve(p) for p in paths)

    ensemble_predictions = {
        str(name): resolve(p) for name, p in (doc.get("ensemble_predictions") or {}).items()
    }

    rf_doc = doc.get("rf") or {}
    _require(isinstance(rf_doc, dict), "'rf' must be an object")
    lime_doc = doc.get("lime") or {}
    _require(isinstance(lime_doc, dict), "'lime' must be an object")
    try:
        rf = RfParams(**rf_doc)
        lime = LimeParams(**lime_doc)
    except TypeError as exc:
        raise ArgumentError(f"{path}: bad rf/lime parameters: {exc}") from exc

    predictor = doc.get("predictor_command")
    if predictor is None:
        predictor_command = None
    elif isinstance(predictor, str):
        predictor_command = (predictor,)
    elif isinstance(predictor, list) and predictor and all(isinstance(a, str) for a in predictor):
        predictor_command = tuple(predictor)
    else:
        raise ArgumentError("'predictor_command' must be a string or a list of strings")

    xai_doc = doc.get("xai") or {}
    _require(isinstance(xai_doc, dict), "'xai' must be an object")
    unknown = set(xai_doc) - _KNOWN_XAI_KEYS
    if unknown:
        warnings.warn(f"{path}: ignoring unknown xai keys {sorted(unknown)}", UserWarning)

    effective_seed = seed if seed is not None else int(doc.get("seed", 0))
    effective_out = Path(out_dir) if out_dir is not None else resolve(doc.get("out_dir", "out"))

    try:
        return RunConfig(
            classes=tuple(classes),
            index_path=resolve(doc["index"]) if "index" in doc else None,
            fractions=tuple(float(f) for f in doc.get("fractions", (0.7, 0.15, 0.15))),
            k=int(doc.get("k", 3)),
            seed=effective_seed,
            out_dir=effective_out,
            positive_class=doc.get("positive_class"),
            fold_predictions=fold_predictions,
            ensemble_predictions=ensemble_predictions,
            rf=rf,
            lime=lime,
            predictor_command=predictor_command,
            tensor_dir=resolve(doc["tensor_dir"]) if "tensor_dir" in doc else None,
            image_root=resolve(doc.get("image_root", ".")),
            xai_images=tuple(xai_doc.get("images", ())),
            xai_folds=tuple(int(f) for f in xai_doc["folds"]) if "folds" in xai_doc else None,
            xai_alpha=float(xai_doc.get("alpha", 0.5)),
            xai_lime_folds=tuple(int(f) for f in xai_doc.get("lime_folds", ())),
            xai_dump_heatmaps=bool(xai_doc.get("dump_heatmaps", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ArgumentError(f"{path}: bad config value: {exc}") from exc
