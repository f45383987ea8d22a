"""Reference model adapter for the foldwise toolkit.

Trains a transfer-learned CNN per cross-validation fold, emits per-fold
prediction files, exports Grad-CAM activation/gradient tensor pairs, and
serves the file-based predictor protocol. All exchange with the toolkit
goes through its file formats; nothing here imports the toolkit.
"""

__version__ = "0.1.0"
