"""foldwise: fold-ensemble evaluation and explainability toolkit.

Everything downstream of model training for a k-fold image-classification
run: stratified splitting and fold planning, prediction-file interchange,
the evaluation-metric suite (confusion matrix, classification report, ROC /
AUC, interpolated mean ROC), fold ensembles (soft majority vote and a
from-scratch random forest over fold probabilities), and the XAI layer
(Grad-CAM compositing, LIME, heatmap averaging and overlays).
"""

from .dataset import (
    ClassVocabulary,
    DatasetIndex,
    FoldPlan,
    SampleRecord,
    SplitAssignment,
    load_index,
    stratified_holdout_split,
    stratified_kfold,
)
from .predictions import PredictionMatrix, hard_labels, load_predictions, save_predictions
from .metrics import (
    ClassificationReport,
    ConfusionMatrix,
    RocCurve,
    auc,
    classification_report,
    confusion_matrix,
    mean_roc,
    roc_curve,
)
from .ensemble import (
    DecisionTree,
    FeatureTable,
    RandomForestModel,
    RfParams,
    build_ensemble_features,
    gini,
    load_model,
    rf_predict,
    rf_train,
    save_model,
    soft_majority_vote,
)

__version__ = "0.1.0"
