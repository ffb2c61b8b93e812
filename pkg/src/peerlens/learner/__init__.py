"""Tree-ensemble classifiers: random forest and gradient-boosted trees."""

from ._tree import Split, Tree, best_split, grow_tree
from .ensemble import (Hyperparams, Mode, TreeEnsembleModel, check_binding, fit, fit_dataset,
                       logistic_loss, predict_label, predict_proba)
from .estimators import GradientBoostedTrees, RandomForest
from .persist import ModelFormatError, SchemaMismatchError, dumps, load, save

__all__ = [
    "GradientBoostedTrees", "Hyperparams", "Mode", "ModelFormatError", "RandomForest",
    "SchemaMismatchError", "Split", "Tree", "TreeEnsembleModel", "best_split", "check_binding",
    "dumps", "fit", "fit_dataset", "grow_tree", "load", "logistic_loss", "predict_label",
    "predict_proba", "save",
]
