"""Tree-ensemble learners implemented on a shared histogram split engine."""

from .forest import fit_extra_trees, fit_random_forest
from .gbdt import fit_gbdt, logistic_grad_hess, logistic_loss
from .model import (
    DEFAULTS,
    GBDT_KINDS,
    KINDS,
    ForestModel,
    HyperParams,
    default_hyperparams,
    fit_model,
    sigmoid,
)
from .tree import Tree


def predict_proba(model: ForestModel, data):
    return model.predict_proba(data)


__all__ = [
    "DEFAULTS",
    "GBDT_KINDS",
    "KINDS",
    "ForestModel",
    "HyperParams",
    "Tree",
    "default_hyperparams",
    "fit_extra_trees",
    "fit_gbdt",
    "fit_model",
    "fit_random_forest",
    "logistic_grad_hess",
    "logistic_loss",
    "predict_proba",
    "sigmoid",
]
