from .boosting import GradientBoostingModel, fit_gbm
from .ensemble import EnsembleConfig, FittedEnsemble, PredictionSet, fit_ensemble, fit_stratified, predict_with_intervals
from .forest import RandomForestModel, fit_random_forest
from .linear import fit_quantile, fit_ridge, pinball_loss
from .params import TreeParams
from .stacking import blend_alpha, blend_alpha_grid, fit_stacked
from .tree import fit_tree
from .tuning import tune_hyperparameters

__all__ = [
    "GradientBoostingModel", "fit_gbm", "EnsembleConfig", "FittedEnsemble", "PredictionSet",
    "fit_ensemble", "fit_stratified", "predict_with_intervals", "RandomForestModel",
    "fit_random_forest", "fit_quantile", "fit_ridge", "pinball_loss", "TreeParams",
    "blend_alpha", "blend_alpha_grid", "fit_stacked", "fit_tree", "tune_hyperparameters",
]
