"""Evolve symbolic activation functions from tabular data and train compact
MLPs with them."""

__version__ = "0.1.0"

from .expressions import (Formula, FormulaError, differentiate, generalize,
                          generalize_with_flag, parse_formula, print_formula,
                          simplify)
from .data import (Dataset, Scaler, load_csv, save_csv,
                   stratified_split_indices, synth_planted, train_test_split)
from .metrics import (Aggregate, EvalResult, accuracy, aggregate, auc,
                      efficiency, improvement)
from .gp import GpConfig, SymbolicFormulaSearch, evolve
from .network import (ARCH_HIDDEN, Activation, MLPBinaryClassifier,
                      ModelConfig, Network, TrainConfig, build_network,
                      load_checkpoint, make_activation, param_count_formula,
                      save_checkpoint, train)
from .gradcheck import check_gradients, run_suite

__all__ = [
    "__version__",
    "Formula", "FormulaError", "parse_formula", "print_formula",
    "simplify", "differentiate", "generalize", "generalize_with_flag",
    "Dataset", "Scaler", "load_csv", "save_csv", "synth_planted",
    "stratified_split_indices", "train_test_split",
    "EvalResult", "Aggregate", "accuracy", "auc", "efficiency",
    "aggregate", "improvement",
    "GpConfig", "SymbolicFormulaSearch", "evolve",
    "ARCH_HIDDEN", "Activation", "ModelConfig", "TrainConfig",
    "Network", "MLPBinaryClassifier", "build_network", "train",
    "make_activation", "param_count_formula",
    "save_checkpoint", "load_checkpoint",
    "check_gradients", "run_suite",
]
