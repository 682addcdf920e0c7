"""Grammar-guided evolution of aggregation formulas over similarity scores.

The package evolves arithmetic formulas that combine precomputed
semantic-similarity feature columns into a single score, maximizing
Pearson or Spearman correlation with human judgments.  Hot kernels run in
a compiled extension when available (``gesim._core.BACKEND`` says which).
"""

from ._core import BACKEND
from .data import (
    BUNDLED_NAMES,
    REFERENCE_SCORES,
    Dataset,
    DatasetSplit,
    bundled,
    load_csv,
    split,
)
from .evolution import (
    EvolutionConfig,
    GenerationStats,
    Individual,
    RunRecord,
    crossover,
    initialize,
    mutate,
    run,
    step,
    tournament_select,
)
from .expressions import (
    ExpressionTree,
    PredictionVector,
    compile_tree,
    evaluate,
    parse_formula,
    to_text,
)
from .fitness import (
    FitnessReport,
    RegressionModel,
    ensemble_fitness,
    fit_linear_regression,
    fitness_function,
    mean_ensemble,
    pearson,
    spearman,
)
from .grammar import (
    DerivationTree,
    Grammar,
    Invalid,
    derive,
    load_grammar,
    parse_grammar,
    serialize,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BUNDLED_NAMES",
    "REFERENCE_SCORES",
    "Dataset",
    "DatasetSplit",
    "DerivationTree",
    "EvolutionConfig",
    "ExpressionTree",
    "FitnessReport",
    "GenerationStats",
    "Grammar",
    "Individual",
    "Invalid",
    "PredictionVector",
    "RegressionModel",
    "RunRecord",
    "bundled",
    "compile_tree",
    "crossover",
    "derive",
    "ensemble_fitness",
    "evaluate",
    "fit_linear_regression",
    "fitness_function",
    "initialize",
    "load_csv",
    "load_grammar",
    "mean_ensemble",
    "mutate",
    "parse_formula",
    "parse_grammar",
    "pearson",
    "run",
    "serialize",
    "spearman",
    "split",
    "step",
    "to_text",
    "tournament_select",
]
