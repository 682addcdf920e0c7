"""Batch experiment runner and reporting commands.

Verbs:

    gesim evolve    -- N seeded runs of one configuration, stats + summary
    gesim baselines -- per-feature, linear-regression, and mean-ensemble
                       correlations next to the published reference scores
    gesim eval      -- score a saved formula file against a dataset
    gesim datasets  -- list bundled datasets

Exit codes: 0 success, 1 usage error, 2 data error, 3 engine error.

Each run writes to ``<out>/<dataset>_<metric>/run_<seed>/``: four
plot-ready stats files (``avg_fitness.txt``, ``avg_genome_length.txt``,
``avg_tree_nodes.txt``, ``best_fitness.txt``; columns are generation and
value), the best formula as ``formula.txt``, and the full ``record.json``.
A ``summary.json`` with the five-number summary of validation fitness sits
at the batch level.  Outputs contain no timestamps, so re-running a
configuration reproduces every file byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import shutil
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import fitness as fitness_mod
from ._core import BACKEND
from .evolution import (
    EvolutionConfig,
    GrammarNotGrowable,
    NoValidIndividuals,
    RunRecord,
    run,
)
from .expressions import MalformedExpression, parse_formula
from .fitness import METRICS
from .grammar import Grammar, GrammarError, load_grammar, parse_grammar

BUILTIN_GRAMMARS = ("ensemble", "ensemble_interp")

DATA_ERRORS = (
    data_mod.MissingResponseColumn,
    data_mod.RaggedRow,
    data_mod.NonNumericCell,
    data_mod.UnknownDataset,
    data_mod.SplitTooSmall,
    FileNotFoundError,
)
ENGINE_ERRORS = (
    GrammarError,
    GrammarNotGrowable,
    NoValidIndividuals,
    MalformedExpression,
    fitness_mod.LengthMismatch,
    fitness_mod.SingularDesign,
    fitness_mod.EmptySubset,
)

# config-file keys (run-parameter names) -> EvolutionConfig fields
CONFIG_KEYS = {
    "POPULATION_SIZE": ("population_size", int),
    "GENERATIONS": ("generations", int),
    "CROSSOVER_PROBABILITY": ("crossover_probability", float),
    "MUTATION_PROBABILITY": ("mutation_probability", float),
    "TOURNAMENT_SIZE": ("tournament_size", int),
    "ELITE_COUNT": ("elite_count", int),
    "MAX_GENOME_LENGTH": ("max_genome_length", int),
    "MAX_INIT_TREE_DEPTH": ("max_init_tree_depth", int),
    "MAX_TREE_DEPTH": ("max_tree_depth", int),
    "CODON_SIZE": ("codon_domain", int),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One batch: dataset x grammar x metric, `runs` seeded repetitions."""

    dataset: str
    metric: str
    grammar: str = "ensemble"
    runs: int = 30
    base_seed: int = 1
    split_fraction: float = 0.7
    split_seed: int = 4
    output_dir: str = "out"
    evolution: EvolutionConfig = dataclasses.field(default_factory=EvolutionConfig)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")


@dataclass(frozen=True)
class BatchSummary:
    """Validation-fitness distribution over the runs of one batch."""

    dataset: str
    metric: str
    grammar: str
    per_run: list[float | None]
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    best_formula: str
    best_seed: int
    reference_label: str | None
    reference_median: float | None
    reference_delta: float | None


def load_dataset(name_or_path: str) -> data_mod.Dataset:
    if name_or_path in data_mod.BUNDLED_NAMES:
        return data_mod.bundled(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise data_mod.UnknownDataset(
            f"{name_or_path!r} is neither a bundled dataset {data_mod.BUNDLED_NAMES} "
            "nor an existing CSV file"
        )
    return load_dataset_csv(path)


def load_dataset_csv(path: Path) -> data_mod.Dataset:
    return data_mod.load_csv(path)


def resolve_grammar(name_or_path: str) -> Grammar:
    if name_or_path in BUILTIN_GRAMMARS:
        text = (
            resources.files("gesim")
            .joinpath(f"grammars/{name_or_path}.bnf")
            .read_text(encoding="utf-8")
        )
        return parse_grammar(text, name=name_or_path)
    return load_grammar(name_or_path)


def _five_number(values: list[float]) -> tuple[float, float, float, float, float]:
    arr = np.asarray(values, dtype=np.float64)
    q1, med, q3 = (float(np.percentile(arr, q)) for q in (25, 50, 75))
    return float(arr.min()), q1, med, q3, float(arr.max())


def _reference_for(config: ExperimentConfig) -> tuple[str | None, float | None]:
    label = "GE-i" if config.grammar == "ensemble_interp" else "GE"
    table = data_mod.REFERENCE_SCORES.get((config.dataset, config.metric))
    if table is None or config.grammar not in BUILTIN_GRAMMARS:
        return None, None
    return label, table[label]


def run_experiment(config: ExperimentConfig) -> BatchSummary:
    """Execute the batch, write all output files, and return the summary."""
    dataset = load_dataset(config.dataset)
    grammar = resolve_grammar(config.grammar)
    data_split = data_mod.split(dataset, config.split_fraction, seed=config.split_seed)

    batch_dir = Path(config.output_dir) / f"{dataset.name}_{config.metric}"
    created = not batch_dir.exists()
    batch_dir.mkdir(parents=True, exist_ok=True)
    try:
        records: list[RunRecord] = []
        for seed in range(config.base_seed, config.base_seed + config.runs):
            run_config = dataclasses.replace(config.evolution, rng_seed=seed)
            record = run(grammar, dataset, data_split, run_config, config.metric)
            _write_run_outputs(batch_dir / f"run_{seed}", record)
            records.append(record)
        summary = _summarize(config, dataset.name, records)
        (batch_dir / "summary.json").write_text(_summary_json(summary), encoding="utf-8")
        return summary
    except Exception:
        # no partial batches on disk
        if created:
            shutil.rmtree(batch_dir, ignore_errors=True)
        raise


def _summarize(config: ExperimentConfig, dataset_name: str, records: list[RunRecord]) -> BatchSummary:
    scored = [r.validation_fitness for r in records]
    finite = [v for v in scored if v is not None]
    if not finite:
        raise NoValidIndividuals("every run produced an invalid validation score")
    minimum, q1, median, q3, maximum = _five_number(finite)
    best = max(records, key=lambda r: (r.best_training_fitness, -r.best_node_count))
    label, reference = _reference_for(config)
    return BatchSummary(
        dataset=dataset_name,
        metric=config.metric,
        grammar=config.grammar,
        per_run=scored,
        minimum=minimum,
        q1=q1,
        median=median,
        q3=q3,
        maximum=maximum,
        best_formula=best.best_formula,
        best_seed=best.seed,
        reference_label=label,
        reference_median=reference,
        reference_delta=None if reference is None else median - reference,
    )


def _stats_series(record: RunRecord, field: str) -> str:
    lines = [f"{s.generation} {getattr(s, field):.6f}" for s in record.stats]
    return "\n".join(lines) + "\n"


def _write_run_outputs(run_dir: Path, record: RunRecord) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    for filename, field in (
        ("avg_fitness.txt", "average_fitness"),
        ("avg_genome_length.txt", "average_genome_length"),
        ("avg_tree_nodes.txt", "average_tree_nodes"),
        ("best_fitness.txt", "best_fitness"),
    ):
        (run_dir / filename).write_text(_stats_series(record, field), encoding="utf-8")
    (run_dir / "formula.txt").write_text(format_formula(record), encoding="utf-8")
    (run_dir / "record.json").write_text(
        json.dumps(_record_dict(record), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def format_formula(record: RunRecord) -> str:
    """Formula file: header comments plus the copy-paste runnable expression."""
    return (
        f"# dataset: {record.dataset}\n"
        f"# metric: {record.metric}\n"
        f"# seed: {record.seed}\n"
        f"# training_fitness: {record.best_training_fitness!r}\n"
        f"# validation_fitness: {record.validation_fitness!r}\n"
        f"{record.best_formula}\n"
    )


def export_formula(record: RunRecord, path) -> Path:
    """Write the run's best formula with its provenance header."""
    if record.best_formula is None:
        raise NoValidIndividuals("run has no valid best individual to export")
    path = Path(path)
    path.write_text(format_formula(record), encoding="utf-8")
    return path


def read_formula(path) -> str:
    """Read a formula file back, skipping '#' header lines."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = [line for line in lines if line.strip() and not line.lstrip().startswith("#")]
    if not body:
        raise MalformedExpression(f"{path}: no formula line found")
    return "\n".join(body)


def _record_dict(record: RunRecord) -> dict:
    out = dataclasses.asdict(record)
    out["config"] = dataclasses.asdict(record.config)
    out["stats"] = [dataclasses.asdict(s) for s in record.stats]
    return out


def _summary_json(summary: BatchSummary) -> str:
    return json.dumps(dataclasses.asdict(summary), indent=2, sort_keys=True) + "\n"


def report_baselines(dataset: data_mod.Dataset, metric: str, data_split) -> list[tuple[str, str]]:
    """Rows of (label, text) comparing computed baselines with references."""
    metric = metric.lower()
    correlate = fitness_mod.pearson if metric == "pcc" else fitness_mod.spearman
    reference = data_mod.REFERENCE_SCORES.get((dataset.name, metric), {})
    rows: list[tuple[str, str]] = []

    def fmt(value: float | None, ref_key: str | None = None, note: str = "") -> str:
        text = "invalid" if value is None else f"{value:.3f}"
        ref = reference.get(ref_key) if ref_key else None
        if ref is not None:
            text += f"  (published median {ref:.3f})"
        if note:
            text += f"  [{note}]"
        return text

    for j, name in enumerate(dataset.feature_names):
        rows.append((name, fmt(correlate(dataset.truth, dataset.features[:, j]).fitness, name)))

    train = list(data_split.train_indices)
    validation = list(data_split.validation_indices)
    model = fitness_mod.fit_linear_regression(dataset.features[train], dataset.truth[train])
    lr_train = correlate(dataset.truth[train], model.predict(dataset.features[train])).fitness
    lr_val = correlate(dataset.truth[validation], model.predict(dataset.features[validation])).fitness
    lr_note = data_mod.WS353_LR_NOTE if dataset.name == "ws353" else ""
    rows.append(("LR (train)", fmt(lr_train)))
    rows.append(("LR (validation)", fmt(lr_val, "LR", lr_note)))

    # simple average of the cosine, Manhattan, and Euclidean columns
    mean_pred = fitness_mod.mean_ensemble(dataset.features, [0, 1, 2])
    rows.append(("mean{cos,man,euc}", fmt(correlate(dataset.truth, mean_pred).fitness)))

    for rival in ("TGP", "LGP", "CGP", "GE", "GE-i"):
        if rival in reference:
            rows.append((f"{rival} (published)", f"{reference[rival]:.3f}"))
    return rows


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gesim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p):
        p.add_argument("--dataset", required=True, help="bundled name or CSV path")
        p.add_argument("--metric", choices=METRICS, default="srcc")
        p.add_argument("--split", type=float, default=0.7, dest="split_fraction")
        p.add_argument("--split-seed", type=int, default=4)

    evolve = sub.add_parser("evolve", help="run a batch of seeded evolutionary runs")
    add_common(evolve)
    evolve.add_argument("--grammar", default="ensemble", help="builtin name or BNF path")
    evolve.add_argument("--runs", type=int, default=30)
    evolve.add_argument("--seed", type=int, default=1, help="base seed; runs use seed..seed+runs-1")
    evolve.add_argument("--generations", type=int, default=None)
    evolve.add_argument("--population", type=int, default=None)
    evolve.add_argument("--crossover-prob", type=float, default=None)
    evolve.add_argument("--out", default="out")
    evolve.add_argument("--config", default=None, help="key=value file with run parameters")

    baselines = sub.add_parser("baselines", help="report non-evolutionary baselines")
    add_common(baselines)

    evaluate = sub.add_parser("eval", help="score a saved formula file")
    add_common(evaluate)
    evaluate.add_argument("--formula", required=True)

    sub.add_parser("datasets", help="list bundled datasets")
    return parser


def _parse_config_file(path: str) -> dict:
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().upper()
        if not sep or key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown parameter line {raw!r}")
        field, cast = CONFIG_KEYS[key]
        overrides[field] = cast(value.strip())
    return overrides


def _interp_defaults(grammar_name: str, overrides: dict) -> dict:
    # interpretable preset: shallow trees unless the user says otherwise
    if grammar_name == "ensemble_interp":
        overrides.setdefault("max_tree_depth", 8)
        overrides.setdefault("max_init_tree_depth", 8)
    return overrides


def _cmd_evolve(args) -> int:
    overrides = _parse_config_file(args.config) if args.config else {}
    if args.generations is not None:
        overrides["generations"] = args.generations
    if args.population is not None:
        overrides["population_size"] = args.population
    if args.crossover_prob is not None:
        overrides["crossover_probability"] = args.crossover_prob
    overrides = _interp_defaults(args.grammar, overrides)
    config = ExperimentConfig(
        dataset=args.dataset,
        metric=args.metric,
        grammar=args.grammar,
        runs=args.runs,
        base_seed=args.seed,
        split_fraction=args.split_fraction,
        split_seed=args.split_seed,
        output_dir=args.out,
        evolution=EvolutionConfig(**overrides),
    )
    summary = run_experiment(config)
    print(f"{summary.dataset} {summary.metric} ({summary.grammar}, {len(summary.per_run)} runs, backend={BACKEND})")
    print(
        f"validation fitness: min {summary.minimum:.3f}  q1 {summary.q1:.3f}  "
        f"median {summary.median:.3f}  q3 {summary.q3:.3f}  max {summary.maximum:.3f}"
    )
    if summary.reference_median is not None:
        print(
            f"published {summary.reference_label} median {summary.reference_median:.3f}  "
            f"delta {summary.reference_delta:+.3f}"
        )
    print(f"best formula (seed {summary.best_seed}): {summary.best_formula}")
    return 0


def _cmd_baselines(args) -> int:
    dataset = load_dataset(args.dataset)
    data_split = data_mod.split(dataset, args.split_fraction, seed=args.split_seed)
    rows = report_baselines(dataset, args.metric, data_split)
    width = max(len(label) for label, _ in rows)
    for label, text in rows:
        print(f"{label:<{width}}  {text}")
    return 0


def _cmd_eval(args) -> int:
    dataset = load_dataset(args.dataset)
    expr = parse_formula(read_formula(args.formula))
    full = fitness_mod.ensemble_fitness(expr, dataset.features, dataset.truth, args.metric)
    print(f"full dataset: {'invalid' if full.fitness is None else f'{full.fitness:.6f}'}")
    data_split = data_mod.split(dataset, args.split_fraction, seed=args.split_seed)
    for side, indices in (
        ("train", data_split.train_indices),
        ("validation", data_split.validation_indices),
    ):
        idx = list(indices)
        report = fitness_mod.ensemble_fitness(
            expr, dataset.features[idx], dataset.truth[idx], args.metric
        )
        print(f"{side}: {'invalid' if report.fitness is None else f'{report.fitness:.6f}'}")
    return 0


def _cmd_datasets(_args) -> int:
    for name in data_mod.BUNDLED_NAMES:
        dataset = data_mod.bundled(name)
        print(f"{name}: {dataset.row_count} rows, {dataset.feature_count} features "
              f"({', '.join(dataset.feature_names)})")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    handlers = {
        "evolve": _cmd_evolve,
        "baselines": _cmd_baselines,
        "eval": _cmd_eval,
        "datasets": _cmd_datasets,
    }
    try:
        return handlers[args.verb](args)
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ENGINE_ERRORS as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
