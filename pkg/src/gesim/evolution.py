"""Generational grammatical-evolution loop with per-generation statistics.

One seeded generator drives every stochastic decision of a run, so a
(seed, config, dataset, grammar) tuple reproduces the run exactly.
Invalid individuals (failed mapping, non-finite prediction, or degenerate
correlation) stay in the population for counting purposes but can never
win a tournament or be copied as elites.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fitness as fitness_mod
from .expressions import ExpressionTree, parse_formula
from .grammar import Grammar, derive_text

FitnessFn = Callable[[ExpressionTree], "float | None"]


class NoValidIndividuals(RuntimeError):
    """Selection pool is empty: every individual in the population is invalid."""


class GrammarNotGrowable(RuntimeError):
    """No derivation of the grammar fits the initialisation budget."""


@dataclass(frozen=True)
class EvolutionConfig:
    """Run parameters; defaults are the reference experiment setup."""

    population_size: int = 100
    generations: int = 200
    crossover_probability: float = 0.8
    mutation_probability: float | None = None  # None: 1 / genome length
    tournament_size: int = 2
    elite_count: int = 1
    max_genome_length: int = 1000
    max_init_tree_depth: int = 10
    max_tree_depth: int = 18
    codon_domain: int = 65536
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0.0 <= self.crossover_probability <= 1.0:
            raise ValueError("crossover_probability must be in [0, 1]")
        if self.mutation_probability is not None and not 0.0 <= self.mutation_probability <= 1.0:
            raise ValueError("mutation_probability must be in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if not 0 <= self.elite_count < self.population_size:
            raise ValueError("elite_count must be in [0, population_size)")
        if self.max_genome_length < 1 or self.codon_domain < 1:
            raise ValueError("max_genome_length and codon_domain must be positive")
        if not 1 <= self.max_init_tree_depth <= self.max_tree_depth:
            raise ValueError("need 1 <= max_init_tree_depth <= max_tree_depth")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")


@dataclass
class Individual:
    """One population member.  ``fitness`` is None iff the individual is
    invalid: failed mapping, non-finite prediction, or degenerate target."""

    genome: np.ndarray
    formula: str | None
    phenotype: ExpressionTree | None
    fitness: float | None
    node_count: int | None
    depth: int | None

    @property
    def valid(self) -> bool:
        return self.fitness is not None


@dataclass(frozen=True)
class GenerationStats:
    """Population summary; averages are over valid individuals only."""

    generation: int
    average_fitness: float
    average_genome_length: float
    average_tree_nodes: float
    best_fitness: float
    invalid_count: int


@dataclass
class RunRecord:
    """Everything needed to report and reproduce one evolutionary run."""

    seed: int
    dataset: str
    grammar: str
    metric: str
    config: EvolutionConfig
    train_indices: list[int]
    validation_indices: list[int]
    stats: list[GenerationStats]
    best_formula: str
    best_genome: list[int]
    best_training_fitness: float
    best_node_count: int
    best_depth: int
    validation_fitness: float | None


def _production_extras(grammar: Grammar) -> dict[str, list[float]]:
    return {
        nt: [grammar.production_min_extra(p) for p in productions]
        for nt, productions in grammar.rules.items()
    }


def _grow_decisions(grammar, extras, max_init_depth, rng) -> list[tuple[int, int]]:
    """Grow one derivation top-down, uniformly over productions that can
    still complete within the depth budget; returns (choice, rule_count)
    per expansion in leftmost order."""
    decisions: list[tuple[int, int]] = []
    stack = [(grammar.start, 1)]
    while stack:
        nt, depth = stack.pop()
        productions = grammar.rules[nt]
        extra = extras[nt]
        eligible = [j for j in range(len(productions)) if depth + extra[j] <= max_init_depth]
        choice = eligible[int(rng.integers(len(eligible)))]
        decisions.append((choice, len(productions)))
        for sym in reversed(productions[choice]):
            if not sym.is_terminal:
                stack.append((sym.text, depth + 1))
    return decisions


def _decisions_to_genome(decisions, codon_domain, rng) -> np.ndarray:
    """Write choices back as codons: choice + random multiple of the rule
    count, keeping the mod residue while spreading over the codon domain."""
    genome = np.empty(len(decisions), dtype=np.int64)
    for i, (choice, count) in enumerate(decisions):
        spread = (codon_domain - 1 - choice) // count
        genome[i] = choice + count * int(rng.integers(spread + 1))
    return genome


def make_individual(
    genome: np.ndarray,
    grammar: Grammar,
    config: EvolutionConfig,
    fitness_fn: FitnessFn | None,
    cache: dict | None = None,
) -> Individual:
    """Map, compile, and score one genome; invalid outcomes yield an
    Individual with fitness None."""
    text, _ = derive_text(grammar, genome, config.max_tree_depth)
    if text is None:
        return Individual(genome, None, None, None, None, None)
    hit = cache.get(text) if cache is not None else None
    if hit is None:
        expr = parse_formula(text)
        score = fitness_fn(expr) if fitness_fn is not None else None
        if cache is not None:
            cache[text] = (expr, score)
    else:
        expr, score = hit
    return Individual(genome, text, expr, score, expr.node_count, expr.depth)


def initialize(
    grammar: Grammar,
    config: EvolutionConfig,
    rng: np.random.Generator,
    fitness_fn: FitnessFn | None = None,
    cache: dict | None = None,
) -> list[Individual]:
    """Grow a population of valid individuals within the init depth budget.

    Growth is re-drawn for the rare tree whose genome would exceed
    ``max_genome_length`` (wide grammars near the depth cap).
    """
    if grammar.min_completion_depth(grammar.start) > config.max_init_tree_depth:
        raise GrammarNotGrowable(
            f"grammar '{grammar.name or grammar.start}' cannot terminate within "
            f"depth {config.max_init_tree_depth}"
        )
    extras = _production_extras(grammar)
    population: list[Individual] = []
    for _ in range(config.population_size):
        for _retry in range(64):
            decisions = _grow_decisions(grammar, extras, config.max_init_tree_depth, rng)
            if len(decisions) <= config.max_genome_length:
                break
        else:
            raise GrammarNotGrowable(
                "could not grow a genome within max_genome_length "
                f"{config.max_genome_length}"
            )
        genome = _decisions_to_genome(decisions, config.codon_domain, rng)
        population.append(make_individual(genome, grammar, config, fitness_fn, cache))
    return population


def _tournament(valid: list[tuple[int, Individual]], size: int, rng) -> Individual:
    picks = rng.integers(0, len(valid), size=size)
    best_key = None
    winner = None
    for k in picks:
        index, contender = valid[int(k)]
        key = (contender.fitness, -contender.node_count, -index)
        if best_key is None or key > best_key:
            best_key = key
            winner = contender
    return winner


def tournament_select(population: list[Individual], tournament_size: int, rng) -> Individual:
    """Best of ``tournament_size`` uniform draws (with replacement) from the
    valid subset; ties break to fewer nodes, then earlier population index."""
    valid = [(i, ind) for i, ind in enumerate(population) if ind.valid]
    if not valid:
        raise NoValidIndividuals("population has no valid individuals to select from")
    return _tournament(valid, tournament_size, rng)


def crossover(
    parent_a: np.ndarray,
    parent_b: np.ndarray,
    probability: float,
    rng,
    max_length: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Variable one-point crossover: independent cut points per parent, so
    offspring lengths differ from the parents'.  Genomes shorter than two
    codons pass through unchanged."""
    if len(parent_a) < 2 or len(parent_b) < 2:
        return parent_a.copy(), parent_b.copy()
    if rng.random() >= probability:
        return parent_a.copy(), parent_b.copy()
    cut_a = int(rng.integers(1, len(parent_a)))
    cut_b = int(rng.integers(1, len(parent_b)))
    child_a = np.concatenate([parent_a[:cut_a], parent_b[cut_b:]])
    child_b = np.concatenate([parent_b[:cut_b], parent_a[cut_a:]])
    if max_length is not None:
        child_a = child_a[:max_length]
        child_b = child_b[:max_length]
    return child_a, child_b


def mutate(genome: np.ndarray, per_codon_probability: float, codon_domain: int, rng) -> np.ndarray:
    """Replace each codon independently with a fresh uniform draw."""
    out = genome.copy()
    mask = rng.random(len(out)) < per_codon_probability
    hits = int(mask.sum())
    if hits:
        out[mask] = rng.integers(0, codon_domain, size=hits, dtype=np.int64)
    return out


def _collect_stats(population: list[Individual], generation: int) -> GenerationStats:
    valid = [ind for ind in population if ind.valid]
    if valid:
        average_fitness = float(np.mean([ind.fitness for ind in valid]))
        average_length = float(np.mean([len(ind.genome) for ind in valid]))
        average_nodes = float(np.mean([ind.node_count for ind in valid]))
        best_fitness = max(ind.fitness for ind in valid)
    else:
        average_fitness = average_length = average_nodes = best_fitness = float("nan")
    return GenerationStats(
        generation=generation,
        average_fitness=average_fitness,
        average_genome_length=average_length,
        average_tree_nodes=average_nodes,
        best_fitness=best_fitness,
        invalid_count=len(population) - len(valid),
    )


def step(
    population: list[Individual],
    grammar: Grammar,
    config: EvolutionConfig,
    fitness_fn: FitnessFn,
    rng: np.random.Generator,
    generation: int = 0,
    cache: dict | None = None,
) -> tuple[list[Individual], GenerationStats]:
    """One generational replacement: elites survive unchanged, the rest of
    the next population comes from tournament -> crossover -> mutation ->
    mapping -> scoring."""
    valid = [(i, ind) for i, ind in enumerate(population) if ind.valid]
    if not valid:
        raise NoValidIndividuals(f"no valid individuals entering generation {generation}")
    by_rank = sorted(valid, key=lambda pair: (-pair[1].fitness, pair[1].node_count, pair[0]))
    children: list[Individual] = [ind for _, ind in by_rank[: config.elite_count]]
    while len(children) < config.population_size:
        parent_a = _tournament(valid, config.tournament_size, rng)
        parent_b = _tournament(valid, config.tournament_size, rng)
        offspring = crossover(
            parent_a.genome,
            parent_b.genome,
            config.crossover_probability,
            rng,
            max_length=config.max_genome_length,
        )
        for genome in offspring:
            if len(children) == config.population_size:
                break
            p_mut = (
                config.mutation_probability
                if config.mutation_probability is not None
                else 1.0 / len(genome)
            )
            genome = mutate(genome, p_mut, config.codon_domain, rng)
            children.append(make_individual(genome, grammar, config, fitness_fn, cache))
    return children, _collect_stats(children, generation)


def _best_of(population: list[Individual]) -> Individual | None:
    best = None
    best_key = None
    for i, ind in enumerate(population):
        if not ind.valid:
            continue
        key = (ind.fitness, -ind.node_count, -i)
        if best_key is None or key > best_key:
            best_key = key
            best = ind
    return best


def run(grammar: Grammar, dataset, data_split, config: EvolutionConfig, metric: str) -> RunRecord:
    """Execute a full seeded run: initialisation plus ``generations`` steps,
    terminating on generation count alone.  The best-ever individual by
    training fitness (ties to fewer nodes, then earliest) is scored once on
    the validation rows."""
    rng = np.random.default_rng(config.rng_seed)
    train_idx = list(data_split.train_indices)
    val_idx = list(data_split.validation_indices)
    train_features = dataset.features[train_idx]
    train_truth = dataset.truth[train_idx]
    fitness_fn = fitness_mod.fitness_function(train_features, train_truth, metric)

    cache: dict = {}
    population = initialize(grammar, config, rng, fitness_fn, cache)
    stats = [_collect_stats(population, 0)]
    best = _best_of(population)

    for generation in range(1, config.generations + 1):
        population, generation_stats = step(
            population, grammar, config, fitness_fn, rng, generation, cache
        )
        stats.append(generation_stats)
        contender = _best_of(population)
        if contender is not None and (
            best is None
            or (contender.fitness, -contender.node_count) > (best.fitness, -best.node_count)
        ):
            best = contender

    if best is None:
        raise NoValidIndividuals("run finished without any valid individual")

    validation_report = fitness_mod.ensemble_fitness(
        best.phenotype,
        dataset.features[val_idx],
        dataset.truth[val_idx],
        metric,
    )
    return RunRecord(
        seed=config.rng_seed,
        dataset=dataset.name,
        grammar=grammar.name,
        metric=metric.lower(),
        config=config,
        train_indices=train_idx,
        validation_indices=val_idx,
        stats=stats,
        best_formula=best.formula,
        best_genome=[int(c) for c in best.genome],
        best_training_fitness=best.fitness,
        best_node_count=best.node_count,
        best_depth=best.depth,
        validation_fitness=validation_report.fitness,
    )
