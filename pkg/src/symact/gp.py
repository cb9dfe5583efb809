"""Genetic-programming search for formulas that separate two classes.

The engine evolves prefix-notation trees over the six-operator function set,
scoring each genome by the logistic log-loss of its raw output against binary
labels plus a parsimony penalty proportional to tree size.  All randomness
flows through per-(generation, slot) substreams of one master seed, so results
do not depend on evaluation order and parallel fitness evaluation would give
byte-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .expressions import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_MAX_NODES,
    GP_OPERATORS,
    Call,
    Feature,
    Formula,
    FormulaValidationError,
    Node,
    _walk,
    eval_batch,
    generalize_with_flag,
    print_formula,
)

_OPERATORS = sorted(GP_OPERATORS)
_SAME_ARITY = {
    op: [o for o in _OPERATORS if GP_OPERATORS[o] == GP_OPERATORS[op]]
    for op in _OPERATORS
}
_CLAMP = 1e-7


@dataclass(frozen=True)
class GpConfig:
    """Search hyperparameters.

    The four operation probabilities may sum to less than one; the remainder
    is plain reproduction of a tournament winner.
    """

    population_size: int = 500
    generations: int = 5
    parsimony_coefficient: float = 0.01
    tournament_size: int = 20
    p_crossover: float = 0.90
    p_subtree_mutation: float = 0.05
    p_point_mutation: float = 0.03
    p_hoist_mutation: float = 0.01
    init_depth_range: tuple[int, int] = (2, 6)
    max_nodes: int = DEFAULT_MAX_NODES
    max_depth: int = DEFAULT_MAX_DEPTH
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if self.parsimony_coefficient < 0:
            raise ValueError("parsimony_coefficient must be nonnegative")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        probs = (self.p_crossover, self.p_subtree_mutation,
                 self.p_point_mutation, self.p_hoist_mutation)
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise ValueError("operation probabilities must lie in [0, 1]")
        if sum(probs) > 1.0 + 1e-12:
            raise ValueError("operation probabilities must sum to at most 1")
        lo, hi = self.init_depth_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad init_depth_range {self.init_depth_range!r}")


@dataclass(frozen=True)
class Individual:
    genome: Formula
    raw_fitness: float
    penalized_fitness: float


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_penalized: float
    mean_raw: float
    best_formula: str


def _stream(seed: int, generation: int, slot: int) -> np.random.Generator:
    """Independent substream for one (generation, slot) cell of a run."""
    key = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF,
                                 spawn_key=(generation, slot))
    return np.random.default_rng(key)


def _random_leaf(rng, n_features: int) -> Feature:
    return Feature(int(rng.integers(n_features)))


def _random_operator(rng) -> str:
    return _OPERATORS[int(rng.integers(len(_OPERATORS)))]


def _full_tree(rng, depth: int, n_features: int) -> Node:
    if depth <= 1:
        return _random_leaf(rng, n_features)
    op = _random_operator(rng)
    args = tuple(_full_tree(rng, depth - 1, n_features)
                 for _ in range(GP_OPERATORS[op]))
    return Call(op, args)


def _grow_tree(rng, depth: int, n_features: int, force_op: bool = True) -> Node:
    if depth <= 1:
        return _random_leaf(rng, n_features)
    # Leaf probability mirrors the terminal share of the combined
    # operator-plus-feature pool, so grown trees do not collapse to bare
    # leaves on narrow datasets.
    p_leaf = n_features / (n_features + len(_OPERATORS))
    if not force_op and rng.random() < p_leaf:
        return _random_leaf(rng, n_features)
    op = _random_operator(rng)
    args = tuple(_grow_tree(rng, depth - 1, n_features, force_op=False)
                 for _ in range(GP_OPERATORS[op]))
    return Call(op, args)


def init_population(cfg: GpConfig, n_features: int,
                    seed: int | None = None) -> list[Formula]:
    """Ramped half-and-half initialization.

    Slots alternate between "full" trees (every path reaches the target
    depth) and "grow" trees (paths may stop early), with target depths drawn
    uniformly from ``cfg.init_depth_range``.  Each slot uses its own
    substream, so the population is independent of construction order.
    """
    if n_features < 1:
        raise ValueError("n_features must be at least 1")
    base = cfg.seed if seed is None else seed
    lo, hi = cfg.init_depth_range
    population = []
    for slot in range(cfg.population_size):
        rng = _stream(base, 1, slot)
        depth = int(rng.integers(lo, hi + 1))
        builder = _full_tree if slot % 2 == 0 else _grow_tree
        population.append(Formula(builder(rng, depth, n_features),
                                  cfg.max_nodes, cfg.max_depth))
    return population


def raw_fitness(formula: Formula, X, y) -> float:
    """Mean binary log-loss of the logistic of the formula's raw output.

    Probabilities are clamped to [1e-7, 1 - 1e-7] so the loss stays finite;
    a formula whose output overflows to a non-finite value gets +inf so
    selection reliably discards it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if X.shape[0] == 0:
        raise ValueError("need at least one row")
    p = np.clip(expit(eval_batch(formula, X)), _CLAMP, 1.0 - _CLAMP)
    with np.errstate(invalid="ignore"):
        loss = -np.mean(y * np.log(p) + (1 - y) * np.log1p(-p))
    return float(loss) if np.isfinite(loss) else float("inf")


def penalized(raw: float, nodes: int, coefficient: float) -> float:
    """Size-penalized fitness: raw plus ``coefficient`` per tree node."""
    return raw + coefficient * nodes


def tournament_select(population: list[Individual], k: int,
                      rng) -> Individual:
    """Sample ``k`` entrants uniformly with replacement and return the one
    with the lowest penalized fitness, breaking ties by node count and then
    by position in the population."""
    if not population:
        raise ValueError("tournament over an empty population")
    if k < 1:
        raise ValueError("tournament size must be at least 1")
    best_key = None
    best = None
    for i in rng.integers(len(population), size=int(k)):
        entrant = population[int(i)]
        key = (entrant.penalized_fitness, entrant.genome.node_count, int(i))
        if best_key is None or key < best_key:
            best_key, best = key, entrant
    return best


def _subtree_at(node: Node, index: int) -> Node:
    for position, sub in enumerate(_walk(node)):
        if position == index:
            return sub
    raise IndexError(index)


def _replace_at(node: Node, index: int, replacement: Node) -> Node:
    """Rebuild the tree with the node at preorder position ``index`` swapped
    for ``replacement``."""
    state = {"next": 0}

    def rebuild(n: Node) -> Node:
        position = state["next"]
        state["next"] += 1
        if position == index:
            return replacement
        if not isinstance(n, Call) or position > index:
            return n
        return Call(n.op, tuple(rebuild(a) for a in n.args))

    return rebuild(node)


def crossover(a: Formula, b: Formula, rng,
              max_nodes: int = DEFAULT_MAX_NODES,
              max_depth: int = DEFAULT_MAX_DEPTH) -> Formula:
    """Swap a uniformly chosen subtree of ``a`` for one of ``b``.

    When the child would break the size caps, the first parent is returned
    unchanged; every generation therefore stays inside the caps without
    resampling.
    """
    site = int(rng.integers(a.node_count))
    donor = _subtree_at(b.root, int(rng.integers(b.node_count)))
    try:
        return Formula(_replace_at(a.root, site, donor), max_nodes, max_depth)
    except FormulaValidationError:
        return a


def mutate(f: Formula, kind: str, cfg: GpConfig, n_features: int,
           rng) -> Formula:
    """Apply one mutation of the given kind.

    ``subtree`` grafts a freshly grown tree at a random site, ``point`` swaps
    a single node for a same-arity replacement, and ``hoist`` promotes a
    nested subtree over its ancestor to fight bloat.  Size caps are enforced
    as in crossover.
    """
    if kind == "subtree":
        site = int(rng.integers(f.node_count))
        donor = _grow_tree(rng, int(rng.integers(2, 5)), n_features)
        try:
            return Formula(_replace_at(f.root, site, donor),
                           cfg.max_nodes, cfg.max_depth)
        except FormulaValidationError:
            return f
    if kind == "point":
        site = int(rng.integers(f.node_count))
        target = _subtree_at(f.root, site)
        if isinstance(target, Call):
            pool = _SAME_ARITY[target.op]
            replacement = Call(pool[int(rng.integers(len(pool)))],
                               target.args)
        else:
            replacement = _random_leaf(rng, n_features)
        return Formula(_replace_at(f.root, site, replacement),
                       cfg.max_nodes, cfg.max_depth)
    if kind == "hoist":
        site = int(rng.integers(f.node_count))
        target = _subtree_at(f.root, site)
        inner_count = sum(1 for _ in _walk(target))
        inner = _subtree_at(target, int(rng.integers(inner_count)))
        return Formula(_replace_at(f.root, site, inner),
                       cfg.max_nodes, cfg.max_depth)
    raise ValueError(f"unknown mutation kind {kind!r}")


def evolve(cfg: GpConfig, X, y,
           observer=None) -> tuple[Formula, list[GenerationStats]]:
    """Run the full search; return the best genome and per-generation stats.

    The initial population counts as generation 1.  Each later generation
    carries the incumbent best unchanged in slot 0 and fills the remaining
    slots by operation roulette over tournament winners, so the
    best-penalized trace never worsens.  ``observer``, when given, receives
    each generation's stats as they are produced.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a nonempty 2-d matrix")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if not np.array_equal(np.unique(y), [0, 1]):
        raise ValueError("labels must be 0/1 with both classes present")
    n_features = X.shape[1]

    def evaluate(genomes: list[Formula]) -> list[Individual]:
        scored = []
        for g in genomes:
            raw = raw_fitness(g, X, y)
            scored.append(Individual(
                g, raw, penalized(raw, g.node_count,
                                  cfg.parsimony_coefficient)))
        return scored

    def best_index(pop: list[Individual]) -> int:
        return min(range(len(pop)),
                   key=lambda i: (pop[i].penalized_fitness,
                                  pop[i].genome.node_count, i))

    history: list[GenerationStats] = []
    population = evaluate(init_population(cfg, n_features))
    champion = population[best_index(population)]

    def record(generation: int, pop: list[Individual]) -> None:
        nonlocal champion
        best = pop[best_index(pop)]
        if ((best.penalized_fitness, best.genome.node_count)
                < (champion.penalized_fitness, champion.genome.node_count)):
            champion = best
        stats = GenerationStats(
            generation, best.penalized_fitness,
            float(np.mean([ind.raw_fitness for ind in pop])),
            print_formula(best.genome))
        history.append(stats)
        if observer is not None:
            observer(stats)

    record(1, population)
    cutoffs = np.cumsum([cfg.p_crossover, cfg.p_subtree_mutation,
                         cfg.p_point_mutation, cfg.p_hoist_mutation])
    for generation in range(2, cfg.generations + 1):
        next_genomes = [population[best_index(population)].genome]
        for slot in range(1, cfg.population_size):
            rng = _stream(cfg.seed, generation, slot)
            u = rng.random()
            parent = tournament_select(population, cfg.tournament_size, rng)
            if u < cutoffs[0]:
                mate = tournament_select(population, cfg.tournament_size, rng)
                child = crossover(parent.genome, mate.genome, rng,
                                  cfg.max_nodes, cfg.max_depth)
            elif u < cutoffs[1]:
                child = mutate(parent.genome, "subtree", cfg, n_features, rng)
            elif u < cutoffs[2]:
                child = mutate(parent.genome, "point", cfg, n_features, rng)
            elif u < cutoffs[3]:
                child = mutate(parent.genome, "hoist", cfg, n_features, rng)
            else:
                child = parent.genome
            next_genomes.append(child)
        population = evaluate(next_genomes)
        record(generation, population)
    return champion.genome, history


class SymbolicFormulaSearch(BaseEstimator, ClassifierMixin):
    """Scikit-learn style front end for the evolutionary search.

    ``fit`` evolves a feature-indexed formula on ``(X, y)``.  The fitted
    object scores rows with the raw formula output and also exposes the
    single-variable rewrite used downstream as an activation function.

    Attributes set by ``fit``: ``formula_`` (best genome), ``history_``
    (per-generation stats), ``activation_formula_`` (the rewrite),
    ``pair_collapse_fired_`` (whether the two-leaf collapse applied).
    """

    def __init__(self, population_size: int = 500, generations: int = 5,
                 parsimony_coefficient: float = 0.01,
                 tournament_size: int = 20, p_crossover: float = 0.90,
                 p_subtree_mutation: float = 0.05,
                 p_point_mutation: float = 0.03,
                 p_hoist_mutation: float = 0.01, seed: int = 0):
        self.population_size = population_size
        self.generations = generations
        self.parsimony_coefficient = parsimony_coefficient
        self.tournament_size = tournament_size
        self.p_crossover = p_crossover
        self.p_subtree_mutation = p_subtree_mutation
        self.p_point_mutation = p_point_mutation
        self.p_hoist_mutation = p_hoist_mutation
        self.seed = seed

    def _config(self) -> GpConfig:
        return GpConfig(
            population_size=self.population_size,
            generations=self.generations,
            parsimony_coefficient=self.parsimony_coefficient,
            tournament_size=self.tournament_size,
            p_crossover=self.p_crossover,
            p_subtree_mutation=self.p_subtree_mutation,
            p_point_mutation=self.p_point_mutation,
            p_hoist_mutation=self.p_hoist_mutation,
            seed=self.seed)

    def fit(self, X, y, observer=None):
        X, y = check_X_y(X, y)
        classes = np.unique(y)
        if not np.array_equal(classes, [0, 1]):
            raise ValueError("labels must be 0/1 with both classes present")
        best, history = evolve(self._config(), X, y, observer=observer)
        self.classes_ = classes
        self.formula_ = best
        self.history_ = history
        activation, fired = generalize_with_flag(best)
        self.activation_formula_ = activation
        self.pair_collapse_fired_ = fired
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "formula_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, "
                             f"got {X.shape[1]}")
        return eval_batch(self.formula_, X)

    def predict_proba(self, X) -> np.ndarray:
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(np.int64)
