"""The three black-box attacks: EvoBA, SimBA (Cartesian basis), CompleteRandom.

Every attack sees the target only through a ClassifierOracle and is fully
deterministic given its seed (numpy's PCG64 generator, so streams are
reproducible across platforms). Query accounting starts at the initial
classification check, which costs one query.

All three are untargeted: success means the predicted class changes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AlreadyMisclassifiedError, ContractViolationError
from .tensor import (
    ImageTensor,
    PixelCoordinate,
    TensorShape,
    apply_write,
    l0_distance,
    l2_distance,
    linf_distance,
    write_many,
)

FAIL_QUERY_BUDGET = "query_budget"
FAIL_L0_BUDGET = "l0_budget"
FAIL_STALLED = "stalled"


@dataclass(frozen=True)
class EvobaConfig:
    """Budgets and evolution-strategy parameters.

    query_budget: max oracle queries per image (initial check included).
    l0_threshold: the attack keeps mutating while the parent's L0 distance
        from the original stays below this many channel entries.
    pixel_batch_size: grid positions mutated per generation.
    generation_size: children evaluated per generation.
    """

    query_budget: int
    l0_threshold: int
    pixel_batch_size: int = 1
    generation_size: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("query_budget", "l0_threshold", "pixel_batch_size",
                     "generation_size"):
            if getattr(self, name) < 1:
                raise ContractViolationError(f"{name} must be >= 1")


@dataclass(frozen=True)
class SimbaConfig:
    query_budget: int
    step_size: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.query_budget < 1:
            raise ContractViolationError("query_budget must be >= 1")
        if not 0.0 < self.step_size <= 1.0:
            raise ContractViolationError(
                f"step_size must be in (0, 1], got {self.step_size}"
            )


@dataclass(frozen=True)
class CompleteRandomConfig:
    query_budget: int
    l0_budget: int
    seed: int = 0

    def __post_init__(self):
        if self.query_budget < 1:
            raise ContractViolationError("query_budget must be >= 1")
        if self.l0_budget < 1:
            raise ContractViolationError("l0_budget must be >= 1")


@dataclass(frozen=True)
class AttackOutcome:
    """Per-image attack result.

    l0/l2/linf describe the returned perturbation and are zero on failure
    (campaign aggregates only ever use them for successes). queries_used
    always equals the oracle's count delta for the run.
    """

    success: bool
    queries_used: int
    original_class: int
    adversarial_image: Optional[ImageTensor] = None
    adversarial_class: Optional[int] = None
    l0: int = 0
    l2: float = 0.0
    linf: float = 0.0
    failure_reason: Optional[str] = None
    per_generation_best_fitness: tuple = field(default_factory=tuple)


def sample_value(rng) -> float:
    """Uniform random pixel value in [0, 1]."""
    return float(rng.random())


def sample_grid_pixels(shape: TensorShape, batch_size: int, rng) -> list[PixelCoordinate]:
    """Sample batch_size positions of the h x w grid, with repetition, and
    expand each distinct position to all of its channel coordinates.

    Perturbing one grid position always touches every channel, which charges
    c entries to the L0 budget per position. Repeated draws collapse, so the
    result holds at most batch_size * channels coordinates.
    """
    if batch_size < 1:
        raise ContractViolationError("batch_size must be >= 1")
    rows = rng.integers(0, shape.height, size=batch_size)
    cols = rng.integers(0, shape.width, size=batch_size)
    positions = list(dict.fromkeys(zip(rows.tolist(), cols.tolist())))
    return [
        PixelCoordinate(r, c, ch)
        for r, c in positions
        for ch in range(shape.channels)
    ]


def _initial_check(oracle, img, true_class):
    first = oracle.query(img)
    if not 0 <= true_class < first.num_classes:
        raise ContractViolationError(
            f"true_class {true_class} outside [0, {first.num_classes})"
        )
    if first.predicted_class != true_class:
        raise AlreadyMisclassifiedError(
            f"target already predicts {first.predicted_class}, "
            f"not {true_class}; nothing to attack"
        )
    return first


def _success(original, adv, queries, true_class, adv_class, fitness_log=()):
    return AttackOutcome(
        success=True,
        queries_used=queries,
        original_class=true_class,
        adversarial_image=adv,
        adversarial_class=adv_class,
        l0=l0_distance(original, adv),
        l2=l2_distance(original, adv),
        linf=linf_distance(original, adv),
        per_generation_best_fitness=tuple(fitness_log),
    )


def _failure(queries, true_class, reason, fitness_log=()):
    return AttackOutcome(
        success=False,
        queries_used=queries,
        original_class=true_class,
        failure_reason=reason,
        per_generation_best_fitness=tuple(fitness_log),
    )


def evoba_attack(oracle, img: ImageTensor, true_class: int,
                 cfg: EvobaConfig) -> AttackOutcome:
    """Evolution-strategy attack minimizing the number of touched entries.

    Keeps a single parent (starting at the original image). Each generation
    samples ONE batch of grid positions, shared by all children; every child
    is the parent with fresh uniform values written at those positions. A
    child classified as any other class is returned immediately (children
    are evaluated in order, so the lowest-index success wins). Otherwise the
    child with the highest fitness, 1 minus the true-class probability,
    unconditionally becomes the next parent; there is no elitism, so fitness
    may decrease between generations.

    The loop runs while the parent's L0 distance from the original is below
    cfg.l0_threshold and queries remain; since the distance check happens
    before a generation, a returned child can overshoot the threshold by at
    most one mutation batch (pixel_batch_size * channels entries). Queries
    never exceed cfg.query_budget: a generation is cut short when the
    budget runs out mid-offspring.
    """
    rng = np.random.default_rng(cfg.seed)
    _initial_check(oracle, img, true_class)
    queries = 1

    parent = img
    parent_l0 = 0
    fitness_log = []

    while parent_l0 < cfg.l0_threshold and queries < cfg.query_budget:
        pixels = sample_grid_pixels(img.shape, cfg.pixel_batch_size, rng)
        children = []
        fitnesses = []
        for _ in range(cfg.generation_size):
            if queries >= cfg.query_budget:
                break
            child = write_many(
                parent, pixels, (sample_value(rng) for _ in pixels)
            )
            pred = oracle.query(child)
            queries += 1
            if pred.predicted_class != true_class:
                return _success(img, child, queries, true_class,
                                pred.predicted_class, fitness_log)
            children.append(child)
            fitnesses.append(1.0 - float(pred.probabilities[true_class]))
        best = int(np.argmax(fitnesses))  # ties break to the lowest index
        fitness_log.append(fitnesses[best])
        parent = children[best]
        parent_l0 = l0_distance(img, parent)

    reason = FAIL_L0_BUDGET if parent_l0 >= cfg.l0_threshold else FAIL_QUERY_BUDGET
    return _failure(queries, true_class, reason, fitness_log)


def simba_attack(oracle, img: ImageTensor, true_class: int,
                 cfg: SimbaConfig) -> AttackOutcome:
    """SimBA with the Cartesian (pixel) basis.

    Walks flat coordinates in a seeded random permutation, trying
    +step_size then -step_size on the current image (clamped to [0, 1]) and
    keeping the first direction that strictly lowers the true-class
    probability. Every trial costs one query. A fresh permutation starts
    when one is exhausted; a full pass with no accepted step means the
    attack has stalled and fails with a reason distinct from running out
    of budget.
    """
    rng = np.random.default_rng(cfg.seed)
    first = _initial_check(oracle, img, true_class)
    queries = 1

    shape = img.shape
    n = shape.element_count
    current = img
    current_prob = float(first.probabilities[true_class])

    while queries < cfg.query_budget:
        accepted_in_pass = False
        for flat_idx in rng.permutation(n):
            idx = int(flat_idx)
            coord = PixelCoordinate(
                idx // (shape.width * shape.channels),
                (idx // shape.channels) % shape.width,
                idx % shape.channels,
            )
            base = current[coord]
            for delta in (cfg.step_size, -cfg.step_size):
                if queries >= cfg.query_budget:
                    return _failure(queries, true_class, FAIL_QUERY_BUDGET)
                candidate = apply_write(
                    current, coord, min(1.0, max(0.0, base + delta))
                )
                pred = oracle.query(candidate)
                queries += 1
                if pred.predicted_class != true_class:
                    return _success(img, candidate, queries, true_class,
                                    pred.predicted_class)
                prob = float(pred.probabilities[true_class])
                if prob < current_prob:
                    current = candidate
                    current_prob = prob
                    accepted_in_pass = True
                    break  # move on to the next coordinate
        if not accepted_in_pass:
            return _failure(queries, true_class, FAIL_STALLED)
    return _failure(queries, true_class, FAIL_QUERY_BUDGET)


def complete_random_attack(oracle, img: ImageTensor, true_class: int,
                           q_budget: int, l0_budget: int,
                           seed: int) -> AttackOutcome:
    """Memoryless baseline: bounded random perturbations of the original.

    Every iteration restarts from the original image, samples
    floor(l0_budget / channels) grid positions with repetition, writes
    uniform values to all their channels and spends one query. A miss is
    discarded entirely. At most q_budget queries including the initial
    classification check.
    """
    if q_budget < 1:
        raise ContractViolationError("q_budget must be >= 1")
    positions = l0_budget // img.shape.channels
    if positions < 1:
        raise ContractViolationError(
            f"l0_budget {l0_budget} below the {img.shape.channels}-entry "
            f"cost of a single grid position"
        )
    rng = np.random.default_rng(seed)
    _initial_check(oracle, img, true_class)
    queries = 1

    while queries < q_budget:
        pixels = sample_grid_pixels(img.shape, positions, rng)
        candidate = write_many(img, pixels, (sample_value(rng) for _ in pixels))
        pred = oracle.query(candidate)
        queries += 1
        if pred.predicted_class != true_class:
            return _success(img, candidate, queries, true_class,
                            pred.predicted_class)
    return _failure(queries, true_class, FAIL_QUERY_BUDGET)
