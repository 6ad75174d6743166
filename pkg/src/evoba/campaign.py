"""Campaign orchestration: attack a pool of images, aggregate the metrics,
derive budget curves and histograms, and run the multi-seed consistency
protocol.

Reported shorthands follow the usual convention: SR is the success rate
over attacked images, QA the mean query count over ALL attacked images
(failures included; a success-only mean is reported alongside), and the
L0/L2/Linf aggregates cover successful perturbations only.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .attacks import (
    AttackOutcome,
    CompleteRandomConfig,
    EvobaConfig,
    SimbaConfig,
    complete_random_attack,
    evoba_attack,
    simba_attack,
)
from .dataset import LabeledDataset, save_adversarial_record
from .errors import ContractViolationError
from .oracle import ClassifierOracle

CSV_FIELDS = ["index", "true_class", "success", "queries", "l0", "l2",
              "linf", "adversarial_class", "failure_reason"]


def attack_name(spec) -> str:
    if isinstance(spec, EvobaConfig):
        return "evoba"
    if isinstance(spec, SimbaConfig):
        return "simba"
    if isinstance(spec, CompleteRandomConfig):
        return "random"
    raise ContractViolationError(f"unknown attack spec {type(spec).__name__}")


def derive_image_seed(campaign_seed: int, image_index: int) -> int:
    """Split one campaign seed into independent per-image streams.

    Uses numpy's SeedSequence over the pair (campaign_seed, image_index),
    so adding or removing pool images never perturbs the streams of the
    others, and distinct campaign seeds never collide.
    """
    ss = np.random.SeedSequence(
        [campaign_seed & 0xFFFFFFFFFFFFFFFF, image_index]
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_attack(oracle, img, true_class, spec, seed=None) -> AttackOutcome:
    """Dispatch one attack run, optionally overriding the config seed."""
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    if isinstance(spec, EvobaConfig):
        return evoba_attack(oracle, img, true_class, spec)
    if isinstance(spec, SimbaConfig):
        return simba_attack(oracle, img, true_class, spec)
    if isinstance(spec, CompleteRandomConfig):
        return complete_random_attack(
            oracle, img, true_class, spec.query_budget, spec.l0_budget, spec.seed
        )
    raise ContractViolationError(f"unknown attack spec {type(spec).__name__}")


@dataclass(frozen=True)
class PerImageRow:
    index: int
    true_class: int
    success: bool
    queries: int
    l0: int
    l2: float
    linf: float
    adversarial_class: Optional[int]
    failure_reason: Optional[str]


@dataclass
class CampaignReport:
    attack: str
    config: dict
    seed: int
    rows: list
    sr: float
    qa: float
    qa_success: Optional[float]
    median_queries: float
    l0_mean: Optional[float]
    l0_median: Optional[float]
    l2_mean: Optional[float]
    l2_median: Optional[float]
    linf_mean: Optional[float]
    n_attacked: int
    n_success: int
    wall_time_per_image: float = 0.0
    # kept in memory for re-verification and dumping; never serialized
    adversarial_images: Optional[list] = None

    def summary_dict(self) -> dict:
        return {
            "sr": self.sr,
            "qa": self.qa,
            "qa_success": self.qa_success,
            "median_queries": self.median_queries,
            "l0_mean": self.l0_mean,
            "l0_median": self.l0_median,
            "l2_mean": self.l2_mean,
            "l2_median": self.l2_median,
            "linf_mean": self.linf_mean,
            "n_attacked": self.n_attacked,
            "n_success": self.n_success,
        }

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "attack": self.attack,
            "config": self.config,
            "seed": self.seed,
            "summary": self.summary_dict(),
            "rows": [dataclasses.asdict(r) for r in self.rows],
        }
        if include_timing:
            out["wall_time_per_image"] = self.wall_time_per_image
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignReport":
        rows = [PerImageRow(**r) for r in d["rows"]]
        s = d["summary"]
        return cls(
            attack=d["attack"], config=d["config"], seed=d["seed"], rows=rows,
            sr=s["sr"], qa=s["qa"], qa_success=s["qa_success"],
            median_queries=s["median_queries"], l0_mean=s["l0_mean"],
            l0_median=s["l0_median"], l2_mean=s["l2_mean"],
            l2_median=s["l2_median"], linf_mean=s["linf_mean"],
            n_attacked=s["n_attacked"], n_success=s["n_success"],
            wall_time_per_image=d.get("wall_time_per_image", 0.0),
        )


def _summarize(rows: Sequence[PerImageRow]):
    queries = np.array([r.queries for r in rows], dtype=np.float64)
    succ = [r for r in rows if r.success]
    summary = {
        "sr": len(succ) / len(rows),
        "qa": float(queries.mean()),
        "median_queries": float(np.median(queries)),
        "n_attacked": len(rows),
        "n_success": len(succ),
        "qa_success": None,
        "l0_mean": None,
        "l0_median": None,
        "l2_mean": None,
        "l2_median": None,
        "linf_mean": None,
    }
    if succ:
        sq = np.array([r.queries for r in succ], dtype=np.float64)
        l0 = np.array([r.l0 for r in succ], dtype=np.float64)
        l2 = np.array([r.l2 for r in succ], dtype=np.float64)
        linf = np.array([r.linf for r in succ], dtype=np.float64)
        summary.update(
            qa_success=float(sq.mean()),
            l0_mean=float(l0.mean()),
            l0_median=float(np.median(l0)),
            l2_mean=float(l2.mean()),
            l2_median=float(np.median(l2)),
            linf_mean=float(linf.mean()),
        )
    return summary


def run_campaign(pool: LabeledDataset, model, spec, seed: int,
                 dump_dir=None) -> CampaignReport:
    """Attack every pool image with a fresh oracle and per-image seed.

    Budgets are per image, so each image gets its own ClassifierOracle over
    the shared model. Deterministic given seed. When dump_dir is set, every
    successful perturbed image is saved there with its JSON sidecar.
    """
    if len(pool) == 0:
        raise ContractViolationError("cannot run a campaign on an empty pool")
    name = attack_name(spec)
    rows = []
    adv_images = []
    start = time.perf_counter()
    for idx, (img, label) in enumerate(pool):
        oracle = ClassifierOracle(model)
        outcome = run_attack(oracle, img, label, spec,
                             seed=derive_image_seed(seed, idx))
        rows.append(PerImageRow(
            index=idx,
            true_class=label,
            success=outcome.success,
            queries=outcome.queries_used,
            l0=outcome.l0,
            l2=outcome.l2,
            linf=outcome.linf,
            adversarial_class=outcome.adversarial_class,
            failure_reason=outcome.failure_reason,
        ))
        adv_images.append(outcome.adversarial_image)
        if dump_dir is not None and outcome.success:
            save_adversarial_record(
                outcome.adversarial_image,
                {"index": idx, "true_class": label,
                 "adv_class": outcome.adversarial_class, "l0": outcome.l0,
                 "l2": outcome.l2, "linf": outcome.linf,
                 "queries": outcome.queries_used, "attack": name,
                 "seed": seed},
                f"{dump_dir}/adv_{idx:05d}",
            )
    elapsed = time.perf_counter() - start

    cfg = dataclasses.asdict(spec)
    return CampaignReport(
        attack=name, config=cfg, seed=seed, rows=rows,
        wall_time_per_image=elapsed / len(pool),
        adversarial_images=adv_images, **_summarize(rows),
    )


@dataclass(frozen=True)
class BudgetCurve:
    budgets: tuple
    success_rates: tuple

    def __post_init__(self):
        if len(self.budgets) != len(self.success_rates):
            raise ContractViolationError("budgets/success_rates length mismatch")
        if any(b < a for a, b in zip(self.budgets, self.budgets[1:])):
            raise ContractViolationError("budgets must be ascending")
        if any(b < a for a, b in zip(self.success_rates, self.success_rates[1:])):
            raise ContractViolationError("success rates must be non-decreasing")


def budget_curve(report: CampaignReport, budgets) -> BudgetCurve:
    """Success rate as a function of the maximum query budget.

    Computed post hoc by thresholding per-image query counts; nothing is
    re-run. success_rates[i] is the fraction of attacked images whose
    successful perturbation used at most budgets[i] queries.
    """
    budgets = [int(b) for b in budgets]
    succ_queries = np.sort(
        np.array([r.queries for r in report.rows if r.success])
    )
    n = report.n_attacked
    rates = tuple(
        float(np.searchsorted(succ_queries, b, side="right")) / n
        for b in budgets
    )
    return BudgetCurve(budgets=tuple(budgets), success_rates=rates)


@dataclass(frozen=True)
class Histogram:
    edges: tuple
    counts: tuple


def histogram(values, bin_count: int) -> Histogram:
    """Equal-width histogram over [min, max]; counts sum to len(values)."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ContractViolationError("cannot histogram an empty sequence")
    if bin_count < 1:
        raise ContractViolationError("bin_count must be >= 1")
    lo, hi = float(values.min()), float(values.max())
    edges = np.linspace(lo, hi, bin_count + 1)
    if hi == lo:
        counts = np.zeros(bin_count, dtype=int)
        counts[0] = values.size
    else:
        idx = np.minimum(
            ((values - lo) / (hi - lo) * bin_count).astype(int), bin_count - 1
        )
        counts = np.bincount(idx, minlength=bin_count)
    return Histogram(edges=tuple(edges.tolist()), counts=tuple(counts.tolist()))


def restricted_query_mean(report: CampaignReport, fraction: float) -> Optional[float]:
    """Mean queries over the most query-efficient successes, where the subset
    size is fraction * n_attacked (ascending query order)."""
    return _restricted_mean(report, fraction, lambda r: r.queries)


def restricted_l2_mean(report: CampaignReport, fraction: float) -> Optional[float]:
    return _restricted_mean(report, fraction, lambda r: r.l2)


def _restricted_mean(report, fraction, key):
    if not 0.0 < fraction <= 1.0:
        raise ContractViolationError(f"fraction must be in (0, 1], got {fraction}")
    count = int(round(fraction * report.n_attacked))
    values = sorted(key(r) for r in report.rows if r.success)
    if count == 0 or not values:
        return None
    return float(np.mean(values[:count]))


@dataclass
class ConsistencyReport:
    """Cross-seed dispersion of the campaign metrics (sample std, ddof=1)."""

    seeds: list
    reports: list
    stats: dict

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "stats": self.stats,
            "campaigns": [r.to_dict() for r in self.reports],
        }


def consistency_study(pool, model, spec, n_seeds: int,
                      base_seed: int = 0) -> ConsistencyReport:
    """Repeat the same campaign under n_seeds consecutive seeds."""
    if n_seeds < 2:
        raise ContractViolationError("need at least 2 seeds")
    seeds = [base_seed + i for i in range(n_seeds)]
    reports = [run_campaign(pool, model, spec, seed=s) for s in seeds]
    stats = {}
    for metric in ("sr", "qa", "l0_mean", "l2_mean"):
        values = [getattr(r, metric) for r in reports]
        if any(v is None for v in values):
            stats[metric] = {"mean": None, "std": None, "values": values}
        else:
            arr = np.array(values, dtype=np.float64)
            stats[metric] = {
                "mean": float(arr.mean()),
                "std": float(arr.std(ddof=1)),
                "values": [float(v) for v in values],
            }
    return ConsistencyReport(seeds=seeds, reports=reports, stats=stats)


def emit_report(report: CampaignReport, format: str, path,
                include_timing: bool = False) -> None:
    """Write a campaign report to disk.

    csv: one row per image plus '#summary' footer lines.
    json: the full structured report with stable field ordering.
    """
    if format == "json":
        with open(path, "w") as f:
            json.dump(report.to_dict(include_timing=include_timing), f, indent=2)
            f.write("\n")
    elif format == "csv":
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_FIELDS)
            for r in report.rows:
                writer.writerow([
                    r.index, r.true_class, int(r.success), r.queries,
                    r.l0, repr(r.l2), repr(r.linf),
                    "" if r.adversarial_class is None else r.adversarial_class,
                    r.failure_reason or "",
                ])
            for key, value in report.summary_dict().items():
                writer.writerow(["#summary", key,
                                 "" if value is None else repr(value)])
            if include_timing:
                writer.writerow(["#summary", "wall_time_per_image",
                                 repr(report.wall_time_per_image)])
    else:
        raise ContractViolationError(f"format must be csv or json, got {format!r}")
