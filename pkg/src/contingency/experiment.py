"""Paired trials of usual vs. contingency training.

Each trial derives its own seed from ``(master_seed, trial_index)``, injects
fresh irrelevant columns if requested, splits once, and trains one network
per arm on that split. The usual arm sees the raw ``nv`` features; the
contingency arm sees the ``2 * nv`` masked encoding of the augmented
training set and is tested on the all-present encoding of the same test
rows.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from threadpoolctl import threadpool_limits

from contingency import model
from contingency.augment import AugmentationSpec, build_contingency_dataset, encode_plain, format_spec
from contingency.data import (
    RawDataset,
    inject_irrelevant_variables,
    minmax_apply,
    minmax_fit,
    train_test_split,
)
from contingency.model import MlpConfig
from contingency.optim import NonFiniteError
from contingency.rng import child_seed, spawn

log = logging.getLogger(__name__)

DESK_MAX_ITERATIONS = 3000


@dataclass(frozen=True)
class TrialConfig:
    dataset_id: str
    spec: AugmentationSpec
    n_trials: int = 100
    train_fraction: float = 0.75
    irrelevant_count: int = 0
    master_seed: int = 0
    n_hidden: int = 15
    weight_decay: float = 1e-4
    init_range: float = 0.1
    max_iterations: int = DESK_MAX_ITERATIONS
    stall_iterations: int = 20
    loss: model.Loss = model.Loss.SSE
    scale: bool = False

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.irrelevant_count < 0:
            raise ValueError("irrelevant_count must be >= 0")
        object.__setattr__(self, "loss", model.Loss(self.loss))

    def mlp(self, n_inputs: int, n_outputs: int) -> MlpConfig:
        return MlpConfig(
            n_inputs=n_inputs,
            n_outputs=n_outputs,
            n_hidden=self.n_hidden,
            weight_decay=self.weight_decay,
            init_range=self.init_range,
            max_iterations=self.max_iterations,
            stall_iterations=self.stall_iterations,
            loss=self.loss,
        )

    def echo(self) -> dict:
        d = asdict(self)
        d["spec"] = format_spec(self.spec)
        d["loss"] = self.loss.value
        return d


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    seed: int
    accuracy_usual: Optional[float]
    accuracy_contingency: Optional[float]
    converged_usual: bool = False
    converged_contingency: bool = False
    iterations_usual: int = 0
    iterations_contingency: int = 0
    n_inputs_usual: int = 0
    n_inputs_contingency: int = 0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class FiveNumber:
    min: float
    q1: float
    median: float
    q3: float
    max: float


@dataclass(frozen=True)
class SummaryReport:
    config: TrialConfig
    trials: tuple[TrialResult, ...]
    usual: FiveNumber
    contingency: FiveNumber
    median_improvement: float
    n_failed: int = 0

    def to_dict(self) -> dict:
        return {
            "config": self.config.echo(),
            "trials": [
                {
                    "index": t.trial_index,
                    "seed": t.seed,
                    "acc_usual": t.accuracy_usual,
                    "acc_contingency": t.accuracy_contingency,
                    "converged_usual": t.converged_usual,
                    "converged_contingency": t.converged_contingency,
                    "iterations_usual": t.iterations_usual,
                    "iterations_contingency": t.iterations_contingency,
                    "inputs_usual": t.n_inputs_usual,
                    "inputs_contingency": t.n_inputs_contingency,
                    "error": t.error,
                }
                for t in self.trials
            ],
            "summary": {
                "usual": asdict(self.usual),
                "contingency": asdict(self.contingency),
                "median_improvement": self.median_improvement,
                "n_failed": self.n_failed,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json())

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "seed", "acc_usual", "acc_contingency", "converged_usual", "converged_contingency", "error"])
            for t in self.trials:
                w.writerow([t.trial_index, t.seed, t.accuracy_usual, t.accuracy_contingency,
                            int(t.converged_usual), int(t.converged_contingency), t.error or ""])


def summarize(values) -> FiveNumber:
    """Min, quartiles (linear interpolation between order statistics) and max."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot summarize an empty list")
    q = np.percentile(v, [0, 25, 50, 75, 100], method="linear")
    return FiveNumber(*(float(x) for x in q))


def run_trial(d: RawDataset, cfg: TrialConfig, trial_index: int) -> TrialResult:
    seed = child_seed(cfg.master_seed, trial_index)
    r_inject, r_split, r_aug, r_init_u, r_init_c = spawn(seed, 5)
    try:
        with threadpool_limits(1):
            if cfg.irrelevant_count:
                d = inject_irrelevant_variables(d, cfg.irrelevant_count, r_inject)
            split = train_test_split(d, cfg.train_fraction, r_split)
            train, test = split.train, split.test
            if cfg.scale:
                lo, span = minmax_fit(train)
                train, test = minmax_apply(train, lo, span), minmax_apply(test, lo, span)
            nv = d.nv

            usual = model.train_bfgs(cfg.mlp(nv, d.n_classes), train.features, train.labels, r_init_u)
            acc_u = model.accuracy(usual.parameters, test.features, test.labels)

            aug = build_contingency_dataset(train, cfg.spec, r_aug)
            test_enc = encode_plain(test)
            cont = model.train_bfgs(cfg.mlp(2 * nv, d.n_classes), aug.inputs, aug.labels, r_init_c)
            acc_c = model.accuracy(cont.parameters, test_enc.inputs, test_enc.labels)
    except (model.TrainingError, NonFiniteError) as exc:
        log.warning("trial %d failed: %s", trial_index, exc)
        return TrialResult(trial_index, seed, None, None, error=str(exc))
    return TrialResult(
        trial_index,
        seed,
        acc_u,
        acc_c,
        usual.converged,
        cont.converged,
        usual.iterations,
        cont.iterations,
        usual.parameters.n_inputs,
        cont.parameters.n_inputs,
    )


def _run_trial_star(args):
    return run_trial(*args)


def summarize_trials(cfg: TrialConfig, trials: list[TrialResult]) -> SummaryReport:
    ok = [t for t in trials if not t.failed]
    if not ok:
        raise RuntimeError(f"all {len(trials)} trials failed")
    usual = summarize([t.accuracy_usual for t in ok])
    cont = summarize([t.accuracy_contingency for t in ok])
    return SummaryReport(cfg, tuple(trials), usual, cont, cont.median - usual.median, len(trials) - len(ok))


def run_experiment(d: RawDataset, cfg: TrialConfig, jobs: int = 1) -> SummaryReport:
    """Run ``cfg.n_trials`` paired trials; output does not depend on ``jobs``."""
    work = [(d, cfg, i) for i in range(cfg.n_trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(_run_trial_star, work))
    else:
        trials = [run_trial(*w) for w in work]
    trials.sort(key=lambda t: t.trial_index)
    return summarize_trials(cfg, trials)
