"""Full search-mission orchestration and study harnesses.

One mission is the epoch loop: plan samples on the current posterior, route
them into tours, fly and measure, recompute the posterior, classify cells,
eliminate empty regions, and stop once enough of the floor is classified.
Everything is deterministic given the mission seed.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import (
    ClassificationMap,
    ConfidenceParams,
    Label,
    check_termination,
    classify_epoch,
    confidence_interval,
)
from .field_model import (
    Bump,
    FidelityModel,
    GridDomain,
    sample_ground_truth,
)
from .inference import SampleLog, posterior
from .planner import FidelityState, PlanLimits, plan_epoch
from .router import Clock, execute_epoch, plan_tours

BOUNDARY_TOL = 1e-6  # |f - th| below this: cell excluded from error accounting
REPORT_SCHEMA_VERSION = 1

MODES = ("prior-draw", "planted")
BASELINES = ("multi-fidelity", "single-fidelity-only")


@dataclass(frozen=True)
class MissionConfig:
    domain: GridDomain
    model: FidelityModel
    delta: float
    th: float
    seed: int
    mode: str = "prior-draw"
    baseline: str = "multi-fidelity"
    epoch_sample_cap: int = 200
    max_epochs: int = 30
    sigma_ratio: float = 0.75
    sample_time: float = 1.0
    termination_fraction: float = 0.99
    bumps: tuple[Bump, ...] = ()
    background: float = 0.0
    start: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if not np.isfinite(self.th):
            raise ValueError("th must be finite")
        if self.epoch_sample_cap < 1 or self.max_epochs < 1:
            raise ValueError("caps must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")

    @property
    def initial_level(self) -> int:
        return self.model.levels if self.baseline == "single-fidelity-only" else 1

    def start_position(self) -> tuple[float, float, float]:
        if self.start is not None:
            return self.start
        return (self.domain.x_min, self.domain.y_min, self.model.z[self.initial_level - 1])

    def limits(self) -> PlanLimits:
        return PlanLimits(sigma_ratio=self.sigma_ratio, sample_cap=self.epoch_sample_cap)

    def params(self) -> ConfidenceParams:
        return ConfidenceParams(delta=self.delta, th=self.th)

    def to_flat_dict(self) -> dict:
        d = {
            "domain.x_min": self.domain.x_min,
            "domain.x_max": self.domain.x_max,
            "domain.y_min": self.domain.y_min,
            "domain.y_max": self.domain.y_max,
            "domain.resolution": self.domain.resolution,
            "model.levels": self.model.levels,
        }
        for m in range(1, self.model.levels + 1):
            for name in ("mu", "v", "l", "s", "z"):
                d[f"model.{name}_{m}"] = getattr(self.model, name)[m - 1]
        d.update(
            {
                "mission.delta": self.delta,
                "mission.th": self.th,
                "mission.seed": self.seed,
                "mission.mode": self.mode,
                "mission.baseline": self.baseline,
                "mission.epoch_sample_cap": self.epoch_sample_cap,
                "mission.max_epochs": self.max_epochs,
                "mission.sigma_ratio": self.sigma_ratio,
                "mission.sample_time": self.sample_time,
                "mission.termination_fraction": self.termination_fraction,
            }
        )
        if self.start is not None:
            d["mission.start_x"] = self.start[0]
            d["mission.start_y"] = self.start[1]
            d["mission.start_z"] = self.start[2]
        if self.mode == "planted" or self.bumps:
            d["planted.background"] = self.background
            d["planted.bumps"] = len(self.bumps)
            for k, b in enumerate(self.bumps, start=1):
                d[f"planted.bump_{k}.x"] = b.x
                d[f"planted.bump_{k}.y"] = b.y
                d[f"planted.bump_{k}.amplitude"] = b.amplitude
                d[f"planted.bump_{k}.radius"] = b.radius
        return d


@dataclass
class EpochRecord:
    epoch: int
    n_before: int
    n_after: int
    sigma_max_before: float
    sigma_max_after_pred: float
    sigma_max_after: float
    ratio: float
    capped: bool
    fidelity_levels: tuple[int, ...]
    altitude_changes: int
    classified_fraction: float
    clock: float
    coverage_outside: int = 0  # cells whose true score escaped [L, U] this epoch


@dataclass
class MissionReport:
    config: MissionConfig
    epochs: list[EpochRecord] = field(default_factory=list)
    decay: list[tuple[int, float]] = field(default_factory=list)
    fidelity_trace: list[int] = field(default_factory=list)
    labels: np.ndarray | None = None
    truth_labels: np.ndarray | None = None
    delta_x: np.ndarray | None = None
    epoch_classified: np.ndarray | None = None
    time_classified: np.ndarray | None = None
    truth_field: np.ndarray | None = None
    posterior_mu: np.ndarray | None = None
    posterior_sigma2: np.ndarray | None = None
    plan_rows: list[tuple] = field(default_factory=list)
    tour_rows: list[tuple] = field(default_factory=list)
    increments: list[tuple[str, float]] = field(default_factory=list)
    terminated: str = "epoch-cap"
    n_total: int = 0
    clock_total: float = 0.0
    classified_fraction: float = 0.0
    label_counts: dict = field(default_factory=dict)
    final_map: ClassificationMap | None = None
    log: SampleLog | None = None
    truth: object = None

    def misclassification(self) -> dict:
        """Errors among classified cells, excluding threshold-boundary cells."""
        classified = self.labels != Label.UNCERTAIN
        boundary = self.delta_x <= BOUNDARY_TOL
        counted = classified & ~boundary
        predicted_target = self.labels == Label.TARGET
        errors = counted & (predicted_target != self.truth_labels)
        return {
            "classified": int(np.sum(counted)),
            "errors": int(np.sum(errors)),
            "boundary_excluded": int(np.sum(classified & boundary)),
        }

    def to_json_dict(self) -> dict:
        mis = self.misclassification()
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config.to_flat_dict(),
            "terminated": self.terminated,
            "n_total": self.n_total,
            "clock_total": self.clock_total,
            "classified_fraction": self.classified_fraction,
            "label_counts": self.label_counts,
            "misclassification": mis,
            "fidelity_trace": self.fidelity_trace,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "n_before": e.n_before,
                    "n_after": e.n_after,
                    "sigma_max_before": e.sigma_max_before,
                    "sigma_max_after_pred": e.sigma_max_after_pred,
                    "sigma_max_after": e.sigma_max_after,
                    "ratio": e.ratio,
                    "capped": e.capped,
                    "fidelity_levels": list(e.fidelity_levels),
                    "altitude_changes": e.altitude_changes,
                    "classified_fraction": e.classified_fraction,
                    "clock": e.clock,
                    "coverage_outside": e.coverage_outside,
                }
                for e in self.epochs
            ],
            "decay": [[n, v] for n, v in self.decay],
            "cells": {
                "label": [int(v) for v in self.labels],
                "truth_label": [int(v) for v in self.truth_labels],
                "truth_value": list(self.truth_field),
                "delta": list(self.delta_x),
                "epoch": [int(v) for v in self.epoch_classified],
                "time": list(self.time_classified),
            },
        }


def _mission_rngs(seed: int):
    truth_seed, meas_seed = np.random.SeedSequence(seed).generate_state(2)
    return int(truth_seed), np.random.default_rng(int(meas_seed))


def run_mission(config: MissionConfig) -> MissionReport:
    """Execute the full epoch loop; deterministic given config.seed."""
    domain, model = config.domain, config.model
    truth_seed, rng = _mission_rngs(config.seed)
    truth = sample_ground_truth(
        domain,
        model,
        seed=truth_seed,
        mode=config.mode,
        bumps=config.bumps,
        background=config.background,
    )
    params = config.params()
    limits = config.limits()

    log = SampleLog(domain)
    clock = Clock()
    cmap = ClassificationMap.initial(domain)
    state = FidelityState(model, level=config.initial_level)
    position = config.start_position()
    post = posterior(log, domain, model)
    candidates = cmap.candidate_indices()

    report = MissionReport(config=config)
    report.decay.append((0, post.max_sigma2(candidates)))

    terminated = "epoch-cap"
    for j in range(1, config.max_epochs + 1):
        plan = plan_epoch(post, state, limits, candidates, epoch=j)
        state = plan.state_after
        tours = plan_tours(plan, model, position)
        trace = execute_epoch(
            plan,
            tours,
            truth,
            model,
            log,
            clock,
            rng,
            position,
            sample_time=config.sample_time,
        )
        position = trace.end_position
        post = posterior(log, domain, model)
        sigma_after = float(np.sqrt(post.max_sigma2(candidates)))
        cmap = classify_epoch(post, cmap, params, j, clock_time=clock.time)
        low_j, up_j = confidence_interval(post.mu, np.sqrt(post.sigma2), params.epsilon(j))
        outside = int(np.sum((truth.f[-1] < low_j) | (truth.f[-1] > up_j)))

        for k, s in enumerate(plan.samples):
            report.plan_rows.append(
                (j, k + 1, s.location[0], s.location[1], s.fidelity, s.sigma_before)
            )
            report.fidelity_trace.append(s.fidelity)
        report.tour_rows.extend(trace.waypoint_rows)
        report.increments.extend(trace.increments)
        for k, mv in enumerate(plan.max_var_trace):
            report.decay.append((plan.n_before + k + 1, mv))
        report.epochs.append(
            EpochRecord(
                epoch=j,
                n_before=plan.n_before,
                n_after=len(log),
                sigma_max_before=plan.sigma_max_before,
                sigma_max_after_pred=plan.sigma_max_after,
                sigma_max_after=sigma_after,
                ratio=sigma_after / plan.sigma_max_before if plan.sigma_max_before > 0 else 0.0,
                capped=plan.capped,
                fidelity_levels=plan.fidelity_levels(),
                altitude_changes=trace.altitude_changes,
                classified_fraction=cmap.classified_fraction(),
                clock=clock.time,
                coverage_outside=outside,
            )
        )

        candidates = cmap.candidate_indices()
        if check_termination(cmap, config.termination_fraction):
            terminated = "classified"
            break
        if len(candidates) == 0:
            break

    truth_mask = truth.target_mask(config.th)
    report.terminated = terminated
    report.n_total = len(log)
    report.clock_total = clock.time
    report.labels = np.asarray(cmap.labels)
    report.truth_labels = truth_mask
    report.truth_field = truth.f[-1]
    report.delta_x = np.abs(truth.f[-1] - config.th)
    report.epoch_classified = np.asarray(cmap.epoch)
    report.time_classified = np.asarray(cmap.time)
    report.posterior_mu = post.mu
    report.posterior_sigma2 = post.sigma2
    report.classified_fraction = cmap.classified_fraction()
    report.label_counts = cmap.counts()
    report.final_map = cmap
    report.log = log
    report.truth = truth
    return report


@dataclass
class DecayCurves:
    """Max posterior variance versus sample count for the two samplers."""

    n: list[int]
    multi_fidelity: list[float]
    single_fidelity: list[float]


def _variance_decay(config: MissionConfig, n_samples: int, force_top: bool) -> list[float]:
    from .inference import append_sample_variance_only
    from .planner import select_next_point, update_fidelity

    domain, model = config.domain, config.model
    state = FidelityState(model, level=model.levels if force_top else 1)
    post = posterior(SampleLog(domain), domain, model)
    candidates = np.arange(domain.n_cells)
    curve = [post.max_sigma2()]
    for _ in range(n_samples):
        loc = select_next_point(post, candidates)
        post = append_sample_variance_only(post, loc, state.level)
        if not force_top:
            state = update_fidelity(state, post, candidates)
        curve.append(post.max_sigma2())
    return curve


def compare_decay(config: MissionConfig, n_samples: int = 80) -> DecayCurves:
    """Variance-only greedy sampling with and without fidelity switching.

    No classification or elimination happens here; the curves depend only on
    sampling locations, so they are observation-independent.
    """
    multi = _variance_decay(config, n_samples, force_top=False)
    single = _variance_decay(config, n_samples, force_top=True)
    return DecayCurves(n=list(range(n_samples + 1)), multi_fidelity=multi, single_fidelity=single)


def _worker_count(n_jobs: int) -> int:
    workers = min(n_jobs, os.cpu_count() or 1)
    cap = os.environ.get("MFGP_SEARCH_THREADS")
    if cap:
        workers = max(1, min(workers, int(cap)))
    return max(1, workers)


def run_missions(config: MissionConfig, seeds) -> list[MissionReport]:
    """Run one mission per seed, in parallel, results in seed order."""
    configs = [replace(config, seed=int(s)) for s in seeds]
    with ThreadPoolExecutor(max_workers=_worker_count(len(configs))) as pool:
        return list(pool.map(run_mission, configs))


@dataclass
class DetectionTimeTable:
    """Mean classification time per bin of distance-to-threshold."""

    rows: list[dict]
    seeds: list[int]

    def mean_times(self) -> list[float]:
        return [r["mean_time"] for r in self.rows]


def detection_time_study(
    config: MissionConfig, seeds, delta_bins: int = 3
) -> DetectionTimeTable:
    """Bin cells by their distance to the threshold and average the time at
    which each cell was classified, pooled over per-seed missions.

    Cells never classified within the epoch cap are censored: counted per
    bin, excluded from the means.
    """
    if config.mode != "prior-draw":
        raise ValueError("detection-time study requires prior-draw mode")
    seeds = [int(s) for s in seeds]
    reports = run_missions(config, seeds)
    deltas = np.concatenate([r.delta_x for r in reports])
    times = np.concatenate([r.time_classified for r in reports])
    classified = np.concatenate([r.labels != Label.UNCERTAIN for r in reports])
    keep = deltas > BOUNDARY_TOL
    deltas, times, classified = deltas[keep], times[keep], classified[keep]

    qs = np.quantile(deltas, np.linspace(0.0, 1.0, delta_bins + 1))
    qs[0], qs[-1] = 0.0, np.inf
    rows = []
    for b in range(delta_bins):
        sel = (deltas >= qs[b]) & (deltas < qs[b + 1])
        done = sel & classified
        rows.append(
            {
                "bin": b + 1,
                "delta_min": float(qs[b]),
                "delta_max": float(np.max(deltas[sel])) if np.any(sel) else float(qs[b]),
                "mean_time": float(np.mean(times[done])) if np.any(done) else float("nan"),
                "classified": int(np.sum(done)),
                "censored": int(np.sum(sel & ~classified)),
            }
        )
    return DetectionTimeTable(rows=rows, seeds=seeds)
