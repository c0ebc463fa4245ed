"""Epoch planning: greedy max-variance sampling and fidelity-level switching.

Each epoch is planned entirely before travel, which is possible because the
posterior variance depends only on where samples are taken, never on their
values.  The plan grows one point at a time (always the most uncertain
candidate cell) until the predicted maximum standard deviation drops to the
configured fraction of its value at the epoch start, or a sample cap is hit.
"""

from dataclasses import dataclass, replace

import numpy as np

from .field_model import FidelityModel
from .inference import PosteriorField, append_sample_variance_only


class PlanningComplete(Exception):
    """Raised when no candidate cells remain to plan over."""


@dataclass(frozen=True)
class FidelityState:
    """Current fidelity level plus the switch rule's derived quantities.

    The level only ever increases.  Switching from m to m+1 happens when the
    accessible uncertainty (max posterior variance minus the variance that
    level m cannot reduce) falls to l_{m+1}^2/l_m^2 * v_{m+1}^2.
    """

    model: FidelityModel
    level: int = 1

    def __post_init__(self):
        self.model._check_level(self.level)

    def switch_threshold(self) -> float:
        """Accessible-uncertainty threshold for advancing past the current level."""
        m = self.level
        if m >= self.model.levels:
            raise ValueError("no switch threshold at the top fidelity level")
        lm = self.model.l[m - 1]
        ln = self.model.l[m]
        return (ln * ln) / (lm * lm) * self.model.v[m] ** 2

    def inaccessible(self) -> float:
        return self.model.inaccessible_variance(self.level)

    def accessible_uncertainty(self, max_sigma2: float) -> float:
        return max_sigma2 - self.inaccessible()


def select_next_point(
    posterior: PosteriorField, candidates: np.ndarray
) -> tuple[float, float]:
    """Most uncertain candidate cell center; ties go to the lowest cell index.

    ``candidates`` is a sorted array of uneliminated cell indices.
    """
    if len(candidates) == 0:
        raise PlanningComplete("no candidate cells remain")
    local = int(np.argmax(posterior.sigma2[candidates]))
    idx = int(candidates[local])
    return posterior.domain.cell_center(idx)


def update_fidelity(
    state: FidelityState, posterior: PosteriorField, candidates: np.ndarray | None = None
) -> FidelityState:
    """Advance the fidelity level while the switch rule is satisfied.

    Multiple levels can be crossed in one call; the level never decreases.
    """
    max_var = posterior.max_sigma2(candidates)
    level = state.level
    while level < state.model.levels:
        probe = replace(state, level=level)
        if probe.accessible_uncertainty(max_var) <= probe.switch_threshold():
            level += 1
        else:
            break
    return replace(state, level=level)


@dataclass(frozen=True)
class PlannedSample:
    location: tuple[float, float]
    fidelity: int
    sigma_before: float  # predicted std dev at the location before this sample


@dataclass(frozen=True)
class PlanLimits:
    sigma_ratio: float = 0.75
    sample_cap: int = 200

    def __post_init__(self):
        if not 0.0 < self.sigma_ratio <= 1.0:
            raise ValueError("sigma_ratio must be in (0, 1]")
        if self.sample_cap < 1:
            raise ValueError("sample_cap must be positive")


@dataclass(frozen=True)
class EpochPlan:
    """One epoch's ordered sampling points with assigned fidelities."""

    epoch: int
    samples: tuple[PlannedSample, ...]
    n_before: int
    sigma_max_before: float
    sigma_max_after: float  # predicted, over the epoch's candidate set
    capped: bool
    state_after: FidelityState
    max_var_trace: tuple[float, ...]  # predicted max variance after each sample

    def by_fidelity(self) -> dict[int, list[PlannedSample]]:
        groups: dict[int, list[PlannedSample]] = {}
        for s in self.samples:
            groups.setdefault(s.fidelity, []).append(s)
        return dict(sorted(groups.items()))

    def fidelity_levels(self) -> tuple[int, ...]:
        return tuple(sorted({s.fidelity for s in self.samples}))


def plan_epoch(
    posterior: PosteriorField,
    state: FidelityState,
    limits: PlanLimits,
    candidates: np.ndarray,
    epoch: int = 1,
) -> EpochPlan:
    """Plan one epoch of samples by simulated variance updates.

    Loop: pick the most uncertain candidate, assign the current fidelity,
    append it hypothetically, re-check the fidelity switch rule; stop once
    the predicted max std dev over the candidates has fallen to
    ``sigma_ratio`` times its starting value, or the cap is reached.
    Deterministic for a given posterior snapshot and state.
    """
    if len(candidates) == 0:
        raise PlanningComplete("no candidate cells remain")
    sigma_before = float(np.sqrt(posterior.max_sigma2(candidates)))
    working = posterior
    samples: list[PlannedSample] = []
    trace: list[float] = []
    capped = False
    while True:
        loc = select_next_point(working, candidates)
        cell = working.domain.index_of(*loc)
        samples.append(
            PlannedSample(
                location=loc,
                fidelity=state.level,
                sigma_before=float(np.sqrt(working.sigma2[cell])),
            )
        )
        working = append_sample_variance_only(working, loc, state.level)
        max_var = working.max_sigma2(candidates)
        trace.append(max_var)
        state = update_fidelity(state, working, candidates)
        if np.sqrt(max_var) <= limits.sigma_ratio * sigma_before:
            break
        if len(samples) >= limits.sample_cap:
            capped = True
            break
    return EpochPlan(
        epoch=epoch,
        samples=tuple(samples),
        n_before=posterior.n,
        sigma_max_before=sigma_before,
        sigma_max_after=float(np.sqrt(trace[-1])),
        capped=capped,
        state_after=state,
        max_var_trace=tuple(trace),
    )
