"""Confidence-bound classification of cells and region elimination.

At the end of epoch j every still-uncertain cell gets a Bayesian confidence
interval at tolerance delta/2^j.  Cells whose lower bound clears the
detection threshold become targets; cells whose upper bound stays below it
become empty and leave the sampling space permanently.  Halving the
tolerance each epoch keeps the total misclassification probability of any
cell below delta.
"""

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .field_model import GridDomain
from .inference import PosteriorField


class Label(IntEnum):
    UNCERTAIN = 0
    EMPTY = 1
    TARGET = 2


LABEL_NAMES = {Label.UNCERTAIN: "uncertain", Label.EMPTY: "empty", Label.TARGET: "target"}
# tri-level occupancy PGM: empty dark, uncertain mid, target bright
_PGM_LEVELS = {Label.EMPTY: 0, Label.UNCERTAIN: 128, Label.TARGET: 255}


@dataclass(frozen=True)
class ConfidenceParams:
    """Misclassification tolerance and detection threshold."""

    delta: float
    th: float

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if not math.isfinite(self.th):
            raise ValueError("detection threshold must be finite")

    def epsilon(self, epoch: int) -> float:
        """Per-epoch tolerance delta / 2^j; halves every epoch."""
        if epoch < 1:
            raise ValueError("epoch index starts at 1")
        return self.delta / 2.0**epoch


def c_value(epsilon: float) -> float:
    """Sub-Gaussian tail width c = sqrt(2 ln(1/(2 eps)))."""
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    return math.sqrt(2.0 * math.log(1.0 / (2.0 * epsilon)))


def confidence_interval(mu, sigma, epsilon: float):
    """Interval [mu - c*sigma, mu + c*sigma] containing the score with
    probability at least 1 - 2*epsilon.  Vectorizes over mu/sigma."""
    c = c_value(epsilon)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    return mu - c * sigma, mu + c * sigma


@dataclass(frozen=True)
class ClassificationMap:
    """Per-cell tri-state labels with classification bookkeeping.

    Labels empty/target are permanent; epoch/time record when a cell left
    the uncertain set (-1 while uncertain).  lower/upper hold the interval
    from the cell's classification epoch (or the latest epoch while still
    uncertain).
    """

    domain: GridDomain
    labels: np.ndarray  # (n_cells,) Label values
    epoch: np.ndarray  # (n_cells,) int, -1 if uncertain
    time: np.ndarray  # (n_cells,) float, -1.0 if uncertain
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def initial(cls, domain: GridDomain) -> "ClassificationMap":
        n = domain.n_cells
        arrays = (
            np.full(n, int(Label.UNCERTAIN), dtype=np.int8),
            np.full(n, -1, dtype=int),
            np.full(n, -1.0),
            np.full(n, -np.inf),
            np.full(n, np.inf),
        )
        for a in arrays:
            a.setflags(write=False)
        return cls(domain, *arrays)

    def uncertain_mask(self) -> np.ndarray:
        return self.labels == Label.UNCERTAIN

    def candidate_indices(self) -> np.ndarray:
        """Cells still in the sampling space: everything not classified empty."""
        return np.flatnonzero(self.labels != Label.EMPTY)

    def classified_fraction(self) -> float:
        return float(np.mean(self.labels != Label.UNCERTAIN))

    def counts(self) -> dict[str, int]:
        return {
            LABEL_NAMES[lab]: int(np.sum(self.labels == lab))
            for lab in (Label.TARGET, Label.EMPTY, Label.UNCERTAIN)
        }


def classify_epoch(
    posterior: PosteriorField,
    cmap: ClassificationMap,
    params: ConfidenceParams,
    epoch: int,
    clock_time: float = -1.0,
) -> ClassificationMap:
    """Classify still-uncertain cells at tolerance delta/2^epoch.

    Returns a new map snapshot; already-classified cells are untouched.
    """
    eps = params.epsilon(epoch)
    low, up = confidence_interval(posterior.mu, np.sqrt(posterior.sigma2), eps)
    uncertain = cmap.uncertain_mask()
    to_target = uncertain & (low >= params.th)
    to_empty = uncertain & (up < params.th)

    labels = cmap.labels.copy()
    ep = cmap.epoch.copy()
    tm = cmap.time.copy()
    lower = cmap.lower.copy()
    upper = cmap.upper.copy()
    labels[to_target] = Label.TARGET
    labels[to_empty] = Label.EMPTY
    newly = to_target | to_empty
    ep[newly] = epoch
    tm[newly] = clock_time
    still = uncertain & ~newly
    lower[newly | still] = low[newly | still]
    upper[newly | still] = up[newly | still]
    for a in (labels, ep, tm, lower, upper):
        a.setflags(write=False)
    return ClassificationMap(cmap.domain, labels, ep, tm, lower, upper)


def check_termination(cmap: ClassificationMap, fraction: float = 0.99) -> bool:
    """Mission is done once the classified fraction reaches the threshold."""
    return cmap.classified_fraction() >= fraction


def occupancy_rows(cmap: ClassificationMap):
    """(x, y, label, epoch, time) per cell, row-major."""
    centers = cmap.domain.cell_centers
    for i in range(cmap.domain.n_cells):
        yield (
            centers[i, 0],
            centers[i, 1],
            LABEL_NAMES[Label(int(cmap.labels[i]))],
            int(cmap.epoch[i]),
            float(cmap.time[i]),
        )


def occupancy_pgm(cmap: ClassificationMap) -> np.ndarray:
    levels = np.zeros(cmap.domain.n_cells, dtype=int)
    for lab, value in _PGM_LEVELS.items():
        levels[cmap.labels == lab] = value
    return levels.reshape(cmap.domain.resolution, cmap.domain.resolution)
