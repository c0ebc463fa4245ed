"""Search domain, multi-fidelity GP prior, and synthetic ground-truth fields.

The sensing field over a 2D floor is modeled as a stack of ``M`` independent
GP layers, one per sensing altitude.  Level ``m`` accumulates the layers
``1..m``; the top level ``M`` is the full-fidelity score field used as ground
truth by the simulator.  Lower levels (higher altitudes) see a smoother,
lower-amplitude version of the field.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter

from ._linalg import DEFAULT_JITTER, jittered_cholesky

MAX_EXACT_CELLS = 10_000


@dataclass(frozen=True)
class GridDomain:
    """Uniform cell grid over the rectangle [x_min, x_max] x [y_min, y_max].

    Cells are indexed row-major: index ``i`` maps to row ``i // resolution``
    (the y axis) and column ``i % resolution`` (the x axis).
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    resolution: int

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("domain extents must satisfy x_max > x_min and y_max > y_min")
        if self.resolution < 1:
            raise ValueError("resolution must be a positive integer")

    @property
    def n_cells(self) -> int:
        return self.resolution * self.resolution

    @property
    def cell_dx(self) -> float:
        return (self.x_max - self.x_min) / self.resolution

    @property
    def cell_dy(self) -> float:
        return (self.y_max - self.y_min) / self.resolution

    @property
    def side(self) -> float:
        return max(self.x_max - self.x_min, self.y_max - self.y_min)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        """(n_cells, 2) array of cell-center coordinates, row-major."""
        xs = self.x_min + (np.arange(self.resolution) + 0.5) * self.cell_dx
        ys = self.y_min + (np.arange(self.resolution) + 0.5) * self.cell_dy
        gx, gy = np.meshgrid(xs, ys)  # row-major: y varies by row
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        centers.setflags(write=False)
        return centers

    def cell_center(self, i: int) -> tuple[float, float]:
        if not 0 <= i < self.n_cells:
            raise ValueError(f"cell index {i} out of range [0, {self.n_cells})")
        row, col = divmod(i, self.resolution)
        return (
            self.x_min + (col + 0.5) * self.cell_dx,
            self.y_min + (row + 0.5) * self.cell_dy,
        )

    def index_of(self, x: float, y: float) -> int:
        """Cell index of a point that must lie on a cell center."""
        col = int(round((x - self.x_min) / self.cell_dx - 0.5))
        row = int(round((y - self.y_min) / self.cell_dy - 0.5))
        if not (0 <= col < self.resolution and 0 <= row < self.resolution):
            raise ValueError(f"point ({x}, {y}) outside the domain grid")
        cx, cy = self.cell_center(row * self.resolution + col)
        tol = 1e-9 * max(self.side, 1.0)
        if abs(cx - x) > tol or abs(cy - y) > tol:
            raise ValueError(f"point ({x}, {y}) is not a cell center")
        return row * self.resolution + col


@dataclass(frozen=True)
class FidelityModel:
    """Per-level hyperparameters of the autoregressive GP stack.

    Level arrays are indexed 1..M in the API (level 1 = highest altitude =
    lowest fidelity).  Amplitudes, length scales, and altitudes must be
    strictly decreasing with the level index; noise must be positive.
    """

    mu: tuple[float, ...]
    v: tuple[float, ...]
    l: tuple[float, ...]
    s: tuple[float, ...]
    z: tuple[float, ...]

    def __post_init__(self):
        M = len(self.v)
        if M < 1:
            raise ValueError("need at least one fidelity level")
        for name in ("mu", "l", "s", "z"):
            if len(getattr(self, name)) != M:
                raise ValueError(f"level arrays disagree in length: {name}")
        if any(x <= 0 for x in self.v) or any(np.diff(self.v) >= 0):
            raise ValueError("kernel amplitudes v must be positive and strictly decreasing")
        if any(x <= 0 for x in self.l) or any(np.diff(self.l) >= 0):
            raise ValueError("length scales l must be positive and strictly decreasing")
        if any(x <= 0 for x in self.z) or any(np.diff(self.z) >= 0):
            raise ValueError("altitudes z must be positive and strictly decreasing")
        if any(x <= 0 for x in self.s):
            raise ValueError("noise levels s must be positive")

    @property
    def levels(self) -> int:
        return len(self.v)

    def prior_mean(self) -> float:
        return float(sum(self.mu))

    def prior_variance(self, level: int | None = None) -> float:
        """Prior variance of the level-m field: sum of v_i^2 for i <= m."""
        m = self.levels if level is None else level
        self._check_level(m)
        return float(sum(vi * vi for vi in self.v[:m]))

    def inaccessible_variance(self, level: int) -> float:
        """Variance contributed by layers above ``level`` (zero at the top)."""
        self._check_level(level)
        return float(sum(vi * vi for vi in self.v[level:]))

    def _check_level(self, m: int):
        if not 1 <= m <= self.levels:
            raise ValueError(f"fidelity level {m} out of range [1, {self.levels}]")


def kernel_eval(m: int, x, xp, model: FidelityModel):
    """Squared-exponential kernel of layer m: v_m^2 exp(-|x-x'|^2 / (2 l_m^2)).

    ``x`` and ``xp`` are arrays of shape (..., 2) and broadcast together.
    """
    model._check_level(m)
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    d2 = np.sum((x - xp) ** 2, axis=-1)
    vm = model.v[m - 1]
    lm = model.l[m - 1]
    return vm * vm * np.exp(-d2 / (2.0 * lm * lm))


def kernel_matrix(m: int, X: np.ndarray, Xp: np.ndarray, model: FidelityModel) -> np.ndarray:
    """Layer-m kernel matrix between point sets X (n,2) and Xp (p,2)."""
    return kernel_eval(m, X[:, None, :], Xp[None, :, :], model)


def prior_moments(x, xp, model: FidelityModel):
    """Prior mean and covariance of the full-fidelity field between x and x'."""
    mean = model.prior_mean()
    cov = sum(kernel_eval(m, x, xp, model) for m in range(1, model.levels + 1))
    return mean, cov


@dataclass(frozen=True)
class Bump:
    """Radial score bump for planted ground truth: a*exp(-d^2/(2 r^2))."""

    x: float
    y: float
    amplitude: float
    radius: float


@dataclass(frozen=True)
class GroundTruth:
    """Synthetic per-level score fields over the grid.

    ``f`` has shape (M, n_cells) with level m stored at row m-1; ``h`` holds
    the per-level increments, so f[m] - f[m-1] == h[m] exactly.
    """

    domain: GridDomain
    f: np.ndarray
    h: np.ndarray

    def level_field(self, m: int) -> np.ndarray:
        return self.f[m - 1]

    def value_at(self, x: float, y: float, m: int) -> float:
        return float(self.f[m - 1, self.domain.index_of(x, y)])

    def target_mask(self, th: float) -> np.ndarray:
        """Cells whose full-fidelity score reaches the detection threshold."""
        return self.f[-1] >= th


@lru_cache(maxsize=8)
def _level_cholesky(domain: GridDomain, model: FidelityModel, m: int, jitter_scale: float):
    K = kernel_matrix(m, domain.cell_centers, domain.cell_centers, model)
    L, _ = jittered_cholesky(K, jitter_scale)
    return L


def sample_ground_truth(
    domain: GridDomain,
    model: FidelityModel,
    seed: int,
    mode: str = "prior-draw",
    bumps: tuple[Bump, ...] = (),
    background: float = 0.0,
    jitter_scale: float = DEFAULT_JITTER,
) -> GroundTruth:
    """Generate a deterministic synthetic ground truth.

    prior-draw: every layer is an exact joint GP draw over the grid (mean
    mu_m, layer kernel), accumulated across levels.  planted: the top-level
    field is a configured sum of radial bumps plus a background; lower levels
    are Gaussian blurs of it with blur radius proportional to their length
    scale, so coarser levels are smoother.
    """
    if domain.n_cells > MAX_EXACT_CELLS:
        raise ValueError(
            f"grid has {domain.n_cells} cells; exact joint draws are guarded at {MAX_EXACT_CELLS}"
        )
    M = model.levels
    n = domain.n_cells
    h = np.empty((M, n))
    f = np.empty((M, n))
    if mode == "prior-draw":
        rng = np.random.default_rng(seed)
        acc = np.zeros(n)
        for m in range(1, M + 1):
            L = _level_cholesky(domain, model, m, jitter_scale)
            draw = model.mu[m - 1] + L @ rng.standard_normal(n)
            acc = acc + draw
            f[m - 1] = acc
        # store increments as exact stored-field differences
        h[0] = f[0]
        for m in range(2, M + 1):
            h[m - 1] = f[m - 1] - f[m - 2]
    elif mode == "planted":
        centers = domain.cell_centers
        top = np.full(n, float(background))
        for b in bumps:
            d2 = (centers[:, 0] - b.x) ** 2 + (centers[:, 1] - b.y) ** 2
            top += b.amplitude * np.exp(-d2 / (2.0 * b.radius * b.radius))
        f[M - 1] = top
        res = domain.resolution
        for m in range(M - 1, 0, -1):
            sigma_cells = model.l[m - 1] / domain.cell_dx
            blurred = gaussian_filter(top.reshape(res, res), sigma=sigma_cells)
            f[m - 1] = blurred.ravel()
        h[0] = f[0]
        for m in range(2, M + 1):
            h[m - 1] = f[m - 1] - f[m - 2]
    else:
        raise ValueError(f"unknown ground-truth mode: {mode!r}")
    f.setflags(write=False)
    h.setflags(write=False)
    return GroundTruth(domain=domain, f=f, h=h)


def measure(truth: GroundTruth, x: float, y: float, m: int, model: FidelityModel, rng) -> float:
    """One noisy observation of the level-m field at a cell center."""
    value = truth.value_at(x, y, m)
    return value + rng.normal(0.0, model.s[m - 1])


def field_to_grid(domain: GridDomain, values: np.ndarray) -> np.ndarray:
    """Reshape a row-major cell vector to a (resolution, resolution) grid."""
    return np.asarray(values).reshape(domain.resolution, domain.resolution)
