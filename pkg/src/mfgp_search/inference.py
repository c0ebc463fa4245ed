"""Exact posterior inference for the multi-fidelity GP over the sample log.

Observations at level m only see the layers 1..m, so the covariance between
two records truncates the layer sum at the lower of their two levels, and the
cross-covariance of a record with the full-fidelity field truncates at the
record's level.  One Cholesky factorization of the observation covariance
serves the whole grid; within-epoch planning extends that factorization one
rank at a time instead of refactorizing.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import DEFAULT_JITTER, NumericalError, jittered_cholesky, solve_lower
from .field_model import FidelityModel, GridDomain, kernel_eval

SIGMA2_TOL = 1e-8  # most negative clamped variance tolerated before declaring failure


class SampleLog:
    """Ordered (location, value, fidelity) records collected by the vehicle.

    The planner only ever raises the fidelity level, so the record sequence
    must be non-decreasing in fidelity; that contract is asserted on append.
    Every location must be a cell center of the mission grid.
    """

    def __init__(self, domain: GridDomain):
        self.domain = domain
        self._locations: list[tuple[float, float]] = []
        self._values: list[float] = []
        self._fidelities: list[int] = []

    def __len__(self) -> int:
        return len(self._values)

    def append(self, location: tuple[float, float], value: float, fidelity: int):
        self.domain.index_of(*location)  # raises if not a cell center
        if self._fidelities and fidelity < self._fidelities[-1]:
            raise ValueError(
                f"fidelity must be non-decreasing: got {fidelity} after {self._fidelities[-1]}"
            )
        self._locations.append((float(location[0]), float(location[1])))
        self._values.append(float(value))
        self._fidelities.append(int(fidelity))

    def locations(self) -> np.ndarray:
        return np.array(self._locations, dtype=float).reshape(len(self), 2)

    def values(self) -> np.ndarray:
        return np.array(self._values, dtype=float)

    def fidelities(self) -> np.ndarray:
        return np.array(self._fidelities, dtype=int)

    def level_counts(self, levels: int) -> list[int]:
        return [self._fidelities.count(m) for m in range(1, levels + 1)]


def _pair_covariance(xa, ma, xb, mb, model: FidelityModel):
    """Covariance between observations at (xa, level ma) and (xb, level mb).

    Entries sum the layer kernels up to min(ma, mb); shapes broadcast.
    """
    top = np.minimum(ma, mb)
    out = np.zeros(np.broadcast_shapes(np.shape(top), np.shape(xa[..., 0] - xb[..., 0])))
    for i in range(1, model.levels + 1):
        out = out + np.where(top >= i, kernel_eval(i, xa, xb, model), 0.0)
    return out


@dataclass(frozen=True)
class JointCovariance:
    """Blocked observation covariance K, noise diagonal, and prior sample means."""

    k_block: np.ndarray
    noise_diag: np.ndarray
    nu: np.ndarray

    @classmethod
    def from_log(cls, log: SampleLog, model: FidelityModel) -> "JointCovariance":
        X = log.locations()
        m = log.fidelities()
        K = _pair_covariance(X[:, None, :], m[:, None], X[None, :, :], m[None, :], model)
        noise = np.array([model.s[mi - 1] ** 2 for mi in m])
        nu = np.array([sum(model.mu[:mi]) for mi in m])
        return cls(k_block=K, noise_diag=noise, nu=nu)

    @property
    def observation_cov(self) -> np.ndarray:
        return self.k_block + np.diag(self.noise_diag)


def cross_covariance(x, log: SampleLog, model: FidelityModel) -> np.ndarray:
    """Covariance of each logged observation with the full field at x.

    Record j at fidelity m_j contributes the layer sum 1..m_j evaluated
    between x_j and x.  Returns a length-n vector (empty for an empty log).
    """
    if len(log) == 0:
        return np.zeros(0)
    X = log.locations()
    m = log.fidelities()
    x = np.asarray(x, dtype=float)
    return _pair_covariance(X, m, x[None, :], np.full(len(log), model.levels), model)


def _cross_covariance_matrix(
    X: np.ndarray, mrec: np.ndarray, cells: np.ndarray, model: FidelityModel
) -> np.ndarray:
    """(n, n_cells) cross-covariances of all records with the field at all cells."""
    n = X.shape[0]
    out = np.zeros((n, cells.shape[0]))
    for i in range(1, model.levels + 1):
        rows = mrec >= i
        if np.any(rows):
            out[rows] += kernel_eval(i, X[rows][:, None, :], cells[None, :, :], model)
    return out


@dataclass(frozen=True)
class PosteriorField:
    """Posterior mean/variance grids plus the factorization state for appends.

    Snapshots are immutable; appending a hypothetical sample produces a new
    snapshot with an extended factorization.  Appends maintain only the
    variance grid (the mean is carried over unchanged), which is all the
    planner needs: the variance never depends on observed values.
    """

    domain: GridDomain
    model: FidelityModel
    locations: np.ndarray  # (n, 2)
    fidelities: np.ndarray  # (n,)
    mu: np.ndarray  # (n_cells,)
    sigma2: np.ndarray  # (n_cells,)
    chol: np.ndarray  # (n, n) lower factor of K + Theta + jitter*I
    w: np.ndarray  # (n, n_cells) = chol^-1 @ cross-covariances
    jitter: float

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    def max_sigma2(self, candidates: np.ndarray | None = None) -> float:
        if candidates is None:
            return float(np.max(self.sigma2))
        if len(candidates) == 0:
            raise ValueError("empty candidate set")
        return float(np.max(self.sigma2[candidates]))


def _freeze(*arrays: np.ndarray):
    for a in arrays:
        a.setflags(write=False)


def _clamp_sigma2(sigma2: np.ndarray, jitter: float) -> np.ndarray:
    worst = float(np.min(sigma2)) if sigma2.size else 0.0
    if worst < -SIGMA2_TOL:
        raise NumericalError(f"posterior variance fell to {worst:g}", jitter)
    return np.maximum(sigma2, 0.0)


def posterior(
    log: SampleLog,
    domain: GridDomain,
    model: FidelityModel,
    jitter_scale: float = DEFAULT_JITTER,
) -> PosteriorField:
    """Exact posterior over all grid cells from one factorization.

    mean(x) = mu0 + k(x)^T (K+Theta)^-1 (y - nu) and
    var(x) = k0(x,x) - k(x)^T (K+Theta)^-1 k(x), evaluated for every cell via
    triangular solves against the shared Cholesky factor.
    """
    cells = domain.cell_centers
    mu0 = model.prior_mean()
    k0 = model.prior_variance()
    n = len(log)
    if n == 0:
        mu = np.full(domain.n_cells, mu0)
        sigma2 = np.full(domain.n_cells, k0)
        _freeze(mu, sigma2)
        return PosteriorField(
            domain=domain,
            model=model,
            locations=np.zeros((0, 2)),
            fidelities=np.zeros(0, dtype=int),
            mu=mu,
            sigma2=sigma2,
            chol=np.zeros((0, 0)),
            w=np.zeros((0, domain.n_cells)),
            jitter=0.0,
        )
    joint = JointCovariance.from_log(log, model)
    L, jitter = jittered_cholesky(joint.observation_cov, jitter_scale)
    X = log.locations()
    mrec = log.fidelities()
    kxn = _cross_covariance_matrix(X, mrec, cells, model)
    w = solve_lower(L, kxn)
    a = solve_lower(L, log.values() - joint.nu)
    mu = mu0 + w.T @ a
    sigma2 = _clamp_sigma2(k0 - np.einsum("ij,ij->j", w, w), jitter)
    _freeze(mu, sigma2, w, L, X, mrec)
    return PosteriorField(
        domain=domain,
        model=model,
        locations=X,
        fidelities=mrec,
        mu=mu,
        sigma2=sigma2,
        chol=L,
        w=w,
        jitter=jitter,
    )


def _append_arrays(state: PosteriorField, x_new, m_new: int):
    """Covariance pieces for one appended record: (b, d, kappa).

    b: covariance of the new observation with each logged observation;
    d: its own prior variance plus noise; kappa: its cross-covariance with
    the full field at every cell.
    """
    model = state.model
    xn = np.asarray(x_new, dtype=float)
    if state.n:
        b = _pair_covariance(
            state.locations,
            state.fidelities,
            xn[None, :],
            np.full(state.n, m_new),
            model,
        )
    else:
        b = np.zeros(0)
    d = model.prior_variance(m_new) + model.s[m_new - 1] ** 2
    kappa = np.zeros(state.domain.n_cells)
    cells = state.domain.cell_centers
    for i in range(1, m_new + 1):
        kappa += kernel_eval(i, xn[None, :], cells, model)
    return b, d, kappa


def append_sample_variance_only(
    state: PosteriorField, x_new, m_new: int
) -> PosteriorField:
    """Extend the factorization with a hypothetical sample at (x_new, m_new).

    The variance grid of the result matches a full recompute with the
    extended log (observed values are irrelevant to the variance).  If the
    rank-one extension breaks down numerically, falls back to a full
    refactorization with placeholder observations.
    """
    state.model._check_level(m_new)
    b, d, kappa = _append_arrays(state, x_new, m_new)
    c = solve_lower(state.chol, b)
    gamma2 = d + state.jitter - float(c @ c)
    if gamma2 <= max(1e-12 * d, 1e-300):
        return _refactorized_append(state, x_new, m_new)
    gamma = np.sqrt(gamma2)
    w_new = (kappa - c @ state.w) / gamma
    sigma2 = _clamp_sigma2(state.sigma2 - w_new**2, state.jitter)
    n = state.n
    chol = np.zeros((n + 1, n + 1))
    chol[:n, :n] = state.chol
    chol[n, :n] = c
    chol[n, n] = gamma
    w = np.vstack([state.w, w_new])
    locations = np.vstack([state.locations, np.asarray(x_new, dtype=float)])
    fidelities = np.append(state.fidelities, m_new)
    _freeze(sigma2, chol, w, locations, fidelities)
    return PosteriorField(
        domain=state.domain,
        model=state.model,
        locations=locations,
        fidelities=fidelities,
        mu=state.mu,
        sigma2=sigma2,
        chol=chol,
        w=w,
        jitter=state.jitter,
    )


def _refactorized_append(state: PosteriorField, x_new, m_new: int) -> PosteriorField:
    log = SampleLog(state.domain)
    for loc, m in zip(state.locations, state.fidelities):
        log.append((loc[0], loc[1]), 0.0, int(m))
    log.append((float(x_new[0]), float(x_new[1])), 0.0, m_new)
    fresh = posterior(log, state.domain, state.model)
    # Variance-only contract: carry the previous mean through, as the
    # incremental path does.
    return PosteriorField(
        domain=fresh.domain,
        model=fresh.model,
        locations=fresh.locations,
        fidelities=fresh.fidelities,
        mu=state.mu,
        sigma2=fresh.sigma2,
        chol=fresh.chol,
        w=fresh.w,
        jitter=fresh.jitter,
    )


def _chain_terms(log: SampleLog, model: FidelityModel, jitter_scale: float):
    """Per-record mutual-information increments in log order.

    Term i is 0.5*log(1 + s_{m_i}^-2 * var_{i-1}(x_i)) where var_{i-1} is the
    posterior variance of the full field given the first i-1 records.
    Returns (terms, variances-before-sampling).
    """
    n = len(log)
    terms = np.zeros(n)
    var_before = np.zeros(n)
    if n == 0:
        return terms, var_before
    X = log.locations()
    mrec = log.fidelities()
    k0 = model.prior_variance()
    jitter = jitter_scale * (model.prior_variance() + max(si * si for si in model.s))
    L = np.zeros((0, 0))
    for i in range(n):
        xi = X[i]
        mi = int(mrec[i])
        if i == 0:
            var_prev = k0
        else:
            kvec = _pair_covariance(
                X[:i], mrec[:i], xi[None, :], np.full(i, model.levels), model
            )
            wi = solve_lower(L, kvec)
            var_prev = max(k0 - float(wi @ wi), 0.0)
        s2 = model.s[mi - 1] ** 2
        terms[i] = 0.5 * np.log1p(var_prev / s2)
        var_before[i] = var_prev
        # extend the observation-covariance factor with record i
        if i == 0:
            d = model.prior_variance(mi) + s2 + jitter
            L = np.array([[np.sqrt(d)]])
        else:
            b = _pair_covariance(X[:i], mrec[:i], xi[None, :], np.full(i, mi), model)
            c = solve_lower(L, b)
            d = model.prior_variance(mi) + s2 + jitter
            gamma2 = d - float(c @ c)
            if gamma2 <= 0:
                raise NumericalError("information-chain factor broke down", jitter)
            Lnew = np.zeros((i + 1, i + 1))
            Lnew[:i, :i] = L
            Lnew[i, :i] = c
            Lnew[i, i] = np.sqrt(gamma2)
            L = Lnew
    return terms, var_before


def greedy_info_gain(log: SampleLog, model: FidelityModel, jitter_scale: float = 0.0) -> float:
    """Accumulated mutual information of the log, in log order.

    Sums 0.5*log(1 + s^-2 * var) over the records using each record's own
    noise level.  For a single-fidelity log this equals the log-determinant
    form 0.5*log det(I + s^-2 K) exactly, so the default adds no jitter.
    """
    terms, _ = _chain_terms(log, model, jitter_scale)
    return float(np.sum(terms))


def log_marginal_likelihood(
    log: SampleLog, model: FidelityModel, jitter_scale: float = DEFAULT_JITTER
) -> float:
    """Gaussian evidence of the observed values under the model prior."""
    n = len(log)
    if n == 0:
        return 0.0
    joint = JointCovariance.from_log(log, model)
    L, _ = jittered_cholesky(joint.observation_cov, jitter_scale)
    a = solve_lower(L, log.values() - joint.nu)
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(L))))
    return -0.5 * (n * np.log(2.0 * np.pi) + logdet) - 0.5 * float(a @ a)


def diagnostics_lines(log: SampleLog, model: FidelityModel) -> list[str]:
    """Line-protocol diagnostics: one record per sample with its variance
    before sampling and its information-gain increment."""
    terms, var_before = _chain_terms(log, model, jitter_scale=0.0)
    X = log.locations()
    mrec = log.fidelities()
    lines = []
    for i in range(len(log)):
        lines.append(
            f"sample n={i + 1} x={X[i, 0]:.17g} y={X[i, 1]:.17g} "
            f"m={int(mrec[i])} sigma2_before={var_before[i]:.17g} info_gain={terms[i]:.17g}"
        )
    return lines
