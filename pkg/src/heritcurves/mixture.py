"""Exchangeable Gaussian mixtures for pairs and trios of relatives.

Every component ``k`` has a common mean ``mu_k`` and sd ``sigma_k`` for all
family members, and one correlation per relationship.  For pairs the
component covariance is ``sigma_k**2 * [[1, rho_k], [rho_k, 1]]``, so the
bivariate density is symmetric in its two arguments.  For trios the members
are ordered (mother, father, child) and the correlations are labelled
``MF``, ``MC`` and ``FC``.

Components are always kept in canonical order: ascending ``sigma_k`` with
ties broken by ascending ``mu_k``.  The tail results in :func:`tail_limits`
rely on this order.

All models are immutable; every function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DefinitenessError

TWIN_LABELS = ("MZ", "DZ")
TRIO_LABELS = ("MF", "MC", "FC")
# Column pairs (mother=0, father=1, child=2) for each trio relationship.
TRIO_PAIRS = {"MF": (0, 1), "MC": (0, 2), "FC": (1, 2)}

WEIGHT_SUM_TOL = 1e-12
SIGMA_TIE_RTOL = 1e-9
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MixtureComponent:
    """One mixture component.

    ``rho`` maps a relationship label (``"MZ"``, ``"MC"``, ...) to the
    within-component correlation for that relationship.
    """

    weight: float
    mean: float
    sd: float
    rho: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "sd", float(self.sd))
        object.__setattr__(
            self, "rho", MappingProxyType({str(k): float(v) for k, v in self.rho.items()})
        )
        if not (0.0 < self.weight <= 1.0):
            raise ValueError(f"component weight must lie in (0, 1], got {self.weight}")
        if not np.isfinite(self.mean):
            raise ValueError("component mean must be finite")
        if not (np.isfinite(self.sd) and self.sd > 0.0):
            raise ValueError(f"component sd must be positive, got {self.sd}")
        for label, r in self.rho.items():
            if not (-1.0 < r < 1.0):
                raise ValueError(f"correlation {label}={r} outside (-1, 1)")

    def _sort_key(self):
        return (self.sd, self.mean, self.weight, tuple(sorted(self.rho.items())))


class _Mixture:
    """Shared machinery for the three model types."""

    labels: tuple[str, ...] = ()

    def __init__(self, components: Sequence[MixtureComponent]):
        components = tuple(components)
        if not components:
            raise ValueError("a mixture needs at least one component")
        for c in components:
            if set(c.rho) != set(self.labels):
                raise ValueError(
                    f"component correlations {sorted(c.rho)} do not match {list(self.labels)}"
                )
        total = sum(c.weight for c in components)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        self._components = tuple(sorted(components, key=MixtureComponent._sort_key))
        self._validate()
        self.p = np.array([c.weight for c in self._components])
        self.mu = np.array([c.mean for c in self._components])
        self.sigma = np.array([c.sd for c in self._components])
        for a in (self.p, self.mu, self.sigma):
            a.flags.writeable = False

    def _validate(self):
        pass

    @property
    def components(self) -> tuple[MixtureComponent, ...]:
        return self._components

    @property
    def m(self) -> int:
        return len(self._components)

    def rho(self, label: str) -> np.ndarray:
        """Per-component correlations for one relationship, in canonical order."""
        if label not in self.labels:
            raise KeyError(f"unknown relationship {label!r}; expected one of {self.labels}")
        return np.array([c.rho[label] for c in self._components])

    def __eq__(self, other):
        return type(self) is type(other) and self._components == other._components

    def __hash__(self):
        return hash((type(self).__name__, self.m, tuple(self.mu), tuple(self.sigma)))

    def __repr__(self):
        body = ", ".join(
            f"(p={c.weight:.4g}, mu={c.mean:.4g}, sd={c.sd:.4g}, "
            + ", ".join(f"{k}={v:.3g}" for k, v in c.rho.items())
            + ")"
            for c in self._components
        )
        return f"{type(self).__name__}([{body}])"


class BivariateMixture(_Mixture):
    """Exchangeable bivariate mixture for a single relationship."""

    def __init__(self, components, relationship: str | None = None):
        components = tuple(components)
        if relationship is None:
            if not components or len(components[0].rho) != 1:
                raise ValueError("each component must carry exactly one correlation")
            relationship = next(iter(components[0].rho))
        self.relationship = relationship
        self.labels = (relationship,)
        super().__init__(components)

    @classmethod
    def from_arrays(cls, p, mu, sigma, rho, relationship="rho"):
        comps = [
            MixtureComponent(pk, mk, sk, {relationship: rk})
            for pk, mk, sk, rk in zip(p, mu, sigma, rho, strict=True)
        ]
        return cls(comps, relationship)

    @property
    def rho_k(self) -> np.ndarray:
        return self.rho(self.relationship)

    def covariances(self) -> np.ndarray:
        """Component covariance matrices, shape ``(m, 2, 2)``."""
        return self.sigma[:, None, None] ** 2 * correlation_matrices(self, 2)


class TwinJointModel(_Mixture):
    """MZ and DZ mixtures sharing weights, means and sds."""

    labels = TWIN_LABELS

    @classmethod
    def from_arrays(cls, p, mu, sigma, rho_mz, rho_dz):
        comps = [
            MixtureComponent(pk, mk, sk, {"MZ": a, "DZ": b})
            for pk, mk, sk, a, b in zip(p, mu, sigma, rho_mz, rho_dz, strict=True)
        ]
        return cls(comps)

    def bivariate(self, zygosity: str) -> BivariateMixture:
        """The implied bivariate mixture for ``"MZ"`` or ``"DZ"`` pairs."""
        zygosity = zygosity.upper()
        return BivariateMixture.from_arrays(
            self.p, self.mu, self.sigma, self.rho(zygosity), relationship=zygosity
        )


class TrioMixture(_Mixture):
    """Mother-father-child mixture with pairwise-exchangeable margins."""

    labels = TRIO_LABELS

    def _validate(self):
        for c in self._components:
            R = _trio_correlation(c.rho["MF"], c.rho["MC"], c.rho["FC"])
            if np.linalg.det(R) <= 0.0:
                raise DefinitenessError(f"trio component {c} has a non positive definite covariance")

    @classmethod
    def from_arrays(cls, p, mu, sigma, rho_mf, rho_mc, rho_fc):
        comps = [
            MixtureComponent(pk, mk, sk, {"MF": a, "MC": b, "FC": c})
            for pk, mk, sk, a, b, c in zip(p, mu, sigma, rho_mf, rho_mc, rho_fc, strict=True)
        ]
        return cls(comps)

    def covariances(self) -> np.ndarray:
        """Component covariance matrices, shape ``(m, 3, 3)``."""
        return self.sigma[:, None, None] ** 2 * correlation_matrices(self, 3)


def _trio_correlation(mf, mc, fc):
    return np.array([[1.0, mf, mc], [mf, 1.0, fc], [mc, fc, 1.0]])


def correlation_matrices(model, d: int | None = None) -> np.ndarray:
    """Stack of component correlation matrices, shape ``(m, d, d)``."""
    if isinstance(model, TrioMixture):
        rmf, rmc, rfc = model.rho("MF"), model.rho("MC"), model.rho("FC")
        R = np.empty((model.m, 3, 3))
        R[:] = np.eye(3)
        R[:, 0, 1] = R[:, 1, 0] = rmf
        R[:, 0, 2] = R[:, 2, 0] = rmc
        R[:, 1, 2] = R[:, 2, 1] = rfc
        return R
    if isinstance(model, BivariateMixture):
        r = model.rho_k
        R = np.empty((model.m, 2, 2))
        R[:, 0, 0] = R[:, 1, 1] = 1.0
        R[:, 0, 1] = R[:, 1, 0] = r
        return R
    raise TypeError(f"no single correlation structure for {type(model).__name__}")


# --------------------------------------------------------------------------
# small-matrix algebra
# --------------------------------------------------------------------------


def inv_det_small(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form inverse and determinant of a stack of 1x1, 2x2 or 3x3 matrices.

    Raises :class:`DefinitenessError` if any determinant is not positive or any
    leading minor is not positive.
    """
    S = np.asarray(S, dtype=float)
    d = S.shape[-1]
    if d == 1:
        det = S[..., 0, 0]
        minors_ok = det > 0
        inv = 1.0 / np.where(minors_ok, det, 1.0)[..., None, None]
    elif d == 2:
        a, b, c = S[..., 0, 0], S[..., 0, 1], S[..., 1, 1]
        det = a * c - b * b
        minors_ok = (a > 0) & (det > 0)
        safe = np.where(minors_ok, det, 1.0)
        inv = np.empty_like(S)
        inv[..., 0, 0] = c / safe
        inv[..., 1, 1] = a / safe
        inv[..., 0, 1] = inv[..., 1, 0] = -b / safe
    elif d == 3:
        a, b, c = S[..., 0, 0], S[..., 0, 1], S[..., 0, 2]
        e, f, i = S[..., 1, 1], S[..., 1, 2], S[..., 2, 2]
        c00 = e * i - f * f
        c01 = c * f - b * i
        c02 = b * f - c * e
        c11 = a * i - c * c
        c12 = b * c - a * f
        c22 = a * e - b * b
        det = a * c00 + b * c01 + c * c02
        minors_ok = (a > 0) & (c22 > 0) & (det > 0)
        safe = np.where(minors_ok, det, 1.0)
        inv = np.empty_like(S)
        inv[..., 0, 0] = c00 / safe
        inv[..., 0, 1] = inv[..., 1, 0] = c01 / safe
        inv[..., 0, 2] = inv[..., 2, 0] = c02 / safe
        inv[..., 1, 1] = c11 / safe
        inv[..., 1, 2] = inv[..., 2, 1] = c12 / safe
        inv[..., 2, 2] = c22 / safe
    else:
        raise ValueError(f"only dimensions 1, 2 and 3 are supported, got {d}")
    if not np.all(minors_ok):
        raise DefinitenessError("matrix is not positive definite")
    return inv, det


def gaussian_logdensity(y, mu, Sigma) -> np.ndarray:
    """Log of the d-variate normal density, d in {1, 2, 3}.

    ``y`` may carry leading batch dimensions; its last axis has length d.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if not np.allclose(Sigma, np.swapaxes(Sigma, -1, -2)):
        raise DefinitenessError("covariance matrix is not symmetric")
    d = Sigma.shape[-1]
    y = np.asarray(y, dtype=float)
    if d == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    r = y - np.asarray(mu, dtype=float)
    inv, det = inv_det_small(Sigma)
    q = np.einsum("...i,ij,...j->...", r, inv, r)
    return -0.5 * (d * _LOG_2PI + np.log(det) + q)


def gaussian_density(y, mu, Sigma) -> np.ndarray:
    """The d-variate normal density for d in {1, 2, 3}, computed in closed form."""
    return np.exp(gaussian_logdensity(y, mu, Sigma))


# --------------------------------------------------------------------------
# marginal and global quantities
# --------------------------------------------------------------------------


def _log_components(model: _Mixture, y) -> np.ndarray:
    """``log g_k(y)`` with shape ``y.shape + (m,)``."""
    y = np.asarray(y, dtype=float)[..., None]
    z = (y - model.mu) / model.sigma
    return np.log(model.p) - 0.5 * _LOG_2PI - np.log(model.sigma) - 0.5 * z * z


def marginal_density(model: _Mixture, y) -> np.ndarray:
    """Common marginal density ``g(y) = sum_k p_k N(y; mu_k, sigma_k^2)``."""
    return np.exp(logsumexp(_log_components(model, y), axis=-1))


def bivariate_density(model: BivariateMixture, y1, y2) -> np.ndarray:
    """Joint density of a pair under a bivariate mixture."""
    y = np.stack(np.broadcast_arrays(np.asarray(y1, float), np.asarray(y2, float)), axis=-1)
    return np.exp(_mixture_logdensity(model, y, correlation_matrices(model)))


def trio_density(model: TrioMixture, y) -> np.ndarray:
    """Joint density of (mother, father, child) trait values."""
    return np.exp(_mixture_logdensity(model, np.asarray(y, float), correlation_matrices(model)))


def _mixture_logdensity(model, y, R):
    d = R.shape[-1]
    inv, det = inv_det_small(R)
    r = (y[..., None, :] - model.mu[:, None]) / model.sigma[:, None]
    q = np.einsum("...ki,kij,...kj->...k", r, inv, r)
    logphi = -0.5 * (d * _LOG_2PI + np.log(det) + q) - d * np.log(model.sigma)
    return logsumexp(np.log(model.p) + logphi, axis=-1)


@dataclass(frozen=True)
class GlobalMoments:
    """Marginal mean and variance and the overall correlation per relationship."""

    mu: float
    sigma2: float
    rho: Mapping[str, float]

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))


def global_moments(model: _Mixture) -> GlobalMoments:
    """Mean, variance and per-relationship correlation of the whole mixture."""
    p, mu_k, s2 = model.p, model.mu, model.sigma**2
    mu = float(p @ mu_k)
    dev2 = (mu_k - mu) ** 2
    sigma2 = float(p @ (s2 + dev2))
    rho = {label: float(p @ (model.rho(label) * s2 + dev2) / sigma2) for label in model.labels}
    return GlobalMoments(mu, sigma2, rho)


def location_variance(model: _Mixture) -> float:
    """Variance of the component means, ``sum_k p_k (mu_k - mu)^2``."""
    mu = model.p @ model.mu
    return float(model.p @ (model.mu - mu) ** 2)


# --------------------------------------------------------------------------
# local moments and the correlation curve
# --------------------------------------------------------------------------


def posterior_weights(model: _Mixture, y) -> np.ndarray:
    """``P(component k | Y = y)`` with shape ``y.shape + (m,)``."""
    lg = _log_components(model, y)
    # dividing by the sum, rather than subtracting a log-sum-exp, keeps the
    # weights summing to one when the log terms are huge
    e = np.exp(lg - lg.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class LocalMoments:
    """Conditional quantities of one member given the other equals ``y``.

    For an array ``y`` each field has a matching leading shape; ``p_star`` and
    ``d_k`` carry a trailing component axis.
    """

    y: np.ndarray
    p_star: np.ndarray
    mu_y: np.ndarray
    sigma2_y: np.ndarray
    beta_y: np.ndarray
    d_k: np.ndarray


def local_moments(model: BivariateMixture, y) -> LocalMoments:
    """Conditional mean, variance and slope ``d mu(y) / dy`` of the partner."""
    if not isinstance(model, BivariateMixture):
        raise TypeError("local moments need a BivariateMixture; use .bivariate() or trio_pair_margin()")
    y = np.asarray(y, dtype=float)
    rho = model.rho_k
    ps = posterior_weights(model, y)
    yk = y[..., None]
    mu_k_y = model.mu + rho * (yk - model.mu)
    mu_y = np.sum(ps * mu_k_y, axis=-1)
    dev = mu_k_y - mu_y[..., None]
    sigma2_y = np.sum(ps * (model.sigma**2 * (1.0 - rho**2) + dev**2), axis=-1)
    d_k = -(yk - model.mu) / model.sigma**2
    beta_y = np.sum(ps * (rho + dev * d_k), axis=-1)
    return LocalMoments(y, ps, mu_y, sigma2_y, beta_y, d_k)


def correlation_curve(model: BivariateMixture, grid) -> np.ndarray:
    """Local correlation ``rho(y)`` evaluated at every point of ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if not np.all(np.isfinite(grid)):
        raise ValueError("grid must be finite")
    lm = local_moments(model, grid)
    sigma = global_moments(model).sigma
    sb = sigma * lm.beta_y
    return sb / np.sqrt(sb * sb + lm.sigma2_y)


def default_grid(model: _Mixture, n: int = 201, width: float = 4.0) -> np.ndarray:
    """``n`` equally spaced points on mean +/- ``width`` global sds."""
    gm = global_moments(model)
    return np.linspace(gm.mu - width * gm.sigma, gm.mu + width * gm.sigma, n)


# --------------------------------------------------------------------------
# tail behaviour
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TailLimit:
    """Limits in one direction.  ``K`` counts components from 1 in canonical order."""

    K: int
    beta: float
    sigma2: float
    rho_tilde: float


@dataclass(frozen=True)
class TailLimits:
    left: TailLimit
    right: TailLimit
    case: str
    # (left, right) from the equal-sd closed form, when every sd is tied
    equal_sd: tuple[float, float] | None = None


def _rho_tilde(sigma2_global, sigma_k, rho_k):
    s = np.sqrt(sigma2_global)
    return s * rho_k / np.sqrt(sigma2_global * rho_k**2 + sigma_k**2 * (1.0 - rho_k**2))


def tail_limits(model: BivariateMixture) -> TailLimits:
    """Limits of the slope, conditional variance and ``rho(y)`` as ``y -> -inf, +inf``.

    The tails are dominated by the component(s) with the largest sd.  If that
    sd is unique (case I) the same component governs both tails; otherwise
    (case II) the tied component with the smallest mean governs the left tail
    and the one with the largest mean the right tail.  Sds are tied when
    equal to relative tolerance ``1e-9``.

    Several components with the same largest sd and the same extreme mean but
    different correlations share that tail; their conditional lines fan out,
    so ``sigma2`` is infinite and ``rho_tilde`` is zero.
    """
    s2 = model.sigma**2
    tied = np.flatnonzero(np.abs(s2 - s2[-1]) <= SIGMA_TIE_RTOL * s2[-1])
    m = model.m
    if len(tied) == 1:
        case, k_left, k_right = "I", m - 1, m - 1
    else:
        case = "II"
        k_left = tied[np.argmin(model.mu[tied])]
        k_right = tied[::-1][np.argmax(model.mu[tied][::-1])]
    sigma2 = global_moments(model).sigma2
    rho = model.rho_k

    def limit(k):
        # components sharing both the largest sd and the extreme mean never
        # separate in the posterior, so they govern the tail jointly
        same = tied[np.abs(model.mu[tied] - model.mu[k]) <= SIGMA_TIE_RTOL * model.sigma[k]]
        w = model.p[same] / model.p[same].sum()
        beta = float(w @ rho[same])
        spread = float(w @ (rho[same] - beta) ** 2)
        if spread > 0.0:
            # sigma^2(y) grows like spread * y^2, which drives rho(y) to zero
            return TailLimit(K=int(same[0]) + 1, beta=beta, sigma2=np.inf, rho_tilde=0.0)
        return TailLimit(
            K=int(k) + 1,
            beta=float(rho[k]),
            sigma2=float(s2[k] * (1.0 - rho[k] ** 2)),
            rho_tilde=float(_rho_tilde(sigma2, model.sigma[k], rho[k])),
        )

    equal = None
    if len(tied) == m:
        equal = equal_sd_tail_limits(model)
    return TailLimits(limit(k_left), limit(k_right), case, equal)


def equal_sd_tail_limits(model: BivariateMixture) -> tuple[float, float]:
    """Tail limits of ``rho(y)`` when every component has the same sd.

    With ``gamma`` the ratio of location variance to the common component
    variance, the left limit is ``rho_1 sqrt((1 + gamma) / (1 + gamma rho_1^2))``
    and the right limit is the same expression in ``rho_m``.
    """
    s2 = model.sigma**2
    if np.any(np.abs(s2 - s2[-1]) > SIGMA_TIE_RTOL * s2[-1]):
        raise ValueError("component sds are not all equal")
    gamma = location_variance(model) / s2[-1]
    rho = model.rho_k
    lo, hi = rho[np.argmin(model.mu)], rho[::-1][np.argmax(model.mu[::-1])]

    def f(r):
        return float(r * np.sqrt((1.0 + gamma) / (1.0 + gamma * r * r)))

    return f(lo), f(hi)


# --------------------------------------------------------------------------
# trio margins
# --------------------------------------------------------------------------


def trio_pair_margin(model: TrioMixture, relationship: str) -> BivariateMixture:
    """Bivariate mixture of one pair of trio members (``"MF"``, ``"MC"`` or ``"FC"``)."""
    relationship = relationship.upper()
    if relationship not in TRIO_PAIRS:
        raise KeyError(f"unknown trio relationship {relationship!r}")
    return BivariateMixture.from_arrays(
        model.p, model.mu, model.sigma, model.rho(relationship), relationship=relationship
    )


def relationship_margins(model: _Mixture) -> dict[str, BivariateMixture]:
    """Every bivariate margin of a model, keyed by relationship label."""
    if isinstance(model, BivariateMixture):
        return {model.relationship: model}
    if isinstance(model, TwinJointModel):
        return {z: model.bivariate(z) for z in TWIN_LABELS}
    if isinstance(model, TrioMixture):
        return {r: trio_pair_margin(model, r) for r in TRIO_LABELS}
    raise TypeError(f"unsupported model type {type(model).__name__}")
