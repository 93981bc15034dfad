"""Exact sampling from mixtures and the parametric bootstrap.

Random streams are counter based: a draw with seed ``s`` uses
``numpy.random.default_rng(s)``, and bootstrap replicate ``b`` uses the
sub-stream ``(s, b)``, so results do not depend on execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .datasets import TrioDataset, TwinDataset
from .errors import BootstrapUnreliableError, DefinitenessError, HeritCurvesError
from .estimation import (
    FitConfig,
    FitResult,
    ParamVector,
    fit as fit_model,
    global_parameters,
    natural_parameters,
)
from .mixture import BivariateMixture, TrioMixture, TwinJointModel

MAX_FAILURE_RATE = 0.2


@dataclass(frozen=True)
class SampleBatch:
    """Simulated families.

    ``draws`` has one row per family; for twin models the MZ rows come first
    and ``zygosity`` labels each row.  ``labels`` holds the 0-based component
    each family was drawn from.
    """

    design: str
    draws: np.ndarray
    labels: np.ndarray
    seed: object
    zygosity: np.ndarray | None = None

    def to_dataset(self):
        if self.design == "twins":
            return TwinDataset(self.draws[self.zygosity == "MZ"], self.draws[self.zygosity == "DZ"])
        if self.design == "trios":
            return TrioDataset(self.draws)
        raise ValueError(f"no dataset type for design {self.design!r}")


def _draw(rng, p, mu, cov, n):
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DefinitenessError("component covariance is not positive definite") from None
    d = cov.shape[-1]
    labels = rng.choice(len(p), size=n, p=p)
    z = rng.standard_normal((n, d))
    draws = mu[labels, None] + np.einsum("nij,nj->ni", L[labels], z)
    return draws, labels


def sample(model, n, seed=None) -> SampleBatch:
    """Draw families from a model.

    For a :class:`TwinJointModel` ``n`` is the number of pairs per zygosity,
    or a ``(n_mz, n_dz)`` tuple.  Otherwise ``n`` is the number of pairs or
    trios.
    """
    rng = np.random.default_rng(seed)
    p = model.p / model.p.sum()
    if isinstance(model, TwinJointModel):
        n_mz, n_dz = (n, n) if np.isscalar(n) else n
        if min(n_mz, n_dz) < 0 or n_mz + n_dz < 1:
            raise ValueError("need at least one pair")
        parts = [
            _draw(rng, p, model.mu, model.bivariate(z).covariances(), k)
            for z, k in (("MZ", n_mz), ("DZ", n_dz))
        ]
        zyg = np.array(["MZ"] * n_mz + ["DZ"] * n_dz)
        return SampleBatch(
            "twins",
            np.concatenate([parts[0][0], parts[1][0]]),
            np.concatenate([parts[0][1], parts[1][1]]),
            seed,
            zyg,
        )
    if n < 1:
        raise ValueError("n must be at least 1")
    if isinstance(model, TrioMixture):
        draws, labels = _draw(rng, p, model.mu, model.covariances(), n)
        return SampleBatch("trios", draws, labels, seed)
    if isinstance(model, BivariateMixture):
        draws, labels = _draw(rng, p, model.mu, model.covariances(), n)
        return SampleBatch("pairs", draws, labels, seed)
    raise TypeError(f"cannot sample from {type(model).__name__}")


def default_functionals(model) -> dict[str, Callable]:
    """Every natural parameter and global moment as a scalar functional."""
    names, _ = natural_parameters(model)
    gnames, _ = global_parameters(model)
    out = {}
    for i, name in enumerate(names):
        out[name] = lambda mdl, i=i: natural_parameters(mdl)[1][i]
    for i, name in enumerate(gnames):
        out[name] = lambda mdl, i=i: global_parameters(mdl)[1][i]
    return out


@dataclass
class BootstrapResult:
    """Replicate estimates and their spread, over converged replicates only."""

    B: int
    failures: int
    estimates: dict[str, np.ndarray]
    theta: np.ndarray
    sd: dict[str, np.ndarray] = field(default_factory=dict)
    lower: dict[str, np.ndarray] = field(default_factory=dict)
    upper: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_ok(self) -> int:
        return self.B - self.failures


def parametric_bootstrap(
    fit: FitResult,
    B: int,
    functionals: Mapping[str, Callable] | None = None,
    config: FitConfig | None = None,
    seed=None,
) -> BootstrapResult:
    """Refit on ``B`` datasets simulated from a fitted model.

    Each replicate has the original number of families, is refitted from the
    fitted parameters plus one jittered copy of them, and counts as a failure
    if the refit does not converge.  More than 20% failures raise
    :class:`BootstrapUnreliableError`.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if not fit.converged:
        raise ValueError("parametric bootstrap needs a converged fit")
    functionals = dict(functionals or default_functionals(fit.model))
    config = config or FitConfig(seed=fit.seed)
    seed = fit.seed if seed is None else seed
    sizes = tuple(fit.n_obs.values())
    n = sizes if fit.design == "twins" else sizes[0]
    base = fit.theta.theta

    rows = {k: [] for k in functionals}
    thetas = []
    failures = 0
    for b in range(B):
        data = sample(fit.model, n, seed=[seed, b]).to_dataset()
        jitter = np.random.default_rng([seed, b, 1]).normal(0.0, 0.05, base.size)
        cfg = replace(config, n_starts=2, seed=int(np.random.SeedSequence([seed, b]).generate_state(1)[0]))
        try:
            res = fit_model(
                data, fit.m, fit.design, cfg,
                starts=[ParamVector(base, fit.m, fit.design), ParamVector(base + jitter, fit.m, fit.design)],
            )
        except HeritCurvesError:
            failures += 1
            continue
        if not res.converged:
            failures += 1
            continue
        thetas.append(res.theta.theta)
        for k, fn in functionals.items():
            rows[k].append(np.asarray(fn(res.model), dtype=float))
    if failures > MAX_FAILURE_RATE * B:
        raise BootstrapUnreliableError(
            f"{failures} of {B} bootstrap replicates failed to converge", failures, B
        )
    out = BootstrapResult(B, failures, {k: np.array(v) for k, v in rows.items()}, np.array(thetas))
    for k, v in out.estimates.items():
        s = np.sort(v, axis=0)
        out.sd[k] = np.std(s, axis=0, ddof=1) if len(s) > 1 else np.full(s.shape[1:], np.nan)
        out.lower[k] = np.percentile(s, 2.5, axis=0)
        out.upper[k] = np.percentile(s, 97.5, axis=0)
    return out
