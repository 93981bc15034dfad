"""Maximum-likelihood fitting of twin and trio mixtures.

Parameters are optimized on an unconstrained scale:

* weights through a multinomial logit with component 1 as reference,
* sds through their logarithm,
* correlations through Fisher's z (``arctanh``),
* means as they are.

The vector is laid out block-wise as ``[logits (m-1), means (m), log sds (m),
z per relationship (m each)]``, giving ``5m - 1`` entries for twins (MZ and
DZ correlations) and ``6m - 1`` for trios (MF, MC, FC correlations).

The negative log-likelihood and its score are computed in closed form.  The
Hessian is obtained by central differences of the score.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .datasets import TrioDataset, TwinDataset
from .errors import DataError, DefinitenessError, InferenceUnavailableError, OptimizationError
from .heritability import _resolve_twin_design, heritability_curves
from .mixture import (
    TRIO_LABELS,
    TRIO_PAIRS,
    TWIN_LABELS,
    MixtureComponent,
    TrioMixture,
    TwinJointModel,
    correlation_curve,
    default_grid,
    global_moments,
    inv_det_small,
    relationship_margins,
)

log = logging.getLogger(__name__)

TWINS = "twins"
TRIOS = "trios"
_LOG_2PI = math.log(2.0 * math.pi)


def n_params(m: int, design: str) -> int:
    """Free parameter count: ``5m - 1`` for twins, ``6m - 1`` for trios."""
    return (5 if design == TWINS else 6) * m - 1


def _labels(design):
    return TWIN_LABELS if design == TWINS else TRIO_LABELS


def _design_of(obj) -> str:
    if isinstance(obj, (TwinJointModel, TwinDataset)):
        return TWINS
    if isinstance(obj, (TrioMixture, TrioDataset)):
        return TRIOS
    raise TypeError(f"cannot infer design from {type(obj).__name__}")


# --------------------------------------------------------------------------
# parameter transforms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamVector:
    """Unconstrained parameter vector plus the metadata needed to decode it."""

    theta: np.ndarray
    m: int
    design: str

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        object.__setattr__(self, "theta", theta)
        if len(theta) != n_params(self.m, self.design):
            raise ValueError(
                f"theta has length {len(theta)}, expected {n_params(self.m, self.design)}"
            )

    def __len__(self):
        return len(self.theta)

    def blocks(self) -> dict[str, slice]:
        m = self.m
        out = {"logit": slice(0, m - 1), "mu": slice(m - 1, 2 * m - 1), "logsd": slice(2 * m - 1, 3 * m - 1)}
        for i, lab in enumerate(_labels(self.design)):
            out[lab] = slice((3 + i) * m - 1, (4 + i) * m - 1)
        return out

    def names(self) -> list[str]:
        out = []
        for key, sl in self.blocks().items():
            start = 2 if key == "logit" else 1
            out += [f"{key}_{k}" for k in range(start, start + sl.stop - sl.start)]
        return out


def as_param_vector(theta, design: str | None = None, m: int | None = None) -> ParamVector:
    """Coerce an array (with ``m`` inferred from its length) to a :class:`ParamVector`."""
    if isinstance(theta, ParamVector):
        return theta
    theta = np.asarray(theta, dtype=float).ravel()
    if design is None:
        raise ValueError("design is required to decode a bare theta array")
    per = 5 if design == TWINS else 6
    if m is None:
        if (len(theta) + 1) % per:
            raise ValueError(f"length {len(theta)} is not a valid {design} parameter count")
        m = (len(theta) + 1) // per
    return ParamVector(theta, m, design)


def to_unconstrained(model) -> ParamVector:
    """Map a model to its unconstrained parameter vector."""
    design = _design_of(model)
    logp = np.log(model.p)
    parts = [logp[1:] - logp[0], model.mu, np.log(model.sigma)]
    parts += [np.arctanh(model.rho(lab)) for lab in _labels(design)]
    return ParamVector(np.concatenate(parts), model.m, design)


def _decode(pv: ParamVector):
    th = pv.theta
    if not np.all(np.isfinite(th)):
        raise ValueError("theta contains non-finite entries")
    b = pv.blocks()
    eta = np.concatenate([[0.0], th[b["logit"]]])
    logp = eta - logsumexp(eta)
    s = th[b["logsd"]]
    rho = {lab: np.tanh(th[b[lab]]) for lab in _labels(pv.design)}
    return logp, th[b["mu"]], s, rho


def to_natural(theta, design: str | None = None):
    """Decode an unconstrained vector into a canonically ordered model."""
    pv = as_param_vector(theta, design)
    logp, mu, s, rho = _decode(pv)
    p = np.exp(logp)
    sigma = np.exp(s)
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("log sd out of range")
    labels = _labels(pv.design)
    comps = [
        MixtureComponent(p[k], mu[k], sigma[k], {lab: rho[lab][k] for lab in labels})
        for k in range(pv.m)
    ]
    cls = TwinJointModel if pv.design == TWINS else TrioMixture
    return cls(comps)


# --------------------------------------------------------------------------
# likelihood and score
# --------------------------------------------------------------------------


def _blocks_for(data, design):
    """``[(Y, [(label, (i, j)), ...]), ...]`` with one entry per data block."""
    if design == TWINS:
        if isinstance(data, TwinDataset):
            mz, dz = data.mz, data.dz
        else:
            mz, dz = data
        mz = np.asarray(mz, dtype=float).reshape(-1, 2)
        dz = np.asarray(dz, dtype=float).reshape(-1, 2)
        if len(mz) + len(dz) == 0:
            raise DataError("no twin pairs")
        return [(Y, [(lab, (0, 1))]) for Y, lab in ((mz, "MZ"), (dz, "DZ")) if len(Y)]
    Y = data.y if isinstance(data, TrioDataset) else np.asarray(data, dtype=float).reshape(-1, 3)
    if len(Y) == 0:
        raise DataError("no trios")
    return [(Y, [(lab, TRIO_PAIRS[lab]) for lab in TRIO_LABELS])]


def _evaluate(pv: ParamVector, blocks, need_grad=True):
    # overflow far from the data surfaces as a non-finite value, reported below
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f, g = _evaluate_raw(pv, blocks, need_grad)
    if not np.isfinite(f) or (need_grad and not np.all(np.isfinite(g))):
        raise DefinitenessError("log-likelihood is not finite at theta")
    return f, g


def _evaluate_raw(pv: ParamVector, blocks, need_grad):
    logp, mu, s, rho = _decode(pv)
    sigma = np.exp(s)
    b = pv.blocks()
    f = 0.0
    g = np.zeros(len(pv.theta)) if need_grad else None
    resp_total = np.zeros(pv.m)
    n_total = 0
    for Y, pairs in blocks:
        n, d = Y.shape
        R = np.broadcast_to(np.eye(d), (pv.m, d, d)).copy()
        for lab, (i, j) in pairs:
            R[:, i, j] = R[:, j, i] = rho[lab]
        inv, det = inv_det_small(R)
        # standardized residuals r[a] and w = R^-1 r, each (n, m)
        r = [(Y[:, a, None] - mu) / sigma for a in range(d)]
        w = [sum(inv[:, a, c] * r[c] for c in range(d)) for a in range(d)]
        q = sum(r[a] * w[a] for a in range(d))
        lj = logp - 0.5 * (d * _LOG_2PI + np.log(det)) - d * s - 0.5 * q
        top = lj.max(axis=1, keepdims=True)
        e = np.exp(lj - top)
        tot = e.sum(axis=1, keepdims=True)
        ll = top[:, 0] + np.log(tot[:, 0])
        f -= ll.sum()
        if not need_grad:
            continue
        resp = e / tot
        rsum = resp.sum(axis=0)
        resp_total += rsum
        n_total += n
        g[b["mu"]] -= (resp * sum(w)).sum(axis=0) / sigma
        g[b["logsd"]] -= (resp * q).sum(axis=0) - d * rsum
        for lab, (i, j) in pairs:
            drho = (resp * (w[i] * w[j])).sum(axis=0) - rsum * inv[:, i, j]
            g[b[lab]] -= drho * (1.0 - rho[lab] ** 2)
    if need_grad:
        g[b["logit"]] -= (resp_total - n_total * np.exp(logp))[1:]
    return f, g


def negloglik_twins(theta, data) -> float:
    """Negative combined MZ + DZ log-likelihood.

    ``data`` is a :class:`TwinDataset` or a ``(mz_pairs, dz_pairs)`` tuple.
    """
    pv = as_param_vector(theta, TWINS)
    return _evaluate(pv, _blocks_for(data, TWINS), need_grad=False)[0]


def negloglik_trio(theta, data) -> float:
    """Negative trio log-likelihood.

    Raises :class:`DefinitenessError` if a component correlation matrix is not
    positive definite at ``theta``.
    """
    pv = as_param_vector(theta, TRIOS)
    return _evaluate(pv, _blocks_for(data, TRIOS), need_grad=False)[0]


def negloglik(theta, data, design: str | None = None) -> float:
    design = design or (theta.design if isinstance(theta, ParamVector) else _design_of(data))
    return negloglik_twins(theta, data) if design == TWINS else negloglik_trio(theta, data)


def gradient(theta, data, design: str | None = None) -> np.ndarray:
    """Score of the negative log-likelihood with respect to theta."""
    design = design or (theta.design if isinstance(theta, ParamVector) else _design_of(data))
    pv = as_param_vector(theta, design)
    return _evaluate(pv, _blocks_for(data, design))[1]


def _fd_hessian(grad_fn, x, rel_step=1e-5):
    x = np.asarray(x, dtype=float)
    H = np.empty((len(x), len(x)))
    for i in range(len(x)):
        h = rel_step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        H[:, i] = (grad_fn(xp) - grad_fn(xm)) / (2.0 * h)
    return 0.5 * (H + H.T)


def hessian(theta, data, design: str | None = None) -> np.ndarray:
    """Hessian of the negative log-likelihood by central differences of the score."""
    design = design or (theta.design if isinstance(theta, ParamVector) else _design_of(data))
    pv = as_param_vector(theta, design)
    blocks = _blocks_for(data, design)
    return _fd_hessian(lambda x: _evaluate(ParamVector(x, pv.m, design), blocks)[1], pv.theta)


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


@dataclass
class FitConfig:
    n_starts: int = 5
    max_iterations: int = 2000
    gtol: float = 1e-6
    ftol: float = 1e-10
    seed: int = 0
    init: str = "quantile"
    # Newton iterations on the finite-difference Hessian after the quasi-Newton run
    polish_iterations: int = 30
    # restarts from a jittered point after a trio start stalls in an infeasible region
    max_restarts: int = 3

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")
        if self.gtol <= 0 or self.ftol <= 0:
            raise ValueError("tolerances must be positive")
        if self.init != "quantile":
            raise ValueError(f"unknown init strategy {self.init!r}")


@dataclass
class StartDiagnostic:
    start: int
    value: float
    grad_norm: float
    converged: bool
    iterations: int
    restarts: int
    message: str


@dataclass
class FitResult:
    model: TwinJointModel | TrioMixture
    theta: ParamVector
    log_likelihood: float
    Q: int
    aic: float
    bic: float
    hessian: np.ndarray
    converged: bool
    grad_norm: float
    n: int
    n_obs: dict[str, int]
    seed: int
    starts: list[StartDiagnostic] = field(default_factory=list)

    @property
    def design(self) -> str:
        return self.theta.design

    @property
    def m(self) -> int:
        return self.theta.m


def information_criteria(log_likelihood: float, Q: int, n: int) -> tuple[float, float]:
    """``(AIC, BIC)`` with ``n`` the number of families."""
    return -2.0 * log_likelihood + 2.0 * Q, -2.0 * log_likelihood + math.log(n) * Q


def _pooled_pearson(Y, i, j):
    a, b = Y[:, i], Y[:, j]
    if len(a) < 2 or a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def initial_points(data, m: int, config: FitConfig, design: str | None = None) -> list[np.ndarray]:
    """Starting vectors built from data quantiles.

    Means sit at the ``(k - 1/2)/m`` quantiles of all trait values, sds at
    ``sd / sqrt(m)``, correlations at the empirical Pearson correlation and
    weights are uniform.  Every start after the first jitters the sds by a
    factor in ``exp(+/-0.5)`` and the correlations by up to +/-0.2, drawing
    from its own stream ``(seed, start)``.
    """
    design = design or _design_of(data)
    values = data.values() if hasattr(data, "values") else np.concatenate([np.ravel(b[0]) for b in _blocks_for(data, design)])
    sd = float(np.std(values))
    if not np.isfinite(sd) or sd <= 0.0:
        raise OptimizationError("degenerate data: trait values have zero variance")
    means = np.quantile(values, (np.arange(m) + 0.5) / m)
    base_sd = sd / math.sqrt(m)

    pearson = {}
    for Y, pairs in _blocks_for(data, design):
        for lab, (i, j) in pairs:
            pearson[lab] = _pooled_pearson(Y, i, j)
    labels = _labels(design)
    for lab in labels:
        pearson.setdefault(lab, 0.0)

    starts = []
    for start in range(config.n_starts):
        rng = np.random.default_rng([config.seed, start])
        for _ in range(100):
            if start == 0:
                sig = np.full(m, base_sd)
                rhos = {lab: np.full(m, pearson[lab]) for lab in labels}
            else:
                sig = base_sd * np.exp(rng.uniform(-0.5, 0.5, m))
                rhos = {lab: pearson[lab] + rng.uniform(-0.2, 0.2, m) for lab in labels}
            rhos = {lab: np.clip(r, -0.95, 0.95) for lab, r in rhos.items()}
            if design == TWINS or _trio_feasible(rhos):
                break
        else:
            rhos = {lab: np.zeros(m) for lab in labels}
        theta = np.concatenate(
            [np.zeros(m - 1), means, np.log(sig)] + [np.arctanh(rhos[lab]) for lab in labels]
        )
        starts.append(theta)
    return starts


def _trio_feasible(rhos):
    a, b, c = rhos["MF"], rhos["MC"], rhos["FC"]
    return bool(np.all(1.0 - a * a - b * b - c * c + 2.0 * a * b * c > 0.0))


class _Objective:
    def __init__(self, data, m, design):
        self.m, self.design = m, design
        self.blocks = _blocks_for(data, design)
        self.n = sum(len(Y) for Y, _ in self.blocks)
        self.infeasible = 0
        self.best_x, self.best_f = None, np.inf

    def __call__(self, x):
        f, g = _evaluate(ParamVector(x, self.m, self.design), self.blocks)
        if f < self.best_f:
            self.best_f, self.best_x = f, np.array(x, copy=True)
        return f, g

    def grad(self, x):
        return self(x)[1]

    def safe_scaled(self, x):
        try:
            f, g = self(x)
        except (DefinitenessError, ValueError, FloatingPointError):
            self.infeasible += 1
            return np.inf, np.zeros_like(x)
        return f / self.n, g / self.n


def _newton_polish(obj: _Objective, x, f, g, config: FitConfig):
    """Damped Newton steps until the score max-norm meets ``gtol``."""
    for _ in range(config.polish_iterations):
        if np.max(np.abs(g)) < config.gtol:
            break
        try:
            H = _fd_hessian(obj.grad, x)
        except (DefinitenessError, ValueError, FloatingPointError):
            break
        lam = 0.0
        scale = max(1e-12, float(np.max(np.abs(np.diag(H)))))
        moved = False
        for _ in range(12):
            try:
                L = np.linalg.cholesky(H + lam * np.eye(len(x)))
            except np.linalg.LinAlgError:
                lam = max(lam * 10.0, 1e-8 * scale)
                continue
            step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
            t = 1.0
            for _ in range(20):
                try:
                    fn, gn = obj(x + t * step)
                except (DefinitenessError, ValueError, FloatingPointError):
                    fn = np.inf
                if fn <= f + 1e-4 * t * float(g @ step) or (
                    fn <= f + 1e-12 * abs(f) and np.max(np.abs(gn)) < np.max(np.abs(g))
                ):
                    x, f, g, moved = x + t * step, fn, gn, True
                    break
                t *= 0.5
            if moved:
                break
            lam = max(lam * 10.0, 1e-8 * scale)
        if not moved:
            break
    return x, f, g


def _run_start(obj: _Objective, theta0, config: FitConfig, index: int) -> tuple[StartDiagnostic, np.ndarray | None]:
    x0 = np.asarray(theta0, dtype=float)
    rng = np.random.default_rng([config.seed, index, 1])
    iterations, restarts = 0, 0
    message = ""
    x = None
    while True:
        obj.infeasible = 0
        try:
            res = minimize(
                obj.safe_scaled,
                x0,
                jac=True,
                method="L-BFGS-B",
                options={
                    "maxiter": config.max_iterations,
                    "ftol": config.ftol,
                    "gtol": 1e-3 * config.gtol / obj.n,
                    "maxcor": 20,
                },
            )
            iterations += int(res.nit)
            message = str(res.message)
            x = res.x
            try:
                f, g = obj(x)
            except (DefinitenessError, ValueError, FloatingPointError):
                x, f, g = None, np.inf, None
            if x is not None:
                x, f, g = _newton_polish(obj, x, f, g, config)
        except (DefinitenessError, ValueError, FloatingPointError) as exc:
            x, f, g, message = None, np.inf, None, str(exc)
        ok = x is not None and np.max(np.abs(g)) < config.gtol
        if ok or restarts >= config.max_restarts or obj.infeasible == 0:
            break
        # stalled against the positive-definite boundary: restart nearby
        restarts += 1
        anchor = x if x is not None else x0
        x0 = anchor + rng.normal(0.0, 0.1, len(anchor))
    if x is None:
        return StartDiagnostic(index, np.inf, np.inf, False, iterations, restarts, message), None
    gn = float(np.max(np.abs(g)))
    return StartDiagnostic(index, float(f), gn, gn < config.gtol, iterations, restarts, message), x


def fit(data, m: int, design: str | None = None, config: FitConfig | None = None, starts: Sequence | None = None) -> FitResult:
    """Fit an ``m``-component mixture by maximum likelihood.

    ``starts`` overrides the quantile-based starting vectors.  The best final
    value over all starts is kept (earliest start wins ties) and reported in
    canonical component order.  ``converged`` is true iff the score max-norm
    at the reported optimum is below ``config.gtol``.
    """
    config = config or FitConfig()
    design = design or _design_of(data)
    if m < 1:
        raise ValueError("m must be at least 1")
    Q = n_params(m, design)
    obj = _Objective(data, m, design)
    if design == TWINS:
        sizes = {"MZ": 0, "DZ": 0}
        for Y, pairs in obj.blocks:
            sizes[pairs[0][0]] = len(Y)
        if min(sizes.values()) == 0:
            raise DataError("fitting twins needs at least one MZ and one DZ pair")
    else:
        sizes = {"trios": obj.n}
    if obj.n < Q + 1:
        raise DataError(f"{obj.n} families cannot identify {Q} parameters")

    if starts is None:
        starts = initial_points(data, m, config, design)
    diagnostics, points = [], []
    for i, theta0 in enumerate(starts):
        theta0 = theta0.theta if isinstance(theta0, ParamVector) else theta0
        diag, x = _run_start(obj, theta0, config, i)
        diagnostics.append(diag)
        points.append(x)
        log.debug("start %d: value=%.6f grad=%.2e %s", i, diag.value, diag.grad_norm, diag.message)

    values = [d.value for d in diagnostics]
    best = int(np.argmin(values))
    if not np.isfinite(values[best]):
        raise OptimizationError("all optimization starts failed", diagnostics)

    theta = to_unconstrained(to_natural(ParamVector(points[best], m, design)))
    # decode the stored vector so a saved theta reproduces the model exactly
    model = to_natural(theta)
    f, g = obj(theta.theta)
    H = _fd_hessian(obj.grad, theta.theta)
    ll = -f
    aic, bic = information_criteria(ll, Q, obj.n)
    gn = float(np.max(np.abs(g)))
    return FitResult(
        model=model,
        theta=theta,
        log_likelihood=ll,
        Q=Q,
        aic=aic,
        bic=bic,
        hessian=H,
        converged=gn < config.gtol,
        grad_norm=gn,
        n=obj.n,
        n_obs=sizes,
        seed=config.seed,
        starts=diagnostics,
    )


# --------------------------------------------------------------------------
# model selection
# --------------------------------------------------------------------------


@dataclass
class ScanRow:
    m: int
    Q: int
    log_likelihood: float
    aic: float
    bic: float
    delta_aic: float
    delta_bic: float
    converged: bool
    status: str = "ok"


@dataclass
class ScanTable:
    design: str
    n: int
    rows: list[ScanRow]
    fits: dict[int, FitResult] = field(default_factory=dict, repr=False)

    @property
    def best_m(self) -> int | None:
        """Component count with the lowest BIC."""
        ok = [r for r in self.rows if np.isfinite(r.bic)]
        return min(ok, key=lambda r: r.bic).m if ok else None

    @property
    def best_m_aic(self) -> int | None:
        ok = [r for r in self.rows if np.isfinite(r.aic)]
        return min(ok, key=lambda r: r.aic).m if ok else None

    def to_text(self) -> str:
        lines = [f"{'m':>3}  {'parameters':>10}  {'ΔAIC':>10}  {'ΔBIC':>10}  status"]
        for r in self.rows:
            da = f"{r.delta_aic:10.1f}" if np.isfinite(r.delta_aic) else f"{'-':>10}"
            db = f"{r.delta_bic:10.1f}" if np.isfinite(r.delta_bic) else f"{'-':>10}"
            status = r.status if r.converged or r.status != "ok" else "not converged"
            lines.append(f"{r.m:>3}  {r.Q:>10}  {da}  {db}  {status}")
        lines.append(f"differences from the smallest criterion; BIC selects m={self.best_m}")
        return "\n".join(lines)


def model_scan(data, m_range, design: str | None = None, config: FitConfig | None = None) -> ScanTable:
    """Fit every ``m`` in ``m_range`` and tabulate information criteria.

    A failed fit is recorded in its row and does not stop the scan.
    """
    m_range = list(m_range)
    if not m_range:
        raise ValueError("m_range is empty")
    design = design or _design_of(data)
    rows, fits = [], {}
    n = None
    for m in m_range:
        Q = n_params(m, design)
        try:
            res = fit(data, m, design, config)
        except (OptimizationError, DataError, DefinitenessError) as exc:
            rows.append(ScanRow(m, Q, np.nan, np.nan, np.nan, np.nan, np.nan, False, f"failed: {exc}"))
            continue
        fits[m] = res
        n = res.n
        rows.append(ScanRow(m, Q, res.log_likelihood, res.aic, res.bic, np.nan, np.nan, res.converged))
    aics = [r.aic for r in rows if np.isfinite(r.aic)]
    bics = [r.bic for r in rows if np.isfinite(r.bic)]
    for r in rows:
        if np.isfinite(r.aic):
            r.delta_aic = r.aic - min(aics)
            r.delta_bic = r.bic - min(bics)
    return ScanTable(design, n or 0, rows, fits)


# --------------------------------------------------------------------------
# delta-method inference
# --------------------------------------------------------------------------


def natural_parameters(model) -> tuple[list[str], np.ndarray]:
    """Names and values of every natural parameter, in canonical order."""
    names, vals = [], []
    for key, arr in (("p", model.p), ("mu", model.mu), ("sigma", model.sigma)):
        names += [f"{key}_{k + 1}" for k in range(model.m)]
        vals.append(arr)
    for lab in model.labels:
        names += [f"rho_{lab}_{k + 1}" for k in range(model.m)]
        vals.append(model.rho(lab))
    return names, np.concatenate(vals)


def global_parameters(model) -> tuple[list[str], np.ndarray]:
    g = global_moments(model)
    names = ["global_mu", "global_sigma"] + [f"global_rho_{lab}" for lab in model.labels]
    return names, np.array([g.mu, g.sigma] + [g.rho[lab] for lab in model.labels])


def covariance(fit: FitResult) -> np.ndarray:
    """Inverse Hessian on the unconstrained scale.

    Raises :class:`InferenceUnavailableError` when the Hessian is singular
    or indefinite.
    """
    H = np.asarray(fit.hessian, dtype=float)
    if not np.all(np.isfinite(H)):
        raise InferenceUnavailableError("Hessian contains non-finite entries")
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise InferenceUnavailableError("Hessian is not positive definite") from None
    if np.min(np.diag(L)) ** 2 < 1e-12 * np.max(np.diag(L)) ** 2:
        raise InferenceUnavailableError("Hessian is numerically singular")
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def functional_jacobian(fit: FitResult, functional: Callable, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``functional(model)`` with respect to theta."""
    th = fit.theta.theta
    base = np.atleast_1d(np.asarray(functional(fit.model), dtype=float))
    J = np.empty((base.size, th.size))
    for i in range(th.size):
        h = rel_step * (1.0 + abs(th[i]))
        tp, tm = th.copy(), th.copy()
        tp[i] += h
        tm[i] -= h
        fp = np.asarray(functional(to_natural(ParamVector(tp, fit.m, fit.design))), dtype=float).ravel()
        fm = np.asarray(functional(to_natural(ParamVector(tm, fit.m, fit.design))), dtype=float).ravel()
        J[:, i] = (fp - fm) / (2.0 * h)
    return J


def delta_method_se(fit: FitResult, functional: Callable | str) -> np.ndarray:
    """Standard errors ``sqrt(grad' H^-1 grad)`` of a scalar or vector functional.

    ``functional`` maps a model to a number or array, or is one of the names
    ``"parameters"`` (natural parameters) or ``"global"`` (global moments).
    """
    if isinstance(functional, str):
        functional = {
            "parameters": lambda mdl: natural_parameters(mdl)[1],
            "global": lambda mdl: global_parameters(mdl)[1],
        }[functional]
    cov = covariance(fit)
    J = functional_jacobian(fit, functional)
    var = np.einsum("ij,jk,ik->i", J, cov, J)
    out = np.sqrt(np.maximum(var, 0.0))
    shape = np.shape(functional(fit.model))
    return out.reshape(shape) if shape else float(out[0])


def parameter_se(fit: FitResult) -> dict[str, float]:
    """Delta-method se for every natural parameter and global moment."""
    names, _ = natural_parameters(fit.model)
    gnames, _ = global_parameters(fit.model)
    se = delta_method_se(
        fit, lambda mdl: np.concatenate([natural_parameters(mdl)[1], global_parameters(mdl)[1]])
    )
    return dict(zip(names + gnames, map(float, se)))


@dataclass
class CurveSeries:
    """Values of one curve on a grid with pointwise 95% intervals."""

    name: str
    y: np.ndarray
    value: np.ndarray
    se: np.ndarray | None = None

    @property
    def lower(self):
        return None if self.se is None else self.value - 1.96 * self.se

    @property
    def upper(self):
        return None if self.se is None else self.value + 1.96 * self.se


def _curve_values(model, grid, design):
    """Correlation and proportion curves as an ordered name -> array dict."""
    out = {}
    for lab, margin in relationship_margins(model).items():
        out[f"rho_{lab}"] = correlation_curve(margin, grid)
    hc = heritability_curves(model, grid, design)
    out.update(hc.curves())
    return out


def curve_bands(fit: FitResult, grid=None, design: str = "auto", with_se: bool = True) -> dict[str, CurveSeries]:
    """Correlation and heritability curves with delta-method standard errors.

    For twins, ``design="auto"`` is resolved once at the fitted model and held
    fixed when differentiating.
    """
    model = fit.model
    grid = default_grid(model) if grid is None else np.asarray(grid, dtype=float)
    if fit.design == TWINS:
        design = _resolve_twin_design(model, design)
    values = _curve_values(model, grid, design)
    se_flat = None
    if with_se:
        se_flat = delta_method_se(
            fit, lambda mdl: np.concatenate(list(_curve_values(mdl, grid, design).values()))
        )
    out = {}
    for i, (name, v) in enumerate(values.items()):
        se = None if se_flat is None else se_flat[i * len(grid) : (i + 1) * len(grid)]
        out[name] = CurveSeries(name, grid, v, se)
    return out
