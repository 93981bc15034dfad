"""JSON documents for fits, models, tail limits and bootstrap results.

Floats are written with Python's shortest round-trip representation, so a
saved fit decodes to bit-identical parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict

import numpy as np

from .errors import DataError
from .estimation import FitResult, ParamVector, StartDiagnostic, to_natural, to_unconstrained
from .mixture import BivariateMixture, MixtureComponent, TrioMixture, TwinJointModel, global_moments


def _clean(x):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _design_name(model) -> str:
    if isinstance(model, TwinJointModel):
        return "twins"
    if isinstance(model, TrioMixture):
        return "trios"
    return "pairs"


def model_to_dict(model) -> dict:
    design = _design_name(model)
    g = global_moments(model)
    return {
        "design": design,
        "m": model.m,
        "components": [
            {"p": c.weight, "mu": c.mean, "sigma": c.sd, "rho": dict(c.rho)} for c in model.components
        ],
        "global": {"mu": g.mu, "sigma": g.sigma, "rho": dict(g.rho)},
    }


def model_from_dict(doc: dict):
    """Rebuild a model, preferring the stored unconstrained vector when present."""
    design = doc.get("design")
    if design not in ("twins", "trios", "pairs"):
        raise DataError(f"unknown design {design!r} in model document")
    if doc.get("theta") is not None and design != "pairs":
        return to_natural(ParamVector(doc["theta"], int(doc["m"]), design))
    cls = {"pairs": BivariateMixture, "twins": TwinJointModel, "trios": TrioMixture}[design]
    try:
        comps = [MixtureComponent(c["p"], c["mu"], c["sigma"], c["rho"]) for c in doc["components"]]
        return cls(comps)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed component list: {exc}") from None
    except ValueError as exc:
        raise DataError(f"invalid model parameters: {exc}") from None


def fit_to_dict(fit: FitResult, se: dict | None = None, extra: dict | None = None) -> dict:
    doc = model_to_dict(fit.model)
    doc.update(
        {
            "loglik": fit.log_likelihood,
            "Q": fit.Q,
            "aic": fit.aic,
            "bic": fit.bic,
            "se": se,
            "converged": fit.converged,
            "seed": fit.seed,
            "n": fit.n,
            "n_obs": dict(fit.n_obs),
            "grad_norm": fit.grad_norm,
            "theta": fit.theta.theta.tolist(),
            "hessian": np.asarray(fit.hessian).tolist(),
            "starts": [asdict(s) for s in fit.starts],
        }
    )
    if extra:
        doc.update(extra)
    return _clean(doc)


def fit_from_dict(doc: dict) -> FitResult:
    design, m = doc["design"], int(doc["m"])
    model = model_from_dict(doc)
    if doc.get("theta") is not None:
        theta = ParamVector(doc["theta"], m, design)
    else:
        theta = to_unconstrained(model)
    H = doc.get("hessian")
    H = np.full((len(theta), len(theta)), np.nan) if H is None else np.array(H, dtype=float)
    starts = [
        StartDiagnostic(**{k: (np.inf if v is None and k in ("value", "grad_norm") else v) for k, v in s.items()})
        for s in doc.get("starts", [])
    ]
    return FitResult(
        model=model,
        theta=theta,
        log_likelihood=doc.get("loglik", np.nan),
        Q=int(doc.get("Q", len(theta))),
        aic=doc.get("aic", np.nan),
        bic=doc.get("bic", np.nan),
        hessian=H,
        converged=bool(doc.get("converged", False)),
        grad_norm=doc.get("grad_norm") or np.nan,
        n=int(doc.get("n", 0)),
        n_obs=dict(doc.get("n_obs", {})),
        seed=int(doc.get("seed", 0)),
        starts=starts,
    )


def tail_limits_to_dict(limits) -> dict:
    return _clean(
        {
            "case": limits.case,
            "left": asdict(limits.left),
            "right": asdict(limits.right),
            "equal_sd": list(limits.equal_sd) if limits.equal_sd else None,
        }
    )


def bootstrap_to_dict(res) -> dict:
    return _clean(
        {
            "B": res.B,
            "failures": res.failures,
            "converged_replicates": res.n_ok,
            "functionals": {
                k: {
                    "sd": res.sd[k],
                    "lower_2.5": res.lower[k],
                    "upper_97.5": res.upper[k],
                }
                for k in res.estimates
            },
        }
    )


def dump(doc, path=None) -> str:
    text = json.dumps(_clean(doc), indent=2)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


def load(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
