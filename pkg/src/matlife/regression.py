"""Survival regression where covariates scale the latent clock.

The conditional hazard is ``lam(t; theta(x @ gamma)) * m(x @ beta)`` times the
underlying matrix hazard: covariates accelerate the intensity through the
link ``m`` (exponential by default) and may also move the transform's shape
parameter.  Transforming each lifetime by its own cumulative intensity maps
every subject to one common phase-type distribution, which is what the
estimation loop alternates against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .em import (
    DEAD_STATE_TOL,
    CensoredSample,
    EMConfig,
    StructureSpec,
    e_step,
    init_structure,
    loglik as ph_loglik,
    m_step,
    n_free_parameters,
)
from .exceptions import (
    DegenerateObservationError,
    InvalidInputError,
    ScoreOverflowError,
)
from .inhomogeneity import ScaledTransform, make_transform
from .phasetype import (
    Evaluation,
    IPHModel,
    PHRepresentation,
    make_products_evaluator,
    ph_products,
)

__all__ = [
    "RegObservation",
    "RegressionSample",
    "PIModel",
    "PIFitConfig",
    "PIFitResult",
    "transform",
    "pi_loglik",
    "maximize_regression",
    "fit_pi",
]

#: linear predictors beyond this overflow the exponential link
SCORE_LIMIT = 700.0


class RegObservation(NamedTuple):
    y: float
    delta: int
    x: tuple
    weight: float = 1.0


@dataclass(frozen=True)
class RegressionSample:
    """Lifetimes with censoring indicators, covariate rows and weights."""

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        delta = np.asarray(self.delta).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.size == 0:
            x = x.reshape(y.size, 0)
        weight = (np.ones_like(y) if self.weight is None
                  else np.asarray(self.weight, dtype=float).ravel())
        if not (y.size == delta.size == weight.size == x.shape[0]):
            raise InvalidInputError("observation array lengths disagree")
        if y.size == 0:
            raise InvalidInputError("sample is empty")
        if np.any(y <= 0) or not np.all(np.isfinite(y)):
            raise InvalidInputError("lifetimes must be positive and finite")
        if not np.all(np.isin(delta, (0, 1))):
            raise InvalidInputError("censoring indicators must be 0 or 1")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("covariates must be finite")
        if np.any(weight <= 0) or not np.all(np.isfinite(weight)):
            raise InvalidInputError("weights must be positive and finite")
        for name, arr in (("y", y), ("delta", delta.astype(np.int8)),
                          ("x", x), ("weight", weight)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def coerce(cls, data) -> "RegressionSample":
        if isinstance(data, cls):
            return data
        rows = [RegObservation(*row) for row in data]
        return cls(
            np.array([r.y for r in rows]),
            np.array([r.delta for r in rows]),
            np.array([np.atleast_1d(r.x) for r in rows]),
            np.array([r.weight for r in rows]),
        )

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    def canonical(self) -> "RegressionSample":
        """Rows sorted by (y, delta, covariates, weight).

        Fitting starts from this ordering, which makes results invariant to
        the order observations arrive in.
        """
        keys = [self.weight, *reversed(self.x.T), self.delta, self.y]
        order = np.lexsort(keys)
        return RegressionSample(self.y[order], self.delta[order],
                                self.x[order], self.weight[order])


@dataclass(frozen=True)
class PIModel:
    """Fitted regression model: representation, transform family, coefficients.

    ``gamma`` holds the transform-parameter coefficients with the intercept
    first; length one means a shared shape for all subjects.  ``gamma`` is
    ``None`` exactly when the family is ``identity``.  Coefficients are on the
    original covariate scale; ``standardization`` records the internal
    centering/scaling used during the fit.
    """

    rep: PHRepresentation
    family: str
    beta: np.ndarray
    gamma: np.ndarray | None = None
    link: str = "exp"
    standardization: dict | None = None

    def __post_init__(self):
        if self.link != "exp":
            raise InvalidInputError(f"unsupported link {self.link!r}")
        beta = np.asarray(self.beta, dtype=float).ravel()
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if self.family == "identity":
            if self.gamma is not None:
                raise InvalidInputError("identity family carries no gamma")
        else:
            if self.family not in ("gompertz", "weibull"):
                raise InvalidInputError(f"unknown family {self.family!r}")
            if self.gamma is None:
                raise InvalidInputError("family with a shape parameter needs gamma")
            gamma = np.asarray(self.gamma, dtype=float).ravel()
            if gamma.size not in (1, self.beta.size + 1):
                raise InvalidInputError(
                    "gamma must be an intercept alone or intercept plus one "
                    "coefficient per covariate")
            gamma.setflags(write=False)
            object.__setattr__(self, "gamma", gamma)

    @property
    def d(self) -> int:
        return self.beta.size

    def _scores(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.d == 1 else x[None, :]
        if x.shape[1] != self.d:
            raise InvalidInputError(f"expected {self.d} covariates, got {x.shape[1]}")
        rate_score = x @ self.beta
        if self.gamma is None:
            return rate_score, None
        shape_score = self.gamma[0] + x @ self.gamma[1:1 + x.shape[1]] \
            if self.gamma.size > 1 else np.full(x.shape[0], self.gamma[0])
        return rate_score, shape_score

    def rate_factor(self, x) -> np.ndarray:
        """Multiplicative intensity factor ``exp(x @ beta)`` per row."""
        score, _ = self._scores(x)
        bad = np.abs(score) > SCORE_LIMIT
        if np.any(bad):
            raise ScoreOverflowError(int(np.flatnonzero(bad)[0]))
        return np.exp(score)

    def shape_param(self, x) -> np.ndarray | None:
        """Per-row transform parameter, or ``None`` for the identity family."""
        _, score = self._scores(x)
        if score is None:
            return None
        bad = np.abs(score) > SCORE_LIMIT
        if np.any(bad):
            raise ScoreOverflowError(int(np.flatnonzero(bad)[0]))
        return np.exp(score)

    def conditional_model(self, x_row) -> IPHModel:
        """Lifetime distribution for one covariate row."""
        x_row = np.atleast_1d(np.asarray(x_row, dtype=float))
        factor = float(self.rate_factor(x_row[None, :])[0])
        if self.family == "identity":
            base = make_transform("identity")
        else:
            theta = float(self.shape_param(x_row[None, :])[0])
            base = make_transform(self.family, theta)
        return IPHModel(self.rep, ScaledTransform(base, factor))

    def predict(self, x_row, y) -> Evaluation:
        """Conditional density/survival/hazard/cumulative hazard at ``y``."""
        return self.conditional_model(x_row).evaluate(y)


def _cumulative_by_family(family: str, theta: np.ndarray | None, y: np.ndarray):
    if family == "identity":
        return y
    if family == "gompertz":
        return np.expm1(theta * y) / theta
    return y ** theta  # weibull


def _log_intensity_by_family(family: str, theta, y):
    if family == "identity":
        return np.zeros_like(y)
    if family == "gompertz":
        return theta * y
    with np.errstate(divide="ignore"):
        return np.log(theta) + (theta - 1.0) * np.log(y)


def transform(model: PIModel, y, x) -> np.ndarray:
    """Map lifetimes to the shared operational scale.

    ``z = exp(x beta) * G(y; theta(x gamma))``; strictly increasing in ``y``
    for each covariate row.  Overflowing linear predictors raise with the
    first offending observation index.
    """
    y = np.asarray(y, dtype=float)
    factor = model.rate_factor(x)
    theta = model.shape_param(x)
    return factor * _cumulative_by_family(model.family, theta, y)


def pi_loglik(model: PIModel, data) -> float:
    """Weighted conditional log-likelihood of a regression model.

    Change of variables: the phase-type log-likelihood of the transformed
    times plus, for observed rows, the log-intensity Jacobian.
    """
    sample = RegressionSample.coerce(data)
    z = transform(model, sample.y, sample.x)
    ph_part = ph_loglik(model.rep, CensoredSample(z, sample.delta, sample.weight))
    obs = sample.delta == 1
    if not obs.any():
        return ph_part
    factor = model.rate_factor(sample.x[obs])
    theta = model.shape_param(sample.x[obs])
    jac = np.log(factor) + _log_intensity_by_family(model.family, theta, sample.y[obs])
    return ph_part + float(np.sum(sample.weight[obs] * jac))


def _pack(beta: np.ndarray, gamma: np.ndarray | None) -> np.ndarray:
    return beta.copy() if gamma is None else np.concatenate([beta, gamma])


def _unpack(vec: np.ndarray, d: int, has_gamma: bool, gamma_len: int):
    if not has_gamma:
        return vec[:d], None
    return vec[:d], vec[d:d + gamma_len]


def _fast_objective(rep: PHRepresentation, family: str, sample: RegressionSample,
                    gamma_len: int):
    """Negative pi-loglik as a function of packed coefficients.

    Uses the spectral product evaluator; non-finite or overflowing parameter
    points score ``+inf`` so the simplex backs away from them.
    """
    products = make_products_evaluator(rep)
    d = sample.d
    obs = sample.delta == 1
    w, wo = sample.weight, sample.weight[obs]
    yo = sample.y[obs]
    has_gamma = family != "identity"

    def objective(vec):
        beta, gamma = _unpack(vec, d, has_gamma, gamma_len)
        rate_score = sample.x @ beta
        if np.abs(rate_score).max(initial=0.0) > SCORE_LIMIT:
            return np.inf
        factor = np.exp(rate_score)
        if has_gamma:
            shape_score = gamma[0] + (sample.x @ gamma[1:] if gamma.size > 1 else 0.0)
            shape_score = np.broadcast_to(np.asarray(shape_score, dtype=float),
                                          (sample.n,))
            if np.abs(shape_score).max() > SCORE_LIMIT:
                return np.inf
            theta = np.exp(shape_score)
        else:
            theta = None
        z = factor * _cumulative_by_family(family, theta, sample.y)
        if not np.all(np.isfinite(z)):
            return np.inf
        dens, surv = products(z)
        do, sc = dens[obs], surv[~obs]
        if np.any(do <= 0) or np.any(sc <= 0):
            return np.inf
        theta_o = theta[obs] if theta is not None else None
        jac = np.log(factor[obs]) + _log_intensity_by_family(family, theta_o, yo)
        val = np.sum(wo * (np.log(do) + jac)) + np.sum(w[~obs] * np.log(sc))
        return -val if np.isfinite(val) else np.inf

    return objective


def maximize_regression(rep: PHRepresentation, family: str, data,
                        beta: np.ndarray, gamma: np.ndarray | None,
                        budget: int = 500) -> tuple[np.ndarray, np.ndarray | None]:
    """One coefficient-improvement pass with the representation held fixed.

    Nelder-Mead from the supplied coefficients (initial simplex at absolute
    scale 0.1, evaluation budget as given); the returned coefficients never
    score worse than the starting point.
    """
    from scipy.optimize import minimize

    sample = RegressionSample.coerce(data)
    beta = np.asarray(beta, dtype=float).ravel()
    gamma = None if gamma is None else np.asarray(gamma, dtype=float).ravel()
    x0 = _pack(beta, gamma)
    if x0.size == 0:
        return beta, gamma
    objective = _fast_objective(rep, family, sample, 0 if gamma is None else gamma.size)
    if not np.isfinite(objective(x0)):
        raise InvalidInputError("starting coefficients have zero likelihood")
    simplex = np.vstack([x0, x0 + 0.1 * np.eye(x0.size)])
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"maxfev": budget, "initial_simplex": simplex,
                            "xatol": 1e-10, "fatol": 1e-10})
    return _unpack(res.x, beta.size, gamma is not None,
                   0 if gamma is None else gamma.size)


@dataclass(frozen=True)
class PIFitConfig:
    max_outer: int = 2000
    tol: float = 1e-4
    patience: int = 5
    nm_budget: int = 500
    shape_covariates: bool = False   # regress the transform parameter on x


@dataclass(frozen=True)
class PIFitResult:
    model: PIModel
    structure: StructureSpec
    loglik_trace: np.ndarray
    converged: bool
    iterations: int
    dead_state_events: int = 0

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])

    @property
    def n_parameters(self) -> int:
        gamma_len = 0 if self.model.gamma is None else self.model.gamma.size
        return n_free_parameters(self.structure) + self.model.d + gamma_len


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    center = x.mean(axis=0) if x.shape[0] else np.zeros(x.shape[1])
    scale = x.std(axis=0) if x.shape[0] else np.ones(x.shape[1])
    scale = np.where(scale < 1e-12, 1.0, scale)
    return (x - center) / scale, center, scale


def _destandardize(model: PIModel, center: np.ndarray,
                   scale: np.ndarray) -> PIModel:
    """Report coefficients on the original covariate scale.

    The centering constant leaves the rate score as a global factor, which is
    absorbed into the sub-intensity; the shape score absorbs it into the
    intercept.  The fitted distribution is unchanged.
    """
    beta = model.beta / scale
    shift = float(np.sum(model.beta * center / scale))
    t = model.rep.T * np.exp(-shift)
    gamma = model.gamma
    if gamma is not None:
        gamma = gamma.copy()
        if gamma.size > 1:
            gshift = float(np.sum(gamma[1:] * center / scale))
            gamma[1:] = gamma[1:] / scale
            gamma[0] = gamma[0] - gshift
    return PIModel(PHRepresentation(model.rep.pi, t), model.family, beta, gamma,
                   model.link, {"center": center.tolist(), "scale": scale.tolist()})


def fit_pi(data, spec: StructureSpec, family: str = "weibull",
           config: PIFitConfig | None = None, init: PHRepresentation | None = None,
           rng=None) -> PIFitResult:
    """Alternating estimation of the regression model.

    Each outer iteration transforms the data with the current coefficients,
    runs one EM pass on the representation, then improves the coefficients by
    Nelder-Mead (warm-started from the previous values).  Covariates are
    standardized internally; reported coefficients are on the original scale.
    Stops when the relative log-likelihood change stays below ``tol`` for
    ``patience`` consecutive iterations.
    """
    sample = RegressionSample.coerce(data).canonical()
    config = config or PIFitConfig()
    if family == "identity" and config.shape_covariates:
        raise InvalidInputError("identity family has no shape parameter to regress")

    xs, center, scale = _standardize(sample.x)
    internal = RegressionSample(sample.y, sample.delta, xs, sample.weight)
    rep = init if init is not None else init_structure(spec, rng)
    if rep.p != spec.p:
        raise InvalidInputError("initial representation order disagrees with spec")
    beta = np.zeros(internal.d)
    gamma = None if family == "identity" else (
        np.zeros(1 + internal.d) if config.shape_covariates else np.zeros(1))

    total = internal.total_weight
    trace = []
    dead_events = 0
    converged = False
    streak = 0
    iterations = 0
    for _ in range(config.max_outer):
        try:
            current = PIModel(rep, family, beta, gamma)
            z = transform(current, internal.y, internal.x)
            ph_sample = CensoredSample(z, internal.delta, internal.weight)
            stats = e_step(rep, ph_sample)
        except (DegenerateObservationError, ScoreOverflowError) as err:
            raise type(err)(err.index,
                            f"outer iteration {iterations}: {err}") from err
        dead_events += int(np.sum(stats.v <= DEAD_STATE_TOL * max(1.0, total)))
        rep = m_step(stats, total, spec, previous=rep)
        beta, gamma = maximize_regression(rep, family, internal, beta, gamma,
                                          budget=config.nm_budget)
        trace.append(pi_loglik(PIModel(rep, family, beta, gamma), internal))
        iterations += 1
        if len(trace) >= 2:
            rel = abs(trace[-1] - trace[-2]) / max(1e-10, abs(trace[-1]))
            streak = streak + 1 if rel < config.tol else 0
            if streak >= config.patience:
                converged = True
                break
    fitted = _destandardize(PIModel(rep, family, beta, gamma), center, scale)
    return PIFitResult(fitted, spec, np.asarray(trace), converged, iterations,
                       dead_events)
