"""Model state, spike-and-slab priors, and the unnormalized log-posterior.

Each covariate may enter the linear trend (indicator gamma_r, coefficient
beta_j) and/or the spatial correlation (indicator gamma_c, parameter rho_j).
Inactive slots sit exactly at their point masses: beta_j = 0, rho_j = 1.
Densities are taken with respect to the mixed dominating measure, so a point
mass contributes only its Bernoulli weight, never a density term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from . import kernel
from .errors import InvalidStateError, TransformError

# Smallest nugget ratio the sampler will represent; log(lambda) must stay
# defined. Exact lambda = 0 is reserved for deterministic interpolation.
LAMBDA_FLOOR = 1e-10

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(eq=False)
class ModelIndicator:
    """Binary inclusion vectors for the linear (gamma_r) and spatial (gamma_c) parts."""

    gamma_r: np.ndarray
    gamma_c: np.ndarray

    def __post_init__(self):
        self.gamma_r = np.asarray(self.gamma_r, dtype=np.int8).ravel()
        self.gamma_c = np.asarray(self.gamma_c, dtype=np.int8).ravel()
        if self.gamma_r.shape != self.gamma_c.shape:
            raise InvalidStateError("gamma_r and gamma_c must have equal length")
        for g in (self.gamma_r, self.gamma_c):
            if np.any((g != 0) & (g != 1)):
                raise InvalidStateError("indicators must be 0/1")

    @property
    def p(self) -> int:
        return self.gamma_r.shape[0]

    def n_active(self) -> int:
        return int(self.gamma_r.sum() + self.gamma_c.sum())

    def key(self) -> tuple:
        """Hashable identity, used for empirical model frequencies."""
        return (tuple(int(g) for g in self.gamma_r), tuple(int(g) for g in self.gamma_c))

    @classmethod
    def from_key(cls, key) -> "ModelIndicator":
        return cls(np.array(key[0]), np.array(key[1]))

    def __eq__(self, other):
        if not isinstance(other, ModelIndicator):
            return NotImplemented
        return np.array_equal(self.gamma_r, other.gamma_r) and np.array_equal(
            self.gamma_c, other.gamma_c
        )

    def copy(self) -> "ModelIndicator":
        return ModelIndicator(self.gamma_r.copy(), self.gamma_c.copy())


@dataclass(eq=False)
class ParameterState:
    """Full continuous state: intercept, coefficients, correlations, variances, weights."""

    beta0: float
    beta: np.ndarray
    rho: np.ndarray
    sigma2_z: float
    lam: float
    omega_r: float
    omega_c: float

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        self.rho = np.asarray(self.rho, dtype=float).ravel()

    def copy(self) -> "ParameterState":
        return ParameterState(
            self.beta0,
            self.beta.copy(),
            self.rho.copy(),
            self.sigma2_z,
            self.lam,
            self.omega_r,
            self.omega_c,
        )


@dataclass
class TransformedState:
    """State with positivity/interval parameters mapped to the real line.

    mu = log sigma2_z, zeta = log lambda, psi_r = logit omega_r,
    psi_c = logit omega_c. beta0, beta and rho ride along unchanged.
    """

    beta0: float
    beta: np.ndarray
    rho: np.ndarray
    mu: float
    zeta: float
    psi_r: float
    psi_c: float


@dataclass
class PriorConfig:
    """Hyperparameters of the prior.

    tau is the slab standard deviation for active coefficients; sigma2_z and
    lambda carry inverse-gamma (shape, scale) priors; the mixture weights are
    uniform on (0, 1).
    """

    tau: float = 5.0
    beta0_sd: float = 10.0
    sigma2_shape: float = 3.0
    sigma2_scale: float = 2.0
    lambda_shape: float = 3.0
    lambda_scale: float = 0.2

    def __post_init__(self):
        for name in (
            "tau",
            "beta0_sd",
            "sigma2_shape",
            "sigma2_scale",
            "lambda_shape",
            "lambda_scale",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"PriorConfig.{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "beta0_sd": self.beta0_sd,
            "sigma2_shape": self.sigma2_shape,
            "sigma2_scale": self.sigma2_scale,
            "lambda_shape": self.lambda_shape,
            "lambda_scale": self.lambda_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown prior config keys: {sorted(unknown)}")
        return cls(**d)


def validate_consistent(ind: ModelIndicator, state: ParameterState) -> None:
    """Inactive coordinates must sit exactly at their point masses."""
    p = ind.p
    if state.beta.shape[0] != p or state.rho.shape[0] != p:
        raise InvalidStateError(
            f"state vectors of length {state.beta.shape[0]}/{state.rho.shape[0]} "
            f"do not match {p} indicators"
        )
    off_r = (ind.gamma_r == 0) & (state.beta != 0.0)
    if np.any(off_r):
        raise InvalidStateError(
            f"inactive beta coordinates {np.where(off_r)[0].tolist()} are nonzero"
        )
    off_c = (ind.gamma_c == 0) & (state.rho != 1.0)
    if np.any(off_c):
        raise InvalidStateError(
            f"inactive rho coordinates {np.where(off_c)[0].tolist()} are not 1"
        )


def _norm_logpdf(x: float, sd: float) -> float:
    return -0.5 * (_LOG_2PI + 2.0 * math.log(sd)) - 0.5 * (x / sd) ** 2


def _invgamma_logpdf(x: float, shape: float, scale: float) -> float:
    if x <= 0.0:
        return -math.inf
    return shape * math.log(scale) - gammaln(shape) - (shape + 1.0) * math.log(x) - scale / x


def log_prior(ind: ModelIndicator, state: ParameterState, cfg: PriorConfig) -> float:
    """Joint log-prior over indicators and parameters.

    Bernoulli(omega) mass for every indicator, N(0, tau^2) density for each
    active coefficient, uniform slab (zero contribution) for each active rho,
    Gaussian for the intercept, inverse-gamma for sigma2_z and lambda, and a
    uniform (zero) term for the weights. Returns -inf outside the support.
    """
    validate_consistent(ind, state)
    p = ind.p
    if not (0.0 < state.omega_r < 1.0 and 0.0 < state.omega_c < 1.0):
        return -math.inf
    active_rho = state.rho[ind.gamma_c == 1]
    if active_rho.size and (np.any(active_rho <= 0.0) or np.any(active_rho >= 1.0)):
        return -math.inf

    nr = int(ind.gamma_r.sum())
    nc = int(ind.gamma_c.sum())
    lp = nr * math.log(state.omega_r) + (p - nr) * math.log1p(-state.omega_r)
    lp += nc * math.log(state.omega_c) + (p - nc) * math.log1p(-state.omega_c)

    active_beta = state.beta[ind.gamma_r == 1]
    if active_beta.size:
        lp += -0.5 * active_beta.size * (_LOG_2PI + 2.0 * math.log(cfg.tau))
        lp += -0.5 * float(active_beta @ active_beta) / cfg.tau**2

    lp += _norm_logpdf(state.beta0, cfg.beta0_sd)
    lp += _invgamma_logpdf(state.sigma2_z, cfg.sigma2_shape, cfg.sigma2_scale)
    lp += _invgamma_logpdf(state.lam, cfg.lambda_shape, cfg.lambda_scale)
    return lp


def log_posterior(
    ind: ModelIndicator, state: ParameterState, data, cfg: PriorConfig
) -> float:
    """Unnormalized log-posterior: marginal log-likelihood plus log-prior."""
    lp = log_prior(ind, state, cfg)
    if lp == -math.inf:
        return -math.inf
    return kernel.log_likelihood(data, state) + lp


def to_unconstrained(state: ParameterState) -> TransformedState:
    if state.sigma2_z <= 0.0:
        raise TransformError(f"sigma2_z must be positive, got {state.sigma2_z}")
    if state.lam <= 0.0:
        raise TransformError(
            f"lambda must be positive for the log transform, got {state.lam}; "
            f"use lambda >= {LAMBDA_FLOOR}"
        )
    if not (0.0 < state.omega_r < 1.0 and 0.0 < state.omega_c < 1.0):
        raise TransformError("omega_r and omega_c must lie strictly inside (0, 1)")
    return TransformedState(
        beta0=state.beta0,
        beta=state.beta.copy(),
        rho=state.rho.copy(),
        mu=math.log(state.sigma2_z),
        zeta=math.log(state.lam),
        psi_r=math.log(state.omega_r / (1.0 - state.omega_r)),
        psi_c=math.log(state.omega_c / (1.0 - state.omega_c)),
    )


def from_unconstrained(t: TransformedState) -> ParameterState:
    # expit output is clipped away from {0, 1} so downstream logs stay finite;
    # the walk never legitimately reaches |psi| ~ 36 where this matters.
    eps = 1e-15
    return ParameterState(
        beta0=t.beta0,
        beta=np.asarray(t.beta, dtype=float).copy(),
        rho=np.asarray(t.rho, dtype=float).copy(),
        sigma2_z=math.exp(t.mu),
        lam=math.exp(t.zeta),
        omega_r=float(np.clip(expit(t.psi_r), eps, 1.0 - eps)),
        omega_c=float(np.clip(expit(t.psi_c), eps, 1.0 - eps)),
    )


def log_jacobian(t: TransformedState) -> float:
    """Log-determinant of d(sigma2_z, lambda, omega_r, omega_c)/d(mu, zeta, psi_r, psi_c).

    The map is diagonal: exp for the log-transformed pair and the logistic
    derivative omega*(1-omega) for each weight, so the log-determinant is
    mu + zeta + log omega_r(1-omega_r) + log omega_c(1-omega_c).
    """
    # log sigma(psi) + log(1 - sigma(psi)) = -softplus(-psi) - softplus(psi)
    def _log_w_1mw(psi: float) -> float:
        return -(np.logaddexp(0.0, -psi) + np.logaddexp(0.0, psi))

    return float(t.mu + t.zeta + _log_w_1mw(t.psi_r) + _log_w_1mw(t.psi_c))


def draw_from_prior(p: int, cfg: PriorConfig, rng: np.random.Generator
                    ) -> tuple[ModelIndicator, ParameterState]:
    """One joint draw from the prior, lambda floored so transforms are defined."""
    omega_r = float(np.clip(rng.uniform(), 1e-12, 1.0 - 1e-12))
    omega_c = float(np.clip(rng.uniform(), 1e-12, 1.0 - 1e-12))
    gamma_r = (rng.uniform(size=p) < omega_r).astype(np.int8)
    gamma_c = (rng.uniform(size=p) < omega_c).astype(np.int8)
    beta = np.where(gamma_r == 1, rng.normal(0.0, cfg.tau, size=p), 0.0)
    rho = np.where(gamma_c == 1, rng.uniform(size=p), 1.0)
    # inverse-gamma(shape, scale) = scale / gamma(shape, 1)
    sigma2_z = float(cfg.sigma2_scale / rng.gamma(cfg.sigma2_shape))
    lam = max(float(cfg.lambda_scale / rng.gamma(cfg.lambda_shape)), LAMBDA_FLOOR)
    ind = ModelIndicator(gamma_r, gamma_c)
    state = ParameterState(
        beta0=float(rng.normal(0.0, cfg.beta0_sd)),
        beta=beta,
        rho=rho,
        sigma2_z=sigma2_z,
        lam=lam,
        omega_r=omega_r,
        omega_c=omega_c,
    )
    return ind, state
