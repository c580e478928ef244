"""Metropolis-Hastings sampler over indicators and parameters.

Each iteration proposes in two stages: (1) flip a Binomial(2p, nu) number of
randomly chosen indicators, drawing fresh slab values on activation and
snapping to the point mass on deactivation, with a small symmetric jitter on
the untouched active coefficients and correlations; (2) an independent
Gaussian random walk on (beta0, log sigma2_z, log lambda, logit omega_r,
logit omega_c).

Activation values are drawn from their slabs (N(0, tau^2) for coefficients,
U(0, 1) for correlations), so in the acceptance ratio the proposal density
of a flipped coordinate cancels against its slab prior: flipped coefficients
contribute no density factor, only the Bernoulli mass moves. The jitter and
the random walk are symmetric (the walk after the Jacobian correction), so
nothing else enters the ratio.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalSingularityError
from .kernel import LikelihoodCache
from .model import (
    LAMBDA_FLOOR,
    ModelIndicator,
    ParameterState,
    PriorConfig,
    TransformedState,
    draw_from_prior,
    from_unconstrained,
    log_jacobian,
    log_prior,
    to_unconstrained,
    validate_consistent,
)

logger = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    """Tuning knobs for the chain.

    nu is the per-indicator flip rate; None resolves to 1/(2p) at run time.
    rw_sd holds the random-walk standard deviations for
    (beta0, log sigma2_z, log lambda, logit omega_r, logit omega_c).
    jitter_when_no_flip controls whether the stage-1 jitter is applied on
    iterations whose Binomial draw is k = 0.
    """

    n_iter: int = 20000
    burn_in: int = 2000
    nu: float | None = None
    jitter_sd_beta: float = 0.1
    jitter_sd_rho: float = 0.02
    rw_sd: tuple = (0.2, 0.2, 0.2, 0.3, 0.3)
    seed: int = 0
    thin: int = 1
    jitter_when_no_flip: bool = True
    init: str = "empty"
    slab_correction: bool = True

    def validate(self) -> None:
        if self.n_iter <= 0 or self.burn_in < 0 or self.burn_in >= self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.nu is not None and not (0.0 < self.nu <= 1.0):
            raise ValueError("nu must lie in (0, 1]")
        if self.jitter_sd_beta <= 0.0 or self.jitter_sd_rho <= 0.0:
            raise ValueError("jitter standard deviations must be positive")
        if len(self.rw_sd) != 5 or any(s <= 0.0 for s in self.rw_sd):
            raise ValueError("rw_sd must be 5 positive values")
        if self.init not in ("prior", "empty", "spatial"):
            raise ValueError("init must be one of 'prior', 'empty', 'spatial'")

    def to_dict(self) -> dict:
        return {
            "n_iter": self.n_iter,
            "burn_in": self.burn_in,
            "nu": self.nu,
            "jitter_sd_beta": self.jitter_sd_beta,
            "jitter_sd_rho": self.jitter_sd_rho,
            "rw_sd": list(self.rw_sd),
            "seed": self.seed,
            "thin": self.thin,
            "jitter_when_no_flip": self.jitter_when_no_flip,
            "init": self.init,
            "slab_correction": self.slab_correction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sampler config keys: {sorted(unknown)}")
        d = dict(d)
        if "rw_sd" in d:
            d["rw_sd"] = tuple(d["rw_sd"])
        return cls(**d)


@dataclass
class Chain:
    """Thinned post-burn-in draws in columnar form.

    accepted holds one flag per sampler iteration when the chain was produced
    in-process; a chain loaded from disk only has flags for the stored draws.
    """

    gamma_r: np.ndarray
    gamma_c: np.ndarray
    beta0: np.ndarray
    beta: np.ndarray
    rho: np.ndarray
    sigma2_z: np.ndarray
    lam: np.ndarray
    omega_r: np.ndarray
    omega_c: np.ndarray
    log_posts: np.ndarray
    iters: np.ndarray
    accepted: np.ndarray
    draw_accepted: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.draw_accepted is None:
            self.draw_accepted = np.zeros(len(self.beta0), dtype=bool)

    def __len__(self) -> int:
        return int(self.beta0.shape[0])

    @property
    def p(self) -> int:
        return int(self.gamma_r.shape[1])

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self.accepted) else float("nan")

    def indicator(self, i: int) -> ModelIndicator:
        return ModelIndicator(self.gamma_r[i], self.gamma_c[i])

    def state(self, i: int) -> ParameterState:
        return ParameterState(
            beta0=float(self.beta0[i]),
            beta=self.beta[i].copy(),
            rho=self.rho[i].copy(),
            sigma2_z=float(self.sigma2_z[i]),
            lam=float(self.lam[i]),
            omega_r=float(self.omega_r[i]),
            omega_c=float(self.omega_c[i]),
        )

    def draw(self, i: int) -> tuple[ModelIndicator, ParameterState]:
        return self.indicator(i), self.state(i)

    def model_key(self, i: int) -> tuple:
        return (
            tuple(int(g) for g in self.gamma_r[i]),
            tuple(int(g) for g in self.gamma_c[i]),
        )


def reflect_unit(x: np.ndarray) -> np.ndarray:
    """Fold values back into (0, 1) by reflection at both endpoints."""
    t = np.mod(x, 2.0)
    r = np.where(t > 1.0, 2.0 - t, t)
    # the fold lands exactly on an endpoint with probability zero; clamp so
    # the open-interval invariant survives even that
    return np.clip(r, 1e-12, 1.0 - 1e-12)


def propose(
    current: tuple[ModelIndicator, ParameterState],
    cfg: SamplerConfig,
    prior: PriorConfig,
    rng: np.random.Generator,
) -> tuple[ModelIndicator, ParameterState]:
    """One symmetric proposal from the current state.

    The slab scale for newly activated coefficients comes from the prior
    config (activation draws are N(0, tau^2) and U(0, 1)).
    """
    ind, state = current
    p = ind.p
    nu = cfg.nu if cfg.nu is not None else 1.0 / (2.0 * p)

    gamma_r = ind.gamma_r.copy()
    gamma_c = ind.gamma_c.copy()
    beta = state.beta.copy()
    rho = state.rho.copy()
    flipped_r = np.zeros(p, dtype=bool)
    flipped_c = np.zeros(p, dtype=bool)

    k = int(rng.binomial(2 * p, nu))
    if k > 0:
        chosen = rng.choice(2 * p, size=k, replace=False)
        for idx in chosen:
            if idx < p:
                j = int(idx)
                flipped_r[j] = True
                if gamma_r[j] == 0:
                    gamma_r[j] = 1
                    beta[j] = rng.normal(0.0, prior.tau)
                else:
                    gamma_r[j] = 0
                    beta[j] = 0.0
            else:
                j = int(idx - p)
                flipped_c[j] = True
                if gamma_c[j] == 0:
                    gamma_c[j] = 1
                    rho[j] = rng.uniform()
                else:
                    gamma_c[j] = 0
                    rho[j] = 1.0

    if k > 0 or cfg.jitter_when_no_flip:
        jit_r = (gamma_r == 1) & ~flipped_r
        if jit_r.any():
            beta[jit_r] += rng.normal(0.0, cfg.jitter_sd_beta, size=int(jit_r.sum()))
        jit_c = (gamma_c == 1) & ~flipped_c
        if jit_c.any():
            rho[jit_c] = reflect_unit(
                rho[jit_c] + rng.normal(0.0, cfg.jitter_sd_rho, size=int(jit_c.sum()))
            )

    # stage 2: independent Gaussian walk on the transformed block
    steps = rng.normal(0.0, 1.0, size=5) * np.asarray(cfg.rw_sd, dtype=float)
    t = to_unconstrained(state)
    t_new = TransformedState(
        beta0=state.beta0 + steps[0],
        beta=beta,
        rho=rho,
        mu=t.mu + steps[1],
        zeta=t.zeta + steps[2],
        psi_r=t.psi_r + steps[3],
        psi_c=t.psi_c + steps[4],
    )
    new_state = from_unconstrained(t_new)
    new_state.lam = max(new_state.lam, LAMBDA_FLOOR)
    return ModelIndicator(gamma_r, gamma_c), new_state


def _log_target(ind, state, like, prior, flat_likelihood=False) -> float:
    """log posterior + log Jacobian, the quantity the acceptance ratio compares."""
    lp = log_prior(ind, state, prior)
    if lp == -math.inf:
        return -math.inf
    ll = 0.0 if flat_likelihood else like.log_likelihood(state)
    return ll + lp + log_jacobian(to_unconstrained(state))


def proposal_log_correction(
    current: tuple[ModelIndicator, ParameterState],
    proposed: tuple[ModelIndicator, ParameterState],
    prior: PriorConfig,
) -> float:
    """Log proposal-density ratio q(cur|prop)/q(prop|cur) for flip moves.

    A coefficient activated this move was drawn from the N(0, tau^2) slab;
    the reverse move would redraw the currently active value. The ratio is
    therefore prod_{1->0} phi_tau(beta_j) / prod_{0->1} phi_tau(beta_j~),
    which exactly cancels the slab densities of flipped coordinates in the
    posterior ratio. Uniform slabs (the rho flips) contribute nothing, as do
    the symmetric jitter and random-walk components.
    """
    cur_ind, cur_state = current
    prop_ind, prop_state = proposed
    tau = prior.tau

    def _phi_log(x: float) -> float:
        return -0.5 * (math.log(2.0 * math.pi) + 2.0 * math.log(tau)) - 0.5 * (x / tau) ** 2

    corr = 0.0
    for j in range(cur_ind.p):
        if cur_ind.gamma_r[j] == 1 and prop_ind.gamma_r[j] == 0:
            corr += _phi_log(float(cur_state.beta[j]))
        elif cur_ind.gamma_r[j] == 0 and prop_ind.gamma_r[j] == 1:
            corr -= _phi_log(float(prop_state.beta[j]))
    return corr


def accept_probability(
    current: tuple[ModelIndicator, ParameterState],
    proposed: tuple[ModelIndicator, ParameterState],
    data,
    cfg: PriorConfig,
    slab_correction: bool = True,
) -> float:
    """Metropolis-Hastings acceptance probability between two chain states.

    min(1, exp(delta)) where delta is the posterior-plus-Jacobian log
    difference plus, by default, the flip proposal correction (zero unless
    the two states disagree on gamma_r). With slab_correction off the plain
    posterior ratio is used, treating the whole proposal as symmetric; that
    variant biases coefficient activations down by the slab density and is
    kept for compatibility with plain-ratio runs. A proposal whose
    correlation matrix cannot be factorized is auto-rejected (probability 0)
    with a logged warning.
    """
    like = LikelihoodCache(data)
    try:
        lt_prop = _log_target(proposed[0], proposed[1], like, cfg)
    except NumericalSingularityError as exc:
        logger.warning("auto-rejecting singular proposal: %s", exc)
        return 0.0
    lt_cur = _log_target(current[0], current[1], like, cfg)
    delta = lt_prop - lt_cur
    if slab_correction:
        delta += proposal_log_correction(current, proposed, cfg)
    if math.isnan(delta):
        logger.warning("auto-rejecting proposal with undefined posterior ratio")
        return 0.0
    return math.exp(delta) if delta < 0.0 else 1.0


def initial_state(
    data, prior: PriorConfig, cfg: SamplerConfig, rng: np.random.Generator
) -> tuple[ModelIndicator, ParameterState]:
    """Starting point of the chain per cfg.init.

    'prior' draws the full state from the prior; 'empty' starts at the
    intercept-plus-nugget model; 'spatial' starts at the all-spatial
    (ordinary-kriging-like) model with mid-range correlations.
    """
    p = data.X.shape[1]
    if cfg.init == "prior":
        return draw_from_prior(p, prior, rng)
    y = np.asarray(data.y, dtype=float)
    base = ParameterState(
        beta0=float(y.mean()),
        beta=np.zeros(p),
        rho=np.ones(p),
        sigma2_z=max(float(y.var()), 1e-6),
        lam=prior.lambda_scale / (prior.lambda_shape - 1.0)
        if prior.lambda_shape > 1.0
        else 0.1,
        omega_r=0.5,
        omega_c=0.5,
    )
    if cfg.init == "empty":
        return ModelIndicator(np.zeros(p, int), np.zeros(p, int)), base
    base.rho = np.full(p, 0.5)
    return ModelIndicator(np.zeros(p, int), np.ones(p, int)), base


def run_chain(
    data,
    prior: PriorConfig,
    cfg: SamplerConfig,
    flat_likelihood: bool = False,
    init: tuple[ModelIndicator, ParameterState] | None = None,
) -> Chain:
    """Run the sampler and return the thinned post-burn-in draws.

    Deterministic given cfg.seed. The initial state follows cfg.init unless
    an explicit state pair is supplied. flat_likelihood replaces the
    likelihood with a constant, which turns the chain into a prior sampler
    (used for validation).
    """
    cfg.validate()
    p = data.X.shape[1]
    rng = np.random.default_rng(cfg.seed)
    like = None if flat_likelihood else LikelihoodCache(data)
    if data.X.shape[0] == 0:
        raise ValueError("cannot sample from an empty dataset")

    if init is None:
        ind, state = initial_state(data, prior, cfg, rng)
    else:
        ind, state = init[0].copy(), init[1].copy()
        validate_consistent(ind, state)

    try:
        cur_target = _log_target(ind, state, like, prior, flat_likelihood)
    except NumericalSingularityError as exc:
        raise NumericalSingularityError(
            f"initial state is numerically singular: {exc}", jitters=exc.jitters
        ) from exc
    cur_logpost = cur_target - log_jacobian(to_unconstrained(state))

    n_stored = (cfg.n_iter - cfg.burn_in) // cfg.thin
    out = {
        "gamma_r": np.zeros((n_stored, p), dtype=np.int8),
        "gamma_c": np.zeros((n_stored, p), dtype=np.int8),
        "beta0": np.zeros(n_stored),
        "beta": np.zeros((n_stored, p)),
        "rho": np.zeros((n_stored, p)),
        "sigma2_z": np.zeros(n_stored),
        "lam": np.zeros(n_stored),
        "omega_r": np.zeros(n_stored),
        "omega_c": np.zeros(n_stored),
        "log_posts": np.zeros(n_stored),
        "iters": np.zeros(n_stored, dtype=np.int64),
        "draw_accepted": np.zeros(n_stored, dtype=bool),
    }
    accepted = np.zeros(cfg.n_iter, dtype=bool)
    n_singular = 0

    store_idx = 0
    for it in range(cfg.n_iter):
        prop_ind, prop_state = propose((ind, state), cfg, prior, rng)
        try:
            prop_target = _log_target(prop_ind, prop_state, like, prior, flat_likelihood)
        except NumericalSingularityError:
            n_singular += 1
            prop_target = -math.inf
        log_alpha = prop_target - cur_target
        if cfg.slab_correction:
            log_alpha += proposal_log_correction(
                (ind, state), (prop_ind, prop_state), prior
            )
        if math.isnan(log_alpha):
            log_alpha = -math.inf
        u = rng.uniform()
        if math.log(u) < log_alpha:
            ind, state = prop_ind, prop_state
            cur_target = prop_target
            cur_logpost = cur_target - log_jacobian(to_unconstrained(state))
            accepted[it] = True
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == cfg.thin - 1:
            out["gamma_r"][store_idx] = ind.gamma_r
            out["gamma_c"][store_idx] = ind.gamma_c
            out["beta0"][store_idx] = state.beta0
            out["beta"][store_idx] = state.beta
            out["rho"][store_idx] = state.rho
            out["sigma2_z"][store_idx] = state.sigma2_z
            out["lam"][store_idx] = state.lam
            out["omega_r"][store_idx] = state.omega_r
            out["omega_c"][store_idx] = state.omega_c
            out["log_posts"][store_idx] = cur_logpost
            out["iters"][store_idx] = it
            out["draw_accepted"][store_idx] = accepted[it]
            store_idx += 1

    if n_singular:
        logger.warning("auto-rejected %d singular proposals", n_singular)
    chain = Chain(accepted=accepted, **out)
    logger.info(
        "chain finished: %d stored draws, acceptance rate %.3f",
        len(chain),
        chain.acceptance_rate,
    )
    return chain


def save_chain(chain: Chain, path) -> None:
    """Write the chain as JSON-Lines, one draw per line.

    Field order is fixed so identical chains produce byte-identical files.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(chain)):
            record = {
                "iter": int(chain.iters[i]),
                "gamma_r": [int(g) for g in chain.gamma_r[i]],
                "gamma_c": [int(g) for g in chain.gamma_c[i]],
                "beta0": float(chain.beta0[i]),
                "beta": [float(b) for b in chain.beta[i]],
                "rho": [float(r) for r in chain.rho[i]],
                "sigma2_z": float(chain.sigma2_z[i]),
                "lambda": float(chain.lam[i]),
                "omega_r": float(chain.omega_r[i]),
                "omega_c": float(chain.omega_c[i]),
                "log_post": float(chain.log_posts[i]),
                "accepted": bool(chain.draw_accepted[i]),
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_chain(path) -> Chain:
    """Read a JSON-Lines chain file back into a Chain.

    Per-iteration acceptance flags for burn-in iterations are not in the
    file, so `accepted` covers only the stored draws.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise ValueError(f"{path}: chain file holds no draws")
    accepted = np.array([r["accepted"] for r in records], dtype=bool)
    return Chain(
        gamma_r=np.array([r["gamma_r"] for r in records], dtype=np.int8),
        gamma_c=np.array([r["gamma_c"] for r in records], dtype=np.int8),
        beta0=np.array([r["beta0"] for r in records]),
        beta=np.array([r["beta"] for r in records]),
        rho=np.array([r["rho"] for r in records]),
        sigma2_z=np.array([r["sigma2_z"] for r in records]),
        lam=np.array([r["lambda"] for r in records]),
        omega_r=np.array([r["omega_r"] for r in records]),
        omega_c=np.array([r["omega_c"] for r in records]),
        log_posts=np.array([r["log_post"] for r in records]),
        iters=np.array([r["iter"] for r in records], dtype=np.int64),
        accepted=accepted,
        draw_accepted=accepted.copy(),
    )
