"""
system_inference.py - Mean-Field Variational Inference
======================================================
Coordinate ascent over the factorized posterior of group assignments, group
observation parameters, object-specific and general group reliability, true
values and stick fractions, with a truncated stick-breaking prior.

Layout of the state (L = truncation, Kmax = largest domain):
    phi               (N, L)        q(g_n = l) for the explicit groups
    tail_mass         (N,)          q(g_n > L); spread geometrically over the tail
    alpha             (L, M, Kmax)  Dirichlet parameters; padded slots hold 1.0
    beta              (L, 2)        Beta parameters of u_l
    tau               (L, M)        q(r_lm = 1)
    nu                (M, Kmax)     q(t_m = k); zero on padded slots
    stick_posteriors  (L, 2)        Beta parameters of the stick fractions

Groups past L keep their priors; their observation expectations are the prior
predictive ones under q(t_m) and p(r) = Bern(b1 / (b1 + b0)).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.special import betaln, digamma, gammaln, logsumexp, xlogy

from helpers import MSSError, entity_rng
from logger import mss_logger
from system_claims import ClaimSet
from system_priors import RELIABLE, UNRELIABLE, Hyperparams, dirichlet_log_normalizer, expected_log_pi_given

DEFAULT_SEED = 20120626
ALPHA_FLOOR = 1e-6
MONOTONICITY_SLACK = 1e-8


class NumericalError(MSSError):
    """Non-finite variational objective."""

    exit_code = 3

    def __init__(self, message: str, terms: Optional[Dict[str, float]] = None):
        self.terms = dict(terms or {})
        super().__init__(message)


# ==================== Types ====================

@dataclass
class VariationalState:
    phi: np.ndarray
    tail_mass: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    stick_posteriors: np.ndarray
    hyperparams: Hyperparams
    mask: np.ndarray

    @property
    def truncation(self) -> int:
        return self.stick_posteriors.shape[0]

    def copy(self) -> 'VariationalState':
        return VariationalState(
            phi=self.phi.copy(),
            tail_mass=self.tail_mass.copy(),
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            tau=self.tau.copy(),
            nu=self.nu.copy(),
            stick_posteriors=self.stick_posteriors.copy(),
            hyperparams=self.hyperparams,
            mask=self.mask,
        )


@dataclass(frozen=True)
class FitOptions:
    max_sweeps: int = 200
    tol: float = 1e-6
    seed: int = DEFAULT_SEED
    quiet: bool = False


@dataclass
class FitResult:
    state: VariationalState
    elbo_trace: List[float]
    iterations: int
    converged: bool
    initial_elbo: float
    elapsed_seconds: float = field(default=0.0, compare=False)

    @property
    def elbo(self) -> float:
        return self.elbo_trace[-1] if self.elbo_trace else self.initial_elbo


# ==================== Expectations ====================

def expected_log_pi(alpha: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """E ln π_k = ψ(α_k) - ψ(Σ α), zero on padded slots."""
    total = np.where(mask, alpha, 0.0).sum(axis=-1)
    return np.where(mask, digamma(alpha) - digamma(total)[..., None], 0.0)


def expected_log_u(beta: np.ndarray):
    """(E ln u, E ln(1-u)) per group."""
    total = digamma(beta.sum(axis=1))
    return digamma(beta[:, 0]) - total, digamma(beta[:, 1]) - total


def expected_log_assignment(sticks: np.ndarray):
    """
    E ln p(g = l | ρ) for the explicit groups, plus Σ_{i<=L} E ln(1 - ρ_i).
    """
    total = digamma(sticks.sum(axis=1))
    log_rho = digamma(sticks[:, 0]) - total
    log_rest = digamma(sticks[:, 1]) - total
    before = np.concatenate([[0.0], np.cumsum(log_rest)])
    return log_rho + before[:-1], before[-1]


def prior_stick_expectations(kappa: float):
    """(E ln ρ, E ln(1-ρ)) under Beta(1, kappa); the second equals -1/kappa."""
    return digamma(1.0) - digamma(1.0 + kappa), digamma(kappa) - digamma(1.0 + kappa)


def tail_geometric_log_denominator(kappa: float) -> float:
    """ln(1 - exp(E ln(1-ρ))) for the closed-form sum over groups past L."""
    _, log_rest = prior_stick_expectations(kappa)
    return float(np.log(-np.expm1(log_rest)))


def _tail_claim_terms(state: VariationalState, cs: ClaimSet, h: Hyperparams) -> np.ndarray:
    """Prior-predictive E ln π_{y} for each claim, as seen by a tail group."""
    sizes = cs.domain_sizes[cs.claim_objects]
    p_reliable = h.prior_reliability
    terms = np.zeros(cs.num_claims)
    for r, weight in ((RELIABLE, p_reliable), (UNRELIABLE, 1.0 - p_reliable)):
        at_true, at_false = expected_log_pi_given(h, r, sizes)
        terms += weight * (at_false + (at_true - at_false) * state.nu[cs.claim_objects, cs.claim_values])
    return terms


def _tail_truth_gain(h: Hyperparams) -> float:
    """Σ_r p(r) (ψ(η_r) - ψ(θ_r)): tail log-evidence gain per claim agreeing with t."""
    p_reliable = h.prior_reliability
    gain = 0.0
    for r, weight in ((RELIABLE, p_reliable), (UNRELIABLE, 1.0 - p_reliable)):
        eta, theta = h.soft_counts(r)
        gain += weight * (digamma(eta) - digamma(theta))
    return float(gain)


def _beta_kl(a: np.ndarray, b: np.ndarray, a0: float, b0: float) -> np.ndarray:
    """KL(Beta(a, b) || Beta(a0, b0)), elementwise."""
    return (
        betaln(a0, b0) - betaln(a, b)
        + (a - a0) * digamma(a)
        + (b - b0) * digamma(b)
        + (a0 - a + b0 - b) * digamma(a + b)
    )


# ==================== Initialization ====================

def init_state(cs: ClaimSet, h: Hyperparams, seed: int = DEFAULT_SEED) -> VariationalState:
    """
    Starting point of coordinate ascent.

    phi rows are Dirichlet(1, ..., 1) draws from a stream keyed by the source id,
    nu is the +1 smoothed claim histogram, tau and beta sit at the prior, sticks
    at Beta(1, kappa), and alpha follows from one Step 1 update.
    """
    L = h.truncation
    M, k_max = cs.num_objects, cs.max_domain
    mask = cs.value_mask

    phi = np.empty((cs.num_sources, L))
    for n, source_id in enumerate(cs.source_ids):
        phi[n] = entity_rng(seed, 'phi', source_id).dirichlet(np.ones(L))

    histogram = np.zeros((M, k_max))
    np.add.at(histogram, (cs.claim_objects, cs.claim_values), 1.0)
    smoothed = np.where(mask, histogram + 1.0, 0.0)
    nu = smoothed / smoothed.sum(axis=1, keepdims=True) if M else smoothed

    state = VariationalState(
        phi=phi,
        tail_mass=np.zeros(cs.num_sources),
        alpha=np.ones((L, M, k_max)),
        beta=np.tile([h.b1, h.b0], (L, 1)).astype(float),
        tau=np.full((L, M), h.prior_reliability),
        nu=nu,
        stick_posteriors=np.tile([1.0, h.kappa], (L, 1)).astype(float),
        hyperparams=h,
        mask=mask,
    )
    update_alpha(state, cs, h)
    return state


# ==================== Coordinate Updates ====================

def update_alpha(state: VariationalState, cs: ClaimSet, h: Hyperparams) -> np.ndarray:
    """Step 1: Dirichlet factors of the group observation parameters."""
    L = state.truncation
    M, k_max = state.nu.shape

    counts = np.zeros((M, k_max, L))
    np.add.at(counts, (cs.claim_objects, cs.claim_values), state.phi[cs.claim_sources])
    alpha = counts.transpose(2, 0, 1) + 1.0

    for r, weight in ((RELIABLE, state.tau), (UNRELIABLE, 1.0 - state.tau)):
        eta, theta = h.soft_counts(r)
        prior = (eta - 1.0) * state.nu + (theta - 1.0) * (1.0 - state.nu)
        alpha += weight[..., None] * prior[None]

    alpha = np.where(state.mask[None], alpha, 1.0)
    if np.any(alpha <= 0):
        mss_logger.warning(f'{int((alpha <= 0).sum())} Dirichlet parameters clamped to {ALPHA_FLOOR}')
        alpha = np.maximum(alpha, ALPHA_FLOOR)
    state.alpha = alpha
    return alpha


def update_beta(state: VariationalState, h: Hyperparams) -> np.ndarray:
    """Step 2: Beta factors of group general reliability."""
    beta = np.column_stack([
        state.tau.sum(axis=1) + h.b1,
        (1.0 - state.tau).sum(axis=1) + h.b0,
    ])
    state.beta = beta
    return beta


def update_tau(state: VariationalState, cs: ClaimSet, h: Hyperparams) -> np.ndarray:
    """Step 3: object-specific reliability q(r_lm = 1)."""
    e_log_pi = expected_log_pi(state.alpha, state.mask)
    total = e_log_pi.sum(axis=-1)
    at_truth = (state.nu[None] * e_log_pi).sum(axis=-1)
    e_log_u, e_log_not_u = expected_log_u(state.beta)

    scores = []
    for r, e_log_prior in ((RELIABLE, e_log_u), (UNRELIABLE, e_log_not_u)):
        eta, theta = h.soft_counts(r)
        score = (eta - theta) * at_truth + (theta - 1.0) * total
        score = score + dirichlet_log_normalizer(h, r, cs.domain_sizes)[None, :]
        scores.append(score + e_log_prior[:, None])

    stacked = np.stack(scores)
    tau = np.exp(stacked[0] - logsumexp(stacked, axis=0))
    state.tau = tau
    return tau


def update_nu(state: VariationalState, cs: ClaimSet, h: Hyperparams) -> np.ndarray:
    """Step 4: true-value posteriors, including the tail groups' prior-predictive evidence."""
    e_log_pi = expected_log_pi(state.alpha, state.mask)
    weight = (
        state.tau * (h.eta_reliable - h.theta_reliable)
        + (1.0 - state.tau) * (h.eta_unreliable - h.theta_unreliable)
    )
    logits = (weight[..., None] * e_log_pi).sum(axis=0)

    tail_votes = np.zeros_like(logits)
    np.add.at(tail_votes, (cs.claim_objects, cs.claim_values), state.tail_mass[cs.claim_sources])
    logits = logits + _tail_truth_gain(h) * tail_votes

    logits = np.where(state.mask, logits, -np.inf)
    nu = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    state.nu = np.where(state.mask, nu, 0.0)
    return state.nu


def update_phi(state: VariationalState, cs: ClaimSet, h: Hyperparams) -> np.ndarray:
    """Step 5: group responsibilities over the L explicit groups and the tail."""
    N = cs.num_sources
    e_assign, log_rest_total = expected_log_assignment(state.stick_posteriors)
    e_log_pi = expected_log_pi(state.alpha, state.mask)

    order = cs.row_order
    src = cs.claim_sources[order]
    explicit = e_log_pi[:, cs.claim_objects[order], cs.claim_values[order]].T
    scores = np.tile(e_assign, (N, 1))
    np.add.at(scores, src, explicit)

    prior_log_rho, _ = prior_stick_expectations(h.kappa)
    tail_terms = _tail_claim_terms(state, cs, h)[order]
    tail_score = prior_log_rho + log_rest_total + np.bincount(src, weights=tail_terms, minlength=N)
    tail_score = tail_score - tail_geometric_log_denominator(h.kappa)

    normalizer = logsumexp(np.column_stack([scores, tail_score]), axis=1)
    state.phi = np.exp(scores - normalizer[:, None])
    state.tail_mass = np.exp(tail_score - normalizer)
    return state.phi


def update_sticks(state: VariationalState, h: Optional[Hyperparams] = None) -> np.ndarray:
    """Step 6: stick-fraction posteriors; mass past group i includes the tail."""
    h = h or state.hyperparams
    mass = state.phi.sum(axis=0)
    after = np.concatenate([np.cumsum(mass[::-1])[::-1][1:], [0.0]]) + state.tail_mass.sum()
    sticks = np.column_stack([1.0 + mass, h.kappa + after])
    state.stick_posteriors = sticks
    return sticks


STEPS = (
    ('alpha', lambda s, cs, h: update_alpha(s, cs, h)),
    ('beta', lambda s, cs, h: update_beta(s, h)),
    ('tau', lambda s, cs, h: update_tau(s, cs, h)),
    ('nu', lambda s, cs, h: update_nu(s, cs, h)),
    ('phi', lambda s, cs, h: update_phi(s, cs, h)),
    ('sticks', lambda s, cs, h: update_sticks(s, h)),
)


def sweep(
    state: VariationalState,
    cs: ClaimSet,
    h: Hyperparams,
    on_step: Optional[Callable[[str, VariationalState], None]] = None,
) -> VariationalState:
    """One pass of Steps 1 to 6, in order."""
    for name, step in STEPS:
        step(state, cs, h)
        if on_step is not None:
            on_step(name, state)
    return state


# ==================== Objective ====================

def elbo_terms(state: VariationalState, cs: ClaimSet, h: Hyperparams) -> Dict[str, float]:
    """Every component of the evidence lower bound (expected log joint + entropy)."""
    mask = state.mask
    sizes = cs.domain_sizes
    e_log_pi = expected_log_pi(state.alpha, mask)
    e_log_u, e_log_not_u = expected_log_u(state.beta)
    e_assign, log_rest_total = expected_log_assignment(state.stick_posteriors)
    prior_log_rho, _ = prior_stick_expectations(h.kappa)

    terms: Dict[str, float] = {}

    sticks = state.stick_posteriors
    terms['sticks'] = float(-_beta_kl(sticks[:, 0], sticks[:, 1], 1.0, h.kappa).sum())

    tail = state.tail_mass
    tail_level = prior_log_rho + log_rest_total - tail_geometric_log_denominator(h.kappa)
    terms['assignments'] = float(
        (state.phi * e_assign[None]).sum() - xlogy(state.phi, state.phi).sum()
        + (tail * tail_level).sum() - xlogy(tail, tail).sum()
    )

    explicit = (state.phi[cs.claim_sources] * e_log_pi[:, cs.claim_objects, cs.claim_values].T).sum()
    tail_claims = (tail[cs.claim_sources] * _tail_claim_terms(state, cs, h)).sum()
    terms['likelihood'] = float(explicit + tail_claims)

    total = e_log_pi.sum(axis=-1)
    at_truth = (state.nu[None] * e_log_pi).sum(axis=-1)
    expected_prior = np.zeros_like(state.tau)
    for r, weight in ((RELIABLE, state.tau), (UNRELIABLE, 1.0 - state.tau)):
        eta, theta = h.soft_counts(r)
        inner = dirichlet_log_normalizer(h, r, sizes)[None, :] + (eta - theta) * at_truth + (theta - 1.0) * total
        expected_prior += weight * inner
    log_q = (
        dirichlet_log_norm(state.alpha, mask)
        + (np.where(mask[None], state.alpha - 1.0, 0.0) * e_log_pi).sum(axis=-1)
    )
    terms['observation_params'] = float((expected_prior - log_q).sum())

    tau = state.tau
    terms['reliability'] = float(
        (tau * e_log_u[:, None] + (1.0 - tau) * e_log_not_u[:, None]).sum()
        - xlogy(tau, tau).sum() - xlogy(1.0 - tau, 1.0 - tau).sum()
    )

    beta = state.beta
    terms['general_reliability'] = float(-_beta_kl(beta[:, 0], beta[:, 1], h.b1, h.b0).sum())

    terms['true_values'] = float(-np.log(sizes).sum() - xlogy(state.nu, state.nu).sum())
    return terms


def dirichlet_log_norm(alpha: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """ln Γ(Σ α) - Σ ln Γ(α_k) over the valid slots."""
    valid = mask[None]
    return gammaln(np.where(valid, alpha, 0.0).sum(axis=-1)) - np.where(valid, gammaln(alpha), 0.0).sum(axis=-1)


def compute_elbo(state: VariationalState, cs: ClaimSet, h: Hyperparams) -> float:
    terms = elbo_terms(state, cs, h)
    bad = [name for name, value in terms.items() if not np.isfinite(value)]
    if bad:
        raise NumericalError(f'non-finite ELBO term(s): {", ".join(bad)}', terms)
    return float(sum(terms.values()))


# ==================== Driver ====================

def fit(cs: ClaimSet, h: Hyperparams, opts: FitOptions = FitOptions()) -> FitResult:
    """
    Run sweeps until the relative ELBO change |Δ| / (|ELBO| + 1) drops below
    opts.tol or opts.max_sweeps is reached.
    """
    h = h.with_truncation(cs.num_sources)
    if not opts.quiet:
        mss_logger.fit_started(cs.num_sources, cs.num_objects, cs.num_claims, h.truncation)

    started = time.perf_counter()
    state = init_state(cs, h, opts.seed)
    initial = previous = compute_elbo(state, cs, h)
    trace: List[float] = []
    converged = False

    for number in range(1, opts.max_sweeps + 1):
        sweep(state, cs, h)
        elbo = compute_elbo(state, cs, h)
        trace.append(elbo)
        delta = elbo - previous
        if opts.quiet:
            mss_logger.debug(f'sweep {number} | ELBO={elbo:.6f} | Δ={delta:+.3e}')
        else:
            mss_logger.sweep_progress(number, elbo, delta)
        if delta < -MONOTONICITY_SLACK * max(1.0, abs(elbo)):
            mss_logger.warning(f'ELBO decreased by {-delta:.3e} at sweep {number}')
        if abs(delta) / (abs(elbo) + 1.0) < opts.tol:
            converged = True
            break
        previous = elbo

    elapsed = time.perf_counter() - started
    if not opts.quiet:
        mss_logger.fit_finished(len(trace), converged, trace[-1] if trace else initial, elapsed)
    mss_logger.performance('fit', elapsed * 1000)
    return FitResult(
        state=state,
        elbo_trace=trace,
        iterations=len(trace),
        converged=converged,
        initial_elbo=initial,
        elapsed_seconds=elapsed,
    )
