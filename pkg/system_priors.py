"""
system_priors.py - Hyperparameters and Group Observation Priors
===============================================================
Hyperparameter container plus the Dirichlet prior a latent group uses to
generate its claims on an object, in reliable, careless and malicious regimes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np
from scipy.special import digamma, gammaln

from helpers import MSSError

RELIABLE = 1
UNRELIABLE = 0


class HyperparamError(MSSError):
    """Invalid hyperparameter values."""


@dataclass(frozen=True)
class Hyperparams:
    """
    Model hyperparameters.

    kappa: stick-breaking concentration (larger = sources less dependent)
    b1, b0: Beta soft counts on group general reliability
    eta_*/theta_*: Dirichlet soft counts for the true / false values, for reliable
        (r=1) and unreliable (r=0) object-specific reliability
    truncation: number of explicitly tracked groups L
    """

    kappa: float = 5.0
    b1: float = 2.0
    b0: float = 2.0
    eta_reliable: float = 5.0
    theta_reliable: float = 1.0
    eta_unreliable: float = 1.0
    theta_unreliable: float = 1.0
    truncation: int = 20

    def __post_init__(self):
        positive = ('kappa', 'b1', 'b0', 'eta_reliable', 'theta_reliable', 'eta_unreliable', 'theta_unreliable')
        for name in positive:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise HyperparamError(f'{name} must be a positive finite number, got {value}')
        if int(self.truncation) != self.truncation or self.truncation < 2:
            raise HyperparamError(f'truncation must be an integer >= 2, got {self.truncation}')
        object.__setattr__(self, 'truncation', int(self.truncation))

    def check_regimes(self) -> 'Hyperparams':
        """
        Enforce the regime ordering: reliable groups favour the true value,
        unreliable groups are careless (equal counts) or malicious.

        Not run at construction: all-unit soft counts remain constructible.
        """
        if self.eta_reliable <= self.theta_reliable:
            raise HyperparamError('reliable regime needs eta_reliable > theta_reliable')
        if self.eta_unreliable > self.theta_unreliable:
            raise HyperparamError('unreliable regime needs eta_unreliable <= theta_unreliable (careless or malicious)')
        return self

    @property
    def valid_regimes(self) -> bool:
        return self.eta_reliable > self.theta_reliable and self.eta_unreliable <= self.theta_unreliable

    # ==================== Constructors ====================

    @classmethod
    def careless(cls, soft_count: float = 1.0, **kwargs) -> 'Hyperparams':
        return cls(eta_unreliable=soft_count, theta_unreliable=soft_count, **kwargs)

    @classmethod
    def malicious(cls, eta: float = 1.0, theta: float = 5.0, **kwargs) -> 'Hyperparams':
        if theta <= eta:
            raise HyperparamError('malicious regime needs theta_unreliable > eta_unreliable')
        return cls(eta_unreliable=eta, theta_unreliable=theta, **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'Hyperparams':
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise HyperparamError(f'unknown hyperparameter(s): {", ".join(sorted(unknown))}')
        return cls(**dict(data))

    def replace(self, **changes) -> 'Hyperparams':
        return dataclasses.replace(self, **changes)

    def with_truncation(self, num_sources: int) -> 'Hyperparams':
        """Clamp L to at most max(N, 2)."""
        limit = max(int(num_sources), 2)
        return self if self.truncation <= limit else self.replace(truncation=limit)

    # ==================== Views ====================

    @property
    def unreliable_mode(self) -> str:
        return 'careless' if self.eta_unreliable == self.theta_unreliable else 'malicious'

    @property
    def prior_reliability(self) -> float:
        """E[u] under Beta(b1, b0)."""
        return self.b1 / (self.b1 + self.b0)

    def soft_counts(self, r: int) -> Tuple[float, float]:
        """(eta, theta) for reliability bit r."""
        if r == RELIABLE:
            return self.eta_reliable, self.theta_reliable
        if r == UNRELIABLE:
            return self.eta_unreliable, self.theta_unreliable
        raise HyperparamError(f'reliability bit must be 0 or 1, got {r}')

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def sort_key(self) -> Tuple:
        return tuple(getattr(self, f.name) for f in dataclasses.fields(self))

    def label(self) -> str:
        return (
            f'κ={self.kappa:g} b=({self.b1:g},{self.b0:g}) '
            f'r1=({self.eta_reliable:g},{self.theta_reliable:g}) '
            f'r0=({self.eta_unreliable:g},{self.theta_unreliable:g}) L={self.truncation}'
        )


DEFAULT_HYPERPARAMS = Hyperparams()


# ==================== Prior Operations ====================

def dirichlet_prior_counts(h: Hyperparams, r: int, t: int, K: int) -> np.ndarray:
    """
    Soft counts of the group observation Dirichlet: eta at the true value t,
    theta everywhere else.
    """
    if K < 1:
        raise HyperparamError(f'domain size must be >= 1, got {K}')
    if not 0 <= t < K:
        raise HyperparamError(f'true value index {t} outside domain of size {K}')
    eta, theta = h.soft_counts(r)
    counts = np.full(K, theta, dtype=float)
    counts[t] = eta
    return counts


def pair_coassignment_probability(kappa: float) -> float:
    """Prior probability that two sources share a group: 1 / (1 + kappa)."""
    if not kappa > 0:
        raise HyperparamError(f'kappa must be positive, got {kappa}')
    return 1.0 / (1.0 + kappa)


def dirichlet_log_normalizer(h: Hyperparams, r: int, K: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
    """ln Γ(η + (K-1)θ) - ln Γ(η) - (K-1) ln Γ(θ); independent of the true value."""
    eta, theta = h.soft_counts(r)
    K = np.asarray(K, dtype=float)
    return gammaln(eta + (K - 1) * theta) - gammaln(eta) - (K - 1) * gammaln(theta)


def expected_log_pi_given(h: Hyperparams, r: int, K: Union[int, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    E[ln π_k | r, t] under the prior Dirichlet.

    Returns:
        tuple: (value at the true entry, value at any false entry), shaped like K
    """
    eta, theta = h.soft_counts(r)
    K = np.asarray(K, dtype=float)
    total = digamma(eta + (K - 1) * theta)
    return digamma(eta) - total, digamma(theta) - total
