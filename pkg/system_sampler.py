"""
system_sampler.py - Forward Sampler
===================================
Draws synthetic claim sets from the full generative process, together with the
ground truth that produced them.

Features:
✅ stick-breaking weights with a final remainder bucket
✅ group general reliability, object-specific reliability, true values
✅ group observation parameters from the regime Dirichlet priors
✅ i.i.d. Bernoulli claim sparsity
✅ planted variant with fixed group sizes and fixed reliability bits
✅ bit-reproducible for a given numpy Generator seed
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from helpers import MSSError
from system_claims import ClaimSet, ObjectDomain
from system_priors import Hyperparams, dirichlet_prior_counts


class SamplerError(MSSError):
    """Invalid sampler request."""


@dataclass(frozen=True)
class GemWeights:
    """Realized stick weights λ_1..λ_L and the mass left on the stick."""

    weights: np.ndarray
    remainder: float
    sticks: np.ndarray

    @property
    def bucket_probabilities(self) -> np.ndarray:
        """Weights followed by the remainder bucket; sums to one."""
        return np.append(self.weights, self.remainder)


@dataclass(frozen=True)
class SyntheticTruth:
    group_of_source: np.ndarray
    stick_weights: GemWeights
    group_general_reliability: np.ndarray
    object_specific_reliability: np.ndarray
    true_values: np.ndarray
    observation_params: np.ndarray  # (groups, M, Kmax), zero past each K_m
    source_ids: Tuple[str, ...]
    objects: Tuple[ObjectDomain, ...]

    def truth_labels(self) -> Dict[str, str]:
        return {o.object_id: o.labels[int(t)] for o, t in zip(self.objects, self.true_values)}

    def to_dict(self) -> Dict:
        return {
            'groups': {s: int(g) for s, g in zip(self.source_ids, self.group_of_source)},
            'stick_weights': self.stick_weights.weights,
            'stick_remainder': self.stick_weights.remainder,
            'group_general_reliability': self.group_general_reliability,
            'object_specific_reliability': {
                o.object_id: self.object_specific_reliability[:, m] for m, o in enumerate(self.objects)
            },
            'true_values': self.truth_labels(),
        }


# ==================== Stick Breaking ====================

def sample_gem_weights(kappa: float, max_groups: int, rng: np.random.Generator) -> GemWeights:
    """
    Break a unit stick max_groups times with Beta(1, kappa) fractions.

    Returns:
        GemWeights: λ_l = ρ_l ∏_{i<l} (1 - ρ_i), remainder = ∏_i (1 - ρ_i)
    """
    if not kappa > 0:
        raise SamplerError(f'kappa must be positive, got {kappa}')
    if max_groups < 1:
        raise SamplerError(f'max_groups must be >= 1, got {max_groups}')
    rho = rng.beta(1.0, kappa, size=max_groups)
    remaining = np.cumprod(1.0 - rho)
    weights = rho * np.concatenate([[1.0], remaining[:-1]])
    return GemWeights(weights=weights, remainder=float(remaining[-1]), sticks=rho)


# ==================== Dataset ====================

def _domain_sizes(domain_sizes: Union[int, Sequence[int]], M: int) -> np.ndarray:
    sizes = np.full(M, domain_sizes, dtype=np.int64) if np.isscalar(domain_sizes) else np.asarray(domain_sizes, dtype=np.int64)
    if sizes.shape != (M,):
        raise SamplerError(f'expected {M} domain sizes, got {sizes.size}')
    if np.any(sizes < 2):
        raise SamplerError('synthetic objects need domains of size >= 2')
    return sizes


def _check_shape(N: int, M: int, density: float):
    if N < 1 or M < 1:
        raise SamplerError(f'need at least one source and one object, got N={N}, M={M}')
    if not 0 < density <= 1:
        raise SamplerError(f'claim density must lie in (0, 1], got {density}')


def _draw_observations(
    h: Hyperparams,
    groups: np.ndarray,
    reliability: np.ndarray,
    sizes: np.ndarray,
    density: float,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, List[Tuple[int, int, int]]]:
    """True values, observation parameters and claims for given groups/reliabilities."""
    n_groups, M = reliability.shape
    N = groups.size
    k_max = int(sizes.max())

    true_values = rng.integers(0, sizes)
    pi = np.zeros((n_groups, M, k_max))
    for l in range(n_groups):
        for m in range(M):
            counts = dirichlet_prior_counts(h, int(reliability[l, m]), int(true_values[m]), int(sizes[m]))
            pi[l, m, :sizes[m]] = rng.dirichlet(counts)

    kept = rng.random((N, M)) < density
    ns, ms = np.nonzero(kept)
    probs = pi[groups[ns], ms]
    cdf = np.cumsum(probs, axis=1)
    draws = rng.random(ns.size)[:, None] * cdf[:, -1:]
    values = np.minimum((draws >= cdf).sum(axis=1), sizes[ms] - 1)
    claims = list(zip(ns.tolist(), ms.tolist(), values.tolist()))
    return true_values, pi, claims


def _build(
    N: int,
    sizes: np.ndarray,
    claims: List[Tuple[int, int, int]],
) -> Tuple[Tuple[str, ...], Tuple[ObjectDomain, ...], ClaimSet]:
    width_n, width_m = len(str(N - 1)), len(str(sizes.size - 1))
    source_ids = tuple(f's{n:0{width_n}d}' for n in range(N))
    objects = tuple(
        ObjectDomain(f'o{m:0{width_m}d}', tuple(f'v{k}' for k in range(int(K))))
        for m, K in enumerate(sizes)
    )
    return source_ids, objects, ClaimSet.from_indices(source_ids, objects, claims)


def sample_dataset(
    h: Hyperparams,
    N: int,
    M: int,
    domain_sizes: Union[int, Sequence[int]],
    density: float,
    rng: np.random.Generator,
) -> Tuple[ClaimSet, SyntheticTruth]:
    """
    Sample a claim set from the full generative process.

    Group memberships come from L realized sticks plus the remainder bucket
    (group index L), so there are L + 1 candidate groups.

    Returns:
        tuple: (ClaimSet, SyntheticTruth)
    """
    _check_shape(N, M, density)
    sizes = _domain_sizes(domain_sizes, M)

    gem = sample_gem_weights(h.kappa, h.truncation, rng)
    buckets = gem.bucket_probabilities
    groups = rng.choice(buckets.size, size=N, p=buckets / buckets.sum())
    general = rng.beta(h.b1, h.b0, size=buckets.size)
    reliability = (rng.random((buckets.size, M)) < general[:, None]).astype(np.int64)

    true_values, pi, claims = _draw_observations(h, groups, reliability, sizes, density, rng)
    source_ids, objects, cs = _build(N, sizes, claims)
    truth = SyntheticTruth(
        group_of_source=groups,
        stick_weights=gem,
        group_general_reliability=general,
        object_specific_reliability=reliability,
        true_values=true_values,
        observation_params=pi,
        source_ids=source_ids,
        objects=objects,
    )
    return cs, truth


def sample_planted_dataset(
    h: Hyperparams,
    group_sizes: Sequence[int],
    group_reliable: Sequence[bool],
    M: int,
    domain_sizes: Union[int, Sequence[int]],
    density: float,
    rng: np.random.Generator,
) -> Tuple[ClaimSet, SyntheticTruth]:
    """
    Sample claims for planted groups: group l holds group_sizes[l] consecutive
    sources and is reliable (or not) on every object.
    """
    if len(group_sizes) != len(group_reliable) or not group_sizes:
        raise SamplerError('group_sizes and group_reliable must be non-empty and equally long')
    if any(size < 1 for size in group_sizes):
        raise SamplerError('every planted group needs at least one source')
    N = int(sum(group_sizes))
    _check_shape(N, M, density)
    sizes = _domain_sizes(domain_sizes, M)

    groups = np.repeat(np.arange(len(group_sizes)), group_sizes)
    general = np.array([1.0 if flag else 0.0 for flag in group_reliable])
    reliability = np.repeat(general.astype(np.int64)[:, None], M, axis=1)
    weights = np.asarray(group_sizes, dtype=float) / N
    gem = GemWeights(weights=weights, remainder=0.0, sticks=np.full(weights.size, np.nan))

    true_values, pi, claims = _draw_observations(h, groups, reliability, sizes, density, rng)
    source_ids, objects, cs = _build(N, sizes, claims)
    truth = SyntheticTruth(
        group_of_source=groups,
        stick_weights=gem,
        group_general_reliability=general,
        object_specific_reliability=reliability,
        true_values=true_values,
        observation_params=pi,
        source_ids=source_ids,
        objects=objects,
    )
    return cs, truth
