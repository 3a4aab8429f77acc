"""
system_reporting.py - Truths, Source Ranking and Evaluation
===========================================================
Reads a converged variational state and turns it into answers:

✅ MAP true value per object with its posterior confidence
✅ source reliability = Σ_l q(g_n = l) E[u_l] (+ tail at the prior mean)
✅ source ranking and group composition
✅ plurality-voting baseline
✅ accuracy / per-label precision and recall against a ground-truth subset
✅ per-source claim accuracy for checking the ranking
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from helpers import MSSError
from system_claims import ClaimSet
from system_inference import FitResult, VariationalState


class EvaluationError(MSSError):
    """Evaluation inputs do not overlap or are empty."""


# ==================== Types ====================

@dataclass(frozen=True)
class ObjectTruth:
    object_id: str
    value_index: int
    label: str
    confidence: float
    posterior: Tuple[float, ...]


@dataclass(frozen=True)
class SourceReliability:
    source_id: str
    score: float
    rank: int
    map_group: int


@dataclass(frozen=True)
class GroupSummary:
    index: int
    expected_reliability: float
    effective_size: float
    members: Tuple[str, ...]


@dataclass(frozen=True)
class VoteResult:
    object_id: str
    value_index: int
    label: str
    votes: int
    confidence: float
    claimed: bool


@dataclass
class InferenceReport:
    objects: List[ObjectTruth]
    sources: List[SourceReliability]
    groups: List[GroupSummary]
    hyperparams: Dict
    elbo: float
    iterations: int
    converged: bool
    tail_mass: Dict[str, float] = field(default_factory=dict)

    def predictions(self) -> Dict[str, str]:
        return {o.object_id: o.label for o in self.objects}

    def ranked_sources(self) -> List[SourceReliability]:
        return sorted(self.sources, key=lambda s: s.rank)

    def to_dict(self) -> Dict:
        return {
            'hyperparams': self.hyperparams,
            'elbo': self.elbo,
            'iterations': self.iterations,
            'converged': self.converged,
            'source_index': {s.source_id: n for n, s in enumerate(self.sources)},
            'object_index': {o.object_id: m for m, o in enumerate(self.objects)},
            'objects': [
                {
                    'object_id': o.object_id,
                    'value': o.label,
                    'value_index': o.value_index,
                    'confidence': o.confidence,
                    'posterior': list(o.posterior),
                }
                for o in self.objects
            ],
            'sources': [
                {
                    'source_id': s.source_id,
                    'score': s.score,
                    'rank': s.rank,
                    'map_group': s.map_group,
                    'tail_mass': self.tail_mass.get(s.source_id, 0.0),
                }
                for s in self.sources
            ],
            'groups': [
                {
                    'index': g.index,
                    'expected_reliability': g.expected_reliability,
                    'effective_size': g.effective_size,
                    'members': list(g.members),
                }
                for g in self.groups
            ],
        }


@dataclass(frozen=True)
class EvaluationResult:
    accuracy: float
    covered: int
    precision: Dict[str, float]
    recall: Dict[str, float]
    positive_label: Optional[str] = None

    @property
    def positive_precision(self) -> Optional[float]:
        return self.precision.get(self.positive_label) if self.positive_label is not None else None

    @property
    def positive_recall(self) -> Optional[float]:
        return self.recall.get(self.positive_label) if self.positive_label is not None else None

    def to_dict(self) -> Dict:
        data = {
            'accuracy': self.accuracy,
            'covered': self.covered,
            'precision': self.precision,
            'recall': self.recall,
        }
        if self.positive_label is not None:
            data['positive_label'] = self.positive_label
            data['positive_precision'] = self.positive_precision
            data['positive_recall'] = self.positive_recall
        return data


# ==================== Reliability ====================

def group_expected_reliability(state: VariationalState) -> np.ndarray:
    """E[u_l] = β_l1 / (β_l1 + β_l2)."""
    return state.beta[:, 0] / state.beta.sum(axis=1)


def source_reliability(state: VariationalState) -> np.ndarray:
    """Expected reliability of each source's groups; tail mass scored at b1/(b1+b0)."""
    scores = state.phi @ group_expected_reliability(state)
    scores = scores + state.tail_mass * state.hyperparams.prior_reliability
    return np.clip(scores, 0.0, 1.0)


def rank_sources(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, highest score first, ties by source index."""
    order = np.argsort(-np.asarray(scores), kind='stable')
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


def map_groups(state: VariationalState) -> np.ndarray:
    if state.phi.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(state.phi, axis=1)


def group_composition(state: VariationalState, cs: ClaimSet) -> List[GroupSummary]:
    assigned = map_groups(state)
    expected = group_expected_reliability(state)
    sizes = state.phi.sum(axis=0)
    return [
        GroupSummary(
            index=l,
            expected_reliability=float(expected[l]),
            effective_size=float(sizes[l]),
            members=tuple(cs.source_ids[n] for n in np.flatnonzero(assigned == l)),
        )
        for l in range(state.truncation)
    ]


# ==================== Truths ====================

def extract_truths(state: VariationalState, cs: ClaimSet) -> List[ObjectTruth]:
    """MAP value per object; np.argmax keeps the smallest index on ties."""
    truths = []
    for m, domain in enumerate(cs.objects):
        posterior = state.nu[m, :domain.size]
        k = int(np.argmax(posterior))
        truths.append(ObjectTruth(
            object_id=domain.object_id,
            value_index=k,
            label=domain.labels[k],
            confidence=float(posterior[k]),
            posterior=tuple(float(p) for p in posterior),
        ))
    return truths


def voting_baseline(cs: ClaimSet) -> List[VoteResult]:
    """Plurality of claimed values per object, ties to the smallest value index."""
    counts = np.zeros((cs.num_objects, cs.max_domain), dtype=np.int64)
    np.add.at(counts, (cs.claim_objects, cs.claim_values), 1)
    results = []
    for m, domain in enumerate(cs.objects):
        row = counts[m, :domain.size]
        total = int(row.sum())
        k = int(np.argmax(row))
        results.append(VoteResult(
            object_id=domain.object_id,
            value_index=k,
            label=domain.labels[k],
            votes=int(row[k]),
            confidence=row[k] / total if total else 0.0,
            claimed=total > 0,
        ))
    return results


def build_report(result: FitResult, cs: ClaimSet) -> InferenceReport:
    state = result.state
    scores = source_reliability(state)
    ranks = rank_sources(scores)
    assigned = map_groups(state)
    sources = [
        SourceReliability(source_id=sid, score=float(scores[n]), rank=int(ranks[n]), map_group=int(assigned[n]))
        for n, sid in enumerate(cs.source_ids)
    ]
    return InferenceReport(
        objects=extract_truths(state, cs),
        sources=sources,
        groups=group_composition(state, cs),
        hyperparams=state.hyperparams.to_dict(),
        elbo=result.elbo,
        iterations=result.iterations,
        converged=result.converged,
        tail_mass={sid: float(state.tail_mass[n]) for n, sid in enumerate(cs.source_ids)},
    )


def top_bottom_sources(report: InferenceReport, k: int = 10) -> Tuple[List[SourceReliability], List[SourceReliability]]:
    ranked = report.ranked_sources()
    return ranked[:k], ranked[-k:][::-1] if k else []


# ==================== Evaluation ====================

def evaluate(
    predictions: Mapping[str, str],
    truth: Mapping[str, str],
    positive_label: Optional[str] = None,
) -> EvaluationResult:
    """
    Compare predicted labels with a ground-truth subset.

    Args:
        predictions: object_id -> predicted label
        truth: object_id -> true label (may cover only some objects)
        positive_label: label whose precision/recall is reported for binary domains

    Returns:
        EvaluationResult: accuracy over covered objects plus per-label precision/recall
    """
    if not truth:
        raise EvaluationError('ground truth is empty')
    covered = [object_id for object_id in truth if object_id in predictions]
    if not covered:
        raise EvaluationError('no predicted object has a ground-truth label')

    pairs = [(predictions[o], truth[o]) for o in covered]
    correct = sum(1 for p, t in pairs if p == t)
    labels = sorted({label for pair in pairs for label in pair})

    precision, recall = {}, {}
    for label in labels:
        tp = sum(1 for p, t in pairs if p == label and t == label)
        fp = sum(1 for p, t in pairs if p == label and t != label)
        fn = sum(1 for p, t in pairs if p != label and t == label)
        precision[label] = tp / (tp + fp) if tp + fp else 0.0
        recall[label] = tp / (tp + fn) if tp + fn else 0.0

    return EvaluationResult(
        accuracy=correct / len(pairs),
        covered=len(pairs),
        precision=precision,
        recall=recall,
        positive_label=positive_label,
    )


def macro_average(results: Sequence[EvaluationResult]) -> Dict[str, float]:
    """Average accuracy (and positive-label precision/recall when set) across runs or tags."""
    if not results:
        raise EvaluationError('nothing to average')
    summary = {'accuracy': float(np.mean([r.accuracy for r in results])), 'runs': len(results)}
    positives = [r for r in results if r.positive_label is not None]
    if positives:
        summary['precision'] = float(np.mean([r.positive_precision or 0.0 for r in positives]))
        summary['recall'] = float(np.mean([r.positive_recall or 0.0 for r in positives]))
    return summary


def source_claim_accuracy(cs: ClaimSet, truth: Mapping[str, str]) -> Dict[str, Optional[float]]:
    """Each source's accuracy over its claims on objects with known truth (None if no such claim)."""
    true_index = np.full(cs.num_objects, -1, dtype=np.int64)
    for m, domain in enumerate(cs.objects):
        label = truth.get(domain.object_id)
        if label is not None:
            true_index[m] = domain.index.get(label, -2)

    checked = true_index[cs.claim_objects] != -1
    hits = (cs.claim_values == true_index[cs.claim_objects]) & checked
    totals = np.bincount(cs.claim_sources[checked], minlength=cs.num_sources)
    correct = np.bincount(cs.claim_sources[hits], minlength=cs.num_sources)
    return {
        sid: (float(correct[n] / totals[n]) if totals[n] else None)
        for n, sid in enumerate(cs.source_ids)
    }
