"""
system_selection.py - Hyperparameter Grid Search
================================================
Fits every admissible configuration of a hyperparameter grid and keeps the one
with the highest final ELBO.

Features:
✅ standard grid and JSON grid files
✅ regime filters (reliable η > θ, careless / malicious unreliable settings)
✅ best-of-restarts per configuration, restart seeds derived from the run seed
✅ bounded thread pool, results collected by configuration index
✅ failed configurations logged and skipped
✅ accuracy-versus-κ sweep
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from helpers import MSSError, derive_seed
from logger import mss_logger
from system_claims import ClaimSet
from system_inference import DEFAULT_SEED, FitOptions, FitResult, fit
from system_priors import Hyperparams
from system_reporting import build_report, evaluate

UNRELIABLE_MODES = ('careless', 'malicious')


class SelectionError(MSSError):
    """Grid search could not produce a single successful fit."""


# ==================== Grid ====================

@dataclass(frozen=True)
class GridSpec:
    eta_theta_values: Tuple[float, ...]
    b_values: Tuple[float, ...]
    kappa_values: Tuple[float, ...]
    restarts_per_config: int = 3
    unreliable_modes: Tuple[str, ...] = UNRELIABLE_MODES

    def __post_init__(self):
        for name in ('eta_theta_values', 'b_values', 'kappa_values', 'unreliable_modes'):
            values = tuple(getattr(self, name))
            if not values:
                raise SelectionError(f'grid field {name} must not be empty')
            object.__setattr__(self, name, values)
        for name in ('eta_theta_values', 'b_values', 'kappa_values'):
            if any(not v > 0 for v in getattr(self, name)):
                raise SelectionError(f'grid field {name} must hold positive values')
        unknown = set(self.unreliable_modes) - set(UNRELIABLE_MODES)
        if unknown:
            raise SelectionError(f'unknown unreliable mode(s): {", ".join(sorted(unknown))}')
        if int(self.restarts_per_config) < 1:
            raise SelectionError('restarts_per_config must be >= 1')

    @classmethod
    def standard(cls, restarts_per_config: int = 3) -> 'GridSpec':
        return cls(
            eta_theta_values=(1.0, 2.0, 5.0, 10.0),
            b_values=(1.0, 2.0, 4.0),
            kappa_values=(1.0, 5.0, 10.0),
            restarts_per_config=restarts_per_config,
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'GridSpec':
        allowed = {'eta_theta_values', 'b_values', 'kappa_values', 'restarts_per_config', 'unreliable_modes'}
        unknown = set(data) - allowed
        if unknown:
            raise SelectionError(f'unknown grid key(s): {", ".join(sorted(unknown))}')
        default = cls.standard()
        try:
            return cls(
                eta_theta_values=tuple(float(v) for v in data.get('eta_theta_values', default.eta_theta_values)),
                b_values=tuple(float(v) for v in data.get('b_values', default.b_values)),
                kappa_values=tuple(float(v) for v in data.get('kappa_values', default.kappa_values)),
                restarts_per_config=int(data.get('restarts_per_config', default.restarts_per_config)),
                unreliable_modes=tuple(data.get('unreliable_modes', default.unreliable_modes)),
            )
        except (TypeError, ValueError) as e:
            raise SelectionError(f'invalid grid: {e}') from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            'eta_theta_values': list(self.eta_theta_values),
            'b_values': list(self.b_values),
            'kappa_values': list(self.kappa_values),
            'restarts_per_config': self.restarts_per_config,
            'unreliable_modes': list(self.unreliable_modes),
        }


def unreliable_settings(grid: GridSpec) -> List[Tuple[float, float]]:
    """(η0, θ0) pairs: careless η0 = θ0 = v, malicious θ0 > η0."""
    values = sorted(set(grid.eta_theta_values))
    settings = []
    if 'careless' in grid.unreliable_modes:
        settings += [(v, v) for v in values]
    if 'malicious' in grid.unreliable_modes:
        settings += [(eta, theta) for eta in values for theta in values if theta > eta]
    return settings


def enumerate_configurations(grid: GridSpec, truncation: int = 20) -> List[Hyperparams]:
    """Every admissible configuration, in ascending sort_key order."""
    values = sorted(set(grid.eta_theta_values))
    b_values = sorted(set(grid.b_values))
    reliable = [(eta, theta) for eta in values for theta in values if eta > theta]
    configs = [
        Hyperparams(
            kappa=kappa, b1=b1, b0=b0,
            eta_reliable=eta1, theta_reliable=theta1,
            eta_unreliable=eta0, theta_unreliable=theta0,
            truncation=truncation,
        )
        for kappa in sorted(set(grid.kappa_values))
        for b1 in b_values
        for b0 in b_values
        for eta1, theta1 in reliable
        for eta0, theta0 in unreliable_settings(grid)
    ]
    return sorted((h.check_regimes() for h in configs), key=Hyperparams.sort_key)


# ==================== Search ====================

@dataclass(frozen=True)
class SearchOptions:
    max_sweeps: int = 200
    tol: float = 1e-6
    seed: int = DEFAULT_SEED
    threads: int = 1


@dataclass
class LeaderboardEntry:
    index: int
    hyperparams: Hyperparams
    elbo: Optional[float] = None
    restart_elbos: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'index': self.index,
            'config': self.hyperparams.to_dict(),
            'elbo': self.elbo,
            'restart_elbos': self.restart_elbos,
            'iterations': self.iterations,
            'converged': self.converged,
            'error': self.error,
        }


@dataclass
class SearchResult:
    best: Hyperparams
    best_fit: FitResult
    leaderboard: List[LeaderboardEntry]

    def ranked(self) -> List[LeaderboardEntry]:
        """Successful entries by descending ELBO, then failures."""
        done = sorted((e for e in self.leaderboard if e.ok), key=lambda e: (-e.elbo, e.hyperparams.sort_key()))
        return done + [e for e in self.leaderboard if not e.ok]


def restart_seed(seed: int, restart: int) -> int:
    return seed if restart == 0 else derive_seed(seed, 'restart', restart)


def _evaluate(
    index: int,
    total: int,
    cs: ClaimSet,
    h: Hyperparams,
    restarts: int,
    opts: SearchOptions,
) -> Tuple[LeaderboardEntry, Optional[FitResult]]:
    entry = LeaderboardEntry(index=index, hyperparams=h)
    best: Optional[FitResult] = None
    try:
        for restart in range(restarts):
            result = fit(cs, h, FitOptions(
                max_sweeps=opts.max_sweeps,
                tol=opts.tol,
                seed=restart_seed(opts.seed, restart),
                quiet=True,
            ))
            entry.restart_elbos.append(result.elbo)
            if best is None or result.elbo > best.elbo:
                best = result
    except Exception as e:
        entry.error = f'{type(e).__name__}: {e}'
        mss_logger.config_failed(index, h.label(), entry.error)
        return entry, None

    entry.elbo = best.elbo
    entry.iterations = best.iterations
    entry.converged = best.converged
    mss_logger.config_evaluated(index, total, h.label(), best.elbo)
    return entry, best


def _better(entry: LeaderboardEntry, incumbent: Optional[LeaderboardEntry]) -> bool:
    if incumbent is None:
        return True
    if entry.elbo != incumbent.elbo:
        return entry.elbo > incumbent.elbo
    return entry.hyperparams.sort_key() < incumbent.hyperparams.sort_key()


def run_configurations(
    cs: ClaimSet,
    configs: Sequence[Hyperparams],
    restarts: int = 3,
    opts: SearchOptions = SearchOptions(),
) -> SearchResult:
    """
    Fit each configuration (best of `restarts` seeds) and select the maximum ELBO.

    Args:
        cs: claims to fit
        configs: configurations to try
        restarts: seeds per configuration
        opts: sweep limits, base seed and worker count

    Returns:
        SearchResult: best configuration, its fit and the full leaderboard
    """
    if not configs:
        raise SelectionError('no configuration to evaluate')
    configs = [h.with_truncation(cs.num_sources) for h in configs]
    total = len(configs)
    started = time.perf_counter()
    mss_logger.info(f'🔎 grid search: {total} configurations x {restarts} restarts | threads={opts.threads}')

    leaderboard: List[LeaderboardEntry] = []
    best_entry: Optional[LeaderboardEntry] = None
    best_fit: Optional[FitResult] = None
    with ThreadPoolExecutor(max_workers=max(1, opts.threads)) as pool:
        outcomes = pool.map(lambda item: _evaluate(item[0], total, cs, item[1], restarts, opts), enumerate(configs))
        for entry, result in outcomes:
            leaderboard.append(entry)
            if entry.ok and _better(entry, best_entry):
                best_entry, best_fit = entry, result

    if best_entry is None:
        raise SelectionError(f'all {total} configurations failed')

    failed = sum(1 for e in leaderboard if not e.ok)
    if failed:
        mss_logger.warning(f'{failed}/{total} configurations failed')
    mss_logger.success(f'selected {best_entry.hyperparams.label()} | ELBO={best_entry.elbo:.6f}')
    mss_logger.performance('grid_search', (time.perf_counter() - started) * 1000)
    return SearchResult(best=best_entry.hyperparams, best_fit=best_fit, leaderboard=leaderboard)


def grid_search(
    cs: ClaimSet,
    grid: GridSpec,
    opts: SearchOptions = SearchOptions(),
    truncation: int = 20,
) -> SearchResult:
    return run_configurations(cs, enumerate_configurations(grid, truncation), grid.restarts_per_config, opts)


# ==================== Kappa Sensitivity ====================

@dataclass(frozen=True)
class KappaPoint:
    kappa: float
    accuracy: float
    elbo: float

    def to_dict(self) -> Dict[str, float]:
        return {'kappa': self.kappa, 'accuracy': self.accuracy, 'elbo': self.elbo}


def sweep_kappa(
    cs: ClaimSet,
    base: Hyperparams,
    kappas: Sequence[float],
    truth: Mapping[str, str],
    opts: SearchOptions = SearchOptions(),
) -> List[KappaPoint]:
    """Truth-discovery accuracy as κ varies with every other hyperparameter fixed."""
    if not kappas:
        raise SelectionError('no kappa values to sweep')
    points = []
    for kappa in kappas:
        h = base.replace(kappa=float(kappa))
        result = fit(cs, h, FitOptions(max_sweeps=opts.max_sweeps, tol=opts.tol, seed=opts.seed, quiet=True))
        accuracy = evaluate(build_report(result, cs).predictions(), truth).accuracy
        mss_logger.info(f'📊 κ={kappa:g} | accuracy={accuracy:.4f} | ELBO={result.elbo:.6f}')
        points.append(KappaPoint(kappa=float(kappa), accuracy=accuracy, elbo=result.elbo))
    return points
