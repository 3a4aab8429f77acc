"""
config_manager.py - Run Configuration
=====================================
Resolves the configuration of one command-line run.

Features:
✅ defaults < JSON config file < explicit flags
✅ shared argparse flags for every subcommand
✅ thread count: --threads > config file > MSS_THREADS > physical cores > 1
✅ input path validation before any work starts
✅ resolved configuration exported for provenance
"""

import argparse
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import psutil
from dotenv import load_dotenv

from helpers import MSSError
from logger import mss_logger
from system_inference import DEFAULT_SEED, FitOptions
from system_priors import DEFAULT_HYPERPARAMS, Hyperparams
from system_selection import SearchOptions

load_dotenv()

RUN_DEFAULTS = {
    'tol': 1e-6,
    'max_sweeps': 200,
    'seed': DEFAULT_SEED,
    'restarts': 3,
}

# flag dest -> config key
FLAG_KEYS = {
    'kappa': 'kappa',
    'b1': 'b1',
    'b0': 'b0',
    'eta1': 'eta_reliable',
    'theta1': 'theta_reliable',
    'eta0': 'eta_unreliable',
    'theta0': 'theta_unreliable',
    'truncation': 'truncation',
    'tol': 'tol',
    'max_sweeps': 'max_sweeps',
    'seed': 'seed',
    'restarts': 'restarts',
    'threads': 'threads',
}


class ConfigError(MSSError):
    """Unreadable config file or invalid path."""


# ==================== Argument Types ====================

def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {text!r}')
    if not value > 0 or value == float('inf'):
        raise argparse.ArgumentTypeError(f'must be a positive finite number: {text!r}')
    return value


def tolerance(text: str) -> float:
    """Positive number; 'inf' allowed (stop after one sweep)."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {text!r}')
    if not value > 0:
        raise argparse.ArgumentTypeError(f'tolerance must be positive: {text!r}')
    return value


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not an integer: {text!r}')
    if value < 1:
        raise argparse.ArgumentTypeError(f'must be >= 1: {text!r}')
    return value


def non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not an integer: {text!r}')
    if value < 0:
        raise argparse.ArgumentTypeError(f'must be >= 0: {text!r}')
    return value


# ==================== Resolved Config ====================

@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    hyperparams: Hyperparams
    tol: float
    max_sweeps: int
    seed: int
    restarts: int
    threads: int
    output_format: str = 'json'
    inputs: Dict[str, str] = field(default_factory=dict)
    out_dir: Optional[Path] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def provenance(self) -> Dict[str, Any]:
        """Everything that determines the outputs; thread count is excluded."""
        return {
            'subcommand': self.subcommand,
            'hyperparams': self.hyperparams.to_dict(),
            'tol': self.tol,
            'max_sweeps': self.max_sweeps,
            'seed': self.seed,
            'restarts': self.restarts,
            'inputs': dict(self.inputs),
            **self.extra,
        }

    def fit_options(self) -> FitOptions:
        return FitOptions(max_sweeps=self.max_sweeps, tol=self.tol, seed=self.seed)

    def search_options(self) -> SearchOptions:
        return SearchOptions(max_sweeps=self.max_sweeps, tol=self.tol, seed=self.seed, threads=self.threads)


class ConfigManager:
    """Merges defaults, config files and flags into a RunConfig."""

    def __init__(self):
        self.cache: Dict[str, Dict[str, Any]] = {}

    # ==================== Flags ====================

    def add_model_arguments(self, parser: argparse.ArgumentParser):
        group = parser.add_argument_group('model')
        group.add_argument('--kappa', type=positive_float, help='stick-breaking concentration')
        group.add_argument('--b1', type=positive_float, help='Beta soft count for reliable objects')
        group.add_argument('--b0', type=positive_float, help='Beta soft count for unreliable objects')
        group.add_argument('--eta1', type=positive_float, help='reliable regime: count on the true value')
        group.add_argument('--theta1', type=positive_float, help='reliable regime: count on each false value')
        group.add_argument('--eta0', type=positive_float, help='unreliable regime: count on the true value')
        group.add_argument('--theta0', type=positive_float, help='unreliable regime: count on each false value')
        group.add_argument('--truncation', type=positive_int, help='number of explicit groups L')

    def add_run_arguments(self, parser: argparse.ArgumentParser):
        group = parser.add_argument_group('run')
        group.add_argument('--config', type=Path, help='JSON config file')
        group.add_argument('--tol', type=tolerance, help='relative ELBO tolerance (inf = one sweep)')
        group.add_argument('--max-sweeps', dest='max_sweeps', type=non_negative_int, help='sweep limit')
        group.add_argument('--seed', type=int, help=f'random seed (default {DEFAULT_SEED})')
        group.add_argument('--threads', type=positive_int, help='worker threads (env MSS_THREADS)')
        group.add_argument('--restarts', type=positive_int, help='restarts per grid configuration')
        group.add_argument('--format', dest='output_format', choices=('json', 'csv'), default='json',
                           help='format of the summary printed on standard output')

    # ==================== Loading ====================

    def load_file(self, path: Optional[Path]) -> Dict[str, Any]:
        if path is None:
            return {}
        key = str(path)
        if key in self.cache:
            return self.cache[key]
        path = self.validate_input(path, 'config file')
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f'config file {path}: {e.msg} (line {e.lineno})') from e
        if not isinstance(data, dict):
            raise ConfigError(f'config file {path} must hold a JSON object')
        known = set(DEFAULT_HYPERPARAMS.to_dict()) | set(RUN_DEFAULTS) | {'threads'}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f'config file {path}: unknown key(s) {", ".join(sorted(unknown))}')
        self.cache[key] = data
        return data

    def validate_input(self, path: Path, label: str) -> Path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f'{label} not found: {path}')
        return path

    def validate_output_dir(self, path: Path) -> Path:
        path = Path(path)
        if path.exists() and not path.is_dir():
            raise ConfigError(f'output path is not a directory: {path}')
        return path

    def resolve_threads(self, flag: Optional[int] = None, from_file: Optional[int] = None) -> int:
        if flag:
            return int(flag)
        if from_file:
            return max(1, int(from_file))
        env = os.getenv('MSS_THREADS')
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                mss_logger.warning(f'ignoring MSS_THREADS={env!r}')
        return psutil.cpu_count(logical=False) or 1

    # ==================== Resolution ====================

    def resolve(
        self,
        args: argparse.Namespace,
        inputs: Optional[Dict[str, Path]] = None,
        check_regimes: bool = True,
        extra: Optional[Dict[str, Any]] = None,
    ) -> RunConfig:
        """
        Build the RunConfig for parsed arguments.

        Args:
            args: parsed namespace (model and run flags)
            inputs: name -> input path, validated here
            check_regimes: enforce the reliable / unreliable regime ordering
            extra: subcommand-specific values recorded for provenance

        Returns:
            RunConfig: fully resolved configuration
        """
        validated = {name: str(self.validate_input(p, name)) for name, p in (inputs or {}).items()}

        merged: Dict[str, Any] = {**DEFAULT_HYPERPARAMS.to_dict(), **RUN_DEFAULTS}
        merged.update(self.load_file(getattr(args, 'config', None)))
        for dest, key in FLAG_KEYS.items():
            value = getattr(args, dest, None)
            if value is not None:
                merged[key] = value

        hyper_keys = DEFAULT_HYPERPARAMS.to_dict().keys()
        hyperparams = Hyperparams.from_dict({k: merged[k] for k in hyper_keys})
        if check_regimes:
            hyperparams.check_regimes()

        out_dir = getattr(args, 'out', None)
        return RunConfig(
            subcommand=args.command,
            hyperparams=hyperparams,
            tol=float(merged['tol']),
            max_sweeps=int(merged['max_sweeps']),
            seed=int(merged['seed']),
            restarts=int(merged['restarts']),
            threads=self.resolve_threads(getattr(args, 'threads', None), merged.get('threads')),
            output_format=getattr(args, 'output_format', 'json'),
            inputs=validated,
            out_dir=self.validate_output_dir(out_dir) if out_dir is not None else None,
            extra=dict(extra or {}),
        )


config = ConfigManager()
