"""
Shared helpers: the base error type, seed derivation, number formatting
and small parsing utilities used across the command modules.
"""

import hashlib
import json
from typing import Any, Iterable, List, Union

import numpy as np

# ==================== Errors ====================


class MSSError(Exception):
    """Base class for every error the engine reports to the command line."""

    exit_code = 1


# ==================== Seeds ====================

def generate_hash(text: str) -> str:
    """
    SHA256 hex digest of a string.

    Args:
        text: input text

    Returns:
        str: hex digest
    """
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def derive_seed(seed: int, *keys: Union[str, int]) -> int:
    """
    Derive a stable 64-bit sub-seed from a base seed and a key path.

    The same (seed, keys) always yields the same sub-seed, independently of the
    order in which entities are visited, so per-entity random streams survive
    reindexing.
    """
    text = ':'.join([str(seed), *(str(k) for k in keys)])
    return int(generate_hash(text)[:16], 16)


def entity_rng(seed: int, *keys: Union[str, int]) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


# ==================== Formatting ====================

def format_float(value: float, digits: int = 10) -> str:
    """Fixed-width-free, deterministic float text for CSV output."""
    return f'{float(value):.{digits}g}'


def format_time(seconds: float) -> str:
    """Human readable duration."""
    if seconds < 1:
        return f'{seconds * 1000:.0f}ms'
    if seconds < 60:
        return f'{seconds:.2f}s'
    if seconds < 3600:
        minutes, rest = divmod(seconds, 60)
        return f'{int(minutes)}m {rest:.0f}s'
    hours, rest = divmod(seconds, 3600)
    return f'{int(hours)}h {int(rest // 60)}m'


def provenance_line(config: dict) -> str:
    """Comment line placed at the top of CSV outputs."""
    return '# config: ' + json.dumps(config, sort_keys=True, separators=(',', ':'))


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays (possibly nested) into plain JSON types."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dump_json(data: Any) -> str:
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False) + '\n'


# ==================== Parsing ====================

def parse_float_list(text: str) -> List[float]:
    """
    Parse a comma separated list of numbers.

    >>> parse_float_list('0.1, 1,5')
    [0.1, 1.0, 5.0]
    """
    values = [part.strip() for part in text.split(',')]
    return [float(v) for v in values if v]


def strip_comments(lines: Iterable[str]) -> List[tuple]:
    """
    Drop leading `#` comment lines, keeping 1-based line numbers of the rest.

    Returns:
        list: (line_number, line) pairs
    """
    kept = []
    in_header = True
    for number, line in enumerate(lines, start=1):
        if in_header and line.lstrip().startswith('#'):
            continue
        in_header = False
        kept.append((number, line))
    return kept
