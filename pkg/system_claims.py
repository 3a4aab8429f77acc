"""
system_claims.py - Claim Data Model
===================================
Sparse multi-source categorical claims and their ingestion.

Features:
✅ per-object categorical domains induced from the claimed labels
✅ optional domain file adding labels nobody claimed
✅ CSV (RFC 4180, header row) and JSON claim formats, both directions
✅ row index I(n,·) and column index I(·,m), never a dense N x M matrix
✅ immutable after construction
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from helpers import MSSError, strip_comments

CSV_HEADER = ('source_id', 'object_id', 'value_label')


# ==================== Errors ====================

class ClaimError(MSSError):
    """Invalid claim data."""


class ClaimParseError(ClaimError):
    """Malformed input row."""

    def __init__(self, message: str, line: Optional[int] = None, claim: Optional[int] = None):
        self.line = line
        self.claim = claim
        if line is not None:
            message = f'line {line}: {message}'
        elif claim is not None:
            message = f'claim #{claim}: {message}'
        super().__init__(message)


class ClaimConflictError(ClaimError):
    """Two claims for the same (source, object) pair."""


class ClaimFormat(str, Enum):
    CSV = 'csv'
    JSON = 'json'


# ==================== Types ====================

@dataclass(frozen=True)
class ObjectDomain:
    """Categorical domain of one object: ordered distinct labels."""

    object_id: str
    labels: Tuple[str, ...]
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise ClaimError(f'object {self.object_id!r} has an empty domain')
        index = {label: k for k, label in enumerate(labels)}
        if len(index) != len(labels):
            raise ClaimError(f'object {self.object_id!r} has duplicate labels')
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'index', index)

    @property
    def size(self) -> int:
        return len(self.labels)


class Claim(NamedTuple):
    source_index: int
    object_index: int
    value_index: int


class ClaimSet:
    """
    Immutable sparse claim collection.

    Claims keep their input order (so serialization reproduces the input); the
    `row_order` permutation visits them sorted by (source, object) for per-source
    reductions.
    """

    def __init__(
        self,
        source_ids: Sequence[str],
        objects: Sequence[ObjectDomain],
        sources: Iterable[int],
        object_indices: Iterable[int],
        values: Iterable[int],
    ):
        self._source_ids = tuple(source_ids)
        self._objects = tuple(objects)
        if len(set(self._source_ids)) != len(self._source_ids):
            raise ClaimError('duplicate source ids')
        if len({o.object_id for o in self._objects}) != len(self._objects):
            raise ClaimError('duplicate object ids')

        src = np.asarray(list(sources), dtype=np.int64)
        obj = np.asarray(list(object_indices), dtype=np.int64)
        val = np.asarray(list(values), dtype=np.int64)
        if not (src.shape == obj.shape == val.shape):
            raise ClaimError('claim index arrays differ in length')

        n_sources, n_objects = len(self._source_ids), len(self._objects)
        sizes = np.array([o.size for o in self._objects], dtype=np.int64)
        if src.size:
            if src.min() < 0 or src.max() >= n_sources:
                raise ClaimError('source index out of range')
            if obj.min() < 0 or obj.max() >= n_objects:
                raise ClaimError('object index out of range')
            if val.min() < 0 or np.any(val >= sizes[obj]):
                raise ClaimError('value index outside the object domain')

        row_order = np.lexsort((obj, src))
        sorted_pairs = np.stack([src[row_order], obj[row_order]], axis=1)
        if len(sorted_pairs) > 1:
            dup = np.all(sorted_pairs[1:] == sorted_pairs[:-1], axis=1)
            if np.any(dup):
                n, m = sorted_pairs[1:][dup][0]
                raise ClaimConflictError(
                    f'duplicate claim for source {self._source_ids[n]!r} on object {self._objects[m].object_id!r}'
                )

        self._src, self._obj, self._val = src, obj, val
        self._row_order = row_order
        self._sizes = sizes

        self._rows: List[np.ndarray] = [np.empty(0, dtype=np.int64) for _ in range(n_sources)]
        self._columns: List[np.ndarray] = [np.empty(0, dtype=np.int64) for _ in range(n_objects)]
        if src.size:
            for n, group in _split_by(src[row_order], obj[row_order]):
                self._rows[n] = group
            col_order = np.lexsort((src, obj))
            for m, group in _split_by(obj[col_order], src[col_order]):
                self._columns[m] = group

        for array in (self._src, self._obj, self._val, self._row_order, self._sizes, *self._rows, *self._columns):
            array.flags.writeable = False

    @classmethod
    def from_indices(
        cls,
        source_ids: Sequence[str],
        objects: Sequence[ObjectDomain],
        claims: Iterable[Tuple[int, int, int]],
    ) -> 'ClaimSet':
        triples = list(claims)
        return cls(
            source_ids,
            objects,
            (c[0] for c in triples),
            (c[1] for c in triples),
            (c[2] for c in triples),
        )

    # ==================== Accessors ====================

    @property
    def num_sources(self) -> int:
        return len(self._source_ids)

    @property
    def num_objects(self) -> int:
        return len(self._objects)

    @property
    def num_claims(self) -> int:
        return int(self._src.size)

    @property
    def source_ids(self) -> Tuple[str, ...]:
        return self._source_ids

    @property
    def objects(self) -> Tuple[ObjectDomain, ...]:
        return self._objects

    @property
    def object_ids(self) -> Tuple[str, ...]:
        return tuple(o.object_id for o in self._objects)

    @property
    def domain_sizes(self) -> np.ndarray:
        return self._sizes

    @property
    def max_domain(self) -> int:
        return int(self._sizes.max()) if self._sizes.size else 1

    @property
    def value_mask(self) -> np.ndarray:
        """(M, Kmax) boolean mask of valid value slots."""
        return np.arange(self.max_domain)[None, :] < self._sizes[:, None]

    @property
    def claim_sources(self) -> np.ndarray:
        return self._src

    @property
    def claim_objects(self) -> np.ndarray:
        return self._obj

    @property
    def claim_values(self) -> np.ndarray:
        return self._val

    @property
    def row_order(self) -> np.ndarray:
        return self._row_order

    @property
    def claims(self) -> List[Claim]:
        return [Claim(int(n), int(m), int(k)) for n, m, k in zip(self._src, self._obj, self._val)]

    def row_objects(self, n: int) -> FrozenSet[int]:
        """I(n,·): objects claimed by source n."""
        if not 0 <= n < self.num_sources:
            raise ClaimError(f'source index {n} out of range')
        return frozenset(int(m) for m in self._rows[n])

    def column_sources(self, m: int) -> FrozenSet[int]:
        """I(·,m): sources claiming object m."""
        if not 0 <= m < self.num_objects:
            raise ClaimError(f'object index {m} out of range')
        return frozenset(int(n) for n in self._columns[m])

    def summary(self) -> Dict[str, float]:
        cells = self.num_sources * self.num_objects
        return {
            'sources': self.num_sources,
            'objects': self.num_objects,
            'claims': self.num_claims,
            'density': self.num_claims / cells if cells else 0.0,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClaimSet):
            return NotImplemented
        return (
            self._source_ids == other._source_ids
            and self._objects == other._objects
            and np.array_equal(self._src, other._src)
            and np.array_equal(self._obj, other._obj)
            and np.array_equal(self._val, other._val)
        )

    def __repr__(self) -> str:
        return f'ClaimSet(sources={self.num_sources}, objects={self.num_objects}, claims={self.num_claims})'


def _split_by(keys: np.ndarray, values: np.ndarray):
    """Yield (key, values) runs of an array sorted by key."""
    boundaries = np.flatnonzero(np.diff(keys)) + 1
    starts = np.concatenate([[0], boundaries])
    for start, chunk in zip(starts, np.split(values, boundaries)):
        yield int(keys[start]), chunk.copy()


def column_sources(cs: ClaimSet, m: int) -> FrozenSet[int]:
    return cs.column_sources(m)


# ==================== Parsing ====================

def _read_csv_rows(text: str) -> List[Tuple[str, Tuple[str, str, str]]]:
    kept = strip_comments(text.splitlines(keepends=True))
    if not kept:
        return []
    offset = kept[0][0] - 1
    reader = csv.reader(io.StringIO(''.join(line for _, line in kept)))
    rows = []
    first = True
    for row in reader:
        line = reader.line_num + offset
        if not row or all(not cell.strip() for cell in row):
            continue
        if first:
            first = False
            if tuple(cell.strip().lower() for cell in row) == CSV_HEADER:
                continue
        if len(row) != 3:
            raise ClaimParseError(f'expected 3 fields, got {len(row)}', line)
        if any(cell == '' for cell in row):
            raise ClaimParseError('empty field', line)
        rows.append((f'line {line}', (row[0], row[1], row[2])))
    return rows


def _read_json_rows(text: str) -> List[Tuple[str, Tuple[str, str, str]]]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ClaimParseError(e.msg, e.lineno) from e
    if not isinstance(data, list):
        raise ClaimParseError('top-level JSON value must be an array')
    rows = []
    for position, item in enumerate(data, start=1):
        if not isinstance(item, dict):
            raise ClaimParseError('claim must be an object', claim=position)
        try:
            fields = (item['source'], item['object'], item['value'])
        except KeyError as e:
            raise ClaimParseError(f'missing key {e.args[0]!r}', claim=position) from e
        if not all(isinstance(f, str) for f in fields):
            raise ClaimParseError('source, object and value must be strings', claim=position)
        rows.append((f'claim #{position}', fields))
    return rows


def load_domains(stream: TextIO) -> Dict[str, List[str]]:
    """Read the optional domain file: JSON map object_id -> [labels]."""
    try:
        data = json.load(stream)
    except json.JSONDecodeError as e:
        raise ClaimParseError(f'domain file: {e.msg}', e.lineno) from e
    if not isinstance(data, dict):
        raise ClaimParseError('domain file must be a JSON object')
    domains = {}
    for object_id, labels in data.items():
        if not isinstance(labels, list) or not all(isinstance(v, str) for v in labels):
            raise ClaimParseError(f'domain of {object_id!r} must be a list of strings')
        domains[object_id] = list(labels)
    return domains


def parse_claims(
    stream: Union[TextIO, str],
    format: Union[ClaimFormat, str] = ClaimFormat.CSV,
    domains: Optional[Mapping[str, Sequence[str]]] = None,
) -> ClaimSet:
    """
    Parse a claim file into a ClaimSet.

    Args:
        stream: text stream or the raw text
        format: 'csv' or 'json'
        domains: optional object_id -> labels map (labels listed first, in order)

    Returns:
        ClaimSet: sources, objects and labels indexed by first appearance
    """
    text = stream if isinstance(stream, str) else stream.read()
    if text.startswith('\ufeff'):
        text = text[1:]
    fmt = ClaimFormat(format)
    rows = _read_csv_rows(text) if fmt is ClaimFormat.CSV else _read_json_rows(text)
    if not rows:
        raise ClaimError('no claims in input')

    domains = domains or {}
    source_index: Dict[str, int] = {}
    object_index: Dict[str, int] = {}
    labels: List[List[str]] = []
    label_index: List[Dict[str, int]] = []

    def _object(object_id: str) -> int:
        if object_id not in object_index:
            object_index[object_id] = len(labels)
            seeded = list(dict.fromkeys(domains.get(object_id, [])))
            labels.append(seeded)
            label_index.append({v: k for k, v in enumerate(seeded)})
        return object_index[object_id]

    seen = {}
    triples = []
    for where, (source_id, object_id, value) in rows:
        n = source_index.setdefault(source_id, len(source_index))
        m = _object(object_id)
        if (n, m) in seen:
            raise ClaimConflictError(
                f'{where}: duplicate claim for source {source_id!r} on object {object_id!r} '
                f'(first on {seen[(n, m)]})'
            )
        seen[(n, m)] = where
        if value not in label_index[m]:
            label_index[m][value] = len(labels[m])
            labels[m].append(value)
        triples.append((n, m, label_index[m][value]))

    for object_id in domains:
        _object(object_id)

    objects = []
    ordered_ids = sorted(object_index, key=object_index.get)
    for object_id in ordered_ids:
        m = object_index[object_id]
        if not labels[m]:
            raise ClaimError(f'object {object_id!r} has an empty domain')
        objects.append(ObjectDomain(object_id, tuple(labels[m])))

    source_ids = sorted(source_index, key=source_index.get)
    return ClaimSet.from_indices(source_ids, objects, triples)


def serialize_claims(cs: ClaimSet, format: Union[ClaimFormat, str] = ClaimFormat.CSV) -> str:
    """Write claims back in input order (CSV with header, or JSON array)."""
    fmt = ClaimFormat(format)
    records = [
        (cs.source_ids[n], cs.objects[m].object_id, cs.objects[m].labels[k])
        for n, m, k in cs.claims
    ]
    if fmt is ClaimFormat.JSON:
        payload = [{'source': s, 'object': o, 'value': v} for s, o, v in records]
        return json.dumps(payload, indent=2, ensure_ascii=False) + '\n'

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_HEADER)
    writer.writerows(records)
    return buffer.getvalue()
