"""
storage.py - Output Files
=========================
Reads and writes every file the command line produces.

✅ report.json / truths.csv / reliability.csv for fits
✅ leaderboard.json + leaderboard.txt for grid searches
✅ claims.csv / truth.json / truth.csv for synthetic data
✅ kappa_sweep.json for κ sweeps
✅ `# config: {...}` provenance line on every CSV, `config` key on every JSON
✅ label files (truths.csv / ground truth) for evaluation
"""

import csv
import io
from pathlib import Path
from typing import Any, Dict, List, Optional

from helpers import MSSError, dump_json, format_float, provenance_line, strip_comments
from logger import mss_logger
from system_claims import ClaimFormat, ClaimSet, load_domains, parse_claims, serialize_claims

TRUTHS_HEADER = ('object_id', 'value_label', 'confidence')
RELIABILITY_HEADER = ('source_id', 'score', 'rank', 'map_group')
TRUTH_HEADER = ('object_id', 'value_label')


class StorageError(MSSError):
    """An input or output file could not be read or written."""


class ReportStore:
    def __init__(self, out_dir: Path, config: Optional[Dict[str, Any]] = None):
        self.out_dir = Path(out_dir)
        self.config = dict(config or {})

    # ==================== Raw Helpers ====================

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            with open(path, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
        except OSError as e:
            raise StorageError(f'cannot write {path}: {e}') from e
        mss_logger.file_written(str(path))
        return path

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        return self.write_text(name, dump_json({'config': self.config, **data}))

    def write_csv(self, name: str, header, rows) -> Path:
        buffer = io.StringIO()
        buffer.write(provenance_line(self.config) + '\n')
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
        return self.write_text(name, buffer.getvalue())

    # ==================== Fit ====================

    def write_report(self, report) -> List[Path]:
        """report.json, truths.csv and reliability.csv for an InferenceReport."""
        truths = [(o.object_id, o.label, format_float(o.confidence)) for o in report.objects]
        reliability = [(s.source_id, format_float(s.score), s.rank, s.map_group) for s in report.sources]
        return [
            self.write_json('report.json', report.to_dict()),
            self.write_csv('truths.csv', TRUTHS_HEADER, truths),
            self.write_csv('reliability.csv', RELIABILITY_HEADER, reliability),
        ]

    # ==================== Grid ====================

    def write_leaderboard(self, search, table_text: str) -> List[Path]:
        data = {
            'best': search.best.to_dict(),
            'best_elbo': search.best_fit.elbo,
            'entries': [entry.to_dict() for entry in search.leaderboard],
        }
        return [
            self.write_json('leaderboard.json', data),
            self.write_text('leaderboard.txt', table_text),
        ]

    # ==================== Synthetic ====================

    def write_synthetic(self, cs: ClaimSet, truth) -> List[Path]:
        claims = provenance_line(self.config) + '\n' + serialize_claims(cs, ClaimFormat.CSV)
        labels = truth.truth_labels()
        return [
            self.write_text('claims.csv', claims),
            self.write_json('truth.json', truth.to_dict()),
            self.write_csv('truth.csv', TRUTH_HEADER, sorted(labels.items())),
        ]

    # ==================== Kappa Sweep ====================

    def write_kappa_sweep(self, points) -> Path:
        return self.write_json('kappa_sweep.json', {'points': [p.to_dict() for p in points]})


# ==================== Readers ====================

def read_text(path: Path) -> str:
    try:
        with open(path, 'r', encoding='utf-8-sig', newline='') as f:
            return f.read()
    except OSError as e:
        raise StorageError(f'cannot read {path}: {e}') from e


def read_labels(path: Path) -> Dict[str, str]:
    """
    Read `object_id,value_label[,...]` rows (truths.csv or a ground-truth file).

    Leading `#` lines and an optional header are skipped; later duplicates of an
    object id are rejected.
    """
    kept = strip_comments(read_text(path).splitlines(keepends=True))
    reader = csv.reader(io.StringIO(''.join(line for _, line in kept)))
    labels: Dict[str, str] = {}
    for position, row in enumerate(reader):
        if not row or all(not cell.strip() for cell in row):
            continue
        if position == 0 and [c.strip().lower() for c in row[:2]] == list(TRUTH_HEADER):
            continue
        if len(row) < 2:
            raise StorageError(f'{path}: expected object_id,value_label, got {row!r}')
        object_id, label = row[0], row[1]
        if object_id in labels:
            raise StorageError(f'{path}: object {object_id!r} listed twice')
        labels[object_id] = label
    return labels


def read_claims(path: Path, domains_path: Optional[Path] = None) -> ClaimSet:
    """Parse a claim file; `.json` files use the JSON format, anything else CSV."""
    path = Path(path)
    fmt = ClaimFormat.JSON if path.suffix.lower() == '.json' else ClaimFormat.CSV
    domains = None
    if domains_path is not None:
        domains = load_domains(io.StringIO(read_text(Path(domains_path))))
    cs = parse_claims(read_text(path), fmt, domains)
    summary = cs.summary()
    mss_logger.info(
        f'📥 {path.name}: sources={summary["sources"]} | objects={summary["objects"]} | '
        f'claims={summary["claims"]} | density={summary["density"]:.4f}'
    )
    return cs
