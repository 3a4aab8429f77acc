"""
render.py - Text Tables and Plots
=================================
Human-facing renderings of fits, grid searches and κ sweeps: aligned text
tables for the terminal and PNG figures drawn with matplotlib.
"""

import csv
import io
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from helpers import dump_json, format_float  # noqa: E402
from logger import mss_logger  # noqa: E402

# Software/date metadata off so PNGs are byte-reproducible
PNG_METADATA = {'Software': None}


class Style:
    FIGSIZE = (6.4, 4.0)
    DPI = 100
    LINE = '#1f77b4'
    ACCENT = '#d62728'


# ==================== Text Tables ====================

def table(headers: Sequence[str], rows: Sequence[Sequence], align: Optional[str] = None) -> str:
    """
    Aligned plain-text table.

    Args:
        headers: column titles
        rows: cell values (str() is applied)
        align: one 'l' or 'r' per column (default: left)

    Returns:
        str: table text ending with a newline
    """
    align = align or 'l' * len(headers)
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]

    def _line(row: List[str]) -> str:
        parts = [c.rjust(w) if a == 'r' else c.ljust(w) for c, w, a in zip(row, widths, align)]
        return '  '.join(parts).rstrip()

    rule = '  '.join('-' * w for w in widths)
    return '\n'.join([_line(cells[0]), rule] + [_line(r) for r in cells[1:]]) + '\n'


def leaderboard_table(entries, limit: Optional[int] = None) -> str:
    """Grid-search leaderboard, already ranked by the caller."""
    rows = []
    for position, entry in enumerate(entries[:limit] if limit else entries, start=1):
        h = entry.hyperparams
        rows.append([
            position,
            f'{h.kappa:g}',
            f'{h.b1:g}/{h.b0:g}',
            f'{h.eta_reliable:g}/{h.theta_reliable:g}',
            f'{h.eta_unreliable:g}/{h.theta_unreliable:g}',
            format_float(entry.elbo, 8) if entry.ok else 'failed',
            entry.iterations,
            'yes' if entry.converged else 'no',
        ])
    return table(
        ['#', 'kappa', 'b1/b0', 'eta1/theta1', 'eta0/theta0', 'elbo', 'sweeps', 'converged'],
        rows,
        align='rrlllrrl',
    )


def ranking_table(sources, accuracy: Optional[Dict[str, Optional[float]]] = None) -> str:
    """Source ranking, with each source's claim accuracy when ground truth is known."""
    headers = ['rank', 'source_id', 'score', 'group']
    if accuracy is not None:
        headers.append('claim_accuracy')
    rows = []
    for s in sources:
        row = [s.rank, s.source_id, f'{s.score:.4f}', s.map_group]
        if accuracy is not None:
            value = accuracy.get(s.source_id)
            row.append('-' if value is None else f'{value:.4f}')
        rows.append(row)
    return table(headers, rows, align='rlrr' + ('r' if accuracy is not None else ''))


def groups_table(groups, min_size: float = 0.5) -> str:
    rows = [
        [g.index, f'{g.expected_reliability:.4f}', f'{g.effective_size:.2f}', len(g.members)]
        for g in groups
        if g.effective_size >= min_size
    ]
    return table(['group', 'E[u]', 'mass', 'members'], rows, align='rrrr')


# ==================== Plots ====================

def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=Style.DPI, metadata=PNG_METADATA)
    plt.close(fig)
    mss_logger.file_written(str(path))
    return path


def plot_kappa_sweep(points, path: Path) -> Path:
    """Accuracy against κ on a log axis."""
    fig, ax = plt.subplots(figsize=Style.FIGSIZE)
    kappas = [p.kappa for p in points]
    ax.plot(kappas, [p.accuracy for p in points], marker='o', color=Style.LINE)
    best = max(points, key=lambda p: p.accuracy)
    ax.scatter([best.kappa], [best.accuracy], color=Style.ACCENT, zorder=3, label=f'best κ={best.kappa:g}')
    ax.set_xscale('log')
    ax.set_xlabel('κ')
    ax.set_ylabel('accuracy')
    ax.set_title('Truth discovery accuracy vs κ')
    ax.grid(True, alpha=0.3)
    ax.legend(loc='lower right')
    return _save(fig, path)


def plot_elbo_trace(trace: Sequence[float], path: Path, initial: Optional[float] = None) -> Path:
    fig, ax = plt.subplots(figsize=Style.FIGSIZE)
    values = ([initial] if initial is not None else []) + list(trace)
    start = 0 if initial is not None else 1
    ax.plot(range(start, start + len(values)), values, marker='.', color=Style.LINE)
    ax.set_xlabel('sweep')
    ax.set_ylabel('ELBO')
    ax.set_title('ELBO trace')
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


# ==================== Standard Output ====================

def summary_text(data: Dict, output_format: str = 'json') -> str:
    """Machine-readable one-record summary: JSON object or CSV header + row."""
    if output_format == 'csv':
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(list(data))
        writer.writerow([format_float(v) if isinstance(v, float) else str(v) for v in data.values()])
        return buffer.getvalue()
    return dump_json(data)
