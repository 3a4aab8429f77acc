"""
Logging for the truth-discovery engine.
All progress goes to standard error; standard output stays machine-readable.
"""

import logging
import os
import sys
import traceback
from typing import Optional

from dotenv import load_dotenv

from helpers import format_time

load_dotenv()


class MSSLogger:
    """Thin wrapper around the stdlib logger with domain-specific helpers."""

    def __init__(self, name: str = 'mss', log_file: Optional[str] = None):
        self.name = name
        self.log_file = log_file or os.getenv('MSS_LOG_FILE')
        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        logger = logging.getLogger(self.name)
        logger.setLevel(logging.DEBUG)

        # already configured
        if logger.handlers:
            return logger

        formatter = logging.Formatter(
            '%(asctime)s | %(levelname)-8s | %(name)s | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        level_name = os.getenv('LOG_LEVEL', 'INFO').upper()
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(getattr(logging, level_name, logging.INFO))
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        if self.log_file:
            try:
                file_handler = logging.FileHandler(self.log_file, encoding='utf-8', mode='a')
                file_handler.setLevel(logging.DEBUG)
                file_handler.setFormatter(formatter)
                logger.addHandler(file_handler)
            except OSError as e:
                logger.warning(f'⚠️ could not open log file {self.log_file}: {e}')

        return logger

    # ==================== Logging Methods ====================

    def info(self, message: str):
        self.logger.info(message)

    def success(self, message: str):
        self.logger.info(f'✅ {message}')

    def warning(self, message: str):
        self.logger.warning(f'⚠️ {message}')

    def error(self, message: str, exc_info: bool = False):
        self.logger.error(f'❌ {message}', exc_info=exc_info)

    def critical(self, message: str, exc_info: bool = False):
        self.logger.critical(f'🔥 {message}', exc_info=exc_info)

    def debug(self, message: str):
        self.logger.debug(f'🐛 {message}')

    def exception(self, message: str, exception: BaseException):
        """Log a message followed by the full traceback of `exception`."""
        tb = ''.join(traceback.format_exception(
            type(exception),
            exception,
            exception.__traceback__
        ))
        self.critical(f'{message}\n{tb}')

    # ==================== Specialized Logging ====================

    def fit_started(self, sources: int, objects: int, claims: int, truncation: int):
        self.info(f'🚀 fit: sources={sources} | objects={objects} | claims={claims} | L={truncation}')

    def sweep_progress(self, sweep: int, elbo: float, delta: float):
        self.info(f'📈 sweep {sweep:3d} | ELBO={elbo:.6f} | Δ={delta:+.3e}')

    def fit_finished(self, iterations: int, converged: bool, elbo: float, seconds: float):
        if converged:
            self.success(f'converged after {iterations} sweeps | ELBO={elbo:.6f} | {format_time(seconds)}')
        else:
            self.warning(f'stopped at max sweeps ({iterations}) | ELBO={elbo:.6f} | {format_time(seconds)}')

    def config_evaluated(self, index: int, total: int, label: str, elbo: float):
        self.info(f'🧪 config {index + 1}/{total} | {label} | ELBO={elbo:.6f}')

    def config_failed(self, index: int, label: str, error: str):
        self.error(f'🧪 config {index + 1} failed | {label} | {error}')

    def file_written(self, path: str):
        self.debug(f'💾 wrote {path}')

    # ==================== Performance Logging ====================

    def performance(self, operation: str, duration_ms: float):
        if duration_ms > 60_000:
            self.warning(f'⏱️ slow operation: {operation} | {duration_ms:.2f}ms')
        else:
            self.debug(f'⏱️ {operation} | {duration_ms:.2f}ms')


mss_logger = MSSLogger()
