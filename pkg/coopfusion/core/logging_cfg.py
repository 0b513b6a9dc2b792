"""
Logging Configuration for coopfusion

Configures logging for experiment runs: console output, a rotating main
log, a dedicated association/assignment log and a warnings-and-above error
log. Also provides RunStatistics for per-cell counters and timings.
"""

import logging
import logging.handlers
import sys
import time
from pathlib import Path
from typing import Dict, Optional


def setup_logging(
    log_level: str = "INFO",
    log_dir: Optional[str] = None,
    console_output: bool = True,
    file_output: bool = True,
    max_file_size: int = 10 * 1024 * 1024,  # 10 MB
    backup_count: int = 5
) -> logging.Logger:
    """
    Setup logging for the coopfusion command line.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_dir: Directory for log files (default: ./logs)
        console_output: Enable console logging
        file_output: Enable file logging
        max_file_size: Maximum size per log file in bytes
        backup_count: Number of backup files to keep

    Returns:
        Configured root logger
    """
    level = getattr(logging, str(log_level).upper(), None)
    if not isinstance(level, int):
        raise ValueError(f"Unknown log level: {log_level}")

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    detailed_formatter = logging.Formatter(
        fmt='%(asctime)s.%(msecs)03d - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    console_formatter = logging.Formatter(
        fmt='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%H:%M:%S'
    )

    if console_output:
        # Diagnostics go to stderr; stdout is reserved for result tables
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(console_formatter)
        root_logger.addHandler(console_handler)

    log_path = None
    if file_output:
        log_path = Path.cwd() / "logs" if log_dir is None else Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)

        app_handler = logging.handlers.RotatingFileHandler(
            log_path / "coopfusion.log",
            maxBytes=max_file_size,
            backupCount=backup_count,
            encoding='utf-8'
        )
        app_handler.setLevel(logging.DEBUG)
        app_handler.setFormatter(detailed_formatter)
        root_logger.addHandler(app_handler)

        assoc_handler = logging.handlers.RotatingFileHandler(
            log_path / "coopfusion_association.log",
            maxBytes=max_file_size,
            backupCount=backup_count,
            encoding='utf-8'
        )
        assoc_handler.setLevel(logging.DEBUG)
        assoc_handler.setFormatter(detailed_formatter)
        assoc_handler.addFilter(_AssociationFilter())
        root_logger.addHandler(assoc_handler)

        error_handler = logging.handlers.RotatingFileHandler(
            log_path / "coopfusion_errors.log",
            maxBytes=max_file_size,
            backupCount=backup_count,
            encoding='utf-8'
        )
        error_handler.setLevel(logging.WARNING)
        error_handler.setFormatter(detailed_formatter)
        root_logger.addHandler(error_handler)

    logger = logging.getLogger(__name__)
    logger.debug(f"Log level: {log_level}")
    logger.debug(f"Log directory: {log_path}")
    logger.debug(f"Console output: {console_output}, file output: {file_output}")

    return root_logger


class _AssociationFilter(logging.Filter):
    """Pass records from the association and assignment modules."""

    def filter(self, record: logging.LogRecord) -> bool:
        name = record.name.lower()
        return 'association' in name or 'assignment' in name


def get_logger(name: str) -> logging.Logger:
    """
    Get logger for specific module.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Logger instance
    """
    return logging.getLogger(name)


class RunStatistics:
    """Counters and timings for one experiment cell."""

    def __init__(self, cell: str, logger_name: str = "coopfusion.stats"):
        self.cell = cell
        self.logger = logging.getLogger(logger_name)
        self.frame_count = 0
        self.input_count = 0
        self.output_count = 0
        self.pair_count = 0
        self.gated_count = 0
        self.match_count = 0
        self._started: Optional[float] = None
        self.elapsed = 0.0

    def start(self) -> None:
        self._started = time.perf_counter()

    def stop(self) -> float:
        if self._started is not None:
            self.elapsed += time.perf_counter() - self._started
            self._started = None
        return self.elapsed

    def log_frame(self, n_inputs: int, n_outputs: int) -> None:
        """
        Record one fused frame.

        Args:
            n_inputs: Detections entering the frame
            n_outputs: Objects produced by the method
        """
        self.frame_count += 1
        self.input_count += n_inputs
        self.output_count += n_outputs
        self.logger.debug(
            f"{self.cell} [{self.frame_count}]: {n_inputs} detections -> {n_outputs} objects"
        )

    def log_association(self, n_pairs: int, n_gated: int, n_matches: int) -> None:
        """
        Record one pairwise association step.

        Args:
            n_pairs: Cells of the cost matrix
            n_gated: Forbidden pairs
            n_matches: Accepted matches
        """
        self.pair_count += n_pairs
        self.gated_count += n_gated
        self.match_count += n_matches

    def get_statistics(self) -> Dict[str, float]:
        """Get run statistics."""
        return {
            'frames': self.frame_count,
            'detections': self.input_count,
            'objects': self.output_count,
            'merged': self.input_count - self.output_count,
            'pairs': self.pair_count,
            'gated_pairs': self.gated_count,
            'matches': self.match_count,
            'elapsed_s': self.elapsed,
            'frames_per_s': self.frame_count / self.elapsed if self.elapsed > 0 else 0.0,
        }

    def log_summary(self) -> None:
        stats = self.get_statistics()
        self.logger.info(
            f"{self.cell}: {stats['frames']} frames, {stats['detections']} detections, "
            f"{stats['objects']} objects, {stats['matches']} matches, "
            f"{stats['gated_pairs']} gated pairs in {stats['elapsed_s']:.2f}s"
        )
