"""
Test suite for logging configuration and run statistics.
"""

import logging

import pytest

from conftest import make_detection

from coopfusion.core.association import CsbaParams
from coopfusion.core.fusion import fuse_frame
from coopfusion.core.logging_cfg import RunStatistics, get_logger, setup_logging
from coopfusion.core.model import Frame


@pytest.fixture
def isolated_root_logger():
    """Detach the root handlers for the test and restore them afterwards."""
    root = logging.getLogger()
    saved_handlers = root.handlers[:]
    saved_level = root.level
    root.handlers = []
    yield root
    for handler in root.handlers:
        handler.close()
    root.handlers = saved_handlers
    root.setLevel(saved_level)


def _flush(root):
    for handler in root.handlers:
        handler.flush()


class TestSetupLogging:
    """Test handler layout of setup_logging."""

    def test_log_files_created(self, isolated_root_logger, temp_log_dir):
        setup_logging(log_level="DEBUG", log_dir=str(temp_log_dir), console_output=False)

        logging.getLogger("fusiontest.association").info("assoc message")
        logging.getLogger("fusiontest.runner").info("runner message")
        logging.getLogger("fusiontest.runner").warning("runner warning")
        _flush(isolated_root_logger)

        main_log = (temp_log_dir / "coopfusion.log").read_text(encoding="utf-8")
        assoc_log = (temp_log_dir / "coopfusion_association.log").read_text(encoding="utf-8")
        error_log = (temp_log_dir / "coopfusion_errors.log").read_text(encoding="utf-8")

        assert "assoc message" in main_log
        assert "runner message" in main_log
        assert "assoc message" in assoc_log
        assert "runner" not in assoc_log
        assert "runner warning" in error_log
        assert "runner message" not in error_log

    def test_no_files_without_file_output(self, isolated_root_logger, temp_log_dir):
        setup_logging(log_dir=str(temp_log_dir), console_output=False, file_output=False)
        logging.getLogger("fusiontest").warning("nothing on disk")
        assert list(temp_log_dir.iterdir()) == []

    def test_console_writes_stderr(self, isolated_root_logger, capsys):
        setup_logging(log_level="INFO", file_output=False)
        logging.getLogger("fusiontest.app").info("console message")
        _flush(isolated_root_logger)

        captured = capsys.readouterr()
        assert "console message" in captured.err
        assert captured.out == ""

    def test_level_applied(self, isolated_root_logger):
        root = setup_logging(log_level="warning", file_output=False, console_output=False)
        assert root.level == logging.WARNING

    def test_replaces_existing_handlers(self, isolated_root_logger):
        setup_logging(file_output=False)
        setup_logging(file_output=False)
        assert len(isolated_root_logger.handlers) == 1

    def test_unknown_level(self, isolated_root_logger):
        with pytest.raises(ValueError):
            setup_logging(log_level="LOUD", file_output=False)

    def test_get_logger(self):
        assert get_logger("coopfusion.core.fusion") is logging.getLogger("coopfusion.core.fusion")


class TestRunStatistics:
    """Test the per-cell counters."""

    def test_counters(self):
        stats = RunStatistics("mild/wls_csba")
        stats.log_frame(10, 6)
        stats.log_frame(4, 4)

        result = stats.get_statistics()
        assert result['frames'] == 2
        assert result['detections'] == 14
        assert result['objects'] == 10
        assert result['merged'] == 4

    def test_rate_without_timing(self):
        stats = RunStatistics("cell")
        stats.log_frame(1, 1)
        assert stats.get_statistics()['frames_per_s'] == 0.0

    def test_timing_accumulates(self):
        stats = RunStatistics("cell")
        stats.start()
        first = stats.stop()
        stats.start()
        second = stats.stop()
        assert 0.0 <= first <= second
        # stop without start keeps the total
        assert stats.stop() == second

    def test_summary_logged(self, caplog):
        stats = RunStatistics("moderate/nms_std")
        stats.log_frame(3, 2)
        with caplog.at_level(logging.INFO, logger="coopfusion.stats"):
            stats.log_summary()
        assert "moderate/nms_std: 1 frames, 3 detections, 2 objects" in caplog.text

    def test_association_counters(self):
        stats = RunStatistics("cell")
        stats.log_association(6, 2, 3)
        stats.log_association(4, 4, 0)

        result = stats.get_statistics()
        assert result['pairs'] == 10
        assert result['gated_pairs'] == 6
        assert result['matches'] == 3

    def test_summary_reports_matches(self, caplog):
        stats = RunStatistics("mild/wls_csba")
        stats.log_association(4, 2, 2)
        with caplog.at_level(logging.INFO, logger="coopfusion.stats"):
            stats.log_summary()
        assert "2 matches, 2 gated pairs" in caplog.text

    def test_fuse_frame_feeds_association_counters(self):
        agent1 = [make_detection(x=0.0), make_detection(x=50.0)]
        agent2 = [make_detection(x=0.2, agent_id=2), make_detection(x=50.1, agent_id=2)]
        stats = RunStatistics("cell")

        fused = fuse_frame(Frame(0.0, agent1 + agent2), CsbaParams(lambda_max=3.0), stats)

        assert len(fused) == 2
        result = stats.get_statistics()
        assert result['pairs'] == 4
        assert result['gated_pairs'] == 2
        assert result['matches'] == 2
