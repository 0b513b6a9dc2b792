"""
Test suite for experiment configuration, the grid runner, result tables
and the command line.
"""

import csv
import io
import json

import numpy as np
import pytest

from conftest import make_detection

from coopfusion import app
from coopfusion.bench.config import (
    CsbaSettings, ExperimentConfig, NoiseRow, config_from_dict, load_config, agent_position_std,
    pair_position_std,
)
from coopfusion.bench.report import COLUMNS, NOT_APPLICABLE, ResultRow, to_csv, to_json, to_markdown, write_reports
from coopfusion.bench.runner import (
    assign_windows, evaluate_files, experiment_methods, generate_datasets, gt_assoc_fuse,
    load_datasets, resolve_method, run_experiment,
)
from coopfusion.core.association import CsbaParams, mahalanobis_distance
from coopfusion.core.datagen import NoiseConfig, SceneSpec, generate_gt
from coopfusion.core.fusion import fuse_frame
from coopfusion.core.metrics import EvalReport, FpPenalties
from coopfusion.core.model import (
    ConfigurationError, Frame, InvalidInputError, OutOfScopeError,
)
from coopfusion.core.serialization import read_fused, write_detections


def small_config(**overrides):
    values = dict(
        methods=("wls_csba", "nms_std", "late_average"),
        name="small",
        seed=3,
        scenes=2,
        frames_per_scene=3,
        objects_min=3,
        objects_max=5,
        noise_rows=(NoiseRow((NoiseConfig.preset("mild"), NoiseConfig.preset("mild"))),),
        formats=("csv", "md", "json"),
    )
    values.update(overrides)
    return ExperimentConfig(**values)


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


class TestExperimentConfig:
    """Test config parsing and validation."""

    def test_minimal_defaults(self):
        config = config_from_dict({"methods": ["wls_csba"]})
        assert config.scenes == 150
        assert config.frames_per_scene == 20
        assert (config.objects_min, config.objects_max) == (10, 40)
        assert [row.label for row in config.noise_rows] == ["mild", "moderate", "large", "mild+large"]
        assert config.formats == ("csv", "md")

    def test_empty_methods(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"methods": []})

    def test_missing_methods(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"scenes": 3})

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError) as exc:
            config_from_dict({"methods": ["soft_nms"]})
        assert not isinstance(exc.value, OutOfScopeError)

    def test_psa_out_of_scope(self):
        with pytest.raises(OutOfScopeError):
            config_from_dict({"methods": ["wls_csba", "PSA"]})

    def test_bad_noise_preset(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"methods": ["wbf"], "noise_rows": [["mild", "extreme"]]})

    def test_single_preset_row_means_two_agents(self):
        config = config_from_dict({"methods": ["wbf"], "noise_rows": ["moderate"]})
        assert len(config.noise_rows[0].agents) == 2
        assert config.noise_rows[0].label == "moderate"

    def test_unknown_format(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"methods": ["wbf"], "formats": ["xlsx"]})

    def test_window_longer_than_frame_period(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"methods": ["wbf"], "delta_t": 0.6})

    def test_bad_threshold(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"methods": ["wbf"], "thresholds": {"iou": 1.5}})

    def test_unknown_csba_key(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"methods": ["wbf"], "csba": {"w_xx": 1.0}})

    def test_load_config_errors(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_config(bad)
        binary = tmp_path / "binary.json"
        binary.write_bytes(b"\xff\xfe{}")
        with pytest.raises(ConfigurationError):
            load_config(binary)

    def test_sensor_positions(self):
        config = config_from_dict({"methods": ["late_closest"], "sensor_positions": {"1": [0, 0], "2": [40, 0, 2]}})
        assert config.sensor_positions == {1: (0.0, 0.0, 0.0), 2: (40.0, 0.0, 2.0)}

    def test_aliases(self):
        assert resolve_method("NMS-STD-3D") == "nms_std"
        assert resolve_method("dair_v2x_late") == "late_average"
        assert resolve_method("InfraDet3D-Late") == "late_closest"

    def test_gt_assoc_appended(self):
        config = small_config(methods=("wbf", "csba", "wbf"), gt_assoc=True)
        assert experiment_methods(config) == ["wbf", "wls_csba", "wls_gt_assoc"]


class TestCsbaSettings:
    """Test the per-row lambda_max rule and FP penalties."""

    def test_lambda_from_row(self):
        mild = NoiseConfig.preset("mild")
        params = CsbaSettings().for_row((mild, mild))
        assert params.lambda_max == pytest.approx(6.0 * np.sqrt(0.5))

    def test_mixed_row_uses_noisiest_agents(self):
        row = (NoiseConfig.preset("mild"), NoiseConfig.preset("large"))
        assert pair_position_std(row) == pytest.approx(np.sqrt(0.25 + 9.0))

    def test_agent_rule_uses_largest_std(self):
        mild, large = NoiseConfig.preset("mild"), NoiseConfig.preset("large")
        settings = CsbaSettings(lambda_rule="agent")
        assert settings.for_row((mild, mild)).lambda_max == pytest.approx(3.0)
        assert settings.for_row((mild, large)).lambda_max == pytest.approx(18.0)
        assert agent_position_std((mild, large)) == 3.0

    def test_bad_lambda_rule(self):
        with pytest.raises(ConfigurationError):
            CsbaSettings(lambda_rule="median")

    def test_lambda_rule_from_config(self):
        config = config_from_dict({"methods": ["wls_csba"], "csba": {"lambda_rule": "agent"}})
        assert config.csba.lambda_rule == "agent"
        assert config.csba.lambda_scale == 6.0

    def test_mild_gating_rates_slow(self, rng):
        # d_M of a true mild pair is chi-distributed with 3 dof
        n = 4000
        offsets = rng.normal(0.0, np.sqrt(0.5), size=(n, 3))
        anchor = make_detection(var_pos=0.25)
        distances = np.array([
            mahalanobis_distance(anchor, make_detection(x=dx, y=dy, z=dz, var_pos=0.25, agent_id=2))
            for dx, dy, dz in offsets
        ])
        mild = NoiseConfig.preset("mild")
        pair_lam = CsbaSettings().for_row((mild, mild)).lambda_max
        agent_lam = CsbaSettings(lambda_rule="agent").for_row((mild, mild)).lambda_max
        assert 0.02 < np.mean(distances > agent_lam) < 0.04
        assert np.mean(distances > pair_lam) < 0.005

    def test_explicit_lambda_wins(self):
        params = CsbaSettings(lambda_max=3.0).for_row((NoiseConfig.preset("large"),))
        assert params.lambda_max == 3.0

    def test_bad_weights(self):
        with pytest.raises(ConfigurationError):
            CsbaSettings(w_ds=0, w_cs=0, w_os=0).for_row((NoiseConfig.preset("mild"),))

    def test_translation_penalty_follows_lambda(self):
        config = small_config()
        assert config.penalties_for(CsbaParams(lambda_max=4.2)).translation == 4.2
        config = small_config(fp_penalties={"translation": 5.0, "scale": 1.0, "orientation_deg": 90.0})
        assert config.penalties_for(CsbaParams(lambda_max=4.2)).translation == 5.0


class TestGtAssocFuse:
    """Test fusion with perfect association."""

    def test_one_object_two_agents(self):
        frame = Frame(0.0, [make_detection(gt_id="a"), make_detection(x=0.4, agent_id=2, gt_id="a")])
        fused = gt_assoc_fuse(frame)
        assert len(fused) == 1
        assert fused[0].box.x == pytest.approx(0.2)
        assert fused[0].sources == ((1, 0), (2, 0))

    def test_single_view_passes_through(self):
        frame = Frame(0.0, [make_detection(gt_id="a"), make_detection(x=30, agent_id=2, gt_id="b")])
        assert len(gt_assoc_fuse(frame)) == 2

    def test_missing_gt_id(self):
        with pytest.raises(InvalidInputError):
            gt_assoc_fuse(Frame(0.0, [make_detection()]))

    def test_matches_csba_on_separated_scene(self, rng):
        dets = []
        for k in range(6):
            for agent in (1, 2):
                dets.append(make_detection(
                    x=25.0 * k + rng.normal(0, 0.3), y=rng.normal(0, 0.3),
                    theta=rng.normal(0, 0.05), agent_id=agent, gt_id=f"obj{k}",
                ))
        frame = Frame(0.0, dets)
        by_gt = {f.gt_ids[0]: f for f in gt_assoc_fuse(frame)}
        csba = fuse_frame(frame, CsbaParams())
        assert len(csba) == len(by_gt)
        for obj in csba:
            assert len(set(obj.gt_ids)) == 1
            np.testing.assert_allclose(obj.box.as_array(), by_gt[obj.gt_ids[0]].box.as_array(), atol=1e-9)


class TestAssignWindows:
    """Test window to GT frame attachment."""

    def test_nearest_frame(self):
        gt = [Frame(0.0, ()), Frame(0.5, ()), Frame(1.0, ())]
        w0 = Frame(0.0, [make_detection(timestamp=0.0), make_detection(timestamp=0.04)])
        w1 = Frame(0.46, [make_detection(timestamp=0.46), make_detection(timestamp=0.53)])
        assigned = assign_windows([w0, w1], gt)
        assert assigned == [[w0], [w1], []]

    def test_no_gt_frames(self):
        assert assign_windows([Frame(0.0, [make_detection()])], []) == []


class TestReport:
    """Test result table rendering."""

    def _rows(self):
        good = EvalReport(0.123456, 0.01, 2.5, 1.0, 0.99, 99, 0, 1)
        empty = EvalReport(None, None, None, 1.0, 0.0, 0, 0, 5)
        return [
            ResultRow("mild", "WLS-3D w/ CSBA-3D", good),
            ResultRow("large", "NMS-STD-3D", empty),
            ResultRow("mild", "WBF", good),
        ]

    def test_csv(self):
        text = to_csv(self._rows())
        records = list(csv.reader(io.StringIO(text)))
        assert tuple(records[0]) == COLUMNS
        assert records[1][2] == "0.1235"
        assert records[2][2] == NOT_APPLICABLE
        assert records[2][-1] == "5"

    def test_markdown_groups_by_noise(self):
        lines = to_markdown(self._rows(), title="grid").splitlines()
        assert lines[0] == "## grid"
        body = [line for line in lines if line.startswith("| mild") or line.startswith("| large")]
        assert [line.split("|")[1].strip() for line in body] == ["mild", "mild", "large"]
        assert "0.12" in body[0]

    def test_json(self):
        payload = json.loads(to_json(self._rows(), name="grid"))
        assert payload["name"] == "grid"
        assert payload["results"][1]["mATE"] is None
        assert payload["results"][0]["penalties"]["translation"] == 3.0

    def test_write_reports(self, temp_out_dir):
        paths = write_reports(self._rows(), temp_out_dir, ("csv", "json"), name="grid")
        assert [p.name for p in paths] == ["grid.csv", "grid.json"]
        assert all(p.exists() for p in paths)


class TestRunner:
    """Test end-to-end grid runs on tiny configs."""

    def test_run_writes_tables(self, temp_out_dir):
        result = run_experiment(small_config(gt_assoc=True), out_dir=temp_out_dir)
        assert [c.method for c in result.cells] == ["wls_csba", "nms_std", "late_average", "wls_gt_assoc"]
        assert sorted(p.name for p in result.files) == ["small.csv", "small.json", "small.md"]
        rows = list(csv.DictReader(io.StringIO((temp_out_dir / "small.csv").read_text(encoding="utf-8"))))
        assert [r["method"] for r in rows] == [
            "WLS-3D w/ CSBA-3D", "NMS-STD-3D", "DAIR-V2X-Late", "WLS-3D w/ GT-Assoc",
        ]
        csba = result.cells[0].report
        assert csba.tp + csba.fn == result.cells[1].report.tp + result.cells[1].report.fn

    def test_identical_csv_for_same_seed(self, tmp_path):
        config = small_config(formats=("csv",), workers=2)
        first = run_experiment(config, out_dir=tmp_path / "a").files[0].read_bytes()
        second = run_experiment(config, out_dir=tmp_path / "b").files[0].read_bytes()
        assert first == second

    def test_seed_override_changes_results(self, tmp_path):
        config = small_config(formats=("csv",))
        first = run_experiment(config, out_dir=tmp_path / "a").files[0].read_bytes()
        second = run_experiment(config, out_dir=tmp_path / "b", seed=99).files[0].read_bytes()
        assert first != second

    def test_generate_then_run_from_dataset(self, tmp_path):
        spec = write_json(tmp_path / "scene.json", {
            "scenes": 2, "seed": 4, "n_frames": 3, "n_objects": 4, "agents": ["mild", "large"],
        })
        manifests = generate_datasets(spec, tmp_path / "data")
        assert [m.parent.name for m in manifests] == ["scene000", "scene001"]

        row, datasets = load_datasets(tmp_path / "data")
        assert row.label == "mild+large"
        assert len(datasets) == 2

        config = small_config(methods=("wls_csba",), dataset_dir=str(tmp_path / "data"), formats=("csv",))
        result = run_experiment(config, out_dir=tmp_path / "out")
        assert len(result.cells) == 1
        assert result.cells[0].report.tp + result.cells[0].report.fn == 2 * 3 * 4

    def test_fused_predictions_written(self, tmp_path):
        spec = write_json(tmp_path / "scene.json", {
            "scenes": 2, "seed": 4, "n_frames": 3, "n_objects": 4, "agents": ["mild", "large"],
        })
        generate_datasets(spec, tmp_path / "data")
        config = small_config(methods=("wls_csba",), dataset_dir=str(tmp_path / "data"), formats=("csv",))

        result = run_experiment(config, out_dir=tmp_path / "out", fused_dir=tmp_path / "fused")

        cell = result.cells[0]
        scene_dir = tmp_path / "fused" / "mild+large" / "wls_csba"
        assert cell.fused_files == [scene_dir / "scene000.jsonl", scene_dir / "scene001.jsonl"]
        n_written = len(read_fused(scene_dir / "scene000.jsonl"))
        report = evaluate_files(scene_dir / "scene000.jsonl", tmp_path / "data" / "scene000" / "gt.jsonl")
        assert report.tp > 0
        assert report.tp + report.fn == 3 * 4
        assert report.tp + report.fp == n_written

    def test_no_fused_files_by_default(self, tmp_path):
        result = run_experiment(small_config(formats=("csv",)), out_dir=tmp_path / "out")
        assert all(cell.fused_files == [] for cell in result.cells)

    def test_association_counters_per_cell(self, tmp_path):
        result = run_experiment(small_config(formats=("csv",)), out_dir=tmp_path / "out")
        by_method = {cell.method: cell.statistics for cell in result.cells}
        assert by_method["wls_csba"]["matches"] > 0
        assert by_method["wls_csba"]["pairs"] >= by_method["wls_csba"]["matches"]
        assert by_method["nms_std"]["matches"] == 0

    def test_missing_dataset_dir(self, tmp_path):
        config = small_config(dataset_dir=str(tmp_path))
        with pytest.raises(ConfigurationError):
            run_experiment(config, out_dir=tmp_path / "out")

    def test_bad_scene_spec(self, tmp_path):
        spec = write_json(tmp_path / "scene.json", {"n_frames": 2, "frame_rate": -1})
        with pytest.raises(ConfigurationError):
            generate_datasets(spec, tmp_path / "data")

    def test_evaluate_files(self, tmp_path):
        frames = generate_gt(SceneSpec(n_frames=2, n_objects=3), seed=1)
        gt_path = tmp_path / "gt.jsonl"
        write_detections(gt_path, [d for f in frames for d in f.detections])
        report = evaluate_files(gt_path, gt_path)
        assert (report.tp, report.fp, report.fn) == (6, 0, 0)
        assert report.mATE == 0.0

        empty = tmp_path / "empty.jsonl"
        empty.write_text("", encoding="utf-8")
        report = evaluate_files(gt_path, empty, FpPenalties(translation=2.0))
        assert (report.tp, report.fp) == (0, 6)
        assert report.mATE == pytest.approx(2.0)


class TestCommandLine:
    """Test argument handling and exit codes."""

    @pytest.fixture(autouse=True)
    def quiet_logging(self, mocker):
        return mocker.patch("coopfusion.app.setup_logging")

    def test_run_passes_flags(self, mocker, tmp_path):
        fake = mocker.patch("coopfusion.bench.runner.run_experiment")
        fake.return_value.rows = []
        fake.return_value.config.name = "x"
        fake.return_value.files = []
        code = app.main([
            "run", "cfg.json", "--seed", "5", "--out-dir", str(tmp_path),
            "--format", "csv", "--format", "json", "--workers", "2",
            "--fused-dir", str(tmp_path / "fused"),
        ])
        assert code == 0
        fake.assert_called_once_with(
            "cfg.json", out_dir=str(tmp_path), formats=["csv", "json"], seed=5, workers=2,
            fused_dir=str(tmp_path / "fused"),
        )

    def test_workers_from_environment(self, mocker, monkeypatch):
        monkeypatch.setenv("COOPFUSION_WORKERS", "3")
        fake = mocker.patch("coopfusion.bench.runner.run_experiment")
        fake.return_value.rows = []
        fake.return_value.config.name = "x"
        fake.return_value.files = []
        assert app.main(["run", "cfg.json"]) == 0
        assert fake.call_args.kwargs["workers"] == 3

    def test_run_end_to_end(self, tmp_path, capsys):
        config = write_json(tmp_path / "cfg.json", {
            "name": "cli", "scenes": 1, "frames_per_scene": 2, "objects_min": 2, "objects_max": 3,
            "noise_rows": [["mild", "mild"]], "methods": ["wls_csba"],
        })
        code = app.main(["run", str(config), "--out-dir", str(tmp_path / "out")])
        assert code == 0
        assert "WLS-3D w/ CSBA-3D" in capsys.readouterr().out
        assert (tmp_path / "out" / "cli.csv").exists()

    def test_missing_config_exit_code(self, tmp_path, capsys):
        assert app.main(["run", str(tmp_path / "nope.json")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_out_of_scope_method_exit_code(self, tmp_path):
        config = write_json(tmp_path / "cfg.json", {"methods": ["psa"]})
        assert app.main(["run", str(config)]) == 1

    def test_gen_and_eval(self, tmp_path, capsys):
        spec = write_json(tmp_path / "scene.json", {"scenes": 1, "n_frames": 2, "n_objects": 3})
        assert app.main(["gen", str(spec), str(tmp_path / "data")]) == 0
        gt = tmp_path / "data" / "scene000" / "gt.jsonl"
        assert gt.exists()
        code = app.main(["eval", str(gt), str(gt), "--out-dir", str(tmp_path / "ev")])
        assert code == 0
        assert "| - | gt.jsonl | 0.00" in capsys.readouterr().out
        assert (tmp_path / "ev" / "eval.csv").exists()

    def test_eval_invalid_utf8_exit_code(self, tmp_path, capsys):
        spec = write_json(tmp_path / "scene.json", {"scenes": 1, "n_frames": 2, "n_objects": 3})
        assert app.main(["gen", str(spec), str(tmp_path / "data")]) == 0
        pred = tmp_path / "pred.jsonl"
        pred.write_bytes(b"\xff\xfe\n")
        gt = tmp_path / "data" / "scene000" / "gt.jsonl"
        assert app.main(["eval", str(pred), str(gt)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_run_fused_dir(self, tmp_path):
        config = write_json(tmp_path / "cfg.json", {
            "name": "cli", "scenes": 1, "frames_per_scene": 2, "objects_min": 2, "objects_max": 3,
            "noise_rows": [["mild", "mild"]], "methods": ["wls_csba"],
        })
        code = app.main([
            "run", str(config), "--out-dir", str(tmp_path / "out"), "--fused-dir", str(tmp_path / "fused"),
        ])
        assert code == 0
        assert (tmp_path / "fused" / "mild" / "wls_csba" / "scene000.jsonl").exists()

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            app.main(["frobnicate"])
