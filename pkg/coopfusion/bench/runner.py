"""
Benchmark Runner

Runs the (noise row x method) grid end to end: generate or load the
pseudo-collaborative datasets, window each detection stream, fuse every
window with the cell's method and evaluate against ground truth. Cells run
on a thread pool; results are collected in grid order.
"""

import bisect
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.association import CsbaParams
from ..core.baselines import (
    late_average, late_closest_to_sensor, nms_giou_3d, nms_std_3d, wbf_3d,
)
from ..core.datagen import (
    MANIFEST_NAME, NoiseConfig, PseudoCollabDataset, SceneSpec, load_annotations,
    load_dataset, make_pseudo_collab, save_dataset,
)
from ..core.fusion import fuse_frame, wls_fuse
from ..core.logging_cfg import RunStatistics
from ..core.metrics import EvalReport, FpPenalties, MatchResult, evaluate_matches, match_to_gt
from ..core.model import (
    ConfigurationError, CoopFusionError, Detection, Frame, FusedObject, InvalidInputError,
    OutOfScopeError,
)
from ..core.serialization import read_fused, write_fused
from .config import ExperimentConfig, NoiseRow, Thresholds, load_config
from .report import ResultRow, write_reports

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class CellContext:
    """Parameters shared by every frame of one grid cell."""
    params: CsbaParams
    thresholds: Thresholds
    sensor_positions: Optional[Mapping[int, Sequence[float]]] = None
    stats: Optional[RunStatistics] = None


MethodFn = Callable[[Frame, CellContext], List[FusedObject]]


def gt_assoc_fuse(frame: Frame) -> List[FusedObject]:
    """
    Fuse with perfect association: group detections by gt_id across agents.

    Args:
        frame: Detections carrying gt_id

    Returns:
        One WLS-fused object per gt_id, in order of first appearance
    """
    groups: Dict[str, List[Tuple[Detection, int]]] = {}
    for agent, dets in frame.by_agent().items():
        for index, det in enumerate(dets):
            if det.gt_id is None:
                raise InvalidInputError(
                    f"Detection {index} of agent {agent} has no gt_id for ground-truth association"
                )
            groups.setdefault(det.gt_id, []).append((det, index))
    return [
        wls_fuse([d for d, _ in members], [i for _, i in members])
        for members in groups.values()
    ]


def _pooled(frame: Frame) -> List[Detection]:
    return [d for dets in frame.by_agent().values() for d in dets]


METHODS: Dict[str, Tuple[str, MethodFn]] = {
    "wls_csba": ("WLS-3D w/ CSBA-3D", lambda f, ctx: fuse_frame(f, ctx.params, ctx.stats)),
    "wls_gt_assoc": ("WLS-3D w/ GT-Assoc", lambda f, ctx: gt_assoc_fuse(f)),
    "nms_std": ("NMS-STD-3D", lambda f, ctx: nms_std_3d(_pooled(f), ctx.thresholds.iou)),
    "nms_giou": ("GIoU-NMS-3D", lambda f, ctx: nms_giou_3d(_pooled(f), ctx.thresholds.giou)),
    "wbf": ("WBF", lambda f, ctx: wbf_3d(_pooled(f), ctx.thresholds.iou)),
    "late_closest": (
        "InfraDet3D-Late",
        lambda f, ctx: late_closest_to_sensor(_pooled(f), ctx.thresholds.dist, ctx.sensor_positions),
    ),
    "late_average": ("DAIR-V2X-Late", lambda f, ctx: late_average(_pooled(f), ctx.thresholds.dist)),
}

ALIASES = {
    "csba": "wls_csba",
    "gt_assoc": "wls_gt_assoc",
    "nms_std_3d": "nms_std",
    "nms_giou_3d": "nms_giou",
    "giou_nms": "nms_giou",
    "wbf_3d": "wbf",
    "infradet3d_late": "late_closest",
    "late_closest_to_sensor": "late_closest",
    "dair_v2x_late": "late_average",
}

OUT_OF_SCOPE = {"psa"}


def resolve_method(name: str) -> str:
    """Canonical registry key for a method name or alias."""
    key = name.strip().lower().replace("-", "_")
    key = ALIASES.get(key, key)
    if key in OUT_OF_SCOPE:
        raise OutOfScopeError(f"Method '{name}' is out of scope and not implemented")
    if key not in METHODS:
        raise ConfigurationError(
            f"Unknown method '{name}' (available: {', '.join(sorted(METHODS))})"
        )
    return key


def experiment_methods(config: ExperimentConfig) -> List[str]:
    """Resolved method keys in config order, GT-assoc appended when requested."""
    keys: List[str] = []
    for name in config.methods:
        key = resolve_method(name)
        if key not in keys:
            keys.append(key)
    if config.gt_assoc and "wls_gt_assoc" not in keys:
        keys.append("wls_gt_assoc")
    return keys


def scene_seeds(seed: int, scenes: int) -> List[int]:
    """Independent per-scene seeds, shared by every noise row."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(scenes)]


def synthesize_row(config: ExperimentConfig, row: NoiseRow) -> List[PseudoCollabDataset]:
    """Datasets of one noise row; GT scenes are identical across rows."""
    datasets = []
    for k, seed in enumerate(scene_seeds(config.seed, config.scenes)):
        n_objects = int(np.random.default_rng(seed).integers(config.objects_min, config.objects_max + 1))
        spec = SceneSpec(
            n_frames=config.frames_per_scene,
            frame_rate=config.frame_rate,
            n_objects=n_objects,
            area=config.area,
            min_separation=config.min_separation,
            name=f"scene{k:03d}",
        )
        datasets.append(make_pseudo_collab(
            spec, row.agents, seed, jitter=config.delta_t,
            sensor_positions=config.sensor_positions,
        ))
    return datasets


def _dataset_dirs(root: Path) -> List[Path]:
    if (root / MANIFEST_NAME).exists():
        return [root]
    dirs = sorted(p.parent for p in root.glob(f"*/{MANIFEST_NAME}"))
    if not dirs:
        raise ConfigurationError(f"No dataset manifest found under {root}")
    return dirs


def load_datasets(root: PathLike) -> Tuple[NoiseRow, List[PseudoCollabDataset]]:
    """Load a dataset directory (or a directory of scene directories)."""
    datasets = [load_dataset(d) for d in _dataset_dirs(Path(root))]
    first = datasets[0]
    agents = tuple(first.noise[a] for a in first.agent_ids if a in first.noise)
    if len(agents) != len(first.agent_ids):
        agents = tuple(NoiseConfig(0.0, 0.0, 0.0, label="loaded") for _ in first.agent_ids)
    return NoiseRow(agents), datasets


def _nearest_index(times: Sequence[float], t: float) -> int:
    k = bisect.bisect_left(times, t)
    candidates = [c for c in (k - 1, k) if 0 <= c < len(times)]
    return min(candidates, key=lambda c: (abs(times[c] - t), c))


def assign_windows(windows: Sequence[Frame], gt_frames: Sequence[Frame]) -> List[List[Frame]]:
    """Windows attached to each GT frame, by nearest mean timestamp."""
    assigned: List[List[Frame]] = [[] for _ in gt_frames]
    if not gt_frames:
        return assigned
    times = [f.timestamp for f in gt_frames]
    for window in windows:
        t = float(np.mean([d.timestamp for d in window.detections]))
        assigned[_nearest_index(times, t)].append(window)
    return assigned


@dataclass
class CellResult:
    row: NoiseRow
    method: str
    report: EvalReport
    statistics: Dict[str, float] = field(default_factory=dict)
    fused_files: List[Path] = field(default_factory=list)


def run_cell(
    config: ExperimentConfig,
    row: NoiseRow,
    method: str,
    datasets: Sequence[PseudoCollabDataset],
) -> CellResult:
    """
    Fuse and evaluate one (noise row, method) cell.

    Args:
        config: Experiment configuration
        row: Noise row the datasets were generated with
        method: Registry key
        datasets: One dataset per scene

    Returns:
        CellResult with the evaluation report and run statistics
    """
    display, fn = METHODS[method]
    params = config.csba.for_row(row.agents)
    stats = RunStatistics(f"{row.label}/{method}")
    matches = MatchResult()
    fused_files: List[Path] = []
    stats.start()
    for k, dataset in enumerate(datasets):
        ctx = CellContext(
            params=params,
            thresholds=config.thresholds,
            sensor_positions=config.sensor_positions or dataset.sensor_positions,
            stats=stats,
        )
        windows = assign_windows(dataset.windows(config.delta_t), dataset.gt)
        scene_fused: List[FusedObject] = []
        for gt_frame, frame_windows in zip(dataset.gt, windows):
            fused: List[FusedObject] = []
            for window in frame_windows:
                out = fn(window, ctx)
                stats.log_frame(len(window), len(out))
                fused.extend(out)
            matches.extend(match_to_gt(fused, list(gt_frame.detections)))
            scene_fused.extend(fused)
        if config.fused_dir:
            path = Path(config.fused_dir) / row.label / method / f"scene{k:03d}.jsonl"
            write_fused(path, scene_fused)
            fused_files.append(path)
    stats.stop()
    stats.log_summary()
    report = evaluate_matches(matches, config.penalties_for(params))
    logger.info(
        f"{row.label:>12} {display:<20} P={report.precision:.3f} R={report.recall:.3f} "
        f"lambda_max={params.lambda_max:.2f}"
    )
    return CellResult(
        row=row, method=method, report=report,
        statistics=stats.get_statistics(), fused_files=fused_files,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: List[CellResult]
    files: List[Path] = field(default_factory=list)

    @property
    def rows(self) -> List[ResultRow]:
        return [
            ResultRow(noise=c.row.label, method=METHODS[c.method][0], report=c.report)
            for c in self.cells
        ]


def run_grid(config: ExperimentConfig) -> List[CellResult]:
    """Evaluate every cell of the grid; results follow (row, method) order."""
    methods = experiment_methods(config)
    if config.dataset_dir:
        row, datasets = load_datasets(config.dataset_dir)
        plan = [(row, datasets)]
    else:
        plan = [(row, None) for row in config.noise_rows]

    cells: List[CellResult] = []
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        for row, datasets in plan:
            if datasets is None:
                logger.info(f"Generating {config.scenes} scenes for noise row '{row.label}'")
                datasets = synthesize_row(config, row)
            futures = [pool.submit(run_cell, config, row, m, datasets) for m in methods]
            cells.extend(f.result() for f in futures)
    return cells


def run_experiment(
    config_path: Union[PathLike, ExperimentConfig],
    out_dir: Optional[PathLike] = None,
    formats: Optional[Sequence[str]] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    fused_dir: Optional[PathLike] = None,
) -> ExperimentResult:
    """
    Run a full experiment and write its result tables.

    Args:
        config_path: JSON config file or an ExperimentConfig
        out_dir: Override of output_dir
        formats: Override of output formats
        seed: Override of the experiment seed
        workers: Override of the thread pool size
        fused_dir: Directory for per-scene fused predictions (JSON-lines)

    Returns:
        ExperimentResult with cell reports and written files
    """
    config = config_path if isinstance(config_path, ExperimentConfig) else load_config(config_path)
    config = config.with_overrides(
        output_dir=None if out_dir is None else str(out_dir),
        formats=None if not formats else tuple(formats),
        seed=seed,
        workers=workers,
        fused_dir=None if fused_dir is None else str(fused_dir),
    )
    logger.info(f"Running experiment '{config.name}' (seed {config.seed})")

    result = ExperimentResult(config=config, cells=run_grid(config))
    result.files = write_reports(result.rows, config.output_dir, config.formats, config.name)
    fused_files = [p for c in result.cells for p in c.fused_files]
    if fused_files:
        logger.info(f"Wrote {len(fused_files)} fused prediction files under {config.fused_dir}")
    return result


def generate_datasets(spec_path: PathLike, out_dir: PathLike, seed: Optional[int] = None) -> List[Path]:
    """
    Write pseudo-collaborative scenes described by a JSON scene spec.

    The spec holds SceneSpec fields plus `agents` (noise configs), `scenes`
    (count), `seed` and optional `sensor_positions`.

    Returns:
        Manifest paths, one per scene
    """
    path = Path(spec_path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot read scene spec {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"Scene spec {path} must be a JSON object")

    try:
        agents = [NoiseConfig.parse(a) for a in data.get("agents", ["mild", "mild"])]
        scenes = int(data.get("scenes", 1))
        base_seed = int(seed if seed is not None else data.get("seed", 0))
        sensors = data.get("sensor_positions")
        sensors = None if sensors is None else {int(a): p for a, p in sensors.items()}
        spec_fields = {
            k: data[k] for k in ("n_frames", "frame_rate", "n_objects", "min_separation")
            if k in data
        }
        if "area" in data:
            area = data["area"]
            spec_fields["area"] = (area, area) if isinstance(area, (int, float)) else tuple(area)
        jitter = float(data.get("delta_t", 0.1))
    except (TypeError, ValueError, AttributeError) as e:
        raise ConfigurationError(f"Invalid scene spec {path}: {e}") from e

    out_dir = Path(out_dir)
    manifests = []
    for k, scene_seed in enumerate(scene_seeds(base_seed, scenes)):
        try:
            spec = SceneSpec(name=f"scene{k:03d}", **spec_fields)
        except (TypeError, CoopFusionError) as e:
            raise ConfigurationError(f"Invalid scene spec {path}: {e}") from e
        dataset = make_pseudo_collab(spec, agents, scene_seed, jitter=jitter, sensor_positions=sensors)
        manifests.append(save_dataset(dataset, out_dir / spec.name))
    logger.info(f"Generated {scenes} scenes in {out_dir}")
    return manifests


def evaluate_files(
    pred_path: PathLike, gt_path: PathLike, penalties: Optional[FpPenalties] = None
) -> EvalReport:
    """Evaluate fused predictions (JSON-lines) against GT annotations."""
    preds = read_fused(pred_path)
    gt_frames = load_annotations(gt_path)
    if not gt_frames:
        matches = MatchResult(fp=list(preds))
        return evaluate_matches(matches, penalties)

    times = [f.timestamp for f in gt_frames]
    per_frame: Dict[int, List[FusedObject]] = {k: [] for k in range(len(gt_frames))}
    for pred in preds:
        per_frame[_nearest_index(times, pred.timestamp)].append(pred)

    matches = MatchResult()
    for k, frame in enumerate(gt_frames):
        matches.extend(match_to_gt(per_frame[k], list(frame.detections)))
    return evaluate_matches(matches, penalties)
