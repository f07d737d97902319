"""Pipeline orchestration: grid search, K-fold validation, the three-stage
run, the pixel-space baseline, inference benchmarking and report emission."""

from __future__ import annotations

import itertools
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autoencoder import (
    Autoencoder,
    AutoencoderConfig,
    LatentScaler,
    build_autoencoder,
    decode,
    encode_dataset,
    reconstruct,
    train_autoencoder,
)
from .dataio import DatasetSplit, VideoDataset, split_sequences
from .errors import FoldError, GridError, LeakageError
from .metrics import (
    IntervalReport,
    LatentStats,
    MetricReport,
    SSIMParams,
    kl_gauss,
    latent_stats,
    score_frames,
)
from .nn.network import Model
from .seqmodels import (
    SeqModelConfig,
    SeqModelKind,
    build_seq_model,
    predict_next,
    train_seq_model,
    window_dataset,
)
from .training import TrainRun, TrainSchedule, evaluate_loss

# hidden-layer axes are meaningless for the depth-free kinds
_LAYERLESS = {SeqModelKind.CNN3D, SeqModelKind.CRNN}


class IdTracker:
    """Guards test-set hygiene: any test id registered for a training or
    selection role raises immediately."""

    def __init__(self, test_ids: list[str]):
        self.test_ids = set(test_ids)
        self.log: list[tuple[str, int]] = []

    def use(self, ids: list[str], role: str) -> None:
        leaked = self.test_ids.intersection(ids)
        if leaked:
            raise LeakageError(
                f"test sequences {sorted(leaked)[:5]} reached stage {role!r}"
            )
        self.log.append((role, len(ids)))


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


def grid_enumerate(grid: dict[str, list], kind: SeqModelKind | None = None) -> list[dict]:
    """Full cartesian product of the grid axes in lexicographic axis order;
    the hidden-layer axis is dropped for kinds that have no depth knob."""
    axes = dict(grid)
    if kind is not None and SeqModelKind(kind) in _LAYERLESS:
        axes.pop("hidden_layers", None)
    for name, values in axes.items():
        if not values:
            raise GridError(f"grid axis {name!r} is empty")
    names = sorted(axes)
    return [dict(zip(names, combo)) for combo in itertools.product(*(axes[n] for n in names))]


@dataclass
class FoldStats:
    losses: list[float]
    mean: float
    std: float


def fold_stats(losses: list[float]) -> FoldStats:
    arr = np.asarray(losses, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return FoldStats(losses=[float(v) for v in losses], mean=float(arr.mean()), std=std)


def kfold_validate(
    config: SeqModelConfig,
    latents: np.ndarray,
    k_folds: int = 5,
    seed: int = 0,
    schedule: TrainSchedule | None = None,
) -> FoldStats:
    """K train/validation rotations split by sequence, never by frame; each
    sequence validates exactly once. Reports mean +/- sample std."""
    n = latents.shape[0]
    if k_folds < 2:
        raise FoldError(f"need at least 2 folds, got {k_folds}")
    if k_folds > n:
        raise FoldError(f"{k_folds} folds over {n} sequences")
    schedule = schedule or TrainSchedule()
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, k_folds)
    losses = []
    latent_shape = latents.shape[2:]
    for i, val_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        tr_in, tr_tg, _ = window_dataset(latents[train_idx], config.window)
        va_in, va_tg, _ = window_dataset(latents[val_idx], config.window)
        model = build_seq_model(config, latent_shape, seed)
        run = train_seq_model(model, tr_in, tr_tg, va_in, va_tg, schedule)
        losses.append(run.final_val_loss)
    return fold_stats(losses)


def _eval_seq_config(args) -> tuple[dict, FoldStats]:
    values, kind, latents, k_folds, seed, schedule = args
    config = SeqModelConfig(kind=kind, **values)
    return values, kfold_validate(config, latents, k_folds, seed, schedule)


def grid_search_seq(
    grid: dict[str, list],
    kind: SeqModelKind,
    latents: np.ndarray,
    k_folds: int = 5,
    seed: int = 0,
    schedule: TrainSchedule | None = None,
    jobs: int = 1,
) -> list[tuple[dict, FoldStats]]:
    """Evaluate every grid point by K-fold validation loss; result sorted
    ascending by mean fold loss (the selection criterion)."""
    combos = grid_enumerate(grid, kind)
    tasks = [(values, kind, latents, k_folds, seed, schedule) for values in combos]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_eval_seq_config, tasks))
    else:
        results = [_eval_seq_config(t) for t in tasks]
    return sorted(results, key=lambda cs: cs[1].mean)


def _eval_ae_config(args) -> tuple[dict, float]:
    values, train_frames, val_frames, seed, schedule = args
    config = AutoencoderConfig(
        **values,
        input_size=train_frames.shape[1],
        input_channels=train_frames.shape[3],
    )
    model = build_autoencoder(config, seed)
    train_autoencoder(model, train_frames, val_frames, schedule)
    # selection uses validation MSE regardless of the training loss
    val_mse = evaluate_loss(model, val_frames, val_frames, "mse")
    return values, val_mse


def grid_search_ae(
    grid: dict[str, list],
    train_frames: np.ndarray,
    val_frames: np.ndarray,
    seed: int = 0,
    schedule: TrainSchedule | None = None,
    jobs: int = 1,
) -> list[tuple[dict, float]]:
    """Autoencoder grid search ranked by validation MSE; frame geometry
    comes from the data, the grid carries only the searched axes."""
    combos = grid_enumerate(grid)
    tasks = [(values, train_frames, val_frames, seed, schedule) for values in combos]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_eval_ae_config, tasks))
    else:
        results = [_eval_ae_config(t) for t in tasks]
    return sorted(results, key=lambda cs: cs[1])


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineTiming:
    stage1_train_s: float = 0.0
    stage1_encode_s: float = 0.0
    stage2_train_s: float = 0.0
    stage2_predict_s: float = 0.0
    stage3_decode_s: float = 0.0

    @property
    def stage2_s(self) -> float:
        return self.stage2_train_s + self.stage2_predict_s

    @property
    def stage1_plus_3_s(self) -> float:
        return self.stage1_train_s + self.stage1_encode_s + self.stage3_decode_s

    @property
    def total_s(self) -> float:
        return self.stage2_s + self.stage1_plus_3_s

    def to_dict(self) -> dict:
        return {
            "stage1_train_s": self.stage1_train_s,
            "stage1_encode_s": self.stage1_encode_s,
            "stage2_train_s": self.stage2_train_s,
            "stage2_predict_s": self.stage2_predict_s,
            "stage3_decode_s": self.stage3_decode_s,
            "stage2_s": self.stage2_s,
            "stage1_plus_3_s": self.stage1_plus_3_s,
            "total_s": self.total_s,
        }


@dataclass
class PipelineResult:
    config: dict
    seed: int
    split: DatasetSplit
    seq_run: TrainRun
    prediction: MetricReport
    timing: PipelineTiming
    n_predictions: int
    ae_run: TrainRun | None = None
    ae_test: MetricReport | None = None
    latent_kl: float | None = None
    latent_kl_dropped_units: int = 0

    def to_dict(self) -> dict:
        metrics = {
            "mae": self.prediction.mae,
            "mse": self.prediction.mse,
            "ssim": self.prediction.ssim_mean,
            "kl": self.latent_kl,
        }
        return {
            "config": self.config,
            "seed": self.seed,
            "split": {
                "train": len(self.split.train_ids),
                "val": len(self.split.val_ids),
                "test": len(self.split.test_ids),
                "seed": self.split.seed,
            },
            "metrics": metrics,
            "n_predictions": self.n_predictions,
            "seq_run": self.seq_run.to_dict(),
            "ae_run": self.ae_run.to_dict() if self.ae_run else None,
            "ae_test": self.ae_test.to_dict() if self.ae_test else None,
            "intervals": self.prediction.intervals.to_dict() if self.prediction.intervals else None,
            "ssim_scores": self.prediction.ssim_scores,
            "timing": self.timing.to_dict(),
            "latent_kl_dropped_units": self.latent_kl_dropped_units,
        }


def _flat_frames(data: np.ndarray) -> np.ndarray:
    return data.reshape(-1, *data.shape[2:])


def safe_latent_kl(latents: np.ndarray) -> tuple[float, int]:
    """KL against N(0,1) over latent units, skipping constant (sigma = 0)
    units; returns (value, number of units skipped)."""
    stats = latent_stats(latents.reshape(-1, *latents.shape[2:]))
    alive = stats.sigma > 0
    dropped = int((~alive).sum())
    if not alive.any():
        return math.nan, dropped
    return kl_gauss(LatentStats(stats.mu[alive], stats.sigma[alive])), dropped


def run_pipeline(
    dataset: VideoDataset,
    ae_config: AutoencoderConfig,
    seq_config: SeqModelConfig,
    seed: int = 0,
    ae_schedule: TrainSchedule | None = None,
    seq_schedule: TrainSchedule | None = None,
    test_fraction: float = 0.2,
    val_fraction: float = 0.2,
    autoencoder: Autoencoder | None = None,
    ssim_params: SSIMParams | None = None,
    split_seed: int | None = None,
    standardize_latents: bool = False,
    kl_population: str = "test",
) -> PipelineResult:
    """Three stages end to end: train/reuse the autoencoder, train the
    predictor on latent windows, decode predicted test latents and score
    them against the ground-truth next frames.

    Test-partition sequences never reach a training or selection step; the
    id tracker raises on any violation. ``split_seed`` pins the partition
    independently of the model seed (model-comparison runs share one split).
    """
    split = split_sequences(
        dataset.ids, test_fraction, val_fraction, seed if split_seed is None else split_seed
    )
    tracker = IdTracker(split.test_ids)
    timing = PipelineTiming()
    train_ds = dataset.select(split.train_ids)
    val_ds = dataset.select(split.val_ids) if split.val_ids else None
    test_ds = dataset.select(split.test_ids)

    tracker.use(split.train_ids, "stage1-train")
    ae_run = None
    t0 = time.perf_counter()
    if autoencoder is None:
        autoencoder = build_autoencoder(ae_config, seed)
        if val_ds is not None:
            tracker.use(split.val_ids, "stage1-val")
        ae_run = train_autoencoder(
            autoencoder,
            _flat_frames(train_ds.data),
            _flat_frames(val_ds.data) if val_ds is not None else None,
            ae_schedule,
        )
        ae_run.final_test_loss = evaluate_loss(
            autoencoder, _flat_frames(test_ds.data), _flat_frames(test_ds.data), "mse"
        )
    timing.stage1_train_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    lat_train = encode_dataset(autoencoder, train_ds.data)
    lat_val = encode_dataset(autoencoder, val_ds.data) if val_ds is not None else None
    lat_test = encode_dataset(autoencoder, test_ds.data)
    scaler = None
    if standardize_latents:
        scaler = LatentScaler.fit(lat_train)  # fitted on training latents only
        lat_train = scaler.transform(lat_train)
        lat_val = scaler.transform(lat_val) if lat_val is not None else None
        lat_test = scaler.transform(lat_test)
    timing.stage1_encode_s = time.perf_counter() - t0

    recon_test = reconstruct(autoencoder, _flat_frames(test_ds.data))
    ae_test = score_frames(recon_test, _flat_frames(test_ds.data), ssim_params,
                           with_intervals=False)
    if kl_population not in ("test", "train"):
        raise ValueError(f"kl_population must be 'test' or 'train', got {kl_population!r}")
    latent_kl, dropped = safe_latent_kl(lat_test if kl_population == "test" else lat_train)

    k = seq_config.window
    tracker.use(split.train_ids, "stage2-train")
    tr_in, tr_tg, _ = window_dataset(lat_train, k)
    va_in, va_tg = (None, None)
    if lat_val is not None:
        tracker.use(split.val_ids, "stage2-val")
        va_in, va_tg, _ = window_dataset(lat_val, k)
    t0 = time.perf_counter()
    seq_model = build_seq_model(seq_config, lat_train.shape[2:], seed)
    seq_run = train_seq_model(seq_model, tr_in, tr_tg, va_in, va_tg, seq_schedule)
    timing.stage2_train_s = time.perf_counter() - t0

    te_in, te_tg, _ = window_dataset(lat_test, k)
    seq_run.final_test_loss = evaluate_loss(seq_model, te_in, te_tg, seq_config.loss)

    t0 = time.perf_counter()
    pred_latents = predict_next(seq_model, te_in)
    timing.stage2_predict_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    if scaler is not None:
        pred_latents = scaler.inverse(pred_latents)
    pred_frames = decode(autoencoder, pred_latents.astype(np.float32, copy=False))
    timing.stage3_decode_s = time.perf_counter() - t0

    truth = test_ds.data[:, k:].reshape(-1, *test_ds.data.shape[2:])
    prediction = score_frames(pred_frames, truth, ssim_params)
    expected = len(split.test_ids) * (dataset.data.shape[1] - k)
    assert len(pred_frames) == expected, "prediction count must be n_test * (T - window)"

    return PipelineResult(
        config={"autoencoder": ae_config.to_dict(), "sequence_model": seq_config.to_dict()},
        seed=seed,
        split=split,
        seq_run=seq_run,
        prediction=prediction,
        timing=timing,
        n_predictions=len(pred_frames),
        ae_run=ae_run,
        ae_test=ae_test,
        latent_kl=latent_kl,
        latent_kl_dropped_units=dropped,
    )


def run_baseline(
    dataset: VideoDataset,
    seq_config: SeqModelConfig,
    seed: int = 0,
    seq_schedule: TrainSchedule | None = None,
    test_fraction: float = 0.2,
    val_fraction: float = 0.2,
    ssim_params: SSIMParams | None = None,
    split_seed: int | None = None,
) -> PipelineResult:
    """Same predictor trained directly on raw frames (sigmoid output head),
    scored with the same metric suite."""
    if seq_config.output_activation != "sigmoid":
        seq_config = SeqModelConfig(**{**seq_config.to_dict(), "output_activation": "sigmoid"})
    split = split_sequences(
        dataset.ids, test_fraction, val_fraction, seed if split_seed is None else split_seed
    )
    tracker = IdTracker(split.test_ids)
    timing = PipelineTiming()
    train_ds = dataset.select(split.train_ids)
    val_ds = dataset.select(split.val_ids) if split.val_ids else None
    test_ds = dataset.select(split.test_ids)

    k = seq_config.window
    tracker.use(split.train_ids, "baseline-train")
    tr_in, tr_tg, _ = window_dataset(train_ds.data, k)
    va_in, va_tg = (None, None)
    if val_ds is not None:
        tracker.use(split.val_ids, "baseline-val")
        va_in, va_tg, _ = window_dataset(val_ds.data, k)
    t0 = time.perf_counter()
    model = build_seq_model(seq_config, train_ds.data.shape[2:], seed)
    seq_run = train_seq_model(model, tr_in, tr_tg, va_in, va_tg, seq_schedule)
    timing.stage2_train_s = time.perf_counter() - t0

    te_in, te_tg, _ = window_dataset(test_ds.data, k)
    seq_run.final_test_loss = evaluate_loss(model, te_in, te_tg, seq_config.loss)

    t0 = time.perf_counter()
    pred_frames = predict_next(model, te_in)
    timing.stage2_predict_s = time.perf_counter() - t0

    prediction = score_frames(pred_frames, te_tg, ssim_params)
    return PipelineResult(
        config={"autoencoder": None, "sequence_model": seq_config.to_dict()},
        seed=seed,
        split=split,
        seq_run=seq_run,
        prediction=prediction,
        timing=timing,
        n_predictions=len(pred_frames),
    )


# ---------------------------------------------------------------------------
# Benchmarking
# ---------------------------------------------------------------------------


@dataclass
class BenchReport:
    per_iteration_median_s: float
    per_iteration_mean_s: float
    iterations: int
    warmup: int
    hardware: str
    stage2_total_s: float | None = None
    stage1_plus_3_total_s: float | None = None
    energy_joules: float | None = None  # fillable from external power instrumentation

    def to_dict(self) -> dict:
        return {
            "per_iteration_median_s": self.per_iteration_median_s,
            "per_iteration_mean_s": self.per_iteration_mean_s,
            "iterations": self.iterations,
            "warmup": self.warmup,
            "hardware": self.hardware,
            "stage2_total_s": self.stage2_total_s,
            "stage1_plus_3_total_s": self.stage1_plus_3_total_s,
            "energy_joules": self.energy_joules,
        }


def hardware_descriptor() -> str:
    return f"{platform.machine()} {platform.processor() or 'cpu'} ({platform.system()})"


def benchmark_inference(
    model: Model,
    inputs: np.ndarray,
    warmup: int = 10,
    iters: int = 100,
) -> BenchReport:
    """Wall-clock time per single-window eval-mode prediction, cycling over
    the provided windows; warmup iterations excluded from statistics."""
    if iters < 30:
        raise ValueError(f"iters must be >= 30, got {iters}")
    if warmup < 5:
        raise ValueError(f"warmup must be >= 5, got {warmup}")
    if inputs.ndim == 4:
        inputs = inputs[None]
    singles = [np.ascontiguousarray(inputs[i : i + 1]) for i in range(len(inputs))]
    for i in range(warmup):
        model.forward(singles[i % len(singles)], train=False)
    times = np.empty(iters, dtype=np.float64)
    for i in range(iters):
        x = singles[i % len(singles)]
        t0 = time.perf_counter()
        model.forward(x, train=False)
        times[i] = time.perf_counter() - t0
    return BenchReport(
        per_iteration_median_s=float(np.median(times)),
        per_iteration_mean_s=float(times.mean()),
        iterations=iters,
        warmup=warmup,
        hardware=hardware_descriptor(),
    )


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def interval_histogram_svg(report: IntervalReport, width: int = 480, height: int = 300) -> str:
    """Bar chart of the four interval counts as a standalone SVG document."""
    margin = 40
    bar_zone = width - 2 * margin
    bar_w = bar_zone // len(report.buckets)
    peak = max(b.count for b in report.buckets) or 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width // 2}" y="18" text-anchor="middle" font-size="13">'
        f"SSIM intervals (range width {report.range_width:.4f})</text>",
    ]
    for i, b in enumerate(report.buckets):
        bh = int((height - 2 * margin) * b.count / peak)
        x = margin + i * bar_w
        y = height - margin - bh
        parts.append(
            f'<rect x="{x + 4}" y="{y}" width="{bar_w - 8}" height="{bh}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{x + bar_w // 2}" y="{height - margin + 14}" text-anchor="middle" '
            f'font-size="11">{b.label}</text>'
        )
        parts.append(
            f'<text x="{x + bar_w // 2}" y="{max(y - 4, 12)}" text-anchor="middle" '
            f'font-size="11">{b.count}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def emit_report(
    runs: list[dict],
    out_path: str | Path,
    bench: BenchReport | None = None,
    intervals: IntervalReport | None = None,
    svg_path: str | Path | None = None,
) -> dict:
    """Write the consolidated JSON report; rows of the comparison table are
    sorted by test SSIM descending. Returns the document."""
    if not runs:
        raise ValueError("emit_report needs at least one run")

    def _ssim_of(run: dict) -> float:
        value = run.get("metrics", {}).get("ssim")
        return value if value is not None else -math.inf

    comparison = [
        {
            "model": (run.get("config", {}).get("sequence_model") or {}).get("kind", "?"),
            "seed": run.get("seed"),
            "test_ssim": run.get("metrics", {}).get("ssim"),
            "test_mse": run.get("metrics", {}).get("mse"),
            "test_mae": run.get("metrics", {}).get("mae"),
            "kl": run.get("metrics", {}).get("kl"),
        }
        for run in sorted(runs, key=_ssim_of, reverse=True)
    ]
    doc: dict = {"runs": runs, "comparison": comparison}
    if bench is not None:
        doc["benchmark"] = bench.to_dict()
    if intervals is not None:
        doc["intervals"] = intervals.to_dict()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(doc, indent=2))
    if svg_path is not None and intervals is not None:
        Path(svg_path).write_text(interval_histogram_svg(intervals))
    return doc
