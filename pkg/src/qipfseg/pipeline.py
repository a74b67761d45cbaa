"""End-to-end orchestration: config, per-pixel model fitting, uncertainty
maps for all four methods, metric sweeps, timing, and file emission.

All randomness flows from one master seed through derive_seed, so a run
is reproducible byte for byte.  Wall-clock timings are kept outside the
deterministic report (see export).
"""

import json
import time
import zlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import kernels, metrics, qipf
from .baselines import (
    UncertaintyMap,
    ensemble_uncertainty,
    mc_dropout_uncertainty,
    softmax_uncertainty,
)
from .errors import (
    DegenerateField,
    DegenerateSamples,
    InvalidConfig,
    IoFailure,
    ShapeMismatch,
)
from .ften import load_features, read_tensor, store_features, write_tensor  # noqa: F401 (re-exported pipeline surface)
from .kde import Bandwidth, SampleSet, silverman_bandwidth, subsample
from .toymodel import (
    FeatureTensor,
    SceneConfig,
    TrainConfig,
    _softmax,
    forward,
    generate_scene,
    train,
)

METHODS = ("qipf", "softmax", "mc_dropout", "ensemble")
SILVERMAN_CV_GRID = (0.5, 1.0, 5.0, 10.0, 30.0, 50.0, 100.0)


@dataclass(frozen=True)
class ExperimentConfig:
    # scene
    height: int = 32
    width: int = 32
    classes: int = 3
    noise: float = 0.05
    ood: bool = True
    shapes: int = 4
    # dataset split
    train_frames: int = 20
    val_frames: int = 5
    test_frames: int = 10
    # classifier
    hidden: int = 32
    lr: float = 0.05
    epochs: int = 6
    batch: int = 64
    dropout_rate: float = 0.1
    # uncertainty decomposition
    modes: int = 12
    silverman_factor: float = 1.0
    silverman_cv: bool = False
    n_max: int = 256
    normalization: str = "l2"
    whiten: bool = False
    granularity: str = "pixel"  # or "class"
    # baselines
    passes: int = 100
    ensemble_size: int = 8
    # evaluation
    patch: int = 8
    t_points: int = 21
    seed: int = 0

    def __post_init__(self):
        for name in ("train_frames", "val_frames", "test_frames", "hidden",
                     "epochs", "batch", "modes", "n_max", "patch", "t_points"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.lr <= 0 or self.silverman_factor <= 0:
            raise InvalidConfig("rates and factors must be > 0")
        if self.normalization not in qipf.NORMALIZATIONS:
            raise InvalidConfig(f"unknown normalization {self.normalization!r}")
        if self.granularity not in ("pixel", "class"):
            raise InvalidConfig(f"unknown granularity {self.granularity!r}")
        if self.passes < 2 or self.ensemble_size < 2:
            raise InvalidConfig("passes and ensemble_size must be >= 2")
        if self.t_points < 2:
            raise InvalidConfig("t_points must be >= 2")

    @property
    def t_grid(self):
        return tuple(i / (self.t_points - 1) for i in range(self.t_points))

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_config(text):
    """Parse flat key=value config text; '#' starts a comment.

    Every key has a default; unknown keys are an error so typos fail fast.
    """
    field_types = {f.name: f.type for f in fields(ExperimentConfig)}
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in field_types:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        kind = field_types[key]
        try:
            if kind == "bool" or kind is bool:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                kwargs[key] = value.lower() in ("true", "1")
            elif kind == "int" or kind is int:
                kwargs[key] = int(value)
            elif kind == "float" or kind is float:
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except ValueError as exc:
            raise InvalidConfig(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return ExperimentConfig(**kwargs)


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def derive_seed(master, *tags):
    """Documented seed-splitting rule: master seed plus CRC32 of each tag."""
    entropy = [int(master) & 0xFFFFFFFFFFFFFFFF]
    entropy += [zlib.crc32(tag.encode("utf-8")) for tag in tags]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class MethodResult:
    sweep: metrics.ThresholdSweep
    averages: dict
    u_min: float
    u_max: float
    forward_passes_per_frame: float


@dataclass
class RunReport:
    seed: int
    config: dict
    backend: str
    silverman_factor_used: float
    train_accuracy: float
    methods: dict  # name -> MethodResult
    timings: dict  # name -> seconds (excluded from the deterministic JSON)
    maps: dict  # name -> list of H x W arrays (heatmaps; not serialized)


class _LocationModel:
    """QipfModel plus the optional whitening transform of its location."""

    __slots__ = ("model", "mean", "std")

    def __init__(self, model, mean=None, std=None):
        self.model = model
        self.mean = mean
        self.std = std

    def point(self, feature_vec):
        if self.mean is None:
            return feature_vec
        return (feature_vec - self.mean) / self.std


def _fit_one(samples_matrix, cfg, factor, seed):
    mean = std = None
    if cfg.whiten:
        mean = samples_matrix.mean(axis=0)
        std = samples_matrix.std(axis=0, ddof=1)
        std = np.where(std > 0, std, 1.0)
        samples_matrix = (samples_matrix - mean) / std
    samples = subsample(SampleSet(samples_matrix), cfg.n_max, seed)
    sigma = Bandwidth(silverman_bandwidth(samples).sigma * factor)
    model = qipf.fit(samples, sigma, cfg.modes, cfg.normalization)
    return _LocationModel(model, mean, std)


def fit_qipf_per_pixel(train_features, cfg, factor=None, labels=None):
    """Fit one decomposer per pixel location (or per class).

    Per-pixel: each location's samples are its feature vectors across the
    training frames.  Per-class: samples are pooled over all pixels of
    one ground-truth class (labels required).  Degenerate locations map
    to None and later receive maximum uncertainty.
    """
    if len(train_features) < 2:
        raise InvalidConfig("need at least 2 training frames")
    factor = cfg.silverman_factor if factor is None else factor
    h, w, _ = train_features[0].features.shape
    stack = np.stack([ft.features for ft in train_features])  # (T, H, W, F)

    if cfg.granularity == "class":
        if labels is None:
            raise InvalidConfig("class granularity needs training labels")
        label_stack = np.stack(labels)
        models = {}
        for c in range(cfg.classes):
            rows = stack[label_stack == c]
            try:
                models[c] = _fit_one(rows, cfg, factor, derive_seed(cfg.seed, "subsample", f"class{c}"))
            except (DegenerateSamples, DegenerateField):
                models[c] = None
        return models

    models = {}
    for r in range(h):
        for c in range(w):
            try:
                models[(r, c)] = _fit_one(
                    stack[:, r, c, :], cfg, factor,
                    derive_seed(cfg.seed, "subsample", f"px{r}_{c}"),
                )
            except (DegenerateSamples, DegenerateField):
                models[(r, c)] = None
    return models


def qipf_uncertainty_map(models, test_features, cfg):
    """Per-pixel argmax moment index, normalized by the mode count.

    Degenerate (unfitted) locations get maximum uncertainty 1.0.
    """
    feats = test_features.features
    h, w, _ = feats.shape
    values = np.ones((h, w))

    if cfg.granularity == "class":
        preds = test_features.preds
        for c, loc in models.items():
            mask = preds == c
            if loc is None or not mask.any():
                continue
            points = loc.point(feats[mask])
            spectra = qipf.moments_batch(loc.model, points)
            values[mask] = (np.argmax(spectra, axis=1) + 1) / loc.model.m
        return UncertaintyMap(values, "qipf")

    if (h - 1, w - 1) not in models:
        raise ShapeMismatch("model grid does not match feature shape")
    for r in range(h):
        for c in range(w):
            loc = models[(r, c)]
            if loc is None:
                continue
            spectrum = qipf.moments(loc.model, loc.point(feats[r, c]))
            index = qipf.uncertainty_index(spectrum)
            values[r, c] = qipf.normalized_uncertainty(index, loc.model.m)
    return UncertaintyMap(values, "qipf")


def _patch_mean(umap, patch):
    return metrics.patch_reduce(umap.values, patch, "mean")


def _method_maps(method, cfg, classifier, ensemble, models, frames, phase):
    """Uncertainty maps of one method over a list of scenes."""
    maps = []
    for i, scene in enumerate(frames):
        if method == "qipf":
            ft = forward(classifier, scene)
            maps.append(qipf_uncertainty_map(models, ft, cfg))
        elif method == "softmax":
            maps.append(softmax_uncertainty(forward(classifier, scene)))
        elif method == "mc_dropout":
            maps.append(
                mc_dropout_uncertainty(
                    classifier, scene, cfg.passes,
                    derive_seed(cfg.seed, "mc", phase, str(i)),
                )
            )
        else:
            maps.append(ensemble_uncertainty(ensemble, scene))
    return maps


def select_silverman_factor(train_features, val_scenes, classifier, cfg,
                            grid=SILVERMAN_CV_GRID, labels=None):
    """Cross-validate the bandwidth factor by PAvPU at t=0.5 on validation."""
    val_fts = [forward(classifier, s) for s in val_scenes]
    acc = np.concatenate(
        [
            metrics.patch_reduce(
                ~metrics.error_map(ft.preds, s.labels), cfg.patch, "accurate_flag"
            ).ravel()
            for ft, s in zip(val_fts, val_scenes)
        ]
    )
    best_factor, best_score = grid[0], -1.0
    for factor in grid:
        models = fit_qipf_per_pixel(train_features, cfg, factor, labels)
        unc = np.concatenate(
            [_patch_mean(qipf_uncertainty_map(models, ft, cfg), cfg.patch).ravel() for ft in val_fts]
        )
        u_min, u_max = float(unc.min()), float(unc.max())
        score = metrics.scores(
            metrics.confusion(acc, unc, metrics.threshold_value(u_min, u_max, 0.5))
        )["PAvPU"]
        if score is not None and score > best_score:
            best_factor, best_score = factor, score
    return best_factor


def run_experiment(cfg):
    """Full pipeline: scenes, training, four uncertainty methods, sweeps."""
    scene_cfg = SceneConfig(cfg.height, cfg.width, cfg.classes, cfg.noise,
                            ood=False, n_shapes=cfg.shapes)
    test_cfg = SceneConfig(cfg.height, cfg.width, cfg.classes, cfg.noise,
                           ood=cfg.ood, n_shapes=cfg.shapes)
    train_scenes = [generate_scene(derive_seed(cfg.seed, "scene", "train", str(i)), scene_cfg)
                    for i in range(cfg.train_frames)]
    # validation frames share the test distribution (including OOD regions)
    # so the per-method threshold range is calibrated on what it will see
    val_scenes = [generate_scene(derive_seed(cfg.seed, "scene", "val", str(i)), test_cfg)
                  for i in range(cfg.val_frames)]
    test_scenes = [generate_scene(derive_seed(cfg.seed, "scene", "test", str(i)), test_cfg)
                   for i in range(cfg.test_frames)]

    hyper = TrainConfig(cfg.hidden, cfg.lr, cfg.epochs, cfg.batch, cfg.dropout_rate)
    classifier = train(train_scenes, hyper, derive_seed(cfg.seed, "train", "main"))
    ensemble = [train(train_scenes, hyper, derive_seed(cfg.seed, "train", "ens", str(j)))
                for j in range(cfg.ensemble_size)]

    train_fts = [forward(classifier, s) for s in train_scenes]
    train_labels = [s.labels for s in train_scenes] if cfg.granularity == "class" else None
    factor = cfg.silverman_factor
    if cfg.silverman_cv:
        factor = select_silverman_factor(train_fts, val_scenes, classifier, cfg,
                                         labels=train_labels)
    models = fit_qipf_per_pixel(train_fts, cfg, factor, train_labels)

    # patch-level accuracy flags of the test frames (deterministic forwards)
    test_fts = [forward(classifier, s) for s in test_scenes]
    acc_flags = np.concatenate(
        [
            metrics.patch_reduce(
                ~metrics.error_map(ft.preds, s.labels), cfg.patch, "accurate_flag"
            ).ravel()
            for ft, s in zip(test_fts, test_scenes)
        ]
    )

    method_results = {}
    timings = {}
    heatmaps = {}
    for method in METHODS:
        val_maps = _method_maps(method, cfg, classifier, ensemble, models, val_scenes, "val")
        val_patches = np.concatenate([_patch_mean(m, cfg.patch).ravel() for m in val_maps])
        u_min, u_max = float(val_patches.min()), float(val_patches.max())
        if u_max <= u_min:
            u_max = u_min + 1e-9

        passes_before = classifier.forward_count + sum(m.forward_count for m in ensemble)
        t0 = time.perf_counter()
        test_maps = _method_maps(method, cfg, classifier, ensemble, models, test_scenes, "test")
        elapsed = time.perf_counter() - t0
        passes_after = classifier.forward_count + sum(m.forward_count for m in ensemble)

        unc = np.concatenate([_patch_mean(m, cfg.patch).ravel() for m in test_maps])
        sw = metrics.sweep(acc_flags, unc, u_min, u_max, cfg.t_grid)
        method_results[method] = MethodResult(
            sweep=sw,
            averages=metrics.average_scores(sw),
            u_min=u_min,
            u_max=u_max,
            forward_passes_per_frame=(passes_after - passes_before) / len(test_scenes),
        )
        timings[method] = max(elapsed, 1e-9)
        heatmaps[method] = [m.values for m in test_maps]

    return RunReport(
        seed=cfg.seed,
        config=cfg.to_dict(),
        backend=kernels.BACKEND,
        silverman_factor_used=factor,
        train_accuracy=classifier.final_train_accuracy,
        methods=method_results,
        timings=timings,
        maps=heatmaps,
    )


# ---------------------------------------------------------------------------
# serialization


def report_to_json(report):
    """Deterministic JSON of a RunReport.

    Wall-clock timings are intentionally excluded: two runs with one seed
    must serialize byte-identically, and timings never can.  They are
    written separately (timings.json) by export().
    """
    payload = {
        "seed": report.seed,
        "config": report.config,
        "backend": report.backend,
        "silverman_factor_used": report.silverman_factor_used,
        "train_accuracy": report.train_accuracy,
        "methods": {
            name: {
                "t": list(res.sweep.t_values),
                "scores": [
                    {k: (None if v is None else v) for k, v in s.items()}
                    for s in res.sweep.scores
                ],
                "counts": [
                    [c.n_ac, c.n_au, c.n_ic, c.n_iu] for c in res.sweep.counts
                ],
                "averages": res.averages,
                "u_min": res.u_min,
                "u_max": res.u_max,
                "forward_passes_per_frame": res.forward_passes_per_frame,
            }
            for name, res in report.methods.items()
        },
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _fmt(v):
    return "NA" if v is None else f"{v:.6f}"


def metrics_csv(report):
    lines = ["method,t,PA,PU,PAvPU"]
    for name, res in report.methods.items():
        for t, s in zip(res.sweep.t_values, res.sweep.scores):
            lines.append(f"{name},{t:.6f},{_fmt(s['PA'])},{_fmt(s['PU'])},{_fmt(s['PAvPU'])}")
    return "\n".join(lines) + "\n"


def write_pgm(values01, path):
    """Binary P5 PGM heatmap, values scaled to 0-255 row-major."""
    values = np.asarray(values01, dtype=np.float64)
    quantized = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = quantized.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(quantized.tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return quantized


def read_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise IoFailure(f"{path}: not a P5 PGM")
    parts = blob.split(b"\n", 3)
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=h * w).reshape(h, w)


def export(report, out_dir):
    """Write metrics.csv, report.json, timings.json, and PGM heatmaps."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(metrics_csv(report), encoding="utf-8")
        (out / "report.json").write_text(report_to_json(report), encoding="utf-8")
        (out / "timings.json").write_text(
            json.dumps(
                {"seconds": report.timings, "concurrency_width": 1},
                sort_keys=True, indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    written = [out / "metrics.csv", out / "report.json", out / "timings.json"]
    for method, frames in report.maps.items():
        for i, values in enumerate(frames):
            path = out / f"{method}_frame{i:02d}.pgm"
            write_pgm(values, path)
            written.append(path)
    return written


# ---------------------------------------------------------------------------
# external-feature path


def export_features(cfg, out_path):
    """Generate the configured dataset, train, and dump features + labels.

    Writes a rank-4 tensor (frames, H, W, F) with train, val, and test
    frames concatenated in that order, and the matching rank-3 labels to
    '<out>.labels'.  eval_external consumes the pair with the same config.
    """
    scene_cfg = SceneConfig(cfg.height, cfg.width, cfg.classes, cfg.noise,
                            ood=False, n_shapes=cfg.shapes)
    test_cfg = SceneConfig(cfg.height, cfg.width, cfg.classes, cfg.noise,
                           ood=cfg.ood, n_shapes=cfg.shapes)
    scenes = (
        [generate_scene(derive_seed(cfg.seed, "scene", "train", str(i)), scene_cfg)
         for i in range(cfg.train_frames)]
        + [generate_scene(derive_seed(cfg.seed, "scene", "val", str(i)), test_cfg)
           for i in range(cfg.val_frames)]
        + [generate_scene(derive_seed(cfg.seed, "scene", "test", str(i)), test_cfg)
           for i in range(cfg.test_frames)]
    )
    hyper = TrainConfig(cfg.hidden, cfg.lr, cfg.epochs, cfg.batch, cfg.dropout_rate)
    classifier = train(scenes[: cfg.train_frames], hyper, derive_seed(cfg.seed, "train", "main"))
    features = np.stack([forward(classifier, s).features for s in scenes])
    labels = np.stack([s.labels for s in scenes]).astype(np.float64)
    write_tensor(features, out_path)
    labels_path = str(out_path) + ".labels"
    write_tensor(labels, labels_path)
    return out_path, labels_path


def eval_external(features_path, labels_path, cfg):
    """Metric sweeps for externally supplied per-pixel features.

    The features tensor is rank 4 (frames, H, W, F); labels rank 3.
    Frames split into train/val/test by the config counts.  Only the
    density-decomposition and softmax methods apply (no model to rerun).
    """
    features = read_tensor(features_path)
    labels = read_tensor(labels_path)
    if features.ndim != 4 or labels.ndim != 3:
        raise InvalidConfig("features must be rank 4 and labels rank 3")
    need = cfg.train_frames + cfg.val_frames + cfg.test_frames
    if features.shape[0] < need or labels.shape[0] < need:
        raise InvalidConfig(f"need {need} frames, got {features.shape[0]}")

    def tensor(i):
        probs = _softmax(features[i])
        return FeatureTensor(features[i], probs, np.argmax(probs, axis=-1))

    train_fts = [tensor(i) for i in range(cfg.train_frames)]
    val_idx = range(cfg.train_frames, cfg.train_frames + cfg.val_frames)
    test_idx = range(cfg.train_frames + cfg.val_frames, need)
    val_fts = [tensor(i) for i in val_idx]
    test_fts = [tensor(i) for i in test_idx]

    train_labels = ([labels[i].astype(np.int64) for i in range(cfg.train_frames)]
                    if cfg.granularity == "class" else None)
    models = fit_qipf_per_pixel(train_fts, cfg, labels=train_labels)

    acc_flags = np.concatenate(
        [
            metrics.patch_reduce(
                ~metrics.error_map(ft.preds, labels[i].astype(np.int64)),
                cfg.patch, "accurate_flag",
            ).ravel()
            for ft, i in zip(test_fts, test_idx)
        ]
    )

    method_results = {}
    timings = {}
    heatmaps = {}
    for method in ("qipf", "softmax"):
        def maps_for(fts):
            if method == "qipf":
                return [qipf_uncertainty_map(models, ft, cfg) for ft in fts]
            return [softmax_uncertainty(ft) for ft in fts]

        val_patches = np.concatenate([_patch_mean(m, cfg.patch).ravel() for m in maps_for(val_fts)])
        u_min, u_max = float(val_patches.min()), float(val_patches.max())
        if u_max <= u_min:
            u_max = u_min + 1e-9
        t0 = time.perf_counter()
        test_maps = maps_for(test_fts)
        elapsed = time.perf_counter() - t0
        unc = np.concatenate([_patch_mean(m, cfg.patch).ravel() for m in test_maps])
        sw = metrics.sweep(acc_flags, unc, u_min, u_max, cfg.t_grid)
        method_results[method] = MethodResult(sw, metrics.average_scores(sw),
                                              u_min, u_max, 0.0)
        timings[method] = max(elapsed, 1e-9)
        heatmaps[method] = [m.values for m in test_maps]

    return RunReport(cfg.seed, cfg.to_dict(), kernels.BACKEND,
                     cfg.silverman_factor, float("nan"),
                     method_results, timings, heatmaps)


# ---------------------------------------------------------------------------
# benchmarks


def bench_scaling(n_base=128, m_base=12, d=3, points=512, factor=3.0, seed=0, repeats=7):
    """Evaluation-phase cost ratios when doubling the sample budget or the
    mode count.  Linear per-evaluation cost means both ratios stay near 2.
    """
    rng = np.random.default_rng(seed)
    raw = SampleSet(rng.standard_normal((2 * n_base, d)))
    eval_points = rng.standard_normal((points, d))

    def phase_time(n_max, m):
        samples = subsample(raw, n_max, seed)
        sigma = Bandwidth(silverman_bandwidth(samples).sigma * factor)
        model = qipf.fit(samples, sigma, m)
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            spectra = qipf.moments_batch(model, eval_points)
            np.argmax(spectra, axis=1)
            best = min(best, time.perf_counter() - t0)
        return best

    base = phase_time(n_base, m_base)
    double_n = phase_time(2 * n_base, m_base)
    double_m = phase_time(n_base, 2 * m_base)
    return {
        "base_seconds": base,
        "double_n_ratio": double_n / base,
        "double_m_ratio": double_m / base,
    }


def bench_backends(n=256, d=3, points=2000, seed=0, repeats=5):
    """Compare the compiled kernel core against the numpy fallback."""
    from .kernels import _ref

    try:
        from .kernels import _core
    except ImportError:
        _core = None
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((n, d))
    eval_points = rng.standard_normal((points, d))

    def best_time(fn):
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn(samples, eval_points, 0.8)
            best = min(best, time.perf_counter() - t0)
        return best

    out = {"python_seconds": best_time(_ref.eval_fields)}
    if _core is not None:
        out["cython_seconds"] = best_time(_core.eval_fields)
        out["speedup"] = out["python_seconds"] / out["cython_seconds"]
    return out
