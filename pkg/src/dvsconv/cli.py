"""
Command-line entry point: ``dvsconv <stage> [options]``.

Stages and their outputs::

    synth    --out DIR                      rec_NNN.aedat, rec_NNN.labels, manifest.json
    prepare  --recordings DIR --out DIR     {train,val,test}/ prepared datasets, manifest.json
    train    --data DIR --out DIR           model.json, history.csv, manifest.json
    convert  --data DIR --model FILE --out DIR
                                            snn_model.json, bias_audit.txt, manifest.json
    run      --data DIR --model FILE --out DIR [--ann-model FILE]
                                            summary.csv, confusion_<mode>.csv, samples_<mode>.csv,
                                            timeline_<mode>.csv, curve.csv, rasters/, manifest.json
    report   --recordings DIR --out DIR [--runs DIR ...]
                                            ablation.csv, ablation.txt, curves.csv, manifest.json

Configuration comes from an optional flat ``key = value`` file (``--config``;
``#`` starts a comment) and from ``--key value`` flags, which take
precedence. Every key is listed by ``dvsconv <stage> --help``.

Exit status: 0 on success, 2 usage error or missing input, 3 parse error,
4 configuration error, 5 numeric error, 6 labeling error, 1 anything else.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from .aedat import save as save_aedat
from .ann import DEFAULT_ARCH, TrainConfig, ann_op_count, mac_counts, train
from .convert import audit_biases, convert
from .dataset import PrepConfig, PreparedDataset, load_recording, prepare, sha256_file, split_recordings
from .errors import ConfigError, DvsConvError
from .evaluation import (
    REFERENCE_NOTES,
    EvalConfig,
    Mode,
    ablation_matrix,
    analog_ops_formula,
    calibration_subset,
    evaluate,
    write_ablation,
    write_confusion,
    write_curve,
    write_raster,
    write_samples,
    write_summary,
    write_timelines,
)
from .modelio import load_params, load_spiking, save_params, save_spiking
from .snn import SimConfig
from .synth import SceneConfig, generate_recording, scene_series

log = logging.getLogger("dvsconv")

USAGE_EXIT = 2


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    # synth
    n_recordings: int = 25
    duration_us: int = 30_000_000
    blob_radius: float = 6.0
    blob_rate: float = 0.3
    noise_rate: float = 0.01
    blob_speed: float = 0.3
    turn_std: float = 0.1
    blob_cluster: int = 3
    hide_prob_per_ms: float = 0.002
    show_prob_per_ms: float = 0.004
    burst_period_us: int = 100_000
    burst_len_us: int = 10_000
    burst_multiplier: float = 4.0
    seed: int = 100
    # prepare
    subsample: str = "max"
    order: str = "clip_first"
    sample_events: int = 5000
    dedupe_window_us: int = 0
    split: str = "0.8,0.1,0.1"
    # train
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    l2: float = 1e-4
    use_biases: bool = True
    train_seed: int = 0
    # convert
    percentile: float = 99.9
    threshold: float = 1.0
    calib_frames: int = 1000
    # run
    modes: str = "ann,snn_analog,snn_poisson,snn_dvs"
    t_steps: int = 450
    t_ref: str = "auto"
    carry_state: bool = False
    gain: float = 1.0
    sim_seed: int = 0
    limit: int = 0
    raster_samples: int = 3
    curve_points: int = 50
    eval_split: str = "test"
    # report
    ablation_subsample: str = "max,sum"
    ablation_orders: str = "clip_first,scale_first"
    ablation_regularization: str = "l2,none"

    # -- conversions to module configs --
    def scene(self) -> SceneConfig:
        keys = {f.name for f in fields(SceneConfig)} & {f.name for f in fields(self)}
        return SceneConfig(**{k: getattr(self, k) for k in keys})

    def prep(self) -> PrepConfig:
        return PrepConfig(self.subsample, self.order, self.sample_events, self.dedupe_window_us)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.lr, l2=self.l2,
                           use_biases=self.use_biases, seed=self.train_seed)

    def sim(self) -> SimConfig:
        return SimConfig(self.t_steps, self.t_ref_value(), self.carry_state)

    def t_ref_value(self):
        if str(self.t_ref).lower() == "auto":
            return None
        try:
            return float(self.t_ref)
        except ValueError as exc:
            raise ConfigError(f"t_ref must be 'auto' or a number, not {self.t_ref!r}") from exc

    def eval_config(self) -> EvalConfig:
        return EvalConfig(self.sim(), self.gain, self.sim_seed, self.limit or None, self.curve_points, self.raster_samples)

    def split_fractions(self) -> tuple[float, ...]:
        try:
            parts = tuple(float(v) for v in self.split.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad split {self.split!r}") from exc
        if len(parts) != 3:
            raise ConfigError("split needs three fractions: train,val,test")
        return parts

    def validate(self):
        self.scene().validate()
        self.prep()
        self.train_config().validate()
        self.sim()
        self.split_fractions()
        if self.n_recordings < 1:
            raise ConfigError("n_recordings must be >= 1")
        known = {m.value for m in Mode}
        for m in _csv_list(self.modes):
            if m not in known:
                raise ConfigError(f"unknown mode {m!r}; choose from {', '.join(sorted(known))}")

    def to_dict(self):
        return dataclasses.asdict(self)


def _csv_list(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _coerce(field_type, value):
    kind = {"int": int, "float": float, "bool": _parse_bool, "str": str}[field_type]
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read {value!r} as {field_type}") from exc


_FIELDS = {f.name: f.type for f in fields(PipelineConfig)}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; unknown keys are an error."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[pipeline]\n" + Path(path).read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = dict(parser["pipeline"])
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    return values


def build_config(args) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None):
        if not Path(args.config).is_file():
            raise UsageError(f"config file {args.config} not found")
        values.update(read_config_file(args.config))
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = PipelineConfig(**{k: _coerce(_FIELDS[k], v) for k, v in values.items()})
    cfg.validate()
    return cfg


# --- manifests -------------------------------------------------------------------------


def fingerprint_path(path: Path) -> dict:
    path = Path(path)
    if path.is_file():
        return {str(path): sha256_file(path)}
    out = {}
    for p in sorted(path.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            out[str(p)] = sha256_file(p)
    return out


def write_manifest(out: Path, stage: str, cfg: PipelineConfig, inputs, outputs, extra=None) -> None:
    fp = {}
    for p in inputs:
        fp.update(fingerprint_path(p))
    missing = [str(p) for p in outputs if not Path(p).exists()]
    if missing:
        raise DvsConvError(f"stage {stage} did not produce: {', '.join(missing)}")
    doc = {
        "stage": stage,
        "version": __version__,
        "argv": sys.argv[1:],
        "config": cfg.to_dict(),
        "seeds": {"scene": cfg.seed, "train": cfg.train_seed, "sim": cfg.sim_seed},
        "inputs": fp,
        "outputs": {str(Path(p).relative_to(out)): sha256_file(p) for p in outputs if Path(p).is_file()},
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _require(path, what) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} {path} does not exist")
    return path


def _load_recordings(directory: Path):
    directory = _require(directory, "recording directory")
    files = sorted(directory.glob("*.aedat"))
    if not files:
        raise UsageError(f"no .aedat files in {directory}")
    return files


def _iter_recordings(files):
    for f in files:
        yield load_recording(f)


# --- stages ----------------------------------------------------------------------------


def cmd_synth(args, cfg: PipelineConfig) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i, scene in enumerate(scene_series(cfg.scene(), cfg.n_recordings)):
        stream, labels = generate_recording(scene)
        a, l = out / f"rec_{i:03d}.aedat", out / f"rec_{i:03d}.labels"
        save_aedat(stream, a)
        labels.save(l)
        outputs += [a, l]
        log.info("%s: %d events, %d label intervals", a.name, len(stream), len(labels.intervals))
    write_manifest(out, "synth", cfg, [], outputs)


def cmd_prepare(args, cfg: PipelineConfig) -> None:
    files = _load_recordings(args.recordings)
    out = Path(args.out)
    splits = split_recordings([f.name for f in files], cfg.split_fractions())
    outputs = []
    for split_name, names in zip(("train", "val", "test"), splits):
        chosen = [f for f in files if f.name in set(names)]
        ds = prepare(_iter_recordings(chosen), cfg.prep())
        ds.save(out / split_name)
        outputs += [out / split_name / n for n in ("dataset.json", "frames.bin", "samples.npz")]
        log.info("%s: %d samples from %d recordings, class counts %s", split_name, len(ds), len(chosen),
                 ds.class_counts().tolist())
    write_manifest(out, "prepare", cfg, files, outputs,
                   {"splits": {k: list(v) for k, v in zip(("train", "val", "test"), splits)}})


def _dataset(root, split) -> PreparedDataset:
    root = _require(root, "dataset directory")
    path = root / split if (root / split / "dataset.json").exists() else root
    return PreparedDataset.load(path)


def cmd_train(args, cfg: PipelineConfig) -> None:
    tr = _dataset(args.data, "train")
    va_path = Path(args.data) / "val"
    va = PreparedDataset.load(va_path) if (va_path / "dataset.json").exists() else None
    if len(tr) == 0:
        raise ConfigError("training split is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    val = (va.frames, va.labels) if va is not None and len(va) else None
    params, history = train(tr.frames, tr.labels, DEFAULT_ARCH, cfg.train_config(), val=val)
    for row in history:
        log.info("epoch %d loss %.4f train_acc %.4f val_acc %.4f", row["epoch"], row["loss"], row["train_acc"], row["val_acc"])
    save_params(params, out / "model.json")
    with open(out / "history.csv", "w") as fh:
        fh.write("epoch,loss,train_acc,val_acc\n")
        for row in history:
            fh.write(f"{row['epoch']},{row['loss']!r},{row['train_acc']!r},{row['val_acc']!r}\n")
    write_manifest(out, "train", cfg, [Path(args.data)], [out / "model.json", out / "history.csv"],
                   {"param_count": params.count()})


def cmd_convert(args, cfg: PipelineConfig) -> None:
    model_path = _require(args.model, "model file")
    params = load_params(model_path)
    tr = _dataset(args.data, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = convert(params, calibration_subset(tr.frames, cfg.calib_frames), cfg.percentile, cfg.threshold)
    save_spiking(net, params, out / "snn_model.json")
    audit = audit_biases(net)
    (out / "bias_audit.txt").write_text(audit.summary(net) + "\n")
    write_manifest(out, "convert", cfg, [model_path, Path(args.data)], [out / "snn_model.json", out / "bias_audit.txt"],
                   {"lambdas": net.scales.lambdas})


def cmd_run(args, cfg: PipelineConfig) -> None:
    model_path = _require(args.model, "model file")
    data = _dataset(args.data, cfg.eval_split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net, params = load_spiking(model_path)
    if args.ann_model:
        params = load_params(_require(args.ann_model, "ANN model file"))
    ec = cfg.eval_config()
    reports, outputs = [], []
    for m in _csv_list(cfg.modes):
        mode = Mode(m)
        rep = evaluate(params if mode is Mode.ANN else net, data, mode, ec)
        reports.append(rep)
        log.info("%s: accuracy %.4f, mean ops %.0f", mode.value, rep.accuracy, rep.mean_ops)
        write_confusion(rep, out / f"confusion_{mode.value}.csv")
        write_samples(rep, out / f"samples_{mode.value}.csv")
        outputs += [out / f"confusion_{mode.value}.csv", out / f"samples_{mode.value}.csv"]
        if mode is not Mode.ANN:
            write_timelines(rep, out / f"timeline_{mode.value}.csv")
            outputs.append(out / f"timeline_{mode.value}.csv")
            for i, raster in enumerate(rep.rasters):
                p = out / "rasters" / f"raster_{mode.value}_{i:03d}.csv"
                write_raster(raster, p)
                outputs.append(p)
    write_summary(reports, out / "summary.csv")
    write_curve(reports, out / "curve.csv", cfg.curve_points)
    outputs += [out / "summary.csv", out / "curve.csv"]
    notes = {
        "ann_ops": ann_op_count(net.arch),
        "ann_macs_per_layer": mac_counts(net.arch),
        "analog_ops": analog_ops_formula(net, cfg.t_steps),
    }
    write_manifest(out, "run", cfg, [model_path, Path(args.data)], outputs, {"op_accounting": notes})


def cmd_report(args, cfg: PipelineConfig) -> None:
    files = _load_recordings(args.recordings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = split_recordings([f.name for f in files], cfg.split_fractions())
    train_files = [f for f in files if f.name in set(splits[0])]
    test_files = [f for f in files if f.name in set(splits[2])]
    rows = ablation_matrix(
        lambda: _iter_recordings(train_files), lambda: _iter_recordings(test_files), cfg.train_config(), cfg.eval_config(),
        subsample=_csv_list(cfg.ablation_subsample), orders=_csv_list(cfg.ablation_orders),
        regularizations=_csv_list(cfg.ablation_regularization), percentile=cfg.percentile, prep_base=cfg.prep(),
    )
    write_ablation(rows, out / "ablation.csv")
    lines = [f"{'subsample':<10}{'order':<13}{'reg':<9}{'ANN':>8}{'SNN_DVS':>9}{'DVS ops':>12}"]
    for r in rows:
        lines.append(f"{r.subsample:<10}{r.order:<13}{r.regularization:<9}{r.ann_accuracy:>8.4f}"
                     f"{r.snn_dvs_accuracy:>9.4f}{r.snn_dvs_mean_ops:>12.0f}")
    lines += ["", f"ANN ops per frame: {ann_op_count(DEFAULT_ARCH)}", *REFERENCE_NOTES]
    (out / "ablation.txt").write_text("\n".join(lines) + "\n")
    outputs = [out / "ablation.csv", out / "ablation.txt"]
    # gather curves of earlier runs into one table
    curve_rows = []
    for run_dir in args.runs or []:
        p = _require(Path(run_dir) / "curve.csv", "run curve")
        with open(p) as fh:
            next(fh)
            curve_rows += [f"{run_dir},{line.strip()}" for line in fh if line.strip()]
    (out / "curves.csv").write_text("run,mode,budget,mean_ops,accuracy\n" + "".join(r + "\n" for r in curve_rows))
    outputs.append(out / "curves.csv")
    write_manifest(out, "report", cfg, files + [Path(r) / "curve.csv" for r in args.runs or []], outputs)


STAGES = {
    "synth": (cmd_synth, "generate labelled synthetic DVS recordings",
              ["n_recordings", "duration_us", "blob_radius", "blob_rate", "noise_rate", "blob_speed", "turn_std",
               "blob_cluster", "hide_prob_per_ms", "show_prob_per_ms", "burst_period_us", "burst_len_us",
               "burst_multiplier", "seed"]),
    "prepare": (cmd_prepare, "subsample, bin, normalise and split recordings",
                ["subsample", "order", "sample_events", "dedupe_window_us", "split"]),
    "train": (cmd_train, "train the CNN on prepared frames",
              ["epochs", "batch_size", "lr", "l2", "use_biases", "train_seed"]),
    "convert": (cmd_convert, "convert a trained CNN into a spiking network", ["percentile", "threshold", "calib_frames"]),
    "run": (cmd_run, "evaluate the ANN and the spiking network",
            ["modes", "t_steps", "t_ref", "carry_state", "gain", "sim_seed", "limit", "raster_samples",
             "curve_points", "eval_split"]),
    "report": (cmd_report, "ablation table and combined accuracy-vs-ops curves",
               ["ablation_subsample", "ablation_orders", "ablation_regularization", "split", "subsample", "order",
                "sample_events", "dedupe_window_us", "epochs", "batch_size", "lr", "l2", "use_biases", "train_seed",
                "percentile", "threshold", "t_steps", "t_ref", "sim_seed", "limit"]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dvsconv", description="DVS event data -> CNN -> spiking network pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True)
    defaults = PipelineConfig()
    for name, (_, help_text, keys) in STAGES.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="flat key = value config file; flags override it")
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("--out", required=True, help="output directory")
        if name in ("prepare", "report"):
            p.add_argument("--recordings", required=True, help="directory of .aedat + .labels files")
        if name in ("train", "convert", "run"):
            p.add_argument("--data", required=True, help="prepared dataset directory")
        if name in ("convert", "run"):
            p.add_argument("--model", required=True, help="model file (trained for convert, converted for run)")
        if name == "run":
            p.add_argument("--ann-model", help="trained model for the ANN mode (default: the converted file's weights)")
        if name == "report":
            p.add_argument("--runs", nargs="*", help="run output directories whose curves are collected")
        g = p.add_argument_group("config keys")
        for key in keys:
            g.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar=_FIELDS[key].upper(),
                           help=f"default {getattr(defaults, key)!r}")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        STAGES[args.stage][0](args, cfg)
    except UsageError as exc:
        print(f"dvsconv {args.stage}: error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except DvsConvError as exc:
        print(f"dvsconv {args.stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
