"""``speakerdist`` command line: generate, train, eval, ablate, crosscorpus, inspect, stats.

Every command reads one YAML (or JSON) experiment file validated before any
work starts; ``--seed``, ``--out`` and ``--finetune-from`` override the
matching fields.  Exit codes: 0 success, 1 partial or failed run, 2 invalid
input or config.
"""
import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, create_model

from .bins import STARSS_BINS, SYNTHETIC_BINS, VOICEHOME_BINS, BinSpec
from .evaluation import (ablation_columns, ablation_grid, attention_grid, cross_corpus_matrix,
                         evaluate_checkpoint, evaluate_folds, feature_grid, inspect_clip, render_csv,
                         render_table_csv, render_table_text, render_text, shape_grid,
                         snr_sweep_eval, sweep_rows, architecture_grid)
from .model import ModelConfig
from .roomsim import SceneError
from .scenegen import (DatasetManifest, HybridBuildConfig, RealIngestConfig,
                       SyntheticBuildConfig, build_hybrid_dataset, build_synthetic_dataset,
                       config_hash, dataset_stats, ingest_real_recordings)
from .scenegen.builders import MANIFEST_NAME
from .training import DivergenceError, TrainConfig, train, train_snr_family

log = logging.getLogger("speakerdist")

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2
NAMED_BINS = {"synthetic": SYNTHETIC_BINS, "voicehome": VOICEHOME_BINS, "starss": STARSS_BINS}
GRIDS = {"architecture": architecture_grid, "attention": attention_grid, "features": feature_grid,
         "shape": shape_grid}


class UsageError(ValueError):
    """Invalid command-line or config input (exit code 2)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _section(dc, name, **extra):
    """Strict pydantic model mirroring a config dataclass (all fields optional)."""
    fields = {}
    for f in dataclasses.fields(dc):
        if f.name == "seed":
            fields[f.name] = (Optional[int], None)  # filled from the top-level seed
            continue
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        fields[f.name] = (Optional[f.type] if default is None else f.type, default)
    fields.update(extra)
    return create_model(name, __base__=_Strict, **fields)


SyntheticSection = _section(SyntheticBuildConfig, "SyntheticSection",
                            snr_list=(Optional[list[Optional[float]]], None))
HybridSection = _section(HybridBuildConfig, "HybridSection", rir_corpus=(str, ...), speech_dir=(str, ...))
RealSection = _section(RealIngestConfig, "RealSection", annotations_dir=(str, ...), audio_dir=(str, ...))
ModelSection = _section(ModelConfig, "ModelSection", width_scale=(float, 1.0))
TrainSection = _section(TrainConfig, "TrainSection")


class GenerateSection(_Strict):
    synthetic: Optional[SyntheticSection] = None
    hybrid: Optional[HybridSection] = None
    real: Optional[RealSection] = None


class SweepSection(_Strict):
    models: dict[float, dict[str, Optional[str]]]
    datasets: dict[float, str]


class EvalSection(_Strict):
    checkpoint: Optional[str] = None
    fold_checkpoints: Optional[list[str]] = None
    split: Literal["train", "val", "test"] = "test"
    fold: int = 0
    ci_mode: Literal["per_sample", "per_fold"] = "per_sample"
    snr_sweep: Optional[SweepSection] = None


class FamilySection(_Strict):
    datasets: dict[float, str]
    snr_list: list[float]


class AblateSection(_Strict):
    grid: Union[Literal["architecture", "attention", "features", "shape"], list[dict]] = "architecture"


class CorpusSection(_Strict):
    checkpoint: str
    manifest: str
    bins: Union[str, list[tuple[float, float]], None] = None


class CrossSection(_Strict):
    corpora: dict[str, CorpusSection]
    finetune: bool = False


class InspectSection(_Strict):
    checkpoint: str
    clip: str


class ExperimentConfig(_Strict):
    out: Optional[str] = None
    seed: int = 0
    manifest: Optional[str] = None
    folds: Optional[list[int]] = None
    bins: Union[str, list[tuple[float, float]]] = "synthetic"
    generate: Optional[GenerateSection] = None
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    snr_family: Optional[FamilySection] = None
    eval: Optional[EvalSection] = None
    ablate: Optional[AblateSection] = None
    crosscorpus: Optional[CrossSection] = None
    inspect: Optional[InspectSection] = None


def load_config(path=None, overrides=None):
    """Parse and validate an experiment file; ``overrides`` are top-level fields."""
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} not found")
        raw = yaml.safe_load(path.read_text()) or {}
        if not isinstance(raw, dict):
            raise UsageError(f"{path}: top level must be a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = ExperimentConfig.model_validate(raw)
    # section seeds follow the top-level seed unless given; --seed wins over both
    force = (overrides or {}).get("seed") is not None
    for sec in (cfg.train, cfg.generate and cfg.generate.synthetic, cfg.generate and cfg.generate.hybrid,
                cfg.generate and cfg.generate.real):
        if sec is not None and (sec.seed is None or force):
            sec.seed = cfg.seed
    return cfg


def resolve_bins(spec):
    if spec is None:
        return SYNTHETIC_BINS
    if isinstance(spec, str):
        if spec not in NAMED_BINS:
            raise UsageError(f"unknown bin set {spec!r}; choose from {sorted(NAMED_BINS)} or list edges")
        return NAMED_BINS[spec]
    return BinSpec(spec)


def model_config(cfg):
    d = cfg.model.model_dump()
    scale = d.pop("width_scale")
    m = ModelConfig(**d)
    return m.scaled(scale) if scale != 1.0 else m


def train_config(cfg, **over):
    return dataclasses.replace(TrainConfig(**cfg.train.model_dump()), **over)


def _need(value, what):
    if value is None:
        raise UsageError(f"config is missing {what}")
    return value


def _out(cfg, default):
    out = Path(cfg.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out, name, text, artifacts):
    (out / name).write_text(text)
    artifacts.append(name)


def _curve_csv(points, xname):
    return render_table_csv([xname, "mean_l1", "count"],
                            [{xname: x, "mean_l1": e, "count": n} for x, e, n in points])


def _report_files(out, rep, stem, artifacts):
    _write(out, f"{stem}.csv", render_csv(rep), artifacts)
    _write(out, f"{stem}.txt", render_text(rep, digits=2), artifacts)
    for name, pts in rep.curves.items():
        _write(out, f"{stem}_{name}.csv", _curve_csv(pts, name.split("_vs_")[-1]), artifacts)


# --- commands; each returns (exit code, artifacts, failures) ---

def cmd_generate(cfg, h):
    gen = _need(cfg.generate, "a 'generate' section")
    chosen = [k for k in ("synthetic", "hybrid", "real") if getattr(gen, k) is not None]
    if len(chosen) != 1:
        raise UsageError("'generate' needs exactly one of synthetic, hybrid, real")
    out = _out(cfg, "run")
    summary = out / "summary_generate.json"
    if summary.exists():
        old = json.loads(summary.read_text())
        manifests = [out / a for a in old.get("artifacts", []) if a.endswith(MANIFEST_NAME)]
        if old.get("config_hash") == h and manifests and all(m.exists() for m in manifests):
            print(f"up-to-date: {out} already built from config {h}")
            return EXIT_OK, old["artifacts"], []
    kind = chosen[0]
    sec = getattr(gen, kind).model_dump()
    artifacts = []
    if kind == "synthetic":
        snr_list = sec.pop("snr_list")
        if snr_list is None:
            man = build_synthetic_dataset(SyntheticBuildConfig(**sec), out)
            artifacts.append(MANIFEST_NAME)
            print(f"wrote {len(man.entries)} entries to {out / MANIFEST_NAME}")
        else:
            for snr in snr_list:
                sub = f"snr_{'inf' if snr is None or math.isinf(snr) else f'{snr:g}'}"
                man = build_synthetic_dataset(SyntheticBuildConfig(**dict(sec, snr_db=snr)), out / sub)
                artifacts.append(f"{sub}/{MANIFEST_NAME}")
                print(f"wrote {len(man.entries)} entries to {out / sub / MANIFEST_NAME}")
    elif kind == "hybrid":
        corpus, speech = sec.pop("rir_corpus"), sec.pop("speech_dir")
        man = build_hybrid_dataset(corpus, speech, HybridBuildConfig(**sec), out)
        artifacts.append(MANIFEST_NAME)
        print(f"wrote {len(man.entries)} entries; skipped RIRs: {len(man.report['skipped_rirs'])}")
    else:
        ann, audio = sec.pop("annotations_dir"), sec.pop("audio_dir")
        man = ingest_real_recordings(ann, audio, RealIngestConfig(**sec), out)
        artifacts.append(MANIFEST_NAME)
        print(f"wrote {len(man.entries)} excerpts to {out / MANIFEST_NAME}")
    return EXIT_OK, artifacts, []


def cmd_train(cfg, h):
    out = _out(cfg, "run")
    mcfg, artifacts = model_config(cfg), []
    if cfg.snr_family is not None:
        fam = train_snr_family(cfg.snr_family.datasets, cfg.snr_family.snr_list, mcfg, train_config(cfg), out)
        artifacts.append("family.json")
        artifacts += [str(Path(m["checkpoint"]).relative_to(out)) for m in fam["models"].values()]
        failures = [f"no dataset for SNR {s:g} dB" for s in fam["skipped"]]
        return (EXIT_PARTIAL if failures else EXIT_OK), artifacts, failures
    manifest = _need(cfg.manifest, "'manifest'")
    folds = cfg.folds if cfg.folds is not None else [cfg.train.fold]
    for k in folds:
        sub = f"fold{k}" if cfg.folds is not None else "."
        res = train(manifest, mcfg, train_config(cfg, fold=k), out / sub)
        artifacts += [str(Path(sub) / "best.pt"), str(Path(sub) / "train_log.csv")]
        print(f"fold {k}: best val MSE {res.best_val_mse:.4f} at epoch {res.best_epoch}")
    return EXIT_OK, [str(Path(a)) for a in artifacts], []


def cmd_eval(cfg, h):
    ev = _need(cfg.eval, "an 'eval' section")
    out, bins, artifacts = _out(cfg, "run"), resolve_bins(cfg.bins), []
    if ev.snr_sweep is not None:
        table = snr_sweep_eval(ev.snr_sweep.models, ev.snr_sweep.datasets, bins, out)
        rows = sweep_rows(table)
        cols = ["snr_db", "feature_set", "l1", "l1_ci", "rl1", "rl1_ci", "status"]
        _write(out, "snr_sweep.csv", render_table_csv(cols, rows), artifacts)
        _write(out, "snr_sweep.txt", render_table_text(cols, rows), artifacts)
        for (snr, feat), rep in table.items():
            if rep is not None:
                _report_files(out, rep, f"report_snr_{snr:g}_{feat}", artifacts)
        print(render_table_text(cols, rows))
        return EXIT_OK, artifacts, []
    manifest = _need(cfg.manifest, "'manifest'")
    if ev.fold_checkpoints:
        rep, records = evaluate_folds(ev.fold_checkpoints, manifest, bins)
    else:
        rep, records = evaluate_checkpoint(_need(ev.checkpoint, "eval.checkpoint"), manifest, ev.split,
                                           ev.fold, bins, ev.ci_mode, out / "predictions.jsonl")
        artifacts.append("predictions.jsonl")
    rep.config["config_hash"] = h
    _report_files(out, rep, "report", artifacts)
    print(render_text(rep, digits=2))
    return EXIT_OK, artifacts, []


def cmd_ablate(cfg, h):
    ab = cfg.ablate or AblateSection()
    base = model_config(cfg)
    if isinstance(ab.grid, str):
        grid = GRIDS[ab.grid](base)
    else:
        grid = [dataclasses.replace(base, **over) for over in ab.grid]
    out, bins = _out(cfg, "run"), resolve_bins(cfg.bins)
    rows = ablation_grid(grid, _need(cfg.manifest, "'manifest'"), train_config(cfg), out, bins)
    cols, artifacts = ablation_columns(bins), []
    _write(out, "ablation.csv", render_table_csv(cols, rows), artifacts)
    _write(out, "ablation.txt", render_table_text(cols, rows), artifacts)
    print(render_table_text(cols, rows))
    failures = [f"config {i}: {r['status']}" for i, r in enumerate(rows) if r["status"] != "ok"]
    return (EXIT_PARTIAL if failures else EXIT_OK), artifacts, failures


def cmd_crosscorpus(cfg, h):
    cc = _need(cfg.crosscorpus, "a 'crosscorpus' section")
    out = _out(cfg, "run")
    res = cross_corpus_matrix({n: c.checkpoint for n, c in cc.corpora.items()},
                              {n: c.manifest for n, c in cc.corpora.items()},
                              cc.finetune, train_config(cfg), out,
                              {n: resolve_bins(c.bins) for n, c in cc.corpora.items()})
    cols, artifacts = ["train"] + res.names, []
    _write(out, "matrix.csv", render_table_csv(cols, res.rows()), artifacts)
    _write(out, "matrix.txt", render_table_text(cols, res.rows()), artifacts)
    for (a, b), rep in res.reports.items():
        _write(out, f"report_{a}_on_{b}.csv", render_csv(rep), artifacts)
    print(render_table_text(cols, res.rows()))
    return EXIT_OK, artifacts, []


def cmd_inspect(cfg, h):
    ins = _need(cfg.inspect, "--checkpoint and --clip (or an 'inspect' section)")
    out = _out(cfg, "run")
    res = inspect_clip(ins.checkpoint, ins.clip)
    np.savez(out / "inspect.npz", spectrogram=res["spectrogram"], attention=res["attention"],
             yt_hat=res["yt_hat"])
    info = {"y_hat": res["y_hat"], "n_frames": int(res["yt_hat"].size),
            "attention_channels": int(res["attention"].shape[0])}
    (out / "inspect.json").write_text(json.dumps(info, indent=1, sort_keys=True))
    print(json.dumps(info))
    return EXIT_OK, ["inspect.npz", "inspect.json"], []


def cmd_stats(cfg, h):
    manifest = DatasetManifest.read(_need(cfg.manifest, "'manifest' (or --manifest)"))
    stats = dataset_stats(manifest, resolve_bins(cfg.bins))
    text = json.dumps(stats, indent=1, sort_keys=True)
    print(text)
    if cfg.out:
        out = _out(cfg, "run")
        (out / "stats.json").write_text(text)
        return EXIT_OK, ["stats.json"], []
    return EXIT_OK, [], []


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
            "crosscorpus": cmd_crosscorpus, "inspect": cmd_inspect, "stats": cmd_stats}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment file")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="speakerdist", description="Speaker-distance estimation experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("train", "eval", "ablate", "stats"):
            sp.add_argument("--manifest", help="dataset manifest (overrides the config)")
        if name == "train":
            sp.add_argument("--finetune-from", help="start from this checkpoint")
        if name == "crosscorpus":
            sp.add_argument("--finetune", action="store_true", help="fine-tune off-diagonal cells")
        if name in ("eval", "inspect"):
            sp.add_argument("--checkpoint")
        if name == "inspect":
            sp.add_argument("--clip")
    return p


def _apply_flags(cfg, args):
    if getattr(args, "finetune_from", None):
        cfg.train.finetune_from = args.finetune_from
    if getattr(args, "finetune", False):
        _need(cfg.crosscorpus, "a 'crosscorpus' section").finetune = True
    if args.command == "inspect" and (args.checkpoint or args.clip):
        cfg.inspect = InspectSection(checkpoint=_need(args.checkpoint, "--checkpoint"),
                                     clip=_need(args.clip, "--clip"))
    if args.command == "eval" and args.checkpoint:
        cfg.eval = (cfg.eval or EvalSection()).model_copy(update={"checkpoint": args.checkpoint})
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed, "out": args.out,
                                        "manifest": getattr(args, "manifest", None)})
        cfg = _apply_flags(cfg, args)
        h = config_hash(cfg.model_dump(mode="json"))
        code, artifacts, failures = COMMANDS[args.command](cfg, h)
    except (ValidationError, yaml.YAMLError, UsageError) as err:
        print(f"error: invalid config: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, SceneError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as err:
        print(f"error: training diverged: {err} (last good checkpoint: {err.checkpoint})", file=sys.stderr)
        code, artifacts, failures = EXIT_PARTIAL, [], [str(err)]
    for f in failures:
        print(f"failed: {f}", file=sys.stderr)
    if cfg.out or args.command not in ("stats",):
        out = Path(cfg.out or "run")
        out.mkdir(parents=True, exist_ok=True)
        summary = {"command": args.command, "config_hash": h, "exit_code": code,
                   "status": {EXIT_OK: "ok", EXIT_PARTIAL: "partial"}.get(code, "error"),
                   "artifacts": artifacts, "failures": failures}
        (out / f"summary_{args.command}.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
