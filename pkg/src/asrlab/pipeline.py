"""End-to-end experiments: synth -> extract -> SOM -> MLP -> HMM -> GA -> decode -> evaluate.

Every stage writes its artifact to the output directory, and each stage's
random seed is derived from the global seed and the stage name, so any stage
can be rerun on its own and reproduce the in-memory run.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from asrlab import corpus as corpus_mod
from asrlab import decoder, evaluation, frontend, ga, mlp, som
from asrlab.errors import StageError

log = logging.getLogger(__name__)

NAMED_K = (16, 32, 64, 128)


def derive_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{seed}/{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass(frozen=True)
class MlpSettings:
    hidden: int = 64
    lr: float = 0.01
    epochs: int = 200
    batch_size: int = 1
    standardize_inputs: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 7
    out_dir: str = "experiment"
    # an existing manifest replaces the synthetic corpus
    manifest: str | None = None
    corpus: corpus_mod.SynthSpec = field(default_factory=corpus_mod.SynthSpec)
    train_fraction: float = 0.8
    dev_fraction: float = 0.125
    frontend: frontend.FrontendConfig = field(default_factory=lambda: frontend.FrontendConfig(target_frames=12))
    som: som.SomConfig = field(default_factory=lambda: som.SomConfig(k_units=16))
    mlp: MlpSettings = field(default_factory=MlpSettings)
    ga: ga.GaConfig = field(default_factory=ga.GaConfig)
    ga_enabled: bool = True
    encoding: str = "soft"
    smoothing: float = 1.0

    @property
    def system_name(self):
        return f"sys{self.som.k_units}"

    def with_k(self, k):
        return dataclasses.replace(self, som=som_config_for(self.som, k))


def som_config_for(base: som.SomConfig, k: int) -> som.SomConfig:
    """Same schedule as ``base`` on the default lattice for ``k`` units."""
    rows, cols = som.grid_shape(k)
    return som.SomConfig(
        k_units=k, grid_rows=rows, grid_cols=cols, epochs=base.epochs,
        lr_initial=base.lr_initial, lr_final=base.lr_final,
        sigma_initial=max(rows, cols) / 2.0, sigma_final=base.sigma_final, seed=base.seed,
    )


# ------------------------------------------------------------ config file

_SECTIONS = {
    "corpus": "corpus",
    "frontend": "frontend",
    "som": "som",
    "mlp": "mlp",
    "ga": "ga",
}


def _convert(current, text, name):
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: not a boolean: {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if current is None:
        try:
            return int(text)
        except ValueError:
            return float(text)
    return text


def _apply(obj, values, section):
    known = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in values.items():
        if key not in known:
            raise ValueError(f"[{section}] unknown key {key!r}")
        changes[key] = _convert(getattr(obj, key), text, f"{section}.{key}")
    return dataclasses.replace(obj, **changes) if changes else obj


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Read an INI-style config; ``overrides`` maps "section.key" to string values.

    The [som] section's k_units also resizes the lattice; [experiment] holds
    the top-level keys (seed, out_dir, manifest, ga_enabled, ...).
    """
    cfg = ExperimentConfig()
    parser = configparser.ConfigParser()
    if path is not None:
        with open(path) as fh:
            parser.read_file(fh)
    sections = {s: dict(parser[s]) for s in parser.sections()}
    for dotted, value in (overrides or {}).items():
        sec, key = dotted.split(".", 1)
        sections.setdefault(sec, {})[key] = str(value)
    for sec, values in sections.items():
        if sec == "experiment":
            nested = set(_SECTIONS.values()) & set(values)
            if nested:
                raise ValueError(f"[experiment] cannot set {sorted(nested)}; use their own sections")
            cfg = _apply(cfg, values, sec)
        elif sec in _SECTIONS:
            attr = _SECTIONS[sec]
            current = getattr(cfg, attr)
            if sec == "som" and "k_units" in values:
                current = som_config_for(current, int(values["k_units"]))
                values = {k: v for k, v in values.items() if k not in ("k_units", "grid_rows", "grid_cols", "sigma_initial")}
            cfg = dataclasses.replace(cfg, **{attr: _apply(current, values, sec)})
        else:
            raise ValueError(f"unknown config section [{sec}]")
    return cfg


# ------------------------------------------------------------- execution


@dataclass
class ExperimentResult:
    reports: list
    out_dir: Path
    baseline_fitness: float | None = None
    ga_fitness: float | None = None
    history: list = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)


@contextmanager
def stage(name, timings=None):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def prepare_corpus(cfg: ExperimentConfig, out_dir: Path, timings=None):
    """Manifest with splits assigned, plus the directory audio paths resolve against."""
    with stage("synth", timings):
        if cfg.manifest:
            manifest = corpus_mod.load_manifest(cfg.manifest)
            base = Path(cfg.manifest).parent
        else:
            base = out_dir / "corpus"
            spec = dataclasses.replace(cfg.corpus, seed=derive_seed(cfg.seed, "corpus"))
            manifest = corpus_mod.synth_corpus(spec, base)
        if any(r.split is None for r in manifest.records):
            manifest = corpus_mod.split_corpus(manifest, cfg.train_fraction, derive_seed(cfg.seed, "split"),
                                               cfg.dev_fraction)
        if cfg.manifest:
            # keep audio paths resolvable from the copy in out_dir
            records = [dataclasses.replace(r, audio_path=Path(os.path.relpath(base / r.audio_path, out_dir)).as_posix())
                       for r in manifest.records]
            corpus_mod.write_manifest(corpus_mod.CorpusManifest(manifest.vocabulary, records), out_dir / "manifest.csv")
        else:
            corpus_mod.write_manifest(manifest, base / "manifest.csv")
    return manifest, base


def prepare_features(cfg: ExperimentConfig, manifest, base, out_dir: Path, timings=None):
    with stage("extract", timings):
        table = frontend.extract_corpus(manifest, cfg.frontend, base)
        frontend.write_features(out_dir / "features.csv", table)
    return table


def _matrix(features_by_id, records):
    return np.vstack([features_by_id[r.utterance_id].values for r in records])


def _labels(records):
    return np.array([r.word_id for r in records], dtype=np.intp)


def write_decodes(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["utterance_id", "word_id", "word_text", "log_score"])
        w.writerows(rows)


def read_decodes(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [(row["utterance_id"], int(row["word_id"])) for row in reader]


def decode_sequences(mlp_model, codebook, hmm, sequences, features_by_id, vocabulary, encoding="soft"):
    """Viterbi-decode each session; returns decode CSV rows in input order."""
    rows = []
    for seq in sequences:
        feats = [features_by_id[r.utterance_id] for r in seq]
        result = decoder.decode_utterance_sequence(mlp_model, codebook, hmm, feats, encoding)
        for rec, word, score in zip(seq, result.word_indices, result.path_scores):
            text = vocabulary[word] if vocabulary else ""
            rows.append([rec.utterance_id, int(word), text, repr(float(score))])
    return rows


def dev_pairs(mlp_model, codebook, sequences, features_by_id, encoding="soft"):
    pairs = []
    for seq in sequences:
        acts = som.som_encode_batch(codebook, _matrix(features_by_id, seq), encoding)
        pairs.append((mlp.mlp_posteriors(mlp_model, acts), _labels(seq)))
    return pairs


def run_system(cfg: ExperimentConfig, manifest, features, out_dir: Path) -> ExperimentResult:
    """Train and evaluate sysK (and sysK+GA) on already extracted features."""
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    by_id = features.by_id()
    V = manifest.size
    train = manifest.subset("train")
    name = cfg.system_name

    with stage("train-som", timings):
        som_cfg = dataclasses.replace(cfg.som, seed=derive_seed(cfg.seed, "som"))
        codebook = som.som_train(_matrix(by_id, train), som_cfg)
        som.save_codebook(codebook, out_dir / "som.model")

    with stage("train-mlp", timings):
        acts = som.som_encode_batch(codebook, _matrix(by_id, train), cfg.encoding)
        mlp_cfg = mlp.MlpConfig(
            n_input=codebook.k_units, n_output=V, n_hidden=cfg.mlp.hidden, lr=cfg.mlp.lr,
            epochs=cfg.mlp.epochs, batch_size=cfg.mlp.batch_size, seed=derive_seed(cfg.seed, "mlp"),
            standardize_inputs=cfg.mlp.standardize_inputs,
        )
        model = mlp.mlp_train(acts, _labels(train), mlp_cfg)
        mlp.save_model(model, out_dir / "mlp.model")
        mlp.write_loss_csv(model, out_dir / "mlp_loss.csv")

    with stage("build-hmm", timings):
        train_seqs = [[r.word_id for r in seq] for seq in manifest.sequences("train")]
        hmm = decoder.build_hmm(train_seqs, V, cfg.smoothing)
        decoder.save_hmm(hmm, out_dir / "hmm.model")

    test_seqs = manifest.sequences("test")
    with stage("decode", timings):
        rows = decode_sequences(model, codebook, hmm, test_seqs, by_id, manifest.vocabulary, cfg.encoding)
        write_decodes(out_dir / "decoded.csv", rows)
    with stage("evaluate", timings):
        reports = [evaluation.score_decodes([(r[0], r[1]) for r in rows], manifest, name)]

    result = ExperimentResult(reports=reports, out_dir=out_dir)
    if cfg.ga_enabled:
        with stage("optimize-ga", timings):
            dev_seqs = manifest.sequences("dev")
            if not dev_seqs:
                log.warning("no dev split; GA fits on the training sessions")
                dev_seqs = manifest.sequences("train")
            dev = ga.DevSet.from_posteriors(dev_pairs(model, codebook, dev_seqs, by_id, cfg.encoding),
                                            hmm.class_priors)
            ga_cfg = dataclasses.replace(cfg.ga, seed=derive_seed(cfg.seed, "ga"))
            result.baseline_fitness = ga.fitness(ga.repair(ga.Chromosome.from_hmm(hmm).genes), dev,
                                                 mode=ga_cfg.fitness_mode)
            hmm_ga, history = ga.evolve(dev, hmm, ga_cfg)
            result.history = history
            result.ga_fitness = max(h.best_fitness for h in history)
            decoder.save_hmm(hmm_ga, out_dir / "hmm_ga.model")
            ga.write_history_csv(history, out_dir / "ga_history.csv")
        with stage("decode", timings):
            rows_ga = decode_sequences(model, codebook, hmm_ga, test_seqs, by_id, manifest.vocabulary,
                                       cfg.encoding)
            write_decodes(out_dir / "decoded_ga.csv", rows_ga)
        with stage("evaluate", timings):
            reports.append(evaluation.score_decodes([(r[0], r[1]) for r in rows_ga], manifest, f"{name}+GA"))

    timing = evaluation.StageTiming(
        som_seconds=timings["train-som"],
        mlp_seconds=timings["train-mlp"],
        total_seconds=timings["train-som"] + timings["train-mlp"],
    )
    for rep in reports:
        rep.timing = timing
    result.stage_seconds = timings
    (out_dir / "report.csv").write_text(evaluation.render_report(reports, "csv"))
    (out_dir / "report.txt").write_text(evaluation.render_report(reports, "text"))
    write_timing(out_dir / "timing.csv", {name: timings})
    return result


def write_timing(path, per_system):
    stages = sorted({s for t in per_system.values() for s in t})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system"] + [f"{s}_seconds" for s in stages])
        for system, t in per_system.items():
            w.writerow([system] + [f"{t.get(s, 0.0):.3f}" for s in stages])


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    manifest, base = prepare_corpus(cfg, out_dir, timings)
    features = prepare_features(cfg, manifest, base, out_dir, timings)
    result = run_system(cfg, manifest, features, out_dir / cfg.system_name)
    result.stage_seconds = {**timings, **result.stage_seconds}
    return result


def run_grid(cfg: ExperimentConfig, k_list=NAMED_K, ga_mode="both"):
    """sysK for every K (baseline and/or +GA) on one shared corpus and feature set.

    Returns (list of EvalReport in table order, dict K -> ExperimentResult).
    """
    if not k_list:
        raise ValueError("k_list is empty")
    if ga_mode not in ("both", "on", "off"):
        raise ValueError("ga_mode must be both, on or off")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    manifest, base = prepare_corpus(cfg, out_dir, timings)
    features = prepare_features(cfg, manifest, base, out_dir, timings)
    results = {}
    baseline, tuned = [], []
    for k in k_list:
        kcfg = dataclasses.replace(cfg.with_k(k), ga_enabled=ga_mode != "off")
        res = run_system(kcfg, manifest, features, out_dir / kcfg.system_name)
        results[k] = res
        if ga_mode in ("both", "off"):
            baseline.append(res.reports[0])
        if ga_mode in ("both", "on"):
            tuned.append(res.reports[-1])
    reports = baseline + tuned
    (out_dir / "comparison.csv").write_text(evaluation.render_report(reports, "csv"))
    (out_dir / "comparison.txt").write_text(evaluation.render_report(reports, "text"))
    write_timing(out_dir / "timing.csv", {f"sys{k}": r.stage_seconds for k, r in results.items()})
    # wall-clock numbers live only in timing.* so every other file is byte-reproducible
    timing_text = evaluation.render_report(reports, "text", include_timing=True).split("\n\n", 1)[1]
    (out_dir / "timing.txt").write_text(timing_text)
    return reports, results
