"""Corpus manifests, the synthetic stand-in corpus, and train/dev/test splitting.

Manifest CSV columns::

    speaker_id,severity,word_id,word_text,repetition,audio_path,split

``audio_path`` is relative to the manifest's directory unless absolute.
``split`` may be empty before :func:`split_corpus` runs.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from asrlab.errors import InconsistentVocabulary, ParseError, TooFewRepetitions
from asrlab.frontend import write_wav

COLUMNS = ["speaker_id", "severity", "word_id", "word_text", "repetition", "audio_path", "split"]
SPLITS = ("train", "dev", "test")


class Severity(str, enum.Enum):
    HIGH = "High"
    MODERATE = "Moderate"
    MILD = "Mild"

    @classmethod
    def parse(cls, text):
        for member in cls:
            if member.value.lower() == str(text).strip().lower():
                return member
        raise ValueError(f"unknown severity {text!r}")

    @property
    def distortion(self):
        """Jitter/noise multiplier used by the synthesizer."""
        return {"Mild": 1.0, "Moderate": 2.0, "High": 3.0}[self.value]


@dataclass(frozen=True)
class UtteranceRecord:
    speaker_id: str
    severity: Severity
    word_id: int
    word_text: str
    repetition: int
    audio_path: str
    split: str | None = None

    @property
    def utterance_id(self):
        return f"{self.speaker_id}_W{self.word_id:04d}_R{self.repetition}"


@dataclass
class CorpusManifest:
    vocabulary: list
    records: list = field(default_factory=list)

    @property
    def size(self):
        return len(self.vocabulary)

    def by_id(self):
        return {r.utterance_id: r for r in self.records}

    def speakers(self):
        """Speaker ids in order of first appearance, with their severity."""
        seen = {}
        for r in self.records:
            seen.setdefault(r.speaker_id, r.severity)
        return seen

    def subset(self, split):
        return [r for r in self.records if r.split == split]

    def sequences(self, split):
        """Per-speaker recording sessions: records of one split, manifest order."""
        groups = defaultdict(list)
        for r in self.records:
            if r.split == split:
                groups[r.speaker_id].append(r)
        return [groups[s] for s in self.speakers() if groups[s]]


# ------------------------------------------------------------------ io


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty manifest, header row missing", line=1)
        for col in COLUMNS:
            if col not in reader.fieldnames:
                raise ParseError("missing column", line=1, column=col)
        records = []
        words = {}
        severities = {}
        for row in reader:
            line = reader.line_num
            try:
                severity = Severity.parse(row["severity"])
            except ValueError as exc:
                raise ParseError(str(exc), line=line, column="severity") from None
            rec_fields = {}
            for col in ("word_id", "repetition"):
                try:
                    rec_fields[col] = int(row[col])
                except (TypeError, ValueError):
                    raise ParseError(f"not an integer: {row[col]!r}", line=line, column=col) from None
            if rec_fields["word_id"] < 0:
                raise ParseError("negative word_id", line=line, column="word_id")
            split = (row["split"] or "").strip() or None
            if split is not None and split not in SPLITS:
                raise ParseError(f"unknown split {split!r}", line=line, column="split")
            rec = UtteranceRecord(
                speaker_id=row["speaker_id"].strip(),
                severity=severity,
                word_id=rec_fields["word_id"],
                word_text=row["word_text"],
                repetition=rec_fields["repetition"],
                audio_path=row["audio_path"],
                split=split,
            )
            known = words.setdefault(rec.word_id, rec.word_text)
            if known != rec.word_text:
                raise InconsistentVocabulary(
                    f"word_id {rec.word_id} is both {known!r} and {rec.word_text!r}", line=line, column="word_text"
                )
            sev = severities.setdefault(rec.speaker_id, severity)
            if sev is not severity:
                raise ParseError(f"speaker {rec.speaker_id} has two severities", line=line, column="severity")
            records.append(rec)
    if words:
        ids = sorted(words)
        if ids != list(range(len(ids))):
            raise ParseError(f"word ids must be contiguous from 0, got {ids[:5]}...")
    vocabulary = [words[i] for i in sorted(words)]
    if len(set(vocabulary)) != len(vocabulary):
        raise InconsistentVocabulary("one word text maps to several word ids")
    return CorpusManifest(vocabulary=vocabulary, records=records)


def write_manifest(manifest: CorpusManifest, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in manifest.records:
            w.writerow([r.speaker_id, r.severity.value, r.word_id, r.word_text, r.repetition, r.audio_path, r.split or ""])


# ------------------------------------------------------------ synthesis

# UA-Speech-like prompt words: digits, radio alphabet, computer commands.
BASE_VOCABULARY = (
    "zero one two three four five six seven eight nine "
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima mike "
    "november oscar papa quebec romeo sierra tango uniform victor whiskey xray yankee zulu "
    "command line backspace delete enter escape tab shift control alt space "
    "up down left right home end insert pageup pagedown"
).split()

# (speaker, severity) codes from the UA-Speech participant table, interleaved by severity.
SPEAKERS = [
    ("M01", Severity.HIGH), ("M05", Severity.MODERATE), ("M08", Severity.MILD),
    ("M04", Severity.HIGH), ("M06", Severity.MODERATE), ("M09", Severity.MILD),
    ("M07", Severity.HIGH), ("M11", Severity.MODERATE), ("M10", Severity.MILD),
    ("M12", Severity.HIGH), ("F04", Severity.MODERATE), ("M14", Severity.MILD),
    ("M16", Severity.HIGH), ("F05", Severity.MILD), ("F02", Severity.HIGH),
    ("F03", Severity.HIGH),
]


@dataclass(frozen=True)
class SynthSpec:
    n_words: int = 20
    n_speakers: int = 5
    n_reps: int = 10
    seed: int = 7
    sample_rate: int = 16000
    snr_db: float = 20.0
    jitter: float = 0.02
    speaker_spread: float = 0.04
    min_duration: float = 0.3
    max_duration: float = 0.6

    def __post_init__(self):
        if min(self.n_words, self.n_speakers, self.n_reps) < 1:
            raise ValueError("words, speakers and reps must all be >= 1")


def vocabulary_words(n):
    return [BASE_VOCABULARY[i] if i < len(BASE_VOCABULARY) else f"word{i:03d}" for i in range(n)]


def speaker_roster(n):
    out = list(SPEAKERS[:n])
    sevs = [Severity.HIGH, Severity.MODERATE, Severity.MILD]
    for i in range(len(out), n):
        out.append((f"S{i + 1:02d}", sevs[i % 3]))
    return out


def word_formants(n_words, seed):
    """Distinct, well-separated (F1, F2, F3) triples, one per word.

    Farthest-point sampling in log-frequency over a geometric lattice, starting
    from a seeded lattice point.
    """
    per_axis = max(8, math.ceil(n_words ** (1.0 / 3.0)) + 2)
    axes = [np.geomspace(300.0, 1000.0, per_axis),
            np.geomspace(1100.0, 2400.0, per_axis),
            np.geomspace(2600.0, 3800.0, per_axis)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    logs = np.log(grid)
    rng = np.random.default_rng([seed, 0])
    chosen = [int(rng.integers(grid.shape[0]))]
    nearest = np.linalg.norm(logs - logs[chosen[0]], axis=1)
    for _ in range(n_words - 1):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.linalg.norm(logs - logs[nxt], axis=1))
    return grid[chosen]


def synth_utterance(formants, speaker_scale, severity: Severity, spec: SynthSpec, rng):
    """One utterance: three sinusoids in noise, padded with near-silence."""
    rate = spec.sample_rate
    mult = severity.distortion
    duration = rng.uniform(spec.min_duration, spec.max_duration)
    freqs = formants * speaker_scale * (1.0 + rng.uniform(-1.0, 1.0, 3) * spec.jitter * mult)
    amps = np.array([1.0, 0.6, 0.4]) * (1.0 + rng.uniform(-0.1, 0.1, 3) * mult)
    phases = rng.uniform(0.0, 2.0 * np.pi, 3)
    t = np.arange(int(duration * rate)) / rate
    voice = (amps[:, None] * np.sin(2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])).sum(axis=0)
    ramp = min(int(0.01 * rate), voice.size // 2)
    env = np.ones(voice.size)
    env[:ramp] = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    env[voice.size - ramp:] = env[:ramp][::-1]
    voice *= env
    rms = np.sqrt(np.mean(voice ** 2))
    snr_db = spec.snr_db - 20.0 * np.log10(mult)
    voice += rng.normal(0.0, rms * 10.0 ** (-snr_db / 20.0), voice.size)
    lead = np.zeros(int(rng.uniform(0.05, 0.15) * rate))
    tail = np.zeros(int(rng.uniform(0.05, 0.15) * rate))
    signal = np.concatenate([lead, voice, tail])
    # background floor 60 dB under the voice keeps log energies finite
    signal += rng.normal(0.0, rms * 1e-3, signal.size)
    return 0.5 * signal / np.max(np.abs(signal))


def synth_corpus(spec: SynthSpec, out_dir) -> CorpusManifest:
    """Generate WAVs under ``out_dir/audio`` and return the (unsplit) manifest.

    Every random draw comes from a substream keyed by (seed, role, speaker,
    word, repetition), so output is byte-identical for a given spec.
    """
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    vocab = vocabulary_words(spec.n_words)
    formants = word_formants(spec.n_words, spec.seed)
    records = []
    for s_idx, (speaker, severity) in enumerate(speaker_roster(spec.n_speakers)):
        srng = np.random.default_rng([spec.seed, 1, s_idx])
        scale = 1.0 + srng.uniform(-spec.speaker_spread, spec.speaker_spread)
        for rep in range(1, spec.n_reps + 1):
            prompt_order = np.random.default_rng([spec.seed, 3, s_idx, rep]).permutation(spec.n_words)
            for w in prompt_order:
                w = int(w)
                urng = np.random.default_rng([spec.seed, 2, s_idx, w, rep])
                samples = synth_utterance(formants[w], scale, severity, spec, urng)
                rel = Path("audio") / f"{speaker}_W{w:04d}_R{rep}.wav"
                write_wav(out_dir / rel, samples, spec.sample_rate)
                records.append(UtteranceRecord(speaker, severity, w, vocab[w], rep, rel.as_posix()))
    return CorpusManifest(vocabulary=vocab, records=records)


# ------------------------------------------------------------- splitting


def split_counts(n_reps, train_fraction):
    """(n_train, n_test) for one (speaker, word) group: floor, at least one each side."""
    if n_reps < 2:
        raise TooFewRepetitions(f"{n_reps} repetition(s); need at least 2")
    n_train = int(math.floor(n_reps * train_fraction + 1e-9))
    n_train = min(max(n_train, 1), n_reps - 1)
    return n_train, n_reps - n_train


def split_corpus(manifest: CorpusManifest, train_fraction=0.8, seed=0, dev_fraction=0.0) -> CorpusManifest:
    """Assign train/dev/test per (speaker, word) group of repetitions.

    ``dev_fraction`` carves floor(n_train * dev_fraction) records out of the
    training side, always leaving at least one for training.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    groups = defaultdict(list)
    for i, r in enumerate(manifest.records):
        groups[(r.speaker_id, r.word_id)].append(i)
    splits = [None] * len(manifest.records)
    rng = np.random.default_rng(seed)
    for key in sorted(groups):
        idx = sorted(groups[key], key=lambda i: manifest.records[i].repetition)
        n_train, _ = split_counts(len(idx), train_fraction)
        n_dev = min(int(math.floor(n_train * dev_fraction + 1e-9)), n_train - 1)
        perm = rng.permutation(len(idx))
        for rank, j in enumerate(perm):
            if rank < n_train - n_dev:
                splits[idx[j]] = "train"
            elif rank < n_train:
                splits[idx[j]] = "dev"
            else:
                splits[idx[j]] = "test"
    records = [replace(r, split=s) for r, s in zip(manifest.records, splits)]
    return CorpusManifest(vocabulary=list(manifest.vocabulary), records=records)
