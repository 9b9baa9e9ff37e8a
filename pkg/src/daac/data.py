"""Hierarchical corpus model, on-disk format, synthetic generator, masking.

Corpus directory layout (all integers little-endian):
  manifest.json — {"magic": "DAAC", "version": 1, "n": N, "channels": F,
                   "length": T, "dtype": "f32le", "splits": {...},
                   "provenance": {...}}
  data.bin      — N*F*T float32 values, sample-major then channel then time
  labels.bin, subjects.bin, trials.bin — N int32 each

Values are float64 in memory; files hold float32, and the synthetic
generator rounds to float32 precision so save -> load round-trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

CORPUS_MAGIC = "DAAC"
CORPUS_VERSION = 1
SPLIT_NAMES = ("train", "val", "test")

# Synthetic template constants: integer cycles per window keep every bank
# zero-mean over the epoch, so class signal lives in frequency/amplitude
# rather than channel DC levels.
_BASE_FREQS = (2, 5)
_BASE_AMPS = (1.0, 0.5)


@dataclass
class HierSample:
    """One epoch-level segment: [F x T] values plus hierarchy ids."""

    values: np.ndarray
    subject_id: int
    trial_id: int
    label: int
    sample_id: int


@dataclass
class MaskedPair:
    """Two independently masked copies of one sample."""

    aug1: np.ndarray
    aug2: np.ndarray
    mask1: np.ndarray  # 1.0 where zeroed, length T
    mask2: np.ndarray


class Corpus:
    """Ordered sample collection with split tags and a manifest.

    Treated as immutable after construction: transforms return new corpora.
    """

    def __init__(self, values, subjects, trials, labels, split, manifest):
        self.values = np.asarray(values, dtype=np.float64)
        self.subjects = np.asarray(subjects, dtype=np.int32)
        self.trials = np.asarray(trials, dtype=np.int32)
        self.labels = np.asarray(labels, dtype=np.int32)
        self.split = list(split)
        self.manifest = manifest
        self._validate()

    def _validate(self):
        if self.values.ndim != 3:
            raise FormatError("corpus values must be [N, F, T]")
        n, f, t = self.values.shape
        if f < 1 or t < 2:
            raise FormatError(f"corpus dims invalid: F={f}, T={t}")
        if not np.all(np.isfinite(self.values)):
            raise FormatError("corpus contains non-finite values")
        for arr, name in ((self.subjects, "subjects"), (self.trials, "trials"),
                          (self.labels, "labels")):
            if arr.shape != (n,):
                raise FormatError(f"{name} length {arr.shape} != {n}")
        if len(self.split) != n:
            raise FormatError("split tags must cover every sample")
        for tag in self.split:
            if tag not in SPLIT_NAMES:
                raise FormatError(f"unknown split tag {tag!r}")
        # Appendix-style hierarchy: a trial belongs to exactly one subject.
        owner = {}
        for tr, su in zip(self.trials, self.subjects):
            if owner.setdefault(int(tr), int(su)) != int(su):
                raise FormatError(f"trial {tr} spans multiple subjects")

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_channels(self):
        return self.values.shape[1]

    @property
    def length(self):
        return self.values.shape[2]

    def sample(self, i) -> HierSample:
        return HierSample(self.values[i], int(self.subjects[i]),
                          int(self.trials[i]), int(self.labels[i]), i)

    def samples(self):
        return [self.sample(i) for i in range(len(self))]

    def indices(self, split=None):
        if split is None:
            return np.arange(len(self))
        return np.array([i for i, s in enumerate(self.split) if s == split],
                        dtype=np.int64)

    def subset(self, idx, provenance_note=None):
        idx = np.asarray(idx, dtype=np.int64)
        manifest = dict(self.manifest)
        manifest["n"] = int(idx.size)
        prov = dict(manifest.get("provenance", {}))
        if provenance_note:
            prov["subset"] = provenance_note
        manifest["provenance"] = prov
        return Corpus(self.values[idx], self.subjects[idx], self.trials[idx],
                      self.labels[idx], [self.split[i] for i in idx], manifest)

    def with_values(self, values, manifest=None):
        return Corpus(values, self.subjects, self.trials, self.labels,
                      self.split, manifest if manifest is not None else dict(self.manifest))

    def with_labels(self, labels):
        return Corpus(self.values, self.subjects, self.trials, labels,
                      self.split, dict(self.manifest))

    def with_split(self, split, manifest=None):
        return Corpus(self.values, self.subjects, self.trials, self.labels,
                      split, manifest if manifest is not None else dict(self.manifest))


def _build_manifest(values, split, provenance):
    n, f, t = values.shape
    splits = {name: [] for name in SPLIT_NAMES}
    for i, tag in enumerate(split):
        splits[tag].append(i)
    return {"magic": CORPUS_MAGIC, "version": CORPUS_VERSION, "n": n,
            "channels": f, "length": t, "dtype": "f32le",
            "splits": splits, "provenance": provenance}


# -- synthetic generator -------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 8
    trials_per_subject: int = 2
    epochs_per_trial: int = 8
    channels: int = 3
    length: int = 64
    class_gap: float = 2.0
    subject_effect: float = 0.3
    trial_effect: float = 0.15
    noise: float = 0.1
    seed: int = 0

    def validate(self):
        for name in ("n_subjects", "trials_per_subject", "epochs_per_trial",
                     "channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.length < 16:
            raise ConfigError("length must be >= 16 for the sinusoid templates")
        for name in ("class_gap", "subject_effect", "trial_effect", "noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


def _class_template(cls, channels, length, gap):
    """Two sinusoid banks; class 1 shifts frequencies and boosts amplitude by `gap`."""
    t = np.arange(length) / length
    shift = int(round(gap)) * cls
    k1, k2 = _BASE_FREQS[0] + shift, _BASE_FREQS[1] + shift
    a1 = _BASE_AMPS[0]
    a2 = _BASE_AMPS[1] * (1.0 + 0.5 * gap * cls)
    out = np.empty((channels, length))
    for f in range(channels):
        p1 = 2.0 * np.pi * f / (channels + 1)
        p2 = np.pi * f / (channels + 2)
        out[f] = (a1 * np.sin(2 * np.pi * k1 * t + p1)
                  + a2 * np.sin(2 * np.pi * k2 * t + p2))
    return out


def generate_synthetic(cfg: SynthConfig) -> Corpus:
    """Deterministic corpus with subject/trial/class additive structure.

    Each sample is its subject's class template plus a per-subject offset
    (sd `subject_effect`), a per-trial offset (sd `trial_effect`), and white
    noise (sd `noise`). Subjects alternate between the two classes.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    f, t = cfg.channels, cfg.length
    n = cfg.n_subjects * cfg.trials_per_subject * cfg.epochs_per_trial
    templates = [_class_template(c, f, t, cfg.class_gap) for c in (0, 1)]
    subj_off = rng.normal(0.0, 1.0, (cfg.n_subjects, f)) * cfg.subject_effect
    trial_off = rng.normal(
        0.0, 1.0, (cfg.n_subjects * cfg.trials_per_subject, f)) * cfg.trial_effect

    values = np.empty((n, f, t))
    subjects = np.empty(n, dtype=np.int32)
    trials = np.empty(n, dtype=np.int32)
    labels = np.empty(n, dtype=np.int32)
    i = 0
    for s in range(cfg.n_subjects):
        cls = s % 2
        for r in range(cfg.trials_per_subject):
            trial_id = s * cfg.trials_per_subject + r
            for _ in range(cfg.epochs_per_trial):
                noise = rng.normal(0.0, 1.0, (f, t)) * cfg.noise
                values[i] = (templates[cls] + subj_off[s][:, None]
                             + trial_off[trial_id][:, None] + noise)
                subjects[i] = s
                trials[i] = trial_id
                labels[i] = cls
                i += 1
    values = values.astype(np.float32).astype(np.float64)  # f32-exact for round-trips
    split = ["train"] * n
    manifest = _build_manifest(values, split,
                               {"kind": "synthetic", "config": asdict(cfg)})
    return Corpus(values, subjects, trials, labels, split, manifest)


# -- on-disk format --------------------------------------------------------------


def save_corpus(corpus: Corpus, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = _build_manifest(corpus.values, corpus.split,
                               corpus.manifest.get("provenance", {}))
    (path / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")
    (path / "data.bin").write_bytes(corpus.values.astype("<f4").tobytes())
    (path / "labels.bin").write_bytes(corpus.labels.astype("<i4").tobytes())
    (path / "subjects.bin").write_bytes(corpus.subjects.astype("<i4").tobytes())
    (path / "trials.bin").write_bytes(corpus.trials.astype("<i4").tobytes())


def load_corpus(path) -> Corpus:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise FormatError(f"no manifest.json under {path}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest unreadable: {e}") from None
    if manifest.get("magic") != CORPUS_MAGIC:
        raise FormatError("bad corpus magic")
    if manifest.get("version") != CORPUS_VERSION:
        raise FormatError(f"unsupported corpus version {manifest.get('version')}")
    if manifest.get("dtype") != "f32le":
        raise FormatError(f"unsupported dtype {manifest.get('dtype')!r}")
    n, f, t = manifest["n"], manifest["channels"], manifest["length"]

    raw = (path / "data.bin").read_bytes()
    if len(raw) != n * f * t * 4:
        raise FormatError(
            f"data.bin holds {len(raw) // 4} floats, expected {n * f * t}")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, f, t)

    ints = {}
    for name in ("labels", "subjects", "trials"):
        blob = (path / f"{name}.bin").read_bytes()
        if len(blob) != n * 4:
            raise FormatError(f"{name}.bin holds {len(blob) // 4} ints, expected {n}")
        ints[name] = np.frombuffer(blob, dtype="<i4").astype(np.int32)

    split = [None] * n
    for tag, ids in manifest.get("splits", {}).items():
        if tag not in SPLIT_NAMES:
            raise FormatError(f"unknown split tag {tag!r} in manifest")
        for i in ids:
            if not 0 <= i < n or split[i] is not None:
                raise FormatError(f"split assignment invalid at sample {i}")
            split[i] = tag
    if any(s is None for s in split):
        raise FormatError("split assignment does not cover all samples")

    return Corpus(values, ints["subjects"], ints["trials"], ints["labels"],
                  split, manifest)


# -- augmentation -----------------------------------------------------------------


def mask_pair(sample, min_frac, max_frac, rng) -> MaskedPair:
    """Two independent contiguous temporal masks, zeroed across all channels.

    Span length is uniform on [ceil(min_frac*T), floor(max_frac*T)], start
    uniform over valid positions. Masks are shared across channels.
    """
    if not (0.0 < min_frac <= max_frac < 1.0):
        raise ConfigError(f"mask fractions out of range: [{min_frac}, {max_frac}]")
    values = sample.values if isinstance(sample, HierSample) else np.asarray(sample)
    t = values.shape[-1]
    lo = int(np.ceil(min_frac * t))
    hi = int(np.floor(max_frac * t))
    if lo > hi:
        raise ConfigError(f"mask span range empty for T={t}: [{lo}, {hi}]")

    def one():
        span = int(rng.integers(lo, hi + 1))
        start = int(rng.integers(0, t - span + 1))
        mask = np.zeros(t)
        mask[start:start + span] = 1.0
        aug = values * (1.0 - mask)
        return aug, mask

    aug1, mask1 = one()
    aug2, mask2 = one()
    return MaskedPair(aug1, aug2, mask1, mask2)


# -- splits -------------------------------------------------------------------------


def _bucket_counts(n, ratios):
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    cum = np.floor(np.cumsum(ratios) * n + 1e-9).astype(int)
    counts = np.diff(np.concatenate([[0], cum]))
    counts[-1] = n - counts[:-1].sum()
    if np.any(counts <= 0):
        raise ConfigError(f"a split would be empty: n={n}, ratios={ratios}")
    return counts


def split_corpus(corpus: Corpus, mode, ratios, seed=0) -> Corpus:
    """Assign train/val/test tags, partitioning subjects or samples.

    `subject_independent` partitions subject ids so no subject crosses
    splits; `subject_dependent` partitions sample ids directly.
    """
    ratios = list(ratios)
    if len(ratios) != len(SPLIT_NAMES):
        raise ConfigError("need train/val/test ratios")
    rng = np.random.default_rng(seed)
    split = [None] * len(corpus)
    if mode == "subject_independent":
        subs = np.array(sorted(set(int(s) for s in corpus.subjects)))
        counts = _bucket_counts(len(subs), ratios)
        perm = rng.permutation(len(subs))
        tag_of = {}
        start = 0
        for tag, c in zip(SPLIT_NAMES, counts):
            for j in perm[start:start + c]:
                tag_of[int(subs[j])] = tag
            start += c
        split = [tag_of[int(s)] for s in corpus.subjects]
    elif mode == "subject_dependent":
        counts = _bucket_counts(len(corpus), ratios)
        perm = rng.permutation(len(corpus))
        start = 0
        for tag, c in zip(SPLIT_NAMES, counts):
            for i in perm[start:start + c]:
                split[int(i)] = tag
            start += c
    else:
        raise ConfigError(f"unknown split mode {mode!r}")
    manifest = _build_manifest(corpus.values, split, corpus.manifest.get("provenance", {}))
    prov = dict(manifest["provenance"])
    prov["split"] = {"mode": mode, "ratios": ratios, "seed": seed}
    manifest["provenance"] = prov
    return corpus.with_split(split, manifest)


# -- standardization ----------------------------------------------------------------


def standardize(corpus: Corpus):
    """Per-channel zero-mean/unit-variance using training-split statistics.

    Returns (standardized corpus, {"mean": [F], "std": [F]}). Constant
    channels keep std 1 to stay finite.
    """
    train_idx = corpus.indices("train")
    if train_idx.size == 0:
        raise ConfigError("standardize requires a non-empty train split")
    train_vals = corpus.values[train_idx]            # [n, F, T]
    mean = train_vals.mean(axis=(0, 2))
    std = train_vals.std(axis=(0, 2))
    std = np.where(std > 0, std, 1.0)
    scaled = (corpus.values - mean[None, :, None]) / std[None, :, None]
    manifest = dict(corpus.manifest)
    prov = dict(manifest.get("provenance", {}))
    prov["standardized"] = {"mean": mean.tolist(), "std": std.tolist()}
    manifest["provenance"] = prov
    return corpus.with_values(scaled, manifest), {"mean": mean, "std": std}
