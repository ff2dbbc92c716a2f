"""Bottle-content recognizer: Bi-GRU over MFCC frames, softmax over 12 classes.

Includes the full clip pipeline (robot-noise gate -> MFCC -> network), the
per-action majority vote, training, and Table-style per-action evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.gru import GruParams, bigru_backward, bigru_forward
from ..nn.ops import cross_entropy_grad, softmax
from ..nn.optim import AdamState, adam_step
from ..seeding import rng_for
from .dsp import GateConfig, MfccMatrix, N_COEFFS, mfcc, noise_gate, retained_mfcc_frames
from .synth import ActionKind, AudioClip, ObjectClass, PROBE_SEQUENCE

N_CLASSES = len(ObjectClass)


@dataclass
class SoundModel:
    gru_fwd: GruParams
    gru_bwd: GruParams
    w_out: np.ndarray           # (12, 2 * hidden)
    b_out: np.ndarray           # (12,)
    feat_mean: np.ndarray       # (21,)
    feat_std: np.ndarray        # (21,)
    pooling: str = "final"      # "final" or "mean"

    @classmethod
    def init(cls, hidden: int, rng: np.random.Generator, pooling: str = "final") -> "SoundModel":
        bound = 1.0 / np.sqrt(2 * hidden)
        return cls(
            gru_fwd=GruParams.init(N_COEFFS, hidden, rng),
            gru_bwd=GruParams.init(N_COEFFS, hidden, rng),
            w_out=rng.uniform(-bound, bound, size=(N_CLASSES, 2 * hidden)),
            b_out=np.zeros(N_CLASSES),
            feat_mean=np.zeros(N_COEFFS),
            feat_std=np.ones(N_COEFFS),
            pooling=pooling,
        )

    def params(self) -> dict:
        out = {}
        out.update(self.gru_fwd.named("gru_fwd"))
        out.update(self.gru_bwd.named("gru_bwd"))
        out["w_out"] = self.w_out
        out["b_out"] = self.b_out
        return out

    @property
    def hidden(self) -> int:
        return self.gru_fwd.hidden_dim


def _normalize(model: SoundModel, feats: np.ndarray) -> np.ndarray:
    return (feats - model.feat_mean) / model.feat_std


def _forward_batch(model: SoundModel, x: np.ndarray):
    """x: (N, T, 21) normalized; returns probs (N, 12) and a backward cache."""
    xs = np.transpose(x, (1, 0, 2))
    out, cache = bigru_forward(model.gru_fwd, model.gru_bwd, xs)
    h = model.hidden
    if model.pooling == "mean":
        readout = out.mean(axis=0)
    else:
        readout = np.concatenate([out[-1, :, :h], out[0, :, h:]], axis=1)
    logits = readout @ model.w_out.T + model.b_out
    probs = softmax(logits, axis=1)
    return probs, (xs, out, cache, readout)


def _backward_batch(model: SoundModel, fwd_cache, dlogits: np.ndarray) -> dict:
    xs, out, cache, readout = fwd_cache
    T, B, _ = out.shape
    h = model.hidden
    grads = {
        "w_out": dlogits.T @ readout,
        "b_out": dlogits.sum(axis=0),
    }
    dreadout = dlogits @ model.w_out
    dout = np.zeros_like(out)
    if model.pooling == "mean":
        dout += dreadout[None, :, :] / T
    else:
        dout[-1, :, :h] = dreadout[:, :h]
        dout[0, :, h:] = dreadout[:, h:]
    _, g_f, g_b = bigru_backward(model.gru_fwd, model.gru_bwd, cache, dout)
    grads.update(g_f.named("gru_fwd"))
    grads.update(g_b.named("gru_bwd"))
    return grads


def predict(model: SoundModel, feats: MfccMatrix) -> np.ndarray:
    """Class probabilities for one clip's features.

    A fully gated clip arrives with zero frames; the semantically right call
    for "no sound at all" is the empty bottle, reported with certainty.
    """
    if feats.n_frames == 0:
        probs = np.zeros(N_CLASSES)
        probs[ObjectClass.empty] = 1.0
        return probs
    x = _normalize(model, feats.coeffs)[None, :, :]
    probs, _ = _forward_batch(model, x)
    return probs[0]


def predict_many(model: SoundModel, feats: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Batched probabilities for (N, T, 21) equal-length feature stacks."""
    outs = []
    for i in range(0, len(feats), chunk):
        x = _normalize(model, feats[i : i + chunk])
        probs, _ = _forward_batch(model, x)
        outs.append(probs)
    return np.concatenate(outs) if outs else np.zeros((0, N_CLASSES))


@dataclass(frozen=True)
class ClipProvenance:
    """Ground-truth metadata travelling with a synthesized clip."""

    true_class: ObjectClass
    action: ActionKind
    fill: float
    seed: int


class RecognizerPipeline:
    """gate -> MFCC -> network; the deployable recognizer."""

    def __init__(self, model: SoundModel, gate_config: GateConfig | None = None,
                 drop_masked_frames: bool = False):
        self.model = model
        self.gate_config = gate_config or GateConfig()
        self.drop_masked_frames = drop_masked_frames

    def features(self, clip: AudioClip) -> MfccMatrix:
        gate = noise_gate(clip, self.gate_config)
        if gate.fully_gated:
            return MfccMatrix(np.zeros((0, N_COEFFS)), np.zeros(0))
        feats = mfcc(gate.clip)
        if self.drop_masked_frames:
            keep = retained_mfcc_frames(gate, clip.rate)
            feats = MfccMatrix(feats.coeffs[keep], feats.frame_times[keep])
        return feats

    def classify(self, clip: AudioClip, provenance: ClipProvenance | None = None) -> np.ndarray:
        return predict(self.model, self.features(clip))


class OracleRecognizer:
    """Reads the clip's provenance instead of its samples; for upper bounds."""

    def classify(self, clip: AudioClip, provenance: ClipProvenance | None = None) -> np.ndarray:
        if provenance is None:
            raise ConfigurationError("oracle recognizer needs clip provenance")
        probs = np.zeros(N_CLASSES)
        probs[provenance.true_class] = 1.0
        return probs


@dataclass(frozen=True)
class VoteEntry:
    action: ActionKind
    predicted: ObjectClass
    probs: np.ndarray


@dataclass(frozen=True)
class VoteRecord:
    entries: tuple          # four VoteEntry, ordered yaw, roll, pitch, shake
    final: ObjectClass
    tie_note: str = ""


def majority_vote(entries) -> tuple:
    """Modal class of the four per-action predictions.

    Ties go to the tied class with the largest probability mass summed over
    all four distributions; a remaining tie picks the lowest class ordinal.
    Returns (final class, tie note).
    """
    entries = list(entries)
    if len(entries) != 4:
        raise ConfigurationError(f"majority vote needs exactly 4 predictions, got {len(entries)}")
    counts = {}
    for e in entries:
        counts[e.predicted] = counts.get(e.predicted, 0) + 1
    top = max(counts.values())
    tied = sorted([c for c, n in counts.items() if n == top])
    if len(tied) == 1:
        return tied[0], ""
    sums = {c: float(sum(e.probs[c] for e in entries)) for c in tied}
    best = max(sums.values())
    winners = sorted([c for c, s in sums.items() if abs(s - best) < 1e-12])
    note = f"tie among {[c.name for c in tied]} broken by summed probability"
    if len(winners) > 1:
        note += "; residual tie broken by class ordinal"
    return winners[0], note


def vote_on_clips(recognizer, action_clips) -> VoteRecord:
    """action_clips: [(action, clip, provenance)] in probe order."""
    entries = []
    for action, clip, prov in action_clips:
        probs = recognizer.classify(clip, prov)
        entries.append(VoteEntry(action, ObjectClass(int(np.argmax(probs))), probs))
    final, note = majority_vote(entries)
    return VoteRecord(tuple(entries), final, note)


@dataclass
class AudioTrainConfig:
    hidden: int = 48
    lr: float = 1.5e-3
    epochs: int = 6
    batch_size: int = 128
    pooling: str = "final"
    gate: GateConfig = field(default_factory=GateConfig)
    drop_masked_frames: bool = False


def extract_features(records, gate_config: GateConfig | None = None,
                     drop_masked_frames: bool = False):
    """Feature stack for equal-length records; drops fully gated clips.

    Returns (X (N, T, 21), labels, actions, reps, kept-indices).
    """
    gate_config = gate_config or GateConfig()
    feats, labels, actions, reps, kept = [], [], [], [], []
    n_frames = None
    for i, rec in enumerate(records):
        gate = noise_gate(rec.clip, gate_config)
        if gate.fully_gated:
            continue
        m = mfcc(gate.clip)
        if drop_masked_frames:
            keep = retained_mfcc_frames(gate, rec.clip.rate)
            m = MfccMatrix(m.coeffs[keep], m.frame_times[keep])
            if m.n_frames == 0:
                continue
        if n_frames is None:
            n_frames = m.n_frames
        if m.n_frames != n_frames:
            raise ConfigurationError("extract_features requires equal-length clips")
        feats.append(m.coeffs)
        labels.append(int(rec.true_class))
        actions.append(rec.action)
        reps.append(rec.rep)
        kept.append(i)
    X = np.stack(feats) if feats else np.zeros((0, 0, N_COEFFS))
    return X, np.array(labels), actions, reps, kept


def train(records_or_features, config: AudioTrainConfig, seed: int, init=None):
    """Train the recognizer; returns (model, per-epoch loss curve, opt state).

    ``records_or_features`` is either an iterable of ClipRecords or a
    pre-extracted (X, labels) pair.  The corpus must cover all 12 classes.
    Deterministic: one seed fixes init, shuffling, and hence the result.
    Pass ``init=(model, opt_state)`` to resume a previous run.
    """
    if isinstance(records_or_features, tuple):
        X, labels = records_or_features
    else:
        X, labels, _, _, _ = extract_features(
            records_or_features, config.gate, config.drop_masked_frames
        )
    missing = set(range(N_CLASSES)) - set(int(c) for c in labels)
    if missing:
        names = sorted(ObjectClass(c).name for c in missing)
        raise ConfigurationError(f"corpus missing classes: {names}")

    if init is not None:
        model, opt = init
    else:
        model = SoundModel.init(config.hidden, rng_for(seed, "audio-init"), config.pooling)
        flat = X.reshape(-1, N_COEFFS)
        model.feat_mean = flat.mean(axis=0)
        model.feat_std = np.maximum(flat.std(axis=0), 1e-8)
        opt = AdamState(lr=config.lr)

    params = model.params()
    onehot = np.eye(N_CLASSES)[labels]
    curve = []
    n = len(X)
    for epoch in range(config.epochs):
        order = rng_for(seed, "audio-shuffle", epoch).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = _normalize(model, X[idx])
            probs, cache = _forward_batch(model, xb)
            b = len(idx)
            loss = float(-np.sum(np.log(np.maximum(probs[np.arange(b), labels[idx]], 1e-300)))) / b
            dlogits = (probs - onehot[idx]) / b
            grads = _backward_batch(model, cache, dlogits)
            adam_step(params, grads, opt)
            total += loss * b
        curve.append((epoch, total / n))
    return model, curve, opt


def save_sound_model(path, model: SoundModel, opt: AdamState | None = None) -> None:
    arrays = dict(model.params())
    arrays["feat_mean"] = model.feat_mean
    arrays["feat_std"] = model.feat_std
    meta = {
        "sections": ["audio_classifier"],
        "hidden": model.hidden,
        "pooling": model.pooling,
        "opt": None,
    }
    if opt is not None:
        meta["opt"] = {"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
                       "eps": opt.eps, "step": opt.step}
        for name, m in opt.m.items():
            arrays[f"opt_m/{name}"] = m
            arrays[f"opt_v/{name}"] = opt.v[name]
    save_checkpoint(path, arrays, meta)


def load_sound_model(path):
    """Returns (model, opt state or None)."""
    arrays, meta = load_checkpoint(path)
    model = SoundModel.init(int(meta["hidden"]), np.random.default_rng(0), meta["pooling"])
    for name, arr in model.params().items():
        np.copyto(arr, arrays[name])
    model.feat_mean = arrays["feat_mean"]
    model.feat_std = arrays["feat_std"]
    opt = None
    if meta.get("opt"):
        o = meta["opt"]
        opt = AdamState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"],
                        step=int(o["step"]))
        params = model.params()
        for name in params:
            opt.m[name] = arrays[f"opt_m/{name}"]
            opt.v[name] = arrays[f"opt_v/{name}"]
    return model, opt


@dataclass
class PerActionTable:
    """Accuracy per class for each single action and the four-action vote."""

    accuracy: dict          # class -> {"all": float, "pitch": ..., ...}
    counts: dict            # class -> episodes evaluated
    excluded_episodes: int
    confusion: np.ndarray   # (12, 12) true x voted

    COLUMNS = ("all_actions", "pitch", "yaw", "roll", "shake")

    def average_row(self) -> dict:
        return {
            col: float(np.mean([self.accuracy[c][col] for c in ObjectClass]))
            for col in self.COLUMNS
        }

    def to_csv(self) -> str:
        lines = ["class," + ",".join(self.COLUMNS)]
        for c in ObjectClass:
            row = self.accuracy[c]
            lines.append(c.name + "," + ",".join(f"{row[col]:.4f}" for col in self.COLUMNS))
        avg = self.average_row()
        lines.append("Average," + ",".join(f"{avg[col]:.4f}" for col in self.COLUMNS))
        return "\n".join(lines) + "\n"


_COL_OF_ACTION = {
    ActionKind.pitch: "pitch",
    ActionKind.yaw: "yaw",
    ActionKind.roll: "roll",
    ActionKind.shake: "shake",
}


def evaluate_per_action(recognizer, records) -> PerActionTable:
    """Score a labeled corpus per action and with the majority vote.

    Episodes are (class, rep) groups holding one clip per probing action;
    incomplete groups are excluded and counted.
    """
    episodes = {}
    for rec in records:
        episodes.setdefault((rec.true_class, rec.rep), {})[rec.action] = rec

    correct = {c: {col: 0 for col in PerActionTable.COLUMNS} for c in ObjectClass}
    totals = {c: 0 for c in ObjectClass}
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    excluded = 0
    for (cls, _rep), group in sorted(episodes.items()):
        if set(group) != set(PROBE_SEQUENCE):
            excluded += 1
            continue
        totals[cls] += 1
        entries = []
        for action in PROBE_SEQUENCE:
            rec = group[action]
            prov = ClipProvenance(rec.true_class, rec.action, rec.fill, rec.seed)
            probs = recognizer.classify(rec.clip, prov)
            pred = ObjectClass(int(np.argmax(probs)))
            entries.append(VoteEntry(action, pred, probs))
            if pred == cls:
                correct[cls][_COL_OF_ACTION[action]] += 1
        final, _ = majority_vote(entries)
        confusion[cls, final] += 1
        if final == cls:
            correct[cls]["all_actions"] += 1

    accuracy = {}
    for c in ObjectClass:
        n = max(totals[c], 1)
        accuracy[c] = {col: correct[c][col] / n for col in PerActionTable.COLUMNS}
    return PerActionTable(accuracy, totals, excluded, confusion)
