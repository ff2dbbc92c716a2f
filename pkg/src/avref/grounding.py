"""Visual-language grounding over candidate regions.

One grounding head implements the fusion / attention chain:

    gate      = LeakyReLU(f_t W_gate + b_gate)                (instruction gate)
    vis_i     = LeakyReLU(f_v_i W_vis_i + b_vis_i)            (per pyramid level)
    fused_i   = gate * vis_i                                   (per cell)
    f_m       = concat_channels(upsample_2x2...(fused_i))      (finest resolution)
    p_j       = pooled f_m around candidate j's box            (center + 4 bands)
    a_j       = W_map p_j + b_map
    b_j       = W_reg r_loc_j + b_reg
    t_j       = w_score . tanh(a_j * b_j)
    beta      = softmax(t)
    u         = sum_j beta_j a_j        (projection of the beta-weighted pooled sum)
    s_loc_j   = cos(u, b_j)
    selected  = argmax_j s_loc_j; predicted center = selected box center.

Pooling concatenates the box-cell mean with four directional context bands
(left / right / above / below) so spatial relations to neighboring objects
are decodable.  Two heads run per instruction: one selects the referred
bottle set, the other the destination bowl.  The full model (encoder + both
heads) trains end to end with hand-derived gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import LanguageEncoder
from .errors import CalibrationError, ConfigurationError, GroundingError
from .instructions import TaskKind, Vocabulary
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.gru import GruParams
from .nn.ops import (
    cross_entropy_grad,
    leaky_relu,
    leaky_relu_grad,
    softmax,
    softmax_grad_from_output,
)
from .nn.optim import AdamState, adam_step
from .scene import (
    CandidateRegion,
    DetectorNoise,
    FeatureMapPyramid,
    R_LOC_DIM,
    SceneTask,
    propose_regions,
    render_features,
)
from .seeding import derive_seed, rng_for

BAND_PX = 72.0       # how far each directional context band reaches
BAND_CROSS_PX = 56.0 # band widening across the scan direction (covers diagonals)


# --- affine image -> robot calibration ---


@dataclass
class Calibration:
    matrix: np.ndarray | None = None  # (2, 3): [mm_x; mm_y] = M @ [px_x, px_y, 1]

    @staticmethod
    def default() -> "Calibration":
        from .scene import FRAME_PX, MM_PER_PX

        off = -FRAME_PX / 2 * MM_PER_PX
        return Calibration(np.array([[MM_PER_PX, 0.0, off], [0.0, MM_PER_PX, off]]))

    @classmethod
    def fit(cls, points_px, points_mm, max_residual_mm: float = 1.0) -> "Calibration":
        """Least-squares affine fit from >= 3 non-collinear point pairs."""
        px = np.asarray(points_px, dtype=np.float64)
        mm = np.asarray(points_mm, dtype=np.float64)
        if px.shape[0] < 3 or px.shape != mm.shape:
            raise CalibrationError("need at least 3 paired points")
        A = np.column_stack([px, np.ones(len(px))])
        if np.linalg.matrix_rank(A) < 3:
            raise CalibrationError("calibration points are collinear")
        sol, *_ = np.linalg.lstsq(A, mm, rcond=None)
        matrix = sol.T
        residual = np.max(np.linalg.norm(A @ sol - mm, axis=1))
        if residual >= max_residual_mm:
            raise CalibrationError(f"fit residual {residual:.3f} mm too large")
        return cls(matrix)

    def apply(self, point_px) -> tuple:
        if self.matrix is None:
            raise CalibrationError("calibration has not been fitted")
        x, y = point_px
        v = self.matrix @ np.array([x, y, 1.0])
        return (float(v[0]), float(v[1]))

    def invert(self, point_mm) -> tuple:
        if self.matrix is None:
            raise CalibrationError("calibration has not been fitted")
        A = self.matrix[:, :2]
        b = np.asarray(point_mm, dtype=np.float64) - self.matrix[:, 2]
        px = np.linalg.solve(A, b)
        return (float(px[0]), float(px[1]))


def image_to_robot(center_px, calibration: Calibration) -> tuple:
    """Predicted image center to table millimeters."""
    return calibration.apply(center_px)


# --- fusion + attention head ---


@dataclass
class FusedFeature:
    per_level: list          # native-resolution fused maps
    merged: np.ndarray       # (S, S, L*D) after upsampling + concat
    cache: tuple = None


@dataclass
class GroundingResult:
    beta: np.ndarray
    s_loc: np.ndarray
    selected_index: int
    selected: CandidateRegion
    center_px: tuple
    robot_mm: tuple | None = None
    cache: tuple | None = None


def _upsample(m: np.ndarray, k: int) -> np.ndarray:
    return np.repeat(np.repeat(m, k, axis=0), k, axis=1)


def _downsample_sum(m: np.ndarray, k: int) -> np.ndarray:
    s = m.shape[0] // k
    return m.reshape(s, k, s, k, -1).sum(axis=(1, 3))


def _cell_range(lo, hi, cell, n):
    i0 = int(np.floor(lo / cell))
    i1 = int(np.ceil(hi / cell)) - 1
    return max(i0, 0), min(max(i1, i0), n - 1)


def candidate_cells(box, grid_size: int, frame: float) -> list:
    """Flat cell-index arrays for the box and its four context bands."""
    cell = frame / grid_size
    x0, y0, x1, y1 = box
    ix0, ix1 = _cell_range(x0, x1, cell, grid_size)
    iy0, iy1 = _cell_range(y0, y1, cell, grid_size)
    reach = max(1, int(round(BAND_PX / cell)))
    cross = max(0, int(round(BAND_CROSS_PX / cell)))

    def cells(r0, r1, c0, c1):
        r0, r1 = max(r0, 0), min(r1, grid_size - 1)
        c0, c1 = max(c0, 0), min(c1, grid_size - 1)
        if r0 > r1 or c0 > c1:
            return np.zeros(0, dtype=int)
        rows = np.arange(r0, r1 + 1)
        cols = np.arange(c0, c1 + 1)
        return (rows[:, None] * grid_size + cols[None, :]).reshape(-1)

    return [
        cells(iy0, iy1, ix0, ix1),                                    # inside
        cells(iy0 - cross, iy1 + cross, ix0 - reach, ix0 - 1),        # left
        cells(iy0 - cross, iy1 + cross, ix1 + 1, ix1 + reach),        # right
        cells(iy0 - reach, iy0 - 1, ix0 - cross, ix1 + cross),        # above
        cells(iy1 + 1, iy1 + reach, ix0 - cross, ix1 + cross),        # below
    ]

N_POOL_REGIONS = 5


class GroundingHead:
    """Parameters and forward/backward for one attend pass."""

    def __init__(self, feature_dim: int, level_channels, fusion_dim: int,
                 attn_dim: int, rng: np.random.Generator):
        def u(fan_in, shape):
            b = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-b, b, size=shape)

        self.level_channels = tuple(level_channels)
        self.fusion_dim = fusion_dim
        self.attn_dim = attn_dim
        self.w_gate = u(feature_dim, (feature_dim, fusion_dim))
        # gates start mostly open and clear of the LeakyReLU kink
        self.b_gate = rng.uniform(0.3, 0.7, size=(fusion_dim,))
        self.w_vis = []
        for c in self.level_channels:
            w = u(c, (c, fusion_dim))
            # pass the semantic planes straight through the first channels
            for i in range(min(c, 16, fusion_dim)):
                w[i, i] += 1.0
            self.w_vis.append(w)
        self.b_vis = [rng.uniform(0.05, 0.15, size=(fusion_dim,)) for _ in self.level_channels]
        pooled = N_POOL_REGIONS * len(self.level_channels) * fusion_dim
        self.w_map = u(pooled, (pooled, attn_dim))
        self.b_map = np.zeros(attn_dim)
        self.w_reg = u(R_LOC_DIM, (R_LOC_DIM, attn_dim))
        self.b_reg = np.zeros(attn_dim)
        self.w_score = u(attn_dim, (attn_dim,))

    def params(self) -> dict:
        out = {
            "w_gate": self.w_gate,
            "b_gate": self.b_gate,
            "w_map": self.w_map,
            "b_map": self.b_map,
            "w_reg": self.w_reg,
            "b_reg": self.b_reg,
            "w_score": self.w_score,
        }
        for i, (w, b) in enumerate(zip(self.w_vis, self.b_vis)):
            out[f"w_vis{i}"] = w
            out[f"b_vis{i}"] = b
        return out

    # -- forward --

    def fuse(self, f_t: np.ndarray, pyramid: FeatureMapPyramid) -> FusedFeature:
        if f_t.shape[0] != self.w_gate.shape[0]:
            raise ConfigurationError("instruction feature dim mismatch")
        if tuple(pyramid.channels) != self.level_channels:
            raise ConfigurationError("pyramid channel counts mismatch")
        gate_pre = f_t @ self.w_gate + self.b_gate
        gate = leaky_relu(gate_pre)
        target = pyramid.sizes[-1]
        per_level, ups, vis_pres = [], [], []
        for lvl, grid in enumerate(pyramid.levels):
            vis_pre = grid @ self.w_vis[lvl] + self.b_vis[lvl]
            vis = leaky_relu(vis_pre)
            fused = gate[None, None, :] * vis
            per_level.append(fused)
            vis_pres.append(vis_pre)
            k = target // grid.shape[0]
            ups.append(_upsample(fused, k) if k > 1 else fused)
        merged = np.concatenate(ups, axis=2)
        return FusedFeature(per_level, merged, cache=(f_t, pyramid, gate_pre, gate, vis_pres))

    def attend(self, fused: FusedFeature, candidates,
               calibration: Calibration | None = None) -> GroundingResult:
        if not candidates:
            raise GroundingError("no candidates")
        from .scene import FRAME_PX

        S = fused.merged.shape[0]
        frame = float(FRAME_PX)
        flat = fused.merged.reshape(S * S, -1)
        ch = flat.shape[1]
        arange_ch = np.arange(ch)
        pooled = np.zeros((len(candidates), N_POOL_REGIONS * ch))
        regions = []
        for j, cand in enumerate(candidates):
            regs = candidate_cells(cand.box, S, frame)
            info = []
            for r, cells in enumerate(regs):
                if not len(cells):
                    info.append((cells, None))
                    continue
                if r == 0:
                    # the candidate's own box: region-aligned mean
                    pooled[j, :ch] = flat[cells].mean(axis=0)
                    info.append((cells, None))
                else:
                    # context bands: per-channel max, so a single neighboring
                    # object stays visible however large the band is
                    sub = flat[cells]
                    am = np.argmax(sub, axis=0)
                    pooled[j, r * ch : (r + 1) * ch] = sub[am, arange_ch]
                    info.append((cells, cells[am]))
            regions.append(info)
        r_locs = np.stack([c.feature for c in candidates])
        a = pooled @ self.w_map + self.b_map       # (J, A)
        b = r_locs @ self.w_reg + self.b_reg       # (J, A)
        tv = np.tanh(a * b)
        t = tv @ self.w_score
        beta = softmax(t)
        u = beta @ a
        un = max(float(np.linalg.norm(u)), 1e-12)
        bn = np.maximum(np.linalg.norm(b, axis=1), 1e-12)
        s_loc = (b @ u) / (un * bn)
        sel = int(np.argmax(s_loc))
        center = candidates[sel].center
        robot = calibration.apply(center) if calibration and calibration.matrix is not None else None
        cache = (pooled, regions, r_locs, a, b, tv, t, beta, u, un, bn, s_loc, candidates)
        return GroundingResult(beta, s_loc, sel, candidates[sel], center, robot, cache)

    # -- backward --

    def backward(self, fused: FusedFeature, result: GroundingResult,
                 d_t: np.ndarray, d_s: np.ndarray):
        """Gradients for the head given upstream d(loss)/dt and d(loss)/ds_loc.

        Returns (grads dict, d_f_t, d_pooled-is-folded) where d_f_t flows back
        into the language encoder.
        """
        pooled, regions, r_locs, a, b, tv, t, beta, u, un, bn, s_loc, candidates = result.cache
        J, A = a.shape

        da = np.zeros_like(a)
        db = np.zeros_like(b)
        dbeta = np.zeros(J)
        du = np.zeros(A)
        if d_s is not None and np.any(d_s):
            # s_j = (b_j . u) / (un * bn_j)
            du += (d_s / bn) @ b / un - float((d_s * s_loc).sum()) * u / (un * un)
            db += (d_s / bn)[:, None] * u[None, :] / un
            db += -((d_s * s_loc) / (bn * bn))[:, None] * b
        # u = sum_j beta_j a_j
        da += beta[:, None] * du[None, :]
        dbeta += a @ du
        dt = np.array(d_t, dtype=np.float64, copy=True)
        dt += softmax_grad_from_output(beta, dbeta)
        # t_j = w_score . tanh(a_j * b_j)
        dw_score = tv.T @ dt
        dm = dt[:, None] * self.w_score[None, :] * (1.0 - tv * tv)
        da += dm * b
        db += dm * a
        grads = {
            "w_score": dw_score,
            "w_map": pooled.T @ da,
            "b_map": da.sum(axis=0),
            "w_reg": r_locs.T @ db,
            "b_reg": db.sum(axis=0),
        }
        dpooled = da @ self.w_map.T

        # pooling -> merged map
        S = fused.merged.shape[0]
        ch = fused.merged.shape[2]
        dflat = np.zeros((S * S, ch))
        arange_ch = np.arange(ch)
        for j in range(J):
            for r, (cells, max_idx) in enumerate(regions[j]):
                if not len(cells):
                    continue
                dp = dpooled[j, r * ch : (r + 1) * ch]
                if max_idx is None:
                    # cells within one region are unique, so fancy-index += is exact
                    dflat[cells] += dp / len(cells)
                else:
                    dflat[max_idx, arange_ch] += dp
        dmerged = dflat.reshape(S, S, ch)

        # merged -> per-level fused -> params and f_t
        f_t, pyramid, gate_pre, gate, vis_pres = fused.cache
        dgate = np.zeros_like(gate)
        off = 0
        D = self.fusion_dim
        for lvl, grid in enumerate(pyramid.levels):
            dup = dmerged[:, :, off : off + D]
            off += D
            k = S // grid.shape[0]
            dfused = _downsample_sum(dup, k) if k > 1 else dup
            vis = leaky_relu(vis_pres[lvl])
            dvis = dfused * gate[None, None, :]
            dgate += np.einsum("xyc,xyc->c", dfused, vis)
            dvis_pre = dvis * leaky_relu_grad(vis_pres[lvl])
            grads[f"w_vis{lvl}"] = np.einsum("xyc,xyd->cd", grid, dvis_pre)
            grads[f"b_vis{lvl}"] = dvis_pre.sum(axis=(0, 1))
        dgate_pre = dgate * leaky_relu_grad(gate_pre)
        grads["w_gate"] = np.outer(f_t, dgate_pre)
        grads["b_gate"] = dgate_pre
        d_f_t = self.w_gate @ dgate_pre
        return grads, d_f_t


# --- full grounder (encoder + two heads) ---


@dataclass
class GrounderConfig:
    embed_dim: int = 64
    hidden_dim: int = 64
    fusion_dim: int = 48
    attn_dim: int = 64
    attend_over: str = "embeddings"
    sizes: tuple = (8, 16, 32)
    channels: tuple = (64, 32, 16)
    lr: float = 2e-3
    epochs: int = 25
    weight_decay: float = 1e-4
    aux_weight: float = 1.0
    kappa: float = 8.0
    detector: DetectorNoise = field(default_factory=lambda: DetectorNoise(1.0, 0.02, 0.05))


class Grounder:
    """Trained model mapping (instruction, pyramid, candidates) to selections."""

    def __init__(self, vocab: Vocabulary, config: GrounderConfig, rng: np.random.Generator):
        self.vocab = vocab
        self.config = config
        self.encoder = LanguageEncoder(
            len(vocab), config.embed_dim, config.hidden_dim, rng, config.attend_over
        )
        self.target_head = GroundingHead(
            self.encoder.feature_dim, config.channels, config.fusion_dim, config.attn_dim, rng
        )
        self.dest_head = GroundingHead(
            self.encoder.feature_dim, config.channels, config.fusion_dim, config.attn_dim, rng
        )
        self.calibration = Calibration.default()

    def params(self) -> dict:
        out = {}
        for prefix, owner in (
            ("encoder", self.encoder),
            ("target", self.target_head),
            ("dest", self.dest_head),
        ):
            for name, arr in owner.params().items():
                out[f"{prefix}/{name}"] = arr
        return out

    def ground(self, task: SceneTask, pyramid: FeatureMapPyramid, candidates) -> dict:
        """Selections for one instruction; never reads the task's ground truth."""
        tokens = self.vocab.tokenize(task.text)
        enc = self.encoder.encode(tokens)
        out = {}
        fused = self.target_head.fuse(enc.feature, pyramid)
        out["target"] = self.target_head.attend(fused, candidates, self.calibration)
        if task.intent.kind is not TaskKind.EXPLORATORY:
            fused_d = self.dest_head.fuse(enc.feature, pyramid)
            out["destination"] = self.dest_head.attend(fused_d, candidates, self.calibration)
        else:
            out["destination"] = None
        return out

    # -- persistence --

    def save(self, path) -> None:
        arrays = dict(self.params())
        meta = {
            "sections": ["language_encoder", "grounding"],
            "vocab": self.vocab.to_json(),
            "config": {
                "embed_dim": self.config.embed_dim,
                "hidden_dim": self.config.hidden_dim,
                "fusion_dim": self.config.fusion_dim,
                "attn_dim": self.config.attn_dim,
                "attend_over": self.config.attend_over,
                "sizes": list(self.config.sizes),
                "channels": list(self.config.channels),
            },
            "calibration": self.calibration.matrix.tolist(),
        }
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "Grounder":
        arrays, meta = load_checkpoint(path)
        cfg = meta["config"]
        config = GrounderConfig(
            embed_dim=cfg["embed_dim"],
            hidden_dim=cfg["hidden_dim"],
            fusion_dim=cfg["fusion_dim"],
            attn_dim=cfg["attn_dim"],
            attend_over=cfg["attend_over"],
            sizes=tuple(cfg["sizes"]),
            channels=tuple(cfg["channels"]),
        )
        vocab = Vocabulary.from_json(meta["vocab"])
        model = cls(vocab, config, rng_for(0, "grounder-load"))
        for name, arr in model.params().items():
            np.copyto(arr, arrays[name])
        model.calibration = Calibration(np.array(meta["calibration"]))
        return model


class OracleGrounder:
    """Selects ground-truth referents directly from the task's geometry."""

    def __init__(self):
        self.calibration = Calibration.default()

    def ground(self, task: SceneTask, pyramid, candidates) -> dict:
        if not candidates:
            raise GroundingError("no candidates")

        def result_for(ids) -> GroundingResult:
            idx = [j for j, c in enumerate(candidates) if c.object_id in ids]
            if not idx:
                raise GroundingError("ground-truth candidate missing from proposals")
            beta = np.zeros(len(candidates))
            beta[idx] = 1.0 / len(idx)
            s_loc = np.zeros(len(candidates))
            s_loc[idx] = 1.0
            sel = idx[0]
            center = candidates[sel].center
            return GroundingResult(beta, s_loc, sel, candidates[sel], center,
                                   self.calibration.apply(center))

        out = {"target": result_for(task.referent_ids)}
        if task.intent.kind is not TaskKind.EXPLORATORY:
            out["destination"] = result_for({task.destination_id})
        else:
            out["destination"] = None
        return out


# --- training ---


@dataclass
class GroundingExample:
    tokens: list
    pyramid: FeatureMapPyramid
    candidates: list
    target_idx: list       # candidate indices in the referent set
    dest_idx: int | None


def build_examples(tasks, config: GrounderConfig, vocab: Vocabulary, seed: int):
    """Render pyramids + proposals and map ground truth onto candidates.

    Tasks whose target (or destination) never made it into the proposals are
    skipped and counted, mirroring a detector miss at training time.
    """
    examples, skipped = [], 0
    for i, task in enumerate(tasks):
        pyramid = render_features(task.scene, derive_seed(seed, "render", i),
                                  config.sizes, config.channels)
        candidates = propose_regions(task.scene, config.detector, derive_seed(seed, "prop", i))
        target_idx = [j for j, c in enumerate(candidates) if c.object_id in task.referent_ids]
        dest_idx = None
        if task.intent.kind is not TaskKind.EXPLORATORY:
            hits = [j for j, c in enumerate(candidates) if c.object_id == task.destination_id]
            dest_idx = hits[0] if hits else None
        if not target_idx or (task.intent.kind is not TaskKind.EXPLORATORY and dest_idx is None):
            skipped += 1
            continue
        examples.append(GroundingExample(vocab.tokenize(task.text), pyramid,
                                         candidates, target_idx, dest_idx))
    return examples, skipped


def _head_loss_and_grads(head: GroundingHead, f_t, example, idx_set, config):
    """Forward + loss for one head; returns (loss, grads, d_f_t)."""
    fused = head.fuse(f_t, example.pyramid)
    result = head.attend(fused, example.candidates)
    mask = np.zeros(len(example.candidates))
    mask[idx_set] = 1.0
    loss_b, d_t = cross_entropy_grad(result.beta, mask)
    probs_s = softmax(config.kappa * result.s_loc)
    loss_s, d_logits_s = cross_entropy_grad(probs_s, mask)
    d_s = config.aux_weight * config.kappa * d_logits_s
    grads, d_f_t = head.backward(fused, result, d_t, d_s)
    return loss_b + config.aux_weight * loss_s, grads, d_f_t, result


def example_loss_and_grads(model: Grounder, example: GroundingExample):
    """Joint loss over both heads with gradients for every parameter."""
    enc = model.encoder.encode(example.tokens)
    loss = 0.0
    grads = {}
    d_f_t = np.zeros_like(enc.feature)
    l, g, dft, _ = _head_loss_and_grads(
        model.target_head, enc.feature, example, example.target_idx, model.config
    )
    loss += l
    d_f_t += dft
    grads.update({f"target/{k}": v for k, v in g.items()})
    if example.dest_idx is not None:
        l, g, dft, _ = _head_loss_and_grads(
            model.dest_head, enc.feature, example, [example.dest_idx], model.config
        )
        loss += l
        d_f_t += dft
        grads.update({f"dest/{k}": v for k, v in g.items()})
    else:
        grads.update({f"dest/{k}": np.zeros_like(v) for k, v in model.dest_head.params().items()})
    enc_grads = model.encoder.backward(enc, d_f_t)
    grads.update({f"encoder/{k}": v for k, v in enc_grads.items()})
    return loss, grads


def train_grounding(tasks, vocab: Vocabulary, config: GrounderConfig, seed: int,
                    eval_tasks=None, label_shuffle: bool = False):
    """Train a Grounder on scene tasks; returns (model, curve, accuracy, skipped).

    The loss per example is the set cross-entropy of the attention beta
    against the ground-truth candidates plus the same objective on the
    selection scores (softmax of kappa * s_loc), so the cosine-based argmax
    that attend() reports is trained directly alongside beta.

    Feature noise, box jitter, and proposal order re-randomize every epoch
    (the scenes themselves stay fixed), which stops the heads from memorizing
    pixel-exact feature patterns.  ``label_shuffle=True`` replaces every
    ground-truth candidate with a random one — the chance-level control.
    """
    model = Grounder(vocab, config, rng_for(seed, "grounder-init"))
    params = model.params()
    opt = AdamState(lr=config.lr)
    curve = []
    skipped = 0
    for epoch in range(config.epochs):
        if epoch == max(1, int(0.6 * config.epochs)):
            opt.lr *= 0.5  # settle late training
        examples, skipped = build_examples(tasks, config, vocab,
                                           derive_seed(seed, "train-ex", epoch))
        if not examples:
            raise ConfigurationError("no usable training examples")
        if label_shuffle:
            _shuffle_labels(examples, rng_for(seed, "label-shuffle", epoch))
        order = rng_for(seed, "grounder-shuffle", epoch).permutation(len(examples))
        total = 0.0
        decay = 1.0 - config.lr * config.weight_decay
        for i in order:
            loss, grads = example_loss_and_grads(model, examples[i])
            adam_step(params, grads, opt)
            if config.weight_decay:
                for name, p in params.items():
                    if name.endswith(("w_map", "w_reg", "w_gate")) or "/w_vis" in name:
                        p *= decay
            total += loss
        curve.append((epoch, total / len(examples)))
    accuracy = None
    if eval_tasks is not None:
        accuracy = selection_accuracy(model, eval_tasks, config, derive_seed(seed, "eval-ex"))
    return model, curve, accuracy, skipped


def _shuffle_labels(examples, rng) -> None:
    for ex in examples:
        ex.target_idx = [int(rng.integers(len(ex.candidates)))]
        if ex.dest_idx is not None:
            ex.dest_idx = int(rng.integers(len(ex.candidates)))


def selection_accuracy(model, tasks, config: GrounderConfig, seed: int) -> dict:
    """Fraction of tasks whose target and destination selections are correct."""
    n = t_ok = d_ok = joint = d_total = 0
    for i, task in enumerate(tasks):
        pyramid = render_features(task.scene, derive_seed(seed, "render", i),
                                  config.sizes, config.channels)
        candidates = propose_regions(task.scene, config.detector, derive_seed(seed, "prop", i))
        if not candidates:
            n += 1
            continue
        out = model.ground(task, pyramid, candidates)
        n += 1
        ok_t = out["target"].selected.object_id in task.referent_ids
        t_ok += ok_t
        ok_d = True
        if task.intent.kind is not TaskKind.EXPLORATORY:
            d_total += 1
            ok_d = out["destination"].selected.object_id == task.destination_id
            d_ok += ok_d
        joint += ok_t and ok_d
    return {
        "n": n,
        "target": t_ok / max(n, 1),
        "destination": d_ok / max(d_total, 1),
        "joint": joint / max(n, 1),
        "mean_candidates": None,
    }
