"""Run configuration: one flat, JSON-serializable record of every knob.

A stored config plus the checkpoints it references reproduce any run
bit-identically.  Precedence when assembling a config for a command:
defaults < command-line flags < config file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .audio.classifier import AudioTrainConfig
from .audio.dsp import GateConfig
from .episodes import PolicyConfig
from .errors import ConfigurationError
from .grounding import GrounderConfig
from .scene import DetectorNoise


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs"
    jobs: int = 1

    # audio corpus + recognizer
    audio_hidden: int = 48
    audio_lr: float = 1.5e-3
    audio_epochs: int = 6
    audio_batch: int = 128
    audio_pooling: str = "final"
    train_reps: int = 500
    eval_reps: int = 100
    protocol_reps: int = 20
    snr_db: float = 12.0

    # noise gate
    gate_window_s: float = 0.010
    gate_median_factor: float = 1.5
    gate_silence_floor: float = 1e-4
    gate_peak_guard: float = 0.5
    gate_min_span: int = 2
    drop_masked_frames: bool = False

    # language + grounding
    embed_dim: int = 64
    hidden_dim: int = 64
    fusion_dim: int = 48
    attn_dim: int = 96
    attend_over: str = "embeddings"
    ground_lr: float = 2e-3
    ground_epochs: int = 30
    aux_weight: float = 1.5
    kappa: float = 10.0
    train_scenes: int = 500
    eval_scenes: int = 100

    # synthetic vision
    pyramid_sizes: tuple = (8, 16, 32)
    pyramid_channels: tuple = (64, 32, 16)
    detector_jitter_px: float = 1.0
    detector_p_miss: float = 0.02
    detector_fp_rate: float = 0.05

    # episodes + suites
    budget_per_bottle: int = 6
    episodes_per_cell: int = 144
    archetypes: tuple = (1, 2, 3, 4, 5, 6)

    # image -> robot calibration, row-major 2x3 affine
    calibration: tuple = (2.5, 0.0, -320.0, 0.0, 2.5, -320.0)

    def gate_config(self) -> GateConfig:
        return GateConfig(
            window_s=self.gate_window_s,
            median_factor=self.gate_median_factor,
            silence_floor=self.gate_silence_floor,
            peak_guard=self.gate_peak_guard,
            min_span_frames=self.gate_min_span,
        )

    def audio_config(self) -> AudioTrainConfig:
        return AudioTrainConfig(
            hidden=self.audio_hidden,
            lr=self.audio_lr,
            epochs=self.audio_epochs,
            batch_size=self.audio_batch,
            pooling=self.audio_pooling,
            gate=self.gate_config(),
            drop_masked_frames=self.drop_masked_frames,
        )

    def detector(self) -> DetectorNoise:
        return DetectorNoise(self.detector_jitter_px, self.detector_p_miss, self.detector_fp_rate)

    def grounder_config(self) -> GrounderConfig:
        return GrounderConfig(
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            fusion_dim=self.fusion_dim,
            attn_dim=self.attn_dim,
            attend_over=self.attend_over,
            sizes=tuple(self.pyramid_sizes),
            channels=tuple(self.pyramid_channels),
            lr=self.ground_lr,
            epochs=self.ground_epochs,
            aux_weight=self.aux_weight,
            kappa=self.kappa,
            detector=self.detector(),
        )

    def policy_config(self) -> PolicyConfig:
        return PolicyConfig(
            snr_db=self.snr_db,
            detector=self.detector(),
            sizes=tuple(self.pyramid_sizes),
            channels=tuple(self.pyramid_channels),
            budget_per_bottle=self.budget_per_bottle,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key '{key}'")
            if isinstance(getattr(cls, key, None), tuple) or key in (
                "pyramid_sizes", "pyramid_channels", "archetypes", "calibration"
            ):
                value = tuple(value)
            kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    def updated(self, overrides: dict) -> "RunConfig":
        data = asdict(self)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in data:
                raise ConfigurationError(f"unknown config key '{key}'")
            data[key] = value
        return RunConfig.from_dict(data)
