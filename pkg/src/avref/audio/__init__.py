from .synth import ActionKind, AudioClip, ClipRecord, ObjectClass, PROBE_SEQUENCE, SynthProfile

__all__ = [
    "ActionKind",
    "AudioClip",
    "ClipRecord",
    "ObjectClass",
    "PROBE_SEQUENCE",
    "SynthProfile",
]
