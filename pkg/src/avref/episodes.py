"""The manipulation episode state machine.

One episode grounds an instruction in a scene, then drives pick ->
(yaw, roll, pitch, shake) -> classify -> place cycles:

* existence: probe bottles in grounding-preference order until the vote
  matches the sought class, place that bottle at the destination;
* classification: probe every bottle, matches go to the destination,
  the rest go back;
* exploratory: probe only the anchor-referred bottle, report whether the
  vote matches, put it back.

The no-audio baseline replaces the contents decision with a uniform random
choice and performs no probing.  Everything an episode hears comes from the
synthesizer using each bottle's hidden contents, with robot noise mixed in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .audio.classifier import ClipProvenance, VoteRecord, vote_on_clips
from .audio.synth import (
    ActionKind,
    FILL_RANGE,
    HAND_ANGULAR_VELOCITY,
    ObjectClass,
    PROBE_SEQUENCE,
    SynthProfile,
    add_robot_noise,
    synthesize,
)
from .errors import ConfigurationError, EvaluationError, GroundingError
from .instructions import TaskKind
from .scene import DetectorNoise, SceneTask, propose_regions, render_features
from .seeding import derive_seed, rng_for


@dataclass
class PolicyConfig:
    snr_db: float = 12.0
    detector: DetectorNoise = field(default_factory=lambda: DetectorNoise(1.0, 0.02, 0.05))
    sizes: tuple = (8, 16, 32)
    channels: tuple = (64, 32, 16)
    budget_per_bottle: int = 6
    synth_profile: SynthProfile | None = None

    def profile(self) -> SynthProfile:
        return self.synth_profile or SynthProfile.default()


@dataclass
class Step:
    action: str                 # pick / yaw / roll / pitch / shake / place / note
    object_id: int | None = None
    detail: dict = field(default_factory=dict)


@dataclass
class GroundingDecision:
    role: str                   # "pick" or "destination"
    selected_object_id: int | None
    beta: list = field(default_factory=list)


@dataclass
class EpisodeTrace:
    intent: dict
    instruction: str
    seed: int
    archetype: int | None
    steps: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    votes: list = field(default_factory=list)           # (bottle id, VoteRecord)
    placements: dict = field(default_factory=dict)      # bottle id -> bowl id | None
    reported_answer: bool | None = None
    outcome: str = "unterminated"  # success | failure | aborted:* | budget_exceeded
    used_probing: bool = True
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        lines = [json.dumps({
            "record": "header", "instruction": self.instruction, "intent": self.intent,
            "seed": self.seed, "archetype": self.archetype, "metadata": self.metadata,
        }, sort_keys=True)]
        for s in self.steps:
            lines.append(json.dumps(
                {"record": "step", "action": s.action, "object_id": s.object_id,
                 "detail": s.detail}, sort_keys=True))
        for d in self.decisions:
            lines.append(json.dumps(
                {"record": "decision", "role": d.role,
                 "selected_object_id": d.selected_object_id}, sort_keys=True))
        for bottle_id, vote in self.votes:
            lines.append(json.dumps({
                "record": "vote", "bottle_id": bottle_id, "final": vote.final.name,
                "entries": [
                    {"action": e.action.name, "predicted": e.predicted.name,
                     "probs": [round(float(p), 9) for p in e.probs]}
                    for e in vote.entries
                ],
                "tie_note": vote.tie_note,
            }, sort_keys=True))
        lines.append(json.dumps({
            "record": "outcome", "outcome": self.outcome,
            "placements": {str(k): v for k, v in self.placements.items()},
            "reported_answer": self.reported_answer,
            "used_probing": self.used_probing,
        }, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


class _Budget:
    def __init__(self, steps: int):
        self.remaining = steps

    def spend(self) -> bool:
        if self.remaining <= 0:
            return False
        self.remaining -= 1
        return True


def probe(bottle, state_seed: int, recognizer, config: PolicyConfig,
          trace: EpisodeTrace, budget: _Budget) -> VoteRecord | None:
    """Four probing actions on one held bottle, classified and voted.

    The bottle's fill is drawn once per episode from U[0.2, 0.8]; each action
    synthesizes that bottle's contents under the action's dynamics, adds
    robot noise, and runs the recognizer.  Returns None on budget exhaustion.
    """
    fill_rng = rng_for(state_seed, "fill", bottle.id)
    fill = float(fill_rng.uniform(*FILL_RANGE))
    clips = []
    for action in PROBE_SEQUENCE:
        if not budget.spend():
            return None
        seed = derive_seed(state_seed, "probe", bottle.id, action.name)
        clip = synthesize(bottle.contents, action, fill, seed, config.profile())
        clip = add_robot_noise(clip, config.snr_db, derive_seed(state_seed, "pnoise", bottle.id, action.name))
        prov = ClipProvenance(bottle.contents, action, fill, seed)
        clips.append((action, clip, prov))
        trace.steps.append(Step(action.name, bottle.id, {"fill": round(fill, 4)}))
    vote = vote_on_clips(recognizer, clips)
    trace.votes.append((bottle.id, vote))
    return vote


def _probe_order(scene, grounding_out, candidates) -> list:
    """Detected bottles in descending target-attention order.

    Bottles the detector missed are unknown to the policy and never probed;
    phantom candidates cannot be grasped and are skipped.
    """
    beta = grounding_out["target"].beta
    scored = []
    for j, cand in enumerate(candidates):
        if cand.object_id is None:
            continue
        try:
            obj = scene.get(cand.object_id)
        except KeyError:
            continue
        if obj.kind == "bottle":
            scored.append((-float(beta[j]), cand.object_id))
    scored.sort()
    seen = set()
    ordered = []
    for _, oid in scored:
        if oid not in seen:
            seen.add(oid)
            ordered.append(oid)
    return ordered


def run_episode(task: SceneTask, grounder, recognizer, config: PolicyConfig,
                seed: int) -> EpisodeTrace:
    """Execute one full episode; returns the trace with a terminal outcome."""
    scene = task.scene
    trace = EpisodeTrace(
        intent=task.intent.to_dict(), instruction=task.text, seed=seed,
        archetype=scene.archetype,
        metadata={"hand_angular_velocity_rad_s": HAND_ANGULAR_VELOCITY},
    )
    budget = _Budget(config.budget_per_bottle * max(len(scene.bottles()), 1))

    pyramid = render_features(scene, derive_seed(seed, "ep-render"), config.sizes, config.channels)
    candidates = propose_regions(scene, config.detector, derive_seed(seed, "ep-prop"))
    try:
        grounding_out = grounder.ground(task, pyramid, candidates)
    except GroundingError as exc:
        trace.steps.append(Step("note", None, {"error": str(exc)}))
        trace.outcome = "aborted:grounding"
        return trace

    trace.decisions.append(GroundingDecision(
        "target", grounding_out["target"].selected.object_id,
        [float(b) for b in grounding_out["target"].beta]))
    dest_id = None
    if grounding_out["destination"] is not None:
        dest_id = grounding_out["destination"].selected.object_id
        trace.decisions.append(GroundingDecision(
            "destination", dest_id, [float(b) for b in grounding_out["destination"].beta]))

    kind = task.intent.kind
    if kind is TaskKind.EXPLORATORY:
        sel = grounding_out["target"].selected.object_id
        trace.decisions.append(GroundingDecision("pick", sel))
        if sel is None or not _is_bottle(scene, sel):
            trace.steps.append(Step("note", sel, {"error": "selected region is not a bottle"}))
            trace.outcome = "failure"
            return trace
        bottle = scene.get(sel)
        if not budget.spend():
            trace.outcome = "budget_exceeded"
            return trace
        trace.steps.append(Step("pick", bottle.id))
        vote = probe(bottle, derive_seed(seed, "state"), recognizer, config, trace, budget)
        if vote is None:
            trace.outcome = "budget_exceeded"
            return trace
        if not budget.spend():
            trace.outcome = "budget_exceeded"
            return trace
        trace.steps.append(Step("place", bottle.id, {"where": "back"}))
        trace.placements[bottle.id] = None
        trace.reported_answer = vote.final == task.intent.target
        trace.outcome = "success"
        return trace

    order = _probe_order(scene, grounding_out, candidates)
    for bottle_id in order:
        trace.decisions.append(GroundingDecision("pick", bottle_id))
        if not _is_bottle(scene, bottle_id):
            trace.steps.append(Step("note", bottle_id, {"error": "pick target is not a bottle"}))
            continue
        bottle = scene.get(bottle_id)
        if not budget.spend():
            trace.outcome = "budget_exceeded"
            return trace
        trace.steps.append(Step("pick", bottle.id))
        vote = probe(bottle, derive_seed(seed, "state"), recognizer, config, trace, budget)
        if vote is None:
            trace.outcome = "budget_exceeded"
            return trace
        matched = vote.final == task.intent.target
        if not budget.spend():
            trace.outcome = "budget_exceeded"
            return trace
        if matched:
            trace.steps.append(Step("place", bottle.id, {"where": "destination", "bowl": dest_id}))
            trace.placements[bottle.id] = dest_id
            if kind is TaskKind.EXISTENCE:
                trace.outcome = "success"
                return trace
        else:
            trace.steps.append(Step("place", bottle.id, {"where": "back"}))
            trace.placements[bottle.id] = None

    if kind is TaskKind.EXISTENCE:
        trace.outcome = "failure"  # nothing voted as the target
    else:
        trace.outcome = "success"  # every bottle probed and routed
    return trace


def no_audio_baseline(task: SceneTask, grounder, config: PolicyConfig,
                      seed: int) -> EpisodeTrace:
    """Same grounding, but the contents decision is a uniform random guess."""
    scene = task.scene
    trace = EpisodeTrace(
        intent=task.intent.to_dict(), instruction=task.text, seed=seed,
        archetype=scene.archetype, used_probing=False,
        metadata={"hand_angular_velocity_rad_s": HAND_ANGULAR_VELOCITY},
    )
    rng = rng_for(seed, "no-audio")
    pyramid = render_features(scene, derive_seed(seed, "ep-render"), config.sizes, config.channels)
    candidates = propose_regions(scene, config.detector, derive_seed(seed, "ep-prop"))
    try:
        grounding_out = grounder.ground(task, pyramid, candidates)
    except GroundingError as exc:
        trace.steps.append(Step("note", None, {"error": str(exc)}))
        trace.outcome = "aborted:grounding"
        return trace

    trace.decisions.append(GroundingDecision(
        "target", grounding_out["target"].selected.object_id,
        [float(b) for b in grounding_out["target"].beta]))
    dest_id = None
    if grounding_out["destination"] is not None:
        dest_id = grounding_out["destination"].selected.object_id
        trace.decisions.append(GroundingDecision(
            "destination", dest_id, [float(b) for b in grounding_out["destination"].beta]))

    kind = task.intent.kind
    if kind is TaskKind.EXPLORATORY:
        sel = grounding_out["target"].selected.object_id
        trace.decisions.append(GroundingDecision("pick", sel))
        trace.reported_answer = bool(rng.uniform() < 0.5)
        trace.outcome = "success" if sel is not None and _is_bottle(scene, sel) else "failure"
        return trace

    detected = [c.object_id for c in candidates
                if c.object_id is not None and _is_bottle(scene, c.object_id)]
    detected = sorted(set(detected))
    if not detected:
        trace.outcome = "failure"
        return trace
    if kind is TaskKind.EXISTENCE:
        chosen = [detected[int(rng.integers(len(detected)))]]
    else:
        chosen = [b for b in detected if rng.uniform() < 0.5]
    for bottle_id in chosen:
        trace.decisions.append(GroundingDecision("pick", bottle_id))
        trace.steps.append(Step("pick", bottle_id))
        trace.steps.append(Step("place", bottle_id, {"where": "destination", "bowl": dest_id}))
        trace.placements[bottle_id] = dest_id
    trace.outcome = "success"
    return trace


def _is_bottle(scene, object_id) -> bool:
    try:
        return scene.get(object_id).kind == "bottle"
    except KeyError:
        return False


def replay_outcome(trace_text: str) -> dict:
    """Re-derive outcome facts from a stored trace and check conservation.

    Every picked bottle must be placed exactly once, probes must follow the
    yaw/roll/pitch/shake order, and the stored outcome record must agree with
    the step log.
    """
    header = None
    steps = []
    outcome = None
    votes = []
    for line in trace_text.strip().splitlines():
        row = json.loads(line)
        if row["record"] == "header":
            header = row
        elif row["record"] == "step":
            steps.append(row)
        elif row["record"] == "vote":
            votes.append(row)
        elif row["record"] == "outcome":
            outcome = row
    if header is None or outcome is None:
        raise EvaluationError("trace is missing its header or outcome record")

    held = None
    placed = {}
    probe_run = []
    for s in steps:
        act = s["action"]
        if act == "pick":
            if held is not None:
                raise EvaluationError("picked while holding another bottle")
            held = s["object_id"]
            probe_run = []
        elif act in ("yaw", "roll", "pitch", "shake"):
            if held != s["object_id"]:
                raise EvaluationError("probing a bottle that is not held")
            probe_run.append(act)
        elif act == "place":
            if held != s["object_id"]:
                raise EvaluationError("placed a bottle that is not held")
            if probe_run and probe_run != [a.name for a in PROBE_SEQUENCE]:
                raise EvaluationError(f"probe sequence out of order: {probe_run}")
            placed[s["object_id"]] = s["detail"].get("bowl")
            held = None
    if held is not None and outcome["outcome"] == "success":
        raise EvaluationError("episode ended while holding a bottle")
    stored = {int(k): v for k, v in outcome["placements"].items()}
    if stored != placed:
        raise EvaluationError("outcome placements disagree with the step log")
    return {
        "outcome": outcome["outcome"],
        "placements": placed,
        "votes": len(votes),
        "reported_answer": outcome.get("reported_answer"),
        "consistent": True,
    }
