"""Synthetic tabletop scenes and the procedural feature stack.

Replaces a camera + CNN backbone + detector with three deterministic pieces:

* ``make_scene`` draws one of six scene archetypes (existence, classification
  and exploratory layouts of increasing clutter) by rejection sampling;
* ``render_features`` paints a three-level feature pyramid whose channels
  carry semantic planes (occupancy by kind, bowl color, distractor kind,
  size, normalized position) plus content-keyed texture and noise — bottles
  are pixel-identical except for the position planes, so nothing visual can
  leak their hidden contents;
* ``propose_regions`` emits per-object candidate boxes with configurable
  jitter, misses, and false positives, standing in for a detector.

All spatial-relation semantics used anywhere (ground truth, scene
construction, oracles) live in this module's geometry helpers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .audio.synth import ObjectClass
from .errors import ConfigurationError, SceneGenerationError
from .instructions import (
    Anchor,
    AnchorRelation,
    BowlColor,
    Destination,
    DistractorKind,
    Intent,
    SpatialRelation,
    TaskKind,
    generate_from_intent,
)
from .seeding import rng_for

FRAME_PX = 256
MM_PER_PX = 2.5           # default image -> table scale, origin at frame center

BOTTLE_SIZE = (16.0, 24.0)
BOWL_SIZE = (40.0, 40.0)
DISTRACTOR_SIZES = {
    DistractorKind.banana: (30.0, 14.0),
    DistractorKind.apple: (18.0, 18.0),
    DistractorKind.cup: (20.0, 22.0),
    DistractorKind.plate: (36.0, 36.0),
    DistractorKind.box: (28.0, 28.0),
    DistractorKind.book: (26.0, 16.0),
}

# Geometry thresholds (one canonical place).
SIDE_GAP_PX = 20.0        # min center offset for left/right/front/back
ROW_TOL_PX = 40.0         # max cross-axis offset for directional relations
ON_GAP_PX = 10.0          # max |anchor top - bottle bottom| for "on"
NEXT_TO_MAX_PX = 70.0     # max center distance for "next to"
MIN_SEPARATION_PX = 4.0   # collision padding between boxes

BOWL_PALETTE = (BowlColor.red, BowlColor.green, BowlColor.blue, BowlColor.yellow)

SEMANTIC_PLANES = 16
POSITION_PLANES = (14, 15)
_DISTRACTOR_ORDER = tuple(DistractorKind)


def default_table_mm(cx: float, cy: float) -> tuple:
    return ((cx - FRAME_PX / 2) * MM_PER_PX, (cy - FRAME_PX / 2) * MM_PER_PX)


@dataclass(frozen=True)
class SceneObject:
    id: int
    kind: str                       # bottle | bowl | distractor
    box: tuple                      # (x0, y0, x1, y1) px
    color: BowlColor | None = None  # bowls only
    distractor: DistractorKind | None = None
    contents: ObjectClass | None = None  # bottles only; invisible to features
    table_mm: tuple = (0.0, 0.0)

    @property
    def cx(self) -> float:
        return (self.box[0] + self.box[2]) / 2.0

    @property
    def cy(self) -> float:
        return (self.box[1] + self.box[3]) / 2.0

    @property
    def width(self) -> float:
        return self.box[2] - self.box[0]

    @property
    def height(self) -> float:
        return self.box[3] - self.box[1]


@dataclass
class Scene:
    objects: list
    frame_px: int = FRAME_PX
    archetype: int | None = None
    seed: int | None = None
    anchored: tuple | None = None   # (relation name, anchor id, bottle id)

    def __post_init__(self):
        for obj in self.objects:
            x0, y0, x1, y1 = obj.box
            if not (0 <= x0 < x1 <= self.frame_px and 0 <= y0 < y1 <= self.frame_px):
                raise ConfigurationError(f"object {obj.id} box outside the frame")
            if obj.contents is not None and obj.kind != "bottle":
                raise ConfigurationError("only bottles have contents")

    def bottles(self) -> list:
        return [o for o in self.objects if o.kind == "bottle"]

    def bowls(self) -> list:
        return [o for o in self.objects if o.kind == "bowl"]

    def distractors(self) -> list:
        return [o for o in self.objects if o.kind == "distractor"]

    def get(self, object_id: int) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "frame_px": self.frame_px,
            "archetype": self.archetype,
            "seed": self.seed,
            "anchored": list(self.anchored) if self.anchored else None,
            "objects": [
                {
                    "id": o.id,
                    "kind": o.kind,
                    "box": list(o.box),
                    "color": o.color.name if o.color else None,
                    "distractor": o.distractor.name if o.distractor else None,
                    "contents": o.contents.name if o.contents is not None else None,
                    "table_mm": list(o.table_mm),
                }
                for o in self.objects
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "Scene":
        if d.get("format_version") != 1:
            raise ConfigurationError("unsupported scene format version")
        objects = [
            SceneObject(
                id=od["id"],
                kind=od["kind"],
                box=tuple(od["box"]),
                color=BowlColor[od["color"]] if od.get("color") else None,
                distractor=DistractorKind[od["distractor"]] if od.get("distractor") else None,
                contents=ObjectClass[od["contents"]] if od.get("contents") else None,
                table_mm=tuple(od.get("table_mm", (0.0, 0.0))),
            )
            for od in d["objects"]
        ]
        anchored = tuple(d["anchored"]) if d.get("anchored") else None
        return Scene(objects, d["frame_px"], d.get("archetype"), d.get("seed"), anchored)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @staticmethod
    def load(path) -> "Scene":
        with open(path, "r", encoding="utf-8") as fh:
            return Scene.from_dict(json.load(fh))


# --- geometric relation semantics ---


def relation_holds(rel: AnchorRelation, subject: SceneObject, anchor: SceneObject) -> bool:
    dx = subject.cx - anchor.cx
    dy = subject.cy - anchor.cy
    if rel is AnchorRelation.on:
        return (
            anchor.box[0] <= subject.cx <= anchor.box[2]
            and abs(anchor.box[1] - subject.box[3]) <= ON_GAP_PX
        )
    if rel is AnchorRelation.next_to:
        return np.hypot(dx, dy) <= NEXT_TO_MAX_PX and not relation_holds(
            AnchorRelation.on, subject, anchor
        )
    if rel is AnchorRelation.left_of:
        return dx <= -SIDE_GAP_PX and abs(dy) <= ROW_TOL_PX
    if rel is AnchorRelation.right_of:
        return dx >= SIDE_GAP_PX and abs(dy) <= ROW_TOL_PX
    if rel is AnchorRelation.behind:
        return dy <= -SIDE_GAP_PX and abs(dx) <= ROW_TOL_PX
    if rel is AnchorRelation.in_front_of:
        return dy >= SIDE_GAP_PX and abs(dx) <= ROW_TOL_PX
    raise ConfigurationError(f"unhandled relation {rel}")


def resolve_anchor(scene: Scene, relation: AnchorRelation, kind: DistractorKind):
    """The unique bottle satisfying (relation, anchor kind), or None."""
    anchors = [d for d in scene.distractors() if d.distractor is kind]
    hits = []
    for anchor in anchors:
        for b in scene.bottles():
            if relation_holds(relation, b, anchor):
                hits.append(b.id)
    return hits[0] if len(hits) == 1 else None


def resolve_destination(scene: Scene, dest: Destination):
    """The unique bowl a destination descriptor denotes, or None."""
    bowls = scene.bowls()
    if not bowls:
        return None
    if dest.color is not None:
        hits = [b.id for b in bowls if b.color is dest.color]
        return hits[0] if len(hits) == 1 else None
    rel = dest.relation
    if rel is SpatialRelation.middle:
        if len(bowls) < 3:
            return None
        ranked = sorted(bowls, key=lambda b: abs(b.cx - FRAME_PX / 2))
        if abs(ranked[1].cx - FRAME_PX / 2) - abs(ranked[0].cx - FRAME_PX / 2) < 10.0:
            return None
        return ranked[0].id
    key = {
        SpatialRelation.left: (lambda b: b.cx, min),
        SpatialRelation.right: (lambda b: b.cx, max),
        SpatialRelation.back: (lambda b: b.cy, min),
        SpatialRelation.front: (lambda b: b.cy, max),
    }[rel]
    vals = sorted(key[0](b) for b in bowls)
    extreme = vals[0] if key[1] is min else vals[-1]
    runner = vals[1] if key[1] is min else vals[-2]
    if len(bowls) > 1 and abs(extreme - runner) < SIDE_GAP_PX:
        return None
    winner = key[1](bowls, key=key[0])
    return winner.id


def destination_choices(scene: Scene, bowl_id: int) -> list:
    """Every descriptor that uniquely denotes the given bowl."""
    out = []
    bowl = scene.get(bowl_id)
    if bowl.color is not None:
        dest = Destination(color=bowl.color)
        if resolve_destination(scene, dest) == bowl_id:
            out.append(dest)
    for rel in SpatialRelation:
        dest = Destination(relation=rel)
        if resolve_destination(scene, dest) == bowl_id:
            out.append(dest)
    return out


# --- feature rendering ---


@dataclass
class FeatureMapPyramid:
    levels: list                    # arrays (S, S, C), coarse to fine
    sizes: tuple = (8, 16, 32)
    channels: tuple = (64, 32, 16)

    def __post_init__(self):
        cs = list(self.channels)
        if sorted(cs, reverse=True) != cs:
            raise ConfigurationError("channel counts must be non-increasing")
        for lvl, (s, c) in zip(self.levels, zip(self.sizes, self.channels)):
            if lvl.shape != (s, s, c):
                raise ConfigurationError("pyramid level shape mismatch")
            if not np.all(np.isfinite(lvl)):
                raise ConfigurationError("non-finite feature values")


def _content_key(obj: SceneObject) -> str:
    color = obj.color.name if obj.color else "-"
    dk = obj.distractor.name if obj.distractor else "-"
    return f"{obj.kind}|{color}|{dk}|{obj.width:.1f}x{obj.height:.1f}"


def _semantic_planes(obj: SceneObject, frame: float) -> np.ndarray:
    v = np.zeros(SEMANTIC_PLANES)
    v[{"bottle": 0, "bowl": 1, "distractor": 2}[obj.kind]] = 1.0
    if obj.color is not None and obj.color in BOWL_PALETTE:
        v[3 + BOWL_PALETTE.index(obj.color)] = 1.0
    if obj.distractor is not None:
        v[7 + _DISTRACTOR_ORDER.index(obj.distractor)] = 1.0
    # size quantized to 0.1 px so same-size objects match to the last bit
    v[13] = (round(obj.width, 1) * round(obj.height, 1)) / (48.0 * 48.0)
    v[POSITION_PLANES[0]] = obj.cx / frame
    v[POSITION_PLANES[1]] = obj.cy / frame
    return v


_TEXTURE_SEED = 0x7E47


def render_features(scene: Scene, seed: int, sizes=(8, 16, 32),
                    channels=(64, 32, 16), noise_amp: float = 0.01) -> FeatureMapPyramid:
    """Paint objects into the feature grids at each level.

    Bottles paint only the cell holding their center, so any two bottles
    produce bit-identical cell vectors everywhere except the position planes
    (nothing visual can betray their contents).  Bowls and distractors paint
    every cell their box covers, which keeps them visible to the context
    pooling that decodes spatial relations.

    Channels beyond the 16 semantic planes hold a content-keyed texture
    (stable across scenes and seeds, like a backbone's response).  The seeded
    noise is also keyed on content, never on position.
    """
    if len(sizes) != len(channels):
        raise ConfigurationError("sizes and channels must align")
    frame = float(scene.frame_px)
    levels = [np.zeros((s, s, c)) for s, c in zip(sizes, channels)]
    for obj in scene.objects:
        key = _content_key(obj)
        sem = _semantic_planes(obj, frame)
        for lvl, (s, c) in enumerate(zip(sizes, channels)):
            cell = frame / s
            vec = np.zeros(c)
            vec[: min(SEMANTIC_PLANES, c)] = sem[: min(SEMANTIC_PLANES, c)]
            if c > SEMANTIC_PLANES:
                tex = rng_for(_TEXTURE_SEED, "texture", lvl, key)
                vec[SEMANTIC_PLANES:] = 0.5 * tex.uniform(-1.0, 1.0, size=c - SEMANTIC_PLANES)
            vec += noise_amp * rng_for(seed, "featnoise", lvl, key).uniform(-1.0, 1.0, size=c)
            if obj.kind == "bottle":
                ix = min(int(obj.cx / cell), s - 1)
                iy = min(int(obj.cy / cell), s - 1)
                levels[lvl][iy, ix, :] += vec
            else:
                x0, y0, x1, y1 = obj.box
                ix0, ix1 = max(int(x0 // cell), 0), min(int(np.ceil(x1 / cell)) - 1, s - 1)
                iy0, iy1 = max(int(y0 // cell), 0), min(int(np.ceil(y1 / cell)) - 1, s - 1)
                levels[lvl][iy0 : iy1 + 1, ix0 : ix1 + 1, :] += vec
    return FeatureMapPyramid(levels, tuple(sizes), tuple(channels))


# --- detector stand-in ---


@dataclass(frozen=True)
class DetectorNoise:
    jitter_px: float = 0.0
    p_miss: float = 0.0
    fp_rate: float = 0.0     # expected false positives per scene

    @staticmethod
    def none() -> "DetectorNoise":
        return DetectorNoise()


@dataclass(frozen=True)
class CandidateRegion:
    object_id: int | None    # None for false positives
    box: tuple
    feature: np.ndarray      # r_loc
    confidence: float
    kind_guess: str

    @property
    def center(self) -> tuple:
        return ((self.box[0] + self.box[2]) / 2.0, (self.box[1] + self.box[3]) / 2.0)


R_LOC_DIM = 4 + 3 + len(BOWL_PALETTE) + len(_DISTRACTOR_ORDER) + 1


def _r_loc(box, kind, color, distractor, confidence, frame) -> np.ndarray:
    x0, y0, x1, y1 = box
    v = np.zeros(R_LOC_DIM)
    v[0] = (x0 + x1) / 2.0 / frame
    v[1] = (y0 + y1) / 2.0 / frame
    v[2] = (x1 - x0) / frame
    v[3] = (y1 - y0) / frame
    v[4 + {"bottle": 0, "bowl": 1, "distractor": 2}[kind]] = 1.0
    if color is not None and color in BOWL_PALETTE:
        v[7 + BOWL_PALETTE.index(color)] = 1.0
    if distractor is not None:
        v[7 + len(BOWL_PALETTE) + _DISTRACTOR_ORDER.index(distractor)] = 1.0
    v[-1] = confidence
    return v


def propose_regions(scene: Scene, noise: DetectorNoise | None = None,
                    seed: int = 0) -> list:
    """Candidate regions for the visible objects, with detector-style noise."""
    noise = noise or DetectorNoise.none()
    rng = rng_for(seed, "detector")
    frame = float(scene.frame_px)
    out = []
    for obj in scene.objects:
        if noise.p_miss > 0 and rng.uniform() < noise.p_miss:
            continue
        box = np.array(obj.box, dtype=np.float64)
        if noise.jitter_px > 0:
            box = box + rng.normal(0.0, noise.jitter_px, size=4)
            box[0], box[2] = min(box[0], box[2] - 1.0), max(box[2], box[0] + 1.0)
            box[1], box[3] = min(box[1], box[3] - 1.0), max(box[3], box[1] + 1.0)
            box = np.clip(box, 0.0, frame)
        conf = float(rng.uniform(0.82, 0.99))
        out.append(
            CandidateRegion(
                obj.id, tuple(box),
                _r_loc(tuple(box), obj.kind, obj.color, obj.distractor, conf, frame),
                conf, obj.kind,
            )
        )
    n_fp = rng.poisson(noise.fp_rate) if noise.fp_rate > 0 else 0
    for _ in range(n_fp):
        w, h = rng.uniform(12.0, 40.0, size=2)
        x0 = rng.uniform(0.0, frame - w)
        y0 = rng.uniform(0.0, frame - h)
        kind = ["bottle", "bowl", "distractor"][rng.choice(3, p=[0.4, 0.3, 0.3])]
        color = BOWL_PALETTE[rng.choice(len(BOWL_PALETTE))] if kind == "bowl" else None
        dk = _DISTRACTOR_ORDER[rng.choice(len(_DISTRACTOR_ORDER))] if kind == "distractor" else None
        conf = float(rng.uniform(0.3, 0.7))
        box = (x0, y0, x0 + w, y0 + h)
        out.append(CandidateRegion(None, box, _r_loc(box, kind, color, dk, conf, frame), conf, kind))
    rng.shuffle(out)
    return out


# --- archetype generation ---

_ARCHETYPES = {
    1: dict(bottles=2, bowls=2, distractors=1, duplicate=False),
    2: dict(bottles=3, bowls=3, distractors=1, duplicate=False),
    3: dict(bottles=3, bowls=2, distractors=1, duplicate=True),
    4: dict(bottles=4, bowls=3, distractors=2, duplicate=True),
    5: dict(bottles=2, bowls=2, distractors=1, duplicate=False),
    6: dict(bottles=3, bowls=2, distractors=2, duplicate=False),
}

_MARGIN = 16.0
_MAX_TRIES = 1000


def _boxes_collide(a, b, pad=MIN_SEPARATION_PX) -> bool:
    return not (
        a[2] + pad <= b[0] or b[2] + pad <= a[0] or a[3] + pad <= b[1] or b[3] + pad <= a[1]
    )


def _place_box(rng, size, placed, tries=_MAX_TRIES, region=None):
    w, h = size
    x_lo, x_hi, y_lo, y_hi = region or (_MARGIN, FRAME_PX - _MARGIN, _MARGIN, FRAME_PX - _MARGIN)
    for _ in range(tries):
        x0 = rng.uniform(x_lo, max(x_lo + 1e-6, x_hi - w))
        y0 = rng.uniform(y_lo, max(y_lo + 1e-6, y_hi - h))
        box = (x0, y0, x0 + w, y0 + h)
        if all(not _boxes_collide(box, p) for p in placed):
            return box
    raise SceneGenerationError("could not place an object after rejection sampling")


def _place_related_bottle(rng, rel: AnchorRelation, anchor_box, placed):
    ax0, ay0, ax1, ay1 = anchor_box
    acx, acy = (ax0 + ax1) / 2.0, (ay0 + ay1) / 2.0
    w, h = BOTTLE_SIZE
    for _ in range(_MAX_TRIES):
        if rel is AnchorRelation.on:
            cx = rng.uniform(ax0 + 2, ax1 - 2)
            y1 = ay0 - rng.uniform(0.0, ON_GAP_PX * 0.8)
            box = (cx - w / 2, y1 - h, cx + w / 2, y1)
        elif rel is AnchorRelation.next_to:
            ang = rng.uniform(0.0, 2 * np.pi)
            r = rng.uniform(30.0, NEXT_TO_MAX_PX - 5.0)
            cx, cy = acx + r * np.cos(ang), acy + r * np.sin(ang)
            box = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        else:
            off = rng.uniform(SIDE_GAP_PX + 5.0, SIDE_GAP_PX + 45.0)
            lat = rng.uniform(-ROW_TOL_PX * 0.6, ROW_TOL_PX * 0.6)
            if rel is AnchorRelation.left_of:
                cx, cy = acx - off, acy + lat
            elif rel is AnchorRelation.right_of:
                cx, cy = acx + off, acy + lat
            elif rel is AnchorRelation.behind:
                cx, cy = acx + lat, acy - off
            else:  # in_front_of
                cx, cy = acx + lat, acy + off
            box = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        x0, y0, x1, y1 = box
        if not (_MARGIN <= x0 < x1 <= FRAME_PX - _MARGIN and _MARGIN <= y0 < y1 <= FRAME_PX - _MARGIN):
            continue
        if any(_boxes_collide(box, p) for p in placed):
            continue
        return box
    raise SceneGenerationError(f"could not construct a bottle {rel.value} the anchor")


def _assign_contents(rng, n_bottles: int, duplicate: bool):
    classes = list(ObjectClass)
    if duplicate:
        dup = classes[rng.choice(len(classes))]
        n_dup = 2 if n_bottles < 4 else int(rng.choice([2, 3]))
        others = [c for c in classes if c != dup]
        rng.shuffle(others)
        contents = [dup] * n_dup + others[: n_bottles - n_dup]
    else:
        rng.shuffle(classes)
        contents = classes[:n_bottles]
    rng.shuffle(contents)
    return contents


def make_scene(archetype: int, seed: int) -> Scene:
    """Generate one collision-free scene of the given archetype.

    Every archetype carries bottles, distinctly-colored and spatially
    resolvable bowls, and one distractor with a uniquely related bottle, so
    all three instruction families apply; archetypes differ in clutter and in
    whether a content class is duplicated across bottles (3 and 4).
    """
    if archetype not in _ARCHETYPES:
        raise ConfigurationError(f"archetype must be 1..6, got {archetype}")
    spec = _ARCHETYPES[archetype]
    rng = rng_for(seed, "scene", archetype)

    for attempt in range(40):
        try:
            return _try_make_scene(archetype, seed, spec, rng)
        except SceneGenerationError:
            continue
    raise SceneGenerationError(f"archetype {archetype}: placement failed (seed {seed})")


def _try_make_scene(archetype, seed, spec, rng) -> Scene:
    objects = []
    placed = []
    next_id = 0

    # Bowls at well-separated x bands; pairwise y gaps keep front/back crisp.
    n_bowls = spec["bowls"]
    bands = {
        2: [(30.0, 95.0), (160.0, 225.0)],
        3: [(25.0, 80.0), (105.0, 150.0), (175.0, 230.0)],
    }[n_bowls]
    for _ in range(_MAX_TRIES):
        ys = rng.uniform(48.0, 208.0 - BOWL_SIZE[1], size=n_bowls)
        if all(abs(a - b) >= 24.0 for i, a in enumerate(ys) for b in ys[i + 1 :]):
            break
    else:
        raise SceneGenerationError("bowl rows would not separate")
    colors = list(BOWL_PALETTE)
    rng.shuffle(colors)
    for i, (band, y0) in enumerate(zip(bands, ys)):
        x0 = rng.uniform(band[0], band[1] - BOWL_SIZE[0] + 40.0 * 0)
        x0 = min(max(x0, band[0]), band[1])
        box = (x0, y0, x0 + BOWL_SIZE[0], y0 + BOWL_SIZE[1])
        if any(_boxes_collide(box, p) for p in placed):
            raise SceneGenerationError("bowl collision")
        cx, cy = (box[0] + box[2]) / 2, (box[1] + box[3]) / 2
        objects.append(
            SceneObject(next_id, "bowl", box, color=colors[i], table_mm=default_table_mm(cx, cy))
        )
        placed.append(box)
        next_id += 1

    kinds = list(DistractorKind)
    rng.shuffle(kinds)
    anchor_obj = None
    for i in range(spec["distractors"]):
        kind = kinds[i]
        box = _place_box(rng, DISTRACTOR_SIZES[kind], placed)
        cx, cy = (box[0] + box[2]) / 2, (box[1] + box[3]) / 2
        obj = SceneObject(next_id, "distractor", box, distractor=kind,
                          table_mm=default_table_mm(cx, cy))
        objects.append(obj)
        placed.append(box)
        next_id += 1
        if anchor_obj is None:
            anchor_obj = obj

    relation = list(AnchorRelation)[rng.choice(len(AnchorRelation))]
    rel_box = _place_related_bottle(rng, relation, anchor_obj.box, placed)
    contents = _assign_contents(rng, spec["bottles"], spec["duplicate"])
    bottle_boxes = [rel_box]
    placed.append(rel_box)
    for _ in range(spec["bottles"] - 1):
        box = _place_box(rng, BOTTLE_SIZE, placed)
        bottle_boxes.append(box)
        placed.append(box)
    anchored_bottle_id = next_id
    for box, content in zip(bottle_boxes, contents):
        cx, cy = (box[0] + box[2]) / 2, (box[1] + box[3]) / 2
        objects.append(
            SceneObject(next_id, "bottle", box, contents=content,
                        table_mm=default_table_mm(cx, cy))
        )
        next_id += 1

    scene = Scene(objects, FRAME_PX, archetype, seed,
                  anchored=(relation.name, anchor_obj.id, anchored_bottle_id))
    if resolve_anchor(scene, relation, anchor_obj.distractor) != anchored_bottle_id:
        raise SceneGenerationError("anchored bottle not unique")
    for bowl in scene.bowls():
        if not destination_choices(scene, bowl.id):
            raise SceneGenerationError("a bowl has no unique descriptor")
    return scene


# --- task generation (scene + instruction + ground truth) ---


@dataclass(frozen=True)
class SceneTask:
    scene: Scene
    intent: Intent
    text: str
    referent_ids: frozenset         # bottles the target grounding may select
    destination_id: int | None
    matching_ids: frozenset         # bottles whose contents equal the target
    expected_answer: bool | None    # exploratory only


def ground_truth_for(scene: Scene, intent: Intent) -> SceneTask:
    """Resolve an intent against a scene's geometry and hidden contents."""
    bottles = scene.bottles()
    matching = frozenset(b.id for b in bottles if b.contents == intent.target)
    if intent.kind is TaskKind.EXPLORATORY:
        ref = resolve_anchor(scene, intent.anchor.relation, intent.anchor.kind)
        if ref is None:
            raise ConfigurationError("anchor does not denote a unique bottle")
        answer = scene.get(ref).contents == intent.target
        return SceneTask(scene, intent, generate_from_intent(intent),
                         frozenset({ref}), None, matching, answer)
    dest = resolve_destination(scene, intent.destination)
    if dest is None:
        raise ConfigurationError("destination descriptor is not resolvable")
    return SceneTask(scene, intent, generate_from_intent(intent),
                     frozenset(b.id for b in bottles), dest, matching, None)


def task_from_scene(scene: Scene, family: TaskKind, seed: int) -> SceneTask:
    """Draw an instruction of the given family that the scene can answer."""
    rng = rng_for(seed, "task", scene.archetype or 0, family.value)
    bottles = scene.bottles()

    if family is TaskKind.EXPLORATORY:
        rel_name, anchor_id, bottle_id = scene.anchored
        relation = AnchorRelation[rel_name]
        anchor_kind = scene.get(anchor_id).distractor
        true_contents = scene.get(bottle_id).contents
        if rng.uniform() < 0.5:
            target = true_contents
        else:
            others = [c for c in ObjectClass if c != true_contents]
            target = others[rng.choice(len(others))]
        intent = Intent(family, target, anchor=Anchor(relation, anchor_kind))
        return ground_truth_for(scene, intent)

    if family is TaskKind.CLASSIFICATION and scene.archetype in (3, 4):
        counts = {}
        for b in bottles:
            counts[b.contents] = counts.get(b.contents, 0) + 1
        target = max(counts, key=lambda c: (counts[c], -int(c)))
    else:
        target = bottles[rng.choice(len(bottles))].contents
    bowl = scene.bowls()[rng.choice(len(scene.bowls()))]
    choices = destination_choices(scene, bowl.id)
    dest = choices[rng.choice(len(choices))]
    intent = Intent(family, target, destination=dest)
    return ground_truth_for(scene, intent)


def make_task(archetype: int, family: TaskKind, seed: int) -> SceneTask:
    """A scene plus a matching instruction with fully resolved ground truth."""
    return task_from_scene(make_scene(archetype, seed), family, seed)


def scene_task_set(archetype: int, seed: int,
                   families=(TaskKind.EXISTENCE, TaskKind.CLASSIFICATION,
                             TaskKind.EXPLORATORY)) -> list:
    """One scene asked every applicable instruction family."""
    scene = make_scene(archetype, seed)
    return [task_from_scene(scene, family, seed) for family in families]


def applicable_families(archetype: int) -> tuple:
    return (TaskKind.EXISTENCE, TaskKind.CLASSIFICATION, TaskKind.EXPLORATORY)


def write_suite(path, tasks, scene_dir=None) -> None:
    """Suite manifest: one (scene, instruction, expected answer) per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, task in enumerate(tasks):
            row = {
                "instruction": task.text,
                "intent": task.intent.to_dict(),
                "referent_ids": sorted(task.referent_ids),
                "destination_id": task.destination_id,
                "matching_ids": sorted(task.matching_ids),
                "expected_answer": task.expected_answer,
            }
            if scene_dir is not None:
                scene_path = f"{scene_dir}/scene_{i:05d}.json"
                task.scene.save(scene_path)
                row["scene_file"] = scene_path
            else:
                row["scene"] = task.scene.to_dict()
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_suite(path) -> list:
    tasks = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            scene = (
                Scene.load(row["scene_file"]) if "scene_file" in row else Scene.from_dict(row["scene"])
            )
            tasks.append(
                SceneTask(
                    scene,
                    Intent.from_dict(row["intent"]),
                    row["instruction"],
                    frozenset(row["referent_ids"]),
                    row["destination_id"],
                    frozenset(row["matching_ids"]),
                    row["expected_answer"],
                )
            )
    return tasks
