"""The three-template manipulation-instruction grammar.

Templates (closed grammar; slots drawn from fixed word sets):

    Existence       Find the bottle with the <obj>, put it in the <dest> bowl.
    Classification  Find all the <obj-plural> and put them in the <dest> bowl.
    Exploratory     Check the bottle <relation> the <anchor> for <obj>.

<dest> is either a spatial relation (left/right/middle/front/back) or a bowl
color, never both.  Parsing is deterministic template matching; the learned
language treatment happens downstream in the encoder.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from itertools import product

from .audio.synth import ObjectClass
from .errors import ConfigurationError, ParseError, UnknownObjectError


class TaskKind(enum.Enum):
    EXISTENCE = "existence"
    CLASSIFICATION = "classification"
    EXPLORATORY = "exploratory"


class SpatialRelation(enum.Enum):
    left = "left"
    right = "right"
    middle = "middle"
    front = "front"
    back = "back"


class AnchorRelation(enum.Enum):
    on = "on"
    next_to = "next to"
    left_of = "left of"
    right_of = "right of"
    behind = "behind"
    in_front_of = "in front of"


class BowlColor(enum.Enum):
    red = "red"
    green = "green"
    blue = "blue"
    yellow = "yellow"
    white = "white"
    black = "black"
    orange = "orange"
    purple = "purple"
    pink = "pink"
    brown = "brown"
    gray = "gray"
    cyan = "cyan"
    magenta = "magenta"
    gold = "gold"
    silver = "silver"
    beige = "beige"
    maroon = "maroon"
    navy = "navy"
    teal = "teal"


class DistractorKind(enum.Enum):
    banana = "banana"
    apple = "apple"
    cup = "cup"
    plate = "plate"
    box = "box"
    book = "book"


@dataclass(frozen=True)
class Destination:
    relation: SpatialRelation | None = None
    color: BowlColor | None = None

    def __post_init__(self):
        if (self.relation is None) == (self.color is None):
            raise ConfigurationError("destination takes a relation or a color, exactly one")

    @property
    def word(self) -> str:
        return self.relation.value if self.relation else self.color.value


@dataclass(frozen=True)
class Anchor:
    relation: AnchorRelation
    kind: DistractorKind


@dataclass(frozen=True)
class Intent:
    kind: TaskKind
    target: ObjectClass
    destination: Destination | None = None
    anchor: Anchor | None = None

    def __post_init__(self):
        if self.kind is TaskKind.EXPLORATORY:
            if self.anchor is None or self.destination is not None:
                raise ConfigurationError("exploratory intents carry an anchor and no destination")
        else:
            if self.destination is None or self.anchor is not None:
                raise ConfigurationError(f"{self.kind.value} intents carry a destination and no anchor")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "target": self.target.name,
            "destination": (
                None
                if self.destination is None
                else {
                    "relation": self.destination.relation.name if self.destination.relation else None,
                    "color": self.destination.color.name if self.destination.color else None,
                }
            ),
            "anchor": (
                None
                if self.anchor is None
                else {"relation": self.anchor.relation.name, "kind": self.anchor.kind.name}
            ),
        }

    @staticmethod
    def from_dict(d: dict) -> "Intent":
        dest = None
        if d.get("destination"):
            dd = d["destination"]
            dest = Destination(
                relation=SpatialRelation[dd["relation"]] if dd.get("relation") else None,
                color=BowlColor[dd["color"]] if dd.get("color") else None,
            )
        anc = None
        if d.get("anchor"):
            da = d["anchor"]
            anc = Anchor(AnchorRelation[da["relation"]], DistractorKind[da["kind"]])
        return Intent(TaskKind(d["kind"]), ObjectClass[d["target"]], dest, anc)


# --- surface forms ---

OBJECT_WORDS = {
    ObjectClass.capsule: "capsule",
    ObjectClass.alcohol: "alcohol",
    ObjectClass.red_dates: "red dates",
    ObjectClass.tablet: "tablet",
    ObjectClass.hawthorn: "hawthorn",
    ObjectClass.pill: "pill",
    ObjectClass.seman_cassiae: "seman cassiae",
    ObjectClass.oyster: "oyster",
    ObjectClass.wax_pill: "wax pill",
    ObjectClass.cicada_slough: "cicada slough",
    ObjectClass.particle: "particle",
    ObjectClass.empty: "empty",
}

OBJECT_PLURALS = {
    ObjectClass.capsule: "capsules",
    ObjectClass.alcohol: "alcohol",
    ObjectClass.red_dates: "red dates",
    ObjectClass.tablet: "tablets",
    ObjectClass.hawthorn: "hawthorns",
    ObjectClass.pill: "pills",
    ObjectClass.seman_cassiae: "seman cassiae",
    ObjectClass.oyster: "oysters",
    ObjectClass.wax_pill: "wax pills",
    ObjectClass.cicada_slough: "cicada sloughs",
    ObjectClass.particle: "particles",
    ObjectClass.empty: "empties",
}

_PUNCT = ".,!?;:"


def normalize_tokens(text: str) -> list:
    table = str.maketrans({ch: " " for ch in _PUNCT})
    return text.lower().translate(table).split()


def _phrase_map(pairs) -> list:
    """[(token tuple, value)] sorted longest phrase first."""
    out = [(tuple(phrase.split()), value) for phrase, value in pairs]
    out.sort(key=lambda kv: -len(kv[0]))
    return out


_SINGULAR = _phrase_map((w, c) for c, w in OBJECT_WORDS.items())
_PLURAL = _phrase_map((w, c) for c, w in OBJECT_PLURALS.items())
_DEST = _phrase_map(
    [(r.value, Destination(relation=r)) for r in SpatialRelation]
    + [(c.value, Destination(color=c)) for c in BowlColor]
)
_ANCHOR_REL = _phrase_map((r.value, r) for r in AnchorRelation)
_ANCHOR_KIND = _phrase_map((k.value, k) for k in DistractorKind)

# Slot spec: (name, phrase table, raises UnknownObjectError when unknown)
_TEMPLATES = {
    TaskKind.EXISTENCE: (
        "find the bottle with the".split(),
        [("obj", _SINGULAR, True)],
        "put it in the".split(),
        [("dest", _DEST, False)],
        ["bowl"],
    ),
    TaskKind.CLASSIFICATION: (
        "find all the".split(),
        [("obj", _PLURAL, True)],
        "and put them in the".split(),
        [("dest", _DEST, False)],
        ["bowl"],
    ),
    TaskKind.EXPLORATORY: (
        "check the bottle".split(),
        [("rel", _ANCHOR_REL, False)],
        ["the"],
        [("anchor", _ANCHOR_KIND, True)],
        ["for"],
        [("obj", _SINGULAR, True)],
    ),
}


def _match_template(tokens, template):
    """Walk one template; returns (slots dict, None) or (None, failure info).

    Failure info is (tokens consumed, unknown-object phrase or None).
    """
    pos = 0
    slots = {}
    for part in template:
        if part and isinstance(part[0], str):
            for lit in part:
                if pos < len(tokens) and tokens[pos] == lit:
                    pos += 1
                else:
                    return None, (pos, None)
        else:
            name, table, is_object = part[0]
            matched = False
            for phrase, value in table:
                if tuple(tokens[pos : pos + len(phrase)]) == phrase:
                    slots[name] = value
                    pos += len(phrase)
                    matched = True
                    break
            if not matched:
                # Unknown word(s) in the slot: see whether skipping a short
                # phrase lets every later literal line up, which pins the
                # failure on the slot content rather than the template.
                if is_object:
                    for k in (1, 2, 3):
                        sub, fail = _match_template(tokens[pos + k :], _tail_after(template, part))
                        if sub is not None:
                            return None, (pos, " ".join(tokens[pos : pos + k]))
                return None, (pos, None)
    if pos != len(tokens):
        return None, (pos, None)
    return slots, None


def _tail_after(template, part):
    idx = template.index(part)
    return template[idx + 1 :]


def parse(text: str) -> Intent:
    """Map one instruction line to its intent frame.

    Case- and whitespace-insensitive; raises ParseError (with the position of
    the longest template-prefix match) when no template fits, and
    UnknownObjectError when the sentence shape fits but an object slot holds
    an unknown word.
    """
    tokens = normalize_tokens(text)
    best_pos = 0
    best_token = tokens[0] if tokens else None
    unknown = None
    for kind, template in _TEMPLATES.items():
        slots, failure = _match_template(tokens, template)
        if slots is not None:
            if kind is TaskKind.EXPLORATORY:
                return Intent(kind, slots["obj"], anchor=Anchor(slots["rel"], slots["anchor"]))
            return Intent(kind, slots["obj"], destination=slots["dest"])
        pos, unk = failure
        if pos >= best_pos:
            best_pos = pos
            best_token = tokens[pos] if pos < len(tokens) else None
            if unk is not None:
                unknown = unk
    if unknown is not None:
        raise UnknownObjectError(f"unknown object word '{unknown}'", best_pos, unknown)
    raise ParseError(
        f"no instruction template matches at token {best_pos} ({best_token!r})",
        best_pos,
        best_token,
    )


def generate(kind: TaskKind, target: ObjectClass,
             destination: Destination | None = None,
             anchor: Anchor | None = None, seed: int = 0) -> str:
    """Render an intent back to its canonical sentence (parse round-trips)."""
    intent = Intent(kind, target, destination, anchor)  # validates slots
    if kind is TaskKind.EXISTENCE:
        return (
            f"Find the bottle with the {OBJECT_WORDS[target]}, "
            f"put it in the {destination.word} bowl."
        )
    if kind is TaskKind.CLASSIFICATION:
        return (
            f"Find all the {OBJECT_PLURALS[target]} "
            f"and put them in the {destination.word} bowl."
        )
    return f"Check the bottle {anchor.relation.value} the {anchor.kind.value} for {OBJECT_WORDS[target]}."


def generate_from_intent(intent: Intent) -> str:
    return generate(intent.kind, intent.target, intent.destination, intent.anchor)


_ALL_DESTINATIONS = tuple(
    [Destination(relation=r) for r in SpatialRelation]
    + [Destination(color=c) for c in BowlColor]
)


def corpus() -> list:
    """The full enumerated instruction set: 288 + 288 + 36 (text, Intent) pairs.

    Existence and classification run the cartesian product of the 12 object
    classes with the 24 destinations (5 relations + 19 colors).  Exploratory
    runs the 6 anchor relations x 6 anchor kinds with the sought class cycling
    through the 12 classes, so each class is asked about three times.
    """
    pairs = []
    for kind in (TaskKind.EXISTENCE, TaskKind.CLASSIFICATION):
        for cls in ObjectClass:
            for dest in _ALL_DESTINATIONS:
                intent = Intent(kind, cls, destination=dest)
                pairs.append((generate_from_intent(intent), intent))
    classes = list(ObjectClass)
    for i, (rel, anchor_kind) in enumerate(product(AnchorRelation, DistractorKind)):
        intent = Intent(
            TaskKind.EXPLORATORY, classes[i % len(classes)],
            anchor=Anchor(rel, anchor_kind),
        )
        pairs.append((generate_from_intent(intent), intent))
    return pairs


class Vocabulary:
    """Dense word index with 0 reserved for unknown words."""

    UNKNOWN = "<unk>"

    def __init__(self, words):
        self.words = [self.UNKNOWN] + list(words)
        if len(set(self.words)) != len(self.words):
            raise ConfigurationError("duplicate vocabulary words")
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    @classmethod
    def build_default(cls) -> "Vocabulary":
        seen = set()
        for text, _ in corpus():
            seen.update(normalize_tokens(text))
        return cls(sorted(seen))

    def tokenize(self, text: str) -> list:
        return [self.index.get(w, 0) for w in normalize_tokens(text)]

    def to_json(self) -> str:
        return json.dumps({"words": self.words[1:]})

    @classmethod
    def from_json(cls, blob: str) -> "Vocabulary":
        return cls(json.loads(blob)["words"])


def tokenize(text: str, vocab: Vocabulary) -> list:
    return vocab.tokenize(text)


def write_corpus(path, pairs=None) -> None:
    pairs = pairs if pairs is not None else corpus()
    with open(path, "w", encoding="utf-8") as fh:
        for text, _ in pairs:
            fh.write(text + "\n")


def write_intents(path, pairs=None) -> None:
    pairs = pairs if pairs is not None else corpus()
    with open(path, "w", encoding="utf-8") as fh:
        for _, intent in pairs:
            fh.write(json.dumps(intent.to_dict(), sort_keys=True) + "\n")
