"""Template referring expressions and part-of-speech text ablations.

Tags come from template slots, so they are exact: ``ROOM`` for the room word,
``NOUN`` for the object and anchor categories, ``ADJ`` for attribute words,
``PREP`` for spatial/directional words and ``OTHER`` for everything else.
The room clause is everything before the first "and" (empty when the
template has none).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import lexicon

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
MAX_INSTRUCTION_LENGTH = 24

NOUN, ADJ, PREP, ROOM, OTHER = "NOUN", "ADJ", "PREP", "ROOM", "OTHER"

# ROOM/ADJS/NOUN/ANCHOR are slots; a bracketed group is the optional spatial relation
DEFAULT_TEMPLATES = (
    "go to the ROOM and find the ADJS NOUN",
    "go to the ROOM and pick up the ADJS NOUN",
    "go to the ROOM and find the ADJS NOUN [near the ANCHOR]",
    "walk into the ROOM and touch the ADJS NOUN",
    "enter the ROOM and bring me the ADJS NOUN [next to the ANCHOR]",
    "find the ADJS NOUN in the ROOM",
    "bring me the ADJS NOUN from the ROOM",
    "the ADJS NOUN [near the ANCHOR] in the ROOM",
)

PREPOSITIONS = {"to", "into", "near", "next", "in", "from"}


@dataclass(frozen=True)
class Instruction:
    tokens: tuple
    text: str
    pos_tags: tuple
    room_clause_end: int

    def __post_init__(self):
        if len(self.tokens) != len(self.pos_tags) or not self.tokens:
            raise ValueError("tokens and pos_tags must be non-empty and the same length")
        if not 0 <= self.room_clause_end <= len(self.tokens):
            raise ValueError("room_clause_end out of range")

    def __len__(self):
        return len(self.tokens)


class Vocabulary:
    """Token <-> id bijection with ``<pad>`` = 0 and ``<unk>`` = 1."""

    def __init__(self, tokens):
        self.id_to_token = list(tokens)
        if self.id_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with <pad>, <unk>")
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def to_dict(self):
        return {"schema_version": 1, "kind": "vocabulary", "token_to_id": dict(self.token_to_id)}

    @classmethod
    def from_dict(cls, d):
        from .world import check_schema

        check_schema(d, "vocabulary")
        items = sorted(d["token_to_id"].items(), key=lambda kv: kv[1])
        if [i for _, i in items] != list(range(len(items))):
            raise ValueError("vocabulary ids must be contiguous from 0")
        return cls([t for t, _ in items])


def build_vocabulary(corpus):
    tokens = [PAD_TOKEN, UNK_TOKEN]
    seen = set(tokens)
    for sentence in corpus:
        for tok in sentence.lower().split():
            if tok not in seen:
                seen.add(tok)
                tokens.append(tok)
    return Vocabulary(tokens)


def lexicon_corpus(templates=DEFAULT_TEMPLATES):
    words = []
    for t in templates:
        words.append(" ".join(w for w in t.replace("[", "").replace("]", "").split()
                              if w not in ("ROOM", "ADJS", "NOUN", "ANCHOR")))
    return words + [" ".join(lexicon.ROOM_TYPES), " ".join(lexicon.CATEGORIES), " ".join(lexicon.COLORS),
                    " ".join(lexicon.SIZES), " ".join(lexicon.MATERIALS)]


@lru_cache(maxsize=None)
def default_vocabulary():
    return build_vocabulary(lexicon_corpus())


def tokenize(text, vocab):
    words = text.lower().split()
    if not words:
        return [UNK]
    return [vocab.token_to_id.get(w, UNK) for w in words]


def detokenize(ids, vocab):
    return " ".join(vocab.id_to_token[i] for i in ids)


def _choose_adjectives(rng, env, obj):
    """Attributes separating ``obj`` from same-room, same-category objects, padded to 0-2 in total.

    Attributes are tried in a random order and kept when they rule out at least
    one remaining confuser, so size, colour or material can each be the cue.
    """
    confusers = [o for o in env.objects
                 if o.id != obj.id and o.room_id == obj.room_id and o.category_id == obj.category_id]
    order = [lexicon.ATTR_COLOR, lexicon.ATTR_SIZE, lexicon.ATTR_MATERIAL]
    chosen = []
    for attr in rng.permutation(order):
        if not confusers or len(chosen) == 2:
            break
        attr = int(attr)
        remaining = [o for o in confusers if o.attribute_ids[attr] == obj.attribute_ids[attr]]
        if len(remaining) < len(confusers):
            chosen.append(attr)
            confusers = remaining
    want = int(rng.integers(0, 3))
    rest = [a for a in order if a not in chosen]
    rng.shuffle(rest)
    while len(chosen) < want and rest:
        chosen.append(rest.pop())
    names = {lexicon.ATTR_COLOR: lexicon.COLORS, lexicon.ATTR_SIZE: lexicon.SIZES,
             lexicon.ATTR_MATERIAL: lexicon.MATERIALS}
    # conventional English order: size, colour, material
    return [names[a][obj.attribute_ids[a]] for a in (lexicon.ATTR_SIZE, lexicon.ATTR_COLOR, lexicon.ATTR_MATERIAL)
            if a in chosen]


def render_template(template, room, noun, adjectives, anchor):
    """Fill a template; returns ``(words, tags)``. The relation group is dropped when ``anchor`` is None."""
    words, tags = [], []
    in_group = False
    for raw in template.split():
        tok = raw
        if tok.startswith("["):
            in_group, tok = True, tok[1:]
        closes = tok.endswith("]")
        if closes:
            tok = tok[:-1]
        if in_group and anchor is None:
            pass
        elif tok == "ROOM":
            words.append(room)
            tags.append(ROOM)
        elif tok == "NOUN":
            words.append(noun)
            tags.append(NOUN)
        elif tok == "ANCHOR":
            words.append(anchor)
            tags.append(NOUN)
        elif tok == "ADJS":
            words += adjectives
            tags += [ADJ] * len(adjectives)
        else:
            words.append(tok)
            tags.append(PREP if tok in PREPOSITIONS else OTHER)
        if closes:
            in_group = False
    return words, tags


def generate_instruction(env, target_object_id, seed, template_set=None, vocab=None):
    templates = DEFAULT_TEMPLATES if template_set is None else tuple(template_set)
    if not templates:
        raise ValueError("template_set is empty")
    vocab = vocab or default_vocabulary()
    obj = env.object(target_object_id)
    rng = np.random.default_rng([seed, target_object_id])
    template = templates[rng.integers(len(templates))]
    adjectives = _choose_adjectives(rng, env, obj)
    anchor_cat = obj.attribute_ids[lexicon.ATTR_ANCHOR]
    anchor = lexicon.CATEGORIES[anchor_cat] if anchor_cat >= 0 else None
    words, tags = render_template(template, env.room_name(obj.room_id), lexicon.CATEGORIES[obj.category_id],
                                  adjectives, anchor)
    if len(words) > MAX_INSTRUCTION_LENGTH:
        raise ValueError(f"instruction longer than {MAX_INSTRUCTION_LENGTH} tokens: {' '.join(words)}")
    room_clause_end = words.index("and") if "and" in words else 0
    return Instruction(tuple(tokenize(" ".join(words), vocab)), " ".join(words), tuple(tags), room_clause_end)


class TextMode(enum.Enum):
    FULL_TEXT = "Full Text"
    NO_ADJECTIVES = "No Adjectives"
    ONLY_ADJ_NOUNS = "Only Adj & Nouns"
    ONLY_NOUNS = "Only Nouns"
    NO_ROOM = "No Room"
    ONLY_ROOM = "Only Room"
    NO_NOUNS = "No Nouns"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for mode in cls:
            if value in (mode.value, mode.name, mode.name.lower()):
                return mode
        raise ValueError(f"unknown text mode {value!r}")


_NOUNISH = {NOUN, ROOM}


def mask_instruction(instr, mode):
    """Drop tokens according to a text-ablation mode; never returns an empty instruction."""
    mode = TextMode.parse(mode)
    n = len(instr)
    if mode is TextMode.FULL_TEXT:
        return instr
    if mode is TextMode.NO_ADJECTIVES:
        keep = [i for i in range(n) if instr.pos_tags[i] != ADJ]
    elif mode is TextMode.ONLY_ADJ_NOUNS:
        keep = [i for i in range(n) if instr.pos_tags[i] in _NOUNISH or instr.pos_tags[i] == ADJ]
    elif mode is TextMode.ONLY_NOUNS:
        keep = [i for i in range(n) if instr.pos_tags[i] in _NOUNISH]
    elif mode is TextMode.NO_NOUNS:
        keep = [i for i in range(n) if instr.pos_tags[i] not in _NOUNISH]
    elif mode is TextMode.NO_ROOM:
        keep = list(range(instr.room_clause_end, n))
    else:  # ONLY_ROOM
        keep = list(range(instr.room_clause_end))
    if not keep:
        return Instruction((UNK,), UNK_TOKEN, (OTHER,), 0)
    words = instr.text.split()
    return Instruction(
        tokens=tuple(instr.tokens[i] for i in keep),
        text=" ".join(words[i] for i in keep),
        pos_tags=tuple(instr.pos_tags[i] for i in keep),
        room_clause_end=sum(1 for i in keep if i < instr.room_clause_end),
    )


def instruction_to_dict(instr):
    return {"tokens": list(instr.tokens), "text": instr.text, "pos_tags": list(instr.pos_tags),
            "room_clause_end": instr.room_clause_end}


def instruction_from_dict(d):
    return Instruction(tuple(d["tokens"]), d["text"], tuple(d["pos_tags"]), d["room_clause_end"])
