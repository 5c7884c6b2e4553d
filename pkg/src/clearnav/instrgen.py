"""Synthetic instructions in three constructed languages.

Each language owns a disjoint block of 200 token ids; only ``[PAD]``, ``[CLS]``
and ``[SEP]`` are shared.  A path's semantic frame (a list of action/landmark
steps) is verbalized with a language-specific word order, and each language
drops landmark mentions at its own rate, so the three versions of a path carry
complementary information.

Word choice depends only on (corpus seed, language, annotator, frame), so two
paths with identical frames receive token-identical instructions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .worldgen import ACTIONS, NUM_CLASSES, FrameStep, Path, stable_hash

PAD, CLS, SEP = 0, 1, 2
NUM_SPECIAL = 3
VOCAB_PER_LANGUAGE = 200
MAX_LENGTH = 160
LANGUAGES = ("L1", "L2", "L3")
ANNOTATORS = 3

ACTION_SYNONYMS = 3
OBJECT_SYNONYMS = 2
NUM_CONNECTORS = 4
NUM_SEPARATORS = 4
NUM_FILLERS = 20


class VocabError(KeyError):
    pass


@dataclass(frozen=True)
class Language:
    """Token block layout plus grammar knobs for one constructed language."""

    index: int
    code: str
    order: str              # "VO": action then landmark phrase; "OV": landmark phrase then action
    mention_rate: float     # probability a visible landmark is verbalized
    filler_rate: float

    @property
    def base(self) -> int:
        return NUM_SPECIAL + self.index * VOCAB_PER_LANGUAGE

    # slot offsets inside the language block
    def action_token(self, action: str, syn: int) -> int:
        return self.base + ACTIONS.index(action) * ACTION_SYNONYMS + syn

    def object_token(self, cls: int, syn: int) -> int:
        return self.base + len(ACTIONS) * ACTION_SYNONYMS + cls * OBJECT_SYNONYMS + syn

    def connector_token(self, k: int) -> int:
        return self.base + len(ACTIONS) * ACTION_SYNONYMS + NUM_CLASSES * OBJECT_SYNONYMS + k

    def separator_token(self, k: int) -> int:
        return self.connector_token(NUM_CONNECTORS) + k

    def filler_token(self, k: int) -> int:
        return self.separator_token(NUM_SEPARATORS) + k


LANGUAGE_SPECS = {
    "L1": Language(0, "L1", "VO", 0.9, 0.15),
    "L2": Language(1, "L2", "OV", 0.75, 0.25),
    "L3": Language(2, "L3", "OV", 0.6, 0.35),
}
VOCAB_SIZE = NUM_SPECIAL + len(LANGUAGES) * VOCAB_PER_LANGUAGE


def _build_vocab() -> dict[int, str]:
    from .worldgen import OBJECT_CLASSES

    vocab = {PAD: "[PAD]", CLS: "[CLS]", SEP: "[SEP]"}
    for lang in LANGUAGE_SPECS.values():
        for tok in range(lang.base, lang.base + VOCAB_PER_LANGUAGE):
            vocab[tok] = f"{lang.code}:unused{tok - lang.base}"
        for a in ACTIONS:
            for s in range(ACTION_SYNONYMS):
                vocab[lang.action_token(a, s)] = f"{lang.code}:{a}#{s}"
        for c, name in enumerate(OBJECT_CLASSES):
            for s in range(OBJECT_SYNONYMS):
                vocab[lang.object_token(c, s)] = f"{lang.code}:{name.replace(' ', '_')}#{s}"
        for k in range(NUM_CONNECTORS):
            vocab[lang.connector_token(k)] = f"{lang.code}:toward#{k}"
        for k in range(NUM_SEPARATORS):
            vocab[lang.separator_token(k)] = f"{lang.code}:then#{k}"
        for k in range(NUM_FILLERS):
            vocab[lang.filler_token(k)] = f"{lang.code}:filler#{k}"
    return vocab


VOCAB = _build_vocab()
_SURFACE_TO_ID = {v: k for k, v in VOCAB.items()}


def _decode_token(tok: int) -> tuple[str, str, int | str | None]:
    """(language code, kind, value) for a token id."""
    if tok >= VOCAB_SIZE or tok < 0:
        raise VocabError(f"unknown token id {tok}")
    if tok < NUM_SPECIAL:
        return ("", "special", tok)
    lang = LANGUAGE_SPECS[LANGUAGES[(tok - NUM_SPECIAL) // VOCAB_PER_LANGUAGE]]
    off = tok - lang.base
    n_act = len(ACTIONS) * ACTION_SYNONYMS
    n_obj = NUM_CLASSES * OBJECT_SYNONYMS
    if off < n_act:
        return (lang.code, "action", ACTIONS[off // ACTION_SYNONYMS])
    off -= n_act
    if off < n_obj:
        return (lang.code, "object", off // OBJECT_SYNONYMS)
    off -= n_obj
    if off < NUM_CONNECTORS:
        return (lang.code, "connector", None)
    off -= NUM_CONNECTORS
    if off < NUM_SEPARATORS:
        return (lang.code, "separator", None)
    off -= NUM_SEPARATORS
    if off < NUM_FILLERS:
        return (lang.code, "filler", None)
    return (lang.code, "unused", None)


@dataclass(frozen=True)
class Instruction:
    instr_id: str
    path_id: str
    language: str
    annotator: int
    tokens: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.tokens)


def frame_key(frame: tuple[FrameStep, ...]) -> int:
    return stable_hash(*[(s.action, s.landmark) for s in frame])


def verbalize(frame: tuple[FrameStep, ...], language: str, annotator: int, seed: int) -> tuple[int, ...]:
    """Token ids for ``frame``; truncated from the end to MAX_LENGTH."""
    lang = LANGUAGE_SPECS[language]
    rng = np.random.default_rng([int(seed), lang.index, int(annotator), frame_key(frame)])
    toks = [CLS]
    for step in frame:
        act = [lang.action_token(step.action, int(rng.integers(ACTION_SYNONYMS)))]
        mention = step.landmark is not None and rng.random() < lang.mention_rate
        obj: list[int] = []
        if mention:
            conn = lang.connector_token(int(rng.integers(NUM_CONNECTORS)))
            word = lang.object_token(step.landmark, int(rng.integers(OBJECT_SYNONYMS)))
            obj = [conn, word] if lang.order == "VO" else [word, conn]
        chunk = act + obj if lang.order == "VO" else obj + act
        if rng.random() < lang.filler_rate:
            chunk.insert(int(rng.integers(len(chunk) + 1)), lang.filler_token(int(rng.integers(NUM_FILLERS))))
        toks.extend(chunk)
        toks.append(lang.separator_token(int(rng.integers(NUM_SEPARATORS))))
    toks.append(SEP)
    return tuple(toks[:MAX_LENGTH])


def generate_instructions(path: Path, seed: int) -> list[Instruction]:
    """Nine instructions: three annotators in each of three languages."""
    if not path.frame:
        raise ValueError(f"path {path.path_id} has no semantic frame")
    out = []
    for language in LANGUAGES:
        for annotator in range(ANNOTATORS):
            out.append(Instruction(
                f"{path.path_id}_{language}_{annotator}",
                path.path_id,
                language,
                annotator,
                verbalize(path.frame, language, annotator, seed),
            ))
    return out


def tokenize(words: list[str]) -> tuple[int, ...]:
    try:
        return tuple(_SURFACE_TO_ID[w] for w in words)
    except KeyError as exc:
        raise VocabError(f"unknown word {exc.args[0]!r}") from exc


def detokenize(tokens) -> list[str]:
    out = []
    for t in tokens:
        if int(t) not in VOCAB:
            raise VocabError(f"unknown token id {t}")
        out.append(VOCAB[int(t)])
    return out


def parse_frame(tokens) -> tuple[FrameStep, ...]:
    """Recover the verbalized frame; omitted landmarks come back as ``None``.

    Only chunks closed by a separator are returned, so a truncated
    instruction yields a prefix of the full frame.
    """
    steps = []
    action: str | None = None
    landmark: int | None = None
    for t in tokens:
        _, kind, value = _decode_token(int(t))
        if kind == "action":
            action = value
        elif kind == "object":
            landmark = value
        elif kind == "separator":
            if action is not None:
                steps.append(FrameStep(action, landmark))
            action, landmark = None, None
    return tuple(steps)


def landmark_mentions(tokens) -> set[int]:
    return {v for _, k, v in map(_decode_token, map(int, tokens)) if k == "object"}


def token_language(tok: int) -> str:
    return _decode_token(int(tok))[0]
