"""Instruction parsing, grounding queries and the pluggable grounding oracle.

The oracle stands in for a vision-language model: it receives a query built
from candidate summaries (never ground-truth object ids) and answers with a
candidate identifier. Ground truth reaches simulated oracles through a
separate channel so the remote wire protocol cannot leak it.
"""

from __future__ import annotations

import hashlib
import math
import random
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

from .errors import (InputError, InstructionParseError, OracleUnavailableError,
                     ScriptExhaustedError)

# ---------------------------------------------------------------------------
# Instruction parsing (rule-based stand-in for LLM extraction)

_VERB_PHRASES = ("navigate to", "go to", "head to", "walk to", "move to")
_TARGET_VERBS = {"find", "locate", "fetch", "take", "grab", "get", "bring",
                 "confirm"}
_PREPOSITIONS = ("next to", "in front of", "on top of", "close to", "on",
                 "near", "beside", "behind", "under", "above", "below", "by")
_DETERMINERS = {"the", "a", "an", "my", "your", "our", "his", "her", "their",
                "its", "this", "that", "these", "those", "some", "whether"}
_FILLERS = {"please", "go", "now", "then", "robot", "and", "is"}
_NP_TERMINATORS = {"you", "i", "we", "it", "which", "who", "where"}
_ADJECTIVES = {
    "black", "white", "red", "green", "blue", "yellow", "brown", "gray",
    "grey", "orange", "purple", "pink", "beige", "dark", "light",
    "big", "small", "large", "little", "tall", "short", "long", "round",
    "square", "wooden", "metal", "plastic", "leather", "folding", "foldable",
    "soft", "hard", "old", "new",
}


@dataclass(frozen=True)
class Instruction:
    """Parsed navigation instruction: target class, landmarks, attributes."""

    raw_text: str
    target_class: str
    landmark_classes: tuple[str, ...] = ()
    target_attributes: tuple[str, ...] = ()
    landmark_relations: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.target_class:
            raise InputError("instruction needs a nonempty target class")


def _tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9']+", text.lower())


def _parse_noun_phrase(tokens: list[str]) -> tuple[list[str], str]:
    """Split one noun phrase into (attributes, noun)."""
    words: list[str] = []
    for tok in tokens:
        if tok in _NP_TERMINATORS:
            break
        if tok in _DETERMINERS or tok in _FILLERS:
            continue
        words.append(tok)
    attrs = []
    while words and words[0] in _ADJECTIVES:
        attrs.append(words.pop(0))
    if not words and attrs:
        words.append(attrs.pop())  # lone adjective acts as the noun
    return attrs, " ".join(words)


def _split_prepositions(tokens: list[str]) -> list[tuple[Optional[str], list[str]]]:
    """Segments of (preposition, noun-phrase tokens); first segment has None."""
    segments: list[tuple[Optional[str], list[str]]] = [(None, [])]
    i = 0
    while i < len(tokens):
        matched = None
        for prep in _PREPOSITIONS:
            words = prep.split()
            if tokens[i:i + len(words)] == words:
                matched = prep
                i += len(words)
                break
        if matched is not None:
            segments.append((matched, []))
        else:
            segments[-1][1].append(tokens[i])
            i += 1
    return segments


def parse_instruction(raw_text: str) -> Instruction:
    """Rule-based extraction of target class, attributes and landmarks.

    The head noun after a find/take/navigate-to style verb is the target;
    nouns after spatial prepositions become landmarks; known adjectives in
    front of any noun collect into the attribute list. With no recognizable
    verb the whole text is treated as one noun phrase for the target.
    """
    if not raw_text or not raw_text.strip():
        raise InstructionParseError("empty instruction")
    tokens = _tokenize(raw_text)
    if not tokens:
        raise InstructionParseError(f"no words in instruction {raw_text!r}")

    rest = None
    for i in range(len(tokens)):
        for phrase in _VERB_PHRASES:
            words = phrase.split()
            if tokens[i:i + len(words)] == words:
                rest = tokens[i + len(words):]
                break
        if rest is not None:
            break
        if tokens[i] in _TARGET_VERBS:
            rest = tokens[i + 1:]
            break
    if rest is None:
        rest = tokens  # fallback: whole string is the target phrase

    segments = _split_prepositions(rest)
    attributes: list[str] = []
    target_class = ""
    landmarks: list[str] = []
    relations: list[tuple[str, str]] = []
    for prep, seg_tokens in segments:
        attrs, noun = _parse_noun_phrase(seg_tokens)
        attributes.extend(attrs)
        if prep is None:
            target_class = noun
        elif noun and noun not in landmarks:
            landmarks.append(noun)
            relations.append((noun, prep))
    if not target_class:
        raise InstructionParseError(
            f"could not extract a target from {raw_text!r}; "
            f"supply structured target/landmarks in the scenario")
    return Instruction(
        raw_text=raw_text,
        target_class=target_class,
        landmark_classes=tuple(landmarks),
        target_attributes=tuple(attributes),
        landmark_relations=tuple(relations),
    )


# ---------------------------------------------------------------------------
# Queries, results, truth channel

class Phase(str, Enum):
    INITIAL = "Initial"
    ACTIVE = "Active"
    RESERVED = "Reserved"


@dataclass(frozen=True)
class CandidateSummary:
    """What the oracle sees about one annotated detection."""

    identifier: int
    class_name: str
    attributes: tuple[str, ...]
    visible_fraction: float
    distance_m: float
    co_visible_landmarks: tuple[str, ...] = ()


@dataclass(frozen=True)
class KeyframeSummary:
    """One sampled keyframe in a reserved query, numbered from 1."""

    number: int
    step: int
    candidates: tuple[CandidateSummary, ...]
    raw_context: tuple[CandidateSummary, ...] = ()


@dataclass(frozen=True)
class GroundingQuery:
    """One question to the oracle. Never carries ground-truth object ids."""

    phase: Phase
    step: int
    instruction: Instruction
    annotated: tuple[CandidateSummary, ...] = ()
    raw_context: tuple[CandidateSummary, ...] = ()
    keyframes: tuple[KeyframeSummary, ...] = ()

    def __post_init__(self):
        if self.phase in (Phase.INITIAL, Phase.ACTIVE):
            if not self.annotated:
                raise InputError(f"{self.phase.value} query needs candidates")
        elif not self.keyframes:
            raise InputError("reserved query needs keyframes")


@dataclass(frozen=True)
class GroundingResult:
    success: bool
    identifier: Optional[int] = None
    keyframe_index: Optional[int] = None
    confidence: float = 0.0

    def __post_init__(self):
        if self.success and self.identifier is None:
            raise InputError("a successful grounding carries an identifier")


@dataclass(frozen=True)
class TruthChannel:
    """Side channel feeding simulated oracles; never serialized to the wire.

    ``true_identifier`` is the annotated identifier of the real target (None
    when it is not in view). ``keyframe_pairs`` lists (keyframe number,
    identifier) answers for reserved queries, best viewing quality first.
    ``quality`` holds (visible_fraction, distance_m) of the target's best
    appearance, falling back to the most visible same-class candidate.
    """

    true_identifier: Optional[int] = None
    keyframe_pairs: tuple[tuple[int, int], ...] = ()
    quality: Optional[tuple[float, float]] = None


# ---------------------------------------------------------------------------
# Oracles

class GroundingOracle:
    """Interface: answer a grounding query."""

    def answer(self, query: GroundingQuery, truth: TruthChannel) -> GroundingResult:
        raise NotImplementedError


class PerfectOracle(GroundingOracle):
    """Always correct: names the target iff it is among the candidates."""

    def answer(self, query: GroundingQuery, truth: TruthChannel) -> GroundingResult:
        if query.phase is Phase.RESERVED:
            if truth.keyframe_pairs:
                j, i = truth.keyframe_pairs[0]
                return GroundingResult(True, identifier=i, keyframe_index=j,
                                       confidence=1.0)
            return GroundingResult(False, confidence=1.0)
        if truth.true_identifier is not None:
            return GroundingResult(True, identifier=truth.true_identifier,
                                   confidence=1.0)
        return GroundingResult(False, confidence=1.0)


def _stable_rng(*parts) -> random.Random:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class QualityDependentOracle(GroundingOracle):
    """Stochastic oracle whose accuracy grows with viewpoint quality.

    The correct answer is returned with probability
    sigmoid(a + b*visible_fraction + c*(1 - |distance - d_desired|/d_desired)
    + raw_weight*landmark_overlap); otherwise a same-class distractor is
    named when one is annotated, else the query fails. The landmark-overlap
    term is the fraction of the instruction's landmark classes co-visible in
    the raw context, so removing raw context can only lower accuracy. Draws
    are keyed on (seed, step, phase): deterministic, and independent of how
    many queries other phases issued.
    """

    def __init__(self, a: float = -1.0, b: float = 3.0, c: float = 1.0,
                 raw_weight: float = 1.5, d_desired: float = 2.0, seed: int = 0):
        self.a = a
        self.b = b
        self.c = c
        self.raw_weight = raw_weight
        self.d_desired = d_desired
        self.seed = seed

    def _landmark_overlap(self, query: GroundingQuery) -> float:
        landmarks = set(query.instruction.landmark_classes)
        if not landmarks:
            return 0.0
        if query.phase is Phase.RESERVED:
            candidates = [c for kf in query.keyframes for c in kf.candidates]
        else:
            candidates = list(query.annotated)
        seen: set[str] = set()
        for c in candidates:
            seen.update(set(c.co_visible_landmarks) & landmarks)
        return len(seen) / len(landmarks)

    def correctness_probability(self, query: GroundingQuery,
                                truth: TruthChannel) -> float:
        if truth.quality is None:
            return 1.0  # nothing target-like in view: trivially correct "no"
        vf, dist = truth.quality
        z = (self.a + self.b * vf
             + self.c * (1.0 - abs(dist - self.d_desired) / self.d_desired)
             + self.raw_weight * self._landmark_overlap(query))
        return _sigmoid(z)

    def answer(self, query: GroundingQuery, truth: TruthChannel) -> GroundingResult:
        pc = self.correctness_probability(query, truth)
        rng = _stable_rng(self.seed, query.step, query.phase.value)
        correct = rng.random() < pc
        target_class = query.instruction.target_class
        if query.phase is Phase.RESERVED:
            truth_pairs = set(truth.keyframe_pairs)
            distractors = [
                (kf.number, c.identifier)
                for kf in query.keyframes for c in kf.candidates
                if c.class_name == target_class
                and (kf.number, c.identifier) not in truth_pairs
            ]
            if correct:
                if truth.keyframe_pairs:
                    j, i = truth.keyframe_pairs[0]
                    return GroundingResult(True, identifier=i, keyframe_index=j,
                                           confidence=pc)
                return GroundingResult(False, confidence=pc)
            if distractors:
                j, i = distractors[rng.randrange(len(distractors))]
                return GroundingResult(True, identifier=i, keyframe_index=j,
                                       confidence=1.0 - pc)
            return GroundingResult(False, confidence=1.0 - pc)
        distractors = [c.identifier for c in query.annotated
                       if c.class_name == target_class
                       and c.identifier != truth.true_identifier]
        if correct:
            if truth.true_identifier is not None:
                return GroundingResult(True, identifier=truth.true_identifier,
                                       confidence=pc)
            return GroundingResult(False, confidence=pc)
        if distractors:
            ident = distractors[rng.randrange(len(distractors))]
            return GroundingResult(True, identifier=ident, confidence=1.0 - pc)
        return GroundingResult(False, confidence=1.0 - pc)


class ScriptedOracle(GroundingOracle):
    """Plays back a fixed list of results, one per query, in order."""

    def __init__(self, playback: Sequence[GroundingResult]):
        self.playback = list(playback)
        self.cursor = 0

    def answer(self, query: GroundingQuery, truth: TruthChannel) -> GroundingResult:
        if self.cursor >= len(self.playback):
            raise ScriptExhaustedError(
                f"scripted oracle exhausted after {self.cursor} answers")
        result = self.playback[self.cursor]
        self.cursor += 1
        return result


# ---------------------------------------------------------------------------
# Remote oracle wire protocol

def candidate_to_wire(c: CandidateSummary) -> dict:
    return {
        "identifier": c.identifier,
        "class": c.class_name,
        "attributes": list(c.attributes),
        "visible_fraction": c.visible_fraction,
        "distance_m": c.distance_m,
        "co_visible_landmarks": list(c.co_visible_landmarks),
    }


def candidate_from_wire(d: dict) -> CandidateSummary:
    return CandidateSummary(
        identifier=int(d["identifier"]),
        class_name=str(d["class"]),
        attributes=tuple(d.get("attributes", ())),
        visible_fraction=float(d.get("visible_fraction", 0.0)),
        distance_m=float(d.get("distance_m", 0.0)),
        co_visible_landmarks=tuple(d.get("co_visible_landmarks", ())),
    )


def query_to_wire(query: GroundingQuery) -> dict:
    """Request document for the remote oracle; carries no ground truth."""
    doc = {
        "phase": query.phase.value,
        "instruction_text": query.instruction.raw_text,
        "candidates": [candidate_to_wire(c) for c in query.annotated],
        "raw_context": [candidate_to_wire(c) for c in query.raw_context],
    }
    if query.phase is Phase.RESERVED:
        doc["keyframes"] = [
            {
                "number": kf.number,
                "candidates": [candidate_to_wire(c) for c in kf.candidates],
                "raw_context": [candidate_to_wire(c) for c in kf.raw_context],
            }
            for kf in query.keyframes
        ]
    return doc


def result_to_wire(result: GroundingResult) -> dict:
    return {
        "success": result.success,
        "identifier": result.identifier,
        "keyframe_index": result.keyframe_index,
        "confidence": result.confidence,
    }


def result_from_wire(doc: dict) -> GroundingResult:
    try:
        ident = doc.get("identifier")
        kf = doc.get("keyframe_index")
        return GroundingResult(
            success=bool(doc["success"]),
            identifier=None if ident is None else int(ident),
            keyframe_index=None if kf is None else int(kf),
            confidence=float(doc.get("confidence", 0.0)),
        )
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise OracleUnavailableError(f"malformed oracle response: {doc!r}") from exc


def _default_post(url: str, payload: dict, timeout: float) -> dict:
    import httpx

    try:
        response = httpx.post(url, json=payload, timeout=timeout)
        response.raise_for_status()
        return response.json()
    except Exception as exc:  # transport/protocol failure of any kind
        raise OracleUnavailableError(f"remote oracle at {url}: {exc}") from exc


class RemoteOracle(GroundingOracle):
    """Round-trips each query as one request/response document over HTTP.

    ``post`` may be overridden with any callable ``(url, payload, timeout) ->
    response dict`` (used by tests to target an in-process ASGI app).
    """

    def __init__(self, url: str, timeout: float = 10.0,
                 post: Optional[Callable[[str, dict, float], dict]] = None):
        if not url:
            raise InputError("remote oracle needs an endpoint URL")
        self.url = url
        self.timeout = timeout
        self.post = post or _default_post

    def answer(self, query: GroundingQuery, truth: TruthChannel) -> GroundingResult:
        payload = query_to_wire(query)
        doc = self.post(self.url, payload, self.timeout)
        if not isinstance(doc, dict):
            raise OracleUnavailableError(f"non-object oracle response: {doc!r}")
        return result_from_wire(doc)


def ground(oracle: GroundingOracle, query: GroundingQuery,
           truth: TruthChannel) -> GroundingResult:
    """Ask the oracle one question (thin dispatch point)."""
    return oracle.answer(query, truth)
