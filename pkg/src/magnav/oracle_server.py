"""Reference HTTP endpoint for the grounding-oracle wire protocol.

Serves POST /ground: one request document per query, one response document
per answer. The bundled responder is rule-based: it parses the instruction
text and picks the candidate whose class matches the target with the best
attribute overlap (then visibility). It sees only what the wire carries, so
it can never use ground truth.
"""

from __future__ import annotations

from typing import Callable, Optional

from fastapi import FastAPI
from pydantic import BaseModel, ConfigDict, Field

from .errors import InstructionParseError
from .grounding import parse_instruction


class WireCandidate(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    identifier: int
    class_name: str = Field(alias="class")
    attributes: list[str] = []
    visible_fraction: float = 0.0
    distance_m: float = 0.0
    co_visible_landmarks: list[str] = []


class WireKeyframe(BaseModel):
    number: int
    candidates: list[WireCandidate] = []
    raw_context: list[WireCandidate] = []


class WireRequest(BaseModel):
    phase: str
    instruction_text: str
    candidates: list[WireCandidate] = []
    raw_context: list[WireCandidate] = []
    keyframes: list[WireKeyframe] = []


class WireResponse(BaseModel):
    success: bool
    identifier: Optional[int] = None
    keyframe_index: Optional[int] = None
    confidence: float = 0.0


def _candidate_rank(c: WireCandidate, attributes: set[str]) -> tuple:
    overlap = len(attributes & set(c.attributes))
    return (overlap, c.visible_fraction, -c.identifier)


def rule_based_responder(request: WireRequest) -> WireResponse:
    """Ground by class match plus attribute overlap; no learning, no truth."""
    try:
        instruction = parse_instruction(request.instruction_text)
    except InstructionParseError:
        return WireResponse(success=False, confidence=0.0)
    attrs = set(instruction.target_attributes)

    def best_of(candidates: list[WireCandidate]) -> Optional[WireCandidate]:
        matches = [c for c in candidates
                   if c.class_name == instruction.target_class]
        if not matches:
            return None
        return max(matches, key=lambda c: _candidate_rank(c, attrs))

    if request.phase == "Reserved":
        best: Optional[tuple[int, WireCandidate]] = None
        for kf in request.keyframes:
            c = best_of(kf.candidates)
            if c is not None and (best is None or _candidate_rank(c, attrs)
                                  > _candidate_rank(best[1], attrs)):
                best = (kf.number, c)
        if best is None:
            return WireResponse(success=False, confidence=0.5)
        return WireResponse(success=True, identifier=best[1].identifier,
                            keyframe_index=best[0], confidence=0.8)
    c = best_of(request.candidates)
    if c is None:
        return WireResponse(success=False, confidence=0.5)
    return WireResponse(success=True, identifier=c.identifier, confidence=0.8)


def create_app(responder: Callable[[WireRequest], WireResponse] = rule_based_responder
               ) -> FastAPI:
    app = FastAPI(title="grounding oracle")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/ground", response_model=WireResponse)
    def ground_endpoint(request: WireRequest) -> WireResponse:
        return responder(request)

    return app
