"""HTTP service backing the human post-editing loop.

Serves a task queue over the dataset's turns, accepts utterance/span patches
under optimistic concurrency (per-turn versions; stale writes are rejected
with 409, never silently overwritten), re-runs the annotation checks on
every write, and persists each accepted write atomically so edits survive a
restart.  Alignment suggestions come from the hybrid aligner over per-turn
sidecar files.
"""

from __future__ import annotations

import os
import threading
from dataclasses import replace

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import findings as F
from .alignment import NormConfig, hybrid_align, load_attention, load_candidates
from .checker import annotation_atoms, apply_fixes, check_api, check_entities
from .data import (
    BeliefState,
    Dataset,
    EntitySpan,
    Turn,
    load_dataset,
    replace_turn,
    save_dataset,
    turn_to_dict,
)
from .errors import AlignmentFailedError, IoError
from .kb import Database, load_database
from .valuemap import ValueMapping, load_value_mapping, save_value_mapping


class SpanModel(BaseModel):
    domain: str
    slot: str
    relation: str = "equal_to"
    value: str
    start_char: int
    end_char: int
    side: str


class TurnPatchModel(BaseModel):
    base_version: int
    user_utterance: str | None = None
    agent_utterance: str | None = None
    spans: list[SpanModel] | None = None


class ValueMappingPutModel(BaseModel):
    slot: str
    candidates: list[str] = []
    canonical: str | None = None


def _error(status: int, code: str, message: str, location: str | None = None):
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message, "location": location})


class DatasetStore:
    """Dataset plus per-turn versions, cursor, and check bookkeeping.

    Mutation is serialized through one lock; reads see immutable snapshots.
    Every accepted write is persisted with an atomic whole-file rewrite.
    """

    def __init__(self, dataset_path, db: Database | None = None,
                 vm: ValueMapping | None = None, vm_path=None, sidecar_dir=None):
        self.path = dataset_path
        self.dataset: Dataset = load_dataset(dataset_path)
        self.db = db
        self.vm = vm
        self.vm_path = vm_path
        self.sidecar_dir = sidecar_dir
        self.lock = threading.Lock()
        self.versions: dict[tuple[str, int], int] = {}
        self.check_status: dict[tuple[str, int], str] = {}
        self.cursor = 0
        self.pending_fixes: dict[str, F.Fix] = {}
        self._fix_counter = 0

    # -- turn addressing -----------------------------------------------------

    def turn_refs(self) -> list[tuple[str, int]]:
        return [(d.dialogue_id, t.turn_id) for d, t in self.dataset.turns()]

    def get_turn(self, dialogue_id: str, turn_id: int) -> Turn | None:
        dialogue = self.dataset.get_dialogue(dialogue_id)
        if dialogue is None:
            return None
        return next((t for t in dialogue.turns if t.turn_id == turn_id), None)

    def version(self, dialogue_id: str, turn_id: int) -> int:
        return self.versions.get((dialogue_id, turn_id), 0)

    def _turn_context(self, dialogue_id: str, turn_id: int):
        """Prior belief state and utterance history for one turn."""
        dialogue = self.dataset.get_dialogue(dialogue_id)
        prior: BeliefState | None = None
        history: list[str] = []
        for t in dialogue.turns:
            if t.turn_id == turn_id:
                return prior, "\n".join(history)
            history += [t.user_utterance, t.agent_utterance]
            prior = t.belief_state
        return prior, "\n".join(history)

    def turn_findings(self, dialogue_id: str, turn_id: int) -> list[F.Finding]:
        turn = self.get_turn(dialogue_id, turn_id)
        prior, history = self._turn_context(dialogue_id, turn_id)
        found = check_entities(turn, self.vm, prior_state=prior,
                               history_text=history, dialogue_id=dialogue_id)
        if self.db is not None:
            found += check_api(turn, self.db, self.vm, dialogue_id=dialogue_id)
        self.check_status[(dialogue_id, turn_id)] = "flagged" if found else "clean"
        return found

    def register_fixes(self, found: list[F.Finding]) -> dict[str, dict]:
        out = {}
        for finding in found:
            if finding.suggested_fix is not None:
                self._fix_counter += 1
                fix_id = f"fix-{self._fix_counter}"
                self.pending_fixes[fix_id] = finding.suggested_fix
                out[fix_id] = finding.suggested_fix.to_dict()
        return out

    # -- mutation -------------------------------------------------------------

    def persist(self):
        save_dataset(self.dataset, self.path)
        if self.vm is not None and self.vm_path is not None:
            save_value_mapping(self.vm, self.vm_path)

    def apply_patch(self, dialogue_id: str, turn_id: int, patch: TurnPatchModel):
        """Returns (new_version, findings); raises nothing -- conflict and
        validation problems are returned as (None, error_response)."""
        with self.lock:
            turn = self.get_turn(dialogue_id, turn_id)
            if turn is None:
                return None, _error(404, "NOT_FOUND",
                                    f"no turn {dialogue_id}/{turn_id}",
                                    f"{dialogue_id}/{turn_id}")
            current = self.version(dialogue_id, turn_id)
            if patch.base_version != current:
                return None, _error(409, "VersionConflict",
                                    f"stale version {patch.base_version}; current is {current}",
                                    f"{dialogue_id}/{turn_id}")

            user_utt = patch.user_utterance if patch.user_utterance is not None \
                else turn.user_utterance
            agent_utt = patch.agent_utterance if patch.agent_utterance is not None \
                else turn.agent_utterance
            if patch.spans is not None:
                spans = tuple(EntitySpan(s.domain, s.slot, s.relation, s.value,
                                         s.start_char, s.end_char, s.side)
                              for s in patch.spans)
            else:
                spans = turn.spans
            for i, span in enumerate(spans):
                utt = user_utt if span.side == "user" else agent_utt
                if not (0 <= span.start_char < span.end_char <= len(utt)) \
                        or utt[span.start_char:span.end_char] != span.value:
                    return None, _error(
                        422, "SpanInvariantViolation",
                        f"span[{i}] value {span.value!r} does not match the "
                        f"{span.side} utterance slice",
                        f"{dialogue_id}/{turn_id}")

            new_turn = replace(turn, user_utterance=user_utt,
                               agent_utterance=agent_utt, spans=spans)
            self.dataset = replace_turn(self.dataset, dialogue_id, new_turn)
            self.persist()
            new_version = current + 1
            self.versions[(dialogue_id, turn_id)] = new_version
        found = self.turn_findings(dialogue_id, turn_id)
        return (new_version, found), None


def _turn_payload(store: DatasetStore, dialogue_id: str, turn: Turn,
                  found: list[F.Finding] | None = None) -> dict:
    prior, _ = store._turn_context(dialogue_id, turn.turn_id)
    payload = turn_to_dict(turn)
    payload["dialogue_id"] = dialogue_id
    payload["version"] = store.version(dialogue_id, turn.turn_id)
    payload["annotation_values"] = [
        {"domain": key[0], "slot": key[1], "relation": key[2], "value": value}
        for key, value in annotation_atoms(turn, prior)
    ]
    if found is not None:
        payload["findings"] = [f.to_dict() for f in found]
    return payload


def create_app(dataset_path, db_path=None, vm_path=None, sidecar_dir=None,
               ui_dir=None) -> FastAPI:
    db = load_database(db_path) if db_path else None
    vm = load_value_mapping(vm_path) if vm_path and os.path.exists(vm_path) else (
        ValueMapping() if vm_path else None)
    store = DatasetStore(dataset_path, db=db, vm=vm, vm_path=vm_path,
                         sidecar_dir=sidecar_dir)
    app = FastAPI(title="todkit post-editing service")
    app.state.store = store
    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.get("/api/turns/next")
    def next_task(filter: str = "all"):
        if filter not in ("all", "unchecked", "has_findings"):
            return _error(400, "BAD_FILTER", f"unknown filter {filter!r}")
        refs = store.turn_refs()
        if not refs:
            return _error(404, "NoMatchingTask", "dataset has no turns")
        n = len(refs)
        for offset in range(n):
            idx = (store.cursor + offset) % n
            dialogue_id, turn_id = refs[idx]
            if filter == "unchecked" and \
                    store.check_status.get((dialogue_id, turn_id)) is not None:
                continue
            found = store.turn_findings(dialogue_id, turn_id)
            if filter == "has_findings" and not found:
                continue
            store.cursor = (idx + 1) % n
            turn = store.get_turn(dialogue_id, turn_id)
            return _turn_payload(store, dialogue_id, turn, found)
        return _error(404, "NoMatchingTask", f"no turn matches filter {filter!r}")

    @app.get("/api/turns/{dialogue_id}/{turn_id}")
    def get_turn(dialogue_id: str, turn_id: int):
        turn = store.get_turn(dialogue_id, turn_id)
        if turn is None:
            return _error(404, "NOT_FOUND", f"no turn {dialogue_id}/{turn_id}",
                          f"{dialogue_id}/{turn_id}")
        found = store.turn_findings(dialogue_id, turn_id)
        return _turn_payload(store, dialogue_id, turn, found)

    @app.put("/api/turns/{dialogue_id}/{turn_id}")
    def put_turn(dialogue_id: str, turn_id: int, patch: TurnPatchModel):
        result, error = store.apply_patch(dialogue_id, turn_id, patch)
        if error is not None:
            return error
        new_version, found = result
        return {"version": new_version, "findings": [f.to_dict() for f in found]}

    @app.post("/api/turns/{dialogue_id}/{turn_id}/suggest-spans")
    def suggest_spans(dialogue_id: str, turn_id: int):
        turn = store.get_turn(dialogue_id, turn_id)
        if turn is None:
            return _error(404, "NOT_FOUND", f"no turn {dialogue_id}/{turn_id}",
                          f"{dialogue_id}/{turn_id}")
        prior, _ = store._turn_context(dialogue_id, turn_id)
        suggestions, failures = [], []
        candidates, attentions = _load_sidecars(store.sidecar_dir, dialogue_id, turn_id)
        for key, value in annotation_atoms(turn, prior):
            cs = candidates.get(value)
            placed = False
            for side in ("user", "agent"):
                am = attentions.get(side)
                src_span = None
                if am is not None:
                    at = am.src_text.find(value)
                    if at >= 0:
                        src_span = (at, at + len(value))
                try:
                    aligned = hybrid_align(cs, am if src_span else None, src_span,
                                           turn.utterance(side), NormConfig())
                except (AlignmentFailedError, ValueError):
                    continue
                suggestions.append({
                    "domain": key[0], "slot": key[1], "relation": key[2],
                    "value": value, "side": side,
                    "start_char": aligned.target_span[0],
                    "end_char": aligned.target_span[1],
                    "text": aligned.target_text,
                    "provenance": aligned.provenance,
                })
                placed = True
                break
            if not placed:
                failures.append({"value": value, "reason": "AlignmentFailed"})
        return {"version": store.version(dialogue_id, turn_id),
                "suggestions": suggestions, "failures": failures}

    @app.post("/api/check")
    def run_checks(scope: str = "dataset", dialogue_id: str | None = None,
                   turn_id: int | None = None):
        if scope not in ("turn", "dialogue", "dataset"):
            return _error(400, "BAD_SCOPE", f"unknown scope {scope!r}")
        refs = store.turn_refs()
        if scope == "dialogue":
            refs = [r for r in refs if r[0] == dialogue_id]
        elif scope == "turn":
            refs = [r for r in refs if r == (dialogue_id, turn_id)]
        found: list[F.Finding] = []
        for d_id, t_id in refs:
            found.extend(store.turn_findings(d_id, t_id))
        fixes = store.register_fixes(found)
        return {"findings": [f.to_dict() for f in found], "fixes": fixes}

    @app.post("/api/fixes/{fix_id}/confirm")
    def confirm_fix(fix_id: str):
        fix = store.pending_fixes.get(fix_id)
        if fix is None:
            return _error(404, "NOT_FOUND", f"no pending fix {fix_id}")
        with store.lock:
            try:
                store.dataset = apply_fixes(store.dataset, [fix], store.vm)
            except Exception as e:
                return _error(409, "StaleFix", str(e), f"{fix.dialogue_id}/{fix.turn_id}")
            store.persist()
            key = (fix.dialogue_id, fix.turn_id)
            store.versions[key] = store.version(*key) + 1
            del store.pending_fixes[fix_id]
        found = store.turn_findings(fix.dialogue_id, fix.turn_id)
        return {"version": store.version(fix.dialogue_id, fix.turn_id),
                "findings": [f.to_dict() for f in found]}

    @app.get("/api/progress")
    def progress():
        refs = store.turn_refs()
        statuses = [store.check_status.get(r) for r in refs]
        return {
            "total": len(refs),
            "checked": sum(1 for s in statuses if s is not None),
            "flagged": sum(1 for s in statuses if s == "flagged"),
            "clean": sum(1 for s in statuses if s == "clean"),
        }

    @app.get("/api/value-mapping")
    def get_value_mapping():
        return store.vm.to_obj() if store.vm is not None else {}

    @app.put("/api/value-mapping/{source_value}")
    def put_value_mapping(source_value: str, body: ValueMappingPutModel):
        if store.vm is None:
            store.vm = ValueMapping()
        with store.lock:
            for candidate in body.candidates:
                store.vm.add(source_value, body.slot, candidate)
            if body.canonical:
                store.vm.set_canonical(source_value, body.slot, body.canonical)
            if store.vm_path is not None:
                save_value_mapping(store.vm, store.vm_path)
        return {"source_value": source_value,
                "entry": store.vm.to_obj().get(source_value, {})}

    return app


def _load_sidecars(sidecar_dir, dialogue_id: str, turn_id: int):
    """Per-turn sidecar data: ``{d}__{t}.candidates.json`` maps values to
    candidate translations; ``{d}__{t}.{side}.attention.json`` holds the
    attention matrix for one side's utterance."""
    candidates, attentions = {}, {}
    if not sidecar_dir:
        return candidates, attentions
    base = os.path.join(os.fspath(sidecar_dir), f"{dialogue_id}__{turn_id}")
    try:
        if os.path.exists(base + ".candidates.json"):
            candidates = load_candidates(base + ".candidates.json")
    except IoError:
        pass
    for side in ("user", "agent"):
        path = f"{base}.{side}.attention.json"
        try:
            if os.path.exists(path):
                attentions[side] = load_attention(path)
        except IoError:
            pass
    return candidates, attentions
