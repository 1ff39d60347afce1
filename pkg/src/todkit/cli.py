"""Command-line entry points for the batch pipelines.

Subcommands: validate, align, check, evaluate, synth, serve.  Run
``todkit <subcommand> --help`` for the options of each.
"""

from __future__ import annotations

import argparse
import json
import sys
import urllib.request

from .alignment import NormConfig, hybrid_align, load_candidates
from .checker import annotation_atoms, apply_fixes, check_dataset
from .data import dataset_from_obj, load_dataset, save_dataset, validate_dataset
from .findings import write_findings_report
from .errors import AlignmentFailedError
from .evaluate import (EchoPredictor, ScriptedPredictor, evaluate_end_to_end,
                       evaluate_turn_by_turn)
from .kb import load_database, load_ontology, ontology_from_database
from .perturb import ErrorStats, SynthConfig, synthesize_dataset, write_examples
from .service import _load_sidecars, create_app
from .stateformat import SubtaskKind
from .valuemap import ValueMapping, load_value_mapping, save_value_mapping


def _load_vm(path) -> ValueMapping | None:
    return load_value_mapping(path) if path else None


def cmd_validate(args) -> int:
    with open(args.dataset, encoding="utf-8") as f:
        ds = dataset_from_obj(json.load(f))
    issues = validate_dataset(ds)
    for finding in issues:
        print(finding.to_json_line())
    print(f"{len(ds)} dialogues, {sum(len(d.turns) for d in ds)} turns, "
          f"{len(issues)} problems", file=sys.stderr)
    return 1 if issues else 0


def cmd_align(args) -> int:
    ds = load_dataset(args.dataset)
    candidates = load_candidates(args.candidates) if args.candidates else {}
    norm = NormConfig(word_boundaries=not args.no_word_boundaries)
    aligned, failures = [], []
    for dialogue in ds:
        for turn in dialogue.turns:
            _, attentions = _load_sidecars(args.attention, dialogue.dialogue_id,
                                           turn.turn_id)
            for key, value in annotation_atoms(turn):
                cs = candidates.get(value)
                hit = None
                for side in ("user", "agent"):
                    am = attentions.get(side)
                    src_span = None
                    if am is not None:
                        at = am.src_text.find(value)
                        if at >= 0:
                            src_span = (at, at + len(value))
                    try:
                        entity = hybrid_align(cs, am if src_span else None, src_span,
                                              turn.utterance(side), norm)
                    except (AlignmentFailedError, ValueError):
                        continue
                    hit = {"dialogue_id": dialogue.dialogue_id, "turn_id": turn.turn_id,
                           "value": value, "slot": key[1], "side": side,
                           "start_char": entity.target_span[0],
                           "end_char": entity.target_span[1],
                           "text": entity.target_text, "provenance": entity.provenance}
                    break
                if hit is not None:
                    aligned.append(hit)
                else:
                    failures.append({"dialogue_id": dialogue.dialogue_id,
                                     "turn_id": turn.turn_id, "value": value})
    payload = {"aligned": aligned, "failures": failures}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=1)
    else:
        json.dump(payload, sys.stdout, ensure_ascii=False, indent=1)
        print()
    print(f"aligned {len(aligned)} values, {len(failures)} failures", file=sys.stderr)
    return 0


def cmd_check(args) -> int:
    ds = load_dataset(args.dataset)
    db = load_database(args.db) if args.db else None
    vm = _load_vm(args.value_map)
    found = check_dataset(ds, db, vm)
    for finding in found:
        print(finding.to_json_line())
    if args.out:
        write_findings_report(found, args.out)
    if args.fix:
        fixes = [f.suggested_fix for f in found if f.suggested_fix is not None]
        if fixes:
            ds = apply_fixes(ds, fixes, vm)
            save_dataset(ds, args.dataset)
            if vm is not None and args.value_map:
                save_value_mapping(vm, args.value_map)
        print(f"applied {len(fixes)} fixes", file=sys.stderr)
    print(f"{len(found)} findings", file=sys.stderr)
    return 1 if found else 0


class HttpPredictor:
    """Bridge to a model server: POST {"kind", "input"} -> {"output"}."""

    concurrent_safe = False

    def __init__(self, url: str):
        self.url = url

    def __call__(self, kind: SubtaskKind, rendered_input: str) -> str:
        body = json.dumps({"kind": kind.value, "input": rendered_input}).encode()
        request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(request) as response:
            return json.loads(response.read().decode())["output"]


def _build_predictor(spec: str, ds):
    if spec == "echo":
        return EchoPredictor(ds)
    if spec.startswith("script:"):
        with open(spec[len("script:"):], encoding="utf-8") as f:
            raw = json.load(f)
        table = {(SubtaskKind(e["kind"]), e["input"]): e["output"]
                 for e in raw.get("entries", [])}
        fallbacks = None
        if raw.get("fallbacks"):
            fallbacks = {SubtaskKind(k): v for k, v in raw["fallbacks"].items()}
        return ScriptedPredictor(table, fallbacks)
    if spec.startswith("http:") or spec.startswith("https:"):
        return HttpPredictor(spec)
    raise SystemExit(f"unknown predictor {spec!r}")


def cmd_evaluate(args) -> int:
    ds = load_dataset(args.dataset)
    vm = _load_vm(args.value_map)
    predictor = _build_predictor(args.predictor, ds)
    if args.mode == "e2e":
        if not args.db:
            raise SystemExit("--db is required for --mode e2e")
        report = evaluate_end_to_end(ds, predictor, load_database(args.db), vm,
                                     tokenize_mode=args.tokenize)
    else:
        report = evaluate_turn_by_turn(ds, predictor, vm, tokenize_mode=args.tokenize)
    print(report.summary())
    if args.report:
        report.save(args.report)
    return 0


def cmd_synth(args) -> int:
    ds = load_dataset(args.dataset)
    if args.ontology:
        ontology = load_ontology(args.ontology)
    elif args.db:
        ontology = ontology_from_database(load_database(args.db))
    else:
        raise SystemExit("need --ontology or --db to sample perturbation values")
    stats = None
    if args.stats:
        with open(args.stats, encoding="utf-8") as f:
            stats = ErrorStats.from_obj(json.load(f))
    cfg = SynthConfig(task=args.task, negatives_per_positive=args.negatives,
                      seed=args.seed)
    examples = synthesize_dataset(ds, stats, ontology, cfg)
    write_examples(examples, args.out)
    positives = sum(1 for x in examples if x.label == 0)
    print(f"wrote {len(examples)} examples ({positives} positive, "
          f"{len(examples) - positives} negative) to {args.out}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    app = create_app(args.dataset, db_path=args.db, vm_path=args.value_map,
                     sidecar_dir=args.sidecar, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="todkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset file against the schema")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("align", help="locate annotation values in utterances")
    p.add_argument("dataset")
    p.add_argument("--candidates", help="JSON file: {value: [candidate translations]}")
    p.add_argument("--attention", help="directory of per-turn attention sidecars")
    p.add_argument("--no-word-boundaries", action="store_true",
                   help="for scripts without spaces")
    p.add_argument("--out", help="write alignments to this JSON file")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("check", help="run the annotation checker")
    p.add_argument("dataset")
    p.add_argument("--db", help="database JSON for API checking")
    p.add_argument("--value-map", help="value mapping JSON")
    p.add_argument("--fix", action="store_true", help="apply auto-fixes in place")
    p.add_argument("--out", help="write the findings report (JSON lines) here")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("evaluate", help="score a predictor on a dataset")
    p.add_argument("dataset")
    p.add_argument("--db", help="database JSON (required for e2e)")
    p.add_argument("--value-map", help="value mapping JSON for normalization")
    p.add_argument("--predictor", default="echo",
                   help="echo | script:FILE | http://host/predict")
    p.add_argument("--mode", choices=("turn", "e2e"), default="turn")
    p.add_argument("--tokenize", choices=("word", "char"), default="word",
                   help="BLEU tokenization (char for unspaced scripts)")
    p.add_argument("--report", help="write the full report JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="synthesize label-error training data")
    p.add_argument("dataset")
    p.add_argument("--task", choices=("dst", "da"), default="dst")
    p.add_argument("--stats", help="error statistics JSON")
    p.add_argument("--ontology", help="ontology JSON for replacement values")
    p.add_argument("--db", help="database JSON (ontology fallback)")
    p.add_argument("--negatives", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the post-editing HTTP service")
    p.add_argument("dataset")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--db", help="database JSON for API checking")
    p.add_argument("--value-map", help="value mapping JSON (persisted on edits)")
    p.add_argument("--sidecar", help="directory with per-turn alignment sidecars")
    p.add_argument("--ui", help="serve this directory (the built frontend) at /ui")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
