"""Command-line pipeline: segment, expand, align, evaluate, train, score, report.

Every command reads and writes plain files under an output directory, takes
its defaults from an optional INI config file, and lets flags override the
config. All randomness flows from one --seed value; each component hashes
(seed, component name) so streams stay independent of each other.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import align as align_mod
from . import coding_eval, corpus, expansion_eval, prompts, segment as segment_mod, train as train_mod
from .expand import (
    ExpandedNote,
    Expander,
    ExpanderConfig,
    SectionExpansion,
    expand_notes,
    load_mock_dictionary,
)
from .seeding import derive_seed

# Which command produces each pipeline artifact, for actionable error messages.
_PRODUCED_BY = {
    "sections.jsonl": "segment",
    "reduced.jsonl": "segment",
    "expanded.jsonl": "expand",
    "pairs.jsonl": "align",
    "model.bin": "train",
    "loss_trace.jsonl": "train",
    "scores.tsv": "score",
    "threshold.json": "tune-threshold",
    "metrics.json": "eval-coding",
}


class _Config:
    """INI config access with typed getters; missing keys fall through to defaults."""

    def __init__(self, parser: configparser.ConfigParser | None) -> None:
        self._parser = parser

    @classmethod
    def load(cls, path: str | None) -> "_Config":
        if path is None:
            return cls(None)
        if not Path(path).is_file():
            raise ValueError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path, encoding="utf-8")
        return cls(parser)

    def get(self, section: str, key: str) -> str | None:
        if self._parser is None:
            return None
        return self._parser.get(section, key, fallback=None)


def _resolve(flag_value, cfg: _Config, section: str, key: str, default, cast=str):
    if flag_value is not None:
        return flag_value
    raw = cfg.get(section, key)
    if raw is None:
        return default
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        producer = _PRODUCED_BY.get(p.name)
        hint = f"; run the {producer!r} command first" if producer else ""
        raise ValueError(f"{what} not found at {p}{hint}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _write_json(path: Path, record) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True, indent=2) + "\n")


def _read_jsonl(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def _load_expanded(path: Path) -> dict[str, ExpandedNote]:
    out: dict[str, ExpandedNote] = {}
    for record in _read_jsonl(path):
        sections = tuple(
            SectionExpansion(
                original=s["original"], expanded=s["expanded"], source=s["source"]
            )
            for s in record["sections"]
        )
        note = ExpandedNote(
            note_id=record["id"],
            expanded_text=record["expanded_text"],
            sections=sections,
        )
        if note.note_id in out:
            raise ValueError(f"{path}: duplicate note id {note.note_id!r}")
        out[note.note_id] = note
    return out


def _policy_to_dict(policy: coding_eval.ThresholdPolicy) -> dict:
    return {
        "kind": policy.kind,
        "global_value": policy.global_value,
        "per_code_values": dict(sorted(policy.per_code_values.items())),
        "fallback": policy.fallback,
    }


def _policy_from_dict(record: dict) -> coding_eval.ThresholdPolicy:
    return coding_eval.ThresholdPolicy(
        kind=record["kind"],
        global_value=float(record.get("global_value", 0.5)),
        per_code_values={k: float(v) for k, v in record.get("per_code_values", {}).items()},
        fallback=float(record.get("fallback", 0.5)),
    )


def _report_to_dict(report: coding_eval.MetricsReport) -> dict:
    return {
        "macro_auc": report.macro_auc,
        "micro_auc": report.micro_auc,
        "macro_f1": report.macro_f1,
        "micro_f1": report.micro_f1,
        "precision_at": {str(k): v for k, v in sorted(report.precision_at.items())},
        "threshold": None
        if report.threshold_used is None
        else _policy_to_dict(report.threshold_used),
    }


def _report_from_dict(record: dict) -> coding_eval.MetricsReport:
    return coding_eval.MetricsReport(
        macro_auc=float(record["macro_auc"]),
        micro_auc=float(record["micro_auc"]),
        macro_f1=float(record["macro_f1"]),
        micro_f1=float(record["micro_f1"]),
        precision_at={int(k): float(v) for k, v in record["precision_at"].items()},
        threshold_used=None
        if record.get("threshold") is None
        else _policy_from_dict(record["threshold"]),
    )


def _print_report(report: coding_eval.MetricsReport) -> None:
    print(f"macro-auc {report.macro_auc:.4f}")
    print(f"micro-auc {report.micro_auc:.4f}")
    print(f"macro-f1  {report.macro_f1:.4f}")
    print(f"micro-f1  {report.micro_f1:.4f}")
    for k in sorted(report.precision_at):
        print(f"p@{k:<8}{report.precision_at[k]:.4f}")


def _gold_for_scores(
    scores: corpus.ScoreMatrix, notes: Sequence[corpus.Note], code_set: corpus.CodeSet
) -> np.ndarray:
    by_id = {n.id: n for n in notes}
    if list(scores.code_ids) != list(code_set.code_ids):
        raise ValueError("score matrix code ids do not match the code set")
    gold = np.zeros((len(scores.note_ids), len(scores.code_ids)), dtype=np.int8)
    for i, note_id in enumerate(scores.note_ids):
        note = by_id.get(note_id)
        if note is None:
            raise ValueError(f"score matrix note {note_id!r} not present in notes file")
        for code in note.labels:
            gold[i, code_set.index_of(code)] = 1
    return gold


def _segmenter_settings(args, cfg: _Config) -> tuple[int, list[str]]:
    budget = _resolve(getattr(args, "budget", None), cfg, "segmenter", "budget",
                      segment_mod.DEFAULT_TOKEN_BUDGET, int)
    droppable_raw = _resolve(getattr(args, "droppable", None), cfg, "segmenter",
                             "droppable", None)
    if droppable_raw is None:
        droppable = list(segment_mod.DEFAULT_DROPPABLE)
    else:
        droppable = [s.strip() for s in droppable_raw.split(",") if s.strip()]
    return budget, droppable


# Command implementations.

def _cmd_segment(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    notes = corpus.load_notes(notes_path)
    budget, droppable = _segmenter_settings(args, cfg)
    out = _out_dir(args)
    records = []
    reduced_notes = []
    section_count = 0
    shortened = 0
    for note in notes:
        sections = segment_mod.segment(note.text)
        section_count += len(sections)
        records.append(
            {
                "id": note.id,
                "sections": [
                    {"header": s.header, "body": s.body, "start": s.start, "end": s.end}
                    for s in sections
                ],
            }
        )
        reduced = segment_mod.reduce_to_budget(sections, budget, droppable)
        if reduced != note.text:
            shortened += 1
        reduced_notes.append(corpus.Note(id=note.id, text=reduced, labels=note.labels))
    _write_jsonl(out / "sections.jsonl", records)
    corpus.save_notes(reduced_notes, out / "reduced.jsonl")
    print(f"segmented {len(notes)} notes into {section_count} sections")
    print(f"reduced {shortened} notes to the {budget}-token budget")
    print(f"wrote {out / 'sections.jsonl'} and {out / 'reduced.jsonl'}")


def _cmd_expand(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    notes = corpus.load_notes(notes_path)
    mode = _resolve(args.mode, cfg, "expander", "mode", "mock")
    config = ExpanderConfig(
        endpoint_url=_resolve(args.endpoint_url, cfg, "expander", "endpoint_url", ""),
        model_name=_resolve(args.model_name, cfg, "expander", "model_name", ""),
        max_inflight=_resolve(args.max_inflight, cfg, "expander", "max_inflight", 1, int),
        temperature=_resolve(args.temperature, cfg, "expander", "temperature", 0.0, float),
        cache_dir=_resolve(args.cache_dir, cfg, "expander", "cache_dir", None),
        mode=mode,
        max_retries=_resolve(None, cfg, "expander", "max_retries", 3, int),
        timeout_seconds=_resolve(None, cfg, "expander", "timeout_seconds", 60.0, float),
        max_response_tokens=_resolve(None, cfg, "expander", "max_response_tokens", None, int),
        request_token_budget=_resolve(None, cfg, "expander", "request_token_budget", 1000, int),
    )
    dictionary = None
    dict_path = _resolve(args.dictionary, cfg, "paths", "dictionary", None)
    if mode == "mock":
        if dict_path is None:
            raise ValueError("mock mode requires --dictionary")
        dictionary = load_mock_dictionary(_require(dict_path, "mock dictionary"))
    expander = Expander(config, dictionary=dictionary)
    sections_by_note = {n.id: segment_mod.segment(n.text) for n in notes}
    expanded = expand_notes(notes, sections_by_note, expander)
    out = _out_dir(args)
    _write_jsonl(
        out / "expanded.jsonl",
        (
            {
                "id": e.note_id,
                "expanded_text": e.expanded_text,
                "sections": [
                    {"original": s.original, "expanded": s.expanded, "source": s.source}
                    for s in e.sections
                ],
            }
            for e in expanded
        ),
    )
    sources = [s.source for e in expanded for s in e.sections]
    summary = {src: sources.count(src) for src in sorted(set(sources))}
    print(f"expanded {len(expanded)} notes (section sources: {summary})")
    print(f"wrote {out / 'expanded.jsonl'}")


def _cmd_align(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    notes = corpus.load_notes(notes_path)
    out = _out_dir(args)
    expanded_path = _require(
        _resolve(args.expanded, cfg, "paths", "expanded", out / "expanded.jsonl"),
        "expanded notes file",
    )
    expanded = _load_expanded(expanded_path)
    records = []
    pair_count = 0
    for note in notes:
        entry = expanded.get(note.id)
        if entry is None:
            raise ValueError(
                f"no expansion for note {note.id!r} in {expanded_path}; "
                "run the 'expand' command on the same notes first"
            )
        for pair in align_mod.extract_pairs(note.text, entry.expanded_text):
            pair_count += 1
            records.append(
                {
                    "note_id": note.id,
                    "abbreviation": pair.abbreviation,
                    "expansion": pair.expansion,
                    "a_start": pair.a_span[0],
                    "a_end": pair.a_span[1],
                    "b_start": pair.b_span[0],
                    "b_end": pair.b_span[1],
                    "occurrence_index": pair.occurrence_index,
                }
            )
    _write_jsonl(out / "pairs.jsonl", records)
    print(f"extracted {pair_count} expansion pairs from {len(notes)} notes")
    print(f"wrote {out / 'pairs.jsonl'}")


def _cmd_eval_expansion(args, cfg: _Config) -> None:
    out = _out_dir(args)
    pairs_path = _require(
        _resolve(args.pairs, cfg, "paths", "pairs", out / "pairs.jsonl"), "pairs file"
    )
    gold_path = _require(
        _resolve(args.gold, cfg, "paths", "gold_expansions", None) or "", "gold expansions file"
    )
    threshold = _resolve(args.threshold, cfg, "eval", "lenient_threshold",
                         expansion_eval.DEFAULT_LENIENT_THRESHOLD, float)
    pairs_by_note: dict[str, list[align_mod.ExpansionPair]] = {}
    for record in _read_jsonl(pairs_path):
        pair = align_mod.ExpansionPair(
            abbreviation=record["abbreviation"],
            expansion=record["expansion"],
            a_span=(record["a_start"], record["a_end"]),
            b_span=(record["b_start"], record["b_end"]),
            occurrence_index=record["occurrence_index"],
        )
        pairs_by_note.setdefault(record["note_id"], []).append(pair)
    gold = corpus.load_gold_expansions(gold_path)
    report = expansion_eval.evaluate(pairs_by_note, gold, threshold)
    _write_jsonl(
        out / "expansion_report.jsonl",
        (
            {
                "note_id": v.note_id,
                "abbreviation": v.abbreviation,
                "predicted_expansion": v.predicted_expansion,
                "gold_full_form": v.gold_full_form,
                "similarity": v.similarity,
                "verdict": v.verdict,
            }
            for v in report.per_pair
        ),
    )
    summary = {
        "detection_precision": report.detection_precision,
        "detection_recall": report.detection_recall,
        "strict_accuracy": report.strict_accuracy,
        "lenient_accuracy": report.lenient_accuracy,
        "lenient_threshold": threshold,
        "gold_records": len(report.per_pair),
    }
    _write_json(out / "expansion_summary.json", summary)
    print("expansion evaluation")
    print(f"  detection precision {report.detection_precision:.4f}")
    print(f"  detection recall    {report.detection_recall:.4f}")
    print(f"  strict accuracy     {report.strict_accuracy:.4f}")
    print(f"  lenient accuracy    {report.lenient_accuracy:.4f}")
    print(f"wrote {out / 'expansion_report.jsonl'} and {out / 'expansion_summary.json'}")


def _cmd_build_prompts(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    codes_path = _require(_resolve(args.codes, cfg, "paths", "codes", "codes.tsv"), "codes file")
    notes, code_set = corpus.load_corpus(notes_path, codes_path)
    candidates_path = _resolve(args.candidates, cfg, "paths", "candidates", None)
    chunk_size = _resolve(args.chunk_size, cfg, "eval", "chunk_size",
                          prompts.DEFAULT_CHUNK_SIZE, int)
    mask_token = args.mask_token or prompts.DEFAULT_MASK_TOKEN
    if args.use_synonyms:
        displays = prompts.sample_synonyms(
            code_set, args.synonym_count, derive_seed(args.seed, "synonyms")
        )
    else:
        displays = prompts.description_displays(code_set)
    if candidates_path is not None:
        candidates = corpus.load_candidates(_require(candidates_path, "candidates file"), code_set)
    else:
        all_codes = corpus.CandidateList(note_id="", ranked_codes=tuple(code_set.code_ids))
        candidates = {n.id: all_codes for n in notes}
    out = _out_dir(args)
    records = []
    for note in notes:
        entry = candidates.get(note.id)
        if entry is None:
            raise ValueError(f"no candidate list for note {note.id!r}")
        chunks = prompts.chunk_candidates(entry, displays, chunk_size)
        for chunk_index, chunk in enumerate(chunks):
            built = prompts.build_prompt(
                prompts.PromptSpec(
                    entries=tuple(chunk), note_text=note.text, mask_token=mask_token
                )
            )
            records.append(
                {
                    "note_id": note.id,
                    "chunk_index": chunk_index,
                    "text": built.text,
                    "mask_positions": list(built.mask_positions),
                    "code_ids": list(built.code_ids),
                }
            )
    _write_jsonl(out / "prompts.jsonl", records)
    print(f"built {len(records)} prompts for {len(notes)} notes")
    print(f"wrote {out / 'prompts.jsonl'}")


def _train_config(args, cfg: _Config) -> train_mod.TrainConfig:
    return train_mod.TrainConfig(
        consistency_weight=_resolve(args.consistency_weight, cfg, "train",
                                    "consistency_weight", 0.05, float),
        feature_dim=_resolve(args.feature_dim, cfg, "train", "feature_dim", 65536, int),
        learning_rate=_resolve(args.learning_rate, cfg, "train", "learning_rate", 0.1, float),
        epochs=_resolve(args.epochs, cfg, "train", "epochs", 10, int),
        batch_size=_resolve(args.batch_size, cfg, "train", "batch_size", 16, int),
        seed=derive_seed(args.seed, "train"),
        prob_clamp=_resolve(None, cfg, "train", "prob_clamp", 1e-7, float),
        use_synonym_prompt=_resolve(args.use_synonym_prompt, cfg, "train",
                                    "use_synonym_prompt", False, bool),
        synonym_count=_resolve(None, cfg, "train", "synonym_count", 4, int),
        token_dropout=_resolve(args.token_dropout, cfg, "train", "token_dropout", 0.0, float),
    )


def _cmd_train(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    codes_path = _require(_resolve(args.codes, cfg, "paths", "codes", "codes.tsv"), "codes file")
    notes, code_set = corpus.load_corpus(notes_path, codes_path)
    out = _out_dir(args)
    expanded_path = _require(
        _resolve(args.expanded, cfg, "paths", "expanded", out / "expanded.jsonl"),
        "expanded notes file",
    )
    expanded = _load_expanded(expanded_path)
    pairs = []
    for note in notes:
        entry = expanded.get(note.id)
        if entry is None:
            raise ValueError(
                f"no expansion for note {note.id!r}; run the 'expand' command first"
            )
        pairs.append((note, entry))
    config = _train_config(args, cfg)
    result = train_mod.train(pairs, code_set, config)
    train_mod.save_checkpoint(result.params, code_set.code_ids, config, out / "model.bin")
    _write_jsonl(
        out / "loss_trace.jsonl",
        ({"epoch": i, "loss": loss} for i, loss in enumerate(result.loss_trace)),
    )
    print(f"trained on {len(pairs)} notes for {config.epochs} epochs")
    print(f"final epoch loss {result.loss_trace[-1]:.6f}")
    print(f"wrote {out / 'model.bin'} and {out / 'loss_trace.jsonl'}")


def _cmd_score(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    codes_path = _require(_resolve(args.codes, cfg, "paths", "codes", "codes.tsv"), "codes file")
    notes, code_set = corpus.load_corpus(notes_path, codes_path)
    out = _out_dir(args)
    model_path = _require(
        _resolve(args.model, cfg, "paths", "model", out / "model.bin"), "model checkpoint"
    )
    params, code_ids, _config_hash = train_mod.load_checkpoint(model_path)
    if code_ids != list(code_set.code_ids):
        raise ValueError("model checkpoint code ids do not match the codes file")
    feature_dim = params.weights.shape[1]
    candidates_path = _resolve(args.candidates, cfg, "paths", "candidates", None)
    if candidates_path is None:
        matrix = train_mod.score_matrix(params, notes, code_set, feature_dim)
    else:
        candidates = corpus.load_candidates(_require(candidates_path, "candidates file"), code_set)
        chunk_size = _resolve(args.chunk_size, cfg, "eval", "chunk_size",
                              prompts.DEFAULT_CHUNK_SIZE, int)
        displays = prompts.description_displays(code_set)
        rows = np.zeros((len(notes), len(code_set)), dtype=np.float64)
        for i, note in enumerate(notes):
            entry = candidates.get(note.id)
            if entry is None:
                raise ValueError(f"no candidate list for note {note.id!r}")
            full_row = train_mod.score_texts(params, [note.text], feature_dim)[0]
            chunks = prompts.chunk_candidates(entry, displays, chunk_size)
            # Per-code heads make chunked scoring equal to slicing one full
            # pass, so each chunk's scores are gathered then merged by code.
            chunk_scores = [
                [float(full_row[code_set.index_of(code)]) for code, _ in chunk]
                for chunk in chunks
            ]
            for code, score in prompts.merge_chunk_scores(chunks, chunk_scores).items():
                rows[i, code_set.index_of(code)] = score
        matrix = corpus.ScoreMatrix(
            note_ids=[n.id for n in notes], code_ids=list(code_set.code_ids), scores=rows
        )
    corpus.save_scores(matrix, out / "scores.tsv")
    print(f"scored {len(notes)} notes over {len(code_set)} codes")
    print(f"wrote {out / 'scores.tsv'}")


def _threshold_policy(args, cfg: _Config, out: Path) -> coding_eval.ThresholdPolicy:
    policy_path = getattr(args, "threshold_policy", None)
    if policy_path is not None:
        with open(_require(policy_path, "threshold policy file"), "r", encoding="utf-8") as fh:
            return _policy_from_dict(json.load(fh))
    value = _resolve(getattr(args, "threshold", None), cfg, "eval", "threshold", 0.5, float)
    return coding_eval.ThresholdPolicy(kind=coding_eval.THRESHOLD_GLOBAL, global_value=value)


def _cmd_eval_coding(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    codes_path = _require(_resolve(args.codes, cfg, "paths", "codes", "codes.tsv"), "codes file")
    notes, code_set = corpus.load_corpus(notes_path, codes_path)
    out = _out_dir(args)
    scores_path = _require(
        _resolve(args.scores, cfg, "paths", "scores", out / "scores.tsv"), "score matrix"
    )
    scores = corpus.load_scores(scores_path)
    gold = _gold_for_scores(scores, notes, code_set)
    policy = _threshold_policy(args, cfg, out)
    k_list = _resolve(args.k_list, cfg, "eval", "k_list", "5,8")
    ks = [int(k) for k in str(k_list).split(",") if k]
    report = coding_eval.evaluate_coding(scores, gold, policy, ks)
    _write_json(out / "metrics.json", _report_to_dict(report))
    _print_report(report)
    print(f"wrote {out / 'metrics.json'}")


def _cmd_tune_threshold(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    codes_path = _require(_resolve(args.codes, cfg, "paths", "codes", "codes.tsv"), "codes file")
    notes, code_set = corpus.load_corpus(notes_path, codes_path)
    out = _out_dir(args)
    scores_path = _require(
        _resolve(args.scores, cfg, "paths", "scores", out / "scores.tsv"), "score matrix"
    )
    scores = corpus.load_scores(scores_path)
    gold = _gold_for_scores(scores, notes, code_set)
    mode = _resolve(args.mode, cfg, "eval", "threshold_mode", coding_eval.THRESHOLD_GLOBAL)
    policy = coding_eval.tune_threshold(scores, gold, mode)
    _write_json(out / "threshold.json", _policy_to_dict(policy))
    if policy.kind == coding_eval.THRESHOLD_GLOBAL:
        print(f"tuned global threshold {policy.global_value!r}")
    else:
        print(
            f"tuned per-code thresholds for {len(policy.per_code_values)} codes "
            f"(fallback {policy.fallback!r})"
        )
    print(f"wrote {out / 'threshold.json'}")


def _cmd_perm_test(args, cfg: _Config) -> None:
    notes_path = _require(_resolve(args.notes, cfg, "paths", "notes", "notes.jsonl"), "notes file")
    codes_path = _require(_resolve(args.codes, cfg, "paths", "codes", "codes.tsv"), "codes file")
    notes, code_set = corpus.load_corpus(notes_path, codes_path)
    scores_a = corpus.load_scores(_require(args.scores_a, "score matrix A"))
    scores_b = corpus.load_scores(_require(args.scores_b, "score matrix B"))
    gold = _gold_for_scores(scores_a, notes, code_set)
    out = _out_dir(args)
    policy = _threshold_policy(args, cfg, out)
    rounds = _resolve(args.rounds, cfg, "eval", "rounds", 1000, int)
    name, metric = coding_eval.make_metric(
        args.metric, policy=policy, k=args.k, code_ids=scores_a.code_ids
    )
    result = coding_eval.permutation_test(
        scores_a,
        scores_b,
        gold,
        metric,
        statistic_name=name,
        rounds=rounds,
        seed=derive_seed(args.seed, "perm-test"),
    )
    _write_json(out / "perm_test.json", asdict(result))
    print(
        f"{result.statistic_name}: observed diff {result.observed_diff:+.6f}, "
        f"p = {result.p_value:.6f} ({result.rounds} rounds)"
    )
    print(f"wrote {out / 'perm_test.json'}")


def _cmd_report(args, cfg: _Config) -> None:
    reports = []
    for path in args.inputs:
        with open(_require(path, "metrics file"), "r", encoding="utf-8") as fh:
            reports.append(_report_from_dict(json.load(fh)))
    mean = coding_eval.mean_reports(reports)
    out = _out_dir(args)
    record = _report_to_dict(mean)
    record["n_reports"] = len(reports)
    _write_json(out / "mean_metrics.json", record)
    print(f"mean over {len(reports)} runs")
    _print_report(mean)
    print(f"wrote {out / 'mean_metrics.json'}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acrocode",
        description="Acronym expansion and multi-label coding evaluation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI config file; flags override it")
        p.add_argument("--output-dir", default="out", help="directory for outputs")
        p.add_argument("--seed", type=int, default=0, help="base seed for all randomness")

    def notes_and_codes(p: argparse.ArgumentParser) -> None:
        p.add_argument("--notes", help="notes JSONL file")
        p.add_argument("--codes", help="code descriptions TSV file")

    p = sub.add_parser("segment", help="split notes into header-delimited sections")
    common(p)
    p.add_argument("--notes", help="notes JSONL file")
    p.add_argument("--budget", type=int, help="token budget for the reduced notes")
    p.add_argument("--droppable", help="comma-separated droppable section headers")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("expand", help="expand acronyms in notes section by section")
    common(p)
    p.add_argument("--notes", help="notes JSONL file")
    p.add_argument("--mode", choices=["live", "mock", "cache-only"],
                   help="where expansions come from")
    p.add_argument("--dictionary", help="mock dictionary file (abbr<TAB>full form)")
    p.add_argument("--endpoint-url", help="chat-completion endpoint for live mode")
    p.add_argument("--model-name", help="model identifier sent to the endpoint")
    p.add_argument("--cache-dir", help="response cache directory")
    p.add_argument("--max-inflight", type=int, help="concurrent endpoint requests")
    p.add_argument("--temperature", type=float, help="sampling temperature")
    p.set_defaults(func=_cmd_expand)

    p = sub.add_parser("align", help="extract (abbreviation, expansion) pairs")
    common(p)
    p.add_argument("--notes", help="notes JSONL file")
    p.add_argument("--expanded", help="expanded notes JSONL from the expand command")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("eval-expansion", help="score expansion pairs against gold")
    common(p)
    p.add_argument("--pairs", help="pairs JSONL from the align command")
    p.add_argument("--gold", help="gold expansions TSV file")
    p.add_argument("--threshold", type=float, help="lenient similarity threshold")
    p.set_defaults(func=_cmd_eval_expansion)

    p = sub.add_parser("build-prompts", help="render masked scoring prompts")
    common(p)
    notes_and_codes(p)
    p.add_argument("--candidates", help="per-note candidate code TSV file")
    p.add_argument("--chunk-size", type=int, help="codes per prompt")
    p.add_argument("--mask-token", help="mask token to embed in prompts")
    p.add_argument("--use-synonyms", action="store_true",
                   help="display sampled synonyms instead of descriptions")
    p.add_argument("--synonym-count", type=int, default=prompts.DEFAULT_SYNONYM_COUNT,
                   help="synonyms sampled per code")
    p.set_defaults(func=_cmd_build_prompts)

    p = sub.add_parser("train", help="train the reference coding model")
    common(p)
    notes_and_codes(p)
    p.add_argument("--expanded", help="expanded notes JSONL from the expand command")
    p.add_argument("--consistency-weight", type=float,
                   help="weight of the prediction-agreement term")
    p.add_argument("--feature-dim", type=int, help="hashed feature space size")
    p.add_argument("--learning-rate", type=float, help="gradient step size")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--batch-size", type=int, help="examples per gradient step")
    p.add_argument("--use-synonym-prompt", action="store_const", const=True,
                   help="prefix expanded text with sampled code synonyms")
    p.add_argument("--token-dropout", type=float, help="per-branch token drop rate")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score notes with a trained model")
    common(p)
    notes_and_codes(p)
    p.add_argument("--model", help="model checkpoint from the train command")
    p.add_argument("--candidates", help="per-note candidate code TSV file")
    p.add_argument("--chunk-size", type=int, help="candidate codes per scoring chunk")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval-coding", help="compute coding metrics for a score matrix")
    common(p)
    notes_and_codes(p)
    p.add_argument("--scores", help="score matrix TSV from the score command")
    p.add_argument("--threshold", type=float, help="global decision threshold")
    p.add_argument("--threshold-policy", help="threshold policy JSON file")
    p.add_argument("--k-list", help="comma-separated precision@k cutoffs")
    p.set_defaults(func=_cmd_eval_coding)

    p = sub.add_parser("tune-threshold", help="tune decision thresholds on dev scores")
    common(p)
    notes_and_codes(p)
    p.add_argument("--scores", help="dev score matrix TSV from the score command")
    p.add_argument("--mode",
                   choices=[coding_eval.THRESHOLD_GLOBAL, coding_eval.THRESHOLD_PER_CODE],
                   help="tune one shared threshold or one per code")
    p.set_defaults(func=_cmd_tune_threshold)

    p = sub.add_parser("perm-test", help="paired permutation test between two score files")
    common(p)
    notes_and_codes(p)
    p.add_argument("--scores-a", required=True, help="score matrix TSV of system A")
    p.add_argument("--scores-b", required=True, help="score matrix TSV of system B")
    p.add_argument(
        "--metric",
        default="micro-f1",
        choices=["micro-f1", "macro-f1", "micro-auc", "macro-auc", "precision-at-k"],
        help="statistic compared between the systems",
    )
    p.add_argument("--k", type=int, help="cutoff for precision-at-k")
    p.add_argument("--rounds", type=int, help="permutation rounds")
    p.add_argument("--threshold", type=float, help="global decision threshold")
    p.add_argument("--threshold-policy", help="threshold policy JSON file")
    p.set_defaults(func=_cmd_perm_test)

    p = sub.add_parser("report", help="average several metrics files into one report")
    common(p)
    p.add_argument("inputs", nargs="+", help="metrics JSON files to average")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _Config.load(args.config)
        args.func(args, cfg)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        record = {
            "command": getattr(args, "command", None),
            "error": str(exc),
            "type": type(exc).__name__,
        }
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
