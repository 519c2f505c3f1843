"""Task bundles: perspective queries, corpus documents and gold mappings.

A bundle on disk is a directory (or three explicit paths) holding::

    queries.jsonl   {"query_id","root_id","root_text","perspective_text","query_text","task"}
    corpus.jsonl    {"doc_id","text","meta":{str: str}}
    qrels.tsv       query_id<TAB>doc_id<TAB>1

Loading validates referential integrity and, in benchmark mode, the
mutual-exclusivity contract between queries that share a root.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import ExclusivityError, IntegrityError, ParseError, UnknownField

QUERY_FIELDS = ("query_id", "root_id", "root_text", "perspective_text", "query_text", "task")
QUERIES_FILE = "queries.jsonl"
CORPUS_FILE = "corpus.jsonl"
QRELS_FILE = "qrels.tsv"

IMBALANCE_RATIO = 1.05


class DegradedGroupWarning(UserWarning):
    """A root group has fewer than two perspectives attached."""


@dataclass(frozen=True)
class PerspectiveQuery:
    query_id: str
    root_id: str
    root_text: str
    perspective_text: str
    query_text: str
    task: str

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in QUERY_FIELDS}


@dataclass(frozen=True)
class RootQueryGroup:
    root_id: str
    query_ids: tuple[str, ...]


@dataclass(frozen=True)
class CorpusDoc:
    doc_id: str
    text: str
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def __hash__(self):
        return hash((self.doc_id, self.text, tuple(sorted(self.meta.items()))))

    def __eq__(self, other):
        if not isinstance(other, CorpusDoc):
            return NotImplemented
        return (self.doc_id, self.text, dict(self.meta)) == (
            other.doc_id,
            other.text,
            dict(other.meta),
        )

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "text": self.text, "meta": dict(self.meta)}


@dataclass(frozen=True)
class QrelSet:
    entries: Mapping[str, frozenset[str]]

    def __post_init__(self):
        frozen = {qid: frozenset(docs) for qid, docs in self.entries.items()}
        object.__setattr__(self, "entries", MappingProxyType(frozen))

    def _judged(self) -> dict:
        # an empty gold set carries no judgement and is not serialized
        return {qid: docs for qid, docs in self.entries.items() if docs}

    def __eq__(self, other):
        if not isinstance(other, QrelSet):
            return NotImplemented
        return self._judged() == other._judged()

    def __hash__(self):
        return hash(tuple(sorted((q, tuple(sorted(d))) for q, d in self._judged().items())))

    def gold(self, query_id: str) -> frozenset[str]:
        return self.entries.get(query_id, frozenset())

    def __contains__(self, query_id):
        return query_id in self.entries


@dataclass(frozen=True)
class TaskBundle:
    task_name: str
    queries: tuple[PerspectiveQuery, ...]
    groups: tuple[RootQueryGroup, ...]
    corpus: tuple[CorpusDoc, ...]
    qrels: QrelSet
    degraded: bool = False

    @property
    def query_by_id(self) -> dict[str, PerspectiveQuery]:
        return {q.query_id: q for q in self.queries}

    @property
    def doc_by_id(self) -> dict[str, CorpusDoc]:
        return {d.doc_id: d for d in self.corpus}


@dataclass(frozen=True)
class BalanceReport:
    label_field: str
    counts: dict[str, int]
    balanced: bool

    @property
    def ratio(self) -> float:
        values = list(self.counts.values())
        return max(values) / min(values)


# ---------------------------------------------------------------------------
# parsing


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(path, line_no, "expected a JSON object")
            yield line_no, obj


def _require_str(obj, key, path, line_no, allow_empty=False) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise ParseError(path, line_no, f"field {key!r} must be a string")
    if not allow_empty and not value:
        raise ParseError(path, line_no, f"field {key!r} must be non-empty")
    return value


def read_queries(path, benchmark: bool = True) -> list[PerspectiveQuery]:
    path = Path(path)
    queries = []
    for line_no, obj in _read_jsonl(path):
        values = {}
        for key in QUERY_FIELDS:
            # root-only bundles legitimately carry no perspective
            allow_empty = key == "perspective_text" and not benchmark
            values[key] = _require_str(obj, key, path, line_no, allow_empty=allow_empty)
        queries.append(PerspectiveQuery(**values))
    return queries


def read_corpus(path) -> list[CorpusDoc]:
    path = Path(path)
    docs = []
    for line_no, obj in _read_jsonl(path):
        doc_id = _require_str(obj, "doc_id", path, line_no)
        text = _require_str(obj, "text", path, line_no)
        meta = obj.get("meta", {})
        if not isinstance(meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
        ):
            raise ParseError(path, line_no, "field 'meta' must map strings to strings")
        docs.append(CorpusDoc(doc_id, text, meta))
    return docs


def read_qrels(path) -> dict[str, set[str]]:
    path = Path(path)
    entries: dict[str, set[str]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[0] or not parts[1]:
                raise ParseError(path, line_no, "expected query_id<TAB>doc_id<TAB>relevance")
            try:
                rel = int(parts[2])
            except ValueError:
                raise ParseError(path, line_no, f"relevance {parts[2]!r} is not an integer") from None
            if rel > 0:
                entries.setdefault(parts[0], set()).add(parts[1])
    return entries


# ---------------------------------------------------------------------------
# assembly and validation


def group_by_root(queries: Iterable[PerspectiveQuery]) -> tuple[RootQueryGroup, ...]:
    members: dict[str, list[str]] = {}
    for q in queries:
        members.setdefault(q.root_id, []).append(q.query_id)
    return tuple(RootQueryGroup(root, tuple(ids)) for root, ids in sorted(members.items()))


def build_bundle(
    task_name: str,
    queries: Iterable[PerspectiveQuery],
    corpus: Iterable[CorpusDoc],
    qrels: Mapping[str, Iterable[str]],
    benchmark: bool = True,
) -> TaskBundle:
    """Assemble and validate a bundle from in-memory records.

    With ``benchmark=False`` the exclusivity check and the group-size
    warning are skipped, which is what root-only derived bundles need.
    """
    queries = tuple(queries)
    corpus = tuple(corpus)

    seen = set()
    for q in queries:
        if q.query_id in seen:
            raise IntegrityError(f"duplicate query_id {q.query_id!r}")
        seen.add(q.query_id)
    doc_ids = set()
    for d in corpus:
        if d.doc_id in doc_ids:
            raise IntegrityError(f"duplicate doc_id {d.doc_id!r}")
        doc_ids.add(d.doc_id)

    for qid, docs in qrels.items():
        if qid not in seen:
            raise IntegrityError(f"qrels reference unknown query_id {qid!r}")
        for did in docs:
            if did not in doc_ids:
                raise IntegrityError(f"qrels reference unknown doc_id {did!r} (query {qid!r})")
    qrel_set = QrelSet(dict(qrels))

    roots_text: dict[str, str] = {}
    for q in queries:
        if roots_text.setdefault(q.root_id, q.root_text) != q.root_text:
            raise IntegrityError(f"root {q.root_id!r} has conflicting root_text values")

    groups = group_by_root(queries)
    degraded = False
    if benchmark:
        for g in groups:
            _check_exclusive(g, qrel_set)
        small = [g.root_id for g in groups if len(g.query_ids) < 2]
        if small:
            degraded = True
            warnings.warn(
                f"{len(small)} root group(s) have fewer than two perspectives "
                f"(first: {small[0]!r}); running in degraded mode",
                DegradedGroupWarning,
                stacklevel=2,
            )

    return TaskBundle(task_name, queries, groups, corpus, qrel_set, degraded)


def _check_exclusive(group: RootQueryGroup, qrels: QrelSet) -> None:
    owner: dict[str, str] = {}
    for qid in group.query_ids:
        for did in sorted(qrels.gold(qid)):
            if did in owner:
                raise ExclusivityError(group.root_id, (owner[did], qid), [did])
            owner[did] = qid


def _task_name(queries, fallback: str) -> str:
    tasks = sorted({q.task for q in queries})
    if len(tasks) > 1:
        raise IntegrityError(f"queries file mixes tasks: {', '.join(tasks)}")
    return tasks[0] if tasks else fallback


def load_task_bundle(queries_path, corpus_path, qrels_path, benchmark: bool = True) -> TaskBundle:
    """Load and validate a bundle from its three files.

    Raises:
        ParseError: a line is malformed (message carries path and line).
        IntegrityError: an identifier is duplicated or dangling.
        ExclusivityError: two queries of one root share a gold doc.
    """
    queries = read_queries(queries_path, benchmark=benchmark)
    corpus = read_corpus(corpus_path)
    qrels = read_qrels(qrels_path)
    name = _task_name(queries, Path(queries_path).resolve().parent.name)
    return build_bundle(name, queries, corpus, qrels, benchmark=benchmark)


def bundle_paths(directory) -> tuple[Path, Path, Path]:
    directory = Path(directory)
    return directory / QUERIES_FILE, directory / CORPUS_FILE, directory / QRELS_FILE


def load_bundle_dir(directory, benchmark: bool = True) -> TaskBundle:
    return load_task_bundle(*bundle_paths(directory), benchmark=benchmark)


# ---------------------------------------------------------------------------
# serialization


def _json_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def write_task_bundle(bundle: TaskBundle, directory) -> tuple[Path, Path, Path]:
    """Write the bundle in canonical form (record order kept, qrels sorted)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    qpath, cpath, rpath = bundle_paths(directory)
    with open(qpath, "w", encoding="utf-8", newline="\n") as fh:
        for q in bundle.queries:
            fh.write(_json_line(q.to_dict()))
    with open(cpath, "w", encoding="utf-8", newline="\n") as fh:
        for d in bundle.corpus:
            obj = d.to_dict()
            obj["meta"] = dict(sorted(obj["meta"].items()))
            fh.write(_json_line(obj))
    with open(rpath, "w", encoding="utf-8", newline="\n") as fh:
        for q in bundle.queries:
            for did in sorted(bundle.qrels.gold(q.query_id)):
                fh.write(f"{q.query_id}\t{did}\t1\n")
    return qpath, cpath, rpath


# ---------------------------------------------------------------------------
# derived views


def validate_balance(bundle: TaskBundle, label_field: str) -> BalanceReport:
    """Count corpus docs per value of ``label_field``.

    The corpus counts as balanced when the largest and smallest label counts
    differ by a ratio of at most 1.05.
    """
    counts = Counter(d.meta[label_field] for d in bundle.corpus if label_field in d.meta)
    if not counts:
        raise UnknownField(label_field)
    counts = dict(sorted(counts.items()))
    balanced = max(counts.values()) / min(counts.values()) <= IMBALANCE_RATIO
    return BalanceReport(label_field, counts, balanced)


def strip_perspective(bundle: TaskBundle) -> TaskBundle:
    """Collapse each root group into a single perspective-free query.

    The derived query reuses ``root_id`` as its id and ``root_text`` as its
    text; its gold set is the union of the member gold sets.
    """
    by_id = bundle.query_by_id
    queries = []
    qrels = {}
    for group in bundle.groups:
        first = by_id[group.query_ids[0]]
        queries.append(
            PerspectiveQuery(
                query_id=group.root_id,
                root_id=group.root_id,
                root_text=first.root_text,
                perspective_text="",
                query_text=first.root_text,
                task=first.task,
            )
        )
        gold = set()
        for qid in group.query_ids:
            gold |= bundle.qrels.gold(qid)
        if gold:
            qrels[group.root_id] = gold
    return build_bundle(bundle.task_name, queries, bundle.corpus, qrels, benchmark=False)


def is_root_only(bundle: TaskBundle) -> bool:
    return all(q.perspective_text == "" for q in bundle.queries)
