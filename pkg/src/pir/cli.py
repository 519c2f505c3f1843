"""``pir`` command line: embed, eval, bias, synth, qaf1.

Settings resolve as command-line flags, then the ``--config`` TOML file
(top-level keys, overridden by a ``[<command>]`` table), then ``PIR_<KEY>``
environment variables, then built-in defaults. The effective settings are
printed to stderr at startup.

Exit codes: 0 success, 1 input/validation error, 2 provider/IO error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    CORPUS_FILE,
    QRELS_FILE,
    QUERIES_FILE,
    is_root_only,
    load_bundle_dir,
    strip_perspective,
    write_task_bundle,
)
from .embedding import BundleStores, EmbeddingCache, ProviderConfig, embed_bundle, make_provider, store_write
from .errors import DimensionMismatch, InputError, MissingEmbedding, PIRError, ProviderError
from .evaluation import (
    MODES,
    bias_distribution,
    evaluate_method,
    generate_synthetic_benchmark,
    qa_f1,
    render_report,
    report_json,
)
from .retrieval import build_index
from .scoring import ScoringMethod

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger("pir")

EXIT_OK, EXIT_INPUT, EXIT_PROVIDER = 0, 1, 2
EMBEDDINGS_FILE = "embeddings.pire"

DEFAULTS = {
    "model": "",
    "batch_size": 32,
    "max_inflight": 4,
    "timeout": 30.0,
    "methods": "baseline",
    "k": "5,10",
    "threads": 1,
    "seed": 0,
    "label_field": "stance",
    "mode": "gold-hit",
    "roots": 100,
    "dim": 64,
    "gamma": 3.0,
    "rotation": "random",
}
TYPES = {
    "batch_size": int,
    "max_inflight": int,
    "timeout": float,
    "threads": int,
    "seed": int,
    "roots": int,
    "dim": int,
    "gamma": float,
    "k": str,
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import matplotlib

    return {
        "pir": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "matplotlib": matplotlib.__version__,
    }


def _write_manifest(directory, payload) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "MANIFEST.json"
    payload = {**payload, "versions": _versions()}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def _input_hashes(paths) -> dict:
    return {str(p): _sha256(p) for p in paths if Path(p).is_file()}


# ---------------------------------------------------------------------------
# settings


def _load_config(path, command) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    merged = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    merged.update(raw.get(command, {}))
    return {k.replace("-", "_"): v for k, v in merged.items()}


def resolve(args, keys) -> dict:
    config = _load_config(getattr(args, "config", None), args.command)
    out = {}
    for key in keys:
        value = getattr(args, key, None)
        if value is None and key in config:
            value = config[key]
        if value is None:
            env = os.environ.get(f"PIR_{key.upper()}")
            if env is not None:
                value = TYPES.get(key, str)(env)
        if value is None:
            value = DEFAULTS.get(key)
        out[key] = value
    return out


def _as_list(value):
    if value is None:
        return []
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    if isinstance(value, (list, tuple)):
        return [str(v).strip() for v in value]
    return [str(value)]


def _print_settings(command, settings):
    shown = {k: (str(v) if isinstance(v, Path) else v) for k, v in settings.items()}
    print(f"pir {command}: " + json.dumps(shown, sort_keys=True, default=str), file=sys.stderr)


def _require_files(paths):
    for path in paths:
        if not Path(path).is_file():
            raise UsageError(f"missing input file: {path}")


def _bundle_files(directory):
    directory = Path(directory)
    return [directory / QUERIES_FILE, directory / CORPUS_FILE, directory / QRELS_FILE]


# ---------------------------------------------------------------------------
# commands


def cmd_embed(args) -> int:
    s = resolve(args, ["bundle", "provider", "model", "batch_size", "max_inflight", "timeout", "out", "cache_dir"])
    _print_settings("embed", s)
    if not s["bundle"]:
        raise UsageError("--bundle is required")
    if not s["provider"]:
        raise UsageError("--provider is required")
    _require_files(_bundle_files(s["bundle"]))
    bundle = load_bundle_dir(s["bundle"])
    out = Path(s["out"] or Path(s["bundle"]) / "emb")

    try:
        config = ProviderConfig.parse(
            s["provider"],
            model_id=s["model"],
            batch_size=int(s["batch_size"]),
            max_inflight=int(s["max_inflight"]),
            timeout=float(s["timeout"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if config.kind == "file" and not Path(config.path).is_file():
        raise ProviderError(f"embedding file not found: {config.path}")

    cache = None if args.no_cache else EmbeddingCache(s["cache_dir"])
    provider = make_provider(config)
    try:
        stores = embed_bundle(bundle, provider, cache, config.batch_size, config.max_inflight)
    except (MissingEmbedding, DimensionMismatch) as exc:
        raise ProviderError(f"{provider.provider_id}: {exc}") from None
    finally:
        provider.close()
    written = stores.write(out)

    inputs = _bundle_files(s["bundle"])
    if config.kind == "file":
        inputs.append(Path(config.path))
    _write_manifest(
        out,
        {
            "command": "embed",
            "settings": {k: str(v) if v is not None else None for k, v in s.items()},
            "inputs": _input_hashes(inputs),
            "outputs": {p.name: _sha256(p) for p in written},
            "provider": {"id": provider.provider_id, "model": provider.model_id, "dim": stores.dim},
        },
    )
    if args.provider_stats:
        stats = {
            "provider_calls": provider.calls,
            "cache_hits": cache.hits if cache else 0,
            "cache_misses": cache.misses if cache else 0,
        }
        print(json.dumps(stats, sort_keys=True))
    print(f"wrote {len(written)} stores to {out}", file=sys.stderr)
    return EXIT_OK


def _parse_methods(value):
    try:
        methods = [ScoringMethod.parse(m) for m in _as_list(value)]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not methods:
        raise UsageError("at least one method is required")
    return list(dict.fromkeys(methods))


def _parse_ks(value):
    try:
        ks = [int(k) for k in _as_list(value)]
    except ValueError:
        raise UsageError(f"--k must be comma-separated integers, got {value!r}") from None
    if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise UsageError("--k must be positive, strictly increasing cutoffs")
    return ks


def _load_stores(emb_dir, need_vectors):
    if not need_vectors and not Path(emb_dir).is_dir():
        return None
    return BundleStores.read(emb_dir)


def cmd_eval(args) -> int:
    s = resolve(args, ["bundle", "emb", "methods", "k", "out", "threads", "seed"])
    if args.method:
        s["methods"] = args.method
    _print_settings("eval", s)
    bundles = _as_list(s["bundle"])
    if not bundles:
        raise UsageError("--bundle is required")
    embs = _as_list(s["emb"]) or [str(Path(b) / "emb") for b in bundles]
    if len(embs) != len(bundles):
        raise UsageError("give one --emb per --bundle (or none)")
    methods = _parse_methods(s["methods"])
    ks = _parse_ks(s["k"])
    threads = max(1, int(s["threads"]))
    out = Path(s["out"] or "pir-eval")
    need_vectors = any(not m.is_lexical for m in methods)

    reports, tasks, inputs = [], [], []
    exit_code = EXIT_OK
    for bundle_dir, emb_dir in zip(bundles, embs):
        entry = {"bundle": bundle_dir, "emb": emb_dir, "status": "ok"}
        tasks.append(entry)
        files = _bundle_files(bundle_dir)
        inputs += files
        try:
            _require_files(files)
            bundle = load_bundle_dir(bundle_dir)
            entry["task"] = bundle.task_name
            stores = _load_stores(emb_dir, need_vectors)
            if stores is not None:
                inputs += [Path(emb_dir) / f for f in sorted(os.listdir(emb_dir)) if f.endswith(".pire")]
            index = build_index(bundle.corpus, stores.corpus if stores else None)
        except (InputError, UsageError) as exc:
            entry.update(status="failed", error=str(exc))
            exit_code = max(exit_code, EXIT_INPUT)
            log.error("%s: %s", bundle_dir, exc)
            continue
        except (ProviderError, OSError) as exc:
            entry.update(status="failed", error=str(exc))
            exit_code = EXIT_PROVIDER
            log.error("%s: %s", bundle_dir, exc)
            continue

        entry["error_counts"] = {}
        for method in methods:
            try:
                report = evaluate_method(bundle, index, method, ks, stores, threads=threads)
            except PIRError as exc:
                entry["error_counts"][method.value] = {type(exc).__name__: len(bundle.queries)}
                entry["status"] = "failed"
                exit_code = max(exit_code, EXIT_INPUT)
                continue
            if not args.timing:
                report.runtime_ms = 0
            if report.error_counts:
                entry["error_counts"][method.value] = report.error_counts
                entry["status"] = "failed"
                exit_code = max(exit_code, EXIT_INPUT)
            reports.append(report)

    reports_dir = out / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for rep in reports:
        path = reports_dir / f"{rep.task}.{rep.method.value}.json"
        path.write_bytes(report_json(rep, include_timing=args.timing))
        outputs.append(path)
    if reports:
        for name, fmt in (("all.csv", "csv"), ("all.json", "json"), ("table.txt", "table")):
            path = reports_dir / name
            path.write_bytes(render_report(reports, fmt, include_timing=args.timing))
            outputs.append(path)
        if not args.no_figures:
            from .plotting import plot_method_comparison

            for task in dict.fromkeys(r.task for r in reports):
                plot_method_comparison([r for r in reports if r.task == task], out / "figures" / f"{task}.p_recall.png")
        sys.stdout.write(render_report(reports, "table").decode("utf-8"))

    _write_manifest(
        out,
        {
            "command": "eval",
            "settings": {"methods": [m.value for m in methods], "k": ks, "seed": s["seed"]},
            "inputs": _input_hashes(inputs),
            "outputs": {str(p.relative_to(out)): _sha256(p) for p in outputs},
            "tasks": tasks,
        },
    )
    return exit_code


def cmd_bias(args) -> int:
    s = resolve(args, ["bundle", "emb", "method", "k", "label_field", "mode", "out", "threads"])
    s["method"] = s["method"] or "baseline"
    _print_settings("bias", s)
    if not s["bundle"]:
        raise UsageError("--bundle is required")
    method = _parse_methods(s["method"])[0]
    ks = _parse_ks(s["k"])
    if s["mode"] not in MODES:
        raise UsageError(f"--mode must be one of {', '.join(MODES)}")
    _require_files(_bundle_files(s["bundle"]))
    bundle = load_bundle_dir(s["bundle"])
    roots = bundle if is_root_only(bundle) else strip_perspective(bundle)
    emb = s["emb"] or str(Path(s["bundle"]) / "emb")
    stores = _load_stores(emb, not method.is_lexical)
    index = build_index(bundle.corpus, stores.corpus if stores else None)

    tables = []
    for k in ks:
        table = bias_distribution(roots, index, method, k, s["label_field"], s["mode"], stores, int(s["threads"]))
        tables.append(table.to_dict())
    payload = {"task": bundle.task_name, "method": method.value, "tables": tables}
    text = json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    sys.stdout.write(text)
    if s["out"]:
        out = Path(s["out"])
        path = out / "reports" / f"{bundle.task_name}.{method.value}.bias.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        if not args.no_figures:
            from .evaluation import BiasTable
            from .plotting import plot_bias

            for t in tables:
                bt = BiasTable(t["label_field"], t["mode"], t["k"], t["portions"], t["support_counts"], t["support"])
                plot_bias(bt, out / "figures" / f"{bundle.task_name}.{method.value}.bias@{t['k']}.png")
        _write_manifest(
            out,
            {
                "command": "bias",
                "settings": {k: v for k, v in s.items() if k != "out"},
                "inputs": _input_hashes(_bundle_files(s["bundle"])),
                "outputs": {str(path.relative_to(out)): _sha256(path)},
            },
        )
    return EXIT_OK


def cmd_synth(args) -> int:
    s = resolve(args, ["seed", "roots", "dim", "gamma", "rotation", "out"])
    _print_settings("synth", s)
    if not s["out"]:
        raise UsageError("--out is required")
    bundle, stores = generate_synthetic_benchmark(
        int(s["seed"]), int(s["roots"]), int(s["dim"]), float(s["gamma"]), rotation=s["rotation"]
    )
    out = Path(s["out"])
    paths = list(write_task_bundle(bundle, out))
    emb = out / EMBEDDINGS_FILE
    store_write(stores.combined(), emb)
    paths.append(emb)
    _write_manifest(
        out,
        {
            "command": "synth",
            "settings": {k: v for k, v in s.items() if k != "out"},
            "outputs": {p.name: _sha256(p) for p in paths},
        },
    )
    print(
        f"wrote {len(bundle.queries)} queries, {len(bundle.corpus)} docs and {EMBEDDINGS_FILE} to {out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _read_jsonl_records(path, text_key):
    records = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("id"), str):
                raise UsageError(f"{path}:{line_no}: expected an object with a string 'id'")
            value = obj.get(text_key)
            if text_key == "text" and not isinstance(value, str):
                raise UsageError(f"{path}:{line_no}: 'text' must be a string")
            if text_key == "texts" and (
                not isinstance(value, list) or not value or not all(isinstance(v, str) for v in value)
            ):
                raise UsageError(f"{path}:{line_no}: 'texts' must be a non-empty list of strings")
            if obj["id"] in records:
                raise UsageError(f"{path}:{line_no}: duplicate id {obj['id']!r}")
            records[obj["id"]] = value
    return records


def cmd_qaf1(args) -> int:
    _require_files([args.pred, args.gold])
    preds = _read_jsonl_records(args.pred, "text")
    golds = _read_jsonl_records(args.gold, "texts")
    missing = [i for i in preds if i not in golds]
    if missing:
        raise UsageError(f"prediction id {missing[0]!r} has no gold entry")
    lines = []
    scores = []
    for pid, text in preds.items():
        value = qa_f1(text, golds[pid])
        scores.append(value)
        lines.append(json.dumps({"id": pid, "qa_f1": value}, ensure_ascii=False))
    mean = sum(scores) / len(scores) if scores else 0.0
    lines.append(json.dumps({"mean": mean, "count": len(scores)}))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="pir", description="Perspective-aware retrieval engine and evaluation harness.")
    parser.add_argument("--version", action="version", version=f"pir {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True

    def common(p):
        p.add_argument("--config", help="TOML settings file")

    p = sub.add_parser("embed", help="embed a bundle into four .pire stores")
    common(p)
    p.add_argument("--bundle", help="bundle directory (queries.jsonl, corpus.jsonl, qrels.tsv)")
    p.add_argument("--provider", help="file:<path.pire> or http(s)://host[:port]")
    p.add_argument("--model", help="model id sent to the provider")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-inflight", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--out", help="output directory (default: <bundle>/emb)")
    p.add_argument("--cache-dir", help="embedding cache directory (default: $PIR_CACHE_DIR)")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--provider-stats", action="store_true", help="print provider call counts as JSON")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="evaluate scoring methods on one or more bundles")
    common(p)
    p.add_argument("--bundle", action="append", help="bundle directory (repeatable)")
    p.add_argument("--emb", action="append", help="store directory per bundle (default: <bundle>/emb)")
    p.add_argument("--methods", help="comma-separated methods, e.g. baseline,pap,pap+")
    p.add_argument("--method", help="alias of --methods")
    p.add_argument("--k", help="comma-separated cutoffs, e.g. 5,10")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int, help="recorded in the manifest")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtime in reports")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bias", help="label distribution of root-query retrieval")
    common(p)
    p.add_argument("--bundle")
    p.add_argument("--emb")
    p.add_argument("--method")
    p.add_argument("--k")
    p.add_argument("--label-field")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("synth", help="generate the seeded synthetic benchmark")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--roots", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rotation", choices=("random", "identity"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("qaf1", help="max uni-gram overlap between predictions and golds")
    p.add_argument("--pred", required=True, help='JSONL of {"id", "text"}')
    p.add_argument("--gold", required=True, help='JSONL of {"id", "texts": [...]}')
    p.add_argument("--out")
    p.set_defaults(func=cmd_qaf1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, InputError, ValueError) as exc:
        print(f"pir {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ProviderError, OSError) as exc:
        print(f"pir {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except PIRError as exc:
        print(f"pir {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER if args.command == "embed" else EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
