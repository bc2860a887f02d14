"""Command-line interface: build-subgraph, ask, eval, inspect."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agent import AgentConfig, AgentError, Providers, render_case, run, trace_to_json
from .embedding import DeterministicEmbedder, EmbeddingCache, HttpEmbedder
from .evaluation import load_dataset, run_eval
from .kg import extract_khop_subgraph, load_kg, load_labels, load_triples, save_kg
from .llm import HttpChatConfig, HttpChatProvider, ScriptedProvider, load_script
from .observation import ObservationParams
from .reflection import STRATEGIES, ReflectionParams


def _build_config(args: argparse.Namespace) -> AgentConfig:
    data: dict = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    config = AgentConfig.from_dict(data) if data else AgentConfig()
    if getattr(args, "max_iterations", None) is not None:
        config.max_iterations = args.max_iterations
    if getattr(args, "strategy", None):
        config.reflection = ReflectionParams(config.reflection.k_max, args.strategy)
    if getattr(args, "depth", None) is not None:
        config.observation = ObservationParams(
            args.depth, config.observation.top_n, config.observation.refine_percent,
            config.observation.global_pool,
        )
    if getattr(args, "seed", None) is not None:
        config.random_seed = args.seed
    if getattr(args, "timeout", None) is not None:
        config.question_timeout = args.timeout or None
    return config


def _build_providers(args: argparse.Namespace) -> Providers:
    if args.provider == "scripted":
        if not args.script:
            raise SystemExit("--script is required with --provider scripted")
        llm = ScriptedProvider(load_script(args.script), sequential=args.script_mode == "sequence")
    else:
        if not args.endpoint or not args.model:
            raise SystemExit("--endpoint and --model are required with --provider live")
        llm = HttpChatProvider(HttpChatConfig(args.endpoint, args.model, args.api_key_env))
    if args.embedder == "http":
        if not args.embed_endpoint or not args.embed_model:
            raise SystemExit("--embed-endpoint and --embed-model are required for http embedder")
        embedder = HttpEmbedder(args.embed_endpoint, args.embed_model, args.api_key_env)
    else:
        embedder = DeterministicEmbedder(seed=args.embed_seed, dimension=args.embed_dim)
    cache = EmbeddingCache(args.embed_cache) if args.embed_cache else EmbeddingCache()
    return Providers(llm=llm, embedder=embedder, cache=cache)


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--provider", choices=("scripted", "live"), default="scripted")
    parser.add_argument("--script", help="script file for the scripted provider")
    parser.add_argument(
        "--script-mode", choices=("sequence", "lookup"), default="sequence",
        help="consume entries in order, or answer with the first match",
    )
    parser.add_argument("--endpoint", help="chat completions endpoint for --provider live")
    parser.add_argument("--model", help="model name for --provider live")
    parser.add_argument("--api-key-env", default="OPENAI_API_KEY")
    parser.add_argument("--embedder", choices=("deterministic", "http"), default="deterministic")
    parser.add_argument("--embed-seed", type=int, default=0)
    parser.add_argument("--embed-dim", type=int, default=64)
    parser.add_argument("--embed-endpoint")
    parser.add_argument("--embed-model")
    parser.add_argument("--embed-cache", help="path for the persistent embedding cache")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with agent settings")
    parser.add_argument("--max-iterations", type=int)
    parser.add_argument("--strategy", choices=STRATEGIES)
    parser.add_argument("--depth", type=int, help="observation depth limit")
    parser.add_argument("--seed", type=int, help="rng seed for the random strategy")
    parser.add_argument("--timeout", type=float, help="per-question timeout in seconds (0 = off)")


def _cmd_build_subgraph(args: argparse.Namespace) -> int:
    kg = load_triples(args.triples)
    if args.labels:
        load_labels(kg, args.labels)
    seeds = [
        line.strip()
        for line in Path(args.seeds).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    subgraph = extract_khop_subgraph(kg, seeds, args.k)
    save_kg(subgraph, args.out)
    print(f"wrote {len(subgraph)} triples for {len(seeds)} seeds to {args.out}")
    return 0


def _cmd_ask(args: argparse.Namespace) -> int:
    kg = load_kg(args.kg)
    config = _build_config(args)
    providers = _build_providers(args)
    entities = [e.strip() for e in args.entities.split(",") if e.strip()]
    try:
        result = run(args.question, entities, kg, providers, config)
    except AgentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.out:
            _write_trace(exc.trace, args.out)
        return 1
    print(render_case(result.trace, kg), end="")
    print(f"halted_by: {result.halted_by}")
    if args.out:
        _write_trace(result.trace, args.out)
    return 0


def _write_trace(trace, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trace.json"
    path.write_text(trace_to_json(trace), encoding="utf-8", newline="\n")
    print(f"trace written to {path}")


def _cmd_eval(args: argparse.Namespace) -> int:
    kg = load_kg(args.kg)
    config = _build_config(args)
    providers = _build_providers(args)
    dataset = load_dataset(args.dataset)
    report = run_eval(
        dataset, kg, providers, config,
        workers=args.workers, out_dir=args.out, match_mode=args.match,
    )
    print(f"total={report.total} hits={report.hits} accuracy={report.accuracy:.4f}")
    for outcome in report.outcomes:
        status = "hit " if outcome.hit else "miss"
        suffix = f" error={outcome.error}" if outcome.error else ""
        print(f"[{status}] q{outcome.index:05d} {outcome.question[:60]}{suffix}")
    if args.out:
        print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    kg = load_kg(args.kg)
    triples = kg.get_neighbors(args.entity, limit=args.limit)
    print(f"{args.entity} ({kg.label_of(args.entity)}): {len(triples)} triples")
    for triple in triples:
        print(
            f"  {triple.to_tsv()}\t"
            f"({kg.label_of(triple.head)}, {kg.label_of(triple.relation)}, "
            f"{kg.label_of(triple.tail)})"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgagent")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build-subgraph", help="extract a k-hop subgraph from a TSV dump")
    build.add_argument("--triples", required=True)
    build.add_argument("--labels")
    build.add_argument("--seeds", required=True, help="file with one entity id per line")
    build.add_argument("--k", type=int, default=3)
    build.add_argument("--out", required=True)
    build.set_defaults(func=_cmd_build_subgraph)

    ask = sub.add_parser("ask", help="answer one question against a KG directory")
    ask.add_argument("--kg", required=True)
    ask.add_argument("--question", required=True)
    ask.add_argument("--entities", required=True, help="comma-separated seed entity ids")
    ask.add_argument("--out", help="directory for the trace file")
    _add_provider_flags(ask)
    _add_config_flags(ask)
    ask.set_defaults(func=_cmd_ask)

    evaluate = sub.add_parser("eval", help="run the evaluation harness over a dataset")
    evaluate.add_argument("--kg", required=True)
    evaluate.add_argument("--dataset", required=True)
    evaluate.add_argument("--workers", type=int, default=1)
    evaluate.add_argument("--out", help="directory for report.json and traces/")
    evaluate.add_argument("--match", choices=("normalized", "strict"), default="normalized")
    _add_provider_flags(evaluate)
    _add_config_flags(evaluate)
    evaluate.set_defaults(func=_cmd_eval)

    inspect = sub.add_parser("inspect", help="show an entity's outgoing triples")
    inspect.add_argument("--kg", required=True)
    inspect.add_argument("--entity", required=True)
    inspect.add_argument("--limit", type=int)
    inspect.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
