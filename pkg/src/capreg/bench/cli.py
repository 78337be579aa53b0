"""bench command line: corpus generation, method comparison runs, churn runs."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..profile import to_document
from .corpus import default_taxonomy, generate_corpus, load_taxonomy, save_taxonomy
from .runner import ChurnConfig, ExperimentConfig, churn_simulation, run_experiment


def cmd_corpus(args: argparse.Namespace) -> int:
    taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else default_taxonomy()
    corpus = generate_corpus(taxonomy, args.n, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "agents.jsonl", "w", encoding="utf-8") as fh:
        for agent in corpus.agents:
            fh.write(json.dumps(to_document(agent), sort_keys=True) + "\n")
    with open(out / "queries.jsonl", "w", encoding="utf-8") as fh:
        for query in corpus.queries:
            fh.write(
                json.dumps(
                    {
                        "text": query.text,
                        "target_agent_id": query.target_agent_id,
                        "relevance": query.relevance,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    save_taxonomy(taxonomy, out / "taxonomy.json")
    print(f"wrote {len(corpus.agents)} agents and {len(corpus.queries)} queries to {out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()) if args.config else {})
    records = run_experiment(cfg, out_csv=args.out)
    for record in records:
        row = record.as_row()
        print(
            f"{row['method']:>6} n={row['n_agents']:>5} seed={row['seed']} "
            f"top1={row['top1']} mrr10={row['mrr10']} ndcg10={row['ndcg10']} recall5={row['recall5']}"
        )
    print(f"csv written to {args.out}")
    return 0


def cmd_churn(args: argparse.Namespace) -> int:
    cfg = ChurnConfig.from_dict(json.loads(Path(args.config).read_text()) if args.config else {})
    rows = churn_simulation(cfg, out_csv=args.out)
    finals = {}
    for row in rows:
        finals[(row.replay, row.seed)] = row.retention_top1
    for replay in (True, False):
        values = [v for (r, _), v in finals.items() if r == replay]
        if values:
            print(f"replay={'on' if replay else 'off'} final retention mean={sum(values) / len(values):.4f}")
    print(f"csv written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Discovery benchmark harness")
    sub = parser.add_subparsers(dest="cmd", required=True)

    corpus = sub.add_parser("corpus", help="generate a labeled synthetic corpus")
    corpus.add_argument("--taxonomy", help="taxonomy JSON file (default: built-in)")
    corpus.add_argument("--n", type=int, required=True, help="number of agents")
    corpus.add_argument("--seed", type=int, default=0)
    corpus.add_argument("--out", required=True, help="output directory")
    corpus.set_defaults(func=cmd_corpus)

    run = sub.add_parser("run", help="compare retrieval methods")
    run.add_argument("--config", help="experiment config JSON")
    run.add_argument("--out", required=True, help="output CSV")
    run.set_defaults(func=cmd_run)

    churn = sub.add_parser("churn", help="agent churn simulation with continual training")
    churn.add_argument("--config", help="churn config JSON")
    churn.add_argument("--out", required=True, help="output CSV")
    churn.set_defaults(func=cmd_churn)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
