"""registryd command line: serve the registry, write snapshots.

Flags mirror the config file (JSON, keys = flag names with underscores);
explicit flags win. REGISTRYD_CONFIG names the config file.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .embed import EmbedderConfig
from .registry import Registry, RegistryConfig
from .server import make_server

CONFIG_ENV = "REGISTRYD_CONFIG"


def _load_config_file(explicit: str | None) -> dict:
    path = explicit or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _merge(file_cfg: dict, args: argparse.Namespace) -> dict:
    merged = dict(file_cfg)
    for key in ("data_dir", "dim", "subspaces", "anchors", "embedder", "remote_endpoint", "listen", "seed", "retrain_at"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _registry_config(merged: dict) -> RegistryConfig:
    dim = int(merged.get("dim", 64))
    kind = merged.get("embedder", "hash")
    embedder = EmbedderConfig(
        kind=kind,
        dim=dim,
        endpoint=merged.get("remote_endpoint", "") if kind == "remote" else "",
    )
    return RegistryConfig(
        dim=dim,
        subspaces=int(merged.get("subspaces", 8)),
        anchors=int(merged.get("anchors", 16)),
        seed=int(merged.get("seed", 0)),
        retrain_at=merged.get("retrain_at"),
        embedder=embedder,
    )


def _open_registry(merged: dict) -> Registry:
    data_dir = merged.get("data_dir")
    if data_dir is None:
        raise SystemExit("--data-dir is required (or data_dir in the config file)")
    data_dir = Path(data_dir)
    if (data_dir / "events.log").exists() or (data_dir / "snapshot" / "manifest.json").exists():
        return Registry.restore(data_dir, config=_registry_config(merged))
    return Registry(config=_registry_config(merged), data_dir=data_dir)


def cmd_serve(args: argparse.Namespace) -> int:
    merged = _merge(_load_config_file(args.config), args)
    registry = _open_registry(merged)
    listen = merged.get("listen", "127.0.0.1:8300")
    server = make_server(registry, listen)
    host, port = server.server_address[:2]
    print(f"registryd listening on http://{host}:{port} "
          f"(agents={registry.agent_count()}, last_seq={registry.state.last_seq})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_snapshot(args: argparse.Namespace) -> int:
    merged = _merge(_load_config_file(args.config), args)
    registry = _open_registry(merged)
    path = registry.snapshot()
    print(f"snapshot written to {path} (last_seq={registry.state.last_seq})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="registryd", description="Agent capability registry daemon")
    parser.add_argument("--config", help=f"config file (JSON); also via ${CONFIG_ENV}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    serve = sub.add_parser("serve", help="serve the registry over HTTP")
    serve.add_argument("--data-dir", dest="data_dir")
    serve.add_argument("--dim", type=int)
    serve.add_argument("--subspaces", type=int)
    serve.add_argument("--anchors", type=int)
    serve.add_argument("--embedder", choices=["hash", "remote"])
    serve.add_argument("--remote-endpoint", dest="remote_endpoint")
    serve.add_argument("--listen")
    serve.add_argument("--seed", type=int)
    serve.add_argument("--retrain-at", dest="retrain_at", type=int)
    serve.set_defaults(func=cmd_serve)

    snapshot = sub.add_parser("snapshot", help="write a snapshot of the registry state")
    snapshot.add_argument("--data-dir", dest="data_dir")
    snapshot.set_defaults(func=cmd_snapshot)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
