"""encoder-sidecar command line."""
from __future__ import annotations

import argparse
import sys

from .service import DEFAULT_MODEL, Encoder, make_server


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="encoder-sidecar", description="Sentence-encoder /encode service")
    parser.add_argument("--model", default=DEFAULT_MODEL, help="sentence-transformers model id")
    parser.add_argument("--listen", default="127.0.0.1:8600", help="host:port to bind")
    args = parser.parse_args(argv)

    try:
        encoder = Encoder(args.model)
    except Exception as exc:
        print(f"failed to load model {args.model!r}: {exc}", file=sys.stderr)
        return 1
    server = make_server(encoder, args.listen)
    host, port = server.server_address[:2]
    print(f"encoder-sidecar serving {encoder.model_id} (dim={encoder.dim}) on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
