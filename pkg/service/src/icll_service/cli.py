"""Run the sidecar: icll-service --port 8080 --lm bigram:42 --embedder hash:16"""

from __future__ import annotations

import argparse
import sys

from .app import make_server
from .config import ServiceConfig


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="icll-service", description=__doc__)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--lm", default="bigram:0", help="LM identifier (bigram:<seed> | none)")
    p.add_argument("--embedder", default="hash:16", help="embedder identifier (hash:<dim> | none)")
    p.add_argument("--device", default="cpu")
    p.add_argument("--max-batch", type=int, default=8, dest="max_batch")
    p.add_argument("--max-context-tokens", type=int, default=4096, dest="max_context_tokens")
    args = p.parse_args(argv)

    try:
        config = ServiceConfig(
            lm_model=args.lm,
            embedding_model=args.embedder,
            device=args.device,
            max_batch_size=args.max_batch,
            max_context_tokens=args.max_context_tokens,
        )
        server = make_server(config, host=args.host, port=args.port)
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port} (lm={args.lm}, embedder={args.embedder})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


if __name__ == "__main__":
    sys.exit(main())
