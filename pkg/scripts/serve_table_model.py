#!/usr/bin/env python3
"""Serve a table model over the HTTP wire protocol.

Useful as a stand-in model server for integration tests and as a reference
for implementing servers backed by real neural knowledge models:

    python scripts/serve_table_model.py tests/fixtures/tiny_model.json --port 8777
"""

import argparse

from dynkg.model import TableModel
from dynkg.remote import TableModelServer


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("model", help="table model JSON file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8777)
    args = parser.parse_args()

    model = TableModel.load(args.model)
    server = TableModelServer(model, host=args.host, port=args.port)
    print(f"serving {args.model} at {server.url} (POST /v1/logprobs, /v1/score)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
