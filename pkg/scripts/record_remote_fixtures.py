#!/usr/bin/env python3
"""Record wire-protocol exchanges from a live model server.

The queries file is a JSON array of {"path": "/v1/logprobs"|"/v1/score",
"payload": {...}} objects; responses are captured byte-for-byte so a
ReplayServer can stand in for the live server later:

    python scripts/record_remote_fixtures.py http://127.0.0.1:8777 \
        queries.json --out fixtures.json
"""

import argparse
import json
from pathlib import Path

from dynkg.remote import record_exchanges, save_fixtures


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("url", help="base URL of the live server")
    parser.add_argument("queries", help="JSON file of {path, payload} queries")
    parser.add_argument("--out", default="remote_fixtures.json")
    args = parser.parse_args()

    spec = json.loads(Path(args.queries).read_text())
    fixtures = record_exchanges(args.url, [(q["path"], q["payload"]) for q in spec])
    save_fixtures(fixtures, args.out)
    print(f"recorded {len(fixtures)} exchanges to {args.out}")


if __name__ == "__main__":
    main()
