"""HTTP+JSON wire protocol for remote knowledge models.

The engine is a client of model servers.  Two endpoints:

* ``POST /v1/logprobs``  {context, relation, prefix: [str]}
  -> {logprobs: {token: float}}
* ``POST /v1/score``     {context, relation, target: [str]}
  -> {token_logprobs: [float]}

Log-probabilities, never raw probabilities, cross the wire; numbers are
IEEE doubles in full round-trip precision.  Each request is independent:
servers must not carry state between requests.

This module also ships a reference server that exposes any table model
over the protocol (used by the conformance tests and as a template for
real model servers), plus a record/replay pair for offline fixtures.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import requests

from .errors import (
    BackendError,
    RemoteNormalizationError,
    RemoteProtocolError,
    RemoteTransportError,
)
from .model import (
    ConditionalQuery,
    KnowledgeModel,
    REMOTE_NORM_TOL,
    Relation,
    TableModel,
    Token,
    check_distribution,
    detokenize,
    tokenize,
)

LOGPROBS_PATH = "/v1/logprobs"
SCORE_PATH = "/v1/score"


def canonical_request(payload: dict) -> str:
    """Stable serialization used to key recorded exchanges."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class RemoteModel(KnowledgeModel):
    """Client for a model server speaking the wire protocol.

    The default end token is advisory: remote decoders terminate on
    whatever end token their server reports in distributions.  Uses one
    request per call and no shared session, so concurrent use from multiple
    workers is safe.
    """

    def __init__(self, base_url: str, end_token: Token = "</s>", timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.end_token = end_token
        self.timeout = timeout

    def _post(self, path: str, payload: dict) -> dict:
        url = self.base_url + path
        try:
            response = requests.post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise RemoteTransportError(f"POST {url} failed: {exc}") from exc
        if response.status_code != 200:
            raise RemoteProtocolError(
                f"POST {url} returned {response.status_code}: {response.text[:200]}"
            )
        try:
            doc = response.json()
        except ValueError as exc:
            raise RemoteProtocolError(f"POST {url} returned non-JSON body") from exc
        if not isinstance(doc, dict):
            raise RemoteProtocolError(f"POST {url} returned {type(doc).__name__}, expected object")
        return doc

    def next_token_logprobs(self, query: ConditionalQuery) -> dict[Token, float]:
        payload = {
            "context": detokenize(query.context_tokens),
            "relation": query.relation.value if query.relation else None,
            "prefix": list(query.prefix),
        }
        doc = self._post(LOGPROBS_PATH, payload)
        if "logprobs" not in doc or not isinstance(doc["logprobs"], dict):
            raise RemoteProtocolError("response missing 'logprobs' object")
        try:
            dist = {str(tok): float(lp) for tok, lp in doc["logprobs"].items()}
        except (TypeError, ValueError) as exc:
            raise RemoteProtocolError(f"non-numeric log-probability: {exc}") from exc
        try:
            check_distribution(dist, REMOTE_NORM_TOL)
        except BackendError as exc:
            raise RemoteNormalizationError(str(exc)) from exc
        return dist

    def token_logprobs(self, context_tokens, relation, target_tokens, initial_prefix=()):
        if initial_prefix:
            # the score endpoint has no prefix slot; fall back to per-token queries
            return super().token_logprobs(context_tokens, relation, target_tokens, initial_prefix)
        if not target_tokens:
            raise ValueError("target_tokens must be non-empty")
        payload = {
            "context": detokenize(tuple(context_tokens)),
            "relation": relation.value if relation else None,
            "target": list(target_tokens),
        }
        doc = self._post(SCORE_PATH, payload)
        if "token_logprobs" not in doc or not isinstance(doc["token_logprobs"], list):
            raise RemoteProtocolError("response missing 'token_logprobs' array")
        try:
            lps = [float(x) for x in doc["token_logprobs"]]
        except (TypeError, ValueError) as exc:
            raise RemoteProtocolError(f"non-numeric token log-prob: {exc}") from exc
        if len(lps) != len(target_tokens):
            raise RemoteProtocolError(
                f"got {len(lps)} token log-probs for {len(target_tokens)} target tokens"
            )
        return lps


def _parse_relation(value) -> Relation | None:
    if value is None:
        return None
    try:
        return Relation(value)
    except ValueError:
        raise RemoteProtocolError(f"unknown relation {value!r}") from None


class _TableModelHandler(BaseHTTPRequestHandler):
    model: TableModel  # set on the server class

    def log_message(self, *args):  # quiet test output
        pass

    def _send(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
            model = self.server.model  # type: ignore[attr-defined]
            if self.path == LOGPROBS_PATH:
                query = ConditionalQuery(
                    context_tokens=tuple(tokenize(payload["context"])),
                    relation=_parse_relation(payload.get("relation")),
                    prefix=tuple(payload.get("prefix", [])),
                )
                self._send(200, {"logprobs": model.next_token_logprobs(query)})
            elif self.path == SCORE_PATH:
                lps = model.token_logprobs(
                    tuple(tokenize(payload["context"])),
                    _parse_relation(payload.get("relation")),
                    tuple(payload["target"]),
                )
                self._send(200, {"token_logprobs": lps})
            else:
                self._send(404, {"error": f"unknown path {self.path}"})
        except Exception as exc:  # report, don't crash the server thread
            self._send(400, {"error": str(exc)})


class TableModelServer:
    """Reference server exposing a table model over the wire protocol."""

    def __init__(self, model: TableModel, host: str = "127.0.0.1", port: int = 0):
        self._httpd = ThreadingHTTPServer((host, port), _TableModelHandler)
        self._httpd.model = model  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "TableModelServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def serve_forever(self):
        self._httpd.serve_forever()


def record_exchanges(base_url: str, requests_spec: list[tuple[str, dict]]) -> list[dict]:
    """Replay ``(path, payload)`` queries against a live server, capturing
    the exact response bytes for later replay."""
    base_url = base_url.rstrip("/")
    fixtures = []
    for path, payload in requests_spec:
        try:
            response = requests.post(base_url + path, json=payload, timeout=30.0)
        except requests.RequestException as exc:
            raise RemoteTransportError(f"recording POST {path} failed: {exc}") from exc
        fixtures.append(
            {
                "path": path,
                "request": payload,
                "status": response.status_code,
                "body": response.text,
            }
        )
    return fixtures


def save_fixtures(fixtures: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(fixtures, indent=2) + "\n")


def load_fixtures(path: str | Path) -> list[dict]:
    return json.loads(Path(path).read_text())


class _ReplayHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        payload = json.loads(self.rfile.read(length).decode("utf-8"))
        key = (self.path, canonical_request(payload))
        exchanges = self.server.exchanges  # type: ignore[attr-defined]
        if key not in exchanges:
            body = json.dumps({"error": "no recorded exchange for request"}).encode()
            self.send_response(404)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        status, body_text = exchanges[key]
        body = body_text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class ReplayServer:
    """Serves recorded exchanges byte-for-byte; unknown requests get 404."""

    def __init__(self, fixtures: list[dict], host: str = "127.0.0.1", port: int = 0):
        self._httpd = ThreadingHTTPServer((host, port), _ReplayHandler)
        self._httpd.exchanges = {  # type: ignore[attr-defined]
            (f["path"], canonical_request(f["request"])): (f["status"], f["body"])
            for f in fixtures
        }
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ReplayServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
