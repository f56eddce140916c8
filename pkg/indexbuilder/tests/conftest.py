import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

FIXTURE_PIN = "v4.22.0-test"


@pytest.fixture
def fixture_tree(tmp_path):
    """Small source tree: 2 theorems and 1 def across two files."""
    tree = tmp_path / "lib"
    (tree / "Algebra").mkdir(parents=True)
    (tree / "commit-pin").write_text(FIXTURE_PIN + "\n")
    (tree / "Algebra" / "Basic.lean").write_text(
        "import Mathlib.Tactic\n"
        "\n"
        "theorem add_comm' (a b : Nat) : a + b = b + a := by\n"
        "  omega\n"
        "\n"
        "def double (n : Nat) : Nat :=\n"
        "  n + n\n"
    )
    (tree / "Order.lean").write_text(
        "theorem le_refl' (a : Nat) :\n"
        "    a <= a := by\n"
        "  omega\n"
    )
    return tree


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        server = self.server
        with server.state_lock:
            server.request_count += 1
            fail = server.request_count in server.fail_on_requests
        body = self.rfile.read(int(self.headers["Content-Length"]))
        payload = json.loads(body)
        with server.state_lock:
            server.seen_inputs.append(list(payload["input"]))
        if fail:
            self.send_response(500)
            self.end_headers()
            self.wfile.write(b"injected failure")
            return
        data = [{"embedding": deterministic_vector(t, server.dimension)}
                for t in payload["input"]]
        out = json.dumps({"data": data}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


def deterministic_vector(text: str, dimension: int) -> list[float]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    # stretch the digest to cover the dimension; values in [-127.5, 127.5]
    raw = (digest * (dimension // len(digest) + 1))[:dimension]
    return [b - 127.5 for b in raw]


class MockEmbedServer:
    def __init__(self, dimension=8, fail_on_requests=()):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.server.dimension = dimension
        self.server.fail_on_requests = set(fail_on_requests)
        self.server.request_count = 0
        self.server.seen_inputs = []
        self.server.state_lock = threading.Lock()
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1/embeddings"

    @property
    def request_count(self):
        return self.server.request_count

    @property
    def seen_inputs(self):
        return self.server.seen_inputs

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def embed_server():
    server = MockEmbedServer()
    yield server
    server.close()
