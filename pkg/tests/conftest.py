import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from pir.data import CorpusDoc, PerspectiveQuery, build_bundle, write_task_bundle
from pir.embedding import Provider

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def text_vector(text, dim=8):
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(seed).standard_normal(dim)


class FakeProvider(Provider):
    """Deterministic text -> vector provider that counts batch calls."""

    def __init__(self, dim=8, model_id="fake"):
        super().__init__(model_id)
        self.dim = dim
        self.batches = []

    @property
    def provider_id(self):
        return "fake"

    def embed_batch(self, texts):
        self._count_call()
        self.batches.append(list(texts))
        return np.array([text_vector(t, self.dim) for t in texts])


@pytest.fixture
def fake_provider():
    return FakeProvider()


def make_query(qid, root, ptext, task="toy", root_text=None):
    root_text = root_text or f"root text {root}"
    return PerspectiveQuery(qid, root, root_text, ptext, f"{root_text} {ptext}", task)


@pytest.fixture
def toy_bundle():
    """Two roots with two perspectives each, six labelled docs."""
    queries = [
        make_query("q1", "r1", "supporting"),
        make_query("q2", "r1", "opposing"),
        make_query("q3", "r2", "from the left"),
        make_query("q4", "r2", "from the right"),
    ]
    corpus = [
        CorpusDoc("d1", "blue fox jumps", {"stance": "support"}),
        CorpusDoc("d2", "red fox sleeps", {"stance": "oppose"}),
        CorpusDoc("d3", "green owl flies high", {"stance": "support"}),
        CorpusDoc("d4", "quick brown dog", {"stance": "oppose"}),
        CorpusDoc("d5", "lazy cat naps", {"stance": "support"}),
        CorpusDoc("d6", "the blue owl", {"stance": "oppose"}),
    ]
    qrels = {"q1": {"d1"}, "q2": {"d2"}, "q3": {"d3", "d5"}, "q4": {"d4"}}
    return build_bundle("toy", queries, corpus, qrels)


@pytest.fixture
def toy_dir(tmp_path, toy_bundle):
    directory = tmp_path / "toy"
    write_task_bundle(toy_bundle, directory)
    return directory


@pytest.fixture
def contamination():
    """Orthonormal e1..e4; gold c1=e1+e3, distractor c2=e2+e4; q=e1+3e4, p=e4."""
    e = np.eye(4)
    return {
        "q": e[0] + 3 * e[3],
        "r": e[0],
        "p": e[3],
        "c1": e[0] + e[2],
        "c2": e[1] + e[3],
    }


class EmbedServer:
    def __init__(self, dim=8, fail_first=0, status=500, declared_dim=None):
        self.dim = dim
        self.declared_dim = declared_dim or dim
        self.fail_first = fail_first
        self.status = status
        self.requests = []
        self.lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with server.lock:
                    server.requests.append((self.path, body))
                    failing = server.fail_first > 0
                    if failing:
                        server.fail_first -= 1
                if self.path != "/embed" or failing:
                    self.send_response(server.status if failing else 404)
                    self.end_headers()
                    return
                vectors = [text_vector(t, server.dim).tolist() for t in body["texts"]]
                payload = json.dumps({"dim": server.declared_dim, "vectors": vectors}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def embed_server():
    server = EmbedServer()
    yield server
    server.close()
