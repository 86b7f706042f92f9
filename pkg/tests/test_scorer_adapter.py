import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from oiekit.core import Extraction, ValidationError
from oiekit.reward import HttpEntailmentAdapter, SemScorer, make_sem_scorer


class _ScorerHandler(BaseHTTPRequestHandler):
    calls = []
    fixed_score = 0.75

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        type(self).calls.append(payload)
        body = json.dumps({"score": type(self).fixed_score}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def scorer_server():
    _ScorerHandler.calls = []
    _ScorerHandler.fixed_score = 0.75
    server = HTTPServer(("127.0.0.1", 0), _ScorerHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_adapter_round_trip(scorer_server):
    adapter = HttpEntailmentAdapter(scorer_server)
    score = adapter.score("Parragon operates markets .", "Parragon operates markets")
    assert score == 0.75
    assert _ScorerHandler.calls == [{
        "premise": "Parragon operates markets .",
        "hypothesis": "Parragon operates markets",
    }]


def test_adapter_rejects_out_of_range(scorer_server):
    _ScorerHandler.fixed_score = 1.5
    adapter = HttpEntailmentAdapter(scorer_server)
    with pytest.raises(ValidationError):
        adapter.score("a", "b")


def test_adapter_scores_are_cached(scorer_server, parragon, tmp_path):
    cache_path = tmp_path / "sem-cache.tsv"
    scorer = make_sem_scorer(f"adapter:{scorer_server}", cache_path=cache_path)
    extraction = Extraction("parragon", (8, 8), {"ARG2": (9, 10)})
    first = scorer.score(extraction, parragon)
    second = scorer.score(extraction, parragon)
    assert first == second == 0.75
    assert len(_ScorerHandler.calls) == 1

    scorer.save_cache()
    assert cache_path.read_text(encoding="utf-8") == "parragon\thas 10 offices\t0.75\n"

    # A fresh scorer warm-starts from the persisted cache: no new calls.
    reloaded = SemScorer(mode="adapter",
                         adapter=HttpEntailmentAdapter(scorer_server),
                         cache_path=cache_path)
    assert reloaded.score(extraction, parragon) == 0.75
    assert len(_ScorerHandler.calls) == 1
