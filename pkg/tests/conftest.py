import pytest

from viotbench.dataset import GenConfig, generate
from viotbench.knowledge import default_base, demo_base
from viotbench.tools import canonical_registry

# Filled by tests/test_acceptance.py; printed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def registry():
    return canonical_registry()


@pytest.fixture(scope="session")
def demo():
    return demo_base()


@pytest.fixture(scope="session")
def world():
    return default_base()


@pytest.fixture(scope="session")
def small_dataset(world, registry):
    return generate(world, registry, cfg=GenConfig(per_tool_count=5, pipeline_count=5, seed=3))


@pytest.fixture(scope="session")
def demo_dataset(demo, registry):
    return generate(demo, registry, cfg=GenConfig(per_tool_count=4, pipeline_count=4, seed=1))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class StubEndpoint:
    """Local completion server; ``handler(payload) -> (status, body_bytes)``."""

    def __init__(self, handler):
        import http.server
        import json
        import threading

        self.requests = []
        stub = self

        class H(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                n = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(n))
                stub.requests.append(payload)
                status, body = handler(payload)
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *a):
                pass

        self.server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), H)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/complete"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_endpoint():
    made = []

    def make(handler):
        s = StubEndpoint(handler)
        made.append(s)
        return s

    yield make
    for s in made:
        s.close()


def query_line_and_steps(prompt: str) -> tuple[str, int]:
    """The prompt's query line and how many observations follow it."""
    lines = prompt.split("\n")
    i = max(k for k, l in enumerate(lines) if l.startswith("Human:"))
    return lines[i], sum(l.startswith("Observation:") for l in lines[i + 1:])
