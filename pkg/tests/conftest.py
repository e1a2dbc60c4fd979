import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from llmo.grid import Grid
from llmo.markov import enumerate_and_order
from llmo.rewards import IfcModel, ifc_ee


def ee_1d(x):
    return float(ifc_ee(x, IfcModel(np.eye(1))))


@pytest.fixture
def grid16():
    return Grid.unit(4, 2, 1)


@pytest.fixture
def space16(grid16):
    # single-link EE on 4 levels: rewards 0, .338, .266, .218 are distinct
    return enumerate_and_order(grid16, ee_1d)


class StubServer:
    """Loopback chat-completions server driven by a queue of scripted replies."""

    def __init__(self):
        self.script = []  # (status, body or None, delay)
        self.requests = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_POST(self):
                n = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(n) or b"{}")
                stub.requests.append({"path": self.path, "body": body, "auth": self.headers.get("Authorization")})
                status, content, delay = stub.script.pop(0) if stub.script else (200, "0.5", 0.0)
                if delay:
                    time.sleep(delay)
                payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": content}}]})
                data = payload.encode() if status == 200 else b'{"error": "boom"}'
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                except (BrokenPipeError, ConnectionResetError):
                    pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub():
    s = StubServer()
    yield s
    s.close()
