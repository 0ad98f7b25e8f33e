"""
Talking to a completion server
==============================

The endpoint backend posts ``{"prompt", "stop", "max_tokens"}`` and expects
``{"text"}`` back. Here a tiny local server always asks for a crowd count
and then answers.
"""

import http.server
import json
import threading

from viotbench import EndpointBackend, Query, canonical_registry, demo_base, run_session


class Handler(http.server.BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if "Observation:" in body["prompt"].split("Human:")[-1]:
            text = "Thought: Do I need to use a tool? No\nAI: There are 7 people."
        else:
            text = "Thought: Do I need to use a tool? Yes\nAction: CrowdCounting\nAction Input: Paris"
        out = json.dumps({"text": text}).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}/"

registry, demo = canonical_registry(), demo_base()
result = run_session(EndpointBackend(url), registry, demo, Query("q", "How many people in Paris?"))
print(result.outcome.value, [s.observation for s in result.trace.steps])

server.shutdown()
server.server_close()
