#!/usr/bin/env python3
"""Canned chat-completions server for exercising the LLM planner offline.

Every POST is answered with the next reply from a JSON file holding a list of
strings (each string is the assistant message content), cycling at the end.
Without a file it always answers with the pick-and-place plan.

    python3 scripts/mock_llm_server.py --port 8765 [--replies replies.json]

Then point `planner.llm.endpoint` at http://127.0.0.1:8765/v1/chat/completions.
"""

import argparse
import itertools
import json
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

PICK_PLACE = json.dumps(
    [
        {"op": "move_to", "target": {"color": "red", "shape": "cube"}},
        {"op": "grasp", "object": {"color": "red", "shape": "cube"}},
        {"op": "move_to", "target": {"color": "blue", "shape": "platform"}},
        {"op": "release"},
    ]
)


def make_handler(replies, log_requests):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            try:
                request = json.loads(body)
            except json.JSONDecodeError:
                self.send_error(400, "request is not JSON")
                return
            if log_requests:
                print(json.dumps(request, indent=2), file=sys.stderr)
            content = next(replies)
            payload = json.dumps(
                {
                    "model": request.get("model", "mock"),
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}],
                }
            ).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt, *args):
            if log_requests:
                super().log_message(fmt, *args)

    return Handler


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--replies", help="JSON file with a list of reply strings")
    parser.add_argument("--verbose", action="store_true", help="log every request body")
    args = parser.parse_args()

    contents = [PICK_PLACE]
    if args.replies:
        with open(args.replies) as f:
            contents = json.load(f)
        if not isinstance(contents, list) or not all(isinstance(c, str) for c in contents) or not contents:
            parser.error("--replies must hold a non-empty JSON list of strings")

    server = HTTPServer((args.host, args.port), make_handler(itertools.cycle(contents), args.verbose))
    print(f"mock LLM listening on http://{args.host}:{args.port}/v1/chat/completions", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
