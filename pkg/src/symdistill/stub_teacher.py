"""A local stand-in for the teacher endpoint, for tests and offline runs.

The stub answers ``POST {model, prompt, temperature}`` with ``{text}``. Replies are
oracle supervision unless the example id is listed in ``defects``, in which case a
reply with that defect is served instead.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from symdistill.records import Dataset
from symdistill.teacher import oracle_supervise

# defect name -> the validation outcome it must produce
DEFECTS = {
    "truncated": "ParseError",
    "unknown_fix_type": "UnknownFixType",
    "unknown_tag": "UnknownTag",
    "empty_trace": "EmptyTrace",
    "duplicate_tag": "DuplicateTag",
    "too_long": "TraceTooLong",
}


def defective_reply(fix_type: str, trace: list[str], defect: str) -> str:
    if defect == "truncated":
        return json.dumps({"fix_type": fix_type, "trace": trace})[:-7]
    if defect == "unknown_fix_type":
        return json.dumps({"fix_type": "STYLE_FIX", "trace": trace})
    if defect == "unknown_tag":
        return json.dumps({"fix_type": fix_type, "trace": trace + ["STYLE_ISSUE"]})
    if defect == "empty_trace":
        return json.dumps({"fix_type": fix_type, "trace": []})
    if defect == "duplicate_tag":
        return json.dumps({"fix_type": fix_type, "trace": trace + [trace[0]]})
    if defect == "too_long":
        extra = [t for t in ("LOOP_BOUND_ERROR", "CMP_ERROR", "MISSING_BRANCH", "INDEX_ERROR", "IO_ERROR") if t not in trace]
        return json.dumps({"fix_type": fix_type, "trace": trace + extra[: 5 - len(trace)]})
    raise ValueError(f"unknown defect {defect!r}")


def oracle_responder(dataset: Dataset, defects: Optional[dict] = None) -> Callable[[str], str]:
    """Map a prompt to a reply: the oracle's answer, or a defective one for ids in ``defects``."""
    defects = defects or {}
    answers = {}
    for e in dataset.examples:
        sup = oracle_supervise(e)
        fix, trace = sup.fix_type.value, list(sup.trace)
        if e.id in defects:
            answers[e.id] = defective_reply(fix, trace, defects[e.id])
        else:
            answers[e.id] = json.dumps({"fix_type": fix, "trace": trace})

    def respond(prompt: str) -> str:
        m = re.search(r"^Example id: (\S+)$", prompt, flags=re.M)
        if not m or m.group(1) not in answers:
            return "I cannot help with that."
        return answers[m.group(1)]

    return respond


class StubTeacher:
    """Threaded HTTP server on localhost; use as a context manager."""

    def __init__(self, respond: Callable[[str], str], fail_first: int = 0):
        self.respond = respond
        self.fail_remaining = fail_first
        self.requests = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub._lock:
                    stub.requests.append(body)
                    fail = stub.fail_remaining > 0
                    if fail:
                        stub.fail_remaining -= 1
                if fail:
                    self.send_response(503)
                    self.end_headers()
                    return
                payload = json.dumps({"text": stub.respond(body.get("prompt", ""))}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/v1/generate"

    def __enter__(self) -> "StubTeacher":
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()
