"""Minimal detector bridge for exercising the subprocess client.

Speaks protocol v1 on stdio: handshake line, then one response per request.
Returns a fixed window-local box per request; a request whose image path
contains "trigger-error" gets an error object instead. Not a test module.
"""

import json
import sys


def main():
    print(json.dumps({"protocol": 1, "classes": [0, 1, 2], "max_input_px": 4096,
                      "single_flight": False}), flush=True)
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            rid = req["id"]
            window = req["window"]
        except (json.JSONDecodeError, KeyError, TypeError):
            print(json.dumps({"id": None, "error": "malformed request"}), flush=True)
            continue
        if "trigger-error" in str(req.get("image", "")):
            print(json.dumps({"id": rid, "error": "synthetic failure"}), flush=True)
            continue
        w, h = window[2], window[3]
        box = [min(4, w - 2), min(4, h - 2), min(24, w - 1), min(24, h - 1)]
        print(
            json.dumps(
                {"id": rid, "detections": [{"class": 1, "bbox": box, "conf": 0.9}]}
            ),
            flush=True,
        )


if __name__ == "__main__":
    main()
