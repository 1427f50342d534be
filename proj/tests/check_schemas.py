"""Validates shipped files, schema examples, CLI output and live /v1 responses
against the JSON Schemas in schemas/.

usage: check_schemas.py <source dir> <stroke_pomdp binary>
"""

import csv
import json
import pathlib
import socket
import subprocess
import sys
import tempfile
import time
import urllib.error
import urllib.request

import jsonschema
from referencing import Registry, Resource

SRC = pathlib.Path(sys.argv[1])
CLI = sys.argv[2]

schemas = {}
for path in sorted((SRC / "schemas").glob("*.schema.json")):
    doc = json.loads(path.read_text())
    jsonschema.Draft202012Validator.check_schema(doc)
    schemas[doc["$id"].removeprefix("urn:strokepomdp:")] = doc
registry = Registry().with_resources(
    (doc["$id"], Resource.from_contents(doc)) for doc in schemas.values())

failures = []
checked = 0


def check(name, instance, where):
    global checked
    checked += 1
    v = jsonschema.Draft202012Validator(schemas[name], registry=registry)
    errors = sorted(v.iter_errors(instance), key=lambda e: list(e.path))
    for e in errors[:3]:
        failures.append(f"{where}: {name}: {'/'.join(map(str, e.path))}: {e.message}")


for name, doc in schemas.items():
    for i, ex in enumerate(doc.get("examples", [])):
        check(name, ex, f"{name} example {i}")

check("model-params", json.loads((SRC / "params/default.json").read_text()), "params/default.json")

EPISODE_COLUMNS = ["policy", "replication", "seed", "init_ane", "init_avm", "init_occ", "final_ane",
                   "final_avm", "final_occ", "steps", "terminal_reason", "discounted_return",
                   "time_to_treatment", "recovered", "wrong_treatments", "failed"]

with tempfile.TemporaryDirectory() as tmp:
    tmp = pathlib.Path(tmp)
    out = tmp / "bench"
    subprocess.run([CLI, "bench", "--policy", "all", "-k", "20", "--seed", "3", "--out", str(out),
                    "--quiet"], check=True)
    check("report", json.loads((out / "report.json").read_text()), "report.json")
    check("histograms", json.loads((out / "histograms.json").read_text()), "histograms.json")
    for f in sorted((out / "traces").glob("*.json")):
        check("trace", json.loads(f.read_text()), f"traces/{f.name}")
    with open(out / "episodes.csv", newline="") as f:
        rows = list(csv.reader(f))
    checked += 1
    if rows[0] != EPISODE_COLUMNS:
        failures.append(f"episodes.csv header {rows[0]}")
    if len(rows) != 1 + 4 * 20 or any(len(r) != len(EPISODE_COLUMNS) for r in rows[1:]):
        failures.append("episodes.csv row count or width")

    for policy in ["random", "expert-hosp", "expert-dsa", "despot"]:
        trace = tmp / f"{policy}.json"
        subprocess.run([CLI, "episode", "--policy", policy, "--seed", "5", "--trace", str(trace)],
                       check=True, stdout=subprocess.DEVNULL)
        check("trace", json.loads(trace.read_text()), f"episode {policy}")

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    server = subprocess.Popen([CLI, "serve", "--host", "127.0.0.1", "--port", str(port),
                               "--db", ":memory:"], stderr=subprocess.DEVNULL)
    base = f"http://127.0.0.1:{port}/v1"

    def call(method, path, body=None):
        data = None if body is None else json.dumps(body).encode()
        req = urllib.request.Request(base + path, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=30) as r:
                raw = r.read()
                return r.status, json.loads(raw) if raw else None
        except urllib.error.HTTPError as e:
            return e.code, json.loads(e.read())

    try:
        for _ in range(100):
            try:
                call("GET", "/sessions/none")
                break
            except OSError:
                time.sleep(0.05)

        def expect(status, got, name, where):
            global checked
            checked += 1
            if got[0] != status:
                failures.append(f"{where}: status {got[0]}, expected {status}: {got[1]}")
            elif name:
                check(name, got[1], where)

        for ex in schemas["session-create-request"]["examples"]:
            check("session-create-request", ex, "create request")
        r = call("POST", "/sessions", {})
        expect(201, r, "session", "POST /sessions")
        sid = r[1]["session_id"]
        expect(200, call("GET", f"/sessions/{sid}"), "session", "GET /sessions/{id}")
        for body in schemas["step-request"]["examples"]:
            expect(200, call("POST", f"/sessions/{sid}/step", body), "step-response", f"step {body['action']}")
        for body in schemas["recommend-request"]["examples"]:
            expect(200, call("POST", f"/sessions/{sid}/recommend", body), "recommend-response",
                   f"recommend {body}")
        expect(200, call("POST", f"/sessions/{sid}/recommend", {"policy": "random", "seed": 1}),
               "recommend-response", "recommend random")
        expect(200, call("GET", f"/sessions/{sid}"), "session", "GET after steps")

        bad_obs = {"action": "WAIT", "observation": {"type": "clinical", "ct": "CT_POSITIVE", "siriraj": 9}}
        expect(422, call("POST", f"/sessions/{sid}/step", bad_obs), "error", "out-of-range score")
        wrong_variant = {"action": "DSA", "observation": {"type": "clinical", "ct": "CT_POSITIVE", "siriraj": 0}}
        expect(422, call("POST", f"/sessions/{sid}/step", wrong_variant), "error", "variant mismatch")
        expect(404, call("GET", "/sessions/doesnotexist"), "error", "unknown session")
        expect(422, call("POST", "/sessions", {"config_overrides": {"gamma": 2}}), "error", "bad override")

        disc = {"action": "DISC", "observation": {"type": "clinical", "ct": "CT_NEGATIVE", "siriraj": 0}}
        expect(200, call("POST", f"/sessions/{sid}/step", disc), "step-response", "discharge")
        expect(409, call("POST", f"/sessions/{sid}/step", disc), "error", "step after discharge")
        expect(204, call("DELETE", f"/sessions/{sid}"), None, "DELETE")
        expect(404, call("GET", f"/sessions/{sid}"), "error", "GET after DELETE")
    finally:
        server.terminate()
        server.wait(timeout=10)

for f in failures:
    print("FAIL", f)
print(f"{checked} documents checked, {len(failures)} problems")
sys.exit(1 if failures else 0)
