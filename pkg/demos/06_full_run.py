"""A full harness run from a configuration document, offline.

Builds a small survival CSV and a run configuration in a temporary
directory, trains and evaluates against the stub backend, then inspects the
artifacts: the JSON-lines operation log, the metrics report, the cost
breakdown, and a replay that reproduces the metrics byte for byte.

The equivalent CLI session:

    mockfn train  --config run.json
    mockfn eval   --config run.json --memory artifacts/memory.json
    mockfn report --config run.json --log artifacts/operations.jsonl
    mockfn replay --config run.json --log artifacts/operations.jsonl
"""

import csv
import json
import tempfile
from pathlib import Path

from mockfn.harness import load_config, replay, run
from mockfn.oplog import read_jsonl

workdir = Path(tempfile.mkdtemp(prefix="mockfn-demo-"))

rows = [
    ["pclass", "sex", "age", "survived"],
    ["3", "male", "22", "0"],
    ["1", "female", "38", "1"],
    ["3", "female", "26", "1"],
    ["1", "female", "35", "1"],
    ["3", "male", "35", "0"],
    ["2", "male", "", "0"],
    ["1", "male", "54", "0"],
    ["3", "female", "27", "1"],
    ["2", "female", "14", "1"],
    ["3", "male", "20", "0"],
]
with open(workdir / "passengers.csv", "w", newline="", encoding="utf-8") as handle:
    csv.writer(handle).writerows(rows)

config_doc = {
    "contract": {
        "name": "predictSurvival",
        "description": "Predict whether a passenger survived the voyage.",
        "task_kind": "classification",
        "params": [
            {"name": "passengerClass", "type": "integer", "min": 1, "max": 3,
             "description": "Ticket class."},
            {"name": "sex", "type": "enum", "values": ["male", "female"],
             "description": "Sex of the passenger."},
            {"name": "age", "type": "number", "min": 0, "max": 120,
             "description": "Age in years.", "required": False},
        ],
        "returns": {"type": "integer", "min": 0, "max": 1,
                    "description": "1 when the passenger survived."},
    },
    "dataset": {
        "path": "passengers.csv",
        "features": {"pclass": "passengerClass", "sex": "sex", "age": "age"},
        "label": "survived",
        "train_fraction": 0.8,
        "seed": 42,
    },
    # The stub answers every invocation with "died" and every reflection with
    # a canned note; a live run would use {"kind": "openai", "base_url": ...,
    # "api_key_env": "OPENAI_API_KEY", "model_id": ...} instead.
    "backend": {
        "kind": "stub",
        "model_id": "stub-model",
        "input_price_per_million": 0.18,
        "output_price_per_million": 0.18,
        "replies": [
            {"match": "Analyze the possible reasons",
             "reply": "I previously given the wrong result. Notes: weigh sex and class.",
             "times": None},
            {"match": None,
             "reply": "{\"remarks\": \"Most passengers died.\", \"results\": 0}",
             "times": None},
        ],
    },
    "trainer": {"context_length_limit": 5, "refinement_policy": "replace"},
    "output_dir": "artifacts",
    "seed": 0,
}
config_path = workdir / "run.json"
config_path.write_text(json.dumps(config_doc, indent=2), encoding="utf-8")

config = load_config(config_path)
result = run(config)

print("=== artifacts ===")
for name, path in result.artifacts.items():
    print(f"  {name:9s} {path}")
print()

print("=== metrics ===")
print(json.dumps(result.metrics.to_dict(), indent=2))
print()

print("=== cost breakdown ===")
print(json.dumps(result.costs.to_dict()["total"], indent=2))
print()

records = read_jsonl(result.artifacts["log"])
kinds = {}
for record in records:
    kinds[record["kind"]] = kinds.get(record["kind"], 0) + 1
print(f"=== operation log: {len(records)} records ===")
print(f"  by kind: {kinds}")
print(f"  first record id: {records[0]['id']} (stable across runs under the stub)")
print()

replayed = replay(config, result.artifacts["log"])
identical = (
    replayed.artifacts["metrics"].read_bytes() == result.artifacts["metrics"].read_bytes()
)
print(f"=== replay reproduces the metrics byte-identically: {identical} ===")
