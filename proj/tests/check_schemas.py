"""Validates the shipped example scenarios and the JSON the CLI writes for
them against docs/schemas. Usage: check_schemas.py <lrkb> <repo root> <work dir>."""

import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema
from jsonschema.validators import Draft202012Validator
from referencing import Registry, Resource


def main() -> int:
    lrkb, root, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    schemas = {p.name: json.loads(p.read_text()) for p in (root / "docs" / "schemas").glob("*.json")}
    registry = Registry().with_resources(
        (name, Resource.from_contents(s)) for name, s in schemas.items())

    def check(doc_path: pathlib.Path, schema_name: str) -> None:
        validator = Draft202012Validator(schemas[schema_name], registry=registry)
        errors = sorted(validator.iter_errors(json.loads(doc_path.read_text())), key=str)
        if errors:
            raise jsonschema.ValidationError(f"{doc_path}: {errors[0].message}")

    examples = root / "docs" / "examples"
    for path in sorted(examples.glob("*.json")):
        check(path, "system.schema.json" if path.name.endswith(".system.json") else "scenario.schema.json")

    shutil.rmtree(work, ignore_errors=True)
    runs = [
        ("analyze", "analyze_diag3", {"analysis.json": "analysis.schema.json"}, 0),
        ("filter", "filter_rank1", {"summary.json": "filter_summary.schema.json"}, 0),
        ("filter", "filter_auto", {"summary.json": "filter_summary.schema.json"}, 0),
        ("montecarlo", "montecarlo_scalar", {"montecarlo.json": "montecarlo.schema.json"}, 0),
    ]
    for command, name, outputs, code in runs:
        out = work / name
        res = subprocess.run([lrkb, command, "--config", str(examples / f"{name}.json"), "--out", str(out)],
                             capture_output=True, text=True)
        if res.returncode != code:
            print(res.stdout, res.stderr)
            raise RuntimeError(f"{command} {name}: exit {res.returncode}, expected {code}")
        for file, schema in outputs.items():
            check(out / file, schema)

    # A forced failure produces witnesses as well as the report.
    cfg = work / "verify_forced.json"
    cfg.write_text(json.dumps({"verify": {"systems": 2, "tol_scale": 0}}))
    out = work / "verify"
    res = subprocess.run([lrkb, "verify", "--config", str(cfg), "--only", "prop8,rank", "--out", str(out)],
                         capture_output=True, text=True)
    if res.returncode != 1:
        raise RuntimeError(f"forced verify: exit {res.returncode}, expected 1")
    check(out / "verify.json", "verify.schema.json")
    witnesses = sorted((out / "witnesses").glob("*.json"))
    if not witnesses:
        raise RuntimeError("forced verify wrote no witness")
    for w in witnesses:
        check(w, "witness.schema.json")
    print(f"validated {len(list(examples.glob('*.json')))} examples, 4 command outputs, "
          f"1 verify report and {len(witnesses)} witnesses")
    return 0


if __name__ == "__main__":
    sys.exit(main())
