"""Runs every epikit subcommand once and validates the files it writes.

usage: validate_outputs.py EPIKIT_BINARY SCHEMA_DIR CONFIG_DIR WORK_DIR
"""
import json
import math
import pathlib
import shutil
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource

OUTPUT_SCHEMAS = {
    "config.json": "urn:epikit:config_echo",
    "envelope.json": "urn:epikit:envelope_output",
    "run.json": "urn:epikit:app_run",
    "suite.json": "urn:epikit:suite_output",
}


def load_registry(schema_dir):
    resources = []
    for path in sorted(schema_dir.glob("*.schema.json")):
        doc = json.loads(path.read_text())
        jsonschema.Draft202012Validator.check_schema(doc)
        resources.append((doc["$id"], Resource.from_contents(doc)))
    return Registry().with_resources(resources)


def check_csv(path):
    raw = path.read_bytes()
    assert b"\r" not in raw, f"{path}: CR in line endings"
    assert raw.endswith(b"\n"), f"{path}: missing final LF"
    lines = raw.decode("utf-8").split("\n")[:-1]
    width = len(lines[0].split(","))
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == width, f"{path}: ragged row {line!r}"
        for c in cells:
            if c in ("+inf", "-inf"):
                continue
            assert c not in ("inf", "nan", "-nan", "NaN"), f"{path}: bad token {c!r}"
            assert math.isfinite(float(c)), f"{path}: bad number {c!r}"


def main():
    binary, schema_dir, config_dir, work = (pathlib.Path(a) for a in sys.argv[1:5])
    registry = load_registry(schema_dir)
    shutil.rmtree(work, ignore_errors=True)

    runs = [
        (["envelope", "--config", config_dir / "step.json"], 0),
        (["fatou-check", "--config", config_dir / "fatou_weak.json"], 0),
        (["fatou-check", "--config", config_dir / "fatou_escaping_mass.json"], 2),
        (["epi-check", "--config", config_dir / "epi_vanishing_shift.json"], 0),
        (["app", "sieve"], 0),
        (["app", "mollify"], 0),
        (["app", "pde"], 0),
        (["app", "penalty", "--config", config_dir / "penalty_m1.json"], 0),
        (["suite", "--config", config_dir / "suite.json", "--criteria", "1", "2", "3"], 0),
    ]
    failures = 0
    for i, (args, expected) in enumerate(runs):
        out = work / f"run{i}"
        cmd = [str(binary), *map(str, args), "--out", str(out)]
        code = subprocess.run(cmd, stdout=subprocess.DEVNULL).returncode
        if code != expected:
            print(f"FAIL {' '.join(cmd)}: exit {code}, expected {expected}")
            failures += 1
            continue
        for f in sorted(out.iterdir()):
            if f.suffix == ".csv":
                check_csv(f)
                continue
            doc = json.loads(f.read_text())
            if f.name == "report.json":
                schema_id = "urn:epikit:fatou_output" if args[0] == "fatou-check" else "urn:epikit:epi_output"
            else:
                schema_id = OUTPUT_SCHEMAS[f.name]
            validator = jsonschema.Draft202012Validator({"$ref": schema_id}, registry=registry)
            errors = list(validator.iter_errors(doc))
            for e in errors[:3]:
                print(f"FAIL {f}: /{'/'.join(map(str, e.absolute_path))}: {e.message}")
            failures += bool(errors)
        print(f"ok   {' '.join(map(str, args))}")
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
