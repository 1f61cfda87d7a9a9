#!/usr/bin/env python3
"""Runs the full pipeline on the fixture and validates report.json against the schema.

Usage: check_report.py GPDI_BINARY FIXTURE_DIR SCHEMA WORK_DIR
"""
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def main(binary, fixture, schema_path, work):
    fixture, work = pathlib.Path(fixture), pathlib.Path(work)
    shutil.rmtree(work, ignore_errors=True)
    inputs = ["--input", str(fixture / "responses.csv"), "--keying", str(fixture / "keying.csv"),
              "--covariates", str(fixture / "covariates.csv"), "--subsample", "0.5", "--out", str(work)]
    for stage in ["gpdi", "ks", "cluster", "regress", "report"]:
        subprocess.run([binary, stage] + inputs, check=True)
    schema = json.loads(pathlib.Path(schema_path).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    report = json.loads((work / "report.json").read_text())
    jsonschema.validate(report, schema, cls=jsonschema.Draft202012Validator)
    print("report.json validates")


if __name__ == "__main__":
    main(*sys.argv[1:5])
