#!/usr/bin/env python3
"""Runs every gptrans subcommand on a tiny workload and validates what it writes.

usage: check_cli_schemas.py <gptrans binary> <schema dir> <scratch dir>
"""
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def main() -> int:
    cli, schema_dir, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)

    schemas = {p.name.removesuffix(".schema.json"): json.loads(p.read_text()) for p in schema_dir.glob("*.schema.json")}
    failures = []
    checked = 0

    def validate(doc, name, where):
        nonlocal checked
        checked += 1
        try:
            jsonschema.Draft202012Validator(schemas[name]).validate(doc)
        except jsonschema.ValidationError as e:
            failures.append(f"{where}: {e.message} at {list(e.absolute_path)}")

    def run(*args):
        proc = subprocess.run([cli, "--json", *args], cwd=work, capture_output=True, text=True)
        if proc.returncode != 0:
            failures.append(f"{' '.join(args)} exited {proc.returncode}: {proc.stderr.strip()}")
            return None
        try:
            return json.loads(proc.stdout)
        except json.JSONDecodeError:
            failures.append(f"{' '.join(args)}: --json output is not JSON")
            return None

    def check_file(path, name):
        validate(json.loads((work / path).read_text()), name, path)

    def check_lines(path, name):
        lines = (work / path).read_text().splitlines()
        if not lines:
            failures.append(f"{path}: empty")
        for i, line in enumerate(lines):
            validate(json.loads(line), name, f"{path}:{i + 1}")

    model = ["--layers", "1", "--d1", "16", "--d2", "8", "--heads", "2"]
    for task in ["spd-regression", "degree-class", "cluster-like", "tsp-like"]:
        run("synth", "--task", task, "--n-graphs", "6", "--seed", "3", "--out", f"synth-{task}")
        check_lines(f"synth-{task}/graphs.jsonl", "graph")
        check_file(f"synth-{task}/vocab.json", "vocab")
        check_file(f"synth-{task}/manifest.json", "manifest")

    data = "synth-spd-regression/graphs.jsonl"
    run("scan", "--data", data, "--out", "scan")
    check_file("scan/stats.json", "stats")
    check_file("scan/vocab.json", "vocab")
    check_file("scan/manifest.json", "manifest")

    run("train", "--data", data, "--eval-data", data, "--out", "train", "--epochs", "2", "--batch-size", "4", *model)
    check_lines("train/metrics.jsonl", "metrics")
    check_file("train/config.json", "train_config")
    check_file("train/manifest.json", "manifest")

    for ema in ([], ["--use-ema"]):
        out = "eval-ema" if ema else "eval"
        doc = run("eval", "--checkpoint", "train/best.ckpt", "--data", data, "--out", out, *ema)
        check_file(f"{out}/eval.json", "eval")
        check_file(f"{out}/manifest.json", "manifest")
        if doc is not None:
            validate(doc, "eval", f"{out} stdout")

    for name, args in [
        ("gradcheck", ["--layers", "1", "--sample", "2"]),
        ("params", []),
        ("flops", ["--nodes", "12"]),
        ("bench", ["--nodes", "8", "--dual-ffn", "--backward", *model]),
    ]:
        doc = run(name, "--out", name, *args)
        check_file(f"{name}/{name}.json", name)
        check_file(f"{name}/manifest.json", "manifest")
        if doc is not None:
            validate(doc, name, f"{name} stdout")

    for f in failures:
        print("FAIL", f)
    print(f"{checked} documents checked, {len(failures)} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
