"""End-to-end checks of the cic_attrition binary: exit codes, JSON schemas,
config/flag precedence and reproducibility."""

import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

BINARY = Path(sys.argv[1])
SCHEMA_DIR = Path(sys.argv[2])

failures = []


def check(name, condition, detail=""):
    status = "ok" if condition else "FAILED"
    print(f"{status:6} {name}" + (f"  ({detail})" if detail and not condition else ""))
    if not condition:
        failures.append(name)


def run(*args, env=None):
    merged = dict(os.environ)
    if env:
        merged.update(env)
    return subprocess.run([str(BINARY), *args], capture_output=True, text=True, env=merged)


def schema(name):
    return json.loads((SCHEMA_DIR / name).read_text())


def conforms(document, schema_name):
    try:
        jsonschema.validate(document, schema(schema_name))
        return True, ""
    except jsonschema.ValidationError as e:
        return False, e.message


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    data = tmp / "design1.csv"

    # simulate: smoke run, CSV column order, schema, determinism
    sim_args = ["simulate", "--design", "I", "--reps", "10", "--truth-mc-size", "200000",
                "--seed", "11"]
    r = run(*sim_args, "--format", "json", "--sample-out", str(data))
    check("simulate exits 0", r.returncode == 0, r.stderr)
    doc = json.loads(r.stdout)
    ok, why = conforms(doc, "mc-summary.v1.schema.json")
    check("simulate JSON matches schema", ok, why)
    r2 = run(*sim_args, "--format", "json", "--threads", "3")
    check("simulate deterministic across thread counts", r2.stdout == r.stdout)
    r = run(*sim_args, "--format", "csv")
    check("simulate CSV header",
          r.stdout.splitlines()[0] == "estimand,estimator,true,mean,bias,sd,rmse,failures",
          r.stdout.splitlines()[0])
    r = run("simulate", "--design", "IV", "--reps", "10")
    check("unknown design is a usage error", r.returncode == 1, str(r.returncode))
    r = run("simulate", "--reps")
    check("missing flag value is a usage error", r.returncode == 1, str(r.returncode))

    # validate
    r = run("validate", "--input", str(data), "--format", "json")
    check("validate well-formed file exits 0", r.returncode == 0, r.stderr)
    doc = json.loads(r.stdout)
    ok, why = conforms(doc, "validation-report.v1.schema.json")
    check("validate JSON matches schema", ok, why)
    check("validate reports valid", doc["valid"] is True)
    r = run("validate", "--input", str(data))
    check("validate text says valid", "valid" in r.stdout.splitlines()[0] and "invalid" not in r.stdout)

    bad = tmp / "bad.csv"
    bad.write_text("id,g,r,y0,y1\n1,0,0,0.5,3.0\n2,1,1,1.0,\n3,2,1,1.0,2.0\n4,1,1,1.0,2.0\n")
    r = run("validate", "--input", str(bad), "--format", "json")
    check("validate invalid file exits 2", r.returncode == 2, str(r.returncode))
    doc = json.loads(r.stdout)
    ok, why = conforms(doc, "validation-report.v1.schema.json")
    check("invalid-file report matches schema", ok, why)
    rows = {(v["row"], v["message"]) for v in doc["violations"]}
    check("violation rows listed",
          (1, "y1 present with r=0") in rows and (2, "y1 absent with r=1") in rows
          and any(row == 3 for row, _ in rows), str(rows))

    wide = tmp / "wide.csv"
    wide.write_text("id,g,r,y0,y1\n1,0,1,0,1\n2,0,1,1,2\n3,1,1,-5,0\n4,1,1,9,3\n")
    r = run("validate", "--input", str(wide))
    check("support-overlap warning names the ATT-R containment",
          "ATT-R support containment" in r.stdout, r.stdout)

    r = run("validate", "--input", str(tmp / "missing.csv"))
    check("unreadable input exits 2", r.returncode == 2, str(r.returncode))

    # estimate
    est_args = ["estimate", "--input", str(data), "--bootstrap-draws", "49", "--seed", "5"]
    r = run(*est_args, "--format", "json")
    check("estimate exits 0", r.returncode == 0, r.stderr)
    report = json.loads(r.stdout)
    ok, why = conforms(report, "estimate-report.v1.schema.json")
    check("estimate JSON matches schema", ok, why)
    keys = [e["key"] for e in report["estimates"]]
    check("naive estimate always reported", "naive" in keys)
    check("every estimate names a route", all(e["route"] for e in report["estimates"]))
    labels = [d["label"] for d in report["differences"]]
    check("panel B differences present",
          labels == ["(2)-(5)", "(2)-(6)", "(5)-(6)", "(5)-(7)", "(6)-(8)", "(2)-(7)", "(2)-(8)"],
          str(labels))
    r2 = run(*est_args, "--format", "json", env={"CIC_ATTRITION_THREADS": "2"})
    check("estimate deterministic across thread counts", r2.stdout == r.stdout)

    config = tmp / "job.cfg"
    config.write_text(f"# estimate job\ninput = {data}\nbootstrap-draws = 49\nseed = 5\n"
                      "format = json\n")
    r3 = run("estimate", "--config", str(config))
    check("config file reproduces the flag run", r3.stdout == r.stdout, r3.stderr)
    r4 = run("estimate", "--config", str(config), "--seed", "6")
    doc4 = json.loads(r4.stdout)
    check("flags override the config file", doc4["provenance"]["seed"] == 6
          and doc4["provenance"]["config_hash"] != report["provenance"]["config_hash"])

    # reproduce from the embedded provenance
    replay_cfg = tmp / "replay.cfg"
    replay_cfg.write_text("".join(f"{k} = {v}\n" for k, v in report["provenance"]["config"].items()
                                  if k != "mode"))
    replay = ["estimate", "--config", str(replay_cfg), "--format", "json"]
    r5 = run(*replay)
    check("provenance block reproduces the report", r5.stdout == r.stdout, r5.stderr)

    r = run("estimate", "--input", str(data), "--bootstrap-draws", "0", "--no-trim",
            "--format", "json")
    doc = json.loads(r.stdout)
    check("--no-trim drops IPW2", not any(e["method"] == "IPW2" for e in doc["estimates"]))
    col7 = [e for e in doc["estimates"] if e["column"] == "(7)"]
    check("--no-trim puts IPW1 in column (7)", len(col7) == 1 and col7[0]["method"] == "IPW1")
    ok, why = conforms(doc, "estimate-report.v1.schema.json")
    check("point-only report matches schema", ok, why)

    for fmt in ("csv", "text"):
        r = run("estimate", "--input", str(data), "--bootstrap-draws", "0", "--format", fmt)
        check(f"estimate {fmt} output exits 0", r.returncode == 0 and r.stdout, r.stderr)

    r = run("estimate", "--input", str(bad))
    check("estimate on invalid data exits 2", r.returncode == 2, str(r.returncode))

    no_treated = tmp / "no_treated.csv"
    no_treated.write_text("id,g,r,y0,y1\n1,0,1,0,1\n2,0,1,1,2\n3,1,0,1,\n")
    r = run("estimate", "--input", str(no_treated), "--bootstrap-draws", "0")
    check("estimation failure exits 3", r.returncode == 3, str(r.returncode))

    r = run("estimate", "--input", str(data), "--cluster-col", "village", "--bootstrap-draws", "9")
    check("cluster bootstrap without cluster ids is a usage error", r.returncode == 1,
          str(r.returncode))

    r = run("estimate", "--input", str(data), "--format", "xml")
    check("bad format is a usage error", r.returncode == 1, str(r.returncode))

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
