"""Seed sweeps, run manifests and text reports behind the command line."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from sths import __version__
from sths.config import Arm, ExperimentConfig
from sths.dataset import Oracle, load_dataset, save_dataset, true_class_counts
from sths.diagnostics import fig1_report, hard_class_identification_ratio
from sths.metrics import Evaluator, harmonic_mean
from sths.synthetic import generate_synthetic
from sths.training import RunTrace, run_sths, run_sths_gzsl_strict

MANIFEST_SCHEMA = 1
SUMMARY_KEYS = ("acc", "acc_inductive", "U", "S", "H", "H_inductive", "id_ratio")


class ReportError(RuntimeError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def dataset_for(cfg: ExperimentConfig, seed: int):
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic_config(seed))
    return load_dataset(cfg.dataset_path)


def cmd_synth(cfg: ExperimentConfig, out: Path, fmt: str = "csv") -> Path:
    """Write the synthetic dataset of ``cfg`` (first sweep seed)."""
    ds = generate_synthetic(cfg.synthetic_config(0))
    return save_dataset(ds, out, fmt)


def identification_ratio(trace: RunTrace, fraction: float = 0.5) -> Optional[float]:
    """Ratio for the first selection against the inductive per-class accuracy."""
    if not trace.iterations or trace.setting != "zsl":
        return None
    sel = trace.iterations[0]["selection"]
    metrics = trace.initial.get("metrics")
    if sel is None or sel["hardness"] is None or metrics is None:
        return None
    hardness = sel["hardness"]
    classes = np.asarray(hardness["classes"])
    by_class = dict(zip(metrics["classes"], metrics["per_class_accuracy"]))
    acc = np.array([np.nan if by_class.get(c) is None else by_class[c] for c in hardness["classes"]])
    order = np.searchsorted(classes, hardness["order"])
    return hard_class_identification_ratio(order, acc, fraction)


def summarize(trace: RunTrace) -> dict:
    final = trace.final_metrics or {}
    init = trace.initial.get("metrics") or {}
    out = {"acc": final.get("acc"), "acc_inductive": init.get("acc")}
    if "H" in final:
        out.update(U=final["U"], S=final["S"], H=final["H"], H_inductive=init.get("H"))
    ratio = identification_ratio(trace)
    if ratio is not None:
        out["id_ratio"] = ratio
    return out


def execute_arm(cfg: ExperimentConfig, arm: Arm, seed: int, out: Path) -> dict:
    """One (arm, seed) run; writes the trace directory and returns a summary."""
    ds = dataset_for(cfg, seed)
    oracle = Oracle(ds)
    evaluator = Evaluator(oracle, cfg.evaluate_mode())
    sths_cfg = cfg.sths_config(arm, seed)
    true_prior = None
    if arm.prior == "true":
        counts = true_class_counts(oracle, "test_unseen")
        true_prior = counts / counts.sum()
    run_dir = out / arm.dirname / f"seed_{seed}"
    ckpt = run_dir / "checkpoints" if cfg.experiment["checkpoints"] else None
    if cfg.arm_setting(arm) == "gzsl-strict":
        trace = run_sths_gzsl_strict(ds, sths_cfg, evaluator, true_prior, ckpt)
    else:
        trace = run_sths(ds, sths_cfg, evaluator, true_prior, ckpt)
    trace.save(run_dir)
    return {"seed": seed, "trace": str(run_dir.relative_to(out) / "trace.json"), "metrics": summarize(trace)}


def _execute_task(args):
    return execute_arm(*args)


def aggregate(values) -> dict:
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(v.mean()), "std": float(v.std()), "n": int(v.size)}


def cmd_run(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    """Every arm over every seed; returns and writes ``manifest.json``."""
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    created = _now()
    tasks = [(cfg, arm, seed, out) for arm in cfg.arms for seed in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute_task, tasks))
    else:
        results = [_execute_task(t) for t in tasks]

    arms = []
    for arm in cfg.arms:
        runs = [r for (c, a, s, o), r in zip(tasks, results) if a == arm]
        agg = {}
        for key in SUMMARY_KEYS:
            vals = [r["metrics"].get(key) for r in runs]
            if any(v is not None for v in vals):
                agg[key] = aggregate(vals)
        arms.append(
            {
                "name": arm.spec,
                "policy": arm.policy,
                "prior": arm.prior,
                "setting": cfg.arm_setting(arm),
                "runs": runs,
                "aggregate": agg,
            }
        )
    manifest = {
        "schema_version": MANIFEST_SCHEMA,
        "tool": "sths",
        "version": __version__,
        "name": cfg.name,
        "config_hash": cfg.hash(),
        "config": cfg.canonical(),
        "seeds": cfg.seeds,
        "arms": arms,
        "created_utc": created,
        "elapsed_seconds": time.perf_counter() - start,
    }
    (out / "config.json").write_text(_dump(cfg.canonical()), encoding="utf-8")
    (out / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    return manifest


# -- diagnostics ----------------------------------------------------------------


def _flatten(prefix: str, obj, out: dict) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        out[prefix] = float(obj)


def diagnostic_scalars(report: dict) -> dict:
    """Scalar quantities of one seed's report keyed by dotted path."""
    flat = {}
    _flatten("uneven", {k: report["uneven"][k] for k in ("acc", "spread")}, flat)
    if "skipped" not in report["retrain"]:
        _flatten("retrain", {m: report["retrain"][m]["acc"] for m in report["retrain"]}, flat)
        flat["retrain.baseline"] = report["retrain"]["all"]["baseline_acc"]
    if "skipped" not in report["precision"]:
        _flatten("precision", {k: report["precision"][k] for k in ("easy", "hard", "all")}, flat)
    if "skipped" not in report["diversity"]:
        for g in report["diversity"]["groups"]:
            flat[f"diversity.top{g['top']}"] = g["acc"]
    return flat


def aggregate_diagnostics(reports: list, config_hash: Optional[str] = None) -> dict:
    reports = sorted(reports, key=lambda r: r["seed"])
    keys = []
    scalars = [diagnostic_scalars(r) for r in reports]
    for s in scalars:
        keys += [k for k in s if k not in keys]
    skipped = {
        sec: reports[0][sec]["skipped"]
        for sec in ("retrain", "precision", "diversity")
        if reports and "skipped" in reports[0][sec]
    }
    return {
        "schema_version": MANIFEST_SCHEMA,
        "config_hash": config_hash,
        "seeds": [r["seed"] for r in reports],
        "sections": {"A": "uneven", "B": "retrain", "C": "precision", "D": "diversity"},
        "skipped": skipped,
        "quantities": {k: aggregate([s.get(k) for s in scalars]) for k in sorted(keys)},
    }


def _diag_task(args):
    cfg, seed, out = args
    ds = dataset_for(cfg, seed)
    base = cfg.sths_config(Arm.parse("rs"), seed).build_model()
    d = cfg.diagnose
    report = fig1_report(Oracle(ds), base, seed, d["budget"], d["group_size"], d["top_counts"])
    seed_dir = out / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    (seed_dir / "diagnostics.json").write_text(_dump(report), encoding="utf-8")
    un = report["uneven"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "accuracy"])
    for c, a in zip(un["classes"], un["per_class_accuracy"]):
        w.writerow([c, "" if a is None or a != a else repr(a)])
    (seed_dir / "per_class_accuracy.csv").write_text(buf.getvalue(), encoding="utf-8")
    return report


def _write_diag_report(agg: dict, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnostics_report.json").write_text(_dump(agg), encoding="utf-8")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "mean", "std", "n"])
    for k, v in agg["quantities"].items():
        w.writerow([k, "" if v["mean"] is None else repr(v["mean"]), "" if v["std"] is None else repr(v["std"]), v["n"]])
    (out / "diagnostics_report.csv").write_text(buf.getvalue(), encoding="utf-8")
    return agg


def cmd_diagnose(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    tasks = [(cfg, s, out) for s in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_diag_task, tasks))
    else:
        reports = [_diag_task(t) for t in tasks]
    return _write_diag_report(aggregate_diagnostics(reports, cfg.hash()), out)


def diagnose_from_trace(src: Path, out: Optional[Path] = None) -> dict:
    """Rebuild the aggregate report from saved per-seed reports."""
    files = sorted(Path(src).glob("seed_*/diagnostics.json"))
    if not files:
        raise FileNotFoundError(f"no per-seed diagnostics under {src}")
    reports = [json.loads(f.read_text(encoding="utf-8")) for f in files]
    old = Path(src) / "diagnostics_report.json"
    config_hash = json.loads(old.read_text(encoding="utf-8")).get("config_hash") if old.exists() else None
    return _write_diag_report(aggregate_diagnostics(reports, config_hash), Path(out or src))


# -- reports ----------------------------------------------------------------------


def _pct(v) -> str:
    return "-" if v is None else f"{100.0 * v:.1f}"


def report_rows(manifest: dict) -> list:
    """One row per arm, in manifest order, with percent strings."""
    if not manifest.get("arms"):
        raise ReportError("manifest has no arms")
    rows = []
    for arm in manifest["arms"]:
        if not arm.get("runs"):
            raise ReportError(f"arm {arm.get('name')!r} has an empty sweep")
        agg = arm["aggregate"]

        def get(key, stat="mean"):
            return agg[key][stat] if key in agg else None

        H = get("H")
        if H is None and get("U") is not None and get("S") is not None:
            H = harmonic_mean(get("U"), get("S"))
        rows.append(
            {
                "arm": arm["name"],
                "n": len(arm["runs"]),
                "ACC": _pct(get("acc")),
                "ACC_std": _pct(get("acc", "std")),
                "inductive": _pct(get("acc_inductive")),
                "U": _pct(get("U")),
                "S": _pct(get("S")),
                "H": _pct(H),
                "H_std": _pct(get("H", "std")),
                "id_ratio": "-" if get("id_ratio") is None else f"{get('id_ratio'):.2f}",
            }
        )
    return rows


def render_table(rows: list) -> str:
    cols = list(rows[0])
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    lines.append("  ".join("-" * widths[c] for c in cols))
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in cols))
    return "\n".join(lines) + "\n"


def render_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_report(manifest_path: Path, csv_path: Optional[Path] = None) -> str:
    p = Path(manifest_path)
    if p.is_dir():
        p = p / "manifest.json"
    if not p.exists():
        raise FileNotFoundError(f"manifest not found: {p}")
    manifest = json.loads(p.read_text(encoding="utf-8"))
    rows = report_rows(manifest)
    (csv_path or p.parent / "report.csv").write_text(render_csv(rows), encoding="utf-8")
    return render_table(rows)
