"""Render run summaries into delimited tables and figures.

The report path walks an output directory written by ``run_scenario``,
emits one ``report.csv`` row per (scenario, seed), and renders PNG
figures (latency histograms and a verdict overview) next to it.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def find_summaries(out_dir: str) -> list[dict]:
    summaries = []
    for entry in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, entry, "summary.json")
        if os.path.isfile(path):
            with open(path, "r", encoding="utf-8") as fh:
                summaries.append(json.load(fh))
    return summaries


def _metric(metrics: dict, *names):
    for name in names:
        if metrics.get(name) is not None:
            return metrics[name]
    return None


def write_csv(out_dir: str, summaries: list[dict]) -> str:
    path = os.path.join(out_dir, "report.csv")
    fields = ["scenario", "protocol", "seed", "ok", "failed_checks",
              "outputs", "output_round_median", "finalized_blocks",
              "first_final_median", "rounds_to_tfinal_median", "temp_reversions",
              "trace_digest"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for summary in summaries:
            name = summary["scenario"]["name"]
            protocol = summary["scenario"]["protocol"]
            for r in summary["results"]:
                metrics = r["metrics"]
                blocks = metrics.get("blocks", [])
                writer.writerow({
                    "scenario": name,
                    "protocol": protocol,
                    "seed": r["seed"],
                    "ok": int(r["ok"]),
                    "failed_checks": ";".join(
                        v["name"] for v in r["verdicts"] if v["status"] == "FAIL"
                    ),
                    "outputs": metrics.get("outputs"),
                    "output_round_median": metrics.get("output_round_median"),
                    "finalized_blocks": sum(b.get("finalized_count", 0) for b in blocks)
                    if blocks else None,
                    "first_final_median": _med_of(blocks, "first_final_median"),
                    "rounds_to_tfinal_median": _med_of(blocks, "rounds_to_tfinal_median"),
                    "temp_reversions": metrics.get("temp_reversions"),
                    "trace_digest": r["trace_digest"],
                })
    return path


def _med_of(blocks: list[dict], key: str):
    vals = [b[key] for b in blocks if b.get(key) is not None]
    if not vals:
        return None
    vals.sort()
    return vals[len(vals) // 2]


def render_figures(out_dir: str, summaries: list[dict]) -> list[str]:
    paths = []
    for summary in summaries:
        name = summary["scenario"]["name"]
        protocol = summary["scenario"]["protocol"]
        if protocol == "snowman":
            values = [_med_of(r["metrics"].get("blocks", []), "first_final_median")
                      for r in summary["results"]]
            label = "median finalization slot"
        else:
            values = [r["metrics"].get("output_round_median") for r in summary["results"]]
            label = "median output round"
        values = [v for v in values if v is not None]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        if values:
            ax.hist(values, bins=min(20, max(3, len(set(values)))), color="#4878a8")
        ax.set_xlabel(label)
        ax.set_ylabel("seeds")
        ax.set_title(name)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{name}_latency.png")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    # verdict overview across scenarios
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    names = [s["scenario"]["name"] for s in summaries]
    oks = [s["runs"] - s["failures"] for s in summaries]
    fails = [s["failures"] for s in summaries]
    xs = range(len(names))
    ax.bar(xs, oks, color="#4a9a60", label="pass")
    ax.bar(xs, fails, bottom=oks, color="#b0413e", label="fail")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=7)
    ax.set_ylabel("seeds")
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = os.path.join(out_dir, "verdicts.png")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    paths.append(path)
    return paths


def render_report(out_dir: str, figures: bool = True) -> dict:
    summaries = find_summaries(out_dir)
    if not summaries:
        raise FileNotFoundError(f"no summary.json found under {out_dir}")
    csv_path = write_csv(out_dir, summaries)
    fig_paths = render_figures(out_dir, summaries) if figures else []
    return {"csv": csv_path, "figures": fig_paths, "scenarios": len(summaries)}
