"""Experiment runner: seed sweeps, observer verdicts, persistence, replay.

A scenario runs once per seed; each run is checked by the observer and
summarized.  Traces are retained according to the scenario's policy
(failing seeds always keep their trace so every FAIL is replayable).
Runs execute in a process pool sized by the SNOWSIM_WORKERS environment
variable (default: the machine's CPU count).
"""

from __future__ import annotations

import hashlib
import json
import os
from multiprocessing import get_context

from snowsim.observer import Observer
from snowsim.params import ProtocolParams
from snowsim.scenario import Scenario
from snowsim.simnet import ProtocolSpec, derive_rng, run
from snowsim.trace import Trace


def worker_count() -> int:
    env = os.environ.get("SNOWSIM_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_seed(scenario: Scenario, seed: int, out_dir: str | None = None) -> dict:
    """One deterministic run plus its observer verdicts and metrics."""
    schedule, spec, strategies = scenario.build(seed)
    trace = run(scenario.params, schedule, spec, scenario.horizon, seed,
                strategies=strategies, trace_level=scenario.trace_level)
    obs = Observer(trace)
    verdicts = obs.check_all()
    ok = all(v.ok for v in verdicts)
    digest = trace_digest(trace)
    result = {
        "seed": seed,
        "ok": ok,
        "verdicts": [v.as_dict() for v in verdicts],
        "metrics": obs.latency_report(),
        "trace_digest": digest,
        "events": len(trace.events),
        "trace_path": None,
    }
    keep = scenario.keep_traces == "all" or (not ok and scenario.keep_traces == "failures")
    if keep and out_dir is not None and scenario.trace_level == "full":
        seed_dir = os.path.join(out_dir, str(seed))
        os.makedirs(seed_dir, exist_ok=True)
        path = os.path.join(seed_dir, "trace.ndjson")
        trace.write_ndjson(path)
        result["trace_path"] = path
    return result


def trace_digest(trace: Trace) -> str:
    """Digest of the final per-process state digests plus event count;
    stable across identical runs."""
    states: dict[int, int] = {}
    for ev in trace.iter_kind("state"):
        states[ev[2]] = ev[3]
    blob = json.dumps(
        {"states": {str(k): v for k, v in sorted(states.items())},
         "events": len(trace.events), "sends": trace.meta["sends"]},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _pool_entry(args: tuple) -> dict:
    scenario_dict, seed, out_dir = args
    scenario = Scenario.from_dict(scenario_dict)
    return run_seed(scenario, seed, out_dir)


def run_scenario(scenario: Scenario, out_dir: str | None = None,
                 seeds: list[int] | None = None, workers: int | None = None) -> dict:
    """Execute every seed, aggregate verdicts, write summary.json."""
    seeds = seeds if seeds is not None else scenario.seed_list()
    scen_out = None
    if out_dir is not None:
        scen_out = os.path.join(out_dir, scenario.name)
        os.makedirs(scen_out, exist_ok=True)
    nworkers = workers if workers is not None else worker_count()
    if nworkers > 1 and len(seeds) > 1:
        ctx = get_context("fork")
        with ctx.Pool(nworkers) as pool:
            results = pool.map(
                _pool_entry,
                [(scenario.as_dict(), seed, scen_out) for seed in seeds],
                chunksize=max(1, len(seeds) // (nworkers * 8) or 1),
            )
    else:
        results = [run_seed(scenario, seed, scen_out) for seed in seeds]
    failures = [r for r in results if not r["ok"]]
    verdict_counts: dict[str, int] = {}
    for r in results:
        for v in r["verdicts"]:
            if v["status"] != "PASS":
                verdict_counts[f"{v['name']}:{v['status']}"] = (
                    verdict_counts.get(f"{v['name']}:{v['status']}", 0) + 1
                )
    summary = {
        "scenario": scenario.as_dict(),
        "seeds": seeds,
        "ok": not failures,
        "runs": len(results),
        "failures": len(failures),
        "failure_seeds": [r["seed"] for r in failures],
        "non_pass_verdicts": verdict_counts,
        "summary_digest": hashlib.sha256(
            "".join(r["trace_digest"] for r in results).encode()
        ).hexdigest()[:16],
        "results": results,
    }
    if scen_out is not None:
        with open(os.path.join(scen_out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


# -- trace replay --------------------------------------------------------------


def replay_check(path: str) -> dict:
    """Re-execute every correct state machine against the trace's recorded
    inboxes and compare state digests and outbound messages."""
    trace = Trace.read_ndjson(path)
    h = trace.header
    params = ProtocolParams.from_dict(h["params"])
    spec = ProtocolSpec(
        kind=h["protocol"],
        variant=h.get("variant", "base"),
        inputs=tuple(h["inputs"]),
        blocks=[(b["name"], b["parent"], bytes.fromhex(b["payload"]))
                for b in h["blocks"]],
        hash_bits=h["hash_bits"],
        genesis_payload=bytes.fromhex(h["genesis_payload"]),
    )
    genesis, by_name = spec.build_blocks()
    blocks_by_id = {b.id: b for b in by_name.values()}
    byz = set(h["byzantine"])
    offsets = {int(k): v for k, v in h.get("offsets", {}).items()}
    crash = {int(k): v for k, v in h.get("crash", {}).items()}
    correct = [p for p in range(params.n) if p not in byz]

    from snowsim.snowflake_diamond import SfDiamondProcess
    from snowsim.snowflake_plus import SfPlusProcess
    from snowsim.snowman import SnowmanProcess
    from snowsim.trace import digest_update

    machines = {}
    for pid in correct:
        rng = derive_rng(h["seed"], f"sample/{pid}")
        if h["protocol"] == "sf_plus":
            machines[pid] = SfPlusProcess(pid, params, spec.inputs[pid], rng)
        elif h["protocol"] == "sf_diamond":
            machines[pid] = SfDiamondProcess(pid, params, spec.inputs[pid], rng)
        else:
            machines[pid] = SnowmanProcess(pid, params, genesis, rng, spec.variant)

    inboxes: dict[tuple[int, int], list] = {}
    sent: dict[tuple[int, int], list] = {}
    for ev in trace.iter_kind("send"):
        _, slot, _seq, sender, receiver, deliver, payload = ev
        inboxes.setdefault((deliver, receiver), []).append((sender, payload))
        if sender in machines:
            sent.setdefault((slot, sender), []).append((receiver, payload))
    sched_blocks: dict[tuple[int, int], list] = {}
    recorded_states: dict[int, list] = {pid: [] for pid in correct}
    for ev in trace.events:
        if ev[0] == "block" and ev[4] == "sched" and ev[2] in machines:
            sched_blocks.setdefault((ev[1], ev[2]), []).append(blocks_by_id[ev[3]])
        elif ev[0] == "state" and ev[2] in machines:
            recorded_states[ev[2]].append((ev[1], ev[3], ev[4]))

    mismatches: list[dict] = []
    digests_checked = 0
    last_summary = {pid: "" for pid in correct}
    last_digest = {pid: 0 for pid in correct}
    replayed_states: dict[int, list] = {pid: [] for pid in correct}
    for slot in range(h["horizon"] + 1):
        for pid in correct:
            if pid in crash and slot >= crash[pid]:
                continue
            machine = machines[pid]
            for block in sched_blocks.get((slot, pid), ()):
                machine.add_block(block)
            out = machine.on_tick(slot + offsets.get(pid, 0), inboxes.get((slot, pid), []))
            expected = sent.get((slot, pid), [])
            if list(out) != expected:
                mismatches.append({"kind": "outbox", "slot": slot, "proc": pid})
            machine.trace_out.clear()
            summary = machine.state_summary()
            if summary != last_summary[pid]:
                last_summary[pid] = summary
                last_digest[pid] = digest_update(last_digest[pid], summary)
                replayed_states[pid].append((slot, last_digest[pid], summary))
    for pid in correct:
        if replayed_states[pid] != recorded_states[pid]:
            mismatches.append({"kind": "state", "proc": pid})
        digests_checked += len(recorded_states[pid])
    return {"ok": not mismatches, "mismatches": mismatches,
            "digests_checked": digests_checked}
