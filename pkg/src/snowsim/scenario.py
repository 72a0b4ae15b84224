"""Scenario configs: a fully serializable description of an experiment.

A scenario file (JSON) plus a seed reproduces a trace byte for byte.
Everything randomized (inputs, clock offsets, delays, sampling) comes
from named sub-streams of the seed, so scenario edits that add knobs do
not silently perturb unrelated runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from snowsim.adversary import BUILTIN_STRATEGIES
from snowsim.params import ProtocolParams, load_params_file, validate_params
from snowsim.simnet import DELAY_POLICIES, AdversarySchedule, ProtocolSpec, derive_rng

PROTOCOLS = ("sf_plus", "sf_diamond", "snowman")


class ScenarioError(ValueError):
    """A scenario file failed validation; the message names the field."""


@dataclass
class Scenario:
    name: str
    protocol: str
    params: ProtocolParams
    horizon: int
    variant: str = "base"
    gst: int = 0
    delay: str = "fast"
    budget: int | None = None
    byzantine_count: int = 0
    strategy: str | None = None
    offsets_max: int = 0
    crash: dict[int, int] = field(default_factory=dict)
    inputs: dict = field(default_factory=lambda: {"kind": "unanimous", "value": 1})
    blocks: list[dict] = field(default_factory=list)
    hash_bits: int = 32
    seeds: int | list[int] = 1
    seed_base: int = 0
    trace_level: str = "full"
    keep_traces: str = "failures"  # failures | all | none

    def seed_list(self) -> list[int]:
        if isinstance(self.seeds, list):
            return list(self.seeds)
        return [self.seed_base + i for i in range(self.seeds)]

    def byzantine_ids(self) -> tuple[int, ...]:
        n = self.params.n
        return tuple(range(n - self.byzantine_count, n))

    def build(self, seed: int) -> tuple[AdversarySchedule, ProtocolSpec, dict[int, str]]:
        """Materialize the per-seed schedule, protocol spec and strategy map."""
        p = self.params
        byz = self.byzantine_ids()
        offsets: dict[int, int] = {}
        if self.offsets_max:
            rng = derive_rng(seed, "offsets")
            offsets = {pid: rng.randrange(self.offsets_max + 1) for pid in range(p.n)}
        inputs = self._build_inputs(seed)
        blocks, arrival = self._build_blocks()
        schedule = AdversarySchedule(
            gst=self.gst, delay=self.delay, byzantine=byz, clock_offsets=offsets,
            crash=dict(self.crash), block_arrival=arrival, budget=self.budget,
        )
        spec = ProtocolSpec(
            kind=self.protocol, variant=self.variant, inputs=inputs,
            blocks=blocks, hash_bits=self.hash_bits,
        )
        strategies = {pid: self.strategy for pid in byz}
        return schedule, spec, strategies

    def _build_inputs(self, seed: int) -> tuple[int, ...]:
        n = self.params.n
        kind = self.inputs.get("kind", "unanimous")
        if kind == "unanimous":
            return (int(self.inputs.get("value", 1)),) * n
        if kind == "split":
            return tuple(pid % 2 for pid in range(n))
        if kind == "random":
            rng = derive_rng(seed, "inputs")
            return tuple(rng.randrange(2) for _ in range(n))
        if kind == "list":
            values = self.inputs["values"]
            if len(values) != n:
                raise ScenarioError(f"inputs.values must have length {n}")
            return tuple(int(v) for v in values)
        raise ScenarioError(f"inputs.kind {kind!r} unknown")

    def _build_blocks(self) -> tuple[list, list]:
        defs = []
        arrival = []
        n = self.params.n
        for b in self.blocks:
            name = b["name"]
            payload = b.get("payload", name).encode("utf-8")
            defs.append((name, b.get("parent", "genesis"), payload))
            arr = b.get("arrival", {"kind": "flood", "slot": 1})
            kind = arr.get("kind", "flood")
            if kind == "flood":
                arrival.extend((int(arr["slot"]), pid, name) for pid in range(n))
            elif kind == "split":
                early, late = int(arr["early"]), int(arr["late"])
                arrival.extend(
                    (early if pid % 2 == 0 else late, pid, name) for pid in range(n)
                )
            elif kind == "list":
                arrival.extend((int(s), int(pid), name) for s, pid in arr["arrivals"])
            else:
                raise ScenarioError(f"block {name!r}: arrival.kind {kind!r} unknown")
        return defs, arrival

    # -- (de)serialization ----------------------------------------------------

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "protocol": self.protocol,
            "variant": self.variant,
            "params": self.params.as_dict(),
            "horizon": self.horizon,
            "gst": self.gst,
            "delay": self.delay,
            "budget": self.budget,
            "byzantine": {"count": self.byzantine_count, "strategy": self.strategy},
            "offsets_max": self.offsets_max,
            "crash": {str(k): v for k, v in self.crash.items()},
            "inputs": self.inputs,
            "blocks": self.blocks,
            "hash_bits": self.hash_bits,
            "seeds": self.seeds,
            "seed_base": self.seed_base,
            "trace_level": self.trace_level,
            "keep_traces": self.keep_traces,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "Scenario":
        try:
            if "params_file" in d:
                import os
                params = load_params_file(os.path.join(base_dir, d["params_file"]))
            else:
                params = ProtocolParams.from_dict(d["params"])
            byz = d.get("byzantine", {}) or {}
            scenario = cls(
                name=d["name"],
                protocol=d["protocol"],
                variant=d.get("variant", "base"),
                params=params,
                horizon=int(d["horizon"]),
                gst=int(d.get("gst", 0)),
                delay=d.get("delay", "fast"),
                budget=d.get("budget"),
                byzantine_count=int(byz.get("count", 0)),
                strategy=byz.get("strategy"),
                offsets_max=int(d.get("offsets_max", 0)),
                crash={int(k): int(v) for k, v in (d.get("crash") or {}).items()},
                inputs=d.get("inputs", {"kind": "unanimous", "value": 1}),
                blocks=d.get("blocks", []),
                hash_bits=int(d.get("hash_bits", 32)),
                seeds=(list(map(int, d["seeds"])) if isinstance(d.get("seeds"), list)
                       else int(d.get("seeds", 1))),
                seed_base=int(d.get("seed_base", 0)),
                trace_level=d.get("trace_level", "full"),
                keep_traces=d.get("keep_traces", "failures"),
            )
        except KeyError as exc:
            raise ScenarioError(f"missing scenario field {exc.args[0]!r}") from exc
        scenario.validate()
        return scenario

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ScenarioError(f"protocol {self.protocol!r} unknown")
        report = validate_params(self.params)
        if not report.ok:
            raise ScenarioError(f"invalid params: {', '.join(report.failed())}")
        if self.horizon < 1:
            raise ScenarioError("horizon must be >= 1")
        if self.delay not in DELAY_POLICIES:
            raise ScenarioError(f"delay policy {self.delay!r} unknown")
        if self.byzantine_count:
            if self.byzantine_count > self.params.f:
                raise ScenarioError("byzantine.count exceeds params.f")
            if self.strategy not in BUILTIN_STRATEGIES:
                raise ScenarioError(f"byzantine.strategy {self.strategy!r} unknown")
        if self.protocol == "snowman" and self.variant not in ("base", "clock_sync", "temp_final"):
            raise ScenarioError(f"variant {self.variant!r} unknown")
        if self.params.delta_star is not None and self.offsets_max > self.params.delta_star:
            raise ScenarioError("offsets_max exceeds delta_star")
        if self.trace_level not in ("full", "state"):
            raise ScenarioError(f"trace_level {self.trace_level!r} unknown")
        if self.keep_traces not in ("failures", "all", "none"):
            raise ScenarioError(f"keep_traces {self.keep_traces!r} unknown")
        names = {"genesis"}
        for b in self.blocks:
            if b["name"] in names:
                raise ScenarioError(f"duplicate block name {b['name']!r}")
            if b.get("parent", "genesis") not in names:
                raise ScenarioError(f"block {b['name']!r} has unknown parent")
            names.add(b["name"])


def load_scenario(path: str) -> Scenario:
    import os
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return Scenario.from_dict(data, base_dir=os.path.dirname(path) or ".")


def builtin_scenarios() -> dict[str, dict]:
    """Bundled scenario definitions, runnable by name."""
    paper_params = {"n": 250, "f": 49, "k": 80, "alpha1": 41, "alpha2": 72,
                    "beta": 12, "delta": 1, "delta_star": None}
    desk_params = {"n": 50, "f": 9, "k": 20, "alpha1": 11, "alpha2": 18,
                   "beta": 6, "delta": 2, "delta_star": None}
    quick_params = {"n": 50, "f": 9, "k": 20, "alpha1": 11, "alpha2": 18,
                    "beta": 6, "delta": 10, "delta_star": 0}
    return {
        "unanimous_sync": {
            "name": "unanimous_sync",
            "protocol": "sf_plus",
            "params": paper_params,
            "horizon": 26,
            "delay": "fast",
            "inputs": {"kind": "unanimous", "value": 1},
            "seeds": 100,
            "keep_traces": "failures",
        },
        "split_attack_small": {
            "name": "split_attack_small",
            "protocol": "sf_diamond",
            "params": desk_params,
            "horizon": 56,
            "gst": 28,
            "delay": "starve_pre_gst",
            "byzantine": {"count": 9, "strategy": "SPLIT_KEEPER"},
            "inputs": {"kind": "split"},
            "seeds": 1000,
            "trace_level": "full",
        },
        "snowman_two_blocks": {
            "name": "snowman_two_blocks",
            "protocol": "snowman",
            "variant": "base",
            "params": desk_params,
            "horizon": 56,
            "gst": 28,
            "delay": "starve_pre_gst",
            "byzantine": {"count": 9, "strategy": "SPLIT_KEEPER"},
            "blocks": [
                {"name": "a", "arrival": {"kind": "flood", "slot": 3}},
                {"name": "b", "arrival": {"kind": "flood", "slot": 4}},
            ],
            "hash_bits": 32,
            "seeds": 200,
        },
        "quick_finality": {
            "name": "quick_finality",
            "protocol": "snowman",
            "variant": "temp_final",
            "params": quick_params,
            "horizon": 80,
            "delay": "fast",
            "blocks": [{"name": "b1", "arrival": {"kind": "flood", "slot": 5}}],
            "hash_bits": 32,
            "seeds": 20,
        },
    }
