"""Deterministic discrete-event simulator under partial synchrony.

Each global timeslot: deliver due envelopes, tick Byzantine strategies,
then tick correct state machines in ascending id order against their
offset local clocks.  Every send is assigned its delivery slot up front
by the adversary's delay policy, clamped into
``(send, max(send, GST) + delta]``, so the delivery contract holds by
construction and is re-audited post hoc from the trace.

The whole run is a pure function of its arguments: randomness comes from
named sub-streams of the run seed (one per process per role), so adding
a strategy or changing the delay policy never perturbs correct-process
sampling.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from random import Random

from snowsim.adversary import BUILTIN_STRATEGIES
from snowsim.chainstore import Block, make_genesis
from snowsim.params import ProtocolParams
from snowsim.snowflake_diamond import SfDiamondProcess
from snowsim.snowflake_plus import SfPlusProcess
from snowsim.snowman import SnowmanProcess
from snowsim.trace import Trace, digest_update


def derive_rng(seed: int, stream: str) -> Random:
    """Independent PRNG sub-stream, stable across runs and platforms."""
    digest = hashlib.sha256(f"{seed}/{stream}".encode("utf-8")).digest()
    return Random(int.from_bytes(digest[:8], "big"))


def sample_oracle(seed: int, pid: int, n: int, k: int, rounds: int) -> list[tuple[int, ...]]:
    """Reference reimplementation of a process's sampling stream, for tests."""
    rng = derive_rng(seed, f"sample/{pid}")
    return [tuple(rng.randrange(n) for _ in range(k)) for _ in range(rounds)]


# -- delay policies ----------------------------------------------------------

def _policy_fast(send, sender, receiver, gst, delta, rng, world):
    return send + 1


def _policy_max(send, sender, receiver, gst, delta, rng, world):
    return max(send, gst) + delta


def _policy_uniform(send, sender, receiver, gst, delta, rng, world):
    return rng.randint(send + 1, max(send, gst) + delta)


def _policy_starve_pre_gst(send, sender, receiver, gst, delta, rng, world):
    return max(send, gst) + delta if send < gst else send + 1


def _policy_split_half(send, sender, receiver, gst, delta, rng, world):
    return max(send, gst) + delta if receiver % 2 else send + 1


DELAY_POLICIES = {
    "fast": _policy_fast,
    "max": _policy_max,
    "uniform": _policy_uniform,
    "starve_pre_gst": _policy_starve_pre_gst,
    "split_half": _policy_split_half,
}


@dataclass
class AdversarySchedule:
    """Everything the adversary controls besides Byzantine behavior."""

    gst: int = 0
    delay: str = "fast"
    byzantine: tuple[int, ...] = ()
    clock_offsets: dict[int, int] = field(default_factory=dict)
    crash: dict[int, int] = field(default_factory=dict)  # pid -> first dead slot
    block_arrival: list[tuple[int, int, str]] = field(default_factory=list)
    budget: int | None = None  # per-tick Byzantine message budget

    def validate(self, params: ProtocolParams) -> None:
        if len(self.byzantine) > params.f:
            raise ValueError(
                f"{len(self.byzantine)} Byzantine processes exceed the bound f={params.f}"
            )
        if self.delay not in DELAY_POLICIES:
            raise ValueError(f"unknown delay policy {self.delay!r}")
        if params.delta_star is not None and self.clock_offsets:
            offs = [self.clock_offsets.get(i, 0) for i in range(params.n)]
            if max(offs) - min(offs) > params.delta_star:
                raise ValueError("clock offsets exceed delta_star")


@dataclass
class ProtocolSpec:
    """What the correct processes run and what the environment feeds them."""

    kind: str  # sf_plus | sf_diamond | snowman
    variant: str = "base"
    inputs: tuple[int, ...] = ()
    blocks: list[tuple[str, str, bytes]] = field(default_factory=list)  # (name, parent, payload)
    hash_bits: int = 32
    genesis_payload: bytes = b"genesis"

    def build_blocks(self) -> tuple[Block, dict[str, Block]]:
        genesis = make_genesis(self.hash_bits, self.genesis_payload)
        by_name: dict[str, Block] = {"genesis": genesis}
        for name, parent, payload in self.blocks:
            if name in by_name:
                raise ValueError(f"duplicate block name {name!r}")
            if parent not in by_name:
                raise ValueError(f"block {name!r} references unknown parent {parent!r}")
            parent_block = by_name[parent]
            by_name[name] = Block(
                id=_child_id(parent_block, payload),
                parent=parent_block.id,
                height=parent_block.height + 1,
                payload=payload,
            )
        return genesis, by_name


def _child_id(parent: Block, payload: bytes) -> str:
    from snowsim.chainstore import hash_bits
    return hash_bits(parent.id, payload, parent.width)


class World:
    """Read-only global view handed to strategies and delay policies."""

    def __init__(self, params, spec, genesis, blocks_by_name, machines):
        self.params = params
        self.protocol_kind = spec.kind
        self.variant = spec.variant
        self.genesis = genesis
        self.blocks_by_name = blocks_by_name
        self.machines = machines  # correct pid -> state machine
        self.slot = 0
        self._inputs = spec.inputs
        self._chains: list[tuple[Block, ...]] | None = None
        self._vals_cache: tuple[int, list[int]] | None = None
        self._prefs_cache: tuple[int, list[str]] | None = None

    def input_of(self, pid: int) -> int:
        return self._inputs[pid] if self._inputs else 0

    def correct_vals(self) -> list[int]:
        if self._vals_cache is None or self._vals_cache[0] != self.slot:
            self._vals_cache = (self.slot, [m.val for m in self.machines.values()])
        return self._vals_cache[1]

    def correct_prefs(self) -> list[str]:
        if self._prefs_cache is None or self._prefs_cache[0] != self.slot:
            self._prefs_cache = (self.slot, [m.pref for m in self.machines.values()])
        return self._prefs_cache[1]

    def known_chains(self) -> list[tuple[Block, ...]]:
        """Every chain derivable from the block script, genesis first,
        then by (height, definition order)."""
        if self._chains is None:
            chains = [(self.genesis,)]
            resolved = {self.genesis.id: (self.genesis,)}
            for block in self.blocks_by_name.values():
                if block.parent is None:
                    continue
                parent_chain = resolved[block.parent]
                chain = parent_chain + (block,)
                resolved[block.id] = chain
                chains.append(chain)
            self._chains = chains
        return self._chains


def run(params: ProtocolParams, schedule: AdversarySchedule, protocol: ProtocolSpec,
        horizon: int, seed: int, strategies: dict[int, str] | None = None,
        trace_level: str = "full", tick_order: str = "ascending") -> Trace:
    """Execute one deterministic run and return its trace."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    schedule.validate(params)
    strategies = strategies or {}
    byz = tuple(sorted(schedule.byzantine))
    if sorted(strategies) != sorted(byz):
        raise ValueError("strategies must be defined exactly for the Byzantine set")

    genesis, blocks_by_name = protocol.build_blocks()
    n = params.n
    correct = [pid for pid in range(n) if pid not in set(byz)]
    machines: dict[int, object] = {}
    for pid in correct:
        rng = derive_rng(seed, f"sample/{pid}")
        if protocol.kind == "sf_plus":
            machines[pid] = SfPlusProcess(pid, params, protocol.inputs[pid], rng)
        elif protocol.kind == "sf_diamond":
            machines[pid] = SfDiamondProcess(pid, params, protocol.inputs[pid], rng)
        elif protocol.kind == "snowman":
            machines[pid] = SnowmanProcess(pid, params, genesis, rng, protocol.variant)
        else:
            raise ValueError(f"unknown protocol kind {protocol.kind!r}")

    world = World(params, protocol, genesis, blocks_by_name, machines)
    strat_objs = {
        pid: BUILTIN_STRATEGIES[name](pid, derive_rng(seed, f"byz/{pid}"), world)
        for pid, name in strategies.items()
    }
    delay_fn = DELAY_POLICIES[schedule.delay]
    delay_rng = derive_rng(seed, "delay")
    budget = schedule.budget if schedule.budget is not None else 4 * params.k

    header = {
        "protocol": protocol.kind,
        "variant": protocol.variant,
        "params": params.as_dict(),
        "seed": seed,
        "horizon": horizon,
        "gst": schedule.gst,
        "delay": schedule.delay,
        "byzantine": list(byz),
        "strategies": {str(p): strategies[p] for p in byz},
        "offsets": {str(p): schedule.clock_offsets.get(p, 0) for p in range(n)
                    if schedule.clock_offsets.get(p, 0)},
        "crash": {str(p): s for p, s in sorted(schedule.crash.items())},
        "inputs": list(protocol.inputs),
        "hash_bits": protocol.hash_bits,
        "genesis_payload": protocol.genesis_payload.hex(),
        "blocks": [
            {"name": name, "parent": parent, "payload": payload.hex()}
            for name, parent, payload in protocol.blocks
        ],
        "block_arrival": [list(x) for x in schedule.block_arrival],
        "trace_level": trace_level,
    }
    trace = Trace(header)
    full = trace_level == "full"

    arrivals: dict[int, list[tuple[int, Block]]] = {}
    if protocol.kind == "snowman":
        for slot, pid, name in sorted(schedule.block_arrival):
            arrivals.setdefault(slot, []).append((pid, blocks_by_name[name]))

    buckets: list[list] = [[] for _ in range(horizon + params.delta + 2)]
    seq = 0
    gst, delta = schedule.gst, params.delta
    last_summary: dict[int, str] = {pid: "" for pid in correct}
    last_digest: dict[int, int] = {pid: 0 for pid in correct}
    shuffle_rng = None
    if tick_order.startswith("shuffled"):
        shuffle_rng = derive_rng(seed, f"tickorder/{tick_order}")

    def dispatch(slot: int, sender: int, receiver: int, payload: tuple) -> None:
        nonlocal seq
        if not 0 <= receiver < n:
            trace.add(("noise", slot, sender, f"bad receiver {receiver}"))
            return
        lo, hi = slot + 1, max(slot, gst) + delta
        deliver = delay_fn(slot, sender, receiver, gst, delta, delay_rng, world)
        if not lo <= deliver <= hi:
            deliver = min(max(deliver, lo), hi)
            trace.meta["clamped"] += 1
            trace.add(("noise", slot, sender, "schedule violation clamped"))
        trace.meta["sends"] += 1
        if full:
            trace.add(("send", slot, seq, sender, receiver, deliver, payload))
        seq += 1
        if deliver < len(buckets):
            buckets[deliver].append((sender, receiver, payload))
        else:
            trace.meta["dropped_past_horizon"] += 1

    for slot in range(horizon + 1):
        world.slot = slot
        for pid, block in arrivals.get(slot, ()):
            machine = machines.get(pid)
            if machine is not None and protocol.kind == "snowman":
                machine.add_block(block)
        inboxes: dict[int, list] = {}
        for sender, receiver, payload in buckets[slot]:
            inboxes.setdefault(receiver, []).append((sender, payload))
        buckets[slot] = []
        for pid in byz:
            out = strat_objs[pid].tick(slot, inboxes.get(pid, []))
            if len(out) > budget:
                trace.meta["budget_clamps"] += 1
                out = out[:budget]
            for receiver, payload in out:
                dispatch(slot, pid, receiver, payload)
        order = correct
        if shuffle_rng is not None:
            order = list(correct)
            shuffle_rng.shuffle(order)
        for pid in order:
            if pid in schedule.crash and slot >= schedule.crash[pid]:
                continue
            machine = machines[pid]
            local = slot + schedule.clock_offsets.get(pid, 0)
            out = machine.on_tick(local, inboxes.get(pid, []))
            for receiver, payload in out:
                dispatch(slot, pid, receiver, payload)
            for ev in machine.trace_out:
                trace.add((ev[0], slot, pid, *ev[1:]))
            machine.trace_out.clear()
            summary = machine.state_summary()
            if summary != last_summary[pid]:
                last_summary[pid] = summary
                last_digest[pid] = digest_update(last_digest[pid], summary)
                trace.add(("state", slot, pid, last_digest[pid], summary))
    return trace


def audit_delivery(trace: Trace) -> list[tuple]:
    """Post-hoc check of the partial-synchrony delivery contract over a
    full trace: every envelope must satisfy
    deliver <= max(send, GST) + delta.  Returns offending send events."""
    gst = trace.header["gst"]
    delta = trace.header["params"]["delta"]
    bad = []
    for ev in trace.iter_kind("send"):
        _, slot, _seq, _snd, _rcv, deliver, _payload = ev
        if not slot < deliver <= max(slot, gst) + delta:
            bad.append(ev)
    return bad
