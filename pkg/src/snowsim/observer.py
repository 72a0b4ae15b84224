"""Ground-truth recomputation over traces.

Everything here is a pure function of the trace: per-slot lock coverage,
the population-wide longest-covered strings (the 75% and 60% threshold
quantities), the two empirical persistence/justification checks, the
consistency verdicts, the delivery-contract audit, and latency metrics.

Binary-protocol traces reuse the string machinery with the two colors
encoded as the one-bit strings "0" and "1".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import median

from snowsim.bitstrings import lcp_len, supported_prefix
from snowsim.simnet import ProtocolSpec, audit_delivery
from snowsim.trace import Trace

INF = 1 << 60


@dataclass
class Verdict:
    name: str
    status: str  # PASS | FAIL | UNKNOWN | SKIP
    detail: str = ""
    pointer: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.status in ("PASS", "SKIP")

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "detail": self.detail,
                "pointer": list(self.pointer) if self.pointer else None}


class Observer:
    """Parsed view of one trace with the derived global quantities."""

    def __init__(self, trace: Trace):
        self.trace = trace
        h = trace.header
        self.protocol = h["protocol"]
        self.variant = h.get("variant", "base")
        self.n = h["params"]["n"]
        self.delta = h["params"]["delta"]
        self.horizon = h["horizon"]
        self.byzantine = set(h["byzantine"])
        self.correct = [p for p in range(self.n) if p not in self.byzantine]
        self.full_trace = h.get("trace_level", "full") == "full"
        self.outputs: dict[int, tuple[int, int, int]] = {}  # pid -> (value, slot, round)
        self.final_events: list[tuple[int, int, str]] = []  # (slot, pid, sigma)
        self.tfinal_events: list[tuple[int, int, str]] = []
        self.lock_intervals: dict[int, list[list]] = {p: [] for p in self.correct}
        self.pref_steps: dict[int, list[tuple[int, str]]] = {p: [] for p in self.correct}
        self.round_starts: dict[int, list[tuple[int, int]]] = {p: [] for p in self.correct}
        self.block_arrivals: dict[int, dict[str, int]] = {p: {} for p in self.correct}
        self._scan()
        self._sigma_cache: dict[tuple, list] = {}
        self._coverage_cache: dict[int, dict[int, list[str]]] = {}

    # -- trace scan ----------------------------------------------------------

    def _scan(self) -> None:
        genesis_sigma = self._genesis_sigma()
        open_locks: dict[int, dict[str, list]] = {p: {} for p in self.correct}
        for ev in self.trace.events:
            kind = ev[0]
            if kind == "lock":
                _, slot, pid, sigma, on = ev
                if on:
                    last = open_locks[pid].get(sigma)
                    if last is not None and last[2] == slot:
                        last[2] = INF  # released and re-acquired within one
                        # slot: locked at the end of it, so continuous
                        open_locks[pid][sigma] = last
                        continue
                    iv = [sigma, slot, INF]
                    open_locks[pid][sigma] = iv
                    self.lock_intervals[pid].append(iv)
                else:
                    iv = open_locks[pid].get(sigma)
                    if iv is not None and iv[2] == INF:
                        iv[2] = slot
            elif kind == "pref":
                _, slot, pid, sigma = ev
                self.pref_steps[pid].append((slot, sigma))
            elif kind == "final":
                _, slot, pid, sigma = ev
                self.final_events.append((slot, pid, sigma))
            elif kind == "tfinal":
                _, slot, pid, sigma = ev
                self.tfinal_events.append((slot, pid, sigma))
            elif kind == "output":
                _, slot, pid, value, rnd = ev
                self.outputs[pid] = (value, slot, rnd)
            elif kind == "round":
                _, slot, pid, s, _sample = ev
                self.round_starts[pid].append((slot, s))
            elif kind == "block":
                _, slot, pid, block_id, _src = ev
                self.block_arrivals[pid].setdefault(block_id, slot)
        for pid in self.correct:
            if self.protocol == "snowman" and not self.pref_steps[pid]:
                self.pref_steps[pid].append((0, genesis_sigma))

    def _genesis_sigma(self) -> str:
        if self.protocol != "snowman":
            return ""
        spec = ProtocolSpec(
            kind="snowman",
            hash_bits=self.trace.header["hash_bits"],
            genesis_payload=bytes.fromhex(self.trace.header["genesis_payload"]),
        )
        genesis, _ = spec.build_blocks()
        return genesis.id

    # -- per-slot lock coverage ----------------------------------------------

    def covered_string(self, pid: int, t: int, window: int) -> str | None:
        """Longest string this process was locked on (via one lock) at
        every slot in [t-window, t]; None if no lock covers the window."""
        best = None
        for sigma, a, r in self.lock_intervals[pid]:
            if a <= t - window and r > t and (best is None or len(sigma) > len(best)):
                best = sigma
        return best

    def _coverage(self, window: int) -> dict[int, list[str]]:
        """Per process, per slot: the longest lock covering [t-window, t]
        ('' when none), computed by one event sweep per process."""
        cached = self._coverage_cache.get(window)
        if cached is not None:
            return cached
        horizon = self.horizon
        out: dict[int, list[str]] = {}
        for pid in self.correct:
            adds: dict[int, list] = {}
            removes: dict[int, list] = {}
            for sigma, a, r in self.lock_intervals[pid]:
                start = a + window  # first slot whose window this covers
                if start > horizon or r <= start:
                    continue
                adds.setdefault(start, []).append(sigma)
                if r <= horizon:
                    removes.setdefault(r, []).append(sigma)
            arr = [""] * (horizon + 1)
            active: dict[int, list] = {}  # length -> [sigma, count]
            curmax = -1
            for t in range(horizon + 1):
                for sigma in removes.get(t, ()):
                    entry = active.get(len(sigma))
                    if entry:
                        entry[1] -= 1
                        if entry[1] == 0:
                            del active[len(sigma)]
                            if len(sigma) == curmax:
                                curmax = max(active) if active else -1
                for sigma in adds.get(t, ()):
                    entry = active.get(len(sigma))
                    if entry:
                        entry[1] += 1
                    else:
                        active[len(sigma)] = [sigma, 1]
                        curmax = max(curmax, len(sigma))
                arr[t] = active[curmax][0] if curmax >= 0 else ""
            out[pid] = arr
        self._coverage_cache[window] = out
        return out

    def pref_at(self, pid: int, t: int) -> str | None:
        steps = self.pref_steps[pid]
        best = None
        for slot, sigma in steps:
            if slot <= t:
                best = sigma
            else:
                break
        return best

    def _threshold_string(self, t: int, window: int, num: int, den: int,
                          safe: bool = False) -> str | None:
        """Longest string such that at least num/den of correct processes
        are locked (safely locked, if asked) on extensions of it
        throughout [t-window, t]."""
        coverage = self._coverage(window)
        members = []
        for pid in self.correct:
            m = coverage[pid][t] or None
            if m is not None and safe and not self._pref_compat_window(pid, m, t):
                m = None
            members.append(m)
        count = len(self.correct)
        threshold = -(-num * count // den)  # ceil
        return supported_prefix([m for m in members if m is not None], threshold)

    def _pref_compat_window(self, pid: int, sigma: str, t: int) -> bool:
        """pref stayed compatible with sigma at every slot in [t-2d, t]."""
        lo = t - 2 * self.delta
        steps = self.pref_steps[pid]
        current = None
        for slot, pv in steps:
            if slot <= lo:
                current = pv
            elif slot <= t:
                if not _compat(pv, sigma):
                    return False
            else:
                break
        return current is None or _compat(current, sigma)

    def sigma_t(self, t: int) -> str | None:
        """75% of correct locked on extensions for >= 2*delta at t."""
        return self._threshold_string(t, 2 * self.delta, 3, 4)

    def sigma_t_star(self, t: int) -> str | None:
        """75% of correct locked on extensions at t."""
        return self._threshold_string(t, 0, 3, 4)

    def tau_t(self, t: int) -> str | None:
        """60% of non-Byzantine safely locked on extensions at t."""
        return self._threshold_string(t, 0, 3, 5, safe=True)

    def tau_t_star(self, t: int) -> tuple[str, bool]:
        """Longest (possibly unbounded) string with 60% pref-compatibility
        at t; the flag reports the unbounded case."""
        prefs = [self.pref_at(pid, t) for pid in self.correct]
        prefs = [p for p in prefs if p is not None]
        count = len(self.correct)
        threshold = -(-3 * count // 5)
        sigma = ""
        while True:
            support = [0, 0]
            for side in (0, 1):
                cand = sigma + "01"[side]
                support[side] = sum(1 for p in prefs if _compat(p, cand))
            if support[0] >= threshold and support[1] >= threshold:
                return sigma, True
            if support[0] >= threshold:
                sigma += "0"
            elif support[1] >= threshold:
                sigma += "1"
            else:
                return sigma, False

    def sigma_series(self) -> list:
        key = ("sigma", 2 * self.delta)
        if key not in self._sigma_cache:
            self._sigma_cache[key] = [self.sigma_t(t) for t in range(self.horizon + 1)]
        return self._sigma_cache[key]

    # -- checks ---------------------------------------------------------------

    def check_lock_order(self) -> Verdict:
        """The locked set of every correct process is totally ordered by
        the prefix relation at every slot.  A set of pairwise-compatible
        strings is a chain, so compatibility with the longest active
        member implies compatibility with all of them."""
        for pid in self.correct:
            events = sorted(
                [(a, 1, s) for s, a, _ in self.lock_intervals[pid]]
                + [(r, 0, s) for s, _, r in self.lock_intervals[pid] if r != INF],
                key=lambda x: (x[0], x[1]),
            )
            active: dict[int, str] = {}
            curmax = -1
            for slot, on, sigma in events:
                if on:
                    if curmax >= 0 and not _compat(active[curmax], sigma):
                        return Verdict("lock_order", "FAIL",
                                       f"process {pid} locked on incompatible strings",
                                       (slot, pid))
                    active[len(sigma)] = sigma
                    curmax = max(curmax, len(sigma))
                else:
                    active.pop(len(sigma), None)
                    if len(sigma) == curmax:
                        curmax = max(active) if active else -1
        return Verdict("lock_order", "PASS")

    def check_dagger1(self) -> Verdict:
        """Whenever 75% of correct processes were locked on the same
        string for a full 2*delta window, those processes stay locked on
        extensions of it от then on."""
        sigmas = self.sigma_series()
        tops = self._coverage(0)
        windowed = self._coverage(2 * self.delta)
        suffix: dict[int, list[str]] = {}
        for pid in self.correct:
            top = tops[pid]
            suf = [""] * (self.horizon + 1)
            acc = None
            for u in range(self.horizon, -1, -1):
                acc = top[u] if acc is None else acc[:lcp_len(acc, top[u])]
                suf[u] = acc
            suffix[pid] = suf
        for t, sigma in enumerate(sigmas):
            if sigma is None:
                continue
            for pid in self.correct:
                m = windowed[pid][t]
                if not m or not m.startswith(sigma):
                    continue  # not a member of the covering set
                if not suffix[pid][t].startswith(sigma):
                    return Verdict("dagger1", "FAIL",
                                   f"process {pid} later unlocked from {sigma!r}",
                                   (t, pid))
        return Verdict("dagger1", "PASS")

    def check_dagger2(self) -> Verdict:
        """Every output/finalization was preceded by a 75%/2*delta lock
        interval covering the decided string."""
        sigmas = self.sigma_series()
        if self.protocol == "snowman":
            decisions = [(slot, pid, sigma, slot - 1)
                         for slot, pid, sigma in self.final_events
                         if pid in set(self.correct)]
        else:
            decisions = [(slot, pid, str(value), slot)
                         for pid, (value, slot, _r) in sorted(self.outputs.items())]
        for slot, pid, sigma, latest in decisions:
            ok = any(
                sigmas[u] is not None and sigmas[u].startswith(sigma)
                for u in range(min(latest, self.horizon), -1, -1)
            )
            if not ok:
                return Verdict("dagger2", "FAIL",
                               f"process {pid} decided {len(sigma)} bits with no "
                               f"qualifying lock interval", (slot, pid))
        return Verdict("dagger2", "PASS")

    def check_consistency(self) -> Verdict:
        """Binary: agreement.  Chain: per-process finality monotone (i)
        and pairwise prefix-compatibility of all finals (ii)."""
        if self.protocol != "snowman":
            values = {v for v, _, _ in self.outputs.values()}
            if len(values) > 1:
                return Verdict("consistency", "FAIL", f"conflicting outputs {values}")
            return Verdict("consistency", "PASS")
        last: dict[int, str] = {}
        for slot, pid, sigma in self.final_events:
            prev = last.get(pid)
            if prev is not None and not sigma.startswith(prev):
                return Verdict("consistency", "FAIL",
                               f"process {pid} shortened its final string", (slot, pid))
            last[pid] = sigma
        finals = sorted({sigma for _, _, sigma in self.final_events}, key=len)
        for a, b in zip(finals, finals[1:]):
            if not b.startswith(a):
                return Verdict("consistency", "FAIL",
                               "incompatible finalized strings across processes")
        return Verdict("consistency", "PASS")

    def check_delivery(self) -> Verdict:
        if not self.full_trace:
            status = "PASS" if self.trace.meta.get("clamped", 0) >= 0 else "FAIL"
            return Verdict("delivery", status, "audited inline (state-level trace)")
        bad = audit_delivery(self.trace)
        if bad:
            ev = bad[0]
            return Verdict("delivery", "FAIL",
                           f"envelope seq {ev[2]} delivered at {ev[5]}", (ev[1], ev[3]))
        return Verdict("delivery", "PASS")

    def temp_reversions(self) -> int:
        """Temporarily-final strings later contradicted by full finality."""
        count = 0
        finals = {sigma for _, _, sigma in self.final_events}
        for _, _, tf in self.tfinal_events:
            if any(not _compat(tf, f) for f in finals):
                count += 1
        return count

    def check_all(self) -> list[Verdict]:
        out = [self.check_consistency(), self.check_delivery(), self.check_lock_order()]
        if self.protocol in ("sf_diamond", "snowman"):
            out.append(self.check_dagger1())
            out.append(self.check_dagger2())
        return out

    # -- metrics ---------------------------------------------------------------

    def latency_report(self) -> dict:
        report: dict = {"protocol": self.protocol}
        if self.protocol != "snowman":
            rounds = [r for _, _, r in self.outputs.values()]
            slots = [s for _, s, _ in self.outputs.values()]
            report["outputs"] = len(self.outputs)
            report["output_round_median"] = median(rounds) if rounds else None
            report["output_round_min"] = min(rounds) if rounds else None
            report["output_round_max"] = max(rounds) if rounds else None
            report["output_slot_median"] = median(slots) if slots else None
            return report
        spec = ProtocolSpec(
            kind="snowman",
            blocks=[(b["name"], b["parent"], bytes.fromhex(b["payload"]))
                    for b in self.trace.header["blocks"]],
            hash_bits=self.trace.header["hash_bits"],
            genesis_payload=bytes.fromhex(self.trace.header["genesis_payload"]),
        )
        genesis, by_name = spec.build_blocks()
        chains: dict[str, str] = {}
        for name, block in by_name.items():
            hb = block.id
            parent = block.parent
            while parent is not None:
                parent_block = next(b for b in by_name.values() if b.id == parent)
                hb = parent_block.id + hb
                parent = parent_block.parent
            chains[name] = hb
        blocks_table = []
        for name, block in by_name.items():
            if name == "genesis":
                continue
            hb = chains[name]
            rows = {"block": name, "arrival": [], "first_lock": [], "first_tfinal": [],
                    "first_final": [], "rounds_to_tfinal": []}
            for pid in self.correct:
                arrival = self.block_arrivals[pid].get(block.id)
                rows["arrival"].append(arrival)
                lock_slot = next((a for s, a, _ in sorted(self.lock_intervals[pid],
                                                          key=lambda iv: iv[1])
                                  if s.startswith(hb)), None)
                rows["first_lock"].append(lock_slot)
                tf_slot = next((slot for slot, p, sigma in self.tfinal_events
                                if p == pid and sigma.startswith(hb)), None)
                rows["first_tfinal"].append(tf_slot)
                fin_slot = next((slot for slot, p, sigma in self.final_events
                                 if p == pid and sigma.startswith(hb)), None)
                rows["first_final"].append(fin_slot)
                if arrival is not None and tf_slot is not None:
                    nrounds = sum(1 for slot, _s in self.round_starts[pid]
                                  if arrival < slot <= tf_slot)
                    rows["rounds_to_tfinal"].append(nrounds)
            blocks_table.append({
                "block": name,
                "arrival_median": _med(rows["arrival"]),
                "first_lock_median": _med(rows["first_lock"]),
                "first_tfinal_median": _med(rows["first_tfinal"]),
                "first_final_median": _med(rows["first_final"]),
                "first_final_max": _max(rows["first_final"]),
                "rounds_to_tfinal_median": _med(rows["rounds_to_tfinal"]),
                "finalized_count": sum(1 for x in rows["first_final"] if x is not None),
                "tfinal_count": sum(1 for x in rows["first_tfinal"] if x is not None),
            })
        report["blocks"] = blocks_table
        report["temp_reversions"] = self.temp_reversions()
        return report


def _compat(a: str, b: str) -> bool:
    return a.startswith(b) if len(a) >= len(b) else b.startswith(a)


def _med(values: list):
    xs = [v for v in values if v is not None]
    return median(xs) if xs else None


def _max(values: list):
    xs = [v for v in values if v is not None]
    return max(xs) if xs else None
