"""Lockstep synchronous binary agreement by repeated uniform sampling.

All correct processes share one global clock; round ``s`` occupies the
interval ``[2*delta*s, 2*delta*(s+1))``.  Requests go out at the round
boundary, values are reported ``delta`` later, and the round is judged
another ``delta`` after that, at the next boundary.
"""

from __future__ import annotations

from random import Random

from snowsim import messages as msg
from snowsim.params import ProtocolParams


class ProtocolViolation(RuntimeError):
    """A driver called a state-machine hook out of order (simulator bug)."""


class SfPlusProcess:
    """Per-process state between rounds; driven by :meth:`on_tick`."""

    protocol = "sf_plus"

    def __init__(self, pid: int, params: ProtocolParams, input_bit: int, rng: Random):
        self.pid = pid
        self.p = params
        self.rng = rng
        self.val = input_bit
        self.count = 0
        self.next_round = 0
        self.samples: dict[int, tuple[int, ...]] = {}
        self._pos: dict[int, dict[int, list[int]]] = {}
        self._recv: dict[int, list] = {}
        self._ended = -1
        self._pending_reqs: dict[int, dict[int, bool]] = {}
        self.output: int | None = None
        self.output_round: int | None = None
        self.terminated = False
        self.trace_out: list[tuple] = []

    # -- spec-level operations -------------------------------------------

    def begin_round(self, s: int) -> list[tuple[int, tuple]]:
        """Sample k targets with replacement and emit one request each."""
        if self.terminated:
            raise ProtocolViolation("begin_round after termination")
        if s != self.next_round:
            raise ProtocolViolation(f"begin_round({s}) but next round is {self.next_round}")
        k, n = self.p.k, self.p.n
        sample = tuple(self.rng.randrange(n) for _ in range(k))
        self.samples[s] = sample
        pos: dict[int, list[int]] = {}
        for j, target in enumerate(sample):
            pos.setdefault(target, []).append(j)
        self._pos[s] = pos
        self._recv[s] = [None] * k
        self.next_round = s + 1
        self.trace_out.append(("round", s, sample))
        return [(target, (msg.REQ, s)) for target in sample]

    def respond(self, requester: int, s: int) -> tuple:
        """Report the present value; terminated processes keep reporting
        their output so that late samplers are not starved."""
        v = self.output if self.terminated else self.val
        return (msg.RESPV, s, v)

    def end_round(self, s: int, responses: list) -> None:
        """Apply the flip / reset / increment / output rules.

        ``responses`` is the positional response vector (length k, absent
        positions None).  The reset and increment rules count matches of
        the value held when the round is judged, before any flip this
        round takes effect; with alpha1 > k/2 the flip and increment
        rules can never both fire.
        """
        p = self.p
        if len(responses) != p.k:
            raise ValueError(f"response vector has length {len(responses)}, expected {p.k}")
        val_pre = self.val
        same = sum(1 for v in responses if v == val_pre)
        opposite = sum(1 for v in responses if v == 1 - val_pre)
        if opposite >= p.alpha1:
            self.val = 1 - val_pre
            self.count = 0
            self.trace_out.append(("val", self.val))
        if same < p.alpha2:
            self.count = 0
        if same >= p.alpha2:
            self.count += 1
        if self.count >= p.beta and not self.terminated:
            self.output = self.val
            self.output_round = s
            self.terminated = True
            self.trace_out.append(("output", self.output, s))
        self._ended = max(self._ended, s)

    # -- simulator driver --------------------------------------------------

    def on_tick(self, t: int, inbox: list) -> list[tuple[int, tuple]]:
        for sender, payload in inbox:
            kind = payload[0]
            if kind == msg.REQ:
                self._pending_reqs.setdefault(payload[1], {}).setdefault(sender, True)
            elif kind == msg.RESPV:
                s, v = payload[1], payload[2]
                if s <= self._ended or s not in self._recv:
                    continue  # late or unsampled round
                for j in self._pos[s].get(sender, ()):
                    if self._recv[s][j] is None:
                        self._recv[s][j] = v
            else:
                self.trace_out.append(("noise", f"unhandled {kind} from {sender}"))
        outbox: list[tuple[int, tuple]] = []
        period = 2 * self.p.delta
        if t % period == 0:
            s = t // period
            if s > 0 and not self.terminated:
                self.end_round(s - 1, self._recv[s - 1])
            if not self.terminated:
                outbox.extend(self.begin_round(s))
        elif t % period == self.p.delta:
            s = (t - self.p.delta) // period
            for requester in self._pending_reqs.pop(s, {}):
                outbox.append((requester, self.respond(requester, s)))
        return outbox

    def state_summary(self) -> str:
        return (
            f"v{self.val}c{self.count}r{self.next_round}"
            f"o{'-' if self.output is None else self.output}"
        )
