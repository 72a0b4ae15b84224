"""Self-paced binary agreement with locks for partial synchrony.

Each process advances through sampling rounds at its own speed, paced by
local message delays, and reads only its local clock.  A process locks
on its value after a round with alpha2 support; once locked, abandoning
the value requires alpha2 reporters whose claimed lock start lies at
least 2*delta before the round began, which is what makes lock
majorities self-sustaining under adversarial scheduling.

The per-timeslot block runs in pseudocode order: start round, record
responses, update support flags, update the lock, advance the round,
check output, and answer requests last, so a slot's reply always
reflects that slot's final state.
"""

from __future__ import annotations

from random import Random

from snowsim import messages as msg
from snowsim.params import ProtocolParams
from snowsim.snowflake_plus import ProtocolViolation


class _Round:
    __slots__ = ("start", "sample", "pos", "vals", "ages", "cnt", "oldcnt", "ndef")

    def __init__(self, start: int, sample: tuple[int, ...]):
        self.start = start
        self.sample = sample
        self.pos: dict[int, list[int]] = {}
        for j, target in enumerate(sample):
            self.pos.setdefault(target, []).append(j)
        k = len(sample)
        self.vals: list = [None] * k
        self.ages: list = [None] * k  # absolute local time the lock claim began
        self.cnt = [0, 0]
        self.oldcnt = [0, 0]  # per value: positions whose claim is 2*delta pre-start
        self.ndef = 0


class SfDiamondProcess:
    """Per-process state of the self-paced binary protocol."""

    protocol = "sf_diamond"

    def __init__(self, pid: int, params: ProtocolParams, input_bit: int, rng: Random):
        self.pid = pid
        self.p = params
        self.rng = rng
        self.val = input_bit
        self.val_hist: list[int] = []  # value at the end of each completed round
        self.lock = False
        self.locktime: int | None = None
        self.lockbound = 0
        self.newround = True
        self.s = 0
        self.rounds: list[_Round] = []
        self._resp_buf: dict[int, dict[int, tuple[int, int]]] = {}
        self._answered: set[tuple[int, int]] = set()
        self._suppout: tuple[dict[int, bool], dict[int, bool]] = ({}, {})
        self._out_ready = [False, False]
        self.output: int | None = None
        self.output_round: int | None = None
        self.terminated = False
        self._last_t: int | None = None
        self.trace_out: list[tuple] = []

    # -- queries -----------------------------------------------------------

    def is_locked_on(self, d: int, duration: int, now: int) -> bool:
        """True iff locked on ``d`` continuously for at least ``duration``."""
        return self.lock and self.val == d and now - self.locktime >= duration

    def suppout(self, d: int, s: int) -> bool:
        return s in self._suppout[d]

    # -- the per-timeslot block ---------------------------------------------

    def on_tick(self, t: int, inbox: list) -> list[tuple[int, tuple]]:
        if self._last_t is not None and t <= self._last_t:
            raise ProtocolViolation(f"tick at {t} after tick at {self._last_t}")
        self._last_t = t
        p = self.p
        two_delta = 2 * p.delta
        reqs: list[tuple[int, int]] = []

        for sender, payload in inbox:
            kind = payload[0]
            if kind == msg.REQ:
                reqs.append((sender, payload[1]))
            elif kind == msg.RESPL:
                s_r, v, dur = payload[1], payload[2], payload[3]
                buf = self._resp_buf.setdefault(s_r, {})
                if sender not in buf:
                    buf[sender] = (v, dur)
            else:
                self.trace_out.append(("noise", f"unhandled {kind} from {sender}"))

        outbox: list[tuple[int, tuple]] = []

        # (1) start a new round when ready
        if self.newround and not self.terminated:
            sample = tuple(self.rng.randrange(p.n) for _ in range(p.k))
            self.rounds.append(_Round(t, sample))
            assert len(self.rounds) == self.s + 1
            self.trace_out.append(("round", self.s, sample))
            outbox.extend((target, (msg.REQ, self.s)) for target in sample)
            self.newround = False

        # (2)+(3) record responses and update support flags for every round
        # whose 2*delta collection window is open
        for s_r in range(min(self.s, len(self.rounds) - 1), -1, -1):
            rnd = self.rounds[s_r]
            if rnd.start >= t:
                continue
            if rnd.start < t - two_delta:
                break
            buf = self._resp_buf.get(s_r)
            if buf:
                for sender in [q for q in buf if q in rnd.pos]:
                    v, dur = buf.pop(sender)
                    age = t - dur  # time from which the sender claims its lock
                    old = age <= rnd.start - two_delta
                    for j in rnd.pos[sender]:
                        if rnd.vals[j] is None:
                            rnd.vals[j] = v
                            rnd.ages[j] = age
                            rnd.cnt[v] += 1
                            rnd.ndef += 1
                            if old:
                                rnd.oldcnt[v] += 1
            for d in (0, 1):
                if rnd.oldcnt[d] >= p.alpha2 and s_r not in self._suppout[d]:
                    self._set_suppout(d, s_r)

        # (4) lock update: the least fresh sample round with alpha2 support
        # for the present value, with every completed round since then
        # having kept that value
        if not self.lock and not self.terminated:
            hist_floor = None
            for s_r in range(self.lockbound, min(self.s + 1, len(self.rounds))):
                if self.rounds[s_r].cnt[self.val] < p.alpha2:
                    continue
                if hist_floor is None:
                    hist_floor = self.s
                    while hist_floor > 0 and self.val_hist[hist_floor - 1] == self.val:
                        hist_floor -= 1
                if s_r >= hist_floor:
                    self.lock = True
                    self.lockbound = s_r + 1
                    self.locktime = t
                    self.trace_out.append(("lock", str(self.val), 1))
                    break

        # (5) round advance
        if not self.terminated and self.s < len(self.rounds):
            cur = self.rounds[self.s]
            advanced = False
            if not self.lock:
                if cur.cnt[self.val] >= p.k - p.alpha1 + 1:
                    self._advance()
                    advanced = True
                elif cur.cnt[1 - self.val] >= p.alpha1:
                    self.val = 1 - self.val
                    self.trace_out.append(("val", self.val))
                    self._advance()
                    advanced = True
            else:
                if cur.ndef - cur.oldcnt[1 - self.val] >= p.k - p.alpha2 + 1:
                    self._advance()
                    advanced = True
                elif cur.oldcnt[1 - self.val] >= p.alpha2:
                    self.val = 1 - self.val
                    self.trace_out.append(("val", self.val))
                    self.lock = False
                    self.locktime = None
                    self.trace_out.append(("lock", str(1 - self.val), 0))
                    self._advance()
                    advanced = True
            if not advanced and cur.start <= t - two_delta:
                self._advance()

        # (6) output on beta consecutive supporting rounds
        if not self.terminated:
            for d in (0, 1):
                if self._out_ready[d]:
                    self.output = d
                    self.output_round = self.s
                    self.terminated = True
                    self.trace_out.append(("output", d, self.s))
                    break

        # (7) report the present value, the last action of the slot
        for sender, s_req in reqs:
            key = (sender, s_req)
            if key in self._answered:
                continue
            self._answered.add(key)
            v = self.output if self.terminated else self.val
            dur = (t - self.locktime) if self.lock else 0
            outbox.append((sender, (msg.RESPL, s_req, v, dur)))
        return outbox

    def _advance(self) -> None:
        self.val_hist.append(self.val)
        self.s += 1
        self.newround = True

    def _set_suppout(self, d: int, s_r: int) -> None:
        flags = self._suppout[d]
        flags[s_r] = True
        lo = s_r
        while lo - 1 in flags:
            lo -= 1
        hi = s_r
        while hi + 1 in flags:
            hi += 1
        if hi - lo + 1 >= self.p.beta:
            self._out_ready[d] = True

    def state_summary(self) -> str:
        return (
            f"v{self.val}s{self.s}L{int(self.lock)}"
            f"t{'-' if self.locktime is None else self.locktime}"
            f"b{self.lockbound}o{'-' if self.output is None else self.output}"
        )
