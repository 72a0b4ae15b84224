from random import Random

import pytest

from snowsim import messages as msg
from snowsim.params import ProtocolParams
from snowsim.simnet import AdversarySchedule, ProtocolSpec, run
from snowsim.snowflake_diamond import SfDiamondProcess
from snowsim.snowflake_plus import ProtocolViolation


def make_proc(n=4, k=2, alpha1=2, alpha2=2, beta=2, delta=2, input_bit=1, seed=0):
    params = ProtocolParams(n=n, f=0, k=k, alpha1=alpha1, alpha2=alpha2,
                            beta=beta, delta=delta)
    return SfDiamondProcess(0, params, input_bit, Random(seed))


def respond_all(proc, s, v, dur):
    """Craft a full positional response set for round s."""
    return [(sender, (msg.RESPL, s, v, dur)) for sender in dict.fromkeys(proc.rounds[s].sample)]


class TestHandTrace:
    def test_three_process_unanimous_run(self):
        """Deterministic end-to-end check against a step-by-step hand
        simulation: with delta=2, unit delays and unanimous inputs, all
        processes lock at slot 2, advance rounds at slots 2,5,8,11,14,
        accumulate support from round 3 on, and output at slot 14."""
        params = ProtocolParams(n=3, f=0, k=2, alpha1=2, alpha2=2, beta=2, delta=2)
        spec = ProtocolSpec(kind="sf_diamond", inputs=(1, 1, 1))
        trace = run(params, AdversarySchedule(gst=0, delay="fast"), spec,
                    horizon=20, seed=7)
        outputs = {ev[2]: (ev[1], ev[3]) for ev in trace.events if ev[0] == "output"}
        assert outputs == {0: (14, 1), 1: (14, 1), 2: (14, 1)}
        locks = [(ev[1], ev[2]) for ev in trace.events if ev[0] == "lock" and ev[4] == 1]
        assert locks == [(2, 0), (2, 1), (2, 2)]
        for pid in range(3):
            starts = [ev[1] for ev in trace.events
                      if ev[0] == "round" and ev[2] == pid]
            assert starts == [0, 3, 6, 9, 12]


class TestAdvanceRules:
    def test_unlocked_keep_threshold(self):
        # k=80, alpha1=41: exactly 40 matching values advance without a flip
        params = ProtocolParams(n=100, f=0, k=80, alpha1=41, alpha2=72,
                                beta=12, delta=2)
        proc = SfDiamondProcess(0, params, 0, Random(1))
        proc.on_tick(0, [])
        senders = list(dict.fromkeys(proc.rounds[0].sample))[:40]
        positions = sum(len(proc.rounds[0].pos[q]) for q in senders)
        while positions < 40 and len(senders) < len(proc.rounds[0].pos):
            nxt = [q for q in proc.rounds[0].pos if q not in senders][0]
            senders.append(nxt)
            positions = sum(len(proc.rounds[0].pos[q]) for q in senders)
        inbox = [(q, (msg.RESPL, 0, 0, 0)) for q in senders]
        proc.on_tick(1, inbox)
        if proc.rounds[0].cnt[0] >= 40:
            assert proc.s == 1
            assert proc.val == 0

    def test_unlocked_flip(self):
        proc = make_proc(input_bit=0)
        proc.on_tick(0, [])
        proc.on_tick(1, respond_all(proc, 0, 1, 0))
        assert proc.val == 1
        assert proc.s == 1
        assert proc.val_hist == [1]

    def test_locked_then_unlock_flip_requires_aged_claims(self):
        proc = make_proc(input_bit=1)
        proc.on_tick(0, [])
        proc.on_tick(1, respond_all(proc, 0, 1, 0))
        assert proc.lock and proc.locktime == 1
        assert proc.s == 1
        proc.on_tick(2, [])  # starts round 1
        # young opposing claims (dur 0) cannot unlock: they only count as
        # recent locks, so the keep rule fires instead
        proc.on_tick(3, respond_all(proc, 1, 0, 0))
        assert proc.lock and proc.val == 1 and proc.s == 2
        proc.on_tick(4, [])  # starts round 2
        # claims aged far past start(2) - 2*delta unlock and flip
        proc.on_tick(5, respond_all(proc, 2, 0, 10**6))
        assert not proc.lock
        assert proc.locktime is None
        assert proc.val == 0
        assert proc.s == 3

    def test_timeout_advance_without_responses(self):
        proc = make_proc(delta=2)
        proc.on_tick(0, [])
        proc.on_tick(1, [])
        proc.on_tick(2, [])
        proc.on_tick(3, [])
        assert proc.s == 0
        proc.on_tick(4, [])  # start(0)=0 <= 4 - 2*delta
        assert proc.s == 1
        assert proc.val == 1  # unchanged

    def test_tick_times_must_increase(self):
        proc = make_proc()
        proc.on_tick(5, [])
        with pytest.raises(ProtocolViolation):
            proc.on_tick(5, [])


class TestLockQueries:
    def test_unlocked_is_never_locked_on(self):
        proc = make_proc()
        assert not proc.is_locked_on(0, 0, 10)
        assert not proc.is_locked_on(1, 0, 10)

    def test_duration_arithmetic(self):
        proc = make_proc(input_bit=1)
        proc.lock = True
        proc.locktime = 5
        assert proc.is_locked_on(1, 4, 9)
        assert not proc.is_locked_on(1, 5, 9)
        assert not proc.is_locked_on(0, 0, 9)

    def test_zero_elapsed_immediately_after_locking(self):
        proc = make_proc(input_bit=1)
        proc.on_tick(0, [])
        proc.on_tick(1, respond_all(proc, 0, 1, 0))
        assert proc.lock
        assert not proc.is_locked_on(1, 2 * proc.p.delta, proc.locktime)

    def test_lockbound_strictly_increases(self):
        proc = make_proc(input_bit=1)
        assert proc.lockbound == 0
        proc.on_tick(0, [])
        proc.on_tick(1, respond_all(proc, 0, 1, 0))
        assert proc.lockbound == 1


class TestSupportAndOutput:
    def test_suppout_needs_aged_locks(self):
        proc = make_proc(input_bit=1, delta=2)
        proc.on_tick(0, [])
        proc.on_tick(1, respond_all(proc, 0, 1, 0))
        # round 0 responses carried dur=0: estimated lock start is the
        # recording slot, far after start(0) - 2*delta
        assert not proc.suppout(1, 0)

    def test_suppout_set_from_sufficiently_old_claims(self):
        proc = make_proc(input_bit=1, delta=2)
        proc.on_tick(0, [])
        proc.on_tick(1, respond_all(proc, 0, 1, 100))
        assert proc.suppout(1, 0)

    def test_output_after_beta_consecutive_support_rounds(self):
        proc = make_proc(input_bit=1, delta=2, beta=2)
        t = 0
        proc.on_tick(t, [])
        while not proc.terminated and t < 40:
            t += 1
            inbox = []
            cur = proc.s
            if cur < len(proc.rounds) and proc.rounds[cur].start == t - 1:
                inbox = respond_all(proc, cur, 1, 10**6)
            proc.on_tick(t, inbox)
        assert proc.terminated
        assert proc.output == 1

    def test_terminated_keeps_answering_with_growing_duration(self):
        proc = make_proc(input_bit=1, delta=2, beta=1)
        proc.on_tick(0, [])
        proc.on_tick(1, respond_all(proc, 0, 1, 10**6))
        assert proc.terminated
        out1 = proc.on_tick(2, [(9, (msg.REQ, 77))])
        out2 = proc.on_tick(4, [(9, (msg.REQ, 78))])
        assert out1 == [(9, (msg.RESPL, 77, 1, 2 - proc.locktime))]
        assert out2 == [(9, (msg.RESPL, 78, 1, 4 - proc.locktime))]

    def test_duplicate_requests_answered_once(self):
        proc = make_proc()
        out = proc.on_tick(0, [(3, (msg.REQ, 5)), (3, (msg.REQ, 5))])
        replies = [m for m in out if m[1][0] == msg.RESPL]
        assert len(replies) == 1


class TestAdversarialInputs:
    def test_malformed_payload_never_crashes(self):
        proc = make_proc()
        out = proc.on_tick(0, [(3, (msg.RAW, b"\xff\xff")), (3, ("RESPC", 0, (), ""))])
        assert isinstance(out, list)
        noise = [ev for ev in proc.trace_out if ev[0] == "noise"]
        assert noise

    def test_lock_liar_claim_recorded_as_is(self):
        # a claimed duration of 10**6 makes the estimated lock start
        # ancient; the threshold comparison is the only defense
        proc = make_proc(input_bit=1, delta=2)
        proc.on_tick(0, [])
        sender = proc.rounds[0].sample[0]
        proc.on_tick(1, [(sender, (msg.RESPL, 0, 0, 10**6))])
        j = proc.rounds[0].pos[sender][0]
        assert proc.rounds[0].ages[j] == 1 - 10**6
        assert proc.rounds[0].oldcnt[0] >= 1
