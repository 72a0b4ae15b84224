"""Chain replication by per-bit binary agreement over hash strings.

A process's preference is a bit string: the concatenated hashes of a
stored chain plus a partial suffix of the next block's hash.  Every bit
beyond ``final`` is governed by one instance of the self-paced binary
protocol, all of them fed by a single sample per round.  Locks and the
finality flags live on string prefixes; the responder-side lock-age rule
(4*delta in the base protocol, clock-assisted in the variants) replaces
the receiver-side age accounting of the binary protocol.

Variants:
  BASE        requests carry only the round number; reported locks must
              be 4*delta old.
  CLOCK_SYNC  requests carry the requester's clock t'; reported locks
              must satisfy locktime <= t' - 2*delta - delta_star.
  TEMP_FINAL  CLOCK_SYNC plus a second, fresher "safely locked" prefix
              used for temporary finality at alpha2 support.
"""

from __future__ import annotations

from random import Random

from snowsim import messages as msg
from snowsim.bitstrings import compatible, lcp_len
from snowsim.chainstore import Block, ChainStore, is_chain
from snowsim.params import ProtocolParams
from snowsim.snowflake_plus import ProtocolViolation

BASE = "base"
CLOCK_SYNC = "clock_sync"
TEMP_FINAL = "temp_final"
VARIANTS = (BASE, CLOCK_SYNC, TEMP_FINAL)


class InvariantError(RuntimeError):
    """A structural protocol invariant failed inside a state machine."""


class _SmRound:
    __slots__ = (
        "start", "sample", "pos", "rpref", "rlock", "rsafe", "ndef",
        "sup_pref", "sup_lock", "sup_safe", "supfin_len", "safe_len", "dec",
    )

    def __init__(self, start: int, sample: tuple[int, ...]):
        self.start = start
        self.sample = sample
        self.pos: dict[int, list[int]] = {}
        for j, target in enumerate(sample):
            self.pos.setdefault(target, []).append(j)
        k = len(sample)
        self.rpref: list = [None] * k
        self.rlock: list = [None] * k
        self.rsafe: list = [None] * k
        self.ndef = 0
        self.sup_pref: str | None = None  # longest string with alpha2 rpref support
        self.sup_lock: str | None = None  # same over reported locks
        self.sup_safe: str | None = None  # same over reported safe locks
        self.supfin_len = -1  # flagged prefix length; -1 means no flags yet
        self.safe_len = -1
        self.dec: dict[str, bool] = {}


def _supported(values: list, threshold: int) -> str | None:
    """Longest string extended by at least ``threshold`` of the defined
    values; None when below threshold even at the empty string."""
    active = [v for v in values if v is not None]
    if len(active) < threshold:
        return None
    first = active[0]
    if all(v == first for v in active):  # unanimous fast path
        return first
    depth = 0
    while True:
        zeros = ones = 0
        for v in active:
            if len(v) > depth:
                if v[depth] == "0":
                    zeros += 1
                else:
                    ones += 1
        if zeros >= threshold:
            active = [v for v in active if len(v) > depth and v[depth] == "0"]
        elif ones >= threshold:
            active = [v for v in active if len(v) > depth and v[depth] == "1"]
        else:
            return active[0][:depth]
        depth += 1


class SnowmanProcess:
    """Per-process replication state; driven by :meth:`on_tick`."""

    protocol = "snowman"

    def __init__(self, pid: int, params: ProtocolParams, genesis: Block,
                 rng: Random, variant: str = BASE):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.pid = pid
        self.p = params
        self.rng = rng
        self.variant = variant
        self.store = ChainStore(genesis)
        self.width = genesis.width
        self.pref: str = genesis.id
        self.final: str = genesis.id
        self.val: dict[str, int] = {}
        self.locked: dict[int, int] = {}  # prefix length -> locktime; the
        # locked set is always a set of prefixes of the current pref, so a
        # length identifies the string
        self.lockbound: dict[str, int] = {}
        self.pref_hist: list[str] = []  # pref at the end of each completed round
        self.pref_times: list[tuple[int, str]] = []  # (local time, pref) changes
        self.newround = True
        self.s = 0
        self.rounds: list[_SmRound] = []
        self.temp_max: list[str] = []  # maximal temporarily-final strings
        self._resp_buf: dict[int, dict[int, tuple]] = {}
        self._answered: set[tuple[int, int]] = set()
        self._lock_dirty: set[int] = set()
        self._fin_dirty: set[int] = set()
        self._last_t: int | None = None
        # epoch counter over everything the pref recomputation reads, so
        # unchanged ticks can reuse the previous result
        self._epoch = 0
        self._rc_cache: tuple[int, str, bool] | None = None
        self.trace_out: list[tuple] = []

    # -- queries -----------------------------------------------------------

    def is_temp_final(self, sigma: str) -> bool:
        """True iff some round showed alpha2 safe-lock support extending
        ``sigma``.  Only meaningful under the TEMP_FINAL variant."""
        if self.variant != TEMP_FINAL:
            raise ValueError("temporary finality requires the temp_final variant")
        return any(m.startswith(sigma) for m in self.temp_max)

    def add_block(self, block: Block) -> str:
        status = self.store.insert(block)
        if status == "added":
            self._epoch += 1
            self.trace_out.append(("block", block.id, "sched"))
        return status

    # -- the per-timeslot block ---------------------------------------------

    def on_tick(self, t: int, inbox: list) -> list[tuple[int, tuple]]:
        if self._last_t is not None and t <= self._last_t:
            raise ProtocolViolation(f"tick at {t} after tick at {self._last_t}")
        self._last_t = t
        if not self.pref_times:
            self.pref_times.append((t, self.pref))
        p = self.p
        two_delta = 2 * p.delta
        reqs: list[tuple[int, int, int | None]] = []

        for sender, payload in inbox:
            kind = payload[0]
            if kind == msg.REQ:
                reqs.append((sender, payload[1], None))
            elif kind == msg.REQT:
                reqs.append((sender, payload[1], payload[2]))
            elif kind in (msg.RESPC, msg.RESPC2):
                self._stash_response(sender, payload)
            # other kinds are adversarial noise for this protocol

        outbox: list[tuple[int, tuple]] = []

        # (1) start a new round when ready
        if self.newround:
            sample = tuple(self.rng.randrange(p.n) for _ in range(p.k))
            self.rounds.append(_SmRound(t, sample))
            assert len(self.rounds) == self.s + 1
            self._epoch += 1
            self.trace_out.append(("round", self.s, sample))
            if self.variant == BASE:
                request = (msg.REQ, self.s)
            else:
                request = (msg.REQT, self.s, t)
            outbox.extend((target, request) for target in sample)
            self.newround = False

        # (2) record responses for rounds with an open collection window
        for s_r in range(min(self.s, len(self.rounds) - 1), -1, -1):
            rnd = self.rounds[s_r]
            if rnd.start >= t:
                continue
            if rnd.start < t - two_delta:
                break
            self._record_round(s_r, rnd)
            # (3) support-for-finalizing flags, judged against the present pref
            if rnd.sup_lock is not None:
                cover = lcp_len(self.pref, rnd.sup_lock)
                if cover > rnd.supfin_len:
                    rnd.supfin_len = cover
                    self._fin_dirty.add(s_r)

        # (4) lock updates for prefixes of the present pref
        if self._lock_dirty:
            self._update_locks(t)

        # (5) recompute pref from final upward; (6) round advance
        if self._rc_cache is not None and self._rc_cache[0] == self._epoch:
            all_dec = self._rc_cache[2]
        else:
            old_pref = self.pref
            all_dec = self._recompute_pref()
            self._rc_cache = (self._epoch, self.pref, all_dec)
            if self.pref != old_pref:
                self.trace_out.append(("pref", self.pref))
                self.pref_times.append((t, self.pref))
                self._lock_dirty.add(self.s)
                self._fin_dirty.update(
                    s_r for s_r in range(len(self.rounds)) if self.rounds[s_r].supfin_len >= 0
                )
        cur = self.rounds[self.s] if self.s < len(self.rounds) else None
        if cur is not None and (cur.start <= t - two_delta or all_dec):
            self.pref_hist.append(self.pref)
            assert len(self.pref_hist) == self.s + 1
            self.s += 1
            self.newround = True
            self._epoch += 1
            self._lock_dirty.add(self.s - 1)

        # (7) extend final on beta consecutive supporting rounds
        if self._fin_dirty:
            self._update_final()

        # (8) report chain, aged lock and (temp_final) safe lock, last
        if reqs:
            chain = tuple(self.store.chain(self.pref))
            hb_len = self.width * len(chain)
            lens = sorted((e for e in self.locked if e <= hb_len), reverse=True)
            for sender, s_req, t_req in reqs:
                key = (sender, s_req)
                if key in self._answered:
                    continue
                self._answered.add(key)
                outbox.append((sender, self._response(s_req, t_req, t, chain, lens)))

        if not self.pref.startswith(self.final):
            raise InvariantError(f"final {self.final!r} not a prefix of pref {self.pref!r}")
        return outbox

    # -- tick pieces ---------------------------------------------------------

    def _stash_response(self, sender: int, payload: tuple) -> None:
        if payload[0] == msg.RESPC2:
            _, s_r, blocks, sigma, safe = payload
        else:
            _, s_r, blocks, sigma = payload
            safe = None
        if not is_chain(blocks, self.store.genesis.id):
            self.trace_out.append(("noise", f"bad-chain from {sender}"))
            return
        hb = "".join(b.id for b in blocks)
        if not hb.startswith(sigma) or (safe is not None and not hb.startswith(safe)):
            self.trace_out.append(("noise", f"lock-claim not in chain from {sender}"))
            return
        for b in blocks[1:]:
            if self.store.insert(b) == "added":
                self._epoch += 1
                self.trace_out.append(("block", b.id, "msg"))
        buf = self._resp_buf.setdefault(s_r, {})
        if sender not in buf:
            buf[sender] = (hb, sigma, safe)

    def _record_round(self, s_r: int, rnd: _SmRound) -> None:
        buf = self._resp_buf.get(s_r)
        if not buf:
            return
        touched = False
        for sender in [q for q in buf if q in rnd.pos]:
            hb, sigma, safe = buf.pop(sender)
            for j in rnd.pos[sender]:
                if rnd.rpref[j] is None:
                    rnd.rpref[j] = hb
                    rnd.rlock[j] = sigma
                    rnd.rsafe[j] = safe
                    rnd.ndef += 1
                    touched = True
        if not touched:
            return
        alpha2 = self.p.alpha2
        rnd.sup_pref = _supported(rnd.rpref, alpha2)
        rnd.sup_lock = _supported(rnd.rlock, alpha2)
        self._lock_dirty.add(s_r)
        if s_r == self.s:
            self._epoch += 1
        if self.variant == TEMP_FINAL:
            rnd.sup_safe = _supported(rnd.rsafe, alpha2)
            if rnd.sup_safe is not None and len(rnd.sup_safe) > rnd.safe_len:
                rnd.safe_len = len(rnd.sup_safe)
                self._temp_finalize(rnd.sup_safe)

    def _temp_finalize(self, sigma: str) -> None:
        if any(m.startswith(sigma) for m in self.temp_max):
            return
        self.temp_max = [m for m in self.temp_max if not sigma.startswith(m)] + [sigma]
        self.trace_out.append(("tfinal", sigma))

    def _update_locks(self, t: int) -> None:
        """Acquire locks via the least qualifying round at or past each
        prefix's lockbound.  Only rounds whose support data or whose
        relation to pref changed need rescanning."""
        pref = self.pref
        suffix_min: list[int] | None = None
        dirty = sorted(s_r for s_r in self._lock_dirty if s_r < len(self.rounds))
        self._lock_dirty.clear()
        for s_r in dirty:
            sup = self.rounds[s_r].sup_pref
            if sup is None:
                continue
            bound = lcp_len(pref, sup)
            if s_r < self.s:
                if suffix_min is None:
                    suffix_min = self._history_suffix_min(pref)
                bound = min(bound, suffix_min[s_r])
            for ell in range(0, bound + 1):
                if ell in self.locked:
                    continue
                sigma = pref[:ell]
                if self.lockbound.get(sigma, 0) > s_r:
                    continue
                self.locked[ell] = t
                self.lockbound[sigma] = s_r + 1
                self._epoch += 1
                self.trace_out.append(("lock", sigma, 1))

    def _history_suffix_min(self, pref: str) -> list[int]:
        """suffix_min[s_r] = the longest prefix of ``pref`` kept by every
        completed round >= s_r (+inf past the end)."""
        n = self.s
        out = [len(pref)] * (n + 1)
        acc = len(pref)
        for s2 in range(n - 1, -1, -1):
            acc = min(acc, lcp_len(self.pref_hist[s2], pref))
            out[s2] = acc
        return out

    def _recompute_pref(self) -> bool:
        """The while-loop: rebuild pref from final one bit at a time,
        running one binary-decision instance per bit against the present
        round's responses.  Returns whether every extension bit was
        already decided (the fast round-advance condition)."""
        p = self.p
        store = self.store
        rnd = self.rounds[self.s] if self.s < len(self.rounds) else None
        old_pref = self.pref
        pref = self.final
        if not old_pref.startswith(pref):
            raise InvariantError("final is not a prefix of pref")
        # Walk state: deepest materialized block along pref and candidate
        # lists of responses still extending it.
        chain = store.chain(pref)
        cur_block = chain[-1]
        consumed = self.width * len(chain)
        if rnd is not None:
            act_pref = [v for v in rnd.rpref if v is not None and v.startswith(pref)]
            act_lock = [v for v in rnd.rlock if v is not None and v.startswith(pref)]
            ndef = rnd.ndef
        else:
            act_pref = []
            act_lock = []
            ndef = 0
        onpath = True  # pref (loop value) is still a prefix of old_pref
        all_dec = True
        while True:
            depth = len(pref)
            partial = pref[consumed:]
            if len(partial) == self.width:
                child = store.blocks.get(partial)
                if child is not None and child.parent == cur_block.id:
                    cur_block = child
                    consumed += self.width
                    partial = ""
            candidates = [b for b in store.children_of(cur_block.id)
                          if b.id.startswith(partial)]
            if not candidates:
                break
            v = self.val.get(pref)
            if v is None:
                first = store.first_enumerated(candidates)
                v = int(first.id[depth - consumed])
                self.val[pref] = v
            p0: list = []
            p1: list = []
            for a in act_pref:
                if len(a) > depth:
                    (p1 if a[depth] == "1" else p0).append(a)
            ext_opp = len(p0) if v == 1 else len(p1)
            locked_next = onpath and depth + 1 in self.locked
            if locked_next and (depth >= len(old_pref) or old_pref[depth] != "01"[v]):
                raise InvariantError("lock held against the preferred direction")
            decided = False
            if not locked_next:
                if ndef - ext_opp >= p.k - p.alpha1 + 1:
                    decided = True
                if ext_opp >= p.alpha1:
                    v = 1 - v
                    self.val[pref] = v
                    decided = True
                    if onpath and self.locked and max(self.locked) > depth:
                        raise InvariantError("flip below surviving deeper locks")
            else:
                k0: list = []
                k1: list = []
                for a in act_lock:
                    if len(a) > depth:
                        (k1 if a[depth] == "1" else k0).append(a)
                lk_opp = len(k0) if v == 1 else len(k1)
                if ndef - lk_opp >= p.k - p.alpha2 + 1:
                    decided = True
                if lk_opp >= p.alpha2:
                    v = 1 - v
                    self.val[pref] = v
                    decided = True
                    self._unlock_above(depth, old_pref)
            ch = "01"[v]
            child_str = pref + ch
            if decided and rnd is not None:
                rnd.dec[child_str] = True
            elif rnd is None or child_str not in rnd.dec:
                all_dec = False
            act_pref = p1 if v == 1 else p0
            if act_lock:
                act_lock = [a for a in act_lock if len(a) > depth and a[depth] == ch]
            if onpath and not (depth < len(old_pref) and old_pref[depth] == ch):
                onpath = False
            pref = child_str
        self.pref = pref
        return all_dec

    def _unlock_above(self, depth: int, old_pref: str) -> None:
        """Clear every lock on a strict extension of the flip point."""
        for ell in sorted(e for e in self.locked if e > depth):
            del self.locked[ell]
            self._epoch += 1
            self.trace_out.append(("lock", old_pref[:ell], 0))

    def _update_final(self) -> None:
        p = self.p
        rounds = self.rounds
        dirty = sorted(self._fin_dirty)
        self._fin_dirty.clear()
        windows: set[int] = set()
        for s_r in dirty:
            windows.update(range(max(0, s_r - p.beta + 1), s_r + 1))
        best = len(self.final)
        best_sigma = None
        for w in sorted(windows):
            if w + p.beta > len(rounds):
                continue
            cover = None
            for s2 in range(w, w + p.beta):
                rnd = rounds[s2]
                if rnd.supfin_len <= best:
                    cover = None
                    break
                flag = rnd.sup_lock[:rnd.supfin_len]
                cover = flag if cover is None else cover[:lcp_len(cover, flag)]
                if len(cover) <= best:
                    cover = None
                    break
            if cover is None:
                continue
            ell = lcp_len(cover, self.pref)
            if ell > best:
                best = ell
                best_sigma = self.pref[:ell]
        if best_sigma is not None:
            if not best_sigma.startswith(self.final):
                raise InvariantError("final would not extend its previous value")
            self.final = best_sigma
            self._epoch += 1
            self.trace_out.append(("final", best_sigma))

    def _response(self, s_req: int, t_req: int | None, t: int,
                  chain: tuple, lens: list[int]) -> tuple:
        p = self.p
        dstar = p.delta_star or 0
        sigma = ""
        if self.variant == BASE:
            for ell in lens:
                if t - self.locked[ell] >= 4 * p.delta:
                    sigma = self.pref[:ell]
                    break
            return (msg.RESPC, s_req, chain, sigma)
        if t_req is not None:
            for ell in lens:
                if self.locked[ell] <= t_req - 2 * p.delta - dstar:
                    sigma = self.pref[:ell]
                    break
        if self.variant == CLOCK_SYNC:
            return (msg.RESPC, s_req, chain, sigma)
        safe = ""
        if t_req is not None:
            for ell in lens:
                if self.locked[ell] <= t_req - dstar and self._compatible_since(
                    self.pref[:ell], t_req - dstar - 2 * p.delta
                ):
                    safe = self.pref[:ell]
                    break
        return (msg.RESPC2, s_req, chain, sigma, safe)

    def _compatible_since(self, sigma: str, since: int) -> bool:
        """Whether the local pref has stayed compatible with ``sigma`` at
        every recorded point from ``since`` onward."""
        for u, pv in reversed(self.pref_times):
            if not compatible(pv, sigma):
                return False
            if u <= since:
                return True
        return True

    def state_summary(self) -> str:
        top = max(self.locked) if self.locked else "-"
        return (
            f"s{self.s}p{self.pref}f{len(self.final)}"
            f"L{top}n{len(self.locked)}tf{len(self.temp_max)}"
        )
