"""Built-in Byzantine strategies.

A strategy is a per-tick callback owning one corrupted process id.  It
sees the whole world (omniscient adversary) and its own inbox, and
returns arbitrary well-formed-or-malformed messages; the simulator
enforces only sender authenticity and a per-tick message budget.
"""

from __future__ import annotations

from random import Random

from snowsim import messages as msg

HUGE_LOCK_CLAIM = 10**6


class Strategy:
    """Base: collect value requests, answer via :meth:`answer`."""

    name = "BASE"

    def __init__(self, pid: int, rng: Random, world):
        self.pid = pid
        self.rng = rng
        self.world = world

    def tick(self, slot: int, inbox: list) -> list[tuple[int, tuple]]:
        out = []
        for sender, payload in inbox:
            kind = payload[0]
            if kind == msg.REQ:
                reply = self.answer(sender, payload[1], slot)
            elif kind == msg.REQT:
                reply = self.answer(sender, payload[1], slot)
            else:
                continue
            if reply is not None:
                out.append((sender, reply))
        return out

    def answer(self, requester: int, s: int, slot: int):
        raise NotImplementedError

    # -- response builders shared by the concrete strategies ----------------

    def _binary(self, s: int, v: int, dur: int):
        if self.world.protocol_kind == "sf_plus":
            return (msg.RESPV, s, v)
        return (msg.RESPL, s, v, dur)

    def _chainy(self, s: int, chain: tuple, sigma: str, safe: str | None = None):
        if self.world.variant == "temp_final":
            return (msg.RESPC2, s, chain, sigma, safe if safe is not None else sigma)
        return (msg.RESPC, s, chain, sigma)


class Silent(Strategy):
    """Never responds; every sample position hitting it times out."""

    name = "SILENT"

    def tick(self, slot: int, inbox: list) -> list:
        return []

    def answer(self, requester: int, s: int, slot: int):
        return None


class Equivocator(Strategy):
    """Reports opposite colors (or competing chains) to different requesters."""

    name = "EQUIVOCATOR"

    def answer(self, requester: int, s: int, slot: int):
        side = requester % 2
        if self.world.protocol_kind != "snowman":
            return self._binary(s, side, 0)
        chains = self.world.known_chains()
        chain = chains[side % len(chains)]
        hb = "".join(b.id for b in chain)
        return self._chainy(s, chain, hb)


class SplitKeeper(Strategy):
    """Backs whichever color/branch the fewest correct processes hold,
    with maximal claimed lock durations, to keep the population split."""

    name = "SPLIT_KEEPER"

    def __init__(self, pid, rng, world):
        super().__init__(pid, rng, world)
        self._slot_choice: tuple[int, object] | None = None

    def _choose(self, slot: int):
        if self._slot_choice is not None and self._slot_choice[0] == slot:
            return self._slot_choice[1]
        if self.world.protocol_kind != "snowman":
            vals = self.world.correct_vals()
            choice = 1 if sum(vals) * 2 < len(vals) else 0
        else:
            prefs = self.world.correct_prefs()
            chains = self.world.known_chains()
            # the known chain whose hash string the fewest prefs extend
            scored = []
            for idx, chain in enumerate(chains):
                hb = "".join(b.id for b in chain)
                support = sum(1 for p in prefs if p.startswith(hb))
                scored.append((support, -len(hb), idx))
            _, _, idx = min(scored)
            choice = (chains[idx], "".join(b.id for b in chains[idx]))
        self._slot_choice = (slot, choice)
        return choice

    def answer(self, requester: int, s: int, slot: int):
        choice = self._choose(slot)
        if self.world.protocol_kind != "snowman":
            return self._binary(s, choice, slot + HUGE_LOCK_CLAIM)
        chain, hb = choice
        return self._chainy(s, chain, hb)


class LockLiar(Strategy):
    """Reports arbitrary colors with arbitrary lock durations."""

    name = "LOCK_LIAR"

    def answer(self, requester: int, s: int, slot: int):
        if self.world.protocol_kind != "snowman":
            dur = self.rng.choice((0, 1, slot, HUGE_LOCK_CLAIM))
            return self._binary(s, self.rng.randrange(2), dur)
        chains = self.world.known_chains()
        chain = chains[self.rng.randrange(len(chains))]
        hb = "".join(b.id for b in chain)
        return self._chainy(s, chain, hb)


class ChainWithholder(Strategy):
    """Reports stale state: its initial value forever, or the bare genesis
    chain to half the requesters while the schedule staggers block
    propagation."""

    name = "CHAIN_WITHHOLDER"

    def answer(self, requester: int, s: int, slot: int):
        if self.world.protocol_kind != "snowman":
            return self._binary(s, self.world.input_of(self.pid), 0)
        if requester % 2 == 1:
            chain = (self.world.genesis,)
            return self._chainy(s, chain, self.world.genesis.id)
        chains = self.world.known_chains()
        chain = chains[-1]
        hb = "".join(b.id for b in chain)
        return self._chainy(s, chain, hb)


BUILTIN_STRATEGIES: dict[str, type[Strategy]] = {
    cls.name: cls for cls in (Silent, Equivocator, SplitKeeper, LockLiar, ChainWithholder)
}


def builtin_strategies() -> dict[str, type[Strategy]]:
    """Catalog of named adversary strategies."""
    return dict(BUILTIN_STRATEGIES)
