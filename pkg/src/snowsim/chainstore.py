"""Block storage and the hash-string algebra of the chain protocol.

Block identifiers are fixed-width bit strings produced by hashing
``(parent id, payload)``; a run-wide perfect-hash assumption means ids
are treated as unique.  The store keeps insertion order because the
protocol breaks ties by the first block enumerated.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass


DEFAULT_HASH_BITS = 128


def hash_bits(parent_bits: str, payload: bytes, width: int) -> str:
    """Collision-resistant id for a block: ``width`` bits of SHA-256 over
    the parent id and the payload."""
    digest = hashlib.sha256(parent_bits.encode("ascii") + b"|" + payload).digest()
    value = int.from_bytes(digest, "big") >> (256 - width)
    return format(value, f"0{width}b")


@dataclass(frozen=True)
class Block:
    """A block in the linear chain; ``parent`` is None only for genesis."""

    id: str
    parent: str | None
    height: int
    payload: bytes

    @property
    def width(self) -> int:
        return len(self.id)


def make_genesis(width: int = DEFAULT_HASH_BITS, payload: bytes = b"genesis") -> Block:
    return Block(id=hash_bits("", payload, width), parent=None, height=0, payload=payload)


def make_block(parent: Block, payload: bytes) -> Block:
    return Block(
        id=hash_bits(parent.id, payload, parent.width),
        parent=parent.id,
        height=parent.height + 1,
        payload=payload,
    )


class ChainStore:
    """Insertion-ordered block store with an orphan buffer.

    Blocks whose parent has not arrived yet are parked until the parent
    shows up; structurally invalid blocks (wrong height, wrong id width)
    are dropped.
    """

    def __init__(self, genesis: Block):
        self.genesis = genesis
        self.width = genesis.width
        self.blocks: dict[str, Block] = {genesis.id: genesis}
        self.order: dict[str, int] = {genesis.id: 0}
        self.children: dict[str, list[Block]] = {genesis.id: []}
        self._pending: dict[str, list[Block]] = {}
        self._next_index = 1

    def __contains__(self, block_id: str) -> bool:
        return block_id in self.blocks

    def insert(self, block: Block) -> str:
        """Insert a block; returns 'added', 'duplicate', 'pending' or 'invalid'."""
        if block.id in self.blocks:
            return "duplicate"
        if block.parent is None or len(block.id) != self.width:
            return "invalid"  # a second genesis or wrong-width id
        parent = self.blocks.get(block.parent)
        if parent is None:
            bucket = self._pending.setdefault(block.parent, [])
            if all(b.id != block.id for b in bucket):
                bucket.append(block)
            return "pending"
        if block.height != parent.height + 1:
            return "invalid"
        self._materialize(block)
        return "added"

    def _materialize(self, block: Block) -> None:
        self.blocks[block.id] = block
        self.order[block.id] = self._next_index
        self._next_index += 1
        self.children[block.id] = []
        self.children[block.parent].append(block)
        for orphan in self._pending.pop(block.id, []):
            if orphan.id not in self.blocks and orphan.height == block.height + 1:
                self._materialize(orphan)

    def children_of(self, block_id: str) -> list[Block]:
        return self.children.get(block_id, [])

    def first_enumerated(self, blocks: list[Block]) -> Block:
        """The block inserted earliest; used to seed undefined next-bit values."""
        return min(blocks, key=lambda b: self.order[b.id])

    def chain(self, sigma: str) -> list[Block]:
        """The longest stored chain b0..bh with sigma = H(b0)*..*H(bh)*tau."""
        w = self.width
        if not sigma.startswith(self.genesis.id):
            return [self.genesis]
        out = [self.genesis]
        offset = w
        while len(sigma) - offset >= w:
            nxt = self.blocks.get(sigma[offset:offset + w])
            if nxt is None or nxt.parent != out[-1].id:
                break
            out.append(nxt)
            offset += w
        return out

    def reduct(self, sigma: str) -> str:
        return "".join(b.id for b in self.chain(sigma))

    def last(self, sigma: str) -> Block:
        return self.chain(sigma)[-1]

    def hash_concat(self, blocks: list[Block]) -> str:
        """H(b0)*..*H(bh) if the sequence is a chain from genesis, else ''."""
        if not blocks or blocks[0].id != self.genesis.id:
            return ""
        for prev, cur in zip(blocks, blocks[1:]):
            if cur.parent != prev.id or cur.height != prev.height + 1:
                return ""
        return "".join(b.id for b in blocks)


def is_chain(blocks: tuple, genesis_id: str) -> bool:
    """Structural chain check for a received block sequence."""
    if not blocks:
        return False
    first = blocks[0]
    if first.id != genesis_id or first.parent is not None or first.height != 0:
        return False
    for prev, cur in zip(blocks, blocks[1:]):
        if cur.parent != prev.id or cur.height != prev.height + 1:
            return False
    return True
