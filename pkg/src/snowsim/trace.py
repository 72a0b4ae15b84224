"""Append-only run traces: in-memory event lists plus an ndjson codec.

Every event is a plain tuple whose first element is the kind; the file
form is one JSON object per line with deterministic key order, so a
re-run of the same (scenario, seed) produces a byte-identical file.
Message payloads are stored in wire form (hex of the binary codec).

Event shapes:
  ("send",   slot, seq, sender, receiver, deliver, payload)
  ("round",  slot, proc, s, sample)
  ("state",  slot, proc, digest, summary)
  ("val",    slot, proc, v)
  ("lock",   slot, proc, sigma, on)
  ("pref",   slot, proc, sigma)
  ("final",  slot, proc, sigma)
  ("tfinal", slot, proc, sigma)
  ("output", slot, proc, value, round)
  ("block",  slot, proc, block_id, source)
  ("noise",  slot, proc, info)
"""

from __future__ import annotations

import gzip as gzip_mod
import json
import zlib

from snowsim.messages import decode_payload, encode_payload


def digest_update(prev: int, text: str) -> int:
    """Rolling CRC over state summaries; any divergence persists."""
    return zlib.crc32(text.encode("utf-8"), prev)


class Trace:
    def __init__(self, header: dict):
        self.header = header
        self.events: list[tuple] = []
        self.meta: dict[str, int] = {
            "sends": 0,
            "clamped": 0,
            "dropped_past_horizon": 0,
            "budget_clamps": 0,
        }

    def add(self, event: tuple) -> None:
        self.events.append(event)

    def iter_kind(self, kind: str):
        return (ev for ev in self.events if ev[0] == kind)

    # -- serialization ------------------------------------------------------

    def _event_to_obj(self, ev: tuple) -> dict:
        kind = ev[0]
        if kind == "send":
            _, slot, seq, sender, receiver, deliver, payload = ev
            return {
                "kind": kind, "slot": slot, "seq": seq, "sender": sender,
                "receiver": receiver, "deliver": deliver,
                "payload": encode_payload(payload).hex(), "digest": None,
            }
        if kind == "round":
            _, slot, proc, s, sample = ev
            return {"kind": kind, "slot": slot, "sender": proc, "receiver": None,
                    "payload": None, "digest": None, "s": s, "sample": list(sample)}
        if kind == "state":
            _, slot, proc, digest, summary = ev
            return {"kind": kind, "slot": slot, "sender": proc, "receiver": None,
                    "payload": None, "digest": digest, "summary": summary}
        _, slot, proc, *rest = ev
        return {"kind": kind, "slot": slot, "sender": proc, "receiver": None,
                "payload": None, "digest": None, "data": list(rest)}

    def _event_from_obj(self, obj: dict) -> tuple:
        kind = obj["kind"]
        if kind == "send":
            return ("send", obj["slot"], obj["seq"], obj["sender"], obj["receiver"],
                    obj["deliver"], decode_payload(bytes.fromhex(obj["payload"])))
        if kind == "round":
            return ("round", obj["slot"], obj["sender"], obj["s"], tuple(obj["sample"]))
        if kind == "state":
            return ("state", obj["slot"], obj["sender"], obj["digest"], obj["summary"])
        return (kind, obj["slot"], obj["sender"], *obj["data"])

    def write_ndjson(self, path: str, compress: bool = False) -> None:
        opener = gzip_mod.open if compress or str(path).endswith(".gz") else open
        with opener(path, "wt", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "header", **self.header},
                                sort_keys=True, separators=(",", ":")) + "\n")
            for ev in self.events:
                fh.write(json.dumps(self._event_to_obj(ev),
                                    sort_keys=True, separators=(",", ":")) + "\n")
            fh.write(json.dumps({"kind": "meta", **self.meta},
                                sort_keys=True, separators=(",", ":")) + "\n")

    @classmethod
    def read_ndjson(cls, path: str) -> "Trace":
        opener = gzip_mod.open if str(path).endswith(".gz") else open
        with opener(path, "rt", encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.pop("kind", None) != "header":
                raise ValueError(f"{path}: missing trace header")
            trace = cls(header)
            for line in fh:
                obj = json.loads(line)
                if obj["kind"] == "meta":
                    obj.pop("kind")
                    trace.meta.update(obj)
                    continue
                trace.events.append(trace._event_from_obj(obj))
        return trace
