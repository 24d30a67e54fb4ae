"""Message transcript for privacy auditing.

Every inter-party transfer in a run is appended exactly once as a record
carrying (round, sender, receiver, kind, payload size, payload digest).
Payloads themselves are never stored -- only SHA-256 digests -- which is
enough for the audit to prove that no registered private value (plaintext
prompt, gradient, reduced prompt) ever crossed the wire.

Server-side reconstructions are logged as ``recon-event`` records with the
degree and share count used, so the auditor can verify the server never
decoded anything beyond the declared policy.
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SERVER = "server"


def user(i: int) -> str:
    return f"user:{i}"


# message kinds
ASSIGNMENT_BROADCAST = "assignment-broadcast"
ASSIGNMENT_ACK = "assignment-ack"
PROMPT_SHARE = "prompt-share"
GRADIENT_SHARE = "gradient-share"
DISTANCE_SHARE = "distance-share"
CENTER_GAP_SHARE = "center-gap-share"
AGGREGATE_SHARE = "aggregate-share"
GLOBAL_BROADCAST = "global-broadcast"
RECON_EVENT = "recon-event"

# what an honest-but-curious server may receive from users
ALLOWED_SERVER_RECEIVE = frozenset(
    {DISTANCE_SHARE, CENTER_GAP_SHARE, AGGREGATE_SHARE, ASSIGNMENT_ACK})
# what users may send to each other (coded payloads only)
ALLOWED_USER_TO_USER = frozenset({PROMPT_SHARE, GRADIENT_SHARE})

RECON_PURPOSES = frozenset({"distance", "center-gap", "aggregate"})


def payload_digest(payload) -> str:
    """Canonical SHA-256 digest of an array or byte payload."""
    h = hashlib.sha256()
    if isinstance(payload, (bytes, bytearray)):
        h.update(bytes(payload))
    else:
        arr = np.ascontiguousarray(payload)
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def payload_size(payload) -> int:
    if isinstance(payload, (bytes, bytearray)):
        return len(payload)
    return int(np.ascontiguousarray(payload).nbytes)


@dataclass(frozen=True)
class Record:
    round: int
    sender: str
    receiver: str
    kind: str
    size: int
    digest: str
    meta: Optional[dict] = None

    def to_json(self) -> dict:
        d = {"type": "message", "round": self.round, "sender": self.sender,
             "receiver": self.receiver, "kind": self.kind, "size": self.size,
             "digest": self.digest}
        if self.meta:
            d["meta"] = self.meta
        return d


@dataclass
class Transcript:
    """Append-only message log plus the private-digest registry."""

    records: list = field(default_factory=list)
    policy: Optional[dict] = None
    _private: dict = field(default_factory=dict)

    def log(self, round_no: int, sender: str, receiver: str, kind: str,
            payload, meta: Optional[dict] = None) -> Record:
        rec = Record(round=round_no, sender=sender, receiver=receiver,
                     kind=kind, size=payload_size(payload),
                     digest=payload_digest(payload), meta=meta)
        self.records.append(rec)
        return rec

    def log_recon(self, round_no: int, purpose: str, degree: int,
                  shares: int):
        rec = Record(round=round_no, sender=SERVER, receiver=SERVER,
                     kind=RECON_EVENT, size=0, digest="",
                     meta={"purpose": purpose, "degree": degree,
                           "shares": shares})
        self.records.append(rec)
        return rec

    def set_policy(self, max_degree_by_purpose: dict):
        self.policy = {"max_degree_by_purpose": dict(max_degree_by_purpose)}

    def register_private(self, label: str, payload):
        """Mark a plaintext value that must never appear on the wire."""
        self._private[payload_digest(payload)] = label

    @property
    def private_digests(self) -> dict:
        return dict(self._private)

    # persistence ---------------------------------------------------------

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            if self.policy is not None:
                fh.write(json.dumps({"type": "policy", **self.policy},
                                    sort_keys=True) + "\n")
            for digest, label in sorted(self._private.items()):
                fh.write(json.dumps({"type": "private-digest",
                                     "digest": digest, "label": label},
                                    sort_keys=True) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "Transcript":
        t = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                kind = obj.pop("type")
                if kind == "policy":
                    t.policy = obj
                elif kind == "private-digest":
                    t._private[obj["digest"]] = obj["label"]
                else:
                    t.records.append(Record(
                        round=obj["round"], sender=obj["sender"],
                        receiver=obj["receiver"], kind=obj["kind"],
                        size=obj["size"], digest=obj["digest"],
                        meta=obj.get("meta")))
        return t
