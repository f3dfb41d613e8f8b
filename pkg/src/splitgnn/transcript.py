"""Append-only communication transcripts with byte-accurate accounting.

A transcript plays two roles: it is the measured object for communication
cost comparisons, and it is the adversary's view for privacy audits.  Wire
records carry metadata (and, for PSI messages, the digest payload that
actually crossed); ``context`` holds simulation-side ground truth that only
the auditor sees, never the parties.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ProtocolError

MESSAGE_KINDS = ("embedding", "ciphertext", "hidden", "gradient", "psi")
CSV_COLUMNS = ("round", "from", "to", "kind", "elements", "bytes", "encrypted")


@dataclass
class TranscriptRecord:
    round: int
    sender: str
    receiver: str
    kind: str
    elements: int
    bytes: int
    encrypted: bool
    payload: str | None = None


@dataclass
class DecryptionEvent:
    round: int
    elements: int
    aggregated: bool


class RoundTranscript:
    """Ordered record of every message a session exchanged."""

    def __init__(self, context: dict | None = None):
        self.records: list[TranscriptRecord] = []
        self.decryptions: list[DecryptionEvent] = []
        self.context: dict = context or {}

    def add(self, round_index: int, sender: str, receiver: str, kind: str,
            elements: int, byte_size: int, encrypted: bool = False,
            payload: str | None = None) -> TranscriptRecord:
        if kind not in MESSAGE_KINDS:
            raise ProtocolError(f"unknown message kind {kind!r}")
        rec = TranscriptRecord(round_index, sender, receiver, kind,
                               int(elements), int(byte_size), encrypted, payload)
        self.records.append(rec)
        return rec

    def log_decryption(self, round_index: int, elements: int, aggregated: bool) -> None:
        self.decryptions.append(DecryptionEvent(round_index, int(elements), aggregated))

    def total_bytes(self, kind: str | None = None) -> int:
        return sum(r.bytes for r in self.records if kind is None or r.kind == kind)

    def __len__(self) -> int:
        return len(self.records)

    # -- persistence --------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.records:
                writer.writerow([r.round, r.sender, r.receiver, r.kind,
                                 r.elements, r.bytes,
                                 "true" if r.encrypted else "false"])

    def save(self, path) -> None:
        """CSV for the wire view plus a JSON sidecar for audit context."""
        path = Path(path)
        self.to_csv(path)
        sidecar = {
            "context": self.context,
            "decryptions": [vars(d) for d in self.decryptions],
            "payloads": {str(i): r.payload for i, r in enumerate(self.records)
                         if r.payload is not None},
        }
        path.with_suffix(".meta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RoundTranscript":
        path = Path(path)
        out = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ProtocolError(f"{path}: unexpected transcript columns {reader.fieldnames}")
            for row in reader:
                out.add(int(row["round"]), row["from"], row["to"], row["kind"],
                        int(row["elements"]), int(row["bytes"]),
                        row["encrypted"] == "true")
        sidecar = path.with_suffix(".meta.json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text())
            out.context = meta.get("context", {})
            out.decryptions = [DecryptionEvent(**d) for d in meta.get("decryptions", [])]
            for key, payload in meta.get("payloads", {}).items():
                out.records[int(key)].payload = payload
        return out
