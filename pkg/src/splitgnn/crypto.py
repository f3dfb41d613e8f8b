"""ID alignment and additively homomorphic secure aggregation.

PSI here is a salted-hash intersection: participants share a per-session
salt that the server never sees, so the server observes only digests and the
intersection's membership by digest.  Aggregation uses Paillier encryption
(g = n + 1 variant) over fixed-point-encoded values, so the decrypting role
learns element-wise sums and nothing about any single participant's vector.
This is a simulation-grade construction: correctness and auditability are
the goals, not production hardening, and constant-time arithmetic is
explicitly out of scope.
"""

from __future__ import annotations

import hashlib
import json
import random
import secrets
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, CryptoError, DomainError
from .transcript import RoundTranscript

try:
    from gmpy2 import invert as _gmp_invert, is_prime as _gmp_is_prime, powmod as _gmp_powmod

    def _powmod(base: int, exp: int, mod: int) -> int:
        return int(_gmp_powmod(base, exp, mod))

    def _invert(a: int, mod: int) -> int:
        return int(_gmp_invert(a, mod))

    def _is_prime(n: int) -> bool:
        return bool(_gmp_is_prime(n))

except ImportError:  # pragma: no cover - exercised only without gmpy2
    _powmod = pow

    def _invert(a: int, mod: int) -> int:
        return pow(a, -1, mod)

    def _is_prime(n: int, rounds: int = 40) -> bool:
        if n < 2:
            return False
        for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
            if n % p == 0:
                return n == p
        d, r = n - 1, 0
        while d % 2 == 0:
            d //= 2
            r += 1
        rng = random.Random(n)
        for _ in range(rounds):
            a = rng.randrange(2, n - 1)
            x = pow(a, d, n)
            if x in (1, n - 1):
                continue
            for _ in range(r - 1):
                x = x * x % n
                if x == n - 1:
                    break
            else:
                return False
        return True


# ---------------------------------------------------------------------------
# private set intersection


def psi_digest(salt: bytes, external_id) -> str:
    return hashlib.sha256(salt + str(external_id).encode("utf-8")).hexdigest()


def psi_align(id_sets, salt: bytes, transcript: RoundTranscript | None = None,
              round_index: int = 0, party_names=None):
    """Intersection of all participants' id sets via salted digests.

    The server sees one digest set per participant and answers with the
    digests present in every set; participants map those back to raw ids
    locally.  Returns the sorted intersection.
    """
    id_sets = [list(s) for s in id_sets]
    if len(id_sets) < 2:
        raise ContractError("PSI needs at least two participants")
    if party_names is None:
        party_names = [f"party_{i}" for i in range(len(id_sets))]
    tables = []
    for i, ids in enumerate(id_sets):
        if len(set(ids)) != len(ids):
            raise DomainError(f"participant {i} submitted duplicate ids")
        tables.append({psi_digest(salt, x): x for x in ids})

    digest_sets = []
    for name, table in zip(party_names, tables):
        digests = sorted(table)
        digest_sets.append(set(digests))
        if transcript is not None:
            transcript.add(round_index, name, "server", "psi",
                           elements=len(digests), byte_size=32 * len(digests),
                           payload=",".join(digests))
    common = set.intersection(*digest_sets)
    reply = sorted(common)
    for name in party_names:
        if transcript is not None:
            transcript.add(round_index, "server", name, "psi",
                           elements=len(reply), byte_size=32 * len(reply),
                           payload=",".join(reply))
    return sorted(tables[0][d] for d in common)


# ---------------------------------------------------------------------------
# Paillier encryption


VALID_KEY_BITS = (512, 1024, 2048)


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    bits: int

    @property
    def n_sq(self) -> int:
        return self.n * self.n

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def key_id(self) -> str:
        return hashlib.sha256(str(self.n).encode()).hexdigest()[:12]

    @property
    def wire_width(self) -> int:
        """Fixed byte width of one serialized ciphertext value."""
        return (self.n_sq.bit_length() + 7) // 8


@dataclass(frozen=True)
class PaillierKeyPair:
    public: PaillierPublicKey
    p: int
    q: int
    lam: int
    mu: int

    def to_json(self) -> dict:
        # Test-mode convenience only; never ship private keys like this.
        return {"bits": self.public.bits, "p": str(self.p), "q": str(self.q)}

    @classmethod
    def from_json(cls, payload: dict) -> "PaillierKeyPair":
        return _assemble(int(payload["p"]), int(payload["q"]), int(payload["bits"]))


def _assemble(p: int, q: int, bits: int) -> PaillierKeyPair:
    n = p * q
    lam = (p - 1) * (q - 1)
    mu = _invert(lam, n)
    return PaillierKeyPair(PaillierPublicKey(n, bits), p, q, lam, mu)


def _gen_prime(bits: int, rng: random.Random) -> int:
    for _ in range(20000):
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if _is_prime(cand):
            return cand
    raise CryptoError(f"no {bits}-bit prime found within retry budget")


def keygen(bits: int = 2048, seed=None) -> PaillierKeyPair:
    """Paillier key pair; deterministic when ``seed`` is given (test mode)."""
    if bits not in VALID_KEY_BITS:
        raise ConfigError(f"key bits must be one of {VALID_KEY_BITS}, got {bits}")
    rng = random.Random(repr(seed)) if seed is not None else random.SystemRandom()
    half = bits // 2
    p = _gen_prime(half, rng)
    q = _gen_prime(half, rng)
    while q == p:
        q = _gen_prime(half, rng)
    return _assemble(p, q, bits)


class Ciphertext:
    """An element of Z_{n^2}; adding ciphertexts decrypts to plaintext
    addition, and ``scale`` multiplies the plaintext by an integer."""

    __slots__ = ("value", "public")

    def __init__(self, value: int, public: PaillierPublicKey):
        self.value = value
        self.public = public

    def __add__(self, other: "Ciphertext") -> "Ciphertext":
        if self.public.n != other.public.n:
            raise CryptoError("cannot combine ciphertexts under different keys")
        return Ciphertext(self.value * other.value % self.public.n_sq, self.public)

    def scale(self, k: int) -> "Ciphertext":
        return Ciphertext(_powmod(self.value, k % self.public.n, self.public.n_sq),
                          self.public)

    def to_bytes(self) -> bytes:
        width = self.public.wire_width
        return width.to_bytes(4, "big") + self.value.to_bytes(width, "big")

    @classmethod
    def from_bytes(cls, data: bytes, public: PaillierPublicKey) -> "Ciphertext":
        width = int.from_bytes(data[:4], "big")
        return cls(int.from_bytes(data[4:4 + width], "big"), public)


def encrypt(public: PaillierPublicKey, plaintext: int, rng: random.Random) -> Ciphertext:
    """Enc(m) = (1 + m*n) * r^n mod n^2, with fresh blinding r."""
    m = plaintext % public.n
    r = rng.randrange(1, public.n)
    blind = _powmod(r, public.n, public.n_sq)
    return Ciphertext((1 + m * public.n) % public.n_sq * blind % public.n_sq, public)


def decrypt(keypair: PaillierKeyPair, cipher: Ciphertext) -> int:
    pub = keypair.public
    if cipher.public.n != pub.n:
        raise CryptoError("ciphertext does not match this key pair")
    u = _powmod(cipher.value, keypair.lam, pub.n_sq)
    return (u - 1) // pub.n * keypair.mu % pub.n


# ---------------------------------------------------------------------------
# fixed-point encoding


DEFAULT_SCALE_BITS = 24


def fixed_encode(x: float, scale_bits: int = DEFAULT_SCALE_BITS) -> int:
    if not np.isfinite(x):
        raise DomainError(f"cannot fixed-point encode non-finite value {x}")
    if abs(x) >= 2.0 ** (63 - scale_bits):
        raise DomainError(
            f"value {x} exceeds fixed-point range +/-2^{63 - scale_bits}"
        )
    return round(x * (1 << scale_bits))


def fixed_decode(m: int, scale_bits: int = DEFAULT_SCALE_BITS) -> float:
    return m / (1 << scale_bits)


def signed_decode(value: int, n: int) -> int:
    """Map a mod-n residue back to a signed integer."""
    return value - n if value > n // 2 else value


# ---------------------------------------------------------------------------
# secure aggregation


def secure_sum(vectors, keypair: PaillierKeyPair, rng: random.Random,
               scale_bits: int = DEFAULT_SCALE_BITS,
               transcript: RoundTranscript | None = None,
               round_index: int = 0, party_names=None) -> np.ndarray:
    """Element-wise sum of the participants' vectors, learned only in aggregate.

    Each participant fixed-point encodes and encrypts its elements; the
    ciphertexts are combined before they ever reach the decrypting role, so
    exactly one aggregated decryption happens per call.
    """
    vectors = [np.asarray(v, dtype=np.float64) for v in vectors]
    shape = vectors[0].shape
    if any(v.shape != shape for v in vectors):
        raise ContractError(f"all vectors must share shape {shape}")
    pub = keypair.public
    count = int(np.prod(shape)) if shape else 1
    bound = pub.n // (2 * max(len(vectors), 1))
    if party_names is None:
        party_names = [f"party_{i}" for i in range(len(vectors))]

    combined: list[Ciphertext] | None = None
    for name, vec in zip(party_names, vectors):
        cts = []
        for idx, x in enumerate(vec.reshape(-1)):
            m = fixed_encode(float(x), scale_bits)
            if abs(m) >= bound:
                raise DomainError(
                    f"{name} element {idx}: encoded magnitude {abs(m)} "
                    f"would risk modular wrap (bound {bound})"
                )
            cts.append(encrypt(pub, m, rng))
        if transcript is not None:
            transcript.add(round_index, name, "server", "ciphertext",
                           elements=count,
                           byte_size=sum(len(c.to_bytes()) for c in cts),
                           encrypted=True)
        combined = cts if combined is None else [a + b for a, b in zip(combined, cts)]

    totals = np.array([
        fixed_decode(signed_decode(decrypt(keypair, c), pub.n), scale_bits)
        for c in combined
    ])
    if transcript is not None:
        transcript.log_decryption(round_index, count, aggregated=True)
    return totals.reshape(shape)


# ---------------------------------------------------------------------------
# transcript audit


@dataclass
class Finding:
    kind: str
    message: str
    record_index: int | None = None


@dataclass
class AuditReport:
    findings: list[Finding]

    @property
    def ok(self) -> bool:
        return not self.findings

    def render(self) -> str:
        if self.ok:
            return "audit: no findings"
        lines = [f"audit: {len(self.findings)} finding(s)"]
        for f in self.findings:
            where = f" [record {f.record_index}]" if f.record_index is not None else ""
            lines.append(f"  - {f.kind}: {f.message}{where}")
        return "\n".join(lines)


def transcript_audit(transcript: RoundTranscript) -> AuditReport:
    """What a semi-honest observer should never have seen.

    Findings, not exceptions: a plaintext session is a valid run whose
    transcript simply fails the audit.
    """
    findings: list[Finding] = []
    for i, rec in enumerate(transcript.records):
        if rec.kind == "embedding" and not rec.encrypted:
            findings.append(Finding(
                "plaintext_embedding",
                f"{rec.sender} sent {rec.elements} embedding elements in plaintext "
                f"to {rec.receiver} in round {rec.round}", i))
    raw_ids = [str(x) for x in transcript.context.get("raw_ids", [])]
    if raw_ids:
        for i, rec in enumerate(transcript.records):
            if rec.payload is None:
                continue
            leaked = [x for x in raw_ids if x in rec.payload]
            if leaked:
                findings.append(Finding(
                    "raw_id_leak",
                    f"message {rec.sender}->{rec.receiver} carries raw id(s) "
                    f"{leaked[:3]}", i))
    per_round: dict[int, int] = {}
    for ev in transcript.decryptions:
        if not ev.aggregated:
            findings.append(Finding(
                "per_participant_decryption",
                f"round {ev.round}: {ev.elements} elements decrypted without "
                f"aggregation (weaker guarantee)"))
        else:
            per_round[ev.round] = per_round.get(ev.round, 0) + 1
    for rnd, count in sorted(per_round.items()):
        if count > 1:
            findings.append(Finding(
                "excess_decryption",
                f"round {rnd}: {count} aggregated decryptions, expected at most 1"))
    return AuditReport(findings)


def fresh_salt(seed=None) -> bytes:
    """Session salt; derived from the seed in deterministic runs."""
    if seed is None:
        return secrets.token_bytes(16)
    return hashlib.sha256(f"psi-salt:{seed!r}".encode()).digest()[:16]


def serialize_keypair(keypair: PaillierKeyPair, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(keypair.to_json(), fh)


def load_keypair(path) -> PaillierKeyPair:
    with open(path, encoding="utf-8") as fh:
        return PaillierKeyPair.from_json(json.load(fh))
