"""In-process simulation of the federated protocol and its transcript audit.

Each round, every server computes a privatized message from the current
iterate, its own data and its own noise stream.  The coordinator sees only the
resulting :class:`Transcript` records and folds them into the next iterate.
The log of transcripts is append-only; replaying it through the aggregation
rule rebuilds the iterate history exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from dpfda.privacy import PrivatizedVector, scale_digest, verify_provenance

log = logging.getLogger(__name__)

ENVELOPE_SDS = 6.0


def noise_stream(seed: int, server: int, t: int) -> np.random.Generator:
    """Independent generator for the noise of ``server`` in round ``t``."""
    return np.random.default_rng([int(seed), int(server), int(t)])


def iterate_digest(param) -> str:
    return hashlib.sha256(np.ascontiguousarray(param, dtype=float).tobytes()).hexdigest()[:16]


class ServerError(RuntimeError):
    def __init__(self, server_id: int, t: int, exc: BaseException):
        super().__init__(f"server {server_id} failed in round {t}: {exc!r}")
        self.server_id = server_id
        self.round = t


@dataclass(frozen=True)
class Transcript:
    """One message from a server to the coordinator."""

    server_id: int
    round: int
    payload: np.ndarray
    variances: np.ndarray
    tag: str
    private: bool
    bound: np.ndarray | None = None
    iterate_digest: str = ""

    @property
    def noise_scale_digest(self) -> str:
        return scale_digest(self.variances)

    def to_record(self, run_id: str) -> dict:
        return {
            "run_id": run_id,
            "round": self.round,
            "server": self.server_id,
            "payload": [float(v) for v in self.payload],
            "variances": [float(v) for v in self.variances],
            "scale_digest": self.noise_scale_digest,
            "bound": None if self.bound is None else [float(v) for v in self.bound],
            "private": self.private,
            "iterate_digest": self.iterate_digest,
            "tag": self.tag,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Transcript":
        bound = rec.get("bound")
        return cls(
            server_id=int(rec["server"]),
            round=int(rec["round"]),
            payload=np.asarray(rec["payload"], dtype=float),
            variances=np.asarray(rec["variances"], dtype=float),
            tag=str(rec.get("tag", "")),
            private=bool(rec.get("private", True)),
            bound=None if bound is None else np.asarray(bound, dtype=float),
            iterate_digest=str(rec.get("iterate_digest", "")),
        )


@dataclass
class ProtocolRun:
    run_id: str
    n_servers: int
    rounds: int
    transcripts: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    def append(self, tr: Transcript) -> None:
        self.transcripts.append(tr)

    def round_transcripts(self, t: int) -> list:
        return [tr for tr in self.transcripts if tr.round == t]

    @property
    def private(self) -> bool:
        return all(tr.private for tr in self.transcripts)


RoundFn = Callable[[int, np.ndarray, Any, np.random.Generator], PrivatizedVector]
AggregateFn = Callable[[np.ndarray, Sequence[Transcript]], np.ndarray]


def run_protocol(
    servers: Sequence[Any],
    round_fn: RoundFn,
    aggregate_fn: AggregateFn,
    T: int,
    init,
    seed: int = 0,
    run_id: str = "run",
) -> ProtocolRun:
    """Execute ``T`` rounds of the federated protocol.

    ``round_fn(t, iterate, local, rng)`` runs on the server holding ``local``
    and must return a :class:`PrivatizedVector`.  ``aggregate_fn(iterate,
    transcripts)`` is the coordinator update and only ever sees transcripts.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if len(servers) == 0:
        raise ValueError("at least one server is required")
    current = np.array(init, dtype=float)
    current.flags.writeable = False
    run = ProtocolRun(run_id=run_id, n_servers=len(servers), rounds=T, iterates=[current])
    for t in range(T):
        digest = iterate_digest(current)
        batch = []
        for s, local in enumerate(servers):
            try:
                msg = round_fn(t, current, local, noise_stream(seed, s, t))
            except Exception as exc:
                raise ServerError(s, t, exc) from exc
            if not isinstance(msg, PrivatizedVector):
                raise ServerError(s, t, TypeError("server must emit a PrivatizedVector"))
            batch.append(
                Transcript(s, t, msg.payload, msg.variances, msg.tag, msg.private, msg.bound, digest)
            )
        for tr in batch:
            run.append(tr)
        current = np.array(aggregate_fn(current, tuple(batch)), dtype=float)
        current.flags.writeable = False
        run.iterates.append(current)
    return run


def replay(run: ProtocolRun, aggregate_fn: AggregateFn) -> list:
    """Rebuild the iterate history from the transcript log alone."""
    history = [np.array(run.iterates[0], dtype=float)]
    for t in range(run.rounds):
        history.append(np.array(aggregate_fn(history[-1], tuple(run.round_transcripts(t)))))
    return history


def weighted_step(rho: float, weights, project: Callable) -> AggregateFn:
    """Coordinator rule ``project(param - rho * sum_s w_s M_s)``."""
    weights = [float(w) for w in weights]

    def aggregate(param, transcripts):
        combined = sum(weights[tr.server_id] * tr.payload for tr in transcripts)
        return project(param - rho * combined)

    return aggregate


@dataclass
class AuditReport:
    passed: bool
    non_private_mode: bool
    n_transcripts: int
    provenance_failures: list = field(default_factory=list)
    envelope_failures: list = field(default_factory=list)
    fingerprint_hits: list = field(default_factory=list)
    structure_failures: list = field(default_factory=list)
    provenance_checked: bool = True
    notes: list = field(default_factory=list)

    def summary(self) -> str:
        lines = []
        if self.non_private_mode:
            lines.append("!!! NON-PRIVATE MODE: noise was disabled; transcripts carry no privacy guarantee")
        lines.append(f"audit {'PASSED' if self.passed else 'FAILED'} ({self.n_transcripts} transcripts)")
        prov = "not checked (offline)" if not self.provenance_checked else len(self.provenance_failures)
        lines.append(f"  provenance failures: {prov}")
        lines.append(f"  envelope failures:   {len(self.envelope_failures)}")
        lines.append(f"  fingerprint hits:    {len(self.fingerprint_hits)}")
        lines.append(f"  structure failures:  {len(self.structure_failures)}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def audit_transcripts(
    transcripts: Sequence[Transcript],
    n_servers: int,
    rounds: int,
    raw_fingerprints: Iterable[float] | None = None,
    iterates: Sequence | None = None,
    check_provenance: bool = True,
) -> AuditReport:
    transcripts = list(transcripts)
    report = AuditReport(
        passed=True,
        non_private_mode=not all(tr.private for tr in transcripts) or not transcripts,
        n_transcripts=len(transcripts),
        provenance_checked=check_provenance,
    )

    expected = [(t, s) for t in range(rounds) for s in range(n_servers)]
    if [(tr.round, tr.server_id) for tr in transcripts] != expected:
        report.structure_failures.append("transcript log is not in (round, server) order or has gaps")
    dims = {tr.payload.shape for tr in transcripts}
    if len(dims) > 1:
        report.structure_failures.append(f"inconsistent payload shapes {sorted(dims)}")

    for i, tr in enumerate(transcripts):
        key = (tr.round, tr.server_id)
        if check_provenance and not verify_provenance(tr.payload, tr.variances, tr.tag):
            report.provenance_failures.append(key)
        if tr.bound is not None:
            envelope = tr.bound + ENVELOPE_SDS * np.sqrt(tr.variances)
            if np.any(np.abs(tr.payload) > envelope):
                report.envelope_failures.append(key)
        else:
            report.notes.append(f"transcript {key} carries no clipping bound; envelope skipped")
        if iterates is not None and tr.iterate_digest:
            if tr.round >= len(iterates) or iterate_digest(iterates[tr.round]) != tr.iterate_digest:
                report.structure_failures.append(f"transcript {key} not computed from iterate {tr.round}")

    if raw_fingerprints is not None:
        # heuristic: exact float matches only
        raw = {float(v) for v in raw_fingerprints if math.isfinite(v)}
        for tr in transcripts:
            hits = [float(v) for v in tr.payload if float(v) in raw]
            if hits:
                report.fingerprint_hits.append(((tr.round, tr.server_id), hits))

    if report.non_private_mode:
        report.notes.append("noise-disabled transcripts present; run is NOT differentially private")
    report.passed = not (
        report.provenance_failures
        or report.envelope_failures
        or report.fingerprint_hits
        or report.structure_failures
    )
    return report


def audit_run(run: ProtocolRun, raw_fingerprints: Iterable[float] | None = None) -> AuditReport:
    """Check provenance, noise envelope, raw-value leakage and round structure of a run."""
    return audit_transcripts(
        run.transcripts,
        run.n_servers,
        run.rounds,
        raw_fingerprints=raw_fingerprints,
        iterates=run.iterates,
    )


def export_transcripts(run: ProtocolRun, path) -> Path:
    """Write one JSON record per line; floats round-trip exactly."""
    path = Path(path)
    with path.open("w") as fh:
        for tr in run.transcripts:
            fh.write(json.dumps(tr.to_record(run.run_id)) + "\n")
    return path


def load_transcripts(path) -> list:
    out = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(Transcript.from_record(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed transcript record ({exc})") from exc
    return out
