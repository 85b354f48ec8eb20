"""Binary field snapshots and NDJSON diagnostics.

Snapshot layout (little-endian throughout):

    bytes 0..3    magic "MHD2"
    bytes 4..7    format version, uint32
    bytes 8..11   header length H, uint32
    bytes 12..    UTF-8 JSON header of H bytes
    then          one complex128 array (re, im float64 pairs) per field named
                  in header["fields"], each resolution^2 entries in row-major
                  wavenumber order

The header carries {format_version, time, nu, eta, resolution, fields}.
Round-trips are bit-exact. Diagnostics are one JSON object per line; Python's
JSON float formatting round-trips IEEE doubles exactly, so parsing recovers
the records losslessly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

MAGIC = b"MHD2"
FORMAT_VERSION = 1


class SnapshotFormatError(ValueError):
    """The bytes on disk do not form a valid snapshot."""


@dataclass
class Snapshot:
    """Parsed snapshot: JSON header plus named complex coefficient arrays."""

    header: dict
    arrays: dict[str, np.ndarray]

    @property
    def time(self) -> float:
        return float(self.header["time"])

    @property
    def resolution(self) -> int:
        return int(self.header["resolution"])


def write_snapshot(
    path,
    arrays: dict[str, np.ndarray],
    time: float,
    nu: float,
    eta: float,
) -> None:
    """Write named (M, M) complex coefficient arrays with their metadata."""
    names = list(arrays)
    if not names:
        raise SnapshotFormatError("a snapshot needs at least one field")
    resolution = arrays[names[0]].shape[0]
    for name, arr in arrays.items():
        if arr.shape != (resolution, resolution):
            raise SnapshotFormatError(f"field {name!r} has shape {arr.shape}")
    header = {
        "format_version": FORMAT_VERSION,
        "time": time,
        "nu": nu,
        "eta": eta,
        "resolution": resolution,
        "fields": names,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(FORMAT_VERSION).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<c16").tobytes())


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        if version != FORMAT_VERSION:
            raise SnapshotFormatError(f"unsupported format version {version}")
        hlen = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SnapshotFormatError(f"corrupt snapshot header: {exc}") from exc
        m = int(header["resolution"])
        arrays = {}
        for name in header["fields"]:
            raw = fh.read(16 * m * m)
            if len(raw) != 16 * m * m:
                raise SnapshotFormatError(f"payload for field {name!r} is truncated")
            arrays[name] = np.frombuffer(raw, dtype="<c16").reshape(m, m).copy()
        if fh.read(1):
            raise SnapshotFormatError("trailing bytes after the last field")
    return Snapshot(header=header, arrays=arrays)


def write_state_snapshot(path, state, nu: float, eta: float) -> None:
    """Store a full MHD state (u1, u2, b1, b2)."""
    write_snapshot(
        path,
        {
            "u1": state.u.coeffs[0],
            "u2": state.u.coeffs[1],
            "b1": state.b.coeffs[0],
            "b2": state.b.coeffs[1],
        },
        time=state.t,
        nu=nu,
        eta=eta,
    )


def snapshot_to_state(snap: Snapshot):
    from .fields import SpectralField2D, TorusGrid
    from .solver import MHDState

    grid = TorusGrid(snap.resolution)
    u = SpectralField2D(grid, np.stack([snap.arrays["u1"], snap.arrays["u2"]]))
    b = SpectralField2D(grid, np.stack([snap.arrays["b1"], snap.arrays["b2"]]))
    return MHDState(u, b, snap.time)


def snapshot_to_field(snap: Snapshot, prefix: str = "b"):
    from .fields import SpectralField2D, TorusGrid

    grid = TorusGrid(snap.resolution)
    return SpectralField2D(
        grid, np.stack([snap.arrays[prefix + "1"], snap.arrays[prefix + "2"]])
    )


@dataclass
class DiagnosticsRecord:
    """One diagnostics line: scalar invariants plus requested Sobolev norms."""

    t: float
    energy_u: float
    energy_b: float
    cross_helicity: float
    sobolev: dict = field(default_factory=dict)      # name -> [H^0 .. H^rmax]
    signature: dict | None = None                    # topology counts, when sampled

    def to_json(self) -> str:
        d = asdict(self)
        if d["signature"] is None:
            del d["signature"]
        return json.dumps(d)

    @classmethod
    def from_json(cls, line: str) -> "DiagnosticsRecord":
        d = json.loads(line)
        return cls(
            t=d["t"],
            energy_u=d["energy_u"],
            energy_b=d["energy_b"],
            cross_helicity=d["cross_helicity"],
            sobolev=d.get("sobolev", {}),
            signature=d.get("signature"),
        )


def write_ndjson(path, records: list[DiagnosticsRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_ndjson(path) -> list[DiagnosticsRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(DiagnosticsRecord.from_json(line))
    return records
