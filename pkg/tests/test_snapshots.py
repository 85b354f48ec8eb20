"""Binary snapshot format and NDJSON diagnostics round-trips."""

import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mhdrecon.fields import TaylorSpec, TorusGrid, make_taylor, zero_field
from mhdrecon.snapshots import (
    DiagnosticsRecord,
    Snapshot,
    SnapshotFormatError,
    read_ndjson,
    read_snapshot,
    snapshot_to_field,
    snapshot_to_state,
    write_ndjson,
    write_snapshot,
    write_state_snapshot,
)
from mhdrecon.solver import MHDState


class TestSnapshotRoundTrip:
    def test_bit_exact(self, tmp_path):
        rng = np.random.default_rng(123)
        arrays = {
            "b1": rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16)),
            "b2": rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16)),
        }
        path = tmp_path / "f.snap"
        write_snapshot(path, arrays, time=0.125, nu=0.5, eta=0.25)
        snap = read_snapshot(path)
        assert snap.header["fields"] == ["b1", "b2"]
        assert snap.time == 0.125
        for name in arrays:
            assert np.array_equal(snap.arrays[name], arrays[name])
            assert snap.arrays[name].dtype == np.complex128

    @given(
        data=hnp.arrays(
            dtype=np.complex128,
            shape=(4, 4),
            elements=st.complex_numbers(
                allow_nan=False, allow_infinity=False, max_magnitude=1e100
            ),
        )
    )
    @settings(
        max_examples=25,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    def test_arbitrary_payload_bit_exact(self, tmp_path, data):
        path = tmp_path / "h.snap"
        write_snapshot(path, {"b1": data}, time=0.0, nu=0.0, eta=0.0)
        back = read_snapshot(path).arrays["b1"]
        assert back.tobytes() == np.ascontiguousarray(data).tobytes()

    def test_state_round_trip(self, tmp_path):
        grid = TorusGrid(16)
        st_in = MHDState(zero_field(grid), make_taylor(TaylorSpec(2, 1), 0.7, grid), 1.5)
        path = tmp_path / "state.snap"
        write_state_snapshot(path, st_in, nu=0.1, eta=0.2)
        snap = read_snapshot(path)
        st_out = snapshot_to_state(snap)
        assert st_out.t == 1.5
        assert np.array_equal(st_out.b.coeffs, st_in.b.coeffs)
        assert np.array_equal(st_out.u.coeffs, st_in.u.coeffs)
        field = snapshot_to_field(snap, "b")
        assert np.array_equal(field.coeffs, st_in.b.coeffs)

    def test_header_metadata(self, tmp_path):
        grid = TorusGrid(16)
        st_in = MHDState(zero_field(grid), make_taylor(TaylorSpec(1, 1), 1.0, grid), 0.0)
        path = tmp_path / "meta.snap"
        write_state_snapshot(path, st_in, nu=0.25, eta=0.125)
        header = read_snapshot(path).header
        assert header["nu"] == 0.25 and header["eta"] == 0.125
        assert header["resolution"] == 16
        assert header["format_version"] == 1


class TestSnapshotErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.snap"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(SnapshotFormatError, match="magic"):
            read_snapshot(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.snap"
        arrays = {"b1": np.zeros((8, 8), dtype=complex)}
        write_snapshot(path, arrays, time=0.0, nu=0.0, eta=0.0)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(SnapshotFormatError, match="truncated"):
            read_snapshot(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "trail.snap"
        write_snapshot(path, {"b1": np.zeros((8, 8), dtype=complex)}, time=0, nu=0, eta=0)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(SnapshotFormatError, match="trailing"):
            read_snapshot(path)

    def test_empty_field_list(self, tmp_path):
        with pytest.raises(SnapshotFormatError):
            write_snapshot(tmp_path / "e.snap", {}, time=0, nu=0, eta=0)


class TestDiagnosticsNDJSON:
    def _records(self):
        return [
            DiagnosticsRecord(
                t=0.1 * k,
                energy_u=np.pi * k,
                energy_b=1e-17 + k,
                cross_helicity=-0.3 * k,
                sobolev={"u": [1.0, 2.0 + 1e-12], "b": [0.5, 0.25]},
                signature={"n_saddles": 2, "n_centers": 2} if k == 2 else None,
            )
            for k in range(4)
        ]

    def test_lossless_round_trip(self, tmp_path):
        records = self._records()
        path = tmp_path / "diag.ndjson"
        write_ndjson(path, records)
        back = read_ndjson(path)
        assert back == records

    def test_float_exactness(self, tmp_path):
        exotic = DiagnosticsRecord(
            t=1e-308, energy_u=np.nextafter(1.0, 2.0), energy_b=0.1 + 0.2,
            cross_helicity=-0.0,
        )
        path = tmp_path / "x.ndjson"
        write_ndjson(path, [exotic])
        back = read_ndjson(path)[0]
        assert back.t == 1e-308
        assert back.energy_u == np.nextafter(1.0, 2.0)
        assert back.energy_b == 0.1 + 0.2

    def test_one_object_per_line(self, tmp_path):
        path = tmp_path / "lines.ndjson"
        write_ndjson(path, self._records())
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 4
        for line in lines:
            json.loads(line)

    def test_times_strictly_increasing(self, tmp_path):
        path = tmp_path / "t.ndjson"
        write_ndjson(path, self._records())
        ts = [r.t for r in read_ndjson(path)]
        assert all(a < b for a, b in zip(ts, ts[1:]))
