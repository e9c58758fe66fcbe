"""Solved trajectories in both coordinate systems, with JSON and CSV export.

Floats are written with ``repr`` (shortest round-trip form), so importing an
exported file reproduces every array bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Trajectory:
    times: np.ndarray        # (K+1,)
    x: np.ndarray            # (K+1, n) original coordinates
    xi: np.ndarray           # (K+1, n) linearized coordinates
    u: np.ndarray            # (K, k)
    z: np.ndarray            # (K, k)
    state_dims: tuple
    control_dims: tuple

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (tuple(self.state_dims) == tuple(other.state_dims)
                and tuple(self.control_dims) == tuple(other.control_dims)
                and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in ("times", "x", "xi", "u", "z")))

    @property
    def num_players(self) -> int:
        return len(self.state_dims)

    def _split(self, arr, dims):
        offs = np.cumsum([0] + list(dims))
        return [arr[..., offs[i]:offs[i + 1]] for i in range(len(dims))]

    def positions(self) -> np.ndarray:
        """(K+1, N, 2) player positions; identical in both coordinate systems."""
        return np.stack([blk[:, :2] for blk in self._split(self.x, self.state_dims)], axis=1)

    def to_records(self) -> list[dict]:
        K = len(self.times) - 1
        xs, xis = self._split(self.x, self.state_dims), self._split(self.xi, self.state_dims)
        us, zs = self._split(self.u, self.control_dims), self._split(self.z, self.control_dims)
        out = []
        for t in range(K + 1):
            players = []
            for i in range(self.num_players):
                players.append({
                    "x": xs[i][t].tolist(),
                    "xi": xis[i][t].tolist(),
                    "u": us[i][t].tolist() if t < K else None,
                    "z": zs[i][t].tolist() if t < K else None,
                })
            out.append({"t": float(self.times[t]), "players": players})
        return out

    def to_json(self) -> str:
        doc = {
            "state_dims": list(self.state_dims),
            "control_dims": list(self.control_dims),
            "records": self.to_records(),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        doc = json.loads(text)
        sd, cd = tuple(doc["state_dims"]), tuple(doc["control_dims"])
        recs = doc["records"]
        times = np.array([r["t"] for r in recs])
        x = np.array([sum((p["x"] for p in r["players"]), []) for r in recs])
        xi = np.array([sum((p["xi"] for p in r["players"]), []) for r in recs])
        u = np.array([sum((p["u"] for p in r["players"]), []) for r in recs[:-1]]).reshape(len(recs) - 1, sum(cd))
        z = np.array([sum((p["z"] for p in r["players"]), []) for r in recs[:-1]]).reshape(len(recs) - 1, sum(cd))
        return cls(times, x, xi, u, z, sd, cd)

    def columns(self) -> list[str]:
        cols = ["t"]
        for name, dims in (("x", self.state_dims), ("xi", self.state_dims), ("u", self.control_dims),
                           ("z", self.control_dims)):
            for i, d in enumerate(dims):
                cols += [f"p{i}_{name}{j}" for j in range(d)]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        K = len(self.times) - 1
        k = sum(self.control_dims)
        for t in range(K + 1):
            ctrl = (list(map(repr, self.u[t].tolist())) + list(map(repr, self.z[t].tolist()))) if t < K \
                else [""] * (2 * k)
            w.writerow([repr(float(self.times[t]))] + list(map(repr, self.x[t].tolist()))
                       + list(map(repr, self.xi[t].tolist())) + ctrl)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        sd = _dims_from_header(header, "x")
        cd = _dims_from_header(header, "u")
        n, k = sum(sd), sum(cd)
        times = np.array([float(r[0]) for r in body])
        x = np.array([[float(v) for v in r[1:1 + n]] for r in body])
        xi = np.array([[float(v) for v in r[1 + n:1 + 2 * n]] for r in body])
        u = np.array([[float(v) for v in r[1 + 2 * n:1 + 2 * n + k]] for r in body[:-1]]).reshape(len(body) - 1, k)
        z = np.array([[float(v) for v in r[1 + 2 * n + k:]] for r in body[:-1]]).reshape(len(body) - 1, k)
        return cls(times, x, xi, u, z, sd, cd)

    def save(self, path) -> None:
        path = Path(path)
        text = self.to_csv() if path.suffix == ".csv" else self.to_json()
        path.write_text(text)

    @classmethod
    def load(cls, path) -> "Trajectory":
        path = Path(path)
        text = path.read_text()
        return cls.from_csv(text) if path.suffix == ".csv" else cls.from_json(text)


def _dims_from_header(header, name) -> tuple:
    counts: dict = {}
    for col in header[1:]:
        player, rest = col.split("_", 1)
        if rest.rstrip("0123456789") == name:
            i = int(player[1:])
            counts[i] = counts.get(i, 0) + 1
    return tuple(counts[i] for i in sorted(counts))
