"""Line-delimited JSON trajectory dumps: one object per step."""

from __future__ import annotations

import json
from typing import IO, Iterable, Iterator

import numpy as np

from qpsim.physics.types import QP


def trajectory_record(step: int, qp: QP) -> dict:
    return {
        "step": int(step),
        "pos": np.asarray(qp.pos, dtype=float).ravel().tolist(),
        "rot": np.asarray(qp.rot, dtype=float).ravel().tolist(),
        "vel": np.asarray(qp.vel, dtype=float).ravel().tolist(),
        "ang": np.asarray(qp.ang, dtype=float).ravel().tolist(),
    }


def write_trajectory(fh: IO[str], steps: Iterable[tuple[int, QP]]) -> int:
    n = 0
    for step, qp in steps:
        fh.write(json.dumps(trajectory_record(step, qp)) + "\n")
        n += 1
    return n


def read_trajectory(fh: IO[str], num_scenes: int, num_bodies: int) -> Iterator[tuple[int, QP]]:
    for line in fh:
        if not line.strip():
            continue
        rec = json.loads(line)
        shape = lambda k: (num_scenes, num_bodies, k)  # noqa: E731
        qp = QP(
            np.asarray(rec["pos"]).reshape(shape(3)),
            np.asarray(rec["rot"]).reshape(shape(4)),
            np.asarray(rec["vel"]).reshape(shape(3)),
            np.asarray(rec["ang"]).reshape(shape(3)),
        )
        yield rec["step"], qp
