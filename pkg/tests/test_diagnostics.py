import csv

import numpy as np
import pytest

from qpsim.diagnostics import (
    CONSERVATION_HEADER,
    THROUGHPUT_HEADER,
    protocol_config,
    run_conservation,
    run_throughput,
    write_csv,
)

from conftest import free_body_scene, two_body_scene


def test_scene_without_joints_is_rejected():
    with pytest.raises(ValueError, match="needs a scene with joints"):
        run_conservation(free_body_scene(), seeds=2)


def test_no_seeds_rejected():
    with pytest.raises(ValueError, match="seed"):
        run_conservation(two_body_scene(), seeds=[])


def test_protocol_strips_dissipation(ant_config):
    cfg = protocol_config(ant_config, 0.005, actuators=False)
    assert cfg.dt == 0.005 and cfg.substeps == 1 and cfg.gravity == (0.0, 0.0, 0.0)
    assert not cfg.colliders and not cfg.actuators
    assert all(j.damping == 0.0 and j.angular_damping == 0.0 for j in cfg.joints)
    assert protocol_config(ant_config, 0.005, actuators=True).actuators == ant_config.actuators


def test_internal_torques_conserve_linear_momentum():
    rep = run_conservation(two_body_scene(), dt_ladder=(0.01,), seeds=4, duration=0.5)
    assert rep.dP[0] < 1e-12
    assert rep.dL[0] < 1e-6


def test_energy_drift_shrinks_with_dt():
    rep = run_conservation(two_body_scene(stiffness=100.0), dt_ladder=(0.02, 0.01, 0.005), seeds=4, duration=0.5)
    assert rep.dE[0] > rep.dE[1] > rep.dE[2]


def test_report_is_deterministic(ant_config):
    a = run_conservation(ant_config, dt_ladder=(0.01,), seeds=3, duration=0.1)
    b = run_conservation(ant_config, dt_ladder=(0.01,), seeds=3, duration=0.1)
    assert a.rows() == b.rows()
    assert a.seeds == 3


def test_csv_layout(tmp_path, ant_config):
    rep = run_conservation(ant_config, dt_ladder=(0.02, 0.01), seeds=2, duration=0.1)
    path = tmp_path / "c.csv"
    write_csv(path, CONSERVATION_HEADER, rep.rows())
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == ("dt", "dP", "dL", "dE", "seeds")
    assert [float(r[0]) for r in rows[1:]] == [0.02, 0.01]
    assert all(int(r[4]) == 2 for r in rows[1:])


def test_throughput_report():
    rep = run_throughput("pointmass", batch_sizes=(1, 8), workers=2, duration=0.05, warmup=1)
    assert rep.batch == [1, 8]
    assert all(r > 0 for r in rep.steps_per_sec)
    assert [r[:2] for r in rep.rows()] == [(1, 2), (8, 2)]
    assert THROUGHPUT_HEADER == ("batch", "workers", "steps_per_sec")


def test_throughput_needs_increasing_batches():
    with pytest.raises(ValueError, match="strictly increasing"):
        run_throughput("pointmass", batch_sizes=(8, 8))


def test_float32_protocol_runs(ant_config):
    rep = run_conservation(ant_config, dt_ladder=(0.01,), seeds=2, duration=0.1, dtype=np.float32)
    assert np.isfinite(rep.dE[0])
