"""Load a scene file, place its bodies, and drop a ball."""

import numpy as np

from qpsim.config import SceneBuilder, anchor_separation, default_qp, load_config, render_config, scene_path
from qpsim.physics import QP, System, system_step

# the two-body pendulum scene shipped with the package
cfg = load_config(scene_path("appendix_a"))
print(render_config(cfg))

# default_qp walks the joint tree so every joint starts closed
qp = default_qp(cfg, dtype=np.float64)
print("child placed at", qp.pos[0, 1])
print("worst anchor gap", anchor_separation(cfg, qp).max())

# a lone ball under gravity, built in code instead of parsed
b = SceneBuilder(dt=0.01, gravity=(0.0, 0.0, -9.8))
b.add_body("ball", mass=1.0)
sys = System(b.finalize(), dtype=np.float64)

qp = QP.zero(1, 1, dtype=np.float64)
for _ in range(100):
    qp = system_step(sys, qp)

# position is updated before velocity, so after n steps
# z = g dt^2 n (n - 1) / 2 rather than the continuous g t^2 / 2
n, dt, g = 100, 0.01, -9.8
print("simulated z", qp.pos[0, 0, 2])
print("closed form", g * dt * dt * n * (n - 1) / 2)
print("continuous ", 0.5 * g * (n * dt) ** 2)
