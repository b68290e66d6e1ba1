"""Gradients straight through the simulator on the contact-free PointMass."""

import numpy as np

from qpsim import diff
from qpsim.agents import APGConfig, APGProblem, train_apg
from qpsim.envs import make

# the tape records every float operation, so d(loss)/d(x) is one reverse sweep
print("d/dx tanh(x) * x at 0.5:", diff.grad(lambda x: np.tanh(x) * x, 0.5))

env = make("pointmass")
problem = APGProblem(env, APGConfig(horizon=20), seed=0)
theta = problem.net.init(np.random.default_rng(0), last_scale=0.5)
loss, g = problem.value_and_grad(theta)
print("rollout loss", loss, "with", g.size, "gradient entries")

# compare against a central difference along one random direction
d = np.random.default_rng(1).normal(size=theta.shape)
d /= np.linalg.norm(d)
fd = (problem.loss(theta + 1e-6 * d) - problem.loss(theta - 1e-6 * d)) / 2e-6
print("tape", g @ d, "finite difference", fd)

# plain gradient descent on the rollout loss
_, log = train_apg(env, APGConfig(iterations=20), seed=0)
print("loss by iteration", np.round(log.events["loss"], 4))

# the Ant has ground contacts and joint limits, and strict mode refuses it
try:
    train_apg(make("ant"), APGConfig(iterations=1))
except Exception as e:
    print(type(e).__name__, e)
