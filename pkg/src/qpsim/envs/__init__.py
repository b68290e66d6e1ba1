"""Environment registry."""

from qpsim.envs.base import AutoReset, Env, EnvState, NonDifferentiableEnv, env_step, observe, reset, scene_rng
from qpsim.envs.locomotion import Ant, Halfcheetah
from qpsim.envs.pointmass import PointMass

REGISTRY = {"ant": Ant, "halfcheetah": Halfcheetah, "pointmass": PointMass}


def make(name: str, auto_reset: bool = False, **kw):
    """Builds a registered env by name; extra keywords go to its constructor."""
    try:
        cls = REGISTRY[name.lower()]
    except KeyError:
        raise KeyError(f"unknown env {name!r}; choose from {sorted(REGISTRY)}") from None
    env = cls(**kw)
    return AutoReset(env) if auto_reset else env


__all__ = ["Ant", "AutoReset", "Env", "EnvState", "Halfcheetah", "NonDifferentiableEnv", "PointMass", "REGISTRY",
           "env_step", "make", "observe", "reset", "scene_rng"]
