"""Continuous vehicle dynamics and a fixed-step RK4 integrator.

Two models share the 3-dimensional state space:

* ``ROBOT``: planar unicycle chasing a waypoint at constant speed,
  state (x, y, heading),
      dx/dt = v cos(heading)
      dy/dt = v sin(heading)
      dheading/dt = 2 v sin(alpha) / L,   alpha = bearing-to-target - heading
* ``LINEAR3D``: stable linear contraction toward the target,
      dx/dt = diag(-3, -3, -1) (x - target)

The mode vector either names the target directly (waypoint style) or is a
road [src, dst] whose destination is chased (road style).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class NumericalBlowup(Exception):
    """Integrator produced a non-finite state."""


class DynamicsId(Enum):
    ROBOT = "robot"
    LINEAR3D = "linear3d"


LINEAR_RATES = np.array([-3.0, -3.0, -1.0])


@dataclass(frozen=True)
class Dynamics:
    """Dynamics id plus the robot's physical constants (ignored by LINEAR3D)."""

    id: DynamicsId
    v: float = 1.0
    L: float = 1.0

    @property
    def state_dim(self) -> int:
        return 3


def target_of(dyn: Dynamics, p: np.ndarray) -> np.ndarray:
    """The chased point encoded by mode vector ``p``.

    Waypoint style gives the point itself (2-d for ROBOT, 3-d for LINEAR3D);
    road style gives [src, dst] and the destination half is chased.
    """
    p = np.asarray(p, dtype=float)
    if dyn.id is DynamicsId.ROBOT:
        if p.shape[0] == 2:
            return p
        if p.shape[0] == 4:
            return p[2:4]
    else:
        if p.shape[0] == 3:
            return p
        if p.shape[0] == 6:
            return p[3:6]
    raise ValueError(f"mode dimension {p.shape[0]} invalid for {dyn.id}")


def eval_f(dyn: Dynamics, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Derivative f(x, p); ``x`` may be a single state (3,) or a batch (N, 3)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    tgt = target_of(dyn, p)
    if dyn.id is DynamicsId.ROBOT:
        heading = X[:, 2]
        alpha = np.arctan2(tgt[1] - X[:, 1], tgt[0] - X[:, 0]) - heading
        out = np.stack([dyn.v * np.cos(heading),
                        dyn.v * np.sin(heading),
                        2.0 * dyn.v * np.sin(alpha) / dyn.L], axis=1)
    else:
        out = LINEAR_RATES * (X - tgt)
    return out[0] if single else out


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step solution samples; states[0] is the initial state.

    ``duration`` records the true horizon when it is not a multiple of the
    step (the last step is then shorter than dt)."""

    states: np.ndarray
    dt: float
    mode: np.ndarray
    duration: Optional[float] = None

    @property
    def fstate(self) -> np.ndarray:
        return self.states[0]

    @property
    def lstate(self) -> np.ndarray:
        return self.states[-1]

    @property
    def dur(self) -> float:
        if self.duration is not None:
            return self.duration
        return (self.states.shape[0] - 1) * self.dt


def wrap_heading(dyn: Dynamics, X: np.ndarray) -> np.ndarray:
    """Keep the robot's heading on the circle [-pi, pi); no-op for the
    linear model (whose third coordinate is a plain position)."""
    if dyn.id is not DynamicsId.ROBOT:
        return X
    theta = X[..., 2]
    if np.all(theta >= -np.pi) and np.all(theta < np.pi):
        return X
    X = X.copy()
    X[..., 2] = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    return X


def _rk4_steps(dyn: Dynamics, X: np.ndarray, p: np.ndarray, h: float, k: int,
               out: list) -> np.ndarray:
    for _ in range(k):
        k1 = eval_f(dyn, X, p)
        k2 = eval_f(dyn, X + 0.5 * h * k1, p)
        k3 = eval_f(dyn, X + 0.5 * h * k2, p)
        k4 = eval_f(dyn, X + h * k3, p)
        X = wrap_heading(dyn, X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        out.append(X)
    return X


def split_steps(T: float, dt: float):
    """Number of full RK4 steps and the remainder step for horizon T."""
    n_full = int(np.floor(T / dt + 1e-12))
    rem = T - n_full * dt
    if rem <= 1e-12 * max(1.0, T):
        rem = 0.0
    return n_full, rem


def n_samples(T: float, dt: float) -> int:
    """Sample count of a simulated trajectory over horizon T (incl. t=0)."""
    n_full, rem = split_steps(T, dt)
    return n_full + 1 + (1 if rem > 0.0 else 0)


def simulate_batch(dyn: Dynamics, X0: np.ndarray, p: np.ndarray, T: float,
                   dt: float) -> np.ndarray:
    """RK4 trajectories from all rows of ``X0`` at once; shape (N, k+1, 3).

    A final partial step is taken when T is not a multiple of dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("duration must be nonnegative")
    X = wrap_heading(dyn, np.atleast_2d(np.asarray(X0, dtype=float)))
    p = np.asarray(p, dtype=float)
    n_full, rem = split_steps(T, dt)
    samples = [X]
    X = _rk4_steps(dyn, X, p, dt, n_full, samples)
    if rem > 0.0:
        _rk4_steps(dyn, X, p, rem, 1, samples)
    traj = np.stack(samples, axis=1)
    if not np.all(np.isfinite(traj)):
        raise NumericalBlowup("non-finite state during integration")
    return traj


def simulate(dyn: Dynamics, x0: np.ndarray, p: np.ndarray, T: float,
             dt: float) -> Trajectory:
    """Single-trajectory wrapper over :func:`simulate_batch`."""
    traj = simulate_batch(dyn, np.asarray(x0, dtype=float)[None, :], p, T, dt)
    return Trajectory(traj[0], dt, np.asarray(p, dtype=float), duration=float(T))


def state_deviation(dyn: Dynamics, a: np.ndarray, b: np.ndarray) -> float:
    """Sup-norm distance between state arrays, measuring the robot's
    heading on the circle (so states differing by full turns coincide)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = np.abs(a - b)
    if dyn.id is DynamicsId.ROBOT and a.shape[-1] == 3:
        dth = np.mod(d[..., 2], 2.0 * np.pi)
        d = d.copy()
        d[..., 2] = np.minimum(dth, 2.0 * np.pi - dth)
    return float(np.max(d)) if d.size else 0.0
