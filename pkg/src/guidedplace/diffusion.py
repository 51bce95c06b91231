"""DDPM schedule and the closed-form forward / reverse formulas.

Timesteps are 1-based: ``t = 1..T``; arrays are stored 0-based, so the value
for step ``t`` lives at index ``t - 1``.  A respaced schedule keeps a
``timesteps`` map from its own steps to the model's training timesteps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidScheduleParams, ScheduleMismatch, ShapeMismatch, TimestepOutOfRange

_PURPOSES = {"init": 1, "step": 2, "train_t": 3, "train_eps": 4, "data": 5, "augment": 6, "misc": 7}


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray
    timesteps: np.ndarray     # model timestep for each step (identity unless respaced)
    kind: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.02
    train_T: int = 0          # length of the schedule the model was trained on

    def check_t(self, t):
        if not 1 <= t <= self.T:
            raise TimestepOutOfRange(f"timestep {t} outside [1, {self.T}]")
        return t - 1

    def signature(self):
        return {"kind": self.kind, "T": self.train_T, "beta_start": self.beta_start,
                "beta_end": self.beta_end}

    def to_dict(self):
        return {**self.signature(), "respaced_to": self.T}

    def ensure_compatible(self, signature):
        ours = self.signature()
        for key, value in ours.items():
            theirs = signature.get(key)
            if isinstance(value, float):
                same = theirs is not None and math.isclose(value, theirs, rel_tol=1e-12)
            else:
                same = value == theirs
            if not same:
                raise ScheduleMismatch(f"schedule {key}={value!r} but checkpoint has {theirs!r}")


def _from_betas(beta, kind, beta_start, beta_end, timesteps, train_T):
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return DiffusionSchedule(
        T=int(beta.shape[0]), beta=beta, alpha=alpha, alpha_bar=alpha_bar,
        sigma=np.sqrt(beta), timesteps=np.asarray(timesteps, dtype=np.int64),
        kind=kind, beta_start=float(beta_start), beta_end=float(beta_end), train_T=int(train_T))


def make_schedule(T=1000, kind="linear", beta_start=1e-4, beta_end=0.02):
    if not (isinstance(T, (int, np.integer)) and T >= 1):
        raise InvalidScheduleParams(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidScheduleParams(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if kind == "linear":
        beta = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_start])
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1) / T
        f = np.cos((steps + s) / (1 + s) * math.pi / 2) ** 2
        beta = np.clip(1.0 - f[1:] / f[:-1], beta_start, beta_end)
    else:
        raise InvalidScheduleParams(f"unknown schedule kind {kind!r}")
    return _from_betas(np.asarray(beta, dtype=np.float64), kind, beta_start, beta_end,
                       np.arange(1, T + 1), T)


def respace(schedule: DiffusionSchedule, n_steps: int) -> DiffusionSchedule:
    """Evenly strided sub-schedule with ``n_steps`` steps over the same chain."""
    if not 1 <= n_steps <= schedule.T:
        raise InvalidScheduleParams(f"cannot respace {schedule.T} steps to {n_steps}")
    keep = np.unique(np.round(np.linspace(1, schedule.T, n_steps)).astype(np.int64))
    abar = schedule.alpha_bar[keep - 1]
    prev = np.concatenate([[1.0], abar[:-1]])
    beta = 1.0 - abar / prev
    return _from_betas(beta, schedule.kind, schedule.beta_start, schedule.beta_end,
                       schedule.timesteps[keep - 1], schedule.train_T)


def schedule_from_dict(d):
    base = make_schedule(int(d["T"]), d["kind"], float(d["beta_start"]), float(d["beta_end"]))
    n = int(d.get("respaced_to", base.T))
    return base if n == base.T else respace(base, n)


def _same_shape(a, b, what):
    if np.shape(a) != np.shape(b):
        raise ShapeMismatch(f"{what}: shapes {np.shape(a)} and {np.shape(b)} differ")


def q_sample(x0, t, eps, sched):
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    i = sched.check_t(t)
    _same_shape(x0, eps, "q_sample")
    ab = sched.alpha_bar[i]
    return math.sqrt(ab) * np.asarray(x0) + math.sqrt(1.0 - ab) * np.asarray(eps)


def predict_x0(x_t, eps_hat, t, sched):
    i = sched.check_t(t)
    _same_shape(x_t, eps_hat, "predict_x0")
    ab = sched.alpha_bar[i]
    return (np.asarray(x_t) - math.sqrt(1.0 - ab) * np.asarray(eps_hat)) / math.sqrt(ab)


def guided_epsilon(x_t, x0_guided, t, sched):
    """Noise that makes ``predict_x0`` return ``x0_guided``."""
    i = sched.check_t(t)
    _same_shape(x_t, x0_guided, "guided_epsilon")
    ab = sched.alpha_bar[i]
    return (np.asarray(x_t) - math.sqrt(ab) * np.asarray(x0_guided)) / math.sqrt(1.0 - ab)


def ddpm_step(x_t, eps, t, z, sched):
    """One reverse step; the noise term is dropped at ``t = 1``."""
    i = sched.check_t(t)
    _same_shape(x_t, eps, "ddpm_step")
    a, ab = sched.alpha[i], sched.alpha_bar[i]
    mean = (np.asarray(x_t) - ((1.0 - a) / math.sqrt(1.0 - ab)) * np.asarray(eps)) / math.sqrt(a)
    if t == 1 or z is None:
        return mean
    _same_shape(x_t, z, "ddpm_step noise")
    return mean + sched.sigma[i] * np.asarray(z)


def rng(seed, t=0, purpose="misc"):
    """Counter-based generator keyed by ``(seed, purpose, t)``."""
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _PURPOSES[purpose], int(t)])
    return np.random.Generator(np.random.Philox(key))


def noise(seed, t, purpose, shape):
    return rng(seed, t, purpose).standard_normal(shape)
