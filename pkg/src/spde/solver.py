"""Time integration of the Galerkin SDE in coefficient coordinates.

Two one-step maps: an explicit Euler scheme with drift taming (the
increment dt*a is divided by 1 + dt*||a||, which caps a single drift
update at norm 1 and keeps moments of superlinear models bounded), and
a semi-implicit scheme that treats the model's diagonal linear part
implicitly (unconditionally stable for spectra up to k^4).

The core loop is batched over paths: a whole ensemble advances as one
(M, n) array per step.  Ensembles are processed in fixed-size blocks so
memory stays bounded and the arithmetic per path never depends on the
number of worker threads.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import basis as sb
from . import noise as sn
from .errors import ConfigError, NonfiniteStateError, UnsupportedModelNormError

BLOCK = 256      # paths per batch; fixed so results never depend on threading

STEPPERS = ("explicit-tamed", "semi-implicit")


def worker_count(threads=None):
    """Resolve the worker count: explicit arg, else SPDE_THREADS (0 = auto)."""
    if threads is None:
        env = os.environ.get("SPDE_THREADS", "")
        threads = int(env) if env.strip() else 1
    if threads == 0:
        threads = os.cpu_count() or 1
    return max(1, threads)


def _ratio_as_int(num, den, what):
    r = num / den
    k = int(round(r))
    if k < 1 or abs(r - k) > 1e-9 * max(1.0, abs(r)):
        raise ConfigError(f"{what}: {num} / {den} is not a positive integer")
    return k


def _tamed_increment(model, basis, c, t, dt):
    a = model.apply_A(basis, t, c)
    tame = 1.0 + dt * np.linalg.norm(a, axis=-1, keepdims=True)
    return dt * a / tame


def step_explicit_tamed(model, basis, state, dt, noise_row):
    """One tamed Euler step; accepts a GalerkinState or a coefficient array."""
    wrap = isinstance(state, sb.GalerkinState)
    c = state.coeffs if wrap else np.asarray(state, float)
    t = state.time if wrap else 0.0
    out = c + _tamed_increment(model, basis, c, t, dt) \
        + model.apply_B_increment(basis, t, c, np.asarray(noise_row))
    if not np.all(np.isfinite(out)):
        raise NonfiniteStateError("explicit-tamed step produced non-finite state",
                                  time=t + dt)
    return sb.GalerkinState(out, t + dt) if wrap else out


def step_semi_implicit(model, basis, state, dt, noise_row):
    """One semi-implicit step: the model's diagonal linear part L is
    treated implicitly, the remaining drift and the noise explicitly."""
    L = model.linear_diagonal(basis)
    if L is None:
        raise UnsupportedModelNormError(
            f"{model.name} declares no diagonal linear part")
    wrap = isinstance(state, sb.GalerkinState)
    c = state.coeffs if wrap else np.asarray(state, float)
    t = state.time if wrap else 0.0
    a = model.apply_A(basis, t, c)
    out = (c + dt * (a - L * c)
           + model.apply_B_increment(basis, t, c, np.asarray(noise_row))) / (1.0 - dt * L)
    if not np.all(np.isfinite(out)):
        raise NonfiniteStateError("semi-implicit step produced non-finite state",
                                  time=t + dt)
    return sb.GalerkinState(out, t + dt) if wrap else out


@dataclass
class Trajectory:
    """States at the save grid (times[0] = 0 carries the initial value)."""

    times: np.ndarray          # (S+1,)
    states: np.ndarray         # (S+1, n)
    model_name: str
    n_modes: int
    stepper: str
    save_dt: float
    seed: int = 0
    path_id: int = 0
    m_modes: int = 0
    blew_up_at: float = None   # set only when on_blowup="discard"

    def state(self, i):
        return sb.GalerkinState(self.states[i], float(self.times[i]))

    def h_norms(self):
        return np.linalg.norm(self.states, axis=-1)


@dataclass
class TrajectoryEnsemble:
    trajectories: list
    model: object = None
    basis: object = None

    @property
    def M(self):
        return len(self.trajectories)

    @property
    def times(self):
        return self.trajectories[0].times

    def stacked(self):
        """(M, S+1, n) coefficient array over surviving paths."""
        return np.stack([t.states for t in self.trajectories])

    def blown_count(self):
        return sum(1 for t in self.trajectories if t.blew_up_at is not None)


def fit_noise_columns(increments, needed):
    """Match the mode-column count a model consumes: slice extra columns
    away, zero-pad missing ones (a projection Q_m with m below the
    Galerkin dimension)."""
    m = increments.shape[-1]
    if m == needed:
        return increments
    if m > needed:
        return increments[..., :needed]
    pad = np.zeros(increments.shape[:-1] + (needed - m,))
    return np.concatenate([increments, pad], axis=-1)


def _advance_block(model, basis, c, increments, dt, stepper, save_every, t0=0.0):
    """Advance a (M, n) block through increments (M, steps, m); returns
    saved states (M, S+1, n) and per-path blow-up times (nan = fine)."""
    increments = fit_noise_columns(increments, model.noise_modes(basis))
    M, steps, _ = increments.shape
    n_saves = steps // save_every
    out = np.empty((M, n_saves + 1, c.shape[-1]))
    out[:, 0] = c
    blow_t = np.full(M, np.nan)
    alive = np.ones(M, bool)
    implicit = stepper == "semi-implicit"
    if implicit:
        L = model.linear_diagonal(basis)
        if L is None:
            raise UnsupportedModelNormError(
                f"{model.name} declares no diagonal linear part")
    t = t0
    for j in range(steps):
        a = model.apply_A(basis, t, c)
        binc = model.apply_B_increment(basis, t, c, increments[:, j])
        if implicit:
            c = (c + dt * (a - L * c) + binc) / (1.0 - dt * L)
        else:
            tame = 1.0 + dt * np.linalg.norm(a, axis=-1, keepdims=True)
            c = c + dt * a / tame + binc
        t = t0 + (j + 1) * dt
        bad = ~np.all(np.isfinite(c), axis=-1)
        newly = bad & alive
        if np.any(newly):
            blow_t[newly] = t
            alive &= ~newly
            c = np.where(alive[:, None], c, 0.0)   # freeze dead rows
        if (j + 1) % save_every == 0:
            out[:, (j + 1) // save_every] = np.where(alive[:, None], c, np.nan)
    return out, blow_t


def solve_path(model, basis, x0, noise_path, stepper=None, t_end=None, save_dt=None):
    """Integrate one path driven by the given NoisePath.

    The initial value is projected onto the basis (coefficients padded or
    truncated to n_modes).  noise_path.dt_fine is the solver step; it must
    divide save_dt, which must divide t_end.
    """
    stepper = stepper or model.default_stepper
    if stepper not in STEPPERS:
        raise ConfigError(f"unknown stepper {stepper!r}")
    if t_end is None:
        t_end = noise_path.t_end
    if save_dt is None:
        save_dt = noise_path.dt_fine
    dt = noise_path.dt_fine
    save_every = _ratio_as_int(save_dt, dt, "save_dt/dt")
    n_saves = _ratio_as_int(t_end, save_dt, "t_end/save_dt")
    steps = save_every * n_saves
    if noise_path.n_steps < steps:
        raise ConfigError(
            f"noise path has {noise_path.n_steps} steps, need {steps}")
    m_need = model.noise_modes(basis)
    if noise_path.m_modes < m_need:
        raise ConfigError(
            f"noise path carries {noise_path.m_modes} modes, model uses {m_need}")
    c0 = project_initial(basis, x0)
    states, blow_t = _advance_block(
        model, basis, c0[None, :], noise_path.increments[None, :steps, :],
        dt, stepper, save_every)
    if np.isfinite(blow_t[0]):
        raise NonfiniteStateError(
            f"path {noise_path.path_id} blew up at t={blow_t[0]:.6g}",
            time=float(blow_t[0]), path_id=noise_path.path_id)
    times = save_dt * np.arange(n_saves + 1)
    return Trajectory(times=times, states=states[0], model_name=model.name,
                      n_modes=basis.n_modes, stepper=stepper, save_dt=save_dt,
                      seed=noise_path.seed, path_id=noise_path.path_id,
                      m_modes=noise_path.m_modes)


def project_initial(basis, x0):
    """Realize P_n x: pad or truncate a coefficient vector to n_modes."""
    if isinstance(x0, sb.GalerkinState):
        x0 = x0.coeffs
    x0 = np.asarray(x0, float).ravel()
    n = basis.n_modes
    if x0.size >= n:
        return x0[:n].copy()
    out = np.zeros(n)
    out[:x0.size] = x0
    return out


def solve_ensemble(model, basis, x0, M, seed, stepper=None, t_end=1.0, dt=1e-3,
                   save_dt=None, m_modes=None, on_blowup="raise", threads=None):
    """M independent paths, path_id = 0..M-1, reproducible and
    order-independent.  on_blowup: "raise" propagates the first non-finite
    path (with its path_id); "discard" records the blow-up time and keeps
    going, leaving NaNs past the blow-up."""
    if M < 1:
        raise ConfigError("M must be >= 1")
    stepper = stepper or model.default_stepper
    if stepper not in STEPPERS:
        raise ConfigError(f"unknown stepper {stepper!r}")
    save_dt = save_dt if save_dt is not None else dt
    save_every = _ratio_as_int(save_dt, dt, "save_dt/dt")
    n_saves = _ratio_as_int(t_end, save_dt, "t_end/save_dt")
    steps = save_every * n_saves
    m = m_modes if m_modes is not None else model.noise_modes(basis)
    c0 = project_initial(basis, x0)
    times = save_dt * np.arange(n_saves + 1)

    all_states = np.empty((M, n_saves + 1, basis.n_modes))
    all_blow = np.full(M, np.nan)

    def do_block(lo, hi):
        inc = sn.sample_block(m, steps, dt, seed, range(lo, hi))
        c = np.repeat(c0[None, :], hi - lo, axis=0)
        states, blow_t = _advance_block(model, basis, c, inc, dt, stepper, save_every)
        all_states[lo:hi] = states
        all_blow[lo:hi] = blow_t

    spans = [(lo, min(lo + BLOCK, M)) for lo in range(0, M, BLOCK)]
    nw = worker_count(threads)
    if nw > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            list(ex.map(lambda s: do_block(*s), spans))
    else:
        for s in spans:
            do_block(*s)

    if on_blowup == "raise":
        bad = np.flatnonzero(np.isfinite(all_blow))
        if bad.size:
            pid = int(bad[0])
            raise NonfiniteStateError(
                f"path {pid} blew up at t={all_blow[pid]:.6g}",
                time=float(all_blow[pid]), path_id=pid)

    trajs = [Trajectory(times=times, states=all_states[i], model_name=model.name,
                        n_modes=basis.n_modes, stepper=stepper, save_dt=save_dt,
                        seed=seed, path_id=i, m_modes=m,
                        blew_up_at=None if np.isnan(all_blow[i]) else float(all_blow[i]))
             for i in range(M)]
    return TrajectoryEnsemble(trajectories=trajs, model=model, basis=basis)


def solve_coupled(model, basis, x0, noise_paths, stepper=None, t_end=None,
                  save_dt=None):
    """Solve a list of explicitly provided NoisePaths (common-noise
    experiments build these by truncate/coarsen from shared fine paths)."""
    trajs = [solve_path(model, basis, x0, p, stepper, t_end, save_dt)
             for p in noise_paths]
    return TrajectoryEnsemble(trajectories=trajs, model=model, basis=basis)


def trajectory_csv_rows(traj, model, basis):
    """CSV export: t, c_1..c_n, h_norm, v_norm."""
    header = ["t"] + [f"c_{k+1}" for k in range(basis.n_modes)] + ["h_norm", "v_norm"]
    rows = [header]
    h = traj.h_norms()
    v = sb.v_norm(basis, model, traj.states)
    for i, t in enumerate(traj.times):
        rows.append([repr(float(t))] + [repr(float(x)) for x in traj.states[i]]
                    + [repr(float(h[i])), repr(float(v[i]))])
    return rows
