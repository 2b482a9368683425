"""Desk-scale statistical experiments behind the qualitative theory.

Each experiment produces a DiagnosticTable: keyed Monte Carlo estimates
with standard errors and, where a rate is asserted, a log-log fit.
Exploded paths are discarded and counted rather than truncated by
stopping times; the count is itself part of the diagnostic.  sup over
[0, T] is read on the save grid, time integrals use the trapezoid rule
on the save grid.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import basis as sb
from . import noise as sn
from . import solver as sv
from .errors import InadmissiblePError, InvalidDeltaError, NonfiniteStateError

# sub-stream offsets so experiments sharing a seed stay decoupled
_PERTURB_STREAM = 7919


@dataclass
class DiagnosticTable:
    experiment: str
    rows: list                      # (key, estimate, std_error, M)
    fitted_rate: tuple = None       # (slope, intercept, r2)
    extra: dict = field(default_factory=dict)

    def estimates(self):
        return np.array([r[1] for r in self.rows])

    def std_errors(self):
        return np.array([r[2] for r in self.rows])

    def csv_rows(self):
        out = [["key", "estimate", "std_error", "M"]]
        for k, est, se, m in self.rows:
            out.append([repr(float(k)), repr(float(est)), repr(float(se)), str(int(m))])
        return out

    def summary_dict(self):
        d = {"experiment": self.experiment,
             "rows": [[float(k), float(e), float(s), int(m)] for k, e, s, m in self.rows]}
        if self.fitted_rate is not None:
            d["fitted_rate"] = {"slope": self.fitted_rate[0],
                                "intercept": self.fitted_rate[1],
                                "r2": self.fitted_rate[2]}
        d.update({k: v for k, v in self.extra.items()})
        return d


def loglog_fit(x, y):
    """Least-squares slope/intercept/r2 of log y against log x."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return (0.0, 0.0, 0.0)
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(res ** 2)) / ss_tot
    return (float(slope), float(intercept), float(r2))


def _mean_se(values):
    values = np.asarray(values, float)
    m = values.size
    est = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    return est, se, m


def _alive(ensemble):
    trajs = [t for t in ensemble.trajectories if t.blew_up_at is None]
    return trajs, ensemble.M - len(trajs)


def moment_report(ensemble, p, alpha, model=None, basis=None):
    """Monte Carlo moments E sup_t ||X||_H^p and E (int ||X||_V^alpha dt)^{p/2}."""
    model = model or ensemble.model
    basis = basis or ensemble.basis
    if p < 2:
        raise InadmissiblePError("moment exponent p must be >= 2")
    hyp = getattr(model, "hypothesis", None)
    if hyp is not None and hyp.part2:
        p_max = hyp.admissible_p_max(model.alpha)
        if not p < p_max:
            raise InadmissiblePError(
                f"p={p} outside admissible range [2, {p_max:.6g}) for {model.name}")
    trajs, n_blown = _alive(ensemble)
    save_dt = trajs[0].save_dt
    sup_p, vint_p = [], []
    for t in trajs:
        h = t.h_norms()
        sup_p.append(np.max(h) ** p)
        v = sb.v_norm(basis, model, t.states)
        vint_p.append(np.trapezoid(v ** alpha, dx=save_dt) ** (p / 2.0))
    rows = [(0.0, *_mean_se(sup_p)), (1.0, *_mean_se(vint_p))]
    return DiagnosticTable(
        experiment="moments", rows=rows,
        extra={"p": p, "alpha": alpha, "n_blown": n_blown,
               "row_keys": ["sup_h_pow_p", "v_int_pow_p_half"]})


def equicontinuity_statistic(ensemble, delta_list, alpha, model=None, basis=None):
    """Time-shift statistic E int_0^{T-delta} ||X(t+delta) - X(t)||_H^alpha dt."""
    trajs, n_blown = _alive(ensemble)
    save_dt = trajs[0].save_dt
    n_saves = trajs[0].times.size - 1
    shifts = []
    for d in delta_list:
        k = int(round(d / save_dt))
        if k < 1 or abs(d - k * save_dt) > 1e-9 * max(d, save_dt) or k > n_saves:
            raise InvalidDeltaError(f"delta {d} is not a usable multiple of save_dt")
        shifts.append(k)
    states = np.stack([t.states for t in trajs])     # (M, S+1, n)
    rows = []
    for d, k in zip(delta_list, shifts):
        diff = states[:, k:, :] - states[:, :-k or None, :]
        vals = np.sum(diff * diff, axis=-1) ** (alpha / 2.0)      # (M, S+1-k)
        integ = np.trapezoid(vals, dx=save_dt, axis=1)
        rows.append((float(d), *_mean_se(integ)))
    fit = loglog_fit([r[0] for r in rows], [r[1] for r in rows])
    return DiagnosticTable(experiment="equicontinuity", rows=rows, fitted_rate=fit,
                           extra={"alpha": alpha, "n_blown": n_blown})


def galerkin_convergence(model, x0, n_levels, M, seed, t_end, dt, save_dt=None,
                         alpha=None, stepper=None, grid_factor=4, m_modes=None):
    """Cauchy differences between adjacent Galerkin levels under common noise.

    One fine noise path per path_id carries the finest level's mode count
    (or m_modes, when the noise is deliberately confined to fewer
    directions); every level consumes its leading columns, so all levels
    see the same realization.  States are compared after zero-padding to
    the finer space; rows are keyed by the coarser dimension n and
    estimate E int_0^T ||X_n - X_2n||_H^alpha dt.
    """
    alpha = alpha if alpha is not None else model.alpha
    save_dt = save_dt if save_dt is not None else dt
    stepper = stepper or model.default_stepper
    levels = sorted(n_levels)
    bases = {n: model.make_basis(n, grid_factor * n) for n in levels}
    m_fine = m_modes if m_modes is not None else max(
        model.noise_modes(bases[n]) for n in levels)
    steps = sv._ratio_as_int(t_end, dt, "t_end/dt")
    save_every = sv._ratio_as_int(save_dt, dt, "save_dt/dt")
    x0 = np.asarray(x0, float)

    errs = {n: [] for n in levels[:-1]}
    for lo in range(0, M, sv.BLOCK):
        hi = min(lo + sv.BLOCK, M)
        inc = sn.sample_block(m_fine, steps, dt, seed, range(lo, hi))
        saved = {}
        for n in levels:
            b = bases[n]
            c0 = np.repeat(sv.project_initial(b, x0)[None, :], hi - lo, axis=0)
            states, blow = sv._advance_block(
                model, b, c0, inc, dt, stepper, save_every)
            if np.any(np.isfinite(blow)):
                raise NonfiniteStateError("blow-up in convergence study",
                                          time=float(np.nanmin(blow)))
            saved[n] = states
        for a, bn in zip(levels[:-1], levels[1:]):
            diff = saved[bn].copy()
            diff[:, :, :a] -= saved[a]
            vals = np.sum(diff * diff, axis=-1) ** (alpha / 2.0)
            errs[a].extend(np.trapezoid(vals, dx=save_dt, axis=1))

    rows = [(float(n), *_mean_se(errs[n])) for n in levels[:-1]]
    fit = loglog_fit([r[0] for r in rows], [r[1] for r in rows])
    return DiagnosticTable(experiment="converge", rows=rows, fitted_rate=fit,
                           extra={"alpha": alpha, "levels": list(map(int, levels))})


def initial_data_continuity(model, basis, x, direction, perturbation_sizes, p,
                            M, seed, t_end, dt, save_dt=None, stepper=None):
    """E sup_t ||X(t, x + eps d) - X(t, x)||_H^p against eps, common noise."""
    save_dt = save_dt if save_dt is not None else dt
    stepper = stepper or model.default_stepper
    steps = sv._ratio_as_int(t_end, dt, "t_end/dt")
    save_every = sv._ratio_as_int(save_dt, dt, "save_dt/dt")
    m = model.noise_modes(basis)
    d = sv.project_initial(basis, direction)
    x0 = sv.project_initial(basis, x)

    sups = {e: [] for e in perturbation_sizes}
    for lo in range(0, M, sv.BLOCK):
        hi = min(lo + sv.BLOCK, M)
        inc = sn.sample_block(m, steps, dt, seed, range(lo, hi))
        c0 = np.repeat(x0[None, :], hi - lo, axis=0)
        base, _ = sv._advance_block(model, basis, c0, inc, dt, stepper, save_every)
        for e in perturbation_sizes:
            c0e = np.repeat((x0 + e * d)[None, :], hi - lo, axis=0)
            pert, _ = sv._advance_block(model, basis, c0e, inc, dt, stepper, save_every)
            diff = pert - base
            sup = np.max(np.linalg.norm(diff, axis=-1), axis=1)
            sups[e].extend(sup ** p)

    rows = [(float(e), *_mean_se(sups[e])) for e in perturbation_sizes]
    fit = loglog_fit([r[0] for r in rows], [r[1] for r in rows])
    return DiagnosticTable(experiment="continuity", rows=rows, fitted_rate=fit,
                           extra={"p": p, "direction_norm": float(np.linalg.norm(d))})


def uniqueness_probe(model, basis, x0, M, seed, dt_levels, t_end, save_dt=None,
                     stepper=None, mode="dt-refinement"):
    """Common-noise discrepancy between two discretizations of one equation.

    mode "dt-refinement": at each dt in dt_levels, compare dt against dt/2
    (both driven by block sums of one fine path).
    mode "stepper": at each dt, compare explicit-tamed vs semi-implicit.
    mode "identical": same stepper, same dt, twice (difference must be 0).
    Rows keyed by dt estimate E sup_t ||difference||_H^2.
    """
    stepper = stepper or model.default_stepper
    dts = sorted(dt_levels, reverse=True)
    for d in dts:
        sv._ratio_as_int(t_end, d, "t_end/dt_level")
    fine_dt = dts[-1] / 2.0
    steps_fine = sv._ratio_as_int(t_end, fine_dt, "t_end/fine_dt")
    save_dt = save_dt if save_dt is not None else dts[0]
    m = model.noise_modes(basis)
    x0 = sv.project_initial(basis, x0)

    sups = {d: [] for d in dts}
    for lo in range(0, M, sv.BLOCK):
        hi = min(lo + sv.BLOCK, M)
        inc_fine = sn.sample_block(m, steps_fine, fine_dt, seed, range(lo, hi))
        c0 = np.repeat(x0[None, :], hi - lo, axis=0)
        for d in dts:
            f1 = int(round(d / fine_dt))
            inc1 = inc_fine.reshape(hi - lo, steps_fine // f1, f1, m).sum(axis=2)
            save_every1 = sv._ratio_as_int(save_dt, d, "save_dt/dt_level")
            if mode == "dt-refinement":
                f2 = f1 // 2
                inc2 = inc_fine.reshape(hi - lo, steps_fine // f2, f2, m).sum(axis=2)
                s1, _ = sv._advance_block(model, basis, c0, inc1, d, stepper, save_every1)
                s2, _ = sv._advance_block(model, basis, c0, inc2, d / 2.0,
                                          stepper, 2 * save_every1)
            elif mode == "stepper":
                s1, _ = sv._advance_block(model, basis, c0, inc1, d,
                                          "explicit-tamed", save_every1)
                s2, _ = sv._advance_block(model, basis, c0, inc1, d,
                                          "semi-implicit", save_every1)
            elif mode == "identical":
                s1, _ = sv._advance_block(model, basis, c0, inc1, d, stepper, save_every1)
                s2, _ = sv._advance_block(model, basis, c0, inc1, d, stepper, save_every1)
            else:
                raise InvalidDeltaError(f"unknown probe mode {mode!r}")
            diff = s1 - s2
            sup = np.max(np.sum(diff * diff, axis=-1), axis=1)
            sups[d].extend(sup)

    rows = [(float(d), *_mean_se(sups[d])) for d in dts]
    fit = loglog_fit([r[0] for r in rows], [r[1] for r in rows])
    return DiagnosticTable(experiment="uniqueness", rows=rows, fitted_rate=fit,
                           extra={"mode": mode})


def write_table(table, csv_path, json_path=None, timestamp=None):
    """One CSV per experiment plus a JSON summary with fitted rates."""
    rows = table.csv_rows()
    with open(csv_path, "w", newline="") as f:
        for r in rows:
            f.write(",".join(r) + "\n")
    if json_path is not None:
        d = table.summary_dict()
        if timestamp is not None:
            d["timestamp"] = timestamp
        with open(json_path, "w") as f:
            json.dump(d, f, indent=2, sort_keys=True)
            f.write("\n")
