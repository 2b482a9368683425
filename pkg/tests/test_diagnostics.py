import numpy as np
import pytest

from spde import diagnostics as dg
from spde import models as sm
from spde import solver as sv
from spde.errors import InadmissiblePError, InvalidDeltaError


def unit(n, k=0):
    e = np.zeros(n)
    e[k] = 1.0
    return e


def heat_ensemble(sigma=0.5, n=8, M=200, seed=3, t_end=1.0, dt=1e-3,
                  save_dt=1e-2, x0=None):
    m = sm.HeatOU(sigma=sigma)
    b = m.make_basis(n)
    x0 = unit(n) if x0 is None else x0
    return m, b, sv.solve_ensemble(m, b, x0, M=M, seed=seed, t_end=t_end,
                                   dt=dt, save_dt=save_dt, on_blowup="discard")


def test_moment_report_deterministic_contraction():
    # sigma = 0: sup_t ||X||_H^p is hit at t = 0 and equals ||x0||^p = 1
    m, b, ens = heat_ensemble(sigma=0.0, M=3)
    tab = dg.moment_report(ens, p=2, alpha=2)
    sup_row = tab.rows[0]
    assert sup_row[1] == 1.0 and sup_row[2] == 0.0
    assert tab.extra["n_blown"] == 0


def test_moment_report_requires_p_geq_2():
    m, b, ens = heat_ensemble(M=3)
    with pytest.raises(InadmissiblePError):
        dg.moment_report(ens, p=1.5, alpha=2)


def test_moment_report_part2_admissibility():
    m = sm.GradientNoiseHeat(nu=1.5)       # p_max = 1 + 2/2.25 < 2
    b = m.make_basis(8)
    ens = sv.solve_ensemble(m, b, unit(8), M=3, seed=1, t_end=0.1, dt=1e-3,
                            save_dt=1e-2)
    with pytest.raises(InadmissiblePError):
        dg.moment_report(ens, p=2, alpha=2)

    m1 = sm.GradientNoiseHeat(nu=1.0)      # p_max = 3
    b1 = m1.make_basis(8)
    ens1 = sv.solve_ensemble(m1, b1, unit(8), M=3, seed=1, t_end=0.1, dt=1e-3,
                             save_dt=1e-2)
    tab = dg.moment_report(ens1, p=2, alpha=2)
    assert np.isfinite(tab.rows[0][1])
    with pytest.raises(InadmissiblePError):
        dg.moment_report(ens1, p=3.0, alpha=2)   # boundary excluded


def test_moment_scaling_fit_then_check():
    # sub-homogeneity in the initial datum: the normalized moment
    # est / (1 + ||x||^p) fitted on the unscaled run bounds the 2x run up
    # to a factor-2 allowance (one amplitude cannot pin the universal
    # constant; unbounded growth in x would blow through any fixed factor)
    p = 2.0
    m, b, ens1 = heat_ensemble(M=400, seed=5)
    t1 = dg.moment_report(ens1, p=p, alpha=2)
    C = (t1.rows[0][1] + 3 * t1.rows[0][2]) / 2.0      # / (1 + ||x||^p)
    m2, b2, ens2 = heat_ensemble(M=400, seed=5, x0=2.0 * unit(8))
    t2 = dg.moment_report(ens2, p=p, alpha=2)
    assert t2.rows[0][1] <= 2.0 * C * (1.0 + 2.0 ** p) + 3 * t2.rows[0][2]


def test_equicontinuity_zero_for_constant_trajectory():
    # x0 = 0 with B(0) = 0 stays exactly at zero
    m = sm.PLaplacian(4, 1.0, 0.5)
    b = m.make_basis(8)
    ens = sv.solve_ensemble(m, b, np.zeros(8), M=3, seed=1, t_end=0.4,
                            dt=1e-3, save_dt=1e-2, stepper="explicit-tamed")
    tab = dg.equicontinuity_statistic(ens, [0.02, 0.04, 0.08], alpha=4)
    assert all(r[1] == 0.0 for r in tab.rows)


def test_equicontinuity_delta_validation():
    m, b, ens = heat_ensemble(M=3)
    with pytest.raises(InvalidDeltaError):
        dg.equicontinuity_statistic(ens, [0.015], alpha=2)
    with pytest.raises(InvalidDeltaError):
        dg.equicontinuity_statistic(ens, [5.0], alpha=2)   # longer than T


def test_equicontinuity_rate_and_monotonicity():
    m, b, ens = heat_ensemble(sigma=0.5, M=400, seed=11)
    deltas = [k * 1e-2 for k in (2, 4, 8, 16, 32)]
    tab = dg.equicontinuity_statistic(ens, deltas, alpha=2)
    slope, _, r2 = tab.fitted_rate
    assert slope >= 0.35 and r2 >= 0.9
    est = tab.estimates()
    se = tab.std_errors()
    assert np.all(est >= 0)
    # nondecreasing in delta within 2 SE
    assert np.all(np.diff(est) >= -2.0 * np.hypot(se[1:], se[:-1]))


def test_galerkin_convergence_invariant_subspace():
    # x0 in H_8 with noise confined to the first 8 modes: levels agree exactly
    m = sm.HeatOU(sigma=0.4)
    tab = dg.galerkin_convergence(m, unit(8), [8, 16, 32], M=4, seed=2,
                                  t_end=0.2, dt=1e-3, save_dt=1e-2, alpha=2,
                                  m_modes=8)
    assert all(r[1] == 0.0 for r in tab.rows)


def test_galerkin_convergence_heat_tail():
    # deterministic heat: the Cauchy error is the x0 tail energy, slope <= -2.5
    m = sm.HeatOU(sigma=0.0)
    x0 = 1.0 / (1.0 + np.arange(64.0)) ** 2
    tab = dg.galerkin_convergence(m, x0, [8, 16, 32, 64], M=1, seed=0,
                                  t_end=0.25, dt=1e-3, save_dt=1e-2, alpha=2)
    assert tab.fitted_rate[0] <= -2.5
    # oracle: per-mode scalar recursion of the implicit Euler scheme
    for (n_coarse, est, _, _) in tab.rows:
        n = int(n_coarse)
        ks = np.arange(n + 1, 2 * n + 1)
        lam = ks.astype(float) ** 2
        c0 = 1.0 / ks ** 2
        t_grid = np.arange(0, 26) * 1e-2
        decay = (1.0 + 1e-3 * lam[:, None]) ** (-(t_grid / 1e-3)[None, :])
        sq = np.sum((c0[:, None] * decay) ** 2, axis=0)
        oracle = np.trapezoid(sq, dx=1e-2)
        assert est == pytest.approx(oracle, rel=1e-8)


def test_initial_data_continuity_heat_exact():
    # additive noise: the difference solves the deterministic heat equation;
    # sup is attained at t = 0 where it equals eps ||d|| exactly
    m = sm.HeatOU(sigma=0.5)
    b = m.make_basis(8)
    eps = [0.1 / 2 ** j for j in range(5)]
    d = unit(8, 1)
    tab = dg.initial_data_continuity(m, b, unit(8), d, eps, p=2, M=8, seed=3,
                                     t_end=0.5, dt=1e-3, save_dt=1e-2)
    for (e, est, se, _) in tab.rows:
        assert est / (e ** 2 * 1.0) <= 1.0 + 1e-9
        assert est / (e ** 2 * 1.0) >= 0.9   # attained at t=0
        assert se <= 1e-12


def test_initial_data_continuity_zero_perturbation():
    m = sm.HeatOU(sigma=0.5)
    b = m.make_basis(4)
    tab = dg.initial_data_continuity(m, b, unit(4), unit(4, 1), [0.0], p=2,
                                     M=4, seed=3, t_end=0.1, dt=1e-3,
                                     save_dt=1e-2)
    assert tab.rows[0][1] == 0.0


def test_uniqueness_probe_identical_is_zero():
    m = sm.HeatOU(sigma=0.5)
    b = m.make_basis(6)
    tab = dg.uniqueness_probe(m, b, unit(6), M=6, seed=4,
                              dt_levels=[4e-3, 2e-3], t_end=0.4,
                              save_dt=2e-2, mode="identical")
    assert all(r[1] == 0.0 for r in tab.rows)


def test_uniqueness_probe_stepper_rate_deterministic():
    # explicit vs semi-implicit on the deterministic heat equation:
    # global O(dt) difference, slope 1 +- 0.15 on the unsquared scale
    m = sm.HeatOU(sigma=0.0)
    b = m.make_basis(6)
    tab = dg.uniqueness_probe(m, b, unit(6), M=1, seed=4,
                              dt_levels=[1e-2, 5e-3, 2.5e-3, 1.25e-3],
                              t_end=0.5, save_dt=5e-2, mode="stepper")
    dts = [r[0] for r in tab.rows]
    sups = np.sqrt([r[1] for r in tab.rows])
    slope, _, _ = dg.loglog_fit(dts, sups)
    assert abs(slope - 1.0) <= 0.15


def test_uniqueness_probe_dt_refinement_plaplacian():
    m = sm.PLaplacian(4, 1.0, 0.5)
    b = m.make_basis(16)
    tab = dg.uniqueness_probe(m, b, unit(16), M=64, seed=21,
                              dt_levels=[2e-3, 1e-3, 5e-4], t_end=0.2,
                              save_dt=2e-2, mode="dt-refinement",
                              stepper="explicit-tamed")
    assert tab.fitted_rate[0] >= 0.4


def test_tables_deterministic():
    m, b, e1 = heat_ensemble(M=50, seed=9)
    _, _, e2 = heat_ensemble(M=50, seed=9)
    t1 = dg.moment_report(e1, 2, 2)
    t2 = dg.moment_report(e2, 2, 2)
    assert t1.rows == t2.rows


def test_write_table(tmp_path):
    m, b, ens = heat_ensemble(M=10)
    tab = dg.moment_report(ens, 2, 2)
    csv = tmp_path / "moments.csv"
    js = tmp_path / "summary.json"
    dg.write_table(tab, csv, js, timestamp="2026-01-01T00:00:00")
    lines = csv.read_text().splitlines()
    assert lines[0] == "key,estimate,std_error,M"
    assert len(lines) == 3
    import json
    payload = json.loads(js.read_text())
    assert payload["experiment"] == "moments"
    assert "timestamp" in payload
