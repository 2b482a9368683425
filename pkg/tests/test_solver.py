import numpy as np
import pytest

from spde import basis as sb
from spde import diagnostics as dg
from spde import models as sm
from spde import noise as sn
from spde import solver as sv
from spde.errors import ConfigError, NonfiniteStateError, UnsupportedModelNormError


def unit(n, k=0):
    e = np.zeros(n)
    e[k] = 1.0
    return e


class ExplodingModel(sm.Model):
    """Quadratic anti-dissipative drift: doubles the exponent each step."""

    name = "exploding"
    basis_kind = "dirichlet-interval"
    v_norm_kind = "spectral"

    def __init__(self):
        super().__init__(sm.HypothesisSpec())

    def linear_diagonal(self, basis):
        return -basis.eigenvalues

    def apply_A(self, basis, t, coeffs):
        c = np.asarray(coeffs, float)
        return c * np.abs(c) * 1e3

    def apply_B_increment(self, basis, t, coeffs, dw):
        return np.zeros_like(np.asarray(coeffs, float))

    def b_hs_norm_sq(self, basis, t, coeffs):
        c = np.asarray(coeffs, float)
        return np.zeros(c.shape[:-1]) if c.ndim > 1 else 0.0

    b_hs_diff_sq = None


def test_tamed_step_zero_drift_zero_noise():
    m = sm.HeatOU(sigma=0.0)
    b = m.make_basis(4)
    s0 = sb.GalerkinState(np.zeros(4), time=0.25)
    s1 = sv.step_explicit_tamed(m, b, s0, 0.01, np.zeros(4))
    assert np.all(s1.coeffs == 0) and s1.time == pytest.approx(0.26)


def test_tamed_step_heat_recursion():
    m = sm.HeatOU(sigma=0.0)
    b = m.make_basis(4)
    dt, c1 = 0.01, 0.8
    out = sv.step_explicit_tamed(m, b, np.array([c1, 0, 0, 0]), dt, np.zeros(4))
    expect = c1 * (1.0 - dt / (1.0 + dt * abs(c1) * b.eigenvalues[0]))
    assert out[0] == pytest.approx(expect, rel=1e-14)


def test_taming_bound_any_drift_size():
    # dt ||a|| / (1 + dt ||a||) < 1; amplitude kept at 1e6 so the
    # out - c subtraction stays well below the bound's slack
    m = sm.HeatOU(sigma=0.0)
    b = m.make_basis(8)
    huge = 1e6 * sb.sample_coeffs(b, 4, seed=1)
    for c in huge:
        out = sv.step_explicit_tamed(m, b, c, 0.1, np.zeros(8))
        assert np.linalg.norm(out - c) <= 1.0 + 1e-7


def test_semi_implicit_heat_exact():
    m = sm.HeatOU(sigma=0.0)
    b = m.make_basis(4)
    dt = 0.05
    out = sv.step_semi_implicit(m, b, unit(4), dt, np.zeros(4))
    assert out[0] == pytest.approx(1.0 / (1.0 + dt), rel=1e-14)


def test_semi_implicit_cahn_hilliard_mode():
    m = sm.CahnHilliard(sigma=0.0, phi_cubic=0.0, phi_linear=0.0)
    b = m.make_basis(6)
    dt = 0.05
    out = sv.step_semi_implicit(m, b, unit(6, 1), dt, np.zeros(6))
    assert out[1] == pytest.approx(1.0 / (1.0 + dt), rel=1e-14)  # lambda_2 = 1


def test_semi_implicit_needs_linear_part():
    m = sm.PLaplacian(4, 1.0, 0.0)
    b = m.make_basis(4)
    with pytest.raises(UnsupportedModelNormError):
        sv.step_semi_implicit(m, b, unit(4), 0.01, np.zeros(4))


def test_stepper_consistency_order():
    # one-step difference between the two schemes is O(dt^2): shrinks ~4x
    # under dt halving once dt*lambda is small
    m = sm.HeatOU(sigma=0.0)
    b = m.make_basis(4)
    c = sb.sample_coeffs(b, 1, seed=4)[0] * 0.1
    diffs = []
    for dt in (2e-3, 1e-3, 5e-4):
        e = sv.step_explicit_tamed(m, b, c, dt, np.zeros(4))
        i = sv.step_semi_implicit(m, b, c, dt, np.zeros(4))
        diffs.append(np.linalg.norm(e - i))
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.1)
    assert diffs[1] / diffs[2] == pytest.approx(4.0, rel=0.1)


def test_heat_decay_oracle():
    # deterministic heat: |h_norm(1) - e^{-1}| <= 1e-3 at dt = 1e-3
    m = sm.HeatOU(sigma=0.0)
    b = m.make_basis(8)
    for stepper in sv.STEPPERS:
        path = sn.sample_path(8, 1000, 1e-3, seed=0)
        traj = sv.solve_path(m, b, unit(8), path, stepper, 1.0, 0.01)
        assert abs(traj.h_norms()[-1] - np.exp(-1.0)) <= 1e-3


def test_deterministic_convergence_order_both_steppers():
    m = sm.HeatOU(sigma=0.0)
    b = m.make_basis(4)
    for stepper in sv.STEPPERS:
        errs, dts = [], [4e-3, 2e-3, 1e-3, 5e-4]
        for dt in dts:
            path = sn.sample_path(4, int(round(1.0 / dt)), dt, seed=0)
            traj = sv.solve_path(m, b, unit(4), path, stepper, 1.0, 0.2)
            errs.append(abs(traj.h_norms()[-1] - np.exp(-1.0)))
        slope, _, _ = dg.loglog_fit(dts, errs)
        assert abs(slope - 1.0) <= 0.1


def test_zero_initial_zero_noise_fixed_point():
    # B(0) = 0 for the multiplicative zoo: zero stays exactly zero
    m = sm.PLaplacian(4, 1.0, 0.5)
    b = m.make_basis(8)
    path = sn.sample_path(8, 200, 1e-3, seed=9)
    traj = sv.solve_path(m, b, np.zeros(8), path, "explicit-tamed", 0.2, 0.02)
    assert np.all(traj.states == 0.0)


def test_solve_path_validations():
    m = sm.HeatOU(0.5)
    b = m.make_basis(4)
    path = sn.sample_path(4, 100, 1e-3, seed=1)
    with pytest.raises(ConfigError):
        sv.solve_path(m, b, unit(4), path, "semi-implicit", 1.0, 0.0033)
    with pytest.raises(ConfigError):
        sv.solve_path(m, b, unit(4), path, "semi-implicit", 1.0, 0.01)  # too short
    with pytest.raises(ConfigError):
        sv.solve_path(m, b, unit(4), sn.truncate(path, 2), "semi-implicit", 0.1, 0.01)
    with pytest.raises(ConfigError):
        sv.solve_path(m, b, unit(4), path, "no-such-stepper", 0.1, 0.01)


def test_initial_projection_pads_and_truncates():
    b = sm.HeatOU(0.0).make_basis(4)
    assert np.array_equal(sv.project_initial(b, [1, 2]), [1, 2, 0, 0])
    assert np.array_equal(sv.project_initial(b, np.arange(6.0)), [0, 1, 2, 3])


def test_ensemble_m1_equals_solve_path():
    m = sm.HeatOU(0.5)
    b = m.make_basis(4)
    ens = sv.solve_ensemble(m, b, unit(4), M=1, seed=3, t_end=0.5, dt=1e-3,
                            save_dt=0.05)
    path = sn.sample_path(4, 500, 1e-3, seed=3, path_id=0)
    traj = sv.solve_path(m, b, unit(4), path, "semi-implicit", 0.5, 0.05)
    assert np.array_equal(ens.trajectories[0].states, traj.states)


def test_ensemble_reproducible_and_thread_invariant():
    m = sm.ConvectionDiffusion(0.5)
    b = m.make_basis(8)
    kw = dict(t_end=0.2, dt=1e-3, save_dt=0.02)
    a = sv.solve_ensemble(m, b, unit(8), M=600, seed=5, **kw)
    bb = sv.solve_ensemble(m, b, unit(8), M=600, seed=5, **kw)
    cc = sv.solve_ensemble(m, b, unit(8), M=600, seed=5, threads=4, **kw)
    assert np.array_equal(a.stacked(), bb.stacked())
    assert np.array_equal(a.stacked(), cc.stacked())


def test_ensemble_mean_matches_ou_mean():
    m = sm.HeatOU(sigma=0.5)
    b = m.make_basis(4)
    M, t_end = 4000, 1.0
    ens = sv.solve_ensemble(m, b, unit(4), M=M, seed=11, t_end=t_end,
                            dt=1e-3, save_dt=1.0)
    term = np.stack([t.states[-1] for t in ens.trajectories])
    mean1 = term[:, 0].mean()
    se = term[:, 0].std(ddof=1) / np.sqrt(M)
    assert abs(mean1 - np.exp(-t_end)) <= 3 * se + 1e-3  # 1e-3 scheme bias


def test_ou_stationary_variance():
    m = sm.HeatOU(sigma=0.5)
    b = m.make_basis(4)
    M = 4000
    ens = sv.solve_ensemble(m, b, np.zeros(4), M=M, seed=2, t_end=6.0,
                            dt=1e-3, save_dt=6.0)
    term = np.stack([t.states[-1] for t in ens.trajectories])
    lam = b.eigenvalues
    sig_k = 0.5 / (1.0 + lam)
    exact = sig_k ** 2 / (2.0 * lam)
    var = term.var(axis=0, ddof=1)
    se = exact * np.sqrt(2.0 / M)         # chi-square SE of a variance
    assert np.all(np.abs(var - exact) <= 3 * se + 0.02 * exact)


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_blowup_raises_with_path_id():
    # semi-implicit leaves the quadratic drift explicit, so it overflows;
    # the tamed scheme caps drift increments at 1 and must NOT blow up
    m = ExplodingModel()
    b = m.make_basis(4)
    path = sn.sample_path(4, 1000, 0.05, seed=0, path_id=7)
    with pytest.raises(NonfiniteStateError) as ei:
        sv.solve_path(m, b, 10.0 * unit(4), path, "semi-implicit", 50.0, 0.05)
    assert ei.value.time is not None

    tamed = sv.solve_path(m, b, 10.0 * unit(4), path, "explicit-tamed", 50.0, 0.05)
    assert np.all(np.isfinite(tamed.states))

    ens = sv.solve_ensemble(m, b, 10.0 * unit(4), M=3, seed=0, t_end=50.0,
                            dt=0.05, save_dt=0.05, stepper="semi-implicit",
                            on_blowup="discard")
    assert ens.blown_count() == 3
    assert all(t.blew_up_at is not None for t in ens.trajectories)
    with pytest.raises(NonfiniteStateError) as ei:
        sv.solve_ensemble(m, b, 10.0 * unit(4), M=3, seed=0, t_end=50.0,
                          dt=0.05, save_dt=0.05, stepper="semi-implicit")
    assert ei.value.path_id == 0


def test_energy_identity_residual_rate():
    # discrete Ito balance: || Y_T ||^2 - || Y_0 ||^2 accumulates
    # 2<A,Y>dt + ||P B Q||^2 dt + 2(Y, B dW) up to O(dt^(1/2))
    m = sm.HeatOU(sigma=0.6)
    b = m.make_basis(6)
    n_paths, t_end = 48, 0.5
    dts = [4e-3, 2e-3, 1e-3, 5e-4]
    resid = []
    for dt in dts:
        steps = int(round(t_end / dt))
        acc = []
        for pid in range(n_paths):
            inc = sn.sample_path(6, steps, dt, seed=77, path_id=pid).increments
            c = unit(6) * 1.0
            total = 0.0
            for j in range(steps):
                a = m.apply_A(b, 0.0, c)
                binc = m.apply_B_increment(b, 0.0, c, inc[j])
                total += (2.0 * np.dot(a, c) + m.b_hs_norm_sq(b, 0.0, c)) * dt \
                    + 2.0 * np.dot(c, binc)
                c = (c + dt * (a + b.eigenvalues * c) + binc) / (1.0 + dt * b.eigenvalues)
            acc.append(abs(np.dot(c, c) - 1.0 - total))
        resid.append(np.mean(acc))
    slope, _, _ = dg.loglog_fit(dts, resid)
    assert slope >= 0.4


def test_trajectory_csv_rows():
    m = sm.HeatOU(0.0)
    b = m.make_basis(3)
    path = sn.sample_path(3, 10, 0.01, seed=1)
    traj = sv.solve_path(m, b, unit(3), path, "semi-implicit", 0.1, 0.05)
    rows = sv.trajectory_csv_rows(traj, m, b)
    assert rows[0] == ["t", "c_1", "c_2", "c_3", "h_norm", "v_norm"]
    assert len(rows) == 4      # header + 3 save times
    assert float(rows[1][1]) == 1.0
