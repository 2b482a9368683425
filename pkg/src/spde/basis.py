"""Concrete spectral realization of the triple V ⊆ H ⊆ V*.

H is L² on one of three 1D domains, represented in an orthonormal
eigenbasis of -d²/dx² (with the boundary condition selecting the basis),
together with a uniform collocation grid carrying trapezoid quadrature
weights.  All norms, pairings and the projection onto the first n modes
are evaluated either diagonally in coefficients or by quadrature on the
grid.

Coefficient arrays broadcast: every operation accepts shape (..., n) and
returns results with matching leading dimensions.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidDimensionError,
    UnsupportedModelNormError,
)

KINDS = ("dirichlet-interval", "neumann-interval", "periodic-torus")


@dataclass(frozen=True)
class SpectralBasis:
    """Eigenpairs plus collocation grid; immutable once built."""

    kind: str
    n_modes: int
    eigenvalues: np.ndarray      # (n,), nondecreasing
    nodes: np.ndarray            # (G,)
    weights: np.ndarray          # (G,) quadrature weights
    v_weight_exponent: float     # s in the spectral V-norm weights (1+lambda)^s
    fns: np.ndarray = field(repr=False, default=None)    # (n, G) e_k(x_j)
    dfns: np.ndarray = field(repr=False, default=None)   # (n, G) e_k'(x_j)

    @property
    def grid_size(self):
        return self.nodes.shape[0]


def _interval_grid(grid_size):
    # trapezoid rule on [0, pi]; exact for trig polynomials of degree < 2(G-1)
    nodes = np.linspace(0.0, np.pi, grid_size)
    h = np.pi / (grid_size - 1)
    weights = np.full(grid_size, h)
    weights[0] = weights[-1] = h / 2.0
    return nodes, weights


def _periodic_grid(grid_size):
    nodes = 2.0 * np.pi * np.arange(grid_size) / grid_size
    weights = np.full(grid_size, 2.0 * np.pi / grid_size)
    return nodes, weights


def build_basis(kind, n_modes, grid_size, v_weight_exponent=1.0):
    """Construct the basis for the given domain kind.

    Requires grid_size >= 4*n_modes, which both de-aliases cubic
    nonlinearities and keeps the quadrature of every basis-function
    product exact.
    """
    if kind not in KINDS:
        raise InvalidDimensionError(f"unknown basis kind {kind!r}")
    if n_modes < 1:
        raise InvalidDimensionError("n_modes must be >= 1")
    if grid_size < 4 * n_modes:
        raise InvalidDimensionError(
            f"grid_size {grid_size} < 4*n_modes = {4 * n_modes}")
    if v_weight_exponent < 0:
        raise InvalidDimensionError("v_weight_exponent must be >= 0")

    if kind == "dirichlet-interval":
        nodes, weights = _interval_grid(grid_size)
        k = np.arange(1, n_modes + 1)
        lam = k.astype(float) ** 2
        amp = np.sqrt(2.0 / np.pi)
        fns = amp * np.sin(np.outer(k, nodes))
        dfns = amp * k[:, None] * np.cos(np.outer(k, nodes))
    elif kind == "neumann-interval":
        nodes, weights = _interval_grid(grid_size)
        m = np.arange(n_modes)        # wavenumbers 0, 1, 2, ...
        lam = m.astype(float) ** 2
        fns = np.cos(np.outer(m, nodes)) * np.sqrt(2.0 / np.pi)
        fns[0] = 1.0 / np.sqrt(np.pi)
        dfns = -np.sqrt(2.0 / np.pi) * m[:, None] * np.sin(np.outer(m, nodes))
        dfns[0] = 0.0
    else:  # periodic-torus
        nodes, weights = _periodic_grid(grid_size)
        fns = np.empty((n_modes, grid_size))
        dfns = np.empty((n_modes, grid_size))
        lam = np.empty(n_modes)
        fns[0] = 1.0 / np.sqrt(2.0 * np.pi)
        dfns[0] = 0.0
        lam[0] = 0.0
        amp = 1.0 / np.sqrt(np.pi)
        for i in range(1, n_modes):
            m = (i + 1) // 2
            lam[i] = float(m * m)
            if i % 2 == 1:            # cos(mx), sin(mx) pairs
                fns[i] = amp * np.cos(m * nodes)
                dfns[i] = -amp * m * np.sin(m * nodes)
            else:
                fns[i] = amp * np.sin(m * nodes)
                dfns[i] = amp * m * np.cos(m * nodes)

    return SpectralBasis(kind=kind, n_modes=n_modes, eigenvalues=lam,
                         nodes=nodes, weights=weights,
                         v_weight_exponent=float(v_weight_exponent),
                         fns=fns, dfns=dfns)


@dataclass
class GalerkinState:
    """Coefficient vector in H_n at a model time (seconds)."""

    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if not np.all(np.isfinite(self.coeffs)):
            raise InvalidDimensionError("state coefficients must be finite")


def _coeffs_of(state):
    return state.coeffs if isinstance(state, GalerkinState) else np.asarray(state, float)


def synthesize(basis, state):
    """Evaluate the expansion on the collocation grid: (..., n) -> (..., G)."""
    c = _coeffs_of(state)
    if c.shape[-1] != basis.n_modes:
        raise DimensionMismatchError(
            f"expected {basis.n_modes} coefficients, got {c.shape[-1]}")
    return c @ basis.fns


def synthesize_derivative(basis, state):
    """Grid values of the exact spatial derivative of the expansion."""
    c = _coeffs_of(state)
    if c.shape[-1] != basis.n_modes:
        raise DimensionMismatchError(
            f"expected {basis.n_modes} coefficients, got {c.shape[-1]}")
    return c @ basis.dfns


def analyze(basis, grid_values):
    """Project grid values onto the first n modes by quadrature."""
    v = np.asarray(grid_values, float)
    if v.shape[-1] != basis.grid_size:
        raise DimensionMismatchError(
            f"expected {basis.grid_size} grid values, got {v.shape[-1]}")
    return (v * basis.weights) @ basis.fns.T


def quad(basis, grid_values):
    """Quadrature of grid values over the domain."""
    return np.asarray(grid_values, float) @ basis.weights


def h_norm(basis, state):
    """L² norm via Parseval: the Euclidean norm of the coefficients."""
    c = _coeffs_of(state)
    return np.linalg.norm(c, axis=-1)


def v_norm(basis, model, state):
    """Model-declared V-norm.

    Spectral models use diagonal weights (1+lambda_k)^s; gradient-seminorm
    models (the p-Laplacian class) use the L^alpha norm of the derivative,
    which is equivalent to the full W^{1,alpha} norm on these bounded
    domains.
    """
    c = _coeffs_of(state)
    kind = getattr(model, "v_norm_kind", None)
    if kind == "spectral":
        w = (1.0 + basis.eigenvalues) ** basis.v_weight_exponent
        return np.sqrt(np.sum(w * c * c, axis=-1))
    if kind == "gradient-seminorm":
        du = c @ basis.dfns
        a = model.alpha
        return (np.abs(du) ** a @ basis.weights) ** (1.0 / a)
    raise UnsupportedModelNormError(
        f"model {getattr(model, 'name', model)!r} declares no V-norm kind")


def dual_pairing(basis, dual_coeffs, state):
    """<F, v> from dual coefficients <F, e_k>; extends the H inner product."""
    f = np.asarray(dual_coeffs, float)
    c = _coeffs_of(state)
    if f.shape[-1] != basis.n_modes or c.shape[-1] != basis.n_modes:
        raise DimensionMismatchError("dual/state coefficient length mismatch")
    return np.sum(f * c, axis=-1)


def sample_coeffs(basis, n_samples, seed, scales=(0.1, 1.0, 10.0, 100.0),
                  smoothness=(0.6, 1.1, 2.1)):
    """Multi-scale random states for audits and probes.

    Gaussian coefficients with spectral decay (1+lambda_k)^(-r/2), cycling
    r over `smoothness` and the overall amplitude over four decades, so
    both high-frequency and large-amplitude regimes are probed.
    """
    rng = np.random.default_rng(np.random.Philox(key=seed))
    n = basis.n_modes
    r = np.asarray(smoothness)[np.arange(n_samples) % len(smoothness)]
    sd = (1.0 + basis.eigenvalues)[None, :] ** (-r[:, None] / 2.0)
    c = rng.standard_normal((n_samples, n)) * sd
    amp = np.asarray(scales)[(np.arange(n_samples) // len(smoothness)) % len(scales)]
    return c * amp[:, None]


def dual_norm_estimate(basis, model, dual_coeffs, n_probe=128, seed=0):
    """Dual norm of F given by its coefficients <F, e_k>.

    For spectral-diagonal V-norms this is the exact value
    (sum (1+lambda)^(-s) f_k^2)^(1/2).  Otherwise it is the maximum of
    <F, v> over n_probe random unit-V-norm states: a certified lower
    bound, which keeps growth audits conservative.
    """
    if n_probe < 32:
        raise InvalidDimensionError("n_probe must be >= 32")
    f = np.asarray(dual_coeffs, float)
    if f.shape[-1] != basis.n_modes:
        raise DimensionMismatchError("dual coefficient length mismatch")
    if getattr(model, "v_norm_kind", None) == "spectral":
        w = (1.0 + basis.eigenvalues) ** (-basis.v_weight_exponent)
        return np.sqrt(np.sum(w * f * f, axis=-1))
    probes = sample_coeffs(basis, n_probe, seed)
    vn = v_norm(basis, model, probes)
    keep = vn > 0
    probes = probes[keep] / vn[keep][:, None]
    vals = np.abs(f @ probes.T)          # (..., n_probe)
    return np.max(vals, axis=-1)


def fit_embedding_constant(basis, model, n_samples=512, seed=1):
    """Largest observed ratio ||u||_H / ||u||_V over random states."""
    c = sample_coeffs(basis, n_samples, seed)
    h = h_norm(basis, c)
    v = v_norm(basis, model, c)
    keep = v > 0
    return float(np.max(h[keep] / v[keep]))
