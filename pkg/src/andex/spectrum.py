"""Discrete Schrödinger operators on boxes: solvers and approximation checks.

The operator is H = Delta + V on a centered box with Dirichlet boundary
conditions (functions are extended by zero outside the box before the
stencil is applied).  Eigenvalues are kept in non-increasing order
lambda_1 >= lambda_2 >= ...

Two solvers: a matrix-free Lanczos iteration with full reorthogonalization
for the top of the spectrum, and a dense symmetric eigendecomposition used
as the ground-truth oracle on small boxes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.sparse import identity as sparse_identity
from scipy.sparse import diags, kron

from . import covariance as cov
from .errors import SolverConvergenceError

__all__ = [
    "SpectralResult",
    "BarSolution",
    "apply_hamiltonian",
    "dense_eigs",
    "top_k_eigs",
    "solve_bar_problem",
    "bar_lambda_expansion",
    "quadratic_form",
    "form_gradient",
    "decay_check",
    "approximation_error",
    "spectral_gap_check",
]

DENSE_SITE_LIMIT = 4000
TIE_TOL = 1e-12


def apply_hamiltonian(V: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """(Delta psi)(x) + V(x) psi(x), psi extended by zero outside the box."""
    if V.shape != psi.shape:
        raise ValueError(f"shape mismatch: {V.shape} vs {psi.shape}")
    d = psi.ndim
    out = (V - 2.0 * d) * psi
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] += psi[tuple(hi)]
        out[tuple(hi)] += psi[tuple(lo)]
    return out


def _center_of(phi: np.ndarray) -> tuple:
    """Argmax of |phi| with lexicographic tie-break (C-order argmax)."""
    flat = np.abs(phi).ravel(order="C")
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(flat)), phi.shape))


def _index_to_coord(idx: tuple, half: int) -> tuple:
    return tuple(int(i) - half for i in idx)


@dataclass(frozen=True)
class SpectralResult:
    """Top eigenpairs of one operator, eigenvalues non-increasing."""

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # shape (k,) + grid shape
    centers: tuple  # grid-index tuples of argmax |phi|
    residuals: np.ndarray
    half: int  # box half-width, for coordinate conversion

    def __post_init__(self):
        lam = self.eigenvalues
        if np.any(np.diff(lam) > TIE_TOL):
            raise ValueError("eigenvalues not in non-increasing order")
        norms = np.sqrt(np.sum(self.eigenfunctions**2, axis=tuple(range(1, self.eigenfunctions.ndim))))
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("eigenfunctions not l2-normalized")

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def gap(self) -> float:
        if self.k < 2:
            raise ValueError("gap needs at least two eigenvalues")
        return float(self.eigenvalues[0] - self.eigenvalues[1])

    def center_coords(self, i: int = 0) -> tuple:
        return _index_to_coord(self.centers[i], self.half)

    def tied_blocks(self, tol: float = TIE_TOL):
        """Partition 0..k-1 into maximal blocks of eigenvalues within tol."""
        blocks, start = [], 0
        for i in range(1, self.k + 1):
            if i == self.k or self.eigenvalues[i - 1] - self.eigenvalues[i] > tol:
                blocks.append(list(range(start, i)))
                start = i
        return blocks

    def to_json(self) -> str:
        return json.dumps(
            {
                "eigenvalues": self.eigenvalues.tolist(),
                "centers": [self.center_coords(i) for i in range(self.k)],
                "residuals": self.residuals.tolist(),
                "gap": self.gap if self.k >= 2 else None,
            }
        )


def _finalize(lams, phis, V) -> SpectralResult:
    """Order, sign-fix and package eigenpairs; compute true residuals."""
    order = np.argsort(-lams, kind="stable")
    lams = np.asarray(lams, dtype=float)[order]
    phis = [np.ascontiguousarray(phis[i]) for i in order]
    centers, residuals, fixed = [], [], []
    for lam, phi in zip(lams, phis):
        phi = phi / math.sqrt(float(np.sum(phi**2)))
        c = _center_of(phi)
        if phi[c] < 0:
            phi = -phi
        r = apply_hamiltonian(V, phi) - lam * phi
        centers.append(c)
        residuals.append(math.sqrt(float(np.sum(r**2))))
        fixed.append(phi)
    return SpectralResult(
        eigenvalues=lams,
        eigenfunctions=np.stack(fixed),
        centers=tuple(centers),
        residuals=np.asarray(residuals),
        half=V.shape[0] // 2,
    )


def _assemble_dense(V: np.ndarray) -> np.ndarray:
    d = V.ndim
    n_axis = V.shape[0]
    lap1 = diags(
        [np.ones(n_axis - 1), -2.0 * np.ones(n_axis), np.ones(n_axis - 1)],
        offsets=[-1, 0, 1],
    )
    H = None
    for axis in range(d):
        term = None
        for j in range(d):
            fac = lap1 if j == axis else sparse_identity(V.shape[j])
            term = fac if term is None else kron(term, fac)
        H = term if H is None else H + term
    H = H.toarray() + np.diag(V.ravel(order="C"))
    return H


def dense_eigs(V: np.ndarray, k: int | None = None) -> SpectralResult:
    """Full symmetric eigendecomposition (oracle path, small boxes only)."""
    n = V.size
    if n > DENSE_SITE_LIMIT:
        raise ValueError(f"dense solver limited to {DENSE_SITE_LIMIT} sites")
    H = _assemble_dense(V)
    assert np.array_equal(H, H.T)
    w, U = np.linalg.eigh(H)
    k = n if k is None else min(k, n)
    sel = np.argsort(-w)[:k]
    lams = w[sel]
    phis = [U[:, i].reshape(V.shape) for i in sel]
    return _finalize(lams, phis, V)


def top_k_eigs(
    V: np.ndarray,
    k: int,
    tol: float = 1e-10,
    max_iter: int | None = None,
    start_seed: int = 12345,
) -> SpectralResult:
    """Top-k eigenpairs via Lanczos with full reorthogonalization.

    Matrix-free: only apply_hamiltonian is used.  Each returned pair
    satisfies ||H phi - lambda phi||_2 <= tol.  Deterministic (fixed
    internal start vector seed).
    """
    n = V.size
    if k > 32:
        raise ValueError("k limited to 32")
    if k > n:
        raise ValueError(f"k={k} exceeds {n} sites")
    if tol < 1e-13:
        raise ValueError("tol below achievable double precision")
    if n <= max(3 * k, 32):
        return dense_eigs(V, k)
    if max_iter is None:
        max_iter = min(n, max(20 * k + 100, 300))

    rng = np.random.default_rng(start_seed)
    shape = V.shape
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    Q = np.empty((max_iter, n))
    alphas: list[float] = []
    betas: list[float] = []
    Q[0] = q
    m = 0
    check_every = 5
    while m < max_iter:
        w = apply_hamiltonian(V, Q[m].reshape(shape)).ravel()
        alpha = float(Q[m] @ w)
        alphas.append(alpha)
        w -= alpha * Q[m]
        if m > 0:
            w -= betas[-1] * Q[m - 1]
        # full reorthogonalization, twice for safety
        for _ in range(2):
            w -= Q[: m + 1].T @ (Q[: m + 1] @ w)
        beta = float(np.linalg.norm(w))
        m += 1
        converged = False
        if m >= k and (m % check_every == 0 or beta < 1e-14 or m == max_iter):
            ritz, S = eigh_tridiagonal(
                np.asarray(alphas), np.asarray(betas[: m - 1])
            )
            top = np.argsort(-ritz)[:k]
            est = np.abs(beta * S[m - 1, top])
            converged = bool(np.all(est <= 0.5 * tol)) or beta < 1e-14
        if converged or m == max_iter:
            ritz, S = eigh_tridiagonal(
                np.asarray(alphas), np.asarray(betas[: m - 1])
            )
            top = np.argsort(-ritz)[:k]
            lams = ritz[top]
            phis = [(Q[:m].T @ S[:, i]).reshape(shape) for i in top]
            result = _finalize(lams, phis, V)
            if np.all(result.residuals <= tol):
                return result
            if m == max_iter:
                raise SolverConvergenceError(
                    f"Lanczos residuals {result.residuals} exceed tol={tol} "
                    f"after {m} iterations"
                )
        if m < max_iter:
            if beta < 1e-14:
                # invariant subspace hit: restart orthogonal to current basis
                w = rng.standard_normal(n)
                w -= Q[:m].T @ (Q[:m] @ w)
                beta = float(np.linalg.norm(w))
                if beta < 1e-14:
                    # full space exhausted
                    max_iter = m
                    continue
            betas.append(beta)
            Q[m] = w / beta
    raise SolverConvergenceError("Lanczos failed to converge")


@dataclass(frozen=True)
class BarSolution:
    """Top eigenpair of the deterministic dip operator Delta - S on Q_r."""

    bar_lambda: float
    bar_phi: np.ndarray
    r_L: int
    shape_used: np.ndarray
    expansion_value: float

    def __post_init__(self):
        c = tuple(s // 2 for s in self.bar_phi.shape)
        if self.bar_phi[c] <= 0:
            raise ValueError("bar_phi must be positive at the origin")


def bar_lambda_expansion(model: cov.CovarianceModel, a_L: float, d: int) -> float:
    """First-order expansion -2d + sum over unit vectors of 1/S(x)."""
    total = -2.0 * d
    for axis in range(d):
        e = np.zeros(d, dtype=int)
        e[axis] = 1
        for sign in (1, -1):
            s = cov.shape(model, a_L, sign * e)
            if s <= 0.0:
                raise ValueError(
                    "shape vanishes at a unit vector; expansion undefined"
                )
            total += 1.0 / s
    return total


def solve_bar_problem(
    model: cov.CovarianceModel, a_L: float, r_L: int
) -> BarSolution:
    """Solve the deterministic problem Delta - S on Q_{r_L}, Dirichlet."""
    if r_L < 3 or r_L % 2 == 0:
        raise ValueError(f"r_L must be odd and >= 3, got {r_L}")
    half = r_L // 2
    S = cov.shape_grid(model, a_L, half)
    V = -S
    if V.size <= DENSE_SITE_LIMIT:
        res = dense_eigs(V, 1)
    else:
        res = top_k_eigs(V, 1, tol=1e-12)
    if res.residuals[0] > 1e-12 * max(1.0, abs(res.eigenvalues[0])):
        raise SolverConvergenceError(
            f"bar problem residual {res.residuals[0]:.3e} too large"
        )
    phi = res.eigenfunctions[0]
    c = tuple(s // 2 for s in phi.shape)
    if phi[c] < 0:
        phi = -phi
    try:
        expansion = bar_lambda_expansion(model, a_L, model.d)
    except ValueError:
        expansion = math.nan
    return BarSolution(
        bar_lambda=float(res.eigenvalues[0]),
        bar_phi=phi,
        r_L=r_L,
        shape_used=S,
        expansion_value=expansion,
    )


def quadratic_form(V: np.ndarray, psi: np.ndarray) -> float:
    """<psi, (Delta + V) psi> for l2-normalized psi."""
    if abs(float(np.sum(psi**2)) - 1.0) > 1e-8:
        raise ValueError("psi must be l2-normalized")
    return float(np.sum(psi * apply_hamiltonian(V, psi)))


def form_gradient(V: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Gradient of the quadratic form in the sphere chart around the origin.

    The form is viewed as a function of the off-origin values of psi, with
    the origin value eliminated through the normalization constraint
    psi(0) = sqrt(1 - sum_{x != 0} psi(x)^2) > 0.  Then

        d form / d psi(x) = 2 [ (H psi)(x) - (H psi)(0) psi(x) / psi(0) ],

    which vanishes exactly at eigenfunctions.  The origin component of the
    returned grid is set to zero (it is not a free coordinate).
    """
    c = tuple(s // 2 for s in psi.shape)
    off_mass = float(np.sum(psi**2)) - float(psi[c] ** 2)
    if 1.0 - off_mass <= 0.0:
        raise ValueError("normalization leaves no positive mass at the origin")
    if psi[c] <= 0.0:
        raise ValueError("psi must be positive at the origin in this chart")
    hpsi = apply_hamiltonian(V, psi)
    grad = 2.0 * (hpsi - (hpsi[c] / psi[c]) * psi)
    grad[c] = 0.0
    return grad


@dataclass(frozen=True)
class DecayReport:
    holds: bool
    max_ratio: float  # largest phi(x)^2 * (1 + c*rate)^{2|x-center|}
    fitted_c: float  # largest c for which the bound holds on this data


def decay_check(
    phi: np.ndarray, center: tuple, rate: float, c: float = 0.5
) -> DecayReport:
    """Check exponential decay phi(x)^2 <= (1 + c*rate)^{-2|x - center|}.

    center is a grid-index tuple; rate plays the role of a_L/d_L.
    Diagnostic only: returns the worst ratio and the best constant that
    would make the bound hold, never raises.
    """
    d = phi.ndim
    idx = np.indices(phi.shape)
    dist = np.zeros(phi.shape)
    for axis in range(d):
        dist += np.abs(idx[axis] - center[axis])
    mask = dist > 0
    ratios = phi[mask] ** 2 * (1.0 + c * rate) ** (2.0 * dist[mask])
    max_ratio = float(np.max(ratios)) if ratios.size else 0.0
    # best constant: phi^2 <= (1+c'r)^{-2 dist}  <=>  c' <= ((phi^2)^{-1/(2 dist)} - 1)/r
    pos = mask & (phi**2 > 0)
    if pos.any() and rate > 0:
        cands = ((phi[pos] ** 2) ** (-0.5 / dist[pos]) - 1.0) / rate
        fitted = float(np.min(cands))
    else:
        fitted = math.inf
    return DecayReport(holds=bool(max_ratio <= 1.0), max_ratio=max_ratio, fitted_c=fitted)


def _embed_profile(bar_phi: np.ndarray, target_shape: tuple, x0_idx: tuple) -> np.ndarray:
    """Zero-extend bar_phi (centered on Q_r) into a grid of target_shape,
    centered at grid index x0_idx."""
    rh = bar_phi.shape[0] // 2
    out = np.zeros(target_shape)
    src = []
    dst = []
    for axis, c in enumerate(x0_idx):
        lo, hi = c - rh, c + rh
        if lo < 0 or hi >= target_shape[axis]:
            raise ValueError("profile window leaves the target box")
        dst.append(slice(lo, hi + 1))
        src.append(slice(None))
    out[tuple(dst)] = bar_phi[tuple(src)]
    return out


def approximation_error(
    sample,
    bar: BarSolution,
    result: SpectralResult,
    view,
    scales,
) -> tuple[float, float]:
    """Scaled eigenpair approximation errors at the conditioning point.

    eig_err = a_L * |lambda_1 - (Xi(x0) + bar_lambda)|
    fun_err = (a_L / d_L) * ||phi_1 - bar_phi(. - x0)||_2

    where Xi(x0) = xi(x0) + Phi(x0), result was computed on the central
    box of the sample, and bar_phi is zero-extended.  x0 is the base point
    of the fluctuation view (expected to be the conditioning point).
    """
    from . import field as field_mod

    bar_phi = bar.bar_phi
    x0 = view.x0
    xi_cap_x0 = sample.at(x0) + field_mod.phi_at(view, bar_phi, x0)
    lam1 = float(result.eigenvalues[0])
    eig_err = scales.a_L * abs(lam1 - (xi_cap_x0 + bar.bar_lambda))

    # locate x0 inside the result grid (the central box of the sample)
    x0_idx = tuple(int(c) + result.half for c in x0)
    prof = _embed_profile(bar_phi, result.eigenfunctions[0].shape, x0_idx)
    phi1 = result.eigenfunctions[0]
    if float(np.sum(phi1 * prof)) < 0:
        phi1 = -phi1
    fun_err = (scales.a_L / scales.d_L) * math.sqrt(
        float(np.sum((phi1 - prof) ** 2))
    )
    return float(eig_err), float(fun_err)


def spectral_gap_check(
    result: SpectralResult, peak_value: float, scales, c_prime: float = 0.25
):
    """Whether lambda_2 <= xi(x0) - c_prime * a_L / d_L; returns (ok, margin)."""
    if result.k < 2:
        raise ValueError("gap check needs at least two eigenvalues")
    bound = peak_value - c_prime * scales.a_L / scales.d_L
    margin = bound - float(result.eigenvalues[1])
    return (margin >= 0.0, float(margin))
