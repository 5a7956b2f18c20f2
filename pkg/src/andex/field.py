"""Exact Gaussian field sampling and the fluctuation decomposition.

A field lives on the centered box Q_L = [-h, h]^d with h = floor(L/2), so
the grid side is 2h+1 and the origin sits at index (h, ..., h).  Two exact
samplers are provided:

    dense     -- factorize the full covariance matrix (small boxes only);
    circulant -- spectral synthesis on a padded torus, restricted to Q_L.

Both draw from the exact law; the circulant path refuses to run (rather
than clip eigenvalues) when the embedding is not nonnegative.

On top of a sample, this module builds the decomposition around a base
point x0:

    xi(x) = xi(x0) * v(x - x0) + zeta(x),      zeta(x0) = 0,

with zeta independent of xi(x0); the profile-weighted correction
Phi(y) = sum_x w(x) zeta_y(x+y); and the shifted field Xi = xi + Phi whose
marginal variance is 1 + tau^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import covariance as cov
from .errors import CovarianceInconsistencyError, EmbeddingInvalidError

__all__ = [
    "FieldSample",
    "FluctuationView",
    "EventReport",
    "box_half",
    "grid_side",
    "sample_field",
    "peak_conditioned_sample",
    "fluctuation_view",
    "cov_zeta",
    "compute_tau",
    "phi_at",
    "xi_cap",
    "event_check",
]

DENSE_SITE_LIMIT = 6000


def box_half(L: int) -> int:
    """Half-width of Q_L: the box is [-h, h]^d with h = floor(L/2)."""
    return L // 2


def grid_side(L: int) -> int:
    return 2 * (L // 2) + 1


def point_to_index(point, h: int) -> tuple:
    idx = tuple(int(c) + h for c in np.atleast_1d(point))
    if any(i < 0 or i > 2 * h for i in idx):
        raise ValueError(f"point {tuple(point)} outside box of half-width {h}")
    return idx


@dataclass(frozen=True)
class FieldSample:
    values: np.ndarray  # shape (side,)*d, read-only
    L: int
    d: int
    model: cov.CovarianceModel
    seed: int
    sampler: str  # "dense" | "circulant"
    conditioned_at: Optional[tuple] = None  # ((coords...), value)

    def __post_init__(self):
        side = grid_side(self.L)
        if self.values.shape != (side,) * self.d:
            raise ValueError(
                f"grid shape {self.values.shape} != {(side,) * self.d}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite field values")
        self.values.setflags(write=False)

    @property
    def half(self) -> int:
        return box_half(self.L)

    def at(self, point) -> float:
        return float(self.values[point_to_index(point, self.half)])

    def export_binary(self, path_prefix: str) -> None:
        """Row-major little-endian float64 grid plus a JSON sidecar."""
        self.values.astype("<f8").tofile(path_prefix + ".bin")
        meta = {
            "L": self.L,
            "d": self.d,
            "model": self.model.to_config(),
            "seed": self.seed,
            "sampler": self.sampler,
        }
        with open(path_prefix + ".json", "w") as fh:
            json.dump(meta, fh)


def _offsets_from_origin(d: int, h: int) -> np.ndarray:
    axes = [np.arange(-h, h + 1)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


# Factorizations depend only on (model, L); cache them so batched draws
# across many seeds do not refactor the same covariance.
_FACTOR_CACHE: dict = {}


def _cache_key(model, L, kind):
    return (kind, model.family, model.d, tuple(sorted(model.params.items())), L)


def _dense_factor(model, L):
    key = _cache_key(model, L, "dense")
    F = _FACTOR_CACHE.get(key)
    if F is not None:
        return F
    h = box_half(L)
    side = 2 * h + 1
    n = side**model.d
    pts = _offsets_from_origin(model.d, h).reshape(n, model.d)
    diffs = pts[:, None, :] - pts[None, :, :]
    C = cov.eval_cov_offsets(model, diffs)
    try:
        F = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(C)
        if np.min(w) < -1e-8 * max(np.max(w), 1.0):
            raise CovarianceInconsistencyError(
                f"covariance matrix has eigenvalue {np.min(w):.3e}"
            )
        F = V * np.sqrt(np.clip(w, 0.0, None))
    if len(_FACTOR_CACHE) > 8:
        _FACTOR_CACHE.clear()
    _FACTOR_CACHE[key] = F
    return F


def _dense_draw(model, L, rng):
    h = box_half(L)
    side = 2 * h + 1
    n = side**model.d
    if n > DENSE_SITE_LIMIT:
        raise ValueError(
            f"dense sampler limited to {DENSE_SITE_LIMIT} sites, got {n}"
        )
    F = _dense_factor(model, L)
    z = rng.standard_normal(n)
    return (F @ z).reshape((side,) * model.d)


def _circulant_amplitude(model, M):
    key = _cache_key(model, M, "circulant")
    amp = _FACTOR_CACHE.get(key)
    if amp is None:
        spec = cov.circulant_spectrum(model, M)  # raises if invalid
        amp = np.sqrt(np.clip(spec, 0.0, None))
        if len(_FACTOR_CACHE) > 8:
            _FACTOR_CACHE.clear()
        _FACTOR_CACHE[key] = amp
    return amp


def _circulant_draw(model, L, rng):
    h = box_half(L)
    side = 2 * h + 1
    pad = 2 * cov.effective_radius(model)
    M = side + pad
    amp = _circulant_amplitude(model, M)
    shape = (M,) * model.d
    a = rng.standard_normal(shape)
    b = rng.standard_normal(shape)
    X = np.fft.fftn(amp * (a + 1j * b)) / M ** (model.d / 2.0)
    # Real and imaginary parts are independent exact draws; keep the real one.
    grid = X.real
    sl = (slice(0, side),) * model.d
    return np.ascontiguousarray(grid[sl])


def sample_field(
    model: cov.CovarianceModel,
    L: int,
    seed: int,
    sampler_hint: Optional[str] = None,
) -> FieldSample:
    """Exact draw of the stationary field on Q_L.

    Deterministic given (seed, model, L, sampler).  With no hint the
    circulant path is preferred and the dense path is the fallback when
    the embedding is invalid and the box is small enough.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if sampler_hint not in (None, "dense", "circulant"):
        raise ValueError(f"unknown sampler {sampler_hint!r}")
    if sampler_hint == "dense":
        values = _dense_draw(model, L, rng)
        kind = "dense"
    elif sampler_hint == "circulant":
        values = _circulant_draw(model, L, rng)
        kind = "circulant"
    else:
        try:
            values = _circulant_draw(model, L, rng)
            kind = "circulant"
        except EmbeddingInvalidError:
            values = _dense_draw(model, L, rng)
            kind = "dense"
    return FieldSample(
        values=values, L=L, d=model.d, model=model, seed=seed, sampler=kind
    )


def _profile_grid(sample: FieldSample, x0) -> np.ndarray:
    """v(x - x0) over the whole grid."""
    h = sample.half
    x0 = np.atleast_1d(np.asarray(x0, dtype=int))
    offs = _offsets_from_origin(sample.d, h) - x0
    return cov.eval_cov_offsets(sample.model, offs)


def peak_conditioned_sample(
    model: cov.CovarianceModel,
    L: int,
    x0,
    value: float,
    seed: int,
    sampler_hint: Optional[str] = None,
) -> FieldSample:
    """Exact draw of the field conditioned on xi(x0) = value.

    Built from the fluctuation decomposition: draw xi, strip its projection
    onto xi(x0), and put the prescribed value back.  The residual zeta is
    independent of xi(x0), so the law is the exact conditional one.
    """
    base = sample_field(model, L, seed, sampler_hint)
    prof = _profile_grid(base, x0)
    zeta = base.values - base.at(x0) * prof
    vals = value * prof + zeta
    idx = point_to_index(x0, base.half)
    vals[idx] = value  # exact, not up to roundoff
    return FieldSample(
        values=vals,
        L=L,
        d=model.d,
        model=model,
        seed=seed,
        sampler=base.sampler,
        conditioned_at=(tuple(int(c) for c in np.atleast_1d(x0)), float(value)),
    )


@dataclass
class FluctuationView:
    """Fluctuation decomposition of one sample around a base point."""

    base: FieldSample
    x0: tuple
    zeta: np.ndarray

    def __post_init__(self):
        self._phi_cache: dict = {}
        self.zeta.setflags(write=False)

    def phi_cached(self, key):
        return self._phi_cache.get(key)

    def phi_store(self, key, value):
        self._phi_cache[key] = value


def fluctuation_view(sample: FieldSample, x0) -> FluctuationView:
    x0 = tuple(int(c) for c in np.atleast_1d(x0))
    prof = _profile_grid(sample, x0)
    zeta = sample.values - sample.at(x0) * prof
    zeta[point_to_index(x0, sample.half)] = 0.0
    return FluctuationView(base=sample, x0=x0, zeta=zeta)


def cov_zeta(model: cov.CovarianceModel, x0, x, y) -> float:
    """Cov(zeta_{x0}(x), zeta_{x0}(y)) = v(x-y) - v(x-x0) v(y-x0)."""
    x0 = np.atleast_1d(np.asarray(x0))
    x = np.atleast_1d(np.asarray(x))
    y = np.atleast_1d(np.asarray(y))
    return (
        cov.eval_cov(model, x - y)
        - cov.eval_cov(model, x - x0) * cov.eval_cov(model, y - x0)
    )


def _check_profile(bar_phi: np.ndarray, d: int) -> int:
    """Validate an odd centered profile grid; return its half-width."""
    if bar_phi.ndim != d:
        raise ValueError(f"profile must be {d}-dimensional")
    side = bar_phi.shape[0]
    if any(s != side for s in bar_phi.shape) or side % 2 == 0:
        raise ValueError("profile grid must be an odd centered cube")
    norm = float(np.sum(bar_phi**2))
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"profile must be l2-normalized, got norm^2={norm}")
    return side // 2


def compute_tau(model: cov.CovarianceModel, bar_phi: np.ndarray) -> float:
    """Std-dev of the profile-weighted fluctuation correction.

    tau^2 = sum_{x,y != 0} w(x) w(y) (v(x-y) - v(x) v(y)),  w = bar_phi^2.
    Translation invariance makes the base point irrelevant.
    """
    rh = _check_profile(bar_phi, model.d)
    pts = _offsets_from_origin(model.d, rh).reshape(-1, model.d)
    w = (bar_phi**2).reshape(-1)
    keep = ~np.all(pts == 0, axis=-1)
    pts, w = pts[keep], w[keep]
    V = cov.eval_cov_offsets(model, pts[:, None, :] - pts[None, :, :])
    v0 = cov.eval_cov_offsets(model, pts)
    tau2 = float(w @ (V - np.outer(v0, v0)) @ w)
    if tau2 < -1e-12:
        raise CovarianceInconsistencyError(f"negative tau^2 = {tau2}")
    return math.sqrt(max(tau2, 0.0))


def phi_at(view: FluctuationView, bar_phi: np.ndarray, y) -> float:
    """Profile-weighted fluctuation correction at y.

    Phi(y) = sum_{x in Q_r, x != 0} bar_phi(x)^2 * zeta_y(x + y), where
    zeta_y is rebuilt on the fly from the same base sample.
    """
    y = tuple(int(c) for c in np.atleast_1d(y))
    cached = view.phi_cached(y)
    if cached is not None:
        return cached
    sample = view.base
    rh = _check_profile(bar_phi, sample.d)
    h = sample.half
    if any(abs(c) + rh > h for c in y):
        raise ValueError(f"window of half-width {rh} around {y} leaves the box")
    offs = _offsets_from_origin(sample.d, rh).reshape(-1, sample.d)
    w = (bar_phi**2).reshape(-1)
    keep = ~np.all(offs == 0, axis=-1)
    offs, w = offs[keep], w[keep]
    xi_y = sample.at(y)
    v_offs = cov.eval_cov_offsets(sample.model, offs)
    idx = tuple((offs + np.array(y) + h).T)
    zeta_vals = sample.values[idx] - xi_y * v_offs
    out = float(w @ zeta_vals)
    view.phi_store(y, out)
    return out


def xi_cap(view: FluctuationView, bar_phi: np.ndarray) -> tuple[np.ndarray, int]:
    """Shifted field Xi = xi + Phi on the admissible sub-box.

    Returns (grid, sub_half) where the grid covers the points y with
    Q_{r,y} inside Q_L, i.e. |y_i| <= sub_half = h - r_half.

    Vectorized as a correlation: Xi(y) = xi(y) (1 - sum w v) + sum w xi(.+y).
    """
    sample = view.base
    rh = _check_profile(bar_phi, sample.d)
    h = sample.half
    sub_half = h - rh
    if sub_half < 0:
        raise ValueError("profile window larger than the box")
    offs = _offsets_from_origin(sample.d, rh).reshape(-1, sample.d)
    w = (bar_phi**2).reshape(-1)
    keep = ~np.all(offs == 0, axis=-1)
    offs, w = offs[keep], w[keep]
    v_offs = cov.eval_cov_offsets(sample.model, offs)
    side = 2 * sub_half + 1
    core = (slice(rh, rh + side),) * sample.d
    out = (1.0 - float(w @ v_offs)) * sample.values[core].copy()
    for off, weight in zip(offs, w):
        sl = tuple(
            slice(rh + int(o), rh + int(o) + side) for o in off
        )
        out += weight * sample.values[sl]
    return out, sub_half


@dataclass(frozen=True)
class EventReport:
    """Membership and worst-case slack for the three-part peak event."""

    x0: tuple
    in_E1: bool
    in_E2: bool
    in_E3: bool
    margins: tuple  # positive slack <=> membership, one per sub-event

    @property
    def in_event(self) -> bool:
        return self.in_E1 and self.in_E2 and self.in_E3


def event_check(
    sample: FieldSample,
    x0,
    scales,
    shape_factor: float = 0.1,
) -> EventReport:
    """Check the three-part event around a candidate peak x0.

    E1: |xi(x0) - a_L| < theta (theta = 2d+1).
    E2: |zeta(x)| <= shape_factor * S(x - x0) on the window Q_{2R_L, x0}.
    E3: |zeta(x)| / sd(zeta(x)) <= (a_L/d_L)^{kappa |x-x0|} *
        sqrt(1 v |xi(x0) - a_L| a_L) on Q_{R_L, x0} minus x0; sites with
        sd(zeta) = 0 count as ratio 0.

    Margins are the minimal slacks (bound minus attained value); their sign
    matches membership.
    """
    x0 = tuple(int(c) for c in np.atleast_1d(x0))
    d = sample.d
    h = sample.half
    a_L, d_L, kappa, theta = scales.a_L, scales.d_L, scales.kappa, scales.theta
    R_half = scales.R_L // 2
    wide_half = (2 * scales.R_L) // 2  # half-width of Q_{2 R_L}
    if any(abs(c) + wide_half > h for c in x0):
        raise ValueError("Q_{2R_L, x0} leaves the sampled box")

    xi0 = sample.at(x0)
    dev = abs(xi0 - a_L)
    margin1 = theta - dev
    in_e1 = dev < theta

    prof = _profile_grid(sample, x0)
    zeta = sample.values - xi0 * prof
    zeta[point_to_index(x0, h)] = 0.0

    # E2 on the wide window, excluding x0 itself (both sides vanish there).
    offs = _offsets_from_origin(d, h) - np.asarray(x0)
    sup = np.max(np.abs(offs), axis=-1)
    wide = sup <= wide_half
    nonzero = sup > 0
    sel2 = wide & nonzero
    S = a_L * (1.0 - prof)
    slack2 = shape_factor * S[sel2] - np.abs(zeta[sel2])
    margin2 = float(np.min(slack2))
    in_e2 = margin2 >= 0.0

    # E3 on the narrow window.
    sel3 = (sup <= R_half) & nonzero
    var = 1.0 - prof[sel3] ** 2
    sd = np.sqrt(np.clip(var, 0.0, None))
    ratio = np.zeros_like(sd)
    pos = sd > 0
    ratio[pos] = np.abs(zeta[sel3][pos]) / sd[pos]
    l1 = np.sum(np.abs(offs[sel3]), axis=-1)
    bound = (a_L / d_L) ** (kappa * l1) * math.sqrt(max(1.0, dev * a_L))
    slack3 = bound - ratio
    margin3 = float(np.min(slack3))
    in_e3 = margin3 >= 0.0

    return EventReport(
        x0=x0,
        in_E1=bool(in_e1),
        in_E2=bool(in_e2),
        in_E3=bool(in_e3),
        margins=(float(margin1), margin2, margin3),
    )
