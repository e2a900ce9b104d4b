"""Gaussian surrogate field on the sphere and its conditional Hessian law.

The field is an order-H polynomial in w with i.i.d. standard normal
coefficients plus a deterministic low-rank part controlled by the rescaled
moment coefficients rho_l, which enter at size rho_l * N^(-l/2).  Conditional
on the field value at a point, the tangent Hessian is a scaled GOE matrix
plus a rank-2 deterministic deformation S and a level-dependent shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SurrogateSpec",
    "SurrogateSample",
    "HessianModel",
    "build_surrogate",
    "eval_h",
    "grad_h",
    "hess_h",
    "riemannian_grad",
    "riemannian_hess",
    "tangent_basis",
    "covariance_mc",
    "conditional_hessian_params",
    "deterministic_profile",
    "sample_conditional_hessian",
    "spec_to_text",
    "spec_from_text",
    "kron_power",
]

DEFAULT_CAP = 10_000_000


@dataclass(frozen=True)
class SurrogateSpec:
    H: int
    N: int
    rho_l: tuple

    def __post_init__(self):
        object.__setattr__(self, "H", int(self.H))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "rho_l", tuple(float(r) for r in self.rho_l))
        if self.H < 2:
            raise ValueError("H must be at least 2")
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if len(self.rho_l) != self.H:
            raise ValueError(f"need H={self.H} moment coefficients")
        if not all(np.isfinite(self.rho_l)):
            raise ValueError("non-finite moment coefficients")

    def rho_scaled(self) -> np.ndarray:
        """rho_l N^(-l/2) for l = 1..H."""
        l = np.arange(1, self.H + 1)
        return np.asarray(self.rho_l) * self.N ** (-l / 2.0)


@dataclass(frozen=True)
class SurrogateSample:
    spec: SurrogateSpec
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.coefficients, dtype=float)
        if x.shape != (self.spec.N,) * self.spec.H:
            raise ValueError("coefficient tensor shape does not match spec")
        object.__setattr__(self, "coefficients", x)


def build_surrogate(spec: SurrogateSpec, seed, cap: int = DEFAULT_CAP) -> SurrogateSample:
    n_entries = spec.N ** spec.H
    if n_entries > cap:
        raise ValueError(f"tensor size {n_entries} exceeds cap {cap}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((spec.N,) * spec.H)
    return SurrogateSample(spec=spec, coefficients=x)


def _check_unit(w: np.ndarray):
    if abs(np.linalg.norm(w) - 1.0) > 1e-10:
        raise ValueError("w must be a unit vector")


def kron_power(w: np.ndarray, m: int) -> np.ndarray:
    out = np.ones(1)
    for _ in range(m):
        out = np.kron(out, w)
    return out


def _contract_except(x: np.ndarray, w: np.ndarray, keep) -> np.ndarray:
    """Contract every tensor axis with w except the ones in keep (ordered)."""
    H = x.ndim
    keep = tuple(keep)
    rest = H - len(keep)
    moved = np.moveaxis(x, keep, range(len(keep)))
    n = len(w)
    flat = moved.reshape(n ** len(keep), n ** rest)
    out = flat @ kron_power(w, rest)
    return out.reshape((n,) * len(keep)) if keep else float(out)


def deterministic_profile(spec: SurrogateSpec, s):
    """Value and first two derivatives of the deterministic ridge profile
    g(s) = sum_l rho_l N^(-l/2) s^(H-l) at coordinate sum s.  Accepts a
    scalar or an array of coordinate sums."""
    s = np.asarray(s, dtype=float)
    rho_n = spec.rho_scaled()
    g0 = np.zeros_like(s)
    g1 = np.zeros_like(s)
    g2 = np.zeros_like(s)
    for l in range(1, spec.H + 1):
        p = spec.H - l
        c = rho_n[l - 1]
        g0 = g0 + c * s ** p
        if p >= 1:
            g1 = g1 + c * p * s ** (p - 1)
        if p >= 2:
            g2 = g2 + c * p * (p - 1) * s ** (p - 2)
    return g0, g1, g2


def eval_h(sample: SurrogateSample, w, check_unit: bool = True) -> float:
    w = np.asarray(w, dtype=float)
    if check_unit:
        _check_unit(w)
    spec = sample.spec
    stoch = float(sample.coefficients.reshape(-1) @ kron_power(w, spec.H))
    sw = float(np.sum(w))
    powers = sw ** (spec.H - np.arange(1, spec.H + 1))
    det = float(spec.rho_scaled() @ powers)
    return stoch + det


def grad_h(sample: SurrogateSample, w, check_unit: bool = True) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if check_unit:
        _check_unit(w)
    spec = sample.spec
    H, N = spec.H, spec.N
    g = np.zeros(N)
    for k in range(H):
        g += _contract_except(sample.coefficients, w, (k,))
    sw = float(np.sum(w))
    rho_n = spec.rho_scaled()
    det_coef = 0.0
    for l in range(1, H + 1):
        p = H - l
        if p >= 1:
            det_coef += rho_n[l - 1] * p * sw ** (p - 1)
    return g + det_coef


def hess_h(sample: SurrogateSample, w, check_unit: bool = True) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if check_unit:
        _check_unit(w)
    spec = sample.spec
    H, N = spec.H, spec.N
    he = np.zeros((N, N))
    for k in range(H):
        for m in range(H):
            if m == k:
                continue
            he += _contract_except(sample.coefficients, w, (k, m))
    sw = float(np.sum(w))
    rho_n = spec.rho_scaled()
    det_coef = 0.0
    for l in range(1, H + 1):
        p = H - l
        if p >= 2:
            det_coef += rho_n[l - 1] * p * (p - 1) * sw ** (p - 2)
    return he + det_coef


def tangent_basis(w: np.ndarray) -> np.ndarray:
    """Orthonormal tangent basis at w: Householder reflection sending e1 to w,
    columns 2..N."""
    w = np.asarray(w, dtype=float)
    N = len(w)
    e1 = np.zeros(N)
    e1[0] = 1.0
    v = w - e1
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        hh = np.eye(N)
    else:
        v = v / nv
        hh = np.eye(N) - 2.0 * np.outer(v, v)
    return hh[:, 1:]


def riemannian_grad(sample: SurrogateSample, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    _check_unit(w)
    g = grad_h(sample, w)
    return g - w * float(w @ g)


def riemannian_hess(sample: SurrogateSample, w) -> np.ndarray:
    """Tangent-space Hessian (N-1)x(N-1): the Lagrange form with multiplier
    w . grad, expressed in the Householder tangent basis."""
    w = np.asarray(w, dtype=float)
    _check_unit(w)
    g = grad_h(sample, w)
    he = hess_h(sample, w)
    lam = float(w @ g)
    B = tangent_basis(w)
    return B.T @ (he - lam * np.eye(len(w))) @ B


def covariance_mc(spec: SurrogateSpec, w, w2, samples: int, seed=0,
                  chunk: int = 512):
    """Monte-Carlo covariance of the field at two points over fresh coefficient
    tensors.  Returns (estimate, stderr)."""
    if samples < 1000:
        raise ValueError("need at least 1e3 samples")
    w = np.asarray(w, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    _check_unit(w)
    _check_unit(w2)
    rng = np.random.default_rng(seed)
    kw = kron_power(w, spec.H)
    kw2 = kron_power(w2, spec.H)
    chunk = max(1, min(chunk, int(2e7 // max(len(kw), 1))))
    a = np.empty(samples)
    b = np.empty(samples)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        x = rng.standard_normal((m, len(kw)))
        a[done:done + m] = x @ kw
        b[done:done + m] = x @ kw2
        done += m
    # the deterministic part is constant and drops out of the covariance
    da = a - math.fsum(a) / samples
    db = b - math.fsum(b) / samples
    prods = da * db
    est = math.fsum(prods) / (samples - 1)
    se = float(np.std(prods, ddof=1) / np.sqrt(samples))
    return float(est), se


@dataclass(frozen=True)
class HessianModel:
    spec: SurrogateSpec
    xi0: float
    xi1: float
    xi2: float
    xi3: float
    nu: np.ndarray = field(repr=False)
    s_quad: tuple
    s1: float
    s2_scaled: float

    def s_prefactor(self) -> float:
        N, H = self.spec.N, self.spec.H
        return 1.0 / math.sqrt(2.0 * (N - 1) * H * (H - 1))

    def s_matrix(self) -> np.ndarray:
        """Explicit (N-1)x(N-1) deformation matrix."""
        N = self.spec.N
        a, b, c = self.s_quad
        s = np.full((N - 1, N - 1), c)
        s[0, :] = b
        s[:, 0] = b
        s[0, 0] = a
        return s * self.s_prefactor()


def conditional_hessian_params(spec: SurrogateSpec,
                               appendix_a_xi: bool = False) -> HessianModel:
    """Coefficients of the conditional tangent-Hessian law.

    appendix_a_xi inserts an extra N^(-l/2) in every xi sum, matching an
    alternative restatement of the coefficients; default leaves the scaling
    carried once by rho_scaled.
    """
    H, N = spec.H, spec.N
    rho_n = spec.rho_scaled()
    if appendix_a_xi:
        l = np.arange(1, H + 1)
        rho_n = rho_n * N ** (-l / 2.0)
    xi0 = float(np.sum(rho_n))
    xi1 = xi2 = xi3 = 0.0
    for l in range(1, H - 1):
        p = H - l
        xi1 += rho_n[l - 1] * (p * (p - 1) + 1)
        xi2 += rho_n[l - 1] * (p - 2)
        xi3 += rho_n[l - 1]
    nu = np.zeros(N - 1)
    base = 0.0
    first = 0.0
    for l in range(1, H):
        p = H - l
        base += rho_n[l - 1] * p
        first += rho_n[l - 1] * (p - 1)
    nu[:] = base
    nu[0] += first
    a = xi1 + 2.0 * xi2 + xi3
    b = xi2 + xi3
    c = xi3
    # nonzero eigenvalues of the structure matrix [[a, b...],[b, c...]] of
    # size N-1: reduce to the invariant span of e1 and the bulk ones vector
    n_bulk = N - 2
    tr = a + c * n_bulk
    det = n_bulk * (a * c - b * b)
    disc = math.sqrt(max(tr * tr - 4.0 * det, 0.0))
    lam_plus = 0.5 * (tr + disc)
    lam_minus = 0.5 * (tr - disc)
    pref = 1.0 / math.sqrt(2.0 * (N - 1) * H * (H - 1))
    return HessianModel(
        spec=spec, xi0=xi0, xi1=xi1, xi2=xi2, xi3=xi3, nu=nu,
        s_quad=(a, b, c),
        s1=lam_plus * pref,
        s2_scaled=math.sqrt(N) * lam_minus,
    )


def sample_goe_tangent(n: int, rng) -> np.ndarray:
    """GOE of size n with entry variance (1 + delta_ij) / (2 n)."""
    a = rng.standard_normal((n, n))
    return (a + a.T) / (2.0 * math.sqrt(n))


def sample_conditional_hessian(model: HessianModel, x: float, seed) -> np.ndarray:
    """One draw of the conditional tangent Hessian at field value x."""
    rng = np.random.default_rng(seed)
    spec = model.spec
    N, H = spec.N, spec.H
    n = N - 1
    m = sample_goe_tangent(n, rng)
    scale = math.sqrt(2.0 * n * H * (H - 1))
    shift = H * (x - model.xi0) / scale
    return scale * (m - shift * np.eye(n) + model.s_matrix())


def spec_to_text(spec: SurrogateSpec) -> str:
    return (
        f"H={spec.H}\n"
        f"N={spec.N}\n"
        "rho=" + ",".join(repr(r) for r in spec.rho_l) + "\n"
    )


def spec_from_text(text: str) -> SurrogateSpec:
    fields = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        fields[key.strip().lower()] = val.strip()
    try:
        H = int(fields["h"])
        N = int(fields["n"])
        rho = tuple(float(s) for s in fields["rho"].split(",") if s.strip())
    except KeyError as e:
        raise ValueError(f"surrogate spec text missing field {e}") from e
    return SurrogateSpec(H=H, N=N, rho_l=rho)
