"""Finite-N critical-point counting.

The expected number of critical points below a level, written as a Gaussian
quadrature over the field value times a Monte-Carlo determinant average over
the conditional tangent-Hessian ensemble, and a brute-force enumerator on
2- and 3-spheres that validates the identity end to end.

A nonzero deterministic ridge breaks rotational symmetry; the identity then
carries an extra latitude integral, handled exactly by a Gegenbauer-weighted
shell quadrature with a per-shell rank-one Hessian deformation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp, roots_jacobi

from .complexity import band_thresholds
from .surrogate import (
    SurrogateSample,
    SurrogateSpec,
    build_surrogate,
    conditional_hessian_params,
    deterministic_profile,
    eval_h,
    grad_h,
    riemannian_hess,
    sample_goe_tangent,
)

__all__ = [
    "KacRiceConfig",
    "CriticalPoint",
    "EnumerationResult",
    "kacrice_total",
    "kacrice_indexed",
    "kacrice_report",
    "enumerate_critical_points",
    "band_census",
]


@dataclass(frozen=True)
class KacRiceConfig:
    spec: SurrogateSpec
    u: float
    nodes: int = 64
    samples: int = 2000
    seed: object = 0
    lat_nodes: int = 32
    pole_approx: bool = False

    def __post_init__(self):
        if self.nodes < 16:
            raise ValueError("need at least 16 quadrature nodes")
        if self.samples < 100:
            raise ValueError("need at least 100 determinant samples")
        if self.lat_nodes < 8:
            raise ValueError("need at least 8 latitude nodes")


@dataclass(frozen=True)
class CriticalPoint:
    w: np.ndarray = field(repr=False)
    value: float
    lagrange: float
    index: int
    grad_norm: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise ValueError("critical point must sit on the unit sphere")
        if self.grad_norm > 1e-8:
            raise ValueError("gradient norm above the critical-point budget")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class EnumerationResult:
    points: tuple
    stable: bool
    count: int
    count_doubled: int


def _kacrice_engine(cfg: KacRiceConfig, K=None):
    """Log-space quadrature x shared-draw Monte Carlo for the counting
    identity.  One eigendecomposition per draw serves every node: the
    deformed-ensemble determinant at node y is prod |mu_i - y| and the index
    at level y is #{mu_i < y}."""
    spec = cfg.spec
    H, N = spec.H, spec.N
    if N < 3:
        raise ValueError("need N >= 3")
    model = conditional_hessian_params(spec)
    n = N - 1
    t = math.sqrt(H / (2.0 * n * (H - 1)))
    center = -t * model.xi0
    upper = cfg.u * math.sqrt(H * N / (2.0 * n * (H - 1))) - t * model.xi0
    lower = min(center, upper) - 8.0 * t
    xg, wg = np.polynomial.legendre.leggauss(cfg.nodes)
    ys = 0.5 * (upper - lower) * xg + 0.5 * (upper + lower)
    wq = 0.5 * (upper - lower) * wg
    log_gauss = (-0.5 * ((ys - center) / t) ** 2
                 - math.log(t) - 0.5 * math.log(2.0 * math.pi))
    log_node = np.log(wq) + log_gauss
    s_mat = model.s_matrix()
    kset = None if K is None else frozenset(int(k) for k in K)
    if kset is not None and any(k < 0 or k > n for k in kset):
        raise ValueError("index set outside 0..N-1")
    rng = np.random.default_rng(cfg.seed)
    log_totals = np.empty(cfg.samples)
    per_node_max = np.full(cfg.nodes, -np.inf)
    for s in range(cfg.samples):
        m = sample_goe_tangent(n, rng)
        mu = np.linalg.eigvalsh(m + s_mat)
        gaps = np.abs(mu[None, :] - ys[:, None])
        with np.errstate(divide="ignore"):
            log_det = np.sum(np.log(gaps), axis=1)
        contrib = log_node + log_det
        if kset is not None:
            idx = np.searchsorted(mu, ys, side="left")
            keep = np.array([i in kset for i in idx])
            contrib = np.where(keep, contrib, -np.inf)
        finite = contrib[np.isfinite(contrib)]
        if finite.size == 0:
            log_totals[s] = -np.inf
        else:
            mx = float(np.max(finite))
            log_totals[s] = mx + math.log(float(np.sum(np.exp(finite - mx))))
        per_node_max = np.maximum(per_node_max, contrib)
    log_omega = (0.5 * n * math.log(2.0 * n * (H - 1) * H)
                 + math.log(2.0) + 0.5 * N * math.log(math.pi)
                 - gammaln(N / 2.0)
                 - float(np.dot(model.nu, model.nu)) / (2.0 * H)
                 - 0.5 * n * math.log(2.0 * math.pi * H))
    finite = log_totals[np.isfinite(log_totals)]
    if finite.size == 0:
        return 0.0, 0.0, {"log_omega": log_omega, "nodes": ys.tolist(),
                          "node_peak_log": per_node_max.tolist()}
    mx = float(np.max(finite))
    log_m1 = mx + math.log(float(np.sum(np.exp(finite - mx)))) \
        - math.log(cfg.samples)
    log_m2 = 2 * mx + math.log(float(np.sum(np.exp(2.0 * (finite - mx))))) \
        - math.log(cfg.samples)
    rel_var = math.expm1(min(log_m2 - 2.0 * log_m1, 700.0))
    est = math.exp(log_omega + log_m1)
    se = est * math.sqrt(max(rel_var, 0.0) / cfg.samples)
    diag = {
        "log_omega": log_omega,
        "t": t,
        "upper": upper,
        "lower": lower,
        "nodes": ys.tolist(),
        "node_peak_log": per_node_max.tolist(),
        "log_mean": log_omega + log_m1,
    }
    return est, se, diag


def _kacrice_engine_tilted(cfg: KacRiceConfig, K=None):
    """Latitude-resolved counting identity for a field with a nonzero
    deterministic ridge.  The ridge breaks rotational symmetry, so the
    point expectation depends on the overlap m of the location with the
    diagonal direction.  The sphere integral is split into latitude shells
    with the Gegenbauer weight (1-m^2)^((N-3)/2); at latitude m, with
    s0 = sqrt(N) m and profile g:

      * the field mean is g(s0) and the gradient-density weight is
        exp(-g'(s0)^2 (N - s0^2) / 2H),
      * the conditional tangent Hessian is scale * (M + S(m) - y I) with
        a rank-one deformation S(m) of size g''(s0)(N - s0^2)/scale along
        the in-shell image of the diagonal, and shifted level
        y = (H (x - g(s0)) + g'(s0) s0) / scale.

    One GOE draw per sample serves every (latitude, level) node; per-draw
    totals over the full grid give an honest stderr.  Reduces exactly to
    the rotation-invariant engine when the ridge vanishes."""
    spec = cfg.spec
    H, N = spec.H, spec.N
    if N < 3:
        raise ValueError("need N >= 3")
    n = N - 1
    root_n = math.sqrt(N)
    scale = math.sqrt(2.0 * n * H * (H - 1))
    t = H / scale
    kset = None if K is None else frozenset(int(k) for k in K)
    if kset is not None and any(k < 0 or k > n for k in kset):
        raise ValueError("index set outside 0..N-1")
    a = 0.5 * (N - 3)
    xm, wm = roots_jacobi(cfg.lat_nodes, a, a)
    s0 = root_n * xm
    g0, g1, g2 = deterministic_profile(spec, s0)
    theta = g2 * (N - s0 ** 2) / scale
    center = g1 * s0 / scale
    up = (H * (root_n * cfg.u - g0) + g1 * s0) / scale
    low = np.minimum(center, up) - 8.0 * t
    xg, wg = np.polynomial.legendre.leggauss(cfg.nodes)
    ys = 0.5 * (up - low)[:, None] * xg[None, :] + 0.5 * (up + low)[:, None]
    wq = 0.5 * (up - low)[:, None] * wg[None, :]
    log_gauss = (-0.5 * ((ys - center[:, None]) / t) ** 2
                 - math.log(t) - 0.5 * math.log(2.0 * math.pi))
    nu_sq = g1 ** 2 * (N - s0 ** 2)
    log_node = (np.log(wm)[:, None] - nu_sq[:, None] / (2.0 * H)
                + np.log(wq) + log_gauss)
    e11 = np.zeros((n, n))
    e11[0, 0] = 1.0
    rng = np.random.default_rng(cfg.seed)
    L = cfg.lat_nodes
    log_totals = np.empty(cfg.samples)
    per_node_max = np.full((L, cfg.nodes), -np.inf)
    chunk = max(1, int(4.0e6 / (L * cfg.nodes * n)))
    pos = 0
    kidx = None if kset is None else np.fromiter(sorted(kset), dtype=int)
    while pos < cfg.samples:
        c = min(chunk, cfg.samples - pos)
        ms = np.stack([sample_goe_tangent(n, rng) for _ in range(c)])
        stack = ms[:, None, :, :] + theta[None, :, None, None] * e11
        mu = np.linalg.eigvalsh(stack)
        diff = mu[:, :, None, :] - ys[None, :, :, None]
        with np.errstate(divide="ignore"):
            log_det = np.sum(np.log(np.abs(diff)), axis=-1)
        contrib = log_node[None] + log_det
        if kidx is not None:
            idx = np.sum(diff < 0.0, axis=-1)
            contrib = np.where(np.isin(idx, kidx), contrib, -np.inf)
        log_totals[pos:pos + c] = logsumexp(contrib.reshape(c, -1), axis=1)
        per_node_max = np.maximum(per_node_max, contrib.max(axis=0))
        pos += c
    log_base = (math.log(2.0) + 0.5 * n * math.log(math.pi)
                - gammaln(n / 2.0)
                + 0.5 * n * math.log(2.0 * n * H * (H - 1))
                - 0.5 * n * math.log(2.0 * math.pi * H))
    lat_peak = per_node_max.max(axis=1)
    l_star = int(np.argmax(lat_peak))
    finite = log_totals[np.isfinite(log_totals)]
    diag = {
        "log_omega": log_base,
        "t": t,
        "upper": float(np.max(up)),
        "lower": float(np.min(low)),
        "nodes": ys[l_star].tolist(),
        "node_peak_log": per_node_max[l_star].tolist(),
        "lat_nodes": xm.tolist(),
        "lat_peak_log": lat_peak.tolist(),
    }
    if finite.size == 0:
        return 0.0, 0.0, diag
    log_m1 = float(logsumexp(finite)) - math.log(cfg.samples)
    log_m2 = float(logsumexp(2.0 * finite)) - math.log(cfg.samples)
    rel_var = math.expm1(min(log_m2 - 2.0 * log_m1, 700.0))
    est = math.exp(log_base + log_m1)
    se = est * math.sqrt(max(rel_var, 0.0) / cfg.samples)
    diag["log_mean"] = log_base + log_m1
    return est, se, diag


def _engine_for(cfg: KacRiceConfig):
    if cfg.pole_approx or not np.any(cfg.spec.rho_scaled()):
        return _kacrice_engine
    return _kacrice_engine_tilted


def kacrice_total(cfg: KacRiceConfig):
    """(estimate, stderr) for the expected count below the level."""
    est, se, _ = _engine_for(cfg)(cfg, K=None)
    return est, se


def kacrice_indexed(cfg: KacRiceConfig, K):
    """(estimate, stderr) restricted to Hessian indices in K."""
    est, se, _ = _engine_for(cfg)(cfg, K=K)
    return est, se


def kacrice_report(cfg: KacRiceConfig, K=None) -> dict:
    """Full result with per-node quadrature diagnostics, for reporting."""
    est, se, diag = _engine_for(cfg)(cfg, K=K)
    return {
        "estimate": est,
        "stderr": se,
        "H": cfg.spec.H,
        "N": cfg.spec.N,
        "u": cfg.u,
        "nodes": cfg.nodes,
        "samples": cfg.samples,
        "seed": cfg.seed,
        "lat_nodes": cfg.lat_nodes,
        "pole_approx": cfg.pole_approx,
        "index_set": None if K is None else sorted(int(k) for k in K),
        "diagnostics": diag,
    }


def _fibonacci_sphere(n_points: int, N: int) -> np.ndarray:
    """Quasi-uniform seeds: golden-angle lattice on the 2-sphere, the
    double-angle spiral on the 3-sphere."""
    k = np.arange(n_points)
    if N == 3:
        z = 1.0 - 2.0 * (k + 0.5) / n_points
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        golden = math.pi * (3.0 - math.sqrt(5.0))
        ang = golden * k
        return np.column_stack([r * np.cos(ang), r * np.sin(ang), z])
    if N == 4:
        s = (k + 0.5) / n_points
        r = np.sqrt(s)
        q = np.sqrt(1.0 - s)
        phi = 2.0 * math.pi * k / ((1.0 + math.sqrt(5.0)) / 2.0)
        psi = 2.0 * math.pi * k / 1.5337511687552044
        return np.column_stack([r * np.sin(phi), r * np.cos(phi),
                                q * np.sin(psi), q * np.cos(psi)])
    raise ValueError("enumeration supports N in {3, 4} only")


def _batch_jets(sample: SurrogateSample, W: np.ndarray):
    """Value, Euclidean gradient, and Euclidean Hessian of the field at each
    row of W, by direct tensor contraction."""
    spec = sample.spec
    H, N = spec.H, spec.N
    X = sample.coefficients
    nb = W.shape[0]
    letters = "abcdefgh"[:H]
    args = [X] + [W] * H
    sub = letters + "," + ",".join("n" + c for c in letters) + "->n"
    val = np.einsum(sub, *args)
    grad = np.zeros((nb, N))
    for k in range(H):
        sub_k = (letters + ","
                 + ",".join("n" + c for i, c in enumerate(letters) if i != k)
                 + "->n" + letters[k])
        grad += np.einsum(sub_k, X, *([W] * (H - 1)))
    hess = np.zeros((nb, N, N))
    for k in range(H):
        for l in range(H):
            if l == k:
                continue
            if H == 2:
                hess += (X if k < l else X.T)[None]
                continue
            keep = [c for i, c in enumerate(letters) if i not in (k, l)]
            sub_kl = (letters + ","
                      + ",".join("n" + c for c in keep)
                      + "->n" + letters[k] + letters[l])
            hess += np.einsum(sub_kl, X, *([W] * (H - 2)))
    rho_n = spec.rho_scaled()
    s = W.sum(axis=1)
    d0 = np.zeros(nb)
    d1 = np.zeros(nb)
    d2 = np.zeros(nb)
    for l in range(1, H + 1):
        p = H - l
        d0 += rho_n[l - 1] * s ** p
        if p >= 1:
            d1 += rho_n[l - 1] * p * s ** (p - 1)
        if p >= 2:
            d2 += rho_n[l - 1] * p * (p - 1) * s ** (p - 2)
    val += d0
    grad += d1[:, None]
    hess += d2[:, None, None]
    return val, grad, hess


def _newton_polish(sample: SurrogateSample, seeds: np.ndarray,
                   newton_tol: float, max_iter: int = 100) -> np.ndarray:
    """Damped Newton on the stationarity system grad h = lambda w, |w| = 1,
    batched over seeds.  Returns the converged unit vectors."""
    N = sample.spec.N
    W = seeds.copy()
    lam = np.einsum("ni,ni->n", grad_batch(sample, W), W)
    active = np.ones(len(W), dtype=bool)
    target = 0.1 * newton_tol
    for _ in range(max_iter):
        if not active.any():
            break
        Wa, la = W[active], lam[active]
        _, g, h = _batch_jets(sample, Wa)
        F = np.concatenate([g - la[:, None] * Wa,
                            0.5 * (np.sum(Wa * Wa, axis=1) - 1.0)[:, None]],
                           axis=1)
        normF = np.linalg.norm(F, axis=1)
        na = len(Wa)
        J = np.zeros((na, N + 1, N + 1))
        J[:, :N, :N] = h
        J[:, :N, :N] -= la[:, None, None] * np.eye(N)[None]
        J[:, :N, N] = -Wa
        J[:, N, :N] = Wa
        try:
            delta = np.linalg.solve(J, -F[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            J[:, np.arange(N + 1), np.arange(N + 1)] += 1e-10
            delta = np.linalg.solve(J, -F[:, :, None])[:, :, 0]
        tau = np.ones(na)
        accepted = np.zeros(na, dtype=bool)
        W_new, lam_new = Wa.copy(), la.copy()
        for _ in range(30):
            trial_w = Wa + tau[:, None] * delta[:, :N]
            trial_l = la + tau * delta[:, N]
            _, gt, _ = _batch_jets(sample, trial_w)
            Ft = np.concatenate(
                [gt - trial_l[:, None] * trial_w,
                 0.5 * (np.sum(trial_w * trial_w, axis=1) - 1.0)[:, None]],
                axis=1)
            normFt = np.linalg.norm(Ft, axis=1)
            ok = normFt <= (1.0 - 1e-4 * tau) * normF
            newly = ok & ~accepted
            W_new[newly] = trial_w[newly]
            lam_new[newly] = trial_l[newly]
            accepted |= ok
            if accepted.all():
                break
            tau = np.where(accepted, tau, tau * 0.5)
        idx = np.flatnonzero(active)
        W[idx] = W_new
        lam[idx] = lam_new
        _, g2, _ = _batch_jets(sample, W_new)
        F2 = np.concatenate(
            [g2 - lam_new[:, None] * W_new,
             0.5 * (np.sum(W_new * W_new, axis=1) - 1.0)[:, None]], axis=1)
        res = np.linalg.norm(F2, axis=1)
        norms = np.linalg.norm(W_new, axis=1)
        dead = (~accepted) | (norms < 0.3) | (norms > 3.0) | (res > 1e8)
        done = res <= target
        active[idx[dead | done]] = False
    return W


def grad_batch(sample: SurrogateSample, W: np.ndarray) -> np.ndarray:
    _, g, _ = _batch_jets(sample, W)
    return g


def enumerate_critical_points(sample: SurrogateSample,
                              grid_density: int = 300,
                              newton_tol: float = 1e-10) -> EnumerationResult:
    """All critical points of the field on the sphere, by polished Newton
    from a quasi-uniform seed grid, deduplicated and index-classified.  The
    stability flag reports whether doubling the grid changes the count."""
    N = sample.spec.N
    if N not in (3, 4):
        raise ValueError("enumeration supports N in {3, 4} only")

    def solve_from(n_seeds):
        grid = _fibonacci_sphere(n_seeds, N)
        seeds = np.vstack([grid, -grid])
        W = _newton_polish(sample, seeds, newton_tol)
        out = []
        for w in W:
            nw = np.linalg.norm(w)
            if not (0.5 < nw < 2.0) or not np.all(np.isfinite(w)):
                continue
            w = w / nw
            g = grad_h(sample, w)
            lam = float(np.dot(w, g))
            gn = float(np.linalg.norm(g - lam * w))
            if gn <= newton_tol:
                out.append(w)
        return out

    def dedup(ws):
        kept = []
        order = sorted(ws, key=lambda w: (round(float(w[0]), 9),
                                          round(float(w[1]), 9)))
        for w in order:
            if all(np.linalg.norm(w - k) >= 1e-6 for k in kept):
                kept.append(w)
        return kept

    first = dedup(solve_from(grid_density))
    union = dedup(first + solve_from(2 * grid_density))
    points = []
    for w in union:
        g = grad_h(sample, w)
        lam = float(np.dot(w, g))
        gn = float(np.linalg.norm(g - lam * w))
        rh = riemannian_hess(sample, w)
        idx = int(np.sum(np.linalg.eigvalsh(rh) < 0.0))
        points.append(CriticalPoint(w=w, value=float(eval_h(sample, w)),
                                    lagrange=lam, index=idx, grad_norm=gn))
    points.sort(key=lambda p: (p.value, p.index))
    return EnumerationResult(points=tuple(points),
                             stable=(len(first) == len(union)),
                             count=len(first), count_doubled=len(union))


def band_census(samples: int, spec: SurrogateSpec, grid_density: int = 300,
                newton_tol: float = 1e-10, k_max: int = 3, seed=0):
    """Empirical index distribution of critical points per value band.

    Values are compared on the u = h(w)/sqrt(N) scale against the negated
    band thresholds.  Returns rows (band_lo, band_hi, index, count) for every
    band and every index 0..N-2, counting across sampled surrogates.
    """
    table = band_thresholds(spec.H, k_max)
    edges = [-e for e in table.thresholds] + [math.inf]
    edges = [-math.inf] + edges
    n_idx = spec.N - 1
    counts = np.zeros((len(edges) - 1, n_idx), dtype=int)
    root_n = math.sqrt(spec.N)
    for s in range(samples):
        sample = build_surrogate(spec, seed=(seed, s))
        res = enumerate_critical_points(sample, grid_density, newton_tol)
        for p in res.points:
            u = p.value / root_n
            band = int(np.searchsorted(edges, u, side="left")) - 1
            band = min(max(band, 0), len(edges) - 2)
            if p.index < n_idx:
                counts[band, p.index] += 1
    rows = []
    for b in range(len(edges) - 1):
        for i in range(n_idx):
            rows.append((edges[b], edges[b + 1], i, int(counts[b, i])))
    return rows
