"""Random-matrix Monte Carlo utilities.

GOE sampling in the E M_ij^2 = (1+delta_ij)/(2N) convention, determinant
expectations with and without index conditioning (log-space for large N),
eigenvalue interlacing under low-rank deformations, a numerically checkable
version of the rank-r Gaussian matrix integral identity, and the small
Vandermonde-moment constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, roots_genlaguerre, roots_jacobi

__all__ = [
    "GOEStats",
    "DeformedEnsemble",
    "sample_goe",
    "expected_abs_det",
    "expected_abs_det_indexed",
    "index_of",
    "interlacing_check",
    "fyodorov_lhs_mc",
    "fyodorov_rhs_quad",
    "y_integral_mc",
]

_LOG_SPACE_N = 30


@dataclass(frozen=True)
class GOEStats:
    N: int
    sample_count: int
    mean: float
    stderr: float
    seed: object
    log_space: bool = False
    x: float | None = None

    def to_json_dict(self) -> dict:
        if self.log_space:
            mean_log, stderr_log = self.mean, self.stderr
        else:
            mean_log = math.log(self.mean) if self.mean > 0 else float("-inf")
            stderr_log = self.stderr / self.mean if self.mean > 0 else float("inf")
        return {
            "N": self.N,
            "x": self.x,
            "samples": self.sample_count,
            "mean_log": mean_log,
            "stderr_log": stderr_log,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class DeformedEnsemble:
    N: int
    x: float
    S: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.S is not None:
            s = np.asarray(self.S, dtype=float)
            if s.shape != (self.N, self.N):
                raise ValueError("S shape must match N")
            if np.max(np.abs(s - s.T)) > 1e-12:
                raise ValueError("S must be symmetric")
            object.__setattr__(self, "S", s)

    def s_or_zero(self) -> np.ndarray:
        if self.S is None:
            return np.zeros((self.N, self.N))
        return self.S


def sample_goe(N: int, seed=None, rng=None) -> np.ndarray:
    """GOE with E M_ij^2 = (1 + delta_ij) / (2N)."""
    if N < 1:
        raise ValueError("N must be positive")
    if rng is None:
        rng = np.random.default_rng(seed)
    a = rng.standard_normal((N, N))
    return (a + a.T) / (2.0 * math.sqrt(N))


def _logsumexp_stream(running, new_vals):
    """Combine (max, sum-of-exp-shifted, count) with a new batch, fixed order."""
    m, s, c = running
    if new_vals.size == 0:
        return running
    bm = float(np.max(new_vals))
    if bm > m:
        s = s * math.exp(m - bm) + float(np.sum(np.exp(new_vals - bm)))
        m = bm
    else:
        s = s + float(np.sum(np.exp(new_vals - m)))
    return (m, s, c + new_vals.size)


def _abs_det_stats(e: DeformedEnsemble, samples: int, seed,
                   keep=None) -> GOEStats:
    """Shared engine: mean |det(M - xI + S)| over GOE draws, optionally
    zeroing samples whose deformed index is not in the keep set."""
    N = e.N
    rng = np.random.default_rng(seed)
    s_mat = e.s_or_zero()
    shift = s_mat - e.x * np.eye(N)
    log_mode = N > _LOG_SPACE_N
    lvals = np.empty(samples)
    mask = np.ones(samples, dtype=bool)
    for i in range(samples):
        m = sample_goe(N, rng=rng)
        if keep is not None:
            evs = np.linalg.eigvalsh(m + keep[1])
            if int(np.sum(evs < e.x)) not in keep[0]:
                mask[i] = False
                lvals[i] = -np.inf
                continue
        sign, logdet = np.linalg.slogdet(m + shift)
        lvals[i] = logdet if sign != 0 else -np.inf
    if log_mode:
        finite = lvals[np.isfinite(lvals)]
        if finite.size == 0:
            mean_log, stderr_log = float("-inf"), float("inf")
        else:
            running = (-np.inf, 0.0, 0)
            running = _logsumexp_stream(running, finite)
            m0, s0, _ = running
            log_m1 = m0 + math.log(s0) - math.log(samples)
            r2 = (-np.inf, 0.0, 0)
            r2 = _logsumexp_stream(r2, 2.0 * finite)
            m2, s2, _ = r2
            log_m2 = m2 + math.log(s2) - math.log(samples)
            rel_var = math.expm1(log_m2 - 2.0 * log_m1)
            stderr_log = math.sqrt(max(rel_var, 0.0) / samples)
            mean_log = log_m1
        return GOEStats(N=N, sample_count=samples, mean=mean_log,
                        stderr=stderr_log, seed=seed, log_space=True, x=e.x)
    vals = np.where(mask, np.exp(lvals, where=np.isfinite(lvals),
                                 out=np.zeros_like(lvals)), 0.0)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(samples))
    return GOEStats(N=N, sample_count=samples, mean=mean, stderr=stderr,
                    seed=seed, log_space=False, x=e.x)


def expected_abs_det(e: DeformedEnsemble, samples: int, seed=0) -> GOEStats:
    if samples < 100:
        raise ValueError("need at least 100 samples")
    return _abs_det_stats(e, samples, seed, keep=None)


def expected_abs_det_indexed(e: DeformedEnsemble, K, samples: int, seed=0,
                             condition_on_deformed: bool = True) -> GOEStats:
    """E |det(M - xI + S)| restricted to draws whose eigenvalue count below x
    (of M + S by default, of M under the ablation flag) lies in K."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    kset = frozenset(int(k) for k in K)
    if any(k < 0 or k > e.N for k in kset):
        raise ValueError("index set outside 0..N")
    cond_mat = e.s_or_zero() if condition_on_deformed else np.zeros((e.N, e.N))
    return _abs_det_stats(e, samples, seed, keep=(kset, cond_mat))


def index_of(matrix, x: float) -> int:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("need a square matrix")
    if np.max(np.abs(m - m.T)) > 1e-10:
        raise ValueError("matrix must be symmetric")
    return int(np.sum(np.linalg.eigvalsh(m) < x))


def interlacing_check(M, s_components, x: float = 0.0) -> dict:
    """Interlacing of eigenvalues along a chain of rank-1 updates.

    s_components is a sequence of (s, vector) pairs; each positive update may
    move every eigenvalue up but not past its upper neighbour, and negative
    updates mirror that downward.  Also reports how far the index at level x
    moved across the whole chain.
    """
    a = np.asarray(M, dtype=float)
    n = a.shape[0]
    tol = 1e-10
    violations = 0
    n_checks = 0
    evs = np.linalg.eigvalsh(a)
    current = a.copy()
    for s, vec in s_components:
        v = np.asarray(vec, dtype=float)
        nxt = current + s * np.outer(v, v)
        evs_next = np.linalg.eigvalsh(nxt)
        for i in range(n):
            n_checks += 1
            if s >= 0:
                lo = evs[i] - tol
                hi = (evs[i + 1] + tol) if i + 1 < n else np.inf
            else:
                hi = evs[i] + tol
                lo = (evs[i - 1] - tol) if i >= 1 else -np.inf
            if not (lo <= evs_next[i] <= hi):
                violations += 1
        current = nxt
        evs = evs_next
    shift = abs(index_of(current, x) - index_of(a, x))
    return {
        "violations": violations,
        "n_checks": n_checks,
        "index_shift": shift,
        "rank": len(tuple(s_components)),
    }


def _default_F(m: int):
    if m == 1:
        return lambda q: math.exp(-q)
    return lambda q: math.exp(-float(np.trace(q)))


def fyodorov_lhs_mc(N: int, m: int, F=None, S=(), samples: int = 100_000,
                    seed=0, alpha: float = 0.0, phase_cap: float = 200.0):
    """Monte-Carlo left side of the rank-r matrix integral identity.

    The integral over m N-vectors of F(Gram matrix) times the oscillatory
    factor exp(-i N sum_i x_i^T S x_i), with S of rank r given by its
    eigenvalue list (axes are immaterial: the Gaussian importance law and
    default F are rotation invariant).  Importance sampling from the
    exp(-|x|^2) envelope; returns (estimate, stderr, diagnostics).
    """
    if m not in (1, 2):
        raise ValueError("only m in {1, 2} supported")
    svals = tuple(float(s) for s in S)
    if len(svals) > 2:
        raise ValueError("S rank must be <= 2")
    scale = N ** (1.0 + alpha)
    phase_scale = 0.5 * scale * max((abs(s) for s in svals), default=0.0)
    if phase_scale > phase_cap:
        raise ValueError(
            f"oscillation scale {phase_scale:.1f} beyond cap; "
            "naive Monte Carlo would return noise"
        )
    if F is None:
        fw = None
    else:
        fw = F
    rng = np.random.default_rng(seed)
    total = 0j
    total2 = 0.0
    chunk = max(1, min(samples, int(2e6 // max(N * m, 1))))
    done = 0
    while done < samples:
        nb = min(chunk, samples - done)
        xs = rng.normal(scale=1.0 / math.sqrt(2.0), size=(nb, m, N))
        phase = np.zeros(nb)
        for j, s in enumerate(svals):
            phase += s * np.sum(xs[:, :, j] ** 2, axis=1)
        vals = np.exp(-1j * scale * phase)
        if fw is not None:
            for idx in range(nb):
                x = xs[idx]
                q = x @ x.T
                qv = float(q[0, 0]) if m == 1 else q
                tr = float(np.trace(np.atleast_2d(q)))
                vals[idx] *= fw(qv) * math.exp(tr)
        total += complex(np.sum(vals))
        total2 += float(np.sum(np.abs(vals) ** 2))
        done += nb
    pref = math.pi ** (0.5 * m * N)
    est = pref * total / samples
    mean_abs2 = total2 / samples
    var = max(mean_abs2 - abs(total / samples) ** 2, 0.0)
    stderr = pref * math.sqrt(var / samples)
    diag = {
        "phase_scale": phase_scale,
        "rel_stderr": stderr / abs(est) if est != 0 else float("inf"),
    }
    return est, stderr, diag


def _haar_overlap_average(N: int, t: float, nodes_cache={},
                          n_nodes: int = 256) -> complex:
    """E exp(-i t beta) with beta ~ Beta(1/2, (N-1)/2): the squared overlap of
    a Haar direction with a fixed axis."""
    key = (N, n_nodes)
    if key not in nodes_cache:
        a = (N - 3) / 2.0
        b = -0.5
        xj, wj = roots_jacobi(n_nodes, a, b)
        beta = (1.0 + xj) / 2.0
        nodes_cache[key] = (beta, wj / np.sum(wj))
    beta, w = nodes_cache[key]
    return complex(np.sum(w * np.exp(-1j * t * beta)))


def fyodorov_rhs_quad(N: int, m: int, F=None, S=(), alpha: float = 0.0,
                      mode: str = "exact", n_outer: int = 128,
                      n_inner: int = 256) -> complex:
    """Right side of the identity: radial/Gram integral with a correction for
    the rank-r deformation.

    mode "exact": finite-N angular average of the oscillatory factor (m=1
    only for nonzero S) making the identity exact.
    mode "asymptotic": product correction prod (1 + 2 i N^alpha Qhat_ii
    s_j)^{-1/2}, the large-N form.
    mode "paper-literal": the same product with the printed coefficient
    (missing factor 2), kept for comparison.
    """
    if m not in (1, 2):
        raise ValueError("only m in {1, 2} supported")
    if mode not in ("exact", "asymptotic", "paper-literal"):
        raise ValueError(f"unknown mode {mode!r}")
    svals = tuple(float(s) for s in S)
    if len(svals) > 2:
        raise ValueError("S rank must be <= 2")
    if mode == "exact" and sum(1 for s in svals if s != 0.0) > 1:
        raise NotImplementedError(
            "exact angular average is rank-1 only; use mode='asymptotic'"
        )
    scale = N ** alpha
    coef = 2.0 if mode == "asymptotic" else 1.0
    if F is None:
        f_outer = None
    else:
        f_outer = F
    if m == 1:
        a = N / 2.0 - 1.0
        q_nodes, q_w = roots_genlaguerre(n_outer, a)
        vals = np.zeros(n_outer, dtype=complex)
        for i, q in enumerate(q_nodes):
            g = 1.0 if f_outer is None else f_outer(float(q)) * math.exp(q)
            corr = 1.0 + 0j
            for s in svals:
                if s == 0.0:
                    continue
                if mode == "exact":
                    corr *= _haar_overlap_average(
                        N, N * scale * s * float(q), n_nodes=n_inner)
                else:
                    corr *= (1.0 + coef * 1j * scale * float(q) * s) ** -0.5
            vals[i] = g * corr
        integral = complex(np.sum(q_w * vals))
        log_pref = 0.5 * N * math.log(math.pi) - gammaln(N / 2.0)
        return math.exp(log_pref) * integral
    # m = 2
    if any(s != 0.0 for s in svals) and mode == "exact":
        raise NotImplementedError(
            "exact angular average for m=2 with nonzero S is not provided; "
            "use mode='asymptotic'"
        )
    a = (N - 2) / 2.0
    q_nodes, q_w = roots_genlaguerre(n_outer, a)
    tj, tw = roots_jacobi(n_outer, (N - 3) / 2.0, (N - 3) / 2.0)
    total = 0j
    for i1, q1 in enumerate(q_nodes):
        for i2, q2 in enumerate(q_nodes):
            inner = 0j
            for k, t in enumerate(tj):
                c = math.sqrt(q1 * q2) * t
                qhat = np.array([[q1, c], [c, q2]])
                g = 1.0 if f_outer is None else (
                    f_outer(qhat) * math.exp(q1 + q2)
                )
                corr = 1.0 + 0j
                for s in svals:
                    if s == 0.0:
                        continue
                    for d in (q1, q2):
                        corr *= (1.0 + coef * 1j * scale * d * s) ** -0.5
                inner += tw[k] * g * corr
            total += q_w[i1] * q_w[i2] * inner
    log_pref = ((N - 0.5) * math.log(math.pi) - gammaln(N / 2.0)
                - gammaln((N - 1) / 2.0))
    return math.exp(log_pref) * total


def y_integral_mc(n: int, beta: float, samples: int, seed=0):
    """Monte-Carlo Vandermonde moment (2 pi)^{n/2} E |y1 - y2|^beta."""
    if n != 2:
        raise ValueError("only n=2 is used")
    rng = np.random.default_rng(seed)
    total = 0.0
    total2 = 0.0
    chunk = 2_000_000
    done = 0
    while done < samples:
        nb = min(chunk, samples - done)
        y = rng.standard_normal((nb, 2))
        d = np.abs(y[:, 0] - y[:, 1]) ** beta
        total += float(np.sum(d))
        total2 += float(np.sum(d * d))
        done += nb
    mean = total / samples
    var = max(total2 / samples - mean * mean, 0.0)
    pref = (2.0 * math.pi) ** (n / 2.0)
    return pref * mean, pref * math.sqrt(var / samples)
