"""Command-line surface.

Each subcommand resolves a RunConfig, writes its delimited outputs (CSV or
JSON) plus rendered SVG figures, and drops a manifest echoing the full
resolved configuration so any run can be reproduced from its output
directory alone.  All writes are atomic (temp file, then rename).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .complexity import (
    band_thresholds,
    e_infinity,
    exact_leading_complexity,
    theta_curves,
)
from .kacrice import (
    KacRiceConfig,
    band_census,
    enumerate_critical_points,
    kacrice_report,
)
from .netprobe import (
    gaussian_data,
    load_idx,
    probe_counts,
    random_mlp,
    variance_scaling_check,
)
from .piecewise import five_piece, hardtanh, relu
from .surrogate import SurrogateSpec, build_surrogate

__all__ = ["RunConfig", "main"]

_FORMATS = ("csv", "json", "svg")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    out_dir: str
    seed: int = 0
    threads: int = 0
    formats: tuple = _FORMATS
    literal_q: bool = False
    appendix_a_xi: bool = False
    literal_chi_denominator: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in ("thresholds", "curves", "exact-term",
                                   "mc-kacrice", "enumerate", "probe",
                                   "selfcheck"):
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        bad = [f for f in self.formats if f not in _FORMATS]
        if bad:
            raise ValueError(f"unknown formats {bad}")
        if self.threads < 0:
            raise ValueError("threads must be nonnegative")

    def wants(self, fmt: str) -> bool:
        return fmt in self.formats


def _atomic_write_bytes(path: Path, blob: bytes):
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def _write_text(path: Path, text: str):
    _atomic_write_bytes(path, text.encode())


def _write_json(path: Path, obj):
    _write_text(path, json.dumps(obj, sort_keys=True, indent=2,
                                 allow_nan=True) + "\n")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def _save_svg(fig, path: Path):
    import io

    import matplotlib
    matplotlib.rcParams["svg.hashsalt"] = "spinscape"
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    _atomic_write_bytes(path, buf.getvalue())


def _new_figure():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


def _manifest(cfg: RunConfig, outputs, extra=None):
    out = Path(cfg.out_dir)
    doc = {
        "version": __version__,
        "command": cfg.subcommand,
        "config": {
            "out_dir": cfg.out_dir,
            "seed": cfg.seed,
            "threads": cfg.threads,
            "formats": list(cfg.formats),
            "literal_q": cfg.literal_q,
            "appendix_a_xi": cfg.appendix_a_xi,
            "literal_chi_denominator": cfg.literal_chi_denominator,
            "params": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in sorted(cfg.params.items())},
        },
        "outputs": sorted(outputs),
    }
    if extra:
        doc["results"] = extra
    name = cfg.subcommand.replace("-", "_") + "_manifest.json"
    _write_json(out / name, doc)
    return out / name


def _parse_rho(text: str):
    return tuple(float(t) for t in text.split(","))


_ACTIVATIONS = {"relu": relu, "hardtanh": hardtanh, "fivepiece": five_piece}


def cmd_thresholds(cfg: RunConfig) -> int:
    H, k_max = cfg.params["H"], cfg.params["kmax"]
    if H < 3:
        raise ValueError("need H >= 3")
    table = band_thresholds(H, k_max)
    out = Path(cfg.out_dir)
    written = []
    if cfg.wants("csv"):
        rows = [(k, e) for k, e in enumerate(table.thresholds)]
        rows.append(("inf", e_infinity(H)))
        _write_csv(out / "thresholds.csv", ["k", "E_k"], rows)
        written.append("thresholds.csv")
    _manifest(cfg, written,
              extra={"E_k": list(table.thresholds),
                     "E_inf": e_infinity(H)})
    return 0


def cmd_curves(cfg: RunConfig) -> int:
    p = cfg.params
    H, k_max = p["H"], p["kmax"]
    if H < 3:
        raise ValueError("need H >= 3")
    if p["points"] < 2:
        raise ValueError("need at least 2 curve points")
    us = np.linspace(p["u_min"], p["u_max"], p["points"])
    rows = theta_curves(H, us, k_max)
    table = band_thresholds(H, k_max)
    out = Path(cfg.out_dir)
    written = []
    header = ["u", "theta_H"] + [f"theta_H{k}" for k in range(k_max + 1)]
    if cfg.wants("csv"):
        _write_csv(out / "curves.csv", header, rows)
        written.append("curves.csv")
    if cfg.wants("svg"):
        plt = _new_figure()
        fig, ax = plt.subplots(figsize=(7, 4.5))
        arr = np.asarray(rows)
        ax.plot(arr[:, 0], arr[:, 1], "k-", lw=2, label="log-density of all")
        for k in range(k_max + 1):
            ax.plot(arr[:, 0], arr[:, 2 + k], lw=1,
                    label=f"index at most {k}")
        for k, e in enumerate(table.thresholds):
            ax.axvline(-e, color="0.7", ls=":", lw=0.8)
            ax.annotate(f"-E{k}", (-e, ax.get_ylim()[0]), fontsize=7,
                        rotation=90, va="bottom")
        ax.axhline(0.5 * math.log(H - 1), color="0.8", ls="--", lw=0.8)
        ax.set_xlabel("level u")
        ax.set_ylabel("growth rate")
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save_svg(fig, out / "curves.svg")
        plt.close(fig)
        written.append("curves.svg")
    _manifest(cfg, written)
    return 0


def cmd_exact_term(cfg: RunConfig) -> int:
    p = cfg.params
    spec = SurrogateSpec(H=p["H"], N=p["N"], rho_l=p["rho"])
    rep = exact_leading_complexity(spec, p["u"],
                                   paper_literal_q=cfg.literal_q)
    out = Path(cfg.out_dir)
    written = []
    if cfg.wants("json"):
        _write_json(out / "exact_term.json", rep.to_dict())
        written.append("exact_term.json")
    _manifest(cfg, written, extra={"log_leading": rep.log_leading})
    return 0


def cmd_mc_kacrice(cfg: RunConfig) -> int:
    p = cfg.params
    spec = SurrogateSpec(H=p["H"], N=p["N"], rho_l=p["rho"])
    kcfg = KacRiceConfig(spec=spec, u=p["u"], nodes=p["nodes"],
                         samples=p["samples"], seed=cfg.seed,
                         lat_nodes=p["lat_nodes"],
                         pole_approx=p["pole_approx"])
    rep = kacrice_report(kcfg)
    agreement = None
    if p["trials"] > 0:
        if p["N"] not in (3, 4):
            raise ValueError("enumerator comparison needs N in {3, 4}")
        counts = []
        for s in range(p["trials"]):
            sample = build_surrogate(spec, seed=(cfg.seed, s))
            res = enumerate_critical_points(sample, p["grid_density"])
            counts.append(len(res.points))
        mean = float(np.mean(counts))
        se = float(np.std(counts, ddof=1) / math.sqrt(len(counts)))
        gap = abs(rep["estimate"] - mean)
        band = 2.0 * math.hypot(rep["stderr"], se)
        agreement = {
            "enumerator_mean": mean,
            "enumerator_stderr": se,
            "trials": p["trials"],
            "gap": gap,
            "two_sigma_band": band,
            "agree": bool(gap <= band),
        }
        rep["enumerator"] = agreement
    out = Path(cfg.out_dir)
    written = []
    if cfg.wants("json"):
        _write_json(out / "kacrice.json", rep)
        written.append("kacrice.json")
    if cfg.wants("svg"):
        plt = _new_figure()
        fig, ax = plt.subplots(figsize=(6, 4))
        nodes = rep["diagnostics"]["nodes"]
        peaks = rep["diagnostics"]["node_peak_log"]
        ax.plot(nodes, peaks, "o-", ms=3)
        ax.set_xlabel("quadrature node")
        ax.set_ylabel("peak log contribution")
        fig.tight_layout()
        _save_svg(fig, out / "kacrice_nodes.svg")
        plt.close(fig)
        written.append("kacrice_nodes.svg")
    _manifest(cfg, written, extra={
        "estimate": rep["estimate"], "stderr": rep["stderr"],
        "agreement": agreement,
    })
    return 0


def cmd_enumerate(cfg: RunConfig) -> int:
    p = cfg.params
    spec = SurrogateSpec(H=p["H"], N=p["N"], rho_l=p["rho"])
    if p["N"] not in (3, 4):
        raise ValueError("enumeration needs N in {3, 4}")
    n_idx = p["N"] - 1
    rows = []
    for s in range(p["trials"]):
        sample = build_surrogate(spec, seed=(cfg.seed, s))
        res = enumerate_critical_points(sample, p["grid_density"])
        ks = [pt.index for pt in res.points]
        euler = sum((-1) ** k for k in ks)
        rows.append([s, len(res.points), euler, res.stable]
                    + [ks.count(i) for i in range(n_idx)])
    out = Path(cfg.out_dir)
    written = []
    header = (["trial", "count", "euler", "stable"]
              + [f"idx{i}" for i in range(n_idx)])
    if cfg.wants("csv"):
        _write_csv(out / "enumerate.csv", header, rows)
        written.append("enumerate.csv")
        census = band_census(min(p["trials"], 10), spec,
                             grid_density=p["grid_density"], seed=cfg.seed)
        _write_csv(out / "band_census.csv",
                   ["band_lo", "band_hi", "index", "count"], census)
        written.append("band_census.csv")
    if cfg.wants("svg"):
        plt = _new_figure()
        fig, ax = plt.subplots(figsize=(6, 4))
        arr = np.asarray([r[4:] for r in rows], dtype=float)
        ax.bar(np.arange(n_idx), arr.mean(axis=0),
               yerr=arr.std(axis=0, ddof=1) / math.sqrt(len(rows))
               if len(rows) > 1 else None)
        ax.set_xlabel("Hessian index")
        ax.set_ylabel("mean count per sample")
        fig.tight_layout()
        _save_svg(fig, out / "enumerate.svg")
        plt.close(fig)
        written.append("enumerate.svg")
    counts = [r[1] for r in rows]
    _manifest(cfg, written, extra={
        "mean_count": float(np.mean(counts)),
        "stderr": (float(np.std(counts, ddof=1) / math.sqrt(len(counts)))
                   if len(counts) > 1 else 0.0),
    })
    return 0


def cmd_probe(cfg: RunConfig) -> int:
    p = cfg.params
    act = _ACTIVATIONS[p["act"]]()
    arch = p["arch"]
    net = random_mlp(arch, act, seed=cfg.seed)
    if p["data"] == "gaussian":
        data = gaussian_data(p["n"], arch[0], seed=cfg.seed + 1)
        desc = f"gaussian n={p['n']} d={arch[0]}"
    elif p["data"].startswith("idx:"):
        data = load_idx(p["data"][4:])
        desc = p["data"]
        if data.shape[1] != arch[0]:
            raise ValueError(
                f"data width {data.shape[1]} does not match input layer "
                f"{arch[0]}")
    else:
        raise ValueError("data must be 'gaussian' or 'idx:PATH'")
    rep = probe_counts(net, data,
                       literal_denominator=cfg.literal_chi_denominator)
    out = Path(cfg.out_dir)
    written = []
    if cfg.wants("json"):
        doc = rep.to_json_dict()
        doc["dataset"] = desc
        _write_json(out / "probe_report.json", doc)
        written.append("probe_report.json")
    if cfg.wants("csv"):
        rows = []
        for j in rep.piece_labels:
            rows.extend(("data_avg", j, v) for v in rep.data_avg[j])
            rows.extend(("neuron_avg", j, v) for v in rep.neuron_avg[j])
        _write_csv(out / "probe_ratios.csv", ["set", "piece", "value"], rows)
        written.append("probe_ratios.csv")
    if cfg.wants("svg"):
        plt = _new_figure()
        n = len(rep.piece_labels)
        fig, axes = plt.subplots(1, n, figsize=(4 * n, 3.2), squeeze=False)
        for ax, j in zip(axes[0], rep.piece_labels):
            edges, counts = rep.neuron_avg_hist[j]
            ax.stairs(counts, edges, fill=True)
            ax.set_xlabel(f"piece {j} occupancy (per datum)")
            ax.set_ylabel("data")
        fig.tight_layout()
        _save_svg(fig, out / "probe_hist.svg")
        plt.close(fig)
        written.append("probe_hist.svg")
    _manifest(cfg, written, extra=rep.to_json_dict())
    return 0


def _selfcheck_cases():
    from numpy.testing import assert_allclose

    from .complexity import h_aux, i1, q_theta, t_of_v_s1, theta_H
    from .piecewise import eval_piecewise, five_piece
    from .rmt import fyodorov_rhs_quad, sample_goe, y_integral_mc
    from .surrogate import covariance_mc

    def piecewise_fixture():
        f = five_piece()
        assert_allclose([eval_piecewise(f, x) for x in (1.0, 2.0, 3.0)],
                        [1.0, 1.3, 1.33], atol=1e-12)

    def plateau():
        assert_allclose(theta_H(20, 0.3), 0.5 * math.log(19.0), rtol=1e-12)

    def i1_value():
        assert_allclose(i1(-2.0, math.sqrt(2.0)), 0.532839975354, atol=1e-9)

    def q_identity():
        for t in np.linspace(0, math.pi, 7):
            assert_allclose(q_theta(t), 1.0, atol=1e-12)

    def h_limit():
        assert_allclose(h_aux(1e9), 2.0, rtol=1e-9)

    def t_reduction():
        assert t_of_v_s1(2.0, 0.0) == 1.0

    def goe_symmetry():
        m = sample_goe(8, seed=1)
        assert np.max(np.abs(m - m.T)) == 0.0

    def fyodorov_exact():
        v = fyodorov_rhs_quad(6, 1, S=())
        assert_allclose(v, math.pi ** 3, rtol=1e-12)

    def y_exact():
        est, se = y_integral_mc(2, 0.0, 10_000, seed=0)
        assert_allclose(est, 2 * math.pi, atol=1e-12)
        assert se == 0.0

    def covariance_pole():
        w = np.zeros(5)
        w[0] = 1.0
        spec = SurrogateSpec(H=3, N=5, rho_l=(0.0, 0.0, 0.0))
        est, se = covariance_mc(spec, w, w, samples=4000, seed=2)
        assert abs(est - 1.0) < 4 * se + 1e-9

    def counting_identity():
        spec = SurrogateSpec(H=3, N=3, rho_l=(0.0, 0.0, 0.0))
        kcfg = KacRiceConfig(spec, u=10.0, nodes=32, samples=600, seed=5)
        rep = kacrice_report(kcfg)
        est, se = rep["estimate"], rep["stderr"]
        counts = []
        for s in range(10):
            sample = build_surrogate(spec, seed=(9, s))
            counts.append(
                len(enumerate_critical_points(sample, 120).points))
        mean = float(np.mean(counts))
        senum = float(np.std(counts, ddof=1) / math.sqrt(len(counts)))
        assert abs(est - mean) <= 3.0 * math.hypot(se, senum)

    return [
        ("piecewise fixture values", piecewise_fixture),
        ("plateau value", plateau),
        ("edge integral value", i1_value),
        ("angular factor identity", q_identity),
        ("auxiliary function limit", h_limit),
        ("rank-1 factor reduction", t_reduction),
        ("ensemble symmetry", goe_symmetry),
        ("matrix integral exact case", fyodorov_exact),
        ("vandermonde moment exact case", y_exact),
        ("covariance at the pole", covariance_pole),
        ("counting identity smoke", counting_identity),
    ]


def cmd_selfcheck(cfg: RunConfig) -> int:
    t0 = time.time()
    results = []
    failed = 0
    for name, fn in _selfcheck_cases():
        try:
            fn()
            results.append({"check": name, "ok": True})
            print(f"ok  {name}")
        except Exception as exc:
            failed += 1
            results.append({"check": name, "ok": False, "error": str(exc)})
            print(f"FAIL {name}: {exc}")
    elapsed = time.time() - t0
    print(f"{len(results) - failed}/{len(results)} checks passed "
          f"in {elapsed:.1f}s")
    _manifest(cfg, [], extra={"checks": results, "elapsed_s": elapsed})
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinscape",
        description="Landscape complexity of spin-glass surrogates: "
                    "thresholds, growth curves, counting identities, "
                    "enumeration, and network piece-occupancy probes.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--out", default=None,
                        help="output directory (default $SPINSCAPE_OUT "
                             "or ./runs)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=0,
                        help="worker cap; results are independent of it")
        sp.add_argument("--formats", default="csv,json,svg",
                        help="comma list from csv,json,svg")
        sp.add_argument("--literal-q", action="store_true",
                        help="printed angular coefficient instead of the "
                             "corrected one")
        sp.add_argument("--appendix-a-xi", action="store_true",
                        help="alternative restated Hessian coefficients")
        sp.add_argument("--literal-chi-denominator", action="store_true",
                        help="first-piece count as the occupancy denominator")

    sp = sub.add_parser("thresholds", help="band threshold table")
    common(sp)
    sp.add_argument("--H", type=int, required=True)
    sp.add_argument("--kmax", type=int, default=3)

    sp = sub.add_parser("curves", help="growth-rate curves")
    common(sp)
    sp.add_argument("--H", type=int, required=True)
    sp.add_argument("--u-min", type=float, default=-2.5)
    sp.add_argument("--u-max", type=float, default=0.5)
    sp.add_argument("--points", type=int, default=301)
    sp.add_argument("--kmax", type=int, default=3)

    sp = sub.add_parser("exact-term", help="sharp leading-order term")
    common(sp)
    sp.add_argument("--H", type=int, required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--rho", type=str, required=True,
                    help="comma list of H deterministic coefficients")
    sp.add_argument("--u", type=float, required=True)

    sp = sub.add_parser("mc-kacrice", help="counting identity estimate")
    common(sp)
    sp.add_argument("--H", type=int, required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--rho", type=str, default=None)
    sp.add_argument("--u", type=float, required=True)
    sp.add_argument("--nodes", type=int, default=64)
    sp.add_argument("--samples", type=int, default=2000)
    sp.add_argument("--trials", type=int, default=0,
                    help="if positive, also enumerate this many surrogates "
                         "and report agreement (N in {3,4})")
    sp.add_argument("--grid-density", type=int, default=200)
    sp.add_argument("--lat-nodes", type=int, default=32,
                    help="latitude quadrature nodes for nonzero rho")
    sp.add_argument("--pole-approx", action="store_true",
                    help="collapse the latitude average onto a single "
                         "representative point (biased for nonzero rho)")

    sp = sub.add_parser("enumerate", help="brute-force critical points")
    common(sp)
    sp.add_argument("--H", type=int, required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--rho", type=str, default=None)
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--grid-density", type=int, default=200)

    sp = sub.add_parser("probe", help="piece-occupancy statistics")
    common(sp)
    sp.add_argument("--arch", type=str, required=True,
                    help="comma list of layer sizes, input first")
    sp.add_argument("--act", choices=sorted(_ACTIVATIONS), default="relu")
    sp.add_argument("--data", type=str, default="gaussian",
                    help="'gaussian' or 'idx:PATH'")
    sp.add_argument("--n", type=int, default=10_000,
                    help="gaussian dataset size")

    sp = sub.add_parser("selfcheck", help="fast invariant suite")
    common(sp)
    return parser


_DISPATCH = {
    "thresholds": cmd_thresholds,
    "curves": cmd_curves,
    "exact-term": cmd_exact_term,
    "mc-kacrice": cmd_mc_kacrice,
    "enumerate": cmd_enumerate,
    "probe": cmd_probe,
    "selfcheck": cmd_selfcheck,
}


def _config_from_args(args) -> RunConfig:
    out_dir = args.out or os.environ.get("SPINSCAPE_OUT", "runs")
    params = {}
    skip = {"subcommand", "out", "seed", "threads", "formats", "literal_q",
            "appendix_a_xi", "literal_chi_denominator"}
    for k, v in vars(args).items():
        if k in skip:
            continue
        params[k] = v
    if "rho" in params:
        if params["rho"] is None:
            h = params["H"]
            params["rho"] = (0.0,) * h
        else:
            params["rho"] = _parse_rho(params["rho"])
    if "arch" in params:
        params["arch"] = tuple(int(s) for s in params["arch"].split(","))
    return RunConfig(
        subcommand=args.subcommand,
        out_dir=out_dir,
        seed=args.seed,
        threads=args.threads,
        formats=tuple(f for f in args.formats.split(",") if f),
        literal_q=args.literal_q,
        appendix_a_xi=args.appendix_a_xi,
        literal_chi_denominator=args.literal_chi_denominator,
        params=params,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        return _DISPATCH[cfg.subcommand](cfg)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
