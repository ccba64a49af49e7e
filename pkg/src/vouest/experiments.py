"""Monte Carlo experiments: ergodic averages, estimator convergence, normality, mixing.

Every experiment simulates ``n_paths`` paths per step size on the largest
horizon and evaluates shorter horizons on prefixes of the same paths (all
quantities involved are causal).  Path ``i`` uses the random stream
``SeedSequence(seed, spawn_key=(i,))`` so that results for the first N paths
do not change when N grows.

Error conventions in the tables:

``bias_rel``
    ``|mean(theta_hat) - theta| / |theta|``, the error of the Monte Carlo mean.
``mae_rel``
    ``mean(|theta_hat - theta|) / |theta|``, the average per-path error.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .calculus import c_alpha, solve_second_kind, stationary_moments, z_values
from .errors import ConfigError, DegeneratePathError, UsageError
from .estimators import (fisher_information, mle_batch, mom_error_predictor, mom_from_moments,
                         time_moments)
from .kernels import Fractional, KernelSpec, first_kind_resolvent, kernel_from_dict
from .simulate import SCHEMES, VouParams, simulate_batch

EXPERIMENTS = ("lln", "convergence", "normality", "mixing", "strong")
ESTIMATORS = ("MLE", "MLE_known_b", "MLE_known_beta", "MoM")
SEED_RULE = "path i <- PCG64(SeedSequence(seed, spawn_key=(i,)))"


@dataclass
class ExperimentConfig:
    experiment: str = "convergence"
    kernel: KernelSpec = field(default_factory=lambda: Fractional(0.75))
    params: VouParams = field(default_factory=VouParams)
    scheme: str = "euler"
    horizons: list = field(default_factory=lambda: [200.0])
    dts: list = field(default_factory=lambda: [0.2])
    n_paths: int = 200
    seed: int = 20261017
    estimators: list = field(default_factory=lambda: ["MLE"])
    parameter_grid: list | None = None
    z_rule: str = "scheme"
    z_terminal: str = "fine"
    fine_ratio: int = 1
    lags: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 5.0, 10.0, 20.0])
    kappa: float = 0.5
    schedule: str = "power"
    n_seeds: int = 10
    preset: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: expected one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme: expected one of {SCHEMES}, got {self.scheme!r}")
        if int(self.n_paths) < 2:
            raise ConfigError("n_paths: need at least 2 paths")
        hs = [float(h) for h in self.horizons]
        if not hs or any(h <= 0 for h in hs) or any(b <= a for a, b in zip(hs, hs[1:])):
            raise ConfigError("horizons: must be positive and strictly increasing")
        if not self.dts or any(float(d) <= 0 for d in self.dts):
            raise ConfigError("dts: step sizes must be positive")
        for d in self.dts:
            for h in hs:
                k = h / d
                if abs(k - round(k)) > 1e-9 * k:
                    raise ConfigError(f"dts: horizon {h} is not a multiple of step {d}")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"estimators: unknown {bad}; expected a subset of {ESTIMATORS}")
        if "MoM" in self.estimators and not isinstance(self.kernel, Fractional):
            raise ConfigError("estimators: MoM needs a fractional kernel")
        if self.z_rule not in ("scheme", "product", "euler"):
            raise ConfigError("z_rule: expected 'scheme', 'product' or 'euler'")
        if self.z_terminal not in ("fine", "coarse"):
            raise ConfigError("z_terminal: expected 'fine' or 'coarse'")
        if int(self.fine_ratio) < 1:
            raise ConfigError("fine_ratio: must be a positive integer")
        if self.schedule not in ("power", "geometric"):
            raise ConfigError("schedule: expected 'power' or 'geometric'")
        self.horizons = hs
        self.dts = [float(d) for d in self.dts]
        self.n_paths = int(self.n_paths)
        self.fine_ratio = int(self.fine_ratio)
        return self

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("kernel", "params")}
        d["kernel"] = self.kernel.to_dict()
        d["params"] = self.params.to_dict()
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        if "kernel" in obj:
            try:
                obj["kernel"] = kernel_from_dict(obj["kernel"])
            except ValueError as exc:
                raise ConfigError(f"kernel: {exc}") from exc
        if "params" in obj:
            p = obj["params"]
            missing = [k for k in ("b", "beta", "sigma", "x0") if k not in p]
            if missing:
                raise ConfigError(f"params: missing field(s) {missing}")
            try:
                obj["params"] = VouParams(float(p["b"]), float(p["beta"]), float(p["sigma"]), float(p["x0"]))
            except ValueError as exc:
                raise ConfigError(f"params: {exc}") from exc
        return cls(**obj).validate()


@dataclass
class ExperimentReport:
    name: str
    config: dict
    rows: list = field(default_factory=list)
    blocks: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    runtime: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        if not self.rows:
            return ""
        cols = list(self.rows[0])
        for r in self.rows[1:]:
            cols += [c for c in r if c not in cols]
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"experiment": self.name, "config": self.config, "seed_rule": SEED_RULE,
                "checks": self.checks, "blocks": _jsonable(self.blocks)}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------

def _z_rule(cfg: ExperimentConfig) -> str:
    if cfg.z_rule == "scheme":
        return "euler" if cfg.scheme == "euler" else "product"
    return cfg.z_rule


def _simulate(cfg: ExperimentConfig, dt: float, T: float, params: VouParams | None = None):
    """Paths on the fine grid dt / fine_ratio up to T; returns (fine values, fine step)."""
    params = params or cfg.params
    r = cfg.fine_ratio
    h = dt / r
    n = int(round(T / h))
    batch = simulate_batch(cfg.scheme, cfg.kernel, params, n, T, cfg.seed, cfg.n_paths)
    return batch.values, h


def _coarse_and_z(cfg: ExperimentConfig, fine: np.ndarray, h: float, T: float, x0: float):
    """Coarse observations, Z at coarse points (fine-grid sums) and coarse-grid Z."""
    r = cfg.fine_ratio
    L = first_kind_resolvent(cfg.kernel, h, T, rule=_z_rule(cfg))
    z_fine = z_values(fine, x0, L)[:, ::r]
    x = fine[:, ::r]
    if r == 1:
        return x, z_fine, z_fine
    Lc = first_kind_resolvent(cfg.kernel, h * r, T, rule=_z_rule(cfg))
    return x, z_fine, z_values(x, x0, Lc)


def _stat_row(prefix: str, values: np.ndarray, truth: float) -> dict:
    v = values[np.isfinite(values)]
    n = max(v.size, 1)
    scale = abs(truth) if truth != 0 else 1.0
    mean = float(np.mean(v)) if v.size else float("nan")
    sd = float(np.std(v, ddof=1)) if v.size > 1 else float("nan")
    err = np.abs(v - truth) / scale
    return {f"{prefix}_mean": mean, f"{prefix}_sd": sd, f"{prefix}_se": sd / math.sqrt(n),
            f"{prefix}_bias_rel": abs(mean - truth) / scale,
            f"{prefix}_mae_rel": float(np.mean(err)) if v.size else float("nan"),
            f"{prefix}_mae_rel_se": float(np.std(err, ddof=1)) / math.sqrt(n) if v.size > 1 else float("nan")}


def _moments_target(cfg: ExperimentConfig, params: VouParams | None = None):
    params = params or cfg.params
    return stationary_moments(cfg.kernel, params.b, params.beta, params.sigma, params.x0)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_lln(cfg: ExperimentConfig) -> ExperimentReport:
    """Time averages m1(T), m2(T) against the stationary moments."""
    cfg.validate()
    t0 = time.perf_counter()
    mom = _moments_target(cfg)
    rep = ExperimentReport("lln", cfg.to_dict())
    for dt in cfg.dts:
        fine, h = _simulate(cfg, dt, cfg.horizons[-1])
        x = fine[:, :: cfg.fine_ratio]
        for T in cfg.horizons:
            k = int(round(T / dt))
            m1, m2 = time_moments(x[:, : k + 1])
            row = {"T": T, "dt": dt, "n_paths": cfg.n_paths, "seed": cfg.seed}
            row.update(_stat_row("m1", m1, mom.m1))
            row.update(_stat_row("m2", m2, mom.m2))
            row["m1_l2_dev"] = float(np.sqrt(np.mean((m1 - mom.m1) ** 2)))
            row["m2_l2_dev"] = float(np.sqrt(np.mean((m2 - mom.m2) ** 2)))
            row["m1_target"], row["m2_target"] = mom.m1, mom.m2
            rep.rows.append(row)
    rep.runtime = time.perf_counter() - t0
    return rep


def _estimates(cfg, name, x, z, zc, dt, params, alpha=None):
    """Per-path estimates (b_hat, beta_hat) for one estimator."""
    if name == "MLE":
        zT = None if cfg.z_terminal == "fine" else zc[:, -1] - zc[:, 0]
        b, beta, _ = mle_batch(x, z, dt, zT)
        return b, beta
    n = x.shape[1] - 1
    T = n * dt
    xl = x[:, :-1]
    S1 = dt * xl.sum(axis=1)
    S2 = dt * (xl * xl).sum(axis=1)
    SZ = (xl * np.diff(z, axis=1)).sum(axis=1)
    zT = z[:, -1] - z[:, 0]
    if name == "MLE_known_beta":
        return zT / T - params.beta * S1 / T, np.full(x.shape[0], params.beta)
    if name == "MLE_known_b":
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(S2 > 0, (SZ - params.b * S1) / S2, np.nan)
        return np.full(x.shape[0], params.b), beta
    m1, m2 = time_moments(x)
    return mom_from_moments(m1, m2, alpha, params.sigma)


def run_estimator_convergence(cfg: ExperimentConfig) -> ExperimentReport:
    cfg.validate()
    t0 = time.perf_counter()
    rep = ExperimentReport("convergence", cfg.to_dict())
    grid = cfg.parameter_grid or [[cfg.params.b, cfg.params.beta]]
    for b, beta in grid:
        params = replace(cfg.params, b=float(b), beta=float(beta))
        mom = _moments_target(cfg, params)
        for dt in cfg.dts:
            fine, h = _simulate(cfg, dt, cfg.horizons[-1], params)
            x_all, z_all, zc_all = _coarse_and_z(cfg, fine, h, cfg.horizons[-1], params.x0)
            for T in cfg.horizons:
                k = int(round(T / dt))
                x, z, zc = x_all[:, : k + 1], z_all[:, : k + 1], zc_all[:, : k + 1]
                for name in cfg.estimators:
                    try:
                        bh, beh = _estimates(cfg, name, x, z, zc, dt, params,
                                             getattr(cfg.kernel, "alpha", None))
                        failures = int(np.sum(~np.isfinite(bh) | ~np.isfinite(beh)))
                    except DegeneratePathError:
                        bh = beh = np.full(x.shape[0], np.nan)
                        failures = x.shape[0]
                    row = {"b": params.b, "beta": params.beta, "T": T, "dt": dt, "n": k,
                           "m": k * cfg.fine_ratio, "estimator": name, "n_paths": cfg.n_paths,
                           "failures": failures, "seed": cfg.seed}
                    row.update(_stat_row("b_hat", bh, params.b))
                    row.update(_stat_row("beta_hat", beh, params.beta))
                    if name == "MoM":
                        m1, m2 = time_moments(x)
                        delta = abs(float(np.mean(m2)) - mom.m2)
                        row["m1_rel_err"] = abs(float(np.mean(m1)) - mom.m1) / abs(mom.m1)
                        row["m2_rel_err"] = delta / mom.m2
                        row["predicted_beta_rel_err"] = mom_error_predictor(cfg.kernel.alpha, mom.m1, mom.m2, delta)
                    rep.rows.append(row)
    rep.runtime = time.perf_counter() - t0
    return rep


def run_normality(cfg: ExperimentConfig) -> ExperimentReport:
    """Standardized sqrt(T)(theta_hat - theta) at the last horizon and first step size."""
    cfg.validate()
    t0 = time.perf_counter()
    p = cfg.params
    T, dt = cfg.horizons[-1], cfg.dts[0]
    mom = _moments_target(cfg)
    fi = fisher_information(mom, p.sigma)
    fine, h = _simulate(cfg, dt, T)
    x, z, zc = _coarse_and_z(cfg, fine, h, T, p.x0)
    bh, beh = _estimates(cfg, "MLE", x, z, zc, dt, p)
    ok = np.isfinite(bh) & np.isfinite(beh)
    u = math.sqrt(T) * np.column_stack([bh[ok] - p.b, beh[ok] - p.beta])
    std = u @ fi.sqrt.T / p.sigma
    rep = ExperimentReport("normality", cfg.to_dict())
    ks = []
    for j, label in enumerate(("b", "beta")):
        res = stats.kstest(std[:, j], "norm", method="exact")
        ks.append(float(res.pvalue))
        rep.rows.append({"coordinate": label, "T": T, "dt": dt, "n_paths": int(ok.sum()),
                         "mean": float(std[:, j].mean()), "sd": float(std[:, j].std(ddof=1)),
                         "ks_statistic": float(res.statistic), "ks_pvalue": float(res.pvalue),
                         "seed": cfg.seed})
    emp = np.cov(u, rowvar=False)
    theo = fi.asymptotic_cov
    scale = np.sqrt(np.outer(np.diag(theo), np.diag(theo)))
    rel = np.abs(emp - theo) / scale
    kb, _ = _estimates(cfg, "MLE_known_beta", x, z, zc, dt, p)
    _, kbeta = _estimates(cfg, "MLE_known_b", x, z, zc, dt, p)
    var_b = float(np.var(math.sqrt(T) * (kb - p.b), ddof=1))
    var_beta = float(np.nanvar(math.sqrt(T) * (kbeta - p.beta), ddof=1))
    rep.blocks = {
        "standardized": std, "ks_pvalues": ks,
        "empirical_cov": emp, "theoretical_cov": theo, "cov_rel_dev": rel,
        "cov_max_rel_dev": float(rel.max()), "fisher": fi.matrix,
        "known_beta_var": var_b, "known_beta_target": p.sigma ** 2,
        "known_b_var": var_beta, "known_b_target": p.sigma ** 2 / mom.m2,
        "failures": int((~ok).sum()),
    }
    rep.runtime = time.perf_counter() - t0
    return rep


def stationary_autocovariance(kernel: KernelSpec, beta: float, sigma: float, lags, h: float = 0.01,
                              horizon: float = 400.0) -> np.ndarray:
    """sigma^2 int_0^inf E(lag + r) E(r) dr, truncated at ``horizon``."""
    lags = np.atleast_1d(np.asarray(lags, dtype=np.float64))
    top = horizon + float(lags.max())
    res = solve_second_kind(kernel, beta, h, top)
    nh = int(round(horizon / h))
    cellE = res.cell_integrals()[:nh]
    sq = res.cell_square_integrals()[:nh]
    out = np.empty(lags.shape[0])
    for i, lag in enumerate(lags):
        s = int(round(lag / h))
        if abs(s * h - lag) > 1e-9 * max(lag, 1.0):
            raise UsageError("lags must be multiples of the quadrature step")
        if s == 0:
            out[i] = sigma ** 2 * np.sum(sq)
        else:
            out[i] = sigma ** 2 * np.sum(cellE * 0.5 * (res.values[s:s + nh] + res.values[s + 1:s + nh + 1]))
    return out


def run_mixing_decay(cfg: ExperimentConfig) -> ExperimentReport:
    """Empirical cov(f(X_0), g(X_h)) of the stationary process for f, g in {x, x^2}."""
    cfg.validate()
    if cfg.scheme != "stationary":
        raise ConfigError("scheme: the mixing experiment needs the stationary scheme")
    t0 = time.perf_counter()
    p = cfg.params
    dt = cfg.dts[0]
    lags = [float(l) for l in cfg.lags]
    T = max(cfg.horizons[-1], max(lags))
    n = int(round(T / dt))
    batch = simulate_batch("stationary", cfg.kernel, p, n, T, cfg.seed, cfg.n_paths)
    X = batch.values
    analytic = stationary_autocovariance(cfg.kernel, p.beta, p.sigma, lags)
    rep = ExperimentReport("mixing", cfg.to_dict())
    funcs = {"x": lambda v: v, "x2": lambda v: v * v}
    for i, lag in enumerate(lags):
        k = int(round(lag / dt))
        for fn, f in funcs.items():
            for gn, g in funcs.items():
                a = f(X[:, 0])
                c = g(X[:, k])
                prod = (a - a.mean()) * (c - c.mean())
                cov = float(prod.sum() / (len(a) - 1))
                se = float(prod.std(ddof=1) / math.sqrt(len(a)))
                row = {"lag": lag, "f": fn, "g": gn, "cov": cov, "se": se, "n_paths": len(a),
                       "analytic": float(analytic[i]) if fn == gn == "x" else float("nan"),
                       "seed": cfg.seed}
                rep.rows.append(row)
    rep.blocks = {"analytic_lags": lags, "analytic_cov": analytic,
                  "analytic_monotone": bool(np.all(np.diff(analytic) <= 1e-15)),
                  "burn_in": batch.meta.get("burn_in"), "burn_in_ok": batch.meta.get("burn_in_ok")}
    rep.runtime = time.perf_counter() - t0
    return rep


def summability(kappa: float | None, p: float, n_terms: int = 100000, q: float | None = None) -> dict:
    """Partial sums of |1 - T_n / T_{n+1}|^p for T_n = n^kappa or T_n = q^n."""
    n = np.arange(1, n_terms + 1, dtype=np.float64)
    if q is not None:
        terms = np.full_like(n, abs(1.0 - 1.0 / q) ** p)
    else:
        terms = np.abs(-np.expm1(kappa * np.log(n / (n + 1.0)))) ** p
    partial = np.cumsum(terms)
    head, tail = partial[n_terms // 2 - 1], partial[-1]
    # the remaining sum beyond N behaves like N^(1 - kappa p) for power schedules
    converges = q is None and kappa * p > 1.0
    return {"partial_sum": float(tail), "half_sum": float(head), "last_term": float(terms[-1]),
            "converges": bool(converges and (tail - head) < 1e-2 * max(tail, 1e-300) + 1e-6)}


def run_strong_consistency_demo(cfg: ExperimentConfig, kappa: float | None = None, p: float = 4.0,
                                q: float | None = None) -> ExperimentReport:
    """MLE along T_n = n^kappa (or q^n, rejected) for ``n_seeds`` single paths."""
    cfg.validate()
    kappa = cfg.kappa if kappa is None else kappa
    if cfg.schedule == "geometric" and q is None:
        q = 2.0
    summ = summability(kappa, p, q=q if cfg.schedule == "geometric" or q is not None else None)
    rep = ExperimentReport("strong", cfg.to_dict())
    rep.blocks["summability"] = summ
    if not summ["converges"]:
        rep.blocks["rejected"] = ("schedule violates sum |1 - T_n/T_{n+1}|^p < inf; "
                                  "use T_n = n^kappa with kappa p > 1")
        return rep
    t0 = time.perf_counter()
    dt, T = cfg.dts[0], cfg.horizons[-1]
    par = cfg.params
    n_max = int(math.floor(T ** (1.0 / kappa)))
    Tn = np.unique(np.round(np.arange(1, n_max + 1) ** kappa / dt).astype(int))
    Tn = Tn[Tn >= 10]
    sub = replace(cfg, n_paths=2)
    band_ok = []
    for s in range(cfg.n_seeds):
        sub.seed = cfg.seed + s
        fine, h = _simulate(sub, dt, T)
        x, z, zc = _coarse_and_z(sub, fine[:1], h, T, par.x0)
        traj = []
        for k in Tn:
            b, beta, _ = mle_batch(x[:, : k + 1], z[:, : k + 1], dt)
            traj.append(float(beta[0]))
            rep.rows.append({"seed": sub.seed, "T_n": k * dt, "b_hat": float(b[0]), "beta_hat": float(beta[0])})
        traj = np.array(traj)
        late = traj[Tn * dt >= min(200.0, T)]
        band_ok.append(bool(late.size and np.all(np.abs(late / par.beta - 1.0) <= 0.1)))
    rep.blocks["within_band_after_200"] = band_ok
    rep.runtime = time.perf_counter() - t0
    return rep


RUNNERS = {"lln": run_lln, "convergence": run_estimator_convergence, "normality": run_normality,
           "mixing": run_mixing_decay, "strong": run_strong_consistency_demo}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[cfg.experiment](cfg)


def write_report(rep: ExperimentReport, out_dir, stem: str | None = None) -> list:
    """Write ``<stem>.csv`` and ``<stem>.json``; return the paths."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or rep.name
    paths = []
    csv_path = out / f"{stem}.csv"
    csv_path.write_text(rep.to_csv(), newline="")
    paths.append(csv_path)
    json_path = out / f"{stem}.json"
    json_path.write_text(json.dumps(rep.summary(), indent=2, sort_keys=True))
    paths.append(json_path)
    return paths
