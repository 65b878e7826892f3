"""Config-driven experiment runner.

An experiment is a flat dotted-key document (JSON object or ``key = value``
lines).  Any sweepable key whose value is a list defines a sweep axis; the
runner executes the cartesian product of all axes, derives one seed per cell
from the master seed and the cell's own coordinates, and writes one CSV row
per (cell, metric).
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import distributions as dists
from . import metrics as met
from . import samplers as smp
from . import score_models as scm
from .errors import ConfigError
from .samplers import GaussianLaw, SamplerConfig
from .schedules import (
    VarianceSchedule,
    build_exp_decreasing_grid,
    build_uniform_grid,
    check_step_condition,
    schedule_functionals,
)

CSV_COLUMNS = [
    "scheme", "schedule_kind", "alpha", "grid_kind", "N", "c", "d", "delta",
    "T", "eps0", "score_kind", "metric", "value", "stderr", "predicted_bound",
    "seed",
]

SWEEP_KEYS = [
    "sampler.scheme", "schedule.kind", "schedule.alpha", "grid.kind", "grid.N",
    "grid.c", "grid.delta", "grid.T", "dist.preset", "dist.d", "dist.mu",
    "score.eps0", "score.n_fit", "extra.L", "extra.sigma_sq",
]

DEFAULTS = {
    "schedule.kind": "constant",
    "schedule.alpha": None,
    "grid.kind": "uniform",
    "grid.delta": 0.0,
    "grid.T": 8.0,
    "grid.N": None,
    "grid.c": None,
    "grid.floor": None,
    "dist.preset": "standard_gaussian",
    "dist.d": 2,
    "dist.mu": 0.0,
    "dist.scale": 1.0,
    "score.kind": "exact",
    "score.eps0": 0.0,
    "score.policy": "uniform",
    "score.n_fit": 1000,
    "score.seed": 0,
    "sampler.scheme": "ei",
    "sampler.n_samples": 1000,
    "sampler.rescale": False,
    "sampler.reference_refine": 32,
    "extra.K": 2.0,
    "extra.L": None,
    "extra.sigma_sq": None,
    "extra.n_mc": 100_000,
    "metrics": ["kl_affine"],
    "seed": 0,
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep specification: a flat dotted-key config with list-valued axes."""

    config: dict

    def __post_init__(self):
        cfg = {**DEFAULTS, **self.config}
        object.__setattr__(self, "config", cfg)
        unknown = set(cfg) - set(DEFAULTS) - {"out"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def axes(self) -> dict:
        return {
            k: self.config[k]
            for k in SWEEP_KEYS
            if isinstance(self.config[k], (list, tuple))
        }

    def cells(self):
        """Yield resolved per-cell configs, deduplicating canonical keys."""
        axes = self.axes()
        names = list(axes)
        seen = set()
        for combo in itertools.product(*(axes[k] for k in names)):
            cell = dict(self.config)
            cell.update(dict(zip(names, combo)))
            cell = _resolve_cell(cell)
            key = cell_key(cell)
            if key in seen:
                continue
            seen.add(key)
            yield cell


def _resolve_cell(cell: dict) -> dict:
    """Normalize a cell config so that its canonical key drops inert axes."""
    cell = dict(cell)
    if cell["grid.N"] == "threshold":
        # The threshold step count is defined by the power/uniform pairing;
        # with an exp-decreasing grid the analogue is the constant-g schedule
        # parameterized by c directly.
        if cell["grid.kind"] == "uniform":
            cell["schedule.kind"] = "power"
        else:
            cell["grid.N"] = None
            cell["schedule.kind"] = "constant"
    if cell["schedule.kind"] == "constant":
        cell["schedule.alpha"] = None
    if cell["grid.kind"] == "uniform":
        cell["grid.c"] = None
        cell["grid.floor"] = None
    return cell


def cell_key(cell: dict) -> str:
    """Canonical identity of a cell: the settings that define its outcome."""
    keys = sorted(k for k in cell if k not in ("out", "metrics"))
    return json.dumps({k: cell[k] for k in keys}, sort_keys=True)


def cell_seed(master_seed: int, cell: dict) -> int:
    """Stable per-cell seed from the master seed and the cell's own key."""
    digest = hashlib.sha256(f"{master_seed}|{cell_key(cell)}".encode()).hexdigest()
    return int(digest[:12], 16)


# -- per-cell object construction ----------------------------------------


def build_schedule(cell: dict) -> VarianceSchedule:
    return VarianceSchedule(cell["schedule.kind"], cell["schedule.alpha"])


def threshold_steps(cell: dict, schedule: VarianceSchedule) -> int:
    """Smallest N meeting the step condition for the power/uniform setting."""
    alpha = cell["schedule.alpha"]
    delta, horizon = cell["grid.delta"], cell["grid.T"]
    d = cell["dist.d"]
    g_total = schedule.big_g(horizon)
    g_delta = schedule.big_g(delta)
    p = 2 * alpha + 1
    return max(int(math.ceil(cell["extra.K"] * d * p * g_total / g_delta ** (1 / p))), 1)


def build_grid(cell: dict, schedule: VarianceSchedule):
    kind = cell["grid.kind"]
    delta, horizon = cell["grid.delta"], cell["grid.T"]
    if kind == "uniform":
        n = cell["grid.N"]
        if n == "threshold":
            n = threshold_steps(cell, schedule)
        if n is None:
            raise ConfigError("uniform grid needs grid.N")
        return build_uniform_grid(delta, horizon, int(n)), None
    if kind == "exp_decreasing":
        c = cell["grid.c"]
        if c is None:
            # Solve step count ~ (log(1/delta) + T) / c for the requested N.
            n = cell["grid.N"]
            if n is None:
                raise ConfigError("exp_decreasing grid needs grid.c or grid.N")
            c = (math.log(1.0 / delta) + (horizon - 1.0)) / int(n)
            c = min(c, 0.5)
        return build_exp_decreasing_grid(delta, horizon, c, cell["grid.floor"]), c
    raise ConfigError(f"unknown grid kind {kind!r}")


def build_distribution(cell: dict) -> dists.GaussianMixture:
    preset = cell["dist.preset"]
    d = int(cell["dist.d"])
    mu = float(cell["dist.mu"])
    scale = float(cell["dist.scale"])
    if preset == "standard_gaussian":
        return dists.standard_gaussian(d)
    if preset == "gaussian":
        mean = np.zeros(d)
        mean[0] = mu
        return dists.single_gaussian(mean, scale * np.eye(d))
    if preset == "point_mass":
        mean = np.zeros(d)
        mean[0] = mu
        return dists.point_mass(mean)
    if preset == "two_point":
        return dists.two_point(d, mu)
    if preset in ("two_component", "three_component"):
        return dists.gmm_preset(preset, d)
    raise ConfigError(f"unknown distribution preset {preset!r}")


def build_score_model(cell: dict, dist, schedule, grid):
    kind = cell["score.kind"]
    exact = scm.ExactScore(dist, schedule, grid)
    if kind == "exact":
        return exact
    if kind == "perturbed":
        return scm.make_perturbed(exact, float(cell["score.eps0"]), cell["score.policy"])
    if kind == "dsm_affine":
        return scm.fit_dsm_affine(
            dist, grid, schedule, int(cell["score.n_fit"]), int(cell["score.seed"])
        )
    raise ConfigError(f"unknown score kind {kind!r}")


# -- metric evaluators ----------------------------------------------------


def _target_law(dist, schedule, t: float) -> GaussianLaw:
    if dist.n_components != 1:
        raise ConfigError("exact-KL pathway needs single-Gaussian data")
    a = schedule.alpha_coef(0.0, t)
    s2 = schedule.sigma_sq(t)
    return GaussianLaw(a * dist.means[0], a ** 2 * dist.covs[0] + s2 * np.eye(dist.dim))


def _predicted_kl(cell, dist, schedule, grid, scheme) -> float:
    params = {
        "m2": dist.second_moment(),
        "d": dist.dim,
        "g_total": schedule.big_g(grid.horizon),
        "eps0_sq": float(cell["score.eps0"]) ** 2,
    }
    fns = schedule_functionals(grid, schedule)
    params["pi2"] = fns.pi2
    params["pi3"] = fns.pi3
    if grid.delta > 0:
        params["pi"] = fns.pi
        return met.theoretical_bound(f"general_{scheme}", params)
    eigs = np.linalg.eigvalsh(dist.covs[0])
    params["lip"] = 1.0 / float(eigs.min()) if eigs.min() > 0 else float("nan")
    return met.theoretical_bound(f"smooth_{scheme}", params)


def eval_kl_affine(cell, seed):
    schedule = build_schedule(cell)
    grid, _ = build_grid(cell, schedule)
    dist = build_distribution(cell)
    model = build_score_model(cell, dist, schedule, grid)
    cfg = SamplerConfig(cell["sampler.scheme"], grid, schedule, model, seed, 1)
    law = smp.propagate_affine_law(cfg)
    target = _target_law(dist, schedule, grid.delta)
    value = met.kl_gaussian(target, law)
    predicted = _predicted_kl(cell, dist, schedule, grid, cell["sampler.scheme"])
    return value, 0.0, predicted


def eval_sliced_w2_ref(cell, seed):
    schedule = build_schedule(cell)
    grid, _ = build_grid(cell, schedule)
    dist = build_distribution(cell)
    model = build_score_model(cell, dist, schedule, grid)
    n = int(cell["sampler.n_samples"])
    cfg = SamplerConfig(cell["sampler.scheme"], grid, schedule, model, seed, n)
    samples = smp.run_chain(cfg)
    exact = scm.ExactScore(dist, schedule, grid)
    ref_cfg = SamplerConfig(
        cell["sampler.scheme"], grid, schedule, exact, seed + 0x5EED, n
    )
    ref = smp.reference_chain(ref_cfg, int(cell["sampler.reference_refine"]))
    value, stderr = met.sliced_w2(samples, ref, seed=seed + 1)
    return value, stderr, float("nan")


def eval_sliced_w2_target(cell, seed):
    schedule = build_schedule(cell)
    grid, _ = build_grid(cell, schedule)
    dist = build_distribution(cell)
    model = build_score_model(cell, dist, schedule, grid)
    n = int(cell["sampler.n_samples"])
    cfg = SamplerConfig(cell["sampler.scheme"], grid, schedule, model, seed, n)
    samples = smp.run_chain(cfg)
    if cell["sampler.rescale"]:
        samples = smp.rescale_output(samples, grid.delta, schedule)
        target = dist.sample(n, np.random.default_rng(seed + 7))
    else:
        target = dists.sample_forward(dist, schedule, grid.delta, n, seed + 7)
    value, stderr = met.sliced_w2(samples, target, seed=seed + 1)
    return value, stderr, float("nan")


def eval_forward_kl(cell, seed):
    schedule = build_schedule(cell)
    dist = build_distribution(cell)
    horizon = float(cell["grid.T"])
    marginal = dists.forward_marginal(dist, schedule, horizon)
    value, stderr = dists.kl_to_standard_gaussian(
        marginal, n_mc=int(cell["extra.n_mc"]), seed=seed
    )
    predicted = (dist.dim + dist.second_moment()) * math.exp(-schedule.big_g(horizon))
    return value, stderr, predicted


def eval_weighted_score_error(cell, seed):
    schedule = build_schedule(cell)
    grid, _ = build_grid(cell, schedule)
    dist = build_distribution(cell)
    model = build_score_model(cell, dist, schedule, grid)
    exact = scm.ExactScore(dist, schedule, grid)
    value, stderr = scm.weighted_score_error(model, exact, n_mc=4000, seed=seed)
    return value, stderr, float(cell["score.eps0"]) ** 2


def eval_pi(cell, seed):
    schedule = build_schedule(cell)
    grid, c = build_grid(cell, schedule)
    fns = schedule_functionals(grid, schedule)
    delta, horizon = grid.delta, grid.horizon
    g_total = schedule.big_g(horizon)
    if cell["grid.kind"] == "exp_decreasing":
        predicted = c * (math.log(1.0 / delta) + horizon)
    else:
        p = 2 * cell["schedule.alpha"] + 1
        g_delta = schedule.big_g(delta)
        predicted = (p ** 2 * g_delta ** (-1.0 / p) * g_total + g_total ** 2) / grid.n_steps
    return fns.pi, 0.0, predicted


def eval_step_condition(cell, seed):
    schedule = build_schedule(cell)
    grid, _ = build_grid(cell, schedule)
    _, worst = check_step_condition(grid, schedule, int(cell["dist.d"]), cell["extra.K"])
    return worst, 0.0, 1.0 / (cell["extra.K"] * cell["dist.d"])


def eval_hessian_subexp(cell, seed):
    dist = build_distribution(cell)
    sigma_sq = float(cell["extra.sigma_sq"])
    d = dist.dim
    # p_sigma: the mixture's atoms smoothed at scale sigma^2 exactly, so the
    # d / sigma^2 tail prediction is not masked by the component covariances.
    covs = np.broadcast_to(sigma_sq * np.eye(d), dist.covs.shape).copy()
    perturbed = dists.GaussianMixture(dist.weights, dist.means, covs)
    rng = np.random.default_rng(seed)
    x = perturbed.sample(int(cell["extra.n_mc"]), rng)
    hess = perturbed.hessian_log_density(x)
    fro = np.sqrt(np.sum(hess ** 2, axis=(1, 2)))
    return met.subexp_norm_proxy(fro), 0.0, d / sigma_sq


def eval_lipschitz_ratio(cell, seed):
    lip = float(cell["extra.L"])
    schedule = build_schedule(cell)
    d = int(cell["dist.d"])
    cov = np.eye(d)
    cov[0, 0] = 1.0 / lip  # smallest eigenvalue 1/L
    dist = dists.single_gaussian(np.zeros(d), cov)
    # 50 times in the low-noise window sigma_t^2 <= alpha_t / (2L).
    ratios = []
    t = 1e-6
    while len(ratios) < 50:
        a = schedule.alpha_coef(0.0, t)
        if schedule.sigma_sq(t) > a / (2 * lip):
            break
        cov_t = a ** 2 * cov + schedule.sigma_sq(t) * np.eye(d)
        opnorm = 1.0 / float(np.linalg.eigvalsh(cov_t).min())
        ratios.append(opnorm / (2 * lip / a))
        t *= 1.25
    if not ratios:
        raise ConfigError("no times satisfy the low-noise condition")
    return float(max(ratios)), 0.0, 1.0


METRIC_EVALUATORS = {
    "kl_affine": eval_kl_affine,
    "sliced_w2_ref": eval_sliced_w2_ref,
    "sliced_w2_target": eval_sliced_w2_target,
    "forward_kl": eval_forward_kl,
    "weighted_score_error": eval_weighted_score_error,
    "pi": eval_pi,
    "step_condition": eval_step_condition,
    "hessian_subexp": eval_hessian_subexp,
    "lipschitz_ratio": eval_lipschitz_ratio,
}


# -- rows, CSV, sweep -----------------------------------------------------


@dataclass
class ExperimentResult:
    rows: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        value = float(value)  # unwrap numpy scalars
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def _row_for(cell, metric, value, stderr, predicted, seed, n_actual, c_actual):
    return {
        "scheme": cell["sampler.scheme"],
        "schedule_kind": cell["schedule.kind"],
        "alpha": _fmt(cell["schedule.alpha"]),
        "grid_kind": cell["grid.kind"],
        "N": _fmt(n_actual),
        "c": _fmt(c_actual),
        "d": _fmt(cell["dist.d"]),
        "delta": _fmt(cell["grid.delta"]),
        "T": _fmt(cell["grid.T"]),
        "eps0": _fmt(cell["score.eps0"]),
        "score_kind": cell["score.kind"],
        "metric": metric,
        "value": _fmt(value),
        "stderr": _fmt(stderr),
        "predicted_bound": _fmt(predicted),
        "seed": _fmt(seed),
    }


def _run_cell(cell, master_seed):
    seed = cell_seed(master_seed, cell)
    rows = []
    # Grid geometry recorded even when a metric fails.
    try:
        schedule = build_schedule(cell)
        grid, c_actual = build_grid(cell, schedule)
        n_actual = grid.n_steps
    except Exception:
        grid, c_actual, n_actual = None, cell["grid.c"], cell["grid.N"]
    for metric in cell["metrics"]:
        try:
            fn = METRIC_EVALUATORS[metric]
        except KeyError:
            raise ConfigError(f"unknown metric {metric!r}") from None
        try:
            value, stderr, predicted = fn(cell, seed)
        except Exception as exc:  # isolate cell failures, keep the sweep going
            rows.append(
                _row_for(cell, f"error:{metric}", float("nan"), float("nan"),
                         float("nan"), seed, n_actual, c_actual)
            )
            continue
        rows.append(_row_for(cell, metric, value, stderr, predicted, seed,
                             n_actual, c_actual))
    return rows


def run_sweep(spec: ExperimentSpec, out_path=None, workers: int = 1) -> ExperimentResult:
    """Execute all sweep cells; returns rows and optionally writes CSV.

    Per-cell seeds depend only on the cell's own coordinates, so results are
    unchanged by removing other cells.  Rows are emitted in cell order for
    byte-identical CSV on reruns.
    """
    master_seed = int(spec.config["seed"])
    cells = list(spec.cells())
    result = ExperimentResult()
    writer = None
    fh = None
    if out_path is not None:
        fh = open(out_path, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_cell, cell, master_seed) for cell in cells]
                batches = [f.result() for f in futures]
        else:
            batches = [_run_cell(cell, master_seed) for cell in cells]
        for rows in batches:
            result.rows.extend(rows)
            if writer is not None:
                for row in rows:
                    writer.writerow(row)
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return result


# -- reporting ------------------------------------------------------------

_RATE_AXES = ["N", "eps0", "d"]


def report(result: ExperimentResult, slope_target: float | None = None,
           slope_tol: float = 0.3) -> str:
    """Human-readable summary: per-metric tables and log-log slope fits."""
    rows = [r for r in result.rows if not r["metric"].startswith("error:")]
    errors = [r for r in result.rows if r["metric"].startswith("error:")]
    if not result.rows:
        return "no cells\n"
    lines = []
    metrics = sorted({r["metric"] for r in rows})
    for metric in metrics:
        group = [r for r in rows if r["metric"] == metric]
        lines.append(f"metric {metric}: {len(group)} rows")
        for axis in _RATE_AXES:
            pairs = _axis_series(group, axis)
            if pairs is None:
                continue
            xs, ys, preds = pairs
            try:
                slope, stderr = met.rate_fit(xs, ys)
            except Exception:
                continue
            line = f"  slope vs {axis}: {slope:+.3f} (stderr {stderr:.3f})"
            target = slope_target
            if target is None and preds is not None:
                try:
                    target, _ = met.rate_fit(xs, preds)
                except Exception:
                    target = None
            if target is not None:
                ok = abs(slope - target) <= slope_tol
                line += (
                    f" (target {target:+.3f} +/- {slope_tol:.1f}):"
                    f" {'PASS' if ok else 'FAIL'}"
                )
            lines.append(line)
        for r in group:
            label = ", ".join(
                f"{k}={r[k]}" for k in ("scheme", "N", "d", "delta", "T", "eps0")
                if r[k] != ""
            )
            lines.append(
                f"    {label}: value={r['value']}"
                + (f" stderr={r['stderr']}" if r["stderr"] not in ("", "0.0") else "")
                + (f" bound={r['predicted_bound']}"
                   if r["predicted_bound"] not in ("", "nan") else "")
            )
    if errors:
        lines.append(f"{len(errors)} failed cells:")
        for r in errors:
            lines.append(f"  {r['metric']} seed={r['seed']}")
    return "\n".join(lines) + "\n"


def _axis_series(group, axis):
    vals = []
    for r in group:
        try:
            x = float(r[axis])
            y = float(r["value"])
        except (TypeError, ValueError):
            return None
        pred = None
        if r["predicted_bound"] not in ("", "nan"):
            pred = float(r["predicted_bound"])
        vals.append((x, y, pred))
    xs = sorted({v[0] for v in vals})
    if len(xs) < 3 or len(xs) != len(vals):
        return None
    vals.sort()
    xs = np.array([v[0] for v in vals])
    ys = np.array([v[1] for v in vals])
    preds = None
    if all(v[2] is not None and v[2] > 0 for v in vals):
        preds = np.array([v[2] for v in vals])
    if np.any(ys <= 0) or np.any(xs <= 0):
        return None
    return xs, ys, preds


def load_result(csv_path) -> ExperimentResult:
    with open(csv_path, newline="") as fh:
        return ExperimentResult(list(csv.DictReader(fh)))
