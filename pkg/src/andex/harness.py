"""Monte Carlo experiment orchestration: configs, seeding, persistence.

Experiments confront the asymptotic theorems with finite-size simulation.
Each experiment runs N independent trials; the per-trial seed is a fixed
counter-based function of (master_seed, trial_index, stream tag), so
samplers, decorations and oracles never share randomness.  Records are
flat per-trial rows appended to a CSV as soon as a contiguous prefix of
trials completes (crash-resumable); aggregates land in a manifest JSON.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import covariance as cov
from . import extremes, field, scales as scales_mod, spectrum, stats
from .errors import ConfigError

__all__ = ["ExperimentConfig", "run_experiment", "report"]

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "potential_extremes",
    "eigenvalue_stats",
    "localisation",
    "rank_permutation",
    "tail_lemma",
    "macro_meso",
    "bar_sweep",
)

_STREAMS = {"field": 0, "ppp": 1, "oracle": 2}

# Refuse runs whose working grids would obviously exhaust memory.
_MEMORY_BUDGET_BYTES = 4_000_000_000


def trial_seed(master_seed: int, trial_index: int, stream: str = "field") -> int:
    """Counter-based per-trial seed; documented, fixed derivation."""
    ss = np.random.SeedSequence((master_seed, trial_index, _STREAMS[stream]))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict
    L: int
    d: int
    trials: int
    master_seed: int
    out_dir: str
    overrides: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.L < 2 or self.d not in (1, 2, 3):
            raise ConfigError("invalid box side or dimension")

    @classmethod
    def from_json(cls, path_or_text) -> "ExperimentConfig":
        text = path_or_text
        if os.path.exists(str(path_or_text)):
            text = Path(path_or_text).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        try:
            return cls(
                experiment=raw["experiment"],
                model=raw.get("model", {"family": "iid"}),
                L=int(raw["L"]),
                d=int(raw.get("d", 1)),
                trials=int(raw.get("trials", 1)),
                master_seed=int(raw.get("master_seed", 0)),
                out_dir=raw.get("out_dir", "runs/latest"),
                overrides=dict(raw.get("overrides", {})),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field: {exc}") from exc

    def echo(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model,
            "L": self.L,
            "d": self.d,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "out_dir": self.out_dir,
            "overrides": self.overrides,
        }


class _Context:
    """Shared per-run deterministic state (model, scales, bar problem)."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        ov = cfg.overrides
        self.model = cov.CovarianceModel.from_config(cfg.model, cfg.d)
        self.d_L = cov.derive_dL(self.model)
        self.a_L = float(ov["a_L"]) if "a_L" in ov else scales_mod.compute_aL(
            cfg.L, cfg.d
        )
        if "R_L" in ov or "r_L" in ov:
            R_L = int(ov.get("R_L", 0)) or None
            r_L = int(ov.get("r_L", 0)) or None
        else:
            R_L = r_L = None
        if R_L is None or r_L is None:
            R_def, r_def = scales_mod.suggest_windows(self.a_L, self.d_L, cfg.L)
            R_L = R_L or R_def
            r_L = r_L or r_def
        self.kappa = float(ov.get("kappa", 0.25))
        self.bar = spectrum.solve_bar_problem(self.model, self.a_L, r_L)
        self.tau_L = field.compute_tau(self.model, self.bar.bar_phi)
        self.scales = scales_mod.build_scale_set(
            L=cfg.L,
            d=cfg.d,
            d_L=self.d_L,
            tau_L=self.tau_L,
            kappa=self.kappa,
            a_L=self.a_L,
            R_L=R_L,
            r_L=r_L,
        )
        self.k = int(ov.get("k", 1))
        self.c_prime = float(ov.get("c_prime", 0.25))
        self.interval_C = float(ov.get("interval_C", 3.0))
        self.shape_factor = float(ov.get("shape_factor", 0.1))
        self.cond_value = float(ov.get("value", self.a_L))

    def check_memory(self):
        side = field.grid_side(self.cfg.L)
        need = (side**self.cfg.d) * 16 * 6
        if need > _MEMORY_BUDGET_BYTES:
            raise ConfigError(
                f"estimated working set {need} bytes exceeds budget"
            )


# ---------------------------------------------------------------------------
# per-experiment trial bodies: (ctx, trial_index) -> dict


def _trial_potential_extremes(ctx: _Context, i: int) -> dict:
    cfg = ctx.cfg
    s = field.sample_field(ctx.model, cfg.L, trial_seed(cfg.master_seed, i))
    part = extremes.build_partition(cfg.L, ctx.scales.R_L, cfg.d)
    rec = extremes.box_maxima(s, part, ctx.a_L)
    m = float(np.max(s.values))
    level = float(cfg.overrides.get("count_level", 0.0))
    n_exceed = sum(
        1 for (_, val) in rec.box_maxima if ctx.a_L * (val - ctx.a_L) > level
    )
    return {
        "max_value": m,
        "rescaled_max": ctx.a_L * (m - ctx.a_L),
        "n_exceed": n_exceed,
        "n_boxes": part.n_boxes,
    }


def _trial_eigenvalue_stats(ctx: _Context, i: int) -> dict:
    cfg = ctx.cfg
    s = field.sample_field(ctx.model, cfg.L, trial_seed(cfg.master_seed, i))
    V = np.array(s.values)
    k = max(ctx.k, 2)
    if V.size <= spectrum.DENSE_SITE_LIMIT:
        res = spectrum.dense_eigs(V, k)
    else:
        res = spectrum.top_k_eigs(V, k)
    lam1 = float(res.eigenvalues[0])
    out = {
        "lambda_1": lam1,
        "rescaled_lambda_1": ctx.a_L
        * (lam1 - ctx.scales.a_Xi - ctx.bar.bar_lambda),
        "gap": res.gap,
    }
    for axis, c in enumerate(res.center_coords(0)):
        out[f"center_{axis}"] = c
    return out


def _trial_localisation(ctx: _Context, i: int) -> dict:
    cfg = ctx.cfg
    R_L = ctx.scales.R_L
    if field.box_half(cfg.L) < (2 * R_L) // 2:
        raise ConfigError("localisation needs L >= 2*R_L")
    x0 = (0,) * cfg.d
    s = field.peak_conditioned_sample(
        ctx.model, cfg.L, x0, ctx.cond_value, trial_seed(cfg.master_seed, i)
    )
    ev = field.event_check(s, x0, ctx.scales, shape_factor=ctx.shape_factor)
    h = s.half
    Rh = R_L // 2
    core = (slice(h - Rh, h + Rh + 1),) * cfg.d
    V = np.array(s.values[core])
    res = spectrum.dense_eigs(V, 2) if V.size <= spectrum.DENSE_SITE_LIMIT else spectrum.top_k_eigs(V, 2)
    view = field.fluctuation_view(s, x0)
    eig_err, fun_err = spectrum.approximation_error(
        s, ctx.bar, res, view, ctx.scales
    )
    gap_ok, gap_margin = spectrum.spectral_gap_check(
        res, s.at(x0), ctx.scales, ctx.c_prime
    )
    w_val = float(np.max(V))
    lo, hi = scales_mod.interval_ILC(ctx.a_L, ctx.tau_L, ctx.interval_C)
    return {
        "value": ctx.cond_value,
        "in_E1": int(ev.in_E1),
        "in_E2": int(ev.in_E2),
        "in_E3": int(ev.in_E3),
        "margin_E1": ev.margins[0],
        "margin_E2": ev.margins[1],
        "margin_E3": ev.margins[2],
        "eig_err": eig_err,
        "fun_err": fun_err,
        "gap": res.gap,
        "gap_ok": int(gap_ok),
        "gap_margin": gap_margin,
        "max_in_interval": int(lo <= w_val <= hi),
    }


def _trial_rank_permutation(ctx: _Context, i: int) -> dict:
    cfg = ctx.cfg
    s = field.sample_field(ctx.model, cfg.L, trial_seed(cfg.master_seed, i))
    V = np.array(s.values)
    k = ctx.k
    res = (
        spectrum.dense_eigs(V, k)
        if V.size <= spectrum.DENSE_SITE_LIMIT
        else spectrum.top_k_eigs(V, k)
    )
    order = extremes.order_statistics(s, ctx.a_L)
    positions = [pos for pos, _ in order.order]
    centers = [res.center_coords(j) for j in range(res.k)]
    ranks = extremes.rank_permutation(centers, positions)
    out = {"lambda_1": float(res.eigenvalues[0])}
    if res.k >= 2:
        out["gap"] = res.gap
    for j, r in enumerate(ranks):
        out[f"ell_{j + 1}"] = int(r)
    return out


def _rows_tail_lemma(ctx: _Context) -> list[dict]:
    ov = ctx.cfg.overrides
    s_grid = ov.get("s_grid", [-1.0, 0.0, 1.0, 2.0])
    taus = ov.get("tau_list", [0.0, 0.05, 0.1])
    Ld = float(ctx.cfg.L) ** ctx.cfg.d
    C = ctx.interval_C
    rows = []
    for tau in taus:
        for s in s_grid:
            exact, ref = scales_mod.gaussian_sum_tail(ctx.a_L, tau, s, Ld)
            restricted = scales_mod.restricted_sum_tail(ctx.a_L, tau, s, Ld, C)
            rows.append(
                {
                    "tau": float(tau),
                    "s": float(s),
                    "exact": exact,
                    "reference": ref,
                    "ratio": exact / ref,
                    "restricted": restricted,
                }
            )
    return rows


def _pooled_box_eigs(V: np.ndarray, part: extremes.MesoPartition, h: int, k: int):
    """Top-k pooled eigenpairs of the operator restricted to the union of
    cores (block-diagonal over boxes).  Returns a list of
    (lam, box index, eigenfunction-on-core, core slices) descending."""
    pool = []
    for j in range(part.n_boxes):
        sl = part.core_slices(j)
        Vb = np.array(V[sl])
        kk = min(k, Vb.size)
        res = spectrum.dense_eigs(Vb, kk)
        for t in range(res.k):
            pool.append((float(res.eigenvalues[t]), j, res.eigenfunctions[t], sl))
    pool.sort(key=lambda item: -item[0])
    return pool[:k]


def _trial_macro_meso(ctx: _Context, i: int) -> dict:
    cfg = ctx.cfg
    s = field.sample_field(ctx.model, cfg.L, trial_seed(cfg.master_seed, i))
    V = np.array(s.values)
    k = ctx.k
    res = spectrum.top_k_eigs(V, k + 1)
    part = extremes.build_partition(cfg.L, ctx.scales.R_L, cfg.d)
    h = s.half
    pool = _pooled_box_eigs(V, part, h, k + 1)
    a_L, d_L = ctx.a_L, ctx.d_L
    out: dict = {}
    gap_event = len(pool) == k + 1
    if gap_event:
        lam_hat = [p[0] for p in pool]
        out["lambda_hat_kp1"] = lam_hat[k]
        gap_event &= lam_hat[k] >= ctx.scales.a_Xi + ctx.bar.bar_lambda - a_L ** (
            -0.5
        )
        for j in range(k):
            gap_event &= lam_hat[j] - lam_hat[j + 1] > a_L ** (-1.5)
    # are the top k+1 field peaks inside the retained cores?
    mask = part.core_mask(V.shape)
    order = extremes.order_statistics(s, a_L, top=k + 1)
    peaks_in = all(
        mask[tuple(c + h for c in pos)] for pos, _ in order.order
    )
    out["gap_event"] = int(gap_event)
    out["peaks_in_cores"] = int(peaks_in)
    for j in range(k):
        lam = float(res.eigenvalues[j])
        lam_hat_j, _, phi_core, sl = pool[j]
        out[f"lambda_{j + 1}"] = lam
        out[f"lambda_hat_{j + 1}"] = lam_hat_j
        out[f"eig_diff_{j + 1}"] = a_L * abs(lam_hat_j - lam)
        phi_hat = np.zeros(V.shape)
        phi_hat[sl] = phi_core
        phi = res.eigenfunctions[j]
        if float(np.sum(phi * phi_hat)) < 0:
            phi = -phi
        out[f"fun_diff_{j + 1}"] = (a_L / d_L) * math.sqrt(
            float(np.sum((phi_hat - phi) ** 2))
        )
    return out


def _rows_bar_sweep(ctx: _Context) -> list[dict]:
    ov = ctx.cfg.overrides
    ratios = ov.get("ratios", [5.0, 10.0, 20.0, 40.0])
    families = ov.get("families", [{"family": "iid"}, {"family": "cube_indicator", "m": 2}])
    r_L = ctx.scales.r_L
    rows = []
    for fam in families:
        model = cov.CovarianceModel.from_config(dict(fam), ctx.cfg.d)
        d_L = cov.derive_dL(model)
        for ratio in ratios:
            a_L = ratio * d_L
            bar = spectrum.solve_bar_problem(model, a_L, r_L)
            err = abs(bar.bar_lambda - bar.expansion_value) / (d_L / a_L)
            rows.append(
                {
                    "family": model.family,
                    "ratio": float(ratio),
                    "bar_lambda": bar.bar_lambda,
                    "expansion": bar.expansion_value,
                    "err_over_scale": err,
                }
            )
    return rows


_TRIAL_BODIES = {
    "potential_extremes": _trial_potential_extremes,
    "eigenvalue_stats": _trial_eigenvalue_stats,
    "localisation": _trial_localisation,
    "rank_permutation": _trial_rank_permutation,
    "macro_meso": _trial_macro_meso,
}


# ---------------------------------------------------------------------------
# record persistence


def _format_cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path: Path, columns: list[str], rows: list[dict], start: int):
    new_file = not path.exists() or start == 0
    mode = "w" if new_file else "a"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(["trial", "seed"] + columns)
        for off, row in enumerate(rows):
            i = start + off
            writer.writerow(
                [i, row.get("__seed", "")]
                + [_format_cell(row.get(c, "")) for c in columns]
            )
            fh.flush()


def _read_records(path: Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for raw in reader:
            row = {}
            for key, cell in zip(header, raw):
                try:
                    row[key] = int(cell)
                except ValueError:
                    try:
                        row[key] = float(cell)
                    except ValueError:
                        row[key] = cell
            rows.append(row)
    return header[2:], rows


# ---------------------------------------------------------------------------
# aggregates


def _aggregate(cfg: ExperimentConfig, ctx: _Context, rows: list[dict]) -> dict:
    ov = cfg.overrides
    exp = cfg.experiment
    tests = {}
    summary: dict = {}
    if not rows:
        return {"tests": tests, "summary": summary}

    def col(name):
        return np.array([r[name] for r in rows if name in r and r[name] != ""])

    if exp == "potential_extremes":
        rescaled = np.sort(col("rescaled_max"))
        ks = stats.ks_statistic(rescaled, stats.gumbel_cdf)
        thr = float(ov.get("ks_threshold", 0.1))
        tests["gumbel_ks"] = stats.TestReport.make(
            ks, rescaled.size, thr, "KS distance of rescaled maxima to Gumbel"
        )
        counts = col("n_exceed").astype(int)
        tests["poisson_dispersion"] = stats.poisson_dispersion(counts)
        if rescaled.size >= 100:
            est, se = stats.tail_frequency(rescaled, 0.0)
            summary["tail_frequency_u0"] = {"estimate": est, "stderr": se}
    elif exp == "eigenvalue_stats":
        vals = col("rescaled_lambda_1")
        summary["rescaled_lambda_1"] = {
            "median": float(np.median(vals)),
            "p95": float(np.percentile(vals, 95)),
        }
        summary["gap_median"] = float(np.median(col("gap")))
    elif exp == "localisation":
        eig = col("eig_err")
        fun = col("fun_err")
        summary["eig_err"] = {
            "median": float(np.median(eig)),
            "p95": float(np.percentile(eig, 95)),
        }
        summary["fun_err"] = {
            "median": float(np.median(fun)),
            "p95": float(np.percentile(fun, 95)),
        }
        e1 = col("in_E1").astype(bool)
        e2 = col("in_E2").astype(bool)
        e3 = col("in_E3").astype(bool)
        summary["event_counts"] = {
            "E1": int(e1.sum()),
            "E2": int(e2.sum()),
            "E3": int(e3.sum()),
            "full_event": int((e1 & e2 & e3).sum()),
            "n": len(rows),
        }
        sel = e1 & e3
        gap_ok = col("gap_ok").astype(bool)
        if sel.any():
            summary["gap_pass_frequency_on_event"] = float(
                gap_ok[sel].mean()
            )
        summary["gap_pass_frequency"] = float(gap_ok.mean())
        summary["interval_frequency"] = float(col("max_in_interval").mean())
    elif exp == "rank_permutation":
        ell1 = col("ell_1").astype(int)
        freq = float(np.mean(ell1 == 1))
        summary["p_ell1_eq_1"] = freq
        summary["ell_1_histogram"] = {
            str(v): int(np.sum(ell1 == v)) for v in np.unique(ell1)
        }
    elif exp == "tail_lemma":
        ratios = col("ratio")
        summary["max_abs_ratio_err"] = float(np.max(np.abs(ratios - 1.0)))
    elif exp == "macro_meso":
        sel = (col("gap_event").astype(bool)) & (
            col("peaks_in_cores").astype(bool)
        )
        summary["conditioning"] = {
            "gap_event": int(col("gap_event").sum()),
            "peaks_in_cores": int(col("peaks_in_cores").sum()),
            "both": int(sel.sum()),
            "n": len(rows),
        }
        for j in range(1, ctx.k + 1):
            eig = col(f"eig_diff_{j}")
            fun = col(f"fun_diff_{j}")
            entry = {
                "eig_median": float(np.median(eig)),
                "fun_median": float(np.median(fun)),
            }
            if sel.any():
                entry["eig_median_on_event"] = float(np.median(eig[sel]))
                entry["fun_median_on_event"] = float(np.median(fun[sel]))
            summary[f"rank_{j}"] = entry
    elif exp == "bar_sweep":
        by_family: dict = {}
        for r in rows:
            by_family.setdefault(r["family"], []).append(
                (r["ratio"], r["err_over_scale"])
            )
        for fam, pairs in by_family.items():
            pairs.sort()
            errs = [e for _, e in pairs]
            summary[fam] = {
                "errs": errs,
                "monotone_decreasing": bool(
                    all(a > b for a, b in zip(errs, errs[1:]))
                ),
                "final_err": errs[-1],
            }
    return {
        "tests": {k: json.loads(v.to_json()) for k, v in tests.items()},
        "summary": summary,
    }


# ---------------------------------------------------------------------------
# driver


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> Path:
    """Execute the experiment; returns the path of the manifest JSON."""
    ctx = _Context(cfg)
    ctx.check_memory()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "records.csv"
    manifest_path = out / "manifest.json"

    t0 = time.time()
    if cfg.experiment == "tail_lemma":
        rows = _rows_tail_lemma(ctx)
    elif cfg.experiment == "bar_sweep":
        rows = _rows_bar_sweep(ctx)
    else:
        rows = None

    failures = 0
    if rows is not None:
        columns = sorted({k for r in rows for k in r})
        if records_path.exists():
            records_path.unlink()
        _write_rows(records_path, columns, rows, 0)
        done_rows = rows
    else:
        body = _TRIAL_BODIES[cfg.experiment]
        start = 0
        existing: list[dict] = []
        if records_path.exists():
            try:
                _, existing = _read_records(records_path)
                start = len(existing)
            except Exception:
                records_path.unlink()
                start = 0
                existing = []
        if start > cfg.trials:
            records_path.unlink()
            start, existing = 0, []
        indices = list(range(start, cfg.trials))

        def run_one(i):
            try:
                row = body(ctx, i)
                row["__seed"] = trial_seed(cfg.master_seed, i)
                return i, row, None
            except Exception as exc:  # per-trial failure budget
                return i, None, repr(exc)

        results: dict[int, dict | None] = {}
        errors: dict[int, str] = {}
        if workers > 1 and indices:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for i, row, err in pool.map(run_one, indices):
                    results[i] = row
                    if err:
                        errors[i] = err
        else:
            for i in indices:
                i, row, err = run_one(i)
                results[i] = row
                if err:
                    errors[i] = err
        failures = len(errors)
        if failures > 0.05 * cfg.trials:
            raise RuntimeError(
                f"{failures}/{cfg.trials} trials failed "
                f"(budget 5%): {list(errors.values())[:3]}"
            )
        new_rows = [
            results[i] if results[i] is not None else {"__seed": trial_seed(cfg.master_seed, i), "failed": 1}
            for i in indices
        ]
        all_rows = existing + [
            {k: v for k, v in r.items() if k != "__seed"} for r in new_rows
        ]
        columns = sorted(
            {k for r in all_rows for k in r if k not in ("trial", "seed")}
        )
        if start == 0:
            _write_rows(records_path, columns, new_rows, 0)
        else:
            _write_rows(records_path, columns, new_rows, start)
        done_rows = all_rows

    agg = _aggregate(cfg, ctx, [r for r in done_rows if not r.get("failed")])
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.echo(),
        "scales": json.loads(ctx.scales.to_json()),
        "tau_L": ctx.tau_L,
        "bar_lambda": ctx.bar.bar_lambda,
        "bar_expansion": ctx.bar.expansion_value,
        "trials_failed": failures,
        "wall_time_s": time.time() - t0,
        **agg,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


# ---------------------------------------------------------------------------
# reporting


def report(run_dir, check: bool = False) -> bool:
    """Aggregate a finished run into tables, plot-data files and a printed
    summary.  Returns overall pass/fail of the run's own test reports."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest in {run_dir}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(
            f"schema version mismatch: {manifest.get('schema_version')}"
        )
    cfg = manifest["config"]
    if cfg["trials"] < 1:
        raise ValueError("empty run")
    columns, rows = _read_records(run_dir / "records.csv")
    exp = cfg["experiment"]

    lines = [f"experiment: {exp}  trials: {len(rows)}"]
    ok = True
    for name, rep in manifest.get("tests", {}).items():
        status = "PASS" if rep["pass"] else "FAIL"
        ok &= rep["pass"]
        lines.append(
            f"{status} {name}: statistic={rep['statistic']:.4g} "
            f"threshold={rep['threshold']:.4g} ({rep['description']})"
        )
    for key, val in manifest.get("summary", {}).items():
        lines.append(f"  {key}: {json.dumps(val)}")

    # plot-data files
    if exp == "potential_extremes" and rows:
        vals = np.sort(np.array([r["rescaled_max"] for r in rows]))
        ecdf = np.arange(1, vals.size + 1) / vals.size
        ref = stats.gumbel_cdf(vals)
        with open(run_dir / "cdf_vs_gumbel.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rescaled_max", "ecdf", "gumbel_cdf"])
            for v, e, g in zip(vals, ecdf, ref):
                w.writerow([repr(float(v)), repr(float(e)), repr(float(g))])
    if exp == "rank_permutation" and rows:
        ell = np.array([r["ell_1"] for r in rows], dtype=int)
        edges = np.arange(1, max(ell.max(), 5) + 2)
        hist, _ = np.histogram(ell, bins=edges)
        with open(run_dir / "rank_histogram.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "count", "frequency"])
            for edge, c in zip(edges[:-1], hist):
                w.writerow([int(edge), int(c), repr(float(c / ell.size))])
    if exp == "bar_sweep" and rows:
        with open(run_dir / "bar_sweep_table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["family", "ratio", "err_over_scale"])
            for r in rows:
                w.writerow([r["family"], r["ratio"], repr(float(r["err_over_scale"]))])

    print("\n".join(lines))
    return ok
