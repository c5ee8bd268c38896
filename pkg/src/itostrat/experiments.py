"""Experiment drivers behind the CLI subcommands.

Samples are processed in fixed-size chunks of consecutive stream ids. The
chunking depends only on the config (never on the worker count) and chunk
results are merged in sample order, so outputs are bit-identical for any
``workers``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import crossvar as cv
from .config import ExperimentConfig
from .fieldio import write_field_binary, write_field_csv
from .integrators import LocalizationGuard, simulate, simulate_linear_scalar
from .noise import TimeGrid, coarsen, sample_batch
from .operators import corrector
from .spectral import SpectralField, sobolev_norm
from .validation import validate_model

SCHEMA_VERSION = 1
MANIFEST_SCHEMA = "itostrat-manifest"


def fmt(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_table(path, schema, columns, rows, meta=None) -> Path:
    """CSV with a ``# schema=... version=...`` line and optional ``# key=value`` lines."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema={schema} version={SCHEMA_VERSION}\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(c) for c in r])
    return path


def _cell(c):
    if isinstance(c, str):
        return c
    if isinstance(c, (bool, np.bool_)):
        return int(c)
    if isinstance(c, (int, np.integer)):
        return int(c)
    return fmt(c)


def read_table(path):
    """Parse a table written by :func:`write_table`: ``(meta, columns, rows)``."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, artifacts, summary=None) -> Path:
    """Manifest listing every artifact with its digest. No timestamps or absolute paths."""
    conf = cfg.to_dict()
    conf.pop("out", None)
    entries = []
    for p in artifacts:
        p = Path(p)
        entries.append({"path": p.relative_to(out).as_posix(), "sha256": sha256(p), "bytes": p.stat().st_size})
    doc = {
        "schema": MANIFEST_SCHEMA,
        "version": SCHEMA_VERSION,
        "command": command,
        "config": conf,
        "artifacts": entries,
        "summary": summary or {},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _chunks(cfg: ExperimentConfig):
    return [(a, min(a + cfg.chunk, cfg.samples)) for a in range(0, cfg.samples, cfg.chunk)]


def _map_chunks(fn, cfg, extra, workers):
    jobs = [(cfg, a, b) + tuple(extra) for a, b in _chunks(cfg)]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, *zip(*jobs)))
    return [fn(*j) for j in jobs]


def _initial_batch(model, cfg, a, b):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**31 - 1]))
    return model.initial(rng, (b - a,))


def _run(model, cfg, scheme, inc, psi0, corrector_opt=None, record=True, stride=1):
    opt = cfg.corrector if corrector_opt is None else corrector_opt
    guard = LocalizationGuard(cfg.guard, cfg.guard_m)
    return simulate(psi0, inc.grid, model.drift, model.noise, scheme, inc, guard,
                    stride=stride, corrector=opt, record_corrector=record)


# -- simulate ------------------------------------------------------------------------

def _simulate_chunk(cfg, a, b):
    model = cfg.build_model()
    grid = TimeGrid(cfg.horizon, cfg.steps)
    inc = sample_batch(model.modes, grid, cfg.seed, range(a, b))
    psi0 = _initial_batch(model, cfg, a, b)
    out = {}
    for scheme in cfg.schemes:
        tr = _run(model, cfg, scheme, inc, psi0, stride=cfg.stride if cfg.snapshots else cfg.steps)
        snaps = tr.states if cfg.snapshots else None
        out[scheme] = (tr.diagnostics, tr.final.coeffs.copy(), snaps, tr.stop_step)
    return out


DIAG_COLUMNS = ["sample", "step", "t", "energy", "enstrophy", "corrector_norm", "stopped"]


def run_simulate(cfg: ExperimentConfig, out, workers=1) -> dict:
    cfg.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model()
    grid = TimeGrid(cfg.horizon, cfg.steps)
    parts = _map_chunks(_simulate_chunk, cfg, (), workers) if cfg.samples else []
    artifacts = []
    summary = {}
    for scheme in cfg.schemes:
        if not parts:
            break
        diag = {k: np.concatenate([p[scheme][0][k] for p in parts], axis=1) for k in parts[0][scheme][0]}
        final = np.concatenate([p[scheme][1] for p in parts], axis=0)
        stops = np.concatenate([p[scheme][3] for p in parts])
        rows = []
        times = grid.times
        for s in range(cfg.samples):
            for k in range(grid.steps + 1):
                rows.append([s, k, times[k], diag["energy"][k, s], diag["enstrophy"][k, s],
                             diag["corrector_norm"][k, s], bool(diag["stopped"][k, s])])
        meta = {"model": cfg.model, "scheme": scheme, "samples": cfg.samples}
        artifacts.append(write_table(out / f"{scheme}_diagnostics.csv", "itostrat-diagnostics", DIAG_COLUMNS, rows, meta))
        artifacts.append(write_field_binary(SpectralField(final, model.N), out / f"{scheme}_final.itsf"))
        if cfg.snapshots:
            snaps = np.concatenate([p[scheme][2] for p in parts], axis=1)
            artifacts.append(write_field_binary(SpectralField(snaps, model.N), out / f"{scheme}_snapshots.itsf"))
        summary[scheme] = {
            "mean_final_energy": float(np.mean(diag["energy"][-1])),
            "stopped_paths": int(np.sum(stops < grid.steps)),
        }
    manifest = write_manifest(out, "simulate", cfg, artifacts, summary)
    return {"manifest": manifest, "artifacts": artifacts, "summary": summary}


# -- converge ----------------------------------------------------------------------------

PAIR = "ito_em~strat_heun"


def _paths_at(model, cfg, scheme, inc, psi0, corrector_opt):
    """State coefficients ``(steps+1, P, ...)`` for one scheme on ``inc``."""
    if model.linear_scalar and corrector_opt in ("generic", "linear", "closed", "off"):
        sig = np.asarray(model.params["sigma"], float)
        x = simulate_linear_scalar(psi0.coeffs[:, 0, 0].real, model.params["mu"], sig, inc, scheme,
                                   corrector=corrector_opt != "off")
        return np.moveaxis(x, -1, 0)[:, :, None, None].astype(complex)
    tr = _run(model, cfg, scheme, inc, psi0, corrector_opt, record=False)
    return tr.states


def _sup_w0(diff):
    p = (diff.real**2 + diff.imag**2).reshape(diff.shape[:2] + (-1,)).sum(axis=-1)
    return np.sqrt(p.max(axis=0))


def _converge_chunk(cfg, a, b):
    model = cfg.build_model()
    grid = TimeGrid(cfg.horizon, cfg.steps)
    fine = sample_batch(model.modes, grid, cfg.seed, range(a, b))
    psi0 = _initial_batch(model, cfg, a, b)
    sums = {}
    for lev in range(cfg.levels):
        inc = coarsen(fine, 2 ** (cfg.levels - 1 - lev))
        em = _paths_at(model, cfg, "ito_em", inc, psi0, cfg.corrector)
        he = _paths_at(model, cfg, "strat_heun", inc, psi0, cfg.corrector)
        res = {PAIR: _sup_w0(em - he).sum()}
        if model.exact is not None:
            w = np.moveaxis(inc.path(), -1, 0)  # (steps+1, P, M)
            ex = np.stack([np.asarray(_exact_coeffs(model, psi0, w[k], k * inc.grid.dt)) for k in range(inc.grid.steps + 1)])
            res["ito_em~exact"] = _sup_w0(em - ex).sum()
            res["strat_heun~exact"] = _sup_w0(he - ex).sum()
            res["ito_em~exact@T"] = _sup_w0(em[-1:] - ex[-1:]).sum()
            res["strat_heun~exact@T"] = _sup_w0(he[-1:] - ex[-1:]).sum()
        sums[inc.grid.steps] = res
    return sums


def _exact_coeffs(model, psi0, w, t):
    ex = model.exact(psi0, w, t)
    if isinstance(ex, SpectralField):
        return ex.coeffs
    return np.asarray(ex, float)[:, None, None].astype(complex)


def loglog_slope(dts, errs):
    """Least-squares slope of ``log err`` against ``log dt`` (``nan`` with <2 points or zeros)."""
    dts, errs = np.asarray(dts, float), np.asarray(errs, float)
    if len(dts) < 2 or np.any(errs <= 0):
        return math.nan
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


def _terminal_chunk(cfg, a, b, scheme):
    model = cfg.build_model()
    fine = sample_batch(model.modes, TimeGrid(cfg.horizon, cfg.steps), cfg.seed, range(a, b))
    psi0 = _initial_batch(model, cfg, a, b)
    sums = {}
    for lev in range(cfg.levels):
        inc = coarsen(fine, 2 ** (cfg.levels - 1 - lev))
        if model.linear_scalar:
            xT = _paths_at(model, cfg, scheme, inc, psi0, cfg.corrector)[-1]
        else:
            xT = _run(model, cfg, scheme, inc, psi0, record=False, stride=inc.grid.steps).final.coeffs
        ex = _exact_coeffs(model, psi0, inc.path()[..., -1], cfg.horizon)
        sums[inc.grid.steps] = _sup_w0((xT - ex)[None]).sum()
    return sums


def terminal_error_table(cfg: ExperimentConfig, scheme="ito_em", workers=1):
    """Strong W^0 error at the horizon against the model's exact solution.

    Same coupling as :func:`converge_table` (finest level sampled once, then
    coarsened) but only final states are kept, so large path counts fit in
    memory. Returns ``(dts, errors, slope)`` ordered coarse to fine.
    """
    cfg.validate(convergence=True)
    if cfg.build_model().exact is None:
        raise ValueError(f"model {cfg.model!r} has no exact solution")
    parts = _map_chunks(_terminal_chunk, cfg, (scheme,), workers)
    levels = sorted(parts[0])
    dts = [cfg.horizon / s for s in levels]
    errs = [sum(p[s] for p in parts) / cfg.samples for s in levels]
    return dts, errs, loglog_slope(dts, errs)


CONVERGE_COLUMNS = ["dt", "pair", "strong_error", "slope_so_far"]


def converge_table(cfg: ExperimentConfig, workers=1) -> list:
    cfg.validate(convergence=True)
    parts = _map_chunks(_converge_chunk, cfg, (), workers) if cfg.samples else []
    rows = []
    if not parts:
        return rows
    levels = sorted(parts[0], key=lambda s: s)  # coarse to fine
    pairs = list(parts[0][levels[0]])
    for pair in pairs:
        dts, errs = [], []
        for steps in levels:
            total = 0.0
            for p in parts:
                total += p[steps][pair]
            err = total / cfg.samples
            dts.append(cfg.horizon / steps)
            errs.append(err)
            rows.append([dts[-1], pair, err, loglog_slope(dts, errs)])
    return rows


def run_converge(cfg: ExperimentConfig, out, workers=1) -> dict:
    rows = converge_table(cfg, workers)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_table(out / "converge.csv", "itostrat-converge", CONVERGE_COLUMNS, rows,
                       {"model": cfg.model, "corrector": cfg.corrector, "samples": cfg.samples})
    final = {r[1]: r[3] for r in rows}
    manifest = write_manifest(out, "converge", cfg, [path], {"slopes": final})
    return {"manifest": manifest, "artifacts": [path], "rows": rows}


# -- crossvar ------------------------------------------------------------------------------

@dataclass
class _Moments:
    """Chunk-mergeable mean and sum of squared deviations (no cancellation)."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x):
        mu = x.mean(axis=1)
        dev = x - mu[:, None]
        return cls(x.shape[1], mu, (dev.real**2 + dev.imag**2).sum(axis=1))

    def merge(self, o):
        n = self.n + o.n
        delta = o.mean - self.mean
        mean = self.mean + delta * (o.n / n)
        m2 = self.m2 + o.m2 + (delta.real**2 + delta.imag**2) * (self.n * o.n / n)
        return _Moments(n, mean, m2)

    def se_norm(self):
        """Per-time W^0 norm of the coefficientwise standard error of the mean."""
        if self.n < 2:
            return np.full(self.mean.shape[0], math.nan)
        var = self.m2 / (self.n - 1) / self.n
        return np.sqrt(var.reshape(var.shape[0], -1).sum(axis=-1))

    def mean_norm(self):
        p = self.mean.real**2 + self.mean.imag**2
        return np.sqrt(p.reshape(p.shape[0], -1).sum(axis=-1))


def crossvar_moments(model, grid: TimeGrid, seed, streams, corrector_opt="generic", psi0=None, guard=math.inf,
                     guard_m=1):
    """Per-mode moments of the bracket, the corrector integral, their difference and the mismatch.

    The mismatch bracket pairs ``G_i`` with an extra Brownian component that
    does not drive the dynamics.
    """
    M = model.modes
    inc_all = sample_batch(M + 1, grid, seed, streams)
    if psi0 is None:
        psi0 = model.initial(np.random.default_rng(np.random.SeedSequence([seed, 2**31 - 1])), (len(inc_all.streams),))
    tr = simulate(psi0, grid, model.drift, model.noise, "ito_em", inc_all, LocalizationGuard(guard, guard_m),
                  corrector=corrector_opt)
    out = []
    for i in range(M):
        emp = cv.empirical_crossvar(tr, model.noise, i, inc_all)
        cor = cv.corrector_integral(tr, model.noise, i)
        mis = cv.empirical_crossvar(tr, model.noise, i, inc_all, driver=M)
        out.append({
            "empirical": _Moments.of(emp.values),
            "corrector": _Moments.of(cor.values),
            "difference": _Moments.of(emp.values - cor.values),
            "mismatch": _Moments.of(mis.values),
        })
    return out


def _crossvar_chunk(cfg, a, b):
    model = cfg.build_model()
    grid = TimeGrid(cfg.horizon, cfg.steps)
    psi0 = _initial_batch(model, cfg, a, b)
    return crossvar_moments(model, grid, cfg.seed, range(a, b), cfg.corrector, psi0, cfg.guard, cfg.guard_m)


def merge_moments(parts):
    merged = parts[0]
    for p in parts[1:]:
        merged = [{k: m[k].merge(q[k]) for k in m} for m, q in zip(merged, p)]
    return merged


CROSSVAR_COLUMNS = ["t", "mode", "empirical_norm", "corrector_integral_norm", "difference_norm",
                    "difference_se", "mismatch_norm", "mismatch_se", "n_paths"]


def _max_z(mom):
    """Largest ``|mean| / se`` over ``t > 0``; a series that is identically zero scores 0."""
    if mom.n < 2 or len(mom.mean) < 2:
        return math.nan
    mean, se = mom.mean_norm()[1:], mom.se_norm()[1:]
    z = np.zeros_like(mean)
    np.divide(mean, se, out=z, where=se > 0)
    z[(se == 0) & (mean > 0)] = math.inf
    return float(z.max())


def crossvar_summary(moments) -> list:
    res = []
    for i, m in enumerate(moments):
        ref = m["corrector"].mean_norm().max()
        diff = m["difference"].mean_norm().max()
        res.append({
            "mode": i,
            "sup_relative_error": float(diff / ref) if ref > 0 else (0.0 if diff == 0 else math.inf),
            "sup_difference": float(diff),
            "sup_mismatch_z": _max_z(m["mismatch"]),
        })
    return res


def run_crossvar(cfg: ExperimentConfig, out, workers=1) -> dict:
    cfg.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    grid = TimeGrid(cfg.horizon, cfg.steps)
    rows, summary = [], []
    if cfg.samples:
        moments = merge_moments(_map_chunks(_crossvar_chunk, cfg, (), workers))
        for k in range(grid.steps + 1):
            for i, m in enumerate(moments):
                rows.append([grid.times[k], i, m["empirical"].mean_norm()[k], m["corrector"].mean_norm()[k],
                             m["difference"].mean_norm()[k], m["difference"].se_norm()[k],
                             m["mismatch"].mean_norm()[k], m["mismatch"].se_norm()[k], m["difference"].n])
        summary = crossvar_summary(moments)
    path = write_table(out / "crossvar.csv", "itostrat-crossvar", CROSSVAR_COLUMNS, rows,
                       {"model": cfg.model, "samples": cfg.samples})
    manifest = write_manifest(out, "crossvar", cfg, [path], {"modes": summary})
    return {"manifest": manifest, "artifacts": [path], "rows": rows, "summary": summary}


# -- corrector / validate ----------------------------------------------------------------

def run_corrector(cfg: ExperimentConfig, out, t=0.0) -> dict:
    cfg.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model()
    psi = model.initial(np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**31 - 1])))
    rep = corrector(model.noise, t, psi)
    meta = {"model": cfg.model, "t": fmt(t), "tail_c2": "none" if rep.tail_c2 is None else fmt(rep.tail_c2)}
    for mm, v in sorted(rep.lower_norms.items()):
        meta[f"norm_W{mm}"] = fmt(v)
    table = write_table(out / "corrector.csv", "itostrat-corrector", ["i", "summand_norm"],
                        [[i, v] for i, v in enumerate(rep.mode_norms)], meta)
    field_path = write_field_csv(rep.field, out / "corrector_field.csv")
    artifacts = [table, field_path]
    manifest = write_manifest(out, "corrector", cfg, artifacts,
                              {"field_norm_W0": sobolev_norm(rep.field, 0), "tail_c2": rep.tail_c2})
    return {"manifest": manifest, "artifacts": artifacts, "report": rep}


def run_validate(cfg: ExperimentConfig, out=None) -> dict:
    cfg.validate()
    rep = validate_model(cfg.build_model(), seed=cfg.seed)
    result = {"report": rep}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "validate.json"
        path.write_text(json.dumps(rep, indent=2, sort_keys=True, default=_json_default) + "\n")
        result["manifest"] = write_manifest(out, "validate", cfg, [path])
        result["artifacts"] = [path]
    return result


def tail_report_lines(rep: dict) -> list:
    s = rep.get("summability", {})
    lines = [f"model {rep['model']}: {rep['modes']} noise modes"]
    if s:
        lines.append(f"  sum_(i<M) c_i^2 = {s['sum_c2']:.6e}")
        tail = s.get("tail_c2")
        lines.append("  tail sum_(i>=M) c_i^2 = " + ("unknown (no closed form)" if tail is None else f"{tail:.6e}"))
    g = rep["drift_growth"]
    lines.append(f"  drift growth: worst ratio {g['worst_ratio']:.3e} for (c, p) = ({g['c']}, {g['p']})"
                 + ("" if g["ok"] else "  VIOLATED"))
    lines.append(f"  frechet vs finite differences: {rep['frechet_vs_fd']:.3e}")
    sb = rep["summand_bound"]
    lines.append(f"  summand bound C = {sb['C']:.3e} (fresh max {sb['fresh_max']:.3e})" + ("" if sb["ok"] else "  EXCEEDED"))
    q = rep["derivative_exponent"]
    lines.append(f"  derivative growth exponent q_hat = {q['q_hat']:.3f}" + ("" if q["finite"] else "  (no finite q fits)"))
    return lines


__all__ = [
    "crossvar_moments",
    "converge_table",
    "loglog_slope",
    "run_converge",
    "run_corrector",
    "run_crossvar",
    "run_simulate",
    "run_validate",
]
