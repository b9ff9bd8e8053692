"""Experiment runner: rate sweeps, estimator comparisons, two-sample Monte
Carlo, slope regression, CSV and SVG emission.

Everything is deterministic given the master seed: per-cell seeds are
hashes of (master, n, replicate, method), cells that fail are recorded
with an NA loss and the run continues, and rows are emitted in sorted
order so reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit, IoError
from .fitmodel import lepski
from .hardness import hard_instance
from .ipm import DiscriminatorBudget, budget_for, pick_family
from .mixture import sphere_truth
from .rng import child_seed
from .surrogate import SurrogateConfig, build_surrogate, surrogate_table
from .wavelets import cloud_table

__all__ = ["ExperimentConfig", "ResultRow", "run", "slope", "emit", "truth_from_spec"]


@dataclass
class ResultRow:
    experiment: str
    n: int
    replicate: int
    method: str
    loss: float | None
    seconds: float
    seed: int

    def key(self):
        return (self.n, self.replicate, self.method)


@dataclass
class ExperimentConfig:
    kind: str
    model: dict
    n_ladder: list
    replicates: int
    gamma: float
    methods: list = field(default_factory=lambda: ["empirical"])
    budget_depth: str | int = "scaled"
    budget_offset: int = 1
    loss_reduce: str = "l1"
    estimator: dict = field(default_factory=dict)
    master_seed: int = 0
    record_timing: bool = False
    experiment_id: str = "exp"
    shift: float = 0.0
    permutations: int = 199

    def __post_init__(self):
        if self.kind not in ("rates", "compare", "twosample", "hardinstance"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        ladder = list(self.n_ladder)
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("n ladder must be strictly increasing")
        if self.kind in ("rates",) and len(ladder) < 3:
            raise ValueError("slope fits need at least 3 ladder points")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def to_json(self) -> str:
        out = dict(self.__dict__)
        return json.dumps(out, indent=2, sort_keys=True)


def truth_from_spec(model: dict):
    kind = model.get("kind", "sphere")
    if kind == "sphere":
        return sphere_truth(int(model.get("d", 1)), int(model.get("D", 2)))
    if kind == "hard":
        params = {k: v for k, v in model.items() if k not in ("kind", "family")}
        if "code" in params:
            params["code"] = np.asarray(params["code"], dtype=np.int8)
        return hard_instance(model["family"], **params)
    raise ValueError(f"unknown model kind {kind!r}")


def _truth_parts(truth):
    """(sampler, measure, d, D) regardless of the truth flavor."""
    if hasattr(truth, "measure"):  # hard instance
        mix, meas = truth.mixture, truth.measure
        return (lambda n, s: mix.sample(n, s)), meas, mix.dim_in, mix.dim_out
    return (lambda n, s: truth.sample(n, s)), truth.measure, truth.d, truth.D


def _budget_for_cell(cfg: ExperimentConfig, n: int, d: int, D: int) -> DiscriminatorBudget:
    box = (np.full(D, -2.5), np.full(D, 2.5))
    if cfg.budget_depth == "scaled":
        J = int(np.clip(np.ceil(np.log2(n) / d) + cfg.budget_offset, 3, 12))
    elif cfg.budget_depth == "default":
        return budget_for(n, D, cfg.gamma, box=box)
    else:
        J = int(cfg.budget_depth)
    return budget_for(n, D, cfg.gamma, box=box, J_dict=J)


def _estimator_config(cfg: ExperimentConfig, d: int, D: int, seed: int) -> SurrogateConfig:
    base = dict(alpha=1.0, beta=3.0, gamma=cfg.gamma, d=d, D=D)
    base.update(cfg.estimator)
    for drop in ("grid_beta", "grid_alpha", "c0", "sweeps"):
        base.pop(drop, None)
    return SurrogateConfig(seed=seed, **base)


def _cell_loss(cfg: ExperimentConfig, truth, method: str, n: int, seed: int) -> float:
    sampler, measure, d, D = _truth_parts(truth)
    budget = _budget_for_cell(cfg, n, d, D)
    X = sampler(n, seed)
    truth_table = measure.basis_table(budget.family, budget.J_dict)
    if method == "empirical":
        table = cloud_table(budget.family, X, np.full(n, 1.0 / n), budget.J_dict, denom=1.0)
    elif method == "surrogate":
        scfg = _estimator_config(cfg, d, D, seed)
        surr = build_surrogate(X, scfg)
        table = surrogate_table(surr, budget)
    elif method == "lepski":
        scfg = _estimator_config(cfg, d, D, seed)
        est = cfg.estimator
        rep = lepski(X, est.get("grid_beta", [2.0, 3.0]), est.get("grid_alpha", [0.5, 1.0, 1.5]),
                     scfg, budget, c0=est.get("c0", 2.0), seed=seed,
                     sweeps=est.get("sweeps", 10))
        table = rep.model.model_table()
    else:
        raise ValueError(f"unknown method {method!r}")
    return budget.kappa * table.gap(truth_table, budget.bound, reduce=cfg.loss_reduce)


def _twosample_cell(cfg: ExperimentConfig, truth, method: str, n: int, seed: int) -> float:
    from .twosample import TestConfig, permutation_calibrate
    sampler, _measure, d, D = _truth_parts(truth)
    budget = _budget_for_cell(cfg, n, d, D)
    scfg = _estimator_config(cfg, d, D, child_seed(seed, "cfg"))
    tcfg = TestConfig(surrogate=scfg, budget=budget, permutations=cfg.permutations)
    X = sampler(n, child_seed(seed, "x"))
    Y = sampler(n, child_seed(seed, "y"))
    if method == "shift":
        delta = np.zeros(D)
        delta[0] = cfg.shift
        Y = Y + delta
    _obs, _crit, p = permutation_calibrate(X, Y, tcfg, seed=child_seed(seed, "perm"))
    return p


def run(config: ExperimentConfig) -> list[ResultRow]:
    """Execute the experiment grid; failed cells carry a None loss."""
    truth = truth_from_spec(config.model)
    rows = []
    methods = config.methods if config.kind != "twosample" else (
        config.methods if config.methods != ["empirical"] else ["null", "shift"])
    for n in config.n_ladder:
        for rep in range(config.replicates):
            for method in methods:
                seed = child_seed(config.master_seed, n, rep, method)
                t0 = time.perf_counter()
                try:
                    if config.kind == "twosample":
                        loss = _twosample_cell(config, truth, method, n, seed)
                    else:
                        loss = _cell_loss(config, truth, method, n, seed)
                except Exception:
                    loss = None
                dt = time.perf_counter() - t0 if config.record_timing else 0.0
                rows.append(ResultRow(config.experiment_id, n, rep, method, loss, dt, seed))
    rows.sort(key=ResultRow.key)
    return rows


def slope(rows: list[ResultRow], method: str, abscissa: str = "n"):
    """OLS slope of log(median loss over replicates) on log n.

    abscissa="n_over_log" regresses on log(n / log n) instead, which
    absorbs the logarithmic factor of the theoretical rates.
    """
    per_n: dict[int, list] = {}
    for r in rows:
        if r.method == method and r.loss is not None and np.isfinite(r.loss):
            per_n.setdefault(r.n, []).append(r.loss)
    ns = sorted(per_n)
    if len(ns) < 3:
        raise DegenerateFit("need at least 3 distinct ladder points")
    x = np.array([np.log(n) if abscissa == "n" else np.log(n / np.log(n)) for n in ns])
    y = np.array([np.log(np.median(per_n[n])) for n in ns])
    if np.ptp(x) < 1e-12:
        raise DegenerateFit("zero variance in the abscissa")
    xc = x - x.mean()
    b = float(np.dot(xc, y) / np.dot(xc, xc))
    a = float(y.mean() - b * x.mean())
    resid = y - (a + b * x)
    dof = max(len(ns) - 2, 1)
    se = float(np.sqrt(np.sum(resid ** 2) / dof / np.dot(xc, xc)))
    return b, se


def _format_loss(loss) -> str:
    return "NA" if loss is None or not np.isfinite(loss) else repr(float(loss))


def emit(rows: list[ResultRow], fmt: str, path: str) -> str:
    """Write rows as CSV or a self-contained log-log SVG; returns the path."""
    try:
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["experiment", "n", "replicate", "method", "loss", "seconds", "seed"])
            for r in rows:
                writer.writerow([r.experiment, r.n, r.replicate, r.method,
                                 _format_loss(r.loss), repr(float(r.seconds)), r.seed])
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        elif fmt == "svg":
            if not rows:
                raise IoError("svg emission needs at least one row")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(_render_svg(rows))
        else:
            raise IoError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return path


def parse_csv(path: str) -> list[ResultRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            loss = None if rec["loss"] == "NA" else float(rec["loss"])
            rows.append(ResultRow(rec["experiment"], int(rec["n"]), int(rec["replicate"]),
                                  rec["method"], loss, float(rec["seconds"]), int(rec["seed"])))
    return rows


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]


def _render_svg(rows: list[ResultRow]) -> str:
    methods = sorted({r.method for r in rows})
    pts = [(r.n, r.loss, r.method) for r in rows if r.loss is not None and np.isfinite(r.loss) and r.loss > 0]
    if not pts:
        raise IoError("no positive finite losses to plot")
    lx = np.log10([p[0] for p in pts])
    ly = np.log10([p[1] for p in pts])
    x0, x1 = lx.min() - 0.2, lx.max() + 0.2
    y0, y1 = ly.min() - 0.2, ly.max() + 0.2
    Wpx, Hpx, pad = 640, 460, 56

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (Wpx - 2 * pad)

    def sy(v):
        return Hpx - pad - (v - y0) / (y1 - y0) * (Hpx - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{Wpx}" height="{Hpx}" '
        f'viewBox="0 0 {Wpx} {Hpx}" font-family="monospace" font-size="12"',
    ]
    meta = []
    for i, method in enumerate(methods):
        try:
            b, se = slope(rows, method)
            meta.append(f'data-slope-{method}="{b:.6f}" data-slope-se-{method}="{se:.6f}"')
        except DegenerateFit:
            continue
    parts[0] += (" " + " ".join(meta) if meta else "") + ">"
    parts.append(f'<rect width="{Wpx}" height="{Hpx}" fill="white"/>')
    parts.append(f'<line x1="{pad}" y1="{Hpx-pad}" x2="{Wpx-pad}" y2="{Hpx-pad}" stroke="black"/>')
    parts.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{Hpx-pad}" stroke="black"/>')
    parts.append(f'<text x="{Wpx/2}" y="{Hpx-14}" text-anchor="middle">log10 n</text>')
    parts.append(f'<text x="16" y="{Hpx/2}" transform="rotate(-90 16 {Hpx/2})" '
                 f'text-anchor="middle">log10 loss</text>')
    for i, method in enumerate(methods):
        color = _PALETTE[i % len(_PALETTE)]
        mpts = [(a, b) for a, b, m in pts if m == method]
        for a, b in mpts:
            parts.append(f'<circle cx="{sx(np.log10(a)):.2f}" cy="{sy(np.log10(b)):.2f}" '
                         f'r="3" fill="{color}" fill-opacity="0.55"/>')
        try:
            b_fit, _se = slope(rows, method)
        except DegenerateFit:
            continue
        per_n: dict[int, list] = {}
        for r in rows:
            if r.method == method and r.loss and np.isfinite(r.loss):
                per_n.setdefault(r.n, []).append(r.loss)
        ns = sorted(per_n)
        xs = np.log(ns)
        ys = np.log([np.median(per_n[n]) for n in ns])
        a_fit = float(np.mean(ys) - b_fit * np.mean(xs))
        xx = np.array([min(ns), max(ns)], dtype=float)
        yy = np.exp(a_fit + b_fit * np.log(xx))
        parts.append(f'<line x1="{sx(np.log10(xx[0])):.2f}" y1="{sy(np.log10(yy[0])):.2f}" '
                     f'x2="{sx(np.log10(xx[1])):.2f}" y2="{sy(np.log10(yy[1])):.2f}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{Wpx-pad}" y="{pad + 16 * (i + 1)}" text-anchor="end" '
                     f'fill="{color}">{method}: slope {b_fit:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
