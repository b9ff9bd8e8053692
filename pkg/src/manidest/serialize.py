"""Versioned structured-text serialization of model descriptors.

Models serialize to JSON with a schema tag; wavelet expansions reuse the
(j, l, k..., value) row layout, and hard-instance codes flatten to 0/1
arrays in row-major cell order.
"""

from __future__ import annotations

import json

import numpy as np

MODEL_SCHEMA = "manidest-model-v1"
INSTANCE_SCHEMA = "manidest-hardinstance-v1"


def chart_to_dict(chart) -> dict:
    return {
        "degree": chart.G.degree,
        "dim_in": chart.G.dim_in,
        "dim_out": chart.G.dim_out,
        "G_coeffs": chart.G.coeffs.tolist(),
        "Q_coeffs": chart.Q.coeffs.tolist(),
        "loss": chart.loss,
        "iterations": chart.iterations,
    }


def fitted_model_to_dict(model) -> dict:
    surr = model.surrogate
    comps = []
    for i, m in enumerate(surr.active):
        exp = model.latent_expansion(i)
        comps.append({
            "component": int(m),
            "chart": chart_to_dict(surr.charts[m]),
            "latent_dim": exp.dim,
            "latent_J": exp.J,
            "latent_rows": [list(r) for r in exp.rows()],
        })
    cover = surr.cfg.cover
    return {
        "schema": MODEL_SCHEMA,
        "kind": "fitted-mixture",
        "weights": [float(v) for v in model.weights],
        "component_masses": [float(v) for v in model.component_masses()],
        "acceptance_cover": {
            "centers": cover.centers.tolist(),
            "radii": cover.radii.tolist(),
            "L": cover.L,
        },
        "components": comps,
        "diagnostics": model.diagnostics(),
    }


def sphere_truth_to_dict(truth) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "kind": "sphere-truth",
        "d": truth.d,
        "D": truth.D,
        "weights": [truth.w_band, truth.w_caps],
    }


def hard_instance_to_dict(inst) -> dict:
    return {
        "schema": INSTANCE_SCHEMA,
        "family": inst.family,
        "m": int(inst.m),
        "code": inst.code_rows(),
        "params": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                   for k, v in inst.params.items()},
    }


def dump(obj: dict, path: str) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def points_to_csv(points: np.ndarray, path: str, weights=None) -> str:
    import csv
    pts = np.atleast_2d(points)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [f"x{i}" for i in range(pts.shape[1])] + (["weight"] if weights is not None else [])
        writer.writerow(header)
        for i, p in enumerate(pts):
            row = [repr(float(v)) for v in p]
            if weights is not None:
                row.append(repr(float(weights[i])))
            writer.writerow(row)
    return path


def points_from_csv(path: str):
    import csv
    pts, wts = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c for c in reader.fieldnames if c.startswith("x")]
        has_w = "weight" in reader.fieldnames
        for rec in reader:
            pts.append([float(rec[c]) for c in cols])
            if has_w:
                wts.append(float(rec["weight"]))
    return np.asarray(pts), (np.asarray(wts) if wts else None)
