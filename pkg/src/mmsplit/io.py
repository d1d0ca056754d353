"""Reading and writing spaces, measures, fields, couplings and plot data.

Space files are JSON documents ``{"label", "n", "points"?, "dist", "weight"}``
where ``dist`` is either a nested row-major array or ``{"generator": spec}``.
Floats are written with ``repr``, i.e. 17 significant digits, so a round
trip is bit-exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .space import MetricMeasureSpace, generate_space
from .transport import ProbMeasure

# meta entries that survive a round trip through an explicit distance matrix
_PORTABLE_META = ("h", "dim", "shape", "axis_h", "periodic", "factor_sizes", "fiber_coords", "norm")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def space_to_dict(space: MetricMeasureSpace, inline=True) -> dict:
    """Serialisable form of ``space``.

    With ``inline=False`` a generated space is stored by its generator
    descriptor instead of the full matrix.
    """
    doc = {"label": space.label, "n": space.n}
    if space.points is not None:
        doc["points"] = space.points.tolist()
    gen = space.meta.get("generator")
    if not inline and gen is not None:
        doc["dist"] = {"generator": _jsonable(gen)}
    else:
        doc["dist"] = space.dist.tolist()
    doc["weight"] = space.weight.tolist()
    meta = {k: _jsonable(space.meta[k]) for k in _PORTABLE_META if k in space.meta}
    if meta:
        doc["meta"] = meta
    return doc


def _restore_meta(meta, n):
    out = dict(meta)
    if "shape" in out:
        shape = tuple(int(s) for s in out["shape"])
        if int(np.prod(shape)) == n:
            out["shape"] = shape
            out["lattice_index"] = np.indices(shape).reshape(len(shape), -1).T
            out["axis_h"] = tuple(float(a) for a in out.get("axis_h", (out.get("h", 1.0),) * len(shape)))
            out["periodic"] = tuple(bool(p) for p in out.get("periodic", (False,) * len(shape)))
        else:
            out.pop("shape")
    if "factor_sizes" in out:
        out["factor_sizes"] = tuple(int(s) for s in out["factor_sizes"])
    if "fiber_coords" in out:
        out["fiber_coords"] = np.asarray(out["fiber_coords"], dtype=float)
    return out


def space_from_dict(doc: dict, validate=True) -> MetricMeasureSpace:
    """Inverse of :func:`space_to_dict`; a bare generator descriptor is accepted too."""
    if not isinstance(doc, dict):
        raise ValueError("space document must be a JSON object")
    if "kind" in doc and "dist" not in doc:
        return generate_space(doc)
    if "dist" not in doc:
        raise ValueError("space document is missing field 'dist'")
    dist = doc["dist"]
    if isinstance(dist, dict):
        if "generator" not in dist:
            raise ValueError("field 'dist' must be an array or {'generator': spec}")
        space = generate_space(dist["generator"])
        if "weight" in doc:
            w = np.asarray(doc["weight"], dtype=float)
            space = MetricMeasureSpace(space.dist, w, space.points, doc.get("label", space.label), space.meta, validate=validate)
        _check_n(doc, space.n)
        return space
    if "weight" not in doc:
        raise ValueError("space document is missing field 'weight'")
    D = np.asarray(dist, dtype=float)
    _check_n(doc, D.shape[0] if D.ndim else 0)
    meta = _restore_meta(doc.get("meta", {}), D.shape[0])
    return MetricMeasureSpace(D, doc["weight"], doc.get("points"), doc.get("label", ""), meta, validate=validate)


def _check_n(doc, n):
    if "n" in doc and int(doc["n"]) != n:
        raise ValueError(f"field 'n' says {doc['n']} but the distance matrix has {n} points")


def save_space(space, path, inline=True):
    Path(path).write_text(json.dumps(space_to_dict(space, inline)))


def load_space(source, validate=True) -> MetricMeasureSpace:
    """Space from a JSON file path or an inline JSON string."""
    text = str(source).strip()
    if not text.startswith("{"):
        text = Path(source).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"space is not valid JSON: {exc}") from None
    return space_from_dict(doc, validate)


def load_space_csv(dist_path, weight_path, label=None, validate=True) -> MetricMeasureSpace:
    """Space from an ``n x n`` distance CSV and a one-column weight CSV."""
    D = np.loadtxt(dist_path, delimiter=",", ndmin=2)
    w = np.loadtxt(weight_path, delimiter=",", ndmin=1)
    return MetricMeasureSpace(D, w.ravel(), None, label or Path(dist_path).stem, validate=validate)


def save_space_csv(space, dist_path, weight_path):
    np.savetxt(dist_path, space.dist, delimiter=",", fmt="%.17g")
    np.savetxt(weight_path, space.weight, delimiter=",", fmt="%.17g")


# ----------------------------------------------------------------------------
# measures, fields, couplings


def measure_to_dict(mu: ProbMeasure, space_ref="") -> dict:
    return {"space_ref": space_ref or mu.space.label, "density": mu.density.tolist()}


def measure_from_dict(doc, space) -> ProbMeasure:
    if "density" not in doc:
        raise ValueError("measure document is missing field 'density'")
    return ProbMeasure(space, np.asarray(doc["density"], dtype=float))


def field_to_json(f) -> str:
    return json.dumps([float(x) for x in np.asarray(f, dtype=float)])


def field_from_json(text, space=None) -> np.ndarray:
    f = np.asarray(json.loads(text), dtype=float)
    if space is not None and f.shape != (space.n,):
        raise ValueError(f"field has shape {f.shape}, expected ({space.n},)")
    return f


def coupling_csv(plan) -> str:
    """Sparse triplets ``i,j,mass`` of a coupling."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["i", "j", "mass"])
    for i, j, m in plan.triplets():
        writer.writerow([int(i), int(j), repr(float(m))])
    return buf.getvalue()


def read_coupling_csv(text, n) -> np.ndarray:
    """Dense ``n x n`` matrix from :func:`coupling_csv` output."""
    P = np.zeros((n, n))
    rows = csv.reader(io.StringIO(text))
    next(rows, None)
    for i, j, m in rows:
        P[int(i), int(j)] += float(m)
    return P


def scatter_csv(report) -> str:
    """Pythagoras plot data: observed ``d^2`` against ``d'^2 + dt^2``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["d_sq", "model_sq"])
    for d2, m2 in report.scatter:
        writer.writerow([repr(float(d2)), repr(float(m2))])
    return buf.getvalue()


def save_quotient(q, path, label=None):
    """Quotient as a regular space file, loadable by :func:`load_space`."""
    save_space(q.to_space(label), path)


def atomic_write(path, text):
    """Write ``text`` through a temporary file so readers never see a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
