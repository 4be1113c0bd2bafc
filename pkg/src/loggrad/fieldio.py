"""Plain-text persistence for solution fields.

Line 1 is a JSON header (domain, metric, M, h, dt, provenance, lattice
axes and time levels); every further line is one node ``t x... u``.
Floats are written with ``repr`` so a save/load round trip is bit-exact.
"""

import json

import numpy as np

from . import analytic, geometry
from .analytic import _RadialClosed
from .domain import DomainSpec
from .solver import SolutionField

FORMAT = "loggrad-field"
VERSION = 1


class FieldFileError(ValueError):
    pass


def save_field(fld, path):
    header = {
        "format": FORMAT, "version": VERSION,
        "domain": fld.domain.to_dict(), "metric": fld.metric.to_dict(),
        "M": fld.M, "h": fld.h, "dt": fld.dt, "radial": fld.radial, "label": fld.label,
        "provenance": fld.provenance,
        "axes": [a.tolist() for a in fld.axes], "t": fld.t.tolist(),
    }
    pts = fld.points.reshape(-1, len(fld.axes))
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for j, tj in enumerate(fld.t):
            tr = repr(float(tj))
            for p, val in zip(pts, fld.u[j].ravel()):
                fh.write(" ".join([tr, *(repr(float(c)) for c in p), repr(float(val))]) + "\n")


def load_field(path):
    with open(path) as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise FieldFileError(f"{path}: bad header ({exc})") from None
        if header.get("format") != FORMAT:
            raise FieldFileError(f"{path}: not a field file")
        rows = np.loadtxt(fh, dtype=float, ndmin=2)
    axes = tuple(np.array(a, dtype=float) for a in header["axes"])
    t = np.array(header["t"], dtype=float)
    shape = (t.size,) + tuple(a.size for a in axes)
    if rows.shape != (int(np.prod(shape)), len(axes) + 2):
        raise FieldFileError(f"{path}: expected {np.prod(shape)} rows of {len(axes) + 2} columns")
    if not np.array_equal(rows[:, 0].reshape(t.size, -1)[:, 0], t):
        raise FieldFileError(f"{path}: time column disagrees with the header")
    prov = header["provenance"]
    metric = geometry.MetricSpec.from_dict(header["metric"])
    closed = None
    if prov.get("type") == "analytic":
        closed = analytic.make_closed_form(prov["kind"], **prov["params"])
        if header["radial"]:
            closed = _RadialClosed(closed)
    return SolutionField(
        domain=DomainSpec.from_dict(header["domain"]), metric=metric, axes=axes, t=t,
        u=rows[:, -1].reshape(shape).copy(), M=float(header["M"]), provenance=prov,
        h=float(header["h"]), dt=float(header["dt"]), radial=bool(header["radial"]),
        closed=closed, label=header.get("label", ""))
