"""Experiment configs: TOML in, a validated and normalized dict out.

The normalized form fills every default and is what gets hashed and
embedded in run summaries; feeding it back (as JSON) reproduces the run.
"""

import hashlib
import json
import math
import re

import tomli

from . import analytic, geometry, samplers
from . import source as src
from .domain import DomainError, DomainSpec
from .estimate import COROLLARY_KINDS
from .verify import ESTIMATE_IDS, SUBREGIONS

SCHEMA = 1


class ConfigError(ValueError):
    def __init__(self, msg, field=None, line=None):
        where = field or "config"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {msg}")
        self.field = field
        self.line = line


def _line_of(text, path):
    """Best-effort line number of a dotted config path such as ``solution[1].h``."""
    if not text:
        return None
    parts = path.split(".")
    lines = text.splitlines()
    start = 0
    head = parts[0]
    m = re.fullmatch(r"(\w+)\[(\d+)\]", head)
    if m:
        name, idx = m.group(1), int(m.group(2))
        hits = [i for i, ln in enumerate(lines) if ln.strip() == f"[[{name}]]"]
        if idx < len(hits):
            start = hits[idx]
    else:
        for i, ln in enumerate(lines):
            if ln.strip() == f"[{head}]":
                start = i
                break
    if len(parts) == 1:
        return start + 1
    key = re.sub(r"\[\d+\]$", "", parts[-1])
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i in range(start, len(lines)):
        if pat.match(lines[i]):
            return i + 1
    return start + 1


class _Ctx:
    def __init__(self, text):
        self.text = text

    def fail(self, path, msg):
        raise ConfigError(msg, path, _line_of(self.text, path))


def _num(ctx, table, key, path, default=None, positive=False):
    if key not in table:
        if default is None:
            ctx.fail(f"{path}.{key}", "missing value")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        ctx.fail(f"{path}.{key}", f"expected a finite number, got {val!r}")
    if positive and not val > 0:
        ctx.fail(f"{path}.{key}", f"must be positive, got {val!r}")
    return float(val)


def _norm_metric(ctx, m):
    kind = str(m.get("kind", "euclidean")).lower()
    if kind == "euclidean":
        n = m.get("n", 2)
        if not isinstance(n, int) or n < 1:
            ctx.fail("metric.n", f"dimension must be a positive integer, got {n!r}")
        return {"kind": "euclidean", "n": n}
    if kind == "poincare":
        lam = _num(ctx, m, "lambda", "metric", positive=True)
        return {"kind": "poincare", "lambda": lam}
    ctx.fail("metric.kind", f"unknown metric {kind!r} (euclidean | poincare)")


def build_metric(nm):
    if nm["kind"] == "euclidean":
        return geometry.euclidean(nm["n"])
    return geometry.poincare(nm["lambda"])


def _norm_domain(ctx, d, path, n, base=None):
    base = base or {}
    out = {}
    x0 = d.get("x0", base.get("x0", [0.0] * n))
    if not isinstance(x0, list) or len(x0) != n:
        ctx.fail(f"{path}.x0", f"expected a list of {n} coordinates")
    out["x0"] = [float(c) for c in x0]
    for key in ("R", "t0", "T", "rho", "delta"):
        if key in d:
            out[key] = _num(ctx, d, key, path)
        elif key in base:
            out[key] = base[key]
        elif key == "t0":
            out[key] = 0.0
        else:
            ctx.fail(f"{path}.{key}", "missing value")
    try:
        DomainSpec.from_dict(out)
    except DomainError as exc:
        ctx.fail(f"{path}.{exc.field}", str(exc))
    return out


def _norm_source(ctx, s):
    s = dict(s)
    try:
        spec = src.SourceSpec.from_dict({"kind": s.pop("kind", "zero"), **s})
    except src.SourceError as exc:
        ctx.fail("source", str(exc))
    return spec.to_dict()


def _norm_sampler(ctx, val, path):
    if isinstance(val, str):
        val = {"id": val}
    if not isinstance(val, dict) or "id" not in val:
        ctx.fail(path, "expected a sampler id or {id = ..., ...}")
    if val["id"] not in samplers.registered_samplers():
        ctx.fail(path, f"unknown sampler {val['id']!r}; known: {samplers.registered_samplers()}")
    return {"id": val["id"], "params": dict(val.get("params", {}))}


def _norm_solution(ctx, s, path, dom, metric, source, idx):
    metric_n = metric.n
    out = {"id": str(s.get("id", f"field{idx}"))}
    out["h"] = _num(ctx, s, "h", path, 0.05, positive=True)
    out["dt"] = _num(ctx, s, "dt", path, out["h"], positive=True)
    out["M"] = _num(ctx, s, "M", path, positive=True) if s.get("M") is not None else None
    out["radial"] = bool(s.get("radial", False))
    out["domain"] = _norm_domain(ctx, s.get("domain", {}), f"{path}.domain", metric_n, dom)
    if "analytic" in s:
        kind = s["analytic"]
        if kind not in analytic.KINDS:
            ctx.fail(f"{path}.analytic", f"unknown analytic solution {kind!r}")
        if source["kind"] != "zero":
            ctx.fail(f"{path}.analytic", "analytic solutions solve the source-free equation")
        out.update(kind="analytic", analytic=kind, params=dict(s.get("params", {})))
        try:
            cf = analytic.make_closed_form(kind, **out["params"])
        except (TypeError, ValueError) as exc:
            ctx.fail(f"{path}.params", str(exc))
        try:
            cf.validate(DomainSpec.from_dict(out["domain"]), metric)
        except ValueError as exc:
            ctx.fail(f"{path}.analytic", str(exc))
    elif "solve" in s or "initial" in s:
        scheme = str(s.get("scheme", "cn")).lower()
        if scheme not in ("cn", "explicit"):
            ctx.fail(f"{path}.scheme", f"scheme must be cn or explicit, got {scheme!r}")
        out.update(kind="solve", scheme=scheme,
                   initial=_norm_sampler(ctx, s.get("initial"), f"{path}.initial"),
                   boundary=_norm_sampler(ctx, s.get("boundary", s.get("initial")),
                                          f"{path}.boundary"))
    else:
        ctx.fail(path, "solution needs either analytic = <kind> or initial = <sampler>")
    return out


def _norm_C(ctx, val, path):
    if val == "calibrate":
        return "calibrate"
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not val > 0:
        ctx.fail(path, f"C must be a positive number or \"calibrate\", got {val!r}")
    return float(val)


def _norm_fields(ctx, c, path, ids):
    fields = c.get("fields", ids)
    if isinstance(fields, str):
        fields = [fields]
    for f in fields:
        if f not in ids:
            ctx.fail(f"{path}.fields", f"unknown solution id {f!r}")
    if not fields:
        ctx.fail(f"{path}.fields", "empty field list")
    return list(fields)


def _norm_estimate(ctx, name, path):
    if name not in ESTIMATE_IDS:
        ctx.fail(path, f"unknown estimate {name!r}; known: {list(ESTIMATE_IDS)}")
    return name


def _norm_check(ctx, c, path, ids):
    kind = c.get("type", "check")
    out = {"type": kind, "fields": _norm_fields(ctx, c, path, ids)}
    if kind == "check":
        out["estimate"] = _norm_estimate(ctx, c.get("estimate"), f"{path}.estimate")
        out["C"] = _norm_C(ctx, c.get("C", "calibrate"), f"{path}.C")
        out["params"] = dict(c.get("params", {}))
        sub = c.get("subregion")
        if sub is not None and sub not in SUBREGIONS:
            ctx.fail(f"{path}.subregion", f"unknown subregion {sub!r}")
        out["subregion"] = sub
        out["tolerance"] = _num(ctx, c, "tolerance", path, 1e-4, positive=True)
        traces = c.get("traces", {})
        out["traces"] = {}
        for key in ("tau", "sigma"):
            v = traces.get(key, "known")
            if v not in ("known", "unknown"):
                ctx.fail(f"{path}.traces.{key}", "expected \"known\" or \"unknown\"")
            out["traces"][key] = v
        mm = c.get("mu_method", "auto")
        if mm not in ("auto", "closed", "grid", "coupled"):
            ctx.fail(f"{path}.mu_method", f"unknown mu method {mm!r}")
        out["mu_method"] = mm
        if out["estimate"] == "MaZeng" and "regime" in out["params"]:
            if out["params"]["regime"] not in ("Z1", "Z2", "Z3"):
                ctx.fail(f"{path}.params.regime", "regime must be Z1, Z2 or Z3")
    elif kind == "lemma":
        out["collar"] = int(c.get("collar", 2))
        out["tol_constant"] = _num(ctx, c, "tol_constant", path, 10.0, positive=True)
    elif kind == "compare":
        entries = c.get("entries")
        if not entries:
            ctx.fail(f"{path}.entries", "compare needs at least one entry")
        out["entries"] = []
        for j, e in enumerate(entries):
            if isinstance(e, str):
                e = {"estimate": e}
            epath = f"{path}.entries[{j}]"
            name = _norm_estimate(ctx, e.get("estimate"), f"{epath}.estimate")
            if name not in COROLLARY_KINDS + ("theorem",):
                ctx.fail(f"{epath}.estimate", "compare takes log-gradient bounds only")
            out["entries"].append({"estimate": name, "params": dict(e.get("params", {})),
                                   "C": _norm_C(ctx, e.get("C", c.get("C", "calibrate")),
                                                f"{epath}.C")})
        out["shared_C"] = bool(c.get("shared_C", True))
        subs = c.get("subregions", ["half"])
        for s in subs:
            if s not in SUBREGIONS:
                ctx.fail(f"{path}.subregions", f"unknown subregion {s!r}")
        out["subregions"] = list(subs)
    else:
        ctx.fail(f"{path}.type", f"unknown check type {kind!r} (check | lemma | compare)")
    return out


def normalize(raw, text=""):
    ctx = _Ctx(text)
    if "config" in raw and raw.get("schema") == SCHEMA:
        raw = raw["config"]          # a run summary fed back in
    metric = _norm_metric(ctx, raw.get("metric", {}))
    n = metric["n"] if metric["kind"] == "euclidean" else 2
    if "domain" not in raw:
        ctx.fail("domain", "missing section")
    dom = _norm_domain(ctx, raw["domain"], "domain", n)
    source = _norm_source(ctx, raw.get("source", {"kind": "zero"}))
    sols = raw.get("solution", raw.get("solutions"))
    if sols is None:
        ctx.fail("solution", "missing section")
    if isinstance(sols, dict):
        sols = [sols]
    solutions = []
    for i, s in enumerate(sols):
        solutions.append(_norm_solution(ctx, s, f"solution[{i}]", dom, build_metric(metric),
                                        source, i))
    ids = [s["id"] for s in solutions]
    if len(set(ids)) != len(ids):
        ctx.fail("solution", f"duplicate solution ids {ids}")
    checks = [_norm_check(ctx, c, f"checks[{i}]", ids) for i, c in enumerate(raw.get("checks", []))]
    outputs = raw.get("outputs", {})
    return {
        "metric": metric, "domain": dom, "source": source, "solutions": solutions,
        "checks": checks,
        "outputs": {"csv": bool(outputs.get("csv", False)),
                    "fields": bool(outputs.get("fields", False))},
    }


def load_config(path):
    """Read and normalize a TOML (or JSON summary) config; raises ConfigError."""
    with open(path, "rb") as fh:
        data = fh.read()
    text = data.decode("utf-8", errors="replace")
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(exc), None, exc.lineno) from None
    else:
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(str(exc), None, int(m.group(1)) if m else None) from None
    return normalize(raw, text)


def canonical(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()
