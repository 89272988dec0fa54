"""Export the placement ILP as CPLEX-LP text, and a small reader to check such files.

Variables (all names are ``<letter>_<indices>``):

* ``x_m_k``        binary, content k stored at zone m
* ``y_m_n_x_k``    requests for k served from m to n over path x
* ``a_m_n_x``      binary, path used
* ``z_m_n_x``      binary, path violates the QoS threshold
* ``l_i_j``        directional load in Mbps
* ``f_i_j_p``      binary, combined load of link {i,j} sits at LUT index p
* ``h_i_j_p``      binary, directional load of (i,j) sits at LUT index p
* ``d_i_j``        delay of the undirected link (i < j)
* ``w1_m_n_x``     z * path latency (linearized)
* ``w2_m_n_x``     a * path latency (linearized)

Path latency and per-edge bandwidth cost are linear in d and h, so they are
written inline rather than as separate columns.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .model import Configuration, Instance, _index, evaluate

DEFAULT_MAX_VARIABLES = 200_000
_LINE_WIDTH = 200


class LpTooLarge(ValueError):
    """The instance would produce more columns than the configured cap."""


class LpSyntaxError(ValueError):
    pass


def _n(*parts: object) -> str:
    return "_".join(str(p) for p in parts)


def _num(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _terms(coefs: Iterable[tuple[float, str]]) -> str:
    out = []
    for c, var in coefs:
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        out.append(f"{sign} {var}" if mag == 1 else f"{sign} {_num(mag)} {var}")
    if not out:
        raise ValueError("row has no terms")
    text = " ".join(out)
    return text[2:] if text.startswith("+ ") else text


def _wrap(text: str, indent: str = "   ") -> list[str]:
    """Split a long row over continuation lines at term boundaries."""
    tokens = text.split(" ")
    lines, cur = [], ""
    for tok in tokens:
        if cur and len(cur) + 1 + len(tok) > _LINE_WIDTH and tok in ("+", "-"):
            lines.append(cur)
            cur = indent + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    lines.append(cur)
    return lines


def _row(name: str, coefs: list[tuple[float, str]], sense: str, rhs: float) -> list[str]:
    return _wrap(f" {name}: {_terms(coefs)} {sense} {_num(rhs)}")


def _steps(capacity: float, granularity: float) -> int:
    return int(round(capacity / granularity))


def variable_count(instance: Instance) -> int:
    """Closed-form column count of the exported model."""
    topo = instance.topology
    n_c = len(instance.demand.contents)
    n_paths = instance.pathset.total()
    mu = instance.params.granularity
    lut_cols = sum(_steps(e.capacity, mu) + 1 for e in topo.edges)
    return (
        len(topo.zone_ids) * n_c
        + n_paths * (n_c + 2)
        + len(topo.edges)
        + 2 * lut_cols
        + len(topo.undirected_edges)
        + 2 * n_paths
    )


def _path_bound(instance: Instance, t: tuple[int, int, int]) -> float:
    return instance.path_bound[t]


def _gamma(instance: Instance, t: tuple[int, int, int]) -> list[tuple[float, str]]:
    out = []
    for i, j in instance.pathset.edges(*t):
        u, v = (i, j) if i < j else (j, i)
        out.append((1.0, _n("d", u, v)))
    return out


def export_ilp(instance: Instance, max_variables: int = DEFAULT_MAX_VARIABLES) -> str:
    """Render the full linearized model in CPLEX-LP syntax."""
    count = variable_count(instance)
    if count > max_variables:
        raise LpTooLarge(f"model needs {count} variables, cap is {max_variables}")

    topo = instance.topology
    params = instance.params
    demand = instance.demand
    ps = instance.pathset
    contents = demand.contents
    zones = topo.zone_ids
    mu = params.granularity
    big_k = instance.big_k
    triples = list(ps.triples())

    lines = [
        "\\ content placement model",
        f"\\ zones={len(zones)} contents={len(contents)} paths={len(triples)} variables={count}",
        f"\\ Q={_num(params.qos)} S={_num(params.sla)} A={_num(params.access_rate)}"
        f" mu={_num(mu)} U={_num(params.latency_cap)} K={_num(big_k)}",
        "Minimize",
    ]
    obj: list[tuple[float, str]] = []
    for m in zones:
        for k in contents:
            obj.append((topo.zone(m).storage_cost, _n("x", m, k)))
    for e in topo.edges:
        lut = instance.cost_luts[e.key]
        for p in range(len(lut)):
            obj.append((lut[p], _n("h", e.src, e.dst, p)))
    for t in triples:
        obj.append((1.0 / params.latency_cap, _n("w1", *t)))
    lines += _wrap(" obj: " + _terms(obj))

    lines.append("Subject To")
    # demand
    for n in zones:
        for k in contents:
            coefs = [(1.0, _n("y", m, n, x, k)) for m in zones for x in range(1, ps.count(m, n) + 1)]
            lines += _row(_n("dem", n, k), coefs, ">=", demand.r(n, k))
    # hosting
    for m in zones:
        for k in contents:
            coefs = [(1.0, _n("y", m, n, x, k)) for n in zones for x in range(1, ps.count(m, n) + 1)]
            coefs.append((-big_k, _n("x", m, k)))
            lines += _row(_n("host", m, k), coefs, "<=", 0)
    # usage
    for t in triples:
        ys = [(1.0, _n("y", *t, k)) for k in contents]
        lines += _row(_n("use", *t), ys + [(-big_k, _n("a", *t))], "<=", 0)
        lines += _row(_n("used", *t), ys + [(-1.0, _n("a", *t))], ">=", 0)
    # QoS with w2 = a * gamma
    for t in triples:
        coefs = [(1.0, _n("w2", *t)), (params.fixed_latency, _n("a", *t)), (-big_k, _n("z", *t))]
        lines += _row(_n("qos", *t), coefs, "<=", params.qos)
    # SLA
    slack = 1.0 - params.sla / 100.0
    coefs = [(1.0, _n("z", *t)) for t in triples] + [(-slack, _n("a", *t)) for t in triples]
    lines += _row("sla", coefs, "<=", 0)
    # loads
    on_edge: dict[tuple[int, int], list[tuple[int, int, int]]] = {e.key: [] for e in topo.edges}
    for t in triples:
        for e in ps.edges(*t):
            on_edge[e].append(t)
    for e in topo.edges:
        coefs = [(1.0, _n("l", e.src, e.dst))]
        coefs += [(-params.access_rate, _n("y", *t, k)) for t in on_edge[e.key] for k in contents]
        lines += _row(_n("load", e.src, e.dst), coefs, "=", 0)
    # latency LUT selection (both directions of every link)
    for e in topo.edges:
        i, j = e.src, e.dst
        steps = _steps(e.capacity, mu)
        coefs = [(1.0, _n("l", i, j)), (1.0, _n("l", j, i))]
        coefs += [(-mu * p, _n("f", i, j, p)) for p in range(1, steps + 1)]
        lines += _row(_n("flut", i, j), coefs, "=", 0)
        lines += _row(_n("fone", i, j), [(1.0, _n("f", i, j, p)) for p in range(steps + 1)], "=", 1)
    for e in topo.undirected_edges:
        lut = instance.latency_luts[e.key]
        coefs = [(1.0, _n("d", e.src, e.dst))]
        coefs += [(-lut[p], _n("f", e.src, e.dst, p)) for p in range(len(lut))]
        lines += _row(_n("delay", e.src, e.dst), coefs, "=", 0)
    # bandwidth LUT selection
    for e in topo.edges:
        i, j = e.src, e.dst
        steps = _steps(e.capacity, mu)
        coefs = [(1.0, _n("l", i, j))] + [(-mu * p, _n("h", i, j, p)) for p in range(1, steps + 1)]
        lines += _row(_n("hlut", i, j), coefs, "=", 0)
        lines += _row(_n("hone", i, j), [(1.0, _n("h", i, j, p)) for p in range(steps + 1)], "=", 1)
    # product linearization: w = b * gamma, with gamma <= M on the path
    for t in triples:
        gamma = _gamma(instance, t)
        bound = _path_bound(instance, t)
        for w, b in (("w1", "z"), ("w2", "a")):
            wv, bv = _n(w, *t), _n(b, *t)
            neg = [(-c, v) for c, v in gamma]
            lines += _row(_n(w, "ub", *t), [(1.0, wv), (-bound, bv)], "<=", 0)
            lines += _row(_n(w, "le", *t), [(1.0, wv)] + neg if gamma else [(1.0, wv)], "<=", 0)
            lines += _row(_n(w, "ge", *t), [(1.0, wv)] + neg + [(-bound, bv)], ">=", -bound)

    lines.append("Bounds")
    for e in topo.edges:
        lines.append(f" 0 <= {_n('l', e.src, e.dst)} <= {_num(e.capacity)}")
    for e in topo.undirected_edges:
        lines.append(f" 0 <= {_n('d', e.src, e.dst)} <= {_num(params.latency_cap)}")

    lines.append("Binary")
    names = [_n("x", m, k) for m in zones for k in contents]
    names += [_n(v, *t) for t in triples for v in ("a", "z")]
    for e in topo.edges:
        steps = _steps(e.capacity, mu)
        names += [_n(v, e.src, e.dst, p) for v in ("f", "h") for p in range(steps + 1)]
    for i in range(0, len(names), 8):
        lines.append(" " + " ".join(names[i : i + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def solution_assignment(config: Configuration, instance: Instance) -> dict[str, float]:
    """Values of every exported column for a concrete configuration."""
    topo = instance.topology
    params = instance.params
    ps = instance.pathset
    mu = params.granularity
    ev = evaluate(config, instance)
    flows = config.flow_map()
    out: dict[str, float] = {}
    for m in topo.zone_ids:
        for k in instance.demand.contents:
            out[_n("x", m, k)] = float((m, k) in config.placement)
    for t in ps.triples():
        for k in instance.demand.contents:
            out[_n("y", *t, k)] = float(flows.get((*t, k), 0.0))
        gamma = ev.latency[t]
        out[_n("a", *t)] = float(ev.a[t])
        out[_n("z", *t)] = float(ev.z[t])
        out[_n("w1", *t)] = ev.z[t] * gamma
        out[_n("w2", *t)] = ev.a[t] * gamma
    for e in topo.edges:
        i, j = e.src, e.dst
        out[_n("l", i, j)] = ev.loads[(i, j)]
        steps = _steps(e.capacity, mu)
        pf = _index(ev.loads[(i, j)] + ev.loads[(j, i)], mu)
        ph = _index(ev.loads[(i, j)], mu)
        for p in range(steps + 1):
            out[_n("f", i, j, p)] = float(p == pf)
            out[_n("h", i, j, p)] = float(p == ph)
    for e in topo.undirected_edges:
        out[_n("d", e.src, e.dst)] = ev.delays[e.key]
    return out


# ---------------------------------------------------------------------------
# Reading LP text back


@dataclass
class Row:
    name: str
    coefs: dict[str, float]
    sense: str
    rhs: float

    def activity(self, assign: Mapping[str, float]) -> float:
        return sum(c * assign.get(v, 0.0) for v, c in self.coefs.items())


@dataclass
class LpModel:
    sense: str
    objective: dict[str, float]
    rows: list[Row]
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    binaries: set[str] = field(default_factory=set)
    generals: set[str] = field(default_factory=set)

    @property
    def variables(self) -> set[str]:
        names = set(self.objective) | set(self.bounds) | self.binaries | self.generals
        for r in self.rows:
            names.update(r.coefs)
        return names

    def objective_value(self, assign: Mapping[str, float]) -> float:
        return sum(c * assign.get(v, 0.0) for v, c in self.objective.items())

    def check(self, assign: Mapping[str, float], tol: float = 1e-9) -> list[str]:
        """Names of rows, bounds or integrality conditions the assignment breaks."""
        bad = []
        for r in self.rows:
            act = r.activity(assign)
            scale = tol * max(1.0, abs(r.rhs))
            if r.sense == "<=" and act > r.rhs + scale:
                bad.append(r.name)
            elif r.sense == ">=" and act < r.rhs - scale:
                bad.append(r.name)
            elif r.sense == "=" and abs(act - r.rhs) > scale:
                bad.append(r.name)
        for v in sorted(self.variables):
            val = assign.get(v, 0.0)
            lo, hi = self.bounds.get(v, (0.0, math.inf))
            if v in self.binaries:
                lo, hi = max(lo, 0.0), min(hi, 1.0)
            if val < lo - tol or val > hi + tol:
                bad.append(f"bound:{v}")
            if (v in self.binaries or v in self.generals) and abs(val - round(val)) > tol:
                bad.append(f"integer:{v}")
        return bad


_NAME = r"[A-Za-z_!\"#$%&()/,;?@`'{}|~][A-Za-z0-9_!\"#$%&()/,.;?@`'{}|~]*"
_NUMBER = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM = re.compile(rf"\s*([+-])?\s*({_NUMBER})?\s*({_NAME})")
_NAME_RE = re.compile(rf"^{_NAME}$")
_SECTIONS = {
    "minimize": "obj", "minimise": "obj", "minimum": "obj", "min": "obj",
    "maximize": "obj", "maximise": "obj", "maximum": "obj", "max": "obj",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binary": "bin", "binaries": "bin", "bin": "bin",
    "general": "gen", "generals": "gen", "gen": "gen",
    "end": "end",
}


def _parse_expr(text: str, where: str) -> dict[str, float]:
    coefs: dict[str, float] = {}
    pos, first = 0, True
    text = text.rstrip()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise LpSyntaxError(f"{where}: cannot parse near {text[pos:pos + 30]!r}")
        sign, num, name = m.groups()
        if sign is None and not first:
            raise LpSyntaxError(f"{where}: missing operator before {name!r}")
        c = float(num) if num else 1.0
        if sign == "-":
            c = -c
        coefs[name] = coefs.get(name, 0.0) + c
        pos, first = m.end(), False
        while pos < len(text) and text[pos].isspace():
            pos += 1
    if first:
        raise LpSyntaxError(f"{where}: empty expression")
    return coefs


def _split_label(stmt: str) -> tuple[str | None, str]:
    if ":" in stmt:
        label, body = stmt.split(":", 1)
        label = label.strip()
        if not _NAME_RE.match(label):
            raise LpSyntaxError(f"bad row label {label!r}")
        return label, body
    return None, stmt


def _statements(lines: list[str]) -> list[str]:
    """Join continuation lines: a statement ends at a line containing a relation."""
    out, cur = [], ""
    for ln in lines:
        cur = f"{cur} {ln}" if cur else ln
        if re.search(r"(<=|>=|=<|=>|<|>|=)", ln):
            out.append(cur.strip())
            cur = ""
    if cur.strip():
        raise LpSyntaxError(f"unterminated constraint: {cur.strip()[:60]!r}")
    return out


def parse_lp(text: str) -> LpModel:
    """Parse the subset of CPLEX-LP that the exporter writes; raise on malformed input."""
    section = None
    seen: list[str] = []
    buckets: dict[str, list[str]] = {"obj": [], "st": [], "bounds": [], "bin": [], "gen": []}
    sense = "min"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        if "end" in seen:
            raise LpSyntaxError(f"line {lineno}: content after End")
        low = line.lower()
        if low in _SECTIONS:
            section = _SECTIONS[low]
            if section in seen:
                raise LpSyntaxError(f"line {lineno}: duplicate section {line!r}")
            if section == "obj":
                sense = "max" if low.startswith("max") else "min"
            seen.append(section)
            continue
        if section is None:
            raise LpSyntaxError(f"line {lineno}: content before objective section")
        buckets[section].append(line)
    order = [s for s in ("obj", "st", "bounds", "bin", "gen", "end") if s in seen]
    if seen != order:
        raise LpSyntaxError(f"sections out of order: {seen}")
    if "obj" not in seen or "st" not in seen or "end" not in seen:
        raise LpSyntaxError("objective, constraint and End sections are mandatory")

    label, body = _split_label(" ".join(buckets["obj"]))
    objective = _parse_expr(body, label or "objective")

    rows: list[Row] = []
    names: set[str] = set()
    for i, stmt in enumerate(_statements(buckets["st"]), 1):
        label, body = _split_label(stmt)
        label = label or f"R{i}"
        if label in names:
            raise LpSyntaxError(f"duplicate row name {label!r}")
        names.add(label)
        m = re.match(r"^(.*?)(<=|>=|=<|=>|<|>|=)\s*([+-]?\s*" + _NUMBER + r")\s*$", body.strip())
        if not m:
            raise LpSyntaxError(f"row {label}: expected '<expr> <relation> <number>'")
        rel = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(m.group(2), m.group(2))
        rows.append(Row(label, _parse_expr(m.group(1), label), rel, float(m.group(3).replace(" ", ""))))

    bounds: dict[str, tuple[float, float]] = {}
    num = rf"[+-]?(?:{_NUMBER}|inf(?:inity)?)"
    for stmt in buckets["bounds"]:
        s = stmt.strip()
        m2 = re.match(rf"^({num})\s*<=\s*({_NAME})\s*<=\s*({num})$", s, re.I)
        m1 = re.match(rf"^({_NAME})\s*(<=|>=|=)\s*({num})$", s, re.I)
        if m2:
            bounds[m2.group(2)] = (float(m2.group(1)), float(m2.group(3)))
        elif m1:
            lo, hi = bounds.get(m1.group(1), (0.0, math.inf))
            val = float(m1.group(3))
            if m1.group(2) == "<=":
                hi = val
            elif m1.group(2) == ">=":
                lo = val
            else:
                lo = hi = val
            bounds[m1.group(1)] = (lo, hi)
        elif re.match(rf"^({_NAME})\s+free$", s, re.I):
            bounds[s.split()[0]] = (-math.inf, math.inf)
        else:
            raise LpSyntaxError(f"bad bound {s!r}")

    def _names(lines: list[str]) -> set[str]:
        out = set()
        for ln in lines:
            for tok in ln.split():
                if not _NAME_RE.match(tok):
                    raise LpSyntaxError(f"bad variable name {tok!r}")
                out.add(tok)
        return out

    return LpModel(sense, objective, rows, bounds, _names(buckets["bin"]), _names(buckets["gen"]))
