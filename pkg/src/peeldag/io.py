"""CSV ingestion and JSON/CSV persistence.

Everything written to disk uses 1-based node indices and carries a
``schema_version``; conversion to the 0-based internal convention happens
only in this module.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import IoError, MissingValue, ParseError, RowMismatch
from .graph import (Edge, HypothesisClassification, HypothesisMode, HypothesisSpec, SuperGraph)
from .inference import DpTestReport
from .refit import WeightedDag

SCHEMA_VERSION = 1
_MISSING = {"", "na", "nan", "null", "none", "?"}

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    x_names: Optional[Tuple[str, ...]] = None
    y_names: Optional[Tuple[str, ...]] = None

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def q(self) -> int:
        return self.x.shape[1]


def read_matrix(path: PathLike, header: bool = False,
                delimiter: str = ",") -> Tuple[np.ndarray, Optional[Tuple[str, ...]]]:
    """Numeric CSV to a 2-d array; lines starting with ``#`` are skipped."""
    path = Path(path)
    rows: List[List[float]] = []
    names = None
    width = None
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ParseError(path, 0, 0, f"cannot open file: {exc.strerror}") from exc
    with fh:
        for lineno, raw in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not raw or (len(raw) == 1 and not raw[0].strip()) or raw[0].lstrip().startswith("#"):
                continue
            if header and names is None:
                names = tuple(c.strip() for c in raw)
                width = len(names)
                continue
            if width is None:
                width = len(raw)
            elif len(raw) != width:
                raise ParseError(path, lineno, len(raw), f"expected {width} fields, found {len(raw)}")
            row = []
            for col, cell in enumerate(raw, start=1):
                text = cell.strip()
                if text.lower() in _MISSING:
                    raise MissingValue(path, lineno, col, "missing value")
                try:
                    val = float(text)
                except ValueError:
                    raise ParseError(path, lineno, col, f"non-numeric cell {text!r}") from None
                if not math.isfinite(val):
                    raise MissingValue(path, lineno, col, f"non-finite value {text!r}")
                row.append(val)
            rows.append(row)
    if not rows:
        raise ParseError(path, 0, 0, "no data rows")
    return np.array(rows, dtype=float), names


def parse_dataset(y_path: PathLike, x_path: PathLike, header: bool = False,
                  delimiter: str = ",") -> Dataset:
    y, y_names = read_matrix(y_path, header, delimiter)
    x, x_names = read_matrix(x_path, header, delimiter)
    if x.shape[0] != y.shape[0]:
        raise RowMismatch(f"{y_path} has {y.shape[0]} rows but {x_path} has {x.shape[0]}")
    return Dataset(x, y, x_names, y_names)


def write_matrix(path: PathLike, m: np.ndarray, names: Optional[Sequence[str]] = None) -> None:
    """Write with full float precision so values survive a round trip."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    try:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if names is not None:
                w.writerow(names)
            for row in m:
                w.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc


def _pairs_out(edges: Iterable[Edge]) -> List[List[int]]:
    return [[a + 1, b + 1] for a, b in sorted(edges)]


def _pairs_in(pairs: Iterable[Sequence[int]]) -> List[Edge]:
    out = []
    for pair in pairs:
        if len(pair) != 2:
            raise ValueError(f"edge {pair!r} is not a pair")
        a, b = int(pair[0]), int(pair[1])
        if a < 1 or b < 1:
            raise ValueError(f"edge {pair!r} is not 1-based")
        out.append((a - 1, b - 1))
    return out


def supergraph_to_dict(s: SuperGraph) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "p": s.p,
        "q": s.q,
        "ancestral": _pairs_out(s.ancestral),
        "interventions": _pairs_out(s.interventions),
        "heights": list(s.heights),
    }


def supergraph_from_dict(d: Dict[str, Any]) -> SuperGraph:
    """Also accepts a simulation truth file, which nests the super-graph."""
    if "supergraph" in d:
        d = d["supergraph"]
    missing = [k for k in ("p", "q", "ancestral", "interventions") if k not in d]
    if missing:
        raise ValueError(f"super-graph document lacks {missing}")
    return SuperGraph(int(d["p"]), int(d["q"]), frozenset(_pairs_in(d["ancestral"])),
                      frozenset(_pairs_in(d["interventions"])), tuple(d.get("heights") or ()))


def hypothesis_to_dict(h: HypothesisSpec) -> Dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, "mode": h.mode.value,
            "edges": [[k + 1, j + 1] for k, j in h.edges]}


def hypothesis_from_json(obj: Any, mode: Optional[HypothesisMode] = None) -> HypothesisSpec:
    """Accept a bare ``[[k, j], ...]`` list or ``{"edges": ..., "mode": ...}``."""
    if isinstance(obj, dict):
        edges = obj["edges"]
        mode = mode or HypothesisMode(obj.get("mode", "edge"))
    else:
        edges = obj
    return HypothesisSpec(tuple(_pairs_in(edges)), mode or HypothesisMode.EDGE)


def classification_to_dict(c: HypothesisClassification) -> Dict[str, Any]:
    return {
        "nondegenerate": [[k + 1, j + 1] for k, j in c.nondegenerate],
        "is_degenerate": c.is_degenerate,
        "is_regular": c.is_regular,
        "per_node_d": {str(j + 1): [k + 1 for k in ks] for j, ks in c.per_node_d.items()},
    }


def classification_from_dict(d: Dict[str, Any]) -> HypothesisClassification:
    return HypothesisClassification(
        tuple(_pairs_in(d["nondegenerate"])), bool(d["is_degenerate"]), bool(d["is_regular"]),
        {int(j) - 1: tuple(k - 1 for k in ks) for j, ks in d["per_node_d"].items()})


def _num(v: float) -> Any:
    v = float(v)
    return v if math.isfinite(v) else None


def report_to_dict(r: DpTestReport) -> Dict[str, Any]:
    lr = [_num(v) for v in r.lr] if isinstance(r.lr, tuple) else _num(r.lr)
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": r.mode,
        "method": r.method,
        "hypothesis": [[k + 1, j + 1] for k, j in r.hypothesis],
        "pvalue": r.pvalue,
        "asymptotic_pvalue": r.asymptotic_pvalue,
        "reason": r.reason,
        "lr": lr,
        "edge_pvalues": list(r.edge_pvalues),
        "n_contained": r.n_contained,
        "n_replicates": int(r.contained.size),
        "n_failed": r.n_failed,
        "sigma2_hat": [float(v) for v in r.sigma2_hat],
        "classification": classification_to_dict(r.classification),
        "lr_star": [[_num(v) for v in np.atleast_1d(row)] for row in r.lr_star],
        "contained": [bool(c) for c in r.contained],
        "supergraph": None if r.supergraph is None else supergraph_to_dict(r.supergraph),
    }


def report_from_dict(d: Dict[str, Any]) -> DpTestReport:
    lr = tuple(d["lr"]) if isinstance(d["lr"], list) else d["lr"]
    star = np.array([[np.nan if v is None else v for v in row] for row in d["lr_star"]], dtype=float)
    if star.size == 0:
        star = star.reshape(0, 1)
    if star.ndim == 2 and star.shape[1] == 1 and not isinstance(lr, tuple):
        star = star[:, 0]
    sg = d.get("supergraph")
    return DpTestReport(
        d["mode"], d["method"], tuple(_pairs_in(d["hypothesis"])),
        classification_from_dict(d["classification"]), lr, star,
        np.array(d["contained"], dtype=bool), float(d["pvalue"]), int(d["n_contained"]),
        float(d["asymptotic_pvalue"]), np.array(d["sigma2_hat"], dtype=float),
        None if sg is None else supergraph_from_dict(sg), tuple(d["edge_pvalues"]),
        int(d["n_failed"]), d["reason"])


def dag_to_dict(dag: WeightedDag) -> Dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, "p": dag.p, "q": dag.q,
            "u": dag.u.tolist(), "w": dag.w.tolist(), "sigma2": dag.sigma2.tolist()}


def dag_from_dict(d: Dict[str, Any]) -> WeightedDag:
    return WeightedDag(np.array(d["u"], dtype=float), np.array(d["w"], dtype=float),
                       np.array(d["sigma2"], dtype=float))


def weighted_edges(dag: WeightedDag) -> Dict[str, Any]:
    """Nonzero coefficients of ``U`` and ``W`` as 1-based triples."""
    u = [[int(k) + 1, int(j) + 1, float(dag.u[k, j])] for k, j in zip(*np.nonzero(dag.u))]
    w = [[int(l) + 1, int(j) + 1, float(dag.w[l, j])] for l, j in zip(*np.nonzero(dag.w))]
    return {"schema_version": SCHEMA_VERSION, "p": dag.p, "q": dag.q, "edges": u,
            "interventions": w, "sigma2": dag.sigma2.tolist()}


def read_edge_list(path: PathLike) -> Tuple[Optional[int], List[Edge]]:
    """Edges from a JSON file: a bare pair list, a hypothesis, a weighted edge list, a super-graph or a DAG.

    Returns the node count when the file states it.
    """
    obj = read_json(path)
    if isinstance(obj, list):
        return None, _pairs_in(obj)
    p = obj.get("p")
    if "u" in obj:
        u = np.asarray(obj["u"], dtype=float)
        return u.shape[0], [(int(a), int(b)) for a, b in zip(*np.nonzero(u))]
    if "ancestral" in obj:
        return p, _pairs_in(obj["ancestral"])
    return p, _pairs_in([e[:2] for e in obj["edges"]])


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def write_json(path: PathLike, obj: Any) -> None:
    try:
        Path(path).write_text(dumps(obj))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc


def read_json(path: PathLike) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(path, 0, 0, f"cannot open file: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.colno, exc.msg) from None


def write_table(path: PathLike, rows: Sequence[Dict[str, Any]],
                columns: Optional[Sequence[str]] = None) -> None:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    try:
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: format_cell(row.get(k)) for k in columns})
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc


def format_cell(v: Any) -> Any:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def table_document(rows: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """JSON form of a result table; non-finite floats become ``null``."""
    clean = [{k: _num(v) if isinstance(v, float) else v for k, v in row.items()} for row in rows]
    return {"schema_version": SCHEMA_VERSION, "rows": clean}


def read_table(path: PathLike) -> List[Dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def emit_report(obj: Any, path: PathLike, fmt: str = "json") -> None:
    """Persist a report, super-graph or experiment table (list of dict rows)."""
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(obj, list):
        if fmt == "csv":
            write_table(path, obj)
        else:
            write_json(path, table_document(obj))
        return
    if fmt == "csv":
        raise ValueError("only experiment tables can be written as CSV")
    if isinstance(obj, DpTestReport):
        write_json(path, report_to_dict(obj))
    elif isinstance(obj, SuperGraph):
        write_json(path, supergraph_to_dict(obj))
    elif isinstance(obj, WeightedDag):
        write_json(path, dag_to_dict(obj))
    else:
        write_json(path, obj)
