"""Solver-agnostic representation of one convex subproblem.

A :class:`ConicProgram` is a linear objective over a flat variable vector
``x`` plus typed constraint blocks.  Every block holds one or more affine
expressions ``e = G @ x + h`` and a kind:

``eq``      ``e == 0`` (one constraint per row)
``le``      ``e <= 0`` (one constraint per row)
``soc``     ``e[0] >= ||e[1:]||`` for consecutive groups of ``dim`` rows
``pow``     ``e[0]**a * e[1]**(1-a) >= |e[2]|`` for consecutive row triples
``quad``    ``sum_i w_i * s_i**2 + e <= 0`` with ``s`` a second affine map
            holding ``terms`` rows per constraint and ``w >= 0``

Variable bounds are kept separately as ``lb``/``ub`` arrays; a variable with
``lb == ub`` is fixed.  Each block carries a provenance tag and a flag
saying whether it counts as a modeling-level constraint.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "VariableGroup",
    "VariableLayout",
    "Rows",
    "Block",
    "ConicProgram",
    "ProgramBuilder",
]


@dataclass(frozen=True)
class VariableGroup:
    name: str
    start: int
    shape: tuple
    auxiliary: bool = False
    description: str = ""

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=int))

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size).reshape(self.shape)


class VariableLayout:
    """Named, shaped slices of the flat variable vector."""

    def __init__(self):
        self.groups: dict[str, VariableGroup] = {}
        self.size = 0

    def add(self, name: str, shape, auxiliary: bool = False, description: str = "") -> np.ndarray:
        if name in self.groups:
            raise ValueError(f"duplicate variable group {name!r}")
        shape = tuple(int(s) for s in np.atleast_1d(shape)) if np.ndim(shape) else (int(shape),)
        grp = VariableGroup(name, self.size, shape, auxiliary, description)
        self.groups[name] = grp
        self.size += grp.size
        return grp.index

    def __getitem__(self, name: str) -> np.ndarray:
        return self.groups[name].index

    def __contains__(self, name: str) -> bool:
        return name in self.groups

    def __iter__(self):
        return iter(self.groups.values())

    @property
    def modeling_size(self) -> int:
        return sum(g.size for g in self if not g.auxiliary)

    @property
    def auxiliary_size(self) -> int:
        return sum(g.size for g in self if g.auxiliary)

    def split(self, x) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return {g.name: x[g.start:g.start + g.size].reshape(g.shape).copy() for g in self}

    def pack(self, values: dict, fill: float = 0.0) -> np.ndarray:
        x = np.full(self.size, fill, dtype=float)
        for name, val in values.items():
            g = self.groups[name]
            x[g.start:g.start + g.size] = np.broadcast_to(np.asarray(val, float), g.shape).ravel()
        return x


class Rows:
    """Accumulates the sparse terms of ``m`` affine expressions."""

    def __init__(self, m: int):
        self.m = int(m)
        self._r, self._c, self._v = [], [], []
        self.h = np.zeros(self.m)

    def term(self, rows, cols, vals=1.0) -> "Rows":
        rows, cols, vals = np.broadcast_arrays(np.asarray(rows), np.asarray(cols), np.asarray(vals, dtype=float))
        self._r.append(rows.ravel())
        self._c.append(cols.ravel())
        self._v.append(vals.ravel())
        return self

    def const(self, rows, vals) -> "Rows":
        rows, vals = np.broadcast_arrays(np.asarray(rows), np.asarray(vals, dtype=float))
        np.add.at(self.h, rows.ravel(), vals.ravel())
        return self

    def matrix(self, n: int) -> sp.csr_matrix:
        if self._r:
            r = np.concatenate(self._r)
            c = np.concatenate(self._c)
            v = np.concatenate(self._v)
        else:
            r = c = np.zeros(0, dtype=int)
            v = np.zeros(0)
        G = sp.coo_matrix((v, (r, c)), shape=(self.m, n)).tocsr()
        G.sum_duplicates()
        G.eliminate_zeros()
        return G


@dataclass
class Block:
    """One typed family of constraints; see the module docstring."""

    kind: str
    tag: str
    G: sp.csr_matrix
    h: np.ndarray
    modeling: bool = True
    dim: int = 1
    exponent: float | None = None
    Gs: sp.csr_matrix | None = None
    hs: np.ndarray | None = None
    weights: np.ndarray | None = None
    terms: int = 0

    @property
    def count(self) -> int:
        if self.kind in ("eq", "le", "quad"):
            return self.G.shape[0]
        return self.G.shape[0] // self.dim

    def violation(self, x) -> np.ndarray:
        """Nonnegative violation of every constraint in the block at `x`."""
        e = self.G @ x + self.h
        if self.kind == "eq":
            return np.abs(e)
        if self.kind == "le":
            return np.maximum(e, 0.0)
        if self.kind == "soc":
            e = e.reshape(-1, self.dim)
            return np.maximum(np.linalg.norm(e[:, 1:], axis=1) - e[:, 0], 0.0)
        if self.kind == "pow":
            e = e.reshape(-1, 3)
            a = self.exponent
            base = np.maximum(e[:, 0], 0.0) ** a * np.maximum(e[:, 1], 0.0) ** (1 - a)
            neg = np.maximum(-e[:, 0], 0.0) + np.maximum(-e[:, 1], 0.0)
            return np.maximum(np.abs(e[:, 2]) - base, 0.0) + neg
        if self.kind == "quad":
            s = (self.Gs @ x + self.hs) ** 2 * self.weights
            return np.maximum(s.reshape(-1, self.terms).sum(axis=1) + e, 0.0)
        raise ValueError(f"unknown block kind {self.kind!r}")

    def digest(self) -> str:
        hsh = hashlib.sha256()
        for arr in (self.G.indptr, self.G.indices, self.G.data, self.h):
            hsh.update(np.ascontiguousarray(arr).tobytes())
        if self.kind == "quad":
            for arr in (self.Gs.indptr, self.Gs.indices, self.Gs.data, self.hs, self.weights):
                hsh.update(np.ascontiguousarray(arr).tobytes())
        return hsh.hexdigest()[:16]


@dataclass
class ConicProgram:
    """A convex program ``max c @ x + c0`` over typed blocks and bounds."""

    layout: VariableLayout
    c: np.ndarray
    c0: float
    blocks: list[Block]
    lb: np.ndarray
    ub: np.ndarray
    meta: dict = field(default_factory=dict)
    context: object = None

    @property
    def n(self) -> int:
        return self.layout.size

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, float) + self.c0)

    @property
    def fixed(self) -> np.ndarray:
        return self.lb == self.ub

    def modeling_constraint_count(self) -> int:
        return sum(b.count for b in self.blocks if b.modeling)

    def modeling_variable_count(self) -> int:
        return self.layout.modeling_size

    def tags(self) -> set[str]:
        return {b.tag for b in self.blocks}

    def blocks_tagged(self, tag: str) -> list[Block]:
        return [b for b in self.blocks if b.tag == tag]

    def residuals(self, x) -> dict[str, float]:
        """Largest violation per tag, plus ``"bounds"``."""
        x = np.asarray(x, dtype=float)
        out: dict[str, float] = {}
        for b in self.blocks:
            v = b.violation(x)
            out[b.tag] = max(out.get(b.tag, 0.0), float(v.max()) if v.size else 0.0)
        bnd = np.maximum(self.lb - x, 0.0) + np.maximum(x - self.ub, 0.0)
        out["bounds"] = float(np.nan_to_num(bnd).max()) if bnd.size else 0.0
        return out

    def max_violation(self, x) -> float:
        return max(self.residuals(x).values())

    def dump(self) -> str:
        """Plain-text summary, one line per variable group and per block.

        Block lines carry kind, tag, counts and a digest of the coefficient
        data so two dumps can be diffed line by line.
        """
        buf = io.StringIO()
        buf.write("# conic program dump v1\n")
        buf.write(f"# sense=max variables={self.n} modeling_variables={self.modeling_variable_count()} "
                  f"blocks={len(self.blocks)} modeling_constraints={self.modeling_constraint_count()}\n")
        for key in sorted(self.meta):
            buf.write(f"# meta {key}={self.meta[key]}\n")
        for g in self.layout:
            sl = slice(g.start, g.start + g.size)
            buf.write(f"var {g.name} start={g.start} shape={'x'.join(map(str, g.shape))} "
                      f"aux={int(g.auxiliary)} fixed={int(self.fixed[sl].sum())} "
                      f"lb_min={np.min(self.lb[sl]):.6g} ub_max={np.max(self.ub[sl]):.6g}\n")
        for i, b in enumerate(self.blocks):
            extra = f" exponent={b.exponent:.12g}" if b.kind == "pow" else ""
            buf.write(f"block {i} kind={b.kind} tag={b.tag!r} count={b.count} rows={b.G.shape[0]} "
                      f"dim={b.dim} nnz={b.G.nnz} modeling={int(b.modeling)}{extra} digest={b.digest()}\n")
        obj = hashlib.sha256(np.ascontiguousarray(self.c).tobytes()).hexdigest()[:16]
        buf.write(f"objective nnz={int(np.count_nonzero(self.c))} c0={self.c0:.17g} digest={obj}\n")
        return buf.getvalue()


class ProgramBuilder:
    """Incrementally assembles a :class:`ConicProgram` over a fixed layout."""

    def __init__(self, layout: VariableLayout):
        self.layout = layout
        n = layout.size
        self.lb = np.full(n, -np.inf)
        self.ub = np.full(n, np.inf)
        self.c = np.zeros(n)
        self.c0 = 0.0
        self.blocks: list[Block] = []

    @property
    def n(self) -> int:
        return self.layout.size

    # bounds -----------------------------------------------------------------

    def bound(self, name: str, lb=None, ub=None, where=None) -> None:
        idx = self.layout[name]
        if where is not None:
            idx = idx[where]
        if lb is not None:
            self.lb[idx] = np.broadcast_to(np.asarray(lb, float), idx.shape)
        if ub is not None:
            self.ub[idx] = np.broadcast_to(np.asarray(ub, float), idx.shape)

    def fix(self, name: str, value, where=None) -> None:
        self.bound(name, value, value, where)

    # objective --------------------------------------------------------------

    def maximize(self, cols, coef=1.0, const: float = 0.0) -> None:
        cols, coef = np.broadcast_arrays(np.asarray(cols), np.asarray(coef, float))
        np.add.at(self.c, cols.ravel(), coef.ravel())
        self.c0 += float(const)

    # blocks -----------------------------------------------------------------

    def _add(self, kind, tag, rows: Rows, modeling, **kw) -> Block:
        if rows.m == 0:
            return None
        blk = Block(kind=kind, tag=tag, G=rows.matrix(self.n), h=rows.h.copy(), modeling=modeling, **kw)
        self.blocks.append(blk)
        return blk

    def eq(self, tag: str, rows: Rows, modeling: bool = True):
        return self._add("eq", tag, rows, modeling)

    def le(self, tag: str, rows: Rows, modeling: bool = True):
        return self._add("le", tag, rows, modeling)

    def soc(self, tag: str, rows: Rows, dim: int, modeling: bool = True):
        if rows.m % dim:
            raise ValueError("row count must be a multiple of the cone dimension")
        return self._add("soc", tag, rows, modeling, dim=dim)

    def pow(self, tag: str, rows: Rows, exponent: float, modeling: bool = True):
        if rows.m % 3 or not 0 < exponent < 1:
            raise ValueError("power cones need row triples and an exponent in (0, 1)")
        return self._add("pow", tag, rows, modeling, dim=3, exponent=float(exponent))

    def quad(self, tag: str, lin: Rows, sq: Rows, weights, terms: int, modeling: bool = True):
        weights = np.broadcast_to(np.asarray(weights, float), (sq.m,)).copy()
        if np.any(weights < 0):
            raise ValueError("quadratic blocks must be convex (nonnegative weights)")
        if sq.m != lin.m * terms:
            raise ValueError("square-term rows must equal constraints * terms")
        return self._add("quad", tag, lin, modeling, Gs=sq.matrix(self.n), hs=sq.h.copy(),
                         weights=weights, terms=int(terms))

    def build(self, **meta) -> ConicProgram:
        if np.any(self.lb > self.ub):
            bad = np.flatnonzero(self.lb > self.ub)[:5]
            raise ValueError(f"inconsistent bounds at variables {bad.tolist()}")
        return ConicProgram(layout=self.layout, c=self.c.copy(), c0=self.c0, blocks=list(self.blocks),
                            lb=self.lb.copy(), ub=self.ub.copy(), meta=dict(meta))
