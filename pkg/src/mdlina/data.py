"""Datasets, standardization, block-diagonal augmentation and CSV ingestion."""

import csv
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, EmptyDomain, UsageError, ZeroVarianceVariable

VARIANCE_FLOOR = 1e-12


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DomainDataset:
    """Observations of one domain, stored variables x samples."""

    data: np.ndarray
    variable_names: tuple
    domain_id: int = 1

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise DataError("domain data must be a 2-D (variables x samples) matrix")
        if not np.all(np.isfinite(data)):
            raise DataError("domain data contains missing or non-finite entries")
        p, n = data.shape
        if p < 2 or n < 3:
            raise DataError(f"need at least 2 variables and 3 samples, got {p}x{n}")
        names = tuple(self.variable_names) if self.variable_names is not None else ()
        if not names:
            names = tuple(f"x{i + 1}" for i in range(p))
        if len(names) != p:
            raise DataError(f"{len(names)} variable names for {p} variables")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "domain_id", int(self.domain_id))

    @property
    def p(self):
        return self.data.shape[0]

    @property
    def n(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class MultiDomainDataset:
    domains: tuple

    def __post_init__(self):
        domains = tuple(self.domains)
        if not domains:
            raise DataError("at least one domain is required")
        ids = [d.domain_id for d in domains]
        if ids != list(range(1, len(domains) + 1)):
            raise DataError(f"domain ids must be 1..M in order, got {ids}")
        object.__setattr__(self, "domains", domains)

    @property
    def M(self):
        return len(self.domains)

    @property
    def total_p(self):
        return sum(d.p for d in self.domains)

    @property
    def total_n(self):
        return sum(d.n for d in self.domains)

    @classmethod
    def from_arrays(cls, arrays, names=None):
        names = names or [None] * len(arrays)
        return cls(tuple(DomainDataset(a, nm, i + 1) for i, (a, nm) in enumerate(zip(arrays, names))))


@dataclass(frozen=True)
class AugmentedDataset:
    """Block-diagonal coding of several domains.

    ``row_origin[i]`` and ``col_origin[t]`` are ``(domain_id, local_index)``.
    """

    data: np.ndarray
    row_origin: tuple
    col_origin: tuple
    variable_names: tuple = ()

    @property
    def M(self):
        return max(d for d, _ in self.row_origin)

    def row_slices(self):
        return _origin_slices(self.row_origin)

    def col_slices(self):
        return _origin_slices(self.col_origin)

    def block(self, m):
        """Return the raw block of domain ``m`` (1-based)."""
        rs = self.row_slices()[m - 1]
        cs = self.col_slices()[m - 1]
        return np.array(self.data[rs, cs])

    def extract(self, m):
        rs = self.row_slices()[m - 1]
        return DomainDataset(self.block(m), self.variable_names[rs], m)


def _origin_slices(origin):
    slices = []
    start = 0
    for i, (d, _) in enumerate(origin):
        if i > 0 and d != origin[i - 1][0]:
            slices.append(slice(start, i))
            start = i
    slices.append(slice(start, len(origin)))
    return slices


@dataclass(frozen=True)
class Hyperparams:
    lambda1: float = 0.1
    lambda2: float = 0.1
    lambda3: float = 0.1
    threshold_eps: float = 0.3
    rho_init: float = 1.0
    rho_mult: float = 10.0
    rho_max: float = 1e16
    h_tol: float = 1e-8
    solver_tol: float = 1e-6
    max_outer: int = 100
    max_alt: int = 50
    max_iter: int = 2000
    seed: int = 0
    penalty_mode: str = "qpm"
    q_tilde: int = 0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "threshold_eps"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be >= 0")
        for name in ("rho_init", "rho_mult", "rho_max", "h_tol", "solver_tol"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be > 0")
        if self.rho_mult <= 1:
            raise UsageError("rho_mult must exceed 1")
        mode = str(self.penalty_mode).lower()
        if mode not in ("qpm", "alm"):
            raise UsageError(f"penalty_mode must be qpm or alm, got {self.penalty_mode!r}")
        object.__setattr__(self, "penalty_mode", mode)

    def with_(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise UsageError(f"unknown hyperparameter(s): {sorted(unknown)}")
        return cls(**d)


def load_config(path):
    """Read a flat JSON object of Hyperparams fields."""
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: not a JSON object ({exc})") from exc
    if not isinstance(d, dict):
        raise UsageError(f"{path}: config must be a flat key-value object")
    return Hyperparams.from_dict(d)


def standardize(d):
    """Center each variable and scale it to unit sample variance (divisor n - 1)."""
    X = d.data
    var = X.var(axis=1, ddof=1)
    bad = np.flatnonzero(var <= VARIANCE_FLOOR)
    if bad.size:
        raise ZeroVarianceVariable(int(bad[0]))
    Z = (X - X.mean(axis=1, keepdims=True)) / np.sqrt(var)[:, None]
    return DomainDataset(Z, d.variable_names, d.domain_id)


def standardize_all(md):
    return MultiDomainDataset(tuple(standardize(d) for d in md.domains))


def augment(md):
    """Embed M domains into one block-diagonal (p x n) matrix, zero elsewhere.

    Accepts a MultiDomainDataset or any sequence of 2-D arrays / DomainDatasets.
    """
    if isinstance(md, MultiDomainDataset):
        items = md.domains
    else:
        items = list(md)
    blocks, names = [], []
    for m, item in enumerate(items, start=1):
        if isinstance(item, DomainDataset):
            blocks.append(item.data)
            names.extend(item.variable_names)
        else:
            a = np.atleast_2d(np.asarray(item, dtype=np.float64))
            blocks.append(a)
            names.extend(f"d{m}_x{i + 1}" for i in range(a.shape[0]))
    for m, b in enumerate(blocks, start=1):
        if b.shape[1] == 0:
            raise EmptyDomain(f"domain {m} has no samples")
    p = sum(b.shape[0] for b in blocks)
    n = sum(b.shape[1] for b in blocks)
    out = np.zeros((p, n))
    rows, cols = [], []
    r = c = 0
    for m, b in enumerate(blocks, start=1):
        pm, nm = b.shape
        out[r:r + pm, c:c + nm] = b
        rows.extend((m, i) for i in range(pm))
        cols.extend((m, t) for t in range(nm))
        r += pm
        c += nm
    out.setflags(write=False)
    return AugmentedDataset(out, tuple(rows), tuple(cols), tuple(names))


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------


def read_domain_csv(path, domain_id=1):
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        values = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if values.ndim != 2 or values.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows or header/column mismatch")
    return DomainDataset(values.T, tuple(header), domain_id)


def write_domain_csv(path, d):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.variable_names)
        for row in d.data.T:
            w.writerow([repr(float(v)) for v in row])


def read_manifest(path):
    path = Path(path)
    with open(path) as fh:
        spec = json.load(fh)
    files = spec["domains"] if isinstance(spec, dict) else spec
    base = path.parent
    return MultiDomainDataset(tuple(read_domain_csv(base / f, i + 1) for i, f in enumerate(files)))


def write_manifest(path, files: Sequence[str]):
    with open(path, "w") as fh:
        json.dump({"domains": list(files)}, fh, indent=2)
        fh.write("\n")
