"""Synthetic latent-factor LiNGAM data: random DAGs, non-Gaussian noise, pure indicators."""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import DomainDataset, MultiDomainDataset, write_domain_csv, write_manifest
from .triad import ClusterSpec, write_clusters

NOISE_DISTS = ("laplace", "subgaussian", "supergaussian")
EXPONENT_RANGES = {"subgaussian": (0.5, 0.8), "supergaussian": (1.2, 2.0)}


@dataclass(frozen=True)
class GenConfig:
    q: int = 5
    indicators_per_factor: int = 2
    n: int = 1000
    weight_range: tuple = (0.5, 2.0)
    loading_range: tuple = (0.2, 0.7)
    noise_ratio: float = 0.1
    noise_dist: str = "laplace"
    edge_density: float = None  # expected number of edges; None means q
    seed: int = 0

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.indicators_per_factor < 2:
            raise ValueError("each factor needs at least 2 pure indicators")
        for name in ("weight_range", "loading_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be positive and ordered")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not 0 <= self.noise_ratio < 1:
            raise ValueError("noise_ratio must lie in [0, 1)")
        if self.noise_dist not in NOISE_DISTS:
            raise ValueError(f"noise_dist must be one of {NOISE_DISTS}")

    @property
    def expected_edges(self):
        return float(self.q if self.edge_density is None else self.edge_density)


@dataclass
class GroundTruth:
    """Generating parameters of one dataset.

    ``B_true`` is the effect matrix of the unit-variance factors actually
    emitted (``B_raw`` rescaled by the normalization); ``G_true`` holds the
    drawn loadings and ``G_eff`` the loadings of the emitted unit-variance
    observations.
    """

    B_true: np.ndarray
    B_raw: np.ndarray
    G_true: np.ndarray
    G_eff: np.ndarray
    clusters: ClusterSpec
    F: np.ndarray
    X: np.ndarray


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _uniform_signed(rng, lo, hi, size):
    return rng.uniform(lo, hi, size=size) * rng.choice([-1.0, 1.0], size=size)


def gen_dag(q, edge_density=None, weight_range=(0.5, 2.0), seed=None):
    """Erdos-Renyi DAG, strictly lower-triangular before a random relabeling.

    ``B[i, j]`` is the effect of factor j on factor i.
    """
    rng = _rng(seed)
    if q == 1:
        return np.zeros((1, 1))
    density = q if edge_density is None else edge_density
    prob = min(1.0, 2.0 * density / (q * (q - 1)))
    support = np.tril(rng.random((q, q)) < prob, k=-1)
    perm = rng.permutation(q)
    support = support[np.ix_(perm, perm)]
    return _weigh(support, weight_range, rng)


def _weigh(support, weight_range, rng):
    B = np.zeros(support.shape)
    B[support] = _uniform_signed(rng, *weight_range, size=int(support.sum()))
    return B


def gen_noise(dist, n, seed=None):
    """Standardized i.i.d. non-Gaussian draws."""
    rng = _rng(seed)
    if dist == "laplace":
        e = rng.laplace(scale=1.0 / np.sqrt(2.0), size=n)
    elif dist in EXPONENT_RANGES:
        expo = rng.uniform(*EXPONENT_RANGES[dist])
        z = rng.standard_normal(n)
        e = np.sign(z) * np.abs(z) ** expo
    else:
        raise ValueError(f"unknown noise distribution {dist!r}")
    if n > 1:
        e = (e - e.mean()) / e.std(ddof=1)
    return e


def gen_latents(B_true, noise_dist, n, seed=None, return_scale=False):
    """F = (I - B)^{-1} E with unit-sample-variance rows."""
    rng = _rng(seed)
    q = B_true.shape[0]
    E = np.vstack([gen_noise(noise_dist, n, rng) for _ in range(q)])
    F = np.linalg.solve(np.eye(q) - B_true, E)
    scale = F.std(axis=1, ddof=1)
    F = F / scale[:, None]
    return (F, scale) if return_scale else F


def gen_observed(F, cfg, seed=None):
    """Pure indicators x = sqrt(1 - r) * sign(g) * f + sqrt(r) * e, Gaussian e."""
    rng = _rng(seed)
    q, n = F.shape
    k = cfg.indicators_per_factor
    p = q * k
    G = np.zeros((p, q))
    owner = np.repeat(np.arange(q), k)
    G[np.arange(p), owner] = _uniform_signed(rng, *cfg.loading_range, size=p)
    r = cfg.noise_ratio
    G_eff = np.sqrt(1.0 - r) * np.sign(G)
    X = G_eff @ F + np.sqrt(r) * rng.standard_normal((p, n))
    clusters = ClusterSpec(tuple(tuple(range(j * k, (j + 1) * k)) for j in range(q)))
    return X, G, G_eff, clusters


def _one_domain(B_raw, cfg, rng):
    F, scale = gen_latents(B_raw, cfg.noise_dist, cfg.n, rng, return_scale=True)
    B_true = B_raw * scale[None, :] / scale[:, None]
    X, G, G_eff, clusters = gen_observed(F, cfg, rng)
    return GroundTruth(B_true, B_raw, G, G_eff, clusters, F, X)


def simulate(cfg, seed=None):
    """One single-domain dataset and its ground truth."""
    rng = _rng(cfg.seed if seed is None else seed)
    B_raw = gen_dag(cfg.q, cfg.expected_edges, cfg.weight_range, rng)
    return _one_domain(B_raw, cfg, rng)


def gen_multidomain(M, cfg, shared_graph=True, seed=None):
    """M domains; with ``shared_graph`` the support is drawn once and reweighted per domain."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = _rng(cfg.seed if seed is None else seed)
    truths = []
    B0 = gen_dag(cfg.q, cfg.expected_edges, cfg.weight_range, rng)
    for m in range(M):
        if m == 0:
            B_raw = B0
        elif shared_graph:
            B_raw = _weigh(B0 != 0, cfg.weight_range, rng)
        else:
            B_raw = gen_dag(cfg.q, cfg.expected_edges, cfg.weight_range, rng)
        truths.append(_one_domain(B_raw, cfg, rng))
    names = [tuple(f"d{m + 1}_x{i + 1}" for i in range(t.X.shape[0])) for m, t in enumerate(truths)]
    if M == 1:
        names = [tuple(f"x{i + 1}" for i in range(truths[0].X.shape[0]))]
    md = MultiDomainDataset(tuple(DomainDataset(t.X, nm, m + 1) for m, (t, nm) in enumerate(zip(truths, names))))
    return md, truths


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------


def write_matrix_csv(path, B, names, col_names=None):
    col_names = names if col_names is None else col_names
    with open(path, "w") as fh:
        fh.write("," + ",".join(col_names) + "\n")
        for nm, row in zip(names, B):
            fh.write(nm + "," + ",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    cols = lines[0].split(",")[1:]
    rows, vals = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append(parts[0])
        vals.append([float(v) for v in parts[1:]])
    return np.array(vals).reshape(len(rows), len(cols)), rows, cols


def write_dataset(outdir, md, truths, cfg):
    """Write domain CSVs, a manifest and a ground-truth bundle per domain."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for d, t in zip(md.domains, truths):
        tag = f"domain{d.domain_id}"
        fname = f"{tag}.csv"
        write_domain_csv(outdir / fname, d)
        files.append(fname)
        fac = [f"f{k + 1}" for k in range(t.B_true.shape[0])]
        write_matrix_csv(outdir / f"{tag}_B_true.csv", t.B_true, fac)
        write_matrix_csv(outdir / f"{tag}_G_true.csv", t.G_eff, list(d.variable_names), fac)
        spec = ClusterSpec(t.clusters.clusters, tuple(fac))
        write_clusters(outdir / f"{tag}_clusters.json", spec, d.variable_names)
    write_manifest(outdir / "manifest.json", files)
    with open(outdir / "gen_config.json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=2)
        fh.write("\n")
    return files
