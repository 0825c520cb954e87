"""Hierarchically block separable compression of the kernel matrix.

The tree bisects the grid, alternating vertical cuts (even levels split x)
and horizontal cuts (odd levels split y). Every box on a level is a
translate of every other and the kernel is translation invariant, so one
representative box per level is skeletonized against a ring of proxy points
and its basis and skeleton pattern are shared by the whole level.

Blocks between siblings alpha, beta at level l are reconstructed as
``Uhat_alpha @ G_ab @ Uhat_beta.T``; with ``G`` complex symmetric the
transpose plays the role of the adjoint throughout.

Points are held in tree order: ``perm[p]`` is the grid index of the p-th
point, each node owns a contiguous slice, and inside a leaf points are
ordered ``a1 + m1 * a2`` by their local lattice coordinates.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretization import CorrectionTable, UniformGrid, kernel_offsets
from .lowrank import IdFactors, LrFactors, id_rows, lr_factor

__all__ = [
    "Box", "HbsTree", "build_tree", "proxy_ring", "default_proxy_width",
    "LevelFactors", "HbsFactors", "compress", "hbs_matvec",
    "save_factors", "load_factors", "write_container", "read_container",
]


# --------------------------------------------------------------------------
# tree

@dataclass(frozen=True)
class Box:
    lo: tuple      # lattice coordinates of the lower-left point
    dims: tuple    # points per axis

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1]

    def lattice(self) -> np.ndarray:
        """Lattice coordinates of the box points in local order a1 + m1 a2."""
        m1, m2 = self.dims
        a1, a2 = np.meshgrid(np.arange(m1), np.arange(m2), indexing="xy")
        return np.stack([a1.ravel(), a2.ravel()], axis=1) + np.asarray(self.lo)


@dataclass(frozen=True, eq=False)
class HbsTree:
    grid: UniformGrid
    leaf_size: int
    dims: list          # dims[l] = (m1, m2) box shape at level l
    offsets: list       # offsets[l] : (2**l, 2) lattice lower-left corners
    perm: np.ndarray    # tree position -> grid index
    iperm: np.ndarray   # grid index -> tree position

    @property
    def L(self) -> int:
        return len(self.dims) - 1

    def nodes(self, level: int) -> int:
        return 1 << level

    def box(self, level: int, j: int) -> Box:
        return Box(tuple(int(v) for v in self.offsets[level][j]), self.dims[level])

    def indices(self, level: int, j: int) -> np.ndarray:
        n = self.dims[level][0] * self.dims[level][1]
        return self.perm[j * n:(j + 1) * n]

    def parent(self, level: int, j: int):
        return (level - 1, j >> 1) if level > 0 else None

    def children(self, level: int, j: int):
        if level >= self.L:
            return None
        return (level + 1, 2 * j), (level + 1, 2 * j + 1)

    def cut_axis(self, level: int) -> int:
        """Axis split when going from ``level`` to ``level + 1``."""
        return level % 2

    def sibling_shift(self, level: int) -> np.ndarray:
        """Offset of beta relative to alpha for sibling pairs at ``level`` >= 1."""
        axis = self.cut_axis(level - 1)
        s = np.zeros(2, dtype=int)
        s[axis] = self.dims[level][axis]
        return s


def build_tree(grid: UniformGrid, leaf_size: int) -> HbsTree:
    if leaf_size < 4:
        raise ValueError("leaf_size must be at least 4")
    dims = [(grid.n1, grid.n2)]
    offsets = [np.zeros((1, 2), dtype=int)]
    while dims[-1][0] * dims[-1][1] > leaf_size:
        level = len(dims) - 1
        axis = level % 2
        d = list(dims[-1])
        if d[axis] % 2:
            raise ValueError(
                f"cannot bisect a {d[0]}x{d[1]} box along axis {axis} at level {level}; "
                f"choose n1, n2 as a power of two times the leaf dimensions"
            )
        d[axis] //= 2
        shift = np.zeros(2, dtype=int)
        shift[axis] = d[axis]
        prev = offsets[-1]
        nxt = np.empty((2 * len(prev), 2), dtype=int)
        nxt[0::2] = prev
        nxt[1::2] = prev + shift
        dims.append(tuple(d))
        offsets.append(nxt)
    leaf_lat = Box((0, 0), dims[-1]).lattice()
    pts = offsets[-1][:, None, :] + leaf_lat[None, :, :]
    perm = grid.index(pts[..., 0], pts[..., 1]).ravel()
    iperm = np.empty_like(perm)
    iperm[perm] = np.arange(len(perm))
    return HbsTree(grid, leaf_size, dims, offsets, perm, iperm)


# Local tolerances are TOL_FACTOR * eps * |block|_F. The proxy block is far
# smaller in norm than the interaction it stands for, and without the margin
# the top-level bases miss eps relative to |G| by up to an order of magnitude.
TOL_FACTOR = 0.1


def default_proxy_width(eps: float) -> int:
    if eps >= 1e-4:
        return 1
    if eps >= 1e-10:
        return 2
    return 3


def proxy_ring(box: Box, width: int, grid: Optional[UniformGrid] = None) -> np.ndarray:
    """Lattice coordinates of the band of ``width`` cells around ``box``.

    Points outside the grid are kept; only their geometry matters.
    """
    if width not in (1, 2, 3):
        raise ValueError("proxy width must be 1, 2 or 3")
    m1, m2 = box.dims
    a1, a2 = np.meshgrid(np.arange(-width, m1 + width), np.arange(-width, m2 + width),
                         indexing="xy")
    a1, a2 = a1.ravel(), a2.ravel()
    inside = (a1 >= 0) & (a1 < m1) & (a2 >= 0) & (a2 < m2)
    return np.stack([a1[~inside], a2[~inside]], axis=1) + np.asarray(box.lo)


# --------------------------------------------------------------------------
# compression

@dataclass(frozen=True, eq=False)
class LevelFactors:
    U: np.ndarray         # (rows, k): rows = leaf size at level L, else 2 k_{l+1}
    pattern: np.ndarray   # (k, 2) skeleton offsets inside a level-l box
    skeleton: np.ndarray  # (k,) ID skeleton rows of the representative block
    G_ab: np.ndarray      # (k, k) alpha <- beta sibling interaction
    lr: LrFactors         # G_ab ~= L R^H
    proxy_norm: float     # Frobenius norm of the representative proxy block

    @property
    def k(self) -> int:
        return self.U.shape[1]

    @property
    def G_ba(self) -> np.ndarray:
        return self.G_ab.T


@dataclass(frozen=True, eq=False)
class HbsFactors:
    tree: HbsTree
    kappa: float
    tau: complex
    eps: float
    proxy_width: int
    levels: list          # levels[l] for l = 1..L; levels[0] is None
    G_leaf: np.ndarray    # (n_L, n_L) shared leaf diagonal block
    leaf_lattice: np.ndarray

    @property
    def ranks(self) -> list:
        return [lv.k for lv in self.levels[1:]]

    def kernel(self, d):
        d = np.asarray(d)
        return kernel_offsets(self.tree.grid.h, self.kappa, self.tau, d[..., 0], d[..., 1])

    def global_skeleton(self, level: int, j: int) -> np.ndarray:
        pts = self.tree.offsets[level][j] + self.levels[level].pattern
        return self.tree.grid.index(pts[:, 0], pts[:, 1])

    def arrays(self) -> dict:
        out = {"G_leaf": self.G_leaf}
        for l, lv in enumerate(self.levels[1:], start=1):
            out[f"U{l}"] = lv.U
            out[f"pattern{l}"] = lv.pattern
            out[f"skel{l}"] = lv.skeleton
            out[f"Gab{l}"] = lv.G_ab
            out[f"lrL{l}"] = lv.lr.L
            out[f"lrR{l}"] = lv.lr.R
        return out

    def meta(self) -> dict:
        g = self.tree.grid
        return {
            "grid": {"origin": list(g.origin), "h": g.h, "n1": g.n1, "n2": g.n2},
            "leaf_size": self.tree.leaf_size, "L": self.tree.L,
            "kappa": self.kappa, "tau": [self.tau.real, self.tau.imag],
            "eps": self.eps, "proxy_width": self.proxy_width,
            "proxy_norms": [lv.proxy_norm for lv in self.levels[1:]],
        }


def compress(tree: HbsTree, grid: UniformGrid, kappa, corr: Optional[CorrectionTable],
             eps: float, proxy_width: Optional[int] = None) -> HbsFactors:
    """Skeletonize one representative box per level against its proxy ring."""
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    if tree.grid != grid:
        raise ValueError("tree was built for a different grid")
    width = default_proxy_width(eps) if proxy_width is None else int(proxy_width)
    tau = 0.0 if corr is None else complex(corr.tau)

    def K(d):
        return kernel_offsets(grid.h, kappa, tau, d[..., 0], d[..., 1])

    L = tree.L
    leaf_lat = Box((0, 0), tree.dims[L]).lattice()
    G_leaf = K(leaf_lat[:, None, :] - leaf_lat[None, :, :])
    levels = [None] * (L + 1)
    child_pattern = None
    for l in range(L, 0, -1):
        if l == L:
            cand = leaf_lat
        else:
            shift = tree.sibling_shift(l + 1)
            cand = np.concatenate([child_pattern, child_pattern + shift])
        ring = proxy_ring(Box((0, 0), tree.dims[l]), width)
        A = K(cand[:, None, :] - ring[None, :, :])
        fro = float(np.linalg.norm(A))
        # keep one skeleton point so parents always have candidates
        idf = id_rows(A, TOL_FACTOR * eps * fro, min_rank=1)
        pattern = cand[idf.skeleton]
        shift = tree.sibling_shift(l)
        G_ab = K(pattern[:, None, :] - (pattern + shift)[None, :, :])
        lr = lr_factor(G_ab, TOL_FACTOR * eps * float(np.linalg.norm(G_ab)))
        levels[l] = LevelFactors(idf.interp, pattern, idf.skeleton, G_ab, lr, fro)
        child_pattern = pattern
    return HbsFactors(tree, float(kappa), tau, float(eps), width, levels, G_leaf, leaf_lat)


# --------------------------------------------------------------------------
# matvec

def to_tree_order(tree: HbsTree, q):
    """Reshape (N,) or (N, m) grid-ordered data to (leaves, n_L, m)."""
    q = np.asarray(q)
    if q.shape[0] != tree.grid.N or q.ndim > 2:
        raise ValueError(f"vector length {q.shape[0]} does not match N = {tree.grid.N}")
    cols = q.reshape(tree.grid.N, -1)
    L = tree.L
    return cols[tree.perm].reshape(1 << L, -1, cols.shape[1])


def from_tree_order(tree: HbsTree, x, like):
    out = x.reshape(tree.grid.N, -1)[tree.iperm]
    return out.reshape(np.shape(like))


def hbs_matvec(F: HbsFactors, q, tree: Optional[HbsTree] = None):
    """Approximate G q through the compressed representation."""
    tree = tree or F.tree
    L = tree.L
    qL = to_tree_order(tree, q).astype(complex)
    m = qL.shape[-1]
    if L == 0:
        return from_tree_order(tree, F.G_leaf @ qL, q)
    lv = F.levels
    # upward: outgoing expansions
    qt = [None] * (L + 1)
    qt[L] = lv[L].U.T @ qL
    for l in range(L - 1, 0, -1):
        kc = lv[l + 1].k
        qt[l] = lv[l].U.T @ qt[l + 1].reshape(1 << l, 2 * kc, m)
    # downward: incoming expansions
    wt = [None] * (L + 1)
    for l in range(1, L + 1):
        k = lv[l].k
        pair = qt[l].reshape(1 << (l - 1), 2, k, m)
        w = np.empty_like(pair)
        w[:, 0] = lv[l].G_ab @ pair[:, 1]
        w[:, 1] = lv[l].G_ba @ pair[:, 0]
        w = w.reshape(1 << l, k, m)
        if l > 1:
            w += (lv[l - 1].U @ wt[l - 1]).reshape(1 << l, k, m)
        wt[l] = w
    u = F.G_leaf @ qL + lv[L].U @ wt[L]
    return from_tree_order(tree, u, q)


# --------------------------------------------------------------------------
# binary container
#
# layout (all little-endian):
#   b"HBS2"  u32 version
#   section*:  4-byte tag, u64 header length, UTF-8 JSON header, array blobs
# The JSON header holds "meta" and a manifest [[name, dtype, shape], ...];
# blobs follow in manifest order, each row-major with the listed dtype
# ("<c16" complex128, "<f8", "<i8"). The factor section is tagged "HBSF";
# a solver inverse may follow under "SINV".

MAGIC = b"HBS2"
VERSION = 1
_DTYPES = {"c": "<c16", "f": "<f8", "i": "<i8", "u": "<i8", "b": "<i8"}


def _section_bytes(tag: bytes, meta: dict, arrays: dict):
    manifest, blobs = [], []
    for name, a in arrays.items():
        a = np.asarray(a)
        dt = _DTYPES[a.dtype.kind]
        manifest.append([name, dt, list(a.shape)])
        blobs.append(np.ascontiguousarray(a, dtype=dt))
    header = json.dumps({"meta": meta, "manifest": manifest}).encode()
    return tag + struct.pack("<Q", len(header)) + header, blobs


def container_size(sections) -> int:
    total = len(MAGIC) + 4
    for tag, meta, arrays in sections:
        head, blobs = _section_bytes(tag, meta, arrays)
        total += len(head) + sum(b.nbytes for b in blobs)
    return total


def write_container(path, sections):
    """Write ``[(tag, meta, {name: array})]`` to ``path``; returns bytes written."""
    n = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", VERSION))
        n += 8
        for tag, meta, arrays in sections:
            head, blobs = _section_bytes(tag, meta, arrays)
            fh.write(head)
            n += len(head)
            for b in blobs:
                fh.write(b.tobytes())
                n += b.nbytes
    return n


def read_container(path) -> dict:
    """Return ``{tag: (meta, {name: array})}``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an HBS2 container")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    pos = 8
    out = {}
    while pos < len(data):
        tag = data[pos:pos + 4].decode()
        (hlen,) = struct.unpack_from("<Q", data, pos + 4)
        pos += 12
        header = json.loads(data[pos:pos + hlen])
        pos += hlen
        arrays = {}
        for name, dt, shape in header["manifest"]:
            count = int(np.prod(shape, dtype=np.int64))
            a = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(shape)
            arrays[name] = a.copy()
            pos += a.nbytes
        out[tag] = (header["meta"], arrays)
    return out


def factor_section(F: HbsFactors):
    return (b"HBSF", F.meta(), F.arrays())


def save_factors(path, F: HbsFactors, extra_sections=()):
    return write_container(path, [factor_section(F), *extra_sections])


def factors_from_section(meta: dict, arrays: dict) -> HbsFactors:
    g = meta["grid"]
    grid = UniformGrid(tuple(g["origin"]), g["h"], g["n1"], g["n2"])
    tree = build_tree(grid, meta["leaf_size"])
    L = meta["L"]
    if tree.L != L:
        raise ValueError("stored tree depth does not match the rebuilt tree")
    levels = [None]
    for l in range(1, L + 1):
        levels.append(LevelFactors(
            arrays[f"U{l}"], arrays[f"pattern{l}"], arrays[f"skel{l}"], arrays[f"Gab{l}"],
            LrFactors(arrays[f"lrL{l}"], arrays[f"lrR{l}"]), meta["proxy_norms"][l - 1],
        ))
    leaf_lat = Box((0, 0), tree.dims[L]).lattice()
    tau = complex(*meta["tau"])
    return HbsFactors(tree, meta["kappa"], tau, meta["eps"], meta["proxy_width"],
                      levels, arrays["G_leaf"], leaf_lat)


def load_factors(path) -> HbsFactors:
    sections = read_container(path)
    if "HBSF" not in sections:
        raise ValueError(f"{path}: no HBSF section")
    return factors_from_section(*sections["HBSF"])
