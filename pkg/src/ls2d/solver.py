"""Direct solver for (I + B G) q = f built from discrete scattering matrices.

For a leaf tau with incoming expansion w_tau, the local equation
``q + B G_tau q + B U w = f`` gives ``q = X f - X B U w`` with
``X = (I + B G_tau)^-1``; projecting with ``U^T`` yields the outgoing
expansion ``qt = rt - S w`` where ``S = U^T X B U`` is the scattering matrix.
A parent couples its children through the sibling blocks:

    [ I          S_a G_ab ] [qt_a]   [rt_a]
    [ S_b G_ba   I        ] [qt_b] = [rt_b] - diag(S_a, S_b) U w

and that 2x2 block operator plays the part of X one level up. Neither S
nor its inverse is ever used as a system matrix.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .hbs import (HbsFactors, HbsTree, factor_section, from_tree_order, read_container,
                  factors_from_section, to_tree_order, write_container, container_size)

__all__ = ["ScatteringInverse", "SolveWorkspace", "build_inverse", "apply_inverse",
           "lemma1_check", "save_inverse", "load_inverse", "inverse_bytes",
           "WOODBURY_RANK_FRACTION"]

WOODBURY_RANK_FRACTION = 0.75


class SingularSystemError(np.linalg.LinAlgError):
    pass


def _lu(A, what):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(A, check_finite=False)
    d = np.abs(np.diag(lu))
    scale = np.abs(A).max()
    if d.size and (not np.all(np.isfinite(lu)) or d.min() <= A.shape[0] * np.finfo(float).eps * scale):
        raise SingularSystemError(f"singular system at {what}")
    growth = float(np.abs(np.triu(lu)).max() / scale) if scale > 0 else 1.0
    return lu, piv, growth


def _solve(lu, piv, rhs):
    return linalg.lu_solve((lu, piv), rhs, check_finite=False)


@dataclass(eq=False)
class ParentLevel:
    """Local solution operators for all nodes on one parent level."""
    level: int
    kc: int                       # child rank
    woodbury: bool
    lu: np.ndarray                # (nodes, n, n) LU of core (2r) or full block (2kc)
    piv: np.ndarray
    La: Optional[np.ndarray] = None   # (nodes, kc, r)  S_a L_ab
    Lb: Optional[np.ndarray] = None   # (nodes, kc, r)  S_b L_ba
    Rab_h: Optional[np.ndarray] = None  # (r, kc)
    Rba_h: Optional[np.ndarray] = None  # (r, kc)
    growth: float = 1.0

    def apply_X(self, v):
        """X_tau v for stacked v of shape (nodes, 2 kc, m)."""
        out = np.empty_like(v)
        kc = self.kc
        if not self.woodbury:
            for j in range(v.shape[0]):
                out[j] = _solve(self.lu[j], self.piv[j], v[j])
            return out
        r = self.Rab_h.shape[0]
        t = np.concatenate([self.Rab_h @ v[:, kc:], self.Rba_h @ v[:, :kc]], axis=1)
        for j in range(v.shape[0]):
            s = _solve(self.lu[j], self.piv[j], t[j])
            out[j, :kc] = v[j, :kc] - self.La[j] @ s[:r]
            out[j, kc:] = v[j, kc:] - self.Lb[j] @ s[r:]
        return out

    def arrays(self, tag):
        out = {f"{tag}lu": self.lu, f"{tag}piv": self.piv}
        if self.woodbury:
            out.update({f"{tag}La": self.La, f"{tag}Lb": self.Lb,
                        f"{tag}Rab": self.Rab_h, f"{tag}Rba": self.Rba_h})
        return out


@dataclass(eq=False)
class ScatteringInverse:
    F: HbsFactors
    B: np.ndarray            # grid order, kappa^2 b
    leaf_lu: np.ndarray      # (leaves, n_L, n_L)
    leaf_piv: np.ndarray
    leaf_Y: np.ndarray       # (leaves, n_L, k_L) = X B U
    S: list                  # S[l] : (2**l, k_l, k_l) for l = 1..L
    parents: list            # parents[l] for l = 0..L-1
    leaf_growth: float = 1.0

    @property
    def tree(self) -> HbsTree:
        return self.F.tree

    @property
    def growth(self) -> dict:
        out = {"leaf": self.leaf_growth}
        for p in self.parents:
            out[f"level{p.level}"] = p.growth
        return out

    def arrays(self) -> dict:
        out = {"B": self.B, "leaf_lu": self.leaf_lu, "leaf_piv": self.leaf_piv,
               "leaf_Y": self.leaf_Y}
        for l, S in enumerate(self.S):
            if S is not None:
                out[f"S{l}"] = S
        for p in self.parents:
            out.update(p.arrays(f"P{p.level}"))
        return out

    def meta(self) -> dict:
        return {"woodbury": [p.woodbury for p in self.parents],
                "growth": self.growth}


@dataclass(eq=False)
class SolveWorkspace:
    """Per-level buffers for one right-hand-side width."""
    m: int
    rt: list = field(default_factory=list)   # outgoing r-tilde per level
    y: list = field(default_factory=list)    # X_tau r-hat per parent level
    wt: list = field(default_factory=list)   # incoming expansions per level
    r: Optional[np.ndarray] = None           # leaf r = X f

    @classmethod
    def for_inverse(cls, inv: ScatteringInverse, m: int = 1):
        tree, F = inv.tree, inv.F
        L = tree.L
        ks = [None] + [F.levels[l].k for l in range(1, L + 1)]
        ws = cls(m)
        ws.rt = [None] + [np.empty((1 << l, ks[l], m), complex) for l in range(1, L + 1)]
        ws.wt = [None] + [np.empty((1 << l, ks[l], m), complex) for l in range(1, L + 1)]
        ws.y = [np.empty((1 << l, 2 * ks[l + 1], m), complex) for l in range(L)]
        ws.r = np.empty((1 << L, F.G_leaf.shape[0], m), complex)
        return ws


def build_inverse(F: HbsFactors, B, tree: Optional[HbsTree] = None) -> ScatteringInverse:
    tree = tree or F.tree
    B = np.asarray(B, dtype=float)
    if B.shape != (tree.grid.N,):
        raise ValueError(f"diagonal length {B.shape} does not match N = {tree.grid.N}")
    L = tree.L
    BL = B[tree.perm].reshape(1 << L, -1)
    nL = BL.shape[1]
    eye = np.eye(nL)
    U = F.levels[L].U if L else np.zeros((nL, 0), complex)
    kL = U.shape[1]
    leaf_lu = np.empty((1 << L, nL, nL), complex)
    leaf_piv = np.empty((1 << L, nL), np.int32)
    leaf_Y = np.empty((1 << L, nL, kL), complex)
    growth = 1.0
    for j in range(1 << L):
        A = eye + BL[j][:, None] * F.G_leaf
        leaf_lu[j], leaf_piv[j], g = _lu(A, f"leaf {j}")
        growth = max(growth, g)
        leaf_Y[j] = _solve(leaf_lu[j], leaf_piv[j], BL[j][:, None] * U)
    S = [None] * (L + 1)
    if L:
        S[L] = U.T @ leaf_Y
    parents = [None] * L
    for l in range(L - 1, -1, -1):
        child = F.levels[l + 1]
        kc = child.k
        Sa, Sb = S[l + 1][0::2], S[l + 1][1::2]
        nodes = 1 << l
        r = child.lr.rank
        woodbury = l > 0 and r < WOODBURY_RANK_FRACTION * kc
        g_lvl = 1.0
        if woodbury:
            Lab, Rab = child.lr.L, child.lr.R
            Lba, Rba = Rab.conj(), Lab.conj()     # G_ba = G_ab^T
            Rab_h, Rba_h = Rab.conj().T, Rba.conj().T
            La, Lb = Sa @ Lab, Sb @ Lba
            lu = np.empty((nodes, 2 * r, 2 * r), complex)
            piv = np.empty((nodes, 2 * r), np.int32)
            for j in range(nodes):
                core = np.eye(2 * r, dtype=complex)
                core[:r, r:] = Rab_h @ Lb[j]
                core[r:, :r] = Rba_h @ La[j]
                lu[j], piv[j], g = _lu(core, f"level {l} node {j} (Woodbury core)")
                g_lvl = max(g_lvl, g)
            P = ParentLevel(l, kc, True, lu, piv, La, Lb, Rab_h, Rba_h, g_lvl)
        else:
            lu = np.empty((nodes, 2 * kc, 2 * kc), complex)
            piv = np.empty((nodes, 2 * kc), np.int32)
            for j in range(nodes):
                M = np.eye(2 * kc, dtype=complex)
                M[:kc, kc:] = Sa[j] @ child.G_ab
                M[kc:, :kc] = Sb[j] @ child.G_ba
                lu[j], piv[j], g = _lu(M, f"level {l} node {j}")
                g_lvl = max(g_lvl, g)
            P = ParentLevel(l, kc, False, lu, piv, growth=g_lvl)
        parents[l] = P
        if l > 0:
            Ul = F.levels[l].U
            Z = np.concatenate([Sa @ Ul[:kc], Sb @ Ul[kc:]], axis=1)
            S[l] = Ul.T @ P.apply_X(Z)
    return ScatteringInverse(F, B, leaf_lu, leaf_piv, leaf_Y, S, parents, growth)


def _sibling(G_ab, q):
    """Sibling exchange for stacked child expansions q of shape (pairs, 2, k, m)."""
    w = np.empty_like(q)
    w[:, 0] = G_ab @ q[:, 1]
    w[:, 1] = G_ab.T @ q[:, 0]
    return w


def apply_inverse(inv: ScatteringInverse, f, ws: Optional[SolveWorkspace] = None):
    """Solve (I + B G_eps) q = f for f of shape (N,) or (N, m)."""
    tree, F = inv.tree, inv.F
    L = tree.L
    fL = to_tree_order(tree, f).astype(complex, copy=False)
    m = fL.shape[-1]
    if ws is None or ws.m != m:
        ws = SolveWorkspace.for_inverse(inv, m)
    for j in range(1 << L):
        ws.r[j] = _solve(inv.leaf_lu[j], inv.leaf_piv[j], fL[j])
    if L == 0:
        return from_tree_order(tree, ws.r.copy(), f)
    lv = F.levels
    np.matmul(lv[L].U.T, ws.r, out=ws.rt[L])
    # upward
    for l in range(L - 1, -1, -1):
        kc = lv[l + 1].k
        rhat = ws.rt[l + 1].reshape(1 << l, 2 * kc, m)
        ws.y[l][...] = inv.parents[l].apply_X(rhat)
        if l > 0:
            np.matmul(lv[l].U.T, ws.y[l], out=ws.rt[l])
    # root: no incoming field
    k1 = lv[1].k
    qc = ws.y[0].reshape(1, 2, k1, m)
    ws.wt[1][...] = _sibling(lv[1].G_ab, qc).reshape(2, k1, m)
    # downward
    for l in range(1, L):
        kc = lv[l + 1].k
        uw = lv[l].U @ ws.wt[l]
        Sc = inv.S[l + 1]
        z = np.concatenate([Sc[0::2] @ uw[:, :kc], Sc[1::2] @ uw[:, kc:]], axis=1)
        qc = ws.y[l] - inv.parents[l].apply_X(z)
        w = _sibling(lv[l + 1].G_ab, qc.reshape(1 << l, 2, kc, m))
        ws.wt[l + 1][...] = w.reshape(1 << (l + 1), kc, m) + uw.reshape(1 << (l + 1), kc, m)
    q = ws.r - inv.leaf_Y @ ws.wt[L]
    return from_tree_order(tree, q, f)


def _nested_basis(F: HbsFactors, level: int):
    """Explicit bases Uhat for every node on ``level``: (nodes, n_level, k)."""
    L = F.tree.L
    U = F.levels[L].U
    Uh = np.broadcast_to(U, (1 << L,) + U.shape)
    for l in range(L - 1, level - 1, -1):
        kc = F.levels[l + 1].k
        Ul = F.levels[l].U
        a, b = Uh[0::2], Uh[1::2]
        Uh = np.concatenate([a @ Ul[:kc], b @ Ul[kc:]], axis=1)
    return Uh


def lemma1_check(F: HbsFactors, tree: Optional[HbsTree], B, q, G=None) -> float:
    """Largest relative defect of the incoming-expansion recursion.

    For each parent tau with children alpha, beta the incoming expansions
    from the uncompressed operator must satisfy
    ``[w_a; w_b] = [G_ab qt_b; G_ba qt_a] + U_tau w_tau``.
    ``B`` plays no part; it is accepted for interface symmetry.
    """
    from .discretization import dense_kernel_matrix

    tree = tree or F.tree
    grid = tree.grid
    L = tree.L
    if L == 0:
        return 0.0
    if G is None:
        from .discretization import CorrectionTable
        G = dense_kernel_matrix(grid, F.kappa, CorrectionTable(F.tau, F.kappa * grid.h))
    Gt = G[np.ix_(tree.perm, tree.perm)]
    qt_all = np.asarray(q, dtype=complex)[tree.perm]
    u = Gt @ qt_all
    wt, qt = [None] * (L + 1), [None] * (L + 1)
    for l in range(1, L + 1):
        Uh = _nested_basis(F, l)
        n = Uh.shape[1]
        ql = qt_all.reshape(1 << l, n)
        qt[l] = np.einsum("jik,ji->jk", Uh, ql)
        ws = []
        for j in range(1 << l):
            sl = slice(j * n, (j + 1) * n)
            inc = u[sl] - Gt[sl, sl] @ ql[j]
            ws.append(linalg.lstsq(Uh[j], inc)[0])
        wt[l] = np.array(ws)
    worst = 0.0
    for l in range(0, L):
        c = F.levels[l + 1]
        for j in range(1 << l):
            a, b = 2 * j, 2 * j + 1
            pred = np.concatenate([c.G_ab @ qt[l + 1][b], c.G_ba @ qt[l + 1][a]])
            if l > 0:
                pred = pred + F.levels[l].U @ wt[l][j]
            got = np.concatenate([wt[l + 1][a], wt[l + 1][b]])
            worst = max(worst, np.linalg.norm(got - pred) / np.linalg.norm(got))
    return float(worst)


# --------------------------------------------------------------------------
# serialization

def inverse_section(inv: ScatteringInverse):
    return (b"SINV", inv.meta(), inv.arrays())


def inverse_bytes(inv: ScatteringInverse) -> int:
    """Exact size of the serialized factors plus inverse."""
    return container_size([factor_section(inv.F), inverse_section(inv)])


def save_inverse(path, inv: ScatteringInverse) -> int:
    return write_container(path, [factor_section(inv.F), inverse_section(inv)])


def load_inverse(path) -> ScatteringInverse:
    sections = read_container(path)
    F = factors_from_section(*sections["HBSF"])
    meta, a = sections["SINV"]
    L = F.tree.L
    S = [None] * (L + 1)
    for l in range(1, L + 1):
        S[l] = a[f"S{l}"]
    parents = []
    for l, wb in enumerate(meta["woodbury"]):
        t = f"P{l}"
        kc = F.levels[l + 1].k
        g = meta["growth"][f"level{l}"]
        if wb:
            parents.append(ParentLevel(l, kc, True, a[t + "lu"], a[t + "piv"].astype(np.int32),
                                       a[t + "La"], a[t + "Lb"], a[t + "Rab"], a[t + "Rba"], g))
        else:
            parents.append(ParentLevel(l, kc, False, a[t + "lu"], a[t + "piv"].astype(np.int32),
                                       growth=g))
    return ScatteringInverse(F, a["B"], a["leaf_lu"], a["leaf_piv"].astype(np.int32),
                             a["leaf_Y"], S, parents, meta["growth"]["leaf"])
