"""Eigensolvers: dense full spectra and a locking Lanczos for large sectors.

The Lanczos iteration keeps every Krylov vector and reorthogonalizes twice
per step, so degeneracy grouping downstream never sees ghost copies.
Converged eigenpairs are locked and deflated, and the iteration restarts
inside their orthogonal complement; repeated eigenvalues of multiplicity
g > 1 are recovered by g successive locks.  All start vectors come from a
seeded generator, which makes solves reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import BasisTable
from .hamiltonian import SparseOperator
from .symmetry import (
    MixedSpinError,
    SymmetryLabel,
    apply_splus,
    format_label,
    projector,
    total_spin,
)

__all__ = [
    "EigenSet",
    "DegenerateManifold",
    "SolverError",
    "NonConvergenceError",
    "DimensionCapError",
    "SubspaceExhaustedError",
    "dense_spectrum",
    "dense_subspace_spectrum",
    "lanczos_lowest",
    "lowest_in_label",
    "group_degenerate",
    "sharpen_spin",
]

DENSE_CAP_DEFAULT = 20000


class SolverError(RuntimeError):
    pass


class DimensionCapError(SolverError):
    """Sector too large for a dense solve; use lanczos_lowest instead."""


class SubspaceExhaustedError(SolverError):
    """The (projected, deflated) search space ran out of directions."""


class NonConvergenceError(SolverError):
    def __init__(self, message: str, best_residual: float) -> None:
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass
class EigenSet:
    """Ascending eigenvalues with matching orthonormal vectors and residuals."""

    values: np.ndarray
    vectors: np.ndarray  # shape (dim, k)
    residuals: np.ndarray
    labels: list[str] | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.vectors = np.asarray(self.vectors, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != len(self.values):
            raise SolverError("vectors must be (dim, k) matching the eigenvalue count")
        order = np.argsort(self.values, kind="stable")
        self.values = self.values[order]
        self.vectors = self.vectors[:, order]
        self.residuals = self.residuals[order]
        if self.labels is not None:
            self.labels = [self.labels[i] for i in order]

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class DegenerateManifold:
    """Member vectors of one (numerically) degenerate eigenvalue."""

    eigenvalue: float
    vectors: np.ndarray  # shape (dim, g)

    @property
    def multiplicity(self) -> int:
        return self.vectors.shape[1]


def _canonical_sign(vectors: np.ndarray) -> np.ndarray:
    """Fix each column's sign so its largest-magnitude entry is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _as_matvec(operator) -> tuple[Callable[[np.ndarray], np.ndarray], int]:
    if isinstance(operator, SparseOperator):
        mat = operator.matrix
        return (lambda v: mat @ v), operator.dim
    if sp.issparse(operator):
        mat = operator.tocsr()
        return (lambda v: mat @ v), mat.shape[0]
    arr = np.asarray(operator, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise SolverError("operator must be square")
    return (lambda v: arr @ v), arr.shape[0]


def dense_spectrum(operator, cap: int = DENSE_CAP_DEFAULT) -> EigenSet:
    """All eigenpairs of a Hermitian operator, ascending."""
    if isinstance(operator, SparseOperator):
        dim = operator.dim
        if dim > cap:
            raise DimensionCapError(
                f"dimension {dim} exceeds the dense cap {cap}; use lanczos_lowest"
            )
        dense = operator.dense()
    else:
        dense = np.asarray(operator, dtype=float) if not sp.issparse(operator) else operator.toarray()
        dim = dense.shape[0]
        if dim > cap:
            raise DimensionCapError(
                f"dimension {dim} exceeds the dense cap {cap}; use lanczos_lowest"
            )
    vals, vecs = sla.eigh(dense)
    vecs = _canonical_sign(vecs)
    res = np.linalg.norm(dense @ vecs - vecs * vals[None, :], axis=0)
    return EigenSet(values=vals, vectors=vecs, residuals=res)


def dense_subspace_spectrum(operator: SparseOperator, subspace: sp.csr_matrix,
                            cap: int = DENSE_CAP_DEFAULT) -> EigenSet:
    """Full spectrum of H restricted to an orthonormal sparse subspace basis.

    The returned vectors are lifted back to full sector coordinates.
    """
    m = subspace.shape[1]
    if m == 0:
        return EigenSet(np.zeros(0), np.zeros((operator.dim, 0)), np.zeros(0))
    if m > cap:
        raise DimensionCapError(f"subspace dimension {m} exceeds the dense cap {cap}")
    hs = (subspace.T @ (operator.matrix @ subspace)).toarray()
    hs = 0.5 * (hs + hs.T)
    vals, y = sla.eigh(hs)
    vecs = _canonical_sign(subspace @ y)
    res = np.linalg.norm(operator.matrix @ vecs - vecs * vals[None, :], axis=0)
    return EigenSet(values=vals, vectors=vecs, residuals=res)


def lanczos_lowest(
    operator,
    k: int = 1,
    tol: float = 1e-10,
    seed: int = 1,
    max_basis: int = 200,
    max_matvecs: int = 100000,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    allow_fewer: bool = False,
) -> EigenSet:
    """Lowest k eigenpairs by restarted Lanczos with locking.

    Every Krylov vector is kept and reorthogonalized against (twice per
    step), converged Ritz vectors are locked and deflated, and the next
    pass restarts from the best unconverged Ritz vector.  With `project`
    given, every start vector and matrix-vector product is re-projected,
    confining the iteration to an invariant subspace; `allow_fewer` then
    permits returning everything that subspace holds when it is smaller
    than k.
    """
    matvec, dim = _as_matvec(operator)
    if k < 1:
        raise SolverError(f"k must be at least 1, got {k}")
    if dim == 0:
        raise SolverError("operator acts on an empty sector")
    if k > dim:
        raise SolverError(f"requested {k} eigenpairs from a dimension-{dim} sector")
    rng = np.random.default_rng(seed)
    max_basis = max(2, min(max_basis, dim))

    locked: list[np.ndarray] = []
    locked_vals: list[float] = []
    locked_res: list[float] = []
    state = {"matvecs": 0, "best_res": np.inf}

    def prep(v: np.ndarray) -> np.ndarray:
        if project is not None:
            v = project(v)
        for u in locked:
            v = v - (u @ v) * u
        return v

    def krylov_pass(start: np.ndarray, need: int) -> tuple[list[tuple[float, np.ndarray, float]], np.ndarray | None, bool]:
        """One deflated Lanczos pass; returns (converged pairs, continuation
        vector, breakdown flag)."""
        v = start / np.linalg.norm(start)
        vmat = np.empty((max_basis, dim))
        vmat[0] = v
        alphas: list[float] = []
        betas: list[float] = []
        nvec = 1
        breakdown = False
        while True:
            j = nvec - 1
            w = matvec(vmat[j])
            state["matvecs"] += 1
            if project is not None:
                w = project(w)
            a = float(vmat[j] @ w)
            alphas.append(a)
            w = w - a * vmat[j]
            if j > 0:
                w = w - betas[-1] * vmat[j - 1]
            basis_block = vmat[:nvec]
            for _ in range(2):
                w = w - basis_block.T @ (basis_block @ w)
                for u in locked:
                    w = w - (u @ w) * u
            b = float(np.linalg.norm(w))
            ready = False
            if nvec >= 2:
                theta, y = sla.eigh_tridiagonal(alphas, betas)
                ests = b * np.abs(y[-1, :])
                ready = bool(np.all(ests[: min(need, nvec)] <= 0.2 * tol))
            if b < 1e-13:
                breakdown = True
                break
            if ready or nvec == max_basis or state["matvecs"] >= max_matvecs:
                break
            vmat[nvec] = w / b
            betas.append(b)
            nvec += 1
        theta, y = sla.eigh_tridiagonal(alphas, betas)
        converged: list[tuple[float, np.ndarray, float]] = []
        continuation = None
        for i in range(len(theta)):
            if len(converged) >= need and continuation is not None:
                break
            x = vmat[:nvec].T @ y[:, i]
            x = prep(x)
            nx = np.linalg.norm(x)
            if nx < 1e-8:
                continue
            x = x / nx
            hx = matvec(x)
            state["matvecs"] += 1
            if project is not None:
                hx = project(hx)
            lam = float(x @ hx)
            r = float(np.linalg.norm(hx - lam * x))
            state["best_res"] = min(state["best_res"], r)
            if r <= tol and len(converged) < need:
                converged.append((lam, x, r))
            elif continuation is None:
                continuation = x
        return converged, continuation, breakdown

    def random_start() -> np.ndarray | None:
        for _ in range(8):
            v = prep(rng.standard_normal(dim))
            if np.linalg.norm(v) > 1e-10:
                return v
        return None

    def run_until(need: int) -> None:
        """Lock `need` more eigenpairs of the deflated operator."""
        target = len(locked_vals) + need
        start = None
        stalls = 0
        while len(locked_vals) < target:
            if start is None:
                start = random_start()
                if start is None:
                    raise SubspaceExhaustedError(
                        "search subspace exhausted before finding the requested states "
                        f"({len(locked_vals)} of {k} found)"
                    )
            converged, continuation, breakdown = krylov_pass(start, target - len(locked_vals))
            for lam, x, r in converged:
                locked.append(x)
                locked_vals.append(lam)
                locked_res.append(r)
            if len(locked_vals) >= target:
                return
            # after a lock (or breakdown) restart randomly: one Krylov space
            # carries a single copy of each degenerate eigenvalue, so missed
            # copies live in the deflated complement
            start = None if (converged or breakdown) else continuation
            stalls = 0 if converged else stalls + 1
            if state["matvecs"] >= max_matvecs or stalls > 60:
                raise NonConvergenceError(
                    f"Lanczos failed to converge {k} eigenpairs within {state['matvecs']} products",
                    state["best_res"],
                )

    try:
        run_until(k)
    except SubspaceExhaustedError:
        if not (allow_fewer and locked_vals):
            raise
    # completeness sweep: keep probing the deflated complement for anything
    # below the current k-th value (missed degenerate partners).  A single
    # lowest eigenpair never needs it: the first pass converges the global
    # minimum of the (projected) operator.
    deg_tol = 1e-9
    while k > 1 and len(locked_vals) < dim:
        kth = max(locked_vals)
        try:
            run_until(1)
        except SubspaceExhaustedError:
            break
        if locked_vals[-1] < kth - deg_tol * max(1.0, abs(kth)):
            evict = int(np.argmax(locked_vals[:-1]))
            # drop the previous k-th largest, keep the newly found lower state
            del locked[evict], locked_vals[evict], locked_res[evict]
        else:
            del locked[-1], locked_vals[-1], locked_res[-1]
            break

    vecs = _canonical_sign(np.column_stack(locked))
    return EigenSet(
        values=np.array(locked_vals),
        vectors=vecs,
        residuals=np.array(locked_res),
    )


def group_degenerate(eigenset: EigenSet, rel_tol: float = 1e-9) -> list[DegenerateManifold]:
    """Greedy grouping of consecutive eigenvalues into degenerate manifolds."""
    manifolds: list[DegenerateManifold] = []
    i = 0
    while i < eigenset.k:
        ref = eigenset.values[i]
        j = i + 1
        while j < eigenset.k and abs(eigenset.values[j] - ref) <= rel_tol * max(1.0, abs(ref)):
            j += 1
        manifolds.append(DegenerateManifold(float(ref), eigenset.vectors[:, i:j].copy()))
        i = j
    return manifolds


def sharpen_spin(eigenset: EigenSet, basis: BasisTable, rel_tol: float = 1e-9) -> EigenSet:
    """Rotate each degenerate manifold so that every vector has sharp S^2.

    The S^2 matrix elements within a manifold follow from the raised images,
    <v_i| S^2 |v_j> = M(M+1) delta_ij + <S+ v_i | S+ v_j>.
    """
    m = basis.sector.twice_ms / 2.0
    vectors = eigenset.vectors.copy()
    i = 0
    while i < eigenset.k:
        ref = eigenset.values[i]
        j = i + 1
        while j < eigenset.k and abs(eigenset.values[j] - ref) <= rel_tol * max(1.0, abs(ref)):
            j += 1
        if j - i > 1:
            block = vectors[:, i:j]
            images = [apply_splus(block[:, c], basis)[0] for c in range(j - i)]
            imat = np.array([[float(a @ b) for b in images] for a in images])
            s2 = m * (m + 1.0) * np.eye(j - i) + imat
            _, rot = sla.eigh(s2)
            vectors[:, i:j] = block @ rot
        i = j
    out = EigenSet(
        values=eigenset.values.copy(),
        vectors=_canonical_sign(vectors),
        residuals=eigenset.residuals.copy(),
        labels=list(eigenset.labels) if eigenset.labels else None,
    )
    return out


def lowest_in_label(
    operator: SparseOperator,
    label: SymmetryLabel,
    k: int = 1,
    tol: float = 1e-10,
    seed: int = 1,
    max_basis: int = 200,
) -> EigenSet:
    """Lowest k eigenstates carrying a (C2, eh, S) label.

    The Lanczos iteration runs with every iterate re-projected onto the
    requested (C2, eh) subspace; the sector must be the label's
    highest-weight sector (2M_S = 2S).  Total spin is verified on every
    candidate and only matching states are returned.
    """
    basis = operator.basis
    want_tm = label.twice_ms_highest
    if basis.sector.twice_ms != want_tm:
        raise SolverError(
            f"label {format_label(label)} is solved in the 2M_S = {want_tm} sector, "
            f"but the operator was built for 2M_S = {basis.sector.twice_ms}"
        )
    proj = projector(basis, operator.geometry, label.c2_parity, label.eh_parity)
    rng = np.random.default_rng(seed)
    probe = max(float(np.linalg.norm(proj.apply(rng.standard_normal(operator.dim)))) for _ in range(3))
    if probe < 1e-10:
        raise SolverError(
            f"the {format_label(label)} symmetry subspace of sector {basis.sector} is empty"
        )

    solve_k = k + 3
    cap = min(operator.dim, k + 40)
    while True:
        eig = lanczos_lowest(
            operator,
            k=min(solve_k, operator.dim),
            tol=tol,
            seed=seed,
            max_basis=max_basis,
            project=proj.apply,
            allow_fewer=True,
        )
        eig = sharpen_spin(eig, basis)
        sel: list[int] = []
        for i in range(eig.k):
            try:
                s = total_spin(eig.vectors[:, i], basis)
            except MixedSpinError:
                continue
            if abs(s - label.total_spin) < 0.25:
                sel.append(i)
            if len(sel) == k:
                break
        subspace_exhausted = eig.k < min(solve_k, operator.dim)
        if len(sel) >= k or solve_k >= cap or subspace_exhausted:
            break
        solve_k = min(cap, solve_k * 2)
    if len(sel) < k:
        raise SolverError(
            f"found only {len(sel)} of {k} states with label {format_label(label)} "
            f"among the lowest {solve_k} of the projected subspace"
        )
    vecs = eig.vectors[:, sel]
    for i in range(vecs.shape[1]):
        drift = float(np.linalg.norm(proj.apply(vecs[:, i]) - vecs[:, i]))
        if drift > 1e-8:
            raise SolverError(f"projection drift {drift:.2e} exceeds 1e-8; increase tol")
    return EigenSet(
        values=eig.values[sel],
        vectors=vecs,
        residuals=eig.residuals[sel],
        labels=[format_label(label)] * len(sel),
    )
