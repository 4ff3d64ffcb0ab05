"""Figure-level studies: sweeps, entropy profiles, DoS histograms, smoothing.

Everything here composes the lower modules: build a model, solve, cut,
measure.  Sweep points are independent jobs; the worker count is read from
the EDKIT_WORKERS environment variable (default 1) and result assembly is
ordered by parameter value regardless of completion order.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .basis import BasisTable, Sector, bipartite_factorize
from .entanglement import schmidt_spectrum
from .hamiltonian import ModelSpec, build_model
from .lattice import Bipartition, Geometry, build_chain, half_cut
from .solver import (
    EigenSet,
    dense_subspace_spectrum,
    lanczos_lowest,
    lowest_in_label,
    sharpen_spin,
)
from .symmetry import MixedSpinError, SymmetryLabel, parse_label, projector, total_spin

__all__ = [
    "Profile",
    "EntropyDosComparison",
    "AnalysisError",
    "dos_histogram",
    "entropy_profile",
    "sweep_ground_state",
    "sweep_block_size",
    "excited_state_series",
    "entropy_vs_logdos",
    "spearman_rank",
    "ground_state_entropy",
    "labeled_state",
    "subspace_spectrum",
    "standard_sweep_models",
    "DEFAULT_EXCITED_TARGETS",
    "HUBBARD_SWEEP_RATIOS",
]

# Ground-state sweep family: Hubbard interaction strengths in units of |t|
HUBBARD_SWEEP_RATIOS = (0, 2, 4, 6, 8, 12, 40)


def standard_sweep_models() -> dict[str, ModelSpec]:
    """The full comparison family for ground-state sweeps: Hubbard chains
    over the standard interaction ratios, the PPP chain with its standard
    parameters, and both Heisenberg chains."""
    models = {
        f"hubbard_u{r}": ModelSpec(kind="hubbard", t=-1.0, U=float(r))
        for r in HUBBARD_SWEEP_RATIOS
    }
    models["ppp"] = ModelSpec(kind="ppp", t=-2.4, U=11.26)
    models["heisenberg_half"] = ModelSpec(kind="heisenberg", J=1.0, site_spin=0.5)
    models["heisenberg_one"] = ModelSpec(kind="heisenberg", J=1.0, site_spin=1.0)
    return models

# Default excited-state series: (series name, solved label, ordinal k);
# "2_Ag+" denotes the second state of the 1_Ag+ subspace
DEFAULT_EXCITED_TARGETS = (
    ("1_Ag+", "1_Ag+", 1),
    ("2_Ag+", "1_Ag+", 2),
    ("1_Bu-", "1_Bu-", 1),
    ("3_Bu+", "3_Bu+", 1),
)


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    """A plottable series of (x, y) values plus provenance metadata."""

    x: np.ndarray
    y: np.ndarray
    metadata: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise AnalysisError("profile x and y must be 1-d arrays of equal length")
        if np.any(np.diff(x) < 0):
            raise AnalysisError("profile x values must be non-decreasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class EntropyDosComparison:
    """Per-energy-bin mean entropy next to log2 of the state count."""

    energy: np.ndarray
    mean_entropy: np.ndarray
    log2_dos: np.ndarray
    spearman: float | None


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("EDKIT_WORKERS", "1")))
    except ValueError:
        return 1


def _map_ordered(fn: Callable, args: Sequence) -> list:
    n = _workers()
    if n == 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, args))


def dos_histogram(eigenvalues: Sequence[float], bin_width: float = 0.5) -> Profile:
    """Counts of eigenvalues per [E_min + k w, E_min + (k+1) w) bin."""
    ev = np.asarray(eigenvalues, dtype=float)
    if ev.size == 0:
        raise AnalysisError("empty eigenvalue list")
    if bin_width <= 0:
        raise AnalysisError(f"bin width must be positive, got {bin_width}")
    e_min = float(ev.min())
    idx = np.floor((ev - e_min) / bin_width).astype(np.int64)
    counts = np.bincount(idx)
    centers = e_min + (np.arange(len(counts)) + 0.5) * bin_width
    return Profile(
        x=centers,
        y=counts.astype(float),
        metadata={"bin_width": bin_width, "e_min": e_min, "total": int(ev.size)},
    )


def _paper_smoothing_groups(n: int) -> list[list[int]]:
    """Index groups (0-based) of the `paper` smoothing mode.

    From each end: 5 states raw, then means over consecutive groups of four
    through the 40th state from that end (eight full groups, states 6-37);
    the dense middle is averaged in groups of ten.
    """
    head: list[list[int]] = [[i] for i in range(5)]
    pos = 5
    for _ in range(8):
        head.append(list(range(pos, pos + 4)))
        pos += 4
    tail: list[list[int]] = [[n - 1 - i] for i in range(5)][::-1]
    tpos = n - 5
    tail_groups: list[list[int]] = []
    for _ in range(8):
        tail_groups.append(list(range(tpos - 4, tpos)))
        tpos -= 4
    tail = tail_groups[::-1] + tail
    middle: list[list[int]] = []
    m = pos
    while m < tpos:
        middle.append(list(range(m, min(m + 10, tpos))))
        m += 10
    return head + middle + tail


def _state_entropies(eigenset: EigenSet, basis: BasisTable, bipartition: Bipartition) -> np.ndarray:
    index = bipartite_factorize(basis, bipartition)
    out = np.empty(eigenset.k)
    for i in range(eigenset.k):
        out[i] = schmidt_spectrum(eigenset.vectors[:, i], basis, index).total_entropy
    return out


def entropy_profile(
    eigenset: EigenSet,
    basis: BasisTable,
    bipartition: Bipartition,
    smoothing: str = "none",
    bin_width: float = 0.5,
) -> Profile:
    """Entanglement entropy across an energy spectrum, optionally smoothed.

    smoothing = "none" passes every state through; "paper" applies the
    raw-ends/groups-of-4/groups-of-10 scheme (needs at least 90 states,
    otherwise falls back to "none" with a warning); "energy_bin" averages
    the entropy inside successive energy windows of `bin_width`.
    """
    energies = eigenset.values
    entropies = _state_entropies(eigenset, basis, bipartition)
    meta = {"smoothing": smoothing, "states": int(eigenset.k)}
    if smoothing == "none":
        return Profile(x=energies.copy(), y=entropies, metadata=meta)
    if smoothing == "paper":
        if eigenset.k < 90:
            warnings.warn(
                f"paper smoothing needs at least 90 states, got {eigenset.k}; "
                "falling back to raw values",
                stacklevel=2,
            )
            meta["smoothing"] = "none(fallback)"
            return Profile(x=energies.copy(), y=entropies, metadata=meta)
        groups = _paper_smoothing_groups(eigenset.k)
        x = np.array([energies[g].mean() for g in groups])
        y = np.array([entropies[g].mean() for g in groups])
        return Profile(x=x, y=y, metadata=meta)
    if smoothing == "energy_bin":
        if bin_width <= 0:
            raise AnalysisError(f"bin width must be positive, got {bin_width}")
        e_min = float(energies.min())
        idx = np.floor((energies - e_min) / bin_width).astype(np.int64)
        xs, ys = [], []
        for b in np.unique(idx):
            sel = idx == b
            xs.append(e_min + (b + 0.5) * bin_width)
            ys.append(float(entropies[sel].mean()))
        meta["bin_width"] = bin_width
        return Profile(x=np.array(xs), y=np.array(ys), metadata=meta)
    raise AnalysisError(f"unknown smoothing mode {smoothing!r}")


def ground_state_entropy(
    geometry: Geometry,
    spec: ModelSpec,
    bipartition: Bipartition | None = None,
    tol: float = 1e-10,
    seed: int = 1,
) -> float:
    """Half-filled (or lowest-|M_S|) ground-state entanglement entropy in bits."""
    if spec.kind == "heisenberg":
        twice = round(2 * spec.site_spin)
        sector = Sector(None, (geometry.n_sites * twice) % 2)
    else:
        sector = Sector(geometry.n_sites, geometry.n_sites % 2)
    h = build_model(geometry, spec, sector)
    eig = lanczos_lowest(h, k=1, tol=tol, seed=seed)
    cut = bipartition if bipartition is not None else half_cut(geometry, geometry.n_sites // 2)
    return schmidt_spectrum(eig.vectors[:, 0], h.basis, cut).total_entropy


def sweep_ground_state(
    models: Mapping[str, ModelSpec],
    lengths: Sequence[int],
    bond_length: float = 1.397,
    tol: float = 1e-10,
    seed: int = 1,
) -> dict[str, Profile]:
    """Ground-state entropy at the equal cut versus chain length."""
    lengths = sorted(int(n) for n in lengths)
    for n in lengths:
        if n % 2 != 0 or n < 4:
            raise AnalysisError(f"chain lengths must be even and at least 4, got {n}")

    def one(item: tuple[str, ModelSpec, int]) -> float:
        _, spec, n = item
        return ground_state_entropy(build_chain(n, bond_length), spec, tol=tol, seed=seed)

    out: dict[str, Profile] = {}
    for name, spec in models.items():
        ys = _map_ordered(one, [(name, spec, n) for n in lengths])
        out[name] = Profile(
            x=np.array(lengths, dtype=float),
            y=np.array(ys),
            metadata={"model": name, "sweep": "length", "cut": "half"},
        )
    return out


def sweep_block_size(
    spec: ModelSpec,
    n_sites: int = 16,
    blocks: Sequence[int] | None = None,
    bond_length: float = 1.397,
    tol: float = 1e-10,
    seed: int = 1,
) -> Profile:
    """Ground-state entropy versus left-block size at fixed chain length."""
    blocks = list(range(1, n_sites)) if blocks is None else sorted(int(b) for b in blocks)
    for b in blocks:
        if not 1 <= b < n_sites:
            raise AnalysisError(f"block size {b} outside 1..{n_sites - 1}")
    geometry = build_chain(n_sites, bond_length)
    if spec.kind == "heisenberg":
        twice = round(2 * spec.site_spin)
        sector = Sector(None, (n_sites * twice) % 2)
    else:
        sector = Sector(n_sites, n_sites % 2)
    h = build_model(geometry, spec, sector)
    eig = lanczos_lowest(h, k=1, tol=tol, seed=seed)
    v = eig.vectors[:, 0]

    def one(b: int) -> float:
        return schmidt_spectrum(v, h.basis, half_cut(geometry, b)).total_entropy

    ys = _map_ordered(one, blocks)
    return Profile(
        x=np.array(blocks, dtype=float),
        y=np.array(ys),
        metadata={"model": spec.kind, "sweep": "block", "n_sites": n_sites},
    )


def labeled_state(
    geometry: Geometry,
    spec: ModelSpec,
    label: SymmetryLabel | str,
    k: int = 1,
    tol: float = 1e-10,
    seed: int = 1,
) -> tuple[EigenSet, BasisTable]:
    """Solve the k lowest states of a symmetry label in its natural sector."""
    if isinstance(label, str):
        label = parse_label(label)
    sector = Sector(geometry.n_sites, label.twice_ms_highest)
    h = build_model(geometry, spec, sector)
    eig = lowest_in_label(h, label, k=k, tol=tol, seed=seed)
    return eig, h.basis


def excited_state_series(
    models: Mapping[str, ModelSpec],
    lengths: Sequence[int],
    targets: Sequence[tuple[str, str, int]] = DEFAULT_EXCITED_TARGETS,
    bond_length: float = 1.397,
    tol: float = 1e-10,
    seed: int = 1,
) -> dict[tuple[str, str], Profile]:
    """Entropy of selected labeled states versus chain length.

    Each target is (series name, solved label, ordinal k); the series for
    the second state of a label (e.g. 2_Ag+) uses k = 2.
    """
    lengths = sorted(int(n) for n in lengths)
    out: dict[tuple[str, str], Profile] = {}
    for mname, spec in models.items():
        for sname, label_text, k in targets:
            ys = []
            for n in lengths:
                geometry = build_chain(n, bond_length)
                eig, basis = labeled_state(geometry, spec, label_text, k=k, tol=tol, seed=seed)
                cut = half_cut(geometry, n // 2)
                ys.append(schmidt_spectrum(eig.vectors[:, k - 1], basis, cut).total_entropy)
            out[(mname, sname)] = Profile(
                x=np.array(lengths, dtype=float),
                y=np.array(ys),
                metadata={"model": mname, "state": sname, "label": label_text, "k": k},
            )
    return out


def subspace_spectrum(
    geometry: Geometry,
    spec: ModelSpec,
    twice_ms: int,
    c2_parity: int,
    eh_parity: int | None,
    spin: float | None = None,
    cap: int = 20000,
) -> tuple[EigenSet, BasisTable]:
    """Dense full spectrum of one symmetry-adapted subspace.

    Builds the sparse orthonormal orbit basis of the (C2, eh) projector,
    diagonalizes the restricted Hamiltonian, rotates degenerate manifolds
    to sharp S^2, and optionally keeps only states of one total spin.
    """
    if spec.kind == "heisenberg":
        sector = Sector(None, twice_ms)
    else:
        sector = Sector(geometry.n_sites, twice_ms)
    h = build_model(geometry, spec, sector)
    proj = projector(h.basis, geometry, c2_parity, eh_parity)
    q = proj.orbit_basis()
    if q.shape[1] == 0:
        raise AnalysisError("the requested symmetry subspace is empty")
    eig = dense_subspace_spectrum(h, q, cap=cap)
    eig = sharpen_spin(eig, h.basis)
    if spin is None:
        return eig, h.basis
    keep = []
    for i in range(eig.k):
        try:
            s = total_spin(eig.vectors[:, i], h.basis)
        except MixedSpinError:
            continue
        if abs(s - spin) < 0.25:
            keep.append(i)
    if not keep:
        raise AnalysisError(f"no states of total spin {spin} in the requested subspace")
    return (
        EigenSet(
            values=eig.values[keep],
            vectors=eig.vectors[:, keep],
            residuals=eig.residuals[keep],
        ),
        h.basis,
    )


def spearman_rank(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks; all-tied input gives 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise AnalysisError("inputs must be 1-d arrays of equal length")

    def ranks(a: np.ndarray) -> np.ndarray:
        order = np.argsort(a, kind="stable")
        r = np.empty(len(a))
        sa = a[order]
        i = 0
        while i < len(a):
            j = i
            while j < len(a) and sa[j] == sa[i]:
                j += 1
            r[order[i:j]] = 0.5 * (i + j - 1) + 1.0
            i = j
        return r

    rx, ry = ranks(x), ranks(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def entropy_vs_logdos(
    eigenset: EigenSet,
    basis: BasisTable,
    bipartition: Bipartition,
    bin_width: float = 0.5,
) -> EntropyDosComparison:
    """Binned mean entropy against log2 of the density of states.

    The Spearman rank correlation over non-empty bins operationalizes the
    observed proportionality between entropy and log(DoS); with fewer than
    four non-empty bins it is undefined and reported as None.
    """
    if bin_width <= 0:
        raise AnalysisError(f"bin width must be positive, got {bin_width}")
    energies = eigenset.values
    entropies = _state_entropies(eigenset, basis, bipartition)
    e_min = float(energies.min())
    idx = np.floor((energies - e_min) / bin_width).astype(np.int64)
    centers, means, logdos = [], [], []
    for b in np.unique(idx):
        sel = idx == b
        centers.append(e_min + (b + 0.5) * bin_width)
        means.append(float(entropies[sel].mean()))
        logdos.append(float(np.log2(np.count_nonzero(sel))))
    corr = spearman_rank(means, logdos) if len(centers) >= 4 else None
    return EntropyDosComparison(
        energy=np.array(centers),
        mean_entropy=np.array(means),
        log2_dos=np.array(logdos),
        spearman=corr,
    )
