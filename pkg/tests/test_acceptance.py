"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  The heavy entries
(criterion 7a at twelve sites) take a few minutes in total.
"""

import json
import time

import numpy as np
import pytest

from edkit.analysis import (
    entropy_vs_logdos,
    labeled_state,
    subspace_spectrum,
    sweep_block_size,
    sweep_ground_state,
)
from edkit.archive import write_archive
from edkit.basis import Sector, bipartite_factorize
from edkit.cli import main as cli_main
from edkit.entanglement import (
    decade_histogram,
    degenerate_average,
    entropy_both_sides,
    free_fermion_oracle,
    schmidt_spectrum,
)
from edkit.hamiltonian import ModelSpec, build_model
from edkit.lattice import build_chain, build_icosahedron, half_cut
from edkit.solver import (
    DegenerateManifold,
    dense_spectrum,
    group_degenerate,
    lanczos_lowest,
)


def report(num: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# Reference sector entanglement entropies of the half-filled 10-site chain,
# cut 5|5, keyed by (2*M_S_left, n_left) in descending order; conjugation-
# related sectors with exactly equal values are listed once.
HUBBARD_SECTOR_REFERENCE = {
    "1_Ag+": [((1, 5), 0.545), ((0, 4), 0.275), ((2, 4), 6.1e-3),
              ((3, 5), 1.5e-3), ((1, 3), 3.5e-4), ((0, 2), 2.4e-8)],
    "1_Bu-": [((0, 4), 0.622), ((1, 5), 0.445), ((2, 4), 6.7e-2),
              ((1, 3), 3.6e-2), ((3, 5), 1.5e-4), ((0, 2), 4.2e-5)],
    "3_Bu+": [((1, 5), 1.057), ((3, 5), 0.345), ((-1, 5), 0.345),
              ((0, 4), 0.178), ((2, 6), 0.178), ((0, 6), 0.178)],
}
PPP_SECTOR_REFERENCE = {
    "1_Ag+": [((1, 5), 0.557), ((0, 4), 0.408), ((2, 4), 6.1e-3),
              ((1, 3), 4.9e-4), ((3, 5), 4.6e-4), ((0, 2), 1.1e-8)],
    "1_Bu-": [((1, 5), 0.686), ((0, 4), 0.576), ((2, 4), 1.9e-2),
              ((1, 3), 6.1e-3), ((3, 5), 9.2e-5), ((0, 2), 6.1e-7)],
    "3_Bu+": [((1, 5), 1.049), ((-1, 5), 0.282), ((3, 5), 0.282),
              ((0, 4), 0.274), ((2, 6), 0.274), ((0, 6), 0.274)],
}

CHAIN10 = build_chain(10, 1.397)
CUT55 = half_cut(CHAIN10, 5)


def _solve_labeled_states(spec: ModelSpec):
    out = {}
    for label in ("1_Ag+", "1_Bu-", "3_Bu+"):
        eig, basis = labeled_state(CHAIN10, spec, label, k=1, tol=1e-10)
        out[label] = (eig.vectors[:, 0], basis, eig.values[0])
    return out


@pytest.fixture(scope="module")
def hubbard_states():
    return _solve_labeled_states(ModelSpec(kind="hubbard", t=-1.0, U=4.0))


@pytest.fixture(scope="module")
def ppp_states():
    return _solve_labeled_states(ModelSpec(kind="ppp", t=-2.4, U=11.26))


@pytest.fixture(scope="module")
def free_chains():
    """U = 0 ground states for N in {2, 4, 6, 8}."""
    out = {}
    for n in (2, 4, 6, 8):
        g = build_chain(n, 1.397)
        h = build_model(g, ModelSpec(kind="hubbard", t=-1.0, U=0.0), Sector(n, 0))
        if h.dim <= 1000:
            eig = dense_spectrum(h)
        else:
            eig = lanczos_lowest(h, k=1, tol=1e-11, seed=1)
        out[n] = (g, eig.vectors[:, 0], h.basis)
    return out


def test_criterion_1_multiplet_counts(capsys):
    start = time.perf_counter()
    code = cli_main(["tables", "multiplets", "12"])
    elapsed = time.perf_counter() - start
    lines = capsys.readouterr().out.strip().splitlines()
    with capsys.disabled():
        got = {int(l.split(",")[0]): int(l.split(",")[1]) for l in lines[1:]}
        expected = {0: 226512, 1: 382239, 2: 196625, 3: 44044, 4: 4212, 5: 143, 6: 1}
        ok = code == 0 and got == expected and elapsed < 1.0
        report("1", ok, f"multiplets(12) = {got}, runtime {elapsed * 1000:.0f} ms")


def _check_table(rows_by_label, table, tol_fn, tie_tol=1e-6):
    failures = []
    for label, ref_rows in table.items():
        ours = rows_by_label[label]
        prev = None
        for key, target in ref_rows:
            got = ours.get(key, 0.0)
            if not tol_fn(got, target):
                failures.append(f"{label} {key}: {got:.4g} vs {target:g}")
            if prev is not None and got > prev + tie_tol:
                failures.append(f"{label} ordering violated at {key}")
            prev = got
        top_key = ref_rows[0][0]
        if abs(ours[top_key] - max(ours.values())) > 1e-9:
            failures.append(f"{label}: top sector is not {top_key}")
    return failures


def test_criterion_2_hubbard_sector_spectrum(hubbard_states, tmp_path, capsys):
    rows_by_label = {
        label: dict(schmidt_spectrum(v, basis, CUT55).sector_entropies())
        for label, (v, basis, _) in hubbard_states.items()
    }
    failures = _check_table(
        rows_by_label,
        HUBBARD_SECTOR_REFERENCE,
        lambda got, ref: abs(got - ref) <= 0.005 if ref >= 0.01 else abs(got - ref) <= 0.3 * ref,
    )
    # the same numbers must come out of the CLI sector-table task run on an
    # archived ground state
    v, basis, energy = hubbard_states["1_Ag+"]
    from edkit.solver import EigenSet

    arch_path = tmp_path / "gs.edarch"
    write_archive(
        arch_path,
        EigenSet(values=np.array([energy]), vectors=v[:, None],
                 residuals=np.array([0.0]), labels=["1_Ag+"]),
        CHAIN10, ModelSpec(kind="hubbard", t=-1.0, U=4.0), Sector(10, 0),
        tol=1e-10, seed=1,
    )
    cfg = tmp_path / "table.json"
    cfg.write_text(json.dumps({
        "run": {"task": "sector-table", "output": str(tmp_path / "out")},
        "input": {"archive": str(arch_path)},
        "entangle": {"left_size": 5},
    }))
    code = cli_main(["run", str(cfg)])
    capsys.readouterr()
    csv_rows = {}
    for line in (tmp_path / "out" / "state1_sectors.csv").read_text().splitlines()[2:]:
        tm, n, s = line.split(",")
        csv_rows[(int(tm), int(n))] = float(s)
    for key, target in HUBBARD_SECTOR_REFERENCE["1_Ag+"]:
        got = csv_rows.get(key, 0.0)
        ok = abs(got - target) <= 0.005 if target >= 0.01 else abs(got - target) <= 0.3 * target
        if not ok:
            failures.append(f"CLI csv {key}: {got:.4g} vs {target:g}")
    if code != 0:
        failures.append(f"CLI sector-table exited {code}")
    with capsys.disabled():
        report("2", not failures,
               f"18 table entries within +-0.005/30%, CLI table consistent"
               if not failures else "; ".join(failures))


def test_criterion_3_ppp_sector_spectrum(ppp_states, capsys):
    rows_by_label = {
        label: dict(schmidt_spectrum(v, basis, CUT55).sector_entropies())
        for label, (v, basis, _) in ppp_states.items()
    }
    failures = _check_table(
        rows_by_label, PPP_SECTOR_REFERENCE, lambda got, ref: abs(got - ref) <= 0.08
    )
    worst = max(
        abs(dict(rows_by_label[label]).get(key, 0.0) - ref)
        for label, rows in PPP_SECTOR_REFERENCE.items()
        for key, ref in rows
    )
    with capsys.disabled():
        report("3", not failures,
               f"18 PPP entries within +-0.08 (worst |diff| = {worst:.2e}), ordering matches"
               if not failures else "; ".join(failures))


def test_criterion_4_free_fermion_oracle(free_chains, capsys):
    worst = 0.0
    for n, (g, v, basis) in free_chains.items():
        for left in range(1, n):
            cut = half_cut(g, left)
            s_many = schmidt_spectrum(v, basis, cut).total_entropy
            s_free = free_fermion_oracle(g, -1.0, cut, Sector(n, 0))
            worst = max(worst, abs(s_many - s_free))
    with capsys.disabled():
        report("4", worst <= 1e-9,
               f"U=0 chains N in 2..8, all cuts: max |S_many - S_oracle| = {worst:.2e}")


def test_criterion_5_schmidt_properties(hubbard_states, ppp_states, free_chains, capsys):
    checks = []
    for states in (hubbard_states, ppp_states):
        for label, (v, basis, _) in states.items():
            checks.append((CHAIN10, v, basis, CUT55))
    # asymmetric cut of the ten-site chain
    v, basis, _ = hubbard_states["1_Ag+"]
    checks.append((CHAIN10, v, basis, half_cut(CHAIN10, 3)))
    for n, (g, v, basis) in free_chains.items():
        for left in range(1, n):
            checks.append((g, v, basis, half_cut(g, left)))
    worst_norm = worst_lr = worst_sum = 0.0
    bound_ok = True
    for g, v, basis, cut in checks:
        spec = schmidt_spectrum(v, basis, cut)
        worst_norm = max(worst_norm, abs(float(spec.weights.sum()) - 1.0))
        sl, sr = entropy_both_sides(v, basis, cut)
        worst_lr = max(worst_lr, abs(sl - sr))
        bound_ok &= spec.total_entropy <= spec.entropy_bound + 1e-12
        partial_sum = sum(val for _, val in spec.sector_entropies())
        worst_sum = max(worst_sum, abs(partial_sum - spec.total_entropy))
    ok = worst_norm <= 1e-10 and worst_lr <= 1e-10 and worst_sum <= 1e-10 and bound_ok
    with capsys.disabled():
        report("5", ok,
               f"{len(checks)} eigenstate/cut pairs: max |sum w - 1| = {worst_norm:.1e}, "
               f"max |S_L - S_R| = {worst_lr:.1e}, max partial-sum drift = {worst_sum:.1e}, "
               f"bound respected = {bound_ok}")


def test_criterion_6_degenerate_average_invariance(capsys):
    ico = build_icosahedron()
    h = build_model(ico, ModelSpec(kind="heisenberg", J=1.0, site_spin=0.5), Sector(None, 0))
    eig = lanczos_lowest(h, k=12, tol=1e-10, seed=1)
    manifolds = [m for m in group_degenerate(eig) if m.multiplicity >= 3]
    assert manifolds, "no manifold of multiplicity >= 3 in the lowest 12 states"
    man = manifolds[0]
    cut = half_cut(ico, 6)
    index = bipartite_factorize(h.basis, cut)
    s_ref = degenerate_average(man, h.basis, index).total_entropy
    rng = np.random.default_rng(7)
    max_dev = 0.0
    max_spread = 0.0
    for _ in range(20):
        q, _r = np.linalg.qr(rng.standard_normal((man.multiplicity, man.multiplicity)))
        rotated = DegenerateManifold(man.eigenvalue, man.vectors @ q)
        s_av = degenerate_average(rotated, h.basis, index).total_entropy
        max_dev = max(max_dev, abs(s_av - s_ref))
        members = [
            schmidt_spectrum(rotated.vectors[:, c], h.basis, index).total_entropy
            for c in range(man.multiplicity)
        ]
        max_spread = max(max_spread, max(members) - min(members))
    ok = max_dev <= 1e-8 and max_spread > 1e-3
    with capsys.disabled():
        report("6", ok,
               f"g = {man.multiplicity} manifold at E = {man.eigenvalue:.6f}: "
               f"rho_av entropy {s_ref:.4f} invariant to {max_dev:.1e} over 20 remixes, "
               f"member spread up to {max_spread:.3f}")


def test_criterion_7a_entropy_decreases_with_u(capsys):
    g = build_chain(12)
    cut = half_cut(g, 6)
    entropies = []
    for u in (0.0, 2.0, 4.0, 6.0):
        h = build_model(g, ModelSpec(kind="hubbard", t=-1.0, U=u), Sector(12, 0))
        eig = lanczos_lowest(h, k=1, tol=1e-10, seed=1)
        entropies.append(schmidt_spectrum(eig.vectors[:, 0], h.basis, cut).total_entropy)
    ok = all(entropies[i] > entropies[i + 1] for i in range(3))
    with capsys.disabled():
        report("7a", ok,
               "N=12 ground-state entropy vs U/t in (0,2,4,6): "
               + " > ".join(f"{s:.4f}" for s in entropies))


def test_criterion_7b_sixteen_site_block_sweep(capsys):
    prof = sweep_block_size(ModelSpec(kind="heisenberg", J=1.0, site_spin=0.5), n_sites=16)
    y = prof.y
    sym = max(abs(y[k - 1] - y[16 - k - 1]) for k in range(1, 16))
    alternation = all(
        y[k - 1] > y[k - 2] and y[k - 1] > y[k]
        for k in range(3, 15, 2)  # odd blocks 3..13 against both neighbors
    ) and y[0] > 0 and y[0] < y[2]
    odd_blocks = list(range(1, 16, 2))
    peak = odd_blocks[int(np.argmax([y[k - 1] for k in odd_blocks]))]
    ok = sym <= 1e-9 and alternation and peak in (7, 9)
    with capsys.disabled():
        report("7b", ok,
               f"16-site spin-1/2 sweep: max |S(k) - S(16-k)| = {sym:.1e}, "
               f"odd>even alternation = {alternation}, odd-block peak at {peak}")


def test_criterion_7c_large_u_matches_heisenberg(capsys):
    diffs = {}
    for n in (6, 8, 10):
        s_hub = None
        s_heis = None
        g = build_chain(n)
        hh = build_model(g, ModelSpec(kind="hubbard", t=-1.0, U=40.0), Sector(n, 0))
        eh = lanczos_lowest(hh, k=1, tol=1e-10, seed=1)
        s_hub = schmidt_spectrum(eh.vectors[:, 0], hh.basis, half_cut(g, n // 2)).total_entropy
        hs = build_model(g, ModelSpec(kind="heisenberg", J=1.0, site_spin=0.5), Sector(None, 0))
        es = lanczos_lowest(hs, k=1, tol=1e-10, seed=1)
        s_heis = schmidt_spectrum(es.vectors[:, 0], hs.basis, half_cut(g, n // 2)).total_entropy
        diffs[n] = abs(s_hub - s_heis)
    ok = all(d <= 0.05 for d in diffs.values())
    with capsys.disabled():
        report("7c", ok,
               "U/t=40 vs spin-1/2 Heisenberg: "
               + ", ".join(f"N={n}: |dS| = {d:.4f}" for n, d in diffs.items()))


def test_criterion_7d_spin_one_vs_spin_half(capsys):
    lengths = [4, 6, 8, 10]
    profs = sweep_ground_state(
        {
            "half": ModelSpec(kind="heisenberg", J=1.0, site_spin=0.5),
            "one": ModelSpec(kind="heisenberg", J=1.0, site_spin=1.0),
        },
        lengths,
    )
    y_half, y_one = profs["half"].y, profs["one"].y
    exceeds = bool(np.all(y_one > y_half))

    def amplitude(y):
        return float(np.mean([abs(y[i] - 0.5 * (y[i - 1] + y[i + 1])) for i in range(1, len(y) - 1)]))

    a_half, a_one = amplitude(y_half), amplitude(y_one)
    ok = exceeds and a_one < a_half
    with capsys.disabled():
        report("7d", ok,
               f"spin-1 exceeds spin-1/2 at N in {lengths}: {exceeds}; "
               f"odd-even amplitude {a_one:.3f} (spin-1) < {a_half:.3f} (spin-1/2)")


def test_criterion_7e_two_photon_state(capsys):
    g = build_chain(8)
    cut = half_cut(g, 4)
    s1 = {}
    s2 = {}
    for u in (0.0, 2.0, 4.0, 6.0):
        eig, basis = labeled_state(g, ModelSpec(kind="hubbard", t=-1.0, U=u), "1_Ag+", k=2)
        s1[u] = schmidt_spectrum(eig.vectors[:, 0], basis, cut).total_entropy
        s2[u] = schmidt_spectrum(eig.vectors[:, 1], basis, cut).total_entropy
    us = (0.0, 2.0, 4.0, 6.0)
    decreasing = all(s2[us[i]] > s2[us[i + 1]] for i in range(3))
    ok = s2[0.0] > s1[0.0] and decreasing
    with capsys.disabled():
        report("7e", ok,
               f"U=0: S(2Ag+) = {s2[0.0]:.4f} > S(1Ag+) = {s1[0.0]:.4f}; "
               f"S(2Ag+) over U: " + " > ".join(f"{s2[u]:.4f}" for u in us))


def test_criterion_8_entropy_vs_dos(capsys):
    g = build_chain(8)
    spec = ModelSpec(kind="hubbard", t=-1.0, U=4.0)
    cut = half_cut(g, 4)
    failures = []
    details = []
    for name, tm, c2, eh, s in (("1Ag+", 0, 1, 1, 0.0), ("3Bu+", 2, -1, 1, 1.0)):
        eig, basis = subspace_spectrum(g, spec, tm, c2, eh, spin=s)
        comp = entropy_vs_logdos(eig, basis, cut, bin_width=0.5)
        if comp.spearman is None or comp.spearman < 0.8:
            failures.append(f"{name}: spearman {comp.spearman}")
        index = bipartite_factorize(basis, cut)

        def hist_of(i):
            return decade_histogram(schmidt_spectrum(eig.vectors[:, i], basis, index))

        mid_energy = 0.5 * (eig.values[0] + eig.values[-1])
        i_mid = int(np.argmin(np.abs(eig.values - mid_energy)))
        spans = {}
        modal = {}
        for which, i in (("low", 0), ("mid", i_mid), ("high", eig.k - 1)):
            h = hist_of(i)
            nz = np.flatnonzero(h)
            spans[which] = int(nz[-1] - nz[0] + 1) if len(nz) else 0
            modal[which] = int(np.argmax(h))
        if modal["mid"] > 2:
            failures.append(f"{name}: middle modal decade {modal['mid']} > 2")
        for end in ("low", "high"):
            if spans[end] < spans["mid"] + 2:
                failures.append(f"{name}: {end} span {spans[end]} < mid {spans['mid']} + 2")
        details.append(
            f"{name}: spearman = {comp.spearman:.3f}, spans low/mid/high = "
            f"{spans['low']}/{spans['mid']}/{spans['high']}, mid modal = {modal['mid']}"
        )
    with capsys.disabled():
        report("8", not failures, "; ".join(details if not failures else failures))
