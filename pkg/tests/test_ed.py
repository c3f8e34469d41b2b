import numpy as np
import pytest
import scipy.linalg as la

from dipolar_ladder import ed
from dipolar_ladder.model import SystemParams, dense_hamiltonian, onsite_term

from conftest import random_params


def _quench(L, C, J_d=10.0):
    initial = SystemParams(L=L, J_d=J_d, h_s_default=1.0, h_d_default=-20.0, C=C)
    return initial, initial.replace(h_d_default=20.0)


def test_single_rung_spectra():
    # a one-rung Hamiltonian is the on-site term alone
    p = SystemParams(L=2, J_s=0, J_d=0, h_s_default=1, h_d_default=2)
    assert np.allclose(la.eigvalsh(onsite_term(p, 0)), [-1.5, -0.5, 0.5, 1.5])
    q = SystemParams(L=2, J_s=0, J_d=0, C=1)
    assert np.allclose(la.eigvalsh(onsite_term(q, 0)), [-0.75, 0.25, 0.25, 0.25])


def test_diagonalize_residuals_and_orthonormality(rng):
    p = random_params(rng, 4, overrides=True)
    d = ed.diagonalize(p)
    H = dense_hamiltonian(p)
    assert np.abs(H @ d.vectors - d.vectors * d.energies).max() < 1e-9
    assert np.abs(d.vectors.conj().T @ d.vectors - np.eye(256)).max() < 1e-10
    assert np.all(np.diff(d.energies) >= 0)


def test_overlap_completeness(rng):
    p = random_params(rng, 4)
    psi0 = rng.normal(size=256) + 1j * rng.normal(size=256)
    psi0 /= np.linalg.norm(psi0)
    d = ed.diagonalize(p).with_initial_state(psi0).with_dx_basis()
    assert np.sum(np.abs(d.overlaps) ** 2) == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(np.sum(np.abs(d.dx_overlaps) ** 2, axis=0), 1.0, atol=1e-10)


def test_eigenstate_constant_and_t0_value(rng):
    p = random_params(rng, 3)
    d = ed.diagonalize(p)
    A = ed.average_operator("dx", 3)
    out = ed.evolve_exact(d, d.vectors[:, 5], np.linspace(0, 2, 9), {"dx": A})["dx"]
    assert np.ptp(out) < 1e-12
    psi0 = rng.normal(size=64) + 0j
    psi0 /= np.linalg.norm(psi0)
    v0 = ed.evolve_exact(d, psi0, [0.0], {"dx": A})["dx"][0]
    assert v0 == pytest.approx(np.vdot(psi0, A @ psi0).real, abs=1e-12)


@pytest.mark.parametrize("L", [3, 5])
def test_eigen_expansion_matches_propagation(L, rng):
    p = random_params(rng, L, overrides=True)
    _, psi0 = ed.ground_state(p.replace(h_d_default=-p.h_d_default))
    times = np.linspace(0, 2, 21)
    direct = ed.propagate(p, psi0, times, ("dx", "sx"))
    d = ed.diagonalize(p)
    ops = {k: ed.average_operator(k, L) for k in ("dx", "sx")}
    expansion = ed.evolve_exact(d, psi0, times, ops)
    for k in ops:
        assert np.abs(direct[k] - expansion[k]).max() < 1e-10
    route = ed.evolve_eigenbasis_route(d, psi0, times)
    assert np.abs(route - expansion["dx"]).max() < 1e-10


def test_krylov_propagation_matches_dense(rng):
    # the Krylov path used for L = 7, 8, checked against the dense one on a smaller chain
    p = random_params(rng, 5)
    _, psi0 = ed.ground_state(p.replace(C=0.0))
    times = [0.0, 0.1, 0.3]
    dense = ed.propagate(p, psi0, times, ("dx",))["dx"]
    from scipy.sparse.linalg import expm_multiply
    from dipolar_ladder.model import sparse_hamiltonian

    H = sparse_hamiltonian(p)
    A = ed.average_operator("dx", 5, dense=False)
    vals = []
    for t in times:
        psi = expm_multiply(-1j * t * H, psi0.astype(complex))
        vals.append(np.vdot(psi, A @ psi).real)
    assert np.abs(np.array(vals) - dense).max() < 1e-10


def test_spectral_report_no_field_coupling_single_state():
    initial, final = _quench(4, 0.0, J_d=0.0)
    _, psi0 = ed.ground_state(initial)
    rows = ed.spectral_report(ed.diagonalize(final), psi0, n_top=3)
    # with J_d = 0 and C = 0 the electric state is already a product eigenstate of H_f
    assert rows[0]["weight"] == pytest.approx(1.0, abs=1e-8)


def test_spectral_report_parity_selection():
    initial, final = _quench(4, 0.0)
    _, psi0 = ed.ground_state(initial)
    rows = ed.spectral_report(ed.diagonalize(final), psi0, n_top=400)
    assert sum(r["weight"] for r in rows) == pytest.approx(1.0, abs=1e-10)
    top = rows[:4]
    assert round(top[0]["flip_character"]) == 0
    assert any(abs(r["flip_character"] - 2) < 0.5 for r in top)
    # C = 0 conserves prod(2 d^x): odd-flip states carry no weight
    odd = sum(r["weight"] for r in rows if round(r["flip_character"]) % 2 == 1)
    assert odd < 1e-6


def test_coupling_opens_odd_flip_channel():
    initial, final = _quench(4, 0.5)
    _, psi0 = ed.ground_state(initial)
    rows = ed.spectral_report(ed.diagonalize(final), psi0, n_top=400)
    one_flip = sum(r["weight"] for r in rows if 0.5 < r["flip_character"] < 1.5)
    assert one_flip > 1e-6


def test_gap_two_adjacent_flips():
    assert ed.gap_two_adjacent_flips(SystemParams(L=6, J_s=0, J_d=10, h_d_default=20)) == pytest.approx(50)
    assert ed.gap_two_adjacent_flips(SystemParams(L=6, J_s=0, J_d=0, h_d_default=20)) == pytest.approx(40)


def test_gap_matches_dense_evaluation(rng):
    p = random_params(rng, 4)
    H = dense_hamiltonian(p)
    ref = ed.polarized_state_vector(p)
    flip = ed.polarized_state_vector(p, (1, 2))
    direct = np.vdot(ref, H @ ref).real - np.vdot(flip, H @ flip).real
    assert ed.gap_two_adjacent_flips(p) == pytest.approx(direct, abs=1e-10)


def test_spectral_csv(tmp_path):
    initial, final = _quench(3, 0.0)
    _, psi0 = ed.ground_state(initial)
    rows = ed.spectral_report(ed.diagonalize(final), psi0, n_top=5)
    ed.write_spectral_report(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "rank,weight,energy,flip_character" and len(lines) == 6
