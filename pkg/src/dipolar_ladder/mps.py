"""Matrix product states over fused four-dimensional sites.

Tensors are indexed ``(left, physical, right)``. An :class:`MPS` tracks an
orthogonality center: every tensor left of it is a left isometry, every
tensor right of it a right isometry. Gate application and DMRG both keep the
state in this mixed-canonical form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la

from .model import LocalOperator, MPO, BondGate, SystemParams

__all__ = [
    "MPS",
    "TruncationReport",
    "truncated_svd",
    "product_state",
    "random_mps",
    "from_dense",
    "expect_local",
    "chain_average",
    "apply_bond_gate",
    "overlap",
    "expect_mpo",
    "save_checkpoint",
    "load_checkpoint",
    "local_state",
]

CHECKPOINT_VERSION = 1


@dataclass
class TruncationReport:
    discarded_weights: list[float] = field(default_factory=list)
    max_bond: int = 1

    @property
    def total(self) -> float:
        return float(sum(self.discarded_weights))


def truncated_svd(m: np.ndarray, chi_max: int | None, cutoff: float):
    """SVD keeping values with (s_k/s_0)^2 >= cutoff, at most ``chi_max`` of them.

    Returns ``(U, S, Vh, discarded)`` where ``discarded`` is the relative
    discarded weight sum(s_dropped^2)/sum(s^2). Singular values come sorted
    descending from LAPACK; ties keep LAPACK order.
    """
    try:
        U, S, Vh = la.svd(m, full_matrices=False, lapack_driver="gesdd")
    except la.LinAlgError:
        U, S, Vh = la.svd(m, full_matrices=False, lapack_driver="gesvd")
    total = float(np.sum(S**2))
    if total == 0.0:
        return U[:, :1], S[:1], Vh[:1], 0.0
    keep = int(np.count_nonzero((S / S[0]) ** 2 >= cutoff)) if cutoff > 0 else len(S)
    if chi_max is not None:
        keep = min(keep, chi_max)
    keep = max(keep, 1)
    discarded = float(np.sum(S[keep:] ** 2)) / total
    return U[:, :keep], S[:keep], Vh[:keep], discarded


class MPS:
    """Finite MPS with orthogonality-center bookkeeping.

    Attributes:
        tensors: rank-3 arrays ``(left, 4, right)``.
        center: index of the orthogonality center, or None when unknown.
        chi_max: bond-dimension cap (None for unbounded).
        cutoff: relative truncation cutoff on squared singular values.
        discarded_weight: cumulative discarded weight of all truncations.
    """

    def __init__(self, tensors, center=None, chi_max=128, cutoff=1e-10):
        self.tensors = [np.asarray(t) for t in tensors]
        self.center = center
        self.chi_max = chi_max
        self.cutoff = cutoff
        self.discarded_weight = 0.0

    def __len__(self):
        return len(self.tensors)

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def dtype(self):
        return np.result_type(*self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "MPS":
        out = MPS([t.copy() for t in self.tensors], self.center, self.chi_max, self.cutoff)
        out.discarded_weight = self.discarded_weight
        return out

    def astype(self, dtype) -> "MPS":
        out = self.copy()
        out.tensors = [t.astype(dtype) for t in out.tensors]
        return out

    # -- canonical form -------------------------------------------------

    def _shift_right(self, i: int):
        A = self.tensors[i]
        a, d, b = A.shape
        Q, R = la.qr(A.reshape(a * d, b), mode="economic")
        self.tensors[i] = Q.reshape(a, d, -1)
        self.tensors[i + 1] = np.tensordot(R, self.tensors[i + 1], axes=(1, 0))

    def _shift_left(self, i: int):
        A = self.tensors[i]
        a, d, b = A.shape
        Q, R = la.qr(A.reshape(a, d * b).T, mode="economic")
        self.tensors[i] = Q.T.reshape(-1, d, b)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], R.T, axes=(2, 0))

    def canonicalize(self, center: int = 0) -> "MPS":
        """Bring the state into mixed canonical form around ``center``."""
        for i in range(center):
            self._shift_right(i)
        for i in range(self.L - 1, center, -1):
            self._shift_left(i)
        self.center = center
        return self

    def move_center(self, j: int) -> "MPS":
        if self.center is None:
            return self.canonicalize(j)
        while self.center < j:
            self._shift_right(self.center)
            self.center += 1
        while self.center > j:
            self._shift_left(self.center)
            self.center -= 1
        return self

    def norm(self) -> float:
        if self.center is not None:
            return float(np.linalg.norm(self.tensors[self.center]))
        return float(np.sqrt(abs(overlap(self, self))))

    def normalize(self) -> "MPS":
        if self.center is None:
            self.canonicalize(0)
        c = self.center
        self.tensors[c] = self.tensors[c] / np.linalg.norm(self.tensors[c])
        return self

    def isometry_errors(self) -> list[float]:
        """Per-site deviation from the isometry expected by the canonical form."""
        errs = []
        for i, A in enumerate(self.tensors):
            a, d, b = A.shape
            if i < self.center:
                M = A.reshape(a * d, b)
                errs.append(float(np.max(np.abs(M.conj().T @ M - np.eye(b)))))
            elif i > self.center:
                M = A.reshape(a, d * b)
                errs.append(float(np.max(np.abs(M @ M.conj().T - np.eye(a)))))
            else:
                errs.append(0.0)
        return errs

    def to_dense(self) -> np.ndarray:
        """Full state vector (basis order: site 0 most significant)."""
        v = self.tensors[0]
        for A in self.tensors[1:]:
            v = np.tensordot(v, A, axes=(v.ndim - 1, 0))
        return v.reshape(-1)

    # -- observables ----------------------------------------------------

    def expect_local(self, op, i: int) -> float:
        return expect_local(self, op, i)

    def profile(self, ops) -> dict[str, np.ndarray]:
        """All single-site expectation values for several operators.

        Sweeps the orthogonality center once across the chain; the state is
        left with its center at the far end.
        """
        mats = {_label(o): _matrix(o) for o in ops}
        out = {k: np.empty(self.L) for k in mats}
        if self.center is None:
            self.canonicalize(0)
        order = range(self.L) if self.center <= self.L // 2 else range(self.L - 1, -1, -1)
        for i in order:
            self.move_center(i)
            A = self.tensors[i]
            for k, m in mats.items():
                out[k][i] = _onsite_value(A, m)
        return out


def _matrix(op):
    return op.matrix if isinstance(op, LocalOperator) else np.asarray(op)


def _label(op):
    return op.label if isinstance(op, LocalOperator) else str(id(op))


def _onsite_value(A, m):
    val = np.tensordot(A.conj(), np.tensordot(A, m, axes=(1, 1)), axes=([0, 1, 2], [0, 2, 1]))
    norm = np.vdot(A, A).real
    return complex(val).real / norm


# ---------------------------------------------------------------------------
# constructors


_UP = np.array([1.0, 0.0])
_DN = np.array([0.0, 1.0])
_XP = np.array([1.0, 1.0]) / np.sqrt(2)
_XM = np.array([1.0, -1.0]) / np.sqrt(2)
_SPIN_STATES = {"+z": _UP, "-z": _DN, "+x": _XP, "-x": _XM}


def local_state(s: str, d: str) -> np.ndarray:
    """Fused-site product vector, e.g. ``local_state("-x", "+x")``."""
    return np.kron(_SPIN_STATES[s], _SPIN_STATES[d])


def product_state(local_states, chi_max=128, cutoff=1e-10) -> MPS:
    """Bond-dimension-1 MPS from a list of normalized 4-vectors."""
    tensors = []
    for v in local_states:
        v = np.asarray(v)
        if v.shape != (4,):
            raise ValueError("local states must be 4-vectors")
        if not np.isclose(np.linalg.norm(v), 1.0, atol=1e-12):
            raise ValueError("local states must be normalized")
        tensors.append(v.reshape(1, 4, 1))
    return MPS(tensors, center=0, chi_max=chi_max, cutoff=cutoff)


def random_mps(L: int, chi: int, rng: np.random.Generator, dtype=float, chi_max=128, cutoff=1e-10) -> MPS:
    """Normalized random MPS, right-canonical with center 0."""
    dims = [1]
    for i in range(1, L):
        dims.append(min(chi, 4**i, 4 ** (L - i)))
    dims.append(1)
    tensors = []
    for i in range(L):
        shape = (dims[i], 4, dims[i + 1])
        t = rng.standard_normal(shape)
        if np.issubdtype(dtype, np.complexfloating):
            t = t + 1j * rng.standard_normal(shape)
        tensors.append(t.astype(dtype))
    psi = MPS(tensors, None, chi_max, cutoff)
    psi.canonicalize(0)
    return psi.normalize()


def from_dense(vec: np.ndarray, L: int, chi_max=None, cutoff=0.0) -> MPS:
    """Exact (optionally truncated) MPS decomposition of a state vector."""
    vec = np.asarray(vec)
    tensors = []
    rest = vec.reshape(1, -1)
    for i in range(L - 1):
        a = rest.shape[0]
        m = rest.reshape(a * 4, -1)
        U, S, Vh, _ = truncated_svd(m, chi_max, cutoff)
        tensors.append(U.reshape(a, 4, -1))
        rest = S[:, None] * Vh
    tensors.append(rest.reshape(rest.shape[0], 4, 1))
    psi = MPS(tensors, center=L - 1, chi_max=chi_max, cutoff=cutoff)
    return psi.normalize()


# ---------------------------------------------------------------------------
# observables


def expect_local(psi: MPS, op, i: int) -> float:
    """<psi|op_i|psi> for a Hermitian single-site operator at 0-based site ``i``."""
    m = _matrix(op)
    if not np.allclose(m, m.conj().T, atol=1e-12):
        raise ValueError("expect_local needs a Hermitian operator")
    if psi.center is not None:
        psi.move_center(i)
        return _onsite_value(psi.tensors[i], m)
    val = _sandwich(psi, psi, {i: m})
    assert abs(val.imag) < 1e-10, "imaginary expectation value"
    return float(val.real) / float(overlap(psi, psi).real)


def chain_average(psi: MPS, op) -> float:
    """(1/L) sum_i <op_i>."""
    prof = psi.profile([op])
    return float(np.mean(next(iter(prof.values()))))


def _sandwich(a: MPS, b: MPS, ops: dict[int, np.ndarray]) -> complex:
    E = np.ones((1, 1), dtype=np.result_type(a.dtype, b.dtype))
    for i, (A, B) in enumerate(zip(a.tensors, b.tensors)):
        if i in ops:
            B = np.tensordot(ops[i], B, axes=(1, 1)).transpose(1, 0, 2)
        E = np.tensordot(E, B, axes=(1, 0))
        E = np.tensordot(A.conj(), E, axes=([0, 1], [0, 1]))
    return complex(E[0, 0])


def overlap(a: MPS, b: MPS) -> complex:
    """<a|b>."""
    if a.L != b.L:
        raise ValueError("overlap of states with different lengths")
    return _sandwich(a, b, {})


def expect_mpo(psi: MPS, mpo: MPO, phi: MPS | None = None) -> complex:
    """<phi|W|psi> (phi defaults to psi)."""
    phi = psi if phi is None else phi
    E = np.ones((1, 1, 1), dtype=complex)  # (bra, mpo, ket)
    for A, W, B in zip(phi.tensors, mpo.tensors, psi.tensors):
        E = np.tensordot(E, B, axes=(2, 0))  # bra, w, s, b
        E = np.tensordot(E, W, axes=([1, 2], [0, 3]))  # bra, b, wr, out
        E = np.tensordot(A.conj(), E, axes=([0, 1], [0, 3]))  # a', b, wr
        E = E.transpose(0, 2, 1)
    return complex(E[0, 0, 0])


# ---------------------------------------------------------------------------
# gates


def apply_bond_gate(psi: MPS, gate: BondGate, move_right: bool = True) -> TruncationReport:
    """Apply a two-site gate at the orthogonality center and re-split by SVD.

    The center must sit on ``gate.site`` or ``gate.site + 1``. Afterwards it
    sits on ``gate.site + 1`` if ``move_right`` else on ``gate.site``. The
    state is renormalized and the discarded weight recorded.
    """
    i = gate.site
    if psi.center not in (i, i + 1):
        psi.move_center(i)
    A, B = psi.tensors[i], psi.tensors[i + 1]
    a, b = A.shape[0], B.shape[2]
    theta = np.tensordot(A, B, axes=(2, 0))  # a, s1, s2, b
    theta = np.tensordot(gate.tensor, theta, axes=([2, 3], [1, 2]))  # o1, o2, a, b
    theta = theta.transpose(2, 0, 1, 3).reshape(a * 4, 4 * b)
    U, S, Vh, disc = truncated_svd(theta, psi.chi_max, psi.cutoff)
    S = S / np.linalg.norm(S)
    if move_right:
        psi.tensors[i] = U.reshape(a, 4, -1)
        psi.tensors[i + 1] = (S[:, None] * Vh).reshape(-1, 4, b)
        psi.center = i + 1
    else:
        psi.tensors[i] = (U * S).reshape(a, 4, -1)
        psi.tensors[i + 1] = Vh.reshape(-1, 4, b)
        psi.center = i
    psi.discarded_weight += disc
    return TruncationReport([disc], len(S))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, psi: MPS, params: SystemParams | None = None) -> None:
    """Write an ``.npz`` checkpoint holding tensors and metadata."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "L": psi.L,
        "shapes": [list(t.shape) for t in psi.tensors],
        "center": psi.center,
        "chi_max": psi.chi_max,
        "cutoff": psi.cutoff,
        "discarded_weight": psi.discarded_weight,
        "params": params.to_file_dict() if params is not None else None,
    }
    arrays = {f"t{i}": np.ascontiguousarray(t, dtype=complex) for i, t in enumerate(psi.tensors)}
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | Path):
    """Inverse of :func:`save_checkpoint`; returns ``(MPS, SystemParams | None)``."""
    from .model import params_from_dict

    with np.load(path) as f:
        meta = json.loads(str(f["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        tensors = [f[f"t{i}"] for i in range(meta["L"])]
    for t, shape in zip(tensors, meta["shapes"]):
        if list(t.shape) != shape:
            raise ValueError("checkpoint tensor shape mismatch")
    psi = MPS(tensors, meta["center"], meta["chi_max"], meta["cutoff"])
    psi.discarded_weight = meta["discarded_weight"]
    params = params_from_dict(meta["params"]) if meta["params"] else None
    return psi, params
