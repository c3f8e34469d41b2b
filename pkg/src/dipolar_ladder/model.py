"""Hamiltonian of two coupled dipolar XXZ chains in transverse fields.

Each rung (magnetic spin ``s_i``, electric spin ``d_i``) is fused into one
four-dimensional site with basis order::

    0: |s up, d up>   1: |s up, d down>   2: |s down, d up>   3: |s down, d down>

so that ``s^a = sigma^a/2 (x) 1`` and ``d^a = 1 (x) sigma^a/2``. In this
representation the on-site coupling ``C s.d`` is a single-site term and every
other term acts on nearest neighbours only. Units are hbar = 1, J_s = 1.

The Hamiltonian is

    H = J_s sum_i (sx_i sx_i+1 + sy_i sy_i+1 - 2 sz_i sz_i+1) + sum_i h_s,i sx_i
      + J_d sum_i (dx_i dx_i+1 + dy_i dy_i+1 - 2 dz_i dz_i+1) + sum_i h_d,i dx_i
      + C sum_i (sx_i dx_i + sy_i dy_i + sz_i dz_i)

with open boundary conditions. Site indices in :class:`SystemParams` overrides
are 1-based, matching the parameter-file format; array indices are 0-based.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ParameterError",
    "CapacityError",
    "SystemParams",
    "LocalOperator",
    "MPO",
    "BondGate",
    "OPERATORS",
    "local_operator",
    "onsite_term",
    "bond_term",
    "bond_hamiltonians",
    "build_hamiltonian_mpo",
    "build_bond_gates",
    "dense_hamiltonian",
    "sparse_hamiltonian",
    "load_params",
    "params_from_dict",
    "site_operator",
]

DENSE_MAX_L = 6
SPARSE_MAX_L = 8


class ParameterError(ValueError):
    """Invalid Hamiltonian parameters or parameter file."""


class CapacityError(RuntimeError):
    """Requested dense object would not fit the memory budget."""


_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}
_I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class LocalOperator:
    """A 4x4 operator on one fused site."""

    matrix: np.ndarray
    label: str

    def is_hermitian(self, atol: float = 1e-14) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol))


def _build_operators() -> dict[str, LocalOperator]:
    ops = {"id": LocalOperator(np.eye(4, dtype=complex), "id")}
    for a, sig in _PAULI.items():
        ops["s" + a] = LocalOperator(np.kron(sig / 2, _I2), "s" + a)
        ops["d" + a] = LocalOperator(np.kron(_I2, sig / 2), "d" + a)
    return ops


OPERATORS = _build_operators()


def local_operator(label: str) -> LocalOperator:
    """Look up one of ``id, sx, sy, sz, dx, dy, dz``."""
    try:
        return OPERATORS[label]
    except KeyError:
        raise KeyError(f"unknown local operator {label!r}; expected one of {sorted(OPERATORS)}") from None


# Real-valued building blocks. sy (x) sy == -(i sy) (x) (i sy) and i*sy is real.
_SX = OPERATORS["sx"].matrix.real
_SZ = OPERATORS["sz"].matrix.real
_ISY = (1j * OPERATORS["sy"].matrix).real
_DX = OPERATORS["dx"].matrix.real
_DZ = OPERATORS["dz"].matrix.real
_IDY = (1j * OPERATORS["dy"].matrix).real
_ID4 = np.eye(4)


@dataclass(frozen=True)
class SystemParams:
    """Full specification of the double-chain Hamiltonian.

    ``site_overrides`` maps a 1-based site index to ``(h_s_i, h_d_i)``.
    """

    L: int
    J_s: float = 1.0
    J_d: float = 10.0
    h_s_default: float = 0.0
    h_d_default: float = 0.0
    C: float = 0.0
    site_overrides: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ParameterError(f"L must be an integer >= 2, got {self.L!r}")
        clean = {}
        for site, fields in dict(self.site_overrides).items():
            if int(site) != site or not 1 <= site <= self.L:
                raise ParameterError(f"override site {site!r} outside [1, {self.L}]")
            h_s, h_d = fields
            clean[int(site)] = (float(h_s), float(h_d))
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "site_overrides", dict(sorted(clean.items())))

    @property
    def h_s(self) -> np.ndarray:
        """Per-site magnetic field (0-based array)."""
        return self._fields()[0]

    @property
    def h_d(self) -> np.ndarray:
        """Per-site electric field (0-based array)."""
        return self._fields()[1]

    def _fields(self):
        hs = np.full(self.L, float(self.h_s_default))
        hd = np.full(self.L, float(self.h_d_default))
        for site, (a, b) in self.site_overrides.items():
            hs[site - 1] = a
            hd[site - 1] = b
        return hs, hd

    def replace(self, **changes) -> "SystemParams":
        data = self.to_dict()
        data.update(changes)
        if "site_overrides" not in changes:
            data["site_overrides"] = self.site_overrides
        return SystemParams(**{k: v for k, v in data.items() if k != "overrides"})

    def without_overrides(self) -> "SystemParams":
        return self.replace(site_overrides={})

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "J_s": float(self.J_s),
            "J_d": float(self.J_d),
            "h_s_default": float(self.h_s_default),
            "h_d_default": float(self.h_d_default),
            "C": float(self.C),
            "site_overrides": {int(k): list(v) for k, v in self.site_overrides.items()},
        }

    def to_file_dict(self) -> dict:
        """Dictionary in the parameter-file schema (see :func:`params_from_dict`)."""
        out = {
            "L": self.L,
            "J_s": float(self.J_s),
            "J_d": float(self.J_d),
            "h_s": float(self.h_s_default),
            "h_d": float(self.h_d_default),
            "C": float(self.C),
        }
        if self.site_overrides:
            out["overrides"] = [
                {"site": k, "h_s": v[0], "h_d": v[1]} for k, v in self.site_overrides.items()
            ]
        return out

    def digest(self) -> str:
        """Short stable hash of the parameter set."""
        blob = json.dumps(self.to_file_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_FILE_KEYS = {"L", "J_s", "J_d", "h_s", "h_d", "C", "overrides"}
_OVERRIDE_KEYS = {"site", "h_s", "h_d"}


def params_from_dict(data: Mapping) -> SystemParams:
    """Build :class:`SystemParams` from the parameter-file schema.

    Schema::

        L: int            (required)
        J_s, J_d, h_s, h_d, C: float   (optional; defaults 1, 10, 0, 0, 0)
        overrides: list of {site: int (1-based), h_s: float, h_d: float}

    Raises:
        ParameterError: naming the offending key.
    """
    if not isinstance(data, Mapping):
        raise ParameterError("parameter file must contain a mapping at top level")
    unknown = set(data) - _FILE_KEYS
    if unknown:
        raise ParameterError(f"unknown parameter key {sorted(unknown)[0]!r}")
    if "L" not in data:
        raise ParameterError("missing required key 'L'")

    def num(key, default, cast=float, src=data):
        value = src.get(key, default)
        if isinstance(value, bool):
            raise ParameterError(f"key {key!r}: expected a number, got {value!r}")
        try:
            out = cast(value)
        except (TypeError, ValueError):
            raise ParameterError(f"key {key!r}: expected a number, got {value!r}") from None
        if cast is int and out != value:
            raise ParameterError(f"key {key!r}: expected an integer, got {value!r}")
        return out

    overrides = {}
    for entry in data.get("overrides") or []:
        if not isinstance(entry, Mapping):
            raise ParameterError("key 'overrides': entries must be mappings")
        bad = set(entry) - _OVERRIDE_KEYS
        if bad:
            raise ParameterError(f"unknown override key {sorted(bad)[0]!r}")
        if "site" not in entry:
            raise ParameterError("override entry missing key 'site'")
        site = num("site", None, int, entry)
        overrides[site] = (num("h_s", data.get("h_s", 0.0), float, entry),
                           num("h_d", data.get("h_d", 0.0), float, entry))
    return SystemParams(
        L=num("L", None, int),
        J_s=num("J_s", 1.0),
        J_d=num("J_d", 10.0),
        h_s_default=num("h_s", 0.0),
        h_d_default=num("h_d", 0.0),
        C=num("C", 0.0),
        site_overrides=overrides,
    )


def load_params(path: str | Path) -> SystemParams:
    """Read a YAML or JSON parameter file."""
    import yaml

    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParameterError(f"cannot parse {path}: {exc}") from None
    return params_from_dict(data)


# ---------------------------------------------------------------------------
# local terms


def onsite_term(params: SystemParams, i: int, pinning: float = 0.0) -> np.ndarray:
    """Single-site part of H at 0-based site ``i`` (real 4x4)."""
    h = params.h_s[i] * _SX + params.h_d[i] * _DX
    h = h + params.C * (_SX @ _DX - _ISY @ _IDY + _SZ @ _DZ)
    if pinning and i == 0:
        h = h - pinning * (_SZ + _DZ)
    return h


def bond_term(params: SystemParams) -> np.ndarray:
    """Nearest-neighbour coupling between two fused sites (real 16x16)."""
    out = np.zeros((16, 16))
    for J, (x, iy, z) in ((params.J_s, (_SX, _ISY, _SZ)), (params.J_d, (_DX, _IDY, _DZ))):
        out += J * (np.kron(x, x) - np.kron(iy, iy) - 2.0 * np.kron(z, z))
    return out


def bond_hamiltonians(params: SystemParams) -> list[np.ndarray]:
    """Bond Hamiltonians whose sum is H.

    On-site terms enter the two adjacent bonds with weight 1/2 each; the two
    end sites belong to a single bond and enter it with weight 1.
    """
    L = params.L
    hb = bond_term(params)
    out = []
    for i in range(L - 1):
        wl = 1.0 if i == 0 else 0.5
        wr = 1.0 if i + 1 == L - 1 else 0.5
        h = hb + wl * np.kron(onsite_term(params, i), _ID4) + wr * np.kron(_ID4, onsite_term(params, i + 1))
        out.append(h)
    return out


# ---------------------------------------------------------------------------
# MPO


@dataclass
class MPO:
    """Matrix-product operator; tensors indexed (left, right, out, in)."""

    tensors: list[np.ndarray]

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [W.shape[1] for W in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        """Contract into a full matrix (small L only)."""
        if self.L > DENSE_MAX_L:
            raise CapacityError(f"dense MPO contraction needs L <= {DENSE_MAX_L}")
        M = self.tensors[0][0]  # (right, out, in)
        for W in self.tensors[1:]:
            M = np.einsum("aij,abkl->bikjl", M, W)
            b, n1, n2, m1, m2 = M.shape
            M = M.reshape(b, n1 * n2, m1 * m2)
        return M[0]


_MPO_DIM = 8


def build_hamiltonian_mpo(params: SystemParams, pinning: float = 0.0) -> MPO:
    """MPO of the double-chain Hamiltonian with internal bond dimension 8.

    Channels: 0 = nothing placed yet, 1-3 = magnetic (x, iy, z) pending,
    4-6 = electric pending, 7 = complete. ``pinning`` adds
    ``-pinning * (sz_1 + dz_1)`` on the first site.
    """
    L = params.L
    left_ops = [_SX, _ISY, _SZ, _DX, _IDY, _DZ]
    J_s, J_d = params.J_s, params.J_d
    right_ops = [J_s * _SX, -J_s * _ISY, -2 * J_s * _SZ, J_d * _DX, -J_d * _IDY, -2 * J_d * _DZ]
    tensors = []
    for i in range(L):
        W = np.zeros((_MPO_DIM, _MPO_DIM, 4, 4))
        W[0, 0] = _ID4
        W[7, 7] = _ID4
        W[0, 7] = onsite_term(params, i, pinning)
        for k in range(6):
            W[0, k + 1] = left_ops[k]
            W[k + 1, 7] = right_ops[k]
        if i == 0:
            W = W[:1]
        if i == L - 1:
            W = W[:, 7:]
        tensors.append(W)
    return MPO(tensors)


# ---------------------------------------------------------------------------
# Trotter gates


@dataclass(frozen=True)
class BondGate:
    """Two-site propagator ``exp(-i dt H_bond)`` on 0-based sites (site, site+1)."""

    site: int
    matrix: np.ndarray
    dt: float

    @property
    def tensor(self) -> np.ndarray:
        """Gate reshaped as (out1, out2, in1, in2)."""
        return self.matrix.reshape(4, 4, 4, 4)


def _expm_hermitian(h: np.ndarray, dt: float) -> np.ndarray:
    if dt == 0:
        return np.eye(h.shape[0], dtype=complex)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * dt * w)) @ v.conj().T


def build_bond_gates(params: SystemParams, dt: float) -> list[BondGate]:
    """One gate per bond, ordered by site; even bonds are ``gates[0::2]``."""
    if dt < 0:
        raise ParameterError("dt must be non-negative")
    return [BondGate(i, _expm_hermitian(h, dt), float(dt)) for i, h in enumerate(bond_hamiltonians(params))]


# ---------------------------------------------------------------------------
# dense / sparse forms


def _embed(op: np.ndarray, i: int, L: int, n: int = 1) -> sp.csr_matrix:
    """Embed an operator on ``n`` consecutive fused sites starting at ``i``."""
    left = sp.identity(4**i, format="csr")
    right = sp.identity(4 ** (L - i - n), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def sparse_hamiltonian(params: SystemParams, pinning: float = 0.0) -> sp.csr_matrix:
    """Sparse real-symmetric Hamiltonian on the full 4^L space (L <= 8)."""
    L = params.L
    if L > SPARSE_MAX_L:
        raise CapacityError(f"sparse Hamiltonian limited to L <= {SPARSE_MAX_L}, got L={L}")
    H = sp.csr_matrix((4**L, 4**L))
    hb = bond_term(params)
    for i in range(L - 1):
        H = H + _embed(hb, i, L, 2)
    for i in range(L):
        H = H + _embed(onsite_term(params, i, pinning), i, L)
    return H.tocsr()


def dense_hamiltonian(params: SystemParams, pinning: float = 0.0) -> np.ndarray:
    """Dense Hamiltonian (real symmetric ndarray) for L <= 6."""
    if params.L > DENSE_MAX_L:
        raise CapacityError(f"dense Hamiltonian limited to L <= {DENSE_MAX_L}, got L={params.L}")
    return sparse_hamiltonian(params, pinning).toarray()


def site_operator(op: np.ndarray | LocalOperator, i: int, L: int) -> sp.csr_matrix:
    """Sparse embedding of a single-site operator at 0-based site ``i``."""
    m = op.matrix if isinstance(op, LocalOperator) else op
    return _embed(m, i, L)
