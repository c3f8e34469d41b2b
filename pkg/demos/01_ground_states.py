"""Ground states of the double chain and the phase labels read off them.

Run with ``python demos/01_ground_states.py`` (about a minute). Pass
``--full`` for the L = 60 magnetic scan, which takes roughly ten minutes.
"""

import sys

import numpy as np

from dipolar_ladder import ed
from dipolar_ladder.dmrg import DmrgConfig, classify_phase, find_ground_state, phase_label
from dipolar_ladder.model import SystemParams

# %% DMRG against exact diagonalization on a short ladder
# Five rungs span a 1024-dimensional space, small enough for a dense solve.
p = SystemParams(L=5, J_d=3.0, h_s_default=0.8, h_d_default=-2.5, C=0.4)
e_exact, _ = ed.ground_state(p)
res = find_ground_state(p, DmrgConfig(chi_max=64, cutoff=0.0))
print(f"L=5  DMRG {res.energy:.12f}  ED {e_exact:.12f}  rel. diff {abs(res.energy / e_exact - 1):.1e}")

# %% The uncoupled limit splits into two independent chains
base = SystemParams(L=10, J_d=3.0, h_s_default=0.8, h_d_default=-4.0)
e_both = find_ground_state(base, DmrgConfig(chi_max=128)).energy
e_mag = find_ground_state(base.replace(J_d=0.0, h_d_default=0.0), DmrgConfig(chi_max=32)).energy
e_ele = find_ground_state(base.replace(J_s=0.0, h_s_default=0.0), DmrgConfig(chi_max=32)).energy
print(f"C=0  E(both) = {e_both:.9f},  E(mag) + E(ele) = {e_mag + e_ele:.9f}")

# %% Phase labels at a few field points
# |<s^z>| and |<d^z>| above 0.05 mark the ferro phases. A tiny pinning field
# on the first rung picks one of the two degenerate ferro branches.
L = 60 if "--full" in sys.argv else 24
for h_s, h_d in [(0.2, -2.0), (2.0, -20.0), (0.5, -20.0), (2.0, -2.0)]:
    r = find_ground_state(SystemParams(L=L, h_s_default=h_s, h_d_default=h_d), DmrgConfig(chi_max=48))
    print(f"L={L} h_s={h_s:4.1f} h_d={h_d:6.1f}  |sz|={r.abs_sz:.3f} |dz|={r.abs_dz:.3f}  "
          f"{phase_label(classify_phase(r))}")

# %% Magnetic transition at C = 0 (full run only)
if "--full" in sys.argv:
    fields = np.round(np.arange(0.8, 1.401, 0.05), 2)
    order = []
    for h_s in fields:
        r = find_ground_state(SystemParams(L=60, h_s_default=h_s, h_d_default=-20.0), DmrgConfig(chi_max=64))
        order.append(r.abs_sz)
        print(f"h_s={h_s:.2f}  |sz|={r.abs_sz:.4f}  sweeps={len(r.energy_trace)}")
    k = next(i for i, v in enumerate(order) if v < 0.05)
    h_c = np.interp(0.05, [order[k], order[k - 1]], [fields[k], fields[k - 1]])
    print(f"|sz| drops through 0.05 at h_s = {h_c:.3f}")
