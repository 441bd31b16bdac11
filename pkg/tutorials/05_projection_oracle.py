# %% [markdown]
# # Checking closed-form rates against a brute-force projection expansion
#
# For a handful of atoms the effective generator can be built directly from
# the superoperators: project onto the stationary subspace of the fast part
# and evaluate the time integrals through its resolvent.  The closed-form
# rates must reproduce it entry by entry.

# %%
import numpy as np

from rydeff import DephasingParams, LatticeSpec, build_chain_interactions
from rydeff import nz, rates

p = DephasingParams(rabi_omega=1.0, detuning=-3.0, dephasing_gamma=10.0)
inter = build_chain_interactions(LatticeSpec(3, nn_strength_V=7.0))
split = nz.dephasing_split(p, inter)
terms = nz.effective_terms(split.L0, split.L1, split.P)

# %% [markdown]
# Odd orders vanish because the drive always connects populations to
# coherences.

# %%
print("|L1| =", np.linalg.norm(terms["L1"]), " |L3| =", np.linalg.norm(terms["L3"]))

# %%
for order, key in ((2, ["L2"]), (4, ["L2", "L4"])):
    oracle = nz.diagonal_block(sum(terms[k] for k in key), split.dim).real
    closed = rates.build_generator(p, inter, order).toarray()
    err = np.abs(closed - oracle).max() / np.abs(oracle).max()
    print(f"order {order}: max relative deviation {err:.1e}")
