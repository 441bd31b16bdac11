# %% [markdown]
# # Where do fourth-order rates turn negative?
#
# The fourth-order rate equation is no longer a classical master equation
# once a single- or pair-flip rate drops below zero.  We scan the
# interaction strength V and detuning Delta at gamma = 10 Omega.

# %%
import numpy as np

from rydeff import DephasingParams, LatticeSpec, build_chain_interactions
from rydeff import rates

params = DephasingParams(rabi_omega=1.0, detuning=0.0, dephasing_gamma=10.0)
template = LatticeSpec(4, exponent_p=6, nn_strength_V=0.0)
pmap = rates.scan_positivity(params, template, (0.0, 30.0), (-30.0, 30.0), (11, 21))

# %% [markdown]
# `#` marks cells with at least one negative rate.  Rows run over V,
# columns over Delta.  The V = 0 row is always clean: without interactions
# the pair-flip rates vanish and the single-flip rates stay positive.

# %%
for V, row in zip(pmap.V_values, pmap.positive):
    print(f"V={V:5.1f} " + "".join("." if ok else "#" for ok in row))
print("negative fraction", round(pmap.negative_fraction, 3))

# %% [markdown]
# The most negative rates are pair flips.  At V = 15, Delta = 0:

# %%
p = DephasingParams(1.0, 0.0, 10.0)
inter = build_chain_interactions(LatticeSpec(4, nn_strength_V=15.0))
single, double = rates.single_flip_table(p, inter, order=4)
iu = np.triu_indices(4, 1)
print("min single", single.min(), "min pair", double[:, iu[0], iu[1]].min())
