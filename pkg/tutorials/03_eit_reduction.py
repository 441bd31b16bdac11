# %% [markdown]
# # Three-level ladder under EIT: full versus reduced dynamics
#
# The intermediate level decays at rate Gamma much faster than both Rabi
# frequencies.  Eliminating it leaves a Lindblad equation on the
# ground/Rydberg space.  A full three-level state is mapped into that space
# by moving the intermediate population to the ground state.

# %%
import numpy as np

from rydeff import EitParams, LatticeSpec, TimeGrid, build_chain_interactions, integrate
from rydeff import eit
from rydeff.operators import build_three_level_liouvillian

N = 3
inter = build_chain_interactions(LatticeSpec(N, nn_strength_V=100.0))
grid = TimeGrid.uniform(30.0, 31)
obs = ["mean_density", "fluctuations", "sigma_x"]

# %%
for ratio in (0.1, 1.0, 10.0):
    p = EitParams(omega_p=ratio, omega_c=1.0, detuning=0.0, decay_Gamma=100.0)
    full = integrate(build_three_level_liouvillian(p, inter), eit.ground_state(N, 3), grid,
                     observables=obs, transform=eit.project_and_reduce)
    reduced = integrate(eit.build_reduced_liouvillian(p, inter, "second_order"),
                        eit.ground_state(N), grid, observables=obs)
    dev = {o: float(np.abs(full[o] - reduced[o]).max()) for o in obs}
    print(f"Omega_p/Omega_c = {ratio:5.1f}: " + ", ".join(f"{k} {v:.1e}" for k, v in dev.items()))

# %% [markdown]
# ## Hard-core limit
# For very strong interactions neighbouring excitations never form.  The
# exclusion variant is purely dissipative and lives on the allowed words.

# %%
p = EitParams(omega_p=10.0, omega_c=1.0, detuning=0.0, decay_Gamma=100.0)
excl = eit.build_reduced_liouvillian(p, inter, "nn_exclusion")
print("allowed configurations", eit.allowed_configurations(N).tolist())
r = integrate(excl, eit.ground_state(N), grid, observables=["mean_density"])
print("exclusion <n>(t=30) =", r["mean_density"][-1])
