# %% [markdown]
# # Large chains with kinetic Monte Carlo
#
# The second-order rate equation is a proper classical master equation, so
# it can be sampled event by event.  Only rates near a flipped site change,
# which keeps each event cheap on long chains.

# %%
from rydeff import DephasingParams, LatticeSpec, TimeGrid
from rydeff import kmc

lattice = LatticeSpec(2000, exponent_p=6, nn_strength_V=10.0)
params = DephasingParams(rabi_omega=1.0, detuning=0.0, dephasing_gamma=10.0)
print("rate cutoff (sites):", kmc.default_cutoff(params, lattice))

# %%
grid = TimeGrid.uniform(50.0, 11)
ens = kmc.kmc_ensemble(params, lattice, [0] * lattice.n_sites, grid, 10, base_seed=0,
                       observables=["mean_density", "g2_1"])
for t, n, se, g in zip(grid.sample_times, ens["mean_density"], ens.errors["mean_density"],
                       ens["g2_1"]):
    print(f"t={t:5.1f}  <n>={n:.4f} +- {se:.4f}  g2(1)={g:.4f}")

# %% [markdown]
# Adding radiative decay from the Rydberg level lowers the stationary density.

# %%
decaying = DephasingParams(1.0, 0.0, 10.0, decay_gamma_ryd=0.5)
ens = kmc.kmc_ensemble(decaying, lattice, [0] * lattice.n_sites, TimeGrid([40.0]), 10,
                       observables=["mean_density"])
print("with decay: <n>(t=40) =", ens["mean_density"][0])
