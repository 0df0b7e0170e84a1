"""Energy bookkeeping for quantum flyby and inelastic scattering models.

Two static Hamiltonians are provided:

* a trapped spin in a magnetic field passed by a second spin that interacts
  with it through the dipole coupling (:mod:`flyby.enc`), and
* a projectile scattering off a particle in a harmonic trap
  (:mod:`flyby.channels` for the stationary S-matrix, :mod:`flyby.nash`
  for wavepacket dynamics).

Both are propagated with exact-substep split-operator schemes and checked
for energy conservation outcome by outcome.
"""

__version__ = "0.1.0"
