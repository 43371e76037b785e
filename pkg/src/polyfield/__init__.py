"""Covariant Hamiltonian field theory on multimomentum phase space.

The package builds the phase space of graded momenta over a product of a
base (space-time) and a fiber (field) manifold, its canonical n-form and
closed (n+1)-form, performs the Legendre correspondence, provides the
generalized Poisson bracket algebra on forms (including the Grassmann
extension to lower degree), integrates the first-order covariant Hamilton
equations at desk scale and ships the scalar-field, bosonic-string and
electromagnetic example systems.
"""

from .expr import Expression, OpaqueJet, parse

__all__ = ["Expression", "OpaqueJet", "parse"]

__version__ = "0.1.0"
