"""framewave: a verification lab for null-frame weighted energy estimates.

Evolves tensorial wave equations on prescribed perturbed-Minkowski
backgrounds, evaluates every term of the weighted exterior energy budget
and the decoupled commutator bound, and certifies the underlying exact
identities with an internal exact polynomial tensor calculus.
"""

__version__ = "0.1.0"
