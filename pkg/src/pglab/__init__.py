"""pglab: a desk-scale laboratory for pressureless viscous gas flows.

Spectral solvers for the coupled density/velocity system on a periodic torus,
together with the functional-analytic instrumentation (Lorentz quasi-norms,
Littlewood-Paley/Besov norms, heat maximal-regularity ratios, Lagrangian flow
diagnostics) needed to check the estimates that govern these flows.
"""

from .field import Field, TimeSeries, Torus

__all__ = ["Field", "TimeSeries", "Torus"]
__version__ = "0.1.0"
