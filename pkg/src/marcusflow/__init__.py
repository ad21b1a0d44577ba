"""
marcusflow: Marcus SDEs with jumps, decompositions of their stochastic flows,
and attainability of planar bifoliations.

Modules
-------
driver     semimartingale driver paths (Brownian, compound Poisson, truncated Levy)
fields     vector fields with Jacobians, plus the field catalog
marcus     Marcus (canonical) SDE solver and consistency checks
ivk        flow composition formula and truncation bounds
lindec     algebraic and constituent-SDE decompositions of linear flows
flowdec    local and alternate decompositions of nonlinear flows
attain     raster saturation, attainable sets and attainability index
bundle     flows on principal bundles (trivial and reductive cases)
cli        scenario runner
"""

from . import attain, bundle, driver, errors, fields, flowdec, io, ivk, lindec, marcus

__version__ = "0.1.0"

__all__ = ["attain", "bundle", "driver", "errors", "fields", "flowdec", "io", "ivk", "lindec",
           "marcus", "__version__"]
