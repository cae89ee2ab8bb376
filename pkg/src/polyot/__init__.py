"""polyot: semi-discrete optimal transport onto non-convex polygonal targets.

Subpackages:
  geometry   planar primitives (polygons, clipping, point location)
  potential  piecewise-affine convex analysis (conjugates, subdifferentials)
  otsolve    semi-discrete complete transport (damped Newton on Laguerre cells)
  singular   singular-set extraction and classification
  partial    optimal partial transport and free-boundary analysis
  oracle     independent brute-force references
  cli        command-line driver
"""

__version__ = "0.1.0"
