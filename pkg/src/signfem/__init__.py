"""signfem: 2D edge-element finite elements for Maxwell transmission problems
with sign-changing Drude coefficients.

Subpackage map: geometry (corner patterns, fold maps, domains), materials
(Drude laws, contrasts, critical windows), mesh/meshgen (locally reflection-
conform triangulations), fem (Whitney/P1/P0 assembly), reflection (discrete
reflection operators and norm diagnostics), solvers (source problem, rational
eigenproblem, inf-sup), experiments + cli (the runnable studies).
"""

__version__ = "0.1.0"
