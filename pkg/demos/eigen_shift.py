"""Eigenvalue shift for two opposite poles on the nodal line and on the bisector."""

import math

from abclab.geometry import PoleConfiguration, Rectangle, build_crack_layout
from abclab.mesh import GradingSpec, generate
from abclab.potential import solve_Veps, theorem1_residual
from abclab.spectrum import EigenProblem, require_simple, solve_limit, solve_perturbed
from abclab.twopole import BISECTOR, NODAL, leading_coefficient

rect = Rectangle(-0.5, 0.5, -0.4, 0.4)
cfg = PoleConfiguration(0, 1, [0.0], [0.1, 0.1], 0.3)
for index, case, beta in ((2, BISECTOR, 4 * math.pi / math.sqrt(0.8)), (3, NODAL, 5 * math.pi / math.sqrt(0.8))):
    coef = leading_coefficient(1, beta, 0.1, case)
    print(f"mode {index} ({case}), predicted coefficient {coef:.5g}")
    for eps in (0.2, 0.1, 0.05):
        mesh = generate(rect, build_crack_layout(cfg, eps, rect), 0.05, GradingSpec(ratio=0.15))
        prob = EigenProblem(mesh)
        lim = require_simple(solve_limit(prob, cfg, nev=4), index)
        per = require_simple(solve_perturbed(prob, cfg, eps, nev=4), index)
        sol = solve_Veps(mesh, lim.field, cfg, eps, lam0=lim.lam, K=prob.K, M=prob.M)
        r = theorem1_residual(per.lam, lim.lam, sol)
        print(f"  eps={eps:<6} shift={r.lhs:+.5e}  shift/eps^2={r.lhs / eps ** 2:+.5g}  "
              f"2(E-L)={r.rhs:+.5e}")
