"""Series energy of the two-pole potential on an ellipse against the FEM minimizer."""

from types import SimpleNamespace

from abclab.geometry import Ellipse, PoleConfiguration, build_crack_layout
from abclab.mesh import GradingSpec, generate
from abclab.potential import solve_Veps
from abclab.twopole import EllipticFrame, leading_energy, polynomial, series_energy

r1, eps, L = 0.5, 0.1, 0.7
frame = EllipticFrame(r1, eps, L)
dom = Ellipse(*frame.semi_axes)
cfg = PoleConfiguration(0, 1, [0.0], [r1, r1], 0.6)
for h in (0.1, 0.05):
    mesh = generate(dom, build_crack_layout(cfg, eps, dom), h, GradingSpec(ratio=0.2))
    for m, l in ((1, [1.0, 1.0]), (2, [1.0, 0.7, 0.3]), (3, [0.5, -1.0, 0.0, 0.2])):
        val, grad = polynomial(l, m)
        fem = solve_Veps(mesh, SimpleNamespace(u=val, grad=grad), cfg, eps).norm2
        ser = series_energy(m, l[0], l[1], frame)
        lead = leading_energy(m, l[0], l[1], frame)
        print(f"h={h:<5} nodes={mesh.n:<6} m={m}  fem={fem:.8e}  series={ser:.8e}  "
              f"leading={lead:.8e}  rel={fem / ser - 1:+.2e}")
