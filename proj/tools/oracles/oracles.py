"""Independent reference values frozen into the unit tests."""
import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm


def nodes(n):
    h = 1.0 / n
    return np.linspace(0.5 * h, 1 - 0.5 * h, n), np.full(n, h)


def bump(n, amp, m_star):
    x, h = nodes(n)
    r = np.clip(1 + amp * np.cos(2 * np.pi * x), m_star, 1 / m_star)
    return r / (r @ h)


def kernel_exp(x, kappa, strength):
    return strength * np.exp(-kappa * np.abs(x[:, None] - x[None, :]))


def section(name):
    print(f"\n## {name}")


def show(label, arr):
    arr = np.atleast_1d(arr)
    print(label, ", ".join(f"{v:.17g}" for v in arr.ravel()))


section("kernel matrix, 3 nodes, exp(-|x - x'|)")
x, h = nodes(3)
psi = kernel_exp(x, 1.0, 1.0)
show("psi", psi)

section("nonlocal L, uniform rho0, V = (0, 1, 0)")
rho = np.ones(3)
V = np.array([0.0, 1.0, 0.0])
L = V * (psi @ (h * rho)) - psi @ (h * rho * V)
show("L", L)

section("phi1_bar, cubic, V=0.5 W=0.1 E=0.01 psi_rho=0.3 at (v, w) = (1.2, -0.4)")
v, w = sp.symbols("v w")
n = lambda s: s**2 / 2 - s**4 / 4
N = lambda s: s - s**3
Vs, Ws, Es, pr = sp.Rational(1, 2), sp.Rational(1, 10), sp.Rational(1, 100), sp.Rational(3, 10)
bar = n(v) - n(Vs) - (v - Vs) * (N(Vs) + (w - Ws) + Es + pr * (v - Vs) / 2)
show("phi1_bar", float(bar.subs({v: sp.Rational(6, 5), w: sp.Rational(-2, 5)})))

section("linear limit system, N=-v a=b=0.5 c=0.1, exp kernel kappa=1 strength=0.5, bump(3, 0.3, 0.5)")
rho = bump(3, 0.3, 0.5)
psi = kernel_exp(x, 1.0, 0.5)
pr = psi @ (h * rho)
Kmat = np.diag(pr) - psi @ np.diag(h * rho)
a, b, c = 0.5, 0.5, 0.1
M = np.zeros((7, 7))
M[:3, :3] = -np.eye(3) - Kmat
M[:3, 3:6] = -np.eye(3)
M[3:6, :3] = a * np.eye(3)
M[3:6, 3:6] = -b * np.eye(3)
M[3:6, 6] = c
y0 = np.array([1.0, 0.5, -0.2, 0.2, 0.0, 0.1, 1.0])
y1 = expm(M) @ y0
show("rho0", rho)
show("V(1)", y1[:3])
show("W(1)", y1[3:6])

section("linear moment system at t=1, rho=1.2, eps=0.05, b=0.5, V0=0.8 W0=0.2 Svv0=eps/rho Sww0=0.25")
rho1, eps = 1.2, 0.05
k = 1 + rho1 / eps
def rhs(t, m):
    V, W, Svv, Svw, Sww = m
    return [-V - W, -b * W, -2 * k * Svv - 2 * Svw + 2, -(k + b) * Svw - Sww, -2 * b * Sww]
sol = solve_ivp(rhs, (0, 1), [0.8, 0.2, eps / rho1, 0.0, 0.25], method="DOP853", rtol=1e-13, atol=1e-15)
show("V W Svv Svw Sww", sol.y[:, -1])

section("OU transition, lambda=20, dt=0.01, target shift 0.3: mean factor, variance")
lam, dt = 20.0, 0.01
show("e, phi, var", [np.exp(-lam * dt), -np.expm1(-lam * dt) / lam, -np.expm1(-2 * lam * dt) / lam])

section("order-one HJ operator, chi = phi1_bar + 0.3 v^2 w + 0.7 t, cubic, a=b=0.5 c=0.1, "
        "eps=0.1 rho=1.1 V=0.4 W=0.2 E=0.02 psi_rho=0.25 psi_rhoV=0.1, at (v, w) = (0.75, -0.5)")
eps, rho, Vn, Wn, En, prn, prV = 0.1, 1.1, 0.4, 0.2, 0.02, 0.25, 0.1
Vs, Ws, Es, prs = sp.nsimplify(Vn), sp.nsimplify(Wn), sp.nsimplify(En), sp.nsimplify(prn)
bar = n(v) - n(Vs) - (v - Vs) * (N(Vs) + (w - Ws) + Es + prs * (v - Vs) / 2)
chi = bar + sp.Rational(3, 10) * v**2 * w
B = N(v) - w - prn * v + prV
A = a * v - b * w + c
divb = sp.diff(N(v), v) - prn - b
R = 0.7 + sp.diff(chi, v) * B + sp.diff(chi, w) * A + divb - sp.diff(chi, v, 2) - sp.diff(chi, v) ** 2
R += rho / eps * (v - Vn) * sp.diff(chi - bar, v)
show("residual", float(R.subs({v: sp.Rational(3, 4), w: sp.Rational(-1, 2)})))

section("rate fit: (0.1, 0.2), (0.05, 0.1), (0.025, 0.06)")
e = np.log([0.1, 0.05, 0.025]); s = np.log([0.2, 0.1, 0.06])
p = np.polyfit(e, s, 1); r = s - np.polyval(p, e)
show("slope intercept r2", [p[0], p[1], 1 - r @ r / ((s - s.mean()) @ (s - s.mean()))])
