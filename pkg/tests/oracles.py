"""Independent reference implementations used only by the tests."""
import mpmath
import numpy as np
from scipy import integrate


def green_edges_numeric(k, b):
    """G+(0, d; k) from numerically integrated outgoing solutions.

    phi_L solves the barrier equation from x=0 with outgoing data toward
    x<0, phi_R from x=d toward x>d; G = phi_L(0) phi_R(d) / W.
    """
    kp2 = b.kprime ** 2
    k = complex(k)

    def rhs(x, y):
        return [y[1], (kp2 - k * k) * y[0]]

    sol = integrate.solve_ivp(rhs, [0, b.d], [1 + 0j, -1j * k], rtol=1e-12, atol=1e-14,
                              method="DOP853")
    phi_l_d, dphi_l_d = sol.y[0, -1], sol.y[1, -1]
    # phi_R = exp(ikx) beyond d: at d, phi_R = e^{ikd}, phi_R' = ik e^{ikd}
    e = np.exp(1j * k * b.d)
    wr = phi_l_d * 1j * k * e - dphi_l_d * e
    return 1.0 * e / wr


def m_function_shifted(x, q, t, hbar_over_m, shift=1.0, dps=25):
    """M(x, q; t) = (i/2pi) int exp(ikx - i a k^2) / (k - q) dk along a tilted line.

    The line k = k_s + i*eta + exp(-i pi/4) r, eta = shift/sqrt(a), misses the
    stationary point k_s = x/2a, so a pole sitting exactly there (q = k_s) is
    handled. Real q is read as q - i0. Poles between the real axis and the
    line contribute their residue exp(iqx - i a q^2) with the orientation sign.
    """
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        q = mpmath.mpc(q)
        a = mpmath.mpf(hbar_over_m) * mpmath.mpf(t) / 2
        ks = x / (2 * a)
        eta = mpmath.mpf(shift) / mpmath.sqrt(a)
        rot = mpmath.exp(-1j * mpmath.pi / 4)
        c = ks + 1j * eta

        def f(r):
            k = c + rot * r
            return mpmath.exp(1j * k * x - 1j * a * k * k) / (k - q) * rot

        r_star = mpmath.re((q - c) / rot)
        w = 1 / mpmath.sqrt(a)
        pts = sorted({float(r_star - w), float(r_star), float(r_star + w), 0.0})
        out = 1j / (2 * mpmath.pi) * mpmath.quad(f, [-mpmath.inf] + pts + [mpmath.inf])
        above_axis = mpmath.im(q) > 0
        above_line = mpmath.im((q - c) / rot) > 0
        res = mpmath.exp(1j * q * x - 1j * a * q * q)
        if above_axis and not above_line:
            out -= res
        elif above_line and not above_axis:
            out += res
        return complex(out)


def mp_amplitudes(k, b, dps=50):
    """T and R from the matching equations solved in mpmath at ``dps`` digits."""
    with mpmath.workdps(dps):
        k = mpmath.mpmathify(k)
        kp = mpmath.sqrt(mpmath.mpf(b.mass_ratio) * mpmath.mpf(b.V0) / mpmath.mpf(b.units.hbar2_over_2me))
        q = mpmath.sqrt(k * k - kp * kp)
        d = mpmath.mpf(b.d)
        if q == 0:
            # linear interior solution A + B x
            m = mpmath.matrix([[-1, 1, 0, 0],
                               [1j * k, 0, 1, 0],
                               [0, 1, d, -mpmath.exp(1j * k * d)],
                               [0, 0, 1, -1j * k * mpmath.exp(1j * k * d)]])
        else:
            ep, em = mpmath.exp(1j * q * d), mpmath.exp(-1j * q * d)
            m = mpmath.matrix([[-1, 1, 1, 0],
                               [1j * k, 1j * q, -1j * q, 0],
                               [0, ep, em, -mpmath.exp(1j * k * d)],
                               [0, 1j * q * ep, -1j * q * em, -1j * k * mpmath.exp(1j * k * d)]])
        sol = mpmath.lu_solve(m, mpmath.matrix([1, 1j * k, 0, 0]))
        return complex(sol[3]), complex(sol[0])


def mp_profile(x, kn, b, dps=40):
    """cos(q x) - i kn sin(q x)/q in mpmath."""
    with mpmath.workdps(dps):
        kn = mpmath.mpc(kn)
        kp2 = mpmath.mpf(b.mass_ratio) * mpmath.mpf(b.V0) / mpmath.mpf(b.units.hbar2_over_2me)
        q = mpmath.sqrt(kn * kn - kp2)
        x = mpmath.mpf(x)
        return complex(mpmath.cos(q * x) - 1j * kn * mpmath.sin(q * x) / q)


def _mp_den(k, b):
    kp2 = mpmath.mpf(b.mass_ratio) * mpmath.mpf(b.V0) / mpmath.mpf(b.units.hbar2_over_2me)
    q = mpmath.sqrt(k * k - kp2)
    d = mpmath.mpf(b.d)
    return 2 * k * q * mpmath.cos(q * d) - 1j * (k * k + q * q) * mpmath.sin(q * d), q


def mp_pole(seed, b, dps=40):
    """Zero of (2kq cos qd - i(k^2+q^2) sin qd)/q near ``seed`` (mpmath secant)."""
    with mpmath.workdps(dps):
        f = lambda k: _mp_den(k, b)[0] / _mp_den(k, b)[1]
        return complex(mpmath.findroot(f, mpmath.mpc(seed), tol=mpmath.mpf(10) ** (-dps + 5)))


def mp_residue(kn, b, dps=40):
    """Residue of T at kn from the mpmath derivative of D."""
    with mpmath.workdps(dps):
        k = mpmath.findroot(lambda k: _mp_den(k, b)[0] / _mp_den(k, b)[1], mpmath.mpc(kn))
        num = lambda k: 2 * k * _mp_den(k, b)[1] * mpmath.exp(-1j * k * mpmath.mpf(b.d))
        return complex(num(k) / mpmath.diff(lambda z: _mp_den(z, b)[0], k))
