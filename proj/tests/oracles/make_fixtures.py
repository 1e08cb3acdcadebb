"""Independent reference values for the frozen test fixtures.

Run with `python3 make_fixtures.py`; the printed numbers are pasted into the C++ tests.
Nothing here shares code with the library: the Kalman pass is written out as scalar
recursions and the benchmark expectation is a brute-force 2-d quadrature.
"""
import numpy as np


def kalman_scalar(a, c, q, r, m0, p0, ys):
    fm, fp, pm, pp = [], [], [], []
    loglik = 0.0
    m_pred, p_pred = m0, p0
    for n, y in enumerate(ys):
        if n > 0:
            m_pred = a * fm[-1]
            p_pred = a * a * fp[-1] + q
        s = c * c * p_pred + r
        loglik += -0.5 * (np.log(2 * np.pi * s) + (y - c * m_pred) ** 2 / s)
        k = p_pred * c / s
        pm.append(m_pred)
        pp.append(p_pred)
        fm.append(m_pred + k * (y - c * m_pred))
        fp.append((1 - k * c) * p_pred)
    sm, sp = fm[:], fp[:]
    for n in range(len(ys) - 2, -1, -1):
        j = fp[n] * a / pp[n + 1]
        sm[n] = fm[n] + j * (sm[n + 1] - pm[n + 1])
        sp[n] = fp[n] + j * j * (sp[n + 1] - pp[n + 1])
    return sm, sp, loglik


def benchmark_n2(ys, sx2=10.0, sy2=1.0, lo=-40.0, hi=40.0, points=8001):
    # X0 = 0, so the joint density lives on (x1, x2).
    x = np.linspace(lo, hi, points)
    h = x[1] - x[0]

    def npdf(v, m, s2):
        return np.exp(-0.5 * (v - m) ** 2 / s2) / np.sqrt(2 * np.pi * s2)

    g0 = npdf(ys[0], 0.0, sy2)
    m1 = 0.0 / 2 + 25 * 0.0 / (1 + 0.0) + 8 * np.cos(1.2 * 1)
    a1 = npdf(x, m1, sx2) * npdf(ys[1], x ** 2 / 20, sy2)          # over x1
    m2 = x / 2 + 25 * x / (1 + x ** 2) + 8 * np.cos(1.2 * 2)           # mean of x2 given x1
    g2 = npdf(ys[2], x ** 2 / 20, sy2)                                  # over x2
    w = np.full(points, h)
    w[0] = w[-1] = h / 2
    # joint[i, j] = a1[i] * f(x1_i -> x2_j) * g2[j]
    joint = a1[:, None] * npdf(x[None, :], m2[:, None], sx2) * g2[None, :]
    joint *= w[:, None] * w[None, :]
    z = joint.sum()
    e1 = (joint.sum(axis=1) * x).sum() / z
    e2 = (joint.sum(axis=0) * x).sum() / z
    return 0.0 + e1 + e2, np.log(z * g0)


def fos_two_particle():
    # Hand instance: previous particles (0.4, -1.1), weights (0.5, 0.5), V_0 = x_0,
    # pairwise term v_1(x0, x1) = x0 * x1, new particle x_1^1 = 0.7 with transition
    # densities fixed to f(x_0^1, x_1^1) = 1 and f(x_0^2, x_1^1) = 3.
    x0 = np.array([0.4, -1.1])
    v0 = x0.copy()
    x1 = 0.7
    f = np.array([1.0, 3.0])
    w = np.array([0.5, 0.5])
    return (w * f * (v0 + x0 * x1)).sum() / (w * f).sum()


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    sm, sp, ll = kalman_scalar(0.9, 1.0, 1.0, 1.0, 0.0, 1.0, [1.0, 0.5, -0.2])
    print("kalman smoothed means", [repr(v) for v in sm])
    print("kalman smoothed vars ", [repr(v) for v in sp])
    print("kalman loglik        ", repr(ll))
    val, lz = benchmark_n2([0.5, 1.0, 4.0])
    print("benchmark n=2 sum E[x0+x1+x2|y]", repr(val), "log p(y)", repr(lz))
    val2, lz2 = benchmark_n2([0.5, 1.0, 4.0], points=12001)
    print("  refined                      ", repr(val2), repr(lz2))
    print("fos two-particle V_1(x_1^1)", repr(fos_two_particle()))
