# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled co-simulation kernels.

Fused plant + observer right-hand sides and a fixed-step RK4 driver over raw
double buffers. Layouts and signatures match :mod:`gpebo._core_py`.
"""
import numpy as np

from libc.math cimport sin, cos, isfinite
from libc.stdlib cimport malloc, free

from .numerics import IntegrationError

cdef enum:
    MAXN = 4

ctypedef int (*rhs_t)(const double* z, double* dz, void* params) noexcept nogil

ACADEMIC_SIZE = 23


# -- small dense linear algebra ------------------------------------------------

cdef double det_small(const double* M, int n, int ld) noexcept nogil:
    cdef double minor[9]
    cdef double total = 0.0, sign = 1.0
    cdef int i, j, c, cc
    if n == 1:
        return M[0]
    if n == 2:
        return M[0] * M[ld + 1] - M[1] * M[ld]
    if n == 3:
        return (M[0] * (M[ld + 1] * M[2 * ld + 2] - M[ld + 2] * M[2 * ld + 1])
                - M[1] * (M[ld] * M[2 * ld + 2] - M[ld + 2] * M[2 * ld])
                + M[2] * (M[ld] * M[2 * ld + 1] - M[ld + 1] * M[2 * ld]))
    # n == 4: Laplace expansion along the first row
    for j in range(4):
        cc = 0
        for i in range(1, 4):
            for c in range(4):
                if c != j:
                    minor[cc] = M[i * ld + c]
                    cc += 1
        total += sign * M[j] * det_small(minor, 3, 3)
        sign = -sign
    return total


cdef void adjugate_small(const double* M, int n, double* adj) noexcept nogil:
    """adj[j, i] = (-1)^(i+j) det(M without row i, column j); row-major, n x n."""
    cdef double minor[9]
    cdef int i, j, r, c, cc
    if n == 1:
        adj[0] = 1.0
        return
    if n == 2:
        adj[0] = M[3]
        adj[1] = -M[1]
        adj[2] = -M[2]
        adj[3] = M[0]
        return
    for i in range(n):
        for j in range(n):
            cc = 0
            for r in range(n):
                if r == i:
                    continue
                for c in range(n):
                    if c == j:
                        continue
                    minor[cc] = M[r * n + c]
                    cc += 1
            adj[j * n + i] = (1.0 if (i + j) % 2 == 0 else -1.0) * det_small(minor, n - 1, n - 1)


# -- RK4 driver ---------------------------------------------------------------

cdef int rk4_run(rhs_t f, void* p, double* out, Py_ssize_t nz, double h, Py_ssize_t n_steps,
                 Py_ssize_t* bad_step, Py_ssize_t* bad_idx) noexcept nogil:
    cdef double* work = <double*> malloc(5 * nz * sizeof(double))
    cdef double* k1
    cdef double* k2
    cdef double* k3
    cdef double* k4
    cdef double* tmp
    cdef double* x
    cdef double* xn
    cdef double hh = 0.5 * h
    cdef double h6 = h / 6.0
    cdef Py_ssize_t s, i
    cdef int status = 0
    if work == NULL:
        return -2
    k1 = work
    k2 = work + nz
    k3 = work + 2 * nz
    k4 = work + 3 * nz
    tmp = work + 4 * nz
    for s in range(n_steps):
        x = out + s * nz
        xn = out + (s + 1) * nz
        status = f(x, k1, p)
        if status:
            break
        for i in range(nz):
            tmp[i] = x[i] + hh * k1[i]
        status = f(tmp, k2, p)
        if status:
            break
        for i in range(nz):
            tmp[i] = x[i] + hh * k2[i]
        status = f(tmp, k3, p)
        if status:
            break
        for i in range(nz):
            tmp[i] = x[i] + h * k3[i]
        status = f(tmp, k4, p)
        if status:
            break
        for i in range(nz):
            xn[i] = x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not isfinite(xn[i]):
                bad_idx[0] = i
                status = -1
        if status:
            break
    bad_step[0] = s
    free(work)
    return status


cdef object _drive(rhs_t f, void* p, z0, double h, Py_ssize_t n_steps, double t0):
    cdef double[::1] z = np.ascontiguousarray(z0, dtype=np.float64)
    cdef Py_ssize_t nz = z.shape[0]
    result = np.empty((n_steps + 1, nz), dtype=np.float64)
    cdef double[:, ::1] out = result
    cdef Py_ssize_t bad_step = 0, bad_idx = 0
    cdef int status
    out[0, :] = z
    with nogil:
        status = rk4_run(f, p, &out[0, 0], nz, h, n_steps, &bad_step, &bad_idx)
    if status == -1:
        raise IntegrationError(t0 + bad_step * h, bad_idx)
    if status == -2:
        raise MemoryError("RK4 work buffer")
    if status == 1:
        raise ValueError(f"growth-rate denominator not positive near t={t0 + bad_step * h:.17g}")
    return result


# -- cubic oscillator + PEBO/DREM observer ----------------------------------------

cdef struct AcademicP:
    double lam
    double gam


cdef int academic_rhs(const double* z, double* dz, void* vp) noexcept nogil:
    cdef AcademicP* p = <AcademicP*> vp
    cdef double lam = p.lam
    cdef double x1 = z[0], x2 = z[1], xi = z[2]
    cdef const double* f = z + 3
    cdef const double* Om = z + 8
    cdef const double* q = z + 17
    cdef double y = x1
    cdef double Y = lam * (y - z[6]) - z[7]
    cdef double adj[9]
    cdef double Delta, mixed0
    cdef int i, j
    dz[0] = x2 * x2 * x2
    dz[1] = -x1
    dz[2] = -y
    dz[3] = lam * (3.0 * xi * xi - f[0])
    dz[4] = lam * (3.0 * xi - f[1])
    dz[5] = lam * (1.0 - f[2])
    dz[6] = lam * (y - z[6])
    dz[7] = lam * (xi * xi * xi - z[7])
    for i in range(3):
        for j in range(3):
            dz[8 + 3 * i + j] = lam * (f[i] * f[j] - Om[3 * i + j])
        dz[17 + i] = lam * (f[i] * Y - q[i])
    adjugate_small(Om, 3, adj)
    Delta = det_small(Om, 3, 3)
    mixed0 = adj[0] * q[0] + adj[1] * q[1] + adj[2] * q[2]
    dz[20] = -p.gam * Delta * (Delta * z[20] - mixed0)
    dz[21] = -p.gam * Delta * Delta * z[21]
    dz[22] = Delta * Delta
    return 0


def simulate_academic(z0, double lam, double gamma, double h, Py_ssize_t n_steps, double t0=0.0):
    cdef AcademicP p
    p.lam = lam
    p.gam = gamma
    if np.asarray(z0).shape != (ACADEMIC_SIZE,):
        raise ValueError(f"academic state must have {ACADEMIC_SIZE} components")
    return _drive(academic_rhs, &p, z0, h, n_steps, t0)


# -- multimachine power system + speed observer + voltage GPEBO -------------------

cdef struct PowerP:
    int n
    double a[MAXN]
    double b[MAXN]
    double D[MAXN]
    double P[MAXN]
    double G[MAXN]
    double Bm[MAXN]
    double u[MAXN]
    double kw[MAXN]
    double Y[MAXN * MAXN]
    double alpha[MAXN * MAXN]
    double lam
    double gam
    int variant


cdef int power_rhs(const double* z, double* dz, void* vp) noexcept nogil:
    cdef PowerP* p = <PowerP*> vp
    cdef int n = p.n
    cdef int nn = n * n
    cdef const double* delta = z
    cdef const double* omega = z + n
    cdef const double* E = z + 2 * n
    cdef const double* xiw = z + 3 * n
    cdef const double* xi = z + 4 * n
    cdef const double* Phi = z + 5 * n
    cdef const double* Yf = z + 5 * n + nn
    cdef const double* Om = z + 6 * n + nn
    cdef const double* th = z + 6 * n + 2 * nn
    cdef double w = z[7 * n + 2 * nn]
    cdef double S[MAXN * MAXN]
    cdef double T[MAXN * MAXN]
    cdef double Lam[MAXN * MAXN]
    cdef double L[MAXN * MAXN]
    cdef double Psi[MAXN * MAXN]
    cdef double adj[MAXN * MAXN]
    cdef double Pe[MAXN]
    cdef double Qe[MAXN]
    cdef double r[MAXN]
    cdef double mixed[MAXN]
    cdef double ang, acc, acc2, what, Delta, lam = p.lam
    cdef int i, j, k
    for i in range(n):
        for j in range(n):
            if i == j:
                S[i * n + i] = p.G[i]
                T[i * n + i] = -p.Bm[i]
                Lam[i * n + i] = -p.a[i]
            else:
                ang = delta[i] - delta[j] + p.alpha[i * n + j]
                S[i * n + j] = p.Y[i * n + j] * sin(ang)
                T[i * n + j] = -p.Y[i * n + j] * cos(ang)
                Lam[i * n + j] = p.b[i] * p.Y[i * n + j] * cos(ang)
    for i in range(n):
        acc = 0.0
        acc2 = 0.0
        for j in range(n):
            acc += S[i * n + j] * E[j]
            acc2 += T[i * n + j] * E[j]
        Pe[i] = E[i] * acc
        Qe[i] = E[i] * acc2
    for i in range(n):
        for j in range(n):
            L[i * n + j] = Pe[i] * T[i * n + j] - Qe[i] * S[i * n + j]
    # plant
    for i in range(n):
        dz[i] = omega[i]
        dz[n + i] = -p.D[i] * omega[i] + p.P[i] - Pe[i]
        acc = 0.0
        for j in range(n):
            acc += Lam[i * n + j] * E[j]
        dz[2 * n + i] = acc + p.u[i]
        what = xiw[i] + p.kw[i] * delta[i]
        dz[3 * n + i] = -(p.D[i] + p.kw[i]) * what + p.P[i] - Pe[i]
    # copy system and fundamental matrix
    for i in range(n):
        acc = 0.0
        acc2 = 0.0
        for k in range(n):
            acc += Lam[i * n + k] * xi[k]
            acc2 += L[i * n + k] * xi[k]
        dz[4 * n + i] = acc + p.u[i]
        r[i] = -acc2
        for j in range(n):
            acc = 0.0
            acc2 = 0.0
            for k in range(n):
                acc += Lam[i * n + k] * Phi[k * n + j]
                acc2 += L[i * n + k] * Phi[k * n + j]
            dz[5 * n + i * n + j] = acc
            Psi[i * n + j] = acc2
    # filtered regression
    for i in range(n):
        acc = 0.0
        for k in range(n):
            acc += Psi[k * n + i] * r[k]
        dz[5 * n + nn + i] = lam * (acc - Yf[i])
        for j in range(n):
            acc = 0.0
            if p.variant == 0:
                for k in range(n):
                    acc += Psi[k * n + i] * Psi[k * n + j]
            else:
                for k in range(n):
                    acc += Phi[i * n + k] * Phi[j * n + k]
            dz[6 * n + nn + i * n + j] = lam * (acc - Om[i * n + j])
    adjugate_small(Om, n, adj)
    Delta = det_small(Om, n, n)
    for i in range(n):
        acc = 0.0
        for k in range(n):
            acc += adj[i * n + k] * Yf[k]
        dz[6 * n + 2 * nn + i] = -p.gam * Delta * (Delta * th[i] - acc)
    dz[7 * n + 2 * nn] = -p.gam * Delta * Delta * w
    dz[7 * n + 2 * nn + 1] = Delta * Delta
    return 0


def simulate_power(z0, a, b, D, P, G, Bm, u, kw, Y, alpha, double lam, double gamma, int omega_variant,
                   double h, Py_ssize_t n_steps, double t0=0.0):
    cdef PowerP p
    cdef int n = len(a), i
    if n < 1 or n > MAXN:
        raise ValueError(f"compiled power kernel supports 1..{MAXN} machines, got {n}")
    if np.asarray(z0).shape != (7 * n + 2 * n * n + 2,):
        raise ValueError("power state vector has the wrong length")
    Yv = np.ascontiguousarray(Y, dtype=np.float64).reshape(-1)
    Av = np.ascontiguousarray(alpha, dtype=np.float64).reshape(-1)
    p.n = n
    for i in range(n):
        p.a[i] = a[i]
        p.b[i] = b[i]
        p.D[i] = D[i]
        p.P[i] = P[i]
        p.G[i] = G[i]
        p.Bm[i] = Bm[i]
        p.u[i] = u[i]
        p.kw[i] = kw[i]
    for i in range(n * n):
        p.Y[i] = Yv[i]
        p.alpha[i] = Av[i]
    p.lam = lam
    p.gam = gamma
    p.variant = omega_variant
    return _drive(power_rhs, &p, z0, h, n_steps, t0)


# -- anaerobic digester + reactor GPEBO ---------------------------------------------

cdef struct ReactorP:
    double Ky[4]
    double Kx[4]
    double Kyp[4]
    double chiy[2]
    double chix[2]
    double B[2]
    double u
    double mu_m1
    double K_S1
    double mu_m2
    double K_S2
    double K_I
    double lam
    double gam


cdef int reactor_rhs(const double* z, double* dz, void* vp) noexcept nogil:
    cdef ReactorP* p = <ReactorP*> vp
    cdef const double* y = z
    cdef const double* x = z + 2
    cdef const double* xi = z + 4
    cdef const double* Phi = z + 6
    cdef const double* Pf = z + 10
    cdef const double* zd = z + 14
    cdef const double* zc = z + 16
    cdef const double* th = z + 18
    cdef double u = p.u, lam = p.lam
    cdef double den1 = p.K_S1 + y[0]
    cdef double den2 = p.K_S2 + y[1] + p.K_I * y[1] * y[1]
    cdef double R[2]
    cdef double r[2]
    cdef double ydag[2]
    cdef double chil[2]
    cdef double Yv[2]
    cdef double M[4]
    cdef double adj[4]
    cdef double PtY[2]
    cdef double Delta, m0, m1
    cdef int i, j
    if den1 <= 0.0 or den2 <= 0.0:
        return 1
    R[0] = p.mu_m1 * y[0] / den1
    R[1] = p.mu_m2 * y[1] / den2
    r[0] = R[0] * x[0]
    r[1] = R[1] * x[1]
    for i in range(2):
        dz[i] = -u * y[i] + (p.Ky[2 * i] * r[0] + p.Ky[2 * i + 1] * r[1]) + p.chiy[i]
        dz[2 + i] = -u * x[i] + (p.Kx[2 * i] * r[0] + p.Kx[2 * i + 1] * r[1]) + p.chix[i]
        dz[4 + i] = -u * xi[i] + p.B[i]
        ydag[i] = p.Kyp[2 * i] * y[0] + p.Kyp[2 * i + 1] * y[1]
    for i in range(4):
        dz[6 + i] = -u * Phi[i]
    for i in range(2):
        chil[i] = (-u * ydag[i] + (p.Kyp[2 * i] * p.chiy[0] + p.Kyp[2 * i + 1] * p.chiy[1])
                   + R[i] * (xi[i] + (p.Kx[2 * i] * ydag[0] + p.Kx[2 * i + 1] * ydag[1])))
        for j in range(2):
            dz[10 + 2 * i + j] = lam * (R[i] * Phi[2 * i + j] - Pf[2 * i + j])
        dz[14 + i] = lam * (ydag[i] - zd[i])
        dz[16 + i] = lam * (chil[i] - zc[i])
        Yv[i] = lam * (ydag[i] - zd[i]) - zc[i]
    for i in range(2):
        for j in range(2):
            M[2 * i + j] = Pf[i] * Pf[j] + Pf[2 + i] * Pf[2 + j]
        PtY[i] = Pf[i] * Yv[0] + Pf[2 + i] * Yv[1]
    adjugate_small(M, 2, adj)
    Delta = det_small(M, 2, 2)
    m0 = adj[0] * PtY[0] + adj[1] * PtY[1]
    m1 = adj[2] * PtY[0] + adj[3] * PtY[1]
    dz[18] = -p.gam * Delta * (Delta * th[0] - m0)
    dz[19] = -p.gam * Delta * (Delta * th[1] - m1)
    dz[20] = -p.gam * Delta * Delta * z[20]
    dz[21] = Delta * Delta
    return 0


def simulate_reactor(z0, K_y, K_x, chi_y, chi_x, double u, kinetics, double lam, double gamma,
                     double h, Py_ssize_t n_steps, double t0=0.0):
    """Digester co-simulation; ``kinetics = (mu_m1, K_S1, mu_m2, K_S2, K_I)``."""
    cdef ReactorP p
    cdef int i
    Ky = np.asarray(K_y, dtype=np.float64)
    Kx = np.asarray(K_x, dtype=np.float64)
    if Ky.shape != (2, 2) or Kx.shape != (2, 2) or np.asarray(z0).shape != (22,):
        raise ValueError("compiled reactor kernel supports the two-reaction digester layout only")
    Kyp = np.linalg.solve(Ky.T @ Ky, Ky.T)
    cy = np.asarray(chi_y, dtype=np.float64)
    cx = np.asarray(chi_x, dtype=np.float64)
    B = -Kx @ Kyp @ cy + cx
    for i in range(4):
        p.Ky[i] = Ky.flat[i]
        p.Kx[i] = Kx.flat[i]
        p.Kyp[i] = Kyp.flat[i]
    for i in range(2):
        p.chiy[i] = cy[i]
        p.chix[i] = cx[i]
        p.B[i] = B[i]
    p.u = u
    p.mu_m1, p.K_S1, p.mu_m2, p.K_S2, p.K_I = (float(k) for k in kinetics)
    p.lam = lam
    p.gam = gamma
    return _drive(reactor_rhs, &p, z0, h, n_steps, t0)
