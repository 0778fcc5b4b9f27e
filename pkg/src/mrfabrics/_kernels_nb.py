"""Compiled kernels: planar chain kinematics, the fused fabric policy and fleet rollouts.

Loops are written scalar-style for numba. ``_kernels_np`` holds the vectorized
numpy twin with identical signatures; ``kernels`` picks one at import time.

Status codes returned by the policy kernels:
    0  ok
    1  metric regularized with ``eps * I`` before solving
    2  distance gradient singular (coincident centers); ``info`` = sphere * n_obs + obstacle
    3  metric singular even after regularization
"""
import math

import numpy as np

from ._jit import njit

OK = 0
REGULARIZED = 1
GRADIENT_SINGULAR = 2
METRIC_SINGULAR = 3

# indices into the ``consts`` vector
C_LAM_M, C_SMOOTH, C_K_ATTR, C_W_ATTR, C_D_FLOOR, C_EPS = range(6)


@njit(cache=True)
def point_kinematics_into(q, qd, lengths, base, link, offset, p, J, jdqd):
    n = q.shape[0]
    p[0] = base[0]
    p[1] = base[1]
    jdqd[0] = 0.0
    jdqd[1] = 0.0
    for j in range(n):
        J[0, j] = 0.0
        J[1, j] = 0.0
    phi = base[2]
    phid = 0.0
    for k in range(link + 1):
        phi += q[k]
        phid += qd[k]
        w = lengths[k] * offset if k == link else lengths[k]
        c = math.cos(phi)
        s = math.sin(phi)
        p[0] += w * c
        p[1] += w * s
        jdqd[0] -= w * phid * phid * c
        jdqd[1] -= w * phid * phid * s
        for j in range(k + 1):
            J[0, j] -= w * s
            J[1, j] += w * c


@njit(cache=True)
def point_kinematics(q, qd, lengths, base, link, offset):
    n = q.shape[0]
    p = np.empty(2)
    J = np.empty((2, n))
    jdqd = np.empty(2)
    point_kinematics_into(q, qd, lengths, base, link, offset, p, J, jdqd)
    return p, J, jdqd


@njit(cache=True)
def sphere_states(q, qd, lengths, base, sph_link, sph_off):
    L = sph_link.shape[0]
    n = q.shape[0]
    centers = np.empty((L, 2))
    vels = np.empty((L, 2))
    p = np.empty(2)
    J = np.empty((2, n))
    jd = np.empty(2)
    for a in range(L):
        point_kinematics_into(q, qd, lengths, base, sph_link[a], sph_off[a], p, J, jd)
        centers[a, 0] = p[0]
        centers[a, 1] = p[1]
        vx = 0.0
        vy = 0.0
        for j in range(n):
            vx += J[0, j] * qd[j]
            vy += J[1, j] * qd[j]
        vels[a, 0] = vx
        vels[a, 1] = vy
    return centers, vels


@njit(cache=True)
def _cholesky_solve(A, b, out):
    n = A.shape[0]
    Lm = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= Lm[i, k] * Lm[j, k]
            if i == j:
                if s <= 0.0 or not math.isfinite(s):
                    return False
                Lm[i, i] = math.sqrt(s)
            else:
                Lm[i, j] = s / Lm[j, j]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= Lm[i, k] * y[k]
        y[i] = s / Lm[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= Lm[k, i] * out[k]
        out[i] = s / Lm[i, i]
    return True


@njit(cache=True)
def policy_accel(q, qd, lengths, base, lo, hi, sph_link, sph_off, sph_rad,
                 obs_c, obs_v, obs_r, goal, gamma, damping, lam, lam_lim, consts):
    n = q.shape[0]
    lam_m = consts[C_LAM_M]
    d_floor = consts[C_D_FLOOR]
    M = np.zeros((n, n))
    fh = np.zeros(n)
    fl = np.zeros(n)
    qdd = np.zeros(n)

    # joint-limit barriers on the margins q - lo and hi - q
    for j in range(n):
        for side in range(2):
            if side == 0:
                d = q[j] - lo[j]
                dd = qd[j]
                sgn = 1.0
            else:
                d = hi[j] - q[j]
                dd = -qd[j]
                sgn = -1.0
            if d < d_floor:
                d = d_floor
            m = lam_m / d
            h = -lam_lim * dd * dd / (d * d) if dd < 0.0 else 0.0
            M[j, j] += m
            fh[j] += sgn * m * h
            fl[j] += sgn * (-0.5 * lam_m * dd * dd / (d * d))

    # sphere-obstacle barriers through the clearance coordinate
    L = sph_link.shape[0]
    O = obs_c.shape[0]
    p = np.empty(2)
    J = np.empty((2, n))
    jd = np.empty(2)
    g = np.empty(n)
    for a in range(L):
        point_kinematics_into(q, qd, lengths, base, sph_link[a], sph_off[a], p, J, jd)
        vax = 0.0
        vay = 0.0
        for j in range(n):
            vax += J[0, j] * qd[j]
            vay += J[1, j] * qd[j]
        for b in range(O):
            rx = p[0] - obs_c[b, 0]
            ry = p[1] - obs_c[b, 1]
            rho = math.sqrt(rx * rx + ry * ry)
            if rho < 1e-12:
                return qdd, GRADIENT_SINGULAR, a * O + b
            ux = rx / rho
            uy = ry / rho
            vrx = vax - obs_v[b, 0]
            vry = vay - obs_v[b, 1]
            d = rho - sph_rad[a] - obs_r[b]
            if d < d_floor:
                d = d_floor
            dd = ux * vrx + uy * vry
            jdd = ux * jd[0] + uy * jd[1] + (vrx * vrx + vry * vry - dd * dd) / rho
            m = lam_m / d
            h = -lam * dd * dd / (d * d) if dd < 0.0 else 0.0
            fle = -0.5 * lam_m * dd * dd / (d * d)
            for j in range(n):
                g[j] = ux * J[0, j] + uy * J[1, j]
            for i in range(n):
                gi = g[i]
                fh[i] += gi * (m * h + m * jdd)
                fl[i] += gi * (fle + m * jdd)
                for j in range(n):
                    M[i, j] += m * gi * g[j]

    # attractor: end-effector metric and forcing
    w_attr = consts[C_W_ATTR]
    point_kinematics_into(q, qd, lengths, base, n - 1, 1.0, p, J, jd)
    for i in range(n):
        fh[i] += w_attr * (J[0, i] * jd[0] + J[1, i] * jd[1])
        fl[i] += w_attr * (J[0, i] * jd[0] + J[1, i] * jd[1])
        for j in range(n):
            M[i, j] += w_attr * (J[0, i] * J[0, j] + J[1, i] * J[1, j])

    # energize the combined geometry with the combined energy
    e2 = 0.0
    proj = 0.0
    Mqd = np.zeros(n)
    for i in range(n):
        for j in range(n):
            Mqd[i] += M[i, j] * qd[j]
        e2 += qd[i] * Mqd[i]
        proj += qd[i] * (fh[i] - fl[i])
    F = fh.copy()
    if e2 > 1e-12:
        for i in range(n):
            F[i] -= Mqd[i] * proj / e2

    ex = p[0] - goal[0]
    ey = p[1] - goal[1]
    r = math.sqrt(ex * ex + ey * ey)
    s = consts[C_SMOOTH]
    if r > 1e-12:
        scale = consts[C_K_ATTR] * math.tanh(r / s) / r
    else:
        scale = consts[C_K_ATTR] / s
    gx = scale * ex
    gy = scale * ey
    for i in range(n):
        F[i] += gamma * (J[0, i] * gx + J[1, i] * gy)
        acc = 0.0
        for j in range(n):
            acc += damping[i, j] * qd[j]
        F[i] += acc
        F[i] = -F[i]

    if _cholesky_solve(M, F, qdd):
        return qdd, OK, -1
    eps = consts[C_EPS]
    for i in range(n):
        M[i, i] += eps
    if _cholesky_solve(M, F, qdd):
        return qdd, REGULARIZED, -1
    return qdd, METRIC_SINGULAR, -1


@njit(cache=True)
def fleet_sphere_states(Q, QD, dof, lengths, base, sph_link, sph_off, nsph):
    N = Q.shape[0]
    Lmax = sph_link.shape[1]
    C = np.zeros((N, Lmax, 2))
    V = np.zeros((N, Lmax, 2))
    for i in range(N):
        n = dof[i]
        L = nsph[i]
        c, v = sphere_states(Q[i, :n], QD[i, :n], lengths[i, :n], base[i],
                             sph_link[i, :L], sph_off[i, :L])
        C[i, :L] = c
        V[i, :L] = v
    return C, V


@njit(cache=True)
def fleet_accels(Q, QD, dof, lengths, base, lo, hi, sph_link, sph_off, sph_rad, nsph,
                 static_c, static_r, goals, gammas, damping, lam, lam_lim, consts):
    """Accelerations of every robot from one shared fleet state.

    Robot ``i`` sees all spheres of the other robots (robot order, then sphere
    order) followed by the static obstacles.
    """
    N = Q.shape[0]
    QDD = np.zeros(Q.shape)
    C, V = fleet_sphere_states(Q, QD, dof, lengths, base, sph_link, sph_off, nsph)
    total = 0
    for i in range(N):
        total += nsph[i]
    S = static_c.shape[0]
    status = np.zeros(N, dtype=np.int64)
    info = np.full(N, -1, dtype=np.int64)
    for i in range(N):
        O = total - nsph[i] + S
        oc = np.zeros((O, 2))
        ov = np.zeros((O, 2))
        orad = np.zeros(O)
        o = 0
        for p in range(N):
            if p == i:
                continue
            for l in range(nsph[p]):
                oc[o] = C[p, l]
                ov[o] = V[p, l]
                orad[o] = sph_rad[p, l]
                o += 1
        for s in range(S):
            oc[o] = static_c[s]
            orad[o] = static_r[s]
            o += 1
        n = dof[i]
        L = nsph[i]
        qdd, st, inf = policy_accel(Q[i, :n], QD[i, :n], lengths[i, :n], base[i], lo[i, :n], hi[i, :n],
                                    sph_link[i, :L], sph_off[i, :L], sph_rad[i, :L],
                                    oc, ov, orad, goals[i], gammas[i], damping[i, :n, :n],
                                    lam[i], lam_lim[i], consts)
        QDD[i, :n] = qdd
        status[i] = st
        info[i] = inf
    return QDD, status, info


@njit(cache=True)
def rollout(Q0, QD0, dof, lengths, base, lo, hi, sph_link, sph_off, sph_rad, nsph,
            static_c, static_r, goals, gammas, damping, lam, lam_lim, consts, K, dt):
    """Propagate the whole fleet ``K`` steps with the explicit second-order integrator."""
    N, nmax = Q0.shape
    Qs = np.zeros((K + 1, N, nmax))
    QDs = np.zeros((K + 1, N, nmax))
    QDDs = np.zeros((K, N, nmax))
    Qs[0] = Q0
    QDs[0] = QD0
    worst = OK
    for k in range(K):
        QDD, status, info = fleet_accels(Qs[k], QDs[k], dof, lengths, base, lo, hi, sph_link, sph_off,
                                         sph_rad, nsph, static_c, static_r, goals, gammas, damping,
                                         lam, lam_lim, consts)
        for i in range(N):
            if status[i] >= GRADIENT_SINGULAR:
                return Qs, QDs, QDDs, status[i], i, k, info[i]
            if status[i] > worst:
                worst = status[i]
        QDDs[k] = QDD
        Qs[k + 1] = Qs[k] + dt * QDs[k]
        QDs[k + 1] = QDs[k] + dt * QDD
    return Qs, QDs, QDDs, worst, -1, -1, -1


@njit(cache=True)
def fleet_end_effectors(Q, QD, dof, lengths, base):
    N = Q.shape[0]
    X = np.zeros((N, 2))
    V = np.zeros((N, 2))
    for i in range(N):
        n = dof[i]
        p, J, _ = point_kinematics(Q[i, :n], QD[i, :n], lengths[i, :n], base[i], n - 1, 1.0)
        X[i] = p
        for j in range(n):
            V[i, 0] += J[0, j] * QD[i, j]
            V[i, 1] += J[1, j] * QD[i, j]
    return X, V


@njit(cache=True)
def min_clearances(C, nsph, sph_rad, static_c, static_r):
    """Smallest inter-robot and robot-static sphere clearances (``inf`` when there are no pairs)."""
    N = C.shape[0]
    inter = np.inf
    stat = np.inf
    for i in range(N):
        for a in range(nsph[i]):
            for p in range(i + 1, N):
                for b in range(nsph[p]):
                    dx = C[i, a, 0] - C[p, b, 0]
                    dy = C[i, a, 1] - C[p, b, 1]
                    d = math.sqrt(dx * dx + dy * dy) - sph_rad[i, a] - sph_rad[p, b]
                    if d < inter:
                        inter = d
            for s in range(static_c.shape[0]):
                dx = C[i, a, 0] - static_c[s, 0]
                dy = C[i, a, 1] - static_c[s, 1]
                d = math.sqrt(dx * dx + dy * dy) - sph_rad[i, a] - static_r[s]
                if d < stat:
                    stat = d
    return inter, stat
