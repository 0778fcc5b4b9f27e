"""Vectorized numpy twin of ``_kernels_nb``.

Same signatures and status codes; used when numba is disabled and as an
independent cross-check of the compiled path.
"""
import numpy as np

from ._kernels_nb import (C_D_FLOOR, C_EPS, C_K_ATTR, C_LAM_M, C_SMOOTH, C_W_ATTR,
                          GRADIENT_SINGULAR, METRIC_SINGULAR, OK, REGULARIZED)


def _link_weights(n, lengths, links, offsets):
    """Row ``a`` holds the lever arm of each link for the point on link ``links[a]``."""
    k = np.arange(n)
    links = np.asarray(links)[:, None]
    W = np.where(k < links, lengths[:n], 0.0)
    return np.where(k == links, lengths[:n] * np.asarray(offsets, dtype=float)[:, None], W)


def _chain_many(q, qd, lengths, base, links, offsets):
    n = q.shape[0]
    phi = base[2] + np.cumsum(q)
    phid = np.cumsum(qd)
    c, s = np.cos(phi), np.sin(phi)
    W = _link_weights(n, lengths, links, offsets)
    P = base[:2] + np.stack([W @ c, W @ s], axis=-1)
    # column j collects every link k >= j
    Jx = np.cumsum((-W * s)[:, ::-1], axis=1)[:, ::-1]
    Jy = np.cumsum((W * c)[:, ::-1], axis=1)[:, ::-1]
    J = np.stack([Jx, Jy], axis=1)
    w2 = W * phid**2
    JD = -np.stack([w2 @ c, w2 @ s], axis=-1)
    return P, J, JD


def point_kinematics(q, qd, lengths, base, link, offset):
    P, J, JD = _chain_many(q, qd, lengths, base, [link], [offset])
    return P[0], J[0], JD[0]


def sphere_states(q, qd, lengths, base, sph_link, sph_off):
    P, J, _ = _chain_many(q, qd, lengths, base, sph_link, sph_off)
    return P, J @ qd


def _barrier(d, dd, lam, lam_m):
    m = lam_m / d
    h = np.where(dd < 0.0, -lam * dd**2 / d**2, 0.0)
    return m, m * h, -0.5 * lam_m * dd**2 / d**2


def policy_accel(q, qd, lengths, base, lo, hi, sph_link, sph_off, sph_rad,
                 obs_c, obs_v, obs_r, goal, gamma, damping, lam, lam_lim, consts):
    n = q.shape[0]
    lam_m = consts[C_LAM_M]
    d_floor = consts[C_D_FLOOR]

    m_lo, mh_lo, fl_lo = _barrier(np.maximum(q - lo, d_floor), qd, lam_lim, lam_m)
    m_hi, mh_hi, fl_hi = _barrier(np.maximum(hi - q, d_floor), -qd, lam_lim, lam_m)
    M = np.diag(m_lo + m_hi)
    fh = mh_lo - mh_hi
    fl = fl_lo - fl_hi

    if len(sph_link) and len(obs_r):
        P, J, JD = _chain_many(q, qd, lengths, base, sph_link, sph_off)
        va = J @ qd
        R = P[:, None, :] - obs_c[None, :, :]
        rho = np.linalg.norm(R, axis=-1)
        if np.any(rho < 1e-12):
            a, b = np.argwhere(rho < 1e-12)[0]
            return np.zeros(n), GRADIENT_SINGULAR, int(a * len(obs_r) + b)
        U = R / rho[..., None]
        VR = va[:, None, :] - obs_v[None, :, :]
        d = np.maximum(rho - sph_rad[:, None] - obs_r[None, :], d_floor)
        dd = np.einsum("abk,abk->ab", U, VR)
        jdd = np.einsum("abk,ak->ab", U, JD) + (np.einsum("abk,abk->ab", VR, VR) - dd**2) / rho
        m, mh, fle = _barrier(d, dd, lam, lam_m)
        G = np.einsum("abk,akj->abj", U, J)
        M = M + np.einsum("ab,abi,abj->ij", m, G, G)
        fh = fh + np.einsum("ab,abi->i", mh + m * jdd, G)
        fl = fl + np.einsum("ab,abi->i", fle + m * jdd, G)

    w_attr = consts[C_W_ATTR]
    pe, Je, jde = point_kinematics(q, qd, lengths, base, n - 1, 1.0)
    M = M + w_attr * Je.T @ Je
    fh = fh + w_attr * Je.T @ jde
    fl = fl + w_attr * Je.T @ jde

    Mqd = M @ qd
    e2 = qd @ Mqd
    F = fh - Mqd * (qd @ (fh - fl)) / e2 if e2 > 1e-12 else fh.copy()

    e = pe - goal
    r = np.linalg.norm(e)
    s = consts[C_SMOOTH]
    scale = consts[C_K_ATTR] * (np.tanh(r / s) / r if r > 1e-12 else 1.0 / s)
    F = F + gamma * Je.T @ (scale * e) + damping @ qd

    for status, reg in ((OK, 0.0), (REGULARIZED, consts[C_EPS])):
        try:
            Lc = np.linalg.cholesky(M + reg * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        return -np.linalg.solve(Lc.T, np.linalg.solve(Lc, F)), status, -1
    return np.zeros(n), METRIC_SINGULAR, -1


def fleet_sphere_states(Q, QD, dof, lengths, base, sph_link, sph_off, nsph):
    N, Lmax = sph_link.shape
    C = np.zeros((N, Lmax, 2))
    V = np.zeros((N, Lmax, 2))
    for i in range(N):
        n, L = dof[i], nsph[i]
        C[i, :L], V[i, :L] = sphere_states(Q[i, :n], QD[i, :n], lengths[i, :n], base[i],
                                           sph_link[i, :L], sph_off[i, :L])
    return C, V


def fleet_accels(Q, QD, dof, lengths, base, lo, hi, sph_link, sph_off, sph_rad, nsph,
                 static_c, static_r, goals, gammas, damping, lam, lam_lim, consts):
    N = Q.shape[0]
    QDD = np.zeros(Q.shape)
    C, V = fleet_sphere_states(Q, QD, dof, lengths, base, sph_link, sph_off, nsph)
    status = np.zeros(N, dtype=np.int64)
    info = np.full(N, -1, dtype=np.int64)
    for i in range(N):
        peers = [p for p in range(N) if p != i]
        oc = np.concatenate([C[p, :nsph[p]] for p in peers] + [static_c.reshape(-1, 2)])
        ov = np.concatenate([V[p, :nsph[p]] for p in peers] + [np.zeros((len(static_r), 2))])
        orad = np.concatenate([sph_rad[p, :nsph[p]] for p in peers] + [static_r.reshape(-1)])
        n, L = dof[i], nsph[i]
        QDD[i, :n], status[i], info[i] = policy_accel(
            Q[i, :n], QD[i, :n], lengths[i, :n], base[i], lo[i, :n], hi[i, :n],
            sph_link[i, :L], sph_off[i, :L], sph_rad[i, :L], oc, ov, orad,
            goals[i], gammas[i], damping[i, :n, :n], lam[i], lam_lim[i], consts)
    return QDD, status, info


def rollout(Q0, QD0, dof, lengths, base, lo, hi, sph_link, sph_off, sph_rad, nsph,
            static_c, static_r, goals, gammas, damping, lam, lam_lim, consts, K, dt):
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
        bad = np.flatnonzero(status >= GRADIENT_SINGULAR)
        if bad.size:
            i = int(bad[0])
            return Qs, QDs, QDDs, int(status[i]), i, k, int(info[i])
        worst = max(worst, int(status.max()))
        QDDs[k] = QDD
        Qs[k + 1] = Qs[k] + dt * QDs[k]
        QDs[k + 1] = QDs[k] + dt * QDD
    return Qs, QDs, QDDs, worst, -1, -1, -1


def fleet_end_effectors(Q, QD, dof, lengths, base):
    N = Q.shape[0]
    X = np.zeros((N, 2))
    V = np.zeros((N, 2))
    for i in range(N):
        n = dof[i]
        p, J, _ = point_kinematics(Q[i, :n], QD[i, :n], lengths[i, :n], base[i], n - 1, 1.0)
        X[i] = p
        V[i] = J @ QD[i, :n]
    return X, V


def min_clearances(C, nsph, sph_rad, static_c, static_r):
    N = C.shape[0]
    inter = stat = np.inf
    for i in range(N):
        ci, ri = C[i, : nsph[i]], sph_rad[i, : nsph[i]]
        for p in range(i + 1, N):
            cp, rp = C[p, : nsph[p]], sph_rad[p, : nsph[p]]
            d = np.linalg.norm(ci[:, None] - cp[None], axis=-1) - ri[:, None] - rp[None]
            if d.size:
                inter = min(inter, float(d.min()))
        if static_c.shape[0] and len(ri):
            d = np.linalg.norm(ci[:, None] - static_c[None], axis=-1) - ri[:, None] - static_r[None]
            stat = min(stat, float(d.min()))
    return inter, stat
