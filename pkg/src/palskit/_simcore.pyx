# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of palskit._simloop.run_loop; keep the algorithms in sync."""

import numpy as np

from libc.math cimport exp, fabs, isfinite

from ._simloop import SimBlowUp

BLOWUP_LIMIT = 1e6


cdef inline double _interp_damper(double v, double[::1] vx, double[::1] fx) noexcept nogil:
    cdef int n = vx.shape[0]
    cdef int i
    if v > vx[n - 1]:
        return fx[n - 1] + (fx[n - 1] - fx[n - 2]) / (vx[n - 1] - vx[n - 2]) * (v - vx[n - 1])
    if v < vx[0]:
        return fx[0] + (fx[1] - fx[0]) / (vx[1] - vx[0]) * (v - vx[0])
    for i in range(1, n):
        if v <= vx[i]:
            return fx[i - 1] + (fx[i] - fx[i - 1]) / (vx[i] - vx[i - 1]) * (v - vx[i - 1])
    return fx[n - 1]


cdef struct MechParams:
    double M_s
    double I_p
    double I_r
    double m_u
    double k_t
    double c_t
    double k_c[4]
    double c_c[4]
    double G[4][3]
    int use_nl


cdef void _deriv(MechParams* p, double[::1] dvx_f, double[::1] dfx_f,
                 double[::1] dvx_r, double[::1] dfx_r,
                 double* xs, double* zr, double* vzr, double Tp, double Tr,
                 double* F_rc, double* dx) noexcept nogil:
    cdef double zc, vc, dls, dls_rate, dlt, dlt_rate, Fd, Ft
    cdef double Fs[4]
    cdef double U0 = 0.0
    cdef double U1 = 0.0
    cdef double U2 = 0.0
    cdef int i
    for i in range(4):
        zc = p.G[i][0] * xs[7] + p.G[i][1] * xs[8] + p.G[i][2] * xs[9]
        vc = p.G[i][0] * xs[0] + p.G[i][1] * xs[1] + p.G[i][2] * xs[2]
        dls = xs[10 + i] - zc
        dls_rate = xs[3 + i] - vc
        dlt = zr[i] - xs[10 + i]
        dlt_rate = vzr[i] - xs[3 + i]
        if p.use_nl:
            if i < 2:
                Fd = _interp_damper(dls_rate, dvx_f, dfx_f)
            else:
                Fd = _interp_damper(dls_rate, dvx_r, dfx_r)
        else:
            Fd = p.c_c[i] * dls_rate
        Fs[i] = p.k_c[i] * dls + Fd + F_rc[i]
        Ft = p.k_t * dlt + p.c_t * dlt_rate
        dx[3 + i] = (Ft - Fs[i]) / p.m_u
        U0 += p.G[i][0] * Fs[i]
        U1 += p.G[i][1] * Fs[i]
        U2 += p.G[i][2] * Fs[i]
    dx[0] = U0 / p.M_s
    dx[1] = (U1 + Tp) / p.I_p
    dx[2] = (U2 + Tr) / p.I_r
    for i in range(3):
        dx[7 + i] = xs[i]
    for i in range(4):
        dx[10 + i] = xs[3 + i]


def run_loop(p, road, torque, ctrl, int n_steps, double dt, record):
    cdef MechParams mp
    mp.M_s = p["M_s"]; mp.I_p = p["I_pitch"]; mp.I_r = p["I_roll"]
    mp.m_u = p["m_u"]; mp.k_t = p["k_t"]; mp.c_t = p["c_t"]
    mp.use_nl = 1 if p["use_nl"] else 0
    kc = np.ascontiguousarray(p["k_corner"], dtype=np.float64)
    cc = np.ascontiguousarray(p["c_corner"], dtype=np.float64)
    Gm = np.ascontiguousarray(p["G"], dtype=np.float64)
    cdef int i, j
    for i in range(4):
        mp.k_c[i] = kc[i]
        mp.c_c[i] = cc[i]
        for j in range(3):
            mp.G[i][j] = Gm[i, j]
    cdef double[::1] dvx_f = np.ascontiguousarray(p["dmap_f"][0], dtype=np.float64)
    cdef double[::1] dfx_f = np.ascontiguousarray(p["dmap_f"][1], dtype=np.float64)
    cdef double[::1] dvx_r = np.ascontiguousarray(p["dmap_r"][0], dtype=np.float64)
    cdef double[::1] dfx_r = np.ascontiguousarray(p["dmap_r"][1], dtype=np.float64)

    cdef double lever0 = p["l_beta"]
    cdef double kap1 = p["beta_kappa1"]
    cdef double kap2 = p["beta_kappa2"]
    cdef double T_peak = p["torque_peak"]
    cdef double act_decay = exp(-dt / p["actuator_tau"])
    cdef double eta = p["eta"]
    cdef double eta_r = p["eta_regen"]
    cdef double k_loss = p["k_loss"]

    cdef bint has_road = road is not None
    cdef double[:, :, ::1] zr_arr = None
    cdef double[:, :, ::1] vzr_arr = None
    if has_road:
        zr_arr = np.ascontiguousarray(road[0], dtype=np.float64)
        vzr_arr = np.ascontiguousarray(road[1], dtype=np.float64)
    cdef bint has_torque = torque is not None
    cdef double[:, ::1] tp_arr = None
    cdef double[:, ::1] tr_arr = None
    if has_torque:
        tp_arr = np.ascontiguousarray(torque[0], dtype=np.float64)
        tr_arr = np.ascontiguousarray(torque[1], dtype=np.float64)

    cdef bint active = ctrl is not None
    cdef bint has_pid = False
    cdef bint has_K = False
    cdef double u_scale = 1.0
    cdef double wz = 0.0, wd = 0.0, dfilt_decay = 0.0, pid_limit = 0.0
    cdef double kp_p = 0, ki_p = 0, kd_p = 0, kp_r = 0, ki_r = 0, kd_r = 0
    cdef double[:, ::1] Ad = None
    cdef double[:, ::1] Bdy = None
    cdef double[:, ::1] Bdu = None
    cdef double[:, ::1] Cd = None
    cdef double[:, ::1] Ddy = None
    cdef bint has_aw = False
    cdef double u_limit = 0.0
    cdef int nK = 0
    cdef double[::1] xK = None
    cdef double[::1] xK_next = None
    if active:
        has_pid = ctrl["has_pid"]
        has_K = ctrl["has_K"]
        u_scale = ctrl["u_scale"]
        wz = ctrl["m_zero"]
        if has_pid:
            kp_p, ki_p, kd_p = ctrl["pid_pitch"]
            kp_r, ki_r, kd_r = ctrl["pid_roll"]
            pid_limit = ctrl["pid_limit"]
            wd = ctrl["deriv_pole"]
            dfilt_decay = exp(-wd * dt)
        if has_K:
            has_aw = ctrl["aw"]
            Ad = np.ascontiguousarray(ctrl["Ad"], dtype=np.float64)
            Bdy = np.ascontiguousarray(ctrl["Bdy"], dtype=np.float64)
            Cd = np.ascontiguousarray(ctrl["Cd"], dtype=np.float64)
            if has_aw:
                Bdu = np.ascontiguousarray(ctrl["Bdu"], dtype=np.float64)
            else:
                Ddy = np.ascontiguousarray(ctrl["Ddy"], dtype=np.float64)
            u_limit = ctrl["u_limit"]
            nK = Ad.shape[0]
            xK = np.zeros(nK)
            xK_next = np.zeros(nK)

    cdef double[:, ::1] out = record["outputs"]
    cdef double[:, ::1] rec_t = record["torques"]
    cdef double[:, ::1] rec_f = record["forces"]
    cdef double[:, ::1] rec_fc = record["force_cmds"]
    cdef double[::1] rec_p = record["p_battery"]
    cdef double[:, ::1] rec_x = record["states"]

    cdef double x[14]
    cdef double xs[14]
    cdef double T_act[4]
    cdef double F_rc[4]
    cdef double F_L[4]
    cdef double F_cmd[4]
    cdef double T_ref[4]
    cdef double lever[4]
    cdef double dls[4]
    cdef double dls_rate[4]
    cdef double e_trk[4]
    cdef double e_prev[4]
    cdef double m_int[4]
    cdef double u_base[4]
    cdef double u_sat[4]
    cdef double yK[11]
    cdef double zr0[4]
    cdef double zr1[4]
    cdef double zr2[4]
    cdef double vzr0[4]
    cdef double vzr1[4]
    cdef double vzr2[4]
    cdef double k1[14]
    cdef double k2[14]
    cdef double k3[14]
    cdef double k4[14]
    cdef double acc_now[14]
    cdef double tp0 = 0, tp1 = 0, tp2 = 0, tr0 = 0, tr1 = 0, tr2 = 0
    cdef double i_p = 0, i_r = 0, df_p = 0, df_r = 0, ep_prev = 0, er_prev = 0
    cdef double e_p, e_r, d_p, d_r, u_p, u_r, zc, vc, u_Hi, acc, worst
    cdef double p_sum, p_mech, omega
    cdef int k, c
    cdef double deg = 180.0 / 3.141592653589793

    for i in range(14):
        x[i] = 0.0
    for i in range(4):
        T_act[i] = 0.0
        e_prev[i] = 0.0
        m_int[i] = 0.0

    for k in range(n_steps):
        if has_road:
            for c in range(4):
                zr0[c] = zr_arr[k, 0, c]; zr1[c] = zr_arr[k, 1, c]; zr2[c] = zr_arr[k, 2, c]
                vzr0[c] = vzr_arr[k, 0, c]; vzr1[c] = vzr_arr[k, 1, c]; vzr2[c] = vzr_arr[k, 2, c]
        else:
            for c in range(4):
                zr0[c] = 0.0; zr1[c] = 0.0; zr2[c] = 0.0
                vzr0[c] = 0.0; vzr1[c] = 0.0; vzr2[c] = 0.0
        if has_torque:
            tp0 = tp_arr[k, 0]; tp1 = tp_arr[k, 1]; tp2 = tp_arr[k, 2]
            tr0 = tr_arr[k, 0]; tr1 = tr_arr[k, 1]; tr2 = tr_arr[k, 2]
        else:
            tp0 = tp1 = tp2 = 0.0
            tr0 = tr1 = tr2 = 0.0

        for c in range(4):
            zc = mp.G[c][0] * x[7] + mp.G[c][1] * x[8] + mp.G[c][2] * x[9]
            vc = mp.G[c][0] * x[0] + mp.G[c][1] * x[1] + mp.G[c][2] * x[2]
            dls[c] = x[10 + c] - zc
            dls_rate[c] = x[3 + c] - vc
            lever[c] = lever0 * (1.0 + kap1 * dls[c] + kap2 * dls[c] * dls[c])
            F_rc[c] = T_act[c] / lever[c]

        _deriv(&mp, dvx_f, dfx_f, dvx_r, dfx_r, x, zr0, vzr0, tp0, tr0, F_rc, acc_now)

        if active:
            if has_pid:
                e_p = deg * x[8]
                e_r = deg * x[9]
                df_p = e_p + (df_p - e_p) * dfilt_decay
                df_r = e_r + (df_r - e_r) * dfilt_decay
                d_p = wd * (e_p - df_p)
                d_r = wd * (e_r - df_r)
                i_p += ki_p * 0.5 * (e_p + ep_prev) * dt
                i_r += ki_r * 0.5 * (e_r + er_prev) * dt
                if i_p > pid_limit: i_p = pid_limit
                if i_p < -pid_limit: i_p = -pid_limit
                if i_r > pid_limit: i_r = pid_limit
                if i_r < -pid_limit: i_r = -pid_limit
                ep_prev = e_p; er_prev = e_r
                u_p = kp_p * e_p + i_p + kd_p * d_p
                u_r = kp_r * e_r + i_r + kd_r * d_r
                F_L[0] = 0.5 * (u_p + u_r); F_L[1] = 0.5 * (u_p - u_r)
                F_L[2] = 0.5 * (-u_p + u_r); F_L[3] = 0.5 * (-u_p - u_r)
            else:
                for c in range(4):
                    F_L[c] = 0.0
            for c in range(4):
                e_trk[c] = (F_L[c] - F_rc[c]) / u_scale
                m_int[c] += 0.5 * dt * (e_trk[c] + e_prev[c])
                if m_int[c] > 10.0: m_int[c] = 10.0
                if m_int[c] < -10.0: m_int[c] = -10.0
                e_prev[c] = e_trk[c]
                yK[c] = m_int[c] + e_trk[c] / wz
                yK[4 + c] = dls[c]
            yK[8] = acc_now[0]; yK[9] = acc_now[1]; yK[10] = acc_now[2]
            if has_K:
                for c in range(4):
                    u_Hi = 0.0
                    for j in range(nK):
                        u_Hi += Cd[c, j] * xK[j]
                    if not has_aw:
                        for j in range(11):
                            u_Hi += Ddy[c, j] * yK[j]
                    u_base[c] = F_L[c] / u_scale + u_Hi
                    u_sat[c] = u_base[c]
                    if u_sat[c] > u_limit: u_sat[c] = u_limit
                    if u_sat[c] < -u_limit: u_sat[c] = -u_limit
                    F_cmd[c] = u_scale * u_sat[c]
                for i in range(nK):
                    acc = 0.0
                    for j in range(nK):
                        acc += Ad[i, j] * xK[j]
                    for j in range(11):
                        acc += Bdy[i, j] * yK[j]
                    if has_aw:
                        for c in range(4):
                            acc += Bdu[i, c] * u_sat[c]
                    xK_next[i] = acc
                for i in range(nK):
                    xK[i] = xK_next[i]
            else:
                for c in range(4):
                    F_cmd[c] = F_L[c]
            for c in range(4):
                T_ref[c] = F_cmd[c] * lever[c]
        else:
            for c in range(4):
                F_cmd[c] = 0.0
                T_ref[c] = 0.0

        out[k, 0] = acc_now[0]; out[k, 1] = acc_now[1]; out[k, 2] = acc_now[2]
        p_sum = 0.0
        for c in range(4):
            out[k, 3 + c] = dls[c]
            out[k, 7 + c] = zr0[c] - x[10 + c]
            rec_t[k, c] = T_act[c]
            rec_f[k, c] = F_rc[c]
            rec_fc[k, c] = F_cmd[c]
            omega = dls_rate[c] / lever[c]
            p_mech = T_act[c] * omega
            if p_mech / eta > eta_r * p_mech:
                p_sum += p_mech / eta
            else:
                p_sum += eta_r * p_mech
            p_sum += k_loss * T_act[c] * T_act[c]
        rec_p[k] = p_sum
        for i in range(14):
            rec_x[k, i] = x[i]

        for i in range(14):
            k1[i] = acc_now[i]
            xs[i] = x[i] + 0.5 * dt * k1[i]
        _deriv(&mp, dvx_f, dfx_f, dvx_r, dfx_r, xs, zr1, vzr1, tp1, tr1, F_rc, k2)
        for i in range(14):
            xs[i] = x[i] + 0.5 * dt * k2[i]
        _deriv(&mp, dvx_f, dfx_f, dvx_r, dfx_r, xs, zr1, vzr1, tp1, tr1, F_rc, k3)
        for i in range(14):
            xs[i] = x[i] + dt * k3[i]
        _deriv(&mp, dvx_f, dfx_f, dvx_r, dfx_r, xs, zr2, vzr2, tp2, tr2, F_rc, k4)
        for i in range(14):
            x[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

        if active:
            for c in range(4):
                T_act[c] = T_ref[c] + (T_act[c] - T_ref[c]) * act_decay
                if T_act[c] > T_peak: T_act[c] = T_peak
                if T_act[c] < -T_peak: T_act[c] = -T_peak

        worst = 0.0
        p_sum = 0.0
        for i in range(14):
            p_sum += x[i]
            if fabs(x[i]) > worst:
                worst = fabs(x[i])
        if not isfinite(p_sum) or worst > BLOWUP_LIMIT:
            raise SimBlowUp((k + 1) * dt, worst)

    return np.asarray([x[i] for i in range(14)])
