"""Pure-Python reference implementation of the fixed-step simulation loop.

The compiled twin in _simcore.pyx follows this algorithm statement exactly;
keep the two in sync.  The mechanical state vector is

    x = [zs_rate, pitch_rate, roll_rate, zu_rate(4), z_s, pitch, roll, z_u(4)]

integrated by RK4 with the actuator torque held over each step, while the
controller (PID + tracking integrators + discretized LTI part) runs as a
discrete system at the sample rate.
"""

from __future__ import annotations

import math

import numpy as np

BLOWUP_LIMIT = 1e6


class SimBlowUp(RuntimeError):
    def __init__(self, t, worst):
        super().__init__(f"state magnitude {worst:.3g} exceeded {BLOWUP_LIMIT:g} "
                         f"at t={t:.3f}s")
        self.t = t


def run_loop(p, road, torque, ctrl, n_steps, dt, record):
    """Advance the closed loop n_steps; fills the arrays in `record`.

    p:      dict of mechanical parameters (see sim._pack_params)
    road:   (zr, vzr) arrays of shape (n_steps+1, 3, 4) or None
    torque: (Tp, Tr) arrays of shape (n_steps+1, 3) or None
    ctrl:   dict of controller data (see sim._pack_controller) or None
    record: dict of output arrays to fill (outputs, torques, forces,
            force_cmds, p_battery, states)
    """
    G = p["G"]
    k_c = p["k_corner"]
    c_c = p["c_corner"]
    k_t, c_t = p["k_t"], p["c_t"]
    M_s, I_p, I_r, m_u = p["M_s"], p["I_pitch"], p["I_roll"], p["m_u"]
    use_nl = p["use_nl"]
    dvx_f, dfx_f = p["dmap_f"]
    dvx_r, dfx_r = p["dmap_r"]
    lever0 = p["l_beta"]
    kap1, kap2 = p["beta_kappa1"], p["beta_kappa2"]
    T_peak = p["torque_peak"]
    act_decay = math.exp(-dt / p["actuator_tau"])
    eta, eta_r, k_loss = p["eta"], p["eta_regen"], p["k_loss"]

    zr_arr, vzr_arr = road if road is not None else (None, None)
    tp_arr, tr_arr = torque if torque is not None else (None, None)

    active = ctrl is not None
    if active:
        has_pid = ctrl["has_pid"]
        has_K = ctrl["has_K"]
        u_scale = ctrl["u_scale"]
        if has_K:
            has_aw = ctrl["aw"]
            Ad, Cd = ctrl["Ad"], ctrl["Cd"]
            Bdy = ctrl["Bdy"]
            if has_aw:
                Bdu = ctrl["Bdu"]
            else:
                Ddy = ctrl["Ddy"]
            u_limit = ctrl["u_limit"]
            xK = np.zeros(Ad.shape[0])
        wz = ctrl["m_zero"]
        m_int = np.zeros(4)
        e_prev = np.zeros(4)
        if has_pid:
            kp_p, ki_p, kd_p = ctrl["pid_pitch"]
            kp_r, ki_r, kd_r = ctrl["pid_roll"]
            pid_limit = ctrl["pid_limit"]
            wd = ctrl["deriv_pole"]
            dfilt_decay = math.exp(-wd * dt)
            i_p = i_r = 0.0
            df_p = df_r = 0.0
            ep_prev = er_prev = 0.0

    x = np.zeros(14)
    T_act = np.zeros(4)

    out = record["outputs"]
    rec_t = record["torques"]
    rec_f = record["forces"]
    rec_fc = record["force_cmds"]
    rec_p = record["p_battery"]
    rec_x = record["states"]

    def damper_force_nl(rates):
        F = np.empty(4)
        for i in range(4):
            v = rates[i]
            vx, fx = (dvx_f, dfx_f) if i < 2 else (dvx_r, dfx_r)
            if v > vx[-1]:
                F[i] = fx[-1] + (fx[-1] - fx[-2]) / (vx[-1] - vx[-2]) * (v - vx[-1])
            elif v < vx[0]:
                F[i] = fx[0] + (fx[1] - fx[0]) / (vx[1] - vx[0]) * (v - vx[0])
            else:
                F[i] = np.interp(v, vx, fx)
        return F

    def deriv(xs, zr, vzr, Tp, Tr, F_rc):
        zc = G @ xs[7:10]
        vc = G @ xs[0:3]
        dls = xs[10:14] - zc
        dls_rate = xs[3:7] - vc
        dlt = zr - xs[10:14]
        dlt_rate = vzr - xs[3:7]
        Fd = damper_force_nl(dls_rate) if use_nl else c_c * dls_rate
        Fs = k_c * dls + Fd + F_rc
        Ft = k_t * dlt + c_t * dlt_rate
        U = G.T @ Fs
        dx = np.empty(14)
        dx[0] = U[0] / M_s
        dx[1] = (U[1] + Tp) / I_p
        dx[2] = (U[2] + Tr) / I_r
        dx[3:7] = (Ft - Fs) / m_u
        dx[7:10] = xs[0:3]
        dx[10:14] = xs[3:7]
        return dx

    zero4 = np.zeros(4)
    for k in range(n_steps):
        if zr_arr is not None:
            zr0, zr1, zr2 = zr_arr[k, 0], zr_arr[k, 1], zr_arr[k, 2]
            vzr0, vzr1, vzr2 = vzr_arr[k, 0], vzr_arr[k, 1], vzr_arr[k, 2]
        else:
            zr0 = zr1 = zr2 = zero4
            vzr0 = vzr1 = vzr2 = zero4
        if tp_arr is not None:
            tp0, tp1, tp2 = tp_arr[k, 0], tp_arr[k, 1], tp_arr[k, 2]
            tr0, tr1, tr2 = tr_arr[k, 0], tr_arr[k, 1], tr_arr[k, 2]
        else:
            tp0 = tp1 = tp2 = 0.0
            tr0 = tr1 = tr2 = 0.0

        # measurements at the sample instant
        zc = G @ x[7:10]
        vc = G @ x[0:3]
        dls = x[10:14] - zc
        dls_rate = x[3:7] - vc
        lever = lever0 * (1.0 + kap1 * dls + kap2 * dls * dls)
        F_rc = T_act / lever

        acc_now = deriv(x, zr0, vzr0, tp0, tr0, F_rc)

        if active:
            if has_pid:
                e_p = math.degrees(x[8])
                e_r = math.degrees(x[9])
                df_p = e_p + (df_p - e_p) * dfilt_decay
                df_r = e_r + (df_r - e_r) * dfilt_decay
                d_p = wd * (e_p - df_p)
                d_r = wd * (e_r - df_r)
                i_p += ki_p * 0.5 * (e_p + ep_prev) * dt
                i_r += ki_r * 0.5 * (e_r + er_prev) * dt
                i_p = min(max(i_p, -pid_limit), pid_limit)
                i_r = min(max(i_r, -pid_limit), pid_limit)
                ep_prev, er_prev = e_p, e_r
                u_p = kp_p * e_p + i_p + kd_p * d_p
                u_r = kp_r * e_r + i_r + kd_r * d_r
                F_L = 0.5 * np.array([u_p + u_r, u_p - u_r, -u_p + u_r, -u_p - u_r])
            else:
                F_L = zero4
            e_trk = (F_L - F_rc) / u_scale
            m_int += 0.5 * dt * (e_trk + e_prev)
            np.clip(m_int, -10.0, 10.0, out=m_int)
            e_prev = e_trk.copy()
            y_I = m_int + e_trk / wz
            if has_K:
                yK = np.concatenate([y_I, dls, acc_now[0:3]])
                if has_aw:
                    u_cmd = Cd @ xK + F_L / u_scale
                    u_sat = np.clip(u_cmd, -u_limit, u_limit)
                    xK = Ad @ xK + Bdy @ yK + Bdu @ u_sat
                else:
                    u_cmd = Cd @ xK + Ddy @ yK + F_L / u_scale
                    u_sat = np.clip(u_cmd, -u_limit, u_limit)
                    xK = Ad @ xK + Bdy @ yK
                F_cmd = u_scale * u_sat
            else:
                F_cmd = F_L
            T_ref = F_cmd * lever
        else:
            F_cmd = zero4
            T_ref = zero4

        # record current instant
        out[k, 0:3] = acc_now[0:3]
        out[k, 3:7] = dls
        out[k, 7:11] = zr0 - x[10:14]
        rec_t[k] = T_act
        rec_f[k] = F_rc
        rec_fc[k] = F_cmd
        omega = dls_rate / lever
        p_mech = T_act * omega
        rec_p[k] = float(np.sum(np.maximum(p_mech / eta, eta_r * p_mech)
                                + k_loss * T_act * T_act))
        rec_x[k] = x

        # actuator holds over the RK4 step, then tracks its reference
        k1 = acc_now
        k2 = deriv(x + 0.5 * dt * k1, zr1, vzr1, tp1, tr1, F_rc)
        k3 = deriv(x + 0.5 * dt * k2, zr1, vzr1, tp1, tr1, F_rc)
        k4 = deriv(x + dt * k3, zr2, vzr2, tp2, tr2, F_rc)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        if active:
            T_act = T_ref + (T_act - T_ref) * act_decay
            np.clip(T_act, -T_peak, T_peak, out=T_act)

        worst = float(np.max(np.abs(x)))
        if not np.isfinite(worst) or worst > BLOWUP_LIMIT:
            raise SimBlowUp((k + 1) * dt, worst)
    return x
