"""Continuous-time state-space and frequency-domain numerics.

Everything else in the toolkit is built on the containers and operations
here: labelled state-space models, series/LFT interconnections, frequency
responses, the H-infinity norm, the algebraic Riccati solver and balanced
truncation.  All containers are immutable after construction and every
operation is pure, so concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "NumericsError",
    "StateSpaceModel",
    "FrequencyResponse",
    "BlockStructure",
    "ss_from_tf",
    "static_gain",
    "interconnect_series",
    "interconnect_parallel",
    "lft_lower",
    "lft_upper",
    "freq_response",
    "hinf_norm",
    "solve_care",
    "balanced_truncate",
]

# Condition-number threshold above which a feedback feed-through loop is
# treated as an algebraic singularity rather than solved through.
ALGEBRAIC_LOOP_COND = 1e12


class NumericsError(RuntimeError):
    """A numerical operation failed: singularity, instability or no solution."""


def _matrix(value, rows=None, cols=None, name="matrix"):
    arr = np.array(value, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"{name} has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name} has {arr.shape[1]} columns, expected {cols}")
    return arr


def _default_labels(prefix, n):
    return tuple(f"{prefix}{i + 1}" for i in range(n))


def _check_labels(labels, n, kind):
    labels = tuple(labels)
    if len(labels) != n:
        raise ValueError(f"{kind} labels: got {len(labels)}, expected {n}")
    if len(set(labels)) != len(labels):
        raise ValueError(f"{kind} labels are not unique")
    return labels


@dataclass(frozen=True)
class StateSpaceModel:
    """Continuous-time LTI model dx = Ax + Bu, y = Cx + Du with named channels."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    input_labels: tuple = ()
    output_labels: tuple = ()
    state_labels: tuple = ()

    def __post_init__(self):
        A = _matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise ValueError(f"A must be square, got {A.shape}")
        B = _matrix(self.B, rows=n, name="B")
        m = B.shape[1]
        C = _matrix(self.C, cols=n, name="C")
        p = C.shape[0]
        D = _matrix(self.D, rows=p, cols=m, name="D")
        labels_in = self.input_labels or _default_labels("u", m)
        labels_out = self.output_labels or _default_labels("y", p)
        labels_x = self.state_labels or _default_labels("x", n)
        for arr in (A, B, C, D):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "input_labels", _check_labels(labels_in, m, "input"))
        object.__setattr__(self, "output_labels", _check_labels(labels_out, p, "output"))
        object.__setattr__(self, "state_labels", _check_labels(labels_x, n, "state"))

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]

    def relabel(self, inputs=None, outputs=None, states=None):
        return StateSpaceModel(
            self.A, self.B, self.C, self.D,
            tuple(inputs) if inputs is not None else self.input_labels,
            tuple(outputs) if outputs is not None else self.output_labels,
            tuple(states) if states is not None else self.state_labels,
        )

    def subsystem(self, outputs=None, inputs=None):
        """Model restricted to the given output/input channel indices."""
        out_idx = np.arange(self.n_outputs) if outputs is None else np.asarray(outputs, int)
        in_idx = np.arange(self.n_inputs) if inputs is None else np.asarray(inputs, int)
        return StateSpaceModel(
            self.A,
            self.B[:, in_idx],
            self.C[out_idx, :],
            self.D[np.ix_(out_idx, in_idx)],
            tuple(self.input_labels[i] for i in in_idx),
            tuple(self.output_labels[i] for i in out_idx),
            self.state_labels,
        )

    def is_stable(self, margin=0.0):
        if self.n_states == 0:
            return True
        return float(np.max(np.linalg.eigvals(self.A).real)) < -margin


def static_gain(D, input_labels=(), output_labels=()):
    """Zero-state model realizing a constant gain matrix."""
    D = _matrix(D, name="D")
    p, m = D.shape
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D,
                           input_labels, output_labels)


def ss_from_tf(num, den):
    """Controllable-canonical SISO realization of num(s)/den(s).

    Coefficients are highest power first; num may not be longer than den
    (proper transfer functions only).
    """
    num = np.atleast_1d(np.asarray(num, float))
    den = np.atleast_1d(np.asarray(den, float))
    if den[0] == 0.0:
        raise ValueError("leading denominator coefficient must be nonzero")
    if len(num) > len(den):
        raise ValueError("improper transfer function")
    num = num / den[0]
    den = den / den[0]
    n = len(den) - 1
    if n == 0:
        return static_gain([[num[0]]])
    num = np.concatenate([np.zeros(n + 1 - len(num)), num])
    d = num[0]
    # strictly-proper remainder after pulling out the feed-through
    rem = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    if n > 1:
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem.reshape(1, n)
    D = np.array([[d]])
    return StateSpaceModel(A, B, C, D)


@dataclass(frozen=True)
class FrequencyResponse:
    """Sampled frequency response: one complex p-by-m matrix per grid point."""

    omega: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float).ravel()
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 3 or H.shape[0] != omega.size:
            raise ValueError("H must have shape (n_freq, p, m) matching omega")
        if omega.size and (np.any(omega <= 0) or np.any(np.diff(omega) <= 0)):
            raise ValueError("omega must be strictly increasing and positive")
        omega.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "H", H)

    @property
    def n_freq(self):
        return self.omega.size


_BLOCK_KINDS = ("scalar-real", "scalar-complex", "full-complex")


@dataclass(frozen=True)
class BlockStructure:
    """Ordered uncertainty block description: (kind, rows, cols, name) tuples.

    Scalar kinds with rows == cols > 1 denote repeated scalar blocks
    (delta times the identity).
    """

    blocks: tuple = ()

    def __post_init__(self):
        checked = []
        for kind, rows, cols, name in self.blocks:
            if kind not in _BLOCK_KINDS:
                raise ValueError(f"unknown block kind {kind!r}")
            if rows <= 0 or cols <= 0:
                raise ValueError("block dimensions must be positive")
            if kind.startswith("scalar") and rows != cols:
                raise ValueError("scalar blocks must be square (repetition count)")
            checked.append((kind, int(rows), int(cols), str(name)))
        object.__setattr__(self, "blocks", tuple(checked))

    @property
    def total_rows(self):
        return sum(b[1] for b in self.blocks)

    @property
    def total_cols(self):
        return sum(b[2] for b in self.blocks)

    def delta_matrix(self, deltas):
        """Expand per-block scalars into the block-diagonal perturbation."""
        deltas = np.asarray(deltas, float).ravel()
        if deltas.size != len(self.blocks):
            raise ValueError("one delta per block required")
        parts = []
        for (kind, rows, _, _), d in zip(self.blocks, deltas):
            if not kind.startswith("scalar"):
                raise ValueError("delta_matrix only supports scalar blocks")
            parts.append(d * np.eye(rows))
        if not parts:
            return np.zeros((0, 0))
        return linalg.block_diag(*parts)


def interconnect_series(G1: StateSpaceModel, G2: StateSpaceModel) -> StateSpaceModel:
    """Cascade G2*G1 (output of G1 drives input of G2)."""
    if G1.n_outputs != G2.n_inputs:
        raise ValueError(
            f"series mismatch: G1 has {G1.n_outputs} outputs, G2 expects {G2.n_inputs}")
    n1, n2 = G1.n_states, G2.n_states
    A = np.block([
        [G1.A, np.zeros((n1, n2))],
        [G2.B @ G1.C, G2.A],
    ]) if n1 + n2 else np.zeros((0, 0))
    B = np.vstack([G1.B, G2.B @ G1.D]) if n1 + n2 else np.zeros((0, G1.n_inputs))
    C = np.hstack([G2.D @ G1.C, G2.C]) if n1 + n2 else np.zeros((G2.n_outputs, 0))
    D = G2.D @ G1.D
    return StateSpaceModel(A, B, C, D, G1.input_labels, G2.output_labels)


def interconnect_parallel(G1: StateSpaceModel, G2: StateSpaceModel) -> StateSpaceModel:
    """Block-diagonal combination diag(G1, G2) of inputs and outputs."""
    n1, n2 = G1.n_states, G2.n_states
    A = linalg.block_diag(G1.A, G2.A)
    B = linalg.block_diag(G1.B, G2.B)
    C = linalg.block_diag(G1.C, G2.C)
    D = linalg.block_diag(G1.D, G2.D)
    return StateSpaceModel(
        A, B, C, D,
        tuple(G1.input_labels) + tuple(G2.input_labels),
        tuple(G1.output_labels) + tuple(G2.output_labels),
        tuple(G1.state_labels) + tuple(G2.state_labels),
    )


def lft_lower(P: StateSpaceModel, K: StateSpaceModel, nu: int, ny: int) -> StateSpaceModel:
    """Lower LFT F_l(P, K): close the last ny outputs of P on K, K's outputs
    on the last nu inputs of P."""
    if K.n_inputs != ny or K.n_outputs != nu:
        raise ValueError("controller dimensions do not match (nu, ny)")
    m, p = P.n_inputs, P.n_outputs
    if nu > m or ny > p:
        raise ValueError("nu/ny exceed plant channel counts")
    m1, p1 = m - nu, p - ny
    A, B, C, D = P.A, P.B, P.C, P.D
    B1, B2 = B[:, :m1], B[:, m1:]
    C1, C2 = C[:p1, :], C[p1:, :]
    D11, D12 = D[:p1, :m1], D[:p1, m1:]
    D21, D22 = D[p1:, :m1], D[p1:, m1:]
    AK, BK, CK, DK = K.A, K.B, K.C, K.D

    loop = np.eye(nu) - DK @ D22
    if np.linalg.cond(loop) > ALGEBRAIC_LOOP_COND:
        raise NumericsError("algebraic loop: I - DK*D22 is numerically singular")
    E = np.linalg.solve(loop, np.eye(nu))

    # u = E (CK xK + DK C2 x + DK D21 w)
    ECK = E @ CK
    EDKC2 = E @ (DK @ C2)
    EDKD21 = E @ (DK @ D21)
    n, nk = P.n_states, K.n_states
    Acl = np.block([
        [A + B2 @ EDKC2, B2 @ ECK],
        [BK @ (C2 + D22 @ EDKC2), AK + BK @ D22 @ ECK],
    ])
    Bcl = np.vstack([
        B1 + B2 @ EDKD21,
        BK @ (D21 + D22 @ EDKD21),
    ])
    Ccl = np.hstack([C1 + D12 @ EDKC2, D12 @ ECK])
    Dcl = D11 + D12 @ EDKD21
    return StateSpaceModel(
        Acl, Bcl, Ccl, Dcl,
        P.input_labels[:m1], P.output_labels[:p1],
        tuple(P.state_labels) + tuple(f"K:{s}" for s in K.state_labels),
    )


def lft_upper(N: StateSpaceModel, Delta, ndelta: int) -> StateSpaceModel:
    """Upper LFT F_u(N, Delta): close the first ndelta channels with a constant
    (block-)diagonal real perturbation."""
    Delta = np.asarray(Delta, float)
    if Delta.ndim == 1:
        Delta = np.diag(Delta)
    if Delta.shape != (ndelta, ndelta):
        raise ValueError(f"Delta must be {ndelta}x{ndelta}")
    if ndelta > min(N.n_inputs, N.n_outputs):
        raise ValueError("ndelta exceeds channel counts")
    A, B, C, D = N.A, N.B, N.C, N.D
    B1, B2 = B[:, :ndelta], B[:, ndelta:]
    C1, C2 = C[:ndelta, :], C[ndelta:, :]
    D11, D12 = D[:ndelta, :ndelta], D[:ndelta, ndelta:]
    D21, D22 = D[ndelta:, :ndelta], D[ndelta:, ndelta:]

    loop = np.eye(ndelta) - Delta @ D11
    if ndelta and np.linalg.cond(loop) > ALGEBRAIC_LOOP_COND:
        raise NumericsError("singular I - Delta*N11 in upper LFT")
    # w_delta = (I - Delta D11)^-1 Delta (C1 x + D12 w)
    G = np.linalg.solve(loop, Delta) if ndelta else np.zeros((0, 0))
    Acl = A + B1 @ G @ C1
    Bcl = B2 + B1 @ G @ D12
    Ccl = C2 + D21 @ G @ C1
    Dcl = D22 + D21 @ G @ D12
    return StateSpaceModel(
        Acl, Bcl, Ccl, Dcl,
        N.input_labels[ndelta:], N.output_labels[ndelta:], N.state_labels,
    )


def freq_response(G: StateSpaceModel, omega) -> FrequencyResponse:
    """Evaluate H(jw) = C (jwI - A)^-1 B + D on a positive frequency grid."""
    omega = np.asarray(omega, dtype=float).ravel()
    if np.any(omega <= 0):
        raise ValueError("omega must be positive")
    n, p, m = G.n_states, G.n_outputs, G.n_inputs
    H = np.empty((omega.size, p, m), dtype=complex)
    if n == 0:
        H[:] = G.D
        return FrequencyResponse(omega, H)

    lam, V = np.linalg.eig(G.A)
    condV = np.linalg.cond(V)
    use_eig = np.isfinite(condV) and condV < 1e5
    if use_eig:
        CV = G.C @ V
        VB = np.linalg.solve(V, G.B)
        for k, w in enumerate(omega):
            gap = 1j * w - lam
            if np.min(np.abs(gap)) < 1e-12 * max(1.0, w):
                raise NumericsError(f"jwI - A singular at omega={w}")
            H[k] = (CV / gap) @ VB + G.D
    else:
        eye = np.eye(n)
        for k, w in enumerate(omega):
            try:
                X = np.linalg.solve(1j * w * eye - G.A, G.B)
            except np.linalg.LinAlgError as exc:
                raise NumericsError(f"jwI - A singular at omega={w}") from exc
            H[k] = G.C @ X + G.D
    return FrequencyResponse(omega, H)


def _hamiltonian_has_imag_eig(H, atol=1e-8):
    vals = np.linalg.eigvals(H)
    return bool(np.any(np.abs(vals.real) < atol * (1.0 + np.abs(vals))))


def hinf_norm(G: StateSpaceModel, tol: float = 1e-4) -> float:
    """H-infinity norm of a stable model via bisection on the Hamiltonian
    imaginary-eigenvalue test, seeded by a frequency-grid lower bound."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = G.n_states
    sig_d = float(np.linalg.norm(G.D, 2)) if G.D.size else 0.0
    if n == 0:
        return sig_d
    eigs = np.linalg.eigvals(G.A)
    if np.max(eigs.real) >= 0:
        raise NumericsError("hinf_norm requires a Hurwitz A matrix")

    # Grid seed: sample around the eigenfrequencies plus a broad log sweep.
    mags = np.abs(eigs)
    lo_f = max(np.min(mags[mags > 0], initial=1e-3) * 1e-2, 1e-8)
    hi_f = max(np.max(mags, initial=1.0) * 1e2, 1.0)
    grid = np.geomspace(lo_f, hi_f, 400)
    resp = freq_response(G, grid)
    peak_grid = float(np.max(np.linalg.norm(resp.H, 2, axis=(1, 2))))
    lower = max(peak_grid, sig_d)

    A, B, C, D = G.A, G.B, G.C, G.D

    def has_crossing(gamma):
        R = gamma**2 * np.eye(G.n_inputs) - D.T @ D
        try:
            Rinv = np.linalg.inv(R)
        except np.linalg.LinAlgError:
            return True
        if np.min(np.linalg.eigvalsh((R + R.T) / 2)) <= 0:
            return True
        Ah = A + B @ Rinv @ D.T @ C
        Ham = np.block([
            [Ah, B @ Rinv @ B.T],
            [-C.T @ (np.eye(G.n_outputs) + D @ Rinv @ D.T) @ C, -Ah.T],
        ])
        return _hamiltonian_has_imag_eig(Ham)

    hi = lower * (1.0 + 1e-6) + 1e-12
    for _ in range(80):
        if not has_crossing(hi):
            break
        hi *= 2.0
    else:
        raise NumericsError("hinf_norm bisection failed to bracket the norm")
    lo = lower
    while hi - lo > tol * hi:
        mid = 0.5 * (hi + lo)
        if has_crossing(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (hi + lo)


def _ric_schur(Ham: np.ndarray, axis_tol: float = 1e-9) -> np.ndarray:
    """Stabilizing Riccati solution from the ordered real Schur form of a
    2n-by-2n Hamiltonian matrix."""
    n2 = Ham.shape[0]
    if n2 % 2:
        raise ValueError("Hamiltonian must be even-dimensional")
    n = n2 // 2
    vals = np.linalg.eigvals(Ham)
    if np.any(np.abs(vals.real) < axis_tol * (1.0 + np.abs(vals))):
        raise NumericsError("Hamiltonian has eigenvalues on the imaginary axis")
    T, Z, sdim = linalg.schur(Ham, output="real", sort="lhp")
    if sdim != n:
        raise NumericsError(f"stable invariant subspace has dimension {sdim}, expected {n}")
    U11 = Z[:n, :n]
    U21 = Z[n:, :n]
    if np.linalg.cond(U11) > 1e13:
        raise NumericsError("ill-conditioned invariant subspace in Riccati solve")
    X = np.linalg.solve(U11.T, U21.T).T
    return 0.5 * (X + X.T)


def solve_care(A, B, Q, R) -> np.ndarray:
    """Stabilizing solution of A'X + XA - XBR^-1B'X + Q = 0 via the ordered
    Schur decomposition of the Hamiltonian, refined to a relative residual
    of 1e-8 or better."""
    A = _matrix(A, name="A")
    n = A.shape[0]
    B = _matrix(B, rows=n, name="B")
    Q = _matrix(Q, rows=n, cols=n, name="Q")
    R = _matrix(R, rows=B.shape[1], cols=B.shape[1], name="R")
    if np.linalg.norm(Q - Q.T) > 1e-8 * max(1.0, np.linalg.norm(Q)):
        raise ValueError("Q must be symmetric")
    if np.linalg.norm(R - R.T) > 1e-8 * max(1.0, np.linalg.norm(R)):
        raise ValueError("R must be symmetric")
    try:
        Rchol = linalg.cho_factor(R)
    except np.linalg.LinAlgError as exc:
        raise ValueError("R must be positive definite") from exc
    G = B @ linalg.cho_solve(Rchol, B.T)

    Ham = np.block([[A, -G], [-Q, -A.T]])
    X = _ric_schur(Ham)

    def residual(Xc):
        return A.T @ Xc + Xc @ A - Xc @ G @ Xc + Q

    scale = max(np.linalg.norm(Q), 1.0)
    for _ in range(3):
        res = residual(X)
        if np.linalg.norm(res) <= 1e-10 * scale:
            break
        Acl = A - G @ X
        try:
            corr = linalg.solve_continuous_lyapunov(Acl.T, -res)
        except np.linalg.LinAlgError:
            break
        X = 0.5 * (X + X.T + corr + corr.T)
    res_norm = np.linalg.norm(residual(X)) / scale
    if res_norm > 1e-8:
        raise NumericsError(f"Riccati residual {res_norm:.2e} above tolerance")
    Acl = A - G @ X
    if np.max(np.linalg.eigvals(Acl).real) >= 0:
        raise NumericsError("Riccati solution is not stabilizing")
    return X


def _gramian_factor(W):
    """Cholesky-like factor of a (numerically) PSD Gramian, rank-revealing."""
    W = 0.5 * (W + W.T)
    vals, vecs = np.linalg.eigh(W)
    tol = max(vals.max(), 0.0) * 1e-13
    keep = vals > tol
    return vecs[:, keep] * np.sqrt(vals[keep])


def balanced_truncate(G: StateSpaceModel, order: int):
    """Balanced truncation of a stable model.

    Returns (reduced_model, error_bound) where error_bound is twice the sum
    of the truncated Hankel singular values.
    """
    n = G.n_states
    if order < 0:
        raise ValueError("order must be nonnegative")
    if n == 0 or order >= n:
        return G, 0.0
    if not G.is_stable():
        raise NumericsError("balanced truncation requires a stable model")
    P = linalg.solve_continuous_lyapunov(G.A, -G.B @ G.B.T)
    Q = linalg.solve_continuous_lyapunov(G.A.T, -G.C.T @ G.C)
    Lp = _gramian_factor(P)
    Lq = _gramian_factor(Q)
    U, s, Vt = np.linalg.svd(Lq.T @ Lp)
    hsv = np.zeros(n)
    hsv[: s.size] = s
    # states beyond the numerical rank carry nothing; never keep them
    rank = int(np.sum(s > max(s[0], 1e-300) * 1e-13)) if s.size else 0
    k = min(order, rank)
    if k == 0:
        reduced = static_gain(G.D, G.input_labels, G.output_labels)
        return reduced, float(2.0 * np.sum(hsv))
    s1 = s[:k]
    T = Lp @ Vt[:k, :].T / np.sqrt(s1)
    Ti = (U[:, :k] / np.sqrt(s1)).T @ Lq.T
    Ar = Ti @ G.A @ T
    Br = Ti @ G.B
    Cr = G.C @ T
    reduced = StateSpaceModel(Ar, Br, Cr, G.D, G.input_labels, G.output_labels)
    return reduced, float(2.0 * np.sum(hsv[k:]))
