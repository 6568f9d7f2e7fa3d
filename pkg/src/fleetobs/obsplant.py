"""Input-output observers, their error dynamics, and the weighted
generalized plant used for robust correction-filter synthesis.

The observer copies the process model, corrects its input with
``nu = K(y - C x_hat)``, and outputs the state estimate.  The generalized
plant wraps the observer error dynamics with the disturbance, noise, error,
and correction-penalty weights plus the scalar uncertainty weight acting at
the process-model input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import AlgebraicLoop, DimensionMismatch, UnstableObserver
from .sslib import (
    GeneralizedPlant,
    PlantDims,
    StateSpaceModel,
    from_tf,
    scalar_times_identity,
    static_gain,
)
from .uncertainty import UncertaintyWeight


@dataclass(frozen=True)
class WeightSet:
    """Shaping filters of the generalized plant (all diagonal, stable)."""

    w_d: StateSpaceModel  # input disturbance shaping, n_u x n_u
    w_n: StateSpaceModel  # measurement noise shaping, n_y x n_y
    w_e: StateSpaceModel  # estimation error penalty, n_x x n_x
    w_nu: StateSpaceModel  # correction penalty, n_u x n_u


@dataclass(frozen=True)
class ObserverRealization:
    """Observer with inputs ``(u, y)`` and output ``x_hat``."""

    sys: StateSpaceModel
    n_u: int
    n_y: int
    source_label: str = ""


def _loop_inverse(d_g: np.ndarray, d_k: np.ndarray, c: np.ndarray) -> np.ndarray:
    n_x = d_g.shape[0]
    loop = np.eye(n_x) + d_g @ d_k @ c
    if np.linalg.cond(loop) > 1e12:
        raise AlgebraicLoop("observer feedthrough loop is singular")
    return np.linalg.solve(loop, np.eye(n_x))


def build_observer(
    g: StateSpaceModel, c: np.ndarray, k: StateSpaceModel, label: str = ""
) -> ObserverRealization:
    """Assemble ``x_hat = G(u + K(y - C x_hat))`` and verify stability."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n_x, n_u, n_y = g.n_outputs, g.n_inputs, c.shape[0]
    if c.shape[1] != n_x:
        raise DimensionMismatch("measurement matrix width must match model outputs")
    if k.n_inputs != n_y or k.n_outputs != n_u:
        raise DimensionMismatch(
            f"correction filter is {k.n_outputs}x{k.n_inputs}, expected {n_u}x{n_y}"
        )
    m = _loop_inverse(g.d, k.d, c)
    ng, nk = g.n_states, k.n_states
    # x_hat = M (Cg xg + Dg Ck xk + Dg u + Dg Dk y)
    cx_g = m @ g.c
    cx_k = m @ g.d @ k.c
    dx = np.hstack([m @ g.d, m @ g.d @ k.d])
    # nu = Ck xk + Dk y - Dk C x_hat
    cnu_g = -k.d @ c @ cx_g
    cnu_k = k.c - k.d @ c @ cx_k
    dnu = np.hstack([-k.d @ c @ dx[:, :n_u], k.d - k.d @ c @ dx[:, n_u:]])
    a = np.block(
        [
            [g.a + g.b @ cnu_g, g.b @ cnu_k],
            [-k.b @ c @ cx_g, k.a - k.b @ c @ cx_k],
        ]
    )
    b = np.block(
        [
            [g.b + g.b @ dnu[:, :n_u], g.b @ dnu[:, n_u:]],
            [-k.b @ c @ dx[:, :n_u], k.b - k.b @ c @ dx[:, n_u:]],
        ]
    )
    sys = StateSpaceModel(a=a, b=b, c=np.hstack([cx_g, cx_k]), d=dx)
    if sys.n_states and np.max(np.real(sys.poles())) >= 0.0:
        raise UnstableObserver(
            "observer loop has eigenvalues in the closed right half-plane"
        )
    return ObserverRealization(sys=sys, n_u=n_u, n_y=n_y, source_label=label)


def build_error_dynamics(
    g: StateSpaceModel, c: np.ndarray, k: StateSpaceModel
) -> StateSpaceModel:
    """Error dynamics from ``(d_u, d_x, n)`` to ``(e_x, e_y)``.

    ``e_x = (I + G K C)^{-1} (G d_u + d_x - G K n)`` realized by
    interconnection of the ``G``, ``K`` realizations.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n_x, n_u, n_y = g.n_outputs, g.n_inputs, c.shape[0]
    if c.shape[1] != n_x:
        raise DimensionMismatch("measurement matrix width must match model outputs")
    if k.n_inputs != n_y or k.n_outputs != n_u:
        raise DimensionMismatch("correction filter dimensions are inconsistent")
    m = _loop_inverse(g.d, k.d, c)
    ng, nk = g.n_states, k.n_states
    # e_x = M (Cg xg - Dg Ck xk + Dg d_u + d_x - Dg Dk n)
    ce_g = m @ g.c
    ce_k = -m @ g.d @ k.c
    de = np.hstack([m @ g.d, m, -m @ g.d @ k.d])
    # nu = Ck xk + Dk (C e_x + n)
    cnu_g = k.d @ c @ ce_g
    cnu_k = k.c + k.d @ c @ ce_k
    dnu = k.d @ c @ de + np.hstack(
        [np.zeros((n_u, n_u)), np.zeros((n_u, n_x)), k.d]
    )
    a = np.block(
        [
            [g.a - g.b @ cnu_g, -g.b @ cnu_k],
            [k.b @ c @ ce_g, k.a + k.b @ c @ ce_k],
        ]
    )
    b = np.block(
        [
            [np.hstack([g.b, np.zeros((ng, n_x)), np.zeros((ng, n_y))]) - g.b @ dnu],
            [k.b @ c @ de + np.hstack([np.zeros((nk, n_u + n_x)), k.b])],
        ]
    )
    c_out = np.block([[ce_g, ce_k], [c @ ce_g, c @ ce_k]])
    d_out = np.vstack(
        [de, c @ de + np.hstack([np.zeros((n_y, n_u + n_x)), np.eye(n_y)])]
    )
    return StateSpaceModel(a=a, b=b, c=c_out, d=d_out)


def build_generalized_plant(
    g0: StateSpaceModel,
    c: np.ndarray,
    w_delta: UncertaintyWeight | StateSpaceModel,
    weights: WeightSet,
    include_state_disturbance: bool = False,
) -> GeneralizedPlant:
    """Weighted synthesis plant around the observer error dynamics.

    Signal chain: ``v = W_d w1 - nu + w_delta`` drives the nominal model,
    ``z_delta = w_delta(s) I v`` closes the uncertainty loop,
    ``e_x = G0 v``, performance outputs ``z1 = W_e e_x`` and
    ``z2 = W_nu nu``, measurement ``rho = C e_x + W_n w2``.

    Channel order: outputs ``(z_delta | z1, z2 | rho)``, inputs
    ``(w_delta | w1, w2[, d_x] | nu)``.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    wd_scalar = w_delta.w if isinstance(w_delta, UncertaintyWeight) else w_delta
    n_x, n_u, n_y = g0.n_outputs, g0.n_inputs, c.shape[0]
    if c.shape[1] != n_x:
        raise DimensionMismatch("measurement matrix width must match model outputs")
    wdl = scalar_times_identity(wd_scalar, n_u)
    parts = {
        "d": weights.w_d,
        "n": weights.w_n,
        "e": weights.w_e,
        "nu": weights.w_nu,
        "dl": wdl,
        "g": g0,
    }
    for name, sys_, (rows, cols) in (
        ("d", weights.w_d, (n_u, n_u)),
        ("n", weights.w_n, (n_y, n_y)),
        ("e", weights.w_e, (n_x, n_x)),
        ("nu", weights.w_nu, (n_u, n_u)),
    ):
        if (sys_.n_outputs, sys_.n_inputs) != (rows, cols):
            raise DimensionMismatch(f"weight W_{name} must be {rows}x{cols}")
    offs = {}
    total = 0
    for name, sys_ in parts.items():
        offs[name] = total
        total += sys_.n_states
    n_states = total
    nd_x = n_x if include_state_disturbance else 0
    n_in = n_u + n_u + n_y + nd_x + n_u  # w_delta, w1, w2, [d_x], nu
    i_wdl, i_w1, i_w2 = 0, n_u, 2 * n_u
    i_dx = 2 * n_u + n_y
    i_nu = i_dx + nd_x

    def state_sel(name):
        s = np.zeros((parts[name].n_states, n_states))
        s[:, offs[name] : offs[name] + parts[name].n_states] = np.eye(
            parts[name].n_states
        )
        return s

    # v = Cd x_d + Dd w1 + w_delta - nu  (rows n_u)
    v_x = np.zeros((n_u, n_states))
    v_x[:, offs["d"] : offs["d"] + weights.w_d.n_states] = weights.w_d.c
    v_in = np.zeros((n_u, n_in))
    v_in[:, i_wdl : i_wdl + n_u] = np.eye(n_u)
    v_in[:, i_w1 : i_w1 + n_u] = weights.w_d.d
    v_in[:, i_nu : i_nu + n_u] = -np.eye(n_u)
    # e_x = Cg x_g + Dg v (+ d_x)
    ex_x = np.zeros((n_x, n_states))
    ex_x[:, offs["g"] : offs["g"] + g0.n_states] = g0.c
    ex_x += g0.d @ v_x
    ex_in = g0.d @ v_in
    if include_state_disturbance:
        ex_in[:, i_dx : i_dx + n_x] += np.eye(n_x)

    a = np.zeros((n_states, n_states))
    b = np.zeros((n_states, n_in))

    def set_block(name, drive_x, drive_in):
        sys_ = parts[name]
        sl = slice(offs[name], offs[name] + sys_.n_states)
        a[sl, sl] = sys_.a
        a[sl, :] += sys_.b @ drive_x
        b[sl, :] += sys_.b @ drive_in

    w1_in = np.zeros((n_u, n_in))
    w1_in[:, i_w1 : i_w1 + n_u] = np.eye(n_u)
    w2_in = np.zeros((n_y, n_in))
    w2_in[:, i_w2 : i_w2 + n_y] = np.eye(n_y)
    nu_in = np.zeros((n_u, n_in))
    nu_in[:, i_nu : i_nu + n_u] = np.eye(n_u)

    set_block("d", np.zeros((n_u, n_states)), w1_in)
    set_block("n", np.zeros((n_y, n_states)), w2_in)
    set_block("e", ex_x, ex_in)
    set_block("nu", np.zeros((n_u, n_states)), nu_in)
    set_block("dl", v_x, v_in)
    set_block("g", v_x, v_in)

    # Outputs: z_delta, z1, z2, rho
    n_out = n_u + n_x + n_u + n_y
    c_mat = np.zeros((n_out, n_states))
    d_mat = np.zeros((n_out, n_in))
    r0 = 0
    # z_delta = C_dl x_dl + D_dl v
    c_mat[r0 : r0 + n_u, offs["dl"] : offs["dl"] + wdl.n_states] = wdl.c
    c_mat[r0 : r0 + n_u, :] += wdl.d @ v_x
    d_mat[r0 : r0 + n_u, :] = wdl.d @ v_in
    r0 += n_u
    # z1 = C_e x_e + D_e e_x
    c_mat[r0 : r0 + n_x, offs["e"] : offs["e"] + weights.w_e.n_states] = weights.w_e.c
    c_mat[r0 : r0 + n_x, :] += weights.w_e.d @ ex_x
    d_mat[r0 : r0 + n_x, :] = weights.w_e.d @ ex_in
    r0 += n_x
    # z2 = C_nu x_nu + D_nu nu
    c_mat[r0 : r0 + n_u, offs["nu"] : offs["nu"] + weights.w_nu.n_states] = (
        weights.w_nu.c
    )
    d_mat[r0 : r0 + n_u, :] = weights.w_nu.d @ nu_in
    r0 += n_u
    # rho = C e_x + C_n x_n + D_n w2
    c_mat[r0 : r0 + n_y, :] = c @ ex_x
    c_mat[r0 : r0 + n_y, offs["n"] : offs["n"] + weights.w_n.n_states] += (
        weights.w_n.c
    )
    d_mat[r0 : r0 + n_y, :] = c @ ex_in + weights.w_n.d @ w2_in

    sys = StateSpaceModel(a=a, b=b, c=c_mat, d=d_mat)
    dims = PlantDims(
        n_delta_out=n_u,
        n_z=n_x + n_u,
        n_delta_in=n_u,
        n_w=n_u + n_y + nd_x,
        n_meas=n_y,
        n_ctl=n_u,
    )
    return GeneralizedPlant(sys=sys, dims=dims)


def first_order_lowpass(gain: float, corner_hz: float) -> StateSpaceModel:
    """``gain * wc / (s + wc)`` with the corner in Hz."""
    wc = 2.0 * np.pi * corner_hz
    return from_tf([gain * wc], [1.0, wc])


def first_order_highpass(
    hf_gain: float, corner_hz: float, dc_ratio: float = 0.01
) -> StateSpaceModel:
    """``hf_gain (s + wc*dc_ratio) / (s + wc)``; DC gain ``hf_gain*dc_ratio``."""
    wc = 2.0 * np.pi * corner_hz
    return from_tf([hf_gain, hf_gain * wc * dc_ratio], [1.0, wc])


def default_weights(
    n_u: int,
    n_x: int,
    n_y: int,
    d_bw_hz: float = 1.0,
    d_gain: float = 1.0,
    n_floor: float = 1.0,
    e_bw_hz: float = 10.0,
    e_gain: float = 1.0,
    nu_bw_hz: float = 20.0,
    nu_hf_gain: float = 1.0,
) -> WeightSet:
    """First-order diagonal shaping filters with configurable corners.

    ``W_d`` and ``W_e`` are low-pass, ``W_n`` is a constant floor, and
    ``W_nu`` is high-pass.
    """
    for name, val in (
        ("d_bw_hz", d_bw_hz),
        ("e_bw_hz", e_bw_hz),
        ("nu_bw_hz", nu_bw_hz),
        ("n_floor", n_floor),
    ):
        if val <= 0:
            raise ValueError(f"{name} must be positive")
    return WeightSet(
        w_d=scalar_times_identity(first_order_lowpass(d_gain, d_bw_hz), n_u),
        w_n=static_gain(n_floor * np.eye(n_y)),
        w_e=scalar_times_identity(first_order_lowpass(e_gain, e_bw_hz), n_x),
        w_nu=scalar_times_identity(first_order_highpass(nu_hf_gain, nu_bw_hz), n_u),
    )
