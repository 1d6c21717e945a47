"""ABCD two-port chains and end-to-end transfer functions.

The trunk is represented as a packed element chain (line pieces with an
optional PUL scale, plus point shunts) split at the tee. Chain matrices are
composed per frequency in vectorized numpy; the per-sample branch fold that
touches every (sample, subcarrier) cell is the hot kernel and carries a
numba variant. The transfer function is the power-wave
S21 = 2*sqrt(Re Z1 * Re Z2) / (A*Z2 + B + C*Z1*Z2 + D*Z1), which is bounded
by 1 for passive networks and collapses to exp(-gamma*l) on a matched
uniform line.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _accel
from ..errors import ConfigError
from .cable import MATCHED, BandSpec, CableSpec, FaultView, HEALTHY_VIEW, TopologySpec

_LINE = 0
_SHUNT = 1


def abcd_segment(cable: CableSpec, length_m: float, freq_hz, rg_scale: float = 1.0):
    """ABCD matrix of one line segment: [[cosh, Zc*sinh], [sinh/Zc, cosh]].

    Scalar frequency gives a (2, 2) matrix, an array of F frequencies gives
    (F, 2, 2). Zero length yields the identity.
    """
    if length_m < 0:
        raise ValueError(f"segment length must be >= 0, got {length_m}")
    scalar = np.isscalar(freq_hz)
    gamma, zc = cable.propagation(np.atleast_1d(freq_hz), rg_scale)
    gl = gamma * length_m
    ch, sh = np.cosh(gl), np.sinh(gl)
    out = np.empty(ch.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = ch
    out[..., 0, 1] = zc * sh
    out[..., 1, 0] = sh / zc
    out[..., 1, 1] = ch
    return out[0] if scalar else out


def trunk_elements(topology: TopologySpec, view: FaultView = HEALTHY_VIEW):
    """Split the trunk into (pre-tee, post-tee) element chains for a fault view.

    Elements are (kind, length_m, rg_scale, shunt_admittance) tuples. Raises
    ConfigError when the fault geometry falls outside the trunk.
    """
    d_tee = topology.trunk_tx_to_tee_m
    total = topology.trunk_total_m
    scaled = view.rg_scale != 1.0
    if scaled:
        if view.span_start_m < 0 or view.span_end_m > total or view.span_start_m >= view.span_end_m:
            raise ConfigError(
                f"fault span [{view.span_start_m}, {view.span_end_m}] m outside trunk "
                f"span [0, {total}] m"
            )
    has_shunt = view.shunt_position_m >= 0
    if has_shunt and view.shunt_position_m > total:
        raise ConfigError(
            f"fault position {view.shunt_position_m} m outside trunk span [0, {total}] m"
        )

    def side(start, end, shunt_here):
        cuts = {start, end}
        if scaled:
            cuts.update(x for x in (view.span_start_m, view.span_end_m) if start < x < end)
        if shunt_here and start < view.shunt_position_m < end:
            cuts.add(view.shunt_position_m)
        edges = sorted(cuts)
        elements = []
        if shunt_here and view.shunt_position_m == start:
            elements.append((_SHUNT, 0.0, 1.0, complex(view.shunt_conductance_s)))
        for a, b in zip(edges, edges[1:]):
            mid = 0.5 * (a + b)
            in_span = scaled and view.span_start_m <= mid < view.span_end_m
            elements.append((_LINE, b - a, view.rg_scale if in_span else 1.0, 0j))
            if shunt_here and view.shunt_position_m == b:
                elements.append((_SHUNT, 0.0, 1.0, complex(view.shunt_conductance_s)))
        return tuple(elements)

    shunt_pre = has_shunt and view.shunt_position_m <= d_tee
    pre = side(0.0, d_tee, shunt_pre)
    post = side(d_tee, total, has_shunt and not shunt_pre)
    return pre, post


def element_abcd(cable: CableSpec, freqs: np.ndarray, element) -> np.ndarray:
    """One element's ABCD entries over the band, flattened to (F, 4)."""
    kind, length, scale, y = element
    n_freq = freqs.shape[0]
    out = np.empty((n_freq, 4), dtype=np.complex128)
    if kind == _LINE:
        gamma, zc = cable.propagation(freqs, scale)
        gl = gamma * length
        ch, sh = np.cosh(gl), np.sinh(gl)
        out[:, 0] = ch
        out[:, 1] = zc * sh
        out[:, 2] = sh / zc
        out[:, 3] = ch
    else:
        out[:, 0] = 1.0
        out[:, 1] = 0.0
        out[:, 2] = y
        out[:, 3] = 1.0
    return out


def compose_abcd(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Cascade two (F, 4) ABCD chains: first feeding into second."""
    out = np.empty_like(first)
    out[:, 0] = first[:, 0] * second[:, 0] + first[:, 1] * second[:, 2]
    out[:, 1] = first[:, 0] * second[:, 1] + first[:, 1] * second[:, 3]
    out[:, 2] = first[:, 2] * second[:, 0] + first[:, 3] * second[:, 2]
    out[:, 3] = first[:, 2] * second[:, 1] + first[:, 3] * second[:, 3]
    return out


def identity_abcd(n_freq: int) -> np.ndarray:
    out = np.zeros((n_freq, 4), dtype=np.complex128)
    out[:, 0] = 1.0
    out[:, 3] = 1.0
    return out


def chain_abcd(cable: CableSpec, freqs: np.ndarray, elements) -> np.ndarray:
    """Evaluate an element chain across the band; returns (F, 4) as A, B, C, D."""
    result = identity_abcd(freqs.shape[0])
    for element in elements:
        result = compose_abcd(result, element_abcd(cable, freqs, element))
    return result


def _fold_transfer_py(a_pre, a_post, state_idx, loads, zc_b, tanh_b, z1, z2, amp, out):
    n_freq = zc_b.shape[0]
    for j in range(loads.shape[0]):
        s = state_idx[j]
        load = loads[j]
        for i in range(n_freq):
            zc = zc_b[i]
            t = tanh_b[i]
            zin = zc * (load + zc * t) / (zc + load * t)
            y = 1.0 / zin
            pre_b = a_pre[s, i, 1]
            pre_d = a_pre[s, i, 3]
            pa = a_pre[s, i, 0] + pre_b * y
            pc = a_pre[s, i, 2] + pre_d * y
            aa = pa * a_post[s, i, 0] + pre_b * a_post[s, i, 2]
            bb = pa * a_post[s, i, 1] + pre_b * a_post[s, i, 3]
            cc = pc * a_post[s, i, 0] + pre_d * a_post[s, i, 2]
            dd = pc * a_post[s, i, 1] + pre_d * a_post[s, i, 3]
            den = aa * z2[i] + bb + cc * z1[i] * z2[i] + dd * z1[i]
            mag2 = den.real * den.real + den.imag * den.imag
            out[j, i] = 10.0 * math.log10(amp[i] * amp[i] / mag2)


def _fold_transfer_numpy(a_pre, a_post, state_idx, loads, zc_b, tanh_b, z1, z2, amp, out):
    loads = loads[:, None]
    zin = zc_b * (loads + zc_b * tanh_b) / (zc_b + loads * tanh_b)
    y = 1.0 / zin
    pre = a_pre[state_idx]
    post = a_post[state_idx]
    pa = pre[..., 0] + pre[..., 1] * y
    pc = pre[..., 2] + pre[..., 3] * y
    aa = pa * post[..., 0] + pre[..., 1] * post[..., 2]
    bb = pa * post[..., 1] + pre[..., 1] * post[..., 3]
    cc = pc * post[..., 0] + pre[..., 3] * post[..., 2]
    dd = pc * post[..., 1] + pre[..., 3] * post[..., 3]
    den = aa * z2 + bb + cc * (z1 * z2) + dd * z1
    mag2 = den.real * den.real + den.imag * den.imag
    out[:] = 10.0 * np.log10(amp * amp / mag2)


_fold_transfer = _accel.register("fold_transfer", _fold_transfer_py, _fold_transfer_numpy)


def branch_constants(cable: CableSpec, topology: TopologySpec, freqs: np.ndarray):
    """Characteristic impedance and tanh(gamma*length) of the branch line."""
    gamma, zc = cable.propagation(freqs)
    return zc, np.tanh(gamma * topology.branch_m)


def resolve_ports(topology: TopologySpec, cable: CableSpec, freqs: np.ndarray):
    """Port impedances across the band plus the transfer normalization
    2*sqrt(Re Z1 * Re Z2); 'matched' tracks the healthy line Zc."""
    _, zc = cable.propagation(freqs)
    ports = []
    for val in (topology.tx_impedance_ohm, topology.rx_impedance_ohm):
        if isinstance(val, str) and val == MATCHED:
            ports.append(zc.astype(np.complex128))
        else:
            ports.append(np.full(freqs.shape[0], complex(val), dtype=np.complex128))
    z1, z2 = ports
    amp = 2.0 * np.sqrt(z1.real * z2.real)
    return z1, z2, amp


def attenuation_db(
    cable: CableSpec,
    topology: TopologySpec,
    freqs: np.ndarray,
    a_pre: np.ndarray,
    a_post: np.ndarray,
    state_idx: np.ndarray,
    loads: np.ndarray,
    out: np.ndarray,
) -> None:
    """Fill out (m, F) with 20*log10|H| for m samples of branch load/state."""
    zc_b, tanh_b = branch_constants(cable, topology, freqs)
    z1, z2, amp = resolve_ports(topology, cable, freqs)
    _fold_transfer(
        a_pre,
        a_post,
        np.asarray(state_idx, dtype=np.int64),
        np.asarray(loads, dtype=np.complex128),
        zc_b,
        tanh_b,
        z1,
        z2,
        amp,
        out,
    )


def cfr(
    topology: TopologySpec,
    cable: CableSpec,
    band: BandSpec,
    branch_load: complex,
    fault_view: FaultView = HEALTHY_VIEW,
) -> np.ndarray:
    """Complex end-to-end transfer function for one sample, length n_subcarriers."""
    freqs = band.frequencies()
    pre, post = trunk_elements(topology, fault_view)
    a_pre = chain_abcd(cable, freqs, pre)
    a_post = chain_abcd(cable, freqs, post)
    zc_b, tanh_b = branch_constants(cable, topology, freqs)
    load = complex(branch_load)
    zin = zc_b * (load + zc_b * tanh_b) / (zc_b + load * tanh_b)
    y = 1.0 / zin
    pa = a_pre[:, 0] + a_pre[:, 1] * y
    pc = a_pre[:, 2] + a_pre[:, 3] * y
    aa = pa * a_post[:, 0] + a_pre[:, 1] * a_post[:, 2]
    bb = pa * a_post[:, 1] + a_pre[:, 1] * a_post[:, 3]
    cc = pc * a_post[:, 0] + a_pre[:, 3] * a_post[:, 2]
    dd = pc * a_post[:, 1] + a_pre[:, 3] * a_post[:, 3]
    z1, z2, amp = resolve_ports(topology, cable, freqs)
    den = aa * z2 + bb + cc * (z1 * z2) + dd * z1
    return amp / den
