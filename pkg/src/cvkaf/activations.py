"""Complex activation functions with forward and backward passes.

Four families are implemented:

* split activations: a real nonlinearity applied independently to the real
  and imaginary parts;
* phase-amplitude: ``tanh(|z|) * z/|z|``, magnitude squashed, phase kept;
* kernel activations (KAF): ``g(z) = k(z)^T alpha`` over a fixed dictionary,
  with per-neuron trainable mixing coefficients and log-bandwidths;
* widely linear KAF: ``g(z) = k^T alpha + kt^T conj(alpha)`` with a
  pseudo-kernel ``kt``, in the case-1 (separate real/imaginary bandwidths)
  and case-2 (separable kernels, fixed imaginary mixing) constructions.

Layer classes vectorize over a (batch, width) activation matrix with
per-neuron parameters; the module-level functions are the scalar/vector
reference forms the tests compare against. Backward passes return
cogradients in the package-wide convention (see :mod:`cvkaf.cnum`) and are
all validated against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import NumericError, ParameterError
from .kernels import Dictionary, sq_distance

__all__ = [
    "split_activation",
    "phase_amplitude",
    "kaf_forward",
    "wlkaf_forward_case1",
    "wlkaf_forward_case2",
    "init_alpha",
    "init_alpha_wl_case2",
    "gamma_rule_of_thumb",
    "SplitActivation",
    "PhaseAmplitudeActivation",
    "KafActivation",
    "WlKafCase1Activation",
    "WlKafCase2Activation",
    "activation_from_spec",
    "ACTIVATION_VARIANTS",
]

_EXP_LIMIT = 700.0

_SPLIT_FUNCS: dict[str, tuple[Callable, Callable]] = {
    # name -> (g_R, derivative of g_R)
    "tanh": (np.tanh, lambda a: 1.0 - np.tanh(a) ** 2),
    "identity": (lambda a: a, lambda a: np.ones_like(a)),
}


def split_activation(z, g_r="tanh"):
    """Apply a real nonlinearity to real and imaginary parts separately."""
    fn = _SPLIT_FUNCS[g_r][0] if isinstance(g_r, str) else g_r
    z = np.asarray(z, dtype=np.complex128)
    return fn(z.real) + 1j * fn(z.imag)


def phase_amplitude(z):
    """Squash the magnitude with tanh while preserving the phase.

    Defined as 0 at the origin, which is the continuous extension since
    tanh(0) annihilates the (undefined) phase factor.
    """
    z = np.asarray(z, dtype=np.complex128)
    r = np.abs(z)
    return z * _tanh_over_r(r)


def kaf_forward(z, alpha, dictionary: Dictionary, kernel, gamma):
    """Kernel expansion ``g(z) = k(z)^T alpha`` (plain transpose, no conjugation)."""
    k = kernels.kernel_matrix(z, dictionary, kernel, gamma)
    return k @ np.asarray(alpha, dtype=np.complex128)


def wlkaf_forward_case1(z, alpha, dictionary: Dictionary, gamma_rr, gamma_ii):
    """Widely linear expansion with the case-1 kernel/pseudo-kernel pair."""
    k, kt = kernels.case1_pair(z, dictionary, gamma_rr, gamma_ii)
    alpha = np.asarray(alpha, dtype=np.complex128)
    return k @ alpha + kt @ np.conj(alpha)


def wlkaf_forward_case2(z, alpha, dictionary: Dictionary, gammas, gamma_tildes, omegas):
    """Widely linear expansion with the case-2 kernel/pseudo-kernel pair."""
    k, kt = kernels.case2_pair(z, dictionary, gammas, gamma_tildes, omegas)
    alpha = np.asarray(alpha, dtype=np.complex128)
    return k @ alpha + kt @ np.conj(alpha)


def gamma_rule_of_thumb(dictionary: Dictionary) -> float:
    """Default bandwidth ``1/(2*spacing^2)``.

    Puts neighbouring dictionary atoms at roughly exp(-1/2) overlap.
    """
    if dictionary.spacing <= 0:
        raise ParameterError("dictionary spacing must be positive")
    return 1.0 / (2.0 * dictionary.spacing**2)


def init_alpha(dictionary: Dictionary, kernel, gamma, target=None, ridge: float = 1e-4) -> np.ndarray:
    """Ridge-fit mixing coefficients so the expansion matches ``target`` on the grid.

    ``target`` is a callable on complex points or a length-D array; the
    default is the identity function, giving a near-linear initial
    activation. ``ridge=0`` requests exact interpolation and fails on a
    singular kernel matrix.
    """
    if ridge < 0:
        raise ParameterError(f"ridge must be nonnegative, got {ridge}")
    pts = dictionary.points
    big_k = kernels.kernel_matrix(pts, dictionary, kernel, gamma)
    t = _target_values(target, pts)
    return _ridge_solve(np.asarray(big_k, dtype=np.complex128), t, ridge)


def init_alpha_wl_case2(
    dictionary: Dictionary, gammas, gamma_tildes, omegas, target=None, ridge: float = 1e-4
) -> np.ndarray:
    """Fit alpha through the full case-2 widely linear map.

    The pseudo-kernel couples alpha and conj(alpha), so the fit is a real
    block system over (Re alpha, Im alpha):

        Re g = K a_r + 2 W a_i,   Im g = K a_i + 2 W a_r

    with K the kernel Gram matrix and W the (real) pseudo-kernel weight
    matrix. A plain kernel-only fit would leave a large identity error at
    practical mixing weights (measured: 1.7 vs 0.01 at omega = 0.3).
    """
    if ridge < 0:
        raise ParameterError(f"ridge must be nonnegative, got {ridge}")
    pts = dictionary.points
    k, kt = kernels.case2_pair(pts, dictionary, gammas, gamma_tildes, omegas)
    w = kt.imag / 2.0  # kt = 2i*W
    t = _target_values(target, pts)
    d = dictionary.size
    m = np.block([[k, 2.0 * w], [2.0 * w, k]])
    rhs = np.concatenate([t.real, t.imag])
    if ridge == 0:
        try:
            sol = np.linalg.solve(m, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"singular widely linear fit system: {exc}") from exc
    else:
        a = m.T @ m + ridge * np.eye(2 * d)
        sol = np.linalg.solve(a, m.T @ rhs)
    return sol[:d] + 1j * sol[d:]


def _target_values(target, pts: np.ndarray) -> np.ndarray:
    if target is None:
        return pts.copy()
    if callable(target):
        return np.asarray(target(pts), dtype=np.complex128)
    t = np.asarray(target, dtype=np.complex128)
    if t.shape != pts.shape:
        raise ParameterError(f"target has shape {t.shape}, expected {pts.shape}")
    return t


def _ridge_solve(big_k: np.ndarray, t: np.ndarray, ridge: float) -> np.ndarray:
    if ridge == 0:
        try:
            return np.linalg.solve(big_k, t)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"singular kernel matrix with ridge=0: {exc}") from exc
    kh = big_k.conj().T
    return np.linalg.solve(kh @ big_k + ridge * np.eye(big_k.shape[0]), kh @ t)


def _dot_bh(kmat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """``einsum('bhd,hd->bh', kmat, vec)`` via batched matmul (much faster)."""
    out = np.matmul(kmat.transpose(1, 0, 2), vec[:, :, None])  # (H, B, 1)
    return np.ascontiguousarray(out[:, :, 0].T)


def _dot_hd(g: np.ndarray, kmat: np.ndarray) -> np.ndarray:
    """``einsum('bh,bhd->hd', g, kmat)`` via batched matmul."""
    out = np.matmul(g.T[:, None, :], kmat.transpose(1, 0, 2))  # (H, 1, D)
    return out[:, 0, :]


def _complex_assemble(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    """``re + 1j*im`` without the slow complex-multiply path."""
    out = np.empty(re.shape, dtype=np.complex128)
    out.real = re
    out.imag = im
    return out


def _cdot_bh(kmat: np.ndarray, vec_c: np.ndarray) -> np.ndarray:
    """Real kernel matrix against complex coefficients, as two real gemms.

    Materializing a complex kernel matrix (or letting matmul promote the
    real one) costs far more than the contraction itself; two real products
    recombined keep everything in the fast dgemm path.
    """
    return _complex_assemble(_dot_bh(kmat, vec_c.real), _dot_bh(kmat, vec_c.imag))


def _pair_dot_bh(k_re: np.ndarray, k_im: np.ndarray, vec_c: np.ndarray) -> np.ndarray:
    """Complex kernel matrix held as a (re, im) pair of real arrays."""
    ur, ui = _dot_bh(k_re, vec_c.real), _dot_bh(k_re, vec_c.imag)
    vr, vi = _dot_bh(k_im, vec_c.real), _dot_bh(k_im, vec_c.imag)
    return _complex_assemble(ur - vi, ui + vr)


def _grid_maps(dictionary: Dictionary):
    """Axis values and flat-index maps of the dictionary grid.

    Points enumerate the grid row-major (imaginary outer, real inner), so
    ``points[j].real == axis[j % m]`` and ``points[j].imag == axis[j // m]``
    exactly; per-axis kernel evaluations can be computed m-wide and
    gathered, cutting the transcendental work by a factor of m.
    """
    m = dictionary.points_per_axis
    axis = dictionary.points.real[:m].copy()
    idx_re = np.tile(np.arange(m), m)
    idx_im = np.repeat(np.arange(m), m)
    return axis, idx_re, idx_im


def _axis_offsets(z, dictionary: Dictionary):
    """Per-axis offsets ``Re(z) - axis`` and ``Im(z) - axis``, (B, H, m)."""
    axis, _, _ = _grid_maps(dictionary)
    return z.real[:, :, None] - axis, z.imag[:, :, None] - axis


def _bilinear(eb: np.ndarray, agrid: np.ndarray, ea: np.ndarray) -> np.ndarray:
    """``sum_{i,j} eb[b,h,i] * agrid[h,i,j] * ea[b,h,j]`` as (B, H).

    The separable Gaussian over the grid factorizes into per-axis kernels,
    so the full expansion is a bilinear form in the (H, m, m) coefficient
    grid; this is the workhorse replacing all dense (B, H, D) contractions.
    """
    m1 = np.matmul(agrid, ea.transpose(1, 2, 0))  # (H,m,m)@(H,m,B) -> (H,m,B)
    return np.sum(eb.transpose(1, 2, 0) * m1, axis=1).T


def _bilinear_c(eb: np.ndarray, agrid_c: np.ndarray, ea: np.ndarray) -> np.ndarray:
    """Bilinear form with a complex coefficient grid."""
    return _complex_assemble(
        _bilinear(eb, np.ascontiguousarray(agrid_c.real), ea),
        _bilinear(eb, np.ascontiguousarray(agrid_c.imag), ea),
    )


def _outer_hd(w: np.ndarray, ea: np.ndarray) -> np.ndarray:
    """``sum_b w[b,h,i] * ea[b,h,j]`` as (H, m, m): coefficient-grid gradients."""
    return np.matmul(w.transpose(1, 2, 0), ea.transpose(1, 0, 2))


def _tanh_over_r(r: np.ndarray) -> np.ndarray:
    """``tanh(r)/r`` with its Taylor value near zero."""
    small = r < 1e-3
    safe = np.where(small, 1.0, r)
    return np.where(small, 1.0 - r**2 / 3.0, np.tanh(safe) / safe)


def _pseudo_tanh_factor(r: np.ndarray) -> np.ndarray:
    """``(tanh'(r)*r - tanh(r)) / (2 r^3)``, limit -1/3 at the origin."""
    small = r < 1e-3
    safe = np.where(small, 1.0, r)
    t = np.tanh(safe)
    exact = ((1.0 - t**2) * safe - t) / (2.0 * safe**3)
    return np.where(small, -1.0 / 3.0 + 0.2 * r**2, exact)


# ---------------------------------------------------------------------------
# Layer-level activations: (batch, width) inputs with per-neuron parameters.
# Each class is a stateless descriptor; parameters live in a plain dict of
# numpy arrays owned by the network layer. forward() returns (out, cache),
# backward() consumes the cache and returns (cograd_z, {name: cograd}).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitActivation:
    fn: str = "tanh"
    name: str = field(init=False)

    def __post_init__(self):
        if self.fn not in _SPLIT_FUNCS:
            raise ParameterError(f"unknown split nonlinearity {self.fn!r}")
        object.__setattr__(self, "name", f"split_{self.fn}")

    def spec_dict(self) -> dict:
        return {"variant": "split", "fn": self.fn}

    def init_params(self, width, dictionary, rng, alpha_init="identity", ridge=1e-4):
        return {}

    def forward(self, z, params, dictionary):
        g, dg = _SPLIT_FUNCS[self.fn]
        out = g(z.real) + 1j * g(z.imag)
        return out, {"d_re": dg(z.real), "d_im": dg(z.imag)}

    def backward(self, g_out, cache, params, dictionary):
        gz = g_out.real * cache["d_re"] + 1j * (g_out.imag * cache["d_im"])
        return gz, {}


@dataclass(frozen=True)
class PhaseAmplitudeActivation:
    name: str = field(init=False, default="phase_amplitude")

    def __post_init__(self):
        object.__setattr__(self, "name", "phase_amplitude")

    def spec_dict(self) -> dict:
        return {"variant": "phase_amplitude"}

    def init_params(self, width, dictionary, rng, alpha_init="identity", ridge=1e-4):
        return {}

    def forward(self, z, params, dictionary):
        r = np.abs(z)
        out = z * _tanh_over_r(r)
        return out, {"z": z, "r": r}

    def backward(self, g_out, cache, params, dictionary):
        z, r = cache["z"], cache["r"]
        t = np.tanh(r)
        dz = 0.5 * (_tanh_over_r(r) + (1.0 - t**2))  # d out/d z, real
        dz_star = z**2 * _pseudo_tanh_factor(r)  # d out/d conj(z)
        gz = g_out * dz + np.conj(g_out) * dz_star
        return gz, {}


class _KafBase:
    """Shared parameter plumbing for the kernel-expansion activations."""

    def _init_alpha_rows(self, width, dictionary, rng, alpha_init, ridge, fit_one):
        if alpha_init == "identity":
            row = fit_one()
            return np.tile(row, (width, 1))
        if alpha_init == "random":
            # std 0.3 for the complex value -> 0.3/sqrt(2) per component
            s = 0.3 / np.sqrt(2.0)
            return (
                rng.normal(0.0, s, (width, dictionary.size))
                + 1j * rng.normal(0.0, s, (width, dictionary.size))
            )
        raise ParameterError(f"unknown alpha_init {alpha_init!r}")


@dataclass(frozen=True)
class KafActivation(_KafBase):
    """Standard kernel activation, one bandwidth per neuron."""

    kernel: str = "real_gaussian"
    name: str = field(init=False)

    def __post_init__(self):
        if self.kernel not in kernels.KERNELS:
            raise ParameterError(f"unknown kernel {self.kernel!r}")
        object.__setattr__(self, "name", f"kaf_{self.kernel}")

    def spec_dict(self) -> dict:
        return {"variant": "kaf", "kernel": self.kernel}

    def init_params(self, width, dictionary, rng, alpha_init="identity", ridge=1e-4):
        g0 = gamma_rule_of_thumb(dictionary)
        alpha = self._init_alpha_rows(
            width, dictionary, rng, alpha_init, ridge,
            lambda: init_alpha(dictionary, self.kernel, g0, ridge=ridge),
        )
        return {
            "alpha": alpha.astype(np.complex128),
            "log_gamma": np.full(width, np.log(g0), dtype=np.float64),
        }

    def forward(self, z, params, dictionary):
        gamma = np.exp(params["log_gamma"])  # (H,)
        alpha = params["alpha"]  # (H, D)
        m = dictionary.points_per_axis
        if self.kernel == "real_gaussian":
            # exp(-g*|z-d|^2) = exp(-g*(a-re)^2) * exp(-g*(b-im)^2): the grid
            # expansion is a bilinear form in the (H, m, m) coefficient grid
            ar, bi = _axis_offsets(z, dictionary)
            g = -gamma[None, :, None]
            ea = np.exp(g * (ar * ar))
            eb = np.exp(g * (bi * bi))
            agrid = alpha.reshape(-1, m, m)
            out = _bilinear_c(eb, agrid, ea)
            cache = {"kind": "real", "ar": ar, "bi": bi, "ea": ea, "eb": eb,
                     "alpha": alpha, "gamma": gamma}
        elif self.kernel == "independent":
            # the four component kernels collapse to two per-axis kernels;
            # the expansion needs only row/column sums of the grid
            ar, bi = _axis_offsets(z, dictionary)
            g = -gamma[None, :, None]
            ka = np.exp(g * (ar * ar))
            kb = np.exp(g * (bi * bi))
            agrid = alpha.reshape(-1, m, m)
            acol = np.ascontiguousarray(agrid.sum(axis=1))  # (H, m) over imaginary
            arow = np.ascontiguousarray(agrid.sum(axis=2))  # (H, m) over real
            out = (_cdot_bh(ka, acol) + _cdot_bh(kb, arow)
                   + 1j * (_cdot_bh(ka, arow) - _cdot_bh(kb, acol)))
            cache = {"kind": "independent", "alpha": alpha, "gamma": gamma,
                     "ar": ar, "bi": bi, "ka": ka, "kb": kb,
                     "acol": acol, "arow": arow}
        else:  # complex_gaussian (holomorphic, not grid-separable)
            w = z[:, :, None] - np.conj(dictionary.points)
            wr, wi = w.real, w.imag
            g = -gamma[None, :, None]
            expo_re = g * (wr * wr - wi * wi)
            expo_im = g * (2.0 * (wr * wi))
            if np.any(np.abs(expo_re) > _EXP_LIMIT):
                raise NumericError("complex Gaussian activation exponent out of range")
            mag = np.exp(expo_re)
            k_re, k_im = mag * np.cos(expo_im), mag * np.sin(expo_im)
            out = _pair_dot_bh(k_re, k_im, alpha)
            cache = {"kind": "holo", "w": w, "k_re": k_re, "k_im": k_im,
                     "alpha": alpha, "gamma": gamma}
        return out, cache

    def backward(self, g_out, cache, params, dictionary):
        alpha, gamma = cache["alpha"], cache["gamma"]
        kind = cache["kind"]
        cg = np.conj(g_out)
        m = dictionary.points_per_axis
        if kind == "real":
            ar, bi, ea, eb = cache["ar"], cache["bi"], cache["ea"], cache["eb"]
            agrid = alpha.reshape(-1, m, m)
            g_alpha = _complex_assemble(
                _outer_hd(g_out.real[:, :, None] * eb, ea).reshape(-1, m * m),
                _outer_hd(g_out.imag[:, :, None] * eb, ea).reshape(-1, m * m),
            )
            # s* = sum K*diff*alpha and s = sum K*conj(diff)*alpha from the
            # real-axis and imaginary-axis moment bilinears
            c_re = _bilinear_c(eb, agrid, ar * ea)
            c_im = _bilinear_c(bi * eb, agrid, ea)
            s_star = c_re + 1j * c_im
            s = c_re - 1j * c_im
            gz = -gamma[None, :] * (cg * s_star + g_out * np.conj(s))
            t = (_bilinear_c(eb, agrid, (ar * ar) * ea)
                 + _bilinear_c((bi * bi) * eb, agrid, ea))
            g_lg = -gamma * np.sum((cg * t).real, axis=0)
            return gz, {"alpha": g_alpha, "log_gamma": g_lg}
        if kind == "independent":
            ar, bi, ka, kb = cache["ar"], cache["bi"], cache["ka"], cache["kb"]
            acol, arow = cache["acol"], cache["arow"]
            # G_alpha[h,ji,jr] = P[h,jr] + (-i*P)[h,ji] with P = M1 + i*M2,
            # M1 = sum_b g*Ka, M2 = sum_b g*Kb
            m1 = _complex_assemble(_dot_hd(g_out.real, ka), _dot_hd(g_out.imag, ka))
            m2 = _complex_assemble(_dot_hd(g_out.real, kb), _dot_hd(g_out.imag, kb))
            p = m1 + 1j * m2
            g_alpha = (p[:, None, :] + (-1j) * p[:, :, None]).reshape(-1, m * m)
            g2 = -2.0 * gamma[None, :]
            pa = ar * ka
            pb = bi * kb
            u_a = g2 * (_cdot_bh(pa, acol) + 1j * _cdot_bh(pa, arow))
            u_b = g2 * (_cdot_bh(pb, arow) - 1j * _cdot_bh(pb, acol))
            gz = _complex_assemble((cg * u_a).real, (cg * u_b).real)
            qa = ar * pa
            qb = bi * pb
            u_t = -gamma[None, :] * (
                _cdot_bh(qa, acol) + _cdot_bh(qb, arow)
                + 1j * (_cdot_bh(qa, arow) - _cdot_bh(qb, acol))
            )
            g_lg = np.sum((cg * u_t).real, axis=0)
            return gz, {"alpha": g_alpha, "log_gamma": g_lg}
        # holomorphic complex Gaussian
        w, k_re, k_im = cache["w"], cache["k_re"], cache["k_im"]
        g_alpha = _complex_assemble(
            _dot_hd(g_out.real, k_re) + _dot_hd(g_out.imag, k_im),
            _dot_hd(g_out.imag, k_re) - _dot_hd(g_out.real, k_im),
        )
        g2 = -2.0 * gamma[None, :, None]
        kw_re = g2 * (k_re * w.real - k_im * w.imag)
        kw_im = g2 * (k_re * w.imag + k_im * w.real)
        du_dz = _pair_dot_bh(kw_re, kw_im, alpha)
        gz = g_out * np.conj(du_dz)
        w2_re, w2_im = w.real * w.real - w.imag * w.imag, 2.0 * (w.real * w.imag)
        gm = -gamma[None, :, None]
        u_t = _pair_dot_bh(gm * (k_re * w2_re - k_im * w2_im),
                           gm * (k_re * w2_im + k_im * w2_re), alpha)
        g_lg = np.sum((np.conj(g_out) * u_t).real, axis=0)
        return gz, {"alpha": g_alpha, "log_gamma": g_lg}


@dataclass(frozen=True)
class WlKafCase1Activation(_KafBase):
    """Widely linear activation, separate bandwidths per response part."""

    name: str = field(init=False, default="wlkaf_case1")

    def __post_init__(self):
        object.__setattr__(self, "name", "wlkaf_case1")

    def spec_dict(self) -> dict:
        return {"variant": "wlkaf_case1"}

    def init_params(self, width, dictionary, rng, alpha_init="identity", ridge=1e-4):
        g0 = gamma_rule_of_thumb(dictionary)
        # equal initial bandwidths: the pseudo-kernel starts at exactly zero,
        # so the identity fit through the plain kernel is exact for the WL map
        alpha = self._init_alpha_rows(
            width, dictionary, rng, alpha_init, ridge,
            lambda: init_alpha(dictionary, "real_gaussian", g0, ridge=ridge),
        )
        lg = np.full(width, np.log(g0), dtype=np.float64)
        return {"alpha": alpha.astype(np.complex128),
                "log_gamma_rr": lg.copy(), "log_gamma_ii": lg.copy()}

    def forward(self, z, params, dictionary):
        alpha = params["alpha"]
        g_rr = np.exp(params["log_gamma_rr"])
        g_ii = np.exp(params["log_gamma_ii"])
        m = dictionary.points_per_axis
        ar, bi = _axis_offsets(z, dictionary)
        # u = k@alpha + kt@conj(alpha) = sum krr*Re(alpha) + i*kii*Im(alpha):
        # the 0.5 factors cancel against the conjugate pairing, so each
        # response part sees only its own (separable) kernel
        ea_rr = np.exp(-g_rr[None, :, None] * (ar * ar))
        eb_rr = np.exp(-g_rr[None, :, None] * (bi * bi))
        ea_ii = np.exp(-g_ii[None, :, None] * (ar * ar))
        eb_ii = np.exp(-g_ii[None, :, None] * (bi * bi))
        a_re = np.ascontiguousarray(alpha.real).reshape(-1, m, m)
        a_im = np.ascontiguousarray(alpha.imag).reshape(-1, m, m)
        out = _complex_assemble(
            _bilinear(eb_rr, a_re, ea_rr), _bilinear(eb_ii, a_im, ea_ii)
        )
        cache = {"ar": ar, "bi": bi, "ea_rr": ea_rr, "eb_rr": eb_rr,
                 "ea_ii": ea_ii, "eb_ii": eb_ii, "a_re": a_re, "a_im": a_im,
                 "g_rr": g_rr, "g_ii": g_ii}
        return out, cache

    def backward(self, g_out, cache, params, dictionary):
        ar, bi = cache["ar"], cache["bi"]
        ea_rr, eb_rr = cache["ea_rr"], cache["eb_rr"]
        ea_ii, eb_ii = cache["ea_ii"], cache["eb_ii"]
        a_re, a_im = cache["a_re"], cache["a_im"]
        g_rr, g_ii = cache["g_rr"], cache["g_ii"]
        m = dictionary.points_per_axis
        g_alpha = _complex_assemble(
            _outer_hd(g_out.real[:, :, None] * eb_rr, ea_rr).reshape(-1, m * m),
            _outer_hd(g_out.imag[:, :, None] * eb_ii, ea_ii).reshape(-1, m * m),
        )
        # first moments of each kernel against its coefficient part
        crr_re = _bilinear(eb_rr, a_re, ar * ea_rr)
        crr_im = _bilinear(bi * eb_rr, a_re, ea_rr)
        cii_re = _bilinear(eb_ii, a_im, ar * ea_ii)
        cii_im = _bilinear(bi * eb_ii, a_im, ea_ii)
        # du/dz = -g_rr*(crr_re - i*crr_im) - i*g_ii*(cii_re - i*cii_im)
        grr = g_rr[None, :]
        gii = g_ii[None, :]
        du_dz = _complex_assemble(
            -grr * crr_re - gii * cii_im, grr * crr_im - gii * cii_re
        )
        du_dzstar = _complex_assemble(
            -grr * crr_re + gii * cii_im, -(grr * crr_im + gii * cii_re)
        )
        cg = np.conj(g_out)
        gz = cg * du_dzstar + g_out * np.conj(du_dz)
        # du/d(log g_rr) is real, du/d(log g_ii) purely imaginary
        du_drr = -grr * (_bilinear(eb_rr, a_re, (ar * ar) * ea_rr)
                         + _bilinear((bi * bi) * eb_rr, a_re, ea_rr))
        du_dii = -gii * (_bilinear(eb_ii, a_im, (ar * ar) * ea_ii)
                         + _bilinear((bi * bi) * eb_ii, a_im, ea_ii))
        g_lg_rr = np.sum(g_out.real * du_drr, axis=0)
        g_lg_ii = np.sum(g_out.imag * du_dii, axis=0)
        return gz, {"alpha": g_alpha, "log_gamma_rr": g_lg_rr, "log_gamma_ii": g_lg_ii}


@dataclass(frozen=True)
class WlKafCase2Activation(_KafBase):
    """Widely linear activation from separable kernels with fixed mixing."""

    q: int = 1
    omegas: tuple[float, ...] = (0.3,)
    name: str = field(init=False, default="wlkaf_case2")

    def __post_init__(self):
        if self.q < 1 or len(self.omegas) != self.q:
            raise ParameterError(f"need q >= 1 mixing weights, got q={self.q}, {self.omegas}")
        if any(not 0.0 < w < 1.0 for w in self.omegas):
            raise ParameterError(f"mixing weights must lie in (0, 1), got {self.omegas}")
        object.__setattr__(self, "name", "wlkaf_case2")

    def spec_dict(self) -> dict:
        return {"variant": "wlkaf_case2", "q": self.q, "omegas": list(self.omegas)}

    def init_params(self, width, dictionary, rng, alpha_init="identity", ridge=1e-4):
        g0 = gamma_rule_of_thumb(dictionary)
        g_vec = np.full(self.q, g0)
        alpha = self._init_alpha_rows(
            width, dictionary, rng, alpha_init, ridge,
            lambda: init_alpha_wl_case2(
                dictionary, g_vec, g_vec, np.asarray(self.omegas), ridge=ridge
            ),
        )
        lg = np.full((width, self.q), np.log(g0), dtype=np.float64)
        return {"alpha": alpha.astype(np.complex128),
                "log_gamma": lg.copy(), "log_gamma_tilde": lg.copy()}

    def forward(self, z, params, dictionary):
        alpha = params["alpha"]
        gam = np.exp(params["log_gamma"])  # (H, Q)
        gam_t = np.exp(params["log_gamma_tilde"])  # (H, Q)
        om = np.asarray(self.omegas)
        m = dictionary.points_per_axis
        ar, bi = _axis_offsets(z, dictionary)
        a2, b2 = ar * ar, bi * bi
        ea = [np.exp(-gam[None, :, q, None] * a2) for q in range(self.q)]
        eb = [np.exp(-gam[None, :, q, None] * b2) for q in range(self.q)]
        ea_t = [np.exp(-gam_t[None, :, q, None] * a2) for q in range(self.q)]
        eb_t = [np.exp(-gam_t[None, :, q, None] * b2) for q in range(self.q)]
        a_re = np.ascontiguousarray(alpha.real).reshape(-1, m, m)
        a_im = np.ascontiguousarray(alpha.imag).reshape(-1, m, m)
        # out = k@alpha + 2i*(w@conj(alpha)) with k = sum_q K_q (real) and
        # w = sum_q om_q * Kt_q (real)
        out_re = _bilinear(eb[0], a_re, ea[0])
        out_im = _bilinear(eb[0], a_im, ea[0])
        for q in range(1, self.q):
            out_re += _bilinear(eb[q], a_re, ea[q])
            out_im += _bilinear(eb[q], a_im, ea[q])
        for q in range(self.q):
            out_re += (2.0 * om[q]) * _bilinear(eb_t[q], a_im, ea_t[q])
            out_im += (2.0 * om[q]) * _bilinear(eb_t[q], a_re, ea_t[q])
        out = _complex_assemble(out_re, out_im)
        cache = {"ar": ar, "bi": bi, "ea": ea, "eb": eb, "ea_t": ea_t,
                 "eb_t": eb_t, "a_re": a_re, "a_im": a_im,
                 "gam": gam, "gam_t": gam_t}
        return out, cache

    def backward(self, g_out, cache, params, dictionary):
        ar, bi = cache["ar"], cache["bi"]
        ea, eb = cache["ea"], cache["eb"]
        ea_t, eb_t = cache["ea_t"], cache["eb_t"]
        a_re, a_im = cache["a_re"], cache["a_im"]
        gam, gam_t = cache["gam"], cache["gam_t"]
        om = np.asarray(self.omegas)
        m = dictionary.points_per_axis
        h = a_re.shape[0]
        agrid = params["alpha"].reshape(h, m, m)
        cg = np.conj(g_out)
        a2, b2 = ar * ar, bi * bi
        # G_alpha = sum_b g*k + 2i*conj(g)*w, accumulated per component
        ga_re = np.zeros((h, m, m))
        ga_im = np.zeros((h, m, m))
        for q in range(self.q):
            ga_re += _outer_hd(g_out.real[:, :, None] * eb[q], ea[q])
            ga_im += _outer_hd(g_out.imag[:, :, None] * eb[q], ea[q])
            ga_re += (2.0 * om[q]) * _outer_hd(g_out.imag[:, :, None] * eb_t[q], ea_t[q])
            ga_im += (2.0 * om[q]) * _outer_hd(g_out.real[:, :, None] * eb_t[q], ea_t[q])
        g_alpha = _complex_assemble(ga_re.reshape(h, -1), ga_im.reshape(h, -1))
        # z cogradient: du/dz = -sum_q g_q*(C_q - i*S_q)
        #                      -2i*sum_q om_q*gt_q*conj(T_q + i*U_q)
        du_dz = np.zeros_like(g_out)
        du_dzstar = np.zeros_like(g_out)
        g_lg = np.empty((h, self.q))
        g_lgt = np.empty((h, self.q))
        for q in range(self.q):
            gq = gam[None, :, q]
            gtq = gam_t[None, :, q]
            c_q = _bilinear_c(eb[q], agrid, ar * ea[q])
            s_q = _bilinear_c(bi * eb[q], agrid, ea[q])
            du_dz += -gq * (c_q - 1j * s_q)
            du_dzstar += -gq * (c_q + 1j * s_q)
            t_q = _bilinear_c(eb_t[q], agrid, ar * ea_t[q])
            u_q = _bilinear_c(bi * eb_t[q], agrid, ea_t[q])
            du_dz += (-2j * om[q]) * gtq * np.conj(t_q + 1j * u_q)
            du_dzstar += (-2j * om[q]) * gtq * np.conj(t_q - 1j * u_q)
            # bandwidth gradients via second moments
            v_q = (_bilinear_c(eb[q], agrid, a2 * ea[q])
                   + _bilinear_c(b2 * eb[q], agrid, ea[q]))
            g_lg[:, q] = -gam[:, q] * np.sum((cg * v_q).real, axis=0)
            vt_q = (_bilinear_c(eb_t[q], agrid, a2 * ea_t[q])
                    + _bilinear_c(b2 * eb_t[q], agrid, ea_t[q]))
            contrib = g_out.real * vt_q.imag + g_out.imag * vt_q.real
            g_lgt[:, q] = -2.0 * om[q] * gam_t[:, q] * np.sum(contrib, axis=0)
        gz = cg * du_dzstar + g_out * np.conj(du_dz)
        return gz, {"alpha": g_alpha, "log_gamma": g_lg, "log_gamma_tilde": g_lgt}


ACTIVATION_VARIANTS: dict[str, Callable[[], object]] = {
    "split_tanh": lambda: SplitActivation("tanh"),
    "split_identity": lambda: SplitActivation("identity"),
    "phase_amplitude": PhaseAmplitudeActivation,
    "kaf_real_gaussian": lambda: KafActivation("real_gaussian"),
    "kaf_independent": lambda: KafActivation("independent"),
    "kaf_complex_gaussian": lambda: KafActivation("complex_gaussian"),
    "wlkaf_case1": WlKafCase1Activation,
    "wlkaf_case2": WlKafCase2Activation,
}


def activation_from_spec(spec: dict):
    """Rebuild an activation descriptor from its ``spec_dict`` form."""
    variant = spec["variant"]
    if variant == "split":
        return SplitActivation(spec["fn"])
    if variant == "phase_amplitude":
        return PhaseAmplitudeActivation()
    if variant == "kaf":
        return KafActivation(spec["kernel"])
    if variant == "wlkaf_case1":
        return WlKafCase1Activation()
    if variant == "wlkaf_case2":
        return WlKafCase2Activation(spec["q"], tuple(spec["omegas"]))
    raise ParameterError(f"unknown activation variant {variant!r}")
