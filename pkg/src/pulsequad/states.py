"""Truncated-Fock-basis quantum states and their quadrature statistics.

Conventions used throughout: the quadrature operator at local-oscillator
phase ``theta`` is ``X_theta = X cos(theta) + P sin(theta)`` with vacuum
variance 1/2, so a coherent state ``alpha`` has mean quadrature
``sqrt(2)*|alpha|*cos(theta - arg(alpha))``.  Wigner functions are
normalized to unit integral over the (X, P) plane, which puts the vacuum
at ``W(0, 0) = 1/pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre

__all__ = [
    "DensityMatrix",
    "StateModel",
    "WignerGrid",
    "PhotonStatistics",
    "fock_wavefunction",
    "fock_wavefunctions",
    "coherent_amplitudes",
    "quadrature_pdf",
    "loss_kraus",
    "loss_channel",
    "apply_loss_adjoint",
    "state_density_matrix",
    "wigner",
    "photon_statistics",
    "fidelity_pure",
]

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_TOL = -1e-8


@dataclass(frozen=True)
class DensityMatrix:
    """Density matrix in the number basis, truncated at ``dim`` photons.

    The constructor enforces Hermiticity, unit trace and positive
    semidefiniteness (up to small numerical tolerances); use
    :meth:`from_array` to clean up an almost-valid matrix first.
    """

    elements: np.ndarray

    def __post_init__(self):
        arr = np.array(self.elements, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise ValueError("density matrix must be a square matrix")
        if not np.all(np.isfinite(arr.view(float))):
            raise ValueError("density matrix contains non-finite entries")
        if np.max(np.abs(arr - arr.conj().T)) >= HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(arr.trace().real - 1.0) >= TRACE_TOL:
            raise ValueError("density matrix trace differs from one")
        if np.linalg.eigvalsh(arr).min() <= EIGENVALUE_TOL:
            raise ValueError("density matrix has a significantly negative eigenvalue")
        arr.setflags(write=False)
        object.__setattr__(self, "elements", arr)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @classmethod
    def from_array(cls, arr) -> "DensityMatrix":
        """Hermitize and renormalize ``arr`` before validating it."""
        a = np.asarray(arr, dtype=complex)
        a = 0.5 * (a + a.conj().T)
        tr = a.trace().real
        if tr <= 0:
            raise ValueError("matrix trace must be positive")
        return cls(a / tr)


@dataclass(frozen=True)
class StateModel:
    """Parametric description of a signal state plus a loss channel.

    ``kind`` is one of ``vacuum``, ``coherent``, ``fock`` or ``mixture``;
    ``efficiency`` is applied as a photon-loss channel when the state is
    realized as a density matrix.
    """

    kind: str
    alpha: complex = 0j
    n: int = 0
    weights: tuple = ()
    components: tuple = ()
    efficiency: float = 1.0

    def __post_init__(self):
        if self.kind not in ("vacuum", "coherent", "fock", "mixture"):
            raise ValueError(f"unknown state kind {self.kind!r}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.kind == "fock" and (self.n < 0 or self.n != int(self.n)):
            raise ValueError("fock photon number must be a nonnegative integer")
        if self.kind == "mixture":
            w = np.asarray(self.weights, dtype=float)
            if len(self.components) != w.size or w.size == 0:
                raise ValueError("mixture needs matching weights and components")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("mixture weights must be nonnegative and sum to one")

    @classmethod
    def vacuum(cls, efficiency: float = 1.0) -> "StateModel":
        return cls(kind="vacuum", efficiency=efficiency)

    @classmethod
    def coherent(cls, alpha, efficiency: float = 1.0) -> "StateModel":
        return cls(kind="coherent", alpha=complex(alpha), efficiency=efficiency)

    @classmethod
    def fock(cls, n: int, efficiency: float = 1.0) -> "StateModel":
        return cls(kind="fock", n=int(n), efficiency=efficiency)

    @classmethod
    def mixture(cls, weights, components, efficiency: float = 1.0) -> "StateModel":
        return cls(
            kind="mixture",
            weights=tuple(float(w) for w in weights),
            components=tuple(components),
            efficiency=efficiency,
        )


@dataclass(frozen=True)
class WignerGrid:
    """Wigner function sampled on a rectangular (x, p) grid."""

    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # shape (len(x_axis), len(p_axis))


@dataclass(frozen=True)
class PhotonStatistics:
    """Photon-number probabilities P(n) for n = 0 .. dim-1."""

    probs: np.ndarray


def fock_wavefunctions(cutoff: int, x) -> np.ndarray:
    """Stack of oscillator eigenfunctions ``psi_n(x)`` for n < cutoff.

    Uses the stable two-term recurrence
    ``psi_{n+1} = x sqrt(2/(n+1)) psi_n - sqrt(n/(n+1)) psi_{n-1}``
    seeded with ``psi_0 = pi**-0.25 exp(-x^2/2)``.

    Returns an array of shape ``(cutoff, len(x))``.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    psi = np.empty((cutoff, x.size))
    psi[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if cutoff > 1:
        psi[1] = math.sqrt(2.0) * x * psi[0]
    for n in range(1, cutoff - 1):
        psi[n + 1] = x * math.sqrt(2.0 / (n + 1)) * psi[n] - math.sqrt(
            n / (n + 1)
        ) * psi[n - 1]
    return psi


def fock_wavefunction(n: int, x):
    """Real amplitude ``psi_n(x)`` of the n-photon quadrature wavefunction."""
    if n < 0:
        raise ValueError("photon number must be nonnegative")
    scalar = np.isscalar(x)
    out = fock_wavefunctions(n + 1, x)[n]
    return float(out[0]) if scalar else out


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    """Number-basis amplitudes of ``|alpha>`` renormalized at the cutoff."""
    a = complex(alpha)
    if a == 0:
        vec = np.zeros(cutoff, dtype=complex)
        vec[0] = 1.0
        return vec
    n = np.arange(cutoff)
    logfact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, cutoff)))))
    vec = np.exp(n * np.log(abs(a)) - 0.5 * logfact) * np.exp(1j * n * np.angle(a))
    vec /= np.linalg.norm(vec)
    return vec


def quadrature_pdf(rho: DensityMatrix, theta: float, x):
    """Probability density of the quadrature at LO phase ``theta``.

    ``p(x|theta) = sum_mn rho_mn exp(i(n-m)theta) psi_m(x) psi_n(x)``,
    clamped at zero against numerical round-off.
    """
    scalar = np.isscalar(x)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    psi = fock_wavefunctions(rho.dim, xs)
    phase = np.exp(1j * np.arange(rho.dim) * theta)
    rotated = (phase.conj()[:, None] * rho.elements) * phase[None, :]
    p = np.einsum("mx,mn,nx->x", psi, rotated, psi).real
    p = np.maximum(p, 0.0)
    return float(p[0]) if scalar else p


def loss_kraus(dim: int, eta: float) -> np.ndarray:
    """Kraus operators of the photon-loss (Bernoulli) channel at ``dim``.

    ``K[k]`` maps ``|n>`` to ``sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k>``.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    ks = np.zeros((dim, dim, dim))
    for k in range(dim):
        for n in range(k, dim):
            ks[k, n - k, n] = math.sqrt(
                math.comb(n, k) * eta ** (n - k) * (1.0 - eta) ** k
            )
    return ks


def loss_channel(rho: DensityMatrix, eta: float) -> DensityMatrix:
    """Transmit ``rho`` through a beamsplitter of transmissivity ``eta``."""
    if eta == 1.0:
        return rho
    ks = loss_kraus(rho.dim, eta)
    out = np.einsum("kmi,ij,knj->mn", ks, rho.elements, ks)
    return DensityMatrix.from_array(out)


def apply_loss_adjoint(op: np.ndarray, eta: float) -> np.ndarray:
    """Heisenberg-picture loss map ``sum_k K_k^T op K_k`` on an observable.

    Composing a measurement operator with this map models detection at
    efficiency ``eta``: ``tr(loss(rho) op) == tr(rho adjoint(op))``.
    """
    if eta == 1.0:
        return np.asarray(op)
    ks = loss_kraus(op.shape[0], eta)
    return np.einsum("kim,ij,kjn->mn", ks, np.asarray(op), ks)


def _bare_density_matrix(state: StateModel, cutoff: int) -> np.ndarray:
    if state.kind == "vacuum":
        vec = np.zeros(cutoff, dtype=complex)
        vec[0] = 1.0
        return np.outer(vec, vec.conj())
    if state.kind == "coherent":
        vec = coherent_amplitudes(state.alpha, cutoff)
        return np.outer(vec, vec.conj())
    if state.kind == "fock":
        if state.n >= cutoff:
            raise ValueError(f"fock({state.n}) does not fit below cutoff {cutoff}")
        vec = np.zeros(cutoff, dtype=complex)
        vec[state.n] = 1.0
        return np.outer(vec, vec.conj())
    # mixture: each component carries its own efficiency
    out = np.zeros((cutoff, cutoff), dtype=complex)
    for w, comp in zip(state.weights, state.components):
        out += w * state_density_matrix(comp, cutoff).elements
    return out


def state_density_matrix(state: StateModel, cutoff: int) -> DensityMatrix:
    """Realize ``state`` at the given Fock cutoff, loss channel included."""
    rho = DensityMatrix.from_array(_bare_density_matrix(state, cutoff))
    if state.efficiency < 1.0:
        rho = loss_channel(rho, state.efficiency)
    return rho


def wigner(rho: DensityMatrix, x_axis, p_axis) -> WignerGrid:
    """Wigner function of ``rho`` on the cartesian grid ``x_axis`` x ``p_axis``.

    Evaluated through the associated-Laguerre closed form of the
    number-basis kernels; the diagonal kernels at the origin alternate as
    ``(-1)^n / pi``, so negativity at the origin witnesses odd-photon
    population.
    """
    x_axis = np.asarray(x_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    X, P = np.meshgrid(x_axis, p_axis, indexing="ij")
    r2 = 2.0 * (X * X + P * P)
    base = np.exp(-(X * X + P * P)) / np.pi
    amp = math.sqrt(2.0) * (X + 1j * P)
    dim = rho.dim
    values = np.zeros_like(X)
    off = np.ones_like(amp)
    for d in range(dim):
        if d > 0:
            off = off * amp
        for m in range(dim - d):
            pref = (-1.0) ** m * math.sqrt(
                math.factorial(m) / math.factorial(m + d)
            )
            kern = pref * eval_genlaguerre(m, d, r2) * base
            if d == 0:
                values += rho.elements[m, m].real * kern
            else:
                values += 2.0 * np.real(rho.elements[m, m + d] * off) * kern
    return WignerGrid(x_axis=x_axis, p_axis=p_axis, values=values)


def photon_statistics(rho: DensityMatrix) -> PhotonStatistics:
    """Photon-number distribution ``P(n) = rho_nn``."""
    probs = np.maximum(np.diag(rho.elements).real, 0.0)
    return PhotonStatistics(probs=probs)


def fidelity_pure(rho: DensityMatrix, target) -> float:
    """Overlap ``<psi|rho|psi>`` with a normalized pure target state."""
    vec = np.asarray(target, dtype=complex)
    if vec.shape != (rho.dim,):
        raise ValueError("target dimension does not match the density matrix")
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError("target state vector must be normalized")
    val = np.real(vec.conj() @ rho.elements @ vec)
    return float(min(max(val, 0.0), 1.0))
