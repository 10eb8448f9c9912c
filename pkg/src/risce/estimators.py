"""Joint channel and RIS-imperfection estimators.

* :func:`tals_lti` -- trilinear ALS for static phase perturbations.
* :func:`tals_sti` -- ALS on the fourth-order model with per-frame
  amplitude/phase perturbations.
* :func:`hosvd_sti` -- closed-form estimator: matched filtering with the known
  patterns followed by one rank-one HOSVD per RIS element.

Plus the genie-aided LS bound, a two-factor ALS that ignores the imperfections,
identifiability checks and scaling-ambiguity removal.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .system_model import ChannelPair, Imperfection, SystemConfig
from .tensor_core import khatri_rao, mode_n_unfold, pseudo_inverse

__all__ = [
    "ALGORITHMS",
    "Factors",
    "Estimate",
    "Identifiability",
    "IdentifiabilityError",
    "check_identifiability",
    "tals_lti",
    "tals_sti",
    "hosvd_sti",
    "clairvoyant_ls",
    "als_no_imperfection_baseline",
    "remove_scaling_ambiguity",
    "truth_factors",
]

ALGORITHMS = ("tals_lti", "tals_sti", "hosvd_sti", "clairvoyant", "baseline")


class IdentifiabilityError(ValueError):
    """Raised when the number of time-blocks is too small for an estimator."""


@dataclass(frozen=True)
class Factors:
    """Channel and imperfection factors.

    ``E`` is an ``N`` vector for the LTI model and a ``P x N`` matrix for STI.
    """

    G: np.ndarray
    H: np.ndarray
    E: np.ndarray

    @property
    def kind(self) -> str:
        return "lti" if np.ndim(self.E) == 1 else "sti"


@dataclass(frozen=True)
class Estimate(Factors):
    residuals: tuple = ()
    iterations: int = 0
    converged: bool = True
    flags: tuple = field(default=())


def truth_factors(channels: ChannelPair, imperfection: Imperfection) -> Factors:
    return Factors(G=channels.G, H=channels.H, E=imperfection.values)


class Identifiability(NamedTuple):
    ok: bool
    k_min: int
    requirement: str


def _model_kind(cfg, kind):
    if kind is None:
        kind = "lti" if cfg.P == 1 else "sti"
    if kind not in ("lti", "sti"):
        raise ValueError(f"model kind must be 'lti' or 'sti', got {kind!r}")
    return kind


def check_identifiability(cfg: SystemConfig, algorithm: str, kind: str | None = None) -> Identifiability:
    """Minimum number of time-blocks ``K`` for unique LS updates.

    ``kind`` selects the model for ``clairvoyant`` and ``baseline``; it
    defaults to LTI when ``P == 1``.
    """
    M, L, N, P, K = cfg.M, cfg.L, cfg.N, cfg.P, cfg.K
    if algorithm == "tals_lti":
        kind = "lti"
    elif algorithm in ("tals_sti", "hosvd_sti"):
        kind = "sti"
    elif algorithm in ("clairvoyant", "baseline"):
        kind = _model_kind(cfg, kind)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")

    if algorithm == "hosvd_sti":
        k_min, req = N, "K >= N"
    elif algorithm == "baseline":
        # only the two channel updates are solved
        if kind == "lti":
            k_min, req = math.ceil(N / min(L, M)), "K >= ceil(N / min(L, M))"
        else:
            k_min, req = math.ceil(N / min(M * P, L * P)), "K >= ceil(N / min(MP, LP))"
    elif kind == "lti":
        k_min, req = math.ceil(N / min(L, M)), "K >= ceil(N / min(L, M))"
    else:
        k_min, req = math.ceil(N / min(M * P, L * P, L * M)), "K >= ceil(N / min(MP, LP, LM))"
    return Identifiability(ok=K >= k_min, k_min=k_min, requirement=req)


def _crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _sqnorm(A):
    return float(np.vdot(A, A).real)


def _as_rx(Y):
    return np.asarray(getattr(Y, "Y", Y), dtype=complex)


def _check_patterns(S, K, N=None):
    S = np.asarray(S, dtype=complex)
    if S.ndim != 2 or S.shape[0] != K or (N is not None and S.shape[1] != N):
        raise ValueError(f"pattern matrix shape {S.shape} inconsistent with K={K}")
    return S


def _lti_design(S, A, e):
    """``(diag(e) (S ⋄ A)^T)`` as an ``N x K*rows(A)`` matrix."""
    return (khatri_rao(S, A) * e[None, :]).T


def _run_lti(Y, S, delta, max_iters, rng, init, update_e):
    Y = _as_rx(Y)
    if Y.ndim != 3:
        raise ValueError(f"LTI estimation needs an L x M x K tensor, got shape {Y.shape}")
    L, M, K = Y.shape
    S = _check_patterns(S, K)
    N = S.shape[1]
    Y1 = mode_n_unfold(Y, 1)
    Y2 = mode_n_unfold(Y, 2)
    y = Y1.reshape(-1, order="F")

    init = dict(init or {})
    rng = rng if rng is not None else np.random.default_rng()
    H = np.asarray(init["H"], dtype=complex) if "H" in init else _crandn(rng, (M, N))
    if not update_e:
        e = np.ones(N, dtype=complex)
    elif "E" in init:
        e = np.asarray(init["E"], dtype=complex).reshape(N)
    else:
        e = _crandn(rng, N)
    if "G" in init:
        G = np.asarray(init["G"], dtype=complex)
        prev = _sqnorm(Y1 - G @ _lti_design(S, H, e))
    else:
        G = np.zeros((L, N), dtype=complex)
        prev = _sqnorm(Y1)

    residuals = []
    converged = False
    for _ in range(max_iters):
        G = Y1 @ pseudo_inverse(_lti_design(S, H, e))
        H = Y2 @ pseudo_inverse(_lti_design(S, G, e))
        if update_e:
            e = pseudo_inverse(khatri_rao(S, H, G)) @ y
        eps = _sqnorm(Y1 - G @ _lti_design(S, H, e))
        residuals.append(eps)
        if abs(eps - prev) <= delta:
            converged = True
            break
        prev = eps
    flags = () if converged else ("max_iters",)
    return Estimate(G=G, H=H, E=e, residuals=tuple(residuals), iterations=len(residuals),
                    converged=converged, flags=flags)


def _run_sti(Y, S, delta, max_iters, rng, init, update_e):
    Y = _as_rx(Y)
    if Y.ndim != 4:
        raise ValueError(f"STI estimation needs an L x M x K x P tensor, got shape {Y.shape}")
    L, M, K, P = Y.shape
    S = _check_patterns(S, K)
    N = S.shape[1]
    Y1 = mode_n_unfold(Y, 1)
    Y2 = mode_n_unfold(Y, 2)
    Y4 = mode_n_unfold(Y, 4)

    init = dict(init or {})
    rng = rng if rng is not None else np.random.default_rng()
    H = np.asarray(init["H"], dtype=complex) if "H" in init else _crandn(rng, (M, N))
    if not update_e:
        E = np.ones((P, N), dtype=complex)
    elif "E" in init:
        E = np.asarray(init["E"], dtype=complex).reshape(P, N)
    else:
        E = _crandn(rng, (P, N))
    if "G" in init:
        G = np.asarray(init["G"], dtype=complex)
        prev = _sqnorm(Y1 - G @ khatri_rao(E, S, H).T)
    else:
        G = np.zeros((L, N), dtype=complex)
        prev = _sqnorm(Y1)

    residuals = []
    converged = False
    for _ in range(max_iters):
        G = Y1 @ pseudo_inverse(khatri_rao(E, S, H).T)
        H = Y2 @ pseudo_inverse(khatri_rao(E, S, G).T)
        if update_e:
            E = Y4 @ pseudo_inverse(khatri_rao(S, H, G).T)
        eps = _sqnorm(Y1 - G @ khatri_rao(E, S, H).T)
        residuals.append(eps)
        if abs(eps - prev) <= delta:
            converged = True
            break
        prev = eps
    flags = () if converged else ("max_iters",)
    return Estimate(G=G, H=H, E=E, residuals=tuple(residuals), iterations=len(residuals),
                    converged=converged, flags=flags)


def tals_lti(Y, S, *, delta=1e-6, max_iters=500, rng=None, init=None) -> Estimate:
    """Estimate ``G``, ``H`` and ``e`` from an ``L x M x K`` received tensor.

    Each iteration solves, in turn, the LS problems for ``G`` (mode-1
    unfolding), ``H`` (mode-2 unfolding) and ``e`` (vectorised mode-1
    unfolding), then stops once the squared mode-1 residual changes by at most
    ``delta``.

    Parameters
    ----------
    Y : ndarray or RxTensor
        Received signal tensor.
    S : ndarray, shape (K, N)
        Known RIS activation patterns.
    delta : float
        Absolute threshold on the change of the residual.
    max_iters : int
        Iteration cap; hitting it sets ``converged=False``.
    rng : numpy.random.Generator, optional
        Source for the random initialisation of ``H`` and ``e``.
    init : dict, optional
        Starting values for any of ``"G"``, ``"H"``, ``"E"``.  When ``"G"``
        is given the starting residual is evaluated from the initial model,
        otherwise it is ``||Y||^2``.
    """
    return _run_lti(Y, S, delta, max_iters, rng, init, update_e=True)


def tals_sti(Y, S, *, delta=1e-6, max_iters=500, rng=None, init=None) -> Estimate:
    """Estimate ``G``, ``H`` and ``E`` from an ``L x M x K x P`` received tensor.

    Same structure as :func:`tals_lti` with the ``E`` update taken from the
    mode-4 unfolding.
    """
    return _run_sti(Y, S, delta, max_iters, rng, init, update_e=True)


def als_no_imperfection_baseline(Y, S, *, delta=1e-6, max_iters=500, rng=None, init=None) -> Estimate:
    """Two-factor ALS that assumes an ideal RIS (imperfections frozen at one).

    Dispatches on the tensor order: order 3 for LTI data, order 4 for STI.
    """
    Y = _as_rx(Y)
    run = _run_lti if Y.ndim == 3 else _run_sti
    return run(Y, S, delta, max_iters, rng, init, update_e=False)


def _principal_cbrt(z):
    return abs(z) ** (1.0 / 3.0) * np.exp(1j * np.angle(z) / 3.0)


def rank_one_hosvd(T):
    """Rank-one truncation of the HOSVD of a third-order tensor.

    Returns ``(a, b, c)`` with ``a ∘ b ∘ c`` the truncated approximation; the
    core entry is split evenly through its principal cube root.
    """
    us = []
    for mode in (1, 2, 3):
        U, _, _ = np.linalg.svd(mode_n_unfold(T, mode), full_matrices=False)
        us.append(U[:, 0])
    core = np.einsum("lmp,l,m,p->", T, us[0].conj(), us[1].conj(), us[2].conj())
    scale = _principal_cbrt(core)
    return scale * us[0], scale * us[1], scale * us[2]


def hosvd_sti(Y, S, *, workers=1) -> Estimate:
    """Closed-form STI estimator.

    The received tensor is first filtered with the known patterns,
    ``Ytil = [Y]_(3)^T (S^T)^+``, whose ``n``-th column is ``e_n ⊗ h_n ⊗ g_n``.
    Each column is rearranged into an ``L x M x P`` rank-one tensor and
    truncated HOSVD gives ``g_n``, ``h_n`` and ``e_n``.  The ``N`` rank-one
    problems are independent; ``workers > 1`` runs them on a thread pool with
    results ordered by column index.
    """
    Y = _as_rx(Y)
    if Y.ndim != 4:
        raise ValueError(f"HOSVD-STI needs an L x M x K x P tensor, got shape {Y.shape}")
    L, M, K, P = Y.shape
    S = _check_patterns(S, K)
    N = S.shape[1]
    if K < N:
        raise IdentifiabilityError(f"hosvd_sti needs K >= N, got K={K}, N={N}")
    Ytil = mode_n_unfold(Y, 3).T @ pseudo_inverse(S.T)

    def solve(n):
        col = Ytil[:, n]
        if not np.any(col):
            return np.zeros(L, complex), np.zeros(M, complex), np.zeros(P, complex), True
        g, h, e = rank_one_hosvd(col.reshape((L, M, P), order="F"))
        return g, h, e, False

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(solve, range(N)))
    else:
        cols = [solve(n) for n in range(N)]

    G = np.stack([c[0] for c in cols], axis=1)
    H = np.stack([c[1] for c in cols], axis=1)
    E = np.stack([c[2] for c in cols], axis=1)
    flags = tuple(f"zero_column:{n}" for n, c in enumerate(cols) if c[3])
    return Estimate(G=G, H=H, E=E, residuals=(), iterations=0, converged=True, flags=flags)


def clairvoyant_ls(Y, S, truth: Factors, factors=("G", "H", "E")) -> Estimate:
    """Genie-aided LS: each requested factor solved with the others set to truth.

    Factors not listed in ``factors`` are returned as the true values.
    """
    Y = _as_rx(Y)
    G, H, E = (np.asarray(x, dtype=complex) for x in (truth.G, truth.H, truth.E))
    out = {"G": G, "H": H, "E": E}
    S = _check_patterns(S, Y.shape[2])
    if Y.ndim == 3:
        if E.ndim != 1:
            raise ValueError("order-3 data needs an LTI imperfection vector")
        Y1 = mode_n_unfold(Y, 1)
        if "G" in factors:
            out["G"] = Y1 @ pseudo_inverse(_lti_design(S, H, E))
        if "H" in factors:
            out["H"] = mode_n_unfold(Y, 2) @ pseudo_inverse(_lti_design(S, G, E))
        if "E" in factors:
            out["E"] = pseudo_inverse(khatri_rao(S, H, G)) @ Y1.reshape(-1, order="F")
    elif Y.ndim == 4:
        if E.ndim != 2:
            raise ValueError("order-4 data needs a P x N imperfection matrix")
        if "G" in factors:
            out["G"] = mode_n_unfold(Y, 1) @ pseudo_inverse(khatri_rao(E, S, H).T)
        if "H" in factors:
            out["H"] = mode_n_unfold(Y, 2) @ pseudo_inverse(khatri_rao(E, S, G).T)
        if "E" in factors:
            out["E"] = mode_n_unfold(Y, 4) @ pseudo_inverse(khatri_rao(S, H, G).T)
    else:
        raise ValueError(f"received tensor must be order 3 or 4, got shape {Y.shape}")
    return Estimate(G=out["G"], H=out["H"], E=out["E"], iterations=1)


def _ls_scale(estimate_col, truth_col):
    """Scalar ``lam`` minimising ``||truth - lam * estimate||``; None for a zero column."""
    den = np.vdot(estimate_col, estimate_col).real
    if den == 0.0:
        return None
    return np.vdot(estimate_col, truth_col) / den


def _balanced_scale(h_hat, h, g_hat, g, lam_h, mu_g):
    """Scale ``lam`` for ``(lam * h_hat, g_hat / lam)`` splitting the misfit evenly.

    Of the two square roots of ``lam_h / mu_g`` the one with the smaller sum
    of normalised errors is returned.
    """
    root = np.sqrt(lam_h / mu_g)
    nh, ng = np.vdot(h, h).real, np.vdot(g, g).real

    def cost(lam):
        return (np.linalg.norm(h - lam * h_hat) ** 2 / nh
                + np.linalg.norm(g - g_hat / lam) ** 2 / ng)

    return min((root, -root), key=cost)


def remove_scaling_ambiguity(
    estimate: Factors,
    reference: Factors | None = None,
    *,
    pin_imperfection=True,
    coupling="joint",
):
    """Resolve the per-column scaling ambiguity of ``(G, H, E)``.

    With a ``reference`` (simulation truth), each column of ``H`` and ``G`` is
    scaled by its LS-optimal complex factor against the truth and the product
    of the inverse factors is pushed into the matching column of ``E``
    (``coupling="joint"``).  Two other couplings cover estimators outside
    that ambiguity class:

    ``"reciprocal"``
        ``E`` is a fixed assumption rather than an estimate (the ideal-RIS
        baseline), so only ``(lam, 1/lam)`` scalings of ``H`` and ``G`` are
        allowed and ``E`` is left untouched.
    ``"independent"``
        The factors come from separate solves (the clairvoyant bound).  ``H``
        and ``G`` each get their own LS scale per column; ``E`` was solved
        against the true channels, so its scale is already fixed and it is
        left untouched.

    Without a reference, each column of ``H`` is scaled to unit norm with its
    first non-zero entry real and positive, the inverse scale moves to ``G``,
    and (STI, ``pin_imperfection``) each column of ``E`` is divided by its
    first-frame entry, that factor moving to ``G``.  Columns that cannot be
    normalised are left unchanged and reported in ``flags``.

    Column permutations are never adjusted: the known patterns fix the order.
    """
    G = np.array(estimate.G, dtype=complex)
    H = np.array(estimate.H, dtype=complex)
    E = np.array(estimate.E, dtype=complex)
    N = H.shape[1]
    flags = list(getattr(estimate, "flags", ()))
    if coupling not in ("joint", "reciprocal", "independent"):
        raise ValueError(f"coupling must be 'joint', 'reciprocal' or 'independent', got {coupling!r}")

    if reference is not None:
        if G.shape != np.shape(reference.G) or H.shape != np.shape(reference.H) or E.shape != np.shape(reference.E):
            raise ValueError("estimate and reference factor shapes differ")
        for n in range(N):
            lam = _ls_scale(H[:, n], reference.H[:, n])
            mu = _ls_scale(G[:, n], reference.G[:, n])
            if lam is None or mu is None or lam == 0 or mu == 0:
                flags.append(f"zero_column:{n}")
                continue
            if coupling == "joint":
                H[:, n] *= lam
                G[:, n] *= mu
                E[..., n] /= lam * mu
            elif coupling == "reciprocal":
                lam = _balanced_scale(H[:, n], reference.H[:, n], G[:, n], reference.G[:, n], lam, mu)
                H[:, n] *= lam
                G[:, n] /= lam
            else:
                H[:, n] *= lam
                G[:, n] *= mu
    else:
        for n in range(N):
            h = H[:, n]
            nz = np.flatnonzero(np.abs(h) > 0)
            if nz.size == 0:
                flags.append(f"zero_column:{n}")
                continue
            c = np.linalg.norm(h) * h[nz[0]] / abs(h[nz[0]])
            H[:, n] /= c
            G[:, n] *= c
            if pin_imperfection and E.ndim == 2:
                d = E[0, n]
                if abs(d) > 1e-12 * max(np.abs(E[:, n]).max(), 1e-300):
                    E[:, n] /= d
                    G[:, n] *= d

    if isinstance(estimate, Estimate):
        return replace(estimate, G=G, H=H, E=E, flags=tuple(flags))
    return Factors(G=G, H=H, E=E)
