"""Pure-numpy kernel backend. Reference semantics for the compiled core."""

import numpy as np


def cascade(phases: np.ndarray, w_inter: np.ndarray) -> np.ndarray:
    """Cascaded beamforming matrix of one metasurface stack.

    phases : (M, N) float64, per-layer per-atom phase shifts in [0, 2pi)
    w_inter : (M-1, N, N) complex128, layer-to-layer transmission matrices

    Returns the N x N product  diag(e^{j phi_M}) W_M ... W_2 diag(e^{j phi_1}),
    evaluated right to left. With M = 1 this is just the diagonal phase matrix.
    """
    m_layers, n = phases.shape
    out = np.diag(np.exp(1j * phases[0])).astype(np.complex128)
    for m in range(1, m_layers):
        out = w_inter[m - 1] @ out
        out = np.exp(1j * phases[m])[:, None] * out
    return out


def cascade_apply(phases: np.ndarray, w_inter: np.ndarray,
                  w_first: np.ndarray) -> np.ndarray:
    """Cascade applied to the feed matrix: returns G @ w_first, shape (N, M_AP).

    Cheaper than forming G when only the antenna-to-last-layer response is
    needed (every environment step and codebook evaluation).
    """
    m_layers = phases.shape[0]
    out = np.exp(1j * phases[0])[:, None] * w_first
    for m in range(1, m_layers):
        out = w_inter[m - 1] @ out
        out = np.exp(1j * phases[m])[:, None] * out
    return out


def effective_gains(h_hat: np.ndarray, forward: np.ndarray) -> np.ndarray:
    """Per-(AP, UE) effective antenna gains.

    h_hat : (L, K, N) complex128, equivalent last-layer-to-UE channels
    forward : (L, N, M_AP) complex128, cascade_apply output per AP

    Returns g with g[l, k, :] = conj(h_hat[l, k]) @ forward[l], shape (L, K, M_AP).
    """
    return np.einsum("lkn,lnm->lkm", h_hat.conj(), forward)


def sinr_from_gains(g: np.ndarray, p: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-UE SINR from effective gains and per-antenna power amplitudes.

    g : (L, K, M_AP) complex128
    p : (L, K, M_AP) float64, nonnegative amplitudes
    sigma2 : receiver noise power in watts

    gamma_k = |sum_l g[l,k] . p[l,k]|^2 /
              (sum_{j != k} |sum_l g[l,k] . p[l,j]|^2 + sigma2)

    Note the cross term pairs UE k's channel with UE j's power vector.
    """
    amp = np.einsum("lkm,ljm->kj", g, p.astype(np.float64))
    power = np.abs(amp) ** 2
    signal = np.diagonal(power).copy()
    interference = power.sum(axis=1) - signal
    return signal / (interference + sigma2)
