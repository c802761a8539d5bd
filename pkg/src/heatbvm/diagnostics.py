"""MCMC diagnostics: autocorrelation, effective sample size and split R-hat."""

import numpy as np


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation of a 1-d series (FFT, biased estimator)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    y = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def integrated_time(x: np.ndarray) -> float:
    """Integrated autocorrelation time with Geyer's initial positive sequence.

    Sums of adjacent autocorrelation pairs are accumulated while positive and
    forced to be non-increasing (the initial monotone sequence).
    """
    rho = autocorrelation(x)
    n = len(rho)
    if n < 4 or not np.any(rho):
        return 1.0
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    return max(tau, 1.0 / n)


def effective_sample_size(chains) -> float:
    """ESS summed over chains; ``chains`` is ``(n_chains, n_draws)`` or 1-d."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    return float(sum(len(c) / integrated_time(c) for c in chains))


def split_rhat(chains) -> float:
    """Potential scale reduction on chains split in half.

    Returns NaN when fewer than two half-chains of length >= 2 are available
    and 1.0 when every draw is identical.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    half = chains.shape[1] // 2
    if half < 2:
        return float("nan")
    parts = np.concatenate([chains[:, :half], chains[:, -half:]], axis=0)
    m, n = parts.shape
    means = parts.mean(axis=1)
    W = parts.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))
