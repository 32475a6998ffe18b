"""Convergence diagnostics: rank-normalized split R-hat, ESS, credible intervals."""

from __future__ import annotations

import numpy as np
from scipy import stats


def _split_chains(chains):
    """Stack (n_chains, n_draws) halves into (2*n_chains, n_draws//2)."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    n = chains.shape[1] // 2
    return np.vstack([chains[:, :n], chains[:, n : 2 * n]])


def _rank_normalize(x):
    ranks = stats.rankdata(x.ravel(), method="average").reshape(x.shape)
    return stats.norm.ppf((ranks - 0.375) / (x.size + 0.25))


def split_rhat(chains) -> float:
    """Rank-normalized split R-hat for one parameter.

    chains: array (n_chains, n_draws), n_chains >= 2, n_draws >= 4.
    Constant (degenerate) input returns +inf.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    if chains.shape[0] < 2 or chains.shape[1] < 4:
        raise ValueError("need >= 2 chains with >= 4 draws each")
    if np.ptp(chains) == 0.0:
        return np.inf
    z = _rank_normalize(_split_chains(chains))
    m, n = z.shape
    chain_means = z.mean(axis=1)
    b = n * np.var(chain_means, ddof=1)
    w = np.mean(np.var(z, axis=1, ddof=1))
    if w == 0.0:
        return np.inf
    var_hat = (n - 1) / n * w + b / n
    return float(np.sqrt(var_hat / w))


def _autocorr(x):
    """Autocorrelation by FFT, normalized so lag 0 is 1."""
    n = x.size
    x = x - x.mean()
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def ess(chains) -> float:
    """Effective sample size for one parameter (Geyer truncation).

    Combines chains as Stan does: rho_t = 1 - (W - mean autocov_t) / var_hat,
    summing paired autocorrelations until the first negative pair.  Constant
    chains return 0.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    if chains.shape[0] < 2 or chains.shape[1] < 4:
        raise ValueError("need >= 2 chains with >= 4 draws each")
    if np.ptp(chains) == 0.0:
        return 0.0
    chains = _split_chains(chains)
    m, n = chains.shape
    chain_vars = np.var(chains, axis=1, ddof=1)
    w = chain_vars.mean()
    b_over_n = np.var(chains.mean(axis=1), ddof=1)
    var_hat = (n - 1) / n * w + b_over_n
    if var_hat <= 0:
        return 0.0

    acov = np.array([_autocorr(c) * v for c, v in zip(chains, chain_vars)])
    mean_acov = acov.mean(axis=0)
    rho = 1.0 - (w - mean_acov) / var_hat

    # Geyer initial positive monotone sequence on the paired sums
    # P_k = rho_{2k} + rho_{2k+1}; tau = -1 + 2 * sum(P_k)
    pairs = []
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        if pairs and pair > pairs[-1]:
            pair = pairs[-1]
        pairs.append(pair)
        t += 2
    tau = -1.0 + 2.0 * sum(pairs)
    return float(m * n / max(tau, 1e-12))


def credible_interval(draws, level: float = 0.95):
    """Equal-tailed quantile interval from posterior draws.

    Uses the Hazen linear-interpolation quantile (h = q*n + 1/2), so
    {1..100} at level 0.9 gives exactly (5.5, 95.5).
    """
    draws = np.sort(np.asarray(draws, dtype=float))
    if draws.size < 100:
        raise ValueError("need at least 100 draws for a credible interval")

    n = draws.size

    def hazen(p):
        # h is rounded so that analytically half-integer positions (e.g.
        # p = 0.05 on 100 draws) are hit exactly despite binary-float p
        h = round(p * n + 0.5, 9)
        h = min(max(h, 1.0), float(n))
        i = int(np.floor(h))
        if i >= n:
            return float(draws[-1])
        frac = h - i
        return float(draws[i - 1] + frac * (draws[i] - draws[i - 1]))

    lo = (1.0 - level) / 2.0
    return hazen(lo), hazen(1.0 - lo)
