"""Self-contained No-U-Turn sampler with dual averaging and mass adaptation.

Warmup follows the usual staged schedule: a fast initial interval adapting
only the step size, a sequence of doubling windows estimating the diagonal
mass matrix from the warmup draws (resetting dual averaging at each window
boundary), and a final step-size-only interval.  Trajectories use multinomial
sampling over the tree with the standard U-turn termination criterion.

Randomness comes from numpy's counter-based Philox generator so that a seed
identifies a chain portably: chain c of a run with seed s uses
``np.random.Generator(np.random.Philox(np.random.SeedSequence(s).spawn(n)[c]))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIVERGENCE_ENERGY = 1000.0


class SamplerError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    n_chains: int = 4
    n_warmup: int = 1000
    n_samples: int = 1000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    step_size: float | None = None  # fixed step size, disables dual averaging

    def __post_init__(self):
        if self.n_warmup <= 0 or self.n_samples <= 0:
            raise ValueError("n_warmup and n_samples must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_tree_depth > 12:
            raise ValueError("max_tree_depth capped at 12")


@dataclass
class ChainOutput:
    draws: np.ndarray                 # (n_samples, dim), unconstrained
    accept_stats: np.ndarray          # per-draw mean acceptance statistic
    divergences: int
    step_size: float
    mass_diag: np.ndarray
    constrained_draws: np.ndarray | None = None
    tree_depths: np.ndarray = field(default_factory=lambda: np.empty(0, int))


class _DualAveraging:
    """Nesterov dual averaging on log step size (Hoffman & Gelman 2014)."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = np.log(10.0 * eps0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.log_eps = np.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_prob):
        self.count += 1
        w = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob)
        self.log_eps = self.mu - np.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar

    @property
    def eps(self):
        return float(np.exp(self.log_eps))

    @property
    def eps_final(self):
        return float(np.exp(self.log_eps_bar))


def _leapfrog(logp_grad, q, p, grad, eps, inv_mass):
    p = p + 0.5 * eps * grad
    q = q + eps * inv_mass * p
    logp, grad = logp_grad(q)
    p = p + 0.5 * eps * grad
    return q, p, logp, grad


def leapfrog_trajectory(logp_grad, q0, p0, eps, n_steps, inv_mass=None):
    """Integrate n_steps of leapfrog; exposed for reversibility/energy tests."""
    if inv_mass is None:
        inv_mass = np.ones_like(q0)
    logp, grad = logp_grad(q0)
    q, p = np.array(q0, dtype=float), np.array(p0, dtype=float)
    for _ in range(n_steps):
        q, p, logp, grad = _leapfrog(logp_grad, q, p, grad, eps, inv_mass)
    return q, p, logp


def _hamiltonian(logp, p, inv_mass):
    return -logp + 0.5 * np.sum(inv_mass * p * p)


def _find_reasonable_epsilon(logp_grad, q, inv_mass, rng):
    eps = 1.0
    logp, grad = logp_grad(q)
    p = rng.standard_normal(q.size) / np.sqrt(inv_mass)
    h0 = _hamiltonian(logp, p, inv_mass)
    q1, p1, logp1, _ = _leapfrog(logp_grad, q, p, grad, eps, inv_mass)
    h1 = _hamiltonian(logp1, p1, inv_mass)
    dh = h0 - h1 if np.isfinite(h1) else -np.inf
    direction = 1.0 if dh > np.log(0.5) else -1.0
    for _ in range(100):
        eps *= 2.0**direction
        q1, p1, logp1, _ = _leapfrog(logp_grad, q, p, grad, eps, inv_mass)
        h1 = _hamiltonian(logp1, p1, inv_mass)
        dh = h0 - h1 if np.isfinite(h1) else -np.inf
        if direction * dh <= direction * np.log(0.5):
            break
    return max(eps, 1e-10)


class _Tree:
    """State of one NUTS subtree (multinomial weighting in log space)."""

    __slots__ = ("q_minus", "p_minus", "grad_minus", "q_plus", "p_plus",
                 "grad_plus", "q_prop", "logp_prop", "log_weight",
                 "sum_accept", "n_states", "turning", "diverging")

    def __init__(self, q, p, grad, logp_prop, log_weight, accept, n_states):
        self.q_minus = q
        self.p_minus = p
        self.grad_minus = grad
        self.q_plus = q
        self.p_plus = p
        self.grad_plus = grad
        self.q_prop = q
        self.logp_prop = logp_prop
        self.log_weight = log_weight
        self.sum_accept = accept
        self.n_states = n_states
        self.turning = False
        self.diverging = False


def _uturn(q_plus, q_minus, p_plus, p_minus, inv_mass):
    dq = q_plus - q_minus
    return (dq @ (inv_mass * p_minus) < 0.0) or (dq @ (inv_mass * p_plus) < 0.0)


def _build_tree(logp_grad, q, p, grad, direction, depth, eps, h0,
                inv_mass, rng):
    if depth == 0:
        q1, p1, logp1, grad1 = _leapfrog(
            logp_grad, q, p, grad, direction * eps, inv_mass)
        h1 = _hamiltonian(logp1, p1, inv_mass) if np.isfinite(logp1) else np.inf
        dh = h0 - h1  # log weight of the new state relative to the start
        tree = _Tree(q1, p1, grad1, logp1, dh,
                     min(1.0, np.exp(min(dh, 0.0))), 1)
        tree.diverging = not np.isfinite(h1) or (h1 - h0) > DIVERGENCE_ENERGY
        return tree

    first = _build_tree(logp_grad, q, p, grad, direction, depth - 1, eps, h0,
                        inv_mass, rng)
    if first.diverging or first.turning:
        return first

    if direction > 0:
        second = _build_tree(logp_grad, first.q_plus, first.p_plus,
                             first.grad_plus, direction, depth - 1, eps, h0,
                             inv_mass, rng)
        first.q_plus = second.q_plus
        first.p_plus = second.p_plus
        first.grad_plus = second.grad_plus
    else:
        second = _build_tree(logp_grad, first.q_minus, first.p_minus,
                             first.grad_minus, direction, depth - 1, eps, h0,
                             inv_mass, rng)
        first.q_minus = second.q_minus
        first.p_minus = second.p_minus
        first.grad_minus = second.grad_minus

    total = np.logaddexp(first.log_weight, second.log_weight)
    if np.isfinite(second.log_weight) and \
            np.log(rng.uniform()) < second.log_weight - total:
        first.q_prop = second.q_prop
        first.logp_prop = second.logp_prop
    first.log_weight = total
    first.sum_accept += second.sum_accept
    first.n_states += second.n_states
    first.diverging = second.diverging
    first.turning = second.turning or _uturn(
        first.q_plus, first.q_minus, first.p_plus, first.p_minus, inv_mass)
    return first


def _nuts_transition(logp_grad, q, logp, grad, eps, inv_mass, max_depth, rng):
    """One NUTS draw. Returns (q, logp, grad, accept_stat, divergent, depth)."""
    p0 = rng.standard_normal(q.size) / np.sqrt(inv_mass)
    h0 = _hamiltonian(logp, p0, inv_mass)

    tree = _Tree(q, p0, grad, logp, 0.0, 1.0, 1)
    tree.sum_accept = 0.0
    tree.n_states = 0
    divergent = False
    depth = 0
    while depth < max_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        if direction > 0:
            sub = _build_tree(logp_grad, tree.q_plus, tree.p_plus,
                              tree.grad_plus, 1, depth, eps, h0, inv_mass, rng)
            tree.q_plus, tree.p_plus = sub.q_plus, sub.p_plus
            tree.grad_plus = sub.grad_plus
        else:
            sub = _build_tree(logp_grad, tree.q_minus, tree.p_minus,
                              tree.grad_minus, -1, depth, eps, h0,
                              inv_mass, rng)
            tree.q_minus, tree.p_minus = sub.q_minus, sub.p_minus
            tree.grad_minus = sub.grad_minus

        tree.sum_accept += sub.sum_accept
        tree.n_states += sub.n_states
        if sub.diverging:
            divergent = True
            break
        # an invalid (turning) subtree must be discarded unsampled, or the
        # kernel becomes biased toward trajectory endpoints
        if sub.turning:
            break
        # biased progressive sampling: favor the new subtree
        if np.isfinite(sub.log_weight) and \
                np.log(rng.uniform()) < sub.log_weight - tree.log_weight:
            tree.q_prop = sub.q_prop
            tree.logp_prop = sub.logp_prop
        tree.log_weight = np.logaddexp(tree.log_weight, sub.log_weight)
        if _uturn(tree.q_plus, tree.q_minus, tree.p_plus,
                  tree.p_minus, inv_mass):
            break
        depth += 1

    accept_stat = tree.sum_accept / max(tree.n_states, 1)
    q_new = tree.q_prop
    logp_new, grad_new = logp_grad(q_new)
    return q_new, logp_new, grad_new, accept_stat, divergent, depth


def _warmup_windows(n_warmup, init_buffer=75, term_buffer=50, base_window=25):
    """Stan-style adaptation schedule: iteration indices ending each window."""
    if n_warmup < init_buffer + term_buffer + base_window:
        # degenerate schedule: single window covering the middle
        return [n_warmup]
    ends = []
    pos = init_buffer
    size = base_window
    while pos + size < n_warmup - term_buffer:
        if pos + 3 * size >= n_warmup - term_buffer:
            size = n_warmup - term_buffer - pos
        ends.append(pos + size)
        pos += size
        size *= 2
    if not ends or ends[-1] != n_warmup - term_buffer:
        ends.append(n_warmup - term_buffer)
    return ends


def _init_point(logp_grad, dim, rng):
    for _ in range(100):
        q = rng.uniform(-2.0, 2.0, size=dim)
        logp, grad = logp_grad(q)
        if np.isfinite(logp) and np.all(np.isfinite(grad)):
            return q, logp, grad
    raise SamplerError("failed to find a finite initialization in 100 attempts")


def _run_chain(logp_grad, dim, cfg, seed_seq, initial=None):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    if initial is not None:
        q = np.asarray(initial, dtype=float)
        logp, grad = logp_grad(q)
        if not np.isfinite(logp):
            q, logp, grad = _init_point(logp_grad, dim, rng)
    else:
        q, logp, grad = _init_point(logp_grad, dim, rng)

    inv_mass = np.ones(dim)
    fixed_eps = cfg.step_size
    eps = fixed_eps if fixed_eps is not None else \
        _find_reasonable_epsilon(logp_grad, q, inv_mass, rng)
    da = _DualAveraging(eps, cfg.target_accept)

    window_ends = _warmup_windows(cfg.n_warmup)
    window_draws = []
    warmup_divergences = 0

    for it in range(cfg.n_warmup):
        cur_eps = fixed_eps if fixed_eps is not None else da.eps
        q, logp, grad, astat, div, _ = _nuts_transition(
            logp_grad, q, logp, grad, cur_eps, inv_mass,
            cfg.max_tree_depth, rng)
        da.update(astat)
        warmup_divergences += div
        window_draws.append(q.copy())
        if window_ends and it + 1 == window_ends[0]:
            window_ends.pop(0)
            sample = np.asarray(window_draws)
            if sample.shape[0] >= 10:
                var = np.var(sample, axis=0, ddof=1)
                n = sample.shape[0]
                # regularize toward unit mass as Stan does
                inv_mass = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                inv_mass = np.maximum(inv_mass, 1e-10)
            window_draws = []
            if fixed_eps is None:
                eps = _find_reasonable_epsilon(logp_grad, q, inv_mass, rng)
                da = _DualAveraging(eps, cfg.target_accept)

    if warmup_divergences >= cfg.n_warmup:
        raise SamplerError(
            f"all {cfg.n_warmup} warmup iterations diverged; "
            f"step_size={da.eps:.3g}")

    eps = fixed_eps if fixed_eps is not None else da.eps_final
    draws = np.empty((cfg.n_samples, dim))
    accept_stats = np.empty(cfg.n_samples)
    depths = np.empty(cfg.n_samples, dtype=int)
    divergences = 0
    for it in range(cfg.n_samples):
        q, logp, grad, astat, div, depth = _nuts_transition(
            logp_grad, q, logp, grad, eps, inv_mass,
            cfg.max_tree_depth, rng)
        draws[it] = q
        accept_stats[it] = astat
        depths[it] = depth
        divergences += div

    if not np.all(np.isfinite(draws)):
        raise SamplerError("non-finite draws produced")
    return ChainOutput(draws=draws, accept_stats=accept_stats,
                       divergences=divergences, step_size=eps,
                       mass_diag=1.0 / inv_mass, tree_depths=depths)


def nuts_sample(logp_grad, dim, cfg: SamplerConfig,
                constrain=None, initial=None) -> list[ChainOutput]:
    """Run cfg.n_chains independent NUTS chains.

    logp_grad(q) must return (log density, gradient) and be re-entrant.
    If ``constrain`` is given, each chain's draws are also mapped to the
    constrained scale.  ``initial`` optionally fixes the starting point.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    chains = []
    for c in range(cfg.n_chains):
        out = _run_chain(logp_grad, dim, cfg, seeds[c], initial=initial)
        if constrain is not None:
            out.constrained_draws = constrain(out.draws)
        chains.append(out)
    return chains
