"""Joint posterior over all individuals in non-centered parameterization.

The sampled vector is fully unconstrained.  Each coordinate is one of:

* a fixed-prior parameter, mapped through identity / exp / scaled-logit with
  the transform log-Jacobian folded into the prior term;
* a standardized variate nu of a non-centered hierarchical parameter,
  phi = mu + sigma * nu (Normal family) or
  rho = exp(log m + s * nu) (Log-normal family), with nu ~ N(0, 1);
* a global hyperparameter (itself a fixed-prior parameter).

Gradients flow analytically: per-individual marginal likelihood gradients
from :mod:`twincal.gp_core` are chained through the transforms onto the raw
coordinates, including the hyperparameter coordinates a hierarchical value
depends on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gp_core import (
    IndividualDataset,
    IndividualParams,
    ModelVariant,
    loglik_and_grad,
)
from .kernels import SEParams

_LOG_MAX = 50.0  # exp bound on raw coordinates feeding an exp transform


class ConstrainError(ValueError):
    """Overflow or invalid value while constraining a raw coordinate."""


@dataclass(frozen=True)
class Prior:
    """Fixed prior on a constrained scalar; the transform is implied by kind.

    kind: one of normal, truncnormal_pos, lognormal, halfnormal, uniform.
    For normal/truncnormal_pos a = mean, b = sd; for lognormal a = median,
    b = log-scale; for halfnormal b = scale (a unused); for uniform (a, b)
    are the bounds.
    """

    kind: str
    a: float = 0.0
    b: float = 1.0


def _sigmoid(x):
    # branch on sign so exp never overflows
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _softplus(x):
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def _constrain_fixed(prior: Prior, raw: float):
    """Value, dvalue/draw, log prior-plus-Jacobian and its d/draw."""
    k = prior.kind
    if k == "normal":
        v = raw
        z = (v - prior.a) / prior.b
        return v, 1.0, -0.5 * z * z, -z / prior.b
    if k in ("truncnormal_pos", "lognormal", "halfnormal"):
        if raw > _LOG_MAX:
            raise ConstrainError(f"exp overflow at raw={raw}")
        v = math.exp(raw)
        if k == "lognormal":
            # pullback of Log-normal(median a, scale b) is N(log a, b^2)
            z = (raw - math.log(prior.a)) / prior.b
            return v, v, -0.5 * z * z, -z / prior.b
        if k == "halfnormal":
            lp = -0.5 * (v / prior.b) ** 2 + raw
            return v, v, lp, -(v / prior.b) ** 2 + 1.0
        z = (v - prior.a) / prior.b
        return v, v, -0.5 * z * z + raw, -z * v / prior.b + 1.0
    if k == "uniform":
        s = _sigmoid(raw)
        v = prior.a + (prior.b - prior.a) * s
        dv = (prior.b - prior.a) * s * (1.0 - s)
        # log Jacobian of the scaled logit; uniform density is constant.
        # log s + log(1-s) written via softplus so extreme raws stay finite
        lp = -_softplus(raw) - _softplus(-raw)
        return v, dv, lp, 1.0 - 2.0 * s
    raise ValueError(f"unknown prior kind {k!r}")


@dataclass
class Node:
    """One raw coordinate of the sampled vector."""

    name: str
    prior: Prior | None = None        # fixed-prior node
    hier: str | None = None           # "normal" | "lognormal"
    loc_idx: int | None = None        # index of the location hyper node
    scale_idx: int | None = None      # index of the scale hyper node
    index: int = -1


@dataclass
class PriorConfig:
    """All prior constants, overridable from the runner config file."""

    priors: dict[str, Prior]

    def get(self, key: str) -> Prior:
        return self.priors[key]


def default_toy_priors() -> PriorConfig:
    return PriorConfig({
        "u": Prior("truncnormal_pos", 1.2, 0.5),
        "rho_d": Prior("lognormal", 1.0, 0.5),
        "alpha_d": Prior("lognormal", 1.0, 0.5),
        "sigma_u": Prior("halfnormal", 0.0, 0.5),
        # hyper-priors of the hierarchical variants; the physical-parameter
        # hyper-priors are informative at the population scale: with a free
        # GP discrepancy the physical parameter is only weakly identified
        # from data, so the global level must carry population knowledge
        "mu_u": Prior("normal", 1.3, 0.1),
        "sigma_hyper_u": Prior("lognormal", 0.3, 0.25),
        "m_rho_d": Prior("lognormal", 1.0, 0.5),
        "s_rho_d": Prior("halfnormal", 0.0, 0.5),
        "m_alpha_d": Prior("lognormal", 1.0, 0.5),
        "s_alpha_d": Prior("halfnormal", 0.0, 0.5),
    })


def default_cardio_priors() -> PriorConfig:
    # R prior matches the study setup; other constants are weakly
    # informative at physiological scales and surfaced in the config.
    return PriorConfig({
        "R": Prior("uniform", 0.5, 3.0),
        "C": Prior("uniform", 0.5, 2.0),
        "alpha_th": Prior("lognormal", 20.0, 1.0),
        "rho_th": Prior("lognormal", 0.2, 0.5),
        "alpha_d": Prior("lognormal", 5.0, 1.0),
        "rho_d": Prior("lognormal", 0.2, 0.5),
        "mu_P": Prior("normal", 100.0, 20.0),
        "sigma_u": Prior("halfnormal", 0.0, 10.0),
        "sigma_f": Prior("halfnormal", 0.0, 20.0),
        # hyper-priors: location centered at the fixed-prior center, scale
        # half-normal at half the fixed prior's sd
        "mu_R": Prior("normal", 1.75, 0.72),
        "sigma_hyper_R": Prior("halfnormal", 0.0, 0.36),
        "mu_C": Prior("normal", 1.25, 0.43),
        "sigma_hyper_C": Prior("halfnormal", 0.0, 0.22),
        "m_rho_d": Prior("lognormal", 0.2, 0.5),
        "s_rho_d": Prior("halfnormal", 0.0, 0.5),
        "m_alpha_d": Prior("lognormal", 5.0, 0.5),
        "s_alpha_d": Prior("halfnormal", 0.0, 0.5),
    })


def default_priors(physics: str) -> PriorConfig:
    return default_toy_priors() if physics == "toy" else default_cardio_priors()


# per-individual roles by physics kind, in constrained-draw column order
TOY_ROLES = ("u", "alpha_d", "rho_d", "sigma_u")
WK2_ROLES = ("R", "C", "alpha_th", "rho_th", "alpha_d", "rho_d",
             "mu_P", "sigma_u", "sigma_f")


class HierModel:
    """Posterior density with gradient for one (variant, physics) wiring.

    Built by :func:`build_model`.  ``logp_grad`` is pure and re-entrant, so
    multiple chains may call it concurrently.
    """

    def __init__(self, datasets, variant, physics, nodes, roles):
        self.datasets = list(datasets)
        self.variant = variant
        self.physics = physics
        self.nodes = nodes                 # list[Node], topological order
        self.roles = roles                 # per individual: {role: node index}
        self.dim = len(nodes)
        self.names = [n.name for n in nodes]

    # -- constraining ------------------------------------------------------

    def constrain(self, raw):
        """Constrained values, total log prior (incl. Jacobians) and partials.

        Returns (values, logp, dlogp_draw, partials) where partials[i] is a
        list of (raw_index, dvalue_i/draw) pairs for node i.
        """
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (self.dim,):
            raise ValueError(f"expected raw vector of length {self.dim}")
        values = np.empty(self.dim)
        dlogp = np.zeros(self.dim)
        partials = [None] * self.dim
        logp = 0.0
        for i, node in enumerate(self.nodes):
            r = raw[i]
            if node.prior is not None:
                v, dv, lp, dlp = _constrain_fixed(node.prior, r)
                values[i] = v
                logp += lp
                dlogp[i] += dlp
                partials[i] = [(i, dv)]
            else:
                # non-centered: nu ~ N(0,1); hypers already constrained
                logp += -0.5 * r * r
                dlogp[i] += -r
                li, si = node.loc_idx, node.scale_idx
                loc, scale = values[li], values[si]
                dloc = partials[li][0][1]
                dscale = partials[si][0][1]
                if node.hier == "normal":
                    values[i] = loc + scale * r
                    partials[i] = [(i, scale), (li, dloc), (si, r * dscale)]
                else:  # lognormal: v = exp(log m + s * nu)
                    e = math.log(loc) + scale * r
                    if e > _LOG_MAX:
                        raise ConstrainError(
                            f"exp overflow constraining {node.name}")
                    v = math.exp(e)
                    values[i] = v
                    partials[i] = [(i, v * scale), (li, v * dloc / loc),
                                   (si, v * r * dscale)]
        return values, logp, dlogp, partials

    def individual_params(self, values, m) -> IndividualParams:
        role = self.roles[m]
        v = lambda key: values[role[key]]
        if self.physics == "toy":
            omega = None
            if self.variant.has_delta:
                omega = SEParams(alpha=v("alpha_d"), rho=v("rho_d"))
            return IndividualParams(phi=np.array([v("u")]),
                                    sigma_u=v("sigma_u"), omega=omega)
        omega = None
        if self.variant.has_delta:
            omega = SEParams(alpha=v("alpha_d"), rho=v("rho_d"))
        return IndividualParams(
            phi=np.array([v("R"), v("C")]),
            theta=SEParams(alpha=v("alpha_th"), rho=v("rho_th")),
            omega=omega, beta=v("mu_P"),
            sigma_u=v("sigma_u"), sigma_f=v("sigma_f"))

    def _valid(self, values, m) -> bool:
        """Hierarchical Normal draws can leave the positive domain."""
        role = self.roles[m]
        positive = {"sigma_u", "sigma_f", "alpha_d", "rho_d",
                    "alpha_th", "rho_th"}
        if self.physics == "wk2":
            positive |= {"R", "C"}
        else:
            # toy: u may be any real under the hierarchical Normal prior
            pass
        return all(values[idx] > 0 for key, idx in role.items()
                   if key in positive)

    def initial_raw(self) -> np.ndarray:
        """Deterministic prior-center starting point on the raw scale.

        High-dimensional joint models have a vanishing chance of drawing a
        valid point uniformly (every individual's physical parameters must
        stay positive), so samplers start from the prior centers with the
        non-centered variates at zero.
        """
        raw = np.zeros(self.dim)
        for i, node in enumerate(self.nodes):
            p = node.prior
            if p is None:
                continue  # nu variate: zero puts it at the hierarchy center
            if p.kind == "normal":
                raw[i] = p.a
            elif p.kind in ("truncnormal_pos", "lognormal"):
                raw[i] = math.log(p.a)
            elif p.kind == "halfnormal":
                raw[i] = math.log(p.b)
            # uniform: raw 0 is the interval midpoint
        return raw

    # -- posterior ---------------------------------------------------------

    def logp_grad(self, raw):
        """Joint log posterior density and gradient on the raw scale."""
        try:
            values, logp, grad, partials = self.constrain(raw)
        except ConstrainError:
            return -np.inf, np.zeros(self.dim)
        grad = grad.copy()
        for m, data in enumerate(self.datasets):
            if not self._valid(values, m):
                return -np.inf, np.zeros(self.dim)
            zeta = self.individual_params(values, m)
            ll, g = loglik_and_grad(data, zeta, self.variant, self.physics)
            if not np.isfinite(ll):
                return -np.inf, np.zeros(self.dim)
            logp += ll
            for key, idx in self.roles[m].items():
                dL = g[key]
                for raw_idx, dv in partials[idx]:
                    grad[raw_idx] += dL * dv
        return logp, grad

    def logp(self, raw):
        return self.logp_grad(raw)[0]

    # -- reporting ---------------------------------------------------------

    def constrained_names(self):
        return list(self.names)

    def constrain_matrix(self, raw_draws):
        """Map an (n, dim) matrix of raw draws to the constrained scale."""
        raw_draws = np.atleast_2d(np.asarray(raw_draws, dtype=float))
        out = np.empty_like(raw_draws)
        for i, row in enumerate(raw_draws):
            out[i] = self.constrain(row)[0]
        return out


def build_model(datasets, variant: ModelVariant, physics: str,
                priors: PriorConfig | None = None) -> HierModel:
    """Wire the node list for one model variant.

    Node order: global hyperparameters, then shared parameters, then one
    block per individual.  Independent variants (NO_DELTA, INDEP_DELTA) have
    no global or shared nodes and are normally built with a single dataset.
    """
    if not datasets:
        raise ValueError("population must be nonempty")
    priors = priors or default_priors(physics)
    nodes: list[Node] = []

    def add(node: Node) -> int:
        node.index = len(nodes)
        nodes.append(node)
        return node.index

    hier_phi = variant.is_joint
    hier_omega = variant is ModelVariant.SHARED_DELTA
    shared_omega = variant is ModelVariant.COMMON_DELTA

    phi_roles = ("u",) if physics == "toy" else ("R", "C")
    hyper = {}
    if hier_phi:
        for r in phi_roles:
            hyper[f"mu_{r}"] = add(Node(f"mu_{r}", prior=priors.get(f"mu_{r}")))
            hyper[f"sigma_{r}"] = add(
                Node(f"sigma_{r}", prior=priors.get(f"sigma_hyper_{r}")))
    if hier_omega:
        for r in ("alpha_d", "rho_d"):
            hyper[f"m_{r}"] = add(Node(f"m_{r}", prior=priors.get(f"m_{r}")))
            hyper[f"s_{r}"] = add(Node(f"s_{r}", prior=priors.get(f"s_{r}")))

    shared = {}
    if shared_omega and variant.has_delta:
        for r in ("alpha_d", "rho_d"):
            shared[r] = add(Node(r, prior=priors.get(r)))

    all_roles = TOY_ROLES if physics == "toy" else WK2_ROLES
    if not variant.has_delta:
        all_roles = tuple(r for r in all_roles if r not in ("alpha_d", "rho_d"))

    roles = []
    for data in datasets:
        m = data.id
        block = {}
        for r in all_roles:
            if r in ("alpha_d", "rho_d") and shared_omega:
                block[r] = shared[r]
                continue
            if r in phi_roles and hier_phi:
                block[r] = add(Node(
                    f"{r}[{m}]", hier="normal",
                    loc_idx=hyper[f"mu_{r}"], scale_idx=hyper[f"sigma_{r}"]))
            elif r in ("alpha_d", "rho_d") and hier_omega:
                block[r] = add(Node(
                    f"{r}[{m}]", hier="lognormal",
                    loc_idx=hyper[f"m_{r}"], scale_idx=hyper[f"s_{r}"]))
            else:
                block[r] = add(Node(f"{r}[{m}]", prior=priors.get(r)))
        roles.append(block)

    return HierModel(datasets, variant, physics, nodes, roles)
