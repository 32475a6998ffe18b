"""Per-individual Gaussian marginals: assembly, log-density, gradients, prediction.

Two physics kinds are supported:

* ``"toy"`` -- one observation block, GP mean eta(x, u) = 5 exp(-u x) plus a
  discrepancy kernel on the same block.
* ``"wk2"`` -- the two-block physics-informed Windkessel model: pressure and
  flow observed on (possibly unaligned) grids, coupled through the operator
  kernel blocks of :mod:`twincal.kernels`, with the discrepancy kernel added
  to the pressure-pressure block.

All gradients are analytic (trace identity); the test suite pins them to
central finite differences.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernels import (
    SEParams,
    WK2Params,
    k_pp,
    k_pq,
    k_qp,
    k_qq,
    se_matrix,
    se_matrix_dparams,
    wk2_blocks,
    wk2_blocks_dparams,
)

# escalation ladder of jitter factors applied to the mean diagonal
JITTER_LADDER = (1e-8, 1e-7, 1e-6)


class PosDefError(RuntimeError):
    """Cholesky failed after jitter escalation; carries a parameter snapshot."""

    def __init__(self, msg, snapshot=None, individual=None):
        super().__init__(msg)
        self.snapshot = snapshot
        self.individual = individual


class ModelVariant(enum.Enum):
    NO_DELTA = "no_delta"
    INDEP_DELTA = "indep_delta"
    COMMON_DELTA = "common_delta"
    SHARED_DELTA = "shared_delta"

    @property
    def has_delta(self) -> bool:
        return self is not ModelVariant.NO_DELTA

    @property
    def is_joint(self) -> bool:
        """Joint variants pool all individuals in one posterior."""
        return self in (ModelVariant.COMMON_DELTA, ModelVariant.SHARED_DELTA)


@dataclass
class IndividualDataset:
    """One individual's observations.

    For the toy physics only the u-block is used (x_f, y_f empty).  For the
    WK2 physics x_u/y_u are the pressure grid/observations and x_f/y_f the
    flow grid/observations; the two blocks need not be aligned.
    """

    id: int
    x_u: np.ndarray
    y_u: np.ndarray
    x_f: np.ndarray = field(default_factory=lambda: np.empty(0))
    y_f: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.x_u = np.asarray(self.x_u, dtype=float)
        self.y_u = np.asarray(self.y_u, dtype=float)
        self.x_f = np.asarray(self.x_f, dtype=float)
        self.y_f = np.asarray(self.y_f, dtype=float)
        if self.x_u.shape != self.y_u.shape:
            raise ValueError("x_u and y_u must have equal length")
        if self.x_f.shape != self.y_f.shape:
            raise ValueError("x_f and y_f must have equal length")

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.y_u, self.y_f])


@dataclass
class IndividualParams:
    """All parameters entering one individual's marginal Gaussian.

    phi     : physical parameters ([u] for toy, [R, C] for wk2)
    theta   : PI kernel parameters (wk2 only)
    omega   : discrepancy kernel parameters (absent under NO_DELTA)
    beta    : constant pressure mean mu_P (wk2 only)
    sigma_u : noise sd of the u-block
    sigma_f : noise sd of the f-block (wk2 only)
    """

    phi: np.ndarray
    sigma_u: float
    theta: SEParams | None = None
    omega: SEParams | None = None
    beta: float | None = None
    sigma_f: float | None = None

    def __post_init__(self):
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        for name, val in (("sigma_u", self.sigma_u), ("sigma_f", self.sigma_f)):
            if val is not None and not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")


def toy_eta(x, u):
    """Misspecified physical model used as the GP mean in the toy study."""
    return 5.0 * np.exp(-u * np.asarray(x, dtype=float))


def _wk2_params(zeta: IndividualParams) -> WK2Params:
    return WK2Params(R=float(zeta.phi[0]), C=float(zeta.phi[1]))


def assemble(data: IndividualDataset, zeta: IndividualParams,
             variant: ModelVariant, physics: str):
    """Mean vector and covariance matrix of the marginal Gaussian.

    Returns (mu, Sigma) over the stacked observation vector.
    """
    if physics == "toy":
        n = data.x_u.size
        mu = toy_eta(data.x_u, zeta.phi[0])
        Sigma = np.eye(n) * zeta.sigma_u**2
        if variant.has_delta:
            Sigma = Sigma + se_matrix(data.x_u, data.x_u, zeta.omega)
        return mu, Sigma

    if physics == "wk2":
        if zeta.theta is None or zeta.beta is None or zeta.sigma_f is None:
            raise ValueError("wk2 physics requires theta, beta and sigma_f")
        phi = _wk2_params(zeta)
        nP, nQ = data.x_u.size, data.x_f.size
        mu = np.concatenate([
            np.full(nP, zeta.beta),
            np.full(nQ, zeta.beta / phi.R),
        ])
        b = wk2_blocks(data.x_u, data.x_f, zeta.theta, phi)
        PP = b["K_PP"] + np.eye(nP) * zeta.sigma_u**2
        if variant.has_delta:
            PP = PP + se_matrix(data.x_u, data.x_u, zeta.omega)
        QQ = b["K_QQ"] + np.eye(nQ) * zeta.sigma_f**2
        Sigma = np.block([[PP, b["K_PQ"]], [b["K_QP"], QQ]])
        return mu, Sigma

    raise ValueError(f"unknown physics kind {physics!r}")


def chol_with_jitter(Sigma, snapshot=None, individual=None):
    """Cholesky factor with the escalating-jitter ladder.

    Returns (cho_factor result, jitter actually added).  Raises
    :class:`PosDefError` if the ladder is exhausted.
    """
    base = float(np.mean(np.diag(Sigma)))
    if not np.isfinite(base) or base <= 0:
        raise PosDefError("covariance diagonal is not positive",
                          snapshot=snapshot, individual=individual)
    for factor in JITTER_LADDER:
        try:
            jitter = factor * base
            return cho_factor(Sigma + jitter * np.eye(Sigma.shape[0]),
                              lower=True), jitter
        except np.linalg.LinAlgError:
            continue
    raise PosDefError(
        f"Cholesky failed after jitter escalation up to {JITTER_LADDER[-1]}",
        snapshot=snapshot, individual=individual)


def gaussian_logpdf(y, mu, Sigma):
    """log N(y | mu, Sigma) via Cholesky with jitter escalation."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if y.shape != mu.shape or Sigma.shape != (y.size, y.size):
        raise ValueError("dimension mismatch in gaussian_logpdf")
    cf, _ = chol_with_jitter(Sigma)
    r = y - mu
    alpha = cho_solve(cf, r)
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return -0.5 * (r @ alpha) - 0.5 * logdet - 0.5 * y.size * np.log(2.0 * np.pi)


def gaussian_logpdf_grad(y, mu, Sigma, dmu, dSigma):
    """Log-density and its gradient over a parameter list.

    dmu and dSigma are equal-length lists; entry i holds dmu/dzeta_i (vector
    or None for zero) and dSigma/dzeta_i (matrix or None).  Uses
    dL/dzeta_i = 0.5 tr((a a^T - Sigma^-1) dSigma_i) + a^T dmu_i with
    a = Sigma^-1 (y - mu).
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    cf, _ = chol_with_jitter(Sigma)
    r = y - mu
    alpha = cho_solve(cf, r)
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    logp = -0.5 * (r @ alpha) - 0.5 * logdet - 0.5 * y.size * np.log(2.0 * np.pi)

    Sinv = cho_solve(cf, np.eye(y.size))
    W = np.outer(alpha, alpha) - Sinv
    grads = np.zeros(len(dmu))
    for i, (dm, dS) in enumerate(zip(dmu, dSigma)):
        g = 0.0
        if dS is not None:
            g += 0.5 * np.sum(W * dS)
        if dm is not None:
            g += alpha @ dm
        grads[i] = g
    return logp, grads


def _toy_derivs(data, zeta, variant):
    """Parameter names, dmu and dSigma lists for the toy marginal."""
    x = data.x_u
    n = x.size
    names = ["u"]
    dmu = [-x * toy_eta(x, zeta.phi[0])]
    dSigma = [None]
    if variant.has_delta:
        dk = se_matrix_dparams(x, x, zeta.omega)
        names += ["alpha_d", "rho_d"]
        dmu += [None, None]
        dSigma += [dk["alpha"], dk["rho"]]
    names += ["sigma_u"]
    dmu += [None]
    dSigma += [np.eye(n) * (2.0 * zeta.sigma_u)]
    return names, dmu, dSigma


def _wk2_derivs(data, zeta, variant):
    """Parameter names, dmu and dSigma lists for the WK2 marginal."""
    phi = _wk2_params(zeta)
    nP, nQ = data.x_u.size, data.x_f.size
    n = nP + nQ
    dblocks = wk2_blocks_dparams(data.x_u, data.x_f, zeta.theta, phi)

    def full(db):
        return np.block([[db["K_PP"], db["K_PQ"]], [db["K_QP"], db["K_QQ"]]])

    names, dmu, dSigma = [], [], []

    # R enters the flow mean and every operator block
    dmu_R = np.concatenate([np.zeros(nP), np.full(nQ, -zeta.beta / phi.R**2)])
    names.append("R")
    dmu.append(dmu_R)
    dSigma.append(full(dblocks["R"]))

    names.append("C")
    dmu.append(None)
    dSigma.append(full(dblocks["C"]))

    names += ["alpha_th", "rho_th"]
    dmu += [None, None]
    dSigma += [full(dblocks["alpha"]), full(dblocks["rho"])]

    if variant.has_delta:
        dk = se_matrix_dparams(data.x_u, data.x_u, zeta.omega)
        for pname in ("alpha", "rho"):
            dS = np.zeros((n, n))
            dS[:nP, :nP] = dk[pname]
            names.append(f"{pname}_d")
            dmu.append(None)
            dSigma.append(dS)

    names.append("mu_P")
    dmu.append(np.concatenate([np.ones(nP), np.full(nQ, 1.0 / phi.R)]))
    dSigma.append(None)

    dS_u = np.zeros((n, n))
    dS_u[:nP, :nP] = np.eye(nP) * (2.0 * zeta.sigma_u)
    names.append("sigma_u")
    dmu.append(None)
    dSigma.append(dS_u)

    dS_f = np.zeros((n, n))
    dS_f[nP:, nP:] = np.eye(nQ) * (2.0 * zeta.sigma_f)
    names.append("sigma_f")
    dmu.append(None)
    dSigma.append(dS_f)

    return names, dmu, dSigma


def loglik_and_grad(data: IndividualDataset, zeta: IndividualParams,
                    variant: ModelVariant, physics: str):
    """Marginal log-likelihood and its gradient by constrained parameter name.

    Returns (logp, {name: dlogp/dname}).  Names follow the convention used by
    the hierarchical model: u/R/C, alpha_th/rho_th, alpha_d/rho_d, mu_P,
    sigma_u, sigma_f.
    """
    mu, Sigma = assemble(data, zeta, variant, physics)
    # extreme parameter values (e.g. very negative u in the toy mean) can
    # overflow the mean; report -inf so the sampler rejects the point
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(Sigma))):
        return -np.inf, {}
    derivs = _toy_derivs if physics == "toy" else _wk2_derivs
    names, dmu, dSigma = derivs(data, zeta, variant)
    try:
        logp, grads = gaussian_logpdf_grad(data.y, mu, Sigma, dmu, dSigma)
    except PosDefError as err:
        raise PosDefError(str(err), snapshot=zeta, individual=data.id) from err
    return logp, dict(zip(names, grads))


def _clamp_variance(var):
    """Clamp tiny negative predictive variances; larger negatives are bugs."""
    var = np.asarray(var, dtype=float)
    if np.any(var < -1e-10):
        raise RuntimeError(f"negative predictive variance: min={var.min()}")
    return np.maximum(var, 0.0)


def predict_general(train: IndividualDataset, zeta: IndividualParams,
                    x_star, variant: ModelVariant = ModelVariant.INDEP_DELTA):
    """Toy-model posterior predictive: mean and covariance at x_star.

    mu* = eta(x*) + K*^T (K + sigma^2 I)^-1 (y - eta(x))
    Sigma* = K** - K*^T (K + sigma^2 I)^-1 K*
    """
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    u = zeta.phi[0]
    eta_star = toy_eta(x_star, u)

    def kfun(a, b):
        if variant.has_delta:
            return se_matrix(a, b, zeta.omega)
        return np.zeros((np.atleast_1d(a).size, np.atleast_1d(b).size))

    Kss = kfun(x_star, x_star)
    if train.x_u.size == 0:
        return eta_star, Kss

    Ky = kfun(train.x_u, train.x_u) + np.eye(train.x_u.size) * zeta.sigma_u**2
    Ks = kfun(train.x_u, x_star)
    cf, _ = chol_with_jitter(Ky, snapshot=zeta, individual=train.id)
    resid = train.y_u - toy_eta(train.x_u, u)
    mu_star = eta_star + Ks.T @ cho_solve(cf, resid)
    Sigma_star = Kss - Ks.T @ cho_solve(cf, Ks)
    np.fill_diagonal(Sigma_star, _clamp_variance(np.diag(Sigma_star)))
    return mu_star, Sigma_star


def predict_pi(train: IndividualDataset, zeta: IndividualParams,
               x_u_star, x_f_star,
               variant: ModelVariant = ModelVariant.INDEP_DELTA):
    """Two-block (WK2) posterior predictive for u* (pressure) and f* (flow).

    Implements the conditional Gaussians with the cross-covariance rows
    V_u*^T = [K_uu + K_delta, K_uf] and V_f*^T = [K_fu, K_ff]; the
    discrepancy kernel appears only in u-side covariances.

    Returns ((mu_u*, Sigma_u*), (mu_f*, Sigma_f*)).
    """
    x_u_star = np.atleast_1d(np.asarray(x_u_star, dtype=float))
    x_f_star = np.atleast_1d(np.asarray(x_f_star, dtype=float))
    phi = _wk2_params(zeta)
    theta = zeta.theta

    def kdelta(a, b):
        if variant.has_delta:
            return se_matrix(a, b, zeta.omega)
        return np.zeros((np.atleast_1d(a).size, np.atleast_1d(b).size))

    mu_u_star = np.full(x_u_star.size, zeta.beta)
    mu_f_star = np.full(x_f_star.size, zeta.beta / phi.R)
    prior_u = k_pp(x_u_star, x_u_star, theta) + kdelta(x_u_star, x_u_star)
    prior_f = k_qq(x_f_star, x_f_star, theta, phi)

    if train.x_u.size == 0 and train.x_f.size == 0:
        return (mu_u_star, prior_u), (mu_f_star, prior_f)

    mu, Sigma = assemble(train, zeta, variant, "wk2")
    cf, _ = chol_with_jitter(Sigma, snapshot=zeta, individual=train.id)
    resid_w = cho_solve(cf, train.y - mu)

    Vu = np.hstack([
        k_pp(x_u_star, train.x_u, theta) + kdelta(x_u_star, train.x_u),
        k_pq(x_u_star, train.x_f, theta, phi),
    ])
    Vf = np.hstack([
        k_qp(x_f_star, train.x_u, theta, phi),
        k_qq(x_f_star, train.x_f, theta, phi),
    ])

    mu_u = mu_u_star + Vu @ resid_w
    Sigma_u = prior_u - Vu @ cho_solve(cf, Vu.T)
    mu_f = mu_f_star + Vf @ resid_w
    Sigma_f = prior_f - Vf @ cho_solve(cf, Vf.T)
    np.fill_diagonal(Sigma_u, _clamp_variance(np.diag(Sigma_u)))
    np.fill_diagonal(Sigma_f, _clamp_variance(np.diag(Sigma_f)))
    return (mu_u, Sigma_u), (mu_f, Sigma_f)
