"""sklearn-style estimator wrapping model building, sampling and prediction.

``HierarchicalCalibrator.fit`` takes a list of :class:`IndividualDataset`.
Joint variants (common/shared delta) run one sampler over the pooled
posterior; independent variants run one sampler per individual.  ``predict``
returns posterior-predictive summaries on a new grid for one individual.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator

from .diagnostics import credible_interval, ess, split_rhat
from .gp_core import ModelVariant, predict_general, predict_pi
from .hier_model import HierModel, PriorConfig, build_model, default_priors
from .sampler import SamplerConfig, nuts_sample


def _fit_one(args):
    model, cfg = args
    chains = nuts_sample(model.logp_grad, model.dim, cfg,
                         constrain=model.constrain_matrix,
                         initial=model.initial_raw())
    return chains


class HierarchicalCalibrator(BaseEstimator):
    """Bayesian calibration of one model variant over a population.

    Parameters
    ----------
    variant : str
        One of "no_delta", "indep_delta", "common_delta", "shared_delta".
    physics : str
        "toy" or "wk2".
    priors : PriorConfig or None
        Prior constants; defaults per physics kind.
    n_chains, n_warmup, n_samples, target_accept, max_tree_depth, seed
        Sampler settings (see :class:`SamplerConfig`).
    workers : int
        Process count for independent per-individual fits.
    """

    def __init__(self, variant="shared_delta", physics="toy", priors=None,
                 n_chains=4, n_warmup=1000, n_samples=1000,
                 target_accept=0.8, max_tree_depth=10, seed=0, workers=1):
        self.variant = variant
        self.physics = physics
        self.priors = priors
        self.n_chains = n_chains
        self.n_warmup = n_warmup
        self.n_samples = n_samples
        self.target_accept = target_accept
        self.max_tree_depth = max_tree_depth
        self.seed = seed
        self.workers = workers

    def _cfg(self, seed):
        return SamplerConfig(n_chains=self.n_chains, n_warmup=self.n_warmup,
                             n_samples=self.n_samples,
                             target_accept=self.target_accept,
                             max_tree_depth=self.max_tree_depth, seed=seed)

    def fit(self, datasets, y=None):
        if not datasets:
            raise ValueError("datasets must be a nonempty list")
        variant = ModelVariant(self.variant)
        priors = self.priors or default_priors(self.physics)

        if variant.is_joint:
            groups = [list(datasets)]
        else:
            groups = [[d] for d in datasets]

        models = [build_model(g, variant, self.physics, priors)
                  for g in groups]
        # stable per-fit seeds so results do not depend on worker count
        jobs = [(model, self._cfg(_derive_seed(self.seed, i)))
                for i, model in enumerate(models)]
        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(_fit_one, jobs))
        else:
            results = [_fit_one(job) for job in jobs]

        self.variant_ = variant
        self.datasets_ = list(datasets)
        self.models_ = models
        self.chains_ = results
        self.posterior_ = self._collect_posterior()
        return self

    def _collect_posterior(self):
        """Map parameter name -> constrained draws (n_chains, n_samples)."""
        posterior = {}
        for model, chains in zip(self.models_, self.chains_):
            stacked = np.stack([c.constrained_draws for c in chains])
            for j, name in enumerate(model.constrained_names()):
                posterior[name] = stacked[:, :, j]
        return posterior

    def parameter_names(self):
        return list(self.posterior_.keys())

    def summary(self, level: float = 0.95):
        """Per-parameter posterior summary with diagnostics.

        Returns a list of dicts with keys: name, mean, sd, lo, hi, rhat, ess.
        """
        rows = []
        for name, draws in self.posterior_.items():
            flat = draws.ravel()
            lo, hi = credible_interval(flat, level)
            rhat = split_rhat(draws) if draws.shape[0] >= 2 else float("nan")
            n_eff = ess(draws) if draws.shape[0] >= 2 else float("nan")
            rows.append({
                "name": name,
                "mean": float(flat.mean()),
                "sd": float(flat.std(ddof=1)),
                "lo": lo, "hi": hi,
                "rhat": float(rhat), "ess": float(n_eff),
            })
        return rows

    def divergences(self):
        return int(sum(c.divergences for chains in self.chains_
                       for c in chains))

    def _model_for(self, individual_id):
        for model in self.models_:
            for m, data in enumerate(model.datasets):
                if data.id == individual_id:
                    return model, m
        raise KeyError(f"unknown individual id {individual_id}")

    def predict(self, individual_id, x_star, x_f_star=None,
                n_draws=200, level=0.95, seed=0):
        """Posterior-predictive mean and interval on a new grid.

        Mixes the conditional GP predictive over ``n_draws`` thinned
        posterior draws.  Returns a dict per output block ("u", and "f" for
        wk2) with keys grid, mean, lo, hi.
        """
        model, m = self._model_for(individual_id)
        idx = self.models_.index(model)
        chains = self.chains_[idx]
        draws = np.concatenate([c.constrained_draws for c in chains])
        step = max(1, draws.shape[0] // n_draws)
        thinned = draws[::step]

        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=seed, spawn_key=(individual_id,))))
        x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
        data = model.datasets[m]

        if self.physics == "toy":
            samples = []
            means = []
            for row in thinned:
                zeta = model.individual_params(row, m)
                mu, Sigma = predict_general(data, zeta, x_star, self.variant_)
                sd = np.sqrt(np.maximum(np.diag(Sigma), 0.0))
                means.append(mu)
                samples.append(mu + sd * rng.standard_normal(mu.size))
            return {"u": _band(x_star, means, samples, level)}

        if x_f_star is None:
            x_f_star = x_star
        x_f_star = np.atleast_1d(np.asarray(x_f_star, dtype=float))
        means_u, samp_u, means_f, samp_f = [], [], [], []
        for row in thinned:
            zeta = model.individual_params(row, m)
            (mu_u, S_u), (mu_f, S_f) = predict_pi(
                data, zeta, x_star, x_f_star, self.variant_)
            sd_u = np.sqrt(np.maximum(np.diag(S_u), 0.0))
            sd_f = np.sqrt(np.maximum(np.diag(S_f), 0.0))
            means_u.append(mu_u)
            samp_u.append(mu_u + sd_u * rng.standard_normal(mu_u.size))
            means_f.append(mu_f)
            samp_f.append(mu_f + sd_f * rng.standard_normal(mu_f.size))
        return {"u": _band(x_star, means_u, samp_u, level),
                "f": _band(x_f_star, means_f, samp_f, level)}


def _band(grid, means, samples, level):
    samples = np.asarray(samples)
    lo = (1.0 - level) / 2.0
    return {
        "grid": np.asarray(grid),
        "mean": np.mean(means, axis=0),
        "lo": np.quantile(samples, lo, axis=0, method="hazen"),
        "hi": np.quantile(samples, 1.0 - lo, axis=0, method="hazen"),
    }


def _derive_seed(seed, fit_index):
    return int(np.random.SeedSequence(
        entropy=seed, spawn_key=(fit_index,)).generate_state(1)[0])
