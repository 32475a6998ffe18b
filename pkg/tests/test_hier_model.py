import math

import numpy as np
import pytest

from twincal.gp_core import IndividualDataset, ModelVariant
from twincal.hier_model import (
    ConstrainError,
    HierModel,
    Prior,
    _constrain_fixed,
    build_model,
    default_cardio_priors,
    default_toy_priors,
)

ALL_VARIANTS = [ModelVariant.NO_DELTA, ModelVariant.INDEP_DELTA,
                ModelVariant.COMMON_DELTA, ModelVariant.SHARED_DELTA]


def make_toy_datasets(M=3, n=6, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for m in range(1, M + 1):
        x = np.sort(rng.uniform(0, 2, size=n))
        y = 3.5 * np.exp(-(0.7 + 0.1 * m) * x) + 2.0 + rng.normal(0, 0.3, n)
        out.append(IndividualDataset(id=m, x_u=x, y_u=y))
    return out


def make_cardio_datasets(M=2, nP=5, nQ=4, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for m in range(1, M + 1):
        tP = np.sort(rng.uniform(0, 0.8, nP))
        tQ = np.sort(rng.uniform(0, 0.8, nQ))
        yP = 100 + 15 * np.sin(2 * np.pi * tP / 0.8) + rng.normal(0, 4, nP)
        yQ = 80 + 30 * np.cos(2 * np.pi * tQ / 0.8) + rng.normal(0, 10, nQ)
        out.append(IndividualDataset(id=m, x_u=tP, y_u=yP, x_f=tQ, y_f=yQ))
    return out


def sensible_raw(model: HierModel, seed=0):
    """A raw point where every constrained value is in its valid domain."""
    rng = np.random.default_rng(seed)
    raw = 0.1 + 0.05 * rng.standard_normal(model.dim)
    for i, name in enumerate(model.names):
        if name.startswith("mu_R"):
            raw[i] = 1.5
        elif name.startswith("mu_C"):
            raw[i] = 1.0
        elif name.startswith("mu_u"):
            raw[i] = 1.2
    return raw


class TestConstrainFixed:
    def test_normal_is_identity(self):
        v, dv, _, _ = _constrain_fixed(Prior("normal", 2.0, 3.0), 1.7)
        assert v == 1.7 and dv == 1.0

    def test_lognormal_median_at_log_a(self):
        v, _, lp, dlp = _constrain_fixed(Prior("lognormal", 2.0, 0.5),
                                         math.log(2.0))
        assert v == pytest.approx(2.0)
        assert lp == pytest.approx(0.0)
        assert dlp == pytest.approx(0.0)

    def test_uniform_midpoint_at_zero(self):
        v, _, _, _ = _constrain_fixed(Prior("uniform", 0.5, 3.0), 0.0)
        assert v == pytest.approx(1.75)

    def test_uniform_stays_in_bounds(self):
        for raw in (-30.0, -2.0, 0.0, 2.0, 30.0):
            v, _, _, _ = _constrain_fixed(Prior("uniform", 0.5, 3.0), raw)
            assert 0.5 < v < 3.0

    def test_uniform_extreme_raw_is_finite(self):
        # naive sigmoid overflows below raw ~ -709; values and gradients
        # must stay finite (log prior may go to -inf-like magnitudes)
        for raw in (-1e3, -750.0, 750.0, 1e3):
            v, dv, lp, dlp = _constrain_fixed(Prior("uniform", 0.5, 3.0), raw)
            assert 0.5 <= v <= 3.0
            assert math.isfinite(dv) and math.isfinite(lp)
            assert math.isfinite(dlp)

    def test_exp_overflow_raises(self):
        with pytest.raises(ConstrainError):
            _constrain_fixed(Prior("halfnormal", 0.0, 1.0), 60.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            _constrain_fixed(Prior("cauchy", 0.0, 1.0), 0.0)

    @pytest.mark.parametrize("prior", [
        Prior("normal", 1.0, 0.7),
        Prior("lognormal", 2.0, 0.5),
        Prior("halfnormal", 0.0, 1.3),
        Prior("truncnormal_pos", 1.2, 0.5),
        Prior("uniform", 0.5, 3.0),
    ])
    def test_derivatives_match_finite_differences(self, prior):
        h = 1e-6
        for raw in (-1.3, -0.2, 0.4, 1.1):
            v, dv, lp, dlp = _constrain_fixed(prior, raw)
            vp, _, lpp, _ = _constrain_fixed(prior, raw + h)
            vm, _, lpm, _ = _constrain_fixed(prior, raw - h)
            assert dv == pytest.approx((vp - vm) / (2 * h), rel=1e-5)
            assert dlp == pytest.approx((lpp - lpm) / (2 * h), rel=1e-5,
                                        abs=1e-7)

    @pytest.mark.parametrize("prior,expected", [
        # integral of exp(log prior + log Jacobian) over the raw axis equals
        # the normalizing constant of the constrained-scale density kernel
        (Prior("normal", 1.0, 0.7), 0.7 * math.sqrt(2 * math.pi)),
        (Prior("lognormal", 2.0, 0.5), 0.5 * math.sqrt(2 * math.pi)),
        (Prior("halfnormal", 0.0, 1.3), 1.3 * math.sqrt(math.pi / 2)),
        (Prior("truncnormal_pos", 1.2, 0.5),
         0.5 * math.sqrt(2 * math.pi) * 0.5 * (1 + math.erf(
             1.2 / (0.5 * math.sqrt(2))))),
        (Prior("uniform", 0.5, 3.0), 1.0),
    ])
    def test_pullback_normalizer_by_quadrature(self, prior, expected):
        grid = np.linspace(-35.0, 35.0, 400001)
        vals = np.array([math.exp(_constrain_fixed(prior, r)[2])
                         for r in grid])
        integral = np.trapezoid(vals, grid)
        assert integral == pytest.approx(expected, rel=1e-6)


class TestBuildModel:
    def test_independent_variant_has_no_hypers(self):
        model = build_model(make_toy_datasets(1), ModelVariant.INDEP_DELTA,
                            "toy")
        assert model.dim == 4
        assert model.names == ["u[1]", "alpha_d[1]", "rho_d[1]", "sigma_u[1]"]

    def test_no_delta_drops_discrepancy_nodes(self):
        model = build_model(make_toy_datasets(1), ModelVariant.NO_DELTA, "toy")
        assert model.names == ["u[1]", "sigma_u[1]"]

    def test_common_delta_shares_omega_nodes(self):
        model = build_model(make_toy_datasets(3), ModelVariant.COMMON_DELTA,
                            "toy")
        # hypers mu_u, sigma_u; shared alpha_d, rho_d; then 2 nodes x 3
        assert model.dim == 2 + 2 + 3 * 2
        assert model.roles[0]["alpha_d"] == model.roles[2]["alpha_d"]

    def test_shared_delta_hierarchical_omega(self):
        model = build_model(make_toy_datasets(3), ModelVariant.SHARED_DELTA,
                            "toy")
        # hypers: mu_u, sigma_u, m/s for alpha_d and rho_d = 6; 4 x 3 blocks
        assert model.dim == 6 + 3 * 4
        assert model.roles[0]["alpha_d"] != model.roles[1]["alpha_d"]

    def test_cardio_dimensions(self):
        model = build_model(make_cardio_datasets(2),
                            ModelVariant.SHARED_DELTA, "wk2")
        # 4 phi hypers + 4 omega hypers + 9 x 2 individual nodes
        assert model.dim == 8 + 2 * 9

    def test_empty_population_rejected(self):
        with pytest.raises(ValueError):
            build_model([], ModelVariant.NO_DELTA, "toy")


class TestConstrain:
    def test_noncentered_normal_centering(self):
        model = build_model(make_toy_datasets(2), ModelVariant.COMMON_DELTA,
                            "toy")
        raw = sensible_raw(model)
        for i, name in enumerate(model.names):
            if name.startswith("u["):
                raw[i] = 0.0  # nu = 0 centers phi at mu
        values, _, _, _ = model.constrain(raw)
        mu = values[model.names.index("mu_u")]
        for m in range(2):
            assert values[model.roles[m]["u"]] == pytest.approx(mu)

    def test_noncentered_lognormal_centering(self):
        model = build_model(make_toy_datasets(2), ModelVariant.SHARED_DELTA,
                            "toy")
        raw = sensible_raw(model)
        for i, name in enumerate(model.names):
            if name.startswith(("alpha_d[", "rho_d[")):
                raw[i] = 0.0
        values, _, _, _ = model.constrain(raw)
        m_alpha = values[model.names.index("m_alpha_d")]
        assert values[model.roles[0]["alpha_d"]] == pytest.approx(m_alpha)
        assert values[model.roles[1]["alpha_d"]] == pytest.approx(m_alpha)

    def test_pooling_limit_scale_to_zero(self):
        model = build_model(make_toy_datasets(3), ModelVariant.COMMON_DELTA,
                            "toy")
        raw = sensible_raw(model, seed=5)
        raw[model.names.index("sigma_u")] = -30.0  # exp(-30) ~ 0
        values, _, _, _ = model.constrain(raw)
        mu = values[model.names.index("mu_u")]
        for m in range(3):
            assert values[model.roles[m]["u"]] == pytest.approx(mu, abs=1e-11)

    def test_wrong_length_rejected(self):
        model = build_model(make_toy_datasets(1), ModelVariant.NO_DELTA, "toy")
        with pytest.raises(ValueError):
            model.constrain(np.zeros(model.dim + 1))

    def test_constrain_matrix_matches_rowwise(self):
        model = build_model(make_toy_datasets(2), ModelVariant.SHARED_DELTA,
                            "toy")
        rows = np.stack([sensible_raw(model, seed=s) for s in range(4)])
        mat = model.constrain_matrix(rows)
        for i, row in enumerate(rows):
            np.testing.assert_allclose(mat[i], model.constrain(row)[0])


class TestLogpGrad:
    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_toy_gradient_matches_fd(self, variant):
        M = 1 if not variant.is_joint else 3
        model = build_model(make_toy_datasets(M), variant, "toy")
        raw = sensible_raw(model, seed=variant.value.__hash__() % 100)
        logp, grad = model.logp_grad(raw)
        assert np.isfinite(logp)
        h = 1e-5
        for i in range(model.dim):
            rp, rm = raw.copy(), raw.copy()
            rp[i] += h
            rm[i] -= h
            fd = (model.logp(rp) - model.logp(rm)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-6), \
                model.names[i]

    @pytest.mark.parametrize("variant", [ModelVariant.INDEP_DELTA,
                                         ModelVariant.SHARED_DELTA])
    def test_cardio_gradient_matches_fd(self, variant):
        M = 1 if not variant.is_joint else 2
        model = build_model(make_cardio_datasets(M), variant, "wk2")
        raw = sensible_raw(model, seed=3)
        logp, grad = model.logp_grad(raw)
        assert np.isfinite(logp)
        h = 1e-5
        for i in range(model.dim):
            rp, rm = raw.copy(), raw.copy()
            rp[i] += h
            rm[i] -= h
            fd = (model.logp(rp) - model.logp(rm)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=2e-4, abs=1e-5), \
                model.names[i]

    def test_independent_joint_factorizes_over_individuals(self):
        datasets = make_toy_datasets(3)
        joint = build_model(datasets, ModelVariant.INDEP_DELTA, "toy")
        raw = sensible_raw(joint, seed=9)
        total, _ = joint.logp_grad(raw)
        parts = 0.0
        for m, data in enumerate(datasets):
            single = build_model([data], ModelVariant.INDEP_DELTA, "toy")
            block = [joint.roles[m][r] for r in
                     ("u", "alpha_d", "rho_d", "sigma_u")]
            lp, _ = single.logp_grad(raw[block])
            parts += lp
        assert total == pytest.approx(parts, abs=1e-12)

    def test_dataset_permutation_invariance(self):
        datasets = make_toy_datasets(3)
        model = build_model(datasets, ModelVariant.SHARED_DELTA, "toy")
        perm_model = build_model([datasets[2], datasets[0], datasets[1]],
                                 ModelVariant.SHARED_DELTA, "toy")
        raw = sensible_raw(model, seed=4)
        # remap per-individual raw blocks onto the permuted node layout
        perm_raw = np.empty_like(raw)
        name_to_idx = {n: i for i, n in enumerate(model.names)}
        for i, name in enumerate(perm_model.names):
            perm_raw[i] = raw[name_to_idx[name]]
        lp, _ = model.logp_grad(raw)
        lp2, _ = perm_model.logp_grad(perm_raw)
        assert lp == pytest.approx(lp2, abs=1e-10)

    def test_invalid_region_returns_minus_inf_and_zero_grad(self):
        model = build_model(make_cardio_datasets(2),
                            ModelVariant.COMMON_DELTA, "wk2")
        raw = sensible_raw(model)
        raw[model.names.index("mu_R")] = -5.0  # R becomes negative
        lp, grad = model.logp_grad(raw)
        assert lp == -np.inf
        assert np.all(grad == 0.0)

    def test_overflow_returns_minus_inf(self):
        model = build_model(make_toy_datasets(1), ModelVariant.INDEP_DELTA,
                            "toy")
        raw = sensible_raw(model)
        raw[model.names.index("alpha_d[1]")] = 80.0
        lp, grad = model.logp_grad(raw)
        assert lp == -np.inf
        assert np.all(grad == 0.0)


class TestDefaultPriors:
    def test_toy_keys_cover_all_roles(self):
        p = default_toy_priors()
        for key in ("u", "alpha_d", "rho_d", "sigma_u", "mu_u",
                    "sigma_hyper_u", "m_alpha_d", "s_alpha_d",
                    "m_rho_d", "s_rho_d"):
            assert p.get(key) is not None

    def test_cardio_keys_cover_all_roles(self):
        p = default_cardio_priors()
        for key in ("R", "C", "alpha_th", "rho_th", "alpha_d", "rho_d",
                    "mu_P", "sigma_u", "sigma_f", "mu_R", "sigma_hyper_R",
                    "mu_C", "sigma_hyper_C"):
            assert p.get(key) is not None

    def test_cardio_r_prior_bounds(self):
        p = default_cardio_priors().get("R")
        assert p.kind == "uniform" and (p.a, p.b) == (0.5, 3.0)
