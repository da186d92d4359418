"""Unit tests for links, weights, families and the Dataset container."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import expit

from hd_cbps.core.exceptions import DataValidationError, InvalidOutcomeError, UnsupportedLinkError
from hd_cbps.core.model import (
    Binomial,
    Dataset,
    Gaussian,
    LogisticLink,
    OutcomeWeight,
    Poisson,
    PropensityWeight,
    W1,
    W2,
    closed_form_Q,
    get_family,
    get_link,
    quasi_integrand,
    quasi_likelihood_terms,
)


@pytest.fixture
def link():
    return LogisticLink()


class TestLogisticLink:
    """Test the logistic link and its overflow policy."""

    def test_half_at_zero(self, link):
        """Test pi(0) = 0.5."""
        assert link.pi(0.0) == 0.5

    def test_symmetry(self, link):
        """Test pi(u) + pi(-u) = 1."""
        u = np.linspace(-20, 20, 101)
        np.testing.assert_allclose(link.pi(u) + link.pi(-u), 1.0, atol=1e-15)

    def test_derivative_matches_finite_differences(self, link):
        """Test pi' against central differences."""
        u = np.linspace(-6, 6, 61)
        h = 1e-5
        numeric = (link.pi(u + h) - link.pi(u - h)) / (2 * h)
        np.testing.assert_allclose(link.pi_prime(u), numeric, atol=1e-7)

    def test_ps_ratio_identity(self, link):
        """Test pi'(u) / pi(u)^2 = exp(-u)."""
        u = np.linspace(-5, 5, 41)
        np.testing.assert_allclose(link.ps_ratio(u), link.pi_prime(u) / link.pi(u) ** 2, rtol=1e-12)

    def test_clamped_indices_stay_inside_unit_interval(self, link):
        """Test extreme indices give probabilities strictly inside (0, 1)."""
        p = link.pi(np.array([-1e6, 1e6]))
        assert np.all(p > 0) and np.all(p < 1)

    def test_unknown_link(self):
        """Test only the logistic link is available."""
        assert isinstance(get_link("logistic"), LogisticLink)
        with pytest.raises(UnsupportedLinkError):
            get_link("probit")


class TestWeights:
    """Test the w1 and w2 selectors."""

    def test_w1_selectors(self, link):
        """Test pi, one and bpp weights."""
        u = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_allclose(PropensityWeight(W1.PI).evaluate(u, link), expit(u))
        np.testing.assert_array_equal(PropensityWeight(W1.ONE).evaluate(u, link), 1.0)
        constants = np.array([0.5, 1.5, 2.5])
        np.testing.assert_array_equal(PropensityWeight(W1.BPP, constants).evaluate(u, link), constants)

    def test_bpp_needs_positive_constants(self):
        """Test bpp without valid constants is rejected."""
        with pytest.raises(DataValidationError):
            PropensityWeight(W1.BPP)
        with pytest.raises(DataValidationError):
            PropensityWeight(W1.BPP, np.array([1.0, 0.0]))

    def test_bpp_row_subset(self, link):
        """Test per-row constants follow a row subset."""
        weight = PropensityWeight(W1.BPP, np.array([1.0, 2.0, 3.0]))
        rows = np.array([2, 0])
        np.testing.assert_array_equal(weight.evaluate(np.zeros(2), link, rows), [3.0, 1.0])

    def test_w2_selectors(self, link):
        """Test one, inv-pi and ps-adjusted weights."""
        u = np.array([-2.0, 0.0, 1.5])
        np.testing.assert_array_equal(OutcomeWeight(W2.ONE).evaluate(u, link), 1.0)
        np.testing.assert_allclose(OutcomeWeight(W2.INV_PI).evaluate(u, link), 1.0 / expit(u))
        np.testing.assert_array_equal(OutcomeWeight(W2.PS_ADJUSTED).evaluate(u, link), np.exp(-u))

    def test_selectors_from_strings(self):
        """Test selectors accept their string values."""
        assert PropensityWeight("pi").selector is W1.PI
        assert OutcomeWeight("inv-pi").selector is W2.INV_PI


class TestQuasiLikelihood:
    """Test the quasi-likelihood integrand and its closed forms."""

    def test_integrand_examples(self, link):
        """Test hand-evaluated integrand values."""
        assert quasi_integrand(0.0, 1, link, PropensityWeight(W1.PI)) == pytest.approx(0.5)
        assert quasi_integrand(0.0, 0, link, PropensityWeight(W1.ONE)) == pytest.approx(-1.0)
        bpp = PropensityWeight(W1.BPP, np.array([2.0]))
        assert quasi_integrand(0.0, 1, link, bpp, c=2.0) == pytest.approx(2.0)

    def test_closed_form_single_row(self):
        """Test the closed forms against hand values for m = 1, T = 1."""
        m = np.array([1.0])
        T = np.array([1.0])

        pi_term = quasi_likelihood_terms(m, T, PropensityWeight(W1.PI))[0]
        one_term = quasi_likelihood_terms(m, T, PropensityWeight(W1.ONE))[0]

        assert pi_term == pytest.approx(1 - np.log(1 + np.e) + np.log(2), abs=1e-12)
        assert pi_term == pytest.approx(0.379885, abs=1e-6)
        assert one_term == pytest.approx(0.632121, abs=1e-6)

    @pytest.mark.parametrize("selector", [W1.PI, W1.ONE])
    @pytest.mark.parametrize("t", [0.0, 1.0])
    def test_closed_form_matches_quadrature(self, link, selector, t):
        """Test each closed form equals numeric integration of the integrand."""
        weight = PropensityWeight(selector)
        for m in (-2.5, -0.3, 0.7, 3.0):
            integral, _ = quad(lambda u: quasi_integrand(u, t, link, weight), 0.0, m, epsabs=1e-12)
            closed = quasi_likelihood_terms(np.array([m]), np.array([t]), weight)[0]
            assert closed == pytest.approx(integral, abs=1e-9)

    def test_bpp_scales_one(self):
        """Test the bpp form is the one form times the constant."""
        m = np.array([0.4, -1.2])
        T = np.array([1.0, 0.0])
        c = np.array([0.7, 3.0])

        bpp = quasi_likelihood_terms(m, T, PropensityWeight(W1.BPP, c))
        one = quasi_likelihood_terms(m, T, PropensityWeight(W1.ONE))

        np.testing.assert_allclose(bpp, c * one)

    def test_zero_coefficients(self, link):
        """Test Q_n(0) = 0 for every selector."""
        data = Dataset.from_arrays(np.array([[0.3], [-1.0], [2.0]]), np.array([1, 0, 1]), np.zeros(3))
        beta = np.zeros(2)
        for weight in (PropensityWeight(W1.PI), PropensityWeight(W1.ONE), PropensityWeight(W1.BPP, np.ones(3))):
            assert closed_form_Q(beta, data, weight, link) == pytest.approx(0.0, abs=1e-15)

    def test_pi_selector_is_logistic_likelihood(self, link):
        """Test Q_n with w1 = pi differs from the Bernoulli log-likelihood by a constant."""
        rng = np.random.default_rng(0)
        data = Dataset.from_arrays(rng.standard_normal((40, 2)), rng.integers(0, 2, 40), np.zeros(40))

        def loglik(beta):
            p = expit(data.X @ beta)
            return np.mean(data.T * np.log(p) + (1 - data.T) * np.log(1 - p))

        b1, b2 = rng.standard_normal(3), rng.standard_normal(3)
        weight = PropensityWeight(W1.PI)
        diff_q = closed_form_Q(b1, data, weight, link) - closed_form_Q(b2, data, weight, link)

        assert diff_q == pytest.approx(loglik(b1) - loglik(b2), abs=1e-10)

    def test_non_logistic_link_rejected(self):
        """Test the closed form refuses other links."""
        data = Dataset.from_arrays(np.array([[0.0], [1.0]]), np.array([1, 0]), np.zeros(2))

        class Probit:
            name = "probit"

        with pytest.raises(UnsupportedLinkError):
            closed_form_Q(np.zeros(2), data, PropensityWeight(W1.ONE), Probit())


class TestFamilies:
    """Test exponential-family cumulants."""

    @pytest.mark.parametrize("family", [Gaussian(), Binomial(8), Poisson()])
    def test_derivatives_match_finite_differences(self, family):
        """Test b' and b'' against central differences at 1000 points."""
        u = np.random.default_rng(1).uniform(-3, 3, 1000)
        h = 1e-5
        np.testing.assert_allclose(
            family.b_prime(u), (family.b(u + h) - family.b(u - h)) / (2 * h), rtol=1e-6, atol=1e-6
        )
        np.testing.assert_allclose(
            family.b_double_prime(u), (family.b_prime(u + h) - family.b_prime(u - h)) / (2 * h), rtol=1e-6, atol=1e-6
        )
        assert np.all(family.b_double_prime(u) >= 0)

    def test_closed_forms(self):
        """Test the stated cumulants."""
        u = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_allclose(Gaussian().b(u), u**2 / 2)
        np.testing.assert_allclose(Binomial(8).b(u), 8 * np.log1p(np.exp(u)))
        np.testing.assert_allclose(Binomial(8).b_prime(u), 8 * expit(u))
        np.testing.assert_allclose(Poisson().b_double_prime(u), np.exp(u))

    def test_parse_family(self):
        """Test family specifications."""
        assert isinstance(get_family("gaussian"), Gaussian)
        assert isinstance(get_family("poisson"), Poisson)
        assert get_family("binomial:8").trials == 8
        assert get_family("binomial").trials == 1
        assert get_family("binomial:8").label == "binomial:8"

    @pytest.mark.parametrize("spec", ["weibull", "binomial:x", "binomial:0", "poisson:2"])
    def test_bad_family(self, spec):
        """Test unknown or malformed specifications."""
        with pytest.raises(InvalidOutcomeError):
            get_family(spec)

    def test_binomial_response_validation(self):
        """Test binomial outcomes must be counts in 0..m."""
        family = Binomial(8)
        family.validate_response(np.array([0.0, 3.0, 8.0]))
        with pytest.raises(InvalidOutcomeError):
            family.validate_response(np.array([2.5]))
        with pytest.raises(InvalidOutcomeError):
            family.validate_response(np.array([9.0]))

    def test_poisson_response_validation(self):
        """Test poisson outcomes must be nonnegative integers."""
        with pytest.raises(InvalidOutcomeError):
            Poisson().validate_response(np.array([-1.0]))


class TestDataset:
    """Test Dataset validation."""

    def test_from_arrays(self):
        """Test the intercept column is prepended."""
        data = Dataset.from_arrays(np.array([[0.1], [-0.2], [0.3]]), np.array([1, 0, 1]), np.array([2.0, 1.0, 3.0]))

        assert data.n == 3
        assert data.d == 2
        assert data.columns == ("intercept", "X1")
        np.testing.assert_array_equal(data.X[:, 0], 1.0)
        assert data.treated_count == 2

    def test_arrays_read_only(self):
        """Test the stored arrays are immutable copies."""
        covariates = np.array([[0.1], [0.2]])
        data = Dataset.from_arrays(covariates, np.array([1, 0]), np.array([1.0, 2.0]))

        with pytest.raises(ValueError):
            data.Y[0] = 5.0
        covariates[0, 0] = 9.0
        assert data.X[0, 1] == 0.1

    def test_missing_intercept(self):
        """Test column 0 must be all ones."""
        with pytest.raises(DataValidationError):
            Dataset(X=np.array([[1.0], [2.0]]), T=np.array([1, 0]), Y=np.zeros(2))

    def test_bad_treatment(self):
        """Test treatment must be binary."""
        with pytest.raises(DataValidationError):
            Dataset.from_arrays(np.zeros((2, 1)), np.array([2, 0]), np.zeros(2))

    def test_needs_both_arms(self):
        """Test all-treated data is rejected."""
        with pytest.raises(DataValidationError):
            Dataset.from_arrays(np.zeros((3, 1)), np.ones(3), np.zeros(3))

    def test_non_finite(self):
        """Test non-finite entries are rejected."""
        with pytest.raises(DataValidationError):
            Dataset.from_arrays(np.array([[np.nan], [0.0]]), np.array([1, 0]), np.zeros(2))
        with pytest.raises(DataValidationError):
            Dataset.from_arrays(np.zeros((2, 1)), np.array([1, 0]), np.array([np.inf, 0.0]))

    def test_flip(self):
        """Test label swapping."""
        data = Dataset.from_arrays(np.zeros((3, 1)), np.array([1, 0, 0]), np.arange(3.0))

        flipped = data.flip()

        np.testing.assert_array_equal(flipped.T, [0.0, 1.0, 1.0])
        np.testing.assert_array_equal(flipped.Y, data.Y)
