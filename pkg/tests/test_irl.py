import numpy as np
import pytest

from mfgsolver import irl, mdp
from mfgsolver.errors import NotConverged, ValidationError

from test_mdp import MU_STAR, PI_STAR


@pytest.fixture(scope="module")
def problem2(malware2, expert2):
    mu_E, f_E = expert2
    return irl.IrlProblem(spec=malware2, mu_E=mu_E, f_expert=f_E)


class TestProblemValidation:
    def test_zero_mass_raises(self, malware2):
        with pytest.raises(ValidationError):
            irl.IrlProblem(
                spec=malware2, mu_E=np.array([1.0, 0.0]),
                f_expert=np.zeros(3),
            )

    def test_wrong_feature_length_raises(self, malware2):
        with pytest.raises(ValidationError):
            irl.IrlProblem(
                spec=malware2, mu_E=np.array([0.6, 0.4]), f_expert=np.zeros(2)
            )

    def test_non_simplex_raises(self, malware2):
        with pytest.raises(ValidationError):
            irl.IrlProblem(
                spec=malware2, mu_E=np.array([0.6, 0.6]), f_expert=np.zeros(3)
            )


class TestDualPieces:
    def test_boltzmann_normalized(self, problem2):
        rng = np.random.default_rng(9)
        for _ in range(5):
            d = irl.DualPoint.from_vector(problem2, rng.normal(size=7))
            nu = irl.boltzmann(problem2, d)
            assert nu.nu.sum() == pytest.approx(1.0, abs=1e-12)
            assert nu.nu.min() > 0.0

    def test_zero_point_objective(self, problem2):
        # At the zero dual point the exponent is log mu_E(x) for both
        # actions, so log Z = log(2) and g = log(2)/(1-beta).
        g = irl.dual_objective(problem2, irl.DualPoint.zero(problem2))
        assert g == pytest.approx(np.log(2.0) / 0.2, abs=1e-10)

    def test_gradient_matches_finite_differences(self, problem2):
        rng = np.random.default_rng(13)
        for _ in range(10):
            v = rng.normal(scale=0.5, size=7)
            g_an = np.concatenate(
                irl.dual_gradient(problem2, irl.DualPoint.from_vector(problem2, v))
            )
            h = 1e-6
            g_fd = np.empty_like(v)
            for i in range(v.size):
                vp, vm = v.copy(), v.copy()
                vp[i] += h
                vm[i] -= h
                g_fd[i] = (
                    irl.dual_objective(problem2, irl.DualPoint.from_vector(problem2, vp))
                    - irl.dual_objective(problem2, irl.DualPoint.from_vector(problem2, vm))
                ) / (2.0 * h)
            np.testing.assert_allclose(g_an, g_fd, atol=1e-7)

    def test_vector_round_trip(self, problem2):
        v = np.arange(7.0)
        d = irl.DualPoint.from_vector(problem2, v)
        np.testing.assert_allclose(d.as_vector(), v)
        np.testing.assert_allclose(d.theta, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(d.lam, [3.0, 4.0])
        np.testing.assert_allclose(d.xi, [5.0, 6.0])

    def test_gradient_duality_identity(self, problem2):
        # For the Boltzmann family, g(d) - <d, grad g(d)> equals the
        # entropy of nu_d relative to the expert marginal:
        # -(1/(1-beta)) sum nu(x,a) log(nu(x,a)/mu_E(x)).
        rng = np.random.default_rng(21)
        v = rng.normal(scale=0.3, size=7)
        d = irl.DualPoint.from_vector(problem2, v)
        g = irl.dual_objective(problem2, d)
        grad = np.concatenate(irl.dual_gradient(problem2, d))
        table = irl.boltzmann(problem2, d).nu
        H = -float(np.sum(table * np.log(table / problem2.mu_E[:, None])))
        H /= 1.0 - problem2.spec.beta
        assert g - float(v @ grad) == pytest.approx(H, abs=1e-8)


class TestSmoothness:
    def test_constants_positive(self, problem2):
        c = irl.smoothness_constants(problem2)
        assert c.M1 > 0 and c.M2 > 0 and c.M3 >= 0
        assert c.M == max(c.M1, c.M2, c.M3)
        spec = problem2.spec
        expected = 2.0 * c.M * (
            c.M1 / (1.0 - spec.beta)
            + 2.0 * np.sqrt(spec.n_states * spec.n_actions)
        )
        assert c.L == pytest.approx(expected)

    def test_span_assumption_reports_rank(self, problem2):
        holds, rank = irl.check_span_assumption(problem2)
        assert isinstance(holds, bool)
        # |X||A| rows can never reach rank k + 2|X| = 7 here: only 4 rows.
        assert not holds
        assert rank <= 4


class TestSolveIrl:
    def test_recovers_expert_measure(self, malware2, problem2):
        # Plain descent gets the constraint residuals below grad_tol; the
        # quasi-Newton refinement then pins the measure to the expert's.
        d, nu, pi, trace = irl.solve_irl(
            problem2, irl.IrlConfig(step=0.5, grad_tol=1e-3)
        )
        res = irl.verify_irl(problem2, nu)
        assert max(res.values()) <= 2e-3
        _, nu_ref, _ = irl.polish_dual(problem2, start=d)
        exact_nu = mdp.occupation_measure(malware2, PI_STAR, MU_STAR, MU_STAR)
        np.testing.assert_allclose(nu_ref.nu, exact_nu.nu, atol=1e-5)

    def test_trace_monotone_at_safe_step(self, problem2):
        consts = irl.smoothness_constants(problem2)
        d, nu, pi, trace = irl.solve_irl(
            problem2, irl.IrlConfig(step=1.0 / consts.L, grad_tol=0.05)
        )
        g = trace[:, 0]
        assert np.all(np.diff(g) <= 1e-14)

    def test_not_converged_carries_trace(self, problem2):
        with pytest.raises(NotConverged) as exc_info:
            irl.solve_irl(problem2, irl.IrlConfig(step=0.5, grad_tol=1e-9,
                                                  max_iter=10))
        d, trace = exc_info.value.result
        assert isinstance(d, irl.DualPoint)
        assert trace.shape == (11, 2)

    def test_large_step_warns(self, problem2):
        with pytest.warns(UserWarning):
            irl.solve_irl(problem2, irl.IrlConfig(step=0.5, grad_tol=0.5,
                                                  max_iter=100))

    def test_bad_step_raises(self, problem2):
        with pytest.raises(ValueError):
            irl.solve_irl(problem2, irl.IrlConfig(step=-1.0))

    def test_settle_tol_requires_static_measure(self, problem2):
        loose = irl.solve_irl(problem2, irl.IrlConfig(step=0.5, grad_tol=5e-3))
        settled = irl.solve_irl(
            problem2,
            irl.IrlConfig(step=0.5, grad_tol=5e-3, settle_tol=1e-9),
        )
        assert len(settled[3]) >= len(loose[3])


class TestPolishDual:
    def test_improves_objective(self, problem2):
        d0, _, _, _ = irl.solve_irl(
            problem2, irl.IrlConfig(step=0.5, grad_tol=1e-2)
        )
        g0 = irl.dual_objective(problem2, d0)
        d, nu, pi = irl.polish_dual(problem2, start=d0)
        assert irl.dual_objective(problem2, d) <= g0
        assert nu.nu.sum() == pytest.approx(1.0, abs=1e-10)

    def test_from_zero_start(self, problem2):
        d, nu, pi = irl.polish_dual(problem2)
        grad = np.concatenate(irl.dual_gradient(problem2, d))
        assert np.abs(grad).max() <= 1e-6
