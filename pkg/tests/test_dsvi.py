"""Pruebas para el entrenamiento DSVI y la predicción variacional."""

import math

import pytest
import torch

from dgpbench.exceptions import InvalidArgumentError
from dgpbench.gp.kernels import KernelParams
from dgpbench.gp.kernels import gram
from dgpbench.gp.layer import ConditionalMoments
from dgpbench.gp.layer import LayerState
from dgpbench.gp.layer import MeanFnSpec
from dgpbench.gp.model import DGPModel
from dgpbench.gp.model import exact_log_evidence
from dgpbench.gp.model import init_dgp_model
from dgpbench.observability.diagnostics import DSVI_STREAM
from dgpbench.observability.diagnostics import InMemoryDiagnosticsSink
from dgpbench.variational.coupled import CoupledVarParams
from dgpbench.variational.decoupled import DecoupledVarParams
from dgpbench.variational.dsvi import DSVIConfig
from dgpbench.variational.dsvi import VariationalState
from dgpbench.variational.dsvi import dsvi_train
from dgpbench.variational.dsvi import elbo_estimate
from dgpbench.variational.dsvi import elbo_terms
from dgpbench.variational.dsvi import expected_gaussian_loglik
from dgpbench.variational.dsvi import init_variational_state
from dgpbench.variational.dsvi import predict_variational
from dgpbench.variational.dsvi import variational_window

NOISE = 0.1


def _t(values):
    return torch.tensor(values, dtype=torch.float64)


def _gen(seed=0):
    return torch.Generator().manual_seed(seed)


@pytest.fixture
def gp_data():
    """Veinte puntos bien separados muestreados de un GP con ruido 0.1."""
    X = torch.linspace(-10.0, 10.0, 20, dtype=torch.float64).unsqueeze(1)
    kernel = KernelParams.create([1.0])
    cov = gram(X, X, kernel) + NOISE * torch.eye(20, dtype=torch.float64)
    y = torch.linalg.cholesky(cov) @ torch.randn(20, 1, generator=_gen(42), dtype=torch.float64)
    layer = LayerState(
        Z=X.clone(),
        u=torch.zeros(20, 1, dtype=torch.float64),
        kernel=kernel,
        mean_fn=MeanFnSpec.zero(1, 1),
    )
    model = DGPModel(
        layers=(layer,),
        log_noise_variance=torch.log(_t(NOISE)),
        num_data=20,
        jitter=0.0,
    )
    return X, y, model


@pytest.fixture
def two_layer():
    X = torch.linspace(-2.0, 2.0, 12, dtype=torch.float64).unsqueeze(1)
    y = torch.sin(2.0 * X)
    model = init_dgp_model(X, 1, [2], 5, _gen(0), noise_variance=0.05)
    return X, y, model


def _posterior_state(X, y, model):
    """q(u) igual a la posterior exacta cuando Z = X."""
    K = gram(X, X, model.layers[0].kernel)
    A = K + NOISE * torch.eye(X.shape[0], dtype=torch.float64)
    m = K @ torch.linalg.solve(A, y)
    S = K - K @ torch.linalg.solve(A, K)
    S = 0.5 * (S + S.T)
    return VariationalState((CoupledVarParams(m=m, S_chol=torch.linalg.cholesky(S)),))


def _perturbed(state, seed, scale=0.1):
    values, shapes = state.raw_values()
    noise = torch.randn(values.shape, generator=_gen(seed), dtype=torch.float64)
    return state.with_raw_values(values + scale * noise, shapes)


class TestVariationalState:
    """Pruebas para el estado variacional."""

    def test_mixed_families_rejected(self):
        """Prueba que todas las capas deben compartir familia."""
        coupled = CoupledVarParams(
            m=torch.zeros(2, 1, dtype=torch.float64), S_chol=torch.eye(2, dtype=torch.float64)
        )
        decoupled = DecoupledVarParams(
            Z_a=torch.zeros(2, 1, dtype=torch.float64),
            Z_b=torch.zeros(1, 1, dtype=torch.float64),
            mean_param=torch.zeros(2, 1, dtype=torch.float64),
            B_chol=torch.eye(1, dtype=torch.float64),
        )

        with pytest.raises(InvalidArgumentError, match="variational family"):
            VariationalState((coupled, decoupled))

    def test_coupled_initialization(self, two_layer):
        """Prueba m = 0 y S = 1e-5·K_ZZ en cada capa."""
        _, _, model = two_layer

        state = init_variational_state(model)

        assert not state.decoupled
        for layer, vp in zip(model.layers, state.layers, strict=True):
            assert vp.m.shape == (layer.num_inducing, layer.output_dim)
            assert bool((vp.m == 0).all())
            K = gram(layer.Z, layer.Z, layer.kernel)
            assert torch.allclose(vp.S, 1e-5 * K, atol=1e-9)

    def test_decoupled_initialization_from_inputs(self, two_layer):
        """Prueba Z_a propagado desde los datos y Z_b con M_b filas."""
        X, _, model = two_layer

        state = init_variational_state(
            model,
            decoupled=True,
            num_mean_inducing=8,
            num_cov_inducing=3,
            training_inputs=X,
            rng=_gen(2),
        )

        assert state.decoupled
        assert [tuple(vp.Z_a.shape) for vp in state.layers] == [(8, 1), (8, 2)]
        assert [vp.num_cov_inducing for vp in state.layers] == [3, 3]

    def test_raw_values_round_trip(self, two_layer):
        """Prueba que with_raw_values reconstruye el mismo estado."""
        _, _, model = two_layer
        state = _perturbed(init_variational_state(model), seed=1)
        values, shapes = state.raw_values()

        rebuilt = state.with_raw_values(values, shapes)

        for a, b in zip(state.layers, rebuilt.layers, strict=True):
            assert torch.allclose(a.m, b.m)
            assert torch.allclose(a.S_chol, b.S_chol, atol=1e-12)


class TestExpectedGaussianLoglik:
    """Pruebas para la verosimilitud esperada analítica."""

    def test_point_mass(self):
        """Prueba que con varianza nula coincide con log N(y; μ, σ²)."""
        moments = ConditionalMoments(mean=_t([[0.0]]), var_diag=_t([[0.0]]))

        value = expected_gaussian_loglik(_t([[1.0]]), moments, _t(0.0))

        assert float(value) == pytest.approx(-1.418939, abs=1e-6)

    def test_variance_penalty(self):
        """Prueba que la varianza de f resta var/(2σ²)."""
        moments = ConditionalMoments(mean=_t([[0.0]]), var_diag=_t([[1.0]]))

        value = expected_gaussian_loglik(_t([[1.0]]), moments, _t(0.0))

        assert float(value) == pytest.approx(-1.918939, abs=1e-6)


class TestElbo:
    """Pruebas para el ELBO estocástico."""

    def test_kl_zero_at_prior(self, gp_data):
        """Prueba que la KL es 0 cuando q(u) es el prior."""
        X, y, model = gp_data
        K = gram(X, X, model.layers[0].kernel)
        state = VariationalState(
            (
                CoupledVarParams(
                    m=torch.zeros(20, 1, dtype=torch.float64), S_chol=torch.linalg.cholesky(K)
                ),
            )
        )

        _, kl = elbo_terms((X, y), model, state, _gen(0))

        assert abs(float(kl)) < 1e-8

    def test_tight_at_exact_posterior(self, gp_data):
        """Prueba que con Z = X y q exacta el ELBO es la evidencia."""
        X, y, model = gp_data
        evidence = exact_log_evidence(X, y, model.layers[0].kernel, model.log_noise_variance)

        elbo = elbo_estimate((X, y), model, _posterior_state(X, y, model), _gen(0))

        assert float(elbo) == pytest.approx(evidence, abs=1e-6)

    def test_bounds_evidence(self, gp_data):
        """Prueba ELBO ≤ log p(y) para posteriores variacionales arbitrarias."""
        X, y, model = gp_data
        evidence = exact_log_evidence(X, y, model.layers[0].kernel, model.log_noise_variance)
        base = _posterior_state(X, y, model)

        for seed in range(10):
            state = _perturbed(base, seed, scale=0.3)
            elbo = elbo_estimate((X, y), model, state, _gen(seed))
            assert float(elbo) <= evidence + 1e-8

    def test_duplicated_data_same_scaled_likelihood(self, gp_data):
        """Prueba que duplicar el batch no cambia la verosimilitud escalada."""
        X, y, model = gp_data
        state = _perturbed(_posterior_state(X, y, model), seed=3)

        ell, _ = elbo_terms((X, y), model, state, _gen(0))
        ell_dup, _ = elbo_terms((torch.cat([X, X]), torch.cat([y, y])), model, state, _gen(0))

        assert float(ell_dup) == pytest.approx(float(ell), rel=1e-10)

    def test_empty_batch(self, gp_data):
        """Prueba que un batch vacío es un argumento inválido."""
        X, y, model = gp_data
        state = init_variational_state(model)

        with pytest.raises(InvalidArgumentError):
            elbo_terms((X[:0], y[:0]), model, state, _gen(0))

    def test_depth_mismatch(self, gp_data, two_layer):
        """Prueba que el estado debe tener una entrada por capa."""
        X, y, model = gp_data
        _, _, deep = two_layer

        with pytest.raises(InvalidArgumentError, match="depth"):
            elbo_terms((X, y), model, init_variational_state(deep), _gen(0))

    @pytest.mark.parametrize("decoupled", [False, True])
    def test_gradient_matches_finite_differences(self, two_layer, decoupled):
        """Prueba el gradiente del ELBO con semilla fija por diferencias centrales."""
        X, y, model = two_layer
        state = _perturbed(init_variational_state(model, decoupled=decoupled), seed=5)
        values, shapes = state.raw_values()

        def elbo(v):
            return elbo_estimate((X, y), model, state.with_raw_values(v, shapes), _gen(3))

        v = values.detach().clone().requires_grad_(True)
        (grad,) = torch.autograd.grad(elbo(v), [v])

        h = 1e-5
        for k in (0, values.shape[0] // 2, values.shape[0] - 1):
            step = torch.zeros_like(values)
            step[k] = h
            fd = (float(elbo(values + step)) - float(elbo(values - step))) / (2 * h)
            assert float(grad[k]) == pytest.approx(fd, rel=1e-4, abs=1e-5)


class TestDSVITrain:
    """Pruebas para el bucle de entrenamiento DSVI."""

    def test_zero_iterations_is_identity(self, two_layer):
        """Prueba que sin iteraciones nada cambia."""
        X, y, model = two_layer
        state = init_variational_state(model)

        new_model, new_state, history = dsvi_train(
            (X, y), model, state, DSVIConfig(iterations=0), _gen(0)
        )

        assert history.elbo == []
        assert torch.equal(new_model.hyper_vector().values, model.hyper_vector().values)
        assert torch.allclose(new_state.raw_values()[0], state.raw_values()[0])

    def test_negative_iterations(self, two_layer):
        """Prueba que un número negativo de iteraciones es inválido."""
        X, y, model = two_layer

        with pytest.raises(InvalidArgumentError):
            dsvi_train(
                (X, y), model, init_variational_state(model), DSVIConfig(iterations=-1), _gen(0)
            )

    def test_zero_learning_rate_flat_history(self, gp_data):
        """Prueba que con tasa 0 el historial es plano."""
        X, y, model = gp_data
        state = _perturbed(init_variational_state(model), seed=0)

        _, new_state, history = dsvi_train(
            (X, y), model, state, DSVIConfig(iterations=5, learning_rate=0.0), _gen(0)
        )

        assert len(history.elbo) == 5
        assert max(history.elbo) - min(history.elbo) < 1e-9
        assert torch.allclose(new_state.raw_values()[0], state.raw_values()[0])

    def test_records_and_callback(self, two_layer):
        """Prueba los registros ``dsvi`` y la llamada por iteración."""
        X, y, model = two_layer
        sink = InMemoryDiagnosticsSink()
        seen = []

        _, _, history = dsvi_train(
            (X, y),
            model,
            init_variational_state(model),
            DSVIConfig(iterations=4, minibatch_size=6),
            _gen(0),
            sink=sink,
            on_iteration=lambda it, m, s: seen.append(it),
        )

        records = sink.records(DSVI_STREAM)
        assert [r.iteration for r in records] == [0, 1, 2, 3]
        assert records[-1].values["elbo"] == history.elbo[-1]
        assert set(records[0].values) == {"elbo", "kl"}
        assert seen == [0, 1, 2, 3]

    def test_frozen_hyperparameters(self, two_layer):
        """Prueba que train_hyperparameters=False deja θ intacto."""
        X, y, model = two_layer
        config = DSVIConfig(iterations=3, train_hyperparameters=False)

        new_model, _, _ = dsvi_train((X, y), model, init_variational_state(model), config, _gen(0))

        assert torch.equal(new_model.hyper_vector().values, model.hyper_vector().values)

    def test_hyperparameters_move_when_trained(self, two_layer):
        """Prueba que θ cambia cuando se entrena."""
        X, y, model = two_layer

        new_model, _, _ = dsvi_train(
            (X, y), model, init_variational_state(model), DSVIConfig(iterations=3), _gen(0)
        )

        assert not torch.equal(new_model.hyper_vector().values, model.hyper_vector().values)

    def test_decoupled_training_runs(self, two_layer):
        """Prueba que la familia desacoplada se entrena con ELBO finito."""
        X, y, model = two_layer
        state = init_variational_state(model, decoupled=True, num_cov_inducing=3)

        _, new_state, history = dsvi_train(
            (X, y), model, state, DSVIConfig(iterations=10, learning_rate=0.01), _gen(0)
        )

        assert new_state.decoupled
        assert all(math.isfinite(v) for v in history.elbo)

    def test_converges_to_evidence(self, gp_data):
        """Prueba que con Z = X el ELBO final queda a menos de 0.5 nats de log p(y)."""
        X, y, model = gp_data
        evidence = exact_log_evidence(X, y, model.layers[0].kernel, model.log_noise_variance)
        config = DSVIConfig(iterations=3000, learning_rate=0.02, train_hyperparameters=False)

        final_model, state, _ = dsvi_train(
            (X, y), model, init_variational_state(model), config, _gen(0)
        )

        elbo = float(elbo_estimate((X, y), final_model, state, _gen(1)))
        assert evidence - 0.5 <= elbo <= evidence + 1e-8


class TestPredictVariational:
    """Pruebas para la predicción con la posterior variacional."""

    def test_shapes_and_noise_floor(self, two_layer):
        """Prueba una componente por propagación y varianzas ≥ σ²."""
        X, _, model = two_layer
        state = _perturbed(init_variational_state(model), seed=2)

        mixture = predict_variational(X[:4], model, state, _gen(0), num_samples=7)

        assert mixture.means.shape == (7, 4, 1)
        assert bool((mixture.variances >= model.noise_variance - 1e-12).all())

    def test_single_layer_matches_marginal(self, gp_data):
        """Prueba que con L = 1 todas las componentes son la marginal de q."""
        X, y, model = gp_data
        state = _posterior_state(X, y, model)

        mixture = predict_variational(X, model, state, _gen(0), num_samples=3)

        vp = state.layers[0]
        assert torch.allclose(mixture.means[0], vp.m, atol=1e-8)
        assert torch.allclose(mixture.means[0], mixture.means[2])

    def test_num_samples_positive(self, gp_data):
        """Prueba que se necesita al menos una muestra."""
        X, _, model = gp_data

        with pytest.raises(InvalidArgumentError):
            predict_variational(X, model, init_variational_state(model), _gen(0), num_samples=0)


class TestVariationalWindow:
    """Pruebas para la ventana de extracciones de q(u)."""

    def test_length_and_layout(self, two_layer):
        """Prueba n extracciones con el layout del muestreador."""
        _, _, model = two_layer

        window = variational_window(init_variational_state(model), model, 6, _gen(0))

        assert len(window) == 6
        assert window[0].size == model.current_latent().size
        assert window[0].layout == model.current_latent().layout

    def test_degenerate_q_returns_mean(self, gp_data):
        """Prueba que con S = 0 todas las extracciones son m."""
        _, _, model = gp_data
        m = torch.randn(20, 1, generator=_gen(4), dtype=torch.float64)
        state = VariationalState(
            (CoupledVarParams(m=m, S_chol=torch.zeros(20, 20, dtype=torch.float64)),)
        )

        window = variational_window(state, model, 3, _gen(0))

        for sample in window:
            assert torch.equal(sample.values, m.reshape(-1))

    def test_n_positive(self, gp_data):
        """Prueba que n debe ser positivo."""
        _, _, model = gp_data

        with pytest.raises(InvalidArgumentError):
            variational_window(init_variational_state(model), model, 0, _gen(0))
