# tests/test_svm.py
import numpy as np
import pytest

from conftest import accuracy, desk_config, xor_points
from sasv_fuse.backends import train
from sasv_fuse.backends.svm import (
    linear_kernel,
    poly_kernel,
    rbf_kernel,
    scale_gamma,
    solve_smo,
)
from sasv_fuse.errors import KernelSizeError, TrainingError
from sasv_fuse.features import LabeledMatrix


def _separable(n=120, seed=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] - X[:, 1] > 0).astype(int)
    X[:, 0] += np.where(y == 1, 0.5, -0.5)
    return LabeledMatrix.from_arrays(X, y)


def _primal(model, data, lam):
    y = np.where(data.labels == 1, 1.0, -1.0)
    hinge = np.maximum(0.0, 1.0 - y * model.score_batch(data.rows))
    return 0.5 * lam * model.coef @ model.coef + hinge.mean()


def test_kernels():
    A = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert np.allclose(np.diag(rbf_kernel(A, A, 0.7)), 1.0)
    assert rbf_kernel(A[:1], A[1:], 0.5)[0, 0] == pytest.approx(np.exp(-2.5))
    assert linear_kernel(A, A)[1, 1] == 4.0
    assert poly_kernel(A, A, 0.5, 1.0, 2)[1, 1] == pytest.approx(9.0)
    assert scale_gamma(np.ones((3, 2))) == 1.0, "Constant data falls back to 1"
    assert scale_gamma(A) == pytest.approx(1.0 / (2 * np.var(A)))


def test_smo_dual_objective_never_increases():
    X, y01 = xor_points()
    y = np.where(y01 == 1, 1.0, -1.0)
    K = rbf_kernel(X, X, 1.0)
    result = solve_smo(lambda i: K[:, i], np.diag(K).copy(), y, 10.0, 1e-3, 10000)
    assert result.converged, "Small problems converge within the cap"
    steps = np.diff(result.history)
    assert np.all(steps <= 1e-9), "Every SMO step lowers the dual objective"
    assert np.all((result.alpha >= 0) & (result.alpha <= 10.0)), "Box constraint"
    assert abs(result.alpha @ y) < 1e-8, "Equality constraint"


def test_rbf_svm_solves_xor():
    X, y = xor_points()
    data = LabeledMatrix.from_arrays(X, y)
    model = train(data, desk_config("svm_rbf", reg_lambda=1e-3, gamma=1.0))
    assert accuracy(model.score_batch(X), y) == 1.0, "XOR is separable with RBF"
    assert 0 < model.support_vectors.shape[0] <= data.n


def test_poly_svm_solves_xor():
    X, y = xor_points()
    data = LabeledMatrix.from_arrays(X, y)
    model = train(data, desk_config("svm_poly", degree=2, gamma=1.0, reg_lambda=1e-3))
    assert accuracy(model.score_batch(X), y) >= 0.95, "x1*x2 is a degree-2 feature"


def test_linear_svm_solvers_agree():
    data = _separable()
    lam = 1e-2
    dual = train(data, desk_config("svm_linear", reg_lambda=lam, max_iterations=None))
    sub = train(
        data,
        desk_config(
            "svm_linear",
            reg_lambda=lam,
            linear_svm_solver="subgradient",
            max_iterations=3000,
        ),
    )
    assert accuracy(dual.score_batch(data.rows), data.labels) >= 0.95
    assert _primal(dual, data, lam) <= _primal(sub, data, lam) + 1e-2, (
        "The dual solution should be at least as good as subgradient descent"
    )


def test_kernel_memory_limit():
    X, y = xor_points()
    data = LabeledMatrix.from_arrays(X, y)
    with pytest.raises(KernelSizeError, match="needs 80000 bytes"):
        train(data, desk_config("svm_rbf", max_kernel_bytes=1000))


def test_training_errors():
    X, y = xor_points()
    data = LabeledMatrix.from_arrays(X, y)
    with pytest.raises(TrainingError, match="reg_lambda > 0"):
        train(data, desk_config("svm_linear", reg_lambda=0.0))


def test_linear_kernel_cannot_fit_xor():
    X, y = xor_points()
    data = LabeledMatrix.from_arrays(X, y)
    model = train(data, desk_config("svm_linear", reg_lambda=1e-3))
    assert accuracy(model.score_batch(X), y) < 0.9, "No line splits the XOR classes"
