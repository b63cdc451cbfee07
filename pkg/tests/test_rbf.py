import math

import numpy as np
import pytest

from rbfglobal import problem, rbf
from rbfglobal.exceptions import DuplicateNodeError, UnsolvableSystemError

KINDS = [rbf.RbfKind(name) for name in rbf.KERNELS]


def test_kernel_eval_table_values():
    assert rbf.kernel_eval(rbf.RbfKind("cubic"), 2.0) == 8.0
    assert rbf.kernel_eval(rbf.RbfKind("thin_plate_spline"), 1.0) == 0.0
    assert rbf.kernel_eval(rbf.RbfKind("gaussian", 1.0), 0.0) == 1.0
    assert rbf.kernel_eval(rbf.RbfKind("multiquadric", 1.0), 0.0) == 1.0
    assert rbf.kernel_eval(rbf.RbfKind("linear"), 1.5) == 1.5
    with pytest.raises(ValueError):
        rbf.kernel_eval(rbf.RbfKind("cubic"), -0.1)


def test_degrees_per_kernel():
    degrees = {k.name: k.degree for k in KINDS}
    assert degrees == {
        "linear": 0,
        "cubic": 1,
        "multiquadric": 0,
        "thin_plate_spline": 1,
        "gaussian": -1,
    }


def test_assemble_dimensions(unit_spec):
    spec2 = problem.continuous_spec(None, [0, 0], [1, 1])
    nodes = np.array([[0.1, 0.2], [0.7, 0.4], [0.3, 0.9]])
    vals = np.zeros(3)
    mat, rhs, dropped = rbf.assemble_system(rbf.RbfKind("cubic"), nodes, vals, spec2)
    assert mat.shape == (6, 6) and rhs.size == 6 and dropped == ()
    mat, _, _ = rbf.assemble_system(rbf.RbfKind("gaussian"), nodes, vals, spec2)
    assert mat.shape == (3, 3)
    mat, _, _ = rbf.assemble_system(rbf.RbfKind("linear"), nodes, vals, spec2)
    assert mat.shape == (4, 4)


def test_assemble_reduced_categorical(cat_spec):
    rng = np.random.default_rng(0)
    nodes = problem.sample_uniform(cat_spec, 3, rng)
    mat, _, dropped = rbf.assemble_system(
        rbf.RbfKind("cubic"), nodes, np.zeros(3), cat_spec
    )
    # n = 1 + 3 slots; one tail column eliminated per unary block
    assert cat_spec.ext_dim == 4
    assert mat.shape == (3 + 4 + 1 - 1, 3 + 4 + 1 - 1)
    assert dropped == (3,)


def test_assemble_rejects_duplicates(unit_spec):
    nodes = np.array([[0.1, 0.1, 0.1], [0.1, 0.1, 0.1]])
    with pytest.raises(DuplicateNodeError):
        rbf.assemble_system(rbf.RbfKind("cubic"), nodes, np.zeros(2), unit_spec)


def test_fit_single_gaussian_node(unit_spec):
    model = rbf.fit(
        rbf.RbfKind("gaussian", 1.0), np.array([[0.2, 0.2, 0.2]]),
        np.array([7.0]), unit_spec,
    )
    assert model.lam[0] == pytest.approx(7.0)
    assert rbf.predict(model, np.array([0.2, 0.2, 0.2])) == pytest.approx(7.0)


def test_fit_reproduces_affine_function(unit_spec):
    rng = np.random.default_rng(1)
    a = np.array([1.5, -2.0, 0.5])
    b = 0.75
    nodes = rng.uniform(size=(4, 3))  # n + 1 affinely independent w.p. 1
    values = nodes @ a + b
    model = rbf.fit(rbf.RbfKind("cubic"), nodes, values, unit_spec)
    assert np.allclose(model.lam, 0.0, atol=1e-8)
    assert np.allclose(model.alpha_lin, a, atol=1e-8)
    assert model.alpha_const == pytest.approx(b, abs=1e-8)


def test_fit_interpolates_random_data(unit_spec):
    rng = np.random.default_rng(9)
    nodes = rng.uniform(size=(5, 3))
    values = rng.uniform(size=5)
    model = rbf.fit(rbf.RbfKind("thin_plate_spline"), nodes, values, unit_spec)
    assert np.abs(rbf.predict(model, nodes) - values).max() <= 1e-6


def test_fit_rejects_nonfinite_values(unit_spec):
    nodes = np.array([[0.1, 0.2, 0.3], [0.5, 0.6, 0.7]])
    with pytest.raises(ValueError):
        rbf.fit(rbf.RbfKind("cubic"), nodes, np.array([1.0, np.nan]), unit_spec)


def test_fit_least_squares_underdetermined(unit_spec):
    # k = 2 < n + 1 forces the least-squares path for a degree-1 tail
    rng = np.random.default_rng(4)
    nodes = rng.uniform(size=(2, 3))
    values = np.array([1.0, 2.0])
    model = rbf.fit(rbf.RbfKind("cubic"), nodes, values, unit_spec)
    assert model.fit_method == "least_squares"
    # least squares cannot be worse than the zero vector
    mat, rhs, _ = rbf.assemble_system(rbf.RbfKind("cubic"), nodes, values, unit_spec)
    sol = np.concatenate([model.lam, model.alpha])
    assert np.linalg.norm(mat @ sol - rhs) <= np.linalg.norm(rhs) + 1e-9


def test_predict_linear_tail_only(unit_spec):
    model = rbf.fit(
        rbf.RbfKind("cubic"),
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
        np.array([1.0, 2.0, 0.0, 3.0]),
        unit_spec,
    )
    x = np.array([0.25, 0.5, 0.75])
    expect = sum(
        model.lam[i] * rbf.kernel_eval(model.kind, np.linalg.norm(x - model.nodes[i]))
        for i in range(4)
    ) + model.alpha_lin @ x + model.alpha_const
    assert rbf.predict(model, x) == pytest.approx(expect)


def _random_cat_instance(rng, kind_name):
    n_r = int(rng.integers(1, 3))
    sizes = [int(rng.integers(3, 5)) for _ in range(int(rng.integers(1, 3)))]
    spec = problem.ProblemSpec(
        lower=np.zeros(n_r), upper=np.ones(n_r), n_continuous=n_r, n_integer=0,
        categories=tuple(tuple(f"v{i}" for i in range(m)) for m in sizes),
        objective=None,
    )
    k = int(rng.integers(max(5, spec.ext_dim), 14))
    while True:
        nodes = problem.sample_uniform(spec, k, rng)
        d = np.linalg.norm(nodes[:, None] - nodes[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        if d.min() > 1e-8:
            break
    values = rng.normal(size=k)
    return spec, nodes, values


def test_prop2_zero_extension_satisfies_full_system():
    rng = np.random.default_rng(31)
    for _ in range(25):
        kind = rbf.RbfKind(("cubic", "thin_plate_spline")[int(rng.integers(2))])
        spec, nodes, values = _random_cat_instance(rng, kind)
        model = rbf.fit(kind, nodes, values, spec)
        if model.fit_method != "direct":
            continue
        # assemble the FULL system (no column elimination) and check the
        # zero-extended solution satisfies it
        k = nodes.shape[0]
        dmat = np.linalg.norm(nodes[:, None] - nodes[None, :], axis=2)
        phi = rbf.kernel_eval(kind, dmat)
        p_full = np.column_stack([nodes, np.ones(k)])
        top = np.hstack([phi, p_full])
        bottom = np.hstack([p_full.T, np.zeros((spec.ext_dim + 1, spec.ext_dim + 1))])
        full = np.vstack([top, bottom])
        sol = np.concatenate([model.lam, model.alpha])
        rhs = np.concatenate([model.fit_values, np.zeros(spec.ext_dim + 1)])
        assert np.abs(full @ sol - rhs).max() <= 1e-8
        for col in model.eliminated_columns:
            assert model.alpha[col] == 0.0


def _block_permutation(spec, rng):
    perm = np.arange(spec.ext_dim)
    for start, width in spec.unary_blocks:
        perm[start:start + width] = start + rng.permutation(width)
    return perm


def test_prop1_permutation_invariance():
    rng = np.random.default_rng(77)
    for _ in range(20):
        kind = rbf.RbfKind(rbf.KERNELS[int(rng.integers(5))])
        spec, nodes, values = _random_cat_instance(rng, kind)
        model = rbf.fit(kind, nodes, values, spec)
        if model.fit_method != "direct":
            continue
        perm = _block_permutation(spec, rng)
        model_p = rbf.fit(kind, nodes[:, perm], values, spec)
        queries = problem.sample_uniform(spec, 100, rng)
        before = rbf.predict(model, queries)
        after = rbf.predict(model_p, queries[:, perm])
        assert np.abs(before - after).max() <= 1e-8


def test_bumpiness_closed_form(unit_spec):
    spec2 = problem.continuous_spec(None, [0, 0], [1, 1])
    r = 0.6
    mu = rbf.bumpiness_mu(
        np.zeros((1, 2)), rbf.RbfKind("gaussian", 1.0), np.array([r, 0.0]), spec2
    )
    assert mu == pytest.approx(1.0 / (1.0 - math.exp(-2 * r * r)), rel=1e-10)


def test_bumpiness_at_node_signal(unit_spec):
    nodes = np.array([[0.2, 0.3, 0.4]])
    mu = rbf.bumpiness_mu(nodes, rbf.RbfKind("cubic"), nodes[0], unit_spec)
    assert mu is None


def test_bumpiness_sign_property():
    rng = np.random.default_rng(5)
    spec2 = problem.continuous_spec(None, [0, 0], [1, 1])
    for kind in KINDS:
        nodes = rng.uniform(size=(6, 2))
        model = rbf.fit(kind, nodes, rng.uniform(size=6), spec2)
        ys = rng.uniform(size=(20, 2))
        mu = rbf.bumpiness_mu_batch(model, ys, spec2)
        signed = (-1.0) ** (kind.degree + 1) * mu[~np.isnan(mu)]
        assert signed.min() >= -1e-10


def test_bumpiness_batch_matches_single(unit_spec):
    rng = np.random.default_rng(6)
    nodes = rng.uniform(size=(5, 3))
    model = rbf.fit(rbf.RbfKind("cubic"), nodes, rng.uniform(size=5), unit_spec)
    ys = rng.uniform(size=(8, 3))
    batch = rbf.bumpiness_mu_batch(model, ys, unit_spec)
    for i in range(8):
        single = rbf.bumpiness_mu(nodes, model.kind, ys[i], unit_spec)
        assert batch[i] == pytest.approx(single, rel=1e-7)


def test_unsolvable_system_raises():
    # two nodes separated by more than the duplicate tolerance but
    # numerically indistinguishable under a gaussian kernel, with
    # incompatible values: even least squares cannot fit them
    spec = problem.continuous_spec(None, [0], [1])
    nodes = np.array([[0.5], [0.5 + 1e-9]])
    with pytest.raises(UnsolvableSystemError):
        rbf.fit(rbf.RbfKind("gaussian", 1.0), nodes, np.array([0.0, 1.0]), spec)


def test_clip_above_median():
    spec = problem.continuous_spec(None, [0], [1])
    nodes = np.linspace(0, 1, 7)[:, None]
    values = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 1e7])
    model = rbf.fit(rbf.RbfKind("cubic"), nodes, values, spec, clip_above_median=True)
    assert model.fit_values.max() == np.median(values)
    assert np.all(model.values == values)
    model2 = rbf.fit(rbf.RbfKind("cubic"), nodes, values, spec)
    assert model2.fit_values.max() == 1e7
