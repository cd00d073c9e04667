import numpy as np
import pytest

from scrfit.covariates import CovariateSurface
from scrfit.model import (CovariateRegistry, Dims, ParameterVector, build_design, count_parameters, design_row,
                          link_density, link_p0, link_sigma, logit, parse_formula)

S, J, K, G = 3, 4, 24, 6
DIMS = Dims(G, J, K, S)


@pytest.fixture
def registry():
    rng = np.random.default_rng(0)
    hours = np.arange(K)
    tw = 0.02 + 0.03 * np.sin(hours / 24 * 2 * np.pi) ** 2
    return CovariateRegistry([
        CovariateSurface("tweetogram", "occasion", tw),
        CovariateSurface("proximity", "trap", rng.uniform(100, 9000, J)),
        CovariateSurface("proximity", "statespace", rng.uniform(100, 9000, G)),
        CovariateSurface("street_degree", "statespace", rng.normal(size=G)),
        CovariateSurface("metro_betweenness", "statespace", rng.normal(size=G)),
        CovariateSurface("street_betweenness", "statespace", rng.normal(size=G)),
        CovariateSurface("pc2", "statespace", rng.normal(size=G)),
    ])


# the eight shapes of the published ranking table with their K column
CATALOGUE = [
    ("D~street_degree+metro_betweenness; p0~tweetogram+session; sigma~session", 10),
    ("D~session; p0~session; sigma~session", 9),
    ("D~proximity; p0~1; sigma~1", 4),
    ("D~1; p0~1; sigma~1", 3),
    ("D~1; p0~proximity; sigma~1", 4),
    ("D~street_betweenness; p0~proximity; sigma~session", 7),
    ("D~street_degree; p0~proximity; sigma~session", 7),
    ("D~pc2; p0~proximity; sigma~session", 7),
]


@pytest.mark.parametrize("text,k", CATALOGUE)
def test_parameter_count_matches_table(text, k, registry):
    f = parse_formula(text, registry)
    assert count_parameters(f, S) == k
    assert build_design(f, registry, DIMS).n_params == k


def test_null_formula():
    f = parse_formula("D~1; p0~1; sigma~1")
    assert f.density == f.p0 == f.sigma == ()
    assert str(f) == "D~1; p0~1; sigma~1"


def test_dict_formula_and_aliases(registry):
    a = parse_formula({"density": "~street_degree", "p0": "~session", "sigma": "~1"}, registry)
    b = parse_formula("d ~ street_degree ;  p0~session; sig~1", registry)
    assert a == b
    assert parse_formula(a.to_dict()) == a


def test_parse_errors(registry):
    with pytest.raises(ValueError, match="nonexistent"):
        parse_formula("p0~nonexistent", registry)
    with pytest.raises(ValueError, match="not allowed for sigma"):
        parse_formula("sigma~proximity", registry)
    with pytest.raises(ValueError):
        parse_formula("D~1; D~1")
    with pytest.raises(ValueError):
        parse_formula("q~1")
    with pytest.raises(ValueError):
        parse_formula("D~x*y")


def test_intercept_only_columns(registry):
    d = build_design(parse_formula("D~1"), registry, DIMS)
    for X in (d.X_p0, d.X_sigma, d.X_density):
        assert X.shape[1] == 1 and np.all(X == 1.0)
    assert d.X_p0.shape[0] == S * J * K and d.X_density.shape[0] == S * G and d.X_sigma.shape[0] == S


def test_session_dummies_treatment_coded(registry):
    d = build_design(parse_formula("p0~session; sigma~session"), registry, DIMS)
    assert d.names_p0 == ["p0.(Intercept)", "p0.session2", "p0.session3"]
    assert d.names_sigma == ["sig.(Intercept)", "sig.session2", "sig.session3"]
    np.testing.assert_array_equal(d.X_sigma, [[1, 0, 0], [1, 1, 0], [1, 0, 1]])
    sess = np.repeat(np.arange(S), J * K)
    np.testing.assert_array_equal(d.X_p0[:, 1], sess == 1)
    np.testing.assert_array_equal(d.X_p0[:, 2], sess == 2)


def test_tweetogram_column_varies_by_occasion_only(registry):
    d = build_design(parse_formula("p0~tweetogram"), registry, DIMS, standardize_covariates=False)
    col = d.X_p0[:, 1].reshape(S, J, K)
    tw = registry.resolve("tweetogram", "p0").values
    for s in range(S):
        for j in range(J):
            np.testing.assert_array_equal(col[s, j], tw)


def test_standardized_columns_and_raw_mode(registry):
    d = build_design(parse_formula("D~street_degree"), registry, DIMS)
    col = d.X_density[:G, 1]
    assert abs(col.mean()) < 1e-12 and col.std(ddof=1) == pytest.approx(1.0)
    raw = build_design(parse_formula("D~street_degree"), registry, DIMS, standardize_covariates=False)
    np.testing.assert_array_equal(raw.X_density[:G, 1], registry.resolve("street_degree", "density").values)


def test_scope_disambiguation(registry):
    d = build_design(parse_formula("D~proximity; p0~proximity"), registry, DIMS, standardize_covariates=False)
    np.testing.assert_array_equal(d.X_density[:G, 1], registry.resolve("proximity", "density").values)
    np.testing.assert_array_equal(d.X_p0[:K, 1], np.full(K, registry.resolve("proximity", "p0").values[0]))


def test_rank_deficiency_names_columns(registry):
    registry.add(CovariateSurface("copy", "statespace", registry.resolve("street_degree", "density").values * 2))
    with pytest.raises(ValueError, match="d.beta.copy"):
        build_design(parse_formula("D~street_degree+copy"), registry, DIMS)


def test_design_reproducible(registry):
    f = parse_formula(CATALOGUE[0][0], registry)
    a, b = build_design(f, registry, DIMS), build_design(f, registry, DIMS)
    for x, y in ((a.X_p0, b.X_p0), (a.X_sigma, b.X_sigma), (a.X_density, b.X_density)):
        assert x.tobytes() == y.tobytes()


def test_pack_order(registry):
    d = build_design(parse_formula(CATALOGUE[0][0], registry), registry, DIMS)
    theta = np.arange(10.0)
    pv = ParameterVector.unpack(theta, d)
    assert len(pv.alpha) == 4 and len(pv.gamma) == 3 and len(pv.beta) == 3
    np.testing.assert_array_equal(pv.pack(), theta)


def test_link_examples():
    assert link_p0(0.0) == 0.5
    assert float(link_p0(-7.302)) == pytest.approx(6.73e-4, rel=2e-3)
    # the intercept is printed to 3 decimals, so exp() is only good to exp(+-0.0005)
    assert float(link_sigma(8.068)) == pytest.approx(3189.74, rel=np.expm1(0.0005))
    assert float(link_density(0.0)) == 1.0


def test_link_clamp_finite():
    assert np.isfinite(link_sigma(1e6)) and link_sigma(1e6) == np.exp(40.0)
    assert 0 < link_p0(-1e6) < 1 and link_p0(1e6) <= 1


def test_link_roundtrip():
    p = np.linspace(1e-6, 1 - 1e-6, 1001)
    np.testing.assert_allclose(link_p0(logit(p)), p, rtol=1e-12, atol=0)
    s = np.geomspace(1.0, 1e6, 200)
    np.testing.assert_allclose(link_sigma(np.log(s)), s, rtol=1e-12)


def test_design_row_scaling(registry):
    d = build_design(parse_formula("D~street_degree+session"), registry, DIMS)
    raw = registry.resolve("street_degree", "density").values
    row, outside = design_row(d, "density", {"street_degree": raw[2]}, session=1)
    np.testing.assert_allclose(row, d.X_density[G + 2], atol=1e-12)
    assert outside == []
    _, outside = design_row(d, "density", {"street_degree": raw.max() + 10}, session=0)
    assert outside == ["street_degree"]
