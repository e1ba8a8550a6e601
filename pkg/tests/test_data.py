import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdlina.data import (
    DomainDataset,
    Hyperparams,
    MultiDomainDataset,
    augment,
    load_config,
    read_domain_csv,
    read_manifest,
    standardize,
    write_domain_csv,
    write_manifest,
)
from mdlina.errors import DataError, EmptyDomain, UsageError, ZeroVarianceVariable


def test_standardize_three_points():
    d = standardize(DomainDataset([[1.0, 2.0, 3.0], [2.0, 0.0, 1.0]], None))
    np.testing.assert_allclose(d.data[0], [-1.0, 0.0, 1.0])


def test_standardize_moments_and_idempotence():
    rng = np.random.default_rng(0)
    d = standardize(DomainDataset(rng.normal(3, 5, (5, 100)), None))
    assert np.all(np.abs(d.data.mean(axis=1)) < 1e-10)
    np.testing.assert_allclose(d.data.var(axis=1, ddof=1), 1.0, atol=1e-8)
    np.testing.assert_allclose(standardize(d).data, d.data, atol=1e-10)


def test_zero_variance_is_an_error():
    with pytest.raises(ZeroVarianceVariable) as err:
        standardize(DomainDataset([[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]], None))
    assert err.value.index == 1


def test_domain_validation():
    with pytest.raises(DataError):
        DomainDataset([[1.0, np.nan, 2.0], [1.0, 2.0, 3.0]], None)
    with pytest.raises(DataError):
        DomainDataset([[1.0, 2.0]], None)
    with pytest.raises(DataError):
        MultiDomainDataset(())


def test_augment_two_domain_example():
    aug = augment([np.array([[1.0, 2.0]]), np.array([[3.0]])])
    np.testing.assert_array_equal(aug.data, [[1, 2, 0], [0, 0, 3]])


def test_augment_single_domain():
    X = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(augment([X]).data, X)


@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 6)), min_size=1, max_size=4), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_augment_round_trip_and_zero_fraction(shapes, seed):
    rng = np.random.default_rng(seed)
    blocks = [rng.uniform(0.5, 1.5, s) for s in shapes]
    aug = augment(blocks)
    p = sum(b.shape[0] for b in blocks)
    n = sum(b.shape[1] for b in blocks)
    assert aug.data.shape == (p, n)
    for m, b in enumerate(blocks, start=1):
        np.testing.assert_array_equal(aug.block(m), b)
    zero_frac = np.mean(aug.data == 0)
    assert zero_frac == pytest.approx(1 - sum(b.size for b in blocks) / (p * n), abs=1e-15)


def test_augment_three_domains_shape():
    rng = np.random.default_rng(1)
    md = MultiDomainDataset.from_arrays([rng.normal(size=(pm, nm)) for pm, nm in ((2, 4), (3, 5), (1 + 1, 6))])
    aug = augment(md)
    assert aug.data.shape == (7, 15)
    for d in md.domains:
        ex = aug.extract(d.domain_id)
        np.testing.assert_array_equal(ex.data, d.data)
        assert ex.variable_names == d.variable_names


def test_augment_empty_domain():
    with pytest.raises(EmptyDomain):
        augment([np.ones((2, 3)), np.ones((2, 0))])


def test_csv_and_manifest_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    d1 = DomainDataset(rng.normal(size=(3, 7)), ("a", "b", "c"), 1)
    d2 = DomainDataset(rng.normal(size=(2, 5)), ("u", "v"), 2)
    write_domain_csv(tmp_path / "one.csv", d1)
    write_domain_csv(tmp_path / "two.csv", d2)
    write_manifest(tmp_path / "m.json", ["one.csv", "two.csv"])
    md = read_manifest(tmp_path / "m.json")
    assert md.M == 2 and md.total_p == 5 and md.total_n == 12
    np.testing.assert_array_equal(md.domains[0].data, d1.data)
    assert md.domains[1].variable_names == ("u", "v")


def test_csv_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,x\n")
    with pytest.raises(DataError):
        read_domain_csv(tmp_path / "bad.csv")
    with pytest.raises(OSError):
        read_domain_csv(tmp_path / "missing.csv")


def test_hyperparams_defaults_and_config(tmp_path):
    hp = Hyperparams()
    assert (hp.lambda1, hp.lambda2, hp.lambda3, hp.threshold_eps) == (0.1, 0.1, 0.1, 0.3)
    (tmp_path / "c.json").write_text(json.dumps({"lambda1": 0.5, "penalty_mode": "ALM"}))
    loaded = load_config(tmp_path / "c.json")
    assert loaded.lambda1 == 0.5 and loaded.penalty_mode == "alm"
    assert Hyperparams.from_dict(loaded.to_dict()) == loaded
    with pytest.raises(UsageError):
        Hyperparams(rho_mult=1.0)
    (tmp_path / "bad.json").write_text(json.dumps({"lambda9": 1}))
    with pytest.raises(UsageError):
        load_config(tmp_path / "bad.json")
