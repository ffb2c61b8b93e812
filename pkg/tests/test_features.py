import dataclasses

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from peerlens.features import (DEFAULT_FEATURES, DROP_ORDER, FILTERED_FEATURES, MERGED_FEATURES,
                               REMOVED_FEATURES, FeatureEncoder, FeatureSchema, Variant,
                               build_feature_table, correlation_matrix, encode, fit_encoders,
                               load_feature_table, save_feature_table, select_features)

AS_RANK_COLS = ["asn", "total", "customer", "peer", "provider", "asnName", "Clique-Member", "NumberASNs",
                "NumberPrefix", "NumberAddrs", "Country", "IXP", "Latitude", "Longitude", "Org", "Rank",
                "Seen", "Source"]
REMOVED = ["Clique-Member", "IXP", "Seen", "status", "policy_ratio", "info_unicast", "rir_status",
           "policy_general", "rir_status_updated", "route_server", "status_dashboard", "info_multicast",
           "policy_contracts", "info_never_via_route_servers", "info_ipv6"]
TOP16 = ["customer", "peer", "NumberAddrs", "NumberPrefix", "total", "Rank", "NumberASNs", "info_prefixes4",
         "ix_count", "info_prefixes6", "fac_count", "provider", "asn", "Latitude", "created", "Longitude"]


def test_frozen_lists():
    assert list(REMOVED_FEATURES) == REMOVED
    assert list(FILTERED_FEATURES) == TOP16
    assert len(MERGED_FEATURES) == 56 and len(set(MERGED_FEATURES)) == 56
    assert list(MERGED_FEATURES[:18]) == AS_RANK_COLS
    assert "id" not in MERGED_FEATURES
    assert len(DEFAULT_FEATURES) == 41
    assert set(REMOVED_FEATURES) <= set(MERGED_FEATURES)


def test_drop_order_covers_default_and_ends_with_top16():
    assert len(DROP_ORDER) == 41 and set(DROP_ORDER) == set(DEFAULT_FEATURES)
    assert list(DROP_ORDER[-16:][::-1]) == TOP16


@pytest.mark.parametrize("variant,width", [("default", 41), ("filtered", 16), ("optimum", 16)])
def test_select_widths(snap200, variant, width):
    raw = select_features(snap200, variant)
    assert raw.shape == (len(snap200.common_asns), width)
    if variant != "default":
        assert list(raw.columns) == TOP16


def test_unknown_variant(snap200):
    with pytest.raises(ValueError):
        select_features(snap200, "best")


def test_only_common_ases(snap200):
    raw = select_features(snap200, "filtered")
    assert set(raw["asn"].astype(int)) == set(snap200.common_asns)
    only_rank = set(snap200.as_rank["asn"]) - set(snap200.common_asns)
    assert only_rank  # the synthetic snapshot has some
    assert not only_rank & set(raw["asn"].astype(int))


def _tiny(**cols):
    return pd.DataFrame(cols)


def test_lexicographic_codes():
    raw = _tiny(Country=["EU", "NA", "EU"])
    schema = fit_encoders(raw, "default")
    assert schema.encoders["Country"] == ("EU", "NA")
    t = encode(raw, schema, asns=[1, 2, 3])
    assert t.values[:, 0].tolist() == [0.0, 1.0, 0.0]


def test_codes_ignore_fit_order():
    a = fit_encoders(_tiny(Country=["NA", "EU", None]), "default")
    b = fit_encoders(_tiny(Country=["EU", None, "NA"]), "default")
    assert a == b and a.fingerprint == b.fingerprint


def test_boolean_map():
    raw = _tiny(route_server=pd.array([True, False, None], dtype="boolean"))
    t = encode(raw, fit_encoders(raw, "default"), asns=[1, 2, 3])
    assert t.values[:2, 0].tolist() == [1.0, 0.0] and np.isnan(t.values[2, 0])


def test_datetime_epoch():
    raw = _tiny(created=["1970-01-01T00:01:00Z", None])
    t = encode(raw, fit_encoders(raw, "filtered"), asns=[1, 2])
    assert t.values[0, 0] == 60.0 and np.isnan(t.values[1, 0])


def test_numeric_passthrough():
    raw = _tiny(Rank=pd.array([152, None], dtype="Int64"))
    t = encode(raw, fit_encoders(raw, "filtered"), asns=[1, 2])
    assert t.values[0, 0] == 152.0 and np.isnan(t.values[1, 0])


def test_unseen_category_is_missing_with_warning():
    schema = fit_encoders(_tiny(Country=["EU", "NA"]), "default")
    t = encode(_tiny(Country=["SA", "NA"]), schema, asns=[1, 2])
    assert np.isnan(t.values[0, 0]) and t.values[1, 0] == 1.0
    assert t.warnings and "unseen" in t.warnings[0]


def test_column_mismatch():
    schema = fit_encoders(_tiny(Country=["EU"]), "default")
    with pytest.raises(ValueError):
        encode(_tiny(Org=["x"]), schema, asns=[1])


def test_empty_table():
    with pytest.raises(ValueError):
        fit_encoders(pd.DataFrame({"Rank": []}), "filtered")


def test_codes_in_range(snap200):
    t = build_feature_table(snap200, "default")
    for j, (name, kind) in enumerate(t.schema.columns):
        if kind == "categorical":
            col = t.values[:, j]
            col = col[~np.isnan(col)]
            assert ((0 <= col) & (col < len(t.schema.encoders[name]))).all()
            assert np.array_equal(col, np.round(col))


def test_encode_twice_identical(snap200):
    raw = select_features(snap200, "default")
    schema = fit_encoders(raw)
    a, b = encode(raw, schema), encode(raw, schema)
    assert np.array_equal(a.values, b.values, equal_nan=True)


def test_schema_round_trip(snap200):
    schema = build_feature_table(snap200, "default").schema
    back = FeatureSchema.from_dict(schema.to_dict())
    assert back == schema and back.fingerprint == schema.fingerprint
    with pytest.raises(ValueError):
        FeatureSchema.from_dict({**schema.to_dict(), "version": 99})


def test_pair_columns_order():
    schema = fit_encoders(_tiny(Rank=[1], asn=[1]), "optimum")
    assert schema.pair_columns() == ["Rank_a", "asn_a", "Rank_b", "asn_b", "cone_overlap", "affinity_score"]


def test_feature_table_cache_round_trip(snap200, tmp_path):
    t = build_feature_table(snap200, "default")
    save_feature_table(t, tmp_path, snapshot_date="2024-01-01")
    back = load_feature_table(tmp_path)
    assert back.schema == t.schema
    assert np.array_equal(back.asns, t.asns)
    assert np.array_equal(back.values, t.values, equal_nan=True)


def test_sklearn_encoder(snap200):
    raw = select_features(snap200, "filtered")
    enc = FeatureEncoder(variant="filtered").fit(raw)
    assert list(enc.get_feature_names_out()) == TOP16
    assert np.array_equal(enc.transform(raw), build_feature_table(snap200, "filtered").values, equal_nan=True)


text = st.sampled_from(["a", "b", "c", "EU", "NA", None])
num = st.one_of(st.none(), st.integers(-1000, 1000))


@given(st.lists(st.tuples(text, num), min_size=1, max_size=30))
def test_encode_is_pure(rows):
    raw = pd.DataFrame({"Country": [r[0] for r in rows],
                        "Rank": pd.array([r[1] for r in rows], dtype="Int64")})
    schema = fit_encoders(raw, "default")
    a = encode(raw, schema, asns=range(len(rows)))
    b = encode(raw.copy(), FeatureSchema.from_dict(schema.to_dict()), asns=range(len(rows)))
    assert np.array_equal(a.values, b.values, equal_nan=True)
    vocab = sorted({r[0] for r in rows if r[0] is not None})
    for i, (c, r) in enumerate(rows):
        assert (np.isnan(a.values[i, 0]) if c is None else a.values[i, 0] == vocab.index(c))
        assert (np.isnan(a.values[i, 1]) if r is None else a.values[i, 1] == r)


# ------------------------------------------------------------ correlation

def pearson_textbook(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = (sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y)) ** 0.5
    return num / den


def test_correlation_five_rows():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    y = [2.0, 1.0, 4.0, 3.0, 7.0]
    z = [5.0, 3.0, 2.5, 1.0, 0.0]
    res = correlation_matrix(np.column_stack([x, y, z]), ["x", "y", "z"])
    assert res.matrix[0, 1] == pytest.approx(pearson_textbook(x, y), abs=1e-12)
    assert res.matrix[0, 2] == pytest.approx(pearson_textbook(x, z), abs=1e-12)
    assert res.matrix[1, 2] == pytest.approx(pearson_textbook(y, z), abs=1e-12)
    # by hand: Sxy = 12, Sxx = 10, Syy = 21.2
    assert res.matrix[0, 1] == pytest.approx(12 / 212 ** 0.5, abs=1e-12)


def test_correlation_self_and_negation():
    x = np.array([1.0, 4.0, 2.0, 8.0])
    res = correlation_matrix(np.column_stack([x, -x, x]))
    assert res.matrix[0, 0] == 1.0
    assert res.matrix[0, 1] == pytest.approx(-1.0)
    assert res.matrix[0, 2] == pytest.approx(1.0)


def test_correlation_pairwise_complete():
    x = np.array([1.0, 2.0, np.nan, 4.0, 5.0])
    y = np.array([2.0, 4.0, 100.0, 8.0, np.nan])
    res = correlation_matrix(np.column_stack([x, y]))
    assert res.matrix[0, 1] == pytest.approx(1.0)


def test_zero_variance_flagged():
    res = correlation_matrix(np.column_stack([[1.0, 2.0, 3.0], [7.0, 7.0, 7.0]]), ["a", "b"])
    assert res.matrix[0, 1] == 0.0 and res.zero_variance == ["b"]


def test_correlation_needs_two_rows():
    with pytest.raises(ValueError):
        correlation_matrix(np.ones((1, 3)))


def test_cluster_order_is_permutation(snap200):
    res = correlation_matrix(build_feature_table(snap200, "filtered"), cluster=True)
    assert sorted(res.order) == list(range(16))
    names, m = res.ordered()
    assert sorted(names) == sorted(TOP16) and np.allclose(m, m.T)


@given(st.integers(0, 2**31), st.integers(2, 30), st.integers(1, 6))
def test_correlation_properties(seed, n, d):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, d))
    v[rng.random((n, d)) < 0.2] = np.nan
    m = correlation_matrix(v).matrix
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 1.0)
    assert np.all(np.abs(m) <= 1.0)
