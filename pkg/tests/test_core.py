"""Domain-type invariants: schemas, slates, feedback bundles, profile encoding."""

import numpy as np
import pytest

from slatesim.core import (
    BehaviorSchema, FeatureSpec, FeedbackBundle, FieldSpec, ItemCatalog,
    Observation, SlateAction, UserCatalog, UserProfile, KUAIRAND_SCHEMA,
    encode_profile, fit_feature_spec, validate_slate,
)


def _catalog(n=10, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return ItemCatalog(ids=np.arange(n, dtype=np.int64),
                       item_features=rng.normal(size=(n, dim)).astype(np.float32))


class TestBehaviorSchema:
    def test_kuairand_layout(self):
        assert KUAIRAND_SCHEMA.b == 7
        assert KUAIRAND_SCHEMA.names[0] == "click"
        assert KUAIRAND_SCHEMA.negative_index == KUAIRAND_SCHEMA.index("hate")
        assert KUAIRAND_SCHEMA.max_step_reward == 6.0

    def test_two_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            BehaviorSchema(names=("a", "b"), weights=(-1.0, -1.0))

    def test_nonfinite_weight_rejected(self):
        with pytest.raises(ValueError):
            BehaviorSchema(names=("a",), weights=(float("inf"),))


class TestValidateSlate:
    def test_well_formed(self):
        cat = _catalog()
        assert validate_slate(SlateAction((5, 9, 2)), cat, k=3) is None

    def test_duplicate_item(self):
        cat = _catalog()
        assert validate_slate(SlateAction((5, 5, 2)), cat, k=3) == "duplicate item"

    def test_wrong_length(self):
        cat = _catalog()
        assert validate_slate(SlateAction((5, 9)), cat, k=3) == "wrong length"

    def test_unknown_item(self):
        cat = _catalog(n=6)
        assert validate_slate(SlateAction((5, 9, 2)), cat, k=3) == "unknown item"

    def test_exhaustive_small_catalog(self):
        # all length-2 tuples over ids {-1..3} against a 3-item catalog
        cat = _catalog(n=3)
        for a in range(-1, 4):
            for b in range(-1, 4):
                verdict = validate_slate(SlateAction((a, b)), cat, k=2)
                ok = (a != b) and 0 <= a < 3 and 0 <= b < 3
                assert (verdict is None) == ok

    def test_empty_catalog_raises(self):
        cat = ItemCatalog(ids=np.array([], dtype=np.int64),
                          item_features=np.zeros((0, 2), dtype=np.float32))
        with pytest.raises(ValueError):
            validate_slate(SlateAction((0,)), cat)


class TestFeedbackBundle:
    def test_leave_return_day_coupling(self):
        FeedbackBundle(np.zeros((2, 3), dtype=np.int8), leave=0, return_day=0, reward=0.0)
        FeedbackBundle(np.zeros((2, 3), dtype=np.int8), leave=1, return_day=4, reward=0.0)
        with pytest.raises(ValueError):
            FeedbackBundle(np.zeros((2, 3), dtype=np.int8), leave=0, return_day=2, reward=0.0)
        with pytest.raises(ValueError):
            FeedbackBundle(np.zeros((2, 3), dtype=np.int8), leave=1, return_day=0, reward=0.0)


class TestEncodeProfile:
    SPEC = FeatureSpec((
        FieldSpec("color", levels=("blue", "green", "red")),
        FieldSpec("age", kind="numeric"),
    ))

    def test_one_hot_segment(self):
        vec = encode_profile({"color": "green", "age": 2}, self.SPEC)
        np.testing.assert_array_equal(vec[:3], [0.0, 1.0, 0.0])
        assert vec[3] == 2.0

    def test_unknown_category_all_zero(self):
        vec = encode_profile({"color": "UNKNOWN", "age": 0}, self.SPEC)
        np.testing.assert_array_equal(vec[:3], [0.0, 0.0, 0.0])

    def test_deterministic(self):
        raw = {"color": "red", "age": 7}
        a = encode_profile(raw, self.SPEC)
        b = encode_profile(dict(raw), self.SPEC)
        np.testing.assert_array_equal(a, b)

    def test_missing_field_raises(self):
        with pytest.raises(ValueError):
            encode_profile({"color": "red"}, self.SPEC)

    def test_fit_feature_spec_levels_sorted(self):
        rows = [{"x": "b"}, {"x": "a"}, {"x": "b"}]
        spec = fit_feature_spec(rows, ["x"])
        assert spec.fields[0].levels == ("a", "b")
        assert spec.dim == 2


class TestObservation:
    def test_mask_flags_padding(self):
        profile = UserProfile(3, np.zeros(2, dtype=np.float32))
        obs = Observation(profile, np.zeros(5, dtype=np.int64),
                          np.zeros((5, 7), dtype=np.int8), history_len=2)
        np.testing.assert_array_equal(obs.mask, [False, False, False, True, True])

    def test_misaligned_history_rejected(self):
        profile = UserProfile(3, np.zeros(2, dtype=np.float32))
        with pytest.raises(ValueError):
            Observation(profile, np.zeros(5, dtype=np.int64),
                        np.zeros((4, 7), dtype=np.int8), history_len=2)


class TestCatalogs:
    def test_duplicate_user_ids_rejected(self):
        with pytest.raises(ValueError):
            UserCatalog(ids=np.array([1, 1]), dense_features=np.zeros((2, 3), dtype=np.float32))

    def test_profile_view(self):
        cat = UserCatalog(ids=np.array([10, 20]),
                          dense_features=np.arange(6, dtype=np.float32).reshape(2, 3))
        p = cat.profile(1)
        assert p.user_id == 20
        assert p.feature_dim == 3
