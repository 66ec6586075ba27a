import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clustercomm.comm import (CommVariant, Message, ProtocolError, Variant, assemble_inbox,
                              emit_message, emit_payload, encode_inbox, encode_message,
                              encode_payload, message_input_width)
from clustercomm.kmeans import CentroidTable


def two_centroids():
    return CentroidTable(2, 2, np.array([[0.0, 0.0], [10.0, 10.0]]), np.zeros(2, np.int64), True)


def test_variant_parsing():
    assert Variant.parse("ClusterComm") is Variant.CLUSTER
    assert Variant.parse("centroid") is Variant.CENTROID
    assert Variant.parse("spherical-clustercomm") is Variant.SPHERICAL
    with pytest.raises(ValueError):
        Variant.parse("telepathy")
    with pytest.raises(ValueError):
        CommVariant("clustercomm", k=1)


def test_emit_examples():
    table, rep = two_centroids(), np.array([1.0, 1.0])
    assert emit_message(CommVariant("latentcomm", d=2), rep) == Message.vector(rep)
    assert emit_message(CommVariant("clustercomm", k=2, d=2), rep, table) == Message.index(0)
    assert emit_message(CommVariant("spherical", k=2, d=2), rep, table) == Message.index(0)
    cv = CommVariant("centroidcomm", k=2, d=2)
    assert emit_message(cv, rep, table) == Message.vector([0.0, 0.0])
    assert emit_message(cv.with_index_mode(), rep, table) == Message.index(0)
    assert emit_message(CommVariant("nocomm"), rep) == Message.none()
    assert emit_message(CommVariant("random"), rep) == Message.none()


def test_uninitialized_table_emits_placeholder():
    rep = np.ones(2)
    blank = CentroidTable(2, 2)
    assert emit_message(CommVariant("clustercomm", k=2, d=2), rep, blank) == Message.index(0)
    assert emit_message(CommVariant("clustercomm", k=2, d=2), rep, None) == Message.index(0)
    cv = CommVariant("centroidcomm", k=2, d=2)
    assert emit_message(cv, rep, blank) == Message.vector(np.zeros(2))


def test_encode_inbox_examples():
    cv = CommVariant("clustercomm", k=8)
    v = encode_inbox(cv, [Message.index(2), Message.index(5)])
    assert v.shape == (16,) and np.flatnonzero(v).tolist() == [2, 13]
    latent = CommVariant("latentcomm", d=4)
    x = np.array([0.5, -1.0, 2.0, 0.0])
    np.testing.assert_array_equal(encode_inbox(latent, [Message.vector(x)]), x)
    assert encode_inbox(CommVariant("nocomm"), [Message.none()]).shape == (0,)


def test_first_step_slots_are_zero():
    cv = CommVariant("clustercomm", k=8)
    v = encode_inbox(cv, [None, None, None])
    assert v.shape == (24,) and not v.any()
    assert not encode_message(CommVariant("latentcomm", d=32), None).any()


@settings(max_examples=100, deadline=None)
@given(idx=st.lists(st.integers(0, 15), min_size=1, max_size=3))
def test_one_hot_slots_sum_to_one(idx):
    cv = CommVariant("clustercomm", k=16)
    v = encode_inbox(cv, [Message.index(i) for i in idx]).reshape(len(idx), 16)
    assert np.all(v.sum(axis=1) == 1.0)
    assert np.argmax(v, axis=1).tolist() == idx


def test_protocol_violations():
    cv = CommVariant("clustercomm", k=8)
    with pytest.raises(ProtocolError):
        encode_inbox(cv, [Message.index(1), Message.vector(np.zeros(8))])
    with pytest.raises(ProtocolError):
        encode_message(cv, Message.vector(np.zeros(8)))
    with pytest.raises(ProtocolError):
        encode_message(cv, Message.index(8))
    with pytest.raises(ProtocolError):
        encode_message(CommVariant("latentcomm", d=4), Message.vector(np.zeros(3)))
    with pytest.raises(ProtocolError):
        encode_inbox(CommVariant("nocomm"), [Message.index(0)])
    with pytest.raises(ProtocolError):
        Message.vector([np.nan])
    with pytest.raises(ProtocolError):
        encode_message(CommVariant("centroidcomm", k=2, d=2, test_time_index_mode=True),
                       Message.index(0))


def test_message_input_width():
    assert message_input_width("clustercomm", 4, k=8) == 24
    assert message_input_width("nocomm", 3) == 0
    assert message_input_width("random", 2) == 0
    assert message_input_width("centroidcomm", 2, d=32) == 32
    assert message_input_width("latentcomm", 3, d=32) == 64
    with pytest.raises(ValueError):
        message_input_width("clustercomm", 1)


def test_centroid_index_mode_decodes_to_same_slot():
    rng = np.random.default_rng(0)
    table = CentroidTable(4, 3, rng.standard_normal((4, 3)), np.zeros(4, np.int64), True)
    vec_cv = CommVariant("centroidcomm", k=4, d=3)
    idx_cv = vec_cv.with_index_mode()
    for rep in rng.standard_normal((50, 3)):
        a = encode_message(vec_cv, emit_message(vec_cv, rep, table))
        b = encode_message(idx_cv, emit_message(idx_cv, rep, table), table.copy())
        assert a.tobytes() == b.tobytes()


def test_emission_is_pure():
    table = two_centroids()
    cv = CommVariant("clustercomm", k=2, d=2)
    rep = np.array([3.0, 4.0])
    assert emit_message(cv, rep, table) == emit_message(cv, rep.copy(), table)


@pytest.mark.parametrize("variant", ["latentcomm", "clustercomm", "spherical", "centroidcomm"])
def test_batch_forms_match_single_message_forms(variant):
    rng = np.random.default_rng(1)
    cv = CommVariant(variant, k=4, d=3)
    table = CentroidTable(4, 3, rng.standard_normal((4, 3)), np.zeros(4, np.int64), True)
    reps = rng.standard_normal((20, 3))
    batch = encode_payload(cv, emit_payload(cv, reps, table), table)
    single = np.stack([encode_message(cv, emit_message(cv, r, table), table) for r in reps])
    np.testing.assert_array_equal(batch, single)
    assert emit_payload(CommVariant("nocomm"), reps, None) is None


def test_assemble_inbox_orders_by_sender():
    slots = [np.full((2, 3), float(i)) for i in range(3)]
    inbox = assemble_inbox(slots, 1)
    assert inbox.shape == (2, 6)
    assert inbox[0].tolist() == [0, 0, 0, 2, 2, 2]
    empty = assemble_inbox([np.zeros((2, 0))] * 2, 0)
    assert empty.shape == (2, 0)
