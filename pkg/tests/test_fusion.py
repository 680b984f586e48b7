import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partfusion.errors import AllZeroWeights
from partfusion.fusion import (
    KpfConfig, Overlap, kpf, nms, pf_clusters, pf_kiou, preprocess_run, same_proposals, weighted_average,
)
from partfusion.geometry import box_iou, rotation_about_axis
from partfusion.kinematics import kiou
from partfusion.types import JointParams, JointType, PoseSize

from conftest import door, make_proposal, random_pose, random_rotation
from oracles import reference_nms


def box_at(center, size=(0.4, 0.4, 0.4), objectness=0.9, rotation=None):
    pose = PoseSize(np.eye(3) if rotation is None else rotation, center, size)
    return make_proposal(pose, objectness=objectness)


def door_proposal(angle, objectness=0.9):
    pose, joint = door(angle)
    return make_proposal(pose, joint, objectness=objectness)


def test_config_validation():
    with pytest.raises(ValueError):
        KpfConfig(tau_iou=1.5)
    with pytest.raises(ValueError):
        KpfConfig(tau_count=0)
    with pytest.raises(ValueError):
        KpfConfig.from_mapping({"tau_bogus": 0.1})
    assert KpfConfig.from_mapping({"n_q": 4}).n_q == 4


def test_nms_identical_keeps_best():
    a, b = box_at((0, 0, 0), objectness=0.8), box_at((0, 0, 0), objectness=0.9)
    assert nms([a, b], 0.25) == [b]


def test_nms_disjoint_keeps_all():
    props = [box_at((3.0 * i, 0, 0), objectness=0.5 + 0.1 * i) for i in range(4)]
    assert nms(props, 0.25) == props[::-1]


@pytest.mark.parametrize("overlap", [Overlap.BOX_IOU, Overlap.KIOU])
def test_nms_matches_reference(rng, overlap):
    props = []
    for _ in range(50):
        pose = PoseSize(random_rotation(rng), rng.uniform(-0.8, 0.8, 3), rng.uniform(0.2, 0.6, 3))
        props.append(make_proposal(pose, objectness=float(rng.uniform(0.05, 1.0))))
    if overlap is Overlap.BOX_IOU:
        fn = lambda a, b: box_iou(a.pose, b.pose)
    else:
        fn = lambda a, b: kiou((a.pose, a.joint), (b.pose, b.joint))
    kept = nms(props, 0.25, overlap)
    expected = [props[i] for i in reference_nms(props, 0.25, fn)]
    assert kept == expected
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert fn(a, b) < 0.25


def test_average_of_one_is_identity():
    p = door_proposal(0.4, 0.7)
    assert weighted_average([p]) is p


def test_average_of_equal_members(rng):
    p = make_proposal(random_pose(rng), objectness=0.6, embedding=rng.normal(size=32))
    q = make_proposal(p.pose, objectness=0.3, embedding=p.embedding)
    avg = weighted_average([p, q])
    assert np.allclose(avg.pose.rotation, p.pose.rotation, atol=1e-12)
    assert np.allclose(avg.pose.center, p.pose.center, atol=1e-12)
    assert np.allclose(avg.embedding, p.embedding, atol=1e-12)


def test_average_rotation_midpoint(rng):
    base = random_rotation(rng)
    a = box_at((0, 0, 0), rotation=base)
    b = box_at((0, 0, 0), rotation=base @ rotation_about_axis((0, 0, 1), 0.2))
    avg = weighted_average([a, b]).pose.rotation
    assert np.allclose(avg, base @ rotation_about_axis((0, 0, 1), 0.1), atol=1e-6)


def test_average_weights_by_objectness():
    a = box_at((0, 0, 0), objectness=0.75)
    b = box_at((1, 0, 0), objectness=0.25)
    avg = weighted_average([a, b])
    assert np.allclose(avg.pose.center, (0.25, 0, 0), atol=1e-12)
    assert avg.joint_type_probs.sum() == pytest.approx(1.0)
    assert avg.objectness == pytest.approx(0.75 * 0.75 + 0.25 * 0.25)


def test_average_axis_renormalized():
    j1 = JointParams(JointType.REVOLUTE, (1, 0, 0), (0, 0, 0), 0.1, 1.0)
    j2 = JointParams(JointType.REVOLUTE, (0, 1, 0), (0, 0, 0), 0.3, 1.0)
    avg = weighted_average([make_proposal(joint=j1, objectness=0.5), make_proposal(joint=j2, objectness=0.5)])
    assert np.allclose(avg.joint.axis, np.array([1, 1, 0]) / np.sqrt(2))
    assert avg.joint.state_current == pytest.approx(0.2)


def test_average_all_zero_weights():
    with pytest.raises(AllZeroWeights):
        weighted_average([box_at((0, 0, 0), objectness=0.0), box_at((0, 0, 0), objectness=0.0)])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_average_permutation_and_scale_invariant(seed, k):
    rng = np.random.default_rng(seed)
    base = random_pose(rng)
    members = []
    for _ in range(4):
        rot = base.rotation @ rotation_about_axis(rng.normal(size=3), rng.uniform(0, 0.3))
        pose = PoseSize(rot, base.center + rng.normal(0, 0.05, 3), base.size * rng.uniform(0.9, 1.1, 3))
        members.append(make_proposal(pose, objectness=float(rng.uniform(0.005, 0.01)), embedding=rng.normal(size=32)))
    ref = weighted_average(members)
    perm = weighted_average([members[i] for i in rng.permutation(4)])
    assert np.allclose(ref.pose.rotation, perm.pose.rotation, atol=1e-9)
    assert np.allclose(ref.embedding, perm.embedding, atol=1e-9)
    # scaling every weight by k: objectness stays below 1 when k * 0.01 <= 1
    scaled = weighted_average([m.with_objectness(m.objectness * k) for m in members])
    assert np.allclose(ref.pose.rotation, scaled.pose.rotation, atol=1e-9)
    assert np.allclose(ref.pose.center, scaled.pose.center, atol=1e-9)
    assert np.allclose(ref.pose.size, scaled.pose.size, atol=1e-9)


def test_pf_duplicates_keep_objectness():
    p = door_proposal(0.5)
    out = pf_kiou([p] * 10, 10, KpfConfig())
    assert len(out) == 1
    assert out[0].objectness == pytest.approx(0.9, abs=1e-12)


def test_pf_singleton_dropped():
    assert pf_kiou([door_proposal(0.5)], 10, KpfConfig()) == []


def test_pf_clamps_at_one():
    p = box_at((0, 0, 0), objectness=0.8)
    out = pf_kiou([p] * 5, 1, KpfConfig())
    assert out[0].objectness == pytest.approx(1.0)


def test_pf_every_proposal_in_one_cluster(rng):
    props = [box_at(rng.uniform(-1, 1, 3), objectness=float(rng.uniform(0.3, 1))) for _ in range(30)]
    clusters = pf_clusters(props, 10, KpfConfig(), Overlap.BOX_IOU)
    ids = [id(m) for c in clusters for m in c.members]
    assert sorted(ids) == sorted(map(id, props))
    assert all(0 < c.scaled_objectness <= 1 for c in clusters)


def test_pf_first_match_wins():
    # x overlaps both representatives; it must join the first (higher objectness) one
    cfg = KpfConfig(tau_kiou=0.4)
    a = box_at((0.0, 0, 0), size=(1, 1, 1), objectness=0.9)
    b = box_at((0.5, 0, 0), size=(1, 1, 1), objectness=0.8)
    x = box_at((0.25, 0, 0), size=(1, 1, 1), objectness=0.5)
    assert box_iou(a.pose, b.pose) < 0.4 < box_iou(a.pose, x.pose)
    clusters = pf_clusters([x, b, a], 1, cfg, Overlap.BOX_IOU)
    assert [len(c.members) for c in clusters] == [2, 1]
    assert clusters[0].members[0] is a and clusters[0].members[1] is x


def test_pf_mixed_scene(rng):
    truths = [np.array([0.0, 0, 0]), np.array([2.0, 0, 0]), np.array([0.0, 2.5, 0])]
    props = []
    for c in truths:
        for _ in range(10):
            props.append(box_at(c + rng.normal(0, 0.01, 3), objectness=float(rng.uniform(0.7, 0.95))))
    for _ in range(5):
        props.append(box_at(rng.uniform(4, 8, 3), objectness=float(rng.uniform(0.3, 0.9))))
    out = pf_kiou(props, 10, KpfConfig())
    assert len(out) == 3
    found = sorted(int(np.argmin([np.linalg.norm(p.pose.center - c) for c in truths])) for p in out)
    assert found == [0, 1, 2]
    for p in out:
        assert min(np.linalg.norm(p.pose.center - c) for c in truths) < 0.01


def test_kpf_same_part_every_run():
    p = door_proposal(0.5)
    out = kpf([[p] for _ in range(10)], KpfConfig())
    assert len(out) == 1
    assert out[0].objectness == pytest.approx(0.9)


def test_kpf_empty():
    assert kpf([], KpfConfig()) == []
    assert kpf([[] for _ in range(10)], KpfConfig()) == []


def test_kpf_run_count_checked():
    with pytest.raises(ValueError):
        kpf([[box_at((0, 0, 0))]] * 3, KpfConfig())


def test_preprocess_order():
    low = box_at((0, 0, 0), objectness=0.2)
    d1, d2 = door_proposal(0.50, 0.9), door_proposal(0.55, 0.8)
    kept = preprocess_run([low, d1, d2], KpfConfig())
    assert kept == [d1]
    assert preprocess_run([low, d1, d2], KpfConfig(), Overlap.BOX_IOU) == [d1, d2]


def test_same_proposals_tolerance():
    a = box_at((0, 0, 0))
    b = box_at((1e-10, 0, 0))
    c = box_at((1e-6, 0, 0))
    assert same_proposals([a], [b])
    assert not same_proposals([a], [c])
    assert not same_proposals([a], [a, a])


def test_kpf_terminates_within_tau_count(monkeypatch):
    import partfusion.fusion as fusion

    calls = []
    real = fusion.pf_kiou

    def counting(*args, **kwargs):
        calls.append(args[1])
        # perturb so the output never converges
        return [p.with_objectness(min(1.0, p.objectness * 0.999)) for p in real(*args, **kwargs)]

    monkeypatch.setattr(fusion, "pf_kiou", counting)
    kpf([[box_at((0, 0, 0))] for _ in range(10)], KpfConfig(tau_count=3))
    assert calls == [10, 1, 1]
