import numpy as np
import pytest

from partfusion import io
from partfusion.fusion import same_proposals
from partfusion.losses import instance_loss
from partfusion.scenegen import GenConfig, generate_scene, perturb_to_runs, truth_as_proposal
from partfusion.types import JointType, validate


def scene_bytes(cfg):
    scene = generate_scene(cfg)
    runs = perturb_to_runs(scene, cfg)
    lines = [io.dumps(io.encode_truth(p, cfg.seed)) for p in scene.parts]
    lines += [io.dumps(io.encode_proposal(p, cfg.seed, r)) for r, run in enumerate(runs) for p in run]
    return "\n".join(lines).encode()


def test_deterministic():
    assert scene_bytes(GenConfig(seed=0)) == scene_bytes(GenConfig(seed=0))
    assert scene_bytes(GenConfig(seed=0)) != scene_bytes(GenConfig(seed=1))


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(fp_rate=1.5)
    with pytest.raises(ValueError):
        GenConfig(center_sigma=-0.1)
    with pytest.raises(ValueError):
        GenConfig(n_instances=5)
    with pytest.raises(ValueError):
        GenConfig.from_mapping({"seeed": 1})


@pytest.mark.parametrize("seed", range(20))
def test_generated_values_are_valid(seed):
    cfg = GenConfig(seed=seed)
    scene = generate_scene(cfg)
    assert scene.violations() == []
    assert 1 <= len(scene.instances) <= 4
    for part in scene.parts:
        assert part.pose.violations() == [] and part.joint.violations() == []
    for run in perturb_to_runs(scene, cfg):
        for p in run:
            assert validate(p) == []


def test_every_instance_has_base_and_joints():
    for seed in range(10):
        scene = generate_scene(GenConfig(seed=seed))
        for inst, _ in scene.instances:
            members = [p for p in scene.parts if p.instance == inst]
            assert members[0].joint.joint_type == JointType.FIXED
            assert any(p.joint.joint_type != JointType.FIXED for p in members)


def test_noiseless_runs_equal_truth():
    cfg = GenConfig(seed=4).noiseless()
    scene = generate_scene(cfg)
    truth = [truth_as_proposal(p, cfg) for p in scene.parts]
    runs = perturb_to_runs(scene, cfg)
    assert len(runs) == cfg.n_runs
    for run in runs:
        assert same_proposals(run, truth, tol=1e-12)
        assert all(p.objectness == 1.0 for p in run)


def test_all_dropped():
    cfg = GenConfig(seed=2, fn_rate=1.0, fp_rate=0.0)
    assert perturb_to_runs(generate_scene(cfg), cfg) == [[] for _ in range(cfg.n_runs)]


def test_spurious_objectness_range():
    cfg = GenConfig(seed=3, fn_rate=1.0, fp_rate=1.0)
    runs = perturb_to_runs(generate_scene(cfg), cfg)
    obj = [p.objectness for run in runs for p in run]
    assert obj and all(0.25 <= o <= 0.6 for o in obj)


@pytest.mark.parametrize("seed", range(20))
def test_embedding_margins(seed):
    cfg = GenConfig(seed=seed)
    scene = generate_scene(cfg)
    z = np.array([p.embedding for p in scene.parts])
    ids = np.array([p.instance for p in scene.parts])
    d = np.linalg.norm(z[:, None] - z[None], axis=2)
    same = ids[:, None] == ids[None]
    assert d[same].max() < cfg.tau_z_prime
    if (~same).any():
        assert d[~same].min() > 3 * cfg.tau_z_prime
    if len(z) >= 2:
        # intra hinge and the (soft) margin term are both inactive
        assert instance_loss(z, ids, cfg.tau_z_prime) == pytest.approx(0.0, abs=1e-12)
