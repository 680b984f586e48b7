import numpy as np
import pytest
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from partfusion.kinematics import pose_at_state
from partfusion.types import BACKGROUND, JointParams, JointType, PartProposal, PoseSize


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng):
    return Rotation.random(random_state=rng).as_matrix()


def random_pose(rng, size_range=(0.2, 1.5), spread=0.5):
    return PoseSize(random_rotation(rng), rng.uniform(-spread, spread, 3), rng.uniform(*size_range, 3))


def make_proposal(pose=None, joint=None, objectness=0.9, jt=None, n_cat=3, cat=0, embedding=None, shape=None):
    pose = pose or PoseSize.identity()
    joint = joint or JointParams.fixed()
    jt = int(joint.joint_type) if jt is None else jt
    probs = np.zeros(4)
    probs[jt] = objectness
    probs[BACKGROUND] = 1.0 - objectness
    cats = np.full(n_cat, 0.0)
    cats[cat] = 1.0
    emb = np.zeros(32) if embedding is None else embedding
    return PartProposal(pose, joint, probs, cats, emb, shape)


def door(angle, state_max=np.radians(135.0), thickness=0.02, width=0.6, height=1.0):
    """Door hinged on the z axis at the origin, closed along +y, opening towards +x."""
    closed = PoseSize(np.eye(3), (thickness / 2, width / 2, 0.0), (thickness, width, height))
    canon = JointParams(JointType.REVOLUTE, (0.0, 0.0, -1.0), (0.0, 0.0, 0.0), 0.0, state_max)
    pose = pose_at_state(closed, canon, angle)
    return pose, JointParams(JointType.REVOLUTE, (0.0, 0.0, -1.0), (0.0, 0.0, 0.0), angle, state_max)


def monte_carlo_iou(points_a, points_b, n, rng):
    """IoU of the convex hulls of two point sets from uniform samples over the union's bounding box.

    Membership uses qhull's facet equations of the raw point sets, so it is
    independent of the clipping code under test.
    """
    pa, pb = np.asarray(points_a), np.asarray(points_b)
    ea, eb = ConvexHull(pa).equations, ConvexHull(pb).equations
    lo = np.minimum(pa.min(0), pb.min(0))
    hi = np.maximum(pa.max(0), pb.max(0))
    inter = union = 0
    for chunk in range(0, n, 250_000):
        m = min(250_000, n - chunk)
        # homogeneous samples laid out (4, m) so each facet test is one contiguous row
        x = np.ones((4, m))
        x[:3] = rng.uniform(lo, hi, size=(m, 3)).T
        ina = (ea @ x).max(axis=0) <= 0
        inb = (eb @ x).max(axis=0) <= 0
        inter += np.count_nonzero(ina & inb)
        union += np.count_nonzero(ina | inb)
    return inter / union if union else 0.0


# --- acceptance reporting: one PASS/FAIL line per criterion -------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = (report.passed, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, title, detail = _CRITERIA[number]
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
