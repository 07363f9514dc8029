"""
Rigid-body transforms on SE(3).

Conventions used throughout the toolkit:
    - Quaternions are stored scalar-first (w, x, y, z), Hamilton product.
    - A transform T^A_B maps coordinates expressed in frame B into frame A:
      p_A = R p_B + t.
    - Euler angles are intrinsic Z-Y-X: R = R_yaw R_pitch R_roll.
    - Quaternions are canonicalized to a non-negative scalar part.

scipy's Rotation does the quaternion algebra; it stores scalar-last, so
conversion happens only at the boundary of this module.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from errors import OutOfRange


def _canonical(q_wxyz: np.ndarray) -> np.ndarray:
    q = np.asarray(q_wxyz, dtype=float)
    norm = np.linalg.norm(q)
    if not np.isfinite(norm) or norm < 1e-12:
        raise ValueError(f"invalid quaternion {q!r}")
    q = q / norm
    if q[0] < 0.0:
        q = -q
    return q


def _to_scipy(q_wxyz: np.ndarray) -> Rotation:
    w, x, y, z = q_wxyz
    return Rotation.from_quat([x, y, z, w])


def _from_scipy(rotation: Rotation) -> np.ndarray:
    x, y, z, w = rotation.as_quat()
    return _canonical(np.array([w, x, y, z]))


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = (angle + np.pi) % (2.0 * np.pi) - np.pi
    if wrapped <= -np.pi:
        wrapped += 2.0 * np.pi
    return float(wrapped)


@dataclass(frozen=True)
class EulerAngles:
    """Roll, pitch, yaw in radians (intrinsic Z-Y-X)."""
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def to_quaternion(self) -> np.ndarray:
        rotation = Rotation.from_euler("ZYX", [self.yaw, self.pitch, self.roll])
        return _from_scipy(rotation)

    @classmethod
    def from_quaternion(cls, q_wxyz: Sequence[float]) -> "EulerAngles":
        yaw, pitch, roll = _to_scipy(_canonical(q_wxyz)).as_euler("ZYX")
        return cls(roll=float(roll), pitch=float(pitch), yaw=float(yaw))

    def to_degrees(self) -> dict:
        return {
            "roll": float(np.degrees(self.roll)),
            "pitch": float(np.degrees(self.pitch)),
            "yaw": float(np.degrees(self.yaw)),
        }


class RigidTransform:
    """
    Immutable SE(3) pose: 3-vector translation plus unit quaternion.

    Instances are safe to share between threads; every operation returns
    a new transform.
    """

    __slots__ = ("_t", "_q", "_rotation")

    def __init__(self, translation: Sequence[float] = (0.0, 0.0, 0.0),
                 rotation: Sequence[float] = (1.0, 0.0, 0.0, 0.0)):
        t = np.array(translation, dtype=float).reshape(3)
        q = _canonical(np.array(rotation, dtype=float).reshape(4))
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "_t", t)
        object.__setattr__(self, "_q", q)
        object.__setattr__(self, "_rotation", None)

    def __setattr__(self, name, value):
        raise AttributeError("RigidTransform is immutable")

    # --------------------
    # Constructors
    # --------------------
    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_rotation(cls, rotation: Rotation, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(translation, _from_scipy(rotation))

    @classmethod
    def from_euler(cls, roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0,
                   translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(translation, EulerAngles(roll, pitch, yaw).to_quaternion())

    @classmethod
    def from_yaw(cls, yaw: float, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls.from_euler(0.0, 0.0, yaw, translation)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "RigidTransform":
        matrix = np.asarray(matrix, dtype=float)
        return cls.from_rotation(Rotation.from_matrix(matrix[:3, :3]), matrix[:3, 3])

    # --------------------
    # Accessors
    # --------------------
    @property
    def translation(self) -> np.ndarray:
        return self._t

    @property
    def rotation(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z)."""
        return self._q

    @property
    def scipy_rotation(self) -> Rotation:
        if self._rotation is None:
            object.__setattr__(self, "_rotation", _to_scipy(self._q))
        return self._rotation

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self.scipy_rotation.as_matrix()

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation_matrix
        matrix[:3, 3] = self._t
        return matrix

    @property
    def euler(self) -> EulerAngles:
        return EulerAngles.from_quaternion(self._q)

    @property
    def yaw(self) -> float:
        return self.euler.yaw

    # --------------------
    # Group operations
    # --------------------
    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (N,3) or (3,) from the child frame into the parent frame."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation_matrix.T + self._t

    def inverse(self) -> "RigidTransform":
        inv_rot = self.scipy_rotation.inv()
        return RigidTransform.from_rotation(inv_rot, -inv_rot.apply(self._t))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def with_translation(self, translation: Sequence[float]) -> "RigidTransform":
        return RigidTransform(translation, self._q)

    def with_euler(self, roll: float | None = None, pitch: float | None = None,
                   yaw: float | None = None) -> "RigidTransform":
        current = self.euler
        return RigidTransform.from_euler(
            current.roll if roll is None else roll,
            current.pitch if pitch is None else pitch,
            current.yaw if yaw is None else yaw,
            self._t,
        )

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return (
            np.allclose(self._t, other.translation, atol=atol)
            and rotation_angle(self, other) <= atol
        )

    def to_dict(self) -> dict:
        return {
            "translation": [float(v) for v in self._t],
            "rotation": [float(v) for v in self._q],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RigidTransform":
        return cls(data["translation"], data["rotation"])

    def __repr__(self) -> str:
        e = self.euler.to_degrees()
        return (
            f"RigidTransform(t=({self._t[0]:.4f}, {self._t[1]:.4f}, {self._t[2]:.4f}), "
            f"rpy_deg=({e['roll']:.3f}, {e['pitch']:.3f}, {e['yaw']:.3f}))"
        )


@dataclass(frozen=True)
class TimedPose:
    """A pose sample of a monotonic stream (e.g. vehicle egomotion T^W_V)."""
    timestamp: float
    pose: RigidTransform


# --------------------
# Free functions
# --------------------
def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return a ∘ b: apply b first, then a."""
    rotation = a.scipy_rotation * b.scipy_rotation
    translation = a.scipy_rotation.apply(b.translation) + a.translation
    return RigidTransform.from_rotation(rotation, translation)


def inverse(transform: RigidTransform) -> RigidTransform:
    return transform.inverse()


def relative_increment(pose_prev: RigidTransform, pose_curr: RigidTransform) -> RigidTransform:
    """Increment Δ with pose_prev ∘ Δ == pose_curr."""
    return compose(pose_prev.inverse(), pose_curr)


def conjugate_increment(calib: RigidTransform, vehicle_inc: RigidTransform) -> RigidTransform:
    """Sensor-frame increment predicted by the hand-eye relation: C⁻¹ ΔV C."""
    return compose(compose(calib.inverse(), vehicle_inc), calib)


def rotation_log(rotation: Rotation) -> np.ndarray:
    """Axis-angle vector of a rotation, angle in [0, pi]."""
    return rotation.as_rotvec()


def pose_log_difference(a: RigidTransform, b: RigidTransform) -> np.ndarray:
    """
    Component-wise log difference a ⊖ b as a 6-vector.

    First three entries: translation(a) - translation(b).
    Last three: log(rotation(b)^-1 rotation(a)) as an axis-angle vector.
    """
    delta_rot = b.scipy_rotation.inv() * a.scipy_rotation
    return np.concatenate([a.translation - b.translation, rotation_log(delta_rot)])


def rotation_angle(a: RigidTransform, b: RigidTransform) -> float:
    """Geodesic angle between the rotations of a and b (radians)."""
    return float(np.linalg.norm((a.scipy_rotation.inv() * b.scipy_rotation).as_rotvec()))


def exp_update(transform: RigidTransform, xi: Sequence[float]) -> RigidTransform:
    """On-manifold update: additive translation, left exponential rotation update."""
    xi = np.asarray(xi, dtype=float)
    rotation = Rotation.from_rotvec(xi[3:6]) * transform.scipy_rotation
    return RigidTransform.from_rotation(rotation, transform.translation + xi[0:3])


def blend(a: RigidTransform, b: RigidTransform, alpha: float) -> RigidTransform:
    """Linear interpolation of translation and slerp of rotation; alpha=0 gives a."""
    delta = (a.scipy_rotation.inv() * b.scipy_rotation).as_rotvec()
    rotation = a.scipy_rotation * Rotation.from_rotvec(alpha * delta)
    translation = (1.0 - alpha) * a.translation + alpha * b.translation
    return RigidTransform.from_rotation(rotation, translation)


def interpolate_pose(stream: Sequence[TimedPose], t: float) -> RigidTransform:
    """
    Pose of a time-sorted stream at time t.

    Raises:
        OutOfRange: if t lies outside [first timestamp, last timestamp]
    """
    if not stream:
        raise OutOfRange("cannot interpolate an empty pose stream")
    times = [sample.timestamp for sample in stream]
    return _interpolate_sorted(times, stream, t)


def _interpolate_sorted(times: Sequence[float], stream: Sequence[TimedPose], t: float) -> RigidTransform:
    if t < times[0] or t > times[-1]:
        raise OutOfRange(f"t={t:.6f} outside stream span [{times[0]:.6f}, {times[-1]:.6f}]")
    idx = bisect.bisect_left(times, t)
    if idx < len(times) and times[idx] == t:
        return stream[idx].pose
    lo, hi = stream[idx - 1], stream[idx]
    alpha = (t - lo.timestamp) / (hi.timestamp - lo.timestamp)
    return blend(lo.pose, hi.pose, alpha)


def poses_at(stream: Sequence[TimedPose], times: Iterable[float]) -> list[RigidTransform]:
    """Interpolate a stream at many timestamps, reusing one time index."""
    stamps = [sample.timestamp for sample in stream]
    if not stamps:
        raise OutOfRange("cannot interpolate an empty pose stream")
    return [_interpolate_sorted(stamps, stream, t) for t in times]


def relative_increments(poses: Sequence[RigidTransform]) -> list[RigidTransform]:
    """Increments between consecutive poses of a sequence."""
    return [relative_increment(prev, curr) for prev, curr in zip(poses[:-1], poses[1:])]
