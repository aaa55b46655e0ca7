"""Downward pinhole cameras over a flat ground plane.

World frame is North-East-Down with the ground at ``z = 0``; a camera at
altitude ``h`` has its center at ``z = -h``.  A pose stores the
world-to-camera rotation ``R`` and translation ``t`` so that camera
coordinates are ``R @ F + t`` and the center is ``-R.T @ t``.

The estimator :func:`est_rel_disp` assumes both cameras share intrinsics and
altitude and that camera ``i`` is level with zero yaw; :func:`worst_case_error`
measures by brute force how far it drifts when those assumptions are bent.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .contract import SampleRecord
from .geometry import PolarVec, wrap_angle

ORTHO_TOL = 1e-9
_DOWN_TOL = 1e-12


class HorizonError(ValueError):
    """A pixel ray does not reach the ground (horizontal or pointing up)."""


class BehindCameraError(ValueError):
    """A point has non-positive depth in the camera frame."""


class EmptyCommonViewError(ValueError):
    """The two cameras share no visible ground."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def centered(cls, focal: float, width: float, height: float) -> CameraIntrinsics:
        return cls(focal, focal, width / 2.0, height / 2.0, width, height)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    def in_bounds(self, uv: np.ndarray) -> np.ndarray:
        """Inclusive image-bounds test on ``(..., 2)`` pixel arrays."""
        uv = np.asarray(uv, dtype=float)
        return ((uv[..., 0] >= 0) & (uv[..., 0] <= self.width)
                & (uv[..., 1] >= 0) & (uv[..., 1] <= self.height))


def check_rotation(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
        raise ValueError("rotation is not orthonormal")
    if np.linalg.det(R) <= 0:
        raise ValueError("rotation must have determinant +1")
    return R


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray
    translation: np.ndarray
    altitude: float

    def __post_init__(self) -> None:
        R = check_rotation(self.rotation)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if not self.altitude > 0:
            raise ValueError("altitude must be positive")
        cz = float(-(R.T @ t)[2])
        if abs(cz + self.altitude) > 1e-9 * max(1.0, self.altitude):
            raise ValueError(f"camera center z={cz} does not match altitude {self.altitude}")

    @classmethod
    def from_center(cls, rotation: np.ndarray, center) -> CameraPose:
        R = check_rotation(rotation)
        c = np.asarray(center, dtype=float).reshape(3)
        return cls(R, -R @ c, float(-c[2]))

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics
    pose: CameraPose

    @classmethod
    def downward(cls, intrinsics: CameraIntrinsics, north: float, east: float,
                 altitude: float, rotation: np.ndarray | None = None) -> Camera:
        R = np.eye(3) if rotation is None else rotation
        return cls(intrinsics, CameraPose.from_center(R, (north, east, -altitude)))


# ------------------------------------------------------------------ rotations


def yaw_rotation(psi: float) -> np.ndarray:
    """World-to-camera rotation of a downward camera yawed by ``psi``."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis, angle: float) -> np.ndarray:
    k = np.asarray(axis, dtype=float)
    n = np.linalg.norm(k)
    if not n > 0:
        raise ValueError("rotation axis must be nonzero")
    k = k / n
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)


def small_rotation(rng: np.random.Generator, max_angle: float) -> np.ndarray:
    """Rotation about a uniformly random axis by an angle uniform in ``[0, max_angle]``.

    Always consumes the same number of draws, so ``max_angle = 0`` keeps
    random streams aligned with the noisy case.
    """
    axis = rng.standard_normal(3)
    u = rng.random()
    if max_angle <= 0 or not np.any(axis):
        return np.eye(3)
    return axis_angle(axis, u * max_angle)


def relative_rotation(cam_i: Camera, cam_j: Camera) -> np.ndarray:
    """Rotation taking camera-``i`` coordinates to camera-``j`` coordinates."""
    return cam_j.pose.rotation @ cam_i.pose.rotation.T


# ------------------------------------------------------------------ projection


def project_many(cam: Camera, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pixels ``(k, 2)`` and depths ``(k,)`` of world points ``(k, 3)``; no depth check."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Xc = F @ cam.pose.rotation.T + cam.pose.translation
    h = Xc @ cam.intrinsics.K.T
    s = h[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = h[:, :2] / s[:, None]
    return uv, s


def project(cam: Camera, F) -> tuple[float, float, float]:
    """Pixel ``(u, v)`` and depth ``s`` of world point ``F``."""
    uv, s = project_many(cam, np.asarray(F, dtype=float)[None, :])
    if not s[0] > 0:
        raise BehindCameraError(f"point {tuple(F)} has depth {s[0]:.6g}")
    return float(uv[0, 0]), float(uv[0, 1]), float(s[0])


def _rays(K_inv: np.ndarray, uv: np.ndarray) -> np.ndarray:
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    ph = np.column_stack([uv, np.ones(len(uv))])
    return ph @ K_inv.T


def back_project_many(cam: Camera, uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Camera-to-ground vectors ``(k, 3)`` and a mask of rays that hit the ground."""
    d = _rays(cam.intrinsics.K_inv, uv) @ cam.pose.rotation
    down = d[:, 2]
    ok = down > _DOWN_TOL * np.linalg.norm(d, axis=1)
    h = cam.pose.altitude
    with np.errstate(divide="ignore", invalid="ignore"):
        vec = h * d / down[:, None]
    vec[:, 2] = h
    return vec, ok


def back_project_ground(cam: Camera, p) -> np.ndarray:
    """Vector from the camera center to the ground point seen at pixel ``p``."""
    vec, ok = back_project_many(cam, np.asarray(p, dtype=float)[None, :2])
    if not ok[0]:
        raise HorizonError(f"pixel {tuple(p)} does not look at the ground")
    return vec[0]


def ground_point(cam: Camera, p) -> np.ndarray:
    return cam.pose.center + back_project_ground(cam, p)


# ------------------------------------------------------------------ displacement


def true_rel_disp(cam_i: Camera, cam_j: Camera) -> np.ndarray:
    """Planar (north, east) displacement from camera ``i`` to camera ``j``."""
    return (cam_j.pose.center - cam_i.pose.center)[:2]


def est_rel_disp_many(p_i: np.ndarray, p_j: np.ndarray, R_ij: np.ndarray,
                      K: CameraIntrinsics, h: float) -> np.ndarray:
    """Vectorized :func:`est_rel_disp` over ``(k, 2)`` pixel pairs."""
    Ki = K.K_inv
    a = _rays(Ki, p_i)
    b = _rays(Ki, p_j) @ np.asarray(R_ij, dtype=float)  # rows of R_ij^-1 K^-1 p_j
    if np.any(a[:, 2] <= 0) or np.any(b[:, 2] <= 0):
        raise HorizonError("a feature ray does not point downward")
    return (h * a / a[:, 2:3] - h * b / b[:, 2:3])[:, :2]


def est_rel_disp(p_i, p_j, R_ij, K: CameraIntrinsics, h: float) -> np.ndarray:
    """Displacement estimate from one feature seen at ``p_i`` and ``p_j``.

    Both cameras are taken to fly at altitude ``h`` with intrinsics ``K``;
    camera ``i`` is taken to be level and north-aligned, and ``R_ij`` is
    the (possibly noisy) relative rotation.
    """
    return est_rel_disp_many(np.asarray(p_i, float)[None, :2], np.asarray(p_j, float)[None, :2],
                             R_ij, K, h)[0]


# ------------------------------------------------------------------ common view


def _pixel_grid(K: CameraIntrinsics, grid_n: int) -> np.ndarray:
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    u = np.linspace(0.0, K.width, grid_n)
    v = np.linspace(0.0, K.height, grid_n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])


def _visible_from_pixels(cam_i: Camera, cam_j: Camera, uv: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray]:
    vec, ok = back_project_many(cam_i, uv)
    F = cam_i.pose.center + vec
    uv_j, s_j = project_many(cam_j, F)
    keep = ok & (s_j > 0) & cam_j.intrinsics.in_bounds(uv_j)
    return F[keep], uv[keep]


def common_view_grid(cam_i: Camera, cam_j: Camera, grid_n: int) -> np.ndarray:
    """Ground points from a ``grid_n x grid_n`` pixel grid of ``i`` that ``j`` also sees."""
    return _visible_from_pixels(cam_i, cam_j, _pixel_grid(cam_i.intrinsics, grid_n))[0]


@dataclass(frozen=True)
class Assumptions:
    """How the estimator's inputs deviate from the truth.

    ``h`` and ``K`` default to camera ``i``'s; ``rotation_error`` multiplies
    the true relative rotation from the left.
    """

    snap_pixels: bool = False
    h: float | None = None
    K: CameraIntrinsics | None = None
    rotation_error: np.ndarray | None = None


def feature_errors(cam_i: Camera, cam_j: Camera, F: np.ndarray,
                   assumptions: Assumptions = Assumptions()) -> np.ndarray:
    """Estimate error norm for each ground feature in ``F``."""
    uv_i, _ = project_many(cam_i, F)
    uv_j, _ = project_many(cam_j, F)
    if assumptions.snap_pixels:
        uv_i = np.rint(uv_i)
        uv_j = np.rint(uv_j)
    R_ij = relative_rotation(cam_i, cam_j)
    if assumptions.rotation_error is not None:
        R_ij = check_rotation(assumptions.rotation_error) @ R_ij
    K = assumptions.K or cam_i.intrinsics
    h = assumptions.h if assumptions.h is not None else cam_i.pose.altitude
    q_hat = est_rel_disp_many(uv_i, uv_j, R_ij, K, h)
    return np.linalg.norm(q_hat - true_rel_disp(cam_i, cam_j), axis=1)


def worst_case_error(cam_i: Camera, cam_j: Camera, assumptions: Assumptions = Assumptions(),
                     grid_n: int = 101, refine: int = 4) -> tuple[float, np.ndarray]:
    """Largest estimate error over the common view and the ground point attaining it.

    A dense pixel grid of camera ``i`` is searched first; each refinement
    round then re-searches an 11 x 11 patch around the incumbent at a fifth
    of the previous spacing.
    """
    K = cam_i.intrinsics
    F, uv = _visible_from_pixels(cam_i, cam_j, _pixel_grid(K, grid_n))
    if len(F) == 0:
        raise EmptyCommonViewError("the cameras share no visible ground")
    err = feature_errors(cam_i, cam_j, F, assumptions)
    k = int(np.argmax(err))
    best, best_F, best_uv = float(err[k]), F[k], uv[k]
    du, dv = K.width / (grid_n - 1), K.height / (grid_n - 1)
    offs = np.linspace(-1.0, 1.0, 11)
    for _ in range(refine):
        ou, ov = np.meshgrid(offs * du, offs * dv, indexing="ij")
        cand = best_uv + np.column_stack([ou.ravel(), ov.ravel()])
        cand = cand[K.in_bounds(cand)]
        Fc, uvc = _visible_from_pixels(cam_i, cam_j, cand)
        if len(Fc):
            e = feature_errors(cam_i, cam_j, Fc, assumptions)
            k = int(np.argmax(e))
            if e[k] > best:
                best, best_F, best_uv = float(e[k]), Fc[k], uvc[k]
        du /= 5.0
        dv /= 5.0
    return best, best_F


# ------------------------------------------------------------------ synthetic samples


@dataclass(frozen=True)
class PinholeScenario:
    """Two-drone sampling setup.

    ``fog`` is a noise-scale proxy: it adds ``fog * fog_pixel_sigma`` pixels
    of Gaussian noise and thins features with survival probability
    ``exp(-fog * fog_extinction * path)``, ``path`` being the summed distance
    from both cameras to the feature.  With fewer than ``min_features``
    usable features the estimate is an outlier drawn uniformly in the disc
    of radius ``outlier_r_max``.
    """

    focal: float = 320.0
    width: float = 640.0
    height: float = 480.0
    altitude: float = 20.0
    r_min: float = 2.0
    r_max: float = 20.0
    fog: float = 0.0
    pixel_snap: bool = True
    pixel_sigma: float = 0.0
    fog_pixel_sigma: float = 1.0
    fog_extinction: float = 0.006
    altitude_sigma: float = 0.0
    rotation_noise: float = 0.0
    yaw_spread: float = math.pi
    n_features: int = 60
    min_features: int = 8
    outlier_r_max: float = 40.0
    env: str = field(default="")

    def __post_init__(self) -> None:
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.fog < 0:
            raise ValueError("fog must be non-negative")
        if self.min_features < 1 or self.n_features < self.min_features:
            raise ValueError("need 1 <= min_features <= n_features")
        CameraIntrinsics.centered(self.focal, self.width, self.height)

    @property
    def label(self) -> str:
        return self.env or f"fog={self.fog:g}"

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.centered(self.focal, self.width, self.height)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> PinholeScenario:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pinhole scenario keys: {sorted(unknown)}")
        return cls(**d)


def _estimate(scn: PinholeScenario, r: float, theta: float, rng: np.random.Generator
              ) -> tuple[float, float]:
    # fixed draw layout per sample keeps streams aligned across fog levels
    K = scn.intrinsics
    h_j = max(0.25 * scn.altitude, scn.altitude + scn.altitude_sigma * rng.standard_normal())
    psi = (2.0 * rng.random() - 1.0) * scn.yaw_spread
    err_rot = small_rotation(rng, scn.rotation_noise)
    pix = rng.random((scn.n_features, 2)) * np.array([K.width, K.height])
    survive_u = rng.random(scn.n_features)
    noise = rng.standard_normal((scn.n_features, 4))
    out_u = rng.random(2)

    cam_i = Camera.downward(K, 0.0, 0.0, scn.altitude)
    cam_j = Camera.downward(K, r * math.cos(theta), r * math.sin(theta), h_j, yaw_rotation(psi))
    vec, ok = back_project_many(cam_i, pix)
    F = cam_i.pose.center + vec
    uv_j, s_j = project_many(cam_j, F)
    seen = ok & (s_j > 0) & K.in_bounds(uv_j)
    path = np.linalg.norm(vec, axis=1) + np.linalg.norm(F - cam_j.pose.center, axis=1)
    seen &= survive_u < np.exp(-scn.fog * scn.fog_extinction * path)
    if seen.sum() >= scn.min_features:
        sigma = scn.pixel_sigma + scn.fog * scn.fog_pixel_sigma
        uv_i = pix[seen] + sigma * noise[seen, :2]
        uv_j = uv_j[seen] + sigma * noise[seen, 2:]
        if scn.pixel_snap:
            uv_i = np.rint(uv_i)
            uv_j = np.rint(uv_j)
        R_ij = err_rot @ relative_rotation(cam_i, cam_j)
        try:
            q = est_rel_disp_many(uv_i, uv_j, R_ij, K, scn.altitude).mean(axis=0)
            return float(math.hypot(q[0], q[1])), wrap_angle(math.atan2(q[1], q[0]))
        except HorizonError:
            pass
    return (float(scn.outlier_r_max * math.sqrt(out_u[0])),
            wrap_angle(2.0 * math.pi * float(out_u[1])))


def perceive_polar(y_true: PolarVec, scn: PinholeScenario, rng: np.random.Generator) -> PolarVec:
    """Perceived relative position of a neighbour at ``y_true``."""
    r_hat, t_hat = _estimate(scn, y_true.r, y_true.theta, rng)
    if not r_hat > 0:
        r_hat = math.ulp(0.0)
    return PolarVec(r_hat, t_hat)


def synth_samples(scn: PinholeScenario, n: int, rng: np.random.Generator,
                  r_fixed: float | None = None) -> list[SampleRecord]:
    """``n`` (true, perceived) pairs with true positions uniform over the annulus by area.

    ``r_fixed`` pins every true radius instead, for error-versus-range shells.
    """
    out = []
    lo2, hi2 = scn.r_min ** 2, scn.r_max ** 2
    for _ in range(n):
        u, v = (float(x) for x in rng.random(2))
        r = r_fixed if r_fixed is not None else math.sqrt(lo2 + u * (hi2 - lo2))
        theta = 2.0 * math.pi * v
        if theta >= 2.0 * math.pi:
            theta = 0.0
        r_hat, t_hat = _estimate(scn, r, theta, rng)
        out.append(SampleRecord(r, theta, r_hat, t_hat, scn.label))
    return out
