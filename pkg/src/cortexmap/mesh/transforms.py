"""2D rigid transforms linking volume-frame in-plane coordinates to sections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RigidTransform2D:
    """p' = R(angle) @ p + translation, coordinates as (row, col)."""

    angle: float = 0.0
    translation: tuple = (0.0, 0.0)

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = pts @ self.matrix().T + np.asarray(self.translation)
        return out if np.asarray(points).ndim > 1 else out[0]

    def inverse(self) -> "RigidTransform2D":
        rinv = self.matrix().T
        t = -rinv @ np.asarray(self.translation)
        return RigidTransform2D(angle=-self.angle, translation=(t[0], t[1]))

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """self after other: (self o other)(p) = self(other(p))."""
        r = self.matrix() @ other.matrix()
        t = self.matrix() @ np.asarray(other.translation) + np.asarray(self.translation)
        angle = np.arctan2(r[1, 0], r[0, 0])
        return RigidTransform2D(angle=float(angle), translation=(float(t[0]), float(t[1])))

    @staticmethod
    def identity() -> "RigidTransform2D":
        return RigidTransform2D()

    @staticmethod
    def about_center(angle: float, translation, center) -> "RigidTransform2D":
        """Rotation about `center` followed by `translation`."""
        c = np.asarray(center, dtype=np.float64)
        rot = RigidTransform2D(angle=angle)
        t = c - rot.matrix() @ c + np.asarray(translation, dtype=np.float64)
        return RigidTransform2D(angle=angle, translation=(float(t[0]), float(t[1])))

    def to_json(self):
        return {"angle": float(self.angle),
                "translation": [float(self.translation[0]), float(self.translation[1])]}

    @staticmethod
    def from_json(obj):
        return RigidTransform2D(angle=obj["angle"],
                                translation=tuple(obj["translation"]))
