"""Geometry primer: rigid transforms and ray casting against oriented boxes.

Everything downstream (traffic poses, LiDAR rays, flow labels) is built on
these two primitives, so this demo walks through them interactively.
"""

import numpy as np

from synf.geom import (
    OrientedBox,
    Pose,
    Ray,
    compose,
    inverse,
    ray_obb_intersect,
    transform_point,
)

# A pose is rotation + translation; composition applies right-to-left.
lift = Pose.from_translation(0.0, 0.0, 1.9)
turn = Pose.from_yaw(np.pi / 2)
combo = compose(turn, lift)  # lift first, then turn

p = np.array([1.0, 0.0, 0.0])
print("point:", p)
print("lift then turn:", transform_point(combo, p))
print("round trip through the inverse:", transform_point(inverse(combo), transform_point(combo, p)))

# Ray casting: a unit ray against a box rotated 45 degrees about z.
box = OrientedBox(
    center=np.array([5.0, 0.0, 0.0]),
    half_extents=np.ones(3),
    rotation=Pose.from_yaw(np.pi / 4).rotation,
)
ray = Ray(np.zeros(3), np.array([1.0, 0.0, 0.0]))
t = ray_obb_intersect(ray, box)
print(f"\nhit distance: {t:.6f}  (analytic: 5 - sqrt(2) = {5 - np.sqrt(2):.6f})")

# Rays that start inside report the exit face instead of a miss.
inside = Ray(box.center, np.array([0.0, 1.0, 0.0]))
print("exit distance from the box center:", ray_obb_intersect(inside, box))

# Misses come back as None.
print("miss:", ray_obb_intersect(Ray(np.zeros(3), np.array([0.0, 0.0, 1.0])), box))
