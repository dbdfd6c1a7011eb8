"""Model problems -div(a grad u) = f with Dirichlet data on the whole boundary."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh2d import Mesh, Point2, new_lshape_mesh, new_two_element_mesh, new_two_singularity_mesh

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

PROBLEM_NAMES = ("radical1", "radical2", "lshape")


def _one(x, y):
    return np.ones_like(np.asarray(x, dtype=float))


def _zero(x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ModelProblem:
    diffusion: Field
    source: Field
    dirichlet_value: Field
    exact_solution: Field | None = None
    exact_gradient: Callable | None = None


def radial_power_problem(centers, alpha: float = 0.6) -> ModelProblem:
    """u = sum_i |x - c_i|^alpha with f = -lap(u)."""
    cs = [Point2(*c).as_float() if not isinstance(c, Point2) else c.as_float() for c in centers]

    def u(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        return sum(np.hypot(x - cx, y - cy) ** alpha for cx, cy in cs)

    def grad(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        gx, gy = np.zeros_like(x), np.zeros_like(y)
        for cx, cy in cs:
            dx, dy = x - cx, y - cy
            r = np.hypot(dx, dy)
            w = np.where(r > 0, alpha * np.where(r > 0, r, 1.0) ** (alpha - 2), 0.0)
            gx = gx + w * dx
            gy = gy + w * dy
        return gx, gy

    def f(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        out = np.zeros_like(x)
        for cx, cy in cs:
            out = out - alpha**2 * np.hypot(x - cx, y - cy) ** (alpha - 2)
        return out

    return ModelProblem(_one, f, u, u, grad)


def lshape_problem() -> ModelProblem:
    """Harmonic r^(2/3) sin(2 theta / 3), theta in [0, 2 pi), zero on the reentrant faces."""

    def polar(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        return np.hypot(x, y), np.mod(np.arctan2(y, x), 2 * np.pi)

    def u(x, y):
        r, t = polar(x, y)
        return r ** (2 / 3) * np.sin(2 * t / 3)

    def grad(x, y):
        r, t = polar(x, y)
        rs = np.where(r > 0, r, 1.0)
        c = np.where(r > 0, (2 / 3) * rs ** (-1 / 3), 0.0)
        ur, ut = c * np.sin(2 * t / 3), c * np.cos(2 * t / 3)
        return (ur * np.cos(t) - ut * np.sin(t), ur * np.sin(t) + ut * np.cos(t))

    return ModelProblem(_one, _zero, u, u, grad)


def affine_problem(c0: float = 1.0, cx: float = 2.0, cy: float = -3.0) -> ModelProblem:
    def u(x, y):
        return c0 + cx * np.asarray(x, float) + cy * np.asarray(y, float)

    def grad(x, y):
        x = np.asarray(x, float)
        return np.full_like(x, cx), np.full_like(x, cy)

    return ModelProblem(_one, _zero, u, u, grad)


def make_problem(name: str, alpha: float = 0.6) -> tuple[Mesh, ModelProblem]:
    """Initial mesh and PDE data for a named benchmark."""
    if name == "radical1":
        mesh = new_two_element_mesh(2, 1, Point2(1, 0))
        return mesh, radial_power_problem(mesh.singularities, alpha)
    if name == "radical2":
        mesh = new_two_singularity_mesh()
        return mesh, radial_power_problem(mesh.singularities, alpha)
    if name == "lshape":
        return new_lshape_mesh(), lshape_problem()
    raise ValueError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEM_NAMES)}")
