"""Plane-strain elasticity tensors and the benchmark micro material fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIFORM = "uniformly-periodic"
NONUNIFORM = "non-uniformly-periodic"


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class ElasticVoigt2D:
    """Symmetric positive definite 3x3 stiffness, Voigt order (xx, yy, xy)."""

    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.shape != (3, 3):
            raise MaterialError("Voigt stiffness must be 3x3")
        if not np.array_equal(c, c.T):
            raise MaterialError("Voigt stiffness must be symmetric")
        c.flags.writeable = False
        object.__setattr__(self, "c", c)

    def __array__(self, dtype=None, copy=None):
        return self.c if dtype is None else self.c.astype(dtype)


def isotropic_plane_strain(E: float, nu: float) -> ElasticVoigt2D:
    if E <= 0:
        raise MaterialError("E must be positive")
    if not 0 <= nu < 0.5:
        raise MaterialError("nu must lie in [0, 0.5)")
    return ElasticVoigt2D(_iso(np.asarray(E, float), nu)[()])


def _iso(E: np.ndarray, nu: float) -> np.ndarray:
    """Vectorised plane-strain tensor for an array of moduli."""
    f = E / ((1 + nu) * (1 - 2 * nu))
    c = np.zeros(np.shape(E) + (3, 3))
    c[..., 0, 0] = c[..., 1, 1] = f * (1 - nu)
    c[..., 0, 1] = c[..., 1, 0] = f * nu
    c[..., 2, 2] = f * (1 - 2 * nu) / 2
    return c


class MicroMaterialField:
    """Material evaluator ``(x_macro, x_local) -> Voigt tensors``.

    ``x_local`` is an (n, 2) array of offsets from the cell centre; the
    result has shape (n, 3, 3). Subclasses implement :meth:`_eval`.
    """

    periodicity = UNIFORM

    def __init__(self, eps: float):
        if eps <= 0:
            raise MaterialError("eps must be positive")
        self.eps = float(eps)

    @property
    def uniform(self) -> bool:
        return self.periodicity == UNIFORM

    @property
    def key(self) -> tuple:
        """Hashable identity used for caching."""
        return (type(self).__name__, self.eps)

    def __call__(self, x_macro, x_local) -> np.ndarray:
        xm = np.asarray(x_macro, dtype=float).reshape(2)
        xl = np.atleast_2d(np.asarray(x_local, dtype=float))
        return self._eval(xm, xl)

    def at(self, x_macro, x_local) -> ElasticVoigt2D:
        return ElasticVoigt2D(self(x_macro, x_local)[0])

    def _eval(self, xm: np.ndarray, xl: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class ConstantField(MicroMaterialField):
    def __init__(self, c, eps: float = 1.0):
        super().__init__(eps)
        self.c = np.array(c, dtype=float)

    @property
    def key(self):
        return ("const", self.c.tobytes())

    def _eval(self, xm, xl):
        return np.broadcast_to(self.c, (len(xl), 3, 3)).copy()


class MatrixInclusionField(MicroMaterialField):
    """Square inclusion of side ``side_fraction * eps`` centred in each period."""

    def __init__(self, E_incl, E_matrix, nu, eps, side_fraction=0.25):
        super().__init__(eps)
        if not 0 < side_fraction < 1:
            raise MaterialError("side_fraction must lie in (0, 1)")
        self.c_incl = isotropic_plane_strain(E_incl, nu).c
        self.c_matrix = isotropic_plane_strain(E_matrix, nu).c
        self.side_fraction = float(side_fraction)
        self.params = (float(E_incl), float(E_matrix), float(nu), float(side_fraction))

    @property
    def key(self):
        return ("inclusion", self.eps) + self.params

    def inside(self, xl: np.ndarray) -> np.ndarray:
        e = self.eps
        w = xl - e * np.floor(xl / e + 0.5)  # wrap into [-e/2, e/2)
        half = 0.5 * self.side_fraction * e
        return np.all(np.abs(w) < half, axis=1)

    def _eval(self, xm, xl):
        return np.where(self.inside(xl)[:, None, None], self.c_incl, self.c_matrix)


class LaminateField(MicroMaterialField):
    """Analytical laminate varying in x1 only.

    With ``coords="local"`` x1 is the offset from the cell centre, so the
    field is identical in every cell. ``coords="global"`` uses the physical
    coordinate and is flagged non-uniform.
    """

    def __init__(self, eps: float, coords: str = "local", c12: float = 35.0, c33: float = 50.0):
        super().__init__(eps)
        if coords not in ("local", "global"):
            raise MaterialError("coords must be 'local' or 'global'")
        self.coords = coords
        self.periodicity = UNIFORM if coords == "local" else NONUNIFORM
        self.c12, self.c33 = float(c12), float(c33)

    @property
    def key(self):
        return ("laminate", self.eps, self.coords, self.c12, self.c33)

    def _eval(self, xm, xl):
        x1 = xl[:, 0] + (xm[0] if self.coords == "global" else 0.0)
        th = 2 * np.pi * x1 / self.eps
        c = np.zeros((len(xl), 3, 3))
        c[:, 0, 0] = 500.0 / (5 + 3.5 * np.sin(th))
        c[:, 1, 1] = 500.0 / (5 + 3.5 * np.cos(th))
        c[:, 0, 1] = c[:, 1, 0] = self.c12
        c[:, 2, 2] = self.c33
        return c


def nonuniform_modulus(x: np.ndarray, eps: float) -> np.ndarray:
    x1, x2 = x[..., 0], x[..., 1]
    a = 1.5 + np.sin(2 * np.pi * x1 / eps)
    b = 1.5 + np.sin(2 * np.pi * x2 / eps)
    return a / b + b / a + np.sin(4 * x1 * x2) + 1


class NonuniformField(MicroMaterialField):
    """Isotropic field whose modulus depends on the physical point."""

    periodicity = NONUNIFORM

    def __init__(self, eps: float, nu: float = 0.3):
        super().__init__(eps)
        if not 0 <= nu < 0.5:
            raise MaterialError("nu must lie in [0, 0.5)")
        self.nu = float(nu)

    @property
    def key(self):
        return ("nonuniform", self.eps, self.nu)

    def _eval(self, xm, xl):
        return _iso(nonuniform_modulus(xm + xl, self.eps), self.nu)


class PhaseField(MicroMaterialField):
    """Two-phase material read from the element phase ids of a micro mesh."""

    def __init__(self, mesh, E_incl, E_matrix, nu, eps):
        super().__init__(eps)
        if mesh.phase is None:
            raise MaterialError("mesh carries no phase ids")
        self.mesh = mesh
        self.c_incl = isotropic_plane_strain(E_incl, nu).c
        self.c_matrix = isotropic_plane_strain(E_matrix, nu).c
        self.params = (float(E_incl), float(E_matrix), float(nu))

    @property
    def key(self):
        return ("phase", self.eps, id(self.mesh)) + self.params

    def element_tensors(self, mesh) -> np.ndarray:
        phase = np.asarray(mesh.phase)
        return np.where((phase == 1)[:, None, None], self.c_incl, self.c_matrix)

    def _eval(self, xm, xl):
        raise MaterialError("phase fields are evaluated per element of their micro mesh")


def matrix_inclusion_field(E_incl, E_matrix, nu, eps, side_fraction=0.25):
    return MatrixInclusionField(E_incl, E_matrix, nu, eps, side_fraction)


def analytical_laminate_field(eps, coords="local", c12=35.0, c33=50.0):
    return LaminateField(eps, coords, c12, c33)


def nonuniform_field(eps, nu=0.3):
    return NonuniformField(eps, nu)


def laminate_exact_tensor(c12: float = 35.0, c33: float = 50.0) -> np.ndarray:
    """Closed-form homogenized laminate tensor (harmonic x1, arithmetic x2).

    With constant c12 the coupling terms cancel and A22 is the plain mean.
    """
    return np.array([[100.0, c12, 0.0], [c12, 500.0 / np.sqrt(12.75), 0.0], [0.0, 0.0, c33]])
