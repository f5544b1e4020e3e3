"""Compactified Minkowski spacetime: faces, boundary-defining functions,
canonical ray families and the de,sc frame.

Points are given by a time ``t`` and spatial coordinates ``x`` (length d).
Everything that only depends on ``(t, r)`` is vectorized over numpy arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from ._util import smoothstep

FACES = ("Pf", "nPf", "Sf", "nFf", "Ff")
FIBER_INFINITY = "df"
NPF, NFF = "nPf", "nFf"
_REFLECT = {"Pf": "Ff", "Ff": "Pf", "nPf": "nFf", "nFf": "nPf", "Sf": "Sf"}


def check_face(face):
    if face not in FACES:
        raise ValueError(f"unknown face {face!r}; expected one of {FACES}")
    return face


def reflect_face(face):
    """Time reflection t -> -t on face labels."""
    return _REFLECT[check_face(face)]


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    x: tuple = (0.0,)

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        if not 1 <= len(x) <= 3:
            raise ValueError("spatial dimension must be 1, 2 or 3")
        if not (np.isfinite(self.t) and np.all(np.isfinite(x))):
            raise ValueError("coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self):
        return len(self.x)

    @property
    def r(self):
        return float(np.hypot.reduce(self.x)) if self.d > 1 else abs(self.x[0])

    @property
    def v(self):
        return abs(self.t) - self.r

    def array(self):
        return np.array((self.t,) + self.x)

    def reflected(self):
        return SpacetimePoint(-self.t, self.x)


def _sigma_plus(y):
    """(y + sqrt(y^2+1))/2 evaluated without cancellation for y < 0."""
    y = np.asarray(y, float)
    root = np.sqrt(y * y + 1.0)
    with np.errstate(divide="ignore"):
        return np.where(y >= 0, 0.5 * (y + root), 0.5 / (root - y))


def _null_bdf(t, r):
    # future null face; the r*s(t) term keeps the value <= 1 for t < 0
    # without changing it anywhere near the future half
    t = np.asarray(t, float)
    root = np.sqrt(t * t + 1.0)
    with np.errstate(divide="ignore"):
        s = np.where(t > 0, 0.5 / (root + t), 0.5 * (root - t))
    num = (t - r) ** 2 + 1.0
    den = 1.0 + t * t + r * r + 2.0 * r * s
    return (num / den) ** 0.25


def bdf_tr(face, t, r):
    """Boundary-defining function of ``face`` as a function of (t, r)."""
    t = np.asarray(t, float)
    r = np.asarray(r, float)
    check_face(face)
    if face == "Ff":
        return 1.0 / (1.0 + _sigma_plus(t - r))
    if face == "Pf":
        return 1.0 / (1.0 + _sigma_plus(-t - r))
    if face == "Sf":
        return 1.0 / (1.0 + _sigma_plus(r - np.sqrt(t * t + 1.0)))
    if face == "nFf":
        return _null_bdf(t, r)
    return _null_bdf(-t, r)


def all_bdfs_tr(t, r):
    return {f: bdf_tr(f, t, r) for f in FACES}


def total_bdf_tr(t, r):
    out = 1.0
    for f in FACES:
        out = out * bdf_tr(f, t, r)
    return out


def bdf(face, z):
    return float(bdf_tr(face, z.t, z.r))


def total_bdf(z):
    return float(total_bdf_tr(z.t, z.r))


@dataclass
class BdfVector:
    rho_f: dict
    rho_total: float


def bdf_vector(z):
    rho = {f: bdf(f, z) for f in FACES}
    return BdfVector(rho, float(np.prod(list(rho.values()))))


def comparability(t, r):
    """w * rho_Pf rho_nPf^2 rho_Sf rho_nFf^2 rho_Ff, bounded above and below."""
    b = all_bdfs_tr(t, r)
    w = np.sqrt(1.0 + np.asarray(t, float) ** 2 + np.asarray(r, float) ** 2)
    return (w * b["Pf"] * b["nPf"] ** 2 * b["Sf"] * b["nFf"] ** 2
            * b["Ff"])


# --- cutoff and frame --------------------------------------------------------

def null_cutoff(t, r):
    """Equal to 1 near null infinity, 0 near t = 0 and near the t axis."""
    t = np.abs(np.asarray(t, float))
    r = np.asarray(r, float)
    ratio = np.divide(t, r, out=np.zeros(np.broadcast(t, r).shape),
                      where=r > 0)
    return smoothstep(r, 1.0, 2.0) * smoothstep(ratio, 0.25, 0.5)


@dataclass
class DescFrame:
    vectors: list
    roles: list
    chi: float
    rho_n: float = 1.0
    point: SpacetimePoint = None

    def matrix(self):
        return np.array(self.vectors)


def desc_frame(z):
    """Spanning frame for de,sc vector fields at ``z``.

    The time and spatial generators are blended from the coordinate fields
    (where the cutoff vanishes) to their rescaled versions; the light-cone
    and angular generators are present only where the cutoff is positive.
    """
    d, t, r = z.d, z.t, z.r
    chi = float(null_cutoff(t, r))
    rho_n = bdf(NPF, z) * bdf(NFF, z)
    scale = (1.0 - chi) + chi * rho_n
    vecs, roles = [], []
    e = np.eye(d + 1)
    vecs.append(scale * e[0])
    roles.append("time")
    for j in range(d):
        vecs.append(scale * e[j + 1])
        roles.append(f"spatial_{j}")
    if chi > 0:
        x = np.array(z.x)
        lc = np.zeros(d + 1)
        lc[0] = np.sign(t)
        lc[1:] = x / r
        vecs.append(chi / rho_n * lc)
        roles.append("lightcone")
        k = 0
        for i in range(d):
            for j in range(i + 1, d):
                w = np.zeros(d + 1)
                w[i + 1], w[j + 1] = -x[j] / r, x[i] / r
                vecs.append(chi * w)
                roles.append(f"angular_{k}")
                k += 1
    return DescFrame(vecs, roles, chi, rho_n, z)


def desc_tensor_norm(h, z):
    """max |h(V, W)| over pairs of frame vectors; h is a (d+1)x(d+1) array."""
    F = desc_frame(z).matrix()
    return float(np.max(np.abs(F @ np.asarray(h) @ F.T)))


# --- ray families ---------------------------------------------------------

K_RANGE = tuple(range(6, 21))
SLOPES = (0.0, 0.3, -0.3, 0.6, -0.6)
OFFSETS = (-5.0, 0.0, 5.0)
BETAS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class RayFamily:
    """Closed-form curve k -> point approaching one face.

    ``param`` is the slope c for Pf/Sf/Ff, the null offset v for nPf/nFf, and
    the corner exponent beta for the ``corner`` family (t = r + r^beta).
    """

    face: str
    param: float = 0.0
    d: int = 1
    corner: bool = False
    ks: tuple = field(default=K_RANGE)

    def __post_init__(self):
        check_face(self.face)
        if self.face in ("Pf", "Sf", "Ff") and not self.corner:
            if abs(self.param) >= 1:
                raise ValueError(f"slope |c| must be < 1 for {self.face}")
        if self.corner and not 0 < self.param < 1:
            raise ValueError("corner exponent must lie in (0, 1)")

    def tr(self, k):
        """(t, signed first spatial coordinate) at index k."""
        s = 2.0 ** np.asarray(k, float)
        p = self.param
        if self.corner:
            t = s + s ** p
            return (t, s) if self.face in ("Ff", "nFf") else (-t, s)
        if self.face == "Ff":
            return s, p * s
        if self.face == "Pf":
            return -s, p * s
        if self.face == "Sf":
            return p * s, s
        if self.face == "nFf":
            return s + p, s
        return -(s + p), s

    def point(self, k):
        t, x = self.tr(k)
        xs = np.zeros(self.d)
        xs[0] = x
        return SpacetimePoint(float(t), xs)

    def points(self):
        return [self.point(k) for k in self.ks]

    def label(self):
        kind = "beta" if self.corner else (
            "v" if self.face in ("nPf", "nFf") else "c")
        return f"{self.face}:{kind}={self.param:g}"


def ray(face, param=0.0, k=10, d=1):
    return RayFamily(face, param, d).point(k)


def canonical_families(face, d=1):
    if face in ("nPf", "nFf"):
        return [RayFamily(face, v, d) for v in OFFSETS]
    return [RayFamily(face, c, d) for c in SLOPES]


def face_decay_variable(face, t, x):
    """Coordinate used to report rates: |t| for caps, r for the rest."""
    return abs(t) if face in ("Pf", "Ff") else abs(x)
