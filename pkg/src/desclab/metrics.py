"""Metric zoo on R^{1,d} with exact first derivatives.

Every metric here is Minkowski plus a sum of rank-one radial terms
``phi(t, r) * w (x) w`` with ``w = a dt + b dr``.  The scalar profiles are
carried as jets (value, d/dt, d/dr), so g, its inverse and its coordinate
derivatives are exact.  Signature is (-, +, ..., +).
"""

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from ._util import loglog_fit, smoothstep, smoothstep_d


class DomainError(ValueError):
    pass


# --- jets in (t, r) ----------------------------------------------------------

class Jet:
    """Scalar function of (t, r) with its two first partials."""

    __slots__ = ("v", "t", "r")

    def __init__(self, v, t=0.0, r=0.0):
        self.v, self.t, self.r = v, t, r

    @staticmethod
    def lift(a):
        return a if isinstance(a, Jet) else Jet(a, 0.0, 0.0)

    def __add__(self, o):
        o = Jet.lift(o)
        return Jet(self.v + o.v, self.t + o.t, self.r + o.r)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.t, -self.r)

    def __sub__(self, o):
        return self + (-Jet.lift(o))

    def __rsub__(self, o):
        return Jet.lift(o) - self

    def __mul__(self, o):
        o = Jet.lift(o)
        return Jet(self.v * o.v, self.t * o.v + self.v * o.t,
                   self.r * o.v + self.v * o.r)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = Jet.lift(o)
        q = self.v / o.v
        return Jet(q, (self.t - q * o.t) / o.v, (self.r - q * o.r) / o.v)

    def __rtruediv__(self, o):
        return Jet.lift(o) / self

    def apply(self, f, df):
        d = df(self.v)
        return Jet(f(self.v), d * self.t, d * self.r)


def jet_t(t, r):
    return Jet(np.asarray(t, float), np.ones_like(np.asarray(t, float)), 0.0)


def jet_r(t, r):
    return Jet(np.asarray(r, float), 0.0, np.ones_like(np.asarray(r, float)))


def jlog(j):
    return j.apply(np.log, lambda x: 1.0 / x)


def jramp(j, a, b):
    return j.apply(lambda x: smoothstep(x, a, b),
                   lambda x: smoothstep_d(x, a, b))


# --- mass functions and profiles -------------------------------------------

@dataclass(frozen=True)
class MassFunction:
    """Constant ``before`` for v < v0, ``after`` for v > v1, C2 in between."""

    before: float = 1.0
    after: float = 0.5
    v0: float = 0.0
    v1: float = 10.0

    def __post_init__(self):
        if self.v1 <= self.v0:
            raise ValueError("need v1 > v0")
        if self.after <= 0 or self.before < self.after:
            raise ValueError("need before >= after > 0")

    def __call__(self, v):
        s = smoothstep(v, self.v0, self.v1)
        return self.before + (self.after - self.before) * s

    def deriv(self, v):
        return (self.after - self.before) * smoothstep_d(v, self.v0, self.v1)

    def jet(self, j):
        return j.apply(self, self.deriv)


def band_profile(s):
    """Weight of the outgoing form: 0 for s <= -1/2, 1 for s >= 1/2."""
    return smoothstep(s, -0.5, 0.5)


# --- metric container ------------------------------------------------------

@dataclass
class RadialTerm:
    """phi(t, r) (a dt + b dr)^2 with phi returned as a Jet."""

    phi: object
    a: float
    b: float


@dataclass
class Metric:
    kind: str
    d: int = 1
    params: dict = field(default_factory=dict)
    terms: list = field(default_factory=list)
    r_min: float = -1.0
    # shortest length over which the profiles vary (sets FD step sizes)
    length_scale: float = np.inf

    # evaluation works on arrays t (shape S) and x (shape S + (d,))

    def _split(self, t, x):
        t = np.asarray(t, float)
        x = np.asarray(x, float).reshape(t.shape + (self.d,))
        r = np.sqrt(np.sum(x * x, axis=-1))
        if np.any(r <= self.r_min):
            raise DomainError(
                f"{self.kind} metric evaluated at r <= {self.r_min:g}")
        return t, x, r

    def _forms(self, x, r):
        """Unit radial covector components and their x-derivatives."""
        safe = np.where(r > 0, r, 1.0)
        nhat = np.where(r[..., None] > 0, x / safe[..., None], 0.0)
        eye = np.eye(self.d)
        dn = (eye - nhat[..., :, None] * nhat[..., None, :]) / safe[..., None,
                                                                    None]
        return nhat, dn

    def perturbation(self, t, x, with_derivs=False):
        t, x, r = self._split(t, x)
        n = self.d + 1
        S = t.shape
        h = np.zeros(S + (n, n))
        dh = np.zeros(S + (n, n, n)) if with_derivs else None
        if not self.terms:
            return (h, dh) if with_derivs else h
        nhat, dn = self._forms(x, r)
        for term in self.terms:
            phi = term.phi(t, r)
            pv = np.broadcast_to(phi.v, S)
            w = np.zeros(S + (n,))
            w[..., 0] = term.a
            w[..., 1:] = term.b * nhat
            ww = w[..., :, None] * w[..., None, :]
            h += pv[..., None, None] * ww
            if with_derivs:
                pt = np.broadcast_to(phi.t, S)
                pr = np.broadcast_to(phi.r, S)
                dh[..., 0, :, :] += pt[..., None, None] * ww
                for i in range(self.d):
                    dw = np.zeros(S + (n,))
                    dw[..., 1:] = term.b * dn[..., i, :]
                    dww = dw[..., :, None] * w[..., None, :]
                    dww = dww + np.swapaxes(dww, -1, -2)
                    dh[..., i + 1, :, :] += (
                        (pr * nhat[..., i])[..., None, None] * ww
                        + pv[..., None, None] * dww)
        return (h, dh) if with_derivs else h

    def eta(self, shape=()):
        e = np.diag([-1.0] + [1.0] * self.d)
        return np.broadcast_to(e, tuple(shape) + e.shape).copy()

    def g(self, t, x):
        h = self.perturbation(t, x)
        return self.eta(np.shape(t)) + h

    def ginv(self, t, x):
        return np.linalg.inv(self.g(t, x))

    def dg(self, t, x):
        """dg[..., k, i, j] = d g_ij / d z^k."""
        return self.perturbation(t, x, with_derivs=True)[1]

    # point helpers
    def at(self, z):
        return self.g(z.t, np.array(z.x))

    def inv_at(self, z):
        return self.ginv(z.t, np.array(z.x))

    def dg_at(self, z):
        return self.dg(z.t, np.array(z.x))

    def sqrt_det(self, t, x):
        return np.sqrt(np.abs(np.linalg.det(self.g(t, x))))


def minkowski(d=1):
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    return Metric("minkowski", d)


def schwarzschild(mass, coords="naive", d=1):
    if mass <= 0:
        raise ValueError("mass must be positive")
    m = float(mass)
    if coords == "naive":
        terms = [RadialTerm(lambda t, r: 2 * m / jet_r(t, r), 1.0, 0.0),
                 RadialTerm(lambda t, r: 2 * m / (jet_r(t, r) - 2 * m), 0.0,
                            1.0)]
    elif coords == "eddington_finkelstein":
        terms = [RadialTerm(lambda t, r: 2 * m / jet_r(t, r), 1.0, -1.0)]
    else:
        raise ValueError(f"unknown coordinates {coords!r}")
    return Metric(f"schwarzschild_{coords}", d, {"mass": m, "coords": coords},
                  terms, r_min=2 * m)


def vaidya_outgoing(massfn, d=3):
    """g_M + 2 m(t - r)/r (dt - dr)^2, valid for r > 0."""
    def phi(t, r):
        R = jet_r(t, r)
        return 2 * massfn.jet(jet_t(t, r) - R) / R
    return Metric("vaidya_outgoing", d, {"massfn": massfn},
                  [RadialTerm(phi, 1.0, -1.0)],
                  length_scale=massfn.v1 - massfn.v0)


def symbol_perturbation(eps=0.1, decay=1.0, d=1):
    """Time-independent symbol term eps <r>^{-decay} (dt^2 + dr^2)."""
    if not 0 <= eps < 1:
        raise ValueError("amplitude must lie in [0, 1)")

    def phi(t, r):
        R = jet_r(t, r)
        return eps * (1 + R * R).apply(lambda q: q ** (-decay / 2),
                                       lambda q: -decay / 2 * q ** (
                                           -decay / 2 - 1))
    return Metric("perturbed", d, {"eps": eps, "decay": decay},
                  [RadialTerm(phi, 1.0, 0.0), RadialTerm(phi, 0.0, 1.0)])


def vaidya_glued(M_I=0.5, M=1.0, M_F=0.5, massfn_out=None, massfn_in=None,
                 r0=10.0, core_cap=True, d=1):
    """Outgoing Vaidya for t > 0 glued to a time-reversed copy for t < 0.

    Near t = 0 the two mass-M Eddington-Finkelstein forms are blended by a
    homogeneous weight of t/r; inside r < r0 the perturbation is ramped to
    zero on [r0/2, r0] so the core is exact Minkowski.
    """
    if not M >= max(M_I, M_F) > 0:
        raise ValueError("need M >= max(M_I, M_F) > 0")
    if r0 <= 4 * M:
        raise ValueError("gluing radius must exceed 4M")
    out = massfn_out or MassFunction(M, M_F)
    inn = massfn_in or MassFunction(M, M_I)
    if out.before != M or inn.before != M:
        raise ValueError("mass functions must start at M")

    def cap(R):
        return jramp(R, r0 / 2, r0) if core_cap else 1.0

    def radius(t, r):
        # below r0/4 the cap vanishes, so clamping R there changes nothing
        R = jet_r(t, r)
        if not core_cap:
            return R
        return R.apply(lambda q: np.maximum(q, r0 / 4),
                       lambda q: (q > r0 / 4).astype(float))

    def phi_out(t, r):
        T, R = jet_t(t, r), radius(t, r)
        A = jramp(T / R, -0.5, 0.5)
        return 2 * cap(R) * A * out.jet(T - R) / R

    def phi_in(t, r):
        T, R = jet_t(t, r), radius(t, r)
        A = jramp(T / R, -0.5, 0.5)
        return 2 * cap(R) * (1 - A) * inn.jet(-T - R) / R

    params = {"M_I": M_I, "M": M, "M_F": M_F, "r0": r0,
              "core_cap": core_cap, "massfn_out": out, "massfn_in": inn}
    length = min(out.v1 - out.v0, inn.v1 - inn.v0, r0 / 2)
    return Metric("vaidya_glued", d, params,
                  [RadialTerm(phi_out, 1.0, -1.0), RadialTerm(phi_in, 1.0, 1.0)],
                  r_min=-1.0 if core_cap else 0.0, length_scale=length)


def time_reflect(metric):
    """Pullback under t -> -t."""
    def flip(phi):
        def out(t, r):
            p = phi(-np.asarray(t, float), r)
            return Jet(p.v, -p.t, p.r)
        return out
    terms = [RadialTerm(flip(tm.phi), -tm.a, tm.b) for tm in metric.terms]
    return Metric(metric.kind + "_reflected", metric.d, dict(metric.params),
                  terms, metric.r_min)


# --- tortoise coordinate and recompactification ---------------------------

def tortoise_rstar(mass, r):
    r = np.asarray(r, float)
    if np.any(r <= 2 * mass):
        raise DomainError("tortoise coordinate needs r > 2m")
    return r + 2 * mass * np.log(r - 2 * mass)


def tortoise_rstar_deriv(mass, r):
    return 1.0 / (1.0 - 2 * mass / np.asarray(r, float))


def psi_profile(s):
    """sign(s) for |s| >= 0.8, zero for |s| <= 0.4."""
    s = np.asarray(s, float)
    return np.sign(s) * smoothstep(np.abs(s), 0.4, 0.8)


def psi_profile_d(s):
    s = np.asarray(s, float)
    return smoothstep_d(np.abs(s), 0.4, 0.8)


def chi_profile(y):
    """1 on [0, 1/2], 0 on [1, inf)."""
    return 1.0 - smoothstep(y, 0.5, 1.0)


def chi_profile_d(y):
    return -smoothstep_d(y, 0.5, 1.0)


class InjectivityError(ValueError):
    def __init__(self, msg, pair=None):
        super().__init__(msg)
        self.pair = pair


@dataclass
class CompactificationMap:
    """(t, x) -> (t - 2 psi(t/r) chi(F/(r^2+t^2)) m ln(r - 2m), x)."""

    mass: float
    F: float = 1e4

    def _shift(self, t, r):
        if np.any(np.asarray(r) <= 0):
            raise DomainError("tortoise map is evaluated away from the axis")
        T, R = jet_t(t, r), jet_r(t, r)
        s = T / R
        y = self.F / (R * R + T * T)
        psi = s.apply(psi_profile, psi_profile_d)
        chi = y.apply(chi_profile, chi_profile_d)
        w = psi * chi
        active = np.asarray(w.v) != 0
        rr = np.asarray(r, float)
        if np.any(active & (rr <= 2 * self.mass)):
            raise DomainError("tortoise map needs r > 2m where it is active")
        L = jlog(Jet(np.where(rr > 2 * self.mass, rr - 2 * self.mass, 1.0),
                     0.0, 1.0))
        return 2 * self.mass * w * L

    def forward(self, t, x):
        x = np.asarray(x, float)
        r = np.linalg.norm(np.atleast_1d(x), axis=-1)
        return np.asarray(t, float) - self._shift(t, r).v

    def jacobian(self, t, x):
        """Dj as a (d+1)x(d+1) matrix at a single point."""
        x = np.atleast_1d(np.asarray(x, float))
        r = float(np.linalg.norm(x))
        sh = self._shift(float(t), r)
        d = len(x)
        J = np.eye(d + 1)
        J[0, 0] = 1.0 - float(sh.t)
        J[0, 1:] = -float(sh.r) * x / r
        return J

    def dt_tilde_dt(self, t, r):
        return 1.0 - self._shift(t, r).t

    def inverse(self, tt, x, tol=1e-12, maxiter=100):
        x = np.atleast_1d(np.asarray(x, float))
        r = float(np.linalg.norm(x))
        t = float(tt)
        for _ in range(maxiter):
            sh = self._shift(t, r)
            f = t - float(sh.v) - tt
            step = f / (1.0 - float(sh.t))
            t -= step
            if abs(step) <= tol * max(1.0, abs(t)):
                return t
        raise RuntimeError("tortoise map inversion did not converge")

    def check(self, ts=None, rs=None):
        """Jacobian positivity and monotonicity on a sample sweep."""
        if ts is None:
            lt = np.logspace(-2, 8, 400)
            ts = np.concatenate([-lt[::-1], [0.0], lt])
        if rs is None:
            rs = 2 * self.mass * (1 + np.logspace(-3, 7, 120))
        T, R = np.meshgrid(ts, rs, indexing="ij")
        jac = self.dt_tilde_dt(T, R)
        bad = np.argwhere(jac <= 0)
        if len(bad):
            i, j = bad[0]
            raise InjectivityError(
                f"dt~/dt <= 0 at t={T[i, j]:g}, r={R[i, j]:g}",
                ((T[i, j], R[i, j]),))
        tt = T - self._shift(T, R).v
        dif = np.diff(tt, axis=0)
        bad = np.argwhere(dif <= 0)
        if len(bad):
            i, j = bad[0]
            raise InjectivityError(
                "map not monotone in t", ((T[i, j], R[i, j]),
                                          (T[i + 1, j], R[i + 1, j])))
        return True


def tortoise_map(mass, F=1e4, auto=True, max_doublings=40):
    if mass <= 0 or F <= 0:
        raise ValueError("need positive mass and F")
    for _ in range(max_doublings):
        j = CompactificationMap(float(mass), float(F))
        try:
            j.check()
            return j
        except InjectivityError:
            if not auto:
                raise
            F *= 2
    raise InjectivityError("no admissible F found")


def pushforward_metric(metric, jmap, fd_step=1e-5):
    """(j_* g)(j(z)) = Dj^{-T} g(z) Dj^{-1}; derivatives by central differences."""
    out = Metric(f"{metric.kind}_pushed", metric.d, dict(metric.params), [],
                 metric.r_min)
    out.params["F"] = getattr(jmap, "F", None)

    def g_point(tt, x):
        if np.linalg.norm(x) <= metric.r_min:
            raise DomainError(f"{metric.kind} metric evaluated at r <= "
                              f"{metric.r_min:g}")
        t = jmap.inverse(tt, x)
        J = jmap.jacobian(t, x)
        if abs(np.linalg.det(J)) < 1e-14:
            raise DomainError("non-invertible Jacobian")
        Ji = np.linalg.inv(J)
        return Ji.T @ metric.g(t, x) @ Ji

    def g(tt, x):
        tt = np.asarray(tt, float)
        x = np.asarray(x, float).reshape(tt.shape + (metric.d,))
        flat_t = tt.reshape(-1)
        flat_x = x.reshape(-1, metric.d)
        G = np.array([g_point(a, b) for a, b in zip(flat_t, flat_x)])
        return G.reshape(tt.shape + (metric.d + 1, metric.d + 1))

    def perturbation(tt, x, with_derivs=False):
        h = g(tt, x) - out.eta(np.shape(tt))
        if not with_derivs:
            return h
        return h, _fd_dg(g, tt, x, metric.d, fd_step, metric.r_min,
                              metric.length_scale)

    out.g = g
    out.perturbation = perturbation
    out.jmap = jmap
    return out


def _fd_dg(g, t, x, d, step, r_min=0.0, length=np.inf):
    t = np.asarray(t, float)
    x = np.asarray(x, float).reshape(t.shape + (d,))
    # local length scale: distance to the origin, or to the excised core
    r = np.sqrt(np.sum(x * x, axis=-1))
    scale = np.maximum(1.0, np.minimum(np.sqrt(t * t + r * r),
                                       np.minimum(r - max(r_min, 0.0),
                                                  length)))
    hs = step * scale
    out = []
    for k in range(d + 1):
        tp, tm, xp, xm = t.copy(), t.copy(), x.copy(), x.copy()
        if k == 0:
            tp = t + hs
            tm = t - hs
        else:
            xp[..., k - 1] += hs
            xm[..., k - 1] -= hs
        out.append((g(tp, xp) - g(tm, xm)) / (2 * hs)[..., None, None])
    return np.stack(out, axis=-3)


def numeric_dg(metric, t, x, step=1e-4):
    """Central-difference derivative of g; independent check of ``dg``."""
    return _fd_dg(metric.g, t, x, metric.d, step, metric.r_min,
                  metric.length_scale)


# --- curvature oracle ------------------------------------------------------

def christoffel(metric, t, x):
    G = metric.g(t, x)
    Gi = np.linalg.inv(G)
    dG = metric.dg(t, x)
    # Gamma^a_{bc} = 1/2 g^{ad} (d_b g_dc + d_c g_db - d_d g_bc)
    term = (np.einsum("bdc->dbc", dG) + np.einsum("cdb->dbc", dG)
            - dG)
    return 0.5 * np.einsum("ad,dbc->abc", Gi, term)


def ricci_scalar_fd(metric, z, step=None):
    """Ricci scalar from exact Christoffels and centered differences of them."""
    t, x = z.t, np.array(z.x, float)
    n = metric.d + 1
    if step is None:
        step = 1e-3 * max(1.0, np.hypot(t, np.linalg.norm(x)))
    Gam = christoffel(metric, t, x)
    dGam = np.zeros((n,) + Gam.shape)
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        gp = christoffel(metric, t + e[0], x + e[1:])
        gm = christoffel(metric, t - e[0], x - e[1:])
        dGam[k] = (gp - gm) / (2 * step)
    # R_{bc} = d_a G^a_bc - d_c G^a_ba + G^a_ad G^d_bc - G^a_cd G^d_ba
    ric = (np.einsum("aabc->bc", dGam) - np.einsum("caba->bc", dGam)
           + np.einsum("aad,dbc->bc", Gam, Gam)
           - np.einsum("acd,dba->bc", Gam, Gam))
    Gi = metric.inv_at(z)
    return float(np.einsum("bc,bc->", Gi, ric))


# --- decay fits -----------------------------------------------------------

@dataclass
class DecayFit:
    face: str
    family: str
    param: float
    alpha: float
    residual: float
    n_samples: int

    @property
    def claimed(self):
        return self.residual < 0.05 and self.n_samples >= 8

    def row(self):
        return (self.face, self.param, self.alpha, self.residual,
                self.n_samples)


CSV_HEADER = ("face", "c_or_v_or_beta", "alpha", "residual", "n_samples")


def perturbation_norm(metric, z):
    h = metric.perturbation(z.t, np.array(z.x))
    return geo.desc_tensor_norm(h, z)


def decay_fit(metric, face, family, min_samples=8, floor=1e-300):
    """Exponent alpha with N_{g - g_M} ~ rho_face^alpha along the family."""
    geo.check_face(face)
    Ns, rhos = [], []
    for z in family.points():
        try:
            N = perturbation_norm(metric, z)
        except DomainError:
            continue
        if N <= floor:
            continue
        Ns.append(N)
        rhos.append(geo.bdf(face, z))
    if len(Ns) < 2 or np.ptp(np.log(rhos)) < 1.0:
        raise ValueError(
            f"insufficient dynamic range along {family.label()} "
            f"({len(Ns)} usable samples)")
    slope, _, res = loglog_fit(rhos, Ns)
    return DecayFit(face, family.label(), family.param, slope, res, len(Ns))


def pentuple(metric, families=None, d=1):
    """Decay exponent per face, each fitted along its canonical families."""
    out = {}
    for face in geo.FACES:
        fams = families[face] if families else geo.canonical_families(face, d)
        fits = []
        for fam in fams:
            try:
                fits.append(decay_fit(metric, face, fam))
            except ValueError:
                continue
        out[face] = fits
    return out


def fits_to_csv(fits):
    lines = [",".join(CSV_HEADER)]
    for f in fits:
        face, p, a, res, n = f.row()
        lines.append(f"{face},{p:g},{a:.6f},{res:.6f},{n}")
    return "\n".join(lines) + "\n"
