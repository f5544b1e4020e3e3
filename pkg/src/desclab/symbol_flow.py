"""Principal symbol and bicharacteristic flow of the Klein-Gordon operator.

Conventions: p(z, zeta) = g^{-1}_z(zeta, zeta) + msq, so Minkowski gives
-tau^2 + |xi|^2 + msq.  Hamilton's equations are z' = dp/dzeta and
zeta' = -dp/dz.  The sheet Sigma+ is the component containing the future
dual cone (tau < 0 in Minkowski), on which the flow runs from past to future.

Integration happens in the ordinary coordinates (t, x, tau, xi); compactified
information (boundary-defining functions, rescaled frequencies, the
fiber-infinity coordinate) is computed from the state.  Radial sets are
located with closed-form charts at the boundary for d = 1.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.integrate import solve_ivp

from . import geometry as geo
from .metrics import DomainError


# --- symbol and field -----------------------------------------------------

@dataclass
class PhasePoint:
    z: geo.SpacetimePoint
    zeta: tuple
    chart: str = "interior"

    def __post_init__(self):
        zeta = tuple(float(v) for v in self.zeta)
        if len(zeta) != self.z.d + 1:
            raise ValueError("covector must have 1 + d components")
        self.zeta = zeta

    def state(self):
        return np.concatenate([self.z.array(), self.zeta])

    @classmethod
    def from_state(cls, y, chart="interior"):
        n = len(y) // 2
        return cls(geo.SpacetimePoint(y[0], tuple(y[1:n])), tuple(y[n:]),
                   chart)

    def rescaled_frequency(self):
        """Components of zeta on the de,sc frame at z."""
        return geo.desc_frame(self.z).matrix() @ np.array(self.zeta)

    def fiber_coordinate(self):
        """1/<eta>: zero exactly at fiber infinity."""
        eta = self.rescaled_frequency()
        return float(1.0 / np.sqrt(1.0 + eta @ eta))


def principal_symbol(g, z, zeta, msq=0.0):
    zeta = np.asarray(zeta, float)
    return float(zeta @ g.inv_at(z) @ zeta + msq)


def _raw_field(g, y):
    n = len(y) // 2
    t, x, zeta = y[0], y[1:n], y[n:]
    Gi = g.ginv(t, x)
    dG = g.dg(t, x)
    w = Gi @ zeta
    zdot = 2 * w
    # d/dz^k of g^{-1}(zeta, zeta) is -w^T (d_k g) w
    kdot = np.einsum("i,kij,j->k", w, dG, w)
    return np.concatenate([zdot, kdot])


def _weight(y, H):
    n = len(y) // 2
    z, zeta = y[:n], y[n:]
    return (np.linalg.norm(H[:n]) / (1.0 + np.linalg.norm(z))
            + np.linalg.norm(H[n:]) / (1e-300 + np.linalg.norm(zeta)))


@dataclass
class FieldValue:
    vector: np.ndarray
    raw: np.ndarray
    at_fixed_point: bool


def hamiltonian_field(g, P):
    """H_p at P, divided by a positive weight giving unit logarithmic speed."""
    y = P.state()
    H = _raw_field(g, y)
    w = _weight(y, H)
    if w == 0 or not np.isfinite(w):
        return FieldValue(np.zeros_like(H), H, True)
    return FieldValue(H / w, H, False)


# --- characteristic set ---------------------------------------------------

@dataclass
class Components:
    count: int
    labels: list
    meet_at_zero_section: bool

    def as_dict(self):
        return {"count": self.count, "labels": self.labels,
                "meet_at_zero_section": self.meet_at_zero_section}


def characteristic_components(g, msq_plus_relambda, shell_radius=4.0,
                              z=None, near_df=False, n=None):
    """Connected pieces of the characteristic set over one base point.

    Each sheet of {p = 0} bounds one component of {p < 0} (the inside of the
    dual cone), so components are counted on that open set, sampled on a
    grid in the fiber ball of the given radius (or the outer annulus when
    ``near_df``).
    """
    d = g.d
    if z is None:
        z = geo.SpacetimePoint(0.0, (3.0 + 2 * g.params.get("mass", 0),)
                               + (0.0,) * (d - 1))
    if n is None:
        n = {1: 201, 2: 61, 3: 25}[d]
    n += (n + 1) % 2  # odd, so the zero covector is a grid node
    Gi = g.inv_at(z)
    if np.min(np.abs(np.linalg.eigvalsh(Gi))) < 1e-12:
        raise ValueError("degenerate metric at the base point")
    ax = np.linspace(-shell_radius, shell_radius, n)
    grids = np.meshgrid(*([ax] * (d + 1)), indexing="ij")
    Z = np.stack(grids, axis=-1)
    P = np.einsum("...i,ij,...j->...", Z, Gi, Z) + msq_plus_relambda
    rad = np.sqrt(np.sum(Z * Z, axis=-1))
    mask = (P < 0) & (rad <= shell_radius)
    if near_df:
        mask &= rad >= shell_radius / 2
    structure = np.ones((3,) * (d + 1), bool)
    lab, count = ndimage.label(mask, structure)
    labels = []
    for k in range(1, count + 1):
        # future dual cone: the covector g(d_t) has negative tau
        tau_mean = np.mean(Z[..., 0][lab == k])
        labels.append("Sigma+" if tau_mean < 0 else "Sigma-")
    c = n // 2
    near0 = lab[tuple(slice(c - 1, c + 2) for _ in range(d + 1))]
    meet = len(set(near0[near0 > 0].tolist())) >= 2
    return Components(count, labels, meet)


# --- bicharacteristic integration ----------------------------------------

@dataclass
class Trajectory:
    params: np.ndarray
    states: np.ndarray
    reason: str
    chart: str = "interior"
    d: int = 1
    msq: float = 0.0
    symbol_values: np.ndarray = None

    def point(self, i=-1):
        return PhasePoint.from_state(self.states[i])

    @property
    def length(self):
        return float(self.params[-1] - self.params[0])

    def bdfs(self, i=-1):
        z = self.point(i).z
        return {f: geo.bdf(f, z) for f in geo.FACES}

    def to_csv(self):
        n = self.d + 1
        cols = (["s", "chart", "t"] + [f"x{j}" for j in range(self.d)]
                + ["tau"] + [f"xi{j}" for j in range(self.d)]
                + [f"rho_{f}" for f in geo.FACES] + ["p"])
        lines = [",".join(cols)]
        for k, (s, y) in enumerate(zip(self.params, self.states)):
            b = geo.all_bdfs_tr(y[0], np.linalg.norm(y[1:n]))
            row = [f"{s:.10g}", self.chart] + [f"{v:.12g}" for v in y]
            row += [f"{float(b[f]):.6g}" for f in geo.FACES]
            row.append(f"{self.symbol_values[k]:.6g}")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


@dataclass
class FlowOptions:
    max_length: float = 200.0
    boundary_tol: float = 1e-4
    rtol: float = 1e-11
    atol: float = 1e-12
    reverse: bool = False
    max_step: float = np.inf
    # False integrates H_p itself, so the parameter is affine
    normalize: bool = True


class StepUnderflow(RuntimeError):
    pass


def integrate_bichar(g, start, msq=0.0, opts=None):
    """Integrate the weighted Hamiltonian field from ``start``.

    Stops when some boundary-defining function drops below the tolerance,
    when the parameter length is exhausted, or when the state leaves the
    metric's domain.
    """
    opts = opts or FlowOptions()
    sgn = -1.0 if opts.reverse else 1.0
    n = start.z.d + 1
    r_min = getattr(g, "r_min", -1.0)

    def rhs(s, y):
        H = _raw_field(g, y)
        if not opts.normalize:
            return sgn * H
        return sgn * H / _weight(y, H)

    def boundary(s, y):
        r = np.linalg.norm(y[1:n])
        return min(float(v) for v in geo.all_bdfs_tr(y[0], r).values()) \
            - opts.boundary_tol
    boundary.terminal = True
    boundary.direction = -1

    def core(s, y):
        return np.linalg.norm(y[1:n]) - (r_min + 1e-6 * (1 + abs(r_min)))
    core.terminal = True
    core.direction = -1

    events = [boundary] + ([core] if r_min > 0 else [])
    y0 = start.state()
    try:
        sol = solve_ivp(rhs, (0.0, opts.max_length), y0, method="DOP853",
                        rtol=opts.rtol, atol=opts.atol, events=events,
                        max_step=opts.max_step)
    except DomainError as e:
        raise StepUnderflow(f"left the metric domain: {e}") from e
    if sol.status == -1:
        raise StepUnderflow(
            f"{sol.message} at state {sol.y[:, -1].tolist()}")
    if sol.status == 1 and len(sol.t_events[0]):
        reason = "boundary"
    elif sol.status == 1:
        reason = "left_atlas"
    else:
        reason = "length_limit"
    states = sol.y.T
    zs = [PhasePoint.from_state(y) for y in states]
    pv = np.array([principal_symbol(g, P.z, P.zeta, msq) for P in zs])
    return Trajectory(sol.t, states, reason, "interior", start.z.d, msq, pv)


def null_covector(g, z, direction=1, sheet="+", scale=1.0):
    """Radial null covector at z: outgoing (direction=1) or incoming (-1).

    On sheet + the flow moves forward in time.
    """
    Gi = g.inv_at(z)
    n = z.d + 1
    e = np.zeros(n)
    e[1:] = np.array(z.x) / z.r
    # solve Gi(zeta, zeta) = 0 for zeta = tau dt + k e, picking the root whose
    # velocity has the requested radial sign
    A = Gi[0, 0]
    B = 2 * Gi[0, 1:] @ e[1:]
    C = e[1:] @ Gi[1:, 1:] @ e[1:]
    tau = -1.0 if sheet == "+" else 1.0
    disc = np.sqrt(B * B * tau * tau - 4 * C * A * tau * tau)
    best = None
    for k in ((-B * tau + disc) / (2 * C), (-B * tau - disc) / (2 * C)):
        zeta = np.concatenate([[tau], k * e[1:]])
        vel = 2 * Gi @ zeta
        radial = vel[1:] @ e[1:] * np.sign(vel[0])
        if np.sign(radial) == np.sign(direction):
            best = zeta
    if best is None:
        raise ValueError("no null covector with that direction")
    return PhasePoint(z, tuple(scale * best))


# --- boundary charts (d = 1, x > 0 end) ----------------------------------
#
# Null coordinates u = t - x, v = t + x with dual variables
# zeta_u = (tau - xi)/2, zeta_v = (tau + xi)/2, so p = -4 zeta_u zeta_v + msq.
# Each chart below gives the Hamiltonian field in boundary coordinates,
# multiplied by a positive function so that it extends smoothly to the
# boundary, and already restricted to Sigma.  ``s`` is the sign of the
# dominant rescaled frequency, which selects the sheet.

@dataclass
class BoundaryChart:
    name: str
    coords: tuple
    field: object            # (y, s, msq) -> dy/ds
    boundary: tuple          # indices of base boundary coordinates
    fiber: int               # index of the fiber-infinity coordinate or -1
    time: str                # "+" future side, "-" past side
    labeler: object          # (y, msq) -> family letter
    sheet_of: object         # s -> "+" or "-"
    box: tuple               # seed box per coordinate
    fiber_value: object = None  # (y, s, msq) -> fiber coordinate value


def _null_field(y, s, msq):
    # y = (u, sigma, w); the transverse frequency dominates and mu = m^2 w^2/4
    u, sig, w = y
    mu = msq * w * w / 4
    return s * np.array([-4 * mu, 2 * sig, -2 * w])


def _corner_C_field(y, s, msq):
    # y = (a, b, w) with a = 1/u, b = (u/v)^{1/2}, lam = m^2 w^2 / 4
    a, b, w = y
    lam = msq * w * w / 4
    return s * np.array([4 * a, 2 * b * (lam - 1), 2 * (lam - 1) * w])


def _corner_K_field(y, s, msq):
    # y = (a, b, w) with a = -1/u, b = (-u/v)^{1/2}
    a, b, w = y
    lam = msq * w * w / 4
    return s * np.array([-4 * a, 2 * b * (lam + 1), 2 * (lam + 1) * w])


def _cap_field(y, s, msq, past=False):
    # y = (rho, c, xi) over a timelike cap with sc frequencies; tau on Sigma
    rho, c, xi = y
    tau = s * np.sqrt(xi * xi + msq)
    if past:
        return np.array([-2 * tau * rho, 2 * xi - 2 * tau * c, 0.0])
    return np.array([2 * tau * rho, 2 * xi + 2 * tau * c, 0.0])


def _cap_fiber(y, s, msq):
    xi = y[2]
    return 1.0 / np.sqrt(1 + xi * xi + (xi * xi + msq))


def _corner_label(letter):
    def lab(y, msq):
        return letter if abs(y[2]) < 1e-6 else "R"
    return lab


def _future_sheet(s):
    # the dominant frequency has the sign of tau there
    return "+" if s < 0 else "-"


def _past_sheet(s):
    return "-" if s < 0 else "+"


def _make_charts():
    seeds_null = ((-2.0, 0.0, 2.0), (0.0, 0.05, 0.2), (0.0, 0.05, 0.2))
    seeds_corner = ((0.0, 0.05, 0.2), (0.0, 0.05, 0.3), (0.0, 0.05, 2.1))
    seeds_cap = ((0.0, 0.05, 0.2), (-0.5, 0.0, 0.5), (-2.0, -0.5, 0.7, 2.0))
    charts = []
    for time, sheet_of in (("+", _future_sheet), ("-", _past_sheet)):
        face = "nFf" if time == "+" else "nPf"
        charts.append(BoundaryChart(
            f"{face}:null", ("u" if time == "+" else "v", "sigma", "w"),
            _null_field, (1,), 2, time, lambda y, m: "N", sheet_of,
            seeds_null, lambda y, s, m: abs(y[2])))
        cap = "Ff" if time == "+" else "Pf"
        charts.append(BoundaryChart(
            f"{face}∩{cap}", ("a", "b", "w"), _corner_C_field, (0, 1), 2,
            time, _corner_label("C"), sheet_of, seeds_corner,
            lambda y, s, m: abs(y[2])))
        charts.append(BoundaryChart(
            f"{face}∩Sf", ("a", "b", "w"), _corner_K_field, (0, 1), 2,
            time, _corner_label("K"), sheet_of, seeds_corner,
            lambda y, s, m: abs(y[2])))
    charts.append(BoundaryChart(
        "Ff", ("rho", "c", "xi"), _cap_field, (0,), -1, "+",
        lambda y, m: "R", lambda s: "+" if s < 0 else "-", seeds_cap,
        _cap_fiber))
    charts.append(BoundaryChart(
        "Pf", ("rho", "c", "xi"),
        lambda y, s, m: _cap_field(y, s, m, past=True), (0,), -1, "-",
        lambda y, m: "R", lambda s: "+" if s < 0 else "-", seeds_cap,
        _cap_fiber))
    return charts


CHARTS = _make_charts()


def chart_by_name(name):
    for c in CHARTS:
        if c.name == name:
            return c
    raise KeyError(name)


def nPf_null_field_direct(y, s, msq):
    """Null chart at past null infinity written out directly.

    y = (v, sigma, w) with sigma = (-u)^{-1/2}; s is the sign of the
    dominant frequency zeta_v.  Used to cross-check the reflected chart.
    """
    v, sig, w = y
    mu = msq * w * w / 4
    return s * np.array([-4 * mu, -2 * sig, 2 * w])


# --- fixed points and classification --------------------------------------

def fd_jacobian(F, y, h):
    y = np.asarray(y, float)
    J = np.zeros((len(y), len(y)))
    for k in range(len(y)):
        e = np.zeros(len(y))
        e[k] = h
        J[:, k] = (F(y + e) - F(y - e)) / (2 * h)
    return J


def newton(F, y0, h=1e-7, tol=1e-13, maxiter=60):
    y = np.array(y0, float)
    for _ in range(maxiter):
        f = F(y)
        if np.max(np.abs(f)) < tol:
            return y, True
        J = fd_jacobian(F, y, h)
        step, *_ = np.linalg.lstsq(J, -f, rcond=None)
        y = y + step
        if not np.all(np.isfinite(y)):
            return y, False
    return y, bool(np.max(np.abs(F(y))) < tol)


def classify(eigs, tol=1e-6):
    re = np.real(np.asarray(eigs))
    if len(re) == 0:
        return "degenerate"
    if np.all(re > tol):
        return "source"
    if np.all(re < -tol):
        return "sink"
    if np.any(np.abs(re) <= tol):
        return "degenerate"
    return "saddle"


def normal_eigenvalues(J, zero_tol=1e-6):
    """Eigenvalues with the ones tangent to the fixed set removed."""
    ev = np.linalg.eigvals(J)
    scale = max(1.0, np.max(np.abs(ev)))
    keep = np.abs(ev) > zero_tol * scale
    return np.sort(np.real_if_close(ev[keep]).real)


@dataclass
class RadialSet:
    family: str
    sheet: str
    time: str
    points: list = field(default_factory=list)
    eigenvalues: list = None
    eigenvalues_df: list = None
    classification: str = None
    classification_df: str = None
    fiber_coordinate: float = None

    @property
    def label(self):
        return f"{self.family}{self.sheet}{self.time}"

    def as_dict(self):
        return {"family": self.family, "sheet": self.sheet, "time": self.time,
                "eigenvalues": self.eigenvalues,
                "eigenvalues_df": self.eigenvalues_df,
                "classification": self.classification,
                "classification_df": self.classification_df,
                "fiber_coordinate": self.fiber_coordinate,
                "n_points": len(self.points)}


class ClusterAmbiguity(RuntimeError):
    pass


def _linearize(chart, y, s, msq, h):
    F = lambda q: chart.field(q, s, msq)  # noqa: E731
    J = fd_jacobian(F, y, h)
    ev = normal_eigenvalues(J)
    ev_df = None
    if chart.fiber >= 0:
        keep = [i for i in range(len(y)) if i != chart.fiber]
        ev_df = normal_eigenvalues(J[np.ix_(keep, keep)])
    return ev, ev_df


def find_radial_sets(g=None, msq=1.0, d=1, fd_step=1e-5, merge_radius=1e-3):
    """Fixed points of the boundary flow on Sigma, grouped into families.

    The flow over the boundary faces only sees the Minkowski part of an
    asymptotically flat metric, so ``g`` only fixes the dimension.
    """
    if g is not None:
        d = g.d
    if d != 1:
        raise ValueError("radial-set detection is implemented for d = 1")
    found = {}
    for chart in CHARTS:
        for s in (-1.0, 1.0):
            F = lambda q: chart.field(q, s, msq)  # noqa: E731
            pts = []
            for y0 in np.array(np.meshgrid(*chart.box)).reshape(
                    len(chart.box), -1).T:
                y, ok = newton(F, y0)
                if not ok:
                    continue
                if any(abs(y[i]) > 1e-9 for i in chart.boundary[:1]):
                    continue
                if chart.fiber >= 0 and y[chart.fiber] < -1e-9:
                    continue
                if any(np.linalg.norm(y - q) < merge_radius for q in pts):
                    continue
                pts.append(y)
            for y in pts:
                fam = chart.labeler(y, msq)
                key = (fam, chart.sheet_of(s), chart.time)
                rs = found.setdefault(key, RadialSet(*key))
                ev, ev_df = _linearize(chart, y, s, msq, fd_step)
                ev2, ev_df2 = _linearize(chart, y, s, msq, fd_step / 2)
                cls = classify(ev)
                cls_df = classify(ev_df) if ev_df is not None and fam != "R" \
                    else None
                if classify(ev2) != cls or (
                        cls_df is not None and classify(ev_df2) != cls_df):
                    raise ClusterAmbiguity(
                        f"classification of {fam} changes with step size")
                fib = float(chart.fiber_value(y, s, msq))
                if rs.classification is None:
                    rs.eigenvalues = [float(e) for e in ev]
                    rs.eigenvalues_df = (None if cls_df is None
                                         else [float(e) for e in ev_df])
                    rs.classification = cls
                    rs.classification_df = cls_df
                    rs.fiber_coordinate = fib
                elif rs.classification != cls:
                    raise ClusterAmbiguity(
                        f"{rs.label} has points of types "
                        f"{rs.classification} and {cls}")
                else:
                    rs.fiber_coordinate = min(rs.fiber_coordinate, fib)
                rs.points.append((chart.name, [float(v) for v in y]))
    return [found[k] for k in sorted(found)]


# --- connections and propagation order ------------------------------------
#
# Over the boundary, fiber infinity of Sigma (d = 1) consists of four
# pieces labelled by the sheet and by eps = xi/tau = +-1 (eps = +1 moves
# left).  Each piece sits over the boundary polygon of the compactified
# plane.  The flow along an edge is read off from the Hamiltonian field of
# the metric far out on that edge.

POLYGON = (  # (face, spatial side) in cyclic order
    ("Ff", 0), ("nFf", 1), ("Sf", 1), ("nPf", 1),
    ("Pf", 0), ("nPf", -1), ("Sf", -1), ("nFf", -1))


def _edge_point(face, side, theta, R):
    """Far point on an edge; theta in (-1, 1) runs from the previous corner
    of the polygon to the next one."""
    W = np.sqrt(R)
    if face == "Ff":
        return R, theta * R
    if face == "Pf":
        return -R, -theta * R
    if face == "Sf":
        return -theta * side * R, side * R
    if face == "nFf":
        u, v = -side * W * np.arctanh(theta), 2 * R
    else:
        u, v = -2 * R, -side * W * np.arctanh(theta)
    return (u + v) / 2, side * (v - u) / 2


def _edge_rate(face, side, t, x, tdot, xdot):
    """d theta/ds divided by the natural size of the base velocity."""
    speed = np.hypot(tdot, xdot)
    if face in ("Ff", "Pf"):
        return (xdot * t - x * tdot) / (t * t) * abs(t) / speed
    if face == "Sf":
        return -(tdot * x - t * xdot) / (x * x) * abs(x) / speed
    # null faces: the null coordinate along the face, oriented like theta
    if face == "nFf":
        wdot = tdot - side * xdot
    else:
        wdot = tdot + side * xdot
    return -side * wdot / speed


def _edge_theta_rate(g, face, side, theta, tau_sign, eps, R):
    t, x = _edge_point(face, side, theta, R)
    y = np.array([t, x, tau_sign, eps * tau_sign])
    H = _raw_field(g, y)
    return float(_edge_rate(face, side, t, x, H[0], H[1]))


def _corner_label_for(face_a, face_b, on_a_fixed, on_b_fixed, sheet):
    null = face_a if face_a.startswith("n") else face_b
    other = face_b if null == face_a else face_a
    time = "+" if null == "nFf" else "-"
    if on_a_fixed or on_b_fixed:
        return ("N", sheet, time)
    return ("C" if other in ("Pf", "Ff") else "K", sheet, time)


def connection_graph(g=None, R=1e8, n_samples=40, integrate=True):
    """Directed edges between radial sets found by following the flow.

    Along every edge of the boundary polygon, in each fiber-infinity piece,
    the flow is integrated from just inside one end to the other end; an
    edge on which the field vanishes identically is part of N.  One interior
    null ray gives the N- -> N+ connection; in d = 1 that ray crosses r = 0,
    so for metrics with an excised core it is traced in Minkowski space.
    """
    from .metrics import minkowski
    g = g or minkowski(1)
    g_interior = g if g.r_min < 0 else minkowski(1)
    if g.d != 1:
        raise ValueError("connection graph is implemented for d = 1")
    edges = set()
    samples = []
    for tau_sign in (-1.0, 1.0):
        sheet = "+" if tau_sign < 0 else "-"
        for eps in (-1.0, 1.0):
            rates = []
            thetas = np.linspace(-0.95, 0.95, n_samples)
            for face, side in POLYGON:
                r = np.array([_edge_theta_rate(g, face, side, th, tau_sign,
                                               eps, R) for th in thetas])
                rates.append(r)
            fixed = [bool(np.all(np.abs(r) < 1e-6)) for r in rates]
            m = len(POLYGON)
            for i, (face, side) in enumerate(POLYGON):
                if fixed[i]:
                    continue
                r = rates[i]
                if not (np.all(r > 0) or np.all(r < 0)):
                    raise RuntimeError(f"fixed point inside edge {face}")
                # theta runs from the previous corner (-1) to the next (+1)
                prev_i, next_i = (i - 1) % m, (i + 1) % m
                lo = _corner_label_for(POLYGON[prev_i][0], face,
                                       fixed[prev_i], False, sheet)
                hi = _corner_label_for(face, POLYGON[next_i][0], False,
                                       fixed[next_i], sheet)
                if integrate:
                    sgn = 1.0 if r.mean() > 0 else -1.0
                    th0 = -0.95 * sgn

                    def rhs(s, th, face=face, side=side):
                        q = float(np.clip(th[0], -0.999, 0.999))
                        return [(1 - q * q) * _edge_theta_rate(
                            g, face, side, q, tau_sign, eps, R)]

                    def end(s, th):
                        return abs(th[0]) - 0.99
                    end.terminal = True
                    sol = solve_ivp(rhs, (0, 1e3), [th0], events=end,
                                    rtol=1e-8, max_step=0.05)
                    landed = sol.y[0, -1]
                    samples.append((face, side, sheet, eps, th0, landed))
                    src, dst = (lo, hi) if landed > 0 else (hi, lo)
                else:
                    src, dst = (lo, hi) if r.mean() > 0 else (hi, lo)
                if src != dst:
                    edges.add((src, dst))
            # interior null ray from past to future null infinity
            t0 = -1e3 if sheet == "+" else 1e3
            start = PhasePoint(geo.SpacetimePoint(t0, (-eps * t0,)),
                               (tau_sign, eps * tau_sign))
            tr = integrate_bichar(g_interior, start, 0.0,
                                  FlowOptions(max_length=400))
            zend = tr.point().z
            t_end = "+" if zend.t > 0 else "-"
            t_start = "+" if t0 > 0 else "-"
            edges.add((("N", sheet, t_start), ("N", sheet, t_end)))
    return sorted(edges)


class CycleError(RuntimeError):
    def __init__(self, cycle):
        super().__init__(f"cycle in connection graph: {cycle}")
        self.cycle = cycle


def _find_cycle(nodes, edges):
    adj = {n: [b for a, b in edges if a == n] for n in nodes}
    color = {n: 0 for n in nodes}
    stack = []

    def dfs(n):
        color[n] = 1
        stack.append(n)
        for m in adj[n]:
            if color[m] == 1:
                return stack[stack.index(m):] + [m]
            if color[m] == 0:
                c = dfs(m)
                if c:
                    return c
        stack.pop()
        color[n] = 2
        return None
    for n in nodes:
        if color[n] == 0:
            c = dfs(n)
            if c:
                return c
    return None


def _label(n):
    return n if isinstance(n, str) else "".join(n)


def propagation_order(radial_sets, connections, direction="with_flow",
                      sheet="+"):
    """Topological order of the sets on one sheet (Kahn's algorithm).

    Ties are broken by time side: the side the flow starts from comes first
    with the flow (past on sheet +, future on sheet -), the other side first
    against it; then by family letter.
    """
    if direction not in ("with_flow", "against_flow"):
        raise ValueError(f"unknown direction {direction!r}")
    nodes = sorted({(r.family, r.sheet, r.time) if isinstance(r, RadialSet)
                    else tuple(r) for r in radial_sets})
    nodes = [n for n in nodes if n[1] == sheet]
    E = [(a, b) for a, b in connections if a in nodes and b in nodes]
    if direction == "against_flow":
        E = [(b, a) for a, b in E]
    first = "-" if sheet == "+" else "+"
    if direction == "against_flow":
        first = "+" if first == "-" else "-"
    indeg = {n: 0 for n in nodes}
    for a, b in E:
        indeg[b] += 1
    order = []
    ready = [n for n in nodes if indeg[n] == 0]
    while ready:
        ready.sort(key=lambda n: (n[2] != first, "NCKAR".index(n[0])))
        n = ready.pop(0)
        order.append(n)
        for a, b in E:
            if a == n:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
    if len(order) != len(nodes):
        raise CycleError(_find_cycle(nodes, E))
    return [_label(n) for n in order]
