"""Order arithmetic for propagation through the radial sets.

An order tuple is a differentiability order ``m`` plus five decay orders,
one per boundary face, listed in the face order Pf, nPf, Sf, nFf, Ff.
The eight affine forms below gate propagation through the saddle radial
sets N, C, K, A over past and future infinity.  Strict inequalities are
reported as slacks: a system holds iff every slack is positive.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

FACES = ("Pf", "nPf", "Sf", "nFf", "Ff")
PF, NPF, SF, NFF, FF = range(5)

# (name, constant, coefficients on (m, s_Pf, s_nPf, s_Sf, s_nFf, s_Ff)) for
# the forms appearing in ``m > form`` (lower) and ``m < form`` (upper) in the
# first case.  The second case swaps the roles.
LOWER_FORMS = (
    ("N_future", 1.0, (0, 0, 0, 0, 1, 0)),
    ("C_future", 1.0, (0, 0, 0, 0, -1, 2)),
    ("A_future", 0.5, (0, 0, 0, -1, 1, 0)),
    ("K_past", 1.0, (0, 0, -1, 2, 0, 0)),
)
UPPER_FORMS = (
    ("N_past", 1.0, (0, 0, 1, 0, 0, 0)),
    ("C_past", 1.0, (0, 2, -1, 0, 0, 0)),
    ("A_past", 0.5, (0, 0, 1, -1, 0, 0)),
    ("K_future", 1.0, (0, 0, 0, 2, -1, 0)),
)
SLACK_NAMES = tuple(n for n, _, _ in LOWER_FORMS + UPPER_FORMS)


@dataclass(frozen=True)
class OrderTuple:
    m: float
    s: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in self.s)
        if len(s) != 5:
            raise ValueError("decay orders need exactly five entries")
        if not all(np.isfinite(s)) or not np.isfinite(self.m):
            raise ValueError("orders must be finite")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "m", float(self.m))

    def vector(self):
        return np.array((self.m,) + self.s)

    def as_dict(self):
        return {"m": self.m, **{f"s_{f}": v for f, v in zip(FACES, self.s)}}


@dataclass(frozen=True)
class SheetCase:
    """Sheet of the characteristic set and sign of Im(lambda).

    Matching signs select the first system, opposite signs the second.
    """

    sheet: str = "plus"
    im_sign: int = 1

    def __post_init__(self):
        if self.sheet not in ("plus", "minus") or self.im_sign not in (1, -1):
            raise ValueError(f"bad sheet case {self!r}")

    @property
    def case(self):
        same = (self.sheet == "plus") == (self.im_sign > 0)
        return "case1" if same else "case2"


def mirror(o):
    """Time reflection: swap Pf<->Ff and nPf<->nFf."""
    s = o.s
    return OrderTuple(o.m, (s[FF], s[NFF], s[SF], s[NPF], s[PF]))


def _form_matrix():
    names, consts, coefs = [], [], []
    for name, c, a in LOWER_FORMS:
        # m - form > 0
        names.append(name)
        consts.append(-c)
        coefs.append(np.array([1.0, *(-np.array(a[1:], float))]))
    for name, c, a in UPPER_FORMS:
        # form - m > 0
        names.append(name)
        consts.append(c)
        coefs.append(np.array([-1.0, *np.array(a[1:], float)]))
    return names, np.array(coefs), np.array(consts)


def slack_system(case="case1"):
    """Return (names, A, b) such that the slacks are A @ (m, s) + b."""
    if isinstance(case, SheetCase):
        case = case.case
    names, A, b = _form_matrix()
    if case == "case1":
        return names, A, b
    if case == "case2":
        return names, -A, -b
    raise ValueError(f"unknown case {case!r}")


def slacks(o, case="case1"):
    names, A, b = slack_system(case)
    vals = A @ o.vector() + b
    return dict(zip(names, (float(v) for v in vals)))


def min_slack(o, case="case1"):
    return min(slacks(o, case).values())


def feasible(o, case="case1"):
    return min_slack(o, case) > 0


def family(N, variant="future_weighted"):
    """The explicit order families; large N gives arbitrarily high orders."""
    N = float(N)
    if variant == "future_weighted":
        return OrderTuple(2 * N, (4 * N, 4 * N, 2 * N, N, N))
    if variant == "past_weighted":
        return OrderTuple(2 * N, (N, N, 2 * N, 4 * N, 4 * N))
    raise ValueError(f"unknown family variant {variant!r}")


@dataclass
class LPResult:
    feasible: bool
    order: OrderTuple = None
    min_slack: float = None
    certificate: dict = None
    status: str = ""

    def as_dict(self):
        out = {"feasible": self.feasible, "status": self.status}
        if self.order is not None:
            out["order"] = self.order.as_dict()
            out["min_slack"] = self.min_slack
        if self.certificate is not None:
            out["certificate"] = self.certificate
        return out


def _stack(cases, extra):
    names, rows, consts = [], [], []
    for case in cases:
        n, A, b = slack_system(case)
        names += [f"{case}:{k}" for k in n]
        rows.append(A)
        consts.append(b)
    for name, a, c in extra:
        names.append(name)
        rows.append(np.atleast_2d(np.asarray(a, float)))
        consts.append(np.atleast_1d(float(c)))
    return names, np.vstack(rows), np.concatenate(consts)


def solve_lp(cases=("case1",), bounds=100.0, extra=()):
    """Maximize the minimum slack over a box.

    ``extra`` holds additional strict constraints ``(name, a, c)`` meaning
    ``a @ (m, s) + c > 0``.  The optimum is positive iff the strict system is
    feasible.  Otherwise the dual gives weights y >= 0, sum(y) = 1, with
    y @ A = 0 and y @ b <= 0, which is a Farkas-type certificate.
    """
    if bounds is None or not np.isfinite(bounds):
        raise ValueError("unbounded: finite box bounds are required")
    if isinstance(cases, str):
        cases = (cases,)
    names, A, b = _stack(cases, extra)
    k, n = A.shape
    # variables x (n) and t; maximize t s.t. A x + b >= t
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, np.ones((k, 1))])
    b_ub = b
    box = [(-bounds, bounds)] * n + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=box, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x, t = res.x[:n], res.x[-1]
    order = OrderTuple(x[0], x[1:])
    if t > 1e-9:
        return LPResult(True, order, float(t), None, "optimal")
    cert = certificate_from_lp(names, A, b, bounds)
    return LPResult(False, order, float(t), cert, "infeasible")


def certificate_from_lp(names, A, b, bounds=None):
    """Find y >= 0, sum y = 1, y @ A = 0 minimizing y @ b."""
    k, n = A.shape
    A_eq = np.vstack([A.T, np.ones((1, k))])
    b_eq = np.concatenate([np.zeros(n), [1.0]])
    res = linprog(b, A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * k,
                  method="highs")
    if res.status != 0:
        raise RuntimeError("no certificate: system may be feasible")
    y = np.where(res.x > 1e-14, res.x, 0.0)
    y = y / y.sum()
    return make_certificate(names, A, b, y)


def make_certificate(names, A, b, y):
    resid = float(np.max(np.abs(y @ A)))
    return {
        "weights": {nm: float(w) for nm, w in zip(names, y) if w > 0},
        "combined_constant": float(y @ b),
        "residual": resid,
    }


def verify_certificate(cert, cases=("case1",), extra=()):
    """Recompute the weighted sum from scratch.

    Returns the residual of the variable part; the certificate is valid when
    the residual is tiny and the constant part is <= 0, because a positive
    combination of positive slacks cannot be identically nonpositive.
    """
    if isinstance(cases, str):
        cases = (cases,)
    names, A, b = _stack(cases, extra)
    w = cert["weights"]
    y = np.array([w.get(nm, 0.0) for nm in names])
    if np.any(y < 0) or y.sum() <= 0:
        return np.inf, np.inf
    return float(np.max(np.abs(y @ A))), float(y @ b)


# --- variable orders -------------------------------------------------------

SET_KINDS = ("N", "C", "K", "A")
# form constant and coefficients for each (kind, time); the first relation
# applies on the matching sheet, the second on the opposite one.
BULLETS = {
    ("N", "-"): ("<", 1.0, {"nPf": 1}),
    ("C", "-"): ("<", 1.0, {"Pf": 2, "nPf": -1}),
    ("K", "-"): (">", 1.0, {"Sf": 2, "nPf": -1}),
    ("A", "-"): ("<", 0.5, {"nPf": 1, "Sf": -1}),
    ("A", "+"): (">", 0.5, {"nFf": 1, "Sf": -1}),
    ("K", "+"): ("<", 1.0, {"Sf": 2, "nFf": -1}),
    ("C", "+"): (">", 1.0, {"Ff": 2, "nFf": -1}),
    ("N", "+"): (">", 1.0, {"nFf": 1}),
}


def radial_set_labels():
    return [(k, sh, t) for k in SET_KINDS for sh in "+-" for t in "-+"]


def constant_assignment(plus, minus):
    """Assign one tuple to every set on sheet + and another on sheet -."""
    return {(k, sh, t): (plus if sh == "+" else minus)
            for k, sh, t in radial_set_labels()}


def check_variable_order(assignment, im_sign=1):
    """Evaluate every bullet inequality at each of the 16 radial sets."""
    missing = [lab for lab in radial_set_labels() if lab not in assignment]
    if missing:
        raise KeyError(f"missing assignment for {missing}")
    out = {}
    for kind, sheet, time in radial_set_labels():
        o = assignment[(kind, sheet, time)]
        rel, c, coefs = BULLETS[(kind, time)]
        form = c + sum(v * o.s[FACES.index(f)] for f, v in coefs.items())
        matching = (sheet == "+") == (im_sign > 0)
        if not matching:
            rel = ">" if rel == "<" else "<"
        slack = o.m - form if rel == ">" else form - o.m
        out[f"{kind}{sheet}{time}"] = {
            "relation": f"m {rel} {form:g}", "slack": slack, "pass": slack > 0}
    return out
