"""Ornstein-Zernike analysis of decay series, step laws and trees.

Everything here is post-processing of estimates: effective masses and
prefactor fits for G(n) ~ psi n^{-p} e^{-xi n}, empirical laws of
irreducible displacements with exponential tail rates, the renewal
generating function H(z) and its level set H = 1, tree-size statistics,
and the exact d=1 transfer-matrix oracle.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

MAX_REL_ERR = 0.3


# ---------------------------------------------------------------------------
# decay series

@dataclass
class DecaySeries:
    """Distances n (strictly increasing), estimates G_n and standard errors.

    ``cov`` optionally holds the covariance of log G_n (as produced by a
    ratio ladder, where errors accumulate); fits then use it in place of
    independent errors se/G.
    """

    direction: tuple
    n: np.ndarray
    G: np.ndarray
    se: np.ndarray = None
    cov: np.ndarray = None

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=float)
        self.G = np.asarray(self.G, dtype=float)
        self.se = np.zeros_like(self.G) if self.se is None else np.asarray(self.se, dtype=float)
        if not (self.n.shape == self.G.shape == self.se.shape):
            raise DomainError("n, G and se must have equal lengths")
        if np.any(np.diff(self.n) <= 0):
            raise DomainError("distances must be strictly increasing")
        if self.cov is not None:
            self.cov = np.asarray(self.cov, dtype=float)
            if self.cov.shape != (len(self.n), len(self.n)):
                raise DomainError("cov must be square over the points")

    @classmethod
    def from_ratios(cls, n0, G0, se0, ratios, direction=(1,)) -> "DecaySeries":
        """Series G_{n0+k} = G0 * r_1 ... r_k from independent ratio
        estimates ``ratios`` = [(r_k, se_k)], with the log covariance of the
        running products."""
        r = np.array([x[0] for x in ratios], dtype=float)
        sr = np.array([x[1] for x in ratios], dtype=float)
        if np.any(r <= 0):
            raise DomainError("ratios must be positive")
        logG = math.log(G0) + np.concatenate([[0.0], np.cumsum(np.log(r))])
        v = np.concatenate([[(se0 / G0) ** 2], (sr / r) ** 2])
        cv = np.cumsum(v)
        cov = np.minimum.outer(cv, cv)
        G = np.exp(logG)
        return cls(tuple(direction), n0 + np.arange(len(G)), G, G * np.sqrt(cv), cov)

    def _take(self, k) -> "DecaySeries":
        cov = None if self.cov is None else self.cov[np.ix_(k, k)]
        return DecaySeries(self.direction, self.n[k], self.G[k], self.se[k], cov)

    def log_cov(self) -> np.ndarray:
        """Covariance of log G_n (diagonal (se/G)^2 unless ``cov`` is set)."""
        if self.cov is not None:
            return self.cov
        return np.diag((self.se / self.G) ** 2)

    @classmethod
    def from_records(cls, records, direction=None) -> "DecaySeries":
        """Series from ``u|v`` records along one lattice direction."""
        import ast
        rows = []
        for r in records:
            a, b = (np.atleast_1d(np.asarray(ast.literal_eval(s))) for s in r.argument.split("|"))
            disp = b - a
            if direction is None:
                direction = tuple(int(c) for c in disp // max(math.gcd(*map(int, np.abs(disp))), 1))
            dvec = np.asarray(direction)
            k = int(round(float(disp @ dvec) / float(dvec @ dvec)))
            if k > 0 and np.array_equal(k * dvec, disp):
                rows.append((k, r.estimate, r.stdError))
        rows.sort()
        return cls(tuple(direction), [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])

    def retained(self, max_rel=MAX_REL_ERR) -> "DecaySeries":
        """Points with G > 0 and relative error at most ``max_rel``."""
        keep = (self.G > 0) & np.isfinite(self.G)
        with np.errstate(divide="ignore", invalid="ignore"):
            keep &= ~(self.se / self.G > max_rel)
        return self._take(np.nonzero(keep)[0])

    def window(self, lo, hi) -> "DecaySeries":
        return self._take(np.nonzero((self.n >= lo) & (self.n <= hi))[0])

    def __len__(self):
        return len(self.n)


def _mass_operator(n):
    """D with (D log G)_i = -(log G_{i+1} - log G_i)/(n_{i+1} - n_i)."""
    k = len(n) - 1
    D = np.zeros((k, k + 1))
    dn = np.diff(n)
    D[np.arange(k), np.arange(k)] = 1.0 / dn
    D[np.arange(k), np.arange(1, k + 1)] = -1.0 / dn
    return D


def effective_masses(ds: DecaySeries):
    """(left distances, right distances, m, se(m)) with
    m = -log(G_{n'}/G_n) / (n' - n) over consecutive retained points."""
    n1, n2, m, C = _masses_cov(ds)
    return n1, n2, m, np.sqrt(np.diag(C))


def _masses_cov(ds):
    D = _mass_operator(ds.n)
    m = D @ np.log(ds.G)
    return ds.n[:-1], ds.n[1:], m, D @ ds.log_cov() @ D.T


def _wls(X, y, V):
    """Generalised least squares with covariance ``V`` of y (a vector is
    read as standard errors); unit weights when all errors vanish.

    Returns (coef, cov, residuals, chi2, dof).  The covariance is scaled by
    chi2/dof when that exceeds one (errors underestimated).
    """
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = np.diag(V ** 2)
    d = np.diag(V)
    if np.all(d == 0):
        V = np.eye(len(y))
        scale_always = True
    else:
        if np.any(d <= 0):
            raise DomainError("mixed zero and positive errors")
        scale_always = False
    L = np.linalg.cholesky(V)
    A = np.linalg.solve(L, X)
    b = np.linalg.solve(L, y)
    if np.linalg.matrix_rank(A) < X.shape[1] or np.linalg.cond(A) > 1e12:
        raise DomainError("degenerate design matrix")
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    res = y - X @ coef
    wr = b - A @ coef
    chi2 = float(wr @ wr)
    dof = len(y) - X.shape[1]
    cov = np.linalg.inv(A.T @ A)
    if dof > 0 and (scale_always or chi2 / dof > 1):
        cov = cov * (chi2 / dof)
    return coef, cov, res, chi2, dof


def inverse_correlation_length(ds: DecaySeries, max_rel=MAX_REL_ERR):
    """(xi, stdError) from effective masses extrapolated in n.

    Fits m = xi + a * log(n'/n)/(n' - n), the exact mass of
    psi n^{-a} e^{-xi n} (to leading order a/n).  Raises DomainError when
    the retained masses are noise dominated.
    """
    r = ds.retained(max_rel) if np.any(ds.se > 0) else ds.retained(np.inf)
    if len(r) < 3:
        raise DomainError(f"need at least 3 usable points, have {len(r)}")
    n1, n2, m, C = _masses_cov(r)
    sm = np.sqrt(np.diag(C))
    if np.any(sm > 0) and np.mean(sm > np.abs(m)) > 0.5:
        raise DomainError(f"effective masses are noise dominated: m={m.round(4).tolist()}, se={sm.round(4).tolist()}")
    X = np.stack([np.ones_like(m), np.log(n2 / n1) / (n2 - n1)], axis=1)
    coef, cov, *_ = _wls(X, m, C)
    return float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0)))


@dataclass
class OZFit:
    """G_n ~ psi n^{-p} e^{-xi n}: fitted (p, logPsi), with xi either fixed
    or fitted jointly; ``cov`` is over (p, logPsi[, xi])."""

    xi: float
    p: float
    logPsi: float
    residuals: np.ndarray
    cov: np.ndarray
    chi2: float
    dof: int
    joint: bool

    @property
    def p_err(self) -> float:
        return float(math.sqrt(self.cov[0, 0]))

    @property
    def xi_err(self) -> float:
        return float(math.sqrt(self.cov[2, 2])) if self.joint else 0.0

    def p_interval(self, z=1.96):
        return self.p - z * self.p_err, self.p + z * self.p_err

    def to_dict(self) -> dict:
        return {"xi": self.xi, "xiErr": self.xi_err, "p": self.p, "pErr": self.p_err,
                "logPsi": self.logPsi, "cov": self.cov.tolist(), "chi2": self.chi2, "dof": self.dof,
                "jointXi": self.joint, "residuals": list(map(float, self.residuals))}


def fit_oz_prefactor(ds: DecaySeries, xi=None, max_rel=MAX_REL_ERR) -> OZFit:
    """Weighted least squares of log G_n + xi n = logPsi - p log n.

    With ``xi`` None the rate is fitted jointly (three parameters).
    Points with relative error above ``max_rel`` are excluded; a series
    covariance (ratio ladders) is used in full.
    """
    r = ds.retained(max_rel) if np.any(ds.se > 0) else ds.retained(np.inf)
    if len(r) < 4:
        raise DomainError(f"fit needs at least 4 points, have {len(r)}")
    if np.any(r.n <= 0):
        raise DomainError("distances must be positive")
    y = np.log(r.G)
    cols = [-np.log(r.n), np.ones_like(r.n)]
    if xi is None:
        cols.append(-r.n)
    else:
        y = y + float(xi) * r.n
    coef, cov, res, chi2, dof = _wls(np.stack(cols, axis=1), y, r.log_cov())
    xi_f = float(coef[2]) if xi is None else float(xi)
    return OZFit(xi_f, float(coef[0]), float(coef[1]), res, cov, chi2, dof, xi is None)


def masses_decreasing(ds: DecaySeries, z=0.0, max_rel=MAX_REL_ERR) -> bool:
    """Effective masses non-increasing in n, allowing z combined errors."""
    r = ds.retained(max_rel) if np.any(ds.se > 0) else ds.retained(np.inf)
    _, _, m, sm = effective_masses(r)
    return bool(np.all(np.diff(m) <= z * np.hypot(sm[1:], sm[:-1])))


# ---------------------------------------------------------------------------
# step laws

@dataclass
class TailRate:
    """Exponential rate nu of P(|D| >= l) with its standard error."""

    rate: float
    stdError: float
    n_levels: int
    subexponential: bool = False

    def lower(self, z=1.645) -> float:
        return self.rate - z * self.stdError


def tail_rate(lengths, weights=None) -> TailRate:
    """Fit log S(l) = c - nu l over integer l >= 1 with S(l) > 0.

    S(l) are (weighted) counts of lengths >= l; the log-count variance is
    taken as 1/S(l).  Scaling all weights leaves nu unchanged.  With fewer
    than two occupied levels the tail is empty and nu = +inf.
    """
    x = np.asarray(lengths, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if len(x) == 0 or w.sum() <= 0:
        raise DomainError("empty sample")
    L = int(math.floor(x.max() + 1e-9))
    levels = np.arange(1, L + 1)
    S = np.array([w[x >= l - 1e-9].sum() for l in levels])
    ok = S > 0
    levels, S = levels[ok], S[ok]
    if len(levels) < 2:
        return TailRate(math.inf, 0.0, len(levels))
    X = np.stack([np.ones(len(levels)), -levels.astype(float)], axis=1)
    unit = w.sum() / len(x)
    sig = np.sqrt(unit / S)
    Aw = X / sig[:, None]
    coef = np.linalg.lstsq(Aw, np.log(S) / sig, rcond=None)[0]
    cov = np.linalg.inv(Aw.T @ Aw)
    res = np.log(S) - X @ coef
    dof = len(S) - 2
    if dof > 0:
        cov = cov * max(1.0, float(np.sum(res ** 2 / sig ** 2)) / dof)
    sub = False
    if len(levels) >= 6:
        h = len(levels) // 2
        a = np.polyfit(levels[:h], np.log(S[:h]), 1)[0]
        b = np.polyfit(levels[h:], np.log(S[h:]), 1)[0]
        sub = bool(-b < 0.5 * -a)
    return TailRate(float(coef[1]), float(math.sqrt(cov[1, 1])), len(levels), sub)


@dataclass
class StepLaw:
    """Empirical law of bulk displacements and end-piece sizes."""

    histogram: dict          # displacement tuple -> count
    total: int
    left_tail: dict          # |D(gamma_L)| rounded down -> count
    right_tail: dict
    n_samples: int
    n_degenerate: int
    cone_density: list = field(default_factory=list)   # per-sample cone-points per unit xi

    def probabilities(self):
        keys = sorted(self.histogram)
        X = np.array(keys, dtype=float).reshape(len(keys), -1)
        p = np.array([self.histogram[k] for k in keys], dtype=float) / max(self.total, 1)
        return X, p

    def to_dict(self) -> dict:
        return {"histogram": [[list(k), v] for k, v in sorted(self.histogram.items())],
                "total": self.total, "leftTail": sorted(self.left_tail.items()),
                "rightTail": sorted(self.right_tail.items()), "nSamples": self.n_samples,
                "nDegenerate": self.n_degenerate}


def step_statistics(decompositions, xi_of=None, min_samples: int = 100):
    """StepLaw and tail rates {bulk, left, right} from decompositions.

    ``xi_of`` (a NormModel) gives the per-sample cone-point density
    #cone-points / xi(v - u).  Lengths are Euclidean norms of
    displacements.
    """
    hist = Counter()
    left, right = [], []
    bulk_len = []
    dens = []
    n = deg = 0
    for dec in decompositions:
        n += 1
        if dec.degenerate:
            deg += 1
        else:
            for p in dec.bulk:
                hist[p.displacement] += 1
                bulk_len.append(float(np.linalg.norm(p.displacement)))
            left.append(float(np.linalg.norm(dec.left.displacement)))
            right.append(float(np.linalg.norm(dec.right.displacement)))
        if xi_of is not None:
            span = float(xi_of(np.subtract(dec.v, dec.u)))
            if span > 0:
                dens.append(len(dec.cone_points) / span)
    if n < min_samples:
        raise DomainError(f"need at least {min_samples} decomposed samples, have {n}")
    if deg == n:
        raise DomainError("all decompositions are degenerate")
    sl = StepLaw(dict(hist), int(sum(hist.values())),
                 dict(Counter(int(math.floor(x)) for x in left)),
                 dict(Counter(int(math.floor(x)) for x in right)), n, deg, dens)
    rates = {"bulk": tail_rate(bulk_len) if bulk_len else TailRate(math.inf, 0.0, 0),
             "left": tail_rate(left), "right": tail_rate(right)}
    return sl, rates


def _from_pieces(displacements, n_samples=None) -> StepLaw:
    """StepLaw from raw bulk displacements (synthetic inputs)."""
    h = Counter(tuple(int(c) for c in np.atleast_1d(d)) for d in displacements)
    return StepLaw(dict(h), int(sum(h.values())), {}, {}, n_samples or 0, 0)


step_law_from_displacements = _from_pieces


# ---------------------------------------------------------------------------
# renewal generating function

def renewal_generating(sl: StepLaw, z, mass: float = 1.0) -> float:
    """H(z) = mass * sum_x p(x) e^{(x, z)}; ``mass`` < 1 makes the step law
    defective (a killed renewal)."""
    X, p = sl.probabilities()
    z = np.atleast_1d(np.asarray(z, dtype=float))
    e = X @ z
    top = e.max()
    val = mass * float(np.sum(p * np.exp(e - top))) * math.exp(top)
    if not np.isfinite(val):
        raise DomainError("H diverges")
    return val


@dataclass
class WulffPoint:
    z: np.ndarray
    r: float
    status: str          # "root", "origin" or "none"


def wulff_solve(sl: StepLaw, u, mass: float = 1.0, r_max: float = None, tol: float = 1e-8) -> WulffPoint:
    """Point r u with H(r u) = 1 on the ray of direction u.

    H is log-convex along the ray, so H - 1 has at most one root with
    r > 0 besides r = 0 (when H(0) = 1).  If H(0) = 1 and H increases along
    u the level set meets the ray only at the origin.  ``r_max`` bounds the
    admissible range (default: up to 50 / max|x|); H < 1 throughout gives
    status "none".
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    X, p = sl.probabilities()
    if r_max is None:
        r_max = 50.0 / max(float(np.max(np.abs(X))), 1.0)
    f = lambda r: renewal_generating(sl, r * u, mass) - 1.0
    f0 = f(0.0)
    slope = mass * float(np.sum(p * (X @ u)))
    if abs(f0) <= tol:
        if slope >= 0:
            return WulffPoint(np.zeros_like(u), 0.0, "origin")
        # H dips below 1 then returns; bracket the far root
        lo = 1e-12
        while f(lo) >= 0 and lo < r_max:
            lo *= 2
        if f(lo) >= 0:
            return WulffPoint(np.zeros_like(u), 0.0, "origin")
    elif f0 > 0:
        return WulffPoint(np.zeros_like(u), 0.0, "none")
    else:
        lo = 0.0
    hi = max(lo, 1e-3) * 2
    while f(hi) < 0:
        lo = hi
        hi *= 2
        if hi > r_max:
            if f(r_max) < 0:
                return WulffPoint(r_max * u, r_max, "none")
            hi = r_max
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo < 1e-15:
            break
        if fm < 0:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    return WulffPoint(r * u, r, "root")


# ---------------------------------------------------------------------------
# tree statistics

@dataclass
class TreeStats:
    histogram: dict           # (|t|, |b|) -> count
    n: int
    trunk_rate: float
    branch_rate: float
    cov: np.ndarray
    cone_points: list
    note: str = ("frequencies are conditional on 0 -/- g under the (empty, {0,x}) double current; "
                 "they differ from the tree weights by the factor <sigma_0 sigma_x>")


def _rate_fit(cells):
    keys = sorted(cells)
    T = np.array([k[0] for k in keys], dtype=float)
    B = np.array([k[1] for k in keys], dtype=float)
    c = np.array([cells[k] for k in keys], dtype=float)
    cols = [np.ones_like(T)]
    names = []
    if len(set(T)) > 1:
        cols.append(-T)
        names.append("t")
    if len(set(B)) > 1:
        cols.append(-B)
        names.append("b")
    X = np.stack(cols, axis=1)
    sig = 1.0 / np.sqrt(c / c.sum())
    Aw = X / sig[:, None]
    coef = np.linalg.lstsq(Aw, np.log(c) / sig, rcond=None)[0]
    cov = np.linalg.pinv(Aw.T @ Aw)
    out = {"t": math.nan, "b": math.nan}
    for k, nm in enumerate(names):
        out[nm] = float(coef[k + 1])
    return out["t"], out["b"], cov


def tree_statistics(skeletons, x=None, weights=None, cs=None, positions=None, min_samples: int = 100) -> TreeStats:
    """Joint histogram of (|t|, |b|) with exponential rate fits.

    ``weights`` may give per-skeleton weights (synthetic frequencies);
    with a cone system and vertex ``positions`` the cone-points of each
    skeleton's vertex set are counted.  Frequencies are relative to the
    sampled law (double current with sources {0, x}, conditioned on 0 not
    reaching the ghost); absolute tree weights carry an extra factor
    <sigma_0 sigma_x>.
    """
    from .geometry import ClusterGeom, cone_points
    skels = list(skeletons)
    if len(skels) < min_samples and weights is None:
        raise DomainError(f"need at least {min_samples} skeletons, have {len(skels)}")
    w = np.ones(len(skels)) if weights is None else np.asarray(weights, dtype=float)
    hist = Counter()
    cps = []
    for s, wi in zip(skels, w):
        key = (s.trunk_length, s.n_branches) if hasattr(s, "trunk_length") else tuple(s)
        hist[key] += wi
        if cs is not None and positions is not None:
            pts = positions[s.nodes]
            segs = [(positions[s.nodes[k]], positions[s.nodes[p]]) for k, p in enumerate(s.parent) if p >= 0]
            cps.append(len(cone_points(ClusterGeom.build(pts, segs), cs)))
    rt, rb, cov = _rate_fit(dict(hist))
    return TreeStats(dict(hist), len(skels), rt, rb, cov, cps)


# ---------------------------------------------------------------------------
# d = 1 oracle

@dataclass
class OracleRow:
    n: int
    two_point: float
    truncated: float
    xi: float


def transfer_matrix_oracle(J: float, h: float, n):
    """Infinite-chain <sigma_0 sigma_n>, <sigma_0; sigma_n> and xi.

    T[s, s'] = exp(J s s' + h (s + s') / 2) over s in (+1, -1); with
    eigenpairs (lambda_k, v_k), lambda_1 > lambda_2, the truncated function
    is (v_1' S v_2)^2 (lambda_2/lambda_1)^n and xi = log(lambda_1/lambda_2).
    """
    if J < 0 or h <= 0:
        raise DomainError("need J >= 0 and h > 0")
    s = np.array([1.0, -1.0])
    T = np.exp(J * np.outer(s, s) + h * (s[:, None] + s[None, :]) / 2)
    lam, V = np.linalg.eigh(T)
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], V[:, order]
    S = np.diag(s)
    m = float(V[:, 0] @ S @ V[:, 0])
    c = float(V[:, 0] @ S @ V[:, 1])
    ratio = max(lam[1], 0.0) / lam[0]
    xi = math.inf if ratio == 0 else -math.log(ratio)
    ns = np.atleast_1d(np.asarray(n))
    if np.any(ns < 1):
        raise DomainError("n must be >= 1")
    rows = []
    for k in ns:
        tr = c * c * ratio ** int(k)
        rows.append(OracleRow(int(k), m * m + tr, tr, xi))
    return rows if np.ndim(n) else rows[0]
