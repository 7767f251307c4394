"""
Differential geometry of immersions F: S^2 -> R^3.

Fundamental forms are assembled pointwise from exact spectral derivatives of
the (band-limited) component fields in grid coordinates (theta, phi); all
reported scalars (H, K, |A|^2, area element) are parametrization-invariant.
Chart-coordinate quantities (conformal factor, conformality and
mean-curvature residuals, branch fits) use the stereographic charts.

Sign conventions: N follows F_theta x F_phi and is flipped globally (together
with A and H) if H < 0 at the node maximizing |F|^2, so the unit sphere has
H = 2, K = 1 with the outward normal.  The second fundamental form is
A_ab = -<d2F/dx^a dx^b, N>.

The mean-curvature equation is encoded chart-free as

    r_mc = (1/4) * (Lap_round F + H * (F_theta x F_phi) / sin(theta)),

whose chart expression is mu^{-2} r_mc = F_{zbar z} + (i/2) H (Fbar_z x F_z);
the calibration constant relative to the conventional literature form
F_{zbar z} = i H (Fbar_z x F_z) is therefore MC_CONVENTION_CONSTANT = -1/2,
fixed by requiring a zero residual on the unit sphere with H = 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import ConfigurationError, ConformalityError, DataError
from .grid import (
    FOUR_PI,
    NORTH,
    SOUTH,
    ChartPoint,
    HarmonicField,
    SphericalGrid,
    analyze,
    chart_area_factors,
    chart_gradient,
    integrate,
    per_node_home_values,
    synthesize_jet,
)

MC_CONVENTION_CONSTANT = -0.5
SINGULAR_CROSS_THRESHOLD = 1e-12
IMMERSION_EPSILON = 1e-8


class ImmersionField:
    """An immersion given by three harmonic component fields on a grid.

    Chart gradients and derivative jets are computed lazily and cached; the
    object is immutable.
    """

    def __init__(self, field: HarmonicField, grid: SphericalGrid):
        if field.n_components != 3:
            raise ConfigurationError("an immersion needs exactly 3 components")
        if field.degree > grid.L:
            raise ConfigurationError(
                f"field degree {field.degree} exceeds grid degree {grid.L}"
            )
        self.field = field
        self.grid = grid
        self._jets: dict = {}
        self._fz: dict = {}

    @classmethod
    def from_values(cls, values: np.ndarray, grid: SphericalGrid):
        return cls(analyze(values, grid), grid)

    def jet(self, *keys):
        missing = tuple(k for k in keys if k not in self._jets)
        if missing:
            self._jets.update(synthesize_jet(self.field, self.grid, which=missing))
        return {k: self._jets[k] for k in keys}

    def chart_gradient(self, chart: str) -> np.ndarray:
        """Cached F_z per chart, shape (3, n_theta, n_phi); NaN when masked."""
        if chart not in self._fz:
            self._fz[chart] = chart_gradient(self.field, self.grid, chart)
        return self._fz[chart]

    def chart_gradient_home(self) -> np.ndarray:
        return per_node_home_values(
            self.chart_gradient(NORTH), self.chart_gradient(SOUTH), self.grid
        )

    @property
    def is_regular(self) -> bool:
        """Immersion flag: min over nodes of |F_z|^2 above IMMERSION_EPSILON."""
        fz = self.chart_gradient_home()
        fz2 = np.einsum("ctp,ctp->tp", fz, np.conj(fz)).real
        return bool(np.nanmin(fz2) > IMMERSION_EPSILON)


@dataclass(frozen=True)
class FundamentalForms:
    """Per-node first/second fundamental forms and derived curvatures.

    gamma and second_form hold the (theta, phi) grid-coordinate components
    [[g_tt, g_tp], [g_tp, g_pp]]; conformal_factor is lambda^2 = 2 F_z.Fbar_z
    in each node's home stereographic chart.  area_weight is the ratio of the
    induced to the round area element, sqrt(det gamma)/sin(theta).  Singular
    nodes (|F_theta x F_phi| below threshold) carry NaN and are flagged.
    """

    gamma: np.ndarray          # (2, 2, n_theta, n_phi)
    normal: np.ndarray         # (3, n_theta, n_phi)
    second_form: np.ndarray    # (2, 2, n_theta, n_phi)
    mean_curvature: np.ndarray
    gauss_curvature: np.ndarray
    norm2_A: np.ndarray
    conformal_factor: np.ndarray
    area_weight: np.ndarray
    singular: np.ndarray       # boolean mask of flagged nodes
    orientation_flipped: bool


def pointwise_forms(Fu, Fv, Fuu, Fuv, Fvv, singular_threshold=SINGULAR_CROSS_THRESHOLD):
    """Fundamental-form algebra shared by sphere grids and planar domains.

    All inputs have shape (3, ...); returns a dict of pointwise arrays.
    A_ab = -<F_ab, N> with N = (F_u x F_v)/|F_u x F_v|.
    """
    cross = np.cross(Fu, Fv, axis=0)
    W = np.sqrt(np.einsum("c...,c...->...", cross, cross))
    singular = W <= singular_threshold
    Wsafe = np.where(singular, 1.0, W)
    N = cross / Wsafe

    g11 = np.einsum("c...,c...->...", Fu, Fu)
    g12 = np.einsum("c...,c...->...", Fu, Fv)
    g22 = np.einsum("c...,c...->...", Fv, Fv)
    a11 = -np.einsum("c...,c...->...", Fuu, N)
    a12 = -np.einsum("c...,c...->...", Fuv, N)
    a22 = -np.einsum("c...,c...->...", Fvv, N)

    det_g = g11 * g22 - g12 * g12
    det_g_safe = np.where(singular, 1.0, det_g)
    H = (g22 * a11 - 2 * g12 * a12 + g11 * a22) / det_g_safe
    K = (a11 * a22 - a12 * a12) / det_g_safe
    # |A|^2 = tr((g^-1 A)^2) = H^2 - 2K
    A2 = H * H - 2 * K

    for arr in (H, K, A2):
        arr[singular] = np.nan
    return {
        "g11": g11, "g12": g12, "g22": g22,
        "a11": a11, "a12": a12, "a22": a22,
        "normal": N, "cross_norm": W, "det_g": det_g,
        "H": H, "K": K, "A2": A2, "singular": singular,
    }


def fundamental_forms(F: ImmersionField, grid: SphericalGrid = None) -> FundamentalForms:
    """First and second fundamental forms, curvatures and area weight of F."""
    grid = grid or F.grid
    jet = F.jet("ft", "fp", "ftt", "ftp", "fpp")
    p = pointwise_forms(jet["ft"], jet["fp"], jet["ftt"], jet["ftp"], jet["fpp"])

    # global orientation fix: outward normal where |F|^2 is maximal
    vals = F.jet("f")["f"]
    r2 = np.einsum("ctp,ctp->tp", vals, vals)
    flat = np.argmax(np.where(p["singular"], -np.inf, r2))
    i0, j0 = np.unravel_index(flat, r2.shape)
    flipped = bool(p["H"][i0, j0] < 0)
    sgn = -1.0 if flipped else 1.0

    gamma = np.array([[p["g11"], p["g12"]], [p["g12"], p["g22"]]])
    A = sgn * np.array([[p["a11"], p["a12"]], [p["a12"], p["a22"]]])

    fz = F.chart_gradient_home()
    lam2 = 2.0 * np.einsum("ctp,ctp->tp", fz, np.conj(fz)).real

    area_weight = p["cross_norm"] / grid.sin_theta[:, None]
    return FundamentalForms(
        gamma=gamma,
        normal=sgn * p["normal"],
        second_form=A,
        mean_curvature=sgn * p["H"],
        gauss_curvature=p["K"],
        norm2_A=p["A2"],
        conformal_factor=lam2,
        area_weight=area_weight,
        singular=p["singular"],
        orientation_flipped=flipped,
    )


# ----------------------------------------------------------------------
# residuals of the structure equations
# ----------------------------------------------------------------------

def conformality_residual(F: ImmersionField, grid=None, chart="home") -> np.ndarray:
    """F_z . F_z per node (zero iff the parametrization is conformal)."""
    grid = grid or F.grid
    if chart == "home":
        fz = F.chart_gradient_home()
    else:
        fz = F.chart_gradient(chart)
    return np.einsum("ctp,ctp->tp", fz, fz)


def mc_residual(F: ImmersionField, H_target: np.ndarray, grid=None,
                chart="home", conformality_tol=1e-6) -> np.ndarray:
    """Calibrated mean-curvature residual F_{zbar z} + (i/2) H (Fbar_z x F_z).

    Requires a conformal parametrization; raises ConformalityError carrying
    the offending sup-norm otherwise.  Returns a complex (3, n_theta, n_phi)
    array in the requested chart ("home" mixes the two charts per node); the
    imaginary part is zero up to rounding.
    """
    grid = grid or F.grid
    conf = conformality_residual(F, grid, chart="home")
    sup = float(np.nanmax(np.abs(conf)))
    if sup > conformality_tol:
        raise ConformalityError(sup)
    H_target = np.asarray(H_target, dtype=float)

    r_global = mc_residual_global(F, H_target, grid)
    if chart == "home":
        factor = per_node_home_values(
            chart_area_factors(grid, NORTH)[:, None],
            chart_area_factors(grid, SOUTH)[:, None],
            grid,
        )
    else:
        factor = chart_area_factors(grid, chart)[:, None]
    return factor[None, :, :] * r_global.astype(complex)


def mc_residual_global(F: ImmersionField, H_target: np.ndarray, grid=None) -> np.ndarray:
    """Chart-free residual (1/4)(Lap_round F + H (F_theta x F_phi)/sin theta).

    Equals mu^2 times the chart residual in either stereographic chart;
    real-valued; vanishes iff F is a conformal immersion of mean curvature
    H_target in the chart orientation.
    """
    grid = grid or F.grid
    jet = F.jet("ft", "fp", "lap")
    cross = np.cross(jet["ft"], jet["fp"], axis=0)
    wn = cross / grid.sin_theta[None, :, None]
    return 0.25 * (jet["lap"] + H_target[None, :, :] * wn)


def gauss_identity_residual(F: ImmersionField, grid=None) -> float:
    """int |A|^2 dV - int H^2 dV + 8 pi (zero for every immersed sphere)."""
    grid = grid or F.grid
    forms = fundamental_forms(F, grid)
    intA2 = integrate(np.nan_to_num(forms.norm2_A), grid, forms.area_weight)
    intH2 = integrate(np.nan_to_num(forms.mean_curvature**2), grid, forms.area_weight)
    return intA2 - intH2 + 2.0 * FOUR_PI


def codazzi_residual(F: ImmersionField, grid=None) -> float:
    """L2 norm of the 1-form div(A - H gamma) in the induced metric.

    Analytically zero for any immersion into flat space; the computed value
    measures rounding plus (for non-band-limited F) truncation.  All
    derivatives up to third order are evaluated pointwise from exact
    spectral tables of F, so no tensor component is re-expanded.
    """
    grid = grid or F.grid
    jet = F.jet(
        "ft", "fp", "ftt", "ftp", "fpp", "fttt", "fttp", "ftpp", "fppp"
    )
    d1 = [jet["ft"], jet["fp"]]
    d2 = [[jet["ftt"], jet["ftp"]], [jet["ftp"], jet["fpp"]]]
    d3 = {
        (0, 0, 0): jet["fttt"], (0, 0, 1): jet["fttp"],
        (0, 1, 1): jet["ftpp"], (1, 1, 1): jet["fppp"],
    }

    def third(a, b, c):
        return d3[tuple(sorted((a, b, c)))]

    dot = lambda x, y: np.einsum("ctp,ctp->tp", x, y)

    g = [[dot(d1[a], d1[b]) for b in (0, 1)] for a in (0, 1)]
    dg = [[[dot(d2[c][a], d1[b]) + dot(d1[a], d2[c][b]) for b in (0, 1)]
           for a in (0, 1)] for c in (0, 1)]
    det = g[0][0] * g[1][1] - g[0][1] ** 2
    ginv = [[g[1][1] / det, -g[0][1] / det], [-g[0][1] / det, g[0][0] / det]]

    n = np.cross(d1[0], d1[1], axis=0)
    W = np.sqrt(dot(n, n))
    N = n / W
    dn = [np.cross(d2[c][0], d1[1], axis=0) + np.cross(d1[0], d2[c][1], axis=0)
          for c in (0, 1)]
    dN = [(dn[c] - N * dot(N, dn[c])[None]) / W for c in (0, 1)]

    A = [[-dot(d2[a][b], N) for b in (0, 1)] for a in (0, 1)]
    dA = [[[-dot(third(c, a, b), N) - dot(d2[a][b], dN[c]) for b in (0, 1)]
           for a in (0, 1)] for c in (0, 1)]

    dginv = [[[-sum(ginv[a][e] * dg[c][e][f] * ginv[f][b]
                    for e in (0, 1) for f in (0, 1))
               for b in (0, 1)] for a in (0, 1)] for c in (0, 1)]

    H = sum(ginv[a][b] * A[a][b] for a in (0, 1) for b in (0, 1))
    dH = [sum(dginv[c][a][b] * A[a][b] + ginv[a][b] * dA[c][a][b]
              for a in (0, 1) for b in (0, 1)) for c in (0, 1)]

    Gamma = [[[0.5 * sum(ginv[d][c] * (dg[a][c][b] + dg[b][c][a] - dg[c][a][b])
                         for c in (0, 1))
               for b in (0, 1)] for a in (0, 1)] for d in (0, 1)]

    T = [[A[a][b] - H * g[a][b] for b in (0, 1)] for a in (0, 1)]
    dT = [[[dA[c][a][b] - dH[c] * g[a][b] - H * dg[c][a][b] for b in (0, 1)]
           for a in (0, 1)] for c in (0, 1)]

    div = []
    for b in (0, 1):
        acc = 0.0
        for a in (0, 1):
            for c in (0, 1):
                cov = dT[a][c][b]
                cov = cov - sum(Gamma[d][a][c] * T[d][b] for d in (0, 1))
                cov = cov - sum(Gamma[d][a][b] * T[c][d] for d in (0, 1))
                acc = acc + ginv[a][c] * cov
        div.append(acc)

    norm2 = sum(ginv[a][b] * div[a] * div[b] for a in (0, 1) for b in (0, 1))
    area_weight = W / grid.sin_theta[:, None]
    return float(np.sqrt(integrate(norm2, grid, area_weight)))


def obstruction_vector(H_values: np.ndarray, area_weight: np.ndarray,
                       grid: SphericalGrid) -> np.ndarray:
    """v_j = int <grad x_j, grad H> dV for the three conformal gradients.

    The gradients and pairing use the round metric (the integrand is the
    metric-independent pairing V(H) = dH(V)); the volume element is
    area_weight times the round element.  Vanishes for the (H, dV) data of
    any immersion.
    """
    H_values = np.asarray(H_values, dtype=float)
    if not np.all(np.isfinite(H_values)):
        raise DataError("obstruction_vector: non-finite H values")
    hf = analyze(H_values, grid)
    jet = synthesize_jet(hf, grid, which=("ft", "fp"))
    Ht, Hp = jet["ft"][0], jet["fp"][0]

    theta, phi = grid.theta[:, None], grid.phi[None, :]
    st, ct = grid.sin_theta[:, None], grid.cos_theta[:, None]
    # d(x_j)/dtheta and d(x_j)/dphi for x = (sin t cos p, sin t sin p, cos t)
    dx_t = [ct * np.cos(phi), ct * np.sin(phi), -st * np.ones_like(phi)]
    dx_p = [-st * np.sin(phi), st * np.cos(phi), np.zeros_like(st * phi)]
    out = np.empty(3)
    for j in range(3):
        pairing = dx_t[j] * Ht + dx_p[j] * Hp / st**2
        out[j] = integrate(pairing, grid, area_weight)
    return out


# ----------------------------------------------------------------------
# branch points
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BranchPoint:
    """A resolved branch point F_z ~ (z - q)^k G with G.G = 0, G(q) != 0."""

    location: ChartPoint
    order: int
    leading_coefficient: np.ndarray  # complex 3-vector G(q)
    fit_residual: float

    @property
    def null_defect(self) -> float:
        """|G.G| / |G|^2, small for a genuine conformal branch point."""
        G = self.leading_coefficient
        return float(abs(G @ G) / (np.linalg.norm(G) ** 2))


@dataclass(frozen=True)
class BranchScan:
    points: list
    unresolved: list = dataclass_field(default_factory=list)


def _branch_model_residual(z, Fz, q, k):
    """Least-squares fit of Fz ~ (z-q)^k (G0 + G1 (z-q) + G2 conj(z-q))."""
    dz = z - q
    cols = np.stack([dz**k, dz ** (k + 1), dz**k * np.conj(dz)], axis=1)
    scale = np.maximum(np.abs(cols).max(axis=0), 1e-300)
    sol, *_ = np.linalg.lstsq(cols / scale, Fz, rcond=None)
    fit = (cols / scale) @ sol
    res = np.linalg.norm(Fz - fit)
    G0 = sol[0] / scale[0]
    return res, G0


def _refine_location(z, Fz, q0, k, spacing):
    """Shrinking grid search for the branch location minimizing the fit."""
    q, half = q0, 2.0 * spacing
    for _ in range(7):
        grid_pts = [
            q + (a + 1j * b) * half / 2 for a in (-1, 0, 1) for b in (-1, 0, 1)
        ]
        res = [_branch_model_residual(z, Fz, p, k)[0] for p in grid_pts]
        q = grid_pts[int(np.argmin(res))]
        half /= 3.0
    return q


def fit_branch_point(z: np.ndarray, Fz: np.ndarray, q0: complex, k_max: int = 6,
                     residual_tol: float = 0.1):
    """Fit a branch model on a sample patch; returns (k, q, G0, rel_residual).

    All orders k = 1..k_max are fitted.  Models with k below the true order
    also fit (with a vanishing leading coefficient), so the reported order is
    the largest k whose residual is within a small factor of the best fit;
    returns None if even the best fit exceeds ``residual_tol``.
    """
    z = np.asarray(z, dtype=complex).ravel()
    Fz = np.asarray(Fz, dtype=complex).reshape(z.size, -1)
    norm = np.linalg.norm(Fz)
    if norm == 0:
        return None
    rms = norm / np.sqrt(z.size)
    spacing = np.median(np.abs(np.diff(np.sort_complex(z)))) + 1e-30
    patch_radius = float(np.abs(z - q0).max())
    acceptable = []
    for k in range(1, k_max + 1):
        q = _refine_location(z, Fz, q0, k, spacing)
        res, G0 = _branch_model_residual(z, Fz, q, k)
        rel = res / norm
        # a model of order below the true one fits exactly but with a
        # negligible leading coefficient; demand the k-th term to matter
        # at the patch scale
        significant = np.linalg.norm(G0) * patch_radius**k >= 0.1 * rms
        if rel <= residual_tol and significant:
            acceptable.append((k, q, G0, float(rel)))
    if not acceptable:
        return None
    return max(acceptable, key=lambda item: item[0])


def _scan_branch_candidates(absfz, threshold):
    """Grid local minima of |F_z| below a threshold (ties allowed)."""
    below = absfz <= threshold
    if not below.any():
        return []
    local_min = np.ones_like(below)
    shifted = np.roll(absfz, 1, axis=1), np.roll(absfz, -1, axis=1)
    local_min &= (absfz <= shifted[0]) & (absfz <= shifted[1])
    interior_up = absfz[1:] <= absfz[:-1]
    interior_dn = absfz[:-1] <= absfz[1:]
    local_min[1:] &= interior_up
    local_min[:-1] &= interior_dn
    cand = np.argwhere(below & local_min)
    return [tuple(ij) for ij in cand]


def _cluster(points, positions, radius):
    """Greedy clustering: keep global minima, drop neighbors within radius."""
    order = sorted(points, key=lambda ij: positions[ij][1])
    kept = []
    for ij in order:
        z = positions[ij][0]
        if all(abs(z - positions[k][0]) > radius for k in kept):
            kept.append(ij)
    return kept


def detect_branch_points(F: ImmersionField, grid=None,
                         threshold_factor: float = 1e-4,
                         conformality_tol: float = 1e-6) -> BranchScan:
    """Locate and classify branch points of a conformal map of the sphere.

    Finds local minima of |F_z| below threshold_factor * median |F_z|, fits
    F_z ~ (z - q)^k G over k in 1..6 in the candidate's home chart and
    verifies G.G ~ 0, G != 0.  Fits worse than 10% of the local |F_z| norm
    are reported as unresolved singular points.
    """
    grid = grid or F.grid
    conf = conformality_residual(F, grid, chart="home")
    sup = float(np.nanmax(np.abs(conf)))
    if sup > conformality_tol:
        raise ConformalityError(sup)

    fz_home = F.chart_gradient_home()
    absfz = np.sqrt(np.einsum("ctp,ctp->tp", fz_home, np.conj(fz_home)).real)
    med = float(np.median(absfz))
    candidates = _scan_branch_candidates(absfz, threshold_factor * med)
    if not candidates:
        return BranchScan(points=[])

    home = grid.home_chart()
    positions = {}
    for (i, j) in candidates:
        chart = home[i]
        positions[(i, j)] = (grid.chart_z(chart)[i, j], absfz[i, j], chart)
    cluster_radius = 0.25
    kept = _cluster(candidates, positions, cluster_radius)

    points, unresolved = [], []
    for (i, j) in kept:
        z0, _, chart = positions[(i, j)]
        zc = grid.chart_z(chart)
        mask = grid.chart_mask(chart)
        fz = chart_gradient(F.field, grid, chart)
        dist = np.abs(zc - z0)
        dist[~mask] = np.inf
        idx = np.argsort(dist.ravel())[:96]
        zs = zc.ravel()[idx]
        samples = fz.reshape(3, -1)[:, idx].T
        fit = fit_branch_point(zs, samples, z0)
        loc = ChartPoint(chart, complex(z0))
        if fit is None:
            unresolved.append(loc)
            continue
        k, q, G0, rel = fit
        bp = BranchPoint(ChartPoint(chart, complex(q)), k, G0, rel)
        if bp.null_defect < 1e-6 and np.linalg.norm(G0) > 1e-6:
            points.append(bp)
        else:
            unresolved.append(loc)
    return BranchScan(points=points, unresolved=unresolved)


# ----------------------------------------------------------------------
# verification report
# ----------------------------------------------------------------------

def verify(F: ImmersionField, grid=None, scan_branches=True) -> dict:
    """Assemble the verification report for an immersion."""
    grid = grid or F.grid
    forms = fundamental_forms(F, grid)
    area = integrate(np.ones_like(forms.area_weight), grid, forms.area_weight)
    intA2 = integrate(np.nan_to_num(forms.norm2_A), grid, forms.area_weight)
    intK = integrate(np.nan_to_num(forms.gauss_curvature), grid, forms.area_weight)
    obstruction = obstruction_vector(
        np.nan_to_num(forms.mean_curvature), forms.area_weight, grid
    )
    conf = conformality_residual(F, grid, chart="home")
    report = {
        "area": area,
        "intA2": intA2,
        "gauss_identity": gauss_identity_residual(F, grid),
        "codazzi_norm": codazzi_residual(F, grid),
        "obstruction": obstruction.tolist(),
        "branch_points": [],
        "gauss_bonnet_residual": intK - FOUR_PI,
        "conformality_sup": float(np.nanmax(np.abs(conf))),
        "mc_convention_constant": MC_CONVENTION_CONSTANT,
    }
    if scan_branches and report["conformality_sup"] <= 1e-6:
        scan = detect_branch_points(F, grid)
        report["branch_points"] = [
            {
                "chart": bp.location.chart,
                "z": [bp.location.z.real, bp.location.z.imag],
                "order": bp.order,
                "G": [[g.real, g.imag] for g in bp.leading_coefficient],
                "null_defect": bp.null_defect,
                "fit_residual": bp.fit_residual,
            }
            for bp in scan.points
        ]
        report["unresolved_singular_points"] = [
            {"chart": p.chart, "z": [p.z.real, p.z.imag]} for p in scan.unresolved
        ]
    return report
