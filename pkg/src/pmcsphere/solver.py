"""
Gauge-fixed Gauss-Newton continuation for prescribed mean curvature.

Solves for a conformal immersion F: S^2 -> R^3 and an affine parameter b such
that the mean curvature of F equals H_target + ell_b, following the straight
homotopy H_s = (1-s) 2 + s H_target from the round sphere.

Residual blocks (stacked over all grid nodes, quadrature-weighted so the
Euclidean norm is an L2 norm):
  * conformality: q1 = g_tt - g_pp/sin^2, q2 = 2 g_tp / sin  (2 rows/node);
  * mean curvature: (1/4)(Lap_round F + (H + ell_b) (F_t x F_p)/sin)
    (3 rows/node) -- the chart-free form of the conformal mean-curvature
    equation, equal to the stereographic-chart residual divided by the
    positive chart factor;
  * 6 based-immersion rows: F(p0) = 0, normal(p0) = e3, frame along e1,
    evaluated at the north pole from the coefficients.

The Jacobian is a forward finite difference over coefficients (step
config.fd_step).  Because the coefficient-to-derivative-jet map is linear,
each difference quotient is evaluated in closed form from precomputed basis
jets, which makes the full Jacobian a few vectorized array operations.
Updates solve damped least-squares normal equations constrained orthogonal
to the 9 gauge directions (3 translations, 3 ambient rotations, 3 conformal
reparametrization fields), with a halving line search; accepted iterates are
re-based exactly by an ambient rigid motion.

Solutions of the continuation problem come in a 3-parameter family (the
affine indeterminacy of the curvature class, realized as boost
reparametrizations); converged solves are slid to the Mobius-centered
member (area center int p dV = 0) so results do not depend on the starting
noise or the path.

The affine constant a = |b| is smoothed as sqrt(|b|^2 + eps^2) - eps
(eps = 1e-12) inside the solve to keep the model differentiable at b = 0;
the returned AffineFunction uses the exact norm.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .affine import AffineFunction
from .errors import ConfigurationError, DataError
from .geometry import (
    ImmersionField,
    conformality_residual,
    detect_branch_points,
    fundamental_forms,
    mc_residual,
    pointwise_forms,
    verify,
)
from .grid import (
    FOUR_PI,
    HarmonicField,
    SphericalGrid,
    analyze,
    chart_area_factors,
    integrate,
    per_node_home_values,
    synthesize,
    synthesize_at,
    synthesize_jet,
)

B_NORM_SMOOTHING = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    degree: int = 24
    tol: float = 1e-8
    max_newton_iters: int = 30
    steps: int = 10
    min_step: float = 1.0 / 160.0
    damping: float = 0.5            # line-search halving factor
    fd_step: float = 1e-6
    max_halvings: int = 20
    noise_amplitude: float = 0.0
    noise_seed: int = 0
    canonicalize: bool = True       # Mobius-center the solution's gauge

    def __post_init__(self):
        if self.tol <= 0 or self.steps < 1:
            raise ConfigurationError("tol must be > 0 and steps >= 1")


@dataclass
class ContinuationState:
    s: float
    coeffs: np.ndarray          # (3, L+1, 2L+1)
    b: np.ndarray               # (3,)
    residual_norm: float
    history: list = dataclass_field(default_factory=list)
    step_log: list = dataclass_field(default_factory=list)
    last_update: np.ndarray = None  # accepted raw update, before re-basing


@dataclass(frozen=True)
class GaugeBasis:
    """Orthonormalized span of the 9 residual-invariance directions."""

    matrix: np.ndarray          # (n_unknowns, 9)
    gram_condition: float


@dataclass(frozen=True)
class SolveResult:
    field: HarmonicField
    affine: AffineFunction
    report: dict
    state: ContinuationState
    status: str                 # "converged" | "stalled"
    wall_time: float


class StepFailure(RuntimeError):
    """A Gauss-Newton step could not decrease the residual."""


def _smooth_norm(b, eps=B_NORM_SMOOTHING):
    return float(np.sqrt(np.dot(b, b) + eps * eps) - eps)


# ----------------------------------------------------------------------
# workspace: precomputed basis jets and pole weights
# ----------------------------------------------------------------------

class _Workspace:
    def __init__(self, grid: SphericalGrid):
        self.grid = grid
        L = grid.L
        self.L = L
        self.n_nodes = grid.n_theta * grid.n_phi
        modes = [(l, m) for l in range(L + 1) for m in range(-l, l + 1)]
        self.modes = modes
        self.n_modes = len(modes)
        self.mode_index = {lm: i for i, lm in enumerate(modes)}

        nm, nn = self.n_modes, self.n_nodes
        self.Yt = np.empty((nm, nn))
        self.Yp = np.empty((nm, nn))
        self.Ylap = np.empty((nm, nn))
        Y = np.empty((nm, nn))
        cos_m, sin_m = grid._cos_m, grid._sin_m
        for i, (l, m) in enumerate(modes):
            am = abs(m)
            q = grid._Q[am][l - am][:, None]
            dq = grid._dQ[am][l - am][:, None]
            scale = 1.0 if m == 0 else np.sqrt(2.0)
            if m >= 0:
                az, daz = cos_m[am][None, :], -am * sin_m[am][None, :]
            else:
                az, daz = sin_m[am][None, :], am * cos_m[am][None, :]
            Y[i] = (scale * q * az).ravel()
            self.Yt[i] = (scale * dq * az).ravel()
            self.Yp[i] = (scale * q * daz).ravel()
            self.Ylap[i] = -l * (l + 1.0) * Y[i]
        self.Y = Y

        # pole-frame weights: F(p0) from m = 0, (F_u, F_v)(p0) from m = +-1
        ls = np.arange(L + 1)
        self.pole_value_w = np.sqrt((2 * ls + 1) / FOUR_PI)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = -np.sqrt((2 * ls + 1.0) * ls * (ls + 1.0) / (8 * np.pi))
        alpha[0] = 0.0
        self.pole_deriv_w = 2.0 * alpha  # F_u = 2 dF/dtheta at phi = 0

        self.sqrt_w = np.sqrt(grid.w).ravel()
        self.sin_flat = np.repeat(grid.sin_theta, grid.n_phi)
        self.xyz_flat = grid.xyz.reshape(3, -1)
        # home-chart conformal factor mu^{-2}: the row weights below make the
        # Euclidean norm of each block equal to the L2 norm of the
        # stereographic-chart residuals F_z.F_z and mc_residual
        mu2inv = per_node_home_values(
            chart_area_factors(grid, "north")[:, None],
            chart_area_factors(grid, "south")[:, None],
            grid,
        )
        mu2inv = np.broadcast_to(mu2inv, (grid.n_theta, grid.n_phi)).ravel()
        self.conf_row_w = 0.25 * mu2inv * self.sqrt_w
        self.mc_row_w = mu2inv * self.sqrt_w
        self.n_unknowns = 3 * self.n_modes + 3

    # -- packing ---------------------------------------------------------

    def pack(self, coeffs: np.ndarray, b: np.ndarray) -> np.ndarray:
        L = self.L
        x = np.empty(self.n_unknowns)
        for c in range(3):
            x[c * self.n_modes : (c + 1) * self.n_modes] = [
                coeffs[c, l, L + m] for (l, m) in self.modes
            ]
        x[-3:] = b
        return x

    def unpack(self, x: np.ndarray):
        L = self.L
        coeffs = np.zeros((3, L + 1, 2 * L + 1))
        for c in range(3):
            block = x[c * self.n_modes : (c + 1) * self.n_modes]
            for i, (l, m) in enumerate(self.modes):
                coeffs[c, l, L + m] = block[i]
        return coeffs, x[-3:].copy()

    # -- pole frame -------------------------------------------------------

    def pole_frame(self, coeffs: np.ndarray):
        L = self.L
        F0 = coeffs[:, :, L] @ self.pole_value_w
        Fu = coeffs[:, :, L + 1] @ self.pole_deriv_w
        Fv = coeffs[:, :, L - 1] @ self.pole_deriv_w
        return F0, Fu, Fv


_workspaces: dict = {}


def _workspace(grid: SphericalGrid) -> _Workspace:
    key = id(grid)
    if key not in _workspaces:
        _workspaces[key] = _Workspace(grid)
    return _workspaces[key]


# ----------------------------------------------------------------------
# residual
# ----------------------------------------------------------------------

def _pointwise_blocks(jet, Htot, grid):
    ft, fp, lap = jet["ft"], jet["fp"], jet["lap"]
    sin = grid.sin_theta[:, None]
    gtt = np.einsum("ctp,ctp->tp", ft, ft)
    gpp = np.einsum("ctp,ctp->tp", fp, fp)
    gtp = np.einsum("ctp,ctp->tp", ft, fp)
    q1 = gtt - gpp / sin**2
    q2 = 2.0 * gtp / sin
    cross = np.cross(ft, fp, axis=0)
    wn = cross / sin[None]
    rmc = 0.25 * (lap + Htot[None] * wn)
    return q1, q2, rmc, wn


def _constraint_rows(F0, Fu, Fv):
    n = np.cross(Fu, Fv)
    nn = np.linalg.norm(n)
    if nn < 1e-14:
        raise DataError("degenerate frame at the base point")
    N = n / nn
    return np.array([F0[0], F0[1], F0[2], N[0], N[1], Fu[1]])


def _ell_values(b, ws):
    return _smooth_norm(b) + b @ ws.xyz_flat


def _residual_vector(coeffs, b, H_flat, grid, ws):
    field = HarmonicField(coeffs)
    jet = synthesize_jet(field, grid, which=("ft", "fp", "lap"))
    Htot = (H_flat + _ell_values(b, ws)).reshape(grid.n_theta, grid.n_phi)
    q1, q2, rmc, _ = _pointwise_blocks(jet, Htot, grid)
    rows = [
        q1.ravel() * ws.conf_row_w,
        q2.ravel() * ws.conf_row_w,
        rmc[0].ravel() * ws.mc_row_w,
        rmc[1].ravel() * ws.mc_row_w,
        rmc[2].ravel() * ws.mc_row_w,
    ]
    cons = _constraint_rows(*ws.pole_frame(coeffs))
    return np.concatenate(rows + [cons])


def residual(F, b, H_target_values, grid: SphericalGrid) -> np.ndarray:
    """Stacked solver residual for an immersion, affine vector and target H.

    ``F`` may be a 3-component HarmonicField or an ImmersionField.  Raises
    on H_target + ell <= 0 anywhere (outside the solvable regime).
    """
    if isinstance(F, ImmersionField):
        F = F.field
    ws = _workspace(grid)
    H_flat = np.asarray(H_target_values, dtype=float).ravel()
    if H_flat.size != ws.n_nodes:
        raise ConfigurationError("H_target values do not match the grid")
    if np.min(H_flat) <= 0:
        raise DataError("H_target must be positive everywhere")
    coeffs = F.truncated(grid.L).coeffs if F.degree != grid.L else F.coeffs
    return _residual_vector(coeffs, np.asarray(b, dtype=float), H_flat, grid, ws)


# ----------------------------------------------------------------------
# Jacobian (forward differences, evaluated via the linear jet map)
# ----------------------------------------------------------------------

def _jacobian(coeffs, b, H_flat, grid, ws, fd_step, chunk=256):
    eps = fd_step
    field = HarmonicField(coeffs)
    jet = synthesize_jet(field, grid, which=("ft", "fp", "lap"))
    ft = jet["ft"].reshape(3, -1)
    fp = jet["fp"].reshape(3, -1)
    sin = ws.sin_flat
    cw, mw = ws.conf_row_w, ws.mc_row_w
    Htot = H_flat + _ell_values(b, ws)

    n_rows = 5 * ws.n_nodes + 6
    J = np.zeros((n_rows, ws.n_unknowns))
    nn = ws.n_nodes

    e = np.eye(3)
    for c in range(3):
        exc_fp = np.cross(e[c], fp, axisb=0).T      # e_c x F_p, (3, nn)
        ft_xec = np.cross(ft, e[c], axisa=0).T      # F_t x e_c, (3, nn)
        col0 = c * ws.n_modes
        for start in range(0, ws.n_modes, chunk):
            sl = slice(start, start + chunk)
            Yt, Yp, Ylap = ws.Yt[sl], ws.Yp[sl], ws.Ylap[sl]
            cols = slice(col0 + start, col0 + min(start + chunk, ws.n_modes))
            dgtt = 2.0 * ft[c] * Yt + eps * Yt * Yt
            dgpp = 2.0 * fp[c] * Yp + eps * Yp * Yp
            dgtp = ft[c] * Yp + fp[c] * Yt + eps * Yt * Yp
            J[0 * nn : 1 * nn, cols] = ((dgtt - dgpp / sin**2) * cw).T
            J[1 * nn : 2 * nn, cols] = (2.0 * dgtp / sin * cw).T
            for a in range(3):
                dwn = (Yt * exc_fp[a] + Yp * ft_xec[a]) / sin
                drmc = 0.25 * (Htot * dwn)
                if a == c:
                    drmc = drmc + 0.25 * Ylap
                J[(2 + a) * nn : (3 + a) * nn, cols] = (drmc * mw).T

    # constraint rows: chain rule through the 9-dim pole frame
    F0, Fu, Fv = ws.pole_frame(coeffs)
    P = np.concatenate([F0, Fu, Fv])
    base = _constraint_rows(F0, Fu, Fv)
    dg_dP = np.empty((6, 9))
    hp = 1e-7 * max(1.0, np.linalg.norm(P))
    for j in range(9):
        Pp = P.copy()
        Pp[j] += hp
        dg_dP[:, j] = (_constraint_rows(Pp[0:3], Pp[3:6], Pp[6:9]) - base) / hp
    L = ws.L
    for c in range(3):
        for l in range(L + 1):
            i0 = ws.mode_index[(l, 0)] + c * ws.n_modes
            J[5 * nn :, i0] += dg_dP[:, c] * ws.pole_value_w[l]
            if l >= 1:
                iu = ws.mode_index[(l, 1)] + c * ws.n_modes
                iv = ws.mode_index[(l, -1)] + c * ws.n_modes
                J[5 * nn :, iu] += dg_dP[:, 3 + c] * ws.pole_deriv_w[l]
                J[5 * nn :, iv] += dg_dP[:, 6 + c] * ws.pole_deriv_w[l]

    # b columns: centered differences through ell (residual is linear in H)
    jet_cross = np.cross(jet["ft"], jet["fp"], axis=0).reshape(3, -1)
    wn = jet_cross / sin
    for j in range(3):
        bp = b.copy(); bp[j] += eps
        bm = b.copy(); bm[j] -= eps
        dH = (_ell_values(bp, ws) - _ell_values(bm, ws)) / (2 * eps)
        for a in range(3):
            J[(2 + a) * nn : (3 + a) * nn, 3 * ws.n_modes + j] = (
                0.25 * dH * wn[a] * mw
            )
    return J


# ----------------------------------------------------------------------
# gauge basis and projected step
# ----------------------------------------------------------------------

def gauge_basis(coeffs, grid: SphericalGrid, ws=None) -> GaugeBasis:
    """Translations, ambient rotations and conformal reparametrization
    fields at the current immersion, as unit coefficient-space vectors."""
    ws = ws or _workspace(grid)
    L = grid.L
    dirs = []
    # translations: constant shift of one component
    for c in range(3):
        d = np.zeros((3, L + 1, 2 * L + 1))
        d[c, 0, L] = np.sqrt(FOUR_PI)
        dirs.append(d)
    # ambient rotations: component mixing omega x F
    for k in range(3):
        d = np.zeros_like(coeffs)
        K = np.zeros((3, 3))
        K[(k + 2) % 3, (k + 1) % 3] = 1.0
        K[(k + 1) % 3, (k + 2) % 3] = -1.0
        d = np.einsum("dc,clm->dlm", K, coeffs)
        dirs.append(d)
    # conformal boosts: push-forward of grad x_j through F
    field = HarmonicField(coeffs)
    jet = synthesize_jet(field, grid, which=("ft", "fp"))
    theta, phi = grid.theta[:, None], grid.phi[None, :]
    st, ct = grid.sin_theta[:, None], grid.cos_theta[:, None]
    dx_t = [ct * np.cos(phi), ct * np.sin(phi), -st * np.ones_like(phi)]
    dx_p = [-st * np.sin(phi), st * np.cos(phi), np.zeros((grid.n_theta, grid.n_phi))]
    for j in range(3):
        vals = dx_t[j][None] * jet["ft"] + dx_p[j][None] * jet["fp"] / st[None] ** 2
        dirs.append(analyze(vals, grid).coeffs)

    cols = []
    for d in dirs:
        v = np.zeros(ws.n_unknowns)
        v[:-3] = ws.pack(d, np.zeros(3))[:-3]
        nrm = np.linalg.norm(v)
        cols.append(v / nrm)
    G = np.stack(cols, axis=1)
    sv = np.linalg.svd(G, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if cond >= 1e10:
        raise ConfigurationError(
            f"gauge directions degenerate (condition {cond:.2e})"
        )
    return GaugeBasis(matrix=G, gram_condition=cond)


def _rebase(coeffs, ws):
    """Ambient rigid motion making the based-immersion rows exactly zero."""
    F0, Fu, Fv = ws.pole_frame(coeffs)
    n = np.cross(Fu, Fv)
    N = n / np.linalg.norm(n)
    u = Fu / np.linalg.norm(Fu)
    R = np.stack([u, np.cross(N, u), N])
    out = np.einsum("dc,clm->dlm", R, coeffs)
    F0r, _, _ = ws.pole_frame(out)
    out[:, 0, ws.L] -= F0r * np.sqrt(FOUR_PI)
    return out


def gauge_projected_step(state: ContinuationState, H_values, grid: SphericalGrid,
                         config: SolverConfig) -> ContinuationState:
    """One damped Gauss-Newton update projected off the gauge directions.

    Solves the KKT system of the damped normal equations subject to
    G^T delta = 0, then line-searches with halving factor config.damping.
    Raises StepFailure when no decrease is found.
    """
    ws = _workspace(grid)
    H_flat = np.asarray(H_values, dtype=float).ravel()
    r0 = _residual_vector(state.coeffs, state.b, H_flat, grid, ws)
    n0 = np.linalg.norm(r0)
    J = _jacobian(state.coeffs, state.b, H_flat, grid, ws, config.fd_step)
    # The based-immersion rows are enforced exactly by the rigid-motion
    # re-basing after each accepted step; only the pointwise rows drive the
    # least-squares model, so the gauge projection and the basing do not
    # compete (the competition degrades convergence from quadratic to
    # linear).
    npw = 5 * ws.n_nodes
    A = J[:npw].T @ J[:npw]
    g = J[:npw].T @ r0[:npw]
    G = gauge_basis(state.coeffs, grid, ws).matrix
    n, k = ws.n_unknowns, G.shape[1]
    lam = 1e-12 * np.trace(A) / n

    x0 = ws.pack(state.coeffs, state.b)
    for attempt in range(4):
        K = np.zeros((n + k, n + k))
        K[:n, :n] = A + lam * np.eye(n)
        K[:n, n:] = G
        K[n:, :n] = G.T
        rhs = np.concatenate([-g, np.zeros(k)])
        try:
            delta = np.linalg.solve(K, rhs)[:n]
        except np.linalg.LinAlgError:
            lam = max(lam * 1e4, 1e-10)
            continue
        alpha = 1.0
        for _ in range(config.max_halvings + 1):
            x_try = x0 + alpha * delta
            coeffs_try, b_try = ws.unpack(x_try)
            r_try = _residual_vector(coeffs_try, b_try, H_flat, grid, ws)
            n_try = np.linalg.norm(r_try)
            if n_try < n0:
                coeffs_new = _rebase(coeffs_try, ws)
                r_new = _residual_vector(coeffs_new, b_try, H_flat, grid, ws)
                new = ContinuationState(
                    s=state.s,
                    coeffs=coeffs_new,
                    b=b_try,
                    residual_norm=float(np.linalg.norm(r_new)),
                    history=state.history,
                    step_log=state.step_log,
                    last_update=alpha * delta,
                )
                new.history.append(new.residual_norm)
                return new
            alpha *= config.damping
        lam = max(lam * 1e4, 1e-10)
    raise StepFailure(f"no residual decrease from {n0:.3e}")


# ----------------------------------------------------------------------
# continuation driver
# ----------------------------------------------------------------------

def _mobius_boost_points(v, xyz):
    """Conformal boost of S^2: phi_v(p) = ((1-|v|^2) p + 2(1 + p.v) v) / den.

    Smooth for |v| < 1, identity at v = 0; its derivative at v = 0 is twice
    the conformal gradient field of the linear function v.x.
    """
    v = np.asarray(v, dtype=float)
    v2 = float(v @ v)
    if v2 >= 1.0:
        raise ConfigurationError("Mobius boost parameter must satisfy |v| < 1")
    t = np.einsum("c,ctp->tp", v, xyz)
    den = 1.0 + 2.0 * t + v2
    return ((1.0 - v2) * xyz + 2.0 * (1.0 + t)[None] * v[:, None, None]) / den[None]


def _compose_with_boost(coeffs, v, grid):
    """Coefficients of F o phi_v (spectral projection of the composition)."""
    pts = _mobius_boost_points(v, grid.xyz)
    theta = np.arccos(np.clip(pts[2], -1.0, 1.0)).ravel()
    phi = np.arctan2(pts[1], pts[0]).ravel()
    vals = synthesize_at(HarmonicField(coeffs), theta, phi)
    return analyze(vals.reshape(3, grid.n_theta, grid.n_phi), grid).coeffs


def _area_center(coeffs, grid, ws):
    """Center of the induced area measure on the domain sphere."""
    jet = synthesize_jet(HarmonicField(coeffs), grid, which=("ft", "fp"))
    cross = np.cross(jet["ft"], jet["fp"], axis=0)
    W = np.sqrt(np.einsum("ctp,ctp->tp", cross, cross))
    aw = W / grid.sin_theta[:, None]
    total = integrate(np.ones_like(aw), grid, aw)
    return np.array([integrate(grid.xyz[c], grid, aw) for c in range(3)]) / total


def _canonicalize(state, H_vals, grid, config, ws):
    """Slide to the Mobius-centered member of the solution family.

    The solutions of the continuation problem form a 3-parameter family
    (the affine indeterminacy of the prescribed-curvature class realized as
    boost reparametrizations); the member with vanishing area center
    int p dV_gamma = 0 is the canonical, path-independent representative.
    Alternates a boost composition fixing the center with a re-polish of the
    equations.
    """
    for _ in range(8):
        c = _area_center(state.coeffs, grid, ws)
        if np.linalg.norm(c) < 1e-10:
            return state, True
        # damped Newton on v -> center(F o phi_v) with FD Jacobian
        v = np.zeros(3)
        center_v = c
        for _ in range(12):
            h = 1e-6
            Jc = np.empty((3, 3))
            for j in range(3):
                vp = v.copy()
                vp[j] += h
                cp = _area_center(
                    _compose_with_boost(state.coeffs, vp, grid), grid, ws
                )
                Jc[:, j] = (cp - center_v) / h
            try:
                dv = np.linalg.solve(Jc, -center_v)
            except np.linalg.LinAlgError:
                break
            step = min(1.0, 0.3 / max(np.linalg.norm(dv), 1e-30))
            v = v + step * dv
            center_v = _area_center(
                _compose_with_boost(state.coeffs, v, grid), grid, ws
            )
            if np.linalg.norm(center_v) < 1e-12:
                break
        coeffs = _rebase(_compose_with_boost(state.coeffs, v, grid), ws)
        state = ContinuationState(
            s=state.s,
            coeffs=coeffs,
            b=state.b.copy(),
            residual_norm=float(np.linalg.norm(
                _residual_vector(coeffs, state.b, H_vals.ravel(), grid, ws))),
            history=state.history,
            step_log=state.step_log,
        )
        state, ok = _newton_to_tol(state, H_vals, grid, config, 0.5 * config.tol)
        if not ok:
            return state, False
    return state, bool(np.linalg.norm(_area_center(state.coeffs, grid, ws)) < 1e-8)


def _round_start(grid, config):
    coeffs = analyze(grid.xyz, grid).coeffs.copy()
    ws = _workspace(grid)
    if config.noise_amplitude > 0:
        rng = np.random.default_rng(config.noise_seed)
        valid = np.zeros_like(coeffs, dtype=bool)
        L = grid.L
        for l in range(L + 1):
            valid[:, l, L - l : L + l + 1] = True
        noise = rng.uniform(-1, 1, size=coeffs.shape) * config.noise_amplitude
        coeffs = coeffs + noise * valid
    return _rebase(coeffs, ws)


def _newton_to_tol(state, H_values, grid, config, target):
    for it in range(config.max_newton_iters):
        if state.residual_norm <= target:
            return state, True
        try:
            state = gauge_projected_step(state, H_values, grid, config)
        except StepFailure:
            return state, False
    return state, state.residual_norm <= target


def solve_pmc(H_target, config: SolverConfig = SolverConfig()) -> SolveResult:
    """Continuation solve of the prescribed mean curvature problem.

    ``H_target`` is a scalar HarmonicField (degree <= config.degree) or node
    values on the solver grid; it must be positive everywhere.  Returns the
    immersion, the normalized affine function ell, and a verification
    report.  On a continuation stall the partial state is returned with
    status "stalled" and branch diagnostics in the report.
    """
    t_start = time.perf_counter()
    grid = SphericalGrid(config.degree)
    ws = _workspace(grid)
    if isinstance(H_target, HarmonicField):
        if H_target.degree > grid.L:
            raise ConfigurationError("H_target degree exceeds solver degree")
        H_vals = synthesize(H_target.truncated(grid.L), grid)
    else:
        H_vals = np.asarray(H_target, dtype=float)
        if H_vals.shape != (grid.n_theta, grid.n_phi):
            raise ConfigurationError("H_target values do not match solver grid")
    if np.min(H_vals) <= 0:
        raise DataError("H_target must be positive everywhere")

    coeffs = _round_start(grid, config)
    b = np.zeros(3)
    H0 = np.full_like(H_vals, 2.0)
    r = _residual_vector(coeffs, b, H0.ravel(), grid, ws)
    state = ContinuationState(
        s=0.0, coeffs=coeffs, b=b, residual_norm=float(np.linalg.norm(r))
    )

    status = "converged"
    ds = 1.0 / config.steps
    intermediate_tol = 10.0 * config.tol
    s = 0.0
    # converge the (possibly noisy) start at s = 0 first
    state, ok = _newton_to_tol(state, H0, grid, config, intermediate_tol)
    if not ok:
        status = "stalled"
    while ok and s < 1.0 - 1e-14:
        s_next = min(1.0, s + ds)
        H_s = (1.0 - s_next) * 2.0 + s_next * H_vals
        trial = ContinuationState(
            s=s_next,
            coeffs=state.coeffs.copy(),
            b=state.b.copy(),
            residual_norm=float(
                np.linalg.norm(
                    _residual_vector(state.coeffs, state.b, H_s.ravel(), grid, ws)
                )
            ),
            history=state.history,
            step_log=state.step_log,
        )
        trial, ok_step = _newton_to_tol(trial, H_s, grid, config, intermediate_tol)
        state.step_log.append(
            {"s": s_next, "ds": ds, "converged": bool(ok_step),
             "residual": trial.residual_norm}
        )
        if ok_step:
            state = trial
            s = s_next
            continue
        ds /= 2.0
        if ds < config.min_step:
            status = "stalled"
            break

    if status == "converged":
        # final polish; row weighting makes the norm the chart-form L2 norm,
        # so driving it to tol/2 bounds both reported block residuals by tol
        state, ok = _newton_to_tol(state, H_vals, grid, config, 0.5 * config.tol)
        if not ok:
            status = "stalled"
        elif config.canonicalize:
            state, ok = _canonicalize(state, H_vals, grid, config, ws)
            if not ok:
                status = "stalled"

    field = HarmonicField(state.coeffs)
    affine = AffineFunction(state.b)
    F = ImmersionField(field, grid)
    report = _solution_report(F, affine, H_vals, grid, status)
    report["wall_time"] = time.perf_counter() - t_start
    report["residual_history"] = list(state.history)
    report["step_log"] = list(state.step_log)
    return SolveResult(
        field=field,
        affine=affine,
        report=report,
        state=state,
        status=status,
        wall_time=report["wall_time"],
    )


def _solution_report(F, affine, H_vals, grid, status):
    report = verify(F, grid, scan_branches=(status != "converged"))
    ell = affine.evaluate(grid)
    conf = conformality_residual(F, grid, chart="home")
    report["conformality_l2"] = float(
        np.sqrt(integrate(np.abs(np.nan_to_num(conf)) ** 2, grid))
    )
    try:
        mc = mc_residual(F, H_vals + ell, grid, chart="home")
        mag2 = np.einsum("ctp,ctp->tp", mc, np.conj(mc)).real
        report["mc_l2"] = float(np.sqrt(integrate(np.nan_to_num(mag2), grid)))
        report["mc_sup"] = float(np.nanmax(np.sqrt(mag2)))
    except Exception:
        report["mc_l2"] = report["mc_sup"] = float("nan")
    forms = fundamental_forms(F, grid)
    from .geometry import obstruction_vector

    report["obstruction_h_plus_ell"] = obstruction_vector(
        H_vals + ell, forms.area_weight, grid
    ).tolist()
    report["affine_b"] = affine.b.tolist()
    report["status"] = status
    if status != "converged":
        # a stall may come from branch-point formation; scan with the
        # conformality gate relaxed to the iterate's own defect
        diag = {"note": "possible branch-point formation"}
        try:
            tol = max(1e-6, 2.0 * report["conformality_sup"])
            scan = detect_branch_points(F, grid, conformality_tol=tol)
            diag["branch_points"] = [
                {"chart": bp.location.chart,
                 "z": [bp.location.z.real, bp.location.z.imag],
                 "order": bp.order}
                for bp in scan.points
            ]
            diag["unresolved_singular_points"] = [
                {"chart": p.chart, "z": [p.z.real, p.z.imag]}
                for p in scan.unresolved
            ]
        except Exception as err:
            diag["branch_scan_error"] = str(err)
        report["stall_diagnostics"] = diag
    return report


# ----------------------------------------------------------------------
# linearization utilities
# ----------------------------------------------------------------------

def normal_variation_operator(F: ImmersionField, f_values, grid=None) -> np.ndarray:
    """-Lap_gamma f - |A|^2 f: the normal-variation linearization of H.

    Lap_gamma is the Laplace-Beltrami operator of the induced metric
    (lambda^{-2} times the flat chart Laplacian in conformal charts); the
    finite-difference calibration of the prefactor is unity: d/dt of the
    computed H under F -> F + t f N equals this operator's output.
    """
    grid = grid or F.grid
    f_values = np.asarray(f_values, dtype=float)
    ff = analyze(f_values, grid)
    fj = synthesize_jet(ff, grid, which=("ft", "fp", "ftt", "ftp", "fpp"))
    jet = F.jet("ft", "fp", "ftt", "ftp", "fpp")
    d1 = [jet["ft"], jet["fp"]]
    d2 = [[jet["ftt"], jet["ftp"]], [jet["ftp"], jet["fpp"]]]
    dot = lambda x, y: np.einsum("ctp,ctp->tp", x, y)
    g = [[dot(d1[a], d1[b]) for b in (0, 1)] for a in (0, 1)]
    dg = [[[dot(d2[c][a], d1[b]) + dot(d1[a], d2[c][b]) for b in (0, 1)]
           for a in (0, 1)] for c in (0, 1)]
    det = g[0][0] * g[1][1] - g[0][1] ** 2
    W = np.sqrt(det)
    ginv = [[g[1][1] / det, -g[0][1] / det], [-g[0][1] / det, g[0][0] / det]]
    ddet = [dg[c][0][0] * g[1][1] + g[0][0] * dg[c][1][1]
            - 2 * g[0][1] * dg[c][0][1] for c in (0, 1)]
    dW = [ddet[c] / (2 * W) for c in (0, 1)]
    dginv = [[[-sum(ginv[a][e] * dg[c][e][f] * ginv[f][b]
                    for e in (0, 1) for f in (0, 1))
               for b in (0, 1)] for a in (0, 1)] for c in (0, 1)]

    fd1 = [fj["ft"][0], fj["fp"][0]]
    fd2 = [[fj["ftt"][0], fj["ftp"][0]], [fj["ftp"][0], fj["fpp"][0]]]
    lap = sum(ginv[a][b] * fd2[a][b] for a in (0, 1) for b in (0, 1))
    for b in (0, 1):
        div_coeff = sum(
            dW[a] / W * ginv[a][b] + dginv[a][a][b] for a in (0, 1)
        )
        lap = lap + div_coeff * fd1[b]

    forms = pointwise_forms(jet["ft"], jet["fp"], jet["ftt"], jet["ftp"], jet["fpp"])
    return -lap - forms["A2"] * f_values


def affine_insolvability_check(grid: SphericalGrid, ell_values=None) -> float:
    """Least-squares residual floor of (-Lap - 2) f = ell on the unit sphere.

    The operator annihilates exactly the degree-1 harmonics, so the floor is
    the L2 norm of the degree-1 part of ell: sqrt(4 pi / 3) for ell = 1 + x3.
    """
    if ell_values is None:
        ell_values = 1.0 + grid.xyz[2]
    ell = analyze(np.asarray(ell_values, dtype=float), grid)
    c = ell.coeffs[0]
    L = grid.L
    deg1 = c[1, L - 1 : L + 2]
    return float(np.linalg.norm(deg1))
