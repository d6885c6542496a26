//! Geodesics of the limiting action and the limit shape `hlim`.
//!
//! Inside the lens region the minimizing paths are the scaled boundary
//! curves `a * l(t)` for a coefficient `a` in [-1, 1]; outside, a path
//! follows the lens boundary and leaves it tangentially along a straight
//! line. `hlim(t, x)` is the action of the unique geodesic from the origin,
//! `int_0^t (-gdot^2/2 + devlim(u, g(u))) du`.
//!
//! A Bellman lattice recursion over piecewise-linear paths provides an
//! independent oracle for the geodesic evaluation.

use crate::error::{Result, WntError};
use crate::limit_shape::{devlim_at, LensProfile};
use crate::numerics::{brent, integrate_endpoint_graded};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeodesicKind {
    /// Path `a * l(u)` staying inside the lens.
    Interior { a: f64 },
    /// Lens arc `sign * l` on `[0, t_exit]`, then the tangent line.
    Exterior { t_exit: f64, sign: f64 },
}

/// Origin-anchored optimal path to `(target_t, target_x)`.
#[derive(Debug, Clone, Copy)]
pub struct Geodesic {
    pub kind: GeodesicKind,
    pub target_t: f64,
    pub target_x: f64,
}

impl Geodesic {
    /// Path position at time `u` in `[0, target_t]`.
    pub fn value(&self, profile: &LensProfile, u: f64) -> f64 {
        match self.kind {
            GeodesicKind::Interior { a } => a * profile.ell(u),
            GeodesicKind::Exterior { t_exit, sign } => {
                if u <= t_exit {
                    sign * profile.ell(u)
                } else {
                    sign * (profile.ell(t_exit) + profile.elldot(t_exit) * (u - t_exit))
                }
            }
        }
    }

    /// Path velocity at time `u`.
    pub fn deriv(&self, profile: &LensProfile, u: f64) -> f64 {
        match self.kind {
            GeodesicKind::Interior { a } => a * profile.elldot(u),
            GeodesicKind::Exterior { t_exit, sign } => {
                if u <= t_exit {
                    sign * profile.elldot(u)
                } else {
                    sign * profile.elldot(t_exit)
                }
            }
        }
    }

    /// Tangency defect `l(s) + l'(s)(t - s) - |x|` at the exit time; zero for
    /// interior geodesics.
    pub fn tangency_residual(&self, profile: &LensProfile) -> f64 {
        match self.kind {
            GeodesicKind::Interior { .. } => 0.0,
            GeodesicKind::Exterior { t_exit, .. } => {
                profile.ell(t_exit) + profile.elldot(t_exit) * (self.target_t - t_exit)
                    - self.target_x.abs()
            }
        }
    }
}

/// The unique geodesic from the origin to `(t, x)`; at `(2, 0)` the
/// symmetric representative `a = 0` is returned.
pub fn geodesic_to(profile: &LensProfile, t: f64, x: f64) -> Result<Geodesic> {
    if !(t > 0.0 && t <= 2.0) {
        return Err(WntError::Domain(format!(
            "geodesic target time must lie in (0, 2], got {t}"
        )));
    }
    let ell_t = profile.ell(t);
    if t == 2.0 && x == 0.0 {
        return Ok(Geodesic {
            kind: GeodesicKind::Interior { a: 0.0 },
            target_t: t,
            target_x: x,
        });
    }
    if x.abs() <= ell_t {
        return Ok(Geodesic {
            kind: GeodesicKind::Interior { a: x / ell_t },
            target_t: t,
            target_x: x,
        });
    }
    // Exterior: find the tangency time. g is strictly decreasing in s
    // (the lens is concave), so the root is unique.
    let sign = x.signum();
    let x_abs = x.abs();
    let g = |s: f64| profile.ell(s) + profile.elldot(s) * (t - s) - x_abs;
    let s_lo = profile.grid_t()[1];
    let s_hi = (t - 1e-12).min(2.0 - 1e-12);
    let (g_lo, g_hi) = (g(s_lo), g(s_hi));
    if g_lo < 0.0 || g_hi > 0.0 {
        return Err(WntError::OutOfRange {
            context: format!("tangency time for (t, x) = ({t}, {x}) not bracketed"),
            lo: s_lo,
            hi: s_hi,
        });
    }
    // Bisection to locate, then Brent to polish.
    let (mut lo, mut hi) = (s_lo, s_hi);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_exit = brent(&g, lo, hi, 1e-14, 100)?;
    Ok(Geodesic {
        kind: GeodesicKind::Exterior { t_exit, sign },
        target_t: t,
        target_x: x,
    })
}

const ACTION_PANELS: usize = 24;

/// Geodesic action `int_s^t (-gdot^2/2 + devlim(u, g(u))) du`.
///
/// Endpoint-graded quadrature tames the `u^(-2/3)` integrand blow-up at the
/// domain ends; exterior geodesics are split at the tangency kink.
pub fn action(profile: &LensProfile, geo: &Geodesic, s: f64, t: f64) -> Result<f64> {
    if !(0.0 <= s && s <= t && t <= geo.target_t + 1e-12) {
        return Err(WntError::Domain(format!(
            "action interval [{s}, {t}] invalid for target time {}",
            geo.target_t
        )));
    }
    if s == t {
        return Ok(0.0);
    }
    let integrand = |u: f64| {
        let gdot = geo.deriv(profile, u);
        let pos = geo.value(profile, u);
        let dev = devlim_at(profile, u, pos).unwrap_or(0.0);
        -0.5 * gdot * gdot + dev
    };
    let mut breaks = vec![s];
    if let GeodesicKind::Exterior { t_exit, .. } = geo.kind {
        if t_exit > s && t_exit < t {
            breaks.push(t_exit);
        }
    }
    breaks.push(t);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += integrate_endpoint_graded(integrand, w[0], w[1], ACTION_PANELS);
    }
    Ok(total)
}

/// Kinetic energy `(1/2) int_s^t gdot^2 du` of a geodesic (used by the
/// Girsanov tilt bookkeeping).
pub fn energy(profile: &LensProfile, geo: &Geodesic, s: f64, t: f64) -> f64 {
    let integrand = |u: f64| {
        let gdot = geo.deriv(profile, u);
        0.5 * gdot * gdot
    };
    let mut breaks = vec![s];
    if let GeodesicKind::Exterior { t_exit, .. } = geo.kind {
        if t_exit > s && t_exit < t {
            breaks.push(t_exit);
        }
    }
    breaks.push(t);
    breaks
        .windows(2)
        .map(|w| integrate_endpoint_graded(integrand, w[0], w[1], ACTION_PANELS))
        .sum()
}

/// The limit shape `hlim(t, x)`: geodesic action from the origin.
pub fn hlim_at(profile: &LensProfile, t: f64, x: f64) -> Result<f64> {
    let geo = geodesic_to(profile, t, x)?;
    action(profile, &geo, 0.0, t)
}

/// Bellman recursion for the minimal path cost from the origin to `(t, x)`
/// with an arbitrary potential. The recursion starts at a small positive time
/// `t0` from the value function of explicit straight chords through the
/// origin -- starting from a point mass instead would leave the first rows
/// dominated by velocity-quantization artifacts that no later refinement can
/// undo. Each update is a continuous Hopf-Lax step. Returns the negated
/// minimal cost.
pub fn dp_lattice<F: Fn(f64, f64) -> f64>(
    potential: F,
    t: f64,
    x: f64,
    nt: usize,
    nx: usize,
) -> Result<f64> {
    let init = |t0: f64, y: f64| {
        0.5 * y * y / t0
            - integrate_endpoint_graded(|u| potential(u, y * u / t0), 0.0, t0, 8)
    };
    dp_lattice_with_init(&potential, t, x, nt, nx, &init)
}

/// [`dp_lattice`] with a caller-supplied starting value function
/// `init(t0, y)`: the minimal path cost from the origin to `(t0, y)`, which
/// the caller may compute over a richer explicit path family than straight
/// chords.
pub fn dp_lattice_with_init<F, G>(
    potential: &F,
    t: f64,
    x: f64,
    nt: usize,
    nx: usize,
    init: &G,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    if nt < 32 || nx < 32 {
        return Err(WntError::Domain(format!(
            "lattice must be at least 32x32, got {nt}x{nx}"
        )));
    }
    let nx = nx + (nx % 2); // keep x = 0 on the lattice
    let x_max = x.abs() + 2.0;
    let dx = 2.0 * x_max / nx as f64;
    let n_pts = nx + 1;
    let target = (x + x_max) / dx;
    if !(0.0..=nx as f64).contains(&target) {
        return Err(WntError::Infeasible(format!(
            "target (t, x) = ({t}, {x}) outside the lattice"
        )));
    }
    // Start time: a handful of uniform steps' worth, so the init family
    // covers the region where lattice moves are coarser than path spread.
    let t0 = t * 8.0 / nt as f64;
    // Steps graded cubically toward the final time: for t = 2 the potential
    // may blow up like (2 - u)^(-2/3) there, and mapping u = tau(s) with
    // 2 - tau ~ (1 - s)^3 keeps the per-step midpoint sampling of such a
    // potential regular in s (uniform steps miss Theta(dt^(1/3)) of its
    // time integral at the tip).
    let tau = |s: f64| t0 + (t - t0) * (1.0 - (1.0 - s).powi(3));
    // Slope budget covering tangent lines and the straight path.
    let v_max = (8.0f64).max(4.0 * x_max / t);

    let mut cost: Vec<f64> = (0..n_pts)
        .map(|j| init(t0, j as f64 * dx - x_max))
        .collect();
    let mut next = vec![0.0f64; n_pts];
    for k in 0..nt {
        let ds = 1.0 / nt as f64;
        let dt = tau((k + 1) as f64 * ds) - tau(k as f64 * ds);
        let t_mid = tau((k as f64 + 0.5) * ds);
        let window = ((v_max * dt / dx).ceil() as usize).max(1).min(nx);
        for j_new in 0..n_pts {
            let x_new = j_new as f64 * dx - x_max;
            let lo = j_new.saturating_sub(window);
            let hi = (j_new + window).min(nx);
            let mut best = f64::INFINITY;
            let mut consider = |y: f64, c_at_y: f64| {
                let v = (x_new - y) / dt;
                let x_mid = 0.5 * (x_new + y);
                let c = c_at_y + 0.5 * v * v * dt - potential(t_mid, x_mid) * dt;
                if c < best {
                    best = c;
                }
            };
            for j_old in lo..=hi {
                let c_mid = cost[j_old];
                consider(j_old as f64 * dx - x_max, c_mid);
                // Interior candidate from the local quadratic fit of the
                // value function; reproduces smooth cost exactly where
                // linear interpolation would leave an O(dx^2/dt) chord gap
                // per step.
                if j_old == 0 || j_old == nx {
                    continue;
                }
                let (c_lo, c_hi) = (cost[j_old - 1], cost[j_old + 1]);
                let y_j = j_old as f64 * dx - x_max;
                let slope = (c_hi - c_lo) / (2.0 * dx);
                let curv = (c_hi - 2.0 * c_mid + c_lo) / (dx * dx);
                let denom = curv + 1.0 / dt;
                if denom <= 0.0 {
                    continue; // concave fit: endpoints already covered
                }
                // d/dy [c_mid + slope (y - y_j) + curv (y - y_j)^2 / 2
                //       + (x_new - y)^2 / (2 dt)] = 0
                let y_star = ((x_new - y_j) / dt - slope) / denom + y_j;
                if (y_star - y_j).abs() < dx {
                    let d = y_star - y_j;
                    let fit = c_mid + slope * d + 0.5 * curv * d * d;
                    // A genuine interior dip of a smooth value function
                    // stays within a fraction of the local data range;
                    // anything deeper is a fit artifact at a kink.
                    let lo3 = c_lo.min(c_mid).min(c_hi);
                    let hi3 = c_lo.max(c_mid).max(c_hi);
                    consider(y_star, fit.max(lo3 - 0.5 * (hi3 - lo3)));
                }
            }
            next[j_new] = best;
        }
        std::mem::swap(&mut cost, &mut next);
    }
    // linear interpolation of the final column at the exact target abscissa
    let j = (target.floor() as usize).min(nx - 1);
    let frac = target - j as f64;
    Ok(-((1.0 - frac) * cost[j] + frac * cost[j + 1]))
}

/// Dynamic-programming oracle for `hlim` with the limit potential. The
/// starting value function is minimized over the two-parameter family
/// `a l(u) + b u`, which contains the singular `u^(2/3)` behavior that
/// origin-leaving paths of this potential actually have; straight chords
/// alone would leave an O(t0^(1/3)) bias at nodes near the lens boundary.
pub fn dp_oracle(profile: &LensProfile, t: f64, x: f64, nt: usize, nx: usize) -> Result<f64> {
    let pot = |u: f64, z: f64| devlim_at(profile, u, z).unwrap_or(0.0);
    let init = |t0: f64, y: f64| {
        let action_of = |alpha: f64| {
            let beta = (y - alpha * profile.ell(t0)) / t0;
            integrate_endpoint_graded(
                |u| {
                    let g = alpha * profile.ell(u) + beta * u;
                    let gdot = alpha * profile.elldot(u) + beta;
                    0.5 * gdot * gdot - pot(u, g)
                },
                0.0,
                t0,
                4,
            )
        };
        // coarse scan, then golden-section refinement around the best sample
        let n_scan = 41usize;
        let h = 2.6 / (n_scan - 1) as f64;
        let mut best = f64::INFINITY;
        let mut best_a = 0.0;
        for i in 0..n_scan {
            let a = -1.3 + h * i as f64;
            let v = action_of(a);
            if v < best {
                best = v;
                best_a = a;
            }
        }
        // the action is smooth and locally quadratic in alpha; 15 golden
        // steps shrink the bracket well past the value's sensitivity
        let (mut lo, mut hi) = (best_a - h, best_a + h);
        for _ in 0..15 {
            let m1 = lo + 0.381_966 * (hi - lo);
            let m2 = hi - 0.381_966 * (hi - lo);
            if action_of(m1) <= action_of(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        best.min(action_of(0.5 * (lo + hi)))
    };
    dp_lattice_with_init(&pot, t, x, nt, nx, &init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile() -> &'static LensProfile {
        crate::test_util::profile()
    }

    #[test]
    fn interior_coefficient() {
        let p = profile();
        let ell1 = p.ell(1.0);
        let g = geodesic_to(p, 1.0, ell1 / 2.0).unwrap();
        match g.kind {
            GeodesicKind::Interior { a } => assert_relative_eq!(a, 0.5, epsilon = 1e-12),
            _ => panic!("expected interior"),
        }
    }

    #[test]
    fn terminal_point_convention() {
        let p = profile();
        let g = geodesic_to(p, 2.0, 0.0).unwrap();
        assert_eq!(g.kind, GeodesicKind::Interior { a: 0.0 });
    }

    #[test]
    fn exterior_tangency() {
        let p = profile();
        let g = geodesic_to(p, 1.0, 2.0).unwrap();
        assert!(g.tangency_residual(&p).abs() < 1e-8);
        if let GeodesicKind::Exterior { t_exit, sign } = g.kind {
            assert_eq!(sign, 1.0);
            assert!(t_exit > 0.0 && t_exit < 1.0);
            // derivative matching at the kink
            let before = sign * p.elldot(t_exit - 1e-9);
            let after = g.deriv(p, t_exit + 1e-9);
            assert_relative_eq!(before, after, epsilon = 1e-5);
        } else {
            panic!("expected exterior");
        }
    }

    #[test]
    fn exterior_below_the_lens_apex() {
        // target beyond the lens but with |x| < l(1): tangency lies past t = 1
        let p = profile();
        let g = geodesic_to(p, 1.9, 0.3).unwrap();
        if let GeodesicKind::Exterior { t_exit, .. } = g.kind {
            assert!(t_exit > 1.0 && t_exit < 1.9);
            assert!(g.tangency_residual(&p).abs() < 1e-8);
        } else {
            panic!("expected exterior");
        }
    }

    #[test]
    fn far_target_out_of_range() {
        let p = profile();
        assert!(geodesic_to(p, 1.0, 1e6).is_err());
    }

    #[test]
    fn action_of_lens_paths_is_minus_one() {
        let p = profile();
        for &a in &[-1.0, -0.5, 0.0, 0.5, 1.0] {
            let geo = Geodesic {
                kind: GeodesicKind::Interior { a },
                target_t: 2.0,
                target_x: 0.0,
            };
            let v = action(p, &geo, 0.0, 2.0).unwrap();
            assert!((v + 1.0).abs() < 2e-3, "a = {a}: action = {v}");
        }
    }

    #[test]
    fn empty_interval_action_is_zero() {
        let p = profile();
        let geo = geodesic_to(p, 1.5, 0.1).unwrap();
        assert_eq!(action(p, &geo, 0.7, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn hlim_terminal_value() {
        let p = profile();
        let v = hlim_at(p, 2.0, 0.0).unwrap();
        assert!((v + 1.0).abs() < 1e-3, "hlim(2,0) = {v}");
    }

    #[test]
    fn hlim_symmetry() {
        let p = profile();
        for &(t, x) in &[(0.5, 0.2), (1.0, 0.9), (1.5, 2.5), (2.0, 0.4)] {
            assert_relative_eq!(
                hlim_at(p, t, x).unwrap(),
                hlim_at(p, t, -x).unwrap(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn hlim_parabola_offset_bounded() {
        let p = profile();
        let mut sup = 0.0f64;
        for i in 1..=20 {
            let t = 0.1 * i as f64;
            for j in 0..=16 {
                let x = -4.0 + 0.5 * j as f64;
                let h = hlim_at(p, t, x).unwrap();
                sup = sup.max((h + x * x / (2.0 * t)).abs());
            }
        }
        assert!(sup < 5.0, "sup |hlim + x^2/2t| = {sup}");
    }

    #[test]
    fn increment_identity_along_geodesics() {
        let p = profile();
        // 10 deterministic sub-segments across both geodesic kinds
        let targets = [(2.0, 0.0), (1.0, 0.25), (1.6, 1.2), (0.8, 2.0), (1.9, 0.3)];
        let mut checked = 0;
        for &(t, x) in &targets {
            let geo = geodesic_to(p, t, x).unwrap();
            for &frac in &[0.3, 0.6] {
                let s = frac * t;
                let y = geo.value(p, s);
                let lhs = hlim_at(p, t, x).unwrap() - hlim_at(p, s, y).unwrap();
                let rhs = action(p, &geo, s, t).unwrap();
                assert!(
                    (lhs - rhs).abs() < 1e-3,
                    "increment mismatch at ({t},{x}) s={s}: {lhs} vs {rhs}"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 10);
    }

    #[test]
    fn dp_free_action_is_straight_line() {
        // zero potential: the lattice minimum is the straight line, -x^2/(2t)
        let v = dp_lattice(|_, _| 0.0, 1.5, 0.9, 128, 128).unwrap();
        assert!((v + 0.9f64.powi(2) / 3.0).abs() < 0.01, "free dp = {v}");
    }

    #[test]
    fn dp_oracle_terminal_value() {
        let p = profile();
        let v = dp_oracle(p, 2.0, 0.0, 256, 256).unwrap();
        assert!((v + 1.0).abs() < 0.05, "dp(2,0) = {v}");
    }

    #[test]
    fn dp_oracle_matches_hlim() {
        let p = profile();
        for &(t, x) in &[(1.0, 0.3), (1.0, 2.0)] {
            let dp = dp_oracle(p, t, x, 256, 256).unwrap();
            let h = hlim_at(p, t, x).unwrap();
            assert!((dp - h).abs() < 0.05, "({t},{x}): dp {dp} vs hlim {h}");
        }
    }

    #[test]
    fn dp_rejects_coarse_lattice() {
        let p = profile();
        assert!(dp_oracle(p, 1.0, 0.0, 16, 16).is_err());
    }
}
