//! The lens profile and the explicit limit potential.
//!
//! The profile solves the singular ODE
//! `r' = sqrt(2/pi) r^2 (r - pi/2)^(1/2)` with `r(1) = pi/2`, extended to
//! `(0,1)` by the reflection `r(t) = r(2-t)`. The square root degenerates at
//! `t = 1`, so the march is carried out in `u = (r - pi/2)^(1/2)`, which
//! satisfies `u' = sqrt(2/pi) (u^2 + pi/2)^2 / 2` -- a polynomial right side,
//! regular on all of `(1, 2)`, with the exact seed `u(1) = 0`.
//!
//! The limit potential is
//! `devlim(t,x) = -(1/2pi) r(t) (1 - x^2/l(t)^2)_+`, supported in the lens
//! region `|x| <= l(t)`.

use std::io::{BufRead, Write};

use crate::error::{Result, WntError};
use crate::numerics::{adaptive_simpson, brent, gauss_panels, integrate_endpoint_graded, rk45_integrate, MonotoneCubic};

/// `(2/3)^(2/3) (pi/2)^(1/3)`, the coefficient of the `t^(-2/3)` blow-up of `r`.
pub fn r_blowup_constant() -> f64 {
    (2.0f64 / 3.0).powf(2.0 / 3.0) * (std::f64::consts::FRAC_PI_2).powf(1.0 / 3.0)
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Nodes closer than this to t in {0, 1, 2} are excluded from the residual
/// certification; the raw r'-residual is not a meaningful scale there.
pub const RESIDUAL_MARGIN: f64 = 0.05;

/// du/dt on (1,2) in the substituted variable u = (r - pi/2)^(1/2).
fn u_rhs(u: f64) -> f64 {
    let r = u * u + std::f64::consts::FRAC_PI_2;
    SQRT_2_OVER_PI * r * r / 2.0
}

/// Time as a function of the lens half-width, by separation of variables:
/// `2 - t = int_0^l sqrt(pi s / (2 - pi s)) ds`, substituted `s = q^2` so the
/// integrand is smooth away from `l = 2/pi`. Independent of the RK march;
/// used as the second route in the residual certification.
fn time_of_ell(ell: f64) -> f64 {
    // Separation of variables gives t = 2 - int_0^sqrt(l) 2 q^2
    // sqrt(pi/(2 - pi q^2)) dq; the substitution q = sqrt(2/pi) sin(theta)
    // removes the inverse-square-root endpoint and leaves (4/pi) sin^2.
    let pi = std::f64::consts::PI;
    let theta_max = (pi * ell / 2.0).min(1.0).sqrt().asin();
    let integral = adaptive_simpson(
        &|theta: f64| 4.0 / pi * theta.sin().powi(2),
        0.0,
        theta_max,
        1e-15,
    );
    2.0 - integral
}

/// Tabulated lens profile `r`, `l = 1/r`, and `l'` on a graded grid of [0, 2].
#[derive(Debug, Clone)]
pub struct LensProfile {
    grid_t: Vec<f64>,
    r_vals: Vec<f64>,
    ell_vals: Vec<f64>,
    elldot_vals: Vec<f64>,
    interp_order: usize,
    /// Interpolant of m = l^(3/2), which is near-linear at both endpoints.
    m_interp: MonotoneCubic,
    max_residual: f64,
}

impl LensProfile {
    pub fn grid_t(&self) -> &[f64] {
        &self.grid_t
    }
    pub fn r_vals(&self) -> &[f64] {
        &self.r_vals
    }
    pub fn ell_vals(&self) -> &[f64] {
        &self.ell_vals
    }
    pub fn elldot_vals(&self) -> &[f64] {
        &self.elldot_vals
    }
    pub fn interp_order(&self) -> usize {
        self.interp_order
    }
    /// Worst certified ODE residual over interior nodes (r'-units).
    pub fn max_ode_residual(&self) -> f64 {
        self.max_residual
    }

    /// Lens half-width l(t); zero outside (0, 2).
    pub fn ell(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= 2.0 {
            return 0.0;
        }
        self.m_interp.eval(t).max(0.0).powf(2.0 / 3.0)
    }

    /// r(t) = 1/l(t); infinite at the endpoints.
    pub fn r(&self, t: f64) -> f64 {
        let ell = self.ell(t);
        if ell == 0.0 {
            f64::INFINITY
        } else {
            1.0 / ell
        }
    }

    /// l'(t), evaluated through the ODE from the interpolated l.
    pub fn elldot(&self, t: f64) -> f64 {
        let ell = self.ell(t);
        if ell == 0.0 {
            return if t <= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        let rad = (1.0 / ell - std::f64::consts::FRAC_PI_2).max(0.0);
        let mag = SQRT_2_OVER_PI * rad.sqrt();
        if t < 1.0 {
            mag
        } else {
            -mag
        }
    }

    /// `int_0^2 r(u) du`, by endpoint-graded quadrature.
    pub fn integrate_r(&self) -> f64 {
        integrate_endpoint_graded(|t| self.r(t), 0.0, 2.0, 64)
    }

    /// `(1/2) ||devlim||_2^2` by direct 2-D quadrature (graded in t,
    /// Gauss-Legendre across the lens section in x).
    pub fn devlim_objective(&self) -> f64 {
        let section = |t: f64| {
            let ell = self.ell(t);
            let r = self.r(t);
            // int_{-l}^{l} devlim^2 dx = (r/(2pi))^2 * l * 16/15
            (r / (2.0 * std::f64::consts::PI)).powi(2) * ell * 16.0 / 15.0
        };
        0.5 * integrate_endpoint_graded(section, 0.0, 2.0, 64)
    }

    /// Export as CSV with header `t,r,ell,elldot`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,r,ell,elldot")?;
        for i in 0..self.grid_t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.grid_t[i], self.r_vals[i], self.ell_vals[i], self.elldot_vals[i]
            )?;
        }
        Ok(())
    }

    /// Re-import a profile written by [`LensProfile::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut grid_t = Vec::new();
        let mut r_vals = Vec::new();
        let mut ell_vals = Vec::new();
        let mut elldot_vals = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if idx == 0 {
                if line.trim() != "t,r,ell,elldot" {
                    return Err(WntError::Parse(format!("unexpected header: {line}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(WntError::Parse(format!("line {}: expected 4 fields", idx + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| WntError::Parse(format!("line {}: {e}", idx + 1)))
            };
            grid_t.push(parse(fields[0])?);
            r_vals.push(parse(fields[1])?);
            ell_vals.push(parse(fields[2])?);
            elldot_vals.push(parse(fields[3])?);
        }
        if grid_t.len() < 3 {
            return Err(WntError::Parse("profile CSV too short".into()));
        }
        let m_vals: Vec<f64> = ell_vals.iter().map(|l| l.powf(1.5)).collect();
        let m_interp = MonotoneCubic::new(grid_t.clone(), m_vals);
        Ok(LensProfile {
            grid_t,
            r_vals,
            ell_vals,
            elldot_vals,
            interp_order: 3,
            m_interp,
            max_residual: f64::NAN,
        })
    }
}

/// Options for [`build_lens_profile`]; `integ_tol` is the per-step tolerance
/// of the RK march.
#[derive(Debug, Clone, Copy)]
pub struct LensOptions {
    pub integ_tol: f64,
}

impl Default for LensOptions {
    fn default() -> Self {
        LensOptions { integ_tol: 1e-13 }
    }
}

/// Build the lens profile on a grid of about `n_nodes` points, certifying the
/// tabulated values against the separated (quadrature) form of the ODE to
/// within `tol` in r'-units at interior nodes.
pub fn build_lens_profile(n_nodes: usize, tol: f64) -> Result<LensProfile> {
    build_lens_profile_with(n_nodes, tol, LensOptions::default())
}

pub fn build_lens_profile_with(n_nodes: usize, tol: f64, opts: LensOptions) -> Result<LensProfile> {
    if n_nodes < 64 {
        return Err(WntError::Domain(format!(
            "n_nodes must be >= 64, got {n_nodes}"
        )));
    }
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(WntError::Domain(format!(
            "tol must lie in (0, 1e-4], got {tol}"
        )));
    }
    let pi = std::f64::consts::PI;
    let half_n = n_nodes / 2 + 1;

    // Half grid on [1, 2]: t = 2 - (1-w)^3 scaled so node spacing shrinks
    // like (2-t)^(2/3) toward the blow-up end.
    let mut half_t = Vec::with_capacity(half_n);
    for k in 0..half_n {
        let w = k as f64 / (half_n - 1) as f64;
        let g = 1.0 - w;
        half_t.push(2.0 - g * g * g);
    }
    half_t[0] = 1.0;
    *half_t.last_mut().unwrap() = 2.0;

    // March u = (r - pi/2)^(1/2) from the exact seed u(1) = 0. The last node
    // is t = 2 itself, where u blows up; it is pinned to l = 0 instead.
    let mut half_ell = vec![0.0f64; half_n];
    half_ell[0] = 2.0 / pi;
    let mut t_cur = 1.0;
    let mut u_cur = 0.0f64;
    for k in 1..half_n - 1 {
        let target = half_t[k];
        u_cur = rk45_integrate(&|_, u| u_rhs(u), t_cur, u_cur, target, opts.integ_tol)?;
        t_cur = target;
        half_ell[k] = 1.0 / (u_cur * u_cur + pi / 2.0);
    }
    half_ell[half_n - 1] = 0.0; // l(2) = 0 exactly

    // Mirror about t = 1 (t = 1 counted once, endpoints t = 0 and 2 included).
    let n = 2 * half_n - 1;
    let mut grid_t = vec![0.0f64; n];
    let mut ell_vals = vec![0.0f64; n];
    for k in 0..half_n {
        grid_t[half_n - 1 + k] = half_t[k];
        ell_vals[half_n - 1 + k] = half_ell[k];
        grid_t[half_n - 1 - k] = 2.0 - half_t[k];
        ell_vals[half_n - 1 - k] = half_ell[k];
    }
    let r_vals: Vec<f64> = ell_vals
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if i == 0 || i == n - 1 {
                f64::INFINITY
            } else if i == half_n - 1 {
                pi / 2.0 // anchor node, exact
            } else {
                1.0 / l
            }
        })
        .collect();
    let elldot_vals: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                f64::INFINITY
            } else if i == n - 1 {
                f64::NEG_INFINITY
            } else if i == half_n - 1 {
                0.0
            } else {
                let rad = (r_vals[i] - pi / 2.0).max(0.0);
                let mag = SQRT_2_OVER_PI * rad.sqrt(); // |l'| = sqrt(2/pi) (r - pi/2)^(1/2)
                if grid_t[i] < 1.0 {
                    mag
                } else {
                    -mag
                }
            }
        })
        .collect();

    let m_vals: Vec<f64> = ell_vals.iter().map(|l| l.powf(1.5)).collect();
    // m = l^(3/2) has the closed-form slope dm/dt = -+(3/2) sqrt(2/pi)
    // sqrt(1 - (pi/2) l), finite at every node including t in {0, 2}.
    let m_slopes: Vec<f64> = (0..n)
        .map(|i| {
            let mag = 1.5 * SQRT_2_OVER_PI * (1.0 - pi / 2.0 * ell_vals[i]).max(0.0).sqrt();
            if grid_t[i] < 1.0 {
                mag
            } else if grid_t[i] > 1.0 {
                -mag
            } else {
                0.0
            }
        })
        .collect();
    let m_interp = MonotoneCubic::with_slopes(grid_t.clone(), m_vals, m_slopes);

    // Certify against the separated form: recover l*(t_i) by inverting the
    // quadrature relation and compare the implied r' with the ODE right side.
    let mut max_residual = 0.0f64;
    let mut worst_t = f64::NAN;
    for i in 1..n - 1 {
        let t = grid_t[i];
        if t < RESIDUAL_MARGIN || (t - 1.0).abs() < RESIDUAL_MARGIN || 2.0 - t < RESIDUAL_MARGIN {
            continue;
        }
        let t_half = if t > 1.0 { t } else { 2.0 - t };
        let ell_i = ell_vals[i];
        let lo = (ell_i * 0.9).max(1e-12);
        let hi = (ell_i * 1.1).min(2.0 / pi - 1e-12);
        let ell_star = brent(|l| time_of_ell(l) - t_half, lo, hi, 1e-15, 200)?;
        let rhs = |r: f64| SQRT_2_OVER_PI * r * r * (r - pi / 2.0).max(0.0).sqrt();
        let residual = (rhs(1.0 / ell_i) - rhs(1.0 / ell_star)).abs();
        if residual > max_residual {
            max_residual = residual;
            worst_t = t;
        }
    }
    if max_residual > tol {
        return Err(WntError::SolverFailure {
            context: "lens profile ODE residual above tolerance".into(),
            residual: max_residual,
            location: worst_t,
        });
    }

    Ok(LensProfile {
        grid_t,
        r_vals,
        ell_vals,
        elldot_vals,
        interp_order: 3,
        m_interp,
        max_residual,
    })
}

/// The explicit limit potential `devlim(t, x)`.
///
/// Errors with [`WntError::Domain`] at t in {0, 2}, where r blows up.
pub fn devlim_at(profile: &LensProfile, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t < 2.0) {
        return Err(WntError::Domain(format!(
            "devlim is only defined for t strictly inside (0, 2); got t = {t}"
        )));
    }
    let ell = profile.ell(t);
    if x.abs() >= ell {
        return Ok(0.0);
    }
    let r = profile.r(t);
    Ok(-(r / (2.0 * std::f64::consts::PI)) * (1.0 - (x * x) / (ell * ell)))
}

/// `||devlim||_2` over `[0,2] x R`, by quadrature.
pub fn devlim_l2_norm(profile: &LensProfile) -> f64 {
    (2.0 * profile.devlim_objective()).sqrt()
}

/// `||devlim||_{L^2([0,t] x R)}`: the truncated-window norm used by the
/// Duhamel tail bound.
pub fn devlim_l2_norm_window(profile: &LensProfile, t_max: f64) -> f64 {
    let t_max = t_max.clamp(0.0, 2.0);
    let section = |t: f64| {
        let ell = profile.ell(t);
        let r = profile.r(t);
        (r / (2.0 * std::f64::consts::PI)).powi(2) * ell * 16.0 / 15.0
    };
    integrate_endpoint_graded(section, 0.0, t_max, 64).sqrt()
}

/// Fit the smallest constant c with |l'(t)| <= c (t^(-1/3) + (2-t)^(-1/3))
/// over the interior grid nodes.
pub fn fit_elldot_bound(profile: &LensProfile) -> f64 {
    let mut c = 0.0f64;
    for (i, &t) in profile.grid_t.iter().enumerate() {
        if i == 0 || i + 1 == profile.grid_t.len() {
            continue;
        }
        let envelope = t.powf(-1.0 / 3.0) + (2.0 - t).powf(-1.0 / 3.0);
        c = c.max(profile.elldot_vals[i].abs() / envelope);
    }
    c
}

/// Fit the smallest constant c with sup_x |devlim(t,x)| <= c (t^(-2/3) + (2-t)^(-2/3)).
pub fn fit_devlim_bound(profile: &LensProfile) -> f64 {
    let mut c = 0.0f64;
    for (i, &t) in profile.grid_t.iter().enumerate() {
        if i == 0 || i + 1 == profile.grid_t.len() {
            continue;
        }
        let envelope = t.powf(-2.0 / 3.0) + (2.0 - t).powf(-2.0 / 3.0);
        let sup = profile.r_vals[i] / (2.0 * std::f64::consts::PI);
        c = c.max(sup / envelope);
    }
    c
}

#[allow(dead_code)]
fn unused_gauss_reference() {
    // keep gauss_panels linked for doc purposes
    let _ = gauss_panels(|x| x, 0.0, 1.0, 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Independent oracle: separation of variables gives the parametric form
    /// t = 2 - (2 theta - sin 2 theta)/pi, l = (2/pi) sin^2 theta,
    /// theta in [0, pi/2] covering t in [1, 2].
    fn oracle_ell(t: f64) -> f64 {
        assert!((1.0..=2.0).contains(&t));
        let theta = brent(
            |th: f64| 2.0 - (2.0 * th - (2.0 * th).sin()) / PI - t,
            0.0,
            PI / 2.0,
            1e-15,
            300,
        )
        .unwrap();
        2.0 / PI * theta.sin().powi(2)
    }

    #[test]
    fn anchor_value_exact() {
        let p = build_lens_profile(512, 1e-8).unwrap();
        let mid = p.grid_t().iter().position(|&t| t == 1.0).unwrap();
        assert_eq!(p.r_vals()[mid], PI / 2.0);
        assert_relative_eq!(p.ell(1.0), 2.0 / PI, epsilon = 1e-10);
    }

    #[test]
    fn symmetry_exact_at_paired_nodes() {
        let p = build_lens_profile(256, 1e-8).unwrap();
        let n = p.grid_t().len();
        for i in 0..n {
            let j = n - 1 - i;
            assert_eq!(p.r_vals()[i].to_bits(), p.r_vals()[j].to_bits());
        }
    }

    #[test]
    fn profile_matches_separated_oracle() {
        let p = build_lens_profile(256, 1e-8).unwrap();
        for &t in &[1.1, 1.3, 1.5, 1.7, 1.9, 1.99] {
            assert_relative_eq!(p.ell(t), oracle_ell(t), epsilon = 1e-8);
        }
        // mirrored side
        assert_relative_eq!(p.ell(0.3), oracle_ell(1.7), epsilon = 1e-8);
    }

    #[test]
    fn series_matches_small_step_integration() {
        // r(1 + eps) - pi/2 ~ pi^3 eps^2 / 32 for eps = 1e-3, relative error < 1e-3.
        // Frozen oracle: the separated parametric form at t = 1.001 gives
        // r - pi/2 = 9.697905427e-7 * (1 + 3e-7); series predicts pi^3/32 * 1e-6.
        let eps = 1e-3;
        let r_oracle = 1.0 / oracle_ell(1.0 + eps);
        let predicted = PI.powi(3) * eps * eps / 32.0;
        let actual = r_oracle - PI / 2.0;
        assert!(
            ((actual - predicted) / actual).abs() < 1e-3,
            "series mismatch: actual {actual:.6e} predicted {predicted:.6e}"
        );
    }

    #[test]
    fn blow_up_ratio_at_smallest_node() {
        let p = build_lens_profile(512, 1e-8).unwrap();
        let t1 = p.grid_t()[1];
        let ratio = p.r_vals()[1] * t1.powf(2.0 / 3.0);
        let c = r_blowup_constant();
        assert_relative_eq!(c, 0.8872, epsilon = 2e-4);
        assert!(
            (ratio - c).abs() / c < 0.02,
            "asymptotic ratio {ratio} vs {c} at t = {t1:.3e}"
        );
    }

    #[test]
    fn residuals_below_tolerance() {
        let p = build_lens_profile(512, 1e-8).unwrap();
        assert!(p.max_ode_residual() < 1e-8);
    }

    #[test]
    fn integral_of_r_is_two_pi() {
        let p = build_lens_profile(512, 1e-8).unwrap();
        assert!((p.integrate_r() - 2.0 * PI).abs() < 1e-3);
    }

    #[test]
    fn devlim_objective_closed_form() {
        // (1/2)||devlim||^2 = 4/(15 pi), via the reduction
        // int (1-u^2)^2 du = 16/15 and int r = 2 pi.
        let p = build_lens_profile(512, 1e-8).unwrap();
        let expected = 4.0 / (15.0 * PI);
        assert!((p.devlim_objective() - expected).abs() < 1e-3);
    }

    #[test]
    fn devlim_point_values() {
        let p = build_lens_profile(256, 1e-8).unwrap();
        assert_relative_eq!(devlim_at(&p, 1.0, 0.0).unwrap(), -0.25, epsilon = 1e-9);
        assert_eq!(devlim_at(&p, 1.0, 1.0).unwrap(), 0.0);
        assert!(devlim_at(&p, 0.0, 0.0).is_err());
        assert!(devlim_at(&p, 2.0, 0.0).is_err());
    }

    #[test]
    fn devlim_symmetries_and_sign() {
        let p = build_lens_profile(256, 1e-8).unwrap();
        for &t in &[0.2, 0.7, 1.0, 1.4, 1.9] {
            for &x in &[0.0, 0.1, 0.35, 0.6, 1.5] {
                let v = devlim_at(&p, t, x).unwrap();
                assert!(v <= 0.0);
                assert_relative_eq!(v, devlim_at(&p, t, -x).unwrap(), epsilon = 1e-12);
                assert_relative_eq!(v, devlim_at(&p, 2.0 - t, x).unwrap(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn devlim_envelope_bound() {
        let p = build_lens_profile(256, 1e-8).unwrap();
        let c = fit_devlim_bound(&p);
        assert!(c.is_finite() && c > 0.0);
        let t = 0.05;
        let sup = devlim_at(&p, t, 0.0).unwrap().abs();
        assert!(sup <= c * (t.powf(-2.0 / 3.0) + (2.0f64 - t).powf(-2.0 / 3.0)) + 1e-12);
    }

    #[test]
    fn elldot_envelope_bound() {
        let p = build_lens_profile(256, 1e-8).unwrap();
        let c = fit_elldot_bound(&p);
        assert!(c.is_finite() && c > 0.0 && c < 10.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_lens_profile(32, 1e-8).is_err());
        assert!(build_lens_profile(256, 1e-3).is_err());
    }

    #[test]
    fn csv_round_trip_bit_identical() {
        let p = build_lens_profile(128, 1e-8).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = LensProfile::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        for i in 0..p.grid_t().len() {
            assert_eq!(p.grid_t()[i].to_bits(), q.grid_t()[i].to_bits());
            assert_eq!(p.ell_vals()[i].to_bits(), q.ell_vals()[i].to_bits());
            assert_eq!(p.r_vals()[i].to_bits(), q.r_vals()[i].to_bits());
            assert_eq!(p.elldot_vals()[i].to_bits(), q.elldot_vals()[i].to_bits());
        }
    }
}
