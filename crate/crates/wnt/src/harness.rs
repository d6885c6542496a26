//! Desk-scale verification runs: convergence of the finite-scale field to
//! the limit shape over a region, empirical Holder-ratio scans, one-sided
//! time continuity, and a machine-readable JSON report.
//!
//! The underlying convergence statement is asymptotic with no rate, so the
//! checks are monotone-trend assertions plus absolute caps at the largest
//! scale; every tolerance is a configuration value echoed into the report.

use crate::error::Result;
use crate::geodesics::hlim_at;
use crate::limit_shape::LensProfile;
use crate::optimizer::{solve_minimizer, MinimizerOpts};
use crate::pde::{Field, Lattice};
use serde::Serialize;
use serde_json::json;

pub const HOLDER_EXPONENT_BASE: f64 = 2.0 / 13.0;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Region {
    pub delta: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_t: usize,
    pub n_x: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReportRow {
    pub lambda: f64,
    pub sup_error: f64,
    pub signed_min: f64,
    pub holder_max: f64,
    pub time_min: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceReport {
    pub lambdas: Vec<f64>,
    pub region: Region,
    pub rows: Vec<ReportRow>,
    pub config_echo: serde_json::Value,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HarnessOpts {
    pub lattice: Lattice,
    pub minimizer: MinimizerOpts,
    /// Region evaluation grid.
    pub region_n: (usize, usize),
    /// Offset from the base exponent in the Holder scan.
    pub holder_delta: f64,
    /// Largest time gap in the one-sided continuity scan.
    pub u_max: f64,
    /// Record wall-clock times; off by default so reports are byte-stable.
    pub include_timings: bool,
}

impl HarnessOpts {
    pub fn new(lattice: Lattice) -> Self {
        HarnessOpts {
            lattice,
            minimizer: MinimizerOpts::new(lattice),
            region_n: (64, 64),
            holder_delta: 0.05,
            u_max: 0.1,
            include_timings: false,
        }
    }
}

/// Max over slice pairs of |h(t,x) - h(t,x')| / |x - x'|^(2/13 - delta),
/// over separations in [2 dx, 1/2]. Finite output is the (weak) empirical
/// regularity check; there is nothing to certify beyond boundedness.
pub fn holder_exponent_scan(field: &Field, delta: f64, t_slices: &[f64]) -> f64 {
    let lat = field.lattice;
    let dx = lat.dx();
    let exponent = HOLDER_EXPONENT_BASE - delta;
    let mut worst = 0.0f64;
    for &t in t_slices {
        let i = ((t / lat.dt()).round() as usize).min(lat.nt - 1);
        for j in 0..lat.nx {
            for k in (j + 1)..lat.nx {
                let sep = (k - j) as f64 * dx;
                if sep < 2.0 * dx - 1e-12 {
                    continue;
                }
                if sep > 0.5 {
                    break;
                }
                let dh = (field.values[lat.idx(i, j)] - field.values[lat.idx(i, k)]).abs();
                worst = worst.max(dh / sep.powf(exponent));
            }
        }
    }
    worst
}

/// Min over s < t (gap at most u_max, both in [delta, 2]) and |x| <=
/// 1/delta of h(s, x) - h(t, x). One-sided time continuity predicts this
/// stays above a vanishing negative slack.
pub fn time_monotonicity_check(field: &Field, delta: f64, u_max: f64) -> f64 {
    let lat = field.lattice;
    let dt = lat.dt();
    let x_cap = (1.0 / delta).min(lat.l);
    let mut worst = f64::INFINITY;
    let gap_rows = ((u_max / dt).floor() as usize).max(1);
    for i_s in 0..lat.nt {
        let s = lat.t(i_s);
        if s < delta {
            continue;
        }
        for i_t in (i_s + 1)..=(i_s + gap_rows).min(lat.nt - 1) {
            for j in 0..lat.nx {
                if lat.x(j).abs() > x_cap {
                    continue;
                }
                let d = field.values[lat.idx(i_s, j)] - field.values[lat.idx(i_t, j)];
                worst = worst.min(d);
            }
        }
    }
    worst
}

/// Run the minimizer at each scale and measure the field against the limit
/// shape over [delta, 2] x [-1/delta, 1/delta] (clipped to the slab).
pub fn convergence_table(
    profile: &LensProfile,
    lambdas: &[f64],
    delta: f64,
    opts: &HarnessOpts,
    seed: u64,
) -> Result<ConvergenceReport> {
    let region = Region {
        delta,
        t_lo: delta,
        t_hi: 2.0,
        x_lo: -(1.0 / delta).min(opts.lattice.l),
        x_hi: (1.0 / delta).min(opts.lattice.l),
        n_t: opts.region_n.0,
        n_x: opts.region_n.1,
    };
    // limit-shape column evaluated once; grids are identical across scales
    let mut hlim_grid = vec![0.0; region.n_t * region.n_x];
    for a in 0..region.n_t {
        let t = region.t_lo + (region.t_hi - region.t_lo) * a as f64 / (region.n_t - 1) as f64;
        for b in 0..region.n_x {
            let x = region.x_lo + (region.x_hi - region.x_lo) * b as f64 / (region.n_x - 1) as f64;
            hlim_grid[a * region.n_x + b] = hlim_at(profile, t, x)?;
        }
    }
    let mut rows = Vec::new();
    let mut incomplete = false;
    let t_slices = [0.5, 1.0, 1.5, 2.0];
    for &lambda in lambdas {
        let started = std::time::Instant::now();
        let solved = solve_minimizer(profile, lambda, &opts.minimizer);
        let result = match solved {
            Ok(r) => r,
            Err(_) => {
                incomplete = true;
                continue;
            }
        };
        let mut sup = 0.0f64;
        let mut signed_min = f64::INFINITY;
        for a in 0..region.n_t {
            let t =
                region.t_lo + (region.t_hi - region.t_lo) * a as f64 / (region.n_t - 1) as f64;
            for b in 0..region.n_x {
                let x = region.x_lo
                    + (region.x_hi - region.x_lo) * b as f64 / (region.n_x - 1) as f64;
                let diff = result.field.h_at(t, x) - hlim_grid[a * region.n_x + b];
                sup = sup.max(diff.abs());
                signed_min = signed_min.min(diff);
            }
        }
        let holder_max = holder_exponent_scan(&result.field, opts.holder_delta, &t_slices);
        let time_min = time_monotonicity_check(&result.field, delta, opts.u_max);
        rows.push(ReportRow {
            lambda,
            sup_error: sup,
            signed_min,
            holder_max,
            time_min,
            runtime_s: if opts.include_timings {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
    }
    let config_echo = json!({
        "delta": delta,
        "grid": {"nt": opts.lattice.nt, "nx": opts.lattice.nx, "l": opts.lattice.l},
        "region_n": [region.n_t, region.n_x],
        "holder_delta": opts.holder_delta,
        "u_max": opts.u_max,
        "omega": opts.minimizer.omega,
        "tol": opts.minimizer.tol,
        "max_iter": opts.minimizer.max_iter,
        "t0": opts.minimizer.solver.t0,
        "seed": seed,
        "timings": opts.include_timings,
        "incomplete": incomplete,
    });
    Ok(ConvergenceReport {
        lambdas: lambdas.to_vec(),
        region,
        rows,
        config_echo,
    })
}
