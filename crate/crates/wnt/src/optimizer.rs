//! Forward-backward solver for the constrained variational problem at
//! finite scale: minimize half the squared L2 norm of the potential subject
//! to the point constraint h(2, 0) = -1 on the forward field.
//!
//! The stationarity system couples the forward equation for h with a
//! backward transport equation whose terminal data is a multiplier-scaled
//! delta at the constrained point; at a fixed point the potential equals the
//! backward density. We iterate damped Picard sweeps, re-tuning the
//! multiplier by bisection inside every sweep.

use crate::error::{Result, WntError};
use crate::limit_shape::{devlim_at, LensProfile};
use crate::pde::{
    heat_kernel, sample_devlim, solve_adjoint, solve_forward_h, Field, Lattice, Potential,
    SolverOpts,
};
use serde::Serialize;
use std::fs;
use std::io::Write as IoWrite;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStart {
    /// Start from the sampled limit potential (the default; the minimizer
    /// approaches it for large scales).
    LimitShape,
    /// Start from the zero potential (fallback).
    Zero,
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizerOpts {
    pub lattice: Lattice,
    /// Picard damping; 1 is undamped.
    pub omega: f64,
    pub max_iter: usize,
    /// Convergence threshold for both the relative update norm and the
    /// constraint residual.
    pub tol: f64,
    pub warm_start: WarmStart,
    pub solver: SolverOpts,
    /// Bisection steps per sweep for the multiplier.
    pub mu_iter: usize,
}

impl MinimizerOpts {
    pub fn new(lattice: Lattice) -> Self {
        MinimizerOpts {
            lattice,
            omega: 0.3,
            max_iter: 40,
            tol: 1e-3,
            warm_start: WarmStart::LimitShape,
            solver: SolverOpts::default(),
            mu_iter: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
    pub update_norm: f64,
    pub mu: f64,
}

#[derive(Debug)]
pub struct MinimizerResult {
    pub dev: Potential,
    pub field: Field,
    pub mu: f64,
    pub constraint_residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Half the squared discrete L2 norm of the potential.
pub fn objective(dev: &Potential) -> f64 {
    let n = dev.l2_norm();
    0.5 * n * n
}

/// Discrete L2 distance to the limit potential sampled on the same lattice.
pub fn l2_gap(dev: &Potential, profile: &LensProfile) -> f64 {
    let lat = dev.lattice;
    let (dt, dx) = (lat.dt(), lat.dx());
    let mut s = 0.0;
    for i in 0..lat.nt {
        let t = lat.t(i);
        for j in 0..lat.nx {
            let lim = if t <= 0.0 || t >= 2.0 {
                0.0
            } else {
                devlim_at(profile, t, lat.x(j)).unwrap_or(0.0)
            };
            let d = dev.values[lat.idx(i, j)] - lim;
            s += d * d;
        }
    }
    (s * dt * dx).sqrt()
}

fn center_value(field: &Field) -> f64 {
    field.values[field.lattice.idx(field.lattice.nt - 1, field.lattice.center())]
}

fn blend(old: &Potential, new: &Potential, omega: f64) -> Potential {
    let mut out = old.clone();
    for (o, n) in out.values.iter_mut().zip(&new.values) {
        *o = (1.0 - omega) * *o + omega * n;
    }
    out
}

/// One Picard sweep at a fixed multiplier: backward density from the current
/// field, damped blend into the potential, forward re-solve. Returns the
/// candidate potential, its field, and the constraint residual h(2,0) + 1.
fn sweep(
    dev: &Potential,
    field: &Field,
    lambda: f64,
    mu: f64,
    opts: &MinimizerOpts,
) -> Result<(Potential, Field, f64)> {
    let rho = solve_adjoint(field, mu, &opts.solver)?;
    let cand = blend(dev, &rho, opts.omega);
    let f = solve_forward_h(&cand, lambda, &opts.solver)?;
    let resid = center_value(&f) + 1.0;
    Ok((cand, f, resid))
}

pub fn solve_minimizer(
    profile: &LensProfile,
    lambda: f64,
    opts: &MinimizerOpts,
) -> Result<MinimizerResult> {
    if lambda < 1.0 {
        return Err(WntError::Domain(format!("lambda must be >= 1, got {lambda}")));
    }
    // the constraint must sit strictly below the unforced solution
    if (-lambda).exp() >= heat_kernel(2.0, 0.0, lambda) {
        return Err(WntError::Domain(format!(
            "degenerate constraint: e^-lambda = {:.6e} is not below the free value {:.6e} at lambda = {lambda}",
            (-lambda).exp(),
            heat_kernel(2.0, 0.0, lambda)
        )));
    }
    let lat = opts.lattice;
    let mut dev = match opts.warm_start {
        WarmStart::LimitShape => sample_devlim(profile, lat),
        WarmStart::Zero => Potential::zeros(lat),
    };
    let mut field = solve_forward_h(&dev, lambda, &opts.solver)?;
    let mut trace = Vec::new();
    let mut mu: f64 = -1.0;

    for k in 0..opts.max_iter {
        // Bracket the multiplier: the residual decreases as mu moves away
        // from zero (stronger negative forcing pushes h(2,0) down).
        let mut s_lo = 0.0;
        let (d0, f0, r0) = sweep(&dev, &field, lambda, 0.0, opts)?;
        let mut best = (d0, f0, 0.0);
        if r0 > 0.0 {
            let mut s_hi = mu.abs().max(0.5);
            let mut grow = 0;
            loop {
                let (d, f, r) = sweep(&dev, &field, lambda, -s_hi, opts)?;
                if r <= 0.0 {
                    best = (d, f, -s_hi);
                    break;
                }
                s_lo = s_hi;
                s_hi *= 2.0;
                grow += 1;
                if grow > 40 {
                    return Err(WntError::Infeasible(format!(
                        "multiplier bracket exhausted at mu = {:.3e} (residual still {r:.3e})",
                        -s_hi
                    )));
                }
            }
            // bisection on s = -mu
            for _ in 0..opts.mu_iter {
                let s_mid = 0.5 * (s_lo + s_hi);
                let (d, f, r) = sweep(&dev, &field, lambda, -s_mid, opts)?;
                if r > 0.0 {
                    s_lo = s_mid;
                } else {
                    s_hi = s_mid;
                }
                best = (d, f, -s_mid);
                if r.abs() < 0.2 * opts.tol {
                    break;
                }
            }
        }
        // if even mu = 0 overshoots, the damped relaxation toward zero is
        // the best admissible move this sweep
        let (cand, cand_field, mu_new) = best;
        let resid = center_value(&cand_field) + 1.0;

        // relative update norm
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in cand.values.iter().zip(&dev.values) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        let update_norm = (num / den.max(1e-24)).sqrt();

        dev = cand;
        field = cand_field;
        mu = mu_new;
        trace.push(TraceRow {
            iteration: k,
            objective: objective(&dev),
            residual: resid.abs(),
            update_norm,
            mu,
        });
        if update_norm < opts.tol && resid.abs() < opts.tol {
            return Ok(MinimizerResult {
                constraint_residual: resid.abs(),
                objective: objective(&dev),
                iterations: k + 1,
                dev,
                field,
                mu,
                trace,
            });
        }
    }
    let tail: Vec<String> = trace
        .iter()
        .rev()
        .take(5)
        .map(|r| {
            format!(
                "iter {}: obj {:.6e} resid {:.3e} update {:.3e} mu {:.4}",
                r.iteration, r.objective, r.residual, r.update_norm, r.mu
            )
        })
        .collect();
    let last = trace.last().map(|r| r.residual.max(r.update_norm)).unwrap_or(f64::NAN);
    Err(WntError::NonConvergence {
        context: format!("minimizer sweeps stalled; recent trace: [{}]", tail.join("; ")),
        iterations: opts.max_iter,
        residual: last,
    })
}

/// Scale the sampled limit potential by the factor that makes the forward
/// solve hit the constraint; a feasible competitor for optimality checks.
pub fn scaled_limit_competitor(
    profile: &LensProfile,
    lambda: f64,
    opts: &MinimizerOpts,
) -> Result<(Potential, f64)> {
    let base = sample_devlim(profile, opts.lattice);
    let eval = |a: f64| -> Result<f64> {
        let mut dev = base.clone();
        for v in dev.values.iter_mut() {
            *v *= a;
        }
        let f = solve_forward_h(&dev, lambda, &opts.solver)?;
        Ok(center_value(&f) + 1.0)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut r_hi = eval(hi)?;
    let mut grow = 0;
    while r_hi > 0.0 {
        lo = hi;
        hi *= 2.0;
        r_hi = eval(hi)?;
        grow += 1;
        if grow > 20 {
            return Err(WntError::Infeasible(
                "competitor scaling cannot reach the constraint".into(),
            ));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    let mut dev = base;
    for v in dev.values.iter_mut() {
        *v *= a;
    }
    Ok((dev, a))
}

#[derive(Serialize)]
struct ResultJson {
    mu: f64,
    objective: f64,
    residual: f64,
    iterations: usize,
    grid: GridJson,
    lambda: f64,
    seed: u64,
}

#[derive(Serialize)]
struct GridJson {
    nt: usize,
    nx: usize,
    l: f64,
}

/// Write the result bundle: dev.csv, h.csv, trace.csv, result.json.
pub fn write_bundle(result: &MinimizerResult, seed: u64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dev_f = fs::File::create(dir.join("dev.csv"))?;
    result.dev.write_csv(dev_f, "dev")?;
    let h_f = fs::File::create(dir.join("h.csv"))?;
    result.field.write_csv(h_f)?;
    let mut tr = fs::File::create(dir.join("trace.csv"))?;
    writeln!(tr, "iteration,objective,residual,update_norm,mu")?;
    for r in &result.trace {
        writeln!(
            tr,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.iteration, r.objective, r.residual, r.update_norm, r.mu
        )?;
    }
    let json = ResultJson {
        mu: result.mu,
        objective: result.objective,
        residual: result.constraint_residual,
        iterations: result.iterations,
        grid: GridJson {
            nt: result.field.lattice.nt,
            nx: result.field.lattice.nx,
            l: result.field.lattice.l,
        },
        lambda: result.field.lambda,
        seed,
    };
    let mut jf = fs::File::create(dir.join("result.json"))?;
    jf.write_all(serde_json::to_string_pretty(&json).unwrap().as_bytes())?;
    jf.write_all(b"\n")?;
    Ok(())
}
