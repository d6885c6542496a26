//! Finite-difference solvers on the truncated slab [0,2] x [-L,L]:
//! the forward viscous Hamilton-Jacobi equation for the log-field h,
//! its backward Fokker-Planck adjoint, and a short perturbation-series
//! cross-check of the forward solve.
//!
//! The forward solver works in the offset variable phi = h - h_free, where
//! h_free is the exact log heat kernel. With a zero potential phi stays
//! identically zero, so the delta initial layer costs no accuracy.

use crate::error::{Result, WntError};
use crate::limit_shape::{devlim_at, LensProfile};
use crate::numerics::solve_tridiagonal;
use std::io::{Read as IoRead, Write};

pub const SNAPSHOT_MAGIC: u64 = 0x574e_5446_4c44_0001;

/// Uniform spacetime lattice over [0,2] x [-L,L]; values are stored
/// row-major, one row per time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub nt: usize,
    pub nx: usize,
    pub l: f64,
}

impl Lattice {
    pub fn new(nt: usize, nx: usize, l: f64) -> Result<Self> {
        if nt < 2 || nx < 3 || !(l > 0.0) {
            return Err(WntError::Contract(format!(
                "lattice must be at least 2x3 with positive half-width, got {nt}x{nx}, L = {l}"
            )));
        }
        Ok(Lattice { nt, nx, l })
    }
    pub fn dt(&self) -> f64 {
        2.0 / (self.nt - 1) as f64
    }
    pub fn dx(&self) -> f64 {
        2.0 * self.l / (self.nx - 1) as f64
    }
    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }
    pub fn x(&self, j: usize) -> f64 {
        -self.l + j as f64 * self.dx()
    }
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nx + j
    }
    /// Node index nearest to x = 0.
    pub fn center(&self) -> usize {
        ((self.nx - 1) as f64 / 2.0).round() as usize
    }
}

/// Spacetime potential on a lattice.
#[derive(Debug, Clone)]
pub struct Potential {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl Potential {
    pub fn zeros(lattice: Lattice) -> Self {
        Potential {
            values: vec![0.0; lattice.nt * lattice.nx],
            lattice,
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(lattice: Lattice, f: F) -> Self {
        let mut values = Vec::with_capacity(lattice.nt * lattice.nx);
        for i in 0..lattice.nt {
            for j in 0..lattice.nx {
                values.push(f(lattice.t(i), lattice.x(j)));
            }
        }
        Potential { lattice, values }
    }

    /// L2 norm sqrt(sum v^2 dt dx) over the whole slab.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_upto(2.0)
    }

    /// L2 norm restricted to rows with t <= t_max.
    pub fn l2_norm_upto(&self, t_max: f64) -> f64 {
        let (dt, dx) = (self.lattice.dt(), self.lattice.dx());
        let mut s = 0.0;
        for i in 0..self.lattice.nt {
            if self.lattice.t(i) > t_max + 1e-12 {
                break;
            }
            for j in 0..self.lattice.nx {
                let v = self.values[self.lattice.idx(i, j)];
                s += v * v;
            }
        }
        (s * dt * dx).sqrt()
    }

    /// Bilinear interpolation; zero outside the box.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let lat = self.lattice;
        if t < 0.0 || t > 2.0 || x < -lat.l || x > lat.l {
            return 0.0;
        }
        let (dt, dx) = (lat.dt(), lat.dx());
        let fi = (t / dt).min((lat.nt - 1) as f64 - 1e-12);
        let fj = ((x + lat.l) / dx).min((lat.nx - 1) as f64 - 1e-12);
        let (i, j) = (fi as usize, fj as usize);
        let (a, b) = (fi - i as f64, fj - j as f64);
        let v00 = self.values[lat.idx(i, j)];
        let v01 = self.values[lat.idx(i, j + 1)];
        let v10 = self.values[lat.idx(i + 1, j)];
        let v11 = self.values[lat.idx(i + 1, j + 1)];
        (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11)
    }

    /// Linear-in-time interpolation at a lattice column.
    fn eval_col(&self, t: f64, j: usize) -> f64 {
        let lat = self.lattice;
        let dt = lat.dt();
        let fi = (t / dt).clamp(0.0, (lat.nt - 1) as f64 - 1e-12);
        let i = fi as usize;
        let a = fi - i as f64;
        (1.0 - a) * self.values[lat.idx(i, j)] + a * self.values[lat.idx(i + 1, j)]
    }

    pub fn write_csv<W: Write>(&self, mut w: W, value_name: &str) -> Result<()> {
        writeln!(w, "t,x,{value_name}")?;
        for i in 0..self.lattice.nt {
            for j in 0..self.lattice.nx {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    self.lattice.t(i),
                    self.lattice.x(j),
                    self.values[self.lattice.idx(i, j)]
                )?;
            }
        }
        Ok(())
    }
}

/// Log-scale field h(t, x) with its scale and initial-layer time.
#[derive(Debug, Clone)]
pub struct Field {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub lambda: f64,
    pub t0: f64,
}

/// Exact log heat kernel (1/lambda) log of sqrt(lambda/2 pi t) e^{-lambda x^2/2t}.
pub fn h_free(t: f64, x: f64, lambda: f64) -> f64 {
    -x * x / (2.0 * t) + (lambda / (2.0 * std::f64::consts::PI * t)).ln() / (2.0 * lambda)
}

/// Heat kernel at unit scale, hk(t, x) = e^{lambda h_free}^(1/...): the
/// kernel of d/dt = (1/2 lambda) d^2/dx^2 with total mass one.
pub fn heat_kernel(t: f64, x: f64, lambda: f64) -> f64 {
    (lambda / (2.0 * std::f64::consts::PI * t)).sqrt() * (-lambda * x * x / (2.0 * t)).exp()
}

impl Field {
    pub fn h_at(&self, t: f64, x: f64) -> f64 {
        // bilinear, clamped to the slab
        let tmp = Potential {
            lattice: self.lattice,
            values: self.values.clone(),
        };
        tmp.eval(t.clamp(0.0, 2.0), x.clamp(-self.lattice.l, self.lattice.l))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let tmp = Potential {
            lattice: self.lattice,
            values: self.values.clone(),
        };
        tmp.write_csv(w, "h")
    }

    /// Binary snapshot: magic, nt, nx as u64; lambda, t0, L as f64; all
    /// little-endian, followed by row-major f64 values.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&SNAPSHOT_MAGIC.to_le_bytes())?;
        w.write_all(&(self.lattice.nt as u64).to_le_bytes())?;
        w.write_all(&(self.lattice.nx as u64).to_le_bytes())?;
        w.write_all(&self.lambda.to_le_bytes())?;
        w.write_all(&self.t0.to_le_bytes())?;
        w.write_all(&self.lattice.l.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: IoRead>(mut r: R) -> Result<Self> {
        let mut buf8 = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut buf8)?;
            Ok(u64::from_le_bytes(buf8))
        };
        let magic = next_u64(&mut r)?;
        if magic != SNAPSHOT_MAGIC {
            return Err(WntError::Parse(format!(
                "bad snapshot magic {magic:#018x}"
            )));
        }
        let nt = next_u64(&mut r)? as usize;
        let nx = next_u64(&mut r)? as usize;
        let next_f64 = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let lambda = next_f64(&mut r)?;
        let t0 = next_f64(&mut r)?;
        let l = next_f64(&mut r)?;
        let lattice = Lattice::new(nt, nx, l)?;
        let mut values = vec![0.0; nt * nx];
        for v in values.iter_mut() {
            *v = next_f64(&mut r)?;
        }
        Ok(Field {
            lattice,
            values,
            lambda,
            t0,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOpts {
    /// Initial-layer time; the delta data is replaced by the exact kernel here.
    pub t0: f64,
    /// Advective Courant number for substep selection.
    pub cfl: f64,
    /// Hard cap on substeps per solve; exceeding it is a step-size error.
    pub max_substeps: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            t0: 0.01,
            cfl: 0.4,
            max_substeps: 2_000_000,
        }
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Godunov numerical Hamiltonian for +(1/2)(dh/dx)^2 on the right-hand side,
/// with second-order limited one-sided gradients. Boundary entries are left
/// at zero (Dirichlet rows are never stepped).
fn hamiltonian(w: &[f64], dx: f64, out: &mut [f64]) {
    let n = w.len();
    let mut d2 = vec![0.0; n];
    for j in 1..n - 1 {
        d2[j] = (w[j + 1] - 2.0 * w[j] + w[j - 1]) / (dx * dx);
    }
    d2[0] = d2[1];
    d2[n - 1] = d2[n - 2];
    for j in 1..n - 1 {
        let pm = (w[j] - w[j - 1]) / dx + 0.5 * dx * minmod(d2[j - 1], d2[j]);
        let pp = (w[j + 1] - w[j]) / dx - 0.5 * dx * minmod(d2[j], d2[j + 1]);
        let a = pm.min(0.0);
        let b = pp.max(0.0);
        out[j] = 0.5 * (a * a).max(b * b);
    }
    out[0] = 0.0;
    out[n - 1] = 0.0;
}

struct ForwardWorkspace {
    h: Vec<f64>,
    hf: Vec<f64>,
    ham_h: Vec<f64>,
    ham_f: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
}

/// Source term of the offset equation: Godunov Hamiltonian of h_free + phi
/// minus the same discretization applied to h_free, plus the potential.
/// Using one discretization for both keeps phi identically zero when dev = 0.
fn offset_source(
    dev: &Potential,
    phi: &[f64],
    t: f64,
    lambda: f64,
    ws: &mut ForwardWorkspace,
    out: &mut [f64],
) {
    let lat = dev.lattice;
    let dx = lat.dx();
    for j in 0..lat.nx {
        ws.hf[j] = h_free(t, lat.x(j), lambda);
        ws.h[j] = ws.hf[j] + phi[j];
    }
    hamiltonian(&ws.h, dx, &mut ws.ham_h);
    hamiltonian(&ws.hf, dx, &mut ws.ham_f);
    for j in 1..lat.nx - 1 {
        out[j] = ws.ham_h[j] - ws.ham_f[j] + dev.eval_col(t, j);
    }
    out[0] = 0.0;
    out[lat.nx - 1] = 0.0;
}

/// Implicit diffusion solve: (I - coef * Dxx) phi_new = rhs on the interior,
/// phi = 0 at both walls.
fn diffuse_implicit(coef_over_dx2: f64, rhs_full: &[f64], ws: &mut ForwardWorkspace, out: &mut [f64]) {
    let n = rhs_full.len();
    let m = n - 2;
    let r = coef_over_dx2;
    for k in 0..m {
        ws.lower[k] = -r;
        ws.diag[k] = 1.0 + 2.0 * r;
        ws.upper[k] = -r;
        ws.rhs[k] = rhs_full[k + 1];
    }
    solve_tridiagonal(
        &ws.lower[..m],
        &mut ws.diag[..m],
        &ws.upper[..m],
        &mut ws.rhs[..m],
    );
    out[0] = 0.0;
    out[n - 1] = 0.0;
    out[1..n - 1].copy_from_slice(&ws.rhs[..m]);
}

/// Forward solve of dh/dt = (1/2 lambda) h_xx + (1/2) h_x^2 + dev with delta
/// initial data regularized at t0 and far-field data pinned to h_free.
///
/// Time stepping is a diffusion-implicit trapezoidal predictor-corrector on
/// the offset phi = h - h_free; the advective stiffness of h_free near t0
/// (gradients ~ L/t) is handled by Courant-limited substeps.
pub fn solve_forward_h(dev: &Potential, lambda: f64, opts: &SolverOpts) -> Result<Field> {
    if lambda < 1.0 {
        return Err(WntError::Domain(format!("lambda must be >= 1, got {lambda}")));
    }
    if !(opts.t0 > 0.0 && opts.t0 <= 0.05) {
        return Err(WntError::Domain(format!(
            "t0 must lie in (0, 0.05], got {}",
            opts.t0
        )));
    }
    let lat = dev.lattice;
    let (nx, dx) = (lat.nx, lat.dx());
    let dcoef = 1.0 / (2.0 * lambda);

    let mut ws = ForwardWorkspace {
        h: vec![0.0; nx],
        hf: vec![0.0; nx],
        ham_h: vec![0.0; nx],
        ham_f: vec![0.0; nx],
        lower: vec![0.0; nx],
        diag: vec![0.0; nx],
        upper: vec![0.0; nx],
        rhs: vec![0.0; nx],
    };
    let mut phi = vec![0.0; nx];
    let mut phi_star = vec![0.0; nx];
    let mut n1 = vec![0.0; nx];
    let mut n2 = vec![0.0; nx];
    let mut rhs_full = vec![0.0; nx];

    let mut values = vec![0.0; lat.nt * nx];
    // rows at or below the initial layer carry the layer itself
    let mut i_start = lat.nt;
    for i in 0..lat.nt {
        if lat.t(i) > opts.t0 {
            i_start = i;
            break;
        }
        for j in 0..nx {
            values[lat.idx(i, j)] = h_free(opts.t0, lat.x(j), lambda);
        }
    }

    let mut t = opts.t0;
    let mut substeps = 0usize;
    for i in i_start..lat.nt {
        let t_row = lat.t(i);
        while t < t_row - 1e-14 {
            // advective Courant limit from the current gradients
            let mut vmax: f64 = 1.0;
            for j in 0..nx - 1 {
                let p = ((h_free(t, lat.x(j + 1), lambda) + phi[j + 1])
                    - (h_free(t, lat.x(j), lambda) + phi[j]))
                    / dx;
                vmax = vmax.max(p.abs());
            }
            let dt = (opts.cfl * dx / vmax).min(t_row - t);
            substeps += 1;
            if substeps > opts.max_substeps {
                return Err(WntError::StepSize(format!(
                    "forward solve needs more than {} substeps (Courant limit {:.3e} at t = {:.6})",
                    opts.max_substeps,
                    opts.cfl * dx / vmax,
                    t
                )));
            }
            // predictor: backward-Euler diffusion, explicit source
            offset_source(dev, &phi, t, lambda, &mut ws, &mut n1);
            for j in 0..nx {
                rhs_full[j] = phi[j] + dt * n1[j];
            }
            diffuse_implicit(dt * dcoef / (dx * dx), &rhs_full, &mut ws, &mut phi_star);
            // corrector: trapezoidal in both diffusion and source
            offset_source(dev, &phi_star, t + dt, lambda, &mut ws, &mut n2);
            for j in 1..nx - 1 {
                let lap = (phi[j + 1] - 2.0 * phi[j] + phi[j - 1]) / (dx * dx);
                rhs_full[j] = phi[j] + 0.5 * dt * (n1[j] + n2[j]) + 0.5 * dt * dcoef * lap;
            }
            rhs_full[0] = 0.0;
            rhs_full[nx - 1] = 0.0;
            diffuse_implicit(0.5 * dt * dcoef / (dx * dx), &rhs_full, &mut ws, &mut phi);
            t += dt;
        }
        t = t_row;
        for j in 0..nx {
            let h = h_free(t_row, lat.x(j), lambda) + phi[j];
            if !h.is_finite() {
                return Err(WntError::Divergence {
                    t: t_row,
                    x: lat.x(j),
                    what: "forward field is not finite".into(),
                });
            }
            values[lat.idx(i, j)] = h;
        }
    }
    Ok(Field {
        lattice: lat,
        values,
        lambda,
        t0: opts.t0,
    })
}

/// Backward Fokker-Planck adjoint with drift dh/dx, run from the terminal
/// data mu * delta at (2, 0) down to t0. The flux-form implicit update has
/// zero wall fluxes, so the spatial integral is conserved to round-off and
/// the M-matrix structure preserves the sign of the terminal data.
pub fn solve_adjoint(h: &Field, mu: f64, opts: &SolverOpts) -> Result<Potential> {
    if mu > 0.0 {
        return Err(WntError::Domain(format!(
            "adjoint multiplier must be <= 0, got {mu}"
        )));
    }
    let lat = h.lattice;
    let (nx, dx) = (lat.nx, lat.dx());
    let dcoef = 1.0 / (2.0 * h.lambda);
    let h_pot = Potential {
        lattice: lat,
        values: h.values.clone(),
    };

    let mut rho = vec![0.0; nx];
    rho[lat.center()] = mu / dx;

    let mut values = vec![0.0; lat.nt * nx];
    let last = lat.nt - 1;
    for j in 0..nx {
        values[lat.idx(last, j)] = rho[j];
    }

    let mut v_half = vec![0.0; nx - 1];
    let mut lower = vec![0.0; nx];
    let mut diag = vec![0.0; nx];
    let mut upper = vec![0.0; nx];
    let mut rhs = vec![0.0; nx];
    let mut substeps = 0usize;

    for i in (0..last).rev() {
        let t_hi = lat.t(i + 1);
        let t_lo = lat.t(i);
        let mut t = t_hi;
        while t > t_lo + 1e-14 {
            // drift at the half nodes, evaluated at the current time
            let mut vmax: f64 = 1.0;
            for j in 0..nx - 1 {
                let v = (h_pot.eval_col(t, j + 1) - h_pot.eval_col(t, j)) / dx;
                v_half[j] = v;
                vmax = vmax.max(v.abs());
            }
            let dt = (opts.cfl * dx / vmax).min(t - t_lo);
            substeps += 1;
            if substeps > opts.max_substeps {
                return Err(WntError::StepSize(format!(
                    "adjoint solve needs more than {} substeps (drift Courant limit {:.3e} at t = {:.6})",
                    opts.max_substeps,
                    opts.cfl * dx / vmax,
                    t
                )));
            }
            let a = dt / dx;
            let d_over = dcoef / dx;
            for j in 0..nx {
                let (vp_r, vm_r) = if j < nx - 1 {
                    (v_half[j].max(0.0), v_half[j].min(0.0))
                } else {
                    (0.0, 0.0)
                };
                let (vp_l, vm_l) = if j > 0 {
                    (v_half[j - 1].max(0.0), v_half[j - 1].min(0.0))
                } else {
                    (0.0, 0.0)
                };
                let right_open = (j < nx - 1) as i32 as f64;
                let left_open = (j > 0) as i32 as f64;
                diag[j] = 1.0
                    + a * (right_open * (vp_r + d_over) - left_open * (vm_l - d_over));
                upper[j] = if j < nx - 1 {
                    a * (vm_r - d_over)
                } else {
                    0.0
                };
                lower[j] = if j > 0 { -a * (vp_l + d_over) } else { 0.0 };
                rhs[j] = rho[j];
            }
            solve_tridiagonal(&lower, &mut diag, &upper, &mut rhs);
            rho.copy_from_slice(&rhs);
            t -= dt;
        }
        for j in 0..nx {
            values[lat.idx(i, j)] = rho[j];
        }
        // below the initial layer the field is frozen; stop transporting
        if t_lo <= h.t0 {
            for ii in (0..i).rev() {
                for j in 0..nx {
                    values[lat.idx(ii, j)] = rho[j];
                }
            }
            break;
        }
    }
    Ok(Potential {
        lattice: lat,
        values,
    })
}

/// Linear-equation route for the forward solve: substitute Z = K * psi with
/// K the exact kernel, advance psi by Crank-Nicolson with upwinded drift
/// -x/t and multiplicative source lambda * dev, and return h = h_free +
/// (1/lambda) log psi. Used as an independent consistency path.
pub fn solve_forward_cole_hopf(dev: &Potential, lambda: f64, opts: &SolverOpts) -> Result<Field> {
    if lambda < 1.0 {
        return Err(WntError::Domain(format!("lambda must be >= 1, got {lambda}")));
    }
    if !(opts.t0 > 0.0 && opts.t0 <= 0.05) {
        return Err(WntError::Domain(format!(
            "t0 must lie in (0, 0.05], got {}",
            opts.t0
        )));
    }
    let lat = dev.lattice;
    let (nx, dx) = (lat.nx, lat.dx());
    let dcoef = 1.0 / (2.0 * lambda);

    let mut psi = vec![1.0; nx];
    let mut values = vec![0.0; lat.nt * nx];
    let mut i_start = lat.nt;
    for i in 0..lat.nt {
        if lat.t(i) > opts.t0 {
            i_start = i;
            break;
        }
        for j in 0..nx {
            values[lat.idx(i, j)] = h_free(opts.t0, lat.x(j), lambda);
        }
    }

    // row-action of the spatial operator A psi = dcoef psi_xx - (x/t) psi_x
    // + lambda dev psi, with first-order upwinding on the drift
    let apply = |t: f64, psi: &[f64], out: &mut [f64]| {
        for j in 1..nx - 1 {
            let x = lat.x(j);
            let drift = -x / t;
            let lap = (psi[j + 1] - 2.0 * psi[j] + psi[j - 1]) / (dx * dx);
            // the term enters as +drift * psi_x, so the transport velocity is
            // -drift: positive drift pulls information from the right
            let dpsi = if drift >= 0.0 {
                (psi[j + 1] - psi[j]) / dx
            } else {
                (psi[j] - psi[j - 1]) / dx
            };
            out[j] = dcoef * lap + drift * dpsi + lambda * dev.eval_col(t, j) * psi[j];
        }
        out[0] = 0.0;
        out[nx - 1] = 0.0;
    };

    let mut a_psi = vec![0.0; nx];
    let mut lower = vec![0.0; nx];
    let mut diag = vec![0.0; nx];
    let mut upper = vec![0.0; nx];
    let mut rhs = vec![0.0; nx];
    let mut t = opts.t0;
    let mut substeps = 0usize;

    for i in i_start..lat.nt {
        let t_row = lat.t(i);
        while t < t_row - 1e-14 {
            let vmax = (lat.l / t).max(1.0);
            let dt = (opts.cfl * dx / vmax).min(t_row - t);
            substeps += 1;
            if substeps > opts.max_substeps {
                return Err(WntError::StepSize(format!(
                    "linear-route solve needs more than {} substeps at t = {:.6}",
                    opts.max_substeps, t
                )));
            }
            let t_new = t + dt;
            apply(t, &psi, &mut a_psi);
            // Crank-Nicolson: (I - dt/2 A(t_new)) psi_new = psi + dt/2 A(t) psi;
            // Dirichlet psi = 1 at the walls folded into the right-hand side.
            let m = nx - 2;
            for k in 0..m {
                let j = k + 1;
                let x = lat.x(j);
                let drift = -x / t_new;
                let r = 0.5 * dt;
                // same upwind orientation as `apply`: +drift * psi_x with a
                // forward difference for drift >= 0, backward otherwise
                let (dl, dd, du);
                if drift >= 0.0 {
                    dl = dcoef / (dx * dx);
                    dd = -2.0 * dcoef / (dx * dx) - drift / dx + lambda * dev.eval_col(t_new, j);
                    du = dcoef / (dx * dx) + drift / dx;
                } else {
                    dl = dcoef / (dx * dx) - drift / dx;
                    dd = -2.0 * dcoef / (dx * dx) + drift / dx + lambda * dev.eval_col(t_new, j);
                    du = dcoef / (dx * dx);
                }
                lower[k] = -r * dl;
                diag[k] = 1.0 - r * dd;
                upper[k] = -r * du;
                rhs[k] = psi[j] + 0.5 * dt * a_psi[j];
            }
            // fold the unit wall values through the band entries
            rhs[0] -= lower[0];
            rhs[m - 1] -= upper[m - 1];
            solve_tridiagonal(&lower[..m], &mut diag[..m], &upper[..m], &mut rhs[..m]);
            psi[1..nx - 1].copy_from_slice(&rhs[..m]);
            psi[0] = 1.0;
            psi[nx - 1] = 1.0;
            t = t_new;
        }
        t = t_row;
        for j in 0..nx {
            if psi[j] <= 0.0 || !psi[j].is_finite() {
                return Err(WntError::Divergence {
                    t: t_row,
                    x: lat.x(j),
                    what: format!("kernel ratio left the positive cone ({})", psi[j]),
                });
            }
            values[lat.idx(i, j)] = h_free(t_row, lat.x(j), lambda) + psi[j].ln() / lambda;
        }
    }
    Ok(Field {
        lattice: lat,
        values,
        lambda,
        t0: opts.t0,
    })
}

/// Sample the limit potential on a lattice; the singular first and last
/// instants are recorded as zero (they carry no L2 mass on the lattice).
pub fn sample_devlim(profile: &LensProfile, lattice: Lattice) -> Potential {
    Potential::from_fn(lattice, |t, x| {
        if t <= 0.0 || t >= 2.0 {
            0.0
        } else {
            devlim_at(profile, t, x).unwrap_or(0.0)
        }
    })
}

/// Partial sum of the perturbation series for the kernel-normalized field at
/// unit scale, with the analytic tail bound.
#[derive(Debug, Clone, Copy)]
pub struct DuhamelSum {
    /// hk(t,x) * (1 + sum of the first n_max Monte Carlo moments).
    pub value: f64,
    /// Analytic bound on everything past n_max.
    pub tail_bound: f64,
    /// Monte Carlo standard error of `value`.
    pub std_error: f64,
    /// Set when the tail terms overflow before decaying.
    pub tail_diverged: bool,
}

/// Series cross-check at unit scale: the n-th correction equals
/// hk(t,x) E[S^n / n!] for S the potential integrated along a pinned bridge
/// from (0,0) to (t,x), so one family of bridge samples estimates every
/// order at once. Tail terms are bounded by
/// pi^(1/4) (n! Gamma((n+1)/2))^(-1/2) (2^(-1/2) t^(1/4) |dev|_2)^n hk(t,x).
pub fn duhamel_partial_sum(
    dev: &Potential,
    t: f64,
    x: f64,
    n_max: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<DuhamelSum> {
    if n_max > 4 {
        return Err(WntError::Domain(format!(
            "series order capped at 4, got {n_max}"
        )));
    }
    if !(t > 0.0 && t <= 2.0) {
        return Err(WntError::Domain(format!("time must lie in (0, 2], got {t}")));
    }
    let hk = heat_kernel(t, x, 1.0);
    let n_steps = 256;
    let du = t / n_steps as f64;

    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut times = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        times.push(k as f64 * du);
    }
    let mut path = vec![0.0; n_steps + 1];
    for k in 0..mc_samples {
        crate::feynman_kac::bridge_positions(1.0, t, x, 0.0, 0.0, seed, k as u64, &mut path);
        // trapezoid of dev along the path; `path` runs backward from (t, x)
        let mut s_int = 0.0;
        for (m, &u) in times.iter().enumerate() {
            let w = if m == 0 || m == n_steps { 0.5 } else { 1.0 };
            s_int += w * dev.eval(u, path[n_steps - m]) * du;
        }
        let mut term = 0.0;
        let mut fact = 1.0;
        let mut pow = 1.0;
        for n in 1..=n_max {
            fact *= n as f64;
            pow *= s_int;
            term += pow / fact;
        }
        let delta = term - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (term - mean);
    }
    let var = if mc_samples > 1 {
        m2 / (mc_samples - 1) as f64
    } else {
        0.0
    };
    let std_error = hk * (var / mc_samples as f64).sqrt();
    let value = hk * (1.0 + mean);

    let norm = dev.l2_norm_upto(t);
    let c = norm * t.powf(0.25) / std::f64::consts::SQRT_2;
    let mut tail = 0.0;
    let mut tail_diverged = false;
    if norm > 0.0 {
        let ln_pref = 0.25 * std::f64::consts::PI.ln() + hk.ln();
        for n in (n_max + 1)..=400 {
            let ln_term = ln_pref + n as f64 * c.ln()
                - 0.5
                    * (statrs::function::gamma::ln_gamma(n as f64 + 1.0)
                        + statrs::function::gamma::ln_gamma((n as f64 + 1.0) / 2.0));
            if ln_term > 700.0 {
                tail_diverged = true;
                tail = f64::INFINITY;
                break;
            }
            let term = ln_term.exp();
            tail += term;
            if term < 1e-18 * tail.max(1e-300) {
                break;
            }
        }
    }
    Ok(DuhamelSum {
        value,
        tail_bound: tail,
        std_error,
        tail_diverged,
    })
}
