//! Small shared numerical kernels: quadrature, interpolation, root finding,
//! an embedded Runge-Kutta stepper, and a tridiagonal solve.

use crate::error::{Result, WntError};

/// Nodes and weights for 16-point Gauss-Legendre on [-1, 1].
const GL16_X: [f64; 8] = [
    0.09501250983763744,
    0.28160355077925891,
    0.45801677765722739,
    0.61787624440264375,
    0.75540440835500303,
    0.86563120238783174,
    0.94457502307323258,
    0.98940093499164993,
];
const GL16_W: [f64; 8] = [
    0.18945061045506850,
    0.18260341504492359,
    0.16915651939500254,
    0.14959598881657673,
    0.12462897125553387,
    0.09515851168249278,
    0.06225352393864789,
    0.02715245941175409,
];

/// Composite 16-point Gauss-Legendre over `n_panels` equal panels of [a, b].
pub fn gauss_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n_panels: usize) -> f64 {
    let h = (b - a) / n_panels as f64;
    let mut total = 0.0;
    for p in 0..n_panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for k in 0..8 {
            acc += GL16_W[k] * (f(mid - half * GL16_X[k]) + f(mid + half * GL16_X[k]));
        }
        total += acc * half;
    }
    total
}

/// Integrate `f` over [a, b] with cubic grading toward both endpoints.
///
/// The interval is split at its midpoint and each half is mapped through a
/// cubic substitution (u = a + v^3 on the left, u = b - w^3 on the right),
/// which turns endpoint singularities up to u^(-2/3) into bounded mapped
/// integrands; the u^(-2/3) case itself becomes constant and is integrated
/// exactly. Steeper grading would be counterproductive: evaluation points
/// would land inside the floating-point cancellation zone of `b - u`.
pub fn integrate_endpoint_graded<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n_panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mid = 0.5 * (a + b);
    let half = mid - a;
    let vmax = half.cbrt();
    let left = gauss_panels(|v| 3.0 * v * v * f(a + v * v * v), 0.0, vmax, n_panels);
    let right = gauss_panels(|w| 3.0 * w * w * f(b - w * w * w), 0.0, vmax, n_panels);
    left + right
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    // depth 30 bounds the work on integrands that never meet the tolerance
    recurse(f, a, b, fa, fm, fb, whole, tol, 30)
}

/// Brent's method on a bracketing interval [a, b] with f(a) f(b) <= 0.
pub fn brent<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(WntError::OutOfRange {
            context: "brent: root not bracketed".into(),
            lo: a,
            hi: b,
        });
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut mflag = true;
    let mut d = c;
    for _ in 0..max_iter {
        if fb == 0.0 || (b - a).abs() < tol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = 0.25 * (3.0 * a + b);
        let cond = !(s > lo.min(b) && s < lo.max(b))
            || (mflag && (s - b).abs() >= 0.5 * (b - c).abs())
            || (!mflag && (s - b).abs() >= 0.5 * (c - d).abs())
            || (mflag && (b - c).abs() < tol)
            || (!mflag && (c - d).abs() < tol);
        if cond {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

/// Monotone cubic (Fritsch-Carlson) interpolant on a strictly increasing grid.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n);
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            d[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        }
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            if d[i - 1] * d[i] <= 0.0 {
                m[i] = 0.0;
            } else {
                // Brodlie weighted harmonic mean keeps the interpolant monotone.
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        // Clamp endpoint slopes (Fritsch-Carlson condition).
        for (i, mi) in [(0usize, 0usize), (n - 1, n - 2)] {
            if d[mi] == 0.0 {
                m[i] = 0.0;
            } else {
                let alpha = m[i] / d[mi];
                if alpha < 0.0 {
                    m[i] = 0.0;
                } else if alpha > 3.0 {
                    m[i] = 3.0 * d[mi];
                }
            }
        }
        MonotoneCubic {
            xs,
            ys,
            slopes: m,
        }
    }

    /// Hermite interpolant with caller-supplied node slopes. Monotonicity is
    /// the caller's responsibility; exact slopes buy an extra order over the
    /// Brodlie estimates when they are available analytically.
    pub fn with_slopes(xs: Vec<f64>, ys: Vec<f64>, slopes: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n && slopes.len() == n);
        MonotoneCubic { xs, ys, slopes }
    }

    fn segment(&self, x: f64) -> usize {
        match self
            .xs
            .binary_search_by(|probe| probe.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// One adaptive Cash-Karp RK4(5) integration of a scalar ODE dy/dt = f(t, y)
/// from (t0, y0) to t1, with mixed absolute/relative local tolerance.
pub fn rk45_integrate<F: Fn(f64, f64) -> f64>(
    f: &F,
    t0: f64,
    y0: f64,
    t1: f64,
    tol: f64,
) -> Result<f64> {
    const A: [f64; 5] = [1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
    const B: [[f64; 5]; 5] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
        [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [
            1631.0 / 55296.0,
            175.0 / 512.0,
            575.0 / 13824.0,
            44275.0 / 110592.0,
            253.0 / 4096.0,
        ],
    ];
    const C5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
    const C4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        1.0 / 4.0,
    ];

    if t1 == t0 {
        return Ok(y0);
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = dir * ((t1 - t0).abs() / 16.0).min(1e-3).max(1e-12);
    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > 2_000_000 {
            return Err(WntError::SolverFailure {
                context: "rk45: step budget exhausted".into(),
                residual: (t1 - t).abs(),
                location: t,
            });
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k = [0.0f64; 6];
        k[0] = f(t, y);
        for s in 1..6 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys += h * B[s - 1][j] * kj;
            }
            k[s] = f(t + A[s - 1] * h, ys);
        }
        let mut y5 = y;
        let mut y4 = y;
        for j in 0..6 {
            y5 += h * C5[j] * k[j];
            y4 += h * C4[j] * k[j];
        }
        let scale = tol * (1.0 + y.abs());
        let err = (y5 - y4).abs();
        if err <= scale || h.abs() < 1e-14 {
            t += h;
            y = y5;
            let grow = if err > 0.0 {
                0.9 * (scale / err).powf(0.2)
            } else {
                5.0
            };
            h *= grow.clamp(0.2, 5.0);
        } else {
            h *= (0.9 * (scale / err).powf(0.25)).clamp(0.1, 0.9);
        }
    }
    Ok(y)
}

/// Thomas algorithm for a tridiagonal system; `diag` is overwritten.
/// Bands: `lower[i]` multiplies x[i-1] in row i, `upper[i]` multiplies x[i+1].
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &mut [f64],
    upper: &[f64],
    rhs: &mut [f64],
) {
    let n = diag.len();
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_panels_polynomial_exact() {
        let v = gauss_panels(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 4);
        // exact: x^4/4 - x^2 + x over [-1,3]
        assert_relative_eq!(v, 16.0, epsilon = 1e-12);
    }

    #[test]
    fn graded_quadrature_handles_inverse_two_thirds() {
        // int_0^1 u^(-2/3) du = 3
        let v = integrate_endpoint_graded(|u| u.powf(-2.0 / 3.0), 0.0, 1.0, 16);
        assert_relative_eq!(v, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn graded_quadrature_handles_right_endpoint() {
        // int_0^2 (2-u)^(-2/3) du = 3 * 2^(1/3). The mapped integrand is
        // constant, but evaluating 2 - u near u = 2 loses relative accuracy
        // to cancellation, so machine precision is out of reach here.
        let v = integrate_endpoint_graded(|u| (2.0 - u).powf(-2.0 / 3.0), 0.0, 2.0, 16);
        assert_relative_eq!(v, 3.0 * 2.0f64.cbrt(), epsilon = 1e-7);
    }

    #[test]
    fn graded_quadrature_square_root_endpoint_converges() {
        // int_0^2 (2-u)^(-1/2) du = 2 sqrt(2); outside the exactness class,
        // so only first-order-in-panel-count accuracy is claimed.
        let coarse = integrate_endpoint_graded(|u| (2.0 - u).powf(-0.5), 0.0, 2.0, 8);
        let fine = integrate_endpoint_graded(|u| (2.0 - u).powf(-0.5), 0.0, 2.0, 64);
        let exact = 2.0 * 2.0f64.sqrt();
        assert!((fine - exact).abs() < (coarse - exact).abs());
        assert!((fine - exact).abs() < 1e-6, "fine error {}", fine - exact);
    }

    #[test]
    fn adaptive_simpson_smooth() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert_relative_eq!(v, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn brent_finds_sqrt2() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert_relative_eq!(r, 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn monotone_cubic_reproduces_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let c = MonotoneCubic::new(xs, ys);
        assert_relative_eq!(c.eval(3.7), 8.4, epsilon = 1e-12);
    }

    #[test]
    fn rk45_exponential() {
        let y = rk45_integrate(&|_, y| -y, 0.0, 1.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(y, (-2.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn tridiagonal_solve() {
        // symmetric [-1, 2, -1] system, rhs picked so x = [1,2,3]
        let lower = vec![0.0, -1.0, -1.0];
        let mut diag = vec![2.0, 2.0, 2.0];
        let upper = vec![-1.0, -1.0, 0.0];
        let mut rhs = vec![0.0, 0.0, 4.0];
        solve_tridiagonal(&lower, &mut diag, &upper, &mut rhs);
        assert_relative_eq!(rhs[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(rhs[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(rhs[2], 3.0, epsilon = 1e-12);
    }
}
