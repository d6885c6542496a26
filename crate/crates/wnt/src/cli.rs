//! Command-line front door. Every subcommand maps onto one public
//! operation; outputs go to the --out directory and a one-line summary is
//! printed to stdout.
//!
//! Configuration precedence: compiled defaults < --config key=value file <
//! explicit flags. The WNT_SEED environment variable overrides --seed.
//! Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
//! 4 I/O error.

use crate::error::{Result, WntError};
use crate::feynman_kac::{fk_estimate, GeodesicTilt, LineTilt, PerturbedTilt, Tilt};
use crate::geodesics::{geodesic_to, hlim_at, GeodesicKind};
use crate::harness::{convergence_table, holder_exponent_scan, HarnessOpts};
use crate::limit_shape::{build_lens_profile, LensProfile};
use crate::optimizer::{solve_minimizer, write_bundle, MinimizerOpts, WarmStart};
use crate::pde::{
    duhamel_partial_sum, sample_devlim, solve_forward_h, Field, Lattice, Potential, SolverOpts,
};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "wnt",
    about = "Weak-noise lower-tail toolkit: limit shape, geodesic action, \
             forward-backward solvers, and Monte Carlo cross-checks",
    version
)]
pub struct Cli {
    /// INI-style key=value config file; flags override its entries
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for file artifacts
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Time levels of the solver lattice (>= 2)
    #[arg(long)]
    pub nt: Option<usize>,
    /// Space nodes of the solver lattice (>= 3)
    #[arg(long)]
    pub nx: Option<usize>,
    /// Spatial half-width L of the slab [-L, L] (> 0)
    #[arg(long)]
    pub l: Option<f64>,
    /// Initial-layer time, in (0, 0.05]
    #[arg(long)]
    pub t0: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate the lens profile r, l, l' and write profile.csv
    Profile {
        /// Number of grid nodes (>= 64)
        #[arg(long)]
        nodes: Option<usize>,
        /// Certification threshold for the ODE residual
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Sample the limit potential on a lattice and write devlim.csv
    Devlim {
        #[command(flatten)]
        grid: GridArgs,
        /// Profile nodes used for the underlying tabulation
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Evaluate the limit shape at one point, or on a grid with --out
    Hlim {
        /// Evaluation time, in (0, 2]
        #[arg(long)]
        t: f64,
        /// Evaluation position
        #[arg(long)]
        x: f64,
        #[arg(long)]
        nodes: Option<usize>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Classify and report the geodesic to a target point
    Geodesic {
        /// Target time, in (0, 2]
        #[arg(long)]
        t: f64,
        /// Target position
        #[arg(long)]
        x: f64,
        #[arg(long)]
        nodes: Option<usize>,
        /// Path samples written to geodesic.csv when --out is given
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Monte Carlo bridge estimate of the exponential functional
    Fk {
        /// Scale parameter lambda (>= 1)
        #[arg(long)]
        lambda: Option<f64>,
        /// Later endpoint time
        #[arg(long)]
        t: Option<f64>,
        /// Later endpoint position
        #[arg(long)]
        x: Option<f64>,
        /// Earlier endpoint time
        #[arg(long)]
        s: Option<f64>,
        /// Earlier endpoint position
        #[arg(long)]
        y: Option<f64>,
        /// Number of bridge paths
        #[arg(long)]
        paths: Option<usize>,
        /// Time steps per path
        #[arg(long)]
        steps: Option<usize>,
        /// RNG seed (overridden by WNT_SEED)
        #[arg(long)]
        seed: Option<u64>,
        /// Potential: "devlim" or "zero"
        #[arg(long)]
        potential: Option<String>,
        /// Girsanov tilt lower bound instead: "line", "geodesic",
        /// or "geodesic+a" for the perturbed family
        #[arg(long)]
        tilt: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Perturbation-series evaluation with its analytic tail bound
    Duhamel {
        /// Evaluation time, in (0, 2]
        #[arg(long)]
        t: Option<f64>,
        /// Evaluation position
        #[arg(long)]
        x: Option<f64>,
        /// Series order (<= 4)
        #[arg(long)]
        nmax: Option<usize>,
        /// Monte Carlo samples
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Potential: "devlim" or "zero"
        #[arg(long)]
        potential: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Forward solve for the log-field; writes h.csv and field.bin
    Solve {
        /// Scale parameter lambda (>= 1)
        #[arg(long)]
        lambda: Option<f64>,
        /// Potential: "devlim" or "zero"
        #[arg(long)]
        potential: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Solve the constrained variational problem; writes the result bundle
    Minimize {
        /// Scale parameter lambda (>= 1, non-degenerate)
        #[arg(long)]
        lambda: Option<f64>,
        /// Picard damping in (0, 1]
        #[arg(long)]
        omega: Option<f64>,
        /// Sweep budget
        #[arg(long)]
        max_iter: Option<usize>,
        /// Convergence tolerance for residual and update norm
        #[arg(long)]
        tol: Option<f64>,
        /// Warm start: "devlim" or "zero"
        #[arg(long)]
        warm: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Convergence experiment across scales; writes report.json
    Converge {
        /// Comma-separated increasing scales, e.g. 2,4,8
        #[arg(long)]
        lambdas: Option<String>,
        /// Region parameter, in (0, 0.5]
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Record wall-clock times (breaks byte-determinism)
        #[arg(long, default_value_t = false)]
        timings: bool,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Empirical Holder-ratio scan of a stored field snapshot
    Holder {
        /// Binary field snapshot produced by `solve` or `minimize`
        #[arg(long)]
        field: PathBuf,
        /// Exponent offset delta (exponent is 2/13 - delta)
        #[arg(long)]
        delta: Option<f64>,
        /// Comma-separated time slices
        #[arg(long)]
        slices: Option<String>,
    },
}

/// key=value config lines; '#' and ';' start comments.
fn load_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with('[') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(WntError::Parse(format!(
                "{}:{}: expected key=value, got {:?}",
                path.display(),
                lineno + 1,
                raw
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

struct Settings {
    map: HashMap<String, String>,
}

impl Settings {
    fn get<T: std::str::FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.map.get(key) {
            Some(s) => s.parse::<T>().map_err(|_| {
                WntError::Parse(format!("config key {key}: cannot parse {s:?}"))
            }),
            None => Ok(default),
        }
    }
}

fn effective_seed(settings: &Settings, flag: Option<u64>) -> Result<u64> {
    if let Ok(env) = std::env::var("WNT_SEED") {
        return env
            .parse()
            .map_err(|_| WntError::Parse(format!("WNT_SEED: cannot parse {env:?}")));
    }
    settings.get("seed", flag, 0)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| WntError::Parse(format!("cannot parse list entry {p:?}")))
        })
        .collect()
}

fn lattice_from(settings: &Settings, grid: &GridArgs) -> Result<Lattice> {
    let nt = settings.get("nt", grid.nt, 201)?;
    let nx = settings.get("nx", grid.nx, 257)?;
    let l = settings.get("l", grid.l, 4.0)?;
    Lattice::new(nt, nx, l)
}

fn solver_from(settings: &Settings, grid: &GridArgs) -> Result<SolverOpts> {
    Ok(SolverOpts {
        t0: settings.get("t0", grid.t0, 0.01)?,
        ..SolverOpts::default()
    })
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn profile_cached(nodes: usize, tol: f64) -> Result<LensProfile> {
    build_lens_profile(nodes, tol)
}

fn potential_from(
    name: &str,
    profile: &LensProfile,
    lattice: Lattice,
) -> Result<Potential> {
    match name {
        "devlim" => Ok(sample_devlim(profile, lattice)),
        "zero" => Ok(Potential::zeros(lattice)),
        other => Err(WntError::Domain(format!(
            "unknown potential {other:?} (expected devlim or zero)"
        ))),
    }
}

pub fn exit_code(err: &WntError) -> i32 {
    match err {
        WntError::Domain(_)
        | WntError::Contract(_)
        | WntError::Parse(_)
        | WntError::OutOfRange { .. }
        | WntError::Infeasible(_) => 2,
        WntError::SolverFailure { .. }
        | WntError::NonConvergence { .. }
        | WntError::StepSize(_)
        | WntError::Divergence { .. } => 3,
        WntError::Io(_) => 4,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings {
        map: match &cli.config {
            Some(p) => load_config(p)?,
            None => HashMap::new(),
        },
    };
    match &cli.command {
        Command::Profile { nodes, tol } => {
            let nodes = settings.get("nodes", *nodes, 512)?;
            let tol = settings.get("tol", *tol, 1e-8)?;
            let profile = build_lens_profile(nodes, tol)?;
            let dir = out_dir(&cli.out)?;
            let f = fs::File::create(dir.join("profile.csv"))?;
            profile.write_csv(f)?;
            println!(
                "profile: {} nodes, max ODE residual {:.3e}, wrote {}",
                nodes,
                profile.max_ode_residual(),
                dir.join("profile.csv").display()
            );
        }
        Command::Devlim { grid, nodes } => {
            let nodes = settings.get("nodes", *nodes, 512)?;
            let profile = profile_cached(nodes, 1e-8)?;
            let lattice = lattice_from(&settings, grid)?;
            let dev = sample_devlim(&profile, lattice);
            let dir = out_dir(&cli.out)?;
            let f = fs::File::create(dir.join("devlim.csv"))?;
            dev.write_csv(f, "dev")?;
            println!(
                "devlim: {}x{} lattice, half squared L2 norm {:.6}, wrote {}",
                lattice.nt,
                lattice.nx,
                0.5 * dev.l2_norm().powi(2),
                dir.join("devlim.csv").display()
            );
        }
        Command::Hlim { t, x, nodes, grid } => {
            let nodes = settings.get("nodes", *nodes, 512)?;
            let profile = profile_cached(nodes, 1e-8)?;
            let value = hlim_at(&profile, *t, *x)?;
            println!("hlim({t}, {x}) = {value:.6}");
            if cli.out.is_some() {
                let lattice = lattice_from(&settings, grid)?;
                let dir = out_dir(&cli.out)?;
                let mut f = fs::File::create(dir.join("hlim.csv"))?;
                writeln!(f, "t,x,hlim")?;
                for i in 1..lattice.nt {
                    let ti = lattice.t(i);
                    for j in 0..lattice.nx {
                        let xj = lattice.x(j);
                        writeln!(f, "{:.16e},{:.16e},{:.16e}", ti, xj, hlim_at(&profile, ti, xj)?)?;
                    }
                }
            }
        }
        Command::Geodesic {
            t,
            x,
            nodes,
            samples,
        } => {
            let nodes = settings.get("nodes", *nodes, 512)?;
            let profile = profile_cached(nodes, 1e-8)?;
            let geo = geodesic_to(&profile, *t, *x)?;
            let act = crate::geodesics::action(&profile, &geo, 0.0, *t)?;
            match geo.kind {
                GeodesicKind::Interior { a } => {
                    println!("geodesic({t}, {x}): interior, a = {a:.6}, action = {act:.6}")
                }
                GeodesicKind::Exterior { t_exit, sign } => println!(
                    "geodesic({t}, {x}): exterior, t_exit = {t_exit:.6}, sign = {sign}, action = {act:.6}"
                ),
            }
            if cli.out.is_some() {
                let n = settings.get("samples", *samples, 256)?;
                let dir = out_dir(&cli.out)?;
                let mut f = fs::File::create(dir.join("geodesic.csv"))?;
                writeln!(f, "u,gamma,gammadot")?;
                for k in 0..=n {
                    let u = *t * k as f64 / n as f64;
                    writeln!(
                        f,
                        "{:.16e},{:.16e},{:.16e}",
                        u,
                        geo.value(&profile, u),
                        geo.deriv(&profile, u)
                    )?;
                }
            }
        }
        Command::Fk {
            lambda,
            t,
            x,
            s,
            y,
            paths,
            steps,
            seed,
            potential,
            tilt,
            grid,
        } => {
            let lambda = settings.get("lambda", *lambda, 8.0)?;
            let t = settings.get("t", *t, 2.0)?;
            let x = settings.get("x", *x, 0.0)?;
            let s = settings.get("s", *s, 0.0)?;
            let y = settings.get("y", *y, 0.0)?;
            let n_paths = settings.get("paths", *paths, 20_000)?;
            let n_steps = settings.get("steps", *steps, 512)?;
            let seed = effective_seed(&settings, *seed)?;
            let pot_name = settings.get("potential", potential.clone(), "devlim".to_string())?;
            let profile = profile_cached(512, 1e-8)?;
            let lattice = lattice_from(&settings, grid)?;
            let dev = potential_from(&pot_name, &profile, lattice)?;
            if let Some(tilt_name) = tilt {
                let bound = match tilt_name.as_str() {
                    "line" => crate::feynman_kac::tilted_lower_bound(
                        &dev,
                        lambda,
                        t,
                        x,
                        s,
                        y,
                        &LineTilt { s, t, y, x },
                        n_paths,
                        n_steps,
                        seed,
                    )?,
                    "geodesic" => {
                        let geo = geodesic_to(&profile, t, x)?;
                        crate::feynman_kac::tilted_lower_bound(
                            &dev,
                            lambda,
                            t,
                            x,
                            s,
                            y,
                            &GeodesicTilt {
                                profile: &profile,
                                geo,
                            },
                            n_paths,
                            n_steps,
                            seed,
                        )?
                    }
                    other => {
                        let Some(a_str) = other.strip_prefix("geodesic+") else {
                            return Err(WntError::Domain(format!(
                                "unknown tilt {other:?} (expected line, geodesic, or geodesic+a)"
                            )));
                        };
                        let a: f64 = a_str.parse().map_err(|_| {
                            WntError::Parse(format!("cannot parse tilt amplitude {a_str:?}"))
                        })?;
                        let geo = geodesic_to(&profile, t, x)?;
                        let tilt = PerturbedTilt {
                            base: GeodesicTilt {
                                profile: &profile,
                                geo,
                            },
                            a,
                            s,
                            t,
                        };
                        // endpoint check happens inside
                        let _ = Tilt::value(&tilt, s);
                        crate::feynman_kac::tilted_lower_bound(
                            &dev, lambda, t, x, s, y, &tilt, n_paths, n_steps, seed,
                        )?
                    }
                };
                println!("tilted lower bound ({tilt_name}): {bound:.6}");
                return Ok(());
            }
            let e = fk_estimate(&dev, lambda, t, x, s, y, n_paths, n_steps, seed)?;
            let report = json!({
                "mean": e.mean,
                "std_error": e.std_error,
                "log_mean": e.log_mean,
                "n_paths": e.n_paths,
                "n_steps": n_steps,
                "seed": seed,
                "endpoints": {"t": t, "x": x, "s": s, "y": y},
            });
            if cli.out.is_some() {
                let dir = out_dir(&cli.out)?;
                fs::write(
                    dir.join("fk.json"),
                    serde_json::to_string_pretty(&report).unwrap() + "\n",
                )?;
            }
            println!(
                "fk: mean {:.6e} +- {:.2e}, log_mean {:.6}{}",
                e.mean,
                e.std_error,
                e.log_mean,
                if e.low_ess { " [low effective sample size]" } else { "" }
            );
        }
        Command::Duhamel {
            t,
            x,
            nmax,
            samples,
            seed,
            potential,
            grid,
        } => {
            let t = settings.get("t", *t, 1.0)?;
            let x = settings.get("x", *x, 0.0)?;
            let n_max = settings.get("nmax", *nmax, 3)?;
            let samples = settings.get("samples", *samples, 20_000)?;
            let seed = effective_seed(&settings, *seed)?;
            let pot_name = settings.get("potential", potential.clone(), "devlim".to_string())?;
            let profile = profile_cached(512, 1e-8)?;
            let lattice = lattice_from(&settings, grid)?;
            let dev = potential_from(&pot_name, &profile, lattice)?;
            let sum = duhamel_partial_sum(&dev, t, x, n_max, samples, seed)?;
            if cli.out.is_some() {
                let dir = out_dir(&cli.out)?;
                let report = json!({
                    "value": sum.value,
                    "tail_bound": sum.tail_bound,
                    "std_error": sum.std_error,
                    "tail_diverged": sum.tail_diverged,
                    "n_max": n_max, "mc_samples": samples, "seed": seed,
                    "point": {"t": t, "x": x},
                });
                fs::write(
                    dir.join("duhamel.json"),
                    serde_json::to_string_pretty(&report).unwrap() + "\n",
                )?;
            }
            println!(
                "duhamel: value {:.6e} +- {:.2e}, tail bound {:.3e}{}",
                sum.value,
                sum.std_error,
                sum.tail_bound,
                if sum.tail_diverged { " [tail bound diverged]" } else { "" }
            );
        }
        Command::Solve {
            lambda,
            potential,
            grid,
        } => {
            let lambda = settings.get("lambda", *lambda, 8.0)?;
            let pot_name = settings.get("potential", potential.clone(), "devlim".to_string())?;
            let profile = profile_cached(512, 1e-8)?;
            let lattice = lattice_from(&settings, grid)?;
            let opts = solver_from(&settings, grid)?;
            let dev = potential_from(&pot_name, &profile, lattice)?;
            let field = solve_forward_h(&dev, lambda, &opts)?;
            let dir = out_dir(&cli.out)?;
            field.write_csv(fs::File::create(dir.join("h.csv"))?)?;
            field.write_snapshot(fs::File::create(dir.join("field.bin"))?)?;
            let h20 = field.values[lattice.idx(lattice.nt - 1, lattice.center())];
            println!(
                "solve: lambda {lambda}, h(2,0) = {h20:.6}, wrote {} and field.bin",
                dir.join("h.csv").display()
            );
        }
        Command::Minimize {
            lambda,
            omega,
            max_iter,
            tol,
            warm,
            seed,
            grid,
        } => {
            let lambda = settings.get("lambda", *lambda, 4.0)?;
            let lattice = lattice_from(&settings, grid)?;
            let mut opts = MinimizerOpts::new(lattice);
            opts.omega = settings.get("omega", *omega, opts.omega)?;
            opts.max_iter = settings.get("max_iter", *max_iter, opts.max_iter)?;
            opts.tol = settings.get("tol", *tol, opts.tol)?;
            opts.solver = solver_from(&settings, grid)?;
            let warm = settings.get("warm", warm.clone(), "devlim".to_string())?;
            opts.warm_start = match warm.as_str() {
                "devlim" => WarmStart::LimitShape,
                "zero" => WarmStart::Zero,
                other => {
                    return Err(WntError::Domain(format!(
                        "unknown warm start {other:?} (expected devlim or zero)"
                    )))
                }
            };
            let seed = effective_seed(&settings, *seed)?;
            let profile = profile_cached(512, 1e-8)?;
            let result = solve_minimizer(&profile, lambda, &opts)?;
            let dir = out_dir(&cli.out)?;
            write_bundle(&result, seed, &dir)?;
            result
                .field
                .write_snapshot(fs::File::create(dir.join("field.bin"))?)?;
            println!(
                "minimize: lambda {lambda}, objective {:.6}, residual {:.3e}, mu {:.6}, {} sweeps, bundle in {}",
                result.objective,
                result.constraint_residual,
                result.mu,
                result.iterations,
                dir.display()
            );
        }
        Command::Converge {
            lambdas,
            delta,
            seed,
            timings,
            grid,
        } => {
            let lambdas = parse_list(&settings.get(
                "lambdas",
                lambdas.clone(),
                "2,4,8".to_string(),
            )?)?;
            if lambdas.windows(2).any(|w| w[0] >= w[1]) {
                return Err(WntError::Domain(
                    "scales must be strictly increasing".into(),
                ));
            }
            let delta = settings.get("delta", *delta, 0.5)?;
            if !(delta > 0.0 && delta <= 0.5) {
                return Err(WntError::Domain(format!(
                    "delta must lie in (0, 0.5], got {delta}"
                )));
            }
            let seed = effective_seed(&settings, *seed)?;
            let lattice = lattice_from(&settings, grid)?;
            let mut opts = HarnessOpts::new(lattice);
            opts.minimizer.solver = solver_from(&settings, grid)?;
            opts.include_timings = *timings;
            let profile = profile_cached(512, 1e-8)?;
            let report = convergence_table(&profile, &lambdas, delta, &opts, seed)?;
            let dir = out_dir(&cli.out)?;
            fs::write(dir.join("report.json"), report.to_json())?;
            let sups: Vec<String> = report
                .rows
                .iter()
                .map(|r| format!("{:.4}@{}", r.sup_error, r.lambda))
                .collect();
            println!(
                "converge: sup errors [{}], wrote {}",
                sups.join(", "),
                dir.join("report.json").display()
            );
        }
        Command::Holder {
            field,
            delta,
            slices,
        } => {
            let delta = settings.get("delta", *delta, 0.05)?;
            let slices = parse_list(&settings.get(
                "slices",
                slices.clone(),
                "0.5,1,1.5,2".to_string(),
            )?)?;
            let f = Field::read_snapshot(fs::File::open(field)?)?;
            let ratio = holder_exponent_scan(&f, delta, &slices);
            println!(
                "holder: max ratio {ratio:.6} at exponent {:.6} over {} slices",
                2.0 / 13.0 - delta,
                slices.len()
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parser_accepts_comments_and_sections() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ini");
        fs::write(&p, "# comment\n[run]\nnt = 41 ; inline\nlambda=2.5\n").unwrap();
        let m = load_config(&p).unwrap();
        assert_eq!(m["nt"], "41");
        assert_eq!(m["lambda"], "2.5");
    }

    #[test]
    fn config_parser_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ini");
        fs::write(&p, "this is not a pair\n").unwrap();
        assert!(matches!(load_config(&p), Err(WntError::Parse(_))));
    }

    #[test]
    fn settings_precedence() {
        let mut map = HashMap::new();
        map.insert("nt".to_string(), "99".to_string());
        let s = Settings { map };
        assert_eq!(s.get("nt", Some(7usize), 1).unwrap(), 7); // flag wins
        assert_eq!(s.get("nt", None::<usize>, 1).unwrap(), 99); // config next
        assert_eq!(s.get("nx", None::<usize>, 1).unwrap(), 1); // default last
    }

    #[test]
    fn exit_codes_partition_the_error_space() {
        assert_eq!(exit_code(&WntError::Domain("x".into())), 2);
        assert_eq!(
            exit_code(&WntError::NonConvergence {
                context: "x".into(),
                iterations: 1,
                residual: 1.0
            }),
            3
        );
        assert_eq!(
            exit_code(&WntError::Io(std::io::Error::new(
                std::io::ErrorKind::Other,
                "x"
            ))),
            4
        );
    }
}
