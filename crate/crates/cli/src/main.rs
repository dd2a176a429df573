//! Command-line driver: straight-duct and fuel-assembly runs, filter and
//! quadrature dumps, and the dense-oracle comparison.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand};

use convsn::eigen::{
    build_problem_hierarchy, power_iteration_with, solve_fixed_source_with, solve_options,
};
use convsn::export;
use convsn::filters::{build_convfem_filters, write_filters_csv, Order};
use convsn::problems::{
    build_fuel_assembly_with, build_straight_duct, load_cross_sections, synthetic_two_group,
    Lattice, ProblemSpec, DUCT_HEIGHT, DUCT_WIDTH,
};
use convsn::quadrature::build_quadrature;
use convsn::transport::Scheme;

#[derive(Parser, Debug)]
#[command(
    name = "convsn",
    version,
    about = "Discrete-ordinates transport with convolutional stencils and space-angle multigrid"
)]
struct Cli {
    /// Worker threads for the stencil kernels (1 gives bit-reproducible output).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fixed-source straight-duct problem.
    Duct {
        #[command(flatten)]
        run: RunArgs,
        /// Cell size in cm (0.8, 0.4, 0.2, 0.1 or 0.05).
        #[arg(long)]
        dx: Option<f64>,
        /// x position (cm) of the exported column profile.
        #[arg(long)]
        profile_x: Option<f64>,
        /// Also export the row profile at this y position (cm).
        #[arg(long)]
        profile_y: Option<f64>,
        /// Write the Petrov-Galerkin diffusivities of the final iterate.
        #[arg(long)]
        dump_diffusivities: bool,
    },
    /// k-eigenvalue fuel-assembly problem.
    Assembly {
        #[command(flatten)]
        run: RunArgs,
        /// Control rods inserted into the guide-tube positions.
        #[arg(long)]
        rods_inserted: bool,
        /// Cross-section CSV; the bundled synthetic two-group set when omitted.
        #[arg(long)]
        xs: Option<PathBuf>,
        /// Lattice size: `full` (17×17 pins) or `reduced` (4×4 pins).
        #[arg(long, default_value = "full")]
        lattice: String,
    },
    /// Print ConvFEM filters as CSV.
    Filters {
        #[command(subcommand)]
        action: FiltersAction,
    },
    /// Print a discrete-ordinates set as CSV.
    Quadrature {
        #[command(subcommand)]
        action: QuadratureAction,
    },
    /// Compare solver kernels with dense reference operators.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
}

#[derive(Subcommand, Debug)]
enum FiltersAction {
    Dump {
        #[arg(long, default_value = "quadratic")]
        order: Order,
        #[arg(long, default_value_t = 1.0)]
        dx: f64,
        #[arg(long)]
        dy: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum QuadratureAction {
    Dump {
        #[arg(long, default_value_t = 4)]
        na: usize,
    },
}

#[derive(Subcommand, Debug)]
enum OracleAction {
    Compare {
        #[arg(long, default_value_t = 6)]
        nx: usize,
        #[arg(long, default_value_t = 6)]
        ny: usize,
        #[arg(long, default_value_t = 1)]
        na: usize,
        #[arg(long, default_value_t = 2)]
        groups: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Solver flags shared by the problem subcommands. Unset flags fall back to
/// the config file, then to the problem defaults.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Directions per face edge.
    #[arg(long)]
    na: Option<usize>,
    /// Filter order: linear, quadratic, cubic or quintic.
    #[arg(long)]
    order: Option<Order>,
    /// Discretisation: upwind or pg.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    mg_iters: Option<usize>,
    #[arg(long)]
    jacobi_sweeps: Option<usize>,
    #[arg(long)]
    outer_iters: Option<usize>,
    /// Multigrid levels; the deepest legal hierarchy when omitted.
    #[arg(long)]
    levels: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key = value` file with any of the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Usage problems reported with exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Parses `key = value` lines; `#` starts a comment, `-` and `_` are
/// interchangeable in keys.
fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(usage(format!(
                "config line {}: expected key = value",
                n + 1
            )));
        };
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

struct Config(BTreeMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self(BTreeMap::new())),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                Ok(Self(parse_config(&text)?))
            }
        }
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key {key}: {e}"))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.0.keys().next() {
            return Err(usage(format!("unknown config key {k}")));
        }
        Ok(())
    }
}

/// Fully resolved run flags.
#[derive(Debug)]
struct Resolved {
    out: PathBuf,
    order_given: bool,
}

fn merge<T>(flag: Option<T>, cfg: Option<T>) -> Option<T> {
    flag.or(cfg)
}

/// Applies flags and config entries to the problem's run settings.
fn apply_run_args(
    run: RunArgs,
    cfg: &mut Config,
    problem: &mut ProblemSpec,
    default_out: &str,
) -> Result<Resolved> {
    let s = &mut problem.settings;
    let order = merge(run.order, cfg.get("order")?);
    let scheme = merge(run.scheme, cfg.get("scheme")?);
    if let Some(v) = merge(run.na, cfg.get("na")?) {
        s.n_a = v;
    }
    if let Some(v) = scheme {
        s.scheme = v;
    }
    if let Some(v) = order {
        s.order = v;
    }
    if let Some(v) = merge(run.mg_iters, cfg.get("mg_iters")?) {
        s.mg_iters = v;
    }
    if let Some(v) = merge(run.jacobi_sweeps, cfg.get("jacobi_sweeps")?) {
        s.jacobi_sweeps = v;
    }
    if let Some(v) = merge(run.outer_iters, cfg.get("outer_iters")?) {
        s.outer_iters = v;
    }
    if let Some(v) = merge(run.levels, cfg.get("levels")?) {
        s.levels = Some(v);
    }
    let out = merge(run.out, cfg.get("out")?).unwrap_or_else(|| PathBuf::from(default_out));
    if order.is_some() && s.scheme == Scheme::Upwind {
        return Err(usage("--order only applies to the pg scheme"));
    }
    Ok(Resolved {
        out,
        order_given: order.is_some(),
    })
}

fn manifest(problem: &ProblemSpec, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let s = &problem.settings;
    let mut m: Vec<(String, String)> = vec![
        ("problem".into(), problem.name.clone()),
        ("nx".into(), problem.grid.nx.to_string()),
        ("ny".into(), problem.grid.ny.to_string()),
        ("dx".into(), problem.grid.dx.to_string()),
        ("dy".into(), problem.grid.dy.to_string()),
        ("groups".into(), problem.n_groups().to_string()),
        ("scheme".into(), s.scheme.to_string()),
        ("order".into(), s.order.to_string()),
        ("na".into(), s.n_a.to_string()),
        ("mg_iters".into(), s.mg_iters.to_string()),
        ("jacobi_sweeps".into(), s.jacobi_sweeps.to_string()),
        ("outer_iters".into(), s.outer_iters.to_string()),
        (
            "levels".into(),
            s.levels.map_or("auto".into(), |l| l.to_string()),
        ),
        ("threads".into(), rayon::current_num_threads().to_string()),
    ];
    m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

#[allow(clippy::too_many_arguments)]
fn run_duct(
    run: RunArgs,
    dx: Option<f64>,
    profile_x: Option<f64>,
    profile_y: Option<f64>,
    dump_diffusivities: bool,
) -> Result<bool> {
    let mut cfg = Config::load(run.config.as_deref())?;
    let dx = merge(dx, cfg.get("dx")?).unwrap_or(0.8);
    let profile_x = merge(profile_x, cfg.get("profile_x")?).unwrap_or(14.0);
    let profile_y = merge(profile_y, cfg.get("profile_y")?);
    let mut problem = build_straight_duct(dx).map_err(|e| usage(e.to_string()))?;
    let resolved = apply_run_args(run, &mut cfg, &mut problem, "duct_out")?;
    cfg.finish()?;
    let start = Instant::now();
    let h = build_problem_hierarchy(&problem)?;
    let opts = solve_options(&problem);
    let sol = solve_fixed_source_with(&h, &opts, |c, r| {
        if c % 10 == 0 {
            eprintln!("cycle {c:4}  residual {r:.4e}");
        }
    })?;
    let elapsed = start.elapsed();
    let grid = problem.grid;
    let out = &resolved.out;
    export::write_fields(out, &sol.phi, &grid, "straight duct scalar flux")?;
    export::write_profile_x_file(out, &sol.phi, &grid, profile_x)?;
    if let Some(y) = profile_y {
        export::write_profile_y_file(out, &sol.phi, &grid, y)?;
    }
    export::write_metrics_file(out, &sol.residual_history)?;
    if dump_diffusivities {
        match &h.pg {
            Some(op) => {
                let (kx, ky) = op.diffusivities(&sol.psi, &h.finest().quad)?;
                let f = std::fs::File::create(out.join("diffusivities.csv"))?;
                export::write_diffusivities(io::BufWriter::new(f), &kx, &ky, &h.finest().quad)?;
            }
            None => eprintln!("no diffusivities: the upwind scheme has none"),
        }
    }
    let ci = export::column_at(&grid, DUCT_WIDTH / 2.0)?;
    let cj = export::row_at(&grid, DUCT_HEIGHT / 2.0)?;
    export::write_manifest_file(
        out,
        &manifest(
            &problem,
            &[
                ("order_flag", resolved.order_given.to_string()),
                ("profile_x", profile_x.to_string()),
                ("levels_used", h.n_levels().to_string()),
                ("initial_residual", format!("{:e}", sol.initial_residual())),
                ("final_residual", format!("{:e}", sol.final_residual())),
                ("converged", sol.converged.to_string()),
                ("seconds", format!("{:.3}", elapsed.as_secs_f64())),
            ],
        ),
    )?;
    println!(
        "duct dx={} scheme={} order={} na={} levels={}: residual {:.3e} -> {:.3e} (reduction {:.2e}), centre flux {:.6e}, {:.2}s",
        grid.dx,
        problem.settings.scheme,
        problem.settings.order,
        problem.settings.n_a,
        h.n_levels(),
        sol.initial_residual(),
        sol.final_residual(),
        sol.reduction(),
        sol.phi.get(ci, cj, 0),
        elapsed.as_secs_f64()
    );
    println!("outputs written to {}", out.display());
    if !sol.converged {
        eprintln!(
            "not converged: residual reduction {:.3e} after {} cycles exceeds the tolerance {:.0e}",
            sol.reduction(),
            problem.settings.mg_iters,
            opts.tolerance
        );
    }
    Ok(sol.converged)
}

fn run_assembly(
    run: RunArgs,
    rods_inserted: bool,
    xs: Option<PathBuf>,
    lattice: String,
) -> Result<bool> {
    let mut cfg = Config::load(run.config.as_deref())?;
    let xs = merge(xs, cfg.get("xs")?);
    let lattice = match cfg.get::<String>("lattice")?.unwrap_or(lattice).as_str() {
        "full" => Lattice::Full17,
        "reduced" => Lattice::Reduced4,
        other => {
            return Err(usage(format!(
                "unknown lattice {other}; use full or reduced"
            )))
        }
    };
    let rods_inserted = rods_inserted || cfg.get::<bool>("rods_inserted")?.unwrap_or(false);
    let library = match &xs {
        Some(p) => load_cross_sections(p)?,
        None => synthetic_two_group(),
    };
    let mut problem = build_fuel_assembly_with(lattice, rods_inserted, &library)?;
    let resolved = apply_run_args(run, &mut cfg, &mut problem, "assembly_out")?;
    cfg.finish()?;
    let start = Instant::now();
    let h = build_problem_hierarchy(&problem)?;
    let opts = solve_options(&problem);
    let st = power_iteration_with(&h, &opts, |m, k, r| {
        eprintln!("outer {m:4}  k_eff {k:.8}  residual {r:.3e}")
    })?;
    let elapsed = start.elapsed();
    let out = &resolved.out;
    export::write_fields(out, &st.phi, &problem.grid, "fuel assembly scalar flux")?;
    export::write_keff_file(out, &st.history)?;
    export::write_metrics_file(out, &st.residuals)?;
    let dk = match st.history.as_slice() {
        [.., a, b] => ((b - a) / b).abs(),
        _ => f64::INFINITY,
    };
    let converged = st.k_eff.is_finite() && dk < 1e-5;
    export::write_manifest_file(
        out,
        &manifest(
            &problem,
            &[
                ("rods_inserted", rods_inserted.to_string()),
                (
                    "xs",
                    xs.as_ref()
                        .map_or("bundled synthetic two-group".into(), |p| {
                            p.display().to_string()
                        }),
                ),
                ("levels_used", h.n_levels().to_string()),
                ("k_eff", format!("{:.10}", st.k_eff)),
                ("last_k_relative_change", format!("{dk:e}")),
                ("seconds", format!("{:.3}", elapsed.as_secs_f64())),
            ],
        ),
    )?;
    println!(
        "assembly {} ({}×{} cells, {} groups): k_eff = {:.8} after {} outer iterations, last relative change {:.2e}, {:.2}s",
        problem.name,
        problem.grid.nx,
        problem.grid.ny,
        problem.n_groups(),
        st.k_eff,
        st.iteration,
        dk,
        elapsed.as_secs_f64()
    );
    println!("outputs written to {}", out.display());
    if !converged {
        eprintln!("not converged: last relative k_eff change {dk:.3e} exceeds 1e-5");
    }
    Ok(converged)
}

fn run_oracle(nx: usize, ny: usize, na: usize, groups: usize, seed: u64) -> Result<bool> {
    let r = convsn::oracle::compare_random(nx, ny, na, groups, seed)?;
    println!("unknowns          {}", r.unknowns);
    println!("residual max err  {:.3e}", r.residual_error);
    println!("jacobi max err    {:.3e}", r.jacobi_error);
    println!("k_eff dense       {:.12}", r.k_dense);
    println!("k_eff solver      {:.12}", r.k_solver);
    let ok = r.residual_error < 1e-12 && r.jacobi_error < 1e-12 && r.k_error() < 1e-6;
    println!("{}", if ok { "match" } else { "MISMATCH" });
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Duct {
            run,
            dx,
            profile_x,
            profile_y,
            dump_diffusivities,
        } => run_duct(run, dx, profile_x, profile_y, dump_diffusivities),
        Command::Assembly {
            run,
            rods_inserted,
            xs,
            lattice,
        } => run_assembly(run, rods_inserted, xs, lattice),
        Command::Filters {
            action: FiltersAction::Dump { order, dx, dy },
        } => {
            let fs = build_convfem_filters(order, dx, dy.unwrap_or(dx))
                .map_err(|e| usage(e.to_string()))?;
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_filters_csv(&fs, &mut lock)?;
            lock.flush()?;
            Ok(true)
        }
        Command::Quadrature {
            action: QuadratureAction::Dump { na },
        } => {
            let q = build_quadrature(na).map_err(|e| usage(e.to_string()))?;
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            q.write_csv(&mut lock)?;
            lock.flush()?;
            Ok(true)
        }
        Command::Oracle {
            action:
                OracleAction::Compare {
                    nx,
                    ny,
                    na,
                    groups,
                    seed,
                },
        } => {
            if nx == 0 || ny == 0 || na == 0 || groups == 0 {
                bail!(usage("oracle sizes must be positive"));
            }
            run_oracle(nx, ny, na, groups, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if let Some(u) = e.downcast_ref::<Usage>() {
                Cli::command()
                    .error(ErrorKind::ArgumentConflict, u.to_string())
                    .exit();
            }
            let broken_pipe = e.chain().any(|c| {
                let io =
                    c.downcast_ref::<io::Error>()
                        .or(match c.downcast_ref::<convsn::Error>() {
                            Some(convsn::Error::Io(io)) => Some(io),
                            _ => None,
                        });
                io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            });
            if broken_pipe {
                return ExitCode::SUCCESS;
            }
            if let Some(convsn::Error::InvalidArgument(msg)) = e.downcast_ref::<convsn::Error>() {
                Cli::command().error(ErrorKind::InvalidValue, msg).exit();
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c = parse_config("# run\nmg-iters = 5\n scheme=pg # trailing\n\n").unwrap();
        assert_eq!(c.get("mg_iters").map(String::as_str), Some("5"));
        assert_eq!(c.get("scheme").map(String::as_str), Some("pg"));
        assert!(parse_config("nonsense").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = Config(parse_config("na = 2\nmg_iters = 7\n").unwrap());
        let mut p = build_straight_duct(0.8).unwrap();
        let run = RunArgs {
            na: Some(1),
            ..RunArgs::default()
        };
        apply_run_args(run, &mut cfg, &mut p, "o").unwrap();
        assert_eq!(p.settings.n_a, 1);
        assert_eq!(p.settings.mg_iters, 7);
        cfg.finish().unwrap();
    }

    #[test]
    fn order_with_upwind_is_usage_error() {
        let mut cfg = Config(BTreeMap::new());
        let mut p = build_straight_duct(0.8).unwrap();
        let run = RunArgs {
            order: Some(Order::Cubic),
            scheme: Some(Scheme::Upwind),
            ..RunArgs::default()
        };
        let e = apply_run_args(run, &mut cfg, &mut p, "o").unwrap_err();
        assert!(e.downcast_ref::<Usage>().is_some());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
