use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subspace_crn::linalg::LinearOperator;
use subspace_crn::objectives::make_quadratic;
use subspace_crn::solvers::{Method, SolverConfig};
use subspace_crn::spectral::{check_bounds, check_bounds_dense, RhoReport};
use subspace_crn_bench::config::{DatasetSpec, ExperimentConfig};
use subspace_crn_bench::experiment::{check_experiment_bounds, resolve_fstar, run_experiment, HarnessError, Problem};
use subspace_crn_bench::fstar::FstarOptions;

#[derive(Parser)]
#[command(name = "subspace-crn", version, about = "Cubic regularized Newton experiments over Krylov and coordinate subspaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method in a config and write CSV traces.
    Run(RunArgs),
    /// Print rho^(m) diagnostics and spectral bounds.
    Rho(RhoArgs),
    /// Compare quadratic traces against the convergence bounds.
    CheckBounds(CheckArgs),
    /// Compute (or look up) the reference optimal value.
    Fstar(FstarArgs),
}

#[derive(Args)]
struct Overrides {
    /// Keep only this method (added with defaults if absent).
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Wall-clock budget per run, seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Target for the iteration bound, relative to the initial suboptimality.
    #[arg(long, default_value_t = 1e-10)]
    eps_rel: f64,
}

#[derive(Args)]
struct RhoArgs {
    /// Evaluate at the origin of the config's problem.
    #[arg(long, conflicts_with = "spectrum")]
    config: Option<PathBuf>,
    /// Comma-separated eigenvalues of a diagonal matrix.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    spectrum: Option<Vec<f64>>,
    /// Start vector for --spectrum (default all ones).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    vector: Option<Vec<f64>>,
    #[arg(long)]
    m: usize,
}

#[derive(Args)]
struct FstarArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    grad_tol: f64,
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(method) = o.method {
        cfg.methods.retain(|c| c.method == method);
        if cfg.methods.is_empty() {
            cfg.methods.push(SolverConfig::new(method, SolverConfig::default().m));
        }
    }
    for c in &mut cfg.methods {
        if let Some(m) = o.m {
            c.m = m;
        }
        if let Some(n) = o.max_iters {
            c.max_iters = n;
        }
        if let Some(t) = o.time_budget {
            c.time_budget_s = Some(t);
        }
        if let Some(s) = o.seed {
            c.seed = s;
        }
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
}

fn load(path: &PathBuf, o: Option<&Overrides>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path).map_err(HarnessError::Config)?;
    if let Some(o) = o {
        apply_overrides(&mut cfg, o);
        cfg.validate().map_err(HarnessError::Config)?;
    }
    Ok(cfg)
}

fn print_report(r: &RhoReport) {
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6e}"));
    println!("m              {}", r.m);
    println!("m_effective    {}", r.m_effective);
    println!("breakdown      {}", r.breakdown);
    println!("rho            {:.6e}", r.rho_lanczos);
    println!("rho_polynomial {}", opt(r.rho_polynomial));
    println!("L1             {:.6e}", r.l1);
    println!("bound_l1       {:.6e}", r.bound_l1);
    println!("bound_topm     {}", opt(r.bound_topm));
    println!("bound_cluster  {}", opt(r.bound_cluster));
    for v in r.violations() {
        println!("VIOLATION      {v}");
    }
}

fn rho(args: &RhoArgs) -> Result<ExitCode, HarnessError> {
    let report = if let Some(eigs) = &args.spectrum {
        let b = args.vector.clone().unwrap_or_else(|| vec![1.0; eigs.len()]);
        if b.len() != eigs.len() {
            return Err(HarnessError::Config(format!("vector has {} entries, spectrum {}", b.len(), eigs.len())));
        }
        check_bounds(eigs, &b, args.m)
    } else if let Some(path) = &args.config {
        let cfg = load(path, None)?;
        match &cfg.dataset {
            DatasetSpec::Quadratic(spec) => {
                let q = make_quadratic(spec).map_err(|e| HarnessError::Config(e.to_string()))?;
                let g = subspace_crn::Objective::gradient(&q);
                check_bounds(q.eigenvalues(), &q.to_eigenbasis(&g), args.m)
            }
            other => {
                let obj = Problem::load(other)?.objective();
                let g = obj.gradient();
                if obj.dim() > 500 {
                    let op = obj.hessian_operator();
                    let basis = subspace_crn::lanczos(&*op, &g, args.m.min(op.dim()))
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                    println!("m              {}", args.m);
                    println!("m_effective    {}", basis.m_effective());
                    println!("breakdown      {}", basis.breakdown);
                    println!("rho            {:.6e}", basis.rho());
                    println!("(dimension {} too large for the dense eigenvalue bounds)", obj.dim());
                    return Ok(ExitCode::SUCCESS);
                }
                check_bounds_dense(&obj.dense_hessian(), &g, args.m)
            }
        }
    } else {
        return Err(HarnessError::Config("rho needs --config or --spectrum".into()));
    };
    let report = report.map_err(|e| HarnessError::Config(e.to_string()))?;
    print_report(&report);
    Ok(if report.violations().is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn execute(cli: &Cli) -> Result<ExitCode, HarnessError> {
    match &cli.command {
        Command::Run(args) => {
            let cfg = load(&args.config, Some(&args.overrides))?;
            let report = run_experiment(&cfg)?;
            for r in &report.runs {
                println!("{:<28} {:>6} iterations  f = {:.6e}  |g| = {:.3e}  {}", r.file, r.iterations, r.final_f, r.final_grad_norm, r.stop);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Rho(args) => rho(args),
        Command::CheckBounds(args) => {
            let cfg = load(&args.config, Some(&args.overrides))?;
            let checks = check_experiment_bounds(&cfg, args.eps_rel)?;
            let mut ok = true;
            for c in &checks {
                let status = if c.passed() { "ok" } else { "VIOLATED" };
                ok &= c.passed();
                println!(
                    "{}: {status}  global-rate violations {}, reached target at {:?} (bound {:.1}), stalled halving windows {}",
                    c.file.display(),
                    c.global_rate.len(),
                    c.linear.iterations,
                    c.linear.iteration_bound,
                    c.linear.stalled_windows.len()
                );
                for v in c.global_rate.iter().take(5) {
                    println!("  k = {}: {:.6e} > {:.6e}", v.k, v.measured, v.bound);
                }
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Fstar(args) => {
            let cfg = load(&args.config, None)?;
            let problem = Problem::load(&cfg.dataset)?;
            let opts = FstarOptions { grad_tol: args.grad_tol, ..FstarOptions::default() };
            let setting = Some(subspace_crn_bench::config::FstarSetting::Directive(
                subspace_crn_bench::config::FstarDirective::Compute,
            ));
            let rec = resolve_fstar(&problem, setting, &opts)?.expect("compute directive yields a value");
            println!("fstar               {:.17e}", rec.fstar);
            println!("source              {}", rec.source);
            println!("grad_norm           {:.3e}", rec.grad_norm);
            println!("iterations          {}", rec.iterations);
            println!("possibly_unattained {}", rec.possibly_unattained);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
