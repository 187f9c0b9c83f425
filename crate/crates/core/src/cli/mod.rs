//! Command-line front end: argument parsing, commands and exit codes.

mod args;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use args::*;

use crate::error::{Error, Result};
use crate::fgmres::{fgmres_solve, BlockSizeChooser, ConstantChooser, SolveResult, SolveTrace, SolverConfig};
use crate::ppo::{
    train_with, ActionSpace, PolicyChooser, PolicyParameters, ProblemFamily, RewardMode, TrainConfig,
};
use crate::problem::black_scholes::{analytic_bs_call, assemble_bs_system, bs_backward_solve, terminal_values, BsParams};
use crate::problem::mtx::{read_matrix_market, read_vector, write_matrix_market, write_vector};
use crate::problem::portfolio::{assemble_kkt, FactorModel, PortfolioProblem};
use crate::problem::LinearSystem;
use crate::ppo::train::write_training_log;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_DIMENSION: i32 = 5;

/// Environment variable consulted when a command takes `--seed` and none is given.
pub const SEED_ENV: &str = "KRYLOVRL_SEED";

/// Exit code for an error escaping a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::Malformed { .. }
        | Error::UnsupportedFormat(_)
        | Error::TripletOutOfRange { .. }
        | Error::NonFinite(_)
        | Error::NotSymmetric { .. }
        | Error::PolicyVersion(_)
        | Error::PolicyParse { .. } => EXIT_IO,
        Error::DimensionMismatch { .. }
        | Error::NotSquare { .. }
        | Error::WindowOutOfRange { .. }
        | Error::PolicyShape(_) => EXIT_DIMENSION,
        Error::BlockSizeOutOfRange { .. } | Error::InvalidParameter(_) => EXIT_USAGE,
        Error::StepNotConverged { .. } | Error::NonFiniteLoss { .. } => EXIT_NOT_CONVERGED,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr, reports to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Assemble(AssembleCommand::Portfolio(a)) => cmd_assemble_portfolio(&a),
        Command::Assemble(AssembleCommand::Bs(a)) => cmd_assemble_bs(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Price(a) => cmd_price(&a),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_system(sys: &LinearSystem, out: &Path) -> Result<()> {
    let (mtx, vec) = (with_suffix(out, ".mtx"), with_suffix(out, ".vec"));
    write_matrix_market(&sys.a, &mtx)?;
    write_vector(&sys.b, &vec)?;
    println!(
        "wrote {}x{} system with {} nonzeros to {} and {}",
        sys.n(),
        sys.n(),
        sys.a.nnz(),
        mtx.display(),
        vec.display()
    );
    Ok(())
}

fn cmd_assemble_portfolio(a: &PortfolioArgs) -> Result<i32> {
    let seed = resolve_seed(a.seed)?;
    let mut problem = match (&a.sigma_file, a.n) {
        (Some(path), _) => {
            let sigma = read_matrix_market(path)?;
            let mu = match &a.mu_file {
                Some(p) => read_vector(p)?,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    (0..sigma.n_rows()).map(|_| rng.random_range(0.01..0.20)).collect()
                }
            };
            let mean = mu.iter().sum::<f64>() / mu.len().max(1) as f64;
            PortfolioProblem::from_sparse(sigma, mu, mean)?
        }
        (None, Some(n)) => FactorModel::new(n, a.factors, a.noise, seed).generate()?,
        (None, None) => unreachable!("clap requires --n or --sigma-file"),
    };
    if let Some(t) = a.target {
        problem = problem.with_target(t);
    }
    write_system(&assemble_kkt(&problem)?, &a.output.out)?;
    Ok(EXIT_OK)
}

fn bs_params(a: &BsArgs) -> Result<BsParams> {
    let p = BsParams {
        sigma: a.sigma,
        r: a.rate,
        strike: a.strike,
        s_max: a.smax,
        m: a.m,
        t_expiry: a.expiry,
        n_steps: a.steps,
    };
    p.validate()?;
    Ok(p)
}

/// Values at level `t_index + 1`, marched back from the payoff.
fn values_after(p: &BsParams, t_index: usize) -> Result<Vec<f64>> {
    let cfg = SolverConfig::default();
    let mut v = terminal_values(p);
    for t in (t_index + 1..p.n_steps).rev() {
        let sys = assemble_bs_system(p, &v, t)?;
        let res = fgmres_solve(&sys.a, &sys.b, &mut ConstantChooser(1), &cfg)?;
        if !res.trace.converged() {
            return Err(Error::StepNotConverged {
                step: t,
                rel_residual: res.trace.final_rel_residual(),
            });
        }
        v = res.x;
    }
    Ok(v)
}

fn cmd_assemble_bs(a: &BsAssembleArgs) -> Result<i32> {
    let p = bs_params(&a.bs)?;
    if a.time_index >= p.n_steps {
        return Err(Error::InvalidParameter(format!(
            "--time-index {} must be below --steps {}",
            a.time_index, p.n_steps
        )));
    }
    let v_next = values_after(&p, a.time_index)?;
    write_system(&assemble_bs_system(&p, &v_next, a.time_index)?, &a.output.out)?;
    Ok(EXIT_OK)
}

fn solver_config(a: &SolverArgs) -> Result<SolverConfig> {
    let cfg = SolverConfig {
        tol: a.tol,
        restart: a.restart,
        max_cycles: a.max_cycles,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn finish_trace(trace: &mut SolveTrace, no_timing: bool) {
    if no_timing {
        for r in &mut trace.records {
            r.elapsed_ms = 0.0;
        }
    }
}

fn load_system(matrix: &Path, rhs: Option<&Path>) -> Result<LinearSystem> {
    let a = read_matrix_market(matrix)?;
    match rhs {
        Some(p) => LinearSystem::new(a, read_vector(p)?, crate::problem::Provenance::File),
        None => LinearSystem::with_unit_solution(a),
    }
}

/// Block-size source chosen on the command line.
enum Source {
    Constant(usize),
    Policy(PolicyParameters),
}

impl Source {
    fn from_args(a: &PreconditionerSource) -> Result<Self> {
        match (a.block_size, &a.policy) {
            (Some(k), None) => Ok(Source::Constant(k)),
            (None, Some(p)) => Ok(Source::Policy(PolicyParameters::load(p)?)),
            _ => unreachable!("clap enforces exactly one preconditioner source"),
        }
    }

    fn chooser(&self) -> Box<dyn BlockSizeChooser + '_> {
        match self {
            Source::Constant(k) => Box::new(ConstantChooser(*k)),
            Source::Policy(p) => Box::new(PolicyChooser::new(p)),
        }
    }
}

fn check_block_size(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::BlockSizeOutOfRange { k, n });
    }
    Ok(())
}

fn print_summary(trace: &SolveTrace, wall_ms: f64) {
    println!("outcome: {}", trace.outcome.as_str());
    println!("final_rel_residual: {:e}", trace.final_rel_residual());
    println!("cycles: {}", trace.cycles());
    println!("matvecs: {}", trace.matvecs());
    println!("wall_ms: {wall_ms:.3}");
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let cfg = solver_config(&a.solver)?;
    let sys = load_system(&a.matrix, a.rhs.as_deref())?;
    let source = Source::from_args(&a.source)?;
    if let Source::Constant(k) = source {
        check_block_size(k, sys.n())?;
    }
    let start = Instant::now();
    let SolveResult { x, mut trace } = fgmres_solve(&sys.a, &sys.b, source.chooser().as_mut(), &cfg)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    finish_trace(&mut trace, a.solver.no_timing);
    print_summary(&trace, wall);
    if let Some(p) = &a.trace {
        trace.write_csv(p)?;
    }
    if let Some(p) = &a.solution {
        write_vector(&x, p)?;
    }
    Ok(if trace.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn family(a: &FamilyArgs) -> Result<ProblemFamily> {
    Ok(match a.family {
        FamilyKind::Kkt => ProblemFamily::Kkt {
            n: a.n,
            n_factors: a.factors,
            noise: a.noise,
        },
        FamilyKind::Bs => {
            if !(a.sigma_min > 0.0 && a.sigma_max >= a.sigma_min) {
                return Err(Error::InvalidParameter(format!(
                    "need 0 < --sigma-min <= --sigma-max, got {} and {}",
                    a.sigma_min, a.sigma_max
                )));
            }
            let base = BsParams {
                sigma: a.sigma_min,
                r: a.rate,
                strike: a.strike,
                s_max: a.smax,
                m: a.m,
                t_expiry: a.expiry,
                n_steps: a.steps,
            };
            base.validate()?;
            ProblemFamily::BlackScholes {
                base,
                sigma_range: (a.sigma_min, a.sigma_max),
            }
        }
        FamilyKind::FileDir => {
            let dir = a
                .dir
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("--family file-dir requires --dir".into()))?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "mtx"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::InvalidParameter(format!("no .mtx files in {}", dir.display())));
            }
            let systems = paths
                .iter()
                .map(|p| LinearSystem::with_unit_solution(read_matrix_market(p)?))
                .collect::<Result<Vec<_>>>()?;
            ProblemFamily::Systems(systems)
        }
    })
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let seed = resolve_seed(a.seed)?;
    let fam = family(&a.family)?;
    let mut cfg = TrainConfig::recommended(a.episodes, seed);
    cfg.ppo.gamma = a.gamma;
    cfg.ppo.learning_rate = a.lr;
    cfg.episodes_per_update = a.episodes_per_update;
    cfg.actions = ActionSpace::new(a.actions.clone())?;
    cfg.hidden = a.hidden.clone();
    cfg.reward = match a.reward {
        RewardArg::NegativeResidual => RewardMode::NegativeResidual,
        RewardArg::LogDecrement => RewardMode::LogDecrement,
    };
    cfg.solver = solver_config(&a.solver)?;
    let (params, log) = train_with(&fam, &cfg, |e| {
        if (e.episode + 1) % 10 == 0 {
            eprintln!(
                "episode {}: reward {:.4} cycles {} rel_residual {:e}",
                e.episode + 1,
                e.total_reward,
                e.cycles,
                e.final_rel_residual
            );
        }
    })?;
    params.save(&a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.csv"));
    write_training_log(&log, &log_path)?;
    println!("wrote policy to {} and training log to {}", a.out.display(), log_path.display());
    Ok(EXIT_OK)
}

pub const BENCH_CSV_HEADER: &str = "config,block_size_or_policy,cycles,matvecs,final_rel_residual,elapsed_ms";

fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let cfg = solver_config(&a.solver)?;
    if a.repeats == 0 {
        return Err(Error::InvalidParameter("--repeats must be at least 1".into()));
    }
    let sys = match &a.matrix {
        Some(m) => load_system(m, a.rhs.as_deref())?,
        None => ProblemFamily::kkt(a.n).draw(resolve_seed(a.seed)?, 0)?,
    };
    for &k in &a.block_sizes {
        check_block_size(k, sys.n())?;
    }
    let mut configs: Vec<(String, String, Source)> = a
        .block_sizes
        .iter()
        .map(|&k| (format!("constant-{k}"), k.to_string(), Source::Constant(k)))
        .collect();
    if let Some(p) = &a.policy {
        configs.push(("policy".into(), p.display().to_string(), Source::Policy(PolicyParameters::load(p)?)));
    }
    if let Some(dir) = &a.trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut csv = String::from(BENCH_CSV_HEADER);
    csv.push('\n');
    let mut all_converged = true;
    for (name, label, source) in &configs {
        let mut best: Option<SolveTrace> = None;
        for _ in 0..a.repeats {
            let res = fgmres_solve(&sys.a, &sys.b, source.chooser().as_mut(), &cfg)?;
            if best.as_ref().is_none_or(|b| res.trace.elapsed_ms() < b.elapsed_ms()) {
                best = Some(res.trace);
            }
        }
        let mut trace = best.expect("at least one repeat");
        finish_trace(&mut trace, a.solver.no_timing);
        all_converged &= trace.converged();
        let _ = writeln!(
            csv,
            "{name},{label},{},{},{:e},{}",
            trace.cycles(),
            trace.matvecs(),
            trace.final_rel_residual(),
            trace.elapsed_ms()
        );
        if let Some(dir) = &a.trace_dir {
            trace.write_csv(&dir.join(format!("{name}.csv")))?;
        }
    }
    match &a.out {
        Some(p) => std::fs::write(p, &csv).map_err(|e| Error::io(p, e))?,
        None => print!("{csv}"),
    }
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_price(a: &PriceArgs) -> Result<i32> {
    let p = bs_params(&a.bs)?;
    if !(0.0..=p.s_max).contains(&a.spot) {
        return Err(Error::InvalidParameter(format!("--spot {} outside [0, {}]", a.spot, p.s_max)));
    }
    let cfg = solver_config(&a.solver)?;
    let source = Source::from_args(&a.source)?;
    if let Source::Constant(k) = source {
        check_block_size(k, p.m - 1)?;
    }
    let start = Instant::now();
    let mut pricing = match bs_backward_solve(&p, &cfg, source.chooser().as_mut()) {
        Ok(pr) => pr,
        Err(e @ Error::StepNotConverged { .. }) => {
            eprintln!("error: {e}");
            return Ok(EXIT_NOT_CONVERGED);
        }
        Err(e) => return Err(e),
    };
    let wall = start.elapsed().as_secs_f64() * 1e3;
    finish_trace(&mut pricing.trace, a.solver.no_timing);
    let fd = pricing.price_at(a.spot)?;
    let exact = analytic_bs_call(a.spot, p.strike, p.t_expiry, p.r, p.sigma);
    println!("fd_price: {fd:.10}");
    println!("analytic_price: {exact:.10}");
    println!("abs_diff: {:e}", (fd - exact).abs());
    println!("time_steps: {}", p.n_steps);
    println!("total_cycles: {}", pricing.trace.cycles());
    println!("total_matvecs: {}", pricing.trace.matvecs());
    println!("wall_ms: {wall:.3}");
    if let Some(path) = &a.trace {
        pricing.trace.write_csv(path)?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_contract() {
        assert_eq!(exit_code(&Error::io("x", std::io::Error::other("boom"))), EXIT_IO);
        assert_eq!(
            exit_code(&Error::DimensionMismatch { expected: 1, actual: 2, context: "t" }),
            EXIT_DIMENSION
        );
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), EXIT_USAGE);
        assert_eq!(
            exit_code(&Error::StepNotConverged { step: 0, rel_residual: 1.0 }),
            EXIT_NOT_CONVERGED
        );
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["krylovrl", "solve"]), EXIT_USAGE);
        assert_eq!(run(["krylovrl", "--help"]), EXIT_OK);
        assert_eq!(
            run(["krylovrl", "solve", "--matrix", "m.mtx", "--block-size", "1", "--policy", "p.txt"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn suffix_appends() {
        assert_eq!(with_suffix(Path::new("out/sys"), ".mtx"), PathBuf::from("out/sys.mtx"));
    }
}
