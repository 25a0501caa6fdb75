//! Command-line entry point: validation, KAM runs, measure estimation,
//! synthesis and report aggregation.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical abort
//! (divergence/resonance/non-contraction), 4 I/O error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use kamnls::config::RunConfig;
use kamnls::error::Error;
use kamnls::hamops::{diagonal, ActionVector, Hamiltonian};
use kamnls::kamflow::run_kam;
use kamnls::report::{fmt_f64, CsvWriter};
use kamnls::smalldiv::{coperta_sum, estimate_from_ratios, mc_min_ratios};
use kamnls::spaces::Mode;
use kamnls::synth::{synth_solution, weak_residual_modes, QuadSpec, TestFunction};

#[derive(Parser)]
#[command(name = "kamnls", version, about = "Finite-truncation KAM machinery for the 1d NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a run configuration, echoing the normalized form.
    Validate { config: PathBuf },
    /// Counter-term KAM iteration commands.
    Kam {
        #[command(subcommand)]
        action: KamAction,
    },
    /// Monte-Carlo estimate of the Diophantine-complement measure.
    Measure(MeasureArgs),
    /// Evaluate a synthesized solution field from a run directory.
    Synthesize(SynthArgs),
    /// Aggregate run artifacts in a directory into summary and plot data.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum KamAction {
    /// Run the iteration described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    config: PathBuf,
    /// One or more gamma values; defaults to the configured gamma.
    #[arg(long = "gamma")]
    gammas: Vec<f64>,
    #[arg(long, visible_alias = "J")]
    j: Option<Mode>,
    #[arg(long)]
    lmax: Option<i64>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Run directory produced by `kam run`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 1.0)]
    t1: f64,
    #[arg(long, default_value_t = 64)]
    nt: usize,
    #[arg(long, default_value_t = 64)]
    nx: usize,
}

/// Metadata emitted next to the run artifacts so `synthesize` can rebuild
/// the transform.
#[derive(Debug, Serialize, Deserialize)]
struct RunMeta {
    j: Mode,
    d: u32,
    gamma: f64,
    steps: usize,
    outcome: String,
    conjugacy_residual: f64,
    omega: Vec<(Mode, f64)>,
    sites: Vec<Mode>,
    actions: Vec<(Mode, f64)>,
    fcoeffs: Vec<(u32, f64)>,
    v_normal: Vec<(Mode, f64)>,
    /// Accumulated counter-term; the synthesized orbit weakly solves the
    /// NLS with the eliminated multiplier `V_j = omega_j + lambda_j - j^2`.
    lambda: Vec<(Mode, f64)>,
}

fn exit_code_of(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Parse(_) => ExitCode::from(2),
        Error::Io(_) => ExitCode::from(4),
        _ => ExitCode::from(3),
    }
}

fn out_dir(config_dir: &str) -> PathBuf {
    // env override for the output directory
    match std::env::var("KAMNLS_OUT") {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => {
            if config_dir.is_empty() {
                PathBuf::from("out")
            } else {
                PathBuf::from(config_dir)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Kam {
            action: KamAction::Run { config },
        } => cmd_kam_run(&config),
        Command::Measure(args) => cmd_measure(&args),
        Command::Synthesize(args) => cmd_synthesize(&args),
        Command::Report { dir } => cmd_report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_of(&err)
        }
    }
}

fn cmd_validate(path: &Path) -> Result<(), Error> {
    let config = RunConfig::load(path)?;
    let validated = config.validate()?;
    let report = kamnls::sites::validate_admissible(
        &validated.schedule,
        validated.schedule.i_star() + 40,
    )?;
    print!("{}", validated.echo());
    for cond in &report.conditions {
        match &cond.counterexample {
            None => println!("admissibility {}: pass", cond.name),
            Some((at, lhs, rhs)) => {
                println!(
                    "admissibility {}: FAIL at {at} (lhs {lhs} < rhs {rhs})",
                    cond.name
                )
            }
        }
    }
    Ok(())
}

fn cmd_kam_run(path: &Path) -> Result<(), Error> {
    let config = RunConfig::load(path)?;
    let validated = config.validate()?;
    let dir = out_dir(&validated.config.output.dir);
    std::fs::create_dir_all(&dir)?;

    let (omega, draw) = validated.sample_diophantine_omega()?;
    eprintln!("diophantine draw accepted at stream {draw}");
    let h = validated.build_hamiltonian(&omega)?;
    let ctx = validated.kam_context(omega.clone());
    let run = run_kam(
        &h,
        &ctx,
        validated.config.tolerances.max_steps,
        validated.config.tolerances.tol,
    )?;

    let mut trace = CsvWriter::new("n,eps,theta,lambda_sup,dropped_mass");
    for (n, eps, theta, lam, dropped) in run.trace() {
        trace.row(&[
            n.to_string(),
            fmt_f64(eps),
            fmt_f64(theta),
            fmt_f64(lam),
            fmt_f64(dropped),
        ]);
    }
    trace.write_to(&dir.join("trace.csv"))?;

    for (k, s) in run.state.gen_history.iter().enumerate() {
        std::fs::write(dir.join(format!("s_{k:03}.txt")), s.dump())?;
    }
    let normal_form = diagonal(omega.entries(), &h.like())?.add(&run.state.high)?;
    std::fs::write(dir.join("normal_form.txt"), normal_form.dump())?;

    let meta = RunMeta {
        j: validated.config.truncation.j,
        d: validated.config.truncation.d,
        gamma: validated.config.dioph.gamma,
        steps: run.state.n,
        outcome: format!("{:?}", run.outcome),
        conjugacy_residual: run.conjugacy_residual,
        omega: omega.entries().iter().map(|(&j, &w)| (j, w)).collect(),
        sites: validated.sites.iter().copied().collect(),
        actions: validated.actions.iter().collect(),
        fcoeffs: validated.config.nonlinearity.fcoeffs.clone(),
        v_normal: validated.v_normal.iter().map(|(&j, &v)| (j, v)).collect(),
        lambda: run.state.lambda.iter().map(|(&j, &v)| (j, v)).collect(),
    };
    let meta_text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("run_meta.toml"), meta_text)?;
    println!(
        "outcome {:?}: {} steps, final eps {:.3e}, conjugacy residual {:.3e}, artifacts in {}",
        run.outcome,
        run.state.n,
        run.state.eps,
        run.conjugacy_residual,
        dir.display()
    );
    match run.outcome {
        kamnls::kamflow::RunOutcome::Diverged { at } => Err(Error::Divergence(format!(
            "eps increased at step {at}; trace written to {}",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn cmd_measure(args: &MeasureArgs) -> Result<(), Error> {
    let config = RunConfig::load(&args.config)?;
    let validated = config.validate()?;
    let j = args.j.unwrap_or(validated.config.truncation.j);
    let lmax = args.lmax.unwrap_or(validated.lmax);
    let seed = args.seed.unwrap_or(validated.config.omega.seed);
    let gammas = if args.gammas.is_empty() {
        vec![validated.config.dioph.gamma]
    } else {
        args.gammas.clone()
    };
    let ratios = mc_min_ratios(
        j,
        lmax,
        &validated.schedule,
        validated.config.dioph.tau,
        &validated.v_normal,
        args.samples,
        seed,
    )?;
    let coperta = coperta_sum(j, lmax, &validated.schedule, validated.config.dioph.tau)?;
    let mut csv = CsvWriter::new("gamma,fraction,ci_lo,ci_hi,coperta_sum");
    for &gamma in &gammas {
        let est = estimate_from_ratios(&ratios, gamma);
        csv.row(&[
            fmt_f64(gamma),
            fmt_f64(est.fraction),
            fmt_f64(est.ci_low),
            fmt_f64(est.ci_high),
            fmt_f64(coperta),
        ]);
    }
    match &args.out {
        Some(path) => csv.write_to(path)?,
        None => print!("{}", csv.finish()),
    }
    Ok(())
}

fn cmd_synthesize(args: &SynthArgs) -> Result<(), Error> {
    let meta_text = std::fs::read_to_string(args.run.join("run_meta.toml"))?;
    let meta: RunMeta = toml::from_str(&meta_text).map_err(|e| Error::Config(e.to_string()))?;
    let mut history = Vec::new();
    for k in 0..meta.steps {
        let text = std::fs::read_to_string(args.run.join(format!("s_{k:03}.txt")))?;
        history.push(Hamiltonian::parse(&text)?);
    }
    let sites = meta.sites.iter().copied().collect();
    let actions = ActionVector::new(meta.actions.iter().copied(), &sites)?;
    let omega: BTreeMap<Mode, f64> = meta.omega.iter().copied().collect();
    let nu: BTreeMap<Mode, f64> = omega
        .iter()
        .filter(|(j, _)| sites.contains(*j))
        .map(|(&j, &w)| (j, w))
        .collect();

    if args.nt < 2 || !args.nt.is_multiple_of(2) {
        return Err(Error::InvalidParameter(
            "--nt must be even and at least 2".into(),
        ));
    }
    let xs: Vec<f64> = (0..args.nx)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / args.nx as f64)
        .collect();
    let mut field = CsvWriter::new("t,x,re,im");
    for it in 0..=args.nt {
        let t = args.t0 + (args.t1 - args.t0) * it as f64 / args.nt as f64;
        let row = synth_solution(&history, &actions, &nu, t, &xs, meta.j, 16)?;
        for (ix, val) in row.iter().enumerate() {
            field.row(&[
                fmt_f64(t),
                fmt_f64(xs[ix]),
                fmt_f64(val.re),
                fmt_f64(val.im),
            ]);
        }
    }
    field.write_to(&args.run.join("field.csv"))?;

    let chi = TestFunction {
        t_center: (args.t0 + args.t1) / 2.0,
        t_halfwidth: (args.t1 - args.t0) / 2.0 * 0.9,
        k: 1,
        x_phase: 0.0,
    };
    let quad = QuadSpec {
        t0: args.t0,
        t1: args.t1,
        nt: args.nt.max(64),
        nx: args.nx.max(64),
    };
    let history_ref = &history;
    let actions_ref = &actions;
    let nu_ref = &nu;
    // the Hamiltonian orbit reversed in time solves the weak formulation of
    // the NLS with the eliminated multiplier V_j = omega_j + lambda_j - j^2
    let lambda: BTreeMap<Mode, f64> = meta.lambda.iter().copied().collect();
    let mut v_eliminated: BTreeMap<Mode, f64> = BTreeMap::new();
    for &(j, w) in &meta.omega {
        let vj = w + lambda.get(&j).copied().unwrap_or(0.0) - (j as f64) * (j as f64);
        if vj != 0.0 {
            v_eliminated.insert(j, vj);
        }
    }
    let slice_fn = move |t: f64| {
        kamnls::synth::synth_modes(history_ref, actions_ref, nu_ref, -t, meta.j, 16)
    };
    let residual = weak_residual_modes(&slice_fn, &v_eliminated, &meta.fcoeffs, &chi, quad)?;
    let mut summary = CsvWriter::new("t0,t1,nt,nx,residual_abs");
    summary.row(&[
        fmt_f64(args.t0),
        fmt_f64(args.t1),
        args.nt.to_string(),
        args.nx.to_string(),
        fmt_f64(residual.norm()),
    ]);
    summary.write_to(&args.run.join("residual.csv"))?;
    println!(
        "field written ({} x {} nodes), weak residual {:.3e}",
        args.nt + 1,
        args.nx,
        residual.norm()
    );
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), Error> {
    let mut summary = CsvWriter::new("artifact,key,value");
    // eps decay series
    let trace_path = dir.join("trace.csv");
    if trace_path.exists() {
        let text = std::fs::read_to_string(&trace_path)?;
        let mut decay = CsvWriter::new("n,eps,loglog_inv_eps");
        let mut final_eps = f64::NAN;
        for line in text.lines().skip(1) {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() < 2 {
                continue;
            }
            let n = cells[0];
            let eps: f64 = cells[1].parse().unwrap_or(f64::NAN);
            final_eps = eps;
            let ll = if eps > 0.0 && eps < 1.0 {
                (1.0 / eps).ln().ln()
            } else {
                f64::NAN
            };
            decay.row(&[n.to_string(), fmt_f64(eps), fmt_f64(ll)]);
        }
        decay.write_to(&dir.join("eps_decay.csv"))?;
        summary.row(&[
            "trace.csv".into(),
            "final_eps".into(),
            fmt_f64(final_eps),
        ]);
    }
    // measure rows, sorted by gamma
    let measure_path = dir.join("measure.csv");
    if measure_path.exists() {
        let text = std::fs::read_to_string(&measure_path)?;
        let mut rows: Vec<(f64, String)> = Vec::new();
        for line in text.lines().skip(1) {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let gamma: f64 = line
                .split(',')
                .next()
                .and_then(|g| g.parse().ok())
                .unwrap_or(f64::NAN);
            rows.push((gamma, line.to_string()));
        }
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut series = CsvWriter::new("gamma,fraction,ci_lo,ci_hi,coperta_sum");
        for (_, line) in &rows {
            series.row(&line.split(',').map(String::from).collect::<Vec<_>>());
        }
        series.write_to(&dir.join("measure_vs_gamma.csv"))?;
        summary.row(&[
            "measure.csv".into(),
            "rows".into(),
            rows.len().to_string(),
        ]);
    }
    // residual-vs-truncation: any residual_D*.csv files
    let mut residuals: Vec<(String, f64)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name.starts_with("residual") && name.ends_with(".csv") {
            let text = std::fs::read_to_string(entry.path())?;
            if let Some(line) = text.lines().nth(1) {
                if let Some(last) = line.split(',').next_back() {
                    if let Ok(v) = last.parse::<f64>() {
                        residuals.push((name.clone(), v));
                    }
                }
            }
        }
    }
    residuals.sort_by(|a, b| a.0.cmp(&b.0));
    if !residuals.is_empty() {
        let mut series = CsvWriter::new("artifact,residual_abs");
        for (name, v) in &residuals {
            series.row(&[name.clone(), fmt_f64(*v)]);
        }
        series.write_to(&dir.join("residual_vs_truncation.csv"))?;
        summary.row(&[
            "residual*.csv".into(),
            "count".into(),
            residuals.len().to_string(),
        ]);
    }
    let text = summary.finish();
    std::fs::write(dir.join("summary.csv"), &text)?;
    print!("{text}");
    Ok(())
}
