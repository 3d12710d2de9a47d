//! Command-line front end: one verb per experiment family.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cosmogen::cosmo::{self, CosmoAnalytic, SimOptions};
use cosmogen::exact::{self, H0InitialState, SeparationParams};
use cosmogen::fock::ModelParams;
use cosmogen::harness::config::{ClockSection, ExperimentConfig, Overrides};
use cosmogen::harness::output::{self, SummaryDoc};
use cosmogen::harness::run::{self, run_ensemble};
use cosmogen::harness::validate::{validate, Suite};
use cosmogen::noise::Scheme;
use cosmogen::Error;

#[derive(Parser)]
#[command(
    name = "cosmogen",
    version,
    about = "Collapse-driven universe growth: trajectory ensembles, closed-form analytics, validation"
)]
struct Cli {
    /// Suppress progress chatter on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonRunFlags {
    /// Experiment file (TOML); flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trajectories.
    #[arg(long)]
    traj: Option<usize>,
    /// Steps per trajectory.
    #[arg(long)]
    steps: Option<usize>,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Noise scheme: raw | physical.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Hamiltonian-free collapse ensemble: record distribution and Born windows.
    H0Collapse {
        #[command(flatten)]
        common: CommonRunFlags,
        /// Collapse rate λ.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Initial superposition as "n:weight,n:weight,...".
        #[arg(long, default_value = "0:0.5,1:0.5")]
        components: String,
        /// Window half-width parameter R.
        #[arg(long, default_value_t = 5)]
        r: u32,
    },
    /// Growth-model ensemble with summary statistics.
    Cosmo {
        #[command(flatten)]
        common: CommonRunFlags,
    },
    /// Joint space + clock ensemble with the size-age correlation report.
    Clock {
        #[command(flatten)]
        common: CommonRunFlags,
    },
    /// Hop probability between two separated records: both analytic
    /// branches and an optional Monte Carlo estimate.
    Hopping {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 25.0)]
        t1: f64,
        #[arg(long, default_value_t = 2500.0)]
        t2: f64,
        #[arg(long, default_value_t = 0)]
        n1: usize,
        #[arg(long, default_value_t = 1)]
        n2: usize,
        /// Squared weight of the n1 component.
        #[arg(long, default_value_t = 0.5)]
        w1: f64,
        #[arg(long, default_value_t = 5)]
        r: u32,
        /// Monte Carlo trajectories (0 skips the MC estimate).
        #[arg(long, default_value_t = 0)]
        traj: usize,
        #[arg(long, default_value_t = 0.5)]
        dt: f64,
        #[arg(long, default_value_t = 707)]
        seed: u64,
    },
    /// Closed-form growth curves to CSV: mean size, asymptotic second
    /// moment, and the Gaussian-approximation ratio-term prediction.
    Analytic {
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.5)]
        g: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        #[arg(long = "t-max", default_value_t = 25.0)]
        t_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the validation suite: h0 | cosmo | clock | all.
    Validate {
        #[arg(default_value = "all")]
        suite: String,
        /// Write the machine-readable report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1 (help/version requests exit 0).
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    run::init_thread_pool();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Parse(_) | Error::InvalidParams(_) => 1,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> cosmogen::Result<ExitCode> {
    match cli.command {
        Command::Cosmo { common } => run_configured(common, cli.quiet, false),
        Command::Clock { common } => run_configured(common, cli.quiet, true),
        Command::H0Collapse {
            common,
            lambda,
            components,
            r,
        } => h0_collapse(common, lambda, &components, r, cli.quiet),
        Command::Hopping {
            lambda,
            t1,
            t2,
            n1,
            n2,
            w1,
            r,
            traj,
            dt,
            seed,
        } => hopping(lambda, t1, t2, n1, n2, w1, r, traj, dt, seed),
        Command::Analytic {
            epsilon,
            g,
            lambda,
            t_max,
            points,
            out,
        } => analytic(epsilon, g, lambda, t_max, points, out),
        Command::Validate { suite, out } => run_validate(&suite, out, cli.quiet),
    }
}

fn load_config(common: &CommonRunFlags, want_clock: bool) -> cosmogen::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if want_clock && cfg.clock.is_none() {
        cfg.clock = Some(ClockSection::default());
    }
    cfg.apply_overrides(&Overrides {
        seed: common.seed,
        n_trajectories: common.traj,
        steps: common.steps,
        dt: common.dt,
        scheme: common.scheme,
        out_dir: common.out.clone(),
    });
    Ok(cfg)
}

fn run_configured(
    common: CommonRunFlags,
    quiet: bool,
    want_clock: bool,
) -> cosmogen::Result<ExitCode> {
    let cfg = load_config(&common, want_clock)?;
    let artifacts = run::run_experiment(&cfg)?;
    if !quiet {
        eprintln!(
            "wrote {} ({} trajectories, n_max = {})",
            artifacts.summary_path.display(),
            cfg.run.n_trajectories,
            artifacts.n_max_used
        );
        for w in &artifacts.warnings {
            eprintln!("warning: {w}");
        }
    }
    // Completed runs with leakage/ESS warnings signal a degraded result.
    Ok(if artifacts.warnings.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn parse_components(text: &str) -> cosmogen::Result<H0InitialState> {
    let mut components = Vec::new();
    for part in text.split(',') {
        let mut halves = part.trim().splitn(2, ':');
        let n: usize = halves
            .next()
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad component '{part}': {e}")))?;
        let w: f64 = halves
            .next()
            .ok_or_else(|| Error::Parse(format!("component '{part}' missing ':weight'")))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad weight in '{part}': {e}")))?;
        if w <= 0.0 {
            return Err(Error::Parse(format!("weight must be positive in '{part}'")));
        }
        components.push((n, num_complex::Complex64::new(w.sqrt(), 0.0)));
    }
    H0InitialState::new(&components)
}

fn h0_collapse(
    common: CommonRunFlags,
    lambda: f64,
    components: &str,
    r: u32,
    quiet: bool,
) -> cosmogen::Result<ExitCode> {
    let mut cfg = load_config(&common, false)?;
    cfg.model.epsilon = 0.0;
    cfg.model.g = 0.0;
    cfg.model.lambda = lambda;
    cfg.validate()?;
    let init = parse_components(components)?;
    let sep = SeparationParams::new(r)?;
    let n_max = init.max_n() + 1; // one empty headroom slot above the support
    let p = ModelParams::new(0.0, 0.0, lambda, cfg.model.k_max, n_max)?;
    let stride = cfg.effective_stride();
    let template = SimOptions::new(cfg.run.steps, cfg.run.dt, cfg.run.scheme, cfg.run.seed)
        .with_stride(stride)
        .with_initial(init.clone());
    let ensemble = run_ensemble(&p, &template, cfg.run.n_trajectories)?;
    let stats = cosmo::aggregate_records(&ensemble.records, cfg.run.scheme)?;

    std::fs::create_dir_all(&cfg.run.out_dir)?;
    let t_final = cfg.run.steps as f64 * cfg.run.dt;

    // Record distribution curve over the mixture support.
    let mixture = exact::GaussianMixture::h0(&init, lambda, t_final);
    let windows = mixture.windows(6.0);
    let (b_min, b_max) = (windows.first().unwrap().0, windows.last().unwrap().1);
    let f = std::fs::File::create(cfg.run.out_dir.join("pdf.csv"))?;
    exact::write_pdf_csv(
        std::io::BufWriter::new(f),
        &init,
        lambda,
        t_final,
        b_min,
        b_max,
        401,
    )?;

    // Born-window classification of the final records.
    let occupations = init.occupations();
    let mut counts = vec![0usize; occupations.len()];
    let mut unclassified = 0usize;
    for rec in &ensemble.records {
        match exact::classify_b(
            *rec.brownian.last().unwrap(),
            lambda,
            t_final,
            &occupations,
            sep,
        ) {
            Some(idx) => counts[idx] += 1,
            None => unclassified += 1,
        }
    }

    let doc = SummaryDoc {
        params: &p,
        clock_params: None,
        steps: cfg.run.steps,
        dt: cfg.run.dt,
        record_stride: stride,
        master_seed: cfg.run.seed,
        n_max_used: ensemble.n_max_used,
        clock_n_max_used: None,
        space: &stats,
        clock: None,
        warnings: &stats.warnings,
    };
    let summary_path = cfg.run.out_dir.join("summary.json");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&summary_path)?);
    output::write_summary(&mut w, &doc)?;
    drop(w);

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "n,weight,window_frequency")?;
    for (i, &n) in occupations.iter().enumerate() {
        writeln!(
            stdout,
            "{},{:.6},{:.6}",
            n,
            init.weights()[i],
            counts[i] as f64 / cfg.run.n_trajectories as f64
        )?;
    }
    writeln!(
        stdout,
        "unclassified,{:.3e},-",
        unclassified as f64 / cfg.run.n_trajectories as f64
    )?;
    if !quiet {
        eprintln!("wrote {}", summary_path.display());
    }
    Ok(if stats.warnings.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[allow(clippy::too_many_arguments)]
fn hopping(
    lambda: f64,
    t1: f64,
    t2: f64,
    n1: usize,
    n2: usize,
    w1: f64,
    r: u32,
    traj: usize,
    dt: f64,
    seed: u64,
) -> cosmogen::Result<ExitCode> {
    let init = H0InitialState::two_level(n1, w1, n2, 1.0 - w1)?;
    let sep = SeparationParams::new(r)?;
    let hop = exact::hop_probability(&init, lambda, t1, t2, n1, n2, sep)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "sinh_approximation,{:.6e}", hop.sinh_approx)?;
    writeln!(out, "window_quadrature,{:.6e}", hop.quadrature)?;
    writeln!(out, "quadrature_abs_error,{:.1e}", hop.quadrature_error)?;
    writeln!(out, "well_separated,{}", hop.well_separated)?;
    writeln!(out, "long_interval,{}", hop.long_interval)?;
    if traj > 0 {
        let t = t1 + t2;
        let steps = (t / dt).round() as usize;
        let stride = (t1 / dt).round() as usize;
        if stride == 0 || steps % stride != 0 {
            return Err(Error::Config(
                "the MC grid needs dt dividing t1 and t1 dividing t1+t2".into(),
            ));
        }
        let p = ModelParams::new(0.0, 0.0, lambda, 8, n1.max(n2) + 1)?;
        let rf = sep.r();
        let (c1, half1) = (2.0 * lambda * t1 * n1 as f64, rf * (lambda * t1).sqrt());
        let (c2, half2) = (2.0 * lambda * t * n2 as f64, rf * (lambda * t2).sqrt());
        use rayon::prelude::*;
        let counts: Vec<cosmogen::Result<usize>> = (0..traj)
            .into_par_iter()
            .map(|i| {
                let opts = SimOptions::new(steps, dt, Scheme::Physical, seed)
                    .with_stride(stride)
                    .with_trajectory(i as u64)
                    .with_initial(init.clone());
                let rec = cosmo::simulate_trajectory(&p, &opts)?;
                // Record index 1 is t1 (stride = t1/dt).
                let b1 = rec.brownian[1];
                let b = *rec.brownian.last().unwrap();
                Ok(usize::from(
                    (b1 - c1).abs() <= half1 && (b - c2).abs() <= half2,
                ))
            })
            .collect();
        let mut hops = 0usize;
        for c in counts {
            hops += c?;
        }
        writeln!(out, "mc_hops,{hops}")?;
        writeln!(out, "mc_frequency,{:.3e}", hops as f64 / traj as f64)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn analytic(
    epsilon: f64,
    g: f64,
    lambda: f64,
    t_max: f64,
    points: usize,
    out: Option<PathBuf>,
) -> cosmogen::Result<ExitCode> {
    if points < 2 || !(t_max > 0.0) {
        return Err(Error::Config("need points >= 2 and t-max > 0".into()));
    }
    let a = CosmoAnalytic::new(epsilon, g, lambda);
    let mut rows = String::from("t,meanN,meanN2_asymptotic,ratio_term_oracle\n");
    for i in 0..points {
        let t = t_max * i as f64 / (points - 1) as f64;
        let mean = cosmo::mean_n_analytic(&a, t)?;
        let mean2 = cosmo::mean_n2_asymptotic(&a, t);
        // In the asymptotic regime the variance of the ensemble mean equals
        // its square, giving 2 mean² for the ratio-term prediction.
        let ratio = cosmo::appendix_a_oracle(&a, t, mean2 - mean * mean)?;
        rows.push_str(&format!("{t:.16e},{mean:.16e},{mean2:.16e},{ratio:.16e}\n"));
    }
    match out {
        Some(path) => std::fs::write(path, rows)?,
        None => print!("{rows}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_validate(suite: &str, out: Option<PathBuf>, quiet: bool) -> cosmogen::Result<ExitCode> {
    let suite: Suite = suite.parse()?;
    let results = validate(suite);
    let mut failures = 0usize;
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failures += 1;
        }
    }
    if let Some(path) = out {
        let mut doc = String::from("[\n");
        for (i, r) in results.iter().enumerate() {
            doc.push_str(&format!(
                "  {{\"id\": \"{}\", \"passed\": {}, \"measured\": {:.16e}, \"target\": {:.16e}, \"tolerance\": {:.16e}, \"runtime_s\": {:.3}, \"detail\": {}}}{}\n",
                r.id,
                r.passed,
                r.measured,
                r.target,
                r.tolerance,
                r.runtime_s,
                serde_json::to_string(&r.detail).expect("string"),
                if i + 1 < results.len() { "," } else { "" }
            ));
        }
        doc.push_str("]\n");
        std::fs::write(path, doc)?;
    }
    if !quiet {
        eprintln!("{} checks, {} failed", results.len(), failures);
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
