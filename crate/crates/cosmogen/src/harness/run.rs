//! Parallel ensemble execution with deterministic aggregation.
//!
//! Trajectories are embarrassingly parallel; results are collected indexed
//! by trajectory and reduced in that fixed order, so the numerical output
//! depends only on (config, master seed), never on the worker count or on
//! scheduling. The Fock truncation is sized from the predicted growth and
//! doubled until every trajectory keeps its leakage under the threshold.

use std::path::PathBuf;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::clock::ClockParams;
use crate::cosmo::{self, CosmoAnalytic, EnsembleStats, SimOptions, TrajectoryRecord};
use crate::fock::ModelParams;
use crate::harness::config::ExperimentConfig;
use crate::harness::output::{self, SummaryDoc};
use crate::noise::StreamLabel;
use crate::{Error, Result};

/// Build the global worker pool once, honoring `COSMOGEN_THREADS`.
pub fn init_thread_pool() {
    static POOL: OnceLock<()> = OnceLock::new();
    POOL.get_or_init(|| {
        if let Ok(val) = std::env::var("COSMOGEN_THREADS") {
            if let Ok(n) = val.trim().parse::<usize>() {
                if n >= 1 {
                    // Ignore the error if a pool already exists (e.g. tests).
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}

/// Initial truncation from the predicted growth: 4× the predicted final
/// mean plus ten of its square roots (the harness doubles from here until
/// the leakage threshold holds).
pub fn initial_n_max(epsilon: f64, g: f64, lambda: f64, t_final: f64) -> usize {
    let predicted = if lambda > 0.0 {
        let a = CosmoAnalytic::new(epsilon, g, lambda);
        cosmo::mean_n_analytic(&a, t_final).unwrap_or(1.0)
    } else if epsilon != 0.0 {
        let amp = 2.0 * g / epsilon;
        amp * amp
    } else {
        let gt = g * t_final;
        gt * gt
    };
    let predicted = predicted.max(0.25);
    (4.0 * predicted + 10.0 * predicted.sqrt()).ceil() as usize + 4
}

#[derive(Debug)]
pub struct EnsembleRun {
    pub records: Vec<TrajectoryRecord>,
    pub n_max_used: usize,
    /// One note per truncation doubling that was needed.
    pub notes: Vec<String>,
}

/// Run `n_traj` independent trajectories of one sector in parallel,
/// doubling the truncation until no trajectory exceeds the leakage
/// threshold. `template.trajectory` is overridden by the index.
pub fn run_ensemble(
    params: &ModelParams,
    template: &SimOptions,
    n_traj: usize,
) -> Result<EnsembleRun> {
    init_thread_pool();
    let mut p = *params;
    let mut notes = Vec::new();
    const MAX_DOUBLINGS: usize = 6;
    for attempt in 0..=MAX_DOUBLINGS {
        let results: Vec<crate::Result<TrajectoryRecord>> = (0..n_traj)
            .into_par_iter()
            .map(|i| {
                let opts = template.clone().with_trajectory(i as u64);
                cosmo::simulate_trajectory(&p, &opts)
            })
            .collect();
        // Scan in trajectory order so error reporting is deterministic.
        let mut leaked = false;
        let mut records = Vec::with_capacity(n_traj);
        for (i, res) in results.into_iter().enumerate() {
            match res {
                Ok(rec) => records.push(rec),
                Err(Error::Leakage { leakage, .. }) => {
                    notes.push(format!(
                        "trajectory {i}: leakage {leakage:.2e} at n_max = {}; doubling basis",
                        p.n_max
                    ));
                    leaked = true;
                    break;
                }
                Err(e) => {
                    return Err(Error::Worker {
                        index: i as u64,
                        source: Box::new(e),
                    })
                }
            }
        }
        if !leaked {
            return Ok(EnsembleRun {
                records,
                n_max_used: p.n_max,
                notes,
            });
        }
        if attempt == MAX_DOUBLINGS {
            break;
        }
        p.n_max *= 2;
    }
    Err(Error::Leakage {
        leakage: f64::NAN,
        threshold: template.leakage_threshold,
        n_max: p.n_max,
    })
}

/// Everything a finished experiment leaves behind.
#[derive(Debug)]
pub struct RunArtifacts {
    pub stats: EnsembleStats,
    pub clock_stats: Option<EnsembleStats>,
    pub summary_path: PathBuf,
    pub out_dir: PathBuf,
    pub n_max_used: usize,
    pub clock_n_max_used: Option<usize>,
    pub warnings: Vec<String>,
}

/// Run a configured experiment end to end: simulate, aggregate
/// deterministically, and write the summary JSON plus any trajectory dumps
/// and the size-age correlation report for joint runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    init_thread_pool();
    let stride = cfg.effective_stride();
    let t_final = cfg.run.steps as f64 * cfg.run.dt;
    let n_max0 = cfg
        .model
        .n_max
        .unwrap_or_else(|| initial_n_max(cfg.model.epsilon, cfg.model.g, cfg.model.lambda, t_final));
    let space_params = ModelParams::new(
        cfg.model.epsilon,
        cfg.model.g,
        cfg.model.lambda,
        cfg.model.k_max,
        n_max0,
    )?;
    let template = SimOptions::new(cfg.run.steps, cfg.run.dt, cfg.run.scheme, cfg.run.seed)
        .with_stride(stride)
        .with_label(StreamLabel::Space);

    let mut warnings = Vec::new();
    let space_run = run_ensemble(&space_params, &template, cfg.run.n_trajectories)?;
    warnings.extend(space_run.notes.iter().cloned());
    let stats = cosmo::aggregate_records(&space_run.records, cfg.run.scheme)?;
    warnings.extend(stats.warnings.iter().cloned());

    let mut clock_stats = None;
    let mut clock_n_max_used = None;
    let mut clock_params_out = None;
    if let Some(cs) = &cfg.clock {
        let clock_params = ClockParams::new(cs.epsilon_p, cs.g_p, cs.lambda_p)?;
        let clock_n_max0 = cs
            .n_max
            .unwrap_or_else(|| initial_n_max(cs.epsilon_p, cs.g_p, cs.lambda_p, t_final));
        let clock_model = clock_params.to_model_params(cfg.model.k_max, clock_n_max0)?;
        let clock_template = template.clone().with_label(StreamLabel::Clock);
        let clock_run = run_ensemble(&clock_model, &clock_template, cfg.run.n_trajectories)?;
        warnings.extend(clock_run.notes.iter().cloned());
        let cstats = cosmo::aggregate_records(&clock_run.records, cfg.run.scheme)?;
        warnings.extend(cstats.warnings.iter().cloned());
        clock_n_max_used = Some(clock_run.n_max_used);
        clock_params_out = Some(clock_params);

        // Size-age correlation over the late-time window, when reachable.
        match crate::clock::size_age_correlation(&stats, &cstats, cs.lambda_p) {
            Ok(report) => {
                std::fs::create_dir_all(&cfg.run.out_dir)?;
                let f = std::fs::File::create(cfg.run.out_dir.join("correlation.csv"))?;
                report.write_csv(std::io::BufWriter::new(f))?;
            }
            Err(e) => warnings.push(format!("size-age correlation skipped: {e}")),
        }
        clock_stats = Some(cstats);
    }

    std::fs::create_dir_all(&cfg.run.out_dir)?;
    for (i, rec) in space_run
        .records
        .iter()
        .take(cfg.run.dump_trajectories)
        .enumerate()
    {
        let f = std::fs::File::create(cfg.run.out_dir.join(format!("trajectory_{i}.csv")))?;
        rec.write_csv(std::io::BufWriter::new(f))?;
    }

    let params_doc = ModelParams {
        n_max: space_run.n_max_used,
        ..space_params
    };
    let doc = SummaryDoc {
        params: &params_doc,
        clock_params: clock_params_out.as_ref(),
        steps: cfg.run.steps,
        dt: cfg.run.dt,
        record_stride: stride,
        master_seed: cfg.run.seed,
        n_max_used: space_run.n_max_used,
        clock_n_max_used,
        space: &stats,
        clock: clock_stats.as_ref(),
        warnings: &warnings,
    };
    let summary_path = cfg.run.out_dir.join("summary.json");
    let f = std::fs::File::create(&summary_path)?;
    let mut w = std::io::BufWriter::new(f);
    output::write_summary(&mut w, &doc)?;

    Ok(RunArtifacts {
        stats,
        clock_stats,
        summary_path,
        out_dir: cfg.run.out_dir.clone(),
        n_max_used: space_run.n_max_used,
        clock_n_max_used,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ClockSection, ExperimentConfig};

    fn tiny_config(dir: &std::path::Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.model.epsilon = 1.0;
        cfg.model.g = 0.5;
        cfg.model.lambda = 2.0;
        cfg.model.n_max = Some(24);
        cfg.run.n_trajectories = 60;
        cfg.run.steps = 100;
        cfg.run.dt = 0.02;
        cfg.run.seed = 4242;
        cfg.run.record_stride = 20;
        cfg.run.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn single_trajectory_stats_equal_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.run.n_trajectories = 1;
        let artifacts = run_experiment(&cfg).unwrap();
        let p = ModelParams::new(1.0, 0.5, 2.0, 8, 24).unwrap();
        let opts = SimOptions::new(100, 0.02, cfg.run.scheme, 4242).with_stride(20);
        let rec = cosmo::simulate_trajectory(&p, &opts).unwrap();
        for j in 0..rec.len() {
            assert_eq!(artifacts.stats.mean_n_bar[j], rec.mean_n[j]);
            assert_eq!(artifacts.stats.sigma2_bar[j], rec.sigma2[j]);
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run_experiment(&tiny_config(dir_a.path())).unwrap();
        let b = run_experiment(&tiny_config(dir_b.path())).unwrap();
        let text_a = std::fs::read(a.summary_path).unwrap();
        let text_b = std::fs::read(b.summary_path).unwrap();
        assert_eq!(text_a, text_b);
        assert!(dir_a.path().join("trajectory_0.csv").exists());
    }

    #[test]
    fn stats_independent_of_worker_count() {
        let p = ModelParams::new(1.0, 0.5, 2.0, 8, 24).unwrap();
        let template = SimOptions::new(50, 0.02, crate::noise::Scheme::Physical, 7).with_stride(10);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let run1 = pool1.install(|| run_ensemble(&p, &template, 40)).unwrap();
        let pool2 = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let run2 = pool2.install(|| run_ensemble(&p, &template, 40)).unwrap();
        for (a, b) in run1.records.iter().zip(&run2.records) {
            assert_eq!(a.mean_n, b.mean_n);
            assert_eq!(a.log_norm2, b.log_norm2);
        }
    }

    #[test]
    fn truncation_doubles_until_clean() {
        // Deliberately undersized basis: the growth run must escalate.
        let p = ModelParams::new(1.0, 0.5, 2.0, 8, 4).unwrap();
        let template =
            SimOptions::new(200, 0.02, crate::noise::Scheme::Physical, 99).with_stride(200);
        let run = run_ensemble(&p, &template, 30).unwrap();
        assert!(run.n_max_used > 4, "n_max_used = {}", run.n_max_used);
        assert!(!run.notes.is_empty());
        assert!(run
            .records
            .iter()
            .all(|r| r.leakage <= crate::constants::LEAKAGE_THRESHOLD));
    }

    #[test]
    fn joint_run_emits_clock_block_and_correlation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.run.steps = 1500;
        cfg.run.dt = 0.02;
        cfg.run.record_stride = 250;
        cfg.clock = Some(ClockSection {
            epsilon_p: 1.0,
            g_p: 0.5,
            lambda_p: 2.0,
            n_max: Some(24),
        });
        let artifacts = run_experiment(&cfg).unwrap();
        assert!(artifacts.clock_stats.is_some());
        let text = std::fs::read_to_string(&artifacts.summary_path).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(doc.get("clock").is_some());
        assert!(dir.path().join("correlation.csv").exists());
    }

    #[test]
    fn initial_truncation_rule() {
        // Growth prediction at the final time drives the initial basis.
        let n = initial_n_max(1.0, 0.5, 2.0, 25.0);
        assert!(n >= 50 && n <= 90, "n = {n}");
        // The no-collapse oscillation uses its amplitude instead.
        let n_osc = initial_n_max(1.0, 0.2, 0.0, 1000.0);
        assert!(n_osc < 20);
    }
}
