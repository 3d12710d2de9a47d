// Per-time z-score diagnostic for the growth sets.
use cosmogen::cosmo::{self, SimOptions};
use cosmogen::fock::ModelParams;
use cosmogen::harness::run::run_ensemble;
use cosmogen::noise::Scheme;

fn scan(eps: f64, g: f64, lam: f64, t_final: f64, dt: f64, steps: usize, stride: usize, n_max: usize, m: usize, seed: u64) {
    let p = ModelParams::new(eps, g, lam, 8, n_max).unwrap();
    let template = SimOptions::new(steps, dt, Scheme::Physical, seed).with_stride(stride);
    let run = run_ensemble(&p, &template, m).unwrap();
    let stats = cosmo::ensemble_spread(&run.records, Scheme::Physical).unwrap();
    let a = cosmo::CosmoAnalytic::new(eps, g, lam);
    println!("== ({eps},{g},{lam}) dt={dt} seed={seed} M={m} t_final={t_final}");
    for j in (2..stats.times.len()).step_by(2) {
        let t = stats.times[j];
        let expect = cosmo::mean_n_analytic(&a, t).unwrap();
        let z = (stats.mean_n_bar[j] - expect) / stats.mean_n_stderr[j];
        println!("  t={t:6.2} mean={:8.4} expect={:8.4} rel={:+.3}% z={z:+.2}", stats.mean_n_bar[j], expect, 100.0*(stats.mean_n_bar[j]-expect)/expect);
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    if which == "set2-02" {
        scan(0.5, 0.3, 1.0, 50.0, 0.02, 2500, 125, 128, 20000, 711);
    } else if which == "set2-01" {
        scan(0.5, 0.3, 1.0, 50.0, 0.01, 5000, 250, 128, 20000, 713);
    } else if which == "set2-02b" {
        scan(0.5, 0.3, 1.0, 50.0, 0.02, 2500, 125, 128, 20000, 7110);
    }
}
