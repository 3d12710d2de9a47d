// Scratch calibration runs; not part of the deliverable surface.
use cosmogen::cosmo::{self, SimOptions};
use cosmogen::exact::{self, H0InitialState, SeparationParams};
use cosmogen::fock::ModelParams;
use cosmogen::noise::Scheme;
use cosmogen::stats;
use rayon::prelude::*;
use std::time::Instant;

fn growth_set(eps: f64, g: f64, lam: f64, t_final: f64, dt: f64, n_max: usize, m: usize, seed: u64) {
    let steps = (t_final / dt).round() as usize;
    let p = ModelParams::new(eps, g, lam, 8, n_max).unwrap();
    let t0 = Instant::now();
    let recs: Vec<_> = (0..m).into_par_iter().map(|i| {
        let mut o = SimOptions::new(steps, dt, Scheme::Physical, seed).with_stride(steps).with_trajectory(i as u64);
        o.enforce_leakage = false;
        cosmo::simulate_trajectory(&p, &o).unwrap()
    }).collect();
    let wall = t0.elapsed().as_secs_f64();
    let max_leak = recs.iter().map(|r| r.leakage).fold(0.0f64, f64::max);
    let mean_n: Vec<f64> = recs.iter().map(|r| *r.mean_n.last().unwrap()).collect();
    let mean_n2: Vec<f64> = recs.iter().map(|r| *r.mean_n2.last().unwrap()).collect();
    let w = vec![1.0; m];
    let est = stats::batch_weighted_mean(&mean_n, &w, 20);
    let est2 = stats::batch_weighted_mean(&mean_n2, &w, 20);
    let a = cosmo::CosmoAnalytic::new(eps, g, lam);
    let expect = cosmo::mean_n_analytic(&a, t_final).unwrap();
    let z = (est.mean - expect) / est.stderr;
    let ratio8 = est2.mean / (2.0 * est.mean * est.mean);
    println!("set eps={eps} g={g} lam={lam} dt={dt} n_max={n_max} M={m}: meanN={:.4} expect={:.4} bias={:+.4} ({:+.1} se, rel {:+.3}%) N2ratio={:.4} maxleak={:.2e} wall={:.1}s",
        est.mean, expect, est.mean-expect, z, 100.0*(est.mean-expect)/expect, ratio8, max_leak, wall);
}

fn born(dt: f64, m: usize, seed: u64) {
    let lam = 1.0f64; let t = 25.0f64;
    let steps = (t / dt).round() as usize;
    let p = ModelParams::new(0.0, 0.0, lam, 8, 5).unwrap();
    let init = H0InitialState::two_level(1, 0.3, 4, 0.7).unwrap();
    let res: Vec<Option<usize>> = (0..m).into_par_iter().map(|i| {
        let o = SimOptions::new(steps, dt, Scheme::Physical, seed).with_stride(steps).with_trajectory(i as u64).with_initial(init.clone());
        let r = cosmo::simulate_trajectory(&p, &o).unwrap();
        exact::classify_b(*r.brownian.last().unwrap(), lam, t, &[1,4], SeparationParams::default())
    }).collect();
    let f1 = res.iter().filter(|c| **c == Some(0)).count() as f64 / m as f64;
    let f4 = res.iter().filter(|c| **c == Some(1)).count() as f64 / m as f64;
    let unc = res.iter().filter(|c| c.is_none()).count() as f64 / m as f64;
    let se = (0.3f64*0.7/m as f64).sqrt();
    println!("born dt={dt} M={m}: f1={f1:.4} (want 0.3, {:+.1} se) f4={f4:.4} unclassified={unc:.1e}", (f1-0.3)/se);
}

fn sampler_equiv_at(seed: u64, t: f64) {
    sampler_equiv_impl(seed, t)
}

fn sampler_equiv(seed: u64) {
    sampler_equiv_impl(seed, 5.0)
}

fn sampler_equiv_impl(seed: u64, t: f64) {
    let lam = 1.0f64; let dt = 0.01f64;
    let steps = (t / dt).round() as usize;
    let p = ModelParams::new(0.0, 0.0, lam, 8, 2).unwrap();
    let init = H0InitialState::two_level(0, 0.5, 1, 0.5).unwrap();
    let m = 10_000usize;
    let run = |scheme: Scheme, seed_off: u64| -> (Vec<f64>, Vec<f64>) {
        let out: Vec<(f64, f64)> = (0..m).into_par_iter().map(|i| {
            let o = SimOptions::new(steps, dt, scheme, seed + seed_off).with_stride(steps).with_trajectory(i as u64).with_initial(init.clone());
            let r = cosmo::simulate_trajectory(&p, &o).unwrap();
            (*r.brownian.last().unwrap(), *r.log_norm2.last().unwrap())
        }).collect();
        (out.iter().map(|x| x.0).collect(), out.iter().map(|x| x.1).collect())
    };
    let (bx, lwx) = run(Scheme::Raw, 0);
    let (by, _) = run(Scheme::Physical, 1);
    let maxl = lwx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let wx: Vec<f64> = lwx.iter().map(|l| (l - maxl).exp()).collect();
    let wy = vec![1.0; m];
    let ks = stats::ks_weighted_two_sample(&bx, &wx, &by, &wy, 0.01);
    println!("equiv seed={seed}: D={:.4} ess_raw={:.1} stat={:.3} crit={:.3} pass={}", ks.d, stats::ess(&wx), ks.statistic, ks.critical, ks.passed);
    // one-sample against exact mixture as well
    let ks1 = stats::ks_weighted_one_sample(&bx, &wx, |b| exact::cdf_b(&init, lam, t, b), 0.01);
    println!("  raw one-sample: D={:.4} stat={:.3} pass={}", ks1.d, ks1.statistic, ks1.passed);
    let ks2 = stats::ks_weighted_one_sample(&by, &wy, |b| exact::cdf_b(&init, lam, t, b), 0.01);
    println!("  phys one-sample: D={:.4} stat={:.3} pass={}", ks2.d, ks2.statistic, ks2.passed);
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(|s| s.as_str()).unwrap_or("all");
    if what == "all" || what == "growth" {
        // set 1 at a few dt
        growth_set(1.0, 0.5, 2.0, 25.0, 0.04, 96, 4000, 100);
        growth_set(1.0, 0.5, 2.0, 25.0, 0.02, 96, 4000, 101);
        growth_set(1.0, 0.5, 2.0, 25.0, 0.01, 96, 4000, 102);
        growth_set(1.0, 0.5, 2.0, 25.0, 0.005, 96, 4000, 103);
    }
    if what == "all" || what == "sets" {
        growth_set(0.5, 0.3, 1.0, 50.0, 0.02, 128, 4000, 110);
        growth_set(2.0, 0.5, 0.5, 100.0, 0.04, 64, 4000, 120);
    }
    if what == "set3" {
        growth_set(2.0, 0.5, 0.5, 100.0, 0.01, 64, 20000, 123);
        growth_set(2.0, 0.5, 0.5, 100.0, 0.005, 64, 20000, 124);
    }
    if what == "all" || what == "born" {
        born(0.1, 10_000, 200);
        born(0.05, 10_000, 201);
        born(0.01, 10_000, 202);
    }
    if what == "all" || what == "equiv" {
        sampler_equiv(300);
        sampler_equiv(301);
        sampler_equiv(302);
    }
    if what == "equiv1" {
        for s in 400..408u64 {
            sampler_equiv_at(s, 1.0);
        }
    }
}
// appended: set-3 dt scan entry
