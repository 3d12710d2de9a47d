//! File outputs of an experiment run. The ensemble summary is JSON with
//! every float serialized to 17 significant digits (exact f64 round-trip),
//! emitted with a fixed field order so identical runs produce identical
//! bytes. The document layout is pinned by the versioned schema shipped in
//! `schemas/ensemble_summary.schema.json`.

use std::io::Write;

use crate::clock::ClockParams;
use crate::cosmo::EnsembleStats;
use crate::fock::ModelParams;

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped schema text, for tests and consumers.
pub const ENSEMBLE_SUMMARY_SCHEMA: &str =
    include_str!("../../schemas/ensemble_summary.schema.json");

#[derive(Debug)]
pub struct SummaryDoc<'a> {
    pub params: &'a ModelParams,
    pub clock_params: Option<&'a ClockParams>,
    pub steps: usize,
    pub dt: f64,
    pub record_stride: usize,
    pub master_seed: u64,
    pub n_max_used: usize,
    pub clock_n_max_used: Option<usize>,
    pub space: &'a EnsembleStats,
    pub clock: Option<&'a EnsembleStats>,
    pub warnings: &'a [String],
}

/// One float, 17 significant digits.
fn g17(x: f64) -> String {
    assert!(x.is_finite(), "non-finite value in summary output");
    format!("{x:.16e}")
}

fn write_f64_array<W: Write>(w: &mut W, key: &str, xs: &[f64], indent: &str) -> std::io::Result<()> {
    write!(w, "{indent}\"{key}\": [")?;
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            write!(w, ", ")?;
        }
        write!(w, "{}", g17(*x))?;
    }
    write!(w, "]")
}

fn write_stats_block<W: Write>(w: &mut W, stats: &EnsembleStats, indent: &str) -> std::io::Result<()> {
    let inner = format!("{indent}  ");
    writeln!(w, "{{")?;
    write_f64_array(w, "times", &stats.times, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "mean_n_bar", &stats.mean_n_bar, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "mean_n_stderr", &stats.mean_n_stderr, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "mean_n2_bar", &stats.mean_n2_bar, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "mean_n2_stderr", &stats.mean_n2_stderr, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "ratio_term", &stats.ratio_term, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "ratio_stderr", &stats.ratio_stderr, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "sigma2_bar", &stats.sigma2_bar, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "sigma2_stderr", &stats.sigma2_stderr, &inner)?;
    writeln!(w, ",")?;
    write_f64_array(w, "ess", &stats.ess, &inner)?;
    writeln!(w)?;
    write!(w, "{indent}}}")
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Emit the ensemble summary document.
pub fn write_summary<W: Write>(w: &mut W, doc: &SummaryDoc<'_>) -> std::io::Result<()> {
    writeln!(w, "{{")?;
    writeln!(w, "  \"schema_version\": {},", SCHEMA_VERSION)?;
    writeln!(w, "  \"params\": {{")?;
    writeln!(w, "    \"epsilon\": {},", g17(doc.params.epsilon))?;
    writeln!(w, "    \"g\": {},", g17(doc.params.g))?;
    writeln!(w, "    \"lambda\": {},", g17(doc.params.lambda))?;
    writeln!(w, "    \"tau\": {},", g17(doc.params.tau))?;
    writeln!(w, "    \"k_max\": {},", doc.params.k_max)?;
    writeln!(w, "    \"n_max\": {}", doc.n_max_used)?;
    writeln!(w, "  }},")?;
    if let Some(c) = doc.clock_params {
        writeln!(w, "  \"clock_params\": {{")?;
        writeln!(w, "    \"epsilon_p\": {},", g17(c.epsilon_p))?;
        writeln!(w, "    \"g_p\": {},", g17(c.g_p))?;
        writeln!(w, "    \"lambda_p\": {},", g17(c.lambda_p))?;
        writeln!(
            w,
            "    \"n_max\": {}",
            doc.clock_n_max_used.unwrap_or_default()
        )?;
        writeln!(w, "  }},")?;
    }
    writeln!(w, "  \"scheme\": \"{}\",", doc.space.scheme)?;
    writeln!(w, "  \"n_traj\": {},", doc.space.n_traj)?;
    writeln!(w, "  \"steps\": {},", doc.steps)?;
    writeln!(w, "  \"dt\": {},", g17(doc.dt))?;
    writeln!(w, "  \"record_stride\": {},", doc.record_stride)?;
    writeln!(w, "  \"master_seed\": {},", doc.master_seed)?;
    write!(w, "  \"space\": ")?;
    write_stats_block(w, doc.space, "  ")?;
    if let Some(clock) = doc.clock {
        writeln!(w, ",")?;
        write!(w, "  \"clock\": ")?;
        write_stats_block(w, clock, "  ")?;
    }
    writeln!(w, ",")?;
    write!(w, "  \"warnings\": [")?;
    for (i, warning) in doc.warnings.iter().enumerate() {
        if i > 0 {
            write!(w, ", ")?;
        }
        write!(w, "\"{}\"", json_escape(warning))?;
    }
    writeln!(w, "]")?;
    writeln!(w, "}}")
}

pub fn summary_to_string(doc: &SummaryDoc<'_>) -> String {
    let mut buf = Vec::new();
    write_summary(&mut buf, doc).expect("in-memory write");
    String::from_utf8(buf).expect("summary is UTF-8")
}
