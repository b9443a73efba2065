//! Deterministic plain-text run reports and CSV side files.
//!
//! Reports are key-value documents with bracketed section headers. All floats
//! are printed with 17 significant digits so that reruns with the same seed
//! are byte-identical; wall-clock timings go to stderr only and never into
//! the report.

use sha2::{Digest, Sha256};
use std::fmt::Write as _;

use crate::conditions::ConditionReport;
use crate::dichotomy::DichotomyReport;
use crate::solver::SolveReport;
use crate::verify::{LineResidual, ResidualReport};

/// 17 significant digits, locale-free; round-trips any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Hex SHA-256 of the problem file contents.
pub fn problem_hash(source: &str) -> String {
    let mut h = Sha256::new();
    h.update(source.as_bytes());
    format!("{:x}", h.finalize())
}

/// Builder for the report document.
pub struct Report {
    out: String,
}

impl Report {
    pub fn new(label: &str, source: &str, seed: u64) -> Self {
        let mut out = String::new();
        let _ = writeln!(out, "tool = qpsolve {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "problem = {label}");
        let _ = writeln!(out, "hash = sha256:{}", problem_hash(source));
        let _ = writeln!(out, "seed = {seed}");
        Report { out }
    }

    pub fn section(&mut self, name: &str) {
        let _ = writeln!(self.out, "\n[{name}]");
    }

    pub fn kv(&mut self, key: &str, value: impl AsRef<str>) {
        let _ = writeln!(self.out, "{key} = {}", value.as_ref());
    }

    pub fn kv_f64(&mut self, key: &str, value: f64) {
        let _ = writeln!(self.out, "{key} = {}", fmt_f64(value));
    }

    pub fn conditions(&mut self, report: &ConditionReport) {
        self.section("conditions");
        self.kv("overall", report.overall().as_str());
        for f in &report.fragments {
            self.kv(&format!("{}.verdict", f.name), f.verdict.as_str());
            self.kv_f64(&format!("{}.margin", f.name), f.margin);
            self.kv(&format!("{}.samples", f.name), f.samples.to_string());
            let argmin = f
                .argmin
                .iter()
                .map(|&v| fmt_f64(v))
                .collect::<Vec<_>>()
                .join(", ");
            self.kv(&format!("{}.argmin", f.name), format!("[{argmin}]"));
            for (i, n) in f.notes.iter().enumerate() {
                self.kv(&format!("{}.note{}", f.name, i), n);
            }
        }
    }

    pub fn solve(&mut self, report: &SolveReport) {
        self.section("solve");
        self.kv("converged", report.converged.to_string());
        self.kv_f64("j_value", report.j_value);
        self.kv_f64("grad_norm", report.grad_norm);
        self.kv("iterations", report.iterations.to_string());
        self.kv_f64("containment_margin", report.containment_margin);
        self.kv_f64("tail_ratio", report.tail_ratio);
        self.kv(
            "initial_guess_fallback",
            report.initial_guess_fallback.to_string(),
        );
        for (i, n) in report.notes.iter().enumerate() {
            self.kv(&format!("note{i}"), n);
        }
        // canonical coefficients, sorted lexicographically for determinism
        let mut modes: Vec<_> = report.u.canonical_modes().collect();
        modes.sort_by(|a, b| a.0.cmp(b.0));
        for (n, c) in modes {
            let key = format!(
                "mode[{}]",
                n.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            );
            let value = c
                .iter()
                .map(|z| format!("{}{:+}i", fmt_f64(z.re), FmtIm(z.im)))
                .collect::<Vec<_>>()
                .join(", ");
            self.kv(&key, value);
        }
    }

    pub fn residuals(&mut self, report: &ResidualReport) {
        self.section("verify");
        self.kv_f64("torus_residual_sup", report.torus_sup);
        self.kv_f64("torus_residual_l2", report.torus_l2);
        self.kv_f64("line_residual_sup", report.line_sup);
        self.kv_f64("line_residual_l2", report.line_l2);
        self.kv_f64("window", report.window);
        self.kv_f64("dt", report.dt);
        self.kv_f64("sup_speed", report.sup_speed);
        self.kv_f64("sup_speed_doubled_window", report.sup_speed_doubled);
        if let Some(d1) = &report.d1 {
            self.kv_f64("d1", d1.value);
            self.kv_f64("d1_doubled_window", d1.doubled);
            self.kv_f64("metric_equiv_lower", d1.equiv_lower);
            self.kv_f64("metric_equiv_upper", d1.equiv_upper);
        }
        if let Some(u) = &report.uniqueness {
            self.kv("uniqueness.trials", u.trials.to_string());
            self.kv("uniqueness.converged_runs", u.converged_runs.to_string());
            self.kv_f64("uniqueness.max_coeff_distance", u.max_coeff_distance);
            self.kv_f64("uniqueness.max_d1", u.max_d1);
            self.kv("uniqueness.inconclusive", u.inconclusive.to_string());
            if let Some(note) = &u.note {
                self.kv("uniqueness.note", note);
            }
        }
    }

    pub fn dichotomy(&mut self, report: &DichotomyReport) {
        self.section("dichotomy");
        self.kv("verdict", report.verdict.as_str());
        let exps = report
            .exponents
            .iter()
            .map(|&l| fmt_f64(l))
            .collect::<Vec<_>>()
            .join(", ");
        self.kv("exponents", format!("[{exps}]"));
        self.kv("stable_dim", report.stable_dim.to_string());
        self.kv("unstable_dim", report.unstable_dim.to_string());
        self.kv_f64("gap", report.gap);
        if let Some(alpha) = report.alpha {
            self.kv_f64("alpha", alpha);
        }
        self.kv_f64("confidence", report.confidence);
        self.kv_f64("window_start", report.window.0);
        self.kv_f64("window_end", report.window.1);
    }

    pub fn render(&self) -> String {
        self.out.clone()
    }
}

/// Signed imaginary part with 17 significant digits (helper for mode lists).
struct FmtIm(f64);

impl std::fmt::Display for FmtIm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 < 0.0 || (self.0 == 0.0 && self.0.is_sign_negative()) {
            write!(f, "-{}", fmt_f64(-self.0))
        } else {
            write!(f, "+{}", fmt_f64(self.0))
        }
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.out)
    }
}

/// CSV of the residual time series: t, residual components, speed.
pub fn line_residual_csv(line: &LineResidual, m: usize) -> String {
    let mut out = String::new();
    let comps: Vec<String> = (1..=m).map(|i| format!("residual_x{i}")).collect();
    let _ = writeln!(out, "t,{},speed", comps.join(","));
    for ((t, r), s) in line.times.iter().zip(&line.values).zip(&line.speeds) {
        let row: Vec<String> = r.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{},{},{}", fmt_f64(*t), row.join(","), fmt_f64(*s));
    }
    out
}

/// CSV of the running exponent estimates: t, exponent_1..exponent_2m.
pub fn exponents_csv(report: &DichotomyReport) -> String {
    let mut out = String::new();
    let n = report.exponents.len();
    let heads: Vec<String> = (1..=n).map(|i| format!("exponent_{i}")).collect();
    let _ = writeln!(out, "t,{}", heads.join(","));
    for (t, exps) in &report.series {
        let row: Vec<String> = exps.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{},{}", fmt_f64(*t), row.join(","));
    }
    out
}
