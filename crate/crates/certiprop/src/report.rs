//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting,
//! so identical inputs give byte-identical files.

use std::fmt::Write as _;

use certiprop_core::train::EpochLog;
use certiprop_core::verify::{ComparisonRow, StatusHistogram, VerificationResult};
use serde::Serialize;

pub const COMPARISON_HEADER: &str = "method,strategy,epsilon,p,verified_error,clean_error,mean_bound_range,mean_margin_lb,mean_time_s";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.strategy.map_or("-", |s| s.name()),
            r.epsilon,
            r.norm.name(),
            r.verified_error,
            r.clean_error,
            r.mean_bound_range,
            r.mean_margin_lb,
            r.mean_time_s
        )
        .unwrap();
    }
    out
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

pub fn histogram_csv(h: &StatusHistogram) -> String {
    let mut out = String::from("layer,status,fraction\n");
    for (k, layer) in h.layers.iter().enumerate() {
        for (s, f) in layer {
            writeln!(out, "{k},{},{f}", s.name()).unwrap();
        }
    }
    out
}

pub const TRAINING_LOG_HEADER: &str = "epoch,eps,kappa,beta,eta,loss,clean_err,ibp_verified_err";

pub fn training_log_csv(logs: &[EpochLog]) -> String {
    let mut out = format!("{TRAINING_LOG_HEADER}\n");
    for l in logs {
        out.push_str(&training_log_row(l));
    }
    out
}

pub fn training_log_row(l: &EpochLog) -> String {
    format!(
        "{},{},{},{},{},{},{},{}\n",
        l.epoch,
        l.eps,
        l.kappa,
        l.beta,
        l.eta,
        l.loss,
        l.clean_err,
        l.ibp_verified_err
    )
}

/// One row per verified instance.
pub fn instances_csv(results: &[VerificationResult]) -> String {
    let mut out = String::from("id,label,clean_correct,verified,min_margin_lb,bound_range,time_s\n");
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.id,
            r.label,
            r.clean_correct as u8,
            r.verified() as u8,
            r.min_margin(),
            r.bound_range,
            r.wall_time
        )
        .unwrap();
    }
    out
}

/// Outcome of attacking one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub id: usize,
    pub label: usize,
    pub clean_correct: bool,
    pub attacked: bool,
}

pub fn attack_csv(rows: &[AttackRow]) -> String {
    let mut out = String::from("id,label,clean_correct,attacked\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.id, r.label, r.clean_correct as u8, r.attacked as u8).unwrap();
    }
    out
}
