//! JSON and CSV artifacts for solver, chord and search results.
//!
//! Floats are written at 17 significant digits so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::chord::{ChordResult, SearchReport};
use crate::penalty::{SolverReport, StageSummary};
use crate::scalar::Real;

/// Pretty JSON with `{:.16e}` floats.
struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with fixed float formatting.
/// Non-finite floats become `null`.
pub fn to_json<S: Serialize>(value: &S) -> String {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

fn vec64<T: Real>(xs: impl IntoIterator<Item = T>) -> Vec<f64> {
    xs.into_iter().map(Real::to_f64_lossy).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverRecord {
    pub delta: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub energy: f64,
    pub penalty_integral: f64,
    pub energy_constant_residual: f64,
    pub lambda: Vec<f64>,
    pub stages: Vec<StageSummary>,
    pub curve_csv: String,
}

impl SolverRecord {
    pub fn new<T: Real>(report: &SolverReport<T>, curve_csv: impl Into<String>) -> Self {
        Self {
            delta: report.delta_used.to_f64_lossy(),
            iterations: report.iterations,
            grad_norm: report.final_grad_norm.to_f64_lossy(),
            converged: report.converged,
            energy: report.energy.to_f64_lossy(),
            penalty_integral: report.penalty_integral.to_f64_lossy(),
            energy_constant_residual: report.energy_constant_residual.to_f64_lossy(),
            lambda: vec64(report.lambda_profile.iter().copied()),
            stages: report.stages.clone(),
            curve_csv: curve_csv.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChordRecord {
    pub classification: &'static str,
    pub converged: bool,
    pub energy: f64,
    pub residual0: f64,
    pub residual1: f64,
    pub endpoint_residual: f64,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub delta: f64,
    pub outer_iterations: usize,
    pub contact_nodes: Vec<usize>,
    pub prefix_end: Option<usize>,
    pub lambda: Vec<f64>,
    pub diagnostics: Vec<String>,
    pub curve_csv: String,
}

impl ChordRecord {
    pub fn new<T: Real>(r: &ChordResult<T>, curve_csv: impl Into<String>) -> Self {
        Self {
            classification: r.classification.as_str(),
            converged: r.converged,
            energy: r.energy.to_f64_lossy(),
            residual0: r.residual0.to_f64_lossy(),
            residual1: r.residual1.to_f64_lossy(),
            endpoint_residual: r.endpoint_residual.to_f64_lossy(),
            start: vec64(r.start().iter().copied()),
            end: vec64(r.end().iter().copied()),
            delta: r.delta.to_f64_lossy(),
            outer_iterations: r.outer_iterations,
            contact_nodes: r.contact_nodes.clone(),
            prefix_end: r.prefix_end,
            lambda: vec64(r.lambda_profile.iter().copied()),
            diagnostics: r.diagnostics.clone(),
            curve_csv: curve_csv.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchRecord {
    pub seeds: usize,
    pub solved: usize,
    pub failures: Vec<(usize, usize, String)>,
    pub classification_counts: Vec<(&'static str, usize)>,
    pub reversible: bool,
    pub expected_count: usize,
    pub degenerate: bool,
    pub meets_expected_count: bool,
    pub critical_values: Vec<f64>,
    pub image_coincidences: Vec<(usize, usize)>,
    pub warning: Option<String>,
    pub distinct: Vec<ChordRecord>,
}

impl SearchRecord {
    /// `csv_paths[i]` names the curve file of `report.distinct[i]`.
    pub fn new<T: Real>(
        report: &SearchReport<T>,
        csv_paths: &[String],
        warning: Option<String>,
    ) -> Self {
        use crate::chord::Classification::*;
        let classification_counts = [Ofgc, Otfgc, BoundaryTouching, Constant, Unconverged]
            .iter()
            .map(|k| {
                (
                    k.as_str(),
                    report
                        .all_results
                        .iter()
                        .filter(|r| r.classification == *k)
                        .count(),
                )
            })
            .collect();
        Self {
            seeds: report.seeds.len(),
            solved: report.all_results.len(),
            failures: report.failures.clone(),
            classification_counts,
            reversible: report.reversible,
            expected_count: report.expected_count,
            degenerate: report.degenerate,
            meets_expected_count: report.meets_expected_count(),
            critical_values: vec64(report.critical_values.iter().copied()),
            image_coincidences: report.image_coincidences.clone(),
            warning,
            distinct: report
                .distinct
                .iter()
                .enumerate()
                .map(|(i, r)| ChordRecord::new(r, csv_paths.get(i).cloned().unwrap_or_default()))
                .collect(),
        }
    }
}

/// One row per result: energy, classification, residuals, endpoints.
pub fn summary_csv<T: Real>(results: &[ChordResult<T>]) -> String {
    let dim = results.first().map_or(0, |r| r.curve.dimension());
    let mut out = String::from("energy,classification,residual0,residual1");
    for i in 0..dim {
        let _ = write!(out, ",a{}", i + 1);
    }
    for i in 0..dim {
        let _ = write!(out, ",b{}", i + 1);
    }
    out.push('\n');
    for r in results {
        let _ = write!(
            out,
            "{:.16e},{},{:.16e},{:.16e}",
            r.energy.to_f64_lossy(),
            r.classification.as_str(),
            r.residual0.to_f64_lossy(),
            r.residual1.to_f64_lossy()
        );
        for x in r.start().iter().chain(r.end().iter()) {
            let _ = write!(out, ",{:.16e}", x.to_f64_lossy());
        }
        out.push('\n');
    }
    out
}
