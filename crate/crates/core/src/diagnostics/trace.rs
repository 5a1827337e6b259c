use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{beta_error, dominant_accuracy, gamma_error, kl_beta_max};
use crate::error::{invalid, Result};
use crate::model::{Instance, TopicProportions, TopicWordMatrix};

/// Per-iteration error measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub c_beta: f64,
    pub c_gamma: f64,
    pub kl_beta_max: f64,
    pub dominant_acc: f64,
    pub estep_objective_mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub rows: Vec<TraceRow>,
}

pub const TRACE_HEADER: [&str; 6] = [
    "t",
    "C_beta",
    "C_gamma",
    "kl_beta_max",
    "dominant_acc",
    "estep_objective_mean",
];

fn fmt(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn parse(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" => Ok(f64::INFINITY),
        other => other
            .parse()
            .map_err(|_| invalid(format!("cannot parse trace value {other:?}"))),
    }
}

impl TraceRow {
    pub(crate) fn csv_fields(&self) -> [String; 6] {
        [
            self.t.to_string(),
            fmt(self.c_beta),
            fmt(self.c_gamma),
            fmt(self.kl_beta_max),
            fmt(self.dominant_acc),
            fmt(self.estep_objective_mean),
        ]
    }
}

/// Writes trace rows one at a time, flushing after each, so a run that
/// fails part-way leaves every completed row on disk.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(TRACE_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write_row(&mut self, row: &TraceRow) -> Result<()> {
        self.inner.write_record(row.csv_fields())?;
        self.inner.flush()?;
        Ok(())
    }
}

impl ErrorTrace {
    /// Writes the trace as CSV; infinities are written as `inf`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = TraceWriter::new(out)?;
        for row in &self.rows {
            w.write_row(row)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().ne(TRACE_HEADER) {
            return Err(invalid(format!("unexpected trace header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 6 {
                return Err(invalid("trace rows need six fields"));
            }
            rows.push(TraceRow {
                t: rec[0]
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("bad iteration index {:?}", &rec[0])))?,
                c_beta: parse(&rec[1])?,
                c_gamma: parse(&rec[2])?,
                kl_beta_max: parse(&rec[3])?,
                dominant_acc: parse(&rec[4])?,
                estep_objective_mean: parse(&rec[5])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Measures one iterate against the ground truth. `perm[e]` is the true topic
/// of estimated topic `e`; `mask` restricts the words entering C_beta.
pub fn record_trace(
    t: usize,
    beta: &TopicWordMatrix,
    gammas: &[TopicProportions],
    objectives: &[f64],
    instance: &Instance,
    perm: &[usize],
    mask: Option<&[bool]>,
) -> TraceRow {
    let truth = instance.gammas_true();
    let mean = if objectives.is_empty() {
        0.0
    } else {
        objectives.iter().sum::<f64>() / objectives.len() as f64
    };
    TraceRow {
        t,
        c_beta: beta_error(beta, &instance.beta_true, perm, mask),
        c_gamma: gamma_error(gammas, &truth, perm),
        kl_beta_max: kl_beta_max(beta, &instance.beta_true, perm),
        dominant_acc: dominant_accuracy(gammas, &truth, perm),
        estep_objective_mean: mean,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionViolation {
    pub t: usize,
    pub which: String,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub checked: usize,
    pub violations: Vec<EvolutionViolation>,
}

impl EvolutionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks C_beta^{t+1} <= sqrt(C_beta^t) (1 + tol) and
/// C_gamma^t <= (C_beta^t)^(1/3) (1 + tol) for every t with
/// C_beta^t >= (1 - epsilon)^-7. With `cap`, only iterations with
/// C_beta^t <= cap are checked.
pub fn check_error_evolution(trace: &ErrorTrace, epsilon: f64, tol: f64, cap: Option<f64>) -> EvolutionReport {
    let floor = (1.0 - epsilon).powi(-7);
    let mut report = EvolutionReport {
        checked: 0,
        violations: Vec::new(),
    };
    for (idx, row) in trace.rows.iter().enumerate() {
        let c = row.c_beta;
        if !c.is_finite() || c < floor || cap.is_some_and(|m| c > m) {
            continue;
        }
        report.checked += 1;
        let gamma_bound = c.cbrt() * (1.0 + tol);
        if !(row.c_gamma <= gamma_bound) {
            report.violations.push(EvolutionViolation {
                t: row.t,
                which: "C_gamma".into(),
                value: row.c_gamma,
                bound: gamma_bound,
            });
        }
        if let Some(next) = trace.rows.get(idx + 1) {
            let bound = c.sqrt() * (1.0 + tol);
            if !(next.c_beta <= bound) {
                report.violations.push(EvolutionViolation {
                    t: row.t,
                    which: "C_beta".into(),
                    value: next.c_beta,
                    bound,
                });
            }
        }
    }
    report
}
