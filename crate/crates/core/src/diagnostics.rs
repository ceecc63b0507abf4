//! Truncation-depth selection from drift certificates, and head
//! renormalization with its exact total-variation identity.
//!
//! A drift certificate pairs a per-state modulation f >= 1 (finite prefix plus
//! geometric tail) with a budget b and a finite exception set C. When the
//! certificate's inequality holds against a user-supplied Lyapunov vector, the
//! stationary probabilities are bounded by b/f, and the tail of that bound
//! picks the smallest truncation depth whose neglected mass is within budget.
//! Finding the Lyapunov vector is model-specific mathematics; it is accepted
//! and verified here, never synthesized.

use std::fmt;

use serde::Deserialize;

use crate::levels::LevelVector;
use crate::model::BlockGenerator;

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticsError {
    /// The reciprocal tail of f does not sum; no finite truncation depth works.
    DivergentTail,
    /// The Lyapunov vector does not extend far enough for the rows checked.
    InsufficientV { needed_states: usize, got: usize },
    InvalidCertificate(String),
}

impl fmt::Display for DiagnosticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticsError::DivergentTail => {
                write!(f, "DivergentTail: reciprocal tail of f is not summable")
            }
            DiagnosticsError::InsufficientV { needed_states, got } => {
                write!(f, "InsufficientV: need v through state {needed_states}, got {got} entries")
            }
            DiagnosticsError::InvalidCertificate(msg) => write!(f, "InvalidCertificate: {msg}"),
        }
    }
}

impl std::error::Error for DiagnosticsError {}

/// Per-state modulation function: explicit prefix, then geometric growth.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFunction {
    prefix: Vec<f64>,
    ratio: f64,
}

impl TailFunction {
    pub fn new(prefix: Vec<f64>, ratio: f64) -> Result<Self, DiagnosticsError> {
        if prefix.is_empty() {
            return Err(DiagnosticsError::InvalidCertificate("f needs at least one prefix value".into()));
        }
        if prefix.iter().any(|v| !v.is_finite() || *v < 1.0) {
            return Err(DiagnosticsError::InvalidCertificate("f must be >= 1 everywhere".into()));
        }
        if !ratio.is_finite() || ratio <= 0.0 {
            return Err(DiagnosticsError::InvalidCertificate("tail ratio must be positive".into()));
        }
        Ok(TailFunction { prefix, ratio })
    }

    pub fn value(&self, state: usize) -> f64 {
        match self.prefix.get(state) {
            Some(v) => *v,
            None => {
                let last = *self.prefix.last().unwrap();
                let steps = (state - self.prefix.len() + 1) as i32;
                last * self.ratio.powi(steps)
            }
        }
    }

    fn tail_start(&self) -> usize {
        self.prefix.len()
    }

    /// Sum of 1/f over all states >= from; closed geometric form past the
    /// prefix. Requires ratio > 1.
    fn reciprocal_tail_sum(&self, from: usize) -> Result<f64, DiagnosticsError> {
        if self.ratio <= 1.0 + 1e-12 {
            return Err(DiagnosticsError::DivergentTail);
        }
        let mut total = 0.0;
        let geo_from = from.max(self.tail_start());
        for i in from..geo_from {
            total += 1.0 / self.value(i);
        }
        // sum_{i >= geo_from} 1/f(i) with f geometric from the prefix edge
        let first = 1.0 / self.value(geo_from);
        total += first * self.ratio / (self.ratio - 1.0);
        Ok(total)
    }
}

/// Drift certificate: f-modulation, budget, exception set, and a free-text
/// note recording where the Lyapunov vector came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCertificate {
    pub f: TailFunction,
    pub b: f64,
    pub c_states: Vec<usize>,
    pub v_description: String,
}

impl DriftCertificate {
    pub fn new(f: TailFunction, b: f64, c_states: Vec<usize>) -> Result<Self, DiagnosticsError> {
        if !b.is_finite() || b <= 0.0 {
            return Err(DiagnosticsError::InvalidCertificate(format!("b must be positive, got {b}")));
        }
        Ok(DriftCertificate { f, b, c_states, v_description: String::new() })
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.v_description = note.into();
        self
    }
}

#[derive(Debug, Deserialize)]
struct CertificateFile {
    b: f64,
    #[serde(rename = "C")]
    c: Vec<usize>,
    f: TailFile,
    #[serde(default)]
    v_description: Option<String>,
}

#[derive(Debug, Deserialize)]
struct TailFile {
    prefix: Vec<f64>,
    tail_ratio: f64,
    tail_start: usize,
}

/// Parses a certificate from its JSON representation:
/// `{ "b": real, "C": [states], "f": {"prefix": [...], "tail_ratio": r, "tail_start": k} }`.
/// The tail rule must take over exactly where the prefix ends.
pub fn certificate_from_json(text: &str) -> Result<DriftCertificate, DiagnosticsError> {
    let file: CertificateFile = serde_json::from_str(text)
        .map_err(|e| DiagnosticsError::InvalidCertificate(format!("json: {e}")))?;
    if file.f.tail_start != file.f.prefix.len() {
        return Err(DiagnosticsError::InvalidCertificate(format!(
            "tail_start {} must equal the prefix length {}",
            file.f.tail_start,
            file.f.prefix.len()
        )));
    }
    let f = TailFunction::new(file.f.prefix, file.f.tail_ratio)?;
    let cert = DriftCertificate::new(f, file.b, file.c)?;
    Ok(match file.v_description {
        Some(note) => cert.with_note(note),
        None => cert,
    })
}

/// Report of a drift-inequality check over the truncated state space.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub checked_states: usize,
    pub violation: Option<DriftViolation>,
}

impl DriftReport {
    pub fn holds(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftViolation {
    pub state: usize,
    pub drift: f64,
    pub bound: f64,
}

/// Relative slack absorbing roundoff in the row-wise drift comparison; the
/// compared quantities grow with the Lyapunov vector.
const DRIFT_SLACK: f64 = 1e-9;

/// Checks the certificate inequality row by row for all states in levels
/// 0..=max_level: each row's drift against the Lyapunov vector `v` must stay
/// at or below -f + b on the exception set. Reports the first violating state.
pub fn verify_drift_on_truncation(
    model: &BlockGenerator,
    cert: &DriftCertificate,
    v: &[f64],
    max_level: usize,
) -> Result<DriftReport, DiagnosticsError> {
    let mut checked = 0usize;
    for k in 0..=max_level {
        let layout_start = model.sizes().dim_through(k) - model.level_size(k);
        let m_k = model.level_size(k);
        let mut drift = vec![0.0; m_k];
        for l in model.row_support(k) {
            let block = match model.block(k, l) {
                Some(b) => b,
                None => continue,
            };
            let col_start = if l == 0 { 0 } else { model.sizes().dim_through(l - 1) };
            let col_end = col_start + model.level_size(l);
            if v.len() < col_end {
                return Err(DiagnosticsError::InsufficientV { needed_states: col_end - 1, got: v.len() });
            }
            for i in 0..m_k {
                for (bj, j) in (col_start..col_end).enumerate() {
                    drift[i] += block.get(i, bj) * v[j];
                }
            }
        }
        for (i, d) in drift.iter().enumerate() {
            let state = layout_start + i;
            let mut bound = -cert.f.value(state);
            if cert.c_states.contains(&state) {
                bound += cert.b;
            }
            let slack = DRIFT_SLACK * (1.0 + d.abs() + bound.abs());
            if *d > bound + slack {
                return Ok(DriftReport {
                    checked_states: checked,
                    violation: Some(DriftViolation { state, drift: *d, bound }),
                });
            }
            checked += 1;
        }
    }
    Ok(DriftReport { checked_states: checked, violation: None })
}

/// Smallest truncation depth N whose certified tail mass bound is within
/// epsilon/2, so the renormalized head approximates the stationary vector to
/// total variation epsilon.
pub fn level_epsilon_bound(
    model: &BlockGenerator,
    cert: &DriftCertificate,
    epsilon: f64,
) -> Result<usize, DiagnosticsError> {
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(DiagnosticsError::InvalidCertificate(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let budget = epsilon / 2.0;
    let mut n = 0usize;
    loop {
        let first_excluded = model.sizes().dim_through(n);
        let tail = cert.b * cert.f.reciprocal_tail_sum(first_excluded)?;
        if tail <= budget {
            return Ok(n);
        }
        n += 1;
        if n > 10_000_000 {
            return Err(DiagnosticsError::DivergentTail);
        }
    }
}

/// Renormalizes the head levels 0..=n to a probability vector. The total
/// variation distance between the input and the zero-padded result equals
/// exactly twice the discarded tail mass.
pub fn renormalized_head(pi: &LevelVector, n: usize) -> LevelVector {
    let keep = (n + 1).min(pi.levels());
    let head_mass: f64 = pi.parts().iter().take(keep).flatten().sum();
    let mut parts = Vec::with_capacity(keep);
    for part in pi.parts().iter().take(keep) {
        if head_mass > 0.0 {
            parts.push(part.iter().map(|v| v / head_mass).collect());
        } else {
            parts.push(part.clone());
        }
    }
    LevelVector::new(parts)
}
