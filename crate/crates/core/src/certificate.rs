//! Pass/fail records for inequalities checked at runtime.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Required metadata (minimizer, infimum) was not available.
    Skipped,
    /// The certificate's hypothesis does not hold for this input.
    Inapplicable,
    /// An upstream approximation did not converge.
    Inconclusive,
}

/// Outcome of checking one inequality over a run.
///
/// `worst_residual` is the largest observed value of `lhs - rhs`; the
/// inequality holds at an index when that value is at most `tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub name: String,
    pub verdict: Verdict,
    pub worst_residual: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CertificateReport {
    /// Builds a report from per-index residuals (`lhs - rhs`).
    pub fn from_residuals<I>(name: &str, tolerance: f64, residuals: I) -> Self
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut worst = f64::NEG_INFINITY;
        let mut worst_index = None;
        let mut checked = 0;
        let mut nan = false;
        for (i, r) in residuals {
            checked += 1;
            if r.is_nan() {
                nan = true;
                worst_index.get_or_insert(i);
                continue;
            }
            if r > worst {
                worst = r;
                worst_index = Some(i);
            }
        }
        if checked == 0 {
            worst = 0.0;
        }
        let verdict = if nan || worst > tolerance {
            Verdict::Fail
        } else {
            Verdict::Pass
        };
        CertificateReport {
            name: name.to_string(),
            verdict,
            worst_residual: if nan { f64::NAN } else { worst },
            worst_index,
            checked,
            tolerance,
            note: nan.then(|| "NaN residual".to_string()),
        }
    }

    pub fn with_verdict(name: &str, verdict: Verdict, note: impl Into<String>) -> Self {
        CertificateReport {
            name: name.to_string(),
            verdict,
            worst_residual: 0.0,
            worst_index: None,
            checked: 0,
            tolerance: 0.0,
            note: Some(note.into()),
        }
    }

    pub fn skipped(name: &str, note: impl Into<String>) -> Self {
        Self::with_verdict(name, Verdict::Skipped, note)
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}
