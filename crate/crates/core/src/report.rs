//! Machine-readable run reports.
//!
//! A report serialises to a JSON document with keys sorted at every level,
//! so identical inputs and seeds give byte-identical files. Wall-clock
//! timing is the only nondeterministic field and is left out unless asked
//! for.

use serde::Serialize;
use serde_json::Value;

use crate::classifier::{
    check_cancelling, check_cocancelling, check_elliptic, check_weakly_cancelling,
    weak_cancellation_residual, Outcome, SphereSampler, Verdict, WeakCancellation,
};
use crate::compatibility::{Compatibility, CompatibilityReport};
use crate::error::{Error, Result};
use crate::lab::ExperimentRow;
use crate::operator::Operator;
use crate::subspace::TolerancePolicy;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default number of Gauss–Legendre nodes per angle for weak cancellation.
pub const DEFAULT_QUAD_POINTS: usize = 48;

/// Everything that steers a classification run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassifySettings {
    pub tolerance: TolerancePolicy,
    pub samples_per_round: usize,
    pub max_rounds: usize,
    pub quad_points: usize,
    pub seed: u64,
}

impl Default for ClassifySettings {
    fn default() -> Self {
        let sampler = SphereSampler::new(1, 0);
        ClassifySettings {
            tolerance: TolerancePolicy::default(),
            samples_per_round: sampler.count_per_round,
            max_rounds: sampler.max_rounds,
            quad_points: DEFAULT_QUAD_POINTS,
            seed: 0,
        }
    }
}

impl ClassifySettings {
    pub fn sampler(&self, n: usize) -> SphereSampler {
        SphereSampler::new(n, self.seed)
            .with_count(self.samples_per_round)
            .with_rounds(self.max_rounds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilitySummary {
    pub degree: usize,
    pub interpolation_nodes: usize,
    pub interpolation_residual: f64,
    pub pointwise_surjective: bool,
    pub verification: Option<CompatibilityReport>,
}

impl CompatibilitySummary {
    pub fn new(c: &Compatibility, verification: Option<CompatibilityReport>) -> Self {
        CompatibilitySummary {
            degree: c.degree,
            interpolation_nodes: c.nodes,
            interpolation_residual: c.interpolation_residual,
            pointwise_surjective: c.pointwise_surjective,
            verification,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSection {
    pub kind: String,
    pub rows: Vec<ExperimentRow>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub tool_version: String,
    /// Catalog descriptor or `sha256:<hex>` of an operator file.
    pub operator: Option<String>,
    pub seed: Option<u64>,
    pub settings: Option<ClassifySettings>,
    pub tolerance_policy: TolerancePolicy,
    pub verdicts: Vec<Verdict>,
    pub weak_cancellation: Option<WeakCancellation>,
    pub compatibility: Option<CompatibilitySummary>,
    pub experiment: Option<ExperimentSection>,
    pub notes: Vec<String>,
    pub timing_ms: Option<u128>,
}

impl Report {
    pub fn new(operator: Option<String>) -> Self {
        Report {
            tool_version: TOOL_VERSION.to_string(),
            operator,
            ..Report::default()
        }
    }

    /// Any verdict left inconclusive.
    pub fn inconclusive(&self) -> bool {
        self.verdicts
            .iter()
            .any(|v| v.value == Outcome::Inconclusive)
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        // Value maps are ordered by key.
        let value: Value = serde_json::to_value(self).expect("reports serialise");
        let mut text = serde_json::to_string_pretty(&value).expect("values serialise");
        text.push('\n');
        text
    }
}

/// Runs all four classifications. Weak cancellation needs an elliptic
/// operator with `n ≥ k`; otherwise it is skipped with a note.
pub fn classification_report(
    op: &Operator,
    descriptor: String,
    settings: &ClassifySettings,
) -> Result<Report> {
    let sampler = settings.sampler(op.n());
    let pol = &settings.tolerance;
    let elliptic = check_elliptic(op, &sampler, pol);
    let mut report = Report::new(Some(descriptor));
    report.seed = Some(settings.seed);
    report.tolerance_policy = *pol;
    report.settings = Some(settings.clone());
    let is_elliptic = elliptic.value == Outcome::Holds;
    report.verdicts.push(elliptic);
    report.verdicts.push(check_cancelling(op, &sampler, pol));
    report.verdicts.push(check_cocancelling(op, &sampler, pol));
    if !is_elliptic {
        report.notes.push(
            "weak cancellation skipped: the operator is not injectively elliptic".to_string(),
        );
        return Ok(report);
    }
    match check_weakly_cancelling(op, settings.quad_points) {
        Ok(v) => {
            report.verdicts.push(v);
            report.weak_cancellation = Some(weak_cancellation_residual(op, settings.quad_points)?);
        }
        Err(e @ (Error::Precondition { .. } | Error::NotInjective { .. })) => {
            report.notes.push(format!("weak cancellation skipped: {e}"));
        }
        Err(e) => return Err(e),
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::classifier::Property;

    fn quick() -> ClassifySettings {
        ClassifySettings {
            samples_per_round: 64,
            max_rounds: 4,
            quad_points: 24,
            ..ClassifySettings::default()
        }
    }

    fn verdict(r: &Report, p: Property) -> Option<Outcome> {
        r.verdicts.iter().find(|v| v.property == p).map(|v| v.value)
    }

    #[test]
    fn keys_are_sorted_and_output_is_stable() {
        let op = catalog::from_descriptor("grad:n=2").unwrap();
        let a = classification_report(&op, "grad:n=2".into(), &quick())
            .unwrap()
            .to_json();
        let b = classification_report(&op, "grad:n=2".into(), &quick())
            .unwrap()
            .to_json();
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
        let top: Vec<&str> = a
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = top.clone();
        sorted.sort_unstable();
        assert_eq!(top, sorted);
        assert!(top.contains(&"tolerance_policy"));
    }

    #[test]
    fn non_elliptic_operators_skip_weak_cancellation() {
        let op = catalog::from_descriptor("divergence:n=3").unwrap();
        let r = classification_report(&op, "divergence:n=3".into(), &quick()).unwrap();
        assert_eq!(verdict(&r, Property::Elliptic), Some(Outcome::Fails));
        assert_eq!(verdict(&r, Property::Cocancelling), Some(Outcome::Holds));
        assert_eq!(verdict(&r, Property::WeaklyCancelling), None);
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn laplacian_report_has_witness_and_weak_residual() {
        let op = catalog::from_descriptor("laplacian:n=2").unwrap();
        let r = classification_report(&op, "laplacian:n=2".into(), &quick()).unwrap();
        let cancelling = r
            .verdicts
            .iter()
            .find(|v| v.property == Property::Cancelling)
            .unwrap();
        assert_eq!(cancelling.value, Outcome::Fails);
        assert_eq!(cancelling.witness.as_deref(), Some(&[1.0][..]));
        let weak = r.weak_cancellation.as_ref().unwrap();
        assert!((weak.max_residual() - 2.0 * std::f64::consts::PI).abs() < 1e-6);
        assert!(!r.inconclusive());
    }
}
