use serde::{Deserialize, Serialize};

/// Outcome of one checked property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Number of individual assertions evaluated.
    pub checked: usize,
    pub violations: usize,
    /// Smallest margin observed (negative means violated). Scale-free where
    /// the property has a natural scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl PropertyCheck {
    pub fn new(name: &str) -> Self {
        PropertyCheck {
            name: name.to_string(),
            passed: true,
            checked: 0,
            violations: 0,
            worst_slack: None,
            witness: None,
        }
    }

    /// Record one assertion with its margin; `margin >= 0` passes unless `ok`
    /// says otherwise.
    pub fn record(&mut self, ok: bool, slack: Option<f64>, witness: impl FnOnce() -> String) {
        self.checked += 1;
        if let Some(s) = slack {
            self.worst_slack = Some(match self.worst_slack {
                Some(w) => w.min(s),
                None => s,
            });
        }
        if !ok {
            self.violations += 1;
            self.passed = false;
            if self.witness.is_none() {
                self.witness = Some(witness());
            }
        }
    }

    pub fn merge(&mut self, other: PropertyCheck) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.passed &= other.passed;
        self.worst_slack = match (self.worst_slack, other.worst_slack) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        if self.witness.is_none() {
            self.witness = other.witness;
        }
    }
}

/// Pass/fail summary over a list of property checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub subject: String,
    pub passed: bool,
    pub checks: Vec<PropertyCheck>,
}

impl VerificationReport {
    pub fn new(subject: &str, checks: Vec<PropertyCheck>) -> Self {
        VerificationReport {
            subject: subject.to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}
