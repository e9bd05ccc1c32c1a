//! Machine-readable verification reports.

use serde::Serialize;

use crate::dynamics::ResidualReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: String,
    /// The identity this entry certifies, e.g. `i_xi omega^L = dE_L`.
    pub paper_ref: String,
    pub status: Status,
    /// `null` when not applicable.
    pub pass: Option<bool>,
    pub max_residual: Option<f64>,
    pub tol: Option<f64>,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn residual(id: &str, identity: &str, max_residual: f64, tol: f64, samples: usize) -> Self {
        let pass = max_residual <= tol;
        Check {
            id: id.to_string(),
            paper_ref: identity.to_string(),
            status: if pass { Status::Pass } else { Status::Fail },
            pass: Some(pass),
            max_residual: Some(max_residual),
            tol: Some(tol),
            samples,
            witness: None,
            note: None,
        }
    }

    pub fn from_report(id: &str, identity: &str, r: &ResidualReport) -> Self {
        let mut c = Check::residual(id, identity, r.max_residual, r.tol, r.samples);
        if !r.passed {
            c.witness = Some(r.witness.clone());
        }
        c
    }

    pub fn verdict(id: &str, identity: &str, pass: bool, samples: usize) -> Self {
        Check {
            id: id.to_string(),
            paper_ref: identity.to_string(),
            status: if pass { Status::Pass } else { Status::Fail },
            pass: Some(pass),
            max_residual: None,
            tol: None,
            samples,
            witness: None,
            note: None,
        }
    }

    pub fn not_applicable(id: &str, identity: &str, why: &str) -> Self {
        Check {
            id: id.to_string(),
            paper_ref: identity.to_string(),
            status: Status::NotApplicable,
            pass: None,
            max_residual: None,
            tol: None,
            samples: 0,
            witness: None,
            note: Some(why.to_string()),
        }
    }

    pub fn with_witness(mut self, w: Vec<f64>) -> Self {
        self.witness = Some(w);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub system: String,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub checks: Vec<Check>,
    /// Seconds; the only non-deterministic field.
    pub wallclock: f64,
}

impl Report {
    pub fn new(command: &str, system: &str, seed: u64, samples: usize, tol: f64) -> Self {
        Report {
            command: command.to_string(),
            system: system.to_string(),
            seed,
            samples,
            tol,
            checks: Vec::new(),
            wallclock: 0.0,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        !self.checks.iter().any(Check::failed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
