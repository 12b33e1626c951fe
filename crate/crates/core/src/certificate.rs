//! Structured records of verified inequalities.
//!
//! A [`Certificate`] holds named [`Check`]s, scalar results, nested
//! sub-certificates and the assumptions it rests on. Its verdict passes iff
//! every mandatory check (recursively) passes. Everything except
//! [`Metadata`] is a deterministic function of the inputs, see
//! [`Certificate::payload_json`].

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `measured >= bound - tolerance`
    AtLeast,
    /// `measured <= bound + tolerance`
    AtMost,
    /// `|measured - bound| <= tolerance`
    Equal,
    /// `measured > bound`
    Above,
    /// `measured < bound`
    Below,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmin: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Evidence {
    pub fn grid(n: usize) -> Self {
        Self {
            grid: Some(n),
            ..Self::default()
        }
    }

    pub fn samples(n: usize, seed: u64) -> Self {
        Self {
            samples: Some(n),
            seed: Some(seed),
            ..Self::default()
        }
    }

    pub fn note(s: impl Into<String>) -> Self {
        Self {
            note: Some(s.into()),
            ..Self::default()
        }
    }

    pub fn with_note(mut self, s: impl Into<String>) -> Self {
        self.note = Some(s.into());
        self
    }

    pub fn with_argmin(mut self, at: Vec<f64>) -> Self {
        self.argmin = Some(at);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub relation: Relation,
    pub bound: f64,
    pub measured: f64,
    pub tolerance: f64,
    pub evidence: Evidence,
    pub mandatory: bool,
    pub passed: bool,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        relation: Relation,
        measured: f64,
        bound: f64,
        tolerance: f64,
        evidence: Evidence,
    ) -> Self {
        let passed = evaluate(relation, measured, bound, tolerance);
        Self {
            name: name.into(),
            relation,
            bound,
            measured,
            tolerance,
            evidence,
            mandatory: true,
            passed,
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64, tol: f64, ev: Evidence) -> Self {
        Self::new(name, Relation::AtLeast, measured, bound, tol, ev)
    }

    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64, tol: f64, ev: Evidence) -> Self {
        Self::new(name, Relation::AtMost, measured, bound, tol, ev)
    }

    pub fn equal(name: impl Into<String>, measured: f64, bound: f64, tol: f64, ev: Evidence) -> Self {
        Self::new(name, Relation::Equal, measured, bound, tol, ev)
    }

    pub fn above(name: impl Into<String>, measured: f64, bound: f64, ev: Evidence) -> Self {
        Self::new(name, Relation::Above, measured, bound, 0.0, ev)
    }

    pub fn below(name: impl Into<String>, measured: f64, bound: f64, ev: Evidence) -> Self {
        Self::new(name, Relation::Below, measured, bound, 0.0, ev)
    }

    pub fn optional(mut self) -> Self {
        self.mandatory = false;
        self
    }

    /// Re-evaluates the relation from the stored numbers.
    pub fn recheck(&self) -> bool {
        evaluate(self.relation, self.measured, self.bound, self.tolerance)
    }
}

fn evaluate(relation: Relation, measured: f64, bound: f64, tol: f64) -> bool {
    if !measured.is_finite() {
        return false;
    }
    match relation {
        Relation::AtLeast => measured >= bound - tol,
        Relation::AtMost => measured <= bound + tol,
        Relation::Equal => (measured - bound).abs() <= tol,
        Relation::Above => measured > bound,
        Relation::Below => measured < bound,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub created_unix: u64,
}

impl Metadata {
    pub fn now() -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema_version: u32,
    pub name: String,
    pub params: serde_json::Value,
    pub checks: Vec<Check>,
    pub results: BTreeMap<String, f64>,
    pub assumptions: Vec<String>,
    pub sub_certificates: Vec<Certificate>,
    pub verdict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

impl Certificate {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            params: serde_json::Value::Null,
            checks: Vec::new(),
            results: BTreeMap::new(),
            assumptions: Vec::new(),
            sub_certificates: Vec::new(),
            verdict: true,
            metadata: None,
        }
    }

    pub fn with_params<T: Serialize>(mut self, params: &T) -> Self {
        self.params = serde_json::to_value(params).unwrap_or(serde_json::Value::Null);
        self
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
        self.refresh();
    }

    pub fn result(&mut self, key: impl Into<String>, value: f64) {
        self.results.insert(key.into(), value);
    }

    pub fn assume(&mut self, statement: impl Into<String>) {
        self.assumptions.push(statement.into());
    }

    pub fn attach(&mut self, sub: Certificate) {
        self.sub_certificates.push(sub);
        self.refresh();
    }

    pub fn stamp(&mut self) {
        self.metadata = Some(Metadata::now());
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Depth-first search through sub-certificates for a named check.
    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.check(name)
            .or_else(|| self.sub_certificates.iter().find_map(|s| s.find_check(name)))
    }

    pub fn sub(&self, name: &str) -> Option<&Certificate> {
        self.sub_certificates.iter().find(|s| s.name == name)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        let mut out: Vec<&Check> = self.checks.iter().filter(|c| c.mandatory && !c.passed).collect();
        for s in &self.sub_certificates {
            out.extend(s.failed_checks());
        }
        out
    }

    fn refresh(&mut self) {
        self.verdict =
            self.checks.iter().all(|c| !c.mandatory || c.passed) && self.sub_certificates.iter().all(|s| s.verdict);
    }

    /// Recomputes every pass/fail bit from the stored numbers and compares it
    /// with the recorded one.
    pub fn reverify(&self) -> bool {
        let own = self.checks.iter().all(|c| c.recheck() == c.passed);
        let verdict =
            self.checks.iter().all(|c| !c.mandatory || c.passed) && self.sub_certificates.iter().all(|s| s.verdict);
        own && verdict == self.verdict && self.sub_certificates.iter().all(Certificate::reverify)
    }

    /// JSON of everything except timestamps and tool metadata.
    pub fn payload_json(&self) -> String {
        let mut copy = self.clone();
        copy.strip_metadata();
        serde_json::to_string_pretty(&copy).expect("certificate serializes")
    }

    fn strip_metadata(&mut self) {
        self.metadata = None;
        for s in &mut self.sub_certificates {
            s.strip_metadata();
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
