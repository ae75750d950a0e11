//! Verdicts and condition reports shared by every checker.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numerics::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// The configuration attaining the extremal margin of a check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub vectors: BTreeMap<String, Vec<f64>>,
    pub scalars: BTreeMap<String, f64>,
}

impl Witness {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vector(mut self, key: &str, v: &Vector) -> Self {
        self.vectors
            .insert(key.to_string(), v.iter().copied().collect());
        self
    }

    pub fn scalar(mut self, key: &str, v: f64) -> Self {
        self.scalars.insert(key.to_string(), v);
        self
    }

    pub fn get_vector(&self, key: &str) -> Option<Vector> {
        self.vectors.get(key).map(|v| Vector::from_vec(v.clone()))
    }

    pub fn get_scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }
}

/// Outcome of a sampled condition or theorem check.
///
/// `margin` is signed: positive means the condition is satisfied with slack.
/// A `Fails` verdict always carries a witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_id: String,
    pub verdict: Verdict,
    pub margin: f64,
    pub witness: Option<Witness>,
    pub samples_used: usize,
    pub seed: u64,
    #[serde(default)]
    pub vacuous: bool,
    #[serde(default)]
    pub details: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Finite stand-in for an infinite margin in vacuous reports.
pub const VACUOUS_MARGIN: f64 = f64::MAX;

impl ConditionReport {
    pub fn new(condition_id: &str, verdict: Verdict, margin: f64, seed: u64) -> Self {
        Self {
            condition_id: condition_id.to_string(),
            verdict,
            margin,
            witness: None,
            samples_used: 0,
            seed,
            vacuous: false,
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// A check whose hypotheses leave nothing to test (e.g. n = 1).
    pub fn vacuous(condition_id: &str, seed: u64, why: &str) -> Self {
        let mut r = Self::new(condition_id, Verdict::Holds, VACUOUS_MARGIN, seed);
        r.vacuous = true;
        r.notes.push(why.to_string());
        r
    }

    pub fn with_witness(mut self, w: Witness) -> Self {
        self.witness = Some(w);
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples_used = samples;
        self
    }

    pub fn detail(mut self, key: &str, v: f64) -> Self {
        self.details.insert(key.to_string(), v);
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    pub fn fails(&self) -> bool {
        self.verdict == Verdict::Fails
    }
}

/// Running minimum that keeps the first configuration attaining it.
///
/// Candidates must be offered in the tie-breaking order; only strictly smaller
/// values replace the incumbent.
#[derive(Debug, Clone)]
pub struct ArgMin<T> {
    pub value: f64,
    pub arg: Option<T>,
}

impl<T> Default for ArgMin<T> {
    fn default() -> Self {
        Self {
            value: f64::INFINITY,
            arg: None,
        }
    }
}

impl<T> ArgMin<T> {
    pub fn offer(&mut self, value: f64, arg: impl FnOnce() -> T) {
        if value < self.value || (self.arg.is_none() && value.is_nan()) {
            self.value = value;
            self.arg = Some(arg());
        }
    }

    pub fn merge(&mut self, other: ArgMin<T>) {
        if other.value < self.value {
            *self = other;
        }
    }
}
