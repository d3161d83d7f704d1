//! Claims and the deterministic `report.json` layout.

use serde_json::{Map, Number, Value};

pub const SCHEMA_VERSION: u32 = 1;

/// A number with 17 significant digits; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let text = format!("{x:.16e}");
    Value::Number(text.parse::<Number>().expect("formatted float is valid JSON"))
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// A checked statement with its measured value and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub name: String,
    /// A phrase locating the statement in its source.
    pub anchor: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub extras: Map<String, Value>,
}

impl Claim {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: &str, anchor: &'static str, value: f64, threshold: f64) -> Self {
        Self::new(name, anchor, value, threshold, value <= threshold)
    }

    pub fn new(name: &str, anchor: &'static str, value: f64, threshold: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            anchor,
            value,
            threshold,
            pass,
            extras: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, v: Value) -> Self {
        self.extras.insert(key.into(), v);
        self
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("name".into(), Value::String(self.name.clone()));
        m.insert("paper_anchor".into(), Value::String(self.anchor.into()));
        m.insert("value".into(), num(self.value));
        m.insert("threshold".into(), num(self.threshold));
        m.insert("pass".into(), Value::Bool(self.pass));
        for (k, v) in &self.extras {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }
}

/// Everything one job produced.
#[derive(Debug, Clone, Default)]
pub struct JobOutcome {
    pub name: String,
    pub kind: String,
    pub claims: Vec<Claim>,
    pub results: Map<String, Value>,
    pub csv: String,
    /// `(file stem, svg text)`.
    pub plots: Vec<(String, String)>,
}

impl JobOutcome {
    pub fn pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("name".into(), Value::String(self.name.clone()));
        m.insert("kind".into(), Value::String(self.kind.clone()));
        m.insert("pass".into(), Value::Bool(self.pass()));
        m.insert("claims".into(), Value::Array(self.claims.iter().map(Claim::to_json).collect()));
        m.insert("results".into(), Value::Object(self.results.clone()));
        Value::Object(m)
    }
}

/// The whole report, jobs ordered by name.
pub fn render(config_name: &str, jobs: &[JobOutcome]) -> String {
    let mut sorted: Vec<&JobOutcome> = jobs.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut m = Map::new();
    m.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    m.insert("config".into(), Value::String(config_name.into()));
    m.insert("pass".into(), Value::Bool(jobs.iter().all(JobOutcome::pass)));
    m.insert("jobs".into(), Value::Array(sorted.iter().map(|j| j.to_json()).collect()));
    let mut text = serde_json::to_string_pretty(&Value::Object(m)).expect("report serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_fixed_format() {
        assert_eq!(num(0.1).to_string(), "1.0000000000000001e-1");
        assert_eq!(num(-3.0).to_string(), "-3.0000000000000000e+0");
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(num(f64::INFINITY), Value::Null);
    }

    #[test]
    fn claims_carry_required_fields() {
        let c = Claim::new("tension_slope", "holds if and only if", 3.9, 3.5, true).with("r2", num(1.0));
        let v = c.to_json();
        for k in ["name", "paper_anchor", "value", "threshold", "pass", "r2"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["pass"], Value::Bool(true));
        assert!(!Claim::at_most("x", "a", 2.0, 1.0).pass);
    }

    #[test]
    fn jobs_are_sorted_and_output_is_stable() {
        let job = |name: &str, pass: bool| JobOutcome {
            name: name.into(),
            kind: "verify".into(),
            claims: vec![Claim::new("c", "a", 1.0, 1.0, pass)],
            ..Default::default()
        };
        let a = render("x.cfg", &[job("b", true), job("a", false)]);
        let b = render("x.cfg", &[job("a", false), job("b", true)]);
        assert_eq!(a, b);
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["jobs"][0]["name"], "a");
        assert_eq!(v["pass"], Value::Bool(false));
        assert_eq!(v["schema_version"], 1);
    }
}
