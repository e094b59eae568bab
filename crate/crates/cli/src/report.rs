use std::fs;
use std::path::Path;

use serde::Serialize;

/// One asserted bound. `anchor` names the mathematical statement the bound
/// comes from.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub anchor: &'static str,
    pub value: f64,
    pub relation: &'static str,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Default)]
pub struct Report {
    pub assertions: Vec<Assertion>,
    pub data: serde_json::Map<String, serde_json::Value>,
    /// `(file name, bytes)`, written next to `result.json`.
    pub files: Vec<(String, Vec<u8>)>,
}

impl Report {
    fn push(&mut self, name: impl Into<String>, anchor: &'static str, value: f64, relation: &'static str, bound: f64) {
        let pass = match relation {
            "<" => value < bound,
            "<=" => value <= bound,
            ">" => value > bound,
            ">=" => value >= bound,
            _ => unreachable!("relation {relation}"),
        };
        self.assertions.push(Assertion {
            name: name.into(),
            anchor,
            value,
            relation,
            bound,
            pass,
        });
    }

    pub fn below(&mut self, name: impl Into<String>, anchor: &'static str, value: f64, bound: f64) {
        self.push(name, anchor, value, "<", bound);
    }

    pub fn at_most(&mut self, name: impl Into<String>, anchor: &'static str, value: f64, bound: f64) {
        self.push(name, anchor, value, "<=", bound);
    }

    pub fn above(&mut self, name: impl Into<String>, anchor: &'static str, value: f64, bound: f64) {
        self.push(name, anchor, value, ">", bound);
    }

    pub fn at_least(&mut self, name: impl Into<String>, anchor: &'static str, value: f64, bound: f64) {
        self.push(name, anchor, value, ">=", bound);
    }

    /// A boolean property, recorded as `1 >= 1` or `0 >= 1`.
    pub fn holds(&mut self, name: impl Into<String>, anchor: &'static str, ok: bool) {
        self.push(name, anchor, if ok { 1.0 } else { 0.0 }, ">=", 1.0);
    }

    pub fn data(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report data serializes");
        self.data.insert(key.to_string(), v);
    }

    pub fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

#[derive(Serialize)]
struct ResultJson<'a> {
    pipeline: &'a str,
    system: &'a serde_json::Value,
    seed: u64,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    assertions: &'a [Assertion],
    data: &'a serde_json::Map<String, serde_json::Value>,
}

pub fn write_all(
    dir: &Path,
    effective: &impl Serialize,
    pipeline: &str,
    system: &serde_json::Value,
    seed: u64,
    report: &Report,
    error: Option<&str>,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut cfg = serde_json::to_vec_pretty(effective)?;
    cfg.push(b'\n');
    fs::write(dir.join("effective_config.json"), cfg)?;
    let result = ResultJson {
        pipeline,
        system,
        seed,
        pass: error.is_none() && report.pass(),
        error,
        assertions: &report.assertions,
        data: &report.data,
    };
    let mut bytes = serde_json::to_vec_pretty(&result)?;
    bytes.push(b'\n');
    fs::write(dir.join("result.json"), bytes)?;
    for (name, b) in &report.files {
        fs::write(dir.join(name), b)?;
    }
    Ok(())
}
