//! Line-oriented job configuration: `[section]` or `[job NAME]` headers,
//! `key = value` lines, `#` comments.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("[{section}]: missing key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("[{section}] {key}: {message}")]
    BadValue { section: String, key: String, message: String },
    #[error("[{section}]: unknown key `{key}`")]
    UnknownKey { section: String, key: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// One section's keys in file order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    entries: BTreeMap<String, String>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.into(),
        })
    }

    fn bad(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            section: self.name.clone(),
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| parse_f64(v).map_err(|m| self.bad(key, m)))
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_f64(v).map_err(|m| self.bad(key, m))).transpose()
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.get(key).map_or(Ok(default), |v| {
            v.trim().parse().map_err(|_| self.bad(key, format!("`{v}` is not a non-negative integer")))
        })
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        self.get(key).map_or(Ok(default), |v| match v.trim() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.bad(key, format!("`{v}` is not a boolean"))),
        })
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| split_list(v).iter().map(|x| parse_f64(x).map_err(|m| self.bad(key, m))).collect())
            .transpose()
    }

    /// `a, b` as a pair.
    pub fn f64_pair(&self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.f64_list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
            Some(_) => Err(self.bad(key, "expected two comma-separated numbers")),
        }
    }

    /// `lo, hi` as an inclusive integer range.
    pub fn int_range(&self, key: &str) -> Result<Option<(i32, i32)>> {
        match self.f64_pair(key)? {
            None => Ok(None),
            Some((a, b)) if a.fract() == 0.0 && b.fract() == 0.0 && a <= b => Ok(Some((a as i32, b as i32))),
            Some(_) => Err(self.bad(key, "expected an integer range `first, last`")),
        }
    }

    /// Points separated by `;`, coordinates by `,`.
    pub fn points(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        self.get(key)
            .map(|v| {
                v.split(';')
                    .map(|p| split_list(p).iter().map(|x| parse_f64(x).map_err(|m| self.bad(key, m))).collect())
                    .collect()
            })
            .transpose()
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(split_list)
    }

    /// Fails on keys outside `allowed`; a trailing `*` matches a prefix.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.keys() {
            let ok = allowed.iter().any(|a| match a.strip_suffix('*') {
                Some(p) => k.starts_with(p),
                None => k == *a,
            });
            if !ok {
                return Err(ConfigError::UnknownKey {
                    section: self.name.clone(),
                    key: k.into(),
                });
            }
        }
        Ok(())
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        self.bad(key, message)
    }
}

pub fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let v = v.trim();
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

/// A parsed file: the singleton sections plus the jobs in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub sections: BTreeMap<String, Section>,
    pub jobs: Vec<Section>,
}

const SINGLETONS: [&str; 4] = ["metric", "curve", "ambient", "domain"];

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut current: Option<Section> = None;
        let flush = |cfg: &mut Config, s: Option<Section>| {
            if let Some(s) = s {
                if SINGLETONS.contains(&s.name.as_str()) {
                    cfg.sections.insert(s.name.clone(), s);
                } else {
                    cfg.jobs.push(s);
                }
            }
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line, message };
            if let Some(head) = body.strip_prefix('[') {
                let head = head
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("unterminated section header".into()))?
                    .trim();
                let mut words = head.split_whitespace();
                let kind = words.next().unwrap_or("");
                let name = match (kind, words.next(), words.next()) {
                    (k, None, _) if SINGLETONS.contains(&k) => k.to_string(),
                    ("job", None, _) => "job".to_string(),
                    ("job", Some(n), None) if valid_name(n) => n.to_string(),
                    ("job", Some(n), None) => return Err(syntax(format!("invalid job name `{n}`"))),
                    _ => return Err(syntax(format!("unknown section `[{head}]`"))),
                };
                let seen = cfg.sections.contains_key(&name)
                    || cfg.jobs.iter().any(|j| j.name == name)
                    || current.as_ref().is_some_and(|c| c.name == name);
                if seen {
                    return Err(syntax(format!("duplicate section `{name}`")));
                }
                flush(&mut cfg, current.take());
                current = Some(Section {
                    name,
                    line,
                    entries: BTreeMap::new(),
                });
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, got `{body}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(syntax(format!("invalid key `{k}`")));
            }
            let sec = current.as_mut().ok_or_else(|| syntax("key outside any section".into()))?;
            if sec.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(syntax(format!("duplicate key `{k}`")));
            }
        }
        flush(&mut cfg, current);
        if cfg.jobs.is_empty() {
            return Err(ConfigError::MissingSection("job".into()));
        }
        Ok(cfg)
    }

    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections.get(name).ok_or_else(|| ConfigError::MissingSection(name.into()))
    }

    pub fn optional(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }
}

fn valid_name(n: &str) -> bool {
    n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# control run
[metric]
builtin = flat   # trailing comment
dimension = 2

[job first]
kind = verify
ladder = 3, 10
points = 0, 1; 2, 3

[job]
kind = energy
";

    #[test]
    fn parses_sections_and_jobs() {
        let c = Config::parse(SAMPLE).unwrap();
        let m = c.section("metric").unwrap();
        assert_eq!(m.get("builtin"), Some("flat"));
        assert_eq!(m.usize_or("dimension", 0).unwrap(), 2);
        assert_eq!(c.jobs.len(), 2);
        assert_eq!(c.jobs[0].name, "first");
        assert_eq!(c.jobs[1].name, "job");
        assert_eq!(c.jobs[0].int_range("ladder").unwrap(), Some((3, 10)));
        assert_eq!(
            c.jobs[0].points("points").unwrap(),
            Some(vec![vec![0.0, 1.0], vec![2.0, 3.0]])
        );
        assert!(matches!(c.section("curve"), Err(ConfigError::MissingSection(_))));
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "[metric\nx = 1\n[job]\nkind = a",
            "x = 1\n[job]\nkind = a",
            "[job]\nkind = a\nkind = b",
            "[job]\nnot a pair",
            "[job a]\n[job a]",
            "[surface]\n[job]",
            "[metric]\nbuiltin = flat",
        ] {
            assert!(Config::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn typed_accessors_report_bad_values() {
        let c = Config::parse("[job]\nx = abc\nr = 3.5, 4\nb = maybe\nlist = a, b,\n").unwrap();
        let j = &c.jobs[0];
        assert!(matches!(j.f64_or("x", 0.0), Err(ConfigError::BadValue { .. })));
        assert!(j.int_range("r").is_err());
        assert!(j.bool_or("b", true).is_err());
        assert_eq!(j.list("list").unwrap(), vec!["a", "b"]);
        assert!(j.check_keys(&["x", "r", "b"]).is_err());
        assert!(j.check_keys(&["x", "r", "b", "li*"]).is_ok());
        assert_eq!(j.f64_or("missing", 1.5).unwrap(), 1.5);
    }
}
