//! Builds the metric, curve, target and domain shared by all jobs.

use cgholo::ambient::{AmbientMetric, AmbientMode};
use cgholo::expr::Expr;
use cgholo::geodesic::CurveSpec;
use cgholo::hmap::Domain;
use cgholo::tensor::ChartMetric;

use crate::config::{split_list, Config, ConfigError, Section};
use crate::RunError;

/// The shared objects of one configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub chart: ChartMetric,
    pub curve: Option<CurveSpec>,
    /// Curve parameter values used for checks and as default sample times.
    pub samples: Vec<f64>,
    pub ambient: Option<AmbientMetric>,
    pub domain: Option<Domain>,
}

impl Setup {
    pub fn curve(&self) -> Result<&CurveSpec, RunError> {
        self.curve.as_ref().ok_or_else(|| ConfigError::MissingSection("curve".into()).into())
    }

    pub fn ambient(&self) -> Result<&AmbientMetric, RunError> {
        self.ambient.as_ref().ok_or_else(|| ConfigError::MissingSection("ambient".into()).into())
    }

    pub fn domain(&self) -> Result<Domain, RunError> {
        self.domain.ok_or_else(|| ConfigError::MissingSection("domain".into()).into())
    }

    pub fn build(cfg: &Config) -> Result<Self, RunError> {
        let metric = cfg.section("metric")?;
        let mut chart = parse_chart(metric)?;

        let curve_sec = cfg.optional("curve");
        let (components, samples) = match curve_sec {
            Some(c) => {
                c.check_keys(&["gamma*", "samples"])?;
                let n = chart.dim();
                let comps = (1..=n)
                    .map(|i| {
                        let key = format!("gamma{i}");
                        let text = c.require(&key)?;
                        Expr::parse(text, &["t"]).map_err(|e| c.error(&key, e.to_string()))
                    })
                    .collect::<Result<Vec<_>, ConfigError>>()?;
                if let Some(extra) = c.keys().find(|k| {
                    k.strip_prefix("gamma").and_then(|i| i.parse::<usize>().ok()).is_some_and(|i| i == 0 || i > n)
                }) {
                    return Err(c.error(extra, format!("the chart has dimension {n}")).into());
                }
                let samples = c.f64_list("samples")?.unwrap_or_else(|| vec![0.0]);
                if samples.is_empty() {
                    return Err(c.error("samples", "needs at least one value").into());
                }
                (Some(comps), samples)
            }
            None => (None, vec![0.0]),
        };

        if let Some(p) = schouten_components(metric)? {
            let points = match (&components, metric.points("check_points")?) {
                (_, Some(pts)) => pts,
                (Some(comps), None) => samples
                    .iter()
                    .map(|&t| comps.iter().map(|e| e.eval(&[t])).collect())
                    .collect::<cgholo::Result<Vec<Vec<f64>>>>()?,
                (None, None) => {
                    return Err(metric.error("schouten11", "needs [curve] or check_points to validate").into())
                }
            };
            let names: Vec<&str> = chart.var_names().iter().map(String::as_str).collect();
            let exprs = p
                .iter()
                .map(|(k, t)| Expr::parse(t, &names).map_err(|e| metric.error(k, e.to_string())))
                .collect::<Result<Vec<_>, ConfigError>>()?;
            chart = chart.with_schouten_override(exprs, &points)?;
        }

        let curve = components.map(|c| CurveSpec::new(chart.clone(), c)).transpose()?;

        let domain = cfg
            .optional("domain")
            .map(|d| {
                d.check_keys(&["type"])?;
                let v = d.require("type")?;
                Domain::from_name(v).ok_or_else(|| d.error("type", format!("unknown domain `{v}` (H2 or AdS2)")))
            })
            .transpose()?;

        let ambient = cfg
            .optional("ambient")
            .map(|a| -> Result<AmbientMetric, RunError> {
                a.check_keys(&["mode"])?;
                let v = a.require("mode")?;
                let mode = AmbientMode::from_name(v).ok_or_else(|| a.error("mode", format!("unknown mode `{v}`")))?;
                Ok(AmbientMetric::new(chart.clone(), mode)?)
            })
            .transpose()?;

        Ok(Self {
            chart,
            curve,
            samples,
            ambient,
            domain,
        })
    }
}

fn parse_chart(m: &Section) -> Result<ChartMetric, RunError> {
    m.check_keys(&["builtin", "dimension", "signature", "vars", "g*", "schouten*", "check_points"])?;
    if let Some(name) = m.get("builtin") {
        let n = m.usize_or("dimension", 2)?;
        if m.keys().any(|k| k.starts_with('g') || k == "signature" || k == "vars") {
            return Err(m.error("builtin", "a builtin metric takes no components, signature or vars").into());
        }
        return ChartMetric::builtin(name, n)
            .ok_or_else(|| m.error("builtin", format!("unknown builtin `{name}` in dimension {n}")).into());
    }
    let vars = match m.list("vars") {
        Some(v) => v,
        None => {
            let n = m.usize_or("dimension", 0)?;
            (1..=n).map(|i| format!("y{i}")).collect()
        }
    };
    let n = vars.len();
    if n < 2 {
        return Err(m.error("dimension", "needs a dimension of at least 2").into());
    }
    if let Some(d) = m.get("dimension") {
        if m.usize_or("dimension", 0)? != n {
            return Err(m.error("dimension", format!("`{d}` disagrees with {n} vars")).into());
        }
    }
    let signature = match m.f64_pair("signature")? {
        Some((p, q)) if p >= 0.0 && q >= 0.0 && p.fract() == 0.0 && q.fract() == 0.0 => (p as usize, q as usize),
        Some(_) => return Err(m.error("signature", "expected `positive, negative` counts").into()),
        None => (n, 0),
    };
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    let mut upper = Vec::new();
    for i in 1..=n {
        for j in i..=n {
            let key = format!("g{i}{j}");
            let text = m.get(&key).unwrap_or("0");
            upper.push(Expr::parse(text, &names).map_err(|e| m.error(&key, e.to_string()))?);
        }
    }
    for k in m.keys().filter(|k| k.starts_with('g')) {
        let ok = k.len() == 3 && {
            let b = k.as_bytes();
            let (i, j) = ((b[1] as char).to_digit(10), (b[2] as char).to_digit(10));
            matches!((i, j), (Some(i), Some(j)) if 1 <= i && i <= j && j as usize <= n)
        };
        if !ok {
            return Err(m.error(k, "metric components are g<i><j> with 1 <= i <= j <= dimension").into());
        }
    }
    Ok(ChartMetric::new(vars, upper, signature)?)
}

/// `schouten11, schouten12, schouten22` when any is given.
fn schouten_components(m: &Section) -> Result<Option<Vec<(String, String)>>, ConfigError> {
    let keys = ["schouten11", "schouten12", "schouten22"];
    if !m.keys().any(|k| k.starts_with("schouten")) {
        return Ok(None);
    }
    if let Some(k) = m.keys().find(|k| k.starts_with("schouten") && !keys.contains(k)) {
        return Err(m.error(k, "a Schouten override has components schouten11, schouten12, schouten22"));
    }
    Ok(Some(
        keys.iter()
            .map(|k| Ok((k.to_string(), m.get(k).unwrap_or("0").to_string())))
            .collect::<Result<_, ConfigError>>()?,
    ))
}

/// Parses comma-separated expressions in `t`.
pub fn t_exprs(sec: &Section, key: &str) -> Result<Option<Vec<Expr>>, ConfigError> {
    sec.get(key)
        .map(|v| {
            split_list(v)
                .iter()
                .map(|e| Expr::parse(e, &["t"]).map_err(|err| sec.error(key, err.to_string())))
                .collect()
        })
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(text: &str) -> Result<Setup, RunError> {
        Setup::build(&Config::parse(text).unwrap())
    }

    #[test]
    fn explicit_metric_with_override() {
        let s = setup(
            "[metric]\nvars = a, b\ng11 = 1\ng22 = 1\nschouten11 = 0\n\
             [curve]\ngamma1 = t\ngamma2 = 0\nsamples = 0, 1\n\
             [ambient]\nmode = exact_hyperbolic\n[domain]\ntype = H2\n[job]\nkind = report\n",
        )
        .unwrap();
        assert_eq!(s.chart.dim(), 2);
        assert!(s.chart.has_schouten());
        assert_eq!(s.samples, vec![0.0, 1.0]);
        assert_eq!(s.domain().unwrap(), Domain::H2);
        assert!(s.ambient().is_ok());
    }

    #[test]
    fn configuration_errors() {
        for bad in [
            "[metric]\nbuiltin = nope\n[job]\nkind = report",
            "[metric]\nbuiltin = flat\ng11 = 1\n[job]\nkind = report",
            "[metric]\ndimension = 2\ng21 = 1\n[job]\nkind = report",
            "[metric]\nbuiltin = flat\n[curve]\ngamma1 = t\n[job]\nkind = report",
            "[metric]\nbuiltin = flat\n[curve]\ngamma1 = t\ngamma2 = 0\ngamma3 = 0\n[job]\nkind = report",
            "[metric]\nbuiltin = flat\n[curve]\ngamma1 = t +\ngamma2 = 0\n[job]\nkind = report",
            "[metric]\nbuiltin = flat\n[domain]\ntype = H3\n[job]\nkind = report",
            "[metric]\nbuiltin = flat\n[ambient]\nmode = truncated2\n[job]\nkind = report",
            "[metric]\nbuiltin = flat\nschouten11 = 1\n[job]\nkind = report",
        ] {
            assert!(setup(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn override_is_validated() {
        // A non-zero constant P on the flat plane fails the trace identity.
        let r = setup("[metric]\nbuiltin = flat\n[job]\nkind = report");
        assert!(r.is_ok());
        let r = setup(
            "[metric]\ndimension = 2\ng11 = 1\ng22 = 1\nschouten11 = 1\ncheck_points = 0, 0\n[job]\nkind = report",
        );
        assert!(matches!(r, Err(RunError::Core(_))));
    }
}
