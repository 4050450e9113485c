//! Resolving exponent specs and loading JSON inputs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use vexl::{Exponent, NamedExponent, PipelineFile};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_params(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("bad parameter {v:?}"))).collect()
}

/// Accepted forms:
/// `const:<v>`, `named:<name>[:<a>,<b>]`, `<pipeline.json>#<p_bar|q_bar|p|h>`
/// or a path to an exponent JSON file.
pub fn parse_exponent(spec: &str, base: &Path) -> Result<Exponent<f64>> {
    if let Some(v) = spec.strip_prefix("const:") {
        let v: f64 = v.trim().parse().with_context(|| format!("bad constant in {spec:?}"))?;
        return Exponent::constant(v).map_err(|e| anyhow!(e));
    }
    if let Some(rest) = spec.strip_prefix("named:") {
        let (name, params) = match rest.split_once(':') {
            Some((n, p)) => (n, parse_params(p)?),
            None => (rest, Vec::new()),
        };
        let named = NamedExponent::parse(name, &params).map_err(|e| anyhow!(e))?;
        return Exponent::named(named).map_err(|e| anyhow!(e));
    }
    if let Some((path, field)) = spec.rsplit_once('#') {
        let file: PipelineFile<f64> = read_json(&resolve(base, path))?;
        return Ok(match field {
            "p_bar" => file.p_bar,
            "q_bar" => file.q_bar,
            "h" => file.h,
            "p" => file.seed.p,
            other => bail!("unknown pipeline field {other:?}; expected p_bar, q_bar, p or h"),
        });
    }
    read_json(&resolve(base, spec))
}

pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
