//! `--grid key=v1,v2` parsing and expansion into a cartesian product.

use anyhow::{bail, Context, Result};

/// Values swept when a key is given without a list.
const DEFAULT_ALPHAS: [&str; 5] = ["0.1", "0.3", "0.5", "0.7", "0.9"];

const KEYS: [&str; 7] = ["strategy", "eta", "gamma", "alpha", "M", "prediction", "demand_factor"];

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_axis(arg: &str) -> Result<Axis> {
    let (key, values) = match arg.split_once('=') {
        Some((k, v)) => (k.trim(), Some(v)),
        None => (arg.trim(), None),
    };
    let key = if key == "demand-factor" { "demand_factor" } else { key };
    if !KEYS.contains(&key) {
        bail!("unknown grid key `{key}` (expected one of {})", KEYS.join(", "));
    }
    let values: Vec<String> = match values {
        Some(v) => v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
        None if key == "alpha" => DEFAULT_ALPHAS.iter().map(|s| s.to_string()).collect(),
        None => bail!("grid key `{key}` needs values, e.g. {key}=a,b"),
    };
    if values.is_empty() {
        bail!("grid key `{key}` has no values");
    }
    for v in &values {
        if !matches!(key, "strategy" | "prediction") {
            v.parse::<f64>().with_context(|| format!("grid value `{v}` for `{key}` is not a number"))?;
        }
    }
    Ok(Axis { key: key.to_string(), values })
}

/// Every combination of axis values, first axis varying slowest.
pub fn expand(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    let mut points: Vec<Vec<(String, String)>> = vec![vec![]];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}
