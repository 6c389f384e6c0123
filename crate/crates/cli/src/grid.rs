//! Parameter grids for `solida sweep`.
//!
//! A grid file names an experiment kind and a set of axes, each a list of
//! values for one scenario field (dotted paths reach nested tables):
//!
//! ```toml
//! experiment = "run"
//! [axes]
//! f = [1, 2]
//! rho = [0.1, 0.2]
//! "network.bandwidth_bps" = [35e6, 75e6]
//! ```
//!
//! Points are the Cartesian product with axes in name order and the last
//! axis varying fastest. No axes, or an empty axis, means no points.

use std::collections::BTreeMap;

use serde::Deserialize;
use solida_simnet::{Scenario, ScenarioError};
use toml::Value;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Full simulator runs.
    #[default]
    Run,
    /// Reconfiguration latency under the bandwidth cost model.
    Cost,
    /// One reconfiguration race per seed against the optimal adversary.
    Race,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub experiment: Experiment,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<Value>>,
}

pub type Point = Vec<(String, Value)>;

impl Grid {
    pub fn from_toml_str(s: &str) -> Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn axis_names(&self) -> Vec<&str> {
        self.axes.keys().map(String::as_str).collect()
    }

    pub fn points(&self) -> Vec<Point> {
        if self.axes.is_empty() || self.axes.values().any(Vec::is_empty) {
            return Vec::new();
        }
        let mut out: Vec<Point> = vec![Vec::new()];
        for (name, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((name.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        out
    }
}

fn set_path(root: &mut Value, path: &str, v: Value) -> Result<(), String> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur.as_table_mut().ok_or_else(|| format!("`{path}`: `{}` is not a table", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), v);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// Apply `point` to `template`. Setting only one of `n` and `f` derives the
/// other from n = 3f+1.
pub fn apply(template: &Scenario, point: &Point) -> Result<Scenario, ScenarioError> {
    let mut v = Value::try_from(template).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let has = |k: &str| point.iter().any(|(n, _)| n == k);
    for (name, value) in point {
        set_path(&mut v, name, value.clone()).map_err(ScenarioError::Parse)?;
    }
    let table = v.as_table_mut().expect("scenarios serialize to tables");
    match (has("n"), has("f")) {
        (true, false) => {
            if let Some(n) = table.get("n").and_then(Value::as_integer) {
                table.insert("f".into(), Value::Integer((n - 1) / 3));
            }
        }
        (false, true) => {
            if let Some(f) = table.get("f").and_then(Value::as_integer) {
                table.insert("n".into(), Value::Integer(3 * f + 1));
            }
        }
        _ => {}
    }
    Scenario::from_toml_str(&toml::to_string(&v).map_err(|e| ScenarioError::Parse(e.to_string()))?)
}

/// `a=1;b=0.2`, for logs.
pub fn describe(point: &Point) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{k}={}", render(v)))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_in_name_order() {
        let g = Grid::from_toml_str("[axes]\nb = [1, 2]\na = [\"x\", \"y\"]\n").unwrap();
        let pts: Vec<String> = g.points().iter().map(describe).collect();
        assert_eq!(pts, ["a=x;b=1", "a=x;b=2", "a=y;b=1", "a=y;b=2"]);
    }

    #[test]
    fn empty_axis_means_no_points() {
        assert!(Grid::from_toml_str("").unwrap().points().is_empty());
        assert!(Grid::from_toml_str("[axes]\nf = []\nrho = [0.1]\n").unwrap().points().is_empty());
    }

    #[test]
    fn n_and_f_stay_consistent() {
        let t = Scenario::basic(1, 1.0);
        let sc = apply(&t, &vec![("n".into(), Value::Integer(13))]).unwrap();
        assert_eq!((sc.n, sc.f), (13, 4));
        let sc = apply(&t, &vec![("f".into(), Value::Integer(2))]).unwrap();
        assert_eq!((sc.n, sc.f), (7, 2));
        let sc = apply(&t, &vec![("network.base_latency".into(), Value::Float(0.5))]).unwrap();
        assert_eq!(sc.network.base_latency, 0.5);
    }

    #[test]
    fn bad_override_is_a_validation_error() {
        let t = Scenario::basic(1, 1.0);
        let e = apply(&t, &vec![("rho".into(), Value::Float(1.5))]).unwrap_err();
        assert_eq!(e.field(), Some("rho"));
    }
}
