//! File formats.
//!
//! Space: `{"points": [labels], "base": index, "dist": [[entries]], "exact": bool}`.
//! Exact spaces take `"p/q"` strings or integers; float spaces take numbers or
//! decimal strings. System: `{"order": [labels], "parent": {child: parent}}`.
//! Functions and measures: CSV lines `label,value` (`#` starts a comment).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::metric::{validate_metric, PointedMetricSpace};
use crate::retraction::RetractionSystem;
use crate::scalar::{Rational, Scalar};
use crate::transport::Measure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    points: Vec<String>,
    base: usize,
    dist: Vec<Vec<Value>>,
    #[serde(default = "default_exact")]
    exact: bool,
}

fn default_exact() -> bool {
    true
}

/// A space read from disk, exact or floating-point.
#[derive(Clone, Debug)]
pub enum AnySpace {
    Exact(PointedMetricSpace<Rational>),
    Float(PointedMetricSpace<f64>),
}

impl AnySpace {
    pub fn len(&self) -> usize {
        match self {
            AnySpace::Exact(s) => s.len(),
            AnySpace::Float(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> Value {
        match self {
            AnySpace::Exact(s) => space_to_json(s),
            AnySpace::Float(s) => space_to_json(s),
        }
    }
}

fn json_error(source: &str, e: serde_json::Error) -> Error {
    Error::parse(format!("{source}:{}:{}", e.line(), e.column()), e.to_string())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), format!("cannot read file: {e}")))
}

pub fn parse_space(text: &str, source: &str) -> Result<AnySpace> {
    let file: SpaceFile = serde_json::from_str(text).map_err(|e| json_error(source, e))?;
    fn entries<S: Scalar>(dist: &[Vec<Value>], source: &str) -> Result<Vec<Vec<S>>> {
        dist.iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| S::from_json(v).map_err(|m| Error::parse(format!("{source}: dist[{i}][{j}]"), m)))
                    .collect()
            })
            .collect()
    }
    Ok(if file.exact {
        AnySpace::Exact(validate_metric(file.points, entries(&file.dist, source)?, file.base)?)
    } else {
        AnySpace::Float(validate_metric(file.points, entries(&file.dist, source)?, file.base)?)
    })
}

pub fn read_space(path: &Path) -> Result<AnySpace> {
    parse_space(&read_text(path)?, &path.display().to_string())
}

pub fn space_to_json<S: Scalar>(space: &PointedMetricSpace<S>) -> Value {
    let dist: Vec<Vec<Value>> = space
        .dist_rows()
        .iter()
        .map(|row| row.iter().map(|v| v.to_json()).collect())
        .collect();
    json!({ "points": space.labels(), "base": space.base(), "dist": dist, "exact": S::EXACT })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    order: Vec<String>,
    parent: BTreeMap<String, String>,
}

pub fn parse_system<S: Scalar>(space: &PointedMetricSpace<S>, text: &str, source: &str) -> Result<RetractionSystem> {
    let file: SystemFile = serde_json::from_str(text).map_err(|e| json_error(source, e))?;
    let label = |l: &str, at: String| space.index_of(l).map_err(|_| Error::parse(format!("{source}: {at}"), format!("unknown point label {l:?}")));
    let order = file
        .order
        .iter()
        .enumerate()
        .map(|(k, l)| label(l, format!("order[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    let mut parent = vec![None; space.len()];
    for (c, p) in &file.parent {
        let ci = label(c, format!("parent key {c:?}"))?;
        parent[ci] = Some(label(p, format!("parent[{c:?}]"))?);
    }
    RetractionSystem::build(space, order, parent)
}

pub fn read_system<S: Scalar>(space: &PointedMetricSpace<S>, path: &Path) -> Result<RetractionSystem> {
    parse_system(space, &read_text(path)?, &path.display().to_string())
}

pub fn system_to_json<S: Scalar>(space: &PointedMetricSpace<S>, sys: &RetractionSystem) -> Value {
    let order: Vec<&str> = sys.order().iter().map(|&x| space.label(x)).collect();
    let parent: BTreeMap<&str, &str> = sys
        .parents()
        .iter()
        .enumerate()
        .filter_map(|(x, p)| p.map(|p| (space.label(x), space.label(p))))
        .collect();
    json!({ "order": order, "parent": parent })
}

fn csv_pairs<S: Scalar>(space: &PointedMetricSpace<S>, text: &str, source: &str) -> Result<Vec<(usize, S)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = format!("{source}:{}", n + 1);
        let (l, v) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(at.clone(), format!("expected label,value, got {line:?}")))?;
        let l = l.trim().trim_matches('"');
        if n == 0 && l == "label" {
            continue;
        }
        let x = space.index_of(l).map_err(|_| Error::parse(at.clone(), format!("unknown point label {l:?}")))?;
        let v = S::parse_str(v.trim()).map_err(|m| Error::parse(at, m))?;
        out.push((x, v));
    }
    Ok(out)
}

/// Function values by point; unlisted points get 0, the base must be 0.
pub fn parse_function_csv<S: Scalar>(space: &PointedMetricSpace<S>, text: &str, source: &str) -> Result<Vec<S>> {
    let mut f = vec![S::zero(); space.len()];
    let mut seen = vec![false; space.len()];
    for (x, v) in csv_pairs(space, text, source)? {
        if std::mem::replace(&mut seen[x], true) {
            return Err(Error::parse(source.to_string(), format!("point {:?} listed twice", space.label(x))));
        }
        if x == space.base() && !v.is_zero() {
            return Err(Error::parse(source.to_string(), "functions must vanish at the base point"));
        }
        f[x] = v;
    }
    Ok(f)
}

pub fn parse_measure_csv<S: Scalar>(space: &PointedMetricSpace<S>, text: &str, source: &str) -> Result<Measure<S>> {
    Measure::from_pairs(space, csv_pairs(space, text, source)?)
}

pub fn function_to_csv<S: Scalar>(space: &PointedMetricSpace<S>, f: &[S]) -> String {
    let mut out = String::from("label,value\n");
    for (x, v) in f.iter().enumerate() {
        let v = match v.to_json() {
            Value::String(s) => s,
            other => other.to_string(),
        };
        out.push_str(&format!("{},{v}\n", csv_field(space.label(x))));
    }
    out
}

/// Quotes labels that contain commas, such as grid labels `(1,2)`.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::build_circle;
    use crate::scalar::q;

    #[test]
    fn space_round_trip() {
        let c = build_circle(5).unwrap();
        let text = space_to_json(&c).to_string();
        let AnySpace::Exact(back) = parse_space(&text, "mem").unwrap() else { panic!() };
        assert_eq!(back.dist_rows(), c.dist_rows());
        assert_eq!(back.labels(), c.labels());
    }

    #[test]
    fn parse_errors_carry_locations() {
        let e = parse_space("{\"points\": [\"0\"], \"base\": 0,\n \"dist\": [[\"1/0\"]]}", "f.json").unwrap_err();
        assert!(e.to_string().contains("dist[0][0]"), "{e}");
        let e = parse_space("{\"points\": [\n 1", "f.json").unwrap_err();
        assert!(e.to_string().contains("f.json:2:"), "{e}");
        let bad = r#"{"points":["0","a","b"],"base":0,"dist":[["0","1","5"],["1","0","1"],["5","1","0"]]}"#;
        assert!(matches!(parse_space(bad, "t").unwrap_err(), Error::InvalidMetric(_)));
    }

    #[test]
    fn float_space() {
        let t = r#"{"points":["0","a"],"base":0,"dist":[[0,1.5],[1.5,0]],"exact":false}"#;
        assert!(matches!(parse_space(t, "t").unwrap(), AnySpace::Float(_)));
    }

    #[test]
    fn system_round_trip() {
        let c = build_circle(4).unwrap();
        let sys = RetractionSystem::from_pairs(&c, vec![0, 1, 2, 3, 4], &[(1, 0), (2, 1), (3, 2), (4, 1)]).unwrap();
        let text = system_to_json(&c, &sys).to_string();
        assert_eq!(parse_system(&c, &text, "s").unwrap(), sys);
        let e = parse_system(&c, r#"{"order":["0","x9"],"parent":{}}"#, "s.json").unwrap_err();
        assert!(e.to_string().contains("order[1]"), "{e}");
    }

    #[test]
    fn csv_functions() {
        let c = build_circle(4).unwrap();
        let f = parse_function_csv(&c, "label,value\nx1,3/2\n# note\nx3,-1\n", "f.csv").unwrap();
        assert_eq!(f[1], q(3, 2));
        assert_eq!(f[2], q(0, 1));
        let e = parse_function_csv(&c, "x1,1\nx7,2\n", "f.csv").unwrap_err();
        assert!(e.to_string().contains("f.csv:2"), "{e}");
        assert!(function_to_csv(&c, &f).starts_with("label,value\n0,0\nx1,3/2"));
    }
}
