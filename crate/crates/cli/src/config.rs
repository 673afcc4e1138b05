use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use driftspec::verify::{canonical_suite, LemmaTolerance};
use driftspec::Instance;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Input of `verify`: the instances to check and where to put the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub lemma_tolerance: LemmaTolerance,
    /// Empty means the canonical suite.
    #[serde(default)]
    pub instances: Vec<Instance>,
}

impl RunConfig {
    pub fn canonical() -> Self {
        RunConfig {
            output: None,
            lemma_tolerance: LemmaTolerance::default(),
            instances: canonical_suite(),
        }
    }
}

/// Input of `sweep`: a base instance and a grid of overrides addressed by dotted paths
/// into the instance (`phi.params.amplitude`, `refinements`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub lemma_tolerance: LemmaTolerance,
    pub base: Instance,
    pub grid: BTreeMap<String, Vec<Value>>,
}

/// Reads TOML, falling back to JSON. A `.json` extension skips the TOML attempt.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    } else {
        match toml::from_str(&text) {
            Ok(v) => Ok(v),
            Err(toml_err) => serde_json::from_str(&text).map_err(|json_err| {
                if text.trim_start().starts_with('{') {
                    format!("{}: {json_err}", path.display())
                } else {
                    format!("{}: {toml_err}", path.display())
                }
            }),
        }
    };
    parsed.map(|v| (v, bytes)).map_err(CliError::Usage)
}

/// Every combination of grid values, keys in sorted order, last key varying fastest.
pub fn grid_points(grid: &BTreeMap<String, Vec<Value>>) -> Vec<Vec<(String, Value)>> {
    let mut points = vec![Vec::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

/// Applies dotted-path overrides to `base`, creating intermediate tables as needed.
pub fn apply(base: &Instance, overrides: &[(String, Value)]) -> Result<Instance, CliError> {
    let mut value = serde_json::to_value(base).map_err(|e| CliError::Usage(e.to_string()))?;
    for (path, v) in overrides {
        let mut cur = &mut value;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let Value::Object(map) = cur else {
                return Err(CliError::Usage(format!("grid key {path}: {} is not a table", parts[..i].join("."))));
            };
            if i + 1 == parts.len() {
                map.insert(part.to_string(), v.clone());
                break;
            }
            cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("grid point {overrides:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use driftspec::{FieldSpec, ProblemKind, Shape};

    #[test]
    fn grid_is_a_cartesian_product() {
        let grid = BTreeMap::from([
            ("a".to_string(), vec![Value::from(1), Value::from(2)]),
            ("b".to_string(), vec![Value::from(0.5), Value::from(1.5), Value::from(2.5)]),
        ]);
        let pts = grid_points(&grid);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![("a".into(), Value::from(1)), ("b".into(), Value::from(1.5))]);
    }

    #[test]
    fn overrides_reach_nested_params() {
        let base = Instance::new(
            "b",
            Shape::Rectangle { width: 1.0, height: 1.0 },
            0.2,
            FieldSpec::builtin("radial_quadratic", &[("c", driftspec::field::ParamValue::Scalar(1.0))]),
            ProblemKind::Dirichlet,
            3,
        );
        let inst = apply(&base, &[("phi.params.c".into(), Value::from(2.5)), ("refinements".into(), Value::from(1))]).unwrap();
        assert_eq!(inst.refinements, 1);
        assert_eq!(
            inst.phi,
            FieldSpec::builtin("radial_quadratic", &[("c", driftspec::field::ParamValue::Scalar(2.5))])
        );
        assert!(apply(&base, &[("count".into(), Value::from("many"))]).is_err());
    }

    #[test]
    fn toml_errors_name_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.toml");
        fs::write(&p, "[[instances]]\nname = \"x\"\nshape = { shape = \"disk\", radius = 1.0 }\nmesh_h = 0.1\nproblem = \"dirichlet\"\ncuont = 3\n").unwrap();
        let err = load::<RunConfig>(&p).unwrap_err().to_string();
        assert!(err.contains("line 6") && err.contains("cuont"), "{err}");
    }
}

#[cfg(test)]
mod canonical_file {
    use super::*;

    #[test]
    fn shipped_config_matches_builtin_suite() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/canonical.toml");
        let (cfg, _): (RunConfig, _) = load(&path).unwrap();
        let builtin = RunConfig::canonical();
        assert_eq!(cfg.lemma_tolerance, builtin.lemma_tolerance);
        assert_eq!(cfg.instances.len(), builtin.instances.len());
        for (a, b) in cfg.instances.iter().zip(&builtin.instances) {
            assert_eq!(a, b, "{}", b.name);
        }
    }
}
