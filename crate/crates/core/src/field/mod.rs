//! Scalar fields on ambient coordinates: the weight φ and the potential h.

mod expr;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use expr::{parse, BinOp, Expr, Func};

#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    /// a·x + b·y
    Linear { a: f64, b: f64 },
    /// c·(x² + y²)/2
    RadialQuadratic { c: f64 },
    /// −A·exp(−|p − center|²/σ²)
    GaussianWell {
        amplitude: f64,
        sigma: f64,
        center: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Constant(f64),
    Builtin(Builtin),
    Expression {
        source: String,
        ast: Expr,
        gradient: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    kind: FieldKind,
    dim: usize,
    /// Added to every value; gradients are unaffected.
    offset: f64,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::InvalidRequest(format!("field dimension must be 2 or 3, got {dim}")))
    }
}

impl ScalarField {
    pub fn constant(c: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !c.is_finite() {
            return Err(Error::Domain(format!("constant {c} is not finite")));
        }
        Ok(ScalarField {
            kind: FieldKind::Constant(c),
            dim,
            offset: 0.0,
        })
    }

    pub fn zero(dim: usize) -> Self {
        ScalarField {
            kind: FieldKind::Constant(0.0),
            dim: if dim == 3 { 3 } else { 2 },
            offset: 0.0,
        }
    }

    pub fn expression(source: &str, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let ast = parse(source, dim)?;
        let gradient = (0..dim).map(|i| ast.derivative(i)).collect();
        Ok(ScalarField {
            kind: FieldKind::Expression {
                source: source.to_string(),
                ast,
                gradient,
            },
            dim,
            offset: 0.0,
        })
    }

    /// Named family with parameters; unspecified parameters take defaults
    /// (c = 0 or 1, a = b = 0, A = σ = 1, center at the origin).
    pub fn builtin(family: &str, params: &BTreeMap<String, ParamValue>, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let allowed: &[&str] = match family {
            "constant" | "radial_quadratic" => &["c"],
            "linear" => &["a", "b"],
            "gaussian_well" => &["amplitude", "A", "sigma", "center"],
            _ => return Err(Error::Config(format!("unknown builtin field family `{family}`"))),
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown parameter `{bad}` for builtin `{family}`")));
        }
        let scalar = |name: &str, default: f64| -> Result<f64> {
            match params.get(name) {
                None => Ok(default),
                Some(ParamValue::Scalar(v)) if v.is_finite() => Ok(*v),
                Some(_) => Err(Error::Config(format!("parameter `{name}` of `{family}` must be a finite number"))),
            }
        };
        let kind = match family {
            "constant" => FieldKind::Constant(scalar("c", 0.0)?),
            "linear" => FieldKind::Builtin(Builtin::Linear {
                a: scalar("a", 0.0)?,
                b: scalar("b", 0.0)?,
            }),
            "radial_quadratic" => FieldKind::Builtin(Builtin::RadialQuadratic { c: scalar("c", 1.0)? }),
            _ => {
                let amplitude = if params.contains_key("A") { scalar("A", 1.0)? } else { scalar("amplitude", 1.0)? };
                let sigma = scalar("sigma", 1.0)?;
                if sigma <= 0.0 {
                    return Err(Error::Config(format!("gaussian_well sigma must be positive, got {sigma}")));
                }
                let center = match params.get("center") {
                    None => vec![0.0; dim],
                    Some(ParamValue::Vector(c)) if c.len() == dim && c.iter().all(|v| v.is_finite()) => c.clone(),
                    Some(_) => {
                        return Err(Error::Config(format!("gaussian_well center must be {dim} finite numbers")))
                    }
                };
                FieldKind::Builtin(Builtin::GaussianWell { amplitude, sigma, center })
            }
        };
        Ok(ScalarField { kind, dim, offset: 0.0 })
    }

    /// The same field plus a constant.
    pub fn offset(mut self, c: f64) -> Self {
        self.offset += c;
        self
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            FieldKind::Constant(_) => true,
            FieldKind::Builtin(Builtin::Linear { a, b }) => *a == 0.0 && *b == 0.0,
            FieldKind::Builtin(Builtin::RadialQuadratic { c }) => *c == 0.0,
            FieldKind::Builtin(Builtin::GaussianWell { amplitude, .. }) => *amplitude == 0.0,
            FieldKind::Expression { ast, .. } => !ast.has_variables(),
        }
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.check_point(point)?;
        let v = match &self.kind {
            FieldKind::Constant(c) => *c,
            FieldKind::Builtin(Builtin::Linear { a, b }) => a * point[0] + b * point[1],
            FieldKind::Builtin(Builtin::RadialQuadratic { c }) => 0.5 * c * (point[0] * point[0] + point[1] * point[1]),
            FieldKind::Builtin(Builtin::GaussianWell { amplitude, sigma, center }) => {
                let r2: f64 = point.iter().zip(center).map(|(p, c)| (p - c) * (p - c)).sum();
                -amplitude * (-r2 / (sigma * sigma)).exp()
            }
            FieldKind::Expression { ast, .. } => ast.eval(point)?,
        } + self.offset;
        if !v.is_finite() {
            return Err(Error::Domain(format!("field value {v} at {point:?}")));
        }
        Ok(v)
    }

    pub fn grad(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_point(point)?;
        let mut g = vec![0.0; self.dim];
        match &self.kind {
            FieldKind::Constant(_) => {}
            FieldKind::Builtin(Builtin::Linear { a, b }) => {
                g[0] = *a;
                g[1] = *b;
            }
            FieldKind::Builtin(Builtin::RadialQuadratic { c }) => {
                g[0] = c * point[0];
                g[1] = c * point[1];
            }
            FieldKind::Builtin(Builtin::GaussianWell { amplitude, sigma, center }) => {
                let s2 = sigma * sigma;
                let r2: f64 = point.iter().zip(center).map(|(p, c)| (p - c) * (p - c)).sum();
                let e = (-r2 / s2).exp();
                for i in 0..self.dim {
                    g[i] = 2.0 * amplitude * (point[i] - center[i]) / s2 * e;
                }
            }
            FieldKind::Expression { gradient, .. } => {
                for (gi, d) in g.iter_mut().zip(gradient) {
                    *gi = d.eval(point)?;
                }
            }
        }
        Ok(g)
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FieldKind::Constant(c) => write!(f, "constant(c={c})"),
            FieldKind::Builtin(Builtin::Linear { a, b }) => write!(f, "linear(a={a}, b={b})"),
            FieldKind::Builtin(Builtin::RadialQuadratic { c }) => write!(f, "radial_quadratic(c={c})"),
            FieldKind::Builtin(Builtin::GaussianWell { amplitude, sigma, center }) => {
                write!(f, "gaussian_well(A={amplitude}, sigma={sigma}, center={center:?})")
            }
            FieldKind::Expression { source, .. } => write!(f, "expr({source})"),
        }?;
        if self.offset != 0.0 {
            write!(f, " + {}", self.offset)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// Config-file form of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum FieldSpec {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: BTreeMap<String, ParamValue>,
    },
    Expr {
        expr: String,
    },
}

impl FieldSpec {
    pub fn constant(c: f64) -> Self {
        FieldSpec::Builtin {
            builtin: "constant".into(),
            params: BTreeMap::from([("c".to_string(), ParamValue::Scalar(c))]),
        }
    }

    pub fn expr(source: impl Into<String>) -> Self {
        FieldSpec::Expr { expr: source.into() }
    }

    pub fn builtin(name: &str, params: &[(&str, ParamValue)]) -> Self {
        FieldSpec::Builtin {
            builtin: name.into(),
            params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    pub fn build(&self, dim: usize) -> Result<ScalarField> {
        match self {
            FieldSpec::Builtin { builtin, params } => ScalarField::builtin(builtin, params, dim),
            FieldSpec::Expr { expr } => ScalarField::expression(expr, dim),
        }
    }
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::constant(0.0)
    }
}
