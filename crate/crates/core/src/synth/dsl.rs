//! Declarative mechanism specifications.
//!
//! Expressions are stored in JSON as prefix arrays: a bare number is a
//! constant, a bare string is a variable, and `["op", arg, ...]` applies an
//! operator. Variables resolve to latent columns or search parameters.

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Current schema version of `mechanism.json`.
pub const SPEC_VERSION: u32 = 1;
/// Upper bound on the size of a parameter grid.
pub const MAX_CANDIDATES: usize = 10_000;
/// Upper bounds keeping a single candidate cheap to build and score.
pub const MAX_ROWS: usize = 5_000;
pub const MAX_DISTRACTORS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Mul(Vec<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Abs(Box<Expr>),
    Square(Box<Expr>),
    /// `exp(-e²)`
    Radial(Box<Expr>),
    /// `max(0, e - threshold)`
    Hinge(Box<Expr>, Box<Expr>),
    /// `a` where `cond > 0`, otherwise `b`.
    Select(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Variables referenced anywhere in the tree.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => vec![],
            Expr::Add(v) | Expr::Mul(v) => v.iter().collect(),
            Expr::Sub(a, b) | Expr::Hinge(a, b) => vec![a, b],
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Abs(a) | Expr::Square(a) | Expr::Radial(a) => vec![a],
            Expr::Select(c, a, b) => vec![c, a, b],
        }
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Expr::Var(v) = self {
            out.push(v);
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    /// Evaluates the expression with `lookup` resolving variables.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> f64) -> f64 {
        let un = |e: &Expr| e.eval(lookup);
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => lookup(v),
            Expr::Add(v) => v.iter().map(un).sum(),
            Expr::Mul(v) => v.iter().map(un).product(),
            Expr::Sub(a, b) => un(a) - un(b),
            Expr::Neg(a) => -un(a),
            Expr::Sin(a) => un(a).sin(),
            Expr::Cos(a) => un(a).cos(),
            Expr::Abs(a) => un(a).abs(),
            Expr::Square(a) => un(a).powi(2),
            Expr::Radial(a) => (-un(a).powi(2)).exp(),
            Expr::Hinge(a, t) => (un(a) - un(t)).max(0.0),
            Expr::Select(c, a, b) => {
                if un(c) > 0.0 {
                    un(a)
                } else {
                    un(b)
                }
            }
        }
    }
}

fn parse_expr(v: &Value) -> std::result::Result<Expr, String> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .filter(|c| c.is_finite())
            .map(Expr::Const)
            .ok_or_else(|| format!("non-finite constant {n}")),
        Value::String(s) if !s.is_empty() => Ok(Expr::Var(s.clone())),
        Value::Array(items) => {
            let (head, args) = items.split_first().ok_or("empty expression array")?;
            let op = head
                .as_str()
                .ok_or_else(|| format!("operator must be a string, got {head}"))?;
            let args: Vec<Expr> = args.iter().map(parse_expr).collect::<std::result::Result<_, _>>()?;
            let arity = |want: usize| -> std::result::Result<(), String> {
                if args.len() == want {
                    Ok(())
                } else {
                    Err(format!("operator {op:?} takes {want} argument(s), got {}", args.len()))
                }
            };
            let mut it = args.clone().into_iter().map(Box::new);
            let mut next = || it.next().expect("arity checked");
            Ok(match op {
                "+" | "*" => {
                    if args.len() < 2 {
                        return Err(format!("operator {op:?} needs at least 2 arguments"));
                    }
                    if op == "+" {
                        Expr::Add(args)
                    } else {
                        Expr::Mul(args)
                    }
                }
                "-" => match args.len() {
                    1 => Expr::Neg(next()),
                    2 => Expr::Sub(next(), next()),
                    n => return Err(format!("operator \"-\" takes 1 or 2 arguments, got {n}")),
                },
                "sin" | "cos" | "abs" | "square" | "radial" => {
                    arity(1)?;
                    let a = next();
                    match op {
                        "sin" => Expr::Sin(a),
                        "cos" => Expr::Cos(a),
                        "abs" => Expr::Abs(a),
                        "square" => Expr::Square(a),
                        _ => Expr::Radial(a),
                    }
                }
                "hinge" => {
                    arity(2)?;
                    Expr::Hinge(next(), next())
                }
                "select" => {
                    arity(3)?;
                    Expr::Select(next(), next(), next())
                }
                other => return Err(format!("unknown operator {other:?}")),
            })
        }
        other => Err(format!("cannot read expression from {other}")),
    }
}

impl TryFrom<Value> for Expr {
    type Error = String;
    fn try_from(v: Value) -> std::result::Result<Self, String> {
        parse_expr(&v)
    }
}

impl From<Expr> for Value {
    fn from(e: Expr) -> Value {
        Value::from(&e)
    }
}

impl From<&Expr> for Value {
    fn from(e: &Expr) -> Value {
        let call = |op: &str, args: Vec<&Expr>| {
            let mut v = vec![json!(op)];
            v.extend(args.into_iter().map(Value::from));
            Value::Array(v)
        };
        match e {
            Expr::Const(c) => json!(c),
            Expr::Var(s) => json!(s),
            Expr::Add(v) => call("+", v.iter().collect()),
            Expr::Mul(v) => call("*", v.iter().collect()),
            Expr::Sub(a, b) => call("-", vec![a, b]),
            Expr::Neg(a) => call("-", vec![a]),
            Expr::Sin(a) => call("sin", vec![a]),
            Expr::Cos(a) => call("cos", vec![a]),
            Expr::Abs(a) => call("abs", vec![a]),
            Expr::Square(a) => call("square", vec![a]),
            Expr::Radial(a) => call("radial", vec![a]),
            Expr::Hinge(a, t) => call("hinge", vec![a, t]),
            Expr::Select(c, a, b) => call("select", vec![c, a, b]),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Value::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        parse_expr(&v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Value::from(self))
    }
}

/// A literal number or the name of a search parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Value(f64),
    Param(String),
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Value(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Param(v.to_string())
    }
}

impl Scalar {
    pub fn resolve(&self, params: &IndexMap<String, f64>) -> f64 {
        match self {
            Scalar::Value(v) => *v,
            Scalar::Param(p) => params[p.as_str()],
        }
    }

    /// Every value this scalar can take across the parameter grid.
    fn possible_values(&self, grid: &IndexMap<String, Vec<f64>>) -> Vec<f64> {
        match self {
            Scalar::Value(v) => vec![*v],
            Scalar::Param(p) => grid.get(p).cloned().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Gaussian { mean: Scalar, sd: Scalar },
    Uniform { lo: Scalar, hi: Scalar },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub name: String,
    pub dist: Distribution,
}

/// An observed column: an expression over latents plus Gaussian observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedFeature {
    pub expr: Expr,
    #[serde(default = "zero_scalar")]
    pub noise: Scalar,
}

fn zero_scalar() -> Scalar {
    Scalar::Value(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `σ·ε`
    Homoscedastic { sigma: Scalar },
    /// `σ·(1 + scale·|X[:, feature]|)·ε`, `feature` indexing the final feature matrix.
    Heteroscedastic {
        feature: usize,
        sigma: Scalar,
        scale: Scalar,
    },
    /// Homoscedastic noise, then a fraction of rows copy another row's features
    /// while keeping a response drawn from an unrelated row.
    LabelCorruption { sigma: Scalar, fraction: Scalar },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPolicy {
    FirstInBox,
    NearestCenter { bonus: f64 },
    Penalized { penalty: f64, y_weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    #[serde(default)]
    pub params: IndexMap<String, Vec<f64>>,
    pub policy: SearchPolicy,
}

impl SearchSpec {
    pub fn candidate_count(&self) -> usize {
        self.params.values().fold(1usize, |acc, v| acc.saturating_mul(v.len()))
    }

    /// Candidate `idx` in declaration order, the last parameter varying fastest.
    pub fn candidate(&self, mut idx: usize) -> IndexMap<String, f64> {
        let mut picks = vec![0; self.params.len()];
        for (slot, values) in picks.iter_mut().zip(self.params.values()).rev() {
            *slot = idx % values.len();
            idx /= values.len();
        }
        self.params
            .iter()
            .zip(picks)
            .map(|((k, v), i)| (k.clone(), v[i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub version: u32,
    pub n_rows: Scalar,
    pub latents: Vec<Latent>,
    pub observed_features: Vec<ObservedFeature>,
    pub target_expr: Expr,
    pub noise: NoiseModel,
    #[serde(default = "zero_scalar")]
    pub distractor_count: Scalar,
    pub search: SearchSpec,
}

fn is_whole(v: f64) -> bool {
    v.is_finite() && v.fract() == 0.0
}

impl MechanismSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MechanismSpec = serde_json::from_str(text).map_err(|e| Error::Mechanism(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("mechanism specs always serialise")
    }

    /// Static checks run before anything is executed.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Mechanism(m));
        if self.version != SPEC_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        let params = &self.search.params;
        for (name, values) in params {
            if values.is_empty() {
                return bad(format!("parameter {name:?} has no values"));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return bad(format!("parameter {name:?} has a non-finite value"));
            }
        }
        let count = self.search.candidate_count();
        if count > MAX_CANDIDATES {
            return Err(Error::CandidateBudget {
                count,
                limit: MAX_CANDIDATES,
            });
        }
        match self.search.policy {
            SearchPolicy::NearestCenter { bonus } if !(bonus.is_finite() && bonus >= 0.0) => {
                return bad(format!("bonus factor must be finite and non-negative, got {bonus}"));
            }
            SearchPolicy::Penalized { penalty, y_weight }
                if !(penalty.is_finite() && y_weight.is_finite() && penalty >= 0.0 && y_weight >= 0.0) =>
            {
                return bad("penalty and y_weight must be finite and non-negative".into());
            }
            _ => {}
        }

        let mut names: HashSet<&str> = params.keys().map(String::as_str).collect();
        for l in &self.latents {
            if l.name.is_empty() || !names.insert(&l.name) {
                return bad(format!("latent name {:?} is empty or already declared", l.name));
            }
        }
        let scalar_ok = |s: &Scalar, what: &str| -> Result<Vec<f64>> {
            if let Scalar::Param(p) = s {
                if !params.contains_key(p) {
                    return Err(Error::Mechanism(format!("{what} refers to undeclared parameter {p:?}")));
                }
            }
            let vals = s.possible_values(params);
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Mechanism(format!("{what} is not finite")));
            }
            Ok(vals)
        };
        let check_expr = |e: &Expr, what: &str| -> Result<()> {
            match e.variables().into_iter().find(|v| !names.contains(v)) {
                Some(v) => Err(Error::Mechanism(format!("{what} refers to undeclared variable {v:?}"))),
                None => Ok(()),
            }
        };

        let rows = scalar_ok(&self.n_rows, "n_rows")?;
        if rows.iter().any(|&r| !is_whole(r) || r < 10.0 || r > MAX_ROWS as f64) {
            return bad(format!("n_rows must be a whole number in [10, {MAX_ROWS}]"));
        }
        let distractors = scalar_ok(&self.distractor_count, "distractor_count")?;
        if distractors
            .iter()
            .any(|&r| !is_whole(r) || r < 0.0 || r > MAX_DISTRACTORS as f64)
        {
            return bad(format!(
                "distractor_count must be a whole number in [0, {MAX_DISTRACTORS}]"
            ));
        }
        for l in &self.latents {
            match &l.dist {
                Distribution::Gaussian { mean, sd } => {
                    scalar_ok(mean, "gaussian mean")?;
                    if scalar_ok(sd, "gaussian sd")?.iter().any(|&s| s < 0.0) {
                        return bad(format!("latent {:?} has a negative sd", l.name));
                    }
                }
                Distribution::Uniform { lo, hi } => {
                    let (lo, hi) = (scalar_ok(lo, "uniform lo")?, scalar_ok(hi, "uniform hi")?);
                    let max_lo = lo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let min_hi = hi.iter().cloned().fold(f64::INFINITY, f64::min);
                    if max_lo >= min_hi {
                        return bad(format!("latent {:?} needs lo < hi", l.name));
                    }
                }
            }
        }
        for (i, f) in self.observed_features.iter().enumerate() {
            check_expr(&f.expr, &format!("observed feature {i}"))?;
            if scalar_ok(&f.noise, "feature noise")?.iter().any(|&s| s < 0.0) {
                return bad(format!("observed feature {i} has negative noise"));
            }
        }
        check_expr(&self.target_expr, "target_expr")?;

        let min_distractors = distractors.iter().cloned().fold(f64::INFINITY, f64::min) as usize;
        let min_features = self.observed_features.len() + min_distractors;
        if min_features == 0 {
            return bad("a mechanism must produce at least one feature column".into());
        }
        let non_negative = |s: &Scalar, what: &str| -> Result<()> {
            if scalar_ok(s, what)?.iter().any(|&v| v < 0.0) {
                return Err(Error::Mechanism(format!("{what} must be non-negative")));
            }
            Ok(())
        };
        match &self.noise {
            NoiseModel::Homoscedastic { sigma } => non_negative(sigma, "noise sigma")?,
            NoiseModel::Heteroscedastic { feature, sigma, scale } => {
                non_negative(sigma, "noise sigma")?;
                non_negative(scale, "noise scale")?;
                if *feature >= min_features {
                    return bad(format!(
                        "heteroscedastic driver {feature} is not a feature index (only {min_features} guaranteed)"
                    ));
                }
            }
            NoiseModel::LabelCorruption { sigma, fraction } => {
                non_negative(sigma, "noise sigma")?;
                if scalar_ok(fraction, "corruption fraction")?
                    .iter()
                    .any(|&f| !(0.0..=1.0).contains(&f))
                {
                    return bad("corruption fraction must lie in [0, 1]".into());
                }
            }
        }
        Ok(())
    }
}
