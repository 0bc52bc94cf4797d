//! JSON run configuration: metric, domain, solver parameters.
//!
//! The metric and domain entries may be inline objects or paths to JSON
//! files (relative to the configuration file). Overrides use dotted paths,
//! `penalty.max_iters=1`; the value is parsed as JSON when possible and
//! kept as a string otherwise.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::Value;

use crate::chord::ChordParams;
use crate::domain::{ImplicitDomain, ImplicitFunction};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::metric::{AnalyticMetric, MetricSpec, OneForm, Quadratic};
use crate::penalty::PenaltyParams;

type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type CovectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SEGMENTS: usize = 64;

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricConfig {
    Euclidean {
        dimension: usize,
    },
    Riemannian {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        matrix_expr: Option<Vec<Vec<String>>>,
    },
    Randers {
        /// Defaults to the identity.
        #[serde(default)]
        base: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        base_expr: Option<Vec<Vec<String>>>,
        #[serde(default)]
        drift: Option<Vec<f64>>,
        #[serde(default)]
        drift_expr: Option<Vec<String>>,
    },
    Pnorm {
        dimension: usize,
        p: f64,
    },
    /// `G(q, v)` as an expression in `q0.. q{N-1}`, `v0.. v{N-1}`.
    Expression {
        dimension: usize,
        energy: String,
        #[serde(default)]
        reversible: bool,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainShape {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Ellipsoid {
        semi_axes: Vec<f64>,
    },
    Peanut {
        #[serde(default = "two")]
        dimension: usize,
        #[serde(default = "one")]
        focal: f64,
        #[serde(default = "peanut_a")]
        a: f64,
    },
    /// `phi(q)` as an expression in `q0.. q{N-1}` (or `x, y, z`).
    Implicit {
        dimension: usize,
        phi: String,
        #[serde(default)]
        star_center: Option<Vec<f64>>,
    },
}

fn two() -> usize {
    2
}
fn one() -> f64 {
    1.0
}
fn peanut_a() -> f64 {
    1.2
}

#[derive(Debug, Clone, Deserialize)]
pub struct DomainConfig {
    #[serde(flatten)]
    pub shape: DomainShape,
    pub delta0: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Explicit decreasing `delta` values.
    pub schedule: Option<Vec<f64>>,
    pub grad_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub shrink: Option<f64>,
    pub sufficient_decrease: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChordConfig {
    pub ortho_tol: Option<f64>,
    pub tangency_tol: Option<f64>,
    pub dedup_tol: Option<f64>,
    pub value_tol: Option<f64>,
    pub endpoint_tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub relax_grad_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub boundary_grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub boundary_grid: Option<usize>,
    #[serde(default = "strip_samples")]
    pub samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            boundary_grid: None,
            samples: strip_samples(),
        }
    }
}

fn strip_samples() -> usize {
    crate::domain::DEFAULT_STRIP_SAMPLES
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "verify_samples")]
    pub samples: usize,
    /// Replaces the metric's Euler-identity tolerance.
    pub euler_tolerance: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: verify_samples(),
            euler_tolerance: None,
        }
    }
}

fn verify_samples() -> usize {
    200
}

/// Parsed configuration with metric and domain resolved.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    pub metric: MetricConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub chord: ChordConfig,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub search: GridConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_n() -> usize {
    DEFAULT_SEGMENTS
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Sets `root[a][b]... = value` for the dotted `path`, creating objects.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| cfg(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(cfg(format!("bad override path {path:?}")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(cfg(format!("override {path:?} descends into a non-object")));
        }
        node = node
            .as_object_mut()
            .expect("checked")
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| cfg(format!("override {path:?} descends into a non-object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| cfg(format!("{}: {e}", path.display())))
}

fn resolve_reference(root: &mut Value, key: &str, base: &Path) -> Result<()> {
    if let Some(Value::String(rel)) = root.get(key) {
        let path: PathBuf = base.join(rel);
        let loaded = read_json(&path)?;
        root[key] = loaded;
    }
    Ok(())
}

impl RunConfig {
    /// Reads `path`, applies overrides and resolves file references.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut root = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_value_with_base(&mut root, overrides, &base)
    }

    pub fn from_value(mut root: Value, overrides: &[String]) -> Result<Self> {
        Self::from_value_with_base(&mut root, overrides, Path::new("."))
    }

    fn from_value_with_base(root: &mut Value, overrides: &[String], base: &Path) -> Result<Self> {
        if !root.is_object() {
            return Err(cfg("configuration must be a JSON object"));
        }
        // whole-entry overrides may swap a file reference, so they go
        // before resolution and nested ones after
        let whole = |o: &String| o.starts_with("metric=") || o.starts_with("domain=");
        for o in overrides.iter().filter(|o| whole(o)) {
            apply_override(root, o)?;
        }
        resolve_reference(root, "metric", base)?;
        resolve_reference(root, "domain", base)?;
        for o in overrides.iter().filter(|o| !whole(o)) {
            apply_override(root, o)?;
        }
        let config: RunConfig =
            serde_json::from_value(root.clone()).map_err(|e| cfg(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < crate::curve::MIN_SEGMENTS {
            return Err(cfg(format!(
                "n = {} is below {}",
                self.n,
                crate::curve::MIN_SEGMENTS
            )));
        }
        let dm = metric_dimension(&self.metric)?;
        let dd = domain_dimension(&self.domain.shape);
        if dm != dd {
            return Err(cfg(format!(
                "metric dimension {dm} differs from domain dimension {dd}"
            )));
        }
        if let Some(s) = &self.solve {
            if s.a.len() != dd || s.b.len() != dd {
                return Err(cfg("solve endpoints have the wrong dimension"));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        domain_dimension(&self.domain.shape)
    }

    pub fn build_metric(&self) -> Result<MetricSpec<f64>> {
        build_metric(&self.metric)
    }

    pub fn build_domain(&self) -> Result<ImplicitDomain<f64>> {
        build_domain(&self.domain)
    }

    pub fn penalty_params(&self) -> Result<PenaltyParams<f64>> {
        let mut p = PenaltyParams::default_for(self.domain.delta0, self.n);
        let c = &self.penalty;
        if let Some(s) = &c.schedule {
            p.delta_schedule = s.clone();
        }
        if let Some(g) = c.grad_tol {
            p.grad_tol = g;
        }
        if let Some(m) = c.max_iters {
            p.max_iters = m;
        }
        if let Some(s) = c.shrink {
            if !(s > 0.0 && s < 1.0) {
                return Err(cfg("penalty.shrink must lie in (0, 1)"));
            }
            p.line_search.shrink = s;
        }
        if let Some(s) = c.sufficient_decrease {
            p.line_search.sufficient_decrease = s;
        }
        p.validate(self.domain.delta0)
            .map_err(|e| cfg(e.to_string()))?;
        Ok(p)
    }

    pub fn chord_params(&self) -> Result<ChordParams<f64>> {
        let mut p = ChordParams::default_for(self.domain.delta0, self.n);
        p.penalty = self.penalty_params()?;
        let c = &self.chord;
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.ortho_tol, c.ortho_tol);
        set(&mut p.tangency_tol, c.tangency_tol);
        set(&mut p.dedup_tol, c.dedup_tol);
        set(&mut p.value_tol, c.value_tol);
        set(&mut p.endpoint_tol, c.endpoint_tol);
        set(&mut p.relax_grad_tol, c.relax_grad_tol);
        if let Some(m) = c.max_outer {
            p.max_outer = m;
        }
        if let Some(m) = self.penalty.max_iters {
            // a user cap on iterations applies to every relaxation
            p.penalty.max_iters = m;
        }
        Ok(p)
    }
}

fn metric_dimension(m: &MetricConfig) -> Result<usize> {
    Ok(match m {
        MetricConfig::Euclidean { dimension }
        | MetricConfig::Pnorm { dimension, .. }
        | MetricConfig::Expression { dimension, .. } => *dimension,
        MetricConfig::Riemannian {
            matrix,
            matrix_expr,
        } => match (matrix, matrix_expr) {
            (Some(m), None) => m.len(),
            (None, Some(m)) => m.len(),
            _ => {
                return Err(cfg(
                    "riemannian metric needs exactly one of matrix, matrix_expr",
                ))
            }
        },
        MetricConfig::Randers {
            drift, drift_expr, ..
        } => match (drift, drift_expr) {
            (Some(b), None) => b.len(),
            (None, Some(b)) => b.len(),
            _ => return Err(cfg("randers metric needs exactly one of drift, drift_expr")),
        },
    })
}

fn domain_dimension(d: &DomainShape) -> usize {
    match d {
        DomainShape::Ball { center, .. } => center.len(),
        DomainShape::Ellipsoid { semi_axes } => semi_axes.len(),
        DomainShape::Peanut { dimension, .. } | DomainShape::Implicit { dimension, .. } => {
            *dimension
        }
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(cfg("matrix must be square and non-empty"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn expr_matrix(rows: &[Vec<String>]) -> Result<MatrixField> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(cfg("matrix_expr must be square and non-empty"));
    }
    let exprs: Vec<Vec<Expr>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|s| Expr::parse(s, n))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Arc::new(move |q: &DVector<f64>| {
        let m = DMatrix::from_fn(n, n, |i, j| exprs[i][j].eval(q.as_slice()));
        (&m + m.transpose()) * 0.5
    }))
}

fn expr_covector(entries: &[String]) -> Result<CovectorField> {
    let n = entries.len();
    let exprs: Vec<Expr> = entries
        .iter()
        .map(|s| Expr::parse(s, n))
        .collect::<Result<_>>()?;
    Ok(Arc::new(move |q: &DVector<f64>| {
        DVector::from_iterator(n, exprs.iter().map(|e| e.eval(q.as_slice())))
    }))
}

struct ExpressionMetric {
    dimension: usize,
    energy: Expr,
    reversible: bool,
}

impl AnalyticMetric<f64> for ExpressionMetric {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn energy(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let args: Vec<f64> = q.iter().chain(v.iter()).copied().collect();
        let g = self.energy.eval(&args);
        if !g.is_finite() || g < 0.0 {
            return Err(Error::MetricDegenerate(format!(
                "energy expression gives {g}"
            )));
        }
        Ok(g)
    }

    fn reversible(&self) -> bool {
        self.reversible
    }
}

pub fn build_metric(m: &MetricConfig) -> Result<MetricSpec<f64>> {
    let dim = metric_dimension(m)?;
    match m {
        MetricConfig::Euclidean { dimension } => Ok(MetricSpec::euclidean(*dimension)),
        MetricConfig::Riemannian {
            matrix: Some(a), ..
        } => MetricSpec::riemannian_constant(matrix(a)?),
        MetricConfig::Riemannian {
            matrix_expr: Some(a),
            ..
        } => Ok(MetricSpec::riemannian_field(dim, expr_matrix(a)?)),
        MetricConfig::Riemannian { .. } => unreachable!("checked by metric_dimension"),
        MetricConfig::Randers {
            base,
            base_expr,
            drift,
            drift_expr,
        } => {
            let base = match (base, base_expr) {
                (Some(_), Some(_)) => {
                    return Err(cfg("randers metric takes at most one of base, base_expr"))
                }
                (Some(b), None) => Quadratic::Constant(matrix(b)?),
                (None, Some(b)) => Quadratic::Field(expr_matrix(b)?),
                (None, None) => Quadratic::Constant(DMatrix::identity(dim, dim)),
            };
            match (base, drift, drift_expr) {
                (Quadratic::Constant(a), Some(b), None) => {
                    MetricSpec::randers_constant(a, DVector::from_vec(b.clone()))
                }
                (base, Some(b), None) => Ok(MetricSpec::randers_field(
                    dim,
                    base,
                    OneForm::Constant(DVector::from_vec(b.clone())),
                )),
                (base, None, Some(b)) => Ok(MetricSpec::randers_field(
                    dim,
                    base,
                    OneForm::Field(expr_covector(b)?),
                )),
                _ => unreachable!("checked by metric_dimension"),
            }
        }
        MetricConfig::Pnorm { dimension, p } => MetricSpec::pnorm(*dimension, *p),
        MetricConfig::Expression {
            dimension,
            energy,
            reversible,
        } => {
            let names: Vec<String> = (0..*dimension)
                .map(|i| format!("q{i}"))
                .chain((0..*dimension).map(|i| format!("v{i}")))
                .collect();
            Ok(MetricSpec::analytic(Arc::new(ExpressionMetric {
                dimension: *dimension,
                energy: Expr::parse_with_names(energy, &names)?,
                reversible: *reversible,
            })))
        }
    }
}

struct ExpressionDomain {
    dimension: usize,
    phi: Expr,
    center: Option<DVector<f64>>,
}

impl ImplicitFunction<f64> for ExpressionDomain {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn phi(&self, q: &DVector<f64>) -> f64 {
        self.phi.eval(q.as_slice())
    }

    fn star_center(&self) -> Option<DVector<f64>> {
        self.center.clone()
    }
}

pub fn build_domain(d: &DomainConfig) -> Result<ImplicitDomain<f64>> {
    match &d.shape {
        DomainShape::Ball { center, radius } => {
            ImplicitDomain::ball(DVector::from_vec(center.clone()), *radius, d.delta0)
        }
        DomainShape::Ellipsoid { semi_axes } => {
            ImplicitDomain::ellipsoid(DVector::from_vec(semi_axes.clone()), d.delta0)
        }
        DomainShape::Peanut {
            dimension,
            focal,
            a,
        } => ImplicitDomain::peanut(*dimension, *focal, *a, d.delta0),
        DomainShape::Implicit {
            dimension,
            phi,
            star_center,
        } => {
            if let Some(c) = star_center {
                if c.len() != *dimension {
                    return Err(cfg("star_center has the wrong dimension"));
                }
            }
            ImplicitDomain::analytic(
                Arc::new(ExpressionDomain {
                    dimension: *dimension,
                    phi: Expr::parse(phi, *dimension)?,
                    center: star_center.as_ref().map(|c| DVector::from_vec(c.clone())),
                }),
                d.delta0,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "metric": {"type": "euclidean", "dimension": 2},
            "domain": {"type": "ellipsoid", "semi_axes": [2.0, 1.0], "delta0": 0.25},
            "solve": {"a": [0.1, 1.0], "b": [0.0, -1.0]}
        })
    }

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::from_value(base(), &[]).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.n, 64);
        let c = RunConfig::from_value(
            base(),
            &[
                "penalty.max_iters=1".into(),
                "n=32".into(),
                "search.boundary_grid=8".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.penalty.max_iters, Some(1));
        assert_eq!(c.n, 32);
        assert_eq!(c.search.boundary_grid, Some(8));
        assert_eq!(c.chord_params().unwrap().penalty.max_iters, 1);
        assert!(RunConfig::from_value(base(), &["n=4".into()]).is_err());
        assert!(RunConfig::from_value(base(), &["nokey".into()]).is_err());
        assert!(RunConfig::from_value(base(), &["bogus=1".into()]).is_err());
    }

    #[test]
    fn builds_every_metric_kind() {
        let kinds = [
            json!({"type": "euclidean", "dimension": 2}),
            json!({"type": "riemannian", "matrix": [[2.0, 0.0], [0.0, 1.0]]}),
            json!({"type": "riemannian", "matrix_expr": [["1 + x^2", "0"], ["0", "1"]]}),
            json!({"type": "randers", "drift": [0.3, 0.0]}),
            json!({"type": "randers", "drift_expr": ["0.2*x", "0"]}),
            json!({"type": "pnorm", "dimension": 2, "p": 3.0}),
            json!({"type": "expression", "dimension": 2, "energy": "v0^2 + 2*v1^2", "reversible": true}),
        ];
        let q = DVector::from_vec(vec![0.5, 0.1]);
        let v = DVector::from_vec(vec![0.6, 0.8]);
        for k in kinds {
            let m: MetricConfig = serde_json::from_value(k.clone()).unwrap();
            let spec = build_metric(&m).unwrap();
            let g = spec.eval_g(&q, &v).unwrap();
            assert!(g > 0.0, "{k}");
        }
        let bad: MetricConfig =
            serde_json::from_value(json!({"type": "randers", "drift": [1.5, 0.0]})).unwrap();
        assert!(build_metric(&bad).is_err());
    }

    #[test]
    fn implicit_domain_matches_ball() {
        let d: DomainConfig = serde_json::from_value(json!({
            "type": "implicit", "dimension": 2, "phi": "0.5*(x^2 + y^2 - 1)", "star_center": [0, 0], "delta0": 0.25
        }))
        .unwrap();
        let dom = build_domain(&d).unwrap();
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let q = DVector::from_vec(vec![0.3, -0.7]);
        assert!((dom.phi(&q) - ball.phi(&q)).abs() < 1e-15);
        assert!((dom.grad_phi(&q) - ball.grad_phi(&q)).norm() < 1e-8);
    }

    #[test]
    fn file_references_resolve_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("m.json"),
            r#"{"type": "euclidean", "dimension": 2}"#,
        )
        .unwrap();
        let mut root = base();
        root["metric"] = json!("m.json");
        let path = dir.path().join("run.json");
        std::fs::write(&path, root.to_string()).unwrap();
        assert!(RunConfig::load(&path, &[]).is_ok());
        let c = RunConfig::load(&path, &["metric.dimension=3".into()]);
        assert!(matches!(c, Err(Error::Config(m)) if m.contains("dimension")));
        std::fs::write(
            dir.path().join("p.json"),
            r#"{"type": "pnorm", "dimension": 2, "p": 3}"#,
        )
        .unwrap();
        let c = RunConfig::load(&path, &["metric=p.json".into(), "metric.p=4".into()]).unwrap();
        assert!(matches!(c.metric, MetricConfig::Pnorm { p, .. } if p == 4.0));
        root["metric"] = json!("missing.json");
        std::fs::write(&path, root.to_string()).unwrap();
        assert!(matches!(RunConfig::load(&path, &[]), Err(Error::Config(_))));
    }
}
