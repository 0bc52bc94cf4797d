//! Finsler metrics on open subsets of `R^N`.
//!
//! A metric is stored as a [`MetricSpec`] and evaluated through its squared
//! norm `G = F^2`. All derivative routines return a [`MetricJet`]; closed
//! forms are used where the kind admits them and central differences with
//! step `1e-5 (1 + |v|)` elsewhere.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::scalar::{c, Real};

/// Relative tolerance below which a metric counts as reversible.
pub const TOL_REV: f64 = 1e-10;
/// Components smaller than this fraction of `|v|` are refused by p-norm jets.
pub const PNORM_HYPERPLANE_GUARD: f64 = 1e-8;
/// Euler-identity tolerance for finite-difference jets.
pub const TOL_EULER_FD: f64 = 1e-4;
/// Euler-identity tolerance for closed-form jets.
pub const TOL_EULER_ANALYTIC: f64 = 1e-8;

pub type MatrixField<T> = Arc<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;
pub type CovectorField<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

/// User-supplied metric. Only `energy` is mandatory; the default jet is
/// assembled by central differences.
pub trait AnalyticMetric<T: Real>: Send + Sync {
    fn dimension(&self) -> usize;

    /// `G(q, v) = F(q, v)^2`.
    fn energy(&self, q: &DVector<T>, v: &DVector<T>) -> Result<T>;

    fn jet(&self, q: &DVector<T>, v: &DVector<T>) -> Result<MetricJet<T>> {
        fd_jet(|q, v| self.energy(q, v), q, v, true)
    }

    fn reversible(&self) -> bool {
        false
    }

    /// Whether `jet` is exact. Selects the Euler-identity tolerance.
    fn closed_form(&self) -> bool {
        false
    }
}

/// Riemannian base metric `a(q)`.
#[derive(Clone)]
pub enum Quadratic<T: Real> {
    Constant(DMatrix<T>),
    Field(MatrixField<T>),
}

impl<T: Real> Quadratic<T> {
    fn at(&self, q: &DVector<T>) -> DMatrix<T> {
        match self {
            Quadratic::Constant(m) => m.clone(),
            Quadratic::Field(f) => f(q),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Quadratic::Constant(_))
    }
}

/// Randers drift one-form `b(q)`.
#[derive(Clone)]
pub enum OneForm<T: Real> {
    Constant(DVector<T>),
    Field(CovectorField<T>),
}

impl<T: Real> OneForm<T> {
    fn at(&self, q: &DVector<T>) -> DVector<T> {
        match self {
            OneForm::Constant(b) => b.clone(),
            OneForm::Field(f) => f(q),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, OneForm::Constant(_))
    }
}

#[derive(Clone)]
pub enum MetricKind<T: Real> {
    Euclidean,
    Riemannian(Quadratic<T>),
    /// `F = sqrt(v^T a v) + b . v`.
    Randers {
        base: Quadratic<T>,
        drift: OneForm<T>,
    },
    /// `F = (sum |v_i|^p)^(1/p)`, `p > 2`.
    PNorm {
        p: T,
    },
    Analytic(Arc<dyn AnalyticMetric<T>>),
}

/// Immutable metric definition.
#[derive(Clone)]
pub struct MetricSpec<T: Real> {
    dimension: usize,
    kind: MetricKind<T>,
    declared_reversible: bool,
}

impl<T: Real> fmt::Debug for MetricSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            MetricKind::Euclidean => "euclidean".to_string(),
            MetricKind::Riemannian(_) => "riemannian".to_string(),
            MetricKind::Randers { drift, .. } => match drift {
                OneForm::Constant(b) => format!("randers(b = {:?})", b.as_slice()),
                OneForm::Field(_) => "randers(field)".to_string(),
            },
            MetricKind::PNorm { p } => format!("pnorm(p = {p})"),
            MetricKind::Analytic(_) => "analytic".to_string(),
        };
        f.debug_struct("MetricSpec")
            .field("dimension", &self.dimension)
            .field("kind", &kind)
            .field("declared_reversible", &self.declared_reversible)
            .finish()
    }
}

/// Value and derivatives of `G` at one `(q, v)`.
///
/// `dqv[(j, k)] = d^2 G / dv^j dq^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricJet<T: Real> {
    pub value: T,
    pub dq: DVector<T>,
    pub dv: DVector<T>,
    pub dvv: DMatrix<T>,
    pub dqv: DMatrix<T>,
    pub dqq: DMatrix<T>,
}

/// `G`, `d_q G`, `d_v G`: everything the energy gradient needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstJet<T: Real> {
    pub value: T,
    pub dq: DVector<T>,
    pub dv: DVector<T>,
}

/// Sampled comparison constants between `G` and the Euclidean norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsEstimate<T: Real> {
    /// `ell |v|^2 >= G >= |v|^2 / ell`.
    pub ell: T,
    /// Lower bound on the spectrum of `d_vv G`.
    pub alpha: T,
    pub sample_count: usize,
}

impl<T: Real> MetricSpec<T> {
    pub fn euclidean(dimension: usize) -> Self {
        Self {
            dimension,
            kind: MetricKind::Euclidean,
            declared_reversible: true,
        }
    }

    pub fn riemannian_constant(a: DMatrix<T>) -> Result<Self> {
        check_square_pd(&a)?;
        Ok(Self {
            dimension: a.nrows(),
            kind: MetricKind::Riemannian(Quadratic::Constant(a)),
            declared_reversible: true,
        })
    }

    pub fn riemannian_field(dimension: usize, a: MatrixField<T>) -> Self {
        Self {
            dimension,
            kind: MetricKind::Riemannian(Quadratic::Field(a)),
            declared_reversible: true,
        }
    }

    /// Randers metric over a constant base with a constant drift.
    pub fn randers_constant(base: DMatrix<T>, drift: DVector<T>) -> Result<Self> {
        check_square_pd(&base)?;
        if drift.len() != base.nrows() {
            return Err(invalid(
                "randers drift length does not match base dimension",
            ));
        }
        let norm = dual_norm(&base, &drift)?;
        if norm >= T::one() {
            return Err(Error::MetricDegenerate(format!(
                "randers drift has base norm {norm} >= 1"
            )));
        }
        let reversible = drift.iter().all(|b| *b == T::zero());
        Ok(Self {
            dimension: base.nrows(),
            kind: MetricKind::Randers {
                base: Quadratic::Constant(base),
                drift: OneForm::Constant(drift),
            },
            declared_reversible: reversible,
        })
    }

    /// `F = |v| + b . v` over the Euclidean base.
    pub fn randers_euclidean(drift: DVector<T>) -> Result<Self> {
        let n = drift.len();
        Self::randers_constant(DMatrix::identity(n, n), drift)
    }

    /// Randers metric with position-dependent data. The drift norm is
    /// checked at every evaluation.
    pub fn randers_field(dimension: usize, base: Quadratic<T>, drift: OneForm<T>) -> Self {
        Self {
            dimension,
            kind: MetricKind::Randers { base, drift },
            declared_reversible: false,
        }
    }

    pub fn pnorm(dimension: usize, p: T) -> Result<Self> {
        if !(p > c(2.0)) {
            return Err(invalid(format!("p-norm exponent must exceed 2, got {p}")));
        }
        Ok(Self {
            dimension,
            kind: MetricKind::PNorm { p },
            declared_reversible: true,
        })
    }

    pub fn analytic(metric: Arc<dyn AnalyticMetric<T>>) -> Self {
        Self {
            dimension: metric.dimension(),
            declared_reversible: metric.reversible(),
            kind: MetricKind::Analytic(metric),
        }
    }

    pub fn with_declared_reversible(mut self, reversible: bool) -> Self {
        self.declared_reversible = reversible;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &MetricKind<T> {
        &self.kind
    }

    pub fn declared_reversible(&self) -> bool {
        self.declared_reversible
    }

    /// True when the jet is exact rather than finite-differenced.
    pub fn has_closed_form_jet(&self) -> bool {
        match &self.kind {
            MetricKind::Euclidean | MetricKind::PNorm { .. } => true,
            MetricKind::Riemannian(a) => a.is_constant(),
            MetricKind::Randers { base, drift } => base.is_constant() && drift.is_constant(),
            MetricKind::Analytic(m) => m.closed_form(),
        }
    }

    pub fn euler_tolerance(&self) -> T {
        // floors keep the f64 constants meaningful in f32
        if self.has_closed_form_jet() {
            c::<T>(TOL_EULER_ANALYTIC).max(T::EPS * c(1e4))
        } else {
            c::<T>(TOL_EULER_FD).max(T::EPS.cbrt() * c(10.0))
        }
    }

    fn check_point(&self, q: &DVector<T>, v: &DVector<T>) -> Result<()> {
        if q.len() != self.dimension || v.len() != self.dimension {
            return Err(invalid(format!(
                "expected {}-vectors, got q of length {} and v of length {}",
                self.dimension,
                q.len(),
                v.len()
            )));
        }
        if !q.iter().chain(v.iter()).all(|x| x.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        Ok(())
    }

    /// Finsler norm `F(q, v)`.
    pub fn eval_f(&self, q: &DVector<T>, v: &DVector<T>) -> Result<T> {
        self.check_point(q, v)?;
        match &self.kind {
            MetricKind::Euclidean => Ok(v.norm()),
            MetricKind::Riemannian(a) => Ok(quad(&a.at(q), v).sqrt()),
            MetricKind::Randers { base, drift } => {
                let a = base.at(q);
                let b = drift.at(q);
                if !drift.is_constant() || !base.is_constant() {
                    let nb = dual_norm(&a, &b)?;
                    if nb >= T::one() {
                        return Err(Error::MetricDegenerate(format!(
                            "randers drift norm {nb} >= 1 at q = {:?}",
                            q.as_slice()
                        )));
                    }
                }
                Ok(quad(&a, v).sqrt() + b.dot(v))
            }
            MetricKind::PNorm { p } => {
                let s = pnorm_sum(v, *p);
                if s == T::zero() {
                    Ok(T::zero())
                } else {
                    Ok(s.powf(T::one() / *p))
                }
            }
            MetricKind::Analytic(m) => Ok(m.energy(q, v)?.max(T::zero()).sqrt()),
        }
    }

    /// Squared norm `G = F^2`.
    pub fn eval_g(&self, q: &DVector<T>, v: &DVector<T>) -> Result<T> {
        match &self.kind {
            MetricKind::Euclidean => {
                self.check_point(q, v)?;
                Ok(v.norm_squared())
            }
            MetricKind::Riemannian(a) => {
                self.check_point(q, v)?;
                Ok(quad(&a.at(q), v))
            }
            MetricKind::Analytic(m) => {
                self.check_point(q, v)?;
                m.energy(q, v)
            }
            _ => {
                let f = self.eval_f(q, v)?;
                Ok(f * f)
            }
        }
    }

    /// `G`, `d_q G` and `d_v G`. Cheaper than [`Self::metric_jet`].
    pub fn first_jet(&self, q: &DVector<T>, v: &DVector<T>) -> Result<FirstJet<T>> {
        self.check_point(q, v)?;
        if v.iter().all(|x| *x == T::zero()) {
            return Err(Error::ZeroSection);
        }
        let n = self.dimension;
        match &self.kind {
            MetricKind::Euclidean => Ok(FirstJet {
                value: v.norm_squared(),
                dq: DVector::zeros(n),
                dv: v * c::<T>(2.0),
            }),
            MetricKind::PNorm { p } => {
                pnorm_guard(v)?;
                let (value, dv) = pnorm_first(v, *p);
                Ok(FirstJet {
                    value,
                    dq: DVector::zeros(n),
                    dv,
                })
            }
            MetricKind::Riemannian(a) => {
                let av = a.at(q) * v;
                let value = av.dot(v);
                let dq = if a.is_constant() {
                    DVector::zeros(n)
                } else {
                    fd_grad_q(|q| Ok(quad(&a.at(q), v)), q)?
                };
                Ok(FirstJet {
                    value,
                    dq,
                    dv: av * c::<T>(2.0),
                })
            }
            MetricKind::Randers { base, drift } => {
                let (value, dv, _) = randers_closed(&base.at(q), &drift.at(q), v, false)?;
                let dq = if base.is_constant() && drift.is_constant() {
                    DVector::zeros(n)
                } else {
                    fd_grad_q(|q| self.eval_g(q, v), q)?
                };
                Ok(FirstJet { value, dq, dv })
            }
            MetricKind::Analytic(m) => {
                let jet = m.jet(q, v)?;
                Ok(FirstJet {
                    value: jet.value,
                    dq: jet.dq,
                    dv: jet.dv,
                })
            }
        }
    }

    /// Every derivative block of `G` at `(q, v)`, `v != 0`.
    pub fn metric_jet(&self, q: &DVector<T>, v: &DVector<T>) -> Result<MetricJet<T>> {
        let jet = self.jet_inner(q, v, true)?;
        if Cholesky::new(jet.dvv.clone()).is_none() {
            return Err(Error::MetricDegenerate(format!(
                "d_vv G is not positive definite at q = {:?}, v = {:?}",
                q.as_slice(),
                v.as_slice()
            )));
        }
        Ok(jet)
    }

    fn jet_inner(&self, q: &DVector<T>, v: &DVector<T>, with_qq: bool) -> Result<MetricJet<T>> {
        self.check_point(q, v)?;
        if v.iter().all(|x| *x == T::zero()) {
            return Err(Error::ZeroSection);
        }
        let n = self.dimension;
        let zeros = || DMatrix::<T>::zeros(n, n);
        match &self.kind {
            MetricKind::Euclidean => Ok(MetricJet {
                value: v.norm_squared(),
                dq: DVector::zeros(n),
                dv: v * c::<T>(2.0),
                dvv: DMatrix::identity(n, n) * c::<T>(2.0),
                dqv: zeros(),
                dqq: zeros(),
            }),
            MetricKind::PNorm { p } => {
                pnorm_guard(v)?;
                let (value, dv) = pnorm_first(v, *p);
                Ok(MetricJet {
                    value,
                    dq: DVector::zeros(n),
                    dv,
                    dvv: pnorm_hessian(v, *p),
                    dqv: zeros(),
                    dqq: zeros(),
                })
            }
            MetricKind::Riemannian(a) => {
                let am = a.at(q);
                let two: T = c(2.0);
                let av = &am * v;
                if a.is_constant() {
                    return Ok(MetricJet {
                        value: av.dot(v),
                        dq: DVector::zeros(n),
                        dv: av * two,
                        dvv: am * two,
                        dqv: zeros(),
                        dqq: zeros(),
                    });
                }
                let g = |q: &DVector<T>| Ok(quad(&a.at(q), v));
                let dvg = |q: &DVector<T>| Ok(a.at(q) * v * two);
                Ok(MetricJet {
                    value: av.dot(v),
                    dq: fd_grad_q(g, q)?,
                    dv: av * two,
                    dvv: am * two,
                    dqv: fd_jacobian_q(dvg, q)?,
                    dqq: if with_qq {
                        fd_hessian_q(g, q)?
                    } else {
                        zeros()
                    },
                })
            }
            MetricKind::Randers { base, drift } => {
                let (value, dv, dvv) = randers_closed(&base.at(q), &drift.at(q), v, true)?;
                let dvv = dvv.expect("hessian requested");
                if base.is_constant() && drift.is_constant() {
                    return Ok(MetricJet {
                        value,
                        dq: DVector::zeros(n),
                        dv,
                        dvv,
                        dqv: zeros(),
                        dqq: zeros(),
                    });
                }
                let g = |q: &DVector<T>| self.eval_g(q, v);
                let dvg = |q: &DVector<T>| {
                    randers_closed(&base.at(q), &drift.at(q), v, false).map(|(_, dv, _)| dv)
                };
                Ok(MetricJet {
                    value,
                    dq: fd_grad_q(g, q)?,
                    dv,
                    dvv,
                    dqv: fd_jacobian_q(dvg, q)?,
                    dqq: if with_qq {
                        fd_hessian_q(g, q)?
                    } else {
                        zeros()
                    },
                })
            }
            MetricKind::Analytic(m) => m.jet(q, v),
        }
    }

    /// Fundamental tensor `g = 1/2 d_vv G`.
    pub fn fundamental_tensor(&self, q: &DVector<T>, v: &DVector<T>) -> Result<DMatrix<T>> {
        let jet = self.metric_jet(q, v)?;
        Ok(jet.dvv * c::<T>(0.5))
    }

    /// Geodesic spray: the acceleration of the geodesic through `(q, v)`,
    /// `-(d_vv G)^{-1} (d_qv G . v - d_q G)`.
    pub fn spray(&self, q: &DVector<T>, v: &DVector<T>) -> Result<DVector<T>> {
        if self.has_zero_spray() {
            self.check_point(q, v)?;
            if v.iter().all(|x| *x == T::zero()) {
                return Err(Error::ZeroSection);
            }
            return Ok(DVector::zeros(self.dimension));
        }
        let jet = self.jet_inner(q, v, false)?;
        spray_from_jet(&jet, v)
    }

    /// Translation-invariant quadratic or Minkowski norms have straight geodesics.
    pub fn has_zero_spray(&self) -> bool {
        match &self.kind {
            MetricKind::Euclidean | MetricKind::PNorm { .. } => true,
            MetricKind::Riemannian(a) => a.is_constant(),
            MetricKind::Randers { base, drift } => base.is_constant() && drift.is_constant(),
            MetricKind::Analytic(_) => false,
        }
    }

    /// Maximal relative asymmetry `|F(q,v) - F(q,-v)| / F(q,v)` over the samples.
    pub fn is_reversible(&self, samples: &[(DVector<T>, DVector<T>)]) -> Result<(bool, T)> {
        if samples.is_empty() {
            return Err(invalid("reversibility check needs at least one sample"));
        }
        let mut worst = T::zero();
        for (q, v) in samples {
            if v.iter().all(|x| *x == T::zero()) {
                return Err(Error::ZeroSection);
            }
            let fwd = self.eval_f(q, v)?;
            let bwd = self.eval_f(q, &(-v))?;
            worst = worst.max((fwd - bwd).abs() / fwd);
        }
        Ok((worst <= c(TOL_REV), worst))
    }

    /// Samples `ell` and `alpha` from `count` draws of `(q, unit v)`.
    pub fn estimate_bounds<S>(&self, mut sampler: S, count: usize) -> Result<BoundsEstimate<T>>
    where
        S: FnMut() -> (DVector<T>, DVector<T>),
    {
        if count == 0 {
            return Err(invalid("estimate_bounds needs count >= 1"));
        }
        let mut ell = T::one();
        let mut alpha: Option<T> = None;
        for _ in 0..count {
            let (q, v) = sampler();
            let norm = v.norm();
            if norm == T::zero() {
                return Err(Error::ZeroSection);
            }
            let v = v / norm;
            let jet = self.metric_jet(&q, &v)?;
            if !(jet.value > T::zero()) {
                return Err(Error::MetricDegenerate(
                    "G vanishes on a unit vector".into(),
                ));
            }
            ell = ell.max(jet.value).max(T::one() / jet.value);
            let low = min_eigenvalue(&jet.dvv);
            if !(low > T::zero()) {
                return Err(Error::MetricDegenerate(format!(
                    "d_vv G has eigenvalue {low} at q = {:?}",
                    q.as_slice()
                )));
            }
            alpha = Some(alpha.map_or(low, |a: T| a.min(low)));
        }
        Ok(BoundsEstimate {
            ell,
            alpha: alpha.expect("count >= 1"),
            sample_count: count,
        })
    }
}

/// Spray from a precomputed jet.
pub fn spray_from_jet<T: Real>(jet: &MetricJet<T>, v: &DVector<T>) -> Result<DVector<T>> {
    let rhs = &jet.dqv * v - &jet.dq;
    let chol = Cholesky::new(jet.dvv.clone())
        .ok_or_else(|| Error::MetricDegenerate("singular fundamental tensor".into()))?;
    Ok(-chol.solve(&rhs))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(|| c(f64::MAX)), |a, b| {
            a.min(b)
        })
}

fn quad<T: Real>(a: &DMatrix<T>, v: &DVector<T>) -> T {
    (a * v).dot(v)
}

fn check_square_pd<T: Real>(a: &DMatrix<T>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(invalid("metric matrix must be square and non-empty"));
    }
    if Cholesky::new(a.clone()).is_none() {
        return Err(Error::MetricDegenerate(
            "base matrix is not positive definite".into(),
        ));
    }
    Ok(())
}

/// `sqrt(b^T a^{-1} b)`.
fn dual_norm<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Result<T> {
    let chol = Cholesky::<T, Dyn>::new(a.clone())
        .ok_or_else(|| Error::MetricDegenerate("base matrix is not positive definite".into()))?;
    Ok(chol.solve(b).dot(b).max(T::zero()).sqrt())
}

#[allow(clippy::type_complexity)]
fn randers_closed<T: Real>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    v: &DVector<T>,
    hessian: bool,
) -> Result<(T, DVector<T>, Option<DMatrix<T>>)> {
    let two: T = c(2.0);
    let av = a * v;
    let alpha = av.dot(v).sqrt();
    if alpha == T::zero() {
        return Err(Error::ZeroSection);
    }
    let f = alpha + b.dot(v);
    if !(f > T::zero()) {
        return Err(Error::MetricDegenerate(format!("randers F = {f} <= 0")));
    }
    // dF/dv = a v / alpha + b
    let df = &av / alpha + b;
    let dv = &df * (two * f);
    let dvv = hessian.then(|| {
        let d2f = a / alpha - (&av * av.transpose()) / (alpha * alpha * alpha);
        (&df * df.transpose()) * two + d2f * (two * f)
    });
    Ok((f * f, dv, dvv))
}

fn pnorm_sum<T: Real>(v: &DVector<T>, p: T) -> T {
    v.iter().fold(T::zero(), |s, x| s + x.abs().powf(p))
}

fn pnorm_guard<T: Real>(v: &DVector<T>) -> Result<()> {
    let norm = v.norm();
    for (i, x) in v.iter().enumerate() {
        if x.abs() < c::<T>(PNORM_HYPERPLANE_GUARD) * norm {
            return Err(Error::SmoothnessBoundary {
                component: i,
                ratio: (x.abs() / norm).to_f64_lossy(),
            });
        }
    }
    Ok(())
}

fn pnorm_first<T: Real>(v: &DVector<T>, p: T) -> (T, DVector<T>) {
    let two: T = c(2.0);
    let s = pnorm_sum(v, p);
    let g = s.powf(two / p);
    let scale = two * s.powf(two / p - T::one());
    let dv = v.map(|x| scale * x.abs().powf(p - T::one()) * x.signum());
    (g, dv)
}

fn pnorm_hessian<T: Real>(v: &DVector<T>, p: T) -> DMatrix<T> {
    let two: T = c(2.0);
    let s = pnorm_sum(v, p);
    let w = v.map(|x| x.abs().powf(p - T::one()) * x.signum());
    let outer = (&w * w.transpose()) * (two * (two / p - T::one()) * s.powf(two / p - two) * p);
    let diag = DMatrix::from_diagonal(
        &v.map(|x| two * s.powf(two / p - T::one()) * (p - T::one()) * x.abs().powf(p - two)),
    );
    outer + diag
}

fn step_for<T: Real>(x: &DVector<T>) -> T {
    c::<T>(1e-5) * (T::one() + x.norm())
}

fn fd_grad_q<T: Real, F>(g: F, q: &DVector<T>) -> Result<DVector<T>>
where
    F: Fn(&DVector<T>) -> Result<T>,
{
    let h = step_for(q);
    let mut out = DVector::zeros(q.len());
    let mut qp = q.clone();
    for k in 0..q.len() {
        qp[k] = q[k] + h;
        let up = g(&qp)?;
        qp[k] = q[k] - h;
        let dn = g(&qp)?;
        qp[k] = q[k];
        out[k] = (up - dn) / (h + h);
    }
    Ok(out)
}

/// Column `k` is the derivative of `f` along `q^k`.
fn fd_jacobian_q<T: Real, F>(f: F, q: &DVector<T>) -> Result<DMatrix<T>>
where
    F: Fn(&DVector<T>) -> Result<DVector<T>>,
{
    let h = step_for(q);
    let n = q.len();
    let mut out = DMatrix::zeros(n, n);
    let mut qp = q.clone();
    for k in 0..n {
        qp[k] = q[k] + h;
        let up = f(&qp)?;
        qp[k] = q[k] - h;
        let dn = f(&qp)?;
        qp[k] = q[k];
        out.set_column(k, &((up - dn) / (h + h)));
    }
    Ok(out)
}

fn fd_hessian_q<T: Real, F>(g: F, q: &DVector<T>) -> Result<DMatrix<T>>
where
    F: Fn(&DVector<T>) -> Result<T>,
{
    fd_hessian(|x| g(x), q, step_for(q))
}

fn fd_hessian<T: Real, F>(g: F, x: &DVector<T>, h: T) -> Result<DMatrix<T>>
where
    F: Fn(&DVector<T>) -> Result<T>,
{
    let n = x.len();
    let four: T = c(4.0);
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for i in 0..n {
        for j in i..n {
            let mut eval = |si: T, sj: T| -> Result<T> {
                xp[i] += si * h;
                xp[j] += sj * h;
                let val = g(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                val
            };
            let one = T::one();
            let val = (eval(one, one)? - eval(one, -one)? - eval(-one, one)? + eval(-one, -one)?)
                / (four * h * h);
            out[(i, j)] = val;
            out[(j, i)] = val;
        }
    }
    Ok(out)
}

/// Finite-difference jet of an energy function `G(q, v)`.
pub fn fd_jet<T: Real, F>(
    g: F,
    q: &DVector<T>,
    v: &DVector<T>,
    with_qq: bool,
) -> Result<MetricJet<T>>
where
    F: Fn(&DVector<T>, &DVector<T>) -> Result<T>,
{
    let n = q.len();
    let hq = step_for(q);
    let hv = step_for(v);
    let two: T = c(2.0);
    let four: T = c(4.0);
    let value = g(q, v)?;
    let dq = fd_grad_q(|x| g(x, v), q)?;
    let mut dv = DVector::zeros(n);
    let mut vp = v.clone();
    for k in 0..n {
        vp[k] = v[k] + hv;
        let up = g(q, &vp)?;
        vp[k] = v[k] - hv;
        let dn = g(q, &vp)?;
        vp[k] = v[k];
        dv[k] = (up - dn) / (two * hv);
    }
    let dvv = fd_hessian(|x| g(q, x), v, hv)?;
    let mut dqv = DMatrix::zeros(n, n);
    let mut qp = q.clone();
    for j in 0..n {
        for k in 0..n {
            let mut eval = |sv: T, sq: T| -> Result<T> {
                vp[j] += sv * hv;
                qp[k] += sq * hq;
                let val = g(&qp, &vp);
                vp[j] = v[j];
                qp[k] = q[k];
                val
            };
            let one = T::one();
            dqv[(j, k)] = (eval(one, one)? - eval(one, -one)? - eval(-one, one)?
                + eval(-one, -one)?)
                / (four * hq * hv);
        }
    }
    let dqq = if with_qq {
        fd_hessian(|x| g(x, v), q, hq)?
    } else {
        DMatrix::zeros(n, n)
    };
    Ok(MetricJet {
        value,
        dq,
        dv,
        dvv,
        dqv,
        dqq,
    })
}
