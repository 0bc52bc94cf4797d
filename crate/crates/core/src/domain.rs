//! Implicit domains `Omega = {phi < 0}` and their boundary geometry.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::metric::{BoundsEstimate, MetricSpec};
use crate::scalar::{c, Real};

/// Newton iterations allowed in [`ImplicitDomain::boundary_project`].
pub const PROJECTION_MAX_ITERS: usize = 50;
/// Default sample count for strip sampling (`K0`).
pub const DEFAULT_STRIP_SAMPLES: usize = 10_000;

/// User-supplied boundary-defining function.
pub trait ImplicitFunction<T: Real>: Send + Sync {
    fn dimension(&self) -> usize;

    fn phi(&self, q: &DVector<T>) -> T;

    fn grad(&self, q: &DVector<T>) -> DVector<T> {
        let h = c::<T>(1e-6) * (T::one() + q.norm());
        let mut out = DVector::zeros(q.len());
        let mut x = q.clone();
        for k in 0..q.len() {
            x[k] = q[k] + h;
            let up = self.phi(&x);
            x[k] = q[k] - h;
            let dn = self.phi(&x);
            x[k] = q[k];
            out[k] = (up - dn) / (h + h);
        }
        out
    }

    fn hess(&self, q: &DVector<T>) -> DMatrix<T> {
        let h = c::<T>(1e-5) * (T::one() + q.norm());
        let n = q.len();
        let mut out = DMatrix::zeros(n, n);
        let mut x = q.clone();
        for k in 0..n {
            x[k] = q[k] + h;
            let up = self.grad(&x);
            x[k] = q[k] - h;
            let dn = self.grad(&x);
            x[k] = q[k];
            out.set_column(k, &((up - dn) / (h + h)));
        }
        (&out + out.transpose()) * c::<T>(0.5)
    }

    /// A point from which the domain (and every strip level set) is
    /// radially star-shaped, if known.
    fn star_center(&self) -> Option<DVector<T>> {
        None
    }
}

#[derive(Clone)]
pub enum DomainKind<T: Real> {
    /// `phi = 1/2 (|q - center|^2 - r^2)`.
    Ball {
        center: DVector<T>,
        radius: T,
    },
    /// `phi = 1/2 (sum q_i^2 / a_i^2 - 1)`.
    Ellipsoid {
        semi_axes: DVector<T>,
    },
    /// Cassini-type quartic with a concave neck around the `q^1 = 0` plane:
    /// `phi = (|q|^4 - 2 c^2 (q_1^2 - |q_rest|^2) - (a^4 - c^4)) / (4 a^2)`,
    /// with `c < a < sqrt(2) c`.
    Peanut {
        focal: T,
        a: T,
    },
    Analytic(Arc<dyn ImplicitFunction<T>>),
}

/// Immutable domain with its strip half-width `delta0`.
#[derive(Clone)]
pub struct ImplicitDomain<T: Real> {
    dimension: usize,
    kind: DomainKind<T>,
    delta0: T,
}

impl<T: Real> fmt::Debug for ImplicitDomain<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            DomainKind::Ball { radius, .. } => format!("ball(r = {radius})"),
            DomainKind::Ellipsoid { semi_axes } => format!("ellipsoid({:?})", semi_axes.as_slice()),
            DomainKind::Peanut { focal, a } => format!("peanut(c = {focal}, a = {a})"),
            DomainKind::Analytic(_) => "analytic".to_string(),
        };
        f.debug_struct("ImplicitDomain")
            .field("dimension", &self.dimension)
            .field("kind", &kind)
            .field("delta0", &self.delta0)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConstants<T: Real> {
    /// Max of `|grad phi|` over the strip.
    pub k0: T,
    /// `delta0^2 / (2 ell k0^2)`.
    pub delta_m: T,
    pub ell: T,
}

fn check_delta0<T: Real>(delta0: T) -> Result<()> {
    if !(delta0 > T::zero()) || !delta0.is_finite() {
        return Err(invalid(format!("delta0 must be positive, got {delta0}")));
    }
    Ok(())
}

impl<T: Real> ImplicitDomain<T> {
    pub fn ball(center: DVector<T>, radius: T, delta0: T) -> Result<Self> {
        check_delta0(delta0)?;
        if !(radius > T::zero()) {
            return Err(invalid("ball radius must be positive"));
        }
        // the strip must stay clear of the centre, where grad phi = 0
        if !(delta0 < radius * radius * c(0.5)) {
            return Err(invalid("delta0 must be below r^2 / 2 for a ball"));
        }
        Ok(Self {
            dimension: center.len(),
            kind: DomainKind::Ball { center, radius },
            delta0,
        })
    }

    pub fn unit_ball(dimension: usize, delta0: T) -> Result<Self> {
        Self::ball(DVector::zeros(dimension), T::one(), delta0)
    }

    pub fn ellipsoid(semi_axes: DVector<T>, delta0: T) -> Result<Self> {
        check_delta0(delta0)?;
        if semi_axes.iter().any(|a| !(*a > T::zero())) {
            return Err(invalid("semi-axes must be positive"));
        }
        if !(delta0 < c(0.5)) {
            return Err(invalid("delta0 must be below 1/2 for an ellipsoid"));
        }
        Ok(Self {
            dimension: semi_axes.len(),
            kind: DomainKind::Ellipsoid { semi_axes },
            delta0,
        })
    }

    /// 2-D ellipse with semi-axes `a` along `q^1` and `b` along `q^2`.
    pub fn ellipse(a: T, b: T, delta0: T) -> Result<Self> {
        Self::ellipsoid(DVector::from_vec(vec![a, b]), delta0)
    }

    pub fn peanut(dimension: usize, focal: T, a: T, delta0: T) -> Result<Self> {
        check_delta0(delta0)?;
        if dimension < 2 {
            return Err(invalid("peanut needs dimension >= 2"));
        }
        if !(a > focal && focal > T::zero()) {
            return Err(invalid("peanut needs 0 < focal < a"));
        }
        let a2 = a * a;
        let c2 = focal * focal;
        // phi at the origin saddle; the strip must not reach it
        let phi0 = -(a2 * a2 - c2 * c2) / (c::<T>(4.0) * a2);
        if !(delta0 < -phi0) {
            return Err(invalid(format!(
                "delta0 = {delta0} reaches the neck saddle (|phi(0)| = {})",
                -phi0
            )));
        }
        Ok(Self {
            dimension,
            kind: DomainKind::Peanut { focal, a },
            delta0,
        })
    }

    pub fn analytic(function: Arc<dyn ImplicitFunction<T>>, delta0: T) -> Result<Self> {
        check_delta0(delta0)?;
        Ok(Self {
            dimension: function.dimension(),
            kind: DomainKind::Analytic(function),
            delta0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &DomainKind<T> {
        &self.kind
    }

    pub fn delta0(&self) -> T {
        self.delta0
    }

    /// Boundary tolerance `1e-10 (1 + delta0)`, floored at `64 eps` for `f32`.
    pub fn tol_phi(&self) -> T {
        c::<T>(1e-10).max(T::EPS * c(64.0)) * (T::one() + self.delta0)
    }

    pub fn phi(&self, q: &DVector<T>) -> T {
        let half: T = c(0.5);
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                half * ((q - center).norm_squared() - *radius * *radius)
            }
            DomainKind::Ellipsoid { semi_axes } => {
                half * (q
                    .iter()
                    .zip(semi_axes.iter())
                    .fold(T::zero(), |s, (x, a)| s + (*x * *x) / (*a * *a))
                    - T::one())
            }
            DomainKind::Peanut { focal, a } => {
                let r2 = q.norm_squared();
                let x2 = q[0] * q[0];
                let c2 = *focal * *focal;
                let a2 = *a * *a;
                (r2 * r2 - c::<T>(2.0) * c2 * (x2 - (r2 - x2)) - (a2 * a2 - c2 * c2))
                    / (c::<T>(4.0) * a2)
            }
            DomainKind::Analytic(f) => f.phi(q),
        }
    }

    pub fn grad_phi(&self, q: &DVector<T>) -> DVector<T> {
        match &self.kind {
            DomainKind::Ball { center, .. } => q - center,
            DomainKind::Ellipsoid { semi_axes } => q.zip_map(semi_axes, |x, a| x / (a * a)),
            DomainKind::Peanut { focal, a } => {
                let r2 = q.norm_squared();
                let c2 = *focal * *focal;
                let a2 = *a * *a;
                let four: T = c(4.0);
                let mut g = q * (four * r2 + four * c2);
                g[0] = q[0] * (four * r2 - four * c2);
                g / (four * a2)
            }
            DomainKind::Analytic(f) => f.grad(q),
        }
    }

    pub fn hess_phi(&self, q: &DVector<T>) -> DMatrix<T> {
        let n = self.dimension;
        match &self.kind {
            DomainKind::Ball { .. } => DMatrix::identity(n, n),
            DomainKind::Ellipsoid { semi_axes } => {
                DMatrix::from_diagonal(&semi_axes.map(|a| T::one() / (a * a)))
            }
            DomainKind::Peanut { focal, a } => {
                let r2 = q.norm_squared();
                let c2 = *focal * *focal;
                let a2 = *a * *a;
                let four: T = c(4.0);
                let eight: T = c(8.0);
                let mut h = (q * q.transpose()) * eight;
                for i in 0..n {
                    let sign_c2 = if i == 0 { -c2 } else { c2 };
                    h[(i, i)] += four * r2 + four * sign_c2;
                }
                h / (four * a2)
            }
            DomainKind::Analytic(f) => f.hess(q),
        }
    }

    pub fn star_center(&self) -> Option<DVector<T>> {
        match &self.kind {
            DomainKind::Ball { center, .. } => Some(center.clone()),
            DomainKind::Ellipsoid { .. } | DomainKind::Peanut { .. } => {
                Some(DVector::zeros(self.dimension))
            }
            DomainKind::Analytic(f) => f.star_center(),
        }
    }

    /// Newton retraction onto `phi = 0` along `grad phi`.
    pub fn boundary_project(&self, q: &DVector<T>) -> Result<DVector<T>> {
        let phi = self.phi(q);
        if phi.abs() > self.delta0 {
            return Err(Error::OutsideStrip {
                phi: phi.to_f64_lossy(),
                delta0: self.delta0.to_f64_lossy(),
            });
        }
        let tol = self.tol_phi();
        let mut x = q.clone();
        let mut phi = phi;
        for _ in 0..PROJECTION_MAX_ITERS {
            if phi.abs() <= tol {
                // one polishing step when it helps
                let g = self.grad_phi(&x);
                let y = &x - &g * (phi / g.norm_squared());
                let py = self.phi(&y);
                return Ok(if py.abs() < phi.abs() { y } else { x });
            }
            let g = self.grad_phi(&x);
            let g2 = g.norm_squared();
            if !(g2 > T::zero()) {
                return Err(Error::DegenerateBoundary(to_f64_vec(&x)));
            }
            x -= &g * (phi / g2);
            phi = self.phi(&x);
        }
        if phi.abs() <= tol {
            return Ok(x);
        }
        Err(Error::ProjectionFailure {
            iterations: PROJECTION_MAX_ITERS,
            phi: phi.to_f64_lossy(),
        })
    }

    /// Unit outward normal `grad phi / |grad phi|`.
    pub fn unit_normal(&self, q: &DVector<T>) -> Result<DVector<T>> {
        let g = self.grad_phi(q);
        let norm = g.norm();
        if !(norm > T::zero()) {
            return Err(Error::DegenerateBoundary(to_f64_vec(q)));
        }
        Ok(g / norm)
    }

    /// Removes the normal component of `w` at the boundary point `q`.
    pub fn tangent_project(&self, q: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        let phi = self.phi(q);
        if phi.abs() > self.tol_phi() {
            return Err(invalid(format!(
                "tangent_project at off-boundary point (phi = {phi})"
            )));
        }
        let n = self.unit_normal(q)?;
        Ok(w - &n * n.dot(w))
    }

    /// Orthonormal basis of the boundary tangent space at `q` (columns).
    pub fn tangent_basis(&self, q: &DVector<T>) -> Result<DMatrix<T>> {
        let n = self.unit_normal(q)?;
        let dim = self.dimension;
        // Gram-Schmidt of the coordinate axes against n
        let mut basis: Vec<DVector<T>> = Vec::with_capacity(dim - 1);
        let mut axes: Vec<usize> = (0..dim).collect();
        axes.sort_by(|&i, &j| {
            n[i].abs()
                .partial_cmp(&n[j].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for &i in &axes {
            if basis.len() == dim - 1 {
                break;
            }
            let mut e = DVector::zeros(dim);
            e[i] = T::one();
            e -= &n * n[i];
            for b in &basis {
                let proj = b.dot(&e);
                e -= b * proj;
            }
            let norm = e.norm();
            if norm > c(1e-8) {
                basis.push(e / norm);
            }
        }
        Ok(DMatrix::from_columns(&basis))
    }

    /// Point on the level set `phi = level` along the ray from the star
    /// centre in direction `dir`.
    pub fn radial_level_point(&self, dir: &DVector<T>, level: T) -> Result<DVector<T>> {
        let center = self
            .star_center()
            .ok_or_else(|| Error::UnsupportedDomain("domain has no star-shape centre".into()))?;
        let norm = dir.norm();
        if !(norm > T::zero()) {
            return Err(invalid("zero direction"));
        }
        let u = dir / norm;
        let at = |r: T| &center + &u * r;
        if !(self.phi(&center) < level) {
            return Err(Error::UnsupportedDomain(format!(
                "level {level} does not enclose the star centre"
            )));
        }
        let mut hi = T::one();
        let mut guard = 0;
        while self.phi(&at(hi)) <= level {
            hi *= c(2.0);
            guard += 1;
            if guard > 60 {
                return Err(Error::UnsupportedDomain("level set is unbounded".into()));
            }
        }
        let mut lo = T::zero();
        for _ in 0..200 {
            let mid = (lo + hi) * c(0.5);
            if mid == lo || mid == hi {
                break;
            }
            if self.phi(&at(mid)) <= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p = at((lo + hi) * c(0.5));
        if level == T::zero() {
            // bisection leaves |phi| ~ eps * |grad phi| * r; polish with Newton
            return self.boundary_project(&p);
        }
        Ok(p)
    }

    /// Directions for boundary/strip sampling: a uniform angle grid in 2-D,
    /// seeded random unit vectors otherwise.
    pub fn sample_directions(&self, count: usize, seed: u64) -> Vec<DVector<T>> {
        if self.dimension == 2 {
            return (0..count)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / count as f64;
                    DVector::from_vec(vec![c(t.cos()), c(t.sin())])
                })
                .collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| random_unit(&mut rng, self.dimension))
            .collect()
    }

    /// Sampler of `(q, v)` with `q` in the strip and `v` a random unit vector.
    pub fn strip_sampler(&self, seed: u64) -> impl FnMut() -> (DVector<T>, DVector<T>) + '_ {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.dimension;
        move || {
            let dir = random_unit::<T>(&mut rng, dim);
            let level: f64 = rng.gen_range(-1.0..=1.0);
            let q = self
                .radial_level_point(&dir, self.delta0 * c(level))
                .or_else(|_| self.radial_level_point(&dir, T::zero()))
                .unwrap_or_else(|_| DVector::zeros(dim));
            (q, random_unit(&mut rng, dim))
        }
    }

    /// Estimates `K0` and `delta_m = delta0^2 / (2 ell K0^2)` from `samples`
    /// strip points laid out on a (direction x level) grid that includes both
    /// strip edges.
    pub fn domain_constants(
        &self,
        bounds: &BoundsEstimate<T>,
        samples: usize,
        seed: u64,
    ) -> Result<DomainConstants<T>> {
        check_delta0(self.delta0)?;
        if !(bounds.ell > T::zero()) {
            return Err(invalid("bounds.ell must be positive"));
        }
        let levels = 21usize;
        let dirs = (samples / levels).max(8);
        let mut k0 = T::zero();
        let floor = c::<T>(1e-12);
        for dir in self.sample_directions(dirs, seed) {
            for j in 0..levels {
                let t = c::<T>(-1.0 + 2.0 * j as f64 / (levels - 1) as f64) * self.delta0;
                let q = self.radial_level_point(&dir, t)?;
                let g = self.grad_phi(&q).norm();
                if g < floor {
                    return Err(Error::DegenerateBoundary(to_f64_vec(&q)));
                }
                k0 = k0.max(g);
            }
        }
        Ok(DomainConstants {
            k0,
            delta_m: self.delta0 * self.delta0 / (c::<T>(2.0) * bounds.ell * k0 * k0),
            ell: bounds.ell,
        })
    }
}

/// Second derivative of `phi` along the geodesic through `(q, v)`:
/// `v . Hess phi . v + grad phi . spray(q, v)`.
pub fn finsler_hessian<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    q: &DVector<T>,
    v: &DVector<T>,
) -> Result<T> {
    let spray = metric.spray(q, v)?;
    let h = domain.hess_phi(q);
    Ok((&h * v).dot(v) + domain.grad_phi(q).dot(&spray))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityScan<T: Real> {
    pub min_h: T,
    pub location: DVector<T>,
    pub direction: DVector<T>,
}

/// Minimum of the Finsler Hessian of `phi` over sampled boundary points and
/// unit tangent directions (both orientations). Positive means the sampled
/// boundary is strictly convex.
pub fn convexity_scan<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    samples: usize,
    seed: u64,
) -> Result<ConvexityScan<T>> {
    if samples == 0 {
        return Err(invalid("convexity_scan needs samples >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut best: Option<ConvexityScan<T>> = None;
    for dir in domain.sample_directions(samples, seed) {
        let q = domain.radial_level_point(&dir, T::zero())?;
        let basis = domain.tangent_basis(&q)?;
        let t = if basis.ncols() == 1 {
            basis.column(0).into_owned()
        } else {
            let w = random_unit::<T>(&mut rng, basis.ncols());
            let t = &basis * w;
            let norm = t.norm();
            t / norm
        };
        for v in [t.clone(), -t] {
            let h = finsler_hessian(metric, domain, &q, &v)?;
            if best.as_ref().is_none_or(|b| h < b.min_h) {
                best = Some(ConvexityScan {
                    min_h: h,
                    location: q.clone(),
                    direction: v,
                });
            }
        }
    }
    Ok(best.expect("samples >= 1"))
}

pub(crate) fn random_unit<T: Real>(rng: &mut impl Rng, dim: usize) -> DVector<T> {
    loop {
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return (v / n).map(c);
        }
    }
}

pub(crate) fn to_f64_vec<T: Real>(x: &DVector<T>) -> Vec<f64> {
    x.iter().map(|v| v.to_f64_lossy()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn project_inside_point_to_unit_circle() {
        let d = ImplicitDomain::unit_ball(2, 0.45).unwrap();
        let p = d.boundary_project(&v2(0.5, 0.0)).unwrap();
        assert!(d.phi(&p).abs() <= 1e-10);
        assert_relative_eq!(p, v2(1.0, 0.0), epsilon = 1e-10);
        // radial direction is a fixed line of the Newton flow
        let q = v2(0.3, 0.4);
        let p = d.boundary_project(&q).unwrap();
        assert_relative_eq!(p, &q / q.norm(), epsilon = 1e-10);
    }

    #[test]
    fn project_fixed_point_and_strip_guard() {
        let d = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let on = v2(0.6, 0.8);
        assert_relative_eq!(d.boundary_project(&on).unwrap(), on, epsilon = 1e-15);
        // phi = 1.5 delta0
        let r = (1.0 + 2.0 * 1.5 * 0.25f64).sqrt();
        assert!(matches!(
            d.boundary_project(&v2(r, 0.0)),
            Err(Error::OutsideStrip { .. })
        ));
    }

    #[test]
    fn tangent_projection_examples() {
        let d = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        assert_relative_eq!(
            d.tangent_project(&v2(1.0, 0.0), &v2(1.0, 1.0)).unwrap(),
            v2(0.0, 1.0)
        );
        assert_relative_eq!(
            d.tangent_project(&v2(0.0, 1.0), &v2(0.0, -3.0)).unwrap(),
            v2(0.0, 0.0)
        );
        assert_relative_eq!(
            d.tangent_project(&v2(1.0, 0.0), &v2(0.0, 2.0)).unwrap(),
            v2(0.0, 2.0)
        );
        assert!(d.tangent_project(&v2(0.5, 0.0), &v2(0.0, 2.0)).is_err());
    }

    #[test]
    fn finsler_hessian_examples() {
        let e = MetricSpec::<f64>::euclidean(2);
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        assert_relative_eq!(
            finsler_hessian(&e, &ball, &v2(1.0, 0.0), &v2(0.0, 1.0)).unwrap(),
            1.0
        );
        let ell = ImplicitDomain::ellipse(2.0, 1.0, 0.25).unwrap();
        assert_relative_eq!(
            finsler_hessian(&e, &ell, &v2(2.0, 0.0), &v2(0.0, 1.0)).unwrap(),
            1.0
        );
        let r = MetricSpec::randers_euclidean(v2(1.0 / 3.0, 0.0)).unwrap();
        assert_relative_eq!(
            finsler_hessian(&r, &ball, &v2(1.0, 0.0), &v2(0.0, 1.0)).unwrap(),
            1.0
        );
    }

    #[test]
    fn unit_ball_constants() {
        let e = MetricSpec::<f64>::euclidean(2);
        let d = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let bounds = BoundsEstimate {
            ell: 1.0,
            alpha: 2.0,
            sample_count: 1,
        };
        let k = d.domain_constants(&bounds, 2000, 42).unwrap();
        assert_relative_eq!(k.k0, 1.5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(k.delta_m, 0.0625 / 3.0, epsilon = 1e-12);
        let doubled = BoundsEstimate { ell: 2.0, ..bounds };
        let k2 = d.domain_constants(&doubled, 2000, 42).unwrap();
        assert_relative_eq!(k2.delta_m, k.delta_m / 2.0, epsilon = 1e-14);
        assert!(ImplicitDomain::unit_ball(2, 0.0).is_err());
        let _ = e;
    }

    #[test]
    fn convexity_of_builtins() {
        let e = MetricSpec::<f64>::euclidean(2);
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let s = convexity_scan(&e, &ball, 1000, 1).unwrap();
        assert_relative_eq!(s.min_h, 1.0, epsilon = 1e-6);

        let ell = ImplicitDomain::ellipse(2.0, 1.0, 0.25).unwrap();
        let s = convexity_scan(&e, &ell, 1024, 1).unwrap();
        assert_relative_eq!(s.min_h, 0.25, epsilon = 1e-9);
        // minimum sits at the minor-axis vertex, tangent along q^1
        assert_relative_eq!(s.location[0], 0.0, epsilon = 1e-9);

        let peanut = ImplicitDomain::peanut(2, 1.0, 1.2, 0.1).unwrap();
        let s = convexity_scan(&e, &peanut, 720, 1).unwrap();
        assert!(s.min_h < 0.0);
        // independent sign check: second difference of phi along the tangent line
        let h = 1e-3;
        let q = &s.location;
        let t = &s.direction;
        let d2 =
            (peanut.phi(&(q + t * h)) - 2.0 * peanut.phi(q) + peanut.phi(&(q - t * h))) / (h * h);
        assert!(d2 < 0.0);
        assert_relative_eq!(d2, s.min_h, epsilon = 1e-5);
    }

    #[test]
    fn peanut_gradient_and_hessian_match_differences() {
        let d = ImplicitDomain::peanut(3, 1.0, 1.2, 0.1).unwrap();
        let q = DVector::from_vec(vec![0.4, 0.5, -0.2]);
        let h = 1e-6;
        for k in 0..3 {
            let mut e = DVector::zeros(3);
            e[k] = h;
            let fd = (d.phi(&(&q + &e)) - d.phi(&(&q - &e))) / (2.0 * h);
            assert_relative_eq!(d.grad_phi(&q)[k], fd, epsilon = 1e-8);
            let fdg = (d.grad_phi(&(&q + &e)) - d.grad_phi(&(&q - &e))) / (2.0 * h);
            assert_relative_eq!(d.hess_phi(&q).column(k).into_owned(), fdg, epsilon = 1e-6);
        }
    }

    #[test]
    fn radial_points_lie_on_level_sets() {
        let d = ImplicitDomain::<f64>::peanut(2, 1.0, 1.2, 0.1).unwrap();
        for dir in d.sample_directions(12, 0) {
            let p = d.radial_level_point(&dir, 0.0).unwrap();
            assert!(d.phi(&p).abs() <= d.tol_phi());
            let p = d.radial_level_point(&dir, 0.05).unwrap();
            assert_relative_eq!(d.phi(&p), 0.05, epsilon = 1e-12);
        }
    }
}
