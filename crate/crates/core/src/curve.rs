//! Uniformly sampled curves on `[0, 1]` and the discrete energy functional.
//!
//! The energy is `J = 1/2 sum_k (1/n) G(m_k, n dq_k)` with midpoints
//! `m_k = (q_k + q_{k+1}) / 2` and forward differences `dq_k = q_{k+1} - q_k`,
//! which keeps every metric evaluation off the zero section for curves
//! without repeated nodes.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::domain::ImplicitDomain;
use crate::error::{invalid, Error, Result};
use crate::metric::MetricSpec;
use crate::scalar::{c, Real};

/// Smallest admissible segment count.
pub const MIN_SEGMENTS: usize = 8;
pub const DEFAULT_SEGMENTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve<T: Real> {
    nodes: Vec<DVector<T>>,
}

impl<T: Real> DiscreteCurve<T> {
    pub fn new(nodes: Vec<DVector<T>>) -> Result<Self> {
        if nodes.len() < MIN_SEGMENTS + 1 {
            return Err(invalid(format!(
                "a curve needs at least {} nodes, got {}",
                MIN_SEGMENTS + 1,
                nodes.len()
            )));
        }
        let dim = nodes[0].len();
        if dim == 0 || nodes.iter().any(|q| q.len() != dim) {
            return Err(invalid("curve nodes must share one positive dimension"));
        }
        if !nodes.iter().all(|q| q.iter().all(|x| x.is_finite())) {
            return Err(invalid("non-finite curve node"));
        }
        Ok(Self { nodes })
    }

    /// Straight segment from `a` to `b` with uniform spacing.
    pub fn straight(a: &DVector<T>, b: &DVector<T>, n: usize) -> Result<Self> {
        let nodes = (0..=n)
            .map(|k| {
                let s = T::from_usize_lossy(k) / T::from_usize_lossy(n);
                a * (T::one() - s) + b * s
            })
            .collect();
        Self::new(nodes)
    }

    pub fn constant(a: &DVector<T>, n: usize) -> Result<Self> {
        Self::new(vec![a.clone(); n + 1])
    }

    /// Segment count `n`.
    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dimension(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn nodes(&self) -> &[DVector<T>] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<DVector<T>> {
        self.nodes
    }

    pub fn start(&self) -> &DVector<T> {
        &self.nodes[0]
    }

    pub fn end(&self) -> &DVector<T> {
        &self.nodes[self.nodes.len() - 1]
    }

    pub fn is_constant(&self) -> bool {
        self.nodes.iter().all(|q| q == &self.nodes[0])
    }

    /// Discrete velocity `n (q_{k+1} - q_k)` of segment `k`.
    pub fn segment_velocity(&self, k: usize) -> DVector<T> {
        (&self.nodes[k + 1] - &self.nodes[k]) * T::from_usize_lossy(self.segments())
    }

    pub fn midpoint(&self, k: usize) -> DVector<T> {
        (&self.nodes[k + 1] + &self.nodes[k]) * c::<T>(0.5)
    }

    /// Central velocity at an interior node, one-sided at the ends.
    pub fn node_velocity(&self, k: usize) -> DVector<T> {
        let n = self.segments();
        if k == 0 {
            self.segment_velocity(0)
        } else if k == n {
            self.segment_velocity(n - 1)
        } else {
            (&self.nodes[k + 1] - &self.nodes[k - 1]) * (T::from_usize_lossy(n) * c(0.5))
        }
    }

    /// Backward parametrization `s -> 1 - s`.
    pub fn reverse(&self) -> Self {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        Self { nodes }
    }

    pub fn with_nodes(&self, nodes: Vec<DVector<T>>) -> Result<Self> {
        if nodes.len() != self.nodes.len() {
            return Err(invalid("node count changed"));
        }
        Self::new(nodes)
    }

    /// CSV rows `s,q1,...,qN` at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.segments();
        let mut out = String::from("s");
        for i in 0..self.dimension() {
            let _ = write!(out, ",q{}", i + 1);
        }
        out.push('\n');
        for (k, q) in self.nodes.iter().enumerate() {
            let _ = write!(out, "{:.16e}", k as f64 / n as f64);
            for x in q.iter() {
                let _ = write!(out, ",{:.16e}", x.to_f64_lossy());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| invalid("empty curve CSV"))?;
        let cols = header.split(',').count();
        if cols < 2 || header.split(',').next().map(str::trim) != Some("s") {
            return Err(invalid("curve CSV header must be s,q1,...,qN"));
        }
        let mut nodes = Vec::new();
        for line in lines {
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| invalid(format!("bad CSV value: {e}")))?;
            if vals.len() != cols {
                return Err(invalid("ragged curve CSV"));
            }
            nodes.push(DVector::from_iterator(
                cols - 1,
                vals[1..].iter().map(|x| c(*x)),
            ));
        }
        Self::new(nodes)
    }
}

fn check_segments<T: Real>(curve: &DiscreteCurve<T>) -> Result<()> {
    for k in 0..curve.segments() {
        if curve.nodes[k + 1] == curve.nodes[k] {
            return Err(Error::DegenerateCurve(format!(
                "zero segment {k} in a non-constant curve"
            )));
        }
    }
    Ok(())
}

/// Discrete energy `J`. Constant curves have energy 0.
pub fn energy<T: Real>(metric: &MetricSpec<T>, curve: &DiscreteCurve<T>) -> Result<T> {
    if curve.is_constant() {
        return Ok(T::zero());
    }
    check_segments(curve)?;
    let n = T::from_usize_lossy(curve.segments());
    let mut sum = T::zero();
    for k in 0..curve.segments() {
        sum += metric.eval_g(&curve.midpoint(k), &curve.segment_velocity(k))?;
    }
    Ok(sum / (n + n))
}

/// Exact node-wise gradient of [`energy`], endpoints included.
pub fn energy_gradient<T: Real>(
    metric: &MetricSpec<T>,
    curve: &DiscreteCurve<T>,
) -> Result<Vec<DVector<T>>> {
    let dim = curve.dimension();
    let mut grad = vec![DVector::zeros(dim); curve.nodes.len()];
    if curve.is_constant() {
        return Ok(grad);
    }
    check_segments(curve)?;
    let n = T::from_usize_lossy(curve.segments());
    let quarter_over_n = T::one() / (c::<T>(4.0) * n);
    let half: T = c(0.5);
    for k in 0..curve.segments() {
        let jet = metric.first_jet(&curve.midpoint(k), &curve.segment_velocity(k))?;
        let dq = &jet.dq * quarter_over_n;
        let dv = &jet.dv * half;
        grad[k] += &dq - &dv;
        grad[k + 1] += dq + dv;
    }
    Ok(grad)
}

/// `max(|xi_0|, |xi_n|) + (integral |xi'|^2)^(1/2)` with forward differences.
pub fn star_norm<T: Real>(variation: &[DVector<T>]) -> Result<T> {
    if variation.len() < 2 {
        return Err(invalid("variation needs at least two grid values"));
    }
    let dim = variation[0].len();
    if variation.iter().any(|x| x.len() != dim) {
        return Err(invalid("variation has mixed dimensions"));
    }
    let n = variation.len() - 1;
    let ends = variation[0].norm().max(variation[n].norm());
    let sq = variation
        .windows(2)
        .fold(T::zero(), |s, w| s + (&w[1] - &w[0]).norm_squared());
    Ok(ends + (sq * T::from_usize_lossy(n)).sqrt())
}

/// Distance induced by the star norm, with matching endpoints.
pub fn star_dist<T: Real>(a: &DiscreteCurve<T>, b: &DiscreteCurve<T>) -> Result<T> {
    if a.nodes.len() != b.nodes.len() || a.dimension() != b.dimension() {
        return Err(invalid("star_dist needs curves on the same grid"));
    }
    let diff: Vec<DVector<T>> = a.nodes.iter().zip(&b.nodes).map(|(x, y)| x - y).collect();
    star_norm(&diff)
}

/// Radial homeomorphism of a star-shaped domain onto the unit ball.
struct RadialChart<'a, T: Real> {
    domain: &'a ImplicitDomain<T>,
    center: DVector<T>,
}

impl<'a, T: Real> RadialChart<'a, T> {
    fn new(domain: &'a ImplicitDomain<T>) -> Result<Self> {
        let center = domain.star_center().ok_or_else(|| {
            Error::UnsupportedDomain("chord seeds need a radially star-shaped domain".into())
        })?;
        Ok(Self { domain, center })
    }

    fn radius(&self, dir: &DVector<T>) -> Result<T> {
        let p = self.domain.radial_level_point(dir, T::zero())?;
        Ok((p - &self.center).norm())
    }

    fn forward(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let d = x - &self.center;
        let r = d.norm();
        if r == T::zero() {
            return Ok(d);
        }
        Ok(&d / self.radius(&d)?)
    }

    fn inverse(&self, y: &DVector<T>) -> Result<DVector<T>> {
        let r = y.norm();
        if r <= c::<T>(1e-300).max(T::EPS * T::EPS) {
            return Ok(self.center.clone());
        }
        Ok(&self.center + y * self.radius(y)?)
    }
}

/// Member `gamma(A, B)` of the boundary-pair chord family.
pub fn chord_seed<T: Real>(
    domain: &ImplicitDomain<T>,
    a: &DVector<T>,
    b: &DVector<T>,
    n: usize,
) -> Result<DiscreteCurve<T>> {
    if n < MIN_SEGMENTS {
        return Err(invalid(format!("chord seeds need n >= {MIN_SEGMENTS}")));
    }
    for p in [a, b] {
        if p.len() != domain.dimension() {
            return Err(invalid("endpoint dimension mismatch"));
        }
        let phi = domain.phi(p);
        if phi.abs() > domain.tol_phi() {
            return Err(invalid(format!(
                "chord endpoint off the boundary (phi = {phi})"
            )));
        }
    }
    if a == b {
        return DiscreteCurve::constant(a, n);
    }
    let chart = RadialChart::new(domain)?;
    let ya = chart.forward(a)?;
    let yb = chart.forward(b)?;
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(a.clone());
    for k in 1..n {
        let s = T::from_usize_lossy(k) / T::from_usize_lossy(n);
        nodes.push(chart.inverse(&(&ya * (T::one() - s) + &yb * s))?);
    }
    nodes.push(b.clone());
    DiscreteCurve::new(nodes)
}

/// Boundary points used by family sweeps and multistart grids.
pub fn boundary_grid<T: Real>(
    domain: &ImplicitDomain<T>,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<T>>> {
    domain
        .sample_directions(count, seed)
        .iter()
        .map(|d| domain.radial_level_point(d, T::zero()))
        .collect()
}

/// Energies of `gamma(A_i, A_j)` over all ordered grid pairs, row-major.
pub fn family_energies<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    boundary: &[DVector<T>],
    n: usize,
) -> Result<Vec<Vec<T>>> {
    use rayon::prelude::*;
    boundary
        .par_iter()
        .map(|a| {
            boundary
                .iter()
                .map(|b| energy(metric, &chord_seed(domain, a, b, n)?))
                .collect::<Result<Vec<T>>>()
        })
        .collect()
}

/// Empirical maximum of `J` over the chord family on a boundary grid.
pub fn family_max_energy<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    boundary_grid_size: usize,
    n: usize,
) -> Result<T> {
    if boundary_grid_size == 0 {
        return Err(invalid("boundary grid must be non-empty"));
    }
    let pts = boundary_grid(domain, boundary_grid_size, 0)?;
    let table = family_energies(metric, domain, &pts, n)?;
    Ok(table
        .iter()
        .flatten()
        .copied()
        .fold(T::zero(), |m, x| m.max(x)))
}

fn segment_lengths<T: Real>(metric: &MetricSpec<T>, curve: &DiscreteCurve<T>) -> Result<Vec<T>> {
    (0..curve.segments())
        .map(|k| metric.eval_f(&curve.midpoint(k), &(&curve.nodes[k + 1] - &curve.nodes[k])))
        .collect()
}

/// Max relative deviation of the segment F-lengths from their mean.
pub fn speed_variation<T: Real>(metric: &MetricSpec<T>, curve: &DiscreteCurve<T>) -> Result<T> {
    let lens = segment_lengths(metric, curve)?;
    let mean = lens.iter().fold(T::zero(), |s, x| s + *x) / T::from_usize_lossy(lens.len());
    if !(mean > T::zero()) {
        return Err(Error::DegenerateCurve("zero length".into()));
    }
    Ok(lens.iter().fold(T::zero(), |m, x| m.max((*x - mean).abs())) / mean)
}

/// Resamples the polyline so that consecutive nodes are equally spaced in
/// the metric `F`. Endpoints are kept.
pub fn reparametrize_const_speed<T: Real>(
    metric: &MetricSpec<T>,
    curve: &DiscreteCurve<T>,
) -> Result<DiscreteCurve<T>> {
    if curve.is_constant() {
        return Err(Error::DegenerateCurve(
            "cannot reparametrize a constant curve".into(),
        ));
    }
    check_segments(curve)?;
    let tol: T = c(1e-12);
    if speed_variation(metric, curve)? <= tol {
        return Ok(curve.clone());
    }
    let n = curve.segments();
    let mut cur = curve.clone();
    for _ in 0..8 {
        let lens = segment_lengths(metric, &cur)?;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(T::zero());
        for l in &lens {
            let last = *cum.last().expect("non-empty");
            cum.push(last + *l);
        }
        let total = cum[n];
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push(cur.nodes[0].clone());
        let mut seg = 0;
        for k in 1..n {
            let target = total * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            while seg + 1 < n && cum[seg + 1] < target {
                seg += 1;
            }
            let t = ((target - cum[seg]) / lens[seg])
                .max(T::zero())
                .min(T::one());
            nodes.push(&cur.nodes[seg] * (T::one() - t) + &cur.nodes[seg + 1] * t);
        }
        nodes.push(cur.nodes[n].clone());
        cur = DiscreteCurve::new(nodes)?;
        check_segments(&cur)?;
        if speed_variation(metric, &cur)? <= c(1e-9) {
            break;
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn randers() -> MetricSpec<f64> {
        MetricSpec::randers_euclidean(v2(1.0 / 3.0, 0.0)).unwrap()
    }

    #[test]
    fn straight_chord_energies() {
        let e = MetricSpec::euclidean(2);
        for n in [8, 16, 64] {
            let c = DiscreteCurve::straight(&v2(-1.0, 0.0), &v2(1.0, 0.0), n).unwrap();
            assert_relative_eq!(energy(&e, &c).unwrap(), 2.0, epsilon = 1e-13);
        }
        let c = DiscreteCurve::straight(&v2(-0.5, 0.0), &v2(0.5, 0.0), 16).unwrap();
        assert_relative_eq!(energy(&e, &c).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn randers_energy_ratio_and_reverse() {
        let r = randers();
        let c = DiscreteCurve::straight(&v2(-0.5, 0.0), &v2(0.5, 0.0), 32).unwrap();
        let fwd = energy(&r, &c).unwrap();
        let bwd = energy(&r, &c.reverse()).unwrap();
        assert_relative_eq!(fwd / bwd, 4.0, epsilon = 1e-12);
        assert_relative_eq!(fwd, 0.5 * (4.0f64 / 3.0).powi(2), epsilon = 1e-13);
        assert_relative_eq!(bwd / fwd, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn zero_segment_rejected() {
        let mut nodes: Vec<_> = (0..=8).map(|k| v2(k as f64, 0.0)).collect();
        nodes[4] = nodes[3].clone();
        let c = DiscreteCurve::new(nodes).unwrap();
        assert!(matches!(
            energy(&MetricSpec::euclidean(2), &c),
            Err(Error::DegenerateCurve(_))
        ));
    }

    #[test]
    fn gradient_of_straight_chord_and_constant() {
        let e = MetricSpec::euclidean(2);
        let c = DiscreteCurve::straight(&v2(-1.0, 0.2), &v2(1.0, 0.5), 16).unwrap();
        let g = energy_gradient(&e, &c).unwrap();
        for gk in &g[1..16] {
            assert!(gk.norm() < 1e-12);
        }
        let k = DiscreteCurve::constant(&v2(0.3, 0.3), 10).unwrap();
        assert_eq!(energy(&e, &k).unwrap(), 0.0);
        assert!(energy_gradient(&e, &k)
            .unwrap()
            .iter()
            .all(|x| x.norm() == 0.0));
    }

    #[test]
    fn perturbed_node_gradient_matches_differences() {
        let e = MetricSpec::euclidean(2);
        let c = DiscreteCurve::straight(&v2(-1.0, 0.0), &v2(1.0, 0.0), 16).unwrap();
        let mut nodes = c.nodes().to_vec();
        nodes[7][1] += 0.05;
        let c = DiscreteCurve::new(nodes).unwrap();
        let g = energy_gradient(&e, &c).unwrap();
        assert!(
            g[7][1] > 0.0,
            "gradient points away from the line, descent goes back"
        );
        let h = 1e-6;
        for i in 0..2 {
            let mut up = c.nodes().to_vec();
            let mut dn = c.nodes().to_vec();
            up[7][i] += h;
            dn[7][i] -= h;
            let fd = (energy(&e, &DiscreteCurve::new(up).unwrap()).unwrap()
                - energy(&e, &DiscreteCurve::new(dn).unwrap()).unwrap())
                / (2.0 * h);
            assert_relative_eq!(g[7][i], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn star_norm_examples() {
        let zero = vec![v2(0.0, 0.0); 11];
        assert_eq!(star_norm(&zero).unwrap(), 0.0);
        let constant = vec![v2(3.0, 4.0); 11];
        assert_eq!(star_norm(&constant).unwrap(), 5.0);
        let mut bump = vec![v2(0.0, 0.0); 11];
        bump[10] = v2(1.0, 0.0);
        assert_relative_eq!(
            star_norm(&bump).unwrap(),
            1.0 + 10f64.sqrt(),
            epsilon = 1e-14
        );
        assert!(star_norm::<f64>(&[v2(0.0, 0.0)]).is_err());
    }

    #[test]
    fn star_dist_examples() {
        let a = DiscreteCurve::straight(&v2(-1.0, 0.0), &v2(1.0, 0.3), 12).unwrap();
        assert_eq!(star_dist(&a, &a).unwrap(), 0.0);
        let p = DiscreteCurve::constant(&v2(0.0, 0.0), 12).unwrap();
        let q = DiscreteCurve::constant(&v2(3.0, 4.0), 12).unwrap();
        assert_eq!(star_dist(&p, &q).unwrap(), 5.0);
        let t = v2(0.25, -0.5);
        let shifted = DiscreteCurve::new(a.nodes().iter().map(|x| x + &t).collect()).unwrap();
        assert_relative_eq!(star_dist(&a, &shifted).unwrap(), t.norm(), epsilon = 1e-12);
        let short = DiscreteCurve::constant(&v2(0.0, 0.0), 8).unwrap();
        assert!(star_dist(&a, &short).is_err());
    }

    #[test]
    fn reverse_is_an_involution() {
        let c = DiscreteCurve::straight(&v2(-1.0, 0.0), &v2(0.3, 0.9), 9).unwrap();
        assert_eq!(c.reverse().reverse(), c);
        let e = MetricSpec::euclidean(2);
        assert_relative_eq!(
            energy(&e, &c).unwrap(),
            energy(&e, &c.reverse()).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn chord_seeds_in_ball_and_ellipse() {
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let s = chord_seed(&ball, &v2(-1.0, 0.0), &v2(1.0, 0.0), 16).unwrap();
        for (k, q) in s.nodes().iter().enumerate() {
            assert_relative_eq!(q[0], -1.0 + 2.0 * k as f64 / 16.0, epsilon = 1e-12);
            assert_relative_eq!(q[1], 0.0, epsilon = 1e-12);
        }
        let p = chord_seed(&ball, &v2(0.0, 1.0), &v2(0.0, 1.0), 16).unwrap();
        assert!(p.is_constant());
        assert_eq!(energy(&MetricSpec::euclidean(2), &p).unwrap(), 0.0);

        let ell = ImplicitDomain::ellipse(2.0, 1.0, 0.25).unwrap();
        let s = chord_seed(&ell, &v2(2.0, 0.0), &v2(-2.0, 0.0), 16).unwrap();
        for q in &s.nodes()[1..16] {
            assert!(q[1].abs() < 1e-12);
            assert!(ell.phi(q) < 0.0);
        }
        let a = ell.radial_level_point(&v2(1.0, 2.0), 0.0).unwrap();
        let b = ell.radial_level_point(&v2(-1.0, 0.3), 0.0).unwrap();
        let ab = chord_seed(&ell, &a, &b, 16).unwrap();
        let ba = chord_seed(&ell, &b, &a, 16).unwrap();
        assert!(star_dist(&ab.reverse(), &ba).unwrap() < 1e-12);
        assert!(chord_seed(&ell, &v2(0.5, 0.0), &b, 16).is_err());
    }

    #[test]
    fn family_max_over_balls() {
        let e = MetricSpec::euclidean(2);
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let m: f64 = family_max_energy(&e, &ball, 16, 16).unwrap();
        assert!((m - 2.0).abs() <= 0.04);
        let half = ImplicitDomain::ball(DVector::zeros(2), 0.5, 0.1).unwrap();
        let m: f64 = family_max_energy(&e, &half, 16, 16).unwrap();
        assert!((m - 0.5).abs() <= 0.01);
        assert_eq!(family_max_energy(&e, &ball, 1, 16).unwrap(), 0.0);
    }

    #[test]
    fn reparametrization() {
        let e = MetricSpec::euclidean(2);
        let c = DiscreteCurve::straight(&v2(-1.0, 0.0), &v2(1.0, 0.0), 16).unwrap();
        let r = reparametrize_const_speed(&e, &c).unwrap();
        assert!(star_dist(&c, &r).unwrap() < 1e-10);

        let clustered: Vec<_> = (0..=16)
            .map(|k| {
                let s = k as f64 / 16.0;
                v2(-1.0 + 2.0 * s * s, 0.0)
            })
            .collect();
        let cl = DiscreteCurve::new(clustered).unwrap();
        let r = reparametrize_const_speed(&e, &cl).unwrap();
        assert_relative_eq!(energy(&e, &r).unwrap(), 2.0, epsilon = 1e-10);
        assert!(energy(&e, &r).unwrap() <= energy(&e, &cl).unwrap());

        let rd = randers();
        let skew: Vec<_> = (0..=16)
            .map(|k| {
                let s = (k as f64 / 16.0).powf(1.5);
                v2(-0.3 + 0.8 * s, -0.2 + 0.5 * s)
            })
            .collect();
        let r = reparametrize_const_speed(&rd, &DiscreteCurve::new(skew).unwrap()).unwrap();
        assert!(speed_variation(&rd, &r).unwrap() < 1e-3);
        assert!(
            reparametrize_const_speed(&e, &DiscreteCurve::constant(&v2(0.0, 0.0), 8).unwrap())
                .is_err()
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = DiscreteCurve::straight(&v2(-1.0 / 3.0, 0.1), &v2(std::f64::consts::PI, 0.7), 9)
            .unwrap();
        let back = DiscreteCurve::<f64>::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back, c);
    }
}
