//! Penalized fixed-endpoint energy and its `delta -> 0` continuation.
//!
//! The hard constraint `phi <= 0` is replaced by the barrier
//! `chi_delta(t) = t^2 / (delta - t)^2` on `[0, delta)`, zero for `t <= 0`.
//! Minimizers of the penalized energy converge to constrained geodesics
//! as `delta` decreases, and `-chi_delta'(phi)` along them recovers the
//! boundary multiplier.

mod shoot;

pub use shoot::{shoot_geodesic, BoundaryEvent, EventKind, ShootOptions, Trajectory};

use nalgebra::DVector;
use serde::Serialize;

use crate::curve::{energy, energy_gradient, DiscreteCurve};
use crate::domain::ImplicitDomain;
use crate::error::{invalid, Error, Result};
use crate::metric::MetricSpec;
use crate::optimize::{self, LineSearch, StopReason};
use crate::scalar::{c, Real};

/// Barrier `chi_delta(t)`. Fails with [`Error::PenaltyBlowup`] for `t >= delta`.
pub fn chi<T: Real>(delta: T, t: T) -> Result<T> {
    if !(t < delta) {
        return Err(blowup(delta, t));
    }
    if t <= T::zero() {
        return Ok(T::zero());
    }
    let r = t / (delta - t);
    Ok(r * r)
}

/// `chi_delta'(t) = 2 t delta / (delta - t)^3`.
pub fn chi_prime<T: Real>(delta: T, t: T) -> Result<T> {
    if !(t < delta) {
        return Err(blowup(delta, t));
    }
    if t <= T::zero() {
        return Ok(T::zero());
    }
    let d = delta - t;
    Ok(c::<T>(2.0) * t * delta / (d * d * d))
}

fn blowup<T: Real>(delta: T, t: T) -> Error {
    Error::PenaltyBlowup {
        t: t.to_f64_lossy(),
        delta: delta.to_f64_lossy(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyParams<T: Real> {
    /// Strictly decreasing values in `(0, delta0)`.
    pub delta_schedule: Vec<T>,
    pub grad_tol: T,
    pub max_iters: usize,
    pub line_search: LineSearch,
    pub memory: usize,
}

impl<T: Real> PenaltyParams<T> {
    /// `delta0 * {1/4, 1/8, 1/16, 1/32, 1/64}` and `grad_tol = 1e-8 n`.
    pub fn default_for(delta0: T, n: usize) -> Self {
        Self {
            delta_schedule: [4.0, 8.0, 16.0, 32.0, 64.0]
                .iter()
                .map(|d| delta0 / c::<T>(*d))
                .collect(),
            grad_tol: c::<T>(1e-8) * T::from_usize_lossy(n),
            max_iters: 20_000,
            line_search: LineSearch::default(),
            memory: 12,
        }
    }

    pub fn final_delta(&self) -> T {
        *self
            .delta_schedule
            .last()
            .expect("validated schedule is non-empty")
    }

    pub fn validate(&self, delta0: T) -> Result<()> {
        if self.delta_schedule.is_empty() {
            return Err(invalid("empty delta schedule"));
        }
        for w in self.delta_schedule.windows(2) {
            if !(w[1] < w[0]) {
                return Err(invalid("delta schedule must be strictly decreasing"));
            }
        }
        if self
            .delta_schedule
            .iter()
            .any(|d| !(*d > T::zero() && *d < delta0))
        {
            return Err(invalid("delta schedule values must lie in (0, delta0)"));
        }
        if !(self.grad_tol > T::zero()) {
            return Err(invalid("grad_tol must be positive"));
        }
        Ok(())
    }
}

/// One stage of a continuation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub delta: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub energy: f64,
    pub penalty_integral: f64,
    pub max_excursion: f64,
    pub max_abs_lambda: f64,
}

#[derive(Debug, Clone)]
pub struct SolverReport<T: Real> {
    pub final_curve: DiscreteCurve<T>,
    pub delta_used: T,
    pub iterations: usize,
    pub final_grad_norm: T,
    pub converged: bool,
    pub energy: T,
    pub penalty_integral: T,
    pub energy_constant_residual: T,
    /// `lambda(s_k) = -chi_delta'(phi(q_k))`.
    pub lambda_profile: Vec<T>,
    /// `max_k max(0, phi(q_k))`.
    pub max_excursion: T,
    pub stages: Vec<StageSummary>,
    /// Penalized energy after each accepted step of the last stage.
    pub descent_trace: Vec<T>,
}

impl<T: Real> SolverReport<T> {
    /// Whether `max_excursion` never increased along the stages.
    pub fn excursion_monotone(&self) -> bool {
        self.stages
            .windows(2)
            .all(|w| w[1].max_excursion <= w[0].max_excursion)
    }

    /// Largest `|lambda|` over all stages.
    pub fn max_abs_lambda(&self) -> f64 {
        self.stages
            .iter()
            .map(|s| s.max_abs_lambda)
            .fold(0.0, f64::max)
    }
}

/// Trapezoid quadrature of `chi_delta(phi)` over the nodes.
pub fn penalty_integral<T: Real>(
    domain: &ImplicitDomain<T>,
    delta: T,
    curve: &DiscreteCurve<T>,
) -> Result<T> {
    let n = curve.segments();
    let mut sum = T::zero();
    for (k, q) in curve.nodes().iter().enumerate() {
        let w = if k == 0 || k == n {
            c::<T>(0.5)
        } else {
            T::one()
        };
        sum += w * chi(delta, domain.phi(q))?;
    }
    Ok(sum / T::from_usize_lossy(n))
}

/// `J_delta = J + integral chi_delta(phi)`.
pub fn penalized_energy<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    delta: T,
    curve: &DiscreteCurve<T>,
) -> Result<T> {
    let p = penalty_integral(domain, delta, curve)?;
    Ok(energy(metric, curve)? + p)
}

/// Node-wise gradient of [`penalized_energy`].
pub fn penalized_gradient<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    delta: T,
    curve: &DiscreteCurve<T>,
) -> Result<Vec<DVector<T>>> {
    let mut grad = energy_gradient(metric, curve)?;
    let n = curve.segments();
    let inv_n = T::one() / T::from_usize_lossy(n);
    for (k, q) in curve.nodes().iter().enumerate() {
        let w = if k == 0 || k == n {
            inv_n * c(0.5)
        } else {
            inv_n
        };
        let cp = chi_prime(delta, domain.phi(q))?;
        if cp != T::zero() {
            grad[k] += domain.grad_phi(q) * (w * cp);
        }
    }
    Ok(grad)
}

/// Recovered multiplier `-chi_delta'(phi(q_k))`; never positive.
pub fn lambda_recover<T: Real>(
    domain: &ImplicitDomain<T>,
    delta: T,
    curve: &DiscreteCurve<T>,
) -> Result<Vec<T>> {
    curve
        .nodes()
        .iter()
        .map(|q| Ok(-chi_prime(delta, domain.phi(q))?))
        .collect()
}

/// Spread of `e_k = 1/2 G(m_k, v_k) - chi_delta(phi(m_k))` over segments,
/// `(max e - min e) / (1 + mean |e|)`.
pub fn energy_constant_residual<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    delta: T,
    curve: &DiscreteCurve<T>,
) -> Result<T> {
    let half: T = c(0.5);
    let mut lo = T::max_value().unwrap_or_else(|| c(f64::MAX));
    let mut hi = -lo;
    let mut mean = T::zero();
    for k in 0..curve.segments() {
        let v = curve.segment_velocity(k);
        if v.iter().all(|x| *x == T::zero()) {
            return Err(Error::DegenerateCurve(format!("zero segment {k}")));
        }
        let m = curve.midpoint(k);
        let e = half * metric.eval_g(&m, &v)? - chi(delta, domain.phi(&m))?;
        lo = lo.min(e);
        hi = hi.max(e);
        mean += e.abs();
    }
    mean /= T::from_usize_lossy(curve.segments());
    Ok((hi - lo) / (T::one() + mean))
}

fn max_excursion<T: Real>(domain: &ImplicitDomain<T>, curve: &DiscreteCurve<T>) -> T {
    curve
        .nodes()
        .iter()
        .fold(T::zero(), |m, q| m.max(domain.phi(q)))
}

fn pack_interior<T: Real>(curve: &DiscreteCurve<T>) -> DVector<T> {
    let n = curve.segments();
    let dim = curve.dimension();
    DVector::from_iterator(
        (n - 1) * dim,
        curve.nodes()[1..n].iter().flat_map(|q| q.iter().copied()),
    )
}

fn unpack_interior<T: Real>(
    template: &DiscreteCurve<T>,
    x: &DVector<T>,
) -> Result<DiscreteCurve<T>> {
    let n = template.segments();
    let dim = template.dimension();
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(template.start().clone());
    for k in 0..n - 1 {
        nodes.push(x.rows(k * dim, dim).into_owned());
    }
    nodes.push(template.end().clone());
    DiscreteCurve::new(nodes)
}

fn check_seed<T: Real>(
    domain: &ImplicitDomain<T>,
    delta: T,
    seed: &DiscreteCurve<T>,
) -> Result<()> {
    if seed.dimension() != domain.dimension() {
        return Err(invalid("seed dimension does not match the domain"));
    }
    if seed.start() == seed.end() {
        return Err(Error::DegenerateCurve(
            "fixed-endpoint solves need distinct endpoints".into(),
        ));
    }
    for end in [seed.start(), seed.end()] {
        if domain.phi(end).abs() > domain.delta0() {
            return Err(invalid("seed endpoint outside the boundary strip"));
        }
    }
    if let Some((k, q)) = seed
        .nodes()
        .iter()
        .enumerate()
        .find(|(_, q)| !(domain.phi(q) < delta))
    {
        return Err(invalid(format!(
            "seed node {k} has phi = {} >= delta = {delta}",
            domain.phi(q)
        )));
    }
    Ok(())
}

fn summarize<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    delta: T,
    outcome: &optimize::Outcome<T>,
    curve: DiscreteCurve<T>,
    stages: Vec<StageSummary>,
) -> Result<SolverReport<T>> {
    let lambda_profile = lambda_recover(domain, delta, &curve)?;
    let penalty = penalty_integral(domain, delta, &curve)?;
    Ok(SolverReport {
        energy: energy(metric, &curve)?,
        energy_constant_residual: energy_constant_residual(metric, domain, delta, &curve)?,
        max_excursion: max_excursion(domain, &curve),
        final_curve: curve,
        delta_used: delta,
        iterations: outcome.iterations,
        final_grad_norm: outcome.grad_norm,
        converged: outcome.stop == StopReason::GradientTolerance,
        penalty_integral: penalty,
        lambda_profile,
        stages,
        descent_trace: outcome.trace.clone(),
    })
}

fn stage_summary<T: Real>(report: &SolverReport<T>) -> StageSummary {
    StageSummary {
        delta: report.delta_used.to_f64_lossy(),
        iterations: report.iterations,
        grad_norm: report.final_grad_norm.to_f64_lossy(),
        converged: report.converged,
        energy: report.energy.to_f64_lossy(),
        penalty_integral: report.penalty_integral.to_f64_lossy(),
        max_excursion: report.max_excursion.to_f64_lossy(),
        max_abs_lambda: report
            .lambda_profile
            .iter()
            .fold(0.0, |m: f64, l| m.max(l.abs().to_f64_lossy())),
    }
}

/// Minimizes the penalized energy over the interior nodes of `seed` with
/// both endpoints held fixed. An iteration cap is reported through
/// `converged = false` rather than an error.
pub fn minimize_fixed_endpoints<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    delta: T,
    seed: &DiscreteCurve<T>,
    params: &PenaltyParams<T>,
) -> Result<SolverReport<T>> {
    if !(delta > T::zero() && delta < domain.delta0()) {
        return Err(invalid(format!("delta = {delta} outside (0, delta0)")));
    }
    check_seed(domain, delta, seed)?;
    let n = seed.segments();
    let dim = seed.dimension();
    let objective = |x: &DVector<T>| -> Result<(T, DVector<T>)> {
        let curve = unpack_interior(seed, x)?;
        let value = penalized_energy(metric, domain, delta, &curve)?;
        let grad = penalized_gradient(metric, domain, delta, &curve)?;
        let mut g = DVector::zeros((n - 1) * dim);
        for (k, gk) in grad[1..n].iter().enumerate() {
            g.rows_mut(k * dim, dim).copy_from(gk);
        }
        Ok((value, g))
    };
    let opts = optimize::Options {
        grad_tol: params.grad_tol,
        max_iters: params.max_iters,
        memory: params.memory,
        line_search: params.line_search,
        initial_scale: T::one() / T::from_usize_lossy(n),
    };
    let outcome = optimize::minimize(objective, pack_interior(seed), &opts)?;
    let curve = unpack_interior(seed, &outcome.x)?;
    let mut report = summarize(metric, domain, delta, &outcome, curve, Vec::new())?;
    report.stages = vec![stage_summary(&report)];
    Ok(report)
}

/// Runs [`minimize_fixed_endpoints`] along the whole schedule, warm-starting
/// each stage from the previous minimizer.
pub fn continuation<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    params: &PenaltyParams<T>,
    seed: &DiscreteCurve<T>,
) -> Result<SolverReport<T>> {
    params.validate(domain.delta0())?;
    continuation_from(metric, domain, params, seed, 0)
}

/// Continuation over `schedule[first_stage..]`.
pub fn continuation_from<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    params: &PenaltyParams<T>,
    seed: &DiscreteCurve<T>,
    first_stage: usize,
) -> Result<SolverReport<T>> {
    let mut stages: Vec<StageSummary> = Vec::new();
    let mut current = seed.clone();
    let mut last: Option<SolverReport<T>> = None;
    for (i, &delta) in params.delta_schedule.iter().enumerate().skip(first_stage) {
        match minimize_fixed_endpoints(metric, domain, delta, &current, params) {
            Ok(report) => {
                stages.push(stage_summary(&report));
                current = report.final_curve.clone();
                last = Some(report);
            }
            Err(e) => {
                return Err(Error::ContinuationStalled {
                    stage: i,
                    delta: delta.to_f64_lossy(),
                    reason: format!(
                        "{e}; history: {}",
                        serde_json::to_string(&stages).unwrap_or_default()
                    ),
                });
            }
        }
    }
    let mut report = last.ok_or_else(|| invalid("continuation ran no stages"))?;
    report.stages = stages;
    Ok(report)
}

/// Index of the smallest `delta` in the schedule for which every node of
/// `curve` is admissible (`phi < delta`), if any.
pub fn last_admissible_stage<T: Real>(
    domain: &ImplicitDomain<T>,
    params: &PenaltyParams<T>,
    curve: &DiscreteCurve<T>,
) -> Option<usize> {
    let top = max_excursion(domain, curve);
    params.delta_schedule.iter().rposition(|d| top < *d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn chi_values() {
        assert_eq!(chi(0.1, -1.0).unwrap(), 0.0);
        assert_relative_eq!(chi(0.1, 0.05).unwrap(), 1.0, epsilon = 1e-14);
        assert!(matches!(chi(0.1, 0.1), Err(Error::PenaltyBlowup { .. })));
        assert_relative_eq!(chi_prime(0.1, 0.05).unwrap(), 80.0, epsilon = 1e-10);
        assert_eq!(chi_prime(0.1, 0.0).unwrap(), 0.0);
        assert!(chi_prime(0.1, 0.2).is_err());
    }

    #[test]
    fn chi_prime_matches_difference_quotient() {
        for &(d, t) in &[(0.1, 0.03), (0.5, 0.4), (1.0, 1e-3)] {
            let h = 1e-7 * d;
            let fd = (chi(d, t + h).unwrap() - chi(d, t - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(chi_prime(d, t).unwrap(), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn chi_in_f32() {
        let v: f32 = chi(0.1f32, 0.05f32).unwrap();
        assert!((v - 1.0).abs() < 1e-5);
    }

    #[test]
    fn penalized_energy_cases() {
        let e = MetricSpec::euclidean(2);
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let inside = DiscreteCurve::straight(&v2(-0.5, 0.0), &v2(0.5, 0.1), 16).unwrap();
        assert_eq!(
            penalized_energy(&e, &ball, 0.1, &inside).unwrap(),
            energy(&e, &inside).unwrap()
        );

        // node 5 pushed to phi = delta / 2
        let delta = 0.1;
        let r = (1.0 + 2.0 * delta / 2.0f64).sqrt();
        let mut nodes = inside.nodes().to_vec();
        nodes[5] = v2(0.0, r);
        let bumped = DiscreteCurve::new(nodes).unwrap();
        let expected = energy(&e, &bumped).unwrap() + 1.0 / 16.0;
        assert_relative_eq!(
            penalized_energy(&e, &ball, delta, &bumped).unwrap(),
            expected,
            epsilon = 1e-12
        );
        let lambda = lambda_recover(&ball, delta, &bumped).unwrap();
        assert_relative_eq!(lambda[5], -80.0, epsilon = 1e-8);
        assert!(lambda.iter().enumerate().all(|(k, l)| k == 5 || *l == 0.0));

        let mut nodes = inside.nodes().to_vec();
        nodes[5] = v2(0.0, (1.0 + 2.0 * delta).sqrt() + 1e-9);
        let bad = DiscreteCurve::new(nodes).unwrap();
        assert!(matches!(
            penalized_energy(&e, &ball, delta, &bad),
            Err(Error::PenaltyBlowup { .. })
        ));
    }

    #[test]
    fn ball_chord_is_already_optimal() {
        let e = MetricSpec::euclidean(2);
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let a = v2(-0.6, 0.8);
        let b = v2(0.8, -0.6);
        let mut nodes = DiscreteCurve::straight(&a, &b, 32).unwrap().into_nodes();
        for (k, q) in nodes.iter_mut().enumerate().skip(1).take(31) {
            q[1] += 0.05 * ((k as f64) * 0.7).sin();
        }
        let seed = DiscreteCurve::new(nodes).unwrap();
        let params = PenaltyParams::default_for(0.25, 32);
        let rep = minimize_fixed_endpoints(&e, &ball, 0.1, &seed, &params).unwrap();
        assert!(rep.converged);
        assert!(rep.final_grad_norm <= params.grad_tol);
        assert_eq!(rep.penalty_integral, 0.0);
        let straight = DiscreteCurve::straight(&a, &b, 32).unwrap();
        assert!(crate::curve::star_dist(&rep.final_curve, &straight).unwrap() < 1e-3);
        assert!(rep.descent_trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn seed_violating_barrier_is_rejected() {
        let e = MetricSpec::euclidean(2);
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let seed = DiscreteCurve::straight(&v2(-1.0, 0.0), &v2(1.2, 0.0), 16).unwrap();
        let params = PenaltyParams::default_for(0.25, 16);
        assert!(matches!(
            minimize_fixed_endpoints(&e, &ball, 0.1, &seed, &params),
            Err(Error::InvalidInput(_))
        ));
        let pt = DiscreteCurve::constant(&v2(1.0, 0.0), 16).unwrap();
        assert!(matches!(
            minimize_fixed_endpoints(&e, &ball, 0.1, &pt, &params),
            Err(Error::DegenerateCurve(_))
        ));
    }

    #[test]
    fn schedule_validation() {
        let mut p = PenaltyParams::<f64>::default_for(0.25, 16);
        assert!(p.validate(0.25).is_ok());
        p.delta_schedule = vec![0.1, 0.1];
        assert!(p.validate(0.25).is_err());
        p.delta_schedule = vec![0.3, 0.1];
        assert!(p.validate(0.25).is_err());
        p.delta_schedule = vec![];
        assert!(p.validate(0.25).is_err());
    }

    #[test]
    fn residual_of_uniform_and_irregular_curves() {
        let e = MetricSpec::euclidean(2);
        let ball = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let s = DiscreteCurve::straight(&v2(-1.0, 0.0), &v2(1.0, 0.0), 64).unwrap();
        assert!(energy_constant_residual(&e, &ball, 0.01, &s).unwrap() <= 1e-12);
        let wobbly: Vec<_> = (0..=64)
            .map(|k| {
                let t = k as f64 / 64.0;
                v2(-0.9 + 1.8 * t * t, 0.3 * (3.0 * t).sin())
            })
            .collect();
        let w = DiscreteCurve::new(wobbly).unwrap();
        assert!(energy_constant_residual(&e, &ball, 0.01, &w).unwrap() > 0.3);
    }
}
