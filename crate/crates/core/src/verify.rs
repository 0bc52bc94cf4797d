//! Invariant suites run by `finchord verify`.
//!
//! Each suite samples points from the boundary strip and unit directions,
//! reports its worst relative error against a tolerance, and counts samples
//! skipped at the p-norm smoothness boundary.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curve::{chord_seed, energy, energy_gradient, DiscreteCurve};
use crate::domain::ImplicitDomain;
use crate::error::{Error, Result};
use crate::metric::MetricSpec;
use crate::penalty::{chi, chi_prime, penalized_energy, penalized_gradient};
use crate::penalty::{shoot_geodesic, ShootOptions};
use crate::scalar::{c, Real};

#[derive(Debug, Clone, Serialize)]
pub struct InvariantResult {
    pub name: &'static str,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub skipped: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub samples: usize,
    /// Replaces `metric.euler_tolerance()`.
    pub euler_tolerance: Option<f64>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 200,
            euler_tolerance: None,
            seed: 42,
        }
    }
}

/// Share of samples pushed onto a coordinate hyperplane to exercise the
/// p-norm guard.
const HYPERPLANE_EVERY: usize = 20;

struct Acc {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    samples: usize,
    skipped: usize,
    note: Option<String>,
}

impl Acc {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            samples: 0,
            skipped: 0,
            note: None,
        }
    }

    fn record(&mut self, outcome: Result<f64>) {
        match outcome {
            Ok(err) => {
                self.samples += 1;
                // NaN must fail
                if !(err <= self.worst) {
                    self.worst = if err.is_nan() { f64::INFINITY } else { err };
                }
            }
            Err(Error::SmoothnessBoundary { .. }) => self.skipped += 1,
            Err(e) => {
                self.samples += 1;
                self.worst = f64::INFINITY;
                self.note.get_or_insert_with(|| e.to_string());
            }
        }
    }

    fn finish(self) -> InvariantResult {
        InvariantResult {
            name: self.name,
            passed: self.samples > 0 && self.worst <= self.tolerance,
            worst: self.worst,
            tolerance: self.tolerance,
            samples: self.samples,
            skipped: self.skipped,
            note: if self.samples == 0 {
                Some("every sample skipped".into())
            } else {
                self.note
            },
        }
    }
}

fn rel<T: Real>(err: T, scale: T) -> f64 {
    (err / scale.max(T::EPS * T::EPS)).to_f64_lossy()
}

fn eps_tol<T: Real>(factor: f64, floor: f64) -> f64 {
    (factor * T::EPS.to_f64_lossy()).max(floor)
}

fn samples<T: Real>(
    domain: &ImplicitDomain<T>,
    count: usize,
    seed: u64,
) -> Vec<(DVector<T>, DVector<T>)> {
    let mut draw = domain.strip_sampler(seed);
    let dim = domain.dimension();
    (0..count)
        .map(|i| {
            let (q, mut v) = draw();
            if i % HYPERPLANE_EVERY == HYPERPLANE_EVERY - 1 {
                v[i % dim] = c(1e-12);
                let norm = v.norm();
                v /= norm;
            }
            (q, v)
        })
        .collect()
}

fn homogeneity<T: Real>(
    metric: &MetricSpec<T>,
    pts: &[(DVector<T>, DVector<T>)],
) -> InvariantResult {
    let mut acc = Acc::new("homogeneity", eps_tol::<T>(1e4, 1e-12));
    for (q, v) in pts {
        acc.record((|| {
            let g = metric.eval_g(q, v)?;
            let f = metric.eval_f(q, v)?;
            let mut worst: f64 = 0.0;
            for s in [0.5, 3.7] {
                let s: T = c(s);
                let w = v * s;
                worst = worst.max(rel((metric.eval_g(q, &w)? - g * s * s).abs(), g * s * s));
                worst = worst.max(rel((metric.eval_f(q, &w)? - f * s).abs(), f * s));
            }
            Ok(worst)
        })());
    }
    acc.finish()
}

fn euler<T: Real>(
    metric: &MetricSpec<T>,
    pts: &[(DVector<T>, DVector<T>)],
    tol: Option<f64>,
) -> InvariantResult {
    let tolerance = tol.unwrap_or_else(|| metric.euler_tolerance().to_f64_lossy());
    let mut acc = Acc::new("euler_identities", tolerance);
    for (q, v) in pts {
        acc.record((|| {
            let jet = metric.metric_jet(q, v)?;
            let two: T = c(2.0);
            let first = rel((jet.dv.dot(v) - jet.value * two).abs(), jet.value * two);
            let second = rel((&jet.dvv * v - &jet.dv).norm(), jet.dv.norm());
            Ok(first.max(second))
        })());
    }
    acc.finish()
}

fn spray_homogeneity<T: Real>(
    metric: &MetricSpec<T>,
    pts: &[(DVector<T>, DVector<T>)],
) -> InvariantResult {
    let mut acc = Acc::new("spray_homogeneity", metric.euler_tolerance().to_f64_lossy());
    for (q, v) in pts {
        acc.record((|| {
            let s: T = c(2.5);
            let base = metric.spray(q, v)?;
            let scaled = metric.spray(q, &(v * s))?;
            let scale = base.norm().max(metric.eval_g(q, v)?) * s * s;
            Ok(rel((scaled - base * (s * s)).norm(), scale))
        })());
    }
    acc.finish()
}

fn chi_identity<T: Real>(delta0: T, count: usize, seed: u64) -> InvariantResult {
    let mut acc = Acc::new("chi_identity", eps_tol::<T>(1e4, 1e-12));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..count {
        acc.record((|| {
            let delta = delta0 * c(rng.gen_range(0.01..1.0));
            let t = delta * c(rng.gen_range(0.001..0.999));
            let lhs = chi_prime(delta, t)?;
            let rhs = chi(delta, t)? * delta * c(2.0) / (t * (delta - t));
            Ok(rel((lhs - rhs).abs(), lhs.abs()))
        })());
    }
    acc.finish()
}

/// Seed chords between random boundary points, wobbled inside the domain.
fn test_curves<T: Real>(
    domain: &ImplicitDomain<T>,
    count: usize,
    n: usize,
    seed: u64,
) -> Vec<Result<DiscreteCurve<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
    let dirs = domain.sample_directions(2 * count.max(1) + 3, seed);
    let dim = domain.dimension();
    let guard = domain.delta0() * c(0.1);
    (0..count)
        .map(|i| {
            let a = domain.radial_level_point(&dirs[(2 * i) % dirs.len()], T::zero())?;
            let b = domain
                .radial_level_point(&dirs[(2 * i + dirs.len() / 2 + 1) % dirs.len()], T::zero())?;
            let seed = chord_seed(domain, &a, &b, n)?;
            let amp = (&a - &b).norm() * c(0.02);
            let mut nodes = seed.nodes().to_vec();
            for q in nodes.iter_mut().take(n).skip(1) {
                let w = DVector::from_fn(dim, |_, _| c::<T>(rng.gen_range(-1.0..1.0)));
                let moved = &*q + w * amp;
                if domain.phi(&moved) < -guard {
                    *q = moved;
                }
            }
            seed.with_nodes(nodes)
        })
        .collect()
}

fn fd_error<T: Real, F>(x: &DiscreteCurve<T>, grad: &[DVector<T>], f: F) -> Result<f64>
where
    F: Fn(&DiscreteCurve<T>) -> Result<T>,
{
    let n = x.segments();
    let scale = x.nodes().iter().fold(T::one(), |m, q| m.max(q.norm()));
    let h = T::EPS.cbrt() * scale;
    let mut worst = T::zero();
    let gmax = grad.iter().fold(T::zero(), |m, g| m.max(g.amax()));
    for k in 1..n {
        for i in 0..x.dimension() {
            let mut plus = x.nodes().to_vec();
            let mut minus = plus.clone();
            plus[k][i] += h;
            minus[k][i] -= h;
            let fd = (f(&x.with_nodes(plus)?)? - f(&x.with_nodes(minus)?)?) / (h * c(2.0));
            worst = worst.max((fd - grad[k][i]).abs());
        }
    }
    Ok(rel(worst, gmax))
}

fn gradient_check<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    curves: &[Result<DiscreteCurve<T>>],
) -> InvariantResult {
    let floor = if metric.has_closed_form_jet() {
        1e-6
    } else {
        1e-4
    };
    let mut acc = Acc::new(
        "gradient_vs_fd",
        (100.0 * T::EPS.to_f64_lossy().powf(2.0 / 3.0)).max(floor),
    );
    let delta = domain.delta0() * c(0.25);
    for curve in curves {
        acc.record(curve.clone().and_then(|x| {
            let plain = fd_error(&x, &energy_gradient(metric, &x)?, |y| energy(metric, y))?;
            let penalized = fd_error(&x, &penalized_gradient(metric, domain, delta, &x)?, |y| {
                penalized_energy(metric, domain, delta, y)
            })?;
            Ok(plain.max(penalized))
        }));
    }
    acc.finish()
}

fn reverse_involution<T: Real>(
    metric: &MetricSpec<T>,
    curves: &[Result<DiscreteCurve<T>>],
) -> InvariantResult {
    let mut acc = Acc::new("reverse_involution", eps_tol::<T>(1e4, 1e-12));
    for curve in curves {
        acc.record(curve.clone().and_then(|x| {
            let back = x.reverse();
            if back.reverse().nodes() != x.nodes() {
                return Ok(f64::INFINITY);
            }
            // J(R x) is J of x under the reversed metric G(q, -v)
            let n = x.segments();
            let nf = T::from_usize_lossy(n);
            let mut flipped = T::zero();
            for k in 0..n {
                flipped += metric.eval_g(&x.midpoint(k), &(-x.segment_velocity(k)))?;
            }
            flipped /= nf * c(2.0);
            let j = energy(metric, &back)?;
            Ok(rel((j - flipped).abs(), j))
        }));
    }
    acc.finish()
}

fn free_conservation<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    pts: &[(DVector<T>, DVector<T>)],
) -> InvariantResult {
    let tol: f64 = if metric.has_closed_form_jet() {
        1e-8
    } else {
        1e-4
    };
    let mut acc = Acc::new(
        "free_geodesic_conservation",
        tol.max(eps_tol::<T>(1e6, 0.0)),
    );
    let opts = ShootOptions::new(c(2e-3), domain.delta0());
    for (q, v) in pts.iter().take(20) {
        acc.record(
            shoot_geodesic(metric, domain, None, q, v, &opts)
                .map(|t| t.max_relative_drift.to_f64_lossy()),
        );
    }
    acc.finish()
}

/// Runs every suite on `metric` over the strip of `domain`.
pub fn run_suite<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    n: usize,
    opts: &VerifyOptions,
) -> Vec<InvariantResult> {
    let pts = samples(domain, opts.samples.max(1), opts.seed);
    let curves = test_curves(domain, 5, n.clamp(8, 24), opts.seed);
    vec![
        homogeneity(metric, &pts),
        euler(metric, &pts, opts.euler_tolerance),
        gradient_check(metric, domain, &curves),
        chi_identity(domain.delta0(), 100, opts.seed),
        spray_homogeneity(metric, &pts),
        free_conservation(metric, domain, &pts),
        reverse_involution(metric, &curves),
    ]
}

/// Plain-text pass/fail table.
pub fn format_table(results: &[InvariantResult]) -> String {
    let mut out = format!(
        "{:<28} {:<6} {:>12} {:>12} {:>8} {:>8}\n",
        "invariant", "status", "worst", "tolerance", "samples", "skipped"
    );
    for r in results {
        out += &format!(
            "{:<28} {:<6} {:>12.3e} {:>12.3e} {:>8} {:>8}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.worst,
            r.tolerance,
            r.samples,
            r.skipped
        );
        if let Some(note) = &r.note {
            out += &format!("  ({note})");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(metric: MetricSpec<f64>, domain: ImplicitDomain<f64>) -> Vec<InvariantResult> {
        run_suite(
            &metric,
            &domain,
            16,
            &VerifyOptions {
                samples: 60,
                ..Default::default()
            },
        )
    }

    #[test]
    fn all_pass_for_builtin_metrics() {
        let ball = || ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let metrics = [
            MetricSpec::euclidean(2),
            MetricSpec::randers_euclidean(DVector::from_vec(vec![0.3, -0.1])).unwrap(),
            MetricSpec::pnorm(2, 3.0).unwrap(),
        ];
        for m in metrics {
            let res = run(m.clone(), ball());
            assert!(
                res.iter().all(|r| r.passed),
                "{m:?}\n{}",
                format_table(&res)
            );
        }
    }

    #[test]
    fn runs_in_single_precision() {
        let m = MetricSpec::<f32>::randers_euclidean(DVector::from_vec(vec![0.2, 0.1])).unwrap();
        let d = ImplicitDomain::<f32>::unit_ball(2, 0.25).unwrap();
        let res = run_suite(
            &m,
            &d,
            16,
            &VerifyOptions {
                samples: 40,
                ..Default::default()
            },
        );
        assert!(res.iter().all(|r| r.passed), "{}", format_table(&res));
    }

    #[test]
    fn pnorm_skips_hyperplane_samples() {
        let res = run(
            MetricSpec::pnorm(2, 4.0).unwrap(),
            ImplicitDomain::unit_ball(2, 0.25).unwrap(),
        );
        let euler = res.iter().find(|r| r.name == "euler_identities").unwrap();
        assert_eq!(euler.skipped, 3);
        assert!(euler.passed);
        let e = run(
            MetricSpec::euclidean(2),
            ImplicitDomain::unit_ball(2, 0.25).unwrap(),
        );
        assert!(e.iter().all(|r| r.skipped == 0));
    }

    #[test]
    fn corrupted_tolerance_names_the_failure() {
        let m = MetricSpec::randers_euclidean(DVector::from_vec(vec![0.3, 0.2])).unwrap();
        let d = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let res = run_suite(
            &m,
            &d,
            16,
            &VerifyOptions {
                samples: 60,
                euler_tolerance: Some(1e-300),
                seed: 1,
            },
        );
        let failed: Vec<_> = res.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        assert_eq!(failed, vec!["euler_identities"]);
        assert!(format_table(&res).contains("euler_identities             FAIL"));
    }
}
