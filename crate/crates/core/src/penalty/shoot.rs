//! Fixed-step RK4 for the free and penalized geodesic equations.

use nalgebra::DVector;

use super::{chi, chi_prime};
use crate::domain::ImplicitDomain;
use crate::error::{invalid, Error, Result};
use crate::metric::MetricSpec;
use crate::scalar::{c, Real};

const ZERO_SPEED_RATIO: f64 = 1e-10;
const MAX_DRIFT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// `phi` changed sign; `inward` tells the direction.
    Crossing { inward: bool },
    /// `<grad phi, q'>` changed sign near the boundary.
    Tangency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEvent<T: Real> {
    pub t: T,
    pub kind: EventKind,
    pub position: DVector<T>,
}

#[derive(Debug, Clone)]
pub struct ShootOptions<T: Real> {
    pub step: T,
    pub t_max: T,
    /// Stop at the first event of this kind.
    pub stop_on: Option<StopOn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopOn {
    AnyEvent,
    Crossing,
    Exit,
}

impl<T: Real> ShootOptions<T> {
    pub fn new(step: T, t_max: T) -> Self {
        Self {
            step,
            t_max,
            stop_on: None,
        }
    }

    pub fn stop_on(mut self, s: StopOn) -> Self {
        self.stop_on = Some(s);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub positions: Vec<DVector<T>>,
    pub velocities: Vec<DVector<T>>,
    pub events: Vec<BoundaryEvent<T>>,
    /// `max |E(t) - E(0)| / |E(0)|` with `E = 1/2 G - chi_delta(phi)`.
    pub max_relative_drift: T,
}

impl<T: Real> Trajectory<T> {
    pub fn first_event(&self) -> Option<&BoundaryEvent<T>> {
        self.events.first()
    }
}

struct System<'a, T: Real> {
    metric: &'a MetricSpec<T>,
    domain: &'a ImplicitDomain<T>,
    delta: Option<T>,
}

impl<T: Real> System<'_, T> {
    fn accel(&self, q: &DVector<T>, v: &DVector<T>) -> Result<DVector<T>> {
        let mut a = self.metric.spray(q, v)?;
        if let Some(delta) = self.delta {
            let cp = chi_prime(delta, self.domain.phi(q))?;
            if cp != T::zero() {
                let g = self.metric.fundamental_tensor(q, v)?;
                let grad = self.domain.grad_phi(q);
                let force = g
                    .cholesky()
                    .ok_or_else(|| {
                        Error::MetricDegenerate("fundamental tensor not positive definite".into())
                    })?
                    .solve(&grad);
                a += force * cp;
            }
        }
        Ok(a)
    }

    fn conserved(&self, q: &DVector<T>, v: &DVector<T>) -> Result<T> {
        let mut e = c::<T>(0.5) * self.metric.eval_g(q, v)?;
        if let Some(delta) = self.delta {
            e -= chi(delta, self.domain.phi(q))?;
        }
        Ok(e)
    }

    fn rk4(&self, q: &DVector<T>, v: &DVector<T>, h: T) -> Result<(DVector<T>, DVector<T>)> {
        let half = h * c(0.5);
        let a1 = self.accel(q, v)?;
        let (q2, v2) = (q + v * half, v + &a1 * half);
        let a2 = self.accel(&q2, &v2)?;
        let (q3, v3) = (q + &v2 * half, v + &a2 * half);
        let a3 = self.accel(&q3, &v3)?;
        let (q4, v4) = (q + &v3 * h, v + &a3 * h);
        let a4 = self.accel(&q4, &v4)?;
        let sixth = h / c(6.0);
        let two: T = c(2.0);
        let qn = q + (v + &v2 * two + &v3 * two + &v4) * sixth;
        let vn = v + (a1 + a2 * two + a3 * two + a4) * sixth;
        Ok((qn, vn))
    }
}

/// Integrates `q'' = spray(q, q') + chi_delta'(phi) g^{-1} grad phi` from
/// `(q0, v0)`. With `delta = None` the penalty force is absent.
pub fn shoot_geodesic<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    delta: Option<T>,
    q0: &DVector<T>,
    v0: &DVector<T>,
    opts: &ShootOptions<T>,
) -> Result<Trajectory<T>> {
    if q0.len() != metric.dimension()
        || v0.len() != metric.dimension()
        || domain.dimension() != metric.dimension()
    {
        return Err(invalid("dimension mismatch"));
    }
    if v0.iter().all(|x| *x == T::zero()) {
        return Err(Error::ZeroSection);
    }
    if !(opts.step > T::zero() && opts.t_max > T::zero()) {
        return Err(invalid("step and t_max must be positive"));
    }
    let sys = System {
        metric,
        domain,
        delta,
    };
    let speed0 = v0.norm();
    let e0 = sys.conserved(q0, v0)?;
    let scale = e0.abs().max(T::EPS);
    let h = opts.step;
    let mut t = T::zero();
    let mut q = q0.clone();
    let mut v = v0.clone();
    let mut traj = Trajectory {
        times: vec![t],
        positions: vec![q.clone()],
        velocities: vec![v.clone()],
        events: Vec::new(),
        max_relative_drift: T::zero(),
    };
    let mut phi = domain.phi(&q);
    let mut flux = domain.grad_phi(&q).dot(&v);
    while t < opts.t_max {
        let dt = h.min(opts.t_max - t);
        let (qn, vn) = sys.rk4(&q, &v, dt).map_err(|e| match e {
            Error::PenaltyBlowup { .. } => Error::IntegratorFailure {
                t: t.to_f64_lossy(),
                drift: f64::INFINITY,
            },
            other => other,
        })?;
        let tn = t + dt;
        let speed = vn.norm();
        if !(speed >= c::<T>(ZERO_SPEED_RATIO) * speed0) {
            return Err(Error::ZeroSectionAbort {
                t: tn.to_f64_lossy(),
                speed: speed.to_f64_lossy(),
            });
        }
        let drift = (sys.conserved(&qn, &vn)? - e0).abs() / scale;
        traj.max_relative_drift = traj.max_relative_drift.max(drift);
        if !(drift <= c(MAX_DRIFT)) {
            return Err(Error::IntegratorFailure {
                t: tn.to_f64_lossy(),
                drift: drift.to_f64_lossy(),
            });
        }

        let phin = domain.phi(&qn);
        let fluxn = domain.grad_phi(&qn).dot(&vn);
        let mut stop = false;
        if (phi < T::zero()) != (phin < T::zero()) {
            let s = phi / (phi - phin);
            traj.events.push(BoundaryEvent {
                t: t + s * dt,
                kind: EventKind::Crossing {
                    inward: phin < T::zero(),
                },
                position: &q + (&qn - &q) * s,
            });
            stop |= match opts.stop_on {
                Some(StopOn::AnyEvent | StopOn::Crossing) => true,
                Some(StopOn::Exit) => phin >= T::zero(),
                None => false,
            };
        }
        let band = delta.unwrap_or(T::zero()).max(dt * speed);
        if (flux < T::zero()) != (fluxn < T::zero()) && phi.abs().min(phin.abs()) <= band {
            let s = flux / (flux - fluxn);
            traj.events.push(BoundaryEvent {
                t: t + s * dt,
                kind: EventKind::Tangency,
                position: &q + (&qn - &q) * s,
            });
            stop |= opts.stop_on == Some(StopOn::AnyEvent);
        }

        t = tn;
        q = qn;
        v = vn;
        phi = phin;
        flux = fluxn;
        traj.times.push(t);
        traj.positions.push(q.clone());
        traj.velocities.push(v.clone());
        if stop {
            break;
        }
    }
    Ok(traj)
}
