//! Free-endpoint chords, their classification and the multistart search.
//!
//! Orthogonal chords are saddle points of the energy: minimal with respect
//! to the interior, critical but generally not minimal with respect to the
//! endpoints (sliding both endpoints together always lowers the energy).
//! The endpoint problem is therefore solved as a root-finding problem for
//! the tangential endpoint gradient with Levenberg-Marquardt steps, while
//! the interior is kept at a penalized minimum.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::curve::{
    chord_seed, energy, energy_gradient, reparametrize_const_speed, star_dist, DiscreteCurve,
};
use crate::domain::{finsler_hessian, ImplicitDomain};
use crate::error::{invalid, Error, Result};
use crate::metric::MetricSpec;
use crate::penalty::{
    continuation, lambda_recover, minimize_fixed_endpoints, PenaltyParams, SolverReport,
};
use crate::scalar::{c, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Ofgc,
    Otfgc,
    BoundaryTouching,
    Constant,
    Unconverged,
}

impl Classification {
    pub fn is_chord(self) -> bool {
        matches!(self, Classification::Ofgc | Classification::Otfgc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Ofgc => "ofgc",
            Classification::Otfgc => "otfgc",
            Classification::BoundaryTouching => "boundary_touching",
            Classification::Constant => "constant",
            Classification::Unconverged => "unconverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChordParams<T: Real> {
    pub n: usize,
    pub penalty: PenaltyParams<T>,
    /// Interior gradient tolerance used while endpoints move.
    pub relax_grad_tol: T,
    /// Stop when both relative tangential endpoint gradients are below this.
    pub endpoint_tol: T,
    pub max_outer: usize,
    /// Relative finite-difference step for the endpoint Jacobian.
    pub fd_step: T,
    /// Endpoints closer than `merge_tol * diameter` count as merged.
    pub merge_tol: T,
    pub ortho_tol: T,
    pub tangency_tol: T,
    pub dedup_tol: T,
    pub value_tol: T,
}

impl<T: Real> ChordParams<T> {
    pub fn default_for(delta0: T, n: usize) -> Self {
        Self {
            n,
            penalty: PenaltyParams::default_for(delta0, n),
            relax_grad_tol: c::<T>(1e-10) * T::from_usize_lossy(n),
            endpoint_tol: c(1e-7),
            max_outer: 80,
            fd_step: c(1e-5),
            merge_tol: c(1e-3),
            ortho_tol: c(1e-3),
            tangency_tol: c(1e-3),
            dedup_tol: c(1e-2),
            value_tol: c(1e-3),
        }
    }

    /// `2 delta_final`.
    pub fn contact_tol(&self) -> T {
        c::<T>(2.0) * self.penalty.final_delta()
    }

    /// `value_tol * (1 + |value|)`.
    pub fn value_tolerance(&self, value: T) -> T {
        self.value_tol * (T::one() + value.abs())
    }
}

#[derive(Debug, Clone)]
pub struct ChordResult<T: Real> {
    pub curve: DiscreteCurve<T>,
    pub energy: T,
    pub residual0: T,
    pub residual1: T,
    pub contact_nodes: Vec<usize>,
    pub lambda_profile: Vec<T>,
    pub classification: Classification,
    /// Whether the endpoint iteration met its tolerance.
    pub converged: bool,
    /// Last node of the orthogonal-tangent prefix.
    pub prefix_end: Option<usize>,
    pub delta: T,
    pub outer_iterations: usize,
    /// Largest relative tangential endpoint gradient at termination.
    pub endpoint_residual: T,
    pub diagnostics: Vec<String>,
}

impl<T: Real> ChordResult<T> {
    pub fn start(&self) -> &DVector<T> {
        self.curve.start()
    }

    pub fn end(&self) -> &DVector<T> {
        self.curve.end()
    }

    /// The orthogonal-tangent prefix, if classified as such.
    pub fn prefix(&self) -> Option<DiscreteCurve<T>> {
        let k = self.prefix_end?;
        DiscreteCurve::new(self.curve.nodes()[..=k].to_vec()).ok()
    }

    fn failed(
        curve: DiscreteCurve<T>,
        delta: T,
        classification: Classification,
        note: String,
    ) -> Self {
        Self {
            curve,
            energy: T::zero(),
            residual0: T::one(),
            residual1: T::one(),
            contact_nodes: Vec::new(),
            lambda_profile: Vec::new(),
            classification,
            converged: classification == Classification::Constant,
            prefix_end: None,
            delta,
            outer_iterations: 0,
            endpoint_residual: T::one(),
            diagnostics: vec![note],
        }
    }
}

/// Relative tangential part of the endpoint covector `d_vG(q(s), q'(s))`
/// at `s = 0, 1`.
///
/// The covector is extrapolated from the end segment midpoint with
/// `d/ds d_vG = d_qG`, i.e. `d_vG(m, v) -+ d_qG(m, v) / 2n`, which is the
/// discrete endpoint gradient of the energy. One-sided `d_vG` alone is only
/// first-order accurate when the metric depends on position.
pub fn orthogonality_residual<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    curve: &DiscreteCurve<T>,
) -> Result<(T, T)> {
    let n = curve.segments();
    let shift = T::one() / (c::<T>(2.0) * T::from_usize_lossy(n));
    let ends = [(curve.start(), 0, -shift), (curve.end(), n - 1, shift)];
    let mut out = [T::zero(); 2];
    for (i, (q, k, sign)) in ends.iter().enumerate() {
        let phi = domain.phi(q);
        if phi.abs() > domain.tol_phi() {
            return Err(invalid(format!(
                "endpoint {i} off the boundary (phi = {phi})"
            )));
        }
        let v = curve.segment_velocity(*k);
        if v.iter().all(|x| *x == T::zero()) {
            return Err(Error::DegenerateCurve(format!(
                "zero velocity at endpoint {i}"
            )));
        }
        let jet = metric.first_jet(&curve.midpoint(*k), &v)?;
        let w = jet.dv + jet.dq * *sign;
        let wn = w.norm();
        if wn == T::zero() {
            return Err(Error::DegenerateCurve(format!(
                "vanishing d_vG at endpoint {i}"
            )));
        }
        out[i] = domain.tangent_project(q, &w)?.norm() / wn;
    }
    Ok((out[0], out[1]))
}

/// Interior state for fixed endpoints.
struct Relaxed<T: Real> {
    report: SolverReport<T>,
    /// Tangential endpoint gradient over its norm, in the given bases,
    /// stacked `[A; B]`. Normalizing keeps the residual from shrinking
    /// merely because the chord does.
    r: DVector<T>,
    /// Relative size of the tangential endpoint gradients.
    rel: T,
}

struct EndpointProblem<'a, T: Real> {
    metric: &'a MetricSpec<T>,
    domain: &'a ImplicitDomain<T>,
    params: &'a ChordParams<T>,
    relax_params: PenaltyParams<T>,
}

impl<T: Real> EndpointProblem<'_, T> {
    fn delta(&self) -> T {
        self.params.penalty.final_delta()
    }

    fn initial(&self, a: &DVector<T>, b: &DVector<T>) -> Result<SolverReport<T>> {
        let seed = chord_seed(self.domain, a, b, self.params.n)?;
        let coarse = continuation(self.metric, self.domain, &self.params.penalty, &seed)?;
        self.polish(coarse.final_curve)
    }

    fn polish(&self, curve: DiscreteCurve<T>) -> Result<SolverReport<T>> {
        minimize_fixed_endpoints(
            self.metric,
            self.domain,
            self.delta(),
            &curve,
            &self.relax_params,
        )
    }

    /// Re-relaxes `warm` after moving its endpoints to `a`, `b`.
    fn relax_moved(
        &self,
        warm: &DiscreteCurve<T>,
        a: &DVector<T>,
        b: &DVector<T>,
    ) -> Result<SolverReport<T>> {
        let n = warm.segments();
        let da = a - warm.start();
        let db = b - warm.end();
        let nodes: Vec<DVector<T>> = warm
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, q)| {
                let s = T::from_usize_lossy(k) / T::from_usize_lossy(n);
                q + &da * (T::one() - s) + &db * s
            })
            .collect();
        let shifted = warm.with_nodes(nodes)?;
        let half = self.delta() * c(0.5);
        if shifted.nodes().iter().all(|q| self.domain.phi(q) < half) {
            if let Ok(rep) = self.polish(shifted) {
                return Ok(rep);
            }
        }
        self.initial(a, b)
    }

    fn evaluate(&self, report: SolverReport<T>, bases: &[DMatrix<T>; 2]) -> Result<Relaxed<T>> {
        let curve = &report.final_curve;
        let grad = energy_gradient(self.metric, curve)?;
        let n = curve.segments();
        let ends = [&grad[0], &grad[n]];
        let dim = self.domain.dimension();
        let mut r = DVector::zeros(2 * (dim - 1));
        let mut rel = T::zero();
        for i in 0..2 {
            let g = ends[i];
            let gn = g.norm();
            if gn == T::zero() {
                return Err(Error::DegenerateCurve("vanishing endpoint gradient".into()));
            }
            let t = bases[i].transpose() * g / gn;
            let q = if i == 0 { curve.start() } else { curve.end() };
            rel = rel.max(self.domain.tangent_project(q, g)?.norm() / gn);
            r.rows_mut(i * (dim - 1), dim - 1).copy_from(&t);
        }
        Ok(Relaxed { report, r, rel })
    }

    fn retract(&self, base: &DVector<T>, basis: &DMatrix<T>, u: &DVector<T>) -> Result<DVector<T>> {
        self.domain.boundary_project(&(base + basis * u))
    }
}

const STAGNATION_WINDOW: usize = 15;

/// Projects `basis` onto the tangent space at `q` and re-orthonormalizes,
/// keeping the orientation continuous along small moves.
fn transport_basis<T: Real>(
    domain: &ImplicitDomain<T>,
    q: &DVector<T>,
    basis: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let mut cols: Vec<DVector<T>> = Vec::with_capacity(basis.ncols());
    for j in 0..basis.ncols() {
        let mut e = domain.tangent_project(q, &basis.column(j).into_owned())?;
        for b in &cols {
            let p = b.dot(&e);
            e -= b * p;
        }
        let norm = e.norm();
        if !(norm > c(1e-6)) {
            return domain.tangent_basis(q);
        }
        cols.push(e / norm);
    }
    Ok(DMatrix::from_columns(&cols))
}

fn diameter_scale<T: Real>(a: &DVector<T>, b: &DVector<T>) -> T {
    (a.norm().max(b.norm()) + (a - b).norm()).max(T::one())
}

/// Finds a chord with free endpoints on the boundary, starting from the
/// boundary points `a` and `b`.
pub fn solve_chord<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    a: &DVector<T>,
    b: &DVector<T>,
    params: &ChordParams<T>,
) -> Result<ChordResult<T>> {
    params.penalty.validate(domain.delta0())?;
    if a.len() != domain.dimension()
        || b.len() != domain.dimension()
        || metric.dimension() != domain.dimension()
    {
        return Err(invalid("dimension mismatch"));
    }
    if domain.dimension() < 2 {
        return Err(invalid("chords need dimension >= 2"));
    }
    let a = domain.boundary_project(a)?;
    let b = domain.boundary_project(b)?;
    let delta = params.penalty.final_delta();
    let scale = diameter_scale(&a, &b);
    if (&a - &b).norm() <= params.merge_tol * scale {
        let mut res = ChordResult::failed(
            DiscreteCurve::constant(&a, params.n)?,
            delta,
            Classification::Constant,
            "seed endpoints coincide".into(),
        );
        res.residual0 = T::zero();
        res.residual1 = T::zero();
        return Ok(res);
    }

    let mut relax_params = params.penalty.clone();
    relax_params.grad_tol = params.relax_grad_tol;
    let problem = EndpointProblem {
        metric,
        domain,
        params,
        relax_params,
    };

    let initial = match problem.initial(&a, &b) {
        Ok(r) => r,
        Err(e) => {
            let seed = chord_seed(domain, &a, &b, params.n)?;
            return Ok(ChordResult::failed(
                seed,
                delta,
                Classification::Unconverged,
                format!("initial relaxation: {e}"),
            ));
        }
    };
    let mut bases = [domain.tangent_basis(&a)?, domain.tangent_basis(&b)?];
    let mut state = problem.evaluate(initial, &bases)?;
    let mut mu: T = c(1e-3);
    let mut notes = Vec::new();
    let mut outer = 0;
    let mut merged = false;
    let seed_len = (&a - &b).norm();
    let mut history = vec![state.rel];

    while state.rel > params.endpoint_tol && outer < params.max_outer {
        if outer >= STAGNATION_WINDOW
            && state.rel > c::<T>(0.5) * history[outer - STAGNATION_WINDOW]
        {
            notes.push(format!("endpoint residual stagnated at {}", state.rel));
            break;
        }
        outer += 1;
        let curve = state.report.final_curve.clone();
        let (pa, pb) = (curve.start().clone(), curve.end().clone());
        let m = state.r.len();
        let half = m / 2;
        let h = params.fd_step * diameter_scale(&pa, &pb);

        // Jacobian of r with respect to tangent coordinates; residuals at
        // moved endpoints are measured in the transported bases.
        let mut jac = DMatrix::zeros(m, m);
        let mut jac_ok = true;
        for j in 0..m {
            let mut u = DVector::zeros(half);
            u[j % half] = h;
            let (na, nb) = if j < half {
                (problem.retract(&pa, &bases[0], &u)?, pb.clone())
            } else {
                (pa.clone(), problem.retract(&pb, &bases[1], &u)?)
            };
            let moved = |q: &DVector<T>, i: usize| transport_basis(domain, q, &bases[i]);
            let eval = problem
                .relax_moved(&curve, &na, &nb)
                .and_then(|rep| problem.evaluate(rep, &[moved(&na, 0)?, moved(&nb, 1)?]));
            match eval {
                Ok(s) => jac.set_column(j, &((&s.r - &state.r) / h)),
                Err(e) => {
                    notes.push(format!("jacobian column {j}: {e}"));
                    jac_ok = false;
                    break;
                }
            }
        }
        if !jac_ok {
            break;
        }

        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &state.r;
        let diag_floor = jtj.diagonal().max() * c(1e-12) + T::EPS;
        let mut accepted = false;
        while mu < c(1e12) {
            let mut lhs = jtj.clone();
            for i in 0..m {
                lhs[(i, i)] += mu * (jtj[(i, i)] + diag_floor);
            }
            let Some(chol) = lhs.cholesky() else {
                mu *= c(4.0);
                continue;
            };
            let mut step = -chol.solve(&jtr);
            let cap = (&pa - &pb).norm() * c(0.25);
            let len = step.norm();
            if len > cap {
                step *= cap / len;
            }
            let ua = step.rows(0, half).into_owned();
            let ub = step.rows(half, half).into_owned();
            let trial = problem
                .retract(&pa, &bases[0], &ua)
                .and_then(|na| Ok((na, problem.retract(&pb, &bases[1], &ub)?)))
                .and_then(|(na, nb)| {
                    if (&na - &nb).norm() <= params.merge_tol * scale {
                        return Err(Error::DegenerateCurve("endpoints merged".into()));
                    }
                    let rep = problem.relax_moved(&curve, &na, &nb)?;
                    let nbases = [
                        transport_basis(domain, &na, &bases[0])?,
                        transport_basis(domain, &nb, &bases[1])?,
                    ];
                    Ok((problem.evaluate(rep, &nbases)?, nbases))
                });
            match trial {
                Ok((s, nbases)) if s.r.norm() < state.r.norm() => {
                    state = s;
                    bases = nbases;
                    mu = (mu / c(3.0)).max(c(1e-9));
                    accepted = true;
                    break;
                }
                Err(Error::DegenerateCurve(_)) => {
                    merged = true;
                    mu *= c(4.0);
                }
                _ => mu *= c(4.0),
            }
        }
        if !accepted {
            notes.push(format!("endpoint step rejected at damping {mu}"));
            break;
        }
        history.push(state.rel);
    }

    let report = state.report;
    let converged = state.rel <= params.endpoint_tol || state.rel <= params.ortho_tol * c(0.1);
    let mut result = finish(metric, domain, report, params, converged)?;
    result.outer_iterations = outer;
    result.endpoint_residual = state.rel;
    let shrunk = (result.start() - result.end()).norm() < c::<T>(0.5) * seed_len;
    if !converged && (merged || shrunk) && state.rel > c(0.5) {
        result.classification = Classification::Constant;
        notes.push("endpoints collapsing towards a point".into());
    }
    result.diagnostics.extend(notes);
    Ok(result)
}

fn finish<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    report: SolverReport<T>,
    params: &ChordParams<T>,
    converged: bool,
) -> Result<ChordResult<T>> {
    let delta = report.delta_used;
    let curve = reparametrize_const_speed(metric, &report.final_curve)
        .unwrap_or(report.final_curve.clone());
    let mut result = chord_result(metric, domain, curve, delta, params)?;
    if !report.converged {
        result.diagnostics.push(format!(
            "interior relaxation stopped at gradient {}",
            report.final_grad_norm
        ));
    }
    // a relaxation stopped by the iteration cap only counts when it still
    // met the looser continuation tolerance
    result.converged =
        converged && (report.converged || report.final_grad_norm <= params.penalty.grad_tol);
    apply_classification(metric, domain, &mut result, params)?;
    Ok(result)
}

/// Wraps a fixed-endpoint solve as a chord result, classified as if its
/// endpoints were free and converged.
pub fn chord_from_report<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    report: &SolverReport<T>,
    params: &ChordParams<T>,
) -> Result<ChordResult<T>> {
    let mut result = chord_result(
        metric,
        domain,
        report.final_curve.clone(),
        report.delta_used,
        params,
    )?;
    apply_classification(metric, domain, &mut result, params)?;
    Ok(result)
}

fn chord_result<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    curve: DiscreteCurve<T>,
    delta: T,
    params: &ChordParams<T>,
) -> Result<ChordResult<T>> {
    let (residual0, residual1) = orthogonality_residual(metric, domain, &curve)?;
    let contact_tol = params.contact_tol();
    let contact_nodes = curve
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, q)| domain.phi(q).abs() <= contact_tol)
        .map(|(k, _)| k)
        .collect();
    Ok(ChordResult {
        energy: energy(metric, &curve)?,
        lambda_profile: lambda_recover(domain, delta, &curve)?,
        residual0,
        residual1,
        contact_nodes,
        classification: Classification::Unconverged,
        converged: true,
        prefix_end: None,
        delta,
        outer_iterations: 0,
        endpoint_residual: T::zero(),
        diagnostics: Vec::new(),
        curve,
    })
}

/// Orthogonal / orthogonal-tangent / touching / constant.
pub fn classify<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    result: &ChordResult<T>,
    params: &ChordParams<T>,
) -> Result<Classification> {
    Ok(classify_with_prefix(metric, domain, result, params)?.0)
}

fn classify_with_prefix<T: Real>(
    _metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    result: &ChordResult<T>,
    params: &ChordParams<T>,
) -> Result<(Classification, Option<usize>)> {
    if !result.converged {
        return Ok((Classification::Unconverged, None));
    }
    if result.energy <= params.value_tolerance(result.energy) {
        return Ok((Classification::Constant, None));
    }
    let n = result.curve.segments();
    let interior: Vec<usize> = result
        .contact_nodes
        .iter()
        .copied()
        .filter(|k| *k > 0 && *k < n)
        .collect();
    if result.residual0 <= params.ortho_tol
        && result.residual1 <= params.ortho_tol
        && interior.is_empty()
    {
        return Ok((Classification::Ofgc, None));
    }
    if result.residual0 <= params.ortho_tol {
        for &k in &interior {
            let q = &result.curve.nodes()[k];
            let v = result.curve.node_velocity(k);
            let normal = domain.unit_normal(q)?;
            if normal.dot(&v).abs() <= params.tangency_tol * v.norm() {
                return Ok((Classification::Otfgc, Some(k)));
            }
        }
    }
    Ok((Classification::BoundaryTouching, None))
}

/// Sets `classification` and `prefix_end` on `result`.
pub fn apply_classification<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    result: &mut ChordResult<T>,
    params: &ChordParams<T>,
) -> Result<()> {
    let (cls, prefix) = classify_with_prefix(metric, domain, result, params)?;
    result.classification = cls;
    result.prefix_end = prefix;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCheck {
    /// `max |lambda_k - formula_k| / (1 + max |lambda|)`.
    pub discrepancy: f64,
    /// Largest formula value; should not be positive.
    pub max_formula: f64,
    pub nodes: Vec<usize>,
    pub formula: Vec<f64>,
    pub recovered: Vec<f64>,
}

/// Nodes where the penalty is active (`phi > 0`), minus the first and
/// last node of every such run, where the discrete curve enters or leaves
/// the layer and the level-set balance does not hold.
pub fn active_contact_nodes<T: Real>(
    domain: &ImplicitDomain<T>,
    curve: &DiscreteCurve<T>,
) -> Vec<usize> {
    let n = curve.segments();
    let active: Vec<bool> = curve
        .nodes()
        .iter()
        .map(|q| domain.phi(q) > T::zero())
        .collect();
    (1..n)
        .filter(|&k| active[k] && active[k - 1] && active[k + 1])
        .collect()
}

/// Compares the recovered multiplier with `H_phi(q, v) / (grad phi . g^{-1} grad phi)`
/// at the active contact nodes.
pub fn lambda_verify<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    result: &ChordResult<T>,
) -> Result<LambdaCheck> {
    let nodes = active_contact_nodes(domain, &result.curve);
    if nodes.is_empty() || result.lambda_profile.is_empty() {
        return Err(Error::NoContact);
    }
    let max_lambda = result
        .lambda_profile
        .iter()
        .fold(T::zero(), |m, l| m.max(l.abs()));
    let mut formula = Vec::with_capacity(nodes.len());
    let mut recovered = Vec::with_capacity(nodes.len());
    let mut worst = T::zero();
    let mut max_formula = -T::max_value().unwrap_or_else(|| c(f64::MAX));
    for &k in &nodes {
        let q = &result.curve.nodes()[k];
        let v = result.curve.node_velocity(k);
        let h = finsler_hessian(metric, domain, q, &v)?;
        let g = metric.fundamental_tensor(q, &v)?;
        let grad = domain.grad_phi(q);
        let ginv_grad = g
            .cholesky()
            .ok_or_else(|| {
                Error::MetricDegenerate("fundamental tensor not positive definite".into())
            })?
            .solve(&grad);
        let f = h / grad.dot(&ginv_grad);
        let l = result.lambda_profile[k];
        worst = worst.max((f - l).abs());
        max_formula = max_formula.max(f);
        formula.push(f.to_f64_lossy());
        recovered.push(l.to_f64_lossy());
    }
    Ok(LambdaCheck {
        discrepancy: (worst / (T::one() + max_lambda)).to_f64_lossy(),
        max_formula: max_formula.to_f64_lossy(),
        nodes,
        formula,
        recovered,
    })
}

/// Union-find closure of the identification relation; keeps the lowest
/// energy representative of each class. Inputs must be constant-speed
/// normalized.
pub fn geometric_dedup<T: Real>(
    metric: &MetricSpec<T>,
    results: &[ChordResult<T>],
    reversible: bool,
    dedup_tol: T,
) -> Result<Vec<ChordResult<T>>> {
    let tol: T = c(1e-6);
    for r in results {
        if !r.curve.is_constant() && crate::curve::speed_variation(metric, &r.curve)? > tol {
            return Err(invalid("dedup needs constant-speed normalized curves"));
        }
    }
    let classes = dedup_classes(results, reversible, dedup_tol)?;
    Ok(classes
        .into_iter()
        .map(|members| {
            members
                .into_iter()
                .min_by(|a, b| {
                    results[*a]
                        .energy
                        .partial_cmp(&results[*b].energy)
                        .unwrap_or(Ordering::Equal)
                })
                .map(|i| results[i].clone())
                .expect("classes are non-empty")
        })
        .collect())
}

/// Equivalence classes (indices) under the identification relation.
pub fn dedup_classes<T: Real>(
    results: &[ChordResult<T>],
    reversible: bool,
    dedup_tol: T,
) -> Result<Vec<Vec<usize>>> {
    let n = results.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if identified(&results[i], &results[j], reversible, dedup_tol)? {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = ri.min(rj);
                }
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = classes.len();
            classes.push(Vec::new());
        }
        classes[slot[r]].push(i);
    }
    Ok(classes)
}

fn identified<T: Real>(
    a: &ChordResult<T>,
    b: &ChordResult<T>,
    reversible: bool,
    tol: T,
) -> Result<bool> {
    if a.curve.segments() != b.curve.segments() {
        return Ok(false);
    }
    if star_dist(&a.curve, &b.curve)? <= tol {
        return Ok(true);
    }
    Ok(reversible && star_dist(&a.curve, &b.curve.reverse())? <= tol)
}

/// Pairs of distinct classes that trace the same image in opposite
/// directions (possible only for non-reversible metrics).
pub fn image_coincidences<T: Real>(
    distinct: &[ChordResult<T>],
    tol: T,
) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for i in 0..distinct.len() {
        for j in i + 1..distinct.len() {
            let (a, b) = (&distinct[i].curve, &distinct[j].curve);
            if a.segments() == b.segments() && star_dist(a, &b.reverse())? <= tol {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SearchReport<T: Real> {
    pub all_results: Vec<ChordResult<T>>,
    pub distinct: Vec<ChordResult<T>>,
    pub critical_values: Vec<T>,
    pub expected_count: usize,
    pub reversible: bool,
    /// Five or more distinct chords share one critical value.
    pub degenerate: bool,
    /// Index pairs into `distinct` with the same image, reversed.
    pub image_coincidences: Vec<(usize, usize)>,
    /// Seed pairs (grid indices) whose solve returned an error.
    pub failures: Vec<(usize, usize, String)>,
    pub seeds: Vec<(usize, usize)>,
}

impl<T: Real> SearchReport<T> {
    pub fn meets_expected_count(&self) -> bool {
        self.degenerate || self.distinct.len() >= self.expected_count
    }
}

/// Sorted energies merged within `value_tol * (1 + value)`.
pub fn merge_values<T: Real>(mut values: Vec<T>, value_tol: T) -> Vec<T> {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut out: Vec<T> = Vec::new();
    for v in values {
        match out.last() {
            Some(last) if (v - *last).abs() <= value_tol * (T::one() + last.abs()) => {}
            _ => out.push(v),
        }
    }
    out
}

fn lex_cmp<T: Real>(a: &DVector<T>, b: &DVector<T>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn result_order<T: Real>(a: &ChordResult<T>, b: &ChordResult<T>) -> Ordering {
    a.energy
        .partial_cmp(&b.energy)
        .unwrap_or(Ordering::Equal)
        .then_with(|| lex_cmp(a.start(), b.start()))
        .then_with(|| lex_cmp(a.end(), b.end()))
}

/// Solves from every pair of a uniform boundary grid (unordered pairs when
/// `metric` is declared reversible) and collects distinct chords.
pub fn multistart_search<T: Real>(
    metric: &MetricSpec<T>,
    domain: &ImplicitDomain<T>,
    boundary_grid_size: usize,
    params: &ChordParams<T>,
    seed: u64,
) -> Result<SearchReport<T>> {
    if boundary_grid_size < 2 {
        return Err(invalid("boundary grid needs at least 2 points"));
    }
    params.penalty.validate(domain.delta0())?;
    let grid = crate::curve::boundary_grid(domain, boundary_grid_size, seed)?;
    let reversible = metric.declared_reversible();
    let mut seeds = Vec::new();
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            if i != j && (!reversible || i < j) {
                seeds.push((i, j));
            }
        }
    }
    let outcomes: Vec<Result<ChordResult<T>>> = seeds
        .par_iter()
        .map(|&(i, j)| solve_chord(metric, domain, &grid[i], &grid[j], params))
        .collect();
    let mut all_results = Vec::new();
    let mut failures = Vec::new();
    for (&(i, j), out) in seeds.iter().zip(outcomes) {
        match out {
            Ok(r) => all_results.push(r),
            Err(e) => failures.push((i, j, e.to_string())),
        }
    }
    all_results.sort_by(result_order);

    let chords: Vec<ChordResult<T>> = all_results
        .iter()
        .filter(|r| r.classification.is_chord())
        .cloned()
        .collect();
    let mut distinct = geometric_dedup(metric, &chords, reversible, params.dedup_tol)?;
    distinct.sort_by(result_order);
    let critical_values = merge_values(
        distinct.iter().map(|r| r.energy).collect(),
        params.value_tol,
    );
    let degenerate = critical_values.iter().any(|v| {
        distinct
            .iter()
            .filter(|r| (r.energy - *v).abs() <= params.value_tolerance(*v))
            .count()
            >= 5
    });
    let image_coincidences = if reversible {
        Vec::new()
    } else {
        image_coincidences(&distinct, params.dedup_tol)?
    };
    Ok(SearchReport {
        expected_count: if reversible { domain.dimension() } else { 2 },
        all_results,
        distinct,
        critical_values,
        reversible,
        degenerate,
        image_coincidences,
        failures,
        seeds,
    })
}

/// Distinct critical values of a search, plus a warning when the smallest
/// falls below the estimated lower threshold `delta_m`.
pub fn critical_value_report<T: Real>(
    report: &SearchReport<T>,
    value_tol: T,
    delta_m: Option<T>,
) -> Result<(Vec<T>, Option<String>)> {
    if report.distinct.is_empty() {
        return Err(invalid("no distinct chords to report"));
    }
    let values = merge_values(
        report.distinct.iter().map(|r| r.energy).collect(),
        value_tol,
    );
    let warning = match (delta_m, values.first()) {
        (Some(dm), Some(v0)) if *v0 < dm => Some(format!(
            "smallest critical value {v0} below delta_m estimate {dm}"
        )),
        _ => None,
    };
    Ok((values, warning))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn ball() -> ImplicitDomain<f64> {
        ImplicitDomain::unit_ball(2, 0.25).unwrap()
    }

    #[test]
    fn residual_of_diameter_and_offset_chord() {
        let e = MetricSpec::euclidean(2);
        let d = DiscreteCurve::straight(&v2(-1.0, 0.0), &v2(1.0, 0.0), 64).unwrap();
        let (r0, r1) = orthogonality_residual(&e, &ball(), &d).unwrap();
        assert!(r0 < 1e-8 && r1 < 1e-8);
        // chord at distance 1/2 from the center: the residual is the sine
        // of the angle between chord and radius, |sin| = 1/2
        let h = 0.75f64.sqrt();
        let off = DiscreteCurve::straight(&v2(-h, 0.5), &v2(h, 0.5), 64).unwrap();
        let (r0, r1) = orthogonality_residual(&e, &ball(), &off).unwrap();
        assert_relative_eq!(r0, 0.5, epsilon = 1e-10);
        assert_relative_eq!(r1, 0.5, epsilon = 1e-10);
        let inside = DiscreteCurve::straight(&v2(-0.5, 0.0), &v2(1.0, 0.0), 64).unwrap();
        assert!(matches!(
            orthogonality_residual(&e, &ball(), &inside),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn randers_diameter_is_orthogonal_both_ways() {
        let r = MetricSpec::randers_euclidean(v2(1.0 / 3.0, 0.0)).unwrap();
        let half = ImplicitDomain::ball(DVector::zeros(2), 0.5, 0.1).unwrap();
        let d = DiscreteCurve::straight(&v2(-0.5, 0.0), &v2(0.5, 0.0), 64).unwrap();
        for c in [d.clone(), d.reverse()] {
            let (r0, r1) = orthogonality_residual(&r, &half, &c).unwrap();
            assert!(r0 < 1e-10 && r1 < 1e-10);
        }
    }

    #[test]
    fn generic_seed_converges_to_a_diameter() {
        let e = MetricSpec::euclidean(2);
        let p = ChordParams::default_for(0.25, 64);
        let a = v2(0.3f64.cos(), 0.3f64.sin());
        let b = v2(2.0f64.cos(), 2.0f64.sin());
        let res = solve_chord(&e, &ball(), &a, &b, &p).unwrap();
        assert_eq!(
            res.classification,
            Classification::Ofgc,
            "{:?}",
            res.diagnostics
        );
        assert!((res.start() + res.end()).norm() < 1e-4);
        assert_relative_eq!(res.energy, 2.0, epsilon = 1e-3);
        assert!(res.lambda_profile.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn coincident_seed_is_constant() {
        let e = MetricSpec::euclidean(2);
        let p = ChordParams::default_for(0.25, 64);
        let res = solve_chord(&e, &ball(), &v2(1.0, 0.0), &v2(1.0, 0.0), &p).unwrap();
        assert_eq!(res.classification, Classification::Constant);
    }

    #[test]
    fn merge_values_contract() {
        assert_eq!(merge_values(vec![2.0, 8.0, 2.0005], 1e-3), vec![2.0, 8.0]);
        assert_eq!(merge_values(vec![1.0], 1e-3), vec![1.0]);
    }

    #[test]
    fn rotated_diameters_are_distinct() {
        let e = MetricSpec::euclidean(2);
        let p = ChordParams::default_for(0.25, 32);
        let mk = |t: f64| {
            let a = v2(-t.cos(), -t.sin());
            let curve = DiscreteCurve::straight(&a, &(-&a), 32).unwrap();
            chord_result(&e, &ball(), curve, 0.25 / 64.0, &p).unwrap()
        };
        let rs = vec![mk(0.0), mk(0.2)];
        assert_eq!(geometric_dedup(&e, &rs, true, 1e-3).unwrap().len(), 2);
        let rs = vec![mk(0.0), mk(std::f64::consts::PI)];
        assert_eq!(geometric_dedup(&e, &rs, true, 1e-2).unwrap().len(), 1);
        assert_eq!(geometric_dedup(&e, &rs, false, 1e-2).unwrap().len(), 2);
    }

    // Straight line from the left lobe, orthogonal there, tangent to the
    // concave neck at P and continuing into the right lobe.
    fn neck_grazing_line(pea: &ImplicitDomain<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let exit = |p: &DVector<f64>, dir: &DVector<f64>| {
            let (mut lo, mut hi) = (1e-3, 1e-3);
            while pea.phi(&(p + dir * hi)) < 0.0 || hi < 0.05 {
                if pea.phi(&(p + dir * hi)) < 0.0 {
                    lo = hi;
                }
                hi += 1e-3;
            }
            for _ in 0..80 {
                let m = 0.5 * (lo + hi);
                if pea.phi(&(p + dir * m)) < 0.0 {
                    lo = m
                } else {
                    hi = m
                }
            }
            pea.boundary_project(&(p + dir * hi)).unwrap()
        };
        let line = |th: f64| {
            let p = pea
                .radial_level_point(&v2(th.cos(), th.sin()), 0.0)
                .unwrap();
            let n = pea.unit_normal(&p).unwrap();
            let dir = v2(-n[1], n[0]);
            let a = exit(&p, &dir);
            let na = pea.unit_normal(&a).unwrap();
            (na[0] * dir[1] - na[1] * dir[0], p, a, -dir)
        };
        let (mut lo, mut hi) = (60f64.to_radians(), 75f64.to_radians());
        assert!(line(lo).0 * line(hi).0 < 0.0);
        for _ in 0..60 {
            let m = 0.5 * (lo + hi);
            if line(m).0 * line(lo).0 > 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        let (_, p, a, dir) = line(0.5 * (lo + hi));
        let b = exit(&p, &dir);
        (a, p, b)
    }

    #[test]
    fn neck_grazing_chord_is_orthogonal_tangent() {
        let e = MetricSpec::euclidean(2);
        let pea = ImplicitDomain::peanut(2, 1.0, 1.05, 0.02).unwrap();
        let (a, p, b) = neck_grazing_line(&pea);
        assert!(finsler_hessian(&e, &pea, &p, &(&b - &a)).unwrap() < 0.0);
        let k = 40;
        let h = (&p - &a) / k as f64;
        let mut nodes: Vec<DVector<f64>> = (0..=k).map(|i| &a + &h * i as f64).collect();
        let mut q = &p + &h;
        while pea.phi(&(&q + &h)) < 0.0 {
            nodes.push(q.clone());
            q += &h;
        }
        nodes.push(b.clone());
        let curve = DiscreteCurve::new(nodes).unwrap();
        let params = ChordParams::default_for(0.02, 64);
        let mut res = chord_result(&e, &pea, curve, params.penalty.final_delta(), &params).unwrap();
        assert!(res.residual0 < 1e-6);
        apply_classification(&e, &pea, &mut res, &params).unwrap();
        assert_eq!(res.classification, Classification::Otfgc);
        assert_eq!(res.prefix_end, Some(k));
        let prefix = res.prefix().unwrap();
        assert!((prefix.end() - &p).norm() < 1e-12);
        let normal = pea.unit_normal(&p).unwrap();
        let v = res.curve.node_velocity(k);
        assert!(normal.dot(&v).abs() / v.norm() <= 1e-3);
    }
}
