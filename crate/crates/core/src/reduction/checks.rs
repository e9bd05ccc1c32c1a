use nalgebra::DMatrix;

use super::{level_set_samples, ReducedSystem};
use crate::dynamics::{integrate, ChartSystem, Monitors, VectorField};
use crate::error::Result;
use crate::geometry::{canonical_matrix, max_abs, max_abs_diff, TangentPoint};
use crate::report::Check;

const COMMUTE: &str = "T tau_mu . X = X_mu . tau_mu on J_L^-1(mu)";
const COMMUTE_FLOW: &str = "tau_mu . Fl_t = Fl^mu_t . tau_mu";
const RED_PULLBACK: &str = "(FL)_mu^* omega_mu = Omega_mu";
const RED_DIAGRAM: &str = "(FL)_mu . tau_mu = pi_mu . FL";
const ORBIT_CORRECTION: &str = "(J_L)^* omega^+ vanishes on O_mu";
const SECTION: &str = "reduced data independent of the section";

fn push_worst(worst: &mut f64, witness: &mut Vec<f64>, r: f64, at: &TangentPoint) {
    let r = if r.is_nan() { f64::INFINITY } else { r };
    if r > *worst || witness.is_empty() {
        *worst = worst.max(r);
        *witness = at.state();
    }
}

fn finish(id: &str, identity: &str, worst: f64, tol: f64, samples: usize, witness: Vec<f64>) -> Check {
    let c = Check::residual(id, identity, worst, tol, samples);
    if c.failed() {
        c.with_witness(witness)
    } else {
        c
    }
}

/// `‖X_μ(τ z) − Tτ X(z)‖` over level-set samples, where `X` is the parent
/// controlled field and `X_μ` the reduced one.
pub fn check_commutation(red: &ReducedSystem, samples: usize, seed: u64, tol: f64) -> Result<Check> {
    let field = red.parent().field();
    let rfield = red.field();
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for z in level_set_samples(red, samples, seed)? {
        let up = red.section().project_vector(&field.eval(&z)?);
        let down = rfield.eval(&red.section().project(&z))?;
        push_worst(&mut worst, &mut witness, max_abs((down.components() - up.components()).iter().copied()), &z);
    }
    Ok(finish("commutation", COMMUTE, worst, tol, samples, witness))
}

/// Flow version: integrate both fields for `t1` and compare after `τ_μ`.
/// Only for unforced, uncontrolled parents, whose flow stays on the level
/// set.
pub fn check_flow_commutation(red: &ReducedSystem, samples: usize, seed: u64, t1: f64, h: f64, tol: f64) -> Result<Check> {
    let parent = red.parent();
    if !parent.force.is_zero() || parent.law.is_some() {
        return Ok(Check::not_applicable(
            "commutation-flow",
            COMMUTE_FLOW,
            "forced or controlled flow need not stay on the level set",
        ));
    }
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for z in level_set_samples(red, samples, seed)? {
        let up_mon = Monitors {
            space: Some(parent.sys.space()),
            ..Monitors::default()
        };
        let down_mon = Monitors {
            space: Some(red.space()),
            ..Monitors::default()
        };
        let up = integrate(&parent.field(), &z, t1, h, up_mon)?;
        let down = integrate(&red.field(), &red.section().project(&z), t1, h, down_mon)?;
        let (Some(a), Some(b)) = (up.last(), down.last()) else {
            continue;
        };
        let pa = red.section().project(a);
        push_worst(&mut worst, &mut witness, max_abs_diff(&pa.state(), &b.state()), &z);
    }
    Ok(finish("commutation-flow", COMMUTE_FLOW, worst, tol, samples, witness))
}

/// The reduced Legendre map pulls the canonical form back to `Ω_μ`, and
/// commutes with the projections; for orbit reductions the correction term
/// is checked as well.
pub fn check_reduced_legendre(red: &ReducedSystem, samples: usize, seed: u64, tol: f64) -> Result<Vec<Check>> {
    let s = red.dof();
    let omega0 = canonical_matrix(s);
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for x in red.space().samples(samples, seed) {
        let r: DMatrix<f64> = red.legendre_jacobian(&x)?;
        let lhs = r.transpose() * &omega0 * &r;
        let rhs = red.two_form(&x)?.matrix;
        push_worst(&mut worst, &mut witness, max_abs((lhs - rhs).iter().copied()), &x);
    }
    let pull = finish("reduced-legendre-pullback", RED_PULLBACK, worst, tol, samples, witness);

    let shape = &red.section().shape;
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for z in level_set_samples(red, samples, seed)? {
        let alpha = red.parent().sys.legendre_transform(&z)?;
        let projected: Vec<f64> = shape
            .iter()
            .map(|&i| alpha.q[i])
            .chain(shape.iter().map(|&i| alpha.p[i]))
            .collect();
        let down = red.legendre(&red.section().project(&z))?.state();
        push_worst(&mut worst, &mut witness, max_abs_diff(&down, &projected), &z);
    }
    let diagram = finish("reduced-legendre-diagram", RED_DIAGRAM, worst, tol, samples, witness);

    let mut out = vec![pull, diagram];
    if let Some(cert) = red.orbit_certificate() {
        out.push(Check::residual("orbit-correction", ORBIT_CORRECTION, cert.max_correction, tol, samples));
    }
    Ok(out)
}

/// Compare `l_μ`, `E_{l_μ}`, `Ω_μ` and the reduced field against the same
/// reduction through another section.
pub fn check_section_independence(
    red: &ReducedSystem,
    other: &ReducedSystem,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for x in red.space().samples(samples, seed) {
        let mut d = (red.reduced_lagrangian(&x)? - other.reduced_lagrangian(&x)?).abs();
        d = d.max((red.energy(&x)? - other.energy(&x)?).abs());
        d = d.max(max_abs((red.two_form(&x)?.matrix - other.two_form(&x)?.matrix).iter().copied()));
        d = d.max(max_abs(
            (red.field().eval(&x)?.components() - other.field().eval(&x)?.components())
                .iter()
                .copied(),
        ));
        push_worst(&mut worst, &mut witness, d, &x);
    }
    Ok(finish("section-independence", SECTION, worst, tol, samples, witness))
}
