//! Reduced control-Lagrangian equivalence and the upstairs/downstairs
//! theorem harness.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{level_set_member, level_set_samples, orbit_reduce, point_reduce, ReduceOptions, ReducedSystem};
use crate::control::{control_match_solve, RclSystem};
use crate::dynamics::{ChartSystem, EulerLagrangeField, VectorField};
use crate::error::{Error, Result};
use crate::geometry::{max_abs, ConfigSpace, DoubleTangentVector, PointMap, TangentPoint};
use crate::report::Check;
use crate::symmetry::{coadjoint_plus_form, SymmetrySpec};

const LEVEL: &str = "T phi (J_1^-1(mu_1)) in J_2^-1(mu_2)";
const EQUIV: &str = "T phi . Phi^1_g = Phi^2_g' . T phi";
const SUBSET: &str = "T phi (C_1 n J_1^-1(mu_1)) = C_2 n J_2^-1(mu_2)";
const FIELD: &str = "xi_2 . T phi = T(T phi) . xi_1 on J_1^-1(mu_1)";
const PLUS: &str = "(J_1)^* omega^+ = (T phi)^* (J_2)^* omega^+";
const SYMPLECTIC: &str = "(T phi)^* omega^L2 = omega^L1";
const LAG_FIELD: &str = "xi_L2 . T phi = T(T phi) . xi_L1";
const RED_WELL_DEFINED: &str = "(T phi)_mu = tau_2 . T phi . sigma_1 is well defined";
const RED_SUBSET: &str = "C_2mu = (T phi)_mu (C_1mu)";
const RED_FIELD: &str = "xi_2mu . (T phi)_mu = T(T phi)_mu . xi_1mu";
const RED_SYMPLECTIC: &str = "(T phi)_mu^* Omega_2mu = Omega_1mu";
const RED_LAG_FIELD: &str = "xi_l2mu . (T phi)_mu = T(T phi)_mu . xi_l1mu";
const AGREE: &str = "upstairs verdict = downstairs verdict";

struct Worst {
    value: f64,
    witness: Vec<f64>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: 0.0,
            witness: Vec::new(),
        }
    }

    fn push(&mut self, r: f64, at: &TangentPoint) {
        let r = if r.is_nan() { f64::INFINITY } else { r };
        if r > self.value || self.witness.is_empty() {
            self.value = self.value.max(r);
            self.witness = at.state();
        }
    }

    fn check(self, id: &str, identity: &str, tol: f64, samples: usize) -> Check {
        let c = Check::residual(id, identity, self.value, tol, samples);
        if c.failed() {
            c.with_witness(self.witness)
        } else {
            c
        }
    }
}

fn diff_norm(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    max_abs((a - b).iter().copied())
}

/// Distance between positions, measuring periodic coordinates modulo 2π.
fn position_distance(space: &ConfigSpace, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(space.periodic())
        .map(|((x, y), &per)| {
            let d = x - y;
            if per {
                let m = d.rem_euclid(TAU);
                m.min(TAU - m)
            } else {
                d.abs()
            }
        })
        .fold(0.0, f64::max)
}

fn tangent_distance(space: &ConfigSpace, a: &TangentPoint, b: &TangentPoint) -> f64 {
    let dq = position_distance(space, &a.q, &b.q);
    let dv = a.qdot.iter().zip(&b.qdot).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    dq.max(dv)
}

/// `(Tφ)_μ(x) = τ₂(Tφ(σ₁(x)))`, its Jacobian `P₂ J_{Tφ} Tσ₁`, and
/// `|J₂(Tφ σ₁ x) − μ₂|`.
pub fn induced_map(
    a: &ReducedSystem,
    b: &ReducedSystem,
    map: &PointMap,
    x: &TangentPoint,
) -> Result<(TangentPoint, DMatrix<f64>, f64)> {
    let (z, t, _) = a.lift_jacobian(x)?;
    let w = map.tangent_lift(&z)?;
    let jt = map.tangent_lift_jacobian(&z)?;
    let full = jt * t;
    let rows = b.section().shape_rows();
    let j = DMatrix::from_fn(rows.len(), full.ncols(), |r, c| full[(rows[r], c)]);
    let jb = b.spec().momentum_lagrangian(&b.parent().sys, &w)?;
    let defect = max_abs(jb.iter().zip(b.mu()).map(|(x, m)| x - m));
    Ok((b.section().project(&w), j, defect))
}

/// Reduced-level RCL equivalence under `(Tφ)_μ`: well-definedness, subset
/// correspondence and field relatedness.
pub fn check_reduced_rcl_equivalence(
    a: &ReducedSystem,
    b: &ReducedSystem,
    map: &PointMap,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<Check>> {
    let inv = map.inverse()?;
    let xs = a.space().samples(samples, seed);
    let mut defined = Worst::new();
    let mut field = Worst::new();
    let mut subset = Worst::new();
    let subsets_match = match (a.subset(), b.subset()) {
        (None, None) => Some(true),
        (Some(sa), Some(sb)) if sa.actuated.len() == sb.actuated.len() => Some(true),
        (Some(sa), None) if sa.actuated.is_empty() => Some(true),
        (None, Some(sb)) if sb.actuated.is_empty() => Some(true),
        _ => Some(false),
    };
    for x in &xs {
        let (y, j, defect) = induced_map(a, b, map, x)?;
        defined.push(defect, x);
        let xi_a = a.field().eval(x)?;
        let pushed = &j * xi_a.components();
        let r = if b.parent().law.is_some() {
            diff_norm(&b.field().eval(&y)?.components(), &pushed)
        } else {
            reduced_match_defect(b, &y, &pushed)?
        };
        field.push(r, x);

        if let (Some(sa), Some(sb)) = (a.subset(), b.subset()) {
            if sa.actuated.len() == sb.actuated.len() && a.parent().subset.is_some() {
                let member = reduced_member(a, x, 0.5)?;
                let (img, _, _) = induced_map(a, b, map, &TangentPoint::new(x.q.clone(), member))?;
                let fwd = b.reduced_membership_defect(&y, &img.qdot)?.unwrap_or(0.0);
                let member_b = reduced_member(b, &y, -0.5)?;
                let (back, _, _) = induced_map(b, a, &inv, &TangentPoint::new(y.q.clone(), member_b))?;
                let bwd = a.reduced_membership_defect(x, &back.qdot)?.unwrap_or(0.0);
                subset.push(fwd.max(bwd), x);
            }
        }
    }
    let subset_check = if subsets_match == Some(false) {
        Check::verdict("reduced-RCL-1", RED_SUBSET, false, samples).with_note("reduced actuated dimensions differ")
    } else {
        subset.check("reduced-RCL-1", RED_SUBSET, tol, samples)
    };
    Ok(vec![
        defined.check("reduced-map", RED_WELL_DEFINED, tol, samples),
        subset_check,
        field.check("reduced-RCL-2", RED_FIELD, tol, samples),
    ])
}

/// A member of `C_μ(x)`: the offset plus a fixed fraction of each bound.
fn reduced_member(red: &ReducedSystem, x: &TangentPoint, frac: f64) -> Result<Vec<f64>> {
    let (Some(rs), Some(c)) = (red.subset(), &red.parent().subset) else {
        return Ok(x.qdot.clone());
    };
    let z = red.lift(x)?;
    let c0 = c.offset.value(&z)?;
    let mut w: Vec<f64> = red.section().shape.iter().map(|&i| c0[i]).collect();
    for (k, &j) in rs.actuated.iter().enumerate() {
        let (lo, hi) = rs.bounds[k];
        let (lo, hi) = (lo.max(-1.0), hi.min(1.0));
        w[j] += 0.5 * (lo + hi) + frac * 0.5 * (hi - lo);
    }
    Ok(w)
}

/// Vertical and off-support defect of the correction that would make `b`
/// reproduce the pushed field at `y`.
fn reduced_match_defect(b: &ReducedSystem, y: &TangentPoint, pushed: &DVector<f64>) -> Result<f64> {
    let (xi, f, _) = b.field_parts(y)?;
    let s = b.dof();
    let mut corr = pushed - xi.plus(&f).components();
    let vertical = max_abs(corr.rows(0, s).iter().copied());
    if let Some(c) = &b.parent().subset {
        let (_, jc) = b.reduced_fiber_jet(&c.offset, y)?;
        let lift = jc * xi.components();
        for i in 0..s {
            corr[s + i] -= lift[i];
        }
    }
    let actuated = b.subset().map(|r| r.actuated.clone()).unwrap_or_default();
    let support = (0..s)
        .filter(|i| !actuated.contains(i))
        .map(|i| corr[s + i].abs())
        .fold(0.0, f64::max);
    Ok(vertical.max(support))
}

/// Upstairs RpCL (or RoCL) equivalence on level-set samples of `a`.
pub fn check_rpcl_equivalence(
    a: &ReducedSystem,
    b: &ReducedSystem,
    map: &PointMap,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<Check>> {
    let inv = map.inverse()?;
    let (pa, pb) = (a.parent(), b.parent());
    let space_b = pb.sys.space();
    let points = level_set_samples(a, samples, seed)?;

    let mut level = Worst::new();
    for z in &points {
        let w = map.tangent_lift(z)?;
        let jb = b.spec().momentum_lagrangian(&pb.sys, &w)?;
        level.push(max_abs(jb.iter().zip(b.mu()).map(|(x, m)| x - m)), z);
    }

    let mut equiv = Worst::new();
    let q_ref = pa.sys.space().center().q;
    let phi_ref = map.apply(&q_ref)?;
    let cyclic_b = b.section().cyclic.clone();
    let gs = a.spec().sample_elements(samples, seed ^ 0xe9);
    for (z, g) in points.iter().zip(&gs) {
        let shifted = a.spec().act(g, &TangentPoint::new(q_ref.clone(), vec![0.0; q_ref.len()]), pa.sys.space())?;
        let delta: Vec<f64> = map.apply(&shifted.q)?.iter().zip(&phi_ref).map(|(x, y)| x - y).collect();
        let off_cyclic = delta
            .iter()
            .enumerate()
            .filter(|(i, _)| !cyclic_b.contains(i))
            .map(|(_, d)| d.abs())
            .fold(0.0, f64::max);
        let g2: Vec<f64> = cyclic_b.iter().map(|&c| delta[c]).collect();
        let lhs = map.tangent_lift(&a.spec().act(g, z, pa.sys.space())?)?;
        let rhs = b.spec().act(&g2, &map.tangent_lift(z)?, space_b)?;
        equiv.push(tangent_distance(space_b, &lhs, &rhs).max(off_cyclic), z);
    }

    let mut subset = Worst::new();
    let mut subset_note = None;
    match (&pa.subset, &pb.subset) {
        (None, None) => subset_note = Some("no control subsets"),
        (Some(c1), Some(c2)) if c1.actuated.len() == c2.actuated.len() => {
            for z in &points {
                let w = map.tangent_lift(z)?;
                let fwd = match level_set_member(pa, a.section(), z, tol)? {
                    Some(m) => {
                        let img = map.tangent_lift(&TangentPoint::new(z.q.clone(), m))?;
                        let jb = b.spec().momentum_lagrangian(&pb.sys, &img)?;
                        let dj = max_abs(jb.iter().zip(b.mu()).map(|(x, m)| x - m));
                        c2.membership_defect(&w, &img.qdot)?.max(dj)
                    }
                    None => f64::INFINITY,
                };
                let bwd = match level_set_member(pb, b.section(), &w, tol)? {
                    Some(m) => {
                        let back = inv.tangent_lift(&TangentPoint::new(w.q.clone(), m))?;
                        c1.membership_defect(z, &back.qdot)?
                    }
                    None => f64::INFINITY,
                };
                subset.push(fwd.max(bwd), z);
            }
        }
        _ => subset.push(f64::INFINITY, &points[0]),
    }
    let mut subset_check = subset.check("RpCL-1-subset", SUBSET, tol, samples);
    if let Some(n) = subset_note {
        subset_check = subset_check.with_note(n);
    }

    let mut field = Worst::new();
    for z in &points {
        let r = if pb.law.is_some() {
            let lhs = pb.field().eval(&map.tangent_lift(z)?)?;
            let rhs = map.double_tangent_lift(&pa.field().eval(z)?)?;
            diff_norm(&lhs.components(), &rhs.components())
        } else {
            let m = control_match_solve(pa, pb, map, z, tol)?;
            if m.realizable {
                0.0
            } else {
                m.vertical_defect.max(m.support_defect)
            }
        };
        field.push(r, z);
    }

    let mut out = vec![
        level.check("RpCL-1-level", LEVEL, tol, samples),
        equiv.check("RpCL-1-equivariance", EQUIV, tol, samples),
        subset_check,
        field.check("RpCL-2", FIELD, tol, samples),
    ];
    if a.orbit_certificate().is_some() || b.orbit_certificate().is_some() {
        out.push(plus_form_check(a, b, map, &points, tol)?);
    }
    Ok(out)
}

/// `ω⁺(J(z))(dJ u, dJ v)` on tangent vectors of the level set, compared
/// with the same quantity for the images under `T(Tφ)`.
fn plus_form_check(a: &ReducedSystem, b: &ReducedSystem, map: &PointMap, points: &[TangentPoint], tol: f64) -> Result<Check> {
    let mut worst = Worst::new();
    let (pa, pb) = (a.parent(), b.parent());
    for z in points {
        let x = a.section().project(z);
        let (_, t, _) = a.lift_jacobian(&x)?;
        let jt = map.tangent_lift_jacobian(z)?;
        let w = map.tangent_lift(z)?;
        let nu_a = a.spec().momentum_lagrangian(&pa.sys, z)?;
        let nu_b = b.spec().momentum_lagrangian(&pb.sys, &w)?;
        let cols = t.ncols();
        let mut r: f64 = 0.0;
        for i in 0..cols {
            for j in 0..cols {
                let ui = DoubleTangentVector::from_components(z.clone(), &t.column(i).into_owned());
                let uj = DoubleTangentVector::from_components(z.clone(), &t.column(j).into_owned());
                let vi = DoubleTangentVector::from_components(w.clone(), &(&jt * t.column(i)));
                let vj = DoubleTangentVector::from_components(w.clone(), &(&jt * t.column(j)));
                let da_i = a.spec().momentum_rate(&pa.sys, &ui)?;
                let da_j = a.spec().momentum_rate(&pa.sys, &uj)?;
                let db_i = b.spec().momentum_rate(&pb.sys, &vi)?;
                let db_j = b.spec().momentum_rate(&pb.sys, &vj)?;
                let lhs = coadjoint_plus_form(a.spec(), &nu_a, &da_i, &da_j);
                let rhs = coadjoint_plus_form(b.spec(), &nu_b, &db_i, &db_j);
                r = r.max((lhs - rhs).abs());
            }
        }
        worst.push(r, z);
    }
    Ok(worst.check("RoCL-correction", PLUS, tol, points.len()))
}

/// Upstairs Lagrangian equivalence (Tφ symplectic, fields related) on
/// level-set samples.
fn check_lagrangian_upstairs(a: &ReducedSystem, b: &ReducedSystem, map: &PointMap, samples: usize, seed: u64, tol: f64) -> Result<Vec<Check>> {
    let (pa, pb) = (a.parent(), b.parent());
    let points = level_set_samples(a, samples, seed)?;
    let mut level = Worst::new();
    let mut sym = Worst::new();
    let mut field = Worst::new();
    for z in &points {
        let w = map.tangent_lift(z)?;
        let jb = b.spec().momentum_lagrangian(&pb.sys, &w)?;
        level.push(max_abs(jb.iter().zip(b.mu()).map(|(x, m)| x - m)), z);
        let jt = map.tangent_lift_jacobian(z)?;
        let lhs = jt.transpose() * pb.sys.lagrangian_two_form(&w)?.matrix * &jt;
        let rhs = pa.sys.lagrangian_two_form(z)?.matrix;
        sym.push(max_abs((lhs - rhs).iter().copied()), z);
        let up = EulerLagrangeField::new(&pb.sys).eval(&w)?;
        let pushed = map.double_tangent_lift(&EulerLagrangeField::new(&pa.sys).eval(z)?)?;
        field.push(diff_norm(&up.components(), &pushed.components()), z);
    }
    Ok(vec![
        level.check("RpCL-1-level", LEVEL, tol, samples),
        sym.check("symplectic", SYMPLECTIC, tol, samples),
        field.check("lagrangian-field", LAG_FIELD, tol, samples),
    ])
}

fn check_lagrangian_downstairs(a: &ReducedSystem, b: &ReducedSystem, map: &PointMap, samples: usize, seed: u64, tol: f64) -> Result<Vec<Check>> {
    let mut defined = Worst::new();
    let mut sym = Worst::new();
    let mut field = Worst::new();
    for x in a.space().samples(samples, seed) {
        let (y, j, defect) = induced_map(a, b, map, &x)?;
        defined.push(defect, &x);
        let lhs = j.transpose() * b.two_form(&y)?.matrix * &j;
        sym.push(max_abs((lhs - a.two_form(&x)?.matrix).iter().copied()), &x);
        let xa = EulerLagrangeField::new(a).eval(&x)?;
        let xb = EulerLagrangeField::new(b).eval(&y)?;
        field.push(diff_norm(&xb.components(), &(&j * xa.components())), &x);
    }
    Ok(vec![
        defined.check("reduced-map", RED_WELL_DEFINED, tol, samples),
        sym.check("reduced-symplectic", RED_SYMPLECTIC, tol, samples),
        field.check("reduced-lagrangian-field", RED_LAG_FIELD, tol, samples),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremKind {
    /// RpCL equivalence iff reduced RCL equivalence.
    Thm43,
    /// Equivalent Lagrangians iff equivalent reduced Lagrangians.
    Thm44,
    /// Orbit version of `Thm43`.
    Thm53,
    /// Orbit version of `Thm44`.
    Thm54,
}

impl TheoremKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "thm43" => Ok(TheoremKind::Thm43),
            "thm44" => Ok(TheoremKind::Thm44),
            "thm53" => Ok(TheoremKind::Thm53),
            "thm54" => Ok(TheoremKind::Thm54),
            other => Err(Error::Invalid(format!(
                "unknown theorem kind '{other}' (expected thm43, thm44, thm53, thm54)"
            ))),
        }
    }

    fn orbit(self) -> bool {
        matches!(self, TheoremKind::Thm53 | TheoremKind::Thm54)
    }

    fn controlled(self) -> bool {
        matches!(self, TheoremKind::Thm43 | TheoremKind::Thm53)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnessResult {
    pub upstairs: Vec<Check>,
    pub downstairs: Vec<Check>,
    pub upstairs_pass: bool,
    pub downstairs_pass: bool,
    pub agreement: Check,
}

/// One side of a theorem harness: a parent system, its symmetry and the
/// momentum value.
pub struct Side<'a> {
    pub rcl: &'a RclSystem,
    pub spec: &'a SymmetrySpec,
    pub mu: &'a [f64],
}

/// Evaluate both sides of an equivalence theorem and report whether the
/// verdicts agree.
pub fn theorem_harness(kind: TheoremKind, a: Side<'_>, b: Side<'_>, map: &PointMap, opts: ReduceOptions) -> Result<HarnessResult> {
    let reduce = if kind.orbit() { orbit_reduce } else { point_reduce };
    let ra = reduce(a.rcl, a.spec, a.mu, opts)?;
    let rb = reduce(b.rcl, b.spec, b.mu, opts)?;
    let (n, seed, tol) = (opts.samples, opts.seed, opts.tol);
    let (mut upstairs, mut downstairs) = if kind.controlled() {
        (
            check_rpcl_equivalence(&ra, &rb, map, n, seed, tol)?,
            check_reduced_rcl_equivalence(&ra, &rb, map, n, seed, tol)?,
        )
    } else {
        (
            check_lagrangian_upstairs(&ra, &rb, map, n, seed, tol)?,
            check_lagrangian_downstairs(&ra, &rb, map, n, seed, tol)?,
        )
    };
    if kind.orbit() && !kind.controlled() {
        let points = level_set_samples(&ra, n, seed)?;
        upstairs.push(plus_form_check(&ra, &rb, map, &points, tol)?);
    }
    if kind.orbit() {
        let worst = [&ra, &rb]
            .iter()
            .filter_map(|r| r.orbit_certificate())
            .map(|c| c.max_correction)
            .fold(0.0, f64::max);
        downstairs.push(Check::residual("orbit-correction", "omega^+ vanishes on O_mu", worst, tol, n));
    }
    let up = !upstairs.iter().any(Check::failed);
    let down = !downstairs.iter().any(Check::failed);
    let agreement = Check::verdict("agreement", AGREE, up == down, n)
        .with_note(format!("upstairs {}, downstairs {}", verdict(up), verdict(down)));
    Ok(HarnessResult {
        upstairs,
        downstairs,
        upstairs_pass: up,
        downstairs_pass: down,
        agreement,
    })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}
