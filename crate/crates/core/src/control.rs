//! Forces, control subsets and laws, vertical lifts, the controlled field
//! `ξ = ξ_L + vlift(F)ξ_L + vlift(u)ξ_L`, and RCL-equivalence checks.
//!
//! Vertical lifts use the chart-flat splitting of T(TQ): the vertical part
//! of a vector is its `dq̇` block and fiber transport is the identity.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{EulerLagrangeField, FieldKind, VectorField};
use crate::error::{Error, Result};
use crate::expr::{eval2, parse, Expr, SymbolTable};
use crate::geometry::{
    max_abs, ConfigSpace, DoubleTangentVector, Interval, PointMap, Sampler, TangentPoint,
};
use crate::lagrangian::LagrangianSystem;
use crate::report::Check;

/// Tolerance for control-subset membership certificates.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A base-preserving fiber map `(q, q̇) ↦ (q, f(q, q̇))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberMap {
    table: SymbolTable,
    exprs: Vec<Expr>,
}

impl FiberMap {
    pub fn parse(table: &SymbolTable, sources: &[&str]) -> Result<Self> {
        if sources.len() != table.dim() {
            return Err(Error::Dimension(format!(
                "fiber map has {} components, expected {}",
                sources.len(),
                table.dim()
            )));
        }
        let exprs = sources
            .iter()
            .map(|s| {
                parse(s, table).map_err(|error| Error::Parse {
                    source_text: s.to_string(),
                    error,
                })
            })
            .collect::<Result<_>>()?;
        Ok(FiberMap {
            table: table.clone(),
            exprs,
        })
    }

    pub fn from_exprs(table: SymbolTable, exprs: Vec<Expr>) -> Self {
        assert_eq!(exprs.len(), table.dim());
        FiberMap { table, exprs }
    }

    pub fn zero(table: &SymbolTable) -> Self {
        FiberMap {
            table: table.clone(),
            exprs: vec![Expr::Const(0.0); table.dim()],
        }
    }

    pub fn dim(&self) -> usize {
        self.exprs.len()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn table(&self) -> &SymbolTable {
        &self.table
    }

    pub fn is_zero(&self) -> bool {
        self.exprs.iter().all(|e| *e == Expr::Const(0.0))
    }

    pub fn sources(&self) -> Vec<String> {
        self.exprs
            .iter()
            .map(|e| e.display(&self.table).to_string())
            .collect()
    }

    /// Values `f(v)` and the `n × 2n` Jacobian over `(q, q̇)`.
    pub fn jet(&self, v: &TangentPoint) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let z = v.state();
        let params = self.table.param_values();
        let mut values = Vec::with_capacity(self.dim());
        let mut jac = DMatrix::zeros(self.dim(), z.len());
        for (i, e) in self.exprs.iter().enumerate() {
            let d = eval2(e, &self.table, &z, &params)
                .map_err(|err| Error::Eval(err.describe(e, &self.table)))?;
            values.push(d.value);
            jac.set_row(i, &d.gradient.transpose());
        }
        Ok((values, jac))
    }

    pub fn value(&self, v: &TangentPoint) -> Result<Vec<f64>> {
        Ok(self.jet(v)?.0)
    }

    /// `vlift(f)ξ = (0, J_f·ξ)` at the base of ξ.
    pub fn vlift_along(&self, xi: &DoubleTangentVector) -> Result<DoubleTangentVector> {
        let (_, jac) = self.jet(&xi.base)?;
        let w = jac * xi.components();
        Ok(vertical_lift(&xi.base, w.as_slice()))
    }
}

/// `(base = at, dq = 0, dq̇ = w)`.
pub fn vertical_lift(at: &TangentPoint, w: &[f64]) -> DoubleTangentVector {
    DoubleTangentVector::new(at.clone(), vec![0.0; at.dim()], w.to_vec())
}

/// Evaluate `field` at `at` and lift it through `map`.
pub fn vlift_of_fiber_map(
    map: &FiberMap,
    field: &dyn VectorField,
    at: &TangentPoint,
) -> Result<DoubleTangentVector> {
    map.vlift_along(&field.eval(at)?)
}

/// Affine fiber slice `C(v) = c₀(v) + span{e_d : d ∈ D}` with box bounds on
/// the actuated amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSubset {
    pub actuated: Vec<usize>,
    pub offset: FiberMap,
    /// Per actuated direction; infinite ends allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl ControlSubset {
    pub fn new(actuated: Vec<usize>, offset: FiberMap, bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        let n = offset.dim();
        if actuated.is_empty() {
            return Err(Error::Invalid("control subset needs at least one actuated direction".into()));
        }
        let mut seen = vec![false; n];
        for &d in &actuated {
            if d >= n || seen[d] {
                return Err(Error::Invalid(format!("invalid or repeated actuated index {d}")));
            }
            seen[d] = true;
        }
        let bounds = bounds.unwrap_or_else(|| vec![(f64::NEG_INFINITY, f64::INFINITY); actuated.len()]);
        if bounds.len() != actuated.len() || bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Invalid("control bounds must pair with actuated directions, lower <= upper".into()));
        }
        Ok(ControlSubset {
            actuated,
            offset,
            bounds,
        })
    }

    pub fn is_actuated(&self, i: usize) -> bool {
        self.actuated.contains(&i)
    }

    /// Largest violation of `w ∈ C(v)`: off-support components of
    /// `w − c₀(v)` and bound overshoot.
    pub fn membership_defect(&self, v: &TangentPoint, w: &[f64]) -> Result<f64> {
        let c0 = self.offset.value(v)?;
        let mut worst: f64 = 0.0;
        for (i, (wi, ci)) in w.iter().zip(&c0).enumerate() {
            let d = wi - ci;
            match self.actuated.iter().position(|&a| a == i) {
                Some(k) => {
                    let (lo, hi) = self.bounds[k];
                    worst = worst.max(lo - d).max(d - hi);
                }
                None => worst = worst.max(d.abs()),
            }
        }
        Ok(worst.max(0.0))
    }

    pub fn contains(&self, v: &TangentPoint, w: &[f64], tol: f64) -> Result<bool> {
        Ok(self.membership_defect(v, w)? <= tol)
    }

    /// Finite sampling interval for actuated direction `k`.
    pub fn sampling_interval(&self, k: usize) -> Interval {
        let (lo, hi) = self.bounds[k];
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => Interval::new(lo, hi),
            (true, false) => Interval::new(lo, lo + 2.0),
            (false, true) => Interval::new(hi - 2.0, hi),
            (false, false) => Interval::new(-1.0, 1.0),
        }
    }

    pub fn sample_member(&self, v: &TangentPoint, sampler: &mut Sampler) -> Result<Vec<f64>> {
        let mut w = self.offset.value(v)?;
        for (k, &d) in self.actuated.iter().enumerate() {
            w[d] += sampler.interval(&self.sampling_interval(k));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipCertificate {
    pub samples: usize,
    pub seed: u64,
    pub max_defect: f64,
    pub witness: Vec<f64>,
}

/// A feedback law certified to take values in its control subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw {
    pub map: FiberMap,
    pub certificate: MembershipCertificate,
}

impl ControlLaw {
    pub fn certify(
        map: FiberMap,
        subset: &ControlSubset,
        space: &ConfigSpace,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut worst: f64 = 0.0;
        let mut witness = Vec::new();
        for v in space.samples(samples, seed) {
            let d = subset.membership_defect(&v, &map.value(&v)?)?;
            if d > worst || witness.is_empty() {
                worst = worst.max(d);
                witness = v.state();
            }
        }
        if worst > MEMBERSHIP_TOL {
            return Err(Error::Invalid(format!(
                "control law leaves the control subset (defect {worst:e} at {witness:?})"
            )));
        }
        Ok(ControlLaw {
            map,
            certificate: MembershipCertificate {
                samples,
                seed,
                max_defect: worst,
                witness,
            },
        })
    }
}

/// A regular controlled Lagrangian system `(TQ, ω^L, L, F, C)` with an
/// optional law.
#[derive(Debug, Clone)]
pub struct RclSystem {
    pub sys: LagrangianSystem,
    pub force: FiberMap,
    pub subset: Option<ControlSubset>,
    pub law: Option<ControlLaw>,
}

impl RclSystem {
    pub fn uncontrolled(sys: LagrangianSystem) -> Self {
        let force = FiberMap::zero(sys.table());
        RclSystem {
            sys,
            force,
            subset: None,
            law: None,
        }
    }

    /// Assemble and certify the law against the subset (seeded samples).
    pub fn new(
        sys: LagrangianSystem,
        force: Option<FiberMap>,
        subset: Option<ControlSubset>,
        law: Option<FiberMap>,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let force = force.unwrap_or_else(|| FiberMap::zero(sys.table()));
        let law = match (law, &subset) {
            (Some(map), Some(c)) => Some(ControlLaw::certify(map, c, sys.space(), samples, seed)?),
            (Some(_), None) => {
                return Err(Error::Invalid("a control law needs a control subset".into()))
            }
            (None, _) => None,
        };
        Ok(RclSystem {
            sys,
            force,
            subset,
            law,
        })
    }

    pub fn name(&self) -> &str {
        self.sys.name()
    }

    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    pub fn is_controlled(&self) -> bool {
        !self.force.is_zero() || self.law.is_some()
    }

    pub fn field(&self) -> ControlledField<'_> {
        ControlledField { rcl: self }
    }

    pub fn law_map(&self) -> Option<&FiberMap> {
        self.law.as_ref().map(|l| &l.map)
    }
}

pub struct ControlledField<'a> {
    pub rcl: &'a RclSystem,
}

impl ControlledField<'_> {
    /// `(ξ_L, vlift(F)ξ_L, vlift(u)ξ_L)` at `v`.
    pub fn parts(
        &self,
        v: &TangentPoint,
    ) -> Result<(DoubleTangentVector, DoubleTangentVector, Option<DoubleTangentVector>)> {
        let xi = EulerLagrangeField::new(&self.rcl.sys).eval(v)?;
        let f = self.rcl.force.vlift_along(&xi)?;
        let u = match self.rcl.law_map() {
            Some(m) => Some(m.vlift_along(&xi)?),
            None => None,
        };
        Ok((xi, f, u))
    }
}

impl VectorField for ControlledField<'_> {
    fn kind(&self) -> FieldKind {
        FieldKind::Controlled
    }

    fn dim(&self) -> usize {
        self.rcl.dim()
    }

    fn eval(&self, v: &TangentPoint) -> Result<DoubleTangentVector> {
        let (xi, f, u) = self.parts(v)?;
        let mut out = xi.plus(&f);
        if let Some(u) = u {
            out = out.plus(&u);
        }
        Ok(out)
    }
}

pub fn controlled_field(rcl: &RclSystem) -> ControlledField<'_> {
    rcl.field()
}

/// An affine configuration map `φ(q) = A q + b` with its inverse.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub map: PointMap,
    pub a: DMatrix<f64>,
    pub a_inv: DMatrix<f64>,
}

impl AffineMap {
    /// Certify that `map` is affine with a consistent inverse on `space`.
    pub fn certify(map: &PointMap, space: &ConfigSpace, samples: usize, seed: u64) -> Result<Self> {
        if map.source_dim() != map.target_dim() {
            return Err(Error::Dimension("map must be between spaces of equal dimension".into()));
        }
        let inv = map.inverse()?;
        let c = space.center().q;
        let a = map.jacobian(&c)?;
        let a_inv = inv.jacobian(&map.apply(&c)?)?;
        for v in space.samples(samples, seed) {
            for d in map.jets(&v.q)? {
                if max_abs(d.hessian.iter().copied()) > 0.0 {
                    return Err(Error::Unsupported(
                        "pushforward needs an affine map (nonzero second derivative found)".into(),
                    ));
                }
            }
            if max_abs((map.jacobian(&v.q)? - &a).iter().copied()) > 1e-12 {
                return Err(Error::Unsupported("pushforward needs a constant Jacobian".into()));
            }
        }
        let defect = max_abs((&a * &a_inv - DMatrix::identity(a.nrows(), a.nrows())).iter().copied());
        if defect > 1e-10 {
            return Err(Error::InverseMismatch(defect));
        }
        let inv_defect = map.inverse_defect(space, samples.min(50), seed)?;
        if inv_defect > 1e-10 {
            return Err(Error::InverseMismatch(inv_defect));
        }
        Ok(AffineMap {
            map: map.clone(),
            a,
            a_inv,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// For a monomial A: target index and scale for each source axis.
    pub fn axis_image(&self) -> Option<Vec<(usize, f64)>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let nz: Vec<usize> = (0..n).filter(|&i| self.a[(i, j)] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            out.push((nz[0], self.a[(nz[0], j)]));
        }
        Some(out)
    }

    /// Source `(q, q̇)` variables written over a target table:
    /// `q₁ = φ⁻¹(q₂)`, `q̇₁ = A⁻¹ q̇₂`.
    pub fn pulled_variables(&self) -> Vec<Expr> {
        let n = self.dim();
        let inv = self.map.inverse_exprs().expect("certified inverse");
        let params = self.map.target_table().param_values();
        let mut vars: Vec<Expr> = inv.iter().map(|e| e.bind_params(&params)).collect();
        for i in 0..n {
            let terms: Vec<(f64, Expr)> = (0..n).map(|j| (self.a_inv[(i, j)], Expr::Var(n + j))).collect();
            vars.push(Expr::linear_combination(&terms));
        }
        vars
    }

    /// Image of the configuration space; periodic coordinates must map to
    /// periodic coordinates with unit scale.
    pub fn push_space(&self, space: &ConfigSpace) -> Result<ConfigSpace> {
        let n = self.dim();
        let c = space.center();
        let phi_c = self.map.apply(&c.q)?;
        let mut periodic = vec![false; n];
        for (j, &p) in space.periodic().iter().enumerate() {
            if !p {
                continue;
            }
            match self.axis_image() {
                Some(img) if img[j].1.abs() == 1.0 => periodic[img[j].0] = true,
                _ => {
                    return Err(Error::Unsupported(
                        "periodic coordinates must map to periodic coordinates with unit scale".into(),
                    ))
                }
            }
        }
        let image = |center: &[f64], boxes: &[Interval]| -> Vec<Interval> {
            (0..n)
                .map(|i| {
                    let mut lo = center[i];
                    let mut hi = center[i];
                    for j in 0..n {
                        let a = self.a[(i, j)];
                        let r = 0.5 * boxes[j].width() * a.abs();
                        lo -= r;
                        hi += r;
                    }
                    Interval::new(lo, hi)
                })
                .collect()
        };
        let qdot_center: Vec<f64> = (&self.a * DVector::from_column_slice(&c.qdot)).iter().copied().collect();
        let names = self.map.target_table().coords().to_vec();
        ConfigSpace::new(
            names,
            periodic,
            image(&phi_c, space.q_box()),
            image(&qdot_center, space.qdot_box()),
        )
    }

    /// `w ↦ A·f(Tφ⁻¹ w)` as expressions over `table₂`.
    pub fn push_fiber_map(&self, f: &FiberMap, table2: &SymbolTable) -> FiberMap {
        let vars = self.pulled_variables();
        let pulled: Vec<Expr> = f
            .exprs()
            .iter()
            .map(|e| e.bind_params(&f.table().param_values()).substitute(&vars))
            .collect();
        let n = self.dim();
        let exprs = (0..n)
            .map(|i| {
                let terms: Vec<(f64, Expr)> = (0..n).map(|k| (self.a[(i, k)], pulled[k].clone())).collect();
                Expr::linear_combination(&terms)
            })
            .collect();
        FiberMap::from_exprs(table2.clone(), exprs)
    }

    pub fn push_subset(&self, c: &ControlSubset, table2: &SymbolTable) -> Result<ControlSubset> {
        let img = self.axis_image().ok_or_else(|| {
            Error::Unsupported("control directions push forward only through a monomial Jacobian".into())
        })?;
        let mut pairs: Vec<(usize, (f64, f64))> = c
            .actuated
            .iter()
            .zip(&c.bounds)
            .map(|(&d, &(lo, hi))| {
                let (i, s) = img[d];
                let b = if s > 0.0 { (lo * s, hi * s) } else { (hi * s, lo * s) };
                (i, b)
            })
            .collect();
        pairs.sort_by_key(|p| p.0);
        ControlSubset::new(
            pairs.iter().map(|p| p.0).collect(),
            self.push_fiber_map(&c.offset, table2),
            Some(pairs.iter().map(|p| p.1).collect()),
        )
    }
}

/// `L₂ = L₁ ∘ (Tφ)⁻¹` with force, subset and law pushed forward, for an
/// affine φ.
pub fn pushforward(a: &RclSystem, map: &PointMap, name: &str) -> Result<RclSystem> {
    let space = a.sys.space();
    let aff = AffineMap::certify(map, space, 64, 0)?;
    let space2 = aff.push_space(space)?;
    let names: Vec<&str> = space2.names().iter().map(String::as_str).collect();
    let params: Vec<(&str, f64)> = a
        .sys
        .table()
        .params()
        .iter()
        .map(|(n, v)| (n.as_str(), *v))
        .collect();
    let table2 = SymbolTable::new(&names, &params)?;
    let l2 = a.sys.expr().substitute(&aff.pulled_variables());
    let sys2 = LagrangianSystem::from_expr(name, space2, table2.clone(), l2, *a.sys.tolerances())?;
    sys2.check_hyperregular(a.sys.tolerances().hyperreg_samples, 0)?;
    let force = aff.push_fiber_map(&a.force, &table2);
    let subset = match &a.subset {
        Some(c) => Some(aff.push_subset(c, &table2)?),
        None => None,
    };
    let law = a.law_map().map(|u| aff.push_fiber_map(u, &table2));
    RclSystem::new(sys2, Some(force), subset, law, 512, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSolution {
    /// Required `vlift(u₂)ξ_{L₂}` at `Tφ(v)`.
    pub correction: DoubleTangentVector,
    pub vertical_defect: f64,
    /// Largest component of `correction − vlift(c₀)ξ_{L₂}` outside D₂.
    pub support_defect: f64,
    pub realizable: bool,
}

/// Control correction that b needs at `Tφ(v)` so that its field matches
/// the pushed field of a: `T(Tφ)ξ_a(v) − [ξ_{L₂} + vlift(F₂)ξ_{L₂}](Tφ v)`.
pub fn control_match_solve(
    a: &RclSystem,
    b: &RclSystem,
    map: &PointMap,
    at: &TangentPoint,
    tol: f64,
) -> Result<MatchSolution> {
    let pushed = map.double_tangent_lift(&a.field().eval(at)?)?;
    let w = pushed.base.clone();
    let xi2 = EulerLagrangeField::new(&b.sys).eval(&w)?;
    let f2 = b.force.vlift_along(&xi2)?;
    let correction = DoubleTangentVector::new(
        w.clone(),
        pushed.dq.iter().zip(&xi2.dq).map(|(x, y)| x - y).collect(),
        pushed
            .dqdot
            .iter()
            .zip(&xi2.dqdot)
            .zip(&f2.dqdot)
            .map(|((x, y), z)| x - y - z)
            .collect(),
    );
    let vertical_defect = max_abs(correction.dq.iter().copied());
    let mut rest = correction.dqdot.clone();
    if let Some(c) = &b.subset {
        let c0 = c.offset.vlift_along(&xi2)?;
        for (r, s) in rest.iter_mut().zip(&c0.dqdot) {
            *r -= s;
        }
    }
    let support_defect = rest
        .iter()
        .enumerate()
        .filter(|(i, _)| !b.subset.as_ref().is_some_and(|c| c.is_actuated(*i)))
        .fold(0.0_f64, |m, (_, r)| m.max(r.abs()));
    Ok(MatchSolution {
        correction,
        vertical_defect,
        support_defect,
        realizable: vertical_defect <= tol && support_defect <= tol,
    })
}

const RCL1: &str = "C_2 = T phi (C_1)";
const RCL2: &str = "xi_2 . T phi = T(T phi) . xi_1";

/// RCL-1 (control subsets correspond under Tφ) and RCL-2 (fields are
/// Tφ-related) on seeded samples of a's box.
pub fn check_rcl_equivalence(
    a: &RclSystem,
    b: &RclSystem,
    map: &PointMap,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<Check>> {
    let inv = map.inverse()?;
    let points = a.sys.space().samples(samples, seed);
    let mut sampler = Sampler::new(seed ^ 0x5eed);

    let rcl1 = match (&a.subset, &b.subset) {
        (None, None) => Check::residual("RCL-1", RCL1, 0.0, tol, samples).with_note("no control subsets"),
        (Some(_), None) | (None, Some(_)) => Check::verdict("RCL-1", RCL1, false, samples)
            .with_note("only one system declares a control subset"),
        (Some(c1), Some(c2)) if c1.actuated.len() != c2.actuated.len() => {
            Check::verdict("RCL-1", RCL1, false, samples).with_note("actuated dimensions differ")
        }
        (Some(c1), Some(c2)) => {
            let mut worst: f64 = 0.0;
            let mut witness = Vec::new();
            for v in &points {
                let tv = map.tangent_lift(v)?;
                let w1 = c1.sample_member(v, &mut sampler)?;
                let img = map.tangent_lift(&TangentPoint::new(v.q.clone(), w1))?;
                let fwd = c2.membership_defect(&tv, &img.qdot)?;
                let w2 = c2.sample_member(&tv, &mut sampler)?;
                let back = inv.tangent_lift(&TangentPoint::new(tv.q.clone(), w2))?;
                let bwd = c1.membership_defect(v, &back.qdot)?;
                let d = fwd.max(bwd);
                if d > worst || witness.is_empty() {
                    worst = worst.max(d);
                    witness = v.state();
                }
            }
            let c = Check::residual("RCL-1", RCL1, worst, tol, samples);
            if c.failed() {
                c.with_witness(witness)
            } else {
                c
            }
        }
    };

    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    let mut solved = false;
    for v in &points {
        let r = match b.law {
            Some(_) => {
                let lhs = b.field().eval(&map.tangent_lift(v)?)?;
                let rhs = map.double_tangent_lift(&a.field().eval(v)?)?;
                max_abs((lhs.components() - rhs.components()).iter().copied())
            }
            None => {
                solved = true;
                let m = control_match_solve(a, b, map, v, tol)?;
                if m.realizable {
                    0.0
                } else {
                    m.vertical_defect.max(m.support_defect)
                }
            }
        };
        if r > worst || witness.is_empty() {
            worst = worst.max(r);
            witness = v.state();
        }
    }
    let mut rcl2 = Check::residual("RCL-2", RCL2, worst, tol, samples);
    if rcl2.failed() {
        rcl2 = rcl2.with_witness(witness);
    }
    if solved {
        rcl2 = rcl2.with_note("b has no law; checked as existence of a matching law");
    }
    Ok(vec![rcl1, rcl2])
}

/// The control-law relation under equivalent Lagrangian systems:
/// `vlift(u₂) − vlift(Tφ u₁ Tφ⁻¹) = −vlift(F₂) + vlift(Tφ F₁ Tφ⁻¹)`,
/// after checking the premise `ξ_{L₂}·Tφ = T(Tφ)ξ_{L₁}`.
pub fn check_control_relation(
    a: &RclSystem,
    b: &RclSystem,
    map: &PointMap,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<Check>> {
    const PREMISE: &str = "xi_L2 . T phi = T(T phi) . xi_L1";
    const RELATION: &str = "vlift(u_2) - vlift(T phi u_1 T phi^-1) = -vlift(F_2) + vlift(T phi F_1 T phi^-1)";
    let points = a.sys.space().samples(samples, seed);
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for v in &points {
        let lhs = EulerLagrangeField::new(&b.sys).eval(&map.tangent_lift(v)?)?;
        let rhs = map.double_tangent_lift(&EulerLagrangeField::new(&a.sys).eval(v)?)?;
        let r = max_abs((lhs.components() - rhs.components()).iter().copied());
        if r > worst || witness.is_empty() {
            worst = worst.max(r);
            witness = v.state();
        }
    }
    let mut premise = Check::residual("premise", PREMISE, worst, tol, samples);
    if premise.failed() {
        premise = premise.with_witness(witness);
        let na = Check::not_applicable("control-relation", RELATION, "premise fails");
        return Ok(vec![premise, na]);
    }
    let aff = match AffineMap::certify(map, a.sys.space(), 64, seed) {
        Ok(aff) => aff,
        Err(e) => {
            let na = Check::not_applicable("control-relation", RELATION, &e.to_string());
            return Ok(vec![premise, na]);
        }
    };
    let table2 = b.sys.table();
    let zero = FiberMap::zero(table2);
    let u2 = b.law_map().cloned().unwrap_or_else(|| zero.clone());
    let u1 = a.law_map().map(|u| aff.push_fiber_map(u, table2)).unwrap_or_else(|| zero.clone());
    let f1 = aff.push_fiber_map(&a.force, table2);
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for v in &points {
        let w = map.tangent_lift(v)?;
        let xi2 = EulerLagrangeField::new(&b.sys).eval(&w)?;
        let lift = |f: &FiberMap| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(f.vlift_along(&xi2)?.dqdot))
        };
        let lhs = lift(&u2)? - lift(&u1)?;
        let rhs = lift(&f1)? - lift(&b.force)?;
        let r = max_abs((lhs - rhs).iter().copied());
        if r > worst || witness.is_empty() {
            worst = worst.max(r);
            witness = w.state();
        }
    }
    let mut rel = Check::residual("control-relation", RELATION, worst, tol, samples);
    if rel.failed() {
        rel = rel.with_witness(witness);
    }
    Ok(vec![premise, rel])
}

/// `dE_L(ξ)` for the controlled field.
pub fn energy_rate_controlled(rcl: &RclSystem, v: &TangentPoint) -> Result<f64> {
    let xi = rcl.field().eval(v)?;
    Ok(rcl.sys.energy_gradient(v)?.dot(&xi.components()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::Tolerances;

    fn sys(names: &[&str], l: &str, params: &[(&str, f64)]) -> LagrangianSystem {
        let space = ConfigSpace::euclidean(names, -2.0, 2.0).unwrap();
        LagrangianSystem::new("t", space, l, params, Tolerances::default()).unwrap()
    }

    fn tp(q: &[f64], qd: &[f64]) -> TangentPoint {
        TangentPoint::new(q.to_vec(), qd.to_vec())
    }

    fn ho_rcl() -> RclSystem {
        let s = sys(&["q"], "q_dot^2/2 - q^2/2", &[]);
        let t = s.table().clone();
        RclSystem::new(
            s,
            Some(FiberMap::parse(&t, &["-0.1*q_dot"]).unwrap()),
            Some(ControlSubset::new(vec![0], FiberMap::zero(&t), None).unwrap()),
            Some(FiberMap::parse(&t, &["-0.5*q"]).unwrap()),
            64,
            0,
        )
        .unwrap()
    }

    fn scale2() -> PointMap {
        PointMap::new(&["q"], &["Q"], &["2*q"], Some(&["Q/2"]), &[]).unwrap()
    }

    #[test]
    fn vertical_lift_examples() {
        let at = tp(&[1.0], &[2.0]);
        let w = vertical_lift(&at, &[3.0]);
        assert_eq!(w, DoubleTangentVector::new(at.clone(), vec![0.0], vec![3.0]));
        assert!(vertical_lift(&at, &[0.0]).components().iter().all(|x| *x == 0.0));
        assert!(w.is_vertical());
    }

    #[test]
    fn vlift_of_fiber_map_examples() {
        let free = sys(&["q"], "q_dot^2/2", &[]);
        let t = free.table().clone();
        let field = EulerLagrangeField::new(&free);
        let at = tp(&[0.0], &[2.0]);
        let zero = vlift_of_fiber_map(&FiberMap::zero(&t), &field, &at).unwrap();
        assert_eq!(zero.dqdot, vec![0.0]);
        let drag = FiberMap::parse(&t, &["-q_dot"]).unwrap();
        assert_eq!(vlift_of_fiber_map(&drag, &field, &at).unwrap().dqdot, vec![0.0]);

        let ho = sys(&["q"], "q_dot^2/2 - q^2/2", &[]);
        let field = EulerLagrangeField::new(&ho);
        let id = FiberMap::parse(ho.table(), &["q_dot"]).unwrap();
        let at = tp(&[0.7], &[0.2]);
        let lifted = vlift_of_fiber_map(&id, &field, &at).unwrap();
        assert_eq!(lifted.dq, vec![0.0]);
        assert_eq!(lifted.dqdot, field.eval(&at).unwrap().dqdot);
    }

    #[test]
    fn controlled_field_examples() {
        let free = sys(&["q"], "q_dot^2/2", &[]);
        let t = free.table().clone();
        let plain = RclSystem::uncontrolled(free.clone());
        let at = tp(&[0.3], &[1.1]);
        assert_eq!(
            plain.field().eval(&at).unwrap(),
            EulerLagrangeField::new(&free).eval(&at).unwrap()
        );
        // constant force: T F kills ξ_L entirely
        let pushed = RclSystem::new(free, Some(FiberMap::parse(&t, &["1"]).unwrap()), None, None, 8, 0).unwrap();
        let xi = pushed.field().eval(&tp(&[0.0], &[0.0])).unwrap();
        assert_eq!((xi.dq[0], xi.dqdot[0]), (0.0, 0.0));
    }

    #[test]
    fn law_outside_subset_is_rejected() {
        let s = sys(&["x", "y"], "(x_dot^2 + y_dot^2)/2", &[]);
        let t = s.table().clone();
        let c = ControlSubset::new(vec![0], FiberMap::zero(&t), Some(vec![(-1.0, 1.0)])).unwrap();
        let bad = FiberMap::parse(&t, &["0", "y"]).unwrap();
        assert!(RclSystem::new(s.clone(), None, Some(c.clone()), Some(bad), 32, 0).is_err());
        let good = FiberMap::parse(&t, &["sin(x)", "0"]).unwrap();
        assert!(RclSystem::new(s, None, Some(c), Some(good), 32, 0).is_ok());
    }

    #[test]
    fn pushforward_of_scaled_oscillator() {
        let a = ho_rcl();
        let b = pushforward(&a, &scale2(), "pushed").unwrap();
        // L₂ = Q̇²/8 − Q²/8
        let v = tp(&[0.4], &[-0.6]);
        let expect = v.qdot[0].powi(2) / 8.0 - v.q[0].powi(2) / 8.0;
        assert!((b.sys.value(&v).unwrap() - expect).abs() < 1e-15);
        // ξ₂(2q, 2q̇) = (2q̇, −2q) for the bare oscillators
        let xi2 = EulerLagrangeField::new(&b.sys).eval(&tp(&[2.0], &[1.0])).unwrap();
        assert!((xi2.dq[0] - 1.0).abs() < 1e-14 && (xi2.dqdot[0] + 2.0).abs() < 1e-14);
        let checks = check_rcl_equivalence(&a, &b, &scale2(), 100, 0, 1e-9).unwrap();
        assert!(checks.iter().all(|c| !c.failed()), "{checks:?}");
    }

    #[test]
    fn reflexive_and_perturbed() {
        let a = ho_rcl();
        let id = PointMap::identity(&["q"]).unwrap();
        let checks = check_rcl_equivalence(&a, &a, &id, 50, 1, 1e-12).unwrap();
        assert!(checks.iter().all(|c| c.max_residual == Some(0.0)));

        let b = pushforward(&a, &scale2(), "pushed").unwrap();
        let bad = LagrangianSystem::unchecked(
            "bad",
            b.sys.space().clone(),
            "Q_dot^2/8 - Q^2/8 + 0.1*Q^2",
            &[],
            Tolerances::default(),
        )
        .unwrap();
        let bad = RclSystem::new(
            bad,
            Some(b.force.clone()),
            b.subset.clone(),
            b.law_map().cloned(),
            32,
            0,
        )
        .unwrap();
        let checks = check_rcl_equivalence(&a, &bad, &scale2(), 100, 0, 1e-8).unwrap();
        let rcl2 = &checks[1];
        assert!(rcl2.failed() && rcl2.max_residual.unwrap() > 1e-3);
        assert!(rcl2.witness.is_some());
    }

    #[test]
    fn match_solve_reproduces_pushed_law() {
        let a = ho_rcl();
        let b = pushforward(&a, &scale2(), "pushed").unwrap();
        let bare = RclSystem {
            law: None,
            ..b.clone()
        };
        for v in a.sys.space().samples(20, 2) {
            let m = control_match_solve(&a, &bare, &scale2(), &v, 1e-9).unwrap();
            assert!(m.realizable);
            let xi2 = EulerLagrangeField::new(&b.sys).eval(&m.correction.base).unwrap();
            let want = b.law_map().unwrap().vlift_along(&xi2).unwrap();
            assert!(max_abs(m.correction.dqdot.iter().zip(&want.dqdot).map(|(x, y)| x - y)) < 1e-12);
        }
        let id = PointMap::identity(&["q"]).unwrap();
        let m = control_match_solve(&a, &a, &id, &tp(&[0.5], &[0.5]), 1e-12).unwrap();
        let law = a.law_map().unwrap().vlift_along(&EulerLagrangeField::new(&a.sys).eval(&tp(&[0.5], &[0.5])).unwrap()).unwrap();
        assert!(max_abs(m.correction.dqdot.iter().zip(&law.dqdot).map(|(x, y)| x - y)) < 1e-15);
    }

    #[test]
    fn unactuated_drag_is_unrealizable() {
        let l = "(x_dot^2 + y_dot^2)/2 - y^2/2";
        let s = sys(&["x", "y"], l, &[]);
        let t = s.table().clone();
        let subset = ControlSubset::new(vec![0], FiberMap::zero(&t), None).unwrap();
        let a = RclSystem::new(s.clone(), None, Some(subset.clone()), None, 16, 0).unwrap();
        let drag = FiberMap::parse(&t, &["0", "-0.3*y_dot"]).unwrap();
        let b = RclSystem::new(s, Some(drag), Some(subset), None, 16, 0).unwrap();
        let id = PointMap::identity(&["x", "y"]).unwrap();
        let m = control_match_solve(&a, &b, &id, &tp(&[0.1, 0.5], &[0.2, 0.4]), 1e-9).unwrap();
        assert!(!m.realizable);
        assert!(m.vertical_defect == 0.0 && m.support_defect > 1e-3);
    }

    #[test]
    fn control_relation_on_pushforward() {
        let a = ho_rcl();
        let b = pushforward(&a, &scale2(), "pushed").unwrap();
        let checks = check_control_relation(&a, &b, &scale2(), 50, 0, 1e-9).unwrap();
        assert!(checks.iter().all(|c| c.pass == Some(true)), "{checks:?}");
        let bad_sys = LagrangianSystem::unchecked(
            "bad",
            b.sys.space().clone(),
            "Q_dot^2/8 - Q^2/8 + 0.1*Q^2",
            &[],
            Tolerances::default(),
        )
        .unwrap();
        let bad = RclSystem { sys: bad_sys, ..b };
        let checks = check_control_relation(&a, &bad, &scale2(), 50, 0, 1e-9).unwrap();
        assert!(checks[0].failed());
        assert_eq!(checks[1].status, crate::report::Status::NotApplicable);
    }
}
