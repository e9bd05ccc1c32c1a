//! Regular point and (abelian) orbit reduction by cyclic coordinates.
//!
//! The quotient `J_L⁻¹(μ)/G` is charted by the shape coordinates and their
//! velocities. A section `σ_μ` pins the cyclic positions to
//! `offsets + shear·q_s` and solves `∂L/∂q̇_c = μ` for the cyclic
//! velocities; every reduced object is the parent object pulled back along
//! `σ_μ`, and `τ_μ` drops the cyclic components.

mod checks;
mod equivalence;

pub use checks::*;
pub use equivalence::*;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control::RclSystem;
use crate::dynamics::{ChartSystem, EulerLagrangeField, FieldKind, VectorField};
use crate::error::{Error, Result};
use crate::geometry::{
    antisymmetrize, max_abs, ConfigSpace, CotangentPoint, DoubleTangentVector, TangentPoint,
    TwoFormAtPoint,
};
use crate::lagrangian::LagrangianJet;
use crate::symmetry::{check_invariance, coadjoint_plus_form, regular_value_margin, SymmetrySpec};

/// Cyclic coordinates, the momentum value and the pinning of cyclic
/// positions used to chart the quotient.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub cyclic: Vec<usize>,
    pub shape: Vec<usize>,
    pub mu: Vec<f64>,
    pub offsets: Vec<f64>,
    /// `k × s`: cyclic positions are `offsets + shear·q_s`.
    pub shear: DMatrix<f64>,
}

impl Section {
    pub fn new(n: usize, cyclic: &[usize], mu: Vec<f64>) -> Self {
        let shape: Vec<usize> = (0..n).filter(|i| !cyclic.contains(i)).collect();
        let k = cyclic.len();
        Section {
            cyclic: cyclic.to_vec(),
            shape: shape.clone(),
            mu,
            offsets: vec![0.0; k],
            shear: DMatrix::zeros(k, shape.len()),
        }
    }

    pub fn n(&self) -> usize {
        self.cyclic.len() + self.shape.len()
    }

    /// `τ_μ`: keep shape positions and velocities.
    pub fn project(&self, z: &TangentPoint) -> TangentPoint {
        TangentPoint::new(
            self.shape.iter().map(|&i| z.q[i]).collect(),
            self.shape.iter().map(|&i| z.qdot[i]).collect(),
        )
    }

    /// `Tτ_μ`: keep the shape rows of a vector at `z`.
    pub fn project_vector(&self, xi: &DoubleTangentVector) -> DoubleTangentVector {
        DoubleTangentVector::new(
            self.project(&xi.base),
            self.shape.iter().map(|&i| xi.dq[i]).collect(),
            self.shape.iter().map(|&i| xi.dqdot[i]).collect(),
        )
    }

    /// Row indices of the shape block inside a `2n` state.
    pub fn shape_rows(&self) -> Vec<usize> {
        let n = self.n();
        self.shape.iter().copied().chain(self.shape.iter().map(|&i| n + i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitCertificate {
    /// `max |⟨ν, [e_i, e_j]⟩|` over basis pairs at ν = μ; exactly 0 for an
    /// abelian group.
    pub max_correction: f64,
}

/// Reduced control subset: actuated shape directions, offset `c₀∘σ_μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSubset {
    /// Indices into the shape list.
    pub actuated: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
    /// Parent indices of cyclic actuated directions that were dropped.
    pub dropped: Vec<usize>,
}

/// A reduced (RCL or Lagrangian) system on the shape chart.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    name: String,
    parent: RclSystem,
    spec: SymmetrySpec,
    section: Section,
    space: ConfigSpace,
    subset: Option<ReducedSubset>,
    orbit: Option<OrbitCertificate>,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReduceOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            samples: 64,
            seed: 0,
            tol: 1e-9,
        }
    }
}

impl ReducedSystem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parent(&self) -> &RclSystem {
        &self.parent
    }

    pub fn spec(&self) -> &SymmetrySpec {
        &self.spec
    }

    pub fn section(&self) -> &Section {
        &self.section
    }

    pub fn mu(&self) -> &[f64] {
        &self.section.mu
    }

    pub fn subset(&self) -> Option<&ReducedSubset> {
        self.subset.as_ref()
    }

    pub fn orbit_certificate(&self) -> Option<&OrbitCertificate> {
        self.orbit.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Same reduction with a different section.
    pub fn with_section(&self, offsets: Vec<f64>, shear: DMatrix<f64>) -> Result<ReducedSystem> {
        let k = self.section.cyclic.len();
        if offsets.len() != k || shear.nrows() != k || shear.ncols() != self.section.shape.len() {
            return Err(Error::Dimension("section offsets/shear shape".into()));
        }
        let mut out = self.clone();
        out.section.offsets = offsets;
        out.section.shear = shear;
        Ok(out)
    }

    fn cyclic_positions(&self, qs: &[f64]) -> Vec<f64> {
        let s = &self.section;
        let base = DVector::from_column_slice(&s.offsets) + &s.shear * DVector::from_column_slice(qs);
        base.iter().copied().collect()
    }

    /// Newton solve of `∂L/∂q̇_c = μ` for the cyclic velocities at the given
    /// full position and shape velocities; returns the point and its jet.
    pub fn solve_cyclic_velocities(&self, q: Vec<f64>, qdot_shape: &[f64]) -> Result<(TangentPoint, LagrangianJet)> {
        let s = &self.section;
        let n = s.n();
        let sys = &self.parent.sys;
        let mut qdot = vec![0.0; n];
        for (j, &i) in s.shape.iter().enumerate() {
            qdot[i] = qdot_shape[j];
        }
        let (tol, max_iter) = (sys.tolerances().newton_tol, sys.tolerances().newton_max_iter);
        let tol = tol * max_abs(s.mu.iter().copied()).max(1.0);
        let k = s.cyclic.len();
        let mut extra_done = false;
        let mut residual = f64::INFINITY;
        for _ in 0..=max_iter + 1 {
            let v = TangentPoint::new(q.clone(), qdot.clone());
            let jet = sys.jet(&v)?;
            if k == 0 {
                return Ok((v, jet));
            }
            let r = DVector::from_iterator(k, s.cyclic.iter().zip(&s.mu).map(|(&c, m)| jet.p[c] - m));
            let prev = residual;
            residual = max_abs(r.iter().copied());
            // one refinement step past the tolerance, then stop
            if residual <= tol && (extra_done || residual == 0.0 || residual >= prev) {
                return Ok((v, jet));
            }
            if residual <= tol {
                extra_done = true;
            }
            let mcc = DMatrix::from_fn(k, k, |a, b| jet.m[(s.cyclic[a], s.cyclic[b])]);
            let step = mcc.lu().solve(&r).ok_or(Error::Singular("cyclic velocity solve"))?;
            for (a, &c) in s.cyclic.iter().enumerate() {
                qdot[c] -= step[a];
            }
        }
        if residual <= tol {
            let v = TangentPoint::new(q, qdot);
            let jet = sys.jet(&v)?;
            return Ok((v, jet));
        }
        Err(Error::NoConvergence {
            residual,
            iterations: max_iter,
        })
    }

    fn full_position(&self, qs: &[f64]) -> Vec<f64> {
        let s = &self.section;
        let mut q = vec![0.0; s.n()];
        for (j, &i) in s.shape.iter().enumerate() {
            q[i] = qs[j];
        }
        for (&c, v) in s.cyclic.iter().zip(self.cyclic_positions(qs)) {
            q[c] = v;
        }
        q
    }

    /// `σ_μ(x)`.
    pub fn lift(&self, x: &TangentPoint) -> Result<TangentPoint> {
        Ok(self.solve_cyclic_velocities(self.full_position(&x.q), &x.qdot)?.0)
    }

    pub fn lift_with_jet(&self, x: &TangentPoint) -> Result<(TangentPoint, LagrangianJet)> {
        self.solve_cyclic_velocities(self.full_position(&x.q), &x.qdot)
    }

    /// `σ_μ(x)` and `Tσ_μ` (`2n × 2s`) by the implicit-function theorem:
    /// cyclic-velocity rows are `−M_cc⁻¹ H_c T₀`, where `H_c` are the
    /// cyclic rows of `[B M]`.
    pub fn lift_jacobian(&self, x: &TangentPoint) -> Result<(TangentPoint, DMatrix<f64>, LagrangianJet)> {
        let (z, jet) = self.lift_with_jet(x)?;
        let s = &self.section;
        let (n, ns, k) = (s.n(), s.shape.len(), s.cyclic.len());
        let mut t = DMatrix::zeros(2 * n, 2 * ns);
        for (j, &i) in s.shape.iter().enumerate() {
            t[(i, j)] = 1.0;
            t[(n + i, ns + j)] = 1.0;
        }
        for (a, &c) in s.cyclic.iter().enumerate() {
            for j in 0..ns {
                t[(c, j)] = s.shear[(a, j)];
            }
        }
        if k > 0 {
            let h = DMatrix::from_fn(k, 2 * n, |a, col| {
                let c = s.cyclic[a];
                if col < n {
                    jet.b[(c, col)]
                } else {
                    jet.m[(c, col - n)]
                }
            });
            let mcc = DMatrix::from_fn(k, k, |a, b| jet.m[(s.cyclic[a], s.cyclic[b])]);
            let y = -mcc
                .lu()
                .solve(&(h * &t))
                .ok_or(Error::Singular("section Jacobian"))?;
            for (a, &c) in s.cyclic.iter().enumerate() {
                for j in 0..2 * ns {
                    t[(n + c, j)] = y[(a, j)];
                }
            }
        }
        Ok((z, t, jet))
    }

    /// `l_μ = L∘σ_μ`.
    pub fn reduced_lagrangian(&self, x: &TangentPoint) -> Result<f64> {
        Ok(self.lift_with_jet(x)?.1.value)
    }

    /// `(A_μ, E_{l_μ})` with `A_μ = A∘σ_μ` and `E_{l_μ} = A_μ − l_μ`.
    pub fn action_energy(&self, x: &TangentPoint) -> Result<(f64, f64)> {
        let (z, jet) = self.lift_with_jet(x)?;
        let a: f64 = jet.p.iter().zip(&z.qdot).map(|(p, v)| p * v).sum();
        Ok((a, a - jet.value))
    }

    /// `Ω_μ = Tσᵀ Ω^L Tσ`.
    pub fn reduced_two_form(&self, x: &TangentPoint) -> Result<TwoFormAtPoint> {
        let (z, t, jet) = self.lift_jacobian(x)?;
        let omega = crate::lagrangian::two_form_from_jet(&jet, z.state());
        let p = t.transpose() * omega.matrix * &t;
        TwoFormAtPoint {
            base: x.state(),
            matrix: antisymmetrize(&p),
            symplectic: false,
        }
        .into_symplectic(self.parent.sys.tolerances().symplectic_min)
    }

    /// Reduced fiber map `τ_μ∘F∘σ_μ`: values and Jacobian over `x`.
    pub(crate) fn reduced_fiber_jet(&self, map: &crate::control::FiberMap, x: &TangentPoint) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (z, t, _) = self.lift_jacobian(x)?;
        let (vals, jac) = map.jet(&z)?;
        let full = jac * t;
        let s = &self.section;
        let rows = DMatrix::from_fn(s.shape.len(), full.ncols(), |r, c| full[(s.shape[r], c)]);
        Ok((s.shape.iter().map(|&i| vals[i]).collect(), rows))
    }

    pub fn reduced_force(&self, x: &TangentPoint) -> Result<Vec<f64>> {
        Ok(self.reduced_fiber_jet(&self.parent.force, x)?.0)
    }

    pub fn reduced_law(&self, x: &TangentPoint) -> Result<Option<Vec<f64>>> {
        match self.parent.law_map() {
            Some(u) => Ok(Some(self.reduced_fiber_jet(u, x)?.0)),
            None => Ok(None),
        }
    }

    /// `(ξ_{l_μ}, vlift(f_μ)ξ_{l_μ}, vlift(u_μ)ξ_{l_μ})` at `x`.
    pub fn field_parts(&self, x: &TangentPoint) -> Result<(DoubleTangentVector, DoubleTangentVector, Option<DoubleTangentVector>)> {
        let xi = EulerLagrangeField::new(self).eval(x)?;
        let lift = |map: &crate::control::FiberMap| -> Result<DoubleTangentVector> {
            let (_, j) = self.reduced_fiber_jet(map, x)?;
            let w = j * xi.components();
            Ok(crate::control::vertical_lift(x, w.as_slice()))
        };
        let f = lift(&self.parent.force)?;
        let u = match self.parent.law_map() {
            Some(m) => Some(lift(m)?),
            None => None,
        };
        Ok((xi, f, u))
    }

    pub fn field(&self) -> ReducedField<'_> {
        ReducedField { red: self }
    }

    /// Membership defect of a shape fiber vector in `C_μ(x)`.
    pub fn reduced_membership_defect(&self, x: &TangentPoint, w: &[f64]) -> Result<Option<f64>> {
        let (Some(rs), Some(c)) = (&self.subset, &self.parent.subset) else {
            return Ok(None);
        };
        let z = self.lift(x)?;
        let c0 = c.offset.value(&z)?;
        let s = &self.section;
        let mut worst: f64 = 0.0;
        for (j, &i) in s.shape.iter().enumerate() {
            let d = w[j] - c0[i];
            match rs.actuated.iter().position(|&a| a == j) {
                Some(k) => {
                    let (lo, hi) = rs.bounds[k];
                    worst = worst.max(lo - d).max(d - hi);
                }
                None => worst = worst.max(d.abs()),
            }
        }
        Ok(Some(worst.max(0.0)))
    }
}

impl ChartSystem for ReducedSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn energy(&self, x: &TangentPoint) -> Result<f64> {
        Ok(self.action_energy(x)?.1)
    }

    /// `Tσᵀ ∇E_L` at `σ_μ(x)`.
    fn energy_gradient(&self, x: &TangentPoint) -> Result<DVector<f64>> {
        let (z, t, jet) = self.lift_jacobian(x)?;
        Ok(t.transpose() * jet.energy_gradient(&z.qdot))
    }

    fn two_form(&self, x: &TangentPoint) -> Result<TwoFormAtPoint> {
        self.reduced_two_form(x)
    }

    /// `(q_s, p_s∘σ_μ)`.
    fn legendre(&self, x: &TangentPoint) -> Result<CotangentPoint> {
        let (_, jet) = self.lift_with_jet(x)?;
        Ok(CotangentPoint::new(
            x.q.clone(),
            self.section.shape.iter().map(|&i| jet.p[i]).collect(),
        ))
    }

    fn legendre_jacobian(&self, x: &TangentPoint) -> Result<DMatrix<f64>> {
        let (_, t, jet) = self.lift_jacobian(x)?;
        let full = jet.legendre_jacobian() * t;
        let rows = self.section.shape_rows();
        Ok(DMatrix::from_fn(rows.len(), full.ncols(), |r, c| full[(rows[r], c)]))
    }

    fn newton_tolerance(&self) -> (f64, usize) {
        let t = self.parent.sys.tolerances();
        (t.newton_tol, t.newton_max_iter)
    }
}

/// `ξ_{l_μ} + vlift(f_μ)ξ_{l_μ} + vlift(u_μ)ξ_{l_μ}`.
pub struct ReducedField<'a> {
    pub red: &'a ReducedSystem,
}

impl VectorField for ReducedField<'_> {
    fn kind(&self) -> FieldKind {
        FieldKind::ReducedLift
    }

    fn dim(&self) -> usize {
        self.red.dof()
    }

    fn eval(&self, x: &TangentPoint) -> Result<DoubleTangentVector> {
        let (xi, f, u) = self.red.field_parts(x)?;
        let mut out = xi.plus(&f);
        if let Some(u) = u {
            out = out.plus(&u);
        }
        Ok(out)
    }
}

/// Find `w ∈ C(z)` with `J_L(q, w) = μ` by Gauss-Newton on the actuated
/// amplitudes; `None` when no such member is found.
pub fn level_set_member(rcl: &RclSystem, section: &Section, z: &TangentPoint, tol: f64) -> Result<Option<Vec<f64>>> {
    let Some(c) = &rcl.subset else {
        return Ok(None);
    };
    let k = section.cyclic.len();
    let c0 = c.offset.value(z)?;
    let mut amp: Vec<f64> = c
        .bounds
        .iter()
        .map(|&(lo, hi)| 0.0_f64.clamp(lo, hi))
        .collect();
    let build = |amp: &[f64]| {
        let mut w = c0.clone();
        for (a, &d) in amp.iter().zip(&c.actuated) {
            w[d] += a;
        }
        w
    };
    for _ in 0..30 {
        let w = build(&amp);
        let jet = rcl.sys.jet(&TangentPoint::new(z.q.clone(), w.clone()))?;
        let r = DVector::from_iterator(k, section.cyclic.iter().zip(&section.mu).map(|(&cc, m)| jet.p[cc] - m));
        if max_abs(r.iter().copied()) <= tol {
            let inside = amp.iter().zip(&c.bounds).all(|(a, (lo, hi))| a >= lo && a <= hi);
            return Ok(inside.then_some(w));
        }
        let jac = DMatrix::from_fn(k, c.actuated.len(), |a, b| jet.m[(section.cyclic[a], c.actuated[b])]);
        let step = match jac.svd(true, true).solve(&r, 1e-14) {
            Ok(s) => s,
            Err(_) => return Ok(None),
        };
        if max_abs(step.iter().copied()) == 0.0 {
            return Ok(None);
        }
        for (a, s) in amp.iter_mut().zip(step.iter()) {
            *a -= s;
        }
    }
    Ok(None)
}

fn shape_space(space: &ConfigSpace, shape: &[usize]) -> Result<ConfigSpace> {
    if shape.is_empty() {
        return Err(Error::Irreducible("no shape coordinates remain after reduction".into()));
    }
    space.select(shape)
}

/// Point reduction of `parent` at `μ`, certifying the preconditions on
/// seeded level-set samples.
pub fn point_reduce(parent: &RclSystem, spec: &SymmetrySpec, mu: &[f64], opts: ReduceOptions) -> Result<ReducedSystem> {
    let cyclic = spec.cyclic()?.to_vec();
    if mu.len() != cyclic.len() {
        return Err(Error::Dimension(format!(
            "momentum has {} components, symmetry has {}",
            mu.len(),
            cyclic.len()
        )));
    }
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::Invalid("momentum value must be finite".into()));
    }
    let sys = &parent.sys;
    let bare = RclSystem::uncontrolled(sys.clone());
    if check_invariance(spec, &bare, opts.samples, opts.seed, opts.tol)?.failed() {
        return Err(Error::Irreducible("L is not G-invariant".into()));
    }
    let (margin, _) = regular_value_margin(spec, sys, opts.samples, opts.seed)?;
    if margin < sys.tolerances().hyperreg_min {
        return Err(Error::Irreducible(format!(
            "mu is not a regular value of J_L (margin {margin:e})"
        )));
    }
    let section = Section::new(sys.dim(), &cyclic, mu.to_vec());
    let space = shape_space(sys.space(), &section.shape)?;
    let mut red = ReducedSystem {
        name: format!("{}_reduced", sys.name()),
        parent: parent.clone(),
        spec: spec.clone(),
        section,
        space,
        subset: None,
        orbit: None,
        warnings: Vec::new(),
    };

    let level = match level_set_samples(&red, opts.samples, opts.seed) {
        Ok(level) => level,
        Err(e) => return Err(Error::Irreducible(format!("cannot reach J_L^-1(mu) from the shape box: {e}"))),
    };

    if !parent.force.is_zero() {
        for z in &level {
            let f = parent.force.value(z)?;
            let j = spec.momentum_lagrangian(sys, &TangentPoint::new(z.q.clone(), f))?;
            let d = max_abs(j.iter().zip(mu).map(|(a, b)| a - b));
            if !(d <= opts.tol) {
                return Err(Error::Irreducible(format!(
                    "F^L does not preserve J_L^-1(mu): |J_L(F(v)) - mu| = {d:e} at {:?}",
                    z.state()
                )));
            }
        }
    }
    if check_invariance(spec, parent, opts.samples, opts.seed, opts.tol)?.failed() {
        return Err(Error::Irreducible("F^L, C^L or u^L is not G-invariant".into()));
    }

    if let Some(c) = &parent.subset {
        for z in &level {
            if level_set_member(parent, &red.section, z, opts.tol)?.is_none() {
                return Err(Error::Irreducible(format!(
                    "C^L and J_L^-1(mu) do not intersect over {:?}",
                    z.state()
                )));
            }
        }
        let mut actuated = Vec::new();
        let mut bounds = Vec::new();
        let mut dropped = Vec::new();
        for (k, &d) in c.actuated.iter().enumerate() {
            match red.section.shape.iter().position(|&s| s == d) {
                Some(j) => {
                    actuated.push(j);
                    bounds.push(c.bounds[k]);
                }
                None => dropped.push(d),
            }
        }
        if !dropped.is_empty() {
            red.warnings.push(format!(
                "cyclic actuated directions {dropped:?} do not act on the reduced chart and were dropped"
            ));
        }
        red.subset = Some(ReducedSubset {
            actuated,
            bounds,
            dropped,
        });
    }
    Ok(red)
}

/// Orbit reduction; for abelian translations `O_μ = {μ}` and the orbit
/// correction term vanishes, so this is the point reduction plus the
/// certificate.
pub fn orbit_reduce(parent: &RclSystem, spec: &SymmetrySpec, mu: &[f64], opts: ReduceOptions) -> Result<ReducedSystem> {
    if !spec.is_abelian_translation() {
        return Err(Error::Unsupported("non-abelian orbit reduction unsupported".into()));
    }
    let mut red = point_reduce(parent, spec, mu, opts)?;
    let k = spec.group_dim();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let mut ei = vec![0.0; k];
            let mut ej = vec![0.0; k];
            ei[i] = 1.0;
            ej[j] = 1.0;
            worst = worst.max(coadjoint_plus_form(spec, mu, &ei, &ej).abs());
        }
    }
    red.orbit = Some(OrbitCertificate { max_correction: worst });
    Ok(red)
}

/// Seeded level-set points: `σ_μ(x)` then shifted along the group.
pub fn level_set_samples(red: &ReducedSystem, samples: usize, seed: u64) -> Result<Vec<TangentPoint>> {
    let gs = red.spec.sample_elements(samples, seed ^ 0x1e7e1);
    red.space
        .samples(samples, seed)
        .iter()
        .zip(&gs)
        .map(|(x, g)| {
            let z = red.lift(x)?;
            red.spec.act(g, &z, red.parent.sys.space())
        })
        .collect()
}
