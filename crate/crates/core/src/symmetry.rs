//! Symmetries: abelian translations of cyclic coordinates, Lie-algebra
//! structure constants, momentum maps and invariance certificates.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::control::RclSystem;
use crate::error::{Error, Result};
use crate::geometry::{max_abs, max_abs_diff, min_singular_value, ConfigSpace, CotangentPoint, Sampler, TangentPoint};
use crate::lagrangian::LagrangianSystem;
use crate::report::Check;

/// Jacobi and antisymmetry tolerance for structure constants.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum SymmetrySpec {
    /// Translations of the listed coordinates, acting on TQ by shifting
    /// positions only.
    Abelian { cyclic: Vec<usize> },
    /// Lie algebra data only; `c[k][i][j] = C^k_{ij}` with `[e_i, e_j] = C^k_{ij} e_k`.
    Algebra { dim: usize, c: Vec<Vec<Vec<f64>>> },
}

impl SymmetrySpec {
    pub fn abelian(cyclic: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &c in &cyclic {
            if c >= n || seen[c] {
                return Err(Error::Invalid(format!("cyclic index {c} is out of range or repeated")));
            }
            seen[c] = true;
        }
        Ok(SymmetrySpec::Abelian { cyclic })
    }

    pub fn algebra(dim: usize, c: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let ok_shape = c.len() == dim && c.iter().all(|m| m.len() == dim && m.iter().all(|r| r.len() == dim));
        if dim == 0 || !ok_shape {
            return Err(Error::Invalid(format!("structure constants must be {dim}x{dim}x{dim}")));
        }
        let spec = SymmetrySpec::Algebra { dim, c };
        let (asym, jacobi) = spec.algebra_defects().expect("algebra");
        if asym > ALGEBRA_TOL {
            return Err(Error::Invalid(format!("structure constants not antisymmetric ({asym:e})")));
        }
        if jacobi > ALGEBRA_TOL {
            return Err(Error::Invalid(format!("Jacobi identity fails ({jacobi:e})")));
        }
        Ok(spec)
    }

    /// so(3) with `[e_i, e_j] = ε_{ijk} e_k`.
    pub fn so3() -> Self {
        let mut c = vec![vec![vec![0.0; 3]; 3]; 3];
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            c[k][i][j] = 1.0;
            c[k][j][i] = -1.0;
        }
        SymmetrySpec::Algebra { dim: 3, c }
    }

    pub fn abelian_algebra(dim: usize) -> Self {
        SymmetrySpec::Algebra {
            dim,
            c: vec![vec![vec![0.0; dim]; dim]; dim],
        }
    }

    pub fn group_dim(&self) -> usize {
        match self {
            SymmetrySpec::Abelian { cyclic } => cyclic.len(),
            SymmetrySpec::Algebra { dim, .. } => *dim,
        }
    }

    pub fn is_abelian_translation(&self) -> bool {
        matches!(self, SymmetrySpec::Abelian { .. })
    }

    pub fn cyclic(&self) -> Result<&[usize]> {
        match self {
            SymmetrySpec::Abelian { cyclic } => Ok(cyclic),
            SymmetrySpec::Algebra { .. } => Err(Error::Unsupported(
                "operation needs an abelian translation action".into(),
            )),
        }
    }

    /// Structure constants; zero for abelian translations.
    pub fn structure_constant(&self, k: usize, i: usize, j: usize) -> f64 {
        match self {
            SymmetrySpec::Abelian { .. } => 0.0,
            SymmetrySpec::Algebra { c, .. } => c[k][i][j],
        }
    }

    /// `(max |C^k_ij + C^k_ji|, max |Jacobi sum|)`.
    pub fn algebra_defects(&self) -> Option<(f64, f64)> {
        let d = self.group_dim();
        let c = |k, i, j| self.structure_constant(k, i, j);
        let mut asym: f64 = 0.0;
        let mut jacobi: f64 = 0.0;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    asym = asym.max((c(k, i, j) + c(k, j, i)).abs());
                }
            }
        }
        // [[e_i, e_j], e_l] + cyclic = 0, component m
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    for m in 0..d {
                        let mut s = 0.0;
                        for k in 0..d {
                            s += c(k, i, j) * c(m, k, l) + c(k, j, l) * c(m, k, i) + c(k, l, i) * c(m, k, j);
                        }
                        jacobi = jacobi.max(s.abs());
                    }
                }
            }
        }
        Some((asym, jacobi))
    }

    /// `Φ^T_g(q, q̇)`: shift cyclic positions by `g`, wrapping periodic ones.
    pub fn act(&self, g: &[f64], v: &TangentPoint, space: &ConfigSpace) -> Result<TangentPoint> {
        let cyclic = self.cyclic()?;
        if g.len() != cyclic.len() {
            return Err(Error::Dimension("group element length".into()));
        }
        let mut out = v.clone();
        for (&c, gi) in cyclic.iter().zip(g) {
            out.q[c] += gi;
        }
        space.wrap(&mut out.q);
        Ok(out)
    }

    /// `J(q, p) = p_c`.
    pub fn momentum_cotangent(&self, alpha: &CotangentPoint) -> Result<Vec<f64>> {
        Ok(self.cyclic()?.iter().map(|&c| alpha.p[c]).collect())
    }

    /// `J_L(v) = ∂L/∂q̇_c`.
    pub fn momentum_lagrangian(&self, sys: &LagrangianSystem, v: &TangentPoint) -> Result<Vec<f64>> {
        let p = sys.legendre_transform(v)?.p;
        Ok(self.cyclic()?.iter().map(|&c| p[c]).collect())
    }

    /// `dJ_L(ξ)` for each component: `B[c,:]·dq + M[c,:]·dq̇`.
    pub fn momentum_rate(&self, sys: &LagrangianSystem, xi: &crate::geometry::DoubleTangentVector) -> Result<Vec<f64>> {
        let jet = sys.jet(&xi.base)?;
        let n = sys.dim();
        Ok(self
            .cyclic()?
            .iter()
            .map(|&c| (0..n).map(|j| jet.b[(c, j)] * xi.dq[j] + jet.m[(c, j)] * xi.dqdot[j]).sum())
            .collect())
    }

    /// Seeded group elements, uniform in `[-π, π]` per component.
    pub fn sample_elements(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = Sampler::new(seed);
        (0..count).map(|_| s.vector(self.group_dim(), -PI, PI)).collect()
    }
}

/// `ω⁺(ν)(ξ, η) = ⟨ν, [ξ, η]⟩ = Σ_k ν_k C^k_ij ξ_i η_j`.
pub fn coadjoint_plus_form(spec: &SymmetrySpec, nu: &[f64], xi: &[f64], eta: &[f64]) -> f64 {
    let d = spec.group_dim();
    let mut s = 0.0;
    for k in 0..d {
        let mut inner = 0.0;
        for i in 0..d {
            for j in 0..d {
                inner += spec.structure_constant(k, i, j) * xi[i] * eta[j];
            }
        }
        s += nu[k] * inner;
    }
    s
}

const INVARIANCE: &str = "L, F, C, u are G-invariant";
const EQUIVARIANCE: &str = "J_L(Phi_g v) = J_L(v)";
const REGULAR_VALUE: &str = "J_L has full rank (rows of M at cyclic indices)";

/// `L(Φ_g v) = L(v)` and likewise for the force, law and subset offset.
pub fn check_invariance(
    spec: &SymmetrySpec,
    rcl: &RclSystem,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Check> {
    let sys = &rcl.sys;
    let space = sys.space();
    let gs = spec.sample_elements(samples, seed ^ 0x9e37);
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for (v, g) in space.samples(samples, seed).iter().zip(&gs) {
        let w = spec.act(g, v, space)?;
        let mut d = (sys.value(&w)? - sys.value(v)?).abs();
        d = d.max(max_abs_diff(&rcl.force.value(&w)?, &rcl.force.value(v)?));
        if let Some(u) = rcl.law_map() {
            d = d.max(max_abs_diff(&u.value(&w)?, &u.value(v)?));
        }
        if let Some(c) = &rcl.subset {
            d = d.max(max_abs_diff(&c.offset.value(&w)?, &c.offset.value(v)?));
        }
        if d > worst || witness.is_empty() {
            worst = worst.max(d);
            witness = v.state();
        }
    }
    let c = Check::residual("invariance", INVARIANCE, worst, tol, samples);
    Ok(if c.failed() { c.with_witness(witness) } else { c })
}

pub fn check_equivariance(
    spec: &SymmetrySpec,
    sys: &LagrangianSystem,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Check> {
    let space = sys.space();
    let gs = spec.sample_elements(samples, seed ^ 0x9e37);
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for (v, g) in space.samples(samples, seed).iter().zip(&gs) {
        let w = spec.act(g, v, space)?;
        let d = max_abs_diff(&spec.momentum_lagrangian(sys, &w)?, &spec.momentum_lagrangian(sys, v)?);
        if d > worst || witness.is_empty() {
            worst = worst.max(d);
            witness = v.state();
        }
    }
    let c = Check::residual("equivariance", EQUIVARIANCE, worst, tol, samples);
    Ok(if c.failed() { c.with_witness(witness) } else { c })
}

/// Smallest singular value of the `k × n` block `∂J_L/∂q̇` over samples.
pub fn regular_value_margin(spec: &SymmetrySpec, sys: &LagrangianSystem, samples: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
    let cyclic = spec.cyclic()?;
    let n = sys.dim();
    let mut worst = f64::INFINITY;
    let mut witness = Vec::new();
    if cyclic.is_empty() {
        return Ok((worst, witness));
    }
    for v in sys.space().samples(samples, seed) {
        let m = sys.velocity_hessian(&v)?;
        let rows = DMatrix::from_fn(cyclic.len(), n, |r, j| m[(cyclic[r], j)]);
        let s = min_singular_value(&rows);
        if s < worst {
            worst = s;
            witness = v.state();
        }
    }
    Ok((worst, witness))
}

pub fn check_regular_value(spec: &SymmetrySpec, sys: &LagrangianSystem, samples: usize, seed: u64) -> Result<Check> {
    let threshold = sys.tolerances().hyperreg_min;
    let (margin, witness) = regular_value_margin(spec, sys, samples, seed)?;
    let pass = margin >= threshold;
    let mut c = Check::verdict("regular-value", REGULAR_VALUE, pass, samples)
        .with_note(format!("min singular value {margin:e}"));
    if !pass {
        c = c.with_witness(witness);
    }
    Ok(c)
}

/// Max `|dJ_L(ξ_L)|` over seeded samples.
pub fn noether_rate(spec: &SymmetrySpec, sys: &LagrangianSystem, samples: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
    let field = crate::dynamics::EulerLagrangeField::new(sys);
    let mut worst: f64 = 0.0;
    let mut witness = Vec::new();
    for v in sys.space().samples(samples, seed) {
        let xi = crate::dynamics::VectorField::eval(&field, &v)?;
        let r = max_abs(spec.momentum_rate(sys, &xi)?);
        if r > worst || witness.is_empty() {
            worst = worst.max(r);
            witness = v.state();
        }
    }
    Ok((worst, witness))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Interval;
    use crate::lagrangian::Tolerances;
    use std::f64::consts::TAU;

    fn central() -> LagrangianSystem {
        let space = ConfigSpace::new(
            vec!["r".into(), "theta".into()],
            vec![false, true],
            vec![Interval::new(0.5, 3.0), Interval::new(0.0, TAU)],
            vec![Interval::new(-1.0, 1.0), Interval::new(0.2, 2.0)],
        )
        .unwrap();
        LagrangianSystem::new("cf", space, "(r_dot^2 + r^2*theta_dot^2)/2 + 1/r", &[], Tolerances::default()).unwrap()
    }

    fn tp(q: &[f64], qd: &[f64]) -> TangentPoint {
        TangentPoint::new(q.to_vec(), qd.to_vec())
    }

    #[test]
    fn action_examples() {
        let cf = central();
        let spec = SymmetrySpec::abelian(vec![1], 2).unwrap();
        let v = tp(&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(spec.act(&[0.0], &v, cf.space()).unwrap(), v);
        assert_eq!(spec.act(&[PI / 2.0], &v, cf.space()).unwrap(), tp(&[1.0, PI / 2.0], &[0.0, 1.0]));
        let gh = spec.act(&[0.4], &spec.act(&[0.3], &v, cf.space()).unwrap(), cf.space()).unwrap();
        let direct = spec.act(&[0.7], &v, cf.space()).unwrap();
        assert!(max_abs_diff(&gh.q, &direct.q) < 1e-15);
    }

    #[test]
    fn momentum_examples() {
        let a = CotangentPoint::new(vec![0.0, 0.0], vec![3.0, 4.0]);
        assert_eq!(SymmetrySpec::abelian(vec![0], 2).unwrap().momentum_cotangent(&a).unwrap(), vec![3.0]);
        assert_eq!(SymmetrySpec::abelian(vec![0, 1], 2).unwrap().momentum_cotangent(&a).unwrap(), vec![3.0, 4.0]);
        let a = CotangentPoint::new(vec![1.0, 2.0], vec![3.0, 4.0]);
        assert_eq!(SymmetrySpec::abelian(vec![1], 2).unwrap().momentum_cotangent(&a).unwrap(), vec![4.0]);

        let spec = SymmetrySpec::abelian(vec![1], 2).unwrap();
        assert_eq!(spec.momentum_lagrangian(&central(), &tp(&[2.0, 0.0], &[0.0, 0.5])).unwrap(), vec![2.0]);
    }

    #[test]
    fn invariance_examples() {
        let cf = RclSystem::uncontrolled(central());
        let spec = SymmetrySpec::abelian(vec![1], 2).unwrap();
        assert!(!check_invariance(&spec, &cf, 50, 0, 1e-12).unwrap().failed());
        assert!(!check_equivariance(&spec, &cf.sys, 50, 0, 1e-12).unwrap().failed());

        let space = ConfigSpace::euclidean(&["q"], -2.0, 2.0).unwrap();
        let ho = LagrangianSystem::new("ho", space, "q_dot^2/2 - q^2/2", &[], Tolerances::default()).unwrap();
        let spec = SymmetrySpec::abelian(vec![0], 1).unwrap();
        let c = check_invariance(&spec, &RclSystem::uncontrolled(ho), 50, 0, 1e-9).unwrap();
        assert!(c.failed() && c.witness.is_some());
    }

    #[test]
    fn coadjoint_examples() {
        let so3 = SymmetrySpec::so3();
        assert_eq!(so3.algebra_defects(), Some((0.0, 0.0)));
        assert_eq!(coadjoint_plus_form(&so3, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), 1.0);
        let x = [0.3, -1.2, 0.5];
        assert_eq!(coadjoint_plus_form(&so3, &[0.7, 0.1, -0.4], &x, &x), 0.0);
        let ab = SymmetrySpec::abelian_algebra(3);
        assert_eq!(coadjoint_plus_form(&ab, &[1.0, 2.0, 3.0], &[0.3, 0.1, 0.2], &[0.5, 0.6, 0.7]), 0.0);
    }

    #[test]
    fn algebra_validation() {
        let mut c = vec![vec![vec![0.0; 2]; 2]; 2];
        c[0][0][1] = 1.0;
        assert!(SymmetrySpec::algebra(2, c.clone()).is_err());
        c[0][1][0] = -1.0;
        assert!(SymmetrySpec::algebra(2, c).is_ok());
        assert!(SymmetrySpec::abelian(vec![0, 0], 2).is_err());
        assert!(SymmetrySpec::abelian(vec![2], 2).is_err());
    }

    #[test]
    fn noether_rate_vanishes() {
        let spec = SymmetrySpec::abelian(vec![1], 2).unwrap();
        let (r, _) = noether_rate(&spec, &central(), 100, 0).unwrap();
        assert!(r < 1e-12);
    }
}
