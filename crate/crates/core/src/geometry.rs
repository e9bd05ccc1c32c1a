//! Chart-level geometry: the configuration chart Q, points of TQ and T*Q,
//! tangent vectors to TQ, two-forms at a point, and point transformations
//! with their first and second tangent lifts.
//!
//! Two-forms are dense matrices in the chart basis `(dq¹..dqⁿ, dq̇¹..dq̇ⁿ)`
//! (or `(dq, dp)` on T*Q) and are evaluated as `ω(u, v) = uᵀ Ω v`. The
//! canonical form is `Ω₀ = [[0, I], [-I, 0]]`, i.e. `ω₀ = Σ dqⁱ ∧ dpᵢ`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{eval2, eval_value, parse, Dual2, Expr, SymbolTable};

/// Absolute antisymmetry tolerance for stored two-forms.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Coordinate chart of the configuration manifold together with the box
/// used for sampling-based certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    names: Vec<String>,
    periodic: Vec<bool>,
    q_box: Vec<Interval>,
    qdot_box: Vec<Interval>,
}

impl ConfigSpace {
    pub fn new(
        names: Vec<String>,
        periodic: Vec<bool>,
        q_box: Vec<Interval>,
        qdot_box: Vec<Interval>,
    ) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::Space("dimension must be at least 1".into()));
        }
        if periodic.len() != n || q_box.len() != n || qdot_box.len() != n {
            return Err(Error::Space(format!(
                "{n} coordinates but {} periodic flags, {} position and {} velocity intervals",
                periodic.len(),
                q_box.len(),
                qdot_box.len()
            )));
        }
        for (i, b) in q_box.iter().chain(qdot_box.iter()).enumerate() {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(Error::Space(format!(
                    "box interval #{i} [{}, {}] must be finite with lower < upper",
                    b.lo, b.hi
                )));
            }
        }
        Ok(ConfigSpace {
            names,
            periodic,
            q_box,
            qdot_box,
        })
    }

    /// Unperiodic chart with the same box `[lo, hi]` for every coordinate
    /// and velocity.
    pub fn euclidean(names: &[&str], lo: f64, hi: f64) -> Result<Self> {
        let n = names.len();
        ConfigSpace::new(
            names.iter().map(|s| s.to_string()).collect(),
            vec![false; n],
            vec![Interval::new(lo, hi); n],
            vec![Interval::new(lo, hi); n],
        )
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn q_box(&self) -> &[Interval] {
        &self.q_box
    }

    pub fn qdot_box(&self) -> &[Interval] {
        &self.qdot_box
    }

    /// Restrict to the given coordinate indices (in order).
    pub fn select(&self, indices: &[usize]) -> Result<ConfigSpace> {
        ConfigSpace::new(
            indices.iter().map(|&i| self.names[i].clone()).collect(),
            indices.iter().map(|&i| self.periodic[i]).collect(),
            indices.iter().map(|&i| self.q_box[i]).collect(),
            indices.iter().map(|&i| self.qdot_box[i]).collect(),
        )
    }

    /// Reduce periodic coordinates into `[0, 2π)`.
    pub fn wrap(&self, q: &mut [f64]) {
        for (x, &p) in q.iter_mut().zip(&self.periodic) {
            if p {
                *x = x.rem_euclid(TAU);
                if *x >= TAU {
                    *x = 0.0;
                }
            }
        }
    }

    pub fn wrapped(&self, v: &TangentPoint) -> TangentPoint {
        let mut out = v.clone();
        self.wrap(&mut out.q);
        out
    }

    pub fn center(&self) -> TangentPoint {
        TangentPoint::new(
            self.q_box.iter().map(Interval::center).collect(),
            self.qdot_box.iter().map(Interval::center).collect(),
        )
    }

    /// `count` deterministic sample points: the box center followed by
    /// uniform draws from a ChaCha8 stream seeded with `seed`.
    pub fn samples(&self, count: usize, seed: u64) -> Vec<TangentPoint> {
        let mut sampler = Sampler::new(seed);
        let mut out = Vec::with_capacity(count);
        if count > 0 {
            out.push(self.wrapped(&self.center()));
        }
        while out.len() < count {
            out.push(sampler.tangent(self));
        }
        out
    }

    /// Uniform random draws only (no center point).
    pub fn random_samples(&self, count: usize, seed: u64) -> Vec<TangentPoint> {
        let mut sampler = Sampler::new(seed);
        (0..count).map(|_| sampler.tangent(self)).collect()
    }
}

/// Seeded uniform sampler.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn interval(&mut self, b: &Interval) -> f64 {
        self.uniform(b.lo, b.hi)
    }

    pub fn vector(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    pub fn tangent(&mut self, space: &ConfigSpace) -> TangentPoint {
        let q = space.q_box.iter().map(|b| self.interval(b)).collect();
        let qdot = space.qdot_box.iter().map(|b| self.interval(b)).collect();
        space.wrapped(&TangentPoint::new(q, qdot))
    }
}

/// A point `(q, q̇)` of TQ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentPoint {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl TangentPoint {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Self {
        assert_eq!(q.len(), qdot.len(), "position/velocity length mismatch");
        TangentPoint { q, qdot }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// The chart state `[q, q̇]`.
    pub fn state(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.qdot);
        z
    }

    pub fn from_state(z: &[f64]) -> Self {
        assert!(z.len().is_multiple_of(2), "state length must be even");
        let n = z.len() / 2;
        TangentPoint::new(z[..n].to_vec(), z[n..].to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).all(|x| x.is_finite())
    }
}

/// A point `(q, p)` of T*Q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotangentPoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl CotangentPoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(q.len(), p.len(), "position/momentum length mismatch");
        CotangentPoint { q, p }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn state(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.p);
        z
    }

    pub fn from_state(z: &[f64]) -> Self {
        let n = z.len() / 2;
        CotangentPoint::new(z[..n].to_vec(), z[n..].to_vec())
    }
}

/// An element of T(TQ): a base point with components `(dq, dq̇)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleTangentVector {
    pub base: TangentPoint,
    pub dq: Vec<f64>,
    pub dqdot: Vec<f64>,
}

impl DoubleTangentVector {
    pub fn new(base: TangentPoint, dq: Vec<f64>, dqdot: Vec<f64>) -> Self {
        assert_eq!(dq.len(), base.dim());
        assert_eq!(dqdot.len(), base.dim());
        DoubleTangentVector { base, dq, dqdot }
    }

    pub fn zero(base: TangentPoint) -> Self {
        let n = base.dim();
        DoubleTangentVector::new(base, vec![0.0; n], vec![0.0; n])
    }

    pub fn from_components(base: TangentPoint, c: &DVector<f64>) -> Self {
        let n = base.dim();
        assert_eq!(c.len(), 2 * n);
        DoubleTangentVector::new(
            base,
            c.rows(0, n).iter().copied().collect(),
            c.rows(n, n).iter().copied().collect(),
        )
    }

    pub fn components(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.dq.len(),
            self.dq.iter().chain(&self.dqdot).copied(),
        )
    }

    /// Component-wise sum; bases must agree.
    pub fn plus(&self, other: &DoubleTangentVector) -> DoubleTangentVector {
        debug_assert_eq!(self.base, other.base);
        DoubleTangentVector::new(
            self.base.clone(),
            self.dq.iter().zip(&other.dq).map(|(a, b)| a + b).collect(),
            self.dqdot.iter().zip(&other.dqdot).map(|(a, b)| a + b).collect(),
        )
    }

    /// True when the `dq` component vanishes identically.
    pub fn is_vertical(&self) -> bool {
        self.dq.iter().all(|x| *x == 0.0)
    }
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A two-form at a point, stored as its antisymmetric chart matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFormAtPoint {
    pub base: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub symplectic: bool,
}

impl TwoFormAtPoint {
    pub fn new(base: Vec<f64>, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("two-form matrix must be square".into()));
        }
        let asym = antisymmetry_defect(&matrix);
        if asym > ANTISYMMETRY_TOL {
            return Err(Error::Invalid(format!(
                "two-form matrix is not antisymmetric (defect {asym:e})"
            )));
        }
        Ok(TwoFormAtPoint {
            base,
            matrix,
            symplectic: false,
        })
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        let u = DVector::from_column_slice(u);
        let v = DVector::from_column_slice(v);
        u.dot(&(&self.matrix * v))
    }

    pub fn min_singular_value(&self) -> f64 {
        min_singular_value(&self.matrix)
    }

    /// Flag as symplectic after checking nondegeneracy.
    pub fn into_symplectic(mut self, threshold: f64) -> Result<Self> {
        let s = self.min_singular_value();
        if !(s > threshold) {
            return Err(Error::DegenerateForm(s));
        }
        self.symplectic = true;
        Ok(self)
    }
}

pub fn antisymmetry_defect(m: &DMatrix<f64>) -> f64 {
    max_abs((m + m.transpose()).iter().copied())
}

/// `½(P − Pᵀ)`, exactly antisymmetric in floating point.
pub fn antisymmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p - p.transpose()) * 0.5
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// `Ω₀ = [[0, I], [-I, 0]]` of size `2n`.
pub fn canonical_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = 1.0;
        m[(n + i, i)] = -1.0;
    }
    m
}

/// The canonical symplectic form of T*Q at `point`.
pub fn canonical_form(point: &CotangentPoint) -> TwoFormAtPoint {
    TwoFormAtPoint {
        base: point.state(),
        matrix: canonical_matrix(point.dim()),
        symplectic: true,
    }
}

/// Pull `form` back along a map with Jacobian `jac`: `Jᵀ Ω J`, at the
/// pre-image point `base`.
pub fn pullback_form(jac: &DMatrix<f64>, form: &TwoFormAtPoint, base: Vec<f64>) -> TwoFormAtPoint {
    let p = jac.transpose() * &form.matrix * jac;
    TwoFormAtPoint {
        base,
        matrix: antisymmetrize(&p),
        symplectic: false,
    }
}

/// A configuration map φ: Q₁ → Q₂ given by component expressions, with an
/// optional inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    source: SymbolTable,
    target: SymbolTable,
    forward: Vec<Expr>,
    inverse: Option<Vec<Expr>>,
}

impl PointMap {
    /// Build from source text. `params` are shared by forward and inverse
    /// components.
    pub fn new(
        source_coords: &[&str],
        target_coords: &[&str],
        forward: &[&str],
        inverse: Option<&[&str]>,
        params: &[(&str, f64)],
    ) -> Result<Self> {
        let source = SymbolTable::positions_only(source_coords, params)?;
        let target = SymbolTable::positions_only(target_coords, params)?;
        if forward.len() != target.dim() {
            return Err(Error::Dimension(format!(
                "map has {} components for a {}-dimensional target",
                forward.len(),
                target.dim()
            )));
        }
        let parse_all = |srcs: &[&str], table: &SymbolTable| -> Result<Vec<Expr>> {
            srcs.iter()
                .map(|s| {
                    parse(s, table).map_err(|error| Error::Parse {
                        source_text: s.to_string(),
                        error,
                    })
                })
                .collect()
        };
        let fwd = parse_all(forward, &source)?;
        let inv = match inverse {
            Some(srcs) => {
                if srcs.len() != source.dim() {
                    return Err(Error::Dimension(format!(
                        "inverse has {} components for a {}-dimensional source",
                        srcs.len(),
                        source.dim()
                    )));
                }
                Some(parse_all(srcs, &target)?)
            }
            None => None,
        };
        Ok(PointMap {
            source,
            target,
            forward: fwd,
            inverse: inv,
        })
    }

    pub fn from_parts(
        source: SymbolTable,
        target: SymbolTable,
        forward: Vec<Expr>,
        inverse: Option<Vec<Expr>>,
    ) -> Self {
        PointMap {
            source,
            target,
            forward,
            inverse,
        }
    }

    pub fn identity(coords: &[&str]) -> Result<Self> {
        PointMap::new(coords, coords, coords, Some(coords), &[])
    }

    pub fn source_dim(&self) -> usize {
        self.source.dim()
    }

    pub fn target_dim(&self) -> usize {
        self.target.dim()
    }

    pub fn source_table(&self) -> &SymbolTable {
        &self.source
    }

    pub fn target_table(&self) -> &SymbolTable {
        &self.target
    }

    pub fn forward_exprs(&self) -> &[Expr] {
        &self.forward
    }

    pub fn inverse_exprs(&self) -> Option<&[Expr]> {
        self.inverse.as_deref()
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    /// The inverse map φ⁻¹: Q₂ → Q₁.
    pub fn inverse(&self) -> Result<PointMap> {
        let inv = self.inverse.clone().ok_or(Error::MissingInverse)?;
        Ok(PointMap {
            source: self.target.clone(),
            target: self.source.clone(),
            forward: inv,
            inverse: Some(self.forward.clone()),
        })
    }

    fn params(&self) -> Vec<f64> {
        self.source.param_values()
    }

    fn check_source(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.source_dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, map expects {}",
                q.len(),
                self.source_dim()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_source(q)?;
        let params = self.params();
        self.forward
            .iter()
            .map(|e| Ok(eval_value(e, &self.source, q, &params)?))
            .collect()
    }

    /// Component jets (value, gradient, Hessian) at `q`.
    pub fn jets(&self, q: &[f64]) -> Result<Vec<Dual2>> {
        self.check_source(q)?;
        let params = self.params();
        self.forward
            .iter()
            .map(|e| Ok(eval2(e, &self.source, q, &params)?))
            .collect()
    }

    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let jets = self.jets(q)?;
        Ok(jacobian_of(&jets, self.source_dim()))
    }

    /// `Tφ(q, q̇) = (φ(q), Dφ(q) q̇)`.
    pub fn tangent_lift(&self, v: &TangentPoint) -> Result<TangentPoint> {
        let jets = self.jets(&v.q)?;
        let j = jacobian_of(&jets, self.source_dim());
        let qdot = &j * DVector::from_column_slice(&v.qdot);
        Ok(TangentPoint::new(
            jets.iter().map(|d| d.value).collect(),
            qdot.iter().copied().collect(),
        ))
    }

    /// Jacobian of Tφ with respect to `(q, q̇)`:
    /// `[[Dφ, 0], [∂(Dφ q̇)/∂q, Dφ]]`.
    pub fn tangent_lift_jacobian(&self, v: &TangentPoint) -> Result<DMatrix<f64>> {
        let jets = self.jets(&v.q)?;
        Ok(self.lift_jacobian_from(&jets, &v.qdot))
    }

    fn lift_jacobian_from(&self, jets: &[Dual2], qdot: &[f64]) -> DMatrix<f64> {
        let (m, n) = (self.target_dim(), self.source_dim());
        let j = jacobian_of(jets, n);
        let qd = DVector::from_column_slice(qdot);
        let mut out = DMatrix::zeros(2 * m, 2 * n);
        out.view_mut((0, 0), (m, n)).copy_from(&j);
        out.view_mut((m, n), (m, n)).copy_from(&j);
        for (i, d) in jets.iter().enumerate() {
            // row i of ∂(Dφ q̇)/∂q is (Hᵢ q̇)ᵀ
            let row = &d.hessian * &qd;
            for k in 0..n {
                out[(m + i, k)] = row[k];
            }
        }
        out
    }

    /// `T(Tφ) w`: base moved by Tφ, components pushed by the Jacobian of Tφ.
    pub fn double_tangent_lift(&self, w: &DoubleTangentVector) -> Result<DoubleTangentVector> {
        let jets = self.jets(&w.base.q)?;
        let jac = self.lift_jacobian_from(&jets, &w.base.qdot);
        let base = self.tangent_lift(&w.base)?;
        Ok(DoubleTangentVector::from_components(
            base,
            &(jac * w.components()),
        ))
    }

    /// `max |φ(φ⁻¹(Q)) − Q|` over images of samples, and
    /// `max |φ⁻¹(φ(q)) − q|` over the samples themselves.
    pub fn inverse_defect(&self, space: &ConfigSpace, samples: usize, seed: u64) -> Result<f64> {
        let inv = self.inverse()?;
        let mut worst: f64 = 0.0;
        for v in space.samples(samples, seed) {
            let image = self.apply(&v.q)?;
            let back = inv.apply(&image)?;
            worst = worst.max(max_abs_diff(&back, &v.q));
            let again = self.apply(&back)?;
            worst = worst.max(max_abs_diff(&again, &image));
        }
        Ok(worst)
    }

    /// ψ ∘ φ, where `self` is φ. Parameters of ψ are appended after φ's.
    pub fn then(&self, psi: &PointMap) -> Result<PointMap> {
        if psi.source_dim() != self.target_dim() {
            return Err(Error::Dimension("composition dimensions differ".into()));
        }
        let own = self.source.params().len();
        let merged: Vec<(String, f64)> = self
            .source
            .params()
            .iter()
            .chain(psi.source.params())
            .cloned()
            .collect();
        let merged_ref: Vec<(&str, f64)> = merged.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        let names = |t: &SymbolTable| -> Vec<String> { t.coords().to_vec() };
        let src_names = names(&self.source);
        let tgt_names = names(&psi.target);
        let src: Vec<&str> = src_names.iter().map(String::as_str).collect();
        let tgt: Vec<&str> = tgt_names.iter().map(String::as_str).collect();
        let source = SymbolTable::positions_only(&src, &merged_ref)?;
        let target = SymbolTable::positions_only(&tgt, &merged_ref)?;
        let shift = |i: usize| i + own;
        let keep = |i: usize| i;
        let fwd: Vec<Expr> = psi
            .forward
            .iter()
            .map(|e| e.remap_params(&shift).substitute(&self.forward))
            .collect();
        let inverse = match (&self.inverse, &psi.inverse) {
            (Some(phi_inv), Some(psi_inv)) => {
                let psi_inv: Vec<Expr> = psi_inv.iter().map(|e| e.remap_params(&shift)).collect();
                Some(
                    phi_inv
                        .iter()
                        .map(|e| e.remap_params(&keep).substitute(&psi_inv))
                        .collect(),
                )
            }
            _ => None,
        };
        Ok(PointMap {
            source,
            target,
            forward: fwd,
            inverse,
        })
    }
}

/// Jacobian rows from component jets, restricted to the first `n` variables.
pub fn jacobian_of(jets: &[Dual2], n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(jets.len(), n);
    for (i, d) in jets.iter().enumerate() {
        for k in 0..n {
            j[(i, k)] = d.gradient[k];
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(q: &[f64], qd: &[f64]) -> TangentPoint {
        TangentPoint::new(q.to_vec(), qd.to_vec())
    }

    #[test]
    fn canonical_form_pairs() {
        let f1 = canonical_form(&CotangentPoint::new(vec![0.0], vec![0.0]));
        assert_eq!(f1.eval(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(f1.eval(&[0.3, -0.7], &[0.3, -0.7]), 0.0);
        let f2 = canonical_form(&CotangentPoint::new(vec![0.0; 2], vec![0.0; 2]));
        assert_eq!(f2.eval(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]), 0.0);
        assert_eq!(f2.eval(&[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0]), 1.0);
    }

    #[test]
    fn tangent_lifts() {
        let double = PointMap::new(&["q"], &["Q"], &["2*q"], Some(&["Q/2"]), &[]).unwrap();
        assert_eq!(double.tangent_lift(&tp(&[1.0], &[3.0])).unwrap(), tp(&[2.0], &[6.0]));
        let id = PointMap::identity(&["a", "b"]).unwrap();
        let v = tp(&[0.3, -1.0], &[2.0, 5.0]);
        assert_eq!(id.tangent_lift(&v).unwrap(), v);
        let cubic = PointMap::new(&["q"], &["Q"], &["q + q^3"], None, &[]).unwrap();
        // Dφ = 1 + 3q² = 4 at q = 1
        assert_eq!(cubic.tangent_lift(&tp(&[1.0], &[1.0])).unwrap(), tp(&[2.0], &[4.0]));
    }

    #[test]
    fn double_tangent_lifts() {
        let double = PointMap::new(&["q"], &["Q"], &["2*q"], None, &[]).unwrap();
        let w = DoubleTangentVector::new(tp(&[1.0], &[1.0]), vec![1.0], vec![1.0]);
        let out = double.double_tangent_lift(&w).unwrap();
        assert_eq!(out, DoubleTangentVector::new(tp(&[2.0], &[2.0]), vec![2.0], vec![2.0]));

        let id = PointMap::identity(&["q"]).unwrap();
        assert_eq!(id.double_tangent_lift(&w).unwrap(), w);

        // Tφ(q, q̇) = (q², 2 q q̇); Jacobian at (1,1) is [[2, 0], [2, 2]]
        let square = PointMap::new(&["q"], &["Q"], &["q^2"], None, &[]).unwrap();
        let w = DoubleTangentVector::new(tp(&[1.0], &[1.0]), vec![1.0], vec![0.0]);
        let out = square.double_tangent_lift(&w).unwrap();
        assert_eq!(out, DoubleTangentVector::new(tp(&[1.0], &[2.0]), vec![2.0], vec![2.0]));
    }

    #[test]
    fn pullback_examples() {
        let omega0 = canonical_form(&CotangentPoint::new(vec![0.0], vec![0.0]));
        let same = pullback_form(&DMatrix::identity(2, 2), &omega0, vec![0.0, 0.0]);
        assert_eq!(same.matrix, omega0.matrix);
        let scaled = pullback_form(&(DMatrix::identity(2, 2) * 2.0), &omega0, vec![0.0, 0.0]);
        assert_eq!(scaled.matrix, &omega0.matrix * 4.0);
        // FL for L = ½ m q̇²: (q, q̇) ↦ (q, m q̇)
        let m = 2.5;
        let jac = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, m]);
        let pulled = pullback_form(&jac, &omega0, vec![0.0, 0.0]);
        assert_eq!(pulled.matrix, DMatrix::from_row_slice(2, 2, &[0.0, m, -m, 0.0]));
    }

    #[test]
    fn two_form_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(TwoFormAtPoint::new(vec![], bad).is_err());
        let degenerate = TwoFormAtPoint::new(vec![], DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            degenerate.into_symplectic(1e-10),
            Err(Error::DegenerateForm(_))
        ));
    }

    #[test]
    fn samples_are_seeded_and_start_at_center() {
        let space = ConfigSpace::new(
            vec!["r".into(), "th".into()],
            vec![false, true],
            vec![Interval::new(0.5, 3.0), Interval::new(0.0, TAU)],
            vec![Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)],
        )
        .unwrap();
        let a = space.samples(20, 7);
        let b = space.samples(20, 7);
        assert_eq!(a, b);
        assert_eq!(a[0].q[0], 1.75);
        assert_eq!(a[0].qdot, vec![0.0, 0.0]);
        assert!(a.iter().all(|v| (0.0..TAU).contains(&v.q[1])));
        assert_ne!(space.samples(20, 8), a);
    }

    #[test]
    fn space_validation() {
        assert!(ConfigSpace::euclidean(&[], -1.0, 1.0).is_err());
        assert!(ConfigSpace::euclidean(&["x"], 1.0, 1.0).is_err());
        let mut q = vec![-0.5, 7.0];
        let s = ConfigSpace::new(
            vec!["a".into(), "b".into()],
            vec![true, true],
            vec![Interval::new(0.0, 1.0); 2],
            vec![Interval::new(0.0, 1.0); 2],
        )
        .unwrap();
        s.wrap(&mut q);
        assert!((q[0] - (TAU - 0.5)).abs() < 1e-15);
        assert!((q[1] - (7.0 - TAU)).abs() < 1e-15);
    }

    #[test]
    fn composition_and_inverse() {
        let scale = PointMap::new(&["q"], &["Q"], &["2*q"], Some(&["Q/2"]), &[]).unwrap();
        let shift = PointMap::new(&["Q"], &["R"], &["Q + c"], Some(&["R - c"]), &[("c", 0.5)]).unwrap();
        let both = scale.then(&shift).unwrap();
        assert_eq!(both.apply(&[1.0]).unwrap(), vec![2.5]);
        let inv = both.inverse().unwrap();
        assert_eq!(inv.apply(&[2.5]).unwrap(), vec![1.0]);
        let space = ConfigSpace::euclidean(&["q"], -2.0, 2.0).unwrap();
        assert!(both.inverse_defect(&space, 50, 0).unwrap() < 1e-12);
    }
}
