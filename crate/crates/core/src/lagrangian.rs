//! Regular Lagrangian systems on TQ: fiber derivative, hyperregularity,
//! inverse Legendre transform, action, energy and the Lagrangian forms.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{eval2, eval_value, parse, Expr, SymbolTable};
use crate::geometry::{
    antisymmetrize, canonical_matrix, max_abs, min_singular_value, ConfigSpace, CotangentPoint,
    TangentPoint, TwoFormAtPoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Smallest admissible singular value of the velocity Hessian.
    pub hyperreg_min: f64,
    pub hyperreg_samples: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Smallest admissible singular value for forms flagged symplectic.
    pub symplectic_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hyperreg_min: 1e-8,
            hyperreg_samples: 512,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            symplectic_min: 1e-10,
        }
    }
}

/// Derivatives of L at one point of TQ.
///
/// `b[(i, j)] = ∂²L/∂q̇ⁱ∂qʲ`, `m[(i, j)] = ∂²L/∂q̇ⁱ∂q̇ʲ`.
#[derive(Debug, Clone)]
pub struct LagrangianJet {
    pub value: f64,
    pub dl_dq: DVector<f64>,
    pub p: DVector<f64>,
    pub b: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl LagrangianJet {
    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// Jacobian of FL over `(q, q̇)`: `[[I, 0], [B, M]]`.
    pub fn legendre_jacobian(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).fill_with_identity();
        j.view_mut((n, 0), (n, n)).copy_from(&self.b);
        j.view_mut((n, n), (n, n)).copy_from(&self.m);
        j
    }

    /// Chart gradient of E_L: `[Bᵀq̇ − ∂L/∂q, M q̇]`.
    pub fn energy_gradient(&self, qdot: &[f64]) -> DVector<f64> {
        let n = self.dim();
        let qd = DVector::from_column_slice(qdot);
        let top = self.b.tr_mul(&qd) - &self.dl_dq;
        let bottom = &self.m * &qd;
        let mut g = DVector::zeros(2 * n);
        g.rows_mut(0, n).copy_from(&top);
        g.rows_mut(n, n).copy_from(&bottom);
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperregularityCertificate {
    pub samples: usize,
    pub seed: u64,
    pub min_abs_det: f64,
    pub min_singular: f64,
    /// Sample state `[q, q̇]` with the smallest singular value.
    pub witness: Vec<f64>,
    pub passed: bool,
}

/// A regular Lagrangian system `(TQ, ω^L, L)`.
#[derive(Debug, Clone)]
pub struct LagrangianSystem {
    name: String,
    space: ConfigSpace,
    table: SymbolTable,
    source: String,
    lagrangian: Expr,
    tolerances: Tolerances,
}

impl LagrangianSystem {
    /// Parse and certify hyperregularity on the sampling box (seed 0).
    pub fn new(
        name: &str,
        space: ConfigSpace,
        lagrangian: &str,
        params: &[(&str, f64)],
        tolerances: Tolerances,
    ) -> Result<Self> {
        let sys = Self::unchecked(name, space, lagrangian, params, tolerances)?;
        sys.check_hyperregular(tolerances.hyperreg_samples, 0)?;
        Ok(sys)
    }

    /// Parse without the hyperregularity certificate.
    pub fn unchecked(
        name: &str,
        space: ConfigSpace,
        lagrangian: &str,
        params: &[(&str, f64)],
        tolerances: Tolerances,
    ) -> Result<Self> {
        let names: Vec<&str> = space.names().iter().map(String::as_str).collect();
        let table = SymbolTable::new(&names, params)?;
        let expr = parse(lagrangian, &table).map_err(|error| Error::Parse {
            source_text: lagrangian.to_string(),
            error,
        })?;
        Ok(LagrangianSystem {
            name: name.to_string(),
            space,
            table,
            source: lagrangian.to_string(),
            lagrangian: expr,
            tolerances,
        })
    }

    /// Build from an already parsed expression over `table`.
    pub fn from_expr(
        name: &str,
        space: ConfigSpace,
        table: SymbolTable,
        lagrangian: Expr,
        tolerances: Tolerances,
    ) -> Result<Self> {
        if table.dim() != space.dim() || !table.has_velocities() {
            return Err(Error::Dimension(
                "symbol table does not match the configuration space".into(),
            ));
        }
        let source = lagrangian.display(&table).to_string();
        Ok(LagrangianSystem {
            name: name.to_string(),
            space,
            table,
            source,
            lagrangian,
            tolerances,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn table(&self) -> &SymbolTable {
        &self.table
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    pub fn params(&self) -> Vec<f64> {
        self.table.param_values()
    }

    fn check_point(&self, v: &TangentPoint) -> Result<()> {
        if v.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "tangent point has dimension {}, system has {}",
                v.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn eval_err(&self, e: crate::expr::EvalError) -> Error {
        Error::Eval(e.describe(&self.lagrangian, &self.table))
    }

    pub fn value(&self, v: &TangentPoint) -> Result<f64> {
        self.check_point(v)?;
        eval_value(&self.lagrangian, &self.table, &v.state(), &self.params())
            .map_err(|e| self.eval_err(e))
    }

    pub fn jet(&self, v: &TangentPoint) -> Result<LagrangianJet> {
        self.check_point(v)?;
        let n = self.dim();
        let d = eval2(&self.lagrangian, &self.table, &v.state(), &self.params())
            .map_err(|e| self.eval_err(e))?;
        Ok(LagrangianJet {
            value: d.value,
            dl_dq: d.gradient.rows(0, n).into_owned(),
            p: d.gradient.rows(n, n).into_owned(),
            b: d.hessian.view((n, 0), (n, n)).into_owned(),
            m: d.hessian.view((n, n), (n, n)).into_owned(),
        })
    }

    /// `FL(q, q̇) = (q, ∂L/∂q̇)`.
    pub fn legendre_transform(&self, v: &TangentPoint) -> Result<CotangentPoint> {
        let jet = self.jet(v)?;
        Ok(CotangentPoint::new(v.q.clone(), jet.p.iter().copied().collect()))
    }

    pub fn velocity_hessian(&self, v: &TangentPoint) -> Result<DMatrix<f64>> {
        Ok(self.jet(v)?.m)
    }

    /// Sampling certificate for invertibility of `∂²L/∂q̇∂q̇`.
    pub fn hyperregularity(&self, samples: usize, seed: u64) -> Result<HyperregularityCertificate> {
        if samples == 0 {
            return Err(Error::Invalid("hyperregularity needs at least one sample".into()));
        }
        let mut min_sv = f64::INFINITY;
        let mut min_det = f64::INFINITY;
        let mut witness = Vec::new();
        for v in self.space.samples(samples, seed) {
            let m = self.velocity_hessian(&v)?;
            let sv = min_singular_value(&m);
            let det = m.clone().lu().determinant().abs();
            min_det = min_det.min(det);
            if sv < min_sv || witness.is_empty() {
                min_sv = sv;
                witness = v.state();
            }
        }
        Ok(HyperregularityCertificate {
            samples,
            seed,
            min_abs_det: min_det,
            min_singular: min_sv,
            witness,
            passed: min_sv >= self.tolerances.hyperreg_min,
        })
    }

    pub fn check_hyperregular(&self, samples: usize, seed: u64) -> Result<HyperregularityCertificate> {
        let cert = self.hyperregularity(samples, seed)?;
        if !cert.passed {
            return Err(Error::NotHyperregular {
                min_singular: cert.min_singular,
                witness: cert.witness,
            });
        }
        Ok(cert)
    }

    /// Newton solve of `∂L/∂q̇(q, q̇) = p` for q̇.
    ///
    /// Without a guess, starts from the linearization at q̇ = 0:
    /// `M(q, 0) q̇ = p − ∂L/∂q̇(q, 0)`.
    pub fn inverse_legendre(&self, alpha: &CotangentPoint, guess: Option<&[f64]>) -> Result<TangentPoint> {
        let n = self.dim();
        if alpha.dim() != n {
            return Err(Error::Dimension("cotangent point dimension".into()));
        }
        let target = DVector::from_column_slice(&alpha.p);
        let mut qdot = match guess {
            Some(g) => g.to_vec(),
            None => {
                let jet = self.jet(&TangentPoint::new(alpha.q.clone(), vec![0.0; n]))?;
                match jet.m.lu().solve(&(&target - &jet.p)) {
                    Some(x) => x.iter().copied().collect(),
                    None => vec![0.0; n],
                }
            }
        };
        let tol = self.tolerances.newton_tol * max_abs(alpha.p.iter().copied()).max(1.0);
        let mut residual = f64::INFINITY;
        for _ in 0..=self.tolerances.newton_max_iter {
            let v = TangentPoint::new(alpha.q.clone(), qdot.clone());
            let jet = self.jet(&v)?;
            let r = &jet.p - &target;
            residual = max_abs(r.iter().copied());
            if residual <= tol {
                return Ok(v);
            }
            let step = jet.m.lu().solve(&r).ok_or(Error::Singular("inverse Legendre Newton step"))?;
            for (x, s) in qdot.iter_mut().zip(step.iter()) {
                *x -= s;
            }
        }
        Err(Error::NoConvergence {
            residual,
            iterations: self.tolerances.newton_max_iter,
        })
    }

    /// `(A, E_L)` with `A = FL(v)·v` and `E_L = A − L`.
    pub fn action_energy(&self, v: &TangentPoint) -> Result<(f64, f64)> {
        let jet = self.jet(v)?;
        let a: f64 = jet.p.iter().zip(&v.qdot).map(|(p, qd)| p * qd).sum();
        Ok((a, a - jet.value))
    }

    pub fn energy(&self, v: &TangentPoint) -> Result<f64> {
        Ok(self.action_energy(v)?.1)
    }

    pub fn energy_gradient(&self, v: &TangentPoint) -> Result<DVector<f64>> {
        Ok(self.jet(v)?.energy_gradient(&v.qdot))
    }

    /// θ^L as a row `(∂L/∂q̇, 0)` in the basis `(dq, dq̇)`.
    pub fn lagrangian_one_form(&self, v: &TangentPoint) -> Result<Vec<f64>> {
        let n = self.dim();
        let jet = self.jet(v)?;
        let mut row: Vec<f64> = jet.p.iter().copied().collect();
        row.resize(2 * n, 0.0);
        Ok(row)
    }

    /// ω^L = FL*ω₀, computed as `J_FLᵀ Ω₀ J_FL`.
    pub fn lagrangian_two_form(&self, v: &TangentPoint) -> Result<TwoFormAtPoint> {
        let jet = self.jet(v)?;
        let form = two_form_from_jet(&jet, v.state());
        form.into_symplectic(self.tolerances.symplectic_min)
    }

    /// Ω^L assembled term by term from
    /// `Σ B_ij dqⁱ∧dqʲ + Σ M_ij dqⁱ∧dq̇ʲ`, with `α∧β ↦ αβᵀ − βαᵀ`.
    pub fn two_form_coordinate(&self, v: &TangentPoint) -> Result<DMatrix<f64>> {
        let jet = self.jet(v)?;
        let n = self.dim();
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        let mut wedge = |a: usize, b: usize, c: f64| {
            out[(a, b)] += c;
            out[(b, a)] -= c;
        };
        for i in 0..n {
            for j in 0..n {
                wedge(i, j, jet.b[(i, j)]);
                wedge(i, n + j, jet.m[(i, j)]);
            }
        }
        Ok(out)
    }
}

/// Ω^L from a jet, without the nondegeneracy check.
pub fn two_form_from_jet(jet: &LagrangianJet, base: Vec<f64>) -> TwoFormAtPoint {
    let j = jet.legendre_jacobian();
    let p = j.transpose() * canonical_matrix(jet.dim()) * &j;
    TwoFormAtPoint {
        base,
        matrix: antisymmetrize(&p),
        symplectic: false,
    }
}

/// Matrix of dθ for a covector field `a(z)` on TQ by central differences:
/// `D_lk = ∂_l a_k − ∂_k a_l`.
pub fn exterior_derivative_fd<F>(a: F, z: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let dim = z.len();
    let mut grad = DMatrix::zeros(dim, dim);
    let mut p = z.to_vec();
    for l in 0..dim {
        p[l] = z[l] + h;
        let plus = a(&p)?;
        p[l] = z[l] - h;
        let minus = a(&p)?;
        p[l] = z[l];
        for k in 0..dim {
            grad[(l, k)] = (plus[k] - minus[k]) / (2.0 * h);
        }
    }
    Ok(&grad - grad.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(names: &[&str], l: &str, params: &[(&str, f64)]) -> LagrangianSystem {
        let space = ConfigSpace::euclidean(names, -2.0, 2.0).unwrap();
        LagrangianSystem::unchecked("t", space, l, params, Tolerances::default()).unwrap()
    }

    fn cart() -> LagrangianSystem {
        sys(
            &["s", "phi"],
            "(M+m)*s_dot^2/2 + m*l*s_dot*phi_dot*cos(phi) + m*l^2*phi_dot^2/2 - m*g*l*cos(phi)",
            &[("M", 1.0), ("m", 1.0), ("l", 1.0), ("g", 1.0)],
        )
    }

    fn tp(q: &[f64], qd: &[f64]) -> TangentPoint {
        TangentPoint::new(q.to_vec(), qd.to_vec())
    }

    #[test]
    fn legendre_examples() {
        let free = sys(&["x", "y"], "(x_dot^2 + y_dot^2)/2", &[]);
        let a = free.legendre_transform(&tp(&[1.0, 2.0], &[3.0, 4.0])).unwrap();
        assert_eq!(a, CotangentPoint::new(vec![1.0, 2.0], vec![3.0, 4.0]));
        let mass = sys(&["x"], "2*x_dot^2/2", &[]);
        assert_eq!(mass.legendre_transform(&tp(&[0.0], &[3.0])).unwrap().p, vec![6.0]);
        // p_s = (M+m) ṡ + m l φ̇ cos φ, p_φ = m l ṡ cos φ + m l² φ̇
        let p = cart().legendre_transform(&tp(&[0.0, 0.0], &[1.0, 1.0])).unwrap().p;
        assert_eq!(p, vec![3.0, 2.0]);
    }

    #[test]
    fn hyperregularity_examples() {
        let ho = sys(&["q"], "q_dot^2/2 - q^2/2", &[]);
        let c = ho.check_hyperregular(64, 1).unwrap();
        assert_eq!(c.min_abs_det, 1.0);
        let flat = sys(&["x", "y"], "x_dot^2/2", &[]);
        assert!(matches!(
            flat.check_hyperregular(16, 1),
            Err(Error::NotHyperregular { .. })
        ));
        // M = 3q̇², singular at the box center q̇ = 0
        let quartic = sys(&["q"], "q_dot^4/4", &[]);
        match quartic.check_hyperregular(16, 1) {
            Err(Error::NotHyperregular { witness, min_singular }) => {
                assert_eq!(witness[1], 0.0);
                assert_eq!(min_singular, 0.0);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn inverse_legendre_examples() {
        let free = sys(&["q"], "q_dot^2/2", &[]);
        let v = free.inverse_legendre(&CotangentPoint::new(vec![1.0], vec![5.0]), None).unwrap();
        assert_eq!(v, tp(&[1.0], &[5.0]));
        let mass = sys(&["q"], "2*q_dot^2/2", &[]);
        let v = mass.inverse_legendre(&CotangentPoint::new(vec![0.0], vec![6.0]), None).unwrap();
        assert_eq!(v, tp(&[0.0], &[3.0]));
        let v = cart()
            .inverse_legendre(&CotangentPoint::new(vec![0.0, 0.0], vec![3.0, 2.0]), None)
            .unwrap();
        assert!((v.qdot[0] - 1.0).abs() < 1e-12 && (v.qdot[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_legendre_nonquadratic() {
        // p = q̇ + q̇³, needs several Newton steps
        let s = sys(&["q"], "q_dot^2/2 + q_dot^4/4", &[]);
        let v = s.inverse_legendre(&CotangentPoint::new(vec![0.0], vec![10.0]), None).unwrap();
        assert!((v.qdot[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn action_energy_examples() {
        let ho = sys(&["q"], "q_dot^2/2 - q^2/2", &[]);
        assert_eq!(ho.action_energy(&tp(&[1.0], &[0.0])).unwrap(), (0.0, 0.5));
        let free = sys(&["q"], "q_dot^2/2", &[]);
        assert_eq!(free.action_energy(&tp(&[0.0], &[3.0])).unwrap(), (9.0, 4.5));
        let cf = sys(&["r", "theta"], "(r_dot^2 + r^2*theta_dot^2)/2 + 1/r", &[]);
        assert_eq!(cf.action_energy(&tp(&[1.0, 0.0], &[0.0, 1.0])).unwrap(), (1.0, -0.5));
    }

    #[test]
    fn one_form_examples() {
        let free = sys(&["q"], "q_dot^2/2", &[]);
        assert_eq!(free.lagrangian_one_form(&tp(&[0.0], &[3.0])).unwrap(), vec![3.0, 0.0]);
        let free2 = sys(&["x", "y"], "(x_dot^2 + y_dot^2)/2", &[]);
        assert_eq!(
            free2.lagrangian_one_form(&tp(&[0.0, 0.0], &[1.0, 2.0])).unwrap(),
            vec![1.0, 2.0, 0.0, 0.0]
        );
        assert_eq!(
            cart().lagrangian_one_form(&tp(&[0.0, 0.0], &[1.0, 1.0])).unwrap(),
            vec![3.0, 2.0, 0.0, 0.0]
        );
    }

    #[test]
    fn two_form_examples() {
        let free = sys(&["q"], "q_dot^2/2", &[]);
        let w = free.lagrangian_two_form(&tp(&[0.3], &[0.1])).unwrap();
        assert_eq!(w.matrix, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert!(w.symplectic);
        let m = 3.5;
        let heavy = sys(&["q"], "m*q_dot^2/2", &[("m", m)]);
        let w = heavy.lagrangian_two_form(&tp(&[0.3], &[0.1])).unwrap();
        assert_eq!(w.matrix, DMatrix::from_row_slice(2, 2, &[0.0, m, -m, 0.0]));
    }

    #[test]
    fn pullback_matches_coordinate_formula() {
        let c = cart();
        for v in c.space().samples(20, 3) {
            let w = c.lagrangian_two_form(&v).unwrap();
            let coord = c.two_form_coordinate(&v).unwrap();
            assert!(max_abs((&w.matrix - coord).iter().copied()) < 1e-12);
        }
    }

    #[test]
    fn one_form_derivative_is_minus_two_form() {
        let c = cart();
        for v in c.space().samples(10, 4) {
            let d = exterior_derivative_fd(
                |z| c.lagrangian_one_form(&TangentPoint::from_state(z)),
                &v.state(),
                1e-4,
            )
            .unwrap();
            let w = c.lagrangian_two_form(&v).unwrap();
            assert!(max_abs((d + &w.matrix).iter().copied()) < 2e-6);
        }
    }
}
