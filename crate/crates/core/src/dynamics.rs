//! Euler-Lagrange vector fields, the Hamiltonian side, FL-relatedness and
//! fixed-step integration with conservation monitors.
//!
//! Fields are produced by the symplectic linear solve `−Ω ξ = ∇E`, which is
//! `i_ξ ω = dE` under the convention `ω(u, v) = uᵀ Ω v`. The explicit
//! second-order ODE is kept as an independent oracle.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    canonical_matrix, max_abs, ConfigSpace, CotangentPoint, DoubleTangentVector, TangentPoint,
    TwoFormAtPoint,
};
use crate::lagrangian::LagrangianSystem;

/// Raw dq must match q̇ to this relative accuracy before it is snapped.
pub const SECOND_ORDER_TOL: f64 = 1e-9;
/// Any state component beyond this aborts integration.
pub const BLOW_UP: f64 = 1e12;

/// Chart-level interface shared by full and reduced Lagrangian systems.
pub trait ChartSystem {
    fn name(&self) -> &str;
    fn space(&self) -> &ConfigSpace;
    fn energy(&self, v: &TangentPoint) -> Result<f64>;
    fn energy_gradient(&self, v: &TangentPoint) -> Result<DVector<f64>>;
    /// The (nondegenerate) two-form at `v`.
    fn two_form(&self, v: &TangentPoint) -> Result<TwoFormAtPoint>;
    fn legendre(&self, v: &TangentPoint) -> Result<CotangentPoint>;
    /// Jacobian of the Legendre map over `(q, q̇)`.
    fn legendre_jacobian(&self, v: &TangentPoint) -> Result<DMatrix<f64>>;
    fn newton_tolerance(&self) -> (f64, usize) {
        (1e-12, 50)
    }

    fn dof(&self) -> usize {
        self.space().dim()
    }

    /// One Newton step towards `legendre(v) = alpha`, holding q fixed.
    /// Returns the updated point and the residual before the step.
    fn newton_step(&self, alpha: &CotangentPoint, v: &TangentPoint) -> Result<(TangentPoint, f64)> {
        let n = self.dof();
        let p = self.legendre(v)?.p;
        let r = DVector::from_iterator(n, p.iter().zip(&alpha.p).map(|(a, b)| a - b));
        let residual = max_abs(r.iter().copied());
        let j = self.legendre_jacobian(v)?;
        let m = j.view((n, n), (n, n)).into_owned();
        let step = m.lu().solve(&r).ok_or(Error::Singular("Legendre Newton step"))?;
        let qdot = v.qdot.iter().zip(step.iter()).map(|(x, s)| x - s).collect();
        Ok((TangentPoint::new(v.q.clone(), qdot), residual))
    }

    fn inverse_legendre(&self, alpha: &CotangentPoint, guess: Option<&[f64]>) -> Result<TangentPoint> {
        let n = self.dof();
        let (tol, max_iter) = self.newton_tolerance();
        let tol = tol * max_abs(alpha.p.iter().copied()).max(1.0);
        let mut v = TangentPoint::new(
            alpha.q.clone(),
            guess.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]),
        );
        let mut residual = f64::INFINITY;
        for _ in 0..=max_iter {
            let (next, r) = self.newton_step(alpha, &v)?;
            residual = r;
            if r <= tol {
                return Ok(v);
            }
            v = next;
        }
        Err(Error::NoConvergence {
            residual,
            iterations: max_iter,
        })
    }
}

impl ChartSystem for LagrangianSystem {
    fn name(&self) -> &str {
        LagrangianSystem::name(self)
    }

    fn space(&self) -> &ConfigSpace {
        LagrangianSystem::space(self)
    }

    fn energy(&self, v: &TangentPoint) -> Result<f64> {
        LagrangianSystem::energy(self, v)
    }

    fn energy_gradient(&self, v: &TangentPoint) -> Result<DVector<f64>> {
        LagrangianSystem::energy_gradient(self, v)
    }

    fn two_form(&self, v: &TangentPoint) -> Result<TwoFormAtPoint> {
        self.lagrangian_two_form(v)
    }

    fn legendre(&self, v: &TangentPoint) -> Result<CotangentPoint> {
        self.legendre_transform(v)
    }

    fn legendre_jacobian(&self, v: &TangentPoint) -> Result<DMatrix<f64>> {
        Ok(self.jet(v)?.legendre_jacobian())
    }

    fn newton_tolerance(&self) -> (f64, usize) {
        (self.tolerances().newton_tol, self.tolerances().newton_max_iter)
    }

    fn inverse_legendre(&self, alpha: &CotangentPoint, guess: Option<&[f64]>) -> Result<TangentPoint> {
        LagrangianSystem::inverse_legendre(self, alpha, guess)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    EulerLagrange,
    Controlled,
    ReducedLift,
}

/// A vector field on TQ: `v ↦ ξ(v) ∈ T_v(TQ)`.
pub trait VectorField {
    fn kind(&self) -> FieldKind;
    fn dim(&self) -> usize;
    fn eval(&self, v: &TangentPoint) -> Result<DoubleTangentVector>;
}

/// Solve `−Ω ξ = ∇E` at `v` without touching the dq components.
pub fn solve_raw<S: ChartSystem + ?Sized>(sys: &S, v: &TangentPoint) -> Result<DoubleTangentVector> {
    let omega = sys.two_form(v)?;
    let grad = sys.energy_gradient(v)?;
    let xi = (-omega.matrix)
        .lu()
        .solve(&grad)
        .ok_or(Error::Singular("symplectic field solve"))?;
    Ok(DoubleTangentVector::from_components(v.clone(), &xi))
}

/// Largest `|dq − q̇|` of a raw solve, relative to `max(1, |q̇|∞)`.
pub fn second_order_defect(xi: &DoubleTangentVector) -> f64 {
    let scale = max_abs(xi.base.qdot.iter().copied()).max(1.0);
    xi.dq
        .iter()
        .zip(&xi.base.qdot)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

/// The Euler-Lagrange field of a chart system.
pub struct EulerLagrangeField<'a, S: ChartSystem + ?Sized> {
    pub sys: &'a S,
}

impl<'a, S: ChartSystem + ?Sized> EulerLagrangeField<'a, S> {
    pub fn new(sys: &'a S) -> Self {
        EulerLagrangeField { sys }
    }
}

impl<S: ChartSystem + ?Sized> VectorField for EulerLagrangeField<'_, S> {
    fn kind(&self) -> FieldKind {
        FieldKind::EulerLagrange
    }

    fn dim(&self) -> usize {
        self.sys.dof()
    }

    /// The linear solve, with dq then set to q̇ once it agrees to
    /// [`SECOND_ORDER_TOL`].
    fn eval(&self, v: &TangentPoint) -> Result<DoubleTangentVector> {
        let mut xi = solve_raw(self.sys, v)?;
        let defect = second_order_defect(&xi);
        if !(defect <= SECOND_ORDER_TOL) {
            return Err(Error::NotSecondOrder(defect));
        }
        xi.dq.clone_from(&v.qdot);
        Ok(xi)
    }
}

pub fn euler_lagrange_field<S: ChartSystem + ?Sized>(sys: &S) -> EulerLagrangeField<'_, S> {
    EulerLagrangeField::new(sys)
}

/// q̈ from `M q̈ = ∂L/∂q − B q̇`, the chain-rule expansion of
/// `d/dt ∂L/∂q̇ = ∂L/∂q`.
pub fn euler_lagrange_ode(sys: &LagrangianSystem, v: &TangentPoint) -> Result<Vec<f64>> {
    let jet = sys.jet(v)?;
    let rhs = &jet.dl_dq - &jet.b * DVector::from_column_slice(&v.qdot);
    let qddot = jet.m.lu().solve(&rhs).ok_or(Error::Singular("mass matrix"))?;
    Ok(qddot.iter().copied().collect())
}

/// `dE(ξ)` at the base of ξ.
pub fn energy_rate<S: ChartSystem + ?Sized>(sys: &S, xi: &DoubleTangentVector) -> Result<f64> {
    Ok(sys.energy_gradient(&xi.base)?.dot(&xi.components()))
}

/// `H = E ∘ FL⁻¹` with its Hamiltonian field on T*Q.
pub struct Hamiltonian<'a, S: ChartSystem + ?Sized> {
    pub sys: &'a S,
    /// Finite-difference step for dH.
    pub h: f64,
}

impl<'a, S: ChartSystem + ?Sized> Hamiltonian<'a, S> {
    pub fn new(sys: &'a S) -> Self {
        Hamiltonian { sys, h: 1e-6 }
    }

    /// Inverse Legendre followed by one extra Newton step.
    fn invert(&self, alpha: &CotangentPoint, guess: Option<&[f64]>) -> Result<TangentPoint> {
        let v = self.sys.inverse_legendre(alpha, guess)?;
        Ok(self.sys.newton_step(alpha, &v)?.0)
    }

    pub fn value(&self, alpha: &CotangentPoint) -> Result<f64> {
        self.value_from(alpha, None)
    }

    fn value_from(&self, alpha: &CotangentPoint, guess: Option<&[f64]>) -> Result<f64> {
        self.sys.energy(&self.invert(alpha, guess)?)
    }

    /// Central-difference `∇H` over `(q, p)`; every perturbed inversion is
    /// warm-started from the inversion at `alpha`.
    pub fn gradient(&self, alpha: &CotangentPoint) -> Result<DVector<f64>> {
        let base = self.invert(alpha, None)?;
        let z = alpha.state();
        let mut grad = DVector::zeros(z.len());
        let mut p = z.clone();
        for k in 0..z.len() {
            p[k] = z[k] + self.h;
            let fp = self.value_from(&CotangentPoint::from_state(&p), Some(&base.qdot))?;
            p[k] = z[k] - self.h;
            let fm = self.value_from(&CotangentPoint::from_state(&p), Some(&base.qdot))?;
            p[k] = z[k];
            grad[k] = (fp - fm) / (2.0 * self.h);
        }
        Ok(grad)
    }

    /// `X_H = (∂H/∂p, −∂H/∂q)`, i.e. `X_H = Ω₀ ∇H`.
    pub fn field(&self, alpha: &CotangentPoint) -> Result<DVector<f64>> {
        let grad = self.gradient(alpha)?;
        Ok(canonical_matrix(alpha.dim()) * grad)
    }
}

pub fn hamiltonian_from_lagrangian<S: ChartSystem + ?Sized>(sys: &S) -> Hamiltonian<'_, S> {
    Hamiltonian::new(sys)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub samples: usize,
    pub max_residual: f64,
    pub witness: Vec<f64>,
    pub tol: f64,
    pub passed: bool,
}

impl ResidualReport {
    pub fn new(tol: f64) -> Self {
        ResidualReport {
            samples: 0,
            max_residual: 0.0,
            witness: Vec::new(),
            tol,
            passed: true,
        }
    }

    pub fn record(&mut self, residual: f64, at: &TangentPoint) {
        self.samples += 1;
        let r = if residual.is_nan() { f64::INFINITY } else { residual };
        if self.witness.is_empty() || r > self.max_residual {
            self.max_residual = r;
            self.witness = at.state();
        }
        self.passed = self.max_residual <= self.tol;
    }
}

/// `max ‖T(FL)·ξ(v) − X_H(FL(v))‖∞` over seeded samples.
pub fn check_fl_related<S: ChartSystem + ?Sized>(
    sys: &S,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<ResidualReport> {
    let field = EulerLagrangeField::new(sys);
    let ham = Hamiltonian::new(sys);
    let mut report = ResidualReport::new(tol);
    for v in sys.space().samples(samples, seed) {
        let xi = field.eval(&v)?;
        let pushed = sys.legendre_jacobian(&v)? * xi.components();
        let xh = ham.field(&sys.legendre(&v)?)?;
        report.record(max_abs((pushed - xh).iter().copied()), &v);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<TangentPoint>,
    pub energy: Vec<f64>,
    /// Momentum-map values per step; empty rows when no symmetry is attached.
    pub momentum: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&TangentPoint> {
        self.states.last()
    }

    pub fn max_energy_drift(&self) -> f64 {
        match self.energy.first() {
            Some(e0) => self.energy.iter().fold(0.0, |m, e| m.max((e - e0).abs())),
            None => 0.0,
        }
    }

    pub fn max_momentum_drift(&self) -> f64 {
        let Some(first) = self.momentum.first() else {
            return 0.0;
        };
        self.momentum.iter().fold(0.0, |m, row| {
            row.iter().zip(first).fold(m, |m, (a, b)| m.max((a - b).abs()))
        })
    }

    /// CSV with columns `t, q*, q̇*, E_L, J_*`.
    pub fn to_csv(&self, names: &[String], momentum_names: &[String]) -> String {
        let mut header = vec!["t".to_string()];
        header.extend(names.iter().cloned());
        header.extend(names.iter().map(|n| format!("{n}_dot")));
        header.push("E_L".into());
        header.extend(momentum_names.iter().map(|n| format!("J_{n}")));
        let mut out = header.join(",");
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:?}")];
            let s = &self.states[i];
            row.extend(s.q.iter().chain(&s.qdot).map(|x| format!("{x:?}")));
            row.push(format!("{:?}", self.energy[i]));
            if let Some(j) = self.momentum.get(i) {
                row.extend(j.iter().map(|x| format!("{x:?}")));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Integration stopped early; `partial` holds every accepted step.
#[derive(Debug)]
pub struct IntegrationFailure {
    pub partial: Trajectory,
    pub cause: Error,
}

impl std::fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} steps)", self.cause, self.partial.len())
    }
}

impl std::error::Error for IntegrationFailure {}

impl From<IntegrationFailure> for Error {
    fn from(f: IntegrationFailure) -> Self {
        f.cause
    }
}

type Monitor<'a, T> = &'a dyn Fn(&TangentPoint) -> Result<T>;

#[derive(Default, Clone, Copy)]
pub struct Monitors<'a> {
    pub energy: Option<Monitor<'a, f64>>,
    pub momentum: Option<Monitor<'a, Vec<f64>>>,
    /// Periodic coordinates are wrapped into `[0, 2π)` after each step.
    pub space: Option<&'a ConfigSpace>,
}

/// Classical RK4 with a uniform step `t1 / ceil(t1 / h)`.
pub fn integrate(
    field: &dyn VectorField,
    v0: &TangentPoint,
    t1: f64,
    h: f64,
    monitors: Monitors<'_>,
) -> Result<Trajectory, IntegrationFailure> {
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        energy: Vec::new(),
        momentum: Vec::new(),
    };
    if !(h > 0.0 && t1 > 0.0 && h.is_finite() && t1.is_finite()) {
        return Err(IntegrationFailure {
            partial: traj,
            cause: Error::Invalid(format!("need h > 0 and t1 > 0 (got h={h}, t1={t1})")),
        });
    }
    let steps = (t1 / h - 1e-9).ceil().max(1.0) as usize;
    let dt = t1 / steps as f64;
    let dim = field.dim();

    let record = |traj: &mut Trajectory, t: f64, v: TangentPoint| -> Result<()> {
        if let Some(e) = monitors.energy {
            traj.energy.push(e(&v)?);
        } else {
            traj.energy.push(f64::NAN);
        }
        if let Some(j) = monitors.momentum {
            traj.momentum.push(j(&v)?);
        }
        traj.times.push(t);
        traj.states.push(v);
        Ok(())
    };
    let fail = |traj: Trajectory, cause: Error| IntegrationFailure { partial: traj, cause };

    let mut z = DVector::from_vec(v0.state());
    if let Err(e) = record(&mut traj, 0.0, v0.clone()) {
        return Err(fail(traj, e));
    }
    let f = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let v = TangentPoint::from_state(z.as_slice());
        if !v.is_finite() {
            return Err(Error::BlowUp(f64::NAN));
        }
        Ok(field.eval(&v)?.components())
    };
    for k in 1..=steps {
        let step = (|| -> Result<DVector<f64>> {
            let k1 = f(&z)?;
            let k2 = f(&(&z + &k1 * (dt / 2.0)))?;
            let k3 = f(&(&z + &k2 * (dt / 2.0)))?;
            let k4 = f(&(&z + &k3 * dt))?;
            Ok(&z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
        })();
        let next = match step {
            Ok(n) => n,
            Err(e) => return Err(fail(traj, e)),
        };
        let worst = max_abs(next.iter().copied());
        if !(worst <= BLOW_UP) {
            return Err(fail(traj, Error::BlowUp(worst)));
        }
        z = next;
        let mut v = TangentPoint::from_state(z.as_slice());
        if let Some(space) = monitors.space {
            space.wrap(&mut v.q);
            z.rows_mut(0, dim).copy_from_slice(&v.q);
        }
        if let Err(e) = record(&mut traj, k as f64 * dt, v) {
            return Err(fail(traj, e));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::Tolerances;
    use std::f64::consts::{PI, TAU};

    fn sys(names: &[&str], l: &str) -> LagrangianSystem {
        let space = ConfigSpace::euclidean(names, -2.0, 2.0).unwrap();
        LagrangianSystem::unchecked("t", space, l, &[], Tolerances::default()).unwrap()
    }

    fn tp(q: &[f64], qd: &[f64]) -> TangentPoint {
        TangentPoint::new(q.to_vec(), qd.to_vec())
    }

    fn central() -> LagrangianSystem {
        let space = ConfigSpace::new(
            vec!["r".into(), "theta".into()],
            vec![false, true],
            vec![crate::geometry::Interval::new(0.5, 3.0), crate::geometry::Interval::new(0.0, TAU)],
            vec![crate::geometry::Interval::new(-1.0, 1.0), crate::geometry::Interval::new(0.2, 2.0)],
        )
        .unwrap();
        LagrangianSystem::new(
            "cf",
            space,
            "(r_dot^2 + r^2*theta_dot^2)/2 + 1/r",
            &[],
            Tolerances::default(),
        )
        .unwrap()
    }

    #[test]
    fn field_examples() {
        let ho = sys(&["q"], "q_dot^2/2 - q^2/2");
        let xi = euler_lagrange_field(&ho).eval(&tp(&[1.0], &[0.0])).unwrap();
        assert_eq!((xi.dq[0], xi.dqdot[0]), (0.0, -1.0));
        let free = sys(&["x", "y"], "(x_dot^2 + y_dot^2)/2");
        let xi = euler_lagrange_field(&free).eval(&tp(&[0.0, 0.0], &[3.0, 4.0])).unwrap();
        assert_eq!(xi.dq, vec![3.0, 4.0]);
        assert_eq!(xi.dqdot, vec![0.0, 0.0]);
        let cf = central();
        let xi = euler_lagrange_field(&cf).eval(&tp(&[1.0, 0.0], &[0.0, 1.0])).unwrap();
        assert_eq!(xi.dq, vec![0.0, 1.0]);
        assert!(max_abs(xi.dqdot.iter().copied()) < 1e-15);
    }

    #[test]
    fn ode_examples() {
        let ho = sys(&["q"], "q_dot^2/2 - q^2/2");
        assert_eq!(euler_lagrange_ode(&ho, &tp(&[1.0], &[0.0])).unwrap(), vec![-1.0]);
        let free = sys(&["x"], "x_dot^2/2");
        assert_eq!(euler_lagrange_ode(&free, &tp(&[0.7], &[2.0])).unwrap(), vec![0.0]);
    }

    #[test]
    fn hamiltonian_examples() {
        let free = sys(&["q"], "q_dot^2/2");
        let h = Hamiltonian::new(&free);
        let a = CotangentPoint::new(vec![0.3], vec![2.0]);
        assert!((h.value(&a).unwrap() - 2.0).abs() < 1e-14);
        let x = h.field(&a).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-8 && x[1].abs() < 1e-8);

        let ho = sys(&["q"], "q_dot^2/2 - q^2/2");
        let x = Hamiltonian::new(&ho).field(&CotangentPoint::new(vec![1.0], vec![0.0])).unwrap();
        assert!(x[0].abs() < 1e-8 && (x[1] + 1.0).abs() < 1e-8);

        let heavy = sys(&["q"], "2*q_dot^2/2 - q^2/2");
        let a = CotangentPoint::new(vec![0.5], vec![1.5]);
        let expect = 1.5 * 1.5 / 4.0 + 0.125;
        assert!((Hamiltonian::new(&heavy).value(&a).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn fl_related_free_particle_exact() {
        let free = sys(&["x", "y"], "(x_dot^2 + y_dot^2)/2");
        let r = check_fl_related(&free, 20, 1, 1e-8).unwrap();
        assert!(r.passed);
        assert!(r.max_residual < 1e-9);
    }

    #[test]
    fn integrate_examples() {
        let ho = sys(&["q"], "q_dot^2/2 - q^2/2");
        let field = euler_lagrange_field(&ho);
        let traj = integrate(&field, &tp(&[1.0], &[0.0]), TAU, 1e-3, Monitors::default()).unwrap();
        let end = traj.last().unwrap();
        assert!((end.q[0] - 1.0).abs() < 1e-6 && end.qdot[0].abs() < 1e-6);

        let free = sys(&["x", "y"], "(x_dot^2 + y_dot^2)/2");
        let field = euler_lagrange_field(&free);
        let traj = integrate(&field, &tp(&[0.0, 0.0], &[1.0, 0.0]), 1.0, 1e-2, Monitors::default()).unwrap();
        let end = traj.last().unwrap();
        assert!((end.q[0] - 1.0).abs() < 1e-12 && end.q[1] == 0.0);
    }

    #[test]
    fn circular_orbit_stays_circular() {
        let cf = central();
        let field = euler_lagrange_field(&cf);
        let e = |v: &TangentPoint| cf.energy(v);
        let m = Monitors {
            energy: Some(&e),
            momentum: None,
            space: Some(cf.space()),
        };
        let traj = integrate(&field, &tp(&[1.0, 0.0], &[0.0, 1.0]), 2.0 * PI, 1e-3, m).unwrap();
        assert!(traj.states.iter().all(|s| (s.q[0] - 1.0).abs() < 1e-6));
        assert!(traj.states.iter().all(|s| (0.0..TAU).contains(&s.q[1])));
        assert!(traj.max_energy_drift() < 1e-9);
    }

    #[test]
    fn blow_up_keeps_partial_trajectory() {
        // q̈ = q³ escapes in finite time
        let s = sys(&["q"], "q_dot^2/2 + q^4/4");
        let field = euler_lagrange_field(&s);
        let err = integrate(&field, &tp(&[10.0], &[0.0]), 10.0, 1e-3, Monitors::default()).unwrap_err();
        assert!(matches!(err.cause, Error::BlowUp(_)));
        assert!(err.partial.len() > 1);
    }
}
