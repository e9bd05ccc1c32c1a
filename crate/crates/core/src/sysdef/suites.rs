use nalgebra::DMatrix;

use super::{Loaded, LoadedReduced, LoadedSystem, ReductionKind};
use crate::dynamics::{
    check_fl_related, energy_rate, euler_lagrange_ode, integrate, second_order_defect, ChartSystem,
    EulerLagrangeField, Monitors, ResidualReport, VectorField,
};
use crate::error::{Error, Result};
use crate::geometry::{max_abs, max_abs_diff};
use crate::lagrangian::exterior_derivative_fd;
use crate::reduction::{
    check_commutation, check_flow_commutation, check_reduced_legendre, check_section_independence,
    orbit_reduce, point_reduce, ReduceOptions, ReducedSystem,
};
use crate::report::{Check, Report};
use crate::symmetry::{check_equivariance, check_invariance, check_regular_value, noether_rate, SymmetrySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Legendre,
    Dynamics,
    Noether,
    Reduction,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "legendre" => Ok(Suite::Legendre),
            "dynamics" => Ok(Suite::Dynamics),
            "noether" => Ok(Suite::Noether),
            "reduction" => Ok(Suite::Reduction),
            "all" => Ok(Suite::All),
            other => Err(Error::Invalid(format!(
                "unknown suite '{other}' (expected legendre, dynamics, noether, reduction, all)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Legendre => "legendre",
            Suite::Dynamics => "dynamics",
            Suite::Noether => "noether",
            Suite::Reduction => "reduction",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub samples: usize,
    pub seed: u64,
    /// Overrides every per-check tolerance when set.
    pub tol: Option<f64>,
    pub mu: Option<Vec<f64>>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            samples: 200,
            seed: 0,
            tol: None,
            mu: None,
        }
    }
}

impl SuiteOptions {
    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }
}

pub const REPORT_TOL: f64 = 1e-8;
const ROUND_TRIP_TOL: f64 = 1e-10;
const FORM_TOL: f64 = 1e-10;
const ONE_FORM_TOL: f64 = 1e-6;
const FIELD_TOL: f64 = 1e-9;
const FL_TOL: f64 = 1e-8;
const DRIFT_TOL: f64 = 1e-6;
const ALGEBRA_TOL: f64 = 1e-12;
const COMMUTE_TOL: f64 = 1e-8;
const FLOW_TOL: f64 = 1e-5;
const SECTION_TOL: f64 = 1e-9;
const COINCIDE_TOL: f64 = 1e-12;

const DRIFT_T1: f64 = 10.0;
const FLOW_T1: f64 = 5.0;
const STEP: f64 = 1e-3;
const FLOW_SAMPLES: usize = 4;

const ROUND_TRIP: &str = "FL^-1 . FL = id";
const HYPERREG: &str = "FL is a diffeomorphism (M nonsingular)";
const PULLBACK_VS_COORD: &str = "FL^* omega_0 = sum B dq^dq + M dq^dq_dot";
const ONE_FORM: &str = "omega^L = -d theta^L";
const NONDEGENERATE: &str = "omega^L nondegenerate";
const DUAL: &str = "i_xi omega^L = dE_L agrees with the Euler-Lagrange ODE";
const SECOND_ORDER: &str = "dq(xi) = q_dot";
const ENERGY: &str = "dE_L(xi_L) = 0";
const FL_RELATED: &str = "T(FL) . xi_L = X_H . FL";
const NOETHER_RATE: &str = "dJ_L(xi_L) = 0";
const DRIFT: &str = "E_L and J_L constant along the flow";
const ALGEBRA: &str = "structure constants antisymmetric and Jacobi";
const RED_ENERGY: &str = "dE_l_mu(xi_l_mu) = 0";
const COINCIDE: &str = "orbit and point reductions coincide";
const RED_DUAL: &str = "xi_l_mu agrees with the projected parent field";

fn na_suite(suite: &str, why: &str) -> Check {
    Check::not_applicable(suite, suite, why)
}

/// Run a suite; inapplicable suites return `Error::Unsupported`.
pub fn run_suite(loaded: &Loaded, suite: Suite, opts: &SuiteOptions) -> Result<Report> {
    let mut report = Report::new(
        &format!("check --suite {}", suite.name()),
        loaded.name(),
        opts.seed,
        opts.samples,
        opts.tol.unwrap_or(REPORT_TOL),
    );
    match loaded {
        Loaded::Full(sys) => run_full(sys, suite, opts, &mut report)?,
        Loaded::Reduced(red) => run_reduced(red, suite, opts, &mut report)?,
    }
    Ok(report)
}

fn run_full(sys: &LoadedSystem, suite: Suite, opts: &SuiteOptions, report: &mut Report) -> Result<()> {
    if matches!(suite, Suite::Legendre | Suite::All) {
        legendre_suite(sys, opts, report)?;
    }
    if matches!(suite, Suite::Dynamics | Suite::All) {
        dynamics_suite(sys, opts, report)?;
    }
    if matches!(suite, Suite::Noether | Suite::All) {
        match &sys.symmetry {
            Some(spec) => noether_suite(sys, spec, opts, report)?,
            None if suite == Suite::All => report.push(na_suite("noether", "no symmetry declared")),
            None => return Err(Error::Unsupported("noether suite needs a declared symmetry".into())),
        }
    }
    if matches!(suite, Suite::Reduction | Suite::All) {
        let mu = opts.mu.clone().or_else(|| sys.mu.clone());
        let why = match (&sys.symmetry, &mu) {
            (None, _) => Some("no symmetry declared"),
            (Some(s), _) if !s.is_abelian_translation() => Some("reduction needs cyclic coordinates"),
            (Some(_), None) => Some("no momentum value (use --mu)"),
            _ => None,
        };
        match why {
            None => reduction_suite(sys, mu.as_deref().unwrap_or_default(), opts, report)?,
            Some(w) if suite == Suite::All => report.push(na_suite("reduction", w)),
            Some(w) => return Err(Error::Unsupported(format!("reduction suite: {w}"))),
        }
    }
    Ok(())
}

fn legendre_suite(sys: &LoadedSystem, opts: &SuiteOptions, report: &mut Report) -> Result<()> {
    let l = &sys.rcl.sys;
    let (n, seed) = (opts.samples, opts.seed);
    let cert = l.hyperregularity(n, seed)?;
    let mut c = Check::verdict("hyperregularity", HYPERREG, cert.passed, cert.samples)
        .with_note(format!("min singular value {:e}", cert.min_singular));
    if !cert.passed {
        c = c.with_witness(cert.witness.clone());
    }
    report.push(c);

    let points = l.space().samples(n, seed);
    let mut trip = ResidualReport::new(opts.tol(ROUND_TRIP_TOL));
    let mut coord = ResidualReport::new(opts.tol(FORM_TOL));
    let mut dtheta = ResidualReport::new(opts.tol(ONE_FORM_TOL));
    let mut nondeg = ResidualReport::new(0.0);
    for v in &points {
        let back = l.inverse_legendre(&l.legendre_transform(v)?, None)?;
        trip.record(max_abs_diff(&back.state(), &v.state()), v);
        let omega = l.lagrangian_two_form(v)?;
        coord.record(max_abs((&omega.matrix - l.two_form_coordinate(v)?).iter().copied()), v);
        let d = exterior_derivative_fd(
            |z| l.lagrangian_one_form(&crate::geometry::TangentPoint::from_state(z)),
            &v.state(),
            1e-5,
        )?;
        dtheta.record(max_abs((&omega.matrix + d).iter().copied()), v);
        let margin = omega.min_singular_value();
        nondeg.record(if margin >= l.tolerances().symplectic_min { 0.0 } else { 1.0 }, v);
    }
    report.push(Check::from_report("legendre-round-trip", ROUND_TRIP, &trip));
    report.push(Check::from_report("two-form-coordinates", PULLBACK_VS_COORD, &coord));
    report.push(Check::from_report("two-form-exact", ONE_FORM, &dtheta));
    report.push(Check::from_report("two-form-nondegenerate", NONDEGENERATE, &nondeg));
    Ok(())
}

fn dynamics_suite(sys: &LoadedSystem, opts: &SuiteOptions, report: &mut Report) -> Result<()> {
    let l = &sys.rcl.sys;
    let field = EulerLagrangeField::new(l);
    let controlled = sys.rcl.field();
    let mut dual = ResidualReport::new(opts.tol(FIELD_TOL));
    let mut second = ResidualReport::new(0.0);
    let mut energy = ResidualReport::new(opts.tol(FIELD_TOL));
    for v in l.space().samples(opts.samples, opts.seed) {
        let xi = field.eval(&v)?;
        dual.record(max_abs_diff(&xi.dqdot, &euler_lagrange_ode(l, &v)?), &v);
        let xc = controlled.eval(&v)?;
        second.record(max_abs_diff(&xi.dq, &v.qdot).max(max_abs_diff(&xc.dq, &v.qdot)), &v);
        energy.record(energy_rate(l, &xi)?.abs(), &v);
    }
    report.push(Check::from_report("dual-derivation", DUAL, &dual));
    report.push(Check::from_report("second-order", SECOND_ORDER, &second));
    report.push(Check::from_report("energy-conservation", ENERGY, &energy));
    let fl = check_fl_related(l, opts.samples, opts.seed, opts.tol(FL_TOL))?;
    report.push(Check::from_report("fl-related", FL_RELATED, &fl));
    Ok(())
}

fn noether_suite(sys: &LoadedSystem, spec: &SymmetrySpec, opts: &SuiteOptions, report: &mut Report) -> Result<()> {
    let (n, seed) = (opts.samples, opts.seed);
    if let Some((asym, jacobi)) = spec.algebra_defects() {
        report.push(Check::residual("algebra", ALGEBRA, asym.max(jacobi), opts.tol(ALGEBRA_TOL), spec.group_dim()));
    }
    if !spec.is_abelian_translation() {
        report.push(Check::not_applicable(
            "invariance",
            "L, F, C, u are G-invariant",
            "no group action for an algebra-only symmetry",
        ));
        return Ok(());
    }
    let l = &sys.rcl.sys;
    report.push(check_invariance(spec, &sys.rcl, n, seed, opts.tol(FIELD_TOL))?);
    report.push(check_equivariance(spec, l, n, seed, opts.tol(FIELD_TOL))?);
    report.push(check_regular_value(spec, l, n, seed)?);
    let (rate, witness) = noether_rate(spec, l, n, seed)?;
    let mut c = Check::residual("momentum-conservation", NOETHER_RATE, rate, opts.tol(FIELD_TOL), n);
    if c.failed() {
        c = c.with_witness(witness);
    }
    report.push(c);

    let energy = |v: &crate::geometry::TangentPoint| l.energy(v);
    let momentum = |v: &crate::geometry::TangentPoint| spec.momentum_lagrangian(l, v);
    let monitors = Monitors {
        energy: Some(&energy),
        momentum: Some(&momentum),
        space: Some(l.space()),
    };
    let v0 = l.space().center();
    let traj = integrate(&EulerLagrangeField::new(l), &v0, DRIFT_T1, STEP, monitors)?;
    let drift = traj.max_energy_drift().max(traj.max_momentum_drift());
    report.push(Check::residual("drift", DRIFT, drift, opts.tol(DRIFT_TOL), 1).with_note(format!(
        "RK4 from the box centre, t1 = {DRIFT_T1}, h = {STEP}"
    )));
    Ok(())
}

fn reduced_energy_check(red: &ReducedSystem, opts: &SuiteOptions) -> Result<Check> {
    let field = EulerLagrangeField::new(red);
    let mut r = ResidualReport::new(opts.tol(FIELD_TOL));
    for x in red.space().samples(opts.samples, opts.seed) {
        r.record(energy_rate(red, &field.eval(&x)?)?.abs(), &x);
    }
    Ok(Check::from_report("reduced-energy-conservation", RED_ENERGY, &r))
}

fn reduction_suite(sys: &LoadedSystem, mu: &[f64], opts: &SuiteOptions, report: &mut Report) -> Result<()> {
    let spec = sys.symmetry.as_ref().expect("checked by caller");
    let ro = ReduceOptions {
        samples: opts.samples,
        seed: opts.seed,
        tol: opts.tol(FIELD_TOL),
    };
    let red = point_reduce(&sys.rcl, spec, mu, ro)?;
    let (n, seed) = (opts.samples, opts.seed);
    report.push(check_commutation(&red, n, seed, opts.tol(COMMUTE_TOL))?);
    report.push(check_flow_commutation(&red, FLOW_SAMPLES.min(n), seed, FLOW_T1, STEP, opts.tol(FLOW_TOL))?);
    let orbit = orbit_reduce(&sys.rcl, spec, mu, ro)?;
    for c in check_reduced_legendre(&orbit, n, seed, opts.tol(COMMUTE_TOL))? {
        report.push(c);
    }
    let k = red.section().cyclic.len();
    let s = red.section().shape.len();
    let other = red.with_section(vec![0.7; k], DMatrix::from_element(k, s, 0.3))?;
    report.push(check_section_independence(&red, &other, n, seed, opts.tol(SECTION_TOL))?);
    if sys.rcl.force.is_zero() && sys.rcl.law.is_none() {
        report.push(reduced_energy_check(&red, opts)?);
    }
    let mut worst: f64 = 0.0;
    for x in red.space().samples(n, seed) {
        let a = red.field().eval(&x)?.components();
        let b = orbit.field().eval(&x)?.components();
        worst = worst.max(max_abs((a - b).iter().copied()));
    }
    report.push(Check::residual("orbit-point-coincidence", COINCIDE, worst, opts.tol(COINCIDE_TOL), n));
    Ok(())
}

fn run_reduced(r: &LoadedReduced, suite: Suite, opts: &SuiteOptions, report: &mut Report) -> Result<()> {
    let red = &r.red;
    let (n, seed) = (opts.samples, opts.seed);
    if matches!(suite, Suite::Noether | Suite::Reduction) {
        return Err(Error::Unsupported(format!("{} suite does not apply to a reduced file", suite.name())));
    }
    if matches!(suite, Suite::Legendre | Suite::All) {
        let mut trip = ResidualReport::new(opts.tol(ROUND_TRIP_TOL));
        let mut nondeg = ResidualReport::new(0.0);
        for x in red.space().samples(n, seed) {
            let back = red.inverse_legendre(&red.legendre(&x)?, None)?;
            trip.record(max_abs_diff(&back.state(), &x.state()), &x);
            let margin = red.two_form(&x)?.min_singular_value();
            nondeg.record(if margin >= 1e-10 { 0.0 } else { 1.0 }, &x);
        }
        report.push(Check::from_report("legendre-round-trip", ROUND_TRIP, &trip));
        report.push(Check::from_report("two-form-nondegenerate", NONDEGENERATE, &nondeg));
        for c in check_reduced_legendre(red, n, seed, opts.tol(COMMUTE_TOL))? {
            report.push(c);
        }
    }
    if matches!(suite, Suite::Dynamics | Suite::All) {
        let mut dual = ResidualReport::new(opts.tol(COMMUTE_TOL));
        let mut second = ResidualReport::new(0.0);
        let parent = red.parent().field();
        for x in red.space().samples(n, seed) {
            let xi = red.field().eval(&x)?;
            second.record(second_order_defect(&xi), &x);
            let up = red.section().project_vector(&parent.eval(&red.lift(&x)?)?);
            dual.record(max_abs((xi.components() - up.components()).iter().copied()), &x);
        }
        report.push(Check::from_report("dual-derivation", RED_DUAL, &dual));
        report.push(Check::from_report("second-order", SECOND_ORDER, &second));
        report.push(reduced_energy_check(red, opts)?);
        let fl = check_fl_related(red, n, seed, opts.tol(FL_TOL))?;
        report.push(Check::from_report("fl-related", FL_RELATED, &fl));
    }
    if suite == Suite::All {
        report.push(na_suite("noether", "reduced file"));
        report.push(na_suite("reduction", "reduced file"));
    }
    Ok(())
}

/// Equivalence notions accepted by the `equivalence` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivalenceKind {
    Rcl,
    Rpcl,
    Rocl,
    Theorem(crate::reduction::TheoremKind),
}

impl EquivalenceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rcl" => Ok(EquivalenceKind::Rcl),
            "rpcl" => Ok(EquivalenceKind::Rpcl),
            "rocl" => Ok(EquivalenceKind::Rocl),
            other => crate::reduction::TheoremKind::parse(other).map(EquivalenceKind::Theorem),
        }
    }
}

/// Run an equivalence check on a loaded pair.
pub fn run_equivalence(pair: &super::LoadedPair, kind: EquivalenceKind, opts: &SuiteOptions, command: &str, name: &str) -> Result<Report> {
    use crate::control::check_rcl_equivalence;
    use crate::reduction::{check_rpcl_equivalence, theorem_harness, Side};

    let tol = opts.tol(COMMUTE_TOL);
    let mut report = Report::new(command, name, opts.seed, opts.samples, tol);
    let (n, seed) = (opts.samples, opts.seed);
    let spec_a = pair.a.symmetry_or_trivial()?;
    let spec_b = pair.b.symmetry_or_trivial()?;
    let mu_a = pair.mu_a.clone().unwrap_or_else(|| vec![0.0; spec_a.group_dim()]);
    let mu_b = pair.mu_b.clone().unwrap_or_else(|| vec![0.0; spec_b.group_dim()]);
    let ro = ReduceOptions { samples: n, seed, tol };
    match kind {
        EquivalenceKind::Rcl => {
            for c in check_rcl_equivalence(&pair.a.rcl, &pair.b.rcl, &pair.map, n, seed, tol)? {
                report.push(c);
            }
        }
        EquivalenceKind::Rpcl | EquivalenceKind::Rocl => {
            let how = if kind == EquivalenceKind::Rocl { ReductionKind::Orbit } else { ReductionKind::Point };
            let reduce = |s: &LoadedSystem, spec: &SymmetrySpec, mu: &[f64]| match how {
                ReductionKind::Point => point_reduce(&s.rcl, spec, mu, ro),
                ReductionKind::Orbit => orbit_reduce(&s.rcl, spec, mu, ro),
            };
            let ra = reduce(&pair.a, &spec_a, &mu_a)?;
            let rb = reduce(&pair.b, &spec_b, &mu_b)?;
            for mut c in check_rpcl_equivalence(&ra, &rb, &pair.map, n, seed, tol)? {
                if kind == EquivalenceKind::Rocl {
                    c.id = c.id.replace("RpCL", "RoCL");
                }
                report.push(c);
            }
        }
        EquivalenceKind::Theorem(t) => {
            let h = theorem_harness(
                t,
                Side { rcl: &pair.a.rcl, spec: &spec_a, mu: &mu_a },
                Side { rcl: &pair.b.rcl, spec: &spec_b, mu: &mu_b },
                &pair.map,
                ro,
            )?;
            for mut c in h.upstairs {
                c.id = format!("upstairs/{}", c.id);
                report.push(c);
            }
            for mut c in h.downstairs {
                c.id = format!("downstairs/{}", c.id);
                report.push(c);
            }
            report.push(h.agreement);
        }
    }
    Ok(report)
}

/// Exit status of a theorem report: only verdict agreement decides.
pub fn theorem_report_passes(report: &Report) -> bool {
    report
        .checks
        .iter()
        .find(|c| c.id == "agreement")
        .map_or(report.all_pass(), |c| !c.failed())
}
