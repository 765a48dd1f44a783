//! Executes the checks a scenario requests and collects a [`Report`].

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::random::{random_local_matrix, random_section, rng};
use super::{Scenario, ScenarioError};
use crate::algebra::{verify_theorems_with, DEFAULT_DIM_BUDGET, SPAN_TOL};
use crate::integral::DirectIntegralSpace;
use crate::linalg::{max_abs_diff, CMatrix};
use crate::measure::{AtomSet, ExtendedReal, WeightMode, FLOAT_MEASURE_TOL};
use crate::operator::{assemble_decomposable, assemble_diagonalizable, LocalOperator};

/// Tolerance of the isometry checks in float mode.
pub const ISOMETRY_TOL: f64 = 1e-12;
/// Tolerance of projector idempotence and self-adjointness.
pub const PROJECTOR_TOL: f64 = 1e-14;
/// Entrywise tolerance of the dilation identity.
pub const DILATION_TOL: f64 = 1e-12;
/// Relative tolerance of `p(T*T) = p(T)^2`.
pub const CSTAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub tol: f64,
    pub budget: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { tol: SPAN_TOL, budget: DEFAULT_DIM_BUDGET, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: Option<String>,
    pub digest: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub notes: Vec<String>,
    /// Excluded from determinism comparisons.
    pub wall_time_ms: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with the wall time zeroed.
    pub fn canonical_json(&self) -> String {
        Report { wall_time_ms: 0.0, ..self.clone() }.to_json()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(name) = &self.scenario {
            out.push_str(&format!("scenario {name}\n"));
        }
        out.push_str(&format!("digest   {}\n", self.digest));
        for c in &self.checks {
            out.push_str(&format!(
                "{} {} (residual {:.3e}){}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.residual,
                if c.witness.is_empty() { String::new() } else { format!(": {}", c.witness) }
            ));
        }
        for n in &self.notes {
            out.push_str(&format!("note {n}\n"));
        }
        out.push_str(&format!(
            "{}: {}/{} checks passed in {:.1} ms\n",
            if self.passed { "ok" } else { "FAILED" },
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len(),
            self.wall_time_ms
        ));
        out
    }
}

fn check(name: impl Into<String>, passed: bool, residual: f64, witness: impl Into<String>) -> CheckResult {
    CheckResult { name: name.into(), passed, residual, witness: witness.into() }
}

fn finite(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

fn value_gap(a: &ExtendedReal, b: &ExtendedReal) -> f64 {
    match (a, b) {
        (ExtendedReal::Infinity, ExtendedReal::Infinity) => 0.0,
        (ExtendedReal::Infinity, _) | (_, ExtendedReal::Infinity) => f64::MAX,
        _ => (a.to_f64() - b.to_f64()).abs(),
    }
}

/// Validates and checks one scenario. Validation failures become a failing
/// `validate` check rather than an error.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Report {
    let start = Instant::now();
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    match scenario.build() {
        Err(e) => checks.push(check("validate", false, 0.0, e.to_string())),
        Ok(built) => {
            checks.push(check("validate", true, 0.0, format!("global dimension {}", built.space.dim())));
            if scenario.checks.theorems {
                match verify_theorems_with(built.space.clone(), opts.budget, opts.tol) {
                    Ok(report) => {
                        for c in report.claims {
                            checks.push(check(c.name, c.passed, c.residual, c.detail));
                        }
                        notes.extend(report.notes);
                    }
                    Err(e) => checks.push(check("theorems", false, 0.0, e.to_string())),
                }
            }
            if scenario.checks.invariants {
                checks.extend(invariant_checks(&built.space, &built.operators, opts));
            }
            if scenario.checks.operators {
                for (name, op) in &built.operators {
                    let (c, n) = operator_checks(name, op);
                    checks.extend(c);
                    notes.extend(n);
                }
            }
        }
    }
    Report {
        scenario: scenario.name.clone(),
        digest: scenario.digest(),
        passed: checks.iter().all(|c| c.passed),
        checks,
        notes,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Runs many scenarios on the rayon pool; output order matches input.
pub fn run_batch(scenarios: &[Scenario], opts: &RunOptions) -> Vec<Report> {
    scenarios.par_iter().map(|s| run(s, opts)).collect()
}

fn invariant_checks(
    space: &Arc<DirectIntegralSpace>,
    named: &[(String, LocalOperator)],
    opts: &RunOptions,
) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let measure = space.measure();
    let system = measure.system();
    let poset = space.poset();
    let exact = system.mode() == WeightMode::Rational;

    // limit measure
    let empty = measure.limit_measure(AtomSet::EMPTY).expect("empty set is measurable");
    let total = measure.limit_measure(measure.total_set()).expect("X is measurable");
    let sum = measure
        .limit_blocks()
        .iter()
        .map(|&b| measure.limit_measure(b).expect("blocks are measurable"))
        .fold(ExtendedReal::zero(system.mode()), |acc, v| &acc + &v);
    let additive = empty.is_zero() && sum.approx_eq(&total, if exact { 0.0 } else { FLOAT_MEASURE_TOL });
    out.push(check(
        "limit measure is additive",
        additive,
        finite(value_gap(&sum, &total)),
        format!("µ(X) = {}", total.to_text()),
    ));
    let mut monotone = true;
    for &b in measure.limit_blocks() {
        let net = measure.measure_net(b).expect("blocks are measurable");
        for (lo, hi) in poset.comparable_pairs() {
            if !net[lo.0].approx_le(&net[hi.0], FLOAT_MEASURE_TOL) {
                monotone = false;
            }
        }
    }
    out.push(check("measure net is monotone", monotone, 0.0, ""));

    // projections
    let mut proj = 0.0f64;
    for level in poset.levels() {
        let p = space.projection(level).matrix;
        proj = proj.max(max_abs_diff(&(&p * &p), &p)).max(max_abs_diff(&p.adjoint(), &p));
    }
    out.push(check("level projections are orthogonal", proj <= PROJECTOR_TOL, proj, ""));

    // isometries
    let mut r = rng(opts.seed);
    let (mut ip_gap, mut norm_gap) = (0.0f64, 0.0f64);
    for lo in poset.levels() {
        for _ in 0..3 {
            let u = random_section(space, lo, &mut r);
            let v = random_section(space, lo, &mut r);
            let base = space.inner_product_at(lo, &u, &v).expect("sections lie in the level");
            for hi in poset.levels().filter(|&h| poset.leq(lo, h)) {
                let other = space.inner_product_at(hi, &u, &v).expect("levels are nested");
                ip_gap = ip_gap.max((other - base).norm());
            }
            let x = space.v_alpha(lo, &u).expect("section lies in the level");
            norm_gap = norm_gap.max((x.norm() - space.norm(&u)).abs());
        }
    }
    let iso_tol = if exact { 0.0 } else { ISOMETRY_TOL };
    out.push(check("inner products are level independent", ip_gap <= iso_tol, ip_gap, ""));
    out.push(check("V_a preserves norms", norm_gap <= iso_tol, norm_gap, ""));

    // operators: random locally bounded ones plus the named ones
    let mut ops: Vec<LocalOperator> = (0..2)
        .map(|_| LocalOperator::validate(space.clone(), random_local_matrix(space, &mut r)).expect("cell supported"))
        .collect();
    ops.extend(named.iter().map(|(_, t)| t.clone()));
    let (mut dil, mut cstar) = (0.0f64, 0.0f64);
    for t in &ops {
        for (lo, hi) in poset.comparable_pairs() {
            dil = dil.max(t.dilation_residual(lo, hi).expect("comparable pair"));
        }
        let tt = t.adjoint().mul(t).expect("same space");
        for level in poset.levels() {
            let p = t.seminorm(level);
            let gap = (tt.seminorm(level) - p * p).abs() / (p * p).max(1.0);
            cstar = cstar.max(gap);
        }
    }
    out.push(check("dilation identity", dil <= DILATION_TOL, dil, format!("{} operators", ops.len())));
    out.push(check("C*-identity of the seminorms", cstar <= CSTAR_TOL, cstar, ""));
    out
}

fn operator_checks(name: &str, op: &LocalOperator) -> (Vec<CheckResult>, Vec<String>) {
    let space = op.space();
    let report = op.classify();
    let mut checks = Vec::new();
    let seminorms: Vec<String> =
        space.poset().levels().map(|l| format!("p_{} = {}", space.poset().name(l), op.seminorm(l))).collect();
    let notes = vec![format!(
        "operator {name}: locally bounded, {}decomposable, {}diagonalizable; {}",
        if report.decomposable.is_some() { "" } else { "not " },
        if report.diagonalizable.is_some() { "" } else { "not " },
        seminorms.join(", ")
    )];
    let rebuilt = |m: &CMatrix| max_abs_diff(m, op.matrix());
    if let Some(form) = &report.decomposable {
        let gap = assemble_decomposable(space.clone(), form).map_or(f64::MAX, |t| rebuilt(t.matrix()));
        checks.push(check(format!("operator {name}: fiber family round trip"), gap == 0.0, gap, ""));
    }
    if let Some(symbol) = &report.diagonalizable {
        let gap = assemble_diagonalizable(space.clone(), symbol).map_or(f64::MAX, |t| rebuilt(t.matrix()));
        checks.push(check(format!("operator {name}: symbol round trip"), gap == 0.0, gap, ""));
    }
    (checks, notes)
}

/// Parses `text` and runs it; parse errors are returned as errors.
pub fn run_str(text: &str, opts: &RunOptions) -> Result<Report, ScenarioError> {
    Ok(run(&super::parse_str(text)?, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::random::{random_scenario, Limits};
    use crate::scenario::tests::S1;

    #[test]
    fn s1_passes() {
        let report = run_str(S1, &RunOptions::default()).unwrap();
        assert!(report.passed, "{}", report.render_text());
        let main = report.checks.iter().find(|c| c.name == "DEC = DIAG'").unwrap();
        assert!(main.residual <= 1e-9);
    }

    #[test]
    fn json_round_trip_and_determinism() {
        let s = random_scenario(7, Limits::new(3, 4, 2)).unwrap();
        let a = run(&s, &RunOptions::default());
        let b = run(&s, &RunOptions::default());
        assert_eq!(a.canonical_json(), b.canonical_json());
        assert_eq!(Report::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn invalid_scenario_is_report_content() {
        let text = S1.replace(r#"weights = { "1" = "1", "2" = "2" }"#, r#"weights = { "1" = "5", "2" = "2" }"#);
        let report = run_str(&text, &RunOptions::default()).unwrap();
        assert!(!report.passed);
        assert_eq!(report.checks.len(), 1);
    }
}
