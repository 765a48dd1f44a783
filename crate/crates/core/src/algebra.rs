//! Finite-dimensional operator subspaces: spans, *-algebra closure,
//! commutants and the structural checks on the decomposable and
//! diagonalizable algebras of a direct integral.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integral::{DirectIntegralSpace, IntegralError};
use crate::linalg::{commutator, frobenius, select, trace_inner, CMatrix, ONE, ZERO};
use crate::operator::{classically_decomposable, restrict_level, LocalOperator};
use crate::poset::Level;

/// Relative singular-value cutoff for commutant ranks.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Relative singular value above which a single constraint rules a
/// direction out of a commutant.
pub const PRUNE_CUTOFF: f64 = 1e-6;
/// Residual below which a matrix counts as inside a span.
pub const SPAN_TOL: f64 = 1e-9;
/// Default bound on the global dimension.
pub const DEFAULT_DIM_BUDGET: usize = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("global dimension {dim} exceeds the budget {budget}")]
    DimensionBudgetExceeded { dim: usize, budget: usize },
    #[error("numerical rank is ambiguous: singular value {value:e} within 10x of cutoff {cutoff:e}")]
    RankAmbiguity { value: f64, cutoff: f64 },
    #[error("generator is not locally bounded")]
    NotLocallyBounded,
    #[error(transparent)]
    Integral(#[from] IntegralError),
}

/// A subspace of `n x n` complex matrices with an orthonormal basis under
/// `<A, B> = tr(A* B)`.
#[derive(Debug, Clone)]
pub struct MatrixSpan {
    n: usize,
    basis: Vec<CMatrix>,
}

impl MatrixSpan {
    /// Orthonormal basis of the span of `generators`: left singular vectors
    /// of the stacked vectorizations above `SPAN_TOL` times the largest
    /// singular value.
    pub fn new(n: usize, generators: &[CMatrix]) -> Self {
        let gens: Vec<&CMatrix> = generators.iter().filter(|g| g.iter().any(|z| *z != ZERO)).collect();
        if gens.is_empty() {
            return Self { n, basis: Vec::new() };
        }
        let stacked = CMatrix::from_fn(n * n, gens.len(), |i, j| gens[j].as_slice()[i]);
        let svd = stacked.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let sv = &svd.singular_values;
        let cutoff = SPAN_TOL * sv.max();
        let basis = (0..sv.len())
            .filter(|&k| sv[k] > cutoff)
            .map(|k| CMatrix::from_column_slice(n, n, u.column(k).as_slice()))
            .collect();
        Self { n, basis }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    /// Component of `m` orthogonal to the span.
    pub fn residual(&self, m: &CMatrix) -> CMatrix {
        let mut r = m.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let coeff = trace_inner(b, &r);
                if coeff != ZERO {
                    r -= b * coeff;
                }
            }
        }
        r
    }

    /// Relative distance of `m` from the span.
    pub fn distance(&self, m: &CMatrix) -> f64 {
        frobenius(&self.residual(m)) / frobenius(m).max(1.0)
    }

    pub fn contains(&self, m: &CMatrix, tol: f64) -> bool {
        self.distance(m) <= tol
    }

    /// Adds `m` when it is not already in the span; returns whether it grew.
    pub fn try_insert(&mut self, m: &CMatrix) -> bool {
        let r = self.residual(m);
        let norm = frobenius(&r);
        if norm > SPAN_TOL * frobenius(m).max(1.0) {
            self.basis.push(r / Complex64::new(norm, 0.0));
            true
        } else {
            false
        }
    }

    /// Orthogonal projector onto the span, acting on vectorized matrices.
    pub fn projector(&self) -> CMatrix {
        let n2 = self.n * self.n;
        let q = CMatrix::from_fn(n2, self.basis.len(), |i, j| self.basis[j].as_slice()[i]);
        &q * q.adjoint()
    }

    /// Largest relative distance of a basis element of `self` from `other`.
    pub fn inclusion_residual(&self, other: &MatrixSpan) -> f64 {
        self.basis.iter().map(|b| other.distance(b)).fold(0.0, f64::max)
    }

    /// `||P_self - P_other||_F`, or infinity when the dimensions differ.
    pub fn distance_to(&self, other: &MatrixSpan) -> f64 {
        if self.dim() != other.dim() || self.n != other.n {
            return f64::INFINITY;
        }
        frobenius(&(self.projector() - other.projector()))
    }
}

/// Which operations [`span_closure`] closes under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Closure {
    pub star: bool,
    pub product: bool,
    pub unit: bool,
}

impl Closure {
    pub const ALGEBRA: Closure = Closure { star: true, product: true, unit: true };
}

/// A subspace of `C*_E(D)`.
#[derive(Debug, Clone)]
pub struct OperatorSubspace {
    space: Arc<DirectIntegralSpace>,
    span: MatrixSpan,
}

/// Structural flags of a subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceFlags {
    pub contains_identity: bool,
    pub star_closed: bool,
    pub product_closed: bool,
}

impl OperatorSubspace {
    pub fn from_matrices(space: Arc<DirectIntegralSpace>, mats: &[CMatrix]) -> Self {
        let span = MatrixSpan::new(space.dim(), mats);
        Self { space, span }
    }

    pub fn space(&self) -> &Arc<DirectIntegralSpace> {
        &self.space
    }

    pub fn span(&self) -> &MatrixSpan {
        &self.span
    }

    pub fn dim(&self) -> usize {
        self.span.dim()
    }

    pub fn basis(&self) -> &[CMatrix] {
        self.span.basis()
    }

    pub fn operators(&self) -> Vec<LocalOperator> {
        self.basis()
            .iter()
            .map(|b| LocalOperator::validate(self.space.clone(), b.clone()).expect("basis is locally bounded"))
            .collect()
    }

    pub fn contains(&self, m: &CMatrix) -> bool {
        self.span.contains(m, SPAN_TOL)
    }

    pub fn flags(&self) -> SubspaceFlags {
        let n = self.space.dim();
        let basis = self.basis();
        SubspaceFlags {
            contains_identity: self.contains(&CMatrix::identity(n, n)),
            star_closed: basis.iter().all(|b| self.contains(&b.adjoint())),
            product_closed: basis.iter().all(|a| basis.iter().all(|b| self.contains(&(a * b)))),
        }
    }

    /// `A ⊆ B` within [`SPAN_TOL`]; also returns the residual.
    pub fn included_in(&self, other: &OperatorSubspace) -> (bool, f64) {
        let r = self.span.inclusion_residual(&other.span);
        (r <= SPAN_TOL, r)
    }

    /// `φ_a` applied to each basis element, as a span on `H_a`.
    pub fn restrict_to_level(&self, level: Level) -> MatrixSpan {
        let mask = self.space.level_mask(level);
        let mats: Vec<CMatrix> = self.basis().iter().map(|b| select(b, mask, mask)).collect();
        MatrixSpan::new(mask.len(), &mats)
    }
}

fn check_budget(space: &DirectIntegralSpace, budget: usize) -> Result<(), AlgebraError> {
    if space.dim() > budget {
        Err(AlgebraError::DimensionBudgetExceeded { dim: space.dim(), budget })
    } else {
        Ok(())
    }
}

/// Smallest subspace containing `generators` and closed under the requested
/// operations.
pub fn span_closure(
    space: Arc<DirectIntegralSpace>,
    generators: &[LocalOperator],
    close_under: Closure,
    budget: usize,
) -> Result<OperatorSubspace, AlgebraError> {
    check_budget(&space, budget)?;
    let n = space.dim();
    let mut span = MatrixSpan::new(n, &[]);
    let mut frontier: Vec<CMatrix> = Vec::new();
    let push = |span: &mut MatrixSpan, frontier: &mut Vec<CMatrix>, m: CMatrix| {
        if span.try_insert(&m) {
            frontier.push(span.basis().last().unwrap().clone());
        }
    };
    if close_under.unit {
        push(&mut span, &mut frontier, CMatrix::identity(n, n));
    }
    for g in generators {
        if !Arc::ptr_eq(g.space(), &space) {
            return Err(AlgebraError::NotLocallyBounded);
        }
        push(&mut span, &mut frontier, g.matrix().clone());
    }
    // Each round multiplies new elements against the whole basis; the
    // dimension is bounded by n^2 so this terminates.
    while let Some(m) = frontier.pop() {
        if close_under.star {
            push(&mut span, &mut frontier, m.adjoint());
        }
        if close_under.product {
            let current: Vec<CMatrix> = span.basis().to_vec();
            for b in &current {
                push(&mut span, &mut frontier, &m * b);
                push(&mut span, &mut frontier, b * &m);
            }
        }
    }
    Ok(OperatorSubspace { space, span })
}

/// All matrix units `E_ij` within one positive-measure fiber whose
/// coordinates share their level membership: exactly the fiber blocks that
/// reduce every `H_{a,p}`.
pub fn dec_space(space: Arc<DirectIntegralSpace>) -> OperatorSubspace {
    let n = space.dim();
    let cell = space.cell_of();
    let layout = space.layout();
    let mut basis = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if layout[i].atom == layout[j].atom && cell[i] == cell[j] {
                let mut m = CMatrix::zeros(n, n);
                m[(i, j)] = ONE;
                basis.push(m);
            }
        }
    }
    OperatorSubspace { span: MatrixSpan { n, basis }, space }
}

/// One normalized indicator operator per positive-measure atom with a
/// nonzero fiber.
pub fn diag_space(space: Arc<DirectIntegralSpace>) -> OperatorSubspace {
    let n = space.dim();
    let mut basis = Vec::new();
    for atom in space.live_atoms() {
        let coords = space.fiber_coords(atom);
        if coords.is_empty() {
            continue;
        }
        let scale = 1.0 / (coords.len() as f64).sqrt();
        let mut m = CMatrix::zeros(n, n);
        for k in coords {
            m[(k, k)] = Complex64::new(scale, 0.0);
        }
        basis.push(m);
    }
    OperatorSubspace { span: MatrixSpan { n, basis }, space }
}

/// Allowed entry pattern of the ambient algebra a commutant is taken in.
fn cell_pattern(space: &DirectIntegralSpace) -> Vec<(usize, usize)> {
    let cell = space.cell_of();
    let n = space.dim();
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if cell[i] == cell[j] {
                out.push((i, j));
            }
        }
    }
    out
}

fn full_pattern(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).collect()
}

/// `{T in ambient : TB = BT for every B in span}` where the ambient is the
/// set of `n x n` matrices supported on `pattern`.
///
/// The support constraint is solved exactly by restricting to `pattern`.
/// Each basis element then prunes directions whose commutator is large
/// (`PRUNE_CUTOFF`), and the rank of the stacked commutator map on what
/// remains is decided with cutoff `RANK_CUTOFF` times its largest singular
/// value, floored at the largest Frobenius norm among the constraints.
pub fn commutant_of(n: usize, pattern: &[(usize, usize)], span: &MatrixSpan) -> Result<MatrixSpan, AlgebraError> {
    let n2 = n * n;
    // Current null-space basis, columns in C^{n^2}.
    let mut z = DMatrix::<Complex64>::zeros(n2, pattern.len());
    for (k, &(i, j)) in pattern.iter().enumerate() {
        z[(j * n + i, k)] = Complex64::new(1.0, 0.0);
    }
    let constraints = span.basis();
    let image_of = |z: &DMatrix<Complex64>, b: &CMatrix| {
        let mut image = DMatrix::<Complex64>::zeros(n2, z.ncols());
        for c in 0..z.ncols() {
            let t = CMatrix::from_column_slice(n, n, z.column(c).as_slice());
            image.set_column(c, &DVector::from_column_slice(commutator(&t, b).as_slice()));
        }
        image
    };
    // A numerically zero map must not set its own scale.
    let scale: f64 = constraints.iter().map(frobenius).fold(0.0, f64::max);
    // Pruning only drops directions that are far from null, so the final
    // rank decision does not depend on the chosen basis. Two fixed
    // pseudo-random combinations go first and usually prune to the answer.
    let mut rng = ChaCha8Rng::seed_from_u64(0x636f_6d6d);
    let combos: Vec<CMatrix> = (0..2.min(constraints.len()))
        .map(|_| {
            constraints.iter().fold(CMatrix::zeros(n, n), |acc, b| {
                acc + b * Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        })
        .collect();
    for b in combos.iter().chain(constraints) {
        if z.ncols() == 0 {
            break;
        }
        let image = image_of(&z, b);
        let svd = image.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let keep: Vec<usize> = (0..z.ncols()).filter(|&i| svd.singular_values[i] <= PRUNE_CUTOFF * scale).collect();
        if keep.len() < z.ncols() {
            z = &z * DMatrix::<Complex64>::from_fn(z.ncols(), keep.len(), |r, c| v_t[(keep[c], r)].conj());
        }
    }
    if z.ncols() > 0 && scale > 0.0 {
        // R factor of the stacked map T -> ([T, b_1], ..., [T, b_m]).
        let k = z.ncols();
        let mut r = DMatrix::<Complex64>::zeros(0, k);
        for b in constraints {
            let rows = r.nrows();
            let mut stacked = r.resize_vertically(rows + n2, ZERO);
            stacked.view_mut((rows, 0), (n2, k)).copy_from(&image_of(&z, b));
            r = stacked.qr().r();
        }
        let svd = r.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let sv = &svd.singular_values;
        let sigma_max = sv.iter().copied().fold(scale, f64::max);
        let cutoff = RANK_CUTOFF * sigma_max;
        // R is k x k since n^2 >= k.
        let mut keep: Vec<usize> = Vec::new();
        for (idx, &s) in sv.iter().enumerate() {
            if s > cutoff / 10.0 && s < cutoff * 10.0 {
                return Err(AlgebraError::RankAmbiguity { value: s, cutoff });
            }
            if s <= cutoff {
                keep.push(idx);
            }
        }
        z = &z * DMatrix::<Complex64>::from_fn(k, keep.len(), |r, c| v_t[(keep[c], r)].conj());
    }
    let mats: Vec<CMatrix> = (0..z.ncols()).map(|c| CMatrix::from_column_slice(n, n, z.column(c).as_slice())).collect();
    Ok(MatrixSpan::new(n, &mats))
}

/// `M' = {T ∈ C*_E(D) : TS = ST for all S ∈ M}`.
pub fn commutant(m: &OperatorSubspace) -> Result<OperatorSubspace, AlgebraError> {
    let space = m.space.clone();
    let span = commutant_of(space.dim(), &cell_pattern(&space), &m.span)?;
    Ok(OperatorSubspace { space, span })
}

/// `M'' = M` inside `C*_E(D)`, with the projector distance as residual.
pub fn double_commutant_check(m: &OperatorSubspace) -> Result<(bool, f64), AlgebraError> {
    let mpp = commutant(&commutant(m)?)?;
    let resid = m.span.distance_to(&mpp.span);
    Ok((resid <= SPAN_TOL, resid))
}

/// `M_a'' = M_a` for a span of matrices on `H_a`, commutants in `B(H_a)`.
pub fn level_double_commutant(span: &MatrixSpan) -> Result<(bool, f64), AlgebraError> {
    let pattern = full_pattern(span.order());
    let c1 = commutant_of(span.order(), &pattern, span)?;
    let c2 = commutant_of(span.order(), &pattern, &c1)?;
    let resid = span.distance_to(&c2);
    Ok((resid <= SPAN_TOL, resid))
}

/// Equal dimension and projector distance at most `tol`.
pub fn subspace_equal(a: &OperatorSubspace, b: &OperatorSubspace, tol: f64) -> bool {
    a.span.distance_to(&b.span) <= tol
}

/// One verified claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub detail: String,
}

impl ClaimResult {
    fn new(name: &str, passed: bool, residual: f64, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, residual, detail: detail.into() }
    }
}

/// Per-claim outcome of [`verify_theorems`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub dec_dim: usize,
    pub diag_dim: usize,
    pub diag_commutant_dim: usize,
    pub dec_commutant_dim: usize,
    pub dec_flags: SubspaceFlags,
    pub diag_flags: SubspaceFlags,
    pub claims: Vec<ClaimResult>,
    /// Facts computed for information only; they are not theorems.
    pub notes: Vec<String>,
}

impl TheoremReport {
    pub fn all_passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed)
    }

    pub fn claim(&self, name: &str) -> Option<&ClaimResult> {
        self.claims.iter().find(|c| c.name == name)
    }
}

/// Tolerance of the abelian check, relative to `||A|| ||B||`.
pub const ABELIAN_TOL: f64 = 1e-12;
/// Tolerance of the classical-decomposability check in claim (vi).
pub const CLASSICAL_TOL: f64 = 1e-10;

/// Runs every structural check on the decomposable and diagonalizable
/// algebras of `space`. Mathematical failures are recorded, not raised.
pub fn verify_theorems(space: Arc<DirectIntegralSpace>, budget: usize) -> Result<TheoremReport, AlgebraError> {
    verify_theorems_with(space, budget, SPAN_TOL)
}

/// [`verify_theorems`] with `tol` in place of [`SPAN_TOL`] for every
/// subspace comparison.
pub fn verify_theorems_with(
    space: Arc<DirectIntegralSpace>,
    budget: usize,
    tol: f64,
) -> Result<TheoremReport, AlgebraError> {
    check_budget(&space, budget)?;
    let poset = space.poset().clone();
    let dec = dec_space(space.clone());
    let diag = diag_space(space.clone());
    let mut claims = Vec::new();
    let mut notes = vec![
        "finite dimension: weak, strong and norm closures coincide".to_string(),
        "finite index set: the countability hypothesis holds".to_string(),
    ];

    // (i) both are unital *-algebras whose levels are von Neumann algebras
    let dec_flags = dec.flags();
    let diag_flags = diag.flags();
    for (label, flags) in [("DEC", dec_flags), ("DIAG", diag_flags)] {
        let ok = flags.contains_identity && flags.star_closed && flags.product_closed;
        claims.push(ClaimResult::new(
            &format!("{label} is a unital *-algebra"),
            ok,
            0.0,
            format!("{flags:?}"),
        ));
    }
    for (label, alg) in [("DEC", &dec), ("DIAG", &diag)] {
        let mut worst = 0.0f64;
        let mut ok = true;
        let mut failing = Vec::new();
        for level in poset.levels() {
            let (_, r) = level_double_commutant(&alg.restrict_to_level(level))?;
            let eq = r <= tol;
            worst = worst.max(if r.is_finite() { r } else { f64::MAX });
            if !eq {
                ok = false;
                failing.push(poset.name(level).to_string());
            }
        }
        claims.push(ClaimResult::new(
            &format!("{label} levels satisfy M'' = M"),
            ok,
            worst,
            if failing.is_empty() { "every level".to_string() } else { format!("fails at {}", failing.join(", ")) },
        ));
    }

    // (ii) DIAG abelian
    let mut comm_resid = 0.0f64;
    for a in diag.basis() {
        for b in diag.basis() {
            let scale = frobenius(a) * frobenius(b);
            comm_resid = comm_resid.max(frobenius(&commutator(a, b)) / scale.max(f64::MIN_POSITIVE));
        }
    }
    claims.push(ClaimResult::new("DIAG is abelian", comm_resid <= ABELIAN_TOL, comm_resid, ""));

    // (iii) containments
    let diag_c = commutant(&diag)?;
    let dec_c = commutant(&dec)?;
    let (_, r1) = diag.included_in(&dec_c);
    let in1 = r1 <= tol;
    claims.push(ClaimResult::new("DIAG ⊆ DEC'", in1, r1, format!("dim DEC' = {}", dec_c.dim())));
    let (_, r2) = dec.included_in(&diag_c);
    let in2 = r2 <= tol;
    claims.push(ClaimResult::new("DEC ⊆ DIAG'", in2, r2, format!("dim DIAG' = {}", diag_c.dim())));

    // (iv) main theorem
    let main = dec.span.distance_to(&diag_c.span);
    claims.push(ClaimResult::new(
        "DEC = DIAG'",
        main <= tol,
        if main.is_finite() { main } else { f64::MAX },
        format!("dim DEC = {}, dim DIAG' = {}", dec.dim(), diag_c.dim()),
    ));

    // global double commutants inside C*_E(D)
    let dec_pp = commutant(&dec_c)?;
    let dec_global = dec.span.distance_to(&dec_pp.span);
    claims.push(ClaimResult::new(
        "DEC'' = DEC in C*_E(D)",
        dec_global <= tol,
        if dec_global.is_finite() { dec_global } else { f64::MAX },
        format!("dim DEC'' = {}", dec_pp.dim()),
    ));
    let diag_pp = commutant(&diag_c)?;
    notes.push(format!(
        "DIAG'' inside C*_E(D) has dim {} (DIAG has dim {}): {}",
        diag_pp.dim(),
        diag.dim(),
        if subspace_equal(&diag_pp, &diag, tol) { "equal" } else { "DIAG'' = DEC' is larger" }
    ));
    notes.push(format!(
        "DEC' {} DIAG (dim {} vs {})",
        if subspace_equal(&dec_c, &diag, tol) { "equals" } else { "differs from" },
        dec_c.dim(),
        diag.dim()
    ));

    // (v) projective-limit consistency
    let mut exact = true;
    let mut worst = 0.0f64;
    for (lo, hi) in poset.comparable_pairs() {
        for b in dec.basis().iter().chain(diag.basis()) {
            let at_hi = select(b, space.level_mask(hi), space.level_mask(hi));
            let via = restrict_level(&space, &at_hi, hi, lo).expect("comparable pair");
            let direct = select(b, space.level_mask(lo), space.level_mask(lo));
            let d = crate::linalg::max_abs_diff(&via, &direct);
            worst = worst.max(d);
            if d != 0.0 {
                exact = false;
            }
        }
    }
    claims.push(ClaimResult::new("φ_{a,b} ∘ φ_b = φ_a on DEC and DIAG", exact, worst, ""));

    let mut lands = true;
    let mut lands_worst = 0.0f64;
    let mut dec_trunc_equal = Vec::new();
    for level in poset.levels() {
        let truncated = Arc::new(space.truncate(level)?);
        let dec_lvl = dec.restrict_to_level(level);
        let diag_lvl = diag.restrict_to_level(level);
        let dec_t = dec_space(truncated.clone());
        let diag_t = diag_space(truncated);
        let r_dec = dec_lvl.inclusion_residual(&dec_t.span);
        let r_diag = diag_lvl.distance_to(&diag_t.span);
        lands_worst = lands_worst.max(r_dec).max(if r_diag.is_finite() { r_diag } else { f64::MAX });
        if r_dec > tol || r_diag > tol {
            lands = false;
        }
        let eq = dec_lvl.distance_to(&dec_t.span) <= tol;
        dec_trunc_equal.push(format!("{}:{}", poset.name(level), if eq { "=" } else { "⊊" }));
    }
    claims.push(ClaimResult::new(
        "level algebras land in the truncated algebras",
        lands,
        lands_worst,
        "φ_a(DEC) ⊆ DEC(branch a), φ_a(DIAG) = DIAG(branch a)",
    ));
    notes.push(format!("φ_a(DEC) versus DEC(branch a): {}", dec_trunc_equal.join(" ")));

    // (vi) V_a-conjugates of DIAG' elements are classically decomposable
    let mut vi_ok = true;
    let mut sample: Vec<CMatrix> = diag_c.basis().to_vec();
    if let Some(first) = diag_c.basis().first() {
        let mix = diag_c
            .basis()
            .iter()
            .enumerate()
            .fold(first * Complex64::new(0.0, 0.0), |acc, (k, b)| acc + b * Complex64::new(1.0 + k as f64, 0.5));
        sample.push(mix);
    }
    for t in &sample {
        for level in poset.levels() {
            let v = space.v_alpha_matrix(level);
            let conj = &v * t * v.adjoint();
            if !classically_decomposable(&space, level, &conj, CLASSICAL_TOL) {
                vi_ok = false;
            }
        }
    }
    claims.push(ClaimResult::new(
        "V_a T V_a* is decomposable for T in DIAG'",
        vi_ok,
        0.0,
        format!("{} sampled operators", sample.len()),
    ));

    Ok(TheoremReport {
        dec_dim: dec.dim(),
        diag_dim: diag.dim(),
        diag_commutant_dim: diag_c.dim(),
        dec_commutant_dim: dec_c.dim(),
        dec_flags,
        diag_flags,
        claims,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral::tests::s1;
    use crate::linalg::{c, real_diag};

    fn s1a() -> Arc<DirectIntegralSpace> {
        Arc::new(s1())
    }

    /// Independent oracle: dimension of DEC by brute force over matrix units,
    /// testing each unit against every projection P_a.
    fn dec_dim_oracle(space: &DirectIntegralSpace) -> usize {
        let n = space.dim();
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                if space.layout()[i].atom != space.layout()[j].atom {
                    continue;
                }
                let mut e = CMatrix::zeros(n, n);
                e[(i, j)] = ONE;
                let ok = space.poset().levels().all(|l| {
                    let p = space.projection(l).matrix;
                    &p * &e == &e * &p
                });
                if ok {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn s1_dims() {
        let s = s1a();
        let dec = dec_space(s.clone());
        let diag = diag_space(s.clone());
        assert_eq!(dec.dim(), 3);
        assert_eq!(dec_dim_oracle(&s), 3);
        assert_eq!(diag.dim(), 2);
    }

    #[test]
    fn closure_examples() {
        let s = s1a();
        let unit = span_closure(s.clone(), &[], Closure::ALGEBRA, DEFAULT_DIM_BUDGET).unwrap();
        assert_eq!(unit.dim(), 1);
        let id = LocalOperator::identity(s.clone());
        assert_eq!(span_closure(s.clone(), &[id], Closure::ALGEBRA, DEFAULT_DIM_BUDGET).unwrap().dim(), 1);
        let t = LocalOperator::validate(s.clone(), real_diag(&[1.0, 2.0, 3.0])).unwrap();
        let alg = span_closure(s.clone(), &[t], Closure::ALGEBRA, DEFAULT_DIM_BUDGET).unwrap();
        assert_eq!(alg.dim(), 3);
        assert!(subspace_equal(&alg, &dec_space(s.clone()), 1e-9));
        let err = span_closure(s, &[], Closure::ALGEBRA, 2).unwrap_err();
        assert!(matches!(err, AlgebraError::DimensionBudgetExceeded { dim: 3, budget: 2 }));
    }

    #[test]
    fn commutant_examples() {
        let s = s1a();
        let scalars = span_closure(s.clone(), &[], Closure::ALGEBRA, DEFAULT_DIM_BUDGET).unwrap();
        let all = commutant(&scalars).unwrap();
        // C*_E(D) for S1: cells {0} and {1,2} -> 1 + 4 entries
        assert_eq!(all.dim(), 5);
        let diag_c = commutant(&diag_space(s.clone())).unwrap();
        assert_eq!(diag_c.dim(), 3);
        assert!(subspace_equal(&diag_c, &dec_space(s.clone()), 1e-9));
    }

    #[test]
    fn schur_case() {
        // single unfiltered fiber: commutant of all matrices is the scalars
        let n = 3;
        let full = MatrixSpan::new(
            n,
            &full_pattern(n)
                .into_iter()
                .map(|(i, j)| {
                    let mut m = CMatrix::zeros(n, n);
                    m[(i, j)] = ONE;
                    m
                })
                .collect::<Vec<_>>(),
        );
        let c1 = commutant_of(n, &full_pattern(n), &full).unwrap();
        assert_eq!(c1.dim(), 1);
        assert!(c1.contains(&CMatrix::identity(n, n), 1e-12));
    }

    #[test]
    fn double_commutants_on_s1() {
        let s = s1a();
        assert!(double_commutant_check(&dec_space(s.clone())).unwrap().0);
        // inside C*_E(D), DIAG'' = DEC' = diagonal matrices, which is larger
        let (eq, _) = double_commutant_check(&diag_space(s.clone())).unwrap();
        assert!(!eq);
        let scalars = span_closure(s.clone(), &[], Closure::ALGEBRA, DEFAULT_DIM_BUDGET).unwrap();
        let (eq, _) = double_commutant_check(&scalars).unwrap();
        // two level cells -> the centre of C*_E(D) is two-dimensional
        assert!(!eq);
        // level by level the diagonal algebra is a von Neumann algebra
        for l in s.poset().levels() {
            assert!(level_double_commutant(&diag_space(s.clone()).restrict_to_level(l)).unwrap().0);
        }
    }

    #[test]
    fn subspace_equality() {
        let s = s1a();
        let dec = dec_space(s.clone());
        assert!(subspace_equal(&dec, &dec, 0.0));
        assert!(!subspace_equal(&diag_space(s.clone()), &dec, 1e-9));
    }

    #[test]
    fn s1_theorems() {
        let report = verify_theorems(s1a(), DEFAULT_DIM_BUDGET).unwrap();
        assert!(report.all_passed(), "{report:#?}");
        assert_eq!((report.dec_dim, report.diag_dim, report.diag_commutant_dim), (3, 2, 3));
    }

    #[test]
    fn closure_is_closed() {
        let s = s1a();
        let mut m = CMatrix::zeros(3, 3);
        m[(1, 2)] = c(1.0, 1.0);
        m[(0, 0)] = c(2.0, 0.0);
        let t = LocalOperator::validate(s.clone(), m).unwrap();
        let alg = span_closure(s, &[t], Closure::ALGEBRA, DEFAULT_DIM_BUDGET).unwrap();
        let f = alg.flags();
        assert!(f.contains_identity && f.star_closed && f.product_closed);
        assert_eq!(alg.dim(), 5);
    }
}
