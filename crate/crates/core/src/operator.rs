//! Locally bounded operators on a direct integral, their seminorms and level
//! restrictions, and the decomposable / diagonalizable classes.
//!
//! An operator is stored by its action on the top level `H_{γ*} = D`, as a
//! matrix in the orthonormal frame of the global layout. Its projective net
//! `{T_a}` is recovered with [`LocalOperator::restrict`].

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::integral::{Coord, DirectIntegralSpace, IntegralError, Section};
use crate::linalg::{frobenius, select, spectral_norm, CMatrix, ZERO};
use crate::poset::Level;

/// Entrywise tolerance of the reduction test `P_a T = T P_a`.
pub const REDUCTION_TOL: f64 = 1e-14;
/// Relative tolerance of the scalar-block test.
pub const SCALAR_BLOCK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("matrix is {got}x{got}, space has dimension {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("not locally bounded: entry ({row}, {col}) couples H_{level} with its complement")]
    NotLocallyBounded { level: String, row: String, col: String },
    #[error("fiber `{atom}`: block does not reduce H_{level},{atom} (entry ({row}, {col}))")]
    FiberReductionViolation { atom: String, level: String, row: usize, col: usize },
    #[error("fiber `{atom}`: expected a {expected}x{expected} block")]
    FiberShape { atom: String, expected: usize },
    #[error("operands live on different spaces")]
    DifferentSpaces,
    #[error("levels `{0}` and `{1}` are not comparable")]
    NotComparable(String, String),
    #[error(transparent)]
    Integral(#[from] IntegralError),
}

/// A locally bounded operator: every `H_a` reduces the matrix.
#[derive(Debug, Clone)]
pub struct LocalOperator {
    space: Arc<DirectIntegralSpace>,
    matrix: CMatrix,
}

fn coord_name(space: &DirectIntegralSpace, c: Coord) -> String {
    format!("({},{})", space.atom_name(c.atom), c.index)
}

/// First `(level, row, col)` whose entry couples a level subspace with its
/// complement.
pub fn reduction_witness(space: &DirectIntegralSpace, m: &CMatrix) -> Option<(Level, usize, usize)> {
    let n = space.dim();
    for level in space.poset().levels() {
        for i in 0..n {
            for j in 0..n {
                if space.in_mask(level, i) != space.in_mask(level, j) && m[(i, j)].norm() > REDUCTION_TOL {
                    return Some((level, i, j));
                }
            }
        }
    }
    None
}

impl LocalOperator {
    /// Certifies that every level subspace reduces `matrix`.
    pub fn validate(space: Arc<DirectIntegralSpace>, matrix: CMatrix) -> Result<Self, OperatorError> {
        let n = space.dim();
        if matrix.shape() != (n, n) {
            return Err(OperatorError::ShapeMismatch { expected: n, got: matrix.nrows() });
        }
        if let Some((level, i, j)) = reduction_witness(&space, &matrix) {
            return Err(OperatorError::NotLocallyBounded {
                level: space.poset().name(level).to_string(),
                row: coord_name(&space, space.layout()[i]),
                col: coord_name(&space, space.layout()[j]),
            });
        }
        Ok(Self { space, matrix })
    }

    pub(crate) fn from_trusted(space: Arc<DirectIntegralSpace>, matrix: CMatrix) -> Self {
        debug_assert!(reduction_witness(&space, &matrix).is_none());
        Self { space, matrix }
    }

    pub fn identity(space: Arc<DirectIntegralSpace>) -> Self {
        let n = space.dim();
        Self { space, matrix: CMatrix::identity(n, n) }
    }

    pub fn zero(space: Arc<DirectIntegralSpace>) -> Self {
        let n = space.dim();
        Self { space, matrix: CMatrix::zeros(n, n) }
    }

    pub fn space(&self) -> &Arc<DirectIntegralSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// `p_a(T) = ||T|_{H_a}||`.
    pub fn seminorm(&self, level: Level) -> f64 {
        spectral_norm(&self.restrict_top(level))
    }

    /// `φ_a(T) = T|_{H_a}` in level coordinates.
    pub fn restrict_top(&self, level: Level) -> CMatrix {
        let mask = self.space.level_mask(level);
        select(&self.matrix, mask, mask)
    }

    /// `φ_{a,b}(φ_b(T))`: the level-`lo` block of `T|_{H_hi}`.
    pub fn restrict(&self, hi: Level, lo: Level) -> Result<CMatrix, OperatorError> {
        let at_hi = self.restrict_top(hi);
        restrict_level(&self.space, &at_hi, hi, lo)
    }

    /// `(Tu)`, computed through the orthonormal frame.
    pub fn apply(&self, u: &Section) -> Section {
        let y = &self.matrix * self.space.to_frame(u);
        self.space.from_frame(&y)
    }

    fn check_same(&self, other: &LocalOperator) -> Result<(), OperatorError> {
        if Arc::ptr_eq(&self.space, &other.space) {
            Ok(())
        } else {
            Err(OperatorError::DifferentSpaces)
        }
    }

    pub fn add(&self, other: &LocalOperator) -> Result<LocalOperator, OperatorError> {
        self.check_same(other)?;
        Ok(Self::from_trusted(self.space.clone(), &self.matrix + &other.matrix))
    }

    pub fn scale(&self, lambda: Complex64) -> LocalOperator {
        Self::from_trusted(self.space.clone(), &self.matrix * lambda)
    }

    pub fn mul(&self, other: &LocalOperator) -> Result<LocalOperator, OperatorError> {
        self.check_same(other)?;
        Ok(Self::from_trusted(self.space.clone(), &self.matrix * &other.matrix))
    }

    pub fn adjoint(&self) -> LocalOperator {
        Self::from_trusted(self.space.clone(), self.matrix.adjoint())
    }

    /// Entrywise residual of the dilation identity
    /// `V_a T V_a* = (V_a J*_{b,a} V_b*)(V_b T V_b*)(V_b J_{b,a} V_a*)`.
    pub fn dilation_residual(&self, lo: Level, hi: Level) -> Result<f64, OperatorError> {
        let space = &self.space;
        let j = space.inclusion(lo, hi)?.matrix;
        let (v_lo, v_hi) = (space.v_alpha_matrix(lo), space.v_alpha_matrix(hi));
        let lhs = &v_lo * &self.matrix * v_lo.adjoint();
        let mid = &v_hi * &self.matrix * v_hi.adjoint();
        let rhs = j.adjoint() * mid * j;
        Ok(crate::linalg::max_abs_diff(&lhs, &rhs))
    }

    /// Reads off the fiber family when `T` does not couple distinct
    /// positive-measure fibers, and the scalar symbol when each block is
    /// additionally a multiple of the identity.
    pub fn classify(&self) -> ClassificationReport {
        classify_matrix(&self.space, &self.matrix)
    }
}

/// `φ_{lo,hi}` on a level-`hi` matrix.
pub fn restrict_level(
    space: &DirectIntegralSpace,
    at_hi: &CMatrix,
    hi: Level,
    lo: Level,
) -> Result<CMatrix, OperatorError> {
    if !space.poset().leq(lo, hi) {
        return Err(OperatorError::NotComparable(
            space.poset().name(lo).to_string(),
            space.poset().name(hi).to_string(),
        ));
    }
    let (mhi, mlo) = (space.level_mask(hi), space.level_mask(lo));
    let pos: Vec<usize> = mlo
        .iter()
        .map(|k| mhi.iter().position(|x| x == k).expect("nested level masks"))
        .collect();
    Ok(select(at_hi, &pos, &pos))
}

/// `{T_p}`: one square block per atom, `None` on null atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposableForm {
    pub blocks: Vec<Option<CMatrix>>,
}

/// `f`: one scalar per atom, `None` on null atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSymbol {
    pub values: Vec<Option<Complex64>>,
}

impl DiagonalSymbol {
    pub fn total(values: Vec<Complex64>) -> Self {
        Self { values: values.into_iter().map(Some).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub locally_bounded: bool,
    pub decomposable: Option<DecomposableForm>,
    pub diagonalizable: Option<DiagonalSymbol>,
    pub witnesses: Vec<String>,
}

/// Block-diagonal assembly of a fiber family.
pub fn assemble_decomposable(
    space: Arc<DirectIntegralSpace>,
    family: &DecomposableForm,
) -> Result<LocalOperator, OperatorError> {
    let n = space.dim();
    if family.blocks.len() != space.atom_count() {
        return Err(OperatorError::ShapeMismatch { expected: space.atom_count(), got: family.blocks.len() });
    }
    let mut m = CMatrix::zeros(n, n);
    for atom in space.live_atoms() {
        let fiber = space.fiber(atom);
        let d = fiber.ambient_dim;
        let block = family.blocks[atom]
            .as_ref()
            .ok_or_else(|| OperatorError::FiberShape { atom: space.atom_name(atom).to_string(), expected: d })?;
        if block.shape() != (d, d) {
            return Err(OperatorError::FiberShape { atom: space.atom_name(atom).to_string(), expected: d });
        }
        if let Some((level, row, col)) = fiber.reduction_violation(block) {
            return Err(OperatorError::FiberReductionViolation {
                atom: space.atom_name(atom).to_string(),
                level: space.poset().name(level).to_string(),
                row,
                col,
            });
        }
        let r = space.fiber_coords(atom);
        m.view_mut((r.start, r.start), (d, d)).copy_from(block);
    }
    Ok(LocalOperator::from_trusted(space, m))
}

/// `∫ f(p) Id_{D_p} dmu(p)`.
pub fn assemble_diagonalizable(
    space: Arc<DirectIntegralSpace>,
    symbol: &DiagonalSymbol,
) -> Result<LocalOperator, OperatorError> {
    if symbol.values.len() != space.atom_count() {
        return Err(OperatorError::ShapeMismatch { expected: space.atom_count(), got: symbol.values.len() });
    }
    let n = space.dim();
    let mut m = CMatrix::zeros(n, n);
    for atom in space.live_atoms() {
        let f = symbol.values[atom].unwrap_or(ZERO);
        for k in space.fiber_coords(atom) {
            m[(k, k)] = f;
        }
    }
    Ok(LocalOperator::from_trusted(space, m))
}

/// Classification of an arbitrary square matrix on the space.
pub fn classify_matrix(space: &DirectIntegralSpace, m: &CMatrix) -> ClassificationReport {
    let mut witnesses = Vec::new();
    let locally_bounded = match reduction_witness(space, m) {
        None => true,
        Some((level, i, j)) => {
            witnesses.push(format!(
                "entry {} -> {} couples H_{} with its complement",
                coord_name(space, space.layout()[j]),
                coord_name(space, space.layout()[i]),
                space.poset().name(level)
            ));
            false
        }
    };
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let layout = space.layout();
    let mut cross = None;
    'outer: for i in 0..space.dim() {
        for j in 0..space.dim() {
            if layout[i].atom != layout[j].atom && m[(i, j)].norm() > REDUCTION_TOL * scale {
                cross = Some((i, j));
                break 'outer;
            }
        }
    }
    let decomposable = match cross {
        Some((i, j)) => {
            witnesses.push(format!(
                "entry {} -> {} couples fibers `{}` and `{}`",
                coord_name(space, layout[j]),
                coord_name(space, layout[i]),
                space.atom_name(layout[j].atom),
                space.atom_name(layout[i].atom)
            ));
            None
        }
        None if locally_bounded => Some(DecomposableForm {
            blocks: (0..space.atom_count())
                .map(|a| {
                    let r: Vec<usize> = space.fiber_coords(a).collect();
                    (!space.is_null_atom(a)).then(|| select(m, &r, &r))
                })
                .collect(),
        }),
        None => None,
    };
    let diagonalizable = decomposable.as_ref().and_then(|form| {
        let mut values = Vec::with_capacity(form.blocks.len());
        for (a, block) in form.blocks.iter().enumerate() {
            match block {
                None => values.push(None),
                Some(b) => match scalar_of(b) {
                    Some(f) => values.push(Some(f)),
                    None => {
                        witnesses.push(format!("fiber `{}` block is not a multiple of the identity", space.atom_name(a)));
                        return None;
                    }
                },
            }
        }
        Some(DiagonalSymbol { values })
    });
    ClassificationReport { locally_bounded, decomposable, diagonalizable, witnesses }
}

/// `Some(c)` when `b ≈ c·I` under the scalar-block tolerance.
pub fn scalar_of(b: &CMatrix) -> Option<Complex64> {
    let d = b.nrows();
    if d == 0 {
        return Some(ZERO);
    }
    let exact = (0..d).all(|i| (0..d).all(|j| if i == j { b[(i, j)] == b[(0, 0)] } else { b[(i, j)] == ZERO }));
    if exact {
        return Some(b[(0, 0)]);
    }
    let mean = b.trace() / d as f64;
    let resid = b - CMatrix::identity(d, d) * mean;
    (frobenius(&resid) <= SCALAR_BLOCK_TOL * frobenius(b).max(1.0)).then_some(mean)
}

/// Whether a level-`a` matrix is block diagonal across the atoms of `X_a`,
/// i.e. a classical decomposable operator on `∫_{X_a} H_{a,p} dmu_a`.
pub fn classically_decomposable(space: &DirectIntegralSpace, level: Level, at_level: &CMatrix, tol: f64) -> bool {
    let mask = space.level_mask(level);
    let atoms: Vec<usize> = mask.iter().map(|&k| space.layout()[k].atom).collect();
    (0..mask.len()).all(|i| (0..mask.len()).all(|j| atoms[i] == atoms[j] || at_level[(i, j)].norm() <= tol))
}
