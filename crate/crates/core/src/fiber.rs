//! Per-point quantized domains. Every level subspace `H_{a,p}` is the span of
//! the first `d_{a,p}` coordinates of the ambient fiber `D_p`, so inclusions
//! are coordinate embeddings and level projections are diagonal 0/1 matrices.

use thiserror::Error;

use crate::linalg::{CMatrix, CVector, ONE, ZERO};
use crate::measure::InductiveMeasureSystem;
use crate::poset::{DirectedPoset, Level};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FiberError {
    #[error("atom `{atom}`: d({lo}) = {dlo} > d({hi}) = {dhi} although `{lo}` <= `{hi}`")]
    NonMonotoneDims { atom: String, lo: String, hi: String, dlo: usize, dhi: usize },
    #[error("atom `{atom}` lies in X_{level} but declares no dimension there")]
    MissingLevel { atom: String, level: String },
    #[error("atom `{atom}` declares a dimension at `{level}` but is not in X_{level}")]
    UnexpectedLevel { atom: String, level: String },
    #[error("atom `{atom}`: ambient dimension {declared} differs from top-level dimension {top}")]
    AmbientMismatch { atom: String, declared: usize, top: usize },
    #[error("no fiber declared for atom `{0}`")]
    MissingFiber(String),
    #[error("levels `{0}` and `{1}` are not comparable")]
    NotComparable(String, String),
    #[error("nested subspaces do not form a chain")]
    NotAChain,
}

/// Raw fiber declaration: optional ambient dimension and `d_{a,p}` per level
/// (indexed like the poset; `None` where the atom is absent).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiberCandidate {
    pub ambient: Option<usize>,
    pub level_dims: Vec<Option<usize>>,
}

/// `{H_p; {H_{a,p}}; D_p}` for a single atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiberFiltration {
    pub atom: usize,
    pub ambient_dim: usize,
    level_dims: Vec<Option<usize>>,
}

impl FiberFiltration {
    /// `d_{a,p}`, or `None` when `p ∉ X_a`.
    pub fn dim_at(&self, level: Level) -> Option<usize> {
        self.level_dims[level.0]
    }

    /// `d_{a,p}` with absence read as the zero subspace.
    pub fn dim_or_zero(&self, level: Level) -> usize {
        self.level_dims[level.0].unwrap_or(0)
    }

    /// `J_{b,a}` on this fiber: the `d_b × d_a` coordinate embedding.
    pub fn inclusion(&self, poset: &DirectedPoset, lo: Level, hi: Level) -> Result<CMatrix, FiberError> {
        if !poset.leq(lo, hi) {
            return Err(FiberError::NotComparable(poset.name(lo).into(), poset.name(hi).into()));
        }
        let (dlo, dhi) = (self.dim_or_zero(lo), self.dim_or_zero(hi));
        Ok(CMatrix::from_fn(dhi, dlo, |i, j| if i == j { ONE } else { ZERO }))
    }

    /// Orthogonal projection of `D_p` onto `H_{a,p}`.
    pub fn projection(&self, level: Level) -> CMatrix {
        let d = self.dim_or_zero(level);
        CMatrix::from_fn(self.ambient_dim, self.ambient_dim, |i, j| {
            if i == j && i < d {
                ONE
            } else {
                ZERO
            }
        })
    }

    /// Whether a fiber matrix reduces every `H_{a,p}` (`T_p ∈ C*_{E_p}(D_p)`).
    /// Returns the first violating `(level, row, col)` otherwise.
    pub fn reduction_violation(&self, m: &CMatrix) -> Option<(Level, usize, usize)> {
        for (l, d) in self.level_dims.iter().enumerate() {
            let Some(d) = *d else { continue };
            for i in 0..self.ambient_dim {
                for j in 0..self.ambient_dim {
                    if (i < d) != (j < d) && m[(i, j)] != ZERO {
                        return Some((Level(l), i, j));
                    }
                }
            }
        }
        None
    }

    /// Distinct level dimensions with 0 and the ambient dimension, sorted:
    /// consecutive pairs delimit the coordinate intervals a reducing matrix
    /// must preserve.
    pub fn breakpoints(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.level_dims.iter().flatten().copied().collect();
        out.push(0);
        out.push(self.ambient_dim);
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Certifies monotone dimensions and fixes each ambient dimension at the
/// greatest level. `candidates` is indexed by atom.
pub fn validate_filtration(
    candidates: &[Option<FiberCandidate>],
    system: &InductiveMeasureSystem,
) -> Result<Vec<FiberFiltration>, FiberError> {
    let poset = system.poset();
    let names = system.atom_names();
    let mut out = Vec::with_capacity(names.len());
    for atom in system.total_set().iter() {
        let cand = candidates
            .get(atom)
            .and_then(|c| c.as_ref())
            .ok_or_else(|| FiberError::MissingFiber(names[atom].clone()))?;
        for lvl in poset.levels() {
            let present = system.ground(lvl).contains(atom);
            let declared = cand.level_dims.get(lvl.0).copied().flatten();
            match (present, declared) {
                (true, None) => {
                    return Err(FiberError::MissingLevel {
                        atom: names[atom].clone(),
                        level: poset.name(lvl).into(),
                    })
                }
                (false, Some(_)) => {
                    return Err(FiberError::UnexpectedLevel {
                        atom: names[atom].clone(),
                        level: poset.name(lvl).into(),
                    })
                }
                _ => {}
            }
        }
        let level_dims: Vec<Option<usize>> =
            poset.levels().map(|l| cand.level_dims.get(l.0).copied().flatten()).collect();
        for (lo, hi) in poset.comparable_pairs() {
            if let (Some(dlo), Some(dhi)) = (level_dims[lo.0], level_dims[hi.0]) {
                if dlo > dhi {
                    return Err(FiberError::NonMonotoneDims {
                        atom: names[atom].clone(),
                        lo: poset.name(lo).into(),
                        hi: poset.name(hi).into(),
                        dlo,
                        dhi,
                    });
                }
            }
        }
        let top = level_dims[poset.greatest().0].expect("top level contains every atom");
        if let Some(declared) = cand.ambient {
            if declared != top {
                return Err(FiberError::AmbientMismatch { atom: names[atom].clone(), declared, top });
            }
        }
        out.push(FiberFiltration { atom, ambient_dim: top, level_dims });
    }
    Ok(out)
}

/// Normalizes a chain of nested subspaces of `C^n` (each given by spanning
/// vectors, in any order) to the prefix convention: returns an orthonormal
/// ambient basis (as columns) adapted to the chain and each subspace's
/// dimension, in input order.
pub fn adapted_basis(n: usize, spans: &[Vec<CVector>]) -> Result<(CMatrix, Vec<usize>), FiberError> {
    const TOL: f64 = 1e-10;
    let mut orth: Vec<Vec<CVector>> = spans.iter().map(|s| gram_schmidt(s, TOL)).collect();
    let dims: Vec<usize> = orth.iter().map(|b| b.len()).collect();
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| dims[i]);
    let mut basis: Vec<CVector> = Vec::new();
    for &i in &order {
        // Nested: the current basis must lie inside span i.
        for v in &basis {
            let resid = residual(v, &orth[i]);
            if resid > TOL * v.norm().max(1.0) {
                return Err(FiberError::NotAChain);
            }
        }
        let mut extended = basis.clone();
        extended.append(&mut orth[i]);
        basis = gram_schmidt(&extended, TOL);
    }
    let mut full = basis.clone();
    full.extend((0..n).map(|k| {
        let mut e = CVector::zeros(n);
        e[k] = ONE;
        e
    }));
    let full = gram_schmidt(&full, TOL);
    Ok((CMatrix::from_columns(&full), dims))
}

fn residual(v: &CVector, onb: &[CVector]) -> f64 {
    let mut r = v.clone();
    for q in onb {
        let coeff = q.dotc(&r);
        r -= q * coeff;
    }
    r.norm()
}

fn gram_schmidt(vectors: &[CVector], tol: f64) -> Vec<CVector> {
    let mut out: Vec<CVector> = Vec::new();
    for v in vectors {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &out {
                let coeff = q.dotc(&r);
                r -= q * coeff;
            }
        }
        let norm = r.norm();
        if norm > tol * v.norm().max(1.0) {
            out.push(r / nalgebra::Complex::new(norm, 0.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff};
    use crate::measure::{
        AtomSet, ExtendedReal, FiniteMeasurableSpace, LevelData, MeasureTable, WeightMode,
    };

    fn chain_system() -> InductiveMeasureSystem {
        let poset = DirectedPoset::validate(&["a", "b"], &[("a", "b")]).unwrap();
        let x = AtomSet::singleton(0);
        let one = ExtendedReal::parse("1", WeightMode::Rational).unwrap();
        let level = || LevelData {
            space: FiniteMeasurableSpace::power_set(x),
            table: MeasureTable::AtomWeights(vec![(0, one.clone())]),
        };
        InductiveMeasureSystem::validate(poset, vec!["p".into()], WeightMode::Rational, vec![level(), level()])
            .unwrap()
    }

    fn cand(dims: [usize; 2]) -> Vec<Option<FiberCandidate>> {
        vec![Some(FiberCandidate { ambient: None, level_dims: vec![Some(dims[0]), Some(dims[1])] })]
    }

    #[test]
    fn growing_chain_is_valid() {
        let sys = chain_system();
        let f = validate_filtration(&cand([1, 2]), &sys).unwrap();
        assert_eq!(f[0].ambient_dim, 2);
    }

    #[test]
    fn shrinking_chain_is_rejected() {
        let sys = chain_system();
        let err = validate_filtration(&cand([2, 1]), &sys).unwrap_err();
        assert!(matches!(err, FiberError::NonMonotoneDims { dlo: 2, dhi: 1, .. }));
    }

    #[test]
    fn stationary_filtration() {
        let sys = chain_system();
        let f = validate_filtration(&cand([3, 3]), &sys).unwrap();
        let (a, b) = (Level(0), Level(1));
        assert_eq!(f[0].projection(a), f[0].projection(b));
        assert_eq!(f[0].ambient_dim, 3);
    }

    #[test]
    fn missing_and_unexpected_levels() {
        let sys = chain_system();
        let c1 = vec![Some(FiberCandidate { ambient: None, level_dims: vec![None, Some(1)] })];
        assert!(matches!(validate_filtration(&c1, &sys), Err(FiberError::MissingLevel { .. })));
        let c2 = vec![Some(FiberCandidate { ambient: Some(5), level_dims: vec![Some(1), Some(2)] })];
        assert!(matches!(validate_filtration(&c2, &sys), Err(FiberError::AmbientMismatch { .. })));
        assert!(matches!(validate_filtration(&[None], &sys), Err(FiberError::MissingFiber(_))));
    }

    #[test]
    fn projections_are_orthogonal_and_nested() {
        let sys = chain_system();
        let f = &validate_filtration(&cand([1, 3]), &sys).unwrap()[0];
        let (pa, pb) = (f.projection(Level(0)), f.projection(Level(1)));
        for p in [&pa, &pb] {
            assert!(max_abs_diff(&(p * p), p) <= 1e-14);
            assert!(max_abs_diff(&p.adjoint(), p) <= 1e-14);
        }
        assert_eq!(&pa * &pb, pa);
        assert_eq!(&pb * &pa, pa);
    }

    #[test]
    fn fiber_inclusion_is_isometric() {
        let sys = chain_system();
        let f = &validate_filtration(&cand([1, 2]), &sys).unwrap()[0];
        let j = f.inclusion(sys.poset(), Level(0), Level(1)).unwrap();
        assert_eq!(j.shape(), (2, 1));
        assert_eq!(j.adjoint() * &j, CMatrix::identity(1, 1));
        assert_eq!(&j * j.adjoint(), f.projection(Level(0)));
        assert!(matches!(f.inclusion(sys.poset(), Level(1), Level(0)), Err(FiberError::NotComparable(..))));
    }

    #[test]
    fn adapted_basis_for_a_chain() {
        let v = |a: f64, b: f64, d: f64| CVector::from_vec(vec![c(a, 0.0), c(b, 0.0), c(d, 0.0)]);
        // span{(1,1,0)} ⊂ span{(1,0,0),(0,1,0)}
        let spans = vec![vec![v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)], vec![v(1.0, 1.0, 0.0)]];
        let (basis, dims) = adapted_basis(3, &spans).unwrap();
        assert_eq!(dims, vec![2, 1]);
        let gram = basis.adjoint() * &basis;
        assert!(max_abs_diff(&gram, &CMatrix::identity(3, 3)) < 1e-12);
        // first column spans the smallest subspace
        let first = basis.column(0);
        assert!((first[0] - first[1]).norm() < 1e-12);

        let not_nested = vec![vec![v(1.0, 0.0, 0.0)], vec![v(0.0, 1.0, 0.0)]];
        assert_eq!(adapted_basis(3, &not_nested).unwrap_err(), FiberError::NotAChain);
    }
}
