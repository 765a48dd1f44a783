//! The direct integral of a family of fiber filtrations over a locally measure
//! space, in a global coordinate model.
//!
//! Coordinates are pairs `(p, i)` with `p` a positive-measure atom and
//! `i < dim D_p`, ordered by atom then index. Null atoms carry no coordinates:
//! sections are identified almost everywhere, so their values there are
//! forgotten. Level `a` owns the coordinates `(p, i)` with `p ∈ X_a` and
//! `i < d_{a,p}`; `H_a` is their span.
//!
//! Operator matrices (see [`crate::operator`]) act in the orthonormal frame
//! `e_(p,i) / sqrt(mu{p})`, so adjoints are conjugate transposes. Sections are
//! stored by their pointwise values `u(p)`.

use num_complex::Complex64;
use thiserror::Error;

use crate::fiber::{validate_filtration, FiberCandidate, FiberError, FiberFiltration};
use crate::linalg::{CMatrix, CVector, ONE, ZERO};
use crate::measure::{
    AtomSet, ExtendedReal, FiniteMeasurableSpace, InductiveMeasureSystem, LevelData, LocallyMeasureSpace,
    MeasureTable,
};
use crate::poset::{DirectedPoset, Level};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegralError {
    #[error("fiber data does not match the measure system ({0})")]
    InconsistentPoset(String),
    #[error("atom `{0}` is not measurable on its own; direct integrals need a power-set limit sigma-algebra")]
    NonAtomicSigma(String),
    #[error("atom `{0}` has infinite mass; sections there are not square integrable")]
    InfiniteWeight(String),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error("section shape does not match the space at atom `{0}`")]
    ShapeMismatch(String),
    #[error("section is not in H_{0}")]
    NotInLevel(String),
    #[error("section is not a member of any level")]
    NoAdmissibleLevel,
    #[error("levels `{0}` and `{1}` are not comparable")]
    NotComparable(String, String),
    #[error("classical vector has {got} coordinates, level needs {expected}")]
    WrongLength { expected: usize, got: usize },
}

/// A global coordinate `(p, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coord {
    pub atom: usize,
    pub index: usize,
}

/// Nontriviality of one level (`H_a` may well be `{0}`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSummary {
    pub level: String,
    pub dim: usize,
    pub nontrivial: bool,
}

#[derive(Debug, Clone)]
pub struct DirectIntegralSpace {
    measure: LocallyMeasureSpace,
    fibers: Vec<FiberFiltration>,
    weights: Vec<f64>,
    null_atoms: AtomSet,
    layout: Vec<Coord>,
    offsets: Vec<Option<usize>>,
    level_masks: Vec<Vec<usize>>,
}

impl DirectIntegralSpace {
    /// `fibers` must be the output of [`validate_filtration`]
    /// for the same system: one per atom, in atom order.
    pub fn build(measure: LocallyMeasureSpace, fibers: Vec<FiberFiltration>) -> Result<Self, IntegralError> {
        let system = measure.system();
        let names = system.atom_names();
        let total = measure.total_set();
        if total.len() != names.len() || total != AtomSet::from_atoms(0..names.len()) {
            let stray = (0..names.len()).find(|&a| !total.contains(a)).unwrap_or(0);
            return Err(IntegralError::InconsistentPoset(format!(
                "atom `{}` is in no level",
                names.get(stray).cloned().unwrap_or_default()
            )));
        }
        if fibers.len() != names.len() || fibers.iter().enumerate().any(|(i, f)| f.atom != i) {
            return Err(IntegralError::InconsistentPoset("one fiber per atom expected".into()));
        }
        let mut weights = Vec::with_capacity(names.len());
        let mut null_atoms = AtomSet::EMPTY;
        for a in 0..fibers.len() {
            let mass = measure
                .point_mass(a)
                .ok_or_else(|| IntegralError::NonAtomicSigma(names[a].clone()))?;
            if let ExtendedReal::Infinity = mass {
                return Err(IntegralError::InfiniteWeight(names[a].clone()));
            }
            if mass.is_zero() {
                null_atoms = null_atoms.union(AtomSet::singleton(a));
            }
            weights.push(mass.to_f64());
        }
        let mut layout = Vec::new();
        let mut offsets = vec![None; names.len()];
        for (a, fiber) in fibers.iter().enumerate() {
            if null_atoms.contains(a) {
                continue;
            }
            offsets[a] = Some(layout.len());
            layout.extend((0..fiber.ambient_dim).map(|index| Coord { atom: a, index }));
        }
        let level_masks = system
            .poset()
            .levels()
            .map(|l| {
                layout
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.index < fibers[c.atom].dim_or_zero(l))
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        Ok(Self { measure, fibers, weights, null_atoms, layout, offsets, level_masks })
    }

    pub fn measure(&self) -> &LocallyMeasureSpace {
        &self.measure
    }

    pub fn poset(&self) -> &DirectedPoset {
        self.measure.poset()
    }

    pub fn atom_count(&self) -> usize {
        self.fibers.len()
    }

    pub fn atom_name(&self, atom: usize) -> &str {
        &self.measure.system().atom_names()[atom]
    }

    pub fn fiber(&self, atom: usize) -> &FiberFiltration {
        &self.fibers[atom]
    }

    pub fn fibers(&self) -> &[FiberFiltration] {
        &self.fibers
    }

    /// `mu({p})` as a float.
    pub fn weight(&self, atom: usize) -> f64 {
        self.weights[atom]
    }

    pub fn is_null_atom(&self, atom: usize) -> bool {
        self.null_atoms.contains(atom)
    }

    pub fn null_atoms(&self) -> AtomSet {
        self.null_atoms
    }

    /// Positive-measure atoms in declared order.
    pub fn live_atoms(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.fibers.len()).filter(|&a| !self.null_atoms.contains(a))
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn layout(&self) -> &[Coord] {
        &self.layout
    }

    /// Global indices of the coordinates of fiber `atom` (empty for null atoms).
    pub fn fiber_coords(&self, atom: usize) -> std::ops::Range<usize> {
        match self.offsets[atom] {
            Some(o) => o..o + self.fibers[atom].ambient_dim,
            None => 0..0,
        }
    }

    pub fn level_mask(&self, level: Level) -> &[usize] {
        &self.level_masks[level.0]
    }

    pub fn in_mask(&self, level: Level, coord: usize) -> bool {
        let c = self.layout[coord];
        c.index < self.fibers[c.atom].dim_or_zero(level)
    }

    pub fn level_summaries(&self) -> Vec<LevelSummary> {
        self.poset()
            .levels()
            .map(|l| LevelSummary {
                level: self.poset().name(l).to_string(),
                dim: self.level_masks[l.0].len(),
                nontrivial: !self.level_masks[l.0].is_empty(),
            })
            .collect()
    }

    /// Cells of coordinates with identical level membership. Locally bounded
    /// operators are exactly the matrices that never couple two cells.
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut cells: Vec<(Vec<bool>, Vec<usize>)> = Vec::new();
        for k in 0..self.dim() {
            let sig: Vec<bool> = self.poset().levels().map(|l| self.in_mask(l, k)).collect();
            match cells.iter_mut().find(|(s, _)| *s == sig) {
                Some((_, v)) => v.push(k),
                None => cells.push((sig, vec![k])),
            }
        }
        cells.into_iter().map(|(_, v)| v).collect()
    }

    /// Cell index for each coordinate.
    pub fn cell_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (ci, cell) in self.cells().iter().enumerate() {
            for &k in cell {
                out[k] = ci;
            }
        }
        out
    }

    /// The branch of the scenario below `top`: levels `a <= top`, atoms of
    /// `X_top`, fibers truncated to those levels. Global coordinates of the
    /// truncated space are the level mask of `top`, in the same order.
    pub fn truncate(&self, top: Level) -> Result<DirectIntegralSpace, IntegralError> {
        let system = self.measure.system().truncate(top);
        let (_, kept) = self.poset().branch(top);
        let ground = self.measure.system().ground(top);
        let atoms: Vec<usize> = ground.iter().collect();
        let names: Vec<String> = atoms.iter().map(|&a| self.atom_name(a).to_string()).collect();
        // Re-index atoms densely.
        let remap = |s: AtomSet| AtomSet::from_atoms(s.iter().map(|a| atoms.iter().position(|&x| x == a).unwrap()));
        let levels: Vec<LevelData> = kept
            .iter()
            .map(|&l| {
                let space = system.space(Level(kept.iter().position(|&k| k == l).unwrap()));
                let blocks: Vec<AtomSet> = space.blocks().iter().map(|&b| remap(b)).collect();
                let g = remap(space.ground());
                let values = space
                    .blocks()
                    .iter()
                    .map(|&b| (remap(b), self.measure.system().level_measure(l, b).unwrap()))
                    .collect();
                LevelData {
                    space: FiniteMeasurableSpace::generated(g, &blocks),
                    table: MeasureTable::SetValues(values),
                }
            })
            .collect();
        let sys = InductiveMeasureSystem::validate(
            system.poset().clone(),
            names,
            system.mode(),
            levels,
        )
        .map_err(|e| IntegralError::InconsistentPoset(e.to_string()))?;
        let candidates: Vec<Option<FiberCandidate>> = atoms
            .iter()
            .map(|&a| {
                Some(FiberCandidate {
                    ambient: None,
                    level_dims: kept.iter().map(|&l| self.fibers[a].dim_at(l)).collect(),
                })
            })
            .collect();
        let fibers = validate_filtration(&candidates, &sys)?;
        DirectIntegralSpace::build(LocallyMeasureSpace::new(sys), fibers)
    }

    /// Global orthogonal projection `P_a` onto `H_a`.
    pub fn projection(&self, level: Level) -> ProjectionMap {
        let n = self.dim();
        let matrix = CMatrix::from_fn(n, n, |i, j| if i == j && self.in_mask(level, i) { ONE } else { ZERO });
        ProjectionMap { level, matrix }
    }

    /// `J_{b,a} : H_a -> H_b` in level coordinates.
    pub fn inclusion(&self, lo: Level, hi: Level) -> Result<IsometryMap, IntegralError> {
        if !self.poset().leq(lo, hi) {
            return Err(IntegralError::NotComparable(
                self.poset().name(lo).into(),
                self.poset().name(hi).into(),
            ));
        }
        let (mlo, mhi) = (self.level_mask(lo), self.level_mask(hi));
        let matrix = CMatrix::from_fn(mhi.len(), mlo.len(), |i, j| if mhi[i] == mlo[j] { ONE } else { ZERO });
        let target_weights = mhi.iter().map(|&k| self.weights[self.layout[k].atom]).collect();
        let target_atoms = mhi.iter().map(|&k| self.layout[k].atom).collect();
        Ok(IsometryMap { source: lo, target: hi, matrix, target_weights, target_atoms })
    }

    /// `V_a` as the coordinate-selection matrix from the global orthonormal
    /// frame onto the classical direct integral over `X_a`.
    pub fn v_alpha_matrix(&self, level: Level) -> CMatrix {
        let mask = self.level_mask(level);
        CMatrix::from_fn(mask.len(), self.dim(), |i, j| if mask[i] == j { ONE } else { ZERO })
    }

    /// Section supported on one coordinate, with unit value there.
    pub fn unit_section(&self, atom: usize, index: usize) -> Section {
        let mut values = self.zero_values();
        values[atom][index] = ONE;
        self.section(values).expect("unit vector has valid shape")
    }

    pub fn zero_values(&self) -> Vec<CVector> {
        self.fibers.iter().map(|f| CVector::zeros(f.ambient_dim)).collect()
    }

    /// Wraps pointwise values into a section, zeroing null atoms and
    /// attaching a minimal witnessing level.
    pub fn section(&self, mut values: Vec<CVector>) -> Result<Section, IntegralError> {
        if values.len() != self.fibers.len() {
            return Err(IntegralError::ShapeMismatch(format!("{} atoms", values.len())));
        }
        for (a, v) in values.iter_mut().enumerate() {
            if v.len() != self.fibers[a].ambient_dim {
                return Err(IntegralError::ShapeMismatch(self.atom_name(a).to_string()));
            }
            if self.null_atoms.contains(a) {
                v.fill(ZERO);
            }
        }
        let mut u = Section { values, level: self.poset().greatest() };
        u.level = self.minimal_level(&u)?;
        Ok(u)
    }

    /// Whether `u ∈ H_a`: support inside `X_a` and `u(p) ∈ H_{a,p}` on
    /// positive-measure atoms.
    pub fn in_level(&self, u: &Section, level: Level) -> bool {
        self.live_atoms().all(|a| {
            let d = self.fibers[a].dim_or_zero(level);
            u.values[a].iter().skip(d).all(|z| *z == ZERO)
        })
    }

    /// A `<=`-minimal level containing `u`; among several minimal levels the
    /// first in declared order wins.
    pub fn minimal_level(&self, u: &Section) -> Result<Level, IntegralError> {
        let admissible: Vec<Level> = self.poset().levels().filter(|&l| self.in_level(u, l)).collect();
        self.poset()
            .minimal_among(&admissible)
            .first()
            .copied()
            .ok_or(IntegralError::NoAdmissibleLevel)
    }

    /// `<u, v> = sum_p mu({p}) <u(p), v(p)>`, linear in `u`, conjugate-linear
    /// in `v`, summed in declared atom order.
    pub fn inner_product(&self, u: &Section, v: &Section) -> Result<Complex64, IntegralError> {
        self.check_shape(u)?;
        self.check_shape(v)?;
        Ok(self.weighted_sum(u, v, |_, _| true))
    }

    /// The same pairing computed inside `H_b`: only atoms of `X_b` and
    /// coordinates below `d_{b,p}` are visited.
    pub fn inner_product_at(&self, level: Level, u: &Section, v: &Section) -> Result<Complex64, IntegralError> {
        self.check_shape(u)?;
        self.check_shape(v)?;
        for s in [u, v] {
            if !self.in_level(s, level) {
                return Err(IntegralError::NotInLevel(self.poset().name(level).into()));
            }
        }
        Ok(self.weighted_sum(u, v, |a, i| i < self.fibers[a].dim_or_zero(level)))
    }

    fn weighted_sum(&self, u: &Section, v: &Section, keep: impl Fn(usize, usize) -> bool) -> Complex64 {
        let mut total = ZERO;
        for a in self.live_atoms() {
            let mut fiber = ZERO;
            for (i, (x, y)) in u.values[a].iter().zip(v.values[a].iter()).enumerate() {
                if keep(a, i) {
                    fiber += x * y.conj();
                }
            }
            total += fiber * self.weights[a];
        }
        total
    }

    pub fn norm(&self, u: &Section) -> f64 {
        self.weighted_sum(u, u, |_, _| true).re.max(0.0).sqrt()
    }

    fn check_shape(&self, u: &Section) -> Result<(), IntegralError> {
        if u.values.len() != self.fibers.len() {
            return Err(IntegralError::ShapeMismatch(format!("{} atoms", u.values.len())));
        }
        for (a, v) in u.values.iter().enumerate() {
            if v.len() != self.fibers[a].ambient_dim {
                return Err(IntegralError::ShapeMismatch(self.atom_name(a).to_string()));
            }
        }
        Ok(())
    }

    /// `V_a u`: the restriction of `u ∈ H_a` to the coordinates of level `a`.
    pub fn v_alpha(&self, level: Level, u: &Section) -> Result<ClassicalVector, IntegralError> {
        self.check_shape(u)?;
        if !self.in_level(u, level) {
            return Err(IntegralError::NotInLevel(self.poset().name(level).into()));
        }
        let mask = self.level_mask(level);
        let coords = mask.iter().map(|&k| {
            let c = self.layout[k];
            u.values[c.atom][c.index]
        });
        let weights = mask.iter().map(|&k| self.weights[self.layout[k].atom]);
        let atoms = mask.iter().map(|&k| self.layout[k].atom);
        Ok(ClassicalVector { level, coords: coords.collect(), weights: weights.collect(), atoms: atoms.collect() })
    }

    /// `V_a^{-1} x = u_x`, with `u_x(p) = x(p)` on `X_a` and zero elsewhere.
    pub fn v_alpha_inverse(&self, level: Level, x: &ClassicalVector) -> Result<Section, IntegralError> {
        let mask = self.level_mask(level);
        if x.coords.len() != mask.len() {
            return Err(IntegralError::WrongLength { expected: mask.len(), got: x.coords.len() });
        }
        let mut values = self.zero_values();
        for (&k, z) in mask.iter().zip(&x.coords) {
            let c = self.layout[k];
            values[c.atom][c.index] = *z;
        }
        self.section(values)
    }

    /// Coordinates of a section in the global orthonormal frame.
    pub fn to_frame(&self, u: &Section) -> CVector {
        CVector::from_iterator(
            self.dim(),
            self.layout.iter().map(|c| u.values[c.atom][c.index] * self.weights[c.atom].sqrt()),
        )
    }

    /// Inverse of [`to_frame`](Self::to_frame).
    pub fn from_frame(&self, y: &CVector) -> Section {
        let mut values = self.zero_values();
        for (k, c) in self.layout.iter().enumerate() {
            values[c.atom][c.index] = y[k] / self.weights[c.atom].sqrt();
        }
        self.section(values).expect("frame vector has the space's shape")
    }
}

/// An element of the direct integral: pointwise values and a witnessing level.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    values: Vec<CVector>,
    level: Level,
}

impl Section {
    pub fn values(&self) -> &[CVector] {
        &self.values
    }

    pub fn value(&self, atom: usize) -> &CVector {
        &self.values[atom]
    }

    /// The witnessing level `a_u`.
    pub fn level(&self) -> Level {
        self.level
    }

    /// Support among the given atoms.
    pub fn support(&self) -> AtomSet {
        AtomSet::from_atoms(
            self.values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.iter().any(|z| *z != ZERO))
                .map(|(a, _)| a),
        )
    }
}

/// An element of the classical direct integral `∫_{X_a} H_{a,p} dmu_a`, one
/// coordinate per entry of the level mask together with its point mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalVector {
    pub level: Level,
    pub coords: Vec<Complex64>,
    pub weights: Vec<f64>,
    /// Atom of each coordinate; coordinates of one atom are contiguous.
    pub atoms: Vec<usize>,
}

impl ClassicalVector {
    /// Summed fiber by fiber, in the same order as the direct-integral pairing.
    pub fn inner(&self, other: &ClassicalVector) -> Complex64 {
        let mut total = ZERO;
        let mut k = 0;
        while k < self.coords.len() {
            let atom = self.atoms[k];
            let mut fiber = ZERO;
            while k < self.coords.len() && self.atoms[k] == atom {
                fiber += self.coords[k] * other.coords[k].conj();
                k += 1;
            }
            total += fiber * self.weights[k - 1];
        }
        total
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }
}

/// `J_{b,a}`: the inclusion of level coordinates of `source` into those of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryMap {
    pub source: Level,
    pub target: Level,
    pub matrix: CMatrix,
    target_weights: Vec<f64>,
    target_atoms: Vec<usize>,
}

impl IsometryMap {
    pub fn apply(&self, x: &ClassicalVector) -> ClassicalVector {
        assert_eq!(x.level, self.source);
        let v = CVector::from_column_slice(&x.coords);
        let y = &self.matrix * v;
        ClassicalVector {
            level: self.target,
            coords: y.iter().copied().collect(),
            weights: self.target_weights.clone(),
            atoms: self.target_atoms.clone(),
        }
    }
}

/// `P_a` on the global layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    pub level: Level,
    pub matrix: CMatrix,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff};
    use crate::measure::WeightMode;

    /// Λ = {a <= b}; X_a = {1}, X_b = {1,2}; µ{1} = 1, µ{2} = 2;
    /// fiber 1: d_a = 1, d_b = 2; fiber 2: d_b = 1.
    pub(crate) fn s1() -> DirectIntegralSpace {
        let poset = DirectedPoset::validate(&["a", "b"], &[("a", "b")]).unwrap();
        let w = |s: &str| ExtendedReal::parse(s, WeightMode::Rational).unwrap();
        let sys = InductiveMeasureSystem::validate(
            poset,
            vec!["1".into(), "2".into()],
            WeightMode::Rational,
            vec![
                LevelData {
                    space: FiniteMeasurableSpace::power_set(AtomSet::from_atoms([0])),
                    table: MeasureTable::AtomWeights(vec![(0, w("1"))]),
                },
                LevelData {
                    space: FiniteMeasurableSpace::power_set(AtomSet::from_atoms([0, 1])),
                    table: MeasureTable::AtomWeights(vec![(0, w("1")), (1, w("2"))]),
                },
            ],
        )
        .unwrap();
        let fibers = validate_filtration(
            &[
                Some(FiberCandidate { ambient: Some(2), level_dims: vec![Some(1), Some(2)] }),
                Some(FiberCandidate { ambient: Some(1), level_dims: vec![None, Some(1)] }),
            ],
            &sys,
        )
        .unwrap();
        DirectIntegralSpace::build(LocallyMeasureSpace::new(sys), fibers).unwrap()
    }

    #[test]
    fn s1_layout() {
        let s = s1();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.level_mask(Level(0)), &[0]);
        assert_eq!(s.level_mask(Level(1)), &[0, 1, 2]);
        assert_eq!(s.cells(), vec![vec![0], vec![1, 2]]);
        assert!(s.level_summaries().iter().all(|l| l.nontrivial));
    }

    #[test]
    fn s1_inner_products() {
        let s = s1();
        let u = s.unit_section(0, 0);
        let w = s.unit_section(1, 0);
        assert_eq!(s.inner_product(&u, &u).unwrap(), c(1.0, 0.0));
        assert_eq!(s.inner_product(&w, &w).unwrap(), c(2.0, 0.0));
        assert_eq!(s.inner_product(&u, &w).unwrap(), ZERO);
        let zero = s.section(s.zero_values()).unwrap();
        assert_eq!(s.inner_product(&zero, &w).unwrap(), ZERO);
        assert_eq!(s.inner_product_at(Level(0), &u, &u).unwrap(), c(1.0, 0.0));
        assert!(matches!(s.inner_product_at(Level(0), &w, &w), Err(IntegralError::NotInLevel(_))));
    }

    #[test]
    fn s1_minimal_levels() {
        let s = s1();
        assert_eq!(s.unit_section(0, 0).level(), Level(0));
        assert_eq!(s.unit_section(0, 1).level(), Level(1));
        assert_eq!(s.unit_section(1, 0).level(), Level(1));
        assert_eq!(s.section(s.zero_values()).unwrap().level(), Level(0));
    }

    #[test]
    fn s1_v_alpha() {
        let s = s1();
        let u = s.unit_section(0, 0);
        let x = s.v_alpha(Level(0), &u).unwrap();
        assert_eq!(x.coords, vec![ONE]);
        assert_eq!(s.v_alpha_inverse(Level(0), &x).unwrap(), u);
        assert!(matches!(s.v_alpha(Level(0), &s.unit_section(0, 1)), Err(IntegralError::NotInLevel(_))));
        assert!(matches!(
            s.v_alpha_inverse(Level(0), &ClassicalVector { level: Level(0), coords: vec![], weights: vec![], atoms: vec![] }),
            Err(IntegralError::WrongLength { .. })
        ));
    }

    #[test]
    fn s1_inclusion_maps() {
        let s = s1();
        let j = s.inclusion(Level(0), Level(1)).unwrap();
        // the single H_a coordinate lands on global coordinate (1,0)
        assert_eq!(j.matrix.column(0).iter().copied().collect::<Vec<_>>(), vec![ONE, ZERO, ZERO]);
        let jj = j.matrix.adjoint() * &j.matrix;
        assert_eq!(jj, CMatrix::identity(1, 1));
        let pa = s.projection(Level(0)).matrix;
        assert_eq!(&j.matrix * j.matrix.adjoint(), pa);
        let id = s.inclusion(Level(1), Level(1)).unwrap();
        assert_eq!(id.matrix, CMatrix::identity(3, 3));
        assert!(s.inclusion(Level(1), Level(0)).is_err());
        let x = s.v_alpha(Level(0), &s.unit_section(0, 0)).unwrap();
        let y = j.apply(&x);
        assert_eq!(x.norm(), y.norm());
    }

    #[test]
    fn projections_nest() {
        let s = s1();
        let (pa, pb) = (s.projection(Level(0)).matrix, s.projection(Level(1)).matrix);
        assert!(max_abs_diff(&(&pa * &pa), &pa) <= 1e-14);
        assert_eq!(&pa * &pb, pa);
        assert_eq!(&pb * &pa, pa);
    }

    #[test]
    fn frame_round_trip() {
        let s = s1();
        let mut values = s.zero_values();
        values[0][0] = c(1.0, 2.0);
        values[0][1] = c(-0.5, 0.0);
        values[1][0] = c(0.0, 3.0);
        let u = s.section(values).unwrap();
        let y = s.to_frame(&u);
        assert!((y.norm() - s.norm(&u)).abs() < 1e-12);
        let back = s.from_frame(&y);
        for a in 0..2 {
            assert!((back.value(a) - u.value(a)).norm() < 1e-12);
        }
    }

    #[test]
    fn truncation_to_bottom_level() {
        let s = s1();
        let t = s.truncate(Level(0)).unwrap();
        assert_eq!(t.dim(), 1);
        assert_eq!(t.poset().len(), 1);
        assert_eq!(t.weight(0), 1.0);
    }

    #[test]
    fn single_classical_fiber() {
        let poset = DirectedPoset::validate(&["only"], &[] as &[(&str, &str)]).unwrap();
        let sys = InductiveMeasureSystem::validate(
            poset,
            vec!["p".into()],
            WeightMode::Float,
            vec![LevelData {
                space: FiniteMeasurableSpace::power_set(AtomSet::singleton(0)),
                table: MeasureTable::AtomWeights(vec![(0, ExtendedReal::Float(1.0))]),
            }],
        )
        .unwrap();
        let fibers = validate_filtration(
            &[Some(FiberCandidate { ambient: None, level_dims: vec![Some(4)] })],
            &sys,
        )
        .unwrap();
        let s = DirectIntegralSpace::build(LocallyMeasureSpace::new(sys), fibers).unwrap();
        assert_eq!(s.dim(), 4);
        assert_eq!(s.cells().len(), 1);
    }

    #[test]
    fn null_atoms_are_quotiented() {
        let poset = DirectedPoset::validate(&["a"], &[] as &[(&str, &str)]).unwrap();
        let w = |s: &str| ExtendedReal::parse(s, WeightMode::Rational).unwrap();
        let sys = InductiveMeasureSystem::validate(
            poset,
            vec!["p".into(), "q".into()],
            WeightMode::Rational,
            vec![LevelData {
                space: FiniteMeasurableSpace::power_set(AtomSet::from_atoms([0, 1])),
                table: MeasureTable::AtomWeights(vec![(0, w("1")), (1, w("0"))]),
            }],
        )
        .unwrap();
        let fibers = validate_filtration(
            &[
                Some(FiberCandidate { ambient: None, level_dims: vec![Some(1)] }),
                Some(FiberCandidate { ambient: None, level_dims: vec![Some(2)] }),
            ],
            &sys,
        )
        .unwrap();
        let s = DirectIntegralSpace::build(LocallyMeasureSpace::new(sys), fibers).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(s.is_null_atom(1));
        let mut values = s.zero_values();
        values[1][0] = ONE;
        let u = s.section(values).unwrap();
        assert!(u.value(1).iter().all(|z| *z == ZERO));
        assert!(s.measure().is_null(AtomSet::singleton(1)).unwrap());
    }
}
