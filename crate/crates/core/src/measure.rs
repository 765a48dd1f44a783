//! Finite measurable spaces, strictly inductive systems of them, projective
//! systems of measures and the limit measure of a locally measure space.
//!
//! Subsets of the atom universe are bitmasks ([`AtomSet`]), so a system may
//! mention at most 64 atoms. A finite sigma-algebra is stored through its
//! atoms (the minimal nonempty members), which partition the ground set; a
//! set is measurable iff it is a union of those atoms.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Add;
use std::sync::RwLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::poset::{DirectedPoset, Level};

pub const MAX_ATOMS: usize = 64;

/// Relative tolerance used when comparing floating measure values.
pub const FLOAT_MEASURE_TOL: f64 = 1e-12;

/// A subset of the atom universe, one bit per atom in declared order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AtomSet(pub u64);

impl AtomSet {
    pub const EMPTY: AtomSet = AtomSet(0);

    pub fn singleton(atom: usize) -> Self {
        AtomSet(1 << atom)
    }

    pub fn from_atoms<I: IntoIterator<Item = usize>>(atoms: I) -> Self {
        AtomSet(atoms.into_iter().fold(0, |acc, a| acc | (1 << a)))
    }

    pub fn contains(self, atom: usize) -> bool {
        self.0 >> atom & 1 == 1
    }

    pub fn is_subset(self, other: AtomSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: AtomSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn union(self, other: AtomSet) -> AtomSet {
        AtomSet(self.0 | other.0)
    }

    pub fn intersect(self, other: AtomSet) -> AtomSet {
        AtomSet(self.0 & other.0)
    }

    pub fn minus(self, other: AtomSet) -> AtomSet {
        AtomSet(self.0 & !other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_ATOMS).filter(move |&a| self.contains(a))
    }

    /// All subsets of `self`.
    pub fn subsets(self) -> impl Iterator<Item = AtomSet> {
        // Enumerates submasks in increasing order.
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full { None } else { Some(((cur | !full).wrapping_add(1)) & full) };
            Some(AtomSet(cur))
        })
    }
}

impl fmt::Display for AtomSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.iter().map(|a| a.to_string()).collect();
        write!(f, "{{{}}}", items.join(","))
    }
}

/// Numeric mode of a measure system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Rational,
    Float,
}

/// A value in `[0, inf]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtendedReal {
    Exact(BigRational),
    Float(f64),
    Infinity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeightParseError {
    #[error("`{0}` is not a decimal, fraction or `inf`")]
    Malformed(String),
    #[error("`{0}` is negative")]
    Negative(String),
}

impl ExtendedReal {
    pub fn zero(mode: WeightMode) -> Self {
        match mode {
            WeightMode::Rational => ExtendedReal::Exact(BigRational::zero()),
            WeightMode::Float => ExtendedReal::Float(0.0),
        }
    }

    /// Parses `"inf"`, `"p/q"` or a plain decimal such as `"2.5"`.
    pub fn parse(text: &str, mode: WeightMode) -> Result<Self, WeightParseError> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(ExtendedReal::Infinity);
        }
        let malformed = || WeightParseError::Malformed(text.to_string());
        let value = match mode {
            WeightMode::Rational => ExtendedReal::Exact(parse_rational(t).ok_or_else(malformed)?),
            WeightMode::Float => {
                let v = match parse_rational(t) {
                    Some(r) if t.contains('/') => r.to_f64().ok_or_else(malformed)?,
                    _ => t.parse::<f64>().map_err(|_| malformed())?,
                };
                if !v.is_finite() {
                    return Err(malformed());
                }
                ExtendedReal::Float(v)
            }
        };
        if value.is_negative() {
            return Err(WeightParseError::Negative(text.to_string()));
        }
        Ok(value)
    }

    fn is_negative(&self) -> bool {
        match self {
            ExtendedReal::Exact(r) => r.is_negative(),
            ExtendedReal::Float(f) => *f < 0.0,
            ExtendedReal::Infinity => false,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ExtendedReal::Exact(r) => r.is_zero(),
            ExtendedReal::Float(f) => *f == 0.0,
            ExtendedReal::Infinity => false,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtendedReal::Infinity)
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExtendedReal::Exact(r) => r.to_f64().unwrap_or(f64::INFINITY),
            ExtendedReal::Float(f) => *f,
            ExtendedReal::Infinity => f64::INFINITY,
        }
    }

    /// Equality: exact for rationals and infinity, relative `tol` for floats.
    pub fn approx_eq(&self, other: &ExtendedReal, tol: f64) -> bool {
        match (self, other) {
            (ExtendedReal::Infinity, ExtendedReal::Infinity) => true,
            (ExtendedReal::Infinity, _) | (_, ExtendedReal::Infinity) => false,
            (ExtendedReal::Exact(a), ExtendedReal::Exact(b)) => a == b,
            _ => {
                let (a, b) = (self.to_f64(), other.to_f64());
                (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
            }
        }
    }

    /// `self <= other`, with the same tolerance semantics as [`approx_eq`](Self::approx_eq).
    pub fn approx_le(&self, other: &ExtendedReal, tol: f64) -> bool {
        match (self, other) {
            (_, ExtendedReal::Infinity) => true,
            (ExtendedReal::Infinity, _) => false,
            (ExtendedReal::Exact(a), ExtendedReal::Exact(b)) => a <= b,
            _ => {
                let (a, b) = (self.to_f64(), other.to_f64());
                a <= b + tol * a.abs().max(b.abs()).max(1.0)
            }
        }
    }

    /// Canonical text form, as accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        match self {
            ExtendedReal::Exact(r) if r.is_integer() => r.numer().to_string(),
            ExtendedReal::Exact(r) => format!("{}/{}", r.numer(), r.denom()),
            ExtendedReal::Float(f) => format!("{f:?}"),
            ExtendedReal::Infinity => "inf".to_string(),
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl Add for &ExtendedReal {
    type Output = ExtendedReal;

    fn add(self, rhs: &ExtendedReal) -> ExtendedReal {
        match (self, rhs) {
            (ExtendedReal::Infinity, _) | (_, ExtendedReal::Infinity) => ExtendedReal::Infinity,
            (ExtendedReal::Exact(a), ExtendedReal::Exact(b)) => ExtendedReal::Exact(a + b),
            _ => ExtendedReal::Float(self.to_f64() + rhs.to_f64()),
        }
    }
}

fn parse_rational(t: &str) -> Option<BigRational> {
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    Some(BigRational::new(numer * sign, denom))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("more than {MAX_ATOMS} atoms")]
    TooManyAtoms,
    #[error("level `{level}`: family is not a sigma-algebra on the ground set ({reason})")]
    NotSigmaAlgebra { level: String, reason: String },
    #[error("level `{level}`: generator {set} is not contained in the ground set")]
    GeneratorOutsideGround { level: String, set: String },
    #[error("levels `{lo}` <= `{hi}`: X_lo is not a subset of X_hi (atom {atom})")]
    InclusionViolation { lo: String, hi: String, atom: String },
    #[error("levels `{lo}` <= `{hi}`: Sigma_lo is not the trace of Sigma_hi (witness {set})")]
    TraceMismatch { lo: String, hi: String, set: String },
    #[error("levels `{lo}` <= `{hi}`: mu_lo({set}) = {lo_value} but mu_hi({set}) = {hi_value}")]
    ProjectivityViolation { lo: String, hi: String, set: String, lo_value: String, hi_value: String },
    #[error("level `{level}`: measure is not additive on {set}")]
    NotAdditive { level: String, set: String },
    #[error("level `{level}`: no weight determines sigma-atom {set}")]
    MissingWeight { level: String, set: String },
    #[error("level `{level}`: weighted set {set} is not measurable")]
    WeightOnNonMeasurable { level: String, set: String },
    #[error("level `{level}`: weight for atom outside the ground set ({atom})")]
    WeightOutsideGround { level: String, atom: String },
    #[error("level `{level}`: µ(∅) is {value}, not 0")]
    NonzeroEmpty { level: String, value: String },
    #[error("no measurable-space data for level `{0}`")]
    MissingLevel(String),
    #[error("set {0} is not measurable in the limit sigma-algebra")]
    NotMeasurable(String),
}

/// A finite measurable space `(X_a, Sigma_a)`, held as the partition of
/// `X_a` into sigma-atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMeasurableSpace {
    ground: AtomSet,
    blocks: Vec<AtomSet>,
}

impl FiniteMeasurableSpace {
    pub fn power_set(ground: AtomSet) -> Self {
        Self { ground, blocks: ground.iter().map(AtomSet::singleton).collect() }
    }

    /// The sigma-algebra generated by `generators` (each a subset of `ground`).
    pub fn generated(ground: AtomSet, generators: &[AtomSet]) -> Self {
        // Atoms of the generated algebra: classes of equal membership signature.
        let mut classes: Vec<(Vec<bool>, AtomSet)> = Vec::new();
        for a in ground.iter() {
            let sig: Vec<bool> = generators.iter().map(|g| g.contains(a)).collect();
            match classes.iter_mut().find(|(s, _)| *s == sig) {
                Some((_, set)) => *set = set.union(AtomSet::singleton(a)),
                None => classes.push((sig, AtomSet::singleton(a))),
            }
        }
        Self { ground, blocks: classes.into_iter().map(|(_, s)| s).collect() }
    }

    /// Validates an explicitly listed family of sets.
    pub fn from_family(ground: AtomSet, family: &[AtomSet]) -> Result<Self, String> {
        let fam: BTreeSet<AtomSet> = family.iter().copied().collect();
        if let Some(bad) = fam.iter().find(|s| !s.is_subset(ground)) {
            return Err(format!("{bad} is not inside the ground set"));
        }
        if !fam.contains(&AtomSet::EMPTY) {
            return Err("missing the empty set".into());
        }
        if !fam.contains(&ground) {
            return Err("missing the ground set".into());
        }
        for &s in &fam {
            if !fam.contains(&ground.minus(s)) {
                return Err(format!("not closed under complement at {s}"));
            }
            for &t in &fam {
                if !fam.contains(&s.union(t)) {
                    return Err(format!("not closed under union at {s} ∪ {t}"));
                }
            }
        }
        let blocks = fam
            .iter()
            .copied()
            .filter(|&s| !s.is_empty() && !fam.iter().any(|&t| !t.is_empty() && t != s && t.is_subset(s)))
            .collect();
        Ok(Self { ground, blocks })
    }

    pub fn ground(&self) -> AtomSet {
        self.ground
    }

    /// Sigma-atoms, in order of their smallest atom.
    pub fn blocks(&self) -> &[AtomSet] {
        &self.blocks
    }

    pub fn is_power_set(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    pub fn contains(&self, set: AtomSet) -> bool {
        set.is_subset(self.ground)
            && self.blocks.iter().all(|&b| b.is_subset(set) || b.is_disjoint(set))
    }

    /// Enumerates every member of the sigma-algebra.
    pub fn sets(&self) -> Vec<AtomSet> {
        let k = self.blocks.len();
        assert!(k < 32, "sigma-algebra with {k} atoms is too large to enumerate");
        (0u64..(1 << k))
            .map(|mask| {
                self.blocks
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .fold(AtomSet::EMPTY, |acc, (_, &b)| acc.union(b))
            })
            .collect()
    }

    fn trace(&self, sub: AtomSet) -> FiniteMeasurableSpace {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.intersect(sub))
            .filter(|b| !b.is_empty())
            .collect();
        FiniteMeasurableSpace { ground: sub, blocks }
    }

    fn same_algebra(&self, other: &FiniteMeasurableSpace) -> bool {
        let a: BTreeSet<_> = self.blocks.iter().collect();
        let b: BTreeSet<_> = other.blocks.iter().collect();
        self.ground == other.ground && a == b
    }
}

/// How a level's measure is declared.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureTable {
    /// One weight per atom of the ground set (power-set levels).
    AtomWeights(Vec<(usize, ExtendedReal)>),
    /// Values on measurable sets; every sigma-atom must be listed and every
    /// other listed set is checked for additivity.
    SetValues(Vec<(AtomSet, ExtendedReal)>),
}

/// Raw level data handed to [`InductiveMeasureSystem::validate`].
#[derive(Debug, Clone)]
pub struct LevelData {
    pub space: FiniteMeasurableSpace,
    pub table: MeasureTable,
}

/// `mu_a`, as values on the sigma-atoms of its level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMeasure {
    block_values: Vec<ExtendedReal>,
}

/// A validated strictly inductive system of finite measurable spaces carrying
/// a projective system of measures.
#[derive(Debug, Clone)]
pub struct InductiveMeasureSystem {
    poset: DirectedPoset,
    atom_names: Vec<String>,
    mode: WeightMode,
    spaces: Vec<FiniteMeasurableSpace>,
    measures: Vec<LevelMeasure>,
}

impl InductiveMeasureSystem {
    /// Certifies inclusions, traces, additivity and projectivity. `levels`
    /// is indexed like `poset.levels()`.
    pub fn validate(
        poset: DirectedPoset,
        atom_names: Vec<String>,
        mode: WeightMode,
        levels: Vec<LevelData>,
    ) -> Result<Self, MeasureError> {
        if atom_names.len() > MAX_ATOMS {
            return Err(MeasureError::TooManyAtoms);
        }
        if levels.len() != poset.len() {
            let missing = poset.names().get(levels.len()).cloned().unwrap_or_default();
            return Err(MeasureError::MissingLevel(missing));
        }
        let lname = |l: Level| poset.name(l).to_string();
        let fmt_set = |s: AtomSet| {
            let items: Vec<&str> = s.iter().map(|a| atom_names[a].as_str()).collect();
            format!("{{{}}}", items.join(","))
        };

        let mut spaces = Vec::with_capacity(levels.len());
        let mut measures = Vec::with_capacity(levels.len());
        for (lvl, data) in poset.levels().zip(levels) {
            let measure = level_measure(&data, mode).map_err(|e| match e {
                TableError::NotAdditive(s) => {
                    MeasureError::NotAdditive { level: lname(lvl), set: fmt_set(s) }
                }
                TableError::Missing(s) => {
                    MeasureError::MissingWeight { level: lname(lvl), set: fmt_set(s) }
                }
                TableError::NonMeasurable(s) => {
                    MeasureError::WeightOnNonMeasurable { level: lname(lvl), set: fmt_set(s) }
                }
                TableError::Outside(a) => {
                    MeasureError::WeightOutsideGround { level: lname(lvl), atom: atom_names[a].clone() }
                }
                TableError::NonzeroEmpty(v) => {
                    MeasureError::NonzeroEmpty { level: lname(lvl), value: v.to_text() }
                }
            })?;
            spaces.push(data.space);
            measures.push(measure);
        }

        for (lo, hi) in poset.comparable_pairs() {
            if lo == hi {
                continue;
            }
            let (slo, shi) = (&spaces[lo.0], &spaces[hi.0]);
            if let Some(atom) = slo.ground.minus(shi.ground).iter().next() {
                return Err(MeasureError::InclusionViolation {
                    lo: lname(lo),
                    hi: lname(hi),
                    atom: atom_names[atom].clone(),
                });
            }
            let trace = shi.trace(slo.ground);
            if !trace.same_algebra(slo) {
                let witness = slo
                    .blocks
                    .iter()
                    .chain(trace.blocks.iter())
                    .copied()
                    .find(|&b| !slo.contains(b) || !trace.contains(b))
                    .unwrap_or(slo.ground);
                return Err(MeasureError::TraceMismatch { lo: lname(lo), hi: lname(hi), set: fmt_set(witness) });
            }
            // Sigma_lo must sit inside Sigma_hi, i.e. X_lo is hi-measurable.
            if !shi.contains(slo.ground) {
                return Err(MeasureError::TraceMismatch {
                    lo: lname(lo),
                    hi: lname(hi),
                    set: fmt_set(slo.ground),
                });
            }
            // Both measures are additive, so agreement on lo-atoms is enough.
            for (b, lo_value) in slo.blocks.iter().zip(&measures[lo.0].block_values) {
                let hi_value = eval(shi, &measures[hi.0], *b);
                if !lo_value.approx_eq(&hi_value, FLOAT_MEASURE_TOL) {
                    return Err(MeasureError::ProjectivityViolation {
                        lo: lname(lo),
                        hi: lname(hi),
                        set: fmt_set(*b),
                        lo_value: lo_value.to_text(),
                        hi_value: hi_value.to_text(),
                    });
                }
            }
        }
        Ok(Self { poset, atom_names, mode, spaces, measures })
    }

    pub fn poset(&self) -> &DirectedPoset {
        &self.poset
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn atom_names(&self) -> &[String] {
        &self.atom_names
    }

    pub fn atom_index(&self, name: &str) -> Option<usize> {
        self.atom_names.iter().position(|n| n == name)
    }

    pub fn space(&self, level: Level) -> &FiniteMeasurableSpace {
        &self.spaces[level.0]
    }

    pub fn ground(&self, level: Level) -> AtomSet {
        self.spaces[level.0].ground
    }

    /// `mu_a(set)` for `set` in `Sigma_a`.
    pub fn level_measure(&self, level: Level, set: AtomSet) -> Option<ExtendedReal> {
        let space = &self.spaces[level.0];
        space.contains(set).then(|| eval(space, &self.measures[level.0], set))
    }

    pub fn total_set(&self) -> AtomSet {
        self.spaces.iter().fold(AtomSet::EMPTY, |acc, s| acc.union(s.ground))
    }

    pub fn format_set(&self, set: AtomSet) -> String {
        let items: Vec<&str> = set.iter().map(|a| self.atom_names[a].as_str()).collect();
        format!("{{{}}}", items.join(","))
    }

    /// Restriction of the system to the branch below `top`.
    pub fn truncate(&self, top: Level) -> InductiveMeasureSystem {
        let (poset, kept) = self.poset.branch(top);
        InductiveMeasureSystem {
            poset,
            atom_names: self.atom_names.clone(),
            mode: self.mode,
            spaces: kept.iter().map(|l| self.spaces[l.0].clone()).collect(),
            measures: kept.iter().map(|l| self.measures[l.0].clone()).collect(),
        }
    }
}

enum TableError {
    NotAdditive(AtomSet),
    Missing(AtomSet),
    NonMeasurable(AtomSet),
    Outside(usize),
    NonzeroEmpty(ExtendedReal),
}

fn level_measure(data: &LevelData, mode: WeightMode) -> Result<LevelMeasure, TableError> {
    let space = &data.space;
    let entries: Vec<(AtomSet, ExtendedReal)> = match &data.table {
        MeasureTable::AtomWeights(ws) => {
            let mut out = Vec::with_capacity(ws.len());
            for (atom, w) in ws {
                if !space.ground.contains(*atom) {
                    return Err(TableError::Outside(*atom));
                }
                out.push((AtomSet::singleton(*atom), w.clone()));
            }
            out
        }
        MeasureTable::SetValues(vs) => vs.clone(),
    };
    for (set, value) in &entries {
        if !space.contains(*set) {
            return Err(TableError::NonMeasurable(*set));
        }
        if set.is_empty() && !value.is_zero() {
            return Err(TableError::NonzeroEmpty(value.clone()));
        }
    }
    let mut block_values = Vec::with_capacity(space.blocks.len());
    for &b in &space.blocks {
        let value = entries
            .iter()
            .find(|(s, _)| *s == b)
            .map(|(_, v)| v.clone())
            .ok_or(TableError::Missing(b))?;
        block_values.push(value);
    }
    let measure = LevelMeasure { block_values };
    for (set, value) in &entries {
        let summed = eval(space, &measure, *set);
        if !summed.approx_eq(value, FLOAT_MEASURE_TOL) {
            return Err(TableError::NotAdditive(*set));
        }
    }
    let _ = mode;
    Ok(measure)
}

fn eval(space: &FiniteMeasurableSpace, measure: &LevelMeasure, set: AtomSet) -> ExtendedReal {
    let mut total: Option<ExtendedReal> = None;
    for (b, v) in space.blocks.iter().zip(&measure.block_values) {
        if b.is_subset(set) {
            total = Some(match total {
                Some(t) => &t + v,
                None => v.clone(),
            });
        }
    }
    total.unwrap_or_else(|| match measure.block_values.first() {
        Some(ExtendedReal::Float(_)) => ExtendedReal::Float(0.0),
        _ => ExtendedReal::Exact(BigRational::zero()),
    })
}

/// Output of [`LocallyMeasureSpace::limit_sigma`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitSigma {
    /// `Sigma = {E ⊆ X : E ∩ X_a ∈ Sigma_a for all a}`.
    pub sigma: BTreeSet<AtomSet>,
    /// `Sigma_0 = ⋃ Sigma_a`.
    pub sigma0: BTreeSet<AtomSet>,
    pub sigma0_equals_sigma: bool,
}

/// The limit `(X, Sigma, mu)` of a validated system.
#[derive(Debug)]
pub struct LocallyMeasureSpace {
    system: InductiveMeasureSystem,
    total: AtomSet,
    limit_blocks: Vec<AtomSet>,
    memo: RwLock<HashMap<AtomSet, ExtendedReal>>,
}

impl Clone for LocallyMeasureSpace {
    fn clone(&self) -> Self {
        LocallyMeasureSpace::new(self.system.clone())
    }
}

impl LocallyMeasureSpace {
    pub fn new(system: InductiveMeasureSystem) -> Self {
        let total = system.total_set();
        // Two atoms are glued when some level puts them in one sigma-atom;
        // Sigma consists of the unions of the resulting classes.
        let mut class: Vec<usize> = (0..MAX_ATOMS).collect();
        fn find(class: &mut [usize], a: usize) -> usize {
            let mut r = a;
            while class[r] != r {
                r = class[r];
            }
            class[a] = r;
            r
        }
        for space in &system.spaces {
            for b in &space.blocks {
                let mut it = b.iter();
                if let Some(first) = it.next() {
                    for other in it {
                        let (r1, r2) = (find(&mut class, first), find(&mut class, other));
                        class[r2.max(r1)] = r1.min(r2);
                    }
                }
            }
        }
        let mut by_root: Vec<(usize, AtomSet)> = Vec::new();
        for a in total.iter() {
            let root = find(&mut class, a);
            match by_root.iter_mut().find(|(r, _)| *r == root) {
                Some((_, b)) => *b = b.union(AtomSet::singleton(a)),
                None => by_root.push((root, AtomSet::singleton(a))),
            }
        }
        let limit_blocks = by_root.into_iter().map(|(_, b)| b).collect();
        Self { system, total, limit_blocks, memo: RwLock::new(HashMap::new()) }
    }

    pub fn system(&self) -> &InductiveMeasureSystem {
        &self.system
    }

    pub fn poset(&self) -> &DirectedPoset {
        self.system.poset()
    }

    pub fn total_set(&self) -> AtomSet {
        self.total
    }

    /// Atoms of the limit sigma-algebra.
    pub fn limit_blocks(&self) -> &[AtomSet] {
        &self.limit_blocks
    }

    pub fn is_measurable(&self, set: AtomSet) -> bool {
        set.is_subset(self.total)
            && self.limit_blocks.iter().all(|&b| b.is_subset(set) || b.is_disjoint(set))
    }

    /// Enumerates `Sigma` and `Sigma_0`.
    pub fn limit_sigma(&self) -> LimitSigma {
        let sigma: BTreeSet<AtomSet> = FiniteMeasurableSpace {
            ground: self.total,
            blocks: self.limit_blocks.clone(),
        }
        .sets()
        .into_iter()
        .collect();
        let sigma0: BTreeSet<AtomSet> =
            self.system.spaces.iter().flat_map(|s| s.sets()).collect();
        let sigma0_equals_sigma = sigma0 == sigma;
        LimitSigma { sigma, sigma0, sigma0_equals_sigma }
    }

    /// The net `a ↦ mu_a(E ∩ X_a)`, indexed like the poset.
    pub fn measure_net(&self, set: AtomSet) -> Result<Vec<ExtendedReal>, MeasureError> {
        if !self.is_measurable(set) {
            return Err(MeasureError::NotMeasurable(self.system.format_set(set)));
        }
        Ok(self
            .poset()
            .levels()
            .map(|l| {
                let trace = set.intersect(self.system.ground(l));
                self.system
                    .level_measure(l, trace)
                    .expect("trace of a limit-measurable set is level-measurable")
            })
            .collect())
    }

    /// `mu(E) = lim_a mu_a(E ∩ X_a)`. The net is monotone and the poset has a
    /// greatest element, so the limit is the value there.
    pub fn limit_measure(&self, set: AtomSet) -> Result<ExtendedReal, MeasureError> {
        if let Some(v) = self.memo.read().expect("memo lock").get(&set) {
            return Ok(v.clone());
        }
        let net = self.measure_net(set)?;
        let value = net[self.poset().greatest().0].clone();
        self.memo.write().expect("memo lock").insert(set, value.clone());
        Ok(value)
    }

    pub fn is_null(&self, set: AtomSet) -> Result<bool, MeasureError> {
        Ok(self.limit_measure(set)?.is_zero())
    }

    /// `mu({p})` when the singleton is measurable.
    pub fn point_mass(&self, atom: usize) -> Option<ExtendedReal> {
        self.limit_measure(AtomSet::singleton(atom)).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> ExtendedReal {
        ExtendedReal::parse(s, WeightMode::Rational).unwrap()
    }

    /// X_a = {1}, X_b = {1,2}; µ{1} = 1, µ{2} = 2 (atoms 0 and 1).
    fn two_level(mu_b1: &str) -> Result<InductiveMeasureSystem, MeasureError> {
        let poset = DirectedPoset::validate(&["a", "b"], &[("a", "b")]).unwrap();
        let xa = AtomSet::from_atoms([0]);
        let xb = AtomSet::from_atoms([0, 1]);
        InductiveMeasureSystem::validate(
            poset,
            vec!["1".into(), "2".into()],
            WeightMode::Rational,
            vec![
                LevelData {
                    space: FiniteMeasurableSpace::power_set(xa),
                    table: MeasureTable::AtomWeights(vec![(0, r("1"))]),
                },
                LevelData {
                    space: FiniteMeasurableSpace::power_set(xb),
                    table: MeasureTable::AtomWeights(vec![(0, r(mu_b1)), (1, r("2"))]),
                },
            ],
        )
    }

    #[test]
    fn parse_weights() {
        assert_eq!(r("0.25").to_text(), "1/4");
        assert_eq!(r("3").to_text(), "3");
        assert_eq!(r("2/6").to_text(), "1/3");
        assert!(r("inf").is_infinite());
        assert!(matches!(ExtendedReal::parse("-1", WeightMode::Rational), Err(WeightParseError::Negative(_))));
        assert!(matches!(ExtendedReal::parse("x", WeightMode::Float), Err(WeightParseError::Malformed(_))));
        assert_eq!(ExtendedReal::parse("1/4", WeightMode::Float).unwrap(), ExtendedReal::Float(0.25));
    }

    #[test]
    fn submask_enumeration() {
        let s = AtomSet::from_atoms([1, 3, 4]);
        let subs: Vec<_> = s.subsets().collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.iter().all(|x| x.is_subset(s)));
        assert_eq!(AtomSet::EMPTY.subsets().count(), 1);
    }

    #[test]
    fn two_level_system_is_valid_and_measures() {
        let sys = two_level("1").unwrap();
        // exhaustive: every level-a set has the same mass at level b
        let a = sys.poset().level("a").unwrap();
        let b = sys.poset().level("b").unwrap();
        for e in sys.ground(a).subsets() {
            assert_eq!(sys.level_measure(a, e), sys.level_measure(b, e));
        }
        let lms = LocallyMeasureSpace::new(sys);
        assert_eq!(lms.limit_measure(AtomSet::EMPTY).unwrap(), r("0"));
        assert_eq!(lms.limit_measure(AtomSet::from_atoms([0, 1])).unwrap(), r("3"));
        assert!(lms.is_null(AtomSet::EMPTY).unwrap());
        assert!(!lms.is_null(AtomSet::singleton(1)).unwrap());
    }

    #[test]
    fn projectivity_violation_witness() {
        let err = two_level("5").unwrap_err();
        match err {
            MeasureError::ProjectivityViolation { lo, hi, set, .. } => {
                assert_eq!((lo.as_str(), hi.as_str(), set.as_str()), ("a", "b", "{1}"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inclusion_and_trace_violations() {
        let poset = DirectedPoset::validate(&["a", "b"], &[("a", "b")]).unwrap();
        let err = InductiveMeasureSystem::validate(
            poset.clone(),
            vec!["1".into(), "2".into()],
            WeightMode::Rational,
            vec![
                LevelData {
                    space: FiniteMeasurableSpace::power_set(AtomSet::from_atoms([1])),
                    table: MeasureTable::AtomWeights(vec![(1, r("1"))]),
                },
                LevelData {
                    space: FiniteMeasurableSpace::power_set(AtomSet::from_atoms([0])),
                    table: MeasureTable::AtomWeights(vec![(0, r("1"))]),
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, MeasureError::InclusionViolation { .. }));

        // level a is a power set on {0,1} but level b lumps {0,1} together
        let xb = AtomSet::from_atoms([0, 1, 2]);
        let err = InductiveMeasureSystem::validate(
            poset,
            vec!["1".into(), "2".into(), "3".into()],
            WeightMode::Rational,
            vec![
                LevelData {
                    space: FiniteMeasurableSpace::power_set(AtomSet::from_atoms([0, 1])),
                    table: MeasureTable::AtomWeights(vec![(0, r("1")), (1, r("1"))]),
                },
                LevelData {
                    space: FiniteMeasurableSpace::generated(xb, &[AtomSet::from_atoms([0, 1])]),
                    table: MeasureTable::SetValues(vec![
                        (AtomSet::from_atoms([0, 1]), r("2")),
                        (AtomSet::from_atoms([2]), r("1")),
                    ]),
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, MeasureError::TraceMismatch { .. }));
    }

    #[test]
    fn not_additive_and_missing() {
        let poset = DirectedPoset::validate(&["a"], &[] as &[(&str, &str)]).unwrap();
        let x = AtomSet::from_atoms([0, 1]);
        let mk = |values: Vec<(AtomSet, ExtendedReal)>| {
            InductiveMeasureSystem::validate(
                poset.clone(),
                vec!["1".into(), "2".into()],
                WeightMode::Rational,
                vec![LevelData {
                    space: FiniteMeasurableSpace::power_set(x),
                    table: MeasureTable::SetValues(values),
                }],
            )
        };
        let err = mk(vec![
            (AtomSet::singleton(0), r("1")),
            (AtomSet::singleton(1), r("1")),
            (x, r("3")),
        ])
        .unwrap_err();
        assert!(matches!(err, MeasureError::NotAdditive { .. }));
        let err = mk(vec![(AtomSet::singleton(0), r("1"))]).unwrap_err();
        assert!(matches!(err, MeasureError::MissingWeight { .. }));
    }

    #[test]
    fn explicit_family_validation() {
        let x = AtomSet::from_atoms([0, 1, 2]);
        let good = [AtomSet::EMPTY, x, AtomSet::from_atoms([0]), AtomSet::from_atoms([1, 2])];
        let s = FiniteMeasurableSpace::from_family(x, &good).unwrap();
        assert_eq!(s.blocks().len(), 2);
        assert!(s.contains(AtomSet::from_atoms([1, 2])));
        assert!(!s.contains(AtomSet::from_atoms([1])));
        let bad = [AtomSet::EMPTY, x, AtomSet::from_atoms([0])];
        assert!(FiniteMeasurableSpace::from_family(x, &bad).is_err());
    }

    #[test]
    fn not_measurable_in_limit() {
        let poset = DirectedPoset::validate(&["a"], &[] as &[(&str, &str)]).unwrap();
        let x = AtomSet::from_atoms([0, 1]);
        let sys = InductiveMeasureSystem::validate(
            poset,
            vec!["1".into(), "2".into()],
            WeightMode::Rational,
            vec![LevelData {
                space: FiniteMeasurableSpace::generated(x, &[]),
                table: MeasureTable::SetValues(vec![(x, r("4"))]),
            }],
        )
        .unwrap();
        let lms = LocallyMeasureSpace::new(sys);
        assert!(matches!(lms.limit_measure(AtomSet::singleton(0)), Err(MeasureError::NotMeasurable(_))));
        assert_eq!(lms.limit_measure(x).unwrap(), r("4"));
        let ls = lms.limit_sigma();
        assert_eq!(ls.sigma.len(), 2);
        assert!(ls.sigma0_equals_sigma);
    }

    #[test]
    fn infinity_propagates() {
        let a = r("inf");
        let b = r("2");
        assert!((&a + &b).is_infinite());
        assert!(b.approx_le(&a, 0.0));
        assert!(!a.approx_le(&b, 0.0));
    }
}
