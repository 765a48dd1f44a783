//! Seeded generators of scenarios, sections and operators.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    ChecksBlock, FiberBlock, LevelBlock, MeasureBlock, PosetBlock, Scenario, ScenarioError, SetWeight, SigmaKind,
    SCHEMA_VERSION,
};
use crate::algebra::DEFAULT_DIM_BUDGET;
use crate::integral::{DirectIntegralSpace, Section};
use crate::linalg::{CMatrix, CVector};
use crate::measure::{WeightMode, MAX_ATOMS};
use crate::poset::Level;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_levels: usize,
    pub max_atoms: usize,
    pub max_fiber_dim: usize,
}

impl Limits {
    pub const fn new(max_levels: usize, max_atoms: usize, max_fiber_dim: usize) -> Self {
        Self { max_levels, max_atoms, max_fiber_dim }
    }

    fn check(&self) -> Result<(), ScenarioError> {
        if self.max_levels == 0 || self.max_atoms == 0 || self.max_fiber_dim == 0 {
            return Err(ScenarioError::SchemaViolation("limits must be positive".into()));
        }
        if self.max_atoms > MAX_ATOMS || self.max_atoms * self.max_fiber_dim > DEFAULT_DIM_BUDGET {
            return Err(ScenarioError::Algebra(crate::algebra::AlgebraError::DimensionBudgetExceeded {
                dim: self.max_atoms * self.max_fiber_dim,
                budget: DEFAULT_DIM_BUDGET,
            }));
        }
        Ok(())
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Levels `l0 .. l{k-1}` with `l{k-1}` on top and random extra relations
/// `li <= lj` for `i < j`.
fn random_poset(r: &mut ChaCha8Rng, max_levels: usize) -> (PosetBlock, Vec<Vec<bool>>) {
    let k = r.random_range(1..=max_levels);
    let levels: Vec<String> = (0..k).map(|i| format!("l{i}")).collect();
    let mut leq = vec![vec![false; k]; k];
    let mut relations = Vec::new();
    for i in 0..k {
        leq[i][i] = true;
        leq[i][k - 1] = true;
    }
    for i in 0..k.saturating_sub(1) {
        relations.push((levels[i].clone(), levels[k - 1].clone()));
        for j in (i + 1)..k - 1 {
            if r.random_bool(0.35) {
                relations.push((levels[i].clone(), levels[j].clone()));
                leq[i][j] = true;
            }
        }
    }
    // transitive closure; indices only increase along relations
    for m in 0..k {
        for i in 0..k {
            if leq[i][m] {
                for j in 0..k {
                    if leq[m][j] {
                        leq[i][j] = true;
                    }
                }
            }
        }
    }
    (PosetBlock { levels, relations }, leq)
}

fn random_weight(r: &mut ChaCha8Rng, mode: WeightMode) -> String {
    if r.random_bool(0.1) {
        return "0".into();
    }
    match mode {
        WeightMode::Rational => {
            let (p, q) = (r.random_range(1..=9u32), r.random_range(1..=4u32));
            if q == 1 {
                p.to_string()
            } else {
                format!("{p}/{q}")
            }
        }
        WeightMode::Float => format!("{}", r.random_range(1..=40u32) as f64 * 0.25),
    }
}

/// Entry level of each atom; the atom lies in `X_a` iff `entry <= a`.
fn random_entries(r: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(0..k)).collect()
}

fn members(leq: &[Vec<bool>], entries: &[usize], atoms: &[String], level: usize) -> Vec<String> {
    (0..atoms.len()).filter(|&p| leq[entries[p]][level]).map(|p| atoms[p].clone()).collect()
}

/// A random scenario with power-set levels, monotone fiber dimensions and
/// no operators. Deterministic in `seed`.
pub fn random_scenario(seed: u64, limits: Limits) -> Result<Scenario, ScenarioError> {
    limits.check()?;
    let mut r = rng(seed);
    let (poset, leq) = random_poset(&mut r, limits.max_levels);
    let k = poset.levels.len();
    let n = r.random_range(1..=limits.max_atoms);
    let atoms: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
    let mode = if r.random_bool(0.3) { WeightMode::Float } else { WeightMode::Rational };
    let entries = random_entries(&mut r, k, n);
    let weights: Vec<String> = (0..n).map(|_| random_weight(&mut r, mode)).collect();

    let mut levels = BTreeMap::new();
    for l in 0..k {
        let mem = members(&leq, &entries, &atoms, l);
        let w = mem
            .iter()
            .map(|a| {
                let p = atoms.iter().position(|x| x == a).unwrap();
                (a.clone(), weights[p].clone())
            })
            .collect();
        levels.insert(
            poset.levels[l].clone(),
            LevelBlock { atoms: mem, sigma: SigmaKind::PowerSet, generators: vec![], weights: w, set_weights: vec![] },
        );
    }

    let mut fibers = BTreeMap::new();
    for p in 0..n {
        let ambient = r.random_range(1..=limits.max_fiber_dim);
        // d_a = min of thresholds over the up-set of a, top fixed at ambient
        let thresholds: Vec<usize> =
            (0..k).map(|l| if l == k - 1 { ambient } else { r.random_range(0..=ambient) }).collect();
        let mut dims = BTreeMap::new();
        for l in 0..k {
            if leq[entries[p]][l] {
                let d = (0..k).filter(|&m| leq[l][m]).map(|m| thresholds[m]).min().unwrap();
                dims.insert(poset.levels[l].clone(), d);
            }
        }
        let ambient = if r.random_bool(0.5) { Some(ambient) } else { None };
        fibers.insert(atoms[p].clone(), FiberBlock { ambient, dims });
    }

    Ok(Scenario {
        version: SCHEMA_VERSION,
        name: Some(format!("random-{seed}")),
        description: None,
        poset,
        measure: MeasureBlock { mode, atoms, levels },
        fibers,
        operators: vec![],
        checks: ChecksBlock::default(),
    })
}

/// A random measure-only scenario whose levels may carry coarse
/// sigma-algebras. The top partition refines the membership classes and
/// every level takes its trace, so the system is valid by construction.
pub fn random_measure_system(seed: u64, max_levels: usize, max_atoms: usize) -> Scenario {
    let mut r = rng(seed);
    let (poset, leq) = random_poset(&mut r, max_levels.max(1));
    let k = poset.levels.len();
    let n = r.random_range(1..=max_atoms.clamp(1, MAX_ATOMS));
    let atoms: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
    let entries = random_entries(&mut r, k, n);

    // Blocks of the top partition: random coarsening inside each entry class.
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for e in 0..k {
        let class: Vec<usize> = (0..n).filter(|&p| entries[p] == e).collect();
        let mut current: Vec<usize> = Vec::new();
        for p in class {
            if !current.is_empty() && r.random_bool(0.5) {
                blocks.push(std::mem::take(&mut current));
            }
            current.push(p);
        }
        if !current.is_empty() {
            blocks.push(current);
        }
    }
    let values: Vec<String> = blocks.iter().map(|_| random_weight(&mut r, WeightMode::Rational)).collect();

    let mut levels = BTreeMap::new();
    for l in 0..k {
        let mem = members(&leq, &entries, &atoms, l);
        let inside: Vec<usize> = (0..blocks.len()).filter(|&b| leq[entries[blocks[b][0]]][l]).collect();
        let names = |b: usize| blocks[b].iter().map(|&p| atoms[p].clone()).collect::<Vec<_>>();
        let coarse = inside.iter().any(|&b| blocks[b].len() > 1);
        let block = if coarse {
            LevelBlock {
                atoms: mem,
                sigma: SigmaKind::Generated,
                generators: inside.iter().map(|&b| names(b)).collect(),
                weights: BTreeMap::new(),
                set_weights: inside.iter().map(|&b| SetWeight { set: names(b), value: values[b].clone() }).collect(),
            }
        } else {
            let w = inside.iter().map(|&b| (atoms[blocks[b][0]].clone(), values[b].clone())).collect();
            LevelBlock { atoms: mem, sigma: SigmaKind::PowerSet, generators: vec![], weights: w, set_weights: vec![] }
        };
        levels.insert(poset.levels[l].clone(), block);
    }
    Scenario {
        version: SCHEMA_VERSION,
        name: Some(format!("measure-{seed}")),
        description: None,
        poset,
        measure: MeasureBlock { mode: WeightMode::Rational, atoms, levels },
        fibers: BTreeMap::new(),
        operators: vec![],
        checks: ChecksBlock::default(),
    }
}

fn random_complex(r: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

/// A random section in `H_level`.
pub fn random_section(space: &DirectIntegralSpace, level: Level, r: &mut ChaCha8Rng) -> Section {
    let mut values = space.zero_values();
    for &k in space.level_mask(level) {
        let c = space.layout()[k];
        values[c.atom][c.index] = random_complex(r);
    }
    space.section(values).expect("values have the fiber shapes")
}

/// A random matrix supported on the cells of the space, hence locally
/// bounded.
pub fn random_local_matrix(space: &DirectIntegralSpace, r: &mut ChaCha8Rng) -> CMatrix {
    let cell = space.cell_of();
    let n = space.dim();
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if cell[i] == cell[j] {
                m[(i, j)] = random_complex(r);
            }
        }
    }
    m
}

/// A random vector of length `n`.
pub fn random_vector(n: usize, r: &mut ChaCha8Rng) -> CVector {
    CVector::from_fn(n, |_, _| random_complex(r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = random_scenario(0, Limits::new(3, 4, 2)).unwrap();
        let b = random_scenario(0, Limits::new(3, 4, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generator_is_sound() {
        for seed in 0..1000 {
            let s = random_scenario(seed, Limits::new(4, 6, 3)).unwrap();
            s.build().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert_eq!(super::super::parse_str(&super::super::emit(&s)).unwrap(), s);
        }
    }

    #[test]
    fn measure_generator_is_sound() {
        for seed in 0..500 {
            random_measure_system(seed, 4, 8).build_system().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }

    #[test]
    fn degenerate_limits() {
        for seed in 0..20 {
            let s = random_scenario(seed, Limits::new(1, 1, 4)).unwrap();
            assert_eq!(s.poset.levels.len(), 1);
            assert_eq!(s.measure.atoms.len(), 1);
            s.build().unwrap();
        }
    }

    #[test]
    fn budget() {
        assert!(random_scenario(0, Limits::new(2, 10, 3)).is_err());
        assert!(random_scenario(0, Limits::new(0, 1, 1)).is_err());
    }
}
