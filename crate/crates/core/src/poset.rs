//! Finite directed posets: the index sets of every filtration in the crate.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Index of a level inside a [`DirectedPoset`], in declared order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Level(pub usize);

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PosetError {
    #[error("poset has no elements")]
    EmptyPoset,
    #[error("level `{0}` is declared twice")]
    DuplicateLevel(String),
    #[error("relation references unknown level `{0}`")]
    UnknownLevel(String),
    #[error("relation is not antisymmetric: `{0}` <= `{1}` and `{1}` <= `{0}`")]
    NotAntisymmetric(String, String),
    #[error("levels `{0}` and `{1}` have no common upper bound")]
    NotDirected(String, String),
    #[error("levels `{0}` and `{1}` are not comparable")]
    NotComparable(String, String),
}

/// A validated finite directed poset with its reflexive-transitive closure
/// materialized as a dense boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedPoset {
    names: Vec<String>,
    index: HashMap<String, usize>,
    // leq[i][j] <=> names[i] <= names[j]
    leq: Vec<Vec<bool>>,
    greatest: usize,
}

impl DirectedPoset {
    /// Validates a candidate poset. `relations` may be any generating set;
    /// its reflexive-transitive closure is computed before the checks.
    pub fn validate<S: AsRef<str>>(
        elements: &[S],
        relations: &[(S, S)],
    ) -> Result<Self, PosetError> {
        if elements.is_empty() {
            return Err(PosetError::EmptyPoset);
        }
        let names: Vec<String> = elements.iter().map(|e| e.as_ref().to_string()).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(PosetError::DuplicateLevel(name.clone()));
            }
        }
        let n = names.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for (lo, hi) in relations {
            let lo = lookup(&index, lo.as_ref())?;
            let hi = lookup(&index, hi.as_ref())?;
            leq[lo][hi] = true;
        }
        // Warshall closure.
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if leq[i][j] && leq[j][i] {
                    return Err(PosetError::NotAntisymmetric(
                        names[i].clone(),
                        names[j].clone(),
                    ));
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !(0..n).any(|k| leq[i][k] && leq[j][k]) {
                    return Err(PosetError::NotDirected(names[i].clone(), names[j].clone()));
                }
            }
        }
        // Directedness of a finite poset forces a unique maximum.
        let greatest = (0..n)
            .find(|&g| (0..n).all(|i| leq[i][g]))
            .expect("finite directed poset has a greatest element");
        Ok(Self { names, index, leq, greatest })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn levels(&self) -> impl ExactSizeIterator<Item = Level> + '_ {
        (0..self.names.len()).map(Level)
    }

    pub fn name(&self, level: Level) -> &str {
        &self.names[level.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn level(&self, name: &str) -> Result<Level, PosetError> {
        lookup(&self.index, name).map(Level)
    }

    pub fn leq(&self, a: Level, b: Level) -> bool {
        self.leq[a.0][b.0]
    }

    pub fn comparable(&self, a: Level, b: Level) -> bool {
        self.leq(a, b) || self.leq(b, a)
    }

    /// Errors unless `lo <= hi`.
    pub fn require_leq(&self, lo: Level, hi: Level) -> Result<(), PosetError> {
        if self.leq(lo, hi) {
            Ok(())
        } else {
            Err(PosetError::NotComparable(
                self.name(lo).to_string(),
                self.name(hi).to_string(),
            ))
        }
    }

    pub fn greatest(&self) -> Level {
        Level(self.greatest)
    }

    /// All pairs `(a, b)` with `a <= b`, including the diagonal.
    pub fn comparable_pairs(&self) -> Vec<(Level, Level)> {
        let mut out = Vec::new();
        for a in self.levels() {
            for b in self.levels() {
                if self.leq(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Levels that are `<=`-minimal among the given candidates, in declared order.
    pub fn minimal_among(&self, candidates: &[Level]) -> Vec<Level> {
        candidates
            .iter()
            .copied()
            .filter(|&c| !candidates.iter().any(|&d| d != c && self.leq(d, c)))
            .collect()
    }

    /// The order ideal `{a : a <= top}` as a poset in its own right. Level
    /// indices are renumbered; the returned map sends new indices to old ones.
    pub fn branch(&self, top: Level) -> (DirectedPoset, Vec<Level>) {
        let kept: Vec<Level> = self.levels().filter(|&a| self.leq(a, top)).collect();
        let names: Vec<String> = kept.iter().map(|&a| self.name(a).to_string()).collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let leq = kept
            .iter()
            .map(|&a| kept.iter().map(|&b| self.leq(a, b)).collect())
            .collect();
        let greatest = kept.iter().position(|&a| a == top).expect("top is in its own branch");
        (DirectedPoset { names, index, leq, greatest }, kept)
    }

    /// Branch by level name.
    pub fn branch_at(&self, name: &str) -> Result<DirectedPoset, PosetError> {
        let top = self.level(name)?;
        Ok(self.branch(top).0)
    }

    /// Generating pairs of the closure, excluding the diagonal.
    pub fn relation_pairs(&self) -> Vec<(String, String)> {
        self.comparable_pairs()
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (self.name(a).to_string(), self.name(b).to_string()))
            .collect()
    }
}

fn lookup(index: &HashMap<String, usize>, name: &str) -> Result<usize, PosetError> {
    index
        .get(name)
        .copied()
        .ok_or_else(|| PosetError::UnknownLevel(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> DirectedPoset {
        DirectedPoset::validate(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap()
    }

    #[test]
    fn two_chain_has_top() {
        let p = DirectedPoset::validate(&["a", "b"], &[("a", "b")]).unwrap();
        assert_eq!(p.name(p.greatest()), "b");
    }

    #[test]
    fn antichain_is_not_directed() {
        let empty: [(&str, &str); 0] = [];
        let err = DirectedPoset::validate(&["a", "b"], &empty).unwrap_err();
        assert_eq!(err, PosetError::NotDirected("a".into(), "b".into()));
    }

    #[test]
    fn v_poset_top_is_c() {
        let p = DirectedPoset::validate(&["a", "b", "c"], &[("a", "c"), ("b", "c")]).unwrap();
        assert_eq!(p.name(p.greatest()), "c");
        // every pair has an upper bound
        for a in p.levels() {
            for b in p.levels() {
                assert!(p.levels().any(|g| p.leq(a, g) && p.leq(b, g)));
            }
        }
    }

    #[test]
    fn errors() {
        let none: [&str; 0] = [];
        let no_rel: [(&str, &str); 0] = [];
        assert_eq!(DirectedPoset::validate(&none, &no_rel).unwrap_err(), PosetError::EmptyPoset);
        assert!(matches!(
            DirectedPoset::validate(&["a", "b"], &[("a", "b"), ("b", "a")]),
            Err(PosetError::NotAntisymmetric(..))
        ));
        assert!(matches!(
            DirectedPoset::validate(&["a"], &[("a", "z")]),
            Err(PosetError::UnknownLevel(_))
        ));
    }

    #[test]
    fn closure_is_transitive() {
        let p = chain3();
        let a = p.level("a").unwrap();
        let c = p.level("c").unwrap();
        assert!(p.leq(a, c));
        for x in p.levels() {
            for y in p.levels() {
                for z in p.levels() {
                    if p.leq(x, y) && p.leq(y, z) {
                        assert!(p.leq(x, z));
                    }
                }
            }
        }
    }

    #[test]
    fn branches() {
        let p = chain3();
        let b = p.branch_at("b").unwrap();
        assert_eq!(b.names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(b.name(b.greatest()), "b");
        let whole = p.branch_at("c").unwrap();
        assert_eq!(whole, p);

        let v = DirectedPoset::validate(&["a", "b", "c"], &[("a", "c"), ("b", "c")]).unwrap();
        let at_a = v.branch_at("a").unwrap();
        assert_eq!(at_a.names(), &["a".to_string()]);
        assert!(matches!(v.branch_at("q"), Err(PosetError::UnknownLevel(_))));
    }

    #[test]
    fn branch_top_is_its_root() {
        let v = DirectedPoset::validate(&["a", "b", "c", "d"], &[("a", "c"), ("b", "c"), ("c", "d")])
            .unwrap();
        for lvl in v.levels() {
            let (br, _) = v.branch(lvl);
            assert_eq!(br.name(br.greatest()), v.name(lvl));
        }
    }
}
