use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::events::predicate::MatrixPredicate;
use crate::rng::RngStream;
use crate::tree::{TypeId, TypedTree};

/// Probe bound used when a partition is constructed.
pub const DEFAULT_PROBE_BOUND: u32 = 6;
const EXHAUSTIVE_LIMIT: u64 = 2_000_000;
const RANDOM_PROBES: usize = 200_000;

/// A partition class, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(u32);

impl ClassId {
    pub fn new(value: u32) -> Result<Self> {
        if value == 0 {
            return Err(Error::domain("class ids start at 1"));
        }
        Ok(ClassId(value))
    }

    pub fn from_index(index: usize) -> Self {
        ClassId(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `m x theta` matrix: entry `(i, j)` counts children of type `j` in class `i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountMatrix {
    m: usize,
    theta: usize,
    entries: Vec<u32>,
}

impl CountMatrix {
    pub fn zeros(m: usize, theta: usize) -> Self {
        CountMatrix {
            m,
            theta,
            entries: vec![0; m * theta],
        }
    }

    /// Row-major entries.
    pub fn from_entries(m: usize, theta: usize, entries: Vec<u32>) -> Result<Self> {
        if entries.len() != m * theta {
            return Err(Error::domain(format!(
                "{} entries for a {m}x{theta} count matrix",
                entries.len()
            )));
        }
        Ok(CountMatrix { m, theta, entries })
    }

    /// Matrix whose column `j` is `columns[j]` (length `m`).
    pub fn from_columns(m: usize, columns: &[Vec<u32>]) -> Self {
        let theta = columns.len();
        let mut c = CountMatrix::zeros(m, theta);
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                c.entries[i * theta + j] = v;
            }
        }
        c
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn theta(&self) -> usize {
        self.theta
    }

    /// 0-based access.
    pub fn get(&self, class: usize, ty: usize) -> u32 {
        self.entries[class * self.theta + ty]
    }

    pub fn add(&mut self, class: ClassId, ty: TypeId, n: u32) {
        self.entries[class.index() * self.theta + ty.index()] += n;
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn column(&self, ty: usize) -> Vec<u32> {
        (0..self.m).map(|i| self.get(i, ty)).collect()
    }

    pub fn column_sums(&self) -> Vec<u32> {
        (0..self.theta).map(|j| self.column(j).iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&v| u64::from(v)).sum()
    }
}

impl fmt::Display for CountMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.m {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "[")?;
            for j in 0..self.theta {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

/// Classification of the trees of height at most `k0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseClassifier {
    /// `k0 = 0`: the class of each leaf type, indexed by type.
    ByLeafType(Vec<ClassId>),
    /// The class of a tree as a function of its height `0..=k0`.
    ByHeight(Vec<ClassId>),
}

/// Matrix on which the class predicates of one level fail to define exactly one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    /// `None` for the default predicate set.
    pub level: Option<usize>,
    pub matrix: CountMatrix,
    pub holding: Vec<ClassId>,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let holding: Vec<String> = self.holding.iter().map(ToString::to_string).collect();
        match self.level {
            Some(l) => write!(f, "level {l}: ")?,
            None => write!(f, "default predicates: ")?,
        }
        write!(
            f,
            "matrix {} satisfies {} predicates [{}]",
            self.matrix,
            self.holding.len(),
            holding.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionCheck {
    pub matrices_checked: u64,
    /// True when the probe covered every distinct behaviour of the predicates:
    /// all weights are nonnegative, so entries above the largest constant
    /// can be clamped without changing any atom, and the exhaustive range
    /// reached that clamp value.
    pub complete: bool,
}

/// Base partition of `T_{k0}` plus per-level predicate sets `B_{l,1..m}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecursivePartition {
    m: usize,
    theta: usize,
    base_height: usize,
    base: BaseClassifier,
    predicates: Vec<MatrixPredicate>,
    level_predicates: BTreeMap<usize, Vec<MatrixPredicate>>,
}

impl RecursivePartition {
    /// Validated partition. `predicates` apply at every level above the base
    /// unless `level_predicates` overrides that level.
    pub fn new(
        m: usize,
        theta: usize,
        base: BaseClassifier,
        predicates: Vec<MatrixPredicate>,
        level_predicates: BTreeMap<usize, Vec<MatrixPredicate>>,
    ) -> Result<Self> {
        let p = Self::new_unchecked(m, theta, base, predicates, level_predicates)?;
        if let Err(cx) = p.validate(DEFAULT_PROBE_BOUND) {
            return Err(Error::NotAPartition {
                level: cx.level.unwrap_or(p.base_height + 1),
                matrix: cx.matrix,
                holding: cx.holding.len(),
            });
        }
        Ok(p)
    }

    /// Checks shapes but not the partition property; `classify` reports
    /// violations as they are met.
    pub fn new_unchecked(
        m: usize,
        theta: usize,
        base: BaseClassifier,
        predicates: Vec<MatrixPredicate>,
        level_predicates: BTreeMap<usize, Vec<MatrixPredicate>>,
    ) -> Result<Self> {
        if m == 0 || theta == 0 {
            return Err(Error::domain("a partition needs m >= 1 classes and theta >= 1"));
        }
        let base_height = match &base {
            BaseClassifier::ByLeafType(v) => {
                if v.len() != theta {
                    return Err(Error::domain(format!(
                        "leaf-type base lists {} classes for theta = {theta}",
                        v.len()
                    )));
                }
                0
            }
            BaseClassifier::ByHeight(v) => {
                if v.is_empty() {
                    return Err(Error::domain("height base needs at least one class"));
                }
                v.len() - 1
            }
        };
        let base_classes = match &base {
            BaseClassifier::ByLeafType(v) | BaseClassifier::ByHeight(v) => v,
        };
        if let Some(c) = base_classes.iter().find(|c| c.index() >= m) {
            return Err(Error::domain(format!("base class {c} exceeds m = {m}")));
        }
        let sets = std::iter::once(&predicates).chain(level_predicates.values());
        for set in sets {
            if set.len() != m {
                return Err(Error::domain(format!(
                    "{} predicates given for m = {m} classes",
                    set.len()
                )));
            }
            for p in set {
                if let Some((i, j)) = p.max_indices() {
                    if i >= m || j >= theta {
                        return Err(Error::domain(format!(
                            "predicate `{p}` references c[{}][{}] outside {m}x{theta}",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        if let Some(&l) = level_predicates.keys().find(|&&l| l <= base_height) {
            return Err(Error::domain(format!(
                "level {l} predicates given at or below the base height {base_height}"
            )));
        }
        Ok(RecursivePartition {
            m,
            theta,
            base_height,
            base,
            predicates,
            level_predicates,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn theta(&self) -> usize {
        self.theta
    }

    /// `k0`.
    pub fn base_height(&self) -> usize {
        self.base_height
    }

    pub fn base(&self) -> &BaseClassifier {
        &self.base
    }

    pub fn default_predicates(&self) -> &[MatrixPredicate] {
        &self.predicates
    }

    pub fn level_overrides(&self) -> &BTreeMap<usize, Vec<MatrixPredicate>> {
        &self.level_predicates
    }

    /// The predicate set `B_{level,1..m}`.
    pub fn predicates_at(&self, level: usize) -> &[MatrixPredicate] {
        self.level_predicates
            .get(&level)
            .unwrap_or(&self.predicates)
    }

    /// Base class of a tree of height at most `level <= k0`.
    pub fn base_class(&self, tree: &TypedTree, level: usize) -> Result<ClassId> {
        match &self.base {
            BaseClassifier::ByLeafType(classes) => {
                if !tree.is_leaf() {
                    return Err(Error::domain(format!(
                        "tree {tree} is not a leaf but the base height is 0"
                    )));
                }
                classes
                    .get(tree.ty.index())
                    .copied()
                    .ok_or_else(|| Error::domain(format!("type {} exceeds theta", tree.ty)))
            }
            BaseClassifier::ByHeight(classes) => {
                let h = tree.height();
                if h > level {
                    return Err(Error::domain(format!(
                        "tree of height {h} classified at level {level}"
                    )));
                }
                Ok(classes[h])
            }
        }
    }

    /// The unique class whose predicate holds for `c` at `level`.
    pub fn class_of_matrix(&self, level: usize, c: &CountMatrix) -> Result<ClassId> {
        let preds = self.predicates_at(level);
        let mut found = None;
        let mut holding = 0;
        for (i, p) in preds.iter().enumerate() {
            if p.eval(c) {
                holding += 1;
                found = Some(ClassId::from_index(i));
            }
        }
        match (holding, found) {
            (1, Some(id)) => Ok(id),
            _ => Err(Error::NotAPartition {
                level,
                matrix: c.clone(),
                holding,
            }),
        }
    }

    /// Class of `tree` viewed as an element of `T_level`.
    pub fn classify(&self, tree: &TypedTree, level: usize) -> Result<ClassId> {
        self.classify_node(tree, level, None)
    }

    /// Classes of every node in preorder; a node at depth `d` is classified at
    /// `level - d`.
    pub fn classify_preorder(&self, tree: &TypedTree, level: usize) -> Result<Vec<ClassId>> {
        let mut out = Vec::new();
        self.classify_node(tree, level, Some(&mut out))?;
        Ok(out)
    }

    fn classify_node(
        &self,
        tree: &TypedTree,
        level: usize,
        mut out: Option<&mut Vec<ClassId>>,
    ) -> Result<ClassId> {
        if tree.ty.index() >= self.theta {
            return Err(Error::domain(format!(
                "node type {} exceeds theta = {}",
                tree.ty, self.theta
            )));
        }
        let slot = out.as_deref_mut().map(|v| {
            v.push(ClassId(0));
            v.len() - 1
        });
        let class = if level <= self.base_height {
            let c = self.base_class(tree, level)?;
            if let Some(v) = out.as_deref_mut() {
                for child in &tree.children {
                    self.classify_node(child, level.saturating_sub(1), Some(v))?;
                }
            }
            c
        } else {
            let mut cm = CountMatrix::zeros(self.m, self.theta);
            for child in &tree.children {
                let cc = self.classify_node(child, level - 1, out.as_deref_mut())?;
                cm.add(cc, child.ty, 1);
            }
            self.class_of_matrix(level, &cm)?
        };
        if let (Some(v), Some(s)) = (out, slot) {
            v[s] = class;
        }
        Ok(class)
    }

    /// `C_level(tree)`; requires `level > k0`.
    pub fn count_matrix(&self, tree: &TypedTree, level: usize) -> Result<CountMatrix> {
        if level <= self.base_height {
            return Err(Error::domain(format!(
                "count matrices are defined above the base height {} (got level {level})",
                self.base_height
            )));
        }
        let mut cm = CountMatrix::zeros(self.m, self.theta);
        for child in &tree.children {
            let cc = self.classify(child, level - 1)?;
            cm.add(cc, child.ty, 1);
        }
        Ok(cm)
    }

    /// Checks the partition property on every predicate set: exhaustively for
    /// entries up to `probe_bound` (or the clamp value, when smaller and the
    /// predicates allow it), and by random probing when the grid is too large.
    pub fn validate(&self, probe_bound: u32) -> Result<PartitionCheck, Counterexample> {
        let mut total = PartitionCheck {
            matrices_checked: 0,
            complete: true,
        };
        let sets = std::iter::once((None, &self.predicates))
            .chain(self.level_predicates.iter().map(|(l, s)| (Some(*l), s)));
        for (level, set) in sets {
            let check = validate_set(self.m, self.theta, set, probe_bound.max(1), level)?;
            total.matrices_checked += check.matrices_checked;
            total.complete &= check.complete;
        }
        Ok(total)
    }
}

fn holding_classes(set: &[MatrixPredicate], c: &CountMatrix) -> Vec<ClassId> {
    set.iter()
        .enumerate()
        .filter(|(_, p)| p.eval(c))
        .map(|(i, _)| ClassId::from_index(i))
        .collect()
}

fn validate_set(
    m: usize,
    theta: usize,
    set: &[MatrixPredicate],
    probe_bound: u32,
    level: Option<usize>,
) -> Result<PartitionCheck, Counterexample> {
    let n = m * theta;
    let atoms: Vec<_> = set.iter().flat_map(|p| p.atoms()).collect();
    let nonnegative = atoms.iter().all(|a| a.terms().iter().all(|t| t.2 >= 0));
    let clamp = atoms.iter().map(|a| a.rhs().max(0)).max().unwrap_or(0) + 1;
    let clamp = u32::try_from(clamp).unwrap_or(u32::MAX);
    let bound = if nonnegative { probe_bound.min(clamp) } else { probe_bound };
    let complete_range = nonnegative && bound >= clamp;

    let check = |entries: &[u32]| -> Result<(), Counterexample> {
        let c = CountMatrix::from_entries(m, theta, entries.to_vec()).expect("shape");
        let holding = holding_classes(set, &c);
        if holding.len() == 1 {
            Ok(())
        } else {
            Err(Counterexample {
                level,
                matrix: c,
                holding,
            })
        }
    };

    let grid = (u64::from(bound) + 1).checked_pow(n as u32);
    let mut checked = 0u64;
    match grid {
        Some(g) if g <= EXHAUSTIVE_LIMIT => {
            let mut entries = vec![0u32; n];
            loop {
                check(&entries)?;
                checked += 1;
                // odometer, last entry fastest
                let mut k = n;
                loop {
                    if k == 0 {
                        return Ok(PartitionCheck {
                            matrices_checked: checked,
                            complete: complete_range,
                        });
                    }
                    k -= 1;
                    if entries[k] < bound {
                        entries[k] += 1;
                        break;
                    }
                    entries[k] = 0;
                }
            }
        }
        _ => {
            if n < 21 {
                for mask in 0u64..(1u64 << n) {
                    let entries: Vec<u32> = (0..n).map(|b| ((mask >> (n - 1 - b)) & 1) as u32).collect();
                    check(&entries)?;
                    checked += 1;
                }
            }
            let mut rng = RngStream::new(0x5EED_0F_BA5E);
            for _ in 0..RANDOM_PROBES {
                let entries: Vec<u32> = (0..n)
                    .map(|_| rng.below(u64::from(bound) + 1) as u32)
                    .collect();
                check(&entries)?;
                checked += 1;
            }
            Ok(PartitionCheck {
                matrices_checked: checked,
                complete: false,
            })
        }
    }
}

/// Class of `tree` at height index `level`.
pub fn classify(tree: &TypedTree, level: usize, partition: &RecursivePartition) -> Result<ClassId> {
    partition.classify(tree, level)
}

pub fn count_matrix(
    tree: &TypedTree,
    level: usize,
    partition: &RecursivePartition,
) -> Result<CountMatrix> {
    partition.count_matrix(tree, level)
}

pub fn validate_partition(
    partition: &RecursivePartition,
    probe_bound: u32,
) -> Result<PartitionCheck, Counterexample> {
    partition.validate(probe_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::predicate::Cmp;

    fn one_type(preds: Vec<MatrixPredicate>) -> RecursivePartition {
        RecursivePartition::new_unchecked(
            preds.len(),
            1,
            BaseClassifier::ByHeight(vec![ClassId::from_index(0)]),
            preds,
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn overlapping_predicates_are_rejected() {
        let p = one_type(vec![
            MatrixPredicate::cell(0, 0, Cmp::Ge, 1),
            MatrixPredicate::cell(0, 0, Cmp::Ge, 0),
        ]);
        let cx = p.validate(3).unwrap_err();
        assert_eq!(cx.matrix.entries(), &[1, 0]);
        assert_eq!(cx.holding.len(), 2);
    }

    #[test]
    fn gaps_are_rejected() {
        let p = one_type(vec![
            MatrixPredicate::cell(0, 0, Cmp::Ge, 2),
            MatrixPredicate::cell(0, 0, Cmp::Eq, 0),
        ]);
        let cx = p.validate(3).unwrap_err();
        assert_eq!(cx.matrix.entries(), &[1, 0]);
        assert!(cx.holding.is_empty());
    }

    #[test]
    fn complementary_pair_is_complete() {
        let p = one_type(vec![
            MatrixPredicate::row_sum(0, 1, Cmp::Ge, 1),
            MatrixPredicate::not(MatrixPredicate::row_sum(0, 1, Cmp::Ge, 1)),
        ]);
        let check = p.validate(6).unwrap();
        assert!(check.complete);
        // entries clamp at 2, so 3^2 matrices suffice
        assert_eq!(check.matrices_checked, 9);
    }

    #[test]
    fn classify_reports_non_partition() {
        let p = one_type(vec![MatrixPredicate::True, MatrixPredicate::True]);
        let tree: TypedTree = "1(1)".parse().unwrap();
        assert!(matches!(
            p.classify(&tree, 1),
            Err(Error::NotAPartition { holding: 2, .. })
        ));
    }

    #[test]
    fn count_matrix_requires_level_above_base() {
        let p = one_type(vec![MatrixPredicate::True]);
        let tree: TypedTree = "1(1)".parse().unwrap();
        assert!(p.count_matrix(&tree, 0).is_err());
        assert_eq!(p.count_matrix(&tree, 1).unwrap().entries(), &[1]);
    }

    #[test]
    fn shape_errors() {
        let base = BaseClassifier::ByLeafType(vec![ClassId::from_index(0)]);
        assert!(RecursivePartition::new(
            1,
            2,
            base.clone(),
            vec![MatrixPredicate::True],
            BTreeMap::new()
        )
        .is_err());
        assert!(RecursivePartition::new(
            1,
            1,
            base.clone(),
            vec![MatrixPredicate::cell(1, 0, Cmp::Ge, 1)],
            BTreeMap::new()
        )
        .is_err());
        assert!(RecursivePartition::new(
            1,
            1,
            base,
            vec![MatrixPredicate::True],
            BTreeMap::from([(0, vec![MatrixPredicate::True])])
        )
        .is_err());
    }

    #[test]
    fn level_overrides_are_validated_and_used() {
        let yes = MatrixPredicate::row_sum(0, 1, Cmp::Ge, 1);
        let no = MatrixPredicate::not(yes.clone());
        let p = RecursivePartition::new(
            2,
            1,
            BaseClassifier::ByHeight(vec![ClassId::from_index(0)]),
            vec![yes.clone(), no.clone()],
            BTreeMap::from([(2, vec![no.clone(), yes.clone()])]),
        )
        .unwrap();
        assert_eq!(p.predicates_at(1), &[yes.clone(), no.clone()]);
        assert_eq!(p.predicates_at(2), &[no, yes.clone()]);
        let bad = RecursivePartition::new(
            2,
            1,
            BaseClassifier::ByHeight(vec![ClassId::from_index(0)]),
            vec![yes.clone(), MatrixPredicate::not(yes.clone())],
            BTreeMap::from([(3, vec![yes.clone(), yes])]),
        );
        assert!(matches!(bad, Err(Error::NotAPartition { level: 3, .. })));
    }
}
