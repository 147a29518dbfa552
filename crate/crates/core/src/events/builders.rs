//! Ready-made recursive events.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::events::partition::{BaseClassifier, ClassId, RecursivePartition};
use crate::events::predicate::{Cmp, MatrixPredicate};
use crate::tree::TypeId;

/// A partition together with the height it is meant for and the class to condition on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub name: String,
    pub partition: RecursivePartition,
    /// Total tree height `k` at which the target class is read off.
    pub height: usize,
    pub target_class: ClassId,
    pub root_type: TypeId,
    /// Human-readable meaning of each class, indexed by `ClassId::index`.
    pub labels: Vec<String>,
}

fn class(i: u32) -> ClassId {
    ClassId::new(i).expect("nonzero class")
}

fn ty(t: u32) -> TypeId {
    TypeId::new(t).expect("nonzero type")
}

fn two_types(name: &str, theta: usize) -> Result<()> {
    if theta != 2 {
        return Err(Error::domain(format!("{name} needs theta = 2 (got {theta})")));
    }
    Ok(())
}

/// Class 1: the tree has a node at depth `l`; class 2: it does not.
pub fn survival_event(theta: usize, k: usize) -> Result<Event> {
    if theta == 0 {
        return Err(Error::domain("theta must be at least 1"));
    }
    let alive = MatrixPredicate::row_sum(0, theta, Cmp::Ge, 1);
    let partition = RecursivePartition::new(
        2,
        theta,
        BaseClassifier::ByHeight(vec![class(1)]),
        vec![alive.clone(), MatrixPredicate::not(alive)],
        BTreeMap::new(),
    )?;
    Ok(Event {
        name: "survival".into(),
        partition,
        height: k,
        target_class: class(1),
        root_type: ty(1),
        labels: vec!["reaches level".into(), "extinct before level".into()],
    })
}

/// Predicates of the two-class mutant event: some child of either type in class 1.
pub fn mutant_predicates() -> Vec<MatrixPredicate> {
    let b1 = MatrixPredicate::row_sum(0, 2, Cmp::Ge, 1);
    vec![b1.clone(), MatrixPredicate::not(b1)]
}

/// Two types, type 1 = mutant. Class 1 at level `l`: a mutant at depth `l`.
pub fn mutant_at_generation(k: usize) -> Result<Event> {
    let partition = RecursivePartition::new(
        2,
        2,
        BaseClassifier::ByLeafType(vec![class(1), class(2)]),
        mutant_predicates(),
        BTreeMap::new(),
    )?;
    Ok(Event {
        name: "mutant".into(),
        partition,
        height: k,
        target_class: class(1),
        root_type: ty(2),
        labels: vec!["mutant at level".into(), "no mutant at level".into()],
    })
}

/// Class 1 at level `l`: a mutant at depth `l` whose ancestors up to this
/// node are all mutants.
pub fn root_lineage_mutant(k: usize) -> Result<Event> {
    let b1 = MatrixPredicate::cell(0, 0, Cmp::Ge, 1);
    let partition = RecursivePartition::new(
        2,
        2,
        BaseClassifier::ByLeafType(vec![class(1), class(2)]),
        vec![b1.clone(), MatrixPredicate::not(b1)],
        BTreeMap::new(),
    )?;
    Ok(Event {
        name: "root_lineage".into(),
        partition,
        height: k,
        target_class: class(1),
        root_type: ty(1),
        labels: vec!["mutant lineage reaches level".into(), "otherwise".into()],
    })
}

/// Four classes: (1) a mutant line reaches the level and no spontaneous
/// mutation occurs below the root, (2) only type-2 descendants, (3) some
/// type-2 node has a type-1 child, (4) everything else.
pub fn spontaneous_mutation_4class(k: usize) -> Result<Event> {
    let zero = |i: usize, j: usize| MatrixPredicate::cell(i, j, Cmp::Eq, 0);
    let b1 = MatrixPredicate::and(vec![
        MatrixPredicate::cell(0, 0, Cmp::Ge, 1),
        zero(0, 1),
        zero(2, 0),
        zero(2, 1),
        zero(3, 1),
    ]);
    let b2 = MatrixPredicate::and(vec![
        zero(0, 0),
        zero(0, 1),
        zero(1, 0),
        zero(2, 0),
        zero(2, 1),
        zero(3, 0),
        zero(3, 1),
    ]);
    let b3 = MatrixPredicate::atom([(0, 1, 1), (2, 0, 1), (2, 1, 1), (3, 1, 1)], Cmp::Ge, 1);
    let b4 = MatrixPredicate::and(vec![
        zero(0, 0),
        zero(0, 1),
        zero(2, 0),
        zero(2, 1),
        zero(3, 1),
        MatrixPredicate::atom([(1, 0, 1), (3, 0, 1)], Cmp::Ge, 1),
    ]);
    let partition = RecursivePartition::new(
        4,
        2,
        BaseClassifier::ByLeafType(vec![class(1), class(2)]),
        vec![b1, b2, b3, b4],
        BTreeMap::new(),
    )?;
    Ok(Event {
        name: "spontaneous_mutation".into(),
        partition,
        height: k,
        target_class: class(1),
        root_type: ty(1),
        labels: vec![
            "inherited mutants reach level, none spontaneous".into(),
            "only type-2 descendants".into(),
            "spontaneous mutation".into(),
            "other".into(),
        ],
    })
}

/// `G + 2` classes; class `s + 1` holds trees whose generation `l` has
/// exactly `s` nodes (`s <= G`), class `G + 2` those with more than `G`.
/// The builder shifts the usual 0-based size index up by one.
pub fn generation_size(theta: usize, g: u32, k: usize) -> Result<Event> {
    if theta == 0 {
        return Err(Error::domain("theta must be at least 1"));
    }
    let m = g as usize + 2;
    let size_form = |cap: usize| {
        (0..m).flat_map(move |i| (0..cap).map(move |j| (i, j, i as i64)))
    };
    let mut preds: Vec<MatrixPredicate> = (0..=g as i64)
        .map(|s| MatrixPredicate::atom(size_form(theta), Cmp::Eq, s))
        .collect();
    preds.push(MatrixPredicate::atom(size_form(theta), Cmp::Ge, i64::from(g) + 1));
    let partition = RecursivePartition::new(
        m,
        theta,
        BaseClassifier::ByHeight(vec![class(2)]),
        preds,
        BTreeMap::new(),
    )?;
    let mut labels: Vec<String> = (0..=g).map(|s| format!("size={s}")).collect();
    labels.push(format!("size>={}", g + 1));
    Ok(Event {
        name: "generation_size".into(),
        partition,
        height: k,
        target_class: generation_size_class(g),
        root_type: ty(1),
        labels,
    })
}

/// Class holding trees whose generation has exactly `size` nodes.
pub fn generation_size_class(size: u32) -> ClassId {
    class(size + 1)
}

/// Trees of height exactly `k`, read off at level `k + 1` with base height 2:
/// class 1 reaches level `l - 1` but not `l`, class 2 is shorter, class 3 reaches `l`.
pub fn exact_height(theta: usize, k: usize) -> Result<Event> {
    if theta == 0 {
        return Err(Error::domain("theta must be at least 1"));
    }
    if k < 1 {
        return Err(Error::domain("exact_height needs k >= 1"));
    }
    let n1_pos = MatrixPredicate::row_sum(0, theta, Cmp::Ge, 1);
    let n1_zero = MatrixPredicate::row_sum(0, theta, Cmp::Eq, 0);
    let n3_zero = MatrixPredicate::row_sum(2, theta, Cmp::Eq, 0);
    let n3_pos = MatrixPredicate::row_sum(2, theta, Cmp::Ge, 1);
    let partition = RecursivePartition::new(
        3,
        theta,
        BaseClassifier::ByHeight(vec![class(2), class(1), class(3)]),
        vec![
            MatrixPredicate::and(vec![n1_pos, n3_zero.clone()]),
            MatrixPredicate::and(vec![n1_zero, n3_zero]),
            n3_pos,
        ],
        BTreeMap::new(),
    )?;
    Ok(Event {
        name: "exact_height".into(),
        partition,
        height: k + 1,
        target_class: class(1),
        root_type: ty(1),
        labels: vec!["height = level - 1".into(), "shorter".into(), "height = level".into()],
    })
}

/// One class containing every tree.
pub fn trivial(theta: usize, k: usize) -> Result<Event> {
    let partition = RecursivePartition::new(
        1,
        theta,
        BaseClassifier::ByHeight(vec![class(1)]),
        vec![MatrixPredicate::True],
        BTreeMap::new(),
    )?;
    Ok(Event {
        name: "trivial".into(),
        partition,
        height: k,
        target_class: class(1),
        root_type: ty(1),
        labels: vec!["all trees".into()],
    })
}

/// Builder by name, as used in config files.
pub fn by_name(name: &str, theta: usize, k: usize, size: Option<u32>) -> Result<Event> {
    match name {
        "survival" => survival_event(theta, k),
        "mutant" => {
            two_types(name, theta)?;
            mutant_at_generation(k)
        }
        "root_lineage" => {
            two_types(name, theta)?;
            root_lineage_mutant(k)
        }
        "spontaneous_mutation" => {
            two_types(name, theta)?;
            spontaneous_mutation_4class(k)
        }
        "generation_size" => {
            let g = size.ok_or_else(|| Error::domain("generation_size needs a size G"))?;
            generation_size(theta, g, k)
        }
        "exact_height" => exact_height(theta, k),
        "trivial" => trivial(theta, k),
        other => Err(Error::domain(format!("unknown event builder `{other}`"))),
    }
}

pub const BUILTIN_NAMES: [&str; 7] = [
    "survival",
    "mutant",
    "root_lineage",
    "spontaneous_mutation",
    "generation_size",
    "exact_height",
    "trivial",
];
