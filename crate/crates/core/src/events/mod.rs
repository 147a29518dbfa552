//! Recursive partitions of tree space driven by counting-matrix predicates.

pub mod builders;
mod partition;
mod predicate;

pub use builders::Event;
pub use partition::{
    classify, count_matrix, validate_partition, BaseClassifier, ClassId, CountMatrix,
    Counterexample, PartitionCheck, RecursivePartition, DEFAULT_PROBE_BOUND,
};
pub use predicate::{Cmp, LinearAtom, MatrixPredicate};
