//! Exact samplers: the unconditioned Galton-Watson tree and the conditioned
//! construction (class coin, conditioned `(W, X)` draw, uniform placement of
//! the child labels, descent).
//!
//! Trees are grown with an explicit work stack; every node owns a stream
//! split from its parent's, so a tree depends only on the stream it starts
//! from. Draw `n` of a batch uses `RngStream::new(seed).fork(n)`, which makes
//! batches independent of the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::{ClassId, CountMatrix};
use crate::measure::GwMeasureParams;
use crate::probs::ConditionedModel;
use crate::rng::RngStream;
use crate::tree::{TypeCountVector, TypeId, TypedTree};

/// Below this class probability the rejection sampler refuses to run.
pub const REJECTION_MIN_PROB: f64 = 1e-6;

struct Arena {
    types: Vec<TypeId>,
    children: Vec<Vec<usize>>,
}

impl Arena {
    fn new() -> Self {
        Arena {
            types: Vec::new(),
            children: Vec::new(),
        }
    }

    fn push(&mut self, ty: TypeId) -> usize {
        self.types.push(ty);
        self.children.push(Vec::new());
        self.types.len() - 1
    }

    /// Children always have larger indices than their parent, so a reverse
    /// sweep assembles the tree without recursion.
    fn into_tree(self) -> TypedTree {
        let mut built: Vec<Option<TypedTree>> = (0..self.types.len()).map(|_| None).collect();
        for idx in (0..self.types.len()).rev() {
            let children = self.children[idx]
                .iter()
                .map(|&c| built[c].take().expect("child built before parent"))
                .collect();
            built[idx] = Some(TypedTree::node(self.types[idx], children));
        }
        built[0].take().expect("root")
    }
}

/// A tree drawn from `P_{lk}^t`.
pub fn sample_unconditioned(
    t: TypeId,
    l: usize,
    rng: &mut RngStream,
    params: &GwMeasureParams,
) -> Result<TypedTree> {
    if l > params.height {
        return Err(Error::domain(format!("level {l} above height {}", params.height)));
    }
    let mut arena = Arena::new();
    let root = arena.push(t);
    let mut stack = vec![(root, l, rng.split())];
    while let Some((node, level, mut stream)) = stack.pop() {
        if level == params.height {
            continue;
        }
        let ty = arena.types[node];
        let n = params.offspring.law(ty, level)?.sample(&mut stream);
        let mut kids = n.expand();
        stream.shuffle(&mut kids);
        for kid in kids {
            let c = arena.push(kid);
            arena.children[node].push(c);
            stack.push((c, level + 1, stream.split()));
        }
    }
    Ok(arena.into_tree())
}

/// `(W, X)` given class `i`: inverse CDF over the conditional table when it
/// exists, rejection from the joint law otherwise.
pub fn draw_wx_conditioned(
    t: TypeId,
    l: usize,
    i: ClassId,
    rng: &mut RngStream,
    ctx: &ConditionedModel,
) -> Result<(TypeCountVector, CountMatrix)> {
    ctx.require_possible(t, l, i)?;
    if l >= ctx.table.base_layer() {
        return Err(Error::domain("no count matrix is drawn at the base layer"));
    }
    if let Some(law) = ctx.conditional.as_ref().and_then(|c| c.law(t, l, i)) {
        if !law.is_empty() {
            let idx = rng.search_cumulative(&law.cumulative);
            return Ok(law.points[idx].clone());
        }
    }
    draw_wx_rejection(t, l, i, rng, ctx)
}

/// Rejection sampler for `(W, X)` given class `i`: draws `W`, spreads each
/// child over classes with the next layer's probabilities, and retries until
/// the matrix lies in class `i`.
pub fn draw_wx_rejection(
    t: TypeId,
    l: usize,
    i: ClassId,
    rng: &mut RngStream,
    ctx: &ConditionedModel,
) -> Result<(TypeCountVector, CountMatrix)> {
    ctx.require_possible(t, l, i)?;
    let p = ctx.prob(t, l, i);
    if p < REJECTION_MIN_PROB {
        return Err(Error::unsupported(format!(
            "rejection sampling at probability {p:.3e} needs a conditional table"
        )));
    }
    let level = ctx.height() - l;
    let law = ctx.params.offspring.law(t, l)?;
    let (m, theta) = (ctx.m(), ctx.theta());
    loop {
        let w = law.sample(rng);
        let mut x = CountMatrix::zeros(m, theta);
        for (j, &nj) in w.0.iter().enumerate() {
            let q = ctx.table.row(TypeId::from_index(j), l + 1);
            for _ in 0..nj {
                let c = rng.categorical(q);
                x.add(ClassId::from_index(c), TypeId::from_index(j), 1);
            }
        }
        if ctx.event.partition.class_of_matrix(level, &x)? == i {
            return Ok((w, x));
        }
    }
}

fn draw_base_tree(t: TypeId, i: ClassId, rng: &mut RngStream, ctx: &ConditionedModel) -> Result<TypedTree> {
    if ctx.table.base_height() == 0 {
        return Ok(TypedTree::leaf(t));
    }
    let law = ctx
        .conditional
        .as_ref()
        .and_then(|c| c.base(t, i))
        .filter(|b| !b.trees.is_empty())
        .ok_or_else(|| Error::unsupported("base-layer draws need the enumerated base law"))?;
    Ok(law.trees[rng.search_cumulative(&law.cumulative)].clone())
}

/// A tree drawn from the conditioned law of class `i` at layer `l`.
pub fn sample_conditioned_class(
    t: TypeId,
    l: usize,
    i: ClassId,
    rng: &mut RngStream,
    ctx: &ConditionedModel,
) -> Result<TypedTree> {
    ctx.require_possible(t, l, i)?;
    let base_layer = ctx.table.base_layer();
    let mut arena = Arena::new();
    let root = arena.push(t);
    // base-layer subtrees are grafted after the sweep
    let mut grafts: Vec<(usize, TypedTree)> = Vec::new();
    let mut stack = vec![(root, l, i, rng.split())];
    while let Some((node, level, class, mut stream)) = stack.pop() {
        let ty = arena.types[node];
        if level == base_layer {
            let tree = draw_base_tree(ty, class, &mut stream, ctx)?;
            if !tree.is_leaf() {
                grafts.push((node, tree));
            }
            continue;
        }
        let (_, x) = draw_wx_conditioned(ty, level, class, &mut stream, ctx)?;
        let mut labels: Vec<(ClassId, TypeId)> = Vec::with_capacity(x.total() as usize);
        for c in 0..x.m() {
            for j in 0..x.theta() {
                for _ in 0..x.get(c, j) {
                    labels.push((ClassId::from_index(c), TypeId::from_index(j)));
                }
            }
        }
        stream.shuffle(&mut labels);
        for (c, j) in labels {
            let kid = arena.push(j);
            arena.children[node].push(kid);
            stack.push((kid, level + 1, c, stream.split()));
        }
    }
    let tree = if grafts.is_empty() {
        arena.into_tree()
    } else {
        let mut slots: Vec<Option<TypedTree>> = vec![None; arena.types.len()];
        for (node, tree) in grafts {
            slots[node] = Some(tree);
        }
        let mut built: Vec<Option<TypedTree>> = (0..arena.types.len()).map(|_| None).collect();
        for idx in (0..arena.types.len()).rev() {
            built[idx] = Some(match slots[idx].take() {
                Some(tree) => tree,
                None => TypedTree::node(
                    arena.types[idx],
                    arena.children[idx]
                        .iter()
                        .map(|&c| built[c].take().expect("child built"))
                        .collect(),
                ),
            });
        }
        built[0].take().expect("root")
    };
    let level = ctx.height() - l;
    let got = ctx.event.partition.classify(&tree, level)?;
    if got != i {
        return Err(Error::Postcondition(format!(
            "tree {tree} drawn for class {i} classifies as {got}"
        )));
    }
    Ok(tree)
}

/// Class drawn with the layer's class probabilities, then a tree of that class.
pub fn sample_tilde(
    t: TypeId,
    l: usize,
    rng: &mut RngStream,
    ctx: &ConditionedModel,
) -> Result<(ClassId, TypedTree)> {
    let row = ctx.table.row(t, l);
    let class = ClassId::from_index(rng.categorical(row));
    let tree = sample_conditioned_class(t, l, class, rng, ctx)?;
    Ok((class, tree))
}

/// What each draw of a batch conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Unconditioned,
    Class(ClassId),
    Mixture,
}

/// `n` root draws at level 0, draw `idx` seeded by `RngStream::new(seed).fork(idx)`.
/// `threads = 0` uses the global pool.
pub fn sample_batch(
    ctx: &ConditionedModel,
    root: TypeId,
    target: Target,
    n: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<TypedTree>> {
    if let Target::Class(i) = target {
        ctx.require_possible(root, 0, i)?;
    }
    let master = RngStream::new(seed);
    let one = |idx: usize| -> Result<TypedTree> {
        let mut rng = master.fork(idx as u64);
        match target {
            Target::Unconditioned => sample_unconditioned(root, 0, &mut rng, &ctx.params),
            Target::Class(i) => sample_conditioned_class(root, 0, i, &mut rng, ctx),
            Target::Mixture => sample_tilde(root, 0, &mut rng, ctx).map(|(_, t)| t),
        }
    };
    let run = || (0..n).into_par_iter().map(one).collect::<Result<Vec<_>>>();
    if threads == 0 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
        pool.install(run)
    }
}

/// Unconditioned batch without any class tables.
pub fn sample_unconditioned_batch(
    params: &GwMeasureParams,
    root: TypeId,
    n: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<TypedTree>> {
    let master = RngStream::new(seed);
    let run = || {
        (0..n)
            .into_par_iter()
            .map(|idx| sample_unconditioned(root, 0, &mut master.fork(idx as u64), params))
            .collect::<Result<Vec<_>>>()
    };
    if threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?
            .install(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::builders::*;
    use crate::offspring::{Law, OffspringModel};

    fn half_zero_two(k: usize) -> GwMeasureParams {
        let law = Law::table(1, vec![(vec![0], 0.5), (vec![2], 0.5)]).unwrap();
        GwMeasureParams::new(k, OffspringModel::homogeneous(vec![law]).unwrap()).unwrap()
    }

    fn one() -> TypeId {
        TypeId::from_index(0)
    }

    #[test]
    fn top_level_is_a_leaf() {
        let p = half_zero_two(2);
        let mut rng = RngStream::new(1);
        for _ in 0..50 {
            assert!(sample_unconditioned(one(), 2, &mut rng, &p).unwrap().is_leaf());
        }
    }

    #[test]
    fn leaf_frequency_at_height_one() {
        let p = half_zero_two(1);
        let mut rng = RngStream::new(5);
        let n = 100_000;
        let leaves = (0..n)
            .filter(|_| sample_unconditioned(one(), 0, &mut rng, &p).unwrap().is_leaf())
            .count();
        let sd = (0.25 / n as f64).sqrt();
        assert!((leaves as f64 / n as f64 - 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn conditioned_draws_hit_their_class() {
        let p = half_zero_two(3);
        let event = survival_event(1, 3).unwrap();
        let ctx = ConditionedModel::build(event, p).unwrap();
        let mut rng = RngStream::new(11);
        for class in [ClassId::from_index(0), ClassId::from_index(1)] {
            for _ in 0..2000 {
                let tree = sample_conditioned_class(one(), 0, class, &mut rng, &ctx).unwrap();
                let alive = tree.height() == 3;
                assert_eq!(alive, class == ClassId::from_index(0));
            }
        }
    }

    #[test]
    fn impossible_class_is_reported() {
        let law = Law::table(1, vec![(vec![1], 0.5), (vec![2], 0.5)]).unwrap();
        let p = GwMeasureParams::new(2, OffspringModel::homogeneous(vec![law]).unwrap()).unwrap();
        let ctx = ConditionedModel::build(survival_event(1, 2).unwrap(), p).unwrap();
        let mut rng = RngStream::new(0);
        let r = sample_conditioned_class(one(), 0, ClassId::from_index(1), &mut rng, &ctx);
        assert!(matches!(r, Err(Error::ImpossibleEvent { ty: 1, level: 0, class: 2 })));
    }

    #[test]
    fn rejection_refuses_rare_classes() {
        let k = 30;
        let params = GwMeasureParams::new(
            k,
            OffspringModel::poisson_thinning([1.0, 1.5], [1.0, 1e-9]).unwrap(),
        )
        .unwrap();
        let ctx = ConditionedModel::closed_form(mutant_at_generation(k).unwrap(), params).unwrap();
        let mut rng = RngStream::new(0);
        let r = draw_wx_conditioned(TypeId::from_index(1), k - 1, ClassId::from_index(0), &mut rng, &ctx);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn matrices_respect_column_sums_and_class() {
        let params = GwMeasureParams::new(
            4,
            OffspringModel::poisson_thinning([1.0, 1.5], [1.0, 0.3]).unwrap(),
        )
        .unwrap();
        let event = spontaneous_mutation_4class(4).unwrap();
        let ctx = ConditionedModel::build(event, params).unwrap();
        let mut rng = RngStream::new(3);
        for t in TypeId::all(2) {
            for l in 0..4 {
                for i in 0..4 {
                    let class = ClassId::from_index(i);
                    if ctx.prob(t, l, class) == 0.0 {
                        continue;
                    }
                    for _ in 0..200 {
                        let (w, x) = draw_wx_conditioned(t, l, class, &mut rng, &ctx).unwrap();
                        assert_eq!(x.column_sums(), w.0);
                        assert_eq!(ctx.event.partition.class_of_matrix(4 - l, &x).unwrap(), class);
                    }
                }
            }
        }
    }

    #[test]
    fn batches_do_not_depend_on_thread_count() {
        let p = half_zero_two(3);
        let ctx = ConditionedModel::build(survival_event(1, 3).unwrap(), p).unwrap();
        let target = Target::Class(ClassId::from_index(0));
        let a = sample_batch(&ctx, one(), target, 64, 99, 1).unwrap();
        let b = sample_batch(&ctx, one(), target, 64, 99, 4).unwrap();
        assert_eq!(a, b);
        let c = sample_batch(&ctx, one(), target, 64, 100, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn base_layer_draws_by_enumeration() {
        let p = half_zero_two(4);
        let ctx = ConditionedModel::build(exact_height(1, 3).unwrap(), p).unwrap();
        let mut rng = RngStream::new(8);
        for _ in 0..2000 {
            let tree = sample_conditioned_class(one(), 0, ClassId::from_index(0), &mut rng, &ctx)
                .unwrap();
            assert_eq!(tree.height(), 3);
        }
    }
}
