//! The unconditioned level-dependent Galton-Watson measure `P_{lk}^t` on
//! ordered trees, and exhaustive enumeration of its support.

use crate::combinatorics::{distinct_permutations, multinomial_coefficient};
use crate::error::{Error, Result};
use crate::offspring::OffspringModel;
use crate::tree::{count_children, TypeId, TypedTree};
use crate::weight::Weight;

/// Default bound on the number of trees an enumeration may produce.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Total height `k` together with the offspring laws used at levels `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GwMeasureParams {
    pub height: usize,
    pub offspring: OffspringModel,
}

impl GwMeasureParams {
    pub fn new(height: usize, offspring: OffspringModel) -> Result<Self> {
        offspring.check_levels(height)?;
        Ok(GwMeasureParams { height, offspring })
    }

    pub fn theta(&self) -> usize {
        self.offspring.theta()
    }
}

/// `P_{lk}^t(tree)`: `P(W = N) / D(N)` times the child masses one level down.
pub fn gw_probability<W: Weight>(
    tree: &TypedTree,
    t: TypeId,
    l: usize,
    params: &GwMeasureParams,
) -> Result<W> {
    if tree.ty != t {
        return Err(Error::domain(format!(
            "root type {} differs from requested type {t}",
            tree.ty
        )));
    }
    if l > params.height {
        return Err(Error::domain(format!("level {l} above height {}", params.height)));
    }
    let room = params.height - l;
    if tree.height() > room {
        return Err(Error::domain(format!(
            "tree of height {} does not fit below level {l} of a height-{} model",
            tree.height(),
            params.height
        )));
    }
    gw_mass(tree, l, params)
}

fn gw_mass<W: Weight>(tree: &TypedTree, l: usize, params: &GwMeasureParams) -> Result<W> {
    if l == params.height {
        return Ok(W::one());
    }
    let n = count_children(tree, params.theta())?;
    let law = params.offspring.law(tree.ty, l)?;
    let point: W = law.point_mass_w(&n.0)?;
    if point.is_zero() {
        return Ok(point);
    }
    let mut mass = point / W::from_count(&multinomial_coefficient(&n.0));
    for child in &tree.children {
        mass = mass * gw_mass(child, l + 1, params)?;
        if mass.is_zero() {
            break;
        }
    }
    Ok(mass)
}

/// Number of positive-mass trees in `T_{k-l}^t` for every `(t, l)`, as `f64`.
/// Errors if a law has infinite support.
pub fn count_trees(params: &GwMeasureParams, from_level: usize) -> Result<Vec<Vec<f64>>> {
    let theta = params.theta();
    let k = params.height;
    let mut counts: Vec<Vec<f64>> = vec![vec![0.0; k + 1]; theta];
    for row in counts.iter_mut() {
        row[k] = 1.0;
    }
    for l in (from_level..k).rev() {
        for t in TypeId::all(theta) {
            let law = params.offspring.law(t, l)?;
            if !law.is_finite() {
                return Err(Error::unsupported(format!(
                    "enumeration needs finite-support offspring (type {t}, level {l})"
                )));
            }
            let support = law.support::<f64>()?;
            let mut total = 0.0;
            for (n, w) in &support.points {
                if *w == 0.0 {
                    continue;
                }
                let orderings = multinomial_coefficient(&n.0);
                let mut c = <f64 as Weight>::from_count(&orderings);
                for (j, &nj) in n.0.iter().enumerate() {
                    c *= counts[j][l + 1].powi(nj as i32);
                }
                total += c;
            }
            counts[t.index()][l] = total;
        }
    }
    Ok(counts)
}

/// Every tree of `T_{k-l}^t` with positive `P_{lk}^t` mass, with that mass,
/// refusing when more than `limit` trees would be produced.
pub fn enumerate_trees_from<W: Weight>(
    t: TypeId,
    l: usize,
    params: &GwMeasureParams,
    limit: f64,
) -> Result<Vec<(TypedTree, W)>> {
    let theta = params.theta();
    if t.index() >= theta {
        return Err(Error::domain(format!("type {t} exceeds theta = {theta}")));
    }
    if l > params.height {
        return Err(Error::domain(format!("level {l} above height {}", params.height)));
    }
    let counts = count_trees(params, l)?;
    let mut total = 0.0;
    for (level, _) in (l..=params.height).enumerate() {
        for row in &counts {
            total += row[l + level];
        }
    }
    if total > limit {
        return Err(Error::EnumerationTooLarge {
            estimate: total,
            limit,
        });
    }
    let k = params.height;
    // trees[j][h] lists the trees rooted at level h with type j
    let mut trees: Vec<Vec<Vec<(TypedTree, W)>>> = vec![vec![Vec::new(); k + 1]; theta];
    for (j, row) in trees.iter_mut().enumerate() {
        row[k].push((TypedTree::leaf(TypeId::from_index(j)), W::one()));
    }
    for h in (l..k).rev() {
        for ty in TypeId::all(theta) {
            let law = params.offspring.law(ty, h)?;
            let support = law.support::<W>()?;
            let mut out = Vec::new();
            for (n, w) in &support.points {
                if w.is_zero() {
                    continue;
                }
                let base = w.clone() / W::from_count(&multinomial_coefficient(&n.0));
                for order in distinct_permutations(&n.expand()) {
                    let lists: Vec<&[(TypedTree, W)]> =
                        order.iter().map(|c| trees[c.index()][h + 1].as_slice()).collect();
                    for_each_product(&lists, |picks| {
                        let mut mass = base.clone();
                        let mut children = Vec::with_capacity(picks.len());
                        for (tree, m) in picks {
                            mass = mass * m.clone();
                            children.push(tree.clone());
                        }
                        out.push((TypedTree::node(ty, children), mass));
                    });
                }
            }
            trees[ty.index()][h] = out;
        }
    }
    Ok(std::mem::take(&mut trees[t.index()][l]))
}

/// `enumerate_trees_from` at level 0 with the default limit.
pub fn enumerate_trees<W: Weight>(t: TypeId, params: &GwMeasureParams) -> Result<Vec<(TypedTree, W)>> {
    enumerate_trees_from(t, 0, params, ENUMERATION_LIMIT)
}

/// Calls `f` with one element from each list, for every combination.
fn for_each_product<'a, T>(lists: &[&'a [T]], mut f: impl FnMut(&[&'a T])) {
    if lists.iter().any(|l| l.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; lists.len()];
    let mut picks: Vec<&T> = lists.iter().map(|l| &l[0]).collect();
    loop {
        f(&picks);
        let mut d = lists.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < lists[d].len() {
                picks[d] = &lists[d][idx[d]];
                break;
            }
            idx[d] = 0;
            picks[d] = &lists[d][0];
        }
    }
}
