//! Moments of the conditioned tree: conditional offspring means, the
//! level-dependent mean matrices of the resulting `m * theta`-type process,
//! expected generation compositions, and the mutation-model figure data.
//!
//! A (class, type) pair `(i, t)` has index `(t - 1) * m + (i - 1)`; for two
//! classes and two types the order is (1,1), (2,1), (1,2), (2,2). Matrix
//! columns are parents, rows are children.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::events::{builders, ClassId};
use crate::format::fmt_g;
use crate::measure::GwMeasureParams;
use crate::offspring::OffspringModel;
use crate::probs::{extinction_probability, ConditionedModel};
use crate::tree::TypeId;

/// Index of the pair `(class, type)`.
pub fn pair_index(class: ClassId, ty: TypeId, m: usize) -> usize {
    ty.index() * m + class.index()
}

fn check_layer(ctx: &ConditionedModel, l: usize) -> Result<()> {
    if l >= ctx.table.base_layer() {
        return Err(Error::domain(format!(
            "offspring means are defined below the base layer {} (got {l})",
            ctx.table.base_layer()
        )));
    }
    Ok(())
}

/// Mean of the flattened count matrix given class `i`, from the conditional table.
pub fn conditional_offspring_mean_generic(
    t: TypeId,
    l: usize,
    i: ClassId,
    ctx: &ConditionedModel,
) -> Result<Vec<f64>> {
    ctx.require_possible(t, l, i)?;
    check_layer(ctx, l)?;
    let (m, theta) = (ctx.m(), ctx.theta());
    let law = ctx
        .conditional
        .as_ref()
        .and_then(|c| c.law(t, l, i))
        .ok_or_else(|| Error::unsupported("no conditional table was built"))?;
    let mut mean = vec![0.0; m * theta];
    for ((_, x), p) in law.points.iter().zip(&law.probs) {
        for c in 0..m {
            for j in 0..theta {
                mean[j * m + c] += p * f64::from(x.get(c, j));
            }
        }
    }
    Ok(mean)
}

/// Closed form for Poisson offspring when the class predicate is "row `r` is
/// nonempty" or "row `r` is empty": rows are independent Poisson, so only
/// row `r` changes, to `E[X] / P(row r nonempty)` or to 0.
pub fn conditional_offspring_mean_fast(
    t: TypeId,
    l: usize,
    i: ClassId,
    ctx: &ConditionedModel,
) -> Result<Option<Vec<f64>>> {
    ctx.require_possible(t, l, i)?;
    check_layer(ctx, l)?;
    let (m, theta) = (ctx.m(), ctx.theta());
    let rates = match ctx.params.offspring.law(t, l)?.poisson_rates() {
        Some(r) => r.to_vec(),
        None => return Ok(None),
    };
    let level = ctx.height() - l;
    let Some((row, present)) = ctx.event.partition.predicates_at(level)[i.index()].row_presence(theta)
    else {
        return Ok(None);
    };
    let p = ctx.prob(t, l, i);
    let mut mean = vec![0.0; m * theta];
    for (j, rate) in rates.iter().enumerate() {
        let q = ctx.table.row(TypeId::from_index(j), l + 1);
        for c in 0..m {
            let unconditioned = rate * q[c];
            mean[j * m + c] = match (c == row, present) {
                (false, _) => unconditioned,
                (true, true) => unconditioned / p,
                (true, false) => 0.0,
            };
        }
    }
    Ok(Some(mean))
}

/// Fast path when it applies, otherwise the conditional table.
pub fn conditional_offspring_mean(
    t: TypeId,
    l: usize,
    i: ClassId,
    ctx: &ConditionedModel,
) -> Result<Vec<f64>> {
    match conditional_offspring_mean_fast(t, l, i, ctx)? {
        Some(mean) => Ok(mean),
        None => conditional_offspring_mean_generic(t, l, i, ctx),
    }
}

/// `M[l]` for `l` below the base layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrix {
    pub m: usize,
    pub theta: usize,
    /// `matrices[l][row][col]`.
    pub matrices: Vec<Vec<Vec<f64>>>,
    /// `unused[l][col]`: the parent pair has probability 0 at layer `l`.
    pub unused: Vec<Vec<bool>>,
}

impl MeanMatrix {
    pub fn dim(&self) -> usize {
        self.m * self.theta
    }

    pub fn levels(&self) -> usize {
        self.matrices.len()
    }
}

pub fn build_mean_matrices(ctx: &ConditionedModel) -> Result<MeanMatrix> {
    let (m, theta) = (ctx.m(), ctx.theta());
    let n = m * theta;
    let top = ctx.table.base_layer();
    let mut matrices = Vec::with_capacity(top);
    let mut unused = Vec::with_capacity(top);
    for l in 0..top {
        let mut mat = vec![vec![0.0; n]; n];
        let mut flags = vec![false; n];
        for t in TypeId::all(theta) {
            for i in 0..m {
                let class = ClassId::from_index(i);
                let col = pair_index(class, t, m);
                if ctx.prob(t, l, class) == 0.0 {
                    flags[col] = true;
                    continue;
                }
                let mean = conditional_offspring_mean(t, l, class, ctx)?;
                for (row, v) in mean.into_iter().enumerate() {
                    mat[row][col] = v;
                }
            }
        }
        matrices.push(mat);
        unused.push(flags);
    }
    Ok(MeanMatrix {
        m,
        theta,
        matrices,
        unused,
    })
}

/// Expected pair counts per generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationExpectation {
    pub m: usize,
    pub theta: usize,
    /// `e[l][pair]` for `l = 0..=levels`.
    pub e: Vec<Vec<f64>>,
}

impl GenerationExpectation {
    /// Expected number of type-`ty` nodes in generation `l`.
    pub fn type_count(&self, l: usize, ty: TypeId) -> f64 {
        self.e[l][ty.index() * self.m..(ty.index() + 1) * self.m].iter().sum()
    }

    /// Expected size of generation `l`.
    pub fn total(&self, l: usize) -> f64 {
        self.e[l].iter().sum()
    }
}

/// `e[0]` is the indicator of `start`; `e[l + 1] = M[l] e[l]`.
pub fn expected_counts(start: usize, mm: &MeanMatrix) -> Result<GenerationExpectation> {
    let n = mm.dim();
    if start >= n {
        return Err(Error::domain(format!("start pair {start} outside 0..{n}")));
    }
    if mm.unused.first().is_some_and(|u| u[start]) {
        return Err(Error::domain("the start pair has probability 0"));
    }
    let mut e = vec![vec![0.0; n]];
    e[0][start] = 1.0;
    for mat in &mm.matrices {
        let prev = e.last().expect("nonempty");
        let next: Vec<f64> = mat
            .iter()
            .map(|row| row.iter().zip(prev).map(|(a, b)| a * b).sum())
            .collect();
        e.push(next);
    }
    Ok(GenerationExpectation {
        m: mm.m,
        theta: mm.theta,
        e,
    })
}

/// Unconditioned `theta x theta` mean matrices for levels `0..height`.
pub fn unconditioned_mean_matrices(params: &GwMeasureParams) -> Result<MeanMatrix> {
    let theta = params.theta();
    let mut matrices = Vec::with_capacity(params.height);
    for l in 0..params.height {
        let mut mat = vec![vec![0.0; theta]; theta];
        for t in TypeId::all(theta) {
            for (j, v) in params.offspring.law(t, l)?.mean().into_iter().enumerate() {
                mat[j][t.index()] = v;
            }
        }
        matrices.push(mat);
    }
    Ok(MeanMatrix {
        m: 1,
        theta,
        unused: vec![vec![false; theta]; params.height],
        matrices,
    })
}

/// Parameters of the two-type mutation model and the figure ranges.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationParams {
    /// Poisson means of mutants (type 1) and non-mutants (type 2).
    pub mu: [f64; 2],
    /// Probability that a child of each type is a mutant.
    pub p: [f64; 2],
    pub figure1_max_k: usize,
    pub figure2_k: usize,
    pub figure3_k: Vec<usize>,
}

/// The checked-in parameter file.
pub const MUTATION_CONFIG: &str = include_str!("../configs/mutation.toml");

impl MutationParams {
    pub fn checked_in() -> Self {
        Self::from_toml(MUTATION_CONFIG).expect("checked-in mutation config parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(None, e.to_string()))
    }

    pub fn offspring(&self) -> Result<OffspringModel> {
        OffspringModel::poisson_thinning(self.mu, self.p)
    }

    /// Mutant event read at height `k` with closed-form class probabilities.
    pub fn model(&self, k: usize) -> Result<ConditionedModel> {
        let params = GwMeasureParams::new(k, self.offspring()?)?;
        ConditionedModel::closed_form(builders::mutant_at_generation(k)?, params)
    }
}

/// Mutant class, root not a mutant.
pub const ROOT_NONMUTANT_MUTANT_CLASS: usize = 2;
/// Mutant class, root a mutant.
pub const ROOT_MUTANT_MUTANT_CLASS: usize = 0;
/// No-mutant class, root not a mutant.
pub const ROOT_NONMUTANT_CLEAN_CLASS: usize = 3;

/// Expected number of mutants in each generation `0..=k`, starting from `start`.
pub fn mutant_curve(params: &MutationParams, k: usize, start: usize) -> Result<Vec<f64>> {
    let ctx = params.model(k)?;
    let e = expected_counts(start, &build_mean_matrices(&ctx)?)?;
    Ok((0..=k).map(|l| e.type_count(l, TypeId::from_index(0))).collect())
}

/// Expected generation sizes `0..=k` given no mutant in generation `k`,
/// root not a mutant.
pub fn clean_size_curve(params: &MutationParams, k: usize) -> Result<Vec<f64>> {
    let ctx = params.model(k)?;
    let e = expected_counts(ROOT_NONMUTANT_CLEAN_CLASS, &build_mean_matrices(&ctx)?)?;
    Ok((0..=k).map(|l| e.total(l)).collect())
}

/// `(k, P(mutant in generation k | mutant root), same for non-mutant root, survival)`.
pub fn figure1_rows(params: &MutationParams) -> Result<Vec<(usize, f64, f64, f64)>> {
    let kmax = params.figure1_max_k;
    let ctx = params.model(kmax)?;
    let survival = 1.0 - extinction_probability(params.mu[1])?;
    let c1 = ClassId::from_index(0);
    Ok((1..=kmax)
        .map(|k| {
            let l = kmax - k;
            (
                k,
                ctx.prob(TypeId::from_index(0), l, c1),
                ctx.prob(TypeId::from_index(1), l, c1),
                survival,
            )
        })
        .collect())
}

/// CSV files `(name, contents)` for figure 1, 2 or 3.
pub fn figure_data(figure: u32, params: &MutationParams) -> Result<Vec<(String, String)>> {
    match figure {
        1 => {
            let mut out = String::from("k,dashed_mutant_root,solid_nonmutant_root,dotted_survival\n");
            for (k, a, b, s) in figure1_rows(params)? {
                let _ = writeln!(out, "{k},{},{},{}", fmt_g(a), fmt_g(b), fmt_g(s));
            }
            Ok(vec![("figure1.csv".into(), out)])
        }
        2 => {
            let k = params.figure2_k;
            let solid = mutant_curve(params, k, ROOT_NONMUTANT_MUTANT_CLASS)?;
            let dashed = mutant_curve(params, k, ROOT_MUTANT_MUTANT_CLASS)?;
            let mut out = String::from("l,solid_nonmutant_root,dashed_mutant_root\n");
            for l in 0..=k {
                let _ = writeln!(out, "{l},{},{}", fmt_g(solid[l]), fmt_g(dashed[l]));
            }
            Ok(vec![("figure2.csv".into(), out)])
        }
        3 => {
            let mut files = Vec::new();
            for &k in &params.figure3_k {
                let conditioned = clean_size_curve(params, k)?;
                let plain = unconditioned_sizes(params, k)?;
                let mut out = String::from("l,conditioned,unconditioned\n");
                for l in 0..=k {
                    let _ = writeln!(out, "{l},{},{}", fmt_g(conditioned[l]), fmt_g(plain[l]));
                }
                files.push((format!("figure3_k{k}.csv"), out));
            }
            Ok(files)
        }
        other => Err(Error::domain(format!("no figure {other} (1, 2 or 3)"))),
    }
}

fn unconditioned_sizes(params: &MutationParams, k: usize) -> Result<Vec<f64>> {
    let gw = GwMeasureParams::new(k, params.offspring()?)?;
    let e = expected_counts(1, &unconditioned_mean_matrices(&gw)?)?;
    Ok((0..=k).map(|l| e.total(l)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::builders::*;
    use crate::offspring::Law;

    fn mutation_ctx(k: usize, enumerate: bool) -> ConditionedModel {
        let params = GwMeasureParams::new(
            k,
            OffspringModel::poisson_thinning([1.0, 1.5], [1.0, 0.05]).unwrap(),
        )
        .unwrap();
        let event = mutant_at_generation(k).unwrap();
        if enumerate {
            ConditionedModel::build(event, params).unwrap()
        } else {
            ConditionedModel::closed_form(event, params).unwrap()
        }
    }

    #[test]
    fn fast_and_generic_paths_agree() {
        let ctx = mutation_ctx(5, true);
        for t in TypeId::all(2) {
            for l in 0..5 {
                for i in 0..2 {
                    let class = ClassId::from_index(i);
                    if ctx.prob(t, l, class) == 0.0 {
                        continue;
                    }
                    let fast = conditional_offspring_mean_fast(t, l, class, &ctx).unwrap().unwrap();
                    let generic = conditional_offspring_mean_generic(t, l, class, &ctx).unwrap();
                    for (a, b) in fast.iter().zip(&generic) {
                        assert!((a - b).abs() < 1e-8, "t={t} l={l} i={i}: {fast:?} vs {generic:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn ratio_formula_for_class_one_mutants() {
        let ctx = mutation_ctx(6, false);
        let (mu, p) = ([1.0, 1.5], [1.0, 0.05]);
        let c1 = ClassId::from_index(0);
        for t in TypeId::all(2) {
            for l in 0..6 {
                let mean = conditional_offspring_mean(t, l, c1, &ctx).unwrap();
                let q11 = ctx.prob(TypeId::from_index(0), l + 1, c1);
                let expect = q11 * p[t.index()] * mu[t.index()] / ctx.prob(t, l, c1);
                assert!((mean[0] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_matrix_zero_pattern() {
        let ctx = mutation_ctx(6, false);
        let mm = build_mean_matrices(&ctx).unwrap();
        for l in 0..6 {
            let mat = &mm.matrices[l];
            // class-2 parents (columns 1 and 3) have no class-1 children (rows 0 and 2)
            for col in [1, 3] {
                for row in [0, 2] {
                    assert_eq!(mat[row][col], 0.0);
                }
            }
            // mutants only have mutant children
            assert_eq!(mat[2][0], 0.0);
            assert_eq!(mat[3][0], 0.0);
        }
        assert_eq!(mm.unused[5], vec![false; 4]);
    }

    #[test]
    fn single_type_trivial_event_gives_mean_powers() {
        let law = Law::table(1, vec![(vec![0], 0.2), (vec![1], 0.3), (vec![3], 0.5)]).unwrap();
        let mu = 0.3 + 1.5;
        let params = GwMeasureParams::new(5, OffspringModel::homogeneous(vec![law]).unwrap()).unwrap();
        let ctx = ConditionedModel::build(trivial(1, 5).unwrap(), params.clone()).unwrap();
        let e = expected_counts(0, &build_mean_matrices(&ctx).unwrap()).unwrap();
        let plain = expected_counts(0, &unconditioned_mean_matrices(&params).unwrap()).unwrap();
        for l in 0..=5 {
            let want = f64::powi(mu, l as i32);
            assert!((e.total(l) - want).abs() < 1e-9 * want);
            assert!((plain.total(l) - want).abs() < 1e-9 * want);
        }
    }

    #[test]
    fn start_indicator_at_level_zero() {
        let ctx = mutation_ctx(3, false);
        let e = expected_counts(2, &build_mean_matrices(&ctx).unwrap()).unwrap();
        assert_eq!(e.e[0], vec![0.0, 0.0, 1.0, 0.0]);
        assert!(expected_counts(7, &build_mean_matrices(&ctx).unwrap()).is_err());
    }

    #[test]
    fn checked_in_parameters() {
        let p = MutationParams::checked_in();
        assert_eq!(p.mu, [1.0, 1.5]);
        assert_eq!(p.p, [1.0, 1e-9]);
        assert_eq!(p.figure1_max_k, 100);
        assert_eq!(p.figure2_k, 60);
        assert_eq!(p.figure3_k, vec![60, 90]);
    }

    #[test]
    fn figure_files_have_headers_and_rows() {
        let p = MutationParams::checked_in();
        let f1 = figure_data(1, &p).unwrap();
        assert_eq!(f1[0].1.lines().count(), 101);
        for line in f1[0].1.lines().skip(1) {
            for v in line.split(',').skip(1) {
                let v: f64 = v.parse().unwrap();
                assert!((0.0..=1.0).contains(&v));
            }
        }
        let f2 = figure_data(2, &p).unwrap();
        assert_eq!(f2[0].1.lines().count(), 62);
        let f3 = figure_data(3, &p).unwrap();
        assert_eq!(f3.len(), 2);
        assert!(figure_data(4, &p).is_err());
    }
}
