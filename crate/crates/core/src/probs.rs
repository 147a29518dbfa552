//! Class probabilities `p[t][l][i]` by the level recursion, the conditional
//! laws of the child count matrix, and the closed-form Poisson-thinning path.
//!
//! Layer `l` runs over `0..=k - k0`; the class at layer `l` refers to the
//! partition of `T_{k-l}`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::combinatorics::{compositions, multinomial_pmf};
use crate::error::{Error, Result};
use crate::events::{builders, BaseClassifier, ClassId, CountMatrix, Event};
use crate::format::fmt_g;
use crate::measure::{enumerate_trees_from, GwMeasureParams, ENUMERATION_LIMIT};
use crate::offspring::Law;
use crate::tree::{TypeCountVector, TypeId, TypedTree};
use crate::weight::Weight;

/// Truncation tail above which a table carries an accuracy warning.
pub const TAIL_WARNING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbTable<W> {
    theta: usize,
    m: usize,
    height: usize,
    base_height: usize,
    /// `p[t][l][i]`, all 0-based.
    p: Vec<Vec<Vec<W>>>,
    /// Largest offspring mass removed by truncation in any law used.
    pub truncation_tail: f64,
    pub warnings: Vec<String>,
}

impl<W: Weight> ClassProbTable<W> {
    pub fn theta(&self) -> usize {
        self.theta
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Total tree height `k`.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn base_height(&self) -> usize {
        self.base_height
    }

    /// Index `k - k0` of the base layer.
    pub fn base_layer(&self) -> usize {
        self.height - self.base_height
    }

    pub fn get(&self, t: TypeId, l: usize, i: ClassId) -> &W {
        &self.p[t.index()][l][i.index()]
    }

    /// `p[t][l][1..=m]`.
    pub fn row(&self, t: TypeId, l: usize) -> &[W] {
        &self.p[t.index()][l]
    }

    /// CSV with header `t,l,i,p`, values in `%.12g` form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,l,i,p\n");
        for (t, rows) in self.p.iter().enumerate() {
            for (l, row) in rows.iter().enumerate() {
                for (i, v) in row.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{},{}", t + 1, l, i + 1, fmt_g(v.to_f64()));
                }
            }
        }
        out
    }

    pub fn to_f64(&self) -> ClassProbTable<f64> {
        ClassProbTable {
            theta: self.theta,
            m: self.m,
            height: self.height,
            base_height: self.base_height,
            p: self
                .p
                .iter()
                .map(|rows| rows.iter().map(|r| r.iter().map(Weight::to_f64).collect()).collect())
                .collect(),
            truncation_tail: self.truncation_tail,
            warnings: self.warnings.clone(),
        }
    }
}

/// Law of `(W, X)` given `X` in the class set, as an explicit support.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionalLaw {
    pub points: Vec<(TypeCountVector, CountMatrix)>,
    /// Conditional probabilities, summing to 1.
    pub probs: Vec<f64>,
    /// Running sums of `probs`.
    pub cumulative: Vec<f64>,
}

impl ConditionalLaw {
    fn from_masses(entries: Vec<(TypeCountVector, CountMatrix, f64)>) -> Self {
        let total: f64 = entries.iter().map(|e| e.2).sum();
        let mut law = ConditionalLaw::default();
        let mut acc = 0.0;
        for (w, x, mass) in entries {
            let p = if total > 0.0 { mass / total } else { 0.0 };
            acc += p;
            law.points.push((w, x));
            law.probs.push(p);
            law.cumulative.push(acc);
        }
        law
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Trees of one base class, with their renormalized masses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaseLaw {
    pub trees: Vec<TypedTree>,
    pub cumulative: Vec<f64>,
}

/// Conditional count-matrix laws for every `(t, l, i)` above the base layer,
/// and, when `k0 > 0`, the conditioned base-layer tree laws.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalOffspringTable {
    /// `laws[t][l][i]` for `l < k - k0`.
    laws: Vec<Vec<Vec<ConditionalLaw>>>,
    /// `base[t][i]`; empty when `k0 = 0`.
    base: Vec<Vec<BaseLaw>>,
}

impl ConditionalOffspringTable {
    pub fn law(&self, t: TypeId, l: usize, i: ClassId) -> Option<&ConditionalLaw> {
        self.laws.get(t.index())?.get(l)?.get(i.index())
    }

    pub fn base(&self, t: TypeId, i: ClassId) -> Option<&BaseLaw> {
        self.base.get(t.index())?.get(i.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Keep the conditional `(W, X)` laws (needed by the sampler).
    pub conditional: bool,
    /// Bound on the base-layer enumeration when `k0 > 0`.
    pub enumeration_limit: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            conditional: true,
            enumeration_limit: ENUMERATION_LIMIT,
        }
    }
}

/// Output of the enumeration engine.
#[derive(Debug, Clone)]
pub struct ProbsBuild<W> {
    pub table: ClassProbTable<W>,
    pub conditional: Option<ConditionalOffspringTable>,
}

fn check_shapes(event: &Event, params: &GwMeasureParams) -> Result<()> {
    let part = &event.partition;
    if part.theta() != params.theta() {
        return Err(Error::domain(format!(
            "partition has theta = {} but the offspring model has theta = {}",
            part.theta(),
            params.theta()
        )));
    }
    if params.height < part.base_height() {
        return Err(Error::domain(format!(
            "height {} is below the base height {}",
            params.height,
            part.base_height()
        )));
    }
    if params.height != event.height {
        return Err(Error::domain(format!(
            "event is read at height {} but the model has height {}",
            event.height, params.height
        )));
    }
    Ok(())
}

/// Base layer `l = k - k0`: class masses of `T_{k0}` and, if asked, the
/// per-class tree lists.
pub fn base_probs<W: Weight>(
    event: &Event,
    params: &GwMeasureParams,
    options: &BuildOptions,
) -> Result<(Vec<Vec<W>>, Vec<Vec<BaseLaw>>)> {
    check_shapes(event, params)?;
    let part = &event.partition;
    let (m, theta, k0) = (part.m(), part.theta(), part.base_height());
    let layer = params.height - k0;
    let mut probs = vec![vec![W::zero(); m]; theta];
    let mut laws = Vec::new();
    if k0 == 0 {
        for t in TypeId::all(theta) {
            let class = part.base_class(&TypedTree::leaf(t), 0)?;
            probs[t.index()][class.index()] = W::one();
        }
        return Ok((probs, laws));
    }
    if !(layer..params.height).all(|l| {
        TypeId::all(theta).all(|t| params.offspring.law(t, l).is_ok_and(Law::is_finite))
    }) {
        return Err(Error::unsupported(
            "a base height above 0 needs finite-support offspring below the base layer",
        ));
    }
    for t in TypeId::all(theta) {
        let trees = enumerate_trees_from::<W>(t, layer, params, options.enumeration_limit)?;
        let mut per_class: Vec<Vec<(TypedTree, W)>> = vec![Vec::new(); m];
        for (tree, mass) in trees {
            let c = part.base_class(&tree, k0)?;
            probs[t.index()][c.index()] = probs[t.index()][c.index()].clone() + mass.clone();
            per_class[c.index()].push((tree, mass));
        }
        if options.conditional {
            let row = per_class
                .into_iter()
                .map(|list| {
                    let total: f64 = list.iter().map(|(_, w)| w.to_f64()).sum();
                    let mut acc = 0.0;
                    let mut law = BaseLaw::default();
                    for (tree, w) in list {
                        acc += w.to_f64() / total;
                        law.trees.push(tree);
                        law.cumulative.push(acc);
                    }
                    law
                })
                .collect();
            laws.push(row);
        }
    }
    Ok((probs, laws))
}

struct StepOutput<W> {
    probs: Vec<W>,
    laws: Vec<Vec<(TypeCountVector, CountMatrix, f64)>>,
    tail: f64,
}

/// One type's row of layer `l` from layer `l + 1` (`q[j][i]`).
fn step_type<W: Weight>(
    event: &Event,
    params: &GwMeasureParams,
    t: TypeId,
    l: usize,
    q: &[Vec<W>],
    keep: bool,
) -> Result<StepOutput<W>> {
    let part = &event.partition;
    let m = part.m();
    let level = params.height - l;
    let law = params.offspring.law(t, l)?;
    let support = law.support::<W>()?;
    let mut out = StepOutput {
        probs: vec![W::zero(); m],
        laws: vec![Vec::new(); if keep { m } else { 0 }],
        tail: support.tail,
    };
    let allowed: Vec<Vec<bool>> = q
        .iter()
        .map(|row| row.iter().map(|v| !v.is_zero()).collect())
        .collect();
    for (n, w) in &support.points {
        if w.is_zero() {
            continue;
        }
        // per column: compositions with their multinomial masses
        let columns: Vec<Vec<(Vec<u32>, W)>> = n
            .0
            .iter()
            .enumerate()
            .map(|(j, &nj)| {
                compositions(nj, &allowed[j])
                    .into_iter()
                    .map(|c| {
                        let mass = multinomial_pmf(&c, &q[j]);
                        (c, mass)
                    })
                    .filter(|(_, mass)| !mass.is_zero())
                    .collect()
            })
            .collect();
        if columns.iter().any(Vec::is_empty) {
            continue;
        }
        let mut idx = vec![0usize; columns.len()];
        'matrices: loop {
            let mut mass = w.clone();
            let cols: Vec<Vec<u32>> = idx
                .iter()
                .zip(&columns)
                .map(|(&k, col)| {
                    mass = mass.clone() * col[k].1.clone();
                    col[k].0.clone()
                })
                .collect();
            let x = CountMatrix::from_columns(m, &cols);
            let class = part.class_of_matrix(level, &x)?;
            if keep {
                out.laws[class.index()].push((n.clone(), x, mass.to_f64()));
            }
            out.probs[class.index()] = out.probs[class.index()].clone() + mass;
            // odometer over columns
            let mut d = columns.len();
            loop {
                if d == 0 {
                    break 'matrices;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < columns[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
    Ok(out)
}

/// Layer `l` of the table from layer `l + 1`, for every type in parallel.
pub fn class_probs_step<W: Weight>(
    next: &[Vec<W>],
    event: &Event,
    params: &GwMeasureParams,
    l: usize,
) -> Result<Vec<Vec<W>>> {
    check_shapes(event, params)?;
    let rows: Result<Vec<_>> = (0..params.theta())
        .into_par_iter()
        .map(|j| step_type(event, params, TypeId::from_index(j), l, next, false).map(|o| o.probs))
        .collect();
    rows
}

/// Full table by the enumeration engine.
pub fn build<W: Weight>(
    event: &Event,
    params: &GwMeasureParams,
    options: &BuildOptions,
) -> Result<ProbsBuild<W>> {
    check_shapes(event, params)?;
    let part = &event.partition;
    let theta = part.theta();
    let top = params.height - part.base_height();
    let (base, base_laws) = base_probs::<W>(event, params, options)?;
    let mut p: Vec<Vec<Vec<W>>> = base.into_iter().map(|row| vec![row; top + 1]).collect();
    let mut laws: Vec<Vec<Vec<ConditionalLaw>>> = vec![vec![Vec::new(); top]; theta];
    let mut tail: f64 = 0.0;
    for l in (0..top).rev() {
        let q: Vec<Vec<W>> = p.iter().map(|rows| rows[l + 1].clone()).collect();
        let outs: Result<Vec<StepOutput<W>>> = (0..theta)
            .into_par_iter()
            .map(|j| step_type(event, params, TypeId::from_index(j), l, &q, options.conditional))
            .collect();
        for (j, out) in outs?.into_iter().enumerate() {
            tail = tail.max(out.tail);
            p[j][l] = out.probs;
            if options.conditional {
                laws[j][l] = out.laws.into_iter().map(ConditionalLaw::from_masses).collect();
            }
        }
    }
    let mut warnings = Vec::new();
    if tail > TAIL_WARNING {
        warnings.push(format!(
            "offspring truncation removed mass {tail:.3e} before renormalizing"
        ));
    }
    Ok(ProbsBuild {
        table: ClassProbTable {
            theta,
            m: part.m(),
            height: params.height,
            base_height: part.base_height(),
            p,
            truncation_tail: tail,
            warnings,
        },
        conditional: options.conditional.then_some(ConditionalOffspringTable {
            laws,
            base: base_laws,
        }),
    })
}

/// Poisson-thinning parameters `(mu, p)` of both types when the model is the
/// two-type thinning model at every level below `height`.
pub fn thinning_params(params: &GwMeasureParams) -> Option<([f64; 2], [f64; 2])> {
    if params.theta() != 2 {
        return None;
    }
    let mut mu = [0.0; 2];
    let mut pm = [0.0; 2];
    for t in TypeId::all(2) {
        let first = match params.offspring.law(t, 0).ok()? {
            Law::Poisson(law) => law.thinning_params()?,
            Law::Table(_) => return None,
        };
        for l in 1..params.height {
            match params.offspring.law(t, l).ok()? {
                Law::Poisson(law) if law.thinning_params() == Some(first) => {}
                _ => return None,
            }
        }
        mu[t.index()] = first.0;
        pm[t.index()] = first.1;
    }
    Some((mu, pm))
}

fn is_mutant_event(event: &Event) -> bool {
    let part = &event.partition;
    part.m() == 2
        && part.theta() == 2
        && part.base_height() == 0
        && *part.base() == BaseClassifier::ByLeafType(vec![ClassId::from_index(0), ClassId::from_index(1)])
        && part.level_overrides().is_empty()
        && part.default_predicates() == builders::mutant_predicates().as_slice()
}

/// One layer of the closed-form recursion: `next[t][i]` is layer `l + 1`.
/// `p[t][2] = exp(-mu_t (p_t q_1(1) + (1 - p_t) q_2(1)))`, `p[t][1] = 1 - p[t][2]`.
pub fn closed_form_poisson_step(next: &[[f64; 2]; 2], mu: [f64; 2], pm: [f64; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for t in 0..2 {
        let x = mu[t] * (next[0][0] * pm[t] + next[1][0] * (1.0 - pm[t]));
        out[t] = [-(-x).exp_m1(), (-x).exp()];
    }
    out
}

/// Full table of the mutant event under the thinning model by the closed form.
pub fn closed_form_table(event: &Event, params: &GwMeasureParams) -> Result<ClassProbTable<f64>> {
    check_shapes(event, params)?;
    if !is_mutant_event(event) {
        return Err(Error::domain(
            "the closed form needs the two-class mutant event",
        ));
    }
    let (mu, pm) = thinning_params(params)
        .ok_or_else(|| Error::domain("the closed form needs the two-type Poisson thinning model"))?;
    let k = params.height;
    let mut layers = vec![[[0.0; 2]; 2]; k + 1];
    layers[k] = [[1.0, 0.0], [0.0, 1.0]];
    for l in (0..k).rev() {
        layers[l] = closed_form_poisson_step(&layers[l + 1], mu, pm);
    }
    let p = (0..2)
        .map(|t| layers.iter().map(|layer| layer[t].to_vec()).collect())
        .collect();
    Ok(ClassProbTable {
        theta: 2,
        m: 2,
        height: k,
        base_height: 0,
        p,
        truncation_tail: 0.0,
        warnings: Vec::new(),
    })
}

/// Root of `s = exp(mu (s - 1))` in `(0, 1)` for `mu > 1`; 1 otherwise.
pub fn extinction_probability(mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::domain(format!("extinction probability needs mu > 0 (got {mu})")));
    }
    if mu <= 1.0 {
        return Ok(1.0);
    }
    // Newton from 0 increases monotonically to the smaller root (convex map).
    let mut s = 0.0f64;
    for _ in 0..200 {
        let e = (mu * (s - 1.0)).exp();
        let next = s - (s - e) / (1.0 - mu * e);
        if (next - s).abs() < 1e-15 {
            return Ok(next);
        }
        s = next;
    }
    Ok(s)
}

/// Probabilities, conditional laws and inputs bundled for the sampler and
/// the moment analysis.
#[derive(Debug, Clone)]
pub struct ConditionedModel {
    pub event: Event,
    pub params: GwMeasureParams,
    pub table: ClassProbTable<f64>,
    pub conditional: Option<ConditionalOffspringTable>,
}

impl ConditionedModel {
    /// Enumeration engine with conditional laws.
    pub fn build(event: Event, params: GwMeasureParams) -> Result<Self> {
        let built = build::<f64>(&event, &params, &BuildOptions::default())?;
        Ok(ConditionedModel {
            event,
            params,
            table: built.table,
            conditional: built.conditional,
        })
    }

    /// Closed-form table, no conditional laws.
    pub fn closed_form(event: Event, params: GwMeasureParams) -> Result<Self> {
        let table = closed_form_table(&event, &params)?;
        Ok(ConditionedModel {
            event,
            params,
            table,
            conditional: None,
        })
    }

    pub fn m(&self) -> usize {
        self.table.m()
    }

    pub fn theta(&self) -> usize {
        self.table.theta()
    }

    pub fn height(&self) -> usize {
        self.table.height()
    }

    pub fn prob(&self, t: TypeId, l: usize, i: ClassId) -> f64 {
        *self.table.get(t, l, i)
    }

    /// Error unless `p[t][l][i] > 0`.
    pub fn require_possible(&self, t: TypeId, l: usize, i: ClassId) -> Result<()> {
        if i.index() >= self.m() {
            return Err(Error::domain(format!("class {i} exceeds m = {}", self.m())));
        }
        if t.index() >= self.theta() {
            return Err(Error::domain(format!("type {t} exceeds theta = {}", self.theta())));
        }
        if l > self.table.base_layer() {
            return Err(Error::domain(format!(
                "layer {l} beyond the base layer {}",
                self.table.base_layer()
            )));
        }
        if self.prob(t, l, i) > 0.0 {
            Ok(())
        } else {
            Err(Error::ImpossibleEvent {
                ty: t.get(),
                level: l,
                class: i.get(),
            })
        }
    }
}
