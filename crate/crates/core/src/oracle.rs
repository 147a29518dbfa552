//! Brute-force check that conditioning the Galton-Watson law on a class and
//! the recursive construction give the same distribution over trees.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;

use crate::combinatorics::{multinomial_coefficient, multinomial_pmf};
use crate::error::{Error, Result};
use crate::events::{builders, ClassId, Event};
use crate::measure::{enumerate_trees_from, gw_probability, GwMeasureParams, ENUMERATION_LIMIT};
use crate::offspring::{Law, OffspringModel, OffspringTable, LevelLaw, TypeLaws};
use crate::probs::{build, BuildOptions, ClassProbTable};
use crate::tree::{count_children, TypeId, TypedTree};
use crate::weight::Weight;

/// Atoms keyed by tree text.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionOverTrees<W> {
    pub atoms: BTreeMap<String, W>,
}

impl<W: Weight> DistributionOverTrees<W> {
    pub fn new() -> Self {
        DistributionOverTrees {
            atoms: BTreeMap::new(),
        }
    }

    /// Adds `mass` to the atom of `tree`; zero masses are not stored.
    pub fn add(&mut self, tree: &TypedTree, mass: W) {
        if mass.is_zero() {
            return;
        }
        let entry = self.atoms.entry(tree.to_string()).or_insert_with(W::zero);
        *entry = entry.clone() + mass;
    }

    pub fn total(&self) -> W {
        self.atoms.values().fold(W::zero(), |a, b| a + b.clone())
    }

    pub fn get(&self, key: &str) -> W {
        self.atoms.get(key).cloned().unwrap_or_else(W::zero)
    }
}

impl<W: Weight> Default for DistributionOverTrees<W> {
    fn default() -> Self {
        Self::new()
    }
}

/// `1/2 sum |d1 - d2|` over the union of supports.
pub fn total_variation<W: Weight>(d1: &DistributionOverTrees<W>, d2: &DistributionOverTrees<W>) -> W {
    let mut sum = W::zero();
    for (key, a) in &d1.atoms {
        sum = sum + a.abs_diff(&d2.get(key));
    }
    for (key, b) in &d2.atoms {
        if !d1.atoms.contains_key(key) {
            sum = sum + b.clone();
        }
    }
    sum / (W::one() + W::one())
}

fn checked_root(event: &Event, params: &GwMeasureParams, t: TypeId) -> Result<()> {
    if params.height != event.height {
        return Err(Error::domain(format!(
            "event is read at height {} but the model has height {}",
            event.height, params.height
        )));
    }
    if t.index() >= params.theta() {
        return Err(Error::domain(format!("type {t} exceeds theta = {}", params.theta())));
    }
    Ok(())
}

/// Enumerated trees of `T_k^t` with their masses and classes at level `k`.
pub fn classified_enumeration<W: Weight>(
    t: TypeId,
    event: &Event,
    params: &GwMeasureParams,
    limit: f64,
) -> Result<Vec<(TypedTree, W, ClassId)>> {
    checked_root(event, params, t)?;
    let trees = enumerate_trees_from::<W>(t, 0, params, limit)?;
    trees
        .into_iter()
        .map(|(tree, w)| {
            let c = event.partition.classify(&tree, params.height)?;
            Ok((tree, w, c))
        })
        .collect()
}

/// `P(T | class i)` on every tree of the class, by enumeration.
pub fn conditioned_bruteforce<W: Weight>(
    t: TypeId,
    class: ClassId,
    event: &Event,
    params: &GwMeasureParams,
) -> Result<DistributionOverTrees<W>> {
    let trees = classified_enumeration::<W>(t, event, params, ENUMERATION_LIMIT)?;
    from_classified(&trees, t, class)
}

fn from_classified<W: Weight>(
    trees: &[(TypedTree, W, ClassId)],
    t: TypeId,
    class: ClassId,
) -> Result<DistributionOverTrees<W>> {
    let mut total = W::zero();
    for (_, w, c) in trees {
        if *c == class {
            total = total + w.clone();
        }
    }
    if total.is_zero() {
        return Err(Error::ImpossibleEvent {
            ty: t.get(),
            level: 0,
            class: class.get(),
        });
    }
    let mut d = DistributionOverTrees::new();
    for (tree, w, c) in trees {
        if *c == class {
            d.add(tree, w.clone() / total.clone());
        }
    }
    Ok(d)
}

/// `Q~^{(i)}_{lk}(tree)` by the recursive product formula.
pub fn tilde_mass<W: Weight>(
    tree: &TypedTree,
    l: usize,
    class: ClassId,
    event: &Event,
    params: &GwMeasureParams,
    table: &ClassProbTable<W>,
) -> Result<W> {
    let t = tree.ty;
    let p = table.get(t, l, class).clone();
    if p.is_zero() {
        return Err(Error::ImpossibleEvent {
            ty: t.get(),
            level: l,
            class: class.get(),
        });
    }
    let part = &event.partition;
    let level = params.height - l;
    if l == table.base_layer() {
        if part.base_class(tree, level)? != class {
            return Ok(W::zero());
        }
        if table.base_height() == 0 {
            return Ok(W::one());
        }
        let mass: W = gw_probability(tree, t, l, params)?;
        return Ok(mass / p);
    }
    let mut child_classes = Vec::with_capacity(tree.children.len());
    let mut cm = crate::events::CountMatrix::zeros(part.m(), part.theta());
    for child in &tree.children {
        let c = part.classify(child, level - 1)?;
        cm.add(c, child.ty, 1);
        child_classes.push(c);
    }
    if part.class_of_matrix(level, &cm)? != class {
        return Ok(W::zero());
    }
    // P(X = C) = P(W = column sums) prod_j Multi(C[., j]; q_j)
    let n = count_children(tree, part.theta())?;
    let law = params.offspring.law(t, l)?;
    let mut px: W = law.point_mass_w(&n.0)?;
    for j in 0..part.theta() {
        let q = table.row(TypeId::from_index(j), l + 1);
        px = px * multinomial_pmf(&cm.column(j), q);
    }
    if px.is_zero() {
        return Ok(px);
    }
    let mut mass = px / p / W::from_count(&multinomial_coefficient(cm.entries()));
    for (child, c) in tree.children.iter().zip(child_classes) {
        mass = mass * tilde_mass(child, l + 1, c, event, params, table)?;
        if mass.is_zero() {
            break;
        }
    }
    Ok(mass)
}

/// `Q~^{(i)}_{0k}` evaluated on every enumerated tree.
pub fn tilde_exact<W: Weight>(
    t: TypeId,
    class: ClassId,
    event: &Event,
    params: &GwMeasureParams,
    table: &ClassProbTable<W>,
) -> Result<DistributionOverTrees<W>> {
    checked_root(event, params, t)?;
    let trees = enumerate_trees_from::<W>(t, 0, params, ENUMERATION_LIMIT)?;
    let mut d = DistributionOverTrees::new();
    for (tree, _) in &trees {
        d.add(tree, tilde_mass(tree, 0, class, event, params, table)?);
    }
    Ok(d)
}

/// Result of checking one (model, event, root type) instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub name: String,
    pub exact: bool,
    /// Largest TV distance over the possible classes.
    pub max_tv: f64,
    /// Largest atomwise gap between the class mixture and the unconditioned law.
    pub mixture_gap: f64,
    pub classes_checked: usize,
    pub trees: usize,
    pub passed: bool,
    /// Set when the instance was skipped; the reason.
    pub skipped: Option<String>,
}

impl fmt::Display for InstanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = if self.exact { "exact" } else { "float" };
        match &self.skipped {
            Some(why) => write!(f, "SKIP  {:<44} {mode:<5}  {why}", self.name),
            None => write!(
                f,
                "{}  {:<44} {mode:<5}  trees={:<7} classes={} max_tv={:.3e} mixture_gap={:.3e}",
                if self.passed { "PASS" } else { "FAIL" },
                self.name,
                self.trees,
                self.classes_checked,
                self.max_tv,
                self.mixture_gap
            ),
        }
    }
}

/// Compares the brute-force conditioned law with the constructed law for
/// every possible class, and the class mixture with the unconditioned law.
/// `construct` may differ from `event`; that is how a fault is injected.
pub fn check_instance<W: Weight>(
    name: &str,
    t: TypeId,
    event: &Event,
    construct: &Event,
    params: &GwMeasureParams,
    tolerance: f64,
) -> Result<InstanceReport> {
    let exact = W::from_prob(0.5, None).is_none();
    let mut report = InstanceReport {
        name: name.to_string(),
        exact,
        max_tv: 0.0,
        mixture_gap: 0.0,
        classes_checked: 0,
        trees: 0,
        passed: false,
        skipped: None,
    };
    let trees = match classified_enumeration::<W>(t, event, params, ENUMERATION_LIMIT) {
        Ok(trees) => trees,
        Err(Error::EnumerationTooLarge { estimate, limit }) => {
            report.skipped = Some(format!(
                "enumeration guard: about {estimate:.2e} subtrees over all levels exceeds {limit:.0e}"
            ));
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.trees = trees.len();
    let options = BuildOptions {
        conditional: false,
        ..BuildOptions::default()
    };
    let table = build::<W>(construct, params, &options)?.table;
    let mut exact_ok = true;
    let mut mixture = DistributionOverTrees::<W>::new();
    let mut unconditioned = DistributionOverTrees::<W>::new();
    for (tree, w, _) in &trees {
        unconditioned.add(tree, w.clone());
    }
    for i in 0..construct.partition.m() {
        let class = ClassId::from_index(i);
        let p = table.get(t, 0, class).clone();
        if p.is_zero() {
            continue;
        }
        let tilde = tilde_exact(t, class, construct, params, &table)?;
        for (key, q) in &tilde.atoms {
            let entry = mixture.atoms.entry(key.clone()).or_insert_with(W::zero);
            *entry = entry.clone() + p.clone() * q.clone();
        }
        let tv = match from_classified(&trees, t, class) {
            Ok(brute) => total_variation(&brute, &tilde),
            Err(Error::ImpossibleEvent { .. }) => W::one(),
            Err(e) => return Err(e),
        };
        exact_ok &= tv.is_zero();
        report.max_tv = report.max_tv.max(tv.to_f64());
        report.classes_checked += 1;
    }
    for (key, w) in &unconditioned.atoms {
        let gap = w.abs_diff(&mixture.get(key));
        exact_ok &= gap.is_zero();
        report.mixture_gap = report.mixture_gap.max(gap.to_f64());
    }
    for (key, w) in &mixture.atoms {
        if !unconditioned.atoms.contains_key(key) {
            exact_ok &= w.is_zero();
            report.mixture_gap = report.mixture_gap.max(w.to_f64());
        }
    }
    report.passed = if exact {
        exact_ok
    } else {
        report.max_tv < tolerance && report.mixture_gap < tolerance
    };
    Ok(report)
}

/// Size of the verification grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Quick,
    Default,
    Large,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Preset::Quick),
            "default" => Ok(Preset::Default),
            "large" => Ok(Preset::Large),
            other => Err(Error::domain(format!("unknown preset `{other}` (quick, default, large)"))),
        }
    }

    fn heights(self) -> Vec<usize> {
        match self {
            Preset::Quick => vec![1, 2],
            Preset::Default => vec![1, 2, 3],
            Preset::Large => vec![1, 2, 3, 4],
        }
    }
}

fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn table(theta: usize, pts: &[(&[u32], i64, i64)]) -> Law {
    let points = pts
        .iter()
        .map(|(c, n, d)| (c.to_vec(), rational(*n, *d)))
        .collect();
    Law::Table(OffspringTable::from_rationals(theta, points).expect("valid grid table"))
}

/// Small rational models: (name, model). Supports have at most three points.
pub fn grid_models() -> Vec<(String, OffspringModel)> {
    let mut out = Vec::new();
    let single = |law: Law| OffspringModel::homogeneous(vec![law]).expect("model");
    out.push(("binary".to_string(), single(table(1, &[(&[0], 1, 2), (&[2], 1, 2)]))));
    out.push((
        "ternary".to_string(),
        single(table(1, &[(&[0], 1, 4), (&[1], 1, 4), (&[2], 1, 2)])),
    ));
    out.push(("immortal".to_string(), single(table(1, &[(&[1], 1, 3), (&[2], 2, 3)]))));
    out.push((
        "two-type".to_string(),
        OffspringModel::homogeneous(vec![
            table(2, &[(&[0, 0], 1, 2), (&[1, 0], 1, 4), (&[0, 1], 1, 4)]),
            table(2, &[(&[0, 0], 1, 3), (&[1, 1], 1, 3), (&[0, 2], 1, 3)]),
        ])
        .expect("model"),
    ));
    out.push((
        "two-type-branching".to_string(),
        OffspringModel::homogeneous(vec![
            table(2, &[(&[0, 0], 1, 2), (&[2, 0], 1, 4), (&[1, 1], 1, 4)]),
            table(2, &[(&[0, 0], 1, 2), (&[0, 1], 1, 2)]),
        ])
        .expect("model"),
    ));
    let level_dependent = OffspringModel::new(
        2,
        vec![
            TypeLaws {
                default: Some(table(2, &[(&[0, 0], 1, 2), (&[1, 0], 1, 2)])),
                ranges: vec![LevelLaw {
                    from: 0,
                    to: 0,
                    law: table(2, &[(&[1, 1], 1, 2), (&[0, 2], 1, 4), (&[0, 0], 1, 4)]),
                }],
            },
            TypeLaws {
                default: Some(table(2, &[(&[0, 0], 2, 3), (&[1, 0], 1, 3)])),
                ranges: Vec::new(),
            },
        ],
    )
    .expect("model");
    out.push(("level-dependent".to_string(), level_dependent));
    out
}

/// Events applicable to `theta` at height `k`, built-in builders only.
pub fn grid_events(theta: usize, k: usize) -> Vec<Event> {
    let mut out = Vec::new();
    let mut push = |e: Result<Event>| {
        if let Ok(e) = e {
            out.push(e);
        }
    };
    push(builders::survival_event(theta, k));
    push(builders::generation_size(theta, 0, k));
    push(builders::generation_size(theta, 2, k));
    push(builders::exact_height(theta, k));
    push(builders::trivial(theta, k));
    if theta == 2 {
        push(builders::mutant_at_generation(k));
        push(builders::root_lineage_mutant(k));
        push(builders::spontaneous_mutation_4class(k));
    }
    out
}

/// One grid run over every model, height, event, root type and backend.
pub fn run_grid(preset: Preset, tolerance: f64) -> Result<Vec<InstanceReport>> {
    let mut reports = Vec::new();
    for (model_name, model) in grid_models() {
        let theta = model.theta();
        for k in preset.heights() {
            for event in grid_events(theta, k) {
                let params = GwMeasureParams::new(event.height, model.clone())?;
                for t in TypeId::all(theta) {
                    let name = format!("{model_name} k={k} {} root={t}", event.name);
                    reports.push(check_instance::<f64>(&name, t, &event, &event, &params, tolerance)?);
                    reports.push(check_instance::<BigRational>(
                        &name, t, &event, &event, &params, tolerance,
                    )?);
                }
            }
        }
    }
    Ok(reports)
}

/// A grid instance whose construction uses the wrong predicates: the
/// root-lineage classes are built while brute force conditions on the
/// mutant event. It must fail.
pub fn run_injected_fault(tolerance: f64) -> Result<Vec<InstanceReport>> {
    let (_, model) = grid_models()
        .into_iter()
        .find(|(n, _)| n == "two-type")
        .expect("grid model");
    let k = 2;
    let event = builders::mutant_at_generation(k)?;
    let broken = builders::root_lineage_mutant(k)?;
    let params = GwMeasureParams::new(k, model)?;
    // a type-2 root reaches mutants through type-2 parents, which only the
    // mutant event counts
    let t = TypeId::from_index(1);
    let name = "injected fault: mutant vs root-lineage";
    Ok(vec![
        check_instance::<f64>(name, t, &event, &broken, &params, tolerance)?,
        check_instance::<BigRational>(name, t, &event, &broken, &params, tolerance)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;
    use crate::events::builders::*;

    fn half_zero_two(k: usize) -> GwMeasureParams {
        let law = table(1, &[(&[0], 1, 2), (&[2], 1, 2)]);
        GwMeasureParams::new(k, OffspringModel::homogeneous(vec![law]).unwrap()).unwrap()
    }

    #[test]
    fn total_variation_examples() {
        let mut a = DistributionOverTrees::<f64>::new();
        a.add(&"1".parse().unwrap(), 0.5);
        a.add(&"1(1)".parse().unwrap(), 0.5);
        assert_eq!(total_variation(&a, &a), 0.0);
        let mut b = DistributionOverTrees::<f64>::new();
        b.add(&"1".parse().unwrap(), 0.25);
        b.add(&"1(1)".parse().unwrap(), 0.75);
        assert_eq!(total_variation(&a, &b), 0.25);
        let mut c = DistributionOverTrees::<f64>::new();
        c.add(&"2".parse().unwrap(), 1.0);
        assert_eq!(total_variation(&a, &c), 1.0);
    }

    #[test]
    fn survival_conditioned_masses() {
        // recomputed from the five trees of T_2: survivors have masses 1/8 each
        // out of 3/8, and the leaf-free branch
        let params = half_zero_two(2);
        let event = survival_event(1, 2).unwrap();
        let d = conditioned_bruteforce::<BigRational>(
            TypeId::from_index(0),
            ClassId::from_index(0),
            &event,
            &params,
        )
        .unwrap();
        assert_eq!(d.atoms.len(), 3);
        for v in d.atoms.values() {
            assert_eq!(*v, rational(1, 3));
        }
        assert_eq!(d.get("1(1(1,1),1)"), rational(1, 3));
        let dead = conditioned_bruteforce::<BigRational>(
            TypeId::from_index(0),
            ClassId::from_index(1),
            &event,
            &params,
        )
        .unwrap();
        assert_eq!(dead.get("1"), rational(4, 5));
        assert_eq!(dead.get("1(1,1)"), rational(1, 5));
    }

    #[test]
    fn certain_class_is_the_unconditioned_law() {
        let params = half_zero_two(2);
        let event = trivial(1, 2).unwrap();
        let d = conditioned_bruteforce::<BigRational>(
            TypeId::from_index(0),
            ClassId::from_index(0),
            &event,
            &params,
        )
        .unwrap();
        assert_eq!(d.get("1"), rational(1, 2));
        assert_eq!(d.total(), rational(1, 1));
    }

    #[test]
    fn impossible_class_errors() {
        let law = table(1, &[(&[1], 1, 3), (&[2], 2, 3)]);
        let params = GwMeasureParams::new(2, OffspringModel::homogeneous(vec![law]).unwrap()).unwrap();
        let event = survival_event(1, 2).unwrap();
        let r = conditioned_bruteforce::<BigRational>(
            TypeId::from_index(0),
            ClassId::from_index(1),
            &event,
            &params,
        );
        assert!(matches!(r, Err(Error::ImpossibleEvent { .. })));
    }

    #[test]
    fn tilde_vanishes_outside_class_and_sums_to_one() {
        let params = half_zero_two(3);
        let event = generation_size(1, 2, 3).unwrap();
        let table = build::<BigRational>(&event, &params, &BuildOptions::default())
            .unwrap()
            .table;
        let t = TypeId::from_index(0);
        let trees = classified_enumeration::<BigRational>(t, &event, &params, 1e6).unwrap();
        for i in 0..event.partition.m() {
            let class = ClassId::from_index(i);
            if table.get(t, 0, class).is_zero() {
                continue;
            }
            let d = tilde_exact(t, class, &event, &params, &table).unwrap();
            assert_eq!(d.total(), rational(1, 1));
            for (tree, _, c) in &trees {
                if *c != class {
                    assert!(d.get(&tree.to_string()).is_zero());
                }
            }
        }
    }

    #[test]
    fn single_instance_passes_in_both_modes() {
        let params = half_zero_two(3);
        let event = survival_event(1, 3).unwrap();
        let t = TypeId::from_index(0);
        let r = check_instance::<BigRational>("x", t, &event, &event, &params, 1e-10).unwrap();
        assert!(r.passed && r.max_tv == 0.0, "{r}");
        let r = check_instance::<f64>("x", t, &event, &event, &params, 1e-10).unwrap();
        assert!(r.passed, "{r}");
    }

    #[test]
    fn injected_fault_fails() {
        let reports = run_injected_fault(1e-10).unwrap();
        assert!(reports.iter().all(|r| !r.passed && r.skipped.is_none()));
    }
}
