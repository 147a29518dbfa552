//! Goodness of fit of sampled trees against exact enumerated laws.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use gwcond::events::{builders, ClassId, Event};
use gwcond::measure::GwMeasureParams;
use gwcond::oracle::{classified_enumeration, conditioned_bruteforce, grid_models, DistributionOverTrees};
use gwcond::probs::ConditionedModel;
use gwcond::sampler::{sample_batch, sample_unconditioned_batch, Target};
use gwcond::tree::TypeId;

const DRAWS: usize = 20_000;
/// Seeds are fixed, so a pass is reproducible; the level guards a wrong law.
const ALPHA: f64 = 1e-4;

fn histogram(trees: &[gwcond::tree::TypedTree]) -> BTreeMap<String, u64> {
    let mut h = BTreeMap::new();
    for t in trees {
        *h.entry(t.to_string()).or_insert(0) += 1;
    }
    h
}

/// Pearson statistic against `expected` probabilities; atoms with expected
/// count below 5 are pooled. Returns `(p_value, df)`.
fn chi_squared_gof(observed: &BTreeMap<String, u64>, expected: &DistributionOverTrees<f64>, n: usize) -> (f64, usize) {
    for key in observed.keys() {
        assert!(expected.atoms.contains_key(key), "sampled tree {key} has probability 0");
    }
    let n = n as f64;
    let mut stat = 0.0;
    let mut bins = 0;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (key, p) in &expected.atoms {
        let e = p * n;
        let o = observed.get(key).copied().unwrap_or(0) as f64;
        if e < 5.0 {
            pooled_obs += o;
            pooled_exp += e;
        } else {
            stat += (o - e).powi(2) / e;
            bins += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    if bins < 2 {
        return (1.0, 0);
    }
    let df = bins - 1;
    let p = ChiSquared::new(df as f64).unwrap().sf(stat);
    (p, df)
}

/// Two-sample homogeneity test on pooled bins with combined count >= 10.
fn chi_squared_two_sample(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let (na, nb) = (na as f64, nb as f64);
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let mut cells = Vec::new();
    let (mut pa, mut pb) = (0.0, 0.0);
    for k in keys {
        let x = a.get(k).copied().unwrap_or(0) as f64;
        let y = b.get(k).copied().unwrap_or(0) as f64;
        if x + y < 10.0 {
            pa += x;
            pb += y;
        } else {
            cells.push((x, y));
        }
    }
    if pa + pb > 0.0 {
        cells.push((pa, pb));
    }
    if cells.len() < 2 {
        return 1.0;
    }
    let total = na + nb;
    let mut stat = 0.0;
    for (x, y) in &cells {
        let row = x + y;
        let ea = row * na / total;
        let eb = row * nb / total;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    ChiSquared::new((cells.len() - 1) as f64).unwrap().sf(stat)
}

fn instances() -> Vec<(String, Event, GwMeasureParams)> {
    let mut out = Vec::new();
    for (name, model) in grid_models() {
        let theta = model.theta();
        let k = 2;
        let mut events = vec![builders::survival_event(theta, k).unwrap(), builders::exact_height(theta, k).unwrap()];
        events.push(builders::generation_size(theta, 2, k).unwrap());
        if theta == 2 {
            events.push(builders::mutant_at_generation(k).unwrap());
            events.push(builders::spontaneous_mutation_4class(k).unwrap());
        }
        for e in events {
            let params = GwMeasureParams::new(e.height, model.clone()).unwrap();
            out.push((format!("{name} {}", e.name), e, params));
        }
    }
    out
}

#[test]
fn conditioned_draws_fit_the_conditioned_law() {
    let mut checked = 0;
    let mut failures = Vec::new();
    for (seed, (name, event, params)) in instances().into_iter().enumerate() {
        let model = ConditionedModel::build(event.clone(), params.clone()).unwrap();
        for t in TypeId::all(params.theta()) {
            for i in 0..event.partition.m() {
                let class = ClassId::from_index(i);
                // classes below 1% would need far more draws to say anything
                if model.prob(t, 0, class) < 0.01 {
                    continue;
                }
                let exact = conditioned_bruteforce::<f64>(t, class, &event, &params).unwrap();
                let trees = sample_batch(&model, t, Target::Class(class), DRAWS, seed as u64 * 97 + i as u64, 0).unwrap();
                let (p, df) = chi_squared_gof(&histogram(&trees), &exact, DRAWS);
                checked += 1;
                if p < ALPHA {
                    failures.push(format!("{name} root={t} class={class}: p={p:.2e} df={df}"));
                }
            }
        }
    }
    assert!(checked > 30, "only {checked} cases");
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn class_mixture_recovers_the_unconditioned_law() {
    for (seed, (name, event, params)) in instances().into_iter().enumerate().step_by(3) {
        let model = ConditionedModel::build(event.clone(), params.clone()).unwrap();
        let t = TypeId::from_index(params.theta() - 1);
        let mut law = DistributionOverTrees::new();
        for (tree, w, _) in classified_enumeration::<f64>(t, &event, &params, 1e6).unwrap() {
            law.add(&tree, w);
        }
        let trees = sample_batch(&model, t, Target::Mixture, DRAWS, 1000 + seed as u64, 0).unwrap();
        let (p, df) = chi_squared_gof(&histogram(&trees), &law, DRAWS);
        assert!(p >= ALPHA, "{name}: p={p:.2e} df={df}");
    }
}

#[test]
fn conditioned_draws_match_rejection_filtered_draws() {
    for (seed, (name, event, params)) in instances().into_iter().enumerate().step_by(2) {
        let model = ConditionedModel::build(event.clone(), params.clone()).unwrap();
        let t = TypeId::from_index(0);
        let pool = sample_unconditioned_batch(&params, t, 4 * DRAWS, 5000 + seed as u64, 0).unwrap();
        for i in 0..event.partition.m() {
            let class = ClassId::from_index(i);
            let kept: Vec<_> = pool
                .iter()
                .filter(|tree| event.partition.classify(tree, event.height).unwrap() == class)
                .cloned()
                .collect();
            if kept.len() < 500 {
                continue;
            }
            let direct = sample_batch(&model, t, Target::Class(class), DRAWS, 9000 + seed as u64, 0).unwrap();
            let p = chi_squared_two_sample(&histogram(&kept), &histogram(&direct));
            assert!(p >= ALPHA, "{name} class={class}: p={p:.2e}");
        }
    }
}

#[test]
fn poisson_mutant_model_draws_fit_the_enumerated_law() {
    // infinite support: compare on the trees with mass above the truncation
    let params = GwMeasureParams::new(
        2,
        gwcond::offspring::OffspringModel::poisson_thinning([0.8, 1.2], [0.6, 0.2]).unwrap(),
    )
    .unwrap();
    let event = builders::mutant_at_generation(2).unwrap();
    let model = ConditionedModel::build(event.clone(), params.clone()).unwrap();
    let t = TypeId::from_index(1);
    let class = ClassId::from_index(0);
    let trees = sample_batch(&model, t, Target::Class(class), DRAWS, 3, 0).unwrap();
    for tree in &trees {
        assert_eq!(event.partition.classify(tree, 2).unwrap(), class);
    }
    let pool = sample_unconditioned_batch(&params, t, 10 * DRAWS, 4, 0).unwrap();
    let kept: Vec<_> = pool
        .into_iter()
        .filter(|tree| event.partition.classify(tree, 2).unwrap() == class)
        .collect();
    assert!(kept.len() > 2000);
    let p = chi_squared_two_sample(&histogram(&kept), &histogram(&trees));
    assert!(p >= ALPHA, "p={p:.2e}");
}
