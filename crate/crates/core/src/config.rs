//! Model configuration files (TOML).
//!
//! ```toml
//! theta = 2
//! height = 8          # k passed to a built-in event, or the total height of an explicit one
//! seed = 7            # optional
//! root_type = 2       # optional; defaults to the event's root type
//!
//! [[offspring]]       # one block per type, optionally restricted to levels [from, to]
//! type = 1
//! mu = 1.0            # two-type Poisson thinning: Pois(mu) children, each type 1 w.p. p
//! p = 1.0
//!
//! [[offspring]]
//! type = 2
//! levels = [0, 3]
//! table = [ { children = [0, 0], p = "1/2" }, { children = [1, 1], p = 0.5 } ]
//!
//! [[offspring]]
//! type = 2
//! poisson = [0.1, 1.4]   # independent Poisson count per child type
//!
//! [event]
//! builtin = "mutant"     # survival | mutant | root_lineage | spontaneous_mutation
//!                        # | generation_size (needs `size`) | exact_height | trivial
//! target_class = 1       # optional
//! ```
//!
//! An explicit event replaces `builtin` with `classes`, one of
//! `base_leaf_types` (class of each leaf type, base height 0) or
//! `base_heights` (class by tree height `0..=k0`), `predicates` (one per
//! class, in the predicate grammar), optional `labels`, `name`, and
//! `[[event.levels]]` blocks `{ level, predicates }` overriding single levels.
//! Table probabilities given as strings are exact rationals.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{builders, BaseClassifier, ClassId, Event, MatrixPredicate, RecursivePartition};
use crate::measure::GwMeasureParams;
use crate::offspring::{Law, LevelLaw, OffspringModel, OffspringTable, TypeLaws};
use crate::tree::TypeId;
use crate::weight::{parse_rational, rational_from_decimal_f64, Weight};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    theta: usize,
    height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root_type: Option<u32>,
    offspring: Vec<RawOffspring>,
    event: RawEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOffspring {
    #[serde(rename = "type")]
    ty: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poisson: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<RawPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    children: Vec<u32>,
    p: RawProb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawProb {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_leaf_types: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_heights: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<RawLevel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_class: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevel {
    level: usize,
    predicates: Vec<String>,
}

/// A parsed and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub seed: Option<u64>,
    pub params: GwMeasureParams,
    /// The event, with `root_type` and `target_class` already applied.
    pub event: Event,
}

impl ModelConfig {
    pub fn theta(&self) -> usize {
        self.params.theta()
    }

    pub fn root_type(&self) -> TypeId {
        self.event.root_type
    }

    pub fn parse(source: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(source, s.start));
            Error::config(line, e.message().to_string())
        })?;
        Self::from_raw(raw, source)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn from_raw(raw: RawConfig, source: &str) -> Result<Self> {
        let theta = raw.theta;
        if theta == 0 {
            return Err(Error::config(find_line(source, "theta"), "theta must be at least 1"));
        }
        let offspring = offspring_model(theta, &raw.offspring, source)?;
        let mut event = build_event(theta, raw.height, &raw.event, source)?;
        if let Some(rt) = raw.root_type {
            event.root_type = TypeId::new(rt)
                .ok()
                .filter(|t| t.index() < theta)
                .ok_or_else(|| {
                    Error::config(find_line(source, "root_type"), format!("root_type {rt} not in 1..={theta}"))
                })?;
        }
        let params = GwMeasureParams::new(event.height, offspring)
            .map_err(|e| Error::config(find_line(source, "[[offspring]]"), e.to_string()))?;
        Ok(ModelConfig {
            seed: raw.seed,
            params,
            event,
        })
    }

    /// Explicit canonical form: every law spelled out, the event given by its
    /// predicates. Parsing the output gives back an equal configuration.
    pub fn to_toml(&self) -> String {
        let raw = RawConfig {
            theta: self.theta(),
            height: self.event.height,
            seed: self.seed,
            root_type: Some(self.event.root_type.get()),
            offspring: raw_offspring(&self.params.offspring),
            event: raw_event(&self.event),
        };
        toml::to_string(&raw).expect("configuration serializes")
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// First line containing `needle`.
fn find_line(source: &str, needle: &str) -> Option<usize> {
    source
        .lines()
        .position(|l| l.contains(needle))
        .map(|i| i + 1)
}

fn offspring_model(theta: usize, blocks: &[RawOffspring], source: &str) -> Result<OffspringModel> {
    let mut laws: Vec<TypeLaws> = vec![TypeLaws::default(); theta];
    for (n, block) in blocks.iter().enumerate() {
        let line = nth_line(source, "[[offspring]]", n);
        let fail = |msg: String| Error::config(line, format!("offspring block {}: {msg}", n + 1));
        let ty = TypeId::new(block.ty)
            .ok()
            .filter(|t| t.index() < theta)
            .ok_or_else(|| fail(format!("type {} not in 1..={theta}", block.ty)))?;
        let kinds = [
            block.mu.is_some() || block.p.is_some(),
            block.poisson.is_some(),
            block.table.is_some(),
        ];
        if kinds.iter().filter(|&&k| k).count() != 1 {
            return Err(fail("give exactly one of mu/p, poisson or table".into()));
        }
        let law = if let Some(rates) = &block.poisson {
            Law::poisson(rates.clone())
        } else if let Some(points) = &block.table {
            table_law(theta, points).map(Law::Table)
        } else {
            if theta != 2 {
                return Err(fail("mu/p thinning needs theta = 2".into()));
            }
            let (Some(mu), Some(p)) = (block.mu, block.p) else {
                return Err(fail("thinning needs both mu and p".into()));
            };
            Law::poisson_thinning(mu, p)
        }
        .map_err(|e| fail(e.to_string()))?;
        let slot = &mut laws[ty.index()];
        match block.levels {
            Some([from, to]) => {
                if from > to {
                    return Err(fail(format!("empty level range [{from}, {to}]")));
                }
                slot.ranges.push(LevelLaw { from, to, law });
            }
            None => {
                if slot.default.is_some() {
                    return Err(fail(format!("second default law for type {ty}")));
                }
                slot.default = Some(law);
            }
        }
    }
    OffspringModel::new(theta, laws).map_err(|e| Error::config(find_line(source, "[[offspring]]"), e.to_string()))
}

fn nth_line(source: &str, needle: &str, n: usize) -> Option<usize> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with(needle))
        .nth(n)
        .map(|(i, _)| i + 1)
}

fn table_law(theta: usize, points: &[RawPoint]) -> Result<OffspringTable> {
    let mut entries = Vec::with_capacity(points.len());
    for pt in points {
        let (prob, exact) = match &pt.p {
            RawProb::Number(x) => (*x, rational_from_decimal_f64(*x)),
            RawProb::Text(s) => {
                let r = parse_rational(s)
                    .ok_or_else(|| Error::domain(format!("`{s}` is not a rational number")))?;
                (Weight::to_f64(&r), Some(r))
            }
        };
        entries.push((pt.children.clone(), prob, exact));
    }
    OffspringTable::build(theta, entries)
}

fn class_id(value: u32, m: usize, what: &str) -> Result<ClassId> {
    ClassId::new(value)
        .ok()
        .filter(|c| c.index() < m)
        .ok_or_else(|| Error::domain(format!("{what} class {value} not in 1..={m}")))
}

fn parse_predicates(texts: &[String], m: usize, theta: usize, source: &str) -> Result<Vec<MatrixPredicate>> {
    texts
        .iter()
        .map(|text| {
            MatrixPredicate::parse(text, m, theta)
                .map_err(|e| Error::config(find_line(source, text), e.to_string()))
        })
        .collect()
}

fn build_event(theta: usize, height: usize, raw: &RawEvent, source: &str) -> Result<Event> {
    let line = find_line(source, "[event]");
    let fail = |msg: String| Error::config(line, msg);
    let mut event = if let Some(name) = &raw.builtin {
        let explicit = raw.classes.is_some()
            || raw.predicates.is_some()
            || raw.base_heights.is_some()
            || raw.base_leaf_types.is_some()
            || raw.levels.is_some();
        if explicit {
            return Err(fail("a builtin event takes no explicit partition fields".into()));
        }
        let mut e = builders::by_name(name, theta, height, raw.size).map_err(|e| fail(e.to_string()))?;
        if let Some(labels) = &raw.labels {
            e.labels = labels.clone();
        }
        if let Some(n) = &raw.name {
            e.name = n.clone();
        }
        e
    } else {
        let m = raw.classes.ok_or_else(|| fail("event needs `builtin` or `classes`".into()))?;
        if m == 0 {
            return Err(fail("an event needs at least one class".into()));
        }
        let base = match (&raw.base_leaf_types, &raw.base_heights) {
            (Some(v), None) => BaseClassifier::ByLeafType(
                v.iter().map(|&c| class_id(c, m, "base")).collect::<Result<_>>().map_err(|e| fail(e.to_string()))?,
            ),
            (None, Some(v)) => BaseClassifier::ByHeight(
                v.iter().map(|&c| class_id(c, m, "base")).collect::<Result<_>>().map_err(|e| fail(e.to_string()))?,
            ),
            _ => return Err(fail("give exactly one of base_leaf_types or base_heights".into())),
        };
        let texts = raw.predicates.as_ref().ok_or_else(|| fail("explicit events need `predicates`".into()))?;
        let predicates = parse_predicates(texts, m, theta, source)?;
        let mut levels = BTreeMap::new();
        for lvl in raw.levels.iter().flatten() {
            let preds = parse_predicates(&lvl.predicates, m, theta, source)?;
            if levels.insert(lvl.level, preds).is_some() {
                return Err(fail(format!("level {} given twice", lvl.level)));
            }
        }
        let partition = RecursivePartition::new(m, theta, base, predicates, levels).map_err(|e| match e {
            Error::NotAPartition { .. } => {
                let line = find_line(source, "predicates");
                Error::config(line, e.to_string())
            }
            other => fail(other.to_string()),
        })?;
        let labels = raw
            .labels
            .clone()
            .unwrap_or_else(|| (1..=m).map(|i| format!("class {i}")).collect());
        if labels.len() != m {
            return Err(fail(format!("{} labels for {m} classes", labels.len())));
        }
        Event {
            name: raw.name.clone().unwrap_or_else(|| "custom".into()),
            partition,
            height,
            target_class: ClassId::from_index(0),
            root_type: TypeId::from_index(0),
            labels,
        }
    };
    if let Some(tc) = raw.target_class {
        event.target_class = class_id(tc, event.partition.m(), "target").map_err(|e| fail(e.to_string()))?;
    }
    if event.height < event.partition.base_height() {
        return Err(fail(format!(
            "height {} is below the base height {}",
            event.height,
            event.partition.base_height()
        )));
    }
    Ok(event)
}

fn raw_law(ty: TypeId, levels: Option<[usize; 2]>, law: &Law) -> RawOffspring {
    let mut raw = RawOffspring {
        ty: ty.get(),
        levels,
        mu: None,
        p: None,
        poisson: None,
        table: None,
    };
    match law {
        Law::Poisson(p) => match p.thinning_params() {
            Some((mu, pm)) => {
                raw.mu = Some(mu);
                raw.p = Some(pm);
            }
            None => raw.poisson = Some(p.rates().to_vec()),
        },
        Law::Table(t) => {
            raw.table = Some(
                t.entries()
                    .iter()
                    .map(|e| RawPoint {
                        children: e.counts.0.clone(),
                        p: match &e.exact {
                            Some(r) if rational_from_decimal_f64(e.prob).as_ref() != Some(r) => {
                                RawProb::Text(rational_text(r))
                            }
                            _ => RawProb::Number(e.prob),
                        },
                    })
                    .collect(),
            )
        }
    }
    raw
}

fn rational_text(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn raw_offspring(model: &OffspringModel) -> Vec<RawOffspring> {
    let mut out = Vec::new();
    for (j, tl) in model.type_laws().iter().enumerate() {
        let ty = TypeId::from_index(j);
        if let Some(d) = &tl.default {
            out.push(raw_law(ty, None, d));
        }
        for r in &tl.ranges {
            out.push(raw_law(ty, Some([r.from, r.to]), &r.law));
        }
    }
    out
}

fn raw_event(event: &Event) -> RawEvent {
    let part = &event.partition;
    let (leaf, heights) = match part.base() {
        BaseClassifier::ByLeafType(v) => (Some(v.iter().map(|c| c.get()).collect()), None),
        BaseClassifier::ByHeight(v) => (None, Some(v.iter().map(|c| c.get()).collect())),
    };
    let levels: Vec<RawLevel> = part
        .level_overrides()
        .iter()
        .map(|(l, ps)| RawLevel {
            level: *l,
            predicates: ps.iter().map(ToString::to_string).collect(),
        })
        .collect();
    RawEvent {
        builtin: None,
        size: None,
        name: Some(event.name.clone()),
        classes: Some(part.m()),
        base_leaf_types: leaf,
        base_heights: heights,
        predicates: Some(part.default_predicates().iter().map(ToString::to_string).collect()),
        levels: (!levels.is_empty()).then_some(levels),
        labels: Some(event.labels.clone()),
        target_class: Some(event.target_class.get()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MUTANT: &str = r#"
theta = 2
height = 8
seed = 3

[[offspring]]
type = 1
mu = 1.0
p = 1.0

[[offspring]]
type = 2
mu = 1.5
p = 1e-9

[event]
builtin = "mutant"
"#;

    const EXPLICIT: &str = r#"
theta = 1
height = 3
root_type = 1

[[offspring]]
type = 1
table = [ { children = [0], p = "1/3" }, { children = [2], p = "2/3" } ]

[[offspring]]
type = 1
levels = [1, 1]
table = [ { children = [0], p = 0.25 }, { children = [1], p = 0.75 } ]

[event]
name = "survive"
classes = 2
base_heights = [1]
predicates = ["row[1] >= 1", "row[1] = 0"]
target_class = 2

[[event.levels]]
level = 2
predicates = ["c[1][1] >= 2", "c[1][1] <= 1"]
"#;

    #[test]
    fn builtin_config_parses() {
        let c = ModelConfig::parse(MUTANT).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.event.name, "mutant");
        assert_eq!(c.root_type(), TypeId::from_index(1));
        assert_eq!(c.params.height, 8);
    }

    #[test]
    fn explicit_config_parses() {
        let c = ModelConfig::parse(EXPLICIT).unwrap();
        assert_eq!(c.event.partition.m(), 2);
        assert_eq!(c.event.target_class, ClassId::from_index(1));
        assert_eq!(c.event.partition.level_overrides().len(), 1);
        let law = c.params.offspring.law(TypeId::from_index(0), 1).unwrap();
        assert_eq!(law.point_mass(&[1]), 0.75);
        let law = c.params.offspring.law(TypeId::from_index(0), 0).unwrap();
        assert!((law.point_mass(&[2]) - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn dump_round_trips() {
        for src in [MUTANT, EXPLICIT] {
            let c = ModelConfig::parse(src).unwrap();
            let dumped = c.to_toml();
            let again = ModelConfig::parse(&dumped).unwrap();
            assert_eq!(c, again, "{dumped}");
            assert_eq!(dumped, again.to_toml());
        }
        let exact_height = MUTANT.replace("builtin = \"mutant\"", "builtin = \"exact_height\"");
        let c = ModelConfig::parse(&exact_height).unwrap();
        assert_eq!(c.params.height, 9);
        assert_eq!(ModelConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn bad_predicate_names_expression_and_line() {
        let src = EXPLICIT.replace("row[1] = 0", "row[1] = = 0");
        let err = ModelConfig::parse(&src).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row[1] = = 0"), "{msg}");
        assert!(matches!(err, Error::Config { line: Some(19), .. }), "{msg}");
    }

    #[test]
    fn overlapping_predicates_are_rejected() {
        let src = EXPLICIT.replace("row[1] = 0", "row[1] <= 1");
        let err = ModelConfig::parse(&src).unwrap_err();
        assert!(err.to_string().contains("not a partition"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let src = "theta = 1\nheight = = 2\n";
        match ModelConfig::parse(src).unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, Some(2)),
            e => panic!("{e}"),
        }
        let src = MUTANT.replace("mu = 1.0\n", "");
        assert!(ModelConfig::parse(&src).is_err());
        let src = MUTANT.replace("builtin = \"mutant\"", "builtin = \"nope\"");
        assert!(ModelConfig::parse(&src).is_err());
    }
}
