//! Offspring laws on `N^theta`, per type and per level.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tree::{TypeCountVector, TypeId};
use crate::weight::{rational_from_decimal_f64, Weight};

/// Upper-tail mass discarded per Poisson coordinate when a finite support is needed.
pub const TRUNCATION_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub counts: TypeCountVector,
    pub prob: f64,
    /// Exact value, present when every entry of the table is rational and the
    /// rationals sum to exactly one.
    pub exact: Option<BigRational>,
}

/// A finite-support law given point by point.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringTable {
    theta: usize,
    entries: Vec<TableEntry>,
}

impl OffspringTable {
    /// Table from float probabilities. Exact values are taken from the
    /// decimal representation of each float.
    pub fn new(theta: usize, points: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        let with_exact = points
            .into_iter()
            .map(|(c, p)| {
                let exact = rational_from_decimal_f64(p);
                (c, p, exact)
            })
            .collect();
        Self::build(theta, with_exact)
    }

    pub fn from_rationals(theta: usize, points: Vec<(Vec<u32>, BigRational)>) -> Result<Self> {
        let with_exact = points
            .into_iter()
            .map(|(c, r)| {
                let p = Weight::to_f64(&r);
                (c, p, Some(r))
            })
            .collect();
        Self::build(theta, with_exact)
    }

    pub(crate) fn build(
        theta: usize,
        points: Vec<(Vec<u32>, f64, Option<BigRational>)>,
    ) -> Result<Self> {
        if theta == 0 {
            return Err(Error::domain("theta must be at least 1"));
        }
        let mut entries: Vec<TableEntry> = Vec::new();
        let mut total = 0.0;
        for (counts, prob, exact) in points {
            if counts.len() != theta {
                return Err(Error::domain(format!(
                    "offspring vector {counts:?} has length {} but theta = {theta}",
                    counts.len()
                )));
            }
            if !prob.is_finite() || prob < 0.0 {
                return Err(Error::domain(format!(
                    "offspring probability {prob} for {counts:?} is not a probability"
                )));
            }
            let counts = TypeCountVector(counts);
            if entries.iter().any(|e| e.counts == counts) {
                return Err(Error::domain(format!("offspring vector {counts} listed twice")));
            }
            total += prob;
            if prob > 0.0 {
                entries.push(TableEntry { counts, prob, exact });
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "offspring probabilities sum to {total}, not 1"
            )));
        }
        let exact_total = entries
            .iter()
            .try_fold(BigRational::zero(), |acc, e| e.exact.as_ref().map(|x| acc + x));
        if exact_total != Some(BigRational::one()) {
            for e in &mut entries {
                e.exact = None;
            }
        }
        Ok(OffspringTable { theta, entries })
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn is_exact(&self) -> bool {
        self.entries.iter().all(|e| e.exact.is_some())
    }
}

/// Independent Poisson counts per child type.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonLaw {
    rates: Vec<f64>,
    /// `(mu, p)` when built by thinning a `Pois(mu)` total with mutation
    /// probability `p` for the first type.
    thinning: Option<(f64, f64)>,
}

impl PoissonLaw {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::domain("theta must be at least 1"));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::domain(format!("Poisson rates {rates:?} must be >= 0")));
        }
        Ok(PoissonLaw {
            rates,
            thinning: None,
        })
    }

    /// Two-type law: `Pois(mu)` children, each of type 1 with probability `p`.
    pub fn thinning(mu: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("mutation probability {p} not in [0,1]")));
        }
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::domain(format!("offspring mean {mu} must be >= 0")));
        }
        Ok(PoissonLaw {
            rates: vec![mu * p, mu * (1.0 - p)],
            thinning: Some((mu, p)),
        })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn thinning_params(&self) -> Option<(f64, f64)> {
        self.thinning
    }
}

pub(crate) fn poisson_pmf(rate: f64, n: u32) -> f64 {
    if rate == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=n).map(|i| f64::from(i).ln()).sum();
    (f64::from(n) * rate.ln() - rate - ln_fact).exp()
}

/// Smallest `n` with `P(X > n) < tail` together with `P(X > n)`.
pub(crate) fn poisson_cutoff(rate: f64, tail: f64) -> (u32, f64) {
    if rate == 0.0 {
        return (0, 0.0);
    }
    // Compute pmf far enough into the tail that the remainder is negligible.
    let mut pmf = Vec::new();
    let mut n = 0u32;
    loop {
        let v = poisson_pmf(rate, n);
        pmf.push(v);
        if f64::from(n) > rate && v < 1e-30 {
            break;
        }
        n += 1;
    }
    let mut upper = vec![0.0; pmf.len()];
    let mut acc = 0.0;
    for i in (0..pmf.len()).rev() {
        upper[i] = acc; // P(X > i)
        acc += pmf[i];
    }
    let cut = upper.iter().position(|&u| u < tail).unwrap_or(pmf.len() - 1);
    (cut as u32, upper[cut])
}

/// Finite support with point masses; `tail` is the mass removed by truncation
/// before renormalizing.
#[derive(Debug, Clone)]
pub struct Support<W> {
    pub points: Vec<(TypeCountVector, W)>,
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Table(OffspringTable),
    Poisson(PoissonLaw),
}

impl Law {
    pub fn table(theta: usize, points: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        Ok(Law::Table(OffspringTable::new(theta, points)?))
    }

    pub fn poisson(rates: Vec<f64>) -> Result<Self> {
        Ok(Law::Poisson(PoissonLaw::new(rates)?))
    }

    pub fn poisson_thinning(mu: f64, p: f64) -> Result<Self> {
        Ok(Law::Poisson(PoissonLaw::thinning(mu, p)?))
    }

    pub fn theta(&self) -> usize {
        match self {
            Law::Table(t) => t.theta,
            Law::Poisson(p) => p.rates.len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Law::Table(_) => true,
            Law::Poisson(p) => p.rates.iter().all(|&r| r == 0.0),
        }
    }

    pub fn poisson_rates(&self) -> Option<&[f64]> {
        match self {
            Law::Poisson(p) => Some(&p.rates),
            Law::Table(_) => None,
        }
    }

    pub fn point_mass(&self, counts: &[u32]) -> f64 {
        match self {
            Law::Table(t) => t
                .entries
                .iter()
                .find(|e| e.counts.0 == counts)
                .map_or(0.0, |e| e.prob),
            Law::Poisson(p) => p
                .rates
                .iter()
                .zip(counts)
                .map(|(&r, &n)| poisson_pmf(r, n))
                .product(),
        }
    }

    pub fn point_mass_w<W: Weight>(&self, counts: &[u32]) -> Result<W> {
        match self {
            Law::Table(t) => match t.entries.iter().find(|e| e.counts.0 == counts) {
                Some(e) => W::from_prob(e.prob, e.exact.as_ref())
                    .ok_or_else(|| Error::unsupported("offspring table has no exact rational form")),
                None => Ok(W::zero()),
            },
            Law::Poisson(_) => W::from_prob(self.point_mass(counts), None)
                .ok_or_else(|| Error::unsupported("Poisson laws have no exact rational form")),
        }
    }

    /// Support with masses. Poisson coordinates are cut at `TRUNCATION_TAIL`
    /// and the product law renormalized.
    pub fn support<W: Weight>(&self) -> Result<Support<W>> {
        match self {
            Law::Table(t) => {
                let mut points = Vec::with_capacity(t.entries.len());
                for e in &t.entries {
                    let w = W::from_prob(e.prob, e.exact.as_ref()).ok_or_else(|| {
                        Error::unsupported("offspring table has no exact rational form")
                    })?;
                    points.push((e.counts.clone(), w));
                }
                Ok(Support { points, tail: 0.0 })
            }
            Law::Poisson(p) => {
                if W::from_prob(0.5, None).is_none() {
                    return Err(Error::unsupported(
                        "Poisson laws have no exact rational form",
                    ));
                }
                let mut coords = Vec::with_capacity(p.rates.len());
                let mut kept = 1.0;
                for &r in &p.rates {
                    let (cut, tail) = poisson_cutoff(r, TRUNCATION_TAIL);
                    let masses: Vec<f64> = (0..=cut).map(|n| poisson_pmf(r, n)).collect();
                    let z: f64 = masses.iter().sum();
                    kept *= 1.0 - tail;
                    coords.push(masses.into_iter().map(|m| m / z).collect::<Vec<_>>());
                }
                let mut points = vec![(Vec::new(), 1.0f64)];
                for masses in &coords {
                    let mut next = Vec::with_capacity(points.len() * masses.len());
                    for (prefix, w) in &points {
                        for (n, &m) in masses.iter().enumerate() {
                            let mut v = prefix.clone();
                            v.push(n as u32);
                            next.push((v, w * m));
                        }
                    }
                    points = next;
                }
                let points = points
                    .into_iter()
                    .map(|(v, w)| (TypeCountVector(v), W::from_prob(w, None).expect("float weight")))
                    .collect();
                Ok(Support {
                    points,
                    tail: 1.0 - kept,
                })
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> TypeCountVector {
        match self {
            Law::Table(t) => {
                let weights: Vec<f64> = t.entries.iter().map(|e| e.prob).collect();
                t.entries[rng.categorical(&weights)].counts.clone()
            }
            Law::Poisson(p) => TypeCountVector(
                p.rates
                    .iter()
                    .map(|&r| {
                        if r == 0.0 {
                            0
                        } else {
                            let d = Poisson::new(r).expect("positive finite rate");
                            let x: f64 = d.sample(rng);
                            x as u32
                        }
                    })
                    .collect(),
            ),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Law::Table(t) => {
                let mut m = vec![0.0; t.theta];
                for e in &t.entries {
                    for (j, &c) in e.counts.0.iter().enumerate() {
                        m[j] += e.prob * f64::from(c);
                    }
                }
                m
            }
            Law::Poisson(p) => p.rates.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelLaw {
    pub from: usize,
    pub to: usize,
    pub law: Law,
}

/// Laws of one type: level ranges checked in order, then the default.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypeLaws {
    pub default: Option<Law>,
    pub ranges: Vec<LevelLaw>,
}

/// Offspring laws for every (type, level).
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringModel {
    theta: usize,
    laws: Vec<TypeLaws>,
}

impl OffspringModel {
    pub fn new(theta: usize, laws: Vec<TypeLaws>) -> Result<Self> {
        if theta == 0 {
            return Err(Error::domain("theta must be at least 1"));
        }
        if laws.len() != theta {
            return Err(Error::domain(format!(
                "{} type law sets given for theta = {theta}",
                laws.len()
            )));
        }
        for (j, tl) in laws.iter().enumerate() {
            let all = tl.default.iter().chain(tl.ranges.iter().map(|r| &r.law));
            for law in all {
                if law.theta() != theta {
                    return Err(Error::domain(format!(
                        "law for type {} has dimension {} but theta = {theta}",
                        j + 1,
                        law.theta()
                    )));
                }
            }
            for r in &tl.ranges {
                if r.from > r.to {
                    return Err(Error::domain(format!(
                        "empty level range {}..={} for type {}",
                        r.from,
                        r.to,
                        j + 1
                    )));
                }
            }
        }
        Ok(OffspringModel { theta, laws })
    }

    /// Level-independent model, one law per type.
    pub fn homogeneous(laws: Vec<Law>) -> Result<Self> {
        let theta = laws.first().map_or(0, Law::theta);
        Self::new(
            theta,
            laws.into_iter()
                .map(|l| TypeLaws {
                    default: Some(l),
                    ranges: Vec::new(),
                })
                .collect(),
        )
    }

    /// Two-type Poisson thinning: type `t` has `Pois(mu[t])` children, each a
    /// mutant (type 1) with probability `p[t]`.
    pub fn poisson_thinning(mu: [f64; 2], p: [f64; 2]) -> Result<Self> {
        Self::homogeneous(vec![
            Law::poisson_thinning(mu[0], p[0])?,
            Law::poisson_thinning(mu[1], p[1])?,
        ])
    }

    pub fn theta(&self) -> usize {
        self.theta
    }

    pub fn type_laws(&self) -> &[TypeLaws] {
        &self.laws
    }

    pub fn law(&self, t: TypeId, level: usize) -> Result<&Law> {
        let tl = self
            .laws
            .get(t.index())
            .ok_or_else(|| Error::domain(format!("type {t} exceeds theta = {}", self.theta)))?;
        tl.ranges
            .iter()
            .find(|r| (r.from..=r.to).contains(&level))
            .map(|r| &r.law)
            .or(tl.default.as_ref())
            .ok_or_else(|| Error::domain(format!("no offspring law for type {t} at level {level}")))
    }

    /// Every law used by a tree of height `k` is defined.
    pub fn check_levels(&self, k: usize) -> Result<()> {
        for t in TypeId::all(self.theta) {
            for l in 0..k {
                self.law(t, l)?;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self, k: usize) -> bool {
        TypeId::all(self.theta).all(|t| (0..k).all(|l| self.law(t, l).is_ok_and(Law::is_finite)))
    }
}
