//! Deterministic train/test/validation splits stratified on sex and age
//! quintile.
//!
//! Quintile cuts come from the whole filtered population, before splitting,
//! so every partition uses the same band definitions. Each stratum is sorted
//! by id, shuffled with a stream keyed by `(seed, stratum)`, and cut into
//! partitions whose sizes are the largest-remainder apportionment of the
//! stratum size.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Report, Sex};
use crate::error::{Error, Result};
use crate::rng;

/// Relative slack when testing whether a quota is integral.
const QUOTA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuintileBoundaries {
    pub cuts: [f64; 4],
}

/// Nearest-rank 20/40/60/80th percentiles of the non-missing ages.
pub fn age_quintiles<I>(ages: I) -> Result<QuintileBoundaries>
where
    I: IntoIterator<Item = f64>,
{
    let mut sorted: Vec<f64> = ages.into_iter().filter(|a| a.is_finite()).collect();
    if sorted.len() < 5 {
        return Err(Error::TooFewAges(sorted.len()));
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts = [0.0; 4];
    for (k, p) in [20usize, 40, 60, 80].into_iter().enumerate() {
        // rank = ceil(p * n / 100), 1-based
        let rank = (p * n).div_ceil(100).max(1);
        cuts[k] = sorted[rank - 1];
    }
    Ok(QuintileBoundaries { cuts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBand {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Unknown,
}

impl AgeBand {
    const QUINTILES: [AgeBand; 5] = [AgeBand::Q1, AgeBand::Q2, AgeBand::Q3, AgeBand::Q4, AgeBand::Q5];

    fn as_str(self) -> &'static str {
        match self {
            AgeBand::Q1 => "Q1",
            AgeBand::Q2 => "Q2",
            AgeBand::Q3 => "Q3",
            AgeBand::Q4 => "Q4",
            AgeBand::Q5 => "Q5",
            AgeBand::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StratumKey {
    pub sex: Sex,
    pub age_band: AgeBand,
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.sex, self.age_band.as_str())
    }
}

impl FromStr for StratumKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (sex, band) = s.split_once('|').ok_or_else(|| format!("bad stratum key '{s}'"))?;
        let sex = match sex {
            "F" => Sex::F,
            "M" => Sex::M,
            "U" => Sex::U,
            _ => return Err(format!("bad sex in stratum key '{s}'")),
        };
        let age_band = AgeBand::QUINTILES
            .into_iter()
            .chain([AgeBand::Unknown])
            .find(|b| b.as_str() == band)
            .ok_or_else(|| format!("bad age band in stratum key '{s}'"))?;
        Ok(StratumKey { sex, age_band })
    }
}

impl Serialize for StratumKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StratumKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `quintiles = None` puts every known age in a single band (`Q1`).
pub fn stratum_of(report: &Report, quintiles: Option<&QuintileBoundaries>) -> StratumKey {
    stratum_for(report.sex, report.age_yrs, quintiles)
}

pub fn stratum_for(sex: Sex, age: Option<f64>, quintiles: Option<&QuintileBoundaries>) -> StratumKey {
    let age_band = match (age, quintiles) {
        (None, _) => AgeBand::Unknown,
        (Some(_), None) => AgeBand::Q1,
        (Some(a), Some(q)) => q
            .cuts
            .iter()
            .position(|cut| a <= *cut)
            .map(|k| AgeBand::QUINTILES[k])
            .unwrap_or(AgeBand::Q5),
    };
    StratumKey { sex, age_band }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
    Validation,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Test, Partition::Validation];

    pub fn file_stem(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Test => "test",
            Partition::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            test: 0.15,
            validation: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, test: f64, validation: f64) -> Result<Self> {
        let r = SplitRatios {
            train,
            test,
            validation,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidRatios(format!(
                "each ratio must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.test, self.validation]
    }
}

impl FromStr for SplitRatios {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad ratio '{p}': {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match parts[..] {
            [a, b, c] => SplitRatios::new(a, b, c).map_err(|e| e.to_string()),
            _ => Err(format!("expected three comma-separated ratios, got '{s}'")),
        }
    }
}

/// Largest-remainder apportionment of `n` units over `weights` (which sum to
/// one). Ties in the remainder go to the earlier weight.
pub fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w).collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .map(|q| (q + QUOTA_EPS * q.max(1.0)).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut left = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    let rem = |i: usize| quotas[i] - counts[i] as f64;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub partition: Partition,
    pub stratum: StratumKey,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

impl PartitionCounts {
    pub fn get(&self, p: Partition) -> usize {
        match p {
            Partition::Train => self.train,
            Partition::Test => self.test,
            Partition::Validation => self.validation,
        }
    }

    fn bump(&mut self, p: Partition) {
        match p {
            Partition::Train => self.train += 1,
            Partition::Test => self.test += 1,
            Partition::Validation => self.validation += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.test + self.validation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub algorithm: String,
    pub quintiles: Option<QuintileBoundaries>,
    pub members: BTreeMap<String, Member>,
}

impl SplitAssignment {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        self.members.get(id).map(|m| m.partition)
    }

    pub fn ids_in(&self, partition: Partition) -> impl Iterator<Item = &str> {
        self.members
            .iter()
            .filter(move |(_, m)| m.partition == partition)
            .map(|(id, _)| id.as_str())
    }

    pub fn partition_counts(&self) -> PartitionCounts {
        let mut c = PartitionCounts::default();
        for m in self.members.values() {
            c.bump(m.partition);
        }
        c
    }

    pub fn stratum_counts(&self) -> BTreeMap<StratumKey, PartitionCounts> {
        let mut out: BTreeMap<StratumKey, PartitionCounts> = BTreeMap::new();
        for m in self.members.values() {
            out.entry(m.stratum).or_default().bump(m.partition);
        }
        out
    }
}

/// Split `reports` with cuts computed over the same population. Fewer than
/// five known ages fall back to a single age band.
pub fn stratified_split(reports: &[Report], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    let quintiles = match age_quintiles(reports.iter().filter_map(|r| r.age_yrs)) {
        Ok(q) => Some(q),
        Err(Error::TooFewAges(_)) => None,
        Err(e) => return Err(e),
    };
    let members = reports
        .iter()
        .map(|r| (r.vaers_id.clone(), stratum_of(r, quintiles.as_ref())));
    split_members(members, quintiles, ratios, seed)
}

/// Split pre-stratified ids.
pub fn split_members<I>(
    members: I,
    quintiles: Option<QuintileBoundaries>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment>
where
    I: IntoIterator<Item = (String, StratumKey)>,
{
    ratios.validate()?;
    let mut strata: BTreeMap<StratumKey, Vec<String>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (id, key) in members {
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        strata.entry(key).or_default().push(id);
    }
    let weights = ratios.as_array();
    let assigned: Vec<Vec<(String, Member)>> = strata
        .into_par_iter()
        .map(|(key, mut ids)| {
            ids.sort_unstable();
            rng::shuffle(&mut ids, &mut rng::stream(seed, "split", &key.to_string()));
            let counts = apportion(ids.len(), &weights);
            let mut out = Vec::with_capacity(ids.len());
            let mut it = ids.into_iter();
            for (partition, count) in Partition::ALL.into_iter().zip(counts) {
                for id in it.by_ref().take(count) {
                    out.push((
                        id,
                        Member {
                            partition,
                            stratum: key,
                        },
                    ));
                }
            }
            out
        })
        .collect();
    Ok(SplitAssignment {
        seed,
        ratios,
        algorithm: rng::ALGORITHM_ID.to_string(),
        quintiles,
        members: assigned.into_iter().flatten().collect(),
    })
}

/// Per-stratum largest-remainder sample of one partition.
pub fn stratified_subsample(
    assignment: &SplitAssignment,
    partition: Partition,
    fraction: f64,
    seed: u64,
) -> Result<BTreeSet<String>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let mut strata: BTreeMap<StratumKey, Vec<&str>> = BTreeMap::new();
    for (id, m) in &assignment.members {
        if m.partition == partition {
            strata.entry(m.stratum).or_default().push(id);
        }
    }
    let domain = format!("subsample:{}", partition.file_stem());
    let mut out = BTreeSet::new();
    for (key, mut ids) in strata {
        let take = apportion(ids.len(), &[fraction, 1.0 - fraction])[0];
        rng::shuffle(&mut ids, &mut rng::stream(seed, &domain, &key.to_string()));
        out.extend(ids.into_iter().take(take).map(str::to_string));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub algorithm: String,
    pub method: String,
    pub quintile_cuts: Option<[f64; 4]>,
    pub totals: PartitionCounts,
    pub strata: BTreeMap<StratumKey, PartitionCounts>,
}

impl SplitManifest {
    pub fn from_assignment(a: &SplitAssignment) -> Self {
        SplitManifest {
            seed: a.seed,
            ratios: a.ratios,
            algorithm: a.algorithm.clone(),
            method: "per-stratum largest-remainder apportionment on sex x age quintile".into(),
            quintile_cuts: a.quintiles.map(|q| q.cuts),
            totals: a.partition_counts(),
            strata: a.stratum_counts(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::OutcomeSet;
    use proptest::prelude::*;

    fn report(id: usize, sex: Sex, age: Option<f64>) -> Report {
        Report {
            vaers_id: format!("{id:06}"),
            text: "x".into(),
            sex,
            age_yrs: age,
            outcomes: OutcomeSet::NONE,
        }
    }

    #[test]
    fn quintiles_nearest_rank() {
        let q = age_quintiles((1..=100).map(f64::from)).unwrap();
        assert_eq!(q.cuts, [20.0, 40.0, 60.0, 80.0]);
        let q = age_quintiles([50.0, 30.0, 10.0, 40.0, 20.0]).unwrap();
        assert_eq!(q.cuts, [10.0, 20.0, 30.0, 40.0]);
        let q = age_quintiles(std::iter::repeat_n(50.0, 12)).unwrap();
        assert_eq!(q.cuts, [50.0; 4]);
        assert_eq!(stratum_for(Sex::F, Some(50.0), Some(&q)).age_band, AgeBand::Q1);
        assert!(matches!(age_quintiles([1.0, 2.0, 3.0, 4.0]), Err(Error::TooFewAges(4))));
    }

    #[test]
    fn stratum_boundaries() {
        let q = QuintileBoundaries {
            cuts: [20.0, 40.0, 60.0, 80.0],
        };
        let k = |sex, age| stratum_for(sex, age, Some(&q));
        assert_eq!(
            k(Sex::F, None),
            StratumKey {
                sex: Sex::F,
                age_band: AgeBand::Unknown
            }
        );
        assert_eq!(k(Sex::M, Some(20.0)).age_band, AgeBand::Q1);
        assert_eq!(k(Sex::M, Some(20.5)).age_band, AgeBand::Q2);
        assert_eq!(k(Sex::M, Some(80.0)).age_band, AgeBand::Q4);
        assert_eq!(
            k(Sex::U, Some(95.0)),
            StratumKey {
                sex: Sex::U,
                age_band: AgeBand::Q5
            }
        );
        assert_eq!(stratum_for(Sex::U, Some(95.0), None).age_band, AgeBand::Q1);
    }

    #[test]
    fn stratum_key_text_round_trip() {
        for sex in Sex::ALL {
            for band in AgeBand::QUINTILES.into_iter().chain([AgeBand::Unknown]) {
                let k = StratumKey { sex, age_band: band };
                assert_eq!(k.to_string().parse::<StratumKey>().unwrap(), k);
            }
        }
    }

    #[test]
    fn apportionment_arithmetic() {
        let w = [0.7, 0.15, 0.15];
        assert_eq!(apportion(20, &w), vec![14, 3, 3]);
        assert_eq!(apportion(1, &w), vec![1, 0, 0]);
        assert_eq!(apportion(0, &w), vec![0, 0, 0]);
        assert_eq!(apportion(7, &w), vec![5, 1, 1]);
        assert_eq!(apportion(10, &[0.1, 0.9]), vec![1, 9]);
    }

    #[test]
    fn one_stratum_of_twenty() {
        let reports: Vec<_> = (0..20).map(|i| report(i, Sex::F, None)).collect();
        let a = stratified_split(&reports, SplitRatios::default(), 9).unwrap();
        let c = a.partition_counts();
        assert_eq!((c.train, c.test, c.validation), (14, 3, 3));
    }

    #[test]
    fn single_record_goes_to_train() {
        let a = stratified_split(&[report(1, Sex::M, Some(3.0))], SplitRatios::default(), 0).unwrap();
        assert_eq!(a.partition_of("000001"), Some(Partition::Train));
        assert!(a.quintiles.is_none());
    }

    #[test]
    fn empty_input_is_empty_assignment() {
        let a = stratified_split(&[], SplitRatios::default(), 0).unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn ratio_validation() {
        assert!(SplitRatios::new(0.7, 0.2, 0.2).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
        assert!("0.7,0.15,0.15".parse::<SplitRatios>().is_ok());
        assert!("0.7,0.3".parse::<SplitRatios>().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = report(1, Sex::F, None);
        assert!(matches!(
            stratified_split(&[r.clone(), r], SplitRatios::default(), 0),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn subsample_fraction() {
        let reports: Vec<_> = (0..1000)
            .map(|i| report(i, Sex::ALL[i % 3], Some((i % 90) as f64)))
            .collect();
        let a = stratified_split(&reports, SplitRatios::default(), 5).unwrap();
        let train: BTreeSet<String> = a.ids_in(Partition::Train).map(String::from).collect();
        let all = stratified_subsample(&a, Partition::Train, 1.0, 1).unwrap();
        assert_eq!(all, train);
        let s1 = stratified_subsample(&a, Partition::Train, 0.1, 1).unwrap();
        let s2 = stratified_subsample(&a, Partition::Train, 0.1, 1).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.is_subset(&train));
        let strata = a.stratum_counts().len() as f64;
        assert!((s1.len() as f64 - 0.1 * train.len() as f64).abs() <= strata);
        assert!(stratified_subsample(&a, Partition::Train, 0.0, 1).is_err());
        assert!(stratified_subsample(&a, Partition::Train, 1.5, 1).is_err());
    }

    fn arb_reports() -> impl Strategy<Value = Vec<Report>> {
        prop::collection::vec((0usize..3, prop::option::weighted(0.9, 0.0f64..100.0)), 0..400).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (s, age))| report(i, Sex::ALL[s], age.map(|a| a.round())))
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partitions_cover_and_respect_apportionment(reports in arb_reports(), seed in any::<u64>()) {
            let a = stratified_split(&reports, SplitRatios::default(), seed).unwrap();
            let n = reports.len();
            prop_assert_eq!(a.len(), n);
            let c = a.partition_counts();
            prop_assert_eq!(c.total(), n);
            let strata = a.stratum_counts();
            let k = strata.len() as f64;
            for (p, r) in Partition::ALL.into_iter().zip(a.ratios.as_array()) {
                if n > 0 {
                    prop_assert!((c.get(p) as f64 / n as f64 - r).abs() <= k / n as f64 + 1e-12);
                }
                for counts in strata.values() {
                    let quota = counts.total() as f64 * r;
                    prop_assert!((counts.get(p) as f64 - quota).abs() < 1.0 + 1e-9);
                }
            }
        }

        #[test]
        fn permutation_stable(reports in arb_reports(), seed in any::<u64>(), rot in 0usize..400) {
            let a = stratified_split(&reports, SplitRatios::default(), seed).unwrap();
            let mut shuffled = reports.clone();
            if !shuffled.is_empty() {
                let r = rot % shuffled.len();
                shuffled.rotate_left(r);
                shuffled.reverse();
            }
            let b = stratified_split(&shuffled, SplitRatios::default(), seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
