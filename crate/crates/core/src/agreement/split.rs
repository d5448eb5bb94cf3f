//! Document-disjoint train/dev/test splitting.
//!
//! Documents are placed greedily, largest first, into the split that keeps
//! the per-split histograms of several strata closest (summed Jensen-Shannon
//! divergence) to the corpus-wide histograms, while a size term keeps every
//! split near its target share. The greedy pass is repeated from seeded
//! random orders and the best placement wins.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, QAInstance, Question, Split};

pub const DEFAULT_RATIOS: [f64; 3] = [0.51, 0.21, 0.28];
pub const DEFAULT_RESTARTS: usize = 1000;

const SIZE_WEIGHT: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("instance {0} references an unknown question")]
    UnknownQuestion(String),
    #[error("instance {0} references an unknown document")]
    UnknownDocument(String),
}

/// Which properties the splitter balances across partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stratum {
    OriginalLanguage,
    SourceRegion,
    AnswerClass,
    Agreement,
    DocumentLength,
    AnswerCount,
}

impl Stratum {
    pub const ALL: [Stratum; 6] = [
        Stratum::OriginalLanguage,
        Stratum::SourceRegion,
        Stratum::AnswerClass,
        Stratum::Agreement,
        Stratum::DocumentLength,
        Stratum::AnswerCount,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub restarts: usize,
    pub strata: Vec<Stratum>,
    /// Allowed deviation of each split from its target, in questions.
    /// Defaults to max(2, 2% of the corpus).
    pub tolerance: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: DEFAULT_RATIOS,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            strata: Stratum::ALL.to_vec(),
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub instances: Vec<QAInstance>,
    /// Question counts for train, dev, test.
    pub sizes: [usize; 3],
    pub divergence: f64,
    pub warnings: Vec<String>,
}

fn length_bin(n: usize) -> &'static str {
    match n {
        0..=9 => "<10",
        10..=19 => "10-19",
        20..=29 => "20-29",
        30..=49 => "30-49",
        _ => "50+",
    }
}

fn answer_count_bin(n: usize) -> &'static str {
    match n {
        0 => "0",
        1 => "1",
        2 => "2",
        3..=5 => "3-5",
        6..=10 => "6-10",
        _ => "11+",
    }
}

fn stratum_label(s: Stratum, inst: &QAInstance, q: &Question, d: &Document) -> String {
    match s {
        Stratum::OriginalLanguage => q.original_language.code().to_string(),
        Stratum::SourceRegion => d.source_region.clone(),
        Stratum::AnswerClass => format!("{:?}", inst.answer_class),
        Stratum::Agreement => {
            let bin = (inst.raw_jaccard.clamp(0.0, 1.0) * 10.0).floor().min(9.0) as u32;
            bin.to_string()
        }
        Stratum::DocumentLength => length_bin(d.sentences.len()).to_string(),
        Stratum::AnswerCount => answer_count_bin(inst.gold.len()).to_string(),
    }
}

/// Placement unit: one document and the stratum categories of its questions.
struct Unit {
    questions: Vec<usize>,
    categories: Vec<Vec<usize>>,
}

fn jsd(part: &[u32], part_total: u32, global: &[f64]) -> f64 {
    if part_total == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (&c, &q) in part.iter().zip(global) {
        let p = c as f64 / part_total as f64;
        let m = 0.5 * (p + q);
        if p > 0.0 {
            acc += 0.5 * p * (p / m).log2();
        }
        if q > 0.0 {
            acc += 0.5 * q * (q / m).log2();
        }
    }
    acc
}

struct State<'a> {
    hist: [Vec<Vec<u32>>; 3],
    sizes: [u32; 3],
    terms: [f64; 3],
    global: &'a [Vec<f64>],
}

impl<'a> State<'a> {
    fn new(bins: &[usize], global: &'a [Vec<f64>]) -> Self {
        let empty: Vec<Vec<u32>> = bins.iter().map(|&b| vec![0; b]).collect();
        State {
            hist: [empty.clone(), empty.clone(), empty],
            sizes: [0; 3],
            terms: [0.0; 3],
            global,
        }
    }

    fn term(&self, k: usize) -> f64 {
        self.hist[k]
            .iter()
            .zip(self.global)
            .map(|(h, g)| jsd(h, self.sizes[k], g))
            .sum()
    }

    fn apply(&mut self, k: usize, unit: &Unit, sign: i32) {
        for cats in &unit.categories {
            for (s, &c) in cats.iter().enumerate() {
                let v = &mut self.hist[k][s][c];
                *v = (*v as i32 + sign) as u32;
            }
        }
        self.sizes[k] = (self.sizes[k] as i32 + sign * unit.questions.len() as i32) as u32;
    }

    fn size_penalty(&self, ratios: &[f64; 3]) -> f64 {
        let m: u32 = self.sizes.iter().sum();
        if m == 0 {
            return 0.0;
        }
        let m = m as f64;
        (0..3)
            .map(|k| (self.sizes[k] as f64 - ratios[k] * m).abs())
            .sum::<f64>()
            / m
    }

    fn objective(&self, ratios: &[f64; 3]) -> f64 {
        self.terms.iter().sum::<f64>() + SIZE_WEIGHT * self.size_penalty(ratios)
    }
}

fn greedy(
    units: &[Unit],
    order: &[usize],
    bins: &[usize],
    global: &[Vec<f64>],
    ratios: &[f64; 3],
) -> (Vec<usize>, f64, f64) {
    let mut state = State::new(bins, global);
    let mut assignment = vec![0usize; units.len()];
    for &u in order {
        let unit = &units[u];
        let mut best: Option<(f64, usize)> = None;
        for k in 0..3 {
            if ratios[k] == 0.0 {
                continue;
            }
            state.apply(k, unit, 1);
            let old = state.terms[k];
            state.terms[k] = state.term(k);
            let score = state.objective(ratios);
            state.terms[k] = old;
            state.apply(k, unit, -1);
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, k));
            }
        }
        let (_, k) = best.expect("at least one split has a positive ratio");
        state.apply(k, unit, 1);
        state.terms[k] = state.term(k);
        assignment[u] = k;
    }
    let divergence: f64 = state.terms.iter().sum();
    (assignment, state.objective(ratios), divergence)
}

/// Assigns every instance a split such that all questions of a document
/// share one split. Identical inputs and seed give identical output.
pub fn split_corpus(
    instances: &[QAInstance],
    questions: &[Question],
    documents: &[Document],
    config: &SplitConfig,
) -> Result<SplitOutcome, SplitError> {
    let ratios = config.ratios;
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadRatios(ratios));
    }
    let q_by_id: HashMap<&str, &Question> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let d_by_id: HashMap<&str, &Document> = documents.iter().map(|d| (d.id.as_str(), d)).collect();

    // dense category ids per stratum, assigned in sorted label order
    let strata = &config.strata;
    let mut labels: Vec<Vec<String>> = Vec::with_capacity(instances.len());
    for inst in instances {
        let q = q_by_id
            .get(inst.question_id.as_str())
            .ok_or_else(|| SplitError::UnknownQuestion(inst.question_id.clone()))?;
        let d = d_by_id
            .get(inst.document_id.as_str())
            .ok_or_else(|| SplitError::UnknownDocument(inst.question_id.clone()))?;
        labels.push(strata.iter().map(|&s| stratum_label(s, inst, q, d)).collect());
    }
    let mut vocab: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); strata.len()];
    for row in &labels {
        for (s, l) in row.iter().enumerate() {
            vocab[s].entry(l.as_str()).or_insert(0);
        }
    }
    for v in &mut vocab {
        for (i, id) in v.values_mut().enumerate() {
            *id = i;
        }
    }
    let bins: Vec<usize> = vocab.iter().map(|v| v.len()).collect();
    let categories: Vec<Vec<usize>> = labels
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(s, l)| vocab[s][l.as_str()])
                .collect()
        })
        .collect();

    let n = instances.len();
    let mut global: Vec<Vec<f64>> = bins.iter().map(|&b| vec![0.0; b]).collect();
    for cats in &categories {
        for (s, &c) in cats.iter().enumerate() {
            global[s][c] += 1.0;
        }
    }
    for g in &mut global {
        for v in g.iter_mut() {
            *v /= n.max(1) as f64;
        }
    }

    let mut by_doc: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_doc.entry(inst.document_id.as_str()).or_default().push(i);
    }
    let units: Vec<Unit> = by_doc
        .values()
        .map(|qs| Unit {
            questions: qs.clone(),
            categories: qs.iter().map(|&i| categories[i].clone()).collect(),
        })
        .collect();

    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let mut order: Vec<usize> = (0..units.len()).collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|&u| std::cmp::Reverse(units[u].questions.len()));
        let (assignment, objective, divergence) = greedy(&units, &order, &bins, &global, &ratios);
        if best.as_ref().is_none_or(|(b, _, _)| objective < *b) {
            best = Some((objective, divergence, assignment));
        }
    }
    let (_, divergence, assignment) = best.expect("at least one restart");

    let mut out = instances.to_vec();
    let mut sizes = [0usize; 3];
    for (unit, &k) in units.iter().zip(&assignment) {
        for &i in &unit.questions {
            out[i].split = Some(Split::ALL[k]);
            sizes[k] += 1;
        }
    }

    let tolerance = config
        .tolerance
        .unwrap_or_else(|| 2usize.max((0.02 * n as f64).ceil() as usize));
    let mut warnings = Vec::new();
    for k in 0..3 {
        let target = ratios[k] * n as f64;
        if (sizes[k] as f64 - target).abs() > tolerance as f64 {
            warnings.push(format!(
                "{} split has {} questions, target {:.1} ± {}",
                Split::ALL[k].name(),
                sizes[k],
                target,
                tolerance
            ));
        }
    }
    if let Some(largest) = units.iter().map(|u| u.questions.len()).max() {
        if n > 0
            && largest as f64 > tolerance as f64 + ratios.iter().cloned().fold(f64::MAX, f64::min) * n as f64
        {
            warnings.push(format!(
                "a single document holds {largest} of {n} questions; ratios can only be met approximately"
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(SplitOutcome {
        instances: out,
        sizes,
        divergence,
        warnings,
    })
}
