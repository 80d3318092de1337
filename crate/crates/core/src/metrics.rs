//! Automatic evaluation metrics and Likert rating aggregation.
//!
//! All percentages are in `[0, 100]`. Corpus BLEU pools clipped n-gram
//! counts without smoothing; ROUGE-L is the mean of per-pair F1 over the
//! longest common subsequence; distinct-n and repetition-n are per-document
//! ratios averaged over documents long enough to hold one n-gram.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{tokenize, TokenSeq};

pub const MAX_BLEU_ORDER: usize = 4;
pub const REPORT_BLEU_ORDERS: [u8; 3] = [2, 3, 4];
pub const REPORT_NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "code")]
pub enum MetricError {
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order {n} is out of range")]
    InvalidOrder { n: usize },
    #[error("empty token sequence")]
    EmptySequence { index: Option<usize> },
    #[error("no token log-probabilities supplied")]
    EmptyList,
    #[error("log-probability at index {index} is positive")]
    PositiveLogProb { index: usize },
    #[error("log-probability at index {index} is not finite")]
    NonFiniteLogProb { index: usize },
    #[error("no document has at least {n} tokens")]
    NoEligibleDocs { n: usize },
    #[error("no ratings")]
    EmptyRatings,
    #[error("{feature} score {value} for item {item_id} is outside 1..=5")]
    OutOfRangeScore {
        item_id: String,
        rater_id: String,
        feature: String,
        value: i64,
    },
    #[error("ratings line {line}: {message}")]
    RatingsParse { line: usize, message: String },
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and total candidate n-grams for one pair.
fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(gram, c)| (*c).min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Corpus-level BLEU with uniform weights over orders `1..=max_n`, as a
/// percentage.
pub fn bleu_n(
    candidates: &[TokenSeq],
    references: &[TokenSeq],
    max_n: usize,
) -> Result<f64, MetricError> {
    if !(1..=MAX_BLEU_ORDER).contains(&max_n) {
        return Err(MetricError::InvalidOrder { n: max_n });
    }
    check_pairs(candidates.len(), references.len())?;

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = candidates
            .iter()
            .zip(references)
            .map(|(c, r)| clipped_matches(c, r, n))
            .fold((0, 0), |(m, t), (dm, dt)| (m + dm, t + dt));
        if matched == 0 || total == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let c: usize = candidates.iter().map(|s| s.len()).sum();
    let r: usize = references.iter().map(|s| s.len()).sum();
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / max_n as f64).exp())
}

fn check_pairs(candidates: usize, references: usize) -> Result<(), MetricError> {
    if candidates != references {
        return Err(MetricError::LengthMismatch {
            candidates,
            references,
        });
    }
    if candidates == 0 {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<RougeScore, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySequence { index: None });
    }
    let l = lcs_len(candidate, reference) as f64;
    if l == 0.0 {
        return Ok(RougeScore {
            precision: 0.0,
            recall: 0.0,
            f: 0.0,
        });
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    Ok(RougeScore {
        precision: 100.0 * p,
        recall: 100.0 * r,
        // 2PR / (P + R) == 2L / (|c| + |r|)
        f: 100.0 * 2.0 * l / (candidate.len() + reference.len()) as f64,
    })
}

/// Mean per-pair ROUGE-L F1. Pairs are scored in parallel and summed in
/// input order, so the result matches a sequential run bit for bit.
pub fn corpus_rouge_l(candidates: &[TokenSeq], references: &[TokenSeq]) -> Result<f64, MetricError> {
    check_pairs(candidates.len(), references.len())?;
    let scores: Vec<f64> = candidates
        .par_iter()
        .zip(references)
        .enumerate()
        .map(|(i, (c, r))| {
            rouge_l(c, r)
                .map(|s| s.f)
                .map_err(|_| MetricError::EmptySequence { index: Some(i) })
        })
        .collect::<Result<_, _>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// `exp(-mean(logprobs))` over natural-log token probabilities.
pub fn perplexity(token_logprobs: &[f64]) -> Result<f64, MetricError> {
    if token_logprobs.is_empty() {
        return Err(MetricError::EmptyList);
    }
    for (index, lp) in token_logprobs.iter().enumerate() {
        if !lp.is_finite() {
            return Err(MetricError::NonFiniteLogProb { index });
        }
        if *lp > 0.0 {
            return Err(MetricError::PositiveLogProb { index });
        }
    }
    let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok((-mean).exp())
}

fn per_doc_mean(
    docs: &[TokenSeq],
    n: usize,
    score: impl Fn(&HashMap<&[String], usize>) -> f64 + Sync,
) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidOrder { n });
    }
    let values: Vec<f64> = docs
        .par_iter()
        .filter(|d| d.len() >= n)
        .map(|d| score(&ngram_counts(d, n)))
        .collect();
    if values.is_empty() {
        return Err(MetricError::NoEligibleDocs { n });
    }
    Ok(100.0 * values.iter().sum::<f64>() / values.len() as f64)
}

/// Unique n-gram types over n-gram tokens, per document.
pub fn distinct_n(docs: &[TokenSeq], n: usize) -> Result<f64, MetricError> {
    per_doc_mean(docs, n, |counts| {
        counts.len() as f64 / counts.values().sum::<usize>() as f64
    })
}

/// Types occurring at least twice over all types, per document.
pub fn repetition_n(docs: &[TokenSeq], n: usize) -> Result<f64, MetricError> {
    per_doc_mean(docs, n, |counts| {
        counts.values().filter(|c| **c >= 2).count() as f64 / counts.len() as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub perplexity: Option<f64>,
    pub bleu: BTreeMap<u8, f64>,
    pub rouge_l: f64,
    pub distinct_3: f64,
    pub repetition_3: f64,
    pub n_candidates: usize,
}

/// Tokenizes both sides and computes every metric. Log-probabilities from
/// all candidates are pooled into one perplexity.
pub fn metric_report(
    candidates: &[String],
    references: &[String],
    logprobs: Option<&[Vec<f64>]>,
) -> Result<MetricReport, MetricError> {
    check_pairs(candidates.len(), references.len())?;
    let cands: Vec<TokenSeq> = candidates.iter().map(|s| tokenize(s)).collect();
    let refs: Vec<TokenSeq> = references.iter().map(|s| tokenize(s)).collect();

    let perplexity = logprobs
        .map(|lists| perplexity(&lists.concat()))
        .transpose()?;
    let mut bleu = BTreeMap::new();
    for n in REPORT_BLEU_ORDERS {
        bleu.insert(n, bleu_n(&cands, &refs, n as usize)?);
    }
    Ok(MetricReport {
        perplexity,
        bleu,
        rouge_l: corpus_rouge_l(&cands, &refs)?,
        distinct_3: distinct_n(&cands, REPORT_NGRAM)?,
        repetition_3: repetition_n(&cands, REPORT_NGRAM)?,
        n_candidates: cands.len(),
    })
}

impl MetricReport {
    /// Rows in display order, `None` where the value is absent.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("Perplexity", self.perplexity),
            ("BLEU-2 (%)", self.bleu.get(&2).copied()),
            ("BLEU-3 (%)", self.bleu.get(&3).copied()),
            ("BLEU-4 (%)", self.bleu.get(&4).copied()),
            ("ROUGE-L (%)", Some(self.rouge_l)),
            ("Distinct 3-gram (%)", Some(self.distinct_3)),
            ("Repetition 3-gram (%)", Some(self.repetition_3)),
        ]
    }
}

pub fn render_table(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24}{:>10}", "Metric", "Value");
    for (name, value) in report.rows() {
        let cell = value.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(out, "{name:<24}{cell:>10}");
    }
    out
}

pub const LIKERT_MIN: i64 = 1;
pub const LIKERT_MAX: i64 = 5;
pub const LIKERT_FEATURES: [&str; 5] = ["fluency", "coherence", "relevance", "likability", "creativity"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertScores {
    pub fluency: i64,
    pub coherence: i64,
    pub relevance: i64,
    pub likability: i64,
    pub creativity: i64,
}

impl LikertScores {
    pub fn uniform(v: i64) -> Self {
        Self {
            fluency: v,
            coherence: v,
            relevance: v,
            likability: v,
            creativity: v,
        }
    }

    pub fn as_array(&self) -> [i64; 5] {
        [
            self.fluency,
            self.coherence,
            self.relevance,
            self.likability,
            self.creativity,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertRating {
    pub item_id: String,
    pub rater_id: String,
    pub scores: LikertScores,
}

impl LikertRating {
    pub fn validate(&self) -> Result<(), MetricError> {
        for (feature, value) in LIKERT_FEATURES.iter().zip(self.scores.as_array()) {
            if !(LIKERT_MIN..=LIKERT_MAX).contains(&value) {
                return Err(MetricError::OutOfRangeScore {
                    item_id: self.item_id.clone(),
                    rater_id: self.rater_id.clone(),
                    feature: feature.to_string(),
                    value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub n_ratings: usize,
    pub fluency: FeatureStats,
    pub coherence: FeatureStats,
    pub relevance: FeatureStats,
    pub likability: FeatureStats,
    pub creativity: FeatureStats,
}

impl LikertSummary {
    pub fn features(&self) -> [(&'static str, &FeatureStats); 5] {
        [
            ("fluency", &self.fluency),
            ("coherence", &self.coherence),
            ("relevance", &self.relevance),
            ("likability", &self.likability),
            ("creativity", &self.creativity),
        ]
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Box-plot statistics. Quartiles are medians of the lower and upper
/// halves, each half including the median for odd-sized samples.
pub fn feature_stats(values: &[i64]) -> FeatureStats {
    let mut v: Vec<f64> = values.iter().map(|x| *x as f64).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let half = n.div_ceil(2);
    FeatureStats {
        mean: v.iter().sum::<f64>() / n as f64,
        median: median_sorted(&v),
        q1: median_sorted(&v[..half]),
        q3: median_sorted(&v[n - half..]),
        min: v[0],
        max: v[n - 1],
    }
}

pub fn likert_summary(ratings: &[LikertRating]) -> Result<LikertSummary, MetricError> {
    if ratings.is_empty() {
        return Err(MetricError::EmptyRatings);
    }
    for r in ratings {
        r.validate()?;
    }
    let column = |i: usize| -> FeatureStats {
        let values: Vec<i64> = ratings.iter().map(|r| r.scores.as_array()[i]).collect();
        feature_stats(&values)
    };
    Ok(LikertSummary {
        n_ratings: ratings.len(),
        fluency: column(0),
        coherence: column(1),
        relevance: column(2),
        likability: column(3),
        creativity: column(4),
    })
}

/// Reads `item_id,rater_id,fluency,coherence,relevance,likability,creativity`
/// records. A first row starting with `item_id` is taken as a header.
pub fn parse_ratings_csv(text: &str) -> Result<Vec<LikertRating>, MetricError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| MetricError::RatingsParse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let line = row.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && row.get(0).is_some_and(|f| f.eq_ignore_ascii_case("item_id")) {
            continue;
        }
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() != 7 {
            return Err(MetricError::RatingsParse {
                line,
                message: format!("expected 7 fields, found {}", row.len()),
            });
        }
        let mut scores = [0i64; 5];
        for (slot, field) in scores.iter_mut().zip(row.iter().skip(2)) {
            *slot = field.parse().map_err(|_| MetricError::RatingsParse {
                line,
                message: format!("score `{field}` is not an integer"),
            })?;
        }
        let rating = LikertRating {
            item_id: row[0].to_string(),
            rater_id: row[1].to_string(),
            scores: LikertScores {
                fluency: scores[0],
                coherence: scores[1],
                relevance: scores[2],
                likability: scores[3],
                creativity: scores[4],
            },
        };
        rating.validate()?;
        out.push(rating);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_tokens(s.split_whitespace())
    }

    fn round2(x: f64) -> f64 {
        format!("{x:.2}").parse().unwrap()
    }

    #[test]
    fn bleu_identity() {
        let a = [seq("a b c d")];
        assert_eq!(bleu_n(&a, &a, 2).unwrap(), 100.0);
    }

    #[test]
    fn bleu2_half_for_one_substitution() {
        let v = bleu_n(&[seq("a b c d")], &[seq("a b x d")], 2).unwrap();
        assert!((v - 50.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn bleu_clips_and_applies_brevity_penalty() {
        let v = bleu_n(&[seq("the the the the")], &[seq("a b c d the")], 1).unwrap();
        let expected = 100.0 * 0.25 * (1.0f64 - 5.0 / 4.0).exp();
        assert!((v - expected).abs() < 1e-12);
        assert_eq!(round2(v), 19.47);
    }

    #[test]
    fn bleu_errors() {
        assert_eq!(
            bleu_n(&[seq("a")], &[], 2),
            Err(MetricError::LengthMismatch { candidates: 1, references: 0 })
        );
        assert_eq!(bleu_n(&[], &[], 2), Err(MetricError::EmptyCorpus));
        assert_eq!(bleu_n(&[seq("a")], &[seq("a")], 5), Err(MetricError::InvalidOrder { n: 5 }));
        assert_eq!(bleu_n(&[seq("a")], &[seq("a")], 2).unwrap(), 0.0);
    }

    #[test]
    fn rouge_cases() {
        let s = seq("a b c d e");
        assert_eq!(rouge_l(&s, &s).unwrap().f, 100.0);
        let r = rouge_l(&seq("a b c d"), &seq("a c d e")).unwrap();
        assert_eq!((r.precision, r.recall, r.f), (75.0, 75.0, 75.0));
        assert_eq!(rouge_l(&seq("a b"), &seq("c d")).unwrap().f, 0.0);
        assert!(rouge_l(&seq(""), &seq("a")).is_err());
    }

    #[test]
    fn perplexity_cases() {
        let quarter = vec![(0.25f64).ln(); 17];
        assert!((perplexity(&quarter).unwrap() - 4.0).abs() < 1e-12);
        assert!((perplexity(&[-0.5, -1.5]).unwrap() - std::f64::consts::E).abs() < 1e-12);
        assert_eq!(perplexity(&[-1.0, 0.1]), Err(MetricError::PositiveLogProb { index: 1 }));
        assert_eq!(perplexity(&[]), Err(MetricError::EmptyList));
        assert_eq!(
            perplexity(&[f64::NEG_INFINITY]),
            Err(MetricError::NonFiniteLogProb { index: 0 })
        );
    }

    #[test]
    fn distinct_and_repetition_cases() {
        let d = [seq("a b a b a")];
        assert_eq!(round2(distinct_n(&d, 3).unwrap()), 66.67);
        assert_eq!(repetition_n(&d, 3).unwrap(), 50.0);
        assert_eq!(distinct_n(&[seq("a b c d")], 3).unwrap(), 100.0);
        assert_eq!(repetition_n(&[seq("a b c d")], 3).unwrap(), 0.0);
        assert_eq!(repetition_n(&[seq("a a a a")], 3).unwrap(), 100.0);
        let two = [seq("a b c"), seq("a a a a")];
        assert_eq!(distinct_n(&two, 3).unwrap(), 75.0);
        assert_eq!(distinct_n(&[seq("a b")], 3), Err(MetricError::NoEligibleDocs { n: 3 }));
    }

    #[test]
    fn likert_cases() {
        let r = |item: &str, v: i64| LikertRating {
            item_id: item.into(),
            rater_id: "r".into(),
            scores: LikertScores::uniform(v),
        };
        let s = likert_summary(&[r("a", 4), r("b", 4), r("c", 4)]).unwrap();
        for (_, f) in s.features() {
            assert_eq!((f.mean, f.q1, f.median, f.q3), (4.0, 4.0, 4.0, 4.0));
        }
        let st = feature_stats(&[3, 4, 5, 4]);
        assert_eq!((st.mean, st.median, st.q1, st.q3), (4.0, 4.0, 3.5, 4.5));
        let st = feature_stats(&[1, 2, 3, 4, 5]);
        assert_eq!((st.q1, st.median, st.q3), (2.0, 3.0, 4.0));
        let mut bad = r("x", 4);
        bad.scores.fluency = 6;
        assert!(matches!(
            likert_summary(&[bad]),
            Err(MetricError::OutOfRangeScore { value: 6, .. })
        ));
        assert_eq!(likert_summary(&[]), Err(MetricError::EmptyRatings));
    }

    #[test]
    fn ratings_csv_with_and_without_header() {
        let with = "item_id,rater_id,fluency,coherence,relevance,likability,creativity\nA,r1,4,3,2,5,1\n";
        let without = "A,r1,4,3,2,5,1\nB, r2 ,5,5,5,5,5\n";
        assert_eq!(parse_ratings_csv(with).unwrap().len(), 1);
        let rows = parse_ratings_csv(without).unwrap();
        assert_eq!(rows[1].rater_id, "r2");
        assert_eq!(rows[0].scores.likability, 5);
        assert!(matches!(
            parse_ratings_csv("A,r1,4,3,2,5,9"),
            Err(MetricError::OutOfRangeScore { .. })
        ));
        assert!(matches!(
            parse_ratings_csv("A,r1,4,3"),
            Err(MetricError::RatingsParse { line: 1, .. })
        ));
    }

    #[test]
    fn report_identity_and_row_order() {
        let texts = vec![
            "The detective opens the door and the storm rolls in.".to_string(),
            "A quiet town hides a loud secret under the old mill.".to_string(),
        ];
        let report = metric_report(&texts, &texts, None).unwrap();
        assert_eq!(report.bleu.values().copied().collect::<Vec<_>>(), vec![100.0; 3]);
        assert_eq!(report.rouge_l, 100.0);
        assert_eq!(report.perplexity, None);
        let names: Vec<&str> = report.rows().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "Perplexity",
                "BLEU-2 (%)",
                "BLEU-3 (%)",
                "BLEU-4 (%)",
                "ROUGE-L (%)",
                "Distinct 3-gram (%)",
                "Repetition 3-gram (%)"
            ]
        );
        let table = render_table(&report);
        assert!(table.lines().nth(1).unwrap().trim_end().ends_with('-'));
        assert!(table.contains("100.00"));
    }

    fn corpus() -> impl Strategy<Value = (Vec<Vec<u8>>, Vec<Vec<u8>>)> {
        (1usize..6).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(0u8..5, 1..15), n),
                prop::collection::vec(prop::collection::vec(0u8..5, 1..15), n),
            )
        })
    }

    fn to_seqs(docs: &[Vec<u8>], perm: &[usize]) -> Vec<TokenSeq> {
        docs.iter()
            .map(|d| TokenSeq::from_tokens(d.iter().map(|t| format!("w{}", perm[*t as usize]))))
            .collect()
    }

    proptest! {
        #[test]
        fn metrics_in_range_and_relabel_invariant(
            (cands, refs) in corpus(),
            perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let id: Vec<usize> = (0..5).collect();
            let (c, r) = (to_seqs(&cands, &id), to_seqs(&refs, &id));
            let (pc, pr) = (to_seqs(&cands, &perm), to_seqs(&refs, &perm));
            for n in 1..=4 {
                let b = bleu_n(&c, &r, n).unwrap();
                prop_assert!((0.0..=100.0 + 1e-9).contains(&b));
                prop_assert_eq!(b, bleu_n(&pc, &pr, n).unwrap());
            }
            let rl = corpus_rouge_l(&c, &r).unwrap();
            prop_assert!((0.0..=100.0 + 1e-9).contains(&rl));
            prop_assert_eq!(rl, corpus_rouge_l(&pc, &pr).unwrap());
            if c.iter().any(|d| d.len() >= 3) {
                prop_assert_eq!(distinct_n(&c, 3).unwrap(), distinct_n(&pc, 3).unwrap());
                prop_assert_eq!(repetition_n(&c, 3).unwrap(), repetition_n(&pc, 3).unwrap());
            }
        }

        #[test]
        fn rouge_f_is_symmetric(a in prop::collection::vec(0u8..4, 1..20), b in prop::collection::vec(0u8..4, 1..20)) {
            let id: Vec<usize> = (0..4).collect();
            let s = to_seqs(&[a, b], &id);
            prop_assert_eq!(rouge_l(&s[0], &s[1]).unwrap().f, rouge_l(&s[1], &s[0]).unwrap().f);
        }

        #[test]
        fn identical_corpora_score_full(docs in prop::collection::vec(prop::collection::vec(0u8..6, 4..20), 1..5)) {
            let id: Vec<usize> = (0..6).collect();
            let s = to_seqs(&docs, &id);
            prop_assert!((bleu_n(&s, &s, 4).unwrap() - 100.0).abs() < 1e-9);
            prop_assert_eq!(corpus_rouge_l(&s, &s).unwrap(), 100.0);
        }

        #[test]
        fn uniform_perplexity_identity(v in 1u32..200, k in 1usize..300) {
            let lp = vec![(1.0 / v as f64).ln(); k];
            prop_assert!((perplexity(&lp).unwrap() - v as f64).abs() < 1e-9 * v as f64);
        }

        #[test]
        fn likert_mean_is_order_invariant(
            scores in prop::collection::vec(1i64..=5, 1..30).prop_shuffle(),
        ) {
            let mut sorted = scores.clone();
            sorted.sort();
            let a = feature_stats(&scores);
            let b = feature_stats(&sorted);
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert!(a.min <= a.q1 && a.q1 <= a.median && a.median <= a.q3 && a.q3 <= a.max);
        }
    }
}
