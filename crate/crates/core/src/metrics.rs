//! ROUGE-N / ROUGE-L F1, corpus BLEU-4 and a paired bootstrap test.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Clipped overlap and total candidate n-gram count.
fn clipped_overlap<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (overlap, candidate.len().saturating_sub(n - 1))
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F1 with clipped n-gram counts.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (overlap, cand_total) = clipped_overlap(candidate, reference, n);
    f1(overlap, cand_total, reference.len().saturating_sub(n - 1))
}

pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x.as_ref() == y.as_ref() {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Corpus BLEU-4: pooled clipped precisions, uniform geometric mean, brevity
/// penalty `exp(1 − r/c)` when `c ≤ r`. Any zero precision gives 0.
pub fn bleu4<T: AsRef<str>>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Invalid(format!(
            "bleu4: {} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Invalid("bleu4: empty corpus".into()));
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (mut hit, mut total) = (0usize, 0usize);
        for (c, r) in candidates.iter().zip(references) {
            let (o, t) = clipped_overlap(c, r, n);
            hit += o;
            total += t;
        }
        if hit == 0 {
            return Ok(0.0);
        }
        log_sum += (hit as f64 / total as f64).ln();
    }
    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    let bp = if c <= r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * (log_sum / 4.0).exp())
}

/// Two-sided paired bootstrap on the mean difference `mean(a − b)`: the
/// fraction of resamples whose centered difference is at least as large in
/// magnitude as the observed one.
pub fn paired_bootstrap(a: &[f64], b: &[f64], n_resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "paired test: {} scores against {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Invalid("paired test: no scores".into()));
    }
    if n_resamples < 1000 {
        return Err(Error::Invalid("paired test: at least 1000 resamples required".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..n_resamples {
        let mut s = 0.0;
        for _ in 0..n {
            s += diffs[rng.gen_range(0..n)];
        }
        if (s / n as f64 - observed).abs() >= observed.abs() {
            extreme += 1;
        }
    }
    Ok(extreme as f64 / n_resamples as f64)
}

/// Corpus scores in `[0,1]` with the per-example lists behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge3: f64,
    pub rouge_l: f64,
    pub bleu4: f64,
    pub n: usize,
    pub per_example: BTreeMap<&'static str, Vec<f64>>,
}

pub const PER_EXAMPLE_METRICS: [&str; 4] = ["rouge1", "rouge2", "rouge3", "rougeL"];

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl MetricReport {
    pub fn compute<T: AsRef<str>>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<Self> {
        let bleu = bleu4(candidates, references)?;
        let pairs: Vec<(&Vec<T>, &Vec<T>)> = candidates.iter().zip(references).collect();
        let mut per_example = BTreeMap::new();
        for (k, name) in PER_EXAMPLE_METRICS.iter().enumerate() {
            let scores = pairs
                .iter()
                .map(|(c, r)| if k < 3 { rouge_n(c, r, k + 1) } else { rouge_l(c, r) })
                .collect::<Vec<_>>();
            per_example.insert(*name, scores);
        }
        Ok(MetricReport {
            rouge1: mean(&per_example["rouge1"]),
            rouge2: mean(&per_example["rouge2"]),
            rouge3: mean(&per_example["rouge3"]),
            rouge_l: mean(&per_example["rougeL"]),
            bleu4: bleu,
            n: candidates.len(),
            per_example,
        })
    }

    /// Scores ×100 in column order R-1, R-2, R-3, R-L, BLEU.
    pub fn percentages(&self) -> [f64; 5] {
        [self.rouge1, self.rouge2, self.rouge3, self.rouge_l, self.bleu4].map(|v| v * 100.0)
    }

    /// `{"rouge1":…,"rouge2":…,"rouge3":…,"rougeL":…,"bleu4":…,"n":…}` with
    /// two decimals, followed by any `extra` members (already JSON-encoded).
    pub fn to_json(&self, extra: &[(&str, String)]) -> String {
        let [r1, r2, r3, rl, b] = self.percentages();
        let mut out = format!(
            "{{\"rouge1\":{r1:.2},\"rouge2\":{r2:.2},\"rouge3\":{r3:.2},\"rougeL\":{rl:.2},\"bleu4\":{b:.2},\"n\":{}",
            self.n
        );
        for (key, value) in extra {
            out.push_str(&format!(",{}:{value}", serde_json::Value::from(*key)));
        }
        out.push_str("}\n");
        out
    }

    pub fn table_header() -> String {
        format!(
            "{:<16}{:>8}{:>8}{:>8}{:>8}{:>8}",
            "Model", "R.-1", "R.-2", "R.-3", "R.-L", "BLEU"
        )
    }

    pub fn table_row(&self, name: &str) -> String {
        let [r1, r2, r3, rl, b] = self.percentages();
        format!("{name:<16}{r1:>8.2}{r2:>8.2}{r3:>8.2}{rl:>8.2}{b:>8.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        let x = toks("did you borrow the money ?");
        for n in 1..=3 {
            assert_eq!(rouge_n(&x, &x, n), 1.0);
        }
        assert_eq!(rouge_l(&x, &x), 1.0);
        let y = toks("no idea at all");
        assert_eq!(rouge_n(&x, &y, 1), 0.0);
        assert_eq!(rouge_l(&x, &y), 0.0);
    }

    #[test]
    fn rouge1_hand_case() {
        let r = rouge_n(&toks("a b c"), &toks("a c d"), 1);
        assert!((r - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn rouge_clips_repeated_ngrams() {
        let r = rouge_n(&toks("a a a a"), &toks("a b"), 1);
        let (p, rc) = (1.0 / 4.0, 1.0 / 2.0);
        assert!((r - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_hand_case() {
        assert_eq!(lcs_len(&toks("a b c d"), &toks("a c b d")), 3);
        assert!((rouge_l(&toks("a b c d"), &toks("a c b d")) - 0.75).abs() < 1e-9);
        assert_eq!(rouge_l(&[] as &[String], &toks("a")), 0.0);
    }

    #[test]
    fn empty_ngram_sets_score_zero() {
        assert_eq!(rouge_n(&toks("a"), &toks("a"), 2), 0.0);
        assert_eq!(rouge_n(&toks("a b"), &toks("a b"), 0), 0.0);
    }

    #[test]
    fn bleu_cases() {
        let c = vec![toks("a b c d e")];
        assert!((bleu4(&c, &c).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(bleu4(&[toks("a b c")], &[toks("a b c d")]).unwrap(), 0.0);
        assert!(bleu4(&c, &[]).is_err());
    }

    #[test]
    fn bleu_brevity_penalty() {
        let cands = vec![toks("a b c d"), toks("e f g")];
        let refs = vec![toks("a b c d"), toks("e f g h i")];
        let got = bleu4(&cands, &refs).unwrap();
        // Pooled precisions: unigrams 7/7, bigrams 5/5, trigrams 3/3, 4-grams 1/1.
        let bp = (1.0f64 - 9.0 / 7.0).exp();
        assert!((got - bp).abs() < 1e-9);
        assert!(((1.0f64 - 4.0 / 3.0).exp() - 0.71653).abs() < 1e-5);
    }

    #[test]
    fn bleu_matches_hand_pooling() {
        let cands = vec![toks("the cat sat on the mat"), toks("a dog ran"), toks("he said no no")];
        let refs = vec![
            toks("the cat is on the mat"),
            toks("a dog ran away"),
            toks("he said no"),
        ];
        // 1-grams: 5/6 + 3/3 + 3/4 = 11/13; 2-grams: 3/5 + 2/2 + 2/3 = 7/10
        // 3-grams: 1/4 + 1/1 + 1/2 = 3/7;   4-grams: 0/3 + 0/0 + 0/1 = 0/4
        assert_eq!(bleu4(&cands, &refs).unwrap(), 0.0);
        let cands = vec![toks("the cat sat on the mat"), toks("a dog ran fast")];
        let refs = vec![toks("the cat sat on a mat"), toks("a dog ran fast today")];
        // 1-grams: 5/6 + 4/4; 2-grams: 3/5 + 3/3; 3-grams: 2/4 + 2/2; 4-grams: 1/3 + 1/1
        let p = [9.0 / 10.0, 6.0 / 8.0, 4.0 / 6.0, 2.0 / 4.0];
        let geo = (p.iter().map(|v: &f64| v.ln()).sum::<f64>() / 4.0).exp();
        let bp = (1.0f64 - 11.0 / 10.0).exp();
        assert!((bleu4(&cands, &refs).unwrap() - bp * geo).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_cases() {
        let a: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        assert!(paired_bootstrap(&a, &a, 1000, 3).unwrap() >= 0.9);
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        assert!(paired_bootstrap(&b, &a, 1000, 3).unwrap() < 0.001);
        let noisy: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + (i % 3) as f64 - 1.0).collect();
        assert_eq!(
            paired_bootstrap(&noisy, &a, 2000, 9).unwrap(),
            paired_bootstrap(&noisy, &a, 2000, 9).unwrap()
        );
        assert!(paired_bootstrap(&a, &a[1..], 1000, 0).is_err());
        assert!(paired_bootstrap(&a, &a, 999, 0).is_err());
    }

    #[test]
    fn report_json_layout() {
        let c = vec![toks("a b c d e")];
        let r = MetricReport::compute(&c, &c).unwrap();
        assert_eq!(
            r.to_json(&[("version", "1".into())]),
            "{\"rouge1\":100.00,\"rouge2\":100.00,\"rouge3\":100.00,\"rougeL\":100.00,\"bleu4\":100.00,\"n\":1,\"version\":1}\n"
        );
        assert_eq!(r.per_example["rouge2"], vec![1.0]);
        assert!(MetricReport::table_header().find("R.-1") < MetricReport::table_header().find("BLEU"));
    }

    proptest! {
        #[test]
        fn self_scores_are_one(words in proptest::collection::vec("[a-e]", 1..12)) {
            prop_assert_eq!(rouge_n(&words, &words, 1), 1.0);
            prop_assert_eq!(rouge_l(&words, &words), 1.0);
        }

        #[test]
        fn corruption_never_helps(
            cand in proptest::collection::vec("[a-e]", 1..10),
            reference in proptest::collection::vec("[a-e]", 1..10),
            mask in proptest::collection::vec(any::<bool>(), 10),
        ) {
            let corrupted: Vec<String> = cand
                .iter()
                .zip(&mask)
                .enumerate()
                .map(|(i, (w, &m))| if m { format!("zz{i}") } else { w.clone() })
                .collect();
            for n in 1..=3 {
                prop_assert!(rouge_n(&corrupted, &reference, n) <= rouge_n(&cand, &reference, n) + 1e-12);
            }
            prop_assert!(rouge_l(&corrupted, &reference) <= rouge_l(&cand, &reference) + 1e-12);
        }
    }
}
