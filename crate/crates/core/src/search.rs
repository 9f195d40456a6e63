//! Greedy and beam decoding over any step-wise scorer.

use std::cmp::Ordering;

use crate::data::{BOS, EOS, PAD, UNK};
use crate::{Error, Result};

/// Distribution over the (extended) vocabulary at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub probs: Vec<f64>,
    /// Extended id of the context token with the highest attention, used in
    /// place of `<unk>` when one is chosen.
    pub copy_hint: Option<usize>,
}

pub trait StepScorer {
    type State: Clone;

    fn start(&mut self) -> Result<Self::State>;

    /// Feeds `prev` and returns the next-token distribution with the advanced state.
    fn step(&mut self, state: &Self::State, prev: usize) -> Result<(StepOutput, Self::State)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids, without the closing EOS.
    pub tokens: Vec<usize>,
    /// Sum of log-probabilities of every chosen id, EOS included.
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Decoded length counting the EOS if one was emitted.
    pub fn length(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    pub fn normalized_score(&self) -> f64 {
        self.log_prob / self.length().max(1) as f64
    }
}

fn selectable(id: usize) -> bool {
    id != PAD && id != BOS
}

fn realize(id: usize, out: &StepOutput) -> usize {
    match (id, out.copy_hint) {
        (UNK, Some(hint)) => hint,
        _ => id,
    }
}

fn by_prob_then_id(probs: &[f64], a: usize, b: usize) -> Ordering {
    probs[b]
        .partial_cmp(&probs[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Highest-probability selectable id; ties go to the lowest id.
pub fn argmax(probs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (id, &p) in probs.iter().enumerate() {
        if !selectable(id) || p.is_nan() {
            continue;
        }
        if best.is_none_or(|b| p > probs[b]) {
            best = Some(id);
        }
    }
    best
}

fn top_k(probs: &[f64], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..probs.len())
        .filter(|&id| selectable(id) && !probs[id].is_nan())
        .collect();
    ids.sort_by(|&a, &b| by_prob_then_id(probs, a, b));
    ids.truncate(k);
    ids
}

fn check_limits(max_len: usize, beam: usize) -> Result<()> {
    if max_len == 0 {
        return Err(Error::Invalid("max_len must be at least 1".into()));
    }
    if beam == 0 {
        return Err(Error::Invalid("beam size must be at least 1".into()));
    }
    Ok(())
}

pub fn greedy_decode<S: StepScorer>(scorer: &mut S, max_len: usize) -> Result<Hypothesis> {
    check_limits(max_len, 1)?;
    let mut state = scorer.start()?;
    let mut prev = BOS;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let (out, next) = scorer.step(&state, prev)?;
        let Some(id) = argmax(&out.probs) else {
            break;
        };
        hyp.log_prob += out.probs[id].ln();
        if id == EOS {
            hyp.finished = true;
            break;
        }
        let id = realize(id, &out);
        hyp.tokens.push(id);
        state = next;
        prev = id;
    }
    Ok(hyp)
}

struct Live<T> {
    hyp: Hypothesis,
    state: T,
    prev: usize,
}

/// Length-normalized beam search. With `beam == 1` it makes exactly the
/// greedy choices.
pub fn beam_decode<S: StepScorer>(scorer: &mut S, beam: usize, max_len: usize) -> Result<Hypothesis> {
    check_limits(max_len, beam)?;
    let mut live = vec![Live {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        state: scorer.start()?,
        prev: BOS,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        // (score, parent, rank, realized id, raw id, output state)
        let mut cands = Vec::new();
        for (parent, l) in live.iter().enumerate() {
            let (out, next) = scorer.step(&l.state, l.prev)?;
            for (rank, id) in top_k(&out.probs, beam).into_iter().enumerate() {
                let score = l.hyp.log_prob + out.probs[id].ln();
                cands.push((score, parent, rank, realize(id, &out), id, next.clone()));
            }
        }
        cands.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut next_live = Vec::new();
        for (score, parent, _, id, raw, state) in cands.into_iter().take(beam) {
            let mut hyp = live[parent].hyp.clone();
            hyp.log_prob = score;
            if raw == EOS {
                hyp.finished = true;
                done.push(hyp);
            } else {
                hyp.tokens.push(id);
                next_live.push(Live { hyp, state, prev: id });
            }
        }
        live = next_live;
        if live.is_empty() || done.len() >= beam {
            break;
        }
    }
    let pool = if done.is_empty() {
        live.into_iter().map(|l| l.hyp).collect()
    } else {
        done
    };
    pool.into_iter()
        .reduce(|best, h| {
            if h.normalized_score() > best.normalized_score() {
                h
            } else {
                best
            }
        })
        .ok_or_else(|| Error::Invalid("no selectable token".into()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    /// Scorer backed by a table from prefixes to distributions.
    pub struct TableScorer {
        pub table: HashMap<Vec<usize>, Vec<f64>>,
        pub fallback: Vec<f64>,
        pub hint: Option<usize>,
    }

    impl StepScorer for TableScorer {
        type State = Vec<usize>;

        fn start(&mut self) -> Result<Vec<usize>> {
            Ok(Vec::new())
        }

        fn step(&mut self, state: &Vec<usize>, prev: usize) -> Result<(StepOutput, Vec<usize>)> {
            let mut next = state.clone();
            if prev != BOS {
                next.push(prev);
            }
            let probs = self.table.get(&next).cloned().unwrap_or_else(|| self.fallback.clone());
            Ok((
                StepOutput {
                    probs,
                    copy_hint: self.hint,
                },
                next,
            ))
        }
    }

    const A: usize = 4;
    const B: usize = 5;

    fn dist(pairs: &[(usize, f64)]) -> Vec<f64> {
        let mut v = vec![0.0; 6];
        for &(i, p) in pairs {
            v[i] = p;
        }
        v
    }

    fn trap_table() -> TableScorer {
        let mut table = HashMap::new();
        table.insert(vec![], dist(&[(A, 0.6), (B, 0.4)]));
        table.insert(vec![A], dist(&[(EOS, 0.4), (A, 0.3), (B, 0.3)]));
        table.insert(vec![B], dist(&[(EOS, 0.9), (A, 0.05), (B, 0.05)]));
        TableScorer {
            table,
            fallback: dist(&[(EOS, 1.0)]),
            hint: None,
        }
    }

    fn sequence_prob(t: &mut TableScorer, seq: &[usize]) -> f64 {
        let mut state = t.start().unwrap();
        let mut prev = BOS;
        let mut p = 1.0;
        for &id in seq {
            let (out, next) = t.step(&state, prev).unwrap();
            p *= out.probs[id];
            state = next;
            prev = id;
        }
        p
    }

    #[test]
    fn beam_two_beats_greedy_on_trap_table() {
        let mut t = trap_table();
        let g = greedy_decode(&mut t, 2).unwrap();
        assert_eq!(g.tokens, vec![A]);
        let b = beam_decode(&mut t, 2, 2).unwrap();
        assert_eq!(b.tokens, vec![B]);
        assert!(b.finished);

        let mut best = (f64::MIN, vec![]);
        for t1 in 3..6 {
            for t2 in 3..6 {
                let seq = if t1 == EOS { vec![t1] } else { vec![t1, t2] };
                let p = sequence_prob(&mut t, &seq);
                if p > best.0 {
                    best = (p, seq);
                }
            }
        }
        assert_eq!(best.1, vec![B, EOS]);
        assert!((b.log_prob - best.0.ln()).abs() < 1e-12);
    }

    #[test]
    fn wider_beams_never_lose_probability_on_fixed_tables() {
        let mut t = trap_table();
        let mut last = f64::MIN;
        for width in 1..=4 {
            let h = beam_decode(&mut t, width, 2).unwrap();
            assert!(h.log_prob >= last - 1e-12);
            last = h.log_prob;
        }
    }

    #[test]
    fn max_len_one_yields_single_token() {
        let mut t = trap_table();
        let g = greedy_decode(&mut t, 1).unwrap();
        assert_eq!(g.tokens.len(), 1);
        assert!(!g.finished);
        assert!(greedy_decode(&mut t, 0).is_err());
        assert!(beam_decode(&mut t, 0, 3).is_err());
    }

    #[test]
    fn reserved_ids_are_never_emitted() {
        let mut t = TableScorer {
            table: HashMap::new(),
            fallback: vec![0.5, 0.0, 0.4, 0.0, 0.1, 0.0],
            hint: None,
        };
        let g = greedy_decode(&mut t, 5).unwrap();
        assert_eq!(g.tokens, vec![A; 5]);
        let b = beam_decode(&mut t, 3, 5).unwrap();
        assert!(b.tokens.iter().all(|&id| id != PAD && id != BOS));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0, 0.2, 0.4, 0.4]), Some(4));
        assert_eq!(argmax(&[0.9, 0.05, 0.05]), Some(1));
        assert_eq!(argmax(&[1.0, f64::NAN, 0.0]), None);
    }

    #[test]
    fn unk_is_replaced_by_copy_hint() {
        let mut table = HashMap::new();
        table.insert(vec![], dist(&[(UNK, 0.7), (A, 0.3)]));
        table.insert(vec![9], dist(&[(EOS, 1.0)]));
        let mut t = TableScorer {
            table,
            fallback: dist(&[(B, 1.0)]),
            hint: Some(9),
        };
        let g = greedy_decode(&mut t, 4).unwrap();
        assert_eq!(g.tokens, vec![9]);
        assert!(g.finished);
        assert_eq!(beam_decode(&mut t, 1, 4).unwrap(), g);
    }

    #[test]
    fn normalization_counts_eos() {
        let h = Hypothesis {
            tokens: vec![4, 5],
            log_prob: -3.0,
            finished: true,
        };
        assert_eq!(h.length(), 3);
        assert!((h.normalized_score() + 1.0).abs() < 1e-15);
    }

    fn random_table(seed_probs: &[Vec<f64>]) -> TableScorer {
        let mut table = HashMap::new();
        let mut k = 0;
        let mut add = |prefix: Vec<usize>, table: &mut HashMap<Vec<usize>, Vec<f64>>| {
            let raw = &seed_probs[k % seed_probs.len()];
            k += 1;
            let mut v = vec![0.0, 0.0, 0.0];
            v.extend(raw.iter().copied());
            let s: f64 = v.iter().sum();
            table.insert(prefix, v.into_iter().map(|x| x / s).collect());
        };
        add(vec![], &mut table);
        for a in 4..7 {
            add(vec![a], &mut table);
            for b in 4..7 {
                add(vec![a, b], &mut table);
            }
        }
        TableScorer {
            table,
            fallback: vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            hint: None,
        }
    }

    proptest! {
        #[test]
        fn beam_one_equals_greedy(rows in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 4), 13)) {
            let mut t = random_table(&rows);
            let g = greedy_decode(&mut t, 4).unwrap();
            let b = beam_decode(&mut t, 1, 4).unwrap();
            prop_assert_eq!(g, b);
        }
    }
}
