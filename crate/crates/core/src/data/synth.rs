//! Template-driven private-loan debate generator.
//!
//! Each dialogue opens with the plaintiff's claim and then walks a scripted
//! subset of intents in a fixed order (identity check, loan amount, interest
//! agreement, repayment, spouse liability, guarantee). Every intent expands to
//! one to four judge-question / litigant-answer exchanges whose slots are
//! filled with anonymized parties, amounts and dates. Turns are annotated
//! with the knowledge elements their intent covers. Output depends only on
//! the config.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Dialogue, FileHeader, Role, Utterance, CORPUS_FORMAT};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_dialogues: usize,
    pub seed: u64,
    /// Size of the pool that `<person_k>` placeholders are drawn from.
    pub n_persons: usize,
    /// Number of distinct loan amounts in use.
    pub n_amounts: usize,
}

impl SynthConfig {
    pub fn new(n_dialogues: usize, seed: u64) -> Self {
        SynthConfig {
            n_dialogues,
            seed,
            n_persons: 40,
            n_amounts: 30,
        }
    }

    fn to_map(&self) -> BTreeMap<String, String> {
        [
            ("synth.n_dialogues", self.n_dialogues.to_string()),
            ("synth.seed", self.seed.to_string()),
            ("synth.n_persons", self.n_persons.to_string()),
            ("synth.n_amounts", self.n_amounts.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Intent labels, in script order. Not consumed by the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Intent {
    Claim,
    IdentityCheck,
    LoanAmount,
    InterestAgreement,
    Repayment,
    SpouseLiability,
    Guarantee,
}

impl Intent {
    pub fn elements(self) -> &'static [&'static str] {
        match self {
            Intent::Claim => &["claim"],
            Intent::IdentityCheck => &["party_identity", "relationship"],
            Intent::LoanAmount => &["loan_amount", "borrowing_time"],
            Intent::InterestAgreement => &["interest_rate", "loan_agreement"],
            Intent::Repayment => &["repayment_status", "repayment_deadline"],
            Intent::SpouseLiability => &["marital_status", "spouse_liability"],
            Intent::Guarantee => &["guarantor", "delivery_evidence"],
        }
    }
}

/// Probability that each optional intent appears in a script.
const SCRIPT: [(Intent, f64); 6] = [
    (Intent::IdentityCheck, 0.5),
    (Intent::LoanAmount, 1.0),
    (Intent::InterestAgreement, 0.4),
    (Intent::Repayment, 0.6),
    (Intent::SpouseLiability, 0.3),
    (Intent::Guarantee, 0.15),
];

/// Exchanges per intent: 1, 2, 3 or 4 with these weights.
const EXCHANGE_WEIGHTS: [f64; 4] = [0.4, 0.35, 0.2, 0.05];

/// A judge question, who it is put to, and the answers that party may give.
struct Exchange {
    question: &'static str,
    responder: Role,
    answers: &'static [&'static str],
}

const fn ex(question: &'static str, responder: Role, answers: &'static [&'static str]) -> Exchange {
    Exchange {
        question,
        responder,
        answers,
    }
}

use Role::{Defendant as D, Plaintiff as P, Witness as W};

const IDENTITY: &[Exchange] = &[
    ex(
        "Plaintiff, what is your relationship with {def}?",
        P,
        &["Friends.", "We are colleagues.", "Former classmates."],
    ),
    ex(
        "Defendant, do you confirm that you are {def}?",
        D,
        &["Yes.", "Yes, that is me."],
    ),
    ex(
        "Plaintiff, how did you get to know {def}?",
        P,
        &["Through a friend.", "We worked in the same factory."],
    ),
    ex(
        "Defendant, what is your relationship with {pla}?",
        D,
        &["Friends.", "We used to be neighbours."],
    ),
];

const LOAN: &[Exchange] = &[
    ex(
        "Plaintiff, how much did {def} borrow from you?",
        P,
        &["{amount} yuan.", "In total {amount} yuan."],
    ),
    ex(
        "When did {def} borrow the money?",
        P,
        &["On {date}.", "It was on {date}."],
    ),
    ex(
        "Defendant, did you receive the {amount} yuan?",
        D,
        &["Yes, I received it.", "No, I only received part of it."],
    ),
    ex(
        "How was the money delivered?",
        P,
        &["By bank transfer.", "In cash.", "Through an online payment."],
    ),
    ex(
        "What did {def} borrow money for at that time?",
        P,
        &["To operate a supermarket.", "To buy a car.", "I do not know."],
    ),
];

const INTEREST: &[Exchange] = &[
    ex(
        "Plaintiff, was there any agreement on interest?",
        P,
        &["Yes, {rate} per month.", "No, there was no agreement."],
    ),
    ex(
        "Defendant, do you agree with the interest rate of {rate}?",
        D,
        &["No, that is too high.", "Yes, I agree."],
    ),
    ex(
        "Is there a written loan agreement?",
        P,
        &["Yes, there is an IOU.", "No, it was a verbal agreement."],
    ),
];

const REPAYMENT: &[Exchange] = &[
    ex(
        "Defendant, have you repaid any of the money?",
        D,
        &["I repaid {amount} yuan.", "Not yet.", "I have repaid all of it."],
    ),
    ex(
        "When was the repayment due?",
        P,
        &["On {date}.", "There was no deadline."],
    ),
    ex(
        "Plaintiff, did you ask {def} for repayment?",
        P,
        &["Yes, many times.", "Yes, on {date}."],
    ),
    ex(
        "Defendant, why have you not repaid the loan?",
        D,
        &["My business failed.", "I have no money now."],
    ),
];

const SPOUSE: &[Exchange] = &[
    ex(
        "Defendant, who paid your living expenses with {spouse}?",
        D,
        &["It is my expenditure.", "We shared the expenses."],
    ),
    ex(
        "When {def} borrowed money from you, did you agree that it was his personal debt?",
        P,
        &["No.", "Yes."],
    ),
    ex(
        "Plaintiff, do you know whether {spouse} participated in gambling?",
        P,
        &["I don't know. I'm not with him.", "Yes, I heard so."],
    ),
    ex(
        "Defendant, when did you get divorced?",
        D,
        &["On {date}.", "We are not divorced."],
    ),
    ex("Who pays for the family expenses?", D, &["Me.", "My wife."]),
];

const GUARANTEE: &[Exchange] = &[
    ex(
        "Witness, were you present when the money was delivered?",
        W,
        &["Yes, I saw it.", "No, I was not there."],
    ),
    ex(
        "Witness, did you sign the IOU as a guarantor?",
        W,
        &["Yes, I did.", "No, I only witnessed it."],
    ),
    ex(
        "Plaintiff, is {witness} the guarantor of this loan?",
        P,
        &["Yes.", "No, only a witness."],
    ),
];

const CLAIMS: &[&str] = &[
    "I request the defendant to repay {amount} yuan and the interest.",
    "I ask the court to order {def} to return {amount} yuan.",
];

const INTERJECTIONS: &[&str] = &[
    "That is not true.",
    "I heard the people say they were in the same circle.",
    "I have evidence for this.",
];

fn exchanges(intent: Intent) -> &'static [Exchange] {
    match intent {
        Intent::Claim => &[],
        Intent::IdentityCheck => IDENTITY,
        Intent::LoanAmount => LOAN,
        Intent::InterestAgreement => INTEREST,
        Intent::Repayment => REPAYMENT,
        Intent::SpouseLiability => SPOUSE,
        Intent::Guarantee => GUARANTEE,
    }
}

struct Slots {
    pla: String,
    def: String,
    spouse: String,
    witness: String,
    amount: String,
    date: String,
    rate: String,
}

impl Slots {
    fn draw(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Slots {
        let mut people: Vec<usize> = (1..=cfg.n_persons.max(4)).collect();
        people.shuffle(rng);
        let person = |k: usize| format!("<person_{}>", people[k]);
        Slots {
            pla: person(0),
            def: person(1),
            spouse: person(2),
            witness: person(3),
            amount: (10_000 * rng.gen_range(1..=cfg.n_amounts.max(1))).to_string(),
            date: format!(
                "{}-{:02}-{:02}",
                rng.gen_range(2012..=2019),
                rng.gen_range(1..=12),
                rng.gen_range(1..=28)
            ),
            rate: format!("{}%", rng.gen_range(1..=3)),
        }
    }

    fn fill(&self, template: &str) -> String {
        template
            .replace("{pla}", &self.pla)
            .replace("{def}", &self.def)
            .replace("{spouse}", &self.spouse)
            .replace("{witness}", &self.witness)
            .replace("{amount}", &self.amount)
            .replace("{date}", &self.date)
            .replace("{rate}", &self.rate)
    }
}

fn turn(role: Role, text: String, intent: Intent) -> Utterance {
    let elements = intent.elements().iter().map(|e| e.to_string()).collect();
    Utterance::new(role, text, elements).expect("templates are non-empty")
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn exchange_count(rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, w) in EXCHANGE_WEIGHTS.iter().enumerate() {
        acc += w;
        if u < acc {
            return k + 1;
        }
    }
    EXCHANGE_WEIGHTS.len()
}

/// One dialogue together with the intent of each turn.
pub fn generate_dialogue(rng: &mut ChaCha8Rng, cfg: &SynthConfig, id: String) -> (Dialogue, Vec<Intent>) {
    let slots = Slots::draw(rng, cfg);
    let mut turns = Vec::new();
    let mut intents = Vec::new();
    let mut push = |u: Utterance, i: Intent| {
        turns.push(u);
        intents.push(i);
    };

    push(
        turn(Role::Judge, "Plaintiff, what are your claims?".into(), Intent::Claim),
        Intent::Claim,
    );
    push(
        turn(Role::Plaintiff, slots.fill(pick(rng, CLAIMS)), Intent::Claim),
        Intent::Claim,
    );

    for (intent, p) in SCRIPT {
        if rng.gen::<f64>() >= p {
            continue;
        }
        let pool = exchanges(intent);
        let k = exchange_count(rng).min(pool.len());
        let mut chosen: Vec<usize> = (0..pool.len()).collect();
        chosen.shuffle(rng);
        chosen.truncate(k);
        chosen.sort_unstable();
        for idx in chosen {
            let e = &pool[idx];
            push(turn(Role::Judge, slots.fill(e.question), intent), intent);
            push(turn(e.responder, slots.fill(pick(rng, e.answers)), intent), intent);
            if e.responder != Role::Witness && rng.gen::<f64>() < 0.12 {
                let other = if e.responder == Role::Plaintiff {
                    Role::Defendant
                } else {
                    Role::Plaintiff
                };
                push(turn(other, pick(rng, INTERJECTIONS).to_string(), intent), intent);
            }
        }
    }
    (Dialogue { id, turns }, intents)
}

/// Generates `n_dialogues` debates. Identical configs give identical corpora.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dialogues = (0..cfg.n_dialogues)
        .map(|k| generate_dialogue(&mut rng, cfg, format!("synth-{}-{k:05}", cfg.seed)).0)
        .collect();
    Corpus {
        header: Some(FileHeader::new(CORPUS_FORMAT, cfg.to_map())),
        dialogues,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{extract_all, write_corpus};

    #[test]
    fn deterministic_given_seed() {
        let cfg = SynthConfig::new(1, 7);
        let a = write_corpus(&generate_synthetic_corpus(&cfg));
        let b = write_corpus(&generate_synthetic_corpus(&cfg));
        assert_eq!(a, b);
        let c = write_corpus(&generate_synthetic_corpus(&SynthConfig::new(1, 8)));
        assert_ne!(a, c);
    }

    #[test]
    fn judge_turns_are_questions() {
        let corpus = generate_synthetic_corpus(&SynthConfig::new(200, 3));
        for d in &corpus.dialogues {
            for u in d.turns.iter().filter(|u| u.role() == Role::Judge) {
                assert!(u.text().ends_with('?'), "{}", u.text());
                assert_eq!(u.tokens().last().map(String::as_str), Some("?"));
            }
        }
    }

    #[test]
    fn mean_length_near_reference_average() {
        let corpus = generate_synthetic_corpus(&SynthConfig::new(500, 11));
        let total: usize = corpus.dialogues.iter().map(|d| d.turns.len()).sum();
        let mean = total as f64 / corpus.dialogues.len() as f64;
        assert!((10.0..=17.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn every_turn_is_annotated_and_fragments_qualify() {
        let corpus = generate_synthetic_corpus(&SynthConfig::new(50, 5));
        assert!(corpus
            .dialogues
            .iter()
            .flat_map(|d| &d.turns)
            .all(|u| !u.elements().is_empty()));
        let frags = extract_all(&corpus.dialogues);
        assert!(frags.len() > 50);
    }

    #[test]
    fn intents_follow_script_order() {
        let cfg = SynthConfig::new(1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for k in 0..50 {
            let (d, intents) = generate_dialogue(&mut rng, &cfg, k.to_string());
            assert_eq!(d.turns.len(), intents.len());
            let order = |i: &Intent| {
                [
                    Intent::Claim,
                    Intent::IdentityCheck,
                    Intent::LoanAmount,
                    Intent::InterestAgreement,
                    Intent::Repayment,
                    Intent::SpouseLiability,
                    Intent::Guarantee,
                ]
                .iter()
                .position(|x| x == i)
                .unwrap()
            };
            assert!(intents.windows(2).all(|w| order(&w[0]) <= order(&w[1])));
        }
    }
}
