//! Deterministic synthetic corpus generation in the raw two-line format
//! plus matching CoNLL-U parses. Used by tests and benchmarks to exercise
//! the full ingestion path without shipping the licensed datasets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{align_corpus, parse_conllu, parse_raw, Dataset, Dialect, Split};
use crate::error::Result;

pub const SEMEVAL_LABELS: [&str; 19] = [
    "Cause-Effect(e1,e2)",
    "Cause-Effect(e2,e1)",
    "Instrument-Agency(e1,e2)",
    "Instrument-Agency(e2,e1)",
    "Product-Producer(e1,e2)",
    "Product-Producer(e2,e1)",
    "Content-Container(e1,e2)",
    "Content-Container(e2,e1)",
    "Entity-Origin(e1,e2)",
    "Entity-Origin(e2,e1)",
    "Entity-Destination(e1,e2)",
    "Entity-Destination(e2,e1)",
    "Component-Whole(e1,e2)",
    "Component-Whole(e2,e1)",
    "Member-Collection(e1,e2)",
    "Member-Collection(e2,e1)",
    "Message-Topic(e1,e2)",
    "Message-Topic(e2,e1)",
    "Other",
];

const POS_TAGS: [&str; 8] = ["NN", "VB", "JJ", "DT", "IN", "PRP", "RB", "NNP"];
const DEPRELS: [&str; 10] = [
    "root", "nsubj", "obj", "det", "amod", "case", "nmod", "advmod", "compound", "conj",
];

/// Random valid heads for an `n`-token sentence: a random root, every
/// other token attached to a node earlier in a random permutation.
pub fn random_heads(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.shuffle(rng);
    let mut heads = vec![0; n];
    for i in 1..n {
        let parent = perm[rng.gen_range(0..i)];
        heads[perm[i] - 1] = parent;
    }
    heads
}

pub struct SynthCorpus {
    pub raw_train: String,
    pub raw_test: String,
    pub conllu_train: String,
    pub conllu_test: String,
}

fn gen_split(
    rng: &mut ChaCha8Rng,
    count: usize,
    labels: &[&str],
    id_base: u64,
    raw: &mut String,
    conllu: &mut String,
) {
    for i in 0..count {
        let label = labels[rng.gen_range(0..labels.len())];
        let label_idx = labels.iter().position(|l| *l == label).unwrap();
        let n = rng.gen_range(5..=10usize);
        let mut forms: Vec<String> = (0..n)
            .map(|_| format!("w{}", rng.gen_range(0..40)))
            .collect();
        // a label keyword plus a unique token keep instances separable
        forms[rng.gen_range(0..n)] = format!("k{label_idx}");
        forms[rng.gen_range(0..n)] = format!("u{}", id_base + i as u64);
        let heads = random_heads(rng, n);

        let e1 = rng.gen_range(0..n);
        let e2 = loop {
            let c = rng.gen_range(0..n);
            if c != e1 {
                break c;
            }
        };
        let mut words = Vec::with_capacity(n);
        for (t, form) in forms.iter().enumerate() {
            if t == e1 {
                words.push(format!("<e1>{form}</e1>"));
            } else if t == e2 {
                words.push(format!("<e2>{form}</e2>"));
            } else {
                words.push(form.clone());
            }
        }
        raw.push_str(&format!(
            "{}\t\"{}\"\n{}\n\n",
            id_base + i as u64,
            words.join(" "),
            label
        ));
        for (t, form) in forms.iter().enumerate() {
            let pos = POS_TAGS[rng.gen_range(0..POS_TAGS.len())];
            let dep = if heads[t] == 0 {
                "root"
            } else {
                DEPRELS[rng.gen_range(1..DEPRELS.len())]
            };
            conllu.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t_\t{}\t{}\t_\t_\n",
                t + 1,
                form,
                form,
                pos,
                pos,
                heads[t],
                dep
            ));
        }
        conllu.push('\n');
    }
}

/// Generates a corpus with `n_labels <= 19` SemEval-style classes.
pub fn generate(seed: u64, n_train: usize, n_test: usize, n_labels: usize) -> SynthCorpus {
    let labels = &SEMEVAL_LABELS[..n_labels.min(SEMEVAL_LABELS.len())];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = SynthCorpus {
        raw_train: String::new(),
        raw_test: String::new(),
        conllu_train: String::new(),
        conllu_test: String::new(),
    };
    gen_split(
        &mut rng,
        n_train,
        labels,
        1,
        &mut corpus.raw_train,
        &mut corpus.conllu_train,
    );
    gen_split(
        &mut rng,
        n_test,
        labels,
        10_001,
        &mut corpus.raw_test,
        &mut corpus.conllu_test,
    );
    corpus
}

/// Runs the full ingestion path (raw parse, CoNLL-U parse, alignment,
/// vocab) over a generated corpus.
pub fn build_dataset(corpus: &SynthCorpus) -> Result<Dataset> {
    let raw_train = parse_raw(std::io::Cursor::new(&corpus.raw_train), Dialect::Semeval)?;
    let raw_test = parse_raw(std::io::Cursor::new(&corpus.raw_test), Dialect::Semeval)?;
    let parses_train = parse_conllu(std::io::Cursor::new(&corpus.conllu_train), false)?;
    let parses_test = parse_conllu(std::io::Cursor::new(&corpus.conllu_test), false)?;
    let (train, skipped_train) = align_corpus(&raw_train, &parses_train, None, Split::Train);
    let (test, skipped_test) = align_corpus(&raw_test, &parses_test, None, Split::Test);
    assert!(skipped_train.is_empty() && skipped_test.is_empty());
    Dataset::build(Dialect::Semeval, train, test)
}
