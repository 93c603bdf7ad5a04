use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{SentenceInstance, Split};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    pub mean_length: f64,
    /// Sentence lengths bucketed by 10 tokens; key is the bucket floor.
    pub length_histogram: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Stats {
    pub train: SplitStats,
    pub test: SplitStats,
    pub per_label: BTreeMap<String, usize>,
}

pub fn dataset_stats(instances: &[SentenceInstance]) -> Stats {
    let mut stats = Stats::default();
    let mut sums = [0usize; 2];
    for inst in instances {
        let split = match inst.split {
            Split::Train => &mut stats.train,
            Split::Test => &mut stats.test,
        };
        split.count += 1;
        let len = inst.tokens.len();
        sums[matches!(inst.split, Split::Test) as usize] += len;
        *split.length_histogram.entry(len / 10 * 10).or_default() += 1;
        *stats.per_label.entry(inst.label.clone()).or_default() += 1;
    }
    if stats.train.count > 0 {
        stats.train.mean_length = sums[0] as f64 / stats.train.count as f64;
    }
    if stats.test.count > 0 {
        stats.test.mean_length = sums[1] as f64 / stats.test.count as f64;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Span, Token};

    fn inst(n: usize, label: &str, split: Split) -> SentenceInstance {
        let tokens = (1..=n)
            .map(|i| Token {
                index: i,
                form: format!("w{i}"),
                pos: "NN".into(),
                deprel: "dep".into(),
                head: if i == 1 { 0 } else { 1 },
            })
            .collect();
        SentenceInstance {
            id: n as u64,
            tokens,
            e1_span: Span { start: 0, end: 0 },
            e2_span: Span { start: n - 1, end: n - 1 },
            label: label.into(),
            label_id: 0,
            split,
        }
    }

    #[test]
    fn single_instance() {
        let s = dataset_stats(&[inst(5, "Other", Split::Train)]);
        assert_eq!(s.train.count, 1);
        assert_eq!(s.test.count, 0);
        assert_eq!(s.per_label.len(), 1);
        assert_eq!(s.train.mean_length, 5.0);
        assert_eq!(s.train.length_histogram[&0], 1);
    }

    #[test]
    fn splits_counted_separately() {
        let s = dataset_stats(&[
            inst(4, "A", Split::Train),
            inst(12, "A", Split::Train),
            inst(6, "B", Split::Test),
        ]);
        assert_eq!(s.train.count, 2);
        assert_eq!(s.test.count, 1);
        assert_eq!(s.train.mean_length, 8.0);
        assert_eq!(s.per_label["A"], 2);
        assert_eq!(s.train.length_histogram[&10], 1);
    }
}
