//! Precision/recall/F1 over a confusion matrix, macro-F1 over scored
//! classes, and the CSV confusion-matrix emitter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// K x K count matrix; rows are gold classes, columns predictions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Confusion {
    pub k: usize,
    pub counts: Vec<usize>,
}

impl Confusion {
    pub fn new(k: usize) -> Self {
        Confusion {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_pairs(k: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut c = Confusion::new(k);
        for (gold, pred) in pairs {
            c.add(gold, pred);
        }
        c
    }

    pub fn add(&mut self, gold: usize, pred: usize) {
        self.counts[gold * self.k + pred] += 1;
    }

    pub fn at(&self, gold: usize, pred: usize) -> usize {
        self.counts[gold * self.k + pred]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn gold_count(&self, class: usize) -> usize {
        (0..self.k).map(|p| self.at(class, p)).sum()
    }

    pub fn pred_count(&self, class: usize) -> usize {
        (0..self.k).map(|g| self.at(g, class)).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub scored: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassScore>,
    pub macro_f1: f64,
    pub micro_accuracy: f64,
    pub confusion: Confusion,
    pub epoch_seconds: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0 // 0/0 rule: undefined precision/recall scores as 0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Unweighted mean of per-class F1 over the classes with a true mask bit.
pub fn macro_f1(confusion: &Confusion, scored: &[bool]) -> Result<f64> {
    if scored.len() != confusion.k {
        return Err(Error::Shape("macro_f1: mask length mismatch".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in 0..confusion.k {
        if !scored[c] {
            continue;
        }
        let p = ratio(confusion.at(c, c), confusion.pred_count(c));
        let r = ratio(confusion.at(c, c), confusion.gold_count(c));
        sum += f1_of(p, r);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Labels excluded from the macro average (still legal predictions),
/// matching the official SemEval scorer convention.
pub fn is_unscored_label(label: &str) -> bool {
    label == "Other" || label == "no_relation"
}

pub fn compute_metrics(confusion: Confusion, labels: &[String]) -> Result<Metrics> {
    if labels.len() != confusion.k {
        return Err(Error::Shape("compute_metrics: label count mismatch".into()));
    }
    let scored: Vec<bool> = labels.iter().map(|l| !is_unscored_label(l)).collect();
    let mut per_class = Vec::with_capacity(confusion.k);
    for c in 0..confusion.k {
        let p = ratio(confusion.at(c, c), confusion.pred_count(c));
        let r = ratio(confusion.at(c, c), confusion.gold_count(c));
        per_class.push(ClassScore {
            label: labels[c].clone(),
            precision: p,
            recall: r,
            f1: f1_of(p, r),
            scored: scored[c],
        });
    }
    let total = confusion.total();
    let correct: usize = (0..confusion.k).map(|c| confusion.at(c, c)).sum();
    Ok(Metrics {
        macro_f1: macro_f1(&confusion, &scored)?,
        micro_accuracy: ratio(correct, total),
        per_class,
        confusion,
        epoch_seconds: 0.0,
    })
}

/// Fixed base-class order used to lay out KBP37 confusion matrices.
pub const KBP37_CLASS_ORDER: [&str; 19] = [
    "no_relation",
    "org:alternate_names",
    "org:city_of_headquarters",
    "org:country_of_headquarters",
    "org:founded",
    "org:founded_by",
    "org:members",
    "org:stateorprovince_of_headquarters",
    "org:subsidiaries",
    "org:top_members/employees",
    "per:alternate_names",
    "per:cities_of_residence",
    "per:countries_of_residence",
    "per:country_of_birth",
    "per:employee_of",
    "per:origin",
    "per:spouse",
    "per:stateorprovinces_of_residence",
    "per:title",
];

/// Relation name without its direction suffix.
pub fn base_label(label: &str) -> &str {
    label
        .strip_suffix("(e1,e2)")
        .or_else(|| label.strip_suffix("(e2,e1)"))
        .unwrap_or(label)
}

/// Merges directed label pairs (`X(e1,e2)` / `X(e2,e1)`) into one class,
/// so a direction mistake counts as correct. Returns the collapsed matrix
/// and its label set, in first-occurrence order of the base labels.
pub fn collapse_directions(confusion: &Confusion, labels: &[String]) -> (Confusion, Vec<String>) {
    let mut collapsed_labels: Vec<String> = Vec::new();
    let mut map = Vec::with_capacity(labels.len());
    for label in labels {
        let base = base_label(label).to_string();
        let id = match collapsed_labels.iter().position(|l| *l == base) {
            Some(i) => i,
            None => {
                collapsed_labels.push(base);
                collapsed_labels.len() - 1
            }
        };
        map.push(id);
    }
    let mut out = Confusion::new(collapsed_labels.len());
    for g in 0..confusion.k {
        for p in 0..confusion.k {
            let n = confusion.at(g, p);
            if n > 0 {
                out.counts[map[g] * out.k + map[p]] += n;
            }
        }
    }
    (out, collapsed_labels)
}

/// Column/row permutation for confusion output: KBP37 labels follow the
/// fixed base-class order (direction (e1,e2) first); others keep vocab order.
pub fn display_order(labels: &[String], kbp37: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    if kbp37 {
        let rank = |label: &str| -> (usize, usize) {
            let base = base_label(label);
            let class = KBP37_CLASS_ORDER
                .iter()
                .position(|c| *c == base)
                .unwrap_or(KBP37_CLASS_ORDER.len());
            let dir = if label.ends_with("(e2,e1)") { 1 } else { 0 };
            (class, dir)
        };
        order.sort_by_key(|&i| rank(&labels[i]));
    }
    order
}

/// Raw-count confusion matrix as CSV, label names on header row and column.
pub fn confusion_csv(confusion: &Confusion, labels: &[String], order: &[usize]) -> String {
    let mut out = String::from("gold\\pred");
    for &j in order {
        out.push(',');
        out.push_str(&labels[j]);
    }
    out.push('\n');
    for &i in order {
        out.push_str(&labels[i]);
        for &j in order {
            out.push_str(&format!(",{}", confusion.at(i, j)));
        }
        out.push('\n');
    }
    out
}
