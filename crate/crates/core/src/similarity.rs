//! Token-set Jaccard similarity used for duplicate suggestions.

use alloc::collections::BTreeSet;
use alloc::string::String;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

/// Lowercases, splits on non-alphanumerics and drops tokens shorter than two
/// characters.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    let mut tokens = BTreeSet::new();
    let mut current = String::new();
    let mut len = 0usize;
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            len += 1;
        } else {
            if len >= 2 {
                tokens.insert(core::mem::take(&mut current));
            }
            current.clear();
            len = 0;
        }
    }
    if len >= 2 {
        tokens.insert(current);
    }
    tokens
}

/// Exact Jaccard ratio `shared / union`. Two empty sets are identical and
/// score 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Score {
    pub shared: usize,
    pub union: usize,
}

impl Score {
    pub fn from_counts(shared: usize, left: usize, right: usize) -> Self {
        Self {
            shared,
            union: left + right - shared,
        }
    }

    pub fn value(self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.shared as f64 / self.union as f64
        }
    }

    fn normalized(self) -> (u128, u128) {
        if self.union == 0 {
            (1, 1)
        } else {
            (self.shared as u128, self.union as u128)
        }
    }
}

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = self.normalized();
        let (c, d) = other.normalized();
        (a * d).cmp(&(c * b))
    }
}

pub fn jaccard(left: &BTreeSet<String>, right: &BTreeSet<String>) -> Score {
    let shared = left.intersection(right).count();
    Score::from_counts(shared, left.len(), right.len())
}
