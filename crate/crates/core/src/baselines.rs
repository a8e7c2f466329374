//! Inputs for the comparison models: event-type n-grams for a recurrent
//! baseline, and the raw feature rows for the 1-D convolutional model
//! (whose layers live in [`crate::model`]).

use std::collections::BTreeMap;

use clickcfa_neural::Tensor;

use crate::clickstream::{EventType, NUM_EVENT_TYPES};
use crate::error::{Error, Result};

pub type Gram = Vec<EventType>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramEncoding {
    pub n: usize,
    /// One gram per window position.
    pub grams: Vec<Gram>,
}

impl NgramEncoding {
    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    /// `[grams, 5n]` rows, each the concatenated one-hot codes of a gram.
    pub fn to_rows(&self) -> Option<Tensor> {
        if self.grams.is_empty() {
            return None;
        }
        let width = NUM_EVENT_TYPES * self.n;
        let mut data = vec![0.0; self.grams.len() * width];
        for (g, gram) in self.grams.iter().enumerate() {
            for (pos, t) in gram.iter().enumerate() {
                data[g * width + pos * NUM_EVENT_TYPES + t.code() as usize] = 1.0;
            }
        }
        Some(Tensor::matrix(self.grams.len(), width, data).expect("sized buffer"))
    }
}

/// Contiguous windows of length `n` over an event-type sequence
/// (`max(L − n + 1, 0)` of them).
pub fn ngram_encode(types: &[EventType], n: usize) -> Result<NgramEncoding> {
    if !(3..=4).contains(&n) {
        return Err(Error::Config(format!("n-gram order must be 3 or 4, got {n}")));
    }
    Ok(NgramEncoding {
        n,
        grams: types.windows(n).map(<[EventType]>::to_vec).collect(),
    })
}

/// Occurrence counts of every gram across encodings.
pub fn gram_counts<'a>(encodings: impl IntoIterator<Item = &'a NgramEncoding>) -> BTreeMap<Gram, usize> {
    let mut counts = BTreeMap::new();
    for e in encodings {
        for g in &e.grams {
            *counts.entry(g.clone()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn gram_label(gram: &[EventType]) -> String {
    gram.iter().map(|t| t.abbrev()).collect::<Vec<_>>().join("-")
}
