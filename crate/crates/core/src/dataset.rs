//! Turning corpus sessions into classifier samples.

use crate::baselines::ngram_encode;
use crate::clickstream::{build_time_varying, EncodingConfig, NUM_EVENT_TYPES, ROW_DIM};
use crate::data::Corpus;
use crate::error::Result;
use crate::model::Sample;
use crate::recipe::ModelKind;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    /// Sessions that produced no input (unlabeled, or too short for the n-gram order).
    pub dropped: Vec<usize>,
}

/// Width of the input rows each model consumes.
pub fn input_dim(model: ModelKind) -> usize {
    match model.ngram_order() {
        Some(n) => NUM_EVENT_TYPES * n,
        None => ROW_DIM,
    }
}

/// Pre-answer inputs for the sessions at `indices`, in that order.
pub fn build_samples(corpus: &Corpus, indices: &[usize], model: ModelKind, cfg: &EncodingConfig) -> Result<SampleSet> {
    let mut set = SampleSet::default();
    for &i in indices {
        let session = &corpus.sessions[i];
        if !session.is_labeled() {
            set.dropped.push(i);
            continue;
        }
        let label = corpus.label(i)?;
        let input = match model.ngram_order() {
            None => Some(build_time_varying(session, cfg)?.to_tensor()),
            Some(n) => {
                let types: Vec<_> = session.pre_answer_events().iter().map(|e| e.event_type).collect();
                ngram_encode(&types, n)?.to_rows()
            }
        };
        match input {
            Some(input) => set.samples.push(Sample {
                input,
                label,
                session: i,
            }),
            None => set.dropped.push(i),
        }
    }
    Ok(set)
}
