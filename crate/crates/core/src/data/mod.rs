//! Corpus assembly: tab-separated log files, folds, the train/meta split
//! and a synthetic generator.
//!
//! A corpus on disk is an events file plus optional sidecars that share
//! its stem: `X.tsv` (events), `X.quiz.tsv` (first quiz submissions),
//! `X.videos.tsv` (video lengths) and `X.truth.tsv` (generator archetypes).

mod folds;
mod log;
mod synth;

pub use folds::{carve_meta, fold_fingerprint, split_folds, subsample};
pub use log::{parse_log, write_corpus, CorpusPaths, ParseSummary};
pub use synth::{default_archetypes, generate_synthetic, parse_archetypes, write_archetypes, SynthArchetype};

use crate::clickstream::{compute_cfa, CfaLabel, ClickSession};
use crate::error::Result;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub dataset_name: String,
    pub sessions: Vec<ClickSession>,
    /// One fold index per session once [`split_folds`] has run.
    pub fold_assignments: Option<Vec<usize>>,
    /// Generator archetype per session, when known.
    pub archetypes: Option<Vec<usize>>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Indices of sessions usable for CFA training and evaluation.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.sessions.len())
            .filter(|&i| self.sessions[i].is_labeled())
            .collect()
    }

    pub fn label(&self, i: usize) -> Result<CfaLabel> {
        compute_cfa(&self.sessions[i])
    }

    /// Session indices in fold `f`; empty when folds are unassigned.
    pub fn fold(&self, f: usize) -> Vec<usize> {
        match &self.fold_assignments {
            None => Vec::new(),
            Some(a) => (0..a.len()).filter(|&i| a[i] == f).collect(),
        }
    }

    pub fn num_folds(&self) -> usize {
        self.fold_assignments
            .as_ref()
            .and_then(|a| a.iter().max().map(|m| m + 1))
            .unwrap_or(0)
    }
}
