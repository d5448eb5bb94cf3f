//! Which question an annotator gets next.
//!
//! Questions are ranked by their effective annotation count: completed
//! annotations plus live assignments held by other annotators. Questions
//! at one are served first so they reach the two annotations aggregation
//! needs, then untouched questions, then the rest. Ties are broken
//! uniformly at random.

use rand::seq::SliceRandom;
use rand::Rng;

pub const ANNOTATIONS_PER_QUESTION: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub question_id: String,
    pub completed: usize,
    pub in_flight: usize,
}

impl Candidate {
    fn effective(&self) -> usize {
        self.completed + self.in_flight
    }

    fn tier(&self) -> u8 {
        match self.effective() {
            1 => 0,
            0 => 1,
            _ => 2,
        }
    }
}

/// Picks among `candidates`, which must already exclude questions this
/// annotator has annotated or skipped. Questions with the full number of
/// completed annotations are never chosen.
pub fn choose<'a, R: Rng + ?Sized>(candidates: &'a [Candidate], rng: &mut R) -> Option<&'a Candidate> {
    let open: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.completed < ANNOTATIONS_PER_QUESTION)
        .collect();
    let best = open.iter().map(|c| c.tier()).min()?;
    let tier: Vec<&Candidate> = open.into_iter().filter(|c| c.tier() == best).collect();
    tier.choose(rng).copied()
}
