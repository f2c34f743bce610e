use rand::Rng as _;

use super::{DatasetError, EpisodeRecord};
use crate::rng::Rng;

/// A contiguous window `[start, start + len)` of one episode's steps. The
/// observation after the window's last step is always available (the next
/// record's mask or the episode's final mask), so every step has a successor
/// state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceSlice {
    pub episode: usize,
    pub start: usize,
    pub len: usize,
}

/// Uniform sampler over all in-episode windows of a fixed length.
#[derive(Clone, Debug)]
pub struct SequenceSampler {
    len: usize,
    /// `(episode, number of valid starts)` for episodes long enough.
    eligible: Vec<(usize, usize)>,
    total: usize,
}

impl SequenceSampler {
    pub fn new(episodes: &[EpisodeRecord], len: usize) -> Result<Self, DatasetError> {
        if len == 0 {
            return Err(DatasetError::Invalid("sequence length must be positive".into()));
        }
        let eligible: Vec<(usize, usize)> = episodes
            .iter()
            .enumerate()
            .filter(|(_, e)| e.len() >= len)
            .map(|(i, e)| (i, e.len() - len + 1))
            .collect();
        let total = eligible.iter().map(|&(_, n)| n).sum();
        if total == 0 {
            return Err(DatasetError::Invalid(format!("no episode has at least {len} steps")));
        }
        Ok(Self { len, eligible, total })
    }

    pub fn windows(&self) -> usize {
        self.total
    }

    pub fn sample(&self, rng: &mut Rng) -> SequenceSlice {
        let mut k = rng.random_range(0..self.total);
        for &(episode, n) in &self.eligible {
            if k < n {
                return SequenceSlice {
                    episode,
                    start: k,
                    len: self.len,
                };
            }
            k -= n;
        }
        unreachable!("index within total window count")
    }

    pub fn batch(&self, rng: &mut Rng, size: usize) -> Vec<SequenceSlice> {
        (0..size).map(|_| self.sample(rng)).collect()
    }
}
