use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::WindowSample;
use crate::error::{Error, Result};

/// How a window is assigned to a balancing class on the 28-step scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalanceKey {
    /// Largest Kp observed in the input window.
    #[default]
    MaxInput,
    /// Kp of the last input step.
    LastInput,
    /// Largest Kp in the output window.
    MaxOutput,
}

impl BalanceKey {
    pub fn key(&self, sample: &WindowSample) -> usize {
        let thirds = |kp: f64| (3.0 * kp).round().clamp(0.0, 27.0) as usize;
        match self {
            BalanceKey::MaxInput => sample.kp_in.iter().map(|&k| thirds(k)).max().unwrap_or(0),
            BalanceKey::LastInput => sample.kp_in.last().map(|&k| thirds(k)).unwrap_or(0),
            BalanceKey::MaxOutput => sample.kp_out.iter().map(|&k| thirds(k)).max().unwrap_or(0),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max_input" => Ok(BalanceKey::MaxInput),
            "last_input" => Ok(BalanceKey::LastInput),
            "max_output" => Ok(BalanceKey::MaxOutput),
            other => Err(Error::Config(format!("unknown balance key `{other}`"))),
        }
    }
}

/// Oversamples every class up to the size of the most frequent one.
///
/// Originals are all kept; the extra copies are drawn with replacement from
/// the class's own members. The combined list is shuffled with a generator
/// seeded by `seed`.
pub fn expand_balance(samples: &[WindowSample], keyer: BalanceKey, seed: u64) -> Result<Vec<WindowSample>> {
    let indices = expand_balance_indices(samples, keyer, seed)?;
    Ok(indices.into_iter().map(|i| samples[i].clone()).collect())
}

/// Index form of [`expand_balance`].
pub fn expand_balance_indices(samples: &[WindowSample], keyer: BalanceKey, seed: u64) -> Result<Vec<usize>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("nothing to balance".into()));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(keyer.key(s)).or_default().push(i);
    }
    let target = groups.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target * groups.len());
    for members in groups.values() {
        out.extend_from_slice(members);
        for _ in members.len()..target {
            out.push(members[rng.gen_range(0..members.len())]);
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

pub fn class_histogram(samples: &[WindowSample], keyer: BalanceKey) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for s in samples {
        *h.entry(keyer.key(s)).or_default() += 1;
    }
    h
}
