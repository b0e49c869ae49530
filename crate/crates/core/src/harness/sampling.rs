use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::matrixio::{LabelVector, ShotSet};

/// The generator behind every seeded operation: xoshiro256++ whose state is
/// expanded from the 64-bit seed with SplitMix64.
pub type SeededRng = Xoshiro256PlusPlus;

pub fn seeded_rng(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Draws `shots_per_class` items of every class without replacement.
///
/// Indices come out grouped by class, ascending within a class. The same
/// seed always yields the same set.
pub fn sample_shots(labels: &LabelVector, shots_per_class: usize, seed: u64) -> Result<ShotSet> {
    if shots_per_class == 0 {
        return Err(Error::InvalidConfig(
            "shots_per_class must be at least 1".into(),
        ));
    }
    let mut rng = seeded_rng(seed);
    let by_class = labels.indices_by_class();
    let mut indices = Vec::with_capacity(shots_per_class * by_class.len());
    let mut shot_labels = Vec::with_capacity(indices.capacity());
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < shots_per_class {
            return Err(Error::NotEnoughItems {
                class,
                available: members.len(),
                requested: shots_per_class,
            });
        }
        let mut chosen: Vec<usize> =
            rand::seq::index::sample(&mut rng, members.len(), shots_per_class)
                .into_iter()
                .map(|p| members[p])
                .collect();
        chosen.sort_unstable();
        indices.extend_from_slice(&chosen);
        shot_labels.extend(std::iter::repeat_n(class, shots_per_class));
    }
    let shot_labels = LabelVector::new(shot_labels, labels.num_classes())?;
    ShotSet::new(indices, shot_labels, shots_per_class)
}
