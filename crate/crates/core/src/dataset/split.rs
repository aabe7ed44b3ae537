use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    /// Fail with `EmptyStratum` when a category stratifies no image at all.
    #[serde(default)]
    pub strict: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            strict: false,
        }
    }
}

/// Splits images into train and test sets, stratified by class.
///
/// An image's stratum is the category of its lowest-id annotation. Within
/// each stratum the images are shuffled with a seeded RNG and
/// `round_half_up(train_fraction * n)` of them go to train.
pub fn stratified_split(
    dataset: &Dataset,
    config: &SplitConfig,
) -> Result<(Dataset, Dataset), DatasetError> {
    let f = config.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(DatasetError::InvalidFraction(f));
    }

    let by_image = dataset.annotations_by_image();
    let mut strata: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for image in dataset.images() {
        let first = by_image
            .get(&image.id)
            .and_then(|anns| anns.iter().min_by_key(|a| a.id))
            .ok_or(DatasetError::UnannotatedImage { image_id: image.id })?;
        strata.entry(first.category_id).or_default().push(image.id);
    }

    if config.strict {
        if let Some(empty) = dataset
            .categories()
            .iter()
            .find(|c| !strata.contains_key(&c.id))
        {
            return Err(DatasetError::EmptyStratum(empty.name.clone()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut train = HashSet::new();
    for ids in strata.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let take = (f * ids.len() as f64 + 0.5).floor() as usize;
        train.extend(ids.iter().take(take.min(ids.len())).copied());
    }

    let test: HashSet<u64> = dataset
        .images()
        .iter()
        .map(|i| i.id)
        .filter(|id| !train.contains(id))
        .collect();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
