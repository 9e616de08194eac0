//! Synthetic replay answers: the ground truth, or a uniformly random option.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{ManifestRecord, ReplayRecord};
use crate::par;

pub fn oracle_replay(manifest: &[ManifestRecord]) -> Vec<ReplayRecord> {
    manifest
        .iter()
        .map(|r| ReplayRecord {
            stimulus_id: r.stimulus_id.clone(),
            raw_text: r.ground_truth.clone(),
        })
        .collect()
}

/// One uniformly drawn option per stimulus. Stimulus `i` draws from ChaCha
/// stream `i` of `seed`, so the result does not depend on scheduling.
pub fn random_replay(manifest: &[ManifestRecord], seed: u64) -> Vec<ReplayRecord> {
    let indexed: Vec<(u64, &ManifestRecord)> = manifest.iter().enumerate().map(|(i, r)| (i as u64, r)).collect();
    par::map(&indexed, |(i, r)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(*i);
        ReplayRecord {
            stimulus_id: r.stimulus_id.clone(),
            raw_text: r.options.choose(&mut rng).cloned().unwrap_or_default(),
        }
    })
}

/// Same as [`random_replay`] without the thread pool.
pub fn random_replay_sequential(manifest: &[ManifestRecord], seed: u64) -> Vec<ReplayRecord> {
    manifest
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            ReplayRecord {
                stimulus_id: r.stimulus_id.clone(),
                raw_text: r.options.choose(&mut rng).cloned().unwrap_or_default(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::test_support::manifest;
    use crate::question::Aspect;
    use crate::world;

    #[test]
    fn random_replay_is_scheduling_independent() {
        let m = manifest(&world::enumerate_single_object()[..500], Aspect::AbsolutePosition);
        assert_eq!(random_replay(&m, 9), random_replay_sequential(&m, 9));
        assert_ne!(random_replay(&m, 9), random_replay(&m, 10));
        assert!(random_replay(&m, 9).iter().zip(&m).all(|(a, r)| r.options.contains(&a.raw_text)));
    }
}
