use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, PatientRecord, Split};

/// Independently assigns each record to the test set with probability
/// `test_probability` (unstratified Bernoulli), in record order.
pub fn random_split(
    records: &[PatientRecord],
    test_probability: f64,
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    if records.is_empty() {
        return Err(Error::Invalid("cannot split an empty record list".into()));
    }
    if !(0.0..=1.0).contains(&test_probability) {
        return Err(Error::Invalid(format!(
            "test probability must lie in [0, 1], got {test_probability}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .iter()
        .map(|r| {
            let draw: f64 = rng.gen();
            let split = if draw < test_probability {
                Split::Test
            } else {
                Split::Train
            };
            (r.id.clone(), split)
        })
        .collect())
}

/// Replaces the manifest's split assignment in place.
pub fn resplit(manifest: &mut DatasetManifest, test_probability: f64, seed: u64) -> Result<()> {
    manifest.split = random_split(&manifest.records, test_probability, seed)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::GliomaSubtype;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn records(n: usize) -> Vec<PatientRecord> {
        (0..n)
            .map(|i| PatientRecord {
                id: format!("p{i:04}"),
                volume_paths: [PathBuf::new(), PathBuf::new(), PathBuf::new()],
                mask_path: PathBuf::new(),
                subtype: GliomaSubtype::I,
                age: None,
                sex: None,
            })
            .collect()
    }

    #[test]
    fn deterministic_for_seed() {
        let r = records(100);
        assert_eq!(random_split(&r, 0.2, 5).unwrap(), random_split(&r, 0.2, 5).unwrap());
        assert_ne!(random_split(&r, 0.2, 5).unwrap(), random_split(&r, 0.2, 6).unwrap());
    }

    #[test]
    fn zero_probability_is_all_train() {
        let s = random_split(&records(50), 0.0, 1).unwrap();
        assert!(s.values().all(|&v| v == Split::Train));
    }

    #[test]
    fn empty_and_out_of_range_rejected() {
        assert!(random_split(&[], 0.2, 1).is_err());
        assert!(random_split(&records(3), 1.5, 1).is_err());
    }

    #[test]
    fn cohort_sized_split_within_three_sigma() {
        // sd = sqrt(1016 * 0.2 * 0.8) = 12.75, 3 sd = 38.2
        let r = records(1016);
        for seed in 0..20 {
            let s = random_split(&r, 0.2, seed).unwrap();
            let test = s.values().filter(|&&v| v == Split::Test).count() as f64;
            assert!((test - 203.2).abs() <= 38.25, "seed {seed}: {test}");
        }
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..200, p in 0.0f64..1.0, seed in any::<u64>()) {
            let r = records(n);
            let s = random_split(&r, p, seed).unwrap();
            prop_assert_eq!(s.len(), n);
            for rec in &r {
                prop_assert!(s.contains_key(&rec.id));
            }
        }
    }
}
