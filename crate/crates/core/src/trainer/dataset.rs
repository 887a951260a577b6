use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{read_manifest, SampleRecord};
use super::TrainError;
use crate::image::Organelle;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// How records are divided between training and validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Individual images are shuffled and split.
    #[default]
    Image,
    /// Whole studies are assigned to one side.
    Study,
}

#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub records: Vec<SampleRecord>,
    /// study id -> record indices, in manifest order
    pub studies: BTreeMap<String, Vec<usize>>,
    pub split: Vec<Split>,
}

impl DatasetIndex {
    pub fn from_records(
        records: Vec<SampleRecord>,
        split_ratio: f64,
        seed: u64,
        mode: SplitMode,
    ) -> Result<Self, TrainError> {
        if !(0.0..=1.0).contains(&split_ratio) {
            return Err(TrainError::Config(format!("split ratio {split_ratio} outside [0, 1]")));
        }
        let mut studies: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            studies.entry(r.meta.study_id.clone()).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split = vec![Split::Validation; records.len()];
        match mode {
            SplitMode::Image => {
                let mut order: Vec<usize> = (0..records.len()).collect();
                order.shuffle(&mut rng);
                let n_train = (split_ratio * records.len() as f64).round() as usize;
                for &i in &order[..n_train] {
                    split[i] = Split::Train;
                }
            }
            SplitMode::Study => {
                let mut ids: Vec<&String> = studies.keys().collect();
                ids.shuffle(&mut rng);
                let n_train = (split_ratio * ids.len() as f64).round() as usize;
                for id in &ids[..n_train] {
                    for &i in &studies[*id] {
                        split[i] = Split::Train;
                    }
                }
            }
        }
        Ok(Self { records, studies, split })
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.split[i] == which).collect()
    }
}

/// Reads a manifest and splits it deterministically.
pub fn build_index(
    manifest_path: impl AsRef<Path>,
    split_ratio: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<DatasetIndex, TrainError> {
    DatasetIndex::from_records(read_manifest(manifest_path)?, split_ratio, seed, mode)
}

/// Draws a study uniformly, then a record uniformly within it, so every study
/// is seen equally often regardless of its size.
#[derive(Clone, Debug)]
pub struct StudySampler {
    groups: Vec<Vec<usize>>,
}

impl StudySampler {
    /// Training records only; with `organelle` set, only records annotated
    /// for it.
    pub fn new(index: &DatasetIndex, organelle: Option<Organelle>) -> Result<Self, TrainError> {
        let groups: Vec<Vec<usize>> = index
            .studies
            .values()
            .map(|members| {
                members
                    .iter()
                    .copied()
                    .filter(|&i| index.split[i] == Split::Train)
                    .filter(|&i| organelle.is_none_or(|o| index.records[i].has(o)))
                    .collect::<Vec<_>>()
            })
            .filter(|g| !g.is_empty())
            .collect();
        if groups.is_empty() {
            return Err(TrainError::EmptySplit);
        }
        Ok(Self { groups })
    }

    pub fn study_count(&self) -> usize {
        self.groups.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let group = &self.groups[rng.random_range(0..self.groups.len())];
        group[rng.random_range(0..group.len())]
    }
}

pub fn study_balanced_sample<'a, R: Rng + ?Sized>(
    index: &'a DatasetIndex,
    rng: &mut R,
) -> Result<&'a SampleRecord, TrainError> {
    let sampler = StudySampler::new(index, None)?;
    Ok(&index.records[sampler.sample(rng)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Modality, SampleMeta};
    use std::path::PathBuf;

    fn records(sizes: &[usize]) -> Vec<SampleRecord> {
        sizes
            .iter()
            .enumerate()
            .flat_map(|(s, &n)| {
                (0..n).map(move |i| SampleRecord {
                    input_path: PathBuf::from(format!("s{s}/{i}.lmci")),
                    meta: SampleMeta { study_id: format!("s{s}"), modality: Modality::BrightField },
                    targets: [(Organelle::Nucleus, PathBuf::from("t"))].into_iter().collect(),
                })
            })
            .collect()
    }

    #[test]
    fn eighty_twenty_of_ten() {
        let idx = DatasetIndex::from_records(records(&[10]), 0.8, 1, SplitMode::Image).unwrap();
        assert_eq!(idx.indices(Split::Train).len(), 8);
        assert_eq!(idx.indices(Split::Validation).len(), 2);
        let again = DatasetIndex::from_records(records(&[10]), 0.8, 1, SplitMode::Image).unwrap();
        assert_eq!(idx.split, again.split);
    }

    #[test]
    fn study_split_keeps_studies_whole() {
        let idx = DatasetIndex::from_records(records(&[4, 5, 6, 7, 8]), 0.8, 3, SplitMode::Study).unwrap();
        for members in idx.studies.values() {
            assert!(members.iter().all(|&i| idx.split[i] == idx.split[members[0]]));
        }
        let train_studies = idx.studies.values().filter(|m| idx.split[m[0]] == Split::Train).count();
        assert_eq!(train_studies, 4);
    }

    #[test]
    fn balanced_over_unequal_studies() {
        let idx = DatasetIndex::from_records(records(&[99, 1]), 1.0, 0, SplitMode::Image).unwrap();
        let sampler = StudySampler::new(&idx, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 10_000;
        let small = (0..draws).filter(|_| sampler.sample(&mut rng) == 99).count();
        let freq = small as f64 / draws as f64;
        assert!((0.47..=0.53).contains(&freq), "{freq}");
    }

    #[test]
    fn single_study_is_uniform_and_deterministic() {
        let idx = DatasetIndex::from_records(records(&[5]), 1.0, 0, SplitMode::Image).unwrap();
        let sampler = StudySampler::new(&idx, None).unwrap();
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sampler.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
        let mut counts = [0usize; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5000 {
            counts[sampler.sample(&mut rng)] += 1;
        }
        assert!(counts.iter().all(|&c| (850..=1150).contains(&c)), "{counts:?}");
    }

    #[test]
    fn empty_train_split_is_error() {
        let idx = DatasetIndex::from_records(records(&[3]), 0.0, 0, SplitMode::Image).unwrap();
        assert!(matches!(StudySampler::new(&idx, None), Err(TrainError::EmptySplit)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(study_balanced_sample(&idx, &mut rng).is_err());
    }
}
