//! Epoch planning over the unpaired and paired pools.

use ldm_ctsim::Dataset;
use ldm_tensor::Tensor;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Mode;
use crate::error::{DnError, Result};
use crate::step::StepBatch;

/// Indices into the training pairs used by one step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// `(artifact-affected, artifact-free)` image indices.
    pub unpaired: Vec<(usize, usize)>,
    pub paired: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pools {
    pub artifact: Vec<usize>,
    pub clean: Vec<usize>,
    pub paired: Vec<usize>,
}

impl Pools {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Pools {
            artifact: ds.artifact_pool.clone(),
            clean: ds.clean_pool.clone(),
            paired: (0..ds.train.len()).collect(),
        }
    }
}

/// Seeded per-epoch shuffles. The shorter stream cycles so every step of a
/// hybrid epoch carries `batch_size` samples of each kind.
#[derive(Clone, Debug)]
pub struct Scheduler {
    mode: Mode,
    batch_size: usize,
    seed: u64,
    pools: Pools,
}

impl Scheduler {
    pub fn new(mode: Mode, batch_size: usize, seed: u64, pools: Pools) -> Result<Self> {
        if batch_size == 0 {
            return Err(DnError::Config("batch size must be >= 1".into()));
        }
        if mode.uses_unpaired() && (pools.artifact.is_empty() || pools.clean.is_empty()) {
            return Err(DnError::Config(format!(
                "mode {mode} needs non-empty unpaired pools (artifact {}, clean {})",
                pools.artifact.len(),
                pools.clean.len()
            )));
        }
        if mode.uses_paired() && pools.paired.is_empty() {
            return Err(DnError::Config(format!("mode {mode} needs a non-empty paired pool")));
        }
        Ok(Scheduler {
            mode,
            batch_size,
            seed,
            pools,
        })
    }

    fn unpaired_len(&self) -> usize {
        if self.mode.uses_unpaired() {
            self.pools.artifact.len().max(self.pools.clean.len())
        } else {
            0
        }
    }

    fn paired_len(&self) -> usize {
        if self.mode.uses_paired() {
            self.pools.paired.len()
        } else {
            0
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.unpaired_len().max(self.paired_len()).div_ceil(self.batch_size)
    }

    pub fn epoch(&self, epoch: usize) -> Vec<Batch> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        let mut shuffled = |v: &[usize]| {
            let mut v = v.to_vec();
            v.shuffle(&mut rng);
            v
        };
        let artifact = shuffled(&self.pools.artifact);
        let clean = shuffled(&self.pools.clean);
        let paired = shuffled(&self.pools.paired);

        let bs = self.batch_size;
        (0..self.steps_per_epoch())
            .map(|t| {
                let slots = t * bs..(t + 1) * bs;
                let unpaired = if self.mode.uses_unpaired() {
                    slots
                        .clone()
                        .map(|i| (artifact[i % artifact.len()], clean[i % clean.len()]))
                        .collect()
                } else {
                    Vec::new()
                };
                let paired = if self.mode.uses_paired() {
                    slots.map(|i| paired[i % paired.len()]).collect()
                } else {
                    Vec::new()
                };
                Batch { unpaired, paired }
            })
            .collect()
    }
}

fn stack<'a>(images: impl ExactSizeIterator<Item = &'a Array2<f64>>) -> Result<Tensor> {
    let n = images.len();
    let mut shape = None;
    let mut data = Vec::new();
    for img in images {
        if *shape.get_or_insert(img.dim()) != img.dim() {
            return Err(DnError::Config("images of different sizes in one batch".into()));
        }
        data.extend(img.iter());
    }
    let (h, w) = shape.unwrap_or((0, 0));
    Ok(Tensor::new(data, &[n, 1, h, w])?)
}

/// Loads the images a batch refers to.
pub fn gather(ds: &Dataset, batch: &Batch) -> Result<StepBatch> {
    let get = |i: usize| {
        ds.train
            .get(i)
            .ok_or_else(|| DnError::Config(format!("batch refers to training pair {i} of {}", ds.train.len())))
    };
    let unpaired = if batch.unpaired.is_empty() {
        None
    } else {
        let a = batch
            .unpaired
            .iter()
            .map(|&(i, _)| get(i).map(|p| &p.artifact))
            .collect::<Result<Vec<_>>>()?;
        let c = batch
            .unpaired
            .iter()
            .map(|&(_, j)| get(j).map(|p| &p.clean))
            .collect::<Result<Vec<_>>>()?;
        Some((stack(a.into_iter())?, stack(c.into_iter())?))
    };
    let paired = if batch.paired.is_empty() {
        None
    } else {
        let pairs = batch.paired.iter().map(|&i| get(i)).collect::<Result<Vec<_>>>()?;
        Some((
            stack(pairs.iter().map(|p| &p.artifact))?,
            stack(pairs.iter().map(|p| &p.clean))?,
        ))
    };
    Ok(StepBatch { unpaired, paired })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pools(a: usize, c: usize, p: usize) -> Pools {
        Pools {
            artifact: (0..a).collect(),
            clean: (a..a + c).collect(),
            paired: (0..p).collect(),
        }
    }

    #[test]
    fn hybrid_counts() {
        let s = Scheduler::new(Mode::LdmDnSup, 1, 3, pools(4, 8, 8)).unwrap();
        let e = s.epoch(0);
        assert_eq!(e.len(), 8);
        assert!(e.iter().all(|b| b.unpaired.len() == 1 && b.paired.len() == 1));
        let mut seen: Vec<usize> = e.iter().map(|b| b.paired[0]).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn mode_filter() {
        let s = Scheduler::new(Mode::Adn, 1, 0, pools(2, 14, 16)).unwrap();
        let e = s.epoch(0);
        assert_eq!(e.len(), 14);
        assert!(e.iter().all(|b| b.paired.is_empty() && b.unpaired.len() == 1));
        let s = Scheduler::new(Mode::Sup, 3, 0, pools(2, 14, 16)).unwrap();
        assert_eq!(s.steps_per_epoch(), 6);
        assert!(s.epoch(1).iter().all(|b| b.unpaired.is_empty() && b.paired.len() == 3));
    }

    #[test]
    fn seeded_and_varies_by_epoch() {
        let s = Scheduler::new(Mode::LdmDnSup, 2, 11, pools(2, 14, 16)).unwrap();
        assert_eq!(s.epoch(4), s.epoch(4));
        assert_ne!(s.epoch(0), s.epoch(1));
    }

    #[test]
    fn empty_pool_is_a_config_error() {
        assert!(Scheduler::new(Mode::Adn, 1, 0, pools(0, 4, 4)).is_err());
        assert!(Scheduler::new(Mode::Sup, 1, 0, pools(0, 0, 0)).is_err());
        assert!(Scheduler::new(Mode::Sup, 1, 0, pools(0, 0, 2)).is_ok());
    }
}
