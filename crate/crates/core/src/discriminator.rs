use ldm_tensor::{ParameterStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Conv, ConvSpec};

/// Maps an image batch to a map of realness scores.
pub trait Discriminator {
    fn score(&self, x: &Tensor) -> Result<Tensor>;
}

/// Three-layer strided patch discriminator.
pub struct PatchDiscriminator {
    layers: [Conv; 3],
    slope: f64,
}

impl PatchDiscriminator {
    pub fn new(store: &mut ParameterStore, name: &str, base: usize, slope: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let layers = [
            Conv::new(
                store,
                &format!("{name}.c1"),
                ConvSpec::conv(1, base, 4, 2, 1),
                slope,
                rng,
            )?,
            Conv::new(
                store,
                &format!("{name}.c2"),
                ConvSpec::conv(base, 2 * base, 4, 2, 1),
                slope,
                rng,
            )?,
            Conv::new(
                store,
                &format!("{name}.c3"),
                ConvSpec::conv(2 * base, 1, 3, 1, 1),
                0.0,
                rng,
            )?,
        ];
        Ok(PatchDiscriminator { layers, slope })
    }
}

impl Discriminator for PatchDiscriminator {
    fn score(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.layers[0]
            .forward(&x.scale(2.0).add_scalar(-1.0))?
            .leaky_relu(self.slope);
        let h = self.layers[1].forward(&h)?.leaky_relu(self.slope);
        self.layers[2].forward(&h)
    }
}

/// Returns the same score everywhere; useful to pin the adversarial terms.
#[derive(Clone, Copy, Debug)]
pub struct ConstantDiscriminator(pub f64);

impl Discriminator for ConstantDiscriminator {
    fn score(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.shape().first().copied().unwrap_or(1);
        Ok(Tensor::full(&[n, 1, 1, 1], self.0))
    }
}

/// The two discriminators of the disentanglement network and their own optimizer state:
/// one judges corrected images against clean ones, the other artifact-affected
/// images against synthesized ones.
pub struct Discriminators {
    pub clean: PatchDiscriminator,
    pub artifact: PatchDiscriminator,
    store: ParameterStore,
}

impl Discriminators {
    pub fn new(base: usize, slope: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d15c);
        let mut store = ParameterStore::new();
        let clean = PatchDiscriminator::new(&mut store, "disc_clean", base, slope, &mut rng)?;
        let artifact = PatchDiscriminator::new(&mut store, "disc_artifact", base, slope, &mut rng)?;
        Ok(Discriminators { clean, artifact, store })
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}
