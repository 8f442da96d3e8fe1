use ldm_tensor::ParameterStore;

use crate::config::TrainConfig;
use crate::discriminator::Discriminators;
use crate::error::Result;
use crate::network::{Network, NetworkConfig};

/// Generator plus, for unpaired variants, its discriminators.
pub struct Model {
    pub net: Network,
    pub discs: Option<Discriminators>,
}

impl Model {
    pub fn new(net_cfg: NetworkConfig) -> Result<Self> {
        let net = Network::new(net_cfg)?;
        let discs = if net_cfg.variant.is_unpaired() {
            Some(Discriminators::new(net_cfg.widths.base, net_cfg.slope, net_cfg.seed)?)
        } else {
            None
        };
        Ok(Model { net, discs })
    }

    pub fn for_training(cfg: &TrainConfig) -> Result<Self> {
        Model::new(network_config(cfg))
    }

    pub fn stores(&self) -> impl Iterator<Item = &ParameterStore> {
        std::iter::once(self.net.store()).chain(self.discs.as_ref().map(Discriminators::store))
    }
}

pub fn network_config(cfg: &TrainConfig) -> NetworkConfig {
    NetworkConfig {
        variant: cfg.mode.variant(),
        geometry: cfg.geometry,
        widths: cfg.widths,
        slope: cfg.slope,
        seed: cfg.seed,
    }
}
