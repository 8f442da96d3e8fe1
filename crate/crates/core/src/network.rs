//! Encoder/decoder generators for the four network variants.
//!
//! Images enter and leave in `[0, 1]`; internally they are mapped to
//! `[-1, 1]` and decoded through `tanh`.

use ldm_tensor::{ParameterStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{GeometryConfig, NetworkVariant, WidthConfig};
use crate::error::{DnError, Result};
use crate::nn::{Conv, ConvSpec};

/// Architecture hyperparameters shared by every variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkConfig {
    pub variant: NetworkVariant,
    pub geometry: GeometryConfig,
    pub widths: WidthConfig,
    /// Leaky-relu slope.
    pub slope: f64,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(variant: NetworkVariant, geometry: GeometryConfig) -> Self {
        NetworkConfig {
            variant,
            geometry,
            widths: WidthConfig::default(),
            slope: 0.2,
            seed: 0,
        }
    }
}

struct Features {
    top: Tensor,
    /// Stem output followed by every stage except the last, finest first.
    skips: Vec<Tensor>,
}

struct Encoder {
    stem: Conv,
    down: Vec<Conv>,
    slope: f64,
}

impl Encoder {
    fn new(store: &mut ParameterStore, name: &str, cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let w = cfg.widths;
        let stem = Conv::new(
            store,
            &format!("{name}.stem"),
            ConvSpec::conv(1, w.at(0), 3, 1, 1),
            cfg.slope,
            rng,
        )?;
        let down = (1..=cfg.geometry.levels())
            .map(|l| {
                let spec = ConvSpec::conv(w.at(l - 1), w.at(l), 4, 2, 1);
                Conv::new(store, &format!("{name}.down{l}"), spec, cfg.slope, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Encoder {
            stem,
            down,
            slope: cfg.slope,
        })
    }

    /// `x` in `[0, 1]`.
    fn forward(&self, x: &Tensor) -> Result<Features> {
        let mut h = self
            .stem
            .forward(&x.scale(2.0).add_scalar(-1.0))?
            .leaky_relu(self.slope);
        let mut skips = Vec::with_capacity(self.down.len());
        for conv in &self.down {
            let next = conv.forward(&h)?.leaky_relu(self.slope);
            skips.push(h);
            h = next;
        }
        Ok(Features { top: h, skips })
    }
}

struct Decoder {
    /// Coarsest stage first.
    up: Vec<Conv>,
    head: Conv,
    slope: f64,
}

impl Decoder {
    fn new(
        store: &mut ParameterStore,
        name: &str,
        in_ch: usize,
        cfg: &NetworkConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let w = cfg.widths;
        let levels = cfg.geometry.levels();
        let mut up = Vec::with_capacity(levels);
        for l in (1..=levels).rev() {
            let cin = if l == levels { in_ch } else { w.at(l) };
            let spec = ConvSpec::transpose(cin, w.at(l - 1), 4, 2, 1);
            up.push(Conv::new(store, &format!("{name}.up{l}"), spec, cfg.slope, rng)?);
        }
        let head = Conv::new(
            store,
            &format!("{name}.head"),
            ConvSpec::conv(w.at(0), 1, 3, 1, 1),
            0.0,
            rng,
        )?;
        Ok(Decoder {
            up,
            head,
            slope: cfg.slope,
        })
    }

    /// Output in `[0, 1]`. Skips, when given, are added after each up-sampling.
    fn forward(&self, top: &Tensor, skips: Option<&[Tensor]>) -> Result<Tensor> {
        let mut h = top.clone();
        for (i, conv) in self.up.iter().enumerate() {
            h = conv.forward(&h)?.leaky_relu(self.slope);
            if let Some(s) = skips {
                h = h.add(&s[s.len() - 1 - i])?;
            }
        }
        Ok(self.head.forward(&h)?.tanh().scale(0.5).add_scalar(0.5))
    }
}

/// Everything one forward pass produces. Fields a variant does not define are `None`.
#[derive(Clone)]
pub struct BranchOutputs {
    /// Artifact-corrected image.
    pub x_hat: Tensor,
    /// Artifact-free reconstruction of the clean input.
    pub y_hat: Option<Tensor>,
    /// Self-reconstruction of the artifact-affected input.
    pub x_recon: Option<Tensor>,
    /// Clean input with the artifact of `x` transported onto it.
    pub y_art: Option<Tensor>,
    pub x_cyc: Option<Tensor>,
    pub y_cyc: Option<Tensor>,
    /// Code of the artifact-corrected branch, `[N, s^2, H/s, W/s]`.
    pub z_x: Option<Tensor>,
    /// Code of the artifact-free branch.
    pub z_y: Option<Tensor>,
}

/// Corrected image plus its code, if the variant has one.
#[derive(Clone)]
pub struct Corrected {
    pub x_hat: Tensor,
    pub z: Option<Tensor>,
}

pub struct Network {
    config: NetworkConfig,
    store: ParameterStore,
    /// Content encoder of artifact-affected images.
    content: Encoder,
    /// Encoder of artifact-free images.
    clean: Option<Encoder>,
    artifact: Option<Encoder>,
    g_clean: Decoder,
    g_artifact: Option<Decoder>,
    compress_x: Option<Conv>,
    compress_y: Option<Conv>,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.geometry.validate()?;
        if config.widths.base == 0 || config.widths.max < config.widths.base {
            return Err(DnError::Config(format!("invalid channel widths {:?}", config.widths)));
        }
        let variant = config.variant;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParameterStore::new();
        let top = config.widths.at(config.geometry.levels());
        let code = config.geometry.code_channels;

        let content = Encoder::new(&mut store, "enc_content", &config, &mut rng)?;
        let clean = match variant {
            NetworkVariant::Paired => None,
            _ => Some(Encoder::new(&mut store, "enc_clean", &config, &mut rng)?),
        };
        let artifact = if variant.is_unpaired() {
            Some(Encoder::new(&mut store, "enc_artifact", &config, &mut rng)?)
        } else {
            None
        };
        let g_clean = Decoder::new(&mut store, "dec_clean", top, &config, &mut rng)?;
        let g_artifact = if variant.is_unpaired() {
            Some(Decoder::new(&mut store, "dec_artifact", 2 * top, &config, &mut rng)?)
        } else {
            None
        };
        let (compress_x, compress_y) = if variant.has_codes() {
            let spec = ConvSpec::conv(top, code, 1, 1, 0);
            (
                Some(Conv::new(&mut store, "code_x", spec, 0.0, &mut rng)?),
                Some(Conv::new(&mut store, "code_y", spec, 0.0, &mut rng)?),
            )
        } else {
            (None, None)
        };
        Ok(Network {
            config,
            store,
            content,
            clean,
            artifact,
            g_clean,
            g_artifact,
            compress_x,
            compress_y,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn variant(&self) -> NetworkVariant {
        self.config.variant
    }

    pub fn geometry(&self) -> &GeometryConfig {
        &self.config.geometry
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn check_input(&self, what: &str, x: &Tensor) -> Result<()> {
        let g = &self.config.geometry;
        match x.shape() {
            [n, 1, h, w] if *n > 0 && *h == g.image_h && *w == g.image_w => Ok(()),
            s => Err(DnError::Config(format!(
                "{what} has shape {s:?}, expected [N, 1, {}, {}]",
                g.image_h, g.image_w
            ))),
        }
    }

    /// The `E^c -> G_I` path with skip connections, plus the corrected code.
    pub fn correct(&self, x: &Tensor) -> Result<Corrected> {
        self.check_input("x", x)?;
        let f = self.content.forward(x)?;
        self.corrected_from(&f)
    }

    fn corrected_from(&self, f: &Features) -> Result<Corrected> {
        let x_hat = self.g_clean.forward(&f.top, Some(&f.skips))?;
        let z = self.compress_x.as_ref().map(|c| c.forward(&f.top)).transpose()?;
        Ok(Corrected { x_hat, z })
    }

    /// Reconstruction and code of an artifact-free image through `E_I -> G_I`.
    pub fn free_branch(&self, y: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        self.check_input("y", y)?;
        let enc = self
            .clean
            .as_ref()
            .ok_or_else(|| missing(self.variant(), "an artifact-free branch"))?;
        let top = enc.forward(y)?.top;
        let y_hat = self.g_clean.forward(&top, None)?;
        let z = self.compress_y.as_ref().map(|c| c.forward(&top)).transpose()?;
        Ok((y_hat, z))
    }

    /// Code of an artifact-free image without decoding it.
    pub fn free_code(&self, y: &Tensor) -> Result<Tensor> {
        self.check_input("y", y)?;
        let enc = self
            .clean
            .as_ref()
            .ok_or_else(|| missing(self.variant(), "an artifact-free branch"))?;
        let c = self
            .compress_y
            .as_ref()
            .ok_or_else(|| missing(self.variant(), "code layers"))?;
        c.forward(&enc.forward(y)?.top)
    }

    /// Runs every path the variant defines. `y` is the clean image (unpaired
    /// variants) or the ground truth (paired LDM variant); it may be omitted
    /// for inference.
    pub fn forward(&self, x: &Tensor, y: Option<&Tensor>) -> Result<BranchOutputs> {
        self.check_input("x", x)?;
        let fx = self.content.forward(x)?;
        let Corrected { x_hat, z: z_x } = self.corrected_from(&fx)?;
        let mut out = BranchOutputs {
            x_hat,
            y_hat: None,
            x_recon: None,
            y_art: None,
            x_cyc: None,
            y_cyc: None,
            z_x,
            z_y: None,
        };
        match self.variant() {
            NetworkVariant::Paired => {}
            NetworkVariant::PairedLDM => {
                if let Some(y) = y {
                    let (y_hat, z_y) = self.free_branch(y)?;
                    out.y_hat = Some(y_hat);
                    out.z_y = z_y;
                }
            }
            NetworkVariant::Unpaired | NetworkVariant::UnpairedLDM => {
                let (ea, ga) = self.artifact_parts();
                let ax = ea.forward(x)?.top;
                out.x_recon = Some(ga.forward(&Tensor::concat_channels(&[&fx.top, &ax])?, None)?);
                if let Some(y) = y {
                    self.check_input("y", y)?;
                    let enc_clean = self.clean.as_ref().expect("unpaired variants have E_I");
                    let cy = enc_clean.forward(y)?.top;
                    let y_hat = self.g_clean.forward(&cy, None)?;
                    let y_art = ga.forward(&Tensor::concat_channels(&[&cy, &ax])?, None)?;

                    let back = self.content.forward(&y_art)?;
                    let y_cyc = self.g_clean.forward(&back.top, Some(&back.skips))?;
                    let c_hat = enc_clean.forward(&out.x_hat)?.top;
                    let a_art = ea.forward(&y_art)?.top;
                    let x_cyc = ga.forward(&Tensor::concat_channels(&[&c_hat, &a_art])?, None)?;

                    out.z_y = self.compress_y.as_ref().map(|c| c.forward(&cy)).transpose()?;
                    out.y_hat = Some(y_hat);
                    out.y_art = Some(y_art);
                    out.y_cyc = Some(y_cyc);
                    out.x_cyc = Some(x_cyc);
                }
            }
        }
        Ok(out)
    }

    fn artifact_parts(&self) -> (&Encoder, &Decoder) {
        (
            self.artifact
                .as_ref()
                .expect("unpaired variants have an artifact encoder"),
            self.g_artifact
                .as_ref()
                .expect("unpaired variants have an artifact decoder"),
        )
    }
}

fn missing(variant: NetworkVariant, what: &str) -> DnError {
    DnError::Config(format!("network variant {variant} has no {what}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(n: usize, size: usize, phase: f64) -> Tensor {
        let data = (0..n * size * size)
            .map(|i| 0.5 + 0.4 * (i as f64 * 0.37 + phase).sin())
            .collect();
        Tensor::new(data, &[n, 1, size, size]).unwrap()
    }

    #[test]
    fn paired_has_no_codes() {
        let net = Network::new(NetworkConfig::new(NetworkVariant::Paired, GeometryConfig::default())).unwrap();
        let out = net.forward(&image(1, 64, 0.0), None).unwrap();
        assert_eq!(out.x_hat.shape(), &[1, 1, 64, 64]);
        assert!(out.z_x.is_none() && out.z_y.is_none() && out.y_hat.is_none());
        assert!(net.free_branch(&image(1, 64, 0.0)).is_err());
    }

    #[test]
    fn paired_ldm_code_shape() {
        let net = Network::new(NetworkConfig::new(NetworkVariant::PairedLDM, GeometryConfig::default())).unwrap();
        let out = net.forward(&image(1, 64, 0.0), Some(&image(1, 64, 1.0))).unwrap();
        assert_eq!(out.z_x.unwrap().shape(), &[1, 64, 8, 8]);
        assert_eq!(out.z_y.unwrap().shape(), &[1, 64, 8, 8]);
        assert_eq!(out.y_hat.unwrap().shape(), &[1, 1, 64, 64]);
    }

    #[test]
    fn unpaired_ldm_populates_everything() {
        let net = Network::new(NetworkConfig::new(
            NetworkVariant::UnpairedLDM,
            GeometryConfig::new(32, 32, 4),
        ))
        .unwrap();
        let (x, y) = (image(2, 32, 0.0), image(2, 32, 2.0));
        let out = net.forward(&x, Some(&y)).unwrap();
        for t in [
            &out.x_hat,
            out.y_hat.as_ref().unwrap(),
            out.x_recon.as_ref().unwrap(),
            out.y_art.as_ref().unwrap(),
        ] {
            assert_eq!(t.shape(), x.shape());
        }
        assert_eq!(out.x_cyc.unwrap().shape(), x.shape());
        assert_eq!(out.y_cyc.unwrap().shape(), x.shape());
        assert_eq!(out.z_x.unwrap().shape(), &[2, 16, 8, 8]);
        let again = net.forward(&x, Some(&y)).unwrap();
        assert_eq!(again.x_hat.to_vec(), net.forward(&x, Some(&y)).unwrap().x_hat.to_vec());
        let out = net.forward(&x, None).unwrap();
        assert!(out.y_hat.is_none() && out.x_recon.is_some() && out.z_y.is_none());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = Network::new(NetworkConfig::new(NetworkVariant::Paired, GeometryConfig::default())).unwrap();
        assert!(net.forward(&image(1, 32, 0.0), None).is_err());
        assert!(Network::new(NetworkConfig::new(
            NetworkVariant::Paired,
            GeometryConfig::new(60, 64, 8)
        ))
        .is_err());
    }

    #[test]
    fn outputs_lie_in_unit_interval() {
        let net = Network::new(NetworkConfig::new(
            NetworkVariant::Unpaired,
            GeometryConfig::new(32, 32, 4),
        ))
        .unwrap();
        let out = net.forward(&image(1, 32, 0.0), Some(&image(1, 32, 0.5))).unwrap();
        assert!(out.y_art.unwrap().to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
