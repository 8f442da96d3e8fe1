use std::fmt;
use std::str::FromStr;

use ldm_manifold::{Bandwidth, KernelConfig};
use ldm_tensor::AdamConfig;

use crate::error::{DnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeometryConfig {
    pub image_h: usize,
    pub image_w: usize,
    /// Down-sampling step between the image and its code.
    pub s: usize,
    pub code_channels: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig::new(64, 64, 8)
    }
}

impl GeometryConfig {
    pub fn new(image_h: usize, image_w: usize, s: usize) -> Self {
        GeometryConfig {
            image_h,
            image_w,
            s,
            code_channels: s * s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.s;
        if s < 2 || !s.is_power_of_two() {
            return Err(DnError::Config(format!("s must be a power of two >= 2, got {s}")));
        }
        if self.image_h == 0 || !self.image_h.is_multiple_of(s) {
            return Err(DnError::Config(format!(
                "image height {} is not divisible by s = {s}",
                self.image_h
            )));
        }
        if self.image_w == 0 || !self.image_w.is_multiple_of(s) {
            return Err(DnError::Config(format!(
                "image width {} is not divisible by s = {s}",
                self.image_w
            )));
        }
        if self.code_channels != s * s {
            return Err(DnError::Config(format!(
                "code channels must equal s^2 = {}, got {}",
                s * s,
                self.code_channels
            )));
        }
        Ok(())
    }

    /// Patch-point dimension `2 s^2`.
    pub fn point_dim(&self) -> usize {
        2 * self.s * self.s
    }

    pub fn code_hw(&self) -> (usize, usize) {
        (self.image_h / self.s, self.image_w / self.s)
    }

    /// Patch points contributed by one image.
    pub fn patches_per_image(&self) -> usize {
        let (h, w) = self.code_hw();
        h * w
    }

    /// Number of stride-2 stages between the image and the code grid.
    pub fn levels(&self) -> usize {
        self.s.trailing_zeros() as usize
    }
}

/// Channel widths of the convolutional stacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WidthConfig {
    pub base: usize,
    pub max: usize,
}

impl Default for WidthConfig {
    fn default() -> Self {
        WidthConfig { base: 8, max: 32 }
    }
}

impl WidthConfig {
    /// Channels after stage `level` (0 is the full-resolution stem).
    pub fn at(&self, level: usize) -> usize {
        (self.base << level).min(self.max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NetworkVariant {
    /// Full disentanglement network for unpaired data.
    Unpaired,
    /// Unpaired network plus code compression on both branches.
    UnpairedLDM,
    /// Single encoder-decoder with skip connections.
    Paired,
    /// Artifact-corrected and artifact-free encoder-decoder branches with codes.
    PairedLDM,
}

impl NetworkVariant {
    pub fn has_codes(self) -> bool {
        matches!(self, NetworkVariant::UnpairedLDM | NetworkVariant::PairedLDM)
    }

    pub fn is_unpaired(self) -> bool {
        matches!(self, NetworkVariant::Unpaired | NetworkVariant::UnpairedLDM)
    }
}

impl fmt::Display for NetworkVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkVariant::Unpaired => "unpaired",
            NetworkVariant::UnpairedLDM => "unpaired-ldm",
            NetworkVariant::Paired => "paired",
            NetworkVariant::PairedLDM => "paired-ldm",
        })
    }
}

impl FromStr for NetworkVariant {
    type Err = DnError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unpaired" => NetworkVariant::Unpaired,
            "unpaired-ldm" => NetworkVariant::UnpairedLDM,
            "paired" => NetworkVariant::Paired,
            "paired-ldm" => NetworkVariant::PairedLDM,
            _ => return Err(DnError::Config(format!("unknown network variant `{s}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Sup,
    LdmSup,
    Adn,
    LdmDn,
    AdnSup,
    LdmDnSup,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Sup,
        Mode::LdmSup,
        Mode::Adn,
        Mode::LdmDn,
        Mode::AdnSup,
        Mode::LdmDnSup,
    ];

    pub fn variant(self) -> NetworkVariant {
        match self {
            Mode::Sup => NetworkVariant::Paired,
            Mode::LdmSup => NetworkVariant::PairedLDM,
            Mode::Adn => NetworkVariant::Unpaired,
            Mode::LdmDn | Mode::AdnSup | Mode::LdmDnSup => NetworkVariant::UnpairedLDM,
        }
    }

    /// Whether the manifold penalty participates.
    pub fn uses_ldm(self) -> bool {
        matches!(self, Mode::LdmSup | Mode::LdmDn | Mode::LdmDnSup)
    }

    pub fn uses_paired(self) -> bool {
        matches!(self, Mode::Sup | Mode::LdmSup | Mode::AdnSup | Mode::LdmDnSup)
    }

    pub fn uses_unpaired(self) -> bool {
        matches!(self, Mode::Adn | Mode::LdmDn | Mode::AdnSup | Mode::LdmDnSup)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sup => "Sup",
            Mode::LdmSup => "LDM-Sup",
            Mode::Adn => "ADN",
            Mode::LdmDn => "LDM-DN",
            Mode::AdnSup => "ADN-Sup",
            Mode::LdmDnSup => "LDM-DN-Sup",
        })
    }
}

impl FromStr for Mode {
    type Err = DnError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<String> = Mode::ALL.iter().map(Mode::to_string).collect();
                DnError::Config(format!("unknown mode `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Weights of the disentanglement-network loss components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub adv: f64,
    pub rec: f64,
    pub cyc: f64,
    pub art: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adv: 1.0,
            rec: 1.0,
            cyc: 1.0,
            art: 1.0,
        }
    }
}

/// How the penalty `||U - P + d||_F^2` is reduced over its entries. `Sum`
/// is the plain Frobenius norm; `Mean` divides it by the number of entries so
/// its scale does not grow with the patch set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyReduction {
    Sum,
    Mean,
}

impl FromStr for PenaltyReduction {
    type Err = DnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(PenaltyReduction::Sum),
            "mean" => Ok(PenaltyReduction::Mean),
            _ => Err(DnError::Config(format!("unknown penalty reduction `{s}` (sum | mean)"))),
        }
    }
}

impl fmt::Display for PenaltyReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyReduction::Sum => "sum",
            PenaltyReduction::Mean => "mean",
        })
    }
}

/// Adam settings sized for 64x64 toy runs.
const DESK_ADAM: AdamConfig = AdamConfig {
    lr: 1e-3,
    beta1: 0.5,
    beta2: 0.999,
    eps: 1e-8,
};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub mu_bar: f64,
    pub mode: Mode,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Optimizer of the discriminators.
    pub disc_adam: AdamConfig,
    pub weights: LossWeights,
    pub reduction: PenaltyReduction,
    /// Fixed kernel bandwidth; `None` uses the median rule per batch.
    pub bandwidth: Option<f64>,
    /// Keep only k-nearest-neighbor edges; `None` keeps the dense graph.
    pub knn: Option<usize>,
    /// Kernel normalization constant.
    pub c_t: f64,
    pub geometry: GeometryConfig,
    pub widths: WidthConfig,
    pub slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            batch_size: 1,
            lambda: 0.6,
            mu_bar: 0.6,
            mode: Mode::LdmDnSup,
            seed: 0,
            adam: DESK_ADAM,
            disc_adam: DESK_ADAM,
            weights: LossWeights::default(),
            reduction: PenaltyReduction::Mean,
            bandwidth: None,
            knn: None,
            c_t: 1.0,
            geometry: GeometryConfig::default(),
            widths: WidthConfig::default(),
            slope: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(DnError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.mu_bar > 0.0) {
            return Err(DnError::Config(format!("mu_bar must be > 0, got {}", self.mu_bar)));
        }
        if self.batch_size == 0 {
            return Err(DnError::Config("batch size must be >= 1".into()));
        }
        for (name, a) in [("adam", &self.adam), ("disc_adam", &self.disc_adam)] {
            if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
                return Err(DnError::Config(format!("invalid {name} settings {a:?}")));
            }
        }
        let w = &self.weights;
        if [w.adv, w.rec, w.cyc, w.art].iter().any(|&v| !(v >= 0.0)) {
            return Err(DnError::Config(format!("loss weights must be >= 0, got {w:?}")));
        }
        if let Some(t) = self.bandwidth {
            if !(t > 0.0) {
                return Err(DnError::Config(format!("kernel bandwidth must be > 0, got {t}")));
            }
        }
        if !(self.c_t > 0.0) {
            return Err(DnError::Config(format!("c_t must be > 0, got {}", self.c_t)));
        }
        if self.knn == Some(0) {
            return Err(DnError::Config("knn must be >= 1".into()));
        }
        if self.widths.base == 0 || self.widths.max < self.widths.base {
            return Err(DnError::Config(format!("invalid channel widths {:?}", self.widths)));
        }
        Ok(())
    }

    /// Warnings for settings that have no effect in the chosen mode.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !self.mode.uses_ldm() && self.lambda != 0.0 {
            w.push(format!(
                "lambda = {} is ignored: mode {} has no manifold penalty",
                self.lambda, self.mode
            ));
        }
        w
    }

    pub fn kernel(&self) -> KernelConfig {
        KernelConfig {
            bandwidth: self.bandwidth.map_or(Bandwidth::MedianRule, Bandwidth::Fixed),
            mu_bar: self.mu_bar,
            knn: self.knn,
            c_t: self.c_t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let g = GeometryConfig::default();
        g.validate().unwrap();
        assert_eq!(g.point_dim(), 128);
        assert_eq!(g.levels(), 3);
        assert_eq!(g.patches_per_image(), 64);
        assert!(GeometryConfig::new(60, 64, 8).validate().is_err());
        assert!(GeometryConfig::new(64, 64, 6).validate().is_err());
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("LDM".parse::<Mode>().is_err());
        assert_eq!(Mode::LdmDnSup.variant(), NetworkVariant::UnpairedLDM);
        assert_eq!(Mode::Sup.variant(), NetworkVariant::Paired);
    }

    #[test]
    fn lambda_warning() {
        let cfg = TrainConfig {
            mode: Mode::Sup,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.warnings().len(), 1);
        assert!(TrainConfig::default().warnings().is_empty());
    }
}
