//! Paired and unpaired training data from procedural metal phantoms.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::artifact::{corrupt_metal, li_correct};
use crate::error::{CtError, Result};
use crate::geometry::ScanGeometry;
use crate::phantom::{random_phantom, PhantomImage};
use crate::projector::{fbp, project, radon_forward, Sinogram};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub n_test: usize,
    pub size: usize,
    /// Fraction of training pairs whose artifact image joins the unpaired
    /// artifact pool; the clean images of the remaining pairs form the clean pool.
    pub ratio: f64,
    pub severity: f64,
    pub noise: f64,
    /// Attenuation window mapped onto `[0, 1]`.
    pub window: (f64, f64),
    /// Projection angles over half a turn.
    pub n_views: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pairs: 16,
            n_test: 4,
            size: 64,
            ratio: 0.15,
            severity: 1.0,
            noise: 0.02,
            window: (0.0, 0.05),
            n_views: 180,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(CtError::Invalid("n_pairs must be >= 1".into()));
        }
        if self.size < 8 {
            return Err(CtError::Invalid(format!("image size must be >= 8, got {}", self.size)));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(CtError::Invalid(format!(
                "ratio must lie in (0, 1), got {}",
                self.ratio
            )));
        }
        if !(self.severity >= 0.0) || !(self.noise >= 0.0) {
            return Err(CtError::Invalid("severity and noise must be >= 0".into()));
        }
        if self.n_views == 0 {
            return Err(CtError::Invalid("n_views must be >= 1".into()));
        }
        if !(self.window.1 > self.window.0) {
            return Err(CtError::Invalid(format!("empty window {:?}", self.window)));
        }
        Ok(())
    }

    pub fn geometry(&self) -> ScanGeometry {
        ScanGeometry {
            n_views: self.n_views,
            ..ScanGeometry::for_image(self.size)
        }
    }

    /// Artifact-pool size: `round(n_pairs * ratio)`, kept within `[1, n_pairs - 1]`
    /// whenever there are at least two pairs.
    pub fn artifact_pool_len(&self) -> usize {
        if self.n_pairs < 2 {
            return self.n_pairs;
        }
        ((self.n_pairs as f64 * self.ratio).round() as usize).clamp(1, self.n_pairs - 1)
    }

    pub fn normalize(&self, mu: &Array2<f64>) -> Array2<f64> {
        let (lo, hi) = self.window;
        mu.mapv(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
    }
}

/// Every intermediate of one phantom, attenuation units.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub phantom: PhantomImage,
    pub sinogram: Sinogram,
    pub corrupted: Sinogram,
    /// FBP of the same anatomy before metal insertion: the clean partner.
    pub clean: Array2<f64>,
    /// FBP of the uncorrupted sinogram, metal included.
    pub uncorrupted: Array2<f64>,
    /// FBP of the corrupted sinogram.
    pub artifact: Array2<f64>,
}

impl Simulation {
    /// FBP after linear-interpolation inpainting of the corrupted trace.
    pub fn li_image(&self, geom: &ScanGeometry) -> Result<Array2<f64>> {
        fbp(li_correct(&self.corrupted).data.view(), geom, self.phantom.size())
    }
}

pub fn simulate(
    phantom: PhantomImage,
    geom: &ScanGeometry,
    severity: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Simulation> {
    let n = phantom.size();
    let sinogram = radon_forward(&phantom, geom)?;
    let corrupted = corrupt_metal(&sinogram, severity, noise, rng)?;
    let clean = fbp(project(phantom.without_metal().pixels.view(), geom)?.view(), geom, n)?;
    let uncorrupted = fbp(sinogram.data.view(), geom, n)?;
    let artifact = fbp(corrupted.data.view(), geom, n)?;
    Ok(Simulation {
        phantom,
        sinogram,
        corrupted,
        clean,
        uncorrupted,
        artifact,
    })
}

/// Generator for phantom `index`: an independent stream of the base seed.
pub fn phantom_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub index: usize,
    pub metal_pixels: usize,
    /// Normalized to `[0, 1]`.
    pub artifact: Array2<f64>,
    pub clean: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: SynthConfig,
    pub geometry: ScanGeometry,
    pub train: Vec<ImagePair>,
    pub test: Vec<ImagePair>,
    /// Indices into `train` whose artifact images form the unpaired artifact pool.
    pub artifact_pool: Vec<usize>,
    /// Indices into `train` whose clean images form the unpaired clean pool.
    pub clean_pool: Vec<usize>,
}

pub fn synthesize_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let geometry = cfg.geometry();
    let total = cfg.n_pairs + cfg.n_test;
    let pairs = (0..total)
        .into_par_iter()
        .map(|index| {
            let mut rng = phantom_rng(cfg.seed, index as u64);
            let phantom = random_phantom(cfg.size, &mut rng);
            let metal_pixels = phantom.metal_pixels();
            let sim = simulate(phantom, &geometry, cfg.severity, cfg.noise, &mut rng)?;
            Ok(ImagePair {
                index,
                metal_pixels,
                artifact: cfg.normalize(&sim.artifact),
                clean: cfg.normalize(&sim.clean),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut train = pairs;
    let test = train.split_off(cfg.n_pairs);

    let mut order: Vec<usize> = (0..cfg.n_pairs).collect();
    order.shuffle(&mut phantom_rng(cfg.seed, u64::MAX));
    let k = cfg.artifact_pool_len();
    let mut artifact_pool = order[..k].to_vec();
    let mut clean_pool = order[k..].to_vec();
    artifact_pool.sort_unstable();
    clean_pool.sort_unstable();
    Ok(Dataset {
        config: cfg.clone(),
        geometry,
        train,
        test,
        artifact_pool,
        clean_pool,
    })
}

const MANIFEST: &str = "manifest.txt";

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn image_path(split: &str, index: usize, kind: &str, ext: &str) -> String {
    format!("{split}/{index:04}_{kind}.{ext}")
}

fn write_pgm(path: &Path, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    let mut f = BufWriter::new(fs::File::create(path)?);
    write!(f, "P5\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

fn tensor_err(e: ldm_tensor::TensorError) -> CtError {
    match e {
        ldm_tensor::TensorError::Io(e) => CtError::Io(e),
        other => CtError::Format(other.to_string()),
    }
}

impl Dataset {
    pub fn manifest(&self) -> String {
        let c = &self.config;
        let g = &self.geometry;
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", c.seed);
        let _ = writeln!(s, "size = {}", c.size);
        let _ = writeln!(s, "n_pairs = {}", c.n_pairs);
        let _ = writeln!(s, "n_test = {}", c.n_test);
        let _ = writeln!(s, "ratio = {}", c.ratio);
        let _ = writeln!(s, "severity = {}", c.severity);
        let _ = writeln!(s, "noise = {}", c.noise);
        let _ = writeln!(s, "window = {} {}", c.window.0, c.window.1);
        let _ = writeln!(s, "views = {}", g.n_views);
        let _ = writeln!(s, "detectors = {}", g.n_detectors);
        let _ = writeln!(s, "artifact_pool = {}", join(&self.artifact_pool));
        let _ = writeln!(s, "clean_pool = {}", join(&self.clean_pool));
        for (split, pairs) in [("train", &self.train), ("test", &self.test)] {
            for p in pairs {
                let _ = writeln!(s, "pair = {split} {} {}", p.index, p.metal_pixels);
            }
        }
        s
    }

    /// Writes raw f32 images, PGM previews and the manifest under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for split in ["train", "test"] {
            fs::create_dir_all(dir.join(split))?;
        }
        for (split, pairs) in [("train", &self.train), ("test", &self.test)] {
            for p in pairs {
                for (kind, img) in [("artifact", &p.artifact), ("clean", &p.clean)] {
                    let (h, w) = img.dim();
                    let data: Vec<f64> = img.iter().copied().collect();
                    ldm_tensor::io::save(dir.join(image_path(split, p.index, kind, "f32")), &[h, w], &data)
                        .map_err(tensor_err)?;
                    write_pgm(&dir.join(image_path(split, p.index, kind, "pgm")), img)?;
                }
            }
        }
        fs::write(dir.join(MANIFEST), self.manifest())?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write`].
    pub fn load(dir: &Path) -> Result<Dataset> {
        let path = dir.join(MANIFEST);
        let text =
            fs::read_to_string(&path).map_err(|e| CtError::Format(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = SynthConfig::default();
        let mut geometry = ScanGeometry::for_image(cfg.size);
        let (mut artifact_pool, mut clean_pool) = (Vec::new(), Vec::new());
        let mut entries = Vec::new();
        let bad = |line: &str| CtError::Format(format!("bad manifest line `{line}`"));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line.split_once('=').ok_or_else(|| bad(line))?;
            let value = value.trim();
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(line));
            let int = |v: &str| v.parse::<usize>().map_err(|_| bad(line));
            let list = |v: &str| v.split_whitespace().map(int).collect::<Result<Vec<_>>>();
            match key.trim() {
                "seed" => cfg.seed = value.parse().map_err(|_| bad(line))?,
                "size" => cfg.size = int(value)?,
                "n_pairs" => cfg.n_pairs = int(value)?,
                "n_test" => cfg.n_test = int(value)?,
                "ratio" => cfg.ratio = num(value)?,
                "severity" => cfg.severity = num(value)?,
                "noise" => cfg.noise = num(value)?,
                "window" => {
                    let w: Vec<f64> = value.split_whitespace().map(num).collect::<Result<_>>()?;
                    let [lo, hi] = w[..] else { return Err(bad(line)) };
                    cfg.window = (lo, hi);
                }
                "views" => {
                    geometry.n_views = int(value)?;
                    cfg.n_views = geometry.n_views;
                }
                "detectors" => geometry.n_detectors = int(value)?,
                "artifact_pool" => artifact_pool = list(value)?,
                "clean_pool" => clean_pool = list(value)?,
                "pair" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    let [split, index, metal] = parts[..] else {
                        return Err(bad(line));
                    };
                    entries.push((split.to_string(), int(index)?, int(metal)?));
                }
                _ => return Err(bad(line)),
            }
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (split, index, metal_pixels) in entries {
            let read = |kind: &str| -> Result<Array2<f64>> {
                let (shape, data) =
                    ldm_tensor::io::load(dir.join(image_path(&split, index, kind, "f32"))).map_err(tensor_err)?;
                let [h, w] = shape[..] else {
                    return Err(CtError::Format(format!("image {index} has rank {}", shape.len())));
                };
                Array2::from_shape_vec((h, w), data).map_err(|e| CtError::Format(e.to_string()))
            };
            let pair = ImagePair {
                index,
                metal_pixels,
                artifact: read("artifact")?,
                clean: read("clean")?,
            };
            match split.as_str() {
                "train" => train.push(pair),
                "test" => test.push(pair),
                other => return Err(CtError::Format(format!("unknown split `{other}`"))),
            }
        }
        if train.len() != cfg.n_pairs || test.len() != cfg.n_test {
            return Err(CtError::Format(format!(
                "manifest lists {} train / {} test pairs, header says {} / {}",
                train.len(),
                test.len(),
                cfg.n_pairs,
                cfg.n_test
            )));
        }
        if artifact_pool.iter().chain(&clean_pool).any(|&i| i >= train.len()) {
            return Err(CtError::Format("pool index out of range".into()));
        }
        Ok(Dataset {
            config: cfg,
            geometry,
            train,
            test,
            artifact_pool,
            clean_pool,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_pairs: 4,
            n_test: 1,
            size: 16,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn pool_sizes() {
        let mut c = SynthConfig {
            n_pairs: 16,
            ratio: 0.5,
            ..SynthConfig::default()
        };
        assert_eq!(c.artifact_pool_len(), 8);
        c.ratio = 0.15;
        assert_eq!(c.artifact_pool_len(), 2);
        c.n_pairs = 2;
        assert_eq!(c.artifact_pool_len(), 1);
    }

    #[test]
    fn rejects_empty() {
        let c = SynthConfig {
            n_pairs: 0,
            ..SynthConfig::default()
        };
        assert!(synthesize_dataset(&c).is_err());
    }

    #[test]
    fn disk_roundtrip() {
        let d = synthesize_dataset(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.write(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.manifest(), d.manifest());
        for (a, b) in d.train.iter().zip(&back.train) {
            for (x, y) in a.artifact.iter().zip(&b.artifact) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }
}
