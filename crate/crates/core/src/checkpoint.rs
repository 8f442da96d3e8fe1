//! Checkpoint directories: `manifest.txt` plus one raw dump per parameter.
//!
//! Values are stored as f32, so a reload matches the saved model to f32
//! precision.

use std::fs;
use std::path::Path;

use ldm_tensor::{io, ParameterSnapshot, ParameterStore};

use crate::config::{GeometryConfig, WidthConfig};
use crate::error::{DnError, Result};
use crate::model::Model;
use crate::network::NetworkConfig;

const MANIFEST: &str = "manifest.txt";

fn dims(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let c = model.net.config();
    let g = &c.geometry;
    let mut manifest = format!(
        "variant {}\nimage_h {}\nimage_w {}\ns {}\nwidth_base {}\nwidth_max {}\nslope {}\nseed {}\n",
        c.variant, g.image_h, g.image_w, g.s, c.widths.base, c.widths.max, c.slope, c.seed
    );
    let groups = [
        ("gen", Some(model.net.store())),
        ("disc", model.discs.as_ref().map(|d| d.store())),
    ];
    for (group, store) in groups {
        let Some(store) = store else { continue };
        for (name, t) in store.iter() {
            manifest.push_str(&format!("param {group} {name} {}\n", dims(t.shape())));
            io::save(dir.join(format!("{name}.f32")), t.shape(), &t.to_vec())?;
        }
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

fn field<'a>(lines: &[(&'a str, &'a str)], key: &str) -> Result<&'a str> {
    lines
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| DnError::Format(format!("checkpoint manifest lacks `{key}`")))
}

fn parse<T: std::str::FromStr>(lines: &[(&str, &str)], key: &str) -> Result<T> {
    let v = field(lines, key)?;
    v.parse()
        .map_err(|_| DnError::Format(format!("checkpoint manifest: bad `{key}` value `{v}`")))
}

/// Network configuration recorded in a checkpoint.
pub fn read_checkpoint_config(dir: &Path) -> Result<NetworkConfig> {
    let text = fs::read_to_string(dir.join(MANIFEST))
        .map_err(|e| DnError::Format(format!("cannot read checkpoint manifest in {}: {e}", dir.display())))?;
    let lines: Vec<(&str, &str)> = text.lines().filter_map(|l| l.split_once(' ')).collect();
    let s: usize = parse(&lines, "s")?;
    Ok(NetworkConfig {
        variant: field(&lines, "variant")?.parse()?,
        geometry: GeometryConfig::new(parse(&lines, "image_h")?, parse(&lines, "image_w")?, s),
        widths: WidthConfig {
            base: parse(&lines, "width_base")?,
            max: parse(&lines, "width_max")?,
        },
        slope: parse(&lines, "slope")?,
        seed: parse(&lines, "seed")?,
    })
}

fn fill(store: &ParameterStore, dir: &Path) -> Result<()> {
    let mut entries = Vec::with_capacity(store.len());
    for (name, _) in store.iter() {
        let path = dir.join(format!("{name}.f32"));
        let (shape, data) = io::load(&path)
            .map_err(|e| DnError::Format(format!("cannot load parameter `{name}` from {}: {e}", path.display())))?;
        entries.push((name.to_string(), shape, data));
    }
    store.load_snapshot(&ParameterSnapshot { entries })?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let model = Model::new(read_checkpoint_config(dir)?)?;
    fill(model.net.store(), dir)?;
    if let Some(d) = &model.discs {
        fill(d.store(), dir)?;
    }
    Ok(model)
}
