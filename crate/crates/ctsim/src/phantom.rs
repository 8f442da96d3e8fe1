//! Procedural attenuation phantoms (per-pixel units).

use ndarray::Array2;
use rand::Rng;

/// Pixels flagged as metal carry attenuation strictly above this.
pub const METAL_THRESHOLD: f64 = 0.08;

const SOFT_TISSUE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomImage {
    pub pixels: Array2<f64>,
    pub metal_mask: Array2<bool>,
}

impl PhantomImage {
    pub fn size(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn metal_pixels(&self) -> usize {
        self.metal_mask.iter().filter(|&&m| m).count()
    }

    /// Same anatomy with the metal replaced by soft tissue.
    pub fn without_metal(&self) -> PhantomImage {
        let pixels = ndarray::Zip::from(&self.pixels)
            .and(&self.metal_mask)
            .map_collect(|&p, &m| if m { SOFT_TISSUE } else { p });
        PhantomImage {
            metal_mask: Array2::from_elem(self.metal_mask.raw_dim(), false),
            pixels,
        }
    }
}

/// Ellipse with semi-axes `(a, b)` rotated by `phi`, centre in image coordinates.
#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    phi: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }
}

const SUPERSAMPLE: usize = 4;

/// Fraction of pixel `(i, j)` covered by the shape, from a regular sub-grid.
fn coverage(n: usize, i: usize, j: usize, inside: impl Fn(f64, f64) -> bool) -> f64 {
    let c = (n as f64 - 1.0) / 2.0;
    let mut hits = 0;
    for a in 0..SUPERSAMPLE {
        for b in 0..SUPERSAMPLE {
            let dy = (a as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
            let dx = (b as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
            if inside(j as f64 - c + dx, c - i as f64 - dy) {
                hits += 1;
            }
        }
    }
    hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
}

fn paint(img: &mut Array2<f64>, e: &Ellipse, value: f64) {
    let n = img.nrows();
    for ((i, j), px) in img.indexed_iter_mut() {
        let f = coverage(n, i, j, |x, y| e.contains(x, y));
        if f > 0.0 {
            *px = (1.0 - f) * *px + f * value;
        }
    }
}

/// Centred disk of the given radius and attenuation, edges anti-aliased.
pub fn disk_phantom(n: usize, radius: f64, value: f64) -> PhantomImage {
    let mut pixels = Array2::zeros((n, n));
    let disk = Ellipse {
        cx: 0.0,
        cy: 0.0,
        a: radius,
        b: radius,
        phi: 0.0,
    };
    paint(&mut pixels, &disk, value);
    PhantomImage {
        pixels,
        metal_mask: Array2::from_elem((n, n), false),
    }
}

/// Adds a round metal insert at `(cx, cy)`. Metal is painted on whole pixels
/// so the mask and the attenuation agree exactly.
pub fn insert_metal(p: &mut PhantomImage, cx: f64, cy: f64, radius: f64, value: f64) {
    assert!(value > METAL_THRESHOLD, "metal attenuation must exceed the threshold");
    let n = p.size();
    let c = (n as f64 - 1.0) / 2.0;
    for ((i, j), px) in p.pixels.indexed_iter_mut() {
        let (x, y) = (j as f64 - c, c - i as f64);
        if (x - cx).powi(2) + (y - cy).powi(2) <= radius * radius {
            *px = value;
            p.metal_mask[[i, j]] = true;
        }
    }
}

/// Soft-tissue body with random organs, bone structures and 1 to 3 metal inserts.
pub fn random_phantom(n: usize, rng: &mut impl Rng) -> PhantomImage {
    let r = n as f64 / 2.0;
    let mut pixels = Array2::zeros((n, n));
    let body = Ellipse {
        cx: rng.random_range(-0.04..0.04) * r,
        cy: rng.random_range(-0.04..0.04) * r,
        a: rng.random_range(0.78..0.9) * r,
        b: rng.random_range(0.6..0.78) * r,
        phi: rng.random_range(-0.2..0.2),
    };
    paint(&mut pixels, &body, SOFT_TISSUE);

    let inner = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| Ellipse {
        cx: body.cx + rng.random_range(-0.45..0.45) * body.a,
        cy: body.cy + rng.random_range(-0.45..0.45) * body.b,
        a: rng.random_range(lo..hi) * r,
        b: rng.random_range(lo..hi) * r,
        phi: rng.random_range(0.0..std::f64::consts::PI),
    };
    for _ in 0..rng.random_range(2..=4) {
        let e = inner(rng, 0.08, 0.25);
        paint(&mut pixels, &e, rng.random_range(0.014..0.03));
    }
    for _ in 0..rng.random_range(1..=3) {
        let mut e = inner(rng, 0.04, 0.12);
        // bars: one elongated axis
        if rng.random_bool(0.5) {
            e.a *= 2.5;
        }
        paint(&mut pixels, &e, rng.random_range(0.04..0.05));
    }

    let mut p = PhantomImage {
        metal_mask: Array2::from_elem((n, n), false),
        pixels,
    };
    for _ in 0..rng.random_range(1..=3) {
        let cx = body.cx + rng.random_range(-0.55..0.55) * body.a;
        let cy = body.cy + rng.random_range(-0.55..0.55) * body.b;
        let radius = rng.random_range(0.025..0.05) * n as f64;
        insert_metal(&mut p, cx, cy, radius, rng.random_range(0.1..0.2));
    }
    p
}
