//! Synthetic PV thermal scenes with per-pixel ground truth.
//!
//! A scene is a background with a grid of panel modules, bright radial
//! hotspots and thin bright snail-trail ribbons, plus clipped Gaussian
//! noise. Output is a pure function of the [`SceneSpec`], seed included.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::ImageGray;
use crate::math;
use crate::{Error, Result};

/// Ground-truth class of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SceneClass {
    Background = 0,
    Panel = 1,
    Hotspot = 2,
    SnailTrail = 3,
}

impl SceneClass {
    pub const ALL: [SceneClass; 4] = [
        SceneClass::Background,
        SceneClass::Panel,
        SceneClass::Hotspot,
        SceneClass::SnailTrail,
    ];
    pub const FAULTS: [SceneClass; 2] = [SceneClass::Hotspot, SceneClass::SnailTrail];

    pub fn as_str(self) -> &'static str {
        match self {
            SceneClass::Background => "background",
            SceneClass::Panel => "panel",
            SceneClass::Hotspot => "hotspot",
            SceneClass::SnailTrail => "snail_trail",
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }
}

/// Rectangular grid of panel modules.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelGrid {
    pub origin_x: usize,
    pub origin_y: usize,
    pub rows: usize,
    pub cols: usize,
    pub cell_width: usize,
    pub cell_height: usize,
    pub gap: usize,
}

impl PanelGrid {
    fn extent(&self) -> (usize, usize) {
        let span = |n: usize, cell: usize| {
            if n == 0 {
                0
            } else {
                n * cell + (n - 1) * self.gap
            }
        };
        (
            self.origin_x + span(self.cols, self.cell_width),
            self.origin_y + span(self.rows, self.cell_height),
        )
    }

    /// Top-left corner of cell `(row, col)`.
    pub fn cell_origin(&self, row: usize, col: usize) -> (usize, usize) {
        (
            self.origin_x + col * (self.cell_width + self.gap),
            self.origin_y + row * (self.cell_height + self.gap),
        )
    }
}

/// Radial Gaussian blob with σ = radius/2, truncated at `radius`; the disc it
/// touches is its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Hotspot {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub peak: f64,
}

/// Bright polyline ribbon of constant intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct SnailTrail {
    pub points: Vec<(f64, f64)>,
    pub thickness: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub grid: PanelGrid,
    pub background: f64,
    pub panel: f64,
    pub noise_sigma: f64,
    pub hotspots: Vec<Hotspot>,
    pub trails: Vec<SnailTrail>,
    pub seed: u64,
}

pub const DEFAULT_BACKGROUND: f64 = 0.15;
pub const DEFAULT_PANEL: f64 = 0.45;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.02;
pub const DEFAULT_HOTSPOT_PEAK: f64 = DEFAULT_PANEL + 0.3;
pub const DEFAULT_TRAIL_INTENSITY: f64 = DEFAULT_PANEL + 0.2;

/// Names accepted by [`SceneSpec::preset`].
pub const PRESETS: &[&str] = &["hotspots3"];

impl SceneSpec {
    /// Built-in scenes. `hotspots3` is a 336×256 frame with a 2×4 module
    /// grid, three hotspots and one snail trail placed from `seed`.
    pub fn preset(name: &str, seed: u64) -> Option<SceneSpec> {
        match name {
            "hotspots3" => Some(Self::hotspots3(seed)),
            _ => None,
        }
    }

    fn hotspots3(seed: u64) -> SceneSpec {
        let grid = PanelGrid {
            origin_x: 12,
            origin_y: 24,
            rows: 2,
            cols: 4,
            cell_width: 72,
            cell_height: 100,
            gap: 8,
        };
        // Separate stream from the noise so placement stays stable if the
        // noise model changes.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce0_e5ce_0000_0001);
        let mut cells: Vec<(usize, usize)> = (0..grid.rows)
            .flat_map(|r| (0..grid.cols).map(move |c| (r, c)))
            .collect();
        // Partial Fisher-Yates: first four cells get the faults.
        for i in 0..4 {
            let j = rng.random_range(i..cells.len());
            cells.swap(i, j);
        }
        let margin = 20.0;
        let mut hotspots = Vec::new();
        for &(r, c) in &cells[..3] {
            let (x0, y0) = grid.cell_origin(r, c);
            let cx = x0 as f64 + rng.random_range(margin..grid.cell_width as f64 - margin);
            let cy = y0 as f64 + rng.random_range(margin..grid.cell_height as f64 - margin);
            hotspots.push(Hotspot {
                cx,
                cy,
                radius: rng.random_range(10.0..16.0),
                peak: DEFAULT_HOTSPOT_PEAK,
            });
        }
        let (r, c) = cells[3];
        let (x0, y0) = grid.cell_origin(r, c);
        let (x0, y0) = (x0 as f64, y0 as f64);
        let (cw, ch) = (grid.cell_width as f64, grid.cell_height as f64);
        let points = vec![
            (x0 + rng.random_range(8.0..cw - 8.0), y0 + 8.0),
            (x0 + rng.random_range(8.0..cw - 8.0), y0 + ch * 0.5),
            (x0 + rng.random_range(8.0..cw - 8.0), y0 + ch - 8.0),
        ];
        SceneSpec {
            width: 336,
            height: 256,
            grid,
            background: DEFAULT_BACKGROUND,
            panel: DEFAULT_PANEL,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            hotspots,
            trails: vec![SnailTrail {
                points,
                thickness: 3.0,
                intensity: DEFAULT_TRAIL_INTENSITY,
            }],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Scene(msg));
        if self.width == 0 || self.height == 0 {
            return fail("scene must have non-zero size".into());
        }
        let (gx, gy) = self.grid.extent();
        if gx > self.width || gy > self.height {
            return fail(format!(
                "panel grid extends to ({gx}, {gy}) beyond {}×{}",
                self.width, self.height
            ));
        }
        let unit = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Scene(format!("{name} intensity {v} outside [0, 1]")))
            }
        };
        unit("background", self.background)?;
        unit("panel", self.panel)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for (i, s) in self.hotspots.iter().enumerate() {
            unit("hotspot peak", s.peak)?;
            if !(s.radius > 0.0 && s.radius.is_finite()) {
                return fail(format!("hotspot {i} radius must be > 0"));
            }
            if s.cx - s.radius < 0.0
                || s.cy - s.radius < 0.0
                || s.cx + s.radius > w - 1.0
                || s.cy + s.radius > h - 1.0
            {
                return fail(format!("hotspot {i} disc leaves the image"));
            }
        }
        for (i, t) in self.trails.iter().enumerate() {
            unit("trail", t.intensity)?;
            if t.points.len() < 2 {
                return fail(format!("trail {i} needs at least two points"));
            }
            if !(t.thickness > 0.0 && t.thickness.is_finite()) {
                return fail(format!("trail {i} thickness must be > 0"));
            }
            if t.points
                .iter()
                .any(|&(x, y)| !(0.0..=w - 1.0).contains(&x) || !(0.0..=h - 1.0).contains(&y))
            {
                return fail(format!("trail {i} leaves the image"));
            }
        }
        Ok(())
    }
}

/// Per-pixel generating element of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    width: usize,
    height: usize,
    classes: Vec<SceneClass>,
}

impl GroundTruth {
    pub fn new(width: usize, height: usize, classes: Vec<SceneClass>) -> Result<Self> {
        if classes.len() != width * height {
            return Err(Error::shape(
                "GroundTruth::new",
                width * height,
                classes.len(),
            ));
        }
        Ok(GroundTruth {
            width,
            height,
            classes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> &[SceneClass] {
        &self.classes
    }

    pub fn mask(&self, class: SceneClass) -> Vec<bool> {
        self.classes.iter().map(|&c| c == class).collect()
    }

    pub fn count(&self, class: SceneClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn contains(&self, class: SceneClass) -> bool {
        self.classes.contains(&class)
    }

    /// Class indices as bytes (0 background … 3 snail trail).
    pub fn to_indices(&self) -> Vec<u8> {
        self.classes.iter().map(|c| c.index()).collect()
    }
}

fn dist_to_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
    math::sqrt(qx * qx + qy * qy)
}

fn clamp_range(lo: f64, hi: f64, n: usize) -> core::ops::Range<usize> {
    let lo = math::floor(lo).max(0.0) as usize;
    let hi = (math::ceil(hi).max(-1.0) + 1.0).min(n as f64) as usize;
    lo.min(n)..hi
}

/// Renders a scene and its ground truth. Pixel `(x, y)` has its centre at
/// integer coordinates. Hotspots take precedence over trails, and both over
/// panel and background.
pub fn generate_scene(spec: &SceneSpec) -> Result<(ImageGray, GroundTruth)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut img = vec![spec.background; w * h];
    let mut truth = vec![SceneClass::Background; w * h];

    let g = &spec.grid;
    for r in 0..g.rows {
        for c in 0..g.cols {
            let (x0, y0) = g.cell_origin(r, c);
            for y in y0..y0 + g.cell_height {
                for x in x0..x0 + g.cell_width {
                    img[y * w + x] = spec.panel;
                    truth[y * w + x] = SceneClass::Panel;
                }
            }
        }
    }

    for t in &spec.trails {
        let half = t.thickness / 2.0;
        for seg in t.points.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let ys = clamp_range(a.1.min(b.1) - half, a.1.max(b.1) + half, h);
            let xs = clamp_range(a.0.min(b.0) - half, a.0.max(b.0) + half, w);
            for y in ys {
                for x in xs.clone() {
                    if dist_to_segment(x as f64, y as f64, a, b) <= half {
                        img[y * w + x] = t.intensity;
                        truth[y * w + x] = SceneClass::SnailTrail;
                    }
                }
            }
        }
    }

    for s in &spec.hotspots {
        let reach = s.radius;
        let ys = clamp_range(s.cy - reach, s.cy + reach, h);
        let xs = clamp_range(s.cx - reach, s.cx + reach, w);
        for y in ys {
            for x in xs.clone() {
                let (dx, dy) = (x as f64 - s.cx, y as f64 - s.cy);
                let d2 = (dx * dx + dy * dy) / (s.radius * s.radius);
                if d2 > 1.0 {
                    continue;
                }
                let v = spec.panel + (s.peak - spec.panel) * math::exp(-2.0 * d2);
                let i = y * w + x;
                img[i] = img[i].max(v);
                truth[i] = SceneClass::Hotspot;
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        for p in &mut img {
            *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }

    Ok((ImageGray::new(w, h, img)?, GroundTruth::new(w, h, truth)?))
}
