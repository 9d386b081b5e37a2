//! Flat `key = value` text format for [`SceneSpec`].
//!
//! ```text
//! # comments start with '#'
//! width = 336
//! height = 256
//! seed = 7
//! background = 0.15
//! panel = 0.45
//! noise_sigma = 0.02
//! grid.origin_x = 12
//! grid.origin_y = 24
//! grid.rows = 2
//! grid.cols = 4
//! grid.cell_width = 72
//! grid.cell_height = 100
//! grid.gap = 8
//! hotspot = 50 60 7.5 0.75        # cx cy radius peak (repeatable)
//! trail = 3 0.65 100,40 120,90    # thickness intensity x,y x,y ... (repeatable)
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use pvseg_core::synth::{Hotspot, PanelGrid, SceneSpec, SnailTrail};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn num<T: FromStr>(line: usize, key: &str, s: &str) -> Result<T, ParseError> {
    s.trim().parse().map_err(|_| ParseError {
        line,
        message: format!("invalid value {s:?} for {key}"),
    })
}

pub fn parse(text: &str) -> Result<SceneSpec, ParseError> {
    let mut width = None;
    let mut height = None;
    let mut spec = SceneSpec {
        width: 0,
        height: 0,
        grid: PanelGrid {
            origin_x: 0,
            origin_y: 0,
            rows: 0,
            cols: 0,
            cell_width: 0,
            cell_height: 0,
            gap: 0,
        },
        background: pvseg_core::synth::DEFAULT_BACKGROUND,
        panel: pvseg_core::synth::DEFAULT_PANEL,
        noise_sigma: pvseg_core::synth::DEFAULT_NOISE_SIGMA,
        hotspots: Vec::new(),
        trails: Vec::new(),
        seed: 0,
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ParseError {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        let g = &mut spec.grid;
        match key {
            "width" => width = Some(num(line, key, value)?),
            "height" => height = Some(num(line, key, value)?),
            "seed" => spec.seed = num(line, key, value)?,
            "background" => spec.background = num(line, key, value)?,
            "panel" => spec.panel = num(line, key, value)?,
            "noise_sigma" => spec.noise_sigma = num(line, key, value)?,
            "grid.origin_x" => g.origin_x = num(line, key, value)?,
            "grid.origin_y" => g.origin_y = num(line, key, value)?,
            "grid.rows" => g.rows = num(line, key, value)?,
            "grid.cols" => g.cols = num(line, key, value)?,
            "grid.cell_width" => g.cell_width = num(line, key, value)?,
            "grid.cell_height" => g.cell_height = num(line, key, value)?,
            "grid.gap" => g.gap = num(line, key, value)?,
            "hotspot" => {
                let f: Vec<&str> = value.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(ParseError {
                        line,
                        message: "hotspot needs `cx cy radius peak`".into(),
                    });
                }
                spec.hotspots.push(Hotspot {
                    cx: num(line, key, f[0])?,
                    cy: num(line, key, f[1])?,
                    radius: num(line, key, f[2])?,
                    peak: num(line, key, f[3])?,
                });
            }
            "trail" => {
                let f: Vec<&str> = value.split_whitespace().collect();
                if f.len() < 4 {
                    return Err(ParseError {
                        line,
                        message: "trail needs `thickness intensity x,y x,y ...`".into(),
                    });
                }
                let points = f[2..]
                    .iter()
                    .map(|p| {
                        let (x, y) = p.split_once(',').ok_or_else(|| ParseError {
                            line,
                            message: format!("trail point {p:?} must be `x,y`"),
                        })?;
                        Ok((num(line, key, x)?, num(line, key, y)?))
                    })
                    .collect::<Result<Vec<_>, ParseError>>()?;
                spec.trails.push(SnailTrail {
                    thickness: num(line, key, f[0])?,
                    intensity: num(line, key, f[1])?,
                    points,
                });
            }
            other => {
                return Err(ParseError {
                    line,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
    }
    let missing = |k: &str| ParseError {
        line: 0,
        message: format!("missing required key {k:?}"),
    };
    spec.width = width.ok_or_else(|| missing("width"))?;
    spec.height = height.ok_or_else(|| missing("height"))?;
    Ok(spec)
}

pub fn format(spec: &SceneSpec) -> String {
    let g = &spec.grid;
    let mut s = String::new();
    let _ = writeln!(s, "width = {}", spec.width);
    let _ = writeln!(s, "height = {}", spec.height);
    let _ = writeln!(s, "seed = {}", spec.seed);
    let _ = writeln!(s, "background = {}", spec.background);
    let _ = writeln!(s, "panel = {}", spec.panel);
    let _ = writeln!(s, "noise_sigma = {}", spec.noise_sigma);
    let _ = writeln!(s, "grid.origin_x = {}", g.origin_x);
    let _ = writeln!(s, "grid.origin_y = {}", g.origin_y);
    let _ = writeln!(s, "grid.rows = {}", g.rows);
    let _ = writeln!(s, "grid.cols = {}", g.cols);
    let _ = writeln!(s, "grid.cell_width = {}", g.cell_width);
    let _ = writeln!(s, "grid.cell_height = {}", g.cell_height);
    let _ = writeln!(s, "grid.gap = {}", g.gap);
    for h in &spec.hotspots {
        let _ = writeln!(s, "hotspot = {} {} {} {}", h.cx, h.cy, h.radius, h.peak);
    }
    for t in &spec.trails {
        let _ = write!(s, "trail = {} {}", t.thickness, t.intensity);
        for (x, y) in &t.points {
            let _ = write!(s, " {x},{y}");
        }
        s.push('\n');
    }
    s
}
