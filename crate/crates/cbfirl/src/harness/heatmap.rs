//! Barrier heatmaps: h evaluated on a position grid with frozen obstacles.

use std::io::Write;
use std::path::Path;

use crate::cbf::Barrier;
use crate::dynamics::{observe, EnvConfig, WorldState};
use crate::{Error, Result};

/// Row-major grid of barrier values over the arena. Row index `i` walks the
/// first axis, column index `j` the second; the agent sits at
/// `(coord(i), coord(j))` with zero velocity and the frozen obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub resolution: usize,
    pub arena_half_width: f64,
    pub values: Vec<f64>,
}

impl Heatmap {
    /// Grid coordinate of index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        let hw = self.arena_half_width;
        -hw + 2.0 * hw * i as f64 / (self.resolution - 1) as f64
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.resolution + j]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("resolution = {}\n", self.resolution));
        out.push_str(&format!("arena_half_width = {}\n", self.arena_half_width));
        for row in self.values.chunks(self.resolution) {
            let line: Vec<String> = row.iter().map(|v| format!("{}", v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Heatmap> {
        let mut lines = text.lines();
        let parse_kv = |line: Option<&str>, key: &str| -> Result<String> {
            let line = line.ok_or_else(|| Error::Parse(format!("missing {}", key)))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header line '{}'", line)))?;
            if k.trim() != key {
                return Err(Error::Parse(format!("expected {}, got '{}'", key, k.trim())));
            }
            Ok(v.trim().to_string())
        };
        let resolution: usize = parse_kv(lines.next(), "resolution")?
            .parse()
            .map_err(|_| Error::Parse("bad resolution".to_string()))?;
        let arena_half_width: f64 = parse_kv(lines.next(), "arena_half_width")?
            .parse()
            .map_err(|_| Error::Parse("bad arena_half_width".to_string()))?;
        let mut values = Vec::with_capacity(resolution * resolution);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split(',') {
                values.push(
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad grid value '{}'", tok)))?,
                );
            }
        }
        if values.len() != resolution * resolution {
            return Err(Error::Parse(format!(
                "grid has {} values, expected {}",
                values.len(),
                resolution * resolution
            )));
        }
        Ok(Heatmap {
            resolution,
            arena_half_width,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Heatmap> {
        Heatmap::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Evaluate the barrier on a `resolution x resolution` grid of agent
/// positions with zero velocity and the obstacles frozen as in `frozen`.
/// 2-d environments only.
pub fn heatmap(
    b: &Barrier,
    frozen: &WorldState,
    cfg: &EnvConfig,
    resolution: usize,
) -> Result<Heatmap> {
    if cfg.dim != 2 {
        return Err(Error::UnsupportedDimension(cfg.dim));
    }
    if resolution < 2 {
        return Err(Error::Config("heatmap resolution must be at least 2".to_string()));
    }
    let hw = cfg.arena_half_width;
    let coord = |i: usize| -hw + 2.0 * hw * i as f64 / (resolution - 1) as f64;
    let mut values = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let state = WorldState {
                t: 0,
                agent_pos: vec![coord(i), coord(j)],
                agent_vel: vec![0.0, 0.0],
                obstacles: frozen.obstacles.clone(),
            };
            values.push(b.value(&observe(&state, cfg)));
        }
    }
    Ok(Heatmap {
        resolution,
        arena_half_width: hw,
        values,
    })
}
