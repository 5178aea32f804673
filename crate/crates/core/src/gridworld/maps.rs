//! Reward maps: random generators, the five human-study tile layouts, and
//! the plain-text map file format.
//!
//! Numeric files hold one row of whitespace-separated rewards per line. Tile
//! files hold one row of `W` / `B` / `R` characters per line (white = 0,
//! blue = +1 good, red = -1 bad). Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    DenseRandom,
    Sparse,
    HumanTile(HumanMap),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HumanMap {
    A,
    B,
    C,
    D,
    E,
}

impl HumanMap {
    pub const ALL: [HumanMap; 5] = [HumanMap::A, HumanMap::B, HumanMap::C, HumanMap::D, HumanMap::E];

    pub fn id(self) -> &'static str {
        match self {
            HumanMap::A => "A",
            HumanMap::B => "B",
            HumanMap::C => "C",
            HumanMap::D => "D",
            HumanMap::E => "E",
        }
    }

    pub fn from_id(id: &str) -> Option<HumanMap> {
        Self::ALL.into_iter().find(|m| m.id().eq_ignore_ascii_case(id))
    }

    pub fn tiles(self) -> [&'static str; 5] {
        match self {
            HumanMap::A => ["WWWWB", "WRRRW", "WWWWW", "WRRRW", "BWWWW"],
            HumanMap::B => ["BWWWR", "WWRWW", "WRBRW", "WWRWW", "RWWWB"],
            HumanMap::C => ["RRWBB", "RWWWB", "WWWWW", "BWWWR", "BBWRR"],
            HumanMap::D => ["WWBWW", "WRWRW", "BWRWB", "WRWRW", "WWBWW"],
            HumanMap::E => ["BBWWW", "BRRRW", "WWWRW", "WRWWW", "WWWRB"],
        }
    }

    pub fn map(self) -> MapGrid {
        let rows: Vec<&str> = self.tiles().to_vec();
        parse_tiles(&rows).expect("built-in maps are valid")
    }
}

pub const SPARSE_REWARD_GRIDS: usize = 3;

pub fn tile_value(c: char) -> Option<f64> {
    match c {
        'W' => Some(0.0),
        'B' => Some(1.0),
        'R' => Some(-1.0),
        _ => None,
    }
}

/// A rectangular reward map in physical (row-major) grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGrid {
    pub width: usize,
    pub height: usize,
    pub rewards: Vec<f64>,
}

impl MapGrid {
    pub fn is_tile_map(&self) -> bool {
        self.rewards.iter().all(|&r| r == 0.0 || r == 1.0 || r == -1.0)
    }

    pub fn to_numeric_text(&self) -> String {
        let mut out = String::new();
        for row in self.rewards.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(" ")).unwrap();
        }
        out
    }

    /// `None` unless every value is a tile value.
    pub fn to_tile_text(&self) -> Option<String> {
        let mut out = String::new();
        for row in self.rewards.chunks(self.width) {
            for &v in row {
                out.push(match v {
                    0.0 => 'W',
                    1.0 => 'B',
                    -1.0 => 'R',
                    _ => return None,
                });
            }
            out.push('\n');
        }
        Some(out)
    }
}

pub fn make_map<R: Rng + ?Sized>(kind: MapKind, width: usize, height: usize, rng: &mut R) -> Result<MapGrid> {
    if width == 0 || height == 0 {
        return Err(Error::config("map dimensions must be positive"));
    }
    let n = width * height;
    let rewards = match kind {
        MapKind::DenseRandom => (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect(),
        MapKind::Sparse => {
            if n < SPARSE_REWARD_GRIDS {
                return Err(Error::config("sparse maps need at least 3 grids"));
            }
            let mut r = vec![0.0; n];
            for i in sample(rng, n, SPARSE_REWARD_GRIDS) {
                r[i] = 1.0;
            }
            r
        }
        MapKind::HumanTile(m) => {
            if (width, height) != (5, 5) {
                return Err(Error::config("human tile maps are 5x5"));
            }
            return Ok(m.map());
        }
    };
    Ok(MapGrid { width, height, rewards })
}

fn parse_tiles(rows: &[&str]) -> Result<MapGrid> {
    let width = rows.first().map_or(0, |r| r.chars().count());
    let mut rewards = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected {width} tiles"),
            });
        }
        for c in row.chars() {
            rewards.push(tile_value(c).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("unknown tile `{c}`"),
            })?);
        }
    }
    Ok(MapGrid {
        width,
        height: rows.len(),
        rewards,
    })
}

pub fn parse_map(text: &str) -> Result<MapGrid> {
    let mut width = None;
    let mut height = 0;
    let mut rewards = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let row: Vec<f64> = if line.chars().all(|c| tile_value(c).is_some()) {
            line.chars().filter_map(tile_value).collect()
        } else {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            line: line_no,
                            message: format!("bad reward `{tok}`"),
                        })
                })
                .collect::<Result<_>>()?
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {w} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        height += 1;
        rewards.extend(row);
    }
    let width = width.ok_or(Error::Empty("map file"))?;
    Ok(MapGrid { width, height, rewards })
}

pub fn load_map(path: &Path) -> Result<MapGrid> {
    parse_map(&std::fs::read_to_string(path)?)
}
