//! Plain-text map files.
//!
//! ```text
//! W H RES SEED DIFFICULTY
//! ##########
//! #S......G#
//! ##########
//! ```
//!
//! Rows are written top (largest y) first. `#` is occupied, `.` free,
//! `S` the start cell and `G` the goal cell.

use super::{Difficulty, OccupancyGrid};
use std::io::{BufRead, Write};

#[derive(Debug, thiserror::Error)]
pub enum MapFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn parse_err(line: usize, msg: impl Into<String>) -> MapFileError {
    MapFileError::Parse { line, msg: msg.into() }
}

pub fn write_map<W: Write>(grid: &OccupancyGrid, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "{} {} {} {} {}",
        grid.width,
        grid.height,
        grid.resolution(),
        grid.seed,
        grid.difficulty
    )?;
    let mut row = String::with_capacity(grid.width + 1);
    for j in (0..grid.height).rev() {
        row.clear();
        for i in 0..grid.width {
            row.push(if (i, j) == grid.start {
                'S'
            } else if (i, j) == grid.goal {
                'G'
            } else if grid.is_occupied((i, j)) {
                '#'
            } else {
                '.'
            });
        }
        row.push('\n');
        out.write_all(row.as_bytes())?;
    }
    Ok(())
}

pub fn read_map<R: BufRead>(input: R) -> Result<OccupancyGrid, MapFileError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "missing header"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(parse_err(1, "header must be `W H RES SEED DIFFICULTY`"));
    }
    let width: usize = fields[0].parse().map_err(|_| parse_err(1, "bad width"))?;
    let height: usize = fields[1].parse().map_err(|_| parse_err(1, "bad height"))?;
    let res: f64 = fields[2].parse().map_err(|_| parse_err(1, "bad resolution"))?;
    let seed: u64 = fields[3].parse().map_err(|_| parse_err(1, "bad seed"))?;
    let difficulty: Difficulty = fields[4].parse().map_err(|e: String| parse_err(1, e))?;
    if width < 3 || height < 3 || !(res > 0.0) {
        return Err(parse_err(1, "grid must be at least 3x3 with positive resolution"));
    }

    let mut cells = vec![false; width * height];
    let (mut start, mut goal) = (None, None);
    for r in 0..height {
        let line_no = r + 2;
        let line = lines.next().ok_or_else(|| parse_err(line_no, "missing row"))??;
        let line = line.trim_end_matches('\r');
        if line.chars().count() != width {
            return Err(parse_err(line_no, format!("expected {width} columns")));
        }
        let j = height - 1 - r;
        for (i, ch) in line.chars().enumerate() {
            match ch {
                '#' => cells[j * width + i] = true,
                '.' => {}
                'S' => start = Some((i, j)),
                'G' => goal = Some((i, j)),
                other => return Err(parse_err(line_no, format!("unexpected character `{other}`"))),
            }
        }
    }
    let start = start.ok_or_else(|| parse_err(0, "no start cell `S`"))?;
    let goal = goal.ok_or_else(|| parse_err(0, "no goal cell `G`"))?;
    Ok(OccupancyGrid::from_cells(width, height, res, cells, difficulty, seed, start, goal))
}
