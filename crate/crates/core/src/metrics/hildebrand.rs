//! Stance/swing grids over the gait cycle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::gait::{footfall_reference, GaitSchedule};
use crate::model::N_LEGS;
use crate::sim::SimLog;

pub const MIN_BINS: usize = 8;

/// Mean contact per (leg, phase bin) next to the commanded pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HildebrandGrid {
    /// `measured[leg][bin]` in [0, 1]; legs ordered fl, fr, rl, rr.
    pub measured: Vec<Vec<f64>>,
    pub reference: Vec<Vec<bool>>,
    /// Complete cycles averaged.
    pub cycles: usize,
}

impl HildebrandGrid {
    pub fn n_bins(&self) -> usize {
        self.measured.first().map_or(0, Vec::len)
    }

    /// Binary greyscale image, one `cell`×`cell` block per grid cell. Black
    /// is stance. The reference grid sits below the measured one, separated
    /// by a white row of cells.
    pub fn to_pgm(&self, cell: usize) -> Vec<u8> {
        let rows = self.image_rows();
        let w = self.n_bins() * cell;
        let h = rows.len() * cell;
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for row in &rows {
            let line: Vec<u8> = row.iter().flat_map(|&v| std::iter::repeat_n(grey(v), cell)).collect();
            for _ in 0..cell {
                out.extend_from_slice(&line);
            }
        }
        out
    }

    /// Same layout as [`HildebrandGrid::to_pgm`] as an SVG document.
    pub fn to_svg(&self, cell: usize) -> String {
        let rows = self.image_rows();
        let w = self.n_bins() * cell;
        let h = rows.len() * cell;
        let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let g = grey(v);
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({g},{g},{g})\"/>",
                    c * cell,
                    r * cell
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }

    fn image_rows(&self) -> Vec<Vec<f64>> {
        let n = self.n_bins();
        let mut rows = self.measured.clone();
        rows.push(vec![0.0; n]);
        rows.extend(self.reference.iter().map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()));
        rows
    }
}

fn grey(v: f64) -> u8 {
    (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8
}

/// Averages the logged contact flags per leg and phase bin over every
/// complete gait cycle. Cycles are delimited by wraps of the logged phase;
/// partial cycles at either end are dropped.
pub fn hildebrand(log: &SimLog, n_bins: usize, schedule: &GaitSchedule) -> Result<HildebrandGrid, MetricsError> {
    if n_bins < MIN_BINS {
        return Err(MetricsError::TooFewBins(n_bins));
    }
    let recs = &log.records;
    let wraps: Vec<usize> = (1..recs.len()).filter(|&k| recs[k].phi < recs[k - 1].phi).collect();
    let cycles = wraps.len().saturating_sub(1);
    if cycles < 2 {
        return Err(MetricsError::TooShort { cycles });
    }
    let mut hits = vec![vec![0usize; n_bins]; N_LEGS];
    let mut count = vec![0usize; n_bins];
    for r in &recs[wraps[0]..wraps[cycles]] {
        let b = ((r.phi * n_bins as f64) as usize).min(n_bins - 1);
        count[b] += 1;
        for (leg, row) in hits.iter_mut().enumerate() {
            row[b] += usize::from(r.contact[leg]);
        }
    }
    if let Some(b) = count.iter().position(|&c| c == 0) {
        return Err(MetricsError::EmptyBin(b));
    }
    let measured = hits.iter().map(|row| row.iter().zip(&count).map(|(&h, &c)| h as f64 / c as f64).collect()).collect();
    Ok(HildebrandGrid { measured, reference: footfall_reference(schedule, n_bins)?, cycles })
}

/// Mean absolute difference between a measured grid and a reference.
pub fn footfall_consistency(grid: &[Vec<f64>], reference: &[Vec<bool>]) -> Result<f64, MetricsError> {
    if grid.len() != reference.len() || grid.iter().zip(reference).any(|(g, r)| g.len() != r.len()) {
        return Err(MetricsError::ShapeMismatch(format!(
            "{}×{} vs {}×{}",
            grid.len(),
            grid.first().map_or(0, Vec::len),
            reference.len(),
            reference.first().map_or(0, Vec::len)
        )));
    }
    let cells: usize = grid.iter().map(Vec::len).sum();
    if cells == 0 {
        return Ok(0.0);
    }
    let total: f64 = grid
        .iter()
        .zip(reference)
        .flat_map(|(g, r)| g.iter().zip(r).map(|(&v, &b)| (v - if b { 1.0 } else { 0.0 }).abs()))
        .sum();
    Ok(total / cells as f64)
}
