//! Uniform grids over a domain box and cell sets on them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::interval::{Interval, IntervalBox};

/// Uniform partition of `domain` into `counts[i]` cells per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: IntervalBox,
    pub counts: Vec<usize>,
}

impl Grid {
    /// Cells no wider than `resolution` along every axis.
    pub fn new(domain: IntervalBox, resolution: f64) -> Result<Self, String> {
        if !(resolution > 0.0) {
            return Err(format!("resolution must be positive, got {resolution}"));
        }
        let mut counts = Vec::with_capacity(domain.dim());
        for (i, iv) in domain.0.iter().enumerate() {
            if !(iv.width() > 0.0) || !iv.width().is_finite() {
                return Err(format!("domain axis {} must be a finite interval of positive width", i + 1));
            }
            counts.push(((iv.width() / resolution) * (1.0 - 1e-12)).ceil().max(1.0) as usize);
        }
        let total: usize = counts.iter().product();
        if total > 50_000_000 {
            return Err(format!("grid would have {total} cells"));
        }
        Ok(Grid { domain, counts })
    }

    pub fn with_counts(domain: IntervalBox, counts: Vec<usize>) -> Self {
        Grid { domain, counts }
    }

    /// Same domain, every axis split twice as finely.
    pub fn refined(&self) -> Grid {
        Grid { domain: self.domain.clone(), counts: self.counts.iter().map(|c| 2 * c).collect() }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.domain.0[axis].width() / self.counts[axis] as f64
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.width(i)).collect()
    }

    /// Largest per-axis cell width.
    pub fn resolution(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    /// Half the diagonal of a cell.
    pub fn cell_radius(&self) -> f64 {
        0.5 * self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Coordinate of the `k`-th face along `axis`.
    pub fn face(&self, axis: usize, k: usize) -> f64 {
        let iv = self.domain.0[axis];
        if k == self.counts[axis] {
            return iv.hi;
        }
        let n = self.counts[axis] as f64;
        // weighted form keeps faces of symmetric domains exactly symmetric
        (iv.lo * (n - k as f64) + iv.hi * k as f64) / n
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&c| {
                let k = idx % c;
                idx /= c;
                k
            })
            .collect()
    }

    pub fn linear(&self, m: &[usize]) -> usize {
        let mut idx = 0;
        for (k, c) in m.iter().zip(&self.counts).rev() {
            idx = idx * c + k;
        }
        idx
    }

    pub fn cell_box(&self, idx: usize) -> IntervalBox {
        let m = self.multi_index(idx);
        IntervalBox(
            m.iter()
                .enumerate()
                .map(|(axis, &k)| Interval { lo: self.face(axis, k), hi: self.face(axis, k + 1) })
                .collect(),
        )
    }

    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        self.cell_box(idx).center()
    }

    /// Index of the cell whose half-open box `[lo, hi)` holds `x` (the last
    /// cell is closed on the right).
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut m = Vec::with_capacity(self.dim());
        for (axis, &v) in x.iter().enumerate() {
            let iv = self.domain.0[axis];
            if !(iv.lo <= v && v <= iv.hi) {
                return None;
            }
            let mut k = (((v - iv.lo) / iv.width()) * self.counts[axis] as f64).floor() as usize;
            k = k.min(self.counts[axis] - 1);
            // correct for rounding against the exact face coordinates
            while k > 0 && v < self.face(axis, k) {
                k -= 1;
            }
            while k + 1 < self.counts[axis] && v >= self.face(axis, k + 1) {
                k += 1;
            }
            m.push(k);
        }
        Some(self.linear(&m))
    }

    /// Every cell whose closed box contains `x`, padded by `tol` along each axis.
    pub fn cells_touching(&self, x: &[f64], tol: f64) -> Vec<usize> {
        let b = IntervalBox(x.iter().map(|&v| Interval { lo: v - tol, hi: v + tol }).collect());
        self.cells_meeting(&b).0
    }

    /// Per-axis inclusive index ranges of cells whose closed box meets `b`,
    /// plus whether `b` reaches outside the domain.
    pub fn index_ranges(&self, b: &IntervalBox) -> (Option<Vec<(usize, usize)>>, bool) {
        let mut out = Vec::with_capacity(self.dim());
        let mut outside = false;
        for (axis, iv) in b.0.iter().enumerate() {
            let d = self.domain.0[axis];
            if iv.lo < d.lo || iv.hi > d.hi {
                outside = true;
            }
            let lo = iv.lo.max(d.lo);
            let hi = iv.hi.min(d.hi);
            if lo > hi {
                return (None, true);
            }
            let n = self.counts[axis];
            let scale = n as f64 / d.width();
            let mut k0 = (((lo - d.lo) * scale).floor() as usize).min(n - 1);
            while k0 > 0 && self.face(axis, k0) >= lo {
                k0 -= 1;
            }
            while k0 + 1 < n && self.face(axis, k0 + 1) < lo {
                k0 += 1;
            }
            let mut k1 = (((hi - d.lo) * scale).floor() as usize).min(n - 1);
            while k1 + 1 < n && self.face(axis, k1 + 1) <= hi {
                k1 += 1;
            }
            while k1 > k0 && self.face(axis, k1) > hi {
                k1 -= 1;
            }
            out.push((k0, k1));
        }
        (Some(out), outside)
    }

    /// Cells whose closed box meets `b`, and whether `b` leaves the domain.
    pub fn cells_meeting(&self, b: &IntervalBox) -> (Vec<usize>, bool) {
        let (ranges, outside) = self.index_ranges(b);
        let Some(ranges) = ranges else { return (vec![], outside) };
        (self.enumerate_ranges(&ranges), outside)
    }

    pub fn enumerate_ranges(&self, ranges: &[(usize, usize)]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut m: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(self.linear(&m));
            let mut axis = 0;
            loop {
                if axis == m.len() {
                    return out;
                }
                if m[axis] < ranges[axis].1 {
                    m[axis] += 1;
                    break;
                }
                m[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }

    /// The `3^n - 1` offsets of neighbouring cells.
    pub fn offsets(&self) -> Vec<Vec<i64>> {
        let n = self.dim();
        let mut out = Vec::new();
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let o: Vec<i64> = (0..n)
                .map(|_| {
                    let v = (c % 3) as i64 - 1;
                    c /= 3;
                    v
                })
                .collect();
            if o.iter().any(|&v| v != 0) {
                out.push(o);
            }
        }
        out
    }

    /// Neighbour at `offset`, or `None` if it falls off the grid.
    pub fn neighbor(&self, idx: usize, offset: &[i64]) -> Option<usize> {
        let m = self.multi_index(idx);
        let mut out = Vec::with_capacity(m.len());
        for ((&k, &o), &c) in m.iter().zip(offset).zip(&self.counts) {
            let j = k as i64 + o;
            if j < 0 || j >= c as i64 {
                return None;
            }
            out.push(j as usize);
        }
        Some(self.linear(&out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Out,
    In,
    /// Member cell with at least one non-member neighbour.
    Boundary,
}

/// Whether a [`GridSet`] covers (`Over`) or is covered by (`Under`) the set it approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Over,
    Under,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSet {
    pub grid: Grid,
    pub flag: Flag,
    member: Vec<bool>,
    /// The computation wanted to leave the domain box.
    pub escaped: bool,
    /// Disturbance bound the set was computed for.
    pub delta: f64,
}

impl GridSet {
    pub fn empty(grid: Grid, flag: Flag, delta: f64) -> Self {
        let n = grid.len();
        GridSet { grid, flag, member: vec![false; n], escaped: false, delta }
    }

    pub fn from_members(grid: Grid, flag: Flag, delta: f64, members: impl IntoIterator<Item = usize>) -> Self {
        let mut s = GridSet::empty(grid, flag, delta);
        for i in members {
            s.member[i] = true;
        }
        s
    }

    /// Member cells of the grid whose closed box meets `b`.
    pub fn from_box(grid: Grid, flag: Flag, b: &IntervalBox) -> Self {
        let (cells, _) = grid.cells_meeting(b);
        GridSet::from_members(grid, flag, 0.0, cells)
    }

    pub fn insert(&mut self, idx: usize) -> bool {
        !std::mem::replace(&mut self.member[idx], true)
    }

    pub fn contains_cell(&self, idx: usize) -> bool {
        self.member[idx]
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.member.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|&m| m)
    }

    /// Total volume of the member cells.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.widths().iter().product::<f64>()
    }

    pub fn cell(&self, idx: usize) -> Cell {
        if !self.member[idx] {
            return Cell::Out;
        }
        let boundary = self
            .grid
            .offsets()
            .iter()
            .any(|o| self.grid.neighbor(idx, o).map_or(true, |j| !self.member[j]));
        if boundary {
            Cell::Boundary
        } else {
            Cell::In
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        (0..self.grid.len()).map(|i| self.cell(i)).collect()
    }

    pub fn boundary_cells(&self) -> Vec<usize> {
        self.members().filter(|&i| self.cell(i) == Cell::Boundary).collect()
    }

    /// Whether `x` lies in the closed union of member cells, up to `tol`.
    pub fn contains_point(&self, x: &[f64], tol: f64) -> bool {
        self.grid.cells_touching(x, tol).into_iter().any(|i| self.member[i])
    }

    /// Bounding box of the member cells.
    pub fn hull(&self) -> Option<IntervalBox> {
        let mut acc: Option<IntervalBox> = None;
        for i in self.members() {
            let b = self.grid.cell_box(i);
            acc = Some(match acc {
                None => b,
                Some(a) => IntervalBox(
                    a.0.iter().zip(&b.0).map(|(x, y)| Interval { lo: x.lo.min(y.lo), hi: x.hi.max(y.hi) }).collect(),
                ),
            });
        }
        acc
    }

    /// Member cells plus every cell adjacent to one.
    pub fn dilated(&self) -> GridSet {
        let mut out = self.clone();
        let offsets = self.grid.offsets();
        for i in self.members() {
            for o in &offsets {
                if let Some(j) = self.grid.neighbor(i, o) {
                    out.member[j] = true;
                }
            }
        }
        out
    }

    pub fn is_subset_of(&self, other: &GridSet) -> bool {
        self.grid == other.grid && self.member.iter().zip(&other.member).all(|(&a, &b)| !a || b)
    }

    /// JSON header plus run-length-encoded labels (`O`, `I`, `B`).
    pub fn to_json(&self) -> serde_json::Value {
        let mut rle = String::new();
        let cells = self.cells();
        let mut k = 0;
        while k < cells.len() {
            let c = cells[k];
            let mut run = 1;
            while k + run < cells.len() && cells[k + run] == c {
                run += 1;
            }
            let ch = match c {
                Cell::Out => 'O',
                Cell::In => 'I',
                Cell::Boundary => 'B',
            };
            let _ = write!(rle, "{run}{ch}");
            k += run;
        }
        serde_json::json!({
            "domain": self.grid.domain,
            "counts": self.grid.counts,
            "resolution": self.grid.widths(),
            "flag": self.flag,
            "delta": self.delta,
            "escaped": self.escaped,
            "cells": rle,
        })
    }

    /// Centers of member cells with their labels.
    pub fn to_csv(&self) -> String {
        let n = self.grid.dim();
        let mut out = String::new();
        let mut cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        cols.push("label".into());
        let _ = writeln!(out, "{}", cols.join(","));
        for i in self.members() {
            let label = if self.cell(i) == Cell::Boundary { "boundary" } else { "in" };
            let c: Vec<String> = self.grid.cell_center(i).iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{},{label}", c.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Grid {
        Grid::new(IntervalBox::from_bounds(&[[-1.0, 1.0]]).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn counts_and_faces() {
        let g = line();
        assert_eq!(g.counts, vec![20]);
        assert_eq!(g.face(0, 0), -1.0);
        assert_eq!(g.face(0, 20), 1.0);
        assert_eq!(g.locate(&[1.0]), Some(19));
        assert_eq!(g.locate(&[-1.0]), Some(0));
        assert_eq!(g.locate(&[1.5]), None);
    }

    #[test]
    fn index_round_trip_2d() {
        let g = Grid::new(IntervalBox::from_bounds(&[[0.0, 1.0], [0.0, 2.0]]).unwrap(), 0.25).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.linear(&g.multi_index(i)), i);
            assert_eq!(g.locate(&g.cell_center(i)), Some(i));
        }
        assert_eq!(g.offsets().len(), 8);
    }

    #[test]
    fn closed_meeting_includes_touching_cells() {
        let g = line();
        let b = IntervalBox::from_bounds(&[[-0.1, 0.1]]).unwrap();
        let (cells, outside) = g.cells_meeting(&b);
        assert!(!outside);
        // [-0.2,-0.1], [-0.1,0], [0,0.1], [0.1,0.2]
        assert_eq!(cells.len(), 4);
    }

    #[test]
    fn boundary_labels_and_rle() {
        let g = line();
        let s = GridSet::from_members(g, Flag::Over, 0.0, 8..12);
        let labels = s.cells();
        assert_eq!(labels[8], Cell::Boundary);
        assert_eq!(labels[9], Cell::In);
        assert_eq!(labels[12], Cell::Out);
        assert_eq!(s.to_json()["cells"], "8O1B2I1B8O");
        let h = s.hull().unwrap();
        assert!((h.0[0].lo + 0.2).abs() < 1e-12 && (h.0[0].hi - 0.2).abs() < 1e-12);
        assert_eq!(s.dilated().count(), 6);
    }
}
