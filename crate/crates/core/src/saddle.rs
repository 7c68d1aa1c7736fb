//! Saddles of the bilinear surface: split points strictly inside a cell and
//! mix points at interior lattice corners. No saddle can sit on an open pixel
//! side, so these two species are exhaustive.

use rayon::prelude::*;
use serde::Serialize;

use crate::raster::{ContinuousPoint, Dir, Image, LatticePoint};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitPixel {
    /// Lower-left corner of the cell.
    pub cell: LatticePoint,
    pub split_point: ContinuousPoint,
    pub split_value: f64,
    /// Set when ties place the critical point on the cell boundary.
    pub degenerate: bool,
}

impl SplitPixel {
    /// Offsets of the split point inside its cell.
    pub fn offsets(&self) -> (f64, f64) {
        (self.split_point.x - self.cell.i as f64, self.split_point.y - self.cell.j as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixPoint {
    pub corner: LatticePoint,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SaddleSet {
    pub splits: Vec<SplitPixel>,
    pub mixes: Vec<MixPoint>,
    cells_x: usize,
    width: usize,
    split_of_cell: Vec<u32>,
    mix_of_vertex: Vec<u32>,
}

impl SaddleSet {
    /// An index with no saddles, for an image of the given size.
    pub fn empty(img: &Image) -> Self {
        SaddleSet {
            splits: Vec::new(),
            mixes: Vec::new(),
            cells_x: img.cells_x(),
            width: img.width(),
            split_of_cell: vec![NONE; img.cell_count()],
            mix_of_vertex: vec![NONE; img.len()],
        }
    }

    fn from_parts(img: &Image, splits: Vec<SplitPixel>, mixes: Vec<MixPoint>) -> Self {
        let mut set = SaddleSet::empty(img);
        for (k, s) in splits.iter().enumerate() {
            set.split_of_cell[s.cell.j * set.cells_x + s.cell.i] = k as u32;
        }
        for (k, m) in mixes.iter().enumerate() {
            set.mix_of_vertex[m.corner.j * set.width + m.corner.i] = k as u32;
        }
        set.splits = splits;
        set.mixes = mixes;
        set
    }

    #[inline]
    pub fn is_split_cell(&self, cell_idx: usize) -> bool {
        self.split_of_cell[cell_idx] != NONE
    }

    #[inline]
    pub fn split_of_cell_idx(&self, cell_idx: usize) -> Option<&SplitPixel> {
        match self.split_of_cell[cell_idx] {
            NONE => None,
            k => Some(&self.splits[k as usize]),
        }
    }

    /// Position of the cell's split in `splits`.
    pub fn split_index(&self, cell: LatticePoint) -> Option<usize> {
        let k = cell.j * self.cells_x + cell.i;
        match self.split_of_cell.get(k) {
            Some(&m) if m != NONE && cell.i < self.cells_x => Some(m as usize),
            _ => None,
        }
    }

    pub fn split_at(&self, cell: LatticePoint) -> Option<&SplitPixel> {
        if cell.i >= self.cells_x || cell.j * self.cells_x + cell.i >= self.split_of_cell.len() {
            return None;
        }
        self.split_of_cell_idx(cell.j * self.cells_x + cell.i)
    }

    #[inline]
    pub fn is_mix_vertex(&self, idx: usize) -> bool {
        self.mix_of_vertex[idx] != NONE
    }

    pub fn mix_at(&self, corner: LatticePoint) -> Option<&MixPoint> {
        let k = corner.j * self.width + corner.i;
        match self.mix_of_vertex.get(k) {
            Some(&m) if m != NONE && corner.i < self.width => Some(&self.mixes[m as usize]),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.splits.len() + self.mixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Split point of a cell, if `∇R` vanishes strictly inside it.
///
/// For distinct corner values this is the classic sign pattern: `a` and `d`
/// both above or both below `b` and `c`. The pattern is evaluated with `≺`, so
/// ties resolve the same way as everywhere else; a tied cell flagged this way
/// has its critical point on the cell boundary and is marked degenerate.
///
/// With `v11 = d + a - b - c`, the critical point sits at offsets
/// `((a - c) / v11, (a - b) / v11)`.
pub fn detect_split(img: &Image, cell: LatticePoint) -> Option<SplitPixel> {
    let k = img.index(cell);
    let (ia, ib, ic, id) = (k, k + 1, k + img.width(), k + img.width() + 1);
    let lt = |p: usize, q: usize| img.lower(p, q);
    let high_diag = lt(ib, ia) && lt(ic, ia) && lt(ib, id) && lt(ic, id);
    let low_diag = lt(ia, ib) && lt(ia, ic) && lt(id, ib) && lt(id, ic);
    if !high_diag && !low_diag {
        return None;
    }
    let [a, b, c, d] = img.corners(cell);
    let v11 = d + a - b - c;
    let x = ((a - c) / v11).clamp(0.0, 1.0);
    let y = ((a - b) / v11).clamp(0.0, 1.0);
    let coef = img.coefficients(cell);
    Some(SplitPixel {
        cell,
        split_point: ContinuousPoint::new(cell.i as f64 + x, cell.j as f64 + y),
        split_value: coef.eval(x, y),
        degenerate: !(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0),
    })
}

/// Mix point test at an interior lattice corner.
///
/// Each n4 difference is reduced to a sign through `≺`, so equal neighbours
/// behave as if an infinitesimal slope separated them. The corner is a mix
/// point when north/south agree, east/west agree, and the two pairs disagree.
pub fn detect_mix(img: &Image, corner: LatticePoint) -> Option<MixPoint> {
    if corner.i == 0 || corner.j == 0 || corner.i + 1 >= img.width() || corner.j + 1 >= img.height() {
        return None;
    }
    let p = img.index(corner);
    let above = |d: Dir| img.lower(p, img.step(p, d).expect("interior corner"));
    let (n, s, e, w) = (above(Dir::N), above(Dir::S), above(Dir::E), above(Dir::W));
    (n == s && e == w && n != e).then(|| MixPoint { corner, value: img.get(corner) })
}

/// Full saddle scan in row-major order.
pub fn enumerate_saddles(img: &Image) -> SaddleSet {
    let (cx, cy) = (img.cells_x(), img.cells_y());
    let splits: Vec<SplitPixel> = (0..cy)
        .into_par_iter()
        .flat_map_iter(|j| (0..cx).filter_map(move |i| detect_split(img, LatticePoint::new(i, j))))
        .collect();
    let mixes: Vec<MixPoint> = (1..img.height().saturating_sub(1))
        .into_par_iter()
        .flat_map_iter(|j| (1..img.width() - 1).filter_map(move |i| detect_mix(img, LatticePoint::new(i, j))))
        .collect();
    SaddleSet::from_parts(img, splits, mixes)
}
