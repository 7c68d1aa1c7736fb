//! Image storage, the bilinear surface `R`, its gradient, and the strict
//! neighbour order used everywhere instead of raw `<`.
//!
//! Lattice point `(i, j)` is column `i`, row `j`. Pixel (cell) `(i, j)` is the
//! unit square with lower-left corner `(i, j)`, so an `n x m` image has
//! `(n - 1) x (m - 1)` cells and the continuous domain is `[0, n-1] x [0, m-1]`.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::saddle::SaddleSet;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("image must be at least 2x2, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("point ({x}, {y}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies on a pixel boundary; a cell must be given")]
    AmbiguousCell { x: f64, y: f64 },
    #[error("cell ({i}, {j}) does not contain the point")]
    WrongCell { i: usize, j: usize },
    #[error("lattice points {0:?} and {1:?} are not neighbours of a common point")]
    NotAdjacent(LatticePoint, LatticePoint),
}

/// Serialized as `[i, j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(into = "[usize; 2]")]
pub struct LatticePoint {
    pub i: usize,
    pub j: usize,
}

impl LatticePoint {
    pub const fn new(i: usize, j: usize) -> Self {
        LatticePoint { i, j }
    }

    pub fn to_continuous(self) -> ContinuousPoint {
        ContinuousPoint::new(self.i as f64, self.j as f64)
    }

    /// Chebyshev distance.
    pub fn chebyshev(self, other: LatticePoint) -> usize {
        self.i.abs_diff(other.i).max(self.j.abs_diff(other.j))
    }
}

/// Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[f64; 2]")]
pub struct ContinuousPoint {
    pub x: f64,
    pub y: f64,
}

impl ContinuousPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        ContinuousPoint { x, y }
    }

    pub fn lerp(self, other: ContinuousPoint, t: f64) -> ContinuousPoint {
        ContinuousPoint::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    pub fn dist(self, other: ContinuousPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<LatticePoint> for [usize; 2] {
    fn from(p: LatticePoint) -> Self {
        [p.i, p.j]
    }
}

impl From<ContinuousPoint> for [f64; 2] {
    fn from(p: ContinuousPoint) -> Self {
        [p.x, p.y]
    }
}

/// The eight lattice directions in counter-clockwise order starting east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    E = 0,
    NE = 1,
    N = 2,
    NW = 3,
    W = 4,
    SW = 5,
    S = 6,
    SE = 7,
}

impl Dir {
    pub const ALL: [Dir; 8] = [Dir::E, Dir::NE, Dir::N, Dir::NW, Dir::W, Dir::SW, Dir::S, Dir::SE];

    pub fn from_index(k: usize) -> Dir {
        Dir::ALL[k & 7]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn offset(self) -> (isize, isize) {
        OFFSETS[self as usize]
    }

    pub fn opposite(self) -> Dir {
        Dir::from_index(self as usize + 4)
    }

    pub fn is_diagonal(self) -> bool {
        (self as usize) & 1 == 1
    }

    pub fn length(self) -> f64 {
        if self.is_diagonal() {
            std::f64::consts::SQRT_2
        } else {
            1.0
        }
    }

    pub fn from_offset(di: isize, dj: isize) -> Option<Dir> {
        OFFSETS.iter().position(|&o| o == (di, dj)).map(Dir::from_index)
    }
}

pub const OFFSETS: [(isize, isize); 8] =
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Bilinear coefficients of one cell: `R(z, w) = v00 + v10 z + v01 w + v11 z w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoefficients {
    pub v00: f64,
    pub v10: f64,
    pub v01: f64,
    pub v11: f64,
}

impl PixelCoefficients {
    /// `a = I(i,j)`, `b = I(i+1,j)`, `c = I(i,j+1)`, `d = I(i+1,j+1)`.
    pub fn from_corners(a: f64, b: f64, c: f64, d: f64) -> Self {
        PixelCoefficients { v00: a, v10: b - a, v01: c - a, v11: d + a - b - c }
    }

    pub fn eval(&self, z: f64, w: f64) -> f64 {
        self.v00 + self.v10 * z + self.v01 * w + self.v11 * z * w
    }

    pub fn grad(&self, z: f64, w: f64) -> [f64; 2] {
        [self.v10 + self.v11 * w, self.v01 + self.v11 * z]
    }
}

/// A single-channel raster widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Image {
    /// `values` is row-major: `values[j * width + i]`.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, RasterError> {
        if width < 2 || height < 2 {
            return Err(RasterError::TooSmall { width, height });
        }
        if values.len() != width * height {
            return Err(RasterError::LengthMismatch { expected: width * height, actual: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { i: k % width, j: k / width });
        }
        Ok(Image { width, height, values })
    }

    /// Builds an image from rows listed bottom (`j = 0`) first.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, RasterError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(width * height);
        for r in rows {
            if r.len() != width {
                return Err(RasterError::LengthMismatch { expected: width, actual: r.len() });
            }
            values.extend_from_slice(r);
        }
        Image::new(width, height, values)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, RasterError> {
        let mut values = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                values.push(f(i, j));
            }
        }
        Image::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells_x(&self) -> usize {
        self.width - 1
    }

    pub fn cells_y(&self) -> usize {
        self.height - 1
    }

    pub fn cell_count(&self) -> usize {
        (self.width - 1) * (self.height - 1)
    }

    #[inline]
    pub fn index(&self, p: LatticePoint) -> usize {
        p.j * self.width + p.i
    }

    #[inline]
    pub fn point(&self, idx: usize) -> LatticePoint {
        LatticePoint::new(idx % self.width, idx / self.width)
    }

    #[inline]
    pub fn get(&self, p: LatticePoint) -> f64 {
        self.values[p.j * self.width + p.i]
    }

    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn contains(&self, p: LatticePoint) -> bool {
        p.i < self.width && p.j < self.height
    }

    /// Neighbour of the vertex at `idx` in direction `d`, if in bounds.
    #[inline]
    pub fn step(&self, idx: usize, d: Dir) -> Option<usize> {
        let (di, dj) = OFFSETS[d as usize];
        let i = (idx % self.width) as isize + di;
        let j = (idx / self.width) as isize + dj;
        if i < 0 || j < 0 || i >= self.width as isize || j >= self.height as isize {
            None
        } else {
            Some(j as usize * self.width + i as usize)
        }
    }

    pub fn coefficients(&self, cell: LatticePoint) -> PixelCoefficients {
        let [a, b, c, d] = self.corners(cell);
        PixelCoefficients::from_corners(a, b, c, d)
    }

    /// Corner values `[a, b, c, d]` of a cell.
    pub fn corners(&self, cell: LatticePoint) -> [f64; 4] {
        let k = cell.j * self.width + cell.i;
        [self.values[k], self.values[k + 1], self.values[k + self.width], self.values[k + self.width + 1]]
    }

    /// Total order that agrees with [`precedes`] on every neighbourhood.
    ///
    /// Equal values are split by the key `2i + 3j`; since that key is linear,
    /// comparing absolute keys is the same as comparing offsets from a common
    /// centre. Remaining ties (only possible between far-apart points) fall to
    /// `(j, i)`.
    #[inline]
    pub fn cmp_idx(&self, a: usize, b: usize) -> Ordering {
        match self.values[a].partial_cmp(&self.values[b]).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {
                let (ai, aj) = (a % self.width, a / self.width);
                let (bi, bj) = (b % self.width, b / self.width);
                (2 * ai + 3 * aj).cmp(&(2 * bi + 3 * bj)).then(a.cmp(&b))
            }
            o => o,
        }
    }

    #[inline]
    pub fn lower(&self, a: usize, b: usize) -> bool {
        self.cmp_idx(a, b) == Ordering::Less
    }

    pub fn cmp_points(&self, a: LatticePoint, b: LatticePoint) -> Ordering {
        self.cmp_idx(self.index(a), self.index(b))
    }

    fn check_domain(&self, p: ContinuousPoint) -> Result<(), RasterError> {
        let (xmax, ymax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(p.x >= 0.0 && p.x <= xmax && p.y >= 0.0 && p.y <= ymax) {
            return Err(RasterError::OutOfDomain { x: p.x, y: p.y });
        }
        Ok(())
    }

    /// The cell used to evaluate `p`: the one whose lower-left corner is
    /// `floor(p)`, clamped at the far edges.
    pub fn cell_of(&self, p: ContinuousPoint) -> LatticePoint {
        let i = (p.x.floor().max(0.0) as usize).min(self.width - 2);
        let j = (p.y.floor().max(0.0) as usize).min(self.height - 2);
        LatticePoint::new(i, j)
    }

    pub fn eval_in_cell(&self, cell: LatticePoint, p: ContinuousPoint) -> f64 {
        self.coefficients(cell).eval(p.x - cell.i as f64, p.y - cell.j as f64)
    }
}

/// Bilinear surface value at `p`.
pub fn eval_r(img: &Image, p: ContinuousPoint) -> Result<f64, RasterError> {
    img.check_domain(p)?;
    Ok(img.eval_in_cell(img.cell_of(p), p))
}

/// Per-cell gradient of `R`. Points on a pixel side or corner need `cell`.
pub fn grad_r(img: &Image, p: ContinuousPoint, cell: Option<LatticePoint>) -> Result<[f64; 2], RasterError> {
    img.check_domain(p)?;
    let cell = match cell {
        Some(c) => {
            let inside = c.i + 1 < img.width
                && c.j + 1 < img.height
                && p.x >= c.i as f64
                && p.x <= c.i as f64 + 1.0
                && p.y >= c.j as f64
                && p.y <= c.j as f64 + 1.0;
            if !inside {
                return Err(RasterError::WrongCell { i: c.i, j: c.j });
            }
            c
        }
        None => {
            if p.x.fract() == 0.0 || p.y.fract() == 0.0 {
                return Err(RasterError::AmbiguousCell { x: p.x, y: p.y });
            }
            img.cell_of(p)
        }
    };
    Ok(img.coefficients(cell).grad(p.x - cell.i as f64, p.y - cell.j as f64))
}

/// Strict neighbour order `p1 ≺ p2`.
///
/// Both points must be n8-neighbours of some common point (Chebyshev distance
/// at most 2), which is the only setting where the tie-break is defined.
pub fn precedes(img: &Image, p1: LatticePoint, p2: LatticePoint) -> Result<bool, RasterError> {
    if p1 == p2 || p1.chebyshev(p2) > 2 || !img.contains(p1) || !img.contains(p2) {
        return Err(RasterError::NotAdjacent(p1, p2));
    }
    let (v1, v2) = (img.get(p1), img.get(p2));
    if v1 != v2 {
        return Ok(v1 < v2);
    }
    Ok(2 * p1.i + 3 * p1.j < 2 * p2.i + 3 * p2.j)
}

/// Cell crossed by the diagonal leaving `idx` in direction `d`.
#[inline]
pub(crate) fn diagonal_cell(img: &Image, idx: usize, d: Dir) -> usize {
    let w = img.width();
    let (i, j) = (idx % w, idx / w);
    let ci = w - 1;
    match d {
        Dir::NE => j * ci + i,
        Dir::NW => j * ci + i - 1,
        Dir::SW => (j - 1) * ci + i - 1,
        Dir::SE => (j - 1) * ci + i,
        _ => unreachable!("not a diagonal"),
    }
}

/// Bitmask (bit `d`) of the admissible neighbour directions `n(p)`: n8 clipped
/// to the image, minus diagonals over split pixels.
#[inline]
pub fn neighbor_mask(img: &Image, idx: usize, saddles: &SaddleSet) -> u8 {
    let w = img.width();
    let h = img.height();
    let (i, j) = (idx % w, idx / w);
    let (e, wst, n, s) = (i + 1 < w, i > 0, j + 1 < h, j > 0);
    let mut mask = 0u8;
    if e {
        mask |= 1 << Dir::E as u8;
    }
    if n {
        mask |= 1 << Dir::N as u8;
    }
    if wst {
        mask |= 1 << Dir::W as u8;
    }
    if s {
        mask |= 1 << Dir::S as u8;
    }
    let ci = w - 1;
    if e && n && !saddles.is_split_cell(j * ci + i) {
        mask |= 1 << Dir::NE as u8;
    }
    if wst && n && !saddles.is_split_cell(j * ci + i - 1) {
        mask |= 1 << Dir::NW as u8;
    }
    if wst && s && !saddles.is_split_cell((j - 1) * ci + i - 1) {
        mask |= 1 << Dir::SW as u8;
    }
    if e && s && !saddles.is_split_cell((j - 1) * ci + i) {
        mask |= 1 << Dir::SE as u8;
    }
    mask
}

/// The admissible neighbourhood `n(p)` as points, in direction order.
pub fn neighborhood(img: &Image, p: LatticePoint, saddles: &SaddleSet) -> Vec<LatticePoint> {
    let idx = img.index(p);
    let mask = neighbor_mask(img, idx, saddles);
    Dir::ALL
        .iter()
        .filter(|d| mask & (1 << **d as u8) != 0)
        .map(|&d| img.point(img.step(idx, d).expect("mask is clipped to bounds")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::enumerate_saddles;

    fn cell(a: f64, b: f64, c: f64, d: f64) -> Image {
        Image::from_rows(&[&[a, b], &[c, d]]).unwrap()
    }

    /// Separable form `(1-z)(1-w)a + z(1-w)b + (1-z)w c + z w d`.
    fn separable(a: f64, b: f64, c: f64, d: f64, z: f64, w: f64) -> f64 {
        (1.0 - z) * (1.0 - w) * a + z * (1.0 - w) * b + (1.0 - z) * w * c + z * w * d
    }

    #[test]
    fn planar_cell_center_is_corner_mean() {
        let img = cell(0.0, 1.0, 2.0, 3.0);
        assert_eq!(eval_r(&img, ContinuousPoint::new(0.5, 0.5)).unwrap(), 1.5);
    }

    #[test]
    fn quarter_point_matches_separable_oracle() {
        let img = cell(3.0, 0.0, 1.0, 2.0);
        let v = eval_r(&img, ContinuousPoint::new(0.25, 0.5)).unwrap();
        assert!((separable(3.0, 0.0, 1.0, 2.0, 0.25, 0.5) - 1.75).abs() < 1e-15);
        assert!((v - 1.75).abs() < 1e-15);
    }

    #[test]
    fn corners_are_reproduced() {
        let img = Image::from_fn(4, 3, |i, j| (i * 7 + j * 3) as f64 * 0.37).unwrap();
        for j in 0..3 {
            for i in 0..4 {
                let p = LatticePoint::new(i, j);
                assert_eq!(eval_r(&img, p.to_continuous()).unwrap(), img.get(p));
            }
        }
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let img = cell(0.0, 1.0, 2.0, 3.0);
        assert!(matches!(eval_r(&img, ContinuousPoint::new(1.5, 0.5)), Err(RasterError::OutOfDomain { .. })));
        assert!(eval_r(&img, ContinuousPoint::new(-0.1, 0.5)).is_err());
    }

    #[test]
    fn gradient_examples() {
        let img = cell(0.0, 1.0, 2.0, 3.0);
        assert_eq!(grad_r(&img, ContinuousPoint::new(0.3, 0.6), None).unwrap(), [1.0, 2.0]);
        let img = cell(3.0, 0.0, 1.0, 2.0);
        let g = grad_r(&img, ContinuousPoint::new(0.25, 0.5), None).unwrap();
        assert_eq!(g, [-1.0, -1.0]);
        // Central differences of the separable oracle.
        let h = 1e-6;
        let f = |z, w| separable(3.0, 0.0, 1.0, 2.0, z, w);
        let fd = [(f(0.25 + h, 0.5) - f(0.25 - h, 0.5)) / (2.0 * h), (f(0.25, 0.5 + h) - f(0.25, 0.5 - h)) / (2.0 * h)];
        assert!((fd[0] - g[0]).abs() < 1e-6 && (fd[1] - g[1]).abs() < 1e-6);
        assert_eq!(grad_r(&img, ContinuousPoint::new(0.5, 0.75), None).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn gradient_on_boundary_needs_cell() {
        let img = Image::from_fn(3, 3, |i, j| (i + 2 * j) as f64).unwrap();
        let p = ContinuousPoint::new(1.0, 0.5);
        assert!(matches!(grad_r(&img, p, None), Err(RasterError::AmbiguousCell { .. })));
        assert!(grad_r(&img, p, Some(LatticePoint::new(0, 0))).is_ok());
        assert!(grad_r(&img, p, Some(LatticePoint::new(1, 0))).is_ok());
        assert!(matches!(grad_r(&img, p, Some(LatticePoint::new(1, 1))), Err(RasterError::WrongCell { .. })));
    }

    #[test]
    fn precedes_examples() {
        let img = Image::from_rows(&[&[2.0, 5.0, 1.0], &[4.0, 4.0, 4.0], &[0.0, 0.0, 0.0]]).unwrap();
        assert!(precedes(&img, LatticePoint::new(0, 0), LatticePoint::new(1, 0)).unwrap());
        // Equal values around centre (1,1): offset (-1,-1) beats (0,-1)? No: (-1,-1) has the lower key.
        let flat = Image::new(3, 3, vec![1.0; 9]).unwrap();
        assert!(precedes(&flat, LatticePoint::new(0, 0), LatticePoint::new(1, 0)).unwrap());
        assert!(!precedes(&flat, LatticePoint::new(1, 0), LatticePoint::new(0, 0)).unwrap());
        assert!(matches!(
            precedes(&flat, LatticePoint::new(0, 0), LatticePoint::new(0, 0)),
            Err(RasterError::NotAdjacent(..))
        ));
        let wide = Image::new(4, 2, vec![0.0; 8]).unwrap();
        assert!(precedes(&wide, LatticePoint::new(0, 0), LatticePoint::new(3, 0)).is_err());
    }

    #[test]
    fn neighborhood_counts() {
        let img = Image::from_fn(3, 3, |i, j| (i * 3 + j) as f64 + 0.1 * (i * j) as f64).unwrap();
        let sad = enumerate_saddles(&img);
        assert_eq!(neighborhood(&img, LatticePoint::new(1, 1), &sad).len(), 8);
        assert_eq!(neighborhood(&img, LatticePoint::new(0, 0), &sad).len(), 3);

        // Checkerboard cell north-east of the centre.
        let mut v = vec![0.0; 9];
        for (k, val) in [-3.0, -2.0, -1.5, -1.0, 1.0, 0.0, -0.5, 0.0, 1.0].iter().enumerate() {
            v[k] = *val;
        }
        let img = Image::new(3, 3, v).unwrap();
        let sad = enumerate_saddles(&img);
        assert!(sad.split_at(LatticePoint::new(1, 1)).is_some());
        let n = neighborhood(&img, LatticePoint::new(1, 1), &sad);
        assert_eq!(n.len(), 7);
        assert!(!n.contains(&LatticePoint::new(2, 2)));
    }

    #[test]
    fn cmp_idx_agrees_with_precedes_on_neighbourhoods() {
        let img = Image::from_fn(5, 5, |i, j| ((i * 3 + j * 5) % 3) as f64).unwrap();
        for a in 0..img.len() {
            for b in 0..img.len() {
                let (pa, pb) = (img.point(a), img.point(b));
                if a != b && pa.chebyshev(pb) <= 2 {
                    assert_eq!(precedes(&img, pa, pb).unwrap(), img.lower(a, b));
                }
            }
        }
    }
}
