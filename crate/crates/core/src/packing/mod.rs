//! Convolution-to-polynomial packing.
//!
//! An input tile is placed at degrees `i*O + j` and the kernel, reversed, at
//! `(k_h-1-i)*O + (k_w-1-j)`; with `O` at least the tile width plus kernel width minus one, the
//! coefficient of `a*O + b` in the product is entry (a, b) of the full (k-1 padded) correlation.
//! Large inputs are split into non-overlapping tiles whose full correlations are overlap-added.

mod count;

use serde::{Deserialize, Serialize};

pub use count::{analytic_n1, analytic_n2, count_report, CountReport};

use crate::error::{Error, Result};

/// Largest polynomial degree a product may occupy (N - 1 for a ring of degree N).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeCap(pub usize);

impl DegreeCap {
    pub fn ring(n: usize) -> Self {
        DegreeCap(n - 1)
    }

    pub fn max_degree(self) -> usize {
        self.0
    }

    /// Number of usable coefficient slots.
    pub fn slots(self) -> usize {
        self.0 + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Zero padding materialized in the input polynomial.
    Baseline,
    /// Only real input entries are packed; padding is recovered from the full correlation.
    Correlated,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Scheme::Baseline),
            "correlated" => Ok(Scheme::Correlated),
            _ => Err(Error::Params(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Stride-1 2-D correlation shape: `out[u][v] = sum x[u+i-pad][v+j-pad] * w[i][j]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_h: usize,
    pub in_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn new(in_h: usize, in_w: usize, k: usize, pad: usize) -> Result<Self> {
        Self::rect(in_h, in_w, k, k, pad)
    }

    pub fn rect(in_h: usize, in_w: usize, k_h: usize, k_w: usize, pad: usize) -> Result<Self> {
        let s = ConvShape { in_h, in_w, k_h, k_w, pad };
        if in_h == 0 || in_w == 0 || k_h == 0 || k_w == 0 {
            return Err(Error::Params(format!("degenerate shape {s:?}")));
        }
        if in_h + 2 * pad < k_h || in_w + 2 * pad < k_w {
            return Err(Error::Params(format!("shape {s:?} has an empty output")));
        }
        Ok(s)
    }

    pub fn out_h(&self) -> usize {
        self.in_h + 2 * self.pad + 1 - self.k_h
    }

    pub fn out_w(&self) -> usize {
        self.in_w + 2 * self.pad + 1 - self.k_w
    }

    pub fn full_h(&self) -> usize {
        self.in_h + self.k_h - 1
    }

    pub fn full_w(&self) -> usize {
        self.in_w + self.k_w - 1
    }

    /// Untiled coefficient stride O = max(W, H) + k - 1.
    pub fn stride(&self) -> usize {
        self.in_w.max(self.in_h) + self.k_h.max(self.k_w) - 1
    }
}

/// A partition window and its cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileChoice {
    pub h_w: usize,
    pub w_w: usize,
    /// Coefficient stride O_w = max(W_w, H_w) + k - 1.
    pub stride: usize,
    pub tiles: usize,
    /// The literal window objective as printed; None when a denominator is non-positive.
    pub paper_objective: Option<u64>,
}

fn window_stride(h_w: usize, w_w: usize, k_h: usize, k_w: usize) -> usize {
    h_w.max(w_w) + k_h.max(k_w) - 1
}

/// Largest product degree of a tile of the given window.
fn product_degree(h_w: usize, w_w: usize, k_h: usize, k_w: usize) -> usize {
    let o = window_stride(h_w, w_w, k_h, k_w);
    (h_w + k_h - 2) * o + w_w + k_w - 2
}

fn paper_objective(g_h: usize, g_w: usize, k: usize, h_w: usize, w_w: usize, slots: usize) -> Option<u64> {
    let (g_h, g_w, k, h_w, w_w) = (g_h as i64, g_w as i64, k as i64, h_w as i64, w_w as i64);
    let den_h = h_w - k + 1;
    let den_w = w_w + k - 1;
    if den_h <= 0 || den_w <= 0 || g_h - k + 1 < 0 || g_w - k + 1 < 0 {
        return None;
    }
    let a = (h_w * w_w).div_euclid(slots as i64) + i64::from((h_w * w_w) % slots as i64 != 0);
    Some((a * ((g_h - k + 1) / den_h) * ((g_w - k + 1) / den_w)) as u64)
}

/// Exhaustive window search over a `g_h x g_w` grid.
///
/// Feasible windows satisfy `min(k, g) <= window <= g`, the slot constraint
/// `W_w + H_w*O_w <= slots`, and exactness: the tile product must not wrap past the cap.
/// Minimizes the tile count, then prefers larger area, then larger `H_w`.
pub fn choose_window(g_h: usize, g_w: usize, k_h: usize, k_w: usize, cap: DegreeCap) -> Result<TileChoice> {
    let mut best: Option<TileChoice> = None;
    for h_w in k_h.min(g_h)..=g_h {
        for w_w in k_w.min(g_w)..=g_w {
            let o = window_stride(h_w, w_w, k_h, k_w);
            if w_w + h_w * o > cap.slots() || product_degree(h_w, w_w, k_h, k_w) > cap.max_degree() {
                continue;
            }
            let tiles = g_h.div_ceil(h_w) * g_w.div_ceil(w_w);
            let cand = TileChoice {
                h_w,
                w_w,
                stride: o,
                tiles,
                paper_objective: paper_objective(g_h, g_w, k_h.max(k_w), h_w, w_w, cap.slots()),
            };
            let better = match &best {
                None => true,
                Some(b) => (tiles, std::cmp::Reverse(h_w * w_w), std::cmp::Reverse(h_w))
                    < (b.tiles, std::cmp::Reverse(b.h_w * b.w_w), std::cmp::Reverse(b.h_w)),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.ok_or_else(|| {
        Error::Partition(format!("no {k_h}x{k_w}-kernel window of a {g_h}x{g_w} grid fits degree cap {}", cap.0))
    })
}

/// Window selection for the correlated packing of `shape`.
pub fn choose_tiles(shape: &ConvShape, cap: DegreeCap) -> Result<TileChoice> {
    choose_window(shape.in_h, shape.in_w, shape.k_h, shape.k_w, cap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Assignment of one 2-D correlation to polynomial products.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackingPlan {
    scheme: Scheme,
    shape: ConvShape,
    cap: DegreeCap,
    /// Materialized grid (input plus zero border for the baseline).
    grid_h: usize,
    grid_w: usize,
    /// Position of input entry (0, 0) inside the grid.
    offset: usize,
    choice: TileChoice,
    tiles: Vec<Tile>,
    /// Full-correlation index of out[0][0]; may be negative when pad > k - 1.
    crop_h: isize,
    crop_w: isize,
}

impl PackingPlan {
    pub fn new(scheme: Scheme, shape: ConvShape, cap: DegreeCap) -> Result<Self> {
        let (grid_h, grid_w, offset, crop_h, crop_w) = match scheme {
            Scheme::Correlated => (
                shape.in_h,
                shape.in_w,
                0,
                shape.k_h as isize - 1 - shape.pad as isize,
                shape.k_w as isize - 1 - shape.pad as isize,
            ),
            Scheme::Baseline => (
                shape.in_h + 2 * shape.pad,
                shape.in_w + 2 * shape.pad,
                shape.pad,
                shape.k_h as isize - 1,
                shape.k_w as isize - 1,
            ),
        };
        let choice = choose_window(grid_h, grid_w, shape.k_h, shape.k_w, cap)?;
        let mut tiles = Vec::with_capacity(choice.tiles);
        for row0 in (0..grid_h).step_by(choice.h_w) {
            for col0 in (0..grid_w).step_by(choice.w_w) {
                tiles.push(Tile {
                    row0,
                    col0,
                    rows: choice.h_w.min(grid_h - row0),
                    cols: choice.w_w.min(grid_w - col0),
                });
            }
        }
        Ok(PackingPlan { scheme, shape, cap, grid_h, grid_w, offset, choice, tiles, crop_h, crop_w })
    }

    pub fn correlated(shape: ConvShape, cap: DegreeCap) -> Result<Self> {
        Self::new(Scheme::Correlated, shape, cap)
    }

    pub fn baseline(shape: ConvShape, cap: DegreeCap) -> Result<Self> {
        Self::new(Scheme::Baseline, shape, cap)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn shape(&self) -> &ConvShape {
        &self.shape
    }

    pub fn cap(&self) -> DegreeCap {
        self.cap
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn num_tiles(&self) -> usize {
        self.tiles.len()
    }

    pub fn window(&self) -> TileChoice {
        self.choice
    }

    pub fn stride(&self) -> usize {
        self.choice.stride
    }

    /// Polynomial products for one input channel and one kernel.
    pub fn mults(&self) -> usize {
        self.tiles.len()
    }

    /// (tile, degree) of input entry (i, j).
    pub fn input_slot(&self, i: usize, j: usize) -> (usize, usize) {
        let (gi, gj) = (i + self.offset, j + self.offset);
        let tiles_per_row = self.grid_w.div_ceil(self.choice.w_w);
        let (ti, tj) = (gi / self.choice.h_w, gj / self.choice.w_w);
        let t = ti * tiles_per_row + tj;
        let tile = &self.tiles[t];
        (t, (gi - tile.row0) * self.stride() + (gj - tile.col0))
    }

    /// (tile, degree) for every input entry in row-major order.
    pub fn coeff_map(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.shape.in_h * self.shape.in_w);
        for i in 0..self.shape.in_h {
            for j in 0..self.shape.in_w {
                v.push(self.input_slot(i, j));
            }
        }
        v
    }

    pub fn kernel_degree(&self, i: usize, j: usize) -> usize {
        (self.shape.k_h - 1 - i) * self.stride() + (self.shape.k_w - 1 - j)
    }

    /// Largest degree used by any packed input tile, counting materialized zero padding.
    pub fn input_max_degree(&self) -> usize {
        self.tiles.iter().map(|t| (t.rows - 1) * self.stride() + t.cols - 1).max().unwrap_or(0)
    }

    pub fn kernel_max_degree(&self) -> usize {
        self.kernel_degree(0, 0)
    }

    pub fn product_max_degree(&self) -> usize {
        self.tiles
            .iter()
            .map(|t| (t.rows + self.shape.k_h - 2) * self.stride() + t.cols + self.shape.k_w - 2)
            .max()
            .unwrap_or(0)
    }

    /// Fails if a product would wrap around x^n + 1.
    pub fn check_ring(&self, n: usize) -> Result<()> {
        let d = self.product_max_degree();
        if d >= n {
            return Err(Error::PackingOverflow { degree: d, n });
        }
        Ok(())
    }

    /// Pack a row-major `in_h x in_w` input into one coefficient vector per tile.
    pub fn pack_input(&self, x: &[i64]) -> Vec<Vec<i64>> {
        assert_eq!(x.len(), self.shape.in_h * self.shape.in_w, "input size");
        let o = self.stride();
        let mut polys: Vec<Vec<i64>> =
            self.tiles.iter().map(|t| vec![0; (t.rows - 1) * o + t.cols]).collect();
        for i in 0..self.shape.in_h {
            for j in 0..self.shape.in_w {
                let (t, d) = self.input_slot(i, j);
                polys[t][d] = x[i * self.shape.in_w + j];
            }
        }
        polys
    }

    /// Pack a row-major `k_h x k_w` kernel, reversed.
    pub fn pack_kernel(&self, w: &[i64]) -> Vec<i64> {
        assert_eq!(w.len(), self.shape.k_h * self.shape.k_w, "kernel size");
        let mut poly = vec![0; self.kernel_max_degree() + 1];
        for i in 0..self.shape.k_h {
            for j in 0..self.shape.k_w {
                poly[self.kernel_degree(i, j)] = w[i * self.shape.k_w + j];
            }
        }
        poly
    }

    /// Products contributing to output (u, v): pairs of (tile, degree).
    pub fn output_sources(&self, u: usize, v: usize) -> Vec<(usize, usize)> {
        let a = u as isize + self.crop_h;
        let b = v as isize + self.crop_w;
        let (kh, kw) = (self.shape.k_h as isize, self.shape.k_w as isize);
        let mut out = Vec::new();
        for (t, tile) in self.tiles.iter().enumerate() {
            let la = a - tile.row0 as isize;
            let lb = b - tile.col0 as isize;
            if la >= 0 && lb >= 0 && la < tile.rows as isize + kh - 1 && lb < tile.cols as isize + kw - 1 {
                out.push((t, la as usize * self.stride() + lb as usize));
            }
        }
        out
    }

    /// Assemble the `out_h x out_w` output from per-tile product coefficients.
    pub fn extract(&self, products: &[Vec<i64>]) -> Result<Vec<i64>> {
        self.extract_with(products, |acc, v| acc.checked_add(v))
    }

    /// Like [`extract`](Self::extract) with a caller-supplied accumulation (e.g. modular).
    pub fn extract_with(
        &self,
        products: &[Vec<i64>],
        add: impl Fn(i64, i64) -> Option<i64>,
    ) -> Result<Vec<i64>> {
        if products.len() != self.tiles.len() {
            return Err(Error::Contract(format!("{} products for {} tiles", products.len(), self.tiles.len())));
        }
        let need = self.product_max_degree() + 1;
        if let Some(p) = products.iter().find(|p| p.len() < need) {
            return Err(Error::PackingOverflow { degree: need - 1, n: p.len() });
        }
        let (oh, ow) = (self.shape.out_h(), self.shape.out_w());
        let mut out = vec![0i64; oh * ow];
        let o = self.stride();
        let (kh, kw) = (self.shape.k_h, self.shape.k_w);
        for (t, tile) in self.tiles.iter().enumerate() {
            let p = &products[t];
            for la in 0..tile.rows + kh - 1 {
                let u = (tile.row0 + la) as isize - self.crop_h;
                if u < 0 || u >= oh as isize {
                    continue;
                }
                for lb in 0..tile.cols + kw - 1 {
                    let v = (tile.col0 + lb) as isize - self.crop_w;
                    if v < 0 || v >= ow as isize {
                        continue;
                    }
                    let slot = &mut out[u as usize * ow + v as usize];
                    *slot = add(*slot, p[la * o + lb])
                        .ok_or_else(|| Error::Overflow("output accumulation".into()))?;
                }
            }
        }
        Ok(out)
    }

    /// Fraction of product coefficients (up to each tile's top degree) that reach the output.
    pub fn utilization(&self) -> f64 {
        let (oh, ow) = (self.shape.out_h() as isize, self.shape.out_w() as isize);
        let (kh, kw) = (self.shape.k_h, self.shape.k_w);
        let o = self.stride();
        let (mut used, mut total) = (0usize, 0usize);
        for tile in &self.tiles {
            total += (tile.rows + kh - 2) * o + tile.cols + kw - 1;
            for la in 0..tile.rows + kh - 1 {
                for lb in 0..tile.cols + kw - 1 {
                    let u = (tile.row0 + la) as isize - self.crop_h;
                    let v = (tile.col0 + lb) as isize - self.crop_w;
                    if (0..oh).contains(&u) && (0..ow).contains(&v) {
                        used += 1;
                    }
                }
            }
        }
        used as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ConvShape {
        ConvShape::new(2, 2, 2, 1).unwrap()
    }

    #[test]
    fn toy_degrees() {
        let p = PackingPlan::correlated(toy(), DegreeCap(8)).unwrap();
        assert_eq!(p.stride(), 3);
        assert_eq!(p.coeff_map(), vec![(0, 0), (0, 1), (0, 3), (0, 4)]);
        assert_eq!(p.input_max_degree(), 4);
        assert_eq!(
            [p.kernel_degree(0, 0), p.kernel_degree(0, 1), p.kernel_degree(1, 0), p.kernel_degree(1, 1)],
            [4, 3, 1, 0]
        );
        assert_eq!(p.mults(), 1);
        assert_eq!(p.utilization(), 1.0);
        let b = PackingPlan::baseline(toy(), DegreeCap(8)).unwrap();
        assert_eq!(b.mults(), 4);
    }

    #[test]
    fn degenerate_single_entry() {
        let p = PackingPlan::correlated(ConvShape::new(1, 1, 1, 0).unwrap(), DegreeCap(1)).unwrap();
        assert_eq!(p.coeff_map(), vec![(0, 0)]);
        assert_eq!(p.pack_kernel(&[5]), vec![5]);
        assert_eq!(p.extract(&[vec![35]]).unwrap(), vec![35]);
    }

    #[test]
    fn toy_extract_by_hand() {
        let p = PackingPlan::correlated(toy(), DegreeCap(8)).unwrap();
        let x = [1i64, 2, 3, 4];
        let w = [5i64, 6, 7, 8];
        let xp = &p.pack_input(&x)[0];
        let wp = p.pack_kernel(&w);
        let mut prod = vec![0i64; 9];
        for (i, a) in xp.iter().enumerate() {
            for (j, b) in wp.iter().enumerate() {
                prod[i + j] += a * b;
            }
        }
        // degree 0 = x[0,0] w[1,1]; degree 4 = full overlap
        assert_eq!(prod[0], 8);
        assert_eq!(prod[4], 5 + 2 * 6 + 3 * 7 + 4 * 8);
        let out = p.extract(&[prod]).unwrap();
        assert_eq!(out[0], 8);
        assert_eq!(out[4], 70);
    }

    #[test]
    fn infeasible_window() {
        // A 5x5 kernel needs at least a (5+5-2)*(5+5-1) + 9 degree product.
        let shape = ConvShape::new(5, 5, 5, 2).unwrap();
        assert!(matches!(choose_tiles(&shape, DegreeCap(40)), Err(Error::Partition(_))));
    }

    #[test]
    fn whole_input_when_it_fits() {
        let shape = ConvShape::new(8, 8, 3, 1).unwrap();
        let c = choose_tiles(&shape, DegreeCap::ring(4096)).unwrap();
        assert_eq!((c.h_w, c.w_w, c.tiles), (8, 8, 1));
    }

    #[test]
    fn shape_validation() {
        assert!(ConvShape::new(2, 2, 5, 1).is_err());
        assert!(ConvShape::new(2, 2, 5, 2).is_ok());
        assert!(ConvShape::new(0, 2, 1, 0).is_err());
    }
}
