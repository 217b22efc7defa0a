//! Bilinear maps as sums of polynomial products.
//!
//! A plan lists the polynomials built from each operand (which operand entry lands on which
//! degree), the products to evaluate with the output polynomial each one accumulates into, and
//! for every output element the (polynomial, degree) coefficients that sum to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packing::{ConvShape, DegreeCap, PackingPlan, Scheme};

/// Linear operations of training, each a bilinear map of a left and a right operand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearOp {
    /// left: input (c_in, h, w); right: weights (c_out, c_in, k, k); out: (c_out, h', w').
    Conv { c_in: usize, c_out: usize, h: usize, w: usize, k: usize, pad: usize },
    /// left: output gradient (c_out, h', w'); right: weights; out: input gradient (c_in, h, w).
    ConvInputGrad { c_in: usize, c_out: usize, h: usize, w: usize, k: usize, pad: usize },
    /// left: input (c_in, h, w); right: output gradient (c_out, h', w'); out: (c_out, c_in, k, k).
    ConvWeightGrad { c_in: usize, c_out: usize, h: usize, w: usize, k: usize, pad: usize },
    /// left: vector (cols); right: matrix (rows, cols); out: (rows).
    MatVec { rows: usize, cols: usize },
    /// left: vector (rows); right: matrix (rows, cols); out: transpose product (cols).
    MatTVec { rows: usize, cols: usize },
    /// left: vector (cols); right: vector (rows); out: right * left^T (rows, cols).
    Outer { rows: usize, cols: usize },
    /// left: (channels, size); right: per-channel factor (channels); out: (channels, size).
    Scale { channels: usize, size: usize },
    /// left: (channels, size); right: (channels, size); out: per-channel inner products.
    ChannelDot { channels: usize, size: usize },
}

impl LinearOp {
    pub fn name(&self) -> &'static str {
        match self {
            LinearOp::Conv { .. } => "conv",
            LinearOp::ConvInputGrad { .. } => "conv_input_grad",
            LinearOp::ConvWeightGrad { .. } => "conv_weight_grad",
            LinearOp::MatVec { .. } => "matvec",
            LinearOp::MatTVec { .. } => "mattvec",
            LinearOp::Outer { .. } => "outer",
            LinearOp::Scale { .. } => "scale",
            LinearOp::ChannelDot { .. } => "channel_dot",
        }
    }

    /// (left length, right length, output length).
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        Ok(match *self {
            LinearOp::Conv { c_in, c_out, h, w, k, pad } => {
                let s = ConvShape::new(h, w, k, pad)?;
                (c_in * h * w, c_out * c_in * k * k, c_out * s.out_h() * s.out_w())
            }
            LinearOp::ConvInputGrad { c_in, c_out, h, w, k, pad } => {
                let s = ConvShape::new(h, w, k, pad)?;
                (c_out * s.out_h() * s.out_w(), c_out * c_in * k * k, c_in * h * w)
            }
            LinearOp::ConvWeightGrad { c_in, c_out, h, w, k, pad } => {
                let s = ConvShape::new(h, w, k, pad)?;
                (c_in * h * w, c_out * s.out_h() * s.out_w(), c_out * c_in * k * k)
            }
            LinearOp::MatVec { rows, cols } => (cols, rows * cols, rows),
            LinearOp::MatTVec { rows, cols } => (rows, rows * cols, cols),
            LinearOp::Outer { rows, cols } => (cols, rows, rows * cols),
            LinearOp::Scale { channels, size } => (channels * size, channels, channels * size),
            LinearOp::ChannelDot { channels, size } => (channels * size, channels * size, channels),
        })
    }

    /// Plaintext evaluation over the integers; the oracle for every plan.
    pub fn eval(&self, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        let (lx, lw, _) = self.dims()?;
        if x.len() != lx || w.len() != lw {
            return Err(Error::Contract(format!("{} operands of {}/{} entries, expected {lx}/{lw}", self.name(), x.len(), w.len())));
        }
        Ok(match *self {
            LinearOp::Conv { c_in, c_out, h, w: wd, k, pad } => {
                let s = ConvShape::new(h, wd, k, pad)?;
                let (oh, ow) = (s.out_h(), s.out_w());
                let mut out = vec![0i64; c_out * oh * ow];
                for co in 0..c_out {
                    for ci in 0..c_in {
                        for u in 0..oh {
                            for v in 0..ow {
                                let mut acc = 0i64;
                                for i in 0..k {
                                    for j in 0..k {
                                        let (r, c) = ((u + i) as isize - pad as isize, (v + j) as isize - pad as isize);
                                        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < wd {
                                            acc += x[(ci * h + r as usize) * wd + c as usize]
                                                * w[((co * c_in + ci) * k + i) * k + j];
                                        }
                                    }
                                }
                                out[(co * oh + u) * ow + v] += acc;
                            }
                        }
                    }
                }
                out
            }
            LinearOp::ConvInputGrad { c_in, c_out, h, w: wd, k, pad } => {
                let s = ConvShape::new(h, wd, k, pad)?;
                let (oh, ow) = (s.out_h(), s.out_w());
                let mut out = vec![0i64; c_in * h * wd];
                for co in 0..c_out {
                    for ci in 0..c_in {
                        for u in 0..oh {
                            for v in 0..ow {
                                let g = x[(co * oh + u) * ow + v];
                                for i in 0..k {
                                    for j in 0..k {
                                        let (r, c) = ((u + i) as isize - pad as isize, (v + j) as isize - pad as isize);
                                        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < wd {
                                            out[(ci * h + r as usize) * wd + c as usize] +=
                                                g * w[((co * c_in + ci) * k + i) * k + j];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                out
            }
            LinearOp::ConvWeightGrad { c_in, c_out, h, w: wd, k, pad } => {
                let s = ConvShape::new(h, wd, k, pad)?;
                let (oh, ow) = (s.out_h(), s.out_w());
                let mut out = vec![0i64; c_out * c_in * k * k];
                for co in 0..c_out {
                    for ci in 0..c_in {
                        for i in 0..k {
                            for j in 0..k {
                                let mut acc = 0i64;
                                for u in 0..oh {
                                    for v in 0..ow {
                                        let (r, c) = ((u + i) as isize - pad as isize, (v + j) as isize - pad as isize);
                                        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < wd {
                                            acc += x[(ci * h + r as usize) * wd + c as usize] * w[(co * oh + u) * ow + v];
                                        }
                                    }
                                }
                                out[((co * c_in + ci) * k + i) * k + j] = acc;
                            }
                        }
                    }
                }
                out
            }
            LinearOp::MatVec { rows, cols } => {
                (0..rows).map(|r| (0..cols).map(|c| w[r * cols + c] * x[c]).sum()).collect()
            }
            LinearOp::MatTVec { rows, cols } => {
                (0..cols).map(|c| (0..rows).map(|r| w[r * cols + c] * x[r]).sum()).collect()
            }
            LinearOp::Outer { rows, cols } => {
                (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| w[r] * x[c]).collect()
            }
            LinearOp::Scale { channels, size } => {
                (0..channels * size).map(|i| x[i] * w[i / size]).collect()
            }
            LinearOp::ChannelDot { channels, size } => {
                (0..channels).map(|ch| (0..size).map(|i| x[ch * size + i] * w[ch * size + i]).sum()).collect()
            }
        })
    }
}

/// Operand entry `src` placed at `deg`.
pub type Slot = (u32, u32);

#[derive(Clone, Debug)]
pub struct BilinearPlan {
    op: LinearOp,
    scheme: Scheme,
    n: usize,
    left: Vec<Vec<Slot>>,
    right: Vec<Vec<Slot>>,
    /// (left poly, right poly, output poly)
    products: Vec<(u32, u32, u32)>,
    out_polys: usize,
    /// Per output element: (output poly, degree) terms.
    extract: Vec<Vec<Slot>>,
}

/// Chunk length for vector-style packings: minimizes products, preferring longer chunks.
fn best_chunk(len: usize, groups: usize, max_chunk: usize, per_poly: impl Fn(usize) -> usize) -> usize {
    let mut best = (usize::MAX, 1);
    for l in 1..=len.min(max_chunk) {
        let r = per_poly(l);
        if r == 0 {
            continue;
        }
        let cost = len.div_ceil(l) * groups.div_ceil(r);
        if cost < best.0 || (cost == best.0 && l > best.1) {
            best = (cost, l);
        }
    }
    best.1
}

impl BilinearPlan {
    pub fn new(op: LinearOp, scheme: Scheme, n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Params(format!("ring degree {n}")));
        }
        let mut b = Builder::default();
        let cap = DegreeCap::ring(n);
        match op {
            LinearOp::Conv { c_in, c_out, h, w, k, pad } => {
                let pp = PackingPlan::new(scheme, ConvShape::new(h, w, k, pad)?, cap)?;
                let tiles = pp.num_tiles();
                let (oh, ow) = (pp.shape().out_h(), pp.shape().out_w());
                b.conv_inputs(&pp, c_in, h * w);
                for co in 0..c_out {
                    for ci in 0..c_in {
                        b.right.push(kernel_slots(&pp, k, k, |i, j| ((co * c_in + ci) * k + i) * k + j));
                    }
                }
                for co in 0..c_out {
                    for ci in 0..c_in {
                        for t in 0..tiles {
                            b.products.push(((ci * tiles + t) as u32, (co * c_in + ci) as u32, (co * tiles + t) as u32));
                        }
                    }
                }
                b.out_polys = c_out * tiles;
                b.conv_extract(&pp, c_out, tiles, oh, ow);
            }
            LinearOp::ConvInputGrad { c_in, c_out, h, w, k, pad } => {
                let fwd = ConvShape::new(h, w, k, pad)?;
                if pad > k - 1 {
                    return Err(Error::Params("input gradient needs pad <= k - 1".into()));
                }
                let (oh, ow) = (fwd.out_h(), fwd.out_w());
                let pp = PackingPlan::new(scheme, ConvShape::new(oh, ow, k, k - 1 - pad)?, cap)?;
                let tiles = pp.num_tiles();
                b.conv_inputs(&pp, c_out, oh * ow);
                for ci in 0..c_in {
                    for co in 0..c_out {
                        // rotated kernel: position (i, j) holds w[co][ci][k-1-i][k-1-j]
                        b.right.push(kernel_slots(&pp, k, k, |i, j| ((co * c_in + ci) * k + (k - 1 - i)) * k + (k - 1 - j)));
                    }
                }
                for ci in 0..c_in {
                    for co in 0..c_out {
                        for t in 0..tiles {
                            b.products.push(((co * tiles + t) as u32, (ci * c_out + co) as u32, (ci * tiles + t) as u32));
                        }
                    }
                }
                b.out_polys = c_in * tiles;
                b.conv_extract(&pp, c_in, tiles, h, w);
            }
            LinearOp::ConvWeightGrad { c_in, c_out, h, w, k, pad } => {
                let fwd = ConvShape::new(h, w, k, pad)?;
                let (oh, ow) = (fwd.out_h(), fwd.out_w());
                let pp = PackingPlan::new(scheme, ConvShape::rect(h, w, oh, ow, pad)?, cap)?;
                let tiles = pp.num_tiles();
                b.conv_inputs(&pp, c_in, h * w);
                for co in 0..c_out {
                    b.right.push(kernel_slots(&pp, oh, ow, |i, j| (co * oh + i) * ow + j));
                }
                for co in 0..c_out {
                    for ci in 0..c_in {
                        for t in 0..tiles {
                            b.products.push(((ci * tiles + t) as u32, co as u32, ((co * c_in + ci) * tiles + t) as u32));
                        }
                    }
                }
                b.out_polys = c_out * c_in * tiles;
                b.conv_extract(&pp, c_out * c_in, tiles, k, k);
            }
            LinearOp::MatVec { rows, cols } => b.matvec(n, rows, cols, |r, c| r * cols + c),
            LinearOp::MatTVec { rows, cols } => b.matvec(n, cols, rows, |r, c| c * cols + r),
            LinearOp::Outer { rows, cols } => {
                let l = best_chunk(cols, rows, n, |l| n / l);
                let r_per = n / l;
                let chunks = cols.div_ceil(l);
                let blocks = rows.div_ceil(r_per);
                for c in 0..chunks {
                    b.left.push((0..l.min(cols - c * l)).map(|i| ((c * l + i) as u32, i as u32)).collect());
                }
                for blk in 0..blocks {
                    let r0 = blk * r_per;
                    b.right.push((0..r_per.min(rows - r0)).map(|r| ((r0 + r) as u32, (r * l) as u32)).collect());
                }
                for blk in 0..blocks {
                    for c in 0..chunks {
                        b.products.push((c as u32, blk as u32, (blk * chunks + c) as u32));
                    }
                }
                b.out_polys = blocks * chunks;
                for r in 0..rows {
                    for c in 0..cols {
                        let (blk, c0) = (r / r_per, c / l);
                        b.extract.push(vec![((blk * chunks + c0) as u32, ((r % r_per) * l + c % l) as u32)]);
                    }
                }
            }
            LinearOp::Scale { channels, size } => {
                let chunks = size.div_ceil(n);
                for ch in 0..channels {
                    for c in 0..chunks {
                        let base = c * n;
                        b.left.push((0..n.min(size - base)).map(|i| ((ch * size + base + i) as u32, i as u32)).collect());
                    }
                    b.right.push(vec![(ch as u32, 0)]);
                }
                for ch in 0..channels {
                    for c in 0..chunks {
                        let p = (ch * chunks + c) as u32;
                        b.products.push((p, ch as u32, p));
                    }
                }
                b.out_polys = channels * chunks;
                for ch in 0..channels {
                    for i in 0..size {
                        b.extract.push(vec![((ch * chunks + i / n) as u32, (i % n) as u32)]);
                    }
                }
            }
            LinearOp::ChannelDot { channels, size } => {
                let l = size.min(n.div_ceil(2));
                let chunks = size.div_ceil(l);
                for ch in 0..channels {
                    for c in 0..chunks {
                        let base = c * l;
                        let len = l.min(size - base);
                        b.left.push((0..len).map(|i| ((ch * size + base + i) as u32, i as u32)).collect());
                        b.right.push((0..len).map(|i| ((ch * size + base + i) as u32, (l - 1 - i) as u32)).collect());
                        let p = (ch * chunks + c) as u32;
                        b.products.push((p, p, ch as u32));
                    }
                }
                b.out_polys = channels;
                for ch in 0..channels {
                    b.extract.push(vec![(ch as u32, (l - 1) as u32)]);
                }
            }
        }
        let plan = BilinearPlan {
            op,
            scheme,
            n,
            left: b.left,
            right: b.right,
            products: b.products,
            out_polys: b.out_polys,
            extract: b.extract,
        };
        plan.check_degrees()?;
        Ok(plan)
    }

    fn check_degrees(&self) -> Result<()> {
        let top = |polys: &[Vec<Slot>]| polys.iter().map(|p| p.iter().map(|s| s.1 as usize).max().unwrap_or(0)).collect::<Vec<_>>();
        let (lt, rt) = (top(&self.left), top(&self.right));
        for &(l, r, _) in &self.products {
            let d = lt[l as usize] + rt[r as usize];
            if d >= self.n {
                return Err(Error::PackingOverflow { degree: d, n: self.n });
            }
        }
        Ok(())
    }

    pub fn op(&self) -> LinearOp {
        self.op
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn left_polys(&self) -> usize {
        self.left.len()
    }

    pub fn right_polys(&self) -> usize {
        self.right.len()
    }

    pub fn out_polys(&self) -> usize {
        self.out_polys
    }

    pub fn products(&self) -> &[(u32, u32, u32)] {
        &self.products
    }

    pub fn num_products(&self) -> usize {
        self.products.len()
    }

    fn encode(polys: &[Vec<Slot>], n: usize, v: &[i64]) -> Vec<Vec<i64>> {
        polys
            .iter()
            .map(|p| {
                let mut c = vec![0i64; n];
                for &(src, deg) in p {
                    c[deg as usize] = v[src as usize];
                }
                c
            })
            .collect()
    }

    pub fn encode_left(&self, x: &[i64]) -> Result<Vec<Vec<i64>>> {
        let (lx, _, _) = self.op.dims()?;
        if x.len() != lx {
            return Err(Error::Contract(format!("left operand has {} entries, expected {lx}", x.len())));
        }
        Ok(Self::encode(&self.left, self.n, x))
    }

    pub fn encode_right(&self, w: &[i64]) -> Result<Vec<Vec<i64>>> {
        let (_, lw, _) = self.op.dims()?;
        if w.len() != lw {
            return Err(Error::Contract(format!("right operand has {} entries, expected {lw}", w.len())));
        }
        Ok(Self::encode(&self.right, self.n, w))
    }

    /// Output tensor from output-polynomial coefficients in [0, t), centered mod t.
    pub fn extract(&self, out: &[Vec<u64>], t: u64) -> Result<Vec<i64>> {
        if out.len() != self.out_polys || out.iter().any(|p| p.len() != self.n) {
            return Err(Error::Contract(format!("{} output polynomials, expected {}", out.len(), self.out_polys)));
        }
        Ok(self
            .extract
            .iter()
            .map(|terms| {
                let s = terms.iter().fold(0u128, |acc, &(p, d)| (acc + out[p as usize][d as usize] as u128) % t as u128) as u64;
                if s > t / 2 {
                    s as i64 - t as i64
                } else {
                    s as i64
                }
            })
            .collect())
    }
}

#[derive(Default)]
struct Builder {
    left: Vec<Vec<Slot>>,
    right: Vec<Vec<Slot>>,
    products: Vec<(u32, u32, u32)>,
    out_polys: usize,
    extract: Vec<Vec<Slot>>,
}

fn kernel_slots(pp: &PackingPlan, kh: usize, kw: usize, src: impl Fn(usize, usize) -> usize) -> Vec<Slot> {
    let mut v = Vec::with_capacity(kh * kw);
    for i in 0..kh {
        for j in 0..kw {
            v.push((src(i, j) as u32, pp.kernel_degree(i, j) as u32));
        }
    }
    v
}

impl Builder {
    /// Left polynomials `channel * tiles + tile` from a (channels, h, w) tensor.
    fn conv_inputs(&mut self, pp: &PackingPlan, channels: usize, plane: usize) {
        let tiles = pp.num_tiles();
        let map = pp.coeff_map();
        for ch in 0..channels {
            let mut polys = vec![Vec::new(); tiles];
            for (idx, &(t, d)) in map.iter().enumerate() {
                polys[t].push(((ch * plane + idx) as u32, d as u32));
            }
            self.left.extend(polys);
        }
    }

    fn conv_extract(&mut self, pp: &PackingPlan, groups: usize, tiles: usize, oh: usize, ow: usize) {
        let sources: Vec<Vec<(usize, usize)>> =
            (0..oh * ow).map(|k| pp.output_sources(k / ow, k % ow)).collect();
        for g in 0..groups {
            for src in &sources {
                self.extract.push(src.iter().map(|&(t, d)| ((g * tiles + t) as u32, d as u32)).collect());
            }
        }
    }

    /// out[r] = sum_c m(r, c) * x[c], with `m` giving the right-operand index of entry (r, c).
    fn matvec(&mut self, n: usize, rows: usize, cols: usize, m: impl Fn(usize, usize) -> usize) {
        let per_poly = |l: usize| (n + 1 - l) / l;
        let l = best_chunk(cols, rows, n.div_ceil(2), per_poly);
        let r_per = per_poly(l);
        let chunks = cols.div_ceil(l);
        let blocks = rows.div_ceil(r_per);
        for c in 0..chunks {
            self.left.push((0..l.min(cols - c * l)).map(|i| ((c * l + i) as u32, i as u32)).collect());
        }
        for blk in 0..blocks {
            let r0 = blk * r_per;
            for c in 0..chunks {
                let mut slots = Vec::new();
                for mm in 0..r_per.min(rows - r0) {
                    for i in 0..l.min(cols - c * l) {
                        slots.push((m(r0 + mm, c * l + i) as u32, (mm * l + l - 1 - i) as u32));
                    }
                }
                self.right.push(slots);
                self.products.push((c as u32, (blk * chunks + c) as u32, blk as u32));
            }
        }
        self.out_polys = blocks;
        for r in 0..rows {
            self.extract.push(vec![((r / r_per) as u32, ((r % r_per) * l + l - 1) as u32)]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn negacyclic(a: &[i64], b: &[i64], n: usize) -> Vec<i128> {
        let mut out = vec![0i128; n];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                let v = x as i128 * y as i128;
                if i + j < n {
                    out[i + j] += v;
                } else {
                    out[i + j - n] -= v;
                }
            }
        }
        out
    }

    /// Evaluate a plan with exact integer polynomial arithmetic.
    fn run(plan: &BilinearPlan, x: &[i64], w: &[i64]) -> Vec<i64> {
        let t: u64 = 1 << 40;
        let (l, r) = (plan.encode_left(x).unwrap(), plan.encode_right(w).unwrap());
        let mut out = vec![vec![0i128; plan.n()]; plan.out_polys()];
        for &(a, b, o) in plan.products() {
            for (acc, v) in out[o as usize].iter_mut().zip(negacyclic(&l[a as usize], &r[b as usize], plan.n())) {
                *acc += v;
            }
        }
        let out: Vec<Vec<u64>> = out.iter().map(|p| p.iter().map(|&v| v.rem_euclid(t as i128) as u64).collect()).collect();
        plan.extract(&out, t).unwrap()
    }

    fn check(op: LinearOp, n: usize) {
        let (lx, lw, _) = op.dims().unwrap();
        let x: Vec<i64> = (0..lx as i64).map(|i| (i * 7919) % 23 - 11).collect();
        let w: Vec<i64> = (0..lw as i64).map(|i| (i * 104729) % 19 - 9).collect();
        for scheme in [Scheme::Correlated, Scheme::Baseline] {
            let plan = BilinearPlan::new(op, scheme, n).unwrap();
            assert_eq!(run(&plan, &x, &w), op.eval(&x, &w).unwrap(), "{op:?} {scheme:?} n={n}");
        }
    }

    #[test]
    fn every_op_matches_its_oracle() {
        for n in [64, 256] {
            check(LinearOp::Conv { c_in: 2, c_out: 3, h: 6, w: 5, k: 3, pad: 1 }, n);
            check(LinearOp::ConvInputGrad { c_in: 2, c_out: 3, h: 6, w: 5, k: 3, pad: 1 }, n);
            check(LinearOp::ConvInputGrad { c_in: 1, c_out: 2, h: 5, w: 5, k: 3, pad: 0 }, n);
            check(LinearOp::MatVec { rows: 10, cols: 37 }, n);
            check(LinearOp::MatTVec { rows: 10, cols: 37 }, n);
            check(LinearOp::Outer { rows: 10, cols: 37 }, n);
            check(LinearOp::Scale { channels: 3, size: 100 }, n);
            check(LinearOp::ChannelDot { channels: 3, size: 100 }, n);
        }
    }

    #[test]
    fn weight_grad_needs_room_for_the_whole_gradient_map() {
        let op = LinearOp::ConvWeightGrad { c_in: 2, c_out: 3, h: 6, w: 5, k: 3, pad: 1 };
        assert!(matches!(BilinearPlan::new(op, Scheme::Correlated, 64), Err(Error::Partition(_))));
        check(op, 256);
        check(LinearOp::ConvWeightGrad { c_in: 1, c_out: 2, h: 7, w: 7, k: 5, pad: 2 }, 256);
    }

    #[test]
    fn toy_conv_is_one_product() {
        let op = LinearOp::Conv { c_in: 1, c_out: 1, h: 2, w: 2, k: 2, pad: 1 };
        assert_eq!(BilinearPlan::new(op, Scheme::Correlated, 16).unwrap().num_products(), 1);
    }

    #[test]
    fn matvec_packs_rows_densely() {
        let p = BilinearPlan::new(LinearOp::MatVec { rows: 10, cols: 392 }, Scheme::Correlated, 4096).unwrap();
        assert_eq!(p.num_products(), 2);
    }
}
