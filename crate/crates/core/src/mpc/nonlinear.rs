//! DReLU by chunked millionaires' comparison, ReLU by multiplexing, and tournament max-pooling.

use super::{Mpc, Party};
use crate::error::{Error, Result};
use crate::transport::wire::{pack_bits, unpack_bits};
use crate::transport::Endpoint;

const CHUNK_BITS: u32 = 4;
const CHUNK_K: usize = 1 << CHUNK_BITS;

/// XOR-shared Beaver triples over GF(2), one bit per entry.
pub struct BitTriples {
    a: Vec<u8>,
    b: Vec<u8>,
    c: Vec<u8>,
}

impl BitTriples {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

fn to_u64(bits: &[u8]) -> Vec<u64> {
    bits.iter().map(|&b| u64::from(b)).collect()
}

impl Mpc {
    /// `n` bit triples from two COT batches, one in each direction.
    pub fn bit_triples(&mut self, ep: &mut Endpoint, n: usize) -> Result<BitTriples> {
        let a = self.local_bits(n);
        let b = self.local_bits(n);
        // Cross terms: a0*b1 with the client sending, a1*b0 with the server sending.
        let (r1, r2) = match self.party {
            Party::Client => {
                let r1 = self.cot_send(ep, &to_u64(&a), 1)?;
                let r2 = self.cot_recv(ep, &b, 1)?;
                (r1, r2)
            }
            Party::Server => {
                let r1 = self.cot_recv(ep, &b, 1)?;
                let r2 = self.cot_send(ep, &to_u64(&a), 1)?;
                (r1, r2)
            }
        };
        let c = (0..n).map(|k| (a[k] & b[k]) ^ r1[k] as u8 ^ r2[k] as u8).collect();
        Ok(BitTriples { a, b, c })
    }

    /// Elementwise AND of XOR-shared bits, consuming `triples[offset..offset + x.len()]`.
    pub fn and(
        &mut self,
        ep: &mut Endpoint,
        x: &[u8],
        y: &[u8],
        triples: &BitTriples,
        offset: usize,
    ) -> Result<Vec<u8>> {
        let n = x.len();
        if y.len() != n || offset + n > triples.len() {
            return Err(Error::Contract("AND operand or triple count mismatch".into()));
        }
        let (a, b, c) = (&triples.a[offset..offset + n], &triples.b[offset..offset + n], &triples.c[offset..offset + n]);
        let mut ef = Vec::with_capacity(2 * n);
        ef.extend((0..n).map(|k| u64::from(x[k] ^ a[k])));
        ef.extend((0..n).map(|k| u64::from(y[k] ^ b[k])));
        let theirs = self.exchange(ep, n, &pack_bits(&ef, 1))?;
        let theirs = unpack_bits(&theirs, 1, 2 * n)?;
        let first = self.party == Party::Client;
        Ok((0..n)
            .map(|k| {
                let e = (ef[k] ^ theirs[k]) as u8;
                let f = (ef[n + k] ^ theirs[n + k]) as u8;
                c[k] ^ (e & b[k]) ^ (f & a[k]) ^ if first { e & f } else { 0 }
            })
            .collect())
    }

    /// XOR shares of 1{x >= 0} for arithmetic shares of x, read as two's complement.
    pub fn drelu(&mut self, ep: &mut Endpoint, x: &[u64]) -> Result<Vec<u8>> {
        let n = x.len();
        let ring = self.ring;
        let m = ring.bits() - 1;
        let low = (1u64 << m) - 1;
        // The sign carry is 1{x0' + x1' >= 2^m} = 1{x0' > (2^m - 1) - x1'} on the low m bits.
        let cmp: Vec<u64> = match self.party {
            Party::Client => x.iter().map(|&v| v & low).collect(),
            Party::Server => x.iter().map(|&v| low - (v & low)).collect(),
        };
        let chunks = m.div_ceil(CHUNK_BITS) as usize;
        let digit = |v: u64, j: usize| ((v >> (CHUNK_BITS as usize * j)) & (CHUNK_K as u64 - 1)) as usize;

        // Leaf comparisons: chunk-wise (gt, eq), stored [element][chunk], least significant first.
        let mut gt = vec![0u8; n * chunks];
        let mut eq = vec![0u8; n * chunks];
        match self.party {
            Party::Client => {
                let masks = self.local_bits(2 * n * chunks);
                let mut msgs = Vec::with_capacity(n * chunks * CHUNK_K);
                for t in 0..n {
                    for j in 0..chunks {
                        let a = digit(cmp[t], j);
                        let (rg, re) = (masks[2 * (t * chunks + j)], masks[2 * (t * chunks + j) + 1]);
                        gt[t * chunks + j] = rg;
                        eq[t * chunks + j] = re;
                        for v in 0..CHUNK_K {
                            let g = u8::from(a > v) ^ rg;
                            let e = u8::from(a == v) ^ re;
                            msgs.push(u64::from(g | (e << 1)));
                        }
                    }
                }
                self.kot_send(ep, CHUNK_K, &msgs, 2)?;
            }
            Party::Server => {
                let idx: Vec<usize> = (0..n).flat_map(|t| (0..chunks).map(move |j| (t, j))).map(|(t, j)| digit(cmp[t], j)).collect();
                let got = self.kot_recv(ep, CHUNK_K, &idx, 2)?;
                for (k, v) in got.into_iter().enumerate() {
                    gt[k] = (v & 1) as u8;
                    eq[k] = (v >> 1) as u8;
                }
            }
        }

        // Merge adjacent chunks: gt = gt_hi ^ (eq_hi & gt_lo), eq = eq_hi & eq_lo.
        let mut width = chunks;
        let mut levels = Vec::new();
        while width > 1 {
            levels.push(width / 2);
            width = width.div_ceil(2);
        }
        let total: usize = levels.iter().map(|p| 2 * n * p).sum();
        let triples = self.bit_triples(ep, total)?;
        let mut used = 0;
        let mut width = chunks;
        for pairs in levels {
            let mut lhs = Vec::with_capacity(2 * n * pairs);
            let mut rhs = Vec::with_capacity(2 * n * pairs);
            for t in 0..n {
                for p in 0..pairs {
                    let (lo, hi) = (t * width + 2 * p, t * width + 2 * p + 1);
                    lhs.push(eq[hi]);
                    rhs.push(gt[lo]);
                    lhs.push(eq[hi]);
                    rhs.push(eq[lo]);
                }
            }
            let prod = self.and(ep, &lhs, &rhs, &triples, used)?;
            used += lhs.len();
            let next = width.div_ceil(2);
            let mut ngt = vec![0u8; n * next];
            let mut neq = vec![0u8; n * next];
            for t in 0..n {
                for p in 0..pairs {
                    let hi = t * width + 2 * p + 1;
                    let k = 2 * (t * pairs + p);
                    ngt[t * next + p] = gt[hi] ^ prod[k];
                    neq[t * next + p] = prod[k + 1];
                }
                if width % 2 == 1 {
                    ngt[t * next + next - 1] = gt[t * width + width - 1];
                    neq[t * next + next - 1] = eq[t * width + width - 1];
                }
            }
            gt = ngt;
            eq = neq;
            width = next;
        }
        let flip = u8::from(self.party == Party::Client);
        Ok((0..n).map(|t| ring.msb(x[t]) ^ gt[t] ^ flip).collect())
    }

    /// Arithmetic shares of b*x for XOR-shared bits b and arithmetic shares x.
    pub fn mux(&mut self, ep: &mut Endpoint, bits: &[u8], x: &[u64]) -> Result<Vec<u64>> {
        if bits.len() != x.len() {
            return Err(Error::Contract("mux operand length mismatch".into()));
        }
        let ring = self.ring;
        let w = ring.bits();
        // (b0 ^ b1) * x_me = b_me*x_me + b_other*(1 - 2 b_me)*x_me, the second term via COT.
        let corr: Vec<u64> = bits
            .iter()
            .zip(x)
            .map(|(&b, &v)| if b == 1 { ring.neg(v) } else { v })
            .collect();
        let (sent, got) = match self.party {
            Party::Client => {
                let r = self.cot_send(ep, &corr, w)?;
                let s = self.cot_recv(ep, bits, w)?;
                (r, s)
            }
            Party::Server => {
                let s = self.cot_recv(ep, bits, w)?;
                let r = self.cot_send(ep, &corr, w)?;
                (r, s)
            }
        };
        Ok((0..x.len())
            .map(|k| {
                let own = if bits[k] == 1 { x[k] } else { 0 };
                ring.add(ring.sub(own, sent[k]), got[k])
            })
            .collect())
    }

    /// Shares of max(x, 0) together with the XOR-shared sign bits.
    pub fn relu(&mut self, ep: &mut Endpoint, x: &[u64]) -> Result<(Vec<u64>, Vec<u8>)> {
        let d = self.drelu(ep, x)?;
        let y = self.mux(ep, &d, x)?;
        Ok((y, d))
    }

    /// Max over consecutive groups of `window` shares via max(a, b) = b + relu(a - b).
    /// Inputs must satisfy |v| < 2^(l-2) so differences do not wrap.
    pub fn maxpool(&mut self, ep: &mut Endpoint, x: &[u64], window: usize) -> Result<Vec<u64>> {
        if window == 0 || !x.len().is_multiple_of(window) {
            return Err(Error::Contract(format!("{} values do not split into windows of {window}", x.len())));
        }
        let ring = self.ring;
        let groups = x.len() / window;
        let mut cur: Vec<Vec<u64>> = x.chunks(window).map(<[u64]>::to_vec).collect();
        let mut size = window;
        while size > 1 {
            let pairs = size / 2;
            let mut diff = Vec::with_capacity(groups * pairs);
            for g in &cur {
                for p in 0..pairs {
                    diff.push(ring.sub(g[2 * p], g[2 * p + 1]));
                }
            }
            let (r, _) = self.relu(ep, &diff)?;
            let next = size.div_ceil(2);
            for (gi, g) in cur.iter_mut().enumerate() {
                let mut ng = Vec::with_capacity(next);
                for p in 0..pairs {
                    ng.push(ring.add(g[2 * p + 1], r[gi * pairs + p]));
                }
                if size % 2 == 1 {
                    ng.push(g[size - 1]);
                }
                *g = ng;
            }
            size = next;
        }
        Ok(cur.into_iter().map(|g| g[0]).collect())
    }
}
