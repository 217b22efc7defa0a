//! Correlated 1-of-2 OT and 1-of-k OT, derandomized from dealer-supplied random OTs.
//!
//! Message volumes follow an OT-extension deployment: the receiver's first message carries
//! 16 bytes per COT (32 per k-OT) of extension material alongside its masked choices. That
//! material is drawn from the receiver's own PRG and only affects byte accounting.

use rand::{Rng, RngCore};

use super::{mask, Mpc};
use crate::error::{Error, Result};
use crate::transport::wire::{pack_bits, unpack_bits, Reader};
use crate::transport::Endpoint;

pub(crate) const COT_EXT_BYTES: usize = 16;
pub(crate) const KOT_EXT_BYTES: usize = 32;

fn index_bits(k: usize) -> u32 {
    (usize::BITS - (k - 1).leading_zeros()).max(1)
}

impl Mpc {
    /// Random-OT pairs for a COT batch; both parties draw identically.
    fn rot_pairs(&mut self, n: usize, width: u32) -> Vec<(u64, u64, u8)> {
        let m = mask(width);
        (0..n)
            .map(|_| {
                let a0 = self.dealer.next_u64() & m;
                let a1 = self.dealer.next_u64() & m;
                let c = (self.dealer.next_u32() & 1) as u8;
                (a0, a1, c)
            })
            .collect()
    }

    fn rot_k(&mut self, n: usize, k: usize, width: u32) -> (Vec<u64>, Vec<usize>) {
        let m = mask(width);
        let mut pads = Vec::with_capacity(n * k);
        let mut choice = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..k {
                pads.push(self.dealer.next_u64() & m);
            }
            choice.push(self.dealer.random_range(0..k));
        }
        (pads, choice)
    }

    fn filler(&mut self, len: usize) -> Vec<u8> {
        let mut f = vec![0u8; len];
        self.filler.fill_bytes(&mut f);
        f
    }

    /// COT sender with correlations `x`; returns random `r` such that the receiver holds
    /// `r + i*x` (mod 2^width).
    pub fn cot_send(&mut self, ep: &mut Endpoint, x: &[u64], width: u32) -> Result<Vec<u64>> {
        let n = x.len();
        let m = mask(width);
        let rot = self.rot_pairs(n, width);
        let msg = ep.recv(self.phase)?;
        let mut r = Reader::new(&msg);
        self.check_header(&mut r, n)?;
        let d = unpack_bits(r.blob()?, 1, n)?;
        if r.blob()?.len() != n * COT_EXT_BYTES {
            return Err(Error::decode("COT extension block has the wrong size"));
        }
        r.finish()?;
        let mut out = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for k in 0..n {
            let (a0, a1, _) = rot[k];
            let (b0, b1) = if d[k] == 0 { (a0, a1) } else { (a1, a0) };
            out.push(b0);
            ys.push(b0.wrapping_add(x[k]).wrapping_sub(b1) & m);
        }
        let mut w = self.header(n);
        w.blob(&pack_bits(&ys, width));
        ep.send(self.phase, &w.finish())?;
        self.counter += 1;
        Ok(out)
    }

    /// COT receiver with choice bits `i`; returns `r + i*x`.
    pub fn cot_recv(&mut self, ep: &mut Endpoint, choice: &[u8], width: u32) -> Result<Vec<u64>> {
        let n = choice.len();
        let m = mask(width);
        let rot = self.rot_pairs(n, width);
        let d: Vec<u64> = choice.iter().zip(&rot).map(|(&i, &(_, _, c))| u64::from((i & 1) ^ c)).collect();
        let mut w = self.header(n);
        w.blob(&pack_bits(&d, 1));
        let ext = self.filler(n * COT_EXT_BYTES);
        w.blob(&ext);
        ep.send(self.phase, &w.finish())?;
        let msg = ep.recv(self.phase)?;
        let mut r = Reader::new(&msg);
        self.check_header(&mut r, n)?;
        let ys = unpack_bits(r.blob()?, width, n)?;
        r.finish()?;
        self.counter += 1;
        Ok(choice
            .iter()
            .zip(&rot)
            .zip(&ys)
            .map(|((&i, &(a0, a1, c)), &y)| {
                let held = if c == 0 { a0 } else { a1 };
                if i & 1 == 1 {
                    held.wrapping_add(y) & m
                } else {
                    held
                }
            })
            .collect())
    }

    /// 1-of-k OT sender; `msgs` holds `k` messages of `width` bits per instance.
    pub fn kot_send(&mut self, ep: &mut Endpoint, k: usize, msgs: &[u64], width: u32) -> Result<()> {
        if k < 2 || !msgs.len().is_multiple_of(k) {
            return Err(Error::Params(format!("k-OT with k={k} and {} messages", msgs.len())));
        }
        let n = msgs.len() / k;
        let (pads, _) = self.rot_k(n, k, width);
        let msg = ep.recv(self.phase)?;
        let mut r = Reader::new(&msg);
        self.check_header(&mut r, n)?;
        let e = unpack_bits(r.blob()?, index_bits(k), n)?;
        if r.blob()?.len() != n * KOT_EXT_BYTES {
            return Err(Error::decode("k-OT extension block has the wrong size"));
        }
        r.finish()?;
        let mut ys = Vec::with_capacity(n * k);
        for (t, &shift) in e.iter().enumerate() {
            let shift = shift as usize;
            if shift >= k {
                return Err(Error::IndexOutOfRange { index: shift, k });
            }
            for j in 0..k {
                ys.push(msgs[t * k + (j + shift) % k] ^ pads[t * k + j]);
            }
        }
        let mut w = self.header(n);
        w.blob(&pack_bits(&ys, width));
        ep.send(self.phase, &w.finish())?;
        self.counter += 1;
        Ok(())
    }

    /// 1-of-k OT receiver; returns message `idx[t]` of each instance.
    pub fn kot_recv(&mut self, ep: &mut Endpoint, k: usize, idx: &[usize], width: u32) -> Result<Vec<u64>> {
        if k < 2 {
            return Err(Error::Params(format!("k-OT with k={k}")));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= k) {
            return Err(Error::IndexOutOfRange { index: bad, k });
        }
        let n = idx.len();
        let (pads, choice) = self.rot_k(n, k, width);
        let e: Vec<u64> = idx.iter().zip(&choice).map(|(&i, &c)| ((i + k - c) % k) as u64).collect();
        let mut w = self.header(n);
        w.blob(&pack_bits(&e, index_bits(k)));
        let ext = self.filler(n * KOT_EXT_BYTES);
        w.blob(&ext);
        ep.send(self.phase, &w.finish())?;
        let msg = ep.recv(self.phase)?;
        let mut r = Reader::new(&msg);
        self.check_header(&mut r, n)?;
        let ys = unpack_bits(r.blob()?, width, n * k)?;
        r.finish()?;
        self.counter += 1;
        Ok(choice.iter().enumerate().map(|(t, &c)| ys[t * k + c] ^ pads[t * k + c]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_width() {
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(16), 4);
        assert_eq!(index_bits(17), 5);
    }
}
