//! Two-party arithmetic over Z_{2^l}: additive sharing, OT and the OT-based nonlinear layers.
//!
//! Party 0 is the client and party 1 the server. Every protocol method is called by both
//! parties with their own shares, in the same order.

mod nonlinear;
mod ot;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::{ChaCha12Rng, ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::wire::{Reader, Writer};
use crate::transport::{Endpoint, Phase};

pub use nonlinear::BitTriples;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Client,
    Server,
}

impl Party {
    pub fn index(self) -> u8 {
        match self {
            Party::Client => 0,
            Party::Server => 1,
        }
    }

    pub fn other(self) -> Party {
        match self {
            Party::Client => Party::Server,
            Party::Server => Party::Client,
        }
    }
}

/// The ring Z_{2^bits}, values held in the low bits of a u64.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ring2k {
    bits: u32,
}

impl Ring2k {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=64).contains(&bits) {
            return Err(Error::Params(format!("bitwidth {bits} outside 1..=64")));
        }
        Ok(Ring2k { bits })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn mask(self) -> u64 {
        mask(self.bits)
    }

    #[inline]
    pub fn reduce(self, v: u64) -> u64 {
        v & self.mask()
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b) & self.mask()
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        a.wrapping_sub(b) & self.mask()
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        a.wrapping_neg() & self.mask()
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        a.wrapping_mul(b) & self.mask()
    }

    /// Two's-complement encoding of a signed value.
    #[inline]
    pub fn encode(self, v: i64) -> u64 {
        (v as u64) & self.mask()
    }

    /// Signed interpretation in [-2^(l-1), 2^(l-1)).
    #[inline]
    pub fn decode(self, v: u64) -> i64 {
        let shift = 64 - self.bits;
        ((v << shift) as i64) >> shift
    }

    #[inline]
    pub fn msb(self, v: u64) -> u8 {
        ((v >> (self.bits - 1)) & 1) as u8
    }
}

#[inline]
pub(crate) fn mask(bits: u32) -> u64 {
    if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub value: u64,
    pub party: Party,
    pub bits: u32,
}

pub fn share(x: u64, ring: Ring2k, rng: &mut impl RngCore) -> (Share, Share) {
    let s0 = ring.reduce(rng.next_u64());
    let s1 = ring.sub(x, s0);
    (
        Share { value: s0, party: Party::Client, bits: ring.bits() },
        Share { value: s1, party: Party::Server, bits: ring.bits() },
    )
}

pub fn reconstruct(a: Share, b: Share) -> Result<u64> {
    if a.bits != b.bits {
        return Err(Error::Bitwidth(a.bits, b.bits));
    }
    if a.party == b.party {
        return Err(Error::Contract("both shares belong to the same party".into()));
    }
    Ok(a.value.wrapping_add(b.value) & mask(a.bits))
}

/// Share a vector: (client shares, server shares).
pub fn share_vec(xs: &[u64], ring: Ring2k, rng: &mut impl RngCore) -> (Vec<u64>, Vec<u64>) {
    xs.iter().map(|&x| {
        let (a, b) = share(x, ring, rng);
        (a.value, b.value)
    }).unzip()
}

pub fn reconstruct_vec(a: &[u64], b: &[u64], ring: Ring2k) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| ring.add(x, y)).collect()
}

/// Per-party protocol state: the OT correlation stream, local randomness and the invocation
/// counter that detects the two parties falling out of step.
pub struct Mpc {
    party: Party,
    ring: Ring2k,
    dealer: ChaCha12Rng,
    local: ChaCha20Rng,
    filler: ChaCha8Rng,
    counter: u64,
    phase: Phase,
}

impl Mpc {
    /// `dealer_seed` must be shared by both parties; `local_seed` is private.
    pub fn new(party: Party, bits: u32, dealer_seed: u64, local_seed: u64) -> Result<Self> {
        if bits < 2 {
            return Err(Error::Params("comparison needs at least 2 bits".into()));
        }
        let mut local = ChaCha20Rng::seed_from_u64(local_seed);
        let filler = ChaCha8Rng::seed_from_u64(local.random());
        Ok(Mpc {
            party,
            ring: Ring2k::new(bits)?,
            dealer: ChaCha12Rng::seed_from_u64(dealer_seed),
            local,
            filler,
            counter: 0,
            phase: Phase::Nonlinear,
        })
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn ring(&self) -> Ring2k {
        self.ring
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.local
    }

    fn header(&self, n: usize) -> Writer {
        let mut w = Writer::new();
        w.u64(self.counter).u32(n as u32);
        w
    }

    fn check_header(&self, r: &mut Reader<'_>, n: usize) -> Result<()> {
        let got = r.u64()?;
        if got != self.counter {
            return Err(Error::Desync { expected: self.counter, got });
        }
        let count = r.u32()? as usize;
        if count != n {
            return Err(Error::decode(format!("batch of {count}, expected {n}")));
        }
        Ok(())
    }

    /// Symmetric exchange: the client speaks first so socket buffers never fill on both sides.
    fn exchange(&mut self, ep: &mut Endpoint, n: usize, payload: &[u8]) -> Result<Vec<u8>> {
        let mut w = self.header(n);
        w.blob(payload);
        let msg = w.finish();
        let reply = match self.party {
            Party::Client => {
                ep.send(self.phase, &msg)?;
                ep.recv(self.phase)?
            }
            Party::Server => {
                let r = ep.recv(self.phase)?;
                ep.send(self.phase, &msg)?;
                r
            }
        };
        let mut r = Reader::new(&reply);
        self.check_header(&mut r, n)?;
        let body = r.blob()?.to_vec();
        r.finish()?;
        self.counter += 1;
        Ok(body)
    }

    fn local_bits(&mut self, n: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let w = self.local.next_u64();
            for b in 0..64.min(n - out.len()) {
                out.push(((w >> b) & 1) as u8);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn share_example() {
        let r = Ring2k::new(8).unwrap();
        let s0 = Share { value: 200, party: Party::Client, bits: 8 };
        let s1 = Share { value: r.sub(7, 200), party: Party::Server, bits: 8 };
        assert_eq!(s1.value, 63);
        assert_eq!(reconstruct(s0, s1).unwrap(), 7);
    }

    #[test]
    fn reconstruct_checks_bitwidth() {
        let a = Share { value: 1, party: Party::Client, bits: 8 };
        let b = Share { value: 1, party: Party::Server, bits: 16 };
        assert!(matches!(reconstruct(a, b), Err(Error::Bitwidth(8, 16))));
        assert!(reconstruct(a, Share { party: Party::Client, ..a }).is_err());
    }

    #[test]
    fn signed_codec() {
        let r = Ring2k::new(8).unwrap();
        assert_eq!(r.encode(-3), 253);
        assert_eq!(r.decode(253), -3);
        assert_eq!(r.decode(127), 127);
        assert_eq!(r.decode(128), -128);
        let r64 = Ring2k::new(64).unwrap();
        assert_eq!(r64.decode(r64.encode(i64::MIN)), i64::MIN);
    }
}
