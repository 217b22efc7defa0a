//! RLWE encryption over the negacyclic ring with one multiplicative level, plus a transparent
//! backend with the same operation semantics.
//!
//! Encoding is BGV-form: a ciphertext (c0, c1) decrypts as c0 + c1*s = m + t*e (mod q), so the
//! ciphertext product is an ordinary ring product and q needs only two limbs.

mod meter;

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use meter::{HeOp, MeterRow, MeterSnapshot, OpMeter};

use crate::error::{Error, Result};
use crate::ring::{ntt_primes, NttElem, RingElem, RingParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Ciphertexts carry the payload in the clear; used as a protocol-logic oracle.
    Clear,
    Rlwe,
}

impl Backend {
    pub fn tag(self) -> u8 {
        match self {
            Backend::Clear => 0,
            Backend::Rlwe => 1,
        }
    }

    pub fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Backend::Clear),
            1 => Ok(Backend::Rlwe),
            _ => Err(Error::decode(format!("unknown backend tag {t}"))),
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(Backend::Clear),
            "rlwe" => Ok(Backend::Rlwe),
            _ => Err(Error::Params(format!("unknown backend {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HeParams {
    backend: Backend,
    cipher: RingParams,
    plain: RingParams,
    noise_stddev: f64,
    decomp_bits: u32,
}

fn log2_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (1.0 + (lo - hi).exp2()).log2()
}

impl HeParams {
    pub const DEFAULT_N: usize = 4096;
    pub const CIPHER_LIMB_BITS: u32 = 55;
    pub const PLAIN_BITS: u32 = 37;

    pub fn new(
        backend: Backend,
        n: usize,
        cipher_moduli: &[u64],
        plain_modulus: u64,
        noise_stddev: f64,
        decomp_bits: u32,
    ) -> Result<Self> {
        let cipher = RingParams::with_ntt(n, cipher_moduli)?;
        let plain = RingParams::with_ntt(n, &[plain_modulus])?;
        if !(1..=32).contains(&decomp_bits) {
            return Err(Error::Params(format!("decomposition base 2^{decomp_bits} out of range")));
        }
        if !(noise_stddev.is_finite() && noise_stddev > 0.0) {
            return Err(Error::Params("noise stddev must be positive".into()));
        }
        for m in cipher.moduli() {
            if m.value() <= plain_modulus || m.value() % plain_modulus == 0 {
                return Err(Error::Params("plain modulus must be smaller than and coprime to q".into()));
            }
        }
        let p = HeParams { backend, cipher, plain, noise_stddev, decomp_bits };
        let fresh = p.rlwe_fresh_bits();
        let worst = log2_add(p.rlwe_mul_bits(fresh, fresh), p.rlwe_relin_bits());
        let worst = log2_add(worst, worst + 3.0);
        if worst >= p.noise_limit_bits() {
            return Err(Error::Params(format!(
                "incompatible ring/plain moduli: one multiplication needs 2^{worst:.1}, budget 2^{:.1}",
                p.noise_limit_bits()
            )));
        }
        Ok(p)
    }

    /// Two ~55-bit ciphertext limbs, a ~37-bit plaintext prime, sigma 3.2, base 2^16.
    pub fn with_backend(backend: Backend, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 16 {
            return Err(Error::Params(format!("ring degree {n} must be a power of two >= 16")));
        }
        let q = ntt_primes(Self::CIPHER_LIMB_BITS, n, 2);
        let t = ntt_primes(Self::PLAIN_BITS, n, 1);
        Self::new(backend, n, &q, t[0], 3.2, 16)
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn n(&self) -> usize {
        self.cipher.n()
    }

    pub fn cipher_ring(&self) -> &RingParams {
        &self.cipher
    }

    pub fn plain_ring(&self) -> &RingParams {
        &self.plain
    }

    pub fn plain_modulus(&self) -> u64 {
        self.plain.moduli()[0].value()
    }

    pub fn noise_stddev(&self) -> f64 {
        self.noise_stddev
    }

    pub fn decomp_bits(&self) -> u32 {
        self.decomp_bits
    }

    /// Ring that ciphertext parts live in for this backend.
    pub fn ct_ring(&self) -> &RingParams {
        match self.backend {
            Backend::Clear => &self.plain,
            Backend::Rlwe => &self.cipher,
        }
    }

    pub fn decomp_digits(&self) -> usize {
        let bits = 128 - self.cipher.modulus().leading_zeros();
        bits.div_ceil(self.decomp_bits) as usize
    }

    /// Decryption is correct while |m + t e| < q/2.
    pub fn noise_limit_bits(&self) -> f64 {
        self.cipher.log2_modulus() - 1.0
    }

    fn tail(&self) -> f64 {
        6.0 * self.noise_stddev
    }

    fn rlwe_fresh_bits(&self) -> f64 {
        let n = self.n() as f64;
        let t = self.plain_modulus() as f64;
        // e*u + e2*s: each a sum of ~2N/3 nonzero products of Gaussian and ternary terms.
        let eu = self.tail() * (2.0 * n / 3.0).sqrt();
        (t / 2.0 + t * (2.0 * eu + self.tail())).log2()
    }

    fn rlwe_mul_bits(&self, a: f64, b: f64) -> f64 {
        a + b + 0.5 * (self.n() as f64).log2() + 1.0
    }

    fn rlwe_relin_bits(&self) -> f64 {
        let n = self.n() as f64;
        let t = self.plain_modulus() as f64;
        let digits = self.decomp_digits() as f64;
        (t * (self.decomp_bits as f64).exp2() * self.tail() * (n * digits).sqrt() * 2.0).log2()
    }

    pub fn fresh_noise_bits(&self) -> f64 {
        match self.backend {
            Backend::Clear => f64::NEG_INFINITY,
            Backend::Rlwe => self.rlwe_fresh_bits(),
        }
    }

    pub fn cp_mul_noise_bits(&self, a: f64) -> f64 {
        match self.backend {
            Backend::Clear => f64::NEG_INFINITY,
            Backend::Rlwe => self.rlwe_mul_bits(a, (self.plain_modulus() as f64 / 2.0).log2()),
        }
    }

    pub fn tensor_noise_bits(&self, a: f64, b: f64) -> f64 {
        match self.backend {
            Backend::Clear => f64::NEG_INFINITY,
            Backend::Rlwe => self.rlwe_mul_bits(a, b),
        }
    }

    pub fn cc_mul_noise_bits(&self, a: f64, b: f64) -> f64 {
        match self.backend {
            Backend::Clear => f64::NEG_INFINITY,
            Backend::Rlwe => log2_add(self.rlwe_mul_bits(a, b), self.rlwe_relin_bits()),
        }
    }

    pub fn add_noise_bits(&self, a: f64, b: f64) -> f64 {
        log2_add(a, b)
    }
}

/// A 2- or 3-part ciphertext. The noise estimate is local bookkeeping, never serialized.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    parts: Vec<RingElem>,
    noise_bits: f64,
    backend: Backend,
}

impl Ciphertext {
    pub fn parts(&self) -> &[RingElem] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn noise_bits(&self) -> f64 {
        self.noise_bits
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn byte_len(params: &HeParams, parts: usize) -> usize {
        1 + parts * RingElem::byte_len(params.ct_ring())
    }

    /// Part count (u8), then each part in ring serialization.
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.push(self.parts.len() as u8);
        for p in &self.parts {
            p.write_bytes(out);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_bytes(&mut v);
        v
    }

    /// Parse a ciphertext; the receiver supplies the noise estimate it can vouch for.
    pub fn read_bytes(params: &HeParams, bytes: &[u8], noise_bits: f64) -> Result<(Ciphertext, usize)> {
        let count = *bytes.first().ok_or_else(|| Error::decode("empty ciphertext"))? as usize;
        if !(2..=3).contains(&count) {
            return Err(Error::decode(format!("ciphertext with {count} parts")));
        }
        let mut off = 1;
        let mut parts = Vec::with_capacity(count);
        for _ in 0..count {
            let (e, used) = RingElem::read_bytes(params.ct_ring(), &bytes[off..])?;
            parts.push(e);
            off += used;
        }
        Ok((Ciphertext { parts, noise_bits, backend: params.backend }, off))
    }
}

pub struct SecretKey {
    s: RingElem,
    s_ntt: NttElem,
}

impl SecretKey {
    /// Local serialization (for persistence and for scanning transcripts in tests).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.s.to_bytes()
    }
}

#[derive(Clone)]
pub struct PublicKey {
    b: RingElem,
    a: RingElem,
    b_ntt: NttElem,
    a_ntt: NttElem,
}

impl PublicKey {
    fn new(b: RingElem, a: RingElem) -> Result<Self> {
        Ok(PublicKey { b_ntt: b.ntt_forward()?, a_ntt: a.ntt_forward()?, b, a })
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        self.b.write_bytes(out);
        self.a.write_bytes(out);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_bytes(&mut v);
        v
    }

    pub fn read_bytes(params: &HeParams, bytes: &[u8]) -> Result<(Self, usize)> {
        let (b, u1) = RingElem::read_bytes(params.cipher_ring(), bytes)?;
        let (a, u2) = RingElem::read_bytes(params.cipher_ring(), &bytes[u1..])?;
        Ok((PublicKey::new(b, a)?, u1 + u2))
    }
}

#[derive(Clone)]
pub struct RelinKey {
    pairs: Vec<(RingElem, RingElem)>,
    ntt: Vec<(NttElem, NttElem)>,
}

impl RelinKey {
    fn new(pairs: Vec<(RingElem, RingElem)>) -> Result<Self> {
        let ntt = pairs
            .iter()
            .map(|(b, a)| Ok((b.ntt_forward()?, a.ntt_forward()?)))
            .collect::<Result<_>>()?;
        Ok(RelinKey { pairs, ntt })
    }

    pub fn digits(&self) -> usize {
        self.pairs.len()
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.push(self.pairs.len() as u8);
        for (b, a) in &self.pairs {
            b.write_bytes(out);
            a.write_bytes(out);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_bytes(&mut v);
        v
    }

    pub fn read_bytes(params: &HeParams, bytes: &[u8]) -> Result<(Self, usize)> {
        let count = *bytes.first().ok_or_else(|| Error::decode("empty relinearization key"))? as usize;
        if count != params.decomp_digits() {
            return Err(Error::decode(format!("relinearization key has {count} digits")));
        }
        let mut off = 1;
        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let (b, u1) = RingElem::read_bytes(params.cipher_ring(), &bytes[off..])?;
            off += u1;
            let (a, u2) = RingElem::read_bytes(params.cipher_ring(), &bytes[off..])?;
            off += u2;
            pairs.push((b, a));
        }
        Ok((RelinKey::new(pairs)?, off))
    }
}

pub struct KeySet {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub relin: RelinKey,
}

impl KeySet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = self.secret.to_bytes();
        self.public.write_bytes(&mut v);
        self.relin.write_bytes(&mut v);
        v
    }
}

fn sample_ternary(params: &RingParams, rng: &mut impl Rng) -> Result<RingElem> {
    let v: Vec<i64> = (0..params.n()).map(|_| rng.random_range(-1..=1)).collect();
    RingElem::from_i64(params, &v)
}

fn sample_gaussian(params: &RingParams, sigma: f64, scale: i64, rng: &mut impl Rng) -> Result<RingElem> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Params(e.to_string()))?;
    let bound = (6.0 * sigma).ceil();
    let v: Vec<i64> = (0..params.n())
        .map(|_| loop {
            let x: f64 = normal.sample(rng).round();
            if x.abs() <= bound {
                break x as i64 * scale;
            }
        })
        .collect();
    RingElem::from_i64(params, &v)
}

fn sample_uniform(params: &RingParams, rng: &mut impl Rng) -> Result<RingElem> {
    let limbs = params
        .moduli()
        .iter()
        .map(|m| (0..params.n()).map(|_| rng.random_range(0..m.value())).collect())
        .collect();
    RingElem::from_limbs(params, limbs)
}

/// Deterministic key generation from a seed.
pub fn keygen(params: &HeParams, seed: u64) -> Result<KeySet> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let q = params.cipher_ring();
    let t = params.plain_modulus() as i64;
    let s = sample_ternary(q, &mut rng)?;
    let s_ntt = s.ntt_forward()?;
    let s2 = s_ntt.mul(&s_ntt)?.inverse();

    let a = sample_uniform(q, &mut rng)?;
    let e = sample_gaussian(q, params.noise_stddev, t, &mut rng)?;
    let b = e.sub(&a.ntt_forward()?.mul(&s_ntt)?.inverse())?;
    let public = PublicKey::new(b, a)?;

    let mut pairs = Vec::with_capacity(params.decomp_digits());
    for j in 0..params.decomp_digits() {
        let a_j = sample_uniform(q, &mut rng)?;
        let e_j = sample_gaussian(q, params.noise_stddev, t, &mut rng)?;
        let shift = 1u128 << (params.decomp_bits as usize * j);
        let b_j = e_j.sub(&a_j.ntt_forward()?.mul(&s_ntt)?.inverse())?.add(&s2.mul_scalar(shift))?;
        pairs.push((b_j, a_j));
    }
    Ok(KeySet { secret: SecretKey { s, s_ntt }, public, relin: RelinKey::new(pairs)? })
}

/// Ciphertext held in the evaluation domain, for chains of products and sums.
#[derive(Clone, Debug)]
pub struct PreparedCt {
    parts: Vec<NttElem>,
    noise_bits: f64,
}

impl PreparedCt {
    pub fn noise_bits(&self) -> f64 {
        self.noise_bits
    }
}

/// Plaintext lifted to the ciphertext ring and transformed.
#[derive(Clone, Debug)]
pub struct PreparedPt {
    ntt: NttElem,
}

/// Operation front end: enforces part-count contracts, tracks noise, feeds the meter.
#[derive(Clone)]
pub struct HeContext {
    params: HeParams,
    meter: Arc<OpMeter>,
}

impl HeContext {
    pub fn new(params: HeParams, meter: Arc<OpMeter>) -> Self {
        HeContext { params, meter }
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn meter(&self) -> &Arc<OpMeter> {
        &self.meter
    }

    fn check_plain(&self, m: &RingElem) -> Result<()> {
        if m.params() != self.params.plain_ring() {
            return Err(Error::ParamsMismatch);
        }
        Ok(())
    }

    fn check_ct(&self, c: &Ciphertext, parts: &[usize]) -> Result<()> {
        if c.backend != self.params.backend {
            return Err(Error::Backend(format!("{:?} ciphertext on {:?} context", c.backend, self.params.backend)));
        }
        if !parts.contains(&c.parts.len()) {
            return Err(Error::Contract(format!(
                "ciphertext has {} parts, operation accepts {parts:?}",
                c.parts.len()
            )));
        }
        if c.parts.iter().any(|p| p.params() != self.params.ct_ring()) {
            return Err(Error::ParamsMismatch);
        }
        Ok(())
    }

    /// Plaintext coefficients lifted to their centered representatives in the ciphertext ring.
    fn lift(&self, m: &RingElem) -> Result<RingElem> {
        let t = self.params.plain.moduli()[0];
        let centered: Vec<i64> = m.limb(0).iter().map(|&c| t.center(c)).collect();
        RingElem::from_i64(&self.params.cipher, &centered)
    }

    pub fn encrypt(&self, m: &RingElem, pk: &PublicKey, rng: &mut impl RngCore) -> Result<Ciphertext> {
        self.check_plain(m)?;
        let start = Instant::now();
        let ct = match self.params.backend {
            Backend::Clear => Ciphertext {
                parts: vec![m.clone(), RingElem::zero(&self.params.plain)],
                noise_bits: f64::NEG_INFINITY,
                backend: Backend::Clear,
            },
            Backend::Rlwe => {
                let q = &self.params.cipher;
                let t = self.params.plain_modulus() as i64;
                let u = sample_ternary(q, rng)?.ntt_forward()?;
                let e1 = sample_gaussian(q, self.params.noise_stddev, t, rng)?;
                let e2 = sample_gaussian(q, self.params.noise_stddev, t, rng)?;
                let mut c0 = pk.b_ntt.mul(&u)?.inverse();
                c0.add_assign(&e1)?;
                c0.add_assign(&self.lift(m)?)?;
                let mut c1 = pk.a_ntt.mul(&u)?.inverse();
                c1.add_assign(&e2)?;
                Ciphertext { parts: vec![c0, c1], noise_bits: self.params.fresh_noise_bits(), backend: Backend::Rlwe }
            }
        };
        self.meter.record(HeOp::Enc, start.elapsed());
        Ok(ct)
    }

    pub fn decrypt(&self, c: &Ciphertext, sk: &SecretKey) -> Result<RingElem> {
        self.check_ct(c, &[2, 3])?;
        let start = Instant::now();
        let out = match self.params.backend {
            Backend::Clear => c.parts[0].clone(),
            Backend::Rlwe => {
                let limit = self.params.noise_limit_bits();
                if c.noise_bits >= limit {
                    return Err(Error::NoiseBudget { estimate_bits: c.noise_bits, limit_bits: limit });
                }
                let mut acc = c.parts[1].ntt_forward()?.mul(&sk.s_ntt)?;
                if c.parts.len() == 3 {
                    let s2 = sk.s_ntt.mul(&sk.s_ntt)?;
                    acc.add_assign(&c.parts[2].ntt_forward()?.mul(&s2)?)?;
                }
                let mut v = acc.inverse();
                v.add_assign(&c.parts[0])?;
                let t = self.params.plain_modulus() as i128;
                let coeffs: Vec<u64> = v.centered().iter().map(|&x| x.rem_euclid(t) as u64).collect();
                RingElem::from_u64(&self.params.plain, &coeffs)?
            }
        };
        self.meter.record(HeOp::Dec, start.elapsed());
        Ok(out)
    }

    /// Measured log2 of |c0 + c1 s (+ c2 s^2)|_inf, i.e. the quantity the estimate bounds.
    pub fn measured_noise_bits(&self, c: &Ciphertext, sk: &SecretKey) -> Result<f64> {
        self.check_ct(c, &[2, 3])?;
        if self.params.backend == Backend::Clear {
            return Ok(f64::NEG_INFINITY);
        }
        let mut acc = c.parts[1].ntt_forward()?.mul(&sk.s_ntt)?;
        if c.parts.len() == 3 {
            acc.add_assign(&c.parts[2].ntt_forward()?.mul(&sk.s_ntt.mul(&sk.s_ntt)?)?)?;
        }
        let mut v = acc.inverse();
        v.add_assign(&c.parts[0])?;
        let max = v.centered().iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
        Ok((max as f64).log2())
    }

    pub fn prepare(&self, c: &Ciphertext) -> Result<PreparedCt> {
        self.check_ct(c, &[2])?;
        Ok(PreparedCt {
            parts: c.parts.iter().map(|p| p.ntt_forward()).collect::<Result<_>>()?,
            noise_bits: c.noise_bits,
        })
    }

    pub fn prepare_plain(&self, pt: &RingElem) -> Result<PreparedPt> {
        self.check_plain(pt)?;
        let ntt = match self.params.backend {
            Backend::Clear => pt.ntt_forward()?,
            Backend::Rlwe => self.lift(pt)?.ntt_forward()?,
        };
        Ok(PreparedPt { ntt })
    }

    pub fn finish(&self, c: &PreparedCt) -> Ciphertext {
        Ciphertext {
            parts: c.parts.iter().map(|p| p.inverse()).collect(),
            noise_bits: c.noise_bits,
            backend: self.params.backend,
        }
    }

    fn cp_mul_raw(&self, c: &PreparedCt, pt: &PreparedPt) -> Result<PreparedCt> {
        Ok(PreparedCt {
            parts: c.parts.iter().map(|p| p.mul(&pt.ntt)).collect::<Result<_>>()?,
            noise_bits: self.params.cp_mul_noise_bits(c.noise_bits),
        })
    }

    /// CPMul on evaluation-domain operands.
    pub fn cp_mul_prepared(&self, c: &PreparedCt, pt: &PreparedPt) -> Result<PreparedCt> {
        if c.parts.len() != 2 {
            return Err(Error::Contract("CPMul needs a 2-part ciphertext".into()));
        }
        let start = Instant::now();
        let out = self.cp_mul_raw(c, pt)?;
        self.meter.record(HeOp::CpMul, start.elapsed());
        Ok(out)
    }

    pub fn cp_mul(&self, c: &Ciphertext, pt: &RingElem) -> Result<Ciphertext> {
        self.check_ct(c, &[2])?;
        self.check_plain(pt)?;
        let start = Instant::now();
        let out = self.finish(&self.cp_mul_raw(&self.prepare(c)?, &self.prepare_plain(pt)?)?);
        self.meter.record(HeOp::CpMul, start.elapsed());
        Ok(out)
    }

    /// Evaluation-domain tensor (d0, d1, d2).
    fn tensor_raw(&self, a: &PreparedCt, b: &PreparedCt) -> Result<[NttElem; 3]> {
        let d0 = a.parts[0].mul(&b.parts[0])?;
        let mut d1 = a.parts[0].mul(&b.parts[1])?;
        d1.add_mul(&a.parts[1], &b.parts[0])?;
        let d2 = a.parts[1].mul(&b.parts[1])?;
        Ok([d0, d1, d2])
    }

    /// Key-switch d2 into (d0, d1), all in the evaluation domain.
    fn relin_raw(&self, d: [NttElem; 3], rk: &RelinKey) -> Result<[RingElem; 2]> {
        let [mut d0, mut d1, d2] = d;
        match self.params.backend {
            Backend::Clear => Ok([d0.inverse(), d1.inverse()]),
            Backend::Rlwe => {
                let q = &self.params.cipher;
                if rk.ntt.len() != self.params.decomp_digits() {
                    return Err(Error::Params("relinearization key does not match parameters".into()));
                }
                let c2 = d2.inverse().coeffs();
                let w = self.params.decomp_bits;
                let mask = (1u128 << w) - 1;
                let mut digit = vec![0u64; q.n()];
                for (j, (rb, ra)) in rk.ntt.iter().enumerate() {
                    for (dst, &v) in digit.iter_mut().zip(&c2) {
                        *dst = ((v >> (w as usize * j)) & mask) as u64;
                    }
                    let dj = RingElem::from_u64(q, &digit)?.ntt_forward()?;
                    d0.add_mul(&dj, rb)?;
                    d1.add_mul(&dj, ra)?;
                }
                Ok([d0.inverse(), d1.inverse()])
            }
        }
    }

    /// CCMul of evaluation-domain operands, relinearized back to two parts.
    pub fn cc_mul_prepared(&self, a: &PreparedCt, b: &PreparedCt, rk: &RelinKey) -> Result<Ciphertext> {
        if a.parts.len() != 2 || b.parts.len() != 2 {
            return Err(Error::Contract("CCMul needs 2-part ciphertexts".into()));
        }
        let start = Instant::now();
        let d = self.tensor_raw(a, b)?;
        let mid = Instant::now();
        self.meter.record(HeOp::CcMul, mid - start);
        let [c0, c1] = self.relin_raw(d, rk)?;
        self.meter.record(HeOp::Relin, mid.elapsed());
        Ok(Ciphertext {
            parts: vec![c0, c1],
            noise_bits: self.params.cc_mul_noise_bits(a.noise_bits, b.noise_bits),
            backend: self.params.backend,
        })
    }

    pub fn cc_mul(&self, a: &Ciphertext, b: &Ciphertext, rk: &RelinKey) -> Result<Ciphertext> {
        self.check_ct(a, &[2])?;
        self.check_ct(b, &[2])?;
        let start = Instant::now();
        let (pa, pb) = (self.prepare(a)?, self.prepare(b)?);
        let d = self.tensor_raw(&pa, &pb)?;
        let mid = Instant::now();
        self.meter.record(HeOp::CcMul, mid - start);
        let [c0, c1] = self.relin_raw(d, rk)?;
        self.meter.record(HeOp::Relin, mid.elapsed());
        Ok(Ciphertext {
            parts: vec![c0, c1],
            noise_bits: self.params.cc_mul_noise_bits(a.noise_bits, b.noise_bits),
            backend: self.params.backend,
        })
    }

    /// Unrelinearized product: three parts, decryptable under (1, s, s^2).
    pub fn tensor(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_ct(a, &[2])?;
        self.check_ct(b, &[2])?;
        let start = Instant::now();
        let d = self.tensor_raw(&self.prepare(a)?, &self.prepare(b)?)?;
        let out = Ciphertext {
            parts: d.iter().map(|p| p.inverse()).collect(),
            noise_bits: self.params.tensor_noise_bits(a.noise_bits, b.noise_bits),
            backend: self.params.backend,
        };
        self.meter.record(HeOp::CcMul, start.elapsed());
        Ok(out)
    }

    pub fn relinearize(&self, c: &Ciphertext, rk: &RelinKey) -> Result<Ciphertext> {
        self.check_ct(c, &[3])?;
        let start = Instant::now();
        let d = [c.parts[0].ntt_forward()?, c.parts[1].ntt_forward()?, c.parts[2].ntt_forward()?];
        let [c0, c1] = self.relin_raw(d, rk)?;
        let noise = match self.params.backend {
            Backend::Clear => f64::NEG_INFINITY,
            Backend::Rlwe => log2_add(c.noise_bits, self.params.rlwe_relin_bits()),
        };
        self.meter.record(HeOp::Relin, start.elapsed());
        Ok(Ciphertext { parts: vec![c0, c1], noise_bits: noise, backend: self.params.backend })
    }

    pub fn cc_add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_ct(a, &[2, 3])?;
        self.check_ct(b, &[2, 3])?;
        if a.parts.len() != b.parts.len() {
            return Err(Error::PartCount(a.parts.len(), b.parts.len()));
        }
        let start = Instant::now();
        let parts = a.parts.iter().zip(&b.parts).map(|(x, y)| x.add(y)).collect::<Result<_>>()?;
        self.meter.record(HeOp::CcAdd, start.elapsed());
        Ok(Ciphertext {
            parts,
            noise_bits: self.params.add_noise_bits(a.noise_bits, b.noise_bits),
            backend: self.params.backend,
        })
    }

    pub fn cc_add_prepared(&self, acc: &mut PreparedCt, b: &PreparedCt) -> Result<()> {
        if acc.parts.len() != b.parts.len() {
            return Err(Error::PartCount(acc.parts.len(), b.parts.len()));
        }
        let start = Instant::now();
        for (x, y) in acc.parts.iter_mut().zip(&b.parts) {
            x.add_assign(y)?;
        }
        acc.noise_bits = self.params.add_noise_bits(acc.noise_bits, b.noise_bits);
        self.meter.record(HeOp::CcAdd, start.elapsed());
        Ok(())
    }

    pub fn pp_mul(&self, a: &RingElem, b: &RingElem) -> Result<RingElem> {
        self.check_plain(a)?;
        self.check_plain(b)?;
        let start = Instant::now();
        let out = a.mul(b)?;
        self.meter.record(HeOp::PpMul, start.elapsed());
        Ok(out)
    }
}
