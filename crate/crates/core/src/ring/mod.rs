//! Negacyclic polynomial ring Z_q[x]/(x^N + 1) with one or two word-sized RNS limbs.

mod modulus;
mod ntt;

use std::fmt;
use std::sync::Arc;

pub use modulus::{is_prime, ntt_primes, primitive_root_2n, Modulus};
pub use ntt::schoolbook_negacyclic;
use ntt::NttTables;

use crate::error::{Error, Result};

pub const MAX_LIMBS: usize = 2;

struct Inner {
    n: usize,
    moduli: Vec<Modulus>,
    product: u128,
    /// q0^{-1} mod q1 for two-limb CRT reconstruction.
    crt_inv: u64,
    ntt: Option<Vec<NttTables>>,
}

/// Ring degree and coefficient modulus. Cheap to clone.
#[derive(Clone)]
pub struct RingParams(Arc<Inner>);

impl RingParams {
    /// Build ring parameters. NTT tables are prepared when every limb is NTT-friendly.
    pub fn new(n: usize, moduli: &[u64]) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() || n > 1 << 17 {
            return Err(Error::Params(format!("ring degree {n} must be a power of two in [2, 2^17]")));
        }
        if moduli.is_empty() || moduli.len() > MAX_LIMBS {
            return Err(Error::Params(format!("need 1..={MAX_LIMBS} limbs, got {}", moduli.len())));
        }
        let ms = moduli
            .iter()
            .map(|&q| Modulus::new(q).ok_or_else(|| Error::Params(format!("modulus {q} out of range (1, 2^62)"))))
            .collect::<Result<Vec<_>>>()?;
        let mut crt_inv = 0;
        if ms.len() == 2 {
            crt_inv = ms[1]
                .inv(ms[0].value())
                .ok_or_else(|| Error::Params("limb moduli are not coprime".into()))?;
        }
        let product = ms.iter().map(|m| m.value() as u128).product();
        let ntt = ms
            .iter()
            .map(|&m| (m.value() % (2 * n as u64) == 1).then(|| NttTables::new(m, n)).flatten())
            .collect::<Option<Vec<_>>>();
        Ok(RingParams(Arc::new(Inner { n, moduli: ms, product, crt_inv, ntt })))
    }

    /// Like [`RingParams::new`] but fails unless the NTT is available.
    pub fn with_ntt(n: usize, moduli: &[u64]) -> Result<Self> {
        let p = Self::new(n, moduli)?;
        if let Some(m) = p.moduli().iter().find(|m| m.value() % (2 * n as u64) != 1) {
            return Err(Error::NotNttFriendly { modulus: m.value(), n });
        }
        if !p.ntt_enabled() {
            return Err(Error::Params("no primitive 2N-th root of unity".into()));
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.0.moduli
    }

    pub fn limbs(&self) -> usize {
        self.0.moduli.len()
    }

    /// The full coefficient modulus (product of limbs).
    pub fn modulus(&self) -> u128 {
        self.0.product
    }

    pub fn log2_modulus(&self) -> f64 {
        (self.0.product as f64).log2()
    }

    pub fn ntt_enabled(&self) -> bool {
        self.0.ntt.is_some()
    }

    fn tables(&self) -> Result<&[NttTables]> {
        match &self.0.ntt {
            Some(t) => Ok(t),
            None => {
                let m = self.0.moduli.iter().find(|m| m.value() % (2 * self.0.n as u64) != 1);
                Err(Error::NotNttFriendly { modulus: m.map_or(0, |m| m.value()), n: self.0.n })
            }
        }
    }

    /// Reduce an integer in [0, Q) to its residues.
    fn split(&self, v: u128) -> [u64; MAX_LIMBS] {
        let mut out = [0; MAX_LIMBS];
        for (o, m) in out.iter_mut().zip(&self.0.moduli) {
            *o = m.reduce_u128(v);
        }
        out
    }

    fn join(&self, residues: &[u64]) -> u128 {
        match residues.len() {
            1 => residues[0] as u128,
            _ => {
                let (m0, m1) = (self.0.moduli[0], self.0.moduli[1]);
                let a0 = residues[0];
                let diff = m1.sub(residues[1], a0 % m1.value());
                let k = m1.mul(diff, self.0.crt_inv);
                a0 as u128 + m0.value() as u128 * k as u128
            }
        }
    }

    fn check(&self, other: &RingParams) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ParamsMismatch)
        }
    }
}

impl PartialEq for RingParams {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.n == other.0.n && self.0.moduli == other.0.moduli)
    }
}

impl Eq for RingParams {}

impl fmt::Debug for RingParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let qs: Vec<u64> = self.0.moduli.iter().map(|m| m.value()).collect();
        f.debug_struct("RingParams").field("n", &self.0.n).field("moduli", &qs).finish()
    }
}

/// Element of the ring in coefficient form. Residues are stored limb-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RingElem {
    params: RingParams,
    data: Vec<u64>,
}

impl fmt::Debug for RingElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown: Vec<u128> = (0..self.params.n().min(8)).map(|i| self.coeff(i)).collect();
        write!(f, "RingElem(n={}, coeffs={:?}..)", self.params.n(), shown)
    }
}

impl RingElem {
    pub fn zero(params: &RingParams) -> Self {
        RingElem { params: params.clone(), data: vec![0; params.n() * params.limbs()] }
    }

    /// The monomial x^k for k < N.
    pub fn monomial(params: &RingParams, k: usize) -> Self {
        let mut e = Self::zero(params);
        assert!(k < params.n(), "monomial degree {k} >= N");
        for l in 0..params.limbs() {
            e.data[l * params.n() + k] = 1;
        }
        e
    }

    pub fn one(params: &RingParams) -> Self {
        Self::monomial(params, 0)
    }

    /// Polynomial whose coefficients are the given non-negative integers (reduced mod q).
    /// Shorter inputs are zero-extended.
    pub fn from_u64(params: &RingParams, coeffs: &[u64]) -> Result<Self> {
        Self::from_fn(params, coeffs.len(), |m, i| m.reduce_u128(coeffs[i] as u128))
    }

    /// Polynomial whose coefficients are the given signed integers (reduced mod q).
    pub fn from_i64(params: &RingParams, coeffs: &[i64]) -> Result<Self> {
        Self::from_fn(params, coeffs.len(), |m, i| m.reduce_i64(coeffs[i]))
    }

    /// Polynomial from integer coefficients in [0, Q).
    pub fn from_u128(params: &RingParams, coeffs: &[u128]) -> Result<Self> {
        if let Some(c) = coeffs.iter().find(|&&c| c >= params.modulus()) {
            return Err(Error::Params(format!("coefficient {c} not below modulus")));
        }
        Self::from_fn(params, coeffs.len(), |m, i| m.reduce_u128(coeffs[i]))
    }

    fn from_fn(params: &RingParams, len: usize, f: impl Fn(Modulus, usize) -> u64) -> Result<Self> {
        let n = params.n();
        if len > n {
            return Err(Error::Params(format!("{len} coefficients exceed ring degree {n}")));
        }
        let mut e = Self::zero(params);
        for (l, &m) in params.moduli().iter().enumerate() {
            for i in 0..len {
                e.data[l * n + i] = f(m, i);
            }
        }
        Ok(e)
    }

    /// Build from per-limb residue vectors.
    pub fn from_limbs(params: &RingParams, limbs: Vec<Vec<u64>>) -> Result<Self> {
        let n = params.n();
        if limbs.len() != params.limbs() || limbs.iter().any(|l| l.len() != n) {
            return Err(Error::Params("limb shape does not match parameters".into()));
        }
        for (limb, m) in limbs.iter().zip(params.moduli()) {
            if limb.iter().any(|&c| c >= m.value()) {
                return Err(Error::Params("residue out of range".into()));
            }
        }
        Ok(RingElem { params: params.clone(), data: limbs.concat() })
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn limb(&self, l: usize) -> &[u64] {
        let n = self.params.n();
        &self.data[l * n..(l + 1) * n]
    }

    /// Coefficient of x^i as an integer in [0, Q).
    pub fn coeff(&self, i: usize) -> u128 {
        let n = self.params.n();
        let mut r = [0u64; MAX_LIMBS];
        let limbs = self.params.limbs();
        for (l, slot) in r.iter_mut().enumerate().take(limbs) {
            *slot = self.data[l * n + i];
        }
        self.params.join(&r[..limbs])
    }

    pub fn coeffs(&self) -> Vec<u128> {
        (0..self.params.n()).map(|i| self.coeff(i)).collect()
    }

    /// Coefficients lifted to the symmetric range (-Q/2, Q/2].
    pub fn centered(&self) -> Vec<i128> {
        let q = self.params.modulus();
        (0..self.params.n())
            .map(|i| {
                let c = self.coeff(i);
                if c > q / 2 {
                    c as i128 - q as i128
                } else {
                    c as i128
                }
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&c| c == 0)
    }

    fn zip_with(&self, other: &RingElem, f: impl Fn(Modulus, u64, u64) -> u64) -> Result<RingElem> {
        self.params.check(&other.params)?;
        let n = self.params.n();
        let mut data = Vec::with_capacity(self.data.len());
        for (l, &m) in self.params.moduli().iter().enumerate() {
            let (a, b) = (&self.data[l * n..(l + 1) * n], &other.data[l * n..(l + 1) * n]);
            data.extend(a.iter().zip(b).map(|(&x, &y)| f(m, x, y)));
        }
        Ok(RingElem { params: self.params.clone(), data })
    }

    pub fn add(&self, other: &RingElem) -> Result<RingElem> {
        self.zip_with(other, |m, a, b| m.add(a, b))
    }

    pub fn sub(&self, other: &RingElem) -> Result<RingElem> {
        self.zip_with(other, |m, a, b| m.sub(a, b))
    }

    pub fn add_assign(&mut self, other: &RingElem) -> Result<()> {
        self.params.check(&other.params)?;
        let n = self.params.n();
        for (l, &m) in self.params.0.moduli.iter().enumerate() {
            let dst = &mut self.data[l * n..(l + 1) * n];
            for (a, &b) in dst.iter_mut().zip(&other.data[l * n..(l + 1) * n]) {
                *a = m.add(*a, b);
            }
        }
        Ok(())
    }

    pub fn neg(&self) -> RingElem {
        let n = self.params.n();
        let mut out = self.clone();
        for (l, &m) in self.params.moduli().iter().enumerate() {
            for c in &mut out.data[l * n..(l + 1) * n] {
                *c = m.neg(*c);
            }
        }
        out
    }

    /// Multiply every coefficient by an integer scalar.
    pub fn mul_scalar(&self, s: u128) -> RingElem {
        let n = self.params.n();
        let mut out = self.clone();
        for (l, &m) in self.params.moduli().iter().enumerate() {
            let sr = m.reduce_u128(s);
            for c in &mut out.data[l * n..(l + 1) * n] {
                *c = m.mul(*c, sr);
            }
        }
        out
    }

    /// Negacyclic product; NTT when available, schoolbook otherwise.
    pub fn mul(&self, other: &RingElem) -> Result<RingElem> {
        self.params.check(&other.params)?;
        if self.params.ntt_enabled() {
            let a = self.ntt_forward()?;
            let b = other.ntt_forward()?;
            Ok(a.mul(&b)?.inverse())
        } else {
            self.mul_schoolbook(other)
        }
    }

    /// Negacyclic product by the O(N^2) definition.
    pub fn mul_schoolbook(&self, other: &RingElem) -> Result<RingElem> {
        self.params.check(&other.params)?;
        let n = self.params.n();
        let mut data = Vec::with_capacity(self.data.len());
        for (l, &m) in self.params.moduli().iter().enumerate() {
            data.extend(schoolbook_negacyclic(
                &self.data[l * n..(l + 1) * n],
                &other.data[l * n..(l + 1) * n],
                m,
            ));
        }
        Ok(RingElem { params: self.params.clone(), data })
    }

    pub fn ntt_forward(&self) -> Result<NttElem> {
        let tables = self.params.tables()?;
        let n = self.params.n();
        let mut data = self.data.clone();
        for (l, t) in tables.iter().enumerate() {
            t.forward(&mut data[l * n..(l + 1) * n]);
        }
        Ok(NttElem { params: self.params.clone(), data })
    }

    /// Serialized size in bytes.
    pub fn byte_len(params: &RingParams) -> usize {
        5 + 8 * params.n() * params.limbs()
    }

    /// N (u32 LE), limb count (u8), then coefficient-major LE u64 residues.
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        let n = self.params.n();
        let limbs = self.params.limbs();
        out.reserve(Self::byte_len(&self.params));
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.push(limbs as u8);
        for i in 0..n {
            for l in 0..limbs {
                out.extend_from_slice(&self.data[l * n + i].to_le_bytes());
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_bytes(&mut v);
        v
    }

    /// Parse one element from the front of `bytes`; returns it with the bytes consumed.
    pub fn read_bytes(params: &RingParams, bytes: &[u8]) -> Result<(RingElem, usize)> {
        let need = Self::byte_len(params);
        if bytes.len() < 5 {
            return Err(Error::decode("truncated ring element header"));
        }
        let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let limbs = bytes[4] as usize;
        if n != params.n() || limbs != params.limbs() {
            return Err(Error::decode(format!(
                "ring element has N={n}, limbs={limbs}; expected N={}, limbs={}",
                params.n(),
                params.limbs()
            )));
        }
        if bytes.len() < need {
            return Err(Error::decode("truncated ring element body"));
        }
        let mut data = vec![0u64; n * limbs];
        let mut off = 5;
        for i in 0..n {
            for (l, m) in params.moduli().iter().enumerate() {
                let v = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
                if v >= m.value() {
                    return Err(Error::decode("residue out of range"));
                }
                data[l * n + i] = v;
                off += 8;
            }
        }
        Ok((RingElem { params: params.clone(), data }, need))
    }

    pub fn from_bytes(params: &RingParams, bytes: &[u8]) -> Result<RingElem> {
        let (e, used) = Self::read_bytes(params, bytes)?;
        if used != bytes.len() {
            return Err(Error::decode("trailing bytes after ring element"));
        }
        Ok(e)
    }
}

/// Element in the evaluation (NTT) domain; the product is pointwise.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NttElem {
    params: RingParams,
    data: Vec<u64>,
}

impl NttElem {
    pub fn zero(params: &RingParams) -> Self {
        NttElem { params: params.clone(), data: vec![0; params.n() * params.limbs()] }
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn inverse(&self) -> RingElem {
        let tables = self.params.tables().expect("NttElem exists only for NTT-enabled params");
        let n = self.params.n();
        let mut data = self.data.clone();
        for (l, t) in tables.iter().enumerate() {
            t.inverse(&mut data[l * n..(l + 1) * n]);
        }
        RingElem { params: self.params.clone(), data }
    }

    fn zip_with(&self, other: &NttElem, f: impl Fn(Modulus, u64, u64) -> u64) -> Result<NttElem> {
        self.params.check(&other.params)?;
        let n = self.params.n();
        let mut data = Vec::with_capacity(self.data.len());
        for (l, &m) in self.params.moduli().iter().enumerate() {
            let (a, b) = (&self.data[l * n..(l + 1) * n], &other.data[l * n..(l + 1) * n]);
            data.extend(a.iter().zip(b).map(|(&x, &y)| f(m, x, y)));
        }
        Ok(NttElem { params: self.params.clone(), data })
    }

    pub fn mul(&self, other: &NttElem) -> Result<NttElem> {
        self.zip_with(other, |m, a, b| m.mul(a, b))
    }

    pub fn add(&self, other: &NttElem) -> Result<NttElem> {
        self.zip_with(other, |m, a, b| m.add(a, b))
    }

    /// self += a * b, pointwise.
    pub fn add_mul(&mut self, a: &NttElem, b: &NttElem) -> Result<()> {
        self.params.check(&a.params)?;
        self.params.check(&b.params)?;
        let n = self.params.n();
        for (l, &m) in self.params.0.moduli.iter().enumerate() {
            let r = l * n..(l + 1) * n;
            for ((d, &x), &y) in self.data[r.clone()].iter_mut().zip(&a.data[r.clone()]).zip(&b.data[r]) {
                *d = m.add(*d, m.mul(x, y));
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &NttElem) -> Result<()> {
        self.params.check(&other.params)?;
        let n = self.params.n();
        for (l, &m) in self.params.0.moduli.iter().enumerate() {
            let r = l * n..(l + 1) * n;
            for (d, &x) in self.data[r.clone()].iter_mut().zip(&other.data[r]) {
                *d = m.add(*d, x);
            }
        }
        Ok(())
    }
}

impl RingParams {
    /// Residues of a signed integer, one per limb.
    pub fn reduce_i128(&self, v: i128) -> [u64; MAX_LIMBS] {
        let q = self.modulus() as i128;
        self.split(v.rem_euclid(q) as u128)
    }
}
