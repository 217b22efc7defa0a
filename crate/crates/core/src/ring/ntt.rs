use super::modulus::{primitive_root_2n, Modulus};

/// Twiddle tables for the negacyclic NTT of one limb.
///
/// Powers of a primitive 2N-th root psi are stored in bit-reversed order, which merges the
/// negacyclic twist into the butterflies (forward Cooley-Tukey, inverse Gentleman-Sande).
#[derive(Debug)]
pub struct NttTables {
    m: Modulus,
    n: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTables {
    pub fn new(m: Modulus, n: usize) -> Option<Self> {
        let psi = primitive_root_2n(m.value(), n)?;
        let psi_inv = m.inv(psi)?;
        let bits = n.trailing_zeros();
        let mut psi_rev = vec![0; n];
        let mut psi_inv_rev = vec![0; n];
        let (mut p, mut pi) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[r] = p;
            psi_inv_rev[r] = pi;
            p = m.mul(p, psi);
            pi = m.mul(pi, psi_inv);
        }
        let n_inv = m.inv(n as u64 % m.value())?;
        Some(NttTables {
            psi_rev_shoup: psi_rev.iter().map(|&w| m.shoup(w)).collect(),
            psi_inv_rev_shoup: psi_inv_rev.iter().map(|&w| m.shoup(w)).collect(),
            psi_rev,
            psi_inv_rev,
            n_inv,
            n_inv_shoup: m.shoup(n_inv),
            m,
            n,
        })
    }

    /// In-place forward transform; input and output residues in [0, q).
    pub fn forward(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.n);
        let q = self.m.value();
        let two_q = 2 * q;
        let mut t = self.n;
        let mut groups = 1;
        // Harvey butterflies: values stay in [0, 4q) until the final pass.
        while groups < self.n {
            t /= 2;
            for i in 0..groups {
                let w = self.psi_rev[groups + i];
                let ws = self.psi_rev_shoup[groups + i];
                let base = 2 * i * t;
                let (lo, hi) = a[base..base + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = *x;
                    if u >= two_q {
                        u -= two_q;
                    }
                    let v = mul_shoup_lazy(*y, w, ws, q);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            groups *= 2;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_q {
                v -= two_q;
            }
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    /// In-place inverse transform including the 1/N scaling.
    pub fn inverse(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.n);
        let q = self.m.value();
        let two_q = 2 * q;
        let mut t = 1;
        let mut groups = self.n;
        // Values stay in [0, 2q).
        while groups > 1 {
            let half = groups / 2;
            for i in 0..half {
                let w = self.psi_inv_rev[half + i];
                let ws = self.psi_inv_rev_shoup[half + i];
                let base = 2 * i * t;
                let (lo, hi) = a[base..base + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (u, v) = (*x, *y);
                    let mut s = u + v;
                    if s >= two_q {
                        s -= two_q;
                    }
                    *x = s;
                    *y = mul_shoup_lazy(u + two_q - v, w, ws, q);
                }
            }
            t *= 2;
            groups = half;
        }
        for x in a.iter_mut() {
            *x = self.m.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

/// a * w mod q up to one extra q: result in [0, 2q).
#[inline(always)]
fn mul_shoup_lazy(a: u64, w: u64, ws: u64, q: u64) -> u64 {
    let quot = ((a as u128 * ws as u128) >> 64) as u64;
    a.wrapping_mul(w).wrapping_sub(quot.wrapping_mul(q))
}

/// Negacyclic schoolbook product over one limb; kept as the reference implementation.
pub fn schoolbook_negacyclic(a: &[u64], b: &[u64], m: Modulus) -> Vec<u64> {
    let n = a.len();
    assert_eq!(n, b.len());
    let mut out = vec![0u64; n];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            let prod = m.mul(ai, bj);
            let k = i + j;
            if k < n {
                out[k] = m.add(out[k], prod);
            } else {
                out[k - n] = m.sub(out[k - n], prod);
            }
        }
    }
    out
}
