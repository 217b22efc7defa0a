/// A word-sized modulus with the handful of reductions the ring needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Modulus {
    value: u64,
    /// floor(2^128 / value), split into 64-bit halves, for Barrett reduction.
    mu_hi: u64,
    mu_lo: u64,
}

impl Modulus {
    /// Moduli are capped at 62 bits so lazy sums of two residues never overflow.
    pub const MAX_BITS: u32 = 62;

    pub fn new(value: u64) -> Option<Self> {
        if !(value > 1 && value < (1u64 << Self::MAX_BITS)) {
            return None;
        }
        // 2^128 / v computed as (2^128 - 1) / v, exact unless v divides 2^128 (a power of two).
        let mut mu = u128::MAX / value as u128;
        if value.is_power_of_two() {
            mu += 1;
        }
        Some(Modulus { value, mu_hi: (mu >> 64) as u64, mu_lo: mu as u64 })
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Barrett reduction of any 128-bit value.
    #[inline]
    pub fn reduce_u128(self, x: u128) -> u64 {
        const LO: u128 = u64::MAX as u128;
        let (x1, x0) = ((x >> 64) as u64 as u128, x as u64 as u128);
        let (m1, m0) = (self.mu_hi as u128, self.mu_lo as u128);
        let x0m0 = x0 * m0;
        let x1m0 = x1 * m0;
        let x0m1 = x0 * m1;
        let mid = (x0m0 >> 64) + (x1m0 & LO) + (x0m1 & LO);
        let q_est = x1 * m1 + (x1m0 >> 64) + (x0m1 >> 64) + (mid >> 64);
        let mut r = x.wrapping_sub(q_est.wrapping_mul(self.value as u128)) as u64;
        while r >= self.value {
            r -= self.value;
        }
        r
    }

    #[inline]
    pub fn reduce_i64(self, a: i64) -> u64 {
        a.rem_euclid(self.value as i64) as u64
    }

    #[inline]
    pub fn reduce_i128(self, a: i128) -> u64 {
        a.rem_euclid(self.value as i128) as u64
    }

    /// Signed representative in (-q/2, q/2].
    #[inline]
    pub fn center(self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }

    pub fn pow(self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64 % self.value;
        base %= self.value;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse modulo a (not necessarily prime) modulus, if it exists.
    pub fn inv(self, a: u64) -> Option<u64> {
        let (mut r0, mut r1) = (self.value as i128, (a % self.value) as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        (r0 == 1).then(|| t0.rem_euclid(self.value as i128) as u64)
    }

    /// Precomputed quotient floor(w * 2^64 / q) for Shoup multiplication.
    #[inline]
    pub fn shoup(self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `a * w mod q` given `w_shoup = shoup(w)`; `a` may be any u64 < 2^63.
    #[inline]
    pub fn mul_shoup(self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let q = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(q.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'outer: for a in WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// The `count` largest primes below `2^bits` that are congruent to 1 mod 2n.
pub fn ntt_primes(bits: u32, n: usize, count: usize) -> Vec<u64> {
    assert!(bits <= Modulus::MAX_BITS && bits > 1);
    let step = 2 * n as u64;
    let mut out = Vec::with_capacity(count);
    let mut cand = ((1u64 << bits) - 1) / step * step + 1;
    while out.len() < count && cand > step {
        if cand < (1u64 << bits) && is_prime(cand) {
            out.push(cand);
        }
        cand -= step;
    }
    out
}

/// Find a generator of the order-2n subgroup of Z_q^*, i.e. a primitive 2n-th root of unity.
pub fn primitive_root_2n(q: u64, n: usize) -> Option<u64> {
    let order = 2 * n as u64;
    if !(q - 1).is_multiple_of(order) {
        return None;
    }
    let m = Modulus::new(q)?;
    let cofactor = (q - 1) / order;
    for g in 2..q.min(10_000) {
        let r = m.pow(g, cofactor);
        // r has order dividing 2n; it is primitive iff r^n = -1.
        if m.pow(r, n as u64) == q - 1 {
            return Some(r);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_primes_match_trial_division() {
        for n in 0..5000u64 {
            let trial = n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
            assert_eq!(is_prime(n), trial, "n={n}");
        }
    }

    #[test]
    fn known_large_primes() {
        assert!(is_prime((1u64 << 61) - 1));
        assert!(!is_prime((1u64 << 61) + 1));
        // Strong pseudoprime to several small bases.
        assert!(!is_prime(3_215_031_751));
    }

    #[test]
    fn ntt_primes_are_ntt_friendly() {
        for p in ntt_primes(55, 4096, 3) {
            assert!(is_prime(p));
            assert_eq!(p % 8192, 1);
            assert!(p < 1 << 55);
        }
    }

    #[test]
    fn inverse_and_shoup() {
        let m = Modulus::new(97).unwrap();
        for a in 1..97 {
            assert_eq!(m.mul(a, m.inv(a).unwrap()), 1);
        }
        assert_eq!(Modulus::new(12).unwrap().inv(4), None);
        let q = ntt_primes(60, 16, 1)[0];
        let m = Modulus::new(q).unwrap();
        let w = q / 3 + 7;
        let ws = m.shoup(w);
        for a in [0, 1, q - 1, q / 2, 12345678901] {
            assert_eq!(m.mul_shoup(a, w, ws), m.mul(a, w));
        }
    }

    #[test]
    fn barrett_matches_remainder() {
        let mut x: u128 = 0x1234_5678_9abc_def0_0fed_cba9_8765_4321;
        for q in [2u64, 3, 17, 1 << 40, (1 << 61) - 1, ntt_primes(55, 4096, 1)[0], (1 << 62) - 57] {
            let m = Modulus::new(q).unwrap();
            for v in [0u128, 1, q as u128 - 1, q as u128, u128::MAX, u128::MAX - 1, (q as u128) * (q as u128) - 1] {
                assert_eq!(m.reduce_u128(v) as u128, v % q as u128, "q={q} v={v}");
            }
            for _ in 0..2000 {
                x = x.wrapping_mul(0x2545_F491_4F6C_DD1D_9E37_79B9_7F4A_7C15).wrapping_add(7);
                assert_eq!(m.reduce_u128(x) as u128, x % q as u128);
            }
        }
    }

    #[test]
    fn root_of_unity_order() {
        let q = 17;
        let r = primitive_root_2n(q, 4).unwrap();
        let m = Modulus::new(q).unwrap();
        assert_eq!(m.pow(r, 8), 1);
        assert_eq!(m.pow(r, 4), 16);
    }
}
