#![allow(clippy::manual_div_ceil)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sectrain_core::packing::{
    analytic_n1, analytic_n2, choose_tiles, count_report, ConvShape, DegreeCap, PackingPlan, Scheme,
};
use sectrain_core::Error;

fn conv_oracle(x: &[i64], w: &[i64], s: &ConvShape) -> Vec<i64> {
    let (oh, ow) = (s.out_h(), s.out_w());
    let mut out = vec![0; oh * ow];
    for u in 0..oh {
        for v in 0..ow {
            let mut acc = 0;
            for i in 0..s.k_h {
                for j in 0..s.k_w {
                    let (r, c) = ((u + i) as isize - s.pad as isize, (v + j) as isize - s.pad as isize);
                    if r >= 0 && c >= 0 && (r as usize) < s.in_h && (c as usize) < s.in_w {
                        acc += x[r as usize * s.in_w + c as usize] * w[i * s.k_w + j];
                    }
                }
            }
            out[u * ow + v] = acc;
        }
    }
    out
}

/// Plain integer product, truncated to `n` coefficients; panics if anything would wrap.
fn poly_mul(a: &[i64], b: &[i64], n: usize) -> Vec<i64> {
    let mut out = vec![0; n];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            if ai != 0 && bj != 0 {
                assert!(i + j < n, "product wraps at degree {}", i + j);
                out[i + j] += ai * bj;
            }
        }
    }
    out
}

fn run(plan: &PackingPlan, x: &[i64], w: &[i64]) -> Vec<i64> {
    let n = plan.cap().slots();
    let kp = plan.pack_kernel(w);
    let prods: Vec<Vec<i64>> = plan.pack_input(x).iter().map(|xp| poly_mul(xp, &kp, n)).collect();
    plan.extract(&prods).unwrap()
}

fn random_vec(rng: &mut impl Rng, len: usize) -> Vec<i64> {
    (0..len).map(|_| rng.random_range(-50..=50)).collect()
}

#[test]
fn toy_reproduction() {
    let s = ConvShape::new(2, 2, 2, 1).unwrap();
    let corr = PackingPlan::correlated(s, DegreeCap(8)).unwrap();
    let base = PackingPlan::baseline(s, DegreeCap(8)).unwrap();
    assert_eq!((base.mults(), corr.mults()), (4, 1));
    assert_eq!((corr.input_max_degree(), corr.kernel_max_degree()), (4, 4));
    assert_eq!(corr.utilization(), 1.0);
    let (x, w) = ([1, -2, 3, 4], [5, 6, -7, 8]);
    assert_eq!(run(&corr, &x, &w), conv_oracle(&x, &w, &s));
    assert_eq!(run(&base, &x, &w), conv_oracle(&x, &w, &s));
}

#[test]
fn degrees_bounded_8x8_k3() {
    let (h, k) = (8usize, 3usize);
    let p = PackingPlan::correlated(ConvShape::new(h, h, k, 1).unwrap(), DegreeCap::ring(4096)).unwrap();
    let bound = (h + k - 1) * (h - 1) + h;
    let map = p.coeff_map();
    assert!(map.iter().all(|&(t, d)| t == 0 && d < bound));
    let mut seen: Vec<_> = map.iter().map(|&(_, d)| d).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), h * h, "entries share a slot");
}

#[test]
fn kernel_layout() {
    let p = PackingPlan::correlated(ConvShape::new(5, 5, 3, 1).unwrap(), DegreeCap::ring(4096)).unwrap();
    let o = p.stride();
    assert_eq!(o, 7);
    assert_eq!(p.kernel_max_degree(), 2 * (o + 1));
    // symmetric kernel: w[i,j] and w[j,i] land on mirrored degrees with equal values
    let w = [1, 2, 3, 2, 4, 5, 3, 5, 6];
    let kp = p.pack_kernel(&w);
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(kp[p.kernel_degree(i, j)], kp[p.kernel_degree(j, i)]);
        }
    }
    let p1 = PackingPlan::correlated(ConvShape::new(3, 3, 1, 0).unwrap(), DegreeCap(63)).unwrap();
    assert_eq!(p1.pack_kernel(&[9]), vec![9]);
}

#[test]
fn zero_input_zero_output() {
    let s = ConvShape::new(6, 5, 3, 2).unwrap();
    let p = PackingPlan::correlated(s, DegreeCap(40)).unwrap();
    assert!(p.num_tiles() > 1);
    assert!(run(&p, &[0; 30], &[3; 9]).iter().all(|&v| v == 0));
}

#[test]
fn random_8x8_every_pad() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for pad in 0..=3 {
        let s = ConvShape::new(8, 8, 3, pad).unwrap();
        let (x, w) = (random_vec(&mut rng, 64), random_vec(&mut rng, 9));
        for scheme in [Scheme::Correlated, Scheme::Baseline] {
            let p = PackingPlan::new(scheme, s, DegreeCap::ring(4096)).unwrap();
            assert_eq!(run(&p, &x, &w), conv_oracle(&x, &w, &s), "{scheme:?} pad {pad}");
        }
    }
}

#[test]
fn rectangular_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (h, w, kh, kw, pad) in [(6, 9, 2, 4, 1), (7, 5, 5, 1, 2), (4, 4, 6, 6, 2), (3, 8, 3, 8, 2)] {
        let s = ConvShape::rect(h, w, kh, kw, pad).unwrap();
        let (x, k) = (random_vec(&mut rng, h * w), random_vec(&mut rng, kh * kw));
        for cap in [60, 200, 4095] {
            let Ok(p) = PackingPlan::correlated(s, DegreeCap(cap)) else {
                assert!(cap < 4095);
                continue;
            };
            assert_eq!(run(&p, &x, &k), conv_oracle(&x, &k, &s), "{s:?} cap {cap}");
        }
    }
}

#[test]
fn overflowing_products_are_rejected() {
    let p = PackingPlan::correlated(ConvShape::new(8, 8, 3, 1).unwrap(), DegreeCap::ring(4096)).unwrap();
    assert!(p.check_ring(4096).is_ok());
    assert!(matches!(p.check_ring(64), Err(Error::PackingOverflow { .. })));
    let short = vec![vec![0i64; 10]];
    assert!(matches!(p.extract(&short), Err(Error::PackingOverflow { .. })));
}

#[test]
fn infeasible_cap() {
    for k in [2usize, 3, 5] {
        let s = ConvShape::new(16, 16, k, k - 1).unwrap();
        let cap = DegreeCap(k * (2 * k - 1) + k - 2);
        assert!(matches!(choose_tiles(&s, cap), Err(Error::Partition(_))), "k={k}");
    }
}

/// Independent window enumeration: tile counts by walking the partition.
fn oracle_min_tiles(s: &ConvShape, slots: usize) -> Option<(usize, usize, usize)> {
    let k = s.k_h;
    let mut best: Option<(usize, usize, usize)> = None;
    for hw in 1..=s.in_h {
        for ww in 1..=s.in_w {
            if hw < k.min(s.in_h) || ww < k.min(s.in_w) {
                continue;
            }
            let o = hw.max(ww) + k - 1;
            let top = (hw + k - 2) * o + ww + k - 2;
            if ww + hw * o > slots || top >= slots {
                continue;
            }
            let mut tiles = 0;
            let mut r = 0;
            while r < s.in_h {
                let mut c = 0;
                while c < s.in_w {
                    tiles += 1;
                    c += ww;
                }
                r += hw;
            }
            let key = (tiles, usize::MAX - hw * ww, usize::MAX - hw);
            if best.is_none_or(|b| key < (b.0, usize::MAX - b.1 * b.2, usize::MAX - b.1)) {
                best = Some((tiles, hw, ww));
            }
        }
    }
    best
}

#[test]
fn window_search_matches_oracle() {
    for (h, k, n) in [(64usize, 5usize, 4096usize), (32, 3, 256), (20, 5, 512), (9, 2, 64), (64, 3, 1024)] {
        let s = ConvShape::new(h, h, k, k / 2).unwrap();
        let c = choose_tiles(&s, DegreeCap::ring(n)).unwrap();
        assert_eq!(Some((c.tiles, c.h_w, c.w_w)), oracle_min_tiles(&s, n), "{s:?} N={n}");
    }
}

#[test]
fn window_64x64_k5_golden() {
    let s = ConvShape::new(64, 64, 5, 2).unwrap();
    let c = choose_tiles(&s, DegreeCap::ring(4096)).unwrap();
    assert_eq!((c.h_w, c.w_w, c.stride, c.tiles), (56, 64, 68, 2));
}

#[test]
fn formulas_toy_and_trivial() {
    assert_eq!((analytic_n1(2, 2), analytic_n2(2, 2)), (5, 3));
    let r = count_report(&ConvShape::new(7, 7, 1, 0).unwrap(), DegreeCap::ring(4096), Scheme::Correlated).unwrap();
    assert!(r.trivial_kernel);
    assert_eq!(r.n1 - r.n2, 7);
    assert_eq!(r.mults, r.baseline_mults);
}

#[test]
fn kernel_sweep_counts_never_favor_baseline() {
    for h in (8..=64).step_by(8) {
        let r = count_report(&ConvShape::new(h, h, 5, 2).unwrap(), DegreeCap::ring(4096), Scheme::Correlated).unwrap();
        assert!(r.correlated_mults <= r.baseline_mults, "H={h}");
        assert!(r.mults >= 1 && r.input_polys >= 1 && r.kernel_polys >= 1);
    }
}

fn shape_strategy() -> impl Strategy<Value = ConvShape> {
    (1usize..=12, 1usize..=12, prop::sample::select(vec![1usize, 2, 3, 5]), 0usize..=4)
        .prop_filter_map("empty output", |(h, w, k, pad)| ConvShape::new(h, w, k, pad.min(k)).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tiled_products_match_oracle(s in shape_strategy(), cap in 30usize..400, seed in any::<u64>()) {
        let Ok(p) = PackingPlan::correlated(s, DegreeCap(cap)) else { return Ok(()); };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, w) = (random_vec(&mut rng, s.in_h * s.in_w), random_vec(&mut rng, s.k_h * s.k_w));
        prop_assert_eq!(run(&p, &x, &w), conv_oracle(&x, &w, &s));
        if let Ok(b) = PackingPlan::baseline(s, DegreeCap(cap)) {
            prop_assert_eq!(run(&b, &x, &w), conv_oracle(&x, &w, &s));
        }
    }

    #[test]
    fn every_input_entry_has_one_slot(s in shape_strategy(), cap in 30usize..400) {
        let Ok(p) = PackingPlan::correlated(s, DegreeCap(cap)) else { return Ok(()); };
        let mut slots = p.coeff_map();
        prop_assert!(slots.iter().all(|&(_, d)| d <= cap));
        slots.sort();
        slots.dedup();
        prop_assert_eq!(slots.len(), s.in_h * s.in_w);
        prop_assert!(p.product_max_degree() <= cap);
        for u in 0..s.out_h() {
            for v in 0..s.out_w() {
                for (_, d) in p.output_sources(u, v) {
                    prop_assert!(d <= p.product_max_degree());
                }
            }
        }
    }

    #[test]
    fn chosen_window_satisfies_constraints(s in shape_strategy(), cap in 30usize..5000) {
        let Ok(c) = choose_tiles(&s, DegreeCap(cap)) else { return Ok(()); };
        prop_assert!(c.h_w >= s.k_h.min(s.in_h) && c.h_w <= s.in_h);
        prop_assert!(c.w_w >= s.k_w.min(s.in_w) && c.w_w <= s.in_w);
        prop_assert!(c.w_w + c.h_w * c.stride <= cap + 1);
        prop_assert_eq!(c.stride, c.h_w.max(c.w_w) + s.k_h - 1);
    }

    #[test]
    fn correlated_degree_never_exceeds_baseline(s in shape_strategy()) {
        prop_assume!(s.pad >= 1);
        let huge = DegreeCap(usize::MAX / 4);
        let c = PackingPlan::correlated(s, huge).unwrap();
        let b = PackingPlan::baseline(s, huge).unwrap();
        prop_assert!(c.input_max_degree() <= b.input_max_degree());
    }

    #[test]
    fn difference_formula(h in 1usize..500, k in 1usize..40) {
        prop_assert_eq!(analytic_n1(h, k) - analytic_n2(h, k), (k + 1) / 2 * h + (k - 1) / 2 * k);
    }
}
