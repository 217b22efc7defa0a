use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sectrain_core::he::{Backend, HeOp, HeParams};
use sectrain_core::linprot::{BilinearPlan, LinearOp, MaskStore, PlanKey};
use sectrain_core::packing::Scheme;
use sectrain_core::party::{serve, ClientSession, ServerSummary, SetupParams};
use sectrain_core::ring::RingElem;
use sectrain_core::transport::{Direction, Endpoint, Phase};
use sectrain_core::Error;

fn with_session<T>(backend: Backend, n: usize, f: impl FnOnce(&mut Endpoint, &mut ClientSession) -> T) -> (T, ServerSummary) {
    let (mut cep, mut sep) = Endpoint::pair();
    let server = thread::spawn(move || serve(&mut sep).unwrap());
    let mut client = ClientSession::setup(&mut cep, SetupParams { backend, n, bits: 32, dealer_seed: 7 }, 11).unwrap();
    let out = f(&mut cep, &mut client);
    client.shutdown(&mut cep).unwrap();
    (out, server.join().unwrap())
}

fn random_op(rng: &mut impl Rng) -> LinearOp {
    let c_in = rng.random_range(1..=2);
    let c_out = rng.random_range(1..=3);
    let h = rng.random_range(3..=8);
    let w = rng.random_range(3..=8);
    let k = rng.random_range(1..=3.min(h).min(w));
    let pad = rng.random_range(0..k);
    match rng.random_range(0..8) {
        0 => LinearOp::Conv { c_in, c_out, h, w, k, pad },
        1 => LinearOp::ConvInputGrad { c_in, c_out, h, w, k, pad },
        2 => LinearOp::ConvWeightGrad { c_in, c_out, h, w, k, pad },
        3 => LinearOp::MatVec { rows: rng.random_range(1..12), cols: rng.random_range(1..60) },
        4 => LinearOp::MatTVec { rows: rng.random_range(1..12), cols: rng.random_range(1..60) },
        5 => LinearOp::Outer { rows: rng.random_range(1..12), cols: rng.random_range(1..60) },
        6 => LinearOp::Scale { channels: rng.random_range(1..4), size: rng.random_range(1..80) },
        _ => LinearOp::ChannelDot { channels: rng.random_range(1..4), size: rng.random_range(1..80) },
    }
}

fn operands(op: &LinearOp, rng: &mut impl Rng) -> (Vec<i64>, Vec<i64>) {
    let (lx, lw, _) = op.dims().unwrap();
    let x = (0..lx).map(|_| rng.random_range(-1024..1024)).collect();
    let w = (0..lw).map(|_| rng.random_range(-1024..1024)).collect();
    (x, w)
}

#[test]
fn precompute_matches_direct_and_oracle_on_random_layers() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let ops: Vec<LinearOp> = (0..40).map(|_| random_op(&mut rng)).collect();
    with_session(Backend::Clear, 1024, |ep, c| {
        for (layer, op) in ops.iter().enumerate() {
            let scheme = if layer % 2 == 0 { Scheme::Correlated } else { Scheme::Baseline };
            let key = PlanKey { op: *op, scheme };
            let (x, w) = operands(op, &mut rng);
            let expect = op.eval(&x, &w).unwrap();
            assert_eq!(c.lin().direct(ep, key, &x, &w).unwrap(), expect, "{op:?} direct");
            assert_eq!(c.lin().offline(ep, layer as u32, key, 1).unwrap(), 1);
            assert_eq!(c.lin().online(ep, layer as u32, key, &x, &w).unwrap(), expect, "{op:?} precompute");
        }
    });
}

#[test]
fn rlwe_conv_8x8_precompute_equals_direct() {
    let op = LinearOp::Conv { c_in: 1, c_out: 2, h: 8, w: 8, k: 3, pad: 1 };
    let key = PlanKey { op, scheme: Scheme::Correlated };
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (x, w) = operands(&op, &mut rng);
    with_session(Backend::Rlwe, 4096, |ep, c| {
        let direct = c.lin().direct(ep, key, &x, &w).unwrap();
        c.lin().offline(ep, 0, key, 1).unwrap();
        let online = c.lin().online(ep, 0, key, &x, &w).unwrap();
        assert_eq!(direct, op.eval(&x, &w).unwrap());
        assert_eq!(online, direct);
    });
}

#[test]
fn fc_four_by_four_and_identity_kernel() {
    let mv = LinearOp::MatVec { rows: 4, cols: 4 };
    let x = vec![1, -2, 3, 4];
    let w: Vec<i64> = (1..=16).collect();
    let id = LinearOp::Conv { c_in: 1, c_out: 1, h: 5, w: 5, k: 1, pad: 0 };
    let img: Vec<i64> = (0..25).map(|i| i * 3 - 30).collect();
    with_session(Backend::Rlwe, 4096, |ep, c| {
        let y = c.lin().direct(ep, PlanKey { op: mv, scheme: Scheme::Correlated }, &x, &w).unwrap();
        assert_eq!(y, vec![1 - 4 + 9 + 16, 5 - 12 + 21 + 32, 9 - 20 + 33 + 48, 13 - 28 + 45 + 64]);
        let y = c.lin().direct(ep, PlanKey { op: id, scheme: Scheme::Correlated }, &img, &[1]).unwrap();
        assert_eq!(y, img);
    });
}

#[test]
fn online_meters_per_product() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let ops = [
        LinearOp::Conv { c_in: 2, c_out: 3, h: 8, w: 8, k: 3, pad: 1 },
        LinearOp::MatVec { rows: 10, cols: 392 },
        LinearOp::Scale { channels: 4, size: 50 },
    ];
    with_session(Backend::Clear, 4096, |ep, c| {
        for (layer, op) in ops.iter().enumerate() {
            let key = PlanKey { op: *op, scheme: Scheme::Correlated };
            let plan = BilinearPlan::new(*op, Scheme::Correlated, 4096).unwrap();
            let p = plan.num_products() as u64;
            let before = c.stats(ep).unwrap().meter;
            c.lin().offline(ep, layer as u32, key, 1).unwrap();
            let mid = c.stats(ep).unwrap().meter;
            let off = mid.since(&before);
            assert_eq!(off.count(Phase::Offline, HeOp::CcMul), p);
            assert_eq!(off.count(Phase::Offline, HeOp::Relin), p);
            let (x, w) = operands(op, &mut rng);
            c.lin().online(ep, layer as u32, key, &x, &w).unwrap();
            let on = c.stats(ep).unwrap().meter.since(&mid);
            assert_eq!(on.count(Phase::Online, HeOp::CcMul), 0, "{op:?}");
            assert_eq!(on.count(Phase::Online, HeOp::Relin), 0);
            assert_eq!(on.count(Phase::Online, HeOp::CpMul), 2 * p);
            assert_eq!(on.count(Phase::Online, HeOp::CcAdd), 2 * p);
            assert_eq!(on.count(Phase::Online, HeOp::PpMul), p);
        }
    });
}

#[test]
fn direct_protocol_multiplies_ciphertexts_online() {
    let op = LinearOp::Conv { c_in: 1, c_out: 1, h: 2, w: 2, k: 2, pad: 1 };
    let (_, summary) = with_session(Backend::Clear, 16, |ep, c| {
        let y = c.lin().direct(ep, PlanKey { op, scheme: Scheme::Correlated }, &[1, 2, 3, 4], &[1, 0, 0, 1]).unwrap();
        assert_eq!(y, op.eval(&[1, 2, 3, 4], &[1, 0, 0, 1]).unwrap());
    });
    assert_eq!(summary.meter.count(Phase::Online, HeOp::CcMul), 1);
}

#[test]
fn offline_count_zero_and_one() {
    let op = LinearOp::Conv { c_in: 1, c_out: 1, h: 2, w: 2, k: 2, pad: 1 };
    let key = PlanKey { op, scheme: Scheme::Correlated };
    let (_, summary) = with_session(Backend::Rlwe, 4096, |ep, c| {
        let before = c.stats(ep).unwrap();
        assert_eq!(c.lin().offline(ep, 0, key, 0).unwrap(), 0);
        let after = c.stats(ep).unwrap();
        assert_eq!(after.pool_entries, 0);
        assert_eq!(after.meter.since(&before.meter).total(HeOp::CcMul), 0);
        assert_eq!(c.lin().masks().available(0), 0);
        c.lin().offline(ep, 1, key, 1).unwrap();
        assert_eq!(c.stats(ep).unwrap().pool_entries, 1);
    });
    assert_eq!(summary.meter.count(Phase::Offline, HeOp::CcMul), 1);
    assert_eq!(summary.meter.count(Phase::Offline, HeOp::Relin), 1);
    assert_eq!(summary.meter.total(HeOp::CcMul), 1);
}

#[test]
fn masks_equal_to_operands_leave_the_mask_product() {
    let op = LinearOp::Scale { channels: 1, size: 4 };
    let key = PlanKey { op, scheme: Scheme::Correlated };
    let (x, w) = (vec![3, -1, 4, 1], vec![5]);
    with_session(Backend::Rlwe, 4096, |ep, c| {
        let plan = c.lin().plan(key).unwrap();
        let params = c.lin().ctx().params().clone();
        let enc = |polys: Vec<Vec<i64>>| -> Vec<RingElem> {
            polys.iter().map(|p| RingElem::from_i64(params.plain_ring(), p).unwrap()).collect()
        };
        let (rx, rw) = (enc(plan.encode_left(&x).unwrap()), enc(plan.encode_right(&w).unwrap()));
        c.lin().offline_masks(ep, 0, key, vec![(rx, rw)]).unwrap();
        assert_eq!(c.lin().online(ep, 0, key, &x, &w).unwrap(), vec![15, -5, 20, 5]);
    });
}

/// x(w - r_w) + w(x - r_x) + r_x r_w - (x - r_x)(w - r_w) = x w, checked exhaustively in Z_17.
#[test]
fn masking_identity_in_z17() {
    let m = |v: i64| v.rem_euclid(17);
    let (x, w, rx, rw) = (3, 5, 2, 4);
    let c = m(x * (w - rw) + w * (x - rx) + rx * rw);
    let p = m((x - rx) * (w - rw));
    assert_eq!((c, p, m(c - p)), (16, 1, 15));
    for x in 0..17 {
        for w in 0..17 {
            for rx in 0..17 {
                for rw in 0..17 {
                    let c = m(x * (w - rw) + w * (x - rx) + rx * rw);
                    assert_eq!(m(c - m((x - rx) * (w - rw))), m(x * w));
                }
            }
        }
    }
}

#[test]
fn stored_mask_products_decrypt_to_ring_products() {
    let op = LinearOp::Conv { c_in: 1, c_out: 2, h: 4, w: 4, k: 3, pad: 1 };
    let key = PlanKey { op, scheme: Scheme::Correlated };
    let dir = tempfile::tempdir().unwrap();
    let pool_file = dir.path().join("pool.bin");
    let path = pool_file.to_str().unwrap().to_owned();
    with_session(Backend::Rlwe, 4096, |ep, c| {
        c.lin().offline(ep, 0, key, 1).unwrap();
        assert_eq!(c.save_pool(ep, &path).unwrap(), 1);
        let plan = c.lin().plan(key).unwrap();
        let params = c.lin().ctx().params().clone();
        let mut pool = sectrain_core::linprot::TriplePool::load(&pool_file, &params).unwrap();
        let entry = pool.take(0, 0, &key).unwrap();
        let pair = c.lin().masks_mut().take_next(0).unwrap();
        for (o, ct) in entry.rr.iter().enumerate() {
            let mut want = RingElem::from_u64(params.plain_ring(), &vec![0; 4096]).unwrap();
            for &(l, r, out) in plan.products() {
                if out as usize == o {
                    want.add_assign(&pair.r_x[l as usize].mul(&pair.r_w[r as usize]).unwrap()).unwrap();
                }
            }
            let lin = c.lin();
            assert_eq!(lin.ctx().decrypt(ct, &lin.keys().secret).unwrap(), want);
        }
    });
}

#[test]
fn reused_mask_is_rejected_by_both_parties() {
    let op = LinearOp::MatVec { rows: 3, cols: 5 };
    let key = PlanKey { op, scheme: Scheme::Correlated };
    let (x, w) = (vec![1; 5], vec![2; 15]);
    let (_, summary) = with_session(Backend::Clear, 256, |ep, c| {
        c.lin().offline(ep, 4, key, 2).unwrap();
        let pair = c.lin().masks().peek(4, 0).cloned().unwrap();
        c.lin().online_id(ep, 4, 0, key, &x, &w).unwrap();
        for _ in 0..20 {
            assert!(matches!(c.lin().online_id(ep, 4, 0, key, &x, &w), Err(Error::MaskReuse { layer: 4, id: 0 })));
            let err = c.lin().online_with(ep, pair.clone(), key, &x, &w).unwrap_err();
            assert!(matches!(&err, Error::Remote(m) if m.contains("already consumed")), "{err}");
        }
        c.lin().online(ep, 4, key, &x, &w).unwrap();
        assert!(matches!(c.lin().online(ep, 4, key, &x, &w), Err(Error::PrecomputeMissing(4))));
    });
    assert_eq!(summary.errors, 20);
}

#[test]
fn pool_and_masks_survive_a_server_restart() {
    let op = LinearOp::Conv { c_in: 1, c_out: 1, h: 6, w: 6, k: 3, pad: 1 };
    let key = PlanKey { op, scheme: Scheme::Correlated };
    let dir = tempfile::tempdir().unwrap();
    let pool_path = dir.path().join("server.pool").to_str().unwrap().to_owned();
    let mask_path = dir.path().join("client.masks");
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (x, w) = operands(&op, &mut rng);
    with_session(Backend::Rlwe, 4096, |ep, c| {
        c.lin().offline(ep, 2, key, 3).unwrap();
        assert_eq!(c.save_pool(ep, &pool_path).unwrap(), 3);
        c.lin().masks().save(&mask_path).unwrap();
    });
    with_session(Backend::Rlwe, 4096, |ep, c| {
        assert_eq!(c.load_pool(ep, &pool_path).unwrap(), 3);
        let masks = MaskStore::load(&mask_path, &HeParams::with_backend(Backend::Rlwe, 4096).unwrap()).unwrap();
        assert_eq!(masks.available(2), 3);
        c.lin().set_masks(masks);
        for _ in 0..3 {
            assert_eq!(c.lin().online(ep, 2, key, &x, &w).unwrap(), op.eval(&x, &w).unwrap());
        }
        assert!(matches!(c.lin().online(ep, 2, key, &x, &w), Err(Error::PrecomputeMissing(2))));
    });
}

/// Bytes of every RingElem-sized window that starts with the plaintext-ring header.
fn coefficient_blocks(payload: &[u8], n: usize) -> Vec<Vec<u64>> {
    let mut header = (n as u32).to_le_bytes().to_vec();
    header.push(1);
    let len = 5 + 8 * n;
    let mut out = Vec::new();
    let mut i = 0;
    while i + len <= payload.len() {
        if payload[i..i + 5] == header[..] {
            out.push(payload[i + 5..i + len].chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect());
            i += len;
        } else {
            i += 1;
        }
    }
    out
}

#[test]
fn online_transcript_hides_operands_and_masks() {
    let op = LinearOp::MatVec { rows: 8, cols: 100 };
    let key = PlanKey { op, scheme: Scheme::Correlated };
    let x: Vec<i64> = (0..100).map(|i| i % 7 + 1000).collect();
    let w: Vec<i64> = (0..800).map(|i| (i % 5) * 77 + 4242).collect();
    let n = 4096;
    with_session(Backend::Rlwe, n, |ep, c| {
        c.lin().offline(ep, 0, key, 1).unwrap();
        let pair = c.lin().masks_mut().take_next(0).unwrap();
        let plan = c.lin().plan(key).unwrap();
        let t = c.lin().ctx().params().plain_modulus();
        ep.record_transcript(true);
        c.lin().online_with(ep, pair.clone(), key, &x, &w).unwrap();
        let frames = ep.take_transcript();
        let sent: Vec<u8> = frames.iter().filter(|f| f.dir == Direction::Sent).flat_map(|f| f.payload.clone()).collect();

        let secrets: Vec<Vec<u8>> = plan
            .encode_left(&x)
            .unwrap()
            .into_iter()
            .chain(plan.encode_right(&w).unwrap())
            .map(|p| p.iter().flat_map(|&v| (v.rem_euclid(t as i64) as u64).to_le_bytes()).collect())
            .chain(pair.r_x.iter().chain(&pair.r_w).map(|m| m.to_bytes()[5..].to_vec()))
            .chain(std::iter::once(c.lin().keys().secret.to_bytes()))
            .collect();
        for s in &secrets {
            for probe in s.chunks(64).filter(|p| p.iter().any(|&b| b != 0)).take(8) {
                assert!(!sent.windows(probe.len()).any(|win| win == probe), "secret bytes leaked");
            }
        }

        // The masked operands are the only plaintext-ring payloads; they must look uniform mod t.
        let blocks = coefficient_blocks(&sent, n);
        assert_eq!(blocks.len(), plan.left_polys() + plan.right_polys());
        let mut hist = [0u64; 16];
        for v in blocks.iter().flatten() {
            hist[(*v as u128 * 16 / t as u128) as usize] += 1;
        }
        let total: u64 = hist.iter().sum();
        let e = total as f64 / 16.0;
        let chi2: f64 = hist.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 37.7, "chi2 {chi2}");
    });
}
