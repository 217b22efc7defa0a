use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sectrain_core::mpc::{reconstruct_vec, share, share_vec, Mpc, Party, Ring2k};
use sectrain_core::transport::{Endpoint, Frame};
use sectrain_core::Error;

const DEALER: u64 = 0xD00D;

/// Runs the client closure here and the server closure on a thread; returns both results.
fn run_pair<A, B, FA, FB>(bits: u32, client: FA, server: FB) -> (A, B)
where
    FA: FnOnce(&mut Mpc, &mut Endpoint) -> A,
    FB: FnOnce(&mut Mpc, &mut Endpoint) -> B + Send + 'static,
    B: Send + 'static,
{
    let (mut ce, mut se) = Endpoint::pair();
    let h = thread::spawn(move || {
        let mut m = Mpc::new(Party::Server, bits, DEALER, 2).unwrap();
        server(&mut m, &mut se)
    });
    let mut m = Mpc::new(Party::Client, bits, DEALER, 1).unwrap();
    let a = client(&mut m, &mut ce);
    (a, h.join().unwrap())
}

fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

fn shared(values: &[i64], bits: u32, seed: u64) -> (Vec<u64>, Vec<u64>) {
    let ring = Ring2k::new(bits).unwrap();
    let enc: Vec<u64> = values.iter().map(|&v| ring.encode(v)).collect();
    share_vec(&enc, ring, &mut ChaCha20Rng::seed_from_u64(seed))
}

fn drelu_both(values: &[i64], bits: u32) -> Vec<u8> {
    let (x0, x1) = shared(values, bits, 11);
    let (a, b) = run_pair(bits, move |m, e| m.drelu(e, &x0).unwrap(), move |m, e| m.drelu(e, &x1).unwrap());
    xor(&a, &b)
}

fn relu_both(values: &[i64], bits: u32) -> Vec<i64> {
    let ring = Ring2k::new(bits).unwrap();
    let (x0, x1) = shared(values, bits, 12);
    let (a, b) = run_pair(bits, move |m, e| m.relu(e, &x0).unwrap().0, move |m, e| m.relu(e, &x1).unwrap().0);
    reconstruct_vec(&a, &b, ring).into_iter().map(|v| ring.decode(v)).collect()
}

fn maxpool_both(values: &[i64], window: usize, bits: u32) -> Vec<i64> {
    let ring = Ring2k::new(bits).unwrap();
    let (x0, x1) = shared(values, bits, 13);
    let (a, b) = run_pair(
        bits,
        move |m, e| m.maxpool(e, &x0, window).unwrap(),
        move |m, e| m.maxpool(e, &x1, window).unwrap(),
    );
    reconstruct_vec(&a, &b, ring).into_iter().map(|v| ring.decode(v)).collect()
}

/// Upper 0.1% point of chi-square with 255 degrees of freedom.
const CHI2_255_999: f64 = 330.52;
/// Upper 0.1% point of chi-square with 15 degrees of freedom.
const CHI2_15_999: f64 = 37.70;

fn chi2(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expect = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum()
}

#[test]
fn share_reconstructs_and_is_uniform() {
    let ring = Ring2k::new(8).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let mut counts = [0u64; 256];
    for _ in 0..100_000 {
        let (a, b) = share(7, ring, &mut rng);
        assert_eq!((a.value + b.value) % 256, 7);
        counts[a.value as usize] += 1;
    }
    assert!(chi2(&counts) < CHI2_255_999, "chi2 {}", chi2(&counts));
    let (a, b) = share(0, ring, &mut rng);
    assert_eq!((a.value + b.value) % 256, 0);
}

#[test]
fn cot_correlation() {
    let n = 10_000;
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let x: Vec<u64> = (0..n).map(|_| rng.random::<u64>() & 0xffff_ffff).collect();
    let mut choice: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    choice[0] = 0;
    choice[1] = 1;
    let xs = x.clone();
    let ch = choice.clone();
    let (r, got) = run_pair(32, move |m, e| m.cot_send(e, &xs, 32).unwrap(), move |m, e| m.cot_recv(e, &ch, 32).unwrap());
    for k in 0..n {
        let expect = (r[k] + u64::from(choice[k]) * x[k]) & 0xffff_ffff;
        assert_eq!(got[k], expect, "k={k}");
    }
    // 8-bit example: i=1, x=5
    let (r, got) = run_pair(8, |m, e| m.cot_send(e, &[5], 8).unwrap(), |m, e| m.cot_recv(e, &[1], 8).unwrap());
    assert_eq!((got[0] + 256 - r[0]) % 256, 5);
}

#[test]
fn kot_selects_exactly_one() {
    let (_, got) = run_pair(8, |m, e| m.kot_send(e, 2, &[10, 20], 8).unwrap(), |m, e| m.kot_recv(e, 2, &[1], 8).unwrap());
    assert_eq!(got, vec![20]);

    let (_, got) = run_pair(
        8,
        |m, e| m.kot_send(e, 4, &[9, 9, 9, 9, 9, 9, 9, 9], 8).unwrap(),
        |m, e| m.kot_recv(e, 4, &[0, 3], 8).unwrap(),
    );
    assert_eq!(got, vec![9, 9]);

    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let msgs: Vec<u64> = (0..500 * 16).map(|_| rng.random_range(0..1 << 20)).collect();
    let idx: Vec<usize> = (0..500).map(|_| rng.random_range(0..16)).collect();
    let (m2, i2) = (msgs.clone(), idx.clone());
    let (_, got) = run_pair(8, move |m, e| m.kot_send(e, 16, &m2, 20).unwrap(), move |m, e| m.kot_recv(e, 16, &i2, 20).unwrap());
    for t in 0..500 {
        assert_eq!(got[t], msgs[t * 16 + idx[t]]);
    }
}

#[test]
fn kot_rejects_bad_index() {
    let mut m = Mpc::new(Party::Server, 8, DEALER, 0).unwrap();
    let (_, mut e) = Endpoint::pair();
    assert!(matches!(m.kot_recv(&mut e, 4, &[4], 8), Err(Error::IndexOutOfRange { index: 4, k: 4 })));
}

#[test]
fn out_of_step_parties_are_detected() {
    let (mut ce, mut se) = Endpoint::pair();
    let mut client = Mpc::new(Party::Client, 8, DEALER, 1).unwrap();
    let h = thread::spawn(move || {
        let mut s = Mpc::new(Party::Server, 8, DEALER, 2).unwrap();
        s.cot_send(&mut se, &[1], 8).unwrap();
        // A fresh server instance restarts its counter at zero.
        let mut stale = Mpc::new(Party::Server, 8, DEALER, 2).unwrap();
        stale.cot_send(&mut se, &[1], 8)
    });
    client.cot_recv(&mut ce, &[1], 8).unwrap();
    let _ = client.cot_recv(&mut ce, &[1], 8);
    assert!(matches!(h.join().unwrap(), Err(Error::Desync { expected: 0, got: 1 })));
}

#[test]
fn drelu_exhaustive_8bit() {
    let values: Vec<i64> = (-128..128).collect();
    let got = drelu_both(&values, 8);
    for (v, b) in values.iter().zip(&got) {
        assert_eq!(*b, u8::from(*v >= 0), "x={v}");
    }
}

#[test]
fn relu_exhaustive_8bit() {
    let values: Vec<i64> = (-128..128).collect();
    let got = relu_both(&values, 8);
    for (v, r) in values.iter().zip(&got) {
        assert_eq!(*r, (*v).max(0), "x={v}");
    }
}

#[test]
fn maxpool_pairs_exhaustive_8bit() {
    // |v| < 2^(l-2): every ordered pair from [-64, 64)
    let mut values = Vec::new();
    for a in -64..64i64 {
        for b in -64..64i64 {
            values.push(a);
            values.push(b);
        }
    }
    let got = maxpool_both(&values, 2, 8);
    for (k, m) in got.iter().enumerate() {
        assert_eq!(*m, values[2 * k].max(values[2 * k + 1]));
    }
}

#[test]
fn maxpool_examples() {
    assert_eq!(maxpool_both(&[1, 9, 3, 7], 4, 16), vec![9]);
    assert_eq!(maxpool_both(&[-5, -2, -9, -3], 4, 16), vec![-2]);
    assert_eq!(maxpool_both(&[4, -1, 8], 3, 16), vec![8]);
}

#[test]
fn random_32bit_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let values: Vec<i64> = (0..10_000).map(|_| rng.random_range(i32::MIN as i64..=i32::MAX as i64)).collect();
    let d = drelu_both(&values, 32);
    let r = relu_both(&values, 32);
    for k in 0..values.len() {
        assert_eq!(d[k], u8::from(values[k] >= 0));
        assert_eq!(r[k], values[k].max(0));
    }
    let pool: Vec<i64> = (0..4 * 2500).map(|_| rng.random_range(-(1i64 << 30)..1 << 30)).collect();
    let m = maxpool_both(&pool, 4, 32);
    for (k, v) in m.iter().enumerate() {
        assert_eq!(*v, *pool[4 * k..4 * k + 4].iter().max().unwrap());
    }
}

#[test]
fn random_16bit_and_64bit() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let v16: Vec<i64> = (0..2000).map(|_| rng.random_range(-(1i64 << 14)..1 << 14)).collect();
    let r = relu_both(&v16, 16);
    assert!(v16.iter().zip(&r).all(|(v, r)| v.max(&0) == r));
    let m = maxpool_both(&v16, 4, 16);
    for (k, v) in m.iter().enumerate() {
        assert_eq!(*v, *v16[4 * k..4 * k + 4].iter().max().unwrap());
    }
    let v64: Vec<i64> = (0..500).map(|_| rng.random()).chain([i64::MIN, -1, 0, i64::MAX]).collect();
    let d = drelu_both(&v64, 64);
    assert!(v64.iter().zip(&d).all(|(v, b)| u8::from(*v >= 0) == *b));
}

/// Choice bits go on the wire only as i XOR c with a fresh random c.
#[test]
fn ot_messages_hide_receiver_index() {
    let n = 4000;
    let (mut ce, mut se) = Endpoint::pair();
    se.record_transcript(true);
    let h = thread::spawn(move || {
        let mut s = Mpc::new(Party::Server, 8, DEALER, 2).unwrap();
        s.cot_recv(&mut se, &vec![1u8; n], 8).unwrap();
        s.kot_recv(&mut se, 16, &vec![5usize; n], 8).unwrap();
        se.take_transcript()
    });
    let mut c = Mpc::new(Party::Client, 8, DEALER, 1).unwrap();
    c.cot_send(&mut ce, &vec![3u64; n], 8).unwrap();
    let msgs: Vec<u64> = (0..n * 16).map(|k| (k % 16) as u64 * 7).collect();
    c.kot_send(&mut ce, 16, &msgs, 8).unwrap();
    let transcript: Vec<Frame> = h.join().unwrap();
    let sent: Vec<&Frame> = transcript.iter().filter(|f| f.dir == sectrain_core::transport::Direction::Sent).collect();
    assert_eq!(sent.len(), 2);

    // COT: header(12) + blob(len 4 + bits) + blob(len 4 + 16n)
    let d = sectrain_core::transport::wire::unpack_bits(&sent[0].payload[16..16 + n / 8], 1, n).unwrap();
    let ones = d.iter().filter(|&&b| b == 1).count() as u64;
    assert!(chi2(&[ones, n as u64 - ones]) < 10.83, "choice bits biased: {ones}/{n}");

    let e = sectrain_core::transport::wire::unpack_bits(&sent[1].payload[16..16 + n / 2], 4, n).unwrap();
    let mut counts = [0u64; 16];
    for v in e {
        counts[v as usize] += 1;
    }
    assert!(chi2(&counts) < CHI2_15_999, "k-OT shifts biased: {counts:?}");
}

#[test]
fn relu_traffic_is_fixed_per_element() {
    let bytes = |n: usize| {
        let values: Vec<i64> = (0..n as i64).map(|v| v - n as i64 / 2).collect();
        let (x0, x1) = shared(&values, 32, 5);
        let (a, _) = run_pair(
            32,
            move |m, e| {
                m.relu(e, &x0).unwrap();
                e.stats().total().bytes()
            },
            move |m, e| m.relu(e, &x1).unwrap(),
        );
        a
    };
    let (b1, b2, b3) = (bytes(800), bytes(1600), bytes(2400));
    assert_eq!(b2 - b1, b3 - b2, "traffic not linear in the element count");
    let per = (b2 - b1) as f64 / 800.0;
    assert!(per > 200.0 && per < 2000.0, "{per} bytes per ReLU");
}
