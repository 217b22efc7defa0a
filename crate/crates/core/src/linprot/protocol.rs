//! Client and server halves of the direct and the precomputed linear protocols.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::plan::{BilinearPlan, LinearOp};
use super::pool::{read_ct, read_pt, write_ct, write_pt, MaskPair, MaskStore, PlanKey, PoolEntry, TriplePool};
use crate::error::{Error, Result};
use crate::packing::Scheme;
use crate::he::{Ciphertext, HeContext, HeParams, KeySet, PreparedCt, RelinKey};
use crate::party::{call, Request};
use crate::ring::RingElem;
use crate::transport::wire::{Reader, Writer};
use crate::transport::{Endpoint, Phase};

#[derive(Default)]
pub struct PlanCache {
    plans: HashMap<(PlanKey, usize), Arc<BilinearPlan>>,
}

impl PlanCache {
    pub fn get(&mut self, key: PlanKey, n: usize) -> Result<Arc<BilinearPlan>> {
        if let Some(p) = self.plans.get(&(key, n)) {
            return Ok(p.clone());
        }
        let p = Arc::new(BilinearPlan::new(key.op, key.scheme, n)?);
        self.plans.insert((key, n), p.clone());
        Ok(p)
    }
}

fn to_ring(params: &HeParams, polys: Vec<Vec<i64>>) -> Result<Vec<RingElem>> {
    polys.iter().map(|c| RingElem::from_i64(params.plain_ring(), c)).collect()
}

fn write_cts(w: &mut Writer, cts: &[Ciphertext]) {
    w.u32(cts.len() as u32);
    for c in cts {
        write_ct(w, c);
    }
}

fn read_cts(r: &mut Reader<'_>, params: &HeParams, expect: usize) -> Result<Vec<Ciphertext>> {
    let n = r.u32()? as usize;
    if n != expect {
        return Err(Error::decode(format!("{n} ciphertexts, expected {expect}")));
    }
    (0..n).map(|_| read_ct(r, params)).collect()
}

fn write_pts(w: &mut Writer, pts: &[RingElem]) {
    w.u32(pts.len() as u32);
    for p in pts {
        write_pt(w, p);
    }
}

fn read_pts(r: &mut Reader<'_>, params: &HeParams, expect: usize) -> Result<Vec<RingElem>> {
    let n = r.u32()? as usize;
    if n != expect {
        return Err(Error::decode(format!("{n} plaintexts, expected {expect}")));
    }
    (0..n).map(|_| read_pt(r, params)).collect()
}

/// The data owner's side: encodes, encrypts, masks and decrypts.
pub struct LinClient {
    ctx: HeContext,
    keys: KeySet,
    rng: ChaCha20Rng,
    masks: MaskStore,
    plans: PlanCache,
    scheme_uses: HashMap<Scheme, u64>,
}

impl LinClient {
    pub fn new(ctx: HeContext, keys: KeySet, seed: u64) -> Self {
        LinClient {
            ctx,
            keys,
            rng: ChaCha20Rng::seed_from_u64(seed),
            masks: MaskStore::new(),
            plans: PlanCache::default(),
            scheme_uses: HashMap::new(),
        }
    }

    /// Online linear operations run so far with the given packing scheme.
    pub fn scheme_uses(&self, scheme: Scheme) -> u64 {
        self.scheme_uses.get(&scheme).copied().unwrap_or(0)
    }

    pub fn ctx(&self) -> &HeContext {
        &self.ctx
    }

    pub fn keys(&self) -> &KeySet {
        &self.keys
    }

    pub fn masks(&self) -> &MaskStore {
        &self.masks
    }

    pub fn masks_mut(&mut self) -> &mut MaskStore {
        &mut self.masks
    }

    pub fn set_masks(&mut self, masks: MaskStore) {
        self.masks = masks;
    }

    pub fn plan(&mut self, key: PlanKey) -> Result<Arc<BilinearPlan>> {
        self.plans.get(key, self.ctx.params().n())
    }

    fn encrypt_all(&mut self, polys: &[RingElem]) -> Result<Vec<Ciphertext>> {
        polys.iter().map(|p| self.ctx.encrypt(p, &self.keys.public, &mut self.rng)).collect()
    }

    fn uniform(&mut self) -> Result<RingElem> {
        let t = self.ctx.params().plain_modulus();
        let v: Vec<u64> = (0..self.ctx.params().n()).map(|_| self.rng.random_range(0..t)).collect();
        RingElem::from_u64(self.ctx.params().plain_ring(), &v)
    }

    fn decode_out(&self, plan: &BilinearPlan, polys: &[RingElem]) -> Result<Vec<i64>> {
        let coeffs: Vec<Vec<u64>> = polys.iter().map(|p| p.limb(0).to_vec()).collect();
        plan.extract(&coeffs, self.ctx.params().plain_modulus())
    }

    /// Direct protocol: the server multiplies the two encrypted operands.
    pub fn direct(&mut self, ep: &mut Endpoint, key: PlanKey, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        let plan = self.plan(key)?;
        let params = self.ctx.params().clone();
        self.ctx.meter().set_phase(Phase::Online);
        *self.scheme_uses.entry(key.scheme).or_default() += 1;
        let left = to_ring(&params, plan.encode_left(x)?)?;
        let right = to_ring(&params, plan.encode_right(w)?)?;
        let mut msg = Writer::new();
        msg.blob(&key.to_bytes());
        write_cts(&mut msg, &self.encrypt_all(&left)?);
        write_cts(&mut msg, &self.encrypt_all(&right)?);
        let reply = call(ep, Phase::Online, Request::LinearDirect, &msg.finish())?;
        let mut r = Reader::new(&reply);
        let out = read_cts(&mut r, &params, plan.out_polys())?;
        r.finish()?;
        let dec = out.iter().map(|c| self.ctx.decrypt(c, &self.keys.secret)).collect::<Result<Vec<_>>>()?;
        self.decode_out(&plan, &dec)
    }

    /// Offline phase: `count` fresh mask pairs for one layer; returns how many the server stored.
    pub fn offline(&mut self, ep: &mut Endpoint, layer: u32, key: PlanKey, count: usize) -> Result<usize> {
        let plan = self.plan(key)?;
        let mut masks = Vec::with_capacity(count);
        for _ in 0..count {
            let r_x = (0..plan.left_polys()).map(|_| self.uniform()).collect::<Result<Vec<_>>>()?;
            let r_w = (0..plan.right_polys()).map(|_| self.uniform()).collect::<Result<Vec<_>>>()?;
            masks.push((r_x, r_w));
        }
        self.offline_masks(ep, layer, key, masks)
    }

    /// Offline phase with caller-chosen masks, given as (r_x, r_w) polynomial lists.
    pub fn offline_masks(&mut self, ep: &mut Endpoint, layer: u32, key: PlanKey, masks: Vec<(Vec<RingElem>, Vec<RingElem>)>) -> Result<usize> {
        let plan = self.plan(key)?;
        self.ctx.meter().set_phase(Phase::Offline);
        let mut msg = Writer::new();
        msg.u32(layer).blob(&key.to_bytes()).u32(masks.len() as u32);
        let mut pairs = Vec::with_capacity(masks.len());
        for (r_x, r_w) in masks {
            if r_x.len() != plan.left_polys() || r_w.len() != plan.right_polys() {
                return Err(Error::Contract("mask polynomial count does not match the plan".into()));
            }
            let id = self.masks.allocate_id(layer);
            msg.u64(id);
            write_cts(&mut msg, &self.encrypt_all(&r_x)?);
            write_cts(&mut msg, &self.encrypt_all(&r_w)?);
            pairs.push(MaskPair { layer, id, key, r_x, r_w });
        }
        let reply = call(ep, Phase::Offline, Request::OfflinePrecompute, &msg.finish())?;
        let mut r = Reader::new(&reply);
        let stored = r.u32()? as usize;
        r.finish()?;
        for p in pairs {
            self.masks.insert(p);
        }
        Ok(stored)
    }

    /// Online phase with the layer's oldest unused mask pair.
    pub fn online(&mut self, ep: &mut Endpoint, layer: u32, key: PlanKey, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        let pair = self.masks.take_next(layer)?;
        self.online_with(ep, pair, key, x, w)
    }

    /// Online phase with a specific mask id; a consumed id is rejected before anything is sent.
    pub fn online_id(&mut self, ep: &mut Endpoint, layer: u32, id: u64, key: PlanKey, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        let pair = self.masks.take(layer, id)?;
        self.online_with(ep, pair, key, x, w)
    }

    /// Sends [x], [w], x - r_x and w - r_w; returns dec(c) - p.
    pub fn online_with(&mut self, ep: &mut Endpoint, pair: MaskPair, key: PlanKey, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        if pair.key != key {
            return Err(Error::Contract(format!("mask pair {} of layer {} was prepared for another operation", pair.id, pair.layer)));
        }
        let plan = self.plan(key)?;
        let params = self.ctx.params().clone();
        self.ctx.meter().set_phase(Phase::Online);
        *self.scheme_uses.entry(key.scheme).or_default() += 1;
        let left = to_ring(&params, plan.encode_left(x)?)?;
        let right = to_ring(&params, plan.encode_right(w)?)?;
        let xm = left.iter().zip(&pair.r_x).map(|(a, r)| a.sub(r)).collect::<Result<Vec<_>>>()?;
        let wm = right.iter().zip(&pair.r_w).map(|(a, r)| a.sub(r)).collect::<Result<Vec<_>>>()?;
        let mut msg = Writer::new();
        msg.u32(pair.layer).u64(pair.id).blob(&key.to_bytes());
        write_cts(&mut msg, &self.encrypt_all(&left)?);
        write_cts(&mut msg, &self.encrypt_all(&right)?);
        write_pts(&mut msg, &xm);
        write_pts(&mut msg, &wm);
        let reply = call(ep, Phase::Online, Request::LinearPrecompute, &msg.finish())?;
        let mut r = Reader::new(&reply);
        let cs = read_cts(&mut r, &params, plan.out_polys())?;
        let ps = read_pts(&mut r, &params, plan.out_polys())?;
        r.finish()?;
        let mut out = Vec::with_capacity(cs.len());
        for (c, p) in cs.iter().zip(&ps) {
            out.push(self.ctx.decrypt(c, &self.keys.secret)?.sub(p)?);
        }
        self.decode_out(&plan, &out)
    }
}

/// Batch-norm affine on client-normalized values: trunc(gamma * xhat) + beta per channel,
/// with the product through the precomputed protocol.
#[allow(clippy::too_many_arguments)]
pub fn bn_affine(client: &mut LinClient, ep: &mut Endpoint, layer: u32, scheme: Scheme, xhat: &[i64], gamma: &[i64], beta: &[i64], scale: u32) -> Result<Vec<i64>> {
    if gamma.is_empty() || gamma.len() != beta.len() || !xhat.len().is_multiple_of(gamma.len()) {
        return Err(Error::Contract("per-channel parameters do not match the input".into()));
    }
    let size = xhat.len() / gamma.len();
    let key = PlanKey { op: LinearOp::Scale { channels: gamma.len(), size }, scheme };
    let y = client.online(ep, layer, key, xhat, gamma)?;
    Ok(y.iter().enumerate().map(|(i, v)| (v >> scale) + beta[i / size]).collect())
}

/// The compute party: evaluates products on ciphertexts it cannot open.
pub struct LinServer {
    ctx: HeContext,
    relin: RelinKey,
    pool: TriplePool,
    plans: PlanCache,
}

impl LinServer {
    pub fn new(ctx: HeContext, relin: RelinKey) -> Self {
        LinServer { ctx, relin, pool: TriplePool::new(), plans: PlanCache::default() }
    }

    pub fn ctx(&self) -> &HeContext {
        &self.ctx
    }

    pub fn pool(&self) -> &TriplePool {
        &self.pool
    }

    pub fn pool_mut(&mut self) -> &mut TriplePool {
        &mut self.pool
    }

    fn plan(&mut self, key: PlanKey) -> Result<Arc<BilinearPlan>> {
        self.plans.get(key, self.ctx.params().n())
    }

    fn prepare_all(&self, cts: &[Ciphertext]) -> Result<Vec<PreparedCt>> {
        cts.iter().map(|c| self.ctx.prepare(c)).collect()
    }

    /// Sum of CCMul products per output polynomial.
    fn products_cc(&self, plan: &BilinearPlan, left: &[PreparedCt], right: &[PreparedCt]) -> Result<Vec<Ciphertext>> {
        let mut acc: Vec<Option<Ciphertext>> = vec![None; plan.out_polys()];
        for &(l, r, o) in plan.products() {
            let c = self.ctx.cc_mul_prepared(&left[l as usize], &right[r as usize], &self.relin)?;
            let slot = &mut acc[o as usize];
            *slot = Some(match slot.take() {
                None => c,
                Some(a) => self.ctx.cc_add(&a, &c)?,
            });
        }
        acc.into_iter().map(|c| c.ok_or_else(|| Error::Contract("output polynomial without products".into()))).collect()
    }

    pub fn direct(&mut self, body: &[u8]) -> Result<Vec<u8>> {
        self.ctx.meter().set_phase(Phase::Online);
        let params = self.ctx.params().clone();
        let mut r = Reader::new(body);
        let key = PlanKey::from_bytes(r.blob()?)?;
        let plan = self.plan(key)?;
        let left = read_cts(&mut r, &params, plan.left_polys())?;
        let right = read_cts(&mut r, &params, plan.right_polys())?;
        r.finish()?;
        let out = self.products_cc(&plan, &self.prepare_all(&left)?, &self.prepare_all(&right)?)?;
        let mut w = Writer::new();
        write_cts(&mut w, &out);
        Ok(w.finish())
    }

    pub fn offline(&mut self, body: &[u8]) -> Result<Vec<u8>> {
        self.ctx.meter().set_phase(Phase::Offline);
        let params = self.ctx.params().clone();
        let mut r = Reader::new(body);
        let layer = r.u32()?;
        let key = PlanKey::from_bytes(r.blob()?)?;
        let plan = self.plan(key)?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let id = r.u64()?;
            let rx = read_cts(&mut r, &params, plan.left_polys())?;
            let rw = read_cts(&mut r, &params, plan.right_polys())?;
            let rr = self.products_cc(&plan, &self.prepare_all(&rx)?, &self.prepare_all(&rw)?)?;
            entries.push((id, PoolEntry { key, rr }));
        }
        r.finish()?;
        for (id, e) in entries {
            self.pool.insert(layer, id, e)?;
        }
        let mut w = Writer::new();
        w.u32(count as u32);
        Ok(w.finish())
    }

    /// c = sum [x](w - r_w) + [w](x - r_x) + [r_x r_w] and p = sum (x - r_x)(w - r_w).
    pub fn online(&mut self, body: &[u8]) -> Result<Vec<u8>> {
        self.ctx.meter().set_phase(Phase::Online);
        let params = self.ctx.params().clone();
        let mut r = Reader::new(body);
        let layer = r.u32()?;
        let id = r.u64()?;
        let key = PlanKey::from_bytes(r.blob()?)?;
        let plan = self.plan(key)?;
        let entry = self.pool.take(layer, id, &key)?;
        let cx = read_cts(&mut r, &params, plan.left_polys())?;
        let cw = read_cts(&mut r, &params, plan.right_polys())?;
        let xm = read_pts(&mut r, &params, plan.left_polys())?;
        let wm = read_pts(&mut r, &params, plan.right_polys())?;
        r.finish()?;
        if entry.rr.len() != plan.out_polys() {
            return Err(Error::Contract("stored mask products do not match the plan".into()));
        }
        let (px, pw) = (self.prepare_all(&cx)?, self.prepare_all(&cw)?);
        let xm_p = xm.iter().map(|p| self.ctx.prepare_plain(p)).collect::<Result<Vec<_>>>()?;
        let wm_p = wm.iter().map(|p| self.ctx.prepare_plain(p)).collect::<Result<Vec<_>>>()?;
        let mut acc: Vec<Option<PreparedCt>> = vec![None; plan.out_polys()];
        let mut pacc: Vec<Option<RingElem>> = vec![None; plan.out_polys()];
        for &(l, rgt, o) in plan.products() {
            let (l, rgt, o) = (l as usize, rgt as usize, o as usize);
            let c1 = self.ctx.cp_mul_prepared(&px[l], &wm_p[rgt])?;
            let c2 = self.ctx.cp_mul_prepared(&pw[rgt], &xm_p[l])?;
            match &mut acc[o] {
                None => {
                    let mut a = c1;
                    self.ctx.cc_add_prepared(&mut a, &c2)?;
                    acc[o] = Some(a);
                }
                Some(a) => {
                    self.ctx.cc_add_prepared(a, &c1)?;
                    self.ctx.cc_add_prepared(a, &c2)?;
                }
            }
            let p = self.ctx.pp_mul(&xm[l], &wm[rgt])?;
            match &mut pacc[o] {
                None => pacc[o] = Some(p),
                Some(s) => s.add_assign(&p)?,
            }
        }
        let mut cs = Vec::with_capacity(plan.out_polys());
        for (a, rr) in acc.iter().zip(&entry.rr) {
            let a = a.as_ref().ok_or_else(|| Error::Contract("output polynomial without products".into()))?;
            cs.push(self.ctx.cc_add(&self.ctx.finish(a), rr)?);
        }
        let ps: Vec<RingElem> = pacc.into_iter().map(|p| p.expect("every output has a product")).collect();
        let mut w = Writer::new();
        write_cts(&mut w, &cs);
        write_pts(&mut w, &ps);
        Ok(w.finish())
    }
}
