//! Precomputed mask material: the client's masks and the server's encrypted mask products.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plan::LinearOp;
use crate::error::{Error, Result};
use crate::he::{Ciphertext, HeParams};
use crate::packing::Scheme;
use crate::ring::RingElem;
use crate::transport::wire::{Reader, Writer};

const POOL_MAGIC: &[u8; 4] = b"TPL1";
const MASK_MAGIC: &[u8; 4] = b"MSK1";

/// Identifies the polynomial layout both parties derive for a linear operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanKey {
    pub op: LinearOp,
    pub scheme: Scheme,
}

impl PlanKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("plan key serializes")
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(b)?)
    }
}

pub(crate) fn write_ct(w: &mut Writer, c: &Ciphertext) {
    w.u64(c.noise_bits().to_bits());
    w.u8(c.len() as u8);
    c.write_bytes(w.buf_mut());
}

pub(crate) fn read_ct(r: &mut Reader<'_>, params: &HeParams) -> Result<Ciphertext> {
    let noise = f64::from_bits(r.u64()?);
    let parts = r.u8()? as usize;
    let len = Ciphertext::byte_len(params, parts);
    let (c, used) = Ciphertext::read_bytes(params, r.take(len)?, noise)?;
    if used != len {
        return Err(Error::decode("ciphertext length"));
    }
    Ok(c)
}

pub(crate) fn write_pt(w: &mut Writer, p: &RingElem) {
    p.write_bytes(w.buf_mut());
}

pub(crate) fn read_pt(r: &mut Reader<'_>, params: &HeParams) -> Result<RingElem> {
    let len = RingElem::byte_len(params.plain_ring());
    RingElem::from_bytes(params.plain_ring(), r.take(len)?)
}

/// Client-held masks for one linear operation instance.
#[derive(Clone, Debug)]
pub struct MaskPair {
    pub layer: u32,
    pub id: u64,
    pub key: PlanKey,
    pub r_x: Vec<RingElem>,
    pub r_w: Vec<RingElem>,
}

/// Client side: unused mask pairs per layer, handed out once each.
#[derive(Default)]
pub struct MaskStore {
    queues: HashMap<u32, VecDeque<MaskPair>>,
    next_id: HashMap<u32, u64>,
    consumed: HashSet<(u32, u64)>,
}

impl MaskStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allocate_id(&mut self, layer: u32) -> u64 {
        let id = self.next_id.entry(layer).or_insert(0);
        *id += 1;
        *id - 1
    }

    pub fn insert(&mut self, pair: MaskPair) {
        self.queues.entry(pair.layer).or_default().push_back(pair);
    }

    pub fn available(&self, layer: u32) -> usize {
        self.queues.get(&layer).map_or(0, VecDeque::len)
    }

    pub fn peek(&self, layer: u32, id: u64) -> Option<&MaskPair> {
        self.queues.get(&layer)?.iter().find(|p| p.id == id)
    }

    /// Oldest unused pair of a layer.
    pub fn take_next(&mut self, layer: u32) -> Result<MaskPair> {
        let pair = self.queues.get_mut(&layer).and_then(VecDeque::pop_front).ok_or(Error::PrecomputeMissing(layer))?;
        self.consumed.insert((layer, pair.id));
        Ok(pair)
    }

    /// A specific pair; asking twice for the same id is a reuse violation.
    pub fn take(&mut self, layer: u32, id: u64) -> Result<MaskPair> {
        if self.consumed.contains(&(layer, id)) {
            return Err(Error::MaskReuse { layer, id });
        }
        let q = self.queues.get_mut(&layer).ok_or(Error::PrecomputeMissing(layer))?;
        let pos = q.iter().position(|p| p.id == id).ok_or(Error::PrecomputeMissing(layer))?;
        let pair = q.remove(pos).expect("position is valid");
        self.consumed.insert((layer, id));
        Ok(pair)
    }

    /// Client-only file: count header, then each pair's id, plan key and mask polynomials.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::new();
        w.bytes(MASK_MAGIC);
        let pairs: Vec<&MaskPair> = self.queues.values().flatten().collect();
        w.u32(pairs.len() as u32);
        for p in pairs {
            w.u32(p.layer).u64(p.id).blob(&p.key.to_bytes());
            w.u32(p.r_x.len() as u32).u32(p.r_w.len() as u32);
            for m in p.r_x.iter().chain(&p.r_w) {
                write_pt(&mut w, m);
            }
        }
        fs::write(path, w.finish())?;
        Ok(())
    }

    pub fn load(path: &Path, params: &HeParams) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut r = Reader::new(&bytes);
        if r.take(4)? != MASK_MAGIC {
            return Err(Error::decode("not a mask file"));
        }
        let mut store = MaskStore::new();
        for _ in 0..r.u32()? {
            let layer = r.u32()?;
            let id = r.u64()?;
            let key = PlanKey::from_bytes(r.blob()?)?;
            let (nx, nw) = (r.u32()? as usize, r.u32()? as usize);
            let r_x = (0..nx).map(|_| read_pt(&mut r, params)).collect::<Result<_>>()?;
            let r_w = (0..nw).map(|_| read_pt(&mut r, params)).collect::<Result<_>>()?;
            let next = store.next_id.entry(layer).or_insert(0);
            *next = (*next).max(id + 1);
            store.insert(MaskPair { layer, id, key, r_x, r_w });
        }
        r.finish()?;
        Ok(store)
    }
}

/// Server-held encryptions of the mask products, summed per output polynomial.
#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub key: PlanKey,
    pub rr: Vec<Ciphertext>,
}

/// Server side: per-layer entries keyed by mask id, each usable once.
#[derive(Default)]
pub struct TriplePool {
    layers: HashMap<u32, BTreeMap<u64, PoolEntry>>,
    consumed: HashSet<(u32, u64)>,
}

impl TriplePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer: u32, id: u64, entry: PoolEntry) -> Result<()> {
        if self.consumed.contains(&(layer, id)) {
            return Err(Error::MaskReuse { layer, id });
        }
        let slot = self.layers.entry(layer).or_default();
        if slot.contains_key(&id) {
            return Err(Error::Contract(format!("mask {id} of layer {layer} already stored")));
        }
        slot.insert(id, entry);
        Ok(())
    }

    pub fn available(&self, layer: u32) -> usize {
        self.layers.get(&layer).map_or(0, BTreeMap::len)
    }

    pub fn len(&self) -> usize {
        self.layers.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn take(&mut self, layer: u32, id: u64, key: &PlanKey) -> Result<PoolEntry> {
        if self.consumed.contains(&(layer, id)) {
            return Err(Error::MaskReuse { layer, id });
        }
        let entry = self.layers.get_mut(&layer).and_then(|m| m.remove(&id)).ok_or(Error::PrecomputeMissing(layer))?;
        self.consumed.insert((layer, id));
        if &entry.key != key {
            return Err(Error::Contract(format!("mask {id} of layer {layer} was prepared for a different operation")));
        }
        Ok(entry)
    }

    /// Moves every entry of `other` into this pool; returns how many were added.
    pub fn absorb(&mut self, other: TriplePool) -> Result<usize> {
        let mut added = 0;
        for (layer, entries) in other.layers {
            for (id, e) in entries {
                self.insert(layer, id, e)?;
                added += 1;
            }
        }
        Ok(added)
    }

    /// Server-only file: count header, then each entry's layer, id, plan key and ciphertexts.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::new();
        w.bytes(POOL_MAGIC);
        w.u32(self.len() as u32);
        for (layer, entries) in &self.layers {
            for (id, e) in entries {
                w.u32(*layer).u64(*id).blob(&e.key.to_bytes()).u32(e.rr.len() as u32);
                for c in &e.rr {
                    write_ct(&mut w, c);
                }
            }
        }
        fs::write(path, w.finish())?;
        Ok(())
    }

    pub fn load(path: &Path, params: &HeParams) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut r = Reader::new(&bytes);
        if r.take(4)? != POOL_MAGIC {
            return Err(Error::decode("not a pool file"));
        }
        let mut pool = TriplePool::new();
        for _ in 0..r.u32()? {
            let layer = r.u32()?;
            let id = r.u64()?;
            let key = PlanKey::from_bytes(r.blob()?)?;
            let rr = (0..r.u32()?).map(|_| read_ct(&mut r, params)).collect::<Result<_>>()?;
            pool.insert(layer, id, PoolEntry { key, rr })?;
        }
        r.finish()?;
        Ok(pool)
    }
}
