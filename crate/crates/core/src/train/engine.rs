use std::thread::{self, JoinHandle};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model::LinearUse;
use crate::error::{Error, Result};
use crate::linprot::{LinearOp, PlanKey};
use crate::packing::Scheme;
use crate::party::{serve, ClientSession, ServerSummary, SetupParams};
use crate::transport::{CommStats, Endpoint, NetSim, Phase};

/// Which linear protocol the secure engine runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Ciphertext-ciphertext products online.
    #[serde(rename = "b")]
    Direct,
    /// Mask products offline, ciphertext-plaintext products online.
    #[default]
    Precompute,
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b" | "direct" => Ok(Protocol::Direct),
            "precompute" => Ok(Protocol::Precompute),
            _ => Err(Error::Params(format!("unknown protocol {s:?}"))),
        }
    }
}

/// Online/offline wall time (plus simulated link time) and bytes on the client's endpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    pub online_seconds: f64,
    pub offline_seconds: f64,
    pub bytes_online: u64,
    pub bytes_offline: u64,
}

/// The operations the trainer hands off; everything else runs on the client's plaintext.
pub trait Engine {
    /// Exact integer result of a bilinear operation.
    fn linear(&mut self, slot: u32, op: LinearOp, x: &[i64], w: &[i64]) -> Result<Vec<i64>>;
    fn relu(&mut self, x: &[i64]) -> Result<Vec<i64>>;
    /// Max over consecutive groups of `window` values.
    fn maxpool(&mut self, x: &[i64], window: usize) -> Result<Vec<i64>>;
    /// Input-independent preparation for `count` uses of each operation.
    fn prepare(&mut self, _uses: &[LinearUse], _count: usize) -> Result<()> {
        Ok(())
    }
    fn costs(&self) -> Costs {
        Costs::default()
    }
    /// Called before the trainer runs layer `layer` forward or backward.
    fn enter_layer(&mut self, _layer: usize, _backward: bool) {}
}

/// Plaintext evaluation on the client.
#[derive(Default)]
pub struct ReferenceEngine;

impl Engine for ReferenceEngine {
    fn linear(&mut self, _slot: u32, op: LinearOp, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        op.eval(x, w)
    }

    fn relu(&mut self, x: &[i64]) -> Result<Vec<i64>> {
        Ok(x.iter().map(|&v| v.max(0)).collect())
    }

    fn maxpool(&mut self, x: &[i64], window: usize) -> Result<Vec<i64>> {
        if window == 0 || !x.len().is_multiple_of(window) {
            return Err(Error::Contract(format!("{} values do not split into windows of {window}", x.len())));
        }
        Ok(x.chunks(window).map(|c| *c.iter().max().expect("non-empty window")).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecureConfig {
    pub setup: SetupParams,
    pub protocol: Protocol,
    pub scheme: Scheme,
    pub seed: u64,
}

/// Linear layers through the HE protocols and nonlinear layers through OT, against a server.
pub struct SecureEngine {
    ep: Endpoint,
    session: ClientSession,
    cfg: SecureConfig,
    server: Option<JoinHandle<Result<ServerSummary>>>,
    wall_online: f64,
    wall_offline: f64,
}

impl SecureEngine {
    pub fn connect(mut ep: Endpoint, cfg: SecureConfig) -> Result<Self> {
        let session = ClientSession::setup(&mut ep, cfg.setup, cfg.seed)?;
        Ok(SecureEngine { ep, session, cfg, server: None, wall_online: 0.0, wall_offline: 0.0 })
    }

    /// Runs the server on a thread over an in-process link.
    pub fn in_process(cfg: SecureConfig, sim: Option<NetSim>) -> Result<Self> {
        let (mut ep, mut sep) = Endpoint::pair();
        ep.set_netsim(sim);
        let server = thread::spawn(move || serve(&mut sep));
        let mut e = Self::connect(ep, cfg)?;
        e.server = Some(server);
        Ok(e)
    }

    pub fn session(&mut self) -> &mut ClientSession {
        &mut self.session
    }

    pub fn endpoint(&mut self) -> &mut Endpoint {
        &mut self.ep
    }

    pub fn comm(&self) -> &CommStats {
        self.ep.stats()
    }

    pub fn server_stats(&mut self) -> Result<ServerSummary> {
        self.session.stats(&mut self.ep)
    }

    /// Ends the session; returns the server's final summary.
    pub fn finish(mut self) -> Result<ServerSummary> {
        let summary = self.session.shutdown(&mut self.ep)?;
        if let Some(h) = self.server.take() {
            h.join().map_err(|_| Error::Contract("server thread panicked".into()))??;
        }
        Ok(summary)
    }

    fn key(&self, op: LinearOp) -> PlanKey {
        PlanKey { op, scheme: self.cfg.scheme }
    }

    fn timed<T>(&mut self, online: bool, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let r = f(self);
        let dt = start.elapsed().as_secs_f64();
        if online {
            self.wall_online += dt;
        } else {
            self.wall_offline += dt;
        }
        r
    }
}

impl Engine for SecureEngine {
    fn linear(&mut self, slot: u32, op: LinearOp, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        let key = self.key(op);
        self.timed(true, |s| match s.cfg.protocol {
            Protocol::Direct => s.session.lin().direct(&mut s.ep, key, x, w),
            Protocol::Precompute => s.session.lin().online(&mut s.ep, slot, key, x, w),
        })
    }

    fn relu(&mut self, x: &[i64]) -> Result<Vec<i64>> {
        self.timed(true, |s| s.session.relu(&mut s.ep, x))
    }

    fn maxpool(&mut self, x: &[i64], window: usize) -> Result<Vec<i64>> {
        self.timed(true, |s| s.session.maxpool(&mut s.ep, x, window))
    }

    fn prepare(&mut self, uses: &[LinearUse], count: usize) -> Result<()> {
        if self.cfg.protocol == Protocol::Direct || count == 0 {
            return Ok(());
        }
        self.timed(false, |s| {
            for u in uses {
                let key = s.key(u.op);
                s.session.lin().offline(&mut s.ep, u.slot, key, count)?;
            }
            Ok(())
        })
    }

    fn costs(&self) -> Costs {
        let st = self.ep.stats();
        let (on, nl, off) = (st.phase(Phase::Online), st.phase(Phase::Nonlinear), st.phase(Phase::Offline));
        Costs {
            online_seconds: self.wall_online + on.sim_seconds + nl.sim_seconds,
            offline_seconds: self.wall_offline + off.sim_seconds,
            bytes_online: on.bytes() + nl.bytes(),
            bytes_offline: off.bytes(),
        }
    }
}
