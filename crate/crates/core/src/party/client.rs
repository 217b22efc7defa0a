use std::sync::Arc;

use super::server::{read_shares, write_shares};
use super::{call, recv_response, send_request, Request, ServerSummary, SetupParams};
use crate::error::{Error, Result};
use crate::he::{keygen, HeContext, HeParams, OpMeter};
use crate::linprot::LinClient;
use crate::mpc::{share_vec, Mpc, Party};
use crate::transport::wire::{Reader, Writer};
use crate::transport::{Endpoint, Phase};

/// The data owner's end of a session: holds the keys, the masks and its OT state.
pub struct ClientSession {
    lin: LinClient,
    mpc: Mpc,
    meter: Arc<OpMeter>,
    setup: SetupParams,
}

impl ClientSession {
    /// Generates keys, announces the parameters and hands the relinearization key to the server.
    pub fn setup(ep: &mut Endpoint, setup: SetupParams, seed: u64) -> Result<Self> {
        let params = HeParams::with_backend(setup.backend, setup.n)?;
        let keys = keygen(&params, seed)?;
        let mut w = Writer::new();
        w.blob(&serde_json::to_vec(&setup)?);
        keys.relin.write_bytes(w.buf_mut());
        call(ep, Phase::Setup, Request::Setup, &w.finish())?;
        let meter = Arc::new(OpMeter::new());
        let ctx = HeContext::new(params, meter.clone());
        let mpc = Mpc::new(Party::Client, setup.bits, setup.dealer_seed, seed ^ 0x5eed_c11e)?;
        Ok(ClientSession { lin: LinClient::new(ctx, keys, seed.wrapping_add(1)), mpc, meter, setup })
    }

    pub fn params(&self) -> &SetupParams {
        &self.setup
    }

    pub fn lin(&mut self) -> &mut LinClient {
        &mut self.lin
    }

    pub fn meter(&self) -> &Arc<OpMeter> {
        &self.meter
    }

    fn encode(&self, x: &[i64]) -> Result<Vec<u64>> {
        let ring = self.mpc.ring();
        let bound = 1i64 << (ring.bits() - 2).min(62);
        if let Some(v) = x.iter().find(|v| v.abs() >= bound) {
            return Err(Error::Overflow(format!("{v} exceeds the {}-bit share ring", ring.bits())));
        }
        Ok(x.iter().map(|&v| ring.encode(v)).collect())
    }

    /// Shares `x`, keeps one share, runs the protocol on it and opens the result.
    fn shared(&mut self, ep: &mut Endpoint, req: Request, window: usize, x: &[i64]) -> Result<Vec<u64>> {
        let enc = self.encode(x)?;
        let ring = self.mpc.ring();
        let (mine, theirs) = share_vec(&enc, ring, self.mpc.rng());
        let mut w = Writer::new();
        if req == Request::MaxPool {
            w.u32(window as u32);
        }
        write_shares(&mut w, &theirs);
        self.mpc.set_phase(Phase::Nonlinear);
        send_request(ep, Phase::Nonlinear, req, &w.finish())?;
        let own = match req {
            Request::Relu => self.mpc.relu(ep, &mine)?.0,
            Request::MaxPool => self.mpc.maxpool(ep, &mine, window)?,
            Request::Drelu => self.mpc.drelu(ep, &mine)?.into_iter().map(u64::from).collect(),
            _ => unreachable!("not a nonlinear request"),
        };
        let reply = recv_response(ep, Phase::Nonlinear)?;
        let mut r = Reader::new(&reply);
        let other: Vec<u64> = if req == Request::Drelu {
            let n = r.u32()? as usize;
            r.take(n)?.iter().map(|&b| u64::from(b)).collect()
        } else {
            read_shares(&mut r)?
        };
        r.finish()?;
        if other.len() != own.len() {
            return Err(Error::decode("share count mismatch"));
        }
        Ok(match req {
            Request::Drelu => own.iter().zip(&other).map(|(a, b)| a ^ b).collect(),
            _ => own.iter().zip(&other).map(|(&a, &b)| ring.add(a, b)).collect(),
        })
    }

    pub fn relu(&mut self, ep: &mut Endpoint, x: &[i64]) -> Result<Vec<i64>> {
        let ring = self.mpc.ring();
        Ok(self.shared(ep, Request::Relu, 0, x)?.into_iter().map(|v| ring.decode(v)).collect())
    }

    /// 1 where x >= 0.
    pub fn drelu(&mut self, ep: &mut Endpoint, x: &[i64]) -> Result<Vec<u8>> {
        Ok(self.shared(ep, Request::Drelu, 0, x)?.into_iter().map(|b| b as u8).collect())
    }

    /// Max over consecutive groups of `window` values.
    pub fn maxpool(&mut self, ep: &mut Endpoint, x: &[i64], window: usize) -> Result<Vec<i64>> {
        let ring = self.mpc.ring();
        Ok(self.shared(ep, Request::MaxPool, window, x)?.into_iter().map(|v| ring.decode(v)).collect())
    }

    /// Asks the server to write its precomputed pool to `path` on its own filesystem.
    pub fn save_pool(&self, ep: &mut Endpoint, path: &str) -> Result<usize> {
        let r = call(ep, Phase::Offline, Request::SavePool, path.as_bytes())?;
        Ok(u32::from_le_bytes(r.as_slice().try_into().map_err(|_| Error::decode("pool size"))?) as usize)
    }

    pub fn load_pool(&self, ep: &mut Endpoint, path: &str) -> Result<usize> {
        let r = call(ep, Phase::Offline, Request::LoadPool, path.as_bytes())?;
        Ok(u32::from_le_bytes(r.as_slice().try_into().map_err(|_| Error::decode("pool size"))?) as usize)
    }

    pub fn stats(&self, ep: &mut Endpoint) -> Result<ServerSummary> {
        Ok(serde_json::from_slice(&call(ep, Phase::Setup, Request::Stats, &[])?)?)
    }

    pub fn shutdown(self, ep: &mut Endpoint) -> Result<ServerSummary> {
        Ok(serde_json::from_slice(&call(ep, Phase::Setup, Request::Shutdown, &[])?)?)
    }
}
