use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{respond, Request, SetupParams};
use crate::error::{Error, Result};
use crate::he::{HeContext, HeParams, MeterSnapshot, OpMeter, RelinKey};
use crate::linprot::{LinServer, TriplePool};
use crate::mpc::{Mpc, Party};
use crate::transport::wire::{Reader, Writer};
use crate::transport::{CommReport, Endpoint, Phase};

/// What the server reports on a Stats request and when the session ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerSummary {
    pub requests: u64,
    pub errors: u64,
    pub meter: MeterSnapshot,
    pub comm: CommReport,
    pub pool_entries: usize,
}

struct Session {
    lin: LinServer,
    mpc: Mpc,
    meter: Arc<OpMeter>,
}

pub(crate) fn write_shares(w: &mut Writer, v: &[u64]) {
    w.u32(v.len() as u32);
    for &x in v {
        w.u64(x);
    }
}

pub(crate) fn read_shares(r: &mut Reader<'_>) -> Result<Vec<u64>> {
    let n = r.u32()? as usize;
    (0..n).map(|_| r.u64()).collect()
}

fn setup(body: &[u8]) -> Result<Session> {
    let mut r = Reader::new(body);
    let p: SetupParams = serde_json::from_slice(r.blob()?)?;
    let params = HeParams::with_backend(p.backend, p.n)?;
    let rest = r.rest();
    let (relin, used) = RelinKey::read_bytes(&params, rest)?;
    if used != rest.len() {
        return Err(Error::decode("trailing bytes after relinearization key"));
    }
    let meter = Arc::new(OpMeter::new());
    let ctx = HeContext::new(params, meter.clone());
    let mpc = Mpc::new(Party::Server, p.bits, p.dealer_seed, rand::rng().random())?;
    Ok(Session { lin: LinServer::new(ctx, relin), mpc, meter })
}

fn nonlinear(s: &mut Session, ep: &mut Endpoint, req: Request, body: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader::new(body);
    let window = if req == Request::MaxPool { r.u32()? as usize } else { 0 };
    let x = read_shares(&mut r)?;
    r.finish()?;
    let ring = s.mpc.ring();
    if x.iter().any(|&v| v > ring.mask()) {
        return Err(Error::Bitwidth(64 - x.iter().max().unwrap().leading_zeros(), ring.bits()));
    }
    s.mpc.set_phase(Phase::Nonlinear);
    let mut w = Writer::new();
    match req {
        Request::Relu => write_shares(&mut w, &s.mpc.relu(ep, &x)?.0),
        Request::MaxPool => write_shares(&mut w, &s.mpc.maxpool(ep, &x, window)?),
        Request::Drelu => {
            let bits = s.mpc.drelu(ep, &x)?;
            w.u32(bits.len() as u32).bytes(&bits);
        }
        _ => unreachable!("not a nonlinear request"),
    }
    Ok(w.finish())
}

fn pool_path(body: &[u8]) -> Result<PathBuf> {
    let s = std::str::from_utf8(body).map_err(|_| Error::decode("pool path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn save_pool(s: &Session, body: &[u8]) -> Result<Vec<u8>> {
    s.lin.pool().save(&pool_path(body)?)?;
    Ok((s.lin.pool().len() as u32).to_le_bytes().to_vec())
}

/// Adds a saved pool to the session's; ids already consumed in this session are rejected.
fn load_pool(s: &mut Session, body: &[u8]) -> Result<Vec<u8>> {
    let pool = TriplePool::load(&pool_path(body)?, s.lin.ctx().params())?;
    let n = s.lin.pool_mut().absorb(pool)?;
    Ok((n as u32).to_le_bytes().to_vec())
}

/// Serves one client until it sends Shutdown or the link closes.
///
/// A failed request is answered with an error status and the session stays open, except for
/// nonlinear requests whose OT stream may be out of step afterwards.
pub fn serve(ep: &mut Endpoint) -> Result<ServerSummary> {
    let mut session: Option<Session> = None;
    let mut requests = 0u64;
    let mut errors = 0u64;
    let summary = |s: &Option<Session>, ep: &Endpoint, requests, errors| ServerSummary {
        requests,
        errors,
        meter: s.as_ref().map(|s| s.meter.snapshot()).unwrap_or_default(),
        comm: ep.comm_report(),
        pool_entries: s.as_ref().map_or(0, |s| s.lin.pool().len()),
    };
    loop {
        let (phase, msg) = match ep.recv_any() {
            Ok(m) => m,
            Err(Error::ChannelClosed) => return Ok(summary(&session, ep, requests, errors)),
            Err(e) => return Err(e),
        };
        requests += 1;
        let mut r = Reader::new(&msg);
        let req = r.u8().and_then(Request::from_tag);
        let body = r.rest();
        let result = match req {
            Err(e) => Err(e),
            Ok(Request::Shutdown) => {
                let s = summary(&session, ep, requests, errors);
                respond(ep, phase, &Ok(serde_json::to_vec(&s)?))?;
                return Ok(s);
            }
            Ok(Request::Setup) => setup(body).map(|s| {
                session = Some(s);
                Vec::new()
            }),
            Ok(Request::Stats) => Ok(serde_json::to_vec(&summary(&session, ep, requests, errors))?),
            Ok(req) => match session.as_mut() {
                None => Err(Error::Contract("request before setup".into())),
                Some(s) => match req {
                    Request::OfflinePrecompute => s.lin.offline(body),
                    Request::LinearDirect => s.lin.direct(body),
                    Request::LinearPrecompute => s.lin.online(body),
                    Request::Relu | Request::MaxPool | Request::Drelu => nonlinear(s, ep, req, body),
                    Request::SavePool => save_pool(s, body),
                    Request::LoadPool => load_pool(s, body),
                    Request::Setup | Request::Stats | Request::Shutdown => unreachable!(),
                },
            },
        };
        if result.is_err() {
            errors += 1;
        }
        respond(ep, phase, &result)?;
    }
}
