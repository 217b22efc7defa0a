//! Request framing between the client and the server party, and the server's dispatch loop.

mod client;
mod server;

pub use client::ClientSession;
pub use server::{serve, ServerSummary};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::he::Backend;
use crate::transport::wire::{Reader, Writer};
use crate::transport::{Endpoint, Phase};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Request {
    Setup = 1,
    OfflinePrecompute = 2,
    LinearDirect = 3,
    LinearPrecompute = 4,
    Relu = 5,
    MaxPool = 6,
    Drelu = 7,
    Stats = 8,
    Shutdown = 9,
    SavePool = 10,
    LoadPool = 11,
}

impl Request {
    pub fn from_tag(t: u8) -> Result<Self> {
        use Request::*;
        Ok(match t {
            1 => Setup,
            2 => OfflinePrecompute,
            3 => LinearDirect,
            4 => LinearPrecompute,
            5 => Relu,
            6 => MaxPool,
            7 => Drelu,
            8 => Stats,
            9 => Shutdown,
            10 => SavePool,
            11 => LoadPool,
            _ => return Err(Error::decode(format!("unknown request tag {t}"))),
        })
    }
}

const STATUS_OK: u8 = 0;
const STATUS_ERR: u8 = 1;

/// Session parameters the client announces; the relinearization key follows in the same message.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupParams {
    pub backend: Backend,
    pub n: usize,
    pub bits: u32,
    pub dealer_seed: u64,
}

pub fn send_request(ep: &mut Endpoint, phase: Phase, req: Request, body: &[u8]) -> Result<()> {
    let mut w = Writer::with_capacity(body.len() + 1);
    w.u8(req as u8).bytes(body);
    ep.send(phase, &w.finish())
}

pub fn recv_response(ep: &mut Endpoint, phase: Phase) -> Result<Vec<u8>> {
    let msg = ep.recv(phase)?;
    let mut r = Reader::new(&msg);
    match r.u8()? {
        STATUS_OK => Ok(r.rest().to_vec()),
        STATUS_ERR => Err(Error::Remote(String::from_utf8_lossy(r.rest()).into_owned())),
        s => Err(Error::decode(format!("unknown status {s}"))),
    }
}

/// Request followed directly by its response.
pub fn call(ep: &mut Endpoint, phase: Phase, req: Request, body: &[u8]) -> Result<Vec<u8>> {
    send_request(ep, phase, req, body)?;
    recv_response(ep, phase)
}

pub(crate) fn respond(ep: &mut Endpoint, phase: Phase, result: &Result<Vec<u8>>) -> Result<()> {
    let mut w = Writer::new();
    match result {
        Ok(body) => {
            w.u8(STATUS_OK).bytes(body);
        }
        Err(e) => {
            w.u8(STATUS_ERR).bytes(e.to_string().as_bytes());
        }
    }
    ep.send(phase, &w.finish())
}
