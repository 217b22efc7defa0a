use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::transport::Phase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeOp {
    CcMul,
    CpMul,
    CcAdd,
    PpMul,
    Relin,
    Enc,
    Dec,
}

impl HeOp {
    pub const ALL: [HeOp; 7] = [HeOp::CcMul, HeOp::CpMul, HeOp::CcAdd, HeOp::PpMul, HeOp::Relin, HeOp::Enc, HeOp::Dec];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            HeOp::CcMul => "ccmul",
            HeOp::CpMul => "cpmul",
            HeOp::CcAdd => "ccadd",
            HeOp::PpMul => "ppmul",
            HeOp::Relin => "relin",
            HeOp::Enc => "enc",
            HeOp::Dec => "dec",
        }
    }
}

const PHASES: usize = Phase::ALL.len();
const OPS: usize = HeOp::ALL.len();

/// Per-party operation counters and cumulative time, bucketed by the current phase.
///
/// Increments are atomic so a meter can be shared between threads without torn counts.
#[derive(Debug, Default)]
pub struct OpMeter {
    phase: AtomicU8,
    counts: [[AtomicU64; OPS]; PHASES],
    nanos: [[AtomicU64; OPS]; PHASES],
}

impl OpMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_phase(&self, phase: Phase) {
        self.phase.store(phase.index() as u8, Ordering::Relaxed);
    }

    pub fn phase(&self) -> Phase {
        Phase::ALL[self.phase.load(Ordering::Relaxed) as usize]
    }

    pub fn record(&self, op: HeOp, elapsed: Duration) {
        let p = self.phase.load(Ordering::Relaxed) as usize;
        self.counts[p][op.index()].fetch_add(1, Ordering::Relaxed);
        self.nanos[p][op.index()].fetch_add(elapsed.as_nanos() as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MeterSnapshot {
        let mut s = MeterSnapshot::default();
        for p in 0..PHASES {
            for o in 0..OPS {
                s.counts[p][o] = self.counts[p][o].load(Ordering::Relaxed);
                s.nanos[p][o] = self.nanos[p][o].load(Ordering::Relaxed);
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterSnapshot {
    counts: [[u64; OPS]; PHASES],
    nanos: [[u64; OPS]; PHASES],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeterRow {
    pub phase: Phase,
    pub op: HeOp,
    pub count: u64,
    pub seconds: f64,
}

impl MeterSnapshot {
    pub fn count(&self, phase: Phase, op: HeOp) -> u64 {
        self.counts[phase.index()][op.index()]
    }

    pub fn seconds(&self, phase: Phase, op: HeOp) -> f64 {
        self.nanos[phase.index()][op.index()] as f64 * 1e-9
    }

    pub fn total(&self, op: HeOp) -> u64 {
        Phase::ALL.iter().map(|&p| self.count(p, op)).sum()
    }

    /// Counters accumulated after `earlier` was taken.
    pub fn since(&self, earlier: &MeterSnapshot) -> MeterSnapshot {
        let mut d = *self;
        for p in 0..PHASES {
            for o in 0..OPS {
                d.counts[p][o] -= earlier.counts[p][o];
                d.nanos[p][o] -= earlier.nanos[p][o];
            }
        }
        d
    }

    pub fn merged(&self, other: &MeterSnapshot) -> MeterSnapshot {
        let mut d = *self;
        for p in 0..PHASES {
            for o in 0..OPS {
                d.counts[p][o] += other.counts[p][o];
                d.nanos[p][o] += other.nanos[p][o];
            }
        }
        d
    }

    /// Non-zero rows, for reports.
    pub fn rows(&self) -> Vec<MeterRow> {
        let mut rows = Vec::new();
        for &phase in &Phase::ALL {
            for &op in &HeOp::ALL {
                let count = self.count(phase, op);
                if count > 0 {
                    rows.push(MeterRow { phase, op, count, seconds: self.seconds(phase, op) });
                }
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_are_separate() {
        let m = OpMeter::new();
        m.set_phase(Phase::Offline);
        m.record(HeOp::CcMul, Duration::from_micros(5));
        m.set_phase(Phase::Online);
        m.record(HeOp::CpMul, Duration::from_micros(1));
        m.record(HeOp::CpMul, Duration::from_micros(1));
        let s = m.snapshot();
        assert_eq!(s.count(Phase::Offline, HeOp::CcMul), 1);
        assert_eq!(s.count(Phase::Online, HeOp::CcMul), 0);
        assert_eq!(s.count(Phase::Online, HeOp::CpMul), 2);
        assert_eq!(s.total(HeOp::CpMul), 2);
        let later = {
            m.record(HeOp::CpMul, Duration::ZERO);
            m.snapshot()
        };
        assert_eq!(later.since(&s).count(Phase::Online, HeOp::CpMul), 1);
        assert_eq!(s.rows().len(), 2);
    }

    #[test]
    fn concurrent_increments_are_not_torn() {
        let m = std::sync::Arc::new(OpMeter::new());
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let m = m.clone();
                std::thread::spawn(move || {
                    for _ in 0..10_000 {
                        m.record(HeOp::CcAdd, Duration::ZERO);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(m.snapshot().total(HeOp::CcAdd), 40_000);
    }
}
