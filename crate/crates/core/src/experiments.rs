//! Desk-scale experiment runners behind the service and the `sectrain` CLI.
//!
//! Every runner takes a serde config and returns a report with a flat `rows` table (written as
//! CSV) and whatever nested detail belongs with it (written as JSON).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::he::{keygen, Backend, HeContext, HeOp, HeParams, OpMeter};
use crate::linprot::LinearOp;
use crate::packing::{count_report, ConvShape, DegreeCap, Scheme};
use crate::party::{ServerSummary, SetupParams};
use crate::ring::RingElem;
use crate::train::{
    window_means, write_metrics_csv, Costs, Dataset, EpochMetrics, Engine, FixParams, LayerSpec, LinearUse, Model,
    ModelSpec, Protocol, ReferenceEngine, SecureConfig, SecureEngine, TrainConfig, Trainer,
};
use crate::transport::{Endpoint, NetSim, Phase};

/// Table output shared by every report.
pub trait Table {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()>;
}

fn csv_rows<T: Serialize>(rows: &[T], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------------------------
// counts

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountsConfig {
    pub n: usize,
    /// Square input sizes swept at `fixed_kernel`.
    pub inputs: Vec<usize>,
    pub fixed_kernel: usize,
    /// Kernel sizes swept at `fixed_input`.
    pub kernels: Vec<usize>,
    pub fixed_input: usize,
}

impl Default for CountsConfig {
    fn default() -> Self {
        CountsConfig {
            n: 4096,
            inputs: vec![8, 16, 24, 32, 40, 48, 56, 64],
            fixed_kernel: 5,
            kernels: vec![3, 5, 7, 9, 11],
            fixed_input: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub sweep: String,
    pub input: usize,
    pub kernel: usize,
    pub pad: usize,
    pub degree_cap: usize,
    pub baseline_mults: usize,
    pub correlated_mults: usize,
    pub ratio: f64,
    pub baseline_max_degree: usize,
    pub correlated_max_degree: usize,
    pub n1: usize,
    pub n2: usize,
    pub window_h: usize,
    pub window_w: usize,
    pub utilization: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CountsReport {
    pub rows: Vec<CountRow>,
    pub warnings: Vec<String>,
}

impl Table for CountsReport {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        csv_rows(&self.rows, out)
    }
}

impl CountsReport {
    pub fn sweep(&self, name: &str) -> Vec<&CountRow> {
        self.rows.iter().filter(|r| r.sweep == name).collect()
    }
}

/// The 2x2 input, 2x2 kernel, pad 1 layer packed under a degree-8 cap.
pub const TOY: (usize, usize, usize, usize) = (2, 2, 1, 8);

fn count_row(sweep: &str, input: usize, kernel: usize, pad: usize, cap: usize) -> Result<CountRow> {
    let shape = ConvShape::new(input, input, kernel, pad)?;
    let cap = if sweep == "toy" { DegreeCap(cap) } else { DegreeCap::ring(cap) };
    let r = count_report(&shape, cap, Scheme::Correlated)?;
    Ok(CountRow {
        sweep: sweep.into(),
        input,
        kernel,
        pad,
        degree_cap: cap.0,
        baseline_mults: r.baseline_mults,
        correlated_mults: r.correlated_mults,
        ratio: r.baseline_mults as f64 / r.correlated_mults as f64,
        baseline_max_degree: r.baseline_max_degree,
        correlated_max_degree: r.correlated_max_degree,
        n1: r.n1,
        n2: r.n2,
        window_h: r.window_h,
        window_w: r.window_w,
        utilization: r.utilization,
    })
}

/// Baseline vs correlated multiplication counts; "same" padding `(k-1)/2` throughout the sweeps.
pub fn run_counts(cfg: &CountsConfig) -> Result<CountsReport> {
    let mut rep = CountsReport::default();
    let (h, k, pad, cap) = TOY;
    rep.rows.push(count_row("toy", h, k, pad, cap)?);
    let jobs = cfg
        .inputs
        .iter()
        .map(|&h| ("input", h, cfg.fixed_kernel))
        .chain(cfg.kernels.iter().map(|&k| ("kernel", cfg.fixed_input, k)));
    for (sweep, h, k) in jobs {
        match count_row(sweep, h, k, k.saturating_sub(1) / 2, cfg.n) {
            Ok(r) => rep.rows.push(r),
            Err(e) => rep.warnings.push(format!("skipped {sweep} sweep {h}x{h} k{k}: {e}")),
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------------------------
// bench-he

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub backend: Backend,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { backend: Backend::Rlwe, n: 4096, trials: 100, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub op: String,
    pub trials: usize,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub rows: Vec<LatencyRow>,
    /// Median ciphertext-ciphertext over median ciphertext-plaintext multiplication latency.
    pub cc_cp_ratio: f64,
}

impl Table for BenchReport {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        csv_rows(&self.rows, out)
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

fn latency(op: &str, mut ms: Vec<f64>) -> LatencyRow {
    ms.sort_by(f64::total_cmp);
    LatencyRow {
        op: op.into(),
        trials: ms.len(),
        median_ms: percentile(&ms, 0.5),
        p10_ms: percentile(&ms, 0.1),
        p90_ms: percentile(&ms, 0.9),
    }
}

fn refuse_clear(backend: Backend, what: &str) -> Result<()> {
    if backend == Backend::Clear {
        return Err(Error::Backend(format!("{what} measures time and needs the rlwe backend, not clear")));
    }
    Ok(())
}

/// Latency of each homomorphic operation on fresh ciphertexts of uniformly random payloads.
pub fn run_bench_he(cfg: &BenchConfig) -> Result<BenchReport> {
    refuse_clear(cfg.backend, "bench-he")?;
    if cfg.trials == 0 {
        return Err(Error::Params("bench-he needs at least one trial".into()));
    }
    let params = HeParams::with_backend(cfg.backend, cfg.n)?;
    let keys = keygen(&params, cfg.seed)?;
    let ctx = HeContext::new(params, Arc::new(OpMeter::new()));
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0xbe4c);
    let t = ctx.params().plain_modulus();
    let (n, trials) = (cfg.n, cfg.trials);
    let mut plain = || -> Result<RingElem> {
        let v: Vec<u64> = (0..n).map(|_| rng.random_range(0..t)).collect();
        RingElem::from_u64(ctx.params().plain_ring(), &v)
    };
    let mut times: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut enc_rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0xe4c);
    for _ in 0..trials {
        let (a, b, w) = (plain()?, plain()?, plain()?);
        let mut time = |name: &'static str, start: Instant| {
            times.entry(name).or_default().push(start.elapsed().as_secs_f64() * 1e3);
        };
        let s = Instant::now();
        let ea = ctx.encrypt(&a, &keys.public, &mut enc_rng)?;
        time("enc", s);
        let eb = ctx.encrypt(&b, &keys.public, &mut enc_rng)?;
        let s = Instant::now();
        let cc = ctx.cc_mul(&ea, &eb, &keys.relin)?;
        time("cc_mul", s);
        let s = Instant::now();
        let cp = ctx.cp_mul(&ea, &w)?;
        time("cp_mul", s);
        let s = Instant::now();
        let sum = ctx.cc_add(&cc, &cp)?;
        time("cc_add", s);
        let s = Instant::now();
        let m = ctx.decrypt(&sum, &keys.secret)?;
        time("dec", s);
        let expect = a.mul(&b)?.add(&w.mul(&a)?)?;
        if m != expect {
            return Err(Error::Contract("benchmark ciphertext decrypted to the wrong value".into()));
        }
    }
    let rows: Vec<LatencyRow> = ["enc", "cc_mul", "cp_mul", "cc_add", "dec"]
        .into_iter()
        .map(|op| latency(op, times.remove(op).unwrap_or_default()))
        .collect();
    let med = |op: &str| rows.iter().find(|r| r.op == op).map_or(f64::NAN, |r| r.median_ms);
    Ok(BenchReport { n: cfg.n, cc_cp_ratio: med("cc_mul") / med("cp_mul"), rows })
}

// ---------------------------------------------------------------------------------------------
// data and secure settings

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// 28x28 generated digits-like blobs, ten classes.
    Synthetic { n: usize, seed: u64 },
    Idx { images: PathBuf, labels: PathBuf, limit: Option<usize> },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { n: 64, seed: 7 }
    }
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Synthetic { n, seed } => Ok(Dataset::synthetic(*n, 28, 28, 10, *seed)),
            DataSource::Idx { images, labels, limit } => {
                let d = Dataset::load_idx(images, labels)?;
                Ok(limit.map_or(d.clone(), |l| d.take(l)))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecureSettings {
    pub backend: Backend,
    pub n: usize,
    pub protocol: Protocol,
    pub scheme: Scheme,
    pub seed: u64,
    pub netsim: Option<NetSim>,
}

impl Default for SecureSettings {
    fn default() -> Self {
        SecureSettings {
            backend: Backend::Clear,
            n: 4096,
            protocol: Protocol::Precompute,
            scheme: Scheme::Correlated,
            seed: 1,
            netsim: None,
        }
    }
}

impl SecureSettings {
    pub fn config(&self, fix: &FixParams) -> SecureConfig {
        SecureConfig {
            setup: SetupParams { backend: self.backend, n: self.n, bits: fix.bits, dealer_seed: self.seed ^ 0xdea1 },
            protocol: self.protocol,
            scheme: self.scheme,
            seed: self.seed,
        }
    }

    /// In-process server, or a party server at `addr`.
    pub fn engine(&self, fix: &FixParams, addr: Option<&str>) -> Result<SecureEngine> {
        let cfg = self.config(fix);
        match addr {
            None => SecureEngine::in_process(cfg, self.netsim),
            Some(a) => {
                let mut ep = Endpoint::connect(a)?;
                ep.set_netsim(self.netsim);
                SecureEngine::connect(ep, cfg)
            }
        }
    }
}

// ---------------------------------------------------------------------------------------------
// train

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Reference,
    #[default]
    Secure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRequest {
    pub model: ModelSpec,
    pub data: DataSource,
    pub test: Option<DataSource>,
    pub train: TrainConfig,
    pub engine: EngineKind,
    pub secure: SecureSettings,
    /// Also train the plaintext reference and compare the final weights.
    pub verify: bool,
    /// Address of a party server; in-process when absent.
    pub party: Option<String>,
}

impl Default for TrainRequest {
    fn default() -> Self {
        TrainRequest {
            model: ModelSpec::toy_mnist(1),
            data: DataSource::default(),
            test: None,
            train: TrainConfig::default(),
            engine: EngineKind::Secure,
            secure: SecureSettings::default(),
            verify: false,
            party: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples: usize,
    pub params: usize,
    pub metrics: Vec<EpochMetrics>,
    /// Batch-loss means over four consecutive quarters of each epoch.
    pub loss_quarters: Vec<Vec<f64>>,
    pub test_accuracy: Option<f64>,
    pub matches_reference: Option<bool>,
    pub server: Option<ServerSummary>,
    #[serde(skip)]
    pub model: Option<Model>,
}

impl Table for TrainReport {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        write_metrics_csv(out, &self.metrics)
    }
}

fn evaluate<E: Engine>(t: &mut Trainer<E>, test: Option<&Dataset>) -> Result<Option<f64>> {
    test.map(|d| t.accuracy(d)).transpose()
}

pub fn run_train(req: &TrainRequest) -> Result<TrainReport> {
    FixParams::new(req.train.fix.bits, req.train.fix.scale)?;
    let data = req.data.load()?;
    let test = req.test.as_ref().map(DataSource::load).transpose()?;
    let fix = req.train.fix;
    let model = Model::init(req.model.clone(), &fix)?;
    let (model, metrics, test_accuracy, server) = match req.engine {
        EngineKind::Reference => {
            let mut t = Trainer::new(model, ReferenceEngine, req.train);
            let metrics = t.train(&data)?;
            let acc = evaluate(&mut t, test.as_ref())?;
            (t.model, metrics, acc, None)
        }
        EngineKind::Secure => {
            let engine = req.secure.engine(&fix, req.party.as_deref())?;
            let mut t = Trainer::new(model, engine, req.train);
            let metrics = t.train(&data)?;
            let acc = evaluate(&mut t, test.as_ref())?;
            let Trainer { model, engine, .. } = t;
            (model, metrics, acc, Some(engine.finish()?))
        }
    };
    let matches_reference = if req.verify {
        let mut r = Trainer::new(Model::init(req.model.clone(), &fix)?, ReferenceEngine, req.train);
        r.train(&data)?;
        Some(r.model == model)
    } else {
        None
    };
    Ok(TrainReport {
        samples: data.len(),
        params: model.num_params(),
        loss_quarters: metrics.iter().map(|m| window_means(&m.batch_losses, 4)).collect(),
        metrics,
        test_accuracy,
        matches_reference,
        server,
        model: Some(model),
    })
}

// ---------------------------------------------------------------------------------------------
// ablate and breakdown

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateConfig {
    pub model: ModelSpec,
    pub data: DataSource,
    pub fix: FixParams,
    pub secure: SecureSettings,
    /// Protocols compared; the `protocol` field of `secure` is ignored.
    pub protocols: Vec<Protocol>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            model: ModelSpec::toy_mnist(1),
            data: DataSource::Synthetic { n: 2, seed: 7 },
            fix: FixParams::default(),
            secure: SecureSettings { backend: Backend::Rlwe, ..SecureSettings::default() },
            protocols: vec![Protocol::Direct, Protocol::Precompute],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateRow {
    pub protocol: Protocol,
    pub samples: usize,
    pub online_seconds: f64,
    pub offline_seconds: f64,
    pub bytes_online: u64,
    pub bytes_offline: u64,
    pub rounds_online: u64,
    pub online_cc_mul: u64,
    pub online_cp_mul: u64,
    pub offline_cc_mul: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateReport {
    pub rows: Vec<AblateRow>,
    /// Every protocol ended with the same weights.
    pub weights_agree: bool,
}

impl Table for AblateReport {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        csv_rows(&self.rows, out)
    }
}

impl AblateReport {
    pub fn row(&self, p: Protocol) -> Option<&AblateRow> {
        self.rows.iter().find(|r| r.protocol == p)
    }
}

/// One training batch over the whole dataset per protocol, from the same initial model.
pub fn run_ablate(cfg: &AblateConfig) -> Result<AblateReport> {
    refuse_clear(cfg.secure.backend, "ablate")?;
    FixParams::new(cfg.fix.bits, cfg.fix.scale)?;
    let data = cfg.data.load()?;
    let train = TrainConfig { fix: cfg.fix, batch: data.len().max(1), ..TrainConfig::default() };
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for &protocol in &cfg.protocols {
        let settings = SecureSettings { protocol, ..cfg.secure };
        let engine = settings.engine(&cfg.fix, None)?;
        let mut t = Trainer::new(Model::init(cfg.model.clone(), &cfg.fix)?, engine, train);
        let m = t.train_epoch(&data, 0)?;
        let Trainer { model, engine, .. } = t;
        let st = *engine.comm();
        let rounds = st.phase(Phase::Online).rounds + st.phase(Phase::Nonlinear).rounds;
        let summary = engine.finish()?;
        rows.push(AblateRow {
            protocol,
            samples: data.len(),
            online_seconds: m.online_seconds,
            offline_seconds: m.offline_seconds,
            bytes_online: m.bytes_online,
            bytes_offline: m.bytes_offline,
            rounds_online: rounds,
            online_cc_mul: summary.meter.count(Phase::Online, HeOp::CcMul),
            online_cp_mul: summary.meter.count(Phase::Online, HeOp::CpMul),
            offline_cc_mul: summary.meter.count(Phase::Offline, HeOp::CcMul),
        });
        models.push(model);
    }
    let weights_agree = models.windows(2).all(|w| w[0] == w[1]);
    Ok(AblateReport { rows, weights_agree })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub protocol: Protocol,
    pub layer: usize,
    pub kind: String,
    pub pass: String,
    /// Online invocations.
    pub calls: u64,
    pub online_seconds: f64,
    pub offline_seconds: f64,
    pub bytes_online: u64,
    pub bytes_offline: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub rows: Vec<BreakdownRow>,
}

impl Table for BreakdownReport {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        csv_rows(&self.rows, out)
    }
}

impl BreakdownReport {
    /// Online seconds of every layer of `kind` under `protocol`, both passes.
    pub fn online_seconds(&self, protocol: Protocol, kind: &str) -> f64 {
        self.rows.iter().filter(|r| r.protocol == protocol && r.kind == kind).map(|r| r.online_seconds).sum()
    }
}

#[derive(Default)]
struct LayerCost {
    calls: u64,
    costs: Costs,
}

/// Attributes the costs of each engine call to the layer and pass the trainer is in.
struct Profiler {
    inner: SecureEngine,
    at: (usize, bool),
    layers: BTreeMap<(usize, bool), LayerCost>,
}

impl Profiler {
    fn measure<T>(&mut self, at: (usize, bool), online: bool, f: impl FnOnce(&mut SecureEngine) -> Result<T>) -> Result<T> {
        let before = self.inner.costs();
        let r = f(&mut self.inner)?;
        let after = self.inner.costs();
        let e = self.layers.entry(at).or_default();
        e.calls += online as u64;
        e.costs.online_seconds += after.online_seconds - before.online_seconds;
        e.costs.offline_seconds += after.offline_seconds - before.offline_seconds;
        e.costs.bytes_online += after.bytes_online - before.bytes_online;
        e.costs.bytes_offline += after.bytes_offline - before.bytes_offline;
        Ok(r)
    }
}

impl Engine for Profiler {
    fn linear(&mut self, slot: u32, op: LinearOp, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        self.measure(self.at, true, |e| e.linear(slot, op, x, w))
    }

    fn relu(&mut self, x: &[i64]) -> Result<Vec<i64>> {
        self.measure(self.at, true, |e| e.relu(x))
    }

    fn maxpool(&mut self, x: &[i64], window: usize) -> Result<Vec<i64>> {
        self.measure(self.at, true, |e| e.maxpool(x, window))
    }

    fn prepare(&mut self, uses: &[LinearUse], count: usize) -> Result<()> {
        for u in uses {
            let at = ((u.slot / 4) as usize, u.slot % 4 != 0);
            self.measure(at, false, |e| e.prepare(std::slice::from_ref(u), count))?;
        }
        Ok(())
    }

    fn costs(&self) -> Costs {
        self.inner.costs()
    }

    fn enter_layer(&mut self, layer: usize, backward: bool) {
        self.at = (layer, backward);
    }
}

fn layer_kind(l: &LayerSpec) -> &'static str {
    match l {
        LayerSpec::Conv { .. } => "conv",
        LayerSpec::Fc { .. } => "fc",
        LayerSpec::Bn => "bn",
        LayerSpec::Relu => "relu",
        LayerSpec::MaxPool { .. } => "maxpool",
        LayerSpec::Flatten => "flatten",
    }
}

/// Per-layer, per-pass costs of one training batch under each protocol.
pub fn run_breakdown(cfg: &AblateConfig) -> Result<BreakdownReport> {
    refuse_clear(cfg.secure.backend, "breakdown")?;
    FixParams::new(cfg.fix.bits, cfg.fix.scale)?;
    let data = cfg.data.load()?;
    let train = TrainConfig { fix: cfg.fix, batch: data.len().max(1), ..TrainConfig::default() };
    let mut rows = Vec::new();
    for &protocol in &cfg.protocols {
        let settings = SecureSettings { protocol, ..cfg.secure };
        let inner = settings.engine(&cfg.fix, None)?;
        let prof = Profiler { inner, at: (0, false), layers: BTreeMap::new() };
        let mut t = Trainer::new(Model::init(cfg.model.clone(), &cfg.fix)?, prof, train);
        t.train_epoch(&data, 0)?;
        let Trainer { model, engine, .. } = t;
        for ((layer, backward), c) in &engine.layers {
            rows.push(BreakdownRow {
                protocol,
                layer: *layer,
                kind: layer_kind(&model.spec.layers[*layer]).into(),
                pass: if *backward { "backward" } else { "forward" }.into(),
                calls: c.calls,
                online_seconds: c.costs.online_seconds,
                offline_seconds: c.costs.offline_seconds,
                bytes_online: c.costs.bytes_online,
                bytes_offline: c.costs.bytes_offline,
            });
        }
        engine.inner.finish()?;
    }
    Ok(BreakdownReport { rows })
}

// ---------------------------------------------------------------------------------------------
// dispatch

/// One experiment invocation; `command` selects the runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Counts(CountsConfig),
    BenchHe(BenchConfig),
    Ablate(AblateConfig),
    Breakdown(AblateConfig),
    Train(Box<TrainRequest>),
}

/// Report of any experiment, serialized untagged.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Counts(CountsReport),
    BenchHe(BenchReport),
    Ablate(AblateReport),
    Breakdown(BreakdownReport),
    Train(Box<TrainReport>),
}

impl Table for Report {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        match self {
            Report::Counts(r) => r.write_csv(out),
            Report::BenchHe(r) => r.write_csv(out),
            Report::Ablate(r) => r.write_csv(out),
            Report::Breakdown(r) => r.write_csv(out),
            Report::Train(r) => r.write_csv(out),
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    Ok(match cfg {
        ExperimentConfig::Counts(c) => Report::Counts(run_counts(c)?),
        ExperimentConfig::BenchHe(c) => Report::BenchHe(run_bench_he(c)?),
        ExperimentConfig::Ablate(c) => Report::Ablate(run_ablate(c)?),
        ExperimentConfig::Breakdown(c) => Report::Breakdown(run_breakdown(c)?),
        ExperimentConfig::Train(c) => Report::Train(Box::new(run_train(c)?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_has_toy_row_and_skips_infeasible() {
        let cfg = CountsConfig { n: 256, inputs: vec![8, 64], kernels: vec![3], fixed_input: 8, ..Default::default() };
        let rep = run_counts(&cfg).unwrap();
        let toy = &rep.sweep("toy")[0];
        assert_eq!((toy.baseline_mults, toy.correlated_mults), (4, 1));
        assert_eq!(rep.sweep("input").len() + rep.warnings.len(), 2);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sweep,input,kernel,pad,degree_cap,baseline_mults,correlated_mults,ratio"));
        assert_eq!(text.lines().count(), rep.rows.len() + 1);
    }

    #[test]
    fn timing_runners_refuse_clear() {
        let b = BenchConfig { backend: Backend::Clear, ..Default::default() };
        assert!(matches!(run_bench_he(&b), Err(Error::Backend(_))));
        let mut a = AblateConfig::default();
        a.secure.backend = Backend::Clear;
        assert!(matches!(run_ablate(&a), Err(Error::Backend(_))));
        assert!(matches!(run_breakdown(&a), Err(Error::Backend(_))));
    }

    #[test]
    fn config_json_uses_command_tag() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"command":"bench-he","trials":3}"#).unwrap();
        assert_eq!(c, ExperimentConfig::BenchHe(BenchConfig { trials: 3, ..Default::default() }));
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"command":"train","engine":"reference","data":{"kind":"synthetic","n":4,"seed":1}}"#)
                .unwrap();
        let ExperimentConfig::Train(t) = c else { panic!("train") };
        assert_eq!(t.engine, EngineKind::Reference);
        assert_eq!(t.train, TrainConfig::default());
    }

    #[test]
    fn small_train_secure_matches_reference() {
        let req = TrainRequest {
            data: DataSource::Synthetic { n: 3, seed: 2 },
            test: Some(DataSource::Synthetic { n: 2, seed: 3 }),
            train: TrainConfig { batch: 2, ..Default::default() },
            secure: SecureSettings::default(),
            verify: true,
            ..Default::default()
        };
        let rep = run_train(&req).unwrap();
        assert_eq!(rep.matches_reference, Some(true));
        assert_eq!(rep.metrics[0].batch_losses.len(), 2);
        assert!(rep.test_accuracy.is_some());
        assert_eq!(rep.server.unwrap().errors, 0);
    }
}
