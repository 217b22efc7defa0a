//! Command-line client: turns flags into an experiment config, posts it to the service and
//! writes the report.

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    BenchHe,
    Counts,
    Ablate,
    Breakdown,
    Train,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::BenchHe => "bench-he",
            Command::Counts => "counts",
            Command::Ablate => "ablate",
            Command::Breakdown => "breakdown",
            Command::Train => "train",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "sectrain", version, about = "Run secure-training experiments on a sectrain service")]
pub struct Cli {
    #[arg(long, value_enum)]
    pub command: Command,
    #[arg(long, value_parser = ["baseline", "correlated"])]
    pub scheme: Option<String>,
    /// Linear protocol; ablate and breakdown compare both unless one is given.
    #[arg(long, value_parser = ["b", "precompute"])]
    pub protocol: Option<String>,
    #[arg(long, value_parser = ["clear", "rlwe"])]
    pub backend: Option<String>,
    /// Ring degree.
    #[arg(long)]
    pub n: Option<usize>,
    /// Fixed-point bit width.
    #[arg(long)]
    pub bitwidth: Option<u32>,
    /// Fixed-point fractional bits.
    #[arg(long)]
    pub scale: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; `.json` selects JSON, anything else CSV. Stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Simulated link bandwidth.
    #[arg(long)]
    pub bandwidth_mbps: Option<f64>,
    /// Simulated round-trip latency.
    #[arg(long)]
    pub ping_ms: Option<f64>,

    /// counts: input sizes swept at the fixed kernel.
    #[arg(long, value_delimiter = ',')]
    pub inputs: Option<Vec<usize>>,
    /// counts: kernel sizes swept at the fixed input.
    #[arg(long, value_delimiter = ',')]
    pub kernels: Option<Vec<usize>>,
    /// bench-he: trials per operation.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Synthetic sample count, or a limit on IDX samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// IDX image file, as seen by the service.
    #[arg(long, requires = "labels")]
    pub images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    #[arg(long, requires = "test_labels")]
    pub test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    pub test_labels: Option<PathBuf>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// train: `reference` trains in plaintext only.
    #[arg(long, value_parser = ["reference", "secure"])]
    pub engine: Option<String>,
    /// train: also train the plaintext reference and compare weights.
    #[arg(long)]
    pub verify: bool,
    /// train: party server address, as seen by the service.
    #[arg(long)]
    pub party: Option<String>,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 3600)]
    pub timeout: u64,
}

fn put<T: Into<Value>>(m: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        m.insert(key.into(), v.into());
    }
}

impl Cli {
    pub fn format(&self) -> Format {
        self.format.unwrap_or(match &self.out {
            Some(p) if p.extension().is_some_and(|e| e == "json") => Format::Json,
            _ => Format::Csv,
        })
    }

    fn fix(&self) -> Option<Value> {
        if self.bitwidth.is_none() && self.scale.is_none() {
            return None;
        }
        let mut m = Map::new();
        put(&mut m, "bits", self.bitwidth);
        put(&mut m, "scale", self.scale);
        Some(Value::Object(m))
    }

    fn netsim(&self) -> Option<Value> {
        if self.bandwidth_mbps.is_none() && self.ping_ms.is_none() {
            return None;
        }
        Some(json!({
            "bandwidth_mbps": self.bandwidth_mbps.unwrap_or(400.0),
            "ping_ms": self.ping_ms.unwrap_or(0.5),
            "sleep": false,
        }))
    }

    fn secure(&self) -> Value {
        let mut m = Map::new();
        put(&mut m, "backend", self.backend.clone());
        put(&mut m, "n", self.n);
        put(&mut m, "protocol", self.protocol.clone());
        put(&mut m, "scheme", self.scheme.clone());
        put(&mut m, "seed", self.seed);
        put(&mut m, "netsim", self.netsim());
        Value::Object(m)
    }

    fn data(&self, images: &Option<PathBuf>, labels: &Option<PathBuf>, synthetic_seed: u64) -> Option<Value> {
        match (images, labels) {
            (Some(i), Some(l)) => Some(json!({ "kind": "idx", "images": i, "labels": l, "limit": self.samples })),
            _ => self.samples.map(|n| json!({ "kind": "synthetic", "n": n, "seed": synthetic_seed })),
        }
    }

    fn model(&self) -> Option<Value> {
        self.seed.map(|s| json!({ "seed": s }))
    }

    /// The JSON config the service expects for this command.
    pub fn config(&self) -> Result<Value> {
        let mut m = Map::new();
        match self.command {
            Command::Counts => {
                put(&mut m, "n", self.n);
                put(&mut m, "inputs", self.inputs.clone());
                put(&mut m, "kernels", self.kernels.clone());
            }
            Command::BenchHe => {
                put(&mut m, "backend", self.backend.clone());
                put(&mut m, "n", self.n);
                put(&mut m, "trials", self.trials);
                put(&mut m, "seed", self.seed);
            }
            Command::Ablate | Command::Breakdown => {
                put(&mut m, "model", self.model());
                put(&mut m, "data", self.data(&self.images, &self.labels, 7));
                put(&mut m, "fix", self.fix());
                m.insert("secure".into(), self.secure());
                put(&mut m, "protocols", self.protocol.clone().map(|p| vec![p]));
            }
            Command::Train => {
                put(&mut m, "model", self.model());
                put(&mut m, "data", self.data(&self.images, &self.labels, 7));
                put(&mut m, "test", self.data(&self.test_images, &self.test_labels, 8).filter(|_| self.test_images.is_some()));
                let mut train = Map::new();
                put(&mut train, "fix", self.fix());
                put(&mut train, "batch", self.batch);
                put(&mut train, "epochs", self.epochs);
                if let Some(s) = self.scale {
                    // learning rate 2^-6 at the requested scale
                    train.insert("lr".into(), json!((1i64 << s) >> 6));
                }
                m.insert("train".into(), Value::Object(train));
                put(&mut m, "engine", self.engine.clone());
                m.insert("secure".into(), self.secure());
                m.insert("verify".into(), self.verify.into());
                put(&mut m, "party", self.party.clone());
            }
        }
        Ok(Value::Object(m))
    }
}

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(host: &str, port: u16, timeout: Duration) -> Result<Self> {
        let http = reqwest::blocking::Client::builder().timeout(timeout).build()?;
        Ok(Client { base: format!("http://{host}:{port}"), http })
    }

    pub fn health(&self) -> Result<Value> {
        Ok(self.http.get(format!("{}/health", self.base)).send()?.error_for_status()?.json()?)
    }

    /// Runs `command` and returns the report body in the requested format.
    pub fn run(&self, command: Command, config: &Value, format: Format) -> Result<String> {
        let fmt = match format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        let resp = self
            .http
            .post(format!("{}/v1/{}?format={fmt}", self.base, command.name()))
            .json(config)
            .send()
            .with_context(|| format!("cannot reach the service at {}", self.base))?;
        let status = resp.status();
        let text = resp.text()?;
        if !status.is_success() {
            let msg = serde_json::from_str::<Value>(&text)
                .ok()
                .and_then(|v| v.get("error").and_then(Value::as_str).map(str::to_owned))
                .unwrap_or(text);
            bail!("{} failed ({status}): {msg}", command.name());
        }
        Ok(text)
    }
}

/// Runs the command described by `cli`; returns the report text written (or to be printed).
pub fn execute(cli: &Cli) -> Result<String> {
    let client = Client::new(&cli.host, cli.port, Duration::from_secs(cli.timeout))?;
    let body = client.run(cli.command, &cli.config()?, cli.format())?;
    if let Some(path) = &cli.out {
        fs::write(path, &body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> Cli {
        Cli::try_parse_from(std::iter::once("sectrain").chain(args.split_whitespace())).unwrap()
    }

    #[test]
    fn counts_config_only_carries_given_flags() {
        let c = parse("--command counts --n 2048 --inputs 8,16");
        assert_eq!(c.config().unwrap(), json!({ "n": 2048, "inputs": [8, 16] }));
        assert_eq!(c.format(), Format::Csv);
    }

    #[test]
    fn train_config_maps_every_knob() {
        let c = parse(
            "--command train --backend rlwe --protocol b --scheme baseline --n 4096 --bitwidth 30 --scale 10 \
             --seed 5 --samples 16 --batch 4 --epochs 2 --ping-ms 1 --verify --out m.json",
        );
        let v = c.config().unwrap();
        assert_eq!(v["secure"]["backend"], "rlwe");
        assert_eq!(v["secure"]["protocol"], "b");
        assert_eq!(v["secure"]["netsim"], json!({ "bandwidth_mbps": 400.0, "ping_ms": 1.0, "sleep": false }));
        assert_eq!(v["train"], json!({ "fix": { "bits": 30, "scale": 10 }, "batch": 4, "epochs": 2, "lr": 16 }));
        assert_eq!(v["data"], json!({ "kind": "synthetic", "n": 16, "seed": 7 }));
        assert_eq!(v["model"], json!({ "seed": 5 }));
        assert_eq!(v["verify"], true);
        assert!(v.get("test").is_none());
        assert_eq!(c.format(), Format::Json);
    }

    #[test]
    fn ablate_protocol_flag_narrows_the_comparison() {
        assert!(parse("--command ablate").config().unwrap().get("protocols").is_none());
        let v = parse("--command ablate --protocol precompute").config().unwrap();
        assert_eq!(v["protocols"], json!(["precompute"]));
    }

    #[test]
    fn rejects_unknown_values() {
        assert!(Cli::try_parse_from(["sectrain", "--command", "counts", "--scheme", "cheetah"]).is_err());
        assert!(Cli::try_parse_from(["sectrain", "--command", "fly"]).is_err());
        assert!(Cli::try_parse_from(["sectrain", "--command", "train", "--images", "x"]).is_err());
    }
}
