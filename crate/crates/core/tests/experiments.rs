use sectrain_core::experiments::{
    run, run_bench_he, run_breakdown, run_counts, AblateConfig, BenchConfig, CountsConfig, DataSource, ExperimentConfig,
    Report, Table,
};
use sectrain_core::packing::{count_report, ConvShape, DegreeCap, Scheme};
use sectrain_core::train::Protocol;

#[test]
fn counts_rows_agree_with_the_packing_report() {
    let cfg = CountsConfig { inputs: vec![8, 28, 40], kernels: vec![3, 7], ..Default::default() };
    let rep = run_counts(&cfg).unwrap();
    assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
    for row in rep.rows.iter().filter(|r| r.sweep != "toy") {
        let shape = ConvShape::new(row.input, row.input, row.kernel, (row.kernel - 1) / 2).unwrap();
        let r = count_report(&shape, DegreeCap::ring(cfg.n), Scheme::Correlated).unwrap();
        assert_eq!((row.baseline_mults, row.correlated_mults), (r.baseline_mults, r.correlated_mults), "{row:?}");
        assert_eq!((row.n1, row.n2), (r.n1, r.n2));
        assert!(row.correlated_max_degree <= row.baseline_max_degree);
    }
    assert_eq!(rep.sweep("input").len(), 3);
    assert_eq!(rep.sweep("kernel").len(), 2);
}

#[test]
fn oversized_kernels_become_warnings() {
    let rep = run_counts(&CountsConfig { inputs: vec![], kernels: vec![3, 99], fixed_input: 8, ..Default::default() }).unwrap();
    assert_eq!(rep.sweep("kernel").len(), 1);
    assert_eq!(rep.warnings.len(), 1);
}

#[test]
fn bench_reports_every_operation() {
    let rep = run_bench_he(&BenchConfig { trials: 5, ..Default::default() }).unwrap();
    let ops: Vec<&str> = rep.rows.iter().map(|r| r.op.as_str()).collect();
    assert_eq!(ops, ["enc", "cc_mul", "cp_mul", "cc_add", "dec"]);
    for r in &rep.rows {
        assert!(r.p10_ms <= r.median_ms && r.median_ms <= r.p90_ms, "{r:?}");
    }
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
}

#[test]
fn breakdown_conv_online_time_drops_under_precompute() {
    let cfg = AblateConfig { data: DataSource::Synthetic { n: 1, seed: 2 }, ..Default::default() };
    let rep = run_breakdown(&cfg).unwrap();
    let direct = rep.online_seconds(Protocol::Direct, "conv");
    let pre = rep.online_seconds(Protocol::Precompute, "conv");
    assert!(pre < direct, "conv online seconds: precompute {pre}, direct {direct}");
    let conv_pre: Vec<_> = rep.rows.iter().filter(|r| r.protocol == Protocol::Precompute && r.kind == "conv").collect();
    assert!(conv_pre.iter().all(|r| r.offline_seconds > 0.0 && r.bytes_offline > 0));
    assert!(rep.rows.iter().filter(|r| r.protocol == Protocol::Direct).all(|r| r.bytes_offline == 0));
}

#[test]
fn dispatch_by_command_tag() {
    let cfg: ExperimentConfig = serde_json::from_str(r#"{"command":"counts","inputs":[8],"kernels":[]}"#).unwrap();
    let Report::Counts(rep) = run(&cfg).unwrap() else { panic!("wrong report kind") };
    assert_eq!(rep.rows.len(), 2);
    let bad = serde_json::from_str::<ExperimentConfig>(r#"{"command":"bench-he","backend":"clear"}"#).unwrap();
    assert!(run(&bad).is_err());
}
