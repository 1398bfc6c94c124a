use gmpr_core::corruption::CorruptionSpec;
use gmpr_core::harness::{
    bench_batching, bench_gm_scaling, run_breakdown, run_convergence_to, DatasetSource,
    ExperimentConfig, OutputFormat, SelectorSpec,
};
use gmpr_core::io::write_dataset;
use gmpr_core::selectors::{Execution, SelectorKind};
use gmpr_core::GmSolverConfig;

fn preset(n: usize, selectors: &[SelectorKind]) -> ExperimentConfig {
    ExperimentConfig::new(
        DatasetSource::Preset {
            name: "paper-2d-mixture".into(),
            n,
        },
        selectors.iter().map(|&s| SelectorSpec::new(s)).collect(),
    )
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn uncorrupted_breakdown_errors_sit_in_the_sampling_band() {
    let n = 1000;
    let mut cfg = preset(n, &[SelectorKind::GmMatching]);
    cfg.psi_grid = vec![0.0];
    let sigma = CorruptionSpec::preset("paper-2d-mixture", 0.0)
        .unwrap()
        .clean_component()
        .unwrap()
        .max_std()
        .unwrap();
    let band = 5.0 * sigma / (n as f64).sqrt();
    for r in run_breakdown(&cfg).unwrap() {
        assert!(
            r.mean_error <= band && r.gm_error <= band,
            "{r:?} band {band}"
        );
    }
}

#[test]
fn mean_error_grows_with_corruption() {
    let mut cfg = preset(1000, &[SelectorKind::GmMatching]);
    cfg.psi_grid = vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45];
    let records = run_breakdown(&cfg).unwrap();
    let avg: Vec<f64> = cfg
        .psi_grid
        .iter()
        .map(|&p| {
            let e: Vec<f64> = records
                .iter()
                .filter(|r| r.psi == p)
                .map(|r| r.mean_error)
                .collect();
            e.iter().sum::<f64>() / e.len() as f64
        })
        .collect();
    assert!(spearman(&cfg.psi_grid, &avg) >= 0.9, "{avg:?}");
    let mut cfg_appendix = cfg.clone();
    cfg_appendix.dataset = DatasetSource::Preset {
        name: "appendix-2d-mixture".into(),
        n: 1000,
    };
    let gm_ok = run_breakdown(&cfg_appendix)
        .unwrap()
        .iter()
        .filter(|r| r.psi > 0.0)
        .all(|r| r.gm_error < r.mean_error);
    assert!(gm_ok);
}

#[test]
fn runs_are_reproducible_modulo_wall_times() {
    let mut cfg = preset(
        300,
        &[
            SelectorKind::GmMatching,
            SelectorKind::KernelHerding,
            SelectorKind::Random,
        ],
    );
    cfg.k_grid = vec![8, 32];
    cfg.psi_grid = vec![0.2];
    cfg.seeds = vec![5, 6];
    cfg.keep_indices = true;
    let strip = |dir: &std::path::Path| -> Vec<serde_json::Value> {
        let out = run_convergence_to(dir, &cfg, OutputFormat::Json).unwrap();
        assert_eq!(out.records.len(), 3 * 2 * 2);
        std::fs::read_to_string(dir.join("records.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v["metrics"]["wall_times"] = serde_json::Value::Null;
                v
            })
            .collect()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn file_source_uses_its_own_mask() {
    let spec = CorruptionSpec::preset("appendix-2d-mixture", 0.3).unwrap();
    let data = gmpr_core::corruption::make_gmm_dataset(400, &spec, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&path, &data).unwrap();
    let mut cfg = ExperimentConfig::new(
        DatasetSource::File { path },
        vec![SelectorSpec::new(SelectorKind::Random)],
    );
    cfg.k_grid = vec![200];
    cfg.seeds = vec![0, 1, 2];
    let out = run_convergence_to(&dir.path().join("out"), &cfg, OutputFormat::Csv).unwrap();
    let frac: f64 = out
        .records
        .iter()
        .map(|r| r.metrics.corrupt_fraction)
        .sum::<f64>()
        / 3.0;
    // random picks track the 30% base rate
    assert!((frac - 0.3).abs() < 0.08, "{frac}");
}

#[test]
fn gm_iterations_stay_below_the_cap_on_gaussian_data() {
    let cfg = GmSolverConfig::default();
    for t in bench_gm_scaling(&[500, 1000, 2000], &[2, 8, 32], &cfg, 1, 3).unwrap() {
        assert!(t.iterations < cfg.t_max, "{t:?}");
    }
}

#[test]
fn one_pick_per_batch_matches_worse_than_one_batch() {
    let k = 32;
    for seed in 0..5 {
        let t = bench_batching(
            2000,
            k,
            &[1, k],
            3,
            &GmSolverConfig::default(),
            Execution::Sequential,
            1,
            seed,
        )
        .unwrap();
        assert!(t[1].delta_sq >= t[0].delta_sq, "seed {seed}: {t:?}");
    }
}
