use synthaug::detector::TrainConfig;
use synthaug::pipeline::benchmark::{run_directional_benchmark, BenchmarkConfig};
use synthaug::pipeline::{render_report, Arm, ReportFormat};

fn small() -> BenchmarkConfig {
    BenchmarkConfig {
        examples_per_dataset: 300,
        count: 3_000,
        top_k: 300,
        train: TrainConfig { max_epochs: 4, ..BenchmarkConfig::default().train },
        ..BenchmarkConfig::default()
    }
}

#[test]
fn small_benchmark_is_reproducible_across_job_counts() {
    let cfg = small();
    let one = run_directional_benchmark(&cfg, 3, 1).unwrap();
    let many = run_directional_benchmark(&cfg, 3, 3).unwrap();
    for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown] {
        assert_eq!(render_report(&one.report, format).unwrap(), render_report(&many.report, format).unwrap());
    }
    assert_eq!(one.generation_logs, many.generation_logs);
}

#[test]
fn arms_differ_only_in_training_data() {
    let out = run_directional_benchmark(&small(), 8, 0).unwrap();
    let prov = &out.report.provenance;
    assert_eq!(prov.detector_seeds.len(), 1);
    let base = prov.training_sizes["A/baseline"];
    let aug = prov.training_sizes["A/augmented"];
    assert!(aug > base, "{aug} vs {base}");
    assert!(aug - base <= 2 * 300);
    assert_eq!(out.baseline.arm, Arm::Baseline);
    assert_eq!(out.augmented.arm, Arm::Augmented);
    assert!(out.augmented.change_recall.is_some() || out.baseline.recall == 0.0);
    for m in out.baseline.metrics().into_iter().chain(out.augmented.metrics()) {
        assert!((0.0..=1.0).contains(&m));
    }
}
