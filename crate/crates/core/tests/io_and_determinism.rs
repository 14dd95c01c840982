use std::fs;

use whet_core::heterogeneity::{estimate, HeterogeneityReport};
use whet_core::io::{self, AnalysisBundle, DistanceFormat, Provenance, ReportFormat};
use whet_core::measures::{GaussianDiagItem, MeasureSpec};
use whet_core::models::{synthetic_groups_default, ModelSpec, SyntheticConfig};
use whet_core::simulate::{self, SimulationResult, SimulationSpec, Study};
use whet_core::transforms::{Transform, TransformSpec};
use whet_core::wasserstein::{pairwise_distances, W2Options};
use whet_core::Error;

#[test]
fn collection_file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let g = &synthetic_groups_default(3).unwrap()[2];
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    io::save_measures(&g.collection, &first).unwrap();
    let (loaded, warnings) = io::load_measures(&first).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(loaded, g.collection);
    io::save_measures(&loaded, &second).unwrap();
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn report_bundle_reloads_equal() {
    let dir = tempfile::tempdir().unwrap();
    let g = &synthetic_groups_default(5).unwrap()[0];
    let d = pairwise_distances(&g.collection, &W2Options::default()).unwrap();
    let dpath = dir.path().join("d.csv");
    io::save_distance_matrix(&d, &dpath, DistanceFormat::Csv).unwrap();
    let report = estimate(&d, Transform::power(2.0).unwrap(), 0.95).unwrap();
    let prov = Provenance::new("estimate")
        .with_inputs(&[dpath.as_path()])
        .unwrap()
        .with_level(0.95)
        .unwrap()
        .with_transform(&TransformSpec::Fixed(report.transform_used), Some(report.transform_used));
    assert_eq!(prov.inputs[0].sha256.len(), 64);
    let bundle = AnalysisBundle::new(prov, report);
    let path = dir.path().join("r.json");
    io::emit_report(&bundle, &path, ReportFormat::Json).unwrap();
    let back: AnalysisBundle<HeterogeneityReport> = io::load_report(&path).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(io::to_canonical_json(&back).unwrap(), fs::read_to_string(&path).unwrap());

    let csv = io::render_report(&bundle, ReportFormat::Csv).unwrap();
    assert!(csv.starts_with("# provenance {"));
    assert!(csv.lines().nth(1).unwrap().starts_with("rank,index,label,eccentricity"));
}

#[test]
fn distance_files_load_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let g = &synthetic_groups_default(7).unwrap()[1];
    let d = pairwise_distances(&g.collection, &W2Options::default()).unwrap();
    for (name, f) in [("a.csv", DistanceFormat::Csv), ("b.json", DistanceFormat::Json)] {
        let p = dir.path().join(name);
        io::save_distance_matrix(&d, &p, f).unwrap();
        let (back, w) = io::load_distance_matrix(&p, None).unwrap();
        assert!(w.is_empty());
        assert_eq!(back.values(), d.values());
    }
    let files = io::distance_files(dir.path()).unwrap();
    assert_eq!(files.iter().map(|p| io::group_name(p)).collect::<Vec<_>>(), ["a", "b"]);
}

#[test]
fn malformed_inputs_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "2\n0,1\n2,0\n").unwrap();
    let e = io::load_distance_matrix(&p, None).unwrap_err();
    assert!(e.is_user_error());
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"family":"gaussian","dimension":1,"items":[{"mean":[0],"covariance":[[-1]]}]}"#).unwrap();
    assert!(matches!(io::load_measures(&p), Err(Error::Schema { .. })));
}

#[test]
fn shipped_config_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/synthetic_v1.json");
    let cfg: SyntheticConfig = io::read_json(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, SyntheticConfig::default());
    assert_eq!(cfg.groups.iter().map(|g| g.size()).collect::<Vec<_>>(), [60, 60, 60]);
}

fn coverage_spec(seed: u64) -> SimulationSpec {
    SimulationSpec {
        study: Study::Coverage,
        model: ModelSpec::Translation {
            template: MeasureSpec::GaussianDiag(GaussianDiagItem {
                mean: vec![0.0, 0.0],
                std: vec![1.0, 1.0],
            }),
            shift_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            shift_mean: None,
        },
        transform: Transform::power(2.0).unwrap(),
        n_grid: vec![10, 30],
        replications: 40,
        level: 0.9,
        seed,
        m_grid: vec![10],
        degeneracy_threshold: None,
        keep_draws: true,
    }
}

#[test]
fn simulation_is_deterministic_and_worker_invariant() {
    let spec = coverage_spec(99);
    let a = simulate::run(&spec, Some(1)).unwrap();
    let b = simulate::run(&spec, Some(3)).unwrap();
    assert_eq!(a, b);
    let text = io::to_canonical_json(&a).unwrap();
    let back: SimulationResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back, a);
    let c = simulate::run(&coverage_spec(100), Some(1)).unwrap();
    assert_ne!(a.cells[0].mean_u, c.cells[0].mean_u);
}

#[test]
fn spec_files_reject_unknown_fields() {
    let text = r#"{"study":"coverage","model":{"kind":"two_point","mu1":{"family":"discrete","support":[[0]],"weights":[1]},
        "mu2":{"family":"discrete","support":[[1]],"weights":[1]},"prob":0.5},
        "transform":"power:2","n_grid":[10],"replications":2,"seed":1,"colour":"red"}"#;
    assert!(serde_json::from_str::<SimulationSpec>(text).is_err());
}
