//! End-to-end behaviour: ingestion, estimation, selection, studies and reports.

use std::io::Write;

use nalgebra::DVector;
use paircycle::analysis::{analyze, AnalysisConfig, AnalysisReport};
use paircycle::config::{write_study_outputs, ConfigFormat, StudyConfig};
use paircycle::estimate::{fit_joint_minnorm, fit_reduced, ComparisonData};
use paircycle::geometry::num_pairs;
use paircycle::inference::{component_tests, Correction};
use paircycle::ingest::{parse_long_csv, read_long_csv};
use paircycle::linalg::span_residual;
use paircycle::rank::Transitivity;
use paircycle::select::{select, Method, SelectionOptions};
use paircycle::sim::{generate, run_study, Preset, Scenario, StudyPlan};
use paircycle::{build_bases, Error, Pair, Triad};

fn t(i: usize, j: usize, k: usize) -> Triad {
    Triad::one_based(i, j, k)
}

fn noiseless(k: usize, nu: &DVector<f64>, n: usize) -> ComparisonData {
    let p = num_pairs(k);
    ComparisonData::from_pair_stats(k, vec![n; p], nu.iter().copied().collect(), vec![0.0; p])
        .unwrap()
}

#[test]
fn csv_ingestion_canonicalizes_orientation() {
    let d = parse_long_csv("i,j,y\n1,2,1.0\n1,3,-1.0\n2,3,1.0\n2,1,0.7\n".as_bytes()).unwrap();
    assert_eq!(d.k(), 3);
    assert_eq!(d.count(Pair::one_based(1, 2)), 2);
    assert!((d.means()[0] - 0.15).abs() < 1e-15);

    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "i,j,y\n1,2,1\n1,3,2\n2,3,x").unwrap();
    match read_long_csv(f.path()) {
        Err(Error::Row { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected a row error, got {other:?}"),
    }
    let missing = parse_long_csv("i,j,y\n1,2,1\n1,3,2\n".as_bytes()).unwrap_err();
    assert_eq!(missing, Error::Incomplete(Pair::one_based(2, 3)));
}

#[test]
fn joint_minimum_norm_fit_spreads_over_triads() {
    let b = build_bases(5).unwrap();
    let nu =
        b.b() * DVector::from_vec(vec![2.0, 1.0, 0.0, -1.0, -2.0]) + b.triad_column(t(1, 2, 3));
    let data = noiseless(5, &nu, 10);
    let all: Vec<Triad> = b.triad_map().triads().to_vec();
    let (mu, gamma) = fit_joint_minnorm(&data, &b, &all).unwrap();
    let expected = [0.6, 0.2, 0.2, -0.2, -0.2, 0.0, 0.2, 0.2, 0.0, 0.0];
    for (g, e) in gamma.iter().zip(expected) {
        assert!((g - e).abs() < 1e-8, "{gamma}");
    }
    assert!((gamma.norm() - 0.6f64.sqrt()).abs() < 1e-10);
    assert!((mu - DVector::from_vec(vec![2.0, 1.0, 0.0, -1.0, -2.0])).amax() < 1e-10);
}

#[test]
fn noise_free_linear_data_rejects_nothing() {
    let b = build_bases(6).unwrap();
    let nu = b.b() * DVector::from_vec(vec![1.0, 0.3, -0.2, 0.0, 0.5, -1.6]);
    let data = noiseless(6, &nu, 4);
    for correction in [Correction::Bonferroni, Correction::BenjaminiHochberg] {
        assert_eq!(
            component_tests(&data, &b, 0.05, correction)
                .unwrap()
                .num_rejected(),
            0
        );
    }
    for method in Method::ALL {
        let res = select(&data, &b, method, &SelectionOptions::default()).unwrap();
        assert!(res.triads.is_empty(), "{method}");
    }
}

#[test]
fn noiseless_cyclic_data_selects_a_covering_span() {
    let b = build_bases(6).unwrap();
    for preset in [Preset::One, Preset::Two, Preset::Three] {
        let mut scn = Scenario::preset(preset, 6, 2, 3).unwrap();
        scn.sigma = 0.0;
        let nu_c = scn.nu_cyclic(&b);
        let data = generate(&scn, &b, 0).unwrap();
        for method in Method::ALL {
            let res = select(&data, &b, method, &SelectionOptions::default()).unwrap();
            let residual = span_residual(&b.triad_columns(&res.triads), &nu_c);
            assert!(
                residual <= 1e-6 * nu_c.norm(),
                "{preset:?} {method}: {:?}",
                res.triads
            );
        }
    }
}

#[test]
fn scenario_one_analysis_finds_generating_triads() {
    let b = build_bases(6).unwrap();
    let scn = Scenario::preset(Preset::One, 6, 20, 11).unwrap();
    let data = generate(&scn, &b, 0).unwrap();
    let report = analyze(&data, &AnalysisConfig::default()).unwrap();
    assert!(report.selection.accepted);
    for generating in [t(1, 2, 3), t(1, 4, 5)] {
        assert!(
            report.selection.triads.contains(&generating),
            "{:?}",
            report.selection.triads
        );
    }
    assert_eq!(report.transitivity.global, Transitivity::Cyclic);
    let json = serde_json::to_string(&report).unwrap();
    let back: AnalysisReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);

    let cfg = AnalysisConfig {
        betting: true,
        ..AnalysisConfig::default()
    };
    let betting = analyze(&data, &cfg).unwrap().betting.unwrap();
    let support: Vec<Pair> = report
        .selection
        .triads
        .iter()
        .flat_map(|t| t.pairs())
        .collect();
    assert!(betting.profitable().all(|l| support.contains(&l.pair)));
    assert!(betting.total_win > 0.0);
}

#[test]
fn reduced_fit_misses_cyclic_part() {
    let b = build_bases(6).unwrap();
    let mut scn = Scenario::preset(Preset::Two, 6, 3, 0).unwrap();
    scn.sigma = 0.0;
    let data = generate(&scn, &b, 0).unwrap();
    let fit = fit_reduced(&data, &b).unwrap();
    let err = (&fit.nu_hat - scn.nu(&b)).norm_squared();
    assert!((err - scn.nu_cyclic(&b).norm_squared()).abs() < 1e-10);
}

#[test]
fn studies_are_deterministic_and_thread_independent() {
    let b = build_bases(6).unwrap();
    let scn = Scenario::preset(Preset::One, 6, 5, 99).unwrap();
    let plan = StudyPlan {
        methods: vec![Method::Ftbs, Method::Fsr],
        replications: 12,
        mse: true,
        options: SelectionOptions::default(),
    };
    let first = run_study(&scn, &b, &plan).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let second = pool.install(|| run_study(&scn, &b, &plan).unwrap());
    assert_eq!(
        serde_json::to_string(&first).unwrap(),
        serde_json::to_string(&second).unwrap()
    );
    let single = run_study(
        &scn,
        &b,
        &StudyPlan {
            replications: 1,
            ..plan
        },
    )
    .unwrap();
    assert_eq!(single.replications, 1);
}

#[test]
fn study_config_writes_identical_outputs_for_same_seed() {
    let text = r#"
seed = 5
replications = 4
m = [5, 10]
methods = ["ftbs", "fsts", "fsr"]
mse = true

[[scenario]]
preset = "I"
"#;
    let cfg = StudyConfig::parse(text, ConfigFormat::Toml).unwrap();
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    write_study_outputs(&a, &cfg.run().unwrap()).unwrap();
    write_study_outputs(&b, &cfg.run().unwrap()).unwrap();
    for name in ["selection.csv", "mse.csv", "study.json"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let table = std::fs::read_to_string(a.join("selection.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 3 * 2);
}
