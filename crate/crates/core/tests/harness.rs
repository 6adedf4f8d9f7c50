use radial_gibbs::harness::{self, ExperimentKind, ObservableSpec, ResolutionChoice, RunConfig};
use radial_gibbs::stats::Verdict;
use radial_gibbs::Error;

const SMALL: &str = r#"
seed = 5
[[experiment]]
id = "lin"
kind = "linear_baseline"
resolutions = [32, 64]
samples = 1000
times = [0.25]
observables = [{ kind = "point_re", r = 1.0 }, { kind = "window_quadratic", lo = 0.5, hi = 1.5 }]
"#;

#[test]
fn config_parses_with_defaults() {
    let cfg = RunConfig::parse(SMALL).unwrap();
    assert_eq!(cfg.seed, 5);
    let e = &cfg.experiment[0];
    assert_eq!(e.kind, ExperimentKind::LinearBaseline);
    assert_eq!(e.length, 4.0);
    assert_eq!(e.observables[1], ObservableSpec::WindowQuadratic { lo: 0.5, hi: 1.5 });
    assert_eq!(e.tolerance.alpha, 0.01);
}

#[test]
fn bad_configs_are_usage_errors() {
    for text in [
        "[[experiment]]\nid = \"a\"\nkind = \"nonsense\"\n",
        "[[experiment]]\nid = \"a\"\nkind = \"invariance\"\nsamples = 10\n",
        "[[experiment]]\nid = \"a\"\nkind = \"asymptotics\"\n[[experiment]]\nid = \"a\"\nkind = \"asymptotics\"\n",
        "[[experiment]]\nid = \"a\"\nkind = \"invariance\"\nresolutions = [64, 100]\n",
    ] {
        assert!(matches!(RunConfig::parse(text), Err(Error::Usage(_))), "{text}");
    }
}

#[test]
fn empty_run_passes_with_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, reports) = harness::run(&RunConfig::parse("seed = 1").unwrap(), dir.path(), ResolutionChoice::Both).unwrap();
    assert!(reports.is_empty() && manifest.experiments.is_empty());
    assert_eq!(harness::exit_code(&reports), 0);
    assert!(dir.path().join("manifest.json").is_file());
}

#[test]
fn same_seed_gives_identical_deterministic_artifacts() {
    let cfg = RunConfig::parse(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ma, ra) = harness::run(&cfg, a.path(), ResolutionChoice::Both).unwrap();
    let (mb, _) = harness::run(&cfg, b.path(), ResolutionChoice::Both).unwrap();
    assert_eq!(ra[0].verdict, Verdict::Pass, "{}", ra[0].render());
    assert!(ra[0].statement.contains("does not prove"));
    let det: Vec<_> = ma.files.iter().filter(|f| f.deterministic).collect();
    assert!(det.iter().any(|f| f.path.ends_with("tests.csv")));
    for f in det {
        let other = mb.files.iter().find(|g| g.path == f.path).unwrap();
        assert_eq!(f.sha256, other.sha256, "{}", f.path);
    }
    let text = harness::report(a.path()).unwrap();
    assert!(text.contains("lin"));
}

#[test]
fn report_needs_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(harness::report(dir.path()), Err(Error::Usage(_))));
}
