use std::process::Command;

use genbound::learners::{LearnerSpec, SandwichOptions};
use genbound::measures::FiniteDistribution;
use genbound_cli::config::{ExperimentConfig, Figure, LossSpec, Unit};
use genbound_cli::experiments::validate_scenarios;
use genbound_cli::plot::{render_svg, series_runs};
use genbound_cli::{run_constrained_curve, run_curve, run_learner, run_misspec, run_validate, Cell, CliError, Flag, SweepResult};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_genbound"))
}

fn small_fig1() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Figure::Fig1);
    cfg.scenario.mu_sweep = Some(11);
    cfg.sweep.points = Some(8);
    cfg
}

#[test]
fn empty_bound_list_is_a_config_error() {
    let mut cfg = small_fig1();
    cfg.bounds.list = Some(vec![]);
    let err = cfg.resolve("curve").unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn unknown_bound_and_unknown_field_are_rejected() {
    let mut cfg = small_fig1();
    cfg.bounds.list = Some(vec!["d2".into(), "nonsense".into()]);
    let cfg = cfg.resolve("curve").unwrap();
    assert!(matches!(run_curve(&cfg), Err(CliError::Config(_))));

    let err = ExperimentConfig::parse("[scenario]\nn = 3\nlosss = \"abs\"\n").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("losss") && msg.contains("line 3"), "{msg}");
    let err = ExperimentConfig::parse("[sweep]\npoints = \"many\"\n").unwrap_err();
    assert!(err.to_string().contains("points"), "{err}");
}

#[test]
fn unsorted_grid_is_rejected() {
    let mut cfg = small_fig1();
    cfg.sweep.r = Some(vec![0.5, 0.1]);
    assert!(matches!(cfg.resolve("curve"), Err(CliError::Config(_))));
}

#[test]
fn bits_scale_only_the_rate_column() {
    let cfg = small_fig1().resolve("curve").unwrap();
    let result = run_curve(&cfg).unwrap();
    let nats = result.to_csv(Unit::Nats, "h");
    let bits = result.to_csv(Unit::Bits, "h");
    assert!(bits.starts_with("r_bits,"));
    for (a, b) in nats.lines().zip(bits.lines()).skip(1) {
        let a: Vec<&str> = a.split(',').collect();
        let b: Vec<&str> = b.split(',').collect();
        let ra: f64 = a[0].parse().unwrap();
        let rb: f64 = b[0].parse().unwrap();
        assert!((rb - ra / std::f64::consts::LN_2).abs() <= 1e-11 * (1.0 + rb));
        assert_eq!(a[1..], b[1..]);
    }
}

#[test]
fn fig1_upper_curve_sits_below_the_older_bound() {
    let cfg = small_fig1().resolve("curve").unwrap();
    let result = run_curve(&cfg).unwrap();
    let older = result.column("xu_raginsky").unwrap();
    let d2 = result.column("d2_max_mu").unwrap();
    for ((r, o), d) in result.x.iter().zip(&older).zip(&d2) {
        assert!((o - (r / 2.0).sqrt()).abs() < 1e-12);
        assert!(d <= o);
    }
}

#[test]
fn max_over_laws_is_thread_count_independent() {
    let cfg = small_fig1().resolve("curve").unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_curve(&cfg).unwrap());
    let b = four.install(|| run_curve(&cfg).unwrap());
    assert_eq!(a.to_csv(Unit::Nats, "h"), b.to_csv(Unit::Nats, "h"));
}

#[test]
fn constant_auxiliary_loss_gives_identical_columns() {
    let mut cfg = ExperimentConfig::preset(Figure::Fig3);
    cfg.scenario.n = Some(3);
    cfg.scenario.aux_loss = Some(LossSpec::Matrix {
        rows: 2,
        cols: 2,
        values: vec![0.3; 4],
    });
    cfg.sweep.points = Some(10);
    let cfg = cfg.resolve("constrained").unwrap();
    let result = run_constrained_curve(&cfg).unwrap();
    assert_eq!(result.column("d2").unwrap(), result.column("d2_constrained").unwrap());
}

#[test]
fn fig3_constrained_curve_improves() {
    let cfg = ExperimentConfig::preset(Figure::Fig3).resolve("constrained").unwrap();
    let result = run_constrained_curve(&cfg).unwrap();
    let d2 = result.column("d2").unwrap();
    let dt = result.column("d2_constrained").unwrap();
    assert!(d2.iter().zip(&dt).all(|(a, b)| b <= &(a + 1e-8)));
    assert!(d2.iter().zip(&dt).any(|(a, b)| b < &(a - 1e-3)));
}

#[test]
fn fig4_constrained_curve_improves() {
    let mut cfg = ExperimentConfig::preset(Figure::Fig4);
    cfg.sweep.points = Some(8);
    let cfg = cfg.resolve("constrained").unwrap();
    let result = run_constrained_curve(&cfg).unwrap();
    let d2 = result.column("d2").unwrap();
    let dt = result.column("d2_constrained").unwrap();
    assert!(d2.iter().zip(&dt).all(|(a, b)| b <= &(a + 1e-8)), "{d2:?} {dt:?}");
    assert!(d2.iter().zip(&dt).any(|(a, b)| b < &(a - 1e-3)));
}

#[test]
fn constrained_requires_an_auxiliary_loss() {
    let mut cfg = small_fig1();
    cfg.bounds.list = Some(vec!["d2_constrained".into()]);
    let cfg = cfg.resolve("constrained").unwrap();
    assert!(matches!(run_constrained_curve(&cfg), Err(CliError::Config(_))));
}

#[test]
fn misspec_zero_regime_and_monotonicity() {
    let mut cfg = ExperimentConfig::default();
    cfg.misspec.eps_base = Some(0.3);
    cfg.misspec.eps_base_half_delta = Some(0.4);
    cfg.misspec.regimes = Some(vec!["zero".into(), "inv_sqrt_n".into()]);
    cfg.sweep.gamma = Some(vec![0.0, 0.001, 0.01, 0.05, 0.2]);
    let cfg = cfg.resolve("misspec").unwrap();
    let result = run_misspec(&cfg).unwrap();
    let a = result.column("bound_a_zero").unwrap();
    let b = result.column("bound_b_zero").unwrap();
    // at γ = 0 only the confidence term of the second bound survives
    assert_eq!(a[0], 0.3);
    assert!((b[0] - (0.4 + (2.0 * 0.25 * 20f64.ln()).sqrt())).abs() < 1e-12);
    for col in &result.columns {
        let v = result.column(col).unwrap();
        assert!(v.windows(2).all(|w| w[1] >= w[0]), "{col} not monotone");
    }
    assert!(matches!(
        genbound_cli::experiments::regime_beta("sometimes", 10),
        Err(CliError::Config(_))
    ));
}

#[test]
fn plot_structure_and_determinism() {
    let cfg = small_fig1().resolve("curve").unwrap();
    let result = run_curve(&cfg).unwrap();
    let a = render_svg(&result, Unit::Nats, "fig1");
    let b = render_svg(&result, Unit::Nats, "fig1");
    assert_eq!(a, b);
    assert_eq!(a.matches(r#"class="series""#).count(), 2);
    assert!(a.contains("r (nats)"));
    assert!(render_svg(&result, Unit::Bits, "fig1").contains("r (bits)"));
}

#[test]
fn vacuous_rows_break_the_series() {
    let mut r = SweepResult::new("r", "y", vec![0.0, 0.1, 0.2, 0.3, 0.4]);
    r.push_column(
        "bound",
        vec![
            Cell::value(0.0),
            Cell::value(0.1),
            Cell::value(f64::INFINITY),
            Cell::value(0.3),
            Cell::value(0.4),
        ],
    );
    r.push_column(
        "other",
        vec![
            Cell::value(0.0),
            Cell::flagged(0.1, Flag::Infeasible),
            Cell::value(0.2),
            Cell::flagged(0.3, Flag::NonConverged),
            Cell::value(0.4),
        ],
    );
    assert_eq!(series_runs(&r, 0).len(), 2);
    assert_eq!(series_runs(&r, 1).len(), 2);
    let svg = render_svg(&r, Unit::Nats, "t");
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert_eq!(svg.matches("<circle").count(), 1);
}

#[test]
fn default_validation_suite_passes() {
    let cfg = ExperimentConfig::default().resolve("validate").unwrap();
    let report = run_validate(&cfg).unwrap();
    assert!(report.passed(), "{}", report.to_text());
    assert!(report.to_text().contains("inequalities hold"));
}

#[test]
fn corrupted_bound_fails_with_its_name() {
    let mut cfg = ExperimentConfig::default();
    cfg.validate.scenarios = Some(3);
    cfg.validate.corrupt_bound = Some("cor1_upper".into());
    cfg.validate.corrupt_shift = Some(-10.0);
    let cfg = cfg.resolve("validate").unwrap();
    let report = run_validate(&cfg).unwrap();
    assert!(!report.passed());
    assert!(report.failures().all(|l| l.check.name.contains("cor1_upper")));
    assert!(report.to_text().contains("violating instance 0"));
}

#[test]
fn matched_laws_with_a_constant_learner_pass() {
    let mut cfg = small_fig1();
    cfg.scenario.n = Some(3);
    cfg.scenario.test = Some(vec![0.3, 0.7]);
    cfg.scenario.train = Some(vec![0.3, 0.7]);
    let s = cfg.resolve("learner").unwrap().build_scenario().unwrap();
    let report = validate_scenarios(&[s], &[LearnerSpec::constant(1)], &SandwichOptions::default(), 20).unwrap();
    assert!(report.passed(), "{}", report.to_text());
    let gen = report.lines.iter().find(|l| l.check.name.starts_with("gen <=")).unwrap();
    assert!(gen.check.lhs.abs() < 1e-15);
}

#[test]
fn learner_report_on_a_small_instance() {
    let mut cfg = ExperimentConfig::preset(Figure::Fig3);
    cfg.scenario.n = Some(3);
    cfg.learner.kind = Some("gibbs".into());
    cfg.learner.beta = Some(1.0);
    cfg.learner.trials = Some(2000);
    cfg.seed = Some(5);
    let cfg = cfg.resolve("learner").unwrap();
    let report = run_learner(&cfg).unwrap();
    let gen = report.get("gen_error").unwrap();
    assert!(gen <= report.get("d2_at").unwrap() + 1e-8);
    assert!(report.get("d2_at").unwrap() <= report.get("xu_raginsky").unwrap() + 1e-8);
    // E[max(K, 3 - K)]/3 with K ~ Bin(3, 1/2) is 3/4
    assert!((report.get("v_n_exact").unwrap() + 0.75).abs() < 1e-12);
    let mc = report.get("v_n_monte_carlo").unwrap();
    assert!((mc + 0.75).abs() <= report.get("v_n_monte_carlo_margin_99").unwrap());
    assert_eq!(run_learner(&cfg).unwrap(), report);
    let bits = report.to_csv(Unit::Bits, "h");
    assert!(bits.lines().any(|l| l.starts_with("mutual_information,") && l.contains(",bits,")));
}

#[test]
fn unknown_named_loss_and_bad_learner() {
    let mut cfg = small_fig1();
    cfg.scenario.loss = Some(LossSpec::Named("hinge".into()));
    assert!(matches!(cfg.resolve("curve"), Err(CliError::Config(_))));
    let mut cfg = small_fig1();
    cfg.learner.kind = Some("gibbs".into());
    cfg.learner.beta = Some(-1.0);
    assert!(matches!(cfg.resolve("learner"), Err(CliError::Config(_))));
    let mut cfg = small_fig1();
    cfg.scenario.test = Some(vec![0.5, 0.6]);
    assert!(matches!(cfg.resolve("curve"), Err(CliError::Config(_))));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("in.toml");
    std::fs::write(
        &cfg_path,
        "seed = 3\n[scenario]\nhypotheses = [0.0, 0.5, 1.0]\nloss = \"abs\"\ntest = [0.4, 0.6]\ntrain = [0.5, 0.5]\nn = 2\n\
         [sweep]\nr = [0.0, 0.1, 0.4]\n[bounds]\nlist = [\"d2\", \"cor1_upper\", \"xu_raginsky\"]\n[output]\nname = \"first\"\n",
    )
    .unwrap();
    let out = bin()
        .args(["curve", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(dir.path().join("first.csv")).unwrap();
    assert_eq!(first.lines().next().unwrap(), "r_nats,d2,cor1_upper,xu_raginsky,flags,config_hash");
    assert_eq!(first.lines().count(), 4);

    let echoed = dir.path().join("first.config.toml");
    let other = tempfile::tempdir().unwrap();
    let out = bin().args(["curve", "--config"]).arg(&echoed).arg("--out").arg(other.path()).output().unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(other.path().join("first.csv")).unwrap(), first);
    let manifest = std::fs::read_to_string(dir.path().join("first.manifest.txt")).unwrap();
    let hash = first.lines().nth(1).unwrap().rsplit(',').next().unwrap();
    assert!(manifest.contains(&format!("config_hash = {hash}")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scenario]\nbogus = 1\n").unwrap();
    let out = bin().args(["curve", "--config"]).arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = bin().args(["curve", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let corrupt = dir.path().join("corrupt.toml");
    std::fs::write(&corrupt, "[validate]\nscenarios = 2\ncorrupt_bound = \"d2_at\"\ncorrupt_shift = -5.0\n").unwrap();
    let out = bin().args(["validate", "--config"]).arg(&corrupt).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen <= d2_at"));
    let report = std::fs::read_to_string(dir.path().join("validate.report.txt")).unwrap();
    assert!(report.contains("FAIL") && report.contains("violating instance"));

    let out = bin().args(["misspec", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn explicit_distributions_must_match_the_instances() {
    let mut cfg = small_fig1();
    cfg.scenario.instances = Some(vec![0.0, 1.0, 2.0]);
    assert!(cfg.resolve("curve").is_err());
    assert!(FiniteDistribution::new(vec![0.2, 0.8]).is_ok());
}
