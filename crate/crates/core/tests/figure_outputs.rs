use ifdd_core::evaluation::{RateReport, RATE_COLUMNS};
use ifdd_core::{run_figure, Execution, ExperimentConfig, Figure};

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::default().desk_scale();
    c.fig3.realizations = 20;
    c.fig3.n_sub = vec![64, 256];
    c.fig5.points = 5;
    c.sweep.n_frames = 2;
    c.sweep.seeds = 1;
    c.fig11.speeds_kmh = vec![10.0];
    c.fig11.pilot_rates = vec![0.5];
    c.fig12.speeds_kmh = vec![0.0, 500.0];
    c.fig12.pilot_rates = vec![1.0];
    c
}

fn body(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn every_figure_has_its_schema_and_header() {
    let cfg = small();
    for fig in Figure::ALL {
        let out = run_figure(fig, &cfg, Execution::Parallel).unwrap();
        assert!(out.csv.starts_with(&format!("# figure: {}", fig.name())));
        assert!(out.csv.contains(&format!("# seed: {}", cfg.seed)));
        assert!(out.csv.contains("# [ofdm]"));
        let lines = body(&out.csv);
        assert_eq!(lines[0], fig.columns().join(","), "{}", fig.name());
        assert_eq!(lines.len() - 1, out.rows);
        let width = fig.columns().len();
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), width, "{}: {l}", fig.name());
        }
    }
}

#[test]
fn header_config_round_trips() {
    let cfg = small();
    let out = run_figure(Figure::Fig5, &cfg, Execution::Sequential).unwrap();
    let toml: String = out
        .csv
        .lines()
        .skip_while(|l| *l != "# config:")
        .skip(1)
        .take_while(|l| l.starts_with('#'))
        .map(|l| format!("{}\n", l.trim_start_matches('#').trim_start()))
        .collect();
    assert_eq!(ExperimentConfig::from_toml_str(&toml).unwrap(), cfg);
}

#[test]
fn rate_figures_parse_as_reports() {
    let out = run_figure(Figure::Fig12, &small(), Execution::Parallel).unwrap();
    let rep = RateReport::from_csv(&out.csv).unwrap();
    assert_eq!(rep.rows.len(), 4);
    assert_eq!(body(&out.csv)[0], RATE_COLUMNS.join(","));
}

#[test]
fn identical_seed_identical_bytes() {
    let cfg = small();
    for fig in [Figure::Fig3, Figure::Fig11] {
        let a = run_figure(fig, &cfg, Execution::Parallel).unwrap();
        let b = run_figure(fig, &cfg, Execution::Sequential).unwrap();
        assert_eq!(a.csv, b.csv);
    }
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(
        run_figure(Figure::Fig3, &cfg, Execution::Parallel).unwrap().csv,
        run_figure(Figure::Fig3, &other, Execution::Parallel).unwrap().csv
    );
}

#[test]
fn invalid_config_refused() {
    let mut cfg = small();
    cfg.frame.pilot_rate = 0.4;
    let e = run_figure(Figure::Fig5, &cfg, Execution::Parallel).unwrap_err();
    assert!(e.to_string().contains("frame.pilot_rate"));
}
