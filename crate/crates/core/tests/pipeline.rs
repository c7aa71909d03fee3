use std::fs;
use std::path::Path;

use shoulder_core::fixture;
use shoulder_core::pipeline::{files, run_all, run_pipeline, RunConfig, Stage};

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn stages_from_cache_match_a_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture::generate(&tmp.path().join("fx"), 11).unwrap();
    let mut cfg = RunConfig::from_file(&fx.config).unwrap();

    let full = tmp.path().join("full");
    cfg.output_dir = full.clone();
    let summary = run_all(&cfg).unwrap();
    assert_eq!(summary.stages_run, Stage::ALL.to_vec());
    assert!(summary.skipped.is_empty());

    // downstream stages fed only the cached upstream tables
    let cached = tmp.path().join("cached");
    fs::create_dir_all(&cached).unwrap();
    for name in [
        files::DAILY_LOAD,
        files::DAILY_LOAD_NET,
        files::DAILY_TEMP,
        files::ANNUAL_TEMP,
        files::DEGREE_DAYS,
    ] {
        fs::copy(full.join(name), cached.join(name)).unwrap();
    }
    cfg.output_dir = cached.clone();
    let s = run_pipeline(&cfg, &[Stage::Trends, Stage::Project]).unwrap();
    assert_eq!(s.stages_run, vec![Stage::Shoulder, Stage::Trends, Stage::Project]);
    for name in [
        files::SHOULDER,
        files::SHOULDER_NET,
        files::TRENDS,
        files::TREND_BANDS,
        files::CORRELATIONS,
        files::ENSEMBLE_STATS,
        files::PROJECTION,
    ] {
        assert_eq!(read(&cached, name), read(&full, name), "{name}");
    }

    // a lone downstream stage in an empty directory pulls in its upstream
    let lone = tmp.path().join("lone");
    cfg.output_dir = lone.clone();
    let s = run_pipeline(&cfg, &[Stage::Trends]).unwrap();
    assert_eq!(s.stages_run, vec![Stage::Ingest, Stage::Thermal, Stage::Shoulder, Stage::Trends]);
    assert_eq!(read(&lone, files::TRENDS), read(&full, files::TRENDS));
    assert!(!lone.join(files::PROJECTION).exists());
}

#[test]
fn load_onsets_recover_planted_windows() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture::generate(tmp.path(), 5).unwrap();
    let cfg = RunConfig::from_file(&fx.config).unwrap();
    run_pipeline(&cfg, &[Stage::Shoulder]).unwrap();
    let rows = shoulder_core::windows::parse_shoulder_table(fs::File::open(cfg.output_dir.join(files::SHOULDER)).unwrap()).unwrap();
    let mut matched = 0;
    for p in &fx.planted {
        for metric in [shoulder_core::windows::Metric::TotalEnergy, shoulder_core::windows::Metric::PeakDemand] {
            let w = rows
                .iter()
                .find(|w| w.year == p.year && w.season == p.season && w.metric == metric)
                .expect("every planted half has a window");
            assert_eq!(w.onset_date, p.onset, "{metric} {} {}", p.season, p.year);
            assert_eq!(w.days_used, 45);
            matched += 1;
        }
    }
    assert_eq!(matched, 80);
}

#[test]
fn optional_stages_skip_only_under_all() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture::generate(tmp.path(), 3).unwrap();
    let mut cfg = RunConfig::from_file(&fx.config).unwrap();
    cfg.ensemble = None;
    cfg.outages = None;
    let s = run_all(&cfg).unwrap();
    let skipped: Vec<Stage> = s.skipped.iter().map(|x| x.0).collect();
    assert_eq!(skipped, vec![Stage::Project, Stage::Adequacy]);
    let report = s.report.unwrap();
    assert!(report.contains("onset trends"));
    assert!(!report.contains("merge year"));
    assert!(run_pipeline(&cfg, &[Stage::Adequacy]).is_err());
}
