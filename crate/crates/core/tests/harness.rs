mod common;

use std::io::Write;

use coofdm_core::harness::{
    channel_output, parse_config, phase_profile, run_single, sweep, write_runs_csv, write_sweep_csv, ConfigError,
    CsvOptions, SimConfig, SweepSpec, SweepVariable, CSV_COLUMNS,
};
use coofdm_core::iqfile::{load_iq, save_iq, MAGIC};
use common::*;
use tempfile::NamedTempFile;

fn config_file(text: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn empty_file_loads_link_defaults() {
    let cfg = parse_config(config_file("").path()).unwrap();
    assert_eq!(cfg, SimConfig::default());
    assert_eq!((cfg.n_fft, cfg.n_data_sc, cfg.n_cp, cfg.qam_order), (512, 412, 46, 16));
    assert_eq!(cfg.dac_rate_hz, 40e9);
    assert_eq!(cfg.linewidth_hz, 100e3);
    assert_eq!(cfg.wavelength_nm, 1550.0);
    assert_eq!(cfg.fiber_km, 800.0);
}

#[test]
fn file_overrides_and_errors() {
    let cfg = parse_config(config_file("# link\ngamma_ppm = 200\n\nosnr_db = 18 # trailing\n").path()).unwrap();
    assert_eq!(cfg.gamma_ppm, 200.0);
    assert_eq!(cfg.osnr_db, 18.0);

    match parse_config(config_file("n_fft = abc\n").path()) {
        Err(e @ ConfigError::TypeMismatch { .. }) => assert!(e.to_string().contains("n_fft")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        parse_config(config_file("colour = blue\n").path()),
        Err(ConfigError::UnknownKey { line: 1, .. })
    ));
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        parse_config(dir.path().join("absent.cfg")),
        Err(ConfigError::MissingFile { .. })
    ));
}

#[test]
fn report_counts_every_data_bit() {
    let cfg = awgn_equivalent(100.0, 16.0);
    let r = run_single(&cfg, 2).unwrap();
    let ofdm = cfg.ofdm_config();
    let expected = (ofdm.n_frame_syms - 2) * cfg.n_data_sc * 4 * 2;
    assert_eq!(r.bits_counted as usize, expected);
    assert_eq!(r.ber, r.bit_errors as f64 / r.bits_counted as f64);
    assert!(r.bit_errors > 0);
    let rel = (r.gamma_hat.unwrap() - r.gamma_true).abs() / r.gamma_true;
    assert_eq!(r.rel_err, Some(rel));
}

#[test]
fn clock_estimate_at_26_db() {
    // Ideal fibre and lasers.
    let r = run_single(&awgn_equivalent(200.0, 26.0), 4).unwrap();
    assert!(r.rel_err.unwrap() < 0.05, "{:?}", r.rel_err);
    // Full link: reported, though laser phase noise after dispersion limits it.
    let full = SimConfig {
        gamma_ppm: 200.0,
        osnr_db: 26.0,
        ..SimConfig::default()
    };
    let r = run_single(&full, 4).unwrap();
    assert!(r.rel_err.unwrap() < 0.3, "{:?}", r.rel_err);
}

#[test]
fn single_value_sweep_matches_run_single() {
    let base = SimConfig {
        osnr_db: 20.0,
        ..SimConfig::default()
    };
    let spec = SweepSpec {
        variable: SweepVariable::ScoPpm,
        values: vec![-100.0],
        base: base.clone(),
        seeds: 3,
        first_seed: 10,
    };
    let result = sweep(&spec, true).unwrap();
    for (i, p) in result.points.iter().enumerate() {
        let direct = run_single(&SimConfig { gamma_ppm: -100.0, ..base.clone() }, 10 + i as u64).unwrap();
        assert_eq!(p.report, direct);
    }
}

#[test]
fn parallel_and_serial_sweeps_agree() {
    let spec = SweepSpec {
        variable: SweepVariable::OsnrDb,
        values: vec![14.0, 20.0, 26.0],
        base: SimConfig {
            gamma_ppm: 150.0,
            ..SimConfig::default()
        },
        seeds: 4,
        first_seed: 0,
    };
    let par = sweep(&spec, true).unwrap();
    assert_eq!(par, sweep(&spec, false).unwrap());
    let order: Vec<(f64, u64)> = par.points.iter().map(|p| (p.value, p.report.seed)).collect();
    let mut sorted = order.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    assert_eq!(order, sorted);
}

#[test]
fn sweep_rejects_empty_specs() {
    let spec = SweepSpec {
        variable: SweepVariable::OsnrDb,
        values: vec![],
        base: SimConfig::default(),
        seeds: 1,
        first_seed: 0,
    };
    assert!(sweep(&spec, false).is_err());
    assert!(sweep(&SweepSpec { values: vec![20.0], seeds: 0, ..spec }, false).is_err());
}

#[test]
fn sweep_csv_layout() {
    let base = SimConfig::default();
    let spec = SweepSpec {
        variable: SweepVariable::ScoPpm,
        values: vec![-200.0, 200.0],
        base: base.clone(),
        seeds: 2,
        first_seed: 0,
    };
    let result = sweep(&spec, true).unwrap();
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &result, &base, CsvOptions { timestamp: false }).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(!text.contains("generated_unix_s"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], CSV_COLUMNS.join(","));
    // Two seeds plus mean and std per value.
    assert_eq!(rows.len(), 1 + 2 * 4);
    let labels: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap()).collect();
    assert_eq!(labels, ["0", "1", "mean", "std", "0", "1", "mean", "std"]);
    assert!(rows[1].starts_with("sco_ppm,-200,0,"));

    let mut buf = Vec::new();
    write_runs_csv(&mut buf, &[run_single(&base, 0).unwrap()], CsvOptions { timestamp: true }).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# generated_unix_s")));
    assert!(text.lines().any(|l| l.starts_with("# gamma_ppm = ")));
}

#[test]
fn phase_profile_shapes() {
    let flat = phase_profile(&sco_only(0.0), 7, 1).unwrap();
    assert!(flat.rows.iter().all(|r| r.phase.abs() < 1e-9));

    let fan = phase_profile(&sco_only(200.0), 7, 1).unwrap();
    let fit = &fan.fits.iter().find(|(l, _)| *l == 7).unwrap().1;
    let at_206 = fit.at(206.0);
    let expected = 7.0 * 2.0 * std::f64::consts::PI * 558.0 * 2e-4 / 512.0 * 206.0;
    assert!((at_206 - expected).abs() / expected < 0.02, "{at_206} vs {expected}");
    assert!((expected - 1.975).abs() < 1e-3);
    assert_eq!(fan.rows.len(), 7 * 420);
    assert!(phase_profile(&sco_only(0.0), 0, 1).is_err());
}

#[test]
fn iq_dump_round_trips() {
    let (_, raw) = channel_output(&SimConfig::default(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rx.iq");
    save_iq(&path, &raw).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(load_iq(&path).unwrap(), raw);
}

#[test]
fn channel_is_deterministic_per_seed() {
    let cfg = SimConfig {
        gamma_ppm: 120.0,
        osnr_db: 15.0,
        ..SimConfig::default()
    };
    let (_, a) = channel_output(&cfg, 9).unwrap();
    let (_, b) = channel_output(&cfg, 9).unwrap();
    let (_, c) = channel_output(&cfg, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
