//! Command-line front end: configuration, dispatch, CSV/PGM output and the
//! deblurring demo.

pub mod config;
pub mod csv;
pub mod deblur;
pub mod pgm;
pub mod selftest;

use std::io::Write as _;
use std::path::Path;

use crate::error::{DeconvError, Result};
use crate::experiments::{
    empirical_rip_check, run_noise_sweep, run_oversampling_sweep, run_phase_transition, Axis, Dims, PhaseSpec,
    TrialSettings,
};
use crate::seed::{derive_seed, TAG_MODULATION, TAG_NOISE, TAG_TRUTH};
use crate::signal_model::{
    coherence_profile, sample_ground_truth, synthesize_measurements, GroundTruth, MeasurementSet, ProblemInstance,
};
use crate::solver::{relative_error, solve, SolveStatus};

pub use config::{parse_run_config, Command, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const USAGE: &str = "\
usage: moddeconv <command> [--config FILE] [--key value ...]

commands:
  synth       draw an instance and write its measurements
  solve       draw an instance, recover it, write the loss/error trace
  phase       success-rate grid over two of K, M, Q, N, L
  noise       relative error against SNR (dB)
  oversample  relative error against L / (K + M)
  ripcheck    isometry ratios near the ground truth
  deblur      random-mask image deblurring demo
  selftest    adjoint, oracle, identity and gradient checks

Dimensions are given as --L --Q --M --K --N; see README.md for all keys.";

pub fn exit_code(err: &DeconvError) -> i32 {
    match err {
        DeconvError::Io(_) | DeconvError::Format(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// Entry point used by the binary; `args` excludes the program name.
pub fn main_with_args(args: &[String]) -> i32 {
    match args.first().map(String::as_str) {
        None => {
            eprintln!("{USAGE}");
            return EXIT_CONFIG;
        }
        Some("help" | "--help" | "-h") => {
            let _ = writeln!(std::io::stdout(), "{USAGE}");
            return EXIT_OK;
        }
        _ => {}
    }
    if let Some(help) = config::help_request(args) {
        let _ = writeln!(std::io::stdout(), "{help}");
        return EXIT_OK;
    }
    let cfg = match parse_run_config(args, None) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match run(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Executes a parsed configuration and returns the process exit code.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    match cfg.command {
        Command::Synth => cmd_synth(cfg),
        Command::Solve => cmd_solve(cfg),
        Command::Phase => cmd_phase(cfg),
        Command::Noise => cmd_noise(cfg),
        Command::Oversample => cmd_oversample(cfg),
        Command::RipCheck => cmd_ripcheck(cfg),
        Command::Deblur => cmd_deblur(cfg),
        Command::SelfTest => cmd_selftest(cfg),
    }
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sigma_of(cfg: &RunConfig) -> Result<f64> {
    match (cfg.get::<f64>("sigma")?, cfg.get::<f64>("snr")?) {
        (Some(_), Some(_)) => Err(DeconvError::Config("give either sigma or snr, not both".into())),
        (Some(s), None) if s >= 0.0 && s.is_finite() => Ok(s),
        (Some(s), None) => Err(DeconvError::Config(format!("sigma must be finite and >= 0, got {s}"))),
        (None, Some(db)) => Ok(crate::experiments::sigma_for_snr(db)),
        (None, None) => Ok(0.0),
    }
}

struct Problem {
    instance: ProblemInstance,
    truth: GroundTruth,
    measurements: MeasurementSet,
}

fn draw_problem(cfg: &RunConfig) -> Result<Problem> {
    let d = cfg.dims.expect("command uses dimensions");
    let instance = ProblemInstance::dct_1d(d.l, d.q, d.m, d.k, d.n, derive_seed(cfg.seed, TAG_MODULATION, 0))?;
    let truth = sample_ground_truth(d.m, d.k, d.n, cfg.get_or("d0", 1.0)?, derive_seed(cfg.seed, TAG_TRUTH, 0))?;
    let measurements = synthesize_measurements(&instance, &truth, sigma_of(cfg)?, derive_seed(cfg.seed, TAG_NOISE, 0))?;
    Ok(Problem {
        instance,
        truth,
        measurements,
    })
}

fn cmd_synth(cfg: &RunConfig) -> Result<i32> {
    let p = draw_problem(cfg)?;
    let l = p.instance.l();
    let rows = p.measurements.yhat.iter().enumerate().map(|(i, y)| {
        vec![
            (i / l).to_string(),
            (i % l).to_string(),
            csv::format_float(y.re),
            csv::format_float(y.im),
        ]
    });
    emit(cfg, &csv::render_rows(&["channel", "frequency", "re", "im"], rows))?;
    Ok(EXIT_OK)
}

fn cmd_solve(cfg: &RunConfig) -> Result<i32> {
    let p = draw_problem(cfg)?;
    let mut options = cfg.solver;
    if cfg.flag("oracle_coherence", true)? {
        let prof = coherence_profile(&p.instance, &p.truth.h0, &p.truth.x0)?;
        options.mu2 = Some(prof.mu2);
        options.nu2 = Some(prof.nu2);
    }
    let (init, res) = solve(&p.instance, &p.measurements, &options, Some(&p.truth))?;
    let err = relative_error(&res.u, &res.v, &p.truth.h0, &p.truth.x0)?;
    eprintln!(
        "status={:?} iterations={} eta={} d={} relative_error={}",
        res.status,
        res.iterations,
        csv::format_float(res.eta),
        csv::format_float(init.d),
        csv::format_float(err)
    );
    let rows = res
        .loss_trace
        .iter()
        .zip(&res.error_trace)
        .enumerate()
        .map(|(i, (l, e))| vec![i.to_string(), csv::format_float(*l), csv::format_float(*e)]);
    emit(cfg, &csv::render_rows(&["iteration", "loss", "relative_error"], rows))?;
    Ok(if res.status == SolveStatus::Converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn trial_settings(cfg: &RunConfig) -> Result<TrialSettings> {
    let base = TrialSettings::default();
    Ok(TrialSettings {
        threshold: cfg.get_or("threshold", base.threshold)?,
        solver: cfg.solver_options(base.solver)?,
        ..base
    })
}

fn cmd_phase(cfg: &RunConfig) -> Result<i32> {
    let x_axis: Axis = cfg.get_or("x_axis", Axis::K)?;
    let y_axis: Axis = cfg.get_or("y_axis", Axis::M)?;
    let missing = |k: &str| DeconvError::Config(format!("missing required key '{k}' for phase"));
    let spec = PhaseSpec {
        fixed: cfg.dims.expect("phase uses dimensions"),
        x_axis,
        x_values: cfg.list("x_values")?.ok_or_else(|| missing("x_values"))?,
        y_axis,
        y_values: cfg.list("y_values")?.ok_or_else(|| missing("y_values"))?,
        trials: cfg.get_or("trials", 50)?,
        settings: trial_settings(cfg)?,
    };
    let grid = run_phase_transition(&spec, cfg.seed)?;
    eprintln!("cells with success rate >= 0.95: {}", grid.region_size(0.95));
    emit(cfg, &csv::render_csv(&csv::Table::Phase(&grid)))?;
    Ok(EXIT_OK)
}

fn cmd_noise(cfg: &RunConfig) -> Result<i32> {
    let snr = cfg.list::<f64>("snr_values")?.unwrap_or_else(|| vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
    let table = run_noise_sweep(
        cfg.dims.expect("noise uses dimensions"),
        &snr,
        cfg.get_or("trials", 20)?,
        cfg.seed,
        &trial_settings(cfg)?,
    )?;
    emit(cfg, &csv::render_csv(&csv::Table::Sweep(&table)))?;
    Ok(EXIT_OK)
}

fn cmd_oversample(cfg: &RunConfig) -> Result<i32> {
    let ratios = cfg
        .list::<f64>("ratios")?
        .unwrap_or_else(|| vec![1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0]);
    let table = run_oversampling_sweep(
        cfg.require("K")?,
        cfg.require("M")?,
        &ratios,
        cfg.get_or("trials", 20)?,
        cfg.seed,
        &trial_settings(cfg)?,
    )?;
    emit(cfg, &csv::render_csv(&csv::Table::Sweep(&table)))?;
    Ok(EXIT_OK)
}

fn cmd_ripcheck(cfg: &RunConfig) -> Result<i32> {
    let d: Dims = cfg.dims.expect("ripcheck uses dimensions");
    let inst = ProblemInstance::dct_1d(d.l, d.q, d.m, d.k, d.n, derive_seed(cfg.seed, TAG_MODULATION, 0))?;
    let truth = sample_ground_truth(d.m, d.k, d.n, 1.0, derive_seed(cfg.seed, TAG_TRUTH, 0))?;
    let report = empirical_rip_check(&inst, &truth, cfg.get_or("samples", 1000)?, cfg.seed)?;
    eprintln!(
        "samples={} draws={} mean={} within[0.5,1.5]={} exhausted={}",
        report.ratios.len(),
        report.draws,
        csv::format_float(report.mean()),
        csv::format_float(report.fraction_within(0.5, 1.5)),
        report.exhausted
    );
    emit(cfg, &csv::render_csv(&csv::Table::Rip(&report)))?;
    Ok(if report.exhausted { EXIT_NOT_CONVERGED } else { EXIT_OK })
}

fn cmd_deblur(cfg: &RunConfig) -> Result<i32> {
    let full = cfg.flag("full", false)?;
    let base = if full {
        deblur::DeblurOptions::full()
    } else {
        deblur::DeblurOptions::desk()
    };
    let images = match cfg.params_str("images") {
        Some(list) => list
            .split(',')
            .map(|p| pgm::read_pgm(Path::new(p.trim())))
            .collect::<Result<Vec<_>>>()?,
        None => {
            let size = cfg.get_or("size", if full { 150 } else { 64 })?;
            deblur::synthetic_cells(size, cfg.get_or("N", 3)?, cfg.seed)?
        }
    };
    let pixels = images.first().map_or(0, |im| im.height * im.width);
    let options = deblur::DeblurOptions {
        blur_size: cfg.get_or("blur_size", base.blur_size)?,
        blur_sigma: cfg.get_or("blur_sigma", base.blur_sigma)?,
        k: cfg.get_or("K", ((0.15 * pixels as f64).round() as usize).max(1))?,
        seed: cfg.seed,
        solver: cfg.solver_options(base.solver)?,
    };
    let out = deblur::deblur_demo(&images, &options)?;
    let m = out.metrics;
    println!(
        "image_relative_mse={} model_relative_mse={} kernel_relative_mse={} iterations={} status={:?}",
        csv::format_float(m.image_mse),
        csv::format_float(m.model_mse),
        csv::format_float(m.kernel_mse),
        m.iterations,
        m.status
    );
    if let Some(dir) = &cfg.output {
        std::fs::create_dir_all(dir)?;
        for (n, (rec, obs)) in out.recovered.iter().zip(&out.observed).enumerate() {
            pgm::write_pgm(rec, &dir.join(format!("recovered_{n}.pgm")))?;
            pgm::write_pgm(obs, &dir.join(format!("observed_{n}.pgm")))?;
        }
        let peak = out.kernel.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        let scaled: Vec<f64> = out.kernel.iter().map(|v| v / peak).collect();
        let kimg = pgm::GrayImage::from_unclamped(options.blur_size, options.blur_size, &scaled)?;
        pgm::write_pgm(&kimg, &dir.join("kernel.pgm"))?;
    }
    Ok(if m.status == SolveStatus::Diverged {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    })
}

fn cmd_selftest(cfg: &RunConfig) -> Result<i32> {
    let results = selftest::run_selftest(cfg.seed)?;
    let mut ok = true;
    for r in &results {
        println!(
            "{} {} (worst {})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            csv::format_float(r.worst)
        );
        ok &= r.passed;
    }
    Ok(if ok { EXIT_OK } else { EXIT_NOT_CONVERGED })
}
