use std::path::Path;
use std::process::{Command, Output};

use moddeconv::cli::pgm::{read_pgm, write_pgm, GrayImage};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moddeconv"))
        .args(args)
        .env("MODDECONV_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn solve_succeeds_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = run(&[
        "solve", "--L", "120", "--Q", "120", "--M", "8", "--K", "8", "--N", "1", "--seed", "7", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("iteration,loss,relative_error\n"));
    let last: f64 = text.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(last < 1e-2);
}

#[test]
fn too_few_iterations_reports_non_convergence() {
    let o = run(&["solve", "--L", "120", "--M", "8", "--K", "8", "--max_iters", "2"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn configuration_errors_exit_with_two() {
    assert_eq!(code(&run(&["solve", "--L", "64", "--M", "4", "--K", "50", "--Q", "40"])), 2);
    assert_eq!(code(&run(&["solve", "--L", "64", "--M", "4", "--K", "4", "--bogus", "1"])), 2);
    assert_eq!(code(&run(&["solve", "--L", "sixty", "--M", "4", "--K", "4"])), 2);
    assert_eq!(code(&run(&["warp"])), 2);
    assert_eq!(code(&run(&[])), 2);
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# synthetic run\nL = 32\nM = 3\nK = 3\nseed = 1\n").unwrap();
    let a = run(&["synth", "--config", cfg.to_str().unwrap()]);
    let b = run(&["synth", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    let c = run(&["synth", "--L", "32", "--M", "3", "--K", "3", "--seed", "9"]);
    assert_eq!(code(&a), 0);
    assert_ne!(a.stdout, b.stdout);
    assert_eq!(b.stdout, c.stdout);
    std::fs::write(&cfg, "L = 32\nM = 3\nK = 3\ncolour = blue\n").unwrap();
    assert_eq!(code(&run(&["synth", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn missing_files_exit_with_three() {
    assert_eq!(code(&run(&["synth", "--config", "/nonexistent/run.conf"])), 3);
    let o = run(&["deblur", "--images", "/nonexistent/a.pgm"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn phase_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n);
    let args = |out: &Path| {
        vec![
            "phase".to_string(),
            "--L".into(),
            "48".into(),
            "--M".into(),
            "4".into(),
            "--K".into(),
            "4".into(),
            "--x_values".into(),
            "4,8".into(),
            "--y_values".into(),
            "4,60".into(),
            "--trials".into(),
            "3".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let (p1, p2) = (path("a.csv"), path("b.csv"));
    for p in [&p1, &p2] {
        let a = args(p);
        let o = run(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,trials,successes,success_rate,valid");
    assert_eq!(lines.len(), 5);
    // M = 60 exceeds L = 48: kept, flagged invalid.
    assert!(lines[3].ends_with(",0") && lines[4].ends_with(",0"));
    assert!(lines[1].ends_with(",1"));
}

#[test]
fn sweeps_and_ripcheck_emit_tables() {
    let o = run(&["noise", "--L", "64", "--M", "4", "--K", "4", "--snr_values", "20,40", "--trials", "2"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("snr_db,mean_log_error,mean_error,median_error,trials\n"));
    assert_eq!(text.lines().count(), 3);

    let o = run(&["oversample", "--M", "4", "--K", "4", "--ratios", "2,4", "--trials", "2"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("oversampling,"));

    let o = run(&["ripcheck", "--L", "64", "--M", "4", "--K", "4", "--samples", "10"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 11);
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn deblur_reads_and_writes_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = vec![];
    for n in 0..2 {
        let px: Vec<f64> = (0..256)
            .map(|i| {
                let (r, c) = ((i / 16) as f64, (i % 16) as f64);
                0.5 + 0.4 * ((r + n as f64) / 5.0).sin() * (c / 7.0).cos()
            })
            .collect();
        let p = dir.path().join(format!("in{n}.pgm"));
        write_pgm(&GrayImage::new(16, 16, px).unwrap(), &p).unwrap();
        paths.push(p.to_str().unwrap().to_string());
    }
    let out = dir.path().join("out");
    let o = run(&[
        "deblur",
        "--images",
        &paths.join(","),
        "--blur_size",
        "3",
        "--blur_sigma",
        "0.8",
        "--K",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("kernel_relative_mse="));
    let rec = read_pgm(&out.join("recovered_1.pgm")).unwrap();
    assert_eq!((rec.height, rec.width), (16, 16));
    assert_eq!(read_pgm(&out.join("kernel.pgm")).unwrap().pixels.len(), 9);
}

#[test]
fn ascii_pgm_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.pgm");
    std::fs::write(&p, "P2\n2 2\n255\n0 1 2 3\n").unwrap();
    let o = run(&["deblur", "--images", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("P2"));
}
