use lacunary::conditions::{ConditionReport, Verdict};
use lacunary::microlocal::ExtractionReport;
use lacunary::probe::{HolderFit, Oscillation, QuotientTrace};
use lacunary_cli::{CatalogEntry, RiemannProbeOutput};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lacunary"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn csv(text: &str) -> Vec<[f64; 3]> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,re,im"));
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

#[test]
fn list_catalog() {
    let text = stdout(&["list"]);
    assert!(text.contains("weierstrass_cos(a,b), requires b ≥ a > 1"));
    assert!(text.contains("n=3 -> 16"));
    assert!(text.contains("R(t)=Σ sin(π j² t)/j²"));
    let json = stdout(&["list", "--format", "json"]);
    let entries: Vec<CatalogEntry> = serde_json::from_str(&json).unwrap();
    assert_eq!(entries, lacunary_cli::catalog());
    assert_eq!(code(&["list", "--format", "yaml"]), 1);
}

#[test]
fn sample_rows_and_codes() {
    let text = stdout(&[
        "sample", "--family", "riemann", "--t0", "0", "--t1", "2", "--points", "3", "--terms",
        "100",
    ]);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    let rows = csv(&text);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], 1.0);
    assert!(rows[1][2].abs() <= 1e-15);
    for line in text.lines().skip(1) {
        for field in line.split(',') {
            let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.len(), 18, "{field}");
        }
    }
    let json = stdout(&[
        "sample", "--family", "custom", "--amps", "1", "--freqs", "1", "--points", "5", "--format",
        "json",
    ]);
    let rows: Vec<lacunary::SampleRow> = serde_json::from_str(&json).unwrap();
    for r in rows {
        assert!((r.re - r.t.cos()).abs() < 1e-15);
    }
    assert_eq!(code(&["sample", "--family", "power"]), 1);
    assert_eq!(code(&["sample", "--family", "riemann", "--points", "0"]), 1);
    assert_eq!(
        code(&["sample", "--family", "riemann", "--t0", "2", "--t1", "1"]),
        1
    );
    assert_eq!(
        code(&["sample", "--family", "riemann", "--eps", "1e-3", "--terms", "5"]),
        1
    );
    assert_eq!(
        code(&[
            "sample",
            "--family",
            "weierstrass_cos",
            "--a",
            "2",
            "--b",
            "3",
            "--t1",
            "1e6"
        ]),
        2
    );
    assert_eq!(
        code(&["sample", "--family", "power", "--p", "1.01", "--q", "2", "--eps", "1e-9"]),
        2
    );
}

#[test]
fn figure_presets() {
    let rows = csv(&stdout(&["figure", "f3"]));
    assert_eq!(rows.len(), 1000);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[999][0], 150.0);
    let out = run(&["figure", "f4dev", "--points", "10"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("j = 3814281"));
    assert_eq!(csv(std::str::from_utf8(&out.stdout).unwrap()).len(), 10);
    assert_eq!(code(&["figure", "f9"]), 1);
    assert_eq!(code(&["figure", "f2", "--points", "0"]), 1);
}

#[test]
fn check_reports() {
    let verdict = |args: &[&str]| {
        let r: ConditionReport = serde_json::from_str(&stdout(args)).unwrap();
        r.verdict
    };
    assert_eq!(
        verdict(&[
            "check",
            "--family",
            "weierstrass_cos",
            "--a",
            "2",
            "--b",
            "3"
        ]),
        Verdict::NowhereDifferentiableNonLipschitz
    );
    assert_eq!(
        verdict(&["check", "--family", "power", "--p", "3", "--q", "1"]),
        Verdict::C1
    );
    assert_eq!(
        verdict(&["check", "--family", "riemann"]),
        Verdict::Inconclusive
    );
    assert_eq!(
        code(&["check", "--family", "riemann", "--j0", "5", "--j1", "10"]),
        1
    );
    assert_eq!(code(&["check", "--family", "riemann", "--j0", "5"]), 1);
    assert_eq!(
        code(&["check", "--family", "custom", "--amps", "1,1", "--freqs", "1,1"]),
        2
    );
}

#[test]
fn extract_reports() {
    let reports: Vec<ExtractionReport> = serde_json::from_str(&stdout(&[
        "extract", "--family", "f_theta", "--theta", "1", "--k", "3..12", "--t0", "0",
    ]))
    .unwrap();
    assert_eq!(reports.len(), 10);
    for r in &reports {
        assert!(r.residual_analytic <= 1e-6 && r.residual_quadrature <= 1e-6);
    }
    let reports: Vec<ExtractionReport> = serde_json::from_str(&stdout(&[
        "extract",
        "--family",
        "weierstrass_cos",
        "--a",
        "2",
        "--b",
        "3",
        "--k",
        "6",
        "--t0",
        "0",
    ]))
    .unwrap();
    assert!((reports[0].analytic.re - 1.0 / 128.0).abs() < 1e-12);

    let out = run(&[
        "extract",
        "--family",
        "custom",
        "--amps",
        "1,1,1",
        "--freqs",
        "1,1.5,2.25",
        "--k",
        "1",
        "--lambda",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("LambdaTooWide") && err.contains("--method gap"),
        "{err}"
    );
    let gap = stdout(&[
        "extract",
        "--family",
        "custom",
        "--amps",
        "1,1,1",
        "--freqs",
        "1,1.5,2.25",
        "--k",
        "1",
        "--method",
        "gap",
    ]);
    let reports: Vec<ExtractionReport> = serde_json::from_str(&gap).unwrap();
    assert!(reports[0].residual_analytic < 1e-12);

    assert_eq!(code(&["extract", "--family", "f_theta", "--theta", "1"]), 1);
    assert_eq!(
        code(&["extract", "--family", "f_theta", "--theta", "1", "--k", "5..3"]),
        1
    );
    assert_eq!(
        code(&["extract", "--family", "f_theta", "--theta", "1", "--k", "3", "--radius", "64"]),
        2
    );
}

#[test]
fn probe_subcommands() {
    let p: RiemannProbeOutput = serde_json::from_str(&stdout(&[
        "probe",
        "riemann-derivative",
        "--r",
        "1",
        "--s",
        "1",
        "--h",
        "1e-4",
        "--terms",
        "1e7",
    ]))
    .unwrap();
    assert_eq!(p.terms, 10_000_000);
    assert!((p.value + std::f64::consts::FRAC_PI_2).abs() < 0.05);
    assert_eq!(
        code(&[
            "probe",
            "riemann-derivative",
            "--r",
            "2",
            "--s",
            "1",
            "--h",
            "1e-4"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "probe",
            "riemann-derivative",
            "--r",
            "1",
            "--s",
            "3",
            "--h",
            "1e-4",
            "--terms",
            "100"
        ]),
        1
    );

    let fit: HolderFit = serde_json::from_str(&stdout(&[
        "probe", "holder", "--family", "f_theta", "--theta", "0.5", "--grid", "512",
    ]))
    .unwrap();
    assert!((fit.alpha_hat - 0.5).abs() < 0.1);
    assert_eq!(
        code(&["probe", "holder", "--family", "f_theta", "--theta", "0.5", "--levels", "3"]),
        1
    );
    assert_eq!(
        code(&["probe", "holder", "--family", "custom", "--amps", "0", "--freqs", "1"]),
        2
    );

    let tr: QuotientTrace = serde_json::from_str(&stdout(&[
        "probe",
        "quotients",
        "--family",
        "weierstrass_sin",
        "--a",
        "2",
        "--b",
        "2.5",
        "--t0",
        "0",
    ]))
    .unwrap();
    let mags: Vec<f64> = tr.quotients.iter().map(|q| q.norm()).collect();
    assert!(mags.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(
        code(&[
            "probe",
            "quotients",
            "--family",
            "f_theta",
            "--theta",
            "1",
            "--k",
            "3,3"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "probe",
            "quotients",
            "--family",
            "f_theta",
            "--theta",
            "1",
            "--t0",
            "1e20"
        ]),
        2
    );

    let osc: Oscillation = serde_json::from_str(&stdout(&[
        "probe",
        "oscillation",
        "--family",
        "f_theta",
        "--theta",
        "0.5",
        "--h",
        "0",
    ]))
    .unwrap();
    assert_eq!(osc.value, 0.0);
    assert_eq!(
        code(&[
            "probe",
            "oscillation",
            "--family",
            "f_theta",
            "--theta",
            "0.5",
            "--h",
            "-1"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "probe",
            "oscillation",
            "--family",
            "custom",
            "--amps",
            "1",
            "--freqs",
            "1e20",
            "--h",
            "0.1",
            "--max-terms",
            "1"
        ]),
        2
    );
    assert_eq!(code(&["probe", "nothing"]), 1);
}

#[test]
fn help_and_usage() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["bogus"]), 1);
}

#[test]
fn output_file_is_written_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f2.csv");
    let p = path.to_str().unwrap();
    assert!(run(&["figure", "f2", "--points", "20", "--output", p])
        .stdout
        .is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, stdout(&["figure", "f2", "--points", "20"]));
    // only the target remains
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    let missing = dir.path().join("no/such/dir/x.csv");
    assert_eq!(
        code(&["figure", "f2", "--output", missing.to_str().unwrap()]),
        1
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let args = [
        "sample", "--family", "power", "--p", "2", "--q", "3", "--t1", "1", "--points", "50",
        "--terms", "20000",
    ];
    let one = bin().args(args).env("NDF_THREADS", "1").output().unwrap();
    let four = bin().args(args).env("NDF_THREADS", "4").output().unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let bad = bin()
        .args(args)
        .env("NDF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
