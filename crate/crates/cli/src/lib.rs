//! Command-line front end: argument parsing, dispatch and serialization.
//!
//! [`run`] is the whole program minus process exit, so tests can drive it
//! in-process. Exit codes: 0 success, 1 precondition or flag violation,
//! 2 numerical failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use lacunary::conditions::{self, ConditionReport};
use lacunary::microlocal::{self, Kernel};
use lacunary::probe::{self, ScaleRule, TGrid};
use lacunary::series::iterated_log_start;
use lacunary::{Family, SampleRow, SeriesSpec, Truncation, Variant};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] lacunary::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "lacunary",
    version,
    about = "Lacunary Fourier series: sampling, coefficient extraction, condition checks and probes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Built-in family catalog.
    List {
        #[arg(long, value_enum, default_value_t = ListFormat::Text)]
        format: ListFormat,
    },
    /// Sample a partial sum on an inclusive grid.
    Sample(SampleArgs),
    /// Figure-data presets.
    Figure(FigureArgs),
    /// Hypothesis scan and verdict (JSON).
    Check(CheckArgs),
    /// Coefficient-extraction sweep (JSON).
    Extract(ExtractArgs),
    /// Differentiability and Hölder probes (JSON).
    Probe {
        #[command(subcommand)]
        probe: ProbeCommand,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ListFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SampleFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    #[value(name = "f_theta")]
    FTheta,
    #[value(name = "weierstrass_cos")]
    WeierstrassCos,
    #[value(name = "weierstrass_sin")]
    WeierstrassSin,
    #[value(name = "darboux")]
    Darboux,
    #[value(name = "gap_example")]
    GapExample,
    #[value(name = "power")]
    Power,
    #[value(name = "riemann")]
    Riemann,
    #[value(name = "iterated_log")]
    IteratedLog,
    #[value(name = "log_power")]
    LogPower,
    #[value(name = "custom")]
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    #[value(name = "complex")]
    Complex,
    #[value(name = "real_part")]
    RealPart,
    #[value(name = "imag_part")]
    ImagPart,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Complex => Variant::Complex,
            VariantArg::RealPart => Variant::RealPart,
            VariantArg::ImagPart => Variant::ImagPart,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SeriesArgs {
    #[arg(long, value_enum)]
    pub family: FamilyName,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<f64>,
    #[arg(long)]
    pub n: Option<u32>,
    /// Custom amplitudes, comma separated; `re` or `re:im`.
    #[arg(long, allow_hyphen_values = true)]
    pub amps: Option<String>,
    /// Custom frequencies, comma separated, strictly increasing.
    #[arg(long)]
    pub freqs: Option<String>,
    /// Override the family's default projection.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Accept parameters outside the family's validity range.
    #[arg(long)]
    pub allow_out_of_range: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TruncArgs {
    /// Tail tolerance.
    #[arg(long, conflicts_with_all = ["terms", "max_terms"])]
    pub eps: Option<f64>,
    /// Fixed number of terms (accepts `1e7`).
    #[arg(long, value_parser = parse_count, conflicts_with = "max_terms")]
    pub terms: Option<u64>,
    /// As many terms as keep phases exact on the range, at most this many.
    #[arg(long, value_parser = parse_count)]
    pub max_terms: Option<u64>,
}

impl TruncArgs {
    fn resolve(&self, default: Truncation) -> Truncation {
        if let Some(e) = self.eps {
            Truncation::Eps(e)
        } else if let Some(n) = self.terms {
            Truncation::Terms(n)
        } else if let Some(m) = self.max_terms {
            Truncation::PhaseLimited { max_terms: m }
        } else {
            default
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write to this file (atomically) instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = std::f64::consts::TAU)]
    pub t1: f64,
    #[arg(long, value_parser = parse_count, default_value = "1000")]
    pub points: u64,
    #[command(flatten)]
    pub trunc: TruncArgs,
    #[arg(long, value_enum, default_value_t = SampleFormat::Csv)]
    pub format: SampleFormat,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FigureName {
    F2,
    F3,
    F4,
    F4dev,
}

#[derive(Args, Debug)]
pub struct FigureArgs {
    #[arg(value_enum)]
    pub name: FigureName,
    #[arg(long, value_parser = parse_count, default_value = "1000")]
    pub points: u64,
    #[arg(long, value_enum, default_value_t = SampleFormat::Csv)]
    pub format: SampleFormat,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[arg(long, value_parser = parse_count, requires = "j1")]
    pub j0: Option<u64>,
    #[arg(long, value_parser = parse_count, requires = "j0")]
    pub j1: Option<u64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Chi,
    Gap,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Indices: `6`, `3..12` (inclusive) or `3,5,8`.
    #[arg(long, value_parser = parse_indices)]
    pub k: Indices,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Chi)]
    pub method: MethodArg,
    /// Bump support parameter; defaults to the local frequency ratio, at most 2.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-12)]
    pub eps: f64,
    #[arg(long, value_parser = parse_count, default_value = "4096")]
    pub nodes: u64,
    #[arg(long, default_value_t = microlocal::DEFAULT_RADIUS)]
    pub radius: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    #[value(name = "dyadic")]
    Dyadic,
    #[value(name = "inverse_b_k")]
    InverseBK,
    #[value(name = "inverse_delta_b_k")]
    InverseDeltaBK,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = std::f64::consts::TAU)]
    pub t1: f64,
    /// Half-open grid size.
    #[arg(long, value_parser = parse_count, default_value = "2048")]
    pub grid: u64,
}

impl GridArgs {
    fn grid(&self) -> TGrid {
        TGrid {
            t0: self.t0,
            t1: self.t1,
            n: self.grid as usize,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum ProbeCommand {
    /// One-sided difference quotients along a scale rule.
    Quotients {
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, value_enum, default_value_t = RuleArg::Dyadic)]
        rule: RuleArg,
        /// Scale indices (dyadic exponents or series indices).
        #[arg(long, value_parser = parse_indices)]
        k: Option<Indices>,
        #[command(flatten)]
        trunc: TruncArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Log-log fit of the grid oscillation against h.
    Holder {
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, default_value_t = probe::DEFAULT_H_MIN)]
        h_min: f64,
        #[arg(long, default_value_t = probe::DEFAULT_H_MAX)]
        h_max: f64,
        #[arg(long, value_parser = parse_count, default_value = "9")]
        levels: u64,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        trunc: TruncArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// `max |f(t+h) − f(t)|` over the grid.
    Oscillation {
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        trunc: TruncArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Symmetric quotient of `Σ sin(π j² t)/j²` at `t = r/s`.
    RiemannDerivative {
        #[arg(long, allow_hyphen_values = true)]
        r: i64,
        #[arg(long)]
        s: i64,
        #[arg(long)]
        h: f64,
        #[arg(long, value_parser = parse_count, default_value = "1e7")]
        terms: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

/// Non-negative integer, also in exponent notation (`1e7`).
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if x >= 0.0 && x.fract() == 0.0 && x <= 9007199254740992.0 {
        Ok(x as u64)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

/// Parsed `--k` list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Indices(pub Vec<u64>);

/// `6`, `3..12`, `3..=12` (both inclusive) or `3,5,8`.
pub fn parse_indices(s: &str) -> std::result::Result<Indices, String> {
    parse_index_list(s).map(Indices)
}

fn parse_index_list(s: &str) -> std::result::Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((lo, hi)) = s.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let (lo, hi) = (parse_count(lo.trim())?, parse_count(hi.trim())?);
        if lo > hi {
            return Err(format!("empty range {s}"));
        }
        if hi - lo > 1_000_000 {
            return Err("range too long".into());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|p| parse_count(p.trim())).collect()
}

fn parse_complex(s: &str) -> CliResult<Complex64> {
    let bad = || usage(format!("`{s}` is not an amplitude (use re or re:im)"));
    let mut it = s.trim().split(':');
    let re: f64 = it
        .next()
        .ok_or_else(bad)?
        .trim()
        .parse()
        .map_err(|_| bad())?;
    let im: f64 = match it.next() {
        Some(v) => v.trim().parse().map_err(|_| bad())?,
        None => 0.0,
    };
    if it.next().is_some() {
        return Err(bad());
    }
    Ok(Complex64::new(re, im))
}

fn need(v: Option<f64>, flag: &str, family: &str) -> CliResult<f64> {
    v.ok_or_else(|| usage(format!("family {family} needs --{flag}")))
}

pub fn build_spec(args: &SeriesArgs) -> CliResult<SeriesSpec> {
    let name = args
        .family
        .to_possible_value()
        .map(|v| v.get_name().to_owned())
        .unwrap_or_default();
    let fam = match args.family {
        FamilyName::FTheta => Family::FTheta {
            theta: need(args.theta, "theta", &name)?,
        },
        FamilyName::WeierstrassCos => Family::WeierstrassCos {
            a: need(args.a, "a", &name)?,
            b: need(args.b, "b", &name)?,
        },
        FamilyName::WeierstrassSin => Family::WeierstrassSin {
            a: need(args.a, "a", &name)?,
            b: need(args.b, "b", &name)?,
        },
        FamilyName::Darboux => Family::Darboux,
        FamilyName::GapExample => Family::GapExample {
            a: need(args.a, "a", &name)?,
            p: need(args.p, "p", &name)?,
        },
        FamilyName::Power => Family::Power {
            p: need(args.p, "p", &name)?,
            q: need(args.q, "q", &name)?,
        },
        FamilyName::Riemann => Family::Riemann,
        FamilyName::IteratedLog => Family::IteratedLog {
            n: args
                .n
                .ok_or_else(|| usage("family iterated_log needs --n"))?,
            a: need(args.a, "a", &name)?,
        },
        FamilyName::LogPower => Family::LogPower {
            a: need(args.a, "a", &name)?,
            b: need(args.b, "b", &name)?,
        },
        FamilyName::Custom => {
            let amps = args
                .amps
                .as_deref()
                .ok_or_else(|| usage("family custom needs --amps"))?;
            let freqs = args
                .freqs
                .as_deref()
                .ok_or_else(|| usage("family custom needs --freqs"))?;
            let amps: Vec<Complex64> = amps
                .split(',')
                .map(parse_complex)
                .collect::<CliResult<_>>()?;
            let freqs: Vec<f64> = freqs
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| usage(format!("`{f}` is not a frequency")))
                })
                .collect::<CliResult<_>>()?;
            Family::Custom(lacunary::CustomRule::finite(&amps, &freqs)?)
        }
    };
    let mut spec = SeriesSpec::new(fam, args.allow_out_of_range)?;
    if let Some(v) = args.variant {
        spec = spec.with_variant(v.into());
    }
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub params: Vec<String>,
    pub requires: String,
    pub formula: String,
    /// First summed index; `None` when it depends on a parameter.
    pub start_index: Option<u64>,
    pub notes: String,
}

fn entry(
    name: &str,
    params: &[&str],
    requires: &str,
    formula: &str,
    start: Option<u64>,
    notes: &str,
) -> CatalogEntry {
    CatalogEntry {
        name: name.into(),
        params: params.iter().map(|p| p.to_string()).collect(),
        requires: requires.into(),
        formula: formula.into(),
        start_index: start,
        notes: notes.into(),
    }
}

pub fn catalog() -> Vec<CatalogEntry> {
    let starts: Vec<String> = (2..=4)
        .map(|n| format!("n={n} -> {}", iterated_log_start(n)))
        .collect();
    vec![
        entry("f_theta", &["theta"], "0 < theta ≤ 1", "f(t)=Σ_{j≥0} 2^{-jθ} e^{i 2^j t}", Some(0), ""),
        entry("weierstrass_cos", &["a", "b"], "b ≥ a > 1", "W(t)=Σ_{j≥0} a^{-j} cos(b^j t)", Some(0), "real part"),
        entry("weierstrass_sin", &["a", "b"], "b ≥ a > 1", "S(t)=Σ_{j≥0} a^{-j} sin(b^j t)", Some(0), "imaginary part"),
        entry("darboux", &[], "no parameters", "D(t)=Σ_{j≥0} sin((j+1)! t)/j!", Some(0), "imaginary part"),
        entry(
            "gap_example",
            &["a", "p"],
            "a > 1, p > 0, 1 + a^{-p} < a^2",
            "Σ_{j≥0} a^{-j} e^{i b_j t}, b_{2m}=a^{2m}, b_{2m+1}=a^{2m}(1+a^{-p})",
            Some(0),
            "",
        ),
        entry("power", &["p", "q"], "p > 1, q > 0", "Σ_{j≥1} j^{-p} e^{i j^q t}", Some(1), ""),
        entry("riemann", &[], "no parameters", "R(t)=Σ sin(π j² t)/j²", Some(1), "imaginary part"),
        entry(
            "iterated_log",
            &["n", "a"],
            "n ∈ {2,3,4}, a > 1",
            "Σ_{j>E_{n-1}} e^{i t j² Log_1 j⋯Log_{n-1} j (Log_n j)^a} / (j Log_1 j⋯Log_{n-1} j (Log_n j)^a)",
            None,
            &format!("start index floor(E_{{n-1}})+1: {}", starts.join(", ")),
        ),
        entry(
            "log_power",
            &["a", "b"],
            "b ≥ a > 1",
            "Σ_{j≥2} e^{i t j² log^b j} / (j log^a j)",
            Some(2),
            "",
        ),
        entry(
            "custom",
            &["amps", "freqs"],
            "equal-length lists, frequencies strictly increasing and positive",
            "Σ_{j<n} amps[j] e^{i freqs[j] t}",
            Some(0),
            "amplitudes as re or re:im",
        ),
    ]
}

fn list_text() -> String {
    let mut s = String::new();
    for e in catalog() {
        s.push_str(&format!(
            "{}({}), requires {}\n",
            e.name,
            e.params.join(","),
            e.requires
        ));
        s.push_str(&format!("    {}\n", e.formula));
        match e.start_index {
            Some(j) => s.push_str(&format!("    start index {j}")),
            None => s.push_str("    "),
        }
        if !e.notes.is_empty() {
            if e.start_index.is_some() {
                s.push_str("; ");
            }
            s.push_str(&e.notes);
        }
        s.push('\n');
    }
    s
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_rows(rows: &[SampleRow]) -> String {
    let mut s = String::with_capacity(rows.len() * 72 + 8);
    s.push_str("t,re,im\n");
    for r in rows {
        s.push_str(&fmt_f64(r.t));
        s.push(',');
        s.push_str(&fmt_f64(r.re));
        s.push(',');
        s.push_str(&fmt_f64(r.im));
        s.push('\n');
    }
    s
}

fn json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn rows_out(rows: &[SampleRow], format: SampleFormat) -> CliResult<String> {
    match format {
        SampleFormat::Csv => Ok(csv_rows(rows)),
        SampleFormat::Json => json(&rows),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(data)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn emit(data: &str, out: &OutputArgs, stdout: &mut dyn Write) -> CliResult<()> {
    match &out.output {
        Some(p) => write_atomic(p, data.as_bytes())?,
        None => stdout.write_all(data.as_bytes())?,
    }
    Ok(())
}

fn points(n: u64) -> CliResult<usize> {
    usize::try_from(n).map_err(|_| usage("too many points"))
}

fn cmd_sample(a: &SampleArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let spec = build_spec(&a.series)?;
    lacunary::series::check_grid(a.t0, a.t1, points(a.points)?)?;
    let trunc = a
        .trunc
        .resolve(Truncation::Eps(lacunary::series::DEFAULT_EPS));
    let n = spec.resolve(trunc, a.t0.abs().max(a.t1.abs()))?;
    let ps = spec.partial_sum(n)?;
    writeln!(
        stderr,
        "note: {} terms, tail bound {:e}",
        ps.len(),
        ps.tail_bound()
    )?;
    let rows = ps.sample(a.t0, a.t1, points(a.points)?)?;
    emit(&rows_out(&rows, a.format)?, &a.out, stdout)
}

/// `(spec, t0, t1, terms, deviation)` of a figure preset.
pub fn figure_preset(name: FigureName) -> (SeriesSpec, f64, f64, u64, bool) {
    let il = |n| SeriesSpec::iterated_log(n, 2.0).expect("preset parameters are valid");
    match name {
        FigureName::F2 => (il(2), 0.0, 150.0, 1000, false),
        FigureName::F3 => (il(3), 0.0, 150.0, 1000, false),
        FigureName::F4 => (il(4), 0.0, 100.0, 1000, false),
        FigureName::F4dev => (il(4), 0.0, 100.0, 1000, true),
    }
}

fn cmd_figure(a: &FigureArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let (spec, t0, t1, terms, dev) = figure_preset(a.name);
    let pts = points(a.points)?;
    let rows = if dev {
        writeln!(
            stderr,
            "note: partial sum minus its first term, j = {} .. {}",
            spec.start_index() + 1,
            spec.start_index() + terms - 1
        )?;
        probe::deviation_from_first_term(&spec, t0, t1, pts, terms)?
    } else {
        writeln!(
            stderr,
            "note: {terms} terms from j = {}; the t-range [{t0}, {t1}] is a preset choice",
            spec.start_index()
        )?;
        spec.sample(t0, t1, pts, Truncation::Terms(terms))?
    };
    emit(&rows_out(&rows, a.format)?, &a.out, stdout)
}

fn cmd_check(a: &CheckArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let spec = build_spec(&a.series)?;
    let report: ConditionReport = match (a.j0, a.j1) {
        (Some(j0), Some(j1)) => conditions::hypothesis_scan(&spec, j0, j1)?,
        _ => conditions::hypothesis_scan_default(&spec)?,
    };
    if report.verdict_basis == conditions::VerdictBasis::FiniteWindowHeuristic {
        writeln!(
            stderr,
            "note: verdict comes from a finite-window heuristic over j in [{}, {}], not a proof",
            report.window[0], report.window[1]
        )?;
    }
    emit(&json(&report)?, &a.out, stdout)
}

/// Kernel tables are immutable; repeated in-process runs reuse them.
fn cached_kernel(lambda: f64, nodes: usize, radius: f64) -> CliResult<microlocal::BumpKernel> {
    type Cache = Mutex<Vec<((u64, usize, u64), microlocal::BumpKernel)>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let key = (lambda.to_bits(), nodes, radius.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some((_, k)) = cache
        .lock()
        .expect("cache lock")
        .iter()
        .find(|(k, _)| *k == key)
    {
        return Ok(k.clone());
    }
    let kern = microlocal::build_kernel(lambda, nodes, radius)?;
    let mut guard = cache.lock().expect("cache lock");
    if guard.len() >= 8 {
        guard.remove(0);
    }
    guard.push((key, kern.clone()));
    Ok(kern)
}

fn cmd_extract(a: &ExtractArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let spec = build_spec(&a.series)?;
    let ks = &a.k.0;
    let nodes = usize::try_from(a.nodes).map_err(|_| usage("too many nodes"))?;
    let kmin = *ks.iter().min().expect("non-empty");
    let kmax = *ks.iter().max().expect("non-empty");
    let reports = match a.method {
        MethodArg::Chi => {
            let lambda = match a.lambda {
                Some(l) => l,
                None => microlocal::default_lambda(&spec, kmin.saturating_sub(1), kmax + 1)?,
            };
            let kern = cached_kernel(lambda, nodes, a.radius)?;
            microlocal::extraction_sweep(
                &spec,
                Kernel::Bump(&kern),
                ks.iter().copied(),
                a.t0,
                a.eps,
            )?
        }
        MethodArg::Gap => {
            if a.lambda.is_some() {
                return Err(usage("--lambda applies to --method chi only"));
            }
            let gk = microlocal::build_gap_kernel(nodes, a.radius)?;
            microlocal::extraction_sweep(&spec, Kernel::Gap(&gk), ks.iter().copied(), a.t0, a.eps)?
        }
    };
    emit(&json(&reports)?, &a.out, stdout)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannProbeOutput {
    pub r: i64,
    pub s: i64,
    pub h: f64,
    pub terms: u64,
    pub value: f64,
    /// Bound on the dropped tail of the quotient, `1/(h N)`.
    pub tail_bound: f64,
}

fn cmd_probe(p: &ProbeCommand, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match p {
        ProbeCommand::Quotients {
            series,
            t0,
            rule,
            k,
            trunc,
            out,
        } => {
            let spec = build_spec(series)?;
            let rule = match rule {
                RuleArg::Dyadic => ScaleRule::Dyadic,
                RuleArg::InverseBK => ScaleRule::InverseBK,
                RuleArg::InverseDeltaBK => ScaleRule::InverseDeltaBK,
            };
            let ks = match k {
                Some(ks) => ks.0.clone(),
                None => match rule {
                    ScaleRule::Dyadic => (4..=20).collect(),
                    _ => (spec.start_index() + 1..=spec.start_index() + 12).collect(),
                },
            };
            let trunc = trunc.resolve(Truncation::Eps(lacunary::series::DEFAULT_EPS));
            let tr = probe::difference_quotients(&spec, *t0, rule, ks, trunc)?;
            writeln!(
                stderr,
                "note: quotients are evidence along a finite scale sequence, not a limit"
            )?;
            emit(&json(&tr)?, out, stdout)
        }
        ProbeCommand::Holder {
            series,
            h_min,
            h_max,
            levels,
            grid,
            trunc,
            out,
        } => {
            let spec = build_spec(series)?;
            let trunc = trunc.resolve(Truncation::PhaseLimited {
                max_terms: probe::DEFAULT_MAX_TERMS,
            });
            let levels = usize::try_from(*levels).map_err(|_| usage("too many levels"))?;
            let fit = probe::holder_estimate(&spec, *h_min, *h_max, levels, grid.grid(), trunc)?;
            writeln!(
                stderr,
                "note: oscillation is a sup over {} grid points and only bounds the modulus of continuity from below",
                fit.grid_points
            )?;
            emit(&json(&fit)?, out, stdout)
        }
        ProbeCommand::Oscillation {
            series,
            h,
            grid,
            trunc,
            out,
        } => {
            let spec = build_spec(series)?;
            let trunc = trunc.resolve(Truncation::PhaseLimited {
                max_terms: probe::DEFAULT_MAX_TERMS,
            });
            let osc = probe::oscillation(&spec, *h, grid.grid(), trunc)?;
            writeln!(
                stderr,
                "note: grid spacing {:e}; a finer grid can only increase the value",
                osc.grid_spacing
            )?;
            emit(&json(&osc)?, out, stdout)
        }
        ProbeCommand::RiemannDerivative {
            r,
            s,
            h,
            terms,
            out,
        } => {
            let value = probe::riemann_derivative_probe(*r, *s, *h, *terms)?;
            let res = RiemannProbeOutput {
                r: *r,
                s: *s,
                h: *h,
                terms: *terms,
                value,
                tail_bound: 1.0 / (h * *terms as f64),
            };
            emit(&json(&res)?, out, stdout)
        }
    }
}

/// Caps the global pool at `NDF_THREADS` when set.
fn configure_threads(stderr: &mut dyn Write) -> CliResult<()> {
    let Ok(v) = std::env::var("NDF_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        usage(format!(
            "NDF_THREADS must be a positive integer (got `{v}`)"
        ))
    })?;
    #[cfg(feature = "parallel")]
    {
        // a pool configured earlier in this process stays in place
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        writeln!(
            stderr,
            "note: built without the parallel feature; NDF_THREADS ignored"
        )?;
    }
    let _ = stderr;
    Ok(())
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    configure_threads(stderr)?;
    match &cli.command {
        Command::List { format } => {
            let s = match format {
                ListFormat::Text => list_text(),
                ListFormat::Json => json(&catalog())?,
            };
            stdout.write_all(s.as_bytes())?;
            Ok(())
        }
        Command::Sample(a) => cmd_sample(a, stdout, stderr),
        Command::Figure(a) => cmd_figure(a, stdout, stderr),
        Command::Check(a) => cmd_check(a, stdout, stderr),
        Command::Extract(a) => cmd_extract(a, stdout),
        Command::Probe { probe } => cmd_probe(probe, stdout, stderr),
    }
}

/// Parses `args` (including the program name), runs, returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
