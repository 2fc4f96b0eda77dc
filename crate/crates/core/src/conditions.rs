//! Hypothesis checks for nowhere-differentiability, Hölder upper bounds and
//! a differentiability verdict.
//!
//! Limits (`liminf`, `a_j b_j ↛ 0`) are not computable from finitely many
//! terms. Built-in families get their verdict from closed-form rules; custom
//! series get a finite-window heuristic, and the report says which one was
//! used.

use crate::dd::DoubleDouble as DD;
use crate::error::{Error, Result};
use crate::series::{Family, SeriesSpec};
use serde::{Deserialize, Deserializer, Serialize};

pub const DEFAULT_WINDOW: u64 = 512;
/// "Does not tend to 0": the last-quarter max is at least this fraction of
/// the window sup.
pub const NONDECAY_FRACTION: f64 = 0.5;
/// Growth factor (last quarter over first quarter) read as unbounded.
pub const GROWTH_FACTOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    #[serde(rename = "C1")]
    C1,
    NowhereDifferentiable,
    NowhereDifferentiableNonLipschitz,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictBasis {
    SymbolicFamilyRule,
    FiniteWindowHeuristic,
}

/// Products that overflowed serialize as `null`; read them back as `+∞`.
fn null_as_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub window: [u64; 2],
    pub ratio_min: f64,
    /// `min (b_{j+1} − b_j)/b_j`; equals `ratio_min − 1` algebraically.
    pub rel_gap_min: f64,
    pub ratio_trend: f64,
    #[serde(deserialize_with = "null_as_inf")]
    pub ab_sup: f64,
    #[serde(deserialize_with = "null_as_inf")]
    pub ab_tailmax: f64,
    #[serde(deserialize_with = "null_as_inf")]
    pub gap_sup: f64,
    #[serde(deserialize_with = "null_as_inf")]
    pub gap_tailmax: f64,
    pub convexity_ok: bool,
    /// Bound on `Σ |a_j| b_j`; `None` when the sum diverges or no bound is
    /// known.
    pub c1_bound: Option<f64>,
    /// `None` means no finite exponent bound (any α passes the test).
    pub holder_alpha_freq: Option<f64>,
    pub holder_alpha_gap: Option<f64>,
    pub verdict: Verdict,
    pub verdict_basis: VerdictBasis,
}

/// Per-index data in log space.
struct WindowData {
    j0: u64,
    log_amp: Vec<f64>,
    log_b: Vec<f64>,
    /// `log Δb_j`
    log_gap: Vec<f64>,
    /// `b_{j+1}/b_j` and `(b_{j+1} − b_j)/b_j` for `j0 ≤ j < j1`
    ratio: Vec<f64>,
    rel_gap: Vec<f64>,
}

/// `[start, start + 512]`, clipped to the last term of a finite series.
pub fn default_window(spec: &SeriesSpec) -> (u64, u64) {
    let j0 = spec.start_index();
    let j1 = j0 + DEFAULT_WINDOW;
    (j0, spec.last_index().map_or(j1, |l| j1.min(l)))
}

fn check_window(spec: &SeriesSpec, j0: u64, j1: u64) -> Result<()> {
    if j0 < spec.start_index() {
        return Err(Error::IndexBelowStart {
            j: j0,
            start: spec.start_index(),
        });
    }
    if j1 <= j0 + 16 {
        return Err(Error::WindowTooSmall { j0, j1 });
    }
    if let Some(last) = spec.last_index() {
        if j1 > last {
            return Err(Error::IndexPastEnd { j: j1, last });
        }
    }
    Ok(())
}

fn window_data(spec: &SeriesSpec, j0: u64, j1: u64) -> Result<WindowData> {
    let n = (j1 - j0 + 1) as usize;
    let raws: Vec<_> = (j0..=j1).map(|j| spec.raw(j)).collect();
    let mut log_gap = Vec::with_capacity(n);
    for j in j0..=j1 {
        log_gap.push(spec.log_delta_b(j)?);
    }
    let mut ratio = Vec::with_capacity(n - 1);
    let mut rel_gap = Vec::with_capacity(n - 1);
    for w in raws.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        if lo.b.is_finite() && hi.b.is_finite() {
            ratio.push((hi.b / lo.b).to_f64());
            rel_gap.push(((hi.b - lo.b) / lo.b).to_f64());
        } else {
            let d = hi.log_b - lo.log_b;
            ratio.push(d.exp());
            rel_gap.push(d.exp_m1());
        }
    }
    Ok(WindowData {
        j0,
        log_amp: raws.iter().map(|r| r.log_amp).collect(),
        log_b: raws.iter().map(|r| r.log_b).collect(),
        log_gap,
        ratio,
        rel_gap,
    })
}

fn max_of(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::NEG_INFINITY, f64::max)
}

/// Slope and intercept of the ordinary least-squares line through `(x, y)`.
pub(crate) fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// `(sup, last-quarter max, first-quarter max)` of `exp(logs)`.
fn sup_stats(logs: &[f64]) -> (f64, f64, f64) {
    let q = (logs.len() / 4).max(1);
    let sup = max_of(logs.iter().copied()).exp();
    let tail = max_of(logs[logs.len() - q..].iter().copied()).exp();
    let head = max_of(logs[..q].iter().copied()).exp();
    (sup, tail, head)
}

/// Closed-form bound on `Σ_{j≥start} |a_j| b_j`, or a ratio-test estimate for
/// custom series.
fn c1_bound(spec: &SeriesSpec, data: &WindowData) -> Option<f64> {
    let scale = spec.scale().norm();
    let bound = match spec.family() {
        Family::FTheta { theta } if *theta > 1.0 => Some(1.0 / (1.0 - (1.0 - theta).exp2())),
        Family::WeierstrassCos { a, b } | Family::WeierstrassSin { a, b } if b < a => {
            Some(1.0 / (1.0 - b / a))
        }
        Family::Power { p, q } if *q < p - 1.0 => Some(1.0 + 1.0 / (p - q - 1.0)),
        Family::Custom(_) => return custom_c1_bound(spec, data),
        _ => None,
    };
    bound.map(|b| b * scale)
}

fn custom_c1_bound(spec: &SeriesSpec, data: &WindowData) -> Option<f64> {
    let logs: Vec<f64> = data
        .log_amp
        .iter()
        .zip(&data.log_b)
        .map(|(a, b)| a + b)
        .collect();
    let window_sum: f64 = logs.iter().map(|l| l.exp()).sum();
    if spec.last_index() == Some(data.j0 + logs.len() as u64 - 1) {
        return Some(window_sum);
    }
    // ratio test on the second half of the window
    let half = logs.len() / 2;
    let rho = max_of(logs[half..].windows(2).map(|w| (w[1] - w[0]).exp()));
    if rho < 1.0 {
        let last = logs[logs.len() - 1].exp();
        Some(window_sum + last * rho / (1.0 - rho))
    } else {
        None
    }
}

fn symbolic_verdict(family: &Family) -> Option<Verdict> {
    use Verdict::*;
    Some(match *family {
        Family::FTheta { theta } => {
            if theta < 1.0 {
                NowhereDifferentiableNonLipschitz
            } else if theta == 1.0 {
                NowhereDifferentiable
            } else {
                C1
            }
        }
        Family::WeierstrassCos { a, b } | Family::WeierstrassSin { a, b } => {
            if b > a {
                NowhereDifferentiableNonLipschitz
            } else if b == a {
                NowhereDifferentiable
            } else {
                C1
            }
        }
        Family::Darboux => NowhereDifferentiableNonLipschitz,
        Family::Power { p, q } => {
            if q < p - 1.0 {
                C1
            } else if q > p + 1.0 {
                NowhereDifferentiableNonLipschitz
            } else if q == p + 1.0 {
                NowhereDifferentiable
            } else {
                Inconclusive
            }
        }
        Family::Riemann => Inconclusive,
        Family::IteratedLog { .. } | Family::GapExample { .. } => NowhereDifferentiable,
        Family::LogPower { a, b } => {
            if b > a {
                NowhereDifferentiableNonLipschitz
            } else if b == a {
                NowhereDifferentiable
            } else {
                Inconclusive
            }
        }
        Family::Custom(_) => return None,
    })
}

fn heuristic_verdict(r: &ConditionReport, gap_head: f64) -> Verdict {
    if r.c1_bound.is_some() {
        Verdict::C1
    } else if r.gap_tailmax >= NONDECAY_FRACTION * r.gap_sup {
        if r.gap_tailmax >= GROWTH_FACTOR * gap_head {
            Verdict::NowhereDifferentiableNonLipschitz
        } else {
            Verdict::NowhereDifferentiable
        }
    } else if r.ratio_min > 1.0 && r.ab_tailmax >= NONDECAY_FRACTION * r.ab_sup {
        Verdict::NowhereDifferentiable
    } else {
        Verdict::Inconclusive
    }
}

/// Evidence for the hypotheses on `[j0, j1]` and a verdict.
pub fn hypothesis_scan(spec: &SeriesSpec, j0: u64, j1: u64) -> Result<ConditionReport> {
    check_window(spec, j0, j1)?;
    let data = window_data(spec, j0, j1)?;
    let ab: Vec<f64> = data
        .log_amp
        .iter()
        .zip(&data.log_b)
        .map(|(a, b)| a + b)
        .collect();
    let gp: Vec<f64> = data
        .log_amp
        .iter()
        .zip(&data.log_gap)
        .map(|(a, g)| a + g)
        .collect();
    let (ab_sup, ab_tailmax, _) = sup_stats(&ab);
    let (gap_sup, gap_tailmax, gap_head) = sup_stats(&gp);
    let js: Vec<f64> = (0..data.ratio.len())
        .map(|i| (j0 + i as u64) as f64)
        .collect();
    let log_ratio: Vec<f64> = data.ratio.iter().map(|r| r.ln()).collect();
    let ratio_trend = ols(&js, &log_ratio).map_or(0.0, |(s, _)| s);
    let convexity_ok = matches!(convexity_check(spec, j0, j1), Ok(c) if c.convex);
    let (holder_alpha_freq, holder_alpha_gap) = match holder_upper_bounds(spec, j0, j1) {
        Ok(v) => v,
        Err(Error::DegenerateRegression(_)) => (None, None),
        Err(e) => return Err(e),
    };
    let mut report = ConditionReport {
        window: [j0, j1],
        ratio_min: data.ratio.iter().copied().fold(f64::INFINITY, f64::min),
        rel_gap_min: data.rel_gap.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_trend,
        ab_sup,
        ab_tailmax,
        gap_sup,
        gap_tailmax,
        convexity_ok,
        c1_bound: c1_bound(spec, &data),
        holder_alpha_freq,
        holder_alpha_gap,
        verdict: Verdict::Inconclusive,
        verdict_basis: VerdictBasis::FiniteWindowHeuristic,
    };
    match symbolic_verdict(spec.family()) {
        Some(v) => {
            report.verdict = v;
            report.verdict_basis = VerdictBasis::SymbolicFamilyRule;
        }
        None => report.verdict = heuristic_verdict(&report, gap_head),
    }
    Ok(report)
}

/// [`hypothesis_scan`] on [`default_window`].
pub fn hypothesis_scan_default(spec: &SeriesSpec) -> Result<ConditionReport> {
    let (j0, j1) = default_window(spec);
    hypothesis_scan(spec, j0, j1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityResult {
    pub convex: bool,
    /// First index where the second difference or the amplitude monotonicity
    /// fails.
    pub witness: Option<u64>,
    /// `min |a_j| Δb_j` over the window interior; at least 1 when convex.
    pub gap_product_min: f64,
}

/// Second-difference test for `φ(j) = j/|a_j|` on `[j0, j1]`, applicable
/// when `b_j = φ(j)`.
pub fn convexity_check(spec: &SeriesSpec, j0: u64, j1: u64) -> Result<ConvexityResult> {
    check_window(spec, j0, j1)?;
    let raws: Vec<_> = (j0..=j1).map(|j| spec.raw(j)).collect();
    for (i, r) in raws.iter().enumerate() {
        let j = j0 + i as u64;
        let phi_log = (j as f64).ln() - r.log_amp;
        let rel = (phi_log - r.log_b).exp_m1().abs();
        if j == 0 || !r.b.is_finite() || !(rel <= 1e-12) {
            return Err(Error::NotApplicable(format!(
                "b_j != j/|a_j| at j={j} (relative mismatch {rel:e})"
            )));
        }
    }
    let mut witness = None;
    for i in 1..raws.len() - 1 {
        let d2: DD = raws[i + 1].b - raws[i].b.mul_f64(2.0) + raws[i - 1].b;
        let monotone =
            raws[i + 1].log_amp <= raws[i].log_amp + 1e-15 * raws[i].log_amp.abs().max(1.0);
        if d2.to_f64() < -1e-12 * raws[i].b.to_f64() || !monotone {
            witness = Some(j0 + i as u64);
            break;
        }
    }
    let mut gap_product_min = f64::INFINITY;
    for (i, r) in raws.iter().enumerate().take(raws.len() - 1).skip(1) {
        let j = j0 + i as u64;
        gap_product_min = gap_product_min.min((r.log_amp + spec.log_delta_b(j)?).exp());
    }
    let convex = witness.is_none();
    if convex && gap_product_min < 1.0 - 1e-9 {
        return Err(Error::DomainError {
            j: j0,
            what: format!("convex phi but min |a_j| Δb_j = {gap_product_min} < 1"),
        });
    }
    Ok(ConvexityResult {
        convex,
        witness,
        gap_product_min,
    })
}

/// Exponent bounds `(α_freq, α_gap)` from `sup |a_k| b_k^α < ∞` and
/// `sup |a_j| Δb_j^α < ∞`. Closed forms for built-in families; least squares
/// of `log(1/|a_j|)` against `log b_j` (resp. `log Δb_j`) otherwise.
pub fn holder_upper_bounds(
    spec: &SeriesSpec,
    j0: u64,
    j1: u64,
) -> Result<(Option<f64>, Option<f64>)> {
    check_window(spec, j0, j1)?;
    let both = |x: f64| Ok((Some(x), Some(x)));
    match *spec.family() {
        Family::FTheta { theta } => both(theta),
        Family::WeierstrassCos { a, b } | Family::WeierstrassSin { a, b } => both(a.ln() / b.ln()),
        Family::GapExample { .. } | Family::Darboux => both(1.0),
        Family::Power { p, q } => Ok((Some(p / q), (q > 1.0).then(|| p / (q - 1.0)))),
        Family::Riemann => Ok((Some(1.0), Some(2.0))),
        Family::IteratedLog { .. } | Family::LogPower { .. } => Ok((Some(0.5), Some(1.0))),
        // a trigonometric polynomial satisfies both sup conditions for every α
        Family::Custom(_) if spec.last_index().is_some() => Ok((None, None)),
        Family::Custom(_) => {
            let data = window_data(spec, j0, j1)?;
            let y: Vec<f64> = data.log_amp.iter().map(|l| -l).collect();
            let fit = |x: &[f64], what: &str| -> Result<f64> {
                let span =
                    max_of(x.iter().copied()) - x.iter().copied().fold(f64::INFINITY, f64::min);
                if !(span >= 2.0 * std::f64::consts::LN_10) {
                    return Err(Error::DegenerateRegression(format!(
                        "{what} span {:.2} decades, need 2",
                        span / std::f64::consts::LN_10
                    )));
                }
                ols(x, &y).map(|(s, _)| s).ok_or_else(|| {
                    Error::DegenerateRegression(format!("{what} values are constant"))
                })
            };
            Ok((
                Some(fit(&data.log_b, "frequency")?),
                Some(fit(&data.log_gap, "gap")?),
            ))
        }
    }
}

/// Global Hölder order `α = (p−1)/q` of `Σ e^{itj^q}/j^p`, with the optimal
/// split exponent `θ = 1/q` (split at `N ≈ |h|^{−θ}`).
pub fn global_holder_power(p: f64, q: f64) -> Result<(f64, f64)> {
    if !(p > 1.0 && q.is_finite() && q > p - 1.0) {
        return Err(Error::OutOfRange(format!(
            "need p > 1 and q > p - 1, got p={p}, q={q}"
        )));
    }
    Ok(((p - 1.0) / q, 1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::CustomRule;

    fn scan(spec: &SeriesSpec) -> ConditionReport {
        hypothesis_scan_default(spec).unwrap()
    }

    #[test]
    fn classification_table() {
        use Verdict::*;
        let cases = [
            (
                SeriesSpec::weierstrass_cos(2.0, 3.0).unwrap(),
                NowhereDifferentiableNonLipschitz,
            ),
            (
                SeriesSpec::weierstrass_cos(2.0, 2.0).unwrap(),
                NowhereDifferentiable,
            ),
            (SeriesSpec::power(3.0, 1.0).unwrap(), C1),
            (SeriesSpec::power(2.0, 3.0).unwrap(), NowhereDifferentiable),
            (
                SeriesSpec::power(2.0, 3.5).unwrap(),
                NowhereDifferentiableNonLipschitz,
            ),
            (SeriesSpec::riemann(), Inconclusive),
            (SeriesSpec::darboux(), NowhereDifferentiableNonLipschitz),
            (
                SeriesSpec::gap_example(5.0, 1.0).unwrap(),
                NowhereDifferentiable,
            ),
            (
                SeriesSpec::iterated_log(3, 2.0).unwrap(),
                NowhereDifferentiable,
            ),
        ];
        for (spec, v) in cases {
            let r = scan(&spec);
            assert_eq!(r.verdict, v, "{}", spec.family().name());
            assert_eq!(r.verdict_basis, VerdictBasis::SymbolicFamilyRule);
            assert_eq!(r.verdict == C1, r.c1_bound.is_some());
        }
    }

    #[test]
    fn weierstrass_products_grow() {
        let r = scan(&SeriesSpec::weierstrass_cos(2.0, 3.0).unwrap());
        assert!((r.ab_sup.ln() - 512.0 * 1.5f64.ln()).abs() < 1e-9);
        assert!((r.ratio_min - 3.0).abs() < 1e-15);
    }

    #[test]
    fn power_gap_products_approach_q() {
        let r = scan(&SeriesSpec::power(2.0, 3.0).unwrap());
        // |a_j| Δb_j = (3j² − 3j + 1)/j² → 3
        assert!(r.gap_tailmax < 3.0 && r.gap_tailmax > 2.98);
    }

    #[test]
    fn gap_example_products() {
        let r = scan(&SeriesSpec::gap_example(5.0, 1.0).unwrap());
        assert!((r.ratio_min - 1.2).abs() < 1e-12);
        assert!(r.gap_sup >= r.gap_tailmax && r.gap_tailmax > 0.1);
    }

    #[test]
    fn convexity_examples() {
        let s = SeriesSpec::iterated_log(3, 2.0).unwrap();
        let c = convexity_check(&s, 16, 528).unwrap();
        assert!(c.convex && c.gap_product_min >= 1.0);
        let f2 = SeriesSpec::iterated_log(2, 2.0).unwrap();
        assert!(convexity_check(&f2, 3, 515).unwrap().convex);
        let rule = CustomRule::new(1, |j| (-2.0 * (j as f64).ln(), 0.0), |j| (j as f64).powi(3))
            .with_tail(|n| 1.0 / n as f64);
        let cu = SeriesSpec::custom(rule).unwrap();
        let c = convexity_check(&cu, 1, 200).unwrap();
        assert!(c.convex && c.gap_product_min >= 1.0);
        assert!(matches!(
            convexity_check(&SeriesSpec::power(2.0, 4.0).unwrap(), 1, 100),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn holder_closed_forms() {
        let w = SeriesSpec::weierstrass_cos(2.0, 4.0).unwrap();
        assert_eq!(
            holder_upper_bounds(&w, 0, 100).unwrap(),
            (Some(0.5), Some(0.5))
        );
        let p = SeriesSpec::power(2.0, 4.0).unwrap();
        let (_, g) = holder_upper_bounds(&p, 1, 100).unwrap();
        assert!((g.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(global_holder_power(2.0, 2.0).unwrap().0, 0.5);
        assert_eq!(global_holder_power(2.0, 4.0).unwrap(), (0.25, 0.25));
        assert!(matches!(
            global_holder_power(1.5, 0.5),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn custom_regression() {
        // |a_j| = j^{-2}, b_j = j^4: α_freq = 1/2, α_gap → 2/3
        let rule = CustomRule::new(1, |j| (-2.0 * (j as f64).ln(), 0.0), |j| (j as f64).powi(4))
            .with_tail(|n| 1.0 / n as f64);
        let spec = SeriesSpec::custom(rule).unwrap();
        let (f, g) = holder_upper_bounds(&spec, 1, 1000).unwrap();
        assert!((f.unwrap() - 0.5).abs() < 1e-12);
        assert!((g.unwrap() - 2.0 / 3.0).abs() < 0.02);
        let short = holder_upper_bounds(&spec, 100, 140);
        assert!(matches!(short, Err(Error::DegenerateRegression(_))));
    }

    #[test]
    fn custom_heuristics() {
        let geometric = CustomRule::new(
            0,
            |j| (-(j as f64) * 3f64.ln(), 0.0),
            |j| 2f64.powi(j as i32),
        )
        .with_tail(|n| 3f64.powi(-(n as i32)));
        let r = scan(&SeriesSpec::custom(geometric).unwrap());
        assert_eq!(r.verdict, Verdict::C1);
        assert_eq!(r.verdict_basis, VerdictBasis::FiniteWindowHeuristic);
        let w = CustomRule::new(
            0,
            |j| (-(j as f64) * 2f64.ln(), 0.0),
            |j| 3f64.powi(j as i32),
        )
        .with_tail(|n| 2f64.powi(-(n as i32)));
        let r = hypothesis_scan(&SeriesSpec::custom(w).unwrap(), 0, 400).unwrap();
        assert_eq!(r.verdict, Verdict::NowhereDifferentiableNonLipschitz);
    }

    #[test]
    fn window_errors() {
        let s = SeriesSpec::riemann();
        assert!(matches!(
            hypothesis_scan(&s, 1, 17),
            Err(Error::WindowTooSmall { .. })
        ));
        assert!(hypothesis_scan(&s, 1, 18).is_ok());
    }

    #[test]
    fn report_round_trips_with_overflowed_products() {
        let mut r = scan(&SeriesSpec::darboux());
        r.ab_sup = f64::INFINITY;
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"ab_sup\":null"));
        let back: ConditionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn finite_series_has_no_holder_bound() {
        let amps = vec![num_complex::Complex64::new(1.0, 0.0); 20];
        let freqs: Vec<f64> = (0..20).map(|j| 2f64.powi(j)).collect();
        let spec = SeriesSpec::custom_finite(&amps, &freqs).unwrap();
        assert_eq!(holder_upper_bounds(&spec, 0, 19).unwrap(), (None, None));
        assert_eq!(hypothesis_scan(&spec, 0, 19).unwrap().verdict, Verdict::C1);
    }
}
