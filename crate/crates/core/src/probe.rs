//! Numerical differentiability and Hölder probes.
//!
//! These are evidence, not proofs: a difference quotient that keeps growing
//! along `h → 0` or an oscillation fit with slope below 1 is consistent with
//! the hypotheses in [`crate::conditions`], nothing more. The oscillation is
//! a sup over a finite grid and so only bounds the modulus of continuity
//! from below.

use crate::dd::DoubleDouble as DD;
use crate::error::{Error, Result};
use crate::par;
use crate::series::{grid_node, SampleRow, SeriesSpec, Truncation};
use crate::sum::CompensatedSum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

pub const DEFAULT_H_MIN: f64 = 1.0 / 1048576.0; // 2^-20
pub const DEFAULT_H_MAX: f64 = 1.0 / 16.0; // 2^-4
pub const DEFAULT_LEVELS: usize = 9;
pub const DEFAULT_GRID_POINTS: usize = 2048;
pub const DEFAULT_MAX_TERMS: u64 = 1 << 17;
pub const ALPHA_BAND: (f64, f64) = (-0.5, 1.5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRule {
    /// `h_k = 1/b_k`, band value `|a_k| b_k`.
    InverseBK,
    /// `h_k = 1/Δb_k`, band value `|a_k| Δb_k`.
    InverseDeltaBK,
    /// `h_m = 2^{-m}`, no band value.
    Dyadic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientTrace {
    pub t0: f64,
    /// The `k` (or `m` for dyadic scales) behind each entry.
    pub indices: Vec<u64>,
    pub scales: Vec<f64>,
    pub quotients: Vec<Complex64>,
    pub band_values: Option<Vec<f64>>,
}

/// Half-open grid `t0 + i (t1 − t0)/n`, `i = 0..n`. Doubling `n` keeps every
/// old node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TGrid {
    pub t0: f64,
    pub t1: f64,
    pub n: usize,
}

impl Default for TGrid {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t1: TAU,
            n: DEFAULT_GRID_POINTS,
        }
    }
}

impl TGrid {
    fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t0 < self.t1 && self.n >= 1) {
            return Err(Error::InvalidParameter(
                "grid needs finite t0 < t1 and n >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<f64> {
        let step = (self.t1 - self.t0) / self.n as f64;
        (0..self.n).map(|i| self.t0 + i as f64 * step).collect()
    }

    fn t_abs(&self) -> f64 {
        self.t0.abs().max(self.t1.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub h: f64,
    /// `max_i |f(t_i + h) − f(t_i)|`
    pub value: f64,
    pub grid_points: usize,
    pub grid_spacing: f64,
    pub terms_used: u64,
    pub tail_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub alpha_hat: f64,
    pub intercept: f64,
    pub residual: f64,
    pub h_range: [f64; 2],
    pub grid_points: usize,
    pub terms_used: u64,
    pub levels: Vec<Oscillation>,
}

fn last_index_for(spec: &SeriesSpec, trunc: Truncation, t_abs: f64, h: f64) -> Result<u64> {
    match trunc {
        // quotient error ≤ 2·tail/h
        Truncation::Eps(eps) => spec.truncation_index(eps * h / 2.0),
        other => spec.resolve(other, t_abs + h),
    }
}

/// One-sided quotients `(f(t0+h) − f(t0))/h` along the scale rule. With
/// `Truncation::Eps(eps)` each quotient is accurate to `eps`.
pub fn difference_quotients(
    spec: &SeriesSpec,
    t0: f64,
    rule: ScaleRule,
    ks: impl IntoIterator<Item = u64>,
    trunc: Truncation,
) -> Result<QuotientTrace> {
    let indices: Vec<u64> = ks.into_iter().collect();
    let mut scales = Vec::with_capacity(indices.len());
    let mut bands = Vec::with_capacity(indices.len());
    for &k in &indices {
        let (h, band) = match rule {
            ScaleRule::Dyadic => ((-(k as f64)).exp2(), None),
            ScaleRule::InverseBK => {
                let s = spec.term(k)?;
                (1.0 / s.b, Some((s.log_amp + s.b.ln()).exp()))
            }
            ScaleRule::InverseDeltaBK => {
                let s = spec.term(k)?;
                (1.0 / s.delta_b, Some((s.log_amp + s.delta_b.ln()).exp()))
            }
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale for k={k} is not representable"
            )));
        }
        scales.push(h);
        bands.push(band);
    }
    if scales.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter(
            "scales must be strictly decreasing".into(),
        ));
    }
    let quotients = par::map_indices(scales.len(), |i| -> Result<Complex64> {
        let h = scales[i];
        let n = last_index_for(spec, trunc, t0.abs(), h)?;
        let ps = spec.partial_sum(n)?;
        let f1 = ps.eval(t0 + h, crate::SumOrder::Forward)?;
        let f0 = ps.eval(t0, crate::SumOrder::Forward)?;
        Ok((f1 - f0) / h)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    if quotients.iter().any(|q| !q.is_finite()) {
        return Err(Error::DomainError {
            j: spec.start_index(),
            what: "non-finite difference quotient".into(),
        });
    }
    let band_values = match rule {
        ScaleRule::Dyadic => None,
        _ => Some(bands.into_iter().flatten().collect()),
    };
    Ok(QuotientTrace {
        t0,
        indices,
        scales,
        quotients,
        band_values,
    })
}

fn oscillations(
    spec: &SeriesSpec,
    hs: &[f64],
    grid: TGrid,
    trunc: Truncation,
) -> Result<Vec<Oscillation>> {
    grid.validate()?;
    let h_max = hs.iter().copied().fold(0.0, f64::max);
    let n = last_index_for(spec, trunc, grid.t_abs(), h_max)?;
    let ps = spec.partial_sum(n)?;
    let ts = grid.nodes();
    let base = ps.eval_many(&ts)?;
    let spacing = (grid.t1 - grid.t0) / grid.n as f64;
    hs.iter()
        .map(|&h| {
            let value = if h == 0.0 {
                0.0
            } else {
                let shifted: Vec<f64> = ts.iter().map(|t| t + h).collect();
                let vals = ps.eval_many(&shifted)?;
                vals.iter()
                    .zip(&base)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
            };
            Ok(Oscillation {
                h,
                value,
                grid_points: grid.n,
                grid_spacing: spacing,
                terms_used: ps.len() as u64,
                tail_bound: ps.tail_bound(),
            })
        })
        .collect()
}

/// Empirical `sup_t |f(t+h) − f(t)|` over the grid.
pub fn oscillation(
    spec: &SeriesSpec,
    h: f64,
    grid: TGrid,
    trunc: Truncation,
) -> Result<Oscillation> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter("h must be >= 0".into()));
    }
    Ok(oscillations(spec, &[h], grid, trunc)?[0])
}

/// Least-squares slope of `log ω(h)` against `log h` over `levels`
/// geometrically spaced `h` in `[h_min, h_max]`.
pub fn holder_estimate(
    spec: &SeriesSpec,
    h_min: f64,
    h_max: f64,
    levels: usize,
    grid: TGrid,
    trunc: Truncation,
) -> Result<HolderFit> {
    if !(h_min > 0.0 && h_min < h_max && h_max.is_finite()) {
        return Err(Error::InvalidParameter("need 0 < h_min < h_max".into()));
    }
    if levels < 6 {
        return Err(Error::InvalidParameter("need at least 6 levels".into()));
    }
    let ratio = (h_max / h_min).ln();
    let hs: Vec<f64> = (0..levels)
        .map(|l| {
            if l + 1 == levels {
                h_max
            } else {
                h_min * (ratio * l as f64 / (levels - 1) as f64).exp()
            }
        })
        .collect();
    let osc = oscillations(spec, &hs, grid, trunc)?;
    if osc.iter().any(|o| !(o.value > 0.0 && o.value.is_finite())) {
        return Err(Error::DegenerateFit(
            "oscillation underflows at some level".into(),
        ));
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = osc.iter().map(|o| o.value.ln()).collect();
    let (alpha_hat, intercept) = crate::conditions::ols(&x, &y)
        .ok_or_else(|| Error::DegenerateFit("constant abscissae".into()))?;
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - (alpha_hat * a + intercept)).powi(2))
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();
    if !(alpha_hat >= ALPHA_BAND.0 && alpha_hat <= ALPHA_BAND.1) {
        return Err(Error::DegenerateFit(format!(
            "alpha_hat = {alpha_hat} outside the sanity band"
        )));
    }
    Ok(HolderFit {
        alpha_hat,
        intercept,
        residual,
        h_range: [h_min, h_max],
        grid_points: grid.n,
        terms_used: osc[0].terms_used,
        levels: osc,
    })
}

/// [`holder_estimate`] with the default levels, grid and truncation.
pub fn holder_estimate_default(spec: &SeriesSpec) -> Result<HolderFit> {
    holder_estimate(
        spec,
        DEFAULT_H_MIN,
        DEFAULT_H_MAX,
        DEFAULT_LEVELS,
        TGrid::default(),
        Truncation::PhaseLimited {
            max_terms: DEFAULT_MAX_TERMS,
        },
    )
}

/// Symmetric quotient `(R(t+h) − R(t−h))/(2h)` of
/// `R(t) = Σ_{j≤N} sin(π j² t)/j²` at `t = r/s`, i.e.
/// `Σ cos(π j² r/s)·sin(π j² h)/(j² h)`.
///
/// `cos(π j² r/s)` is reduced exactly in integers; `j² h mod 2` in
/// double-double. The tail beyond `N` is at most `Σ_{j>N} 1/(j² h) ≤
/// 1/(hN)`, which must not exceed 0.01.
pub fn riemann_derivative_probe(r: i64, s: i64, h: f64, n: u64) -> Result<f64> {
    if r % 2 == 0 || s % 2 == 0 || s <= 0 {
        return Err(Error::InvalidParameter(format!(
            "r and s must be odd with s > 0 (got {r}/{s})"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter("h must be positive".into()));
    }
    let bound = 1.0 / (h * n as f64);
    if !(bound <= 0.01) {
        return Err(Error::PreconditionTruncation(format!(
            "tail bound 1/(h N) = {bound:e} exceeds 0.01; increase N"
        )));
    }
    let m = 2 * s as i128;
    let rr = (r as i128).rem_euclid(m);
    let parts = par::map_chunks(n as usize, 1 << 16, |range| {
        let mut acc = CompensatedSum::new();
        for idx in range {
            let j = idx as u64 + 1;
            let jj = j as i128;
            let a = ((jj * jj).rem_euclid(m) * rr).rem_euclid(m);
            let cos_a = (PI * a as f64 / s as f64).cos();
            let j2 = DD::prod(j as f64, j as f64);
            let x = j2.mul_f64(h);
            let x = x - DD::from_f64(2.0 * (x.hi / 2.0).round());
            let (_, sin_b) = (DD::PI * x).cos_sin();
            acc.add(cos_a * sin_b / (j2.hi * h));
        }
        acc
    });
    let mut total = CompensatedSum::new();
    parts.iter().for_each(|p| total.merge(p));
    Ok(total.value())
}

/// Partial sum minus its first term: terms `start+1 ..= start+terms−1`.
pub fn deviation_from_first_term(
    spec: &SeriesSpec,
    t0: f64,
    t1: f64,
    points: usize,
    terms: u64,
) -> Result<Vec<SampleRow>> {
    if terms < 2 {
        return Err(Error::InvalidParameter("need at least 2 terms".into()));
    }
    crate::series::check_grid(t0, t1, points)?;
    let from = spec.start_index() + 1;
    if spec.last_index().is_some_and(|l| from > l) {
        return Ok((0..points)
            .map(|i| SampleRow {
                t: grid_node(t0, t1, points, i),
                re: 0.0,
                im: 0.0,
            })
            .collect());
    }
    spec.partial_sum_from(from, spec.start_index() + terms - 1)?
        .sample(t0, t1, points)
}
