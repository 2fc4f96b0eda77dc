//! Band-limited kernels and single-coefficient extraction.
//!
//! The bump `χ̂` is supported on `]1/λ, λ[` with `χ̂(1) = 1`; convolving `f`
//! with `b_k χ(b_k ·)` keeps exactly the term whose frequency ratio to `b_k`
//! lies in that interval. The gap bump `ψ̂` is supported on `]-1/2, 1/2[`
//! and, shifted to `b_k` and dilated by `Δb_k`, isolates term `k` with no
//! ratio condition at all.

use crate::dd::DoubleDouble as DD;
use crate::error::{Error, Result};
use crate::par;
use crate::series::{SeriesSpec, Variant, PHASE_LIMIT};
use crate::sum::ComplexSum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_NODES: usize = 4096;
pub const DEFAULT_RADIUS: f64 = 1024.0;
pub const MOMENT_TOL: f64 = 1e-10;
pub const DECAY_TOL: f64 = 1e-8;
/// Relative slack when deciding whether a neighbouring ratio sits on the
/// support edge of `χ̂`.
const EDGE_SLACK: f64 = 1e-12;
/// Safety cap on the number of spectral components one quadrature may touch.
const MAX_COMPONENTS: usize = 1 << 20;

/// `χ̂_λ(τ) = exp(λ/(λ−1)² − 1/((λ−τ)(τ−1/λ)))` on `]1/λ, λ[`, else 0.
pub fn chi_hat(lambda: f64, tau: f64) -> Result<f64> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::BadLambda(lambda));
    }
    Ok(chi_hat_unchecked(lambda, tau))
}

fn chi_hat_unchecked(lambda: f64, tau: f64) -> f64 {
    let lo = 1.0 / lambda;
    if !(tau > lo && tau < lambda) {
        return 0.0;
    }
    // (λ−τ)(τ−1/λ) = (λ−τ)(λτ−1)/λ; this form makes χ̂(1) = 1 exactly
    let c = lambda / ((lambda - 1.0) * (lambda - 1.0));
    (c - lambda / ((lambda - tau) * (lambda * tau - 1.0))).exp()
}

/// `ψ̂(σ) = exp(4 − 1/(1/4 − σ²))` for `|σ| < 1/2`, else 0.
pub fn psi_hat(sigma: f64) -> f64 {
    let d = 0.25 - sigma * sigma;
    if !(d > 0.0) {
        return 0.0;
    }
    (4.0 - 1.0 / d).exp()
}

/// Real-space kernel tabulated on `z_i = −Z + i·2Z/M`, `i = 0..=M`.
#[derive(Clone, Debug)]
struct Table {
    values: Vec<Complex64>,
    nodes: usize,
    radius: f64,
}

impl Table {
    /// `(1/2π) ∫ e^{izτ} g(τ) dτ` over `[lo, hi]` by trapezoid with `nodes`
    /// intervals; `g` vanishes to all orders at both ends.
    fn tabulate(
        nodes: usize,
        radius: f64,
        lo: f64,
        hi: f64,
        g: impl Fn(f64) -> f64 + Sync,
    ) -> Self {
        let dtau = (hi - lo) / nodes as f64;
        let weights: Vec<(f64, f64)> = (1..nodes)
            .map(|i| {
                let tau = lo + i as f64 * dtau;
                (tau, g(tau) * dtau / (2.0 * PI))
            })
            .filter(|&(_, w)| w != 0.0)
            .collect();
        let half = nodes / 2;
        let h = 2.0 * radius / nodes as f64;
        // χ(−z) = conj χ(z) for real g: compute z ≥ 0 only
        let right = par::map_indices(half + 1, |m| {
            let z = m as f64 * h;
            let mut acc = ComplexSum::default();
            for &(tau, w) in &weights {
                let (s, c) = (z * tau).sin_cos();
                acc.add(Complex64::new(w * c, w * s));
            }
            acc.value()
        });
        let mut values = vec![Complex64::new(0.0, 0.0); nodes + 1];
        for (m, v) in right.iter().enumerate() {
            values[half + m] = *v;
            values[half - m] = v.conj();
        }
        Self {
            values,
            nodes,
            radius,
        }
    }

    fn spacing(&self) -> f64 {
        2.0 * self.radius / self.nodes as f64
    }

    fn node(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.spacing()
    }

    fn weight(&self, i: usize, stride: usize) -> f64 {
        let w = self.spacing() * stride as f64;
        if i == 0 || i == self.nodes {
            w / 2.0
        } else {
            w
        }
    }

    fn value_at(&self, z: f64) -> Complex64 {
        if !(z.abs() <= self.radius) {
            return Complex64::new(0.0, 0.0);
        }
        let x = (z + self.radius) / self.spacing();
        let i = (x.floor() as usize).min(self.nodes - 1);
        let frac = x - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Trapezoid moments `(∫χ, ∫zχ)`.
    fn moments(&self) -> (f64, f64) {
        let mut m0 = ComplexSum::default();
        let mut m1 = ComplexSum::default();
        for (i, v) in self.values.iter().enumerate() {
            let w = self.weight(i, 1);
            m0.add(v * w);
            m1.add(v * (w * self.node(i)));
        }
        (m0.value().norm(), m1.value().norm())
    }

    /// `max |χ(z)|, |z| ≥ Z/2` over `max |χ|`.
    fn decay_ratio(&self) -> f64 {
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let tail = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.node(*i).abs() >= self.radius / 2.0)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        tail / peak
    }

    /// Trapezoid values of `∫ χ(z) e^{i(φ − ωz)} dz` on the full grid and on
    /// its every-other-node subgrid.
    fn integrate(&self, phase0: DD, omega: DD) -> (Complex64, Complex64) {
        let mut fine = ComplexSum::default();
        let mut coarse = ComplexSum::default();
        for (i, v) in self.values.iter().enumerate() {
            let (c, s) = (phase0 - omega.mul_f64(self.node(i))).cos_sin();
            let term = v * Complex64::new(c, s);
            fine.add(term * self.weight(i, 1));
            if i % 2 == 0 {
                coarse.add(term * self.weight(i, 2));
            }
        }
        (fine.value(), coarse.value())
    }

    /// Largest |ω| for which neither grid aliases a frequency back into a
    /// support of half-width `reach` around the origin band.
    fn band(&self, reach: f64) -> f64 {
        PI / self.spacing() - reach
    }
}

fn check_grid_params(nodes: usize, radius: f64) -> Result<()> {
    if nodes < 64 || !nodes.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "node count must be a power of two >= 64, got {nodes}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(
            "truncation radius must be positive".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BumpKernel {
    lambda: f64,
    normalization: f64,
    table: Table,
    moments: (f64, f64),
    decay: f64,
}

impl BumpKernel {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    /// The constant `c_λ = λ/(λ−1)²` making `χ̂(1) = 1`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }
    pub fn table(&self) -> &[Complex64] {
        &self.table.values
    }
    pub fn quadrature_nodes(&self) -> usize {
        self.table.nodes
    }
    pub fn truncation_radius(&self) -> f64 {
        self.table.radius
    }
    pub fn node(&self, i: usize) -> f64 {
        self.table.node(i)
    }
    /// `(|∫χ|, |∫zχ|)` as measured at construction.
    pub fn moments(&self) -> (f64, f64) {
        self.moments
    }
    pub fn decay_ratio(&self) -> f64 {
        self.decay
    }
    /// `χ(z)` by linear interpolation between nodes, 0 outside `[−Z, Z]`.
    pub fn value_at(&self, z: f64) -> Complex64 {
        self.table.value_at(z)
    }
    pub fn hat(&self, tau: f64) -> f64 {
        chi_hat_unchecked(self.lambda, tau)
    }
}

/// Tabulates `χ = F⁻¹χ̂_λ` and validates its moments and decay.
pub fn build_kernel(lambda: f64, nodes: usize, radius: f64) -> Result<BumpKernel> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::BadLambda(lambda));
    }
    check_grid_params(nodes, radius)?;
    let table = Table::tabulate(nodes, radius, 1.0 / lambda, lambda, |t| {
        chi_hat_unchecked(lambda, t)
    });
    let (m0, m1) = table.moments();
    if !(m0 <= MOMENT_TOL && m1 <= MOMENT_TOL) {
        return Err(Error::MomentCheckFailed { m0, m1 });
    }
    let decay = table.decay_ratio();
    if !(decay <= DECAY_TOL) {
        return Err(Error::DecayCheckFailed { ratio: decay });
    }
    Ok(BumpKernel {
        lambda,
        normalization: lambda / ((lambda - 1.0) * (lambda - 1.0)),
        table,
        moments: (m0, m1),
        decay,
    })
}

pub fn default_kernel(lambda: f64) -> Result<BumpKernel> {
    build_kernel(lambda, DEFAULT_NODES, DEFAULT_RADIUS)
}

#[derive(Clone, Debug)]
pub struct GapKernel {
    table: Table,
    decay: f64,
}

impl GapKernel {
    pub fn table(&self) -> &[Complex64] {
        &self.table.values
    }
    pub fn quadrature_nodes(&self) -> usize {
        self.table.nodes
    }
    pub fn truncation_radius(&self) -> f64 {
        self.table.radius
    }
    pub fn decay_ratio(&self) -> f64 {
        self.decay
    }
    pub fn value_at(&self, z: f64) -> Complex64 {
        self.table.value_at(z)
    }
    pub fn hat(&self, sigma: f64) -> f64 {
        psi_hat(sigma)
    }
}

/// Tabulates `ψ = F⁻¹ψ̂` and validates its decay.
pub fn build_gap_kernel(nodes: usize, radius: f64) -> Result<GapKernel> {
    check_grid_params(nodes, radius)?;
    let table = Table::tabulate(nodes, radius, -0.5, 0.5, psi_hat);
    let decay = table.decay_ratio();
    if !(decay <= DECAY_TOL) {
        return Err(Error::DecayCheckFailed { ratio: decay });
    }
    Ok(GapKernel { table, decay })
}

pub fn default_gap_kernel() -> Result<GapKernel> {
    build_gap_kernel(DEFAULT_NODES, DEFAULT_RADIUS)
}

/// `min b_{j+1}/b_j` over `[j0, j1]`, clamped to at most 2.
pub fn default_lambda(spec: &SeriesSpec, j0: u64, j1: u64) -> Result<f64> {
    let mut lambda = 2.0f64;
    let j1 = spec.last_index().map_or(j1, |l| j1.min(l));
    for j in j0.max(spec.start_index())..j1 {
        let r = (spec.log_frequency(j + 1)? - spec.log_frequency(j)?).exp();
        lambda = lambda.min(r);
    }
    if !(lambda > 1.0 + 1e-6) {
        return Err(Error::BadLambda(lambda));
    }
    Ok(lambda)
}

/// Factor multiplying `a_k e^{i b_k t0}` in what extraction returns:
/// 1, 1/2 or 1/(2i).
pub fn variant_factor(variant: Variant) -> Complex64 {
    match variant {
        Variant::Complex => Complex64::new(1.0, 0.0),
        Variant::RealPart => Complex64::new(0.5, 0.0),
        Variant::ImagPart => Complex64::new(0.0, -0.5),
    }
}

/// Positive- and negative-frequency parts of one term under the variant:
/// `(coefficient, sign)` pairs.
fn spectral_parts(variant: Variant, a: Complex64) -> Vec<(Complex64, f64)> {
    let i2 = Complex64::new(0.0, 2.0);
    match variant {
        Variant::Complex => vec![(a, 1.0)],
        Variant::RealPart => vec![(a / 2.0, 1.0), (a.conj() / 2.0, -1.0)],
        Variant::ImagPart => vec![(a / i2, 1.0), (-a.conj() / i2, -1.0)],
    }
}

fn phase_at(j: u64, b: DD, t0: f64) -> Result<DD> {
    if !b.is_finite() || !(b.hi * t0.abs() < PHASE_LIMIT) {
        return Err(Error::PhasePrecisionLoss {
            j,
            phase: b.hi * t0.abs(),
        });
    }
    Ok(b.mul_f64(t0))
}

/// `a_k e^{i b_k t0}` times the variant factor.
pub fn expected_coefficient(spec: &SeriesSpec, k: u64, t0: f64) -> Result<Complex64> {
    let b = spec.frequency_dd(k)?;
    let (c, s) = phase_at(k, b, t0)?.cos_sin();
    Ok(variant_factor(spec.variant()) * spec.amplitude(k)? * Complex64::new(c, s))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    Ok(())
}

/// Fails with `LambdaTooWide` if a neighbour of `b_k` has its ratio inside
/// the open support `]1/λ, λ[`.
fn check_lambda(spec: &SeriesSpec, kernel: &BumpKernel, k: u64) -> Result<()> {
    let lambda = kernel.lambda;
    let lk = spec.log_frequency(k)?;
    let mut neighbours = Vec::new();
    if k > spec.start_index() {
        neighbours.push(k - 1);
    }
    if spec.last_index().is_none_or(|l| k < l) {
        neighbours.push(k + 1);
    }
    for j in neighbours {
        let ratio = (spec.log_frequency(j)? - lk).exp();
        let inside = ratio < lambda * (1.0 - EDGE_SLACK) && ratio > (1.0 + EDGE_SLACK) / lambda;
        if inside {
            return Err(Error::LambdaTooWide {
                k,
                j,
                ratio,
                lambda,
            });
        }
    }
    Ok(())
}

/// Indices `j` with `b_j / b_k` inside `]lo, hi[`, found by walking out
/// from `k`.
fn window_by_ratio(spec: &SeriesSpec, k: u64, lo: f64, hi: f64) -> Result<Vec<u64>> {
    let lk = spec.log_frequency(k)?;
    let ratio = |j: u64| -> Result<f64> { Ok((spec.log_frequency(j)? - lk).exp()) };
    let mut js = vec![k];
    let mut j = k;
    while j > spec.start_index() && ratio(j - 1)? > lo {
        j -= 1;
        js.push(j);
    }
    let mut j = k;
    while spec.last_index().is_none_or(|l| j < l) && ratio(j + 1)? < hi {
        j += 1;
        js.push(j);
        if js.len() > MAX_COMPONENTS {
            return Err(Error::CapExceeded {
                eps: 0.0,
                cap: MAX_COMPONENTS as u64,
            });
        }
    }
    js.sort_unstable();
    Ok(js)
}

/// Frequency-side collapse of `b_k χ(b_k ·) * f` at `t0`:
/// `Σ_j a_j e^{i b_j t0} χ̂(b_j/b_k)` over positive frequencies. Terms
/// whose ratio falls outside the support contribute exactly zero, so the
/// sum runs over that finite window and is not truncated; `eps` is the
/// caller's accuracy target and is only validated here.
pub fn extract_analytic(
    spec: &SeriesSpec,
    kernel: &BumpKernel,
    k: u64,
    t0: f64,
    eps: f64,
) -> Result<Complex64> {
    check_eps(eps)?;
    spec.term(k)?;
    check_lambda(spec, kernel, k)?;
    let bk = spec.frequency_dd(k)?;
    let mut acc = ComplexSum::default();
    for j in window_by_ratio(spec, k, 1.0 / kernel.lambda, kernel.lambda)? {
        let b = spec.frequency_dd(j)?;
        let w = kernel.hat((b / bk).to_f64());
        if w == 0.0 {
            continue;
        }
        let (c, s) = phase_at(j, b, t0)?.cos_sin();
        acc.add(spec.amplitude(j)? * Complex64::new(c, s) * w);
    }
    Ok(variant_factor(spec.variant()) * acc.value())
}

/// Result of a real-space quadrature with its grid-doubling error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureValue {
    pub value: Complex64,
    pub error_estimate: f64,
    pub components: usize,
}

/// Integrates each in-band spectral component of `f` against the tabulated
/// kernel. `omega(sign, b_j)` is the component's frequency in the kernel's
/// variable `z`.
fn quadrature_sum(
    spec: &SeriesSpec,
    table: &Table,
    js: &[u64],
    t0: f64,
    band: f64,
    omega: impl Fn(f64, DD) -> DD + Sync,
    eps: f64,
) -> Result<QuadratureValue> {
    let mut parts = Vec::new();
    for &j in js {
        let b = spec.frequency_dd(j)?;
        let phase = phase_at(j, b, t0)?;
        for (coef, sign) in spectral_parts(spec.variant(), spec.amplitude(j)?) {
            let w = omega(sign, b);
            if w.hi.abs() <= band {
                let phase0 = if sign > 0.0 { phase } else { -phase };
                parts.push((coef, phase0, w));
            }
        }
    }
    let values = par::map_indices(parts.len(), |i| {
        let (coef, phase0, w) = parts[i];
        let (fine, coarse) = table.integrate(phase0, w);
        (coef * fine, coef * coarse)
    });
    let mut fine = ComplexSum::default();
    let mut coarse = ComplexSum::default();
    for (f, c) in &values {
        fine.add(*f);
        coarse.add(*c);
    }
    let estimate = (fine.value() - coarse.value()).norm();
    if !(estimate <= eps) {
        return Err(Error::QuadratureBudgetExceeded { estimate, tol: eps });
    }
    Ok(QuadratureValue {
        value: fine.value(),
        error_estimate: estimate,
        components: parts.len(),
    })
}

/// `∫ χ(z) f(t0 − z/b_k) dz` on the kernel's nodes by composite trapezoid.
///
/// Components of `f` are integrated term by term with their phases
/// `b_j t0 − (b_j/b_k) z` formed in double-double. Only components whose
/// dilated frequency lies in the alias-free band of the coarse grid are
/// integrated; those above it integrate to zero against `χ` but cannot be
/// resolved by the grid.
pub fn extract_quadrature(
    spec: &SeriesSpec,
    kernel: &BumpKernel,
    k: u64,
    t0: f64,
    eps: f64,
) -> Result<QuadratureValue> {
    check_eps(eps)?;
    spec.term(k)?;
    check_lambda(spec, kernel, k)?;
    let bk = spec.frequency_dd(k)?;
    let band = kernel.table.band(kernel.lambda);
    let js = window_by_ratio(spec, k, 0.0, band)?;
    quadrature_sum(
        spec,
        &kernel.table,
        &js,
        t0,
        band,
        |s, b| (b / bk).mul_f64(s),
        eps,
    )
}

/// `Σ_j a_j e^{i b_j t0} ψ̂((b_j − b_k)/Δb_k)`; with `Δb_k` the smaller
/// neighbouring gap only `j = k` lies inside the support.
pub fn extract_gap(
    spec: &SeriesSpec,
    gk: &GapKernel,
    k: u64,
    t0: f64,
    eps: f64,
) -> Result<Complex64> {
    let _ = gk;
    check_eps(eps)?;
    let sample = spec.term(k)?;
    let bk = spec.frequency_dd(k)?;
    let delta = sample.delta_b;
    let lo = (bk.to_f64() - delta / 2.0) / bk.to_f64();
    let hi = (bk.to_f64() + delta / 2.0) / bk.to_f64();
    let mut acc = ComplexSum::default();
    for j in window_by_ratio(spec, k, lo, hi)? {
        let b = spec.frequency_dd(j)?;
        let w = psi_hat(((b - bk).to_f64()) / delta);
        if w == 0.0 {
            continue;
        }
        let (c, s) = phase_at(j, b, t0)?.cos_sin();
        acc.add(spec.amplitude(j)? * Complex64::new(c, s) * w);
    }
    Ok(variant_factor(spec.variant()) * acc.value())
}

/// `Δb_k · extract_gap`, the quantity whose non-decay rules out Lipschitz
/// continuity.
pub fn extract_gap_scaled(
    spec: &SeriesSpec,
    gk: &GapKernel,
    k: u64,
    t0: f64,
    eps: f64,
) -> Result<Complex64> {
    let delta = spec.term(k)?.delta_b;
    Ok(extract_gap(spec, gk, k, t0, eps)? * delta)
}

/// `∫ ψ(z) e^{i b_k z/Δb_k} f(t0 − z/Δb_k) dz` on the kernel's nodes.
pub fn extract_gap_quadrature(
    spec: &SeriesSpec,
    gk: &GapKernel,
    k: u64,
    t0: f64,
    eps: f64,
) -> Result<QuadratureValue> {
    check_eps(eps)?;
    let delta = DD::from_f64(spec.term(k)?.delta_b);
    let bk = spec.frequency_dd(k)?;
    let band = gk.table.band(0.5);
    let upper = (bk + delta.mul_f64(band)) / bk;
    let js = window_by_ratio(spec, k, 0.0, upper.to_f64() * (1.0 + 1e-15))?;
    quadrature_sum(
        spec,
        &gk.table,
        &js,
        t0,
        band,
        |s, b| (b.mul_f64(s) - bk) / delta,
        eps,
    )
}

/// Kernel selector for sweeps.
#[derive(Clone, Copy, Debug)]
pub enum Kernel<'a> {
    Bump(&'a BumpKernel),
    Gap(&'a GapKernel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Chi,
    Gap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub method: Method,
    pub nodes: usize,
    pub radius: f64,
    pub lambda: Option<f64>,
    pub delta_b: Option<f64>,
    pub error_estimate: f64,
    pub components: usize,
}

/// One row of an extraction sweep. Residuals are recomputed from the
/// stored values whenever a report is deserialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "ReportWire")]
pub struct ExtractionReport {
    pub k: u64,
    pub t0: f64,
    pub expected: Complex64,
    pub analytic: Complex64,
    pub quadrature: Complex64,
    pub residual_analytic: f64,
    pub residual_quadrature: f64,
    pub tail_eps: f64,
    pub quad_params: QuadParams,
}

#[derive(Deserialize)]
struct ReportWire {
    k: u64,
    t0: f64,
    expected: Complex64,
    analytic: Complex64,
    quadrature: Complex64,
    tail_eps: f64,
    quad_params: QuadParams,
}

impl From<ReportWire> for ExtractionReport {
    fn from(w: ReportWire) -> Self {
        ExtractionReport::new(
            w.k,
            w.t0,
            w.expected,
            w.analytic,
            w.quadrature,
            w.tail_eps,
            w.quad_params,
        )
    }
}

impl ExtractionReport {
    pub fn new(
        k: u64,
        t0: f64,
        expected: Complex64,
        analytic: Complex64,
        quadrature: Complex64,
        tail_eps: f64,
        quad_params: QuadParams,
    ) -> Self {
        Self {
            k,
            t0,
            expected,
            analytic,
            quadrature,
            residual_analytic: (analytic - expected).norm(),
            residual_quadrature: (quadrature - expected).norm(),
            tail_eps,
            quad_params,
        }
    }
}

fn report_for(
    spec: &SeriesSpec,
    kernel: Kernel<'_>,
    k: u64,
    t0: f64,
    eps: f64,
) -> Result<ExtractionReport> {
    let expected = expected_coefficient(spec, k, t0)?;
    let (analytic, quad, params) = match kernel {
        Kernel::Bump(kern) => {
            let a = extract_analytic(spec, kern, k, t0, eps)?;
            let q = extract_quadrature(spec, kern, k, t0, eps)?;
            let p = QuadParams {
                method: Method::Chi,
                nodes: kern.quadrature_nodes(),
                radius: kern.truncation_radius(),
                lambda: Some(kern.lambda()),
                delta_b: None,
                error_estimate: q.error_estimate,
                components: q.components,
            };
            (a, q, p)
        }
        Kernel::Gap(gk) => {
            let a = extract_gap(spec, gk, k, t0, eps)?;
            let q = extract_gap_quadrature(spec, gk, k, t0, eps)?;
            let p = QuadParams {
                method: Method::Gap,
                nodes: gk.quadrature_nodes(),
                radius: gk.truncation_radius(),
                lambda: None,
                delta_b: Some(spec.term(k)?.delta_b),
                error_estimate: q.error_estimate,
                components: q.components,
            };
            (a, q, p)
        }
    };
    Ok(ExtractionReport::new(
        k, t0, expected, analytic, quad.value, eps, params,
    ))
}

/// Runs both extraction paths for every `k` in `ks`, in order.
pub fn extraction_sweep(
    spec: &SeriesSpec,
    kernel: Kernel<'_>,
    ks: impl IntoIterator<Item = u64>,
    t0: f64,
    eps: f64,
) -> Result<Vec<ExtractionReport>> {
    let ks: Vec<u64> = ks.into_iter().collect();
    par::map_indices(ks.len(), |i| report_for(spec, kernel, ks[i], t0, eps))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn kernel2() -> &'static BumpKernel {
        static K: OnceLock<BumpKernel> = OnceLock::new();
        K.get_or_init(|| default_kernel(2.0).unwrap())
    }

    fn gap() -> &'static GapKernel {
        static G: OnceLock<GapKernel> = OnceLock::new();
        G.get_or_init(|| default_gap_kernel().unwrap())
    }

    #[test]
    fn chi_hat_values() {
        assert_eq!(chi_hat(2.0, 1.0).unwrap(), 1.0);
        for tau in [2.0, 0.5, 3.0, -1.0] {
            assert_eq!(chi_hat(2.0, tau).unwrap(), 0.0);
        }
        assert_eq!(chi_hat(2.0, 1.5).unwrap(), 1.0);
        assert!(matches!(chi_hat(1.0, 1.0), Err(Error::BadLambda(_))));
        for lambda in [1.1, 1.5, 3.0, 10.0] {
            assert_eq!(chi_hat(lambda, 1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn psi_hat_values() {
        assert_eq!(psi_hat(0.0), 1.0);
        assert_eq!(psi_hat(0.5), 0.0);
        assert_eq!(psi_hat(-0.5), 0.0);
        assert!((psi_hat(0.25) - (4.0f64 - 16.0 / 3.0).exp()).abs() < 1e-15);
        assert!((psi_hat(0.25) - 0.26360).abs() < 5e-6);
    }

    #[test]
    fn default_kernel_moments_and_decay() {
        let k = kernel2();
        let (m0, m1) = k.moments();
        assert!(m0 <= 1e-10 && m1 <= 1e-10, "{m0} {m1}");
        assert!(k.decay_ratio() <= 1e-8);
        assert!((k.value_at(0.0).re - 0.152264).abs() < 1e-6);
        let g = gap();
        assert!(g.decay_ratio() <= 1e-8);
    }

    #[test]
    fn small_radius_is_rejected() {
        let err = build_kernel(2.0, 4096, 64.0).unwrap_err();
        assert!(matches!(
            err,
            Error::MomentCheckFailed { .. } | Error::DecayCheckFailed { .. }
        ));
        assert!(build_kernel(2.0, 1000, 1024.0).is_err());
        assert!(build_kernel(2.0, 32, 1024.0).is_err());
    }

    #[test]
    fn collapse_examples() {
        let k = kernel2();
        let f = SeriesSpec::f_theta(1.0).unwrap();
        let v = extract_analytic(&f, k, 8, 0.0, 1e-12).unwrap();
        assert!((v - Complex64::new(2f64.powi(-8), 0.0)).norm() < 1e-15);
        let w = SeriesSpec::weierstrass_cos(2.0, 3.0).unwrap();
        let v = extract_analytic(&w, k, 6, 0.7, 1e-12).unwrap();
        let e = Complex64::from_polar(1.0 / 128.0, 729.0 * 0.7);
        assert!((v - e).norm() < 1e-14);
        let one = SeriesSpec::custom_finite(&[Complex64::new(1.0, 0.0)], &[1.0]).unwrap();
        let v = extract_analytic(&one, k, 0, 0.4, 1e-12).unwrap();
        assert!((v - Complex64::from_polar(1.0, 0.4)).norm() < 1e-15);
    }

    #[test]
    fn quadrature_examples() {
        let k = kernel2();
        let f = SeriesSpec::f_theta(1.0).unwrap();
        let q = extract_quadrature(&f, k, 5, 0.0, 1e-10).unwrap();
        assert!((q.value - Complex64::new(2f64.powi(-5), 0.0)).norm() < 1e-6);
        let one = SeriesSpec::custom_finite(&[Complex64::new(1.0, 0.0)], &[1.0]).unwrap();
        let q = extract_quadrature(&one, k, 0, 0.0, 1e-10).unwrap();
        assert!((q.value - 1.0).norm() < 1e-8);
    }

    #[test]
    fn lambda_too_wide() {
        let k = kernel2();
        let spec = SeriesSpec::power(2.0, 3.0).unwrap();
        assert!(matches!(
            extract_analytic(&spec, k, 10, 0.0, 1e-10),
            Err(Error::LambdaTooWide { .. })
        ));
    }

    #[test]
    fn gap_examples() {
        let g = gap();
        let spec = SeriesSpec::power(2.0, 3.0).unwrap();
        let v = extract_gap(&spec, g, 10, 0.0, 1e-10).unwrap();
        assert!((v - 0.01).norm() < 1e-15);
        let f = SeriesSpec::f_theta(1.0).unwrap();
        let a = extract_analytic(&f, kernel2(), 8, 0.0, 1e-10).unwrap();
        let v = extract_gap(&f, g, 8, 0.0, 1e-10).unwrap();
        assert!((v - a).norm() < 1e-15);
        let q = extract_gap_quadrature(&spec, g, 10, 0.3, 1e-10).unwrap();
        let e = expected_coefficient(&spec, 10, 0.3).unwrap();
        assert!((q.value - e).norm() < 1e-8);
    }

    #[test]
    fn variants_halve() {
        let k = kernel2();
        let c = SeriesSpec::weierstrass_cos(2.0, 3.0)
            .unwrap()
            .with_variant(Variant::Complex);
        let full = extract_analytic(&c, k, 4, 0.3, 1e-10).unwrap();
        let re =
            extract_analytic(&c.clone().with_variant(Variant::RealPart), k, 4, 0.3, 1e-10).unwrap();
        let im =
            extract_analytic(&c.clone().with_variant(Variant::ImagPart), k, 4, 0.3, 1e-10).unwrap();
        assert!((re - full / 2.0).norm() < 1e-16);
        assert!((im - full / Complex64::new(0.0, 2.0)).norm() < 1e-16);
        let q = extract_quadrature(&c.with_variant(Variant::ImagPart), k, 4, 0.3, 1e-10).unwrap();
        assert!((q.value - im).norm() < 1e-8);
    }

    #[test]
    fn sweeps() {
        let k = kernel2();
        let f = SeriesSpec::f_theta(1.0).unwrap();
        let rows = extraction_sweep(&f, Kernel::Bump(k), 3..=12, 0.0, 1e-10).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows
            .iter()
            .all(|r| r.residual_analytic <= 1e-10 && r.residual_quadrature <= 1e-6));
        assert!(extraction_sweep(&f, Kernel::Bump(k), 5..5, 0.0, 1e-10)
            .unwrap()
            .is_empty());
        let g = SeriesSpec::gap_example(5.0, 1.0).unwrap();
        let rows = extraction_sweep(&g, Kernel::Gap(gap()), 0..=9, 1.0, 1e-10).unwrap();
        let b = [1.0, 1.2, 25.0, 30.0, 625.0, 750.0];
        for (r, b) in rows.iter().zip(b) {
            let e = Complex64::from_polar(5f64.powi(-(r.k as i32)), b);
            assert!((r.expected - e).norm() < 1e-14, "k={}", r.k);
            assert!(r.residual_analytic < 1e-12);
        }
    }
}
