use lacunary::conditions::{holder_upper_bounds, hypothesis_scan_default};
use lacunary::microlocal::{
    default_gap_kernel, default_kernel, expected_coefficient, extract_analytic, extract_gap,
    extract_quadrature, BumpKernel, GapKernel,
};
use lacunary::{Family, SeriesSpec, Variant};
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::OnceLock;

fn kernel2() -> &'static BumpKernel {
    static K: OnceLock<BumpKernel> = OnceLock::new();
    K.get_or_init(|| default_kernel(2.0).unwrap())
}

fn gap_kernel() -> &'static GapKernel {
    static G: OnceLock<GapKernel> = OnceLock::new();
    G.get_or_init(|| default_gap_kernel().unwrap())
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 256,
        ..ProptestConfig::default()
    }
}

fn builtin() -> impl Strategy<Value = SeriesSpec> {
    prop_oneof![
        (0.2f64..=1.0).prop_map(|theta| Family::FTheta { theta }),
        (1.2f64..3.0, 1.0f64..2.5).prop_map(|(a, m)| Family::WeierstrassCos { a, b: a * m }),
        (1.2f64..3.0, 1.0f64..2.5).prop_map(|(a, m)| Family::WeierstrassSin { a, b: a * m }),
        Just(Family::Darboux),
        (1.5f64..6.0, 0.3f64..3.0).prop_map(|(a, p)| Family::GapExample { a, p }),
        (1.2f64..4.0, 0.5f64..4.0).prop_map(|(p, q)| Family::Power { p, q }),
        Just(Family::Riemann),
        (2u32..=3, 1.2f64..3.0).prop_map(|(n, a)| Family::IteratedLog { n, a }),
        (1.2f64..3.0, 0.0f64..1.0).prop_map(|(a, d)| Family::LogPower { a, b: a + d }),
    ]
    .prop_map(|f| SeriesSpec::new(f, false).unwrap())
}

/// Finite custom series with 30 terms, frequency ratios in ]1.1, 3[ and
/// amplitudes `c j^{-p}`.
fn custom_lacunary() -> impl Strategy<Value = SeriesSpec> {
    (
        0.5f64..3.0,
        proptest::collection::vec(1.1f64..3.0, 29),
        0.3f64..5.0,
    )
        .prop_map(|(p, ratios, b0)| {
            let mut freqs = vec![b0];
            for r in ratios {
                freqs.push(freqs.last().unwrap() * r);
            }
            let amps: Vec<Complex64> = (0..30)
                .map(|j| Complex64::new(((j + 1) as f64).powf(-p), 0.0))
                .collect();
            SeriesSpec::custom_finite(&amps, &freqs).unwrap()
        })
}

fn complex_in(lo: f64, hi: f64) -> impl Strategy<Value = Complex64> {
    (lo..hi, -std::f64::consts::PI..std::f64::consts::PI)
        .prop_map(|(r, th)| Complex64::from_polar(r, th))
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn extraction_is_linear(
        b0 in 0.5f64..10.0,
        ratio in 2.05f64..10.0,
        f in proptest::array::uniform2(complex_in(0.1, 2.0)),
        g in proptest::array::uniform2(complex_in(0.1, 2.0)),
        alpha in complex_in(0.1, 3.0),
        beta in complex_in(0.1, 3.0),
        k in 0u64..=1,
        t0 in -5.0f64..5.0,
    ) {
        let freqs = [b0, b0 * ratio];
        let h = [alpha * f[0] + beta * g[0], alpha * f[1] + beta * g[1]];
        prop_assume!(h.iter().all(|z| z.norm() > 1e-3));
        let sf = SeriesSpec::custom_finite(&f, &freqs).unwrap();
        let sg = SeriesSpec::custom_finite(&g, &freqs).unwrap();
        let sh = SeriesSpec::custom_finite(&h, &freqs).unwrap();
        let kern = kernel2();
        let eps = 1e-12;
        let ef = extract_analytic(&sf, kern, k, t0, eps).unwrap();
        let eg = extract_analytic(&sg, kern, k, t0, eps).unwrap();
        let eh = extract_analytic(&sh, kern, k, t0, eps).unwrap();
        prop_assert!((eh - (alpha * ef + beta * eg)).norm() <= 1e-10);
        let qf = extract_quadrature(&sf, kern, k, t0, eps).unwrap().value;
        let qg = extract_quadrature(&sg, kern, k, t0, eps).unwrap().value;
        let qh = extract_quadrature(&sh, kern, k, t0, eps).unwrap().value;
        prop_assert!((qh - (alpha * qf + beta * qg)).norm() <= 1e-10);
    }

    #[test]
    fn tail_bound_is_sound(spec in builtin(), frac in 0.05f64..0.5, seed in any::<u64>()) {
        let t_max = 10.0;
        let n_max = spec.phase_limited_index(t_max, 4096).unwrap();
        let start = spec.start_index();
        let n = start + (((n_max - start) as f64 * frac) as u64).max(1);
        let ps_n = spec.partial_sum(n).unwrap();
        let ps_2n = spec.partial_sum(2 * n).unwrap();
        prop_assume!(ps_2n.eval(t_max, lacunary::SumOrder::Forward).is_ok());
        let bound = spec.tail_bound(n).unwrap();
        let mut state = seed;
        for _ in 0..100 {
            // splitmix64
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            let t = (z as f64 / u64::MAX as f64 * 2.0 - 1.0) * t_max;
            let d = ps_2n.eval(t, lacunary::SumOrder::Forward).unwrap() - ps_n.eval(t, lacunary::SumOrder::Forward).unwrap();
            prop_assert!(d.norm() <= bound * (1.0 + 1e-12) + 1e-14, "t={t} diff={} bound={bound}", d.norm());
        }
    }

    #[test]
    fn gap_convention(spec in prop_oneof![builtin(), custom_lacunary()], off in 1u64..200) {
        let start = spec.start_index();
        let j = start + off;
        let j = spec.last_index().map_or(j, |l| j.min(l));
        prop_assume!(j > start);
        let b = |i: u64| spec.frequency_dd(i).unwrap();
        prop_assume!(b(j).is_finite() && (spec.last_index() == Some(j) || b(j + 1).is_finite()));
        let s = spec.term(j).unwrap();
        let left = (b(j) - b(j - 1)).to_f64();
        prop_assert!(s.delta_b > 0.0);
        prop_assert!(s.delta_b <= left);
        if spec.last_index() == Some(j) {
            prop_assert_eq!(s.delta_b, left);
        } else {
            let right = (b(j + 1) - b(j)).to_f64();
            prop_assert!(s.delta_b <= right);
            prop_assert!(s.delta_b == left || s.delta_b == right);
        }
    }

    #[test]
    fn ratio_and_relative_gap_agree(spec in prop_oneof![builtin(), custom_lacunary()], eps in 0.0f64..2.0) {
        let r = hypothesis_scan_default(&spec).unwrap();
        prop_assert!((r.ratio_min - 1.0 - r.rel_gap_min).abs() <= 1e-12 * r.ratio_min);
        prop_assume!((r.rel_gap_min - eps).abs() > 1e-9);
        prop_assert_eq!(r.ratio_min > 1.0 + eps, r.rel_gap_min > eps);
        // the same identity sample by sample
        let (j0, j1) = (r.window[0], r.window[1]);
        for j in j0..j1.min(j0 + 64) {
            let (b0, b1) = (spec.frequency_dd(j).unwrap(), spec.frequency_dd(j + 1).unwrap());
            if !(b0.is_finite() && b1.is_finite()) {
                break;
            }
            let ratio = (b1 / b0).to_f64();
            let gap = ((b1 - b0) / b0).to_f64();
            prop_assert!((ratio - 1.0 - gap).abs() <= 1e-15 * ratio);
            if (gap - eps).abs() > 1e-12 {
                prop_assert_eq!(ratio > 1.0 + eps, gap > eps);
            }
        }
    }

    #[test]
    fn verdict_is_scale_invariant(spec in prop_oneof![builtin(), custom_lacunary()], c in complex_in(1e-6, 1e6)) {
        let scaled = spec.clone().scaled(c).unwrap();
        let (r0, r1) = (hypothesis_scan_default(&spec).unwrap(), hypothesis_scan_default(&scaled).unwrap());
        prop_assert_eq!(r0.verdict, r1.verdict);
        prop_assert_eq!(r0.verdict_basis, r1.verdict_basis);
        let (w0, w1) = (r0.window, r1.window);
        let (h0, h1) = (
            holder_upper_bounds(&spec, w0[0], w0[1]).unwrap(),
            holder_upper_bounds(&scaled, w1[0], w1[1]).unwrap(),
        );
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
            (None, None) => true,
            _ => false,
        };
        prop_assert!(close(h0.0, h1.0) && close(h0.1, h1.1), "{h0:?} vs {h1:?}");
    }

    #[test]
    fn real_and_imag_parts_halve(
        spec in prop_oneof![
            (0.2f64..=1.0).prop_map(|t| SeriesSpec::f_theta(t).unwrap()),
            (1.2f64..3.0, 1.0f64..2.5).prop_map(|(a, m)| SeriesSpec::weierstrass_cos(a, (a * m).max(2.0)).unwrap()),
            Just(SeriesSpec::darboux()),
        ],
        k_off in 0u64..8,
        t0 in -3.0f64..3.0,
    ) {
        let k = spec.start_index() + k_off;
        let kern = kernel2();
        let full = extract_analytic(&spec.clone().with_variant(Variant::Complex), kern, k, t0, 1e-12).unwrap();
        let re = extract_analytic(&spec.clone().with_variant(Variant::RealPart), kern, k, t0, 1e-12).unwrap();
        let im = extract_analytic(&spec.clone().with_variant(Variant::ImagPart), kern, k, t0, 1e-12).unwrap();
        let tol = 1e-14 * full.norm();
        prop_assert!((re - full / 2.0).norm() <= tol);
        prop_assert!((im - full / Complex64::new(0.0, 2.0)).norm() <= tol);
        let target = expected_coefficient(&spec.clone().with_variant(Variant::RealPart), k, t0).unwrap();
        prop_assert!((re - target).norm() <= tol);
    }

    #[test]
    fn gap_method_halves_too(
        spec in prop_oneof![
            (1.2f64..4.0, 0.5f64..4.0).prop_map(|(p, q)| SeriesSpec::power(p, q).unwrap()),
            Just(SeriesSpec::riemann()),
            (1.5f64..6.0, 0.3f64..3.0).prop_map(|(a, p)| SeriesSpec::gap_example(a, p).unwrap()),
        ],
        k_off in 0u64..30,
        t0 in -2.0f64..2.0,
    ) {
        let k = spec.start_index() + k_off;
        prop_assume!(spec.frequency_dd(k).unwrap().hi * (t0.abs() + 1.0) < 1e15);
        let gk = gap_kernel();
        let full = extract_gap(&spec.clone().with_variant(Variant::Complex), gk, k, t0, 1e-12).unwrap();
        let re = extract_gap(&spec.clone().with_variant(Variant::RealPart), gk, k, t0, 1e-12).unwrap();
        let im = extract_gap(&spec.clone().with_variant(Variant::ImagPart), gk, k, t0, 1e-12).unwrap();
        let tol = 1e-14 * full.norm();
        prop_assert!((re - full / 2.0).norm() <= tol);
        prop_assert!((im - full / Complex64::new(0.0, 2.0)).norm() <= tol);
    }
}
