use std::path::Path;

use bits_core::design::{lhs_init, split_train_test, DesignSpace};
use bits_core::distillation::{flow_profiles, operating_lines, step_stages, ColumnSpec, EquilibriumCurve, QLine};
use bits_core::entropy::{entropy_lower_bound, gaussian_entropy, taylor_entropy, MixtureAtPoint};
use bits_core::gp::{Dataset, GpState};
use bits_core::inference::{gelman_rubin, PriorEntry};
use bits_core::kernels::{build_cov, KernelFamily, KernelSpec, MaternNu};
use bits_core::mixture::moments_of;
use bits_core::seeding::derive_seed;
use bits_core::vle::{bubble_point, dew_point, BinarySystem, Ideal};
use proptest::prelude::*;

fn system() -> BinarySystem {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/system.json");
    BinarySystem::from_json_file(&path).unwrap()
}

fn family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![
        Just(KernelFamily::SquaredExponential),
        (0.2f64..5.0).prop_map(|alpha| KernelFamily::RationalQuadratic { alpha }),
        Just(KernelFamily::Matern { nu: MaternNu::Half }),
        Just(KernelFamily::Matern { nu: MaternNu::ThreeHalves }),
        Just(KernelFamily::Matern { nu: MaternNu::FiveHalves }),
    ]
}

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), n)
}

fn mixture() -> impl Strategy<Value = MixtureAtPoint> {
    prop::collection::vec((-5.0f64..5.0, 0.01f64..4.0), 1..8).prop_map(|c| {
        let (m, v) = c.into_iter().unzip();
        MixtureAtPoint::new(m, v).unwrap()
    })
}

/// Strictly increasing curve through (0, 0) and (1, 1), above the diagonal.
fn volatility_curve(alpha: f64) -> EquilibriumCurve {
    let xs: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    let ys = xs.iter().map(|&x| alpha * x / (1.0 + (alpha - 1.0) * x)).collect();
    EquilibriumCurve::new(xs, ys).unwrap()
}

proptest! {
    #[test]
    fn kernel_matrices_are_symmetric_psd(
        fam in family(),
        var in 0.1f64..5.0,
        ls in prop::collection::vec(0.05f64..2.0, 2),
        pts in points(1..12),
    ) {
        let k = KernelSpec::new(fam, 1.0 / var, ls).unwrap();
        for a in &pts {
            prop_assert!((k.eval(a, a).unwrap() - var).abs() < 1e-12 * var);
            for b in &pts {
                let kab = k.eval(a, b).unwrap();
                prop_assert_eq!(kab, k.eval(b, a).unwrap());
                prop_assert!(kab <= var * (1.0 + 1e-12) && kab >= 0.0);
            }
        }
        let cov = build_cov(&pts, &k, 0.0).unwrap();
        prop_assert!(cov.min_eigenvalue() > -1e-9 * var * pts.len() as f64);
    }

    #[test]
    fn predictive_variance_is_bounded_by_prior(
        var in 0.1f64..5.0,
        ls in prop::collection::vec(0.05f64..1.0, 2),
        pts in points(1..10),
        ys in prop::collection::vec(-3.0f64..3.0, 10),
        probe in prop::collection::vec(-0.5f64..1.5, 2),
        noise in 1e-4f64..0.5,
    ) {
        let n = pts.len();
        let data = Dataset::new(pts, ys[..n].to_vec()).unwrap();
        let k = KernelSpec::squared_exponential(1.0 / var, ls).unwrap();
        let gp = GpState::condition(data, k, noise, 0.0).unwrap();
        let (_, v) = gp.predict(&probe).unwrap();
        prop_assert!((0.0..=var).contains(&v));
    }

    #[test]
    fn prior_transforms_round_trip(
        shape in 0.5f64..10.0,
        rate in 0.1f64..5.0,
        low in -5.0f64..5.0,
        width in 0.1f64..50.0,
        u in -8.0f64..8.0,
    ) {
        for p in [PriorEntry::gamma("g", shape, rate), PriorEntry::uniform("u", low, low + width)] {
            let theta = p.constrain(u);
            prop_assert!(p.in_support(theta) || theta == low || theta == low + width);
            let back = p.unconstrain(theta);
            prop_assert!((p.constrain(back) - theta).abs() <= 1e-9 * theta.abs().max(1.0));
        }
    }

    #[test]
    fn single_component_entropy_is_exact(var in 1e-6f64..1e3, mean in -10.0f64..10.0) {
        let mix = MixtureAtPoint::new(vec![mean], vec![var]).unwrap();
        let exact = gaussian_entropy(var).unwrap();
        prop_assert!((taylor_entropy(&mix, 2).unwrap() - exact).abs() < 1e-12 * exact.abs().max(1.0));
        // The bound is −log ∫p², which for one Gaussian is ½ log(4πσ²).
        let lb = entropy_lower_bound(&mix);
        let collision = 0.5 * (4.0 * std::f64::consts::PI * var).ln();
        prop_assert!((lb - collision).abs() < 1e-12 * collision.abs().max(1.0));
        prop_assert!(lb < exact);
    }

    #[test]
    fn entropy_estimators_are_translation_and_permutation_invariant(
        mix in mixture(),
        shift in -20.0f64..20.0,
    ) {
        let shifted = MixtureAtPoint::new(
            mix.means().iter().map(|m| m + shift).collect(),
            mix.variances().to_vec(),
        ).unwrap();
        let mut m: Vec<f64> = mix.means().to_vec();
        let mut v: Vec<f64> = mix.variances().to_vec();
        m.reverse();
        v.reverse();
        let reversed = MixtureAtPoint::new(m, v).unwrap();
        for other in [&shifted, &reversed] {
            let a = entropy_lower_bound(&mix);
            prop_assert!((a - entropy_lower_bound(other)).abs() < 1e-9);
            let a = taylor_entropy(&mix, 2).unwrap();
            prop_assert!((a - taylor_entropy(other, 2).unwrap()).abs() < 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn lower_bound_never_exceeds_the_moment_matched_gaussian(mix in mixture()) {
        // The Gaussian with the mixture's variance has the largest entropy.
        let (_, var) = moments_of(mix.means(), mix.variances());
        prop_assert!(entropy_lower_bound(&mix) <= gaussian_entropy(var).unwrap() + 1e-9);
    }

    #[test]
    fn mixture_variance_dominates_mean_component_variance(mix in mixture()) {
        let (_, var) = moments_of(mix.means(), mix.variances());
        let avg = mix.variances().iter().sum::<f64>() / mix.len() as f64;
        prop_assert!(var >= avg - 1e-12);
    }

    #[test]
    fn rhat_is_affine_invariant(
        chains in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 20), 2..5),
        scale in 0.1f64..10.0,
        offset in -100.0f64..100.0,
    ) {
        let r = gelman_rubin(&chains).unwrap();
        let moved: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|v| scale * v + offset).collect())
            .collect();
        prop_assert!((r - gelman_rubin(&moved).unwrap()).abs() < 1e-6 * r.max(1.0));
    }

    #[test]
    fn seed_streams_are_distinct(base in any::<u64>(), a in 0u64..10_000, b in 0u64..10_000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(base, a), derive_seed(base, b));
        prop_assert_eq!(derive_seed(base, a), derive_seed(base, a));
    }

    #[test]
    fn lhs_hits_every_stratum(n in 1usize..40, seed in any::<u64>()) {
        let space = DesignSpace::default();
        let pts = lhs_init(n, &space, seed).unwrap();
        prop_assert_eq!(pts.len(), n);
        for (j, a) in space.axes.iter().enumerate() {
            let mut bins: Vec<usize> = pts
                .iter()
                .map(|p| ((((p[j] - a.lower) / (a.upper - a.lower)) * n as f64) as usize).min(n - 1))
                .collect();
            bins.sort_unstable();
            prop_assert_eq!(bins, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn split_partitions_indices(n in 2usize..60, seed in any::<u64>()) {
        let (train, test) = split_train_test(n, seed).unwrap();
        prop_assert_eq!(train.len(), n.div_ceil(2));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn design_space_transforms_round_trip(z in 0.0f64..=1.0, t in 350.0f64..=367.0) {
        let s = DesignSpace::default();
        let raw = vec![z, t];
        let back = s.from_model(&s.to_model(&raw));
        prop_assert!((back[0] - z).abs() < 1e-12 && (back[1] - t).abs() < 1e-9);
        let unit = s.to_unit(&raw);
        prop_assert!(unit.iter().all(|u| (0.0..=1.0).contains(u)));
    }

    #[test]
    fn pchip_preserves_monotone_data(
        steps in prop::collection::vec((0.01f64..0.2, 0.0f64..0.2), 3..15),
        probes in prop::collection::vec(0.0f64..1.0, 20),
    ) {
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for (dx, dy) in &steps {
            xs.push(xs.last().unwrap() + dx);
            ys.push(ys.last().unwrap() + dy);
        }
        let curve = EquilibriumCurve::new(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            prop_assert!((curve.eval(*x) - y).abs() < 1e-12);
        }
        let top = *xs.last().unwrap();
        let mut sorted: Vec<f64> = probes.iter().map(|p| p * top).collect();
        sorted.sort_by(f64::total_cmp);
        let vals: Vec<f64> = sorted.iter().map(|&x| curve.eval(x)).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        // Values stay within the range of the bracketing knots.
        for (&x, &v) in sorted.iter().zip(&vals) {
            let i = xs.partition_point(|&k| k <= x).clamp(1, xs.len() - 1);
            prop_assert!(v >= ys[i - 1] - 1e-12 && v <= ys[i] + 1e-12);
        }
    }

    #[test]
    fn pchip_inverse_recovers_x(alpha in 1.5f64..10.0, x in 0.001f64..0.999) {
        let curve = volatility_curve(alpha);
        let y = curve.eval(x);
        let back = curve.inverse(y, 1.0).unwrap();
        prop_assert!((back - x).abs() < 1e-9, "{} vs {}", back, x);
    }

    #[test]
    fn column_balances_close(
        r in 0.8f64..5.0,
        x_d in 0.4f64..0.95,
        x_w in 0.001f64..0.05,
        frac in 0.2f64..0.8,
        q in 0.3f64..1.5,
    ) {
        let x_f = x_w + frac * (x_d - x_w);
        let spec = ColumnSpec { reflux_ratio: r, x_d, x_w, x_f, q, ..ColumnSpec::default() };
        let Ok(lines) = operating_lines(&spec) else { return Ok(()) };
        // Lines meet on the q-line.
        let (xi, yi) = lines.intersection;
        prop_assert!((lines.enriching.at(xi) - yi).abs() < 1e-9);
        prop_assert!((lines.stripping.at(xi) - yi).abs() < 1e-9);
        match lines.q_line {
            QLine::Vertical { x } => prop_assert!((x - x_f).abs() < 1e-12),
            QLine::Sloped { slope, intercept } => prop_assert!((slope * xi + intercept - yi).abs() < 1e-9),
        }
        prop_assert!((lines.stripping.at(x_w) - x_w).abs() < 1e-9);
        prop_assert!((lines.enriching.at(x_d) - x_d).abs() < 1e-9);

        let (flows, per_stage) = flow_profiles(&spec, 6).unwrap();
        prop_assert!((flows.distillate + flows.bottoms - spec.feed).abs() < 1e-9 * spec.feed);
        prop_assert!(
            (flows.distillate * x_d + flows.bottoms * x_w - spec.feed * x_f).abs() < 1e-9 * spec.feed
        );
        for (l, v) in per_stage {
            prop_assert!(l > 0.0 && v > 0.0);
        }

        if let Ok(profile) = step_stages(&spec, &volatility_curve(4.0)) {
            let xs: Vec<f64> = profile.stages.iter().map(|s| s.x).collect();
            prop_assert!(xs.windows(2).all(|w| w[1] < w[0]));
            prop_assert!((profile.stages[0].y - x_d).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wilson_satisfies_gibbs_duhem(z in 0.02f64..0.98, t in 340.0f64..380.0) {
        let sys = system();
        let h = 1e-6;
        let (a1, a2) = sys.wilson_ln_gamma(z + h, t);
        let (b1, b2) = sys.wilson_ln_gamma(z - h, t);
        let resid = z * (a1 - b1) / (2.0 * h) + (1.0 - z) * (a2 - b2) / (2.0 * h);
        prop_assert!(resid.abs() < 1e-6, "residual {}", resid);
    }

    #[test]
    fn ideal_bubble_dew_round_trip(z in 0.0f64..=1.0) {
        let sys = system();
        let p = sys.pressure_pa;
        let (tb, y) = bubble_point(z, p, &Ideal, &sys).unwrap();
        prop_assert!((0.0..=1.0).contains(&y));
        let (td, x) = dew_point(y, p, &Ideal, &sys).unwrap();
        prop_assert!((x - z).abs() < 1e-4, "{} -> {} -> {}", z, y, x);
        prop_assert!((td - tb).abs() < 1e-3);
    }
}
