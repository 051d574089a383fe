use abwv::estimators::{build_histograms, Binning};
use abwv::model::{
    density, detector_fraction, fisher_exact, weak_values, DetectorId, ModelParams, Technique,
};
use abwv::optics::{jones_after_hwp, OpticsScenario};
use abwv::sampler::{sample_events, NoiseSpec, RngSpec};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (-0.5..0.5f64, -1.5..1.5f64, 0.1..10.0f64, 1.0..1e7f64)
        .prop_map(|(gs, eps, sigma, n)| ModelParams::new(gs / sigma, eps, sigma, n).unwrap())
}

fn gauss(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

proptest! {
    #[test]
    fn abwv_fractions_sum_to_one(p in params()) {
        let f1 = detector_fraction(Technique::Abwv, &p, DetectorId::Det1).unwrap();
        let f2 = detector_fraction(Technique::Abwv, &p, DetectorId::Det2).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1) && (0.0..=1.0).contains(&f2));
        prop_assert!((f1 + f2 - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn densities_split_the_meter_gaussian(p in params(), z in -6.0..6.0f64) {
        let q = z * p.sigma;
        let d1 = density(Technique::Abwv, &p, DetectorId::Det1, q).unwrap();
        let d2 = density(Technique::Abwv, &p, DetectorId::Det2, q).unwrap();
        let wva = density(Technique::Wva, &p, DetectorId::Det2, q).unwrap();
        let pdf = gauss(q, p.sigma);
        prop_assert!(d1 >= 0.0 && d2 >= 0.0 && wva >= 0.0);
        prop_assert!(d1 <= pdf * (1.0 + 1e-15) && wva <= pdf * (1.0 + 1e-15));
        prop_assert!(((d1 + d2) / pdf - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn abwv_total_fisher_is_constant(p in params()) {
        let r = fisher_exact(Technique::Abwv, &p).unwrap();
        let expected = 4.0 * p.n_events * p.sigma * p.sigma;
        prop_assert!((r.f_total / expected - 1.0).abs() <= 1e-12);
        prop_assert!((r.f1 + r.f2 - r.f_total).abs() <= 1e-12 * expected);
    }

    #[test]
    fn weak_value_product_is_one(eps in -1.5..1.5f64) {
        let w = weak_values(eps).unwrap();
        let prod = w.product();
        prop_assert!((prod.re - 1.0).abs() <= 1e-12 && prod.im.abs() <= 1e-12);
    }

    #[test]
    fn jones_vector_stays_normalized(
        phi in -0.39..0.39f64,
        omega in -100.0..100.0f64,
        t in -1.0..1.0f64,
    ) {
        let o = OpticsScenario::new(phi, omega, 0.1, 1.0).unwrap();
        let j = jones_after_hwp(&o, t);
        prop_assert!((j.c_h.norm_sqr() + j.c_v.norm_sqr() - 1.0).abs() <= 1e-14);
        prop_assert!((j.c_r.norm_sqr() + j.c_l.norm_sqr() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn histograms_conserve_events(
        gs in -0.3..0.3f64,
        eps in -1.0..1.0f64,
        n in 10.0..3000.0f64,
        seed in any::<u64>(),
    ) {
        let p = ModelParams::new(gs, eps, 1.0, n).unwrap();
        let batch = sample_events(Technique::Abwv, &p, &NoiseSpec::default(), &RngSpec::new(seed, 0))
            .unwrap();
        prop_assert_eq!(batch.prepared as usize, batch.detected());
        let h = build_histograms(&batch, &Binning::default()).unwrap();
        prop_assert_eq!(h.counts_sum.iter().sum::<u64>() as usize, batch.detected());
        prop_assert_eq!(
            h.counts_diff.iter().sum::<i64>(),
            batch.n2() as i64 - batch.n1() as i64
        );
        for (s, d) in h.counts_sum.iter().zip(&h.counts_diff) {
            prop_assert!(d.unsigned_abs() <= *s);
        }
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), stream in 0..1000u64) {
        let p = ModelParams::new(1e-3, 0.1, 1.0, 200.0).unwrap();
        let rng = RngSpec::new(seed, stream);
        let a = sample_events(Technique::Abwv, &p, &NoiseSpec::default(), &rng).unwrap();
        let b = sample_events(Technique::Abwv, &p, &NoiseSpec::default(), &rng).unwrap();
        prop_assert_eq!(a, b);
    }
}
