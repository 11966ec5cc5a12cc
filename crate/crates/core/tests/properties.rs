use nalgebra::Vector3;
use nexsplat::adjoint::backward;
use nexsplat::compositor::{composite_classic, composite_forward, composite_weights, SplatSample};
use nexsplat::primitives::{gather_sorted, Camera, GaussianPrimitive, Ray};
use nexsplat::transmittance::TransmittanceModel;
use nexsplat::Rgb;
use proptest::prelude::*;

fn model() -> impl Strategy<Value = TransmittanceModel> {
    prop_oneof![
        Just(TransmittanceModel::Exponential),
        Just(TransmittanceModel::Linear),
        (-0.5f64..=2.0).prop_map(|c| TransmittanceModel::Quadratic { c }),
        (0.0f64..=1.0).prop_map(|gamma| TransmittanceModel::Blended { gamma }),
        (0.0f64..=1.0).prop_map(|gamma| TransmittanceModel::ViciniBlend { gamma }),
        prop_oneof![-1.0f64..-0.01, 0.01f64..4.0].prop_map(|v| TransmittanceModel::PowerLaw { v }),
        (1.0f64..50.0).prop_map(|kappa| TransmittanceModel::Softplus { kappa }),
    ]
}

fn adjoint_model() -> impl Strategy<Value = TransmittanceModel> {
    prop_oneof![
        Just(TransmittanceModel::Exponential),
        Just(TransmittanceModel::Linear),
        (-0.5f64..=2.0).prop_map(|c| TransmittanceModel::Quadratic { c }),
    ]
}

fn rgb() -> impl Strategy<Value = Rgb> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(r, g, b)| Rgb::new(r, g, b))
}

fn ray_samples(max_alpha: f64) -> impl Strategy<Value = Vec<SplatSample>> {
    prop::collection::vec((0.0f64..100.0, 0.0f64..max_alpha, rgb()), 0..40).prop_map(|mut v| {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v.into_iter().map(|(d, a, e)| SplatSample::new(d, a, e)).collect()
    })
}

proptest! {
    #[test]
    fn weights_and_residual_partition_unity(m in model(), s in ray_samples(1.0), bg in rgb()) {
        let w = composite_weights(&m, &s);
        let r = composite_forward(&m, &s, bg).unwrap();
        prop_assert!(w.iter().all(|&p| p >= 0.0));
        prop_assert!((0.0..=1.0).contains(&r.residual_t));
        prop_assert!((w.iter().sum::<f64>() + r.residual_t - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn radiance_is_a_convex_combination(m in model(), s in ray_samples(1.0), bg in rgb()) {
        let r = composite_forward(&m, &s, bg).unwrap();
        for c in 0..3 {
            let lo = s.iter().map(|x| x.emission[c]).fold(bg[c], f64::min);
            let hi = s.iter().map(|x| x.emission[c]).fold(bg[c], f64::max);
            prop_assert!(r.radiance[c] >= lo - 1e-12 && r.radiance[c] <= hi + 1e-12);
        }
    }

    #[test]
    fn splats_behind_saturation_are_ignored(
        m in model(),
        s in ray_samples(1.0),
        extra in ray_samples(1.0),
        bg in rgb(),
    ) {
        let r = composite_forward(&m, &s, bg).unwrap();
        if let Some(k) = r.saturation_index {
            prop_assert_eq!(r.overdraw, k + 1);
            prop_assert_eq!(r.residual_t, 0.0);
            let mut longer = s.clone();
            let last = s.last().map_or(0.0, |x| x.depth);
            longer.extend(extra.iter().map(|x| SplatSample { depth: last + 1.0 + x.depth, ..*x }));
            let r2 = composite_forward(&m, &longer, Rgb::new(9.0, 9.0, 9.0)).unwrap();
            prop_assert_eq!(r2.radiance, r.radiance);
        } else {
            prop_assert_eq!(r.overdraw, s.len());
        }
    }

    #[test]
    fn exponential_is_classic_alpha_blending(s in ray_samples(0.99), bg in rgb()) {
        let a = composite_forward(&TransmittanceModel::Exponential, &s, bg).unwrap().radiance;
        let b = composite_classic(&s, bg);
        prop_assert!((a - b).abs().max() <= 1e-12);
    }

    #[test]
    fn adjoint_is_linear_in_the_seed(
        m in adjoint_model(),
        s in ray_samples(0.9),
        bg in rgb(),
        a in rgb(),
        b in rgb(),
    ) {
        let f = composite_forward(&m, &s, bg).unwrap();
        let ga = backward(&s, &f, a).unwrap();
        let gb = backward(&s, &f, b).unwrap();
        let gab = backward(&s, &f, a + b).unwrap();
        for i in 0..s.len() {
            prop_assert!((ga.d_alpha[i] + gb.d_alpha[i] - gab.d_alpha[i]).abs() <= 1e-9);
            prop_assert!((ga.d_emission[i] + gb.d_emission[i] - gab.d_emission[i]).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn gather_is_sorted_and_bounded(
        centers in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 0..30),
        max_n in 1usize..20,
        cutoff in 1e-4f64..0.1,
    ) {
        let scene: Vec<_> = centers
            .iter()
            .map(|&(x, y, z)| {
                GaussianPrimitive::with_color(
                    Vector3::new(x, y, z),
                    Vector3::new(0.3, 0.2, 0.25),
                    [1.0, 0.0, 0.0, 0.0],
                    0.6,
                    Rgb::new(0.5, 0.5, 0.5),
                )
            })
            .collect();
        let ray = Ray::new(Vector3::new(0.0, 0.0, -5.0), Vector3::new(0.05, -0.02, 1.0));
        let g = gather_sorted(&scene, &ray, max_n, cutoff);
        prop_assert!(g.len() <= max_n);
        prop_assert!(g.windows(2).all(|w| w[0].depth <= w[1].depth));
        prop_assert!(g.iter().all(|x| x.alpha >= cutoff && x.alpha < 1.0));
    }

    #[test]
    fn camera_rays_are_unit_and_forward(
        px in -3.0f64..3.0,
        py in -3.0f64..3.0,
        fov in 10.0f64..120.0,
        x in 0usize..64,
        y in 0usize..48,
    ) {
        let cam = Camera::look_at(Vector3::new(px, py, -4.0), Vector3::zeros(), Vector3::y(), fov, 64, 48)
            .unwrap();
        let ray = cam.ray(x, y);
        prop_assert!((ray.dir.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(ray.dir.dot(&(-cam.position()).normalize()) > 0.0);
    }

    #[test]
    fn primitive_json_round_trips(
        c in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        s in (1e-3f64..2.0, 1e-3f64..2.0, 1e-3f64..2.0),
        q in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
        opacity in 0.0f64..1.0,
        sh in prop_oneof![prop::collection::vec(rgb(), 1), prop::collection::vec(rgb(), 4)],
    ) {
        let g = GaussianPrimitive::new(
            Vector3::new(c.0, c.1, c.2),
            Vector3::new(s.0, s.1, s.2),
            [q.3, q.0, q.1, q.2],
            opacity,
            sh,
        );
        let back: GaussianPrimitive = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(back, g);
    }
}
