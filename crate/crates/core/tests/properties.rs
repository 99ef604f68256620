use halfcyl::compositor::{blend, downscale, upscale_labels, Label, SeamLabels, SeamLayout};
use halfcyl::geometry::{CylindricalParams, HalfCylWarp, Homography, Point2, Side, Similarity};
use halfcyl::image::ImageGrid;
use halfcyl::params::{compute_hd, estimate_focal, focal_objective, height_after_cyl, ColumnHeights, FocalSearchConfig};
use halfcyl::registration::{
    dlt_homography, estimate_homography_ransac, fit_similarity, match_descriptors, Correspondence, Feature,
    MatchSet, RansacConfig,
};
use proptest::prelude::*;

fn homography_strategy() -> impl Strategy<Value = Homography> {
    (
        0.8..1.2f64,
        -0.2..0.2f64,
        -300.0..300.0f64,
        -0.2..0.2f64,
        0.8..1.2f64,
        -300.0..300.0f64,
        -2e-4..2e-4f64,
        -2e-4..2e-4f64,
    )
        .prop_map(|(a, b, c, d, e, f, g, h)| {
            Homography::from_row_major(&[a, b, c, d, e, f, g, h, 1.0]).unwrap()
        })
}

fn cylinder_strategy() -> impl Strategy<Value = CylindricalParams> {
    (50.0..5000.0f64, -500.0..1500.0f64, -500.0..1500.0f64)
        .prop_map(|(f, a0, b0)| CylindricalParams::new(f, a0, b0).unwrap())
}

fn triangle_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs()
}

proptest! {
    #[test]
    fn partition_line_is_fixed(cyl in cylinder_strategy(), y in -2000.0..3000.0f64) {
        let q = cyl.forward(Point2::new(cyl.a0(), y));
        prop_assert_eq!(q, Point2::new(cyl.a0(), y));
    }

    #[test]
    fn branches_agree_on_the_line(h in homography_strategy(), cyl in cylinder_strategy(), y in 0.0..1000.0f64) {
        let p = h.inverse().unwrap().apply(Point2::new(cyl.a0(), y)).unwrap();
        let on_line = h.apply(p).unwrap();
        let bent = cyl.forward(on_line);
        prop_assert!(bent.distance(&on_line) < 1e-12);
    }

    #[test]
    fn homography_round_trip(h in homography_strategy(), x in 0.0..1000.0f64, y in 0.0..1000.0f64) {
        let p = Point2::new(x, y);
        let back = h.inverse().unwrap().apply(h.apply(p).unwrap()).unwrap();
        prop_assert!(back.distance(&p) < 1e-9);
    }

    #[test]
    fn cylinder_round_trip(cyl in cylinder_strategy(), u in -0.99..0.99f64, y in -1000.0..2000.0f64) {
        let x = cyl.a0() + cyl.focal() * (u * std::f64::consts::FRAC_PI_2).tan() * 0.5;
        let p = Point2::new(x, y);
        let back = cyl.inverse(cyl.forward(p)).unwrap();
        prop_assert!(back.distance(&p) < 1e-9 * (1.0 + p.x.abs().max(p.y.abs()) / 1e3));
    }

    #[test]
    fn half_cylindrical_round_trip(
        h in homography_strategy(),
        f in 300.0..5000.0f64,
        right in any::<bool>(),
        x in 1.0..1000.0f64,
        y in 1.0..800.0f64,
    ) {
        let side = if right { Side::CylRightOfLine } else { Side::CylLeftOfLine };
        let a0 = if right { 600.0 } else { 200.0 };
        let warp = HalfCylWarp::new(h, CylindricalParams::new(f, a0, 400.0).unwrap(), side).unwrap();
        let p = Point2::new(x, y);
        let q = warp.forward(p).unwrap();
        let back = warp.inverse(q).unwrap();
        prop_assert!(back.distance(&p) < 1e-9);
    }

    #[test]
    fn cylinder_is_monotone_and_bounded(cyl in cylinder_strategy(), x1 in -1e5..1e5f64, dx in 1e-3..1e4f64) {
        let a = cyl.forward(Point2::new(x1, 0.0)).x;
        let b = cyl.forward(Point2::new(x1 + dx, 0.0)).x;
        prop_assert!(b > a);
        let limit = cyl.focal() * std::f64::consts::FRAC_PI_2;
        prop_assert!((a - cyl.a0()).abs() < limit && (b - cyl.a0()).abs() < limit);
    }

    #[test]
    fn large_focal_is_nearly_identity(a0 in -500.0..500.0f64, b0 in -500.0..500.0f64, dx in -1000.0..1000.0f64, dy in -1000.0..1000.0f64) {
        let cyl = CylindricalParams::new(1e8, a0, b0).unwrap();
        let p = Point2::new(a0 + dx, b0 + dy);
        prop_assert!(cyl.forward(p).distance(&p) < 1e-3);
    }

    #[test]
    fn homography_keeps_collinear_points(h in homography_strategy(), x0 in 0.0..800.0f64, y0 in 0.0..800.0f64, angle in 0.0..3.14f64, t1 in 1.0..200.0f64, t2 in 1.0..200.0f64) {
        let dir = Point2::new(angle.cos(), angle.sin());
        let pts = [0.0, t1, t1 + t2].map(|t| Point2::new(x0 + t * dir.x, y0 + t * dir.y));
        let q = pts.map(|p| h.apply(p).unwrap());
        // Normalize by the squared extent so the area is scale free.
        let extent = q[0].distance(&q[2]);
        prop_assert!(triangle_area(q[0], q[1], q[2]) / (extent * extent) < 1e-6);
    }

    #[test]
    fn bilinear_stays_within_support(vals in prop::array::uniform4(0.0f32..1.0), fx in 0.0..1.0f64, fy in 0.0..1.0f64) {
        let img = ImageGrid::from_samples(2, 2, 1, vals.to_vec()).unwrap();
        let c = img.bilinear_sample(Point2::new(fx, fy)).unwrap()[0];
        let lo = vals.iter().copied().fold(f32::INFINITY, f32::min) as f64;
        let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        prop_assert!(c >= lo && c <= hi);
    }

    #[test]
    fn dlt_is_exact_on_four_points(h in homography_strategy(), jitter in prop::array::uniform8(-40.0..40.0f64)) {
        let base = [(100.0, 100.0), (700.0, 120.0), (680.0, 560.0), (90.0, 600.0)];
        let pairs: Vec<Correspondence> = base
            .iter()
            .enumerate()
            .map(|(i, (x, y))| {
                let p = Point2::new(x + jitter[2 * i], y + jitter[2 * i + 1]);
                Correspondence::new(p, h.apply(p).unwrap())
            })
            .collect();
        let est = dlt_homography(&pairs).unwrap();
        for c in &pairs {
            prop_assert!(est.apply(c.target).unwrap().distance(&c.reference) < 1e-6);
        }
    }

    #[test]
    fn similarity_is_recovered(scale in 0.5..2.0f64, angle in -0.5..0.5f64, tx in -500.0..500.0f64, ty in -500.0..500.0f64) {
        let s = Similarity::from_scale_rotation(scale, angle, tx, ty);
        let pairs: Vec<Correspondence> = (0..20)
            .map(|i| {
                let p = Point2::new((i * 37 % 400) as f64, (i * 91 % 300) as f64);
                Correspondence::new(p, s.apply(p))
            })
            .collect();
        let fit = fit_similarity(&pairs).unwrap();
        for (a, b) in [(fit.a, s.a), (fit.b, s.b), (fit.tx, s.tx), (fit.ty, s.ty)] {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn descriptor_scaling_keeps_matches(seed in 0u64..1000, k in 0.01..100.0f64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<Feature> {
            (0..n)
                .map(|_| Feature {
                    position: Point2::new(0.0, 0.0),
                    descriptor: (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
                    response: 1.0,
                    scale: None,
                    orientation: None,
                })
                .collect()
        };
        let q = make(&mut rng, 30);
        let t = make(&mut rng, 30);
        let scaled = |fs: &[Feature]| -> Vec<Feature> {
            fs.iter()
                .map(|f| Feature { descriptor: f.descriptor.iter().map(|v| v * k as f32).collect(), ..f.clone() })
                .collect()
        };
        // Power-of-two factors scale exactly; others may flip exact ties only.
        let k2 = 2f32.powi((k.log2().round()) as i32);
        let exact = |fs: &[Feature]| -> Vec<Feature> {
            fs.iter()
                .map(|f| Feature { descriptor: f.descriptor.iter().map(|v| v * k2).collect(), ..f.clone() })
                .collect()
        };
        let base = match_descriptors(&q, &t, 0.8, true);
        prop_assert_eq!(&base, &match_descriptors(&exact(&q), &exact(&t), 0.8, true));
        let approx = match_descriptors(&scaled(&q), &scaled(&t), 0.8, true);
        let common = base.iter().filter(|m| approx.contains(m)).count();
        prop_assert!(common + 1 >= base.len());
    }

    #[test]
    fn ransac_is_deterministic(seed in 0u64..50) {
        let h = Homography::from_row_major(&[1.01, 0.02, 250.0, -0.01, 0.99, 4.0, 1e-5, -2e-5, 1.0]).unwrap();
        let mut pairs = Vec::new();
        for i in 0..60 {
            let p = Point2::new((i * 53 % 600) as f64, (i * 29 % 400) as f64);
            let mut q = h.apply(p).unwrap();
            if i % 4 == 0 {
                q = Point2::new(q.y, q.x);
            }
            pairs.push(Correspondence::new(p, q));
        }
        let cfg = RansacConfig { seed, ..RansacConfig::default() };
        let mut a = MatchSet::new(pairs.clone());
        let mut b = MatchSet::new(pairs);
        let (ha, ma) = estimate_homography_ransac(&mut a, &cfg).unwrap();
        let (hb, mb) = estimate_homography_ransac(&mut b, &cfg).unwrap();
        prop_assert_eq!(ha.to_row_major(), hb.to_row_major());
        prop_assert_eq!(ma, mb);
    }

    #[test]
    fn cylinder_height_ignores_b0_and_placement(
        f in 100.0..5000.0f64,
        a0 in 0.0..1000.0f64,
        b0 in -1000.0..2000.0f64,
        dx in -2000.0..2000.0f64,
        u in -500.0..1500.0f64,
        h in 2.0..1500.0f64,
    ) {
        // Map both ends of a vertical segment and measure the result.
        let cyl = CylindricalParams::new(f, a0, b0).unwrap();
        let top = cyl.forward(Point2::new(a0 + dx, u));
        let bottom = cyl.forward(Point2::new(a0 + dx, u + h - 1.0));
        let measured = (bottom.y - top.y) + 1.0;
        prop_assert!((measured - height_after_cyl(f, a0 + dx, a0, h)).abs() < 1e-9 * h.max(1.0));
    }

    #[test]
    fn cylinder_height_grows_with_focal(f in 10.0..1e5f64, df in 1.0..1e4f64, dx in 1.0..3000.0f64, h in 2.0..2000.0f64) {
        let lo = height_after_cyl(f, 100.0 + dx, 100.0, h);
        let hi = height_after_cyl(f + df, 100.0 + dx, 100.0, h);
        prop_assert!(hi > lo && hi < h);
        prop_assert!((height_after_cyl(1e12, 100.0 + dx, 100.0, h) - h).abs() < 1e-3);
    }

    #[test]
    fn desired_height_is_at_least_target_height(h in 1usize..5000, a in 0.0..10000.0f64, b in 0.0..10000.0f64) {
        prop_assert!(compute_hd(h, a, b) >= h as f64);
    }

    #[test]
    fn focal_beats_every_grid_probe(
        h0 in 300.0..900.0f64,
        slope in -0.3..0.6f64,
        n in 5usize..60,
    ) {
        let a0 = 640.0;
        let columns: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let x = a0 + 5.0 + i as f64 * 10.0;
                (x, h0 + slope * (x - a0))
            })
            .collect();
        let ch = ColumnHeights { columns };
        let hd = compute_hd(480, ch.first().unwrap().1, ch.last().unwrap().1);
        let cfg = FocalSearchConfig::for_reference_width(640);
        let est = estimate_focal(&ch, a0, hd, &cfg).unwrap();
        prop_assert!(est.f >= cfg.f_min && est.f <= cfg.f_max);
        let ratio = (cfg.f_max / cfg.f_min).powf(1.0 / (cfg.grid_points - 1) as f64);
        for i in 0..cfg.grid_points {
            let f = (cfg.f_min * ratio.powi(i as i32)).min(cfg.f_max);
            prop_assert!(est.residual <= focal_objective(&ch, a0, hd, f) * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn upscaled_seams_keep_one_transition(boundary in prop::collection::vec(0usize..14, 1..20), factor_exp in 0u32..4) {
        let factor = 1usize << factor_exp;
        let labels = SeamLabels {
            width: 16,
            height: boundary.len(),
            boundary,
            layout: SeamLayout::TargetRight,
            cost: 0.0,
        };
        let up = upscale_labels(&labels, factor);
        prop_assert_eq!(up.height, labels.height * factor);
        for row in 0..labels.height {
            prop_assert_eq!(labels.transitions(row), 1);
        }
        for row in 0..up.height {
            prop_assert_eq!(up.transitions(row), 1);
            let b = labels.boundary[row / factor];
            let t = up.boundary[row];
            // Transition between t and t + 1 lies in [b·factor, (b + 1)·factor).
            prop_assert!(t + 1 >= (b + 1) * factor && t < (b + 1) * factor);
        }
    }

    #[test]
    fn blending_only_copies_input_values(seed in 0u64..500, b in prop::collection::vec(0usize..10, 8)) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let random_image = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut img = ImageGrid::from_fn(10, 8, 3, |_, _, _| rng.gen_range(0.0..1.0)).unwrap();
            for _ in 0..20 {
                img.invalidate(rng.gen_range(0..10), rng.gen_range(0..8));
            }
            img
        };
        let r = random_image(&mut rng);
        let t = random_image(&mut rng);
        let labels = SeamLabels { width: 10, height: 8, boundary: b, layout: SeamLayout::TargetLeft, cost: 0.0 };
        let out = blend(&r, &t, &labels, false).unwrap();
        for row in 0..8 {
            for col in 0..10 {
                let px = out.pixel(col, row);
                match (r.is_valid(col, row), t.is_valid(col, row)) {
                    (false, false) => prop_assert!(!out.is_valid(col, row)),
                    (true, true) => {
                        let src = match labels.label(col, row) {
                            Label::FromReference => &r,
                            Label::FromTarget => &t,
                        };
                        prop_assert_eq!(px, src.pixel(col, row));
                    }
                    (true, false) => prop_assert_eq!(px, r.pixel(col, row)),
                    (false, true) => prop_assert_eq!(px, t.pixel(col, row)),
                }
            }
        }
    }

    #[test]
    fn downscale_matches_block_means(p in -4i32..=4, q in -4i32..=4, w in 8usize..40, h in 8usize..40) {
        // Dyadic ramp values are exact in f32, so the analytic means are too.
        let img = ImageGrid::from_fn(w, h, 1, |x, y, _| (p * x as i32 + q * y as i32) as f32 / 64.0).unwrap();
        let small = downscale(&img, 8);
        for by in 0..small.height() {
            for bx in 0..small.width() {
                let (x0, x1) = (bx * 8, ((bx + 1) * 8).min(w));
                let (y0, y1) = (by * 8, ((by + 1) * 8).min(h));
                let mx = (x0 + x1 - 1) as f64 / 2.0;
                let my = (y0 + y1 - 1) as f64 / 2.0;
                let mean = (f64::from(p) * mx + f64::from(q) * my) / 64.0;
                prop_assert!((f64::from(small.pixel(bx, by)[0]) - mean).abs() < 1e-9);
            }
        }
    }
}
