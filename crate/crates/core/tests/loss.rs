use evflow::loss::{
    bilinear_sample, charbonnier, loss_gradient, photometric_loss, total_loss, warp, CharbonnierParams, LossWeights,
    Reduction,
};
use evflow::{FlowField, Frame};
use proptest::prelude::*;
use proptest::test_runner::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-4;
const GRAD_REL_TOL: f64 = 1e-3;

/// Neighbouring flow components differ by at least this much, so that no
/// smoothness pair sits inside the Charbonnier kink where a 1e-4 central
/// difference is inaccurate.
const PAIR_MARGIN: f64 = 0.02;

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Frame<f64>, Frame<f64>, FlowField<f64>) {
    let i0 = Frame::from_fn(n, n, |_, _| rng.gen::<f64>());
    let i1 = Frame::from_fn(n, n, |_, _| rng.gen::<f64>());
    let mut flow = FlowField::zeros(n, n);
    // raster order: the earlier member of every 8-neighbour pair is one of these
    let earlier = [(-1isize, 0isize), (-1, -1), (0, -1), (1, -1)];
    for comp in [&mut flow.u, &mut flow.v] {
        for y in 0..n as isize {
            for x in 0..n as isize {
                let neighbours: Vec<f64> = earlier
                    .iter()
                    .map(|(dx, dy)| (x + dx, y + dy))
                    .filter(|&(nx, ny)| nx >= 0 && ny >= 0 && nx < n as isize)
                    .map(|(nx, ny)| comp[(ny * n as isize + nx) as usize])
                    .collect();
                comp[(y * n as isize + x) as usize] = loop {
                    let c = rng.gen_range(-2i32..=2) as f64 + rng.gen_range(0.2..0.8);
                    if neighbours.iter().all(|&o| (c - o).abs() >= PAIR_MARGIN) {
                        break c;
                    }
                };
            }
        }
    }
    (i0, i1, flow)
}

/// Largest per-component relative error between the analytic gradient and
/// central differences of the total loss; the denominator is at least `floor`.
fn gradient_error(
    i0: &Frame<f64>,
    i1: &Frame<f64>,
    flow: &FlowField<f64>,
    weights: &LossWeights<f64>,
    floor: f64,
) -> f64 {
    let p = CharbonnierParams::default();
    let g = loss_gradient(i0, i1, flow, &p, weights).unwrap();
    let loss = |f: &FlowField<f64>| total_loss(i0, i1, f, &p, weights).unwrap().total;
    let mut worst = 0.0f64;
    for i in 0..flow.len() {
        for comp in 0..2 {
            let mut plus = flow.clone();
            let mut minus = flow.clone();
            let (cp, cm) =
                if comp == 0 { (&mut plus.u[i], &mut minus.u[i]) } else { (&mut plus.v[i], &mut minus.v[i]) };
            *cp += FD_STEP;
            *cm -= FD_STEP;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            let analytic = if comp == 0 { g.u[i] } else { g.v[i] };
            let scale = analytic.abs().max(numeric.abs()).max(floor);
            if scale > 0.0 {
                let e = (analytic - numeric).abs() / scale;
                worst = worst.max(e);
            }
        }
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (i0, i1, flow) = random_instance(&mut rng, 8);
        let err = gradient_error(&i0, &i1, &flow, &LossWeights::default(), 0.0);
        assert!(err < GRAD_REL_TOL, "{err}");
    }
}

#[test]
fn gradient_matches_with_mean_reduction_and_invalid_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let (i0, i1, mut flow) = random_instance(&mut rng, 8);
        for k in [3, 17, 40] {
            flow.valid[k] = false;
        }
        let w = LossWeights { lambda: 0.8, reduction: Reduction::Mean };
        // the mean reduction shrinks components by ~1/64, hence the floor
        let err = gradient_error(&i0, &i1, &flow, &w, 1e-2);
        assert!(err < GRAD_REL_TOL, "{err}");
    }
}

#[test]
fn identical_images_zero_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = Frame::from_fn(16, 12, |_, _| rng.gen::<f64>());
    let p = CharbonnierParams::default();
    let (sum, count) = photometric_loss(&img, &img, &FlowField::zeros(16, 12), &p).unwrap();
    assert_eq!(count, 16 * 12);
    let expected = count as f64 * 10f64.powf(-2.7);
    assert!((sum - expected).abs() <= 1e-12 * expected);
}

#[test]
fn integer_shift_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (w, h, dx, dy) = (16usize, 16usize, 3usize, 2usize);
    let i1 = Frame::from_fn(w, h, |_, _| rng.gen::<f64>());
    // I0(x) = I1(x + d), so warping I1 by d reproduces I0
    let i0 = Frame::from_fn(w, h, |x, y| i1.at((x + dx).min(w - 1), (y + dy).min(h - 1)));
    let flow = FlowField::constant(w, h, dx as f64, dy as f64);
    let (warped, inside) = warp(&i1, &flow).unwrap();
    for y in 0..h - dy {
        for x in 0..w - dx {
            assert!(inside.at(x, y));
            assert!((warped.at(x, y) - i0.at(x, y)).abs() < 1e-12);
        }
    }
}

#[test]
fn subpixel_shift_of_bilinear_image_is_exact() {
    let ramp = |x: f64, y: f64| 0.1 + 0.03 * x + 0.02 * y;
    let (w, h, d) = (12usize, 10usize, (0.35, 0.6));
    let i1 = Frame::from_fn(w, h, |x, y| ramp(x as f64, y as f64));
    let i0 = Frame::from_fn(w, h, |x, y| ramp(x as f64 + d.0, y as f64 + d.1));
    let (warped, inside) = warp(&i1, &FlowField::constant(w, h, d.0, d.1)).unwrap();
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            assert!(inside.at(x, y));
            assert!((warped.at(x, y) - i0.at(x, y)).abs() < 1e-12);
        }
    }
}

#[test]
fn f32_gradient_agrees_with_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (i0, i1, flow) = random_instance(&mut rng, 8);
    let g64 = loss_gradient(&i0, &i1, &flow, &CharbonnierParams::default(), &LossWeights::default()).unwrap();
    let cast = |f: &Frame<f64>| {
        Frame::new(f.width, f.height, f.timestamp, f.pixels.iter().map(|&p| p as f32).collect()).unwrap()
    };
    let flow32 = FlowField::new(
        8,
        8,
        flow.u.iter().map(|&c| c as f32).collect(),
        flow.v.iter().map(|&c| c as f32).collect(),
        flow.valid.clone(),
    )
    .unwrap();
    let g32 =
        loss_gradient(&cast(&i0), &cast(&i1), &flow32, &CharbonnierParams::default(), &LossWeights::default()).unwrap();
    for i in 0..64 {
        assert!((g32.u[i] as f64 - g64.u[i]).abs() < 1e-3 * (1.0 + g64.u[i].abs()));
    }
}

proptest! {
    #![proptest_config(Config { cases: 256, failure_persistence: None, ..Config::default() })]

    #[test]
    fn charbonnier_is_even_and_increasing(x in 0.0f64..100.0, y in 0.0f64..100.0) {
        let p = CharbonnierParams::default();
        prop_assert_eq!(charbonnier(x, &p), charbonnier(-x, &p));
        if x < y {
            prop_assert!(charbonnier(x, &p) <= charbonnier(y, &p));
        }
    }

    #[test]
    fn bilinear_reproduces_lattice_and_stays_in_range(
        seed in any::<u64>(), x in 0.0f64..7.0, y in 0.0f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Frame::from_fn(8, 6, |_, _| rng.gen::<f64>());
        let (v, inside) = bilinear_sample(&img, x, y);
        prop_assert!(inside);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let corners = [img.at(x0, y0), img.at(x0 + 1, y0), img.at(x0, y0 + 1), img.at(x0 + 1, y0 + 1)];
        let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
        prop_assert_eq!(bilinear_sample(&img, x0 as f64, y0 as f64).0, img.at(x0, y0));
    }

    #[test]
    fn total_is_weighted_sum(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (i0, i1, flow) = random_instance(&mut rng, 6);
        let w = LossWeights { lambda, reduction: Reduction::Sum };
        let b = total_loss(&i0, &i1, &flow, &CharbonnierParams::default(), &w).unwrap();
        prop_assert!((b.total - (b.photometric + lambda * b.smoothness)).abs() <= 1e-12 * b.total.abs().max(1.0));
        prop_assert!(b.photometric >= 0.0 && b.smoothness >= 0.0);
    }
}
