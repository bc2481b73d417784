use ndarray::Array2;

use crossbar::rng::{stream, Purpose};
use crossbar::transfer::{apply_stuck, perturb_conductance, simulate_transfer, Sources, TileLayout, TransferParams};
use crossbar::variability::sample_stuck_lrs;
use crossbar::VariabilityModel;

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn stuck_mask_frequency_is_calibrated_across_seeds() {
    let model = VariabilityModel::synthetic_default();
    let g = Array2::from_elem((200, 100), 250.0);
    let p: f64 = 1.0 - 0.99f64 * 0.99;
    let sd = (p * (1.0 - p) / g.len() as f64).sqrt();
    let z: Vec<f64> = (0..200u64)
        .map(|s| {
            let mut rng = stream(s, Purpose::Custom("mask-calibration"));
            let out = apply_stuck(&g, &g, 0.005, 0.005, &model, &mut rng).unwrap();
            let f = out.stuck_mask.iter().filter(|m| **m).count() as f64 / g.len() as f64;
            (f - p) / sd
        })
        .collect();
    let (m, s) = mean_sd(&z);
    assert!(m.abs() < 0.25, "z mean {m}");
    assert!((0.85..1.15).contains(&s), "z sd {s}");
}

#[test]
fn hrs_and_lrs_fractions_are_separate() {
    let model = VariabilityModel::synthetic_default();
    let g = Array2::from_elem((300, 100), 250.0);
    let mut rng = stream(1, Purpose::Custom("hrs-lrs"));
    let out = apply_stuck(&g, &g, 0.03, 0.07, &model, &mut rng).unwrap();
    let n = 2.0 * g.len() as f64;
    let hrs = out.g_plus.iter().chain(out.g_minus.iter()).filter(|v| **v <= 100.0).count() as f64 / n;
    let lrs = out.g_plus.iter().chain(out.g_minus.iter()).filter(|v| **v > 400.0).count() as f64 / n;
    for (got, want) in [(hrs, 0.03), (lrs, 0.07)] {
        assert!((got - want).abs() <= 3.0 * (want * (1.0 - want) / n).sqrt(), "{got} vs {want}");
    }
}

#[test]
fn lrs_draws_come_from_the_recorded_list() {
    let model = VariabilityModel::synthetic_default();
    let mut rng = stream(2, Purpose::Custom("lrs"));
    for _ in 0..10_000 {
        let v = sample_stuck_lrs(&model.stuck_model, &mut rng);
        assert!(model.stuck_model.lrs_samples.contains(&v));
    }
}

#[test]
fn combined_perturbation_moments() {
    let model = VariabilityModel::synthetic_default();
    let g0 = 200.0;
    let g = Array2::from_elem((500, 200), g0);
    let nd = Array2::zeros(g.dim());
    let mut rng = stream(3, Purpose::Custom("moments"));
    let noisy = perturb_conductance(&g, &nd, &model, Sources::ALL, &mut rng);
    let (m, s) = mean_sd(noisy.as_slice().unwrap());
    let f = model.std_model.percent(g0);
    let off = model.offset_model;
    let want_mean = g0 * (1.0 + off.mu_off / 100.0);
    let want_sd = (f * f + off.sigma_off * off.sigma_off).sqrt() * g0 / 100.0;
    let n = noisy.len() as f64;
    assert!((m - want_mean).abs() <= 3.0 * want_sd / n.sqrt(), "{m} vs {want_mean}");
    assert!((s / want_sd - 1.0).abs() <= 0.02, "{s} vs {want_sd}");
}

#[test]
fn bias_disturbance_grows_with_later_devices() {
    let model = VariabilityModel::synthetic_default();
    let g = Array2::from_elem((400, 100), 250.0);
    let sources = Sources { tuning: false, bias: true, stuck: false };
    let mut rng = stream(4, Purpose::Custom("bias"));
    let mean_shift = |nd: u32, rng: &mut _| {
        let noisy = perturb_conductance(&g, &Array2::from_elem(g.dim(), nd), &model, sources, rng);
        noisy.mean().unwrap() - 250.0
    };
    let near = mean_shift(1, &mut rng);
    let far = mean_shift(60, &mut rng);
    assert!(far < near, "{far} vs {near}");
}

#[test]
fn certain_stuck_selection_leaves_no_trace_of_the_weights() {
    let model = VariabilityModel::synthetic_default();
    let phi = Array2::from_shape_fn((5, 3), |(r, c)| r as f64 - c as f64 * 0.7);
    let layout = TileLayout::new(5, 3, 8, 8).unwrap();
    let params = TransferParams { hrs_fraction: 1.0, lrs_fraction: 0.0, sources: Sources::ALL };
    let mut rng = stream(5, Purpose::Custom("all-stuck"));
    let out = simulate_transfer(&phi, &layout, &model, &params, &mut rng).unwrap();
    assert!(out.stuck_mask.iter().all(|m| *m));
    // Both components sit in [10, 100] µS, so |g+ - g-| <= 90 µS.
    let snap = crossbar::transfer::WeightRangeSnapshot::of(&phi).unwrap();
    let width = snap.phi_max - snap.phi_min;
    for v in out.phi_prime.iter() {
        let centre = (snap.phi_max + snap.phi_min) / 2.0;
        assert!((v - centre).abs() <= 90.0 / 600.0 * width + 1e-12);
    }
}
