use chrono::{Duration, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{MeteoStats, NormStats, SampleWindow};
use crate::eval::Forecaster;
use crate::train::{train_until, TrainConfig, TrainState};
use crate::tensor::Tensor;

fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2014, 1, 6).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn window(inputs: Vec<Tensor>, target: Tensor, target_time: NaiveDateTime) -> SampleWindow {
    let n = inputs.len();
    let mut w = SampleWindow::from_tensors(inputs, vec![vec![0.0; 29]; n], vec![target]);
    w.target_times = vec![target_time];
    w
}

#[test]
fn ha_all_slot_means() {
    let c = Tensor::full([4, 2, 2], 1.5);
    let times: Vec<_> = (0..8).map(|k| t0() + Duration::hours(6 * k)).collect();
    let ha = HaAll::fit(times.iter().map(|&t| (t, &c)), 360).unwrap();
    assert_eq!(ha.predict_at(t0() + Duration::days(9)).unwrap(), c);

    let two = Tensor::full([1, 1, 1], 2.0);
    let four = Tensor::full([1, 1, 1], 4.0);
    let s = Duration::minutes(90);
    let ha = HaAll::fit([(t0() + s, &two), (t0() + Duration::days(1) + s, &four)], 30).unwrap();
    assert_eq!(ha.predict_at(t0() + Duration::days(5) + s).unwrap().data(), &[3.0]);
    assert!(ha.predict_at(t0()).is_err());
    assert!(HaAll::fit(std::iter::empty(), 30).is_err());
}

#[test]
fn ha_all_matches_grouping_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let len = 4 * 24 * 3;
    let times: Vec<_> = (0..len).map(|k| t0() + Duration::minutes(20 * k as i64)).collect();
    let data: Vec<Tensor> = (0..len).map(|_| Tensor::from_fn([4, 2, 2], |_| rng.random_range(-1.0..1.0))).collect();
    let ha = HaAll::fit(times.iter().copied().zip(&data), 20).unwrap();
    let mut rev: Vec<_> = times.iter().copied().zip(&data).collect();
    rev.reverse();
    let ha_rev = HaAll::fit(rev, 20).unwrap();
    for slot in [0usize, 7, 71] {
        let members: Vec<&Tensor> = (0..len).filter(|k| k % 72 == slot).map(|k| &data[k]).collect();
        let oracle = Tensor::from_fn([4, 2, 2], |i| members.iter().map(|t| t.data()[i]).sum::<f64>() / members.len() as f64);
        let at = t0() + Duration::minutes(20 * slot as i64);
        assert!(ha.predict_at(at).unwrap().max_abs_diff(&oracle) < 1e-12);
        assert!(ha_rev.predict_at(at).unwrap().max_abs_diff(&oracle) < 1e-12);
    }
}

#[test]
fn ha_rec_means() {
    let a = Tensor::full([4, 2, 2], 1.0);
    let b = Tensor::full([4, 2, 2], 3.0);
    assert_eq!(ha_rec_predict(&[a.clone(), b.clone()], 2).unwrap(), Tensor::full([4, 2, 2], 2.0));
    assert_eq!(ha_rec_predict(&[a.clone(), a.clone(), a.clone()], 3).unwrap(), a);
    assert!(ha_rec_predict(std::slice::from_ref(&a), 2).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<Tensor> = (0..5).map(|_| Tensor::from_fn([9, 3, 3], |_| rng.random_range(-1.0..1.0))).collect();
    let oracle = Tensor::from_fn([9, 3, 3], |i| xs.iter().map(|t| t.data()[i]).sum::<f64>() / 5.0);
    assert!(ha_rec_predict(&xs, 5).unwrap().max_abs_diff(&oracle) < 1e-15);
    let w = window(xs.clone(), xs[0].clone(), t0());
    let last2 = HaRec { n: 2 }.forecast(&w).unwrap();
    assert!(last2.max_abs_diff(&ha_rec_predict(&xs[3..], 2).unwrap()) < 1e-15);
}

#[test]
fn least_squares_scalar_closed_form() {
    let xs = [0.3, 1.1, 2.0, 2.7, 4.2, 5.0];
    let ys = [1.0, 2.9, 4.2, 6.1, 8.8, 10.5];
    let x = DMatrix::from_column_slice(6, 1, &xs);
    let y = DMatrix::from_column_slice(6, 1, &ys);
    let fit = LeastSquares::fit(&x, &y, 0.0).unwrap();
    let mx = xs.iter().sum::<f64>() / 6.0;
    let my = ys.iter().sum::<f64>() / 6.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = xs.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    assert!((fit.weights[(0, 0)] - slope).abs() < 1e-9);
    assert!((fit.intercept[0] - (my - slope * mx)).abs() < 1e-9);
}

fn copy_task(samples: usize, features: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(samples, features, |_, _| rng.random_range(-1.0..1.0));
    // target: the last `features / 2` columns, i.e. the most recent input
    let half = features / 2;
    let y = DMatrix::from_fn(samples, half, |r, c| x[(r, features - half + c)]);
    (x, y)
}

#[test]
fn least_squares_copy_task_both_forms() {
    for (samples, features) in [(60, 8), (10, 24)] {
        let (x, y) = copy_task(samples, features, 3);
        let fit = LeastSquares::fit(&x, &y, DEFAULT_JITTER).unwrap();
        assert!(fit.residual(&x, &y) < 1e-6, "{samples}x{features}: {}", fit.residual(&x, &y));
    }
}

#[test]
fn least_squares_constant_targets() {
    let (x, _) = copy_task(30, 6, 4);
    let y = DMatrix::from_element(30, 2, 0.7);
    let fit = LeastSquares::fit(&x, &y, DEFAULT_JITTER).unwrap();
    assert!(fit.weights.iter().all(|w| w.abs() < 1e-9));
    assert!(fit.intercept.iter().all(|b| (b - 0.7).abs() < 1e-9));
}

#[test]
fn residual_shrinks_with_jitter() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(40, 5, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
    let mut last = f64::INFINITY;
    for jitter in [10.0, 1.0, 1e-2, 1e-4, 1e-8, 0.0] {
        let r = LeastSquares::fit(&x, &y, jitter).unwrap().residual(&x, &y);
        assert!(r <= last + 1e-12, "jitter {jitter}: {r} > {last}");
        last = r;
    }
    // a duplicated column makes the unregularized system singular
    let dup = DMatrix::from_fn(40, 2, |r, _| x[(r, 0)]);
    assert!(LeastSquares::fit(&dup, &y, 0.0).is_err());
    assert!(LeastSquares::fit(&dup, &y, DEFAULT_JITTER).is_ok());
}

#[test]
fn olsr_clamps_at_zero_count() {
    let norm = NormStats {
        od_min: 0.0,
        od_max: 10.0,
        meteo: MeteoStats::reference(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let windows: Vec<SampleWindow> = (0..30)
        .map(|_| {
            let a = Tensor::from_fn([1, 1, 1], |_| rng.random_range(-1.0..1.0));
            // target far below the zero-count level
            window(vec![a.clone()], a.map(|v| v - 3.0), t0())
        })
        .collect();
    let olsr = Olsr::fit(&windows, 1, &norm, DEFAULT_JITTER).unwrap();
    for w in &windows {
        assert_eq!(olsr.forecast(w).unwrap().data(), &[-1.0]);
    }
}

#[test]
fn mlp_shapes_and_zero_weights() {
    let mut mlp = MlpBaseline::init(5, 15, 5, 0).unwrap();
    assert_eq!(mlp.params.value("mlp.3.w").unwrap().shape()[0], 75);
    assert_eq!(MlpBaseline::layer_sizes(5, 75), [375, 128, 128, 64, 75]);
    let names: Vec<String> = mlp.params.iter().map(|(n, _)| n.to_string()).collect();
    for n in names {
        mlp.params.value_mut(&n).unwrap().scale(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs: Vec<Tensor> = (0..5).map(|_| Tensor::from_fn([75, 15, 5], |_| rng.random_range(-1.0..1.0))).collect();
    let p = mlp.predict(&window(xs.clone(), xs[0].clone(), t0())).unwrap();
    assert_eq!(p.shape(), &[75, 15, 5]);
    assert!(p.data().iter().all(|&v| v == 0.0));
}

#[test]
fn mlp_treats_channels_independently() {
    let mlp = MlpBaseline::init(2, 2, 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xs: Vec<Tensor> = (0..2).map(|_| Tensor::from_fn([4, 2, 2], |_| rng.random_range(-1.0..1.0))).collect();
    let base = mlp.predict(&window(xs.clone(), xs[0].clone(), t0())).unwrap();
    let mut changed = xs.clone();
    for v in &mut changed[1].data_mut()[4..8] {
        *v += 0.5;
    }
    let out = mlp.predict(&window(changed, xs[0].clone(), t0())).unwrap();
    for d in 0..4 {
        let diff: f64 = (0..4).map(|k| (out.data()[d * 4 + k] - base.data()[d * 4 + k]).abs()).sum();
        assert_eq!(diff > 0.0, d == 1, "channel {d}");
    }
}

#[test]
fn mlp_learns_copy_task() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let windows: Vec<SampleWindow> = (0..16)
        .map(|_| {
            let x = Tensor::from_fn([2, 1, 2], |_| rng.random_range(0.2..0.9));
            window(vec![x.clone()], x, t0())
        })
        .collect();
    let mut mlp = MlpBaseline::init(1, 1, 2, 1).unwrap();
    let cfg = TrainConfig {
        batch_size: 8,
        base_lr: 1e-3,
        epochs: 300,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(1);
    train_until(&mut mlp, &windows, &cfg, &mut state, &mut |_| {}).unwrap();
    let (mut sum, mut count) = (0.0, 0);
    for w in &windows {
        let p = mlp.predict(w).unwrap();
        for (a, b) in p.data().iter().zip(w.targets[0].data()) {
            sum += (a - b).abs() / b;
            count += 1;
        }
    }
    let mape = sum / count as f64;
    assert!(mape < 0.05, "training MAPE {mape}");
}

#[test]
fn baseline_names_parse() {
    for k in BaselineKind::ALL {
        assert_eq!(k.as_str().parse::<BaselineKind>().unwrap(), k);
    }
    assert!("xgboost".parse::<BaselineKind>().is_err());
}
