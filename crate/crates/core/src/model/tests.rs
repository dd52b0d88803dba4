use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::SampleWindow;
use crate::tensor::{ParamGroup, Tensor};
use crate::train::gradient_check;

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

fn random_window(cfg: &CstnConfig, m: usize, seed: u64) -> SampleWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [cfg.regions(), cfg.h, cfg.w];
    SampleWindow::from_tensors(
        (0..cfg.n_steps).map(|_| uniform(&shape, -1.0, 1.0, &mut rng)).collect(),
        (0..cfg.n_steps)
            .map(|_| (0..cfg.meteo_dim()).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect(),
        (0..m).map(|_| uniform(&shape, -1.0, 1.0, &mut rng)).collect(),
    )
}

/// Xavier weights plus small random biases and peepholes, so that every
/// parameter influences the output.
fn jittered(cfg: CstnConfig, seed: u64) -> Cstn {
    let mut model = Cstn::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let names: Vec<String> = model.params.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let v = model.params.value_mut(&name).unwrap();
        if !(name.ends_with(".w") || name.ends_with(".w_x") || name.ends_with(".w_h")) {
            for x in v.data_mut() {
                *x = rng.random_range(-0.3..0.3);
            }
        }
    }
    model
}

fn tiny(h: usize, w: usize, n: usize) -> CstnConfig {
    CstnConfig {
        n_steps: n,
        lsc_layers: 2,
        lsc_channels: 3,
        fuse_channels: 3,
        lstm_channels: 2,
        lt_channels: 3,
        sim_channels: 2,
        meteo_hidden: [4, 3],
        meteo_embed: 2,
        ..CstnConfig::standard(h, w)
    }
}

#[test]
fn feature_shapes_and_similarity_columns() {
    let cfg = CstnConfig::small(3, 2);
    let model = jittered(cfg.clone(), 1);
    let t = model.trace(&random_window(&cfg, 1, 2)).unwrap();
    let n = cfg.regions();
    assert_eq!(t.origin.shape(), &[cfg.lsc_channels, 3, 2]);
    assert_eq!(t.dest.as_ref().unwrap().shape(), &[cfg.lsc_channels, 3, 2]);
    assert_eq!(t.local.shape(), &[cfg.fuse_channels, 3, 2]);
    assert_eq!(t.meteo.as_ref().unwrap().shape(), &[cfg.meteo_embed, 3, 2]);
    assert_eq!(t.hidden.as_ref().unwrap().shape(), &[cfg.lstm_channels, 3, 2]);
    assert_eq!(t.lt.shape(), &[cfg.lt_channels, 3, 2]);
    assert_eq!(t.sim_embed.as_ref().unwrap().shape(), &[cfg.sim_channels, n]);
    let s = t.similarity.as_ref().unwrap();
    assert_eq!(s.shape(), &[n, n]);
    for j in 0..n {
        let col: f64 = (0..n).map(|i| s.get(&[i, j])).sum();
        assert!((col - 1.0).abs() < 1e-12);
    }
    assert_eq!(t.fused.shape(), &[2 * cfg.lt_channels, 3, 2]);
    assert_eq!(t.prediction.shape(), &[n, 3, 2]);
    assert!(t.prediction.data().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn zero_parameters_predict_zero() {
    let cfg = tiny(2, 2, 2);
    let mut model = Cstn::init(cfg.clone(), 0).unwrap();
    let names: Vec<String> = model.params.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        model.params.value_mut(&name).unwrap().scale(0.0);
    }
    let p = model.predict(&random_window(&cfg, 1, 3)).unwrap();
    assert!(p[0].data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_region_mixes_only_itself() {
    let cfg = tiny(1, 1, 2);
    let model = jittered(cfg.clone(), 4);
    let t = model.trace(&random_window(&cfg, 1, 5)).unwrap();
    let s = t.similarity.unwrap();
    assert_eq!(s.shape(), &[1, 1]);
    assert!((s.data()[0] - 1.0).abs() < 1e-15);
    assert!(t.global.unwrap().max_abs_diff(&t.lt) < 1e-15);
}

#[test]
fn input_order_matters() {
    let cfg = tiny(2, 2, 3);
    let model = jittered(cfg.clone(), 6);
    let win = random_window(&cfg, 1, 7);
    let mut rev = win.clone();
    rev.inputs.reverse();
    rev.meteo.reverse();
    let a = model.predict(&win).unwrap();
    let b = model.predict(&rev).unwrap();
    assert!(a[0].max_abs_diff(&b[0]) > 1e-6);
}

#[test]
fn ablations_change_the_parameter_set() {
    let full = CstnConfig::small(2, 2);
    let names = |c: &CstnConfig| -> Vec<String> { c.param_shapes().into_iter().map(|(n, _)| n).collect() };
    let has = |c: &CstnConfig, p: &str| names(c).iter().any(|n| n.starts_with(p));
    assert!(has(&full, "tec.lstm") && has(&full, "gcc.sim") && has(&full, "lsc.dest") && has(&full, "tec.mlp"));
    assert!(!has(&CstnConfig { tec_enabled: false, ..full.clone() }, "tec.lstm"));
    assert!(!has(&CstnConfig { gcc_enabled: false, ..full.clone() }, "gcc.sim"));
    assert!(!has(&CstnConfig { destination_view_enabled: false, ..full.clone() }, "lsc.dest"));
    assert!(!has(&CstnConfig { meteo_enabled: false, ..full.clone() }, "tec.mlp"));
    for cfg in [
        CstnConfig { tec_enabled: false, ..full.clone() },
        CstnConfig { gcc_enabled: false, ..full.clone() },
        CstnConfig { destination_view_enabled: false, ..full.clone() },
        CstnConfig { meteo_enabled: false, ..full.clone() },
    ] {
        let model = jittered(cfg.clone(), 8);
        let p = model.predict(&random_window(&cfg, 1, 9)).unwrap();
        assert_eq!(p[0].shape(), &[4, 2, 2]);
    }
}

#[test]
fn rejects_wrong_window_or_parameters() {
    let cfg = tiny(2, 2, 2);
    let model = jittered(cfg.clone(), 1);
    let other = tiny(2, 2, 3);
    assert!(model.predict(&random_window(&other, 1, 0)).is_err());
    let mut params = model.params.clone();
    params.insert("extra.w", Tensor::zeros([1]));
    assert!(Cstn::check_params(&cfg, &params).is_err());
    assert!(Cstn::check_params(&tiny(2, 3, 2), &model.params).is_err());
}

/// Per-element scalar peephole LSTM on a 1×1 grid, where a 3×3 "same"
/// convolution reduces to its centre tap.
#[test]
fn convlstm_matches_scalar_cell_on_single_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (cin, l) = (3, 2);
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    for _ in 0..20 {
        let mut params = ParamGroup::new();
        params.insert("cell.w_x", uniform(&[4 * l, cin, 3, 3], -1.0, 1.0, &mut rng));
        params.insert("cell.w_h", uniform(&[4 * l, l, 3, 3], -1.0, 1.0, &mut rng));
        params.insert("cell.b", uniform(&[4 * l], -1.0, 1.0, &mut rng));
        for p in ["w_ci", "w_cf", "w_co"] {
            params.insert(format!("cell.{p}"), uniform(&[l, 1, 1], -1.0, 1.0, &mut rng));
        }
        let x = uniform(&[cin, 1, 1], -1.0, 1.0, &mut rng);
        let h0 = uniform(&[l, 1, 1], -1.0, 1.0, &mut rng);
        let c0 = uniform(&[l, 1, 1], -1.0, 1.0, &mut rng);

        let mut ctx = Ctx::new(&params);
        let xv = ctx.graph.input(x.clone());
        let state = LstmState {
            h: ctx.graph.input(h0.clone()),
            c: ctx.graph.input(c0.clone()),
        };
        let out = convlstm_step(&mut ctx, "cell", xv, &state).unwrap();

        let p = |n: &str| params.value(n).unwrap();
        let pre = |gate: usize, ch: usize| {
            let row = gate * l + ch;
            let mut s = p("cell.b").data()[row];
            for k in 0..cin {
                s += p("cell.w_x").get(&[row, k, 1, 1]) * x.data()[k];
            }
            for k in 0..l {
                s += p("cell.w_h").get(&[row, k, 1, 1]) * h0.data()[k];
            }
            s
        };
        for ch in 0..l {
            let c_prev = c0.data()[ch];
            let i = sig(pre(0, ch) + p("cell.w_ci").data()[ch] * c_prev);
            let f = sig(pre(1, ch) + p("cell.w_cf").data()[ch] * c_prev);
            let c = f * c_prev + i * pre(2, ch).tanh();
            let o = sig(pre(3, ch) + p("cell.w_co").data()[ch] * c);
            let h = o * c.tanh();
            assert!((ctx.value(out.c).data()[ch] - c).abs() < 1e-12);
            assert!((ctx.value(out.h).data()[ch] - h).abs() < 1e-12);
        }
    }
}

fn saturate(params: &mut ParamGroup, prefix: &str, l: usize, gates: &[(usize, f64)]) {
    let b = params.value_mut(&format!("{prefix}.b")).unwrap();
    for &(gate, value) in gates {
        for ch in 0..l {
            b.data_mut()[gate * l + ch] = value;
        }
    }
}

/// With the encoder output gate open and the decoder holding its cell
/// (forget open, input closed, output open), one decoder step reproduces the
/// encoder hidden state, so a one-step L-CSTN equals CSTN with the shared
/// parameters.
#[test]
fn one_step_decoder_reduces_to_cstn() {
    let base = tiny(2, 3, 3);
    let l = base.lstm_channels;
    let mut long = jittered(base.clone().long_term(1), 21);
    saturate(&mut long.params, "tec.lstm", l, &[(3, 40.0)]);
    saturate(&mut long.params, "dec.lstm", l, &[(0, -40.0), (1, 40.0), (3, 40.0)]);
    for p in ["w_ci", "w_cf", "w_co"] {
        for prefix in ["tec.lstm", "dec.lstm"] {
            long.params.value_mut(&format!("{prefix}.{p}")).unwrap().scale(0.0);
        }
    }
    let mut short = ParamGroup::new();
    for (name, slot) in long.params.iter().filter(|(n, _)| !n.starts_with("dec.")) {
        short.insert(name, slot.value.clone());
    }
    let short = Cstn { config: base.clone(), params: short };
    Cstn::check_params(&short.config, &short.params).unwrap();

    let win = random_window(&base, 1, 22);
    let a = long.predict(&win).unwrap();
    let b = short.predict(&win).unwrap();
    assert_eq!(a.len(), 1);
    assert!(a[0].max_abs_diff(&b[0]) < 1e-12, "{}", a[0].max_abs_diff(&b[0]));
}

#[test]
fn long_term_predicts_every_horizon_step() {
    let cfg = tiny(2, 2, 2).long_term(3);
    let model = jittered(cfg.clone(), 3);
    let p = model.predict(&random_window(&cfg, 3, 4)).unwrap();
    assert_eq!(p.len(), 3);
    assert!(p[0].max_abs_diff(&p[2]) > 1e-9);
}

fn check_model(cfg: CstnConfig, seed: u64) {
    let m = cfg.horizon;
    let model = jittered(cfg.clone(), seed);
    let win = random_window(&cfg, m, seed + 1);
    let report = gradient_check(&model.params, |ctx| model.loss_graph(ctx, &win), 1e-4, 4).unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
    assert!(report.checked > 40);
}

#[test]
fn gradients_match_finite_differences() {
    check_model(tiny(3, 2, 2), 30);
}

#[test]
fn ablated_gradients_match_finite_differences() {
    check_model(CstnConfig { tec_enabled: false, ..tiny(2, 2, 2) }, 31);
    check_model(CstnConfig { gcc_enabled: false, meteo_enabled: false, ..tiny(2, 2, 2) }, 32);
    check_model(CstnConfig { destination_view_enabled: false, ..tiny(2, 2, 2) }, 33);
}

#[test]
fn long_term_gradients_match_finite_differences() {
    check_model(tiny(2, 2, 2).long_term(2), 34);
}

#[test]
fn init_opens_forget_gates_only() {
    let cfg = CstnConfig { long_term: true, ..tiny(3, 2, 2) };
    let model = Cstn::init(cfg.clone(), 5).unwrap();
    let l = cfg.lstm_channels;
    for prefix in ["tec.lstm", "dec.lstm"] {
        let b = model.params.value(&format!("{prefix}.b")).unwrap().data();
        for (k, &v) in b.iter().enumerate() {
            assert_eq!(v, if (l..2 * l).contains(&k) { 1.0 } else { 0.0 }, "{prefix}.b[{k}]");
        }
    }
    assert!(model.params.value("gcc.head.b").unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn calibrated_output_starts_at_target_mean() {
    let cfg = tiny(3, 2, 2);
    let n = cfg.regions();
    let window = |fill: f64| {
        let mut w = random_window(&cfg, 1, 3);
        w.targets = vec![std::sync::Arc::new(Tensor::full([n, 3, 2], fill))];
        w
    };
    let mut model = Cstn::init(cfg.clone(), 4).unwrap();
    model.params.value_mut("gcc.head.w").unwrap().data_mut().fill(0.0);
    model.calibrate_output(&[window(-0.8), window(-0.6)]).unwrap();
    let out = model.predict(&window(0.0)).unwrap();
    assert!(out[0].data().iter().all(|v| (v + 0.7).abs() < 1e-12));

    model.calibrate_output(&[window(-1.0)]).unwrap();
    assert!(model.params.value("gcc.head.b").unwrap().all_finite());
    assert!(model.calibrate_output(&[]).is_err());
}
