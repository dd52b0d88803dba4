//! Small, self-contained demos of the forecasting library for a static web
//! page. The plain functions are the API; on `wasm32` they are also exported
//! through `wasm-bindgen`.

use cstn_core::data::{make_windows, synth_generate, GridSpec, NormalizedSeries, SampleWindow, SynthParams};
use cstn_core::model::{Cstn, CstnConfig};
use cstn_core::train::{train_until, TrainConfig, TrainState};

/// Largest grid side the page offers; bigger grids are too slow in a tab.
pub const MAX_SIDE: usize = 6;

const DAY: usize = 48;
const INPUTS: usize = 3;

fn check_grid(h: usize, w: usize) -> Result<(), String> {
    if !(1..=MAX_SIDE).contains(&h) || !(1..=MAX_SIDE).contains(&w) {
        return Err(format!("grid sides must lie in 1..={MAX_SIDE}, got {h}x{w}"));
    }
    Ok(())
}

fn demo_params(days: usize) -> SynthParams {
    SynthParams {
        test_intervals: DAY.min(days * DAY / 2),
        ..SynthParams::default()
    }
}

fn demo_model(h: usize, w: usize) -> CstnConfig {
    CstnConfig {
        n_steps: INPUTS,
        lsc_layers: 2,
        lsc_channels: 4,
        fuse_channels: 8,
        lstm_channels: 8,
        lt_channels: 8,
        sim_channels: 4,
        meteo_hidden: [8, 4],
        meteo_embed: 2,
        ..CstnConfig::standard(h, w)
    }
}

fn windows(seed: u64, h: usize, w: usize, days: usize) -> Result<Vec<SampleWindow>, String> {
    let synth = synth_generate(seed, GridSpec::unit(h, w), days * DAY, &demo_params(days)).map_err(|e| e.to_string())?;
    let series = NormalizedSeries::from_dataset(&synth.dataset).map_err(|e| e.to_string())?;
    Ok(make_windows(&series, 0..synth.dataset.train_len, INPUTS, 1))
}

/// Trip counts of one synthetic half-hour on an `h×w` grid, row-major over
/// cells. With `origin = None` each cell holds its total outgoing demand;
/// otherwise the trips from `origin` to each destination cell.
pub fn demand_map(seed: u64, h: usize, w: usize, interval: usize, origin: Option<usize>) -> Result<Vec<f64>, String> {
    check_grid(h, w)?;
    let n = h * w;
    if interval >= 2 * DAY {
        return Err(format!("interval must lie in 0..{}", 2 * DAY));
    }
    if origin.is_some_and(|o| o >= n) {
        return Err(format!("origin must lie in 0..{n}"));
    }
    let synth = synth_generate(seed, GridSpec::unit(h, w), 2 * DAY, &demo_params(2)).map_err(|e| e.to_string())?;
    let counts = synth.dataset.intervals[interval].counts.data();
    // channel d, position o
    Ok(match origin {
        None => (0..n).map(|o| (0..n).map(|d| counts[d * n + o]).sum()).collect(),
        Some(o) => (0..n).map(|d| counts[d * n + o]).collect(),
    })
}

/// Column-normalized region similarity of a freshly initialized model on a
/// synthetic window; `n×n` row-major, each column sums to one.
pub fn similarity(seed: u64, h: usize, w: usize) -> Result<Vec<f64>, String> {
    check_grid(h, w)?;
    let model = Cstn::init(demo_model(h, w), seed).map_err(|e| e.to_string())?;
    let window = windows(seed, h, w, 2)?.into_iter().nth(DAY / 2).ok_or("no window")?;
    let trace = model.trace(&window).map_err(|e| e.to_string())?;
    Ok(trace.similarity.ok_or("similarity module disabled")?.data().to_vec())
}

/// Mean training loss per epoch of a tiny model on `days` synthetic days.
pub fn training_curve(seed: u64, h: usize, w: usize, days: usize, epochs: usize, lr: f64) -> Result<Vec<f64>, String> {
    check_grid(h, w)?;
    if !(2..=7).contains(&days) || !(1..=200).contains(&epochs) || !(lr > 0.0 && lr < 1.0) {
        return Err("days must lie in 2..=7, epochs in 1..=200 and lr in (0, 1)".into());
    }
    let samples = windows(seed, h, w, days)?;
    let mut model = Cstn::init(demo_model(h, w), seed).map_err(|e| e.to_string())?;
    model.calibrate_output(&samples).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        batch_size: 8,
        base_lr: lr,
        decay_every: epochs,
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(seed);
    let mut losses = Vec::with_capacity(epochs);
    train_until(&mut model, &samples, &cfg, &mut state, &mut |r| losses.push(r.mean_loss)).map_err(|e| e.to_string())?;
    Ok(losses)
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    fn js(e: String) -> JsError {
        JsError::new(&e)
    }

    /// `origin < 0` selects the outgoing-demand map.
    #[wasm_bindgen(js_name = demandMap)]
    pub fn demand_map(seed: u32, h: usize, w: usize, interval: usize, origin: i32) -> Result<Vec<f64>, JsError> {
        let origin = usize::try_from(origin).ok();
        super::demand_map(seed.into(), h, w, interval, origin).map_err(js)
    }

    #[wasm_bindgen]
    pub fn similarity(seed: u32, h: usize, w: usize) -> Result<Vec<f64>, JsError> {
        super::similarity(seed.into(), h, w).map_err(js)
    }

    #[wasm_bindgen(js_name = trainingCurve)]
    pub fn training_curve(seed: u32, h: usize, w: usize, days: usize, epochs: usize, lr: f64) -> Result<Vec<f64>, JsError> {
        super::training_curve(seed.into(), h, w, days, epochs, lr).map_err(js)
    }
}
