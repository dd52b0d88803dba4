use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cstn_core::baselines::{BaselineKind, HaAll, HaRec, MlpBaseline, Olsr};
use cstn_core::data::{
    cache, ingest, make_windows, read_meteo_csv, read_trips_csv, synth_generate, Dataset, Direction, IngestOptions,
    NormalizedSeries, SampleWindow,
};
use cstn_core::eval::{
    collect_forecasts, render_table, report_all, standard_reports, write_csv, Forecaster, MetricsReport,
};
use cstn_core::model::Cstn;
use cstn_core::tensor::Tensor;
use cstn_core::train::{train_until, Checkpoint, EpochReport, Objective, TrainConfig, TrainState};
use cstn_core::Error;

use crate::config::RunConfig;
use crate::failure::{Failure, Kind};
use crate::manifest::Manifest;

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub manifest: &'a mut Manifest,
    pub out_dir: PathBuf,
}

fn load_dataset(ctx: &mut Ctx) -> Result<Dataset, Failure> {
    let path = ctx.cfg.input_path("dataset")?;
    ctx.manifest.input("dataset", &path);
    Ok(cache::load(&path)?)
}

/// Checkpoint plus the dataset, re-normalized with the checkpoint's
/// statistics so inputs are scaled the way the model was trained.
fn load_model(ctx: &mut Ctx, ds: &mut Dataset) -> Result<Cstn, Failure> {
    let path = ctx.cfg.input_path("checkpoint")?;
    ctx.manifest.input("checkpoint", &path);
    let ck = Checkpoint::load(&path)?;
    let mc = &ck.model.config;
    if (mc.h, mc.w) != (ds.grid.h, ds.grid.w) {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint is for a {}×{} grid, dataset has {}×{}",
            mc.h, mc.w, ds.grid.h, ds.grid.w
        ))
        .into());
    }
    ds.norm = ck.norm.clone();
    Ok(ck.model)
}

fn test_windows(ds: &Dataset, series: &NormalizedSeries, n: usize, m: usize) -> Result<Vec<SampleWindow>, Failure> {
    let w = make_windows(series, ds.train_len..ds.len(), n, m);
    if w.is_empty() {
        return Err(Failure::config(format!(
            "test split of {} intervals is too short for {n} inputs and {m} targets",
            ds.len() - ds.train_len
        )));
    }
    Ok(w)
}

fn train_windows(ds: &Dataset, series: &NormalizedSeries, n: usize, m: usize) -> Result<Vec<SampleWindow>, Failure> {
    let w = make_windows(series, 0..ds.train_len, n, m);
    if w.is_empty() {
        return Err(Failure::config(format!(
            "training split of {} intervals is too short for {n} inputs and {m} targets",
            ds.train_len
        )));
    }
    Ok(w)
}

fn save_dataset(ctx: &mut Ctx, ds: &Dataset) -> Result<(), Failure> {
    let path = ctx.cfg.path("dataset")?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    cache::save(ds, &path)?;
    ctx.manifest.output("dataset", &path);
    ctx.manifest.note("intervals", ds.len());
    ctx.manifest.note("train_intervals", ds.train_len);
    say!(
        "wrote {} ({} intervals, {} for training, {}x{} grid)",
        path.display(),
        ds.len(),
        ds.train_len,
        ds.grid.h,
        ds.grid.w
    );
    Ok(())
}

/// An input file that exists but cannot be read as the expected CSV.
fn malformed(path: &Path, e: Error) -> Failure {
    match e {
        Error::Io(e) => e.into(),
        e => Failure::new(Kind::Corrupt, format!("{}: {e}", path.display())),
    }
}

pub fn ingest_cmd(ctx: &mut Ctx) -> Result<(), Failure> {
    let trips_path = ctx.cfg.input_path("trips")?;
    let meteo_path = ctx.cfg.input_path("meteo")?;
    ctx.manifest.input("trips", &trips_path);
    ctx.manifest.input("meteo", &meteo_path);
    let opts = IngestOptions {
        grid: ctx.cfg.grid()?,
        interval_minutes: ctx.cfg.get("interval_minutes")?,
        test_days: ctx.cfg.get("test_days")?,
        vocab: ctx.cfg.vocab()?,
    };
    let offset = ctx.cfg.get("time_offset_minutes")?;
    let (trips, read) = read_trips_csv(File::open(&trips_path)?, offset).map_err(|e| malformed(&trips_path, e))?;
    let meteo = read_meteo_csv(File::open(&meteo_path)?).map_err(|e| malformed(&meteo_path, e))?;
    let (ds, binned) = ingest(&trips, &meteo, &opts)?;
    say!(
        "read {} trip rows ({} bad timestamps, {} bad coordinates); binned {} trips, {} outside the grid",
        read.rows, read.bad_timestamp, read.bad_coordinate, binned.counted, binned.out_of_bounds
    );
    ctx.manifest.note("trip_rows", read.rows);
    ctx.manifest.note("trips_binned", binned.counted);
    ctx.manifest.note("trips_out_of_bounds", binned.out_of_bounds);
    ctx.manifest.note("meteo_rows", meteo.len());
    save_dataset(ctx, &ds)
}

pub fn synth_cmd(ctx: &mut Ctx) -> Result<(), Failure> {
    let (params, intervals) = ctx.cfg.synth()?;
    let grid = ctx.cfg.grid()?;
    let synth = synth_generate(ctx.cfg.get("seed")?, grid, intervals, &params)?;
    save_dataset(ctx, &synth.dataset)
}

fn loss_log(path: &Path, append: bool) -> Result<BufWriter<File>, Failure> {
    let fresh = !append || !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)?;
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "epoch,lr,loss")?;
    }
    Ok(w)
}

/// Trains in chunks, calling `save` after each chunk and at the end.
fn train_in_chunks<M: Objective>(
    model: &mut M,
    windows: &[M::Sample],
    tc: &TrainConfig,
    state: &mut TrainState,
    every: usize,
    log: &mut BufWriter<File>,
    mut save: impl FnMut(&M, &TrainState) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let mut io_err = None;
    let mut sink = |r: &EpochReport| {
        say!("epoch {:>4}  lr {:.2e}  loss {:.6}", r.epoch + 1, r.lr, r.mean_loss);
        if let Err(e) = writeln!(log, "{},{},{}", r.epoch + 1, r.lr, r.mean_loss) {
            io_err.get_or_insert(e);
        }
    };
    while state.epoch < tc.epochs {
        let chunk = TrainConfig {
            epochs: (state.epoch + every.max(1)).min(tc.epochs),
            ..tc.clone()
        };
        train_until(model, windows, &chunk, state, &mut sink)?;
        save(model, state)?;
    }
    if let Some(e) = io_err {
        return Err(e.into());
    }
    log.flush()?;
    Ok(())
}

pub fn train_cmd(ctx: &mut Ctx) -> Result<(), Failure> {
    let ds = load_dataset(ctx)?;
    let mc = ctx.cfg.model(ds.grid.h, ds.grid.w)?;
    let tc = ctx.cfg.train()?;
    let ck_path = ctx.cfg.path("checkpoint")?;
    let series = NormalizedSeries::from_dataset(&ds)?;
    let windows = train_windows(&ds, &series, mc.n_steps, mc.horizon)?;

    let resume = ctx.cfg.flag("resume")? && ck_path.is_file();
    let (mut model, mut state) = if resume {
        ctx.manifest.input("resumed_from", &ck_path);
        let ck = Checkpoint::load(&ck_path)?;
        if ck.model.config != mc {
            return Err(Error::ConfigMismatch("checkpoint architecture differs from the configured model".into()).into());
        }
        if ck.norm != ds.norm {
            return Err(Error::ConfigMismatch("checkpoint was trained on a different dataset".into()).into());
        }
        say!("resuming after epoch {}", ck.epoch);
        let state = ck.resume_state();
        (ck.model, state)
    } else {
        let mut model = Cstn::init(mc, tc.seed)?;
        model.calibrate_output(&windows)?;
        (model, TrainState::new(tc.seed))
    };
    say!(
        "training on {} windows, {} parameters, epochs {}..{}",
        windows.len(),
        model.params.num_scalars(),
        state.epoch + 1,
        tc.epochs
    );
    ctx.manifest.note("train_windows", windows.len());
    ctx.manifest.note("parameters", model.params.num_scalars());

    let log_path = ctx.out_dir.join("loss.csv");
    let mut log = loss_log(&log_path, resume)?;
    if let Some(parent) = ck_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let norm = ds.norm.clone();
    let every: usize = ctx.cfg.get("checkpoint_every")?;
    let result = train_in_chunks(&mut model, &windows, &tc, &mut state, every, &mut log, |m, st| {
        Checkpoint::new(m.clone(), norm.clone(), tc.clone(), st).save(&ck_path)?;
        Ok(())
    });
    ctx.manifest.output("loss", &log_path);
    ctx.manifest.note("epochs_completed", state.epoch);
    if ck_path.is_file() {
        ctx.manifest.output("checkpoint", &ck_path);
    }
    result?;
    say!("wrote {}", ck_path.display());
    Ok(())
}

/// Prediction of the `step`-th target of a multi-interval model.
struct StepForecast<'a> {
    model: &'a Cstn,
    step: usize,
}

impl Forecaster for StepForecast<'_> {
    fn name(&self) -> String {
        format!("{}@{}", self.model.name(), self.step + 1)
    }

    fn forecast(&self, window: &SampleWindow) -> cstn_core::Result<Tensor> {
        Ok(self.model.predict(window)?.swap_remove(self.step))
    }
}

pub fn predict_cmd(ctx: &mut Ctx) -> Result<(), Failure> {
    let mut ds = load_dataset(ctx)?;
    let model = load_model(ctx, &mut ds)?;
    let cfg = &model.config;
    let series = NormalizedSeries::from_dataset(&ds)?;
    let windows = test_windows(&ds, &series, cfg.n_steps, cfg.horizon)?;
    let from: usize = ctx.cfg.get("predict_from")?;
    let count: usize = ctx.cfg.get("predict_count")?;
    if from >= windows.len() || count == 0 {
        return Err(Failure::config(format!(
            "predict_from = {from}, predict_count = {count}: the test split has {} windows",
            windows.len()
        )));
    }
    let chosen = &windows[from..(from + count).min(windows.len())];
    let path = ctx.out_dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["interval", "origin_i", "origin_j", "dest_i", "dest_j", "value"])?;
    let n = ds.grid.regions();
    let mut rows = 0usize;
    for win in chosen {
        for (k, pred) in model.predict(win)?.iter().enumerate() {
            if !pred.all_finite() {
                return Err(Error::NonFinite(format!("prediction for interval {}", win.target_index(k))).into());
            }
            let counts = ds.norm.normalize(pred, Direction::Inverse)?;
            let interval = win.target_index(k).to_string();
            for o in 0..n {
                let (oi, oj) = ds.grid.region_cell(o);
                for d in 0..n {
                    let value = format!("{:.6}", counts.data()[d * n + o]);
                    if value.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                        continue;
                    }
                    let (di, dj) = ds.grid.region_cell(d);
                    w.write_record([
                        interval.as_str(),
                        &oi.to_string(),
                        &oj.to_string(),
                        &di.to_string(),
                        &dj.to_string(),
                        &value,
                    ])?;
                    rows += 1;
                }
            }
        }
    }
    w.flush()?;
    ctx.manifest.output("predictions", &path);
    ctx.manifest.note("rows", rows);
    say!("wrote {} rows to {}", rows, path.display());
    Ok(())
}

fn emit_reports(ctx: &mut Ctx, name: &str, reports: &[MetricsReport]) -> Result<(), Failure> {
    let path = ctx.out_dir.join(format!("metrics-{name}.csv"));
    write_csv(reports, File::create(&path)?)?;
    ctx.manifest.output("metrics", &path);
    say!("{name}:");
    say!("{}", render_table(reports).trim_end_matches('\n'));
    say!("wrote {}", path.display());
    Ok(())
}

fn train_tensors(ds: &Dataset) -> Vec<Tensor> {
    ds.train().iter().map(|iv| iv.counts.clone()).collect()
}

pub fn evaluate_cmd(ctx: &mut Ctx) -> Result<(), Failure> {
    let mut ds = load_dataset(ctx)?;
    let model = load_model(ctx, &mut ds)?;
    let threshold: f64 = ctx.cfg.get("threshold")?;
    let k = ctx.cfg.high_demand_k(ds.grid.regions())?;
    let cfg = &model.config;
    let series = NormalizedSeries::from_dataset(&ds)?;
    let windows = test_windows(&ds, &series, cfg.n_steps, cfg.horizon)?;
    let set = collect_forecasts(&model, &ds, &windows)?;
    let mut reports = standard_reports(&set, &train_tensors(&ds), k, threshold)?;
    for step in 1..cfg.horizon {
        let f = StepForecast { model: &model, step };
        let mut set = collect_forecasts(&f, &ds, &windows)?;
        // ground truth of the step-th target
        for (g, w) in set.gts.iter_mut().zip(&windows) {
            *g = ds.intervals[w.target_index(step)].counts.clone();
        }
        reports.push(report_all(&format!("all-step{}", step + 1), &set.preds, &set.gts, threshold)?);
    }
    ctx.manifest.note("test_windows", windows.len());
    emit_reports(ctx, &model.name(), &reports)
}

pub fn baseline_cmd(ctx: &mut Ctx) -> Result<(), Failure> {
    let kind: BaselineKind = ctx.cfg.raw("baseline").parse()?;
    let ds = load_dataset(ctx)?;
    let n: usize = ctx.cfg.get("n_steps")?;
    let threshold: f64 = ctx.cfg.get("threshold")?;
    let k = ctx.cfg.high_demand_k(ds.grid.regions())?;
    let series = NormalizedSeries::from_dataset(&ds)?;
    let train = train_windows(&ds, &series, n, 1)?;
    let test = test_windows(&ds, &series, n, 1)?;
    ctx.manifest.note("baseline", kind);
    let forecaster: Box<dyn Forecaster> = match kind {
        BaselineKind::HaAll => Box::new(HaAll::from_series(&series, 0..ds.train_len, ds.interval_minutes)?),
        BaselineKind::HaRec => Box::new(HaRec { n }),
        BaselineKind::Olsr => Box::new(Olsr::fit(&train, n, &ds.norm, ctx.cfg.get("olsr_jitter")?)?),
        BaselineKind::Mlp => {
            let tc = ctx.cfg.train()?;
            let mut mlp = MlpBaseline::init(n, ds.grid.h, ds.grid.w, tc.seed)?;
            let mut state = TrainState::new(tc.seed);
            let log_path = ctx.out_dir.join("loss-mlp.csv");
            let mut log = loss_log(&log_path, false)?;
            let every = tc.epochs;
            let result = train_in_chunks(&mut mlp, &train, &tc, &mut state, every, &mut log, |_, _| Ok(()));
            ctx.manifest.output("loss", &log_path);
            result?;
            Box::new(mlp)
        }
    };
    let set = collect_forecasts(forecaster.as_ref(), &ds, &test)?;
    let reports = standard_reports(&set, &train_tensors(&ds), k, threshold)?;
    emit_reports(ctx, kind.as_str(), &reports)
}

