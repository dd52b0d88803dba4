use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cstn");

/// A 3×2 city with a tiny model so the full pipeline runs in seconds.
const CONFIG: &str = "\
grid_h = 3
grid_w = 2
test_days = 1
synth_days = 3
synth_mean_rate = 20
n_steps = 2
lsc_layers = 1
lsc_channels = 4
fuse_channels = 4
lstm_channels = 4
lt_channels = 6
sim_channels = 4
meteo_hidden_1 = 4
meteo_hidden_2 = 4
meteo_embed = 2
batch_size = 16
learning_rate = 1e-3
epochs = 2
checkpoint_every = 1
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(["--config", "run.conf"])
        .args(args)
        .output()
        .expect("spawn cstn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn assert_ok(out: &Output) {
    assert_eq!(
        code(out),
        0,
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.conf"), CONFIG).unwrap();
    dir
}

fn read(dir: &Path, rel: &str) -> String {
    fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn full_pipeline() {
    let tmp = setup();
    let dir = tmp.path();
    assert_ok(&run(dir, &["synth"]));
    assert!(dir.join("dataset.bin").is_file());
    assert_ok(&run(dir, &["train"]));
    assert!(dir.join("model.ckpt").is_file());
    let loss = read(dir, "out/loss.csv");
    assert_eq!(loss.lines().next(), Some("epoch,lr,loss"));
    assert_eq!(loss.lines().count(), 3);

    // resuming a finished run trains nothing and keeps the checkpoint
    let before = fs::read(dir.join("model.ckpt")).unwrap();
    assert_ok(&run(dir, &["--set", "resume=true", "train"]));
    assert_eq!(fs::read(dir.join("model.ckpt")).unwrap(), before);
    assert_ok(&run(dir, &["--set", "resume=true", "--set", "epochs=3", "train"]));
    assert_eq!(read(dir, "out/loss.csv").lines().count(), 4);

    let out = run(dir, &["evaluate"]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("OD-MAPE"));
    let metrics = read(dir, "out/metrics-cstn.csv");
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("subset,mode,mape,rmse,entries"));
    assert!(lines.any(|l| l.starts_with("all,od,")));

    assert_ok(&run(dir, &["--set", "predict_count=2", "predict"]));
    let preds = read(dir, "out/predictions.csv");
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("interval,origin_i,origin_j,dest_i,dest_j,value"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert!(!rows.is_empty() && rows.len() <= 2 * 36);
    for r in &rows {
        assert_eq!(r.len(), 6);
        assert!(r[1].parse::<usize>().unwrap() < 3 && r[2].parse::<usize>().unwrap() < 2);
        assert!(r[3].parse::<usize>().unwrap() < 3 && r[4].parse::<usize>().unwrap() < 2);
        assert_ne!(r[5].parse::<f64>().unwrap(), 0.0);
    }

    for b in ["ha-all", "ha-rec", "olsr", "mlp"] {
        assert_ok(&run(dir, &["--set", &format!("baseline={b}"), "baseline"]));
        assert!(read(dir, &format!("out/metrics-{b}.csv")).starts_with("subset,mode,mape,rmse,entries"));
    }

    for cmd in ["synth", "train", "evaluate", "predict", "baseline"] {
        let m = read(dir, &format!("out/manifest-{cmd}.txt"));
        assert!(m.contains("status = ok"), "{cmd}: {m}");
        assert!(m.contains("config.grid_h = 3"), "{cmd}: {m}");
    }
    assert!(read(dir, "out/manifest-train.txt").contains("output.checkpoint = model.ckpt sha256:"));
}

#[test]
fn runs_are_deterministic() {
    let a = setup();
    let b = setup();
    for dir in [a.path(), b.path()] {
        assert_ok(&run(dir, &["synth"]));
        assert_ok(&run(dir, &["train"]));
    }
    assert_eq!(fs::read(a.path().join("dataset.bin")).unwrap(), fs::read(b.path().join("dataset.bin")).unwrap());
    assert_eq!(fs::read(a.path().join("model.ckpt")).unwrap(), fs::read(b.path().join("model.ckpt")).unwrap());
}

#[test]
fn config_errors_exit_2() {
    let tmp = setup();
    let dir = tmp.path();
    assert_eq!(code(&run(dir, &["--set", "no_such_key=1", "synth"])), 2);
    assert_eq!(code(&run(dir, &["--set", "epochs", "synth"])), 2);
    assert_eq!(code(&run(dir, &["--set", "grid_h=zero", "synth"])), 2);
    fs::write(dir.join("dup.conf"), "epochs = 1\nepochs = 2\n").unwrap();
    let out = Command::new(BIN).current_dir(dir).args(["--config", "dup.conf", "synth"]).output().unwrap();
    assert_eq!(code(&out), 2);

    // a checkpoint trained on another grid
    assert_ok(&run(dir, &["synth"]));
    assert_ok(&run(dir, &["--set", "epochs=1", "train"]));
    assert_ok(&run(dir, &["--set", "grid_h=2", "--set", "dataset=other.bin", "synth"]));
    let out = run(dir, &["--set", "dataset=other.bin", "evaluate"]);
    assert_eq!(code(&out), 2);
    assert!(read(dir, "out/manifest-evaluate.txt").contains("exit_code = 2"));
}

#[test]
fn missing_inputs_exit_3() {
    let tmp = setup();
    let dir = tmp.path();
    assert_eq!(code(&run(dir, &["train"])), 3);
    assert!(read(dir, "out/manifest-train.txt").contains("status = missing-input"));
    assert_eq!(code(&run(dir, &["--set", "trips=t.csv", "--set", "meteo=m.csv", "ingest"])), 3);
    let out = Command::new(BIN).current_dir(dir).args(["--config", "absent.conf", "synth"]).output().unwrap();
    assert_eq!(code(&out), 3);
    assert_ok(&run(dir, &["synth"]));
    assert_eq!(code(&run(dir, &["evaluate"])), 3);
}

#[test]
fn corrupt_artifacts_exit_4() {
    let tmp = setup();
    let dir = tmp.path();
    assert_ok(&run(dir, &["synth"]));
    assert_ok(&run(dir, &["--set", "epochs=1", "train"]));
    let mut ck = fs::read(dir.join("model.ckpt")).unwrap();
    let mid = ck.len() / 2;
    ck[mid] ^= 0x40;
    fs::write(dir.join("flipped.ckpt"), &ck).unwrap();
    assert_eq!(code(&run(dir, &["--set", "checkpoint=flipped.ckpt", "evaluate"])), 4);

    let ds = fs::read(dir.join("dataset.bin")).unwrap();
    fs::write(dir.join("short.bin"), &ds[..ds.len() - 9]).unwrap();
    assert_eq!(code(&run(dir, &["--set", "dataset=short.bin", "baseline"])), 4);

    fs::write(dir.join("trips.csv"), "not,a,trip,file\n1,2,3,4\n").unwrap();
    fs::write(dir.join("meteo.csv"), "").unwrap();
    let out = run(dir, &["--set", "trips=trips.csv", "--set", "meteo=meteo.csv", "ingest"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ingests_csv_files() {
    let tmp = setup();
    let dir = tmp.path();
    let mut trips = String::from("pickup_datetime,pickup_longitude,pickup_latitude,dropoff_longitude,dropoff_latitude\n");
    let mut meteo = String::from("datetime,temp_c,windchill_c,humidity_pct,visibility_km,wind_kmh,precip_mm,condition\n");
    for day in 6..8 {
        for slot in 0..48 {
            let (h, m) = (slot / 2, (slot % 2) * 30);
            let t = format!("2014-01-{day:02} {h:02}:{m:02}:00");
            trips.push_str(&format!("{t},-73.99,40.75,-73.95,40.80\n"));
            trips.push_str(&format!("{t},-73.93,40.85,-73.99,40.72\n"));
            meteo.push_str(&format!("{t},{}.5,,60,10,12,0,Clear\n", slot % 10));
        }
    }
    trips.push_str("2014-01-06 10:10:00,-80.0,40.75,-73.95,40.80\n");
    fs::write(dir.join("trips.csv"), trips).unwrap();
    fs::write(dir.join("meteo.csv"), meteo).unwrap();
    let out = run(dir, &["--set", "trips=trips.csv", "--set", "meteo=meteo.csv", "ingest"]);
    assert_ok(&out);
    let m = read(dir, "out/manifest-ingest.txt");
    assert!(m.contains("note.trips_binned = 192"), "{m}");
    assert!(m.contains("note.trips_out_of_bounds = 1"), "{m}");
    assert_ok(&run(dir, &["--set", "baseline=ha-rec", "baseline"]));
}
