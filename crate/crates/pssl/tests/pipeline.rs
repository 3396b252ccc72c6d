use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use pssl::dataset::{generate_dataset, ingest_recorded, DatasetProfile, GEOMETRY_FILE};
use pssl::experiments::{independence_report, LoadedSet};
use pssl::manifest::{read_manifest, write_geometry, GeometryRecord, Manifest};
use pssl::wav::read_canonical;
use pssl_core::scene::{MetadataMask, Split};
use pssl_core::signal::StftConfig;

fn pssl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pssl")).args(args).output().expect("binary runs")
}

fn tiny(profile: &str, counts: [usize; 3], seed: u64, dir: &Path) -> Manifest {
    let mut p = DatasetProfile::named(profile, seed).unwrap();
    p.counts = counts;
    generate_dataset(&p, dir).unwrap()
}

#[test]
fn named_profiles_have_the_expected_splits() {
    assert_eq!(DatasetProfile::named("anechoic", 0).unwrap().counts, [10_000, 2_500, 2_500]);
    assert_eq!(DatasetProfile::named("toy-reverberant", 0).unwrap().counts, [2000, 500, 500]);
    assert!(DatasetProfile::named("speech", 0).is_err());
}

#[test]
fn generation_is_byte_identical_and_files_match_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = tiny("toy-reverberant", [4, 2, 2], 3, a.path());
    tiny("toy-reverberant", [4, 2, 2], 3, b.path());
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "manifest.jsonl"), read(b.path(), "manifest.jsonl"));
    let listed: HashSet<String> = ma.records.iter().map(|r| r.audio.clone()).collect();
    let on_disk: HashSet<String> =
        fs::read_dir(a.path().join("audio")).unwrap().map(|e| format!("audio/{}", e.unwrap().file_name().to_string_lossy())).collect();
    assert_eq!(listed, on_disk);
    for r in &ma.records {
        assert_eq!(read(a.path(), &r.audio), read(b.path(), &r.audio));
        let audio = read_canonical(&ma.audio_path(r)).unwrap();
        assert_eq!((audio.num_channels(), audio.len()), (4, 8000));
        assert!(r.room.rt60 >= 0.3 && r.room.rt60 <= 0.6);
    }
    assert_eq!(ma.split(Split::Train).len(), 4);
    assert_eq!(ma.split(Split::Test).len(), 2);
}

#[test]
fn features_have_the_network_input_shape() {
    let d = tempfile::tempdir().unwrap();
    let m = tiny("toy-anechoic", [3, 1, 1], 1, d.path());
    let set = LoadedSet::load(&m, &StftConfig::default(), 8000).unwrap();
    assert_eq!(set.data.sample_shape, [8, 14, 513]);
    assert_eq!(set.data.metadata_dim, 11);
    let only_rt60 = set.masked(&MetadataMask::groups(4, false, false, true)).unwrap();
    assert_eq!(only_rt60.metadata, vec![0.0; 5]);
    let mics = set.masked(&MetadataMask::groups(4, true, false, false)).unwrap();
    assert_eq!(mics.metadata_dim, 8);
    assert_eq!(mics.metadata[..8], set.data.metadata[..8]);
}

#[test]
fn splits_are_independent_and_duplicates_are_flagged() {
    let d = tempfile::tempdir().unwrap();
    let m = tiny("toy-anechoic", [30, 2, 10], 4, d.path());
    let train = m.split(Split::Train);
    let mut test = m.split(Split::Test);
    let r = independence_report(&test, &train, 0.05).unwrap();
    assert!(r.samples.iter().all(|s| s.1 > 0.0));
    assert!(r.duplicates.is_empty());
    assert_eq!(r.histogram.counts.iter().sum::<usize>(), 10);

    let mut dup = train.records[7].clone();
    dup.id = "test-injected".into();
    dup.split = "test".into();
    test.records.push(dup);
    let r = independence_report(&test, &train, 0.05).unwrap();
    assert_eq!(r.duplicates, vec!["test-injected".to_string()]);

    let empty = Manifest { root: d.path().into(), records: vec![] };
    assert!(independence_report(&empty, &train, 0.05).is_err());
}

#[test]
fn simulated_recordings_ingest_to_the_same_manifest() {
    let d = tempfile::tempdir().unwrap();
    let m = tiny("toy-anechoic", [2, 1, 1], 6, d.path());
    let rec = tempfile::tempdir().unwrap();
    assert!(ingest_recorded(rec.path()).unwrap_err().to_string().contains("geometry"));
    for r in &m.records {
        fs::copy(m.audio_path(r), rec.path().join(format!("{}.wav", r.id))).unwrap();
    }
    let geo: Vec<GeometryRecord> = m.records.iter().map(GeometryRecord::from).collect();
    write_geometry(&rec.path().join(GEOMETRY_FILE), &geo).unwrap();
    let ing = ingest_recorded(rec.path()).unwrap();
    assert_eq!(ing.len(), m.len());
    for (a, b) in ing.records.iter().zip(&m.records) {
        assert_eq!(a.scene().unwrap(), b.scene().unwrap());
        assert_eq!(a.split, b.split);
        assert_eq!(a.seed, None);
    }
    let x = LoadedSet::load(&ing, &StftConfig::default(), 8000).unwrap();
    let y = LoadedSet::load(&m, &StftConfig::default(), 8000).unwrap();
    assert_eq!(x.data.metadata_dim, 11);
    assert_eq!(x.data.metadata, y.data.metadata);
    assert_eq!(x.data.features, y.data.features);
    assert_eq!(x.data.targets, y.data.targets);
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(pssl(&["--help"]).status.code(), Some(0));
    assert_eq!(pssl(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(pssl(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pssl(&["generate", "--profile", "toy-anechoic"]).status.code(), Some(2));
    assert_eq!(pssl(&["eval", "--bogus-flag", "1"]).status.code(), Some(2));
}

#[test]
fn independence_command_fails_on_a_duplicate() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path().to_str().unwrap();
    let out = pssl(&["--seed", "2", "generate", "--profile", "toy-anechoic", "--out", dir, "--counts", "6,2,3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hist = d.path().join("hist.csv");
    let train = format!("{dir}/train.jsonl");
    let ok = pssl(&["validate-independence", "--train", &train, "--test", &format!("{dir}/test.jsonl"), "--out", hist.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(d.path().join("hist_samples.csv").is_file());
    let bad = pssl(&["validate-independence", "--train", &train, "--test", &train, "--out", hist.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn toy_pipeline_runs_end_to_end_through_the_cli() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path().to_str().unwrap();
    let run = |args: &[&str]| {
        let out = pssl(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let p = |f: &str| format!("{dir}/{f}");
    run(&["--seed", "5", "generate", "--profile", "toy-reverberant", "--out", dir, "--counts", "6,3,3"]);
    run(&["localize-ls", "--manifest", &p("test.jsonl"), "--heatmap-dir", &p("maps"), "--report", &p("ls.csv")]);
    let report = fs::read_to_string(p("ls.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(report.starts_with("id,x_hat,y_hat,error_m,min_error_s2,peak_sharpness"));
    assert!(Path::new(&p("maps/test-00000.svg")).is_file());
    run(&["heatmap", "--manifest", &p("test.jsonl"), "--id", "test-00001", "--out-dir", &p("one"), "--resolution", "0.05"]);
    assert!(Path::new(&p("one/test-00001.csv")).is_file());

    fs::write(p("cfg.toml"), "[train]\nepochs = 1\nbatch_size = 3\n").unwrap();
    run(&[
        "--seed",
        "1",
        "--config",
        &p("cfg.toml"),
        "train",
        "--train",
        &p("train.jsonl"),
        "--val",
        &p("val.jsonl"),
        "--out",
        &p("m.ckpt"),
        "--epochs",
        "9",
    ]);
    let ck = pssl::checkpoint::load(Path::new(&p("m.ckpt"))).unwrap();
    assert_eq!(ck.state.epochs_done, 1, "config file overrides the flag");
    assert_eq!(ck.train.batch_size, 3);
    run(&["eval", "--ckpt", &p("m.ckpt"), "--manifest", &p("test.jsonl"), "--out", &p("eval.csv"), "--histogram-bin", "0.15"]);
    assert_eq!(fs::read_to_string(p("eval.csv")).unwrap().lines().count(), 4);
    assert!(Path::new(&p("eval_hist.svg")).is_file());
    run(&["sensitivity", "--ckpt", &p("m.ckpt"), "--manifest", &p("test.jsonl"), "--out", &p("sens.csv")]);
    let sens = fs::read_to_string(p("sens.csv")).unwrap();
    assert_eq!(sens.lines().count(), 6);
    assert!(sens.lines().nth(1).unwrap().starts_with("clean,"));
    let m = read_manifest(Path::new(&p("manifest.jsonl"))).unwrap();
    assert_eq!(m.len(), 12);
}
