use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use affect_cli::report::{PCC_FILES, REPORT_FILE};
use affect_cli::{cmd_extract, cmd_fuse, cmd_report, cmd_train, cmd_validate, CliError, RunConfig, FUSION_DIR, REPORT_DIR, ROW_FILE};
use affect_core::dataio::DatasetManifest;
use affect_core::encoders::{build_encoder, load_encoder, ArchConfig, EncoderConfig, HISTORY_FILE};
use affect_core::metrics::ReportRow;
use affect_core::rng::{rng_from_seed, subseed};
use affect_core::synth::{generate, SynthConfig, MANIFEST_FILE};
use affect_core::Error;

struct Fixture {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    manifest: DatasetManifest,
    configs: Vec<PathBuf>,
    out: PathBuf,
}

fn fixture(epochs: usize) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = generate(
        &data,
        &SynthConfig { n_train: 24, n_val: 24, visual_dim: 6, audio_dim: 10, text_dim: 5, frames: (3, 10), tokens: (2, 5), planted: 2, ..SynthConfig::default() },
    )
    .unwrap();
    let mk = |name: &str, arch: ArchConfig, input_dim: usize| {
        let mut c = EncoderConfig::defaults(name, arch);
        c.input_dim = input_dim;
        c.seq_len = 8;
        c.downsample = 1;
        c.epochs = epochs;
        c.batch_size = 8;
        c
    };
    let cfgs = [
        mk("VisModel2", ArchConfig::VisCnn1d { widths: vec![2, 3], channels: 3, fc_dim: 4 }, 6),
        mk("AudModel2", ArchConfig::AudMlp { hidden: vec![6, 4], select_k: Some(5) }, 10),
    ];
    let configs = cfgs
        .iter()
        .map(|c| {
            let p = tmp.path().join(format!("{}.json", c.name));
            fs::write(&p, serde_json::to_string_pretty(c).unwrap()).unwrap();
            p
        })
        .collect();
    let out = tmp.path().join("run");
    Fixture { data, manifest, configs, out, _tmp: tmp }
}

impl Fixture {
    fn run(&self) -> RunConfig {
        RunConfig {
            manifest: Some(self.data.join(MANIFEST_FILE)),
            out: self.out.clone(),
            encoder_configs: self.configs.clone(),
            ..RunConfig::default()
        }
    }
}

fn sink() -> Vec<u8> {
    Vec::new()
}

/// Relative path → bytes for every file below `dir`.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn validate_reports_clean_dataset() {
    let f = fixture(1);
    let mut out = sink();
    cmd_validate(&f.data.join(MANIFEST_FILE), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("48 records"), "{text}");
    assert!(text.contains("visual"));
    assert!(text.contains("arousal histogram"));
}

#[test]
fn validate_names_out_of_range_record() {
    let f = fixture(1);
    let path = f.data.join(MANIFEST_FILE);
    let victim = f.manifest.records[3].utterance_id.clone();
    let mut m = f.manifest.clone();
    m.records[3].arousal = 1.5;
    affect_core::dataio::write_manifest(&path, &m).unwrap();
    let err = cmd_validate(&path, &mut sink()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains(&victim), "{err}");
}

#[test]
fn validate_names_corrupted_tensor_file() {
    let f = fixture(1);
    let rel = f.manifest.records[5].visual.clone().unwrap();
    let file = f.data.join(&rel);
    let mut bytes = fs::read(&file).unwrap();
    let n = bytes.len();
    bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&file, bytes).unwrap();
    let err = cmd_validate(&f.data.join(MANIFEST_FILE), &mut sink()).unwrap_err();
    assert!(matches!(err, CliError::Core(Error::TensorFile { .. })), "{err:?}");
    assert!(err.to_string().contains(&*rel.to_string_lossy()), "{err}");
}

#[test]
fn train_with_zero_epochs_saves_the_initialization() {
    let f = fixture(0);
    let run = f.run();
    cmd_train(&run, &mut sink()).unwrap();
    for p in &f.configs {
        let cfg: EncoderConfig = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        let enc = load_encoder::<f64>(&run.encoder_dir(&cfg.name)).unwrap();
        let init = build_encoder::<f64>(&cfg, &mut rng_from_seed(subseed(cfg.seed, "init"))).unwrap();
        // checkpoints are single precision
        let init32 = init.params.cast::<f32>().cast::<f64>();
        assert_eq!(enc.model.params, init32, "{}", cfg.name);
    }
}

#[test]
fn history_has_one_row_per_epoch_and_reruns_are_byte_identical() {
    let f = fixture(3);
    let mut run = f.run();
    run.seed = Some(7);
    let mut out = sink();
    cmd_train(&run, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("validation CCC arousal"), "{text}");
    let tsv = fs::read_to_string(run.encoder_dir("VisModel2").join(HISTORY_FILE)).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 3);
    let first = snapshot(&f.out);
    cmd_train(&run, &mut sink()).unwrap();
    assert_eq!(first, snapshot(&f.out));
    run.seed = Some(8);
    cmd_train(&run, &mut sink()).unwrap();
    assert_ne!(first, snapshot(&f.out));
}

#[test]
fn fuse_single_and_pair_and_row_round_trips() {
    let f = fixture(2);
    let mut run = f.run();
    cmd_train(&run, &mut sink()).unwrap();
    run.combinations = vec!["VisModel2+AudModel2".into(), "AudModel2".into()];
    let evals = cmd_fuse(&run, &mut sink()).unwrap();
    assert_eq!(evals.len(), 2);
    assert_eq!(evals[0].row.name, "VisModel2 + AudModel2");
    assert_eq!(evals[0].cross_validation.members, vec!["VisModel2".to_string(), "AudModel2".to_string()]);
    assert_eq!(evals[0].cross_validation.ids.len(), 24);
    let dir = f.out.join(FUSION_DIR).join("VisModel2+AudModel2");
    assert!(dir.join("model.json").is_file());
    let row: ReportRow = serde_json::from_str(&fs::read_to_string(dir.join(ROW_FILE)).unwrap()).unwrap();
    assert_eq!(row, evals[0].row);

    // extracted representations give the same result as the checkpoints
    let before = snapshot(&f.out.join(FUSION_DIR));
    cmd_extract(&run, &[], &mut sink()).unwrap();
    assert!(run.encoder_dir("AudModel2").join("representations_validation.json").is_file());
    cmd_fuse(&run, &mut sink()).unwrap();
    assert_eq!(before, snapshot(&f.out.join(FUSION_DIR)));
}

#[test]
fn fuse_names_missing_member() {
    let f = fixture(1);
    let mut run = f.run();
    cmd_train(&run, &mut sink()).unwrap();
    run.combinations = vec!["VisModel2+TextModel".into()];
    let err = cmd_fuse(&run, &mut sink()).unwrap_err();
    assert!(err.to_string().contains("TextModel"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn report_counts_rows_and_is_idempotent() {
    let f = fixture(2);
    let mut run = f.run();
    cmd_train(&run, &mut sink()).unwrap();
    run.combinations = vec!["VisModel2+AudModel2".into()];
    cmd_fuse(&run, &mut sink()).unwrap();
    let report = cmd_report(&f.out, &mut sink()).unwrap();
    assert_eq!(report.single.len(), 2);
    assert_eq!(report.multi.len(), 1);
    let dir = f.out.join(REPORT_DIR);
    for file in PCC_FILES {
        let csv = fs::read_to_string(dir.join(file)).unwrap();
        let cells: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').skip(1).map(String::from).collect()).collect();
        assert_eq!(cells.len(), 2);
        for i in 0..2 {
            assert_eq!(cells[i].len(), 2);
            assert_eq!(cells[i][i], "1.000000");
            for j in 0..2 {
                assert_eq!(cells[i][j], cells[j][i]);
            }
        }
    }
    let table = fs::read_to_string(dir.join("single_modal.txt")).unwrap();
    assert_eq!(table.lines().count(), 2 + 2);
    let first = snapshot(&dir);
    assert!(first.contains_key(Path::new(REPORT_FILE)));
    cmd_report(&f.out, &mut sink()).unwrap();
    assert_eq!(first, snapshot(&dir));
}

#[test]
fn report_on_empty_run_dir_fails() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(cmd_report(tmp.path(), &mut sink()).is_err());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_affect");
    let ok = Command::new(bin).arg("selftest").output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = Command::new(bin).args(["selftest", "--inject-fault"]).output().unwrap();
    assert_ne!(bad.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nncore"));
    let usage = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    let missing = Command::new(bin).arg("validate").output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let err = CliError::Core(Error::Divergence { epoch: 3, msg: "loss is NaN".into() });
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("epoch 3"));
    assert_eq!(CliError::Core(Error::NonConvergence { iterations: 5, gap: 1.0 }).exit_code(), 2);
    assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
}
