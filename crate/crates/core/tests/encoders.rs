use affect_core::dataio::{parse_manifest, write_manifest, FeatureSequence, Split};
use affect_core::encoders::{
    build_encoder, encoder_predict, extract_representation, load_inputs, train_encoder, ArchConfig, Augmentation, EncoderConfig,
    EncoderModel, TrainedEncoder,
};
use affect_core::nncore::{OptimizerConfig, Tensor};
use affect_core::rng::{rng_from_seed, subseed};
use affect_core::synth::{generate, SynthConfig, MANIFEST_FILE};
use rand::Rng as _;

fn small_data(dir: &std::path::Path, n_train: usize, n_val: usize) -> affect_core::dataio::DatasetManifest {
    let cfg = SynthConfig {
        n_train,
        n_val,
        visual_dim: 6,
        audio_dim: 10,
        text_dim: 5,
        frames: (3, 12),
        tokens: (2, 6),
        wave_len: Some(64),
        planted: 2,
        ..SynthConfig::default()
    };
    generate(dir, &cfg).unwrap()
}

fn small_configs() -> Vec<EncoderConfig> {
    let mk = |name: &str, arch: ArchConfig, input_dim: usize, seq_len: usize| {
        let mut c = EncoderConfig::defaults(name, arch);
        c.input_dim = input_dim;
        c.seq_len = seq_len;
        c.downsample = 1;
        c.epochs = 3;
        c.batch_size = 8;
        c
    };
    vec![
        mk("cnn", ArchConfig::VisCnn1d { widths: vec![2, 3], channels: 3, fc_dim: 4 }, 6, 8),
        mk("lstm", ArchConfig::VisLstmAttn { hidden: 4, att_dim: None, fc_dim: 4 }, 6, 8),
        mk("text", ArchConfig::TextMha { heads: 2, head_dim: 2, fc_dim: 4 }, 5, 6),
        mk("wave", ArchConfig::AudConv1d { channels: vec![2, 3], kernel: 4, stride: 2 }, 1, 64),
        mk("mlp", ArchConfig::AudMlp { hidden: vec![6, 4], select_k: Some(5) }, 10, 1),
    ]
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn p<'a>(m: &'a EncoderModel<f64>, name: &str) -> &'a Tensor<f64> {
    m.params.get(m.params.id(name).unwrap_or_else(|| panic!("no parameter {name}")))
}

/// `out[o] = b[o] + Σ_i x[i]·W[i][o]`, written out.
fn affine(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    (0..w.cols()).map(|o| b.data()[o] + (0..x.len()).map(|i| x[i] * w.at(i, o)).sum::<f64>()).collect()
}

fn untrained(cfg: &EncoderConfig, seed: u64) -> TrainedEncoder<f64> {
    let mut rng = rng_from_seed(seed);
    let mut model = build_encoder::<f64>(cfg, &mut rng).unwrap();
    // non-zero biases so every term of the oracle matters
    for t in model.params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
    }
    TrainedEncoder { model, history: Vec::new(), best_epoch: None }
}

fn two_frames(d: usize, seed: u64) -> FeatureSequence {
    let mut rng = rng_from_seed(seed);
    FeatureSequence::from_rows(2, d, (0..2 * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

fn assert_close(got: Option<f64>, want: f64) {
    let got = got.unwrap();
    assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
}

#[test]
fn cnn_prediction_matches_hand_composed_forward() {
    let mut cfg = EncoderConfig::defaults("cnn", ArchConfig::VisCnn1d { widths: vec![1, 2], channels: 3, fc_dim: 4 });
    cfg.input_dim = 3;
    cfg.seq_len = 2;
    cfg.downsample = 1;
    let enc = untrained(&cfg, 1);
    let m = &enc.model;
    let raw = two_frames(3, 2);
    let x: Vec<Vec<f64>> = (0..2).map(|t| raw.row(t).iter().map(|&v| v as f64).collect()).collect();

    let mut pooled = Vec::new();
    for w in [1usize, 2] {
        let (k, b) = (p(m, &format!("conv.w{w}.kernel")), p(m, &format!("conv.w{w}.bias")));
        for o in 0..3 {
            let at = |t: usize| b.data()[o] + (0..w).map(|dt| (0..3).map(|i| x[t + dt][i] * k.at(dt * 3 + i, o)).sum::<f64>()).sum::<f64>();
            let best = (0..=2 - w).map(at).fold(f64::NEG_INFINITY, f64::max);
            pooled.push(relu(best));
        }
    }
    let hid: Vec<f64> = affine(&pooled, p(m, "fc.w"), p(m, "fc.b")).into_iter().map(relu).collect();
    let out = affine(&hid, p(m, "head.w"), p(m, "head.b"));

    let pred = encoder_predict(&enc, &raw).unwrap();
    assert_close(pred.arousal, out[0]);
    assert_close(pred.valence, out[1]);
    let rep = extract_representation(&enc, &raw).unwrap();
    for (a, b) in rep.values.iter().zip(&pooled) {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn lstm_prediction_matches_hand_composed_forward() {
    let mut cfg = EncoderConfig::defaults("lstm", ArchConfig::VisLstmAttn { hidden: 3, att_dim: Some(2), fc_dim: 4 });
    cfg.input_dim = 2;
    cfg.seq_len = 2;
    cfg.downsample = 1;
    let enc = untrained(&cfg, 3);
    let m = &enc.model;
    let raw = two_frames(2, 4);
    let h = 3;
    let (w, u, b) = (p(m, "lstm.w"), p(m, "lstm.u"), p(m, "lstm.b"));
    let mut hp = vec![0.0; h];
    let mut cp = vec![0.0; h];
    let mut hs = Vec::new();
    for t in 0..2 {
        let x: Vec<f64> = raw.row(t).iter().map(|&v| v as f64).collect();
        let z = |gate: usize, j: usize| {
            let col = gate * h + j;
            b.data()[col] + (0..2).map(|i| x[i] * w.at(i, col)).sum::<f64>() + (0..h).map(|k| hp[k] * u.at(k, col)).sum::<f64>()
        };
        let (mut hn, mut cn) = (vec![0.0; h], vec![0.0; h]);
        for j in 0..h {
            let (i, f, o, g) = (sigmoid(z(0, j)), sigmoid(z(1, j)), sigmoid(z(2, j)), z(3, j).tanh());
            cn[j] = f * cp[j] + i * g;
            hn[j] = o * cn[j].tanh();
        }
        hs.push(hn.clone());
        hp = hn;
        cp = cn;
    }
    let (aw, ab, au) = (p(m, "att.w"), p(m, "att.b"), p(m, "att.u"));
    let scores: Vec<f64> = hs.iter().map(|ht| affine(ht, aw, ab).iter().zip(au.data()).map(|(v, u)| v.tanh() * u).sum()).collect();
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    let ctx: Vec<f64> = (0..h).map(|j| (0..2).map(|t| scores[t].exp() / z * hs[t][j]).sum()).collect();
    let hid: Vec<f64> = affine(&ctx, p(m, "fc.w"), p(m, "fc.b")).into_iter().map(relu).collect();
    let out = affine(&hid, p(m, "head.w"), p(m, "head.b"));

    let pred = encoder_predict(&enc, &raw).unwrap();
    assert_close(pred.arousal, out[0]);
    assert_close(pred.valence, out[1]);
}

#[test]
fn zero_epochs_keep_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_data(dir.path(), 12, 6);
    for mut cfg in small_configs() {
        cfg.epochs = 0;
        let enc = train_encoder::<f64>(&cfg, &m).unwrap();
        let init = build_encoder::<f64>(&cfg, &mut rng_from_seed(subseed(cfg.seed, "init"))).unwrap();
        assert_eq!(enc.model.params, init.params, "{}", cfg.name);
        assert!(enc.history.is_empty());
        assert_eq!(enc.best_epoch, None);
    }
}

#[test]
fn same_seed_is_bit_identical_and_other_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_data(dir.path(), 20, 8);
    for mut cfg in small_configs() {
        if matches!(cfg.arch, ArchConfig::VisLstmAttn { .. }) {
            cfg.augmentation = Augmentation::Ssa;
            cfg.downsample = 2;
        }
        let a = train_encoder::<f64>(&cfg, &m).unwrap();
        let b = train_encoder::<f64>(&cfg, &m).unwrap();
        assert_eq!(a.model.params, b.model.params, "{}", cfg.name);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), cfg.epochs);
        cfg.seed += 1;
        let c = train_encoder::<f64>(&cfg, &m).unwrap();
        assert_ne!(a.model.params, c.model.params, "{}", cfg.name);
    }
}

#[test]
fn manifest_line_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_data(dir.path(), 20, 8);
    let mut reversed = m.clone();
    reversed.records.reverse();
    let path = dir.path().join("reversed.jsonl");
    write_manifest(&path, &reversed).unwrap();
    let reversed = parse_manifest(&path).unwrap();
    assert_ne!(reversed.records[0].utterance_id, m.records[0].utterance_id);
    for cfg in small_configs() {
        let a = train_encoder::<f64>(&cfg, &m).unwrap();
        let b = train_encoder::<f64>(&cfg, &reversed).unwrap();
        assert_eq!(a.model.params, b.model.params, "{}", cfg.name);
    }
}

#[test]
fn representation_dimensions_and_purity() {
    let mut cnn = EncoderConfig::defaults("cnn", ArchConfig::VisCnn1d { widths: vec![2, 3, 4, 5], channels: 16, fc_dim: 8 });
    cnn.input_dim = 4;
    let model = build_encoder::<f64>(&cnn, &mut rng_from_seed(0)).unwrap();
    assert_eq!(model.representation_dim(), 64);

    let wave = EncoderConfig::defaults("wave", ArchConfig::aud_conv1d());
    let model = build_encoder::<f32>(&wave, &mut rng_from_seed(0)).unwrap();
    assert_eq!(model.representation_dim(), 256);

    let dir = tempfile::tempdir().unwrap();
    let m = small_data(dir.path(), 6, 2);
    for cfg in small_configs() {
        let enc = untrained(&cfg, 5);
        let recs: Vec<_> = m.split(Split::Validation).collect();
        let raw = &load_inputs(&cfg, &m, &recs).unwrap()[0];
        let a = extract_representation(&enc, raw).unwrap();
        let b = extract_representation(&enc, raw).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), enc.model.representation_dim(), "{}", cfg.name);
    }
}

#[test]
fn cnn_learns_a_planted_signal() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), &SynthConfig { view_noise: 0.0, ..SynthConfig::default() }).unwrap();
    assert!(dir.path().join(MANIFEST_FILE).is_file());
    let mut cfg = EncoderConfig::defaults("cnn", ArchConfig::VisCnn1d { widths: vec![2, 3, 4, 5], channels: 16, fc_dim: 32 });
    cfg.seq_len = 16;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.optimizer = OptimizerConfig::adam();
    cfg.augmentation = Augmentation::Ssa;
    let enc = train_encoder::<f32>(&cfg, &m).unwrap();
    let best = &enc.history[enc.best_epoch.unwrap()];
    for c in best.val_ccc {
        assert!(c.unwrap() >= 0.8, "validation CCC {:?}", best.val_ccc);
    }
}
