//! The property suite behind `affect selftest`.
//!
//! Four suites, each returning a [`SuiteReport`]:
//!
//! | suite          | checks                                                         |
//! |----------------|----------------------------------------------------------------|
//! | `metrics`      | CCC/PCC against two-pass direct formulas, worked examples      |
//! | `nncore`       | central-difference gradient checks of every layer and loss     |
//! | `svr`          | SMO against the projected-gradient QP oracle, KKT conditions   |
//! | `augmentation` | SSA/CSA/downsampling index laws, encoder mask invariance       |
//!
//! Everything is seeded, so a run is reproducible bit for bit.

use std::fmt;
use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;

use crate::dataio::{csa_sample, downsample_every_k, pad_truncate, ssa_sample, FeatureSequence};
use crate::encoders::{build_encoder, ArchConfig, EncoderConfig, ModelInput};
use crate::fusion::{qp_oracle, rbf_kernel, svr_predict, svr_solve, SvrParams};
use crate::metrics::{ccc, pearson};
use crate::nncore::gradcheck::{gradient_check, FaultInjected, FnProblem, GradProblem};
use crate::nncore::{
    activation_backward, activation_forward, dot, global_pool, global_pool_backward, loss_eval, softmax_backward,
    softmax_lastdim, xavier_uniform, Activation, AttentionPool, Conv1d, Conv1dMultiwidth, Dense, LossKind, LossSpec,
    Lstm, Mha, ParamSet, PoolKind, Tensor,
};
use crate::rng::{rng_from_seed, subseed, Rng};

/// Outcome of one suite.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    /// Largest observed error for suites with a numeric tolerance.
    pub max_error: Option<f64>,
    /// Loosest tolerance applied in the suite.
    pub tolerance: Option<f64>,
    /// One line per failed case; empty on success.
    pub failures: Vec<String>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<13} {}  {:>5} cases", self.name, if self.passed() { "PASS" } else { "FAIL" }, self.cases)?;
        if let (Some(e), Some(t)) = (self.max_error, self.tolerance) {
            write!(f, "  max err {e:.2e} (tol {t:.0e})")?;
        }
        write!(f, "  {:.2}s", self.seconds)?;
        for line in self.failures.iter().take(5) {
            write!(f, "\n    {line}")?;
        }
        if self.failures.len() > 5 {
            write!(f, "\n    … {} more", self.failures.len() - 5)?;
        }
        Ok(())
    }
}

/// Sizes and the test hook of a self-test run.
#[derive(Debug, Clone)]
pub struct SelftestOptions {
    pub seed: u64,
    pub metric_cases: usize,
    pub gradient_seeds: usize,
    pub svr_cases: usize,
    /// SMO stopping tolerance used when comparing against the QP oracle.
    pub svr_solver_tolerance: f64,
    pub augmentation_cases: usize,
    /// Doubles one dense-layer weight gradient; the `nncore` suite must fail.
    pub inject_gradient_fault: bool,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            seed: 0,
            metric_cases: 200,
            gradient_seeds: 20,
            svr_cases: 50,
            svr_solver_tolerance: 1e-5,
            augmentation_cases: 100,
            inject_gradient_fault: false,
        }
    }
}

pub fn run_all(opts: &SelftestOptions) -> Vec<SuiteReport> {
    vec![
        metric_suite(opts.metric_cases, subseed(opts.seed, "selftest-metrics")),
        gradient_suite(opts.gradient_seeds, subseed(opts.seed, "selftest-nncore"), opts.inject_gradient_fault),
        svr_suite(opts.svr_cases, opts.svr_solver_tolerance, subseed(opts.seed, "selftest-svr")),
        augmentation_suite(opts.augmentation_cases, subseed(opts.seed, "selftest-augmentation")),
    ]
}

#[derive(Default)]
struct Tally {
    cases: usize,
    max_error: f64,
    failures: Vec<String>,
}

impl Tally {
    fn check(&mut self, what: impl FnOnce() -> String, err: f64, tol: f64) {
        self.cases += 1;
        if err.is_nan() || err > self.max_error {
            self.max_error = if err.is_nan() { f64::INFINITY } else { err };
        }
        if !(err <= tol) {
            self.failures.push(format!("{}: error {err:.3e} > {tol:.0e}", what()));
        }
    }

    fn require(&mut self, what: impl FnOnce() -> String, ok: bool) {
        self.cases += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, name: &'static str, tolerance: Option<f64>, start: Instant) -> SuiteReport {
        SuiteReport {
            name,
            cases: self.cases,
            max_error: tolerance.map(|_| self.max_error),
            tolerance,
            failures: self.failures,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

// ---------------------------------------------------------------- metrics

fn two_pass_moments(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    (mx, my, sxx / n, syy / n, sxy / n)
}

pub fn metric_suite(cases: usize, seed: u64) -> SuiteReport {
    let start = Instant::now();
    let mut t = Tally::default();
    let mut rng = rng_from_seed(seed);
    for case in 0..cases {
        let n = rng.gen_range(2..=64);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (mx, my, vx, vy, cxy) = two_pass_moments(&x, &y);
        let want_p = cxy / (vx * vy).sqrt();
        let want_c = 2.0 * cxy / (vx + vy + (mx - my) * (mx - my));
        match (pearson(&x, &y), ccc(&x, &y)) {
            (Ok(p), Ok(c)) => {
                t.check(|| format!("pearson case {case} (n={n})"), (p - want_p).abs(), 1e-12);
                t.check(|| format!("ccc case {case} (n={n})"), (c - want_c).abs(), 1e-12);
            }
            (p, c) => t.require(|| format!("case {case}: unexpected error {p:?} / {c:?}"), false),
        }
    }
    let round6 = |v: f64| (v * 1e6).round() / 1e6;
    let examples: [(&str, crate::Result<f64>, f64); 3] = [
        ("ccc([1,2,3],[2,3,4]) = 4/7", ccc(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]), 4.0 / 7.0),
        ("pearson([1,2,3],[1,3,2]) = 0.5", pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]), 0.5),
        ("rbf([0,0],[1,1], 0.5) = e^-1", rbf_kernel(&[0.0, 0.0], &[1.0, 1.0], 0.5), (-1.0f64).exp()),
    ];
    for (name, got, want) in examples {
        match got {
            Ok(v) => t.require(|| format!("{name}: got {v}"), round6(v) == round6(want)),
            Err(e) => t.require(|| format!("{name}: {e}"), false),
        }
    }
    t.finish("metrics", Some(1e-12), start)
}

// ---------------------------------------------------------------- nncore

const TOL_FEEDFORWARD: f64 = 1e-5;
const TOL_RECURRENT: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    xavier_uniform(shape, 1, 1, rng)
}

fn jitter_biases(ps: &mut ParamSet<f64>, rng: &mut Rng) {
    for (name, t) in ps.names().to_vec().iter().zip(ps.tensors_mut()) {
        if name.ends_with(".b") || name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
        }
    }
}

fn dense_problem(rng: &mut Rng) -> FnProblem {
    let mut ps = ParamSet::<f64>::new();
    let d = Dense::new(&mut ps, "fc", 4, 5, rng);
    jitter_biases(&mut ps, rng);
    let x = random(&[3, 4], rng);
    let proj = random(&[3, 5], rng);
    FnProblem::new(ps, vec![("x".into(), x)], move |ps, inp| {
        let y = d.forward(ps, &inp[0]).expect("shapes fixed");
        let mut g = ps.zeros_like();
        let dx = d.backward(ps, &inp[0], &proj, &mut g);
        (dot(y.data(), proj.data()), g, vec![dx])
    })
}

fn activation_problem(kind: Option<Activation>, rng: &mut Rng) -> FnProblem {
    let x = random(&[3, 4], rng);
    let proj = random(&[3, 4], rng);
    FnProblem::new(ParamSet::new(), vec![("x".into(), x)], move |ps, inp| {
        let (y, dx) = match kind {
            Some(k) => {
                let y = activation_forward(&inp[0], k);
                let dx = activation_backward(&y, &proj, k);
                (y, dx)
            }
            None => {
                let y = softmax_lastdim(&inp[0]);
                let dx = softmax_backward(&y, &proj);
                (y, dx)
            }
        };
        (dot(y.data(), proj.data()), ps.zeros_like(), vec![dx])
    })
}

fn conv_problem(rng: &mut Rng) -> FnProblem {
    let mut ps = ParamSet::<f64>::new();
    let mw = Conv1dMultiwidth::new(&mut ps, "mw", &[2, 3, 4, 5], 3, 2, rng);
    let strided = Conv1d::new(&mut ps, "s", 3, 2, 3, 2, rng);
    jitter_biases(&mut ps, rng);
    let x = random(&[7, 3], rng);
    let projs: Vec<Tensor<f64>> = [6, 5, 4, 3, 3].iter().map(|&r| random(&[r, 2], rng)).collect();
    FnProblem::new(ps, vec![("x".into(), x)], move |ps, inp| {
        let maps = mw.forward(ps, &inp[0]).expect("shapes fixed");
        let s = strided.forward(ps, &inp[0]).expect("shapes fixed");
        let mut v = dot(s.data(), projs[4].data());
        for (m, p) in maps.iter().zip(&projs) {
            v += dot(m.data(), p.data());
        }
        let mut g = ps.zeros_like();
        let mut dx = mw.backward(ps, &inp[0], &projs[..4], &mut g);
        dx.add_assign(&strided.backward(ps, &inp[0], &projs[4], &mut g));
        (v, g, vec![dx])
    })
}

fn pool_problem(kind: PoolKind, rng: &mut Rng) -> FnProblem {
    let x = random(&[5, 3], rng);
    let proj = random(&[3], rng).into_data();
    let mask = vec![true, true, false, true, false];
    FnProblem::new(ParamSet::new(), vec![("x".into(), x)], move |ps, inp| {
        let (v, cache) = global_pool(&inp[0], kind, &mask).expect("mask has valid rows");
        (dot(&v, &proj), ps.zeros_like(), vec![global_pool_backward(&cache, &proj, 5)])
    })
}

fn lstm_problem(masked: bool, rng: &mut Rng) -> FnProblem {
    let mut ps = ParamSet::<f64>::new();
    let l = Lstm::new(&mut ps, "lstm", 3, 4, rng);
    let x = random(&[5, 3], rng);
    let proj = random(&[5, 4], rng);
    let mask = if masked { vec![true, true, false, true, false] } else { vec![true; 5] };
    FnProblem::new(ps, vec![("x".into(), x)], move |ps, inp| {
        let (hs, cache) = l.forward(ps, &inp[0], &mask).expect("mask has valid rows");
        let mut g = ps.zeros_like();
        let dx = l.backward(ps, &inp[0], &hs, &cache, &proj, &mut g);
        (dot(hs.data(), proj.data()), g, vec![dx])
    })
}

fn attention_problem(masked: bool, rng: &mut Rng) -> FnProblem {
    let mut ps = ParamSet::<f64>::new();
    let att = AttentionPool::new(&mut ps, "att", 4, 3, rng);
    jitter_biases(&mut ps, rng);
    let hs = random(&[5, 4], rng);
    let proj = random(&[4], rng).into_data();
    let mask = if masked { vec![true, false, true, true, false] } else { vec![true; 5] };
    FnProblem::new(ps, vec![("h".into(), hs)], move |ps, inp| {
        let (ctx, cache) = att.forward(ps, &inp[0], &mask).expect("mask has valid rows");
        let mut g = ps.zeros_like();
        let dh = att.backward(ps, &inp[0], &cache, &proj, &mut g);
        (dot(&ctx, &proj), g, vec![dh])
    })
}

fn mha_problem(masked: bool, rng: &mut Rng) -> FnProblem {
    let mut ps = ParamSet::<f64>::new();
    let m = Mha::new(&mut ps, "mha", 4, 2, 3, rng);
    let x = random(&[4, 4], rng);
    let proj = random(&[4, 4], rng);
    let mask = if masked { vec![true, true, false, true] } else { vec![true; 4] };
    FnProblem::new(ps, vec![("x".into(), x)], move |ps, inp| {
        let (y, cache) = m.forward(ps, &inp[0], &mask).expect("mask has valid rows");
        let mut g = ps.zeros_like();
        let dx = m.backward(ps, &inp[0], &cache, &proj, &mut g);
        (dot(y.data(), proj.data()), g, vec![dx])
    })
}

fn loss_problem(kind: LossKind, rng: &mut Rng) -> FnProblem {
    let pred = random(&[8, 2], rng);
    let truth = random(&[8, 2], rng);
    FnProblem::new(ParamSet::new(), vec![("pred".into(), pred)], move |ps, inp| {
        let (v, g) = loss_eval(&inp[0], &truth, &LossSpec::new(kind)).expect("non-degenerate batch");
        (v, ps.zeros_like(), vec![g])
    })
}

pub fn gradient_suite(seeds: usize, seed: u64, inject_fault: bool) -> SuiteReport {
    let start = Instant::now();
    let mut t = Tally::default();
    for s in 0..seeds as u64 {
        let mut rng = rng_from_seed(subseed(seed, &format!("seed{s}")));
        let mut problems: Vec<(String, Box<dyn GradProblem>, f64)> = Vec::new();
        let dense = dense_problem(&mut rng);
        if inject_fault {
            problems.push(("dense".into(), Box::new(FaultInjected { inner: dense, block: "fc.w".into(), factor: 2.0 }), TOL_FEEDFORWARD));
        } else {
            problems.push(("dense".into(), Box::new(dense), TOL_FEEDFORWARD));
        }
        for (name, kind) in [("relu", Some(Activation::Relu)), ("tanh", Some(Activation::Tanh)), ("identity", Some(Activation::Identity)), ("softmax", None)] {
            problems.push((name.into(), Box::new(activation_problem(kind, &mut rng)), TOL_FEEDFORWARD));
        }
        problems.push(("conv1d".into(), Box::new(conv_problem(&mut rng)), TOL_FEEDFORWARD));
        problems.push(("max_pool".into(), Box::new(pool_problem(PoolKind::Max, &mut rng)), TOL_FEEDFORWARD));
        problems.push(("avg_pool".into(), Box::new(pool_problem(PoolKind::Avg, &mut rng)), TOL_FEEDFORWARD));
        problems.push(("lstm".into(), Box::new(lstm_problem(s % 2 == 1, &mut rng)), TOL_RECURRENT));
        problems.push(("attention_pool".into(), Box::new(attention_problem(s % 2 == 1, &mut rng)), TOL_FEEDFORWARD));
        problems.push(("mha".into(), Box::new(mha_problem(s % 2 == 1, &mut rng)), TOL_FEEDFORWARD));
        for kind in [LossKind::Mse, LossKind::Mae, LossKind::Ccc, LossKind::CccPlusMse, LossKind::CccPlusMae] {
            problems.push((format!("loss {kind:?}"), Box::new(loss_problem(kind, &mut rng)), TOL_FEEDFORWARD));
        }
        for (name, mut p, tol) in problems {
            let r = gradient_check(p.as_mut(), tol);
            let blocks = r.failing.join(", ");
            t.check(|| format!("{name} seed {s} [{blocks}]"), r.max_rel_err, tol);
        }
    }
    t.finish("nncore", Some(TOL_RECURRENT), start)
}

// ---------------------------------------------------------------- svr

pub fn svr_suite(cases: usize, solver_tolerance: f64, seed: u64) -> SuiteReport {
    const TOL: f64 = 1e-3;
    let start = Instant::now();
    let mut t = Tally::default();
    let mut rng = rng_from_seed(seed);
    for case in 0..cases {
        let n = rng.gen_range(3..=10);
        let d = rng.gen_range(1..=4);
        let x = Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized");
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = [0.1, 0.3, 1.0, 3.0, 10.0][rng.gen_range(0..5)];
        let params = SvrParams { epsilon: rng.gen_range(0.01..0.3), tolerance: solver_tolerance, ..SvrParams::new(c, d) };
        let (smo, qp) = match (svr_solve(&x, &y, &params), qp_oracle(&x, &y, &params, 1e-10)) {
            (Ok(a), Ok(b)) => (a, b),
            (a, b) => {
                t.require(|| format!("case {case}: solver error {:?} / {:?}", a.err(), b.err()), false);
                continue;
            }
        };
        let rel = (smo.objective - qp.objective).abs() / qp.objective.abs().max(1e-12);
        t.check(|| format!("case {case} objective {} vs {}", smo.objective, qp.objective), rel, TOL);
        let mut worst = 0.0f64;
        for i in 0..n {
            let a = svr_predict(&smo.model, x.row(i)).unwrap_or(f64::NAN);
            let b = svr_predict(&qp.model, x.row(i)).unwrap_or(f64::NAN);
            worst = worst.max((a - b).abs());
        }
        t.check(|| format!("case {case} predictions"), worst, TOL);
        // KKT: box, equality, complementarity and margin conditions.
        let beta = &smo.beta;
        let eq: f64 = beta[..n].iter().sum::<f64>() - beta[n..].iter().sum::<f64>();
        t.check(|| format!("case {case} equality constraint"), eq.abs(), TOL);
        let in_box = beta.iter().all(|&b| (-1e-12..=c + 1e-12).contains(&b));
        t.require(|| format!("case {case}: dual variable outside [0, C]"), in_box);
        let mut kkt = 0.0f64;
        for i in 0..n {
            let (a, s) = (beta[i], beta[i + n]);
            kkt = kkt.max(a.min(s));
            let r = svr_predict(&smo.model, x.row(i)).unwrap_or(f64::NAN) - y[i];
            let eps = params.epsilon;
            // a > 0 requires r ≤ −ε (pushing up), s > 0 requires r ≥ ε; interior means equality.
            let v = |coef: f64, margin: f64| -> f64 {
                if coef <= 1e-9 {
                    (margin).max(0.0)
                } else if coef >= c - 1e-9 {
                    (-margin).max(0.0)
                } else {
                    margin.abs()
                }
            };
            kkt = kkt.max(v(a, -r - eps)).max(v(s, r - eps));
        }
        t.check(|| format!("case {case} KKT"), kkt, TOL);
    }
    t.finish("svr", Some(TOL), start)
}

// ---------------------------------------------------------------- augmentation

fn indexed(frames: usize) -> FeatureSequence {
    let data = (0..frames).flat_map(|i| [i as f32, -(i as f32)]).collect();
    FeatureSequence::from_rows(frames, 2, data).expect("non-empty")
}

fn sources(seq: &FeatureSequence) -> Vec<usize> {
    (0..seq.frames()).map(|r| seq.row(r)[0] as usize).collect()
}

fn mask_toys() -> Vec<EncoderConfig> {
    let toy = |arch: ArchConfig, input_dim: usize| {
        let mut c = EncoderConfig::defaults("toy", arch);
        c.input_dim = input_dim;
        c.seq_len = 16;
        c
    };
    vec![
        toy(ArchConfig::VisCnn1d { widths: vec![2, 3, 4, 5], channels: 3, fc_dim: 4 }, 5),
        toy(ArchConfig::VisLstmAttn { hidden: 4, att_dim: Some(3), fc_dim: 4 }, 5),
        toy(ArchConfig::TextMha { heads: 2, head_dim: 3, fc_dim: 4 }, 6),
        toy(ArchConfig::AudConv1d { channels: vec![2, 3, 3], kernel: 3, stride: 2 }, 1),
        toy(ArchConfig::AudMlp { hidden: vec![5, 3], select_k: Some(4) }, 7),
    ]
}

pub fn augmentation_suite(cases: usize, seed: u64) -> SuiteReport {
    let start = Instant::now();
    let mut t = Tally::default();
    let mut rng = rng_from_seed(seed);
    for case in 0..cases {
        let n = rng.gen_range(1..=200);
        let k = rng.gen_range(1..=12);
        let seq = indexed(n);

        let ssa = sources(&ssa_sample(&seq, k, &mut rng));
        t.require(|| format!("ssa case {case}: {} rows for n={n}, k={k}", ssa.len()), ssa.len() == n.div_ceil(k));
        let members = ssa.iter().enumerate().all(|(i, &s)| s >= i * k && s < ((i + 1) * k).min(n));
        t.require(|| format!("ssa case {case}: a row left its chunk (n={n}, k={k})"), members);

        let down = sources(&downsample_every_k(&seq, k));
        let want: Vec<usize> = (0..n.div_ceil(k)).map(|i| i * k).collect();
        t.require(|| format!("downsample case {case}: n={n}, k={k}"), down == want);

        let w = rng.gen_range(1..=64);
        let csa = sources(&csa_sample(&seq, w, &mut rng));
        let contiguous = csa.len() == n.min(w) && csa.windows(2).all(|p| p[1] == p[0] + 1) && csa[0] + csa.len() <= n;
        t.require(|| format!("csa case {case}: n={n}, window={w}"), contiguous);

        let target = rng.gen_range(1..=100);
        let (padded, mask) = pad_truncate(&seq, target);
        let ok = padded.frames() == target && mask.iter().filter(|&&m| m).count() == n.min(target);
        t.require(|| format!("pad_truncate case {case}: n={n}, target={target}"), ok);
    }

    // Appending masked frames never changes an encoder's output, bit for bit.
    let toys = mask_toys();
    for case in 0..cases {
        let cfg = &toys[case % toys.len()];
        let mut rng = rng_from_seed(subseed(seed, &format!("mask{case}")));
        let model = match build_encoder::<f64>(cfg, &mut rng) {
            Ok(m) => m,
            Err(e) => {
                t.require(|| format!("mask case {case}: {e}"), false);
                continue;
            }
        };
        let rows = if matches!(cfg.arch, ArchConfig::AudMlp { .. }) { 1 } else { rng.gen_range(1..=6) };
        let extra = rng.gen_range(1..=5);
        let d = cfg.input_dim;
        let data: Vec<f64> = (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = model.forward(&ModelInput::unmasked(Tensor::from_vec(&[rows, d], data.clone()).expect("sized")));
        let mut long = data;
        long.extend((0..extra * d).map(|_| rng.gen_range(-10.0..10.0)));
        let padded = ModelInput {
            x: Tensor::from_vec(&[rows + extra, d], long).expect("sized"),
            mask: (0..rows + extra).map(|r| r < rows).collect(),
        };
        let same = match (base, model.forward(&padded)) {
            (Ok(a), Ok(b)) => a.output == b.output && a.representation == b.representation,
            _ => false,
        };
        t.require(|| format!("mask case {case}: {} output changed under padding", cfg.arch.name()), same);
    }
    t.finish("augmentation", None, start)
}
