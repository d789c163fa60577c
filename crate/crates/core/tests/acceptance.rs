//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! `cargo test --release --test acceptance` (the end-to-end runs take a few
//! minutes). Set `ACCEAR_ACCEPT_KEEP=<dir>` to keep the pipeline outputs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use accear::autodiff::{
    activation_backward, activation_forward, batch_norm_backward, batch_norm_forward, bce_with_logits,
    bce_with_logits_backward, conv2d_backward, conv2d_forward, conv2d_transpose_backward,
    conv2d_transpose_forward, l1, l1_backward, Activation, BnMode, Tensor,
};
use accear::channel_sim::CorpusConfig;
use accear::metrics::{mcd, wer, CepstraFrameSeq};
use accear::pipeline::{self, EvalSource, RunConfig, SplitSelect};
use accear::signal_prep::{high_pass, UniformSeries};
use accear::spectral::{hz_to_mel, mel_to_hz, Matrix, StftPlan};
use accear::vocoder::{griffin_lim, GriffinLimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- gradients

fn random(shape: [usize; 4], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Same as `random` but bounded away from zero, so piecewise-linear
/// activations are never probed at their kink.
fn random_off_zero(shape: [usize; 4], r: &mut ChaCha8Rng) -> Tensor<f64> {
    random(shape, r).map(|v| if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v })
}

fn fd(x: &Tensor<f64>, f: &dyn Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    let h = 1e-5;
    (0..x.len())
        .map(|i| {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data_mut()[i] += h;
            m.data_mut()[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖).
fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut checks: Vec<(String, usize, f64)> = Vec::new();
    let mut record = |name: &str, x: &Tensor<f64>, analytic: &[f64], f: &dyn Fn(&Tensor<f64>) -> f64| {
        checks.push((name.to_string(), x.len(), rel(analytic, &fd(x, f))));
    };

    for (stride, pad) in [(1, 1), (2, 1), (2, 0)] {
        let x = random([2, 2, 5, 5], &mut r);
        let w = random([3, 2, 3, 3], &mut r);
        let b = random([1, 3, 1, 1], &mut r);
        let y = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
        let p = random(y.shape(), &mut r);
        let (dx, dw, db) = conv2d_backward(&x, &w, stride, pad, &p).unwrap();
        let tag = format!("conv2d s{stride} p{pad}");
        record(&format!("{tag} x"), &x, dx.data(), &|v| conv2d_forward(v, &w, &b, stride, pad).unwrap().dot(&p));
        record(&format!("{tag} w"), &w, dw.data(), &|v| conv2d_forward(&x, v, &b, stride, pad).unwrap().dot(&p));
        record(&format!("{tag} b"), &b, db.data(), &|v| conv2d_forward(&x, &w, v, stride, pad).unwrap().dot(&p));
    }

    for (stride, pad) in [(2, 1), (1, 0)] {
        let x = random([2, 2, 3, 3], &mut r);
        let w = random([2, 3, 4, 4], &mut r);
        let b = random([1, 3, 1, 1], &mut r);
        let y = conv2d_transpose_forward(&x, &w, &b, stride, pad).unwrap();
        let p = random(y.shape(), &mut r);
        let (dx, dw, db) = conv2d_transpose_backward(&x, &w, stride, pad, &p).unwrap();
        let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
            conv2d_transpose_forward(x, w, b, stride, pad).unwrap().dot(&p)
        };
        let tag = format!("conv2d_transpose s{stride} p{pad}");
        record(&format!("{tag} x"), &x, dx.data(), &|v| f(v, &w, &b));
        record(&format!("{tag} w"), &w, dw.data(), &|v| f(&x, v, &b));
        record(&format!("{tag} b"), &b, db.data(), &|v| f(&x, &w, v));
    }

    for kind in [Activation::LeakyRelu(0.2), Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
        let x = random_off_zero([2, 3, 4, 4], &mut r);
        let p = random(x.shape(), &mut r);
        let y = activation_forward(kind, &x);
        let dx = activation_backward(kind, &x, &y, &p).unwrap();
        record(&format!("{kind:?}"), &x, dx.data(), &|v| activation_forward(kind, v).dot(&p));
    }

    {
        let x = random([3, 2, 4, 4], &mut r);
        let gamma = random([1, 2, 1, 1], &mut r);
        let beta = random([1, 2, 1, 1], &mut r);
        let p = random(x.shape(), &mut r);
        let bn = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
            batch_norm_forward(x, g, b, BnMode::Train, None, 1e-5).unwrap().0.dot(&p)
        };
        let (_, cache) = batch_norm_forward(&x, &gamma, &beta, BnMode::Train, None, 1e-5).unwrap();
        let (dx, dg, db) = batch_norm_backward(&cache, &gamma, &p).unwrap();
        record("batch_norm train x", &x, dx.data(), &|v| bn(v, &gamma, &beta));
        record("batch_norm train gamma", &gamma, dg.data(), &|v| bn(&x, v, &beta));
        record("batch_norm train beta", &beta, db.data(), &|v| bn(&x, &gamma, v));

        let (mean, var) = (vec![0.3, -0.2], vec![0.8, 1.7]);
        let ev = |x: &Tensor<f64>| {
            batch_norm_forward(x, &gamma, &beta, BnMode::Eval, Some((&mean, &var)), 1e-5).unwrap().0.dot(&p)
        };
        let (_, cache) = batch_norm_forward(&x, &gamma, &beta, BnMode::Eval, Some((&mean, &var)), 1e-5).unwrap();
        let (dx, _, _) = batch_norm_backward(&cache, &gamma, &p).unwrap();
        record("batch_norm eval x", &x, dx.data(), &|v| ev(v));
    }

    {
        let a = random_off_zero([2, 2, 4, 4], &mut r);
        let b = random([2, 2, 4, 4], &mut r).map(|v| v * 0.05);
        let b = {
            // Keep every |a − b| well away from zero.
            let mut t = a.clone();
            t.data_mut().iter_mut().zip(b.data()).for_each(|(t, d)| *t = *t * 0.5 + d);
            t
        };
        let da = l1_backward(&a, &b).unwrap();
        record("l1", &a, da.data(), &|v| l1(v, &b).unwrap());

        let z = random([2, 1, 6, 6], &mut r).map(|v| 3.0 * v);
        for label in [0.0, 1.0] {
            let dz = bce_with_logits_backward(&z, label);
            record(&format!("bce label {label}"), &z, dz.data(), &|v| bce_with_logits(v, label));
        }
    }

    {
        let a = random([2, 2, 3, 3], &mut r);
        let b = random([2, 3, 3, 3], &mut r);
        let p = random([2, 5, 3, 3], &mut r);
        let (da, db) = p.split_channels(2);
        record("concat_channels a", &a, da.data(), &|v| Tensor::concat_channels(v, &b).unwrap().dot(&p));
        record("concat_channels b", &b, db.data(), &|v| Tensor::concat_channels(&a, v).unwrap().dot(&p));
    }

    let elapsed = start.elapsed().as_secs_f64();
    let worst = checks.iter().cloned().fold((String::new(), 0, 0.0), |w, c| if c.2 > w.2 { c } else { w });
    let max_params = checks.iter().map(|c| c.1).max().unwrap_or(0);
    for (name, n, e) in &checks {
        if *e >= 1e-4 {
            println!("    {name}: {n} params, rel err {e:.2e}");
        }
    }
    outcome(
        worst.2 < 1e-4 && max_params <= 200 && elapsed < 60.0,
        format!(
            "{} checks, max {max_params} params, worst {:.2e} ({}), {elapsed:.1} s",
            checks.len(),
            worst.2,
            worst.0
        ),
    )
}

// ---------------------------------------------------------------- STFT

fn criterion_stft() -> Outcome {
    let mut r = rng(3);
    let x: Vec<f64> = (0..8000).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n_fft in [256, 512] {
        for hop in [n_fft / 2, n_fft / 4, n_fft / 8, 100] {
            let plan = StftPlan::new(n_fft, hop).unwrap();
            let y = plan.istft(&plan.stft(&x, 8000.0).unwrap(), Some(x.len())).unwrap();
            let (lo, hi) = (n_fft, x.len() - n_fft);
            let num = (lo..hi).map(|i| (y.values()[i] - x[i]).powi(2)).sum::<f64>().sqrt();
            let den = (lo..hi).map(|i| x[i].powi(2)).sum::<f64>().sqrt();
            worst = worst.max(num / den);
            cases += 1;
        }
    }
    outcome(worst < 1e-6, format!("{cases} (n_fft, hop) cases, worst interior rel err {worst:.2e}"))
}

// ---------------------------------------------------------------- Griffin-Lim

fn criterion_griffin_lim() -> Outcome {
    let rate = 8000.0;
    let cfg = GriffinLimConfig { iterations: 60, n_fft: 256, hop: 64, ..Default::default() };
    let mut violations = 0;
    let mut worst_rise = 0.0f64;
    for seed in 0..10u64 {
        let mut r = rng(100 + seed);
        // Random non-negative magnitudes, not necessarily consistent.
        let bins = cfg.n_fft / 2 + 1;
        let frames = 40;
        let m = Matrix::from_vec(bins, frames, (0..bins * frames).map(|_| r.random_range(0.0..1.0)).collect())
            .unwrap();
        let out = griffin_lim(&m, rate, &GriffinLimConfig { random_init_seed: Some(seed), ..cfg }, None).unwrap();
        for w in out.errors.windows(2) {
            let rise = w[1] - w[0];
            if rise > 1e-7 {
                violations += 1;
                worst_rise = worst_rise.max(rise);
            }
        }
    }

    // Oracle: a harmonic tone's own STFT magnitude, phase discarded. The
    // result is scored by re-analysing the output waveform.
    let rate = 16_000.0;
    let x: Vec<f64> = (0..32_000)
        .map(|i| {
            let t = i as f64 / rate;
            [(150.0, 1.0), (300.0, 0.5), (450.0, 0.25)]
                .iter()
                .map(|(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                .sum()
        })
        .collect();
    let (n_fft, hop) = (512, 128);
    let plan = StftPlan::new(n_fft, hop).unwrap();
    let target = plan.stft(&x, rate).unwrap().magnitude();
    let out = griffin_lim(&target, rate, &GriffinLimConfig { iterations: 60, n_fft, hop, ..Default::default() }, Some(x.len()))
        .unwrap();
    let got = plan.stft(out.series.values(), rate).unwrap().magnitude();
    // Interior frames only; the outermost frames see reflection padding.
    let edge = n_fft / hop;
    let (mut num, mut den) = (0.0, 0.0);
    for t in edge..target.cols() - edge {
        for k in 0..target.rows() {
            num += (got[(k, t)] - target[(k, t)]).powi(2);
            den += target[(k, t)].powi(2);
        }
    }
    let spectral = (num / den).sqrt();
    outcome(
        violations == 0 && spectral < 0.05,
        format!(
            "10 seeds x 60 iterations: {violations} rises (max {worst_rise:.1e}); harmonic oracle rel spectral err {:.2}%",
            100.0 * spectral
        ),
    )
}

// ---------------------------------------------------------------- metrics

fn edit_distance(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let key = (a.len(), b.len());
    if let Some(&d) = memo.get(&key) {
        return d;
    }
    let (ha, ta) = a.split_last().unwrap();
    let (hb, tb) = b.split_last().unwrap();
    let d = (edit_distance(ta, tb, memo) + usize::from(ha != hb))
        .min(edit_distance(ta, b, memo) + 1)
        .min(edit_distance(a, tb, memo) + 1);
    memo.insert(key, d);
    d
}

fn criterion_metrics() -> Outcome {
    let k = 10.0 / std::f64::consts::LN_10;
    let mut r = rng(5);
    let c: Vec<f64> = (0..13 * 7).map(|_| r.random_range(-5.0..5.0)).collect();
    let a = CepstraFrameSeq::new(7, 13, c.clone()).unwrap();
    let identical = mcd(&a, &a).unwrap();
    // Every frame differs by exactly 1 in one coefficient.
    let mut shifted = c.clone();
    for t in 0..7 {
        shifted[t * 13 + (t % 13)] += 1.0;
    }
    let unit = mcd(&a, &CepstraFrameSeq::new(7, 13, shifted).unwrap()).unwrap();
    let expect = k * 2f64.sqrt();
    let mcd_ok = identical.abs() < 1e-9 && (unit - expect).abs() < 1e-9;

    let words = ["a", "b", "c", "d"];
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..=8);
        let m = r.random_range(0..=8);
        let ri: Vec<u8> = (0..n).map(|_| r.random_range(0..4u8)).collect();
        let hi: Vec<u8> = (0..m).map(|_| r.random_range(0..4u8)).collect();
        let rs: Vec<&str> = ri.iter().map(|&i| words[i as usize]).collect();
        let hs: Vec<&str> = hi.iter().map(|&i| words[i as usize]).collect();
        let oracle = edit_distance(&ri, &hi, &mut HashMap::new());
        let got = wer(&rs, &hs).unwrap();
        if got.errors() != oracle || (got.rate() - oracle as f64 / n as f64).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    outcome(
        mcd_ok && mismatches == 0,
        format!(
            "MCD identical {identical:.1e}, unit {unit:.12} (expect {expect:.12}); WER mismatches {mismatches}/1000"
        ),
    )
}

fn criterion_mel() -> Outcome {
    let zero = hz_to_mel(0.0);
    let at700 = hz_to_mel(700.0);
    let expect = 2595.0 * 2f64.log10();
    let mut worst = 0.0f64;
    for i in 0..=2000 {
        let f = i as f64 * 4.0;
        let back = mel_to_hz(hz_to_mel(f));
        worst = worst.max((back - f).abs() / f.max(1.0));
        let m = i as f64 * 1.5;
        worst = worst.max((hz_to_mel(mel_to_hz(m)) - m).abs() / m.max(1.0));
    }
    outcome(
        zero.abs() < 1e-9 && (at700 - expect).abs() < 1e-9 && worst < 1e-9,
        format!("mel(0) {zero}, mel(700) {at700:.12} (expect {expect:.12}), worst inverse rel err {worst:.1e}"),
    )
}

// ---------------------------------------------------------------- filter

fn criterion_filter() -> Outcome {
    let rate = 1000.0;
    let amp = |f: f64| -> f64 {
        let x: Vec<f64> = (0..20_000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin()).collect();
        let y = high_pass(&UniformSeries::new(rate, x).unwrap(), 20.0).unwrap();
        // Steady state: the middle 10 s, well clear of both ends.
        let mid = &y.values()[5000..15_000];
        (2.0 * mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
    };
    let a5 = -20.0 * amp(5.0).log10();
    let g100 = 20.0 * amp(100.0).log10();
    outcome(
        a5 >= 40.0 && g100.abs() <= 0.5,
        format!("5 Hz attenuated {a5:.1} dB, 100 Hz gain {g100:+.3} dB"),
    )
}

// ---------------------------------------------------------------- pipeline

struct Run {
    dir: PathBuf,
    manifest: PathBuf,
    checkpoint: PathBuf,
    wav: PathBuf,
    model_mcd: f64,
    model_l1: f64,
    baseline: Option<(f64, f64)>,
    seconds: f64,
}

fn run_config(rate: f64) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
        [simulate]
        seed = 1
        sensor_rate_hz = {rate:?}
        scene = "quiet-room"
        [spectral]
        image_size = 64
        [model]
        base_channels = 8
        [train]
        epochs = 30
        phase1_epochs = 0
        lr = 0.0002
        seed = 1
        checkpoint_every = 10
        "#
    ))
    .unwrap()
}

fn run_pipeline(corpus: &Path, dir: &Path, rate: f64, with_baseline: bool) -> accear::Result<Run> {
    let start = Instant::now();
    let cfg = run_config(rate);
    let manifest = pipeline::cmd_simulate(corpus, &dir.join("sim"), &cfg, false)?.path;
    pipeline::cmd_prepare(&manifest, &dir.join("prep"), &cfg, false)?;
    let checkpoint = pipeline::cmd_train(&dir.join("prep"), &dir.join("model"), &cfg, None, false)?.path;

    let trace = dir.join("sim/traces").read_dir()?.flatten().map(|e| e.path()).min().expect("a trace");
    let wav = dir.join("reconstructed.wav");
    pipeline::cmd_reconstruct(&checkpoint, &trace, &wav, &cfg, None, None, false)?;

    let model = pipeline::cmd_evaluate(
        &manifest,
        &EvalSource::Checkpoint(checkpoint.clone()),
        SplitSelect::Test,
        None,
        &dir.join("eval-model"),
        &cfg,
        false,
    )?;
    let baseline = if with_baseline {
        let b = pipeline::cmd_evaluate(&manifest, &EvalSource::Baseline, SplitSelect::Test, None, &dir.join("eval-baseline"), &cfg, false)?;
        Some((b.summary.mean_mcd, b.summary.mean_image_l1.unwrap_or(f64::NAN)))
    } else {
        None
    };
    Ok(Run {
        dir: dir.to_path_buf(),
        manifest,
        checkpoint,
        wav,
        model_mcd: model.summary.mean_mcd,
        model_l1: model.summary.mean_image_l1.unwrap_or(f64::NAN),
        baseline,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn corpus_config() -> CorpusConfig {
    // 50 files x 16 s = 200 four-second pairs. Speakers sit between the
    // Nyquist limits of the slow sensor rates, so the rate ablation has
    // something to resolve.
    CorpusConfig {
        files: 50,
        seconds_per_file: 16.0,
        speakers: 8,
        f0_min_hz: 55.0,
        f0_max_hz: 130.0,
        seed: 1,
        ..Default::default()
    }
}

fn criterion_end_to_end(run: &Run, pairs: usize, corpus_s: f64) -> Outcome {
    let (base_mcd, base_l1) = run.baseline.unwrap();
    let total = run.seconds + corpus_s;
    let wav_ok = accear::vocoder::load_wav(&run.wav).map(|w| w.len() > 0).unwrap_or(false);
    outcome(
        pairs == 200
            && total < 1800.0
            && wav_ok
            && run.model_l1 < base_l1
            && run.model_mcd < base_mcd,
        format!(
            "{pairs} pairs, {total:.0} s; held-out image L1 {:.4} vs baseline {base_l1:.4}, MCD {:.2} vs baseline {base_mcd:.2}",
            run.model_l1, run.model_mcd
        ),
    )
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn criterion_determinism(a: &Run, b: &Run) -> Outcome {
    let mut compared = Vec::new();
    compared.push(a.manifest.clone());
    compared.push(a.dir.join("model").join(pipeline::LOSSES_FILE));
    compared.push(a.checkpoint.clone());
    compared.extend(files_under(&a.dir.join("model/checkpoints")));
    compared.push(a.wav.clone());
    let mut differing = Vec::new();
    for pa in &compared {
        let rel = pa.strip_prefix(&a.dir).unwrap();
        let pb = b.dir.join(rel);
        match (std::fs::read(pa), std::fs::read(&pb)) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => differing.push(rel.display().to_string()),
        }
    }
    outcome(
        differing.is_empty() && compared.len() >= 5,
        if differing.is_empty() {
            format!("{} files byte-identical (manifest, losses, checkpoints, wav)", compared.len())
        } else {
            format!("differ: {}", differing.join(", "))
        },
    )
}

fn criterion_rate_ablation(r167: f64, r200: f64, r500: f64) -> Outcome {
    outcome(
        r167 >= r200 && r200 >= r500,
        format!("held-out MCD 167 Hz {r167:.3}, 200 Hz {r200:.3}, 500 Hz {r500:.3}"),
    )
}

// ---------------------------------------------------------------- main

fn report(results: &mut Vec<bool>, n: usize, name: &str, o: Outcome) {
    println!("criterion {n:>2} {:<28} {} | {}", name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    results.push(o.pass);
}

fn main() {
    pipeline::init_threads().expect("thread pool");
    let keep = std::env::var_os("ACCEAR_ACCEPT_KEEP").map(PathBuf::from);
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = keep.clone().unwrap_or_else(|| tmp.path().to_path_buf());
    std::fs::create_dir_all(&root).expect("output dir");

    let mut results = Vec::new();
    println!(
        "criterion  1 {:<28} INFO | reported figures need the original recordings and listeners; \
         covered by the property criteria below",
        "published averages"
    );
    report(&mut results, 2, "gradient checks", criterion_gradients());
    report(&mut results, 3, "stft round trip", criterion_stft());
    report(&mut results, 4, "griffin-lim", criterion_griffin_lim());
    report(&mut results, 5, "mcd and wer oracles", criterion_metrics());
    report(&mut results, 6, "mel formula", criterion_mel());
    report(&mut results, 7, "high-pass response", criterion_filter());

    let t = Instant::now();
    let corpus = root.join("corpus");
    let cc = corpus_config();
    pipeline::cmd_synth_corpus(&corpus, &cc).expect("corpus");
    let corpus_s = t.elapsed().as_secs_f64();
    let pairs = cc.files * (cc.seconds_per_file / cc.segment_seconds) as usize;

    let runs = (|| -> accear::Result<_> {
        let a = run_pipeline(&corpus, &root.join("run-500-a"), 500.0, true)?;
        let b = run_pipeline(&corpus, &root.join("run-500-b"), 500.0, false)?;
        let r200 = run_pipeline(&corpus, &root.join("run-200"), 200.0, false)?;
        let r167 = run_pipeline(&corpus, &root.join("run-167"), 167.0, false)?;
        Ok((a, b, r200, r167))
    })();
    match runs {
        Ok((a, b, r200, r167)) => {
            report(&mut results, 8, "end-to-end synthetic run", criterion_end_to_end(&a, pairs, corpus_s));
            report(&mut results, 9, "determinism", criterion_determinism(&a, &b));
            report(
                &mut results,
                10,
                "sampling-rate ablation",
                criterion_rate_ablation(r167.model_mcd, r200.model_mcd, a.model_mcd),
            );
        }
        Err(e) => {
            for (n, name) in [(8, "end-to-end synthetic run"), (9, "determinism"), (10, "sampling-rate ablation")] {
                report(&mut results, n, name, outcome(false, format!("pipeline error: {e}")));
            }
        }
    }

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
