//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 3 5`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use bcvnn::data::{load_mnist_complex, ComplexMode};
use bcvnn::hw::{classify_layer, estimate_layer, estimate_network, LayerClass, MappingScheme};
use bcvnn::inference::{ece, evaluate, mc_predict, EvalOptions, DEFAULT_MC_SAMPLES};
use bcvnn::layers::{
    bernoulli_channel_dropout, complex_conv2d, complex_dense, layer_backward, layer_forward, Activation,
    ComplexWeights, DropoutMask, LayerSpec, PartMode, PoolReduction,
};
use bcvnn::search::{enumerate_all, run_search, CachedEvaluator, Constraint, Genome, Metrics, Objective, SearchConfig};
use bcvnn::train::{backward, batch_objective, train, Dataset, TrainConfig};
use bcvnn::{ComplexTensor, NetworkSpec, NetworkWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(u32, &str, Check, Option<u64>); 9] = [
        (1, "complex arithmetic matches naive oracle", c1_oracle, Some(10)),
        (2, "analytic gradients match finite differences", c2_gradients, Some(60)),
        (3, "dropout statistics and part isolation", c3_dropout, None),
        (4, "MC dropout sanity", c4_mc, None),
        (5, "ECE fixtures and calibrated stream", c5_ece, None),
        (6, "design-space combinatorics", c6_combinatorics, None),
        (7, "search finds the enumerated optimum", c7_search, Some(30)),
        (8, "end-to-end MNIST learning and search", c8_mnist, Some(15 * 60)),
        (9, "hardware model properties", c9_hardware, None),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(secs)) = (&result, limit) {
            if elapsed > Duration::from_secs(secs) {
                result = Err(format!("{detail}; runtime {:.1}s exceeds {secs}s", elapsed.as_secs_f64()));
            }
        }
        match result {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail} [{:.2}s]", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL  {name}: {detail} [{:.2}s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> ComplexTensor<f64> {
    let n = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ComplexTensor::from_parts(re, im, shape).unwrap()
}

fn random_weights(kernel: &[usize], with_bias: bool, rng: &mut ChaCha8Rng) -> ComplexWeights<f64> {
    let k = random_tensor(kernel, rng);
    let b = with_bias.then(|| random_tensor(&[kernel[0]], rng));
    ComplexWeights::new(k, b).unwrap()
}

fn cmul((a, b): (f64, f64), (c, d): (f64, f64)) -> (f64, f64) {
    (a * c - b * d, a * d + b * c)
}

fn relative_error(got: &ComplexTensor<f64>, expect: &[(f64, f64)]) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (i, &(er, ei)) in expect.iter().enumerate() {
        let (gr, gi) = got.get(i);
        diff = diff.max((gr - er).abs()).max((gi - ei).abs());
        scale = scale.max(er.abs()).max(ei.abs());
    }
    diff / scale.max(f64::MIN_POSITIVE)
}

fn c1_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let cases = 120;
    for case in 0..cases {
        let (n, c, h, w) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=8), rng.random_range(1..=8));
        let o = rng.random_range(1..=4);
        let (kh, kw) = (rng.random_range(1..=h), rng.random_range(1..=w));
        let stride = rng.random_range(1..=2);
        let x = random_tensor(&[n, c, h, w], &mut rng);
        let wt = random_weights(&[o, c, kh, kw], case % 3 != 0, &mut rng);
        let got = complex_conv2d(&x, &wt, stride).map_err(|e| e.to_string())?;
        let (oh, ow) = ((h - kh) / stride + 1, (w - kw) / stride + 1);
        let mut expect = Vec::new();
        for b in 0..n {
            for oc in 0..o {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = wt.bias.as_ref().map_or((0.0, 0.0), |bias| bias.get(oc));
                        for ic in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let a = x.get(((b * c + ic) * h + y * stride + i) * w + xx * stride + j);
                                    let k = wt.kernel.get(((oc * c + ic) * kh + i) * kw + j);
                                    let p = cmul(k, a);
                                    acc = (acc.0 + p.0, acc.1 + p.1);
                                }
                            }
                        }
                        expect.push(acc);
                    }
                }
            }
        }
        worst = worst.max(relative_error(&got, &expect));

        // Dense over the flattened (c, h, w) features of the same batch.
        let features = c * h * w;
        let out = rng.random_range(1..=8);
        let wd = random_weights(&[out, features], case % 2 == 0, &mut rng);
        let got = complex_dense(&x, &wd).map_err(|e| e.to_string())?;
        let mut expect = Vec::new();
        for b in 0..n {
            for r in 0..out {
                let mut acc = wd.bias.as_ref().map_or((0.0, 0.0), |bias| bias.get(r));
                for f in 0..features {
                    let p = cmul(wd.kernel.get(r * features + f), x.get(b * features + f));
                    acc = (acc.0 + p.0, acc.1 + p.1);
                }
                expect.push(acc);
            }
        }
        worst = worst.max(relative_error(&got, &expect));
    }
    ensure(worst <= 1e-9, || format!("worst relative error {worst:.3e} > 1e-9"))?;
    Ok(format!("{cases} conv + {cases} dense instances, worst relative error {worst:.2e}"))
}

const FD_EPS: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
const FD_FLOOR: f64 = 1e-4;

fn fd_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// `sum(g_re * y_re + g_im * y_im)` for a layer output `y`.
fn probe(y: &ComplexTensor<f64>, g: &ComplexTensor<f64>) -> f64 {
    y.real().iter().zip(g.real()).chain(y.imag().iter().zip(g.imag())).map(|(a, b)| a * b).sum()
}

/// Central differences over one part of a tensor.
fn fd_part(
    values: &mut [f64],
    analytic: &[f64],
    worst: &mut f64,
    mut f: impl FnMut(&[f64]) -> f64,
) {
    for k in 0..values.len() {
        let orig = values[k];
        values[k] = orig + FD_EPS;
        let up = f(values);
        values[k] = orig - FD_EPS;
        let down = f(values);
        values[k] = orig;
        *worst = worst.max(fd_error(analytic[k], (up - down) / (2.0 * FD_EPS)));
    }
}

fn check_layer(
    layer: &LayerSpec,
    x: &ComplexTensor<f64>,
    w: Option<&ComplexWeights<f64>>,
    mask: Option<&DropoutMask>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let y = layer_forward(layer, w, x, mask).unwrap();
    let g = random_tensor(y.shape(), rng);
    let (gx, gw) = layer_backward(layer, w, x, mask, &g).unwrap();
    let mut worst = 0.0;
    let shape = x.shape().to_vec();
    for part in 0..2 {
        let (mut re, mut im) = (x.real().to_vec(), x.imag().to_vec());
        let analytic = if part == 0 { gx.real() } else { gx.imag() };
        let (vals, other) = if part == 0 { (&mut re, im) } else { (&mut im, re) };
        fd_part(vals, analytic, &mut worst, |v| {
            let t = if part == 0 {
                ComplexTensor::from_parts(v.to_vec(), other.clone(), &shape)
            } else {
                ComplexTensor::from_parts(other.clone(), v.to_vec(), &shape)
            };
            probe(&layer_forward(layer, w, &t.unwrap(), mask).unwrap(), &g)
        });
    }
    if let (Some(w), Some(gw)) = (w, gw) {
        let analytic: Vec<Vec<f64>> = gw.slices().iter().map(|s| s.to_vec()).collect();
        for (slot, a) in analytic.iter().enumerate() {
            let mut wm = w.clone();
            let mut vals = wm.slices_mut()[slot].to_vec();
            fd_part(&mut vals, a, &mut worst, |v| {
                wm.slices_mut()[slot].copy_from_slice(v);
                probe(&layer_forward(layer, Some(&wm), x, mask).unwrap(), &g)
            });
        }
    }
    worst
}

/// Values spread at least `2 / len` apart, so no max-pool window has a near tie.
fn spread_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> ComplexTensor<f64> {
    let n: usize = shape.iter().product();
    let mut part = || {
        let mut v: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64 * 2.0 - 1.0).collect();
        for i in (1..n).rev() {
            v.swap(i, rng.random_range(0..=i));
        }
        v
    };
    let (re, im) = (part(), part());
    ComplexTensor::from_parts(re, im, shape).unwrap()
}

/// Values bounded away from the ReLU kink.
fn off_kink_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> ComplexTensor<f64> {
    let mut t = random_tensor(shape, rng);
    let (re, im) = t.parts_mut();
    for v in re.iter_mut().chain(im.iter_mut()) {
        *v = v.signum() * (0.01 + v.abs());
    }
    t
}

fn c2_gradients() -> Result<String, String> {
    let configs = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut report = Vec::new();
    let mut failures = Vec::new();
    let mut record = |kind: &str, worst: f64| {
        if worst > FD_TOL {
            failures.push(format!("{kind} worst {worst:.2e}"));
        }
        report.push(format!("{kind} {worst:.1e}"));
    };

    let mut worst = 0.0f64;
    for _ in 0..configs {
        let (n, c, h, w) = (rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(3..=6), rng.random_range(3..=6));
        let o = rng.random_range(1..=3);
        let (kh, kw) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let layer = LayerSpec::ComplexConv2D { out_channels: o, kernel: [kh, kw], stride: rng.random_range(1..=2) };
        let x = random_tensor(&[n, c, h, w], &mut rng);
        let wt = random_weights(&[o, c, kh, kw], true, &mut rng);
        worst = worst.max(check_layer(&layer, &x, Some(&wt), None, &mut rng));
    }
    record("conv2d", worst);

    let mut worst = 0.0f64;
    for _ in 0..configs {
        let (n, f, out) = (rng.random_range(1..=3), rng.random_range(1..=12), rng.random_range(1..=6));
        let x = random_tensor(&[n, f], &mut rng);
        let wt = random_weights(&[out, f], true, &mut rng);
        worst = worst.max(check_layer(&LayerSpec::ComplexDense { out_features: out }, &x, Some(&wt), None, &mut rng));
    }
    record("dense", worst);

    for reduction in [PoolReduction::Max, PoolReduction::Avg] {
        let mut worst = 0.0f64;
        for _ in 0..configs {
            let window = rng.random_range(1..=3);
            let shape = [rng.random_range(1..=2), rng.random_range(1..=3), window * rng.random_range(1..=3), window * rng.random_range(1..=3)];
            let x = spread_tensor(&shape, &mut rng);
            worst = worst.max(check_layer(&LayerSpec::ComplexPool { window, reduction }, &x, None, None, &mut rng));
        }
        record(&format!("pool-{reduction:?}").to_lowercase(), worst);
    }

    let mut worst = 0.0f64;
    for _ in 0..configs {
        let shape = [rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
        let x = off_kink_tensor(&shape, &mut rng);
        let layer = LayerSpec::ComplexActivation { activation: Activation::CRelu };
        worst = worst.max(check_layer(&layer, &x, None, None, &mut rng));
    }
    record("activation", worst);

    let mut worst = 0.0f64;
    for k in 0..configs {
        let mode = PartMode::ALL[k % 3];
        let keep_rate = rng.random_range(0.3..1.0);
        let shape = [rng.random_range(1..=2), rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=3)];
        let x = random_tensor(&shape, &mut rng);
        let mask = DropoutMask::sample(shape[0], shape[1], keep_rate, mode, &mut rng).unwrap();
        let layer = LayerSpec::BernoulliDropout { keep_rate, part_mode: mode };
        worst = worst.max(check_layer(&layer, &x, None, Some(&mask), &mut rng));
    }
    record("dropout", worst);

    // Whole network: magnitude-softmax NLL, weight decay and a fixed dropout draw.
    let mut worst = 0.0f64;
    for k in 0..configs {
        let spec = NetworkSpec::new(
            vec![1, 6, 6],
            3,
            vec![
                LayerSpec::ComplexConv2D { out_channels: 2, kernel: [3, 3], stride: 1 },
                LayerSpec::ComplexActivation { activation: Activation::CRelu },
                LayerSpec::BernoulliDropout { keep_rate: 0.7, part_mode: PartMode::ALL[k % 3] },
                LayerSpec::ComplexPool { window: 2, reduction: PoolReduction::Avg },
                LayerSpec::ComplexDense { out_features: 3 },
            ],
        )
        .unwrap();
        let weights = NetworkWeights::<f64>::init(&spec, k as u64).unwrap();
        let x = random_tensor(&[2, 1, 6, 6], &mut rng);
        let labels = vec![rng.random_range(0..3), rng.random_range(0..3)];
        let wd = 1e-3;
        let seed = rng.random::<u64>();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let out = backward(&spec, &weights, &x, &labels, wd, Some(&mut r)).unwrap();
        for (li, lw) in weights.layers.iter().enumerate() {
            let (Some(lw), Some(lg)) = (lw, &out.grads.layers[li]) else { continue };
            for (slot, a) in lg.slices().iter().enumerate() {
                let mut wm = weights.clone();
                let mut vals = lw.slices()[slot].to_vec();
                fd_part(&mut vals, a, &mut worst, |v| {
                    wm.layers[li].as_mut().unwrap().slices_mut()[slot].copy_from_slice(v);
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    batch_objective(&spec, &wm, &x, &labels, wd, Some(&mut r)).unwrap()
                });
            }
        }
    }
    record("network loss", worst);

    if failures.is_empty() {
        Ok(format!("{configs} configs per kind; worst per kind: {}", report.join(", ")))
    } else {
        Err(failures.join("; "))
    }
}

fn c3_dropout() -> Result<String, String> {
    let draws = 10_000;
    let (n, c, h, w) = (2, 8, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&[n, c, h, w], &mut rng);
    let plane = h * w;
    let mut worst_z = 0.0f64;
    for keep_rate in [0.5, 0.8] {
        for mode in PartMode::ALL {
            let mut kept = [vec![0usize; n * c], vec![0usize; n * c]];
            let scale = 1.0 / keep_rate;
            for _ in 0..draws {
                let y = bernoulli_channel_dropout(&x, keep_rate, mode, &mut rng).map_err(|e| e.to_string())?;
                for (part, masked) in [(0, mode.masks_real()), (1, mode.masks_imag())] {
                    let (xs, ys) = if part == 0 { (x.real(), y.real()) } else { (x.imag(), y.imag()) };
                    if !masked {
                        let identical = xs.iter().zip(ys).all(|(a, b)| a.to_bits() == b.to_bits());
                        ensure(identical, || format!("{mode} changed the untouched part"))?;
                        continue;
                    }
                    for ch in 0..n * c {
                        let xs = &xs[ch * plane..][..plane];
                        let ys = &ys[ch * plane..][..plane];
                        let zeroed = ys.iter().all(|&v| v == 0.0);
                        let scaled = xs.iter().zip(ys).all(|(&a, &b)| b == a * scale);
                        ensure(zeroed || scaled, || format!("{mode}: channel {ch} partially masked"))?;
                        if scaled {
                            kept[part][ch] += 1;
                        }
                    }
                }
            }
            let se = (keep_rate * (1.0 - keep_rate) / draws as f64).sqrt();
            for (part, masked) in [(0, mode.masks_real()), (1, mode.masks_imag())] {
                if !masked {
                    continue;
                }
                for &k in &kept[part] {
                    let z = (k as f64 / draws as f64 - keep_rate).abs() / se;
                    worst_z = worst_z.max(z);
                }
            }
        }
    }
    ensure(worst_z <= 3.0, || format!("keep frequency {worst_z:.2} standard errors from keep_rate"))?;
    Ok(format!(
        "{draws} draws per (keep_rate, mode); worst deviation {worst_z:.2} SE; isolation and channel granularity held on every draw"
    ))
}

fn mc_spec(keep_rate: f64) -> NetworkSpec {
    NetworkSpec::new(
        vec![2, 4, 4],
        4,
        vec![
            LayerSpec::ComplexConv2D { out_channels: 3, kernel: [3, 3], stride: 1 },
            LayerSpec::ComplexActivation { activation: Activation::CRelu },
            LayerSpec::BernoulliDropout { keep_rate, part_mode: PartMode::Both },
            LayerSpec::ComplexDense { out_features: 5 },
            LayerSpec::BernoulliDropout { keep_rate, part_mode: PartMode::Imag },
            LayerSpec::ComplexDense { out_features: 4 },
        ],
    )
    .unwrap()
}

fn small_dataset(n: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n).map(|_| random_tensor(&[2, 4, 4], &mut rng)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..4)).collect();
    Dataset::new(inputs, labels, 4).unwrap()
}

fn c4_mc() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let deterministic = mc_spec(1.0);
    let w = NetworkWeights::<f64>::init(&deterministic, 4).unwrap();
    for t in [1, 3, 10] {
        for _ in 0..10 {
            let x = random_tensor(&[2, 4, 4], &mut rng);
            let p = mc_predict(&deterministic, &w, &x, t, &mut rng).map_err(|e| e.to_string())?;
            ensure(p.std_probs.iter().all(|&s| s == 0.0), || format!("T={t}: nonzero std at keep_rate 1"))?;
        }
    }

    ensure(DEFAULT_MC_SAMPLES == 3, || format!("default T is {DEFAULT_MC_SAMPLES}"))?;
    let opts = EvalOptions::default();
    ensure(opts.samples == 3, || format!("EvalOptions default samples {}", opts.samples))?;
    let spec = mc_spec(0.6);
    let w = NetworkWeights::<f64>::init(&spec, 5).unwrap();
    let data = small_dataset(40, 6);
    let a = evaluate(&spec, &w, &data, &EvalOptions { seed: 9, ..opts }).map_err(|e| e.to_string())?;
    ensure(a.predictions.iter().all(|p| p.samples_used == 3), || "default evaluation did not use T=3".into())?;
    ensure(a.predictions.iter().any(|p| p.std_probs.iter().any(|&s| s > 0.0)), || {
        "keep_rate 0.6 produced no spread".into()
    })?;

    let b = evaluate(&spec, &w, &data, &EvalOptions { seed: 9, ..opts }).map_err(|e| e.to_string())?;
    let c = evaluate(&spec, &w, &data, &EvalOptions { seed: 9, threads: 4, ..opts }).map_err(|e| e.to_string())?;
    let bits = |e: &bcvnn::inference::Evaluation| -> Vec<u64> {
        e.predictions
            .iter()
            .flat_map(|p| p.mean_probs.iter().chain(&p.std_probs).map(|v| v.to_bits()))
            .chain([e.report.accuracy.to_bits(), e.report.ece.to_bits()])
            .collect()
    };
    ensure(bits(&a) == bits(&b), || "seeded evaluation not reproducible".into())?;
    ensure(bits(&a) == bits(&c), || "evaluation depends on thread count".into())?;
    let d = evaluate(&spec, &w, &data, &EvalOptions { seed: 10, ..opts }).map_err(|e| e.to_string())?;
    ensure(bits(&a) != bits(&d), || "seed has no effect".into())?;
    Ok("std exactly 0 at keep_rate 1 for T in {1,3,10}; default T=3; seeded runs bit-identical across thread counts".into())
}

fn c5_ece() -> Result<String, String> {
    let one_bin = ece(&[0.8, 0.6], &[true, false], 1).map_err(|e| e.to_string())?;
    let two_bins = ece(&[0.4, 0.9, 0.9], &[false, true, true], 2).map_err(|e| e.to_string())?;
    let perfect = ece(&[1.0; 5], &[true; 5], 15).map_err(|e| e.to_string())?;
    ensure((one_bin - 0.2).abs() < 1e-12, || format!("one-bin fixture gave {one_bin}"))?;
    ensure((two_bins - 0.2).abs() < 1e-12, || format!("two-bin fixture gave {two_bins}"))?;
    ensure(perfect == 0.0, || format!("perfect predictions gave {perfect}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let correct: Vec<bool> = conf.iter().map(|&c| rng.random::<f64>() < c).collect();
    let stream = ece(&conf, &correct, 15).map_err(|e| e.to_string())?;
    ensure(stream < 0.03, || format!("calibrated stream ECE {stream:.4} >= 0.03"))?;
    Ok(format!("fixtures {one_bin:.12} and {two_bins:.12}; calibrated stream of {n} gives {stream:.4}"))
}

fn c6_combinatorics() -> Result<String, String> {
    let flat = |_: &Genome| Ok(Metrics { accuracy: 0.5, ece: 0.1 });
    for (n, expect) in [(1, 3), (3, 27), (6, 729)] {
        let records = enumerate_all(n, flat, Objective::MaxAcc, None).map_err(|e| e.to_string())?;
        let distinct: std::collections::HashSet<_> = records.iter().map(|r| r.genome.clone()).collect();
        ensure(records.len() == expect && distinct.len() == expect, || {
            format!("N={n}: {} records, {} distinct, expected {expect}", records.len(), distinct.len())
        })?;
    }
    let table = [
        ("B-B-B", 6),
        ("I-I-B", 4),
        ("I-R-I", 3),
        ("R-B-R", 4),
        ("B-B-B-B-B", 10),
        ("R-I-I-I-R", 5),
        ("B-R-B-B-B", 9),
        ("B-B-B-B-B-B", 12),
        ("R-R-R-R-B-R", 7),
        ("B-I-I-I-B-R", 8),
    ];
    for (g, expect) in table {
        let got = g.parse::<Genome>().map_err(|e| e.to_string())?.dropout_count();
        ensure(got == expect, || format!("{g}: dropout count {got}, expected {expect}"))?;
    }
    Ok(format!("3^N records for N in {{1,3,6}}; {} reference dropout counts match (B-B-B=6, I-I-B=4, I-R-I=3, R-B-R=4)", table.len()))
}

fn c7_search() -> Result<String, String> {
    let tables = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut evaluations = 0;
    for case in 0..tables {
        let n = 1 + case % 4;
        let total = 3usize.pow(n as u32);
        let table: HashMap<Genome, Metrics> = (0..total)
            .map(|i| {
                let m = Metrics { accuracy: rng.random_range(0.5..1.0), ece: rng.random_range(0.0..0.2) };
                (Genome::from_index(i, n), m)
            })
            .collect();
        let objective = match case % 3 {
            0 => Objective::MaxAcc,
            1 => Objective::MinEce,
            _ => Objective::Weighted { w_acc: 1.0, w_ece: rng.random_range(0.5..5.0) },
        };
        let bound = rng.random_range(n..=2 * n);
        let constraint = match case % 4 {
            0 => None,
            1 | 2 => Some(Constraint::MaxDropout(bound)),
            _ => Some(Constraint::MinDropout(bound)),
        };
        let config = SearchConfig {
            population_size: 8,
            mutation_portion: 0.5,
            mutation_prob: 0.5,
            crossover_prob: 0.5,
            iterations: 40,
            objective,
            constraint,
            seed: case as u64,
        };
        let evaluator = CachedEvaluator::new(table.clone());
        let outcome = run_search(n, &config, evaluator).map_err(|e| e.to_string())?;
        let exhaustive = enumerate_all(n, CachedEvaluator::new(table), objective, constraint).map_err(|e| e.to_string())?;
        let optimum = &exhaustive[0];
        ensure(optimum.feasible, || format!("table {case}: no feasible genome"))?;
        ensure(outcome.best.genome == optimum.genome, || {
            format!("table {case} (N={n}): search found {} but optimum is {}", outcome.best.genome, optimum.genome)
        })?;
        let admits = |g: &Genome| constraint.is_none_or(|c| c.admits(g));
        ensure(admits(&outcome.best.genome) && outcome.pareto.iter().all(|r| admits(&r.genome)), || {
            format!("table {case}: returned genome violates {constraint:?}")
        })?;
        evaluations += outcome.evaluations;
    }
    Ok(format!("{tables} random tables with N in 1..=4, all optima matched ({evaluations} distinct evaluations)"))
}

fn mnist_spec() -> NetworkSpec {
    let dropout = |part_mode| LayerSpec::BernoulliDropout { keep_rate: 0.9, part_mode };
    NetworkSpec::new(
        vec![1, 28, 28],
        10,
        vec![
            LayerSpec::ComplexConv2D { out_channels: 6, kernel: [5, 5], stride: 1 },
            LayerSpec::ComplexActivation { activation: Activation::CRelu },
            LayerSpec::ComplexPool { window: 2, reduction: PoolReduction::Avg },
            dropout(PartMode::Both),
            LayerSpec::ComplexConv2D { out_channels: 12, kernel: [5, 5], stride: 1 },
            LayerSpec::ComplexActivation { activation: Activation::CRelu },
            LayerSpec::ComplexPool { window: 2, reduction: PoolReduction::Avg },
            dropout(PartMode::Both),
            LayerSpec::ComplexDense { out_features: 32 },
            LayerSpec::ComplexActivation { activation: Activation::CRelu },
            dropout(PartMode::Both),
            LayerSpec::ComplexDense { out_features: 10 },
        ],
    )
    .unwrap()
}

fn mnist_train_config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 32, learning_rate: 0.02, weight_decay: 1e-4, seed: 8, ..TrainConfig::default() }
}

fn train_and_score(
    spec: &NetworkSpec,
    train_set: &Dataset<f64>,
    test_set: &Dataset<f64>,
    epochs: usize,
) -> Result<(f64, f64), String> {
    let outcome = train(spec, train_set, &mnist_train_config(epochs)).map_err(|e| e.to_string())?;
    let eval = evaluate(spec, &outcome.weights, test_set, &EvalOptions { seed: 8, ..EvalOptions::default() })
        .map_err(|e| e.to_string())?;
    Ok((eval.report.accuracy, eval.report.ece))
}

fn c8_mnist() -> Result<String, String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/mnist");
    let load = |prefix: &str| -> Result<Dataset<f64>, String> {
        load_mnist_complex(
            dir.join(format!("{prefix}-images-idx3-ubyte")),
            dir.join(format!("{prefix}-labels-idx1-ubyte")),
            ComplexMode::ZeroImag,
            None,
        )
        .map_err(|e| e.to_string())
    };
    let (train_set, test_set) = (load("train")?, load("test")?);
    ensure(train_set.len() == 2000 && test_set.len() == 1000, || "unexpected MNIST subset sizes".into())?;

    let base = mnist_spec();
    let n = base.bayesian_layer_count();
    ensure(n == 3, || format!("{n} Bayesian layers"))?;
    let (all_b_acc, all_b_ece) = train_and_score(&base, &train_set, &test_set, 10)?;
    ensure(all_b_acc >= 0.90, || format!("B-B-B test accuracy {all_b_acc:.4} < 0.90"))?;

    // The search scores genomes on a validation split of the training data
    // with a shorter schedule; the winner is then retrained and tested.
    let (fit, val) = train_set.split(1500);
    let evaluator = |g: &Genome| {
        let spec = base.with_part_modes(g.modes())?;
        let outcome = train(&spec, &fit, &mnist_train_config(3))?;
        let eval = evaluate(&spec, &outcome.weights, &val, &EvalOptions { seed: 8, ..EvalOptions::default() })?;
        Ok(Metrics { accuracy: eval.report.accuracy, ece: eval.report.ece })
    };
    let config = SearchConfig { iterations: 3, seed: 8, ..SearchConfig::default() };
    let outcome = run_search(n, &config, evaluator).map_err(|e| e.to_string())?;
    let best = outcome.best.genome;
    let (searched_acc, searched_ece) = if best == Genome::uniform(PartMode::Both, n).unwrap() {
        (all_b_acc, all_b_ece)
    } else {
        train_and_score(&base.with_part_modes(best.modes()).unwrap(), &train_set, &test_set, 10)?
    };
    ensure(searched_acc >= all_b_acc - 0.01, || {
        format!("searched {best} accuracy {searched_acc:.4} < B-B-B {all_b_acc:.4} - 0.01")
    })?;
    Ok(format!(
        "B-B-B test acc {all_b_acc:.4} (ECE {all_b_ece:.4}); searched {best} acc {searched_acc:.4} (ECE {searched_ece:.4}) after {} evaluations",
        outcome.evaluations
    ))
}

fn c9_hardware() -> Result<String, String> {
    let spec = mnist_spec();
    let shapes = spec.layer_shapes().map_err(|e| e.to_string())?;
    for (layer, shape) in spec.layers().iter().zip(&shapes) {
        let lat = estimate_layer(layer, shape, MappingScheme::LatencyOpt).map_err(|e| e.to_string())?;
        let res = estimate_layer(layer, shape, MappingScheme::ResourceOpt).map_err(|e| e.to_string())?;
        ensure(lat.mac_ops == res.mac_ops, || format!("{} mac_ops differ across schemes", layer.name()))?;
        if classify_layer(layer) != LayerClass::Class3 {
            ensure(res.latency_units == 2.0 * lat.latency_units, || {
                format!("{} resource-opt latency is not 2x", layer.name())
            })?;
        }
    }

    let input = [512];
    let mut prev: Option<(f64, f64)> = None;
    for out in [128, 256, 512, 1024] {
        let layer = LayerSpec::ComplexDense { out_features: out };
        let lat = estimate_layer(&layer, &input, MappingScheme::LatencyOpt).map_err(|e| e.to_string())?.latency_units;
        let res = estimate_layer(&layer, &input, MappingScheme::ResourceOpt).map_err(|e| e.to_string())?.latency_units;
        if let Some((pl, pgap)) = prev {
            ensure(lat > pl && res - lat > pgap, || format!("dense sweep not monotone at {out}"))?;
        }
        prev = Some((lat, res - lat));
    }

    // Every genome against every genome it dominates (R or I raised to B).
    let n = spec.bayesian_layer_count();
    let genomes: Vec<Genome> = (0..3usize.pow(n as u32)).map(|i| Genome::from_index(i, n)).collect();
    let mut costs = HashMap::new();
    for g in &genomes {
        for scheme in MappingScheme::ALL {
            let c = estimate_network(&spec, g.modes(), scheme).map_err(|e| e.to_string())?.total;
            ensure(c.dropout_engines as usize == g.dropout_count(), || format!("{g}: dropout engines != count"))?;
            costs.insert((g.clone(), scheme), c);
        }
    }
    for a in &genomes {
        for b in &genomes {
            let dominated = a.modes().iter().zip(b.modes()).all(|(x, y)| x == y || *y == PartMode::Both);
            if !dominated || a.dropout_count() >= b.dropout_count() {
                continue;
            }
            for scheme in MappingScheme::ALL {
                let (ca, cb) = (costs[&(a.clone(), scheme)], costs[&(b.clone(), scheme)]);
                ensure(ca.latency_units <= cb.latency_units && ca.dropout_engines < cb.dropout_engines, || {
                    format!("{scheme}: cost of {a} exceeds {b}")
                })?;
            }
        }
    }
    // With equally sized Bayesian layers, resource-opt latency follows the count.
    let uniform = NetworkSpec::new(
        vec![8],
        4,
        vec![
            LayerSpec::ComplexDense { out_features: 16 },
            LayerSpec::BernoulliDropout { keep_rate: 0.5, part_mode: PartMode::Both },
            LayerSpec::ComplexDense { out_features: 16 },
            LayerSpec::BernoulliDropout { keep_rate: 0.5, part_mode: PartMode::Both },
            LayerSpec::ComplexDense { out_features: 16 },
            LayerSpec::BernoulliDropout { keep_rate: 0.5, part_mode: PartMode::Both },
            LayerSpec::ComplexDense { out_features: 4 },
        ],
    )
    .unwrap();
    let mut by_count: Vec<(usize, f64)> = genomes
        .iter()
        .map(|g| {
            let c = estimate_network(&uniform, g.modes(), MappingScheme::ResourceOpt).unwrap().total;
            (g.dropout_count(), c.latency_units)
        })
        .collect();
    by_count.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in by_count.windows(2) {
        let ok = if w[0].0 == w[1].0 { w[0].1 == w[1].1 } else { w[0].1 < w[1].1 };
        ensure(ok, || format!("uniform network: latency not monotone in dropout count ({w:?})"))?;
    }
    Ok("mac_ops scheme-invariant; class 1/2 latency ratio exactly 2; dense sweep widening; cost monotone in dropout count".into())
}
