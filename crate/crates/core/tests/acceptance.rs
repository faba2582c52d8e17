//! Acceptance criteria 1–15, one line each.
//!
//! Runs without the libtest harness. Pass criterion numbers as arguments to run a subset:
//! `cargo test --release --test acceptance -- 2 3 6`. By default the process exits 0 and the
//! lines carry the verdicts; set `NCKERNEL_ACCEPTANCE_STRICT=1` to exit 1 on any FAIL.
//! `NCKERNEL_ACCEPTANCE_QUICK=1` skips the slow EoS and training criteria (11–14).

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use nckernel::data::make_d1;
use nckernel::eos::{default_schedule, solve_eos, AnnealSchedule, EosProblem, SolverConfig, DEFAULT_RIDGE};
use nckernel::fcn::{forward, init_fcn, loss_and_grad, penultimate_features, train, FcnArch, FcnModel, TrainConfig};
use nckernel::kernels::{feature_gram, Activation};
use nckernel::nc1::data_nc1;
use nckernel::predict::{erf_case_values, GaussParams1D};
use nckernel::rng::{derive_seed, NormalStream};
use nckernel::sweep::DatasetPreset;
use nckernel::verify::run_verify;
use nckernel::{assemble_gram, nc1_of_features, nc1_of_gram, Dataset, HyperParams, KernelKind};

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    /// Failure of an expected-fragile criterion.
    Warn,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn judge(pass: bool, detail: String) -> Outcome {
    Outcome { verdict: if pass { Verdict::Pass } else { Verdict::Fail }, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
}

fn d1_seeds(n: usize, d0: usize, count: u64) -> Vec<Dataset> {
    (0..count).map(|s| make_d1(n, d0, s).unwrap()).collect()
}

fn log10_nc1(kind: KernelKind, ds: &Dataset) -> f64 {
    nc1_of_gram(&assemble_gram(kind, ds, &HyperParams::standard(ds.d0())).unwrap()).unwrap().log10_nc1
}

fn mean_log10(kind: KernelKind, sets: &[Dataset]) -> f64 {
    mean(&sets.iter().map(|ds| log10_nc1(kind, ds)).collect::<Vec<_>>())
}

/// tr(ΣW)/tr(ΣB) from explicitly accumulated `d × d` covariance matrices.
fn covariance_nc1(h: &DMatrix<f64>, partition: &[usize]) -> f64 {
    let (n, d) = h.shape();
    let mut global = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            global[k] += h[(i, k)] / n as f64;
        }
    }
    let mut sw = DMatrix::<f64>::zeros(d, d);
    let mut sb = DMatrix::<f64>::zeros(d, d);
    let mut start = 0;
    for &nc in partition {
        let mut m = vec![0.0; d];
        for i in start..start + nc {
            for k in 0..d {
                m[k] += h[(i, k)] / nc as f64;
            }
        }
        for i in start..start + nc {
            for a in 0..d {
                for b in 0..d {
                    sw[(a, b)] += (h[(i, a)] - m[a]) * (h[(i, b)] - m[b]) / n as f64;
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                sb[(a, b)] += (m[a] - global[a]) * (m[b] - global[b]) / partition.len() as f64;
            }
        }
        start += nc;
    }
    sw.trace() / sb.trace()
}

fn c1_theorem1() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let mut s = NormalStream::new(1000 + k, 0);
        let classes = 2 + (k % 3) as usize;
        let d = 1 + (k % 8) as usize;
        let partition: Vec<usize> = (0..classes).map(|c| 1 + ((k as usize * 7 + c * 5) % (64 / classes))).collect();
        let n: usize = partition.iter().sum();
        let mut h = DMatrix::zeros(n, d);
        let mut row = 0;
        for (c, &nc) in partition.iter().enumerate() {
            let shift: Vec<f64> = (0..d).map(|_| 2.0 * s.standard_normal() + c as f64).collect();
            for _ in 0..nc {
                for j in 0..d {
                    h[(row, j)] = shift[j] + s.standard_normal();
                }
                row += 1;
            }
        }
        let oracle = covariance_nc1(&h, &partition);
        let kernel = nc1_of_gram(&feature_gram(&h, &partition).unwrap()).unwrap().nc1;
        worst = worst.max((kernel - oracle).abs() / oracle);
    }
    judge(worst < 1e-10, format!("max relative error {worst:.2e} over 100 instances (tol 1e-10)"))
}

fn c2_erf_collapse(sets: &[Dataset]) -> Outcome {
    let m = mean_log10(KernelKind::NngpErf, sets);
    judge((m + 2.1).abs() <= 0.15, format!("mean log10 NC1 {m:.3} (target -2.1 ± 0.15)"))
}

fn c3_relu_collapse(sets: &[Dataset]) -> Outcome {
    let m = mean_log10(KernelKind::NngpRelu, sets);
    judge((m + 0.95).abs() <= 0.15, format!("mean log10 NC1 {m:.3} (target -0.95 ± 0.15)"))
}

fn c4_ntk_matches_nngp(sets: &[Dataset]) -> Outcome {
    let erf = mean_log10(KernelKind::NtkErf, sets) - mean_log10(KernelKind::NngpErf, sets);
    let relu = mean_log10(KernelKind::NtkRelu, sets) - mean_log10(KernelKind::NngpRelu, sets);
    judge(
        erf.abs() < 0.1 && relu.abs() < 0.1,
        format!("NTK − NNGP gap: erf {erf:+.3}, relu {relu:+.3} dex (tol 0.1)"),
    )
}

fn c5_ntk_trend() -> Outcome {
    let grid = [1, 2, 8, 32, 128];
    let gaps: Vec<f64> = grid
        .iter()
        .map(|&d0| {
            let sets = d1_seeds(1024, d0, 10);
            mean_log10(KernelKind::NtkRelu, &sets) - mean_log10(KernelKind::NngpRelu, &sets)
        })
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1] >= w[0]);
    let text: Vec<String> = grid.iter().zip(&gaps).map(|(d, g)| format!("d0={d}: {g:+.3}")).collect();
    judge(monotone && gaps[4] >= 0.0, format!("NTK-ReLU − NNGP-ReLU: {}", text.join(", ")))
}

fn c6_theorem2(sets: &[Dataset]) -> Outcome {
    let draws: Vec<f64> = sets
        .iter()
        .map(|ds| nc1_of_gram(&assemble_gram(KernelKind::NngpRelu, ds, &HyperParams::standard(1)).unwrap()).unwrap().nc1)
        .collect();
    let (m, se) = (mean(&draws), std_err(&draws));
    let within = |v: f64| ((v - m) / se).abs() <= 3.0;
    let (z1, z2) = ((0.0625 - m) / se, (0.125 - m) / se);
    let report = run_verify("theorem2", 0).unwrap();
    let named = report.supported_variant.clone().unwrap_or_else(|| "none".into());
    let expected = match (within(0.0625), within(0.125)) {
        (true, false) => Some("as-printed"),
        (false, true) => Some("appendix-D"),
        _ => None,
    };
    judge(
        expected.is_some() && expected == report.supported_variant.as_deref(),
        format!("MC mean {m:.4} ± {se:.4}; z(0.0625) {z1:+.1}, z(0.125) {z2:+.1}; verify names {named}"),
    )
}

fn c7_erf_cases() -> Outcome {
    let p = GaussParams1D::symmetric(4.0, 0.25, 1024);
    let pred = erf_case_values(&p).unwrap();
    let k = |x: f64, y: f64| 2.0 / PI * (2.0 * x * y / ((1.0 + 2.0 * x * x) * (1.0 + 2.0 * y * y)).sqrt()).asin();
    let pairs = 1_000_000;
    let mut s = NormalStream::new(77, 0);
    let mut sample = |mx: f64, my: f64, same: bool| -> (f64, f64) {
        let v: Vec<f64> = (0..pairs)
            .map(|_| {
                let x = s.normal(mx, 0.25);
                let y = if same { x } else { s.normal(my, 0.25) };
                k(x, y)
            })
            .collect();
        (mean(&v), std_err(&v))
    };
    let cases = [
        ("diag", pred.v1[0], sample(-4.0, -4.0, true)),
        ("within", pred.v2[0], sample(-4.0, -4.0, false)),
        ("cross", pred.v3, sample(-4.0, 4.0, false)),
    ];
    let worst = cases.iter().map(|(_, p, (m, se))| ((p - m) / se).abs()).fold(0.0, f64::max);
    let text: Vec<String> = cases.iter().map(|(n, p, (m, _))| format!("{n} {p:.4} vs {m:.4}")).collect();
    judge(worst <= 3.0, format!("{}; max |z| {worst:.0}", text.join(", ")))
}

fn c8_corollary1(sets: &[Dataset]) -> Outcome {
    let ratios: Vec<f64> = sets
        .iter()
        .map(|ds| {
            let nc1 = nc1_of_gram(&assemble_gram(KernelKind::NngpRelu, ds, &HyperParams::standard(1)).unwrap()).unwrap().nc1;
            nc1 / (data_nc1(ds).unwrap() + 1e-8)
        })
        .collect();
    let m = mean(&ratios);
    judge((m - 2.0).abs() <= 0.2, format!("mean relative NC1 {m:.4} (target 2 ± 0.2)"))
}

fn c9_eos_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let ds = make_d1(16, 4, 50 + seed).unwrap();
        let p = EosProblem::new(&ds, &HyperParams::standard(4), 1e-3).unwrap();
        let mut s = NormalStream::new(seed, 3);
        let b = DMatrix::from_fn(4, 4, |_, _| s.standard_normal());
        let c = (&b * b.transpose()) * 0.05 + DMatrix::identity(4, 4) * 0.2;
        let h = 1e-6 * c.norm();
        for i in 0..4 {
            for j in i..4 {
                let mut e = DMatrix::zeros(4, 4);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                let fd = (p.kernels(&(&c + &e * h)).unwrap().q - p.kernels(&(&c - &e * h)).unwrap().q) / (2.0 * h);
                let an = p.q_derivative(&c, i, j).unwrap();
                worst = worst.max((an - &fd).amax() / fd.amax());
            }
        }
    }
    judge(worst < 1e-6, format!("max relative error {worst:.2e} over 5 instances (tol 1e-6)"))
}

fn c10_eos_init() -> Outcome {
    let d0 = 8;
    let ds = make_d1(256, d0, 0).unwrap();
    let hyper = HyperParams::standard(d0);
    let state = solve_eos(&ds, &hyper, DEFAULT_RIDGE, &AnnealSchedule::new(vec![1e5]).unwrap(), &SolverConfig::default()).unwrap();
    let c_dev = (&state.c - DMatrix::identity(d0, d0) * (hyper.weight_var / d0 as f64)).amax();
    let nngp = assemble_gram(KernelKind::NngpErf, &ds, &hyper).unwrap().values;
    let q_dev = (&state.q / hyper.readout_var - nngp).amax();
    judge(
        c_dev <= 1e-6 && q_dev <= 1e-10,
        format!("‖C − I/d0‖∞ {c_dev:.2e} (tol 1e-6), ‖Q/σ_a² − NNGP‖∞ {q_dev:.2e} (tol 1e-10)"),
    )
}

/// `log10 NC1(EoS) − log10 NC1(NNGP-Erf)` per seed on D1(512, 8).
fn eos_gaps(target: u64, seeds: u64) -> Vec<f64> {
    (0..seeds)
        .map(|s| {
            let ds = make_d1(512, 8, s).unwrap();
            let hyper = HyperParams::standard(8);
            let state = solve_eos(&ds, &hyper, DEFAULT_RIDGE, &default_schedule(target).unwrap(), &SolverConfig::default()).unwrap();
            let eos = nc1_of_gram(&state.gram(&ds.partition, &hyper).unwrap()).unwrap().log10_nc1;
            eos - log10_nc1(KernelKind::NngpErf, &ds)
        })
        .collect()
}

fn c11_eos_wide() -> Outcome {
    let gaps = eos_gaps(2000, 3);
    let m = mean(&gaps);
    judge(m.abs() <= 0.15, format!("mean log10 gap {m:+.3} dex over 3 seeds (tol 0.15)"))
}

fn c12_eos_reduction() -> Outcome {
    let gaps = eos_gaps(500, 3);
    let m = mean(&gaps);
    judge(m <= -0.1, format!("mean log10 gap {m:+.3} dex over 3 seeds (need ≤ -0.1)"))
}

fn sign_accuracy(model: &FcnModel, ds: &Dataset) -> f64 {
    let out = forward(model, &ds.x).unwrap().output;
    let hits = ds.labels.iter().enumerate().filter(|(j, &y)| out[(0, *j)] * y > 0.0).count();
    hits as f64 / ds.len() as f64
}

fn fcn_run(ds: &Dataset, activation: Activation, cfg: TrainConfig) -> (f64, f64) {
    let arch = FcnArch::new(ds.d0(), 500, 2, activation).unwrap();
    let mut model = init_fcn(&arch, cfg.seed).unwrap();
    train(&mut model, ds, &cfg).unwrap();
    let nc1 = nc1_of_features(&penultimate_features(&model, &ds.x).unwrap(), &ds.partition).unwrap().log10_nc1;
    (sign_accuracy(&model, ds), nc1)
}

fn c13_fcn() -> Outcome {
    let ds = make_d1(1024, 1, 0).unwrap();
    let seed = derive_seed(0, &[1]);
    let (acc, erf) = fcn_run(&ds, Activation::Erf, TrainConfig::erf_preset(seed));
    let (_, relu) = fcn_run(&ds, Activation::Relu, TrainConfig::relu_preset(seed));
    judge(acc == 1.0 && erf < relu, format!("erf accuracy {acc}, log10 NC1 erf {erf:.3} vs relu {relu:.3}"))
}

fn c14_non_separable() -> Outcome {
    let n: usize = std::env::var("NCKERNEL_C14_N").ok().and_then(|v| v.parse().ok()).unwrap_or(256);
    let grid = [8usize, 16, 32, 64, 128];
    let mut gaps = Vec::new();
    for &d0 in &grid {
        let ds = DatasetPreset::NonSeparable.sample(n, d0, derive_seed(14, &[d0 as u64])).unwrap();
        let hyper = HyperParams::standard(d0);
        let eos = solve_eos(&ds, &hyper, 1e-3, &default_schedule(500).unwrap(), &SolverConfig::default())
            .and_then(|st| nc1_of_gram(&st.gram(&ds.partition, &hyper)?));
        let (_, fcn) = fcn_run(&ds, Activation::Erf, TrainConfig::non_separable_preset(derive_seed(ds.seed(), &[1])));
        gaps.push(eos.map(|r| fcn - r.log10_nc1).unwrap_or(f64::NAN));
    }
    let tracks = gaps[..3].iter().all(|g| g.abs() <= 0.3);
    let under = gaps[3..].iter().all(|g| *g >= 0.2);
    let text: Vec<String> = grid.iter().zip(&gaps).map(|(d, g)| format!("d0={d}: {g:+.3}")).collect();
    let out = judge(tracks && under, format!("N={n}, FCN − EoS log10 NC1: {}", text.join(", ")));
    if out.verdict == Verdict::Fail {
        Outcome { verdict: Verdict::Warn, ..out }
    } else {
        out
    }
}

fn c15_fcn_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, act) in [Activation::Erf, Activation::Relu].into_iter().enumerate() {
        let arch = FcnArch { widths: vec![3, 5, 4, 1], activation: act, weight_var: 1.0, bias_var: 0.2 };
        let model = init_fcn(&arch, 10 + k as u64).unwrap();
        let mut s = NormalStream::new(k as u64, 5);
        let x = DMatrix::from_fn(3, 6, |_, _| s.standard_normal());
        let y = vec![1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let lambda = 1e-3;
        let (_, g) = loss_and_grad(&model, &x, &y, lambda).unwrap();
        let h = 1e-6;
        for l in 0..model.weights.len() {
            for idx in 0..model.weights[l].len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.weights[l][idx] += h;
                minus.weights[l][idx] -= h;
                let fd = (loss_and_grad(&plus, &x, &y, lambda).unwrap().0 - loss_and_grad(&minus, &x, &y, lambda).unwrap().0)
                    / (2.0 * h);
                let an = g.weights[l][idx];
                worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-3));
            }
            for idx in 0..model.biases[l].len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.biases[l][idx] += h;
                minus.biases[l][idx] -= h;
                let fd = (loss_and_grad(&plus, &x, &y, lambda).unwrap().0 - loss_and_grad(&minus, &x, &y, lambda).unwrap().0)
                    / (2.0 * h);
                let an = g.biases[l][idx];
                worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-3));
            }
        }
    }
    judge(worst < 1e-5, format!("max relative error {worst:.2e}, erf and relu (tol 1e-5)"))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let quick = std::env::var("NCKERNEL_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1");
    let strict = std::env::var("NCKERNEL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);

    let needs_d1 = (2..=8).any(wanted);
    let d1 = if needs_d1 { d1_seeds(1024, 1, 10) } else { Vec::new() };

    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "Theorem 1 equivalence", Box::new(c1_theorem1)),
        (2, "Erf NNGP low-dimension collapse", Box::new(|| c2_erf_collapse(&d1))),
        (3, "ReLU NNGP low-dimension collapse", Box::new(|| c3_relu_collapse(&d1))),
        (4, "NTK ≈ NNGP at d0 = 1", Box::new(|| c4_ntk_matches_nngp(&d1))),
        (5, "NTK-ReLU gap grows with d0", Box::new(c5_ntk_trend)),
        (6, "predictor adjudication", Box::new(|| c6_theorem2(&d1))),
        (7, "Erf case values vs Monte Carlo", Box::new(c7_erf_cases)),
        (8, "Corollary 1 ratio", Box::new(|| c8_corollary1(&d1))),
        (9, "EoS gradient check", Box::new(c9_eos_gradient)),
        (10, "EoS initialization limit", Box::new(c10_eos_init)),
        (11, "EoS wide-limit agreement", Box::new(c11_eos_wide)),
        (12, "EoS feature-learning reduction", Box::new(c12_eos_reduction)),
        (13, "FCN training", Box::new(c13_fcn)),
        (14, "non-separable regime (warning only)", Box::new(c14_non_separable)),
        (15, "FCN gradient check", Box::new(c15_fcn_gradient)),
    ];

    let mut failed = 0;
    for (k, name, run) in &criteria {
        if !wanted(*k) {
            continue;
        }
        let t0 = Instant::now();
        let out = if quick && (11..=14).contains(k) {
            Outcome { verdict: Verdict::Skip, detail: "skipped (quick mode)".into() }
        } else {
            run()
        };
        let tag = match out.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Warn => "WARN",
            Verdict::Skip => "SKIP",
        };
        println!("criterion {k:>2} {tag} {name}: {} [{:.1}s]", out.detail, t0.elapsed().as_secs_f64());
    }
    println!("acceptance: {failed} failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
