//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line. Run with `cargo test --test acceptance -- --nocapture` to see the
//! lines; every tolerance is pinned in code.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aanet_cli::commands::corrupted_error_table;
use aanet_cli::config::{
    DataConfig, EpisodeConfig, EvalConfig, ExperimentConfig, GeneratorKind, IdxConfig,
    SyntheticConfig, TrainConfig,
};
use aanet_cli::idx::{load_idx, write_idx};
use aanet_cli::synthetic;
use aanet_core::activation::Activation;
use aanet_core::antialias::{blur, BlurSpec, Variant};
use aanet_core::dft::dft1;
use aanet_core::fewshot::{ncc_classify, sample_episode};
use aanet_core::network::{
    build_network, load_checkpoint, receptive_field_probe, save_checkpoint, ArchSpec,
    GroupPlacement, LayerGraph, Mode, PlacementConfig, StageSpec,
};
use aanet_core::robustness::{corruption_error, mean_corruption_error, Corruption, ErrorTable};
use aanet_core::spectral::{aliased_energy, folding_spectrum, shift_consistency};
use aanet_core::tensor::{conv2d, subsample, Tensor};
use aanet_core::{LabeledImages, PaddingMode};

fn report(criterion: usize, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion} ({name}): {verdict} — {detail}");
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn rng_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor<f64> {
    Tensor::from_fn(n, c, h, w, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

fn group(variant: Variant, k: usize) -> GroupPlacement {
    GroupPlacement {
        variant,
        blur: BlurSpec::reflect(k).unwrap(),
    }
}

// Criterion 1 — identical trainable parameter counts across placements.
#[test]
fn criterion_01_parameter_count_invariance() {
    let arch = ArchSpec::desk(1, 10);
    let mut configs: Vec<(String, PlacementConfig)> = vec![
        ("baseline".into(), PlacementConfig::baseline()),
        (
            "best_model_k3".into(),
            PlacementConfig::best_model(3).unwrap(),
        ),
        (
            "best_model_k5".into(),
            PlacementConfig::best_model(5).unwrap(),
        ),
    ];
    let variants = [
        Variant::None,
        Variant::BlurBefore,
        Variant::BlurAfter,
        Variant::BlurBoth,
        Variant::Erf,
        Variant::BlurpoolPostActivation,
    ];
    for v in variants {
        for k in [3usize, 5, 7] {
            for target in ["initial", "unstrided", "strided", "skip"] {
                let mut p = PlacementConfig::baseline();
                match (target, v) {
                    // ERF needs spatial support > 1 and a stride; it is
                    // invalid on the 1x1 skip and on unstrided groups.
                    ("skip", Variant::Erf) | ("unstrided", Variant::Erf) => continue,
                    ("initial", Variant::Erf) => {
                        p.conv1_stride = 2;
                        p.initial_conv = group(v, k);
                    }
                    ("initial", _) => p.initial_conv = group(v, k),
                    ("unstrided", _) => p.block_conv_unstrided = group(v, k),
                    ("strided", _) => p.block_conv_strided = group(v, k),
                    ("skip", _) => p.skip_strided = group(v, k),
                    _ => unreachable!(),
                }
                p.maxpool_blur = k == 5;
                if v == Variant::BlurBoth {
                    p.activation = Activation::Gelu;
                }
                configs.push((format!("{target}/{v:?}/k{k}"), p));
            }
        }
    }
    let counts: Vec<(String, usize)> = configs
        .iter()
        .map(|(name, p)| {
            let net = build_network::<f64>(&arch, p, 1).unwrap();
            (name.clone(), net.parameter_count())
        })
        .collect();
    let first = counts[0].1;
    let all_equal = counts.iter().all(|(_, c)| *c == first);
    report(
        1,
        "parameter-count invariance",
        all_equal,
        &format!("{} placements, {} parameters each", counts.len(), first),
    );
}

// Criterion 2 — central finite differences agree with backprop for every
// layer type at 64-bit, relative error < 1e-6, eps = 1e-5.
#[test]
#[allow(clippy::needless_range_loop)]
fn criterion_02_gradient_suite() {
    let arch = ArchSpec {
        input: (1, 8, 8),
        classes: 3,
        stages: vec![
            StageSpec {
                channels: 3,
                blocks: 1,
            },
            StageSpec {
                channels: 6,
                blocks: 1,
            },
        ],
        with_maxpool: true,
        conv_padding: PaddingMode::Zero,
    };

    // Swish net covering blur before/after/both around convs and max-pool.
    let mut swish = PlacementConfig::best_model(3).unwrap();
    swish.initial_conv = group(Variant::BlurBefore, 3);
    swish.block_conv_unstrided = group(Variant::BlurBoth, 3);

    // Gelu net covering the ERF variant, the post-activation variant, and a
    // strided stem.
    let gelu = PlacementConfig {
        initial_conv: group(Variant::None, 3),
        block_conv_unstrided: group(Variant::BlurpoolPostActivation, 3),
        block_conv_strided: group(Variant::Erf, 3),
        skip_strided: group(Variant::BlurAfter, 5),
        maxpool_blur: true,
        activation: Activation::Gelu,
        conv1_stride: 1,
    };

    // Plain ReLU baseline.
    let relu = PlacementConfig::baseline();

    let mut worst: f64 = 0.0;
    let mut params_checked = 0usize;
    for (pi, (placement, seed)) in [(swish, 2024u64), (gelu, 7u64), (relu, 15u64)]
        .into_iter()
        .enumerate()
    {
        let mut net = build_network::<f64>(&arch, &placement, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let batch = rng_tensor(&mut rng, 4, 1, 8, 8);
        let labels = [0usize, 1, 2, 1];
        net.zero_grad();
        net.loss_and_backward(&batch, &labels).unwrap();
        let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();
        let eps = 1e-5;
        for p in 0..analytic.len() {
            for i in 0..analytic[p].len() {
                let orig = net.params()[p].data[i];
                net.params_mut()[p].data[i] = orig + eps;
                let lp = net.train_loss(&batch, &labels).unwrap();
                net.params_mut()[p].data[i] = orig - eps;
                let lm = net.train_loss(&batch, &labels).unwrap();
                net.params_mut()[p].data[i] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let a = analytic[p][i];
                let rel = (a - fd).abs() / 1.0f64.max(a.abs()).max(fd.abs());
                assert!(
                    rel < 1e-6,
                    "net {pi} param {} [{i}]: rel err {rel} (analytic {a}, fd {fd})",
                    net.params()[p].name
                );
                worst = worst.max(rel);
                params_checked += 1;
            }
        }
    }
    report(
        2,
        "gradient suite",
        worst < 1e-6,
        &format!("{params_checked} parameter entries, worst relative error {worst:.2e}"),
    );
}

// Criterion 3 — folding prediction equals dft(subsample) on 500 cases.
#[test]
fn criterion_03_sampling_theorem_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lengths = [8usize, 12, 16, 24, 32, 48];
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = lengths[rng.gen_range(0..lengths.len())];
        let divisors: Vec<usize> = (1..=n)
            .filter(|d| n.is_multiple_of(*d) && *d <= 8)
            .collect();
        let stride = divisors[rng.gen_range(0..divisors.len())];
        let signal: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let folded = folding_spectrum(&signal, stride).unwrap();
        let sub: Vec<f64> = signal.iter().step_by(stride).copied().collect();
        let direct = dft1(&sub);
        for (f, d) in folded.iter().zip(&direct) {
            worst = worst.max((f - d).norm());
        }
    }
    report(
        3,
        "sampling-theorem oracle",
        worst < 1e-9,
        &format!("500 cases, worst deviation {worst:.2e}"),
    );
}

// Criterion 4 — the k=3 blur annihilates the Nyquist checkerboard and never
// increases above-Nyquist energy.
#[test]
fn criterion_04_nyquist_null() {
    let checker = Tensor::<f64>::from_fn(
        1,
        1,
        8,
        8,
        |_, _, y, x| {
            if (y + x) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        },
    );
    let spec = BlurSpec::new(3, PaddingMode::Circular).unwrap();
    let nulled = blur(&checker, &spec).unwrap();
    let peak = nulled.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let k = [3usize, 5, 7][rng.gen_range(0..3)];
        let x = rng_tensor(&mut rng, 1, 1, 8, 8);
        let b = blur(&x, &BlurSpec::new(k, PaddingMode::Circular).unwrap()).unwrap();
        let before = aliased_energy(x.plane(0, 0), 8, 8, 2).unwrap();
        let after = aliased_energy(b.plane(0, 0), 8, 8, 2).unwrap();
        if after.above_nyquist_energy > before.above_nyquist_energy + 1e-9 {
            violations += 1;
        }
    }
    report(
        4,
        "nyquist null",
        peak < 1e-12 && violations == 0,
        &format!("checkerboard residue {peak:.2e}, {violations} energy violations in 1000 trials"),
    );
}

// Criterion 5 — strided conv decomposition (exact) and circular
// commutativity (1e-9, 200 kernel pairs).
#[test]
fn criterion_05_decomposition_and_commutativity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut decomposition_exact = true;
    for _ in 0..50 {
        let x = rng_tensor(&mut rng, 1, 2, 9, 9);
        let k = rng_tensor(&mut rng, 3, 2, 3, 3);
        let stride = rng.gen_range(2..4);
        let direct = conv2d(&x, &k, stride, PaddingMode::Zero, 1).unwrap();
        let sub = subsample(&conv2d(&x, &k, 1, PaddingMode::Zero, 1).unwrap(), stride).unwrap();
        if direct != sub {
            decomposition_exact = false;
        }
    }

    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let x = rng_tensor(&mut rng, 1, 1, 8, 8);
        let a = rng_tensor(&mut rng, 1, 1, 3, 3);
        let b = rng_tensor(&mut rng, 1, 1, 3, 3);
        let ab = conv2d(
            &conv2d(&x, &a, 1, PaddingMode::Circular, 1).unwrap(),
            &b,
            1,
            PaddingMode::Circular,
            1,
        )
        .unwrap();
        let ba = conv2d(
            &conv2d(&x, &b, 1, PaddingMode::Circular, 1).unwrap(),
            &a,
            1,
            PaddingMode::Circular,
            1,
        )
        .unwrap();
        for (p, q) in ab.data().iter().zip(ba.data()) {
            worst = worst.max((p - q).abs());
        }
    }
    report(
        5,
        "decomposition and commutativity",
        decomposition_exact && worst < 1e-9,
        &format!("decomposition bitwise: {decomposition_exact}, worst commutator {worst:.2e}"),
    );
}

// Criterion 6 — the 1x1 strided skip preserves the aliased fraction of
// band-unlimited noise; blur_after(k=3) quenches the Nyquist tone.
#[test]
fn criterion_06_skip_incapacity() {
    use aanet_core::antialias::run_variant;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise = rng_tensor(&mut rng, 1, 1, 8, 8);
    let kernel = Tensor::from_vec(1, 1, 1, 1, vec![0.61]).unwrap();
    let spec = BlurSpec::new(3, PaddingMode::Circular).unwrap();

    let trace = run_variant(Variant::None, &kernel, 2, &spec, Activation::Relu, &noise).unwrap();
    let f_in = aliased_energy(noise.plane(0, 0), 8, 8, 2).unwrap().fraction;
    let f_out = aliased_energy(trace.pre_subsample.as_ref().unwrap().plane(0, 0), 8, 8, 2)
        .unwrap()
        .fraction;
    let preserved = (f_in - f_out).abs() < 1e-9;

    let checker = Tensor::<f64>::from_fn(
        1,
        1,
        8,
        8,
        |_, _, y, x| {
            if (y + x) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        },
    );
    let anti = run_variant(
        Variant::BlurAfter,
        &kernel,
        2,
        &spec,
        Activation::Relu,
        &checker,
    )
    .unwrap();
    let f_anti = aliased_energy(anti.pre_subsample.as_ref().unwrap().plane(0, 0), 8, 8, 2)
        .unwrap()
        .fraction;
    report(
        6,
        "skip incapacity",
        preserved && f_in > 0.0 && f_anti < 1e-6,
        &format!(
            "skip fraction drift {:.2e}, anti-aliased fraction {f_anti:.2e}",
            (f_in - f_out).abs()
        ),
    );
}

// Criterion 7 — CE/mCE fixtures exact to 1e-9 and the 15-corruption mean.
#[test]
fn criterion_07_metric_fixtures() {
    let table = |rows: &[(&str, [f64; 5])]| ErrorTable {
        entries: rows.iter().map(|(c, r)| (c.to_string(), *r)).collect(),
        clean_error: 0.1,
    };
    let base = table(&[("c", [0.4, 0.5, 0.6, 0.7, 0.8])]);
    let self_ratio = corruption_error(&base, &base, "c").unwrap();
    let half = table(&[("c", [0.2, 0.25, 0.3, 0.35, 0.4])]);
    let half_ratio = corruption_error(&half, &base, "c").unwrap();
    let fixture = table(&[("c", [0.2, 0.3, 0.4, 0.5, 0.6])]);
    let fixture_ratio = corruption_error(&fixture, &base, "c").unwrap();

    let mce15 = mean_corruption_error((1..=15).map(|i| i as f64)).unwrap();
    let ok = (self_ratio - 100.0).abs() < 1e-9
        && (half_ratio - 50.0).abs() < 1e-9
        && (fixture_ratio - 100.0 * 2.0 / 3.0).abs() < 1e-9
        && (mce15 - 8.0).abs() < 1e-12;
    report(
        7,
        "CE/mCE fixtures",
        ok,
        &format!("self {self_ratio}, half {half_ratio}, fixture {fixture_ratio:.6}, mean {mce15}"),
    );
}

// Criterion 8 — desk-scale direction of effect over 5 paired seeds.
//
// The anti-aliased best model must beat the baseline's shift-consistency by
// at least 0.05 mean and be no worse under corruption, with identical data
// and batch order per seed.
#[test]
fn criterion_08_direction_of_effect() {
    let stripes = SyntheticConfig {
        generator: GeneratorKind::Stripes,
        size: 300,
        classes: 12,
        height: 16,
        width: 16,
        seed: 3,
    };
    let arch = ArchSpec {
        input: (1, 16, 16),
        classes: 12,
        stages: vec![
            StageSpec {
                channels: 6,
                blocks: 1,
            },
            StageSpec {
                channels: 12,
                blocks: 1,
            },
        ],
        with_maxpool: true,
        conv_padding: PaddingMode::Circular,
    };
    let circular = |variant, k| GroupPlacement {
        variant,
        blur: BlurSpec::new(k, PaddingMode::Circular).unwrap(),
    };
    let baseline = PlacementConfig {
        initial_conv: circular(Variant::None, 3),
        block_conv_unstrided: circular(Variant::None, 3),
        block_conv_strided: circular(Variant::None, 3),
        skip_strided: circular(Variant::None, 3),
        maxpool_blur: false,
        activation: Activation::Relu,
        conv1_stride: 1,
    };
    let best = PlacementConfig {
        initial_conv: circular(Variant::None, 5),
        block_conv_unstrided: circular(Variant::None, 5),
        block_conv_strided: circular(Variant::BlurAfter, 5),
        skip_strided: circular(Variant::BlurAfter, 5),
        maxpool_blur: true,
        activation: Activation::Swish,
        conv1_stride: 1,
    };

    let train_data = synthetic::generate(&stripes).unwrap();
    let mut holdout_cfg = stripes.clone();
    holdout_cfg.size = 120;
    let holdout = synthetic::generate_with_seed(&holdout_cfg, stripes.seed + 1).unwrap();
    let consistency_batch = {
        let take: Vec<usize> = (0..64).collect();
        holdout.batch(&take).unwrap().0
    };
    let corruptions = [
        Corruption::GaussianNoise,
        Corruption::ShotNoise,
        Corruption::ImpulseNoise,
        Corruption::Brightness,
        Corruption::Contrast,
    ];

    let run_arm = |placement: &PlacementConfig, seed: u64| -> (f64, f64) {
        let mut net = build_network::<f64>(&arch, placement, seed).unwrap();
        net.set_mode(Mode::Train);
        let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..14 {
            let mut order: Vec<usize> = (0..train_data.len()).collect();
            order.shuffle(&mut order_rng);
            for chunk in order.chunks(16) {
                let (x, labels) = train_data.batch(chunk).unwrap();
                net.zero_grad();
                let loss = net.loss_and_backward(&x, &labels).unwrap();
                assert!(loss.is_finite(), "loss diverged");
                net.sgd_step(0.05, 0.9).unwrap();
            }
        }
        net.set_mode(Mode::Eval);
        let consistency =
            shift_consistency(&net, &consistency_batch, 3, PaddingMode::Circular).unwrap();
        let table = corrupted_error_table(&net, &holdout, &corruptions, seed).unwrap();
        let cells: Vec<f64> = table.entries.values().flatten().copied().collect();
        let corrupt_err = cells.iter().sum::<f64>() / cells.len() as f64;
        (consistency.agreement_rate, corrupt_err)
    };

    let seeds = [1u64, 2, 3, 4, 5];
    let mut base_cons = 0.0;
    let mut base_err = 0.0;
    let mut best_cons = 0.0;
    let mut best_err = 0.0;
    for &seed in &seeds {
        let (c, e) = run_arm(&baseline, seed);
        base_cons += c;
        base_err += e;
        let (c, e) = run_arm(&best, seed);
        best_cons += c;
        best_err += e;
    }
    let n = seeds.len() as f64;
    base_cons /= n;
    base_err /= n;
    best_cons /= n;
    best_err /= n;

    let gap = best_cons - base_cons;
    let ok = gap >= 0.05 && best_err <= base_err;
    report(
        8,
        "direction of effect",
        ok,
        &format!(
            "consistency {base_cons:.4} -> {best_cons:.4} (gap {gap:.4}), \
             corrupted error {base_err:.4} -> {best_err:.4}"
        ),
    );
}

// Criterion 9 — receptive-field ordering none < blur_before < erf.
#[test]
fn criterion_09_erf_probe() {
    let spec = BlurSpec::reflect(3).unwrap();
    let none = receptive_field_probe::<f64>(Variant::None, &spec, 3, 2).unwrap();
    let before = receptive_field_probe::<f64>(Variant::BlurBefore, &spec, 3, 2).unwrap();
    let erf = receptive_field_probe::<f64>(Variant::Erf, &spec, 3, 2).unwrap();
    report(
        9,
        "erf probe",
        none == 3 && before == 5 && erf > before,
        &format!("support sides: none {none}, blur_before {before}, erf {erf}"),
    );
}

// Criterion 10 — NCC separated-cluster accuracy, episode disjointness over
// 1000 seeds, and seed determinism.
#[test]
fn criterion_10_ncc_and_episodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let centers: Vec<[f64; 4]> = (0..5)
        .map(|k| {
            let mut c = [0.0; 4];
            c[k % 4] = 10.0 * (1.0 + k as f64);
            c
        })
        .collect();
    let mut support = Vec::new();
    let mut labels = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..5 {
            support.push(
                c.iter()
                    .map(|v| v + rng.gen_range(-0.5..0.5))
                    .collect::<Vec<f64>>(),
            );
            labels.push(k);
        }
    }
    let mut queries = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..1000 {
        let k = rng.gen_range(0..centers.len());
        queries.push(
            centers[k]
                .iter()
                .map(|v| v + rng.gen_range(-0.5..0.5))
                .collect::<Vec<f64>>(),
        );
        truth.push(k);
    }
    let predicted = ncc_classify(&support, &labels, &queries).unwrap();
    let ncc_perfect = predicted == truth;

    let mut images = Vec::new();
    let mut img_labels = Vec::new();
    for class in 0..6usize {
        for i in 0..8 {
            let v = class as f64 + i as f64 * 0.01;
            images.push(Tensor::from_fn(1, 1, 2, 2, |_, _, _, _| v));
            img_labels.push(class);
        }
    }
    let data = LabeledImages::new(images, img_labels, 6).unwrap();
    let mut disjoint = true;
    for seed in 0..1000u64 {
        let e = sample_episode(&data, 4, 3, 3, seed).unwrap();
        for s in &e.support_images {
            if e.query_images.iter().any(|q| q == s) {
                disjoint = false;
            }
        }
    }
    let a = sample_episode(&data, 4, 3, 3, 77).unwrap();
    let b = sample_episode(&data, 4, 3, 3, 77).unwrap();
    let deterministic = a.class_map == b.class_map
        && a.support_images == b.support_images
        && a.query_images == b.query_images;

    report(
        10,
        "ncc and episodes",
        ncc_perfect && disjoint && deterministic,
        &format!("ncc perfect: {ncc_perfect}, disjoint over 1000 seeds: {disjoint}, deterministic: {deterministic}"),
    );
}

// Criterion 11 — I/O closure: IDX byte round-trip, bitwise checkpoint
// round-trip, and 100 randomized config round-trips.
#[test]
fn criterion_11_io_closure() {
    let dir = std::env::temp_dir().join(format!("aanet-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    // IDX: byte-sourced data reloads and rewrites to identical bytes.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let images: Vec<Tensor<f64>> = (0..4)
        .map(|_| {
            Tensor::from_fn(1, 1, 5, 5, |_, _, _, _| {
                rng.gen_range(0..=255u32) as f64 / 255.0
            })
        })
        .collect();
    let labels = vec![0usize, 1, 2, 1];
    let data = LabeledImages::new(images, labels, 3).unwrap();
    let ip = dir.join("round.images.idx");
    let lp = dir.join("round.labels.idx");
    write_idx(&data, &ip, &lp).unwrap();
    let loaded = load_idx(&ip, &lp).unwrap();
    let ip2 = dir.join("round2.images.idx");
    let lp2 = dir.join("round2.labels.idx");
    write_idx(&loaded, &ip2, &lp2).unwrap();
    let idx_ok = std::fs::read(&ip).unwrap() == std::fs::read(&ip2).unwrap()
        && std::fs::read(&lp).unwrap() == std::fs::read(&lp2).unwrap();

    // Checkpoint: save -> load into a differently seeded net -> save again.
    let arch = ArchSpec {
        input: (1, 8, 8),
        classes: 3,
        stages: vec![
            StageSpec {
                channels: 3,
                blocks: 1,
            },
            StageSpec {
                channels: 6,
                blocks: 1,
            },
        ],
        with_maxpool: true,
        conv_padding: PaddingMode::Zero,
    };
    let placement = PlacementConfig::best_model(3).unwrap();
    let mut net: LayerGraph<f64> = build_network(&arch, &placement, 31).unwrap();
    let batch = rng_tensor(&mut rng, 4, 1, 8, 8);
    net.loss_and_backward(&batch, &[0, 1, 2, 0]).unwrap();
    net.sgd_step(0.05, 0.9).unwrap();
    let mut bytes = Vec::new();
    save_checkpoint(&net, &mut bytes).unwrap();
    let mut other: LayerGraph<f64> = build_network(&arch, &placement, 99).unwrap();
    load_checkpoint(&mut other, bytes.as_slice()).unwrap();
    let mut bytes2 = Vec::new();
    save_checkpoint(&other, &mut bytes2).unwrap();
    let ckpt_ok = bytes == bytes2;

    // Config: 100 randomized valid configs survive serialize -> parse.
    let mut config_ok = true;
    for i in 0..100u64 {
        let cfg = random_config(&mut rng, i);
        let text = cfg.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        if back != cfg {
            config_ok = false;
        }
    }
    // Unknown keys must be rejected.
    let mut value: serde_json::Value =
        serde_json::from_str(&random_config(&mut rng, 1000).to_json()).unwrap();
    value["unknown_key"] = serde_json::json!(1);
    let rejected = ExperimentConfig::from_json(&value.to_string()).is_err();

    std::fs::remove_dir_all(&dir).ok();
    report(
        11,
        "i/o closure",
        idx_ok && ckpt_ok && config_ok && rejected,
        &format!("idx {idx_ok}, checkpoint {ckpt_ok}, configs {config_ok}, unknown-key rejection {rejected}"),
    );
}

fn random_config(rng: &mut ChaCha8Rng, salt: u64) -> ExperimentConfig {
    let paddings = [
        PaddingMode::Zero,
        PaddingMode::Circular,
        PaddingMode::Reflect,
    ];
    let variants = [
        Variant::None,
        Variant::BlurBefore,
        Variant::BlurAfter,
        Variant::BlurBoth,
        Variant::BlurpoolPostActivation,
    ];
    let activations = [Activation::Relu, Activation::Swish, Activation::Gelu];
    let ks = [1usize, 3, 5, 7];
    let group = |rng: &mut ChaCha8Rng| GroupPlacement {
        variant: variants[rng.gen_range(0..variants.len())],
        blur: BlurSpec::new(
            ks[rng.gen_range(0..ks.len())],
            paddings[rng.gen_range(0..3)],
        )
        .unwrap(),
    };
    let classes = rng.gen_range(2..8usize);
    let side = [16usize, 32][rng.gen_range(0..2)];
    let stage_count = rng.gen_range(1..4usize);
    ExperimentConfig {
        arch: ArchSpec {
            input: (rng.gen_range(1..3usize), side, side),
            classes,
            stages: (0..stage_count)
                .map(|_| StageSpec {
                    channels: rng.gen_range(2..16usize),
                    blocks: rng.gen_range(1..3usize),
                })
                .collect(),
            with_maxpool: rng.gen_bool(0.5),
            conv_padding: paddings[rng.gen_range(0..3)],
        },
        placement: PlacementConfig {
            initial_conv: group(rng),
            block_conv_unstrided: group(rng),
            block_conv_strided: group(rng),
            skip_strided: group(rng),
            maxpool_blur: rng.gen_bool(0.5),
            activation: activations[rng.gen_range(0..3)],
            conv1_stride: rng.gen_range(1..3usize),
        },
        train: TrainConfig {
            lr: rng.gen_range(0.0..0.5),
            momentum: rng.gen_range(0.0..0.99),
            epochs: rng.gen_range(1..20usize),
            batch: rng.gen_range(1..64usize),
            seed: salt,
        },
        data: if rng.gen_bool(0.5) {
            DataConfig::Synthetic(SyntheticConfig {
                generator: if rng.gen_bool(0.5) {
                    GeneratorKind::Stripes
                } else {
                    GeneratorKind::Shapes
                },
                size: classes * rng.gen_range(1..20usize),
                classes,
                height: side,
                width: side,
                seed: rng.gen(),
            })
        } else {
            DataConfig::Idx(IdxConfig {
                images: format!("data/images-{salt}.idx"),
                labels: format!("data/labels-{salt}.idx"),
            })
        },
        eval: EvalConfig {
            holdout: rng.gen_range(1..256usize),
            corruptions: Corruption::ALL[..rng.gen_range(0..8usize)]
                .iter()
                .map(|c| c.id().to_string())
                .collect(),
            shift_max: rng.gen_range(1..5usize),
            shift_padding: paddings[rng.gen_range(0..3)],
            episode: EpisodeConfig {
                way: rng.gen_range(1..=classes),
                shots: rng.gen_range(1..5usize),
                query: rng.gen_range(1..5usize),
                count: rng.gen_range(1..50usize),
            },
        },
    }
}
