//! Scratch calibration run (ignored by default).

use sticker_defense::classifier::{self, Label, TrainConfig};
use sticker_defense::eval::{self, compute_asr, compute_ca};
use sticker_defense::synth::{self, build_attacked_corpus, AttackBudget, Corpus};

fn quantize_image(img: &sticker_defense::Image) -> sticker_defense::Image {
    sticker_defense::Image::decode_png(&img.encode_png()).unwrap()
}

#[test]
#[ignore]
fn calibrate() {
    let t0 = std::time::Instant::now();
    let seed = 42u64;
    let canvas = 64usize;
    let classes = 8usize;
    let split = synth::generate_dataset(classes, 250, 0.8, seed, canvas).unwrap();
    let mut corpus = Corpus {
        canvas,
        n_classes: classes,
        master_seed: seed,
        attack_budget: Some(AttackBudget::default()),
        train: split.train,
        test: split.test,
        attacked: vec![],
        attack_successes: vec![],
    };
    for s in corpus.train.iter_mut().chain(corpus.test.iter_mut()) {
        s.image = quantize_image(&s.image);
    }
    println!("[{:?}] corpus built: {} train / {} test", t0.elapsed(), corpus.train.len(), corpus.test.len());

    let dataset: Vec<_> = corpus
        .train
        .iter()
        .map(|s| (s.image.clone(), s.true_label))
        .collect();
    let config = TrainConfig {
        n_classes: classes,
        ..TrainConfig::default()
    };
    let train_seed = sticker_defense::seeding::derive_seed(seed, "train", &[]);
    let model = classifier::train(&dataset, &config, train_seed).unwrap();
    let ca = compute_ca(&model, &corpus.test).unwrap();
    println!("[{:?}] trained; clean test accuracy = {ca:.4}", t0.elapsed());

    let budget = AttackBudget::default();
    let outcomes = build_attacked_corpus(&model, classes, canvas, &budget, seed).unwrap();
    corpus.attack_successes = outcomes.iter().map(|o| o.success).collect();
    corpus.attacked = outcomes.iter().map(|o| o.sample.clone()).collect();
    for s in corpus.attacked.iter_mut() {
        s.image = quantize_image(&s.image);
    }
    let (t_asr, u_asr) = compute_asr(&model, &corpus.attacked).unwrap();
    println!(
        "[{:?}] attacks done: T-ASR = {t_asr:.4}  U-ASR = {u_asr:.4}  (recorded successes {}/{})",
        t0.elapsed(),
        outcomes.iter().filter(|o| o.success).count(),
        outcomes.len()
    );
    let mean_stickers: f64 = outcomes
        .iter()
        .map(|o| o.placements.len() as f64)
        .sum::<f64>()
        / outcomes.len() as f64;
    println!("mean stickers per attack: {mean_stickers:.2}");

    // Non-blind remaps.
    use sticker_defense::defense::{DefenseOp, RemapMode};
    use sticker_defense::eval::{Application, Knowledge, MaskSource, ScenarioConfig};
    for (name, mode) in [
        ("remap-t", RemapMode::Threshold { tau: 0.5 }),
        ("remap-w", RemapMode::White),
        ("remap-b", RemapMode::Black),
    ] {
        let cfg = ScenarioConfig {
            knowledge: Knowledge::NonBlind,
            defense: DefenseOp::Remap(mode),
            application: Application::Sequential,
            mask_source: MaskSource::Oracle,
            pi_attack: 0.5,
            seed,
            allow_ground_truth: false,
        };
        let report = eval::run_scenario(&model, &corpus, None, &cfg).unwrap();
        println!(
            "[{:?}] non-blind {name}: DR={:?} CD={:.4} PDA={:.4}",
            t0.elapsed(),
            report.dr,
            report.cd,
            report.pda
        );
    }
    let cfg = ScenarioConfig {
        knowledge: Knowledge::NonBlind,
        defense: DefenseOp::reconstruct_default(),
        application: Application::Sequential,
        mask_source: MaskSource::Oracle,
        pi_attack: 0.5,
        seed,
        allow_ground_truth: false,
    };
    let report = eval::run_scenario(&model, &corpus, None, &cfg).unwrap();
    println!(
        "[{:?}] non-blind reconstruct: DR={:?} CD={:.4} PDA={:.4}",
        t0.elapsed(),
        report.dr,
        report.cd,
        report.pda
    );

    // Semi-blind: mask store + ranked vs random sequential reconstruction.
    use sticker_defense::eval::Selection;
    use sticker_defense::masks;
    let labels: Vec<Label> = (0..classes).map(Label).collect();
    let store_seed = sticker_defense::seeding::derive_seed(seed, "store", &[]);
    let store =
        masks::build_mask_set_store(&model, &labels, &labels, &budget, store_seed, canvas).unwrap();
    println!(
        "[{:?}] store built: {} masks, {} successful",
        t0.elapsed(),
        store.len(),
        (0..classes)
            .flat_map(|t| store.entries_for(Label(t)).unwrap_or(&[]).iter())
            .filter(|e| e.success)
            .count()
    );
    for (name, selection) in [("ranked", Selection::Ranked), ("random", Selection::Random)] {
        let cfg = ScenarioConfig {
            knowledge: Knowledge::SemiBlind,
            defense: DefenseOp::reconstruct_default(),
            application: Application::Sequential,
            mask_source: MaskSource::EstimatedSet { selection, k: 3 },
            pi_attack: 0.5,
            seed,
            allow_ground_truth: false,
        };
        let report = eval::run_scenario(&model, &corpus, Some(&store), &cfg).unwrap();
        println!(
            "[{:?}] semi-blind reconst-seq-{name}(3): DR={:?} CD={:.4} PDA={:.4}",
            t0.elapsed(),
            report.dr,
            report.cd,
            report.pda
        );
    }

    // Blind: NOL vs OL parallel reconstruction + SF, and the baselines.
    use sticker_defense::masks::{Overlap, RandomMaskConfig, WindowCount};
    use sticker_defense::FusionMode;
    for (name, overlap) in [
        ("nol", Overlap::NonOverlapping),
        ("ol", Overlap::Overlapping),
    ] {
        let cfg = ScenarioConfig {
            knowledge: Knowledge::Blind,
            defense: DefenseOp::reconstruct_default(),
            application: Application::Parallel(FusionMode::SoftmaxFusion),
            mask_source: MaskSource::RandomWindows(RandomMaskConfig {
                window_size: 8,
                count: WindowCount::Ratio(0.625),
                overlap,
                k: 100,
                seed,
            }),
            pi_attack: 0.5,
            seed,
            allow_ground_truth: false,
        };
        let report = eval::run_scenario(&model, &corpus, None, &cfg).unwrap();
        println!(
            "[{:?}] blind {name}-reconst-par(100)+sf: DR={:?} CD={:.4} PDA={:.4}",
            t0.elapsed(),
            report.dr,
            report.cd,
            report.pda
        );
    }
    for baseline in [
        eval::Baseline::MedianFilter { kernel: 7 },
        eval::Baseline::Jpeg { quality: 10 },
    ] {
        let report = eval::run_baseline(&model, &corpus, baseline, 0.5).unwrap();
        println!(
            "[{:?}] baseline {baseline:?}: DR={:?} CD={:.4} PDA={:.4}",
            t0.elapsed(),
            report.dr,
            report.cd,
            report.pda
        );
    }
}
