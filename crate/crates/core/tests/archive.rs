use reid_core::archive::{load_model, save_model, ArchiveReader, KIND_MODEL};
use reid_core::config::RunConfig;
use reid_core::eval::{synth_generate, train_model, SynthParams};
use reid_core::odboa::{build_bag, match_bags, MultiShotMethod};
use reid_core::{PersonImage, Seed};

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.codebook.size = 8;
    cfg.codebook.samples = 100;
    cfg.codebook.max_images = 20;
    cfg.codebook.max_iter = 10;
    cfg.metric.pca_dim = 10;
    cfg
}

#[test]
fn trained_model_round_trips_through_archive() {
    let images = synth_generate(Seed(3), &SynthParams { persons: 4, ..Default::default() }).unwrap();
    let refs: Vec<&PersonImage> = images.iter().collect();
    let cfg = small_config();
    let model = train_model(&refs, &cfg, Seed(9)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let digest = save_model(&model, &dir.path().join("a")).unwrap();
    assert_eq!(save_model(&model, &dir.path().join("b")).unwrap(), digest);
    let reader = ArchiveReader::open(&dir.path().join("a"), KIND_MODEL).unwrap();
    assert_eq!(reader.digest(), digest);

    let back = load_model(&dir.path().join("a")).unwrap();
    assert_eq!((back.height, back.width, back.seed), (model.height, model.width, model.seed));
    assert_eq!(back.llc, model.llc);
    assert_eq!(back.smoothing, model.smoothing);
    assert_eq!(back.classifier.is_some(), model.classifier.is_some());
    assert!(back.matching.has_dual());

    // arrays are stored as f32, so scores agree closely but not bit for bit
    let sigs = |m: &reid_core::eval::TrainedModel, range: std::ops::Range<usize>| {
        let s: Vec<_> = images[range].iter().map(|i| m.encode(i).unwrap()).collect();
        build_bag(&s).unwrap()
    };
    let (p, g) = (sigs(&model, 0..4), sigs(&model, 8..12));
    let (p2, g2) = (sigs(&back, 0..4), sigs(&back, 8..12));
    for method in MultiShotMethod::ALL {
        let a = match_bags(&p, &g, &model.matching, method, Seed(1)).unwrap();
        let b = match_bags(&p2, &g2, &back.matching, method, Seed(1)).unwrap();
        assert!((a - b).abs() <= 1e-3 * a.abs().max(1.0), "{method}: {a} vs {b}");
    }
    for img in &images[..16] {
        assert_eq!(model.orientation_of(img, false).unwrap(), back.orientation_of(img, false).unwrap());
    }
}

#[test]
fn corrupted_archive_is_rejected() {
    let images = synth_generate(Seed(4), &SynthParams { persons: 3, ..Default::default() }).unwrap();
    let refs: Vec<&PersonImage> = images.iter().collect();
    let model = train_model(&refs, &small_config(), Seed(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(&model, dir.path()).unwrap();
    let target = dir.path().join("metric_lab.f32");
    let mut bytes = std::fs::read(&target).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&target, bytes).unwrap();
    assert!(load_model(dir.path()).is_err());
}
