use transrppg::mstmap::prepare_maps;
use transrppg::synth::{generate_dataset, load_manifest, write_dataset};
use transrppg::train::{fit, prepare_samples, InputMode};
use transrppg::RunConfig;

const SMALL_MODEL: &str = "\
seed = 1
model.step_h = 3
model.step_w = 30
model.dim = 24
model.heads = 3
model.layers = 1
model.init_std = 0.2
train.lr = 0.001
train.batch_size = 4
train.max_epochs = 5
train.lr_halve_epoch = 6
";

#[test]
fn five_epochs_reduce_training_loss_on_default_data() {
    let cfg = RunConfig::parse(SMALL_MODEL).unwrap();
    let sets = generate_dataset(&cfg.synth).unwrap();
    assert_eq!(sets.len(), 64);
    let samples = prepare_samples(&sets, &cfg.map, &cfg.model, InputMode::Full).unwrap();
    let state = fit(&cfg.model, cfg.init_seed(), &samples, &cfg.train).unwrap();
    let losses: Vec<f64> = state.log.epochs.iter().map(|e| e.l_overall).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses[4] < losses[0], "{losses:?}");
}

#[test]
fn traces_survive_disk_round_trip() {
    let mut cfg = RunConfig::default();
    cfg.synth.subjects = 2;
    cfg.synth.samples_per_subject_per_class = 1;
    let sets = generate_dataset(&cfg.synth).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&sets, dir.path()).unwrap();
    let back = load_manifest(&manifest).unwrap();
    assert_eq!(back.len(), sets.len());
    for (a, b) in sets.iter().zip(&back) {
        assert_eq!(prepare_maps(a, &cfg.map).unwrap(), prepare_maps(b, &cfg.map).unwrap());
    }
}
