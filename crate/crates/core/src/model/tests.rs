use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mstmap::MstMap;
use crate::tensor::{grad_check_many, Tensor};

fn random_map(rows: usize, t: usize, c: usize, seed: u64) -> MstMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MstMap {
        rows,
        t,
        channels: c,
        values: (0..rows * t * c).map(|_| rng.random::<f64>()).collect(),
        normalized: true,
        subset_index: (1..=rows as u32).collect(),
    }
}

fn mini_input(cfg: &ModelConfig, seed: u64) -> ModelInput {
    let face = random_map(cfg.h_face, cfg.w, cfg.c, seed);
    let bg = random_map(cfg.h_bg, cfg.w, cfg.c, seed + 1);
    ModelInput::from_maps(cfg, &face, Some(&bg)).unwrap()
}

#[test]
fn token_counts_match_window_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..50 {
        let h = rng.random_range(1..40);
        let w = rng.random_range(1..120);
        let ph = rng.random_range(1..=h);
        let pw = rng.random_range(1..=w);
        let sh = rng.random_range(1..6);
        let sw = rng.random_range(1..40);
        // Count start offsets 0, s, 2s, ... whose window still fits.
        let count = |len: usize, p: usize, s: usize| (0..len).step_by(s).filter(|&o| o + p <= len).count();
        let (nh, nw) = token_grid(h, w, ph, pw, sh, sw).unwrap();
        assert_eq!((nh, nw), (count(h, ph, sh), count(w, pw, sw)), "h={h} w={w} p={ph}x{pw} s={sh}x{sw}");
    }
}

#[test]
fn patches_are_map_slices() {
    let cfg = ModelConfig { h_face: 7, w: 40, patch_h: 2, patch_w: 10, step_h: 2, step_w: 7, ..ModelConfig::default() };
    let map = random_map(7, 40, 3, 1);
    let seq = sequentialize(&map, &cfg).unwrap();
    assert_eq!(seq.grid, (3, 5));
    for i in 0..3 {
        for j in 0..5 {
            let patch = &seq.data[(i * 5 + j) * seq.patch_dim..][..seq.patch_dim];
            let mut k = 0;
            for r in 0..2 {
                for f in 0..10 {
                    for c in 0..3 {
                        assert_eq!(patch[k], map.get(i * 2 + r, j * 7 + f, c) as f32);
                        k += 1;
                    }
                }
            }
        }
    }
}

#[test]
fn zeroed_residual_branches_give_identity() {
    let cfg = ModelConfig::mini();
    let mut w = scrambled_weights(&cfg, 2, 0.5);
    for l in &mut w.encoder {
        for t in [&mut l.proj_w, &mut l.proj_b, &mut l.fc2_w, &mut l.fc2_b] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut tape = Tape::<f64>::new();
    let wv = register(&mut tape, &w);
    let x = Tensor::from_fn(&[5, cfg.dim], |i| (i as f64 * 0.37).sin());
    let xv = tape.constant(x.clone());
    let out = encode_tokens(&mut tape, &cfg, &wv, xv).unwrap();
    assert_eq!(tape.value(out), &x);
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    let reports = loss_gradcheck(&ModelConfig::mini(), 3, Some(24)).unwrap();
    assert_eq!(reports.len(), 2);
    for (name, report) in reports {
        assert!(report.passed(1e-4), "{name}: {report:?}");
        assert!(report.checked > 500);
    }
}

#[test]
fn ablated_variants_have_correct_gradients() {
    for cfg in [
        ModelConfig { use_class_token: false, ..ModelConfig::mini() },
        ModelConfig { use_bg_branch: false, use_pos_embed: false, ..ModelConfig::mini() },
    ] {
        let w = scrambled_weights(&cfg, 5, 0.3);
        let input = mini_input(&cfg, 6);
        let report = grad_check_many(
            |tape, vars| {
                let wv = w.with_values(vars.to_vec()).unwrap();
                sample_loss(tape, &cfg, &wv, &input, 1.0).map(|t| t.total)
            },
            &w.to_vec(),
            1e-5,
            Some(8),
        )
        .unwrap();
        assert!(report.passed(1e-4), "{cfg:?}: {report:?}");
    }
}

#[test]
fn f32_gradients_agree_with_f64() {
    let cfg = ModelConfig::mini();
    let w64 = scrambled_weights(&cfg, 7, 0.3);
    let model = TransRppg::from_weights(cfg.clone(), w64.cast()).unwrap();
    let input = mini_input(&cfg, 8);
    let (loss32, g32) = model.loss_and_grad(&input, 1.0).unwrap();

    let mut tape = Tape::<f64>::new();
    let wv = register(&mut tape, &model.weights.cast::<f64>());
    let terms = sample_loss(&mut tape, &cfg, &wv, &input, 1.0).unwrap();
    let grads = tape.backward(terms.total).unwrap();
    assert!((loss32.total - tape.value(terms.total).data()[0]).abs() < 1e-4);
    for (v, g) in wv.to_vec().into_iter().zip(&g32) {
        for (a, b) in grads.get(v).unwrap().iter().zip(g) {
            assert!((a - *b as f64).abs() < 1e-3 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn loss_is_sum_of_three_bce_terms() {
    let cfg = ModelConfig::mini();
    let model = TransRppg::new(cfg.clone(), 11).unwrap();
    let input = mini_input(&cfg, 12);
    let p = model.predict(&input).unwrap();
    for y in [0.0, 1.0] {
        let (loss, _) = model.loss_and_grad(&input, y).unwrap();
        let bce = |z: f64, t: f64| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        let expect = bce(p.face_logit, y) + bce(p.bg_logit.unwrap(), 0.0) + bce(p.combined_logit, y);
        assert!((loss.total - expect).abs() < 1e-5, "{} vs {expect}", loss.total);
        assert!((loss.face + loss.bg.unwrap() + loss.combined - loss.total).abs() < 1e-5);
    }
}

#[test]
fn attention_rows_are_distributions() {
    let cfg = ModelConfig::mini();
    let model = TransRppg::from_weights(cfg.clone(), scrambled_weights(&cfg, 13, 0.5).cast()).unwrap();
    let (_, rec) = model.predict_with_attention(&mini_input(&cfg, 14)).unwrap();
    assert_eq!(rec.layers.len(), 2 * cfg.layers + 1);
    for layer in &rec.layers {
        assert_eq!(layer.heads.len(), cfg.heads);
        for a in &layer.heads {
            let (r, c) = a.dims2().unwrap();
            assert_eq!(r, c);
            for i in 0..r {
                let s: f64 = a.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-5, "{}: row {i} sums to {s}", layer.label);
            }
        }
    }
    let rows = fusion_attention(&rec, &cfg).unwrap();
    assert_eq!(rows[0].len(), cfg.fusion_seq_len());
}

#[test]
fn attention_export_writes_csv_and_pgm() {
    let cfg = ModelConfig::mini();
    let model = TransRppg::new(cfg.clone(), 15).unwrap();
    let (_, rec) = model.predict_with_attention(&mini_input(&cfg, 16)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_attention(&rec, &cfg, dir.path()).unwrap();
    assert_eq!(files.len(), 2 * cfg.heads);
    let csv = std::fs::read_to_string(dir.path().join("attn_head0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + cfg.fusion_seq_len());
    let total: f64 = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-5);
    let pgm = std::fs::read(dir.path().join("attn_head0.pgm")).unwrap();
    let (fh, fw) = cfg.face_grid().unwrap();
    let (bh, _) = cfg.bg_grid().unwrap();
    let header = format!("P5\n{fw} {}\n255\n", fh + bh);
    assert!(pgm.starts_with(header.as_bytes()));
    assert_eq!(pgm.len(), header.len() + fw * (fh + bh));
}

#[test]
fn swapped_inputs_are_rejected() {
    let cfg = ModelConfig::mini();
    let face = random_map(cfg.h_face, cfg.w, cfg.c, 1);
    let bg = random_map(cfg.h_bg, cfg.w, cfg.c, 2);
    let err = ModelInput::from_maps(&cfg, &bg, Some(&face)).unwrap_err();
    assert!(matches!(err, ModelError::Shape(_)), "{err}");
    let good = ModelInput::from_maps(&cfg, &face, Some(&bg)).unwrap();
    let swapped = ModelInput { face: good.bg.clone().unwrap(), bg: Some(good.face.clone()) };
    let model = TransRppg::new(cfg, 0).unwrap();
    assert!(matches!(model.predict(&swapped), Err(ModelError::Shape(_))));
}

#[test]
fn prediction_is_deterministic() {
    let cfg = ModelConfig::mini();
    let a = TransRppg::new(cfg.clone(), 21).unwrap();
    let b = TransRppg::new(cfg.clone(), 21).unwrap();
    let input = mini_input(&cfg, 22);
    let pa = a.predict(&input).unwrap();
    assert_eq!(pa, b.predict(&input).unwrap());
    assert!(pa.score() > 0.0 && pa.score() < 1.0);
}

#[test]
fn checkpoint_restores_predictions() {
    let cfg = ModelConfig::mini();
    let model = TransRppg::new(cfg.clone(), 23).unwrap();
    let mut ck = Checkpoint::default();
    ck.push_weights("", &model.weights);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.write(&path).unwrap();
    let back = TransRppg::from_weights(cfg.clone(), Checkpoint::read(&path).unwrap().weights(&cfg, "").unwrap()).unwrap();
    let input = mini_input(&cfg, 24);
    assert_eq!(model.predict(&input).unwrap(), back.predict(&input).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Without position information the encoder commutes with any reordering
    /// of its tokens.
    #[test]
    fn encoder_is_permutation_equivariant(seed in 0u64..1000, n in 2usize..7) {
        let cfg = ModelConfig::mini();
        let w = scrambled_weights(&cfg, seed, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x = Tensor::from_fn(&[n, cfg.dim], |_| rng.random::<f64>() * 2.0 - 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let px = Tensor::from_fn(&[n, cfg.dim], |k| x.data()[perm[k / cfg.dim] * cfg.dim + k % cfg.dim]);

        let run = |input: &Tensor<f64>| {
            let mut tape = Tape::<f64>::new();
            let wv = register(&mut tape, &w);
            let xv = tape.constant(input.clone());
            let out = encode_tokens(&mut tape, &cfg, &wv, xv).unwrap();
            tape.value(out).clone()
        };
        let y = run(&x);
        let py = run(&px);
        for k in 0..n * cfg.dim {
            let expect = y.data()[perm[k / cfg.dim] * cfg.dim + k % cfg.dim];
            prop_assert!((py.data()[k] - expect).abs() < 1e-10);
        }
    }
}
