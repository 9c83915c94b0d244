mod common;

use common::*;
use rand::Rng as _;
use rnnms::dsp::{MelSpectrogram, MuLaw};
use rnnms::model::{
    ar_step, backward, conditioning_forward, forward_teacher_forced, log_softmax, nll_loss, softmax,
    teacher_forced_nll, upsample_conditioning, ArState, FrameFeatures, ModelConfig, ModelParams,
};
use rnnms::rng::seeded;

fn loss_at(classes: &[rnnms::MuLawClass], mel: &MelSpectrogram, p: &ModelParams, cfg: &ModelConfig) -> f64 {
    forward_teacher_forced(classes, mel, p, cfg).unwrap().loss()
}

/// Relative error with an absolute floor for coordinates whose true
/// gradient is numerically zero.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

#[test]
fn gradients_match_central_differences() {
    let cfg = tiny_config();
    let params = random_params(&cfg, 11, 0.5);
    let mel = random_mel(&cfg, 3, 12);
    let classes = random_classes(&cfg, 6, 13);
    let pass = forward_teacher_forced(&classes, &mel, &params, &cfg).unwrap();
    let (loss, grads) = backward(&pass, &params);
    assert!((loss - pass.loss()).abs() < 1e-12);

    let names: Vec<(String, usize)> = params.tensors().iter().map(|t| (t.name.clone(), t.data.len())).collect();
    let total: usize = names.iter().map(|n| n.1).sum();
    let mut rng = seeded(14);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut flat = rng.random_range(0..total);
        let (ti, _) = names
            .iter()
            .enumerate()
            .find(|(_, (_, len))| {
                if flat < *len {
                    true
                } else {
                    flat -= len;
                    false
                }
            })
            .unwrap();
        let mut plus = params.clone();
        plus.tensors_mut()[ti].data[flat] += h;
        let mut minus = params.clone();
        minus.tensors_mut()[ti].data[flat] -= h;
        let fd = (loss_at(&classes, &mel, &plus, &cfg) - loss_at(&classes, &mel, &minus, &cfg)) / (2.0 * h);
        let analytic = grads.tensors()[ti].data[flat];
        let err = rel_err(analytic, fd);
        worst = worst.max(err);
        assert!(err < 1e-4, "{}[{flat}]: analytic {analytic} vs fd {fd}", names[ti].0);
    }
    eprintln!("worst relative error {worst:.3e}");
}

#[test]
fn gradcheck_every_tensor_has_signal() {
    // Some coordinate of every tensor must carry gradient on a generic instance.
    let cfg = tiny_config();
    let params = random_params(&cfg, 21, 0.5);
    let pass = forward_teacher_forced(&random_classes(&cfg, 6, 22), &random_mel(&cfg, 3, 23), &params, &cfg).unwrap();
    let (_, grads) = backward(&pass, &params);
    for t in grads.tensors() {
        assert!(t.data.iter().any(|v| v.abs() > 1e-8), "{} has no gradient", t.name);
    }
}

#[test]
fn zeroed_conditioning_input_gives_zero_layer1_input_weight_gradient() {
    let cfg = tiny_config();
    let params = random_params(&cfg, 31, 0.5);
    let mel = MelSpectrogram::from_frames(tiny_mel_config(cfg.n_mels, cfg.hop), vec![0.0; cfg.n_mels]).unwrap();
    let classes = random_classes(&cfg, 2, 32);
    let pass = forward_teacher_forced(&classes, &mel, &params, &cfg).unwrap();
    let (_, grads) = backward(&pass, &params);
    assert!(grads.cond_gru_1_bwd.w.iter().all(|&v| v == 0.0));
    assert!(grads.cond_gru_1_fwd.w.iter().all(|&v| v == 0.0));
    // Biases of the same cells are on the active path and agree with finite differences.
    let h = 1e-4;
    for i in 0..grads.cond_gru_1_bwd.b.len() {
        let mut plus = params.clone();
        plus.cond_gru_1_bwd.b[i] += h;
        let mut minus = params.clone();
        minus.cond_gru_1_bwd.b[i] -= h;
        let fd = (loss_at(&classes, &mel, &plus, &cfg) - loss_at(&classes, &mel, &minus, &cfg)) / (2.0 * h);
        assert!(rel_err(grads.cond_gru_1_bwd.b[i], fd) < 1e-4);
    }
    let mut plus = params.clone();
    plus.cond_gru_1_bwd.w[0] += h;
    assert_eq!(loss_at(&classes, &mel, &plus, &cfg), loss_at(&classes, &mel, &params, &cfg));
}

#[test]
fn confident_correct_predictions_have_vanishing_gradients() {
    let cfg = tiny_config();
    let mut params = ModelParams::zeros(&cfg);
    params.affine_b.b[3] = 60.0;
    let codec = MuLaw::new(cfg.n_classes).unwrap();
    let classes = vec![codec.class(3).unwrap(); 6];
    let pass = forward_teacher_forced(&classes, &random_mel(&cfg, 3, 1), &params, &cfg).unwrap();
    let (loss, grads) = backward(&pass, &params);
    assert!(loss < 1e-20);
    assert!(grads.l2_norm() < 1e-20);
}

#[test]
fn zero_params_give_uniform_loss() {
    let cfg = ModelConfig { n_mels: 5, cond_hidden: 3, ar_hidden: 4, n_classes: 1024, hop: 4 };
    let params = ModelParams::zeros(&cfg);
    let codec = MuLaw::new(1024).unwrap();
    let silence = vec![codec.encode(0.0).unwrap(); 12];
    let pass = forward_teacher_forced(&silence, &random_mel(&cfg, 3, 2), &params, &cfg).unwrap();
    assert!((pass.loss() - 1024f64.ln()).abs() < 1e-12);
    for row in pass.logits() {
        assert!(row.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn teacher_forcing_equals_sequential_ar_steps() {
    let cfg = ModelConfig { n_mels: 5, cond_hidden: 3, ar_hidden: 4, n_classes: 8, hop: 5 };
    let params = random_params(&cfg, 41, 0.7);
    let mel = random_mel(&cfg, 2, 42);
    let classes = random_classes(&cfg, 10, 43);
    let pass = forward_teacher_forced(&classes, &mel, &params, &cfg).unwrap();
    assert_eq!(pass.logits().len(), 9);

    let features = conditioning_forward(&mel, &params, &cfg).unwrap();
    let per_sample = upsample_conditioning(&features, cfg.hop);
    let mut state = ArState { hidden: vec![0.0; cfg.ar_hidden], prev_class: classes[0] };
    for t in 1..classes.len() {
        let (logits, mut next) = ar_step(&state, &per_sample[t], &params, &cfg).unwrap();
        assert_eq!(logits, pass.logits()[t - 1], "step {t}");
        next.prev_class = classes[t];
        state = next;
    }
    let streamed = teacher_forced_nll(&classes, &mel, &params, &cfg).unwrap();
    assert!((streamed - pass.loss()).abs() < 1e-12);
}

#[test]
fn two_samples_give_one_row_and_misaligned_input_is_rejected() {
    let cfg = ModelConfig { hop: 2, ..tiny_config() };
    let params = random_params(&cfg, 1, 0.3);
    let mel = random_mel(&cfg, 1, 2);
    let pass = forward_teacher_forced(&random_classes(&cfg, 2, 3), &mel, &params, &cfg).unwrap();
    assert_eq!(pass.logits().len(), 1);
    assert!(forward_teacher_forced(&random_classes(&cfg, 3, 3), &mel, &params, &cfg).is_err());
}

#[test]
fn zero_weight_conditioning_is_zero() {
    let cfg = tiny_config();
    let f = conditioning_forward(&random_mel(&cfg, 4, 5), &ModelParams::zeros(&cfg), &cfg).unwrap();
    assert_eq!((f.n_frames, f.dim), (4, 8));
    assert!(f.data.iter().all(|&v| v == 0.0));
}

#[test]
fn single_frame_conditioning_sees_same_input_both_ways() {
    let cfg = tiny_config();
    let mut params = random_params(&cfg, 51, 0.5);
    params.cond_gru_1_bwd = params.cond_gru_1_fwd.clone();
    params.cond_gru_2_bwd = params.cond_gru_2_fwd.clone();
    let f = conditioning_forward(&random_mel(&cfg, 1, 52), &params, &cfg).unwrap();
    assert_eq!(f.data.len(), 8);
    assert_eq!(f.data[..4], f.data[4..]);
}

#[test]
fn time_reversal_with_swapped_directions() {
    let cfg = tiny_config();
    let params = random_params(&cfg, 61, 0.6);
    let mel = random_mel(&cfg, 4, 62);
    let reversed_mel = {
        let data = (0..4).rev().flat_map(|t| mel.frame(t).to_vec()).collect();
        MelSpectrogram::from_frames(*mel.config(), data).unwrap()
    };
    let mut swapped = params.clone();
    std::mem::swap(&mut swapped.cond_gru_1_fwd, &mut swapped.cond_gru_1_bwd);
    std::mem::swap(&mut swapped.cond_gru_2_fwd, &mut swapped.cond_gru_2_bwd);
    // Layer 2 reads [fwd, bwd] of layer 1, which the swap exchanges, so its
    // input columns trade places too.
    let c = cfg.cond_hidden;
    for g in [&mut swapped.cond_gru_2_fwd, &mut swapped.cond_gru_2_bwd] {
        for row in g.w.chunks_mut(2 * c) {
            let (l, r) = row.split_at_mut(c);
            l.swap_with_slice(r);
        }
    }

    let a = conditioning_forward(&mel, &params, &cfg).unwrap();
    let b = conditioning_forward(&reversed_mel, &swapped, &cfg).unwrap();
    // Reversed output with the fwd/bwd halves exchanged in every frame.
    let b_rev: FrameFeatures = b.reversed();
    for t in 0..4 {
        let (x, y) = (a.frame(t), b_rev.frame(t));
        assert_eq!(x[..c], y[c..]);
        assert_eq!(x[c..], y[..c]);
    }
}

#[test]
fn upsampling_holds_frames() {
    let f = FrameFeatures { n_frames: 2, dim: 1, data: vec![1.5, -2.0] };
    let up = upsample_conditioning(&f, 3);
    assert_eq!(up, vec![vec![1.5], vec![1.5], vec![1.5], vec![-2.0], vec![-2.0], vec![-2.0]]);
    let mut rng = seeded(3);
    for _ in 0..20 {
        let (t, hop) = (rng.random_range(1..6), rng.random_range(1..9));
        let f = FrameFeatures { n_frames: t, dim: 2, data: (0..2 * t).map(|v| v as f64).collect() };
        let up = upsample_conditioning(&f, hop);
        assert_eq!(up.len(), t * hop);
        for (i, v) in up.iter().enumerate() {
            assert_eq!(v.as_slice(), f.frame(i / hop));
        }
    }
}

#[test]
fn zero_params_ar_step_is_uniform() {
    let cfg = ModelConfig { n_mels: 2, cond_hidden: 2, ar_hidden: 3, n_classes: 16, hop: 1 };
    let (logits, state) = ar_step(&ArState::initial(&cfg), &[0.3; 4], &ModelParams::zeros(&cfg), &cfg).unwrap();
    let p = softmax(&logits);
    assert!(p.iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));
    assert_eq!(state.hidden, vec![0.0; 3]);
    assert_eq!(ArState::initial(&cfg).prev_class.index(), 8);
    assert!(ar_step(&ArState::initial(&cfg), &[0.3; 3], &ModelParams::zeros(&cfg), &cfg).is_err());
}

#[test]
fn ar_step_matches_scalar_oracle() {
    let cfg = ModelConfig { n_mels: 2, cond_hidden: 1, ar_hidden: 4, n_classes: 8, hop: 1 };
    let p = random_params(&cfg, 71, 0.8);
    let state = ArState { hidden: vec![0.1, -0.2, 0.3, -0.4], prev_class: MuLaw::new(8).unwrap().class(5).unwrap() };
    let cond = [0.25, -0.75];
    let (logits, next) = ar_step(&state, &cond, &p, &cfg).unwrap();

    // Independent evaluation with explicit index arithmetic.
    let codec = MuLaw::new(8).unwrap();
    let x = [codec.decode(state.prev_class), cond[0], cond[1]];
    let (hd, id) = (4usize, 3usize);
    let g = &p.ar_gru;
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let row = |m: &[f64], cols: usize, r: usize, v: &[f64]| (0..cols).map(|j| m[r * cols + j] * v[j]).sum::<f64>();
    let h: Vec<f64> = (0..hd)
        .map(|i| {
            let r = sig(row(&g.w, id, i, &x) + row(&g.u, hd, i, &state.hidden) + g.b[i]);
            let z = sig(row(&g.w, id, hd + i, &x) + row(&g.u, hd, hd + i, &state.hidden) + g.b[hd + i]);
            let n = (row(&g.w, id, 2 * hd + i, &x) + r * (row(&g.u, hd, 2 * hd + i, &state.hidden) + g.b[2 * hd + i])).tanh();
            (1.0 - z) * n + z * state.hidden[i]
        })
        .collect();
    let a: Vec<f64> = (0..hd).map(|i| (row(&p.affine_a.w, hd, i, &h) + p.affine_a.b[i]).max(0.0)).collect();
    for (k, &l) in logits.iter().enumerate() {
        let expected = row(&p.affine_b.w, hd, k, &a) + p.affine_b.b[k];
        assert!((l - expected).abs() < 1e-12);
    }
    for (a, b) in next.hidden.iter().zip(&h) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn nll_matches_high_precision_logsumexp() {
    let mut rng = seeded(81);
    let codec = MuLaw::new(8).unwrap();
    let logits: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|_| rng.random_range(-30.0..30.0)).collect()).collect();
    let targets: Vec<_> = (0..5).map(|i| codec.class((i * 3) % 8).unwrap()).collect();
    // Kahan-summed exp over shifted logits as the reference log-sum-exp.
    let mut expected = 0.0;
    for (row, t) in logits.iter().zip(&targets) {
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &l in row {
            let y = (l - max).exp() - comp;
            let s = sum + y;
            comp = (s - sum) - y;
            sum = s;
        }
        expected += max + sum.ln() - row[t.index()];
    }
    expected /= 5.0;
    assert!((nll_loss(&logits, &targets).unwrap() - expected).abs() < 1e-12);
    assert!(nll_loss(&logits[..4], &targets).is_err());

    let uniform = vec![vec![0.0; 1024]; 3];
    let c = MuLaw::ten_bit().class(17).unwrap();
    assert!((nll_loss(&uniform, &[c; 3]).unwrap() - 1024f64.ln()).abs() < 1e-12);
    let confident = vec![{
        let mut r = vec![0.0; 1024];
        r[17] = 1e3;
        r
    }];
    assert!(nll_loss(&confident, &[c]).unwrap() < 1e-300);
    assert!(log_softmax(&confident[0])[17] <= 0.0);
}
