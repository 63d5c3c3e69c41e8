use proptest::prelude::*;

use fbrep::envs::{Action, Env, EnvId, State};
use fbrep::model::{preprocess_z, sample_z, softmax, FbArch, FbModel, PolicyKind};
use fbrep::replay::{ReplayBuffer, Transition};
use fbrep::train::{loss_and_gradients, Batch};
use fbrep::RandomStream;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

proptest! {
    #[test]
    fn preprocessed_norm_is_below_sqrt_d_and_monotone(
        z in prop::collection::vec(-1e6f64..1e6, 1..40),
        grow in 1.0001f64..10.0,
    ) {
        let d = z.len() as f64;
        let p = norm(&preprocess_z(&z));
        prop_assert!(p < d.sqrt());
        let bigger: Vec<f64> = z.iter().map(|v| v * grow).collect();
        prop_assert!(norm(&preprocess_z(&bigger)) >= p);
    }

    #[test]
    fn greedy_action_is_scale_invariant(
        seed in any::<u64>(),
        scale in 1e-6f64..1e6,
        cell in 0usize..104,
    ) {
        let env = Env::from_id(EnvId::DiscreteMaze);
        let state = State::Cell(env.valid_cells().unwrap()[cell]);
        let mut rng = RandomStream::new(seed);
        let model = FbModel::new(env, &FbArch::new(6, &[12]), &mut rng);
        let z = sample_z(6, &mut rng);
        let q = model.q_values(&state, z.as_slice()).unwrap();
        let scaled: Vec<f64> = q.iter().map(|v| v * scale).collect();
        let greedy = PolicyKind::Greedy;
        prop_assert_eq!(greedy.sample(&q, &mut rng), greedy.sample(&scaled, &mut rng));
    }

    #[test]
    fn boltzmann_probabilities_sum_to_one(
        q in prop::collection::vec(-1e3f64..1e3, 1..8),
        tau in 1e-3f64..1e3,
    ) {
        let p = PolicyKind::Boltzmann { tau }.probabilities(&q);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn model_files_round_trip_bit_exact(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = RandomStream::new(seed);
        let model = FbModel::new(Env::from_id(EnvId::Cycle(5)), &FbArch::new(d, &[4, 3]), &mut rng);
        let mut bytes = Vec::new();
        model.write_to(&mut bytes, "echo").unwrap();
        let (back, echo) = FbModel::read_from(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(echo, "echo");
        let mut again = Vec::new();
        back.write_to(&mut again, "echo").unwrap();
        prop_assert_eq!(bytes, again);
    }
}

fn small_setup(seed: u64) -> (FbModel, Batch) {
    let env = Env::from_id(EnvId::DiscreteMaze);
    let mut rng = RandomStream::new(seed);
    let mut model = FbModel::new(env.clone(), &FbArch::new(5, &[10, 10]), &mut rng);
    // make the targets differ from the online nets
    let other = FbModel::new(env.clone(), &FbArch::new(5, &[10, 10]), &mut rng);
    model.f_target.polyak_update(&other.f_net, 0.5);
    model.b_target.polyak_update(&other.b_net, 0.5);
    let mut buffer = ReplayBuffer::new(500);
    let mut s = env.reset(&mut rng);
    for i in 0..300 {
        let a = Action(i * 3 % 5);
        let next = env.step(&s, a, &mut rng);
        buffer.push(Transition::new(s, a, next));
        s = next;
    }
    let batch = Batch::sample(&buffer, 7, 5, &mut rng).unwrap();
    (model, batch)
}

/// The FB and regularizer losses written out term by term, with the
/// target-policy softmax on the target F network.
fn direct_losses(model: &FbModel, batch: &Batch, gamma: f64, tau: f64) -> (f64, f64) {
    let b = batch.len() as f64;
    let d = model.d();
    let online_b = |s: &State| model.backward_state(s);
    let target_b = |s: &State| model.b_target.net().forward(&model.env().featurize(s)).unwrap();
    let mut fm = Vec::new();
    let mut ftgt = Vec::new();
    for (t, z) in batch.transitions.iter().zip(&batch.zs) {
        let z = z.as_slice();
        fm.push(model.forward_f(&t.state, t.action, z).unwrap());
        let x = model.f_inputs(&[t.next], &[z]).unwrap();
        let all = model.f_target.net().forward(x.row(0).as_slice().unwrap()).unwrap();
        let blocks: Vec<&[f64]> = all.chunks(d).collect();
        let logits: Vec<f64> = blocks.iter().map(|f| dot(f, z)).collect();
        let pi = softmax(&logits, tau);
        let mut avg = vec![0.0; d];
        for (p, f) in pi.iter().zip(&blocks) {
            for k in 0..d {
                avg[k] += p * f[k];
            }
        }
        ftgt.push(avg);
    }
    let bt: Vec<Vec<f64>> = batch.targets.iter().map(|(s, _)| online_b(s)).collect();
    let btgt: Vec<Vec<f64>> = batch.targets.iter().map(|(s, _)| target_b(s)).collect();
    let bd: Vec<Vec<f64>> = batch.transitions.iter().map(|t| online_b(&t.state)).collect();
    let mut fb = 0.0;
    let mut reg = 0.0;
    for i in 0..batch.len() {
        for j in 0..batch.len() {
            fb += (dot(&fm[i], &bt[j]) - gamma * dot(&ftgt[i], &btgt[j])).powi(2) / (2.0 * b * b);
            reg += dot(&bd[i], &bt[j]).powi(2) / (b * b);
        }
        fb -= dot(&fm[i], &bd[i]) / b;
        reg -= dot(&bd[i], &bd[i]) / b;
    }
    (fb, reg)
}

#[test]
fn losses_match_the_direct_formula() {
    for seed in 0..5 {
        let (model, batch) = small_setup(seed);
        let out = loss_and_gradients(&model, &batch, 0.99, 200.0, 1.0).unwrap();
        let (fb, reg) = direct_losses(&model, &batch, 0.99, 200.0);
        assert!((out.fb_loss - fb).abs() <= 1e-10 * fb.abs().max(1.0), "{} vs {fb}", out.fb_loss);
        assert!((out.reg_loss - reg).abs() <= 1e-10 * reg.abs().max(1.0), "{} vs {reg}", out.reg_loss);
        // a soft target policy as well
        let out = loss_and_gradients(&model, &batch, 0.9, 0.5, 1.0).unwrap();
        let (fb, _) = direct_losses(&model, &batch, 0.9, 0.5);
        assert!((out.fb_loss - fb).abs() <= 1e-10 * fb.abs().max(1.0));
    }
}

#[test]
fn training_gradients_match_finite_differences() {
    let (model, batch) = small_setup(9);
    let (gamma, tau) = (0.99, 3.0);
    let out = loss_and_gradients(&model, &batch, gamma, tau, 0.0).unwrap();
    let h = 1e-6;
    let mut rng = RandomStream::new(10);
    for (which, grad) in [("F", out.f_grad.flatten()), ("B", out.b_grad.flatten())] {
        let theta = if which == "F" { model.f_net.flatten() } else { model.b_net.flatten() };
        for _ in 0..10 {
            let k = rand::Rng::random_range(&mut rng, 0..theta.len());
            let eval = |delta: f64| {
                let mut m = model.clone();
                let mut t = theta.clone();
                t[k] += delta;
                if which == "F" {
                    m.f_net.set_flat(&t).unwrap();
                } else {
                    m.b_net.set_flat(&t).unwrap();
                }
                direct_losses(&m, &batch, gamma, tau).0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let scale = grad[k].abs().max(fd.abs());
            assert!(scale == 0.0 || (grad[k] - fd).abs() / scale < 1e-4, "{which} {k}: {} vs {fd}", grad[k]);
        }
    }
}
