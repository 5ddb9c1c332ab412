use std::sync::Arc;

use mtnav::agent::*;
use mtnav::env::*;
use mtnav::nn::{BoundParams, Mode, ParamSet, RngStream};
use mtnav::perception::*;
use mtnav::tensor::{finite_diff_check_params, Tape, Tensor, Var};

const N: usize = 6;

fn small_cfg() -> ModelConfig {
    ModelConfig {
        d_i: 6,
        d_s: 5,
        d_n: 4,
        d_e: 5,
        d_o: 3,
        d_z: 7,
        d_g: 8,
        lstm_hidden: 6,
        it_channels: 3,
        fe_hidden: 4,
        dropout: 0.3,
        appearance_dim: 4,
        appearance_seed: 9,
    }
}

fn model(variant: Variant) -> (MtModel, ParamSet) {
    MtModel::new(&small_cfg(), variant, N, 8, 17).unwrap()
}

/// Inputs from a random walk so every memory has rows.
fn walk_inputs(seed: u64, steps: usize) -> (ThinkingInputs, AgentState, TargetCode) {
    let gen = GenConfig {
        n_classes: N,
        instances_per_class: 2,
        ..Default::default()
    };
    let plan = Arc::new(generate_floorplan(seed, &gen, "a", Split::Train).unwrap());
    let table = AppearanceTable::seeded(N, 4, 9);
    let mut rng = RngStream::new(seed);
    let target = rng.below(N);
    let (mut env, mut obs) = NavEnv::reset(plan, target, &EnvConfig::default(), Mode::Eval, &mut rng, None).unwrap();
    let mut mem = Memories::new(MemoryConfig::default());
    mem.update(&obs, &env.state(), target);
    for i in 0..steps {
        // bias towards moving so collisions and sightings both happen
        let a = if i % 3 == 0 { Action::ALL[rng.below(5)] } else { Action::MoveAhead };
        obs = env.step(a).unwrap();
        mem.update(&obs, &env.state(), target);
    }
    let inputs = build_inputs(&obs, target, &mem, &table);
    let code = make_target_code(target, N, TargetMode::OneHot, None).unwrap();
    (inputs, env.state(), code)
}

fn rich_inputs() -> (ThinkingInputs, AgentState, TargetCode) {
    for seed in 0..200 {
        let (inp, s, t) = walk_inputs(seed, 40);
        if !inp.nt.is_empty() && !inp.ot.is_empty() && inp.st.data().iter().any(|&v| v != 0.0) {
            return (inp, s, t);
        }
    }
    panic!("no walk produced sightings and collisions");
}

fn vals(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).data().to_vec()
}

#[test]
fn intuition_zero_input_and_shape() {
    let (m, ps) = model(Variant::default());
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let mut rng = RngStream::new(0);
    let zero = Tensor::zeros(&[8, 7, 7]);
    let a = m.encode_intuition(&mut tape, &p, &zero, Mode::Eval, &mut rng).unwrap();
    let b = m.encode_intuition(&mut tape, &p, &zero, Mode::Eval, &mut rng).unwrap();
    assert_eq!(tape.value(a).shape(), &[1, 6]);
    assert_eq!(vals(&tape, a), vals(&tape, b));
    // conv bias is zero at init, so the projection only sees its own bias
    assert!(vals(&tape, a).iter().all(|&v| v == 0.0));
}

#[test]
fn search_uniform_attention_and_zero_rows() {
    let (m, ps) = model(Variant::default());
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let t = make_target_code(2, N, TargetMode::OneHot, None).unwrap();
    let coef = m.attention_coefficients(&mut tape, &p, &t).unwrap();
    for c in vals(&tape, coef) {
        assert!((c - 1.0 / N as f64).abs() < 1e-15);
    }
    let zero = Tensor::zeros(&[N, 10]);
    let o = m.encode_search(&mut tape, &p, &zero, &t, Mode::Eval, &mut RngStream::new(0)).unwrap();
    assert!(vals(&tape, o).iter().all(|&v| v == 0.0));
}

#[test]
fn search_permutation_invariance() {
    // weighted sum Σ_j a_j·relu(x_j W) computed with permuted rows and
    // coefficients must match
    let (m, ps) = model(Variant::default());
    let w = ps.value(ps.find("st.embed.w").unwrap()).clone();
    let mut rng = RngStream::new(4);
    let rows: Vec<Vec<f64>> = (0..N).map(|_| (0..10).map(|_| rng.range(-1.0, 1.0)).collect()).collect();
    let coef: Vec<f64> = (0..N).map(|_| rng.uniform()).collect();
    let encode = |order: &[usize]| -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(N, 10, order.iter().flat_map(|&i| rows[i].clone()).collect()).unwrap());
        let wv = tape.constant(w.clone());
        let e = tape.affine(x, wv, None).unwrap();
        let e = tape.relu(e);
        let a = tape.constant(Tensor::row(order.iter().map(|&i| coef[i]).collect()).unwrap());
        let o = tape.matmul(a, e).unwrap();
        tape.value(o).data().to_vec()
    };
    let base = encode(&[0, 1, 2, 3, 4, 5]);
    for perm in [[5, 4, 3, 2, 1, 0], [1, 0, 3, 2, 5, 4], [2, 5, 0, 4, 1, 3]] {
        let got = encode(&perm);
        for (a, b) in base.iter().zip(&got) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    // and the model's own encoder agrees with this direct evaluation
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let st = Tensor::matrix(N, 10, rows.concat()).unwrap();
    let t = make_target_code(0, N, TargetMode::OneHot, None).unwrap();
    let o = m.encode_search(&mut tape, &p, &st, &t, Mode::Eval, &mut RngStream::new(0)).unwrap();
    let mut tape2 = Tape::new();
    let x = tape2.constant(st);
    let wv = tape2.constant(w);
    let e = tape2.affine(x, wv, None).unwrap();
    let e = tape2.relu(e);
    let sum = tape2.reduce(e, 0, mtnav::tensor::Reduction::Mean).unwrap();
    for (a, b) in vals(&tape, o).iter().zip(tape2.value(sum).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn similarity_attention_is_convex_mixture() {
    let (m, mut ps) = model(Variant::default());
    let id = ps.find("st.attention").unwrap();
    let mut rng = RngStream::new(8);
    for v in ps.data_mut(id) {
        *v = rng.range(-2.0, 2.0);
    }
    let names = (0..N).map(|i| format!("c{i}")).collect();
    let emb = ClassEmbeddings::new(names, 3, (0..3 * N).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap();
    let t = make_target_code(1, N, TargetMode::Similarity, Some(&emb)).unwrap();
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let coef = m.attention_coefficients(&mut tape, &p, &t).unwrap();
    let coef = vals(&tape, coef);
    assert!((coef.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(coef.iter().all(|&c| c > 0.0));
}

#[test]
fn navigation_empty_and_single_row() {
    let (m, ps) = model(Variant::default());
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let s = AgentState::new(3, 3, Heading::EAST, Pitch::Level);
    let t = tape.constant(Tensor::row(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
    let mut rng = RngStream::new(0);
    let o = m.encode_navigation(&mut tape, &p, &[], &s, t, Mode::Eval, &mut rng).unwrap();
    assert_eq!(vals(&tape, o), vec![0.0; 4]);

    // one row: H is a scalar, so NT_o = h · relu(W x + b) ⊙ F_E
    let row = [0.3, 0.4, 0.5, 0.6, 2.0, 1.5, 90.0, -30.0, 0.8];
    let o = m.encode_navigation(&mut tape, &p, &[row], &s, t, Mode::Eval, &mut rng).unwrap();
    let feat = nt_features(&[row], &s).unwrap();
    let x = feat.data();
    let get = |name: &str| ps.value(ps.find(name).unwrap()).data().to_vec();
    let mut h = 0.0;
    for j in 0..3 {
        let w = get(&format!("nt.tcn{j}.w"));
        let k = w.len() / 11;
        let centre = k / 2;
        h += (0..11).map(|f| w[centre * 11 + f] * x[f]).sum::<f64>() + get(&format!("nt.tcn{j}.b"))[0];
    }
    let (w, b) = (get("nt.f_nt.w"), get("nt.f_nt.b"));
    let f: Vec<f64> = (0..4).map(|j| ((0..11).map(|i| x[i] * w[i * 4 + j]).sum::<f64>() + b[j]).max(0.0)).collect();
    let (w1, b1, w2, b2) = (get("nt.f_e1.w"), get("nt.f_e1.b"), get("nt.f_e2.w"), get("nt.f_e2.b"));
    let hid: Vec<f64> = (0..4).map(|j| (w1[4 + j] + b1[j]).max(0.0)).collect();
    let gate: Vec<f64> = (0..4)
        .map(|j| 1.0 / (1.0 + (-((0..4).map(|i| hid[i] * w2[i * 4 + j]).sum::<f64>() + b2[j])).exp()))
        .collect();
    for (j, got) in vals(&tape, o).into_iter().enumerate() {
        assert!((got - h * f[j] * gate[j]).abs() < 1e-12, "{j}");
    }
}

#[test]
fn exploration_mean_invariance() {
    let (m, ps) = model(Variant::default());
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let s = AgentState::new(4, 4, Heading::SOUTH, Pitch::Up);
    let me = [s.x_m(), s.y_m(), s.theta_deg(), s.beta_deg()];
    let single = m.encode_exploration(&mut tape, &p, &[me], &s).unwrap();
    let rows = [me, [1.0, 2.0, 0.0, 0.0], [3.5, 0.5, 180.0, 30.0]];
    let doubled: Vec<[f64; 4]> = rows.iter().chain(rows.iter()).copied().collect();
    let a = m.encode_exploration(&mut tape, &p, &rows, &s).unwrap();
    let b = m.encode_exploration(&mut tape, &p, &doubled, &s).unwrap();
    for (x, y) in vals(&tape, a).iter().zip(vals(&tape, b)) {
        assert!((x - y).abs() < 1e-12);
    }
    let again = m.encode_exploration(&mut tape, &p, &[me], &s).unwrap();
    assert_eq!(vals(&tape, single), vals(&tape, again));
    assert!(m.encode_exploration(&mut tape, &p, &[], &s).is_err());
}

#[test]
fn obstacle_empty_and_direction_sensitive() {
    let (m, ps) = model(Variant::default());
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let s = AgentState::new(4, 4, Heading::EAST, Pitch::Level);
    let o = m.encode_obstacle(&mut tape, &p, &[], &s).unwrap();
    assert_eq!(vals(&tape, o), vec![0.0; 3]);
    let ahead = m.encode_obstacle(&mut tape, &p, &[[2.5, 2.0]], &s).unwrap();
    let behind = m.encode_obstacle(&mut tape, &p, &[[1.5, 2.0]], &s).unwrap();
    assert_ne!(vals(&tape, ahead), vals(&tape, behind));
    let dup = m.encode_obstacle(&mut tape, &p, &[[2.5, 2.0], [2.5, 2.0]], &s).unwrap();
    for (a, b) in vals(&tape, ahead).iter().zip(vals(&tape, dup)) {
        assert!((a - b).abs() < 1e-15);
    }
}

fn zero_gates(ps: &mut ParamSet) {
    let ids: Vec<_> = ps.ids().filter(|&id| ps.get(id).name.starts_with("mtc.gate_")).collect();
    assert_eq!(ids.len(), 10);
    for id in ids {
        ps.data_mut(id).iter_mut().for_each(|v| *v = 0.0);
    }
}

#[test]
fn zeroed_gates_halve_outputs_exactly() {
    let (m, mut ps) = model(Variant::default());
    zero_gates(&mut ps);
    let (inp, s, t) = rich_inputs();
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let raw = m.encode(&mut tape, &p, &inp, &s, &t, Mode::Eval, &mut RngStream::new(0)).unwrap();
    let out = m.recalibrate(&mut tape, &p, raw).unwrap();
    for k in 0..5 {
        let (o, c) = (vals(&tape, out.raw[k].unwrap()), vals(&tape, out.recalibrated[k].unwrap()));
        for (a, b) in o.iter().zip(&c) {
            assert_eq!((0.5 * a).to_bits(), b.to_bits());
        }
    }
}

#[test]
fn policy_outputs_are_valid_and_reproducible() {
    let (m, ps) = model(Variant::default());
    let (inp, s, t) = rich_inputs();
    let run = || {
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let (h, c) = m.initial_state();
        let (h, c) = (tape.constant(h), tape.constant(c));
        let out = m.forward(&mut tape, &p, &inp, &s, &t, h, c, Mode::Eval, &mut RngStream::new(0)).unwrap();
        let probs = tape.softmax_rows(out.logits).unwrap();
        (vals(&tape, out.logits), vals(&tape, probs), activation_means(&tape, &out.thinking))
    };
    let (logits, probs, means) = run();
    assert_eq!(logits.len(), 6);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(run(), (logits, probs, means));
}

#[test]
fn it_only_registers_no_other_encoders() {
    let (_, ps) = model(Variant {
        thinkings: Thinkings::IT_ONLY,
        mtc: true,
    });
    for name in ps.names() {
        for prefix in ["st.", "nt.", "et.", "ot.", "mtc.gate_st", "mtc.gate_nt", "mtc.gate_et", "mtc.gate_ot"] {
            assert!(!name.starts_with(prefix), "{name}");
        }
    }
    let none = Variant {
        thinkings: Thinkings {
            it: false,
            st: false,
            nt: false,
            et: false,
            ot: false,
        },
        mtc: true,
    };
    assert!(matches!(MtModel::new(&small_cfg(), none, N, 8, 1), Err(mtnav::Error::Config(_))));
}

#[test]
fn activation_means_match_direct_sum() {
    let (m, ps) = model(Variant::default());
    let (inp, s, t) = rich_inputs();
    let mut tape = Tape::new();
    let p = ps.bind(&mut tape, false);
    let raw = m.encode(&mut tape, &p, &inp, &s, &t, Mode::Eval, &mut RngStream::new(0)).unwrap();
    let out = m.recalibrate(&mut tape, &p, raw).unwrap();
    let means = activation_means(&tape, &out);
    for (k, mean) in means.iter().enumerate() {
        let v = vals(&tape, out.recalibrated[k].unwrap());
        let mut acc = 0.0;
        for x in &v {
            acc += x;
        }
        assert!((mean - acc / v.len() as f64).abs() < 1e-12);
    }
}

/// Relative-error check of a scalar objective over every parameter tensor of
/// `ps` on up to `per_tensor` coordinates each.
fn grad_check(ps: &ParamSet, per_tensor: usize, mut objective: impl FnMut(&mut Tape, &BoundParams) -> mtnav::Result<Var>) -> (f64, usize) {
    let tensors: Vec<Tensor> = ps.iter().map(|p| p.value().clone()).collect();
    let mut rng = RngStream::new(5);
    let mut coords = Vec::new();
    for (t, tensor) in tensors.iter().enumerate() {
        for _ in 0..per_tensor.min(tensor.numel()) {
            coords.push((t, rng.below(tensor.numel())));
        }
    }
    let rep = finite_diff_check_params(
        |tape, vars| objective(tape, &BoundParams::from_vars(vars.to_vec())),
        &tensors,
        &coords,
        1e-5,
    )
    .unwrap();
    (rep.max_rel_err, rep.checked)
}

fn randomize(ps: &mut ParamSet, seed: u64) {
    // move away from the zero-initialised attention and biases
    let mut rng = RngStream::new(seed);
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        for v in ps.data_mut(id) {
            *v += rng.range(-0.3, 0.3);
        }
    }
}

#[test]
fn every_encoder_passes_gradient_check() {
    let (inp, s, t) = rich_inputs();
    let (m, mut ps) = model(Variant::default());
    randomize(&mut ps, 3);
    let scalar = |tape: &mut Tape, v: Var| -> Var {
        let sq = tape.mul(v, v).unwrap();
        tape.sum_all(sq)
    };
    let (err, n) = grad_check(&ps, 4, |tape, p| {
        let mut rng = RngStream::new(0);
        let o = m.encode_intuition(tape, p, &inp.it, Mode::Eval, &mut rng)?;
        Ok(scalar(tape, o))
    });
    assert!(err <= 1e-4, "IT {err}");
    assert!(n > 0);
    let (err, _) = grad_check(&ps, 4, |tape, p| {
        let o = m.encode_search(tape, p, &inp.st, &t, Mode::Eval, &mut RngStream::new(0))?;
        Ok(scalar(tape, o))
    });
    assert!(err <= 1e-4, "ST {err}");
    let (err, _) = grad_check(&ps, 4, |tape, p| {
        let tv = tape.constant(t.as_row());
        let o = m.encode_navigation(tape, p, &inp.nt, &s, tv, Mode::Eval, &mut RngStream::new(0))?;
        Ok(scalar(tape, o))
    });
    assert!(err <= 1e-4, "NT {err}");
    let (err, _) = grad_check(&ps, 4, |tape, p| {
        let o = m.encode_exploration(tape, p, &inp.et, &s)?;
        Ok(scalar(tape, o))
    });
    assert!(err <= 1e-4, "ET {err}");
    let (err, _) = grad_check(&ps, 4, |tape, p| {
        let o = m.encode_obstacle(tape, p, &inp.ot, &s)?;
        Ok(scalar(tape, o))
    });
    assert!(err <= 1e-4, "OT {err}");
    let (err, _) = grad_check(&ps, 4, |tape, p| {
        let raw = m.encode(tape, p, &inp, &s, &t, Mode::Eval, &mut RngStream::new(0))?;
        let out = m.recalibrate(tape, p, raw)?;
        let parts: Vec<Var> = out.recalibrated.iter().flatten().copied().collect();
        let cat = tape.concat(&parts, 1)?;
        Ok(scalar(tape, cat))
    });
    assert!(err <= 1e-4, "MTC {err}");
}

#[test]
fn dropout_masks_are_reproducible_under_gradient_check() {
    let (inp, s, t) = rich_inputs();
    let (m, mut ps) = model(Variant::default());
    randomize(&mut ps, 4);
    let (err, n) = grad_check(&ps, 3, |tape, p| {
        let (h, c) = m.initial_state();
        let (h, c) = (tape.constant(h), tape.constant(c));
        let out = m.forward(tape, p, &inp, &s, &t, h, c, Mode::Train, &mut RngStream::new(77))?;
        let lp = tape.log_softmax_rows(out.logits)?;
        let a = tape.pick(lp, 2)?;
        let v = tape.sum_all(out.value);
        tape.add(a, v)
    });
    assert!(err <= 1e-4, "{err}");
    assert!(n >= 50, "{n}");
}
