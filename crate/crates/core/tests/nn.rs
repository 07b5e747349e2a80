use lep_core::mathcore::{finite_diff_check_many, Array2, MathError, Tape};
use lep_core::nn::{
    gaussian_nll, gaussian_nll_node, load_params, save_params, Activation, Binding, GaussianHead, Lstm, LstmState,
    ModelMeta, Mlp, Module, LOG_STD_MAX, LOG_STD_MIN,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2 {
    Array2::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

#[test]
fn lstm_step_nll_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lstm = Lstm::new(3, 2, &mut rng);
    let head = GaussianHead::new(2, 2, &mut rng);
    let x = random(1, 3, 1.0, &mut rng);
    let target = random(1, 2, 1.0, &mut rng);
    let mut params: Vec<Array2> = lstm.tensors().into_iter().cloned().collect();
    params.extend(head.tensors().into_iter().cloned());

    let err = finite_diff_check_many(
        |tape, ids| {
            let lb = Binding::from_nodes(tape, &ids[..3]);
            let hb = Binding::from_nodes(tape, &ids[3..]);
            let wrap = |_| MathError::NonFinite { op: "lstm" };
            let st = lstm.initial_nodes(tape, 1);
            let xi = tape.constant(x.clone());
            let st = lstm.step(tape, &lb, xi, st).map_err(wrap)?;
            let (mean, log_std) = head.forward(tape, &hb, st.h).map_err(wrap)?;
            let t = tape.constant(target.clone());
            gaussian_nll_node(tape, mean, log_std, t).map_err(wrap)
        },
        &params,
        1e-5,
    );
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn taped_nll_matches_plain_nll() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mean = random(3, 2, 1.0, &mut rng);
    let log_std = random(3, 2, 0.5, &mut rng);
    let target = random(3, 2, 1.0, &mut rng);
    let mut tape = Tape::new();
    let (m, l, t) = (
        tape.constant(mean.clone()),
        tape.constant(log_std.clone()),
        tape.constant(target.clone()),
    );
    let node = gaussian_nll_node(&mut tape, m, l, t).unwrap();
    let mut plain = 0.0;
    for r in 0..3 {
        let std: Vec<f64> = log_std.row_slice(r).iter().map(|v| v.exp()).collect();
        plain += gaussian_nll(mean.row_slice(r), &std, target.row_slice(r)).unwrap();
    }
    assert!((tape.value(node).item() - plain / 3.0).abs() < 1e-12);
}

#[test]
fn mlp_save_load_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Mlp::new(&[4, 7, 3], Activation::Tanh, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    save_params(&path, ModelMeta::default(), &net).unwrap();
    let mut copy = Mlp::new(&[4, 7, 3], Activation::Tanh, &mut rng);
    assert_ne!(copy.to_named(), net.to_named());
    copy.load_tensors(&load_params(&path).unwrap().named().unwrap()).unwrap();
    assert_eq!(copy.to_named(), net.to_named());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lstm_step_is_a_pure_function(seed in any::<u64>(), input in 1usize..5, hidden in 1usize..6, batch in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = Lstm::new(input, hidden, &mut rng);
        let x = random(batch, input, 2.0, &mut rng);
        let state = LstmState { h: random(batch, hidden, 1.0, &mut rng), c: random(batch, hidden, 1.0, &mut rng) };
        let a = lstm.step_eval(&x, &state).unwrap();
        // unrelated work in between must not influence the result
        let _ = lstm.step_eval(&random(batch, input, 2.0, &mut rng), &LstmState::zeros(batch, hidden)).unwrap();
        let b = lstm.step_eval(&x, &state).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn head_std_stays_in_bounds(seed in any::<u64>(), scale in 0.1f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = GaussianHead::new(4, 3, &mut rng);
        let h = random(5, 4, scale, &mut rng);
        let (_, std) = head.eval(&h).unwrap();
        for &s in std.data() {
            prop_assert!(s >= LOG_STD_MIN.exp() && s <= LOG_STD_MAX.exp(), "std {}", s);
        }
    }

    #[test]
    fn nll_is_minimized_at_the_target(mu in -3.0f64..3.0, a in -3.0f64..3.0, sigma in 0.05f64..3.0) {
        let at = gaussian_nll(&[a], &[sigma], &[a]).unwrap();
        let off = gaussian_nll(&[mu], &[sigma], &[a]).unwrap();
        prop_assert!(at <= off);
        // gradient sign w.r.t. μ points back towards a
        let mut tape = Tape::new();
        let m = tape.param(Array2::scalar(mu));
        let l = tape.constant(Array2::scalar(sigma.ln()));
        let t = tape.constant(Array2::scalar(a));
        let nll = gaussian_nll_node(&mut tape, m, l, t).unwrap();
        let g = tape.backward(nll).unwrap().get(m).unwrap().item();
        if mu > a + 1e-9 { prop_assert!(g > 0.0); }
        if mu < a - 1e-9 { prop_assert!(g < 0.0); }
    }

    #[test]
    fn save_load_preserves_every_parameter(seed in any::<u64>(), hidden in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lstm = Lstm::new(3, hidden, &mut rng);
        // include awkward magnitudes
        lstm.bias_mut().data_mut()[0] = rng.gen::<f64>() * 1e-300;
        lstm.bias_mut().data_mut()[1 % (4 * hidden)] = rng.gen::<f64>() * 1e300;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lstm.json");
        save_params(&path, ModelMeta::default(), &lstm).unwrap();
        let mut copy = Lstm::zeroed(3, hidden);
        copy.load_tensors(&load_params(&path).unwrap().named().unwrap()).unwrap();
        for (x, y) in lstm.tensors().iter().zip(copy.tensors()) {
            let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(xb, yb);
        }
    }
}
