use atlstm::corpus::synthetic::{encode_windows, keyword_windows, vocab_for, KeywordConfig};
use atlstm::corpus::{build_vocab, tokenize, Charset, EncodedTitle, WindowSample};
use atlstm::layers::{
    attention_over_attention, bilstm_encode, lstm_step, multi_hop_attention, AttentionParams, LstmParams,
};
use atlstm::model::{build_variant, AtLstmModel, Hyper, Variant};
use atlstm::tensor::{grad_check, GradCheckOptions, GradStore, ParamStore, Tape, Tensor, TensorError, Var};
use atlstm::training::{decode_checkpoint, encode_checkpoint, evaluate, AdadeltaConfig, AdadeltaState};
use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn values(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    values(rows * cols, lo, hi).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..6, 1usize..6)
}

/// `sum(w ⊙ out)` with positive weights, so that every gradient below is
/// bounded away from zero and the relative error is meaningful.
fn weighted_sum(tape: &mut Tape<'_>, out: Var, weights: &[f64]) -> Result<Var, TensorError> {
    let n = tape.numel(out);
    let flat = tape.reshape(out, &[n])?;
    let w = tape.constant(Tensor::vector(weights[..n].to_vec()))?;
    let prod = tape.mul(flat, w)?;
    tape.sum(prod)
}

fn check(store: &mut ParamStore, build: impl Fn(&mut Tape<'_>) -> Result<Var, TensorError>) -> f64 {
    let opts = GradCheckOptions {
        tol: 1e-6,
        ..Default::default()
    };
    let r = grad_check(store, &opts, build).unwrap();
    r.max_rel_error
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_are_distributions((r, c) in dims(), seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.leaf(Tensor::randn(&[r, c], scale, &mut rng));
        let s = tape.softmax_rows(x).unwrap();
        for row in tape.value(s).chunks(c) {
            prop_assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn identity_matmul_is_exact((r, c) in dims(), ints in prop::collection::vec(-1000i32..1000, 36)) {
        let a = Tensor::matrix(r, c, ints[..r * c].iter().map(|&i| f64::from(i) / 8.0).collect()).unwrap();
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let av = tape.leaf(a.clone());
        let il = tape.leaf(Tensor::identity(r));
        let ir = tape.leaf(Tensor::identity(c));
        let left = tape.matmul(il, av).unwrap();
        let right = tape.matmul(av, ir).unwrap();
        prop_assert_eq!(tape.value(left), a.data());
        prop_assert_eq!(tape.value(right), a.data());
    }

    #[test]
    fn max_pool_routes_gradient_to_first_argmax(
        (k, d) in dims(),
        ints in prop::collection::vec(-3i32..3, 25),
        w in values(5, 0.5, 1.5),
    ) {
        // small integers force ties
        let xs: Vec<f64> = ints[..k * d].iter().map(|&i| f64::from(i)).collect();
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.leaf(Tensor::matrix(k, d, xs.clone()).unwrap());
        let p = tape.max_pool_time(x).unwrap();
        let loss = weighted_sum(&mut tape, p, &w).unwrap();
        let g = tape.backward(loss).unwrap();
        let gx = g.wrt(x).unwrap();
        for c in 0..d {
            let col: Vec<f64> = (0..k).map(|t| xs[t * d + c]).collect();
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = col.iter().position(|&v| v == max).unwrap();
            for t in 0..k {
                let expected = if t == first { w[c] } else { 0.0 };
                prop_assert_eq!(gx[t * d + c], expected);
            }
        }
    }

    #[test]
    fn replay_is_bit_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::randn(&[3, 4], 1.0, &mut rng)).unwrap();
        let b = store.add("b", Tensor::randn(&[4], 1.0, &mut rng)).unwrap();
        let run = || {
            let mut tape = Tape::new(&store);
            let (av, bv) = (tape.param(a), tape.param(b));
            let z = tape.matvec(av, bv).unwrap();
            let t = tape.tanh(z).unwrap();
            let s = tape.softmax_rows(t).unwrap();
            let l = tape.sum(s).unwrap();
            let g = tape.backward(l).unwrap().to_grad_store(&store);
            (tape.value(s).to_vec(), g.get(a).to_vec(), g.get(b).to_vec())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn linear_and_elementwise_gradients_match_differences(
        a in matrix(3, 4, 0.5, 1.5),
        b in matrix(4, 2, 0.5, 1.5),
        x in values(4, -1.0, 1.0),
        y in values(4, 0.5, 1.5),
        w in values(12, 0.5, 1.5),
    ) {
        let mut store = ParamStore::new();
        let ia = store.add("a", a).unwrap();
        let ib = store.add("b", b).unwrap();
        let ix = store.add("x", Tensor::vector(x)).unwrap();
        let iy = store.add("y", Tensor::vector(y)).unwrap();

        let mut worst: f64 = 0.0;
        worst = worst.max(check(&mut store, |t| {
            let (a, b) = (t.param(ia), t.param(ib));
            let m = t.matmul(a, b)?;
            weighted_sum(t, m, &w)
        }));
        worst = worst.max(check(&mut store, |t| {
            let (a, y) = (t.param(ia), t.param(iy));
            let m = t.matvec(a, y)?;
            weighted_sum(t, m, &w)
        }));
        for op in 0..6 {
            worst = worst.max(check(&mut store, |t| {
                let (x, y) = (t.param(ix), t.param(iy));
                let out = match op {
                    0 => t.add(x, y)?,
                    1 => t.sub(y, x)?,
                    2 => t.mul(x, y)?,
                    3 => t.tanh(x)?,
                    4 => t.sigmoid(x)?,
                    _ => {
                        let s = t.scale(x, 1.7)?;
                        t.concat(&[s, y], 0)?
                    }
                };
                weighted_sum(t, out, &w)
            }));
        }
        prop_assert!(worst <= 1e-6, "max rel error {worst:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lstm_outputs_are_bounded(
        seed in any::<u64>(),
        std in 0.1f64..3.0,
        x in values(3, -5.0, 5.0),
        h in values(2, -0.99, 0.99),
        c in values(2, -4.0, 4.0),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = LstmParams::new(&mut store, "cell", 3, 2, std, &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let xv = tape.leaf(Tensor::vector(x));
        let hv = tape.leaf(Tensor::vector(h));
        let cv = tape.leaf(Tensor::vector(c.clone()));
        let (h1, c1) = lstm_step(&mut tape, &p, xv, hv, cv).unwrap();
        // f, i in (0,1) and |C̃| < 1 give |c_t| < |c_prev| + 1
        for (new, old) in tape.value(c1).iter().zip(&c) {
            prop_assert!(new.abs() < old.abs() + 1.0);
        }
        prop_assert!(tape.value(h1).iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn bilstm_width_is_twice_hidden(seed in any::<u64>(), len in 1usize..6, u in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let f = LstmParams::new(&mut store, "f", 3, u, 0.5, &mut rng).unwrap();
        let b = LstmParams::new(&mut store, "b", 3, u, 0.5, &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let seq: Vec<Var> = (0..len).map(|_| tape.leaf(Tensor::randn(&[3], 1.0, &mut rng))).collect();
        let h = bilstm_encode(&mut tape, &f, &b, &seq).unwrap();
        prop_assert_eq!(tape.shape(h), &[len, 2 * u]);
    }

    #[test]
    fn attention_is_convex_and_reducer_bounded(
        seed in any::<u64>(),
        len in 1usize..8,
        d in 1usize..5,
        hops in 1usize..4,
        mask_bits in prop::collection::vec(any::<bool>(), 8),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = AttentionParams::new(&mut store, "att", d, 3, hops, 1.0, &mut rng).unwrap();
        let mut mask = mask_bits[..len].to_vec();
        mask[seed as usize % len] = true;
        // bounded inputs keep the reducer's pre-activation where f64 tanh is still below 1
        let h = Tensor::matrix(len, d, (0..len * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let mut tape = Tape::new(&store);
        let hv = tape.leaf(h.clone());
        let (m, a) = multi_hop_attention(&mut tape, &p, hv, &mask).unwrap();
        let v = attention_over_attention(&mut tape, &p, m).unwrap();
        for row in tape.value(a).chunks(len) {
            let kept: f64 = row.iter().zip(&mask).filter(|(_, &k)| k).map(|(x, _)| x).sum();
            prop_assert!((kept - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().zip(&mask).all(|(x, &k)| k || *x == 0.0));
        }
        for col in 0..d {
            let vals: Vec<f64> = (0..len).filter(|&t| mask[t]).map(|t| h.at(t, col)).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-12;
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-12;
            for j in 0..hops {
                let x = tape.value(m)[j * d + col];
                prop_assert!(lo <= x && x <= hi);
            }
        }
        prop_assert!(tape.value(v).iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn encoded_ids_stay_in_range(texts in prop::collection::vec("[a-zA-Z ,.!]{0,30}", 1..12), min_count in 1usize..3) {
        let tokens: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
        prop_assume!(tokens.iter().any(|t| !t.is_empty()));
        let vocab = build_vocab(tokens.iter().map(|t| t.as_slice()), min_count, &[]).unwrap();
        let charset = Charset::build(tokens.iter().map(|t| t.as_slice()));
        for t in &tokens {
            let e = EncodedTitle::encode(t, &vocab, &charset, 30);
            prop_assert!(e.token_ids.iter().all(|&id| (id as usize) < vocab.len()));
            prop_assert!(e.char_ids.iter().flatten().all(|&id| (id as usize) < charset.len()));
        }
    }
}

fn small_hyper() -> Hyper {
    Hyper {
        word_dim: 5,
        char_dim: 3,
        filter_widths: vec![1, 2],
        maps_per_filter: 2,
        u: 3,
        v: 3,
        d_a: 4,
        r: 2,
        window: 3,
        init_std: 0.5,
        ..Hyper::default()
    }
}

fn corpus(seed: u64, n: usize) -> (Vec<WindowSample>, usize, usize) {
    let raw = keyword_windows(&KeywordConfig {
        samples: n,
        window: 3,
        seed,
        ..Default::default()
    });
    let (vocab, charset) = vocab_for(&raw);
    let samples = encode_windows(&raw, &vocab, &charset, NaiveDate::from_ymd_opt(2015, 1, 1).unwrap());
    (samples, vocab.len(), charset.len())
}

fn is_distribution(row: &[f64]) -> bool {
    row.iter().all(|v| *v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn builds_are_reproducible(seed in any::<u64>(), vocab in 5usize..40, charset in 3usize..20) {
        let a = build_variant(Variant::AtLstm, &small_hyper(), vocab, charset, seed).unwrap();
        let b = build_variant(Variant::AtLstm, &small_hyper(), vocab, charset, seed).unwrap();
        let other = build_variant(Variant::AtLstm, &small_hyper(), vocab, charset, seed.wrapping_add(1)).unwrap();
        prop_assert_eq!(&a.params, &b.params);
        prop_assert_eq!(a.param_count(), other.param_count());
        prop_assert_ne!(&a.params, &other.params);
    }

    #[test]
    fn predictions_are_deterministic_and_traces_normalised(seed in any::<u64>()) {
        let (samples, v, c) = corpus(seed, 6);
        let model = build_variant(Variant::AtLstm, &small_hyper(), v, c, seed).unwrap();
        for s in &samples {
            let (p, trace) = model.predict_traced(s).unwrap();
            let again = model.predict(s).unwrap();
            prop_assert_eq!(p.p_up.to_bits(), again.p_up.to_bits());
            prop_assert!((p.p_up + p.p_down - 1.0).abs() <= 1e-12);
            prop_assert!(trace.day.iter().all(|r| is_distribution(r)));
            for day in &trace.days {
                for w in day.words.iter().flatten() {
                    prop_assert!(w.iter().all(|r| is_distribution(r)));
                }
                if let Some(n) = &day.news {
                    prop_assert!(n.iter().all(|r| is_distribution(r)));
                }
            }
        }
    }

    #[test]
    fn news_attention_follows_title_order(seed in any::<u64>()) {
        let (samples, v, c) = corpus(seed, 8);
        let model = build_variant(Variant::AtLstm, &small_hyper(), v, c, seed).unwrap();
        let sample = samples.iter().find(|s| s.days.iter().any(|d| d.titles.len() >= 2));
        prop_assume!(sample.is_some());
        let mut sample = sample.unwrap().clone();
        let day = sample.days.iter().position(|d| d.titles.len() >= 2).unwrap();
        let (_, before) = model.predict_traced(&sample).unwrap();
        sample.days[day].titles.reverse();
        let (_, after) = model.predict_traced(&sample).unwrap();
        let (b, a) = (before.days[day].news.as_ref().unwrap(), after.days[day].news.as_ref().unwrap());
        for (rb, ra) in b.iter().zip(a) {
            let reversed: Vec<f64> = rb.iter().rev().cloned().collect();
            prop_assert!(reversed.iter().zip(ra).all(|(x, y)| (x - y).abs() <= 1e-12));
        }
    }

    #[test]
    fn evaluation_ignores_sample_order(seed in any::<u64>(), rot in 0usize..10) {
        let (mut samples, v, c) = corpus(seed, 10);
        let model = build_variant(Variant::AtLstm, &small_hyper(), v, c, seed).unwrap();
        let a = evaluate(&model.net, &model.params, &samples).unwrap();
        samples.rotate_left(rot);
        samples.swap(0, 9);
        prop_assert_eq!(a, evaluate(&model.net, &model.params, &samples).unwrap());
    }

    #[test]
    fn checkpoints_preserve_every_bit(seed in any::<u64>(), steps in 0usize..4) {
        let mut model: AtLstmModel = build_variant(Variant::AtLstm, &small_hyper(), 12, 6, seed).unwrap();
        let mut state = AdadeltaState::new(&model.params, AdadeltaConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            let mut g = GradStore::zeros_like(&model.params);
            let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
            for id in ids {
                let n = g.get(id).len();
                g.get_mut(id).copy_from_slice(Tensor::randn(&[n], 1.0, &mut rng).data());
            }
            state.step(&mut model.params, &g).unwrap();
        }
        let bytes = encode_checkpoint(&model, Some(&state), "abc");
        let back = decode_checkpoint(&bytes).unwrap();
        let bits = |p: &ParamStore| -> Vec<u64> { p.iter().flat_map(|(_, x)| x.value.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect() };
        let acc = |s: &AdadeltaState| -> Vec<u64> { s.sq_grad.iter().chain(&s.sq_update).flatten().map(|v| v.to_bits()).collect() };
        prop_assert_eq!(bits(&model.params), bits(&back.model.params));
        let restored = back.optimizer.unwrap();
        prop_assert_eq!(acc(&state), acc(&restored));
        prop_assert_eq!(encode_checkpoint(&back.model, Some(&restored), "abc"), bytes);
    }
}
