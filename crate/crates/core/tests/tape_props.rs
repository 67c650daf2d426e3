use std::rc::Rc;

use proptest::prelude::*;
use rrn_core::gradcheck::gradient_check;
use rrn_core::nn::{Bound, ParamKind, ParamSet};
use rrn_core::{Result, Tape, Tensor, Var};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::new([rows, cols], d).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=8, 1usize..=8, 1usize..=8)
}

/// Checks `loss = sum(op(a, b) * probe)` so that every output element
/// carries a distinct weight.
fn check<F>(a: Tensor, b: Tensor, out_len: usize, op: F)
where
    F: Fn(&mut Tape, Var, Var) -> Result<Var>,
{
    let mut ps = ParamSet::new();
    let ia = ps.add("a", ParamKind::Weight, a).unwrap();
    let ib = ps.add("b", ParamKind::Weight, b).unwrap();
    let probe: Vec<f64> = (0..out_len).map(|i| 0.3 + 0.17 * (i % 7) as f64).collect();
    let report = gradient_check(
        &mut ps,
        |tape: &mut Tape, bound: &Bound| {
            let y = op(tape, bound.var(ia), bound.var(ib))?;
            let shape = tape.shape(y).to_vec();
            let p = tape.constant(shape, probe.clone())?;
            let w = tape.mul(y, p)?;
            Ok(tape.sum(w))
        },
        1e-4,
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_gradient((m, k, n) in dims(), seed in any::<u64>()) {
        let a = Tensor::from_fn([m, k], |i| ((i as u64 ^ seed) % 17) as f64 / 8.0 - 1.0);
        let b = Tensor::from_fn([k, n], |i| ((i as u64 + seed) % 13) as f64 / 6.0 - 1.0);
        check(a, b, m * n, |t, a, b| t.matmul(a, b));
    }

    #[test]
    fn elementwise_gradients(a in (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c)))) {
        let (a, b) = a;
        let n = a.numel();
        check(a.clone(), b.clone(), n, |t, a, b| t.add(a, b));
        check(a.clone(), b.clone(), n, |t, a, b| t.mul(a, b));
        check(a.clone(), b.clone(), n, |t, a, _| Ok(t.sigmoid(a)));
        check(a.clone(), b.clone(), n, |t, a, _| Ok(t.tanh(a)));
        check(a.clone(), b.clone(), n, |t, a, _| Ok(t.scale(a, -1.7)));
        check(a, b, n, |t, a, _| Ok(t.relu(a)));
    }

    #[test]
    fn bias_concat_slice_gradients((r, c) in (1usize..=8, 1usize..=8), seed in any::<u32>()) {
        let a = Tensor::from_fn([r, c], |i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f64 / u32::MAX as f64 - 0.5);
        let bias = Tensor::from_fn([c], |i| i as f64 * 0.1 - 0.2);
        check(a.clone(), bias, r * c, |t, a, b| t.add_bias(a, b));
        let other = Tensor::from_fn([r, 3], |i| i as f64 * 0.05);
        check(a.clone(), other, r * (c + 3), |t, a, b| t.concat(&[a, b, a]).and_then(|x| t.slice_cols(x, 0, c + 3)));
        let start = c / 2;
        check(a.clone(), Tensor::scalar(0.0), r * (c - start), move |t, a, _| t.slice_cols(a, start, c - start));
    }

    #[test]
    fn gather_segment_gradients((r, c) in (1usize..=8, 1usize..=8), idx in prop::collection::vec(0usize..64, 1..12)) {
        let a = Tensor::from_fn([r, c], |i| (i as f64).sin());
        let index: Rc<[usize]> = idx.iter().map(|i| i % r).collect();
        let n = index.len();
        let gi = index.clone();
        check(a.clone(), Tensor::scalar(0.0), n * c, move |t, a, _| t.gather_rows(a, gi.clone()));
        let segments = 3;
        let seg: Rc<[usize]> = (0..r).map(|i| (i * 7) % segments).collect();
        check(a, Tensor::scalar(0.0), segments * c, move |t, a, _| t.segment_sum(a, seg.clone(), segments));
    }

    #[test]
    fn cross_entropy_gradient_and_sign((r, c) in (1usize..=8, 2usize..=8), logits in prop::collection::vec(-5.0f64..5.0, 64)) {
        let a = Tensor::new([r, c], logits[..r * c].to_vec()).unwrap();
        let targets: Rc<[usize]> = (0..r).map(|i| (i * 5) % c).collect();
        let weights: Rc<[f64]> = (0..r).map(|i| 0.5 + i as f64 * 0.25).collect();
        let (tg, w) = (targets.clone(), weights.clone());
        check(a.clone(), Tensor::scalar(0.0), 1, move |t, a, _| t.weighted_cross_entropy(a, tg.clone(), w.clone()));

        let mut tape = Tape::new();
        let x = tape.leaf(&a);
        let loss = tape.softmax_cross_entropy(x, &targets).unwrap();
        prop_assert!(tape.scalar(loss) >= 0.0);

        let probs = rrn_core::rrn::probabilities(&tape, x);
        for row in probs.chunks(c) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        let mut reference = 0.0;
        for (i, row) in a.data().chunks(c).enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = rrn_core::math::CompensatedSum::default();
            for v in row {
                s.add((v - max).exp());
            }
            reference += max + s.value().ln() - row[targets[i]];
        }
        prop_assert!((tape.scalar(loss) - reference).abs() <= 1e-12 * reference.abs().max(1.0));
    }

    #[test]
    fn backward_replay_is_idempotent((r, c) in (1usize..=6, 1usize..=6)) {
        let a = Tensor::from_fn([r, c], |i| (i as f64 * 0.37).cos());
        let mut ps = ParamSet::new();
        let id = ps.add("a", ParamKind::Weight, a).unwrap();
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let h = tape.tanh(b.var(id));
        let sq = tape.mul(h, h).unwrap();
        let loss = tape.sum(sq);
        let g1 = tape.backward(loss).unwrap();
        ps.accumulate_grads(&b, &g1).unwrap();
        let first = ps.get(id).tensor.grad().unwrap().to_vec();
        ps.clear_grads();
        let g2 = tape.backward(loss).unwrap();
        ps.accumulate_grads(&b, &g2).unwrap();
        prop_assert_eq!(first, ps.get(id).tensor.grad().unwrap().to_vec());
    }

    #[test]
    fn forward_is_deterministic_given_seed(seed in any::<u64>()) {
        let x = Tensor::from_fn([4, 5], |i| i as f64);
        let run = || {
            let mut tape = Tape::training(seed);
            let v = tape.leaf(&x);
            let d = tape.dropout(v, 0.5).unwrap();
            tape.value(d).to_vec()
        };
        prop_assert_eq!(run(), run());
    }
}
