use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.5..1.5))
}

fn positive_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(0.5..2.0))
}

/// Builds `sum(w * op(x))` with a fixed random weighting `w`, then compares
/// the tape gradient against central differences of the same expression.
fn check_unary<F>(input: Tensor, build: F)
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>, AutodiffError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let out_shape = {
        let tape = Tape::new();
        let x = tape.leaf(input.clone()).unwrap();
        build(x).unwrap().shape()
    };
    let weights = random_tensor(&mut rng, out_shape[0], out_shape[1]);
    let objective = |t: &Tensor| -> f64 {
        let tape = Tape::new();
        let x = tape.constant(t.clone()).unwrap();
        let y = build(x).unwrap();
        y.value().data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let tape = Tape::new();
    let x = tape.leaf(input.clone()).unwrap();
    let w = tape.constant(weights.clone()).unwrap();
    let loss = build(x).unwrap().mul(w).unwrap().sum_all().unwrap();
    let g = tape.grad(loss, &[x]).unwrap()[0].value();
    let fd = central_difference(objective, &input, 1e-5);
    let err = relative_error(g.data(), fd.data(), 1e-3);
    assert!(err < 1e-6, "relative error {err}: {g:?} vs {fd:?}");
}

#[test]
fn primitive_rules_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_tensor(&mut rng, 3, 4);
    let b = random_tensor(&mut rng, 3, 4);
    let m = random_tensor(&mut rng, 4, 2);
    let pos = positive_tensor(&mut rng, 3, 4);

    let b_arc = Arc::new(b.clone());
    let m_arc = Arc::new(m.clone());
    let pos_arc = Arc::new(pos.clone());

    {
        let b = b_arc.clone();
        check_unary(a.clone(), move |x| {
            let c = x.tape().constant_shared(b.clone())?;
            x.add(c)
        });
    }
    {
        let b = b_arc.clone();
        check_unary(a.clone(), move |x| {
            let c = x.tape().constant_shared(b.clone())?;
            c.sub(x)
        });
    }
    {
        let b = b_arc.clone();
        check_unary(a.clone(), move |x| {
            let c = x.tape().constant_shared(b.clone())?;
            x.mul(c)?.mul(x)
        });
    }
    {
        let p = pos_arc.clone();
        check_unary(a.clone(), move |x| {
            let c = x.tape().constant_shared(p.clone())?;
            x.div(c)
        });
    }
    {
        let b = b_arc.clone();
        check_unary(pos.clone(), move |x| {
            let c = x.tape().constant_shared(b.clone())?;
            c.div(x)
        });
    }
    {
        let m = m_arc.clone();
        check_unary(a.clone(), move |x| {
            let c = x.tape().constant_shared(m.clone())?;
            x.matmul(c)
        });
        let m = m_arc.clone();
        check_unary(random_tensor(&mut rng, 2, 4), move |x| {
            let c = x.tape().constant_shared(m.clone())?;
            c.matmul(x)
        });
    }
    check_unary(a.clone(), |x| x.scale(-2.5)?.add_scalar(0.3));
    check_unary(a.clone(), |x| x.transpose());
    check_unary(a.clone(), |x| x.sum_rows());
    check_unary(a.clone(), |x| x.sum_cols());
    check_unary(random_tensor(&mut rng, 1, 4), |x| x.broadcast_rows(3));
    check_unary(random_tensor(&mut rng, 3, 1), |x| x.broadcast_cols(5));
    check_unary(a.clone(), |x| x.gather(&[2, 0, 0, 1, 2]));
    check_unary(random_tensor(&mut rng, 5, 2), |x| x.segment_sum(&[1, 0, 1, 3, 1], 4));
    check_unary(a.clone(), |x| x.slice_cols(1, 2));
    check_unary(a.clone(), |x| x.pad_cols(2, 7));
    check_unary(a.clone(), |x| {
        let y = x.scale(2.0)?;
        concat_cols(&[x, y, x.slice_cols(0, 1)?])
    });
    check_unary(a.clone(), |x| x.reshape(6, 2));
    check_unary(a.clone(), |x| x.exp());
    check_unary(a.clone(), |x| x.sin());
    check_unary(a.clone(), |x| x.cos());
    check_unary(a.clone(), |x| x.sigmoid());
    check_unary(a.clone(), |x| x.silu());
    check_unary(a.clone(), |x| x.powi(3));
    check_unary(pos.clone(), |x| x.powi(-2));
    check_unary(a.clone(), |x| x.softmax_rows());
    check_unary(a.clone(), |x| x.norm_rows(0.0));
    check_unary(a.clone(), |x| x.safe_norm_rows());
}

/// Second-order check: the gradient of `g(x) = d/dx f(x)` contracted with a
/// weight vector matches finite differences of the first-order tape gradient.
fn check_second_order<F>(input: Tensor, build: F)
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>, AutodiffError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let weights = random_tensor(&mut rng, input.rows(), input.cols());
    let first_order = |t: &Tensor| -> f64 {
        let tape = Tape::new();
        let x = tape.leaf(t.clone()).unwrap();
        let y = build(x).unwrap().sum_all().unwrap();
        let g = tape.grad(y, &[x]).unwrap()[0].value();
        g.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let tape = Tape::new();
    let x = tape.leaf(input.clone()).unwrap();
    let y = build(x).unwrap().sum_all().unwrap();
    let g = tape.grad(y, &[x]).unwrap()[0];
    let w = tape.constant(weights.clone()).unwrap();
    let gw = g.mul(w).unwrap().sum_all().unwrap();
    let h = tape.grad(gw, &[x]).unwrap()[0].value();
    let fd = central_difference(first_order, &input, 1e-4);
    let err = relative_error(h.data(), fd.data(), 1e-2);
    assert!(err < 1e-4, "relative error {err}: {h:?} vs {fd:?}");
}

#[test]
fn second_order_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(&mut rng, 3, 3);
    check_second_order(a.clone(), |x| x.powi(3)?.add(x.mul(x.sin()?)?));
    check_second_order(a.clone(), |x| x.silu()?.mul(x));
    check_second_order(a.clone(), |x| x.softmax_rows()?.mul(x));
    check_second_order(a.clone(), |x| x.safe_norm_rows()?.powi(3));
    check_second_order(a.clone(), |x| x.matmul(x)?.exp()?.sum_rows());
    check_second_order(a.clone(), |x| {
        let g = x.gather(&[0, 2, 2, 1])?.cos()?;
        g.segment_sum(&[1, 1, 0, 2], 3)?.mul(x)
    });
    check_second_order(a.clone(), |x| x.sigmoid()?.div(x.mul(x)?.add_scalar(1.0)?));
}

#[test]
fn worked_examples() {
    let tape = Tape::new();
    let zero = tape.constant(Tensor::scalar(0.0)).unwrap();
    assert_eq!(zero.silu().unwrap().item(), 0.0);

    let row = tape.constant(Tensor::row(&[0.0, 0.0])).unwrap();
    assert_eq!(row.softmax_rows().unwrap().value().data(), &[0.5, 0.5]);

    let vals = tape.constant(Tensor::column(&[1.0, 2.0, 3.0])).unwrap();
    let seg = vals.segment_sum(&[0, 0, 1], 2).unwrap();
    assert_eq!(seg.value().data(), &[3.0, 3.0]);

    let x = tape.leaf(Tensor::scalar(3.0)).unwrap();
    let y = x.mul(x).unwrap();
    assert_eq!(tape.grad(y, &[x]).unwrap()[0].item(), 6.0);

    let x = tape.leaf(Tensor::scalar(2.0)).unwrap();
    let y = x.powi(3).unwrap();
    let dy = tape.grad(y, &[x]).unwrap()[0];
    let d2y = tape.grad(dy, &[x]).unwrap()[0];
    assert_eq!(d2y.item(), 12.0);

    let v = tape.leaf(Tensor::row(&[3.0, 4.0])).unwrap();
    let n = v.safe_norm_rows().unwrap().sum_all().unwrap();
    let g = tape.grad(n, &[v]).unwrap()[0].value();
    assert!((g.data()[0] - 0.6).abs() < 1e-12);
    assert!((g.data()[1] - 0.8).abs() < 1e-12);
}

#[test]
fn safe_norm_of_zero_vector_has_finite_gradient() {
    let tape = Tape::new();
    let v = tape.leaf(Tensor::zeros(2, 3)).unwrap();
    let n = v.safe_norm_rows().unwrap().sum_all().unwrap();
    let g = tape.grad(n, &[v]).unwrap()[0].value();
    assert!(g.is_finite());
    assert_eq!(g.max_abs(), 0.0);
}

#[test]
fn error_surfaces() {
    let tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(2, 3)).unwrap();
    let b = tape.leaf(Tensor::zeros(3, 2)).unwrap();
    assert!(matches!(a.add(b), Err(AutodiffError::ShapeMismatch { .. })));
    assert!(matches!(a.matmul(a), Err(AutodiffError::ShapeMismatch { .. })));
    assert!(matches!(tape.grad(a, &[a]), Err(AutodiffError::NotScalar { .. })));
    let c = tape.constant(Tensor::scalar(-1.0)).unwrap();
    assert!(matches!(c.powi(-1).unwrap().div(tape.scalar(0.0).unwrap()), Err(AutodiffError::NonFinite { .. })));
    assert!(matches!(a.gather(&[5]), Err(AutodiffError::IndexOutOfRange { .. })));

    let other = Tape::new();
    let z = other.leaf(Tensor::scalar(1.0)).unwrap();
    let s = a.sum_all().unwrap();
    assert!(matches!(tape.grad(s, &[z]), Err(AutodiffError::ForeignNode)));
}

#[test]
fn unrelated_inputs_get_zero_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(1.0)).unwrap();
    let unused = tape.leaf(Tensor::zeros(2, 2)).unwrap();
    let y = x.exp().unwrap();
    let g = tape.grad(y, &[unused]).unwrap()[0];
    assert_eq!(g.shape(), [2, 2]);
    assert_eq!(g.value().max_abs(), 0.0);
}

#[test]
fn replay_is_bit_identical_and_tracks_new_leaves() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::row(&[0.3, -0.7, 1.1])).unwrap();
    let y = x.silu().unwrap().softmax_rows().unwrap().safe_norm_rows().unwrap();
    let before = y.value();
    tape.replay().unwrap();
    assert_eq!(*y.value(), *before);

    tape.set_value(x, Tensor::row(&[0.0, 0.0, 0.0])).unwrap();
    tape.replay().unwrap();
    let uniform = (3.0 * (1.0f64 / 3.0).powi(2) + SAFE_NORM_EPS).sqrt();
    assert!((y.item() - uniform).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_rows_sum_to_one(values in proptest::collection::vec(-30.0f64..30.0, 12)) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(3, 4, values).unwrap()).unwrap();
        let s = x.softmax_rows().unwrap().sum_cols().unwrap().value();
        for v in s.data() {
            prop_assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gather_then_segment_sum_is_adjoint(
        values in proptest::collection::vec(-5.0f64..5.0, 8),
        weights in proptest::collection::vec(-5.0f64..5.0, 12),
        idx in proptest::collection::vec(0usize..4, 6),
    ) {
        // <gather(x), w> == <x, segment_sum(w)>
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(4, 2, values).unwrap()).unwrap();
        let w = tape.constant(Tensor::new(6, 2, weights).unwrap()).unwrap();
        let lhs = x.gather(&idx).unwrap().mul(w).unwrap().sum_all().unwrap().item();
        let rhs = x.mul(w.segment_sum(&idx, 4).unwrap()).unwrap().sum_all().unwrap().item();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }
}
