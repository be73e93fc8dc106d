use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
    )
    .unwrap()
}

/// Reduces any output to a scalar with fixed random weights so every output
/// coordinate contributes to the checked gradient.
fn project<'t>(v: Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, &v.shape());
    v.mul(v.tape().constant(w))?.sum()
}

fn check_op<F>(name: &str, shapes: &[&[usize]], f: F)
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    for point in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + point);
        let params: Vec<_> = shapes.iter().map(|s| random(&mut rng, s)).collect();
        let report =
            grad_check_with_floor(|t, v| project(f(t, v)?, 77 + point), &params, 1e-5, 1e-3)
                .unwrap();
        assert!(
            report.max_rel_error < 1e-6,
            "{name} at point {point}: {report:?}"
        );
    }
}

#[test]
fn every_op_passes_grad_check() {
    check_op("matmul", &[&[3, 4], &[4, 2]], |_, v| v[0].matmul(v[1]));
    check_op("transpose", &[&[3, 4]], |_, v| v[0].transpose());
    check_op("add", &[&[2, 3], &[2, 3]], |_, v| v[0].add(v[1]));
    check_op("sub", &[&[2, 3], &[2, 3]], |_, v| v[0].sub(v[1]));
    check_op("mul", &[&[2, 3], &[2, 3]], |_, v| v[0].mul(v[1]));
    check_op("add_row", &[&[4, 3], &[3]], |_, v| v[0].add_row(v[1]));
    check_op("scale", &[&[2, 3]], |_, v| v[0].scale(-0.7));
    check_op("concat_cols", &[&[3, 2], &[3, 1], &[3, 4]], |_, v| {
        Var::concat_cols(&[v[0], v[1], v[2]])
    });
    check_op("concat_rows", &[&[2, 3], &[1, 3]], |_, v| {
        Var::concat_rows(&[v[0], v[1]])
    });
    check_op("gather_rows", &[&[4, 3]], |_, v| {
        v[0].gather_rows(&[3, 0, 3, 1, 1])
    });
    check_op("scatter_add_rows", &[&[5, 2]], |_, v| {
        v[0].scatter_add_rows(&[0, 2, 2, 1, 0], 4)
    });
    check_op("scale_rows", &[&[3, 2]], |_, v| {
        v[0].scale_rows(&[0.5, -2.0, 3.0])
    });
    check_op("segment_mean", &[&[5, 3]], |_, v| {
        v[0].segment_mean(&[0, 1, 1, 0, 1], 2)
    });
    check_op("silu", &[&[3, 3]], |_, v| v[0].silu());
    check_op("sigmoid", &[&[3, 3]], |_, v| v[0].sigmoid());
    check_op("exp", &[&[3, 3]], |_, v| v[0].exp());
    check_op("log", &[&[3, 3]], |_, v| v[0].exp()?.ln());
    check_op("softmax_rows", &[&[3, 5]], |_, v| v[0].softmax_rows());
    check_op("l2_normalize_rows", &[&[4, 3]], |_, v| {
        v[0].l2_normalize_rows(1e-12)
    });
    check_op("bilinear", &[&[3, 4], &[4, 6, 4], &[3, 4], &[6]], |_, v| {
        v[0].bilinear(v[1], v[2], v[3])
    });
    check_op("cross_entropy", &[&[4, 5]], |_, v| {
        v[0].cross_entropy(&[0, 4, 2, 2], &[1.0, 0.1, 2.0, 1.0], None)
    });
    check_op("cross_entropy_excluded", &[&[4, 4]], |_, v| {
        let ex = [Some(0), Some(1), Some(2), Some(3)];
        v[0].cross_entropy(&[1, 0, 3, 2], &[1.0; 4], Some(&ex))
    });
    check_op("sum", &[&[2, 3]], |_, v| v[0].sum());
    check_op("mean", &[&[2, 3]], |_, v| v[0].mean());
}

#[test]
fn abs_gradient_away_from_kink() {
    let x = Tensor::vector(vec![0.5, -0.25, 2.0]);
    let r = grad_check(|_, v| v[0].abs()?.sum(), &[x], 1e-5).unwrap();
    assert!(r.max_rel_error < 1e-9);
}

#[test]
fn half_squared_norm_gradient_is_x() {
    let x = Tensor::vector(vec![1.0, -2.0, 0.5]);
    let tape = Tape::new();
    let v = tape.param(x.clone());
    let loss = v.mul(v).unwrap().sum().unwrap().scale(0.5).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(v), x);
}

#[test]
fn constant_loss_has_zero_gradient() {
    let tape = Tape::new();
    let p = tape.param(Tensor::<f64>::vector(vec![1.0, 2.0]));
    let c = tape.constant(Tensor::scalar(3.0));
    let loss = c.scale(2.0).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(p), Tensor::zeros(&[2]));
}

#[test]
fn fan_out_accumulates() {
    // y = x*x + 3x  =>  dy/dx = 2x + 3
    let tape = Tape::new();
    let x = tape.param(Tensor::<f64>::scalar(2.0));
    let y = x.mul(x).unwrap().add(x.scale(3.0).unwrap()).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).item().unwrap(), 7.0);
}

#[test]
fn non_finite_trips_error() {
    let tape = Tape::new();
    let x = tape.param(Tensor::<f64>::scalar(0.0));
    assert!(matches!(x.ln(), Err(crate::Error::Numerics(_))));
    let y = tape.param(Tensor::<f64>::scalar(1000.0));
    assert!(y.exp().is_err());
}

#[test]
fn softmax_extreme_inputs_stay_finite() {
    let t = Tensor::<f64>::from_rows(&[vec![1e6, -1e6, 0.0], vec![-1e6, -1e6, -1e6]]).unwrap();
    let s = t.softmax_rows().unwrap();
    assert!(s.is_finite());
    for r in 0..2 {
        assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn backward_requires_scalar() {
    let tape = Tape::new();
    let x = tape.param(Tensor::<f64>::zeros(&[2]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn shape_mismatch_is_shape_error() {
    let tape = Tape::new();
    let a = tape.param(Tensor::<f64>::zeros(&[2, 3]));
    let b = tape.param(Tensor::<f64>::zeros(&[2, 3]));
    assert!(matches!(a.matmul(b), Err(crate::Error::Shape(_))));
}

#[test]
fn runs_in_single_precision() {
    let tape = Tape::<f32>::new();
    let x = tape.param(Tensor::vector(vec![1.0f32, 2.0]));
    let loss = x.mul(x).unwrap().sum().unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).data(), &[2.0f32, 4.0]);
}

mod props {
    use proptest::prelude::*;

    use super::super::Tensor;

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(row in proptest::collection::vec(-1e6f64..1e6, 1..12)) {
            let n = row.len();
            let t = Tensor::matrix(1, n, row).unwrap();
            let s = t.softmax_rows().unwrap();
            prop_assert!(s.data().iter().all(|&p| p.is_finite() && p >= 0.0));
            prop_assert!((s.sum() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normalized_rows_are_unit(row in proptest::collection::vec(-100f64..100.0, 1..8)) {
            let n = row.len();
            let t = Tensor::matrix(1, n, row).unwrap();
            prop_assume!(t.norm() > 1e-6);
            let u = t.l2_normalize_rows(1e-12).unwrap();
            prop_assert!((u.norm() - 1.0).abs() < 1e-9);
        }
    }
}
