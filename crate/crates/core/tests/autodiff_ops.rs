use proptest::prelude::*;
use tbsm::autodiff::{grad_check, Function, Tape, Tensor, Var, DEFAULT_STEP};
use tbsm::Result;

const TOL: f64 = 1e-5;

/// Fixed, non-uniform weights so the scalar reduction does not hide errors
/// behind symmetric gradients.
fn weights(n: usize) -> Tensor {
    Tensor::vector(
        (0..n)
            .map(|i| 0.3 + 0.7 * ((i * 37 % 11) as f64 / 11.0) - 0.5 * (i % 2) as f64)
            .collect(),
    )
}

fn weighted_sum(tape: &mut Tape<'_>, y: Var) -> Result<Var> {
    let n = tape.value(y).len();
    let flat = tape.reshape(y, &[n])?;
    let w = tape.constant(weights(n));
    tape.dot(flat, w)
}

fn vec_strategy(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    len.prop_flat_map(|n| prop::collection::vec(-2.0f64..2.0, n))
}

/// Keeps every coordinate at least `gap` away from each kink in `kinks`.
fn away_from(v: Vec<f64>, kinks: &[f64], gap: f64) -> Vec<f64> {
    v.into_iter()
        .map(|x| {
            let mut x = x;
            for &k in kinks {
                if (x - k).abs() < gap {
                    x = k + gap.copysign(x - k + f64::MIN_POSITIVE);
                }
            }
            x
        })
        .collect()
}

fn check_unary(x: Vec<f64>, op: impl Fn(&mut Tape<'_>, Var) -> Result<Var>) -> f64 {
    let x = Tensor::vector(x);
    let r = grad_check(
        |t, v| {
            let y = op(t, v)?;
            weighted_sum(t, y)
        },
        &x,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(r.non_finite.is_none());
    r.max_rel_error
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn elementwise_ops(x in vec_strategy(1..=12)) {
        prop_assert!(check_unary(x.clone(), |t, v| Ok(t.sigmoid(v))) <= TOL);
        prop_assert!(check_unary(x.clone(), |t, v| Ok(t.tanh(v))) <= TOL);
        prop_assert!(check_unary(x.clone(), |t, v| Ok(t.scale(v, -1.7))) <= TOL);
        prop_assert!(check_unary(x.clone(), |t, v| Ok(t.neg(v))) <= TOL);
        prop_assert!(check_unary(x.clone(), |t, v| t.mul(v, v)) <= TOL);
        prop_assert!(check_unary(away_from(x.clone(), &[0.0], 1e-3), |t, v| Ok(t.relu(v))) <= TOL);
        prop_assert!(check_unary(away_from(x.clone(), &[-0.5, 0.5], 1e-3), |t, v| Ok(t.clamp(v, -0.5, 0.5))) <= TOL);
        let pos: Vec<f64> = x.iter().map(|v| v.abs() + 0.1).collect();
        prop_assert!(check_unary(pos, |t, v| t.log(v)) <= TOL);
    }

    #[test]
    fn binary_ops(x in vec_strategy(2..=12)) {
        let n = x.len();
        let other = Tensor::vector((0..n).map(|i| (i as f64 * 0.37).sin() + 0.2).collect());
        for op in 0..4 {
            let e = check_unary(x.clone(), |t, v| {
                let c = t.constant(other.clone());
                match op {
                    0 => t.add(v, c),
                    1 => t.sub(c, v),
                    2 => t.mul(c, v),
                    _ => {
                        let d = t.dot(v, c)?;
                        t.mul(d, d)
                    }
                }
            });
            prop_assert!(e <= TOL, "op {op}: {e}");
        }
    }

    #[test]
    fn reductions_and_normalizers(x in vec_strategy(2..=15)) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-2);
        prop_assert!(check_unary(x.clone(), |t, v| t.l2_normalize(v)) <= TOL);
        prop_assert!(check_unary(x.clone(), |t, v| t.softmax(v)) <= TOL);
        let e = check_unary(x.clone(), |t, v| {
            let s = t.sum(v);
            t.mul(s, s)
        });
        prop_assert!(e <= TOL, "{e}");
    }

    #[test]
    fn structural_ops(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        let data: Vec<f64> = (0..rows * cols).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64 / 250.0) - 2.0).collect();
        let b = Tensor::matrix(cols, 3, (0..cols * 3).map(|i| (i as f64).cos()).collect()).unwrap();
        let shape = [rows, cols];
        let as_matrix = |t: &mut Tape<'_>, v: Var| t.reshape(v, &shape);
        let errs = [
            check_unary(data.clone(), |t, v| {
                let m = as_matrix(t, v)?;
                t.transpose(m)
            }),
            check_unary(data.clone(), |t, v| {
                let m = as_matrix(t, v)?;
                let c = t.constant(b.clone());
                t.matmul(m, c)
            }),
            check_unary(data.clone(), |t, v| {
                let m = as_matrix(t, v)?;
                let s = t.slice(m, 1, cols - 1, 1)?;
                t.concat(&[m, s], 1)
            }),
            check_unary(data.clone(), |t, v| {
                let m = as_matrix(t, v)?;
                let c = t.column(m, 0)?;
                t.stack_columns(&[c, c])
            }),
        ];
        prop_assert!(errs.iter().all(|e| *e <= TOL), "{errs:?}");
    }

    #[test]
    fn l2_normalize_has_unit_norm(x in vec_strategy(1..=32)) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-6);
        let mut t = Tape::new();
        let v = t.leaf(Tensor::vector(x));
        let y = t.l2_normalize(v).unwrap();
        prop_assert!((t.value(y).norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn backward_is_bit_identical(x in vec_strategy(1..=10)) {
        let run = || {
            let mut t = Tape::new();
            let v = t.leaf(Tensor::vector(x.clone()).with_grad());
            let s = t.sigmoid(v);
            let n = t.l2_normalize(s).unwrap();
            let y = weighted_sum(&mut t, n).unwrap();
            t.backward(y).unwrap().get(v).unwrap().clone()
        };
        let (a, b) = (run(), run());
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn gradients_accumulate(x in vec_strategy(1..=10)) {
        let grad = |which: u8| {
            let mut t = Tape::new();
            let v = t.leaf(Tensor::vector(x.clone()).with_grad());
            let f = { let s = t.sigmoid(v); weighted_sum(&mut t, s).unwrap() };
            let g = { let q = t.mul(v, v).unwrap(); t.sum(q) };
            let y = match which {
                0 => f,
                1 => g,
                _ => t.add(f, g).unwrap(),
            };
            t.backward(y).unwrap().get(v).unwrap().clone()
        };
        let (f, g, both) = (grad(0), grad(1), grad(2));
        for i in 0..x.len() {
            prop_assert!((both.data()[i] - f.data()[i] - g.data()[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn sum_is_checked_to_roundoff() {
    // Central differences of a sum carry roundoff of about ulp(|sum|) / 2h.
    for x in [
        vec![0.3, -0.2, 0.1, 0.25],
        vec![0.5],
        vec![-0.7, 0.6, -0.05],
    ] {
        let r = grad_check(|t, v| Ok(t.sum(v)), &Tensor::vector(x), DEFAULT_STEP).unwrap();
        assert!(r.max_rel_error <= 1e-10, "{}", r.max_rel_error);
    }
}

#[test]
fn sigmoid_of_matmul() {
    let w = Tensor::matrix(
        3,
        4,
        (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect(),
    )
    .unwrap();
    let x = Tensor::vector(vec![0.4, -0.9, 1.3, 0.2]);
    let r = grad_check(
        |t, v| {
            let wv = t.constant(w.clone());
            let y = t.matmul(wv, v)?;
            let s = t.sigmoid(y);
            Ok(t.sum(s))
        },
        &x,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(r.max_rel_error <= 1e-6, "{}", r.max_rel_error);
}

#[test]
fn normalize_random_fifteen_vector() {
    let x = Tensor::vector(
        (0..15)
            .map(|i| ((i * 13 % 7) as f64 - 3.0) / 2.0 + 0.1)
            .collect(),
    );
    let r = grad_check(
        |t, v| {
            let y = t.l2_normalize(v)?;
            weighted_sum(t, y)
        },
        &x,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(r.max_rel_error <= 1e-6, "{}", r.max_rel_error);
}

/// `x²` whose backward forgets the factor 2.
struct WrongSquare;

impl Function for WrongSquare {
    fn name(&self) -> &'static str {
        "wrong_square"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let d = inputs[0].data().iter().map(|x| x * x).collect();
        Tensor::new(inputs[0].shape().to_vec(), d)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Vec<f64>> {
        vec![inputs[0]
            .data()
            .iter()
            .zip(grad)
            .map(|(x, g)| x * g)
            .collect()]
    }
}

/// `x` whose backward produces NaN at index 2.
struct NanAtTwo;

impl Function for NanAtTwo {
    fn name(&self) -> &'static str {
        "nan_at_two"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(inputs[0].clone())
    }

    fn backward(&self, _inputs: &[&Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Vec<f64>> {
        vec![grad
            .iter()
            .enumerate()
            .map(|(i, g)| if i == 2 { f64::NAN } else { *g })
            .collect()]
    }
}

#[test]
fn wrong_backward_is_caught() {
    let x = Tensor::vector(vec![0.5, -1.5, 2.0]);
    let r = grad_check(
        |t, v| {
            let y = t.apply(Box::new(WrongSquare), &[v])?;
            Ok(t.sum(y))
        },
        &x,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(r.max_rel_error > 1e-2);
    assert!(!r.passed(1e-2));
}

#[test]
fn non_finite_gradient_is_reported_with_index() {
    let x = Tensor::vector(vec![0.5, -1.5, 2.0, 1.0]);
    let r = grad_check(
        |t, v| {
            let y = t.apply(Box::new(NanAtTwo), &[v])?;
            Ok(t.sum(y))
        },
        &x,
        DEFAULT_STEP,
    )
    .unwrap();
    assert_eq!(r.non_finite, Some(2));
    assert!(!r.passed(1.0));
}
