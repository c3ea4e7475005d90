use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tbsm::autodiff::Tensor;
use tbsm::model::MhaHead;
use tbsm::params::{Graph, ParamSet};
use tbsm::tsl::{similarity, sphere_distance, SeqView, SimilarityKind, Tsl};

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, normal_vec(rng, rows * cols)).unwrap()
}

#[test]
fn gensim_of_a_vector_with_itself_is_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=20);
        let a = normal_matrix(&mut rng, n, n);
        let v = normal_vec(&mut rng, n);
        let s = similarity(SimilarityKind::Gen, Some(&a), &v, &v).unwrap();
        assert!(s >= 0.0, "{s}");
    }
}

#[test]
fn gensim_with_identity_is_cosine() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let (u, v) = (normal_vec(&mut rng, n), normal_vec(&mut rng, n));
        let eye = Tensor::identity(n);
        let gen = similarity(SimilarityKind::Gen, Some(&eye), &u, &v).unwrap();
        let cos = similarity(SimilarityKind::Cos, None, &u, &v).unwrap();
        assert_eq!(gen.to_bits(), cos.to_bits());
        assert!((-1.0..=1.0).contains(&cos));
    }
}

#[test]
fn gensim_layer_with_identity_matches_cosine_layer() {
    let (n, len) = (6, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ParamSet::new();
    let gen = Tsl::new(&mut params, "gen", SimilarityKind::Gen, n, len, &mut rng).unwrap();
    let cos = Tsl::new(&mut params, "cos", SimilarityKind::Cos, n, len, &mut rng).unwrap();
    *params.get_mut(gen.matrix.unwrap()) = Tensor::identity(n);
    let z = normal_matrix(&mut rng, n, len);
    let last = Tensor::vector(normal_vec(&mut rng, n));
    let mut g = Graph::new(&params, false);
    let mut view = SeqView::from_values(&mut g, &z, &last).unwrap();
    let a = gen.similarities(&mut g, &mut view).unwrap();
    let b = cos.similarities(&mut g, &mut view).unwrap();
    assert_eq!(g.value(a), g.value(b));
}

#[test]
fn sphere_distance_boundaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let n = rng.random_range(2..=20);
        let w = unit(normal_vec(&mut rng, n));
        let v = unit(normal_vec(&mut rng, n));
        let minus: Vec<f64> = w.iter().map(|x| -x).collect();
        assert!(sphere_distance(&w, &w).abs() <= 1e-12);
        assert!((sphere_distance(&w, &minus) - 1.0).abs() <= 1e-12);
        let d = sphere_distance(&w, &v);
        assert!((0.0..=1.0).contains(&d));
        assert!((d - sphere_distance(&v, &w)).abs() <= 1e-15);
    }
    for n in 2..=10 {
        let mut e1 = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        e1[0] = 1.0;
        e2[1] = 1.0;
        assert!((sphere_distance(&e1, &e2) - 0.5).abs() <= 1e-12);
    }
}

#[test]
fn attention_weights_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..50 {
        let (n, len) = (rng.random_range(2..=16), rng.random_range(1..=30));
        let mut params = ParamSet::new();
        let head = MhaHead::new(&mut params, "mha", n, 8, 2, &mut rng).unwrap();
        let scale = if trial % 2 == 0 { 1.0 } else { 10.0 };
        let z = normal_matrix(&mut rng, n, len);
        let z = Tensor::matrix(n, len, z.data().iter().map(|x| x * scale).collect()).unwrap();
        let last = Tensor::vector(normal_vec(&mut rng, n));
        let mut g = Graph::new(&params, false);
        let mut view = SeqView::from_values(&mut g, &z, &last).unwrap();
        let (_, weights) = head.forward(&mut g, &mut view).unwrap();
        assert_eq!(weights.len(), 8);
        for w in weights {
            let w = g.value(w);
            assert_eq!(w.len(), len);
            assert!(w.data().iter().all(|x| *x >= 0.0));
            assert!((w.data().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
