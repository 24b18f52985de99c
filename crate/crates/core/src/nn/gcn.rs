//! Graph convolution over a fixed, symmetrically normalized adjacency.

use super::layers::{relu, relu_backward};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// `D^{-1/2} (A + I) D^{-1/2}` where `D` is the degree matrix of `A + I`.
pub fn normalized_adjacency(adjacency: &Matrix) -> Result<Matrix> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(Error::structural(format!("adjacency is {}x{}", n, adjacency.cols())));
    }
    if !adjacency.is_symmetric() {
        return Err(Error::structural("adjacency is not symmetric"));
    }
    if (0..n).any(|i| adjacency[(i, i)] != 0.0) {
        return Err(Error::structural("adjacency has self loops"));
    }
    let mut a_hat = adjacency.clone();
    for i in 0..n {
        a_hat[(i, i)] = 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a_hat.row(i).iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            if a_hat[(i, j)] != 0.0 {
                a_hat[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    Ok(a_hat)
}

/// Per-layer intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    /// `A_hat * H^(l)` for each layer.
    aggregated: Vec<Matrix>,
    /// Pre-activations `A_hat * H^(l) * W^(l)`.
    pre: Vec<Matrix>,
}

pub struct GcnGrads {
    pub weights: Vec<Matrix>,
    pub input: Matrix,
}

/// `H^(l+1) = relu(A_hat * H^(l) * W^(l))` for every layer in turn.
pub fn gcn_forward(weights: &[&Matrix], norm_adj: &Matrix, x: &Matrix) -> Result<(Matrix, GcnCache)> {
    let mut cache = GcnCache {
        aggregated: Vec::with_capacity(weights.len()),
        pre: Vec::with_capacity(weights.len()),
    };
    let mut h = x.clone();
    for w in weights {
        // Aggregating first keeps the product cheap: A_hat is sparse and
        // the input width is usually smaller than the hidden width.
        let agg = norm_adj.matmul(&h)?;
        let pre = agg.matmul(w)?;
        h = relu(&pre);
        cache.aggregated.push(agg);
        cache.pre.push(pre);
    }
    Ok((h, cache))
}

pub fn gcn_backward(weights: &[&Matrix], norm_adj: &Matrix, cache: &GcnCache, upstream: &Matrix) -> Result<GcnGrads> {
    if cache.pre.len() != weights.len() {
        return Err(Error::structural("cache does not match layer count"));
    }
    let mut grads = vec![Matrix::zeros(0, 0); weights.len()];
    let mut up = upstream.clone();
    for l in (0..weights.len()).rev() {
        let d_pre = relu_backward(&cache.pre[l], &up);
        grads[l] = cache.aggregated[l].t_matmul(&d_pre)?;
        let d_agg = d_pre.matmul_t(weights[l])?;
        up = norm_adj.t_matmul(&d_agg)?;
    }
    Ok(GcnGrads { weights: grads, input: up })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_slice;
    use crate::nn::layers::glorot_uniform;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, p: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p) {
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                }
            }
        }
        a
    }

    fn spectral_radius(m: &Matrix) -> f64 {
        let n = m.rows();
        let mut v = Matrix::from_vec(n, 1, (0..n).map(|i| 1.0 + 0.1 * i as f64).collect()).unwrap();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = m.matmul(&v).unwrap();
            let norm = w.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm / v.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.map(|x| x / norm);
        }
        lambda
    }

    #[test]
    fn isolated_node_and_pair() {
        let one = normalized_adjacency(&Matrix::zeros(1, 1)).unwrap();
        assert_eq!(one.as_slice(), &[1.0]);
        let pair = normalized_adjacency(&Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap()).unwrap();
        assert!(pair.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn regular_graph_rows_sum_to_one() {
        // 5-cycle is 2-regular.
        let mut a = Matrix::zeros(5, 5);
        for i in 0..5 {
            a[(i, (i + 1) % 5)] = 1.0;
            a[((i + 1) % 5, i)] = 1.0;
        }
        let n = normalized_adjacency(&a).unwrap();
        for i in 0..5 {
            assert!((n.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_adjacency() {
        let asym = Matrix::from_vec(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(normalized_adjacency(&asym), Err(Error::Structural(_))));
        assert!(normalized_adjacency(&Matrix::zeros(2, 3)).is_err());
        assert!(normalized_adjacency(&Matrix::identity(2)).is_err());
    }

    #[test]
    fn trivial_forward_cases() {
        let x = Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let adj = normalized_adjacency(&Matrix::zeros(1, 1)).unwrap();
        let id = Matrix::identity(3);
        let (h, _) = gcn_forward(&[&id], &adj, &x).unwrap();
        assert_eq!(h.as_slice(), &[1.0, 0.0, 0.5]);
        let zero = Matrix::zeros(3, 4);
        let (h, _) = gcn_forward(&[&zero], &adj, &x).unwrap();
        assert!(h.as_slice().iter().all(|v| *v == 0.0));
        assert!(gcn_forward(&[&Matrix::zeros(2, 2)], &adj, &x).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let adj = normalized_adjacency(&random_graph(5, 0.5, seed)).unwrap();
            let x = glorot_uniform(5, 4, &mut rng);
            let w0 = glorot_uniform(4, 6, &mut rng);
            let w1 = glorot_uniform(6, 3, &mut rng);
            let coef = glorot_uniform(5, 3, &mut rng);
            let loss = |x: &Matrix, w0: &Matrix, w1: &Matrix| -> f64 {
                let (h, _) = gcn_forward(&[w0, w1], &adj, x).unwrap();
                h.as_slice().iter().zip(coef.as_slice()).map(|(a, c)| a * c).sum()
            };
            let (_, cache) = gcn_forward(&[&w0, &w1], &adj, &x).unwrap();
            let g = gcn_backward(&[&w0, &w1], &adj, &cache, &coef).unwrap();
            let e0 = check_slice(w0.as_slice(), g.weights[0].as_slice(), |v| loss(&x, &Matrix::from_vec(4, 6, v.to_vec()).unwrap(), &w1), 1e-6);
            let e1 = check_slice(w1.as_slice(), g.weights[1].as_slice(), |v| loss(&x, &w0, &Matrix::from_vec(6, 3, v.to_vec()).unwrap()), 1e-6);
            let ex = check_slice(x.as_slice(), g.input.as_slice(), |v| loss(&Matrix::from_vec(5, 4, v.to_vec()).unwrap(), &w0, &w1), 1e-6);
            assert!(e0.max(e1).max(ex) < 1e-4, "seed {seed}: {e0} {e1} {ex}");
        }
    }

    proptest! {
        #[test]
        fn normalized_adjacency_is_symmetric_and_contractive(n in 1usize..9, p in 0.0f64..1.0, seed in 0u64..1000) {
            let norm = normalized_adjacency(&random_graph(n, p, seed)).unwrap();
            prop_assert!(norm.is_symmetric());
            prop_assert!(spectral_radius(&norm) <= 1.0 + 1e-9);
        }
    }
}
