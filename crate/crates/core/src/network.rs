//! Two-layer network trained by one large first-layer step followed by a
//! ridge fit of the second layer.
//!
//! ```text
//! f(x; W, a) = (1/sqrt(m)) sum_j a_j sigma(<w_j, x>)
//! ```

use nalgebra::{DMatrix, DVector};

use crate::covariance::dot;
use crate::error::{check_dim, Error, Result};
use crate::kernels::Activation;
use crate::linalg::{cholesky_in_place, cholesky_solve_in_place, op_norm_power};
use crate::link::LinkFunction;
use crate::rng::SeededStream;

#[derive(Debug, Clone, PartialEq)]
pub struct SingleIndexDataset {
    /// One sample per row.
    pub inputs: DMatrix<f64>,
    pub labels: Vec<f64>,
    pub direction: Vec<f64>,
    pub noise_var: f64,
}

impl SingleIndexDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }
}

/// Draws `x_i ~ N(0, I_d)` and `y_i = link(<w_star, x_i>) + eps_i`.
pub fn sample_dataset(
    link: &LinkFunction,
    w_star: &[f64],
    n: usize,
    noise_var: f64,
    rng: &mut SeededStream,
) -> Result<SingleIndexDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "dataset needs at least one sample".into(),
        ));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance {noise_var} is negative"
        )));
    }
    let norm = dot(w_star, w_star).sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "direction has norm {norm}, expected 1"
        )));
    }
    let d = w_star.len();
    let noise_sd = noise_var.sqrt();
    let mut inputs = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut row = vec![0.0; d];
    for i in 0..n {
        rng.fill_standard_normal(&mut row);
        let mut y = link.eval(dot(w_star, &row));
        if noise_sd > 0.0 {
            y += noise_sd * rng.standard_normal();
        }
        labels.push(y);
        for (j, v) in row.iter().enumerate() {
            inputs[(i, j)] = *v;
        }
    }
    Ok(SingleIndexDataset {
        inputs,
        labels,
        direction: w_star.to_vec(),
        noise_var,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    /// `d x m`, one neuron per column.
    pub first_layer: DMatrix<f64>,
    pub second_layer: Vec<f64>,
    pub activation: Activation,
}

/// `w_j ~ N(0, I/d)`, `a ~ N(0, I/m)`.
pub fn init_network(
    d: usize,
    m: usize,
    activation: Activation,
    rng: &mut SeededStream,
) -> Result<TwoLayerNet> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "network shape {d} x {m} is empty"
        )));
    }
    let w_sd = (d as f64).sqrt().recip();
    let a_sd = (m as f64).sqrt().recip();
    let mut w = DMatrix::zeros(d, m);
    rng.fill_standard_normal(w.as_mut_slice());
    w *= w_sd;
    let a = rng
        .standard_normal_vec(m)
        .into_iter()
        .map(|v| v * a_sd)
        .collect();
    Ok(TwoLayerNet {
        first_layer: w,
        second_layer: a,
        activation,
    })
}

impl TwoLayerNet {
    pub fn dim(&self) -> usize {
        self.first_layer.nrows()
    }

    pub fn width(&self) -> usize {
        self.first_layer.ncols()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut acc = 0.0;
        for (j, aj) in self.second_layer.iter().enumerate() {
            acc += aj
                * self
                    .activation
                    .eval(dot(self.first_layer.column(j).as_slice(), x));
        }
        Ok(acc / (self.width() as f64).sqrt())
    }

    /// Pre-activations `X W`, `N x m`.
    fn preactivations(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), inputs.ncols())?;
        Ok(inputs * &self.first_layer)
    }

    /// Feature matrix `Phi_ij = sigma(<x_i, w_j>)`.
    pub fn features(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let act = self.activation;
        Ok(self.preactivations(inputs)?.map(|t| act.eval(t)))
    }

    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        let phi = self.features(inputs)?;
        let a = DVector::from_column_slice(&self.second_layer);
        let out = phi * a / (self.width() as f64).sqrt();
        Ok(out.as_slice().to_vec())
    }
}

/// `(1/2n) sum_i (f(x_i) - y_i)^2`.
pub fn empirical_loss(net: &TwoLayerNet, data: &SingleIndexDataset) -> Result<f64> {
    let f = net.forward_batch(&data.inputs)?;
    let n = data.len() as f64;
    Ok(f.iter()
        .zip(&data.labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / (2.0 * n))
}

/// Full-batch gradient of [`empirical_loss`] with respect to the first layer:
///
/// ```text
/// G = X^T [ (r o sigma'(X W)) diag(a) ] / (n sqrt(m)),   r = f - y
/// ```
pub fn gradient(net: &TwoLayerNet, data: &SingleIndexDataset) -> Result<DMatrix<f64>> {
    let pre = net.preactivations(&data.inputs)?;
    let act = net.activation;
    let m = net.width();
    let n = data.len();
    let scale = (m as f64).sqrt().recip();
    let mut residual = vec![0.0; n];
    for i in 0..n {
        let mut f = 0.0;
        for j in 0..m {
            f += net.second_layer[j] * act.eval(pre[(i, j)]);
        }
        residual[i] = f * scale - data.labels[i];
    }
    let mut inner = pre;
    for j in 0..m {
        let aj = net.second_layer[j];
        for i in 0..n {
            inner[(i, j)] = residual[i] * act.derivative(inner[(i, j)]) * aj;
        }
    }
    Ok(data.inputs.tr_mul(&inner) * (scale / n as f64))
}

/// `W1 = W0 - eta G`; the second layer is kept.
pub fn gradient_step(
    net: &TwoLayerNet,
    data: &SingleIndexDataset,
    eta: f64,
) -> Result<TwoLayerNet> {
    let mut next = net.clone();
    if eta != 0.0 {
        next.first_layer -= gradient(net, data)? * eta;
    }
    Ok(next)
}

/// `scale * left * right^T` held in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneUpdate {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub scale: f64,
}

impl RankOneUpdate {
    pub fn matrix(&self) -> DMatrix<f64> {
        let l = DVector::from_column_slice(&self.left);
        let r = DVector::from_column_slice(&self.right);
        l * r.transpose() * self.scale
    }

    pub fn op_norm(&self) -> f64 {
        self.scale.abs() * dot(&self.left, &self.left).sqrt() * dot(&self.right, &self.right).sqrt()
    }
}

/// `(mu eta / sqrt(m)) (X^T y / n) a^T`, the deterministic part of the step.
pub fn rank_one_update(data: &SingleIndexDataset, a0: &[f64], eta: f64, mu: f64) -> RankOneUpdate {
    let n = data.len() as f64;
    let xty = data
        .inputs
        .tr_mul(&DVector::from_column_slice(&data.labels));
    RankOneUpdate {
        left: xty.iter().map(|v| v / n).collect(),
        right: a0.to_vec(),
        scale: mu * eta / (a0.len() as f64).sqrt(),
    }
}

/// Replaces the second layer with the ridge solution
///
/// ```text
/// argmin_a |y - Phi a / sqrt(m)|^2 + lambda |a|^2
///        = (Phi^T Phi / m + lambda I)^{-1} Phi^T y / sqrt(m)
/// ```
///
/// solved in the `m x m` form when `m <= N` and through
/// `Phi^T (Phi Phi^T / m + lambda I)^{-1} y / sqrt(m)` otherwise.
pub fn fit_second_layer(
    net: &TwoLayerNet,
    data: &SingleIndexDataset,
    lambda: f64,
) -> Result<TwoLayerNet> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge {lambda} must be finite and nonnegative"
        )));
    }
    let phi = net.features(&data.inputs)?;
    let (big_n, m) = (phi.nrows(), phi.ncols());
    let mf = m as f64;
    let y = DVector::from_column_slice(&data.labels);
    let a = if m <= big_n {
        let mut sys = phi.tr_mul(&phi) / mf;
        for j in 0..m {
            sys[(j, j)] += lambda;
        }
        cholesky_in_place(&mut sys)?;
        let mut rhs = DMatrix::from_column_slice(m, 1, (phi.tr_mul(&y) / mf.sqrt()).as_slice());
        cholesky_solve_in_place(&sys, &mut rhs);
        rhs.as_slice().to_vec()
    } else {
        if lambda == 0.0 {
            return Err(Error::SingularSystem);
        }
        let mut sys = &phi * phi.transpose() / mf;
        for i in 0..big_n {
            sys[(i, i)] += lambda;
        }
        cholesky_in_place(&mut sys)?;
        let mut rhs = DMatrix::from_column_slice(big_n, 1, y.as_slice());
        cholesky_solve_in_place(&sys, &mut rhs);
        (phi.transpose() * rhs / mf.sqrt()).as_slice().to_vec()
    };
    let mut next = net.clone();
    next.second_layer = a;
    Ok(next)
}

/// `Phi Phi^T / m` on the given points.
pub fn empirical_feature_kernel(net: &TwoLayerNet, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let phi = net.features(points)?;
    let mut k = &phi * phi.transpose() / net.width() as f64;
    let n = k.nrows();
    for j in 0..n {
        for i in j + 1..n {
            k[(i, j)] = k[(j, i)];
        }
    }
    Ok(k)
}

/// `|(W1 - W0) - A_bar|_op / |A_bar|_op` after the step `W1 - W0 = -eta G`,
/// with `A_bar` from [`rank_one_update`].
pub fn rank_one_error(
    net: &TwoLayerNet,
    data: &SingleIndexDataset,
    eta: f64,
    mu: f64,
) -> Result<f64> {
    let approx = rank_one_update(data, &net.second_layer, eta, mu);
    let denom = approx.op_norm();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("rank-one term is zero".into()));
    }
    let residual = gradient(net, data)? * (-eta) - approx.matrix();
    Ok(op_norm_power(&residual, 1e-10, 100_000)? / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::k0_relu;
    use crate::spectral::point_rows;
    use proptest::prelude::*;

    fn unit(d: usize, rng: &mut SeededStream) -> Vec<f64> {
        let v = rng.standard_normal_vec(d);
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn setup(seed: u64, d: usize, m: usize, n: usize) -> (TwoLayerNet, SingleIndexDataset) {
        let mut rng = SeededStream::new(seed, 3);
        let w = unit(d, &mut rng);
        let data = sample_dataset(&LinkFunction::PaperTarget, &w, n, 0.1, &mut rng).unwrap();
        let net = init_network(d, m, Activation::Relu, &mut rng).unwrap();
        (net, data)
    }

    #[test]
    fn noiseless_identity_labels_are_projections() {
        let mut rng = SeededStream::new(1, 0);
        let w = unit(7, &mut rng);
        let data = sample_dataset(&LinkFunction::Identity, &w, 50, 0.0, &mut rng).unwrap();
        for i in 0..50 {
            let x: Vec<f64> = data.inputs.row(i).iter().copied().collect();
            assert_eq!(data.labels[i], dot(&w, &x));
        }
        assert!(sample_dataset(&LinkFunction::Identity, &w, 0, 0.0, &mut rng).is_err());
        assert!(sample_dataset(&LinkFunction::Identity, &[1.0, 1.0], 3, 0.0, &mut rng).is_err());
    }

    #[test]
    fn stein_identity_on_samples() {
        let d = 20;
        let n = 100_000;
        let mut rng = SeededStream::new(2, 0);
        let w = unit(d, &mut rng);
        for link in [LinkFunction::Relu, LinkFunction::PaperTarget] {
            let data = sample_dataset(&link, &w, n, 0.25, &mut rng).unwrap();
            let mu1 = link.mu1().unwrap();
            for (j, wj) in w.iter().enumerate() {
                let col: Vec<f64> = data
                    .labels
                    .iter()
                    .enumerate()
                    .map(|(i, y)| y * data.inputs[(i, j)])
                    .collect();
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                assert!(
                    (mean - mu1 * wj).abs() < 4.0 * se,
                    "{link} coordinate {j}: {mean} vs {}",
                    mu1 * wj
                );
            }
        }
    }

    #[test]
    fn init_column_norms_concentrate() {
        let mut rng = SeededStream::new(3, 0);
        let net = init_network(1000, 1000, Activation::Relu, &mut rng).unwrap();
        let mean = net.first_layer.iter().map(|v| v * v).sum::<f64>() / 1000.0;
        assert!((0.9..=1.1).contains(&mean), "{mean}");
        let single = init_network(4, 1, Activation::Relu, &mut SeededStream::new(4, 0)).unwrap();
        let mut same = SeededStream::new(4, 0);
        let mut skip = vec![0.0; 4];
        same.fill_standard_normal(&mut skip);
        assert_eq!(single.second_layer[0], same.standard_normal());
        assert!(init_network(0, 3, Activation::Relu, &mut rng).is_err());
    }

    #[test]
    fn init_output_second_moment_matches_baseline_kernel() {
        let d = 30;
        let mut rng = SeededStream::new(5, 0);
        let x = rng.standard_normal_vec(d);
        let want = k0_relu(&x, &x).unwrap();
        let nets = 2000;
        let mut acc = 0.0;
        for _ in 0..nets {
            let net = init_network(d, 50, Activation::Relu, &mut rng).unwrap();
            let f = net.forward(&x).unwrap();
            acc += f * f;
        }
        // E f^2 = (1/m) sum_j E[a_j^2] E[sigma_j^2] = k0(x, x) / m
        let got = 50.0 * acc / nets as f64;
        assert!(got.is_finite());
        assert!((got - want).abs() < 0.15 * want, "{got} vs {want}");
    }

    #[test]
    fn forward_by_hand() {
        let net = TwoLayerNet {
            first_layer: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            second_layer: vec![1.0],
            activation: Activation::Relu,
        };
        assert_eq!(net.forward(&[2.0, 5.0]).unwrap(), 2.0);
        assert_eq!(net.forward(&[-2.0, 5.0]).unwrap(), 0.0);
        assert!(net.forward(&[1.0]).is_err());
        let mut zero = net.clone();
        zero.second_layer = vec![0.0];
        assert_eq!(zero.forward(&[2.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn batch_forward_matches_double_loop() {
        let (net, data) = setup(6, 9, 13, 17);
        let got = net.forward_batch(&data.inputs).unwrap();
        for (i, gi) in got.iter().enumerate() {
            let mut f = 0.0;
            for j in 0..net.width() {
                let mut pre = 0.0;
                for k in 0..net.dim() {
                    pre += data.inputs[(i, k)] * net.first_layer[(k, j)];
                }
                f += net.second_layer[j] * pre.max(0.0);
            }
            f /= (net.width() as f64).sqrt();
            assert!((gi - f).abs() < 1e-12 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn single_sample_gradient_by_hand() {
        let net = TwoLayerNet {
            first_layer: DMatrix::from_column_slice(2, 1, &[0.5, -0.25]),
            second_layer: vec![2.0],
            activation: Activation::Relu,
        };
        let data = SingleIndexDataset {
            inputs: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            labels: vec![3.0],
            direction: vec![1.0, 0.0],
            noise_var: 0.0,
        };
        // pre = 0, sigma'(0) = 1, f = 0, r = -3, g = r a x
        let g = gradient(&net, &data).unwrap();
        assert_eq!(g[(0, 0)], -6.0);
        assert_eq!(g[(1, 0)], -12.0);
        let stepped = gradient_step(&net, &data, 0.1).unwrap();
        assert!((stepped.first_layer[(0, 0)] - 1.1).abs() < 1e-15);
        assert_eq!(stepped.second_layer, net.second_layer);
        assert_eq!(gradient_step(&net, &data, 0.0).unwrap(), net);
    }

    fn activation_pattern(net: &TwoLayerNet, data: &SingleIndexDataset) -> Vec<bool> {
        (&data.inputs * &net.first_layer)
            .iter()
            .map(|v| *v >= 0.0)
            .collect()
    }

    fn min_abs_preactivation(net: &TwoLayerNet, data: &SingleIndexDataset) -> f64 {
        (&data.inputs * &net.first_layer)
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    #[test]
    fn gradient_matches_central_differences() {
        // without a kink crossing the loss is quadratic in each weight, so
        // a large step keeps the difference exact and roundoff small
        let h = 1e-4;
        let mut checked = 0;
        for seed in 0..20 {
            let (net, data) = setup(100 + seed, 6, 5, 12);
            if min_abs_preactivation(&net, &data) < 1e-6 {
                continue;
            }
            let pattern = activation_pattern(&net, &data);
            let g = gradient(&net, &data).unwrap();
            for k in 0..net.dim() {
                for j in 0..net.width() {
                    let mut plus = net.clone();
                    plus.first_layer[(k, j)] += h;
                    let mut minus = net.clone();
                    minus.first_layer[(k, j)] -= h;
                    if activation_pattern(&plus, &data) != pattern
                        || activation_pattern(&minus, &data) != pattern
                    {
                        continue;
                    }
                    let fd = (empirical_loss(&plus, &data).unwrap()
                        - empirical_loss(&minus, &data).unwrap())
                        / (2.0 * h);
                    let scale = g[(k, j)].abs().max(1e-3);
                    assert!(
                        (fd - g[(k, j)]).abs() < 1e-5 * scale,
                        "seed {seed}: {fd} vs {}",
                        g[(k, j)]
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 500, "{checked}");
    }

    #[test]
    fn rank_one_error_matches_dense_norms() {
        let (net, data) = setup(21, 12, 9, 40);
        let eta = 2.5;
        let err = rank_one_error(&net, &data, eta, 0.5).unwrap();
        let step = gradient_step(&net, &data, eta).unwrap().first_layer - &net.first_layer;
        let approx = rank_one_update(&data, &net.second_layer, eta, 0.5).matrix();
        let top = |m: &DMatrix<f64>| (m.transpose() * m).symmetric_eigenvalues().max().sqrt();
        let want = top(&(&step - &approx)) / top(&approx);
        assert!((err - want).abs() < 1e-8 * want, "{err} vs {want}");
        assert!(rank_one_error(&net, &data, 0.0, 0.5).is_err());
    }

    #[test]
    fn rank_one_factors() {
        let (net, data) = setup(8, 10, 7, 30);
        let r = rank_one_update(&data, &net.second_layer, 3.0, 0.5);
        let m = r.matrix();
        assert_eq!(m.shape(), (10, 7));
        let sv = m.clone().singular_values();
        assert!(sv[1] < 1e-12 * sv[0]);
        assert!(
            (r.op_norm() - op_norm_power(&m, 1e-14, 10_000).unwrap()).abs() < 1e-8 * r.op_norm()
        );
        let mut quiet = data.clone();
        quiet.labels.iter_mut().for_each(|y| *y = 0.0);
        assert_eq!(
            rank_one_update(&quiet, &net.second_layer, 3.0, 0.5).op_norm(),
            0.0
        );
        assert_eq!(
            rank_one_update(&data, &net.second_layer, 0.0, 0.5).op_norm(),
            0.0
        );
    }

    #[test]
    fn ridge_scalar_case() {
        let mut rng = SeededStream::new(9, 0);
        let w = unit(3, &mut rng);
        let data = sample_dataset(&LinkFunction::Identity, &w, 25, 0.0, &mut rng).unwrap();
        let net = init_network(3, 1, Activation::Relu, &mut rng).unwrap();
        let phi = net.features(&data.inputs).unwrap();
        let lambda = 0.3;
        let pp: f64 = phi.iter().map(|v| v * v).sum();
        let py: f64 = phi.iter().zip(&data.labels).map(|(p, y)| p * y).sum();
        let want = py / (pp + lambda);
        let got = fit_second_layer(&net, &data, lambda).unwrap().second_layer[0];
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
    }

    fn objective(net: &TwoLayerNet, data: &SingleIndexDataset, lambda: f64) -> f64 {
        let f = net.forward_batch(&data.inputs).unwrap();
        f.iter()
            .zip(&data.labels)
            .map(|(p, y)| (y - p) * (y - p))
            .sum::<f64>()
            + lambda * dot(&net.second_layer, &net.second_layer)
    }

    #[test]
    fn ridge_is_local_minimum_and_solves_normal_equations() {
        for (m, n) in [(8, 40), (40, 15)] {
            let (net, data) = setup(11, 6, m, n);
            let lambda = 0.05;
            let fit = fit_second_layer(&net, &data, lambda).unwrap();
            assert_eq!(fit.first_layer, net.first_layer);
            let phi = net.features(&data.inputs).unwrap();
            let a = DVector::from_column_slice(&fit.second_layer);
            let y = DVector::from_column_slice(&data.labels);
            let mf = m as f64;
            let lhs = phi.tr_mul(&phi) / mf * &a + &a * lambda;
            let rhs = phi.tr_mul(&y) / mf.sqrt();
            assert!((lhs - rhs).amax() < 1e-8);
            let base = objective(&fit, &data, lambda);
            let mut rng = SeededStream::new(12, 0);
            for _ in 0..50 {
                let dir = unit(m, &mut rng);
                for s in [1e-3, -1e-3] {
                    let mut p = fit.clone();
                    p.second_layer
                        .iter_mut()
                        .zip(&dir)
                        .for_each(|(a, d)| *a += s * d);
                    assert!(objective(&p, &data, lambda) >= base);
                }
            }
        }
    }

    #[test]
    fn ridge_shrinks_and_rejects_singular() {
        let (net, data) = setup(13, 5, 6, 30);
        let mut prev = f64::INFINITY;
        for lambda in [1e-3, 1e-1, 1e1, 1e3, 1e6] {
            let a = fit_second_layer(&net, &data, lambda).unwrap().second_layer;
            let norm = dot(&a, &a).sqrt();
            assert!(norm <= prev);
            prev = norm;
        }
        assert!(prev < 1e-4);
        let (wide, few) = setup(14, 5, 20, 6);
        assert!(matches!(
            fit_second_layer(&wide, &few, 0.0),
            Err(Error::SingularSystem)
        ));
        assert!(fit_second_layer(&wide, &few, -1.0).is_err());
    }

    #[test]
    fn empirical_kernel_approaches_baseline() {
        let d = 10;
        let m = 40_000;
        let mut rng = SeededStream::new(15, 0);
        let net = init_network(d, m, Activation::Relu, &mut rng).unwrap();
        let pts = DMatrix::from_fn(6, d, |_, _| rng.standard_normal());
        let k = empirical_feature_kernel(&net, &pts).unwrap();
        assert!(k == k.transpose());
        assert!(k.clone().symmetric_eigenvalues().min() > -1e-10);
        let rows = point_rows(&pts);
        let phi = net.features(&pts).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = k0_relu(&rows[i], &rows[j]).unwrap();
                let prods: Vec<f64> = (0..m).map(|c| phi[(i, c)] * phi[(j, c)]).collect();
                let mean = prods.iter().sum::<f64>() / m as f64;
                let sd = (prods.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (m - 1) as f64)
                    .sqrt();
                assert!(
                    (k[(i, j)] - want).abs() < 4.0 * sd / (m as f64).sqrt(),
                    "{i},{j}"
                );
            }
        }
        let one = init_network(d, 1, Activation::Relu, &mut rng).unwrap();
        let k1 = empirical_feature_kernel(&one, &pts).unwrap();
        let ev = k1.symmetric_eigenvalues();
        let mut sorted: Vec<f64> = ev.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted[4].abs() < 1e-12 * sorted[5].abs().max(1e-300) + 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn step_changes_only_first_layer(seed in 0u64..1000, eta in 0.0f64..5.0) {
            let (net, data) = setup(seed, 4, 3, 9);
            let next = gradient_step(&net, &data, eta).unwrap();
            prop_assert_eq!(&next.second_layer, &net.second_layer);
            let g = gradient(&net, &data).unwrap();
            let diff = (&next.first_layer - &net.first_layer + g * eta).amax();
            prop_assert!(diff < 1e-12);
        }

        #[test]
        fn rank_one_update_matches_outer_product(seed in 0u64..1000, mu in -2.0f64..2.0) {
            let (net, data) = setup(seed, 5, 4, 11);
            let r = rank_one_update(&data, &net.second_layer, 2.0, mu);
            let m = r.matrix();
            let n = data.len() as f64;
            for k in 0..5 {
                let xty: f64 = (0..data.len()).map(|i| data.inputs[(i, k)] * data.labels[i]).sum();
                for j in 0..4 {
                    let want = mu * 2.0 / 2.0 * xty / n * net.second_layer[j];
                    prop_assert!((m[(k, j)] - want).abs() < 1e-12 * (1.0 + want.abs()));
                }
            }
        }
    }
}
