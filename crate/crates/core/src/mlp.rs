//! Fully trained two-layer ReLU network used as a baseline: linear layers
//! with biases, Adam on the mean squared error, minibatches drawn from a
//! seeded shuffle every epoch.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::krr::{fold_assignment, mse};
use crate::rng::SeededStream;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch: usize,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument(format!(
                "width, epochs and batch must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `width x d`.
    pub hidden_weights: DMatrix<f64>,
    pub hidden_bias: DVector<f64>,
    pub output_weights: DVector<f64>,
    pub output_bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Grads {
    hw: DMatrix<f64>,
    hb: DVector<f64>,
    ow: DVector<f64>,
    ob: f64,
}

impl Grads {
    fn zeros_like(net: &Mlp) -> Self {
        Grads {
            hw: DMatrix::zeros(net.hidden_weights.nrows(), net.hidden_weights.ncols()),
            hb: DVector::zeros(net.hidden_bias.len()),
            ow: DVector::zeros(net.output_weights.len()),
            ob: 0.0,
        }
    }
}

fn uniform_sym(rng: &mut SeededStream, bound: f64) -> f64 {
    (2.0 * rng.uniform() - 1.0) * bound
}

impl Mlp {
    /// Every parameter `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(d: usize, width: usize, rng: &mut SeededStream) -> Result<Self> {
        if d == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "network shape {d} x {width} is empty"
            )));
        }
        let b1 = (d as f64).sqrt().recip();
        let b2 = (width as f64).sqrt().recip();
        let hidden_weights = DMatrix::from_fn(width, d, |_, _| uniform_sym(rng, b1));
        let hidden_bias = DVector::from_fn(width, |_, _| uniform_sym(rng, b1));
        let output_weights = DVector::from_fn(width, |_, _| uniform_sym(rng, b2));
        let output_bias = uniform_sym(rng, b2);
        Ok(Mlp {
            hidden_weights,
            hidden_bias,
            output_weights,
            output_bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.hidden_weights.ncols()
    }

    fn hidden_pre(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut pre = x * self.hidden_weights.transpose();
        for mut row in pre.row_iter_mut() {
            row += self.hidden_bias.transpose();
        }
        pre
    }

    /// One output per row of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.ncols())?;
        let h = self.hidden_pre(x).map(|t| t.max(0.0));
        let out = h * &self.output_weights;
        Ok(out.iter().map(|v| v + self.output_bias).collect())
    }

    /// Mean squared error on the batch and its gradient.
    fn loss_and_grads(&self, x: &DMatrix<f64>, y: &[f64]) -> (f64, Grads) {
        let b = y.len() as f64;
        let pre = self.hidden_pre(x);
        let h = pre.map(|t| t.max(0.0));
        let out = &h * &self.output_weights;
        let mut delta = DVector::zeros(y.len());
        let mut loss = 0.0;
        for i in 0..y.len() {
            let r = out[i] + self.output_bias - y[i];
            loss += r * r;
            delta[i] = 2.0 * r / b;
        }
        let ow = h.tr_mul(&delta);
        let ob = delta.sum();
        let mut dh = &delta * self.output_weights.transpose();
        dh.zip_apply(&pre, |g, p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let hw = dh.tr_mul(x);
        let hb = DVector::from_iterator(dh.ncols(), dh.column_iter().map(|c| c.sum()));
        (loss / b, Grads { hw, hb, ow, ob })
    }
}

struct Adam {
    m: Grads,
    v: Grads,
    t: i32,
}

impl Adam {
    fn new(net: &Mlp) -> Self {
        Adam {
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Mlp, g: &Grads, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let upd = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        };
        for ((p, m), (v, g)) in net
            .hidden_weights
            .iter_mut()
            .zip(self.m.hw.iter_mut())
            .zip(self.v.hw.iter_mut().zip(g.hw.iter()))
        {
            upd(p, m, v, *g);
        }
        for ((p, m), (v, g)) in net
            .hidden_bias
            .iter_mut()
            .zip(self.m.hb.iter_mut())
            .zip(self.v.hb.iter_mut().zip(g.hb.iter()))
        {
            upd(p, m, v, *g);
        }
        for ((p, m), (v, g)) in net
            .output_weights
            .iter_mut()
            .zip(self.m.ow.iter_mut())
            .zip(self.v.ow.iter_mut().zip(g.ow.iter()))
        {
            upd(p, m, v, *g);
        }
        upd(&mut net.output_bias, &mut self.m.ob, &mut self.v.ob, g.ob);
    }
}

/// Trains a fresh network; returns `None` when the loss stops being finite.
pub fn train_mlp(
    x: &DMatrix<f64>,
    y: &[f64],
    lr: f64,
    cfg: &MlpConfig,
    rng: &mut SeededStream,
) -> Result<Option<Mlp>> {
    cfg.validate()?;
    check_dim(x.nrows(), y.len())?;
    if y.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let mut net = Mlp::init(x.ncols(), cfg.width, rng)?;
    let mut opt = Adam::new(&net);
    let n = y.len();
    for _ in 0..cfg.epochs {
        let order = rng.permutation(n);
        for chunk in order.chunks(cfg.batch) {
            let xb = DMatrix::from_fn(chunk.len(), x.ncols(), |i, j| x[(chunk[i], j)]);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, g) = net.loss_and_grads(&xb, &yb);
            if !loss.is_finite() {
                return Ok(None);
            }
            opt.step(&mut net, &g, lr);
        }
    }
    Ok(Some(net))
}

fn held_out_mse(net: Option<Mlp>, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let Some(net) = net else {
        return Ok(f64::INFINITY);
    };
    let e = mse(&net.predict(x)?, y)?;
    Ok(if e.is_finite() { e } else { f64::INFINITY })
}

fn take_rows(x: &DMatrix<f64>, y: &[f64], idx: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    (
        DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)]),
        idx.iter().map(|&i| y[i]).collect(),
    )
}

/// Mean K-fold validation MSE per learning rate; divergence scores `+inf`.
pub fn cv_learning_rates(
    x: &DMatrix<f64>,
    y: &[f64],
    lr_grid: &[f64],
    folds: usize,
    cfg: &MlpConfig,
    rng: &mut SeededStream,
) -> Result<Vec<f64>> {
    check_dim(x.nrows(), y.len())?;
    let assignment = fold_assignment(y.len(), folds, rng)?;
    let base = rng.split();
    let mut scores = vec![0.0; lr_grid.len()];
    for (f, held) in assignment.iter().enumerate() {
        let mut is_held = vec![false; y.len()];
        held.iter().for_each(|&i| is_held[i] = true);
        let train: Vec<usize> = (0..y.len()).filter(|&i| !is_held[i]).collect();
        let (xt, yt) = take_rows(x, y, &train);
        let (xv, yv) = take_rows(x, y, held);
        for (g, &lr) in lr_grid.iter().enumerate() {
            let mut stream = base.substream((f * lr_grid.len() + g) as u64);
            scores[g] += held_out_mse(train_mlp(&xt, &yt, lr, cfg, &mut stream)?, &xv, &yv)?;
        }
    }
    Ok(scores.into_iter().map(|s| s / folds as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpOutcome {
    pub lr: f64,
    pub test_mse: f64,
}

/// Selects the learning rate by K-fold CV (ties to the smaller rate),
/// retrains on the full training set and scores the test set.
#[allow(clippy::too_many_arguments)]
pub fn train_mlp_baseline(
    cfg: &MlpConfig,
    x_train: &DMatrix<f64>,
    y_train: &[f64],
    x_test: &DMatrix<f64>,
    y_test: &[f64],
    lr_grid: &[f64],
    folds: usize,
    rng: &mut SeededStream,
) -> Result<MlpOutcome> {
    if lr_grid.is_empty() {
        return Err(Error::InvalidArgument("empty learning-rate grid".into()));
    }
    let scores = cv_learning_rates(x_train, y_train, lr_grid, folds, cfg, rng)?;
    let mut best = 0;
    for g in 1..lr_grid.len() {
        if scores[g] < scores[best] || (scores[g] == scores[best] && lr_grid[g] < lr_grid[best]) {
            best = g;
        }
    }
    let lr = lr_grid[best];
    let net = train_mlp(x_train, y_train, lr, cfg, rng)?;
    Ok(MlpOutcome {
        lr,
        test_mse: held_out_mse(net, x_test, y_test)?,
    })
}
