//! MLP critic `T(z, y)` trained on the DV or NWJ objective.
//!
//! The critic sees standardized `z` concatenated with a one-hot label. Joint
//! pairs come from the data; product pairs come from shuffling labels inside
//! the minibatch. Validation uses the exact product expectation
//! `sum_i sum_c p(c) exp(T(z_i, c)) / n` instead of a shuffle.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, DataMatrix, LabelVector};
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Dv,
    Nwj,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Steps between validation evaluations.
    pub eval_every: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![256, 256],
            learning_rate: 1e-3,
            batch_size: 256,
            max_steps: 5000,
            patience: 10,
            eval_every: 50,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl CriticConfig {
    /// Small network and short schedule, for tests and quick sweeps.
    pub fn fast() -> Self {
        Self {
            hidden_widths: vec![32, 32],
            learning_rate: 3e-3,
            batch_size: 256,
            max_steps: 800,
            patience: 6,
            eval_every: 50,
            val_fraction: 0.2,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(invalid("critic.hidden_widths must be non-empty with every width >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("critic.learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.max_steps == 0 || self.eval_every == 0 {
            return Err(invalid("critic.batch_size, critic.max_steps and critic.eval_every must be >= 1"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return Err(invalid("critic.val_fraction must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Fully connected network, ReLU on hidden layers, scalar linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Clone, Debug)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// He-initialized weights, zero biases.
    pub fn new(input: usize, hidden: &[usize], rng: &mut RngStream) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let sd = (2.0 / w[0] as f64).sqrt();
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| sd * rng.normal()));
            biases.push(Array1::zeros(w[1]));
        }
        Self { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Layer activations, input first, output last.
    fn forward_all(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut h = acts[l].dot(w) + b;
            if l < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(h);
        }
        acts
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array1<f64> {
        let mut acts = self.forward_all(x);
        acts.pop().expect("network has an output layer").column(0).to_owned()
    }

    /// Gradient of `sum_i dout_i * T(x_i)` with respect to every parameter.
    fn backward(&self, acts: &[Array2<f64>], dout: &Array1<f64>) -> Grads {
        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut delta = dout.clone().insert_axis(Axis(1));
        for l in (0..layers).rev() {
            gw.push(acts[l].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                back.zip_mut_with(&acts[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        gw.reverse();
        gb.reverse();
        Grads {
            weights: gw,
            biases: gb,
        }
    }

    fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for w in &mut self.weights {
            if idx < w.len() {
                return w.iter_mut().nth(idx).expect("index within layer");
            }
            idx -= w.len();
        }
        for b in &mut self.biases {
            if idx < b.len() {
                return &mut b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range")
    }
}

impl Grads {
    fn get(&self, mut idx: usize) -> f64 {
        for w in &self.weights {
            if idx < w.len() {
                return *w.iter().nth(idx).expect("index within layer");
            }
            idx -= w.len();
        }
        for b in &self.biases {
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range")
    }
}

fn log_mean_exp(v: &Array1<f64>) -> f64 {
    let m = v.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Minibatch objective on stacked inputs: the first `n_joint` rows are joint
/// pairs, the rest product pairs. Returns the objective and its gradient.
pub fn batch_objective(mlp: &Mlp, x: &Array2<f64>, n_joint: usize, objective: Objective) -> (f64, Grads) {
    let mut acts = mlp.forward_all(x);
    let out = acts.last().expect("output layer").column(0).to_owned();
    let tj = out.slice(s![..n_joint]);
    let tm = out.slice(s![n_joint..]).to_owned();
    let nm = tm.len() as f64;
    let mut dout = Array1::zeros(out.len());
    dout.slice_mut(s![..n_joint]).fill(1.0 / n_joint as f64);
    let value = match objective {
        Objective::Dv => {
            let lme = log_mean_exp(&tm);
            let mmax = tm.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let w: Array1<f64> = tm.mapv(|t| (t - mmax).exp());
            let z = w.sum();
            dout.slice_mut(s![n_joint..]).assign(&(-&w / z));
            tj.mean().unwrap_or(0.0) - lme
        }
        Objective::Nwj => {
            let e = tm.mapv(|t| (t - 1.0).exp());
            dout.slice_mut(s![n_joint..]).assign(&(-&e / nm));
            tj.mean().unwrap_or(0.0) - e.sum() / nm
        }
    };
    acts.pop();
    acts.push(out.insert_axis(Axis(1)));
    (value, mlp.backward(&acts, &dout))
}

/// Worst relative error between analytic and central-difference gradients over
/// `count` randomly chosen parameters.
pub fn gradient_check(mlp: &Mlp, x: &Array2<f64>, n_joint: usize, objective: Objective, count: usize, rng: &mut RngStream) -> f64 {
    let (_, grads) = batch_objective(mlp, x, n_joint, objective);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let idx = rng.below(mlp.num_params());
        let mut plus = mlp.clone();
        *plus.param_mut(idx) += h;
        let mut minus = mlp.clone();
        *minus.param_mut(idx) -= h;
        let numeric = (batch_objective(&plus, x, n_joint, objective).0 - batch_objective(&minus, x, n_joint, objective).0) / (2.0 * h);
        let analytic = grads.get(idx);
        let denom = analytic.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

struct Adam {
    lr: f64,
    t: i32,
    mw: Vec<Array2<f64>>,
    vw: Vec<Array2<f64>>,
    mb: Vec<Array1<f64>>,
    vb: Vec<Array1<f64>>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(mlp: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            t: 0,
            mw: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            vw: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            mb: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            vb: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// One descent step on `loss` whose gradient is `g`.
    fn step(&mut self, mlp: &mut Mlp, g: &Grads) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        };
        for l in 0..mlp.weights.len() {
            ndarray::Zip::from(&mut mlp.weights[l])
                .and(&mut self.mw[l])
                .and(&mut self.vw[l])
                .and(&g.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut mlp.biases[l])
                .and(&mut self.mb[l])
                .and(&mut self.vb[l])
                .and(&g.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

/// Both bound functionals evaluated with one critic on one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValues {
    pub dv: f64,
    pub nwj: f64,
}

impl BoundValues {
    pub fn get(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Dv => self.dv,
            Objective::Nwj => self.nwj,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainedCritic {
    pub mlp: Mlp,
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub num_classes: usize,
    pub objective: Objective,
    /// Best validation objective so far, one entry per evaluation.
    pub history: Vec<f64>,
    pub best_step: usize,
    pub steps_run: usize,
}

impl TrainedCritic {
    fn standardize(&self, z: &DataMatrix) -> Array2<f64> {
        standardize_with(z, &self.mean, &self.inv_std)
    }

    /// DV and NWJ functionals on `(z, y)` using the exact product expectation
    /// with the empirical label frequencies of `y`.
    pub fn bounds(&self, z: &DataMatrix, y: &LabelVector) -> Result<BoundValues> {
        if z.cols() != self.mean.len() || y.len() != z.rows() {
            return Err(Error::DimensionMismatch {
                context: "critic evaluation",
                expected: self.mean.len(),
                got: z.cols(),
            });
        }
        Ok(exact_bounds(&self.mlp, &self.standardize(z), y.labels(), self.num_classes))
    }
}

fn standardize_with(z: &DataMatrix, mean: &[f64], inv_std: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((z.rows(), z.cols()), |(i, j)| (z.get(i, j) - mean[j]) * inv_std[j])
}

fn inputs(zs: &Array2<f64>, rows: &[usize], labels: impl Iterator<Item = usize>, k: usize) -> Array2<f64> {
    let d = zs.ncols();
    let mut x = Array2::zeros((rows.len(), d + k));
    for ((r, &i), c) in rows.iter().enumerate().zip(labels) {
        x.slice_mut(s![r, ..d]).assign(&zs.row(i));
        x[[r, d + c]] = 1.0;
    }
    x
}

fn exact_bounds(mlp: &Mlp, zs: &Array2<f64>, labels: &[usize], k: usize) -> BoundValues {
    let n = zs.nrows();
    let all: Vec<usize> = (0..n).collect();
    let tj = mlp.forward(&inputs(zs, &all, labels.iter().copied(), k));
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&c| counts[c] += 1);
    // Every (sample, class) pair, weighted by the class frequency.
    let rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
    let tp = mlp.forward(&inputs(zs, &rows, (0..n * k).map(|r| r % k), k));
    let logw: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0 { (c as f64 / n as f64).ln() } else { f64::NEG_INFINITY })
        .collect();
    let shifted: Vec<f64> = tp.iter().enumerate().map(|(r, t)| t + logw[r % k]).collect();
    let m = shifted.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum_exp: f64 = shifted.iter().map(|v| (v - m).exp()).sum();
    let log_prod = m + sum_exp.ln() - (n as f64).ln();
    let joint = tj.mean().unwrap_or(0.0);
    BoundValues {
        dv: joint - log_prod,
        nwj: joint - (log_prod - 1.0).exp(),
    }
}

/// Trains a critic on `(z, y)` with early stopping on a stratified validation
/// subset, returning the parameters with the best validation objective.
pub fn train_critic(z: &DataMatrix, y: &LabelVector, objective: Objective, cfg: &CriticConfig, rng: &RngStream) -> Result<TrainedCritic> {
    cfg.validate()?;
    if z.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "critic labels",
            expected: z.rows(),
            got: y.len(),
        });
    }
    if z.rows() < 20 {
        return Err(invalid(format!("critic training needs at least 20 samples, got {}", z.rows())));
    }
    let k = y.num_classes();
    let populated = y.class_counts().iter().filter(|&&c| c > 0).count();
    if populated < 2 {
        return Err(invalid("critic training needs at least two populated classes"));
    }
    let rng = rng.derive("critic", cfg.seed);
    let n_val = ((z.rows() as f64 * cfg.val_fraction).round() as usize).max(populated);
    let (train_idx, val_idx) = stratified_split(y, n_val, &rng.derive("val-split", 0))?;

    let train_z = z.select_rows(&train_idx)?;
    let mean = train_z.column_means();
    let inv_std: Vec<f64> = (0..z.cols())
        .map(|j| {
            let col = train_z.column(j);
            let sd = crate::numeric::population_std(&col);
            if sd > 0.0 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();
    let zs = standardize_with(z, &mean, &inv_std);
    let val_rows: Vec<usize> = val_idx.clone();
    let val_zs = zs.select(Axis(0), &val_rows);
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| y.get(i)).collect();

    let mut init_rng = rng.derive("init", 0);
    let mut mlp = Mlp::new(z.cols() + k, &cfg.hidden_widths, &mut init_rng);
    let mut adam = Adam::new(&mlp, cfg.learning_rate);
    let mut batch_rng = rng.derive("batches", 0);

    let mut best = exact_bounds(&mlp, &val_zs, &val_labels, k).get(objective);
    let mut best_mlp = mlp.clone();
    let mut best_step = 0;
    let mut history = vec![best];
    let mut stale = 0;
    let batch = cfg.batch_size.min(train_idx.len());
    let mut order = batch_rng.permutation(train_idx.len());
    let mut cursor = 0;
    let mut steps_run = 0;

    for step in 1..=cfg.max_steps {
        if cursor + batch > order.len() {
            order = batch_rng.permutation(train_idx.len());
            cursor = 0;
        }
        let rows: Vec<usize> = order[cursor..cursor + batch].iter().map(|&p| train_idx[p]).collect();
        cursor += batch;
        let labels: Vec<usize> = rows.iter().map(|&i| y.get(i)).collect();
        let perm = batch_rng.permutation(batch);
        let mut stacked = inputs(&zs, &rows, labels.iter().copied(), k);
        let marg = inputs(&zs, &rows, perm.iter().map(|&p| labels[p]), k);
        stacked.append(Axis(0), marg.view()).expect("matching widths");
        let (value, mut grads) = batch_objective(&mlp, &stacked, batch, objective);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("{objective:?} minibatch objective = {value}"),
            });
        }
        // Ascend the objective: hand Adam the gradient of its negative.
        grads.weights.iter_mut().for_each(|g| g.mapv_inplace(|v| -v));
        grads.biases.iter_mut().for_each(|g| g.mapv_inplace(|v| -v));
        adam.step(&mut mlp, &grads);
        if !mlp.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: "critic parameters became non-finite".into(),
            });
        }
        steps_run = step;
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let v = exact_bounds(&mlp, &val_zs, &val_labels, k).get(objective);
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    detail: format!("{objective:?} validation objective = {v}"),
                });
            }
            if v > best {
                best = v;
                best_mlp = mlp.clone();
                best_step = step;
                stale = 0;
            } else {
                stale += 1;
            }
            history.push(best);
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainedCritic {
        mlp: best_mlp,
        mean,
        inv_std,
        num_classes: k,
        objective,
        history,
        best_step,
        steps_run,
    })
}
