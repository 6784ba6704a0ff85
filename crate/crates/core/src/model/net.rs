//! VAE + DNN network with explicit forward and backward passes.
//!
//! Encoder: x → ReLU(h) → (μ, logσ²). Decoder: z → ReLU(h) → x̂ (linear).
//! Classifier: z → ReLU layers → sigmoid p. In training mode
//! z = μ + exp(½·logσ²)⊙ε; at inference z = μ.
//!
//! Loss over a batch of B rows with input width D:
//! L = BCE(p, y) + λ·(MSE(x̂, x) + β·KL), where BCE and KL are batch means and
//! MSE is the mean over all B·D elements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{col_sums, matmul, matmul_nt, matmul_tn};

pub const PROB_CLAMP: f64 = 1e-7;

pub const ENC_HIDDEN: usize = 0;
pub const ENC_MU: usize = 1;
pub const ENC_LOGVAR: usize = 2;
pub const DEC_HIDDEN: usize = 3;
pub const DEC_OUT: usize = 4;
pub const DNN_FIRST: usize = 5;

/// Affine layer `y = x·W + b` with `W` stored `inp × out` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            inp,
            out,
            w: vec![0.0; inp * out],
            b: vec![0.0; out],
        }
    }

    /// Weights uniform in ±√(6 / fan_in), biases zero.
    pub fn he_uniform(inp: usize, out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / inp as f64).sqrt();
        Self {
            inp,
            out,
            w: (0..inp * out).map(|_| rng.random_range(-bound..bound)).collect(),
            b: vec![0.0; out],
        }
    }

    fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut y = matmul(x, &self.w, n, self.inp, self.out);
        for row in y.chunks_exact_mut(self.out) {
            for (v, b) in row.iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        y
    }

    /// Writes parameter gradients into `g`; returns the input gradient.
    fn backward(&self, x: &[f64], dy: &[f64], n: usize, g: &mut Dense) -> Vec<f64> {
        g.w = matmul_tn(x, dy, n, self.inp, self.out);
        g.b = col_sums(dy, n, self.out);
        matmul_nt(dy, &self.w, n, self.out, self.inp)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn relu_mask(dy: &mut [f64], pre: &[f64]) {
    for (d, p) in dy.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *d = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub dnn_widths: Vec<usize>,
    pub layers: Vec<Dense>,
}

/// Per-term breakdown of the joint loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub bce: f64,
    pub mse: f64,
    pub kl: f64,
}

impl LossTerms {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.bce.is_finite() && self.mse.is_finite() && self.kl.is_finite()
    }
}

/// Intermediates kept from a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub n: usize,
    pub enc_pre: Vec<f64>,
    pub enc_h: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
    pub dec_pre: Vec<f64>,
    pub dec_h: Vec<f64>,
    pub xhat: Vec<f64>,
    /// Inputs to each classifier layer (first is `z`) and their pre-activations.
    pub dnn_in: Vec<Vec<f64>>,
    pub dnn_pre: Vec<Vec<f64>>,
    pub p: Vec<f64>,
}

impl Network {
    pub fn new(input_dim: usize, hidden: usize, latent: usize, dnn_widths: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = vec![
            Dense::he_uniform(input_dim, hidden, &mut rng),
            Dense::he_uniform(hidden, latent, &mut rng),
            Dense::he_uniform(hidden, latent, &mut rng),
            Dense::he_uniform(latent, hidden, &mut rng),
            Dense::he_uniform(hidden, input_dim, &mut rng),
        ];
        let mut prev = latent;
        for &w in dnn_widths {
            layers.push(Dense::he_uniform(prev, w, &mut rng));
            prev = w;
        }
        Self {
            input_dim,
            hidden,
            latent,
            dnn_widths: dnn_widths.to_vec(),
            layers,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inp, l.out)).collect(),
            dnn_widths: self.dnn_widths.clone(),
            ..*self
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Every parameter tensor in a fixed order (per layer: weights, then biases).
    pub fn tensors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b])
    }

    /// Forward pass over `n` rows. `eps` (n × latent) selects training mode.
    pub fn forward(&self, x: &[f64], n: usize, eps: Option<&[f64]>) -> Forward {
        let l = &self.layers;
        let enc_pre = l[ENC_HIDDEN].forward(x, n);
        let mut enc_h = enc_pre.clone();
        relu(&mut enc_h);
        let mu = l[ENC_MU].forward(&enc_h, n);
        let logvar = l[ENC_LOGVAR].forward(&enc_h, n);
        let z = match eps {
            Some(e) => mu
                .iter()
                .zip(&logvar)
                .zip(e)
                .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
                .collect(),
            None => mu.clone(),
        };
        let dec_pre = l[DEC_HIDDEN].forward(&z, n);
        let mut dec_h = dec_pre.clone();
        relu(&mut dec_h);
        let xhat = l[DEC_OUT].forward(&dec_h, n);

        let mut dnn_in = Vec::with_capacity(self.dnn_widths.len());
        let mut dnn_pre = Vec::with_capacity(self.dnn_widths.len());
        let mut a = z.clone();
        let depth = self.dnn_widths.len();
        for (k, layer) in l[DNN_FIRST..].iter().enumerate() {
            let pre = layer.forward(&a, n);
            dnn_in.push(a);
            a = pre.clone();
            dnn_pre.push(pre);
            if k + 1 < depth {
                relu(&mut a);
            }
        }
        let p = a.iter().map(|&v| sigmoid(v)).collect();
        Forward {
            n,
            enc_pre,
            enc_h,
            mu,
            logvar,
            z,
            dec_pre,
            dec_h,
            xhat,
            dnn_in,
            dnn_pre,
            p,
        }
    }

    pub fn loss(&self, f: &Forward, x: &[f64], y: &[u8], lambda: f64, beta: f64) -> LossTerms {
        let n = f.n as f64;
        let bce = f
            .p
            .iter()
            .zip(y)
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                if y == 1 {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / n;
        let mse = f.xhat.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
        let kl = -0.5
            * f.mu
                .iter()
                .zip(&f.logvar)
                .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
                .sum::<f64>()
            / n;
        LossTerms {
            total: bce + lambda * (mse + beta * kl),
            bce,
            mse,
            kl,
        }
    }

    /// Gradient of the batch loss for the pass `f` (same ε as the forward pass).
    pub fn backward(
        &self,
        f: &Forward,
        x: &[f64],
        y: &[u8],
        eps: Option<&[f64]>,
        lambda: f64,
        beta: f64,
    ) -> Network {
        let n = f.n;
        let nf = n as f64;
        let l = &self.layers;
        let mut g = self.zeros_like();

        // Classifier. Inside the clamp, d BCE / d logit = (p − y) / B; outside it is 0.
        let mut d: Vec<f64> = f
            .p
            .iter()
            .zip(y)
            .map(|(&p, &y)| {
                if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                    (p - f64::from(y)) / nf
                } else {
                    0.0
                }
            })
            .collect();
        for k in (0..self.dnn_widths.len()).rev() {
            let idx = DNN_FIRST + k;
            d = l[idx].backward(&f.dnn_in[k], &d, n, &mut g.layers[idx]);
            if k > 0 {
                relu_mask(&mut d, &f.dnn_pre[k - 1]);
            }
        }
        let mut dz = d;

        // Decoder.
        let scale = lambda * 2.0 / x.len() as f64;
        let dxhat: Vec<f64> = f.xhat.iter().zip(x).map(|(a, b)| scale * (a - b)).collect();
        let mut dh = l[DEC_OUT].backward(&f.dec_h, &dxhat, n, &mut g.layers[DEC_OUT]);
        relu_mask(&mut dh, &f.dec_pre);
        let dz_dec = l[DEC_HIDDEN].backward(&f.z, &dh, n, &mut g.layers[DEC_HIDDEN]);
        dz.iter_mut().zip(&dz_dec).for_each(|(a, b)| *a += b);

        // Reparameterisation and KL.
        let kl_scale = lambda * beta / nf;
        let mut dmu = Vec::with_capacity(dz.len());
        let mut dlv = Vec::with_capacity(dz.len());
        for i in 0..dz.len() {
            let (m, lv) = (f.mu[i], f.logvar[i]);
            dmu.push(dz[i] + kl_scale * m);
            let through_z = eps.map_or(0.0, |e| dz[i] * e[i] * 0.5 * (0.5 * lv).exp());
            dlv.push(through_z + kl_scale * 0.5 * (lv.exp() - 1.0));
        }

        // Encoder.
        let mut dh = l[ENC_MU].backward(&f.enc_h, &dmu, n, &mut g.layers[ENC_MU]);
        let dh_lv = l[ENC_LOGVAR].backward(&f.enc_h, &dlv, n, &mut g.layers[ENC_LOGVAR]);
        dh.iter_mut().zip(&dh_lv).for_each(|(a, b)| *a += b);
        relu_mask(&mut dh, &f.enc_pre);
        l[ENC_HIDDEN].backward(x, &dh, n, &mut g.layers[ENC_HIDDEN]);
        g
    }
}
