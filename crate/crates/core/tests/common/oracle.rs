//! Independent brute-force recomputations used as test oracles.

use stressbench::model::*;
use stressbench::prosody::Contours;
use stressbench::rng::GaussianStream;

/// Independent recomputation of one syllable's acoustic statistics from the
/// raw frame contours.
pub fn brute_force(c: &Contours, start: f64, end: f64, syl_dur: f64, nuc_dur: f64, word_dur: f64) -> Vec<f64> {
    let idx: Vec<usize> = (0..c.times.len())
        .filter(|&i| c.times[i] >= start && c.times[i] < end)
        .collect();
    let n = idx.len() as f64;
    let s: Vec<f64> = idx.iter().map(|&i| c.sonority[i]).collect();
    let e: Vec<f64> = idx.iter().map(|&i| c.energy[i]).collect();
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let first_argmax = |v: &[f64]| {
        let m = max(v);
        v.iter().position(|&x| x == m).unwrap()
    };
    let mut out = Vec::new();
    let sm = mean(&s);
    out.push(max(&s));
    out.push(sm);
    out.push((s.iter().map(|x| (x - sm).powi(2)).sum::<f64>() / n).sqrt());
    out.push(max(&s) - min(&s));
    out.push((first_argmax(&s) as f64 + 0.5) / n);
    let diffs: Vec<f64> = s.windows(2).map(|w| (w[1] - w[0]) / c.hop_s).collect();
    out.push(diffs.iter().cloned().fold(0.0, f64::max));
    out.push(diffs.iter().map(|d| -d).fold(0.0, f64::max));

    let v: Vec<usize> = idx.iter().copied().filter(|&i| c.voicing[i]).collect();
    if v.is_empty() {
        out.extend([0.0; 5]);
    } else {
        let f: Vec<f64> = v.iter().map(|&i| c.f0[i]).collect();
        let t: Vec<f64> = v.iter().map(|&i| c.times[i]).collect();
        out.push(max(&f));
        out.push(mean(&f));
        out.push(max(&f) - min(&f));
        out.push((idx.iter().position(|&i| i == v[first_argmax(&f)]).unwrap() as f64 + 0.5) / n);
        // Slope via the normal equations.
        let k = f.len() as f64;
        let (st, sf) = (t.iter().sum::<f64>(), f.iter().sum::<f64>());
        let stt: f64 = t.iter().map(|x| x * x).sum();
        let stf: f64 = t.iter().zip(&f).map(|(a, b)| a * b).sum();
        let den = k * stt - st * st;
        out.push(if f.len() < 2 || den.abs() < 1e-300 { 0.0 } else { (k * stf - st * sf) / den });
    }
    out.push(max(&e));
    out.push(mean(&e));
    out.push(max(&e) - min(&e));
    out.push(syl_dur);
    out.push(nuc_dur);
    out.push(syl_dur / word_dur);
    out.push(v.len() as f64 / n);
    out
}

pub fn tiny(seed: u64) -> Network {
    Network::new(6, 5, 3, &[8, 4, 4, 2, 1], seed)
}

/// Tiny network with non-zero biases. With the zero biases of a fresh init, a
/// row whose ReLU inputs all die sits exactly on a kink of the next layer,
/// where finite differences only see a one-sided slope.
pub fn tiny_off_kink(seed: u64) -> Network {
    let mut net = tiny(seed);
    let mut g = GaussianStream::new(seed + 1000);
    for l in &mut net.layers {
        l.b.iter_mut().for_each(|b| *b = 0.2 * g.next_gaussian());
    }
    net
}

pub fn batch(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>, Vec<f64>) {
    let mut g = GaussianStream::new(seed);
    let x = g.take_vec(n * 6);
    let y = (0..n).map(|i| (i % 2) as u8).collect();
    let eps = g.take_vec(n * 3);
    (x, y, eps)
}

pub fn total(net: &Network, x: &[f64], y: &[u8], eps: Option<&[f64]>, lambda: f64, beta: f64) -> f64 {
    let f = net.forward(x, y.len(), eps);
    net.loss(&f, x, y, lambda, beta).total
}

/// Relative error with a 1e-5 floor on the denominator: central differences
/// with step 1e-5 carry ~1e-10 absolute rounding error, which would dominate
/// the relative error of gradients much smaller than the floor.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

pub fn check_gradients(net: &Network, x: &[f64], y: &[u8], eps: Option<&[f64]>, lambda: f64, beta: f64) -> f64 {
    let f = net.forward(x, y.len(), eps);
    let g = net.backward(&f, x, y, eps, lambda, beta);
    let analytic: Vec<f64> = g.tensors().flatten().copied().collect();
    let mut worst = 0.0f64;
    let mut k = 0;
    let h = 1e-5;
    let count: usize = net.tensors().map(Vec::len).sum();
    for t in 0..net.tensors().count() {
        for i in 0..net.tensors().nth(t).unwrap().len() {
            let mut plus = net.clone();
            plus.tensors_mut().nth(t).unwrap()[i] += h;
            let mut minus = net.clone();
            minus.tensors_mut().nth(t).unwrap()[i] -= h;
            let numeric = (total(&plus, x, y, eps, lambda, beta) - total(&minus, x, y, eps, lambda, beta)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k], numeric));
            k += 1;
        }
    }
    assert_eq!(k, count);
    worst
}


/// Loss terms recomputed element by element from a forward pass.
pub fn loss_terms(f: &Forward, x: &[f64], y: &[u8], lambda: f64, beta: f64) -> LossTerms {
    let n = f.n;
    let mut bce = 0.0;
    for i in 0..n {
        let p = f.p[i].clamp(1e-7, 1.0 - 1e-7);
        let yi = f64::from(y[i]);
        bce -= yi * p.ln() + (1.0 - yi) * (1.0 - p).ln();
    }
    bce /= n as f64;
    let mut mse = 0.0;
    for i in 0..x.len() {
        mse += (f.xhat[i] - x[i]).powi(2);
    }
    mse /= x.len() as f64;
    let mut kl = 0.0;
    for i in 0..f.mu.len() {
        let (m, lv) = (f.mu[i], f.logvar[i]);
        kl += lv.exp() + m * m - 1.0 - lv;
    }
    kl *= 0.5 / n as f64;
    LossTerms {
        total: bce + lambda * (mse + beta * kl),
        bce,
        mse,
        kl,
    }
}
