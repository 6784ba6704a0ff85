//! Row-major dense kernels. Each output row depends only on the matching
//! input row, so results do not depend on batch composition.

/// `a (n×k) · b (k×m)`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `aᵀ · b` for `a (n×k)`, `b (n×m)`, giving `k×m`.
pub fn matmul_tn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), n * m);
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a · bᵀ` for `a (n×m)`, `b (k×m)`, giving `n×k`.
pub fn matmul_nt(a: &[f64], b: &[f64], n: usize, m: usize, k: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * m);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            out[i * k + p] = arow.iter().zip(&b[p * m..(p + 1) * m]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Column sums of an `n×m` matrix.
pub fn col_sums(a: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for i in 0..n {
        for (o, v) in out.iter_mut().zip(&a[i * m..(i + 1) * m]) {
            *o += v;
        }
    }
    out
}
