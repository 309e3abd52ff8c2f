//! Inner loops. Written so the compiler can vectorise them without
//! reassociating floating-point sums (fixed eight-lane accumulation).

use super::Real;

#[inline]
pub fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `[rows, cols]` to `[cols, rows]`.
pub fn transpose<T: Real>(m: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut t = vec![T::zero(); m.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

/// `y[n, :] = b + x[n, :] · w` with `w` stored `[inputs, outputs]`.
pub fn matmul_bias<T: Real>(x: &[T], w: &[T], b: &[T], rows: usize, inputs: usize, y: &mut [T]) {
    let outputs = b.len();
    for n in 0..rows {
        let yr = &mut y[n * outputs..(n + 1) * outputs];
        yr.copy_from_slice(b);
        let xr = &x[n * inputs..(n + 1) * inputs];
        for (i, &xi) in xr.iter().enumerate() {
            if xi != T::zero() {
                axpy(yr, xi, &w[i * outputs..(i + 1) * outputs]);
            }
        }
    }
}

/// Accumulates `dw += xᵀ · dy` and `db += Σ dy`.
pub fn accumulate_weight_grads<T: Real>(
    x: &[T],
    dy: &[T],
    rows: usize,
    inputs: usize,
    dw: &mut [T],
    db: &mut [T],
) {
    let outputs = db.len();
    let mut dwt = vec![T::zero(); inputs * outputs];
    for n in 0..rows {
        let dyr = &dy[n * outputs..(n + 1) * outputs];
        let xr = &x[n * inputs..(n + 1) * inputs];
        for (o, &g) in dyr.iter().enumerate() {
            if g != T::zero() {
                db[o] += g;
                axpy(&mut dwt[o * inputs..(o + 1) * inputs], g, xr);
            }
        }
    }
    for i in 0..inputs {
        for o in 0..outputs {
            dw[i * outputs + o] += dwt[o * inputs + i];
        }
    }
}

/// `dx[n, i] = dy[n, :] · w[i, :]`.
pub fn input_grads<T: Real>(
    dy: &[T],
    w: &[T],
    rows: usize,
    inputs: usize,
    outputs: usize,
    dx: &mut [T],
) {
    let wt = transpose(w, inputs, outputs);
    for n in 0..rows {
        let dyr = &dy[n * outputs..(n + 1) * outputs];
        let dxr = &mut dx[n * inputs..(n + 1) * inputs];
        dxr.fill(T::zero());
        for (o, &g) in dyr.iter().enumerate() {
            if g != T::zero() {
                axpy(dxr, g, &wt[o * inputs..(o + 1) * inputs]);
            }
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
