use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{NnError, Real, Tensor};

fn as_matrix(shape: &[usize]) -> Result<(usize, usize), NnError> {
    if shape.len() < 2 || shape.contains(&0) {
        return Err(NnError::Shape(format!(
            "initialiser needs a non-empty 2-D (or higher) shape, got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1..].iter().product()))
}

/// Seeded orthogonal matrix scaled by `gain`. Shapes beyond 2-D are treated
/// as `[shape[0], prod(rest)]`. Columns are orthonormal when rows >= cols,
/// rows are orthonormal otherwise.
pub fn orthogonal_init<T: Real>(
    shape: &[usize],
    gain: f64,
    seed: u64,
) -> Result<Tensor<T>, NnError> {
    let (rows, cols) = as_matrix(shape)?;
    if gain == 0.0 {
        return Ok(Tensor::zeros(shape.to_vec()));
    }
    let (long, short) = (rows.max(cols), rows.min(cols));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // `short` vectors of length `long`, orthonormalised by Gram-Schmidt
    // (two passes for numerical orthogonality).
    let mut q: Vec<Vec<f64>> = (0..short)
        .map(|_| {
            (0..long)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    for j in 0..short {
        for _ in 0..2 {
            for i in 0..j {
                let proj: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
                let qi = q[i].clone();
                for (x, y) in q[j].iter_mut().zip(&qi) {
                    *x -= proj * y;
                }
            }
        }
        let norm = q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(NnError::Shape(
                "degenerate random draw in orthogonal init".into(),
            ));
        }
        q[j].iter_mut().for_each(|x| *x /= norm);
    }
    let data = (0..rows * cols)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            let v = if rows >= cols { q[c][r] } else { q[r][c] };
            T::of(gain * v)
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` with `fan_in = shape[0]`.
pub fn uniform_init<T: Real>(shape: &[usize], seed: u64) -> Result<Tensor<T>, NnError> {
    let (rows, cols) = as_matrix(shape)?;
    let bound = 1.0 / (rows as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(w: &Tensor<f64>, by_columns: bool) -> Vec<Vec<f64>> {
        let (r, c) = (w.shape()[0], w.shape()[1]);
        let d = w.data();
        let n = if by_columns { c } else { r };
        let m = if by_columns { r } else { c };
        let at = |i: usize, k: usize| {
            if by_columns {
                d[k * c + i]
            } else {
                d[i * c + k]
            }
        };
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..m).map(|k| at(i, k) * at(j, k)).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn square_is_orthogonal_with_gain() {
        let gain = 1.7;
        let w: Tensor<f64> = orthogonal_init(&[16, 16], gain, 3).unwrap();
        let g = gram(&w, true);
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { gain * gain } else { 0.0 };
                assert!((g[i][j] - want).abs() < 1e-6, "({i},{j}) = {}", g[i][j]);
            }
        }
    }

    #[test]
    fn rectangular_shapes() {
        let tall: Tensor<f64> = orthogonal_init(&[20, 5], 1.0, 9).unwrap();
        let wide: Tensor<f64> = orthogonal_init(&[5, 20], 1.0, 9).unwrap();
        for (w, cols) in [(&tall, true), (&wide, false)] {
            let g = gram(w, cols);
            for (i, row) in g.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert!((v - f64::from(u8::from(i == j))).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn seeded_and_degenerate_cases() {
        let a: Tensor<f64> = orthogonal_init(&[8, 4], 1.0, 42).unwrap();
        let b: Tensor<f64> = orthogonal_init(&[8, 4], 1.0, 42).unwrap();
        assert_eq!(a, b);
        let z: Tensor<f64> = orthogonal_init(&[8, 4], 0.0, 42).unwrap();
        assert!(z.data().iter().all(|&x| x == 0.0));
        assert!(orthogonal_init::<f64>(&[8], 1.0, 0).is_err());
        assert!(orthogonal_init::<f64>(&[0, 3], 1.0, 0).is_err());
    }
}
