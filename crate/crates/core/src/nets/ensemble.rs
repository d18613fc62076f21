use crate::autodiff::{Real, Tensor};
use crate::error::Result;

/// Size of the dihedral group of the square.
pub const DIHEDRAL_COUNT: usize = 8;

/// 90-degree counter-clockwise rotation of every channel.
fn rot90<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = t.chw().expect("channels-first tensor");
    let src = t.data();
    let mut out = vec![T::ZERO; src.len()];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for i in 0..w {
            for j in 0..h {
                dst[i * h + j] = plane[j * w + (w - 1 - i)];
            }
        }
    }
    Tensor::new(vec![c, w, h], out).expect("same size")
}

fn flip<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = t.chw().expect("channels-first tensor");
    let src = t.data();
    let mut out = vec![T::ZERO; src.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ch * h + y) * w + x] = src[(ch * h + y) * w + (w - 1 - x)];
            }
        }
    }
    Tensor::new(vec![c, h, w], out).expect("same size")
}

/// Element `g` of the dihedral group: a horizontal flip when `g >= 4`,
/// followed by `g % 4` quarter turns.
pub fn dihedral<T: Real>(t: &Tensor<T>, g: usize) -> Tensor<T> {
    let mut y = if g % DIHEDRAL_COUNT >= 4 {
        flip(t)
    } else {
        t.clone()
    };
    for _ in 0..g % 4 {
        y = rot90(&y);
    }
    y
}

pub fn dihedral_inverse<T: Real>(t: &Tensor<T>, g: usize) -> Tensor<T> {
    let mut y = t.clone();
    for _ in 0..(4 - g % 4) % 4 {
        y = rot90(&y);
    }
    if g % DIHEDRAL_COUNT >= 4 {
        flip(&y)
    } else {
        y
    }
}

fn pairwise_sum<T: Real>(v: &[T]) -> T {
    match v.len() {
        0 => T::ZERO,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Runs `model` on the 8 flips and rotations of `x`, maps each prediction
/// back and averages them. The 8 values of each entry are sorted and summed
/// pairwise, so the result does not depend on which transform produced which
/// value, and 8 equal values average to exactly that value.
pub fn self_ensemble_predict<T, F>(x: &Tensor<T>, model: F) -> Result<Tensor<T>>
where
    T: Real,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    let preds = (0..DIHEDRAL_COUNT)
        .map(|g| Ok(dihedral_inverse(&model(&dihedral(x, g))?, g)))
        .collect::<Result<Vec<_>>>()?;
    let shape = preds[0].shape().to_vec();
    let inv = T::ONE / T::from_usize(DIHEDRAL_COUNT);
    let mut out = vec![T::ZERO; preds[0].len()];
    let mut vals = [T::ZERO; DIHEDRAL_COUNT];
    for (i, o) in out.iter_mut().enumerate() {
        for (v, p) in vals.iter_mut().zip(&preds) {
            *v = p.data()[i];
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        *o = pairwise_sum(&vals) * inv;
    }
    Tensor::new(shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::new(vec![c, h, w], (0..c * h * w).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn constant_predictions_average_exactly() {
        let x = ramp(1, 4, 3);
        for c in [0.37, 0.1, 1.0 / 3.0, 7.3e-5] {
            let y = self_ensemble_predict(&x, |t| Ok(Tensor::full(t.shape(), c))).unwrap();
            assert!(y.data().iter().all(|v| *v == c), "c={c}");
        }
    }

    #[test]
    fn inverse_undoes_every_transform() {
        let x = ramp(2, 3, 5);
        for g in 0..DIHEDRAL_COUNT {
            assert_eq!(dihedral_inverse(&dihedral(&x, g), g), x, "g={g}");
        }
    }

    #[test]
    fn transforms_are_distinct_and_rotations_swap_dims() {
        let x = ramp(1, 3, 3);
        let all: Vec<_> = (0..8).map(|g| dihedral(&x, g)).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(all[i], all[j]);
            }
        }
        assert_eq!(dihedral(&ramp(1, 2, 5), 1).shape(), &[1, 5, 2]);
        assert_eq!(rot90(&rot90(&rot90(&rot90(&x)))), x);
    }

    #[test]
    fn constant_model_passes_through() {
        let x = ramp(3, 4, 6);
        let c = Tensor::full(&[2, 4, 6], 0.3);
        let out = self_ensemble_predict(&x, |t| {
            let (_, h, w) = t.chw()?;
            Ok(Tensor::full(&[2, h, w], 0.3))
        })
        .unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn equivariant_for_position_dependent_model() {
        // Not equivariant on its own: weights depend on the absolute position.
        let model = |t: &Tensor<f64>| -> Result<Tensor<f64>> {
            let (c, h, w) = t.chw()?;
            let mut out = t.clone();
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        out.data_mut()[(ch * h + y) * w + x] *=
                            1.0 + 0.1 * y as f64 + 0.01 * x as f64;
                    }
                }
            }
            Ok(out)
        };
        let x = Tensor::new(
            vec![2, 3, 4],
            (0..24).map(|v| (v as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        let e = self_ensemble_predict(&x, model).unwrap();
        for g in 0..8 {
            let lhs = self_ensemble_predict(&dihedral(&x, g), model).unwrap();
            assert_eq!(lhs, dihedral(&e, g), "g={g}");
        }
    }
}
