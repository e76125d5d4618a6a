use crate::error::{Error, Result};
use crate::numeric::{Scalar, Tensor};

/// Sobel gradient magnitude with replicate borders, rescaled so the
/// strongest response is 1.
///
/// A constant image has no gradient and maps to all zeros.
pub fn sobel_edge<T: Scalar>(gray: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = match *gray.shape() {
        [1, h, w] => (h, w),
        ref s => return Err(Error::contract("sobel_edge", format!("expected a 1 x H x W image, got {s:?}"))),
    };
    if h < 3 || w < 3 {
        return Err(Error::contract(
            "sobel_edge",
            format!("image is {h}x{w}, need at least 3x3"),
        ));
    }
    let px = |i: isize, j: isize| -> f64 {
        let i = i.clamp(0, h as isize - 1) as usize;
        let j = j.clamp(0, w as isize - 1) as usize;
        gray.data()[i * w + j].as_f64()
    };
    let mut mag = vec![0.0f64; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let gx = (px(i - 1, j + 1) + 2.0 * px(i, j + 1) + px(i + 1, j + 1))
                - (px(i - 1, j - 1) + 2.0 * px(i, j - 1) + px(i + 1, j - 1));
            let gy = (px(i + 1, j - 1) + 2.0 * px(i + 1, j) + px(i + 1, j + 1))
                - (px(i - 1, j - 1) + 2.0 * px(i - 1, j) + px(i - 1, j + 1));
            mag[i as usize * w + j as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    let max = mag.iter().fold(0.0f64, |m, &v| m.max(v));
    let denom = max.max(1e-8);
    Tensor::from_vec(
        &[1, h, w],
        mag.into_iter().map(|v| T::of(v / denom)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Tensor<f64> {
        let data = (0..h * w).map(|k| f(k / w, k % w)).collect::<Vec<_>>();
        Tensor::from_f64(&[1, h, w], &data).unwrap()
    }

    #[test]
    fn constant_image_has_no_edges() {
        let e = sobel_edge(&image(8, 8, |_, _| 0.7)).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_lights_the_two_adjacent_columns() {
        let (h, w) = (6, 10);
        let e = sobel_edge(&image(h, w, |_, j| if j < w / 2 { 0.0 } else { 1.0 })).unwrap();
        for i in 0..h {
            for j in 0..w {
                let v = e.data()[i * w + j];
                if j == w / 2 - 1 || j == w / 2 {
                    assert_eq!(v, 1.0, "({i},{j})");
                } else {
                    assert_eq!(v, 0.0, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn rejects_tiny_images() {
        assert!(sobel_edge(&image(2, 5, |_, _| 0.0)).is_err());
        assert!(sobel_edge(&Tensor::<f64>::zeros(&[5, 5])).is_err());
    }

    #[test]
    fn nonconstant_image_peaks_at_one() {
        let e = sobel_edge(&image(9, 7, |i, j| ((i * 7 + j * 3) % 5) as f64 / 4.0)).unwrap();
        let max = e.data().iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
    }
}
