//! Convolution building blocks for the embedding and reconstruction networks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

use super::weights::Tensor;

/// Stride-1 "same" convolution with replicate padding.
///
/// Parallel over output channels; each output element is accumulated in a
/// fixed order, so results do not depend on the thread count.
pub fn conv2d(input: &FeatureMap, weight: &Tensor, bias: &Tensor) -> Result<FeatureMap> {
    let (cin, h, w) = input.shape();
    let [cout, wcin, kh, kw] = match weight.dims() {
        &[a, b, c, d] => [a, b, c, d],
        d => {
            return Err(Error::sizing(format!(
                "conv weight must be 4-D, got {:?}",
                d
            )))
        }
    };
    if wcin != cin || kh != kw || kh % 2 == 0 || bias.dims() != [cout] {
        return Err(Error::sizing(format!(
            "conv weight {:?} / bias {:?} incompatible with {} input channels",
            weight.dims(),
            bias.dims(),
            cin
        )));
    }
    let pad = kh / 2;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut padded = vec![0.0f32; cin * ph * pw];
    for c in 0..cin {
        let plane = input.plane(c);
        for y in 0..ph {
            let sy = y.saturating_sub(pad).min(h - 1);
            for x in 0..pw {
                let sx = x.saturating_sub(pad).min(w - 1);
                padded[(c * ph + y) * pw + x] = plane[sy * w + sx];
            }
        }
    }
    let wdata = weight.data();
    let mut out = vec![0.0f32; cout * h * w];
    out.par_chunks_mut(h * w).enumerate().for_each(|(co, acc)| {
        acc.fill(bias.data()[co]);
        for ci in 0..cin {
            let src = &padded[ci * ph * pw..][..ph * pw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wdata[((co * cin + ci) * kh + ky) * kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let row = &src[(y + ky) * pw + kx..][..w];
                        let dst = &mut acc[y * w..][..w];
                        for (d, s) in dst.iter_mut().zip(row) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    });
    FeatureMap::new(cout, h, w, out)
}

pub fn relu(f: &FeatureMap) -> FeatureMap {
    let (c, h, w) = f.shape();
    FeatureMap::from_raw(c, h, w, f.data().iter().map(|&v| v.max(0.0)).collect())
}

pub fn add(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    a.ensure_same_shape(b)?;
    let (c, h, w) = a.shape();
    FeatureMap::new(
        c,
        h,
        w,
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
    )
}

/// Convolution weights and bias looked up together.
pub struct ConvParams<'a> {
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
}

impl ConvParams<'_> {
    pub fn apply(&self, x: &FeatureMap) -> Result<FeatureMap> {
        conv2d(x, self.weight, self.bias)
    }
}

/// `x + conv2(relu(conv1(x)))`
pub fn residual_block(
    x: &FeatureMap,
    conv1: &ConvParams<'_>,
    conv2: &ConvParams<'_>,
) -> Result<FeatureMap> {
    let y = conv2.apply(&relu(&conv1.apply(x)?))?;
    add(x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: Vec<f32>) -> Tensor {
        Tensor::new(dims.to_vec(), data).unwrap()
    }

    #[test]
    fn identity_kernel_is_passthrough() {
        let x = FeatureMap::from_fn(2, 3, 4, |c, i, j| (c * 12 + i * 4 + j) as f32).unwrap();
        let mut wt = vec![0.0; 2 * 2 * 9];
        wt[4] = 1.0; // out 0 <- in 0 center
        wt[(2 + 1) * 9 + 4] = 1.0; // out 1 <- in 1 center
        let y = conv2d(&x, &t(&[2, 2, 3, 3], wt), &t(&[2], vec![0.0, 0.0])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn replicate_padding_on_box_filter() {
        let x = FeatureMap::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv2d(&x, &t(&[1, 1, 3, 3], vec![1.0; 9]), &t(&[1], vec![0.5])).unwrap();
        // top-left window sees rows [0,0,1] and cols [0,0,1]
        assert_eq!(
            y.get(0, 0, 0),
            1.0 * 4.0 + 2.0 * 2.0 + 3.0 * 2.0 + 4.0 + 0.5
        );
    }

    #[test]
    fn rejects_mismatched_weights() {
        let x = FeatureMap::zeros(3, 2, 2);
        let err = conv2d(&x, &t(&[1, 2, 3, 3], vec![0.0; 18]), &t(&[1], vec![0.0]));
        assert!(matches!(err, Err(Error::Sizing(_))));
    }

    #[test]
    fn zero_residual_block_is_identity() {
        let x =
            FeatureMap::from_fn(2, 3, 3, |c, i, j| c as f32 - i as f32 * 0.5 + j as f32).unwrap();
        let w = t(&[2, 2, 3, 3], vec![0.0; 36]);
        let b = t(&[2], vec![0.0; 2]);
        let p = ConvParams {
            weight: &w,
            bias: &b,
        };
        assert_eq!(residual_block(&x, &p, &p).unwrap(), x);
    }
}
