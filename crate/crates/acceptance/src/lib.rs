//! Brute-force reference counts used by the acceptance suite.
//!
//! These walk the convolution loop nest element by element instead of
//! multiplying dimensions, so they share no arithmetic with the engine.

use prunekit::{LayerKind, LayerSpec};

/// Multiply-accumulates of a resolved conv layer, counted one at a time over
/// output positions, kernel window, input channels and filters. Window taps
/// that land in zero padding are counted, as the dense formulation does.
pub fn conv_macs(layer: &LayerSpec) -> u64 {
    assert_eq!(layer.kind, LayerKind::Conv, "{} is not a conv", layer.id);
    let shape = layer.shape.expect("resolved layer");
    let k = layer.kernel_size.expect("conv kernel");
    let (s, p) = (layer.stride as isize, layer.padding as isize);
    let (w_in, h_in) = (shape.in_spatial.width as isize, shape.in_spatial.height as isize);
    let mut macs = 0u64;
    for _co in 0..shape.out_channels {
        for oy in 0..shape.out_spatial.height as isize {
            for ox in 0..shape.out_spatial.width as isize {
                for ky in 0..k as isize {
                    let iy = oy * s + ky - p;
                    assert!(iy >= -p && iy < h_in + p);
                    for kx in 0..k as isize {
                        let ix = ox * s + kx - p;
                        assert!(ix >= -p && ix < w_in + p);
                        for _ci in 0..shape.in_channels {
                            macs += 1;
                        }
                    }
                }
            }
        }
    }
    macs
}

/// Trainable scalars of a resolved conv layer, counted per weight-tensor
/// element plus one per filter when biased.
pub fn conv_params(layer: &LayerSpec) -> u64 {
    let shape = layer.shape.expect("resolved layer");
    let k = layer.kernel_size.expect("conv kernel");
    let mut n = 0u64;
    for _co in 0..shape.out_channels {
        for _ci in 0..shape.in_channels {
            for _ky in 0..k {
                for _kx in 0..k {
                    n += 1;
                }
            }
        }
        if layer.has_bias {
            n += 1;
        }
    }
    n
}
