//! Finite-difference check of the full super-resolution composite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapt::{adapt_batch, AdaptConfig, AdaptFlags, AdaptNodes, AdaptationParams};
use crate::backbone::{features, reconstruct, BackboneConfig, BackboneNodes, BackboneParams};
use crate::error::Result;
use crate::nn::{check_gradients, Coords, GradCheckReport, Graph, ParamSet, Tensor};

/// Sizes of the network under test; small enough for f64 probing.
#[derive(Clone, Copy, Debug)]
pub struct CompositeCheck {
    pub angular: usize,
    /// LR patch side.
    pub size: usize,
    pub width: usize,
    pub sas_width: usize,
    pub flags: AdaptFlags,
    /// Coordinates probed per parameter tensor.
    pub coords_per_tensor: usize,
    /// Largest finite-difference step.
    pub eps: f64,
}

impl Default for CompositeCheck {
    fn default() -> Self {
        CompositeCheck {
            angular: 2,
            size: 8,
            width: 4,
            sas_width: 3,
            flags: AdaptFlags::default(),
            coords_per_tensor: 6,
            eps: 1e-3,
        }
    }
}

fn random_like(t: &Tensor<f64>, scale: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(t.shape().to_vec(), |_| rng.random_range(-scale..scale))
}

/// Gradient of `L1(F_up(adapt(F_feat(x))), y)` with respect to the input and
/// every parameter, against central differences. The fusion output conv gets
/// random weights so that every path carries gradient.
pub fn composite_gradient_check(check: &CompositeCheck, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bb_cfg = BackboneConfig {
        image_channels: 1,
        width: check.width,
        blocks: 1,
        scale: 2,
    };
    let ad_cfg = AdaptConfig::new(check.angular, check.width, check.sas_width, check.flags);
    let backbone = BackboneParams::<f32>::init(bb_cfg, &mut rng)?.cast::<f64>();
    let adapt = AdaptationParams::<f32>::init(ad_cfg, &mut rng)?.cast::<f64>();

    let n = ad_cfg.views();
    let s = check.size;
    let x = Tensor::from_fn(vec![n, 1, s, s], |_| rng.random_range(0.0..1.0));
    let y = Tensor::from_fn(vec![n, 1, 2 * s, 2 * s], |_| rng.random_range(0.0..1.0));
    let bb_tensors: Vec<Tensor<f64>> = backbone.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let mut ad_tensors: Vec<Tensor<f64>> = adapt.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let k = ad_tensors.len();
    ad_tensors[k - 2] = random_like(&ad_tensors[k - 2], 0.3, &mut rng);
    ad_tensors[k - 1] = random_like(&ad_tensors[k - 1], 0.1, &mut rng);

    let nb = bb_tensors.len();
    let mut inputs = vec![x];
    inputs.extend(bb_tensors);
    inputs.extend(ad_tensors);

    check_gradients(
        |tape, vars| {
            let bb = BackboneNodes::from_flat(bb_cfg, &vars[1..1 + nb])?;
            let ad = AdaptNodes::from_flat(ad_cfg, &vars[1 + nb..])?;
            let f = features(tape, &bb, &vars[0])?;
            let f = adapt_batch(tape, &ad, &f)?;
            let out = reconstruct(tape, &bb, &f)?;
            let target = tape.constant(y.clone());
            tape.l1_loss(out, target)
        },
        &inputs,
        check.eps,
        Coords::Sample(check.coords_per_tensor),
        &mut rng,
    )
}
