//! Finite-difference gradient checking on [`Tape`]s.
//!
//! Graphs built from convolutions, ReLU and L1 are piecewise linear, so a
//! central difference is exact unless the stencil crosses a kink. The checker
//! detects crossings through the tape's kink signature and halves the step on
//! each side independently until the probe stays in the linear region of the
//! base point. The secant between the two probes is then exact, and a wider
//! span only reduces roundoff, so `eps` is the largest step tried per side.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::graph::{Graph, Tape, Var};
use crate::nn::tensor::Tensor;

/// Relative error with a `max(|a|, |b|, 1e-8)` denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates whose step had to be reduced to avoid a kink.
    pub refined: usize,
    /// Coordinates sitting on a kink at every step size tried; not compared.
    pub skipped: usize,
}

/// Which coordinates of each input to probe.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    /// At most this many distinct coordinates per input, drawn at random.
    Sample(usize),
}

/// Halvings tried before a coordinate is skipped (about 1e-12 of `eps`).
const MAX_REFINEMENTS: u32 = 40;

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_kink_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t, true)).collect();
    let out = f(&mut tape, &vars)?;
    Ok((tape.get(out).data()[0], tape.kink_signature()))
}

/// Compares tape gradients of the scalar `f` against finite differences at `inputs`.
pub fn check_gradients<F>(
    f: F,
    inputs: &[Tensor<f64>],
    eps: f64,
    coords: Coords,
    rng: &mut impl Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    assert!(eps > 0.0, "eps must be positive");
    let mut tape = Tape::with_kink_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t, true)).collect();
    let out = f(&mut tape, &vars)?;
    let base_signature = tape.kink_signature();
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport::default();
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("every input is a trainable leaf").clone();
        let len = inputs[which].len();
        let picked: Vec<usize> = match coords {
            Coords::All => (0..len).collect(),
            Coords::Sample(k) if k >= len => (0..len).collect(),
            Coords::Sample(k) => sample(rng, len, k).into_vec(),
        };
        for coord in picked {
            let original = inputs[which].data()[coord];
            let mut sides = [None, None];
            let mut reduced = false;
            for (side, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut step = eps;
                for attempt in 0..=MAX_REFINEMENTS {
                    probe[which].data_mut()[coord] = original + sign * step;
                    let (value, sig) = evaluate(&f, &probe)?;
                    if sig == base_signature {
                        reduced |= attempt > 0;
                        sides[side] = Some((step, value));
                        break;
                    }
                    step *= 0.5;
                }
            }
            probe[which].data_mut()[coord] = original;
            let [Some((up, plus)), Some((down, minus))] = sides else {
                report.skipped += 1;
                continue;
            };
            if reduced {
                report.refined += 1;
            }
            let numeric = (plus - minus) / (up + down);
            let err = relative_error(analytic.data()[coord], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((which, coord));
            }
        }
    }
    Ok(report)
}

/// Maximum relative gradient error of a scalar function of one tensor, probing every coordinate.
pub fn gradient_check<F>(f: F, point: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let report = check_gradients(|t, v| f(t, v[0]), std::slice::from_ref(point), eps, Coords::All, &mut rng)?;
    Ok(report.max_rel_error)
}
