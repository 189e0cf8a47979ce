//! Finite-difference reports for each differentiable op, in f64.

use lfsafa::nn::{check_gradients, Coords, GradCheckReport, Graph, Tape, Tensor, Var};
use lfsafa::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-4;
const EPS: f64 = 1e-3;

fn t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, rng)
}

/// Checks `dot(op(inputs), w)` for a fixed random `w`.
fn check_op<F>(inputs: Vec<Tensor<f64>>, out_shape: &[usize], seed: u64, op: F) -> GradCheckReport
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t(out_shape, &mut rng);
    check_gradients(
        |tape, v| {
            let y = op(tape, v)?;
            tape.dot(y, w.clone())
        },
        &inputs,
        EPS,
        Coords::All,
        &mut rng,
    )
    .unwrap()
}

/// One report per op on random inputs drawn from `seed`.
pub fn op_reports(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let x = t(&[2, 3, 4, 5], &mut rng);
    let y = t(&[2, 3, 4, 5], &mut rng);
    let k3 = t(&[2, 3, 3, 3], &mut rng);
    let k1 = t(&[4, 3, 1, 1], &mut rng);
    let b2 = t(&[2], &mut rng);
    let b4 = t(&[4], &mut rng);
    let z = t(&[2, 8, 3, 2], &mut rng);
    let a = t(&[3, 4, 4], &mut rng);
    let b = t(&[3, 4, 4], &mut rng);
    let target = t(&[2, 3, 4, 5], &mut rng);

    let mut out = vec![
        (
            "conv3x3",
            check_op(vec![x.clone(), k3, b2], &[2, 2, 4, 5], seed, |g, v| g.conv2d(&v[0], &v[1], &v[2])),
        ),
        (
            "conv1x1",
            check_op(vec![x.clone(), k1, b4], &[2, 4, 4, 5], seed, |g, v| g.conv2d(&v[0], &v[1], &v[2])),
        ),
        ("relu", check_op(vec![x.clone()], &[2, 3, 4, 5], seed, |g, v| Ok(g.relu(&v[0])))),
        ("add", check_op(vec![x.clone(), y.clone()], &[2, 3, 4, 5], seed, |g, v| g.add(&v[0], &v[1]))),
        ("sub", check_op(vec![x.clone(), y.clone()], &[2, 3, 4, 5], seed, |g, v| g.sub(&v[0], &v[1]))),
        (
            "concat",
            check_op(vec![x.clone(), y], &[2, 6, 4, 5], seed, |g, v| g.concat_channels(&[v[0], v[1]])),
        ),
        ("pixel_shuffle", check_op(vec![z], &[2, 2, 6, 4], seed, |g, v| g.pixel_shuffle(&v[0], 2))),
        ("stack", check_op(vec![a.clone(), b], &[2, 3, 4, 4], seed, |g, v| g.stack(&[v[0], v[1]]))),
        ("select", check_op(vec![x.clone()], &[3, 4, 5], seed, |g, v| g.select(&v[0], 1))),
        ("repeat", check_op(vec![a], &[3, 3, 4, 4], seed, |g, v| g.repeat(&v[0], 3))),
        (
            "gather",
            check_op(vec![x.clone()], &[5, 3, 4, 5], seed, |g, v| g.gather(&v[0], &[1, 0, 1, 1, 0])),
        ),
        ("scale", check_op(vec![x.clone()], &[2, 3, 4, 5], seed, |g, v| Ok(g.scale(v[0], 2.5)))),
    ];
    let l1 = check_gradients(
        |g, v| {
            let tv = g.constant(target.clone());
            g.l1_loss(v[0], tv)
        },
        &[x.clone()],
        EPS,
        Coords::All,
        &mut rng,
    )
    .unwrap();
    out.push(("l1", l1));
    let sum = check_gradients(|g, v| Ok(g.sum(v[0])), &[x], EPS, Coords::All, &mut rng).unwrap();
    out.push(("sum", sum));
    out
}
