#![allow(dead_code)]

use clickcfa_neural::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces any node to a scalar with fixed random coefficients so every
/// output coordinate contributes to the gradient.
pub fn project(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let mut r = rng(seed);
    let c = random_tensor(tape.shape(y), &mut r);
    let c = tape.constant(c);
    let m = tape.mul(y, c).unwrap();
    tape.sum(m)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Compares reverse-mode gradients of `f` with central differences over
/// every coordinate of every input. Returns (max relative error, coordinates checked).
pub fn check_grad<F>(inputs: &[Tensor], f: F) -> (f64, usize)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let l = f(&mut t, &vs);
        t.value(l).item()
    };

    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] = input.data()[i] + FD_STEP;
            let up = eval(&xs);
            xs[k].data_mut()[i] = input.data()[i] - FD_STEP;
            let down = eval(&xs);
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[k].data()[i], numeric));
            count += 1;
        }
    }
    (worst, count)
}
