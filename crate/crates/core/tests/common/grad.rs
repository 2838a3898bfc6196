//! Central finite-difference machinery and one generator per tape op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqmimo_core::autodiff::{Tape, Var};
use vqmimo_core::tensor::{Init, Tensor};

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar `Σ w ⊙ build(inputs)` with fixed random weights.
fn objective(
    inputs: &[Tensor<f64>],
    weights: &Option<Tensor<f64>>,
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
    track: bool,
) -> (Tape<f64>, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(track)))
        .collect();
    let y = build(&mut tape, &vars);
    let loss = match weights {
        Some(w) => {
            let w = tape.constant(w.clone());
            let p = tape.mul(y, w).unwrap();
            tape.sum(p)
        }
        None => y,
    };
    (tape, vars, loss)
}

/// Largest relative error between the tape gradient and central
/// differences over every input element.
fn max_rel_err(
    inputs: Vec<Tensor<f64>>,
    seed: u64,
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
) -> f64 {
    let (probe, _, out) = objective(&inputs, &None, build, false);
    let out_shape = probe.shape(out).to_vec();
    let weights = if out_shape.iter().product::<usize>() == 1 && out_shape.len() <= 1 {
        None
    } else {
        let w = Tensor::create(
            &out_shape,
            Init::Uniform {
                seed,
                low: 0.5,
                high: 1.5,
            },
        )
        .unwrap();
        Some(w)
    };
    let (mut tape, vars, loss) = objective(&inputs, &weights, build, true);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).unwrap().to_vec())
        .collect();

    let eval = |inputs: &[Tensor<f64>]| {
        let (t, _, l) = objective(inputs, &weights, build, false);
        t.value(l).data()[0]
    };
    let mut worst: f64 = 0.0;
    for (i, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

pub type Build = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;
pub type Maker = Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Build)>;

/// Worst relative error of `make` over [`INSTANCES`] random instances.
pub fn worst(name: &str, make: &Maker) -> f64 {
    (0..INSTANCES)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + name.len() as u64);
            let (inputs, build) = make(&mut rng);
            max_rel_err(inputs, seed, &*build)
        })
        .fold(0.0, f64::max)
}

fn rand_vec(rng: &mut ChaCha8Rng, max: usize) -> Tensor<f64> {
    let n = dims(rng, 1, max);
    rand_tensor(rng, &[n])
}

fn rand_rows(rng: &mut ChaCha8Rng, max: usize, cols: usize) -> Tensor<f64> {
    let n = dims(rng, 1, max);
    rand_tensor(rng, &[n, cols])
}

fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

fn case<F>(name: &'static str, f: F) -> (&'static str, Maker)
where
    F: Fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Build) + 'static,
{
    (name, Box::new(f))
}

/// Every differentiable op, plus a composite conv stack.
pub fn cases() -> Vec<(&'static str, Maker)> {
    let mut out = vec![
        case("matmul", |rng| {
            let (m, k, n) = (dims(rng, 1, 4), dims(rng, 1, 5), dims(rng, 1, 4));
            (
                vec![rand_tensor(rng, &[m, k]), rand_tensor(rng, &[k, n])],
                Box::new(|t, v| t.matmul(v[0], v[1]).unwrap()),
            )
        }),
        case("conv2d", |rng| {
            let (n, c, co) = (dims(rng, 1, 2), dims(rng, 1, 3), dims(rng, 1, 3));
            let (kh, kw) = (dims(rng, 1, 3), dims(rng, 1, 3));
            let (stride, pad) = (dims(rng, 1, 2), dims(rng, 0, 1));
            let (h, w) = (dims(rng, kh.max(2), 6), dims(rng, kw.max(2), 5));
            (
                vec![
                    rand_tensor(rng, &[n, c, h, w]),
                    rand_tensor(rng, &[co, c, kh, kw]),
                ],
                Box::new(move |t, v| t.conv2d(v[0], v[1], stride, pad).unwrap()),
            )
        }),
        case("conv_transpose2d", |rng| {
            let (n, ci, co) = (dims(rng, 1, 2), dims(rng, 1, 3), dims(rng, 1, 3));
            let (kh, kw) = (dims(rng, 2, 4), dims(rng, 2, 4));
            let stride = dims(rng, 1, 2);
            let pad = dims(rng, 0, 1);
            let (h, w) = (dims(rng, 2, 4), dims(rng, 2, 4));
            (
                vec![
                    rand_tensor(rng, &[n, ci, h, w]),
                    rand_tensor(rng, &[ci, co, kh, kw]),
                ],
                Box::new(move |t, v| t.conv_transpose2d(v[0], v[1], stride, pad).unwrap()),
            )
        }),
        case("relu", |rng| {
            let n = dims(rng, 2, 12);
            let mut x = rand_tensor(rng, &[n]);
            for v in x.data_mut() {
                if v.abs() < 0.05 {
                    *v += 0.1_f64.copysign(*v);
                }
            }
            (vec![x], Box::new(|t, v| t.relu(v[0])))
        }),
        case("mul_scalar", |rng| {
            let c = rng.gen_range(-2.0..2.0);
            (
                vec![rand_vec(rng, 9)],
                Box::new(move |t, v| t.mul_scalar(v[0], c)),
            )
        }),
        case("add_scalar", |rng| {
            let c = rng.gen_range(-2.0..2.0);
            (
                vec![rand_vec(rng, 9)],
                Box::new(move |t, v| t.add_scalar(v[0], c)),
            )
        }),
        case("square", |rng| {
            (vec![rand_vec(rng, 9)], Box::new(|t, v| t.square(v[0])))
        }),
        case("exp", |rng| {
            (vec![rand_vec(rng, 9)], Box::new(|t, v| t.exp(v[0])))
        }),
        case("sum", |rng| {
            (vec![rand_rows(rng, 4, 3)], Box::new(|t, v| t.sum(v[0])))
        }),
        case("mean", |rng| {
            (vec![rand_rows(rng, 4, 3)], Box::new(|t, v| t.mean(v[0])))
        }),
        case("reshape", |rng| {
            let (a, b) = (dims(rng, 1, 4), dims(rng, 1, 4));
            (
                vec![rand_tensor(rng, &[a, b])],
                Box::new(move |t, v| t.reshape(v[0], &[b, a]).unwrap()),
            )
        }),
        case("expand_channels", |rng| {
            let like = [
                dims(rng, 1, 2),
                dims(rng, 1, 4),
                dims(rng, 1, 3),
                dims(rng, 1, 3),
            ];
            (
                vec![rand_tensor(rng, &[like[1]])],
                Box::new(move |t, v| t.expand_channels(v[0], &like).unwrap()),
            )
        }),
        case("channels_to_rows", |rng| {
            let shape = [
                dims(rng, 1, 2),
                dims(rng, 1, 4),
                dims(rng, 1, 3),
                dims(rng, 1, 3),
            ];
            (
                vec![rand_tensor(rng, &shape)],
                Box::new(|t, v| t.channels_to_rows(v[0]).unwrap()),
            )
        }),
        case("rows_to_channels", |rng| {
            let shape = [
                dims(rng, 1, 2),
                dims(rng, 1, 4),
                dims(rng, 1, 3),
                dims(rng, 1, 3),
            ];
            let rows = [shape[0] * shape[2] * shape[3], shape[1]];
            (
                vec![rand_tensor(rng, &rows)],
                Box::new(move |t, v| t.rows_to_channels(v[0], &shape).unwrap()),
            )
        }),
        case("gather_rows", |rng| {
            let (k, d) = (dims(rng, 2, 6), dims(rng, 1, 4));
            let n = dims(rng, 1, 8);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            (
                vec![rand_tensor(rng, &[k, d])],
                Box::new(move |t, v| t.gather_rows(v[0], &idx).unwrap()),
            )
        }),
        case("conv_stack", |rng| {
            let x = rand_tensor(rng, &[2, 2, 6, 4]);
            let k1 = rand_tensor(rng, &[3, 2, 3, 3]);
            let b1 = rand_tensor(rng, &[3]);
            let k2 = rand_tensor(rng, &[3, 2, 4, 4]);
            (
                vec![x, k1, b1, k2],
                Box::new(|t, v| {
                    let h = t.conv2d(v[0], v[1], 2, 1).unwrap();
                    let shape = t.shape(h).to_vec();
                    let b = t.expand_channels(v[2], &shape).unwrap();
                    let h = t.add(h, b).unwrap();
                    let h = t.exp(h);
                    let y = t.conv_transpose2d(h, v[3], 2, 1).unwrap();
                    t.square(y)
                }),
            )
        }),
    ];
    for (which, name) in ["add", "sub", "mul"].into_iter().enumerate() {
        out.push(case(name, move |rng| {
            let shape = [dims(rng, 1, 3), dims(rng, 1, 4)];
            (
                vec![rand_tensor(rng, &shape), rand_tensor(rng, &shape)],
                Box::new(move |t, v| match which {
                    0 => t.add(v[0], v[1]).unwrap(),
                    1 => t.sub(v[0], v[1]).unwrap(),
                    _ => t.mul(v[0], v[1]).unwrap(),
                }),
            )
        }));
    }
    out
}

/// Worst relative error of the straight-through gradient against finite
/// differences of `Σ w·z²` at the quantized point, and whether the
/// quantized input received exactly zero gradient every time.
pub fn straight_through_check() -> (f64, bool) {
    let mut worst: f64 = 0.0;
    let mut zero = true;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims(&mut rng, 1, 8);
        let ze = rand_tensor(&mut rng, &[n]);
        let zq = rand_tensor(&mut rng, &[n]);
        let w = rand_tensor(&mut rng, &[n]);
        let mut tape = Tape::new();
        let a = tape.leaf(ze.clone().with_requires_grad(true));
        let b = tape.leaf(zq.clone().with_requires_grad(true));
        let s = tape.straight_through(a, b).unwrap();
        let sq = tape.square(s);
        let wv = tape.constant(w.clone());
        let p = tape.mul(sq, wv).unwrap();
        let l = tape.sum(p);
        tape.backward(l).unwrap();
        let f = |z: &[f64]| z.iter().zip(w.data()).map(|(x, w)| w * x * x).sum::<f64>();
        for j in 0..n {
            let mut plus = zq.data().to_vec();
            plus[j] += STEP;
            let mut minus = zq.data().to_vec();
            minus[j] -= STEP;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * STEP);
            let a_grad = tape.grad(a).unwrap()[j];
            worst = worst.max((a_grad - numeric).abs() / numeric.abs().max(1e-6));
            zero &= tape.grad(b).is_none_or(|g| g[j] == 0.0);
        }
    }
    (worst, zero)
}

/// Gradient reaching `x` through `detach` is exactly zero.
pub fn detach_is_exact() -> bool {
    let mut tape = Tape::new();
    let x = tape.leaf(
        Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5])
            .unwrap()
            .with_requires_grad(true),
    );
    let d = tape.detach(x);
    let sq = tape.square(d);
    let l = tape.sum(sq);
    tape.backward(l).unwrap();
    tape.grad(x).is_none_or(|g| g.iter().all(|&v| v == 0.0))
}
