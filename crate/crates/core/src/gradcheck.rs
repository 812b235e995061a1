//! Finite-difference gradient oracle and a generator of random computation
//! graphs over the full op set, used to cross-check [`Tape::backward`].

use rand::Rng;

use crate::autodiff::{Result, Tape, Tensor, Var};

/// Central-difference gradient `(f(p + h e_i) - f(p - h e_i)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| <= max(rel * max(|a|, |b|), abs)`.
pub fn grads_agree(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
}

#[derive(Debug, Clone)]
enum Step {
    Tanh,
    Exp,
    Log,
    Relu,
    LogSoftmax,
    Affine(f64, f64),
    AddParam(usize),
    MulParam(usize),
    MatMulParam(usize),
    GatherRows(Vec<usize>),
}

#[derive(Debug, Clone)]
enum Reduce {
    Sum,
    Mean,
    PickSum(Vec<usize>),
}

/// A random composite graph of bounded depth. All parameters (including the
/// input) live in one flat vector so the graph can be differentiated by
/// [`finite_diff_grad`] as well as by the tape.
#[derive(Debug, Clone)]
pub struct RandomGraph {
    shapes: Vec<[usize; 2]>,
    steps: Vec<Step>,
    reduce: Reduce,
    params: Vec<f64>,
}

impl RandomGraph {
    /// Draws a graph with `1..=max_depth` ops before the final reduction.
    /// Entries are uniform in `[-2, 2]`. Ops whose derivative would be
    /// ill-conditioned at the drawn point (a relu kink, a log near zero, an
    /// exp of a large value) are swapped for `tanh`.
    pub fn sample<R: Rng>(rng: &mut R, max_depth: usize) -> Self {
        let rows = rng.random_range(1..=3);
        let cols = rng.random_range(1..=3);
        let mut g = RandomGraph {
            shapes: vec![[rows, cols]],
            steps: Vec::new(),
            reduce: Reduce::Sum,
            params: Vec::new(),
        };
        g.params = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        let depth = rng.random_range(1..=max_depth.max(1));
        let mut cur = g.params.clone();
        let mut shape = [rows, cols];
        for _ in 0..depth {
            let step = match rng.random_range(0..10) {
                0 => Step::Tanh,
                1 if cur.iter().all(|v| v.abs() <= 3.0) => Step::Exp,
                2 if cur.iter().all(|&v| v > 0.1) => Step::Log,
                3 if cur.iter().all(|v| v.abs() > 1e-3) => Step::Relu,
                4 => Step::LogSoftmax,
                5 => Step::Affine(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
                6 => {
                    let idx = g.new_param(rng, shape);
                    Step::AddParam(idx)
                }
                7 => {
                    let idx = g.new_param(rng, shape);
                    Step::MulParam(idx)
                }
                8 => {
                    let out = rng.random_range(1..=3);
                    let idx = g.new_param(rng, [shape[1], out]);
                    Step::MatMulParam(idx)
                }
                9 => {
                    let n = rng.random_range(1..=3);
                    Step::GatherRows((0..n).map(|_| rng.random_range(0..shape[0])).collect())
                }
                _ => Step::Tanh,
            };
            g.steps.push(step);
            let (vals, s) = g.eval_prefix(&g.params);
            cur = vals;
            shape = s;
        }
        g.reduce = match rng.random_range(0..3) {
            0 => Reduce::Sum,
            1 => Reduce::Mean,
            _ => Reduce::PickSum((0..shape[0]).map(|_| rng.random_range(0..shape[1])).collect()),
        };
        g
    }

    fn new_param<R: Rng>(&mut self, rng: &mut R, shape: [usize; 2]) -> usize {
        self.params
            .extend((0..shape[0] * shape[1]).map(|_| rng.random_range(-2.0..2.0)));
        self.shapes.push(shape);
        self.shapes.len() - 1
    }

    fn eval_prefix(&self, params: &[f64]) -> (Vec<f64>, [usize; 2]) {
        let mut tape = Tape::new();
        let leaves = self.leaves(&mut tape, params);
        let out = self
            .build_steps(&mut tape, &leaves)
            .expect("graph was generated to be well-formed");
        let shape = tape.shape(out);
        (tape.value(out).to_vec(), [shape[0], shape[1]])
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    fn leaves(&self, tape: &mut Tape, params: &[f64]) -> Vec<Var> {
        let mut offset = 0;
        self.shapes
            .iter()
            .map(|&[r, c]| {
                let vals = params[offset..offset + r * c].to_vec();
                offset += r * c;
                tape.leaf(Tensor::matrix(r, c, vals).expect("shape matches"))
            })
            .collect()
    }

    fn build_steps(&self, tape: &mut Tape, leaves: &[Var]) -> Result<Var> {
        let mut x = leaves[0];
        for step in &self.steps {
            x = match step {
                Step::Tanh => tape.tanh(x)?,
                Step::Exp => tape.exp(x)?,
                Step::Log => tape.log(x)?,
                Step::Relu => tape.relu(x)?,
                Step::LogSoftmax => tape.log_softmax(x)?,
                Step::Affine(a, b) => tape.affine(x, *a, *b)?,
                Step::AddParam(i) => tape.add(x, leaves[*i])?,
                Step::MulParam(i) => tape.mul(x, leaves[*i])?,
                Step::MatMulParam(i) => tape.matmul(x, leaves[*i])?,
                Step::GatherRows(idx) => tape.gather_rows(x, idx)?,
            };
        }
        Ok(x)
    }

    /// Builds the full graph; returns the scalar loss and the leaf per
    /// parameter tensor, in flat-vector order.
    pub fn build(&self, tape: &mut Tape, params: &[f64]) -> Result<(Var, Vec<Var>)> {
        let leaves = self.leaves(tape, params);
        let x = self.build_steps(tape, &leaves)?;
        let loss = match &self.reduce {
            Reduce::Sum => tape.sum(x)?,
            Reduce::Mean => tape.mean(x)?,
            Reduce::PickSum(idx) => {
                let p = tape.pick(x, idx)?;
                tape.sum(p)?
            }
        };
        Ok((loss, leaves))
    }

    pub fn eval(&self, params: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let (loss, _) = self.build(&mut tape, params).expect("well-formed graph");
        tape.item(loss).expect("scalar loss")
    }

    pub fn autodiff_grad(&self, params: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (loss, leaves) = self.build(&mut tape, params)?;
        tape.backward(loss)?;
        Ok(leaves.iter().flat_map(|&v| tape.grad(v).to_vec()).collect())
    }

    /// Largest violation ratio `|a - b| / max(rel * max(|a|,|b|), abs)`
    /// between backprop and central differences; `<= 1` means agreement.
    pub fn check(&self, h: f64, rel: f64, abs: f64) -> Result<f64> {
        let auto = self.autodiff_grad(&self.params)?;
        let numeric = finite_diff_grad(|p| self.eval(p), &self.params, h);
        Ok(auto
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).abs() / (rel * a.abs().max(b.abs())).max(abs))
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(|p| p[0] * p[0], &[3.0], 1e-5);
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-8);
    }

    #[test]
    fn sum_of_squares() {
        let g = finite_diff_grad(|p| p.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-5);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(g[1], 4.0, epsilon = 1e-7);
    }

    #[test]
    fn random_graphs_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let g = RandomGraph::sample(&mut rng, 4);
            let worst = g.check(1e-5, 1e-5, 1e-8).unwrap();
            assert!(worst <= 1.0, "graph {g:?} violates by {worst}");
        }
    }
}
