//! Recurrent policy/value networks: four ReLU dense layers feeding one GRU
//! layer and a linear head.
//!
//! Two forward paths exist on purpose. The tape path ([`TapeNet`]) records
//! onto a [`Tape`] for training; the plain path ([`RecurrentNet::step`])
//! allocates nothing but its output and is what environment rollouts and
//! evaluation use. A test pins them to identical outputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::init::orthogonal;
use crate::nn::kernels;
use crate::nn::params::ParamSet;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

pub const DENSE_LAYERS: usize = 4;

/// Policy and value networks share this structure; they differ only in input
/// width, output width, and head gain.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNet {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub params: ParamSet,
}

pub type PolicyNet = RecurrentNet;
pub type ValueNet = RecurrentNet;

impl RecurrentNet {
    /// Fresh net with orthogonal weights: gain 1 on the dense stack and the
    /// recurrent matrices, `head_gain` on the output head. Biases start at
    /// zero. A small policy-head gain keeps the initial action distribution
    /// near uniform.
    pub fn new(input: usize, hidden: usize, output: usize, head_gain: f64, seed: u64) -> RecurrentNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let gain_hidden = 1.0;

        let push = |params: &mut ParamSet, name: &str, t: Tensor| {
            params.insert(name, t).expect("unique parameter names");
        };

        let mut in_dim = input;
        for i in 0..DENSE_LAYERS {
            push(&mut params, &format!("dense{i}.w"), orthogonal(in_dim, hidden, gain_hidden, &mut rng));
            push(&mut params, &format!("dense{i}.b"), Tensor::zeros(&[hidden]));
            in_dim = hidden;
        }
        for gate in ["z", "r", "n"] {
            push(&mut params, &format!("gru.w_{gate}"), orthogonal(hidden, hidden, 1.0, &mut rng));
            push(&mut params, &format!("gru.u_{gate}"), orthogonal(hidden, hidden, 1.0, &mut rng));
            push(&mut params, &format!("gru.b_{gate}"), Tensor::zeros(&[hidden]));
        }
        push(&mut params, "head.w", orthogonal(hidden, output, head_gain, &mut rng));
        push(&mut params, "head.b", Tensor::zeros(&[output]));

        RecurrentNet {
            input,
            hidden,
            output,
            params,
        }
    }

    pub fn new_policy(input: usize, hidden: usize, actions: usize, seed: u64) -> PolicyNet {
        RecurrentNet::new(input, hidden, actions, 0.01, seed)
    }

    pub fn new_value(input: usize, hidden: usize, seed: u64) -> ValueNet {
        RecurrentNet::new(input, hidden, 1, 1.0, seed)
    }

    fn p(&self, name: &str) -> &[f64] {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .data()
    }

    /// One timestep for a batch of `rows` independent recurrent streams.
    /// `x` is [rows, input], `h` is [rows, hidden] and is updated in place.
    /// Returns the head output, [rows, output].
    pub fn step(&self, x: &[f64], rows: usize, h: &mut [f64]) -> Vec<f64> {
        assert_eq!(x.len(), rows * self.input, "input width mismatch");
        assert_eq!(h.len(), rows * self.hidden, "hidden state width mismatch");
        let hd = self.hidden;

        let mut d = x.to_vec();
        let mut in_dim = self.input;
        let mut buf = vec![0.0; rows * hd];
        for i in 0..DENSE_LAYERS {
            kernels::matmul(&d, self.p(&format!("dense{i}.w")), &mut buf, rows, in_dim, hd);
            kernels::add_row_bias(&mut buf, self.p(&format!("dense{i}.b")), rows);
            kernels::relu_inplace(&mut buf);
            d.clone_from(&buf);
            in_dim = hd;
        }

        let gate = |w: &str, u: &str, b: &str| -> Vec<f64> {
            let mut xw = vec![0.0; rows * hd];
            kernels::matmul(&d, self.p(w), &mut xw, rows, hd, hd);
            let mut hu = vec![0.0; rows * hd];
            kernels::matmul(h, self.p(u), &mut hu, rows, hd, hd);
            for (a, &b_) in xw.iter_mut().zip(&hu) {
                *a += b_;
            }
            kernels::add_row_bias(&mut xw, self.p(b), rows);
            xw
        };

        let mut z = gate("gru.w_z", "gru.u_z", "gru.b_z");
        for v in z.iter_mut() {
            *v = kernels::sigmoid(*v);
        }
        let mut r = gate("gru.w_r", "gru.u_r", "gru.b_r");
        for v in r.iter_mut() {
            *v = kernels::sigmoid(*v);
        }

        let mut hu_n = vec![0.0; rows * hd];
        kernels::matmul(h, self.p("gru.u_n"), &mut hu_n, rows, hd, hd);
        let mut n = vec![0.0; rows * hd];
        kernels::matmul(&d, self.p("gru.w_n"), &mut n, rows, hd, hd);
        for ((nv, &rv), &hv) in n.iter_mut().zip(&r).zip(&hu_n) {
            *nv += rv * hv;
        }
        kernels::add_row_bias(&mut n, self.p("gru.b_n"), rows);
        for v in n.iter_mut() {
            *v = v.tanh();
        }

        for ((hv, &zv), &nv) in h.iter_mut().zip(&z).zip(&n) {
            *hv = (1.0 - zv) * nv + zv * *hv;
        }

        let mut out = vec![0.0; rows * self.output];
        kernels::matmul(h, self.p("head.w"), &mut out, rows, hd, self.output);
        kernels::add_row_bias(&mut out, self.p("head.b"), rows);
        out
    }

    /// Run `steps` timesteps over a flat [steps, rows, input] sequence,
    /// returning per-step head outputs and mutating `h` to the final state.
    pub fn forward(&self, xs: &[f64], steps: usize, rows: usize, h: &mut [f64]) -> Vec<Vec<f64>> {
        assert_eq!(xs.len(), steps * rows * self.input, "sequence length mismatch");
        let stride = rows * self.input;
        (0..steps)
            .map(|t| self.step(&xs[t * stride..(t + 1) * stride], rows, h))
            .collect()
    }
}

/// One GRU timestep for policy inference; `h` is updated in place.
pub fn policy_step(net: &PolicyNet, obs: &[f64], rows: usize, h: &mut [f64]) -> Vec<f64> {
    net.step(obs, rows, h)
}

pub fn policy_forward(net: &PolicyNet, obs_seq: &[f64], steps: usize, rows: usize, h: &mut [f64]) -> Vec<Vec<f64>> {
    net.forward(obs_seq, steps, rows, h)
}

pub fn value_step(net: &ValueNet, state: &[f64], rows: usize, h: &mut [f64]) -> Vec<f64> {
    net.step(state, rows, h)
}

pub fn value_forward(net: &ValueNet, state_seq: &[f64], steps: usize, rows: usize, h: &mut [f64]) -> Vec<Vec<f64>> {
    net.forward(state_seq, steps, rows, h)
}

/// A [`RecurrentNet`] bound onto a tape as leaf variables, for training.
pub struct TapeNet {
    dense: Vec<(Var, Var)>,
    wz: Var,
    uz: Var,
    bz: Var,
    wr: Var,
    ur: Var,
    br: Var,
    wn: Var,
    un: Var,
    bn: Var,
    head_w: Var,
    head_b: Var,
    /// Leaves in parameter order, for gradient extraction.
    leaves: Vec<Var>,
}

impl TapeNet {
    pub fn bind(tape: &mut Tape, net: &RecurrentNet) -> TapeNet {
        let mut leaves = Vec::with_capacity(net.params.len());
        for p in net.params.iter() {
            leaves.push(tape.leaf(&p.value));
        }
        let mut it = leaves.iter().copied();
        let mut dense = Vec::with_capacity(DENSE_LAYERS);
        for _ in 0..DENSE_LAYERS {
            let w = it.next().unwrap();
            let b = it.next().unwrap();
            dense.push((w, b));
        }
        let (wz, uz, bz) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        let (wr, ur, br) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        let (wn, un, bn) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        let head_w = it.next().unwrap();
        let head_b = it.next().unwrap();
        TapeNet {
            dense,
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wn,
            un,
            bn,
            head_w,
            head_b,
            leaves,
        }
    }

    /// Dense stack and GRU update for one timestep; returns the new hidden
    /// state. `x` is [rows, input], `h` is [rows, hidden].
    pub fn trunk_step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let mut d = x;
        for &(w, b) in &self.dense {
            let y = tape.matmul(d, w)?;
            let y = tape.add_bias(y, b)?;
            d = tape.relu(y)?;
        }

        let zx = tape.matmul(d, self.wz)?;
        let zh = tape.matmul(h, self.uz)?;
        let z = tape.add(zx, zh)?;
        let z = tape.add_bias(z, self.bz)?;
        let z = tape.sigmoid(z)?;

        let rx = tape.matmul(d, self.wr)?;
        let rh = tape.matmul(h, self.ur)?;
        let r = tape.add(rx, rh)?;
        let r = tape.add_bias(r, self.br)?;
        let r = tape.sigmoid(r)?;

        let nx = tape.matmul(d, self.wn)?;
        let nh = tape.matmul(h, self.un)?;
        let rnh = tape.mul(r, nh)?;
        let n = tape.add(nx, rnh)?;
        let n = tape.add_bias(n, self.bn)?;
        let n = tape.tanh(n)?;

        let one_minus_z = tape.affine(z, -1.0, 1.0)?;
        let a = tape.mul(one_minus_z, n)?;
        let b = tape.mul(z, h)?;
        tape.add(a, b)
    }

    /// Linear head on a hidden state: [rows, hidden] -> [rows, output].
    pub fn head(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let y = tape.matmul(h, self.head_w)?;
        tape.add_bias(y, self.head_b)
    }

    /// Gradients in parameter order; parameters the loss never touched get
    /// zero gradients of the right size.
    pub fn grads(&self, tape: &Tape, grads: &crate::nn::tape::Grads) -> Vec<Vec<f64>> {
        self.leaves
            .iter()
            .map(|&v| {
                let (r, c) = tape.shape(v);
                grads
                    .get(v)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; r * c])
            })
            .collect()
    }
}
