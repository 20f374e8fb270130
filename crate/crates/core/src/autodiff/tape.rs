//! Layer-wise pushforward of derivative stacks and the matching reverse sweep.
//!
//! Every layer buffer is a row-major matrix with one row per neuron and one
//! column per (point, channel) pair, so each dense layer is a single GEMM over
//! all derivative channels at once. Biases touch only the value channel.

use std::sync::Arc;

use super::channels::ChannelSet;
use super::mlp::{Activation, Mlp};
use crate::linalg::{gemm, Strides};

pub(crate) struct Tape {
    pub n_points: usize,
    pub channels: Arc<ChannelSet>,
    input: Vec<f64>,
    /// Pre-activation stacks per layer; the last entry is the network output.
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("tape has at least one layer")
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.pre.pop().expect("tape has at least one layer")
    }

    pub fn workspace_bytes(&self) -> usize {
        let floats = self.input.len() + self.pre.iter().map(Vec::len).sum::<usize>();
        floats * std::mem::size_of::<f64>()
    }
}

/// Seeds the input stack: values plus unit first derivatives along the
/// differentiated dimensions.
fn seed_input(points: &[f64], n_in: usize, channels: &ChannelSet) -> Vec<f64> {
    let n_points = points.len() / n_in;
    let c = channels.len();
    let cols = n_points * c;
    let mut x = vec![0.0; n_in * cols];
    for p in 0..n_points {
        for j in 0..n_in {
            let row = j * cols + p * c;
            x[row] = points[p * n_in + j];
            if channels.order() >= 1 && j < channels.dims() {
                x[row + channels.first(j)] = 1.0;
            }
        }
    }
    x
}

/// Applies the activation to every (neuron, point) derivative stack.
pub(crate) fn activation_forward(
    act: Activation,
    channels: &ChannelSet,
    z: &[f64],
    a: &mut [f64],
) {
    let c = channels.len();
    if c == 1 {
        let mut d = [0.0; 5];
        for (out, &zi) in a.iter_mut().zip(z) {
            act.derivatives(zi, &mut d);
            *out = d[0];
        }
        return;
    }
    let mut d = [0.0; 5];
    for (zs, as_) in z.chunks_exact(c).zip(a.chunks_exact_mut(c)) {
        act.derivatives(zs[0], &mut d);
        for (ch, out) in as_.iter_mut().enumerate() {
            let (t0, t1) = channels.term_ranges[ch];
            let mut acc = 0.0;
            for term in &channels.terms[t0..t1] {
                let mut prod = d[term.order];
                for &b in &channels.blocks[term.start..term.start + term.len] {
                    prod *= zs[b];
                }
                acc += prod;
            }
            *out = acc;
        }
    }
}

/// Reverse of [`activation_forward`]: maps output adjoints to input adjoints.
fn activation_backward(
    act: Activation,
    channels: &ChannelSet,
    z: &[f64],
    adj_a: &[f64],
    adj_z: &mut [f64],
) {
    let c = channels.len();
    let mut d = [0.0; 5];
    for ((zs, ga), gz) in z.chunks_exact(c).zip(adj_a.chunks_exact(c)).zip(adj_z.chunks_exact_mut(c)) {
        act.derivatives(zs[0], &mut d);
        gz.fill(0.0);
        for (ch, &g) in ga.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let (t0, t1) = channels.term_ranges[ch];
            for term in &channels.terms[t0..t1] {
                let blocks = &channels.blocks[term.start..term.start + term.len];
                let mut prod = 1.0;
                for &b in blocks {
                    prod *= zs[b];
                }
                gz[0] += g * d[term.order + 1] * prod;
                for (i, &bi) in blocks.iter().enumerate() {
                    let mut others = d[term.order];
                    for (k, &bk) in blocks.iter().enumerate() {
                        if k != i {
                            others *= zs[bk];
                        }
                    }
                    gz[bi] += g * others;
                }
            }
        }
    }
}

pub(crate) fn forward(mlp: &Mlp, points: &[f64], channels: Arc<ChannelSet>) -> Tape {
    let n_in = mlp.n_inputs();
    let n_points = points.len() / n_in;
    let c = channels.len();
    let cols = n_points * c;
    let input = seed_input(points, n_in, &channels);
    let n_layers = mlp.n_layers();
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut act_buf: Vec<f64> = Vec::new();
    for l in 0..n_layers {
        let (m_in, m_out) = (mlp.widths()[l], mlp.widths()[l + 1]);
        let a_prev: &[f64] = if l == 0 { &input } else { &act_buf };
        let mut z = vec![0.0; m_out * cols];
        gemm(
            m_out,
            m_in,
            cols,
            1.0,
            mlp.weights(l),
            Strides::row_major(m_in),
            a_prev,
            Strides::row_major(cols),
            0.0,
            &mut z,
            Strides::row_major(cols),
        );
        for (i, &b) in mlp.biases(l).iter().enumerate() {
            let row = &mut z[i * cols..(i + 1) * cols];
            for p in 0..n_points {
                row[p * c] += b;
            }
        }
        if l + 1 < n_layers {
            let mut next = vec![0.0; m_out * cols];
            activation_forward(mlp.activation(), &channels, &z, &mut next);
            act_buf = next;
        }
        pre.push(z);
    }
    Tape { n_points, channels, input, pre }
}

/// Accumulates `d loss / d params` into `grad` given the adjoint of the
/// network output stack.
pub(crate) fn backward(mlp: &Mlp, tape: &Tape, adj_out: Vec<f64>, grad: &mut [f64]) {
    let c = tape.channels.len();
    let cols = tape.n_points * c;
    let n_layers = mlp.n_layers();
    let mut adj_z = adj_out;
    let mut a_prev_buf: Vec<f64> = Vec::new();
    for l in (0..n_layers).rev() {
        let (m_in, m_out) = (mlp.widths()[l], mlp.widths()[l + 1]);
        let a_prev: &[f64] = if l == 0 {
            &tape.input
        } else {
            a_prev_buf.resize(m_in * cols, 0.0);
            activation_forward(mlp.activation(), &tape.channels, &tape.pre[l - 1], &mut a_prev_buf);
            &a_prev_buf
        };
        let wo = mlp.weight_offset(l);
        gemm(
            m_out,
            cols,
            m_in,
            1.0,
            &adj_z,
            Strides::row_major(cols),
            a_prev,
            Strides::transposed(cols),
            1.0,
            &mut grad[wo..wo + m_out * m_in],
            Strides::row_major(m_in),
        );
        let bo = mlp.bias_offset(l);
        for i in 0..m_out {
            let row = &adj_z[i * cols..(i + 1) * cols];
            grad[bo + i] += (0..tape.n_points).map(|p| row[p * c]).sum::<f64>();
        }
        if l > 0 {
            let mut adj_a = vec![0.0; m_in * cols];
            gemm(
                m_in,
                m_out,
                cols,
                1.0,
                mlp.weights(l),
                Strides::transposed(m_in),
                &adj_z,
                Strides::row_major(cols),
                0.0,
                &mut adj_a,
                Strides::row_major(cols),
            );
            let mut next = vec![0.0; m_in * cols];
            activation_backward(mlp.activation(), &tape.channels, &tape.pre[l - 1], &adj_a, &mut next);
            adj_z = next;
        }
    }
}
