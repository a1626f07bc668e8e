//! Dense ReLU networks with explicit batched forward and reverse passes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::par;

/// Multilayer perceptron: ReLU on hidden layers, identity on the last.
///
/// Parameters live in one flat buffer, layer by layer, each layer as a
/// row-major `out × in` weight matrix followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
    version: u64,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    batch: usize,
    /// `acts[l]` is the input to layer `l`; `acts[0]` is the network input.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..n {
        s += a[j] * b[j];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Mlp {
    /// Fan-in scaled uniform initialization; the last layer is further
    /// scaled by `output_gain`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], output_gain: f64, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!("invalid layer dims {dims:?}")));
        }
        let mut params = Vec::with_capacity(Self::count_params(dims));
        let layers = dims.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let mut bound = crate::math::sqrt(6.0 / fan_in as f64);
            if l + 1 == layers {
                bound = crate::math::sqrt(3.0 / fan_in as f64) * output_gain;
            }
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-1.0..1.0) * bound);
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            params,
            version: 0,
        })
    }

    /// Builds from explicit `(weights, bias)` pairs; `weights` is row-major `out × in`.
    pub fn from_layers(layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        let mut dims = Vec::with_capacity(layers.len() + 1);
        let mut params = Vec::new();
        for (l, (w, b)) in layers.iter().enumerate() {
            let out = b.len();
            if out == 0 || w.len() % out != 0 {
                return Err(Error::invalid(format!(
                    "layer {l}: weight length {} is not a multiple of bias length {out}",
                    w.len()
                )));
            }
            let inp = w.len() / out;
            if let Some(&prev) = dims.last() {
                if l > 0 && prev != inp {
                    return Err(Error::LayerDim {
                        layer: l,
                        expected: prev,
                        found: inp,
                    });
                }
            }
            if l == 0 {
                dims.push(inp);
            }
            dims.push(out);
            params.extend_from_slice(w);
            params.extend_from_slice(b);
        }
        Ok(Mlp {
            dims,
            params,
            version: 0,
        })
    }

    pub fn count_params(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.dims[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let w_len = self.dims[l] * self.dims[l + 1];
        (start, start + w_len)
    }

    /// Weight and bias slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (w, b) = self.layer_offsets(l);
        let out = self.dims[l + 1];
        (&self.params[w..b], &self.params[b..b + out])
    }

    /// `(name, shape, values)` for each weight and bias array.
    pub fn named_arrays(&self, prefix: &str) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            out.push((
                format!("{prefix}.layer{l}.weight"),
                vec![self.dims[l + 1], self.dims[l]],
                w.to_vec(),
            ));
            out.push((format!("{prefix}.layer{l}.bias"), vec![self.dims[l + 1]], b.to_vec()));
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.forward_batch(x, 1)
    }

    /// Forward pass over `batch` row-major input rows.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, Tape)> {
        let in_dim = self.dims[0];
        if x.len() != batch * in_dim {
            return Err(Error::LayerDim {
                layer: 0,
                expected: batch * in_dim,
                found: x.len(),
            });
        }
        let layers = self.num_layers();
        let mut acts = Vec::with_capacity(layers);
        acts.push(x.to_vec());
        let mut output = Vec::new();
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let relu = l + 1 < layers;
            let input = &acts[l];
            let chunks = par::map_ordered(par::chunk_count(batch), |c| {
                let rows = par::chunk_range(c, batch);
                let mut out = Vec::with_capacity(rows.len() * n_out);
                for r in rows {
                    let xr = &input[r * n_in..(r + 1) * n_in];
                    for o in 0..n_out {
                        let mut z = b[o] + dot(&w[o * n_in..(o + 1) * n_in], xr);
                        if relu && z < 0.0 {
                            z = 0.0;
                        }
                        out.push(z);
                    }
                }
                out
            });
            let next: Vec<f64> = chunks.concat();
            if relu {
                acts.push(next);
            } else {
                output = next;
            }
        }
        Ok((
            output,
            Tape {
                version: self.version,
                batch,
                acts,
            },
        ))
    }

    /// Reverse pass: returns `(dL/dparams, dL/dx)`.
    pub fn backward(&self, tape: &Tape, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let dx = self.backward_into(tape, dy, &mut grads, true)?;
        Ok((grads, dx.unwrap_or_default()))
    }

    /// Accumulates parameter gradients into `grads`; returns `dL/dx` when asked.
    pub fn backward_into(
        &self,
        tape: &Tape,
        dy: &[f64],
        grads: &mut [f64],
        need_dx: bool,
    ) -> Result<Option<Vec<f64>>> {
        if tape.version != self.version || tape.acts.len() != self.num_layers() {
            return Err(Error::StaleTape);
        }
        let batch = tape.batch;
        let out_dim = self.output_dim();
        if dy.len() != batch * out_dim {
            return Err(Error::DimMismatch {
                context: "mlp output cotangent",
                expected: batch * out_dim,
                found: dy.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimMismatch {
                context: "mlp gradient buffer",
                expected: self.params.len(),
                found: grads.len(),
            });
        }
        let mut delta = dy.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let (w, _) = self.layer(l);
            let input = &tape.acts[l];
            let want_dx = l > 0 || need_dx;
            let gate_relu = l > 0;
            let delta_ref = &delta;
            let chunks = par::map_ordered(par::chunk_count(batch), |c| {
                let rows = par::chunk_range(c, batch);
                let mut gw = vec![0.0; n_in * n_out + n_out];
                let mut dx = if want_dx {
                    vec![0.0; rows.len() * n_in]
                } else {
                    Vec::new()
                };
                for (k, r) in rows.enumerate() {
                    let xr = &input[r * n_in..(r + 1) * n_in];
                    let dr = &delta_ref[r * n_out..(r + 1) * n_out];
                    for (o, &d) in dr.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        axpy(d, xr, &mut gw[o * n_in..(o + 1) * n_in]);
                        gw[n_in * n_out + o] += d;
                        if want_dx {
                            axpy(d, &w[o * n_in..(o + 1) * n_in], &mut dx[k * n_in..(k + 1) * n_in]);
                        }
                    }
                    if gate_relu {
                        for (v, a) in dx[k * n_in..(k + 1) * n_in].iter_mut().zip(xr) {
                            if *a <= 0.0 {
                                *v = 0.0;
                            }
                        }
                    }
                }
                (gw, dx)
            });
            let (w_off, _) = self.layer_offsets(l);
            let g_layer = &mut grads[w_off..w_off + n_in * n_out + n_out];
            let mut next = Vec::with_capacity(if want_dx { batch * n_in } else { 0 });
            for (gw, dx) in chunks {
                for (g, v) in g_layer.iter_mut().zip(&gw) {
                    *g += v;
                }
                next.extend_from_slice(&dx);
            }
            delta = next;
        }
        Ok(if need_dx { Some(delta) } else { None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_return_bias() {
        let net = Mlp::from_layers(&[(vec![0.0; 6], vec![0.5, -1.5])]).unwrap();
        let (y, _) = net.forward(&[3.0, -2.0, 7.0]).unwrap();
        assert_eq!(y, vec![0.5, -1.5]);
    }

    #[test]
    fn identity_layer() {
        let w = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let net = Mlp::from_layers(&[(w, vec![0.0; 3])]).unwrap();
        let (y, _) = net.forward(&[0.3, -4.0, 2.5]).unwrap();
        assert_eq!(y, vec![0.3, -4.0, 2.5]);
    }

    #[test]
    fn dim_mismatch_names_layer() {
        let net = Mlp::from_layers(&[(vec![1.0; 4], vec![0.0; 2])]).unwrap();
        match net.forward(&[1.0, 2.0, 3.0]).unwrap_err() {
            Error::LayerDim { layer, .. } => assert_eq!(layer, 0),
            e => panic!("unexpected {e:?}"),
        }
        let err = Mlp::from_layers(&[(vec![1.0; 4], vec![0.0; 2]), (vec![1.0; 3], vec![0.0])])
            .unwrap_err();
        assert!(matches!(err, Error::LayerDim { layer: 1, .. }));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 3], 1.0, &mut rng).unwrap();
        let (_, tape) = net.forward(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        let (g, dx) = net.backward(&tape, &[0.0; 3]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_adjoint() {
        let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let net = Mlp::from_layers(&[(w, vec![0.0; 2])]).unwrap();
        let x = [0.5, -1.0, 2.0];
        let (_, tape) = net.forward(&x).unwrap();
        let dy = [2.0, -3.0];
        let (g, dx) = net.backward(&tape, &dy).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g[o * 3 + i], dy[o] * x[i]);
            }
        }
        assert_eq!(&g[6..], &dy);
        assert_eq!(dx, vec![2.0 - 12.0, 4.0 - 15.0, 6.0 - 18.0]);
    }

    #[test]
    fn relu_gate_blocks_negative_units() {
        // Hidden unit 0 sees -1 (gated), unit 1 sees +1.
        let net = Mlp::from_layers(&[
            (vec![-1.0, 1.0], vec![0.0, 0.0]),
            (vec![1.0, 1.0], vec![0.0]),
        ])
        .unwrap();
        let (y, tape) = net.forward(&[1.0]).unwrap();
        assert_eq!(y, vec![1.0]);
        let (g, dx) = net.backward(&tape, &[1.0]).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 1.0);
        assert_eq!(dx, vec![1.0]);
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::new(&[2, 4, 1], 1.0, &mut rng).unwrap();
        let (_, tape) = net.forward(&[0.1, 0.2]).unwrap();
        net.params_mut()[0] += 1.0;
        assert_eq!(net.backward(&tape, &[1.0]).unwrap_err(), Error::StaleTape);
    }

    #[test]
    fn batch_matches_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 16, 16, 2], 1.0, &mut rng).unwrap();
        let rows: Vec<f64> = (0..3 * 130).map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0).collect();
        let (yb, _) = net.forward_batch(&rows, 130).unwrap();
        for r in 0..130 {
            let (y, _) = net.forward(&rows[r * 3..r * 3 + 3]).unwrap();
            assert_eq!(&yb[r * 2..r * 2 + 2], &y[..]);
        }
    }

    #[test]
    fn param_count_is_pure_function_of_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[48, 64, 64, 64, 1], 1.0, &mut rng).unwrap();
        assert_eq!(net.params().len(), Mlp::count_params(&[48, 64, 64, 64, 1]));
        assert_eq!(Mlp::count_params(&[48, 64, 64, 64, 1]), 48 * 64 + 64 + 2 * (64 * 64 + 64) + 65);
    }
}
