use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Per-head query and key projections, each `D × D/H`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub queries: Vec<Tensor>,
    pub keys: Vec<Tensor>,
}

impl AttentionParams {
    pub fn new(queries: Vec<Tensor>, keys: Vec<Tensor>) -> Result<Self> {
        if queries.is_empty() || queries.len() != keys.len() {
            return Err(Error::config(
                "heads",
                format!("{} query vs {} key projections", queries.len(), keys.len()),
            ));
        }
        let shape = queries[0].shape().to_vec();
        for t in queries.iter().chain(&keys) {
            if t.shape() != shape.as_slice() {
                return Err(Error::shape("attention", &shape, t.shape()));
            }
        }
        Ok(AttentionParams { queries, keys })
    }

    /// Uniform `±1/√D` initialisation.
    pub fn random<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        let head_dim = head_dim(dim, heads)?;
        let bound = 1.0 / (dim as f64).sqrt();
        let mut queries = Vec::with_capacity(heads);
        let mut keys = Vec::with_capacity(heads);
        for _ in 0..heads {
            queries.push(Tensor::uniform(&[dim, head_dim], bound, rng));
            keys.push(Tensor::uniform(&[dim, head_dim], bound, rng));
        }
        Ok(AttentionParams { queries, keys })
    }

    pub fn heads(&self) -> usize {
        self.queries.len()
    }

    pub fn dim(&self) -> usize {
        self.queries[0].rows()
    }
}

/// Width of one head; `dim` must be a multiple of `heads`.
pub fn head_dim(dim: usize, heads: usize) -> Result<usize> {
    if heads == 0 || dim % heads != 0 {
        return Err(Error::config(
            "heads",
            format!("hidden dimension {dim} is not divisible by {heads} heads"),
        ));
    }
    Ok(dim / heads)
}

/// Symmetric attention adjacency recorded on `tape`.
///
/// Each head scores `softmax(Q Kᵀ / √(D/H))` row-wise; heads are averaged,
/// the result is symmetrised as `(A + Aᵀ)/2` and its diagonal zeroed.
pub fn attention_on_tape(tape: &mut Tape, features: Var, queries: &[Var], keys: &[Var]) -> Result<Var> {
    let x = tape.value(features);
    let (n, d) = (x.rows(), x.cols());
    if queries.is_empty() || queries.len() != keys.len() {
        return Err(Error::config("heads", "query/key head counts differ"));
    }
    let head = tape.value(queries[0]).cols();
    if tape.value(queries[0]).rows() != d {
        return Err(Error::shape("attention", &[n, d], tape.value(queries[0]).shape()));
    }
    let scale = 1.0 / (head as f64).sqrt();
    let mut total: Option<Var> = None;
    for (&wq, &wk) in queries.iter().zip(keys) {
        let q = tape.matmul(features, wq)?;
        let k = tape.matmul(features, wk)?;
        let kt = tape.transpose(k);
        let s = tape.matmul(q, kt)?;
        let s = tape.scale(s, scale);
        let a = tape.softmax_rows(s);
        total = Some(match total {
            Some(t) => tape.add(t, a)?,
            None => a,
        });
    }
    let mean = tape.scale(total.expect("at least one head"), 1.0 / queries.len() as f64);
    let mean_t = tape.transpose(mean);
    let sum = tape.add(mean, mean_t)?;
    let sym = tape.scale(sum, 0.5);
    let mut off_diag = Tensor::filled(&[n, n], 1.0);
    for i in 0..n {
        off_diag.set(i, i, 0.0);
    }
    tape.mask(sym, off_diag)
}

/// Attention adjacency for plain feature rows (no gradient recording).
pub fn attention_weights(features: &Tensor, params: &AttentionParams) -> Result<Tensor> {
    head_dim(params.dim(), params.heads())?;
    if features.cols() != params.dim() {
        return Err(Error::shape("attention_weights", features.shape(), params.queries[0].shape()));
    }
    let mut tape = Tape::no_grad();
    let x = tape.constant(features.clone());
    let q: Vec<Var> = params.queries.iter().map(|t| tape.constant(t.clone())).collect();
    let k: Vec<Var> = params.keys.iter().map(|t| tape.constant(t.clone())).collect();
    let out = attention_on_tape(&mut tape, x, &q, &k)?;
    Ok(tape.value(out).clone())
}
