//! Expression-side conditioning: AdaIN modulation (with its backward pass),
//! packing of the 512-d expression latent into 32×16 tokens, and the
//! cross-attention that consumes those tokens.
//!
//! In the motion-trainer decoder the expression latent is concatenated after
//! a 2048-d appearance latent to form a 2560-d style code; that style code is
//! what a [`StyleMapping`] turns into per-channel `(γ, β)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const EXPRESSION_DIM: usize = 512;
pub const EXPRESSION_TOKENS: usize = 32;
pub const EXPRESSION_TOKEN_DIM: usize = 16;
pub const DEFAULT_ADAIN_EPS: f64 = 1e-5;

/// 512-d expression code.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionLatent(Vec<f64>);

impl ExpressionLatent {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != EXPRESSION_DIM {
            return Err(Error::AxisMismatch {
                axis: "expression latent",
                expected: EXPRESSION_DIM,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; EXPRESSION_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Expression latent viewed as 32 tokens of 16 dims: `[32, 16]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTokens(Tensor);

impl ExpressionTokens {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.0.data()[i * EXPRESSION_TOKEN_DIM..][..EXPRESSION_TOKEN_DIM]
    }
}

/// Row-major split of the latent into 32 × 16 tokens.
pub fn pack_expression_tokens(z: &ExpressionLatent) -> ExpressionTokens {
    ExpressionTokens(
        Tensor::new(vec![EXPRESSION_TOKENS, EXPRESSION_TOKEN_DIM], z.0.clone())
            .expect("512 = 32 x 16"),
    )
}

pub fn unpack_expression_tokens(tokens: &ExpressionTokens) -> ExpressionLatent {
    ExpressionLatent(tokens.0.data().to_vec())
}

/// Per-channel gain and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl StyleParams {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if gamma.len() != beta.len() {
            return Err(Error::AxisMismatch {
                axis: "beta",
                expected: gamma.len(),
                actual: beta.len(),
            });
        }
        if let Some(index) = gamma.iter().chain(&beta).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { gamma, beta })
    }

    /// `γ = 1`, `β = 0`.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Affine style-code → `(γ, β)` map: `γ = 1 + W_γ·z`, `β = W_β·z`, both
/// weights `[C, L]`. Zero weights give identity modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleMapping {
    pub w_gamma: Tensor,
    pub w_beta: Tensor,
}

impl StyleMapping {
    pub fn zeros(channels: usize, code_dim: usize) -> Result<Self> {
        Ok(Self {
            w_gamma: Tensor::zeros(&[channels, code_dim])?,
            w_beta: Tensor::zeros(&[channels, code_dim])?,
        })
    }

    pub fn style_params(&self, code: &[f64]) -> Result<StyleParams> {
        let matvec = |w: &Tensor, axis: &'static str| -> Result<Vec<f64>> {
            if w.rank() != 2 || w.shape()[1] != code.len() {
                return Err(Error::AxisMismatch {
                    axis,
                    expected: code.len(),
                    actual: *w.shape().last().unwrap_or(&0),
                });
            }
            Ok(w.data()
                .chunks_exact(code.len())
                .map(|row| row.iter().zip(code).map(|(a, b)| a * b).sum())
                .collect())
        };
        let g = matvec(&self.w_gamma, "gamma weight")?;
        let b = matvec(&self.w_beta, "beta weight")?;
        StyleParams::new(g.into_iter().map(|x| 1.0 + x).collect(), b)
    }
}

fn channel_view(content: &Tensor, style: &StyleParams) -> Result<(usize, usize)> {
    if content.rank() < 2 {
        return Err(Error::shape(format!(
            "content must be [C, *spatial], got {:?}",
            content.shape()
        )));
    }
    let channels = content.shape()[0];
    if channels != style.channels() {
        return Err(Error::AxisMismatch {
            axis: "channel",
            expected: channels,
            actual: style.channels(),
        });
    }
    Ok((channels, content.len() / channels))
}

/// Per-channel mean and (population) variance.
fn channel_stats(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Adaptive instance normalization:
/// `out = γ·(x − μ)/√(σ² + eps) + β` per channel, with spatial statistics.
pub fn adain(content: &Tensor, style: &StyleParams, eps: f64) -> Result<Tensor> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let (_, spatial) = channel_view(content, style)?;
    let mut out = content.data().to_vec();
    for (c, chunk) in out.chunks_exact_mut(spatial).enumerate() {
        let (mean, var) = channel_stats(chunk);
        let inv = 1.0 / (var + eps).sqrt();
        let (g, b) = (style.gamma[c], style.beta[c]);
        chunk
            .iter_mut()
            .for_each(|x| *x = g * ((*x - mean) * inv) + b);
    }
    Tensor::new(content.shape().to_vec(), out)
}

/// Gradients of [`adain`] given the upstream gradient `∂L/∂out`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdainGrad {
    pub d_content: Tensor,
    pub d_gamma: Vec<f64>,
    pub d_beta: Vec<f64>,
}

pub fn adain_grad(
    content: &Tensor,
    style: &StyleParams,
    upstream: &Tensor,
    eps: f64,
) -> Result<AdainGrad> {
    content.expect_same_shape(upstream)?;
    let (channels, spatial) = channel_view(content, style)?;
    let n = spatial as f64;
    let mut d_content = vec![0.0; content.len()];
    let mut d_gamma = vec![0.0; channels];
    let mut d_beta = vec![0.0; channels];
    for c in 0..channels {
        let x = &content.data()[c * spatial..][..spatial];
        let g = &upstream.data()[c * spatial..][..spatial];
        let (mean, var) = channel_stats(x);
        let inv = 1.0 / (var + eps).sqrt();
        let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv).collect();
        let sum_g: f64 = g.iter().sum();
        let sum_gx: f64 = g.iter().zip(&xhat).map(|(a, b)| a * b).sum();
        d_beta[c] = sum_g;
        d_gamma[c] = sum_gx;
        let k = style.gamma[c] * inv;
        for i in 0..spatial {
            d_content[c * spatial + i] = k * (g[i] - sum_g / n - xhat[i] * sum_gx / n);
        }
    }
    Ok(AdainGrad {
        d_content: Tensor::new(content.shape().to_vec(), d_content)?,
        d_gamma,
        d_beta,
    })
}

/// Projection weights for [`cross_attention`]. Every matrix is stored
/// `[out, in]` and applied as `y = W·x` per token.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub heads: usize,
}

impl AttentionWeights {
    /// Identity projections with `d_model = d = dk`.
    pub fn identity(dim: usize, heads: usize) -> Result<Self> {
        let eye = Tensor::from_fn(&[dim, dim], |k| if k / dim == k % dim { 1.0 } else { 0.0 })?;
        Ok(Self {
            w_q: eye.clone(),
            w_k: eye.clone(),
            w_v: eye.clone(),
            w_o: eye,
            heads,
        })
    }

    fn d_model(&self) -> usize {
        self.w_q.shape()[0]
    }
}

/// Token-wise `x·Wᵀ`: `[n, in] → [n, out]`.
fn project(x: &Tensor, w: &Tensor, name: &'static str) -> Result<Vec<f64>> {
    let d_in = x.shape()[1];
    if w.rank() != 2 || w.shape()[1] != d_in {
        return Err(Error::AxisMismatch {
            axis: name,
            expected: d_in,
            actual: *w.shape().last().unwrap_or(&0),
        });
    }
    let d_out = w.shape()[0];
    let mut out = Vec::with_capacity(x.shape()[0] * d_out);
    for row in x.data().chunks_exact(d_in) {
        for wrow in w.data().chunks_exact(d_in) {
            out.push(wrow.iter().zip(row).map(|(a, b)| a * b).sum());
        }
    }
    Ok(out)
}

/// Output of [`cross_attention_with_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `[Nq, d]`.
    pub output: Tensor,
    /// `[heads, Nq, Nk]`, rows sum to one.
    pub attention: Tensor,
}

/// `softmax(Q·Kᵀ/√d_head)·V`, split over `heads`, then the output projection.
pub fn cross_attention(
    queries: &Tensor,
    tokens: &Tensor,
    weights: &AttentionWeights,
) -> Result<Tensor> {
    Ok(cross_attention_with_weights(queries, tokens, weights)?.output)
}

pub fn cross_attention_with_weights(
    queries: &Tensor,
    tokens: &Tensor,
    weights: &AttentionWeights,
) -> Result<AttentionOutput> {
    if queries.rank() != 2 || tokens.rank() != 2 {
        return Err(Error::shape("queries and tokens must both be [N, dim]"));
    }
    let d_model = weights.d_model();
    let heads = weights.heads;
    if heads == 0 || d_model % heads != 0 {
        return Err(Error::invalid(format!(
            "model width {d_model} is not divisible into {heads} heads"
        )));
    }
    for (w, name) in [
        (&weights.w_k, "key projection"),
        (&weights.w_v, "value projection"),
    ] {
        if w.shape()[0] != d_model {
            return Err(Error::AxisMismatch {
                axis: name,
                expected: d_model,
                actual: w.shape()[0],
            });
        }
    }
    if weights.w_o.rank() != 2 || weights.w_o.shape()[1] != d_model {
        return Err(Error::AxisMismatch {
            axis: "output projection",
            expected: d_model,
            actual: *weights.w_o.shape().last().unwrap_or(&0),
        });
    }
    let nq = queries.shape()[0];
    let nk = tokens.shape()[0];
    let q = project(queries, &weights.w_q, "query projection")?;
    let k = project(tokens, &weights.w_k, "key projection")?;
    let v = project(tokens, &weights.w_v, "value projection")?;

    let d_head = d_model / heads;
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut attn = vec![0.0; heads * nq * nk];
    let mut mixed = vec![0.0; nq * d_model];
    for h in 0..heads {
        let off = h * d_head;
        for i in 0..nq {
            let qi = &q[i * d_model + off..][..d_head];
            let row = &mut attn[(h * nq + i) * nk..][..nk];
            for (j, a) in row.iter_mut().enumerate() {
                let kj = &k[j * d_model + off..][..d_head];
                *a = scale * qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>();
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|a| *a = (*a - max).exp());
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|a| *a /= total);
            let out = &mut mixed[i * d_model + off..][..d_head];
            for (j, &a) in row.iter().enumerate() {
                let vj = &v[j * d_model + off..][..d_head];
                out.iter_mut().zip(vj).for_each(|(o, x)| *o += a * x);
            }
        }
    }
    let mixed = Tensor::new(vec![nq, d_model], mixed)?;
    let out_dim = weights.w_o.shape()[0];
    let output = Tensor::new(
        vec![nq, out_dim],
        project(&mixed, &weights.w_o, "output projection")?,
    )?;
    Ok(AttentionOutput {
        output,
        attention: Tensor::new(vec![heads, nq, nk], attn)?,
    })
}
