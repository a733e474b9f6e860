//! Single-block causal transformer with an exact hand-written backward pass.
//!
//! Layout: token + learned position embeddings, one single-head attention
//! block with residual, a tanh MLP with residual, and a linear readout to
//! vocabulary logits. Three observable layers for representation analysis:
//! 0 = embedding, 1 = post-attention residual, 2 = post-MLP residual (final).
//!
//! Prompts used for hidden-state extraction are left-padded with EOS to the
//! model's position budget so the last prompt token always sits at the same
//! position; padded positions are masked out of attention.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SodaError};
use crate::gradient::GradientVector;
use crate::numerics::{log_softmax, standard_normal, NeumaierSum};
use crate::sequence::SequenceExample;
use crate::vocab::Vocab;

/// Number of observable layers (embedding, attention, final).
pub const N_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerDims {
    pub vocab: u32,
    pub d_model: usize,
    pub n_positions: usize,
    pub mlp_dim: usize,
}

impl TransformerDims {
    pub fn param_count(&self) -> usize {
        let v = self.vocab as usize;
        let d = self.d_model;
        let p = self.n_positions;
        let m = self.mlp_dim;
        v * d + p * d + 4 * d * d + m * d + m + d * m + d + v * d + v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyTransformer {
    dims: TransformerDims,
    vocab: Vocab,
    /// All parameters, flattened in the documented order: tok_emb, pos_emb,
    /// wq, wk, wv, wo, w1, b1, w2, b2, w_out, b_out.
    params: Vec<f64>,
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    tok_emb: usize,
    pos_emb: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w_out: usize,
    b_out: usize,
}

impl TinyTransformer {
    pub fn random(vocab: Vocab, d_model: usize, n_positions: usize, mlp_dim: usize, init_scale: f64, seed: u64) -> Result<Self> {
        if d_model == 0 || n_positions == 0 || mlp_dim == 0 {
            return Err(SodaError::InvalidConfig(
                "transformer dims must be positive".into(),
            ));
        }
        let dims = TransformerDims {
            vocab: vocab.size(),
            d_model,
            n_positions,
            mlp_dim,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..dims.param_count())
            .map(|_| init_scale * standard_normal(&mut rng))
            .collect();
        Ok(Self {
            dims,
            vocab,
            params,
        })
    }

    pub fn from_flat(vocab: Vocab, dims: TransformerDims, params: Vec<f64>) -> Result<Self> {
        if dims.vocab != vocab.size() {
            return Err(SodaError::InvalidConfig(
                "dims vocab does not match vocab".into(),
            ));
        }
        if params.len() != dims.param_count() {
            return Err(SodaError::InvalidInput(format!(
                "expected {} parameters, got {}",
                dims.param_count(),
                params.len()
            )));
        }
        if !params.iter().all(|x| x.is_finite()) {
            return Err(SodaError::Numerical(
                "transformer parameters contain non-finite entries".into(),
            ));
        }
        Ok(Self {
            dims,
            vocab,
            params,
        })
    }

    pub fn dims(&self) -> TransformerDims {
        self.dims
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.params
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> Offsets {
        let v = self.dims.vocab as usize;
        let d = self.dims.d_model;
        let p = self.dims.n_positions;
        let m = self.dims.mlp_dim;
        let tok_emb = 0;
        let pos_emb = tok_emb + v * d;
        let wq = pos_emb + p * d;
        let wk = wq + d * d;
        let wv = wk + d * d;
        let wo = wv + d * d;
        let w1 = wo + d * d;
        let b1 = w1 + m * d;
        let w2 = b1 + m;
        let b2 = w2 + d * m;
        let w_out = b2 + d;
        let b_out = w_out + v * d;
        Offsets {
            tok_emb,
            pos_emb,
            wq,
            wk,
            wv,
            wo,
            w1,
            b1,
            w2,
            b2,
            w_out,
            b_out,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.dims.n_positions {
            return Err(SodaError::InvalidInput(format!(
                "sequence length {len} exceeds position budget {}",
                self.dims.n_positions
            )));
        }
        Ok(())
    }

    /// Full forward pass. `valid_from` marks the first non-padding position;
    /// attention never looks at positions before it.
    fn forward(&self, tokens: &[u32], valid_from: usize) -> Result<ForwardPass> {
        self.vocab.check_tokens(tokens)?;
        self.check_len(tokens.len())?;
        let t_len = tokens.len();
        let v = self.dims.vocab as usize;
        let d = self.dims.d_model;
        let m = self.dims.mlp_dim;
        let o = self.offsets();
        let p = &self.params;
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();

        let mut x = vec![0.0; t_len * d];
        for (t, &tok) in tokens.iter().enumerate() {
            let te = o.tok_emb + tok as usize * d;
            let pe = o.pos_emb + t * d;
            for i in 0..d {
                x[t * d + i] = p[te + i] + p[pe + i];
            }
        }

        let mut q = vec![0.0; t_len * d];
        let mut k = vec![0.0; t_len * d];
        let mut vv = vec![0.0; t_len * d];
        for t in 0..t_len {
            matvec(&p[o.wq..o.wq + d * d], &x[t * d..(t + 1) * d], &mut q[t * d..(t + 1) * d]);
            matvec(&p[o.wk..o.wk + d * d], &x[t * d..(t + 1) * d], &mut k[t * d..(t + 1) * d]);
            matvec(&p[o.wv..o.wv + d * d], &x[t * d..(t + 1) * d], &mut vv[t * d..(t + 1) * d]);
        }

        // causal attention restricted to non-padding keys
        let mut attn = Vec::with_capacity(t_len);
        let mut ctx = vec![0.0; t_len * d];
        for t in 0..t_len {
            let lo = if t < valid_from { t } else { valid_from };
            let mut scores: Vec<f64> = (lo..=t)
                .map(|s| dot(&q[t * d..(t + 1) * d], &k[s * d..(s + 1) * d]) * inv_sqrt_d)
                .collect();
            log_softmax(&mut scores)?;
            for s in &mut scores {
                *s = s.exp();
            }
            for (idx, s) in (lo..=t).enumerate() {
                let w = scores[idx];
                for i in 0..d {
                    ctx[t * d + i] += w * vv[s * d + i];
                }
            }
            attn.push((lo, scores));
        }

        let mut h1 = vec![0.0; t_len * d];
        for t in 0..t_len {
            let mut proj = vec![0.0; d];
            matvec(&p[o.wo..o.wo + d * d], &ctx[t * d..(t + 1) * d], &mut proj);
            for i in 0..d {
                h1[t * d + i] = x[t * d + i] + proj[i];
            }
        }

        let mut u = vec![0.0; t_len * m];
        let mut h2 = vec![0.0; t_len * d];
        for t in 0..t_len {
            let mut z = vec![0.0; m];
            matvec(&p[o.w1..o.w1 + m * d], &h1[t * d..(t + 1) * d], &mut z);
            for j in 0..m {
                u[t * m + j] = (z[j] + p[o.b1 + j]).tanh();
            }
            let mut mlp = vec![0.0; d];
            matvec(&p[o.w2..o.w2 + d * m], &u[t * m..(t + 1) * m], &mut mlp);
            for i in 0..d {
                h2[t * d + i] = h1[t * d + i] + mlp[i] + p[o.b2 + i];
            }
        }

        let mut logits = vec![0.0; t_len * v];
        for t in 0..t_len {
            matvec(&p[o.w_out..o.w_out + v * d], &h2[t * d..(t + 1) * d], &mut logits[t * v..(t + 1) * v]);
            for c in 0..v {
                logits[t * v + c] += p[o.b_out + c];
            }
        }
        if !logits.iter().all(|x| x.is_finite()) {
            return Err(SodaError::Numerical(
                "transformer forward produced non-finite logits".into(),
            ));
        }

        Ok(ForwardPass {
            tokens: tokens.to_vec(),
            x,
            q,
            k,
            v: vv,
            attn,
            ctx,
            h1,
            u,
            h2,
            logits,
        })
    }

    /// Backward pass from per-position logit gradients (t_len x V).
    fn backward(&self, fp: &ForwardPass, dlogits: &[f64]) -> GradientVector {
        let t_len = fp.tokens.len();
        let v = self.dims.vocab as usize;
        let d = self.dims.d_model;
        let m = self.dims.mlp_dim;
        let o = self.offsets();
        let p = &self.params;
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();

        let mut grad = GradientVector::zeros(self.param_count());
        let g = grad.as_mut_slice();

        // readout
        let mut dh2 = vec![0.0; t_len * d];
        for t in 0..t_len {
            let dl = &dlogits[t * v..(t + 1) * v];
            for c in 0..v {
                let dc = dl[c];
                if dc == 0.0 {
                    continue;
                }
                g[o.b_out + c] += dc;
                for i in 0..d {
                    g[o.w_out + c * d + i] += dc * fp.h2[t * d + i];
                    dh2[t * d + i] += p[o.w_out + c * d + i] * dc;
                }
            }
        }

        // MLP block with residual
        let mut dh1 = vec![0.0; t_len * d];
        for t in 0..t_len {
            let dm = &dh2[t * d..(t + 1) * d]; // gradient into mlp output + residual
            for i in 0..d {
                dh1[t * d + i] += dm[i];
                g[o.b2 + i] += dm[i];
            }
            let mut du = vec![0.0; m];
            for i in 0..d {
                let dmi = dm[i];
                if dmi == 0.0 {
                    continue;
                }
                for j in 0..m {
                    g[o.w2 + i * m + j] += dmi * fp.u[t * m + j];
                    du[j] += p[o.w2 + i * m + j] * dmi;
                }
            }
            for j in 0..m {
                let uj = fp.u[t * m + j];
                let dz = du[j] * (1.0 - uj * uj);
                g[o.b1 + j] += dz;
                for i in 0..d {
                    g[o.w1 + j * d + i] += dz * fp.h1[t * d + i];
                    dh1[t * d + i] += p[o.w1 + j * d + i] * dz;
                }
            }
        }

        // attention block with residual
        let mut dx = vec![0.0; t_len * d];
        let mut dq = vec![0.0; t_len * d];
        let mut dk = vec![0.0; t_len * d];
        let mut dv = vec![0.0; t_len * d];
        for t in 0..t_len {
            let dout = &dh1[t * d..(t + 1) * d];
            for i in 0..d {
                dx[t * d + i] += dout[i];
            }
            let mut dctx = vec![0.0; d];
            for i in 0..d {
                let doi = dout[i];
                if doi == 0.0 {
                    continue;
                }
                for j in 0..d {
                    g[o.wo + i * d + j] += doi * fp.ctx[t * d + j];
                    dctx[j] += p[o.wo + i * d + j] * doi;
                }
            }
            let (lo, weights) = &fp.attn[t];
            let lo = *lo;
            let mut da: Vec<f64> = (lo..=t)
                .map(|s| dot(&dctx, &fp.v[s * d..(s + 1) * d]))
                .collect();
            for (idx, s) in (lo..=t).enumerate() {
                let w = weights[idx];
                for i in 0..d {
                    dv[s * d + i] += w * dctx[i];
                }
            }
            let inner: f64 = weights.iter().zip(&da).map(|(w, a)| w * a).sum();
            for a in &mut da {
                *a -= inner;
            }
            for (idx, s) in (lo..=t).enumerate() {
                let dscore = weights[idx] * da[idx] * inv_sqrt_d;
                for i in 0..d {
                    dq[t * d + i] += dscore * fp.k[s * d + i];
                    dk[s * d + i] += dscore * fp.q[t * d + i];
                }
            }
        }
        for t in 0..t_len {
            accumulate_linear(
                g,
                &mut dx[t * d..(t + 1) * d],
                &p[o.wq..o.wq + d * d],
                o.wq,
                &dq[t * d..(t + 1) * d],
                &fp.x[t * d..(t + 1) * d],
                d,
            );
            accumulate_linear(
                g,
                &mut dx[t * d..(t + 1) * d],
                &p[o.wk..o.wk + d * d],
                o.wk,
                &dk[t * d..(t + 1) * d],
                &fp.x[t * d..(t + 1) * d],
                d,
            );
            accumulate_linear(
                g,
                &mut dx[t * d..(t + 1) * d],
                &p[o.wv..o.wv + d * d],
                o.wv,
                &dv[t * d..(t + 1) * d],
                &fp.x[t * d..(t + 1) * d],
                d,
            );
        }

        // embeddings
        for (t, &tok) in fp.tokens.iter().enumerate() {
            let te = o.tok_emb + tok as usize * d;
            let pe = o.pos_emb + t * d;
            for i in 0..d {
                g[te + i] += dx[t * d + i];
                g[pe + i] += dx[t * d + i];
            }
        }

        grad
    }

    pub fn next_token_log_probs(&self, context: &[u32]) -> Result<Vec<f64>> {
        if context.is_empty() {
            return Err(SodaError::InvalidInput("empty context".into()));
        }
        let fp = self.forward(context, 0)?;
        let v = self.dims.vocab as usize;
        let t = context.len() - 1;
        let mut row = fp.logits[t * v..(t + 1) * v].to_vec();
        log_softmax(&mut row)?;
        Ok(row)
    }

    pub fn logprob_sequence(&self, ex: &SequenceExample) -> Result<f64> {
        let (lp, _) = self.masked_log_probs(ex)?;
        Ok(lp)
    }

    /// Shared forward for masked log-prob computations. Returns the total
    /// masked log-prob and the forward cache over `prompt ++ response`.
    fn masked_log_probs(&self, ex: &SequenceExample) -> Result<(f64, ForwardPass)> {
        let tokens = ex.full_sequence();
        let fp = self.forward(&tokens, 0)?;
        let v = self.dims.vocab as usize;
        let prompt_len = ex.prompt.len();
        let mut total = NeumaierSum::new();
        for (i, &tok) in ex.response.iter().enumerate() {
            if ex.loss_mask[i] {
                let pos = prompt_len + i - 1;
                let mut row = fp.logits[pos * v..(pos + 1) * v].to_vec();
                log_softmax(&mut row)?;
                total.add(row[tok as usize]);
            }
        }
        Ok((total.value(), fp))
    }

    pub fn grad_logprob(&self, ex: &SequenceExample) -> Result<(f64, GradientVector)> {
        let tokens = ex.full_sequence();
        let fp = self.forward(&tokens, 0)?;
        let v = self.dims.vocab as usize;
        let prompt_len = ex.prompt.len();
        let mut total = NeumaierSum::new();
        let mut dlogits = vec![0.0; tokens.len() * v];
        for (i, &tok) in ex.response.iter().enumerate() {
            if ex.loss_mask[i] {
                let pos = prompt_len + i - 1;
                let mut row = fp.logits[pos * v..(pos + 1) * v].to_vec();
                log_softmax(&mut row)?;
                total.add(row[tok as usize]);
                for c in 0..v {
                    dlogits[pos * v + c] -= row[c].exp();
                }
                dlogits[pos * v + tok as usize] += 1.0;
            }
        }
        let grad = self.backward(&fp, &dlogits);
        Ok((total.value(), grad))
    }

    /// Mean raw logit of the realized token over masked positions.
    pub fn disc_score(&self, ex: &SequenceExample) -> Result<f64> {
        Ok(self.disc_score_forward(ex)?.0)
    }

    pub fn disc_score_and_grad(&self, ex: &SequenceExample) -> Result<(f64, GradientVector)> {
        let (score, fp, positions) = self.disc_score_forward(ex)?;
        let v = self.dims.vocab as usize;
        let n = positions.len() as f64;
        let mut dlogits = vec![0.0; fp.tokens.len() * v];
        for &(pos, tok) in &positions {
            dlogits[pos * v + tok as usize] += 1.0 / n;
        }
        let grad = self.backward(&fp, &dlogits);
        Ok((score, grad))
    }

    fn disc_score_forward(&self, ex: &SequenceExample) -> Result<ScoredForward> {
        if ex.masked_len() == 0 {
            return Err(SodaError::InvalidInput(
                "response has no masked positions to score".into(),
            ));
        }
        let tokens = ex.full_sequence();
        let fp = self.forward(&tokens, 0)?;
        let v = self.dims.vocab as usize;
        let prompt_len = ex.prompt.len();
        let mut positions = Vec::new();
        let mut total = NeumaierSum::new();
        for (i, &tok) in ex.response.iter().enumerate() {
            if ex.loss_mask[i] {
                let pos = prompt_len + i - 1;
                total.add(fp.logits[pos * v + tok as usize]);
                positions.push((pos, tok));
            }
        }
        Ok((total.value() / positions.len() as f64, fp, positions))
    }

    /// Hidden state of the last prompt token at the requested layer, with the
    /// prompt left-padded to the position budget.
    pub fn last_token_hidden(&self, prompt: &[u32], layer: usize) -> Result<Vec<f64>> {
        if layer >= N_LAYERS {
            return Err(SodaError::InvalidInput(format!(
                "layer {layer} out of range (model has {N_LAYERS} observable layers)"
            )));
        }
        if prompt.is_empty() {
            return Err(SodaError::InvalidInput("empty prompt".into()));
        }
        self.check_len(prompt.len())?;
        let p_total = self.dims.n_positions;
        let pad = p_total - prompt.len();
        let mut tokens = vec![self.vocab.eos(); pad];
        tokens.extend_from_slice(prompt);
        let fp = self.forward(&tokens, pad)?;
        let d = self.dims.d_model;
        let t = p_total - 1;
        let layer_data = match layer {
            0 => &fp.x,
            1 => &fp.h1,
            _ => &fp.h2,
        };
        Ok(layer_data[t * d..(t + 1) * d].to_vec())
    }
}

/// Score, forward cache, and the scored (position, token) pairs.
type ScoredForward = (f64, ForwardPass, Vec<(usize, u32)>);

/// Cached activations from one forward pass.
struct ForwardPass {
    tokens: Vec<u32>,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per query position: (first attended key, attention weights).
    attn: Vec<(usize, Vec<f64>)>,
    ctx: Vec<f64>,
    h1: Vec<f64>,
    u: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// out = W * x for row-major W (out_dim rows, in_dim cols).
fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let in_dim = x.len();
    for (o, slot) in out.iter_mut().enumerate() {
        *slot = dot(&w[o * in_dim..(o + 1) * in_dim], x);
    }
}

/// Accumulates dW += dy ⊗ x into the flat gradient at `w_offset` and
/// dx += Wᵀ dy for a linear layer y = W x.
fn accumulate_linear(
    g: &mut [f64],
    dx: &mut [f64],
    w: &[f64],
    w_offset: usize,
    dy: &[f64],
    x: &[f64],
    d: usize,
) {
    for o in 0..d {
        let dyo = dy[o];
        if dyo == 0.0 {
            continue;
        }
        for i in 0..d {
            g[w_offset + o * d + i] += dyo * x[i];
            dx[i] += w[o * d + i] * dyo;
        }
    }
}
