use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    relu_backward_inplace, relu_inplace, BatchNorm1d, BnCache, Conv1d, Matrix, MaxPool3, Mode, Padding,
    ParamVisitor, ParamVisitorMut, PoolCache, Scalar, Tensor3,
};
use crate::{Error, Result};

/// InceptionTime hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Overridden by the lead subset a bundle is built for.
    pub input_leads: usize,
    pub depth: usize,
    pub filters_per_branch: usize,
    pub kernel_lengths: [usize; 3],
    pub bottleneck_channels: usize,
    pub residual_every: usize,
    pub padding: Padding,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_leads: 12,
            depth: 6,
            filters_per_branch: 32,
            kernel_lengths: [39, 19, 9],
            bottleneck_channels: 32,
            residual_every: 3,
            padding: Padding::Zero,
        }
    }
}

impl EncoderConfig {
    pub fn for_leads(&self, leads: usize) -> Self {
        Self {
            input_leads: leads,
            ..self.clone()
        }
    }

    pub fn feature_dim(&self) -> usize {
        4 * self.filters_per_branch
    }

    pub fn max_kernel(&self) -> usize {
        self.kernel_lengths.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::invalid("encoder depth must be at least 1"));
        }
        if self.input_leads == 0 || self.filters_per_branch == 0 || self.bottleneck_channels == 0 {
            return Err(Error::invalid("encoder widths must be positive"));
        }
        if self.kernel_lengths.iter().any(|k| k % 2 == 0) {
            return Err(Error::invalid(format!(
                "kernel lengths must be odd, got {:?}",
                self.kernel_lengths
            )));
        }
        if self.residual_every == 0 {
            return Err(Error::invalid("residual_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct InceptionBlock<T> {
    bottleneck: Conv1d<T>,
    branches: [Conv1d<T>; 3],
    pool: MaxPool3,
    pool_conv: Conv1d<T>,
    bn: BatchNorm1d<T>,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    bottleneck_out: Tensor3<T>,
    pooled: Tensor3<T>,
    pool_cache: PoolCache,
    bn_cache: BnCache<T>,
    /// ReLU(BN(concat)) before any residual addition.
    out: Tensor3<T>,
}

impl<T: Scalar> InceptionBlock<T> {
    fn new<R: Rng>(in_ch: usize, cfg: &EncoderConfig, rng: &mut R) -> Self {
        let f = cfg.filters_per_branch;
        let b = cfg.bottleneck_channels;
        let p = cfg.padding;
        Self {
            bottleneck: Conv1d::without_bias(in_ch, b, 1, p, rng),
            branches: cfg.kernel_lengths.map(|k| Conv1d::without_bias(b, f, k, p, rng)),
            pool: MaxPool3 { padding: p },
            pool_conv: Conv1d::without_bias(in_ch, f, 1, p, rng),
            bn: BatchNorm1d::new(4 * f),
        }
    }

    fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> BlockCache<T> {
        let bottleneck_out = self.bottleneck.forward(x);
        let z: Vec<Tensor3<T>> = self.branches.iter().map(|c| c.forward(&bottleneck_out)).collect();
        let (pooled, pool_cache) = self.pool.forward(x);
        let zp = self.pool_conv.forward(&pooled);
        let cat = Tensor3::concat_channels(&[&z[0], &z[1], &z[2], &zp]);
        let (mut out, bn_cache) = self.bn.forward(&cat, mode);
        relu_inplace(&mut out.data);
        BlockCache {
            bottleneck_out,
            pooled,
            pool_cache,
            bn_cache,
            out,
        }
    }

    /// `d_out` is the gradient w.r.t. the block's post-ReLU output.
    fn backward(&mut self, x: &Tensor3<T>, cache: &BlockCache<T>, mut d_out: Tensor3<T>, need_dx: bool) -> Option<Tensor3<T>> {
        relu_backward_inplace(&cache.out.data, &mut d_out.data);
        let d_cat = self.bn.backward(&cache.bn_cache, &d_out);
        let f = self.pool_conv.out_ch;
        let parts = d_cat.split_channels(&[f, f, f, f]);
        let mut d_bott = Tensor3::zeros(x.n, self.bottleneck.out_ch, x.t);
        for (conv, d) in self.branches.iter_mut().zip(&parts) {
            let g = conv.backward(&cache.bottleneck_out, d, true).expect("input grad");
            d_bott.add_assign(&g);
        }
        let dx_bott = self.bottleneck.backward(x, &d_bott, need_dx);
        let d_pooled = self.pool_conv.backward(&cache.pooled, &parts[3], need_dx);
        match (dx_bott, d_pooled) {
            (Some(mut dx), Some(dp)) => {
                dx.add_assign(&self.pool.backward(&cache.pool_cache, &dp));
                Some(dx)
            }
            _ => None,
        }
    }

    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.bottleneck.visit(&format!("{prefix}.bottleneck"), f);
        for (i, b) in self.branches.iter().enumerate() {
            b.visit(&format!("{prefix}.branch{i}"), f);
        }
        self.pool_conv.visit(&format!("{prefix}.pool_conv"), f);
        self.bn.visit(&format!("{prefix}.bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        self.bottleneck.visit_mut(&format!("{prefix}.bottleneck"), f);
        for (i, b) in self.branches.iter_mut().enumerate() {
            b.visit_mut(&format!("{prefix}.branch{i}"), f);
        }
        self.pool_conv.visit_mut(&format!("{prefix}.pool_conv"), f);
        self.bn.visit_mut(&format!("{prefix}.bn"), f);
    }
}

/// 1x1 convolution + batch norm added to a block output.
#[derive(Debug, Clone)]
struct Shortcut<T> {
    /// Index into the activation list that feeds this shortcut.
    source: usize,
    conv: Conv1d<T>,
    bn: BatchNorm1d<T>,
}

#[derive(Debug, Clone)]
struct ShortcutCache<T> {
    bn_cache: BnCache<T>,
}

/// Stack of inception blocks with periodic residual shortcuts, followed by
/// global average pooling over time.
#[derive(Debug, Clone)]
pub struct InceptionEncoder<T> {
    config: EncoderConfig,
    blocks: Vec<InceptionBlock<T>>,
    shortcuts: Vec<Option<Shortcut<T>>>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    /// `acts[0]` is the input; `acts[i + 1]` the output of block `i`
    /// (after its residual, if any).
    acts: Vec<Tensor3<T>>,
    blocks: Vec<BlockCache<T>>,
    shortcuts: Vec<Option<ShortcutCache<T>>>,
}

impl<T: Scalar> InceptionEncoder<T> {
    pub fn new<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let width = config.feature_dim();
        let mut blocks = Vec::with_capacity(config.depth);
        let mut shortcuts = Vec::with_capacity(config.depth);
        let mut source = 0;
        let mut source_ch = config.input_leads;
        for d in 0..config.depth {
            let in_ch = if d == 0 { config.input_leads } else { width };
            blocks.push(InceptionBlock::new(in_ch, config, rng));
            if (d + 1) % config.residual_every == 0 {
                shortcuts.push(Some(Shortcut {
                    source,
                    conv: Conv1d::without_bias(source_ch, width, 1, config.padding, rng),
                    bn: BatchNorm1d::new(width),
                }));
                source = d + 1;
                source_ch = width;
            } else {
                shortcuts.push(None);
            }
        }
        Ok(Self {
            config: config.clone(),
            blocks,
            shortcuts,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    pub fn check_input(&self, x: &Tensor3<T>) -> Result<()> {
        if x.c != self.config.input_leads {
            return Err(Error::shape(format!(
                "encoder expects {} leads, got {}",
                self.config.input_leads, x.c
            )));
        }
        if x.t < self.config.max_kernel() {
            return Err(Error::shape(format!(
                "signal has {} samples, shorter than the longest kernel ({})",
                x.t,
                self.config.max_kernel()
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: Tensor3<T>, mode: Mode) -> Result<(Matrix<T>, EncoderCache<T>)> {
        self.check_input(&x)?;
        let mut acts = vec![x];
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut sc_caches = Vec::with_capacity(self.blocks.len());
        for (block, shortcut) in self.blocks.iter_mut().zip(self.shortcuts.iter_mut()) {
            let cache = block.forward(acts.last().expect("input"), mode);
            let mut out = cache.out.clone();
            let sc_cache = shortcut.as_mut().map(|s| {
                let proj = s.conv.forward(&acts[s.source]);
                let (normed, bn_cache) = s.bn.forward(&proj, mode);
                out.add_assign(&normed);
                relu_inplace(&mut out.data);
                ShortcutCache { bn_cache }
            });
            acts.push(out);
            caches.push(cache);
            sc_caches.push(sc_cache);
        }
        let features = acts.last().expect("output").mean_over_time();
        Ok((
            features,
            EncoderCache {
                acts,
                blocks: caches,
                shortcuts: sc_caches,
            },
        ))
    }

    /// Accumulates parameter gradients from `d_features`.
    pub fn backward(&mut self, cache: &EncoderCache<T>, d_features: &Matrix<T>) {
        let depth = self.blocks.len();
        let t = cache.acts[0].t;
        let mut grads: Vec<Option<Tensor3<T>>> = vec![None; depth + 1];
        grads[depth] = Some(Tensor3::broadcast_time_grad(d_features, t));
        for i in (0..depth).rev() {
            let mut g = grads[i + 1].take().expect("gradient reaches every block output");
            if let (Some(s), Some(sc)) = (self.shortcuts[i].as_mut(), cache.shortcuts[i].as_ref()) {
                relu_backward_inplace(&cache.acts[i + 1].data, &mut g.data);
                let d_proj = s.bn.backward(&sc.bn_cache, &g);
                let need = s.source > 0;
                if let Some(d_src) = s.conv.backward(&cache.acts[s.source], &d_proj, need) {
                    accumulate(&mut grads[s.source], d_src);
                }
            }
            let need_dx = i > 0;
            if let Some(dx) = self.blocks[i].backward(&cache.acts[i], &cache.blocks[i], g, need_dx) {
                accumulate(&mut grads[i], dx);
            }
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        for (i, (b, s)) in self.blocks.iter().zip(&self.shortcuts).enumerate() {
            b.visit(&format!("{prefix}.block{i}"), f);
            if let Some(s) = s {
                s.conv.visit(&format!("{prefix}.shortcut{i}.conv"), f);
                s.bn.visit(&format!("{prefix}.shortcut{i}.bn"), f);
            }
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        for (i, (b, s)) in self.blocks.iter_mut().zip(self.shortcuts.iter_mut()).enumerate() {
            b.visit_mut(&format!("{prefix}.block{i}"), f);
            if let Some(s) = s {
                s.conv.visit_mut(&format!("{prefix}.shortcut{i}.conv"), f);
                s.bn.visit_mut(&format!("{prefix}.shortcut{i}.bn"), f);
            }
        }
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor3<T>>, g: Tensor3<T>) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}
