use super::params::{ParamSpec, ParamStore};
use super::ModelConfig;
use crate::tensor::{
    self, add, add_assign, concat_channels, conv2d, conv2d_vjp, global_avg_pool, global_avg_pool_vjp,
    leaky_relu, leaky_relu_vjp, mul_broadcast, mul_broadcast_vjp, sigmoid, sigmoid_vjp, split_channels,
    ConvSpec, Scalar, Tensor4,
};
use crate::Result;

/// A named convolution layer; weight and bias live in the store under
/// `<name>.weight` and `<name>.bias`.
#[derive(Clone, Debug)]
pub struct Conv {
    weight: String,
    bias: String,
    spec: ConvSpec,
}

impl Conv {
    pub fn new(name: &str, spec: ConvSpec) -> Self {
        Conv {
            weight: format!("{name}.weight"),
            bias: format!("{name}.bias"),
            spec,
        }
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weight_name(&self) -> &str {
        &self.weight
    }

    pub fn bias_name(&self) -> &str {
        &self.bias
    }

    pub fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(ParamSpec {
            name: self.weight.clone(),
            shape: self.spec.weight_dims().to_vec(),
            fan_in: Some(self.spec.fan_in()),
        });
        out.push(ParamSpec {
            name: self.bias.clone(),
            shape: vec![self.spec.out_channels],
            fan_in: None,
        });
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        conv2d(
            x,
            &self.spec,
            store.value(&self.weight)?,
            store.value(&self.bias)?.data(),
        )
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        x: &Tensor4<T>,
        upstream: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let g = conv2d_vjp(x, &self.spec, store.value(&self.weight)?, upstream)?;
        store.accumulate(&self.weight, &g.weight)?;
        let gb = Tensor4::from_vec([self.spec.out_channels, 1, 1, 1], g.bias)?;
        store.accumulate(&self.bias, &gb)?;
        Ok(g.input)
    }
}

/// Squeeze-and-gate channel attention: `σ(W_U · LReLU(W_D · gap(f)))`, with
/// `W_D: C → C/r` and `W_U: C/r → C` as 1×1 convolutions on the pooled map.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    pub down: Conv,
    pub up: Conv,
    slope: f64,
}

#[derive(Clone, Debug)]
pub struct ChannelAttentionCache<T> {
    pooled: Tensor4<T>,
    down: Tensor4<T>,
    act: Tensor4<T>,
    gate: Tensor4<T>,
}

impl<T: Scalar> ChannelAttentionCache<T> {
    pub fn gate(&self) -> &Tensor4<T> {
        &self.gate
    }
}

impl ChannelAttention {
    pub fn new(prefix: &str, cfg: &ModelConfig) -> Self {
        let c = cfg.channels;
        let reduced = c / cfg.ca_reduction;
        ChannelAttention {
            down: Conv::new(&format!("{prefix}.down"), ConvSpec::same(c, reduced, 1, 1)),
            up: Conv::new(&format!("{prefix}.up"), ConvSpec::same(reduced, c, 1, 1)),
            slope: cfg.leaky_slope as f64,
        }
    }

    pub fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        self.down.param_specs(out);
        self.up.param_specs(out);
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        f: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, ChannelAttentionCache<T>)> {
        let pooled = global_avg_pool(f)?;
        let down = self.down.forward(store, &pooled)?;
        let act = leaky_relu(&down, T::of(self.slope));
        let gate = sigmoid(&self.up.forward(store, &act)?);
        Ok((
            gate.clone(),
            ChannelAttentionCache {
                pooled,
                down,
                act,
                gate,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        f: &Tensor4<T>,
        cache: &ChannelAttentionCache<T>,
        grad_gate: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let g_up = sigmoid_vjp(&cache.gate, grad_gate)?;
        let g_act = self.up.backward(store, &cache.act, &g_up)?;
        let g_down = leaky_relu_vjp(&cache.down, T::of(self.slope), &g_act)?;
        let g_pooled = self.down.backward(store, &cache.pooled, &g_down)?;
        global_avg_pool_vjp(&g_pooled, f.h(), f.w())
    }
}

/// Two-stage dilated-convolution spatial attention:
///
/// ```text
/// S1 = LReLU(DC1(f))            S2 = LReLU(DC2(f) + S1)        S  = [S1, S2]
/// T1 = LReLU(DC1'(S))           T2 = LReLU(DC2'(S) + T1)
/// out = Conv1x1([T1, T2])       (linear bottleneck)
/// ```
///
/// Stage 1 maps `C → C`, stage 2 maps the `2C` concat back to `C`, and the
/// bottleneck reduces `2C → C`.
#[derive(Clone, Debug)]
pub struct SpatialAttention {
    pub stage1: (Conv, Conv),
    pub stage2: (Conv, Conv),
    pub fuse: Conv,
    channels: usize,
    slope: f64,
}

#[derive(Clone, Debug)]
pub struct SpatialAttentionCache<T> {
    pre1: Tensor4<T>,
    pre2: Tensor4<T>,
    s: Tensor4<T>,
    pre3: Tensor4<T>,
    pre4: Tensor4<T>,
    t: Tensor4<T>,
}

impl SpatialAttention {
    pub fn new(prefix: &str, cfg: &ModelConfig) -> Self {
        let c = cfg.channels;
        let (d1, d2) = cfg.dilations;
        let conv = |name: &str, cin, cout, k, d| {
            Conv::new(&format!("{prefix}.{name}"), ConvSpec::same(cin, cout, k, d))
        };
        SpatialAttention {
            stage1: (conv("stage1.d1", c, c, 3, d1), conv("stage1.d2", c, c, 3, d2)),
            stage2: (
                conv("stage2.d1", 2 * c, c, 3, d1),
                conv("stage2.d2", 2 * c, c, 3, d2),
            ),
            fuse: conv("fuse", 2 * c, c, 1, 1),
            channels: c,
            slope: cfg.leaky_slope as f64,
        }
    }

    pub fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        for conv in [
            &self.stage1.0,
            &self.stage1.1,
            &self.stage2.0,
            &self.stage2.1,
            &self.fuse,
        ] {
            conv.param_specs(out);
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        f: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, SpatialAttentionCache<T>)> {
        let slope = T::of(self.slope);
        let pre1 = self.stage1.0.forward(store, f)?;
        let s1 = leaky_relu(&pre1, slope);
        let pre2 = add(&self.stage1.1.forward(store, f)?, &s1)?;
        let s2 = leaky_relu(&pre2, slope);
        let s = concat_channels(&[&s1, &s2])?;

        let pre3 = self.stage2.0.forward(store, &s)?;
        let t1 = leaky_relu(&pre3, slope);
        let pre4 = add(&self.stage2.1.forward(store, &s)?, &t1)?;
        let t2 = leaky_relu(&pre4, slope);
        let t = concat_channels(&[&t1, &t2])?;

        let out = self.fuse.forward(store, &t)?;
        Ok((
            out,
            SpatialAttentionCache {
                pre1,
                pre2,
                s,
                pre3,
                pre4,
                t,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        f: &Tensor4<T>,
        cache: &SpatialAttentionCache<T>,
        upstream: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let slope = T::of(self.slope);
        let c = self.channels;

        let g_t = self.fuse.backward(store, &cache.t, upstream)?;
        let mut parts = split_channels(&g_t, &[c, c])?;
        let (mut g_t1, g_t2) = (parts.remove(0), parts.remove(0));
        let g_pre4 = leaky_relu_vjp(&cache.pre4, slope, &g_t2)?;
        add_assign(&mut g_t1, &g_pre4)?;
        let mut g_s = self.stage2.1.backward(store, &cache.s, &g_pre4)?;
        let g_pre3 = leaky_relu_vjp(&cache.pre3, slope, &g_t1)?;
        add_assign(&mut g_s, &self.stage2.0.backward(store, &cache.s, &g_pre3)?)?;

        let mut parts = split_channels(&g_s, &[c, c])?;
        let (mut g_s1, g_s2) = (parts.remove(0), parts.remove(0));
        let g_pre2 = leaky_relu_vjp(&cache.pre2, slope, &g_s2)?;
        add_assign(&mut g_s1, &g_pre2)?;
        let mut g_f = self.stage1.1.backward(store, f, &g_pre2)?;
        let g_pre1 = leaky_relu_vjp(&cache.pre1, slope, &g_s1)?;
        add_assign(&mut g_f, &self.stage1.0.backward(store, f, &g_pre1)?)?;
        Ok(g_f)
    }
}

/// Hybrid residual attention block: `SA(f) ⊙ CA(f) + f`.
#[derive(Clone, Debug)]
pub struct Hrab {
    pub sa: SpatialAttention,
    pub ca: ChannelAttention,
}

#[derive(Clone, Debug)]
pub struct HrabCache<T> {
    sa_out: Tensor4<T>,
    sa: SpatialAttentionCache<T>,
    ca: ChannelAttentionCache<T>,
}

impl Hrab {
    pub fn new(prefix: &str, cfg: &ModelConfig) -> Self {
        Hrab {
            sa: SpatialAttention::new(&format!("{prefix}.sa"), cfg),
            ca: ChannelAttention::new(&format!("{prefix}.ca"), cfg),
        }
    }

    pub fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        self.sa.param_specs(out);
        self.ca.param_specs(out);
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        f: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, HrabCache<T>)> {
        let (sa_out, sa) = self.sa.forward(store, f)?;
        let (gate, ca) = self.ca.forward(store, f)?;
        let out = add(&mul_broadcast(&sa_out, &gate)?, f)?;
        Ok((out, HrabCache { sa_out, sa, ca }))
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        f: &Tensor4<T>,
        cache: &HrabCache<T>,
        upstream: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let (g_sa, g_gate) = mul_broadcast_vjp(&cache.sa_out, cache.ca.gate(), upstream)?;
        let mut g_f = upstream.clone();
        add_assign(&mut g_f, &self.sa.backward(store, f, &cache.sa, &g_sa)?)?;
        add_assign(&mut g_f, &self.ca.backward(store, f, &cache.ca, &g_gate)?)?;
        Ok(g_f)
    }
}

/// `B` chained HRABs, a trailing 3×3 conv, and a long skip around the group.
#[derive(Clone, Debug)]
pub struct ResidualGroup {
    pub blocks: Vec<Hrab>,
    pub tail: Conv,
}

#[derive(Clone, Debug)]
pub struct ResidualGroupCache<T> {
    /// Input of every block, then the input of the tail conv.
    inputs: Vec<Tensor4<T>>,
    blocks: Vec<HrabCache<T>>,
}

impl ResidualGroup {
    pub fn new(prefix: &str, cfg: &ModelConfig) -> Self {
        ResidualGroup {
            blocks: (0..cfg.hrab_per_rg)
                .map(|b| Hrab::new(&format!("{prefix}.hrab.{b}"), cfg))
                .collect(),
            tail: Conv::new(
                &format!("{prefix}.tail"),
                ConvSpec::same(cfg.channels, cfg.channels, 3, 1),
            ),
        }
    }

    pub fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        self.blocks.iter().for_each(|b| b.param_specs(out));
        self.tail.param_specs(out);
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        f: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, ResidualGroupCache<T>)> {
        let mut inputs = Vec::with_capacity(self.blocks.len() + 1);
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = f.clone();
        for block in &self.blocks {
            let (next, cache) = block.forward(store, &h)?;
            inputs.push(h);
            caches.push(cache);
            h = next;
        }
        let out = add(&self.tail.forward(store, &h)?, f)?;
        inputs.push(h);
        Ok((
            out,
            ResidualGroupCache {
                inputs,
                blocks: caches,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        f: &Tensor4<T>,
        cache: &ResidualGroupCache<T>,
        upstream: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let last = cache.inputs.last().unwrap_or(f);
        let mut g = self.tail.backward(store, last, upstream)?;
        for (k, block) in self.blocks.iter().enumerate().rev() {
            g = block.backward(store, &cache.inputs[k], &cache.blocks[k], &g)?;
        }
        tensor::add_assign(&mut g, upstream)?;
        Ok(g)
    }
}
