use indexmap::IndexMap;

use super::blocks::{Conv, ResidualGroup, ResidualGroupCache};
use super::fusion::{Fusion, FusionCache};
use super::params::{ParamSpec, ParamStore};
use super::ModelConfig;
use crate::data::Rng;
use crate::tensor::{add, add_assign, check_dim, pixel_shuffle, pixel_unshuffle, ConvSpec, Scalar, Tensor4};
use crate::{Error, Result};

/// Sub-pixel reconstruction: `Conv3×3(C → C·s²) → shuffle(s) → Conv3×3(C → 3)`.
#[derive(Clone, Debug)]
pub struct Reconstruct {
    pub expand: Conv,
    pub out: Conv,
    scale: usize,
}

#[derive(Clone, Debug)]
struct ReconstructCache<T> {
    shuffled: Tensor4<T>,
}

impl Reconstruct {
    pub fn new(cfg: &ModelConfig) -> Self {
        let c = cfg.channels;
        let s = cfg.scale;
        Reconstruct {
            expand: Conv::new("recon.expand", ConvSpec::same(c, c * s * s, 3, 1)),
            out: Conv::new("recon.out", ConvSpec::same(c, cfg.out_channels, 3, 1)),
            scale: s,
        }
    }

    pub fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        self.expand.param_specs(out);
        self.out.param_specs(out);
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, f: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(self.forward_cached(store, f)?.0)
    }

    fn forward_cached<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        f: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, ReconstructCache<T>)> {
        let shuffled = pixel_shuffle(&self.expand.forward(store, f)?, self.scale)?;
        let out = self.out.forward(store, &shuffled)?;
        Ok((out, ReconstructCache { shuffled }))
    }

    fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        f: &Tensor4<T>,
        cache: &ReconstructCache<T>,
        upstream: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let g_shuffled = self.out.backward(store, &cache.shuffled, upstream)?;
        let g_expanded = pixel_unshuffle(&g_shuffled, self.scale)?;
        self.expand.backward(store, f, &g_expanded)
    }
}

/// The full network.
#[derive(Clone, Debug)]
pub struct Hran {
    cfg: ModelConfig,
    pub head: (Conv, Conv),
    pub groups: Vec<ResidualGroup>,
    pub fusion: Fusion,
    pub recon: Reconstruct,
}

#[derive(Clone, Debug)]
struct NetCache<T> {
    input: Tensor4<T>,
    f0: Tensor4<T>,
    f1: Tensor4<T>,
    group_outputs: Vec<Tensor4<T>>,
    groups: Vec<ResidualGroupCache<T>>,
    fusion: FusionCache<T>,
    deep: Tensor4<T>,
    recon: ReconstructCache<T>,
}

/// Activations retained by [`Hran::forward_train`] for one backward pass.
///
/// The cache is consumed by [`Hran::backward`] and is tied to the parameter
/// store version it was computed against.
#[derive(Clone, Debug)]
pub struct BlockOutputCache<T = f32> {
    inner: Option<NetCache<T>>,
    version: u64,
}

impl<T> BlockOutputCache<T> {
    pub fn is_live(&self) -> bool {
        self.inner.is_some()
    }
}

impl Hran {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        Ok(Hran {
            head: (
                Conv::new("head.0", ConvSpec::same(cfg.in_channels, c, 3, 1)),
                Conv::new("head.1", ConvSpec::same(c, c, 3, 1)),
            ),
            groups: (0..cfg.rg_count)
                .map(|g| ResidualGroup::new(&format!("rg.{g}"), cfg))
                .collect(),
            fusion: Fusion::new(cfg)?,
            recon: Reconstruct::new(cfg),
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// All parameters in construction order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        self.head.0.param_specs(&mut out);
        self.head.1.param_specs(&mut out);
        self.groups.iter().for_each(|g| g.param_specs(&mut out));
        self.fusion.param_specs(&mut out);
        self.recon.param_specs(&mut out);
        out
    }

    /// Check that `store` holds every parameter with the expected shape.
    pub fn check_store<T: Scalar>(&self, store: &ParamStore<T>) -> Result<()> {
        for spec in self.param_specs() {
            let p = store.get(&spec.name)?;
            if p.shape() != spec.shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter `{}` has shape {:?}, model expects {:?}",
                    spec.name,
                    p.shape(),
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    fn check_input<T: Scalar>(&self, x: &Tensor4<T>) -> Result<()> {
        check_dim("hran_forward", "input channel", self.cfg.in_channels, x.c())?;
        if x.n() == 0 || x.h() == 0 || x.w() == 0 {
            return Err(Error::Data(format!("empty input tensor {:?}", x.dims())));
        }
        Ok(())
    }

    /// Inference forward pass; `(n, 3, h, w) → (n, 3, s·h, s·w)`.
    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let f0 = self.head.0.forward(store, x)?;
        let f1 = self.head.1.forward(store, &f0)?;
        let mut outputs = Vec::with_capacity(self.groups.len());
        let mut h = f1;
        for g in &self.groups {
            h = g.forward(store, &h)?.0;
            outputs.push(h.clone());
        }
        let fused = self.fusion.forward(store, &outputs)?.0;
        self.recon.forward(store, &add(&fused, &f0)?)
    }

    /// Forward pass retaining every activation needed by [`Hran::backward`].
    pub fn forward_train<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, BlockOutputCache<T>)> {
        self.check_input(x)?;
        let f0 = self.head.0.forward(store, x)?;
        let f1 = self.head.1.forward(store, &f0)?;
        let mut outputs: Vec<Tensor4<T>> = Vec::with_capacity(self.groups.len());
        let mut caches = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let input = outputs.last().unwrap_or(&f1);
            let (out, cache) = g.forward(store, input)?;
            outputs.push(out);
            caches.push(cache);
        }
        let (fused, fusion) = self.fusion.forward(store, &outputs)?;
        let deep = add(&fused, &f0)?;
        let (out, recon) = self.recon.forward_cached(store, &deep)?;
        let cache = NetCache {
            input: x.clone(),
            f0,
            f1,
            group_outputs: outputs,
            groups: caches,
            fusion,
            deep,
            recon,
        };
        Ok((
            out,
            BlockOutputCache {
                inner: Some(cache),
                version: store.version(),
            },
        ))
    }

    /// Accumulate `∂(Σ upstream ⊙ output)/∂θ` into the store's gradients.
    /// Consumes the cache; a second call without a new forward pass fails.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        cache: &mut BlockOutputCache<T>,
        upstream: &Tensor4<T>,
    ) -> Result<()> {
        let c = cache
            .inner
            .take()
            .ok_or(Error::Cache("cache already consumed; run forward_train again"))?;
        if cache.version != store.version() {
            return Err(Error::Cache("parameters changed since the forward pass"));
        }
        let out_dims = [
            c.input.n(),
            self.cfg.out_channels,
            c.input.h() * self.cfg.scale,
            c.input.w() * self.cfg.scale,
        ];
        crate::tensor::check_same_dims("hran_backward", out_dims, upstream.dims())?;

        let g_deep = self.recon.backward(store, &c.deep, &c.recon, upstream)?;
        let mut g_f0 = g_deep.clone();
        let g_outputs = self.fusion.backward(store, &c.fusion, &g_deep)?;

        // Group k's output feeds both the fusion and group k+1.
        let mut carry: Option<Tensor4<T>> = None;
        for k in (0..self.groups.len()).rev() {
            let mut g = g_outputs[k].clone();
            if let Some(next) = &carry {
                add_assign(&mut g, next)?;
            }
            let input = if k == 0 { &c.f1 } else { &c.group_outputs[k - 1] };
            carry = Some(self.groups[k].backward(store, input, &c.groups[k], &g)?);
        }
        let g_f1 = carry.expect("at least one residual group");
        add_assign(&mut g_f0, &self.head.1.backward(store, &c.f0, &g_f1)?)?;
        self.head.0.backward(store, &c.input, &g_f0)?;
        Ok(())
    }
}

/// He initialization with LeakyReLU gain, `std = √(2 / ((1 + slope²)·fan_in))`,
/// zero biases. Samples are drawn in parameter order from a SplitMix64
/// stream seeded with `seed`, rounded to `f32` and then converted to `T`.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<T>> {
    let model = Hran::new(cfg)?;
    let mut rng = Rng::new(seed);
    let slope = cfg.leaky_slope as f64;
    let mut store = ParamStore::new();
    for spec in model.param_specs() {
        let dims = spec.dims();
        let value = match spec.fan_in {
            Some(fan_in) => {
                let std = (2.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt();
                Tensor4::from_fn(dims, |_| T::of((rng.normal() * std) as f32 as f64))
            }
            None => Tensor4::zeros(dims),
        };
        store.insert(spec.name, spec.shape, value)?;
    }
    Ok(store)
}

/// Exact number of scalar parameters (weights and biases).
pub fn param_count(cfg: &ModelConfig) -> Result<usize> {
    Ok(Hran::new(cfg)?.param_specs().iter().map(ParamSpec::numel).sum())
}

/// Parameter counts grouped by block: `head`, `rg.<i>`, `fusion`, `recon`.
pub fn param_breakdown(cfg: &ModelConfig) -> Result<IndexMap<String, usize>> {
    let mut out = IndexMap::new();
    for spec in Hran::new(cfg)?.param_specs() {
        let mut parts = spec.name.split('.');
        let first = parts.next().unwrap_or_default();
        let key = if first == "rg" {
            format!("rg.{}", parts.next().unwrap_or_default())
        } else {
            first.to_string()
        };
        *out.entry(key).or_insert(0) += spec.numel();
    }
    Ok(out)
}
