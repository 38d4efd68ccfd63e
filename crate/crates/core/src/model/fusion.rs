use super::blocks::Conv;
use super::params::{ParamSpec, ParamStore};
use super::{FusionMode, ModelConfig};
use crate::tensor::{concat_channels, split_channels, ConvSpec, Scalar, Tensor4};
use crate::{Error, Result};

/// Fusion of the residual group outputs into one `C`-channel map. Both modes
/// end with the same `C → C` 1×1 conv so they differ only in topology.
#[derive(Clone, Debug)]
pub enum Fusion {
    /// `levels[l][k]` merges pair `k` of level `l` (`2C → C`).
    Binarized { levels: Vec<Vec<Conv>>, tail: Conv },
    /// One `R·C → C` merge of all outputs.
    Hierarchical { merge: Conv, tail: Conv },
}

#[derive(Clone, Debug)]
pub enum FusionCache<T> {
    Binarized {
        concats: Vec<Vec<Tensor4<T>>>,
        tail_input: Tensor4<T>,
    },
    Hierarchical {
        concat: Tensor4<T>,
        merged: Tensor4<T>,
    },
}

impl Fusion {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.channels;
        let tail = Conv::new("fusion.tail", ConvSpec::same(c, c, 1, 1));
        Ok(match cfg.fusion {
            FusionMode::Binarized => {
                if !cfg.rg_count.is_power_of_two() {
                    return Err(Error::Config(format!(
                        "binarized fusion needs a power-of-two rg_count, got {}",
                        cfg.rg_count
                    )));
                }
                let mut levels = Vec::new();
                let mut width = cfg.rg_count;
                while width > 1 {
                    let l = levels.len();
                    levels.push(
                        (0..width / 2)
                            .map(|k| {
                                Conv::new(&format!("fusion.merge.{l}.{k}"), ConvSpec::same(2 * c, c, 1, 1))
                            })
                            .collect(),
                    );
                    width /= 2;
                }
                Fusion::Binarized { levels, tail }
            }
            FusionMode::Hierarchical => Fusion::Hierarchical {
                merge: Conv::new("fusion.merge", ConvSpec::same(cfg.rg_count * c, c, 1, 1)),
                tail,
            },
        })
    }

    pub fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        match self {
            Fusion::Binarized { levels, tail } => {
                levels.iter().flatten().for_each(|m| m.param_specs(out));
                tail.param_specs(out);
            }
            Fusion::Hierarchical { merge, tail } => {
                merge.param_specs(out);
                tail.param_specs(out);
            }
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        outputs: &[Tensor4<T>],
    ) -> Result<(Tensor4<T>, FusionCache<T>)> {
        match self {
            Fusion::Binarized { levels, tail } => {
                let expected = 1usize << levels.len();
                if outputs.len() != expected {
                    return Err(Error::shape(
                        "bff_forward",
                        "group count",
                        expected,
                        outputs.len(),
                    ));
                }
                let mut current: Vec<Tensor4<T>> = outputs.to_vec();
                let mut concats = Vec::with_capacity(levels.len());
                for merges in levels {
                    let mut next = Vec::with_capacity(merges.len());
                    let mut cats = Vec::with_capacity(merges.len());
                    for (k, merge) in merges.iter().enumerate() {
                        let cat = concat_channels(&[&current[2 * k], &current[2 * k + 1]])?;
                        next.push(merge.forward(store, &cat)?);
                        cats.push(cat);
                    }
                    concats.push(cats);
                    current = next;
                }
                let tail_input = current.pop().expect("one map remains");
                let out = tail.forward(store, &tail_input)?;
                Ok((out, FusionCache::Binarized { concats, tail_input }))
            }
            Fusion::Hierarchical { merge, tail } => {
                let refs: Vec<&Tensor4<T>> = outputs.iter().collect();
                let concat = concat_channels(&refs)?;
                let merged = merge.forward(store, &concat)?;
                let out = tail.forward(store, &merged)?;
                Ok((out, FusionCache::Hierarchical { concat, merged }))
            }
        }
    }

    /// Gradient with respect to each residual group output.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        cache: &FusionCache<T>,
        upstream: &Tensor4<T>,
    ) -> Result<Vec<Tensor4<T>>> {
        match (self, cache) {
            (Fusion::Binarized { levels, tail }, FusionCache::Binarized { concats, tail_input }) => {
                let mut grads = vec![tail.backward(store, tail_input, upstream)?];
                for (merges, cats) in levels.iter().zip(concats).rev() {
                    let mut wider = Vec::with_capacity(2 * merges.len());
                    for ((merge, cat), g) in merges.iter().zip(cats).zip(&grads) {
                        let g_cat = merge.backward(store, cat, g)?;
                        let half = g_cat.c() / 2;
                        wider.extend(split_channels(&g_cat, &[half, half])?);
                    }
                    grads = wider;
                }
                Ok(grads)
            }
            (Fusion::Hierarchical { merge, tail }, FusionCache::Hierarchical { concat, merged }) => {
                let g_merged = tail.backward(store, merged, upstream)?;
                let g_cat = merge.backward(store, concat, &g_merged)?;
                let per = merge.spec().out_channels;
                split_channels(&g_cat, &vec![per; g_cat.c() / per])
            }
            _ => Err(Error::Cache("fusion cache does not match fusion mode")),
        }
    }
}
