//! Fixed-seed token-structured layered model and its cache machinery.
//!
//! The model is a stack of softmax-attention-shaped maps with deterministic
//! seeded weights — untrained, but Lipschitz and cross-token mixing, which is
//! all the cache protocol needs. Pruned passes run the compact token
//! sequence through the same layers; pruned rows are reconstructed from the
//! per-layer cache, and the cache is refreshed with whatever was computed.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::EvalCounter;

/// Row-major `(tokens × channels)` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatureMap {
    data: Vec<f64>,
    tokens: usize,
    channels: usize,
}

impl TokenFeatureMap {
    pub fn zeros(tokens: usize, channels: usize) -> Self {
        Self { data: vec![0.0; tokens * channels], tokens, channels }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, channels: usize) -> Result<Self> {
        let tokens = rows.len();
        let mut data = Vec::with_capacity(tokens * channels);
        for r in rows {
            if r.len() != channels {
                return Err(Error::DimensionMismatch { expected: channels, got: r.len() });
            }
            data.extend(r);
        }
        Ok(Self { data, tokens, channels })
    }

    pub fn from_vector(v: &Vector, tokens: usize, channels: usize) -> Result<Self> {
        if v.len() != tokens * channels {
            return Err(Error::DimensionMismatch { expected: tokens * channels, got: v.len() });
        }
        Ok(Self { data: v.as_slice().to_vec(), tokens, channels })
    }

    pub fn to_vector(&self) -> Vector {
        Vector::new(self.data.clone())
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Gather the given rows into a compact map (order preserved).
    pub fn gather(&self, rows: &[usize]) -> TokenFeatureMap {
        let mut out = TokenFeatureMap::zeros(rows.len(), self.channels);
        for (j, &i) in rows.iter().enumerate() {
            out.row_mut(j).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn same_shape(&self, other: &TokenFeatureMap) -> bool {
        self.tokens == other.tokens && self.channels == other.channels
    }
}

/// Partition of token indices: `fix` is computed fresh, `reduce` is
/// reconstructed from cache. The compact mapping sends the `j`-th entry of
/// `fix` to compact position `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenCachePlan {
    fix: Vec<usize>,
    reduce: Vec<usize>,
    n_tokens: usize,
}

impl TokenCachePlan {
    pub fn new(mut fix: Vec<usize>, mut reduce: Vec<usize>, n_tokens: usize) -> Result<Self> {
        fix.sort_unstable();
        reduce.sort_unstable();
        if fix.len() + reduce.len() != n_tokens {
            return Err(Error::DimensionMismatch {
                expected: n_tokens,
                got: fix.len() + reduce.len(),
            });
        }
        let mut seen = vec![false; n_tokens];
        for &i in fix.iter().chain(reduce.iter()) {
            if i >= n_tokens || seen[i] {
                return Err(Error::CacheState("token plan is not a partition of 0..N"));
            }
            seen[i] = true;
        }
        Ok(Self { fix, reduce, n_tokens })
    }

    /// Plan that computes everything (no pruning).
    pub fn full(n_tokens: usize) -> Self {
        Self { fix: (0..n_tokens).collect(), reduce: Vec::new(), n_tokens }
    }

    pub fn fix(&self) -> &[usize] {
        &self.fix
    }

    pub fn reduce(&self) -> &[usize] {
        &self.reduce
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn is_noop(&self) -> bool {
        self.reduce.is_empty()
    }

    /// Compact index of an original token, if it is computed.
    pub fn compact_index(&self, original: usize) -> Option<usize> {
        self.fix.binary_search(&original).ok()
    }
}

/// Per-layer cached feature maps with the cache-start step `T*` and the
/// refresh interval `i`.
#[derive(Debug, Clone)]
pub struct LayerCache {
    layers: Vec<TokenFeatureMap>,
    initialized: bool,
    init_step: Option<usize>,
    start_index: usize,
    interval: usize,
}

impl LayerCache {
    pub fn new(num_layers: usize, tokens: usize, channels: usize, start_index: usize, interval: usize) -> Self {
        assert!(interval >= 1, "cache interval must be >= 1");
        Self {
            layers: (0..num_layers).map(|_| TokenFeatureMap::zeros(tokens, channels)).collect(),
            initialized: false,
            init_step: None,
            start_index,
            interval,
        }
    }

    pub fn initialized(&self) -> bool {
        self.initialized
    }

    pub fn init_step(&self) -> Option<usize> {
        self.init_step
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    /// Whether `step` is a full-computation (cache initialization) step:
    /// `(step − T*) mod i == 0`.
    pub fn is_init_step(&self, step: usize) -> bool {
        step >= self.start_index && (step - self.start_index) % self.interval == 0
    }

    pub fn layer(&self, l: usize) -> &TokenFeatureMap {
        &self.layers[l]
    }

    fn store_full(&mut self, step: usize, layer_outputs: Vec<TokenFeatureMap>) {
        self.layers = layer_outputs;
        self.initialized = true;
        self.init_step = Some(step);
    }
}

/// One attention-shaped layer's seeded weights (four C×C blocks).
#[derive(Debug, Clone)]
struct LayerWeights {
    w_q: Vec<f64>,
    w_k: Vec<f64>,
    w_v: Vec<f64>,
    w_o: Vec<f64>,
}

/// Deterministic layered token model: `L` residual softmax-attention maps
/// over `(N × C)` feature maps, plus a sinusoidal per-channel time code.
#[derive(Debug, Clone)]
pub struct TokenModel {
    layers: Vec<LayerWeights>,
    time_freq: Vec<f64>,
    time_phase: Vec<f64>,
    tokens: usize,
    channels: usize,
    seed: u64,
}

impl TokenModel {
    pub fn new(num_layers: usize, tokens: usize, channels: usize, seed: u64) -> Self {
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(l as u64 + 1)));
            let scale_qkv = 0.5 / (channels as f64).sqrt();
            let scale_o = 0.25 / (channels as f64).sqrt();
            let mut block = |scale: f64| -> Vec<f64> {
                (0..channels * channels)
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            layers.push(LayerWeights {
                w_q: block(scale_qkv),
                w_k: block(scale_qkv),
                w_v: block(scale_qkv),
                w_o: block(scale_o),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd_1234_5678_ef00);
        let time_freq = (0..channels).map(|_| 0.5 + 6.0 * rng.gen::<f64>()).collect();
        let time_phase =
            (0..channels).map(|_| std::f64::consts::TAU * rng.gen::<f64>()).collect();
        Self { layers, time_freq, time_phase, tokens, channels, seed }
    }

    /// The conventional toy size: 4 layers over an 8×8 token grid, 16 channels.
    pub fn default_toy(seed: u64) -> Self {
        Self::new(4, 64, 16, seed)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-channel time code added to every token before the layer stack.
    fn time_code(&self, t: f64) -> Vec<f64> {
        self.time_freq
            .iter()
            .zip(&self.time_phase)
            .map(|(f, p)| 0.3 * (f * t + p).sin())
            .collect()
    }

    /// One residual attention layer over an arbitrary-length token sequence.
    /// `shadow` counts token-rows actually computed — it is the independent
    /// tally the evaluation accounting is cross-checked against.
    fn layer_forward(&self, l: usize, x: &TokenFeatureMap, shadow: &mut u64) -> TokenFeatureMap {
        let n = x.tokens();
        let c = self.channels;
        let w = &self.layers[l];
        let matmul = |input: &TokenFeatureMap, weights: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n * c];
            for i in 0..n {
                let row = input.row(i);
                for j in 0..c {
                    let mut acc = 0.0;
                    for (k, rv) in row.iter().enumerate() {
                        acc += rv * weights[k * c + j];
                    }
                    out[i * c + j] = acc;
                }
            }
            out
        };
        let q = matmul(x, &w.w_q);
        let key = matmul(x, &w.w_k);
        let v = matmul(x, &w.w_v);
        let inv_sqrt_c = 1.0 / (c as f64).sqrt();
        let mut out = x.clone();
        for i in 0..n {
            *shadow += 1;
            // softmax over keys for query row i
            let mut scores = vec![0.0; n];
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                let mut dot = 0.0;
                for k in 0..c {
                    dot += q[i * c + k] * key[j * c + k];
                }
                let s = dot * inv_sqrt_c;
                scores[j] = s;
                max = max.max(s);
            }
            let mut total = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                total += *s;
            }
            let mut mixed = vec![0.0; c];
            for j in 0..n {
                let a = scores[j] / total;
                for k in 0..c {
                    mixed[k] += a * v[j * c + k];
                }
            }
            // residual: out_i = x_i + mixed · W_o
            let row = out.row_mut(i);
            for j in 0..c {
                let mut acc = 0.0;
                for (k, mv) in mixed.iter().enumerate() {
                    acc += mv * w.w_o[k * c + j];
                }
                row[j] += acc;
            }
        }
        out
    }

    /// Full forward pass returning every layer's output map.
    pub fn forward_layers(
        &self,
        x: &TokenFeatureMap,
        t: f64,
        shadow: &mut u64,
    ) -> Result<Vec<TokenFeatureMap>> {
        if x.tokens() != self.tokens || x.channels() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: self.tokens * self.channels,
                got: x.tokens() * x.channels(),
            });
        }
        let code = self.time_code(t);
        let mut cur = x.clone();
        for i in 0..cur.tokens() {
            for (j, cv) in code.iter().enumerate() {
                cur.row_mut(i)[j] += cv;
            }
        }
        let mut outputs = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            cur = self.layer_forward(l, &cur, shadow);
            outputs.push(cur.clone());
        }
        Ok(outputs)
    }

    /// Full forward pass returning the final map.
    pub fn forward_full(&self, x: &TokenFeatureMap, t: f64, shadow: &mut u64) -> TokenFeatureMap {
        self.forward_layers(x, t, shadow)
            .expect("shape checked by caller")
            .pop()
            .expect("at least one layer")
    }

    /// Pruned forward pass: runs only the plan's `fix` rows through the
    /// stack, refreshes the cache at those rows after every layer, and
    /// reconstructs the pruned rows from the cache. Returns the
    /// reconstructed final map (identically the updated last-layer cache).
    pub fn forward_pruned(
        &self,
        x: &TokenFeatureMap,
        t: f64,
        plan: &TokenCachePlan,
        cache: &mut LayerCache,
        shadow: &mut u64,
    ) -> Result<TokenFeatureMap> {
        if x.tokens() != self.tokens || x.channels() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: self.tokens * self.channels,
                got: x.tokens() * x.channels(),
            });
        }
        if plan.n_tokens() != self.tokens {
            return Err(Error::DimensionMismatch { expected: self.tokens, got: plan.n_tokens() });
        }
        if !cache.initialized() {
            return Err(Error::CacheState("pruned pass requested before cache initialization"));
        }
        if cache.layers.len() != self.layers.len()
            || !cache.layers[0].same_shape(&TokenFeatureMap::zeros(self.tokens, self.channels))
        {
            return Err(Error::CacheState("cache shape does not match model"));
        }
        let code = self.time_code(t);
        let mut compact = x.gather(plan.fix());
        for i in 0..compact.tokens() {
            for (j, cv) in code.iter().enumerate() {
                compact.row_mut(i)[j] += cv;
            }
        }
        for l in 0..self.layers.len() {
            if compact.tokens() > 0 {
                compact = self.layer_forward(l, &compact, shadow);
            }
            for (j, &orig) in plan.fix().iter().enumerate() {
                cache.layers[l].row_mut(orig).copy_from_slice(compact.row(j));
            }
        }
        Ok(cache.layers[self.layers.len() - 1].clone())
    }
}

/// Evaluate the token model at `(x, t)`: a full pass when `plan` is absent
/// or prunes nothing, otherwise a pruned pass against `cache`. Updates the
/// evaluation counter accordingly.
pub fn token_model_forward(
    x: &TokenFeatureMap,
    t: f64,
    model: &TokenModel,
    plan: Option<&TokenCachePlan>,
    cache: Option<&mut LayerCache>,
    counter: &mut EvalCounter,
    shadow: &mut u64,
) -> Result<TokenFeatureMap> {
    match plan {
        None => {
            counter.full_evals += 1;
            Ok(model.forward_full(x, t, shadow))
        }
        Some(p) if p.is_noop() => {
            counter.full_evals += 1;
            Ok(model.forward_full(x, t, shadow))
        }
        Some(p) => {
            let cache = cache.ok_or(Error::CacheState("pruned pass requires a cache"))?;
            let out = model.forward_pruned(x, t, p, cache, shadow)?;
            counter.token_evals += (p.fix().len() * model.num_layers()) as u64;
            Ok(out)
        }
    }
}

/// One step of the cache protocol: a full recomputation that reinitializes
/// the cache on refresh-interval steps (or while the cache is cold), a
/// pruned pass against the cache otherwise. Returns the output map and the
/// step's cost as a fraction of a full evaluation.
#[allow(clippy::too_many_arguments)]
pub fn cache_assisted_forward(
    x: &TokenFeatureMap,
    t: f64,
    step: usize,
    model: &TokenModel,
    plan: &TokenCachePlan,
    cache: &mut LayerCache,
    counter: &mut EvalCounter,
    shadow: &mut u64,
) -> Result<(TokenFeatureMap, f64)> {
    if !cache.initialized() || cache.is_init_step(step) {
        let out = token_model_forward_init(x, t, step, model, cache, counter, shadow)?;
        Ok((out, 1.0))
    } else {
        let out = token_model_forward(x, t, model, Some(plan), Some(cache), counter, shadow)?;
        let frac = if plan.is_noop() {
            1.0
        } else {
            plan.fix().len() as f64 / model.tokens() as f64
        };
        Ok((out, frac))
    }
}

/// Full computation that also (re)initializes every cache layer; the init
/// phase of the cache protocol.
pub fn token_model_forward_init(
    x: &TokenFeatureMap,
    t: f64,
    step: usize,
    model: &TokenModel,
    cache: &mut LayerCache,
    counter: &mut EvalCounter,
    shadow: &mut u64,
) -> Result<TokenFeatureMap> {
    let outputs = model.forward_layers(x, t, shadow)?;
    counter.full_evals += 1;
    let last = outputs.last().expect("at least one layer").clone();
    cache.store_full(step, outputs);
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_map(model: &TokenModel, seed: u64) -> TokenFeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = TokenFeatureMap::zeros(model.tokens(), model.channels());
        for i in 0..model.tokens() {
            for v in m.row_mut(i) {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
        }
        m
    }

    #[test]
    fn forward_is_deterministic() {
        let model = TokenModel::new(3, 16, 8, 42);
        let x = seeded_map(&model, 1);
        let mut s1 = 0u64;
        let mut s2 = 0u64;
        let a = model.forward_full(&x, 0.5, &mut s1);
        let b = TokenModel::new(3, 16, 8, 42).forward_full(&x, 0.5, &mut s2);
        for i in 0..x.tokens() {
            for (va, vb) in a.row(i).iter().zip(b.row(i)) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }

    #[test]
    fn plan_validation() {
        assert!(TokenCachePlan::new(vec![0, 1], vec![1, 2], 4).is_err());
        assert!(TokenCachePlan::new(vec![0, 1], vec![2], 4).is_err());
        let p = TokenCachePlan::new(vec![3, 0], vec![2, 1], 4).unwrap();
        assert_eq!(p.fix(), &[0, 3]);
        assert_eq!(p.compact_index(3), Some(1));
        assert_eq!(p.compact_index(2), None);
    }

    #[test]
    fn noop_plan_is_bit_identical_to_full() {
        let model = TokenModel::new(2, 9, 4, 7);
        let x = seeded_map(&model, 3);
        let mut counter = EvalCounter::default();
        let mut shadow = 0u64;
        let full =
            token_model_forward(&x, 0.3, &model, None, None, &mut counter, &mut shadow).unwrap();
        let plan = TokenCachePlan::full(9);
        let noop =
            token_model_forward(&x, 0.3, &model, Some(&plan), None, &mut counter, &mut shadow)
                .unwrap();
        assert_eq!(full, noop);
        assert_eq!(counter.full_evals, 2);
        assert_eq!(counter.token_evals, 0);
    }

    #[test]
    fn full_reduce_returns_cache_bit_exactly() {
        let model = TokenModel::new(2, 9, 4, 7);
        let x = seeded_map(&model, 3);
        let mut cache = LayerCache::new(2, 9, 4, 0, 3);
        let mut counter = EvalCounter::default();
        let mut shadow = 0u64;
        let full =
            token_model_forward_init(&x, 0.3, 0, &model, &mut cache, &mut counter, &mut shadow)
                .unwrap();
        let plan = TokenCachePlan::new(vec![], (0..9).collect(), 9).unwrap();
        let reused = token_model_forward(
            &x,
            0.3,
            &model,
            Some(&plan),
            Some(&mut cache),
            &mut counter,
            &mut shadow,
        )
        .unwrap();
        assert_eq!(full, reused);
    }

    #[test]
    fn pruned_pass_requires_initialized_cache() {
        let model = TokenModel::new(2, 9, 4, 7);
        let x = seeded_map(&model, 3);
        let mut cache = LayerCache::new(2, 9, 4, 0, 3);
        let plan = TokenCachePlan::new(vec![], (0..9).collect(), 9).unwrap();
        let mut counter = EvalCounter::default();
        let mut shadow = 0u64;
        let err = token_model_forward(
            &x,
            0.3,
            &model,
            Some(&plan),
            Some(&mut cache),
            &mut counter,
            &mut shadow,
        );
        assert!(matches!(err, Err(Error::CacheState(_))));
    }

    #[test]
    fn counter_conservation_against_shadow() {
        let model = TokenModel::new(3, 12, 4, 11);
        let mut cache = LayerCache::new(3, 12, 4, 0, 2);
        let mut counter = EvalCounter::default();
        let mut shadow = 0u64;
        let x = seeded_map(&model, 8);
        token_model_forward_init(&x, 0.9, 0, &model, &mut cache, &mut counter, &mut shadow)
            .unwrap();
        let plan = TokenCachePlan::new((0..5).collect(), (5..12).collect(), 12).unwrap();
        for step in 1..4 {
            let t = 0.9 - 0.1 * step as f64;
            token_model_forward(
                &x,
                t,
                &model,
                Some(&plan),
                Some(&mut cache),
                &mut counter,
                &mut shadow,
            )
            .unwrap();
        }
        let accounted = counter.full_evals * (12 * 3) as u64 + counter.token_evals;
        assert_eq!(accounted, shadow);
        assert_eq!(counter.token_evals, 3 * 5 * 3);
    }

    #[test]
    fn partial_computation_beats_full_cache_reuse() {
        // Drift the input after cache init; computing 12 of 16 tokens fresh
        // must track the full forward at least as well as reusing the whole
        // cached map.
        let model = TokenModel::new(3, 16, 8, 21);
        let x1 = seeded_map(&model, 2);
        let mut x2 = x1.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for i in 0..16 {
            for v in x2.row_mut(i) {
                *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut cache = LayerCache::new(3, 16, 8, 0, 4);
        let mut counter = EvalCounter::default();
        let mut shadow = 0u64;
        token_model_forward_init(&x1, 0.8, 0, &model, &mut cache, &mut counter, &mut shadow)
            .unwrap();
        let cached_map = cache.layer(2).clone();

        let truth = model.forward_full(&x2, 0.78, &mut shadow);
        // Prune the 4 rows whose drift is smallest.
        let mut drift: Vec<(usize, f64)> = (0..16)
            .map(|i| {
                let d: f64 = x1
                    .row(i)
                    .iter()
                    .zip(x2.row(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (i, d)
            })
            .collect();
        drift.sort_by(|a, b| a.1.total_cmp(&b.1));
        let reduce: Vec<usize> = drift[..4].iter().map(|(i, _)| *i).collect();
        let fix: Vec<usize> = drift[4..].iter().map(|(i, _)| *i).collect();
        let plan = TokenCachePlan::new(fix, reduce, 16).unwrap();
        let pruned = model
            .forward_pruned(&x2, 0.78, &plan, &mut cache, &mut shadow)
            .unwrap();

        let rel = |a: &TokenFeatureMap, b: &TokenFeatureMap| {
            let num: f64 = (0..16)
                .map(|i| {
                    a.row(i)
                        .iter()
                        .zip(b.row(i))
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .sum();
            let den: f64 =
                (0..16).map(|i| b.row(i).iter().map(|v| v * v).sum::<f64>()).sum();
            (num / den).sqrt()
        };
        let err_pruned = rel(&pruned, &truth);
        let err_reuse = rel(&cached_map, &truth);
        assert!(
            err_pruned <= err_reuse,
            "pruned {err_pruned} should not exceed full reuse {err_reuse}"
        );
    }

    #[test]
    fn init_step_schedule() {
        let cache = LayerCache::new(1, 4, 2, 5, 3);
        assert!(!cache.is_init_step(4));
        assert!(cache.is_init_step(5));
        assert!(!cache.is_init_step(6));
        assert!(cache.is_init_step(8));
    }
}
