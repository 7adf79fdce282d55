//! Synthetic aligned KG pairs with controllable difficulty.
//!
//! A source graph is sampled uniformly, the target is an entity-relabeled
//! copy with triples dropped at a chosen rate, and both sides get noisy
//! views of a shared latent embedding per entity. Ground truth is the
//! relabeling, split 30/70 into train and test pairs. Everything is
//! deterministic in the seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dense::FeatureMatrix;
use crate::error::{Error, Result};
use crate::kg::{DatasetPair, KnowledgeGraph, SeedAlignment, Triple};
use crate::scalar::Scalar;

/// Fraction of ground-truth pairs that become training seeds.
const TRAIN_FRACTION: f64 = 0.3;

/// Samples a graph with exactly `n_triples` distinct triples, uniformly
/// over all (head, relation, tail) combinations with `head != tail`.
pub fn generate_kg(
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
    rng_seed: u64,
) -> Result<KnowledgeGraph> {
    let space = n_entities
        .saturating_mul(n_entities.saturating_sub(1))
        .saturating_mul(n_relations);
    if n_triples > space {
        return Err(Error::Parameter(format!(
            "cannot draw {n_triples} distinct loop-free triples from {n_entities} entities \
             and {n_relations} relations (space {space})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let triples = if n_triples * 2 > space {
        // dense regime: enumerate the space and take a random prefix
        let per_head = (n_entities - 1) * n_relations;
        let mut all: Vec<usize> = (0..space).collect();
        for i in 0..n_triples {
            let j = rng.random_range(i..space);
            all.swap(i, j);
        }
        all[..n_triples]
            .iter()
            .map(|&idx| {
                let h = idx / per_head;
                let rem = idx % per_head;
                let r = rem / (n_entities - 1);
                let t0 = rem % (n_entities - 1);
                let t = if t0 >= h { t0 + 1 } else { t0 };
                Triple::new(h, r, t)
            })
            .collect()
    } else {
        // sparse regime: rejection sampling
        let mut seen = std::collections::HashSet::with_capacity(n_triples * 2);
        let mut out = Vec::with_capacity(n_triples);
        while out.len() < n_triples {
            let h = rng.random_range(0..n_entities);
            let t = rng.random_range(0..n_entities);
            if h == t {
                continue;
            }
            let r = rng.random_range(0..n_relations);
            if seen.insert((h, r, t)) {
                out.push(Triple::new(h, r, t));
            }
        }
        out
    };
    KnowledgeGraph::new(n_entities, n_relations, triples)
}

/// Derives an aligned dataset from a source graph.
///
/// The target graph is the source with entity ids sent through a random
/// bijection and each triple kept with probability `1 - dropout`. Every
/// entity gets a latent unit vector; each side observes it plus independent
/// Gaussian noise with the given standard deviation per coordinate. The
/// ground-truth pairs are shuffled and split 30/70 into train and test.
pub fn make_pair<T: Scalar>(
    kg: &KnowledgeGraph,
    dropout: f64,
    noise_sigma: f64,
    embed_dim: usize,
    rng_seed: u64,
) -> Result<DatasetPair<T>> {
    if !(0.0..=1.0).contains(&dropout) {
        return Err(Error::Parameter(format!("dropout {dropout} outside [0, 1]")));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::Parameter(format!(
            "noise sigma {noise_sigma} must be finite and non-negative"
        )));
    }
    if embed_dim == 0 {
        return Err(Error::Parameter("embedding dimension must be positive".into()));
    }

    let n = kg.n_entities();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    // entity relabeling
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    // relabeled copy with dropout
    let mut tgt_triples = Vec::with_capacity(kg.n_triples());
    for t in kg.triples() {
        if dropout > 0.0 && rng.random_bool(dropout) {
            continue;
        }
        tgt_triples.push(Triple::new(perm[t.head], t.relation, perm[t.tail]));
    }
    let tgt_kg = KnowledgeGraph::new(n, kg.n_relations(), tgt_triples)?;

    // shared latents and independent per-side noise
    let mut latents = FeatureMatrix::<T>::zeros(n, embed_dim);
    for e in 0..n {
        let row = latents.row_mut(e);
        loop {
            let mut norm_sq = 0.0f64;
            for v in row.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = T::from_f64_lossy(g);
                norm_sq += g * g;
            }
            if norm_sq > 0.0 {
                let inv = T::from_f64_lossy(norm_sq.sqrt().recip());
                for v in row.iter_mut() {
                    *v *= inv;
                }
                break;
            }
        }
    }
    let noisy = |rng: &mut ChaCha8Rng| {
        let mut m = FeatureMatrix::<T>::zeros(n, embed_dim);
        for e in 0..n {
            for c in 0..embed_dim {
                let g: f64 = rng.sample(StandardNormal);
                m.set(e, c, latents.get(e, c) + T::from_f64_lossy(noise_sigma * g));
            }
        }
        m
    };
    let src_features = noisy(&mut rng);
    let tgt_view = noisy(&mut rng);
    // row pi(e) of the target matrix describes source entity e
    let mut tgt_features = FeatureMatrix::<T>::zeros(n, embed_dim);
    for (e, &pe) in perm.iter().enumerate() {
        tgt_features.copy_row_from(pe, &tgt_view, e);
    }

    // shuffled 30/70 split of the ground truth
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let pairs: Vec<(usize, usize)> = order.into_iter().map(|e| (e, perm[e])).collect();
    let n_train = (TRAIN_FRACTION * n as f64).floor() as usize;
    let alignment = SeedAlignment::new(
        pairs[..n_train].to_vec(),
        pairs[n_train..].to_vec(),
    )?;

    DatasetPair::new(kg.clone(), tgt_kg, alignment, src_features, tgt_features)
}
