//! The propagation decoder.
//!
//! Both graphs are decoded together on their disjoint union. Entity features
//! flow through the three row-normalized adjacency views for a fixed number
//! of steps while seed rows stay pinned to their original values, the step
//! history is concatenated (or the last iterate kept), relation and entity
//! features are compressed by random projection, and a stack of per-slice
//! sparse products assembles the output. The output is split back into one
//! feature matrix per graph.
//!
//! Every stage is deterministic for a fixed `rng_seed`, independent of the
//! rayon thread count: parallel kernels only ever split work by output row.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dense::{concat_columns, matmul, FeatureMatrix};
use crate::error::{Error, Result};
use crate::flow::SeedMask;
use crate::kg::{DatasetPair, KnowledgeGraph, Triple};
use crate::scalar::Scalar;
use crate::sparse::{row_normalize, spmm, SparseMatrix};
use crate::views::{build_distal, build_integral, build_proximal, build_tri_rel};

/// What the entity-feature stage hands to the projection stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryMode {
    /// Concatenate every iterate, width (K+1) times the input width.
    #[default]
    ConcatHistory,
    /// Keep only the final iterate.
    LastIterate,
}

/// Hyperparameters of the decode pipeline.
///
/// The Sinkhorn fields are not used by [`decode`] itself; they travel with
/// the config so one value covers the whole decode-then-match run.
#[derive(Debug, Clone)]
pub struct DecodeConfig {
    /// Number of propagation steps K.
    pub iterations: usize,
    /// Projected relation feature width d_r, which is also the slice count.
    pub relation_dim: usize,
    /// Projected entity feature width d_e.
    pub entity_dim: usize,
    /// Seed for every random choice the pipeline makes.
    pub rng_seed: u64,
    pub history_mode: HistoryMode,
    /// Temperature for downstream Sinkhorn matching.
    pub sinkhorn_tau: f64,
    /// Iteration count for downstream Sinkhorn matching.
    pub sinkhorn_iters: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            relation_dim: 512,
            entity_dim: 16,
            rng_seed: 0,
            history_mode: HistoryMode::default(),
            sinkhorn_tau: 0.05,
            sinkhorn_iters: 10,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Parameter("iterations must be at least 1".into()));
        }
        if self.relation_dim == 0 {
            return Err(Error::Parameter("relation_dim must be at least 1".into()));
        }
        if self.entity_dim == 0 {
            return Err(Error::Parameter("entity_dim must be at least 1".into()));
        }
        if !(self.sinkhorn_tau.is_finite() && self.sinkhorn_tau > 0.0) {
            return Err(Error::Parameter(format!(
                "sinkhorn_tau {} must be finite and positive",
                self.sinkhorn_tau
            )));
        }
        Ok(())
    }
}

/// The three row-normalized views propagation multiplies by.
#[derive(Debug, Clone)]
pub struct PropagationViews<T> {
    /// Entity-to-relation, |E| x |R|.
    pub proximal: SparseMatrix<T>,
    /// Relation-to-entity, |R| x |E|.
    pub distal: SparseMatrix<T>,
    /// Entity-to-entity, |E| x |E|.
    pub integral: SparseMatrix<T>,
}

impl<T: Scalar> PropagationViews<T> {
    pub fn from_kg(kg: &KnowledgeGraph) -> Result<Self> {
        Ok(Self {
            proximal: row_normalize(&build_proximal(kg))?,
            distal: row_normalize(&build_distal(kg))?,
            integral: row_normalize(&build_integral(kg))?,
        })
    }
}

/// Id offsets that place two graphs in one disjoint-union id space.
///
/// Source ids map to themselves; target entity, relation and triple ids are
/// shifted past the source ranges. Because every target entity id exceeds
/// every source id, the union's canonical triple order is the source triples
/// in their own order followed by the target triples in theirs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointIndex {
    n_src_entities: usize,
    n_tgt_entities: usize,
    n_src_relations: usize,
    n_tgt_relations: usize,
}

impl JointIndex {
    pub fn new(src: &KnowledgeGraph, tgt: &KnowledgeGraph) -> Self {
        Self {
            n_src_entities: src.n_entities(),
            n_tgt_entities: tgt.n_entities(),
            n_src_relations: src.n_relations(),
            n_tgt_relations: tgt.n_relations(),
        }
    }

    pub fn n_entities(&self) -> usize {
        self.n_src_entities + self.n_tgt_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_src_relations + self.n_tgt_relations
    }

    pub fn n_src_entities(&self) -> usize {
        self.n_src_entities
    }

    pub fn n_tgt_entities(&self) -> usize {
        self.n_tgt_entities
    }

    /// Joint id of a source entity.
    pub fn src_entity(&self, e: usize) -> usize {
        debug_assert!(e < self.n_src_entities);
        e
    }

    /// Joint id of a target entity.
    pub fn tgt_entity(&self, e: usize) -> usize {
        debug_assert!(e < self.n_tgt_entities);
        self.n_src_entities + e
    }

    /// The disjoint-union graph of the two graphs this index was built from.
    pub fn joint_kg(
        &self,
        src: &KnowledgeGraph,
        tgt: &KnowledgeGraph,
    ) -> Result<KnowledgeGraph> {
        if src.n_entities() != self.n_src_entities
            || tgt.n_entities() != self.n_tgt_entities
            || src.n_relations() != self.n_src_relations
            || tgt.n_relations() != self.n_tgt_relations
        {
            return Err(Error::Shape(
                "joint index was built from graphs with different counts".into(),
            ));
        }
        let mut triples = Vec::with_capacity(src.n_triples() + tgt.n_triples());
        triples.extend_from_slice(src.triples());
        triples.extend(tgt.triples().iter().map(|t| {
            Triple::new(
                self.n_src_entities + t.head,
                self.n_src_relations + t.relation,
                self.n_src_entities + t.tail,
            )
        }));
        KnowledgeGraph::new(self.n_entities(), self.n_relations(), triples)
    }

    /// Splits a joint-row matrix back into (source, target) matrices.
    pub fn split_rows<T: Scalar>(
        &self,
        joint: &FeatureMatrix<T>,
    ) -> Result<(FeatureMatrix<T>, FeatureMatrix<T>)> {
        if joint.n_rows() != self.n_entities() {
            return Err(Error::Shape(format!(
                "joint matrix has {} rows, index covers {}",
                joint.n_rows(),
                self.n_entities()
            )));
        }
        let d = joint.n_cols();
        let mut src = FeatureMatrix::zeros(self.n_src_entities, d);
        let mut tgt = FeatureMatrix::zeros(self.n_tgt_entities, d);
        for e in 0..self.n_src_entities {
            src.copy_row_from(e, joint, e);
        }
        for e in 0..self.n_tgt_entities {
            tgt.copy_row_from(e, joint, self.n_src_entities + e);
        }
        Ok((src, tgt))
    }
}

/// One propagation step.
///
/// Relation features are read off the distal view, entity features combine
/// the integral and proximal products, and seed rows are then overwritten
/// with their original values so labeled entities never drift.
pub fn propagate_step<T: Scalar>(
    x_e: &FeatureMatrix<T>,
    views: &PropagationViews<T>,
    seed_rows: &SeedMask,
    x_seed: &FeatureMatrix<T>,
) -> Result<(FeatureMatrix<T>, FeatureMatrix<T>)> {
    if seed_rows.len() != x_e.n_rows() {
        return Err(Error::Shape(format!(
            "seed mask covers {} rows, features have {}",
            seed_rows.len(),
            x_e.n_rows()
        )));
    }
    if x_seed.n_rows() != x_e.n_rows() || x_seed.n_cols() != x_e.n_cols() {
        return Err(Error::Shape(format!(
            "seed features are {}x{}, expected {}x{}",
            x_seed.n_rows(),
            x_seed.n_cols(),
            x_e.n_rows(),
            x_e.n_cols()
        )));
    }
    let x_r = spmm(&views.distal, x_e)?;
    let mut x_next = spmm(&views.integral, x_e)?;
    let from_relations = spmm(&views.proximal, &x_r)?;
    for (o, &v) in x_next.data_mut().iter_mut().zip(from_relations.data()) {
        *o += v;
    }
    for i in seed_rows.seed_indices() {
        x_next.copy_row_from(i, x_seed, i);
    }
    Ok((x_next, x_r))
}

/// Runs `cfg.iterations` propagation steps from `x0`.
///
/// Returns the full iterate history (length K+1, starting with `x0`) and
/// the relation features produced by the last step.
pub fn run_propagation<T: Scalar>(
    x0: &FeatureMatrix<T>,
    views: &PropagationViews<T>,
    mask: &SeedMask,
    cfg: &DecodeConfig,
) -> Result<(Vec<FeatureMatrix<T>>, FeatureMatrix<T>)> {
    cfg.validate()?;
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    history.push(x0.clone());
    let mut x_r_final: Option<FeatureMatrix<T>> = None;
    for _ in 0..cfg.iterations {
        let current = history.last().expect("history starts non-empty");
        let (next, x_r) = propagate_step(current, views, mask, x0)?;
        history.push(next);
        x_r_final = Some(x_r);
    }
    let x_r = x_r_final.expect("validate() guarantees at least one iteration");
    Ok((history, x_r))
}

/// Stacks the iterate history side by side, oldest first.
pub fn concat_history<T: Scalar>(history: &[FeatureMatrix<T>]) -> Result<FeatureMatrix<T>> {
    let refs: Vec<&FeatureMatrix<T>> = history.iter().collect();
    concat_columns(&refs)
}

/// Projects rows of `x` to `out_dim` columns through a random matrix whose
/// columns are independent uniform points on the unit hypersphere.
///
/// The projection matrix is drawn from a dedicated generator, so equal seeds
/// give bit-identical results. A zero-width input projects to zeros.
pub fn random_projection<T: Scalar>(
    x: &FeatureMatrix<T>,
    out_dim: usize,
    rng_seed: u64,
) -> Result<FeatureMatrix<T>> {
    if out_dim == 0 {
        return Err(Error::Parameter("projection dimension must be at least 1".into()));
    }
    let d_in = x.n_cols();
    if d_in == 0 {
        return Ok(FeatureMatrix::zeros(x.n_rows(), out_dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut proj = FeatureMatrix::<T>::zeros(d_in, out_dim);
    let mut col = vec![0.0f64; d_in];
    for j in 0..out_dim {
        loop {
            let mut norm_sq = 0.0f64;
            for v in col.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = g;
                norm_sq += g * g;
            }
            if norm_sq > 0.0 {
                let inv = norm_sq.sqrt().recip();
                for (i, &v) in col.iter().enumerate() {
                    proj.set(i, j, T::from_f64_lossy(v * inv));
                }
                break;
            }
        }
    }
    matmul(x, &proj)
}

/// Looks up the projected relation feature of every triple: `tri_rel` has
/// one-hot rows, so row i of the result is the feature of triple i's
/// relation, in canonical triple order.
pub fn triple_features<T: Scalar>(
    x_r: &FeatureMatrix<T>,
    tri_rel: &SparseMatrix<T>,
) -> Result<FeatureMatrix<T>> {
    spmm(tri_rel, x_r)
}

/// Sparsity structure shared by every slice: one entry per distinct
/// (head, tail) pair, plus the map from each triple to its entry.
struct SliceStructure {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    triple_pos: Vec<usize>,
}

impl SliceStructure {
    fn n_pairs(&self) -> usize {
        self.col_indices.len()
    }
}

fn slice_structure(kg: &KnowledgeGraph) -> SliceStructure {
    let mut pairs: Vec<(usize, usize)> = kg
        .triples()
        .iter()
        .map(|t| (t.head, t.tail))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    let triple_pos = kg
        .triples()
        .iter()
        .map(|t| {
            pairs
                .binary_search(&(t.head, t.tail))
                .expect("pair list was built from these triples")
        })
        .collect();
    let n = kg.n_entities();
    let mut row_offsets = vec![0usize; n + 1];
    for &(h, _) in &pairs {
        row_offsets[h + 1] += 1;
    }
    for r in 0..n {
        row_offsets[r + 1] += row_offsets[r];
    }
    let col_indices = pairs.into_iter().map(|(_, t)| t).collect();
    SliceStructure {
        row_offsets,
        col_indices,
        triple_pos,
    }
}

/// Sums triple features into their (head, tail) entry, one row per distinct
/// pair, in canonical triple order so the result is deterministic.
fn aggregate_pair_features<T: Scalar>(
    structure: &SliceStructure,
    x_t: &FeatureMatrix<T>,
) -> FeatureMatrix<T> {
    let mut out = FeatureMatrix::zeros(structure.n_pairs(), x_t.n_cols());
    for (tri, &pos) in structure.triple_pos.iter().enumerate() {
        let src = x_t.row(tri);
        for (o, &v) in out.row_mut(pos).iter_mut().zip(src) {
            *o += v;
        }
    }
    out
}

/// Materializes the d_r entity-to-entity slices of the triple tensor.
///
/// Slice i holds, at (h, t), the i-th coordinate summed over every triple
/// with that head and tail. All slices share one sparsity structure, so a
/// coordinate that sums to zero stays as an explicit entry.
pub fn build_triple_slices<T: Scalar>(
    kg: &KnowledgeGraph,
    x_t: &FeatureMatrix<T>,
) -> Result<Vec<SparseMatrix<T>>> {
    if x_t.n_rows() != kg.n_triples() {
        return Err(Error::Shape(format!(
            "triple features have {} rows for {} triples",
            x_t.n_rows(),
            kg.n_triples()
        )));
    }
    let structure = slice_structure(kg);
    let pair_features = aggregate_pair_features(&structure, x_t);
    let slice_values = transpose_pair_features(&structure, &pair_features);
    let n = kg.n_entities();
    Ok(slice_values
        .into_iter()
        .map(|vals| {
            SparseMatrix::from_csr_unchecked(
                n,
                n,
                structure.row_offsets.clone(),
                structure.col_indices.clone(),
                vals,
            )
        })
        .collect())
}

/// Splits the pair-feature matrix into one value vector per slice with a
/// single row-major pass, which keeps every write stream sequential.
fn transpose_pair_features<T: Scalar>(
    structure: &SliceStructure,
    pair_features: &FeatureMatrix<T>,
) -> Vec<Vec<T>> {
    let n_pairs = structure.n_pairs();
    let d_r = pair_features.n_cols();
    let mut slice_values: Vec<Vec<T>> = vec![vec![T::zero(); n_pairs]; d_r];
    for pos in 0..n_pairs {
        for (slice, &v) in slice_values.iter_mut().zip(pair_features.row(pos)) {
            slice[pos] = v;
        }
    }
    slice_values
}

/// Concatenates the slice products `[A_1 x ‖ A_2 x ‖ …]`.
///
/// Output width is `slices.len() * x_e_proj.n_cols()`; an empty slice list
/// yields a zero-width matrix.
pub fn final_features<T: Scalar>(
    slices: &[SparseMatrix<T>],
    x_e_proj: &FeatureMatrix<T>,
) -> Result<FeatureMatrix<T>> {
    let Some(first) = slices.first() else {
        return Ok(FeatureMatrix::zeros(x_e_proj.n_rows(), 0));
    };
    let n = first.n_rows();
    let d_e = x_e_proj.n_cols();
    let mut out = FeatureMatrix::zeros(n, slices.len() * d_e);
    for (i, slice) in slices.iter().enumerate() {
        let prod = spmm(slice, x_e_proj)?;
        for r in 0..n {
            out.row_mut(r)[i * d_e..(i + 1) * d_e].copy_from_slice(prod.row(r));
        }
    }
    Ok(out)
}

/// Slice products without materializing the slice list; one slice lives at
/// a time, which is what keeps decode memory flat in d_r.
fn assemble_streamed<T: Scalar>(
    kg: &KnowledgeGraph,
    x_t: &FeatureMatrix<T>,
    x_e_proj: &FeatureMatrix<T>,
) -> Result<FeatureMatrix<T>> {
    let structure = slice_structure(kg);
    let pair_features = aggregate_pair_features(&structure, x_t);
    let slice_values = transpose_pair_features(&structure, &pair_features);
    drop(pair_features);

    let n = kg.n_entities();
    let d_r = x_t.n_cols();
    let d_e = x_e_proj.n_cols();
    let mut out = FeatureMatrix::zeros(n, d_r * d_e);
    for (i, vals) in slice_values.into_iter().enumerate() {
        let slice = SparseMatrix::from_csr_unchecked(
            n,
            n,
            structure.row_offsets.clone(),
            structure.col_indices.clone(),
            vals,
        );
        let prod = spmm(&slice, x_e_proj)?;
        for r in 0..n {
            out.row_mut(r)[i * d_e..(i + 1) * d_e].copy_from_slice(prod.row(r));
        }
    }
    Ok(out)
}

fn check_finite<T: Scalar>(stage: &str, x: &FeatureMatrix<T>) -> Result<()> {
    if let Some((r, c)) = x.first_non_finite() {
        return Err(Error::Numeric {
            stage: stage.to_string(),
            msg: format!("non-finite value at row {r}, column {c}"),
        });
    }
    Ok(())
}

/// Decoded features for both graphs plus per-stage wall times.
#[derive(Debug, Clone)]
pub struct DecodeOutput<T> {
    pub src: FeatureMatrix<T>,
    pub tgt: FeatureMatrix<T>,
    /// (stage name, seconds) in execution order.
    pub timings: Vec<(String, f64)>,
}

/// Runs the full pipeline on a dataset.
///
/// Seed rows are every entity mentioned in a training pair, on both sides.
/// Both graphs share the projection matrices, drawn from two sub-seeds of
/// `cfg.rng_seed`, so the output spaces are directly comparable.
pub fn decode<T: Scalar>(dataset: &DatasetPair<T>, cfg: &DecodeConfig) -> Result<DecodeOutput<T>> {
    cfg.validate()?;
    let mut timings: Vec<(String, f64)> = Vec::new();

    let clock = Instant::now();
    let index = JointIndex::new(&dataset.src_kg, &dataset.tgt_kg);
    let joint = index.joint_kg(&dataset.src_kg, &dataset.tgt_kg)?;
    let views = PropagationViews::from_kg(&joint)?;
    let tri_rel: SparseMatrix<T> = build_tri_rel(&joint);

    let d = dataset.src_features.n_cols();
    let mut x0 = FeatureMatrix::zeros(index.n_entities(), d);
    for e in 0..index.n_src_entities() {
        x0.copy_row_from(index.src_entity(e), &dataset.src_features, e);
    }
    for e in 0..index.n_tgt_entities() {
        x0.copy_row_from(index.tgt_entity(e), &dataset.tgt_features, e);
    }
    check_finite("input features", &x0)?;

    let seeds: Vec<usize> = dataset
        .alignment
        .train_pairs
        .iter()
        .flat_map(|&(s, t)| [index.src_entity(s), index.tgt_entity(t)])
        .collect();
    let mask = SeedMask::from_indices(index.n_entities(), &seeds)?;
    timings.push(("graph assembly".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let (history, x_r_final) = run_propagation(&x0, &views, &mask, cfg)?;
    check_finite("propagation", history.last().expect("history is non-empty"))?;
    check_finite("propagation", &x_r_final)?;
    let x_e = match cfg.history_mode {
        HistoryMode::ConcatHistory => concat_history(&history)?,
        HistoryMode::LastIterate => history.last().expect("history is non-empty").clone(),
    };
    drop(history);
    timings.push(("propagation".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let mut master = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let relation_seed = master.next_u64();
    let entity_seed = master.next_u64();
    let x_r_proj = random_projection(&x_r_final, cfg.relation_dim, relation_seed)?;
    check_finite("relation projection", &x_r_proj)?;
    let x_e_proj = random_projection(&x_e, cfg.entity_dim, entity_seed)?;
    check_finite("entity projection", &x_e_proj)?;
    timings.push(("projection".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let x_t = triple_features(&x_r_proj, &tri_rel)?;
    check_finite("triple features", &x_t)?;
    timings.push(("triple features".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let x_out = assemble_streamed(&joint, &x_t, &x_e_proj)?;
    check_finite("feature assembly", &x_out)?;
    timings.push(("feature assembly".to_string(), clock.elapsed().as_secs_f64()));

    let (src, tgt) = index.split_rows(&x_out)?;
    Ok(DecodeOutput { src, tgt, timings })
}
