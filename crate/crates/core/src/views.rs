//! Generalized adjacency views of a knowledge graph.
//!
//! Classic propagation only looks at the entity-to-entity graph. The views
//! here widen that: entities exchange information with the relations they
//! use (`proximal`, `distal`), with other entities through shared triples
//! (`integral`), and each triple picks up its relation's features
//! (`tri_rel`). All views are returned raw (counts or 0/1 indicators);
//! callers normalize as needed.

use crate::error::Result;
use crate::kg::KnowledgeGraph;
use crate::scalar::Scalar;
use crate::sparse::{sym_normalize, SparseMatrix};

/// Entity-to-relation view, `n_entities x n_relations`.
///
/// Entry (i, j) is 1 when some triple has head i and relation j.
pub fn build_proximal<T: Scalar>(kg: &KnowledgeGraph) -> SparseMatrix<T> {
    let mut pairs: Vec<(usize, usize)> = kg
        .triples()
        .iter()
        .map(|t| (t.head, t.relation))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    SparseMatrix::from_triplets(
        kg.n_entities(),
        kg.n_relations(),
        pairs.into_iter().map(|(h, r)| (h, r, T::one())),
    )
    .expect("graph invariants keep ids in range")
}

/// Relation-to-entity view, `n_relations x n_entities`.
///
/// Entry (i, j) is 1 when some triple has relation i and tail j.
pub fn build_distal<T: Scalar>(kg: &KnowledgeGraph) -> SparseMatrix<T> {
    let mut pairs: Vec<(usize, usize)> = kg
        .triples()
        .iter()
        .map(|t| (t.relation, t.tail))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    SparseMatrix::from_triplets(
        kg.n_relations(),
        kg.n_entities(),
        pairs.into_iter().map(|(r, t)| (r, t, T::one())),
    )
    .expect("graph invariants keep ids in range")
}

/// Entity-to-entity view, `n_entities x n_entities`, with counts.
///
/// The diagonal holds each entity's triple involvement count (the number of
/// triples the entity appears in, counted once per triple). Off the
/// diagonal, entry (i, j) counts the triples with head i and tail j, so
/// parallel edges through different relations accumulate. Contributions add
/// up: a self-loop triple puts 2 on its diagonal cell. The view is directed;
/// no symmetrization is applied.
pub fn build_integral<T: Scalar>(kg: &KnowledgeGraph) -> SparseMatrix<T> {
    let n = kg.n_entities();
    let mut triplets: Vec<(usize, usize, T)> = Vec::with_capacity(kg.n_triples() * 3);
    for t in kg.triples() {
        triplets.push((t.head, t.head, T::one()));
        if t.tail != t.head {
            triplets.push((t.tail, t.tail, T::one()));
        }
        triplets.push((t.head, t.tail, T::one()));
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("graph invariants keep ids in range")
}

/// Triple-to-relation view, `n_triples x n_relations`.
///
/// Row k is one-hot at the relation of the k-th triple in canonical order.
pub fn build_tri_rel<T: Scalar>(kg: &KnowledgeGraph) -> SparseMatrix<T> {
    SparseMatrix::from_triplets(
        kg.n_triples(),
        kg.n_relations(),
        kg.triples()
            .iter()
            .enumerate()
            .map(|(k, t)| (k, t.relation, T::one())),
    )
    .expect("graph invariants keep ids in range")
}

/// Normalized graph Laplacian of the undirected entity graph.
///
/// The underlying adjacency is binary and symmetric: entities are adjacent
/// when any triple connects them in either direction. Self-loop triples do
/// not produce graph edges. Returns `I - sym_normalize(A)`; with the
/// self-loop-augmented degrees used by [`sym_normalize`] the spectrum stays
/// inside [0, 2).
pub fn build_laplacian<T: Scalar>(kg: &KnowledgeGraph) -> Result<SparseMatrix<T>> {
    let n = kg.n_entities();
    let mut edges: Vec<(usize, usize)> = kg
        .triples()
        .iter()
        .filter(|t| t.head != t.tail)
        .map(|t| (t.head.min(t.tail), t.head.max(t.tail)))
        .collect();
    edges.sort_unstable();
    edges.dedup();

    let adj = SparseMatrix::from_triplets(
        n,
        n,
        edges
            .into_iter()
            .flat_map(|(a, b)| [(a, b, T::one()), (b, a, T::one())]),
    )
    .expect("graph invariants keep ids in range");
    let tilde = sym_normalize(&adj)?;

    let mut triplets: Vec<(usize, usize, T)> = (0..n).map(|i| (i, i, T::one())).collect();
    triplets.extend(tilde.iter().map(|(r, c, v)| (r, c, -v)));
    SparseMatrix::from_triplets(n, n, triplets)
}
