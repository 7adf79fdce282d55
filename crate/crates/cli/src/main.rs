use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use tfp_core::align::{cosine_sim, csls, sinkhorn, SimilarityMatrix};
use tfp_core::decoder::{decode, DecodeConfig, HistoryMode};
use tfp_core::dense::FeatureMatrix;
use tfp_core::energy::dirichlet_energy;
use tfp_core::flow::{iterate_fp, SeedMask};
use tfp_core::kg::{
    load_embeddings, load_pairs, load_triples, write_embeddings, write_pairs, write_triples,
    DatasetPair, EmbeddingFormat, KnowledgeGraph, SeedAlignment,
};
use tfp_core::metrics::{hits_at_k, mrr, ranks};
use tfp_core::sparse::{sym_normalize, SparseMatrix};
use tfp_core::synth::{generate_kg, make_pair};
use tfp_core::{Error, Result};

#[derive(Parser)]
#[command(name = "tfp", version, about = "Triple feature propagation decoder for entity alignment")]
struct Cli {
    /// Thread pool size for internal kernels (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decode entity features by propagating over a joint graph.
    Decode(DecodeArgs),
    /// Score decoded or raw features against held-out pairs.
    Eval(EvalArgs),
    /// Generate a synthetic dataset pair with known ground truth.
    Synth(SynthArgs),
    /// Report the Dirichlet energy of features on the entity graph.
    Energy(EnergyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HistoryArg {
    Concat,
    Last,
}

impl From<HistoryArg> for HistoryMode {
    fn from(h: HistoryArg) -> Self {
        match h {
            HistoryArg::Concat => HistoryMode::ConcatHistory,
            HistoryArg::Last => HistoryMode::LastIterate,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DecoderArg {
    Greedy,
    Csls,
    Sinkhorn,
}

#[derive(Parser)]
struct DecodeArgs {
    #[arg(long)]
    src_triples: PathBuf,
    #[arg(long)]
    tgt_triples: PathBuf,
    #[arg(long)]
    train_pairs: PathBuf,
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    #[arg(long)]
    out_src: PathBuf,
    #[arg(long)]
    out_tgt: PathBuf,
    /// Propagation steps K.
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Relation projection width d_r.
    #[arg(long, default_value_t = 512)]
    dr: usize,
    /// Entity projection width d_e.
    #[arg(long, default_value_t = 16)]
    de: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = HistoryArg::Concat)]
    history: HistoryArg,
}

#[derive(Parser)]
struct EvalArgs {
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    #[arg(long)]
    test_pairs: PathBuf,
    /// Cutoffs for H@k, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 10])]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    #[arg(long, default_value_t = 10)]
    sinkhorn_iters: usize,
    #[arg(long, value_enum, default_value_t = DecoderArg::Greedy)]
    decoder: DecoderArg,
    /// Neighborhood size for the csls decoder.
    #[arg(long, default_value_t = 10)]
    csls_k: usize,
}

#[derive(Parser)]
struct SynthArgs {
    #[arg(long)]
    entities: usize,
    #[arg(long)]
    relations: usize,
    #[arg(long)]
    triples: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Parser)]
struct EnergyArgs {
    #[arg(long)]
    triples: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Propagation steps to run before measuring again.
    #[arg(long, default_value_t = 0)]
    iters: usize,
    /// File with one seed entity id per line; seed rows stay fixed.
    #[arg(long)]
    seeds: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.cmd {
        Cmd::Decode(args) => cmd_decode(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Energy(args) => cmd_energy(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Re-checks a loaded graph against an explicit entity count, so entities
/// without triples (absent from the triple file) still get feature rows.
fn with_entity_count(kg: KnowledgeGraph, n_entities: usize) -> Result<KnowledgeGraph> {
    if kg.n_entities() >= n_entities {
        return Ok(kg);
    }
    KnowledgeGraph::new(n_entities, kg.n_relations(), kg.triples().to_vec())
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let src_features: FeatureMatrix<f64> = load_embeddings(&args.src_emb)?;
    let tgt_features: FeatureMatrix<f64> = load_embeddings(&args.tgt_emb)?;
    let src_kg = with_entity_count(load_triples(&args.src_triples)?, src_features.n_rows())?;
    let tgt_kg = with_entity_count(load_triples(&args.tgt_triples)?, tgt_features.n_rows())?;
    let train_pairs = load_pairs(&args.train_pairs)?;
    let alignment = SeedAlignment::new(train_pairs, Vec::new())?;
    let dataset = DatasetPair::new(src_kg, tgt_kg, alignment, src_features, tgt_features)?;

    let cfg = DecodeConfig {
        iterations: args.iters,
        relation_dim: args.dr,
        entity_dim: args.de,
        rng_seed: args.seed,
        history_mode: args.history.into(),
        ..DecodeConfig::default()
    };
    let out = decode(&dataset, &cfg)?;
    for (stage, secs) in &out.timings {
        println!("{stage}: {secs:.3} s");
    }
    write_embeddings(&args.out_src, &out.src, EmbeddingFormat::Binary)?;
    write_embeddings(&args.out_tgt, &out.tgt, EmbeddingFormat::Binary)?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let started = Instant::now();
    let src: FeatureMatrix<f64> = load_embeddings(&args.src_emb)?;
    let tgt: FeatureMatrix<f64> = load_embeddings(&args.tgt_emb)?;
    let pairs = load_pairs(&args.test_pairs)?;
    if pairs.is_empty() {
        return Err(Error::Data("test pair file is empty".into()));
    }
    let src_rows: Vec<usize> = pairs.iter().map(|&(s, _)| s).collect();
    let tgt_rows: Vec<usize> = pairs.iter().map(|&(_, t)| t).collect();
    if let Some(&s) = src_rows.iter().find(|&&s| s >= src.n_rows()) {
        return Err(Error::Data(format!(
            "pair references source entity {s}, features have {} rows",
            src.n_rows()
        )));
    }
    if let Some(&t) = tgt_rows.iter().find(|&&t| t >= tgt.n_rows()) {
        return Err(Error::Data(format!(
            "pair references target entity {t}, features have {} rows",
            tgt.n_rows()
        )));
    }

    let sim = cosine_sim(
        &src.select_rows(&src_rows)?,
        &tgt.select_rows(&tgt_rows)?,
    )?;
    let (name, scored): (&str, SimilarityMatrix<f64>) = match args.decoder {
        DecoderArg::Greedy => ("greedy", sim),
        DecoderArg::Csls => ("csls", csls(&sim, args.csls_k)?),
        DecoderArg::Sinkhorn => ("sinkhorn", sinkhorn(&sim, args.tau, args.sinkhorn_iters)?),
    };

    let truth: Vec<(usize, usize)> = (0..pairs.len()).map(|i| (i, i)).collect();
    let rank_vec = ranks(&scored, &truth)?;
    for &k in &args.k {
        println!("H@{k}: {:.4}", hits_at_k(&rank_vec, k)?);
    }
    let mrr_val = mrr(&rank_vec)?;
    println!("MRR: {mrr_val:.4}");
    let seconds = started.elapsed().as_secs_f64();
    println!(
        "{name},{},{},{},{seconds:.3}",
        hits_at_k(&rank_vec, 1)?,
        hits_at_k(&rank_vec, 10)?,
        mrr_val
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let kg = generate_kg(args.entities, args.relations, args.triples, args.seed)?;
    let pair: DatasetPair<f64> = make_pair(&kg, args.dropout, args.noise, args.dim, args.seed)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let file = |name: &str| args.out_dir.join(name);
    write_triples(file("src_triples.txt"), &pair.src_kg)?;
    write_triples(file("tgt_triples.txt"), &pair.tgt_kg)?;
    write_pairs(file("train_pairs.txt"), &pair.alignment.train_pairs)?;
    write_pairs(file("test_pairs.txt"), &pair.alignment.test_pairs)?;
    write_embeddings(file("src_emb.txt"), &pair.src_features, EmbeddingFormat::Text)?;
    write_embeddings(file("tgt_emb.txt"), &pair.tgt_features, EmbeddingFormat::Text)?;
    Ok(())
}

/// Undirected binary adjacency of the entity graph: entities are adjacent
/// when any triple connects them in either direction; self-loop triples add
/// no edge.
fn entity_adjacency(kg: &KnowledgeGraph, n: usize) -> Result<SparseMatrix<f64>> {
    let mut edges: Vec<(usize, usize)> = kg
        .triples()
        .iter()
        .filter(|t| t.head != t.tail)
        .map(|t| (t.head.min(t.tail), t.head.max(t.tail)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    SparseMatrix::from_triplets(
        n,
        n,
        edges.into_iter().flat_map(|(a, b)| [(a, b, 1.0), (b, a, 1.0)]),
    )
}

fn load_seed_ids(path: &Path, n: usize) -> Result<SeedMask> {
    let content = std::fs::read_to_string(path)?;
    let mut ids = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let id: usize = t.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("expected an entity id, got '{t}'"),
        })?;
        if id >= n {
            return Err(Error::Data(format!(
                "seed entity {id} outside the graph's {n} entities"
            )));
        }
        ids.push(id);
    }
    SeedMask::from_indices(n, &ids)
}

fn cmd_energy(args: EnergyArgs) -> Result<()> {
    let features: FeatureMatrix<f64> = load_embeddings(&args.features)?;
    let kg = with_entity_count(load_triples(&args.triples)?, features.n_rows())?;
    if kg.n_entities() != features.n_rows() {
        return Err(Error::Data(format!(
            "graph has {} entities but features have {} rows",
            kg.n_entities(),
            features.n_rows()
        )));
    }
    let n = kg.n_entities();
    let adjacency = entity_adjacency(&kg, n)?;
    println!("energy before: {}", dirichlet_energy(&adjacency, &features)?);
    if args.iters > 0 {
        let mask = match &args.seeds {
            Some(path) => load_seed_ids(path, n)?,
            None => SeedMask::new(vec![false; n]),
        };
        let a_tilde = sym_normalize(&adjacency)?;
        let x = iterate_fp(&a_tilde, &features, &mask, args.iters)?;
        println!(
            "energy after {} iterations: {}",
            args.iters,
            dirichlet_energy(&adjacency, &x)?
        );
    }
    Ok(())
}
