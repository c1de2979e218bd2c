use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use phashreg::harness::{
    build_corpus, latency_table, run_latency_bench, run_sweep, sweep_table, write_latency_csv,
    write_sweep_csv, CorpusConfig, LatencyConfig, Structure, SweepConfig,
};
use phashreg::registry::{timestamp, HEADER_FILE};
use phashreg::{
    phash_file, verify_inclusion, EntryMetadata, PrefixKey, PrefixScheme, Registry,
    RegistryConfig, RegistryError, Verdict,
};
use phashreg_cli::service::{router, AppState};
use phashreg_cli::{bad_input, exit, exit_code, resolve_hash, to_json, RegisterView, RootView};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "phashreg", version, about = "Perceptual-hash provenance registry")]
struct Cli {
    /// Registry directory.
    #[arg(long, global = true, env = "PHASHREG_REGISTRY", default_value = "phashreg-data")]
    registry: PathBuf,
    /// Prefix scheme for a new registry; must match an existing one.
    #[arg(long, global = true)]
    scheme: Option<PrefixScheme>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Create the registry if it does not exist yet.
    #[arg(long, global = true)]
    init: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Create an empty registry.
    Init {
        /// Prefix bits allowed to differ when searching neighbor buckets.
        #[arg(long, default_value_t = 2)]
        tolerance: u32,
        /// Hamming threshold for a potential match.
        #[arg(long, default_value_t = 6)]
        tau: u32,
    },
    /// Print the perceptual hash of each image.
    Hash {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Register an image file or a 16-digit hex hash.
    Register {
        input: String,
        #[arg(long, default_value = "cli")]
        platform: String,
        /// RFC 3339 creation time; defaults to now.
        #[arg(long)]
        timestamp: Option<String>,
        /// Extra metadata, repeatable.
        #[arg(long = "meta", value_name = "KEY=VALUE")]
        meta: Vec<String>,
    },
    /// Look up an image file or a hex hash.
    Verify {
        input: String,
        #[arg(long)]
        tau: Option<u32>,
        #[arg(long)]
        tolerance: Option<u32>,
    },
    /// Bucket occupancy statistics.
    Stats,
    /// Current commitment root and ledger head.
    Root,
    /// Inclusion proof for a bucket, e.g. `3F0A`.
    Proof { prefix: String },
    /// Recompute every commitment and check the ledger chain.
    Check,
    /// Query latency of flat scan, single BK-tree and bucketed BK-trees.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [100_000usize, 500_000, 1_000_000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        queries: usize,
        #[arg(long, default_value_t = LatencyConfig::default().seed)]
        seed: u64,
        /// Bits flipped in each query hash.
        #[arg(long, default_value_t = 0)]
        query_flips: u32,
        #[arg(long, default_value_t = 2)]
        tolerance: u32,
        #[arg(long, value_delimiter = ',')]
        structures: Option<Vec<Structure>>,
        /// Also write the results as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Recall and false-positive rates over a procedural image corpus.
    Sweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [2u32, 4])]
        tolerances: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = phashreg::harness::DEFAULT_TAUS)]
        taus: Vec<u32>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the procedural corpus as PNG files.
    GenCorpus {
        out: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Serve the registry over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(clap::Args)]
struct CorpusArgs {
    #[arg(long, default_value_t = CorpusConfig::default().originals)]
    originals: usize,
    #[arg(long, default_value_t = CorpusConfig::default().edits_per_original)]
    edits: usize,
    #[arg(long, default_value_t = CorpusConfig::default().negatives)]
    negatives: usize,
    #[arg(long, default_value_t = CorpusConfig::default().lookalike_fraction)]
    lookalike_fraction: f64,
    #[arg(long, default_value_t = CorpusConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = CorpusConfig::default().width)]
    size: u32,
}

impl CorpusArgs {
    fn config(&self) -> CorpusConfig {
        CorpusConfig {
            originals: self.originals,
            edits_per_original: self.edits,
            negatives: self.negatives,
            lookalike_fraction: self.lookalike_fraction,
            width: self.size,
            height: self.size,
            seed: self.seed,
            ..CorpusConfig::default()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn emit<T: Serialize>(format: Format, value: &T, table: impl FnOnce(&T) -> String) -> String {
    match format {
        Format::Json => to_json(value),
        Format::Table => table(value),
    }
}

fn open_registry(cli: &Cli) -> Result<Registry> {
    let dir = &cli.registry;
    if !dir.join(HEADER_FILE).exists() {
        if cli.init {
            let cfg = RegistryConfig {
                scheme: cli.scheme.unwrap_or_default(),
                ..RegistryConfig::default()
            };
            return Ok(Registry::create(dir, cfg)?);
        }
        return Err(RegistryError::NotFound(format!(
            "no registry at {} (run `phashreg init` or pass --init)",
            dir.display()
        ))
        .into());
    }
    let reg = Registry::open(dir).with_context(|| format!("opening {}", dir.display()))?;
    if let Some(s) = cli.scheme {
        if s != reg.config().scheme {
            return Err(bad_input(format!(
                "registry uses the {} scheme, not {s}",
                reg.config().scheme
            )));
        }
    }
    Ok(reg)
}

fn parse_meta(pairs: &[String], mut meta: EntryMetadata) -> Result<EntryMetadata> {
    for p in pairs {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| bad_input(format!("--meta {p:?}: expected KEY=VALUE")))?;
        meta = meta.with(k, v);
    }
    Ok(meta)
}

fn run(cli: Cli) -> Result<String> {
    let format = cli.format;
    match &cli.command {
        Command::Init { tolerance, tau } => {
            let cfg = RegistryConfig::new(cli.scheme.unwrap_or_default(), *tolerance, *tau)?;
            let reg = Registry::create(&cli.registry, cfg)?;
            Ok(emit(format, reg.config(), |c| {
                format!(
                    "created {} ({} scheme, tolerance {}, tau {})\n",
                    cli.registry.display(),
                    c.scheme,
                    c.flip_tolerance,
                    c.tau
                )
            }))
        }
        Command::Hash { images } => {
            #[derive(Serialize)]
            struct Row<'a> {
                file: &'a Path,
                hash: phashreg::PerceptualHash,
            }
            let rows = images
                .iter()
                .map(|f| {
                    phash_file(f)
                        .with_context(|| format!("hashing {}", f.display()))
                        .map(|hash| Row { file: f, hash })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(emit(format, &rows, |rows| {
                rows.iter()
                    .map(|r| format!("{}  {}\n", r.hash, r.file.display()))
                    .collect()
            }))
        }
        Command::Register {
            input,
            platform,
            timestamp: ts,
            meta,
        } => {
            let hash = resolve_hash(input)?;
            let mut m = parse_meta(meta, EntryMetadata::new(platform.as_str()))?;
            if let Some(ts) = ts {
                let t = timestamp::parse(ts).map_err(|e| bad_input(format!("--timestamp: {e}")))?;
                m = m.at(t);
            }
            let mut reg = open_registry(&cli)?;
            let entry = reg.register(hash, m)?;
            let view = RegisterView {
                root: reg.root(),
                entry,
                replayed: false,
            };
            Ok(emit(format, &view, |v| {
                format!(
                    "registered entry {} ({}) in bucket {}\nroot {}\n",
                    v.entry.entry_id,
                    v.entry.hash,
                    reg.prefix_of(v.entry.hash),
                    v.root
                )
            }))
        }
        Command::Verify {
            input,
            tau,
            tolerance,
        } => {
            let hash = resolve_hash(input)?;
            let reg = open_registry(&cli)?;
            let cfg = *reg.config();
            let verdict = reg.verify_with(
                hash,
                tolerance.unwrap_or(cfg.flip_tolerance),
                tau.unwrap_or(cfg.tau),
            )?;
            Ok(emit(format, &verdict, verdict_table))
        }
        Command::Stats => {
            let reg = open_registry(&cli)?;
            Ok(emit(format, &reg.stats(), |s| {
                format!(
                    "entries           {}\nnon-empty buckets {}\nmean occupancy    {:.6}\nmax occupancy     {}\n",
                    s.total_entries, s.nonempty_buckets, s.mean_occupancy, s.max_occupancy
                )
            }))
        }
        Command::Root => {
            let reg = open_registry(&cli)?;
            Ok(emit(format, &RootView::of(&reg), |v| {
                let mut s = format!("root    {}\nentries {}\nbuckets {}\n", v.root, v.entries, v.buckets);
                if let (Some(seq), Some(head)) = (v.ledger_seq, v.ledger_head) {
                    let _ = writeln!(s, "ledger  seq {seq} head {head}");
                }
                s
            }))
        }
        Command::Proof { prefix } => {
            let prefix = PrefixKey::from_hex(prefix)?;
            let reg = open_registry(&cli)?;
            let proof = reg.prove(prefix)?;
            Ok(emit(format, &proof, |p| {
                let mut s = format!("prefix {}\nleaf   {}\n", p.prefix, p.bucket_digest);
                for (level, sibs) in p.siblings.iter().enumerate() {
                    let _ = writeln!(s, "level {level}: {} siblings", sibs.len());
                }
                let _ = writeln!(s, "root   {}", p.root);
                let ok = verify_inclusion(p, &reg.root());
                let _ = writeln!(s, "verifies against current root: {}", if ok { "yes" } else { "no" });
                s
            }))
        }
        Command::Check => {
            let reg = open_registry(&cli)?;
            reg.check_integrity()?;
            Ok(emit(format, &RootView::of(&reg), |v| {
                format!("ok: {} entries in {} buckets, root {}\n", v.entries, v.buckets, v.root)
            }))
        }
        Command::Bench {
            sizes,
            queries,
            seed,
            query_flips,
            tolerance,
            structures,
            csv,
        } => {
            let cfg = LatencyConfig {
                sizes: sizes.clone(),
                queries: *queries,
                seed: *seed,
                structures: structures.clone().unwrap_or_else(|| Structure::ALL.to_vec()),
                query_flips: *query_flips,
                scheme: cli.scheme.unwrap_or_default(),
                flip_tolerance: *tolerance,
            };
            let run = run_latency_bench(&cfg)?;
            if let Some(path) = csv {
                let meta = [
                    ("seed", cfg.seed.to_string()),
                    ("queries", cfg.queries.to_string()),
                    ("query_flips", cfg.query_flips.to_string()),
                    ("scheme", cfg.scheme.to_string()),
                    ("flip_tolerance", cfg.flip_tolerance.to_string()),
                ];
                let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                write_latency_csv(file, &meta, &run.reports)?;
            }
            Ok(emit(format, &run, |r| latency_table(&r.reports, &r.equivalence)))
        }
        Command::Sweep {
            corpus,
            tolerances,
            taus,
            csv,
        } => {
            let ccfg = corpus.config();
            let sets = build_corpus(&ccfg)?.hashes();
            let scfg = SweepConfig {
                schemes: cli.scheme.map_or_else(|| PrefixScheme::ALL.to_vec(), |s| vec![s]),
                tolerances: tolerances.clone(),
                taus: taus.clone(),
            };
            let rows = run_sweep(&sets, &scfg)?;
            if let Some(path) = csv {
                let meta = [
                    ("seed", ccfg.seed.to_string()),
                    ("originals", sets.originals.len().to_string()),
                    ("edited", sets.edited.len().to_string()),
                    ("negatives", sets.negatives.len().to_string()),
                    ("lookalike_fraction", ccfg.lookalike_fraction.to_string()),
                ];
                let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                write_sweep_csv(file, &meta, &rows)?;
            }
            Ok(emit(format, &rows, |r| sweep_table(r)))
        }
        Command::GenCorpus { out, corpus } => gen_corpus(out, &corpus.config(), format),
        Command::Serve { addr } => {
            let reg = open_registry(&cli)?;
            reg.check_integrity().context("refusing to serve")?;
            serve(reg, addr)?;
            Ok(String::new())
        }
    }
}

fn verdict_table(v: &Verdict) -> String {
    let mut s = format!("outcome            {:?}\nprefix             {}\n", v.outcome, v.prefix);
    match v.min_distance {
        Some(d) => {
            let _ = writeln!(s, "min distance       {d}");
        }
        None => s.push_str("min distance       -\n"),
    }
    if let Some(sim) = v.similarity {
        let _ = writeln!(s, "similarity         {sim}");
    }
    if let Some(m) = &v.matched {
        let _ = writeln!(
            s,
            "matched            entry {} {} ({}, {})",
            m.entry_id,
            m.hash,
            m.platform_id,
            timestamp::format(&m.created_at)
        );
    }
    let _ = writeln!(s, "buckets searched   {}", v.buckets_searched);
    let _ = writeln!(s, "candidates checked {}", v.candidates_checked);
    s
}

fn gen_corpus(out: &Path, cfg: &CorpusConfig, format: Format) -> Result<String> {
    #[derive(Serialize)]
    struct Edited {
        file: String,
        source: String,
        transforms: Vec<phashreg::harness::TransformSpec>,
    }
    #[derive(Serialize)]
    struct Manifest {
        config: CorpusConfig,
        originals: Vec<String>,
        edited: Vec<Edited>,
        negatives: Vec<String>,
    }

    let corpus = build_corpus(cfg)?;
    for sub in ["originals", "edited", "negatives"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    }
    let save = |img: &image::RgbImage, rel: String| -> Result<String> {
        let path = out.join(&rel);
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
        Ok(rel)
    };
    let originals = corpus
        .originals
        .iter()
        .enumerate()
        .map(|(i, img)| save(img, format!("originals/{i:04}.png")))
        .collect::<Result<Vec<_>>>()?;
    let edited = corpus
        .edited
        .iter()
        .enumerate()
        .map(|(i, e)| {
            Ok(Edited {
                file: save(&e.image, format!("edited/{i:04}.png"))?,
                source: originals[e.source].clone(),
                transforms: e.transforms.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let negatives = corpus
        .negatives
        .iter()
        .enumerate()
        .map(|(i, img)| save(img, format!("negatives/{i:04}.png")))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        config: cfg.clone(),
        originals,
        edited,
        negatives,
    };
    let path = out.join("manifest.json");
    fs::write(&path, to_json(&manifest)).with_context(|| format!("writing {}", path.display()))?;
    Ok(emit(format, &manifest, |m| {
        format!(
            "wrote {} originals, {} edited, {} negatives to {}\n",
            m.originals.len(),
            m.edited.len(),
            m.negatives.len(),
            out.display()
        )
    }))
}

fn serve(reg: Registry, addr: &str) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!(
            "serving {} entries on http://{}",
            reg.len(),
            listener.local_addr()?
        );
        axum::serve(listener, router(AppState::new(reg)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("server error")
    })
}
