use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use hyfhe_core::bench::{bench_full_pack, bench_model, project_latency, write_csv, BANDWIDTHS_MB_S};
use hyfhe_core::confidentiality::{
    attack_inoutshuffle, attack_noshuffle, attack_outshuffle, dp_amplify, dp_condition_bound, multiset_orderings,
    noise_histogram, write_histogram_csv, DpParams, LinearOracle, ShuffleMode,
};
use hyfhe_core::config::{Config, NoiseLevel};
use hyfhe_core::model::toy::toy_model;
use hyfhe_core::model::{load_model, QuantModel, TestVector};
use hyfhe_core::params::FheParams;
use hyfhe_core::protocol::{
    pack_noise_samples, run_inference, ClientSession, InferenceReport, Server, ServerConfig, ServerLink,
};
use hyfhe_core::transport::{connect, loopback, FrameHandler};
use hyfhe_core::{Error, Result};

#[derive(Parser)]
#[command(name = "hyfhe", version, about = "Hybrid homomorphic inference: client, server and tooling")]
struct Cli {
    /// TOML or JSON configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct ParamFlags {
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    alpha: Option<u32>,
    /// Accumulator width b (8, 12 or 16 select presets).
    #[arg(long = "precision-b", short = 'b')]
    precision_b: Option<u32>,
    /// Fresh noise level, e.g. `2^-36`.
    #[arg(long = "delta-noise")]
    delta_noise: Option<String>,
    /// Gadget base D.
    #[arg(long = "base")]
    base: Option<u64>,
    /// Gadget levels l.
    #[arg(long = "levels")]
    levels: Option<u32>,
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long)]
    beta: Option<u32>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ParamFlags {
    fn overlay(&self) -> Config {
        Config {
            t: self.t,
            alpha: self.alpha,
            precision_b: self.precision_b,
            delta_noise: self.delta_noise.clone().map(NoiseLevel::Text),
            base: self.base,
            levels: self.levels,
            gamma: self.gamma,
            beta: self.beta,
            threads: self.threads,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a client key file (parameters and the key seed).
    Keygen {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Serve a model over TCP.
    Serve {
        #[command(flatten)]
        params: ParamFlags,
        /// Model manifest (JSON next to its weights blob).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run one encrypted inference per input and print scores and timings.
    Infer {
        #[command(flatten)]
        params: ParamFlags,
        /// Model manifest; served in process when no server address is given.
        #[arg(long)]
        model: Option<PathBuf>,
        /// JSON integer array, or a vectors file whose scores are checked.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        connect: Option<String>,
        /// Key file from `keygen`; its parameters take precedence.
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Time every phase across extraction levels and write CSV.
    Bench {
        #[command(flatten)]
        params: ParamFlags,
        /// Model manifest; defaults to the built-in toy model for `b`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Extraction levels to sweep; defaults to `--gamma` alone if given,
        /// else 0,1,2.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<u32>>,
        #[arg(long, default_value_t = 3)]
        inferences: usize,
        /// Phase CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Network projection CSV.
        #[arg(long)]
        projection: Option<PathBuf>,
        /// Also time packing of this many completely filled groups per level.
        #[arg(long, default_value_t = 0)]
        full_pack_groups: usize,
    },
    /// Evaluate the shuffle-amplification bound.
    DpCalc {
        #[arg(long)]
        eps0: f64,
        #[arg(long, default_value_t = 0.0)]
        delta0: f64,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        delta: f64,
    },
    /// Measure packed-ciphertext noise against the 1/(2p) bound.
    NoiseAudit {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        /// Histogram CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the weight-recovery attacks against a random 8×8 layer.
    AttackDemo {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        size: usize,
        /// Weights drawn from [-range, range].
        #[arg(long, default_value_t = 3)]
        range: i64,
    },
}

/// Client key file. The secret key is derived deterministically from
/// `seed`, so the file must be kept private.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    params: FheParams,
    seed: u64,
}

fn resolve(file: &Option<PathBuf>, flags: &ParamFlags) -> Result<Config> {
    let base = match file {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    Ok(base.merge(flags.overlay()))
}

fn seed_of(cfg: &Config) -> u64 {
    cfg.seed.unwrap_or_else(rand::random)
}

fn load(path: &Path) -> Result<QuantModel> {
    Ok(load_model(path)?)
}

fn writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_report(r: &InferenceReport) {
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    println!("scores: {:?}", r.result.scores);
    println!("argmax: {}", r.result.argmax);
    println!("setup: {:.2} ms", ms(r.setup));
    for (i, ((e, s), d)) in r.encrypt.iter().zip(&r.remote).zip(&r.decrypt).enumerate() {
        println!("round {}: encrypt {:.2} ms, server+link {:.2} ms, decrypt {:.2} ms", i + 1, ms(*e), ms(*s), ms(*d));
    }
    println!("traffic: {} bytes up, {} bytes down", r.traffic.up, r.traffic.down);
}

/// Inputs from either a plain integer array or a vectors file.
fn read_inputs(path: &Path) -> Result<Vec<(Vec<i64>, Option<Vec<i64>>)>> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(v) = serde_json::from_str::<Vec<i64>>(&text) {
        return Ok(vec![(v, None)]);
    }
    let vs: Vec<TestVector> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: neither an integer array nor vectors: {e}", path.display())))?;
    Ok(vs.into_iter().map(|t| (t.input, Some(t.scores))).collect())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Keygen { params, out } => {
            let cfg = resolve(&cli.config, &params)?;
            let p = cfg.params()?;
            let seed = seed_of(&cfg);
            let t = Instant::now();
            let mut c = ClientSession::new(p, seed)?;
            let req = c.setup_request()?;
            let bytes = req.keys.len() * p.levels as usize * p.ciphertext_bytes();
            serde_json::to_writer_pretty(File::create(&out)?, &KeyFile { params: p, seed })
                .map_err(|e| Error::Config(e.to_string()))?;
            println!(
                "wrote {}: M = {}, {} key-switching keys ({bytes} bytes) in {:.2} s",
                out.display(),
                p.m(),
                req.keys.len(),
                t.elapsed().as_secs_f64()
            );
        }
        Cmd::Serve { params, model, listen } => {
            let cfg = resolve(&cli.config, &params)?;
            let addr = listen.or(cfg.listen.clone()).unwrap_or_else(|| "127.0.0.1:7410".into());
            let m = load(&model)?;
            let server = Server::new(m, ServerConfig { threads: cfg.threads, seed: cfg.seed, ..Default::default() })?;
            let listener = std::net::TcpListener::bind(&addr)?;
            println!("serving {} on {}", model.display(), listener.local_addr()?);
            hyfhe_core::transport::serve(listener, FrameHandler::new(Arc::new(server)))?;
        }
        Cmd::Infer { params, model, input, connect: addr, key } => {
            let cfg = resolve(&cli.config, &params)?;
            let (p, seed) = match key {
                Some(k) => {
                    let kf: KeyFile =
                        serde_json::from_reader(File::open(k)?).map_err(|e| Error::Config(e.to_string()))?;
                    (kf.params, kf.seed)
                }
                None => (cfg.params()?, seed_of(&cfg)),
            };
            let addr = addr.or(cfg.connect.clone());
            let mut link: Box<dyn ServerLink> = match (&addr, &model) {
                (Some(a), _) => Box::new(connect(a.as_str())?),
                (None, Some(m)) => {
                    let server = Server::new(
                        load(m)?,
                        ServerConfig { threads: cfg.threads, seed: cfg.seed, ..Default::default() },
                    )?;
                    Box::new(loopback(FrameHandler::new(Arc::new(server))))
                }
                (None, None) => return Err(Error::Config("infer needs --model or --connect".into())),
            };
            let inputs = read_inputs(&input)?;
            let mut mismatches = 0;
            for (k, (x, want)) in inputs.iter().enumerate() {
                let mut client = ClientSession::new(p, seed.wrapping_add(k as u64))?;
                let report = run_inference(link.as_mut(), &mut client, x)?;
                if inputs.len() > 1 {
                    println!("input {k}");
                }
                print_report(&report);
                if let Some(w) = want {
                    if *w != report.result.scores {
                        mismatches += 1;
                        println!("MISMATCH: expected {w:?}");
                    }
                }
            }
            if mismatches > 0 {
                return Err(Error::Config(format!("{mismatches} of {} vectors mismatched", inputs.len())));
            }
        }
        Cmd::Bench { params, model, gammas, inferences, out, projection, full_pack_groups } => {
            let cfg = resolve(&cli.config, &params)?;
            let threads = cfg.threads.unwrap_or(1);
            let seed = cfg.seed.unwrap_or(1);
            let m = match &model {
                Some(path) => load(path)?,
                None => toy_model(cfg.precision_b.unwrap_or(8), seed)?,
            };
            let gammas = gammas.unwrap_or_else(|| cfg.gamma.map_or(vec![0, 1, 2], |g| vec![g]));
            let mut rows = Vec::new();
            for g in gammas {
                let p = Config { gamma: Some(g), ..cfg.clone() }.params()?;
                rows.extend(bench_model(&m, p, threads, inferences, seed)?);
                if full_pack_groups > 0 {
                    rows.push(bench_full_pack(p, full_pack_groups, threads, seed)?);
                }
            }
            write_csv(writer(&out)?, &rows)?;
            if let Some(path) = projection {
                write_csv(File::create(path)?, &project_latency(&rows, &BANDWIDTHS_MB_S))?;
            }
        }
        Cmd::DpCalc { eps0, delta0, n, delta } => {
            let bound = dp_amplify(&DpParams { eps0, delta0, n, delta })?;
            println!("eps = {}", bound.eps);
            println!("delta_total = {}", bound.delta_total);
            println!("condition: eps0 <= {}", dp_condition_bound(n, delta));
        }
        Cmd::NoiseAudit { params, count, bins, out } => {
            let cfg = resolve(&cli.config, &params)?;
            let p = cfg.params()?;
            let noise = pack_noise_samples(&p, count, cfg.seed.unwrap_or(1))?;
            let report = noise_histogram(&noise, p.precision_bits, bins);
            println!(
                "{} samples at b = {}, γ = {}: {} violations of |e| < {:.3e}, max |e|·2p = {:.4}, std {:.3e}",
                report.samples,
                p.precision_bits,
                p.gamma,
                report.violations,
                report.bound(),
                report.max_scaled,
                report.std_dev
            );
            if let Some(path) = out {
                write_histogram_csv(&report, File::create(path)?).map_err(|e| Error::Config(e.to_string()))?;
            }
            if report.violations > 0 {
                return Err(Error::Config("noise bound violated".into()));
            }
        }
        Cmd::AttackDemo { seed, size, range } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut plain = LinearOracle::random(size, size, range, ShuffleMode::None, &mut rng);
            let a = plain.weights().to_vec();
            let b = plain.bias().to_vec();
            let rec = attack_noshuffle(size, |x| plain.query(x));
            println!("no shuffle: exact recovery {} in {} queries", rec.a == a && rec.b == b, rec.queries);

            let mut out = LinearOracle::new(
                a.clone(),
                b.clone(),
                ShuffleMode::Output,
                hyfhe_core::confidentiality::ShuffleSeed::random(&mut rng),
            );
            let rec = attack_outshuffle(size, 6, |x| out.query(x));
            let exact = (0..size).filter(|&i| rec.columns[i].as_deref() == Some(&out.column_multiset(i)[..])).count();
            let orderings: f64 = rec.columns.iter().flatten().map(|c| multiset_orderings(c)).product();
            println!(
                "output shuffle: {exact}/{size} column multisets exact in {} queries; {orderings:.3e} row orderings remain",
                rec.queries
            );

            let mut both = LinearOracle::new(
                a,
                b,
                ShuffleMode::InputOutput,
                hyfhe_core::confidentiality::ShuffleSeed::random(&mut rng),
            );
            let rec = attack_inoutshuffle(size, 4, 200_000, |x| both.query(x));
            let right = (0..size).filter(|&i| rec.labelled[i].as_deref() == Some(&both.column_multiset(i)[..])).count();
            println!(
                "input+output shuffle: histogram matches {}, {right}/{size} columns correctly labelled, {} queries",
                rec.histogram == both.weight_histogram(),
                rec.queries
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
