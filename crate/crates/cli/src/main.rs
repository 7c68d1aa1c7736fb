use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isoedge::render::{Colormap, Layers};
use isoedge::{run_campaign, run_detect, Campaign, Error, Fault, PipelineConfig};

const EXIT_INPUT: u8 = 3;
const EXIT_VERIFY: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

#[derive(Parser)]
#[command(name = "isoedge", version, about = "Sub-pixel edges from the bilinear topology of grayscale images")]
struct Cli {
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, env = "ISOEDGE_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect edges in a PGM or PNG image.
    Detect(DetectArgs),
    /// Run the seeded random-image lemma campaign.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct DetectArgs {
    input: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    no_simplify: bool,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    merge_ratio: f64,
    #[arg(long)]
    no_type3: bool,
    #[arg(long, default_value_t = 0.0)]
    carry_threshold: f64,
    /// Isoline samples per cell.
    #[arg(long, default_value_t = 8)]
    samples: usize,
    /// Comma list of edges, isolines, graph, image, nodes.
    #[arg(long, default_value = "edges")]
    layers: Layers,
    #[arg(long, default_value = "viridis")]
    colormap: Colormap,
    /// Skip the timing report on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    min_size: usize,
    #[arg(long, default_value_t = 16)]
    max_size: usize,
    /// Min-to-max paths certified per image.
    #[arg(long, default_value_t = 4)]
    paths: usize,
    /// Corrupt every graph on purpose: reverse-edge or drop-in-edges.
    #[arg(long)]
    fault: Option<Fault>,
    /// Directory for failing images.
    #[arg(long, default_value = "isoedge-witnesses")]
    witness_dir: PathBuf,
}

fn detect(a: DetectArgs) -> ExitCode {
    let cfg = PipelineConfig {
        simplify: !a.no_simplify,
        merge_ratio: a.merge_ratio,
        include_type3: !a.no_type3,
        carry_threshold: a.carry_threshold,
        samples_per_cell: a.samples,
        layers: a.layers,
        colormap: a.colormap,
        svg_path: a.svg,
        json_path: a.json,
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run_detect(&cfg, &a.input) {
        Ok(out) => {
            if let Some(j) = &out.json {
                print!("{j}");
            }
            if !a.quiet {
                let t = &out.timings;
                let build = ["saddles", "extrema", "graph"].iter().filter_map(|s| t.get(s)).sum();
                eprintln!("{} pixels ({:.6} Mpixel)", t.pixels, t.pixels as f64 / 1e6);
                eprint!("{t}");
                eprintln!("steepest graph construction: {:.6} s/Mpixel", t.per_mpixel(build));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                e if e.is_internal() => EXIT_INTERNAL,
                _ => EXIT_INPUT,
            })
        }
    }
}

fn verify(a: VerifyArgs) -> ExitCode {
    let c = Campaign {
        seed: a.seed,
        count: a.count,
        min_size: a.min_size,
        max_size: a.max_size,
        paths_per_image: a.paths,
        fault: a.fault,
        witness_dir: Some(a.witness_dir),
    };
    if c.min_size < 2 || c.min_size > c.max_size {
        eprintln!("error: sizes must satisfy 2 <= min-size <= max-size");
        return ExitCode::from(2);
    }
    match run_campaign(&c) {
        Ok(r) => {
            print!("{r}");
            for w in &r.witnesses {
                println!("witness: {}", w.display());
            }
            if r.is_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
        Err(e) => {
            eprintln!("error: cannot write witnesses: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(EXIT_INTERNAL);
    }
    match cli.command {
        Command::Detect(a) => detect(a),
        Command::Verify(a) => verify(a),
    }
}
